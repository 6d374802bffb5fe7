//! Multivariate polynomials with real coefficients, enough for symbolic
//! derivatives of manufactured solutions.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    d: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Poly {
    pub fn zero(d: usize) -> Self {
        Self { d, terms: BTreeMap::new() }
    }

    pub fn constant(d: usize, c: f64) -> Self {
        let mut p = Self::zero(d);
        p.add_term(vec![0; d], c);
        p
    }

    /// The coordinate function `x_i`.
    pub fn var(d: usize, i: usize) -> Self {
        let mut e = vec![0; d];
        e[i] = 1;
        let mut p = Self::zero(d);
        p.add_term(e, 1.0);
        p
    }

    /// `‖x‖²`.
    pub fn norm_sq(d: usize) -> Self {
        (0..d).fold(Self::zero(d), |acc, i| acc + Self::var(d, i) * Self::var(d, i))
    }

    fn add_term(&mut self, e: Vec<u32>, c: f64) {
        if c == 0.0 {
            return;
        }
        let v = self.terms.entry(e.clone()).or_insert(0.0);
        *v += c;
        if *v == 0.0 {
            self.terms.remove(&e);
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &f64)> {
        self.terms.iter()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Value if the polynomial is constant.
    pub fn as_constant(&self) -> Option<f64> {
        match self.terms.len() {
            0 => Some(0.0),
            1 => self.terms.get(&vec![0; self.d]).copied(),
            _ => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * e.iter().zip(x).map(|(&k, v)| v.powi(k as i32)).product::<f64>())
            .sum()
    }

    pub fn derivative(&self, i: usize) -> Self {
        let mut p = Self::zero(self.d);
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut f = e.clone();
                f[i] -= 1;
                p.add_term(f, c * e[i] as f64);
            }
        }
        p
    }

    /// `D^α` for a multi-index `α`.
    pub fn partial(&self, alpha: &[u32]) -> Self {
        let mut p = self.clone();
        for (i, &k) in alpha.iter().enumerate() {
            for _ in 0..k {
                p = p.derivative(i);
            }
        }
        p
    }

    pub fn laplacian(&self) -> Self {
        (0..self.d).fold(Self::zero(self.d), |acc, i| acc + self.derivative(i).derivative(i))
    }

    pub fn bilaplacian(&self) -> Self {
        self.laplacian().laplacian()
    }

    /// Upper bound for `sup |p|` over the ball of radius `r` centred at 0.
    pub fn sup_bound_ball(&self, r: f64) -> f64 {
        self.terms.iter().map(|(e, c)| c.abs() * r.powi(e.iter().sum::<u32>() as i32)).sum()
    }
}

/// All multi-indices in dimension `d` with `|α| ≤ k`.
pub fn multi_indices(d: usize, k: u32) -> Vec<Vec<u32>> {
    fn rec(d: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == d {
            out.push(cur.clone());
            return;
        }
        for a in 0..=left {
            cur.push(a);
            rec(d, left - a, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, k, &mut Vec::new(), &mut out);
    out
}

impl Add for Poly {
    type Output = Poly;
    fn add(mut self, rhs: Poly) -> Poly {
        for (e, c) in rhs.terms {
            self.add_term(e, c);
        }
        self
    }
}

impl Neg for Poly {
    type Output = Poly;
    fn neg(mut self) -> Poly {
        for c in self.terms.values_mut() {
            *c = -*c;
        }
        self
    }
}

impl Sub for Poly {
    type Output = Poly;
    fn sub(self, rhs: Poly) -> Poly {
        self + (-rhs)
    }
}

impl Mul for Poly {
    type Output = Poly;
    fn mul(self, rhs: Poly) -> Poly {
        let mut p = Poly::zero(self.d);
        for (a, ca) in &self.terms {
            for (b, cb) in &rhs.terms {
                let e = a.iter().zip(b).map(|(x, y)| x + y).collect();
                p.add_term(e, ca * cb);
            }
        }
        p
    }
}
