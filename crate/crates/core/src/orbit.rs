//! Symmetry-reduced bilaplacian systems on centred lattice boxes.
//!
//! On the box `{|y_i| ≤ m}` the bilaplacian commutes with coordinate
//! permutations and sign flips, so any right-hand side invariant under that
//! group has an invariant solution. Unknowns are then indexed by canonical
//! representatives (sorted absolute coordinates), and the reduced operator
//! `W·A_r` with orbit sizes `W` is symmetric positive definite.

use crate::error::{Error, Result};
use crate::green::integer_stencil;
use crate::linalg::{SpdSolver, SymMatrix};

#[derive(Clone, Debug)]
pub struct OrbitBox {
    d: usize,
    m: i32,
    reps: Vec<i32>,
    weight: Vec<f64>,
    table: Vec<u32>,
}

const ABSENT: u32 = u32::MAX;

fn orbit_size(a: &[i32]) -> f64 {
    let d = a.len();
    let mut perms: f64 = (1..=d).map(|k| k as f64).product();
    let mut i = 0;
    while i < d {
        let mut j = i;
        while j < d && a[j] == a[i] {
            j += 1;
        }
        perms /= (1..=(j - i)).map(|k| k as f64).product::<f64>();
        i = j;
    }
    let nonzero = a.iter().filter(|&&v| v != 0).count();
    perms * 2f64.powi(nonzero as i32)
}

impl OrbitBox {
    /// Orbits of the box `{|y_i| ≤ m}` in dimension `d`.
    pub fn new(d: usize, m: i32) -> Result<Self> {
        if d == 0 || m < 0 {
            return Err(Error::Invalid("orbit box needs d >= 1 and m >= 0".into()));
        }
        let side = (m + 1) as usize;
        let total = side
            .checked_pow(d as u32)
            .filter(|t| *t < u32::MAX as usize)
            .ok_or_else(|| Error::Capacity("orbit index table too large".into()))?;
        let mut table = vec![ABSENT; total];
        let mut reps = Vec::new();
        let mut weight = Vec::new();
        let mut a = vec![0i32; d];
        loop {
            let slot = a.iter().fold(0usize, |s, &v| s * side + v as usize);
            table[slot] = weight.len() as u32;
            reps.extend_from_slice(&a);
            weight.push(orbit_size(&a));
            let mut i = d;
            loop {
                if i == 0 {
                    return Ok(Self { d, m, reps, weight, table });
                }
                i -= 1;
                if a[i] < m {
                    a[i] += 1;
                    let v = a[i];
                    for t in a.iter_mut().skip(i + 1) {
                        *t = v;
                    }
                    break;
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn half_width(&self) -> i32 {
        self.m
    }

    pub fn len(&self) -> usize {
        self.weight.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weight.is_empty()
    }

    pub fn rep(&self, i: usize) -> &[i32] {
        &self.reps[i * self.d..(i + 1) * self.d]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weight[i]
    }

    /// Total number of lattice points in the box.
    pub fn full_size(&self) -> f64 {
        self.weight.iter().sum()
    }

    /// Representative index of any lattice point, `None` outside the box.
    pub fn index_of(&self, y: &[i32]) -> Option<usize> {
        let mut a: Vec<i32> = y.iter().map(|v| v.abs()).collect();
        if a.iter().any(|&v| v > self.m) {
            return None;
        }
        a.sort_unstable();
        let side = (self.m + 1) as usize;
        let slot = a.iter().fold(0usize, |s, &v| s * side + v as usize);
        match self.table[slot] {
            ABSENT => None,
            r => Some(r as usize),
        }
    }

    /// Reduced matrix `scale · W A_r` of the bilaplacian stencil.
    pub fn reduced_matrix(&self, scale: f64) -> SymMatrix {
        let stencil = integer_stencil(self.d);
        let mut y = vec![0i32; self.d];
        let cols = (0..self.len())
            .map(|r| {
                let x = self.rep(r);
                let w = self.weight[r];
                let mut col: Vec<(usize, f64)> = Vec::with_capacity(stencil.len());
                for (o, c) in &stencil {
                    for i in 0..self.d {
                        y[i] = x[i] + o[i];
                    }
                    if let Some(q) = self.index_of(&y) {
                        col.push((q, scale * w * c));
                    }
                }
                col
            })
            .collect();
        SymMatrix::from_columns(cols)
    }

    /// Solves `scale · S u = f` on the full box for an invariant `f` given at
    /// the representatives; `solver` must factor `reduced_matrix(scale)`.
    pub fn solve(&self, solver: &SpdSolver, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: f.len() });
        }
        let rhs: Vec<f64> = f.iter().zip(&self.weight).map(|(v, w)| v * w).collect();
        solver.solve(&rhs)
    }

    /// Sum over the full box of `u·v` for invariant fields given at representatives.
    pub fn full_dot(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter().zip(v).zip(&self.weight).map(|((a, b), w)| w * a * b).sum()
    }
}
