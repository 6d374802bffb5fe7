//! Matrix-free bilaplacian solves on centred lattice boxes for right-hand
//! sides that are even in every coordinate.
//!
//! On `R = {|y_i| ≤ m}` the zero-extended operator splits as `L_D² + D` with
//! `L_D` the Dirichlet normalized Laplacian and `D` diagonal on the outer
//! layer. Conjugate gradients on the orthant `{0 ≤ y_i ≤ m}`, in the inner
//! product weighted by reflection-orbit sizes, are preconditioned with
//! `L_D⁻²` applied through the even sine modes of each axis.

use std::f64::consts::PI;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatMut, MatRef, Par};

use crate::error::{Error, Result};
use crate::green::integer_stencil;

#[derive(Clone, Debug)]
pub struct EvenBoxSolver {
    d: usize,
    m: usize,
    side: usize,
    len: usize,
    scale: f64,
    stencil: Vec<(Vec<i32>, f64)>,
    weight: Vec<f64>,
    fwd: Mat<f64>,
    inv: Mat<f64>,
    symbol: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct BoxSolution {
    /// Values on the orthant, row-major with the last coordinate fastest.
    pub values: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

impl EvenBoxSolver {
    /// Solver for `scale · S u = f` on `{|y_i| ≤ m}` in dimension `d`, with `S`
    /// the integer bilaplacian stencil.
    pub fn new(d: usize, m: usize, scale: f64) -> Result<Self> {
        if d == 0 || !(scale > 0.0) {
            return Err(Error::Invalid("even box solver needs d >= 1 and a positive scale".into()));
        }
        let side = m + 1;
        let len = side
            .checked_pow(d as u32)
            .ok_or_else(|| Error::Capacity("orthant too large".into()))?;
        let weight = (0..len)
            .map(|idx| {
                let mut k = idx;
                let mut w = 1.0;
                for _ in 0..d {
                    if k % side != 0 {
                        w *= 2.0;
                    }
                    k /= side;
                }
                w
            })
            .collect();
        let n1 = (2 * m + 2) as f64;
        let mode = |q: usize, y: usize| (PI * (2 * q + 1) as f64 * (y + m + 1) as f64 / n1).sin();
        let fwd = Mat::<f64>::from_fn(side, side, |q, y| {
            let wy = if y == 0 { 1.0 } else { 2.0 };
            2.0 / n1 * wy * mode(q, y)
        });
        let inv = Mat::<f64>::from_fn(side, side, |y, q| mode(q, y));
        let symbol = (0..side).map(|q| 1.0 - (PI * (2 * q + 1) as f64 / n1).cos()).collect();
        Ok(Self { d, m, side, len, scale, stencil: integer_stencil(d), weight, fwd, inv, symbol })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn half_width(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of lattice points represented by the orthant entry.
    pub fn weight(&self, idx: usize) -> f64 {
        self.weight[idx]
    }

    pub fn coord(&self, idx: usize) -> Vec<i32> {
        let mut k = idx;
        let mut x = vec![0i32; self.d];
        for a in (0..self.d).rev() {
            x[a] = (k % self.side) as i32;
            k /= self.side;
        }
        x
    }

    /// Orthant index of any lattice point, `None` outside the box.
    pub fn index_of(&self, y: &[i32]) -> Option<usize> {
        let mut j = 0usize;
        for &v in y {
            let a = v.unsigned_abs() as usize;
            if a > self.m {
                return None;
            }
            j = j * self.side + a;
        }
        Some(j)
    }

    /// `scale · S u` at every orthant point for an even field `u`.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let d = self.d;
        let mut x = vec![0i32; d];
        for (idx, o) in out.iter_mut().enumerate() {
            let mut k = idx;
            for a in (0..d).rev() {
                x[a] = (k % self.side) as i32;
                k /= self.side;
            }
            let mut acc = 0.0;
            'stencil: for (off, c) in &self.stencil {
                let mut j = 0usize;
                for a in 0..d {
                    let y = (x[a] + off[a]).unsigned_abs() as usize;
                    if y > self.m {
                        continue 'stencil;
                    }
                    j = j * self.side + y;
                }
                acc += c * u[j];
            }
            *o = self.scale * acc;
        }
    }

    fn transform_axis(&self, t: MatRef<'_, f64>, u: &[f64], out: &mut [f64], axis: usize) {
        let inner = self.side.pow((self.d - 1 - axis) as u32);
        let block = self.side * inner;
        for (src, dst) in u.chunks(block).zip(out.chunks_mut(block)) {
            let b = MatRef::from_column_major_slice(src, inner, self.side);
            let o = MatMut::from_column_major_slice_mut(dst, inner, self.side);
            matmul(o, Accum::Replace, b, t.transpose(), 1.0, Par::Seq);
        }
    }

    /// Applies `(scale · L_D²)⁻¹`, the symmetric preconditioner.
    pub fn precondition(&self, r: &[f64], z: &mut [f64]) {
        let mut a = r.to_vec();
        let mut b = vec![0.0; self.len];
        for axis in 0..self.d {
            self.transform_axis(self.fwd.as_ref(), &a, &mut b, axis);
            std::mem::swap(&mut a, &mut b);
        }
        let kappa = 1.0 / (2.0 * self.d as f64);
        let norm = 1.0 / (self.d as f64);
        for (idx, v) in a.iter_mut().enumerate() {
            let mut k = idx;
            let mut mu = 0.0;
            for _ in 0..self.d {
                mu += self.symbol[k % self.side];
                k /= self.side;
            }
            mu *= norm;
            *v /= self.scale / (kappa * kappa) * mu * mu;
        }
        for axis in 0..self.d {
            self.transform_axis(self.inv.as_ref(), &a, &mut b, axis);
            std::mem::swap(&mut a, &mut b);
        }
        z.copy_from_slice(&a);
    }

    fn wdot(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.weight).map(|((x, y), w)| x * y * w).sum()
    }

    /// Preconditioned conjugate gradients to relative residual `tol`.
    pub fn solve(&self, f: &[f64], tol: f64, max_iter: usize) -> Result<BoxSolution> {
        if f.len() != self.len {
            return Err(Error::DimensionMismatch { expected: self.len, got: f.len() });
        }
        let n = self.len;
        let mut x = vec![0.0; n];
        let mut r = f.to_vec();
        let bn = self.wdot(&r, &r).sqrt();
        if bn == 0.0 {
            return Ok(BoxSolution { values: x, iterations: 0, relative_residual: 0.0 });
        }
        let mut z = vec![0.0; n];
        self.precondition(&r, &mut z);
        let mut p = z.clone();
        let mut rz = self.wdot(&r, &z);
        let mut ap = vec![0.0; n];
        let mut rel = 1.0;
        for it in 1..=max_iter {
            self.apply(&p, &mut ap);
            let alpha = rz / self.wdot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            rel = self.wdot(&r, &r).sqrt() / bn;
            if rel <= tol {
                self.apply(&x, &mut ap);
                let true_res: Vec<f64> = f.iter().zip(&ap).map(|(a, b)| a - b).collect();
                let relative_residual = self.wdot(&true_res, &true_res).sqrt() / bn;
                return Ok(BoxSolution { values: x, iterations: it, relative_residual });
            }
            self.precondition(&r, &mut z);
            let rz_new = self.wdot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::Numerical(format!(
            "preconditioned CG stalled at relative residual {rel:.3e} after {max_iter} iterations"
        )))
    }

    /// Sum over the full box of `u·v` for even fields given on the orthant.
    pub fn full_dot(&self, u: &[f64], v: &[f64]) -> f64 {
        self.wdot(u, v)
    }
}
