//! Sparse symmetric storage, a sparse Cholesky wrapper, conjugate gradients and
//! a shift-invert subspace eigensolver.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::LltParams;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, supernodal, CholeskySymbolicParams, LltRef,
    SymbolicCholesky, SymbolicCholeskyRaw, SymmetricOrdering,
};
use faer::sparse::linalg::triangular_solve;
use faer::sparse::{SparseColMat, SparseColMatRef, SymbolicSparseColMat};
use faer::{Conj, Mat, MatMut, MatRef, Par, Side, Spec};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Symmetric matrix in compressed sparse column form, both triangles stored.
#[derive(Clone, Debug)]
pub struct SymMatrix {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SymMatrix {
    /// Builds the matrix from per-column `(row, value)` lists; each list is
    /// sorted and duplicate rows are summed.
    pub fn from_columns(cols: Vec<Vec<(usize, f64)>>) -> Self {
        let n = cols.len();
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for mut col in cols {
            col.sort_by_key(|e| e.0);
            for (r, v) in col {
                if row_idx.len() > *col_ptr.last().unwrap() && *row_idx.last().unwrap() == r {
                    *values.last_mut().unwrap() += v;
                } else {
                    row_idx.push(r);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Self { n, col_ptr, row_idx, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.col_ptr[j], self.col_ptr[j + 1]);
        (&self.row_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (rows, vals) = self.column(j);
        match rows.binary_search(&i) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn max_nnz_per_col(&self) -> usize {
        (0..self.n).map(|j| self.col_ptr[j + 1] - self.col_ptr[j]).max().unwrap_or(0)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (j, yj) in y.iter_mut().enumerate() {
            let (rows, vals) = self.column(j);
            *yj = rows.iter().zip(vals).map(|(&i, v)| v * x[i]).sum();
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn mul_mat(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        let mut out = Mat::<f64>::zeros(self.n, x.ncols());
        for c in 0..x.ncols() {
            for j in 0..self.n {
                let (rows, vals) = self.column(j);
                out[(j, c)] = rows.iter().zip(vals).map(|(&i, v)| v * x[(i, c)]).sum();
            }
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|j| {
            let (rows, vals) = self.column(j);
            rows.iter().zip(vals).all(|(&i, &v)| self.get(j, i) == v)
        })
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::<f64>::zeros(self.n, self.n);
        for j in 0..self.n {
            let (rows, vals) = self.column(j);
            for (&i, &v) in rows.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }

    fn to_faer(&self) -> SparseColMat<usize, f64> {
        let symbolic = SymbolicSparseColMat::new_checked(
            self.n,
            self.n,
            self.col_ptr.clone(),
            None,
            self.row_idx.clone(),
        );
        SparseColMat::new(symbolic, self.values.clone())
    }
}

/// Sparse LLᵀ factorization with a fill-reducing ordering.
pub struct Cholesky {
    n: usize,
    symbolic: SymbolicCholesky<usize>,
    values: Vec<f64>,
}

impl std::fmt::Debug for Cholesky {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Cholesky(n={}, nnz(L)={})", self.n, self.values.len())
    }
}

impl Cholesky {
    /// Number of stored factor entries the factorization of `a` would need.
    pub fn factor_size(a: &SymMatrix) -> Result<usize> {
        let m = a.to_faer();
        let sym = factorize_symbolic_cholesky(
            m.symbolic(),
            Side::Lower,
            SymmetricOrdering::Amd,
            CholeskySymbolicParams::default(),
        )
        .map_err(|e| Error::Numerical(format!("symbolic factorization failed: {e:?}")))?;
        Ok(sym.len_val())
    }

    /// Factorizes `a`; fails with `Error::Capacity` if the factor would need
    /// more than `max_entries` values.
    pub fn factor(a: &SymMatrix, max_entries: Option<usize>) -> Result<Self> {
        let m = a.to_faer();
        let symbolic = factorize_symbolic_cholesky(
            m.symbolic(),
            Side::Lower,
            SymmetricOrdering::Amd,
            CholeskySymbolicParams::default(),
        )
        .map_err(|e| Error::Numerical(format!("symbolic factorization failed: {e:?}")))?;
        if let Some(cap) = max_entries {
            if symbolic.len_val() > cap {
                return Err(Error::Capacity(format!(
                    "factor needs {} entries, cap is {cap}",
                    symbolic.len_val()
                )));
            }
        }
        let mut values = vec![0.0; symbolic.len_val()];
        let par = Par::Seq;
        let mut mem = MemBuffer::new(
            symbolic.factorize_numeric_llt_scratch::<f64>(par, Spec::<LltParams, f64>::default()),
        );
        symbolic
            .factorize_numeric_llt(
                &mut values,
                m.as_ref(),
                Side::Lower,
                Default::default(),
                par,
                MemStack::new(&mut mem),
                Spec::<LltParams, f64>::default(),
            )
            .map_err(|e| {
                Error::Numerical(format!(
                    "cholesky failed ({e:?}); matrix is not numerically positive definite, min diagonal {:.3e}",
                    a.diagonal().iter().cloned().fold(f64::INFINITY, f64::min)
                ))
            })?;
        Ok(Self { n: a.n(), symbolic, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn factor_entries(&self) -> usize {
        self.values.len()
    }

    /// Solves `A X = B` in place for a block of right-hand sides.
    pub fn solve_in_place(&self, rhs: MatMut<'_, f64>) {
        let par = Par::Seq;
        let mut mem = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(rhs.ncols(), par));
        LltRef::new(&self.symbolic, &self.values).solve_in_place_with_conj(
            Conj::No,
            rhs,
            par,
            MemStack::new(&mut mem),
        );
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut m = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.solve_in_place(m.as_mut());
        (0..self.n).map(|i| m[(i, 0)]).collect()
    }

    /// Maps standard normal columns `z` to `Pᵀ L⁻ᵀ z`, whose covariance is `A⁻¹`.
    pub fn color_in_place(&self, z: MatMut<'_, f64>) {
        let par = Par::Seq;
        let mut z = z;
        let k = z.ncols();
        match self.symbolic.raw() {
            SymbolicCholeskyRaw::Simplicial(s) => {
                let l = SparseColMatRef::<'_, usize, f64>::new(s.factor(), &self.values);
                triangular_solve::solve_lower_triangular_transpose_in_place(
                    l,
                    Conj::No,
                    z.as_mut(),
                    par,
                );
            }
            SymbolicCholeskyRaw::Supernodal(s) => {
                let mut mem = MemBuffer::new(s.solve_in_place_scratch::<f64>(k, par));
                supernodal::SupernodalLltRef::<'_, usize, f64>::new(s, &self.values)
                    .l_transpose_solve_with_conj(Conj::No, z.as_mut(), par, MemStack::new(&mut mem));
            }
        }
        if let Some(perm) = self.symbolic.perm() {
            let (_, inv) = perm.arrays();
            let mut col = vec![0.0; self.n];
            for j in 0..k {
                for (i, c) in col.iter_mut().enumerate() {
                    *c = z[(inv[i], j)];
                }
                for (i, c) in col.iter().enumerate() {
                    z[(i, j)] = *c;
                }
            }
        }
    }
}

/// Result of a conjugate-gradient solve.
#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for an SPD matrix.
pub fn conjugate_gradient(a: &SymMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<CgOutcome> {
    let n = a.n();
    let dinv: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(CgOutcome { x, iterations: 0, relative_residual: 0.0 });
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        a.matvec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm(&r) / bnorm;
        if rel <= tol {
            return Ok(CgOutcome { x, iterations: it, relative_residual: rel });
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Numerical(format!(
        "conjugate gradients did not reach relative residual {tol:e} in {max_iter} iterations"
    )))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// SPD solver: direct factorization, or CG when the factor would be too large.
#[derive(Debug)]
pub enum SpdSolver {
    Direct(Cholesky),
    Iterative { matrix: SymMatrix, tol: f64, max_iter: usize },
}

impl SpdSolver {
    pub fn new(a: &SymMatrix, max_factor_entries: Option<usize>) -> Result<Self> {
        match Cholesky::factor(a, max_factor_entries) {
            Ok(c) => Ok(SpdSolver::Direct(c)),
            Err(Error::Capacity(_)) => Ok(SpdSolver::Iterative {
                matrix: a.clone(),
                tol: 1e-10,
                max_iter: 20 * a.n() + 1000,
            }),
            Err(e) => Err(e),
        }
    }

    pub fn is_direct(&self) -> bool {
        matches!(self, SpdSolver::Direct(_))
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            SpdSolver::Direct(c) => Ok(c.solve(b)),
            SpdSolver::Iterative { matrix, tol, max_iter } => {
                Ok(conjugate_gradient(matrix, b, *tol, *max_iter)?.x)
            }
        }
    }

    pub fn solve_block(&self, mut b: Mat<f64>) -> Result<Mat<f64>> {
        match self {
            SpdSolver::Direct(c) => {
                c.solve_in_place(b.as_mut());
                Ok(b)
            }
            SpdSolver::Iterative { .. } => {
                for j in 0..b.ncols() {
                    let col: Vec<f64> = (0..b.nrows()).map(|i| b[(i, j)]).collect();
                    let x = self.solve(&col)?;
                    for (i, v) in x.into_iter().enumerate() {
                        b[(i, j)] = v;
                    }
                }
                Ok(b)
            }
        }
    }
}

/// Smallest eigenpairs of a symmetric matrix: values ascending, vectors as
/// Euclidean-orthonormal columns.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
    pub iterations: usize,
    pub max_residual: f64,
    /// `max_j ‖a v_j − θ_j v_j‖ / |θ_j|`.
    pub max_relative_residual: f64,
}

pub fn dense_smallest_eigenpairs(a: &SymMatrix, k: usize) -> Result<EigenPairs> {
    let dense = a.to_dense();
    let evd = dense
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("dense eigensolver failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let values: Vec<f64> = (0..k).map(|j| s[j]).collect();
    let vectors = Mat::<f64>::from_fn(a.n(), k, |i, j| u[(i, j)]);
    let (max_residual, max_relative_residual) = residuals(a, &values, vectors.as_ref());
    Ok(EigenPairs { values, vectors, iterations: 0, max_residual, max_relative_residual })
}

fn residuals(a: &SymMatrix, values: &[f64], v: MatRef<'_, f64>) -> (f64, f64) {
    let av = a.mul_mat(v);
    let mut worst: f64 = 0.0;
    let mut worst_rel: f64 = 0.0;
    for (j, &lam) in values.iter().enumerate() {
        let r: f64 = (0..a.n()).map(|i| (av[(i, j)] - lam * v[(i, j)]).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(r);
        worst_rel = worst_rel.max(r / lam.abs());
    }
    (worst, worst_rel)
}

fn orthonormalize(y: Mat<f64>) -> Mat<f64> {
    y.qr().compute_thin_Q()
}

/// Block shift-invert subspace iteration with Rayleigh–Ritz: the `k` smallest
/// eigenpairs of `a`, stopping once every relative residual `‖a v − θ v‖ / |θ|`
/// is below `rel_tol`.
pub fn subspace_smallest_eigenpairs(
    a: &SymMatrix,
    solver: &SpdSolver,
    k: usize,
    rel_tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<EigenPairs> {
    let n = a.n();
    let p = n.min(k + (k / 2).max(20));
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut x = Mat::<f64>::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
    x = orthonormalize(x);
    let mut last = f64::INFINITY;
    for it in 1..=max_iter {
        let y = solver.solve_block(x.clone())?;
        let q = orthonormalize(y);
        let aq = a.mul_mat(q.as_ref());
        let mut hm = q.transpose() * &aq;
        for i in 0..p {
            for j in 0..i {
                let s = 0.5 * (hm[(i, j)] + hm[(j, i)]);
                hm[(i, j)] = s;
                hm[(j, i)] = s;
            }
        }
        let evd = hm
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numerical(format!("Rayleigh-Ritz eigensolver failed: {e:?}")))?;
        let theta: Vec<f64> = (0..p).map(|j| evd.S().column_vector()[j]).collect();
        x = &q * evd.U();
        let values = theta[..k].to_vec();
        let lead = Mat::<f64>::from_fn(n, k, |i, j| x[(i, j)]);
        let (res, rel) = residuals(a, &values, lead.as_ref());
        last = rel;
        if rel <= rel_tol {
            return Ok(EigenPairs {
                values,
                vectors: lead,
                iterations: it,
                max_residual: res,
                max_relative_residual: rel,
            });
        }
    }
    Err(Error::Numerical(format!(
        "subspace iteration did not converge: max relative residual {last:.3e} > {rel_tol:.3e} after {max_iter} iterations (k={k}, block={p})"
    )))
}
