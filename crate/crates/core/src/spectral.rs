//! Low eigenpairs of the h-scaled discrete bilaplacian, Weyl-law fits,
//! truncated Wiener series, negative Sobolev norms and test-function pairings.

use std::sync::Arc;

use faer::{Mat, MatRef};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::boxsolve::EvenBoxSolver;
use crate::error::{Error, Result};
use crate::green::{green_columns, FactoredPrecision, GreenTable};
use crate::lattice::{GridDomain, ShapeKind};
use crate::linalg::{dense_smallest_eigenpairs, subspace_smallest_eigenpairs, EigenPairs, SpdSolver, SymMatrix};
use crate::sampler::{stream_rng, FieldSample};
use crate::stats::linear_fit;
use crate::thomee::DirichletSolver;

/// Largest `|R_h|` handled by the dense eigensolver.
pub const DENSE_EIGEN_LIMIT: usize = 3000;
/// Bound on `‖T u − λ u‖ / (λ ‖u‖)` for returned pairs.
pub const EIGEN_RELATIVE_TOL: f64 = 1e-6;
const EIGEN_SEED: u64 = 0x5eed_e16e;

/// `κ⁻² h⁻⁴`, the factor taking the precision matrix to `Δ_h²`.
pub fn continuum_scale(domain: &GridDomain) -> f64 {
    let k = domain.kappa();
    1.0 / (k * k * domain.h().powi(4))
}

#[derive(Clone, Debug)]
pub struct SpectralBasis {
    domain: Arc<GridDomain>,
    values: Vec<f64>,
    vectors: Mat<f64>,
    pub iterations: usize,
    pub max_relative_residual: f64,
    pub orthonormality_error: f64,
}

impl SpectralBasis {
    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `λ_1 ≤ … ≤ λ_k` in continuum units.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    /// Eigenvectors on `R_h` as columns, orthonormal in `h^d Σ u v`.
    pub fn vectors(&self) -> MatRef<'_, f64> {
        self.vectors.as_ref()
    }

    pub fn vector(&self, j: usize) -> Vec<f64> {
        self.vectors.col(j).iter().copied().collect()
    }

    /// `(v, u_j)` in the discrete `L²` inner product, `j < J`.
    pub fn coefficients(&self, v: &[f64], j_max: usize) -> Result<Vec<f64>> {
        let n = self.domain.num_rows();
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.len() });
        }
        if j_max > self.len() {
            return Err(Error::Invalid(format!("truncation {j_max} exceeds basis size {}", self.len())));
        }
        let hd = self.domain.h().powi(self.domain.dim() as i32);
        Ok((0..j_max)
            .map(|j| hd * self.vectors.col(j).iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
            .collect())
    }
}

/// The `k` smallest eigenpairs of `Δ_h²` on `R_h`.
pub fn eigendecompose(fp: &FactoredPrecision, k: usize) -> Result<SpectralBasis> {
    let a = fp.precision().matrix();
    let n = a.n();
    if k == 0 || k > n {
        return Err(Error::Invalid(format!("k = {k} must lie in 1..={n}")));
    }
    let pairs = if n <= DENSE_EIGEN_LIMIT {
        dense_smallest_eigenpairs(a, k)?
    } else {
        subspace_smallest_eigenpairs(a, fp.solver(), k, 0.5 * EIGEN_RELATIVE_TOL, 1000, EIGEN_SEED)?
    };
    basis_from_pairs(fp.domain().clone(), pairs, continuum_scale(fp.domain()))
}

fn basis_from_pairs(domain: Arc<GridDomain>, pairs: EigenPairs, c: f64) -> Result<SpectralBasis> {
    if pairs.max_relative_residual > EIGEN_RELATIVE_TOL {
        return Err(Error::Numerical(format!(
            "eigenpair relative residual {:.3e} exceeds {EIGEN_RELATIVE_TOL:e} after {} iterations",
            pairs.max_relative_residual, pairs.iterations
        )));
    }
    let (h, d) = (domain.h(), domain.dim());
    let s = h.powf(-(d as f64) / 2.0);
    let vectors = Mat::<f64>::from_fn(pairs.vectors.nrows(), pairs.vectors.ncols(), |i, j| s * pairs.vectors[(i, j)]);
    let hd = h.powi(d as i32);
    let gram = vectors.transpose() * &vectors;
    let mut orthonormality_error: f64 = 0.0;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            orthonormality_error = orthonormality_error.max((hd * gram[(i, j)] - target).abs());
        }
    }
    Ok(SpectralBasis {
        domain,
        values: pairs.values.iter().map(|v| v * c).collect(),
        vectors,
        iterations: pairs.iterations,
        max_relative_residual: pairs.max_relative_residual,
        orthonormality_error,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct WeylFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub expected: f64,
    /// `c` in `λ_j ≈ c^{−d/4} j^{4/d}`, read off the intercept.
    pub constant: f64,
    pub window: (usize, usize),
}

/// Slope of `log λ_j` against `log j` over `j ∈ [lo, hi]` (1-based).
pub fn weyl_fit(eigenvalues: &[f64], d: usize, window: Option<(usize, usize)>) -> Result<WeylFit> {
    let k = eigenvalues.len();
    let (lo, hi) = match window {
        Some(w) => w,
        None if k >= 60 => (10, k - 10),
        None => return Err(Error::Invalid(format!("window too small: default window needs k >= 60, got {k}"))),
    };
    if lo < 1 || hi > k || hi < lo + 9 {
        return Err(Error::Invalid(format!("window too small: [{lo}, {hi}] with k = {k}")));
    }
    let xs: Vec<f64> = (lo..=hi).map(|j| (j as f64).ln()).collect();
    let ys: Vec<f64> = (lo..=hi).map(|j| eigenvalues[j - 1].ln()).collect();
    let fit = linear_fit(&xs, &ys);
    Ok(WeylFit {
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        expected: 4.0 / d as f64,
        constant: (-4.0 * fit.intercept / d as f64).exp(),
        window: (lo, hi),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SobolevParams {
    pub d: usize,
    pub l0: u32,
    pub l2: u32,
    pub l5: u32,
    pub s_d: f64,
}

/// `⌈(⌊d/2⌋ + m + 1)/4⌉`.
pub fn ceiling_exponent(d: usize, m: u32) -> u32 {
    (d as u32 / 2 + m + 1).div_ceil(4)
}

pub fn s_threshold(d: usize) -> Result<SobolevParams> {
    if d < 2 {
        return Err(Error::Invalid("the threshold is defined for d >= 2".into()));
    }
    let (l0, l2, l5) = (ceiling_exponent(d, 0), ceiling_exponent(d, 2), ceiling_exponent(d, 5));
    Ok(SobolevParams { d, l0, l2, l5, s_d: d as f64 / 2.0 + 2.0 * (l0 + l5 - 1) as f64 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SobolevSign {
    /// `H^{−s}`: weights `λ^{−s/2}`.
    Negative,
    /// `H^{s}`: weights `λ^{s/2}`.
    Positive,
}

/// `Σ_j λ_j^{∓s/2} c_j²` over the given coefficients.
pub fn hs_norm(coefficients: &[f64], eigenvalues: &[f64], s: f64, sign: SobolevSign) -> Result<f64> {
    if coefficients.len() > eigenvalues.len() {
        return Err(Error::Invalid("more coefficients than eigenvalues".into()));
    }
    let e = match sign {
        SobolevSign::Negative => -s / 2.0,
        SobolevSign::Positive => s / 2.0,
    };
    Ok(coefficients.iter().zip(eigenvalues).map(|(c, l)| l.powf(e) * c * c).sum())
}

/// `ψ_D` truncated to the computed eigenvalues, with its standard normal
/// coefficients.
#[derive(Clone, Debug)]
pub struct WienerSeries {
    eigenvalues: Vec<f64>,
    pub s: f64,
    xi: Vec<f64>,
}

impl WienerSeries {
    pub fn new(eigenvalues: Vec<f64>, s: f64, xi: Vec<f64>) -> Result<Self> {
        if xi.len() != eigenvalues.len() {
            return Err(Error::DimensionMismatch { expected: eigenvalues.len(), got: xi.len() });
        }
        Ok(Self { eigenvalues, s, xi })
    }

    /// Coefficients drawn from stream `stream` of `seed`.
    pub fn draw(eigenvalues: Vec<f64>, s: f64, seed: u64, stream: u64) -> Self {
        let mut rng = stream_rng(seed, stream);
        let xi = (0..eigenvalues.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        Self { eigenvalues, s, xi }
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    /// `Σ_{j ≤ J} λ_j^{−s/2−1} ξ_j²` for `J = 1, …, len`.
    pub fn partial_sums(&self) -> Vec<f64> {
        let e = -self.s / 2.0 - 1.0;
        let mut acc = 0.0;
        self.eigenvalues
            .iter()
            .zip(&self.xi)
            .map(|(l, x)| {
                acc += l.powf(e) * x * x;
                acc
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WienerReport {
    pub s: f64,
    pub control_s: f64,
    pub truncations: Vec<usize>,
    /// Per trial, partial sums at each truncation.
    pub trials: Vec<Vec<f64>>,
    pub control_trials: Vec<Vec<f64>>,
    /// Trial-mean increment between consecutive truncations, divided by the
    /// previous one.
    pub increment_ratios: Vec<f64>,
    /// The same ratios with `ξ_j²` replaced by its mean.
    pub expected_ratios: Vec<f64>,
    pub control_ratios: Vec<f64>,
    pub converges: bool,
    pub control_grows: bool,
}

/// Cauchy behaviour of the truncated norm `‖ψ_D‖²_{−s}` under truncation
/// doubling, with a divergent control at `control_s` sharing the draws.
pub fn wiener_convergence_report(
    eigenvalues: &[f64],
    s: f64,
    control_s: f64,
    trials: usize,
    truncations: &[usize],
    seed: u64,
) -> Result<WienerReport> {
    if truncations.len() < 3 || truncations.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid("need at least 3 increasing truncations".into()));
    }
    if *truncations.last().unwrap() > eigenvalues.len() {
        return Err(Error::Invalid("truncation exceeds the number of eigenvalues".into()));
    }
    if trials == 0 {
        return Err(Error::Invalid("need at least one trial".into()));
    }
    let at = |sums: &[f64]| truncations.iter().map(|&j| sums[j - 1]).collect::<Vec<f64>>();
    let mut main = Vec::with_capacity(trials);
    let mut control = Vec::with_capacity(trials);
    for t in 0..trials {
        let w = WienerSeries::draw(eigenvalues.to_vec(), s, seed, t as u64);
        main.push(at(&w.partial_sums()));
        let c = WienerSeries { s: control_s, ..w };
        control.push(at(&c.partial_sums()));
    }
    let ratios = |rows: &[Vec<f64>]| {
        let m = truncations.len();
        let inc: Vec<f64> = (1..m)
            .map(|i| rows.iter().map(|r| r[i] - r[i - 1]).sum::<f64>() / rows.len() as f64)
            .collect();
        inc.windows(2).map(|w| w[1] / w[0]).collect::<Vec<f64>>()
    };
    let expected = {
        let ones = WienerSeries { eigenvalues: eigenvalues.to_vec(), s, xi: vec![1.0; eigenvalues.len()] };
        ratios(&[at(&ones.partial_sums())])
    };
    let increment_ratios = ratios(&main);
    let control_ratios = ratios(&control);
    let means: Vec<f64> = (0..truncations.len())
        .map(|i| control.iter().map(|r| r[i]).sum::<f64>() / trials as f64)
        .collect();
    Ok(WienerReport {
        s,
        control_s,
        truncations: truncations.to_vec(),
        converges: increment_ratios.iter().all(|&r| r < 0.8),
        control_grows: means.windows(2).all(|w| w[1] > w[0]) && control_ratios.iter().all(|&r| r >= 1.0),
        trials: main,
        control_trials: control,
        increment_ratios,
        expected_ratios: expected,
        control_ratios,
    })
}

/// Closed-form test functions for pairings.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum TestFunction {
    /// `exp(1 − 1/(1 − ρ²))` for `ρ = ‖x − c‖/r < 1`, zero elsewhere.
    Bump { center: Vec<f64>, radius: f64 },
}

impl TestFunction {
    pub fn named(name: &str, d: usize) -> Result<Self> {
        match name {
            "bump" => Ok(Self::Bump { center: vec![0.0; d], radius: 0.25 }),
            _ => Err(Error::Invalid(format!("unknown test function '{name}'"))),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Self::Bump { center, radius } => {
                let rho2 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (radius * radius);
                if rho2 < 1.0 {
                    (1.0 - 1.0 / (1.0 - rho2)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Bump { center, radius } => {
                let r2 = radius * radius;
                let rho2 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / r2;
                if rho2 >= 1.0 {
                    return vec![0.0; x.len()];
                }
                let q = 1.0 - rho2;
                let f = (1.0 - 1.0 / q).exp();
                x.iter().zip(center).map(|(a, b)| -f * 2.0 * (a - b) / (r2 * q * q)).collect()
            }
        }
    }

    /// Values on `R_h` in row order.
    pub fn on_rows(&self, domain: &GridDomain) -> Vec<f64> {
        (0..domain.num_rows()).map(|r| self.value(&domain.position(domain.row_point(r)))).collect()
    }
}

/// `(ψ_h, f) = κ Σ_{x∈R_h} h^{(d+4)/2} φ_{x/h} f(x)` for `f` given on rows.
pub fn pairing(sample: &FieldSample, f: &[f64]) -> Result<f64> {
    let dom = sample.domain();
    if f.len() != dom.num_rows() {
        return Err(Error::DimensionMismatch { expected: dom.num_rows(), got: f.len() });
    }
    let w = dom.kappa() * dom.h().powf((dom.dim() as f64 + 4.0) / 2.0);
    Ok(w * sample.values().iter().zip(f).map(|(a, b)| a * b).sum::<f64>())
}

#[derive(Clone, Debug, Serialize)]
pub struct PairingVariance {
    /// `κ² h^{d+4} Σ_{x,y} G(x,y) f(x) f(y)`.
    pub variance: f64,
    /// `Σ h^d H_h f` with `L_h H_h = f`.
    pub split_form: f64,
    pub relative_difference: f64,
}

/// `Var(ψ_h, f)` from the Green table and, independently, from the
/// biharmonic Dirichlet solve.
pub fn pairing_variance(table: &GreenTable, f: &[f64]) -> Result<PairingVariance> {
    let dom = table.domain();
    if f.len() != dom.num_rows() {
        return Err(Error::DimensionMismatch { expected: dom.num_rows(), got: f.len() });
    }
    let (h, d, k) = (dom.h(), dom.dim(), dom.kappa());
    let support: Vec<(usize, f64)> = f.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
    let mut acc = 0.0;
    for &(a, fa) in &support {
        for &(b, fb) in &support {
            let g = table
                .get(a, b)
                .ok_or_else(|| Error::MissingEntries(format!("G(row {a}, row {b}) not stored")))?;
            acc += g * fa * fb;
        }
    }
    let variance = k * k * h.powi(d as i32 + 4) * acc;
    let split_form = if support.is_empty() {
        0.0
    } else {
        let sol = DirichletSolver::new(dom.clone())?.solve(f)?;
        h.powi(d as i32) * sol.interior().iter().zip(f).map(|(a, b)| a * b).sum::<f64>()
    };
    let scale = variance.abs().max(split_form.abs());
    let relative_difference = if scale > 0.0 { (variance - split_form).abs() / scale } else { 0.0 };
    Ok(PairingVariance { variance, split_form, relative_difference })
}

/// [`pairing_variance`] with the Green columns over the support of `f`.
pub fn pairing_variance_support(fp: &FactoredPrecision, f: &[f64]) -> Result<PairingVariance> {
    let rows: Vec<usize> = f.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(r, _)| r).collect();
    let table = green_columns(fp, &rows)?;
    pairing_variance(&table, f)
}

/// `Var(ψ_h, f) = Σ h^d H_h f` on the cube `[−a, a]^d` for `f` even in every
/// coordinate, solved matrix-free on one orthant.
pub fn pairing_variance_even_box(domain: &GridDomain, f: &TestFunction) -> Result<f64> {
    let d = domain.dim();
    let h = domain.h();
    let a = match domain.shape().kind() {
        ShapeKind::Box { lower, upper } if lower.iter().chain(upper).all(|v| v.abs() == upper[0]) => upper[0],
        _ => return Err(Error::Domain("even box pairing needs a centred cube".into())),
    };
    match f {
        TestFunction::Bump { center, .. } if center.iter().all(|&c| c == 0.0) => {}
        _ => return Err(Error::Invalid("even box pairing needs a test function even in each coordinate".into())),
    }
    let mf = a / h - 2.0;
    let m = mf.round();
    if (mf - m).abs() > 1e-9 || m < 0.0 {
        return Err(Error::Domain("cube half-side must be a multiple of h with R_h nonempty".into()));
    }
    let solver = EvenBoxSolver::new(d, m as usize, h.powi(-4))?;
    let rhs: Vec<f64> = (0..solver.len())
        .map(|i| {
            let x: Vec<f64> = solver.coord(i).iter().map(|&k| k as f64 * h).collect();
            f.value(&x)
        })
        .collect();
    let sol = solver.solve(&rhs, 1e-13, 500)?;
    Ok(h.powi(d as i32) * solver.full_dot(&sol.values, &rhs))
}

/// `‖ψ_h‖²_{−s}` truncated at `J`, as `Σ_j λ_j^{−s/2} (ψ_h, u_j)²`.
pub fn psi_norm_by_coefficients(basis: &SpectralBasis, sample: &FieldSample, s: f64, j_max: usize) -> Result<f64> {
    let coeffs = psi_coefficients(basis, sample, j_max)?;
    hs_norm(&coeffs, basis.eigenvalues(), s, SobolevSign::Negative)
}

/// `(ψ_h, u_j)` for `j < J`.
pub fn psi_coefficients(basis: &SpectralBasis, sample: &FieldSample, j_max: usize) -> Result<Vec<f64>> {
    if j_max > basis.len() {
        return Err(Error::Invalid(format!("truncation {j_max} exceeds basis size {}", basis.len())));
    }
    (0..j_max).map(|j| pairing(sample, basis.vectors.col(j).iter().copied().collect::<Vec<_>>().as_slice())).collect()
}

/// The same truncated norm as the quadratic form of the spectral kernel
/// `K = Σ_{j<J} λ_j^{−s/2} u_j u_jᵀ` against `ψ_h`.
pub fn psi_norm_by_kernel(basis: &SpectralBasis, sample: &FieldSample, s: f64, j_max: usize) -> Result<f64> {
    if j_max > basis.len() {
        return Err(Error::Invalid(format!("truncation {j_max} exceeds basis size {}", basis.len())));
    }
    let dom = basis.domain();
    let n = dom.num_rows();
    let w = dom.kappa() * dom.h().powf((dom.dim() as f64 + 4.0) / 2.0);
    let u = basis.vectors();
    let kernel = Mat::<f64>::from_fn(n, n, |x, y| {
        (0..j_max).map(|j| basis.values[j].powf(-s / 2.0) * u[(x, j)] * u[(y, j)]).sum::<f64>()
    });
    let phi = sample.values();
    let mut acc = 0.0;
    for x in 0..n {
        let row: f64 = (0..n).map(|y| kernel[(x, y)] * phi[y]).sum();
        acc += phi[x] * row;
    }
    Ok(w * w * acc)
}

/// Smallest eigenvalue of `−Δ_h` on `R_h` with zero values off `R_h`.
pub fn dirichlet_laplacian_smallest(domain: &GridDomain) -> Result<f64> {
    let n = domain.num_rows();
    if n == 0 {
        return Err(Error::Degenerate("R_h is empty".into()));
    }
    let d = domain.dim();
    let h2 = domain.h() * domain.h();
    let mut cols = Vec::with_capacity(n);
    let mut y = vec![0i32; d];
    for r in 0..n {
        let x = domain.row_coord(r);
        let mut col = vec![(r, 2.0 * d as f64 / h2)];
        for i in 0..d {
            for s in [-1, 1] {
                y.copy_from_slice(x);
                y[i] += s;
                if let Some(q) = domain.row_of_coord(&y) {
                    col.push((q, -1.0 / h2));
                }
            }
        }
        cols.push(col);
    }
    let a = SymMatrix::from_columns(cols);
    let pairs = if n <= DENSE_EIGEN_LIMIT {
        dense_smallest_eigenpairs(&a, 1)?
    } else {
        let solver = SpdSolver::new(&a, None)?;
        subspace_smallest_eigenpairs(&a, &solver, 1, 1e-10, 1000, EIGEN_SEED)?
    };
    Ok(pairs.values[0])
}
