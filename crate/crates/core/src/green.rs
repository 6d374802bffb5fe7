//! Precision operator of the membrane model and its Green's function.

use std::collections::BTreeMap;
use std::sync::Arc;

use faer::Mat;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{neighborhood, stencil_weights, GridDomain, OperatorVariant};
use crate::linalg::{SpdSolver, SymMatrix};

/// Default cap on `|R_h|` for a full dense Green table.
pub const DENSE_CAP: usize = 20_000;

/// Residual tolerance every solved column must meet.
pub const COLUMN_RESIDUAL_TOL: f64 = 1e-8;

/// `Δ₁²` restricted to `R_h` with zero extension, stored sparse and symmetric.
#[derive(Clone, Debug)]
pub struct PrecisionMatrix {
    domain: Arc<GridDomain>,
    matrix: SymMatrix,
}

/// Integer bilaplacian coefficients as `(offset, value)` pairs.
pub(crate) fn integer_stencil(d: usize) -> Vec<(Vec<i32>, f64)> {
    stencil_weights(OperatorVariant::Bilaplacian, d)
        .into_iter()
        .map(|(o, c)| (o, *c.numer() as f64 / *c.denom() as f64))
        .collect()
}

/// Sparse matrix of `scale · S` on `R_h`, `S` the integer bilaplacian stencil.
pub(crate) fn stencil_matrix(domain: &GridDomain, scale: f64) -> SymMatrix {
    let d = domain.dim();
    let stencil = integer_stencil(d);
    let mut k = vec![0i32; d];
    let cols = (0..domain.num_rows())
        .map(|r| {
            let x = domain.row_coord(r);
            let mut col = Vec::with_capacity(stencil.len());
            for (o, c) in &stencil {
                for i in 0..d {
                    k[i] = x[i] + o[i];
                }
                if let Some(q) = domain.row_of_coord(&k) {
                    col.push((q, scale * c));
                }
            }
            col
        })
        .collect();
    SymMatrix::from_columns(cols)
}

pub fn assemble_precision(domain: Arc<GridDomain>) -> Result<PrecisionMatrix> {
    if domain.interior_empty() {
        return Err(Error::Degenerate("R_h is empty; refine h".into()));
    }
    let kappa = domain.kappa();
    let matrix = stencil_matrix(&domain, kappa * kappa);
    Ok(PrecisionMatrix { domain, matrix })
}

impl PrecisionMatrix {
    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    /// Max nonzeros per row allowed by the stencil support.
    pub fn stencil_size(&self) -> usize {
        let d = self.domain.dim();
        2 * d * d + 2 * d + 1
    }

    /// Factorizes; above `max_factor_entries` stored factor values the solver
    /// falls back to conjugate gradients.
    pub fn factorize(self, max_factor_entries: Option<usize>) -> Result<FactoredPrecision> {
        let solver = SpdSolver::new(&self.matrix, max_factor_entries)?;
        Ok(FactoredPrecision { precision: self, solver })
    }
}

#[derive(Debug)]
pub struct FactoredPrecision {
    precision: PrecisionMatrix,
    solver: SpdSolver,
}

impl FactoredPrecision {
    pub fn precision(&self) -> &PrecisionMatrix {
        &self.precision
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.precision.domain
    }

    pub fn solver(&self) -> &SpdSolver {
        &self.solver
    }

    pub fn n(&self) -> usize {
        self.precision.n()
    }

    fn residual(&self, row: usize, col: &[f64]) -> f64 {
        let r = self.precision.matrix.mul(col);
        r.iter()
            .enumerate()
            .map(|(i, v)| (v - if i == row { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }
}

/// One column `G(x, ·)` on `R_h`.
#[derive(Clone, Debug)]
pub struct GreenColumn {
    pub row: usize,
    pub values: Vec<f64>,
    pub residual: f64,
}

/// Solves `Δ₁² G(x, ·) = δ_x` with zero boundary values for `x ∈ R_h`.
pub fn solve_green_column(fp: &FactoredPrecision, x: &[i32]) -> Result<GreenColumn> {
    let row = fp
        .domain()
        .row_of_coord(x)
        .ok_or_else(|| Error::Domain(format!("point {x:?} is not in R_h")))?;
    solve_green_row(fp, row)
}

pub fn solve_green_row(fp: &FactoredPrecision, row: usize) -> Result<GreenColumn> {
    let mut b = vec![0.0; fp.n()];
    b[row] = 1.0;
    let values = fp.solver.solve(&b)?;
    let residual = fp.residual(row, &values);
    if residual > COLUMN_RESIDUAL_TOL {
        return Err(Error::Numerical(format!("column {row}: residual {residual:.3e} exceeds tolerance")));
    }
    Ok(GreenColumn { row, values, residual })
}

#[derive(Clone, Debug)]
pub enum GreenStorage {
    /// Column-major `n × n` values.
    Full(Vec<f64>),
    /// Selected columns keyed by row index.
    Columns(BTreeMap<usize, Vec<f64>>),
}

#[derive(Clone, Debug)]
pub struct GreenTable {
    domain: Arc<GridDomain>,
    n: usize,
    storage: GreenStorage,
    max_residual: f64,
}

fn solve_rows(fp: &FactoredPrecision, rows: &[usize]) -> Result<(Vec<Vec<f64>>, f64)> {
    let n = fp.n();
    let mut out = Vec::with_capacity(rows.len());
    let mut worst: f64 = 0.0;
    for chunk in rows.chunks(128) {
        let rhs = Mat::<f64>::from_fn(n, chunk.len(), |i, j| if i == chunk[j] { 1.0 } else { 0.0 });
        let sol = fp.solver.solve_block(rhs)?;
        for (j, &row) in chunk.iter().enumerate() {
            let col: Vec<f64> = (0..n).map(|i| sol[(i, j)]).collect();
            let res = fp.residual(row, &col);
            if res > COLUMN_RESIDUAL_TOL {
                return Err(Error::Numerical(format!("column {row}: residual {res:.3e} exceeds tolerance")));
            }
            worst = worst.max(res);
            out.push(col);
        }
    }
    Ok((out, worst))
}

/// All columns of `G` from one factorization.
pub fn green_full(fp: &FactoredPrecision, cap: usize) -> Result<GreenTable> {
    let n = fp.n();
    if n > cap {
        return Err(Error::Capacity(format!(
            "|R_h| = {n} exceeds the dense cap {cap}; request selected columns instead"
        )));
    }
    let rows: Vec<usize> = (0..n).collect();
    let (cols, max_residual) = solve_rows(fp, &rows)?;
    let values: Vec<f64> = cols.into_iter().flatten().collect();
    let table = GreenTable { domain: fp.domain().clone(), n, storage: GreenStorage::Full(values), max_residual };
    let asym = table.max_asymmetry();
    if asym > 1e-10 {
        return Err(Error::Numerical(format!("Green table asymmetry {asym:.3e} exceeds 1e-10")));
    }
    Ok(table)
}

/// Selected columns `G(x, ·)` for the given rows of `R_h`.
pub fn green_columns(fp: &FactoredPrecision, rows: &[usize]) -> Result<GreenTable> {
    let n = fp.n();
    if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
        return Err(Error::Domain(format!("row {bad} out of range for |R_h| = {n}")));
    }
    let (cols, max_residual) = solve_rows(fp, rows)?;
    let map = rows.iter().cloned().zip(cols).collect();
    Ok(GreenTable { domain: fp.domain().clone(), n, storage: GreenStorage::Columns(map), max_residual })
}

impl GreenTable {
    /// Dense table from explicit column-major values (used for oracles and I/O).
    pub fn from_dense(domain: Arc<GridDomain>, values: Vec<f64>) -> Result<Self> {
        let n = domain.num_rows();
        if values.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: values.len() });
        }
        Ok(Self { domain, n, storage: GreenStorage::Full(values), max_residual: f64::NAN })
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_full(&self) -> bool {
        matches!(self.storage, GreenStorage::Full(_))
    }

    pub fn storage(&self) -> &GreenStorage {
        &self.storage
    }

    pub fn max_residual(&self) -> f64 {
        self.max_residual
    }

    /// `G` by row indices, if the table holds a column containing it.
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        match &self.storage {
            GreenStorage::Full(v) => Some(v[y * self.n + x]),
            GreenStorage::Columns(m) => {
                m.get(&x).map(|c| c[y]).or_else(|| m.get(&y).map(|c| c[x]))
            }
        }
    }

    /// `G` at lattice points; zero unless both lie in `R_h`.
    pub fn at(&self, x: &[i32], y: &[i32]) -> Result<f64> {
        match (self.domain.row_of_coord(x), self.domain.row_of_coord(y)) {
            (Some(a), Some(b)) => self
                .get(a, b)
                .ok_or_else(|| Error::MissingEntries(format!("G({x:?}, {y:?}) not stored"))),
            _ => Ok(0.0),
        }
    }

    /// `G` with explicit zero for rows outside `R_h`.
    pub fn at_rows(&self, x: Option<usize>, y: Option<usize>) -> Result<f64> {
        match (x, y) {
            (Some(a), Some(b)) => self
                .get(a, b)
                .ok_or_else(|| Error::MissingEntries(format!("G(row {a}, row {b}) not stored"))),
            _ => Ok(0.0),
        }
    }

    pub fn max_asymmetry(&self) -> f64 {
        match &self.storage {
            GreenStorage::Full(v) => {
                let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
                let mut worst: f64 = 0.0;
                for j in 0..self.n {
                    for i in 0..j {
                        worst = worst.max((v[j * self.n + i] - v[i * self.n + j]).abs());
                    }
                }
                worst / scale
            }
            GreenStorage::Columns(m) => {
                let scale = m.values().flatten().fold(0.0f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
                let mut worst: f64 = 0.0;
                for (&a, ca) in m {
                    for (&b, cb) in m {
                        worst = worst.max((ca[b] - cb[a]).abs());
                    }
                }
                worst / scale
            }
        }
    }

    /// Column-major values of a full table.
    pub fn dense_values(&self) -> Option<&[f64]> {
        match &self.storage {
            GreenStorage::Full(v) => Some(v),
            GreenStorage::Columns(_) => None,
        }
    }
}

/// Fitted constants of the covariance bounds on one box.
#[derive(Clone, Debug, Serialize)]
pub struct BoundsReport {
    pub d: usize,
    pub n_scale: f64,
    pub sup_g: f64,
    pub c_sup: f64,
    pub sup_grad: f64,
    pub c_grad: f64,
    pub sup_mixed: f64,
    /// Sup of the mixed-derivative norm over its bound profile (log profile
    /// in d = 2, constant in d = 3, raw value otherwise).
    pub c_mixed: f64,
    pub sup_increment: f64,
    /// `sup_increment / log N` in d = 2, `sup_increment` otherwise.
    pub c_increment: f64,
    pub violations: Vec<String>,
}

/// Evaluates the covariance bounds on a full table.
pub fn check_bounds(table: &GreenTable) -> Result<BoundsReport> {
    if !table.is_full() {
        return Err(Error::MissingEntries("check_bounds needs a full table".into()));
    }
    let dom = table.domain().clone();
    let d = dom.dim();
    let n_scale = 1.0 / dom.h();
    let npts = dom.num_points();
    let row = |k: &[i32]| dom.row_of_coord(k);
    let mut shifted: Vec<Vec<Option<usize>>> = Vec::with_capacity(npts);
    let mut k = vec![0i32; d];
    for p in 0..npts {
        let x = dom.point(p);
        let mut s = Vec::with_capacity(d + 1);
        s.push(dom.row_of_point(p));
        for i in 0..d {
            k.copy_from_slice(x);
            k[i] += 1;
            s.push(row(&k));
        }
        shifted.push(s);
    }
    let g = |a: Option<usize>, b: Option<usize>| table.at_rows(a, b).unwrap_or(0.0);
    let mut sup_g: f64 = 0.0;
    let mut sup_grad: f64 = 0.0;
    let mut sup_mixed: f64 = 0.0;
    let mut c_mixed: f64 = 0.0;
    let nn = n_scale * n_scale;
    for p in 0..npts {
        let sx = &shifted[p];
        for q in 0..npts {
            let sy = &shifted[q];
            if sx.iter().all(|r| r.is_none()) || sy.iter().all(|r| r.is_none()) {
                continue;
            }
            let g0 = g(sx[0], sy[0]);
            sup_g = sup_g.max(g0.abs());
            let mut grad2 = 0.0;
            let mut mixed2 = 0.0;
            for i in 0..d {
                let gi = g(sx[i + 1], sy[0]);
                grad2 += (gi - g0).powi(2);
                for j in 0..d {
                    let m = g(sx[i + 1], sy[j + 1]) - gi - g(sx[0], sy[j + 1]) + g0;
                    mixed2 += m * m;
                }
            }
            sup_grad = sup_grad.max(grad2.sqrt());
            let mixed = mixed2.sqrt();
            sup_mixed = sup_mixed.max(mixed);
            if d == 2 {
                let dist: f64 = dom
                    .point(p)
                    .iter()
                    .zip(dom.point(q))
                    .map(|(a, b)| ((a - b) as f64).powi(2))
                    .sum::<f64>()
                    .sqrt();
                c_mixed = c_mixed.max(mixed / (1.0 + nn / (dist + 1.0).powi(2)).ln());
            }
        }
    }
    if d != 2 {
        c_mixed = sup_mixed;
    }
    let mut sup_increment: f64 = 0.0;
    for s in &shifted {
        for i in 0..d {
            let v = g(s[i + 1], s[i + 1]) - 2.0 * g(s[0], s[i + 1]) + g(s[0], s[0]);
            sup_increment = sup_increment.max(v);
        }
    }
    let c_increment = if d == 2 { sup_increment / n_scale.ln() } else { sup_increment };
    let c_sup = sup_g / n_scale.powi(4 - d as i32);
    let c_grad = sup_grad / n_scale.powi(3 - d as i32);
    let mut violations = Vec::new();
    for (name, v) in [("sup", c_sup), ("grad", c_grad), ("mixed", c_mixed), ("increment", c_increment)] {
        if !v.is_finite() {
            violations.push(format!("{name}: non-finite fitted constant"));
        }
    }
    Ok(BoundsReport {
        d,
        n_scale,
        sup_g,
        c_sup,
        sup_grad,
        c_grad,
        sup_mixed,
        c_mixed,
        sup_increment,
        c_increment,
        violations,
    })
}

/// Fitted constants across a sequence of scales, with stability flags.
#[derive(Clone, Debug, Serialize)]
pub struct BoundsSeries {
    pub scales: Vec<f64>,
    pub c_sup: Vec<f64>,
    pub c_grad: Vec<f64>,
    pub c_mixed: Vec<f64>,
    pub c_increment: Vec<f64>,
    /// Constants whose consecutive ratios leave `[0.5, 2]`.
    pub unstable: Vec<String>,
    /// Constants whose fits are not monotone in the scale.
    pub non_monotone: Vec<String>,
}

pub fn bounds_series(reports: &[BoundsReport]) -> BoundsSeries {
    let pick = |f: fn(&BoundsReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
    let s = BoundsSeries {
        scales: pick(|r| r.n_scale),
        c_sup: pick(|r| r.c_sup),
        c_grad: pick(|r| r.c_grad),
        c_mixed: pick(|r| r.c_mixed),
        c_increment: pick(|r| r.c_increment),
        unstable: Vec::new(),
        non_monotone: Vec::new(),
    };
    let mut unstable = Vec::new();
    let mut non_monotone = Vec::new();
    for (name, v) in [("sup", &s.c_sup), ("grad", &s.c_grad), ("mixed", &s.c_mixed), ("increment", &s.c_increment)] {
        if v.windows(2).any(|w| !(0.5..=2.0).contains(&(w[1] / w[0]))) {
            unstable.push(name.to_string());
        }
        let up = v.windows(2).all(|w| w[1] >= w[0]);
        let down = v.windows(2).all(|w| w[1] <= w[0]);
        if !up && !down {
            non_monotone.push(name.to_string());
        }
    }
    BoundsSeries { unstable, non_monotone, ..s }
}

/// Offsets of the stencil support, for nonzero-count checks.
pub fn stencil_support(d: usize) -> usize {
    neighborhood(d).len() + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::ShapePredicate;

    fn one_point() -> Arc<GridDomain> {
        let s = ShapePredicate::cube(2, -1.0, 1.0).unwrap();
        Arc::new(GridDomain::classify(&s, 0.5).unwrap())
    }

    #[test]
    fn one_point_precision_and_green() {
        let p = assemble_precision(one_point()).unwrap();
        assert_eq!(p.n(), 1);
        assert_eq!(p.matrix().get(0, 0), 1.25);
        let fp = p.factorize(None).unwrap();
        let c = solve_green_column(&fp, &[0, 0]).unwrap();
        assert!((c.values[0] - 0.8).abs() < 1e-15);
        let t = green_full(&fp, DENSE_CAP).unwrap();
        assert!((t.get(0, 0).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn outside_point_is_domain_error() {
        let fp = assemble_precision(one_point()).unwrap().factorize(None).unwrap();
        assert!(matches!(solve_green_column(&fp, &[1, 0]), Err(Error::Domain(_))));
    }

    #[test]
    fn dense_cap_enforced() {
        let s = ShapePredicate::cube(2, -1.0, 1.0).unwrap();
        let dom = Arc::new(GridDomain::classify(&s, 1.0 / 8.0).unwrap());
        let fp = assemble_precision(dom).unwrap().factorize(None).unwrap();
        assert!(matches!(green_full(&fp, 10), Err(Error::Capacity(_))));
    }
}
