//! Finite-difference biharmonic Dirichlet solver and manufactured-solution
//! convergence studies.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::green::stencil_matrix;
use crate::lattice::{DiscreteOperator, GridDomain, OperatorVariant, PointClass, ShapePredicate};
use crate::linalg::{SpdSolver, SymMatrix};
use crate::poly::{multi_indices, Poly};
use crate::stats::loglog_fit;

/// Closed-form biharmonic test problem on a ball.
#[derive(Clone, Debug)]
pub struct ManufacturedProblem {
    pub shape: ShapePredicate,
    pub d: usize,
    pub u: Poly,
    pub f: Poly,
    pub m2: f64,
    pub m5: f64,
}

/// `Σ_{|α| ≤ k} sup_{ball} |D^α u|`, bounded coefficientwise.
pub fn derivative_bound(u: &Poly, k: u32, radius: f64) -> f64 {
    multi_indices(u.dim(), k).iter().map(|a| u.partial(a).sup_bound_ball(radius)).sum()
}

/// `u = (1 − ‖x‖²)²` on the unit ball, `f = Δ²u = 8d(d+2)`.
pub fn manufactured_disk(d: usize) -> Result<ManufacturedProblem> {
    if d < 2 {
        return Err(Error::Invalid("manufactured problem needs d >= 2".into()));
    }
    let w = Poly::constant(d, 1.0) - Poly::norm_sq(d);
    let u = w.clone() * w;
    let f = u.bilaplacian();
    Ok(ManufacturedProblem {
        shape: ShapePredicate::unit_ball(d)?,
        d,
        m2: derivative_bound(&u, 2, 1.0),
        m5: derivative_bound(&u, 5, 1.0),
        u,
        f,
    })
}

/// `h^{d/2} (Σ v²)^{1/2}`.
pub fn grid_norm(values: &[f64], h: f64, d: usize) -> f64 {
    h.powf(d as f64 / 2.0) * values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Solution of `L_h u_h = f` on `R_h` with `u_h = 0` on `B_h`.
#[derive(Clone, Debug)]
pub struct DiscreteSolution {
    domain: Arc<GridDomain>,
    rows: Vec<f64>,
    pub residual: f64,
}

impl DiscreteSolution {
    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    /// Values on `R_h` in row order.
    pub fn interior(&self) -> &[f64] {
        &self.rows
    }

    /// Values on all of `V_h`, zero on `B_h`.
    pub fn on_points(&self) -> Vec<f64> {
        let dom = &self.domain;
        (0..dom.num_points()).map(|p| dom.row_of_point(p).map_or(0.0, |r| self.rows[r])).collect()
    }

    /// `(‖R_h e_h‖_{h,grid}, ‖e_h‖_{h,grid} on B_h)` against an exact solution.
    pub fn error_against(&self, exact: impl Fn(&[f64]) -> f64) -> (f64, f64) {
        let dom = &self.domain;
        let (h, d) = (dom.h(), dom.dim());
        let mut interior = Vec::with_capacity(dom.num_rows());
        let mut boundary = Vec::new();
        for p in 0..dom.num_points() {
            let x = dom.position(p);
            match dom.row_of_point(p) {
                Some(r) => interior.push(exact(&x) - self.rows[r]),
                None => boundary.push(exact(&x)),
            }
        }
        (grid_norm(&interior, h, d), grid_norm(&boundary, h, d))
    }
}

/// Reusable factorization of `L_h` on one domain.
#[derive(Debug)]
pub struct DirichletSolver {
    domain: Arc<GridDomain>,
    matrix: SymMatrix,
    solver: SpdSolver,
}

impl DirichletSolver {
    pub fn new(domain: Arc<GridDomain>) -> Result<Self> {
        if domain.interior_empty() {
            return Err(Error::Degenerate("R_h is empty; refine h".into()));
        }
        let matrix = stencil_matrix(&domain, 1.0);
        let solver = SpdSolver::new(&matrix, None)
            .map_err(|e| Error::Numerical(format!("internal error: L_h is not SPD ({e})")))?;
        Ok(Self { domain, matrix, solver })
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn solve(&self, f: &[f64]) -> Result<DiscreteSolution> {
        let dom = &self.domain;
        if f.len() != dom.num_rows() {
            return Err(Error::DimensionMismatch { expected: dom.num_rows(), got: f.len() });
        }
        let (h, d) = (dom.h(), dom.dim());
        let h4 = h.powi(4);
        let rhs: Vec<f64> = f.iter().map(|v| v * h4).collect();
        let rows = self.solver.solve(&rhs)?;
        let lu = self.matrix.mul(&rows);
        let res: Vec<f64> = lu.iter().zip(f).map(|(a, b)| a / h4 - b).collect();
        let residual = grid_norm(&res, h, d);
        if residual > 1e-8 * grid_norm(f, h, d).max(1.0) {
            return Err(Error::Numerical(format!("Dirichlet solve residual {residual:.3e}")));
        }
        Ok(DiscreteSolution { domain: dom.clone(), rows, residual })
    }
}

/// Solves `L_h u_h = f` on `R_h`, `u_h = 0` on `B_h`.
pub fn solve_dirichlet(domain: Arc<GridDomain>, f: &[f64]) -> Result<DiscreteSolution> {
    DirichletSolver::new(domain)?.solve(f)
}

/// Samples a function at the points of `R_h`.
pub fn on_rows(domain: &GridDomain, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..domain.num_rows()).map(|r| f(&domain.position(domain.row_point(r)))).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub error_grid: f64,
    pub error_boundary: f64,
    pub bound: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub fitted_order: f64,
    pub monotone: bool,
    /// `C` with `err² = C·bound` at the coarsest spacing.
    pub fitted_constant: f64,
    /// `err² ≤ C·bound` at every spacing with the single constant above.
    pub within_bound: bool,
    pub pass: bool,
    pub failures: Vec<String>,
}

/// `M_5² h² + h (M_5² h⁶ + M_2²)`.
pub fn error_bound(m2: f64, m5: f64, h: f64) -> f64 {
    m5 * m5 * h * h + h * (m5 * m5 * h.powi(6) + m2 * m2)
}

pub fn convergence_study(problem: &ManufacturedProblem, h_list: &[f64]) -> Result<ConvergenceTable> {
    if h_list.len() < 3 {
        return Err(Error::Invalid("convergence study needs at least 3 spacings".into()));
    }
    if h_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Invalid("spacings must be strictly decreasing".into()));
    }
    let mut rows = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let dom = Arc::new(GridDomain::classify(&problem.shape, h)?);
        let f = on_rows(&dom, |x| problem.f.eval(x));
        let sol = solve_dirichlet(dom, &f)?;
        let (error_grid, error_boundary) = sol.error_against(|x| problem.u.eval(x));
        rows.push(ConvergenceRow {
            h,
            error_grid,
            error_boundary,
            bound: error_bound(problem.m2, problem.m5, h),
            residual: sol.residual,
        });
    }
    Ok(summarize(rows))
}

fn summarize(rows: Vec<ConvergenceRow>) -> ConvergenceTable {
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let es: Vec<f64> = rows.iter().map(|r| r.error_grid).collect();
    let fitted_order = loglog_fit(&hs, &es).slope;
    let monotone = es.windows(2).all(|w| w[1] < w[0]);
    let fitted_constant = es[0] * es[0] / rows[0].bound;
    let within_bound = rows.iter().all(|r| r.error_grid * r.error_grid <= fitted_constant * r.bound * (1.0 + 1e-12));
    let mut failures = Vec::new();
    if !monotone {
        failures.push(format!("errors not strictly decreasing: {es:?}"));
    }
    if !(fitted_order >= 0.5) {
        failures.push(format!("fitted order {fitted_order:.3} < 0.5"));
    }
    if !within_bound {
        failures.push("error exceeds the fitted bound curve".into());
    }
    if !failures.is_empty() {
        let table: Vec<String> = rows
            .iter()
            .map(|r| format!("h={} err={:.6e} bound={:.6e}", r.h, r.error_grid, r.bound))
            .collect();
        failures.push(table.join("; "));
    }
    ConvergenceTable { pass: failures.is_empty(), rows, fitted_order, monotone, fitted_constant, within_bound, failures }
}

/// Dense forward-difference view of a field vanishing off `R_h`.
struct Patch {
    d: usize,
    lo: Vec<i32>,
    ext: Vec<usize>,
    vals: Vec<f64>,
}

impl Patch {
    fn new(field: &[f64], domain: &GridDomain) -> Self {
        let d = domain.dim();
        let mut lo = vec![i32::MAX; d];
        let mut hi = vec![i32::MIN; d];
        for r in 0..domain.num_rows() {
            for (i, &k) in domain.row_coord(r).iter().enumerate() {
                lo[i] = lo[i].min(k - 2);
                hi[i] = hi[i].max(k);
            }
        }
        let ext: Vec<usize> = lo.iter().zip(&hi).map(|(a, b)| (b - a + 1) as usize).collect();
        let mut vals = vec![0.0; ext.iter().product()];
        for r in 0..domain.num_rows() {
            let k = domain.row_coord(r);
            let s = k.iter().zip(&lo).zip(&ext).fold(0usize, |s, ((k, l), e)| s * e + (k - l) as usize);
            vals[s] = field[r];
        }
        Self { d, lo, ext, vals }
    }

    fn forward(&self, axis: usize, h: f64) -> Patch {
        let stride: usize = self.ext[axis + 1..].iter().product();
        let mut out = vec![0.0; self.vals.len()];
        for (s, o) in out.iter_mut().enumerate() {
            let at_end = (s / stride) % self.ext[axis] == self.ext[axis] - 1;
            let next = if at_end { 0.0 } else { self.vals[s + stride] };
            *o = (next - self.vals[s]) / h;
        }
        Patch { d: self.d, lo: self.lo.clone(), ext: self.ext.clone(), vals: out }
    }

    fn sum_sq(&self) -> f64 {
        self.vals.iter().map(|v| v * v).sum()
    }
}

/// `‖D_j f‖_{h,grid}` for a field vanishing off `R_h`.
pub fn difference_norm(field: &[f64], domain: &GridDomain, j: usize) -> f64 {
    let h = domain.h();
    let p = Patch::new(field, domain).forward(j, h);
    h.powf(domain.dim() as f64 / 2.0) * p.sum_sq().sqrt()
}

/// `‖f‖_{h,2} = (Σ_{|β|≤2} ‖D^β f‖²_{h,grid})^{1/2}` with forward differences.
pub fn sobolev_h2_norm(field: &[f64], domain: &GridDomain) -> Result<f64> {
    if field.len() != domain.num_rows() {
        return Err(Error::DimensionMismatch { expected: domain.num_rows(), got: field.len() });
    }
    let (h, d) = (domain.h(), domain.dim());
    let base = Patch::new(field, domain);
    let mut total = base.sum_sq();
    for j in 0..d {
        let dj = base.forward(j, h);
        total += dj.sum_sq();
        for k in j..d {
            total += dj.forward(k, h).sum_sq();
        }
    }
    Ok(h.powf(d as f64 / 2.0) * total.sqrt())
}

/// `L_{h,2} f` on `R_h` for a field given on `R_h`.
pub fn apply_lh2(field: &[f64], domain: &GridDomain) -> Result<Vec<f64>> {
    if field.len() != domain.num_rows() {
        return Err(Error::DimensionMismatch { expected: domain.num_rows(), got: field.len() });
    }
    let mut full = vec![0.0; domain.num_points()];
    for (r, v) in field.iter().enumerate() {
        full[domain.row_point(r)] = *v;
    }
    let out = DiscreteOperator::new(OperatorVariant::Lh2, domain.dim()).apply(&full, domain)?;
    Ok((0..domain.num_rows()).map(|r| out[domain.row_point(r)]).collect())
}

/// `max_{R_h*} |L_h u − Δ²u|` for a function given in closed form.
pub fn consistency_error(
    domain: &GridDomain,
    u: impl Fn(&[f64]) -> f64,
    bilap_u: impl Fn(&[f64]) -> f64,
) -> Result<f64> {
    let field: Vec<f64> = (0..domain.num_points()).map(|p| u(&domain.position(p))).collect();
    let lu = DiscreteOperator::new(OperatorVariant::Bilaplacian, domain.dim()).apply(&field, domain)?;
    Ok((0..domain.num_points())
        .filter(|&p| domain.class(p) == PointClass::Interior)
        .map(|p| (lu[p] - bilap_u(&domain.position(p))).abs())
        .fold(0.0, f64::max))
}
