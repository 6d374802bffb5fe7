//! Sampling the membrane model, the simplex interpolation `Ψ_N` in d = 2, 3,
//! rescaled maxima and exact increment variances.

use std::collections::BTreeMap;
use std::sync::Arc;

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::green::{green_columns, FactoredPrecision, GreenTable};
use crate::lattice::{GridDomain, ShapeKind};
use crate::linalg::SpdSolver;
use crate::stats::{loglog_fit, LineFit};

/// Samples drawn per block; blocks are fixed by index so results do not depend
/// on the thread count.
const BLOCK: usize = 32;

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug)]
pub struct FieldSample {
    domain: Arc<GridDomain>,
    values: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
}

impl FieldSample {
    pub fn new(domain: Arc<GridDomain>, values: Vec<f64>, seed: u64, stream: u64) -> Result<Self> {
        if values.len() != domain.num_rows() {
            return Err(Error::DimensionMismatch { expected: domain.num_rows(), got: values.len() });
        }
        Ok(Self { domain, values, seed, stream })
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    /// Values on `R_h` in row order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `φ` at a lattice point; zero off `R_h`.
    pub fn at(&self, k: &[i32]) -> f64 {
        self.domain.row_of_coord(k).map_or(0.0, |r| self.values[r])
    }
}

/// Draws `count` independent samples of `N(0, A⁻¹)`; sample `i` uses stream `i`.
pub fn sample(fp: &FactoredPrecision, seed: u64, count: usize) -> Result<Vec<FieldSample>> {
    sample_streams(fp, seed, 0, count)
}

/// As [`sample`] with streams `first, first + 1, …`.
pub fn sample_streams(fp: &FactoredPrecision, seed: u64, first: u64, count: usize) -> Result<Vec<FieldSample>> {
    let chol = match fp.solver() {
        SpdSolver::Direct(c) => c,
        SpdSolver::Iterative { .. } => {
            return Err(Error::Numerical("sampling needs a direct factorization".into()))
        }
    };
    let n = fp.n();
    let blocks: Vec<usize> = (0..count.div_ceil(BLOCK)).collect();
    let out: Vec<Vec<FieldSample>> = blocks
        .par_iter()
        .map(|&b| {
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(count);
            let mut z = Mat::<f64>::zeros(n, hi - lo);
            for (j, idx) in (lo..hi).enumerate() {
                let mut rng = stream_rng(seed, first + idx as u64);
                for i in 0..n {
                    z[(i, j)] = StandardNormal.sample(&mut rng);
                }
            }
            chol.color_in_place(z.as_mut());
            (lo..hi)
                .enumerate()
                .map(|(j, idx)| FieldSample {
                    domain: fp.domain().clone(),
                    values: (0..n).map(|i| z[(i, j)]).collect(),
                    seed,
                    stream: first + idx as u64,
                })
                .collect()
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

/// `κ N^{(d−4)/2}`.
pub fn field_scale(d: usize, n: usize) -> f64 {
    (n as f64).powf((d as f64 - 4.0) / 2.0) / (2.0 * d as f64)
}

/// Vertices and barycentric weights of the simplex containing `t`, for the
/// lattice of spacing `1/N`. Axes are ordered by decreasing fractional part
/// of `N t_i`, ties by increasing axis index.
pub fn interpolation_weights(t: &[f64], n: usize) -> Vec<(Vec<i32>, f64)> {
    let d = t.len();
    let s: Vec<f64> = t.iter().map(|v| v * n as f64).collect();
    let base: Vec<i32> = s.iter().map(|v| v.floor() as i32).collect();
    let frac: Vec<f64> = s.iter().zip(&base).map(|(v, b)| v - *b as f64).collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| frac[j].total_cmp(&frac[i]).then(i.cmp(&j)));
    let mut out = Vec::with_capacity(d + 1);
    let mut v = base.clone();
    out.push((v.clone(), 1.0 - frac[order[0]]));
    for k in 0..d {
        v[order[k]] += 1;
        let next = if k + 1 < d { frac[order[k + 1]] } else { 0.0 };
        out.push((v.clone(), frac[order[k]] - next));
    }
    out
}

/// `Ψ_N`: a sample on the box `[−1, 1]^d` with spacing `1/N`, `d ∈ {2, 3}`.
#[derive(Clone, Debug)]
pub struct InterpolatedField {
    sample: FieldSample,
    d: usize,
    n: usize,
}

impl InterpolatedField {
    pub fn new(sample: FieldSample) -> Result<Self> {
        let dom = sample.domain().clone();
        let d = dom.dim();
        if !(2..=3).contains(&d) {
            return Err(Error::Domain(format!("interpolation is defined for d = 2, 3, got d = {d}")));
        }
        let (_, n) = unit_box_scale(&dom)?;
        Ok(Self { sample, d, n })
    }

    pub fn sample(&self) -> &FieldSample {
        &self.sample
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn evaluate(&self, t: &[f64]) -> Result<f64> {
        check_point(t, self.d)?;
        let acc: f64 = interpolation_weights(t, self.n)
            .iter()
            .map(|(k, w)| w * self.sample.at(k))
            .sum();
        Ok(field_scale(self.d, self.n) * acc)
    }
}

fn check_point(t: &[f64], d: usize) -> Result<()> {
    if t.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: t.len() });
    }
    if t.iter().any(|v| !(v.abs() <= 1.0 + 1e-12)) {
        return Err(Error::Domain(format!("point {t:?} lies outside [-1,1]^{d}")));
    }
    Ok(())
}

/// `Ψ_N(t)`.
pub fn interpolate(field: &InterpolatedField, t: &[f64]) -> Result<f64> {
    field.evaluate(t)
}

/// `κ N^{(d−4)/2} max_{V_N} φ`, the boundary contributing the value 0.
pub fn rescaled_max(field: &FieldSample, d: usize, n: usize) -> f64 {
    let m = field.values().iter().cloned().fold(0.0, f64::max);
    field_scale(d, n) * m
}

/// `E|Ψ_N(t) − Ψ_N(s)|²` from the covariance table.
pub fn exact_increment_variance(table: &GreenTable, t: &[f64], s: &[f64], d: usize, n: usize) -> Result<f64> {
    check_point(t, d)?;
    check_point(s, d)?;
    let dom = table.domain();
    let mut comb: BTreeMap<usize, f64> = BTreeMap::new();
    for (pt, sign) in [(t, 1.0), (s, -1.0)] {
        for (k, w) in interpolation_weights(pt, n) {
            if let Some(r) = dom.row_of_coord(&k) {
                *comb.entry(r).or_insert(0.0) += sign * w;
            }
        }
    }
    let terms: Vec<(usize, f64)> = comb.into_iter().filter(|(_, w)| *w != 0.0).collect();
    let mut acc = 0.0;
    for &(a, wa) in &terms {
        for &(b, wb) in &terms {
            let g = table
                .get(a, b)
                .ok_or_else(|| Error::MissingEntries(format!("G(row {a}, row {b}) not stored")))?;
            acc += wa * wb * g;
        }
    }
    let scale = field_scale(d, n);
    Ok(scale * scale * acc)
}

#[derive(Clone, Debug, Serialize)]
pub struct IncrementStudy {
    /// `(t, s, ‖t − s‖, E|Ψ_N(t) − Ψ_N(s)|²)`.
    pub pairs: Vec<(Vec<f64>, Vec<f64>, f64, f64)>,
    /// Log-log fit of the variance against the distance.
    pub fit: LineFit,
}

/// How [`random_pairs`] places pairs: both points in `[−b, b]^d`, `t`
/// uniform, direction uniform, distance log-uniform in `distance`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairDesign {
    pub half_side: f64,
    pub distance: (f64, f64),
}

impl PairDesign {
    /// Bulk pairs in `[−1/2, 1/2]^d` at distances `[1/N, 1/4]`.
    pub fn bulk(n: usize) -> Self {
        Self { half_side: 0.5, distance: (1.0 / n as f64, 0.25) }
    }
}

pub fn random_pairs(d: usize, count: usize, design: PairDesign, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    use rand::RngExt;
    let mut rng = stream_rng(seed, 0);
    let b = design.half_side;
    let (lo, hi) = (design.distance.0.ln(), design.distance.1.ln());
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let t: Vec<f64> = (0..d).map(|_| rng.random_range(-b..=b)).collect();
        let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = dir.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
        let r = rng.random_range(lo..=hi).exp();
        let s: Vec<f64> = t.iter().zip(&dir).map(|(a, u)| a + r * u / norm).collect();
        if norm > 0.0 && s.iter().all(|v| v.abs() <= b) {
            out.push((t, s));
        }
    }
    out
}

/// Exact increment variances of `Ψ_N` on the box `[−1, 1]^d` with `h = 1/N`
/// over random pairs, solving only the Green columns needed.
pub fn increment_study(fp: &FactoredPrecision, count: usize, design: PairDesign, seed: u64) -> Result<IncrementStudy> {
    let (lo, hi) = design.distance;
    let b = design.half_side;
    if !(b > 0.0 && b <= 1.0 && lo > 0.0 && lo <= hi && hi <= b) {
        return Err(Error::Invalid(format!("pair design {design:?} needs 0 < lo <= hi <= b <= 1")));
    }
    let dom = fp.domain().clone();
    let (d, n) = unit_box_scale(&dom)?;
    let pairs = random_pairs(d, count, design, seed);
    let mut rows = std::collections::BTreeSet::new();
    for (t, s) in &pairs {
        for p in [t, s] {
            for (k, _) in interpolation_weights(p, n) {
                if let Some(r) = dom.row_of_coord(&k) {
                    rows.insert(r);
                }
            }
        }
    }
    let rows: Vec<usize> = rows.into_iter().collect();
    let table = green_columns(fp, &rows)?;
    let mut out = Vec::with_capacity(pairs.len());
    for (t, s) in pairs {
        let dist = t.iter().zip(&s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let v = exact_increment_variance(&table, &t, &s, d, n)?;
        out.push((t, s, dist, v));
    }
    let xs: Vec<f64> = out.iter().map(|p| p.2).collect();
    let ys: Vec<f64> = out.iter().map(|p| p.3).collect();
    Ok(IncrementStudy { fit: loglog_fit(&xs, &ys), pairs: out })
}

fn unit_box_scale(dom: &GridDomain) -> Result<(usize, usize)> {
    let d = dom.dim();
    let is_unit_box = match dom.shape().kind() {
        ShapeKind::Box { lower, upper } => lower.iter().all(|&a| a == -1.0) && upper.iter().all(|&b| b == 1.0),
        _ => false,
    };
    let nf = 1.0 / dom.h();
    let n = nf.round() as usize;
    if !is_unit_box || (nf - n as f64).abs() > 1e-9 {
        return Err(Error::Domain("interpolation needs the box [-1,1]^d with h = 1/N".into()));
    }
    Ok((d, n))
}

/// Rescaled maxima and increment variances gathered across samples.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ScalingStatistics {
    pub rescaled_maxima: Vec<f64>,
    /// `(‖t − s‖, E|Ψ_N(t) − Ψ_N(s)|²)` pairs.
    pub increments: Vec<(f64, f64)>,
}

impl ScalingStatistics {
    pub fn merge(mut self, other: ScalingStatistics) -> Self {
        self.rescaled_maxima.extend(other.rescaled_maxima);
        self.increments.extend(other.increments);
        self
    }
}
