//! Infinite-volume membrane model in `d ≥ 5`: the covariance as a singular
//! Fourier integral, an independent random-walk estimate, the decay ratio
//! `G(0,x)‖x‖^{d−4}` and the variance of the rescaled field against a
//! Gaussian test function.

use std::f64::consts::PI;

use rand::RngExt;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_composite, integrate_shells, SeparableIntegrand};
use crate::sampler::stream_rng;

/// `μ(θ) = (1/d) Σ (1 − cos θ_i)`, evaluated as `(2/d) Σ sin²(θ_i/2)`.
pub fn mu(theta: &[f64]) -> f64 {
    let d = theta.len() as f64;
    2.0 / d * theta.iter().map(|t| (t / 2.0).sin().powi(2)).sum::<f64>()
}

fn require_transient(d: usize) -> Result<()> {
    if d <= 4 {
        return Err(Error::Domain(format!("integral diverges for d = {d} <= 4")));
    }
    Ok(())
}

/// Node counts for the shell quadrature: `base + ⌈per_length · |x_i| · len⌉`
/// per axis.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FourierPlan {
    pub base_nodes: usize,
    pub per_length: f64,
    pub rel_tol: f64,
    pub max_shells: usize,
}

impl Default for FourierPlan {
    fn default() -> Self {
        Self { base_nodes: 8, per_length: 1.0, rel_tol: 1e-13, max_shells: 80 }
    }
}

impl FourierPlan {
    /// A finer plan used for the error estimate.
    pub fn refined(&self) -> Self {
        Self { base_nodes: self.base_nodes + 4, per_length: 1.5 * self.per_length, ..*self }
    }

    /// Every node count multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            base_nodes: (self.base_nodes as f64 * factor).ceil() as usize,
            per_length: self.per_length * factor,
            ..*self
        }
    }
}

struct GreenIntegrand<'a> {
    x: &'a [i32],
    plan: FourierPlan,
}

impl SeparableIntegrand for GreenIntegrand<'_> {
    fn dim(&self) -> usize {
        self.x.len()
    }
    fn additive(&self, _: usize, t: f64) -> f64 {
        (t / 2.0).sin().powi(2)
    }
    fn factor(&self, axis: usize, t: f64) -> f64 {
        (self.x[axis] as f64 * t).cos() / PI
    }
    fn outer(&self, s: f64) -> f64 {
        let m = 2.0 * s / self.x.len() as f64;
        1.0 / (m * m)
    }
    fn nodes(&self, axis: usize, len: f64) -> usize {
        self.plan.base_nodes + (self.plan.per_length * self.x[axis].unsigned_abs() as f64 * len).ceil() as usize
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FourierValue {
    pub value: f64,
    /// Difference to the coarser rule plus the extrapolated centre.
    pub quadrature_error: f64,
    /// The integrand is folded onto `[0, π]^d` through its reflection
    /// symmetry, so the odd part integrates to zero exactly.
    pub imaginary: f64,
}

fn green_once(x: &[i32], plan: FourierPlan) -> (f64, f64) {
    let d = x.len();
    let r = integrate_shells(&GreenIntegrand { x, plan }, PI, plan.rel_tol, plan.max_shells, 0.5f64.powi(d as i32 - 4));
    (r.value, r.remainder)
}

/// `G(0, x) = (2π)^{−d} ∫_{[−π,π]^d} μ(θ)^{−2} e^{−i⟨x,θ⟩} dθ`.
pub fn green_infinite_fourier(x: &[i32], plan: FourierPlan) -> Result<FourierValue> {
    require_transient(x.len())?;
    let (coarse, _) = green_once(x, plan);
    let (fine, rem) = green_once(x, plan.refined());
    Ok(FourierValue { value: fine, quadrature_error: (fine - coarse).abs() + rem.abs(), imaginary: 0.0 })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct WalkConfig {
    pub d: usize,
    pub walks: u64,
    pub max_steps: usize,
    pub seed: u64,
    /// Largest acceptable truncation bound.
    pub tail_tolerance: Option<f64>,
}

impl WalkConfig {
    pub fn new(d: usize, walks: u64, max_steps: usize, seed: u64) -> Self {
        Self { d, walks, max_steps, seed, tail_tolerance: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WalkEstimate {
    pub targets: Vec<Vec<i32>>,
    pub mean: f64,
    pub standard_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WalkReport {
    pub estimates: Vec<WalkEstimate>,
    /// Fitted prefactor of `P_0[S_m = 0] ≈ ĉ m^{−d/2}` (even `m`).
    pub c_hat: f64,
    /// `Σ_{m>M} (m+1) ĉ m^{−d/2}`.
    pub tail_bound: f64,
    pub walks: u64,
    pub max_steps: usize,
}

const WALK_BATCH: u64 = 4096;

struct BatchTally {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    returns: Vec<u64>,
}

/// Monte Carlo estimate of `Σ_{m≤M} (m+1) P_0[S_m = x]`, one estimate per
/// target.
pub fn walk_estimate(config: &WalkConfig, targets: &[Vec<i32>]) -> Result<WalkReport> {
    let groups: Vec<Vec<Vec<i32>>> = targets.iter().map(|t| vec![t.clone()]).collect();
    walk_estimate_pooled(config, &groups)
}

/// As [`walk_estimate`], averaging the tallies of each group of targets
/// within every walk.
pub fn walk_estimate_pooled(config: &WalkConfig, groups: &[Vec<Vec<i32>>]) -> Result<WalkReport> {
    let d = config.d;
    require_transient(d)?;
    if config.walks < 2 {
        return Err(Error::Invalid("need at least two walks".into()));
    }
    let radius = groups
        .iter()
        .flatten()
        .map(|t| {
            if t.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: t.len() });
            }
            Ok(t.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0))
        })
        .collect::<Result<Vec<u32>>>()?
        .into_iter()
        .max()
        .unwrap_or(0) as i32;
    let side = (2 * radius + 1) as usize;
    let cells = side
        .checked_pow(d as u32)
        .filter(|&c| c <= 50_000_000)
        .ok_or_else(|| Error::Invalid("targets too far from the origin for the tally table".into()))?;
    let cell = |x: &[i32]| x.iter().fold(0usize, |s, &v| s * side + (v + radius) as usize);
    let mut lookup: Vec<(u32, f64)> = vec![(u32::MAX, 0.0); cells];
    for (g, members) in groups.iter().enumerate() {
        for t in members {
            let c = cell(t);
            if lookup[c].0 != u32::MAX {
                return Err(Error::Invalid(format!("target {t:?} listed twice")));
            }
            lookup[c] = (g as u32, 1.0 / members.len() as f64);
        }
    }
    let origin = cell(&vec![0; d]);
    let m_max = config.max_steps;
    let batches = config.walks.div_ceil(WALK_BATCH);
    let tallies: Vec<BatchTally> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(config.seed, b);
            let mut t = BatchTally {
                sum: vec![0.0; groups.len()],
                sum_sq: vec![0.0; groups.len()],
                returns: vec![0; m_max + 1],
            };
            let mut acc = vec![0.0; groups.len()];
            let mut touched: Vec<usize> = Vec::new();
            let mut pos = vec![0i32; d];
            let count = WALK_BATCH.min(config.walks - b * WALK_BATCH);
            for _ in 0..count {
                pos.iter_mut().for_each(|p| *p = 0);
                for m in 0..=m_max {
                    if m > 0 {
                        let k: usize = rng.random_range(0..2 * d);
                        pos[k / 2] += if k % 2 == 0 { 1 } else { -1 };
                    }
                    if pos.iter().all(|v| v.abs() <= radius) {
                        let c = cell(&pos);
                        if c == origin {
                            t.returns[m] += 1;
                        }
                        let (g, w) = lookup[c];
                        if g != u32::MAX {
                            let g = g as usize;
                            if acc[g] == 0.0 {
                                touched.push(g);
                            }
                            acc[g] += (m + 1) as f64 * w;
                        }
                    }
                }
                for &g in &touched {
                    t.sum[g] += acc[g];
                    t.sum_sq[g] += acc[g] * acc[g];
                    acc[g] = 0.0;
                }
                touched.clear();
            }
            t
        })
        .collect();
    let mut sum = vec![0.0; groups.len()];
    let mut sum_sq = vec![0.0; groups.len()];
    let mut returns = vec![0u64; m_max + 1];
    for t in &tallies {
        for g in 0..groups.len() {
            sum[g] += t.sum[g];
            sum_sq[g] += t.sum_sq[g];
        }
        for (r, v) in returns.iter_mut().zip(&t.returns) {
            *r += v;
        }
    }
    let n = config.walks as f64;
    let estimates = groups
        .iter()
        .enumerate()
        .map(|(g, members)| {
            let mean = sum[g] / n;
            let var = ((sum_sq[g] - n * mean * mean) / (n - 1.0)).max(0.0);
            WalkEstimate { targets: members.clone(), mean, standard_error: (var / n).sqrt() }
        })
        .collect();
    let c_hat = fit_return_prefactor(&returns, config.walks, d);
    let tail_bound = c_hat * tail_sum(m_max, d);
    if let Some(tol) = config.tail_tolerance {
        if tail_bound > tol {
            return Err(Error::Numerical(format!(
                "walk truncation bound {tail_bound:.3e} exceeds tolerance {tol:.3e}; increase the maximum step count"
            )));
        }
    }
    Ok(WalkReport { estimates, c_hat, tail_bound, walks: config.walks, max_steps: m_max })
}

/// Pooled ratio fit of even-step return frequencies over `m ∈ [M/2, M]`,
/// inflated by three relative standard errors of the pooled count.
fn fit_return_prefactor(returns: &[u64], walks: u64, d: usize) -> f64 {
    let m_max = returns.len() - 1;
    let lo = (m_max / 2).max(2);
    let (mut count, mut expo) = (0u64, 0.0);
    for (m, &r) in returns.iter().enumerate().skip(lo) {
        if m % 2 == 0 {
            count += r;
            expo += (m as f64).powf(-(d as f64) / 2.0);
        }
    }
    let clt = 2.0 * (d as f64 / (2.0 * PI)).powf(d as f64 / 2.0);
    if count == 0 || expo == 0.0 {
        return clt;
    }
    count as f64 / (walks as f64 * expo) * (1.0 + 3.0 / (count as f64).sqrt())
}

/// `Σ_{m>M} (m+1) m^{−d/2}`.
fn tail_sum(m_max: usize, d: usize) -> f64 {
    let a = d as f64 / 2.0;
    let cut = 100 * (m_max + 1);
    let direct: f64 = (m_max + 1..cut).map(|m| (m as f64 + 1.0) * (m as f64).powf(-a)).sum();
    let c = cut as f64;
    direct + c.powf(2.0 - a) / (a - 2.0) + c.powf(1.0 - a) / (a - 1.0)
}

/// Hyperoctahedral orbits of `{‖x‖_∞ ≤ r}`: a representative with sorted
/// nonnegative coordinates and all members.
pub fn orbits(d: usize, r: i32) -> Vec<(Vec<i32>, Vec<Vec<i32>>)> {
    let side = (2 * r + 1) as usize;
    let mut map: std::collections::BTreeMap<Vec<i32>, Vec<Vec<i32>>> = std::collections::BTreeMap::new();
    for idx in 0..side.pow(d as u32) {
        let mut k = idx;
        let mut x = vec![0i32; d];
        for v in x.iter_mut().rev() {
            *v = (k % side) as i32 - r;
            k /= side;
        }
        let mut key: Vec<i32> = x.iter().map(|v| v.abs()).collect();
        key.sort_unstable();
        map.entry(key).or_default().push(x);
    }
    map.into_iter().collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Eta2Row {
    pub radius: f64,
    pub green: f64,
    pub ratio: f64,
    pub quadrature_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Eta2Trend {
    pub rows: Vec<Eta2Row>,
    /// `(max − min)/mean` of the ratio over the upper half of the radii.
    pub spread: f64,
}

/// `G(0, r e_1) r^{d−4}` along the first axis.
pub fn eta2_trend(d: usize, radii: &[i32], plan: FourierPlan) -> Result<Eta2Trend> {
    require_transient(d)?;
    if radii.is_empty() || radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 0 {
        return Err(Error::Invalid("radii must be positive and increasing".into()));
    }
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut x = vec![0; d];
        x[0] = r;
        let g = green_infinite_fourier(&x, plan)?;
        let scale = (r as f64).powi(d as i32 - 4);
        let ratio = g.value * scale;
        if g.quadrature_error * scale > 0.1 * ratio.abs() {
            return Err(Error::Numerical(format!(
                "quadrature error {:.3e} exceeds 10% of the ratio at r = {r}",
                g.quadrature_error
            )));
        }
        rows.push(Eta2Row { radius: r as f64, green: g.value, ratio, quadrature_error: g.quadrature_error });
    }
    let top: Vec<f64> = rows[rows.len() / 2..].iter().map(|r| r.ratio).collect();
    let (lo, hi) = top.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mean = top.iter().sum::<f64>() / top.len() as f64;
    Ok(Eta2Trend { rows, spread: (hi - lo) / mean })
}

/// Rapidly decaying test functions with closed-form transforms in the
/// symmetric convention `f̂(θ) = (2π)^{−d/2} ∫ e^{−i⟨x,θ⟩} f(x) dx`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum SchwartzTest {
    /// `a · exp(−‖x‖²/(2σ²))`.
    Gaussian { amplitude: f64, sigma: f64 },
}

impl SchwartzTest {
    pub fn standard_gaussian() -> Self {
        Self::Gaussian { amplitude: 1.0, sigma: 1.0 }
    }

    pub fn named(name: &str) -> Result<Self> {
        match name {
            "gaussian" => Ok(Self::standard_gaussian()),
            _ => Err(Error::Invalid(format!("unknown test function '{name}'"))),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let Self::Gaussian { amplitude, sigma } = *self;
        amplitude * (-x.iter().map(|v| v * v).sum::<f64>() / (2.0 * sigma * sigma)).exp()
    }

    pub fn transform(&self, theta: &[f64]) -> f64 {
        let Self::Gaussian { amplitude, sigma } = *self;
        amplitude * sigma.powi(theta.len() as i32) * (-sigma * sigma * theta.iter().map(|v| v * v).sum::<f64>() / 2.0).exp()
    }

    /// `(2π)^{−d/2} N^{−d} Σ_{x∈Z^d} e^{−i⟨x/N,θ⟩} f(x/N)`, truncated where
    /// `|f| < 10^{−16}`.
    pub fn lattice_transform(&self, theta: &[f64], n: usize) -> f64 {
        let Self::Gaussian { amplitude, sigma } = *self;
        if amplitude == 0.0 {
            return 0.0;
        }
        let nf = n as f64;
        let reach = sigma * (2.0 * (amplitude.abs() / 1e-16).ln().max(0.0)).sqrt();
        let jmax = (reach * nf).ceil() as i64;
        let axis = |t: f64| {
            let mut s = 1.0;
            for j in 1..=jmax {
                let x = j as f64 / nf;
                s += 2.0 * (x * t).cos() * (-x * x / (2.0 * sigma * sigma)).exp();
            }
            s / (nf * (2.0 * PI).sqrt())
        };
        amplitude * theta.iter().map(|&t| axis(t)).product::<f64>()
    }
}

/// `|lattice transform − f̂|` at `θ` for spacing `1/N`.
pub fn riemann_sum_error(f: &SchwartzTest, theta: &[f64], n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Invalid("riemann sum needs N >= 2".into()));
    }
    Ok((f.lattice_transform(theta, n) - f.transform(theta)).abs())
}

fn gamma_half(k: u32) -> f64 {
    // Γ(k/2)
    let (mut g, mut x) = if k % 2 == 0 { (1.0, 1.0) } else { (PI.sqrt(), 0.5) };
    while x < k as f64 / 2.0 - 1e-12 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Surface area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    2.0 * PI.powf(d as f64 / 2.0) / gamma_half(d as u32)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct InvLaplacianNorm {
    pub closed_form: f64,
    pub radial_quadrature: f64,
}

/// `‖(−Δ)^{−1} f‖²_{L²} = ∫ ‖θ‖^{−4} |f̂(θ)|² dθ`, in closed form and by
/// radial quadrature.
pub fn inv_laplacian_norm(f: &SchwartzTest, d: usize) -> Result<InvLaplacianNorm> {
    require_transient(d)?;
    let SchwartzTest::Gaussian { amplitude, sigma } = *f;
    let pre = sphere_area(d) * amplitude * amplitude * sigma.powi(2 * d as i32);
    let closed_form = pre * gamma_half(d as u32 - 4) / (2.0 * sigma.powi(d as i32 - 4));
    let radial = integrate_composite(20, 40, 0.0, 12.0 / sigma, |r| r.powi(d as i32 - 5) * (-sigma * sigma * r * r).exp());
    Ok(InvLaplacianNorm { closed_form, radial_quadrature: pre * radial })
}

struct VarianceIntegrand {
    d: usize,
    n: f64,
    sigma: f64,
    scale: f64,
    plan: FourierPlan,
}

impl SeparableIntegrand for VarianceIntegrand {
    fn dim(&self) -> usize {
        self.d
    }
    fn additive(&self, _: usize, t: f64) -> f64 {
        (t / (2.0 * self.n)).sin().powi(2)
    }
    fn factor(&self, _: usize, t: f64) -> f64 {
        2.0 * (-self.sigma * self.sigma * t * t).exp()
    }
    fn outer(&self, s: f64) -> f64 {
        let m = 2.0 * s / self.d as f64;
        self.scale / (m * m)
    }
    fn nodes(&self, _: usize, len: f64) -> usize {
        self.plan.base_nodes + (1.5 * self.plan.per_length * self.sigma * len).ceil() as usize
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingVariance {
    pub value: f64,
    pub error_budget: f64,
    pub quadrature_error: f64,
    pub poisson_correction: f64,
    pub truncation: f64,
}

/// `θ`-cut for Gaussian transforms, in units of `1/σ`.
const GAUSSIAN_CUT: f64 = 9.0;

/// `Var(ψ_N, f) = κ² N^{−4} (2π)^{−d} ∫_{[−Nπ,Nπ]^d} μ(θ/N)^{−2} |N^{−d} Σ_x e^{−i⟨x,θ⟩} f(x)|² dθ`
/// with the lattice transform replaced by `f̂`, plus an error budget for the
/// replacement, the quadrature and the `θ` truncation.
pub fn scaling_variance(f: &SchwartzTest, n: usize, d: usize, plan: FourierPlan) -> Result<ScalingVariance> {
    require_transient(d)?;
    if n < 2 {
        return Err(Error::Invalid("scaling variance needs N >= 2".into()));
    }
    let SchwartzTest::Gaussian { amplitude, sigma } = *f;
    if amplitude == 0.0 {
        return Ok(ScalingVariance { value: 0.0, error_budget: 0.0, quadrature_error: 0.0, poisson_correction: 0.0, truncation: 0.0 });
    }
    let nf = n as f64;
    let kappa = 1.0 / (2.0 * d as f64);
    let scale = kappa * kappa * nf.powi(-4) * amplitude * amplitude * sigma.powi(2 * d as i32);
    let cut = GAUSSIAN_CUT / sigma;
    let side = (nf * PI).min(cut);
    let ratio = 0.5f64.powi(d as i32 - 4);
    let run = |p: FourierPlan| {
        let g = VarianceIntegrand { d, n: nf, sigma, scale, plan: p };
        integrate_shells(&g, side, p.rel_tol, p.max_shells, ratio)
    };
    let coarse = run(plan);
    let fine = run(plan.refined());
    let value = fine.value;
    let quadrature_error = (fine.value - coarse.value).abs() + fine.remainder.abs();
    let truncation = if side < nf * PI { value * d as f64 * (-(sigma * side).powi(2)).exp() } else { 0.0 };
    // Aliased images of f̂ differ from f̂ by at most `eps` anywhere in the cell.
    let g1 = |t: f64| (-sigma * sigma * t * t / 2.0).exp();
    let delta: f64 = (1..50).map(|k| 2.0 * g1((2 * k - 1) as f64 * PI * nf)).sum();
    let fmax = amplitude.abs() * sigma.powi(d as i32);
    let eps = fmax * ((1.0 + delta).powi(d as i32) - 1.0);
    let poisson_correction = if eps > 0.0 {
        let g0 = green_infinite_fourier(&vec![0; d], plan)?.value;
        // ∫_{[−Nπ,Nπ]^d} κ² N^{−4} μ(θ/N)^{−2} dθ = κ² N^{d−4} (2π)^d G(0,0)
        kappa * kappa * nf.powi(d as i32 - 4) * (2.0 * PI).powi(d as i32) * g0 * (2.0 * fmax * eps + eps * eps)
    } else {
        0.0
    };
    let error_budget = quadrature_error + truncation + poisson_correction;
    if error_budget > 0.05 * value.abs() {
        return Err(Error::Numerical(format!(
            "scaling variance error budget {error_budget:.3e} exceeds 5% of the value {value:.6}"
        )));
    }
    Ok(ScalingVariance { value, error_budget, quadrature_error, poisson_correction, truncation })
}

#[derive(Clone, Debug, Serialize)]
pub struct SineBound {
    pub n: usize,
    pub d: usize,
    pub samples: usize,
    /// Smallest `ĉ` with `N^{−4}(Σ sin²(w_i/N))^{−2} ≤ (‖w‖^{−2} + ĉN^{−2})²` on the sample.
    pub c_hat: f64,
    pub lower_violations: usize,
}

/// Checks `‖w‖^{−4} ≤ N^{−4}(Σ sin²(w_i/N))^{−2}` and fits the upper constant
/// on uniform samples from `[−Nπ/2, Nπ/2]^d \ {0}`.
pub fn sine_bound(n: usize, d: usize, samples: usize, seed: u64) -> SineBound {
    let nf = n as f64;
    let mut rng = stream_rng(seed, 0);
    let mut c_hat: f64 = 0.0;
    let mut lower_violations = 0;
    let mut w = vec![0.0; d];
    let mut taken = 0;
    while taken < samples {
        for v in w.iter_mut() {
            *v = rng.random_range(-0.5 * PI * nf..0.5 * PI * nf);
        }
        let w2: f64 = w.iter().map(|v| v * v).sum();
        if w2 == 0.0 {
            continue;
        }
        taken += 1;
        let s: f64 = w.iter().map(|v| (v / nf).sin().powi(2)).sum();
        let mid = 1.0 / (nf * nf * s);
        if 1.0 / (w2 * w2) > mid * mid * (1.0 + 1e-12) {
            lower_violations += 1;
        }
        c_hat = c_hat.max(nf * nf * (mid - 1.0 / w2));
    }
    SineBound { n, d, samples, c_hat, lower_violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mu_exact_values() {
        assert_eq!(mu(&[0.0; 5]), 0.0);
        assert_eq!(mu(&[PI; 5]), 2.0);
        assert_eq!(mu(&[0.3, -1.2, 2.0]), mu(&[-0.3, 1.2, -2.0]));
    }

    #[test]
    fn low_dimension_diverges() {
        assert!(green_infinite_fourier(&[0, 0, 0, 0], FourierPlan::default()).is_err());
    }

    #[test]
    fn limit_value() {
        let v = inv_laplacian_norm(&SchwartzTest::standard_gaussian(), 5).unwrap();
        assert!((v.closed_form - 4.0 * PI.powf(2.5) / 3.0).abs() < 1e-12);
        assert!((v.radial_quadrature - v.closed_form).abs() < 1e-8 * v.closed_form);
    }

    #[test]
    fn gamma_values() {
        assert!((gamma_half(5) - 0.75 * PI.sqrt()).abs() < 1e-15);
        assert_eq!(gamma_half(6), 2.0);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn single_walk_of_length_zero() {
        let c = WalkConfig::new(5, 2, 0, 1);
        let r = walk_estimate(&c, &[vec![0; 5]]).unwrap();
        assert_eq!(r.estimates[0].mean, 1.0);
        assert_eq!(r.estimates[0].standard_error, 0.0);
    }

    #[test]
    fn tail_sum_matches_integral_scale() {
        // Σ_{m>M} (m+1) m^{-5/2} ≈ 2/√M for large M.
        let t = tail_sum(10_000, 5);
        assert!((t * 100.0 / 2.0 - 1.0).abs() < 0.01);
    }
}
