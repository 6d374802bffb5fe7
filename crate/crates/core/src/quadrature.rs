//! Gauss–Legendre rules and a dyadic cube-shell integrator for integrands of
//! the form `g(Σ_i a_i(θ_i)) · Π_i b_i(θ_i)` on `[0, L]^d` with a power-type
//! singularity at the origin.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;

/// Nodes and weights of the `n`-point rule on `[−1, 1]`, cached.
pub fn gauss_legendre(n: usize) -> Arc<Vec<(f64, f64)>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<(f64, f64)>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
    map.entry(n)
        .or_insert_with(|| {
            let rule = GaussLegendre::new(NonZeroUsize::new(n.max(1)).unwrap());
            Arc::new(rule.as_node_weight_pairs().to_vec())
        })
        .clone()
}

/// `∫_a^b f` with an `n`-point rule.
pub fn integrate_1d(n: usize, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    gauss_legendre(n).iter().map(|&(x, w)| w * f(c + r * x)).sum::<f64>() * r
}

/// `∫_a^b f` split into `panels` equal pieces.
pub fn integrate_composite(n: usize, panels: usize, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let step = (b - a) / panels as f64;
    (0..panels).map(|p| integrate_1d(n, a + p as f64 * step, a + (p + 1) as f64 * step, &f)).sum()
}

pub trait SeparableIntegrand: Sync {
    fn dim(&self) -> usize;
    /// Additive term of axis `i`.
    fn additive(&self, axis: usize, t: f64) -> f64;
    /// Multiplicative factor of axis `i`.
    fn factor(&self, axis: usize, t: f64) -> f64;
    /// Outer function of the summed additive terms.
    fn outer(&self, s: f64) -> f64;
    /// Gauss nodes for axis `i` on an interval of length `len`.
    fn nodes(&self, axis: usize, len: f64) -> usize;
}

#[derive(Clone, Debug)]
pub struct ShellIntegral {
    pub value: f64,
    /// Contribution of shell `k`, the cube of side `L 2^{−k}` minus the one
    /// of side `L 2^{−k−1}`.
    pub shells: Vec<f64>,
    /// Extrapolated contribution of the cube left out at the centre.
    pub remainder: f64,
}

/// Integrates over `[0, L]^d` by dyadic shells. Shells are added until the
/// last one falls below `rel_tol` of the running total (at most `max_shells`);
/// the innermost cube is extrapolated assuming each shell contributes
/// `ratio` times the previous one.
pub fn integrate_shells<I: SeparableIntegrand>(
    f: &I,
    side: f64,
    rel_tol: f64,
    max_shells: usize,
    ratio: f64,
) -> ShellIntegral {
    let mut shells = Vec::new();
    let mut total = 0.0;
    for k in 0..max_shells {
        let s = side * 0.5f64.powi(k as i32 + 1);
        let v = shell(f, s);
        shells.push(v);
        total += v;
        if k >= 3 && v.abs() <= rel_tol * total.abs() {
            break;
        }
    }
    let last = *shells.last().unwrap_or(&0.0);
    let remainder = last * ratio / (1.0 - ratio);
    ShellIntegral { value: total + remainder, shells, remainder }
}

/// `[0, 2s]^d \ [0, s]^d` as `2^d − 1` subcubes of side `s`.
fn shell<I: SeparableIntegrand>(f: &I, s: f64) -> f64 {
    let d = f.dim();
    let tables: Vec<[Table; 2]> = (0..d)
        .map(|i| [Table::new(f, i, 0.0, s), Table::new(f, i, s, 2.0 * s)])
        .collect();
    (1usize..1 << d)
        .into_par_iter()
        .map(|mask| {
            let axes: Vec<&Table> = (0..d).map(|i| &tables[i][(mask >> i) & 1]).collect();
            tensor_sum(f, &axes, 0, 0.0, 1.0)
        })
        .sum()
}

struct Table {
    add: Vec<f64>,
    mul: Vec<f64>,
}

impl Table {
    fn new<I: SeparableIntegrand>(f: &I, axis: usize, a: f64, b: f64) -> Self {
        let n = f.nodes(axis, b - a);
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
        let rule = gauss_legendre(n);
        let mut add = Vec::with_capacity(n);
        let mut mul = Vec::with_capacity(n);
        for &(x, w) in rule.iter() {
            let t = c + r * x;
            add.push(f.additive(axis, t));
            mul.push(w * r * f.factor(axis, t));
        }
        Self { add, mul }
    }
}

fn tensor_sum<I: SeparableIntegrand>(f: &I, axes: &[&Table], k: usize, s: f64, p: f64) -> f64 {
    let t = axes[k];
    if k + 1 == axes.len() {
        return p * t.add.iter().zip(&t.mul).map(|(a, m)| f.outer(s + a) * m).sum::<f64>();
    }
    t.add
        .iter()
        .zip(&t.mul)
        .filter(|(_, m)| **m != 0.0)
        .map(|(a, m)| tensor_sum(f, axes, k + 1, s + a, p * m))
        .sum()
}
