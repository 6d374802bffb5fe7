//! Experiment recipes: each resolves its parameters, runs the computation,
//! writes its tables and arrays and records pass/fail assertions.

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{anyhow, bail, Result};
use serde::Serialize;
use serde_json::{json, Value};

use membrane::green::{assemble_precision, green_columns, green_full, FactoredPrecision, DENSE_CAP};
use membrane::infvol::{self, FourierPlan, SchwartzTest, WalkConfig};
use membrane::lattice::{verify_b2star, GridDomain, ShapePredicate, ShapeSpec};
use membrane::sampler::{self, InterpolatedField};
use membrane::spectral::{self, TestFunction};
use membrane::stats::ks_distance;
use membrane::thomee;

use crate::config::{self, parse_list, parse_points, parse_range, parse_spacing, parse_spacings, required};
use crate::output::{num, Run};
use crate::{
    B2Args, DomainArgs, Eta2Args, GreenArgs, InfGreenArgs, InterpolateArgs, MaxScalingArgs, MomentArgs, PairArgs,
    SampleArgs, SpectrumArgs, ThomeeArgs, VarianceArgs,
};

pub const OUT_ENV: &str = "MEMBRANE_OUT";

/// Invalid invocation or configuration; mapped to exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| anyhow::Error::new(Usage(format!("{e:#}"))))
}

pub struct Context {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub force: bool,
    pub global: Value,
}

impl Context {
    fn open<P: Serialize>(&self, recipe: &str, params: &P) -> Result<Run> {
        let dir = match &self.out {
            Some(p) => p.clone(),
            None => std::env::var_os(OUT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("membrane-out"))
                .join(recipe.replace('.', "-")),
        };
        let config = json!({
            "recipe": recipe,
            "seed": self.seed,
            "global": self.global,
            "params": params,
        });
        usage(Run::new(&dir, recipe, config, self.force))
    }
}

pub fn list_recipes() -> Vec<String> {
    [
        ("green", "discrete Green's function solves the clamped bilaplacian problem with a unit source"),
        ("sample", "exact Gaussian samples with precision the squared normalized Laplacian"),
        ("interpolate", "the piecewise-linear interpolation of the rescaled field and its maximum"),
        ("max-scaling", "the rescaled maximum converges in law in d = 2, 3"),
        ("moment-check", "second moments of interpolated increments are bounded by a power of the distance"),
        ("spectrum", "bilaplacian eigenvalues grow like j^(4/d) on bounded domains"),
        ("pair", "pairings of the rescaled field with a test function converge in d = 4"),
        ("thomee", "the finite-difference biharmonic solver converges with order 1/2 in the discrete norm"),
        ("infvol green", "the infinite-volume covariance equals the walk-weighted return sum and its Fourier integral"),
        ("infvol eta2", "the infinite-volume covariance decays like |x|^(4-d)"),
        ("infvol variance", "the scaling limit variance against a test function equals its inverse-Laplacian norm"),
        ("b2star", "every near-boundary point sees two consecutive boundary points along an axis ray"),
    ]
    .iter()
    .map(|(name, claim)| format!("{name:<16} {claim}"))
    .collect()
}

fn factor(domain: GridDomain) -> Result<FactoredPrecision> {
    Ok(assemble_precision(Arc::new(domain))?.factorize(None)?)
}

fn unit_box(d: usize, n: usize) -> Result<GridDomain> {
    if n == 0 {
        bail!("N must be positive");
    }
    config::domain("box", d, 1.0 / n as f64)
}

fn cube(d: usize, a: f64, h: f64) -> Result<GridDomain> {
    Ok(GridDomain::classify(&ShapePredicate::cube(d, -a, a)?, h)?)
}

struct ResolvedDomain {
    domain: GridDomain,
    spec: Value,
}

fn resolve_domain(a: &DomainArgs) -> Result<ResolvedDomain> {
    let h = match (&a.h, a.n) {
        (Some(h), None) => parse_spacing(h)?,
        (None, Some(n)) if n > 0 => 1.0 / n as f64,
        (Some(_), Some(_)) => bail!("give either --h or --N, not both"),
        _ => bail!("missing required parameter --h or --N"),
    };
    if let Some(path) = &a.domain {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow!("reading domain {}: {e}", path.display()))?;
        let spec: ShapeSpec = toml::from_str(&text).map_err(|e| anyhow!("parsing domain {}: {e}", path.display()))?;
        let shape = spec.to_predicate()?;
        if a.d.is_some_and(|d| d != shape.dimension()) {
            bail!("--d disagrees with the domain file");
        }
        return Ok(ResolvedDomain { domain: GridDomain::classify(&shape, h)?, spec: json!({"file": spec, "h": h}) });
    }
    let shape = required(&a.shape, "shape")?;
    let d = required(&a.d, "d")?;
    Ok(ResolvedDomain { domain: config::domain(&shape, d, h)?, spec: json!({"shape": shape, "d": d, "h": h}) })
}

fn lattice_points(s: &str) -> Result<Vec<Vec<i32>>> {
    s.split(';').filter(|p| !p.trim().is_empty()).map(parse_list::<i32>).collect()
}

fn points_csv(run: &mut Run, domain: &GridDomain) -> Result<()> {
    let d = domain.dim();
    let mut header = vec!["row".to_string()];
    header.extend((0..d).map(|i| format!("k{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..domain.num_rows()).map(|r| {
        std::iter::once(r.to_string()).chain(domain.row_coord(r).iter().map(|k| k.to_string())).collect::<Vec<_>>()
    });
    run.csv("rows.csv", &header, rows)
}

pub fn green(ctx: &Context, key: &str, p: GreenArgs) -> Result<bool> {
    let (res, cols) = usage((|| {
        let res = resolve_domain(&p.domain)?;
        let cols = p.columns.as_deref().filter(|c| c.trim() != "all").map(lattice_points).transpose()?;
        if let Some(cols) = &cols {
            for x in cols {
                if x.len() != res.domain.dim() || res.domain.row_of_coord(x).is_none() {
                    bail!("column point {x:?} is not in R_h");
                }
            }
        }
        Ok((res, cols))
    })())?;
    let mut run = ctx.open(key, &p)?;
    let n = res.domain.num_rows();
    let fp = run.stage("factorize", || factor(res.domain))?;
    let dom = fp.domain().clone();
    let (table, rows) = run.stage("solve", || match &cols {
        Some(cols) => {
            let rows: Vec<usize> = cols.iter().map(|x| dom.row_of_coord(x).unwrap()).collect();
            Ok((green_columns(&fp, &rows)?, rows))
        }
        None => Ok((green_full(&fp, p.cap.unwrap_or(DENSE_CAP))?, (0..n).collect())),
    })?;
    let mut data = Vec::with_capacity(rows.len() * n);
    for &r in &rows {
        for y in 0..n {
            data.push(table.get(r, y).ok_or_else(|| anyhow!("missing G({r}, {y})"))?);
        }
    }
    let meta = json!({
        "domain": res.spec,
        "ordering": "array[i][j] = G(x_i, y_j); x_i the requested rows, y_j all rows of R_h in lexicographic order (rows.csv)",
        "rows": rows,
        "max_residual": table.max_residual(),
    });
    run.raw("green", &[rows.len(), n], &data, meta)?;
    points_csv(&mut run, &dom)?;
    run.check(
        "column_residual",
        table.max_residual() <= membrane::green::COLUMN_RESIDUAL_TOL,
        format!("max |A G(x,.) - delta_x| = {:e}", table.max_residual()),
    );
    if table.is_full() {
        let asym = table.max_asymmetry();
        run.check("symmetry", asym <= 1e-10, format!("max relative asymmetry {asym:e}"));
    }
    run.finish()
}

pub fn sample(ctx: &Context, key: &str, p: SampleArgs) -> Result<bool> {
    let res = usage(resolve_domain(&p.domain))?;
    let count = p.count.unwrap_or(1);
    if count == 0 {
        return Err(anyhow::Error::new(Usage("--count must be positive".into())));
    }
    let mut run = ctx.open(key, &p)?;
    let fp = run.stage("factorize", || factor(res.domain))?;
    let samples = run.stage("sample", || Ok(sampler::sample(&fp, ctx.seed, count)?))?;
    let n = fp.n();
    let data: Vec<f64> = samples.iter().flat_map(|s| s.values().iter().copied()).collect();
    let finite = data.iter().all(|v| v.is_finite());
    let meta = json!({
        "domain": res.spec,
        "ordering": "array[s][r]: sample s (stream s) at row r of R_h (rows.csv)",
        "seed": ctx.seed,
    });
    run.raw("samples", &[count, n], &data, meta)?;
    points_csv(&mut run, fp.domain())?;
    run.check("finite", finite, "all sampled values finite");
    run.finish()
}

pub fn interpolate(ctx: &Context, key: &str, p: InterpolateArgs) -> Result<bool> {
    let (d, n, points, refine) = usage((|| {
        let d = required(&p.d, "d")?;
        let n = required(&p.n, "N")?;
        let points = p.points.as_deref().map(parse_points).transpose()?;
        if let Some(pts) = &points {
            if pts.iter().any(|t| t.len() != d || t.iter().any(|v| v.abs() > 1.0)) {
                bail!("points must have {d} coordinates in [-1, 1]");
            }
        }
        let refine = p.refine.unwrap_or(2);
        if refine == 0 {
            bail!("--refine must be positive");
        }
        Ok((d, n, points, refine))
    })())?;
    let domain = usage(unit_box(d, n))?;
    let mut run = ctx.open(key, &p)?;
    let fp = run.stage("factorize", || factor(domain))?;
    let s = run.stage("sample", || Ok(sampler::sample(&fp, ctx.seed, 1)?.remove(0)))?;
    let lattice_max = sampler::rescaled_max(&s, d, n);
    let field = InterpolatedField::new(s)?;
    match points {
        Some(pts) => {
            let vals = pts.iter().map(|t| field.evaluate(t)).collect::<membrane::Result<Vec<_>>>()?;
            let mut header: Vec<String> = (0..d).map(|i| format!("t{i}")).collect();
            header.push("value".into());
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows = pts.iter().zip(&vals).map(|(t, v)| t.iter().map(|x| num(*x)).chain([num(*v)]).collect::<Vec<_>>());
            run.csv("values.csv", &header, rows)?;
        }
        None => {
            let m = 2 * n * refine + 1;
            let total = m.pow(d as u32);
            let step = 1.0 / (n * refine) as f64;
            let vals = run.stage("mesh", || {
                let mut out = Vec::with_capacity(total);
                let mut t = vec![0.0; d];
                for idx in 0..total {
                    let mut rest = idx;
                    for i in (0..d).rev() {
                        t[i] = -1.0 + (rest % m) as f64 * step;
                        rest /= m;
                    }
                    out.push(field.evaluate(&t)?);
                }
                Ok(out)
            })?;
            let mesh_max = vals.iter().copied().fold(0.0, f64::max);
            let meta = json!({
                "d": d, "N": n, "refine": refine, "seed": ctx.seed,
                "ordering": "row-major over axes 0..d, coordinate -1 + i/(N refine)",
            });
            run.raw("mesh", &vec![m; d], &vals, meta)?;
            run.check(
                "mesh_max",
                (mesh_max - lattice_max).abs() <= 1e-12,
                format!("mesh sup {mesh_max:e}, lattice rescaled max {lattice_max:e}"),
            );
        }
    }
    run.json("summary.json", &json!({"rescaled_max": lattice_max}))?;
    run.finish()
}

pub fn max_scaling(ctx: &Context, key: &str, p: MaxScalingArgs) -> Result<bool> {
    let (d, ns, count, ks_max) = usage((|| {
        let d = p.d.unwrap_or(2);
        if !(2..=3).contains(&d) {
            bail!("max-scaling needs d = 2 or 3");
        }
        let ns: Vec<usize> = parse_list(p.n.as_deref().unwrap_or("32,64"))?;
        if ns.is_empty() || ns.contains(&0) {
            bail!("--N needs positive lattice sizes");
        }
        Ok((d, ns, p.count.unwrap_or(500), p.ks_max.unwrap_or(0.1)))
    })())?;
    let mut run = ctx.open(key, &p)?;
    let mut maxima = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let fp = run.stage(&format!("factorize N={n}"), || factor(unit_box(d, n)?))?;
        let first = (i * count) as u64;
        let m = run.stage(&format!("sample N={n}"), || {
            let samples = sampler::sample_streams(&fp, ctx.seed, first, count)?;
            Ok(samples.iter().map(|s| sampler::rescaled_max(s, d, n)).collect::<Vec<_>>())
        })?;
        maxima.push(m);
    }
    let rows = ns
        .iter()
        .zip(&maxima)
        .flat_map(|(n, m)| m.iter().enumerate().map(move |(i, v)| vec![n.to_string(), i.to_string(), num(*v)]));
    run.csv("maxima.csv", &["N", "sample", "rescaled_max"], rows)?;
    for i in 1..ns.len() {
        let ks = ks_distance(&maxima[i - 1], &maxima[i]);
        run.check(&format!("ks N={} vs N={}", ns[i - 1], ns[i]), ks <= ks_max, format!("KS distance {ks:.4} (max {ks_max})"));
    }
    run.finish()
}

pub fn moment_check(ctx: &Context, key: &str, p: MomentArgs) -> Result<bool> {
    let (d, n, pairs, range) = usage((|| {
        let d = p.d.unwrap_or(2);
        let (n, range) = match d {
            2 => (32, (1.5, 2.1)),
            3 => (12, (0.9, 1.3)),
            _ => bail!("moment-check needs d = 2 or 3"),
        };
        let range = match &p.exponent {
            Some(s) => match parse_list::<f64>(s)?[..] {
                [lo, hi] if lo <= hi => (lo, hi),
                _ => bail!("--exponent expects 'lo,hi'"),
            },
            None => range,
        };
        Ok((d, p.n.unwrap_or(n), p.pairs.unwrap_or(200), range))
    })())?;
    let domain = usage(unit_box(d, n))?;
    let mut run = ctx.open(key, &p)?;
    let fp = run.stage("factorize", || factor(domain))?;
    let study = run.stage("increments", || Ok(sampler::increment_study(&fp, pairs, sampler::PairDesign::bulk(n), ctx.seed)?))?;
    let rows = study.pairs.iter().map(|(_, _, dist, var)| vec![num(*dist), num(*var)]);
    run.csv("increments.csv", &["distance", "variance"], rows)?;
    run.json("fit.json", &study.fit)?;
    let e = study.fit.slope;
    run.check(
        "exponent",
        e >= range.0 && e <= range.1,
        format!("fitted exponent {e:.4}, accepted [{}, {}]", range.0, range.1),
    );
    run.finish()
}

pub fn spectrum(ctx: &Context, key: &str, p: SpectrumArgs) -> Result<bool> {
    let (res, k) = usage((|| Ok((resolve_domain(&p.domain)?, p.k.unwrap_or(100))))())?;
    let d = res.domain.dim();
    let tol = p.weyl_tol.unwrap_or(if d == 2 { 0.10 } else { 0.15 });
    let mut run = ctx.open(key, &p)?;
    let fp = run.stage("factorize", || factor(res.domain))?;
    let basis = run.stage("eigen", || Ok(spectral::eigendecompose(&fp, k)?))?;
    let eigs = basis.eigenvalues();
    run.csv("eigenvalues.csv", &["j", "lambda"], eigs.iter().enumerate().map(|(j, l)| vec![(j + 1).to_string(), num(*l)]))?;
    let n = fp.n();
    let data: Vec<f64> = (0..basis.len()).flat_map(|j| basis.vector(j)).collect();
    let meta = json!({
        "domain": res.spec,
        "ordering": "array[j][r]: eigenvector j at row r of R_h (rows.csv), normalized so h^d sum u^2 = 1",
        "max_relative_residual": basis.max_relative_residual,
        "orthonormality_error": basis.orthonormality_error,
    });
    run.raw("eigenvectors", &[basis.len(), n], &data, meta)?;
    points_csv(&mut run, fp.domain())?;
    run.check(
        "eigen_residual",
        basis.max_relative_residual <= spectral::EIGEN_RELATIVE_TOL,
        format!("max relative residual {:e}", basis.max_relative_residual),
    );
    if k >= 60 {
        let fit = spectral::weyl_fit(eigs, d, None)?;
        let rel = (fit.slope - fit.expected).abs() / fit.expected;
        run.json("weyl.json", &fit)?;
        run.check("weyl_slope", rel <= tol, format!("slope {:.4} vs {:.4} (relative {rel:.3}, tol {tol})", fit.slope, fit.expected));
    }
    run.finish()
}

pub fn pair(ctx: &Context, key: &str, p: PairArgs) -> Result<bool> {
    let (f, d, hs, a) = usage((|| {
        let d = p.d.unwrap_or(4);
        let f = TestFunction::named(p.f.as_deref().unwrap_or("bump"), d)?;
        let hs = parse_spacings(p.h_list.as_deref().unwrap_or("1/16,1/32,1/64"))?;
        if hs.len() < 2 || hs.windows(2).any(|w| w[1] >= w[0]) {
            bail!("--h-list needs at least two decreasing spacings");
        }
        Ok((f, d, hs, p.half_side.unwrap_or(0.5)))
    })())?;
    let mut run = ctx.open(key, &p)?;
    let mut vars = Vec::with_capacity(hs.len());
    for &h in &hs {
        let dom = usage(cube(d, a, h))?;
        vars.push(run.stage(&format!("solve h={h}"), || Ok(spectral::pairing_variance_even_box(&dom, &f)?))?);
    }
    let diffs: Vec<f64> = vars.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let rows = hs.iter().enumerate().map(|(i, h)| {
        let diff = if i == 0 { String::new() } else { num(diffs[i - 1]) };
        vec![num(*h), num(vars[i]), diff]
    });
    run.csv("variance.csv", &["h", "variance", "difference"], rows)?;
    for i in 1..diffs.len() {
        let ratio = diffs[i] / diffs[i - 1];
        run.check(&format!("shrink {}", i), ratio < 0.7, format!("difference ratio {ratio:.4}"));
    }
    if p.cross_check.unwrap_or(false) {
        let h = hs[0];
        let dom = cube(d, a, h)?;
        let fv = f.on_rows(&dom);
        let fp = run.stage("factorize cross-check", || factor(dom))?;
        let pv = run.stage("cross-check", || Ok(spectral::pairing_variance_support(&fp, &fv)?))?;
        let rel_even = (pv.variance - vars[0]).abs() / pv.variance.abs();
        run.json("cross_check.json", &json!({"h": h, "green": pv.variance, "split_form": pv.split_form, "even_box": vars[0]}))?;
        run.check("green_vs_solver", pv.relative_difference <= 1e-8, format!("relative difference {:e}", pv.relative_difference));
        run.check("green_vs_even_box", rel_even <= 1e-8, format!("relative difference {rel_even:e}"));
    }
    run.finish()
}

pub fn thomee(ctx: &Context, key: &str, p: ThomeeArgs) -> Result<bool> {
    let (problem, hs) = usage((|| {
        let shape = p.shape.as_deref().unwrap_or("ball");
        if shape != "ball" {
            bail!("the manufactured problem is posed on the ball");
        }
        let d = p.d.unwrap_or(2);
        let hs = parse_spacings(p.h.as_deref().unwrap_or("1/8,1/16,1/32,1/64"))?;
        if hs.len() < 3 || hs.windows(2).any(|w| w[1] >= w[0]) {
            bail!("--h needs at least three decreasing spacings");
        }
        Ok((thomee::manufactured_disk(d)?, hs))
    })())?;
    let mut run = ctx.open(key, &p)?;
    let table = run.stage("convergence", || Ok(thomee::convergence_study(&problem, &hs)?))?;
    let rows = table
        .rows
        .iter()
        .map(|r| vec![num(r.h), num(r.error_grid), num(r.error_boundary), num(r.bound), num(r.residual)]);
    run.csv("convergence.csv", &["h", "error_grid", "error_boundary", "bound", "residual"], rows)?;
    run.json(
        "summary.json",
        &json!({
            "fitted_order": table.fitted_order,
            "fitted_constant": table.fitted_constant,
            "monotone": table.monotone,
            "within_bound": table.within_bound,
            "pass": table.pass,
            "failures": table.failures,
        }),
    )?;
    run.check("monotone", table.monotone, "grid error strictly decreasing");
    run.check("order", table.fitted_order >= 0.5, format!("fitted order {:.4}", table.fitted_order));
    run.check("bound", table.within_bound, format!("single fitted constant {:.4e}", table.fitted_constant));
    run.finish()
}

fn symmetric_orbit(x: &[i32]) -> Vec<Vec<i32>> {
    let r = x.iter().map(|v| v.abs()).max().unwrap_or(0);
    let mut key: Vec<i32> = x.iter().map(|v| v.abs()).collect();
    key.sort_unstable_by(|a, b| b.cmp(a));
    infvol::orbits(x.len(), r)
        .into_iter()
        .find(|(rep, _)| {
            let mut k: Vec<i32> = rep.iter().map(|v| v.abs()).collect();
            k.sort_unstable_by(|a, b| b.cmp(a));
            k == key
        })
        .map(|(_, members)| members)
        .unwrap_or_else(|| vec![x.to_vec()])
}

pub fn infvol_green(ctx: &Context, key: &str, p: InfGreenArgs) -> Result<bool> {
    let (x, method) = usage((|| {
        let d = p.d.unwrap_or(5);
        let x: Vec<i32> = match &p.x {
            Some(s) => parse_list(s)?,
            None => vec![0; d],
        };
        if x.len() != d {
            bail!("--x needs {d} coordinates");
        }
        if d <= 4 {
            bail!("the infinite-volume covariance is finite only for d >= 5");
        }
        let method = p.method.clone().unwrap_or_else(|| "both".into());
        if !matches!(method.as_str(), "fourier" | "walk" | "both") {
            bail!("--method must be fourier, walk or both");
        }
        Ok((x, method))
    })())?;
    let d = x.len();
    let mut run = ctx.open(key, &p)?;
    let mut row = vec![x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")];
    let fourier = if method != "walk" {
        Some(run.stage("fourier", || Ok(infvol::green_infinite_fourier(&x, FourierPlan::default())?))?)
    } else {
        None
    };
    let walk = if method != "fourier" {
        let cfg = WalkConfig::new(d, p.walks.unwrap_or(1_000_000), p.steps.unwrap_or(200), ctx.seed);
        let group = vec![symmetric_orbit(&x)];
        Some(run.stage("walk", || Ok(infvol::walk_estimate_pooled(&cfg, &group)?))?)
    } else {
        None
    };
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    row.extend([
        opt(fourier.as_ref().map(|f| f.value)),
        opt(fourier.as_ref().map(|f| f.quadrature_error)),
        opt(walk.as_ref().map(|w| w.estimates[0].mean)),
        opt(walk.as_ref().map(|w| w.estimates[0].standard_error)),
        opt(walk.as_ref().map(|w| w.tail_bound)),
    ]);
    run.csv(
        "green.csv",
        &["x", "fourier", "quadrature_error", "walk_mean", "walk_standard_error", "tail_bound"],
        [row],
    )?;
    if let Some(f) = &fourier {
        if x.iter().all(|&v| v == 0) {
            run.check("lower_bound", f.value >= 1.0, format!("G(0,0) = {:.8}", f.value));
        }
    }
    if let (Some(f), Some(w)) = (&fourier, &walk) {
        let e = &w.estimates[0];
        let diff = f.value - e.mean;
        let tol = 3.0 * e.standard_error + f.quadrature_error + w.tail_bound;
        // The walk sum stops at M steps, so it undershoots by at most the tail.
        let pass = diff >= -(3.0 * e.standard_error + f.quadrature_error) && diff.abs() <= tol;
        run.check("agreement", pass, format!("fourier - walk = {diff:.3e}, allowed {tol:.3e}"));
    }
    run.finish()
}

pub fn infvol_eta2(ctx: &Context, key: &str, p: Eta2Args) -> Result<bool> {
    let (d, radii) = usage((|| {
        let d = p.d.unwrap_or(5);
        let radii = parse_range(p.radii.as_deref().unwrap_or("5..15"))?;
        if d <= 4 {
            bail!("the infinite-volume covariance is finite only for d >= 5");
        }
        if radii.is_empty() || radii[0] <= 0 || radii.windows(2).any(|w| w[1] <= w[0]) {
            bail!("--radii must be positive and increasing");
        }
        Ok((d, radii))
    })())?;
    let mut run = ctx.open(key, &p)?;
    let trend = run.stage("fourier", || Ok(infvol::eta2_trend(d, &radii, FourierPlan::default())?))?;
    let rows = trend.rows.iter().map(|r| vec![num(r.radius), num(r.green), num(r.ratio), num(r.quadrature_error)]);
    run.csv("eta2.csv", &["radius", "green", "ratio", "quadrature_error"], rows)?;
    run.json("summary.json", &json!({"spread": trend.spread}))?;
    run.check("positive", trend.rows.iter().all(|r| r.ratio > 0.0), "ratio positive at every radius");
    run.finish()
}

pub fn infvol_variance(ctx: &Context, key: &str, p: VarianceArgs) -> Result<bool> {
    let (f, d, ns) = usage((|| {
        let f = SchwartzTest::named(p.f.as_deref().unwrap_or("gaussian"))?;
        let d = p.d.unwrap_or(5);
        if d <= 4 {
            bail!("the scaling variance is computed for d >= 5");
        }
        let ns: Vec<usize> = parse_list(p.n.as_deref().unwrap_or("4,8,16"))?;
        if ns.is_empty() || ns.windows(2).any(|w| w[1] <= w[0]) {
            bail!("--N needs increasing lattice sizes");
        }
        Ok((f, d, ns))
    })())?;
    let mut run = ctx.open(key, &p)?;
    let limit = infvol::inv_laplacian_norm(&f, d)?;
    let mut values = Vec::new();
    for &n in &ns {
        values.push(run.stage(&format!("variance N={n}"), || Ok(infvol::scaling_variance(&f, n, d, FourierPlan::default())?))?);
    }
    let rows = ns.iter().zip(&values).map(|(n, v)| {
        vec![
            n.to_string(),
            num(v.value),
            num(v.error_budget),
            num(v.quadrature_error),
            num(v.poisson_correction),
            num(v.truncation),
            num((v.value - limit.closed_form).abs()),
        ]
    });
    run.csv(
        "variance.csv",
        &["N", "value", "error_budget", "quadrature_error", "poisson_correction", "truncation", "distance_to_limit"],
        rows,
    )?;
    run.json("limit.json", &limit)?;
    let dists: Vec<f64> = values.iter().map(|v| (v.value - limit.closed_form).abs()).collect();
    let last = dists[dists.len() - 1];
    run.check(
        "within_5_percent",
        last <= 0.05 * limit.closed_form,
        format!("|V(N={}) - limit| = {last:.4e}, limit {:.6}", ns[ns.len() - 1], limit.closed_form),
    );
    run.check("decreasing", dists.windows(2).all(|w| w[1] < w[0]), "distance to the limit decreasing in N");
    run.finish()
}

pub fn b2star(ctx: &Context, key: &str, p: B2Args) -> Result<bool> {
    let (res, k) = usage((|| Ok((resolve_domain(&p.domain)?, p.k.unwrap_or(4))))())?;
    if k == 0 {
        return Err(anyhow::Error::new(Usage("--K must be at least 1".into())));
    }
    let mut run = ctx.open(key, &p)?;
    let report = run.stage("verify", || Ok(verify_b2star(&res.domain, k)?))?;
    let d = res.domain.dim();
    let mut header: Vec<String> = (0..d).map(|i| format!("k{i}")).collect();
    header.extend(["axis".into(), "sign".into(), "step".into()]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = report.witnesses.iter().map(|w| {
        w.point.iter().map(|v| v.to_string()).chain([w.axis.to_string(), w.sign.to_string(), w.step.to_string()]).collect::<Vec<_>>()
    });
    run.csv("witnesses.csv", &header, rows)?;
    run.json("failures.json", &report.failures)?;
    run.check(
        "b2star",
        report.pass,
        format!("{} near-boundary points checked, {} without a witness", report.checked, report.failures.len()),
    );
    run.finish()
}
