//! `membrane`: experiment recipes for the discrete membrane model.

mod config;
mod output;
mod recipes;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "membrane", version, about = "Experiment recipes for the discrete membrane model")]
struct Cli {
    /// TOML config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $MEMBRANE_OUT/<recipe> or membrane-out/<recipe>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 1 gives bit-identical reruns.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replace the files of a previous run in the output directory.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Green's function columns or the full table on a lattice domain.
    Green(GreenArgs),
    /// Exact samples of the field.
    Sample(SampleArgs),
    /// Piecewise-linear interpolation of one sample on a mesh or at points.
    Interpolate(InterpolateArgs),
    /// Rescaled maxima across lattice sizes.
    MaxScaling(MaxScalingArgs),
    /// Exact increment variances over random point pairs.
    MomentCheck(MomentArgs),
    /// Low eigenpairs and the Weyl-law fit.
    Spectrum(SpectrumArgs),
    /// Pairing variance against a test function under refinement.
    Pair(PairArgs),
    /// Manufactured-solution convergence study.
    Thomee(ThomeeArgs),
    /// Infinite-volume computations in d >= 5.
    #[command(subcommand)]
    Infvol(InfvolCommand),
    /// Boundary-layer ray property check.
    B2star(B2Args),
    /// List the recipes and what each one checks.
    Recipes,
}

#[derive(Subcommand, Debug)]
enum InfvolCommand {
    /// G(0, x) by Fourier quadrature and/or random walks.
    Green(InfGreenArgs),
    /// The ratio G(0, r e_1) r^{d-4} along an axis.
    Eta2(Eta2Args),
    /// Variance of the rescaled field against a Gaussian.
    Variance(VarianceArgs),
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DomainArgs {
    /// Shape file (TOML: kind = "box" with bounds, or kind = "ball" with center and radius).
    #[arg(long)]
    pub domain: Option<PathBuf>,
    /// box ([-1,1]^d) or ball (unit ball).
    #[arg(long)]
    pub shape: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Lattice size, h = 1/N.
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<usize>,
    /// Spacing such as 1/16 (alternative to --N).
    #[arg(long)]
    pub h: Option<String>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct GreenArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub domain: DomainArgs,
    /// Lattice points x separated by ';' (default: the full table).
    #[arg(long)]
    pub columns: Option<String>,
    /// Largest |R_h| for the full table.
    #[arg(long)]
    pub cap: Option<usize>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub domain: DomainArgs,
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct InterpolateArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<usize>,
    /// Points t separated by ';' (default: a mesh).
    #[arg(long)]
    pub points: Option<String>,
    /// Mesh cells per lattice cell along each axis.
    #[arg(long)]
    pub refine: Option<usize>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MaxScalingArgs {
    #[arg(long)]
    pub d: Option<usize>,
    /// Comma list of lattice sizes.
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<String>,
    #[arg(long)]
    pub count: Option<usize>,
    /// Largest accepted Kolmogorov-Smirnov distance between consecutive sizes.
    #[arg(long)]
    pub ks_max: Option<f64>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MomentArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Accepted exponent range "lo,hi".
    #[arg(long)]
    pub exponent: Option<String>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub domain: DomainArgs,
    #[arg(long)]
    pub k: Option<usize>,
    /// Relative tolerance of the Weyl slope against 4/d.
    #[arg(long)]
    pub weyl_tol: Option<f64>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PairArgs {
    /// Named test function (bump).
    #[arg(long)]
    pub f: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Comma list of spacings, coarse to fine.
    #[arg(long)]
    pub h_list: Option<String>,
    /// Half side of the cube [-a, a]^d.
    #[arg(long)]
    pub half_side: Option<f64>,
    /// Cross-check the coarsest spacing on the full domain.
    #[arg(long)]
    pub cross_check: Option<bool>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ThomeeArgs {
    #[arg(long)]
    pub shape: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Comma list of spacings, coarse to fine.
    #[arg(long)]
    pub h: Option<String>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct InfGreenArgs {
    #[arg(long)]
    pub d: Option<usize>,
    /// Lattice point, comma separated.
    #[arg(long)]
    pub x: Option<String>,
    /// fourier, walk or both.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub walks: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Eta2Args {
    #[arg(long)]
    pub d: Option<usize>,
    /// "5..15" or a comma list.
    #[arg(long)]
    pub radii: Option<String>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct VarianceArgs {
    /// Named test function (gaussian).
    #[arg(long)]
    pub f: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<String>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct B2Args {
    #[command(flatten)]
    #[serde(flatten)]
    pub domain: DomainArgs,
    #[arg(long = "K")]
    #[serde(rename = "K")]
    pub k: Option<usize>,
}

#[derive(Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default)]
struct Global {
    out: Option<PathBuf>,
    threads: Option<usize>,
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<recipes::Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    use recipes::usage;
    if let Command::Recipes = cli.command {
        for line in recipes::list_recipes() {
            println!("{line}");
        }
        return Ok(true);
    }
    let file = match &cli.config {
        Some(p) => Some(usage(config::load_file(p))?),
        None => None,
    };
    let flags = Global { out: cli.out.clone(), threads: cli.threads, seed: cli.seed };
    let top = file.as_ref().map(|f| {
        let mut m = f.as_object().cloned().unwrap_or_default();
        m.retain(|k, _| matches!(k.as_str(), "out" | "threads" | "seed"));
        serde_json::Value::Object(m)
    });
    let global: Global = usage(config::merge(&flags, top.as_ref()))?;
    if let Some(t) = global.threads {
        usage(
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build_global()
                .map_err(|e| anyhow::anyhow!("thread pool: {e}")),
        )?;
    }
    let ctx = recipes::Context {
        seed: global.seed.unwrap_or(0),
        out: global.out.clone(),
        force: cli.force,
        global: serde_json::to_value(&global)?,
    };
    macro_rules! dispatch {
        ($key:expr, $args:expr, $f:path) => {{
            let merged = usage(config::merge(&$args, file.as_ref().and_then(|f| config::section(f, $key))))?;
            $f(&ctx, $key, merged)
        }};
    }
    match cli.command {
        Command::Green(a) => dispatch!("green", a, recipes::green),
        Command::Sample(a) => dispatch!("sample", a, recipes::sample),
        Command::Interpolate(a) => dispatch!("interpolate", a, recipes::interpolate),
        Command::MaxScaling(a) => dispatch!("max-scaling", a, recipes::max_scaling),
        Command::MomentCheck(a) => dispatch!("moment-check", a, recipes::moment_check),
        Command::Spectrum(a) => dispatch!("spectrum", a, recipes::spectrum),
        Command::Pair(a) => dispatch!("pair", a, recipes::pair),
        Command::Thomee(a) => dispatch!("thomee", a, recipes::thomee),
        Command::Infvol(InfvolCommand::Green(a)) => dispatch!("infvol.green", a, recipes::infvol_green),
        Command::Infvol(InfvolCommand::Eta2(a)) => dispatch!("infvol.eta2", a, recipes::infvol_eta2),
        Command::Infvol(InfvolCommand::Variance(a)) => dispatch!("infvol.variance", a, recipes::infvol_variance),
        Command::B2star(a) => dispatch!("b2star", a, recipes::b2star),
        Command::Recipes => unreachable!(),
    }
}
