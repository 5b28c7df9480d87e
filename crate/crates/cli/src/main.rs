//! `rpcmi`: staircase MI benchmark, relative-parameter sweeps, analytic oracles,
//! ratio curves, plots, and the acceptance suite.
//!
//! Exit codes: 0 success (exploded baselines are data, not failures), 1 invalid
//! arguments or config, 2 runtime failure or a failed `verify`.

mod config;
mod output;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rpcmi::harness::{oracle_benchmark, run_benchmark, run_sweep};
use rpcmi::tasks::{chi2_oracle_1d, relative_ratio_curve, rho_for_mi};
use rpcmi::{bounds, format_sig9, BenchmarkConfig};
use serde::Serialize;

use config::{load, OracleConfig, Overrides, RatioCurveConfig, SweepConfig};
use output::write_atomic;

#[derive(Parser)]
#[command(name = "rpcmi", version, about = "Relative predictive coding MI benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one critic over the MI staircase; writes trace.csv and summary.json.
    Bench(BenchArgs),
    /// Run the staircase for every (alpha, beta, gamma) cell; writes sweep.csv.
    Sweep(SweepArgs),
    /// Print and write analytic ground truth: correlations, chi-squared values, bounds.
    Oracle(OracleArgs),
    /// Tabulate the relative density ratio p / (beta p + (1 - beta) q).
    RatioCurve(RatioArgs),
    /// Run the acceptance criteria and report one line per criterion.
    Verify(VerifyArgs),
    /// Render a trace CSV as SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct Common {
    /// JSON config; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "rpcmi-out")]
    out: PathBuf,
}

#[derive(Args)]
struct ParamArgs {
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// Master seed; overrides the config.
    #[arg(long, env = "MI_CONTRAST_SEED")]
    seed: Option<u64>,
    /// rpc, dv, nwj, js, cpc or smile.
    #[arg(long)]
    objective: Option<String>,
    #[command(flatten)]
    params: ParamArgs,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            objective: self.objective.clone(),
            alpha: self.params.alpha,
            beta: self.params.beta,
            gamma: self.params.gamma,
        }
    }
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    run: RunArgs,
    /// Score with the analytic optimal critic instead of training.
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    run: RunArgs,
    /// Worker threads for the cells (default: all cores).
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    common: Common,
    /// MI levels in nats (repeatable).
    #[arg(long = "mi", allow_negative_numbers = true)]
    mi: Vec<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args)]
struct RatioArgs {
    #[command(flatten)]
    common: Common,
    /// Mixture weight (repeatable).
    #[arg(long, allow_negative_numbers = true)]
    beta: Vec<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Comma-separated criterion ids, e.g. `1,2,7`.
    #[arg(long, value_delimiter = ',')]
    only: Vec<u8>,
}

#[derive(Args)]
struct PlotArgs {
    trace: PathBuf,
    svg: PathBuf,
    /// Also write the plotted series, with the moving-average column, as CSV.
    #[arg(long)]
    data: Option<PathBuf>,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome = Result<(), Failure>;

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn runtime_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Bench(a) => bench(a),
        Command::Sweep(a) => sweep(a),
        Command::Oracle(a) => oracle(a),
        Command::RatioCurve(a) => ratio_curve(a),
        Command::Verify(a) => verify(a),
        Command::Plot(a) => plot_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Outcome {
    write_atomic(&dir.join(name), contents.as_ref()).map_err(runtime_err)
}

fn to_json<T: Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(runtime_err)
}

fn bench(a: BenchArgs) -> Outcome {
    let mut cfg: BenchmarkConfig = load(a.common.config.as_deref()).map_err(config_err)?;
    a.run.overrides().apply(&mut cfg).map_err(config_err)?;
    cfg.validate().map_err(config_err)?;
    let trace = if a.oracle {
        oracle_benchmark(&cfg)
    } else {
        run_benchmark(&cfg)
    }
    .map_err(runtime_err)?;
    let out = &a.common.out;
    write(out, "config.json", to_json(&cfg)?)?;
    write(out, "trace.csv", trace.to_csv_string())?;
    write(out, "summary.json", trace.summary_json().map_err(runtime_err)? + "\n")?;
    println!("{}: {} steps, {} non-finite", trace.objective, trace.rows.len(), trace.non_finite_steps);
    for l in &trace.summaries {
        println!(
            "  MI {:>5}: bias {:>12} variance {:>12} ({} finite)",
            format_sig9(l.true_mi),
            format_sig9(l.bias),
            format_sig9(l.variance),
            l.finite
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn sweep(a: SweepArgs) -> Outcome {
    let mut cfg: SweepConfig = load(a.common.config.as_deref()).map_err(config_err)?;
    a.run.overrides().apply(&mut cfg.base).map_err(config_err)?;
    cfg.base.validate().map_err(config_err)?;
    cfg.grid.validate().map_err(config_err)?;
    if a.parallel == Some(0) {
        return Err(config_err(anyhow!("--parallel must be at least 1")));
    }
    let report = run_sweep(&cfg.grid, &cfg.base, a.parallel).map_err(runtime_err)?;
    let out = &a.common.out;
    write(out, "config.json", to_json(&cfg)?)?;
    write(out, "sweep.csv", report.to_csv_string())?;
    println!("{} cells; wrote {}", report.cells.len(), out.join("sweep.csv").display());
    Ok(())
}

#[derive(Serialize)]
struct OracleReport {
    levels: Vec<LevelRow>,
    chi2: Vec<Chi2Row>,
    bounds: Option<rpcmi::BoundReport>,
}

#[derive(Serialize)]
struct LevelRow {
    mi: f64,
    dim: usize,
    rho: f64,
}

#[derive(Serialize)]
struct Chi2Row {
    rho: f64,
    quadrature: f64,
    closed_form: f64,
}

fn oracle(a: OracleArgs) -> Outcome {
    let mut cfg: OracleConfig = load(a.common.config.as_deref()).map_err(config_err)?;
    if !a.mi.is_empty() {
        cfg.mi_levels = a.mi.clone();
    }
    cfg.dim = a.dim.unwrap_or(cfg.dim);
    let p = &mut cfg.params;
    p.alpha = a.params.alpha.unwrap_or(p.alpha);
    p.beta = a.params.beta.unwrap_or(p.beta);
    p.gamma = a.params.gamma.unwrap_or(p.gamma);
    cfg.validate().map_err(config_err)?;

    let mut report = OracleReport {
        levels: Vec::new(),
        chi2: Vec::new(),
        bounds: None,
    };
    for &mi in &cfg.mi_levels {
        let rho = rho_for_mi(mi, cfg.dim).map_err(config_err)?;
        println!("mi={} dim={} rho={}", format_sig9(mi), cfg.dim, format_sig9(rho));
        report.levels.push(LevelRow { mi, dim: cfg.dim, rho });
    }
    for &rho in &cfg.chi2_rhos {
        let quadrature = chi2_oracle_1d(rho).map_err(runtime_err)?;
        let closed_form = rho * rho / (1.0 - rho * rho);
        println!(
            "chi2 rho={} quadrature={} closed_form={}",
            format_sig9(rho),
            format_sig9(quadrature),
            format_sig9(closed_form)
        );
        report.chi2.push(Chi2Row {
            rho,
            quadrature,
            closed_form,
        });
    }
    // Bounds need beta, gamma > 0; other triples simply omit them.
    if let Ok(b) = bounds(&cfg.params, cfg.batch_n, cfg.batch_m) {
        println!(
            "bounds j_upper={} critic_range=[{}, {}] var_bound={}",
            format_sig9(b.j_upper),
            format_sig9(b.critic_lo),
            format_sig9(b.critic_hi),
            format_sig9(b.var_bound)
        );
        report.bounds = Some(b);
    }
    write(&a.common.out, "oracle.json", to_json(&report)?)
}

fn ratio_curve(a: RatioArgs) -> Outcome {
    let mut cfg: RatioCurveConfig = load(a.common.config.as_deref()).map_err(config_err)?;
    if !a.beta.is_empty() {
        cfg.betas = a.beta.clone();
    }
    cfg.validate().map_err(config_err)?;
    let grid = cfg.grid();
    let curves = cfg
        .betas
        .iter()
        .map(|&b| relative_ratio_curve(b, &grid))
        .collect::<Result<Vec<_>, _>>()
        .map_err(runtime_err)?;
    let mut csv = String::from("x");
    for b in &cfg.betas {
        csv.push_str(&format!(",r_{}", format_sig9(*b)));
    }
    csv.push('\n');
    for (i, x) in grid.iter().enumerate() {
        csv.push_str(&format_sig9(*x));
        for c in &curves {
            csv.push(',');
            csv.push_str(&format_sig9(c[i]));
        }
        csv.push('\n');
    }
    for (b, c) in cfg.betas.iter().zip(&curves) {
        let max = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let cap = if *b > 0.0 { format_sig9(1.0 / b) } else { "inf".into() };
        println!("beta={} max={} cap={cap}", format_sig9(*b), format_sig9(max));
    }
    write(&a.common.out, "ratio_curve.csv", csv)
}

fn verify(a: VerifyArgs) -> Outcome {
    let ids = if a.only.is_empty() {
        rpcmi::acceptance::CRITERIA.to_vec()
    } else {
        a.only.clone()
    };
    if let Some(bad) = ids.iter().find(|id| !rpcmi::acceptance::CRITERIA.contains(id)) {
        return Err(config_err(anyhow!("no criterion {bad}")));
    }
    let mut failed = Vec::new();
    for id in &ids {
        let r = rpcmi::acceptance::run(*id);
        println!("{r}");
        if !r.passed {
            failed.push(*id);
        }
    }
    println!("{}/{} criteria passed", ids.len() - failed.len(), ids.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(runtime_err(anyhow!("failed criteria: {failed:?}")))
    }
}

fn plot_cmd(a: PlotArgs) -> Outcome {
    let text = std::fs::read_to_string(&a.trace)
        .with_context(|| format!("reading {}", a.trace.display()))
        .map_err(config_err)?;
    let points = plot::parse_trace(&text).map_err(config_err)?;
    let title = a.trace.display().to_string();
    write_atomic(&a.svg, plot::render_svg(&points, &title).as_bytes()).map_err(runtime_err)?;
    if let Some(data) = &a.data {
        write_atomic(data, plot::smoothed_csv(&points).as_bytes()).map_err(runtime_err)?;
    }
    Ok(())
}
