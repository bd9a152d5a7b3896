use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use serde::Serialize;

use nonlocal_lab::config::{DriftSpec, TauSpec};
use nonlocal_lab::grid::read_csv;
use nonlocal_lab::harness::{write_file, Table};
use nonlocal_lab::regularity::{centers_in_ball, holder_certificate, point_estimate, HolderConfig, TailFitConfig};
use nonlocal_lab::{run_recipe, Error, ExperimentConfig, GridField, Result};

#[derive(Parser, Debug)]
#[command(name = "nonlocal-lab", version, about = "Experiments with nonlocal extremal operators")]
struct Cli {
    /// Key-value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extremal operators on smooth test fields at random points (eval-suite).
    Eval(GridArgs),
    /// Dirichlet problems on the unit ball (solve-suite).
    Solve(GridArgs),
    /// Interior and exterior barrier certificates (barrier-suite).
    BarrierCheck(GridArgs),
    /// Convex envelopes and cube covers of synthetic dips (abp-suite).
    Abp(GridArgs),
    /// Hölder and tail measurements on a stored solution field.
    Regularity(RegularityArgs),
    /// Any recipe over the configured grid; defaults to the σ → 2 regularity sweep.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Default, Clone)]
struct GridArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    sigma: Vec<f64>,
    #[arg(long, conflicts_with = "tau_gap")]
    tau: Vec<f64>,
    /// τ = min(σ − m, tau_cap) for each given m.
    #[arg(long)]
    tau_gap: Vec<f64>,
    #[arg(long)]
    lambda: Vec<f64>,
    #[arg(long = "Lambda")]
    lambda_hi: Vec<f64>,
    #[arg(long, conflicts_with = "b_frac")]
    b: Vec<f64>,
    /// b as a fraction of the largest value allowed by H3.
    #[arg(long)]
    b_frac: Vec<f64>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    spacing: Option<f64>,
    /// Recipe-specific setting, e.g. `--set method=policy`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    recipe: Option<String>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args, Debug)]
struct RegularityArgs {
    /// Field written by `solve --set save_solutions=true`.
    #[arg(long)]
    solution: PathBuf,
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    tau: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long = "Lambda", default_value_t = 2.0)]
    lambda_hi: f64,
    #[arg(long, default_value_t = 0.0)]
    b: f64,
    /// Bound on the right-hand side.
    #[arg(long, default_value_t = 0.0)]
    c0: f64,
    #[arg(long, default_value_t = 1.0)]
    eps0: f64,
    #[arg(long, default_value_t = 8)]
    center_stride: usize,
    #[arg(long, default_value_t = 0.5)]
    r0: f64,
}

fn apply_grid(cfg: &mut ExperimentConfig, g: GridArgs) -> Result<()> {
    if let Some(d) = g.dim {
        cfg.dim = d;
    }
    if !g.sigma.is_empty() {
        cfg.sigma = g.sigma;
    }
    if !g.tau.is_empty() {
        cfg.tau = TauSpec::Values(g.tau);
    } else if !g.tau_gap.is_empty() {
        cfg.tau = TauSpec::Gaps(g.tau_gap);
    }
    if !g.lambda.is_empty() {
        cfg.lambda_lo = g.lambda;
    }
    if !g.lambda_hi.is_empty() {
        cfg.lambda_hi = g.lambda_hi;
    }
    if !g.b.is_empty() {
        cfg.b = DriftSpec::Values(g.b);
    } else if !g.b_frac.is_empty() {
        cfg.b = DriftSpec::Fractions(g.b_frac);
    }
    if let Some(r) = g.radius {
        cfg.radius = r;
    }
    if let Some(h) = g.spacing {
        cfg.spacing = h;
    }
    for kv in g.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set {kv}: expected KEY=VALUE")))?;
        cfg.extra.insert(k.trim().to_string(), vec![v.trim().to_string()]);
    }
    Ok(())
}

fn base_config(cli: &Cli, recipe: Option<&str>) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(r) = recipe {
        cfg.recipe = r.to_string();
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

/// σ ∈ {1.2, 1.5, 1.9, 1.99}, τ = σ − 0.5, b at half the H3 bound, h = 1/128.
fn default_sweep(cfg: &mut ExperimentConfig) {
    cfg.recipe = "regularity-sweep".into();
    cfg.sigma = vec![1.2, 1.5, 1.9, 1.99];
    cfg.tau = TauSpec::Gaps(vec![0.5]);
    cfg.b = DriftSpec::Fractions(vec![0.5]);
    cfg.spacing = 1.0 / 128.0;
}

fn run_grid(cli: &Cli, recipe: Option<&str>, grid: GridArgs, sweep: bool) -> Result<u8> {
    let mut cfg = base_config(cli, recipe)?;
    if sweep && cli.config.is_none() && recipe.is_none() {
        default_sweep(&mut cfg);
    }
    apply_grid(&mut cfg, grid)?;
    cfg.validate()?;
    let summary = run_recipe(&cfg)?;
    info!(
        "{}: {} ok, {} skipped, {} failed; output in {}",
        summary.recipe,
        summary.ok,
        summary.skipped,
        summary.failed,
        cfg.out.display()
    );
    println!("{}", serde_json::to_string(&summary).map_err(|e| Error::Format(e.to_string()))?);
    Ok(if summary.hard_failure() { 2 } else { 0 })
}

#[derive(Serialize)]
struct RegularitySummary {
    kappa: f64,
    fitted_eps: Option<f64>,
    tail_fit_r2: Option<f64>,
    tail_precondition_max: f64,
    shift: f64,
    alpha_min: Option<f64>,
    alpha_median: Option<f64>,
    c_emp: Option<f64>,
    unfitted: usize,
}

fn run_regularity(cli: &Cli, a: &RegularityArgs) -> Result<u8> {
    let file = File::open(&a.solution).map_err(|e| Error::Config(format!("cannot open {}: {e}", a.solution.display())))?;
    let u = read_csv(BufReader::new(file), None)?;
    let p = nonlocal_lab::EllipticityParams::new(a.sigma, a.tau, a.lambda, a.lambda_hi, a.b, u.dim());
    p.validate()?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out).map_err(|e| Error::Config(format!("cannot create {}: {e}", out.display())))?;

    let centers = centers_in_ball(&u, 0.5, a.center_stride);
    let cert = holder_certificate(&u, &p, a.c0, &centers, &HolderConfig { r0: a.r0, ..Default::default() })?;
    let scale = u.sup_norm() + a.c0;
    let f = |x: Option<f64>| x.map(|v| format!("{v:.10e}")).unwrap_or_default();
    let centers_table = Table {
        name: "regularity-centers".into(),
        header: "center0,center1,alpha_fit,c_emp,fit_r2".into(),
        rows: cert
            .traces
            .iter()
            .map(|t| {
                format!("{:.10e},{:.10e},{},{},{}", t.center[0], t.center[1], f(t.fitted_alpha), f(t.c_emp(scale)), f(t.fit_r2))
            })
            .collect(),
    };

    // The tail fit needs a nonnegative field; constants do not change the operators.
    let (lo, _) = u.range();
    let shift = (-lo).max(0.0);
    let shifted = GridField::from_values(u.dim(), u.box_radius(), u.spacing(), u.values().iter().map(|v| v + shift).collect(), match u.tail() {
        nonlocal_lab::Tail::Constant(c) => nonlocal_lab::Tail::Constant(c + shift),
        t => t.clone(),
    })?;
    let tail = point_estimate(&shifted, &p, a.c0, a.eps0, &TailFitConfig { strict_precondition: false, ..Default::default() })?;
    let tail_table = Table {
        name: "tail-fit".into(),
        header: "threshold,measure".into(),
        rows: tail.thresholds.iter().zip(&tail.measures).map(|(t, m)| format!("{t:.10e},{m:.10e}")).collect(),
    };
    for t in [&centers_table, &tail_table] {
        write_file(&out.join(format!("{}.csv", t.name)), t.to_csv().as_bytes())?;
    }
    let summary = RegularitySummary {
        kappa: tail.kappa,
        fitted_eps: tail.fitted_eps,
        tail_fit_r2: tail.fit_r2,
        tail_precondition_max: tail.precondition_max,
        shift,
        alpha_min: cert.alpha_min,
        alpha_median: cert.alpha_median,
        c_emp: cert.c_emp,
        unfitted: cert.unfitted,
    };
    let mut json = serde_json::to_vec_pretty(&summary).map_err(|e| Error::Format(e.to_string()))?;
    json.push(b'\n');
    write_file(&out.join("summary.json"), &json)?;
    println!("{}", String::from_utf8_lossy(&json).trim_end());
    Ok(0)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) | Error::Format(_) | Error::Io(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors are configuration errors; --help and --version are not
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Eval(g) => run_grid(&cli, Some("eval-suite"), g.clone(), false),
        Command::Solve(g) => run_grid(&cli, Some("solve-suite"), g.clone(), false),
        Command::BarrierCheck(g) => run_grid(&cli, Some("barrier-suite"), g.clone(), false),
        Command::Abp(g) => run_grid(&cli, Some("abp-suite"), g.clone(), false),
        Command::Sweep(s) => run_grid(&cli, s.recipe.as_deref(), s.grid.clone(), true),
        Command::Regularity(a) => run_regularity(&cli, a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
