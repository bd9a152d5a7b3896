//! Named experiment recipes over a parameter grid.
//!
//! Every grid point gets its own ChaCha8 stream (seed, point index), so rows
//! are identical for any thread count. Rows are collected in grid order and
//! written once per recipe together with `summary.json`.

use std::fs;
use std::path::PathBuf;

use log::{info, warn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, GridPoint};
use crate::dirichlet::{barrier_interior, search_exterior_barrier, solve_with, SolverMethod};
use crate::dirichlet::DirichletProblem;
use crate::envelope::{abp_cover, convex_envelope, CoverConfig, SUPPORT_RADIUS};
use crate::error::{Error, Result};
use crate::grid::{norm, ExplicitTail, GridField, Point, Tail};
use crate::nonlocal::{eval_D_tau, eval_M_L0, eval_M_L0_tilde, eval_extremal_even, KernelFamily, Sign};
use crate::params::{EllipticityParams, KernelSpec};
use crate::regularity::{centers_in_ball, holder_certificate, HolderConfig};
use crate::scheme::{Domain, SchemeOperator};

/// Smooth test fields with matching explicit tails. The Gaussian-type fields
/// are below 1e-13 outside B_8 and are declared zero there.
pub fn smooth_fields(dim: usize, radius: f64, spacing: f64) -> Result<Vec<(String, GridField)>> {
    type F = fn(Point) -> f64;
    let defs: [(&str, F, bool); 5] = [
        ("gaussian", |x| (-(x[0] * x[0] + x[1] * x[1])).exp(), true),
        ("shifted-gaussian", |x| (-2.0 * ((x[0] - 0.3).powi(2) + (x[1] + 0.2).powi(2))).exp(), true),
        ("cos-bump", |x| (2.0 * x[0]).cos() * (-0.5 * (x[0] * x[0] + x[1] * x[1])).exp(), true),
        ("lorentzian", |x| 1.0 / (1.0 + x[0] * x[0] + x[1] * x[1]), false),
        ("tilted", |x| (x[0] + 0.5 * x[1]) * (-(x[0] * x[0] + x[1] * x[1])).exp(), true),
    ];
    defs.iter()
        .map(|&(n, f, decays)| {
            let mut tail = ExplicitTail::new(n, f).with_bound(1.0);
            if decays {
                tail = tail.with_far_constant(8.0, 0.0);
            }
            Ok((n.to_string(), GridField::from_fn(dim, radius, spacing, f, Tail::Explicit(tail))?))
        })
        .collect()
}

/// sign(sin 20x₁)(1 + cos(7x₁)/2) on 1 < |x| < 2, zero elsewhere.
pub fn rough_exterior_data(dim: usize, radius: f64, spacing: f64) -> Result<GridField> {
    GridField::from_fn(dim, radius, spacing, rough, Tail::Constant(0.0))
}

fn rough(x: Point) -> f64 {
    let r = norm(x);
    if r > 1.0 && r < 2.0 {
        (20.0 * x[0]).sin().signum() * (1.0 + 0.5 * (7.0 * x[0]).cos())
    } else {
        0.0
    }
}

fn smooth_data(x: Point) -> f64 {
    (3.0 * x[0]).cos() * (1.0 + 0.5 * x[1])
}

/// −depth (1 − |x − c|²/w²)_+ on the envelope box.
pub fn synthetic_dip(dim: usize, spacing: f64, center: Point, depth: f64, width: f64) -> Result<GridField> {
    GridField::from_fn(
        dim,
        SUPPORT_RADIUS,
        spacing,
        |x| {
            let d = [x[0] - center[0], x[1] - center[1]];
            -depth * (1.0 - (d[0] * d[0] + d[1] * d[1]) / (width * width)).max(0.0)
        },
        Tail::Constant(0.0),
    )
}

pub fn parse_operator(name: &str, params: &EllipticityParams) -> Result<SchemeOperator> {
    Ok(match name {
        "l0tilde-plus" => SchemeOperator::ExtremalL0Tilde(Sign::Plus),
        "l0tilde-minus" => SchemeOperator::ExtremalL0Tilde(Sign::Minus),
        "l0-plus" => SchemeOperator::ExtremalL0(Sign::Plus),
        "l0-minus" => SchemeOperator::ExtremalL0(Sign::Minus),
        "extremal-plus" => SchemeOperator::Extremal(Sign::Plus),
        "extremal-minus" => SchemeOperator::Extremal(Sign::Minus),
        other => SchemeOperator::Family(KernelFamily::single(KernelSpec::from_name(other, *params)?)),
    })
}

pub fn parse_method(name: &str) -> Result<SolverMethod> {
    match name {
        "policy" => Ok(SolverMethod::PolicyIteration),
        "pseudo-time" => Ok(SolverMethod::PseudoTime),
        _ => Err(Error::Config(format!("unknown method `{name}` (policy, pseudo-time)"))),
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.10e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

fn param_cols(p: &EllipticityParams) -> String {
    format!("{},{},{},{},{}", fmt(p.sigma), fmt(p.tau), fmt(p.lambda_lo), fmt(p.lambda_hi), fmt(p.b))
}

const PARAM_HEADER: &str = "point,sigma,tau,lambda,Lambda,b";

/// A named CSV table.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub name: String,
    pub header: String,
    pub rows: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PointStatus {
    pub point: usize,
    pub sigma: f64,
    pub tau: f64,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub lambda_hi: f64,
    pub b: f64,
    /// "ok", "skipped" or "failed".
    pub status: String,
    pub reason: Option<String>,
    pub rows: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub recipe: String,
    pub seed: u64,
    pub points: Vec<PointStatus>,
    pub files: Vec<String>,
    pub ok: usize,
    pub skipped: usize,
    pub failed: usize,
}

impl RunSummary {
    /// Every attempted point failed.
    pub fn hard_failure(&self) -> bool {
        self.failed > 0 && self.ok == 0
    }
}

/// Rows per table plus extra files (name, contents) from one grid point.
#[derive(Default)]
struct PointOutput {
    tables: Vec<Vec<String>>,
    files: Vec<(String, String)>,
}

impl From<Vec<Vec<String>>> for PointOutput {
    fn from(tables: Vec<Vec<String>>) -> Self {
        PointOutput { tables, files: Vec::new() }
    }
}

struct Recipe {
    headers: Vec<(&'static str, String)>,
    run: fn(&ExperimentConfig, &EllipticityParams, usize, &mut ChaCha8Rng) -> Result<PointOutput>,
}

fn recipe(name: &str) -> Result<Recipe> {
    let h = |cols: &str| format!("{PARAM_HEADER},{cols}");
    Ok(match name {
        "eval-suite" => Recipe {
            headers: vec![(
                "eval-suite",
                h("field,x0,x1,m_plus,m_minus,d_tau,ml0_plus,ml0_minus,ml0t_plus,ml0t_minus,tolerance"),
            )],
            run: eval_suite,
        },
        "barrier-suite" => Recipe {
            headers: vec![(
                "barrier-suite",
                h("s_star,delta_star,interior_ok,c,alpha,exterior_verified,max_annulus_tilde,max_exterior_tilde"),
            )],
            run: barrier_suite,
        },
        "abp-suite" => Recipe {
            headers: vec![(
                "abp-suite",
                h("case,center0,center1,depth,width,cubes,flagged,all_good,total_gradient_image,abp_ratio"),
            )],
            run: abp_suite,
        },
        "solve-suite" => Recipe {
            headers: vec![("solve-suite", h("method,iterations,converged,final_residual,u_min,u_max,g_min,g_max"))],
            run: solve_suite,
        },
        "regularity-sweep" => Recipe {
            headers: vec![
                ("regularity-sweep", h("converged,alpha_min,alpha_median,c_emp,unfitted")),
                ("regularity-centers", h("center0,center1,alpha_fit,c_emp,fit_r2")),
            ],
            run: regularity_sweep,
        },
        other => return Err(Error::Config(format!("unknown recipe `{other}`"))),
    })
}

fn eval_suite(cfg: &ExperimentConfig, p: &EllipticityParams, id: usize, rng: &mut ChaCha8Rng) -> Result<PointOutput> {
    let samples = cfg.extra_usize("samples", 4)?;
    let q = &cfg.quadrature;
    let mut rows = Vec::new();
    for (name, u) in smooth_fields(p.dim, cfg.radius, cfg.spacing)? {
        for _ in 0..samples {
            let x = loop {
                let x = [rng.gen_range(-1.0..1.0), if p.dim == 2 { rng.gen_range(-1.0..1.0) } else { 0.0 }];
                if norm(x) <= 1.0 {
                    break x;
                }
            };
            let vals = [
                eval_extremal_even(&u, x, p, Sign::Plus, q)?,
                eval_extremal_even(&u, x, p, Sign::Minus, q)?,
                eval_D_tau(&u, x, p, q)?,
                eval_M_L0(&u, x, p, Sign::Plus, q)?,
                eval_M_L0(&u, x, p, Sign::Minus, q)?,
                eval_M_L0_tilde(&u, x, p, Sign::Plus, q)?,
                eval_M_L0_tilde(&u, x, p, Sign::Minus, q)?,
            ];
            let tol = vals.iter().map(|v| v.tolerance()).fold(0.0, f64::max);
            let cols: Vec<String> = vals.iter().map(|v| fmt(v.value)).collect();
            rows.push(format!("{id},{},{name},{},{},{},{}", param_cols(p), fmt(x[0]), fmt(x[1]), cols.join(","), fmt(tol)));
        }
    }
    Ok(vec![rows].into())
}

/// s = 2^{-k/2} from 1/2 down to `s_min`.
pub fn barrier_s_grid(s_min: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut s: f64 = 0.5;
    while s >= s_min {
        out.push(s);
        s /= std::f64::consts::SQRT_2;
    }
    out
}

fn barrier_suite(cfg: &ExperimentConfig, p: &EllipticityParams, id: usize, _: &mut ChaCha8Rng) -> Result<PointOutput> {
    let q = &cfg.quadrature;
    let s_grid = barrier_s_grid(cfg.extra_f64("s_min", 1e-14)?);
    let (s_star, delta_star, interior_ok) = match barrier_interior(p, &s_grid, q) {
        Ok(r) => (Some(r.s_star), Some(r.delta_star), true),
        Err(Error::Barrier(msg)) => {
            warn!("point {id}: interior barrier not found: {msg}");
            (None, None, false)
        }
        Err(e) => return Err(e),
    };
    let rep = search_exterior_barrier(p, &[1.0, 2.0, 4.0], &[0.5, 0.25], q)?;
    let (r, verified) = match rep {
        Ok(r) => (Some(r), true),
        Err(all) => (all.into_iter().next(), false),
    };
    let row = format!(
        "{id},{},{},{},{},{},{},{},{},{}",
        param_cols(p),
        fmt_opt(s_star),
        fmt_opt(delta_star),
        interior_ok,
        fmt_opt(r.as_ref().map(|r| r.c)),
        fmt_opt(r.as_ref().map(|r| r.alpha)),
        verified,
        fmt_opt(r.as_ref().map(|r| r.max_annulus_tilde)),
        fmt_opt(r.as_ref().map(|r| r.max_exterior_tilde)),
    );
    Ok(vec![vec![row]].into())
}

fn abp_suite(cfg: &ExperimentConfig, p: &EllipticityParams, id: usize, rng: &mut ChaCha8Rng) -> Result<PointOutput> {
    let cases = cfg.extra_usize("cases", 5)?;
    let h = cfg.extra_f64("abp_spacing", if p.dim == 1 { 1.0 / 256.0 } else { 1.0 / 16.0 })?;
    let f = GridField::constant(p.dim, SUPPORT_RADIUS, h, 1.0)?;
    let cover_cfg = CoverConfig::new(p.dim);
    let mut rows = Vec::new();
    for case in 0..cases {
        let c = [rng.gen_range(-0.5..0.5), if p.dim == 2 { rng.gen_range(-0.5..0.5) } else { 0.0 }];
        let depth = rng.gen_range(0.1..1.0);
        let width = rng.gen_range(0.3..0.5);
        let u = synthetic_dip(p.dim, h, c, depth, width)?;
        let env = convex_envelope(&u, None)?;
        let cover = abp_cover(&u, &env, &f, p, &cover_cfg)?;
        let all_good = cover.cubes.iter().all(|q| q.meets_good);
        rows.push(format!(
            "{id},{},{case},{},{},{},{},{},{},{},{},{}",
            param_cols(p),
            fmt(c[0]),
            fmt(c[1]),
            fmt(depth),
            fmt(width),
            cover.cubes.len(),
            cover.flagged,
            all_good,
            fmt(cover.total_gradient_image),
            fmt(cover.abp_ratio(&u, p.dim)),
        ));
    }
    Ok(vec![rows].into())
}

fn dirichlet_problem(cfg: &ExperimentConfig, p: &EllipticityParams) -> Result<DirichletProblem> {
    let g = match cfg.extra_str("data", "rough").as_str() {
        "rough" => rough_exterior_data(p.dim, cfg.radius, cfg.spacing)?,
        "smooth" => {
            let tail = ExplicitTail::new("smooth", smooth_data).with_bound(1.5 * (1.0 + 0.5 * cfg.radius));
            GridField::from_fn(p.dim, cfg.radius, cfg.spacing, smooth_data, Tail::Explicit(tail))?
        }
        other => return Err(Error::Config(format!("unknown data `{other}` (rough, smooth)"))),
    };
    let rhs = GridField::constant(p.dim, cfg.radius, cfg.spacing, cfg.extra_f64("rhs", 0.0)?)?;
    let op = parse_operator(&cfg.extra_str("operator", "l0tilde-plus"), p)?;
    Ok(DirichletProblem::new(Domain::unit_ball(), g, rhs, op, *p))
}

fn solve_point(cfg: &ExperimentConfig, p: &EllipticityParams) -> Result<(GridField, crate::dirichlet::SolveReport, DirichletProblem)> {
    let pr = dirichlet_problem(cfg, p)?;
    let method = parse_method(&cfg.extra_str("method", "policy"))?;
    let tol = cfg.extra_f64("tol", 1e-9)?;
    let max_iter = cfg.extra_usize("max_iter", if method == SolverMethod::PolicyIteration { 200 } else { 200_000 })?;
    let (u, rep) = solve_with(&pr, tol, max_iter, method)?;
    Ok((u, rep, pr))
}

fn solve_suite(cfg: &ExperimentConfig, p: &EllipticityParams, id: usize, _: &mut ChaCha8Rng) -> Result<PointOutput> {
    let (u, rep, pr) = solve_point(cfg, p)?;
    let (u_min, u_max) = u.range();
    let (g_min, g_max) = pr.exterior.range();
    let row = format!(
        "{id},{},{:?},{},{},{},{},{},{},{}",
        param_cols(p),
        rep.method,
        rep.iterations,
        rep.converged,
        fmt(rep.final_residual),
        fmt(u_min),
        fmt(u_max),
        fmt(g_min),
        fmt(g_max),
    );
    let mut out: PointOutput = vec![vec![row]].into();
    if cfg.extra_str("save_solutions", "false") == "true" {
        let mut buf = Vec::new();
        crate::grid::write_csv(&u, &mut buf)?;
        out.files.push((format!("solution_{id}.csv"), String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))?));
    }
    Ok(out)
}

fn regularity_sweep(cfg: &ExperimentConfig, p: &EllipticityParams, id: usize, _: &mut ChaCha8Rng) -> Result<PointOutput> {
    let (u, rep, pr) = solve_point(cfg, p)?;
    let c0 = pr.rhs.sup_norm();
    let stride = cfg.extra_usize("center_stride", 8)?;
    let centers = centers_in_ball(&u, 0.5, stride);
    let hc = HolderConfig { r0: cfg.extra_f64("r0", 0.5)?, ..Default::default() };
    let cert = holder_certificate(&u, p, c0, &centers, &hc)?;
    let scale = u.sup_norm() + c0;
    let summary = format!(
        "{id},{},{},{},{},{},{}",
        param_cols(p),
        rep.converged,
        fmt_opt(cert.alpha_min),
        fmt_opt(cert.alpha_median),
        fmt_opt(cert.c_emp),
        cert.unfitted
    );
    let per_center = cert
        .traces
        .iter()
        .map(|t| {
            format!(
                "{id},{},{},{},{},{},{}",
                param_cols(p),
                fmt(t.center[0]),
                fmt(t.center[1]),
                fmt_opt(t.fitted_alpha),
                fmt_opt(t.c_emp(scale)),
                fmt_opt(t.fit_r2)
            )
        })
        .collect();
    Ok(vec![vec![summary], per_center].into())
}

/// The per-point random stream.
pub fn point_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Named extra files (name, contents).
pub type ExtraFiles = Vec<(String, String)>;

/// Runs the recipe over the grid and returns its tables without writing files.
pub fn run_tables(cfg: &ExperimentConfig) -> Result<(Vec<Table>, ExtraFiles, RunSummary)> {
    cfg.validate()?;
    let rec = recipe(&cfg.recipe)?;
    let grid = cfg.grid();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let run = rec.run;
    let results: Vec<(GridPoint, Option<Result<PointOutput>>)> = pool.install(|| {
        grid.into_par_iter()
            .map(|gp| {
                if gp.skip.is_some() {
                    return (gp, None);
                }
                let mut rng = point_rng(cfg.seed, gp.index);
                let r = run(cfg, &gp.params, gp.index, &mut rng);
                (gp, Some(r))
            })
            .collect()
    });
    let mut tables: Vec<Table> =
        rec.headers.iter().map(|(n, h)| Table { name: n.to_string(), header: h.clone(), rows: Vec::new() }).collect();
    let mut points = Vec::new();
    let mut extra = Vec::new();
    let (mut ok, mut skipped, mut failed) = (0, 0, 0);
    for (gp, res) in results {
        let p = gp.params;
        let (status, reason, nrows) = match res {
            None => {
                let why = gp.skip.clone().unwrap_or_default();
                info!("point {} skipped: {why}", gp.index);
                skipped += 1;
                ("skipped", Some(why), 0)
            }
            Some(Err(e)) => {
                warn!("point {} failed: {e}", gp.index);
                failed += 1;
                ("failed", Some(e.to_string()), 0)
            }
            Some(Ok(rows)) => {
                ok += 1;
                let n = rows.tables.first().map_or(0, |r| r.len());
                for (t, r) in tables.iter_mut().zip(rows.tables) {
                    t.rows.extend(r);
                }
                extra.extend(rows.files);
                ("ok", None, n)
            }
        };
        points.push(PointStatus {
            point: gp.index,
            sigma: p.sigma,
            tau: p.tau,
            lambda: p.lambda_lo,
            lambda_hi: p.lambda_hi,
            b: p.b,
            status: status.into(),
            reason,
            rows: nrows,
        });
    }
    let files = tables.iter().map(|t| format!("{}.csv", t.name)).chain(extra.iter().map(|(n, _)| n.clone())).collect();
    let summary = RunSummary { recipe: cfg.recipe.clone(), seed: cfg.seed, points, files, ok, skipped, failed };
    Ok((tables, extra, summary))
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.header.len() + 1 + self.rows.iter().map(|r| r.len() + 1).sum::<usize>());
        s.push_str(&self.header);
        s.push('\n');
        for r in &self.rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }
}

/// Runs the recipe and writes `<table>.csv` and `summary.json` into `cfg.out`.
pub fn run_recipe(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let (tables, extra, summary) = run_tables(cfg)?;
    write_outputs(&cfg.out, &tables, &extra, &summary)?;
    Ok(summary)
}

/// Writes a file; failures are reported as configuration errors.
pub fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

pub fn write_outputs(dir: &std::path::Path, tables: &[Table], extra: &[(String, String)], summary: &RunSummary) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
    let mut written = Vec::new();
    let files = tables
        .iter()
        .map(|t| (format!("{}.csv", t.name), t.to_csv()))
        .chain(extra.iter().cloned());
    for (name, contents) in files {
        let path = dir.join(name);
        write_file(&path, contents.as_bytes())?;
        written.push(path);
    }
    let path = dir.join("summary.json");
    let mut json = serde_json::to_vec_pretty(summary).map_err(|e| Error::Format(e.to_string()))?;
    json.push(b'\n');
    write_file(&path, &json)?;
    written.push(path);
    Ok(written)
}
