//! Dirichlet problems I u = f in Ω, u = g outside, solved as the fixed point of
//! a monotone scheme; barrier functions and comparison checks.

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm, ExplicitTail, GridField, Point};
use crate::nonlocal::{eval_M_L0, eval_M_L0_tilde, QuadratureConfig, Sign};
use crate::params::{check_hypotheses, EllipticityParams};
use crate::scheme::{Domain, Scheme, SchemeConfig, SchemeOperator};

/// Iterative method used to reach the fixed point of the scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverMethod {
    /// u ← u + dt (I_h u − f) on Ω nodes, dt from the diagonal bound.
    PseudoTime,
    /// Freeze the active affine piece of I_h, solve it exactly, repeat.
    /// Falls back to pseudo-time stepping if the residual stalls.
    PolicyIteration,
}

#[derive(Clone, Debug)]
pub struct DirichletProblem {
    pub domain: Domain,
    /// g on the whole grid plus its tail; values inside Ω are ignored.
    pub exterior: GridField,
    /// f on the same grid; only Ω nodes are read.
    pub rhs: GridField,
    pub operator: SchemeOperator,
    pub params: EllipticityParams,
    pub scheme: SchemeConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub dt_used: f64,
    pub converged: bool,
    pub final_residual: f64,
    pub method: SolverMethod,
}

impl DirichletProblem {
    pub fn new(
        domain: Domain,
        exterior: GridField,
        rhs: GridField,
        operator: SchemeOperator,
        params: EllipticityParams,
    ) -> Self {
        DirichletProblem { domain, exterior, rhs, operator, params, scheme: SchemeConfig::default() }
    }

    pub fn with_scheme(mut self, scheme: SchemeConfig) -> Self {
        self.scheme = scheme;
        self
    }

    fn check(&self) -> Result<()> {
        let hyp = check_hypotheses(&self.params)?;
        if !hyp.all_pass() {
            return Err(Error::Precondition {
                message: format!("hypotheses fail: {}", hyp.failures().join(", ")),
                locations: Vec::new(),
            });
        }
        let (g, f) = (&self.exterior, &self.rhs);
        if g.dim() != f.dim()
            || g.nodes_per_axis() != f.nodes_per_axis()
            || (g.spacing() - f.spacing()).abs() > 1e-14 * g.spacing()
        {
            return Err(Error::invalid("rhs and exterior data must share one grid"));
        }
        if !g.values().iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("exterior data must be bounded"));
        }
        Ok(())
    }

    pub fn build_scheme(&self) -> Result<Scheme> {
        self.check()?;
        Scheme::new(&self.operator, &self.params, &self.exterior, self.domain, &self.scheme)
    }

    /// The pseudo-time step dt = 0.9 / (diagonal bound of I_h).
    pub fn time_step(&self, scheme: &Scheme) -> Result<f64> {
        let dt = 0.9 / scheme.diagonal_bound();
        if !(dt >= 1e-14) {
            return Err(Error::Stiffness { dt });
        }
        Ok(dt)
    }

    /// One pseudo-time update of `u` (Ω nodes move, the rest is reset to g).
    pub fn update_map(&self, scheme: &Scheme, dt: f64, u: &GridField) -> Result<GridField> {
        let mut v = scheme.ext_values(u);
        let base = scheme.base_values();
        for (e, (vv, bb)) in v.iter_mut().zip(&base).enumerate() {
            if scheme.ext_col()[e] == usize::MAX {
                *vv = *bb;
            }
        }
        let mut out = self.exterior.values().to_vec();
        for (&p, &idx) in scheme.omega_ext().iter().zip(scheme.omega()) {
            out[idx] = v[p] + dt * (scheme.eval_at(&v, p, &mut ()) - self.rhs.values()[idx]);
        }
        self.exterior.with_values(out)
    }

    /// sup over Ω nodes of |I_h u − f| for `u` on this grid, under `scheme`.
    pub fn residual(&self, scheme: &Scheme, u: &GridField) -> f64 {
        scheme
            .apply(u)
            .iter()
            .zip(scheme.omega())
            .map(|(iu, &idx)| (iu - self.rhs.values()[idx]).abs())
            .fold(0.0, f64::max)
    }
}

/// Solve with pseudo-time stepping.
pub fn solve(problem: &DirichletProblem, tol: f64, max_iter: usize) -> Result<(GridField, SolveReport)> {
    solve_with(problem, tol, max_iter, SolverMethod::PseudoTime)
}

pub fn solve_with(
    problem: &DirichletProblem,
    tol: f64,
    max_iter: usize,
    method: SolverMethod,
) -> Result<(GridField, SolveReport)> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let scheme = problem.build_scheme()?;
    let dt = problem.time_step(&scheme)?;
    let mut v = scheme.base_values();
    let g_min = v
        .iter()
        .zip(scheme.ext_col())
        .filter(|(_, &c)| c == usize::MAX)
        .map(|(x, _)| *x)
        .fold(f64::INFINITY, f64::min);
    for &p in scheme.omega_ext() {
        v[p] = g_min;
    }
    let f: Vec<f64> = scheme.omega().iter().map(|&i| problem.rhs.values()[i]).collect();
    let mut report = SolveReport {
        iterations: 0,
        residual_history: Vec::new(),
        dt_used: dt,
        converged: false,
        final_residual: f64::INFINITY,
        method,
    };
    if method == SolverMethod::PolicyIteration {
        policy_iterate(&scheme, &f, &mut v, tol, max_iter, &mut report)?;
    }
    if !report.converged {
        pseudo_time(&scheme, &f, &mut v, dt, tol, max_iter, &mut report);
    }
    if !report.converged {
        warn!(
            "solver stopped after {} iterations with residual {:.3e}",
            report.iterations, report.final_residual
        );
    }
    let mut out = problem.exterior.values().to_vec();
    for (&p, &idx) in scheme.omega_ext().iter().zip(scheme.omega()) {
        out[idx] = v[p];
    }
    Ok((problem.exterior.with_values(out)?, report))
}

fn pseudo_time(scheme: &Scheme, f: &[f64], v: &mut [f64], dt: f64, tol: f64, max_iter: usize, report: &mut SolveReport) {
    let omega = scheme.omega_ext();
    let mut r = vec![0.0; omega.len()];
    let start = report.iterations;
    loop {
        let mut res: f64 = 0.0;
        for (k, &p) in omega.iter().enumerate() {
            r[k] = scheme.eval_at(v, p, &mut ()) - f[k];
            res = res.max(r[k].abs());
        }
        report.residual_history.push(res);
        report.final_residual = res;
        if res <= tol {
            report.converged = true;
            break;
        }
        if report.iterations - start >= max_iter || !res.is_finite() {
            break;
        }
        for (k, &p) in omega.iter().enumerate() {
            v[p] += dt * r[k];
        }
        report.iterations += 1;
        if report.iterations.is_multiple_of(10_000) {
            debug!("pseudo-time iteration {} residual {res:.3e}", report.iterations);
        }
    }
}

fn policy_iterate(
    scheme: &Scheme,
    f: &[f64],
    v: &mut [f64],
    tol: f64,
    max_iter: usize,
    report: &mut SolveReport,
) -> Result<()> {
    let omega = scheme.omega_ext();
    let cols = scheme.ext_col();
    let n = omega.len();
    let mut row: Vec<(usize, f64)> = Vec::new();
    let mut best = f64::INFINITY;
    let mut stall = 0;
    for _ in 0..max_iter.max(1) {
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        let mut res: f64 = 0.0;
        for (i, &p) in omega.iter().enumerate() {
            row.clear();
            let val = scheme.eval_at(v, p, &mut row);
            res = res.max((val - f[i]).abs());
            let mut known = 0.0;
            for &(e, c) in &row {
                let col = cols[e];
                if col != usize::MAX {
                    a[(i, col)] += c;
                    known += c * v[e];
                }
            }
            rhs[i] = f[i] - val + known;
        }
        report.residual_history.push(res);
        report.final_residual = res;
        if res <= tol {
            report.converged = true;
            return Ok(());
        }
        if res < 0.5 * best {
            best = res;
            stall = 0;
        } else {
            stall += 1;
            if stall >= 8 {
                info!("policy iteration stalled at residual {res:.3e}; switching to pseudo-time");
                return Ok(());
            }
        }
        let Some(sol) = a.lu().solve(&rhs) else {
            info!("frozen policy matrix is singular; switching to pseudo-time");
            return Ok(());
        };
        for (i, &p) in omega.iter().enumerate() {
            v[p] = sol[i];
        }
        report.iterations += 1;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub pass: bool,
    /// max over Ω nodes of u − v.
    pub worst_violation: f64,
    pub location: Option<Point>,
    /// min over Ω nodes of v − u.
    pub margin: f64,
}

/// Checks u ≤ v + tol on Ω nodes, given u ≤ v on the exterior nodes.
pub fn comparison_check(u: &GridField, v: &GridField, domain: &Domain, tol: f64) -> Result<ComparisonReport> {
    if u.dim() != v.dim() || u.nodes_per_axis() != v.nodes_per_axis() || u.spacing() != v.spacing() {
        return Err(Error::invalid("comparison needs fields on the same grid"));
    }
    let mut outside_bad = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    let mut loc = None;
    for (i, x) in u.nodes() {
        let d = u.values()[i] - v.values()[i];
        if domain.contains(x) {
            if d > worst {
                worst = d;
                loc = Some(x);
            }
        } else if d > tol {
            outside_bad.push(x);
        }
    }
    if !outside_bad.is_empty() {
        return Err(Error::Precondition {
            message: "u ≤ v fails outside the domain".into(),
            locations: outside_bad,
        });
    }
    if loc.is_none() {
        return Err(Error::invalid("domain contains no grid nodes"));
    }
    Ok(ComparisonReport { pass: worst <= tol, worst_violation: worst, location: loc, margin: -worst })
}

/// min(1, |x|²/4)
pub fn quadratic_barrier(x: Point) -> f64 {
    (0.25 * (x[0] * x[0] + x[1] * x[1])).min(1.0)
}

/// min(1, C (|x| − 1)_+^α)
pub fn exterior_barrier(c: f64, alpha: f64, x: Point) -> f64 {
    let t = (norm(x) - 1.0).max(0.0);
    if t == 0.0 {
        0.0
    } else {
        (c * t.powf(alpha)).min(1.0)
    }
}

/// Node spacing of the fields handed to the quadrature in barrier checks.
fn barrier_field_spacing(dim: usize) -> f64 {
    if dim == 1 {
        1.0 / 256.0
    } else {
        1.0 / 32.0
    }
}

fn sample_ball(dim: usize, radius: f64, step: f64) -> Vec<Point> {
    let k = (radius / step).floor() as i64;
    let mut pts = Vec::new();
    for j in if dim == 1 { 0..=0 } else { -k..=k } {
        for i in -k..=k {
            let x = [i as f64 * step, j as f64 * step];
            if norm(x) <= radius + 1e-12 {
                pts.push(x);
            }
        }
    }
    pts
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteriorBarrierReport {
    pub s_star: f64,
    pub delta_star: f64,
    /// (s, min over the B1 sample of M⁻_{L0} φ_s)
    pub minima: Vec<(f64, f64)>,
}

/// Evaluates M⁻_{L0} φ_s, φ_s(x) = φ(sx) with φ = min(1, |x|²/4), on a node
/// sample of B1 for every s and returns the largest s with a positive minimum.
pub fn barrier_interior(params: &EllipticityParams, s_grid: &[f64], q: &QuadratureConfig) -> Result<InteriorBarrierReport> {
    params.validate()?;
    let hyp = check_hypotheses(params)?;
    if !hyp.all_pass() {
        return Err(Error::Precondition {
            message: format!("hypotheses fail: {}", hyp.failures().join(", ")),
            locations: Vec::new(),
        });
    }
    if s_grid.is_empty() || s_grid.iter().any(|&s| !(s > 0.0 && s < 1.0)) {
        return Err(Error::invalid("s values must lie in (0, 1)"));
    }
    let dim = params.dim;
    let h = barrier_field_spacing(dim);
    let samples = sample_ball(dim, 1.0, if dim == 1 { 1.0 / 16.0 } else { 0.25 });
    let mut minima = Vec::new();
    for &s in s_grid {
        let tail = ExplicitTail::new("phi_s", move |x: Point| quadratic_barrier([s * x[0], s * x[1]]))
            .with_far_constant(2.0 / s, 1.0)
            .with_bound(1.0);
        let field = GridField::from_explicit(dim, 2.0, h, "phi_s", move |x: Point| {
            quadratic_barrier([s * x[0], s * x[1]])
        })?
        .with_tail(crate::grid::Tail::Explicit(tail));
        let mut m = f64::INFINITY;
        for &x in &samples {
            let val = eval_M_L0(&field, x, params, Sign::Minus, q)?;
            m = m.min(val.value);
        }
        debug!("interior barrier s={s}: min {m:.4e}");
        minima.push((s, m));
    }
    let best = minima
        .iter()
        .filter(|(_, m)| *m > 0.0)
        .fold(None, |acc: Option<(f64, f64)>, &(s, m)| match acc {
            Some((s0, _)) if s0 >= s => acc,
            _ => Some((s, m)),
        });
    match best {
        Some((s_star, delta_star)) => Ok(InteriorBarrierReport { s_star, delta_star, minima }),
        None => Err(Error::Barrier(format!(
            "no s gives a positive minimum; per-s minima: {}",
            minima.iter().map(|(s, m)| format!("s={s}: {m:.4e}")).collect::<Vec<_>>().join(", ")
        ))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExteriorBarrierReport {
    pub c: f64,
    pub alpha: f64,
    /// max of M⁺_{L̃0} φ over the B2∖B1 sample; verified when negative.
    pub max_annulus_tilde: f64,
    /// max of M⁺_{L̃0} φ over the sample of ℝⁿ∖B1; verified when ≤ tol.
    pub max_exterior_tilde: f64,
    /// The same maxima for M⁺_{L0}.
    pub max_annulus_l0: f64,
    pub max_exterior_l0: f64,
    /// Largest quadrature tolerance over the sample. The sign checks use
    /// each point's own tolerance.
    pub tolerance: f64,
    pub annulus_ok: bool,
    pub exterior_ok: bool,
    pub verified: bool,
}

fn exterior_samples(dim: usize) -> (Vec<Point>, Vec<Point>) {
    let annulus_r: Vec<f64> = (1..16).map(|k| 1.0 + k as f64 / 16.0).collect();
    let far_r = [2.0, 2.5, 3.0, 4.0, 6.0, 8.0];
    let dirs: Vec<Point> = if dim == 1 {
        vec![[1.0, 0.0], [-1.0, 0.0]]
    } else {
        (0..8)
            .map(|k| {
                let t = std::f64::consts::FRAC_PI_4 * k as f64 + 0.1;
                [t.cos(), t.sin()]
            })
            .collect()
    };
    let ann = annulus_r.iter().flat_map(|&r| dirs.iter().map(move |d| [r * d[0], r * d[1]])).collect();
    let far = far_r.iter().flat_map(|&r| dirs.iter().map(move |d| [r * d[0], r * d[1]])).collect();
    (ann, far)
}

/// The exterior barrier as a field on a grid of box radius 3.
pub fn exterior_barrier_field(dim: usize, c: f64, alpha: f64, h: f64) -> Result<GridField> {
    if !(c > 0.0 && alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid("need C > 0 and alpha in (0, 1]"));
    }
    let r_sat = 1.0 + c.powf(-1.0 / alpha);
    let tail = ExplicitTail::new("exterior-barrier", move |x: Point| exterior_barrier(c, alpha, x))
        .with_far_constant(r_sat, 1.0)
        .with_bound(1.0);
    Ok(GridField::from_explicit(dim, 3.0, h, "exterior-barrier", move |x: Point| exterior_barrier(c, alpha, x))?
        .with_tail(crate::grid::Tail::Explicit(tail)))
}

/// Sign conditions for φ = min(1, C(|x| − 1)_+^α) outside B1.
pub fn barrier_exterior(params: &EllipticityParams, c: f64, alpha: f64, q: &QuadratureConfig) -> Result<ExteriorBarrierReport> {
    params.validate()?;
    let hyp = check_hypotheses(params)?;
    if !hyp.h1.pass {
        return Err(Error::Precondition { message: "H1 fails".into(), locations: Vec::new() });
    }
    let dim = params.dim;
    let field = exterior_barrier_field(dim, c, alpha, barrier_field_spacing(dim))?;
    let (ann, far) = exterior_samples(dim);
    let mut tol: f64 = 0.0;
    // per sample: max value, max value + tol, max value - tol (M̃), max value (M_L0)
    let mut eval = |pts: &[Point]| -> Result<[f64; 4]> {
        let mut m = [f64::NEG_INFINITY; 4];
        for &x in pts {
            let t = eval_M_L0_tilde(&field, x, params, Sign::Plus, q)?;
            let l = eval_M_L0(&field, x, params, Sign::Plus, q)?;
            let e = t.tolerance().max(1e-10);
            tol = tol.max(e);
            m[0] = m[0].max(t.value);
            m[1] = m[1].max(t.value + e);
            m[2] = m[2].max(t.value - e);
            m[3] = m[3].max(l.value);
        }
        Ok(m)
    };
    let ann = eval(&ann)?;
    let far = eval(&far)?;
    let (max_annulus_tilde, max_annulus_l0) = (ann[0], ann[3]);
    let max_exterior_tilde = far[0].max(ann[0]);
    let max_exterior_l0 = far[3].max(ann[3]);
    let annulus_ok = ann[1] < 0.0;
    let exterior_ok = far[2].max(ann[2]) <= 0.0;
    Ok(ExteriorBarrierReport {
        c,
        alpha,
        max_annulus_tilde,
        max_exterior_tilde,
        max_annulus_l0,
        max_exterior_l0,
        tolerance: tol,
        annulus_ok,
        exterior_ok,
        verified: annulus_ok && exterior_ok,
    })
}

/// Tries every (C, α) pair and returns the first verified report, or all
/// reports when none verifies.
pub fn search_exterior_barrier(
    params: &EllipticityParams,
    cs: &[f64],
    alphas: &[f64],
    q: &QuadratureConfig,
) -> Result<std::result::Result<ExteriorBarrierReport, Vec<ExteriorBarrierReport>>> {
    let mut all = Vec::new();
    for &alpha in alphas {
        for &c in cs {
            let r = barrier_exterior(params, c, alpha, q)?;
            if r.verified {
                return Ok(Ok(r));
            }
            all.push(r);
        }
    }
    Ok(Err(all))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryBarrierReport {
    pub r: f64,
    pub delta: f64,
    /// min over exterior nodes of w − g.
    pub min_margin: f64,
    pub value_at_x: f64,
    pub pass: bool,
}

/// Checks w(y) = 2‖g‖ φ((y − (x + rη))/r) + g(x) + ε ≥ g on the exterior
/// nodes of a ball domain, for a boundary point x with outer normal η.
/// δ is the largest node radius on which |g − g(x)| ≤ ε and r = δ/3.
pub fn boundary_barrier_check(
    g: &GridField,
    domain: &Domain,
    x: Point,
    eps: f64,
    c: f64,
    alpha: f64,
) -> Result<BoundaryBarrierReport> {
    let Domain::Ball { center, radius } = *domain else {
        return Err(Error::invalid("boundary barrier check needs a ball domain"));
    };
    if c < 1.0 || !(eps > 0.0) {
        return Err(Error::invalid("need C ≥ 1 and eps > 0"));
    }
    let rel = [x[0] - center[0], x[1] - center[1]];
    let d = norm(rel);
    if (d - radius).abs() > 1e-9 * radius.max(1.0) {
        return Err(Error::invalid("x must lie on the boundary"));
    }
    let eta = [rel[0] / d, rel[1] / d];
    let gx = g.eval(x);
    let exterior: Vec<(Point, f64)> =
        g.nodes().filter(|(_, y)| !domain.contains(*y)).map(|(i, y)| (y, g.values()[i])).collect();
    let mut by_dist: Vec<(f64, f64)> = exterior.iter().map(|(y, v)| (norm([y[0] - x[0], y[1] - x[1]]), *v)).collect();
    by_dist.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut delta = 0.0;
    for &(dist, v) in &by_dist {
        if (v - gx).abs() > eps {
            break;
        }
        delta = dist;
    }
    let delta = delta.min(radius);
    let r = delta / 3.0;
    if !(r > 0.0) {
        return Err(Error::Barrier("g is not ε-continuous on any node neighbourhood of x".into()));
    }
    let gnorm = g.sup_norm();
    let w = |y: Point| {
        let z = [(y[0] - x[0] - r * eta[0]) / r, (y[1] - x[1] - r * eta[1]) / r];
        2.0 * gnorm * exterior_barrier(c, alpha, z) + gx + eps
    };
    let min_margin = exterior.iter().map(|&(y, v)| w(y) - v).fold(f64::INFINITY, f64::min);
    Ok(BoundaryBarrierReport { r, delta, min_margin, value_at_x: w(x), pass: min_margin >= 0.0 })
}
