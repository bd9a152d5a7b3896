//! Empirical regularity measurements: level-set tails, oscillation decay on
//! dyadic balls, Hölder certificates, the incremental-quotient bootstrap and
//! a check of the special function used by the point estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::log_log;
use crate::grid::{incremental_quotient, norm, rescale, GridField, Point, Tail};
use crate::nonlocal::{eval_M_L0, eval_M_L0_tilde, eval_extremal_even, QuadratureConfig, Sign};
use crate::params::{check_hypotheses, EllipticityParams};

/// κ = ε0 / (1 + ‖u‖)^{1/(σ−τ)}
pub fn kappa(params: &EllipticityParams, sup_norm: f64, eps0: f64) -> Result<f64> {
    if !(eps0 > 0.0) {
        return Err(Error::invalid("eps0 must be positive"));
    }
    if !(sup_norm >= 0.0) {
        return Err(Error::invalid("sup norm must be nonnegative"));
    }
    let gap = params.sigma - params.tau;
    if !(gap > 0.0) {
        return Err(Error::invalid("kappa needs sigma > tau"));
    }
    Ok(eps0 / (1.0 + sup_norm).powf(1.0 / gap))
}

fn ball_volume(dim: usize) -> f64 {
    if dim == 1 {
        2.0
    } else {
        std::f64::consts::PI
    }
}

/// Grid nodes of `u` inside the closed ball of the given radius about 0,
/// every `stride`-th node per axis.
pub fn centers_in_ball(u: &GridField, radius: f64, stride: usize) -> Vec<Point> {
    let stride = stride.max(1) as i64;
    let h = u.spacing();
    let k = (radius / h).floor() as i64;
    let mut out = Vec::new();
    let js = if u.dim() == 1 { 0..=0 } else { -k..=k };
    for j in js {
        if j % stride != 0 {
            continue;
        }
        for i in -k..=k {
            if i % stride != 0 {
                continue;
            }
            let x = [i as f64 * h, j as f64 * h];
            if norm(x) <= radius + 1e-12 {
                out.push(x);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFitConfig {
    pub thresholds: usize,
    pub t_min: f64,
    /// Defaults to the max of ũ over B1.
    pub t_max: Option<f64>,
    /// Fail when M⁻_{L0} u exceeds C0 on the sample instead of only reporting it.
    pub strict_precondition: bool,
    /// Spacing of the B1 sample used for the precondition.
    pub sample_step: f64,
}

impl Default for TailFitConfig {
    fn default() -> Self {
        TailFitConfig { thresholds: 24, t_min: 1.0, t_max: None, strict_precondition: true, sample_step: 0.125 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub kappa: f64,
    pub thresholds: Vec<f64>,
    /// |{ũ > t} ∩ B1| from node-count fractions.
    pub measures: Vec<f64>,
    pub fitted_eps: Option<f64>,
    pub fit_c: Option<f64>,
    pub fit_r2: Option<f64>,
    /// Thresholds with 0 < measure < |B1| used in the fit.
    pub fit_points: usize,
    pub degenerate: bool,
    /// max of M⁻_{L0} u over the B1 sample.
    pub precondition_max: f64,
    pub precondition_ok: bool,
}

/// Level-set tail of ũ(x) = u(κx) in B1 and its power-law fit.
pub fn point_estimate(u: &GridField, params: &EllipticityParams, c0: f64, eps0: f64, cfg: &TailFitConfig) -> Result<TailFit> {
    let bad: Vec<Point> = u.nodes().filter(|(i, _)| u.values()[*i] < 0.0).map(|(_, x)| x).collect();
    if !bad.is_empty() {
        return Err(Error::Precondition { message: "u must be nonnegative".into(), locations: bad });
    }
    if let Tail::Explicit(_) | Tail::Constant(_) = u.tail() {
        let r = u.box_radius();
        let probes = [1.5 * r, 2.0 * r, 4.0 * r, 16.0 * r];
        let neg: Vec<Point> = probes
            .iter()
            .flat_map(|&s| [[s, 0.0], [-s, 0.0], [0.0, s], [0.0, -s]])
            .filter(|x| u.dim() == 2 || x[1] == 0.0)
            .filter(|&x| u.eval(x) < 0.0)
            .collect();
        if !neg.is_empty() {
            return Err(Error::Precondition { message: "u must be nonnegative in its tail".into(), locations: neg });
        }
    }
    let q = QuadratureConfig::default();
    let mut pre_max = f64::NEG_INFINITY;
    let mut pre_bad = Vec::new();
    for x in centers_in_ball(u, 1.0, (cfg.sample_step / u.spacing()).round().max(1.0) as usize) {
        let v = eval_M_L0(u, x, params, Sign::Minus, &q)?;
        pre_max = pre_max.max(v.value);
        if v.value > c0 + v.tolerance() {
            pre_bad.push(x);
        }
    }
    if cfg.strict_precondition && !pre_bad.is_empty() {
        return Err(Error::Precondition { message: format!("M⁻_L0 u exceeds C0 = {c0}"), locations: pre_bad });
    }
    let k = kappa(params, u.sup_norm(), eps0)?;
    let ut = rescale(u, 1.0, k)?;
    let inside: Vec<f64> = ut.nodes().filter(|(_, x)| norm(*x) <= 1.0 + 1e-12).map(|(i, _)| ut.values()[i]).collect();
    if inside.is_empty() {
        return Err(Error::Resolution("no nodes of the rescaled field in B1".into()));
    }
    let full = ball_volume(u.dim());
    let t_max = cfg.t_max.unwrap_or_else(|| inside.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let count = cfg.thresholds.max(2);
    let thresholds: Vec<f64> = if t_max > cfg.t_min && cfg.t_min > 0.0 {
        (0..count).map(|j| cfg.t_min * (t_max / cfg.t_min).powf(j as f64 / (count - 1) as f64)).collect()
    } else {
        vec![cfg.t_min]
    };
    let measures: Vec<f64> = thresholds
        .iter()
        .map(|&t| full * inside.iter().filter(|&&v| v > t).count() as f64 / inside.len() as f64)
        .collect();
    let (ts, ms): (Vec<f64>, Vec<f64>) = thresholds
        .iter()
        .zip(&measures)
        .filter(|(_, &m)| m > 0.0 && m < full * (1.0 - 1e-12))
        .map(|(t, m)| (*t, *m))
        .unzip();
    let fit = if ts.len() >= 2 { log_log(&ts, &ms) } else { None };
    Ok(TailFit {
        kappa: k,
        fit_points: ts.len(),
        degenerate: fit.is_none(),
        fitted_eps: fit.map(|f| (-f.slope).max(0.0)),
        fit_c: fit.map(|f| f.intercept.exp()),
        fit_r2: fit.map(|f| f.r2),
        thresholds,
        measures,
        precondition_max: pre_max,
        precondition_ok: pre_bad.is_empty(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationTrace {
    pub center: Point,
    pub radii: Vec<f64>,
    pub osc_values: Vec<f64>,
    pub maxima: Vec<f64>,
    pub minima: Vec<f64>,
    /// r_k ≥ h, so the ball spans at least three nodes per axis.
    pub resolved: Vec<bool>,
    pub fitted_alpha: Option<f64>,
    pub fit_r2: Option<f64>,
}

impl OscillationTrace {
    /// max over resolved radii of osc / (scale r^α) for the fitted α.
    pub fn c_emp(&self, scale: f64) -> Option<f64> {
        let a = self.fitted_alpha?;
        if !(scale > 0.0) {
            return None;
        }
        self.radii
            .iter()
            .zip(&self.osc_values)
            .zip(&self.resolved)
            .filter(|(_, &ok)| ok)
            .map(|((r, o), _)| o / (scale * r.powf(a)))
            .reduce(f64::max)
    }
}

const SAMPLES_PER_RADIUS: i64 = 32;

/// osc of u over B_{r0 4^{-k}}(center), k = 0..=k_max, and the log-log slope.
pub fn oscillation_decay(u: &GridField, center: Point, r0: f64, k_max: usize) -> Result<OscillationTrace> {
    if !(r0 > 0.0) {
        return Err(Error::invalid("r0 must be positive"));
    }
    let radii: Vec<f64> = (0..=k_max).map(|k| r0 * 0.25f64.powi(k as i32)).collect();
    let n = radii.len();
    let mut maxima = vec![f64::NEG_INFINITY; n];
    let mut minima = vec![f64::INFINITY; n];
    // Smallest ball first; each larger ball inherits the extremes of the smaller.
    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in (0..n).rev() {
        let r = radii[k];
        let step = r / SAMPLES_PER_RADIUS as f64;
        let js = if u.dim() == 1 { 0..=0 } else { -SAMPLES_PER_RADIUS..=SAMPLES_PER_RADIUS };
        for j in js {
            for i in -SAMPLES_PER_RADIUS..=SAMPLES_PER_RADIUS {
                let d = [i as f64 * step, j as f64 * step];
                if norm(d) > r * (1.0 + 1e-12) {
                    continue;
                }
                let v = u.eval([center[0] + d[0], center[1] + d[1]]);
                hi = hi.max(v);
                lo = lo.min(v);
            }
        }
        maxima[k] = hi;
        minima[k] = lo;
    }
    let osc_values: Vec<f64> = maxima.iter().zip(&minima).map(|(a, b)| a - b).collect();
    let resolved: Vec<bool> = radii.iter().map(|&r| r >= u.spacing() * (1.0 - 1e-12)).collect();
    let (rs, os): (Vec<f64>, Vec<f64>) = radii
        .iter()
        .zip(&osc_values)
        .zip(&resolved)
        .filter(|((_, &o), &ok)| ok && o > 1e-12)
        .map(|((r, o), _)| (*r, *o))
        .unzip();
    let fit = if rs.len() >= 4 { log_log(&rs, &os) } else { None };
    Ok(OscillationTrace {
        center,
        radii,
        osc_values,
        maxima,
        minima,
        resolved,
        fitted_alpha: fit.map(|f| f.slope),
        fit_r2: fit.map(|f| f.r2),
    })
}

/// Largest k with r0 4^{-k} ≥ h.
pub fn resolved_levels(u: &GridField, r0: f64) -> usize {
    let mut k = 0;
    while r0 * 0.25f64.powi(k as i32 + 1) >= u.spacing() * (1.0 - 1e-12) && k < 30 {
        k += 1;
    }
    k
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderConfig {
    pub r0: f64,
    /// Defaults to the deepest resolved level.
    pub k_max: Option<usize>,
    /// Evaluate M⁺_{L̃0} u ≥ −C0 and M⁻_{L̃0} u ≤ C0 on this many B1 nodes per axis side (0 = skip).
    pub precondition_samples: usize,
}

impl Default for HolderConfig {
    fn default() -> Self {
        HolderConfig { r0: 0.5, k_max: None, precondition_samples: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub traces: Vec<OscillationTrace>,
    pub alpha_min: Option<f64>,
    pub alpha_median: Option<f64>,
    /// max over centers and resolved radii of osc / ((‖u‖ + C0) r^α).
    pub c_emp: Option<f64>,
    /// Centers without a fit (fewer than four resolved radii or osc ≈ 0).
    pub unfitted: usize,
    /// Largest violation of the two-sided extremal inequalities (None when skipped).
    pub precondition_violation: Option<f64>,
}

/// Oscillation decay at every center and the resulting Hölder summary.
pub fn holder_certificate(
    u: &GridField,
    params: &EllipticityParams,
    c0: f64,
    centers: &[Point],
    cfg: &HolderConfig,
) -> Result<HolderReport> {
    if centers.is_empty() {
        return Err(Error::invalid("no centers given"));
    }
    let precondition_violation = if cfg.precondition_samples > 0 {
        let q = QuadratureConfig::default();
        let stride = ((1.0 / cfg.precondition_samples as f64) / u.spacing()).round().max(1.0) as usize;
        let mut worst: f64 = 0.0;
        for x in centers_in_ball(u, 1.0 - u.spacing(), stride) {
            let plus = eval_M_L0_tilde(u, x, params, Sign::Plus, &q)?;
            let minus = eval_M_L0_tilde(u, x, params, Sign::Minus, &q)?;
            worst = worst.max(-c0 - plus.value).max(minus.value - c0);
        }
        Some(worst)
    } else {
        None
    };
    let k_max = cfg.k_max.unwrap_or_else(|| resolved_levels(u, cfg.r0));
    let scale = u.sup_norm() + c0;
    let mut traces = Vec::with_capacity(centers.len());
    let mut alphas = Vec::new();
    let mut c_emp: Option<f64> = None;
    for &c in centers {
        let t = oscillation_decay(u, c, cfg.r0, k_max)?;
        if let Some(a) = t.fitted_alpha {
            alphas.push(a);
            if let Some(v) = t.c_emp(scale) {
                c_emp = Some(c_emp.map_or(v, |m: f64| m.max(v)));
            }
        }
        traces.push(t);
    }
    alphas.sort_by(|a, b| a.total_cmp(b));
    let unfitted = centers.len() - alphas.len();
    let alpha_median = if alphas.is_empty() {
        None
    } else if alphas.len() % 2 == 1 {
        Some(alphas[alphas.len() / 2])
    } else {
        Some(0.5 * (alphas[alphas.len() / 2 - 1] + alphas[alphas.len() / 2]))
    };
    Ok(HolderReport { traces, alpha_min: alphas.first().copied(), alpha_median, c_emp, unfitted, precondition_violation })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct C1AlphaStage {
    pub k: usize,
    pub gamma: f64,
    pub ball_radius: f64,
    /// max over steps of sup over the ball of |D_h u| / |h|^{(k+1)ᾱ}, divided by ‖u‖.
    pub norm_chain: f64,
    pub alpha_min: Option<f64>,
    pub alpha_median: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct C1AlphaReport {
    pub abar: f64,
    pub delta: f64,
    pub stages: Vec<C1AlphaStage>,
    /// Hölder exponent of the Lipschitz quotients (the C^{1,α} modulus).
    pub final_alpha: Option<f64>,
    pub final_c_emp: Option<f64>,
    /// Set when a shrunk ball fell below the grid resolution.
    pub stopped_at: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct C1AlphaConfig {
    /// Step multiples of h for the incremental quotients.
    pub step_multiples: Vec<usize>,
    /// Center stride (in nodes) inside each shrunk ball.
    pub center_stride: usize,
    pub direction: Point,
    pub r0: f64,
}

impl Default for C1AlphaConfig {
    fn default() -> Self {
        C1AlphaConfig { step_multiples: vec![1, 2, 4, 8], center_stride: 8, direction: [1.0, 0.0], r0: 0.25 }
    }
}

/// The incremental-quotient bootstrap: K = ⌊1/ᾱ⌋ stages, δ = 1/(4K) unless given.
pub fn c1alpha_pipeline(
    u: &GridField,
    params: &EllipticityParams,
    abar: f64,
    delta: Option<f64>,
    cfg: &C1AlphaConfig,
) -> Result<C1AlphaReport> {
    if !(abar > 0.0 && abar <= 1.0) {
        return Err(Error::invalid("abar must lie in (0, 1]"));
    }
    let kk = (1.0 / abar).floor() as usize;
    let delta = delta.unwrap_or(1.0 / (4.0 * kk as f64));
    let h = u.spacing();
    let unorm = u.sup_norm().max(f64::MIN_POSITIVE);
    let e = cfg.direction;
    let holder_cfg = HolderConfig { r0: cfg.r0, k_max: None, precondition_samples: 0 };
    let mut stages = Vec::new();
    let mut stopped_at = None;
    for k in 0..kk {
        let gamma = k as f64 * abar;
        let radius = 0.75 - (k + 1) as f64 * delta;
        if radius < 4.0 * h || radius <= 0.0 {
            stopped_at = Some(k);
            break;
        }
        let centers = centers_in_ball(u, radius, cfg.center_stride);
        let mut norm_chain: f64 = 0.0;
        let gamma_next = ((k + 1) as f64 * abar).min(1.0);
        for &m in &cfg.step_multiples {
            let qn = incremental_quotient(u, m as f64 * h, e, gamma_next)?;
            let sup = centers_in_ball(u, radius, 1).iter().map(|&x| qn.eval(x).abs()).fold(0.0, f64::max);
            norm_chain = norm_chain.max(sup / unorm);
        }
        let q = incremental_quotient(u, h, e, gamma)?;
        let rep = holder_certificate(&q, params, 0.0, &centers, &holder_cfg)?;
        stages.push(C1AlphaStage {
            k,
            gamma,
            ball_radius: radius,
            norm_chain,
            alpha_min: rep.alpha_min,
            alpha_median: rep.alpha_median,
        });
    }
    let (final_alpha, final_c_emp) = if stopped_at.is_none() {
        let radius = 0.75 - (kk + 1) as f64 * delta;
        if radius < 4.0 * h {
            stopped_at = Some(kk);
            (None, None)
        } else {
            let centers = centers_in_ball(u, radius, cfg.center_stride);
            let q = incremental_quotient(u, h, e, 1.0)?;
            let rep = holder_certificate(&q, params, 0.0, &centers, &holder_cfg)?;
            (rep.alpha_min, rep.c_emp)
        }
    } else {
        (None, None)
    };
    Ok(C1AlphaReport { abar, delta, stages, final_alpha, final_c_emp, stopped_at })
}

/// −c (min(s^{-p}, |x|^{-p}) − (2√n)^{-p})_+
pub fn special_function_candidate(dim: usize, c: f64, p: f64, s: f64, spacing: f64) -> Result<GridField> {
    if !(c > 0.0 && p > 0.0 && s > 0.0) {
        return Err(Error::invalid("need c, p, s > 0"));
    }
    let rs = 2.0 * (dim as f64).sqrt();
    let f = move |x: Point| -c * ((norm(x).max(s)).powf(-p) - rs.powf(-p)).max(0.0);
    GridField::from_fn(dim, rs + 0.5, spacing, f, Tail::Constant(0.0))
}

/// Smallest c making the candidate fall below −2 on the cube of side 3.
pub fn special_function_min_c(dim: usize, p: f64) -> f64 {
    let n = dim as f64;
    2.0 / ((1.5 * n.sqrt()).powf(-p) - (2.0 * n.sqrt()).powf(-p))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecialFunctionReport {
    /// max of M⁺_σ Φ over the node sample outside B_{1/4}.
    pub max_outside: f64,
    /// max of (M⁺_σ Φ)_+ over the sample in the closed B_{1/4}.
    pub psi_bound: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Checks Φ (support in B_{2√n}, Φ ≤ 0, Φ < −2 on Q3) and evaluates M⁺_σ Φ.
pub fn special_function_check(
    phi: &GridField,
    params: &EllipticityParams,
    q: &QuadratureConfig,
    sample_step: f64,
) -> Result<SpecialFunctionReport> {
    let hyp = check_hypotheses(params)?;
    if !hyp.h1.pass {
        return Err(Error::Precondition { message: "H1 fails".into(), locations: Vec::new() });
    }
    let n = phi.dim() as f64;
    let rs = 2.0 * n.sqrt();
    let mut bad = Vec::new();
    for (i, x) in phi.nodes() {
        let v = phi.values()[i];
        let in_q3 = x[0].abs() <= 1.5 && x[1].abs() <= 1.5;
        if v > 0.0 || (norm(x) >= rs && v != 0.0) || (in_q3 && !(v < -2.0)) {
            bad.push(x);
        }
    }
    match phi.far_field() {
        Some(f) if f.plus == 0.0 && f.minus == 0.0 => {}
        _ => bad.push([f64::INFINITY, 0.0]),
    }
    if !bad.is_empty() {
        return Err(Error::Precondition {
            message: "Phi must be nonpositive, vanish off B_{2√n} and stay below −2 on Q3".into(),
            locations: bad,
        });
    }
    let stride = (sample_step / phi.spacing()).round().max(1.0) as usize;
    let mut max_outside = f64::NEG_INFINITY;
    let mut psi: f64 = 0.0;
    let mut tol: f64 = 0.0;
    let mut samples = 0;
    for x in centers_in_ball(phi, phi.box_radius(), stride) {
        let v = eval_extremal_even(phi, x, params, Sign::Plus, q)?;
        tol = tol.max(v.tolerance());
        samples += 1;
        if norm(x) > 0.25 {
            max_outside = max_outside.max(v.value);
        } else {
            psi = psi.max(v.value);
        }
    }
    let tol = tol.max(1e-9);
    Ok(SpecialFunctionReport { max_outside, psi_bound: psi, tolerance: tol, samples, pass: max_outside <= tol })
}
