//! Quadrature of linear nonlocal operators, the extremal operators M_σ^±,
//! the maximal drift |D_τ|, the combined extremals over L0 and L̃0 and
//! finite inf-sup families.
//!
//! Every operator is written in the symmetrized form
//! `∫ δ_e(u,x;y) K_e(y) dy + ∫ δ_o(u,x;y) K_o(y) dy` over all of ℝⁿ, so no
//! principal value is ever taken. Integration runs along rays:
//!
//! * `|y| < r_inner`: u is replaced by the quadratic model fitted on the 3ⁿ
//!   stencil at x and the radial integral is done on dyadic shells with a
//!   geometric extrapolation of the innermost remainder;
//! * `r_inner ≤ |y| ≤ r_outer`: the radial range is split at log-spaced rings
//!   and at every radius where x ± y crosses a grid line, so each segment sees
//!   a smooth piece of the interpolant; Gauss–Legendre on each segment;
//! * beyond that, a field with a known far constant is integrated in closed
//!   form (dyadic shells again), otherwise a bound on the discarded part is
//!   reported.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{add, dot, norm, scale, sub, GridField, Point};
use crate::params::{EllipticityParams, KernelSpec};
use crate::quad::{dyadic, Rule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Defaults to 2h.
    pub r_inner: Option<f64>,
    /// Defaults to 4R.
    pub r_outer: Option<f64>,
    pub rings_per_decade: usize,
    /// Directions on the circle (n = 2 only).
    pub angular_points: usize,
    /// Integrate the quadratic model inside `r_inner`; when off that part is
    /// only reported in `inner_estimate`.
    pub taylor_inner: bool,
    /// Gauss points per radial segment.
    pub points_per_segment: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            r_inner: None,
            r_outer: None,
            rings_per_decade: 16,
            angular_points: 32,
            taylor_inner: true,
            points_per_segment: 3,
        }
    }
}

impl QuadratureConfig {
    fn resolve(&self, u: &GridField) -> Result<(f64, f64)> {
        let r_in = self.r_inner.unwrap_or(2.0 * u.spacing());
        let r_out = self.r_outer.unwrap_or(4.0 * u.box_radius());
        if !(r_in > 0.0 && r_in < r_out && r_out.is_finite()) {
            return Err(Error::invalid(format!("need 0 < r_inner ({r_in}) < r_outer ({r_out})")));
        }
        if r_out < u.box_radius() {
            return Err(Error::invalid(format!("r_outer {r_out} is smaller than the box radius {}", u.box_radius())));
        }
        if self.rings_per_decade < 4 {
            return Err(Error::invalid("rings_per_decade must be at least 4"));
        }
        if u.dim() == 2 && self.angular_points < 2 {
            return Err(Error::invalid("angular_points must be at least 2"));
        }
        if self.points_per_segment < 2 {
            return Err(Error::invalid("points_per_segment must be at least 2"));
        }
        if !self.taylor_inner && r_in < 0.5 * u.spacing() {
            return Err(Error::Resolution(format!(
                "r_inner = {r_in} is below half the grid spacing {} and the inner model is off",
                u.spacing()
            )));
        }
        Ok((r_in, r_out))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OperatorValue {
    pub value: f64,
    pub even_contribution: f64,
    pub odd_contribution: f64,
    /// Magnitude of the contribution of B_{r_inner}.
    pub inner_estimate: f64,
    /// Bound on any part of the integral that was not evaluated (zero with
    /// the built-in tails, which are integrated to infinity).
    pub truncation_bound: f64,
    /// Internal error estimate of the radial quadrature.
    pub quad_error: f64,
}

impl OperatorValue {
    /// Combined tolerance used when comparing two evaluations.
    pub fn tolerance(&self) -> f64 {
        self.truncation_bound + self.quad_error
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Quadratic model u(x + y) ≈ u(x) + g·y + ½ yᵀ D y from centred differences
/// at steps h and 2h, Richardson-combined to fourth order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalModel {
    pub value: f64,
    pub gradient: Point,
    pub hessian: [[f64; 2]; 2],
}

impl LocalModel {
    pub fn fit(u: &GridField, x: Point) -> Self {
        let h = u.spacing();
        let fine = Self::stencil(u, x, h);
        let coarse = Self::stencil(u, x, 2.0 * h);
        let r = |a: f64, b: f64| (4.0 * a - b) / 3.0;
        LocalModel {
            value: fine.value,
            gradient: [r(fine.gradient[0], coarse.gradient[0]), r(fine.gradient[1], coarse.gradient[1])],
            hessian: [
                [r(fine.hessian[0][0], coarse.hessian[0][0]), r(fine.hessian[0][1], coarse.hessian[0][1])],
                [r(fine.hessian[1][0], coarse.hessian[1][0]), r(fine.hessian[1][1], coarse.hessian[1][1])],
            ],
        }
    }

    /// Second-order model from the 3ⁿ stencil of step h.
    fn stencil(u: &GridField, x: Point, h: f64) -> Self {
        let c = u.eval_cubic(x);
        let ax = |d: usize| -> (f64, f64) {
            let e = if d == 0 { [h, 0.0] } else { [0.0, h] };
            let p = u.eval_cubic(add(x, e));
            let m = u.eval_cubic(sub(x, e));
            ((p - m) / (2.0 * h), (p + m - 2.0 * c) / (h * h))
        };
        let (g0, d00) = ax(0);
        if u.dim() == 1 {
            return LocalModel { value: c, gradient: [g0, 0.0], hessian: [[d00, 0.0], [0.0, 0.0]] };
        }
        let (g1, d11) = ax(1);
        let pp = u.eval_cubic(add(x, [h, h]));
        let pm = u.eval_cubic(add(x, [h, -h]));
        let mp = u.eval_cubic(add(x, [-h, h]));
        let mm = u.eval_cubic(add(x, [-h, -h]));
        let d01 = (pp - pm - mp + mm) / (4.0 * h * h);
        LocalModel { value: c, gradient: [g0, g1], hessian: [[d00, d01], [d01, d11]] }
    }

    /// θᵀDθ.
    pub fn curvature(&self, t: Point) -> f64 {
        let d = &self.hessian;
        t[0] * t[0] * d[0][0] + 2.0 * t[0] * t[1] * d[0][1] + t[1] * t[1] * d[1][1]
    }
}

/// Quadrature directions θ with weights: ±1 in 1D, midpoints of N equal arcs in 2D.
pub fn directions(dim: usize, angular_points: usize) -> Vec<(Point, f64)> {
    if dim == 1 {
        vec![([1.0, 0.0], 1.0), ([-1.0, 0.0], 1.0)]
    } else {
        let w = std::f64::consts::TAU / angular_points as f64;
        (0..angular_points)
            .map(|j| {
                let t = w * (j as f64 + 0.5);
                ([t.cos(), t.sin()], w)
            })
            .collect()
    }
}

/// Radii in (lo, hi) where x + rθ or x − rθ crosses a grid line.
fn crossing_radii(u: &GridField, x: Point, theta: Point, lo: f64, hi: f64, out: &mut Vec<f64>) {
    let r = u.box_radius();
    let h = u.spacing();
    let lines = u.nodes_per_axis();
    for d in 0..u.dim() {
        let t = theta[d];
        if t.abs() < 1e-14 {
            continue;
        }
        for s in [1.0, -1.0] {
            // x_d + s r t = -R + i h
            let ts = s * t;
            let i_lo = ((x[d] + ts * lo + r) / h).min((x[d] + ts * hi + r) / h).ceil().max(0.0) as usize;
            let i_hi = ((x[d] + ts * lo + r) / h).max((x[d] + ts * hi + r) / h).floor();
            if i_hi < 0.0 {
                continue;
            }
            let i_hi = (i_hi as usize).min(lines - 1);
            for i in i_lo..=i_hi {
                let rr = (-r + i as f64 * h - x[d]) / ts;
                if rr > lo && rr < hi {
                    out.push(rr);
                }
            }
        }
    }
}

/// The quantity integrated against dy: given y, δ_e and δ_o, returns the
/// (even, odd) parts of the integrand.
trait Integrand {
    fn sample(&self, y: Point, de: f64, dodd: f64) -> (f64, f64);
}

impl<F: Fn(Point, f64, f64) -> (f64, f64)> Integrand for F {
    fn sample(&self, y: Point, de: f64, dodd: f64) -> (f64, f64) {
        self(y, de, dodd)
    }
}

fn integrate(u: &GridField, x: Point, q: &QuadratureConfig, f: &impl Integrand) -> Result<OperatorValue> {
    let (r_in, r_out) = q.resolve(u)?;
    let n = u.dim();
    let ux = u.eval_cubic(x);
    let model = LocalModel::fit(u, x);
    let seg_hi = Rule::new(q.points_per_segment);
    let seg_lo = Rule::new(q.points_per_segment - 1);
    let shell_hi = Rule::new(6);
    let shell_lo = Rule::new(4);

    let far = u.far_field().filter(|f| n == 1 || f.plus == f.minus);
    let r_far = far.map(|f| r_out.max(f.radius + norm(x)));
    let r_hi = r_far.unwrap_or(r_out);

    let mut rings = Vec::new();
    let ratio = 10f64.powf(1.0 / q.rings_per_decade as f64);
    let mut r = r_in;
    while r < r_hi {
        rings.push(r);
        r *= ratio;
    }
    rings.push(r_hi);

    let mut out = OperatorValue::default();
    let mut bad: Option<Point> = None;
    let mut check = |y: Point, v: (f64, f64)| -> (f64, f64) {
        if !(v.0.is_finite() && v.1.is_finite()) {
            bad.get_or_insert(y);
            (0.0, 0.0)
        } else {
            v
        }
    };
    let mut breaks = Vec::new();
    for (theta, weight) in directions(n, q.angular_points) {
        let jac = |r: f64| r.powi(n as i32 - 1);

        // inner ball, quadratic model
        let qd = model.curvature(theta);
        let gt = dot(model.gradient, theta);
        let (mut ie, mut io) = (0.0, 0.0);
        for part in 0..2 {
            let (v, e) = dyadic(
                |r| {
                    let y = scale(theta, r);
                    let s = check(y, f.sample(y, r * r * qd, 2.0 * r * gt));
                    (if part == 0 { s.0 } else { s.1 }) * jac(r)
                },
                r_in,
                true,
                &shell_hi,
                &shell_lo,
            );
            if part == 0 {
                ie = v;
            } else {
                io = v;
            }
            out.quad_error += weight * e;
        }
        out.inner_estimate += weight * (ie.abs() + io.abs());
        if q.taylor_inner {
            out.even_contribution += weight * ie;
            out.odd_contribution += weight * io;
        }

        // resolved annulus
        breaks.clear();
        breaks.extend_from_slice(&rings);
        crossing_radii(u, x, theta, r_in, r_hi, &mut breaks);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs());
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mut seg = |rule: &Rule| -> (f64, f64) {
                let mut se = 0.0;
                let mut so = 0.0;
                for (r, wr) in rule.points(a, b) {
                    let y = scale(theta, r);
                    let (up, um) = (u.eval_cubic(add(x, y)), u.eval_cubic(sub(x, y)));
                    let (de, dodd) = ((up - ux) + (um - ux), up - um);
                    let s = check(y, f.sample(y, de, dodd));
                    se += wr * s.0 * jac(r);
                    so += wr * s.1 * jac(r);
                }
                (se, so)
            };
            let (he, ho) = seg(&seg_hi);
            let (le, lo) = seg(&seg_lo);
            out.even_contribution += weight * he;
            out.odd_contribution += weight * ho;
            out.quad_error += weight * ((he - le).abs() + (ho - lo).abs());
        }

        // far field
        if let (Some(far), Some(rf)) = (far, r_far) {
            let fp = far.value(n, theta);
            let fm = far.value(n, scale(theta, -1.0));
            let (ce, co) = (fp + fm - 2.0 * ux, fp - fm);
            for part in 0..2 {
                let (v, e) = dyadic(
                    |r| {
                        let y = scale(theta, r);
                        let s = check(y, f.sample(y, ce, co));
                        (if part == 0 { s.0 } else { s.1 }) * jac(r)
                    },
                    rf,
                    false,
                    &shell_hi,
                    &shell_lo,
                );
                if part == 0 {
                    out.even_contribution += weight * v;
                } else {
                    out.odd_contribution += weight * v;
                }
                out.quad_error += weight * e;
            }
        } else {
            // no constant far field: keep integrating the tail itself in
            // dyadic shells
            for part in 0..2 {
                let (v, e) = dyadic(
                    |r| {
                        let y = scale(theta, r);
                        let (up, um) = (u.eval_cubic(add(x, y)), u.eval_cubic(sub(x, y)));
                        let s = check(y, f.sample(y, up + um - 2.0 * ux, up - um));
                        (if part == 0 { s.0 } else { s.1 }) * jac(r)
                    },
                    r_out,
                    false,
                    &shell_hi,
                    &shell_lo,
                );
                if part == 0 {
                    out.even_contribution += weight * v;
                } else {
                    out.odd_contribution += weight * v;
                }
                out.quad_error += weight * e;
            }
        }
    }
    if let Some(y) = bad {
        return Err(Error::KernelSingularity { y });
    }
    out.value = out.even_contribution + out.odd_contribution;
    Ok(out)
}

fn check_dims(u: &GridField, p: &EllipticityParams) -> Result<()> {
    p.validate()?;
    if u.dim() != p.dim {
        return Err(Error::invalid(format!("field dimension {} differs from parameter dimension {}", u.dim(), p.dim)));
    }
    Ok(())
}

/// (2−σ)/|y|^{n+σ}.
fn even_weight(p: &EllipticityParams, r: f64) -> f64 {
    (2.0 - p.sigma) / r.powf(p.dim as f64 + p.sigma)
}

/// (1−τ)/|y|^{n+τ}.
fn odd_weight(p: &EllipticityParams, r: f64) -> f64 {
    (1.0 - p.tau) / r.powf(p.dim as f64 + p.tau)
}

fn extremal_even_sample(p: &EllipticityParams, sign: Sign, r: f64, de: f64) -> f64 {
    let w = even_weight(p, r);
    let coef = match (sign, de > 0.0) {
        (Sign::Plus, true) | (Sign::Minus, false) => p.lambda_hi,
        _ => p.lambda_lo,
    };
    coef * w * de
}

/// Lu(x) for a translation invariant kernel. The kernel is expected to be in L0.
pub fn eval_linear(spec: &KernelSpec, u: &GridField, x: Point, q: &QuadratureConfig) -> Result<OperatorValue> {
    if u.dim() != spec.params.dim {
        return Err(Error::invalid("kernel and field dimensions differ"));
    }
    integrate(u, x, q, &|y: Point, de: f64, dodd: f64| (spec.even(y) * de, spec.odd(y) * dodd))
}

/// M_σ^± u(x): δ_e⁺ weighted by Λ (λ for `Minus`) and δ_e⁻ by λ (Λ).
pub fn eval_extremal_even(u: &GridField, x: Point, p: &EllipticityParams, sign: Sign, q: &QuadratureConfig) -> Result<OperatorValue> {
    check_dims(u, p)?;
    integrate(u, x, q, &|y: Point, de: f64, _: f64| (extremal_even_sample(p, sign, norm(y), de), 0.0))
}

/// |D_τ| u(x) = (1−τ) ∫ |δ_o| / |y|^{n+τ}.
#[allow(non_snake_case)]
pub fn eval_D_tau(u: &GridField, x: Point, p: &EllipticityParams, q: &QuadratureConfig) -> Result<OperatorValue> {
    check_dims(u, p)?;
    integrate(u, x, q, &|y: Point, _: f64, dodd: f64| (0.0, odd_weight(p, norm(y)) * dodd.abs()))
}

/// M^±_{L0} u = M_σ^± u ± b |D_τ| u.
#[allow(non_snake_case)]
pub fn eval_M_L0(u: &GridField, x: Point, p: &EllipticityParams, sign: Sign, q: &QuadratureConfig) -> Result<OperatorValue> {
    check_dims(u, p)?;
    let s = sign.factor();
    integrate(u, x, q, &|y: Point, de: f64, dodd: f64| {
        let r = norm(y);
        (extremal_even_sample(p, sign, r, de), s * p.b * odd_weight(p, r) * dodd.abs())
    })
}

/// Pointwise optimum over L̃0 at one y: K_e ∈ [λW_e, ΛW_e] and
/// |K_o| ≤ min(bW_o, K_e). Returns (K_e δ_e, K_o δ_o).
pub fn tilde_sample(p: &EllipticityParams, sign: Sign, r: f64, de: f64, dodd: f64) -> (f64, f64) {
    let we = even_weight(p, r);
    let bo = p.b * odd_weight(p, r);
    let (lo, hi) = (p.lambda_lo * we, p.lambda_hi * we);
    let s = sign.factor();
    let mut best: Option<(f64, f64)> = None;
    for ke in [lo, hi, bo.clamp(lo, hi)] {
        let cand = (ke * de, s * bo.min(ke) * dodd.abs());
        let better = match best {
            None => true,
            Some(b) => s * (cand.0 + cand.1) > s * (b.0 + b.1),
        };
        if better {
            best = Some(cand);
        }
    }
    best.unwrap_or((0.0, 0.0))
}

/// M^±_{L̃0} u(x), the extremal operators of the nonnegative subclass.
#[allow(non_snake_case)]
pub fn eval_M_L0_tilde(u: &GridField, x: Point, p: &EllipticityParams, sign: Sign, q: &QuadratureConfig) -> Result<OperatorValue> {
    check_dims(u, p)?;
    integrate(u, x, q, &|y: Point, de: f64, dodd: f64| tilde_sample(p, sign, norm(y), de, dodd))
}

/// A finite inf-sup family: the operator is min over groups of max over members.
#[derive(Clone, Debug)]
pub struct KernelFamily {
    groups: Vec<Vec<KernelSpec>>,
}

impl KernelFamily {
    pub fn new(groups: Vec<Vec<KernelSpec>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidFamily("family has no groups".into()));
        }
        if let Some(i) = groups.iter().position(Vec::is_empty) {
            return Err(Error::InvalidFamily(format!("group {i} is empty")));
        }
        Ok(KernelFamily { groups })
    }

    pub fn single(spec: KernelSpec) -> Self {
        KernelFamily { groups: vec![vec![spec]] }
    }

    pub fn groups(&self) -> &[Vec<KernelSpec>] {
        &self.groups
    }

    pub fn members(&self) -> impl Iterator<Item = &KernelSpec> {
        self.groups.iter().flatten()
    }
}

/// inf over groups of sup over members of Lu(x); returns the selected member's value.
pub fn eval_inf_sup(family: &KernelFamily, u: &GridField, x: Point, q: &QuadratureConfig) -> Result<OperatorValue> {
    let mut best: Option<OperatorValue> = None;
    for group in &family.groups {
        let mut group_best: Option<OperatorValue> = None;
        for spec in group {
            let v = eval_linear(spec, u, x, q)?;
            if group_best.is_none_or(|g| v.value > g.value) {
                group_best = Some(v);
            }
        }
        let g = group_best.ok_or_else(|| Error::InvalidFamily("empty group".into()))?;
        if best.is_none_or(|b| g.value < b.value) {
            best = Some(g);
        }
    }
    best.ok_or_else(|| Error::InvalidFamily("family has no groups".into()))
}
