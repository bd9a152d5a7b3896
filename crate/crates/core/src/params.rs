//! Ellipticity parameters, the hypotheses H1–H3 and kernel specifications
//! with class-membership checks (L0, L̃0, L1).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm, sub, Point};
use crate::quad;

/// (σ0, τ0, m, A0).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniversalConstants {
    pub sigma0: f64,
    pub tau0: f64,
    pub m: f64,
    pub a0: f64,
}

impl Default for UniversalConstants {
    fn default() -> Self {
        UniversalConstants { sigma0: 0.5, tau0: 0.1, m: 0.5, a0: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityParams {
    pub sigma: f64,
    pub tau: f64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub b: f64,
    pub dim: usize,
    pub universal: UniversalConstants,
}

impl EllipticityParams {
    pub fn new(sigma: f64, tau: f64, lambda_lo: f64, lambda_hi: f64, b: f64, dim: usize) -> Self {
        EllipticityParams { sigma, tau, lambda_lo, lambda_hi, b, dim, universal: UniversalConstants::default() }
    }

    pub fn with_universal(mut self, universal: UniversalConstants) -> Self {
        self.universal = universal;
        self
    }

    /// Structural validity needed by every operator (not H1–H3).
    pub fn validate(&self) -> Result<()> {
        let vals = [self.sigma, self.tau, self.lambda_lo, self.lambda_hi, self.b];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::invalid(format!("dimension {} not in {{1, 2}}", self.dim)));
        }
        if !(self.sigma > 0.0 && self.sigma < 2.0) {
            return Err(Error::invalid(format!("sigma = {} not in (0, 2)", self.sigma)));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::invalid(format!("tau = {} not in (0, 1)", self.tau)));
        }
        if !(self.lambda_lo > 0.0 && self.lambda_lo <= self.lambda_hi) {
            return Err(Error::invalid("need 0 < lambda_lo <= lambda_hi"));
        }
        if self.b < 0.0 {
            return Err(Error::invalid("b must be nonnegative"));
        }
        Ok(())
    }

    /// Largest b allowed by H3 for the current λ, A0, σ, τ.
    pub fn b_max(&self) -> f64 {
        self.lambda_lo * self.universal.a0 * (2.0 - self.sigma) / (1.0 - self.tau)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub pass: bool,
    /// Smallest slack among the inequalities making up the hypothesis.
    pub margin: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub h1: HypothesisCheck,
    pub h2: HypothesisCheck,
    pub h3: HypothesisCheck,
    /// 0 < λ ≤ Λ.
    pub ellipticity: HypothesisCheck,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.h1.pass && self.h2.pass && self.h3.pass && self.ellipticity.pass
    }

    /// Names of the failing hypotheses.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for (name, c) in [("H1", self.h1), ("H2", self.h2), ("H3", self.h3), ("ellipticity", self.ellipticity)] {
            if !c.pass {
                out.push(name);
            }
        }
        out
    }
}

// Slack tolerated on non-strict inequalities so that decimal inputs sitting
// exactly on an edge (1.99 - 0.99 >= 1.0) are not rejected by rounding.
const EDGE_TOL: f64 = 1e-12;

fn weak(lhs: f64, rhs: f64) -> (bool, f64) {
    let margin = lhs - rhs;
    (margin >= -EDGE_TOL * lhs.abs().max(rhs.abs()).max(1.0), margin)
}

fn strict(lhs: f64, rhs: f64) -> (bool, f64) {
    let margin = lhs - rhs;
    (margin > 0.0, margin)
}

fn combine(parts: &[(bool, f64)]) -> HypothesisCheck {
    HypothesisCheck {
        pass: parts.iter().all(|p| p.0),
        margin: parts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
    }
}

pub fn check_hypotheses(p: &EllipticityParams) -> Result<HypothesisReport> {
    let u = p.universal;
    let all = [p.sigma, p.tau, p.lambda_lo, p.lambda_hi, p.b, u.sigma0, u.tau0, u.m, u.a0];
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("hypothesis check needs finite parameters"));
    }
    let h1 = combine(&[
        strict(2.0, p.sigma),
        weak(p.sigma, u.sigma0),
        strict(u.sigma0, 0.0),
        strict(p.sigma.min(1.0), p.tau),
        weak(p.tau, u.tau0),
        strict(u.tau0, 0.0),
    ]);
    let h2 = combine(&[weak(p.sigma - p.tau, u.m), strict(u.m, 0.0)]);
    let h3 = combine(&[weak(p.lambda_lo * u.a0 * (2.0 - p.sigma), p.b * (1.0 - p.tau))]);
    let ellipticity = combine(&[strict(p.lambda_lo, 0.0), weak(p.lambda_hi, p.lambda_lo)]);
    Ok(HypothesisReport { h1, h2, h3, ellipticity })
}

pub type KernelFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// Sign with sgn(0) = 0.
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn unit_sphere_area(dim: usize) -> f64 {
    if dim == 1 {
        2.0
    } else {
        2.0 * PI
    }
}

/// A translation invariant kernel K = K_e + K_o.
#[derive(Clone)]
pub struct KernelSpec {
    name: String,
    even: KernelFn,
    odd: KernelFn,
    pub params: EllipticityParams,
    pub rho0: f64,
    /// Declared constant C of the translate-integral bound.
    pub l1_constant: Option<f64>,
    /// K_e(r y) = r^{-n-σ} K_e(y) and K_o(r y) = r^{-n-odd_order} K_o(y).
    pub homogeneous: bool,
    pub odd_order: f64,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSpec")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("rho0", &self.rho0)
            .field("l1_constant", &self.l1_constant)
            .field("homogeneous", &self.homogeneous)
            .finish()
    }
}

pub const DEFAULT_RHO0: f64 = 1.0 / 16.0;

impl KernelSpec {
    /// A user-supplied kernel pair. Homogeneity is not assumed.
    pub fn custom(
        name: impl Into<String>,
        params: EllipticityParams,
        even: impl Fn(Point) -> f64 + Send + Sync + 'static,
        odd: impl Fn(Point) -> f64 + Send + Sync + 'static,
    ) -> Self {
        KernelSpec {
            name: name.into(),
            even: Arc::new(even),
            odd: Arc::new(odd),
            params,
            rho0: DEFAULT_RHO0,
            l1_constant: None,
            homogeneous: false,
            odd_order: params.tau,
        }
    }

    /// K_e = (2−σ)c/|y|^{n+σ}, K_o = 0.
    pub fn frac_laplace(params: EllipticityParams, c: f64) -> Self {
        Self::power_pair(format!("frac-laplace({c})"), params, c, 0.0, params.tau)
    }

    /// K_e = (2−σ)c/|y|^{n+σ}, K_o = (1−τ)b sgn(y₁)/|y|^{n+τ}.
    pub fn mixed(params: EllipticityParams, c: f64, b: f64) -> Self {
        Self::power_pair(format!("mixed({c},{b})"), params, c, b, params.tau)
    }

    /// K_e = 0, K_o = (1−τ)b sgn(y₁)/|y|^{n+τ}. Not elliptic on its own.
    pub fn odd_power(params: EllipticityParams, b: f64, tau: f64) -> Self {
        Self::power_pair(format!("odd-power({b},{tau})"), params, 0.0, b, tau)
    }

    fn power_pair(name: String, params: EllipticityParams, c: f64, b: f64, tau: f64) -> Self {
        let n = params.dim as f64;
        let sigma = params.sigma;
        let ae = (2.0 - sigma) * c;
        let ao = (1.0 - tau) * b;
        let even = move |y: Point| {
            if ae == 0.0 {
                0.0
            } else {
                ae / norm(y).powf(n + sigma)
            }
        };
        let odd = move |y: Point| {
            if ao == 0.0 {
                0.0
            } else {
                ao * sgn(y[0]) / norm(y).powf(n + tau)
            }
        };
        let mut spec = KernelSpec {
            name,
            even: Arc::new(even),
            odd: Arc::new(odd),
            params,
            rho0: DEFAULT_RHO0,
            l1_constant: None,
            homogeneous: true,
            odd_order: tau,
        };
        spec.l1_constant = Some(power_pair_l1_bound(params.dim, sigma, tau, ae, ao, spec.rho0));
        spec
    }

    /// Parses `frac-laplace(c)`, `mixed(c,b)` or `odd-power(b,tau)`.
    pub fn from_name(name: &str, params: EllipticityParams) -> Result<Self> {
        let name = name.trim();
        let open = name.find('(').ok_or_else(|| Error::Config(format!("kernel `{name}` has no arguments")))?;
        if !name.ends_with(')') {
            return Err(Error::Config(format!("kernel `{name}` is missing `)`")));
        }
        let head = &name[..open];
        let args: Vec<f64> = name[open + 1..name.len() - 1]
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Config(format!("kernel `{name}`: {e}"))))
            .collect::<Result<_>>()?;
        match (head, args.as_slice()) {
            ("frac-laplace", [c]) => Ok(Self::frac_laplace(params, *c)),
            ("mixed", [c, b]) => Ok(Self::mixed(params, *c, *b)),
            ("odd-power", [b, t]) => Ok(Self::odd_power(params, *b, *t)),
            _ => Err(Error::Config(format!("unknown kernel `{name}`"))),
        }
    }

    /// Changes ρ0; the declared constant of a built-in kernel is recomputed.
    pub fn with_rho0(mut self, rho0: f64) -> Self {
        self.rho0 = rho0;
        if self.homogeneous && self.name_is_builtin() {
            let (ae, ao) = self.builtin_amplitudes();
            self.l1_constant = Some(power_pair_l1_bound(self.params.dim, self.params.sigma, self.odd_order, ae, ao, rho0));
        }
        self
    }

    pub fn with_l1_constant(mut self, c: f64) -> Self {
        self.l1_constant = Some(c);
        self
    }

    pub fn with_homogeneous(mut self, homogeneous: bool) -> Self {
        self.homogeneous = homogeneous;
        self
    }

    fn name_is_builtin(&self) -> bool {
        ["frac-laplace(", "mixed(", "odd-power("].iter().any(|p| self.name.starts_with(p))
    }

    fn builtin_amplitudes(&self) -> (f64, f64) {
        // at |y| = 1 the power laws reduce to their amplitudes
        let probe = [1.0, 0.0];
        (self.even(probe), self.odd(probe))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn even(&self, y: Point) -> f64 {
        (self.even)(y)
    }

    pub fn odd(&self, y: Point) -> f64 {
        (self.odd)(y)
    }

    pub fn kernel(&self, y: Point) -> f64 {
        self.even(y) + self.odd(y)
    }
}

/// Upper bound of the translate integral for the power-law pair, valid for
/// every shift |h| ≤ ρ0/2. The smooth part uses |∇K| on the segment (where
/// |y − t h| ≥ |y|/2); in 2D the sign jump of the odd part across y₁ = 0
/// contributes a strip term.
fn power_pair_l1_bound(dim: usize, sigma: f64, tau: f64, ae: f64, ao: f64, rho0: f64) -> f64 {
    let n = dim as f64;
    let area = unit_sphere_area(dim);
    let grad = |a: f64, s: f64| a * (n + s) * 2f64.powf(n + s + 1.0) * area * rho0.powf(-s - 1.0) / (s + 1.0);
    let mut c = grad(ae, sigma) + grad(ao, tau);
    if dim == 2 && ao != 0.0 {
        c += 2.0 * ao * 2f64.powf(2.0 + tau) * 4.0 * (rho0 / 2.0).powf(-1.0 - tau) / (1.0 + tau);
    }
    c
}

/// Result of [`verify_kernel_class`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub samples: usize,
    pub symmetric: bool,
    pub max_asymmetry: f64,
    pub lower_violations: usize,
    pub upper_violations: usize,
    pub odd_violations: usize,
    pub negative_samples: usize,
    pub l0: bool,
    pub l0_tilde: bool,
    pub l1: bool,
    /// Largest measured translate integral over the tested shifts.
    pub translate_integral: f64,
    pub declared_constant: Option<f64>,
}

/// 64 log-spaced radii in [1e-3, 1e3].
pub fn default_sample_radii() -> Vec<f64> {
    (0..64).map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / 63.0)).collect()
}

fn sample_directions(dim: usize, angles: usize) -> Vec<Point> {
    if dim == 1 {
        vec![[1.0, 0.0], [-1.0, 0.0]]
    } else {
        (0..angles)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / angles as f64;
                [t.cos(), t.sin()]
            })
            .collect()
    }
}

fn finite_or_err(v: f64, y: Point) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::KernelSingularity { y })
    }
}

/// Checks the L0 bounds, L̃0 positivity and the translate-integral bound on a
/// deterministic sample (16 angles in 2D).
pub fn verify_kernel_class(spec: &KernelSpec, sample_radii: &[f64]) -> Result<ClassReport> {
    verify_kernel_class_with(spec, sample_radii, 16)
}

pub fn verify_kernel_class_with(spec: &KernelSpec, sample_radii: &[f64], angles: usize) -> Result<ClassReport> {
    if sample_radii.is_empty() || sample_radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::invalid("sample radii must be nonempty and positive"));
    }
    let p = &spec.params;
    let n = p.dim as f64;
    let tol = 1e-12;
    let mut report = ClassReport {
        samples: 0,
        symmetric: true,
        max_asymmetry: 0.0,
        lower_violations: 0,
        upper_violations: 0,
        odd_violations: 0,
        negative_samples: 0,
        l0: false,
        l0_tilde: false,
        l1: false,
        translate_integral: f64::NAN,
        declared_constant: spec.l1_constant,
    };
    for &r in sample_radii {
        for dir in sample_directions(p.dim, angles) {
            let y = [dir[0] * r, dir[1] * r];
            let my = [-y[0], -y[1]];
            let ke = finite_or_err(spec.even(y), y)?;
            let ko = finite_or_err(spec.odd(y), y)?;
            let ke_m = finite_or_err(spec.even(my), my)?;
            let ko_m = finite_or_err(spec.odd(my), my)?;
            report.samples += 1;
            let scale_e = ke.abs().max(ke_m.abs()).max(f64::MIN_POSITIVE);
            let scale_o = ko.abs().max(ko_m.abs()).max(f64::MIN_POSITIVE);
            let asym = ((ke - ke_m).abs() / scale_e).max((ko + ko_m).abs() / scale_o);
            report.max_asymmetry = report.max_asymmetry.max(asym);
            if asym > tol {
                report.symmetric = false;
            }
            let unit = (2.0 - p.sigma) / r.powf(n + p.sigma);
            if ke < p.lambda_lo * unit * (1.0 - tol) {
                report.lower_violations += 1;
            }
            if ke > p.lambda_hi * unit * (1.0 + tol) {
                report.upper_violations += 1;
            }
            if ko.abs() > (1.0 - p.tau) * p.b / r.powf(n + p.tau) * (1.0 + tol) {
                report.odd_violations += 1;
            }
            if ke + ko < -tol * ke.abs() {
                report.negative_samples += 1;
            }
        }
    }
    report.l0 = report.symmetric && report.lower_violations == 0 && report.upper_violations == 0 && report.odd_violations == 0;
    report.l0_tilde = report.l0 && report.negative_samples == 0;
    report.translate_integral = translate_integral_max(spec)?;
    report.l1 = report.l0_tilde && spec.l1_constant.is_some_and(|c| report.translate_integral <= c);
    Ok(report)
}

/// Shifts |h| ∈ {ρ0/8, ρ0/4, ρ0/2} used for the translate integral.
pub fn translate_shifts(dim: usize, rho0: f64) -> Vec<Point> {
    let dirs: Vec<Point> = if dim == 1 {
        vec![[1.0, 0.0], [-1.0, 0.0]]
    } else {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        vec![[1.0, 0.0], [0.0, 1.0], [s, s], [-s, s]]
    };
    let mut out = Vec::new();
    for f in [0.125, 0.25, 0.5] {
        for d in &dirs {
            out.push([d[0] * f * rho0, d[1] * f * rho0]);
        }
    }
    out
}

fn translate_integral_max(spec: &KernelSpec) -> Result<f64> {
    let mut worst = 0.0f64;
    for h in translate_shifts(spec.params.dim, spec.rho0) {
        worst = worst.max(translate_integral(spec, h)?);
    }
    Ok(worst)
}

/// ∫_{|y| > ρ0} |K(y) − K(y − h)| / |h| dy.
pub fn translate_integral(spec: &KernelSpec, h: Point) -> Result<f64> {
    let hn = norm(h);
    if hn == 0.0 {
        return Err(Error::invalid("shift must be nonzero"));
    }
    let rho0 = spec.rho0;
    let mut bad: Option<Point> = None;
    let mut integrand = |y: Point| -> f64 {
        let v = (spec.kernel(y) - spec.kernel(sub(y, h))).abs() / hn;
        if !v.is_finite() && bad.is_none() {
            bad = Some(y);
        }
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    // y = ρ0 e^t, dy = y dt; the integrand decays at least like |y|^{-n-1}
    let t_max = (1e7f64).ln();
    let total = if spec.params.dim == 1 {
        let mut s = 0.0;
        for sign in [1.0, -1.0] {
            let (v, _) = quad::adaptive(
                |t| {
                    let r = rho0 * t.exp();
                    integrand([sign * r, 0.0]) * r
                },
                0.0,
                t_max,
                1e-12,
                1e-9,
            );
            s += v;
        }
        s
    } else {
        let (v, _) = quad::adaptive(
            |t| {
                let r = rho0 * t.exp();
                let mut ang = 0.0;
                // break the circle at the axis crossings where the odd part jumps
                for (a, b) in [(-0.5 * PI, 0.5 * PI), (0.5 * PI, 1.5 * PI)] {
                    let (w, _) = quad::adaptive(|th| integrand([r * th.cos(), r * th.sin()]), a, b, 1e-14, 1e-7);
                    ang += w;
                }
                ang * r * r
            },
            0.0,
            t_max,
            1e-12,
            1e-7,
        );
        v
    };
    if let Some(y) = bad {
        return Err(Error::KernelSingularity { y });
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> EllipticityParams {
        EllipticityParams::new(1.5, 0.5, 1.0, 2.0, 0.1, 1)
    }

    #[test]
    fn hypotheses_basic_example() {
        let r = check_hypotheses(&base()).unwrap();
        assert!(r.all_pass());
        assert!((r.h2.margin - 0.5).abs() < 1e-15);
        assert!((r.h3.margin - 0.45).abs() < 1e-15);
    }

    #[test]
    fn tau_equal_one_fails_h1() {
        let mut p = base();
        p.sigma = 1.0;
        p.tau = 1.0;
        assert!(!check_hypotheses(&p).unwrap().h1.pass);
    }

    #[test]
    fn equality_edges_pass_with_zero_margin() {
        let mut p = EllipticityParams::new(1.99, 0.99, 1.0, 1.0, 1.0, 1);
        p.universal.m = 1.0;
        let r = check_hypotheses(&p).unwrap();
        assert!(r.h2.pass && r.h2.margin.abs() < 1e-12);
        assert!(r.h3.pass && r.h3.margin.abs() < 1e-12);
    }

    #[test]
    fn non_finite_is_rejected() {
        let mut p = base();
        p.b = f64::NAN;
        assert!(check_hypotheses(&p).is_err());
    }

    #[test]
    fn frac_laplace_is_in_all_classes() {
        for dim in [1, 2] {
            let mut p = base();
            p.dim = dim;
            let k = KernelSpec::frac_laplace(p, 1.5);
            let r = verify_kernel_class(&k, &default_sample_radii()).unwrap();
            assert!(r.l0 && r.l0_tilde && r.l1, "{r:?}");
        }
    }

    #[test]
    fn weak_kernel_fails_lower_bound() {
        let k = KernelSpec::frac_laplace(base(), 0.5);
        let r = verify_kernel_class(&k, &default_sample_radii()).unwrap();
        assert!(!r.l0 && r.lower_violations > 0);
    }

    #[test]
    fn negative_total_kernel_fails_tilde_class() {
        let p = EllipticityParams::new(0.9, 0.5, 1.0, 2.0, 2.0, 1);
        let ke = |y: Point| 1.1 * 1.1 / y[0].abs().powf(1.9);
        let k = KernelSpec::custom("neg", p, ke, move |y| -sgn(y[0]) * (1.2 * ke(y)).min(1.0 / y[0].abs().powf(1.5)));
        let radii = [0.5, 1.0, 4.0];
        let r = verify_kernel_class(&k, &radii).unwrap();
        assert!(r.l0, "{r:?}");
        assert!(!r.l0_tilde);
    }

    #[test]
    fn singular_kernel_reports_location() {
        let k = KernelSpec::custom("bad", base(), |y| if y[0] > 0.9 && y[0] < 1.1 { f64::INFINITY } else { 1.0 }, |_| 0.0);
        match verify_kernel_class(&k, &[1.0]) {
            Err(Error::KernelSingularity { y }) => assert_eq!(y, [1.0, 0.0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn names_parse() {
        let p = base();
        assert_eq!(KernelSpec::from_name("mixed(1.5, 0.1)", p).unwrap().name(), "mixed(1.5,0.1)");
        assert!(KernelSpec::from_name("gauss(1)", p).is_err());
        let k = KernelSpec::from_name("odd-power(0.1,0.5)", p).unwrap();
        assert_eq!(k.even([0.3, 0.0]), 0.0);
        assert!(k.odd([0.3, 0.0]) > 0.0 && k.odd([-0.3, 0.0]) < 0.0);
    }
}
