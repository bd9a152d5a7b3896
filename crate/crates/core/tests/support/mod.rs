//! Independent oracles shared by the integration tests. Nothing here calls
//! into the quadrature, envelope or solver code of the library.

#![allow(dead_code)]

use statrs::function::gamma::gamma;

const XK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WK: [f64; 8] = [
    0.022_935_322_010_529_2,
    0.063_092_092_629_978_6,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gauss_kronrod(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let v = f(c - h * XK[i]) + f(c + h * XK[i]);
        k += WK[i] * v;
        if i % 2 == 1 {
            g += WG[i / 2] * v;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive 7-15 Gauss-Kronrod on [a, b].
pub fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn go(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, e) = gauss_kronrod(f, a, b);
        // the floor stops bisection once the estimate is at roundoff level
        if e <= tol.max(1e-12 * v.abs()) || depth > 40 || (b - a) < 1e-9 {
            return v;
        }
        let m = 0.5 * (a + b);
        go(f, a, m, 0.5 * tol, depth + 1) + go(f, m, b, 0.5 * tol, depth + 1)
    }
    go(f, a, b, tol, 0)
}

/// ∫_ℝ (u(x+y) + u(x−y) − 2u(x)) k_e(|y|) + (u(x+y) − u(x−y)) k_o(y) dy in 1D,
/// for k_e(r) = c_e r^{-1-s} and k_o(y) = c_o sgn(y) |y|^{-1-t}.
///
/// (0, 1e-3) uses the Taylor expansion with finite-difference u'', u''', u'''';
/// (1e-3, 1) is adaptive; on (1, ∞) the u(x) term is exact and the rest is
/// mapped to (0, 1) by r = 1/t.
pub fn linear_1d(u: &dyn Fn(f64) -> f64, x: f64, s: f64, c_e: f64, t: f64, c_o: f64) -> f64 {
    let ux = u(x);
    let integrand = |r: f64| {
        let (p, m) = (u(x + r), u(x - r));
        // both signs of y: the even part appears twice, δ_o(−y) sgn(−y) = δ_o(y) sgn(y)
        2.0 * ((p + m - 2.0 * ux) * c_e * r.powf(-1.0 - s) + (p - m) * c_o * r.powf(-1.0 - t))
    };
    let rc: f64 = 1e-3;
    let k: f64 = 0.01;
    let d4 = (u(x + 2.0 * k) - 4.0 * u(x + k) + 6.0 * ux - 4.0 * u(x - k) + u(x - 2.0 * k)) / k.powi(4);
    let d2 = (u(x + k) + u(x - k) - 2.0 * ux) / (k * k) - k * k * d4 / 12.0;
    let d1 = (8.0 * (u(x + k) - u(x - k)) - (u(x + 2.0 * k) - u(x - 2.0 * k))) / (12.0 * k);
    let d3 = (u(x + 2.0 * k) - 2.0 * u(x + k) + 2.0 * u(x - k) - u(x - 2.0 * k)) / (2.0 * k.powi(3));
    // δ_e ≈ u'' r² + u'''' r⁴/12, δ_o ≈ 2u' r + u''' r³/3
    let near = 2.0
        * (c_e * (d2 * rc.powf(2.0 - s) / (2.0 - s) + d4 * rc.powf(4.0 - s) / (12.0 * (4.0 - s)))
            + c_o * (2.0 * d1 * rc.powf(1.0 - t) / (1.0 - t) + d3 * rc.powf(3.0 - t) / (3.0 * (3.0 - t))));
    let mid = adaptive(&integrand, rc, 1.0, 1e-10);
    // beyond r = 1 the −2u(x) term integrates in closed form; the rest decays
    let decaying = |r: f64| {
        let (p, m) = (u(x + r), u(x - r));
        2.0 * ((p + m) * c_e * r.powf(-1.0 - s) + (p - m) * c_o * r.powf(-1.0 - t))
    };
    let far = -4.0 * ux * c_e / s
        + adaptive(&|t: f64| if t <= 0.0 { 0.0 } else { decaying(1.0 / t) / (t * t) }, 0.0, 1.0, 1e-10);
    near + mid + far
}

/// Normalising constant of (−Δ)^{s} in dimension n, s = σ/2:
/// (−Δ)^{s} u = C P.V.∫ (u(x) − u(y)) |x − y|^{-n-2s} dy.
pub fn frac_laplacian_constant(n: usize, sigma: f64) -> f64 {
    let s = 0.5 * sigma;
    let n = n as f64;
    4f64.powf(s) * gamma(0.5 * n + s) / (std::f64::consts::PI.powf(0.5 * n) * gamma(-s).abs())
}

/// (−Δ)^{σ/2} (1 − |x|²)_+^{σ/2} = 2^σ Γ(1 + σ/2) Γ((n + σ)/2) / Γ(n/2) inside B1.
pub fn torsion_constant(n: usize, sigma: f64) -> f64 {
    let s = 0.5 * sigma;
    let n = n as f64;
    2f64.powf(sigma) * gamma(1.0 + s) * gamma(0.5 * n + s) / gamma(0.5 * n)
}

/// Lower convex envelope of samples on sorted nodes. In one dimension every
/// point of the hull is a convex combination of two samples, so Γ(x_i) is the
/// smallest chord value over node pairs j ≤ i ≤ k (O(N³)).
pub fn brute_lower_hull(xs: &[f64], w: &[f64]) -> Vec<f64> {
    let n = xs.len();
    (0..n)
        .map(|i| {
            let mut best = w[i];
            for j in 0..i {
                for k in i + 1..n {
                    let t = (xs[i] - xs[j]) / (xs[k] - xs[j]);
                    best = best.min((1.0 - t) * w[j] + t * w[k]);
                }
            }
            best
        })
        .collect()
}
