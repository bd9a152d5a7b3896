//! One-dimensional quadrature rules.

/// Gauss–Legendre nodes and weights on [-1, 1] for `n` points (Newton on P_n).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// A Gauss–Legendre rule rescaled to arbitrary intervals.
#[derive(Clone, Debug)]
pub struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        Rule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// (point, weight) pairs on [a, b].
    pub fn points(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (c + r * x, r * w))
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.points(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

const GK_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(a: f64, b: f64, f: &mut impl FnMut(f64) -> f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * GK_WK[7];
    let mut g = fc * GK_WG[3];
    for j in 0..7 {
        let dx = r * GK_X[j];
        let s = f(c - dx) + f(c + dx);
        k += GK_WK[j] * s;
        if j % 2 == 1 {
            g += GK_WG[j / 2] * s;
        }
    }
    (k * r, ((k - g) * r).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integration of `f` over [a, b].
/// Returns (integral, error estimate).
pub fn adaptive(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> (f64, f64) {
    let mut stack = vec![(a, b, gk15(a, b, &mut f), 0u32)];
    let mut total = 0.0;
    let mut err = 0.0;
    let whole = stack[0].2 .0.abs();
    while let Some((lo, hi, (val, e), depth)) = stack.pop() {
        let width_share = (hi - lo).abs() / (b - a).abs().max(f64::MIN_POSITIVE);
        let allowed = abs_tol.max(rel_tol * whole) * width_share.max(1e-3);
        if e <= allowed || depth >= 60 {
            total += val;
            err += e;
            continue;
        }
        let mid = 0.5 * (lo + hi);
        stack.push((lo, mid, gk15(lo, mid, &mut f), depth + 1));
        stack.push((mid, hi, gk15(mid, hi, &mut f), depth + 1));
    }
    (total, err)
}

/// ∫ of `f` over (0, r0] (inward) or [r0, ∞) (outward) on dyadic shells, with
/// the remainder extrapolated geometrically from the last two shells.
pub fn dyadic(mut f: impl FnMut(f64) -> f64, r0: f64, inward: bool, hi: &Rule, lo: &Rule) -> (f64, f64) {
    const LEVELS: usize = 48;
    let mut total = 0.0;
    let mut err = 0.0;
    let mut prev = 0.0;
    let mut last = 0.0;
    for j in 0..LEVELS {
        let (a, b) = if inward {
            (r0 * 0.5f64.powi(j as i32 + 1), r0 * 0.5f64.powi(j as i32))
        } else {
            (r0 * 2f64.powi(j as i32), r0 * 2f64.powi(j as i32 + 1))
        };
        let v = hi.integrate(a, b, &mut f);
        let w = lo.integrate(a, b, &mut f);
        err += (v - w).abs();
        total += v;
        prev = last;
        last = v;
    }
    if prev != 0.0 {
        let rho = last / prev;
        if rho.is_finite() && rho > 0.0 && rho < 1.0 {
            total += last * rho / (1.0 - rho);
        }
    }
    (total, err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rules_integrate_polynomials_exactly() {
        for n in 1..=8 {
            let rule = Rule::new(n);
            for p in 0..(2 * n) {
                let got = rule.integrate(0.0, 2.0, |x| x.powi(p as i32));
                let exact = 2f64.powi(p as i32 + 1) / (p as f64 + 1.0);
                assert!((got - exact).abs() < 1e-12 * exact, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let (v, _) = adaptive(|x| x.powf(-0.5), 0.0, 1.0, 1e-12, 1e-12);
        assert!((v - 2.0).abs() < 1e-7);
        let (v, _) = adaptive(f64::sin, 0.0, std::f64::consts::PI, 1e-13, 1e-13);
        assert!((v - 2.0).abs() < 1e-12);
    }
}
