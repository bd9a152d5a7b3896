//! Acceptance checks. Runs as a plain binary so every criterion prints one
//! PASS/FAIL line under `cargo test`. Pass criterion numbers as arguments to
//! run a subset, e.g. `cargo test --test acceptance -- 1 7`.

mod support;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nonlocal_lab::dirichlet::{barrier_interior, comparison_check, search_exterior_barrier};
use nonlocal_lab::envelope::{abp_cover, convex_envelope, CoverConfig};
use nonlocal_lab::grid::{rescale, ExplicitTail};
use nonlocal_lab::harness::{barrier_s_grid, rough_exterior_data, run_recipe, smooth_fields, synthetic_dip};
use nonlocal_lab::nonlocal::{
    eval_D_tau, eval_M_L0, eval_M_L0_tilde, eval_extremal_even, eval_linear, KernelFamily,
};
use nonlocal_lab::regularity::{
    c1alpha_pipeline, centers_in_ball, holder_certificate, oscillation_decay, point_estimate, resolved_levels,
    C1AlphaConfig, HolderConfig, TailFitConfig,
};
use nonlocal_lab::scheme::{Scheme, SchemeConfig};
use nonlocal_lab::{
    solve_with, Domain, DirichletProblem, EllipticityParams, ExperimentConfig, GridField, KernelSpec, Point,
    QuadratureConfig, SchemeOperator, Sign, SolverMethod, Tail,
};

type Check = Result<Outcome, String>;

struct Outcome {
    pass: bool,
    detail: String,
    /// Set when the failure matches a documented limitation exactly.
    expected_failure: bool,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into(), expected_failure: false }
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn tau_for(sigma: f64, m: f64) -> f64 {
    (sigma - m).min(0.99)
}

// ---------------------------------------------------------------------------
// 1. quadrature against adaptive Gauss-Kronrod

type Field1 = fn(f64) -> f64;

fn analytic_fields() -> Vec<(&'static str, Field1, bool)> {
    vec![
        ("gaussian", |x| (-x * x).exp(), true),
        ("narrow-gaussian", |x| (-4.0 * x * x).exp(), true),
        ("shifted-gaussian", |x| (-2.0 * (x - 0.3) * (x - 0.3)).exp(), true),
        ("cos-gaussian", |x| (2.0 * x).cos() * (-0.5 * x * x).exp(), true),
        ("odd-gaussian", |x| x * (-x * x).exp(), true),
        ("skew-gaussian", |x| (1.0 + x) * (-x * x).exp(), true),
        ("lorentzian", |x| 1.0 / (1.0 + x * x), false),
        ("lorentzian-squared", |x| 1.0 / (1.0 + x * x).powi(2), false),
        ("sech", |x| 1.0 / x.cosh(), false),
        ("sin-lorentzian", |x| x.sin() / (1.0 + x * x), false),
    ]
}

fn field_1d(name: &str, f: Field1, fast: bool, h: f64) -> Result<GridField, String> {
    let mut tail = ExplicitTail::new(name, move |x: Point| f(x[0])).with_bound(1.5);
    if fast {
        tail = tail.with_far_constant(8.0, 0.0);
    }
    GridField::from_fn(1, 2.0, h, |x| f(x[0]), Tail::Explicit(tail)).map_err(err)
}

fn criterion_1() -> Check {
    let q = QuadratureConfig::default();
    let xs = [-0.7, -0.35, 0.0, 0.2, 0.55];
    let mut worst: f64 = 0.0;
    let mut where_ = String::new();
    for sigma in [0.5, 1.0, 1.5, 1.9] {
        let p = EllipticityParams::new(sigma, tau_for(sigma, 0.25), 1.0, 1.0, 0.0, 1);
        let spec = KernelSpec::frac_laplace(p, 1.0);
        for (name, f, fast) in analytic_fields() {
            let u = field_1d(name, f, fast, 1.0 / 256.0)?;
            let oracle: Vec<f64> = xs.iter().map(|&x| support::linear_1d(&f, x, sigma, 2.0 - sigma, 0.5, 0.0)).collect();
            // points where the value nearly vanishes are measured against the field's scale
            let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (&x, &o) in xs.iter().zip(&oracle) {
                let v = eval_linear(&spec, &u, [x, 0.0], &q).map_err(err)?.value;
                let rel = (v - o).abs() / o.abs().max(1e-2 * scale);
                if rel > worst {
                    worst = rel;
                    where_ = format!("{name} σ={sigma} x={x}");
                }
            }
        }
    }
    Ok(Outcome::new(worst <= 1e-4, format!("max rel err {worst:.2e} ({where_}), limit 1e-4")))
}

// ---------------------------------------------------------------------------
// 2. scaling of M^±_σ and |D_τ|

fn criterion_2() -> Check {
    let q = QuadratureConfig::default();
    let mut worst_ratio: f64 = 0.0;
    let mut checks = 0;
    for sigma in [0.8, 1.5, 1.9] {
        let p = EllipticityParams::new(sigma, tau_for(sigma, 0.5), 1.0, 2.0, 0.0, 1);
        for (_, u) in smooth_fields(1, 2.0, 1.0 / 128.0).map_err(err)? {
            for alpha in [0.5, 2.0] {
                for beta in [0.5, 2.0] {
                    let ur = rescale(&u, alpha, beta).map_err(err)?;
                    for x in [-0.4, 0.1, 0.35] {
                        let y = [beta * x, 0.0];
                        let mut pairs = Vec::new();
                        for s in [Sign::Plus, Sign::Minus] {
                            let a = eval_extremal_even(&ur, [x, 0.0], &p, s, &q).map_err(err)?;
                            let b = eval_extremal_even(&u, y, &p, s, &q).map_err(err)?;
                            pairs.push((a, b, beta.powf(sigma)));
                        }
                        let a = eval_D_tau(&ur, [x, 0.0], &p, &q).map_err(err)?;
                        let b = eval_D_tau(&u, y, &p, &q).map_err(err)?;
                        pairs.push((a, b, beta.powf(p.tau)));
                        for (a, b, k) in pairs {
                            let gap = (a.value - alpha * k * b.value).abs();
                            let tol = a.tolerance() + alpha * k * b.tolerance() + 1e-12 * (1.0 + a.value.abs());
                            worst_ratio = worst_ratio.max(gap / tol);
                            checks += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(Outcome::new(worst_ratio <= 1.0, format!("{checks} comparisons, max gap/tolerance {worst_ratio:.3}")))
}

// ---------------------------------------------------------------------------
// 3. random L̃0 kernels sit between the extremal operators

fn random_tilde_kernel(rng: &mut ChaCha8Rng, idx: usize) -> KernelSpec {
    let sigma = rng.gen_range(1.05..1.95);
    let tau = tau_for(sigma, rng.gen_range(0.2..0.8));
    let (lo, hi) = (1.0, 2.0);
    let mut p = EllipticityParams::new(sigma, tau, lo, hi, 0.0, 1);
    p.b = rng.gen_range(0.0..1.0) * p.b_max();
    let (w1, f1) = (rng.gen_range(0.5..6.0), rng.gen_range(0.0..6.3));
    let (w2, f2) = (rng.gen_range(0.5..6.0), rng.gen_range(0.0..6.3));
    let b = p.b;
    let even = move |y: Point| {
        let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
        let a = lo + (hi - lo) * (0.5 + 0.5 * (w1 * r + f1).sin());
        a * (2.0 - sigma) * r.powf(-1.0 - sigma)
    };
    let odd = move |y: Point| {
        let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
        let a = lo + (hi - lo) * (0.5 + 0.5 * (w1 * r + f1).sin());
        let ke = a * (2.0 - sigma) * r.powf(-1.0 - sigma);
        let ko = b * (1.0 - tau) * r.powf(-1.0 - tau) * (w2 * r + f2).sin();
        y[0].signum() * ko.clamp(-ke, ke)
    };
    KernelSpec::custom(format!("tilde-{idx}"), p, even, odd)
}

fn criterion_3() -> Check {
    let q = QuadratureConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let fields = smooth_fields(1, 2.0, 1.0 / 128.0).map_err(err)?;
    let (mut sandwich_bad, mut chain_bad, mut n) = (0, 0, 0);
    let mut worst: f64 = f64::NEG_INFINITY;
    for k in 0..20 {
        let spec = random_tilde_kernel(&mut rng, k);
        let p = spec.params;
        for (_, u) in &fields {
            for _ in 0..50 {
                let x = [rng.gen_range(-1.0..1.0), 0.0];
                let l = eval_linear(&spec, u, x, &q).map_err(err)?;
                let lp = eval_M_L0(u, x, &p, Sign::Plus, &q).map_err(err)?;
                let lm = eval_M_L0(u, x, &p, Sign::Minus, &q).map_err(err)?;
                let tp = eval_M_L0_tilde(u, x, &p, Sign::Plus, &q).map_err(err)?;
                let tm = eval_M_L0_tilde(u, x, &p, Sign::Minus, &q).map_err(err)?;
                let tol = |a: &nonlocal_lab::nonlocal::OperatorValue, b: &nonlocal_lab::nonlocal::OperatorValue| {
                    a.tolerance() + b.tolerance() + 1e-12
                };
                let margins = [
                    lm.value - l.value - tol(&lm, &l),
                    l.value - lp.value - tol(&l, &lp),
                ];
                let chain = [
                    tp.value - lp.value - tol(&tp, &lp),
                    tm.value - tp.value - tol(&tm, &tp),
                    lm.value - tm.value - tol(&lm, &tm),
                    tm.value - l.value - tol(&tm, &l),
                    l.value - tp.value - tol(&l, &tp),
                ];
                sandwich_bad += margins.iter().filter(|&&m| m > 0.0).count();
                chain_bad += chain.iter().filter(|&&m| m > 0.0).count();
                worst = margins.iter().chain(&chain).fold(worst, |a, &b| a.max(b));
                n += 1;
            }
        }
    }
    Ok(Outcome::new(
        sandwich_bad == 0 && chain_bad == 0,
        format!("{n} points, sandwich violations {sandwich_bad}, chain violations {chain_bad}, worst excess {worst:.2e}"),
    ))
}

// ---------------------------------------------------------------------------
// 4. barriers over the σ grid

/// Cells known to fail: at σ = 1.99, τ = 0.99 the drift bound b_max meets
/// the interior barrier's exponent 1 + τ − σ = 0.
const KNOWN_BARRIER_FAILURES: &[(f64, &str, &str)] = &[(1.99, "b_max", "interior")];

fn criterion_4() -> Check {
    let q = QuadratureConfig::default();
    let s_grid = barrier_s_grid(1e-14);
    let mut failures: Vec<(f64, &str, &str)> = Vec::new();
    let mut cells = 0;
    let mut deltas = Vec::new();
    for sigma in [1.0, 1.5, 1.9, 1.99] {
        let base = EllipticityParams::new(sigma, tau_for(sigma, 0.5), 1.0, 2.0, 0.0, 1);
        for (label, frac) in [("0", 0.0), ("b_max/2", 0.5), ("b_max", 1.0)] {
            let mut p = base;
            p.b = frac * p.b_max();
            cells += 1;
            match barrier_interior(&p, &s_grid, &q) {
                Ok(int) if int.delta_star > 0.0 => deltas.push(int.delta_star),
                Ok(_) | Err(nonlocal_lab::Error::Barrier(_)) => failures.push((sigma, label, "interior")),
                Err(e) => return Err(err(e)),
            }
            let ext = search_exterior_barrier(&p, &[1.0, 2.0, 4.0], &[0.5, 0.25], &q).map_err(err)?;
            if ext.is_err() {
                failures.push((sigma, label, "exterior"));
            }
        }
    }
    let pass = failures.is_empty();
    let known = !pass && failures.len() == KNOWN_BARRIER_FAILURES.len()
        && failures.iter().zip(KNOWN_BARRIER_FAILURES).all(|(a, b)| a.0 == b.0 && a.1 == b.1 && a.2 == b.2);
    let listed: Vec<String> = failures.iter().map(|(s, b, w)| format!("σ={s} b={b} {w}")).collect();
    let dmin = deltas.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(Outcome {
        pass,
        detail: format!("{cells} cells, min delta_star {dmin:.3e}, failing: [{}]", listed.join("; ")),
        expected_failure: known,
    })
}

// ---------------------------------------------------------------------------
// 5. comparison on solver pairs

fn bump(c: f64, w: f64, a: f64) -> impl Fn(Point) -> f64 {
    move |x| a * (1.0 - ((x[0] - c) / w).powi(2)).max(0.0)
}

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tol = 1e-11;
    let mut worst_pair: f64 = f64::NEG_INFINITY;
    let mut worst_mp: f64 = f64::NEG_INFINITY;
    // the M_L0 schemes are not monotone (their odd weight outgrows the even one)
    let ops = ["l0tilde-plus", "extremal-minus", "extremal-plus", "frac-laplace(1)", "l0tilde-minus"];
    for k in 0..10 {
        let sigma = rng.gen_range(1.1..1.95);
        let mut p = EllipticityParams::new(sigma, tau_for(sigma, 0.5), 1.0, 2.0, 0.0, 1);
        p.b = 0.5 * p.b_max();
        let h = 1.0 / 64.0;
        let op = nonlocal_lab::harness::parse_operator(ops[k % ops.len()], &p).map_err(err)?;
        let (a, w) = (rng.gen_range(-1.0..1.0), rng.gen_range(2.0..9.0));
        let g1f = move |x: Point| if x[0].abs() > 1.0 { (w * x[0]).sin() * a + 0.3 * x[0] } else { 0.0 };
        let (c, bw, amp) = (rng.gen_range(1.1..1.9) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }, rng.gen_range(0.1..0.4), rng.gen_range(0.0..1.0));
        let extra = bump(c, bw, amp);
        let g1 = GridField::from_fn(1, 2.0, h, g1f, Tail::Constant(0.0)).map_err(err)?;
        let g2 = GridField::from_fn(1, 2.0, h, move |x| g1f(x) + if x[0].abs() > 1.0 { extra(x) } else { 0.0 }, Tail::Constant(0.0))
            .map_err(err)?;
        let f2v = rng.gen_range(-1.0..1.0);
        let (fc, fw, fa) = (rng.gen_range(-0.5..0.5), rng.gen_range(0.2..0.6), rng.gen_range(0.0..2.0));
        let fbump = bump(fc, fw, fa);
        let f2 = GridField::constant(1, 2.0, h, f2v).map_err(err)?;
        let f1 = GridField::from_fn(1, 2.0, h, move |x| f2v + fbump(x), Tail::Constant(f2v)).map_err(err)?;
        let d = Domain::unit_ball();
        let pr1 = DirichletProblem::new(d, g1.clone(), f1, op.clone(), p);
        let pr2 = DirichletProblem::new(d, g2, f2, op.clone(), p);
        let (u1, r1) = solve_with(&pr1, tol, 400, SolverMethod::PolicyIteration).map_err(err)?;
        let (u2, r2) = solve_with(&pr2, tol, 400, SolverMethod::PolicyIteration).map_err(err)?;
        if !(r1.converged && r2.converged) {
            return Ok(Outcome::new(false, format!("pair {k}: solver did not converge")));
        }
        let rep = comparison_check(&u1, &u2, &d, 1e-8).map_err(err)?;
        worst_pair = worst_pair.max(rep.worst_violation);

        // f = 0: the solution stays within the range of the data
        let zero = GridField::constant(1, 2.0, h, 0.0).map_err(err)?;
        let pr0 = DirichletProblem::new(d, g1.clone(), zero, op, p);
        let (u0, _) = solve_with(&pr0, tol, 400, SolverMethod::PolicyIteration).map_err(err)?;
        let (gmin, gmax) = g1.range();
        for (i, x) in u0.nodes() {
            if d.contains(x) {
                let v = u0.values()[i];
                worst_mp = worst_mp.max(gmin - v).max(v - gmax);
            }
        }
    }
    Ok(Outcome::new(
        worst_pair <= 1e-8 && worst_mp <= 1e-8,
        format!("max(u1 − u2) {worst_pair:.2e}, max range excess {worst_mp:.2e}, limit 1e-8"),
    ))
}

// ---------------------------------------------------------------------------
// 6. linear solve against a dense system

fn criterion_6() -> Check {
    let sigma = 1.5;
    let p = EllipticityParams::new(sigma, 0.5, 1.0, 2.0, 0.0, 1);
    let op = SchemeOperator::Family(KernelFamily::single(KernelSpec::frac_laplace(p, 1.0)));
    // L = (2−σ)∫δ_e|y|^{-1-σ} = −(2−σ)(2/C)(−Δ)^{σ/2}
    let f_val = -(2.0 - sigma) * 2.0 / support::frac_laplacian_constant(1, sigma) * support::torsion_constant(1, sigma);
    let exact = |x: f64| (1.0 - x * x).max(0.0).powf(0.5 * sigma);
    let tol = 1e-10;
    let mut errors = Vec::new();
    let mut worst_gap: f64 = 0.0;
    for h in [1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0] {
        let g = GridField::constant(1, 2.0, h, 0.0).map_err(err)?;
        let f = GridField::constant(1, 2.0, h, f_val).map_err(err)?;
        let d = Domain::unit_ball();
        let pr = DirichletProblem::new(d, g.clone(), f, op.clone(), p);
        // policy iteration solves the same linear system, so the coarsest
        // grid goes through pseudo-time to keep the oracle independent
        let (u, rep) = if h == 1.0 / 64.0 {
            solve_with(&pr, tol, 200_000, SolverMethod::PseudoTime)
        } else {
            solve_with(&pr, tol, 200, SolverMethod::PolicyIteration)
        }
        .map_err(err)?;
        if !rep.converged {
            return Ok(Outcome::new(false, format!("h={h}: solver did not converge")));
        }
        let scheme = Scheme::new(&op, &p, &g, d, &SchemeConfig::default()).map_err(err)?;
        let omega = scheme.omega().to_vec();
        let n = omega.len();
        let mut a = DMatrix::<f64>::zeros(n, n);
        for (j, &idx) in omega.iter().enumerate() {
            let mut e = vec![0.0; g.len()];
            e[idx] = 1.0;
            let col = scheme.apply(&g.with_values(e).map_err(err)?);
            for (i, v) in col.into_iter().enumerate() {
                a[(i, j)] = v;
            }
        }
        let rhs = DVector::from_element(n, f_val);
        let dense = a.lu().solve(&rhs).ok_or("dense system is singular")?;
        let mut gap: f64 = 0.0;
        let mut e_exact: f64 = 0.0;
        for (i, &idx) in omega.iter().enumerate() {
            gap = gap.max((u.values()[idx] - dense[i]).abs());
            e_exact = e_exact.max((u.values()[idx] - exact(u.node(idx)[0])).abs());
        }
        worst_gap = worst_gap.max(gap);
        errors.push(e_exact);
    }
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    Ok(Outcome::new(
        worst_gap <= 10.0 * tol && decreasing,
        format!(
            "max |u − dense| {worst_gap:.2e} (limit {:.0e}); error vs exact {:.3e}, {:.3e}, {:.3e}",
            10.0 * tol,
            errors[0],
            errors[1],
            errors[2]
        ),
    ))
}

// ---------------------------------------------------------------------------
// 7. 1D envelope against the brute-force hull

fn random_piecewise(rng: &mut ChaCha8Rng) -> impl Fn(Point) -> f64 + Clone {
    let k = rng.gen_range(4..12);
    let mut knots: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    knots.push(-1.0);
    knots.push(1.0);
    knots.sort_by(|a, b| a.total_cmp(b));
    let mut vals: Vec<f64> = knots.iter().map(|_| rng.gen_range(-1.0..0.5)).collect();
    let last = vals.len() - 1;
    vals[0] = rng.gen_range(0.0..0.5);
    vals[last] = rng.gen_range(0.0..0.5);
    let steps = rng.gen_bool(0.5);
    let slope = rng.gen_range(0.0..1.0);
    move |x: Point| {
        let t = x[0];
        if t <= -1.0 {
            return vals[0] + slope * (-1.0 - t);
        }
        if t >= 1.0 {
            return vals[last] + slope * (t - 1.0);
        }
        let j = knots.partition_point(|&k| k <= t).clamp(1, last);
        if steps {
            vals[j - 1]
        } else {
            let s = (t - knots[j - 1]) / (knots[j] - knots[j - 1]);
            (1.0 - s) * vals[j - 1] + s * vals[j]
        }
    }
}

fn criterion_7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1.0 / 32.0;
    let (mut worst_oracle, mut worst_idem, mut worst_mono): (f64, f64, f64) = (0.0, 0.0, f64::NEG_INFINITY);
    let mut tol_used: f64 = f64::INFINITY;
    let mut bad = 0;
    for _ in 0..20 {
        let f = random_piecewise(&mut rng);
        let u = GridField::from_fn(1, 3.0, h, f.clone(), Tail::Clamp).map_err(err)?;
        let env = convex_envelope(&u, None).map_err(err)?;
        let gam = &env.gamma;
        let inside: Vec<usize> = gam.nodes().filter(|(_, x)| x[0].abs() <= 3.0 + 1e-12).map(|(i, _)| i).collect();
        let xs: Vec<f64> = inside.iter().map(|&i| gam.node(i)[0]).collect();
        let w: Vec<f64> = xs.iter().map(|&x| u.eval([x, 0.0]).min(0.0)).collect();
        let brute = support::brute_lower_hull(&xs, &w);
        let d = inside.iter().zip(&brute).map(|(&i, b)| (gam.values()[i] - b).abs()).fold(0.0, f64::max);
        worst_oracle = worst_oracle.max(d);
        tol_used = tol_used.min(env.contact_tol);
        if d > env.contact_tol {
            bad += 1;
        }

        // re-enveloping Γ on B1 (u outside) reproduces Γ
        let g2 = gam.clone();
        let ff = f.clone();
        let w_field = GridField::from_fn(1, 3.0, h, move |x| if x[0].abs() <= 1.0 { g2.eval(x) } else { ff(x) }, Tail::Clamp)
            .map_err(err)?;
        let env2 = convex_envelope(&w_field, Some(env.contact_tol)).map_err(err)?;
        let di = gam.values().iter().zip(env2.gamma.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst_idem = worst_idem.max(di);

        // u ≤ v gives Γ_u ≤ Γ_v
        let (c, bw, amp) = (rng.gen_range(-1.0..1.0), rng.gen_range(0.1..0.5), rng.gen_range(0.0..0.5));
        let fb = bump(c, bw, amp);
        let fv = f.clone();
        let v = GridField::from_fn(1, 3.0, h, move |x| fv(x) + fb(x), Tail::Clamp).map_err(err)?;
        let env_v = convex_envelope(&v, None).map_err(err)?;
        let dm = gam.values().iter().zip(env_v.gamma.values()).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
        worst_mono = worst_mono.max(dm);
    }
    let pass = bad == 0 && worst_idem <= 1e-12 && worst_mono <= 1e-12;
    Ok(Outcome::new(
        pass,
        format!(
            "20 fields, max |Γ − brute| {worst_oracle:.2e} (smallest contact_tol {tol_used:.2e}), idempotence {worst_idem:.1e}, monotonicity excess {worst_mono:.1e}"
        ),
    ))
}

// ---------------------------------------------------------------------------
// 8. ABP covers of synthetic dips

fn criterion_8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut p = EllipticityParams::new(1.5, 1.0, 1.0, 2.0, 0.0, 1);
    p.b = 0.5 * p.b_max();
    let h = 1.0 / 256.0;
    let f = GridField::constant(1, 3.0, h, 1.0).map_err(err)?;
    let cfg = CoverConfig::new(1);
    let mut ratios = Vec::new();
    let mut all_good = true;
    for _ in 0..5 {
        let c = [rng.gen_range(-0.5..0.5), 0.0];
        let u = synthetic_dip(1, h, c, rng.gen_range(0.1..1.0), rng.gen_range(0.3..0.5)).map_err(err)?;
        let env = convex_envelope(&u, None).map_err(err)?;
        let cover = abp_cover(&u, &env, &f, &p, &cfg).map_err(err)?;
        all_good &= !cover.cubes.is_empty() && cover.cubes.iter().all(|q| q.meets_good);
        ratios.push(cover.abp_ratio(&u, 1));
    }
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let band = hi / lo;
    Ok(Outcome::new(
        all_good && lo > 0.0 && hi.is_finite() && band <= 4.0,
        format!("all cubes good: {all_good}, ratios in [{lo:.3}, {hi:.3}], band {band:.2} (limit 4)"),
    ))
}

// ---------------------------------------------------------------------------
// 9. Hölder exponents of the rough-data problem as σ → 2

fn criterion_9() -> Check {
    let h = 1.0 / 128.0;
    let mut mins = Vec::new();
    for sigma in [1.2, 1.5, 1.9, 1.99] {
        let mut p = EllipticityParams::new(sigma, tau_for(sigma, 0.5), 1.0, 2.0, 0.0, 1);
        p.b = 0.5 * p.b_max();
        let g = rough_exterior_data(1, 2.0, h).map_err(err)?;
        let f = GridField::constant(1, 2.0, h, 0.0).map_err(err)?;
        let pr = DirichletProblem::new(Domain::unit_ball(), g, f, SchemeOperator::ExtremalL0Tilde(Sign::Plus), p);
        let (u, rep) = solve_with(&pr, 1e-9, 400, SolverMethod::PolicyIteration).map_err(err)?;
        if !rep.converged {
            return Ok(Outcome::new(false, format!("σ={sigma}: solver did not converge")));
        }
        let centers = centers_in_ball(&u, 0.5, 8);
        let cert = holder_certificate(&u, &p, 0.0, &centers, &HolderConfig::default()).map_err(err)?;
        mins.push((sigma, cert.alpha_min.ok_or("no center could be fitted")?));
    }
    let lo = mins.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    let hi = mins.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
    let listed: Vec<String> = mins.iter().map(|(s, a)| format!("σ={s}: {a:.3}")).collect();
    Ok(Outcome::new(lo >= 0.05 && hi / lo <= 3.0, format!("min α_fit {}; spread ×{:.2}", listed.join(", "), hi / lo)))
}

// ---------------------------------------------------------------------------
// 10. known exponents

fn criterion_10() -> Check {
    let h = 1.0 / 4096.0;
    let u = GridField::from_fn(1, 1.0, h, |x| x[0].abs().sqrt(), Tail::Clamp).map_err(err)?;
    let tr = oscillation_decay(&u, [0.0, 0.0], 0.5, resolved_levels(&u, 0.5)).map_err(err)?;
    let a1 = tr.fitted_alpha.ok_or("oscillation fit failed")?;

    let v = GridField::from_fn(1, 1.0, 1.0 / 2048.0, |x| x[0].abs().powf(1.5), Tail::Clamp).map_err(err)?;
    let p = EllipticityParams::new(1.5, 1.0, 1.0, 2.0, 0.0, 1);
    let rep = c1alpha_pipeline(&v, &p, 0.5, None, &C1AlphaConfig::default()).map_err(err)?;
    let a2 = rep.final_alpha.ok_or("final stage not fitted")?;
    Ok(Outcome::new(
        (a1 - 0.5).abs() <= 0.05 && (a2 - 0.5).abs() <= 0.05,
        format!("|x|^(1/2): α {a1:.4}; |x|^(3/2) final stage: α {a2:.4}; target 0.50 ± 0.05"),
    ))
}

// ---------------------------------------------------------------------------
// 11. level-set tail of min(10, 1/|x|)

fn criterion_11() -> Check {
    let f = |x: Point| (1.0 / x[0].abs()).min(10.0);
    let tail = ExplicitTail::new("reciprocal", f).with_bound(10.0);
    let u = GridField::from_fn(1, 2.0, 1.0 / 1024.0, f, Tail::Explicit(tail)).map_err(err)?;
    let p = EllipticityParams::new(1.5, 0.5, 1.0, 2.0, 0.0, 1);
    // κ = eps0 / (1 + ‖u‖)^{1/(σ−τ)} = 1
    let eps0 = (1.0 + u.sup_norm()).powf(1.0 / (p.sigma - p.tau));
    let cfg = TailFitConfig { strict_precondition: false, ..Default::default() };
    let fit = point_estimate(&u, &p, 0.0, eps0, &cfg).map_err(err)?;
    let e = fit.fitted_eps.ok_or("tail fit failed")?;
    Ok(Outcome::new(
        (e - 1.0).abs() <= 0.05 && (fit.kappa - 1.0).abs() < 1e-12,
        format!("fitted_eps {e:.4} over {} thresholds (κ = {}), target 1.00 ± 0.05", fit.fit_points, fit.kappa),
    ))
}

// ---------------------------------------------------------------------------
// 12. byte-identical reruns

fn read_csvs(dir: &std::path::Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).map_err(err)? {
        let path = e.map_err(err)?.path();
        if path.extension().is_some_and(|x| x == "csv") {
            out.insert(path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).map_err(err)?);
        }
    }
    Ok(out)
}

fn criterion_12() -> Check {
    let tmp = tempfile::tempdir().map_err(err)?;
    let mut files = 0;
    for recipe in nonlocal_lab::config::RECIPES {
        let mut cfg = ExperimentConfig { recipe: recipe.to_string(), seed: 12, threads: 2, ..Default::default() };
        if recipe != "barrier-suite" {
            cfg.sigma = vec![1.2, 1.7];
        }
        cfg.extra.insert("save_solutions".into(), vec!["true".into()]);
        let mut runs = Vec::new();
        for k in 0..2 {
            cfg.out = tmp.path().join(format!("{recipe}-{k}"));
            run_recipe(&cfg).map_err(err)?;
            runs.push(read_csvs(&cfg.out)?);
        }
        if runs[0].is_empty() || runs[0] != runs[1] {
            return Ok(Outcome::new(false, format!("{recipe}: outputs differ between runs")));
        }
        files += runs[0].len();
    }
    Ok(Outcome::new(true, format!("{} recipes, {files} CSV files identical across reruns", nonlocal_lab::config::RECIPES.len())))
}

// ---------------------------------------------------------------------------

struct Criterion {
    id: usize,
    name: &'static str,
    limit: Duration,
    run: fn() -> Check,
}

fn main() {
    let secs = Duration::from_secs;
    let all = [
        Criterion { id: 1, name: "quadrature oracle", limit: secs(60), run: criterion_1 },
        Criterion { id: 2, name: "scaling law", limit: secs(60), run: criterion_2 },
        Criterion { id: 3, name: "extremal sandwich", limit: secs(120), run: criterion_3 },
        Criterion { id: 4, name: "barrier certificates", limit: secs(300), run: criterion_4 },
        Criterion { id: 5, name: "discrete comparison", limit: secs(300), run: criterion_5 },
        Criterion { id: 6, name: "linear-solve oracle", limit: secs(120), run: criterion_6 },
        Criterion { id: 7, name: "envelope oracle", limit: secs(60), run: criterion_7 },
        Criterion { id: 8, name: "ABP pipeline", limit: secs(180), run: criterion_8 },
        Criterion { id: 9, name: "Hölder uniformity", limit: secs(900), run: criterion_9 },
        Criterion { id: 10, name: "known exponents", limit: secs(60), run: criterion_10 },
        Criterion { id: 11, name: "point-estimate fit", limit: secs(30), run: criterion_11 },
        Criterion { id: 12, name: "determinism", limit: secs(600), run: criterion_12 },
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    let mut expected = Vec::new();
    for c in all.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let t0 = Instant::now();
        let out = (c.run)().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        let dt = t0.elapsed();
        let in_time = dt <= c.limit;
        let pass = out.pass && in_time;
        let timing = if in_time { format!("{:.1}s", dt.as_secs_f64()) } else { format!("{:.1}s, over {}s", dt.as_secs_f64(), c.limit.as_secs()) };
        println!("criterion {:>2} {} {}: {} [{timing}]", c.id, if pass { "PASS" } else { "FAIL" }, c.name, out.detail);
        if !pass {
            if out.expected_failure && in_time {
                expected.push(c.id);
            } else {
                unexpected.push(c.id);
            }
        }
    }
    if !expected.is_empty() {
        println!("known failures (documented limitation): {expected:?}");
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
