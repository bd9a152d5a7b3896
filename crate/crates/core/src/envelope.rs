//! Convex envelope of min(u, 0) on B₃, contact sets, the dyadic ring
//! opening test and the cube cover used by the ABP estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm, sub, GridField, Point, Tail};
use crate::params::EllipticityParams;

/// Radius of the ball carrying the envelope.
pub const SUPPORT_RADIUS: f64 = 3.0;

#[derive(Clone, Debug)]
pub struct EnvelopeResult {
    /// Envelope on the box [-3, 3]ⁿ; zero at nodes outside B₃ and in the tail.
    pub gamma: GridField,
    /// One element of the subdifferential per gamma node.
    pub subgradient: Vec<Point>,
    /// Gamma node indices where |u − Γ| ≤ contact_tol.
    pub contact_nodes: Vec<usize>,
    pub contact_tol: f64,
    pub support_radius: f64,
}

impl EnvelopeResult {
    /// Smallest second difference δ_e(Γ, x; e) over nodes of B₃ and unit grid offsets.
    pub fn convexity_defect(&self) -> f64 {
        let g = &self.gamma;
        let h = g.spacing();
        let mut offsets = vec![[h, 0.0]];
        if g.dim() == 2 {
            offsets.extend([[0.0, h], [h, h], [h, -h]]);
        }
        let mut worst = f64::INFINITY;
        for (_, x) in g.nodes() {
            if norm(x) > self.support_radius - 1.5 * h * (g.dim() as f64).sqrt() {
                continue;
            }
            for &e in &offsets {
                worst = worst.min(crate::grid::delta_even(g, x, e));
            }
        }
        worst
    }

    /// Largest violation of Γ(z) ≥ Γ(x) + p(x)·(z − x) over pairs of B₃ nodes.
    /// Quadratic in the node count; meant for tests and small grids.
    pub fn supporting_plane_defect(&self) -> f64 {
        let g = &self.gamma;
        let inside: Vec<(usize, Point)> = g.nodes().filter(|(_, x)| norm(*x) <= self.support_radius + 1e-12).collect();
        let mut worst = 0.0f64;
        for &(i, x) in &inside {
            let p = self.subgradient[i];
            for &(j, z) in &inside {
                let d = sub(z, x);
                let gap = g.values()[i] + p[0] * d[0] + p[1] * d[1] - g.values()[j];
                worst = worst.max(gap);
            }
        }
        worst
    }

    pub fn is_contact(&self, idx: usize) -> bool {
        self.contact_nodes.binary_search(&idx).is_ok()
    }
}

fn envelope_spacing(h: f64) -> f64 {
    let m = (SUPPORT_RADIUS / h).round();
    if (SUPPORT_RADIUS / h - m).abs() < 1e-9 {
        h
    } else {
        SUPPORT_RADIUS / (SUPPORT_RADIUS / h).ceil()
    }
}

/// Nodes (or tail samples) outside B₁ where u < 0.
fn negative_outside_unit_ball(u: &GridField) -> Vec<Point> {
    let mut bad: Vec<Point> = u.nodes().filter(|&(i, x)| norm(x) > 1.0 + 1e-12 && u.values()[i] < 0.0).map(|(_, x)| x).collect();
    let r = u.box_radius();
    let angles = if u.dim() == 1 { 2 } else { 64 };
    for s in 0..24 {
        let rad = r * (1.0 + 1e-9) * 8f64.powf(s as f64 / 23.0);
        for a in 0..angles {
            let x = if u.dim() == 1 {
                [if a == 0 { rad } else { -rad }, 0.0]
            } else {
                let t = std::f64::consts::TAU * a as f64 / angles as f64;
                [rad * t.cos(), rad * t.sin()]
            };
            if u.eval(x) < 0.0 {
                bad.push(x);
            }
        }
    }
    bad
}

/// Default contact tolerance 4h²·max(1, curvature scale), the curvature scale
/// being the largest |second difference|/h² of min(u,0) away from kinks.
fn default_contact_tol(gamma_grid: &GridField) -> f64 {
    let h = gamma_grid.spacing();
    let v = gamma_grid.values();
    let mut scale = 0.0f64;
    let n = gamma_grid.nodes_per_axis();
    for i in 0..v.len() {
        if gamma_grid.dim() == 1 {
            if i == 0 || i + 1 >= n {
                continue;
            }
            let (a, b, c) = (v[i - 1], v[i], v[i + 1]);
            if a < 0.0 && b < 0.0 && c < 0.0 {
                scale = scale.max((a + c - 2.0 * b).abs() / (h * h));
            }
        } else {
            let (ix, iy) = (i % n, i / n);
            if ix == 0 || iy == 0 || ix + 1 >= n || iy + 1 >= n {
                continue;
            }
            let nb = [v[i - 1], v[i + 1], v[i - n], v[i + n]];
            if v[i] < 0.0 && nb.iter().all(|&w| w < 0.0) {
                scale = scale.max((nb[0] + nb[1] - 2.0 * v[i]).abs() / (h * h));
                scale = scale.max((nb[2] + nb[3] - 2.0 * v[i]).abs() / (h * h));
            }
        }
    }
    4.0 * h * h * scale.max(1.0)
}

/// Convex envelope Γ of min(u, 0) over B₃ (zero outside B₃).
pub fn convex_envelope(u: &GridField, contact_tol: Option<f64>) -> Result<EnvelopeResult> {
    let bad = negative_outside_unit_ball(u);
    if !bad.is_empty() {
        return Err(Error::Precondition { message: "u is negative outside B1".into(), locations: bad });
    }
    let h = envelope_spacing(u.spacing());
    let dim = u.dim();
    let clipped = GridField::from_fn(
        dim,
        SUPPORT_RADIUS,
        h,
        |x| if norm(x) <= SUPPORT_RADIUS + 1e-12 { u.eval(x).min(0.0) } else { 0.0 },
        Tail::Constant(0.0),
    )?;
    let inside: Vec<usize> = clipped.nodes().filter(|(_, x)| norm(*x) <= SUPPORT_RADIUS + 1e-12).map(|(i, _)| i).collect();
    let mut values = vec![0.0; clipped.len()];
    let mut subgradient = vec![[0.0, 0.0]; clipped.len()];
    if dim == 1 {
        hull_1d(&clipped, &inside, &mut values, &mut subgradient);
    } else {
        hull_2d(&clipped, &inside, &mut values, &mut subgradient);
    }
    let tol = contact_tol.unwrap_or_else(|| default_contact_tol(&clipped));
    let gamma = clipped.with_values(values)?;
    let contact_nodes = inside
        .iter()
        .copied()
        .filter(|&i| (u.eval(gamma.node(i)) - gamma.values()[i]).abs() <= tol)
        .collect();
    Ok(EnvelopeResult { gamma, subgradient, contact_nodes, contact_tol: tol, support_radius: SUPPORT_RADIUS })
}

fn hull_1d(v: &GridField, inside: &[usize], values: &mut [f64], grad: &mut [Point]) {
    let pts: Vec<(f64, f64)> = inside.iter().map(|&i| (v.node(i)[0], v.values()[i])).collect();
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // drop b if it is on or above the segment a-p
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let slopes: Vec<f64> = hull.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
    let mut seg = 0usize;
    for (k, &i) in inside.iter().enumerate() {
        let x = pts[k].0;
        while seg + 1 < slopes.len() && x > hull[seg + 1].0 {
            seg += 1;
        }
        let (a, b) = (hull[seg], hull[seg + 1]);
        let at_vertex = |q: (f64, f64)| (x - q.0).abs() <= 1e-12 * x.abs().max(1.0);
        values[i] = if at_vertex(a) {
            a.1
        } else if at_vertex(b) {
            b.1
        } else {
            a.1 + slopes[seg] * (x - a.0)
        };
        let s = if at_vertex(b) && seg + 1 < slopes.len() {
            0.5 * (slopes[seg] + slopes[seg + 1])
        } else if at_vertex(a) && seg > 0 {
            0.5 * (slopes[seg - 1] + slopes[seg])
        } else {
            slopes[seg]
        };
        grad[i] = [s, 0.0];
    }
}

/// xy convex hull of a point set (monotone chain), counter-clockwise.
fn planar_hull(mut pts: Vec<(Point, usize)>) -> Vec<usize> {
    pts.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]).then(a.0[1].total_cmp(&b.0[1])));
    let cross = |o: Point, a: Point, b: Point| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut lower: Vec<(Point, usize)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2].0, lower[lower.len() - 1].0, p.0) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(Point, usize)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2].0, upper[upper.len() - 1].0, p.0) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.into_iter().chain(upper).map(|p| p.1).collect()
}

/// Per-node dual simplex: Γ(x) = min Σλ_i v_i subject to Σλ_i = 1, Σλ_i p_i = x,
/// λ ≥ 0. The basis is a triangle of lifted points containing x; the optimal
/// plane gives value and subgradient. Bases are warm-started from the
/// previous node when they still contain it.
fn hull_2d(v: &GridField, inside: &[usize], values: &mut [f64], grad: &mut [Point]) {
    let ring = planar_hull(inside.iter().map(|&i| (v.node(i), i)).collect());
    let mut cand: Vec<usize> = inside.iter().copied().filter(|&i| v.values()[i] < 0.0).collect();
    cand.extend(ring);
    cand.sort_unstable();
    cand.dedup();
    let vmax = cand.iter().map(|&i| v.values()[i].abs()).fold(0.0, f64::max);
    let big = 1e3 * (1.0 + vmax);
    let mut pts: Vec<(Point, f64)> = vec![([-20.0, -20.0], big), ([40.0, -20.0], big), ([-20.0, 40.0], big)];
    pts.extend(cand.iter().map(|&i| (v.node(i), v.values()[i])));
    let tol = 1e-12 * (1.0 + vmax);

    let mut basis = [0usize, 1, 2];
    for &i in inside {
        let x = v.node(i);
        if !barycentric(&pts, basis, x).is_some_and(|l| l.iter().all(|&c| c >= -1e-12)) {
            basis = [0, 1, 2];
        }
        let mut iters = 0usize;
        loop {
            iters += 1;
            let Some(plane) = plane_through(&pts, basis) else {
                basis = [0, 1, 2];
                continue;
            };
            let bland = iters > 200;
            let mut enter: Option<(usize, f64)> = None;
            for (k, &(p, val)) in pts.iter().enumerate() {
                let rc = val - (plane[0] * p[0] + plane[1] * p[1] + plane[2]);
                if rc < -tol && !basis.contains(&k) {
                    if bland {
                        enter = Some((k, rc));
                        break;
                    }
                    if enter.is_none_or(|(_, best)| rc < best) {
                        enter = Some((k, rc));
                    }
                }
            }
            let Some((e, _)) = enter else {
                values[i] = plane[0] * x[0] + plane[1] * x[1] + plane[2];
                grad[i] = [plane[0], plane[1]];
                break;
            };
            let lam = barycentric(&pts, basis, x).unwrap_or([1.0 / 3.0; 3]);
            let mu = barycentric(&pts, basis, pts[e].0).unwrap_or([1.0 / 3.0; 3]);
            let mut leave: Option<(usize, f64)> = None;
            for j in 0..3 {
                if mu[j] > 1e-12 {
                    let t = lam[j].max(0.0) / mu[j];
                    if leave.is_none_or(|(_, best)| t < best - 1e-15) {
                        leave = Some((j, t));
                    }
                }
            }
            match leave {
                Some((j, _)) => basis[j] = e,
                None => break,
            }
            if iters > 10_000 {
                values[i] = plane[0] * x[0] + plane[1] * x[1] + plane[2];
                grad[i] = [plane[0], plane[1]];
                log::warn!("envelope simplex did not terminate at node {i}");
                break;
            }
        }
    }
}

fn barycentric(pts: &[(Point, f64)], b: [usize; 3], x: Point) -> Option<[f64; 3]> {
    let (a, bb, c) = (pts[b[0]].0, pts[b[1]].0, pts[b[2]].0);
    let det = (bb[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (bb[1] - a[1]);
    if det.abs() < 1e-14 {
        return None;
    }
    let l1 = ((x[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (x[1] - a[1])) / det;
    let l2 = ((bb[0] - a[0]) * (x[1] - a[1]) - (x[0] - a[0]) * (bb[1] - a[1])) / det;
    Some([1.0 - l1 - l2, l1, l2])
}

/// Plane z = a x + b y + c through three lifted points.
fn plane_through(pts: &[(Point, f64)], b: [usize; 3]) -> Option<[f64; 3]> {
    let (p0, z0) = pts[b[0]];
    let (p1, z1) = pts[b[1]];
    let (p2, z2) = pts[b[2]];
    let (u0, u1, du) = (p1[0] - p0[0], p1[1] - p0[1], z1 - z0);
    let (w0, w1, dw) = (p2[0] - p0[0], p2[1] - p0[1], z2 - z0);
    let det = u0 * w1 - u1 * w0;
    if det.abs() < 1e-14 {
        return None;
    }
    let a = (du * w1 - u1 * dw) / det;
    let bb = (u0 * dw - du * w0) / det;
    Some([a, bb, z0 - a * p0[0] - bb * p0[1]])
}

/// ((1−α)λ(2−σ)/(b(1−τ)))^{1/(σ−τ)}; +∞ when b = 0.
pub fn interpolation_radius(p: &EllipticityParams, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha = {alpha} not in (0, 1)")));
    }
    if p.b == 0.0 {
        return Ok(f64::INFINITY);
    }
    if p.sigma <= p.tau {
        return Err(Error::invalid("interpolation radius needs sigma > tau"));
    }
    Ok(((1.0 - alpha) * p.lambda_lo * (2.0 - p.sigma) / (p.b * (1.0 - p.tau))).powf(1.0 / (p.sigma - p.tau)))
}

/// ρ0 = 1/(128√n).
pub fn default_rho0(dim: usize) -> f64 {
    1.0 / (128.0 * (dim as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    pub k: usize,
    /// r_k; the ring is B_{r_k} ∖ B_{r_{k+1}}.
    pub outer: f64,
    pub inner: f64,
}

/// r_k = ρ0 2^{−1/(2−σ)−k}, k = 0..=k_max.
pub fn dyadic_rings(sigma: f64, rho0: f64, k_max: usize) -> Result<Vec<Ring>> {
    if k_max < 1 {
        return Err(Error::invalid("k_max must be at least 1"));
    }
    if !(sigma > 0.0 && sigma < 2.0 && rho0 > 0.0) {
        return Err(Error::invalid("need sigma in (0, 2) and rho0 > 0"));
    }
    let r0 = rho0 * 2f64.powf(-1.0 / (2.0 - sigma));
    Ok((0..=k_max)
        .map(|k| {
            let outer = r0 * 0.5f64.powi(k as i32);
            Ring { k, outer, inner: 0.5 * outer }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingConfig {
    pub rho0: f64,
    pub k_max: usize,
    pub c0: f64,
}

impl RingConfig {
    pub fn new(dim: usize) -> Self {
        RingConfig { rho0: default_rho0(dim), k_max: 16, c0: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingMeasure {
    pub k: usize,
    pub radius: f64,
    pub fraction: f64,
    pub resolved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingOpeningReport {
    /// First resolved ring whose fraction is at most C0·F/M.
    pub k_found: Option<usize>,
    pub f_value: f64,
    pub bound: f64,
    pub rings: Vec<RingMeasure>,
}

/// Fraction of lattice nodes of the ring R_k around x where
/// u(x+y) > u(x) + y·∇Γ(x) + M r_k², with F(x) = f(x) + b‖u‖_∞.
pub fn ring_opening_test(
    u: &GridField,
    env: &EnvelopeResult,
    x: Point,
    m: f64,
    params: &EllipticityParams,
    f_at_x: f64,
    cfg: &RingConfig,
) -> Result<RingOpeningReport> {
    if !(m > 0.0) {
        return Err(Error::invalid("opening M must be positive"));
    }
    let gi = env
        .gamma
        .node_index(x)
        .ok_or_else(|| Error::invalid(format!("{x:?} is not an envelope node")))?;
    if !env.is_contact(gi) {
        return Err(Error::Precondition { message: "x is not a contact point".into(), locations: vec![x] });
    }
    let grad = env.subgradient[gi];
    let ux = u.eval(x);
    let h = u.spacing();
    let f_value = f_at_x + params.b * u.sup_norm();
    let bound = cfg.c0 * f_value / m;
    let mut rings = Vec::new();
    let mut k_found = None;
    for ring in dyadic_rings(params.sigma, cfg.rho0, cfg.k_max)? {
        let resolved = ring.outer >= 2.0 * h;
        let mut total = 0usize;
        let mut above = 0usize;
        for y in crate::grid::lattice_offsets(u.dim(), h, ring.outer) {
            let r = norm(y);
            if r < ring.inner || r >= ring.outer {
                continue;
            }
            total += 1;
            let val = u.eval([x[0] + y[0], x[1] + y[1]]);
            if val > ux + grad[0] * y[0] + grad[1] * y[1] + m * ring.outer * ring.outer {
                above += 1;
            }
        }
        let fraction = if total == 0 { 0.0 } else { above as f64 / total as f64 };
        let resolved = resolved && total > 0;
        if resolved && k_found.is_none() && fraction <= bound {
            k_found = Some(ring.k);
        }
        rings.push(RingMeasure { k: ring.k, radius: ring.outer, fraction, resolved });
    }
    if !rings.iter().any(|r| r.resolved) {
        return Err(Error::Resolution(format!("no ring of radius >= 2h = {}", 2.0 * h)));
    }
    Ok(RingOpeningReport { k_found, f_value, bound, rings })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverConfig {
    pub rho0: f64,
    /// Constant C in the opening C·F·d² of the good set.
    pub c_good: f64,
    /// Required good measure as a multiple of |Q|.
    pub mu: f64,
    /// Constant C of the gradient-image bound.
    pub c_grad: f64,
    /// Dilation factor of the good-set cube (default 32√n).
    pub dilation: f64,
    /// Secondary dilation reported alongside (default 8√n).
    pub dilation_alt: f64,
}

impl CoverConfig {
    pub fn new(dim: usize) -> Self {
        let s = (dim as f64).sqrt();
        CoverConfig { rho0: default_rho0(dim), c_good: 1.0, mu: 0.5, c_grad: 1.0, dilation: 32.0 * s, dilation_alt: 8.0 * s }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub center: Point,
    pub side: f64,
    pub diameter: f64,
    pub max_f: f64,
    pub gradient_image: f64,
    /// Good-set measure in the dilated cube divided by |Q|.
    pub good_fraction: f64,
    pub good_fraction_alt: f64,
    pub contact_count: usize,
    pub meets_good: bool,
    pub meets_gradient: bool,
    /// Splitting stopped at grid resolution before both criteria held.
    pub resolution_limited: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeCover {
    pub cubes: Vec<Cube>,
    pub initial_diameter: f64,
    pub total_gradient_image: f64,
    pub flagged: usize,
}

impl CubeCover {
    /// max u⁻ / (Σ|∇Γ(Q̄_j)|)^{1/n}.
    pub fn abp_ratio(&self, u: &GridField, dim: usize) -> f64 {
        let neg = u.values().iter().fold(0.0f64, |m, &v| m.max(-v));
        neg / self.total_gradient_image.powf(1.0 / dim as f64)
    }
}

fn in_closed_cube(x: Point, c: Point, side: f64, dim: usize) -> bool {
    let half = 0.5 * side * (1.0 + 1e-9);
    (0..dim).all(|d| (x[d] - c[d]).abs() <= half)
}

/// Tiles [-1,1]ⁿ with cubes of diameter ρ0 2^{−1/(2−σ)}, keeps those touching
/// the negative contact set and splits until the good-set and gradient-image
/// criteria hold or the cube side drops below the grid spacing.
pub fn abp_cover(u: &GridField, env: &EnvelopeResult, f: &GridField, params: &EllipticityParams, cfg: &CoverConfig) -> Result<CubeCover> {
    let dim = u.dim();
    let sq = (dim as f64).sqrt();
    let d0 = cfg.rho0 * 2f64.powf(-1.0 / (2.0 - params.sigma));
    let side0 = d0 / sq;
    let g = &env.gamma;
    let gh = g.spacing();
    let sup = u.sup_norm();
    let contacts: Vec<(usize, Point)> = env
        .contact_nodes
        .iter()
        .map(|&i| (i, g.node(i)))
        .filter(|&(i, x)| g.values()[i] < -env.contact_tol && (0..dim).all(|d| x[d].abs() <= 1.0 + 1e-12))
        .collect();
    let per_axis = (2.0 / side0).ceil() as usize;
    let mut stack: Vec<(Point, f64)> = Vec::new();
    for j in 0..(if dim == 1 { 1 } else { per_axis }) {
        for i in 0..per_axis {
            let c0 = -1.0 + (i as f64 + 0.5) * side0;
            let c1 = if dim == 1 { 0.0 } else { -1.0 + (j as f64 + 0.5) * side0 };
            stack.push(([c0, c1], side0));
        }
    }
    stack.reverse();
    let mut cubes = Vec::new();
    while let Some((c, side)) = stack.pop() {
        let inside: Vec<&(usize, Point)> = contacts.iter().filter(|(_, x)| in_closed_cube(*x, c, side, dim)).collect();
        if inside.is_empty() {
            continue;
        }
        let diameter = side * sq;
        let max_f = inside.iter().map(|(_, x)| f.eval(*x) + params.b * sup).fold(f64::NEG_INFINITY, f64::max);
        // bounding box of subgradients over gamma nodes in the closed cube and
        // one node beyond it, so the slopes across the faces are included
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for (i, x) in g.nodes() {
            if in_closed_cube(x, c, side + 2.0 * gh, dim) {
                for d in 0..dim {
                    lo[d] = lo[d].min(env.subgradient[i][d]);
                    hi[d] = hi[d].max(env.subgradient[i][d]);
                }
            }
        }
        let gradient_image: f64 = (0..dim).map(|d| (hi[d] - lo[d]).max(0.0)).product();
        let opening = cfg.c_good * max_f.max(0.0) * diameter * diameter;
        let good = |dil: f64| -> f64 {
            let half = 0.5 * dil * side;
            let h = u.spacing();
            let m = (half / h).floor() as i64;
            let base = [(c[0] / h).round() * h, if dim == 1 { 0.0 } else { (c[1] / h).round() * h }];
            let mut count = 0usize;
            let rows = if dim == 1 { 0..=0 } else { -m..=m };
            for j in rows {
                for i in -m..=m {
                    let y = [base[0] + i as f64 * h, base[1] + j as f64 * h];
                    if !in_closed_cube(y, c, dil * side, dim) {
                        continue;
                    }
                    if u.eval(y) < g.eval(y) + opening {
                        count += 1;
                    }
                }
            }
            count as f64 * h.powi(dim as i32) / side.powi(dim as i32)
        };
        let good_fraction = good(cfg.dilation);
        let good_fraction_alt = good(cfg.dilation_alt);
        let meets_good = good_fraction >= cfg.mu;
        let meets_gradient = gradient_image <= cfg.c_grad * max_f.max(0.0).powi(dim as i32) * side.powi(dim as i32) + 1e-14;
        let at_resolution = 0.5 * side < gh.max(u.spacing());
        if (meets_good && meets_gradient) || at_resolution {
            cubes.push(Cube {
                center: c,
                side,
                diameter,
                max_f,
                gradient_image,
                good_fraction,
                good_fraction_alt,
                contact_count: inside.len(),
                meets_good,
                meets_gradient,
                resolution_limited: !(meets_good && meets_gradient),
            });
            continue;
        }
        let q = 0.25 * side;
        let mut children = Vec::new();
        let ys: &[f64] = if dim == 1 { &[0.0] } else { &[-1.0, 1.0] };
        for &sy in ys {
            for sx in [-1.0, 1.0] {
                children.push(([c[0] + sx * q, c[1] + sy * q], 0.5 * side));
            }
        }
        children.reverse();
        stack.extend(children);
    }
    let total_gradient_image = cubes.iter().map(|c| c.gradient_image).sum();
    let flagged = cubes.iter().filter(|c| c.resolution_limited).count();
    Ok(CubeCover { cubes, initial_diameter: d0, total_gradient_image, flagged })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dip_1d(h: f64) -> GridField {
        GridField::from_fn(1, 3.0, h, |x| if x[0].abs() > 1.0 { 1.0 } else { x[0] * x[0] - 0.25 }, Tail::Clamp).unwrap()
    }

    #[test]
    fn nonnegative_field_has_zero_envelope() {
        let u = GridField::from_fn(1, 3.0, 0.125, |x| x[0].abs().min(1.0), Tail::Constant(1.0)).unwrap();
        let env = convex_envelope(&u, None).unwrap();
        assert!(env.gamma.values().iter().all(|&v| v == 0.0));
        assert_eq!(env.contact_nodes, vec![u.node_index([0.0, 0.0]).unwrap()]);
    }

    #[test]
    fn negative_outside_unit_ball_is_rejected() {
        let u = GridField::from_fn(1, 3.0, 0.125, |x| if x[0] > 2.0 { -1.0 } else { 0.0 }, Tail::Constant(0.0)).unwrap();
        match convex_envelope(&u, None) {
            Err(Error::Precondition { locations, .. }) => assert!(locations.iter().all(|x| x[0] > 2.0)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parabolic_dip_envelope() {
        let u = dip_1d(1.0 / 64.0);
        let env = convex_envelope(&u, None).unwrap();
        assert!(env.convexity_defect() >= -1e-12);
        assert!(env.supporting_plane_defect() <= 1e-12);
        // inside |x| < 1/2 the envelope lies below the dip and touches at 0
        assert!((env.gamma.eval([0.0, 0.0]) + 0.25).abs() < 1e-12);
        for (i, x) in env.gamma.nodes() {
            assert!(env.gamma.values()[i] <= u.eval(x).min(0.0) + 1e-12);
        }
    }

    #[test]
    fn two_dimensional_envelope_is_convex_minorant() {
        let u = GridField::from_fn(2, 3.0, 0.25, |x| {
            let wobble = if norm(x) < 0.7 { 0.05 * (3.0 * x[0]).sin() } else { 0.0 };
            (x[0] * x[0] + x[1] * x[1] - 0.5).min(0.0) + wobble
        }, Tail::Constant(0.0)).unwrap();
        let env = convex_envelope(&u, None).unwrap();
        assert!(env.convexity_defect() >= -1e-9);
        assert!(env.supporting_plane_defect() <= 1e-9);
        for (i, x) in env.gamma.nodes() {
            if norm(x) <= 3.0 {
                assert!(env.gamma.values()[i] <= u.eval(x).min(0.0) + 1e-9);
            }
        }
    }

    #[test]
    fn interpolation_radius_example() {
        let p = EllipticityParams::new(1.5, 0.5, 1.0, 2.0, 0.25, 1);
        assert!((interpolation_radius(&p, 0.5).unwrap() - 2.0).abs() < 1e-14);
        assert!(interpolation_radius(&p, 1.0).is_err());
        let p0 = EllipticityParams { b: 0.0, ..p };
        assert_eq!(interpolation_radius(&p0, 0.5).unwrap(), f64::INFINITY);
    }

    #[test]
    fn ring_schedule() {
        let rings = dyadic_rings(1.0, 1.0 / 128.0, 5).unwrap();
        assert_eq!(rings[0].outer, 1.0 / 256.0);
        for w in rings.windows(2) {
            assert_eq!(w[1].outer / w[0].outer, 0.5);
        }
        assert!(dyadic_rings(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn ring_fraction_for_quadratic_opening() {
        let h = 1.0 / 2048.0;
        let u = GridField::from_fn(1, 3.0, h, |x| if x[0].abs() <= 1.0 { x[0] * x[0] - 0.01 } else { 0.99 }, Tail::Constant(0.99)).unwrap();
        let env = convex_envelope(&u, None).unwrap();
        let p = EllipticityParams::new(1.0, 0.5, 1.0, 1.0, 0.0, 1);
        let cfg = RingConfig { rho0: 0.5, k_max: 3, c0: 1.0 };
        for (m, expect) in [(0.2, 1.0), (0.49, 2.0 * (1.0 - 0.7)), (1.5, 0.0)] {
            let r = ring_opening_test(&u, &env, [0.0, 0.0], m, &p, 0.0, &cfg).unwrap();
            for ring in &r.rings {
                assert!((ring.fraction - expect).abs() < 0.02, "M={m} {ring:?}");
            }
        }
    }
}
