//! Monotone lattice discretization of the nonlocal operators on a node grid.
//!
//! For a node x the operator is split into the cell around the origin (second
//! differences and upwind gradients), lattice cells C_k = kh + [-h/2, h/2]^n
//! with cell-integrated weights, and the region beyond the lattice reach where
//! the exterior data equals its far-field constants.

use crate::error::{Error, Result};
use crate::grid::{FarField, GridField, Point};
use crate::nonlocal::{KernelFamily, Sign};
use crate::params::{EllipticityParams, KernelSpec};
use crate::quad::{dyadic, Rule};

/// Ω: an open ball or an open axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Domain {
    Ball { center: Point, radius: f64 },
    Box { center: Point, half_width: f64 },
}

impl Domain {
    pub fn unit_ball() -> Self {
        Domain::Ball { center: [0.0, 0.0], radius: 1.0 }
    }

    pub fn contains(&self, x: Point) -> bool {
        const EDGE: f64 = 1e-12;
        match *self {
            Domain::Ball { center, radius } => {
                let d = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)).sqrt();
                d < radius - EDGE
            }
            Domain::Box { center, half_width } => {
                (x[0] - center[0]).abs().max((x[1] - center[1]).abs()) < half_width - EDGE
            }
        }
    }

    /// Largest sup-norm coordinate of a point in the closure.
    pub fn reach(&self) -> f64 {
        match *self {
            Domain::Ball { center, radius } => center[0].abs().max(center[1].abs()) + radius,
            Domain::Box { center, half_width } => center[0].abs().max(center[1].abs()) + half_width,
        }
    }

    fn validate(&self) -> Result<()> {
        let (c, r) = match *self {
            Domain::Ball { center, radius } => (center, radius),
            Domain::Box { center, half_width } => (center, half_width),
        };
        if !(r > 0.0) || !c[0].is_finite() || !c[1].is_finite() || !r.is_finite() {
            return Err(Error::invalid("domain size must be positive and finite"));
        }
        Ok(())
    }
}

/// Which operator the scheme discretizes.
#[derive(Clone, Debug)]
pub enum SchemeOperator {
    /// min over groups of max over members of linear kernels.
    Family(KernelFamily),
    /// M^±_σ (no drift).
    Extremal(Sign),
    /// M^±_{L0}.
    ExtremalL0(Sign),
    /// M^±_{L̃0}.
    ExtremalL0Tilde(Sign),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeConfig {
    /// Gauss points per axis used to integrate kernels over one lattice cell.
    pub weight_points: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig { weight_points: 4 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Odd {
    None,
    L0,
    Tilde,
}

#[derive(Clone, Debug)]
enum Op {
    Members(Vec<Vec<usize>>),
    Extremal(Sign, Odd),
}

#[derive(Clone, Debug)]
struct Member {
    ke2: Vec<f64>,
    ko2: Vec<f64>,
    near_even: [f64; 4],
    near_odd: Point,
    far_even: f64,
    far_odd: f64,
}

/// Records the active affine piece of the operator at a node.
pub(crate) trait Rec {
    fn add(&mut self, idx: usize, coef: f64);
}

impl Rec for () {
    #[inline(always)]
    fn add(&mut self, _: usize, _: f64) {}
}

impl Rec for Vec<(usize, f64)> {
    #[inline]
    fn add(&mut self, idx: usize, coef: f64) {
        self.push((idx, coef));
    }
}

/// The discrete operator I_h for one grid, domain and far field.
#[derive(Clone, Debug)]
pub struct Scheme {
    dim: usize,
    h: f64,
    lam_lo: f64,
    lam_hi: f64,
    b: f64,
    op: Op,
    shifts: Vec<isize>,
    unit_e: Vec<f64>,
    unit_o: Vec<f64>,
    members: Vec<Member>,
    near_unit_even: [f64; 4],
    near_unit_odd: f64,
    far_unit_even: f64,
    far_unit_odd: f64,
    far_nodes: Vec<(f64, f64)>,
    f_plus: f64,
    f_minus: f64,
    ext_half: i64,
    width: usize,
    near_shifts: Vec<isize>,
    grad_shifts: Vec<isize>,
    omega: Vec<usize>,
    omega_ext: Vec<usize>,
    ext_col: Vec<usize>,
    base: Vec<f64>,
}

const NONE: usize = usize::MAX;

fn cell_integral(f: &dyn Fn(Point) -> f64, c: Point, h: f64, dim: usize, rule: &Rule) -> f64 {
    let xs: Vec<(f64, f64)> = rule.points(c[0] - 0.5 * h, c[0] + 0.5 * h).collect();
    if dim == 1 {
        return xs.iter().map(|&(x, w)| w * f([x, 0.0])).sum();
    }
    let ys: Vec<(f64, f64)> = rule.points(c[1] - 0.5 * h, c[1] + 0.5 * h).collect();
    let mut s = 0.0;
    for &(x, wx) in &xs {
        for &(y, wy) in &ys {
            s += wx * wy * f([x, y]);
        }
    }
    s
}

#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    m: [[f64; 2]; 2],
    v: Point,
    abs1: f64,
}

impl Moments {
    fn add(&mut self, y: Point, w: f64) {
        self.m[0][0] += w * y[0] * y[0];
        self.m[0][1] += w * y[0] * y[1];
        self.m[1][1] += w * y[1] * y[1];
        self.v[0] += w * y[0];
        self.v[1] += w * y[1];
        self.abs1 += w * y[0].abs();
    }
}

/// Moments of `f` over the origin cell [-h/2, h/2]^n on nested square shells.
fn cell0_moments(f: &dyn Fn(Point) -> f64, h: f64, dim: usize) -> Moments {
    const LEVELS: i32 = 48;
    let rule = Rule::new(6);
    let mut total = Moments::default();
    let (mut prev, mut last) = (Moments::default(), Moments::default());
    for j in 0..LEVELS {
        // Shell between half-widths a/2 and a.
        let a = 0.5 * h * 0.5f64.powi(j);
        let mut shell = Moments::default();
        if dim == 1 {
            for (x, w) in rule.points(0.5 * a, a) {
                shell.add([x, 0.0], w * f([x, 0.0]));
                shell.add([-x, 0.0], w * f([-x, 0.0]));
            }
        } else {
            let s = 0.5 * a;
            for bi in 0..4 {
                for bj in 0..4 {
                    if (1..3).contains(&bi) && (1..3).contains(&bj) {
                        continue;
                    }
                    let x0 = -a + bi as f64 * s;
                    let y0 = -a + bj as f64 * s;
                    for (x, wx) in rule.points(x0, x0 + s) {
                        for (y, wy) in rule.points(y0, y0 + s) {
                            shell.add([x, y], wx * wy * f([x, y]));
                        }
                    }
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                total.m[i][j] += shell.m[i][j];
            }
            total.v[i] += shell.v[i];
        }
        total.abs1 += shell.abs1;
        prev = last;
        last = shell;
    }
    let extrapolate = |t: &mut f64, p: f64, l: f64| {
        let rho = if p != 0.0 { l / p } else { 0.0 };
        if rho.is_finite() && rho > 0.0 && rho < 1.0 {
            *t += l * rho / (1.0 - rho);
        }
    };
    for i in 0..2 {
        for j in 0..2 {
            extrapolate(&mut total.m[i][j], prev.m[i][j], last.m[i][j]);
        }
        extrapolate(&mut total.v[i], prev.v[i], last.v[i]);
    }
    extrapolate(&mut total.abs1, prev.abs1, last.abs1);
    total
}

/// (∫ over the complement of [-a, a]^n, ∫ over y_1 > a) of `f`.
fn far_integrals(f: &dyn Fn(Point) -> f64, a: f64, dim: usize) -> (f64, f64) {
    let hi = Rule::new(6);
    let lo = Rule::new(4);
    if dim == 1 {
        let (right, _) = dyadic(|r| f([r, 0.0]), a, false, &hi, &lo);
        let (left, _) = dyadic(|r| f([-r, 0.0]), a, false, &hi, &lo);
        return (right + left, right);
    }
    let ang = Rule::new(12);
    let mut total = 0.0;
    for oct in 0..8 {
        let t0 = oct as f64 * std::f64::consts::FRAC_PI_4;
        for (t, w) in ang.points(t0, t0 + std::f64::consts::FRAC_PI_4) {
            let (s, c) = t.sin_cos();
            let r0 = a / c.abs().max(s.abs());
            let (v, _) = dyadic(|r| f([r * c, r * s]) * r, r0, false, &hi, &lo);
            total += w * v;
        }
    }
    (total, 0.0)
}

fn near_even_coefficients(m: &[[f64; 2]; 2], h: f64, dim: usize) -> Result<[f64; 4]> {
    let h2 = h * h;
    if dim == 1 {
        return Ok([m[0][0] / h2, 0.0, 0.0, 0.0]);
    }
    let off = m[0][1];
    let c = [
        (m[0][0] - off.abs()) / h2,
        (m[1][1] - off.abs()) / h2,
        off.max(0.0) / h2,
        (-off).max(0.0) / h2,
    ];
    if c.iter().any(|&v| v < -1e-14 * (m[0][0] + m[1][1]) / h2) {
        return Err(Error::NonMonotone(
            "origin-cell second moments are not diagonally dominant".into(),
        ));
    }
    Ok(c.map(|v| v.max(0.0)))
}

/// Kernel values (K_e, K_o) that attain M^±_{L̃0} for one sample.
#[inline]
#[allow(clippy::too_many_arguments)]
fn tilde_kernel(lo: f64, hi: f64, bo: f64, sign: Sign, de: f64, dodd: f64) -> (f64, f64) {
    let s = sign.factor();
    let sg = if dodd > 0.0 { 1.0 } else if dodd < 0.0 { -1.0 } else { 0.0 };
    let mut best = (lo, s * bo.min(lo) * sg);
    let mut best_val = best.0 * de + best.1 * dodd;
    for ke in [hi, bo.clamp(lo, hi)] {
        let ko = s * bo.min(ke) * sg;
        let v = ke * de + ko * dodd;
        if s * v > s * best_val {
            best = (ke, ko);
            best_val = v;
        }
    }
    best
}

impl Scheme {
    pub fn new(
        op: &SchemeOperator,
        params: &EllipticityParams,
        g: &GridField,
        domain: Domain,
        cfg: &SchemeConfig,
    ) -> Result<Self> {
        params.validate()?;
        domain.validate()?;
        let dim = g.dim();
        if dim != params.dim {
            return Err(Error::invalid("exterior data and parameters disagree on dimension"));
        }
        if cfg.weight_points == 0 {
            return Err(Error::invalid("weight_points must be at least 1"));
        }
        let h = g.spacing();
        let m = ((g.nodes_per_axis() - 1) / 2) as i64;
        if domain.reach() + h > g.box_radius() + 1e-12 {
            return Err(Error::invalid("domain must lie strictly inside the grid box"));
        }
        let far: FarField = g.far_field().ok_or_else(|| {
            Error::invalid("exterior data needs a far-field constant beyond some radius")
        })?;
        let (f_plus, f_minus) = (far.value(dim, [1.0, 0.0]), far.value(dim, [-1.0, 0.0]));
        if dim == 2 && (f_plus - f_minus).abs() > 0.0 {
            return Err(Error::invalid("2D exterior data needs a single far-field constant"));
        }

        // Lattice reach: beyond it every x ± y sits in the far-field region.
        let k_reach = ((far.radius + domain.reach()) / h).ceil() as i64 + 1;
        let ext_half = m + k_reach + 1;
        let width = (2 * ext_half + 1) as usize;
        let stride = if dim == 2 { width as isize } else { 0 };
        let ext_len = if dim == 2 { width * width } else { width };

        let rule = Rule::new(cfg.weight_points);
        let sigma = params.sigma;
        let tau = params.tau;
        let n = dim as f64;
        let we_unit = move |y: Point| (2.0 - sigma) * (y[0] * y[0] + y[1] * y[1]).sqrt().powf(-n - sigma);
        let wo_unit = move |y: Point| (1.0 - tau) * (y[0] * y[0] + y[1] * y[1]).sqrt().powf(-n - tau);

        let mut offsets: Vec<[i64; 2]> = Vec::new();
        if dim == 1 {
            for k in 1..=k_reach {
                offsets.push([k, 0]);
            }
        } else {
            for j in 0..=k_reach {
                for i in -k_reach..=k_reach {
                    if j > 0 || i > 0 {
                        offsets.push([i, j]);
                    }
                }
            }
        }
        let shifts: Vec<isize> = offsets.iter().map(|k| k[0] as isize + stride * k[1] as isize).collect();
        let centers: Vec<Point> = offsets.iter().map(|k| [k[0] as f64 * h, k[1] as f64 * h]).collect();

        let (op_kind, specs): (Op, Vec<&KernelSpec>) = match op {
            SchemeOperator::Family(fam) => {
                let mut groups = Vec::new();
                let mut specs = Vec::new();
                for g in fam.groups() {
                    let mut idx = Vec::new();
                    for s in g {
                        if s.params.dim != dim {
                            return Err(Error::invalid("kernel dimension does not match the grid"));
                        }
                        idx.push(specs.len());
                        specs.push(s);
                    }
                    groups.push(idx);
                }
                (Op::Members(groups), specs)
            }
            SchemeOperator::Extremal(s) => (Op::Extremal(*s, Odd::None), Vec::new()),
            SchemeOperator::ExtremalL0(s) => (Op::Extremal(*s, Odd::L0), Vec::new()),
            SchemeOperator::ExtremalL0Tilde(s) => (Op::Extremal(*s, Odd::Tilde), Vec::new()),
        };

        let a = (k_reach as f64 + 0.5) * h;
        let (mut unit_e, mut unit_o) = (Vec::new(), Vec::new());
        let (mut near_unit_even, mut near_unit_odd) = ([0.0; 4], 0.0);
        let (mut far_unit_even, mut far_unit_odd) = (0.0, 0.0);
        let mut far_nodes = Vec::new();
        if let Op::Extremal(_, odd) = op_kind {
            unit_e = centers.iter().map(|&c| 2.0 * cell_integral(&we_unit, c, h, dim, &rule)).collect();
            let me = cell0_moments(&we_unit, h, dim);
            near_unit_even = near_even_coefficients(&me.m, h, dim)?;
            far_unit_even = far_integrals(&we_unit, a, dim).0;
            if odd != Odd::None {
                unit_o = centers.iter().map(|&c| 2.0 * cell_integral(&wo_unit, c, h, dim, &rule)).collect();
                near_unit_odd = 2.0 * cell0_moments(&wo_unit, h, dim).abs1;
                far_unit_odd = far_integrals(&wo_unit, a, dim).0;
            }
            if odd == Odd::L0 && params.b > 0.0 {
                for (k, (&e, &o)) in unit_e.iter().zip(&unit_o).enumerate() {
                    if params.lambda_lo * e < params.b * o * (1.0 - 1e-12) {
                        return Err(Error::NonMonotone(format!(
                            "M_L0 odd weight exceeds the even weight at lattice offset {:?}",
                            offsets[k]
                        )));
                    }
                }
            }
            if odd == Odd::Tilde && dim == 1 {
                let hi = Rule::new(6);
                for j in 0..48 {
                    let (r0, r1) = (a * 2f64.powi(j), a * 2f64.powi(j + 1));
                    for (r, w) in hi.points(r0, r1) {
                        far_nodes.push((2.0 * w * we_unit([r, 0.0]), 2.0 * w * wo_unit([r, 0.0])));
                    }
                }
                let r_end = a * 2f64.powi(48);
                far_nodes.push((
                    2.0 * (2.0 - sigma) * r_end.powf(-sigma) / sigma,
                    2.0 * (1.0 - tau) * r_end.powf(-tau) / tau,
                ));
            }
        }

        let mut members = Vec::new();
        for (mi, s) in specs.iter().enumerate() {
            let ke = |y: Point| s.even(y);
            let ko = |y: Point| s.odd(y);
            let ke2: Vec<f64> = centers.iter().map(|&c| 2.0 * cell_integral(&ke, c, h, dim, &rule)).collect();
            let ko2: Vec<f64> = centers.iter().map(|&c| 2.0 * cell_integral(&ko, c, h, dim, &rule)).collect();
            for (k, (&e, &o)) in ke2.iter().zip(&ko2).enumerate() {
                if !(e.is_finite() && o.is_finite()) {
                    return Err(Error::KernelSingularity { y: centers[k] });
                }
                if e + o < -1e-14 * e.abs() || e - o < -1e-14 * e.abs() {
                    return Err(Error::NonMonotone(format!(
                        "kernel {} (member {mi}) has negative cell mass at lattice offset {:?}",
                        s.name(),
                        offsets[k]
                    )));
                }
            }
            let me = cell0_moments(&ke, h, dim);
            let mo = cell0_moments(&ko, h, dim);
            let (fe, _) = far_integrals(&ke, a, dim);
            let (_, fo_right) = far_integrals(&ko, a, dim);
            members.push(Member {
                ke2,
                ko2,
                near_even: near_even_coefficients(&me.m, h, dim)?,
                near_odd: mo.v,
                far_even: fe,
                far_odd: 2.0 * fo_right,
            });
        }

        let near_shifts: Vec<isize> =
            if dim == 1 { vec![1] } else { vec![1, stride, 1 + stride, 1 - stride] };
        let grad_shifts: Vec<isize> = if dim == 1 { vec![1] } else { vec![1, stride] };

        let ext_point = |e: usize| -> Point {
            let (i, j) = if dim == 1 { (e, ext_half as usize) } else { (e % width, e / width) };
            [(i as i64 - ext_half) as f64 * h, (j as i64 - ext_half) as f64 * h]
        };
        let base: Vec<f64> = (0..ext_len).map(|e| g.eval(ext_point(e))).collect();
        if base.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("exterior data must be finite"));
        }
        let mut omega = Vec::new();
        let mut omega_ext = Vec::new();
        let mut ext_col = vec![NONE; ext_len];
        let npa = g.nodes_per_axis();
        for (idx, x) in g.nodes() {
            if domain.contains(x) {
                let (i, j) = (idx % npa, idx / npa);
                let ei = (i as i64 - m + ext_half) as usize;
                let ej = (j as i64 - m + ext_half) as usize;
                let e = if dim == 1 { ei } else { ei + width * ej };
                ext_col[e] = omega.len();
                omega.push(idx);
                omega_ext.push(e);
            }
        }
        if omega.is_empty() {
            return Err(Error::invalid("domain contains no grid nodes"));
        }

        Ok(Scheme {
            dim,
            h,
            lam_lo: params.lambda_lo,
            lam_hi: params.lambda_hi,
            b: params.b,
            op: op_kind,
            shifts,
            unit_e,
            unit_o,
            members,
            near_unit_even,
            near_unit_odd,
            far_unit_even,
            far_unit_odd,
            far_nodes,
            f_plus,
            f_minus,
            ext_half,
            width,
            near_shifts,
            grad_shifts,
            omega,
            omega_ext,
            ext_col,
            base,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Grid indices of the unknown nodes (those inside Ω).
    pub fn omega(&self) -> &[usize] {
        &self.omega
    }

    pub(crate) fn omega_ext(&self) -> &[usize] {
        &self.omega_ext
    }

    pub(crate) fn ext_col(&self) -> &[usize] {
        &self.ext_col
    }

    /// Extended-lattice values with the exterior data everywhere.
    pub(crate) fn base_values(&self) -> Vec<f64> {
        self.base.clone()
    }

    /// Extended-lattice values of a field on the same grid (tail outside its box).
    pub(crate) fn ext_values(&self, u: &GridField) -> Vec<f64> {
        let len = self.base.len();
        (0..len)
            .map(|e| {
                let (i, j) = if self.dim == 1 { (e, self.ext_half as usize) } else { (e % self.width, e / self.width) };
                u.eval([(i as i64 - self.ext_half) as f64 * self.h, (j as i64 - self.ext_half) as f64 * self.h])
            })
            .collect()
    }

    /// Upper bound on |∂ I_h u(x) / ∂ u(x)| over nodes and active pieces.
    pub fn diagonal_bound(&self) -> f64 {
        let h = self.h;
        match &self.op {
            Op::Members(_) => self
                .members
                .iter()
                .map(|mb| {
                    let lattice: f64 = 2.0 * mb.ke2.iter().sum::<f64>();
                    let near: f64 = 2.0 * mb.near_even.iter().sum::<f64>()
                        + 2.0 * (mb.near_odd[0].abs() + mb.near_odd[1].abs()) / h;
                    lattice + near + 2.0 * mb.far_even
                })
                .fold(0.0, f64::max),
            Op::Extremal(_, odd) => {
                let lattice: f64 = 2.0 * self.unit_e.iter().sum::<f64>() * self.lam_hi;
                let near = 2.0 * self.lam_hi * self.near_unit_even.iter().sum::<f64>();
                let grad = if *odd == Odd::None { 0.0 } else { self.b * self.near_unit_odd * self.dim as f64 / h };
                lattice + near + grad + 2.0 * self.lam_hi * self.far_unit_even
            }
        }
    }

    /// I_h at one extended-lattice node, for the current extended values.
    #[inline]
    pub(crate) fn eval_at<R: Rec>(&self, v: &[f64], p: usize, rec: &mut R) -> f64 {
        match &self.op {
            Op::Members(groups) => {
                if self.members.len() == 1 {
                    return self.member_at(0, v, p, rec);
                }
                let mut best_g = f64::INFINITY;
                let mut arg = 0;
                for g in groups {
                    let mut best_m = f64::NEG_INFINITY;
                    let mut am = g[0];
                    for &mi in g {
                        let val = self.member_at(mi, v, p, &mut ());
                        if val > best_m {
                            best_m = val;
                            am = mi;
                        }
                    }
                    if best_m < best_g {
                        best_g = best_m;
                        arg = am;
                    }
                }
                self.member_at(arg, v, p, rec)
            }
            Op::Extremal(sign, odd) => self.extremal_at(*sign, *odd, v, p, rec),
        }
    }

    fn member_at<R: Rec>(&self, mi: usize, v: &[f64], p: usize, rec: &mut R) -> f64 {
        let mb = &self.members[mi];
        let c = v[p];
        let mut total = 0.0;
        let mut cc = 0.0;
        for (k, &s) in self.shifts.iter().enumerate() {
            let (ia, ib) = ((p as isize + s) as usize, (p as isize - s) as usize);
            let (a, b) = (v[ia], v[ib]);
            let (we, wo) = (mb.ke2[k], mb.ko2[k]);
            total += we * (a + b - 2.0 * c) + wo * (a - b);
            rec.add(ia, we + wo);
            rec.add(ib, we - wo);
            cc -= 2.0 * we;
        }
        for (d, &s) in self.near_shifts.iter().enumerate() {
            let w = mb.near_even[d];
            if w == 0.0 {
                continue;
            }
            let (ia, ib) = ((p as isize + s) as usize, (p as isize - s) as usize);
            total += w * (v[ia] + v[ib] - 2.0 * c);
            rec.add(ia, w);
            rec.add(ib, w);
            cc -= 2.0 * w;
        }
        for (d, &s) in self.grad_shifts.iter().enumerate() {
            let w = 2.0 * mb.near_odd[d] / self.h;
            if w > 0.0 {
                let ia = (p as isize + s) as usize;
                total += w * (v[ia] - c);
                rec.add(ia, w);
                cc -= w;
            } else if w < 0.0 {
                let ib = (p as isize - s) as usize;
                total += w * (c - v[ib]);
                rec.add(ib, -w);
                cc += w;
            }
        }
        total += mb.far_even * (self.f_plus + self.f_minus - 2.0 * c) + mb.far_odd * (self.f_plus - self.f_minus);
        cc -= 2.0 * mb.far_even;
        rec.add(p, cc);
        total
    }

    #[inline]
    fn pucci(&self, sign: Sign, d: f64) -> f64 {
        match (sign, d > 0.0) {
            (Sign::Plus, true) | (Sign::Minus, false) => self.lam_hi,
            _ => self.lam_lo,
        }
    }

    fn extremal_at<R: Rec>(&self, sign: Sign, odd: Odd, v: &[f64], p: usize, rec: &mut R) -> f64 {
        let c = v[p];
        let s = sign.factor();
        let mut total = 0.0;
        let mut cc = 0.0;
        for (k, &sh) in self.shifts.iter().enumerate() {
            let (ia, ib) = ((p as isize + sh) as usize, (p as isize - sh) as usize);
            let (a, b) = (v[ia], v[ib]);
            let de = a + b - 2.0 * c;
            let dodd = a - b;
            let (ke, ko) = match odd {
                Odd::None => (self.pucci(sign, de) * self.unit_e[k], 0.0),
                Odd::L0 => {
                    let sg = if dodd > 0.0 { 1.0 } else if dodd < 0.0 { -1.0 } else { 0.0 };
                    (self.pucci(sign, de) * self.unit_e[k], s * self.b * self.unit_o[k] * sg)
                }
                Odd::Tilde => {
                    let we = self.unit_e[k];
                    tilde_kernel(self.lam_lo * we, self.lam_hi * we, self.b * self.unit_o[k], sign, de, dodd)
                }
            };
            total += ke * de + ko * dodd;
            rec.add(ia, ke + ko);
            rec.add(ib, ke - ko);
            cc -= 2.0 * ke;
        }
        for (d, &sh) in self.near_shifts.iter().enumerate() {
            let w = self.near_unit_even[d];
            if w == 0.0 {
                continue;
            }
            let (ia, ib) = ((p as isize + sh) as usize, (p as isize - sh) as usize);
            let de = v[ia] + v[ib] - 2.0 * c;
            let ke = self.pucci(sign, de) * w;
            total += ke * de;
            rec.add(ia, ke);
            rec.add(ib, ke);
            cc -= 2.0 * ke;
        }
        if odd != Odd::None && self.b > 0.0 {
            // ±2b·V·|∇u| with a monotone upwind |∇u|.
            let w = self.b * self.near_unit_odd;
            let mut q = [0.0; 2];
            let mut pick = [(0usize, 0.0f64); 2];
            for (d, &sh) in self.grad_shifts.iter().enumerate() {
                let ia = (p as isize + sh) as usize;
                let ib = (p as isize - sh) as usize;
                let fwd = (v[ia] - c) / self.h;
                let bwd = (v[ib] - c) / self.h;
                let (val, idx) = match sign {
                    Sign::Plus => {
                        if fwd >= bwd { (fwd, ia) } else { (bwd, ib) }
                    }
                    Sign::Minus => {
                        if fwd <= bwd { (fwd, ia) } else { (bwd, ib) }
                    }
                };
                let keep = match sign {
                    Sign::Plus => val > 0.0,
                    Sign::Minus => val < 0.0,
                };
                if keep {
                    q[d] = val;
                    pick[d] = (idx, 1.0);
                }
            }
            let mag = (q[0] * q[0] + q[1] * q[1]).sqrt();
            if mag > 0.0 {
                total += s * w * mag;
                for d in 0..self.grad_shifts.len() {
                    if pick[d].1 > 0.0 {
                        // ∂|q|/∂q_d = q_d/|q|; q_d = (v[idx] − c)/h.
                        let coef = s * w * q[d] / mag / self.h;
                        rec.add(pick[d].0, coef);
                        cc -= coef;
                    }
                }
            }
        }
        let fe = self.f_plus + self.f_minus - 2.0 * c;
        let fo = self.f_plus - self.f_minus;
        if odd == Odd::Tilde && self.dim == 1 {
            for &(we, wo) in &self.far_nodes {
                let (ke, ko) = tilde_kernel(self.lam_lo * we, self.lam_hi * we, self.b * wo, sign, fe, fo);
                total += ke * fe + ko * fo;
                cc -= 2.0 * ke;
            }
        } else {
            let ke = self.pucci(sign, fe) * self.far_unit_even;
            total += ke * fe;
            cc -= 2.0 * ke;
            if odd != Odd::None {
                total += s * self.b * self.far_unit_odd * fo.abs();
            }
        }
        rec.add(p, cc);
        total
    }

    /// I_h u at every Ω node for a field on the scheme's grid.
    pub fn apply(&self, u: &GridField) -> Vec<f64> {
        let v = self.ext_values(u);
        self.omega_ext.iter().map(|&p| self.eval_at(&v, p, &mut ())).collect()
    }
}
