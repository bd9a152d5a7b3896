//! Bounded functions on ℝⁿ (n = 1, 2) stored as node values on a uniform
//! grid over the box [-R, R]ⁿ together with an explicit far-field tail.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::error::{Error, Result};

/// A point of ℝ² also used for n = 1 (second coordinate ignored, kept at 0).
pub type Point = [f64; 2];

pub(crate) fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn scale(a: Point, s: f64) -> Point {
    [a[0] * s, a[1] * s]
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub(crate) fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

/// Constant values taken by a field far from the origin.
///
/// In one dimension the two half-lines may carry different constants; in two
/// dimensions `plus == minus` is required for the far field to be usable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FarField {
    /// The field is constant outside the ball of this radius.
    pub radius: f64,
    pub plus: f64,
    pub minus: f64,
}

impl FarField {
    pub fn constant(radius: f64, value: f64) -> Self {
        FarField { radius, plus: value, minus: value }
    }

    /// Far value in direction `dir` (only the sign of the first coordinate
    /// matters, and only in 1D).
    pub fn value(&self, dim: usize, dir: Point) -> f64 {
        if dim == 1 && dir[0] < 0.0 {
            self.minus
        } else {
            self.plus
        }
    }
}

pub type TailFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// A user supplied far-field model.
#[derive(Clone)]
pub struct ExplicitTail {
    name: String,
    f: TailFn,
    far: Option<FarField>,
    bound: Option<f64>,
}

impl ExplicitTail {
    pub fn new(name: impl Into<String>, f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        ExplicitTail { name: name.into(), f: Arc::new(f), far: None, bound: None }
    }

    /// Declares that the tail is constant outside `B_radius`.
    pub fn with_far_constant(mut self, radius: f64, value: f64) -> Self {
        self.far = Some(FarField::constant(radius, value));
        self
    }

    pub fn with_far_field(mut self, far: FarField) -> Self {
        self.far = Some(far);
        self
    }

    /// Declares a sup bound of |tail|; otherwise the bound is sampled.
    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: Point) -> f64 {
        (self.f)(x)
    }
}

/// Far-field model of a [`GridField`]: how the field is defined outside the box.
#[derive(Clone)]
pub enum Tail {
    /// The constant `c` everywhere outside the box.
    Constant(f64),
    /// Value at the nearest point of the box (constant extension of the boundary).
    Clamp,
    Explicit(ExplicitTail),
}

impl fmt::Debug for Tail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tail::Constant(c) => write!(f, "Constant({c})"),
            Tail::Clamp => write!(f, "Clamp"),
            Tail::Explicit(t) => write!(f, "Explicit({})", t.name),
        }
    }
}

/// Node values on `[-R, R]ⁿ` with spacing `h` plus a tail.
#[derive(Clone)]
pub struct GridField {
    dim: usize,
    radius: f64,
    spacing: f64,
    /// Nodes per axis, `2 R / h + 1`.
    n: usize,
    values: Vec<f64>,
    tail: Tail,
}

impl fmt::Debug for GridField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridField")
            .field("dim", &self.dim)
            .field("radius", &self.radius)
            .field("spacing", &self.spacing)
            .field("nodes", &self.values.len())
            .field("tail", &self.tail)
            .finish()
    }
}

fn half_count(radius: f64, spacing: f64) -> Result<usize> {
    if !(radius > 0.0 && spacing > 0.0 && radius.is_finite() && spacing.is_finite()) {
        return Err(Error::invalid(format!("box radius {radius} and spacing {spacing} must be positive")));
    }
    let m = radius / spacing;
    let mr = m.round();
    if (m - mr).abs() > 1e-9 * m.max(1.0) || mr < 1.0 {
        return Err(Error::invalid(format!("R/h = {m} is not a positive integer")));
    }
    Ok(mr as usize)
}

/// Lagrange weights on nodes i−1..i+2 at i + t, if all four exist.
fn cubic_weights(i: usize, t: f64, n: usize) -> Option<[f64; 4]> {
    if i == 0 || i + 2 >= n {
        return None;
    }
    Some([
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ])
}

impl GridField {
    pub fn from_values(dim: usize, radius: f64, spacing: f64, values: Vec<f64>, tail: Tail) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::invalid(format!("dimension {dim} not in {{1, 2}}")));
        }
        let n = 2 * half_count(radius, spacing)? + 1;
        let expected = if dim == 1 { n } else { n * n };
        if values.len() != expected {
            return Err(Error::invalid(format!("expected {expected} node values, got {}", values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("node value {i} is not finite")));
        }
        match &tail {
            Tail::Constant(c) if !c.is_finite() => {
                return Err(Error::invalid("tail constant is not finite"));
            }
            _ => {}
        }
        Ok(GridField { dim, radius, spacing, n, values, tail })
    }

    pub fn from_fn(dim: usize, radius: f64, spacing: f64, f: impl Fn(Point) -> f64, tail: Tail) -> Result<Self> {
        let n = 2 * half_count(radius, spacing)? + 1;
        let count = if dim == 1 { n } else { n * n };
        let mut values = Vec::with_capacity(count);
        for idx in 0..count {
            values.push(f(node_point(dim, radius, spacing, n, idx)));
        }
        Self::from_values(dim, radius, spacing, values, tail)
    }

    /// Samples `f` on the nodes and uses `f` itself as the tail.
    pub fn from_explicit(
        dim: usize,
        radius: f64,
        spacing: f64,
        name: &str,
        f: impl Fn(Point) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let f = Arc::new(f);
        let g = f.clone();
        let tail = Tail::Explicit(ExplicitTail { name: name.to_string(), f: Arc::new(move |x| g(x)), far: None, bound: None });
        Self::from_fn(dim, radius, spacing, |x| f(x), tail)
    }

    pub fn constant(dim: usize, radius: f64, spacing: f64, c: f64) -> Result<Self> {
        Self::from_fn(dim, radius, spacing, |_| c, Tail::Constant(c))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn box_radius(&self) -> f64 {
        self.radius
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Nodes per axis.
    pub fn nodes_per_axis(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tail(&self) -> &Tail {
        &self.tail
    }

    pub fn with_tail(mut self, tail: Tail) -> Self {
        self.tail = tail;
        self
    }

    /// Same grid and tail, new node values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::from_values(self.dim, self.radius, self.spacing, values, self.tail.clone())
    }

    pub fn node(&self, idx: usize) -> Point {
        node_point(self.dim, self.radius, self.spacing, self.n, idx)
    }

    /// Index of the node at `x`, if `x` is a node.
    pub fn node_index(&self, x: Point) -> Option<usize> {
        let mut idx = 0usize;
        let mut stride = 1usize;
        for &coord in x.iter().take(self.dim) {
            let t = (coord + self.radius) / self.spacing;
            let tr = t.round();
            if (t - tr).abs() > 1e-9 || tr < 0.0 || tr as usize >= self.n {
                return None;
            }
            idx += tr as usize * stride;
            stride *= self.n;
        }
        if self.dim == 1 && x[1] != 0.0 {
            return None;
        }
        Some(idx)
    }

    /// Node index from integer axis coordinates (`j` ignored in 1D).
    pub fn index(&self, i: usize, j: usize) -> usize {
        if self.dim == 1 {
            i
        } else {
            i + self.n * j
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = (usize, Point)> + '_ {
        (0..self.values.len()).map(move |i| (i, self.node(i)))
    }

    pub fn in_box(&self, x: Point) -> bool {
        let tol = 1e-12 * self.radius;
        (0..self.dim).all(|d| x[d].abs() <= self.radius + tol)
    }

    /// Value at any point of ℝⁿ: nodes exactly, multilinear interpolation in
    /// the box, tail outside.
    pub fn eval(&self, x: Point) -> f64 {
        if self.in_box(x) {
            self.interpolate(x)
        } else {
            match &self.tail {
                Tail::Constant(c) => *c,
                Tail::Clamp => {
                    let r = self.radius;
                    self.interpolate([x[0].clamp(-r, r), x[1].clamp(-r, r)])
                }
                Tail::Explicit(t) => t.eval(x),
            }
        }
    }

    /// As [`eval`](Self::eval) but with 4-point Lagrange interpolation along
    /// each axis (linear next to the box edge), clamped to the range of the
    /// stencil values so that bounds on the data carry over. Used for
    /// quadrature samples, where the O(h²) error of linear interpolation is
    /// amplified by the kernel singularity.
    pub fn eval_cubic(&self, x: Point) -> f64 {
        if !self.in_box(x) {
            return self.eval(x);
        }
        let (i, fx) = self.axis_locate(x[0]);
        if self.dim == 1 {
            if fx == 0.0 {
                return self.values[i];
            }
            return match cubic_weights(i, fx, self.n) {
                // differences from a node value keep constants exact
                Some(w) => {
                    let st = &self.values[i - 1..i + 3];
                    let c = self.values[i];
                    let v = c + (0..4).map(|k| w[k] * (st[k] - c)).sum::<f64>();
                    let (lo, hi) = st.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
                    v.clamp(lo, hi)
                }
                None => self.interpolate(x),
            };
        }
        let (j, fy) = self.axis_locate(x[1]);
        if fx == 0.0 && fy == 0.0 {
            return self.values[i + self.n * j];
        }
        match (cubic_weights(i, fx, self.n), cubic_weights(j, fy, self.n)) {
            (Some(wx), Some(wy)) => {
                let c = self.values[i + self.n * j];
                let mut acc = c;
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for (b, wyb) in wy.iter().enumerate() {
                    let row = (j + b - 1) * self.n;
                    let mut r = 0.0;
                    for (a, wxa) in wx.iter().enumerate() {
                        let s = self.values[row + i + a - 1];
                        lo = lo.min(s);
                        hi = hi.max(s);
                        r += wxa * (s - c);
                    }
                    acc += wyb * r;
                }
                acc.clamp(lo, hi)
            }
            _ => self.interpolate(x),
        }
    }

    fn axis_locate(&self, coord: f64) -> (usize, f64) {
        let t = ((coord + self.radius) / self.spacing).clamp(0.0, (self.n - 1) as f64);
        let i = (t.floor() as usize).min(self.n - 2);
        (i, t - i as f64)
    }

    fn interpolate(&self, x: Point) -> f64 {
        let (i, fx) = self.axis_locate(x[0]);
        if self.dim == 1 {
            if fx == 0.0 {
                return self.values[i];
            }
            if fx == 1.0 {
                return self.values[i + 1];
            }
            return self.values[i] * (1.0 - fx) + self.values[i + 1] * fx;
        }
        let (j, fy) = self.axis_locate(x[1]);
        let n = self.n;
        let v00 = self.values[i + n * j];
        if fx == 0.0 && fy == 0.0 {
            return v00;
        }
        let v10 = self.values[i + 1 + n * j];
        let v01 = self.values[i + n * (j + 1)];
        let v11 = self.values[i + 1 + n * (j + 1)];
        (v00 * (1.0 - fx) + v10 * fx) * (1.0 - fy) + (v01 * (1.0 - fx) + v11 * fx) * fy
    }

    /// Radius beyond which the field is constant, with the constants, when known.
    pub fn far_field(&self) -> Option<FarField> {
        let box_diag = self.radius * (self.dim as f64).sqrt();
        match &self.tail {
            Tail::Constant(c) => Some(FarField::constant(box_diag, *c)),
            Tail::Clamp if self.dim == 1 => Some(FarField {
                radius: self.radius,
                plus: self.values[self.n - 1],
                minus: self.values[0],
            }),
            Tail::Clamp => None,
            Tail::Explicit(t) => t.far,
        }
    }

    fn tail_bound(&self) -> f64 {
        match &self.tail {
            Tail::Constant(c) => c.abs(),
            Tail::Clamp => 0.0,
            Tail::Explicit(t) => t.bound.unwrap_or_else(|| {
                let (lo, hi) = self.sample_tail_range(t);
                lo.abs().max(hi.abs())
            }),
        }
    }

    fn sample_tail_range(&self, t: &ExplicitTail) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let r0 = self.radius * (1.0 + 1e-9);
        let shells = 48;
        let angles = if self.dim == 1 { 2 } else { 32 };
        for s in 0..shells {
            let r = r0 * (16.0f64).powf(s as f64 / (shells - 1) as f64);
            for a in 0..angles {
                let dir = if self.dim == 1 {
                    [if a == 0 { 1.0 } else { -1.0 }, 0.0]
                } else {
                    let th = std::f64::consts::TAU * a as f64 / angles as f64;
                    [th.cos(), th.sin()]
                };
                let v = t.eval(scale(dir, r));
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if let Some(far) = t.far {
            for v in [far.plus, far.minus] {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    /// ‖u‖_∞ over nodes and tail.
    pub fn sup_norm(&self) -> f64 {
        let nodes = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        nodes.max(self.tail_bound())
    }

    /// (min, max) over nodes and tail samples.
    pub fn range(&self) -> (f64, f64) {
        let (mut lo, mut hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        match &self.tail {
            Tail::Constant(c) => {
                lo = lo.min(*c);
                hi = hi.max(*c);
            }
            Tail::Clamp => {}
            Tail::Explicit(t) => {
                let (a, b) = self.sample_tail_range(t);
                lo = lo.min(a);
                hi = hi.max(b);
            }
        }
        (lo, hi)
    }

    pub fn osc(&self) -> f64 {
        let (lo, hi) = self.range();
        hi - lo
    }
}

fn node_point(dim: usize, radius: f64, spacing: f64, n: usize, idx: usize) -> Point {
    if dim == 1 {
        [-radius + idx as f64 * spacing, 0.0]
    } else {
        let i = idx % n;
        let j = idx / n;
        [-radius + i as f64 * spacing, -radius + j as f64 * spacing]
    }
}

/// δ_e(u, x; y) = u(x + y) + u(x − y) − 2u(x).
pub fn delta_even(u: &GridField, x: Point, y: Point) -> f64 {
    let ux = u.eval(x);
    (u.eval(add(x, y)) - ux) + (u.eval(sub(x, y)) - ux)
}

/// δ_o(u, x; y) = u(x + y) − u(x − y).
pub fn delta_odd(u: &GridField, x: Point, y: Point) -> f64 {
    u.eval(add(x, y)) - u.eval(sub(x, y))
}

/// Integer lattice offsets `k` with `|k| h <= radius`.
pub(crate) fn lattice_offsets(dim: usize, spacing: f64, radius: f64) -> Vec<Point> {
    let m = (radius / spacing).floor() as i64;
    let mut out = Vec::new();
    if dim == 1 {
        for k in -m..=m {
            out.push([k as f64 * spacing, 0.0]);
        }
    } else {
        for j in -m..=m {
            for i in -m..=m {
                let y = [i as f64 * spacing, j as f64 * spacing];
                if norm(y) <= radius + 1e-12 {
                    out.push(y);
                }
            }
        }
    }
    out
}

fn convolution(u: &GridField, eps: f64, sign: f64) -> Result<GridField> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("eps = {eps} must be positive")));
    }
    let radius = 2.0 * (eps * u.osc()).sqrt() + u.spacing;
    let offsets = Arc::new(lattice_offsets(u.dim, u.spacing, radius));
    let src = Arc::new(u.clone());
    let point_value = {
        let src = src.clone();
        let offsets = offsets.clone();
        move |x: Point| -> f64 {
            let mut best = sign * f64::INFINITY;
            for &y in offsets.iter() {
                let v = src.eval(add(x, y)) + sign * dot(y, y) / eps;
                if sign > 0.0 {
                    best = best.min(v);
                } else {
                    best = best.max(v);
                }
            }
            best
        }
    };
    let values: Vec<f64> = u.nodes().map(|(_, x)| point_value(x)).collect();
    let name = if sign > 0.0 { "inf-convolution" } else { "sup-convolution" };
    let (lo, hi) = u.range();
    let tail = ExplicitTail::new(name, point_value).with_bound(lo.abs().max(hi.abs()));
    GridField::from_values(u.dim, u.radius, u.spacing, values, Tail::Explicit(tail))
}

/// u_ε(x) = inf_y u(x + y) + |y|²/ε, minimised over the lattice through x.
pub fn inf_convolution(u: &GridField, eps: f64) -> Result<GridField> {
    convolution(u, eps, 1.0)
}

/// u^ε(x) = sup_y u(x + y) − |y|²/ε.
pub fn sup_convolution(u: &GridField, eps: f64) -> Result<GridField> {
    convolution(u, eps, -1.0)
}

/// x ↦ α u(β x) on the box of radius R/β with spacing h/β.
pub fn rescale(u: &GridField, alpha: f64, beta: f64) -> Result<GridField> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::invalid("rescale needs alpha, beta > 0"));
    }
    let tail = match &u.tail {
        Tail::Constant(c) => Tail::Constant(alpha * c),
        Tail::Clamp => Tail::Clamp,
        Tail::Explicit(t) => {
            let f = t.f.clone();
            let mut nt = ExplicitTail::new(format!("rescaled {}", t.name), move |x| alpha * f(scale(x, beta)));
            nt.far = t.far.map(|far| FarField { radius: far.radius / beta, plus: alpha * far.plus, minus: alpha * far.minus });
            nt.bound = t.bound.map(|b| alpha * b);
            Tail::Explicit(nt)
        }
    };
    let values = u.values.iter().map(|v| alpha * v).collect();
    GridField::from_values(u.dim, u.radius / beta, u.spacing / beta, values, tail)
}

/// x ↦ (u(x + hstep e) − u(x)) / |hstep|^γ on the same grid.
pub fn incremental_quotient(u: &GridField, hstep: f64, e: Point, gamma: f64) -> Result<GridField> {
    if hstep == 0.0 || !hstep.is_finite() {
        return Err(Error::invalid("hstep must be nonzero"));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid(format!("gamma = {gamma} not in [0, 1]")));
    }
    let shift = scale(e, hstep);
    let denom = hstep.abs().powf(gamma);
    let src = Arc::new(u.clone());
    let q = move |x: Point| (src.eval(add(x, shift)) - src.eval(x)) / denom;
    let values = u.nodes().map(|(_, x)| q(x)).collect();
    let mut tail = ExplicitTail::new("incremental quotient", q);
    if let Some(far) = u.far_field() {
        if far.plus == far.minus {
            tail = tail.with_far_constant(far.radius + hstep.abs(), 0.0);
        }
    }
    tail = tail.with_bound(2.0 * u.sup_norm() / denom);
    GridField::from_values(u.dim, u.radius, u.spacing, values, Tail::Explicit(tail))
}

const CSV_MAGIC: &str = "# nonlocal-lab gridfield v1";

/// Writes the header and one row per node (`x[,y],value`), 17 significant digits.
pub fn write_csv<W: Write>(u: &GridField, mut w: W) -> Result<()> {
    writeln!(w, "{CSV_MAGIC}")?;
    writeln!(w, "dim,{}", u.dim)?;
    writeln!(w, "box_radius,{:.16e}", u.radius)?;
    writeln!(w, "spacing,{:.16e}", u.spacing)?;
    match &u.tail {
        Tail::Constant(c) => writeln!(w, "tail,constant,{c:.16e}")?,
        Tail::Clamp => writeln!(w, "tail,clamp")?,
        Tail::Explicit(t) => writeln!(w, "tail,explicit,{}", t.name.replace(',', ";"))?,
    }
    if u.dim == 1 {
        writeln!(w, "x,value")?;
    } else {
        writeln!(w, "x,y,value")?;
    }
    for (i, p) in u.nodes() {
        if u.dim == 1 {
            writeln!(w, "{:.16e},{:.16e}", p[0], u.values[i])?;
        } else {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", p[0], p[1], u.values[i])?;
        }
    }
    Ok(())
}

/// Reads a field written by [`write_csv`]. Explicit tails cannot be stored and
/// must be supplied through `explicit_tail`.
pub fn read_csv<R: BufRead>(r: R, explicit_tail: Option<ExplicitTail>) -> Result<GridField> {
    let mut lines = r.lines();
    let mut next = || -> Result<String> {
        lines.next().ok_or_else(|| Error::Format("unexpected end of file".into()))?.map_err(Error::from)
    };
    if next()?.trim() != CSV_MAGIC {
        return Err(Error::Format("missing gridfield header".into()));
    }
    let field = |line: String, key: &str| -> Result<Vec<String>> {
        let parts: Vec<String> = line.trim().split(',').map(str::to_string).collect();
        if parts.first().map(String::as_str) != Some(key) {
            return Err(Error::Format(format!("expected `{key}` row, got `{line}`")));
        }
        Ok(parts[1..].to_vec())
    };
    let num = |s: &str| -> Result<f64> { s.trim().parse::<f64>().map_err(|e| Error::Format(format!("{s}: {e}"))) };
    let dim = num(&field(next()?, "dim")?[0])? as usize;
    let radius = num(&field(next()?, "box_radius")?[0])?;
    let spacing = num(&field(next()?, "spacing")?[0])?;
    let tail_row = field(next()?, "tail")?;
    let tail = match tail_row.first().map(String::as_str) {
        Some("constant") => Tail::Constant(num(tail_row.get(1).map(String::as_str).unwrap_or(""))?),
        Some("clamp") => Tail::Clamp,
        Some("explicit") => Tail::Explicit(
            explicit_tail.ok_or_else(|| Error::Format("field has an explicit tail; supply it when reading".into()))?,
        ),
        _ => return Err(Error::Format(format!("unknown tail {tail_row:?}"))),
    };
    let _columns = next()?;
    let mut values = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let last = line.rsplit(',').next().unwrap_or("");
        values.push(num(last)?);
    }
    GridField::from_values(dim, radius, spacing, values, tail)
}
