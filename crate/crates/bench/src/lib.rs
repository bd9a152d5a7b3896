//! Shared fixtures for the benchmarks.

use nonlocal_lab::{EllipticityParams, GridField, Point, Tail};

/// σ = 1.5, τ = 0.5, λ = 1, Λ = 2 and half the largest admissible drift.
pub fn params(dim: usize) -> EllipticityParams {
    let mut p = EllipticityParams::new(1.5, 0.5, 1.0, 2.0, 0.0, dim);
    p.b = 0.5 * p.b_max();
    p
}

/// A smooth bump plus a tilt on [-2, 2]ⁿ with spacing h, constant zero tail.
pub fn smooth_field(dim: usize, h: f64) -> GridField {
    GridField::from_fn(
        dim,
        2.0,
        h,
        |x: Point| (-2.0 * (x[0] * x[0] + x[1] * x[1])).exp() * (1.0 + 0.3 * x[0]),
        Tail::Constant(0.0),
    )
    .expect("fixture grid")
}

/// A field with several dips below zero inside B1, zero outside.
pub fn dipped_field(dim: usize, h: f64) -> GridField {
    GridField::from_fn(
        dim,
        1.5,
        h,
        |x: Point| {
            if x[0] * x[0] + x[1] * x[1] > 1.0 {
                return 0.0;
            }
            let d = |c: f64, w: f64| -((1.0 - ((x[0] - c) / w).powi(2) - (x[1] / w).powi(2)).max(0.0));
            d(-0.4, 0.3) + 0.6 * d(0.35, 0.2)
        },
        Tail::Constant(0.0),
    )
    .expect("fixture grid")
}
