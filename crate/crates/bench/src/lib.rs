//! Shared fixtures for the criterion benches.

use cvxent::{make_random_convex, ConvexFunction, Rect};

/// A seeded pair of random max-affine functions on `[0, 1]^d`.
pub fn random_pair(d: usize, seed: u64) -> (ConvexFunction, ConvexFunction) {
    let f = make_random_convex(d, 1.0, 6, 2 * seed).expect("random function");
    let g = make_random_convex(d, 1.0, 6, 2 * seed + 1).expect("random function");
    (f.function, g.function)
}

/// `max(0, 1 - x/alpha)` and the zero function on `[0, 1]`.
pub fn hinge_pair(alpha: f64) -> (ConvexFunction, ConvexFunction) {
    let unit = Rect::unit(1).expect("unit interval");
    (
        ConvexFunction::hinge(unit.clone(), alpha, 0).expect("valid hinge"),
        ConvexFunction::constant(unit, 0.0).expect("zero"),
    )
}
