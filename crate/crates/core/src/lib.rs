//! Metric-entropy machinery for bounded convex functions.
//!
//! - [`convex`]: convex functions on rectangles, subgradients, rescaling.
//! - [`metrics`]: `L_p`, grid `L_∞` and epigraph-Hausdorff distances, greedy packing.
//! - [`packing`]: the explicit perturbation family of `f0` and its certificate.
//! - [`schedule`]: the strip schedule behind the upper bound and its inequalities.
//! - [`verify`]: checkers for the inequalities relating these distances.

pub mod convex;
pub mod error;
pub mod logspace;
pub mod metrics;
pub mod packing;
pub mod quadrature;
pub mod rational;
pub mod schedule;
pub mod verify;

pub use convex::{
    coordinate_lipschitz_estimate, make_random_convex, make_random_convex_on, rescale_to_unit,
    Affine, ConvexFunction, Form, LipschitzVector, RandomConvex, Rect, MAX_DIM,
};
pub use error::{Error, Result};
pub use metrics::{DistanceReport, Metric};
pub use quadrature::{GridSpec, Rule};
pub use rational::Rational;
pub use packing::{BinaryCode, CellIndex, IntervalSystem, PackingCertificate, PackingFamily};
pub use schedule::{Breakpoints, ScheduleReport, StripSchedule};
pub use verify::{HingeCase, InequalityReport};
