//! Convex functions on axis-aligned rectangles.
//!
//! Every [`ConvexFunction`] is convex by construction: the available forms are
//! affine maps, maxima of affine maps, the separable quadratic
//! `f0(x) = (x_1^2 + ... + x_d^2) / d`, one-sided hinges, pointwise maxima of
//! convex functions and affine reparametrizations of those.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain_err, param_err, Error, Result};
use crate::quadrature::{GridSpec, TensorGrid};

/// Largest supported dimension.
pub const MAX_DIM: usize = 8;

/// Points per axis used to spot-check sup-norm bounds.
pub const BOUND_CHECK_POINTS: usize = 17;

const RANDOM_ATTEMPTS: usize = 1000;

pub(crate) mod f64_str {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{x:?}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(D::Error::custom)
    }
}

pub(crate) mod f64_vec_str {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(xs.iter().map(|x| format!("{x:?}")))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter()
            .map(|s| s.parse().map_err(D::Error::custom))
            .collect()
    }
}

/// The box `[lo_1, hi_1] × … × [lo_d, hi_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRect")]
pub struct Rect {
    #[serde(with = "f64_vec_str")]
    lo: Vec<f64>,
    #[serde(with = "f64_vec_str")]
    hi: Vec<f64>,
}

#[derive(Deserialize)]
struct RawRect {
    #[serde(with = "f64_vec_str")]
    lo: Vec<f64>,
    #[serde(with = "f64_vec_str")]
    hi: Vec<f64>,
}

impl TryFrom<RawRect> for Rect {
    type Error = Error;

    fn try_from(raw: RawRect) -> Result<Self> {
        Rect::new(raw.lo, raw.hi)
    }
}

impl Rect {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(param_err!("rect bounds have lengths {} and {}", lo.len(), hi.len()));
        }
        if lo.is_empty() || lo.len() > MAX_DIM {
            return Err(param_err!("dimension {} outside 1..={MAX_DIM}", lo.len()));
        }
        for (i, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(param_err!("axis {i}: need finite lo < hi, got [{a}, {b}]"));
            }
        }
        Ok(Rect { lo, hi })
    }

    pub fn unit(d: usize) -> Result<Self> {
        Rect::new(vec![0.0; d], vec![1.0; d])
    }

    /// The cube `[a, b]^d`.
    pub fn cube(a: f64, b: f64, d: usize) -> Result<Self> {
        Rect::new(vec![a; d], vec![b; d])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }

    pub fn is_unit(&self) -> bool {
        self.lo.iter().all(|&a| a == 0.0) && self.hi.iter().all(|&b| b == 1.0)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| a <= v && v <= b)
    }

    pub fn contains_interior(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| a < v && v < b)
    }
}

/// `x ↦ ⟨coeffs, x⟩ + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    #[serde(with = "f64_vec_str")]
    pub coeffs: Vec<f64>,
    #[serde(with = "f64_str")]
    pub intercept: f64,
}

impl Affine {
    pub fn new(coeffs: Vec<f64>, intercept: f64) -> Self {
        Affine { coeffs, intercept }
    }

    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .zip(x)
            .fold(self.intercept, |acc, (a, v)| acc + a * v)
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.coeffs.len() != d {
            return Err(param_err!(
                "affine piece has {} coefficients in dimension {d}",
                self.coeffs.len()
            ));
        }
        if !self.intercept.is_finite() || self.coeffs.iter().any(|a| !a.is_finite()) {
            return Err(param_err!("affine piece has non-finite coefficients"));
        }
        Ok(())
    }
}

/// The tagged representation of a convex function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Form {
    Affine(Affine),
    MaxAffine {
        pieces: Vec<Affine>,
    },
    /// `(x_1^2 + … + x_d^2) / d`.
    SeparableQuadratic,
    /// `max(0, 1 - x_axis / alpha)`.
    Hinge {
        #[serde(with = "f64_str")]
        alpha: f64,
        axis: usize,
    },
    MaxWith {
        parts: Vec<ConvexFunction>,
    },
    /// `base(φ(x)) / scale`, with `φ` the affine bijection from this
    /// function's domain onto `base`'s domain.
    Rescaled {
        base: Box<ConvexFunction>,
        #[serde(with = "f64_str")]
        scale: f64,
    },
}

/// A convex function with its rectangular domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFunction")]
pub struct ConvexFunction {
    domain: Rect,
    form: Form,
}

#[derive(Deserialize)]
struct RawFunction {
    domain: Rect,
    form: Form,
}

impl TryFrom<RawFunction> for ConvexFunction {
    type Error = Error;

    fn try_from(raw: RawFunction) -> Result<Self> {
        ConvexFunction::new(raw.domain, raw.form)
    }
}

impl ConvexFunction {
    /// Validates `form` against `domain`.
    pub fn new(domain: Rect, form: Form) -> Result<Self> {
        let d = domain.dim();
        match &form {
            Form::Affine(a) => a.validate(d)?,
            Form::MaxAffine { pieces } => {
                if pieces.is_empty() {
                    return Err(param_err!("max-affine needs at least one piece"));
                }
                for p in pieces {
                    p.validate(d)?;
                }
            }
            Form::SeparableQuadratic => {}
            Form::Hinge { alpha, axis } => {
                if !(alpha.is_finite() && *alpha > 0.0) {
                    return Err(param_err!("hinge alpha must be positive, got {alpha}"));
                }
                if *axis >= d {
                    return Err(param_err!("hinge axis {axis} out of range for dimension {d}"));
                }
            }
            Form::MaxWith { parts } => {
                if parts.is_empty() {
                    return Err(param_err!("max of functions needs at least one part"));
                }
                if parts.iter().any(|p| p.domain != domain) {
                    return Err(param_err!("all parts of a max must share its domain"));
                }
            }
            Form::Rescaled { base, scale } => {
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(param_err!("rescale bound must be positive, got {scale}"));
                }
                if base.dim() != d {
                    return Err(param_err!("rescaled base has dimension {}", base.dim()));
                }
            }
        }
        Ok(ConvexFunction { domain, form })
    }

    pub fn affine(domain: Rect, coeffs: Vec<f64>, intercept: f64) -> Result<Self> {
        Self::new(domain, Form::Affine(Affine::new(coeffs, intercept)))
    }

    pub fn constant(domain: Rect, value: f64) -> Result<Self> {
        let d = domain.dim();
        Self::affine(domain, vec![0.0; d], value)
    }

    pub fn max_affine(domain: Rect, pieces: Vec<Affine>) -> Result<Self> {
        Self::new(domain, Form::MaxAffine { pieces })
    }

    /// `f0(x) = (x_1^2 + … + x_d^2) / d`.
    pub fn separable_quadratic(domain: Rect) -> Self {
        ConvexFunction { domain, form: Form::SeparableQuadratic }
    }

    pub fn hinge(domain: Rect, alpha: f64, axis: usize) -> Result<Self> {
        Self::new(domain, Form::Hinge { alpha, axis })
    }

    pub fn max_with(parts: Vec<ConvexFunction>) -> Result<Self> {
        let domain = parts
            .first()
            .ok_or_else(|| param_err!("max of functions needs at least one part"))?
            .domain
            .clone();
        Self::new(domain, Form::MaxWith { parts })
    }

    /// Lazy view `x ↦ base(φ(x)) / scale` on `target`, where `φ` maps `target`
    /// affinely onto `base.domain()`.
    pub fn rescaled(base: ConvexFunction, target: Rect, scale: f64) -> Result<Self> {
        Self::new(target, Form::Rescaled { base: Box::new(base), scale })
    }

    pub fn domain(&self) -> &Rect {
        &self.domain
    }

    pub fn form(&self) -> &Form {
        &self.form
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// `f(x)` for `x` in the closed domain.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if !self.domain.contains(x) {
            return Err(domain_err!("point {x:?} outside domain {:?}", self.domain));
        }
        Ok(self.value_at(x))
    }

    /// `f(x)` without the domain check. Points outside the domain are
    /// evaluated by the same formulas; callers use this on grids they built
    /// from the domain itself.
    #[inline]
    pub fn value_at(&self, x: &[f64]) -> f64 {
        match &self.form {
            Form::Affine(a) => a.value(x),
            Form::MaxAffine { pieces } => pieces
                .iter()
                .map(|p| p.value(x))
                .fold(f64::NEG_INFINITY, f64::max),
            Form::SeparableQuadratic => {
                x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
            }
            Form::Hinge { alpha, axis } => (1.0 - x[*axis] / alpha).max(0.0),
            Form::MaxWith { parts } => parts
                .iter()
                .map(|p| p.value_at(x))
                .fold(f64::NEG_INFINITY, f64::max),
            Form::Rescaled { base, scale } => {
                let mut y = [0.0; MAX_DIM];
                let y = self.map_to_base(base, x, &mut y);
                base.value_at(y) / scale
            }
        }
    }

    fn map_to_base<'a>(&self, base: &ConvexFunction, x: &[f64], buf: &'a mut [f64; MAX_DIM]) -> &'a [f64] {
        let d = x.len();
        let (t, b) = (&self.domain, &base.domain);
        for i in 0..d {
            buf[i] = b.lo[i] + b.width(i) * (x[i] - t.lo[i]) / t.width(i);
        }
        &buf[..d]
    }

    /// A subgradient at an interior point. At kinks of max forms the
    /// lowest-index active piece is used.
    pub fn subgradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !self.domain.contains_interior(x) {
            return Err(domain_err!("subgradient needs an interior point, got {x:?}"));
        }
        let mut g = vec![0.0; self.dim()];
        self.subgradient_into(x, &mut g);
        Ok(g)
    }

    /// Unchecked variant of [`subgradient`](Self::subgradient) writing into `out`.
    pub fn subgradient_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.form {
            Form::Affine(a) => out.copy_from_slice(&a.coeffs),
            Form::MaxAffine { pieces } => {
                out.copy_from_slice(&pieces[first_argmax(pieces.iter().map(|p| p.value(x)))].coeffs)
            }
            Form::SeparableQuadratic => {
                let d = x.len() as f64;
                for (o, v) in out.iter_mut().zip(x) {
                    *o = 2.0 * v / d;
                }
            }
            Form::Hinge { alpha, axis } => {
                out.fill(0.0);
                // pieces in order: the zero function, then 1 - x/alpha
                if 1.0 - x[*axis] / alpha > 0.0 {
                    out[*axis] = -1.0 / alpha;
                }
            }
            Form::MaxWith { parts } => {
                parts[first_argmax(parts.iter().map(|p| p.value_at(x)))].subgradient_into(x, out)
            }
            Form::Rescaled { base, scale } => {
                let mut y = [0.0; MAX_DIM];
                let y = self.map_to_base(base, x, &mut y);
                base.subgradient_into(y, out);
                for (i, o) in out.iter_mut().enumerate() {
                    *o *= base.domain.width(i) / self.domain.width(i) / scale;
                }
            }
        }
    }

    /// Per-axis slope bounds valid on the whole domain (`Γ_i` with every
    /// axis-parallel restriction `Γ_i`-Lipschitz).
    pub fn axis_slope_bounds(&self) -> Vec<f64> {
        let d = self.dim();
        match &self.form {
            Form::Affine(a) => a.coeffs.iter().map(|c| c.abs()).collect(),
            Form::MaxAffine { pieces } => (0..d)
                .map(|i| pieces.iter().map(|p| p.coeffs[i].abs()).fold(0.0, f64::max))
                .collect(),
            Form::SeparableQuadratic => (0..d)
                .map(|i| 2.0 * self.domain.lo[i].abs().max(self.domain.hi[i].abs()) / d as f64)
                .collect(),
            Form::Hinge { alpha, axis } => {
                let mut g = vec![0.0; d];
                g[*axis] = 1.0 / alpha;
                g
            }
            Form::MaxWith { parts } => parts.iter().fold(vec![0.0; d], |acc, p| {
                acc.iter().zip(p.axis_slope_bounds()).map(|(a, b)| a.max(b)).collect()
            }),
            Form::Rescaled { base, scale } => base
                .axis_slope_bounds()
                .iter()
                .enumerate()
                .map(|(i, g)| g * base.domain.width(i) / self.domain.width(i) / scale)
                .collect(),
        }
    }

    /// Smallest and largest value over the `17^d` vertex grid.
    pub fn grid_range(&self) -> (f64, f64) {
        let grid = TensorGrid::vertices(&self.domain, BOUND_CHECK_POINTS)
            .expect("17^d is within the grid cap for d <= 8");
        (grid.min_of(|x| self.value_at(x)), grid.max_of(|x| self.value_at(x)))
    }
}

fn first_argmax<I: Iterator<Item = f64>>(values: I) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Per-axis Lipschitz constants `Γ_i ∈ (0, ∞]`; `∞` means no constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGamma")]
pub struct LipschitzVector {
    #[serde(with = "f64_vec_str")]
    gamma: Vec<f64>,
}

#[derive(Deserialize)]
struct RawGamma {
    #[serde(with = "f64_vec_str")]
    gamma: Vec<f64>,
}

impl TryFrom<RawGamma> for LipschitzVector {
    type Error = Error;

    fn try_from(raw: RawGamma) -> Result<Self> {
        LipschitzVector::new(raw.gamma)
    }
}

impl LipschitzVector {
    pub fn new(gamma: Vec<f64>) -> Result<Self> {
        if gamma.is_empty() || gamma.len() > MAX_DIM {
            return Err(param_err!("need 1..={MAX_DIM} Lipschitz constants"));
        }
        if let Some(g) = gamma.iter().find(|g| g.is_nan() || **g <= 0.0) {
            return Err(param_err!("Lipschitz constants must be positive, got {g}"));
        }
        Ok(LipschitzVector { gamma })
    }

    /// Lifts nonnegative slope bounds to valid constants by flooring zeros.
    pub fn from_slopes(slopes: &[f64]) -> Result<Self> {
        Self::new(slopes.iter().map(|s| s.max(f64::MIN_POSITIVE)).collect())
    }

    pub fn unconstrained(d: usize) -> Result<Self> {
        Self::new(vec![f64::INFINITY; d])
    }

    pub fn values(&self) -> &[f64] {
        &self.gamma
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn all_finite(&self) -> bool {
        self.gamma.iter().all(|g| g.is_finite())
    }

    /// Sum of the finite entries.
    pub fn finite_sum(&self) -> f64 {
        self.gamma.iter().filter(|g| g.is_finite()).sum()
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.gamma.iter().map(|g| g * g).sum()
    }

    /// Elementwise maximum.
    pub fn max(&self, other: &LipschitzVector) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(param_err!("Lipschitz vectors have different dimensions"));
        }
        Self::new(self.gamma.iter().zip(&other.gamma).map(|(a, b)| a.max(*b)).collect())
    }
}

/// `f̃(x) = f(lo + (hi - lo) ∘ x) / bound` on `[0, 1]^d`.
///
/// The bound is spot-checked on the `17^d` vertex grid; the function is
/// returned unchanged when it already lives on the unit cube with bound 1.
pub fn rescale_to_unit(f: &ConvexFunction, bound: f64) -> Result<ConvexFunction> {
    if !(bound.is_finite() && bound > 0.0) {
        return Err(param_err!("sup-norm bound must be positive, got {bound}"));
    }
    let (min, max) = f.grid_range();
    let sup = min.abs().max(max.abs());
    if sup > bound * (1.0 + 1e-12) {
        return Err(param_err!("function reaches {sup} on the check grid, above bound {bound}"));
    }
    if f.domain.is_unit() && bound == 1.0 {
        return Ok(f.clone());
    }
    ConvexFunction::rescaled(f.clone(), Rect::unit(f.dim())?, bound)
}

/// A random max-affine function together with its grid-verified range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomConvex {
    pub function: ConvexFunction,
    pub seed: u64,
    pub attempts: usize,
    pub grid_min: f64,
    pub grid_max: f64,
}

/// Seeded max-affine function with `pieces` pieces on `[0, 1]^d` whose values
/// on the `17^d` vertex grid lie in `[-bound, bound]`.
pub fn make_random_convex(d: usize, bound: f64, pieces: usize, seed: u64) -> Result<RandomConvex> {
    make_random_convex_on(&Rect::unit(d)?, bound, pieces, seed)
}

/// As [`make_random_convex`] on an arbitrary rectangle.
pub fn make_random_convex_on(domain: &Rect, bound: f64, pieces: usize, seed: u64) -> Result<RandomConvex> {
    if pieces == 0 {
        return Err(param_err!("need at least one affine piece"));
    }
    if !(bound.is_finite() && bound > 0.0) {
        return Err(param_err!("bound must be positive, got {bound}"));
    }
    let d = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 1..=RANDOM_ATTEMPTS {
        let affine: Vec<Affine> = (0..pieces)
            .map(|_| {
                let anchor: Vec<f64> = (0..d)
                    .map(|i| rng.gen_range(domain.lo[i]..=domain.hi[i]))
                    .collect();
                let level = rng.gen_range(-0.5..=0.5) * bound;
                let coeffs: Vec<f64> = (0..d)
                    .map(|i| rng.gen_range(-1.0..=1.0) * 1.5 * bound / (d as f64 * domain.width(i)))
                    .collect();
                let intercept = level - coeffs.iter().zip(&anchor).map(|(a, z)| a * z).sum::<f64>();
                Affine::new(coeffs, intercept)
            })
            .collect();
        let function = if pieces == 1 {
            ConvexFunction::new(domain.clone(), Form::Affine(affine.into_iter().next().unwrap()))?
        } else {
            ConvexFunction::max_affine(domain.clone(), affine)?
        };
        let (grid_min, grid_max) = function.grid_range();
        if grid_max <= bound && grid_min >= -bound {
            return Ok(RandomConvex { function, seed, attempts: attempt, grid_min, grid_max });
        }
    }
    Err(param_err!(
        "no max-affine function with {pieces} pieces within bound {bound} after {RANDOM_ATTEMPTS} attempts"
    ))
}

/// Largest axis-parallel difference quotient between neighbouring vertices
/// of the `n^d` grid. A lower estimate of the true per-axis constants.
pub fn coordinate_lipschitz_estimate(f: &ConvexFunction, n: usize) -> Result<LipschitzVector> {
    let rect = f.domain();
    let grid = TensorGrid::new(rect, GridSpec::trapezoid(n))?;
    let values = grid.sample(|x| f.value_at(x));
    let d = rect.dim();
    let nodes: Vec<&[f64]> = (0..d).map(|i| grid.axis_nodes(i)).collect();
    let mut strides = vec![1usize; d];
    for axis in (0..d.saturating_sub(1)).rev() {
        strides[axis] = strides[axis + 1] * n;
    }
    let mut slopes = vec![0.0f64; d];
    for (flat, &v) in values.iter().enumerate() {
        for axis in 0..d {
            let digit = (flat / strides[axis]) % n;
            if digit + 1 < n {
                let h = nodes[axis][digit + 1] - nodes[axis][digit];
                let q = (values[flat + strides[axis]] - v).abs() / h;
                slopes[axis] = slopes[axis].max(q);
            }
        }
    }
    LipschitzVector::from_slopes(&slopes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn unit(d: usize) -> Rect {
        Rect::unit(d).unwrap()
    }

    fn f0(d: usize) -> ConvexFunction {
        ConvexFunction::separable_quadratic(unit(d))
    }

    fn random_point(rng: &mut ChaCha8Rng, r: &Rect) -> Vec<f64> {
        (0..r.dim()).map(|i| rng.gen_range(r.lo()[i]..=r.hi()[i])).collect()
    }

    fn sample_functions() -> Vec<ConvexFunction> {
        let r2 = unit(2);
        let mut out = vec![
            f0(2),
            ConvexFunction::hinge(r2.clone(), 0.3, 1).unwrap(),
            ConvexFunction::affine(r2.clone(), vec![0.2, -0.3], 0.1).unwrap(),
            make_random_convex(2, 1.0, 5, 7).unwrap().function,
        ];
        let mw = ConvexFunction::max_with(vec![out[0].clone(), out[1].clone(), out[3].clone()]).unwrap();
        out.push(mw);
        let base = make_random_convex_on(&Rect::cube(-1.0, 3.0, 2).unwrap(), 2.0, 4, 3).unwrap().function;
        out.push(rescale_to_unit(&base, 2.0).unwrap());
        out
    }

    #[test]
    fn rect_rejects_bad_bounds() {
        assert!(Rect::new(vec![0.0], vec![0.0]).is_err());
        assert!(Rect::new(vec![1.0], vec![0.0]).is_err());
        assert!(Rect::new(vec![], vec![]).is_err());
        assert!(Rect::unit(9).is_err());
        assert!(Rect::unit(8).is_ok());
        assert!(Rect::new(vec![0.0, 0.0], vec![1.0]).is_err());
    }

    #[test]
    fn eval_examples() {
        assert_eq!(f0(2).eval(&[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(f0(1).eval(&[0.5]).unwrap(), 0.25);
        let h = ConvexFunction::hinge(unit(1), 1.0, 0).unwrap();
        assert_eq!(h.eval(&[0.5]).unwrap(), 0.5);
    }

    #[test]
    fn eval_outside_domain_is_domain_error() {
        assert!(matches!(f0(1).eval(&[1.5]), Err(Error::Domain(_))));
        assert!(matches!(f0(2).eval(&[0.5]), Err(Error::Domain(_))));
    }

    #[test]
    fn subgradient_examples() {
        assert!((f0(1).subgradient(&[0.3]).unwrap()[0] - 0.6).abs() < 1e-15);
        let a = ConvexFunction::affine(unit(1), vec![0.2], 0.0).unwrap();
        assert_eq!(a.subgradient(&[0.7]).unwrap(), vec![0.2]);
        let h = ConvexFunction::hinge(unit(1), 0.5, 0).unwrap();
        assert_eq!(h.subgradient(&[0.25]).unwrap(), vec![-2.0]);
        assert!(matches!(f0(1).subgradient(&[0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn subgradient_ties_pick_lowest_index() {
        let f = ConvexFunction::max_affine(
            unit(1),
            vec![Affine::new(vec![-1.0], 1.0), Affine::new(vec![1.0], 0.0)],
        )
        .unwrap();
        assert_eq!(f.subgradient(&[0.5]).unwrap(), vec![-1.0]);
        let h = ConvexFunction::hinge(unit(1), 0.5, 0).unwrap();
        assert_eq!(h.subgradient(&[0.5]).unwrap(), vec![0.0]);
    }

    #[test]
    fn rescale_examples() {
        let two = Rect::cube(0.0, 2.0, 1).unwrap();
        let sq = ConvexFunction::separable_quadratic(two.clone());
        let t = rescale_to_unit(&sq, 4.0).unwrap();
        // (2x)^2 / 4 = x^2
        assert!((t.eval(&[0.5]).unwrap() - 0.25).abs() < 1e-15);
        let lin = ConvexFunction::affine(two, vec![1.0], 0.0).unwrap();
        let t = rescale_to_unit(&lin, 2.0).unwrap();
        assert!((t.eval(&[0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(rescale_to_unit(&lin, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(rescale_to_unit(&lin, 1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn rescale_identity_is_unchanged() {
        let f = make_random_convex(2, 1.0, 3, 11).unwrap().function;
        let t = rescale_to_unit(&f, 1.0).unwrap();
        assert_eq!(t, f);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            let x = random_point(&mut rng, f.domain());
            assert_eq!(t.eval(&x).unwrap(), f.eval(&x).unwrap());
        }
    }

    #[test]
    fn rescaled_subgradient_follows_chain_rule() {
        let base = ConvexFunction::affine(Rect::cube(0.0, 2.0, 1).unwrap(), vec![3.0], 1.0).unwrap();
        let t = rescale_to_unit(&base, 7.0).unwrap();
        assert!((t.subgradient(&[0.4]).unwrap()[0] - 6.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn random_convex_examples() {
        let r = make_random_convex(1, 1.0, 1, 0).unwrap();
        assert!(matches!(r.function.form(), Form::Affine(_)));
        assert!(r.grid_max <= 1.0 && r.grid_min >= -1.0);
        assert_eq!(make_random_convex(2, 1.0, 5, 7).unwrap(), make_random_convex(2, 1.0, 5, 7).unwrap());
        assert!(make_random_convex(2, 1.0, 0, 7).is_err());
        assert!(make_random_convex(2, -1.0, 3, 7).is_err());
    }

    #[test]
    fn random_convex_is_midpoint_convex() {
        let f = make_random_convex(2, 1.0, 5, 7).unwrap().function;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let x = random_point(&mut rng, f.domain());
            let y = random_point(&mut rng, f.domain());
            let m: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
            let lhs = f.eval(&m).unwrap();
            let rhs = 0.5 * (f.eval(&x).unwrap() + f.eval(&y).unwrap());
            assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn convexity_and_subgradient_inequality_on_all_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for f in sample_functions() {
            for _ in 0..1000 {
                let x = random_point(&mut rng, f.domain());
                let y = random_point(&mut rng, f.domain());
                let m: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
                let (fx, fy) = (f.value_at(&x), f.value_at(&y));
                assert!(f.value_at(&m) <= 0.5 * (fx + fy) + 1e-12, "{f:?}");
                if f.domain().contains_interior(&x) {
                    let g = f.subgradient(&x).unwrap();
                    let lin: f64 = g.iter().zip(y.iter().zip(&x)).map(|(g, (a, b))| g * (a - b)).sum();
                    assert!(fy >= fx + lin - 1e-12, "{f:?}");
                }
            }
        }
    }

    #[test]
    fn lipschitz_estimate_examples() {
        let a = ConvexFunction::affine(unit(2), vec![0.2, -0.3], 0.0).unwrap();
        for n in [2, 5, 33] {
            let g = coordinate_lipschitz_estimate(&a, n).unwrap();
            assert!((g.values()[0] - 0.2).abs() < 1e-12);
            assert!((g.values()[1] - 0.3).abs() < 1e-12);
        }
        let g = coordinate_lipschitz_estimate(&f0(1), 101).unwrap();
        assert!((g.values()[0] - 2.0).abs() < 0.05);
        let v = ConvexFunction::max_affine(
            unit(1),
            vec![Affine::new(vec![1.0], -0.5), Affine::new(vec![-1.0], 0.5)],
        )
        .unwrap();
        for n in [3, 4, 10] {
            let g = coordinate_lipschitz_estimate(&v, n).unwrap();
            assert!((g.values()[0] - 1.0).abs() < 1e-12);
        }
        assert!(coordinate_lipschitz_estimate(&v, 1).is_err());
    }

    #[test]
    fn slope_bounds_dominate_estimates() {
        for f in sample_functions() {
            let est = coordinate_lipschitz_estimate(&f, 41).unwrap();
            for (e, b) in est.values().iter().zip(f.axis_slope_bounds()) {
                assert!(*e <= b + 1e-9, "{f:?}: {e} > {b}");
            }
        }
    }

    #[test]
    fn lipschitz_vector_validation() {
        assert!(LipschitzVector::new(vec![1.0, f64::INFINITY]).is_ok());
        assert!(LipschitzVector::new(vec![0.0]).is_err());
        assert!(LipschitzVector::new(vec![f64::NAN]).is_err());
        let g = LipschitzVector::new(vec![1.0, f64::INFINITY, 2.0]).unwrap();
        assert_eq!(g.finite_sum(), 3.0);
        assert!(!g.all_finite());
    }

    #[test]
    fn json_round_trip_is_exact() {
        for f in sample_functions() {
            let text = serde_json::to_string(&f).unwrap();
            let back: ConvexFunction = serde_json::from_str(&text).unwrap();
            assert_eq!(back, f);
        }
        let text = serde_json::to_string(&f0(1)).unwrap();
        assert_eq!(
            text,
            r#"{"domain":{"lo":["0.0"],"hi":["1.0"]},"form":{"kind":"separable_quadratic"}}"#
        );
    }

    #[test]
    fn json_validation_rejects_bad_forms() {
        let bad = [
            r#"{"domain":{"lo":["0.0"],"hi":["1.0"]},"form":{"kind":"hinge","alpha":"-1.0","axis":0}}"#,
            r#"{"domain":{"lo":["0.0"],"hi":["1.0"]},"form":{"kind":"max_affine","pieces":[]}}"#,
            r#"{"domain":{"lo":["1.0"],"hi":["0.0"]},"form":{"kind":"separable_quadratic"}}"#,
            r#"{"domain":{"lo":["0.0"],"hi":["1.0"]},"form":{"kind":"affine","coeffs":["1.0","2.0"],"intercept":"0.0"}}"#,
        ];
        for s in bad {
            assert!(serde_json::from_str::<ConvexFunction>(s).is_err(), "{s}");
        }
    }
}
