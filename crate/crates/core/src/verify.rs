//! Numerical checks of the inequalities relating `L_p`, `L_∞` and epigraph
//! Hausdorff distances, with self-describing reports.
//!
//! Every check is phrased as `lhs ≤ rhs + tolerance`. Equalities are encoded
//! as `|x − y| ≤ allowed`, i.e. `lhs = |x − y|`, `rhs = allowed`, tolerance 0.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::convex::{make_random_convex, rescale_to_unit, ConvexFunction, LipschitzVector, Rect};
use crate::error::{param_err, Result};
use crate::metrics::{hausdorff_epigraph, linf_grid_distance, lp_distance};
use crate::quadrature::{GridSpec, TensorGrid, MAX_GRID_POINTS};

/// Most refinement levels tried when verdicts disagree between levels.
pub const MAX_LEVELS: usize = 4;

/// Direction-sampling error is first order, so the distance to the limit from
/// the finer of two levels is bounded by this multiple of their difference.
pub const RICHARDSON_FACTOR: f64 = 2.0;

/// Corpus size for the randomized batches.
pub const CORPUS_SEEDS: u64 = 50;

/// Pieces per random corpus function.
pub const CORPUS_PIECES: usize = 5;

/// One resolution level of a refined check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelRecord {
    pub grid: usize,
    pub directions: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl LevelRecord {
    fn new(grid: usize, directions: usize, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        LevelRecord { grid, directions, lhs, rhs, tolerance, pass: lhs <= rhs + tolerance }
    }
}

/// `lhs ≤ rhs + tolerance`, with the inputs that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`.
    pub slack: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub inputs: Value,
    /// Resolution levels visited, coarsest first; empty for single-shot checks.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<LevelRecord>,
}

impl InequalityReport {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64, inputs: Value) -> Self {
        InequalityReport {
            name: name.into(),
            lhs,
            rhs,
            slack: rhs - lhs,
            tolerance,
            pass: lhs <= rhs + tolerance,
            inputs,
            levels: Vec::new(),
        }
    }

    /// `|x − y| ≤ allowed`.
    pub fn equality(name: impl Into<String>, x: f64, y: f64, allowed: f64, inputs: Value) -> Self {
        Self::new(name, (x - y).abs(), allowed, 0.0, inputs)
    }

    fn from_levels(name: impl Into<String>, levels: Vec<LevelRecord>, inputs: Value) -> Self {
        let last = levels.last().expect("at least one level").clone();
        let mut r = Self::new(name, last.lhs, last.rhs, last.tolerance, inputs);
        r.levels = levels;
        r
    }

    /// Recomputes the verdict from the stored numbers.
    pub fn recheck(&self) -> bool {
        self.lhs <= self.rhs + self.tolerance
    }

    pub fn with_prefix(mut self, prefix: &str) -> Self {
        self.name = format!("{prefix}/{}", self.name);
        self
    }
}

/// Evaluates `level(grid, directions)` at the starting resolution and one
/// refinement; keeps refining while consecutive verdicts disagree.
fn refine_until_stable<F>(d: usize, grid: usize, directions: usize, level: F) -> Result<Vec<LevelRecord>>
where
    F: Fn(usize, usize) -> Result<LevelRecord>,
{
    let mut levels = vec![level(grid, directions)?];
    let (mut n, mut dirs) = (grid, directions);
    loop {
        let next_n = 2 * n - 1;
        // The Hausdorff estimate also samples at 2n - 1 internally.
        let fits = (2 * next_n - 1)
            .checked_pow(d as u32)
            .is_some_and(|c| c <= MAX_GRID_POINTS);
        if levels.len() >= MAX_LEVELS || !fits {
            break;
        }
        let stable = levels.len() >= 2 && {
            let k = levels.len();
            levels[k - 1].pass == levels[k - 2].pass
        };
        if stable {
            break;
        }
        n = next_n;
        dirs *= 2;
        levels.push(level(n, dirs)?);
    }
    Ok(levels)
}

fn unit_domain(f: &ConvexFunction, g: &ConvexFunction) -> Result<usize> {
    if !f.domain().is_unit() || f.domain() != g.domain() {
        return Err(param_err!("both functions must live on the unit cube"));
    }
    Ok(f.dim())
}

/// `‖f − g‖_∞ ≤ ℓ_H(V_f(B), V_g(B)) sqrt(1 + Σ Γ_i^2)`.
///
/// The left side is a grid maximum and the Hausdorff estimate comes from
/// sampled directions; both approach the truth from below. The tolerance is
/// [`RICHARDSON_FACTOR`] times the Hausdorff refinement change, scaled.
pub fn check_infvf(
    f: &ConvexFunction,
    g: &ConvexFunction,
    bound: f64,
    gammas: &LipschitzVector,
    grid: GridSpec,
    n_directions: usize,
) -> Result<InequalityReport> {
    let d = unit_domain(f, g)?;
    if gammas.dim() != d {
        return Err(param_err!("need {d} Lipschitz constants, got {}", gammas.dim()));
    }
    let factor = (1.0 + gammas.sum_of_squares()).sqrt();
    let levels = refine_until_stable(d, grid.n, n_directions, |n, dirs| {
        let linf = linf_grid_distance(f, g, GridSpec::trapezoid(n))?;
        let haus = hausdorff_epigraph(f, g, bound, dirs, GridSpec::trapezoid(n))?;
        let tol = RICHARDSON_FACTOR * haus.error_estimate * factor + 1e-12;
        Ok(LevelRecord::new(n, dirs, linf.value, haus.value * factor, tol))
    })?;
    Ok(InequalityReport::from_levels(
        "infvf",
        levels,
        json!({ "bound": bound, "gammas": gammas.values(), "d": d }),
    ))
}

/// `‖f − g‖_1 ≤ (1 + 20d) ℓ_H(V_f(1), V_g(1))`.
pub fn check_lset(f: &ConvexFunction, g: &ConvexFunction, grid: GridSpec, n_directions: usize) -> Result<InequalityReport> {
    let d = unit_domain(f, g)?;
    let constant = 1.0 + 20.0 * d as f64;
    let levels = refine_until_stable(d, grid.n, n_directions, |n, dirs| {
        let l1 = lp_distance(f, g, 1.0, GridSpec::midpoint(n))?;
        let haus = hausdorff_epigraph(f, g, 1.0, dirs, GridSpec::trapezoid(n))?;
        let tol = l1.error_estimate + RICHARDSON_FACTOR * constant * haus.error_estimate + 1e-12;
        Ok(LevelRecord::new(n, dirs, l1.value, constant * haus.value, tol))
    })?;
    let last = levels.last().expect("levels");
    let ratio = if last.rhs > 0.0 { last.lhs / (last.rhs / constant) } else { 0.0 };
    Ok(InequalityReport::from_levels(
        "lset",
        levels,
        json!({ "d": d, "constant": constant, "l1_over_hausdorff": ratio }),
    ))
}

/// `|f(x) − g(x)| ≤ ρ (1 + |m_f(x)| + |m_g(x)|)` with `ρ` the Hausdorff distance.
pub fn check_pointwise_subgradient_bound(
    f: &ConvexFunction,
    g: &ConvexFunction,
    x: &[f64],
    bound: f64,
    hausdorff_value: f64,
) -> Result<InequalityReport> {
    let mf = f.subgradient(x)?;
    let mg = g.subgradient(x)?;
    let norm = |m: &[f64]| m.iter().map(|v| v * v).sum::<f64>().sqrt();
    let lhs = (f.eval(x)? - g.eval(x)?).abs();
    let rhs = hausdorff_value * (1.0 + norm(&mf) + norm(&mg));
    Ok(InequalityReport::new(
        "pwise",
        lhs,
        rhs,
        0.0,
        json!({ "x": x, "bound": bound, "rho": hausdorff_value }),
    ))
}

/// `∫_{[ρ,1−ρ]^d} |m_f| ≤ 8d`, and `∫_ρ^{1−ρ} |∂_i f| ≤ 4` along sampled axis lines.
///
/// Returns the integral report and the worst line report.
pub fn check_subgradient_integral(
    f: &ConvexFunction,
    rho: f64,
    grid: GridSpec,
    seed: u64,
) -> Result<(InequalityReport, InequalityReport)> {
    let d = f.dim();
    if !f.domain().is_unit() {
        return Err(param_err!("function must live on the unit cube"));
    }
    if !(rho > 0.0 && rho < 0.5) {
        return Err(param_err!("rho must lie in (0, 1/2), got {rho}"));
    }
    let inner = Rect::cube(rho, 1.0 - rho, d)?;
    let norm_at = |x: &[f64]| {
        let mut m = [0.0; crate::convex::MAX_DIM];
        f.subgradient_into(x, &mut m[..d]);
        m[..d].iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    let coarse = TensorGrid::new(&inner, grid)?.integrate(norm_at);
    let fine = TensorGrid::new(&inner, grid.refined())?.integrate(norm_at);
    let integral = InequalityReport::new(
        "subgradient_integral",
        coarse,
        8.0 * d as f64,
        (fine - coarse).abs(),
        json!({ "d": d, "rho": rho, "grid": grid.n }),
    );

    let line_points = grid.n.pow(d as u32).clamp(1001, 20001);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Option<InequalityReport> = None;
    let line = Rect::cube(rho, 1.0 - rho, 1)?;
    for axis in 0..d {
        for _ in 0..16 {
            let base: Vec<f64> = (0..d).map(|_| rng.gen_range(rho..1.0 - rho)).collect();
            let partial = |t: &[f64]| {
                let mut x = [0.0; crate::convex::MAX_DIM];
                x[..d].copy_from_slice(&base);
                x[axis] = t[0];
                let mut m = [0.0; crate::convex::MAX_DIM];
                f.subgradient_into(&x[..d], &mut m[..d]);
                m[axis].abs()
            };
            let v = TensorGrid::new(&line, GridSpec::midpoint(line_points))?.integrate(partial);
            let vf = TensorGrid::new(&line, GridSpec::midpoint(2 * line_points - 1))?.integrate(partial);
            let r = InequalityReport::new(
                "subgradient_line",
                v,
                4.0,
                (vf - v).abs(),
                json!({ "axis": axis, "base": base, "rho": rho }),
            );
            if worst.as_ref().is_none_or(|w| r.slack < w.slack) {
                worst = Some(r);
            }
        }
    }
    Ok((integral, worst.expect("at least one line")))
}

/// Closed forms for `f_α(x) = max(0, 1 − x/α)` against `g ≡ 0` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HingeCase {
    pub alpha: f64,
    pub p: f64,
    /// `α^{1/p} / (1+p)^{1/p}`.
    pub lp_closed: f64,
    /// `α / sqrt(1 + α^2)`.
    pub hausdorff_closed: f64,
    pub lp_numeric: f64,
    pub hausdorff_numeric: f64,
}

impl HingeCase {
    pub fn closed(alpha: f64, p: f64) -> Self {
        HingeCase {
            alpha,
            p,
            lp_closed: (alpha / (1.0 + p)).powf(1.0 / p),
            hausdorff_closed: alpha / (1.0 + alpha * alpha).sqrt(),
            lp_numeric: f64::NAN,
            hausdorff_numeric: f64::NAN,
        }
    }

    pub fn ratio_closed(&self) -> f64 {
        self.lp_closed / self.hausdorff_closed
    }

    pub fn ratio_numeric(&self) -> f64 {
        self.lp_numeric / self.hausdorff_numeric
    }
}

pub const HINGE_LP_TOLERANCE: f64 = 1e-4;
pub const HINGE_HAUSDORFF_TOLERANCE: f64 = 1e-3;

/// Numerical `L_p` and Hausdorff distances of the hinge from zero, compared
/// with their closed forms. `grid` is the midpoint `L_p` grid; the Hausdorff
/// vertex grid uses `grid.n` points as well.
pub fn hinge_case(alpha: f64, p: f64, grid: GridSpec, n_directions: usize) -> Result<(HingeCase, InequalityReport, InequalityReport)> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(param_err!("alpha must lie in (0, 1], got {alpha}"));
    }
    let unit = Rect::unit(1)?;
    let f = ConvexFunction::hinge(unit.clone(), alpha, 0)?;
    let zero = ConvexFunction::constant(unit, 0.0)?;
    let mut case = HingeCase::closed(alpha, p);
    case.lp_numeric = lp_distance(&f, &zero, p, grid)?.value;
    case.hausdorff_numeric = hausdorff_epigraph(&f, &zero, 1.0, n_directions, GridSpec::trapezoid(grid.n))?.value;
    let inputs = json!({ "alpha": alpha, "p": p, "grid": grid.n, "directions": n_directions });
    let lp = InequalityReport::equality("hinge_lp", case.lp_numeric, case.lp_closed, HINGE_LP_TOLERANCE, inputs.clone());
    let haus = InequalityReport::equality(
        "hinge_hausdorff",
        case.hausdorff_numeric,
        case.hausdorff_closed,
        HINGE_HAUSDORFF_TOLERANCE,
        inputs,
    );
    Ok((case, lp, haus))
}

/// Hinge cases over a decreasing `α` sequence, with whether the numeric
/// `L_p / ℓ_H` ratio increases along it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioTable {
    pub p: f64,
    pub rows: Vec<HingeCase>,
    pub monotone_increasing: bool,
}

pub fn hinge_ratio_table(alphas: &[f64], p: f64, grid: GridSpec, n_directions: usize) -> Result<RatioTable> {
    if alphas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(param_err!("alpha sequence must be strictly decreasing"));
    }
    let rows = alphas
        .iter()
        .map(|&a| hinge_case(a, p, grid, n_directions).map(|r| r.0))
        .collect::<Result<Vec<_>>>()?;
    let monotone_increasing = rows.windows(2).all(|w| w[1].ratio_numeric() > w[0].ratio_numeric());
    Ok(RatioTable { p, rows, monotone_increasing })
}

/// `f_j(t) = max(0, 1 − 2^j t)`, the hinge with `α = 2^{-j}`.
pub fn fj(j: u32) -> Result<ConvexFunction> {
    ConvexFunction::hinge(Rect::unit(1)?, (-(j as f64)).exp2(), 0)
}

/// `|f_j(2^{-k}) − f_k(2^{-k})| = 1 − 2^{j−k} ≥ 1/2`, evaluated exactly.
///
/// The right side is the smaller of the exact witness value and the grid
/// `L_∞` distance (which includes the witness point).
pub fn non_total_bounded_family(j: u32, k: u32, grid: GridSpec) -> Result<InequalityReport> {
    if !(1 <= j && j < k && k <= 40) {
        return Err(param_err!("need 1 <= j < k <= 40, got j = {j}, k = {k}"));
    }
    let pow2 = |e: i64| -> BigRational {
        let two = BigRational::from_integer(BigInt::from(2));
        num_traits::pow::Pow::pow(&two, e as i32)
    };
    let t = pow2(-(k as i64));
    let hinge_exact = |e: u32| {
        let v = BigRational::one() - pow2(e as i64) * &t;
        if v.is_negative() {
            BigRational::zero()
        } else {
            v
        }
    };
    let witness = (hinge_exact(j) - hinge_exact(k)).abs();
    let expected = BigRational::one() - pow2(j as i64 - k as i64);
    if witness != expected {
        return Err(crate::error::Error::Invariant(format!(
            "f_j(2^-k) - f_k(2^-k) = {witness}, expected {expected}"
        )));
    }
    let witness_f = witness.to_f64().expect("finite");
    let (fj_, fk_) = (fj(j)?, fj(k)?);
    let tf = (-(k as f64)).exp2();
    let at_point = (fj_.eval(&[tf])? - fk_.eval(&[tf])?).abs();
    let grid_linf = linf_grid_distance(&fj_, &fk_, grid)?.value.max(at_point);
    Ok(InequalityReport::new(
        "fj_family",
        0.5,
        witness_f.min(grid_linf),
        0.0,
        json!({ "j": j, "k": k, "witness": witness_f, "grid_linf": grid_linf, "grid": grid.n }),
    ))
}

/// `‖f̃ − g̃‖_{p,[0,1]^d} = ∏(b_i − a_i)^{−1/p} ‖f − g‖_{p}/B`, within the
/// combined refinement error.
pub fn check_scaling_identity(
    f: &ConvexFunction,
    g: &ConvexFunction,
    bound: f64,
    p: f64,
    grid: GridSpec,
) -> Result<InequalityReport> {
    if f.domain() != g.domain() {
        return Err(param_err!("functions live on different domains"));
    }
    let d = f.dim();
    let volume = f.domain().volume();
    let ft = rescale_to_unit(f, bound)?;
    let gt = rescale_to_unit(g, bound)?;
    let unit = lp_distance(&ft, &gt, p, grid)?;
    let raw = lp_distance(f, g, p, grid)?;
    let scale = volume.powf(-1.0 / p) / bound;
    let rhs = raw.value * scale;
    let allowed = unit.error_estimate + raw.error_estimate * scale + 1e-12;
    Ok(InequalityReport::equality(
        "scaling_identity",
        unit.value,
        rhs,
        allowed,
        json!({
            "d": d,
            "p": p,
            "bound": bound,
            "lo": f.domain().lo(),
            "hi": f.domain().hi(),
            "unit_value": unit.value,
            "scaled_value": rhs,
        }),
    ))
}

/// The `s`-th corpus pair: seeds `2s` and `2s + 1`, bound 1.
pub fn corpus_pair(d: usize, s: u64) -> Result<(ConvexFunction, ConvexFunction)> {
    Ok((
        make_random_convex(d, 1.0, CORPUS_PIECES, 2 * s)?.function,
        make_random_convex(d, 1.0, CORPUS_PIECES, 2 * s + 1)?.function,
    ))
}

/// Resolutions for the randomized batches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatchConfig {
    pub grid: usize,
    pub directions: usize,
    pub points_per_pair: usize,
    pub rho: f64,
}

impl BatchConfig {
    pub fn for_dim(d: usize) -> Self {
        match d {
            1 => BatchConfig { grid: 257, directions: 512, points_per_pair: 100, rho: 0.05 },
            2 => BatchConfig { grid: 33, directions: 1024, points_per_pair: 100, rho: 0.05 },
            _ => BatchConfig { grid: 9, directions: 512, points_per_pair: 100, rho: 0.05 },
        }
    }
}

/// Per-pair reports in seed order: sup-norm vs Hausdorff, L1 vs Hausdorff, the pointwise bound
/// (worst point), and the subgradient integral and line bounds for `f`.
pub fn corpus_batch(d: usize, seeds: std::ops::Range<u64>, config: &BatchConfig) -> Result<Vec<InequalityReport>> {
    let per_seed: Vec<Result<Vec<InequalityReport>>> = seeds
        .clone()
        .into_par_iter()
        .map(|s| {
            let prefix = format!("d{d}/seed{s}");
            let (f, g) = corpus_pair(d, s)?;
            let gammas = LipschitzVector::from_slopes(
                &f.axis_slope_bounds()
                    .iter()
                    .zip(g.axis_slope_bounds())
                    .map(|(a, b)| a.max(b))
                    .collect::<Vec<_>>(),
            )?;
            let grid = GridSpec::trapezoid(config.grid);
            let l3 = check_infvf(&f, &g, 1.0, &gammas, grid, config.directions)?;
            let l4 = check_lset(&f, &g, grid, config.directions)?;

            let haus = hausdorff_epigraph(&f, &g, 1.0, config.directions, grid)?;
            let rho = haus.value;
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let mut worst: Option<InequalityReport> = None;
            for _ in 0..config.points_per_pair {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(1e-6..1.0 - 1e-6)).collect();
                let r = check_pointwise_subgradient_bound(&f, &g, &x, 1.0, rho)?;
                if worst.as_ref().is_none_or(|w| r.slack < w.slack) {
                    worst = Some(r);
                }
            }
            let integral_grid = GridSpec::midpoint(if d == 1 { 4001 } else { 200 });
            let (si, sl) = check_subgradient_integral(&f, config.rho, integral_grid, s)?;
            Ok([l3, l4, worst.expect("points"), si, sl]
                .into_iter()
                .map(|r| r.with_prefix(&prefix))
                .collect())
        })
        .collect();
    let mut out = Vec::new();
    for r in per_seed {
        out.extend(r?);
    }
    Ok(out)
}

/// The sup-norm bound on an affine pair where it holds with equality.
pub fn affine_infvf_example() -> Result<InequalityReport> {
    let unit = Rect::unit(1)?;
    let f = ConvexFunction::affine(unit.clone(), vec![0.2], 0.0)?;
    let g = ConvexFunction::constant(unit, 0.0)?;
    check_infvf(&f, &g, 1.0, &LipschitzVector::new(vec![0.2])?, GridSpec::trapezoid(257), 4096)
}

/// Scaling-identity cases: the hand case `f = x, g = 0` on `[0, 2]`, `B = 3`,
/// and `count` random pairs on random cubes.
pub fn scaling_batch(count: u64) -> Result<Vec<InequalityReport>> {
    let mut out = Vec::new();
    let dom = Rect::cube(0.0, 2.0, 1)?;
    let f = ConvexFunction::affine(dom.clone(), vec![1.0], 0.0)?;
    let g = ConvexFunction::constant(dom, 0.0)?;
    out.push(check_scaling_identity(&f, &g, 3.0, 1.0, GridSpec::midpoint(2001))?.with_prefix("hand"));
    for s in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + s);
        let d = 1 + (s as usize % 2);
        let a = rng.gen_range(-2.0..2.0);
        let b = a + rng.gen_range(0.5..3.0);
        let bound = rng.gen_range(0.5..4.0);
        let p = if s % 3 == 0 { 1.0 } else { 2.0 };
        let dom = Rect::cube(a, b, d)?;
        let f = crate::convex::make_random_convex_on(&dom, bound, 4, 2 * s)?.function;
        let g = crate::convex::make_random_convex_on(&dom, bound, 4, 2 * s + 1)?.function;
        let grid = GridSpec::midpoint(if d == 1 { 2001 } else { 200 });
        out.push(check_scaling_identity(&f, &g, bound, p, grid)?.with_prefix(&format!("random{s}")));
    }
    Ok(out)
}

/// Settings for [`run_suite`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub seeds: u64,
    pub dims: Vec<usize>,
    pub hinge_alphas: Vec<f64>,
    pub hinge_ps: Vec<f64>,
    pub hinge_grid: usize,
    pub hinge_directions: usize,
    pub fj_max_k: u32,
    pub scaling_cases: u64,
    /// Overrides [`BatchConfig::for_dim`] grid and direction counts.
    pub corpus_grid: Option<usize>,
    pub corpus_directions: Option<usize>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seeds: CORPUS_SEEDS,
            dims: vec![1, 2],
            hinge_alphas: vec![1.0, 0.25, 0.01],
            hinge_ps: vec![1.0, 2.0],
            hinge_grid: 20001,
            hinge_directions: 10_000,
            fj_max_k: 10,
            scaling_cases: 20,
            corpus_grid: None,
            corpus_directions: None,
        }
    }
}

impl SuiteConfig {
    pub fn batch_config(&self, d: usize) -> BatchConfig {
        let mut c = BatchConfig::for_dim(d);
        if let Some(n) = self.corpus_grid {
            c.grid = n;
        }
        if let Some(m) = self.corpus_directions {
            c.directions = m;
        }
        c
    }
}

/// Default grid for the `f_j` checks: contains `2^{-k}` whenever that fits.
pub fn fj_grid(k: u32) -> GridSpec {
    if k <= 20 {
        GridSpec::trapezoid((1usize << k) + 1)
    } else {
        GridSpec::trapezoid(1025)
    }
}

/// Every check in a fixed order.
pub fn run_suite(config: &SuiteConfig) -> Result<Vec<InequalityReport>> {
    let mut out = Vec::new();
    out.push(affine_infvf_example()?.with_prefix("example"));
    for &d in &config.dims {
        out.extend(corpus_batch(d, 0..config.seeds, &config.batch_config(d))?);
    }
    for &p in &config.hinge_ps {
        for &alpha in &config.hinge_alphas {
            let (_, lp, haus) = hinge_case(alpha, p, GridSpec::midpoint(config.hinge_grid), config.hinge_directions)?;
            let prefix = format!("alpha{alpha}/p{p}");
            out.push(lp.with_prefix(&prefix));
            out.push(haus.with_prefix(&prefix));
        }
    }
    for k in 2..=config.fj_max_k {
        for j in 1..k {
            out.push(non_total_bounded_family(j, k, fj_grid(k))?.with_prefix(&format!("j{j}/k{k}")));
        }
    }
    out.extend(scaling_batch(config.scaling_cases)?);
    Ok(out)
}

pub fn reports_jsonl(reports: &[InequalityReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&serde_json::to_string(r).expect("reports serialize"));
        out.push('\n');
    }
    out
}

pub fn reports_csv(reports: &[InequalityReport]) -> String {
    let mut out = String::from("name,lhs,rhs,slack,pass\n");
    for r in reports {
        out.push_str(&format!("{},{:e},{:e},{:e},{}\n", r.name, r.lhs, r.rhs, r.slack, r.pass));
    }
    out
}

/// Largest `‖f − g‖_1 / ℓ_H` over `lset` reports.
pub fn max_lset_ratio(reports: &[InequalityReport]) -> Option<f64> {
    reports
        .iter()
        .filter(|r| r.name.ends_with("/lset"))
        .filter_map(|r| r.inputs.get("l1_over_hausdorff").and_then(Value::as_f64))
        .reduce(f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(d: usize) -> Rect {
        Rect::unit(d).unwrap()
    }

    #[test]
    fn identical_functions_pass_everything() {
        let f = make_random_convex(2, 1.0, 4, 3).unwrap().function;
        let g = LipschitzVector::new(vec![1.0, 1.0]).unwrap();
        let r = check_infvf(&f, &f, 1.0, &g, GridSpec::trapezoid(9), 64).unwrap();
        assert!(r.pass && r.lhs == 0.0 && r.rhs == 0.0);
        assert!(check_lset(&f, &f, GridSpec::trapezoid(9), 64).unwrap().pass);
        let p = check_pointwise_subgradient_bound(&f, &f, &[0.3, 0.4], 1.0, 0.0).unwrap();
        assert!(p.pass && p.lhs == 0.0);
    }

    #[test]
    fn affine_infvf_is_tight() {
        let r = affine_infvf_example().unwrap();
        assert!(r.pass, "{r:?}");
        assert!((r.lhs - 0.2).abs() < 1e-15);
        assert!((r.rhs - 0.2).abs() < 1e-3);
    }

    #[test]
    fn hinge_lset_ratio() {
        let f = ConvexFunction::hinge(unit(1), 0.5, 0).unwrap();
        let z = ConvexFunction::constant(unit(1), 0.0).unwrap();
        let r = check_lset(&f, &z, GridSpec::trapezoid(1025), 2048).unwrap();
        assert!(r.pass);
        let ratio = r.lhs / r.rhs;
        let closed = (1.0f64 + 0.25).sqrt() / 42.0;
        assert!((ratio - closed).abs() < 1e-3, "{ratio} vs {closed}");
    }

    #[test]
    fn pointwise_hinge_example() {
        let f = ConvexFunction::hinge(unit(1), 1.0, 0).unwrap();
        let z = ConvexFunction::constant(unit(1), 0.0).unwrap();
        let r = check_pointwise_subgradient_bound(&f, &z, &[0.5], 1.0, 0.5f64.sqrt()).unwrap();
        assert!(r.pass);
        assert!((r.lhs - 0.5).abs() < 1e-15);
        assert!((r.rhs - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn subgradient_integral_examples() {
        let f = ConvexFunction::affine(unit(1), vec![2.0], -1.0).unwrap();
        let (i, l) = check_subgradient_integral(&f, 0.1, GridSpec::midpoint(101), 0).unwrap();
        assert!((i.lhs - 1.6).abs() < 1e-12);
        assert!(i.pass && l.pass);
        let f0 = ConvexFunction::separable_quadratic(unit(2));
        let (i, l) = check_subgradient_integral(&f0, 0.1, GridSpec::midpoint(200), 0).unwrap();
        assert!(i.pass && i.lhs < 16.0);
        assert!(l.pass);
    }

    #[test]
    fn hinge_closed_forms() {
        let (c, lp, h) = hinge_case(1.0, 1.0, GridSpec::midpoint(20001), 10_000).unwrap();
        assert_eq!(c.lp_closed, 0.5);
        assert!((c.hausdorff_closed - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(lp.pass && h.pass, "{lp:?} {h:?}");
        let c = HingeCase::closed(0.01, 2.0);
        assert!((c.lp_closed - 0.057735).abs() < 1e-6);
        assert!((c.hausdorff_closed - 0.0099995).abs() < 1e-7);
        assert!((c.ratio_closed() - 5.7738).abs() < 1e-3);
    }

    #[test]
    fn fj_examples() {
        let r = non_total_bounded_family(1, 2, fj_grid(2)).unwrap();
        assert!(r.pass && r.rhs == 0.5 && r.slack == 0.0);
        let r = non_total_bounded_family(1, 10, fj_grid(10)).unwrap();
        assert!((r.rhs - (1.0 - 2f64.powi(-9))).abs() < 1e-15);
        let r = non_total_bounded_family(3, 4, fj_grid(4)).unwrap();
        assert_eq!(r.rhs, 0.5);
        let r = non_total_bounded_family(1, 3, fj_grid(3)).unwrap();
        assert_eq!(r.rhs, 0.75);
        assert!(non_total_bounded_family(3, 3, fj_grid(3)).is_err());
        let r = non_total_bounded_family(5, 40, fj_grid(40)).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn scaling_examples() {
        let reports = scaling_batch(3).unwrap();
        let hand = &reports[0];
        assert!(hand.pass);
        assert!((hand.inputs["unit_value"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-8);
        assert!(reports.iter().all(|r| r.pass && r.lhs < 1e-6));
        let f = make_random_convex(2, 1.0, 3, 1).unwrap().function;
        let g = make_random_convex(2, 1.0, 3, 2).unwrap().function;
        let r = check_scaling_identity(&f, &g, 1.0, 2.0, GridSpec::midpoint(50)).unwrap();
        assert_eq!(r.lhs, 0.0);
    }

    #[test]
    fn reports_are_self_verifying() {
        let reports = corpus_batch(1, 0..3, &BatchConfig::for_dim(1)).unwrap();
        assert_eq!(reports.len(), 15);
        for r in &reports {
            assert_eq!(r.pass, r.recheck());
            assert!(r.pass, "{r:?}");
        }
        let csv = reports_csv(&reports);
        assert_eq!(csv.lines().count(), 16);
        assert_eq!(reports_jsonl(&reports).lines().count(), 15);
    }

    #[test]
    fn refinement_continues_while_verdicts_flip() {
        let flips = |n: usize, _| Ok(LevelRecord::new(n, 0, if n == 5 || n == 17 { 1.0 } else { 0.0 }, 0.5, 0.0));
        let levels = refine_until_stable(1, 3, 8, flips).unwrap();
        assert_eq!(levels.iter().map(|l| l.grid).collect::<Vec<_>>(), vec![3, 5, 9, 17]);
        let steady = |n: usize, _| Ok(LevelRecord::new(n, 0, 0.0, 1.0, 0.0));
        assert_eq!(refine_until_stable(1, 3, 8, steady).unwrap().len(), 2);
    }
}
