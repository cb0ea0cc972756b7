//! Distances between convex functions.
//!
//! `L_p` distances use tensor-product quadrature, `L_∞` is the maximum over
//! grid vertices (a lower bound on the true supremum), and the Hausdorff
//! distance between epigraphs `V_f(B) = {(x, t) : f(x) <= t <= B}` is the
//! largest gap between their support functions over a fixed direction set,
//! refined by a local search around the best directions.
//! Each report carries the change in value when the grid is refined from
//! `n` to `2n - 1` points per axis.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convex::{ConvexFunction, MAX_DIM};
use crate::error::{param_err, Result};
use crate::quadrature::{GridSpec, TensorGrid};

/// Seed for the quasi-uniform direction sets in dimension four and up.
pub const DIRECTION_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Metric {
    Lp { p: f64 },
    LinfGrid,
    HausdorffEpigraph { bound: f64, n_directions: usize },
}

/// A distance with its refinement error estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub metric: Metric,
    pub value: f64,
    pub error_estimate: f64,
    pub grid: GridSpec,
}

fn same_domain(f: &ConvexFunction, g: &ConvexFunction) -> Result<()> {
    if f.domain() != g.domain() {
        return Err(param_err!("functions live on different domains"));
    }
    Ok(())
}

fn lp_value(f: &ConvexFunction, g: &ConvexFunction, p: f64, grid: &TensorGrid) -> f64 {
    if p == 1.0 {
        grid.integrate(|x| (f.value_at(x) - g.value_at(x)).abs())
    } else {
        grid.integrate(|x| (f.value_at(x) - g.value_at(x)).abs().powf(p))
            .powf(1.0 / p)
    }
}

/// `‖f − g‖_p` over the common domain.
pub fn lp_distance(f: &ConvexFunction, g: &ConvexFunction, p: f64, grid: GridSpec) -> Result<DistanceReport> {
    same_domain(f, g)?;
    if !(p.is_finite() && p >= 1.0) {
        return Err(param_err!("need 1 <= p < inf, got {p}"));
    }
    let coarse = TensorGrid::new(f.domain(), grid)?;
    let fine = TensorGrid::new(f.domain(), grid.refined())?;
    let value = lp_value(f, g, p, &coarse);
    let refined = lp_value(f, g, p, &fine);
    Ok(DistanceReport {
        metric: Metric::Lp { p },
        value,
        error_estimate: (value - refined).abs(),
        grid,
    })
}

/// Largest `|f − g|` over the `n^d` vertex grid. Never exceeds the true
/// supremum.
pub fn linf_grid_distance(f: &ConvexFunction, g: &ConvexFunction, grid: GridSpec) -> Result<DistanceReport> {
    same_domain(f, g)?;
    let vertices = GridSpec::trapezoid(grid.n);
    let gap = |spec: GridSpec| -> Result<f64> {
        let t = TensorGrid::new(f.domain(), spec)?;
        Ok(t.max_of(|x| (f.value_at(x) - g.value_at(x)).abs()))
    };
    let value = gap(vertices)?;
    let refined = gap(vertices.refined())?;
    Ok(DistanceReport {
        metric: Metric::LinfGrid,
        value,
        error_estimate: (refined - value).abs(),
        grid: vertices,
    })
}

/// A unit direction in `R^{d+1}` and the epigraph cap `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpigraphSupportQuery {
    direction: Vec<f64>,
    bound: f64,
}

impl EpigraphSupportQuery {
    pub fn new(direction: Vec<f64>, bound: f64) -> Result<Self> {
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(param_err!("direction has norm {norm}, expected 1"));
        }
        if !bound.is_finite() {
            return Err(param_err!("epigraph bound must be finite"));
        }
        Ok(EpigraphSupportQuery { direction, bound })
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }
}

/// Grid samples of a function, reused across many support queries.
#[derive(Debug, Clone)]
pub struct EpigraphSampler {
    dim: usize,
    points: Vec<f64>,
    values: Vec<f64>,
    bound: f64,
}

impl EpigraphSampler {
    /// Samples `f` on the `n^d` vertex grid of its domain.
    pub fn new(f: &ConvexFunction, bound: f64, n: usize) -> Result<Self> {
        let grid = TensorGrid::vertices(f.domain(), n)?;
        let (mut points, mut values) = (grid.points(), grid.sample(|x| f.value_at(x)));
        if f.dim() == 1 {
            (points, values) = lower_hull(&points, &values);
        } else {
            (points, values) = prune_axis_midpoints(&points, &values, n, f.dim());
        }
        Ok(EpigraphSampler { dim: f.dim(), points, values, bound })
    }

    /// `max_x ⟨u_x, x⟩ + u_t t*(x)` with `t* = B` when `u_t >= 0`, else `f(x)`.
    pub fn support(&self, direction: &[f64]) -> f64 {
        let d = self.dim;
        let (ux, ut) = (&direction[..d], direction[d]);
        let mut best = f64::NEG_INFINITY;
        for (x, &fx) in self.points.chunks_exact(d).zip(&self.values) {
            let t = if ut >= 0.0 { self.bound } else { fx };
            let s = ux.iter().zip(x).fold(ut * t, |acc, (u, v)| acc + u * v);
            best = best.max(s);
        }
        best
    }
}

/// Vertices of the lower convex hull of `(x_i, y_i)` with `x` increasing.
/// Every support query over the samples is attained at one of them.
fn lower_hull(xs: &[f64], ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut hx: Vec<f64> = Vec::new();
    let mut hy: Vec<f64> = Vec::new();
    for (&x, &y) in xs.iter().zip(ys) {
        while hx.len() >= 2 {
            let k = hx.len();
            let cross = (hx[k - 1] - hx[k - 2]) * (y - hy[k - 2]) - (hy[k - 1] - hy[k - 2]) * (x - hx[k - 2]);
            if cross > 0.0 {
                break;
            }
            hx.pop();
            hy.pop();
        }
        hx.push(x);
        hy.push(y);
    }
    (hx, hy)
}

/// Slack below which a grid value counts as on or above the chord of its
/// axis neighbours.
const CHORD_SLACK: f64 = 1e-12;

/// Drops grid points whose value is at least the average of their two
/// neighbours along some axis. A linear objective at such a point is at most
/// the better neighbour's (up to `CHORD_SLACK`), and a finite set has a point
/// that is no midpoint of two others, so every support query keeps its
/// maximum within that slack.
fn prune_axis_midpoints(points: &[f64], values: &[f64], n: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut keep_points = Vec::new();
    let mut keep_values = Vec::new();
    for (flat, &v) in values.iter().enumerate() {
        let mut stride = 1;
        let mut rem = flat;
        let mut removable = false;
        for _ in 0..d {
            let digit = rem % n;
            if digit > 0 && digit + 1 < n && 2.0 * v >= values[flat - stride] + values[flat + stride] - CHORD_SLACK {
                removable = true;
                break;
            }
            rem /= n;
            stride *= n;
        }
        if !removable {
            keep_points.extend_from_slice(&points[flat * d..(flat + 1) * d]);
            keep_values.push(v);
        }
    }
    (keep_points, keep_values)
}

/// Support function of `V_f(B)` in one direction, maximized over the
/// vertex grid of `grid.n` points per axis.
pub fn epigraph_support(f: &ConvexFunction, query: &EpigraphSupportQuery, grid: GridSpec) -> Result<f64> {
    if query.direction.len() != f.dim() + 1 {
        return Err(param_err!("direction must have {} components", f.dim() + 1));
    }
    Ok(EpigraphSampler::new(f, query.bound, grid.n)?.support(&query.direction))
}

/// Deterministic quasi-uniform unit vectors in `R^m`.
///
/// The `2m` signed coordinate axes come first. The rest are equally spaced
/// angles for `m = 2`, a Fibonacci lattice for `m = 3`, and a randomly
/// shifted Halton sequence pushed through Box–Muller for `m >= 4`.
pub fn direction_set(m: usize, count: usize) -> Result<Vec<Vec<f64>>> {
    if !(2..=MAX_DIM + 1).contains(&m) {
        return Err(param_err!("direction dimension {m} out of range"));
    }
    if count < 2 * m {
        return Err(param_err!("need at least {} directions in R^{m}, got {count}", 2 * m));
    }
    let mut dirs = Vec::with_capacity(count);
    for i in 0..m {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; m];
            e[i] = s;
            dirs.push(e);
        }
    }
    let extra = count - 2 * m;
    match m {
        2 => {
            for j in 0..extra {
                let theta = std::f64::consts::TAU * (j as f64 + 0.5) / extra as f64;
                dirs.push(vec![theta.cos(), theta.sin()]);
            }
        }
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            for j in 0..extra {
                let z = 1.0 - (2.0 * j as f64 + 1.0) / extra as f64;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let phi = golden * j as f64;
                dirs.push(vec![r * phi.cos(), r * phi.sin(), z]);
            }
        }
        _ => {
            const PRIMES: [u64; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];
            let pairs = m.div_ceil(2);
            let mut rng = ChaCha8Rng::seed_from_u64(DIRECTION_SEED);
            let shift: Vec<f64> = (0..2 * pairs).map(|_| rng.gen::<f64>()).collect();
            let mut j = 0u64;
            while dirs.len() < count {
                j += 1;
                let mut v = Vec::with_capacity(2 * pairs);
                for k in 0..pairs {
                    let u1 = (radical_inverse(j, PRIMES[2 * k]) + shift[2 * k]).fract();
                    let u2 = (radical_inverse(j, PRIMES[2 * k + 1]) + shift[2 * k + 1]).fract();
                    let r = (-2.0 * (1.0 - u1).ln()).sqrt();
                    let a = std::f64::consts::TAU * u2;
                    v.push(r * a.cos());
                    v.push(r * a.sin());
                }
                v.truncate(m);
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-9 {
                    dirs.push(v.into_iter().map(|x| x / norm).collect());
                }
            }
        }
    }
    Ok(dirs)
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut value, mut scale) = (0.0, inv);
    while i > 0 {
        value += (i % base) as f64 * scale;
        i /= base;
        scale *= inv;
    }
    value
}

/// Sampled directions that seed the local search.
const POLISH_STARTS: usize = 8;
const POLISH_ITERATIONS: usize = 80;

fn hausdorff_value(f: &EpigraphSampler, g: &EpigraphSampler, dirs: &[Vec<f64>]) -> f64 {
    let gap = |u: &[f64]| (f.support(u) - g.support(u)).abs();
    let mut scored: Vec<(f64, usize)> = dirs.par_iter().enumerate().map(|(i, u)| (gap(u), i)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let m = dirs[0].len();
    // Spacing of the direction set, as an angle.
    let spacing = (surface_fraction(m) / dirs.len() as f64).powf(1.0 / (m - 1) as f64);
    scored
        .par_iter()
        .take(POLISH_STARTS)
        .map(|&(value, i)| polish(&gap, &dirs[i], value, spacing))
        .reduce(|| 0.0, f64::max)
}

/// Area of the unit sphere in `R^m`, the normalization for direction spacing.
fn surface_fraction(m: usize) -> f64 {
    let half = m as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(half) / gamma_half_integer(m)
}

/// `Γ(m/2)` for positive integers `m`.
fn gamma_half_integer(m: usize) -> f64 {
    let (mut value, mut x) = if m.is_multiple_of(2) { (1.0, 1.0) } else { (std::f64::consts::PI.sqrt(), 0.5) };
    while x < m as f64 / 2.0 {
        value *= x;
        x += 1.0;
    }
    value
}

/// Pattern search for a larger gap on the sphere around `start`. Only
/// evaluates actual directions, so the result stays a lower bound.
fn polish(gap: &dyn Fn(&[f64]) -> f64, start: &[f64], start_value: f64, spacing: f64) -> f64 {
    let (mut u, mut best) = (start.to_vec(), start_value);
    let mut step = spacing;
    for _ in 0..POLISH_ITERATIONS {
        let basis = tangent_basis(&u);
        let mut moved = false;
        for e in &basis {
            for s in [step, -step] {
                let mut v: Vec<f64> = u.iter().zip(e).map(|(a, b)| a + s * b).collect();
                let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                v.iter_mut().for_each(|c| *c /= norm);
                let value = gap(&v);
                if value > best {
                    (u, best, moved) = (v, value, true);
                    break;
                }
            }
            if moved {
                break;
            }
        }
        if !moved {
            step /= 2.0;
            if step < 1e-10 {
                break;
            }
        }
    }
    best
}

/// Orthonormal basis of the complement of the unit vector `u`.
fn tangent_basis(u: &[f64]) -> Vec<Vec<f64>> {
    let m = u.len();
    let skip = (0..m).max_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs())).expect("nonempty");
    let mut basis: Vec<Vec<f64>> = vec![u.to_vec()];
    for i in (0..m).filter(|&i| i != skip) {
        let mut v = vec![0.0; m];
        v[i] = 1.0;
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        v.iter_mut().for_each(|c| *c /= norm);
        basis.push(v);
    }
    basis.remove(0);
    basis
}

/// `ℓ_H(V_f(B), V_g(B))` estimated from below as the largest support-function
/// gap over `n_directions` directions, with `x` maximized over the vertex grid.
/// The best few directions are then refined by a local search on the sphere.
/// The error estimate compares against `2n - 1` points and twice the directions.
pub fn hausdorff_epigraph(
    f: &ConvexFunction,
    g: &ConvexFunction,
    bound: f64,
    n_directions: usize,
    grid: GridSpec,
) -> Result<DistanceReport> {
    same_domain(f, g)?;
    let m = f.dim() + 1;
    if n_directions < 2 * m {
        return Err(param_err!("need at least {} directions, got {n_directions}", 2 * m));
    }
    let coarse = hausdorff_value(
        &EpigraphSampler::new(f, bound, grid.n)?,
        &EpigraphSampler::new(g, bound, grid.n)?,
        &direction_set(m, n_directions)?,
    );
    let fine_grid = grid.refined();
    let fine = hausdorff_value(
        &EpigraphSampler::new(f, bound, fine_grid.n)?,
        &EpigraphSampler::new(g, bound, fine_grid.n)?,
        &direction_set(m, 2 * n_directions)?,
    );
    Ok(DistanceReport {
        metric: Metric::HausdorffEpigraph { bound, n_directions },
        value: coarse,
        error_estimate: (fine - coarse).abs(),
        grid: GridSpec::trapezoid(grid.n),
    })
}

/// Distance under a metric descriptor (value only).
pub fn distance(f: &ConvexFunction, g: &ConvexFunction, metric: Metric, grid: GridSpec) -> Result<DistanceReport> {
    match metric {
        Metric::Lp { p } => lp_distance(f, g, p, grid),
        Metric::LinfGrid => linf_grid_distance(f, g, grid),
        Metric::HausdorffEpigraph { bound, n_directions } => hausdorff_epigraph(f, g, bound, n_directions, grid),
    }
}

/// Greedy packing: scans `family` in order and keeps each function whose
/// distance to every kept function is at least `eps`.
pub fn greedy_packing(family: &[ConvexFunction], eps: f64, metric: Metric, grid: GridSpec) -> Result<Vec<usize>> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(param_err!("packing radius must be positive, got {eps}"));
    }
    let mut kept: Vec<usize> = Vec::new();
    for (i, f) in family.iter().enumerate() {
        let mut far = true;
        for &j in &kept {
            if distance(f, &family[j], metric, grid)?.value < eps {
                far = false;
                break;
            }
        }
        if far {
            kept.push(i);
        }
    }
    Ok(kept)
}
