//! Explicit L1 packings of bounded convex functions on the unit cube.
//!
//! The unit cube is tiled (with gaps) by `k^d` small cubes `S`. On each cube an
//! affine bump `h_S` lies above the quadratic `f0(x) = |x|^2 / d`, and below it
//! on every other cube. A binary word `θ` switches bumps on, and
//! `g_θ = max(max_{θ(S)=1} h_S, f0)`. Words far apart in Hamming distance give
//! functions far apart in L1.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::convex::{f64_vec_str, Affine, ConvexFunction, Rect, MAX_DIM};
use crate::error::{param_err, Error, Result};
use crate::logspace::CompensatedSum;
use crate::quadrature::{GridSpec, TensorGrid};
use crate::rational::Rational;

/// `∫_{[0,1]^d} (1/d) Σ y_j (1 - y_j) dy`, the same for every `d`.
pub const GAMMA_D: f64 = 1.0 / 6.0;

/// Default cap on `k^d`, the number of cells and the code length.
pub const MAX_CELLS: usize = 64;

/// Default number of random draws for the greedy code search.
pub const VG_BUDGET: usize = 1_000_000;

/// Slack allowed below the guaranteed pairwise separation in the certificate.
pub const CERTIFICATE_TOLERANCE: f64 = 1e-6;

/// `(2 + sqrt(d-1))`, the cell pitch in units of `sqrt(η)` per two cells.
fn pitch(d: usize) -> f64 {
    2.0 + ((d - 1) as f64).sqrt()
}

/// Whether `k (2 + sqrt(d-1)) sqrt(η) ≤ 2`, decided exactly.
///
/// Squared: `k²η(d+3) + 4k²η·sqrt(d-1) ≤ 4`.
fn fits(k: u64, eta: &BigRational, d: usize) -> bool {
    let k2 = BigRational::from_integer(BigInt::from(k) * BigInt::from(k));
    let k2eta = k2 * eta;
    let four = BigRational::from_integer(BigInt::from(4));
    let slack = &four - &k2eta * BigRational::from_integer(BigInt::from(d as u64 + 3));
    if slack.is_negative() {
        return false;
    }
    if d == 1 {
        return true;
    }
    // (4k²η)^2 (d-1) ≤ slack^2
    let lhs = (&four * &k2eta) * (&four * &k2eta) * BigRational::from_integer(BigInt::from(d as u64 - 1));
    lhs <= &slack * &slack
}

/// Largest admissible `η` for dimension `d`: `4 / (2 + sqrt(d-1))^2`, as a float.
pub fn eta_upper_limit(d: usize) -> f64 {
    4.0 / (pitch(d) * pitch(d))
}

/// The integer `k` with `k ≤ 2η^{-1/2}/(2+sqrt(d-1)) < k+1`, computed exactly.
pub fn cell_count_per_axis(eta: &Rational, d: usize) -> Result<u64> {
    check_dim(d)?;
    if !eta.is_positive() {
        return Err(param_err!("eta must be positive, got {eta}"));
    }
    let e = eta.inner();
    if !fits(1, e, d) {
        return Err(param_err!(
            "eta = {eta} exceeds the limit 4/(2+sqrt({}))^2 ≈ {:.6} for d = {d}",
            d - 1,
            eta_upper_limit(d)
        ));
    }
    let approx = 2.0 / (pitch(d) * eta.to_f64().sqrt());
    let mut k = if approx.is_finite() && approx >= 1.0 {
        (approx.floor() as u64).max(1)
    } else {
        1
    };
    if approx > 1e15 {
        return Err(param_err!("eta = {eta} is too small"));
    }
    while k > 1 && !fits(k, e, d) {
        k -= 1;
    }
    while fits(k + 1, e, d) {
        k += 1;
    }
    Ok(k)
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 || d > MAX_DIM {
        return Err(param_err!("dimension must be in 1..={MAX_DIM}, got {d}"));
    }
    Ok(())
}

/// `k` intervals `[u_i, v_i]` of length `sqrt(η)` separated by gaps
/// `sqrt(η(d-1))/2`, starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSystem {
    pub eta: Rational,
    pub d: usize,
    pub k: usize,
    #[serde(with = "crate::convex::f64_str")]
    pub side: f64,
    #[serde(with = "crate::convex::f64_str")]
    pub gap: f64,
    #[serde(with = "f64_vec_str")]
    pub u: Vec<f64>,
    #[serde(with = "f64_vec_str")]
    pub v: Vec<f64>,
}

pub fn build_interval_system(eta: &Rational, d: usize) -> Result<IntervalSystem> {
    let k = cell_count_per_axis(eta, d)?;
    let k = usize::try_from(k).map_err(|_| param_err!("k = {k} does not fit in memory"))?;
    if k > 1 << 24 {
        return Err(param_err!("eta = {eta} gives k = {k}, too many intervals"));
    }
    let eta_f = eta.to_f64();
    let side = eta_f.sqrt();
    let gap = (eta_f * (d - 1) as f64).sqrt() / 2.0;
    let mut u = Vec::with_capacity(k);
    let mut v = Vec::with_capacity(k);
    let mut start = 0.0f64;
    for _ in 0..k {
        u.push(start);
        let end = start + side;
        v.push(end);
        start = end + gap;
    }
    let last = v[k - 1];
    if last > 1.0 {
        // The exact span is at most 1; accumulated rounding may overshoot by a few ulps.
        if last - 1.0 > 8.0 * f64::EPSILON {
            return Err(Error::Invariant(format!(
                "interval span {last} exceeds 1 for eta = {eta}, d = {d}"
            )));
        }
        v[k - 1] = 1.0;
    }
    Ok(IntervalSystem { eta: eta.clone(), d, k, side, gap, u, v })
}

impl IntervalSystem {
    pub fn cells(&self) -> usize {
        self.k.pow(self.d as u32)
    }

    /// `k(sqrt η) + (k-1)·gap`, the extent of the interval system.
    pub fn span(&self) -> f64 {
        self.v[self.k - 1] - self.u[0]
    }

    pub fn cell(&self, flat: usize) -> Result<CellIndex> {
        CellIndex::from_flat(flat, self.k, self.d)
    }

    pub fn cell_rect(&self, cell: &CellIndex) -> Result<Rect> {
        let lo = cell.idx.iter().map(|&i| self.u[i]).collect();
        let hi = cell.idx.iter().map(|&i| self.v[i]).collect();
        Rect::new(lo, hi)
    }

    /// The cell containing `x`, if any (closed cells; the lowest index wins on shared faces).
    pub fn locate(&self, x: &[f64]) -> Option<CellIndex> {
        let mut idx = Vec::with_capacity(self.d);
        for &xi in x {
            let i = self.u.partition_point(|&u| u <= xi);
            if i == 0 {
                return None;
            }
            let i = if i >= 2 && self.v[i - 2] >= xi { i - 2 } else { i - 1 };
            if xi > self.v[i] {
                return None;
            }
            idx.push(i);
        }
        Some(CellIndex { idx })
    }
}

/// A cube `S = I(i_1) × … × I(i_d)`; indices are zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub idx: Vec<usize>,
}

impl CellIndex {
    pub fn new(idx: Vec<usize>, k: usize) -> Result<Self> {
        if idx.iter().any(|&i| i >= k) {
            return Err(param_err!("cell index {idx:?} out of range for k = {k}"));
        }
        Ok(CellIndex { idx })
    }

    /// Lexicographic position, first axis most significant.
    pub fn flat(&self, k: usize) -> usize {
        self.idx.iter().fold(0, |acc, &i| acc * k + i)
    }

    pub fn from_flat(flat: usize, k: usize, d: usize) -> Result<Self> {
        let mut rem = flat;
        let mut idx = vec![0; d];
        for slot in idx.iter_mut().rev() {
            *slot = rem % k;
            rem /= k;
        }
        if rem != 0 {
            return Err(param_err!("cell {flat} out of range for k = {k}, d = {d}"));
        }
        Ok(CellIndex { idx })
    }
}

/// The affine bump `h_S(x) = (1/d) Σ_j [u_j^2 + (v_j + u_j)(x_j - u_j)]`.
pub fn perturbation_hs(system: &IntervalSystem, cell: &CellIndex) -> Result<ConvexFunction> {
    let piece = hs_piece(system, cell)?;
    ConvexFunction::new(Rect::unit(system.d)?, crate::convex::Form::Affine(piece))
}

fn hs_piece(system: &IntervalSystem, cell: &CellIndex) -> Result<Affine> {
    let d = system.d;
    if cell.idx.len() != d || cell.idx.iter().any(|&i| i >= system.k) {
        return Err(param_err!("cell {:?} invalid for k = {}, d = {d}", cell.idx, system.k));
    }
    let df = d as f64;
    let mut coeffs = Vec::with_capacity(d);
    let mut intercept = CompensatedSum::new();
    for &i in &cell.idx {
        let (u, v) = (system.u[i], system.v[i]);
        coeffs.push((u + v) / df);
        intercept.add(-(u * v) / df);
    }
    Ok(Affine::new(coeffs, intercept.value()))
}

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// `d · h_S(x)` from the defining sum, in exact arithmetic.
fn hs_exact_times_d(system: &IntervalSystem, cell: &CellIndex, x: &[BigRational]) -> BigRational {
    let mut acc = BigRational::zero();
    for (&i, xi) in cell.idx.iter().zip(x) {
        let u = exact(system.u[i]);
        let v = exact(system.v[i]);
        acc += &u * &u + (&v + &u) * (xi - &u);
    }
    acc
}

fn f0_exact_times_d(x: &[BigRational]) -> BigRational {
    x.iter().fold(BigRational::zero(), |acc, xi| acc + xi * xi)
}

fn affine_exact(piece: &Affine, x: &[BigRational]) -> BigRational {
    piece
        .coeffs
        .iter()
        .zip(x)
        .fold(exact(piece.intercept), |acc, (&a, xi)| acc + exact(a) * xi)
}

/// Violation counts from [`check_hs_properties`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsPropertyReport {
    pub samples: usize,
    /// Nonzero second differences of the stored affine piece.
    pub affinity_violations: usize,
    /// `h_S(x) > h_S(1,…,1)` or `h_S(1,…,1) > 1`.
    pub bound_violations: usize,
    /// `h_S < f0` at a point of `S`.
    pub own_cell_violations: usize,
    /// `h_S > f0` at a point of another cell.
    pub other_cell_violations: usize,
    /// Largest `|stored piece − defining formula|` seen, in float.
    pub max_representation_error: f64,
}

impl HsPropertyReport {
    pub fn violations(&self) -> usize {
        self.affinity_violations + self.bound_violations + self.own_cell_violations + self.other_cell_violations
    }
}

/// Checks the four bump properties at `samples` random points, comparing
/// exact rational values of the float inputs.
///
/// Points inside a cell snap to a face with probability 1/4 per axis, which is
/// where the own-cell and other-cell inequalities are tight.
pub fn check_hs_properties(system: &IntervalSystem, samples: usize, seed: u64) -> Result<HsPropertyReport> {
    let d = system.d;
    let k = system.k;
    let cells = system.cells();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ones = vec![BigRational::one(); d];
    let d_exact = BigRational::from_integer(BigInt::from(d as u64));
    let mut report = HsPropertyReport {
        samples,
        affinity_violations: 0,
        bound_violations: 0,
        own_cell_violations: 0,
        other_cell_violations: 0,
        max_representation_error: 0.0,
    };
    let point_in = |rng: &mut ChaCha8Rng, cell: &CellIndex| -> Vec<f64> {
        cell.idx
            .iter()
            .map(|&i| {
                let (u, v) = (system.u[i], system.v[i]);
                match rng.gen_range(0..8) {
                    0 => u,
                    1 => v,
                    _ => (u + (v - u) * rng.gen::<f64>()).clamp(u, v),
                }
            })
            .collect()
    };
    for _ in 0..samples {
        let cell = system.cell(rng.gen_range(0..cells))?;
        let piece = hs_piece(system, &cell)?;

        // Affinity: second differences of the stored piece vanish.
        let base: Vec<BigRational> = (0..d).map(|_| exact(rng.gen::<f64>())).collect();
        let step = exact(rng.gen_range(1e-3..0.5));
        let a = rng.gen_range(0..d);
        let b = rng.gen_range(0..d);
        let shifted = |axes: &[usize]| -> Vec<BigRational> {
            let mut y = base.clone();
            for &ax in axes {
                y[ax] += &step;
            }
            y
        };
        let second = affine_exact(&piece, &shifted(&[a, b])) - affine_exact(&piece, &shifted(&[a]))
            - affine_exact(&piece, &shifted(&[b]))
            + affine_exact(&piece, &base);
        if !second.is_zero() {
            report.affinity_violations += 1;
        }

        // Bound: h_S(x) ≤ h_S(1,…,1) ≤ d/d on the unit cube.
        let x: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
        let xe: Vec<BigRational> = x.iter().map(|&t| exact(t)).collect();
        let at_x = hs_exact_times_d(system, &cell, &xe);
        let at_one = hs_exact_times_d(system, &cell, &ones);
        if at_x > at_one || at_one > d_exact {
            report.bound_violations += 1;
        }
        let formula = (at_x / &d_exact).to_f64().unwrap_or(f64::NAN);
        let err = (piece.value(&x) - formula).abs();
        report.max_representation_error = report.max_representation_error.max(err);

        // Own cell: h_S ≥ f0 on S.
        let y: Vec<BigRational> = point_in(&mut rng, &cell).into_iter().map(exact).collect();
        if hs_exact_times_d(system, &cell, &y) < f0_exact_times_d(&y) {
            report.own_cell_violations += 1;
        }

        // Other cell: h_S ≤ f0 on S' ≠ S; half the time a face neighbour.
        if cells > 1 {
            let other = loop {
                let candidate = if rng.gen_bool(0.5) {
                    let mut idx = cell.idx.clone();
                    let ax = rng.gen_range(0..d);
                    idx[ax] = if idx[ax] + 1 < k && (idx[ax] == 0 || rng.gen_bool(0.5)) {
                        idx[ax] + 1
                    } else {
                        idx[ax].saturating_sub(1)
                    };
                    CellIndex { idx }
                } else {
                    system.cell(rng.gen_range(0..cells))?
                };
                if candidate != cell {
                    break candidate;
                }
            };
            let z: Vec<BigRational> = point_in(&mut rng, &other).into_iter().map(exact).collect();
            if hs_exact_times_d(system, &cell, &z) > f0_exact_times_d(&z) {
                report.other_cell_violations += 1;
            }
        }
    }
    Ok(report)
}

/// `γ_d η^{d/2+1}`, the L1 mass of `h_S - f0` over its own cell.
pub fn zeta_exact(eta: f64, d: usize) -> f64 {
    GAMMA_D * eta.powf(d as f64 / 2.0 + 1.0)
}

/// Midpoint quadrature of `∫_S |h_S − f0|` with `n` points per axis.
pub fn zeta_quadrature(system: &IntervalSystem, cell: &CellIndex, n: usize) -> Result<f64> {
    let hs = perturbation_hs(system, cell)?;
    let f0 = ConvexFunction::separable_quadratic(Rect::unit(system.d)?);
    let grid = TensorGrid::new(&system.cell_rect(cell)?, GridSpec::midpoint(n))?;
    Ok(grid.integrate(|x| (hs.value_at(x) - f0.value_at(x)).abs()))
}

/// A binary word of arbitrary length; bit `c` corresponds to cell `c`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CodeWord {
    limbs: Vec<u64>,
}

impl CodeWord {
    pub fn zero(n: usize) -> Self {
        CodeWord { limbs: vec![0; n.div_ceil(64).max(1)] }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut w = CodeWord::zero(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                w.limbs[i / 64] |= 1 << (i % 64);
            }
        }
        w
    }

    fn random<R: Rng>(n: usize, rng: &mut R) -> Self {
        let mut w = CodeWord::zero(n);
        for limb in w.limbs.iter_mut() {
            *limb = rng.gen();
        }
        let tail = n % 64;
        if tail != 0 {
            *w.limbs.last_mut().expect("nonempty") &= (1u64 << tail) - 1;
        }
        w
    }

    pub fn bit(&self, i: usize) -> bool {
        self.limbs.get(i / 64).is_some_and(|l| (l >> (i % 64)) & 1 == 1)
    }

    pub fn count_ones(&self) -> usize {
        self.limbs.iter().map(|l| l.count_ones() as usize).sum()
    }

    pub fn hamming(&self, other: &CodeWord) -> usize {
        self.limbs
            .iter()
            .zip(&other.limbs)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// Big-endian hex with `ceil(n/4)` digits.
    pub fn to_hex(&self, n: usize) -> String {
        let digits = n.div_ceil(4).max(1);
        let mut s = String::with_capacity(digits);
        for pos in (0..digits).rev() {
            let nibble = (self.limbs.get(pos / 16).copied().unwrap_or(0) >> ((pos % 16) * 4)) & 0xf;
            s.push(char::from_digit(nibble as u32, 16).expect("nibble"));
        }
        s
    }
}

impl fmt::Display for CodeWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex(self.limbs.len() * 64))
    }
}

impl FromStr for CodeWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits: Vec<u32> = s
            .chars()
            .rev()
            .map(|c| c.to_digit(16).ok_or_else(|| Error::Parse(format!("bad hex word {s:?}"))))
            .collect::<Result<_>>()?;
        let mut w = CodeWord::zero(digits.len() * 4);
        for (pos, &nib) in digits.iter().enumerate() {
            w.limbs[pos / 16] |= (nib as u64) << ((pos % 16) * 4);
        }
        Ok(w)
    }
}

impl Serialize for CodeWord {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex(self.limbs.len() * 64))
    }
}

impl<'de> Deserialize<'de> for CodeWord {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A set of `n`-bit words with pairwise Hamming distance at least `min_distance`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryCode {
    pub n: usize,
    pub min_distance: usize,
    /// Smallest pairwise distance found by the exhaustive check; `None` below two words.
    pub observed_min_distance: Option<usize>,
    pub words: Vec<CodeWord>,
}

impl Serialize for BinaryCode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("BinaryCode", 4)?;
        st.serialize_field("n", &self.n)?;
        st.serialize_field("min_distance", &self.min_distance)?;
        st.serialize_field("observed_min_distance", &self.observed_min_distance)?;
        st.serialize_field("words", &self.hex_words())?;
        st.end()
    }
}

impl BinaryCode {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn hex_words(&self) -> Vec<String> {
        self.words.iter().map(|w| w.to_hex(self.n)).collect()
    }
}

fn min_pairwise_distance(words: &[CodeWord]) -> Option<usize> {
    (0..words.len())
        .into_par_iter()
        .filter_map(|i| words[i + 1..].iter().map(|w| words[i].hamming(w)).min())
        .min()
}

/// Result of the greedy code search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VgOutcome {
    pub code: BinaryCode,
    pub target: usize,
    pub seed: u64,
    pub budget: usize,
    pub draws: usize,
    /// `target - |W|` when the budget ran out first.
    pub shortfall: usize,
}

impl VgOutcome {
    pub fn reached_target(&self) -> bool {
        self.shortfall == 0
    }
}

/// Randomized greedy search for a code with the given minimum distance.
///
/// Draws uniform words and keeps each one at distance `≥ min_dist` from all
/// kept words, until `target_size` words are kept or `budget` draws are spent.
/// Words are sorted, and the minimum distance is re-verified over all pairs.
pub fn vg_code(n: usize, min_dist: usize, target_size: usize, seed: u64, budget: usize) -> Result<VgOutcome> {
    if n == 0 || min_dist == 0 || min_dist > n {
        return Err(param_err!("need 0 < min_dist <= n, got n = {n}, min_dist = {min_dist}"));
    }
    if target_size == 0 {
        return Err(param_err!("target size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words: Vec<CodeWord> = Vec::new();
    let mut draws = 0;
    while words.len() < target_size && draws < budget {
        draws += 1;
        let candidate = CodeWord::random(n, &mut rng);
        if words.iter().all(|w| w.hamming(&candidate) >= min_dist) {
            words.push(candidate);
        }
    }
    words.sort();
    let observed = min_pairwise_distance(&words);
    if observed.is_some_and(|m| m < min_dist) {
        return Err(Error::Invariant(format!(
            "code has pairwise distance {observed:?} below {min_dist}"
        )));
    }
    let shortfall = target_size - words.len();
    Ok(VgOutcome {
        code: BinaryCode { n, min_distance: min_dist, observed_min_distance: observed, words },
        target: target_size,
        seed,
        budget,
        draws,
        shortfall,
    })
}

/// Limits for [`build_packing_family_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PackingOptions {
    /// Largest allowed `k^d`.
    pub max_cells: usize,
    /// Stop the code search at this many words, below `ceil(exp(k^d/8))`.
    pub max_words: Option<usize>,
    pub budget: usize,
}

impl Default for PackingOptions {
    fn default() -> Self {
        PackingOptions { max_cells: MAX_CELLS, max_words: None, budget: VG_BUDGET }
    }
}

/// The functions `g_θ` for the words `θ` of a code, with the separation they guarantee.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PackingFamily {
    pub system: IntervalSystem,
    pub code: BinaryCode,
    pub code_target: usize,
    pub code_shortfall: usize,
    pub seed: u64,
    pub functions: Vec<ConvexFunction>,
    /// `ζ = γ_d η^{d/2+1}`.
    pub zeta: f64,
    /// `ζ · min_distance`.
    pub guaranteed_sep: f64,
    /// `c1 = (γ_d/4)(2+sqrt(d-1))^{-d}`.
    pub c1: f64,
    /// `c1 · η`.
    pub epsilon: f64,
}

/// `(γ_d/4)(2+sqrt(d-1))^{-d}`.
pub fn c1(d: usize) -> f64 {
    GAMMA_D / 4.0 * pitch(d).powi(-(d as i32))
}

/// `4 c1 (2+sqrt(d-1))^{-2}`, the largest ε reached by the construction.
pub fn eps0(d: usize) -> f64 {
    4.0 * c1(d) / (pitch(d) * pitch(d))
}

/// `ceil(exp(n/8))`, the Varshamov–Gilbert code size.
pub fn vg_target(n: usize) -> usize {
    (n as f64 / 8.0).exp().ceil() as usize
}

/// `g_θ = max(max_{θ(S)=1} h_S, f0)`.
pub fn packing_function(system: &IntervalSystem, word: &CodeWord) -> Result<ConvexFunction> {
    let unit = Rect::unit(system.d)?;
    let f0 = ConvexFunction::separable_quadratic(unit.clone());
    let pieces = (0..system.cells())
        .filter(|&c| word.bit(c))
        .map(|c| hs_piece(system, &system.cell(c)?))
        .collect::<Result<Vec<_>>>()?;
    if pieces.is_empty() {
        return Ok(f0);
    }
    ConvexFunction::max_with(vec![ConvexFunction::max_affine(unit, pieces)?, f0])
}

pub fn build_packing_family(eta: &Rational, d: usize, seed: u64) -> Result<PackingFamily> {
    build_packing_family_with(eta, d, seed, &PackingOptions::default())
}

pub fn build_packing_family_with(eta: &Rational, d: usize, seed: u64, options: &PackingOptions) -> Result<PackingFamily> {
    let system = build_interval_system(eta, d)?;
    let n = system
        .k
        .checked_pow(d as u32)
        .filter(|&n| n <= options.max_cells)
        .ok_or_else(|| {
            param_err!(
                "eta = {eta}, d = {d} gives k = {} and k^d cells above the cap {}",
                system.k,
                options.max_cells
            )
        })?;
    let min_dist = n.div_ceil(4);
    let full_target = vg_target(n);
    let target = options.max_words.map_or(full_target, |m| m.min(full_target));
    let outcome = vg_code(n, min_dist, target, seed, options.budget)?;
    let functions = outcome
        .code
        .words
        .iter()
        .map(|w| packing_function(&system, w))
        .collect::<Result<Vec<_>>>()?;
    for (i, g) in functions.iter().enumerate() {
        let (lo, hi) = g.grid_range();
        if hi > 1.0 + 1e-12 || lo < -1e-12 {
            return Err(Error::Invariant(format!("g_{i} leaves [0, 1] on the check grid: [{lo}, {hi}]")));
        }
    }
    let zeta = zeta_exact(eta.to_f64(), d);
    Ok(PackingFamily {
        zeta,
        guaranteed_sep: zeta * min_dist as f64,
        c1: c1(d),
        epsilon: c1(d) * eta.to_f64(),
        code_target: outcome.target,
        code_shortfall: outcome.shortfall,
        seed,
        code: outcome.code,
        functions,
        system,
    })
}

/// Default certificate grid: fine enough that quadrature error stays far below
/// [`CERTIFICATE_TOLERANCE`] at desk-scale η.
pub fn default_certificate_grid(d: usize) -> GridSpec {
    match d {
        1 => GridSpec::midpoint(4001),
        2 => GridSpec::midpoint(600),
        3 => GridSpec::midpoint(100),
        _ => GridSpec::midpoint(8),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateRow {
    pub i: usize,
    pub j: usize,
    pub hamming: usize,
    pub l1_distance: f64,
    pub l1_refined: f64,
    /// `ζ · hamming`.
    pub bound: f64,
    /// `l1_distance - bound`.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PackingCertificate {
    pub grid: GridSpec,
    pub refined_grid: GridSpec,
    pub tolerance: f64,
    pub guaranteed_sep: f64,
    pub min_observed: Option<f64>,
    pub min_margin: Option<f64>,
    pub max_error_estimate: f64,
    pub all_pass: bool,
    pub rows: Vec<CertificateRow>,
}

impl PackingCertificate {
    pub fn failures(&self) -> impl Iterator<Item = &CertificateRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,hamming,l1_distance,bound,margin,error_estimate,pass\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:e},{:e},{:e},{:e},{}\n",
                r.i,
                r.j,
                r.hamming,
                r.l1_distance,
                r.bound,
                r.margin,
                (r.l1_distance - r.l1_refined).abs(),
                r.pass
            ));
        }
        out
    }
}

/// Pairwise L1 distances, upper triangle in row-major order.
///
/// Points are processed in fixed blocks; every pair accumulates its block sums
/// in block order, so the result does not depend on thread count.
pub fn pairwise_l1(functions: &[ConvexFunction], grid: &TensorGrid) -> Vec<f64> {
    let m = functions.len();
    if m < 2 {
        return Vec::new();
    }
    let d = grid.dim();
    let block = (1usize << 22).div_ceil(m).clamp(256, 1 << 16);
    let mut rows: Vec<Vec<CompensatedSum>> = (0..m).map(|i| vec![CompensatedSum::new(); m - i - 1]).collect();
    let mut points = Vec::with_capacity(block * d);
    let mut weights = Vec::with_capacity(block);
    let mut start = 0;
    while start < grid.len() {
        let end = (start + block).min(grid.len());
        points.clear();
        weights.clear();
        grid.walk(start, end, |x, w| {
            points.extend_from_slice(x);
            weights.push(w);
        });
        let values: Vec<Vec<f64>> = functions
            .par_iter()
            .map(|f| points.chunks_exact(d).map(|x| f.value_at(x)).collect())
            .collect();
        rows.par_iter_mut().enumerate().for_each(|(i, row)| {
            let vi = &values[i];
            for (offset, acc) in row.iter_mut().enumerate() {
                let vj = &values[i + 1 + offset];
                let mut s = CompensatedSum::new();
                for t in 0..weights.len() {
                    s.add(weights[t] * (vi[t] - vj[t]).abs());
                }
                acc.merge(&s);
            }
        });
        start = end;
    }
    rows.into_iter().flatten().map(|s| s.value()).collect()
}

/// Checks every pair of the family against `ζ · Υ(θ, θ')` at `grid` and at
/// its `2n - 1` refinement; a pair passes when both values clear the bound
/// minus [`CERTIFICATE_TOLERANCE`].
pub fn packing_certificate(family: &PackingFamily, grid: GridSpec) -> Result<PackingCertificate> {
    if family.functions.is_empty() {
        return Err(param_err!("packing family is empty"));
    }
    let unit = Rect::unit(family.system.d)?;
    let refined_grid = grid.refined();
    let coarse = pairwise_l1(&family.functions, &TensorGrid::new(&unit, grid)?);
    let fine = pairwise_l1(&family.functions, &TensorGrid::new(&unit, refined_grid)?);
    let m = family.functions.len();
    let words = &family.code.words;
    let mut rows = Vec::with_capacity(coarse.len());
    let mut flat = 0;
    for i in 0..m {
        for j in i + 1..m {
            let hamming = words[i].hamming(&words[j]);
            let bound = family.zeta * hamming as f64;
            let (l1, l1f) = (coarse[flat], fine[flat]);
            rows.push(CertificateRow {
                i,
                j,
                hamming,
                l1_distance: l1,
                l1_refined: l1f,
                bound,
                margin: l1 - bound,
                pass: l1 >= bound - CERTIFICATE_TOLERANCE && l1f >= bound - CERTIFICATE_TOLERANCE,
            });
            flat += 1;
        }
    }
    let min_observed = rows.iter().map(|r| r.l1_distance).reduce(f64::min);
    let min_margin = rows.iter().map(|r| r.margin).reduce(f64::min);
    let max_error_estimate = rows
        .iter()
        .map(|r| (r.l1_distance - r.l1_refined).abs())
        .fold(0.0, f64::max);
    Ok(PackingCertificate {
        grid,
        refined_grid,
        tolerance: CERTIFICATE_TOLERANCE,
        guaranteed_sep: family.guaranteed_sep,
        min_observed,
        min_margin,
        max_error_estimate,
        all_pass: rows.iter().all(|r| r.pass),
        rows,
    })
}

/// One point of the constructed lower bound `log M ≥ k^d / 8` at `ε = c1 η`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub eta: Rational,
    pub k: u64,
    pub cells: f64,
    pub epsilon: f64,
    pub eps0: f64,
    pub log_m: f64,
    /// `log_m · ε^{d/2}`.
    pub scaled: f64,
}

pub fn lower_bound_curve(d: usize, etas: &[Rational]) -> Result<Vec<CurvePoint>> {
    etas.iter()
        .map(|eta| {
            let k = cell_count_per_axis(eta, d)?;
            let cells = (k as f64).powi(d as i32);
            let epsilon = c1(d) * eta.to_f64();
            let log_m = cells / 8.0;
            Ok(CurvePoint {
                eta: eta.clone(),
                k,
                cells,
                epsilon,
                eps0: eps0(d),
                log_m,
                scaled: log_m * epsilon.powf(d as f64 / 2.0),
            })
        })
        .collect()
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("eta,k,epsilon,log_m,log_m_eps_scaled\n");
    for p in points {
        out.push_str(&format!("{},{},{:e},{:e},{:e}\n", p.eta, p.k, p.epsilon, p.log_m, p.scaled));
    }
    out
}

/// Least-squares slope of `ln(log M)` against `ln(1/ε)`; `None` below two distinct ε.
pub fn loglog_slope(points: &[CurvePoint]) -> Option<f64> {
    let xs: Vec<f64> = points.iter().map(|p| -p.epsilon.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.log_m.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (points.len() >= 2 && sxx > 0.0).then(|| sxy / sxx)
}

/// `max / min - 1` of `log M · ε^{d/2}` over the curve.
pub fn scaled_spread(points: &[CurvePoint]) -> f64 {
    let max = points.iter().map(|p| p.scaled).fold(f64::NEG_INFINITY, f64::max);
    let min = points.iter().map(|p| p.scaled).fold(f64::INFINITY, f64::min);
    max / min - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(s: &str) -> Rational {
        s.parse().unwrap()
    }

    #[test]
    fn interval_system_examples() {
        let s = build_interval_system(&q("1/25"), 1).unwrap();
        assert_eq!(s.k, 5);
        assert_eq!(s.gap, 0.0);
        for i in 0..5 {
            assert!((s.u[i] - 0.2 * i as f64).abs() < 1e-15);
            assert!((s.v[i] - 0.2 * (i + 1) as f64).abs() < 1e-15);
        }
        assert_eq!(s.v[4], 1.0);

        let s = build_interval_system(&q("4/9"), 1).unwrap();
        assert_eq!(s.k, 1);
        assert!((s.v[0] - 2.0 / 3.0).abs() < 1e-15);

        let s = build_interval_system(&q("0.01"), 2).unwrap();
        assert_eq!(s.k, 6);
        assert!((s.gap - 0.05).abs() < 1e-15);
        assert!((s.span() - 0.85).abs() < 1e-12);
    }

    #[test]
    fn k_boundary_cases() {
        // At the upper limit k = 1.
        assert_eq!(cell_count_per_axis(&q("1"), 1).unwrap(), 1);
        assert_eq!(cell_count_per_axis(&q("4/9"), 2).unwrap(), 1);
        assert_eq!(cell_count_per_axis(&q("4/25"), 5).unwrap(), 1);
        assert!(cell_count_per_axis(&q("1.5"), 1).is_err());
        assert!(cell_count_per_axis(&q("1/2"), 2).is_err());
        assert!(cell_count_per_axis(&q("0"), 1).is_err());
        // Exact hits of 2η^{-1/2}/(2+sqrt(d-1)) = k.
        assert_eq!(cell_count_per_axis(&q("1/100"), 1).unwrap(), 10);
        assert_eq!(cell_count_per_axis(&q("4/441"), 2).unwrap(), 7);
        assert_eq!(cell_count_per_axis(&q("2^-96"), 1).unwrap(), 1 << 48);
    }

    #[test]
    fn hs_examples() {
        let s = build_interval_system(&q("1/25"), 1).unwrap();
        let f0 = ConvexFunction::separable_quadratic(Rect::unit(1).unwrap());
        let h = perturbation_hs(&s, &CellIndex::new(vec![0], 5).unwrap()).unwrap();
        assert!((h.value_at(&[0.3]) - 0.06).abs() < 1e-15);
        assert!((h.value_at(&[0.1]) - f0.value_at(&[0.1]) - 0.01).abs() < 1e-15);
        let h = perturbation_hs(&s, &CellIndex::new(vec![1], 5).unwrap()).unwrap();
        assert!((h.value_at(&[0.3]) - 0.10).abs() < 1e-15);
        assert!(h.value_at(&[0.3]) >= f0.value_at(&[0.3]));
        assert!(h.value_at(&[1.0]) <= 1.0);
    }

    #[test]
    fn hs_properties_hold_exactly() {
        for (eta, d) in [("1/25", 1), ("0.01", 2), ("1/64", 3)] {
            let s = build_interval_system(&q(eta), d).unwrap();
            let r = check_hs_properties(&s, 2000, 1).unwrap();
            assert_eq!(r.violations(), 0, "{r:?}");
            assert!(r.max_representation_error < 1e-15);
        }
    }

    #[test]
    fn zeta_matches_quadrature() {
        let s = build_interval_system(&q("0.04"), 1).unwrap();
        let direct = zeta_quadrature(&s, &CellIndex::new(vec![2], s.k).unwrap(), 4000).unwrap();
        assert!((zeta_exact(0.04, 1) - 0.008 / 6.0).abs() < 1e-15);
        assert!((direct - zeta_exact(0.04, 1)).abs() < 1e-8);
        // γ_d = ∫ y(1-y) = 1/6 by composite Simpson, exact on quadratics.
        let m = 10;
        let simpson: f64 = (0..m)
            .map(|i| {
                let (a, b) = (i as f64 / m as f64, (i + 1) as f64 / m as f64);
                let g = |y: f64| y * (1.0 - y);
                (b - a) / 6.0 * (g(a) + 4.0 * g((a + b) / 2.0) + g(b))
            })
            .sum();
        assert!((simpson - GAMMA_D).abs() < 1e-15);
    }

    #[test]
    fn vg_examples() {
        let r = vg_code(8, 2, 3, 0, VG_BUDGET).unwrap();
        assert!(r.reached_target());
        assert!(r.code.observed_min_distance.unwrap() >= 2);

        let r = vg_code(1, 1, 2, 0, VG_BUDGET).unwrap();
        assert_eq!(r.code.hex_words(), vec!["0", "1"]);

        let r = vg_code(25, 7, 23, 0, VG_BUDGET).unwrap();
        assert!(r.reached_target());
        assert_eq!(r.code.len(), 23);
        assert!(r.code.observed_min_distance.unwrap() >= 7);
    }

    #[test]
    fn vg_shortfall_is_a_value() {
        // Only two 3-bit words can be at distance 3.
        let r = vg_code(3, 3, 5, 0, 1000).unwrap();
        assert_eq!(r.code.len(), 2);
        assert_eq!(r.shortfall, 3);
        assert_eq!(r.draws, 1000);
        assert!(vg_code(3, 4, 1, 0, 10).is_err());
        assert!(vg_code(3, 0, 1, 0, 10).is_err());
    }

    #[test]
    fn vg_target_is_feasible_by_exhaustive_search() {
        // Lexicographic greedy over all 2^8 words is a deterministic witness.
        let mut lex: Vec<u32> = Vec::new();
        for w in 0u32..256 {
            if lex.iter().all(|&a| (a ^ w).count_ones() >= 2) {
                lex.push(w);
            }
        }
        assert!(lex.len() >= vg_target(8));
        let r = vg_code(8, 2, vg_target(8), 5, VG_BUDGET).unwrap();
        assert_eq!(r.code.len(), 3);
    }

    #[test]
    fn code_words_hex_round_trip() {
        let bits: Vec<bool> = (0..70).map(|i| i % 3 == 0).collect();
        let w = CodeWord::from_bits(&bits);
        let hex = w.to_hex(70);
        assert_eq!(hex.len(), 18);
        let back: CodeWord = hex.parse().unwrap();
        assert_eq!(back, w);
        assert_eq!(w.count_ones(), 24);
    }

    #[test]
    fn empty_word_gives_f0() {
        let s = build_interval_system(&q("1/25"), 1).unwrap();
        let g = packing_function(&s, &CodeWord::zero(5)).unwrap();
        assert_eq!(g, ConvexFunction::separable_quadratic(Rect::unit(1).unwrap()));
    }

    #[test]
    fn piecewise_identity_on_cell_interiors() {
        let s = build_interval_system(&q("0.01"), 2).unwrap();
        let f0 = ConvexFunction::separable_quadratic(Rect::unit(2).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let word = CodeWord::random(36, &mut rng);
        let g = packing_function(&s, &word).unwrap();
        let grid = TensorGrid::vertices(&Rect::unit(2).unwrap(), 201).unwrap();
        let mut checked = 0;
        grid.walk(0, grid.len(), |x, _| {
            let Some(cell) = s.locate(x) else { return };
            let interior = cell
                .idx
                .iter()
                .zip(x)
                .all(|(&i, &t)| t > s.u[i] && t < s.v[i]);
            if !interior {
                return;
            }
            let expected = if word.bit(cell.flat(s.k)) {
                perturbation_hs(&s, &cell).unwrap().value_at(x)
            } else {
                f0.value_at(x)
            };
            assert!((g.value_at(x) - expected).abs() < 1e-15);
            checked += 1;
        });
        assert!(checked > 1000);
    }

    #[test]
    fn family_d1_certificate() {
        let fam = build_packing_family(&q("1/25"), 1, 0).unwrap();
        assert_eq!(fam.code.n, 5);
        assert_eq!(fam.code.min_distance, 2);
        assert!(fam.functions.len() >= 2);
        assert!((fam.guaranteed_sep - 2.0 / 750.0).abs() < 1e-15);
        assert!((fam.c1 - 1.0 / 48.0).abs() < 1e-15);
        assert!((fam.epsilon - 1.0 / 1200.0).abs() < 1e-15);
        let cert = packing_certificate(&fam, GridSpec::midpoint(2001)).unwrap();
        assert!(cert.all_pass);
        assert!(cert.min_observed.unwrap() >= fam.guaranteed_sep - 1e-6);
        assert!(cert.to_csv().starts_with("i,j,hamming,l1_distance,bound,margin"));
    }

    #[test]
    fn single_function_certificate_is_vacuous() {
        let opts = PackingOptions { max_words: Some(1), ..PackingOptions::default() };
        let fam = build_packing_family_with(&q("1"), 1, 0, &opts).unwrap();
        assert_eq!(fam.functions.len(), 1);
        let cert = packing_certificate(&fam, GridSpec::midpoint(11)).unwrap();
        assert!(cert.all_pass);
        assert!(cert.rows.is_empty());
    }

    #[test]
    fn cell_cap_is_enforced() {
        assert!(matches!(build_packing_family(&q("0.0025"), 2, 0), Err(Error::Parameter(_))));
        let opts = PackingOptions { max_cells: 169, max_words: Some(4), budget: 1000 };
        let fam = build_packing_family_with(&q("0.0025"), 2, 0, &opts).unwrap();
        assert_eq!(fam.code.n, 169);
        assert_eq!(fam.functions.len(), 4);
    }

    #[test]
    fn pairwise_l1_is_thread_independent() {
        let fam = build_packing_family(&q("1/100"), 1, 4).unwrap();
        let grid = TensorGrid::new(&Rect::unit(1).unwrap(), GridSpec::midpoint(3001)).unwrap();
        let a = pairwise_l1(&fam.functions, &grid);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| pairwise_l1(&fam.functions, &grid));
        assert_eq!(a, b);
    }

    #[test]
    fn lower_bound_curve_examples() {
        let pts = lower_bound_curve(1, &[q("1/25"), q("1/100"), q("1/400"), q("1")]).unwrap();
        assert!((pts[0].epsilon - 1.0 / 1200.0).abs() < 1e-18);
        assert_eq!(pts[0].log_m, 5.0 / 8.0);
        assert_eq!(pts[3].k, 1);
        assert_eq!(pts[3].log_m, 1.0 / 8.0);
        let first = pts[0].scaled;
        for p in &pts[..3] {
            assert!((p.scaled / first - 1.0).abs() < 1e-12);
        }
        let slope = loglog_slope(&pts[..3]).unwrap();
        assert!((slope - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn interval_system_invariants(num in 1u32..400, den in 1u32..400_000, d in 1usize..=4) {
            let eta = Rational::ratio(num as i64, den as i64);
            prop_assume!(eta.to_f64() <= eta_upper_limit(d) * (1.0 - 1e-9));
            prop_assume!(cell_count_per_axis(&eta, d).unwrap() <= 2000);
            let s = build_interval_system(&eta, d).unwrap();
            let x = 2.0 / (pitch(d) * eta.to_f64().sqrt());
            prop_assert!((s.k as f64) <= x * (1.0 + 1e-12));
            prop_assert!(((s.k + 1) as f64) > x * (1.0 - 1e-12));
            prop_assert!(s.k >= 1);
            prop_assert!(s.u[0] == 0.0 && s.v[s.k - 1] <= 1.0);
            for i in 0..s.k {
                let len = s.v[i] - s.u[i];
                prop_assert!((len - s.side).abs() <= 4.0 * f64::EPSILON * s.v[i].max(s.side));
                if i + 1 < s.k {
                    prop_assert!(s.u[i + 1] >= s.v[i]);
                    prop_assert!((s.u[i + 1] - s.v[i] - s.gap).abs() <= 4.0 * f64::EPSILON);
                }
            }
        }

        #[test]
        fn cell_flat_round_trip(k in 1usize..9, d in 1usize..=4, seed in any::<u64>()) {
            let n = k.pow(d as u32);
            let flat = (seed as usize) % n;
            let c = CellIndex::from_flat(flat, k, d).unwrap();
            prop_assert_eq!(c.flat(k), flat);
        }

        #[test]
        fn vg_words_respect_distance(n in 1usize..40, seed in any::<u64>()) {
            let min = n.div_ceil(4);
            let r = vg_code(n, min, vg_target(n), seed, 20_000).unwrap();
            for (a, wa) in r.code.words.iter().enumerate() {
                for wb in &r.code.words[a + 1..] {
                    prop_assert!(wa.hamming(wb) >= min);
                }
            }
            prop_assert!(r.code.words.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
