//! Strip schedules for the covering upper bound, and the bound formulas.
//!
//! Everything is kept in natural-log space: at `p = 1` a nonempty schedule
//! needs `η < 2^-24`, and `δ_m`, `α_m^p` fall far below the smallest normal
//! float for larger `p`.

use std::f64::consts::LN_2;

use serde::{Serialize, Serializer};

use crate::convex::LipschitzVector;
use crate::error::{param_err, Error, Result};
use crate::logspace::{log_diff_exp, log_sum_exp};
use crate::rational::Rational;

/// Guard width around `log u` inside which the cut index is refused.
pub const TIE_GUARD: f64 = 1e-9;

/// Agreement required between the two formulas for `log ζ_m`.
pub const ZETA_FORM_TOLERANCE: f64 = 1e-12;

/// The breakpoints `u` and `v = 1 - u` splitting `[0, 1]` into three strips.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Breakpoints {
    pub p: f64,
    /// `log2 u = -2(p+1)^2(p+2)`; exact for integer `p`.
    pub log2_u: f64,
    pub log_u: f64,
    /// `log(1 - v)`, equal to `log u`.
    pub log_v_complement: f64,
}

impl Breakpoints {
    pub fn u(&self) -> f64 {
        self.log2_u.exp2()
    }

    pub fn v(&self) -> f64 {
        1.0 - self.u()
    }
}

pub fn breakpoints(p: f64) -> Result<Breakpoints> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(param_err!("p must be a finite value >= 1, got {p}"));
    }
    let log2_u = -2.0 * (p + 1.0) * (p + 1.0) * (p + 2.0);
    let log_u = log2_u * LN_2;
    Ok(Breakpoints { p, log2_u, log_u, log_v_complement: log_u })
}

/// The increasing sequence `δ_1 < … < δ_A < u ≤ δ_{A+1}` and the widths `α_m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StripSchedule {
    pub p: f64,
    pub eta: Rational,
    pub log_eta: f64,
    pub breakpoints: Breakpoints,
    /// Cut index; zero means the schedule is empty.
    pub a: usize,
    /// `log δ_m` for `m = 1..=A+1`.
    pub log_delta: Vec<f64>,
    /// `log α_m` for `m = 1..=A`.
    pub log_alpha: Vec<f64>,
}

impl StripSchedule {
    pub fn is_empty(&self) -> bool {
        self.a == 0
    }
}

fn log_delta(p: f64, log_eta: f64, m: usize) -> f64 {
    p * ((p + 1.0) / (p + 2.0)).powi(m as i32 - 1) * log_eta
}

/// `log α_m = log η - p (p+1)^{m-2} / (p+2)^{m-1} log η`, taken literally at `m = 1`.
fn log_alpha(p: f64, log_eta: f64, m: usize) -> f64 {
    let m = m as i32;
    log_eta - p * (p + 1.0).powi(m - 2) / (p + 2.0).powi(m - 1) * log_eta
}

pub fn strip_schedule(eta: &Rational, p: f64) -> Result<StripSchedule> {
    let bp = breakpoints(p)?;
    if !eta.is_positive() {
        return Err(param_err!("eta must be positive, got {eta}"));
    }
    let log_eta = eta.ln()?;
    if log_eta >= 0.0 {
        return Err(param_err!("eta must be below 1, got {eta}"));
    }
    let mut a = 0;
    while log_delta(p, log_eta, a + 1) < bp.log_u {
        a += 1;
    }
    for m in [a, a + 1] {
        if m >= 1 {
            let gap = (log_delta(p, log_eta, m) - bp.log_u).abs();
            if gap < TIE_GUARD {
                return Err(param_err!(
                    "log delta_{m} is within {gap:e} of log u; perturb eta = {eta} to avoid the tie"
                ));
            }
        }
    }
    Ok(StripSchedule {
        p,
        eta: eta.clone(),
        log_eta,
        breakpoints: bp,
        a,
        log_delta: (1..=a + 1).map(|m| log_delta(p, log_eta, m)).collect(),
        log_alpha: (1..=a).map(|m| log_alpha(p, log_eta, m)).collect(),
    })
}

/// `log ζ_m` from both the definition and the closed form, for `m = 1..=A`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZetaSequence {
    pub log_zeta: Vec<f64>,
    pub log_zeta_closed: Vec<f64>,
    pub max_gap: f64,
}

/// `ζ_m = sqrt(η δ_{m+1} / (δ_m α_m))`, checked against
/// `exp((p / (2(p+1)^2)) ((p+1)/(p+2))^m log η)`.
pub fn zeta_sequence(sched: &StripSchedule) -> Result<ZetaSequence> {
    if sched.is_empty() {
        return Err(param_err!("schedule for eta = {} is empty", sched.eta));
    }
    let p = sched.p;
    let le = sched.log_eta;
    let log_zeta: Vec<f64> = (0..sched.a)
        .map(|i| 0.5 * (le + sched.log_delta[i + 1] - sched.log_delta[i] - sched.log_alpha[i]))
        .collect();
    let log_zeta_closed: Vec<f64> = (1..=sched.a)
        .map(|m| p / (2.0 * (p + 1.0) * (p + 1.0)) * ((p + 1.0) / (p + 2.0)).powi(m as i32) * le)
        .collect();
    let max_gap = log_zeta
        .iter()
        .zip(&log_zeta_closed)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if max_gap > ZETA_FORM_TOLERANCE {
        return Err(Error::Invariant(format!(
            "zeta definition and closed form differ by {max_gap:e} in log space"
        )));
    }
    Ok(ZetaSequence { log_zeta, log_zeta_closed, max_gap })
}

/// One inequality `lhs ≤ rhs`, both sides as natural logs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleCheck {
    pub name: String,
    pub log_lhs: f64,
    pub log_rhs: f64,
    pub pass: bool,
}

impl ScheduleCheck {
    fn new(name: impl Into<String>, log_lhs: f64, log_rhs: f64) -> Self {
        ScheduleCheck { name: name.into(), log_lhs, log_rhs, pass: log_lhs <= log_rhs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleReport {
    pub eta: Rational,
    pub p: f64,
    pub d: usize,
    pub a: usize,
    pub log_u: f64,
    pub log_delta: Vec<f64>,
    pub log_alpha: Vec<f64>,
    pub log_zeta: Vec<f64>,
    pub zeta: Vec<f64>,
    pub zeta_form_gap: f64,
    /// `ζ_m / ζ_{m-1}` for `m = 2..=A`.
    pub ratios: Vec<f64>,
    /// `log S1`, `S1 = δ_1 + Σ α_m^p (δ_{m+1} - δ_m)`.
    pub log_s1: f64,
    /// `log((7/3) η^p)`.
    pub log_s1_bound: f64,
    pub sum_zeta_sq: f64,
    pub sum_zeta_d: f64,
    pub checks: Vec<ScheduleCheck>,
    pub all_pass: bool,
}

pub fn verify_schedule(eta: &Rational, p: f64, d: usize) -> Result<ScheduleReport> {
    if d == 0 {
        return Err(param_err!("dimension must be positive"));
    }
    let sched = strip_schedule(eta, p)?;
    let zs = zeta_sequence(&sched)?;
    let a = sched.a;
    let lz = &zs.log_zeta;
    let mut checks = Vec::new();

    let mut ratios = Vec::with_capacity(a.saturating_sub(1));
    for m in 1..a {
        let log_ratio = lz[m] - lz[m - 1];
        ratios.push(log_ratio.exp());
        checks.push(ScheduleCheck::new(format!("zeta_ratio_{}", m + 1), LN_2, log_ratio));
    }

    let mut terms = vec![sched.log_delta[0]];
    for m in 0..a {
        let width = log_diff_exp(sched.log_delta[m + 1], sched.log_delta[m]);
        terms.push(p * sched.log_alpha[m] + width);
    }
    let log_s1 = log_sum_exp(&terms);
    let log_s1_bound = (7.0f64 / 3.0).ln() + p * sched.log_eta;
    checks.push(ScheduleCheck::new("s1", log_s1, log_s1_bound));

    let sum_log = |r: f64| log_sum_exp(&lz.iter().map(|l| r * l).collect::<Vec<_>>());
    let log_sq = sum_log(2.0);
    checks.push(ScheduleCheck::new("sum_zeta_sq", log_sq, (4.0f64 / 3.0).ln()));
    let df = d as f64;
    let log_sd = sum_log(df);
    let geometric = df * LN_2 - (df * LN_2).exp_m1().ln();
    checks.push(ScheduleCheck::new("sum_zeta_d", log_sd, geometric));

    Ok(ScheduleReport {
        eta: eta.clone(),
        p,
        d,
        a,
        log_u: sched.breakpoints.log_u,
        zeta: lz.iter().map(|l| l.exp()).collect(),
        log_zeta: zs.log_zeta,
        zeta_form_gap: zs.max_gap,
        log_delta: sched.log_delta,
        log_alpha: sched.log_alpha,
        ratios,
        log_s1,
        log_s1_bound,
        sum_zeta_sq: log_sq.exp(),
        sum_zeta_d: log_sd.exp(),
        all_pass: checks.iter().all(|c| c.pass),
        checks,
    })
}

impl ScheduleReport {
    /// One row per `m = 1..=A+1`; `α`, `ζ` and the ratio are blank where undefined.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,log_delta,log_alpha,log_zeta,ratio,ratio_pass\n");
        for (i, ld) in self.log_delta.iter().enumerate() {
            let m = i + 1;
            let alpha = self.log_alpha.get(i).map(|v| format!("{v:e}")).unwrap_or_default();
            let zeta = self.log_zeta.get(i).map(|v| format!("{v:e}")).unwrap_or_default();
            let (ratio, pass) = match i.checked_sub(1).and_then(|j| self.ratios.get(j)) {
                Some(r) => (format!("{r:e}"), (*r >= 2.0).to_string()),
                None => (String::new(), String::new()),
            };
            out.push_str(&format!("{m},{ld:e},{alpha},{zeta},{ratio},{pass}\n"));
        }
        out
    }
}

/// Coverage and cardinality accounting for the combined cover.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverAccounting {
    /// `(17/3)^{1/p} η`.
    pub coverage: f64,
    pub log_coverage: f64,
    /// The log-cardinality bound; may be infinite when it overflows.
    pub log_cardinality_bound: f64,
    /// Natural log of `log_cardinality_bound`.
    pub ln_log_cardinality_bound: f64,
}

/// `c (2^{d+1}/(2^d-1) + (2/u)^{d/2}) ((ΣΓ + 2)/η)^{d/2}`, with ΣΓ over the
/// finite entries of `gammas`.
pub fn cover_size_accounting(
    eta: &Rational,
    p: f64,
    d: usize,
    gammas: &LipschitzVector,
    c_base: f64,
) -> Result<CoverAccounting> {
    if !(c_base.is_finite() && c_base > 0.0) {
        return Err(param_err!("c must be positive, got {c_base}"));
    }
    if d == 0 {
        return Err(param_err!("dimension must be positive"));
    }
    let sched = strip_schedule(eta, p)?;
    if sched.is_empty() {
        return Err(param_err!("schedule for eta = {eta} is empty"));
    }
    let log_coverage = (17.0f64 / 3.0).ln() / p + sched.log_eta;
    let half_d = d as f64 / 2.0;
    let df = d as f64;
    let log_prefactor = log_sum_exp(&[
        (df + 1.0) * LN_2 - (df * LN_2).exp_m1().ln(),
        half_d * (LN_2 - sched.breakpoints.log_u),
    ]);
    let ln_bound = c_base.ln() + log_prefactor + half_d * ((gammas.finite_sum() + 2.0).ln() - sched.log_eta);
    Ok(CoverAccounting {
        coverage: log_coverage.exp(),
        log_coverage,
        log_cardinality_bound: ln_bound.exp(),
        ln_log_cardinality_bound: ln_bound,
    })
}

/// A bound value, or a marker that `ε` lies outside the formula's range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundValue {
    Value(f64),
    OutOfRange,
}

impl BoundValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            BoundValue::Value(v) => Some(*v),
            BoundValue::OutOfRange => None,
        }
    }
}

impl Serialize for BoundValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            BoundValue::Value(v) => s.serialize_f64(*v),
            BoundValue::OutOfRange => s.serialize_str("out of range"),
        }
    }
}

/// Inputs to the three bound formulas. The constants `c_up`, `c_low` and
/// `eps0` are not determined by the theory and must be supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    pub eps: f64,
    pub d: usize,
    pub p: f64,
    /// Sup-norm bound `B`.
    pub bound: f64,
    pub a: f64,
    pub b: f64,
    /// Per-axis Lipschitz constants for the coordinate-Lipschitz bound.
    pub gammas: Option<LipschitzVector>,
    pub c_up: f64,
    pub c_low: f64,
    pub eps0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremBounds {
    /// `c_up (ε / (B (b-a)^{d/p}))^{-d/2}`.
    pub upper: BoundValue,
    /// `c_low (ε / (B (b-a)^{d/p}))^{-d/2}`.
    pub lower: BoundValue,
    /// `c_up ((B + Σ Γ_i (b-a)) / ε)^{d/2}`; `None` without finite Γ.
    pub coordinate: Option<BoundValue>,
}

pub fn theorem_bounds(inputs: &BoundInputs) -> Result<TheoremBounds> {
    let BoundInputs { eps, d, p, bound, a, b, c_up, c_low, eps0, .. } = *inputs;
    let positive = |name: &str, x: f64| {
        if x.is_finite() && x > 0.0 {
            Ok(())
        } else {
            Err(param_err!("{name} must be positive, got {x}"))
        }
    };
    positive("eps", eps)?;
    positive("B", bound)?;
    positive("b - a", b - a)?;
    positive("c_up", c_up)?;
    positive("c_low", c_low)?;
    positive("eps0", eps0)?;
    if d == 0 {
        return Err(param_err!("dimension must be positive"));
    }
    if !(p.is_finite() && p >= 1.0) {
        return Err(param_err!("p must be a finite value >= 1, got {p}"));
    }
    let half_d = d as f64 / 2.0;
    let scale = bound * (b - a).powf(d as f64 / p);
    let normalized = eps / scale;
    let (upper, lower) = if eps > eps0 * scale {
        (BoundValue::OutOfRange, BoundValue::OutOfRange)
    } else {
        let core = normalized.powf(-half_d);
        (BoundValue::Value(c_up * core), BoundValue::Value(c_low * core))
    };
    let coordinate = match &inputs.gammas {
        Some(g) if g.all_finite() => {
            let total = bound + g.values().iter().map(|gi| gi * (b - a)).sum::<f64>();
            Some(if eps > eps0 * total {
                BoundValue::OutOfRange
            } else {
                BoundValue::Value(c_up * (total / eps).powf(half_d))
            })
        }
        _ => None,
    };
    Ok(TheoremBounds { upper, lower, coordinate })
}
