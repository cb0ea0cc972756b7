//! Compensated summation and log-domain helpers.

/// Neumaier (improved Kahan) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// `ln Σ exp(x_i)` with max-shifting and compensated accumulation.
/// Returns `-inf` for an empty input.
pub fn log_sum_exp(logs: &[f64]) -> f64 {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let shifted = compensated_sum(logs.iter().map(|&l| (l - max).exp()));
    max + shifted.ln()
}

/// `ln(e^b - e^a)` for `a < b`, computed as `b + ln(1 - e^{a-b})`.
pub fn log_diff_exp(b: f64, a: f64) -> f64 {
    debug_assert!(a < b);
    b + (-(a - b).exp_m1()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let xs = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(xs), 2.0);
        assert_ne!(xs.iter().sum::<f64>(), 2.0);
    }

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        let xs = [0.1f64, 0.2, 0.3];
        let logs: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
        assert!((log_sum_exp(&logs) - 0.6f64.ln()).abs() < 1e-15);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn log_sum_exp_survives_underflow() {
        let l = -2000.0;
        let got = log_sum_exp(&[l, l]);
        assert!((got - (l + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn log_diff_exp_small_gap() {
        let b = -0.5;
        let a = b - 1e-10;
        let gap = b - a;
        let stable = log_diff_exp(b, a);
        assert!((stable - (b + gap.ln())).abs() < 1e-9);
        let naive = (b.exp() - a.exp()).ln();
        assert!((naive - stable).abs() > 1e-9);
    }
}
