//! Streaming log-sum-exp with a running maximum.

/// Accumulates `log Σ w_k exp(a_k)` without overflow.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    /// Adds `w * exp(a)` for `w >= 0`.
    pub fn add(&mut self, a: f64, w: f64) {
        if w <= 0.0 || a == f64::NEG_INFINITY {
            return;
        }
        if a > self.max {
            self.scaled = self.scaled * (self.max - a).exp() + w;
            self.max = a;
        } else {
            self.scaled += w * (a - self.max).exp();
        }
    }

    pub fn merge(&mut self, other: &LogSumExp) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        self.add(other.max, other.scaled);
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// `log Σ w_k exp(a_k)` over a slice of `(a, w)` pairs.
pub fn log_sum_exp(terms: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let mut acc = LogSumExp::new();
    for (a, w) in terms {
        acc.add(a, w);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn large_exponents_do_not_overflow() {
        let v = log_sum_exp([(1000.0, 1.0), (1000.0, 1.0)]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp([]), f64::NEG_INFINITY);
    }

    proptest! {
        #[test]
        fn matches_direct_sum_and_merge(a in prop::collection::vec((-20.0f64..20.0, 0.0f64..3.0), 1..40)) {
            let direct: f64 = a.iter().map(|(x, w)| w * x.exp()).sum::<f64>().ln();
            let v = log_sum_exp(a.iter().copied());
            if direct.is_finite() {
                prop_assert!((v - direct).abs() < 1e-12 * (1.0 + direct.abs()));
            }
            let (l, r) = a.split_at(a.len() / 2);
            let mut acc = LogSumExp::new();
            l.iter().for_each(|&(x, w)| acc.add(x, w));
            let mut acc2 = LogSumExp::new();
            r.iter().for_each(|&(x, w)| acc2.add(x, w));
            acc.merge(&acc2);
            if direct.is_finite() {
                prop_assert!((acc.value() - direct).abs() < 1e-12 * (1.0 + direct.abs()));
            }
        }
    }
}
