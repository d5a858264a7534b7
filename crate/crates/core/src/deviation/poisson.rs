//! Poisson tail probabilities in log space.
//!
//! `P(X <= k)` for `X ~ Poisson(lambda)` is the upper regularized incomplete
//! gamma function `Q(k + 1, lambda)`. Both tails are evaluated as a log-space
//! anchor (the log pmf at the tail's boundary, from Loader's saddle-point
//! expansion) times a ratio recurrence summed away from the mode, so the tail
//! that is small is never obtained by subtraction from one.

use std::f64::consts::PI;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Relative size at which a recurrence term no longer changes the sum.
const SUM_EPS: f64 = 1e-17;

/// `ln(n!) - [(n + 1/2) ln n - n + ln sqrt(2 pi)]`, the Stirling remainder.
fn stirlerr(n: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;

    if n <= 15 {
        let nf = n as f64;
        let ln_fact: f64 = (2..=n).map(|i| (i as f64).ln()).sum();
        return ln_fact - (nf + 0.5) * nf.ln() + nf - LN_SQRT_2PI;
    }
    let n = n as f64;
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x / np) + np - x`, computed without cancellation
/// when `x` is close to `np`.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// `ln P(X = k)` for `X ~ Poisson(lambda)`.
pub fn ln_pmf(k: u64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if k == 0 {
        return -lambda;
    }
    let kf = k as f64;
    -stirlerr(k) - bd0(kf, lambda) - 0.5 * (2.0 * PI * kf).ln()
}

/// `ln(1 - e^x)` for `x <= 0`.
fn ln_one_minus_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// Log of both tails at `k`: `ln P(X <= k)` and `ln P(X > k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogTails {
    pub ln_cdf: f64,
    pub ln_sf: f64,
}

/// Both tails of `Poisson(lambda)` at `k`. `lambda` must be finite and
/// non-negative.
pub fn log_tails(k: u64, lambda: f64) -> LogTails {
    debug_assert!(lambda >= 0.0 && lambda.is_finite());
    if lambda == 0.0 {
        return LogTails {
            ln_cdf: 0.0,
            ln_sf: f64::NEG_INFINITY,
        };
    }
    let kf = k as f64;
    if kf < lambda {
        // P(X <= k) = pmf(k) * sum_j prod_{i<j} (k - i) / lambda
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut i = k;
        while i > 0 {
            term *= i as f64 / lambda;
            sum += term;
            if term < SUM_EPS * sum {
                break;
            }
            i -= 1;
        }
        let ln_cdf = (ln_pmf(k, lambda) + sum.ln()).min(0.0);
        LogTails {
            ln_cdf,
            ln_sf: ln_one_minus_exp(ln_cdf),
        }
    } else {
        // P(X > k) = pmf(k + 1) * sum_j prod_{i<j} lambda / (k + 2 + i)
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut next = kf + 2.0;
        loop {
            term *= lambda / next;
            sum += term;
            if term < SUM_EPS * sum {
                break;
            }
            next += 1.0;
        }
        let ln_sf = (ln_pmf(k + 1, lambda) + sum.ln()).min(0.0);
        LogTails {
            ln_cdf: ln_one_minus_exp(ln_sf),
            ln_sf,
        }
    }
}
