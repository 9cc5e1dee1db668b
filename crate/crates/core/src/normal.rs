//! Standard normal tail probabilities evaluated in log space.

use libm::erfc;
use std::f64::consts::{LN_2, SQRT_2};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln P(N(0,1) >= x)`.
pub fn log_sf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    if x < 30.0 {
        (0.5 * erfc(x / SQRT_2)).ln()
    } else {
        // Mills-ratio asymptotic series; the first omitted term is below 1e-13 here.
        let x2 = x * x;
        let inv = 1.0 / x2;
        let series = 1.0 - inv * (1.0 - 3.0 * inv * (1.0 - 5.0 * inv * (1.0 - 7.0 * inv)));
        -0.5 * x2 - x.ln() - LN_SQRT_2PI + series.ln()
    }
}

/// `P(N(0,1) >= x)`.
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// `P(N(0,1) <= x)`.
pub fn cdf(x: f64) -> f64 {
    sf(-x)
}

/// `ln(exp(a) - exp(b))` for `a >= b`.
fn log_diff_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    let d = b - a;
    if d > -LN_2 {
        a + (-d.exp_m1()).ln()
    } else {
        a + (-d.exp()).ln_1p()
    }
}

/// `ln P(lo <= N(0,1) <= hi)`, accurate in both tails.
pub fn log_interval_mass(lo: f64, hi: f64) -> f64 {
    if !(lo < hi) {
        return f64::NEG_INFINITY;
    }
    if lo >= 0.0 {
        log_diff_exp(log_sf(lo), log_sf(hi))
    } else if hi <= 0.0 {
        log_diff_exp(log_sf(-hi), log_sf(-lo))
    } else {
        // straddles zero: mass >= min(P(0 <= Z <= hi), P(lo <= Z <= 0)), no cancellation
        (1.0 - sf(hi) - sf(-lo)).ln()
    }
}

/// `ln sum exp(v)` over a slice, `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
