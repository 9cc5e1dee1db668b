use crate::error::{Error, Result};
use crate::interval::TruncationRegion;
use crate::normal::{log_interval_mass, log_sum_exp};

use super::LineParametrization;

/// Regions whose null mass falls below `exp(LOG_MASS_FLOOR)` are rejected.
const LOG_MASS_FLOOR: f64 = -690.775_527_898_213_7; // ln(1e-300)

/// `P(|Z| >= |z_obs| | Z ∈ region)` for `Z ~ N(0, sigma²)`.
pub fn truncated_two_sided_p_raw(region: &TruncationRegion, sigma: f64, z_obs: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::DegenerateVariance(sigma * sigma));
    }
    if region.is_empty() {
        return Err(Error::DegenerateMass(f64::NEG_INFINITY));
    }
    let cut = z_obs.abs() / sigma;
    let mut den = Vec::with_capacity(region.len());
    let mut num = Vec::with_capacity(2 * region.len());
    for &(lo, hi) in region.intervals() {
        let (lo, hi) = (lo / sigma, hi / sigma);
        den.push(log_interval_mass(lo, hi));
        if lo < -cut {
            num.push(log_interval_mass(lo, hi.min(-cut)));
        }
        if hi > cut {
            num.push(log_interval_mass(lo.max(cut), hi));
        }
    }
    let log_den = log_sum_exp(&den);
    if !(log_den >= LOG_MASS_FLOOR) {
        return Err(Error::DegenerateMass(log_den));
    }
    let log_num = log_sum_exp(&num);
    Ok((log_num - log_den).exp().clamp(0.0, 1.0))
}

/// Selective two-sided p-value of the line's observed statistic given the region.
pub fn truncated_two_sided_p(line: &LineParametrization, region: &TruncationRegion) -> Result<f64> {
    truncated_two_sided_p_raw(region, line.statistic_sd(), line.observed_statistic())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal;
    use crate::seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn untruncated_center_is_one() {
        let r = TruncationRegion::single(-20.0, 20.0);
        assert!((truncated_two_sided_p_raw(&r, 1.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn untruncated_matches_two_sided_normal() {
        let r = TruncationRegion::single(-20.0, 20.0);
        let p = truncated_two_sided_p_raw(&r, 1.0, 1.959_964).unwrap();
        assert!((p - 0.05).abs() < 1e-6, "{p}");
        // scale invariance
        let r3 = TruncationRegion::single(-60.0, 60.0);
        let p3 = truncated_two_sided_p_raw(&r3, 3.0, 3.0 * 1.959_964).unwrap();
        assert!((p - p3).abs() < 1e-14);
    }

    #[test]
    fn one_sided_interval_matches_monte_carlo() {
        // region [1, 3], z_obs = 2: p = P(Z >= 2 | 1 <= Z <= 3)
        let r = TruncationRegion::single(1.0, 3.0);
        let p = truncated_two_sided_p_raw(&r, 1.0, 2.0).unwrap();
        let mut rng = seed::rng(12345);
        let draws = 10_000_000u64;
        let (mut inside, mut extreme) = (0u64, 0u64);
        for _ in 0..draws {
            let z: f64 = rng.sample(StandardNormal);
            if (1.0..=3.0).contains(&z) {
                inside += 1;
                if z >= 2.0 {
                    extreme += 1;
                }
            }
        }
        let est = extreme as f64 / inside as f64;
        let se = (est * (1.0 - est) / inside as f64).sqrt();
        assert!((p - est).abs() <= 3.0 * se, "p {p} mc {est} se {se}");
        let exact = (normal::sf(2.0) - normal::sf(3.0)) / (normal::sf(1.0) - normal::sf(3.0));
        assert!((p - exact).abs() < 1e-14);
    }

    #[test]
    fn far_tail_region_is_stable() {
        // Both ends deep in the tail where 1 - Φ underflows relative to 1.
        let r = TruncationRegion::single(15.0, 19.0);
        let p = truncated_two_sided_p_raw(&r, 1.0, 15.1).unwrap();
        assert!(p > 0.0 && p < 1.0);
        // conditional on Z >= 15 the overshoot is ~ Exp(rate 15): P(Z >= 15.1) ≈ exp(-1.5)
        assert!((p - (-1.5f64 - 0.005).exp()).abs() < 0.02, "{p}");
    }

    #[test]
    fn monotone_in_observed_magnitude() {
        let r = TruncationRegion::from_intervals([(-4.0, -1.0), (0.5, 2.0), (3.0, 6.0)], 0.0);
        let mut last = 1.0;
        for k in 0..60 {
            let z = k as f64 * 0.1;
            let p = truncated_two_sided_p_raw(&r, 1.3, z).unwrap();
            assert!(p <= last + 1e-15);
            assert!((0.0..=1.0).contains(&p));
            last = p;
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert!(truncated_two_sided_p_raw(&TruncationRegion::empty(), 1.0, 0.0).is_err());
        assert!(truncated_two_sided_p_raw(&TruncationRegion::single(-1.0, 1.0), 0.0, 0.0).is_err());
        // mass of [40, 41] is about exp(-805), below the floor
        let far = TruncationRegion::single(40.0, 41.0);
        assert!(matches!(truncated_two_sided_p_raw(&far, 1.0, 40.5), Err(Error::DegenerateMass(_))));
    }
}
