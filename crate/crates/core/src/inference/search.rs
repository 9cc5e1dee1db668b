use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::datasets::TwoDomainDataset;
use crate::error::{Error, Result};
use crate::interval::TruncationRegion;
use crate::regression::{fit_gram, selection_halflines, GramSystem, PenaltyConfig, SelectionPattern};
use crate::transport::{basis_interval, build_problem, solve_with_cost, TransportProblem, TransportSolution};

use super::LineParametrization;

/// Consecutive sub-problems narrower than the nudge tolerated before giving up.
pub const STAGNATION_LIMIT: usize = 1000;

/// One piece of the sweep: an interval of `z` on which both the transport basis
/// (index `transport_index`) and the selection pattern stay fixed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubProblemRecord {
    pub transport_index: usize,
    pub selection_index: usize,
    pub interval: (f64, f64),
    pub active_set: Vec<usize>,
    pub signs: Vec<i8>,
    pub matches_observed: bool,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub records: Vec<SubProblemRecord>,
    pub region: TruncationRegion,
}

/// Transformed design quantities along the line for a fixed transport plan.
pub(crate) struct TransportedLine {
    pub gram: DMatrix<f64>,
    pub xa: DVector<f64>,
    pub xb: DVector<f64>,
}

impl TransportedLine {
    pub fn new(solution: &TransportSolution, features: &DMatrix<f64>, line: &LineParametrization) -> Self {
        let x_tilde = solution.apply_omega_matrix(features);
        let ya = solution.apply_omega(line.anchor());
        let yb = solution.apply_omega(line.direction());
        Self {
            gram: x_tilde.tr_mul(&x_tilde),
            xa: x_tilde.tr_mul(&ya),
            xb: x_tilde.tr_mul(&yb),
        }
    }

    pub fn system_at(&self, z: f64) -> GramSystem {
        GramSystem {
            gram: self.gram.clone(),
            xty: &self.xa + &self.xb * z,
        }
    }
}

/// Sweeps the line from the low end of its range to the high end, alternating a
/// warm-started transport solve per basis with a refit per selection pattern, and
/// collects the `z` where the active set equals `observed_active`.
pub fn divide_and_conquer(
    dataset: &TwoDomainDataset,
    line: &LineParametrization,
    penalty: &PenaltyConfig,
    observed_active: &[usize],
) -> Result<SearchOutcome> {
    let problem = build_problem(dataset);
    divide_and_conquer_with(&problem, &dataset.stacked_features(), line, penalty, observed_active)
}

pub(crate) fn divide_and_conquer_with(
    problem: &TransportProblem,
    features: &DMatrix<f64>,
    line: &LineParametrization,
    penalty: &PenaltyConfig,
    observed_active: &[usize],
) -> Result<SearchOutcome> {
    penalty.validate()?;
    if penalty.l1_weight <= 0.0 {
        return Err(Error::InvalidInput("selection region requires lambda > 0".into()));
    }
    let delta = line.nudge();
    let (z_min, z_max) = line.z_range();
    let mut records = Vec::new();
    let mut warm: Option<TransportSolution> = None;
    let mut narrow_run = 0usize;
    let mut z = z_min;
    let mut transport_index = 0;
    while z < z_max {
        let cost = problem.cost_for(&line.response_at(z));
        let solution = solve_with_cost(problem, &cost, warm.as_ref());
        let (basis_lo, basis_hi) = basis_interval(problem, &solution, line, z)?;
        let transported = TransportedLine::new(&solution, features, line);
        let mut selection_index = 0;
        loop {
            let fit = fit_gram(&transported.system_at(z), penalty)?;
            let (sel_lo, sel_hi) =
                selection_halflines(&transported.gram, &transported.xa, &transported.xb, &fit.pattern, penalty)?
                    .around(z);
            let hi = basis_hi.min(sel_hi).max(z);
            let lo = z.min(sel_lo.max(basis_lo).max(z_min));
            if hi - z < delta {
                narrow_run += 1;
                if narrow_run > STAGNATION_LIMIT {
                    return Err(Error::Stagnation { z, count: narrow_run });
                }
            } else {
                narrow_run = 0;
            }
            records.push(record(transport_index, selection_index, (lo, hi.min(z_max)), &fit.pattern, observed_active));
            selection_index += 1;
            z = hi + delta;
            if z > basis_hi || z >= z_max {
                break;
            }
        }
        warm = Some(solution);
        transport_index += 1;
    }
    let region = TruncationRegion::from_intervals(
        records.iter().filter(|r| r.matches_observed).map(|r| r.interval),
        2.0 * delta,
    )
    .clip(z_min, z_max);
    Ok(SearchOutcome { records, region })
}

fn record(
    transport_index: usize,
    selection_index: usize,
    interval: (f64, f64),
    pattern: &SelectionPattern,
    observed_active: &[usize],
) -> SubProblemRecord {
    SubProblemRecord {
        transport_index,
        selection_index,
        interval,
        active_set: pattern.active_set().to_vec(),
        signs: pattern.signs().to_vec(),
        matches_observed: pattern.active_set() == observed_active,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate_synthetic, SyntheticConfig};
    use crate::inference::{build_eta, decompose_line};
    use crate::regression::fit;
    use crate::transport::{apply_transport, solve_transport};

    fn observed_active(d: &TwoDomainDataset, penalty: &PenaltyConfig) -> Vec<usize> {
        let problem = build_problem(d);
        let sol = solve_transport(&problem, &d.stacked_response());
        let (design, omega) = apply_transport(&sol, d);
        fit(&design, &(omega * d.stacked_response()), penalty)
            .unwrap()
            .pattern
            .active_set()
            .to_vec()
    }

    #[test]
    fn records_tile_the_range_and_region_contains_observation() {
        let penalty = PenaltyConfig::lasso(2.0);
        let mut checked = 0;
        for seed in 0..10 {
            let d = generate_synthetic(&SyntheticConfig::constant(8, 5, 3, 2.0, 0.5, seed)).unwrap();
            let active = observed_active(&d, &penalty);
            if active.is_empty() {
                continue;
            }
            let eta = build_eta(&d, &active, active[0]).unwrap();
            let line = decompose_line(&d, &eta).unwrap();
            let out = divide_and_conquer(&d, &line, &penalty, &active).unwrap();
            let (z_min, z_max) = line.z_range();
            let delta = line.nudge();
            assert_eq!(out.records[0].interval.0, z_min);
            assert_eq!(out.records.last().unwrap().interval.1, z_max);
            for w in out.records.windows(2) {
                assert!(w[1].interval.0 <= w[0].interval.1 + delta * 1.0001);
            }
            assert!(out.region.contains(line.observed_statistic(), 1e-9));
            checked += 1;
        }
        assert!(checked >= 5);
    }

    #[test]
    fn record_patterns_match_refits_at_midpoints() {
        let penalty = PenaltyConfig::elastic_net(1.5, 1.0);
        let d = generate_synthetic(&SyntheticConfig::constant(6, 4, 3, 2.0, 0.0, 3)).unwrap();
        let eta = build_eta(&d, &[0, 1, 2], 0).unwrap();
        let line = decompose_line(&d, &eta).unwrap();
        let out = divide_and_conquer(&d, &line, &penalty, &[0]).unwrap();
        let problem = build_problem(&d);
        for r in &out.records {
            let (lo, hi) = r.interval;
            if hi - lo < 1e-4 {
                continue;
            }
            let z = 0.5 * (lo + hi);
            let y = line.response_at(z);
            let sol = solve_transport(&problem, &y);
            let (design, omega) = apply_transport(&sol, &d);
            let f = fit(&design, &(omega * y), &penalty).unwrap();
            assert_eq!(f.pattern.active_set(), &r.active_set[..], "at z = {z}");
        }
    }

    #[test]
    fn zero_lambda_rejected() {
        let d = generate_synthetic(&SyntheticConfig::constant(4, 3, 2, 2.0, 0.0, 1)).unwrap();
        let eta = build_eta(&d, &[0], 0).unwrap();
        let line = decompose_line(&d, &eta).unwrap();
        assert!(divide_and_conquer(&d, &line, &PenaltyConfig::lasso(0.0), &[0]).is_err());
    }
}
