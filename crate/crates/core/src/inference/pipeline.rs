use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::datasets::TwoDomainDataset;
use crate::error::{Error, Result};
use crate::interval::TruncationRegion;
use crate::regression::{fit, selection_halflines, FitResult, PenaltyConfig};
use crate::transport::{apply_transport, basis_interval, build_problem, solve_transport, TransportProblem, TransportSolution};

use super::search::{divide_and_conquer_with, TransportedLine};
use super::{build_eta, decompose_line, truncated_two_sided_p, LineParametrization};

/// Domain adaptation and feature selection on the observed data.
#[derive(Debug, Clone)]
pub struct ObservedSelection {
    pub problem: TransportProblem,
    pub features: DMatrix<f64>,
    pub solution: TransportSolution,
    pub fit: FitResult,
}

impl ObservedSelection {
    pub fn active_set(&self) -> &[usize] {
        self.fit.pattern.active_set()
    }
}

pub fn observe(dataset: &TwoDomainDataset, penalty: &PenaltyConfig) -> Result<ObservedSelection> {
    penalty.validate()?;
    let problem = build_problem(dataset);
    let y = dataset.stacked_response();
    let solution = solve_transport(&problem, &y);
    let (design, _) = apply_transport(&solution, dataset);
    let fit = fit(&design, &solution.apply_omega(&y), penalty)?;
    Ok(ObservedSelection {
        problem,
        features: dataset.stacked_features(),
        solution,
        fit,
    })
}

/// Selective inference output for one selected feature.
#[derive(Debug, Clone, Serialize)]
pub struct FeatureInference {
    pub feature: usize,
    pub statistic: f64,
    pub statistic_sd: f64,
    pub p_value: f64,
    pub region: TruncationRegion,
    /// Number of sub-problems visited along the line.
    pub interval_count: usize,
}

fn line_for(dataset: &TwoDomainDataset, observed: &ObservedSelection, feature: usize) -> Result<LineParametrization> {
    let eta = build_eta(dataset, observed.active_set(), feature)?;
    decompose_line(dataset, &eta)
}

/// Full-line truncation region and p-value for one feature.
pub fn infer_feature(
    dataset: &TwoDomainDataset,
    penalty: &PenaltyConfig,
    observed: &ObservedSelection,
    feature: usize,
) -> Result<FeatureInference> {
    let line = line_for(dataset, observed, feature)?;
    let outcome = divide_and_conquer_with(&observed.problem, &observed.features, &line, penalty, observed.active_set())?;
    let p_value = truncated_two_sided_p(&line, &outcome.region)?;
    Ok(FeatureInference {
        feature,
        statistic: line.observed_statistic(),
        statistic_sd: line.statistic_sd(),
        p_value,
        region: outcome.region,
        interval_count: outcome.records.len(),
    })
}

/// Over-conditioned variant: the region fixes the observed transport basis and
/// the observed active set with signs.
pub fn infer_feature_oc(
    dataset: &TwoDomainDataset,
    penalty: &PenaltyConfig,
    observed: &ObservedSelection,
    feature: usize,
) -> Result<FeatureInference> {
    if penalty.l1_weight <= 0.0 {
        return Err(Error::InvalidInput("selection region requires lambda > 0".into()));
    }
    let line = line_for(dataset, observed, feature)?;
    let z = line.observed_statistic();
    let (b_lo, b_hi) = basis_interval(&observed.problem, &observed.solution, &line, z)?;
    let transported = TransportedLine::new(&observed.solution, &observed.features, &line);
    let (s_lo, s_hi) =
        selection_halflines(&transported.gram, &transported.xa, &transported.xb, &observed.fit.pattern, penalty)?.around(z);
    let (z_min, z_max) = line.z_range();
    let region = TruncationRegion::single(b_lo.max(s_lo).max(z_min), b_hi.min(s_hi).min(z_max));
    let p_value = truncated_two_sided_p(&line, &region)?;
    Ok(FeatureInference {
        feature,
        statistic: z,
        statistic_sd: line.statistic_sd(),
        p_value,
        region,
        interval_count: 1,
    })
}

/// Selective p-values for every feature the observed pipeline selects, in
/// ascending feature order.
pub fn sfs_da(dataset: &TwoDomainDataset, penalty: &PenaltyConfig) -> Result<Vec<FeatureInference>> {
    let observed = observe(dataset, penalty)?;
    observed
        .active_set()
        .par_iter()
        .map(|&j| infer_feature(dataset, penalty, &observed, j))
        .collect()
}

pub fn sfs_da_oc(dataset: &TwoDomainDataset, penalty: &PenaltyConfig) -> Result<Vec<FeatureInference>> {
    let observed = observe(dataset, penalty)?;
    observed
        .active_set()
        .iter()
        .map(|&j| infer_feature_oc(dataset, penalty, &observed, j))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate_synthetic, SyntheticConfig};

    #[test]
    fn oc_region_is_inside_full_region() {
        let penalty = PenaltyConfig::lasso(3.0);
        let mut seen = 0;
        for seed in 0..8 {
            let d = generate_synthetic(&SyntheticConfig::constant(10, 6, 3, 2.0, 0.0, seed)).unwrap();
            let observed = observe(&d, &penalty).unwrap();
            for &j in observed.active_set() {
                let full = infer_feature(&d, &penalty, &observed, j).unwrap();
                let oc = infer_feature_oc(&d, &penalty, &observed, j).unwrap();
                let tol = 1e-6 * full.statistic_sd;
                assert!(oc.region.is_subset_of(&full.region, tol), "{:?} vs {:?}", oc.region, full.region);
                assert!(oc.region.contains(oc.statistic, 1e-12));
                assert!((0.0..=1.0).contains(&full.p_value));
                seen += 1;
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn features_reported_in_selection_order() {
        let penalty = PenaltyConfig::lasso(1.0);
        let d = generate_synthetic(&SyntheticConfig::constant(12, 8, 4, 2.0, 0.0, 9)).unwrap();
        let out = sfs_da(&d, &penalty).unwrap();
        let observed = observe(&d, &penalty).unwrap();
        let feats: Vec<usize> = out.iter().map(|f| f.feature).collect();
        assert_eq!(feats, observed.active_set());
    }
}
