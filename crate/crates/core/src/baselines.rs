//! Comparison procedures that ignore or sidestep the selection event.

use nalgebra::{Cholesky, DVector};
use rand::seq::SliceRandom;

use crate::datasets::TwoDomainDataset;
use crate::error::{Error, Result};
use crate::inference::{observe, LineParametrization};
use crate::normal;
use crate::regression::PenaltyConfig;
use crate::seed;

/// Two-sided p-value of the statistic treated as untruncated normal.
pub fn naive_p(line: &LineParametrization) -> f64 {
    naive_p_raw(line.observed_statistic(), line.statistic_sd())
}

pub fn naive_p_raw(statistic: f64, sd: f64) -> f64 {
    (2.0 * normal::sf(statistic.abs() / sd)).min(1.0)
}

/// Naive p-value multiplied by the number of possible feature subsets `2^p`.
pub fn bonferroni_p(naive: f64, n_features: usize) -> f64 {
    let factor = 2f64.powi(n_features.min(1023) as i32);
    (naive * factor).min(1.0)
}

/// Outcome of selecting on one half of each domain and testing on the rest.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub selected: Vec<usize>,
    pub first_source_rows: Vec<usize>,
    pub first_target_rows: Vec<usize>,
    pub second_target_rows: Vec<usize>,
    /// `(feature, p-value)` for each selected feature; `None` when the held-out
    /// target rows cannot identify the coefficient.
    pub p_values: Vec<(usize, Option<f64>)>,
}

impl SplitOutcome {
    /// p-value for `feature`, or 1 when the split selection did not pick it.
    pub fn p_value_for(&self, feature: usize) -> f64 {
        self.p_values
            .iter()
            .find(|(j, _)| *j == feature)
            .and_then(|(_, p)| *p)
            .unwrap_or(1.0)
    }
}

/// Random half split of both domains: domain adaptation and selection on the first
/// halves, least-squares tests on the second target half.
pub fn data_split_p(dataset: &TwoDomainDataset, penalty: &PenaltyConfig, split_seed: u64) -> Result<SplitOutcome> {
    let (n_s, n_t) = (dataset.n_source(), dataset.n_target());
    if n_s < 2 || n_t < 2 {
        return Err(Error::InvalidInput("data splitting needs at least two rows per domain".into()));
    }
    let mut rng = seed::rng(split_seed);
    let mut source: Vec<usize> = (0..n_s).collect();
    let mut target: Vec<usize> = (0..n_t).collect();
    source.shuffle(&mut rng);
    target.shuffle(&mut rng);
    let first_source_rows: Vec<usize> = source[..n_s / 2].to_vec();
    let first_target_rows: Vec<usize> = target[..n_t / 2].to_vec();
    let second_target_rows: Vec<usize> = target[n_t / 2..].to_vec();

    let selection_half = dataset.select_rows(&first_source_rows, &first_target_rows)?;
    let selected = observe(&selection_half, penalty)?.active_set().to_vec();

    let x2 = dataset.target_features().select_rows(&second_target_rows).select_columns(&selected);
    let y2 = dataset.target_response().select_rows(&second_target_rows);
    let cov2 = dataset.target_cov().select_rows(&second_target_rows).select_columns(&second_target_rows);
    let p_values = if selected.is_empty() {
        Vec::new()
    } else {
        let gram = x2.tr_mul(&x2);
        let scale = gram.diagonal().amax().max(f64::MIN_POSITIVE);
        let chol = Cholesky::new(gram).filter(|c| {
            let d = c.l().diagonal().min();
            d * d > 1e-12 * scale
        });
        selected
            .iter()
            .enumerate()
            .map(|(k, &j)| {
                let p = chol.as_ref().and_then(|c| {
                    let mut e = DVector::zeros(selected.len());
                    e[k] = 1.0;
                    let eta = &x2 * c.solve(&e);
                    let var = eta.dot(&(&cov2 * &eta));
                    (var > 0.0).then(|| naive_p_raw(eta.dot(&y2), var.sqrt()))
                });
                (j, p)
            })
            .collect()
    };
    Ok(SplitOutcome {
        selected,
        first_source_rows,
        first_target_rows,
        second_target_rows,
        p_values,
    })
}
