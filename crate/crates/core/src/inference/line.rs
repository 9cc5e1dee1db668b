use nalgebra::{DVector, Cholesky};

use crate::datasets::TwoDomainDataset;
use crate::error::{Error, Result};

/// Half-width of the sweep range in units of the statistic's standard deviation.
pub const Z_RANGE_SDS: f64 = 20.0;

/// The data line `Y(z) = a + b z` through the observed responses, with `z` the
/// test statistic `ηᵀY` and `a` the nuisance component held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct LineParametrization {
    anchor: DVector<f64>,
    direction: DVector<f64>,
    statistic_sd: f64,
    observed_statistic: f64,
    eta: DVector<f64>,
}

impl LineParametrization {
    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }

    pub fn direction(&self) -> &DVector<f64> {
        &self.direction
    }

    pub fn statistic_sd(&self) -> f64 {
        self.statistic_sd
    }

    pub fn observed_statistic(&self) -> f64 {
        self.observed_statistic
    }

    pub fn eta(&self) -> &DVector<f64> {
        &self.eta
    }

    pub fn response_at(&self, z: f64) -> DVector<f64> {
        &self.anchor + &self.direction * z
    }

    /// `[-20σ, 20σ]`, widened when the observed statistic falls outside it.
    pub fn z_range(&self) -> (f64, f64) {
        let mut half = Z_RANGE_SDS * self.statistic_sd;
        if self.observed_statistic.abs() >= half {
            half = self.observed_statistic.abs() + Z_RANGE_SDS * self.statistic_sd;
        }
        (-half, half)
    }

    /// Advance used by the sweep to step past a sub-problem boundary.
    pub fn nudge(&self) -> f64 {
        1e-6 * self.statistic_sd
    }
}

/// Direction `η_j = (0; X^t_M (X^t_Mᵀ X^t_M)⁻¹ e_j)` of the target least-squares
/// coefficient of `feature` within `active_set`.
pub fn build_eta(dataset: &TwoDomainDataset, active_set: &[usize], feature: usize) -> Result<DVector<f64>> {
    let position = active_set
        .iter()
        .position(|&j| j == feature)
        .ok_or_else(|| Error::InvalidInput(format!("feature {feature} is not in the active set")))?;
    if let Some(&bad) = active_set.iter().find(|&&j| j >= dataset.n_features()) {
        return Err(Error::InvalidInput(format!("feature index {bad} out of range")));
    }
    let xt = dataset.target_features().select_columns(active_set);
    let gram = xt.tr_mul(&xt);
    let scale = gram.diagonal().amax().max(f64::MIN_POSITIVE);
    let chol = Cholesky::new(gram)
        .filter(|c| {
            let d = c.l().diagonal().min();
            d * d > 1e-12 * scale
        })
        .ok_or_else(|| Error::Singular(format!("target design restricted to {active_set:?} is rank deficient")))?;
    let mut e = DVector::zeros(active_set.len());
    e[position] = 1.0;
    let w = chol.solve(&e);
    let target_part = xt * w;
    let n_s = dataset.n_source();
    let mut eta = DVector::zeros(n_s + dataset.n_target());
    eta.rows_mut(n_s, dataset.n_target()).copy_from(&target_part);
    Ok(eta)
}

/// Splits the observed responses into the statistic `ηᵀY` and the nuisance part
/// `(I − b ηᵀ) Y` with `b = Ση / ηᵀΣη`.
pub fn decompose_line(dataset: &TwoDomainDataset, eta: &DVector<f64>) -> Result<LineParametrization> {
    let n = dataset.n_source() + dataset.n_target();
    if eta.len() != n {
        return Err(Error::DimensionMismatch(format!("eta has length {}, expected {n}", eta.len())));
    }
    let sigma_eta = dataset.apply_cov(eta);
    let variance = eta.dot(&sigma_eta);
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::DegenerateVariance(variance));
    }
    let direction = sigma_eta / variance;
    let y = dataset.stacked_response();
    let observed_statistic = eta.dot(&y);
    let anchor = &y - &direction * observed_statistic;
    Ok(LineParametrization {
        anchor,
        direction,
        statistic_sd: variance.sqrt(),
        observed_statistic,
        eta: eta.clone(),
    })
}
