//! Lasso and elastic-net fitting by cyclic coordinate descent, and the set of
//! responses along a line that reproduce a given active set and sign vector.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::LineParametrization;
use crate::interval::{HalfLines, TruncationRegion};

const MAX_SWEEPS: usize = 100_000;
const SWEEP_TOL: f64 = 1e-12;
/// Coefficients with magnitude at or below this are snapped to zero.
pub const ZERO_THRESHOLD: f64 = 1e-10;
pub const KKT_TOL: f64 = 1e-6;

/// Objective `½‖y − Xβ‖² + λ‖β‖₁ + (γ/2)‖β‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PenaltyConfig {
    pub l1_weight: f64,
    pub l2_weight: f64,
}

impl PenaltyConfig {
    pub fn lasso(l1_weight: f64) -> Self {
        Self {
            l1_weight,
            l2_weight: 0.0,
        }
    }

    pub fn elastic_net(l1_weight: f64, l2_weight: f64) -> Self {
        Self {
            l1_weight,
            l2_weight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !ok(self.l1_weight) || !ok(self.l2_weight) {
            return Err(Error::InvalidInput(format!(
                "penalty weights must be finite and nonnegative (lambda = {}, gamma = {})",
                self.l1_weight, self.l2_weight
            )));
        }
        Ok(())
    }
}

/// Active set and coefficient signs of a fit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct SelectionPattern {
    active_set: Vec<usize>,
    signs: Vec<i8>,
}

impl SelectionPattern {
    pub fn new(active_set: Vec<usize>, signs: Vec<i8>) -> Result<Self> {
        if active_set.len() != signs.len() {
            return Err(Error::InvalidInput("active set and signs differ in length".into()));
        }
        if active_set.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("active set must be strictly increasing".into()));
        }
        if signs.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::InvalidInput("signs must be +1 or -1".into()));
        }
        Ok(Self { active_set, signs })
    }

    fn from_coefficients(beta: &DVector<f64>) -> Self {
        let mut active_set = Vec::new();
        let mut signs = Vec::new();
        for (j, b) in beta.iter().enumerate() {
            if *b != 0.0 {
                active_set.push(j);
                signs.push(if *b > 0.0 { 1 } else { -1 });
            }
        }
        Self { active_set, signs }
    }

    pub fn active_set(&self) -> &[usize] {
        &self.active_set
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn is_empty(&self) -> bool {
        self.active_set.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub coefficients: DVector<f64>,
    pub pattern: SelectionPattern,
    /// Largest violation of the stationarity / subgradient conditions.
    pub kkt_residual: f64,
    /// Pure Lasso with a singular active Gram matrix: the minimizer is not unique.
    pub non_unique: bool,
    pub sweeps: usize,
}

/// Sufficient statistics `XᵀX` and `Xᵀy` of a least-squares problem.
#[derive(Debug, Clone)]
pub(crate) struct GramSystem {
    pub gram: DMatrix<f64>,
    pub xty: DVector<f64>,
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
}

fn active_cholesky(gram: &DMatrix<f64>, active: &[usize], gamma: f64) -> Option<Cholesky<f64, Dyn>> {
    let mut a = submatrix(gram, active, active);
    for k in 0..active.len() {
        a[(k, k)] += gamma;
    }
    let scale = a.diagonal().amax().max(f64::MIN_POSITIVE);
    let chol = Cholesky::new(a)?;
    // Reject numerically singular factors, not only indefinite ones.
    let min_pivot = chol.l().diagonal().min();
    (min_pivot * min_pivot > 1e-13 * scale).then_some(chol)
}

fn kkt_residual(sys: &GramSystem, beta: &DVector<f64>, penalty: &PenaltyConfig) -> f64 {
    let corr = &sys.xty - &sys.gram * beta;
    let (lambda, gamma) = (penalty.l1_weight, penalty.l2_weight);
    corr.iter()
        .zip(beta.iter())
        .map(|(c, b)| {
            if *b != 0.0 {
                (c - gamma * b - lambda * b.signum()).abs()
            } else {
                (c.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Exact solution on the current support; accepted only when it keeps the
/// same signs and satisfies the inactive subgradient bounds.
fn polish(sys: &GramSystem, beta: &DVector<f64>, penalty: &PenaltyConfig) -> Option<DVector<f64>> {
    let pattern = SelectionPattern::from_coefficients(beta);
    if pattern.is_empty() {
        return None;
    }
    let active = pattern.active_set();
    let chol = active_cholesky(&sys.gram, active, penalty.l2_weight)?;
    let rhs = DVector::from_fn(active.len(), |k, _| {
        sys.xty[active[k]] - penalty.l1_weight * f64::from(pattern.signs()[k])
    });
    let sol = chol.solve(&rhs);
    let mut out = DVector::zeros(beta.len());
    for (k, &j) in active.iter().enumerate() {
        if sol[k] * f64::from(pattern.signs()[k]) <= ZERO_THRESHOLD {
            return None;
        }
        out[j] = sol[k];
    }
    let corr = &sys.xty - &sys.gram * &out;
    let slack = 1e-9 * (1.0 + penalty.l1_weight);
    let inactive_ok = (0..beta.len())
        .filter(|j| out[*j] == 0.0)
        .all(|j| corr[j].abs() <= penalty.l1_weight + slack);
    inactive_ok.then_some(out)
}

pub(crate) fn fit_gram(sys: &GramSystem, penalty: &PenaltyConfig) -> Result<FitResult> {
    penalty.validate()?;
    let p = sys.xty.len();
    let (lambda, gamma) = (penalty.l1_weight, penalty.l2_weight);
    let mut beta = DVector::<f64>::zeros(p);
    // corr = Xᵀ(y − Xβ)
    let mut corr = sys.xty.clone();
    let mut sweeps = 0;
    let mut last_change = f64::INFINITY;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for j in 0..p {
            let denom = sys.gram[(j, j)] + gamma;
            if denom <= 0.0 {
                continue;
            }
            let old = beta[j];
            let rho = corr[j] + sys.gram[(j, j)] * old;
            let new = soft_threshold(rho, lambda) / denom;
            let delta = new - old;
            if delta != 0.0 {
                beta[j] = new;
                corr.axpy(-delta, &sys.gram.column(j), 1.0);
                max_change = max_change.max(delta.abs());
            }
        }
        last_change = max_change;
        if max_change <= SWEEP_TOL {
            break;
        }
    }
    if last_change > SWEEP_TOL {
        return Err(Error::NotConverged {
            sweeps,
            residual: last_change,
        });
    }
    beta.apply(|b| {
        if b.abs() <= ZERO_THRESHOLD {
            *b = 0.0
        }
    });
    if let Some(polished) = polish(sys, &beta, penalty) {
        beta = polished;
    }
    let pattern = SelectionPattern::from_coefficients(&beta);
    let kkt = kkt_residual(sys, &beta, penalty);
    if kkt > KKT_TOL {
        return Err(Error::NotConverged {
            sweeps,
            residual: kkt,
        });
    }
    let non_unique = gamma == 0.0
        && !pattern.is_empty()
        && active_cholesky(&sys.gram, pattern.active_set(), 0.0).is_none();
    Ok(FitResult {
        coefficients: beta,
        pattern,
        kkt_residual: kkt,
        non_unique,
        sweeps,
    })
}

/// Minimizes `½‖y − Xβ‖² + λ‖β‖₁ + (γ/2)‖β‖²`.
pub fn fit(design: &DMatrix<f64>, response: &DVector<f64>, penalty: &PenaltyConfig) -> Result<FitResult> {
    if design.nrows() != response.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows, response has {}",
            design.nrows(),
            response.len()
        )));
    }
    let sys = GramSystem {
        gram: design.tr_mul(design),
        xty: design.tr_mul(response),
    };
    fit_gram(&sys, penalty)
}

/// KKT inequalities of a fixed active set and sign vector, as half-lines in `z`
/// where the transformed response is `ya + yb z` and `xa = X̃ᵀ ya`, `xb = X̃ᵀ yb`.
pub(crate) fn selection_halflines(
    gram: &DMatrix<f64>,
    xa: &DVector<f64>,
    xb: &DVector<f64>,
    pattern: &SelectionPattern,
    penalty: &PenaltyConfig,
) -> Result<HalfLines> {
    penalty.validate()?;
    let (lambda, gamma) = (penalty.l1_weight, penalty.l2_weight);
    if lambda <= 0.0 {
        return Err(Error::InvalidInput(
            "selection region requires lambda > 0".into(),
        ));
    }
    let p = xa.len();
    let active = pattern.active_set();
    let mut lines = HalfLines::new();
    let (beta0, beta1) = if active.is_empty() {
        (DVector::zeros(0), DVector::zeros(0))
    } else {
        let chol = active_cholesky(gram, active, gamma).ok_or_else(|| {
            Error::Singular(format!("active Gram matrix for {active:?} is singular"))
        })?;
        let rhs0 = DVector::from_fn(active.len(), |k, _| {
            xa[active[k]] - lambda * f64::from(pattern.signs()[k])
        });
        let rhs1 = DVector::from_fn(active.len(), |k, _| xb[active[k]]);
        (chol.solve(&rhs0), chol.solve(&rhs1))
    };
    // sign conditions: s_k β_k(z) >= 0
    for (k, s) in pattern.signs().iter().enumerate() {
        let s = f64::from(*s);
        lines.add(s * beta0[k], s * beta1[k]);
    }
    // dual feasibility: |x_jᵀ(ỹ(z) − X̃_M β_M(z))| <= λ
    let mut is_active = vec![false; p];
    for &j in active {
        is_active[j] = true;
    }
    for j in (0..p).filter(|j| !is_active[*j]) {
        let mut c0 = xa[j];
        let mut c1 = xb[j];
        for (k, &m) in active.iter().enumerate() {
            c0 -= gram[(j, m)] * beta0[k];
            c1 -= gram[(j, m)] * beta1[k];
        }
        lines.add(lambda - c0, -c1);
        lines.add(lambda + c0, c1);
    }
    Ok(lines)
}

/// Set of `z` in the sweep range for which fitting on `Ω(a + b z)` with design
/// `Ω X` reproduces `pattern` (active set and signs).
pub fn selection_region(
    design: &DMatrix<f64>,
    transform: &DMatrix<f64>,
    line: &LineParametrization,
    pattern: &SelectionPattern,
    penalty: &PenaltyConfig,
) -> Result<TruncationRegion> {
    let x_tilde = transform * design;
    let ya = transform * line.anchor();
    let yb = transform * line.direction();
    let gram = x_tilde.tr_mul(&x_tilde);
    let lines = selection_halflines(&gram, &x_tilde.tr_mul(&ya), &x_tilde.tr_mul(&yb), pattern, penalty)?;
    let (lo, hi) = lines.interval();
    let (z_min, z_max) = line.z_range();
    Ok(TruncationRegion::single(lo.max(z_min), hi.min(z_max)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(rows: usize, cols: usize, s: u64) -> DMatrix<f64> {
        let mut rng = seed::rng(s);
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn large_lambda_gives_zero() {
        let x = random_matrix(20, 4, 1);
        let y = DVector::from_fn(20, |i, _| i as f64 * 0.1 - 1.0);
        let lam = x.tr_mul(&y).amax();
        let fit = fit(&x, &y, &PenaltyConfig::lasso(lam)).unwrap();
        assert!(fit.pattern.is_empty());
        assert_eq!(fit.coefficients, DVector::zeros(4));
    }

    #[test]
    fn orthonormal_design_soft_thresholds() {
        let q = random_matrix(12, 4, 2).qr().q();
        let y = random_matrix(12, 1, 3).column(0).into_owned() * 3.0;
        let lam = 0.8;
        let fit = fit(&q, &y, &PenaltyConfig::lasso(lam)).unwrap();
        let xty = q.tr_mul(&y);
        for j in 0..4 {
            let expected = soft_threshold(xty[j], lam);
            assert!((fit.coefficients[j] - expected).abs() < 1e-10, "{j}");
        }
    }

    #[test]
    fn zero_penalty_is_least_squares() {
        let x = random_matrix(30, 5, 4);
        let y = random_matrix(30, 1, 5).column(0).into_owned();
        let fit = fit(&x, &y, &PenaltyConfig::lasso(0.0)).unwrap();
        let ls = (x.tr_mul(&x)).lu().solve(&x.tr_mul(&y)).unwrap();
        assert!((fit.coefficients - ls).amax() < 1e-8);
    }

    #[test]
    fn duplicate_columns_flag_non_uniqueness() {
        let mut x = random_matrix(15, 3, 6);
        let c0 = x.column(0).into_owned();
        x.set_column(1, &c0);
        let y = &c0 * 4.0;
        let fit = fit(&x, &y, &PenaltyConfig::lasso(0.5)).unwrap();
        assert!(fit.kkt_residual <= KKT_TOL);
        let both = fit.coefficients[0] != 0.0 && fit.coefficients[1] != 0.0;
        assert_eq!(fit.non_unique, both);
        let enet = super::fit(&x, &y, &PenaltyConfig::elastic_net(0.5, 1.0)).unwrap();
        assert!(!enet.non_unique);
    }

    #[test]
    fn rejects_negative_penalty() {
        let x = random_matrix(5, 2, 7);
        let y = DVector::zeros(5);
        assert!(fit(&x, &y, &PenaltyConfig::lasso(-1.0)).is_err());
        assert!(fit(&x, &y, &PenaltyConfig::elastic_net(1.0, f64::NAN)).is_err());
    }

    #[test]
    fn pattern_validation() {
        assert!(SelectionPattern::new(vec![0, 2], vec![1, -1]).is_ok());
        assert!(SelectionPattern::new(vec![2, 0], vec![1, -1]).is_err());
        assert!(SelectionPattern::new(vec![0], vec![0]).is_err());
        assert!(SelectionPattern::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn kkt_certificate_holds_on_random_problems() {
        for s in 0..30u64 {
            let x = random_matrix(25, 6, 100 + s);
            let y = random_matrix(25, 1, 200 + s).column(0).into_owned() * 2.0;
            let mut rng = seed::rng(s);
            let pen = PenaltyConfig::elastic_net(rng.random_range(0.1..8.0), if s % 2 == 0 { 0.0 } else { 1.0 });
            let fit = fit(&x, &y, &pen).unwrap();
            let corr = x.tr_mul(&(&y - &x * &fit.coefficients));
            for j in 0..6 {
                let b = fit.coefficients[j];
                if b != 0.0 {
                    assert!((corr[j] - pen.l2_weight * b - pen.l1_weight * b.signum()).abs() <= 1e-6);
                } else {
                    assert!(corr[j].abs() <= pen.l1_weight + 1e-6);
                }
            }
        }
    }

    #[test]
    fn ridge_term_shrinks_coefficients() {
        let x = random_matrix(20, 4, 8);
        let y = random_matrix(20, 1, 9).column(0).into_owned() * 3.0;
        let mut last = f64::INFINITY;
        for gamma in [0.0, 0.5, 1.0, 4.0, 20.0] {
            let n = fit(&x, &y, &PenaltyConfig::elastic_net(1.0, gamma)).unwrap().coefficients.norm();
            assert!(n <= last + 1e-8);
            last = n;
        }
    }

    #[test]
    fn selection_region_requires_positive_lambda() {
        let gram = DMatrix::identity(2, 2);
        let v = DVector::zeros(2);
        let pat = SelectionPattern::new(vec![], vec![]).unwrap();
        let r = selection_halflines(&gram, &v, &v, &pat, &PenaltyConfig::lasso(0.0));
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn selection_halflines_reproduce_pattern_on_a_line() {
        // Plain design (identity transform): refit along the line and compare.
        for s in 0..10u64 {
            let x = random_matrix(15, 3, 300 + s);
            let ya = random_matrix(15, 1, 400 + s).column(0).into_owned() * 2.0;
            let yb = random_matrix(15, 1, 500 + s).column(0).into_owned();
            let pen = PenaltyConfig::elastic_net(2.0, if s % 2 == 0 { 0.0 } else { 1.0 });
            let z0 = 0.3;
            let f0 = fit(&x, &(&ya + &yb * z0), &pen).unwrap();
            let gram = x.tr_mul(&x);
            let lines = selection_halflines(&gram, &x.tr_mul(&ya), &x.tr_mul(&yb), &f0.pattern, &pen).unwrap();
            let (lo, hi) = lines.interval();
            assert!(lo <= z0 + 1e-9 && z0 <= hi + 1e-9);
            let lo = lo.max(-50.0);
            let hi = hi.min(50.0);
            for k in 1..50 {
                let z = lo + (hi - lo) * k as f64 / 50.0;
                let f = fit(&x, &(&ya + &yb * z), &pen).unwrap();
                assert_eq!(f.pattern, f0.pattern, "seed {s} z {z} in [{lo}, {hi}]");
            }
            if hi < 50.0 {
                let f = fit(&x, &(&ya + &yb * (hi + 1e-4)), &pen).unwrap();
                assert_ne!(f.pattern, f0.pattern);
            }
        }
    }
}
