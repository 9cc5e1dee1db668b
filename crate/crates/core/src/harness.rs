//! Monte Carlo experiments on synthetic data and the grid oracle for truncation regions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{bonferroni_p, data_split_p, naive_p};
use crate::datasets::{generate_synthetic, SyntheticConfig, TwoDomainDataset};
use crate::error::{Error, Result};
use crate::inference::{build_eta, decompose_line, divide_and_conquer, infer_feature, infer_feature_oc, observe, LineParametrization};
use crate::interval::TruncationRegion;
use crate::regression::{fit, PenaltyConfig};
use crate::seed;
use crate::transport::{apply_transport, build_problem, solve_transport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentMode {
    Fpr,
    Tpr,
}

impl FromStr for ExperimentMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fpr" => Ok(Self::Fpr),
            "tpr" => Ok(Self::Tpr),
            other => Err(Error::InvalidInput(format!("unknown experiment mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Method {
    #[serde(rename = "sfs-da")]
    SfsDa,
    #[serde(rename = "oc")]
    Oc,
    #[serde(rename = "naive")]
    Naive,
    #[serde(rename = "bonferroni")]
    Bonferroni,
    #[serde(rename = "ds")]
    Ds,
    #[serde(rename = "no-inference")]
    NoInference,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::SfsDa,
        Method::Oc,
        Method::Naive,
        Method::Bonferroni,
        Method::Ds,
        Method::NoInference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SfsDa => "sfs-da",
            Method::Oc => "oc",
            Method::Naive => "naive",
            Method::Bonferroni => "bonferroni",
            Method::Ds => "ds",
            Method::NoInference => "no-inference",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown method '{s}'")))
    }
}

/// Which selected features a replication tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureProtocol {
    /// One selected feature drawn uniformly at random.
    RandomOne,
    AllSelected,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub mode: ExperimentMode,
    pub ns_grid: Vec<usize>,
    pub n_t: usize,
    pub p: usize,
    pub beta_source_value: f64,
    pub beta_target_value: f64,
    pub penalty: PenaltyConfig,
    pub alpha: f64,
    pub replications: usize,
    pub master_seed: u64,
    pub methods: Vec<Method>,
    pub protocol: FeatureProtocol,
}

impl ExperimentConfig {
    /// Synthetic design with `β^s = 2·1`, `n_t = 10`, `p = 5`, `λ = 10`, `α = 0.05`
    /// and 120 replications; `β^t = 0` for `fpr` and `0.5·1` for `tpr`.
    pub fn standard(mode: ExperimentMode, ns_grid: Vec<usize>, penalty: PenaltyConfig, master_seed: u64) -> Self {
        Self {
            mode,
            ns_grid,
            n_t: 10,
            p: 5,
            beta_source_value: 2.0,
            beta_target_value: match mode {
                ExperimentMode::Fpr => 0.0,
                ExperimentMode::Tpr => 0.5,
            },
            penalty,
            alpha: 0.05,
            replications: 120,
            master_seed,
            methods: Method::ALL.to_vec(),
            protocol: FeatureProtocol::RandomOne,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if self.replications == 0 {
            return bad("replications must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if self.ns_grid.is_empty() || self.ns_grid.contains(&0) {
            return bad("n_s grid must be non-empty with positive entries");
        }
        if self.n_t == 0 || self.p == 0 {
            return bad("n_t and p must be positive");
        }
        if self.methods.is_empty() {
            return bad("at least one method is required");
        }
        if self.methods.contains(&Method::Ds) && (self.n_t < 2 || self.ns_grid.iter().any(|&n| n < 2)) {
            return bad("data splitting needs at least two rows per domain");
        }
        self.penalty.validate()?;
        if self.penalty.l1_weight <= 0.0 {
            return bad("lambda must be positive");
        }
        match self.mode {
            ExperimentMode::Fpr if self.beta_target_value != 0.0 => bad("fpr mode requires a zero target coefficient"),
            ExperimentMode::Tpr if self.beta_target_value == 0.0 => bad("tpr mode requires a nonzero target coefficient"),
            _ => Ok(()),
        }
    }
}

/// One tested feature under one method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRow {
    pub n_s: usize,
    pub rep: usize,
    pub method: Method,
    pub feature: usize,
    pub p_value: f64,
    pub reject: bool,
    pub runtime_s: f64,
    pub interval_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    pub n_s: usize,
    pub replications: usize,
    /// Tested hypotheses: replications with a non-empty selection times features tested.
    pub trials_used: usize,
    pub rejections: BTreeMap<Method, usize>,
    pub rates: BTreeMap<Method, f64>,
    pub mean_runtime_per_pvalue: BTreeMap<Method, f64>,
    /// Mean number of sub-problems visited by the full-line search.
    pub mean_interval_count: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub points: Vec<PointSummary>,
    #[serde(skip)]
    pub rows: Vec<ReplicationRow>,
}

impl ExperimentResult {
    pub fn rows_for(&self, n_s: usize) -> impl Iterator<Item = &ReplicationRow> {
        self.rows.iter().filter(move |r| r.n_s == n_s)
    }
}

fn synthetic_for(config: &ExperimentConfig, n_s: usize, rep: usize) -> SyntheticConfig {
    SyntheticConfig::constant(
        n_s,
        config.n_t,
        config.p,
        config.beta_source_value,
        config.beta_target_value,
        seed::derive(config.master_seed, &[n_s as u64, rep as u64, 0]),
    )
}

/// Synthetic dataset used by replication `rep` at source size `n_s`.
pub fn replication_dataset(config: &ExperimentConfig, n_s: usize, rep: usize) -> Result<TwoDomainDataset> {
    generate_synthetic(&synthetic_for(config, n_s, rep))
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

fn run_replication(config: &ExperimentConfig, n_s: usize, rep: usize) -> Result<Vec<ReplicationRow>> {
    let dataset = replication_dataset(config, n_s, rep)?;
    let penalty = &config.penalty;
    let observed = observe(&dataset, penalty)?;
    let active = observed.active_set().to_vec();
    if active.is_empty() {
        return Ok(Vec::new());
    }
    let features = match config.protocol {
        FeatureProtocol::RandomOne => {
            let mut rng = seed::rng(seed::derive(config.master_seed, &[n_s as u64, rep as u64, 1]));
            vec![active[rng.random_range(0..active.len())]]
        }
        FeatureProtocol::AllSelected => active.clone(),
    };
    let needs_split = config.methods.contains(&Method::Ds);
    let split = if needs_split {
        Some(timed(|| data_split_p(&dataset, penalty, seed::derive(config.master_seed, &[n_s as u64, rep as u64, 2])))?)
    } else {
        None
    };
    let mut rows = Vec::new();
    for &feature in &features {
        let line = decompose_line(&dataset, &build_eta(&dataset, &active, feature)?)?;
        for &method in &config.methods {
            let (p_value, runtime_s, interval_count) = match method {
                Method::SfsDa => {
                    let (inf, t) = timed(|| infer_feature(&dataset, penalty, &observed, feature))?;
                    (inf.p_value, t, inf.interval_count)
                }
                Method::Oc => {
                    let (inf, t) = timed(|| infer_feature_oc(&dataset, penalty, &observed, feature))?;
                    (inf.p_value, t, inf.interval_count)
                }
                Method::Naive => {
                    let (p, t) = timed(|| Ok(naive_p(&line)))?;
                    (p, t, 0)
                }
                Method::Bonferroni => {
                    let (p, t) = timed(|| Ok(bonferroni_p(naive_p(&line), config.p)))?;
                    (p, t, 0)
                }
                Method::Ds => {
                    let (outcome, t) = split.as_ref().expect("split computed when requested");
                    (outcome.p_value_for(feature), *t, 0)
                }
                Method::NoInference => (0.0, 0.0, 0),
            };
            rows.push(ReplicationRow {
                n_s,
                rep,
                method,
                feature,
                p_value,
                reject: p_value <= config.alpha,
                runtime_s,
                interval_count,
            });
        }
    }
    Ok(rows)
}

fn summarize(config: &ExperimentConfig, n_s: usize, rows: &[ReplicationRow]) -> PointSummary {
    let mut rejections = BTreeMap::new();
    let mut rates = BTreeMap::new();
    let mut mean_runtime = BTreeMap::new();
    let trials_used = rows.iter().filter(|r| r.method == config.methods[0]).count();
    for &m in &config.methods {
        let of_method: Vec<&ReplicationRow> = rows.iter().filter(|r| r.method == m).collect();
        let count = of_method.iter().filter(|r| r.reject).count();
        rejections.insert(m, count);
        let denom = trials_used.max(1) as f64;
        rates.insert(m, if trials_used == 0 { 0.0 } else { count as f64 / denom });
        mean_runtime.insert(m, of_method.iter().map(|r| r.runtime_s).sum::<f64>() / denom);
    }
    let sfs: Vec<&ReplicationRow> = rows.iter().filter(|r| r.method == Method::SfsDa).collect();
    let mean_interval_count = if sfs.is_empty() {
        0.0
    } else {
        sfs.iter().map(|r| r.interval_count as f64).sum::<f64>() / sfs.len() as f64
    };
    PointSummary {
        n_s,
        replications: config.replications,
        trials_used,
        rejections,
        rates,
        mean_runtime_per_pvalue: mean_runtime,
        mean_interval_count,
    }
}

/// Runs every replication at every source size; replications run in parallel and
/// results are gathered in `(n_s, rep)` order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &n_s in &config.ns_grid {
        let per_rep: Vec<Vec<ReplicationRow>> = (0..config.replications)
            .into_par_iter()
            .map(|rep| run_replication(config, n_s, rep))
            .collect::<Result<_>>()?;
        let point_rows: Vec<ReplicationRow> = per_rep.into_iter().flatten().collect();
        points.push(summarize(config, n_s, &point_rows));
        rows.extend(point_rows);
    }
    Ok(ExperimentResult {
        config: config.clone(),
        points,
        rows,
    })
}

/// Truncation region estimated by refitting the whole pipeline from scratch at
/// `grid_points` equally spaced values of `z`. Each maximal run of matching grid
/// points becomes an interval extended by half a spacing on both sides.
pub fn grid_oracle_region(
    dataset: &TwoDomainDataset,
    line: &LineParametrization,
    penalty: &PenaltyConfig,
    observed_active: &[usize],
    grid_points: usize,
) -> Result<TruncationRegion> {
    if grid_points < 2 {
        return Err(Error::InvalidInput("grid needs at least two points".into()));
    }
    let (z_min, z_max) = line.z_range();
    let spacing = (z_max - z_min) / (grid_points - 1) as f64;
    let problem = build_problem(dataset);
    let matches: Vec<bool> = (0..grid_points)
        .into_par_iter()
        .map(|k| {
            let z = z_min + spacing * k as f64;
            let y = line.response_at(z);
            let solution = solve_transport(&problem, &y);
            let (design, omega) = apply_transport(&solution, dataset);
            let fitted = fit(&design, &(omega * y), penalty)?;
            Ok(fitted.pattern.active_set() == observed_active)
        })
        .collect::<Result<_>>()?;
    let mut intervals = Vec::new();
    let mut k = 0;
    while k < grid_points {
        if matches[k] {
            let start = k;
            while k + 1 < grid_points && matches[k + 1] {
                k += 1;
            }
            let lo = z_min + spacing * start as f64 - 0.5 * spacing;
            let hi = z_min + spacing * k as f64 + 0.5 * spacing;
            intervals.push((lo, hi));
        }
        k += 1;
    }
    Ok(TruncationRegion::from_intervals(intervals, 0.0).clip(z_min, z_max))
}

/// Analytic and grid-oracle regions for one feature.
#[derive(Debug, Clone, Serialize)]
pub struct OracleComparison {
    pub feature: usize,
    pub analytic: TruncationRegion,
    pub oracle: TruncationRegion,
    pub grid_spacing: f64,
    pub symmetric_difference: f64,
}

/// Compares both regions for every feature selected on `dataset`.
pub fn compare_with_oracle(
    dataset: &TwoDomainDataset,
    penalty: &PenaltyConfig,
    grid_points: usize,
) -> Result<Vec<OracleComparison>> {
    let observed = observe(dataset, penalty)?;
    let active = observed.active_set().to_vec();
    active
        .iter()
        .map(|&feature| {
            let line = decompose_line(dataset, &build_eta(dataset, &active, feature)?)?;
            let analytic = divide_and_conquer(dataset, &line, penalty, &active)?.region;
            let oracle = grid_oracle_region(dataset, &line, penalty, &active, grid_points)?;
            let (z_min, z_max) = line.z_range();
            Ok(OracleComparison {
                feature,
                symmetric_difference: analytic.symmetric_difference_length(&oracle),
                grid_spacing: (z_max - z_min) / (grid_points.max(2) - 1) as f64,
                analytic,
                oracle,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mode: ExperimentMode) -> ExperimentConfig {
        let mut c = ExperimentConfig::standard(mode, vec![12], PenaltyConfig::lasso(3.0), 3);
        c.n_t = 6;
        c.p = 3;
        c.replications = 8;
        c
    }

    #[test]
    fn contradictory_configs_rejected() {
        let mut c = small(ExperimentMode::Fpr);
        c.beta_target_value = 0.5;
        assert!(c.validate().is_err());
        let mut c = small(ExperimentMode::Tpr);
        c.beta_target_value = 0.0;
        assert!(c.validate().is_err());
        let mut c = small(ExperimentMode::Fpr);
        c.replications = 0;
        assert!(c.validate().is_err());
        let mut c = small(ExperimentMode::Fpr);
        c.alpha = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn rates_are_rejections_over_trials() {
        let r = run_experiment(&small(ExperimentMode::Fpr)).unwrap();
        let pt = &r.points[0];
        assert!(pt.trials_used <= pt.replications);
        for m in Method::ALL {
            assert_eq!(pt.rates[&m], pt.rejections[&m] as f64 / pt.trials_used as f64);
        }
        assert_eq!(pt.rates[&Method::NoInference], 1.0);
        for row in r.rows_for(12).filter(|row| row.method == Method::Bonferroni) {
            let naive = r
                .rows
                .iter()
                .find(|x| x.rep == row.rep && x.method == Method::Naive)
                .unwrap();
            assert!(row.p_value >= naive.p_value);
        }
    }

    #[test]
    fn deterministic_apart_from_timing() {
        let strip = |r: &ExperimentResult| {
            r.rows
                .iter()
                .map(|x| (x.rep, x.method, x.feature, x.p_value.to_bits(), x.interval_count))
                .collect::<Vec<_>>()
        };
        let c = small(ExperimentMode::Tpr);
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.points[0].rates, b.points[0].rates);
    }

    #[test]
    fn coarse_grid_gives_at_most_one_interval() {
        let c = small(ExperimentMode::Tpr);
        for rep in 0..5 {
            let d = replication_dataset(&c, 12, rep).unwrap();
            let observed = observe(&d, &c.penalty).unwrap();
            let active = observed.active_set().to_vec();
            if active.is_empty() {
                continue;
            }
            let line = decompose_line(&d, &build_eta(&d, &active, active[0]).unwrap()).unwrap();
            let region = grid_oracle_region(&d, &line, &c.penalty, &active, 2).unwrap();
            assert!(region.len() <= 1);
        }
    }
}
