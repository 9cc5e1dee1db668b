//! Output formatting shared by the CLI and the experiment harness.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::harness::{ExperimentResult, Method, PointSummary};

pub const SCHEMA_VERSION: &str = "1";

/// Scientific notation with 17 significant digits; round-trips every finite `f64`.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "Infinity".to_string()
    } else {
        "-Infinity".to_string()
    }
}

/// JSON number written with `fmt17`; non-finite values become `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F17(pub f64);

impl Serialize for F17 {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            let raw = RawValue::from_string(fmt17(self.0)).map_err(serde::ser::Error::custom)?;
            raw.serialize(serializer)
        } else {
            serializer.serialize_none()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub n_source: usize,
    pub n_target: usize,
    pub n_features: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct InferSettings {
    pub lambda: F17,
    pub gamma: F17,
    pub alpha: F17,
    pub noise_sd: F17,
    pub methods: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitStatus {
    Tested,
    NotSelected,
    Unidentifiable,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeatureEntry {
    pub feature_index: usize,
    pub statistic: F17,
    pub sigma: F17,
    pub intervals: Vec<[F17; 2]>,
    pub p_selective: F17,
    pub p_naive: F17,
    pub p_bonferroni: F17,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_ds: Option<F17>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ds_status: Option<SplitStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_oc: Option<F17>,
    pub reject_selective: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportDocument {
    pub schema_version: &'static str,
    pub dataset: DatasetSummary,
    pub settings: InferSettings,
    pub selected: Vec<usize>,
    pub features: Vec<FeatureEntry>,
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Serialize)]
struct SummaryPoint {
    n_s: usize,
    replications: usize,
    trials_used: usize,
    rejections: BTreeMap<Method, usize>,
    rates: BTreeMap<Method, F17>,
    mean_runtime_per_pvalue: BTreeMap<Method, F17>,
    mean_interval_count: F17,
}

#[derive(Serialize)]
struct SummaryConfig {
    mode: crate::harness::ExperimentMode,
    ns_grid: Vec<usize>,
    n_t: usize,
    p: usize,
    beta_source_value: F17,
    beta_target_value: F17,
    lambda: F17,
    gamma: F17,
    alpha: F17,
    replications: usize,
    master_seed: u64,
    methods: Vec<Method>,
    protocol: crate::harness::FeatureProtocol,
}

#[derive(Serialize)]
struct SummaryDocument {
    schema_version: &'static str,
    config: SummaryConfig,
    points: Vec<SummaryPoint>,
}

fn summary_point(p: &PointSummary, timing: bool) -> SummaryPoint {
    let f17_map = |m: &BTreeMap<Method, f64>| m.iter().map(|(k, v)| (*k, F17(*v))).collect();
    SummaryPoint {
        n_s: p.n_s,
        replications: p.replications,
        trials_used: p.trials_used,
        rejections: p.rejections.clone(),
        rates: f17_map(&p.rates),
        mean_runtime_per_pvalue: if timing {
            f17_map(&p.mean_runtime_per_pvalue)
        } else {
            p.mean_runtime_per_pvalue.keys().map(|k| (*k, F17(0.0))).collect()
        },
        mean_interval_count: F17(p.mean_interval_count),
    }
}

/// Summary JSON of an experiment; runtimes are written as zero when `timing` is off.
pub fn experiment_summary_json(result: &ExperimentResult, timing: bool) -> Result<String> {
    let c = &result.config;
    let doc = SummaryDocument {
        schema_version: SCHEMA_VERSION,
        config: SummaryConfig {
            mode: c.mode,
            ns_grid: c.ns_grid.clone(),
            n_t: c.n_t,
            p: c.p,
            beta_source_value: F17(c.beta_source_value),
            beta_target_value: F17(c.beta_target_value),
            lambda: F17(c.penalty.l1_weight),
            gamma: F17(c.penalty.l2_weight),
            alpha: F17(c.alpha),
            replications: c.replications,
            master_seed: c.master_seed,
            methods: c.methods.clone(),
            protocol: c.protocol,
        },
        points: result.points.iter().map(|p| summary_point(p, timing)).collect(),
    };
    to_json(&doc)
}

pub const REPLICATION_COLUMNS: [&str; 7] = ["rep", "method", "feature", "p_value", "reject", "runtime_s", "interval_count"];

/// Per-replication CSV for one source size.
pub fn replication_csv(result: &ExperimentResult, n_s: usize, timing: bool) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidInput(format!("csv write failed: {e}"));
    w.write_record(REPLICATION_COLUMNS).map_err(csv_err)?;
    for r in result.rows_for(n_s) {
        w.write_record([
            r.rep.to_string(),
            r.method.name().to_string(),
            r.feature.to_string(),
            fmt17(r.p_value),
            r.reject.to_string(),
            fmt17(if timing { r.runtime_s } else { 0.0 }),
            r.interval_count.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(format!("csv write failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn replication_csv_path(dir: &Path, n_s: usize) -> PathBuf {
    dir.join(format!("replications_ns{n_s}.csv"))
}

pub fn summary_path(dir: &Path) -> PathBuf {
    dir.join("summary.json")
}

/// Writes `summary.json` and one `replications_ns<n>.csv` per source size into `dir`.
pub fn write_experiment(dir: &Path, result: &ExperimentResult, timing: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for &n_s in &result.config.ns_grid {
        write_text(&replication_csv_path(dir, n_s), &replication_csv(result, n_s, timing)?)?;
    }
    write_text(&summary_path(dir), &experiment_summary_json(result, timing)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt17_round_trips() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 123456789.123456789, f64::MIN_POSITIVE, 5e-324, 0.0] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt17(0.05), "5.0000000000000003e-2");
    }

    #[test]
    fn f17_is_a_json_number() {
        let s = serde_json::to_string(&[F17(0.25), F17(f64::NAN)]).unwrap();
        assert_eq!(s, "[2.5000000000000000e-1,null]");
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v[0].as_f64(), Some(0.25));
    }
}
