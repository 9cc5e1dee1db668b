//! Two-domain regression data: containers, synthetic generation and CSV ingestion.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed;

/// Source and target samples of a regression problem together with their known
/// noise covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoDomainDataset {
    source_features: DMatrix<f64>,
    source_response: DVector<f64>,
    target_features: DMatrix<f64>,
    target_response: DVector<f64>,
    source_cov: DMatrix<f64>,
    target_cov: DMatrix<f64>,
}

impl TwoDomainDataset {
    pub fn new(
        source_features: DMatrix<f64>,
        source_response: DVector<f64>,
        target_features: DMatrix<f64>,
        target_response: DVector<f64>,
        source_cov: DMatrix<f64>,
        target_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let (n_s, p) = source_features.shape();
        let (n_t, p_t) = target_features.shape();
        if n_s == 0 || n_t == 0 || p == 0 {
            return Err(Error::InvalidInput(format!(
                "dataset needs n_s, n_t, p >= 1 (got {n_s}, {n_t}, {p})"
            )));
        }
        if p != p_t {
            return Err(Error::DimensionMismatch(format!(
                "source has {p} features, target has {p_t}"
            )));
        }
        if source_response.len() != n_s || target_response.len() != n_t {
            return Err(Error::DimensionMismatch(format!(
                "response lengths ({}, {}) do not match row counts ({n_s}, {n_t})",
                source_response.len(),
                target_response.len()
            )));
        }
        check_covariance("source", &source_cov, n_s)?;
        check_covariance("target", &target_cov, n_t)?;
        let all_finite = source_features.iter().all(|v| v.is_finite())
            && target_features.iter().all(|v| v.is_finite())
            && source_response.iter().all(|v| v.is_finite())
            && target_response.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidInput("non-finite value in data".into()));
        }
        Ok(Self {
            source_features,
            source_response,
            target_features,
            target_response,
            source_cov,
            target_cov,
        })
    }

    /// Dataset whose noise covariances are `noise_sd^2` times the identity.
    pub fn with_isotropic_noise(
        source_features: DMatrix<f64>,
        source_response: DVector<f64>,
        target_features: DMatrix<f64>,
        target_response: DVector<f64>,
        noise_sd: f64,
    ) -> Result<Self> {
        if !(noise_sd > 0.0 && noise_sd.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise_sd must be positive, got {noise_sd}"
            )));
        }
        let var = noise_sd * noise_sd;
        let n_s = source_features.nrows();
        let n_t = target_features.nrows();
        Self::new(
            source_features,
            source_response,
            target_features,
            target_response,
            DMatrix::identity(n_s, n_s) * var,
            DMatrix::identity(n_t, n_t) * var,
        )
    }

    pub fn n_source(&self) -> usize {
        self.source_features.nrows()
    }

    pub fn n_target(&self) -> usize {
        self.target_features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.source_features.ncols()
    }

    pub fn source_features(&self) -> &DMatrix<f64> {
        &self.source_features
    }

    pub fn source_response(&self) -> &DVector<f64> {
        &self.source_response
    }

    pub fn target_features(&self) -> &DMatrix<f64> {
        &self.target_features
    }

    pub fn target_response(&self) -> &DVector<f64> {
        &self.target_response
    }

    pub fn source_cov(&self) -> &DMatrix<f64> {
        &self.source_cov
    }

    pub fn target_cov(&self) -> &DMatrix<f64> {
        &self.target_cov
    }

    /// `(Y^s; Y^t)`.
    pub fn stacked_response(&self) -> DVector<f64> {
        let n_s = self.n_source();
        let mut y = DVector::zeros(n_s + self.n_target());
        y.rows_mut(0, n_s).copy_from(&self.source_response);
        y.rows_mut(n_s, self.n_target()).copy_from(&self.target_response);
        y
    }

    /// `(X^s; X^t)`.
    pub fn stacked_features(&self) -> DMatrix<f64> {
        let (n_s, n_t, p) = (self.n_source(), self.n_target(), self.n_features());
        let mut x = DMatrix::zeros(n_s + n_t, p);
        x.rows_mut(0, n_s).copy_from(&self.source_features);
        x.rows_mut(n_s, n_t).copy_from(&self.target_features);
        x
    }

    /// `Σ^s ⊕ Σ^t` applied to a stacked vector without materializing the block matrix.
    pub fn apply_cov(&self, v: &DVector<f64>) -> DVector<f64> {
        let n_s = self.n_source();
        let n_t = self.n_target();
        let mut out = DVector::zeros(n_s + n_t);
        out.rows_mut(0, n_s)
            .copy_from(&(&self.source_cov * v.rows(0, n_s)));
        out.rows_mut(n_s, n_t)
            .copy_from(&(&self.target_cov * v.rows(n_s, n_t)));
        out
    }

    /// Sub-dataset keeping the listed source and target rows, in the given order.
    pub fn select_rows(&self, source_rows: &[usize], target_rows: &[usize]) -> Result<Self> {
        let pick_cov = |cov: &DMatrix<f64>, rows: &[usize]| {
            DMatrix::from_fn(rows.len(), rows.len(), |a, b| cov[(rows[a], rows[b])])
        };
        Self::new(
            self.source_features.select_rows(source_rows),
            self.source_response.select_rows(source_rows),
            self.target_features.select_rows(target_rows),
            self.target_response.select_rows(target_rows),
            pick_cov(&self.source_cov, source_rows),
            pick_cov(&self.target_cov, target_rows),
        )
    }

    /// Same features and covariances, different responses.
    pub fn with_responses(&self, source: DVector<f64>, target: DVector<f64>) -> Result<Self> {
        if source.len() != self.n_source() || target.len() != self.n_target() {
            return Err(Error::DimensionMismatch("replacement responses".into()));
        }
        let mut out = self.clone();
        out.source_response = source;
        out.target_response = target;
        Ok(out)
    }
}

fn check_covariance(which: &str, cov: &DMatrix<f64>, n: usize) -> Result<()> {
    if cov.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "{which} covariance is {:?}, expected ({n}, {n})",
            cov.shape()
        )));
    }
    for i in 0..n {
        for j in 0..i {
            if cov[(i, j)] != cov[(j, i)] {
                return Err(Error::InvalidInput(format!(
                    "{which} covariance is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || cov[(i, j)] == 0.0));
    let min_eig = if diagonal {
        cov.diagonal().min()
    } else {
        SymmetricEigen::new(cov.clone()).eigenvalues.min()
    };
    if !(min_eig >= -1e-8) {
        return Err(Error::InvalidInput(format!(
            "{which} covariance is not positive semidefinite (min eigenvalue {min_eig:e})"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_s: usize,
    pub n_t: usize,
    pub p: usize,
    pub beta_source: Vec<f64>,
    pub beta_target: Vec<f64>,
    pub noise_sd: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    /// Constant coefficient vectors, the layout used by the reference experiments.
    pub fn constant(n_s: usize, n_t: usize, p: usize, beta_s: f64, beta_t: f64, seed: u64) -> Self {
        Self {
            n_s,
            n_t,
            p,
            beta_source: vec![beta_s; p],
            beta_target: vec![beta_t; p],
            noise_sd: 1.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_s == 0 || self.n_t == 0 || self.p == 0 {
            return Err(Error::InvalidInput("counts must be >= 1".into()));
        }
        if self.beta_source.len() != self.p || self.beta_target.len() != self.p {
            return Err(Error::DimensionMismatch(format!(
                "coefficient vectors must have length p = {}",
                self.p
            )));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidInput("noise_sd must be positive".into()));
        }
        Ok(())
    }
}

/// Gaussian design with `Y_i = X_i' β + ε`, `ε ~ N(0, noise_sd²)` in each domain.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<TwoDomainDataset> {
    config.validate()?;
    let mut rng = seed::rng(config.seed);
    let mut draw = |rows: usize, beta: &[f64]| {
        let x = DMatrix::from_fn(rows, config.p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let beta = DVector::from_column_slice(beta);
        let noise = DVector::from_fn(rows, |_, _| config.noise_sd * rng.sample::<f64, _>(StandardNormal));
        let y = &x * beta + noise;
        (x, y)
    };
    let (xs, ys) = draw(config.n_s, &config.beta_source);
    let (xt, yt) = draw(config.n_t, &config.beta_target);
    TwoDomainDataset::with_isotropic_noise(xs, ys, xt, yt, config.noise_sd)
}

struct CsvTable {
    features: DMatrix<f64>,
    response: DVector<f64>,
}

fn read_csv_table(path: &Path) -> Result<CsvTable> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |line: u64, message: String| Error::Parse {
        file: path.to_path_buf(),
        line,
        message,
    };

    let mut records = reader.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| parse_err(1, e.to_string()))?,
        None => return Err(parse_err(1, "empty file, expected header x1,...,xp,y".into())),
    };
    let names: Vec<String> = header.iter().map(str::to_owned).collect();
    let p = names.len().saturating_sub(1);
    let header_ok = p >= 1
        && names.last().map(String::as_str) == Some("y")
        && names[..p]
            .iter()
            .enumerate()
            .all(|(j, name)| *name == format!("x{}", j + 1));
    if !header_ok {
        return Err(parse_err(
            1,
            format!("malformed header `{}`, expected x1,...,xp,y", names.join(",")),
        ));
    }

    let mut values: Vec<f64> = Vec::new();
    let mut response = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |pos| pos.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |pos| pos.line());
        if rec.len() != p + 1 {
            return Err(parse_err(
                line,
                format!("expected {} cells, found {}", p + 1, rec.len()),
            ));
        }
        for (cell, name) in rec.iter().zip(&names) {
            if cell.is_empty() {
                return Err(parse_err(line, format!("missing value in column {name}")));
            }
            let v: f64 = cell.parse().map_err(|_| {
                parse_err(line, format!("non-numeric value `{cell}` in column {name}"))
            })?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value in column {name}")));
            }
            values.push(v);
        }
        response.push(values.pop().expect("row has p + 1 cells"));
    }
    if response.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    Ok(CsvTable {
        features: DMatrix::from_row_slice(response.len(), p, &values),
        response: DVector::from_vec(response),
    })
}

/// Reads source and target CSV files with header `x1,...,xp,y`.
pub fn load_csv(source_path: &Path, target_path: &Path, noise_sd: f64) -> Result<TwoDomainDataset> {
    let source = read_csv_table(source_path)?;
    let target = read_csv_table(target_path)?;
    if source.features.ncols() != target.features.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} has {} features but {} has {}",
            source_path.display(),
            source.features.ncols(),
            target_path.display(),
            target.features.ncols()
        )));
    }
    TwoDomainDataset::with_isotropic_noise(
        source.features,
        source.response,
        target.features,
        target.response,
        noise_sd,
    )
}

/// Writes one domain in the format read by [`load_csv`], 17 significant digits per value.
pub fn write_csv(path: &Path, features: &DMatrix<f64>, response: &DVector<f64>) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = String::new();
    let header: Vec<String> = (1..=features.ncols()).map(|j| format!("x{j}")).collect();
    out.push_str(&header.join(","));
    out.push_str(",y\n");
    for i in 0..features.nrows() {
        for j in 0..features.ncols() {
            out.push_str(&crate::report::fmt17(features[(i, j)]));
            out.push(',');
        }
        out.push_str(&crate::report::fmt17(response[i]));
        out.push('\n');
    }
    File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        std::fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn synthetic_dimensions() {
        let cfg = SyntheticConfig::constant(100, 10, 5, 2.0, 0.0, 7);
        let d = generate_synthetic(&cfg).unwrap();
        assert_eq!((d.n_source(), d.n_target(), d.n_features()), (100, 10, 5));
        assert_eq!(d.source_cov().shape(), (100, 100));
        assert_eq!(d.target_cov()[(3, 3)], 1.0);
        assert_eq!(d.target_cov()[(3, 4)], 0.0);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let cfg = SyntheticConfig::constant(20, 5, 3, 2.0, 0.5, 99);
        assert_eq!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
        let other = SyntheticConfig { seed: 100, ..cfg.clone() };
        assert_ne!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn synthetic_null_response_variance() {
        let cfg = SyntheticConfig::constant(1, 10_000, 2, 2.0, 0.0, 3);
        let d = generate_synthetic(&cfg).unwrap();
        let y = d.target_response();
        let mean = y.mean();
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len() - 1) as f64;
        assert!((var - 1.0).abs() < 0.05, "sample variance {var}");
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = SyntheticConfig::constant(5, 5, 2, 1.0, 0.0, 1);
        cfg.noise_sd = 0.0;
        assert!(generate_synthetic(&cfg).is_err());
        let cfg = SyntheticConfig { beta_target: vec![0.0], ..SyntheticConfig::constant(5, 5, 2, 1.0, 0.0, 1) };
        assert!(generate_synthetic(&cfg).is_err());
    }

    #[test]
    fn covariance_checks() {
        let x = DMatrix::from_element(2, 1, 1.0);
        let y = DVector::from_element(2, 0.0);
        let mut asym = DMatrix::identity(2, 2);
        asym[(0, 1)] = 0.5;
        let err = TwoDomainDataset::new(x.clone(), y.clone(), x.clone(), y.clone(), asym, DMatrix::identity(2, 2));
        assert!(err.is_err());
        let mut indefinite = DMatrix::identity(2, 2);
        indefinite[(0, 1)] = 2.0;
        indefinite[(1, 0)] = 2.0;
        let err = TwoDomainDataset::new(x.clone(), y.clone(), x, y, DMatrix::identity(2, 2), indefinite);
        assert!(err.is_err());
    }

    #[test]
    fn csv_basic_parse() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.csv", "x1,x2,y\n1,2,3\n4,5,6\n7,8.5e-1,9\n");
        let t = write(dir.path(), "t.csv", "x1,x2,y\n0,0,1\n1,1,2\n-1,2,3\n");
        let d = load_csv(&s, &t, 2.0).unwrap();
        assert_eq!((d.n_source(), d.n_target(), d.n_features()), (3, 3, 2));
        assert_eq!(d.source_features()[(2, 1)], 0.85);
        assert_eq!(d.source_response()[1], 6.0);
        assert_eq!(d.target_cov()[(0, 0)], 4.0);
    }

    #[test]
    fn csv_dimension_mismatch_names_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "src.csv", "x1,y\n1,2\n");
        let t = write(dir.path(), "tgt.csv", "x1,x2,y\n1,2,3\n");
        let msg = load_csv(&s, &t, 1.0).unwrap_err().to_string();
        assert!(msg.contains("src.csv") && msg.contains("tgt.csv"), "{msg}");
    }

    #[test]
    fn csv_non_numeric_reports_line_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.csv", "x1,y\n1.5,abc\n");
        let t = write(dir.path(), "t.csv", "x1,y\n1,2\n");
        match load_csv(&s, &t, 1.0).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("column y"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn csv_malformed_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let t = write(dir.path(), "t.csv", "x1,y\n1,2\n");
        for body in ["a,b\n1,2\n", "x2,y\n1,2\n", "x1,y\n1,2,3\n", "x1,y\n1,\n", "X1,y\n1,2\n", ""] {
            let s = write(dir.path(), "s.csv", body);
            assert!(load_csv(&s, &t, 1.0).is_err(), "accepted {body:?}");
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let cfg = SyntheticConfig::constant(7, 4, 3, 2.0, 0.5, 11);
        let d = generate_synthetic(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let s = dir.path().join("s.csv");
        let t = dir.path().join("t.csv");
        write_csv(&s, d.source_features(), d.source_response()).unwrap();
        write_csv(&t, d.target_features(), d.target_response()).unwrap();
        assert_eq!(load_csv(&s, &t, 1.0).unwrap(), d);
    }
}
