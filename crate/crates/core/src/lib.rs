//! Selective inference for features selected by Lasso or elastic net after
//! optimal-transport domain adaptation.

pub mod baselines;
pub mod cli;
pub mod datasets;
pub mod error;
pub mod harness;
pub mod inference;
pub mod interval;
pub mod normal;
pub mod regression;
pub mod report;
pub mod seed;
pub mod transport;

pub use datasets::{generate_synthetic, load_csv, SyntheticConfig, TwoDomainDataset};
pub use error::{Error, Result};
pub use inference::{sfs_da, sfs_da_oc, FeatureInference};
pub use interval::TruncationRegion;
pub use regression::{PenaltyConfig, SelectionPattern};
pub use harness::{run_experiment, ExperimentConfig, ExperimentMode, ExperimentResult, Method};
pub use nalgebra;
