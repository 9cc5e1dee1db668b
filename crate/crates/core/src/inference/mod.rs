//! Conditional inference along the line through the observed responses.

mod line;
mod pipeline;
mod pvalue;
pub mod search;

pub use line::{build_eta, decompose_line, LineParametrization, Z_RANGE_SDS};
pub use pipeline::{infer_feature, infer_feature_oc, observe, sfs_da, sfs_da_oc, FeatureInference, ObservedSelection};
pub use pvalue::{truncated_two_sided_p, truncated_two_sided_p_raw};
pub use search::{divide_and_conquer, SearchOutcome, SubProblemRecord};
