//! Numeric kernels shared by the detectors and the evaluation harness.

mod divergence;
mod iforest;
mod moments;
mod platt;
mod rng;
mod robust;

pub use divergence::{bin_index, histogram, histogram_counts, kl_divergence, smooth, KL_SMOOTHING};
pub use iforest::{
    average_path_length, isolation_forest_fit, isolation_forest_score, IsoNode, IsolationForestModel,
    IsolationTree, DEFAULT_SUBSAMPLE, DEFAULT_TREES,
};
pub use moments::{
    autocorrelation, linear_trend, mean, moments, pearson, std_dev, MomentSummary, RollingCorrelation,
    RunningStats,
};
pub use platt::{platt_apply, platt_fit, sigmoid, PlattParams};
pub use rng::SplitMix64;
pub use robust::{median, quantile, quantile_sorted, robust_bounds, theil_sen, LineFit, RobustBounds};
