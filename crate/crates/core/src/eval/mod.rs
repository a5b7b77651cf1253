//! Evaluation: metrics, effect statistics, the ratio baseline, experiment
//! protocols and report writers.

mod baseline;
mod effects;
mod metrics;
mod protocol;
mod report;

pub use baseline::{naive_ratio_baseline, return_ratio, RatioBaseline, DEFAULT_RATIO_THRESHOLD};
pub use effects::{
    cohens_d, factorial_effects, ks_critical_5pct, ks_uniform, student_t_two_sided, welch_t, EffectEstimate,
    WelchTest, FACTORS,
};
pub use metrics::{
    brier, cohens_kappa, detection_latency, overhead, prf, roc_auc, roc_curve, trapezoid_auc, Confusion,
    DetectionMetrics, Latency, Prf, RocPoint,
};
pub use protocol::{
    evaluate_folds, folds, run_benchmark, run_factorial, run_mitigation, with_jobs, AblationRow, Benchmark,
    BenchmarkConfig, BenchmarkReport, EvalRecord, Evaluation, FactorialConfig, FactorialReport, LatencyConfig,
    LatencyReport, MitigationConfig, MitigationRow, ScoredStream, SensitivityGrid, SensitivityRow, ThresholdPoint,
};
pub use report::{
    roc_svg, scatter_svg, series_svg, write_ablation_csv, write_effects_csv, write_factorial_csv, write_metrics_csv,
    write_cells_csv, write_mitigation_rows_csv, write_sensitivity_csv, write_sweep_csv,
};
