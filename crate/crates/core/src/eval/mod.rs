//! Distributional distances, KDC profiling, and strategy ablations.

mod ablation;
mod metrics;
mod profile;

pub use ablation::{
    run_ablation, run_ablation_observed, save_ablation_csv, score_student, sort_rows,
    strategy_median, write_ablation_csv, AblationEval, AblationRow,
};
pub use metrics::{
    compute_metrics, energy_distance, projection_directions, read_metrics_csv, sliced_wasserstein,
    spearman, write_metrics_csv, DEFAULT_PROJECTIONS, METRIC_NAMES,
};
pub use profile::{kdc_profile, kdc_vs_step, KdcProfile, ProfileModels, ProfileSettings};
