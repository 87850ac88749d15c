//! Experiment protocols, metrics and reports behind the `irpatch` command.
//!
//! A scene counts as attacked when the top-1 score of the patched image is
//! at most `s_thr`. Ablation arms are scored with binary patches so that
//! optimized, translated and canonical patches are compared on equal terms.

mod config;
mod metrics;
mod protocols;
mod report;
mod shapes;

pub use config::{Detector, DetectorSource, RunConfig, KEYS};
pub use metrics::{compute_ap, median_filter, ApRecord};
pub use protocols::{
    ablate_losses, ablate_placement, defend_smooth, eval_ap, history_csv, optimize, worker_pool,
    OptimizeSummary, AP_ARMS, DEFENSE_ARMS, LOSS_ARMS, PLACEMENT_ARMS, THREADS_VAR,
};
pub use report::{recount_asr, ArmReport, ExperimentReport, SceneRecord};
pub use shapes::{canonical_patch, centroid, translate, valid_offsets, CanonicalShape};
