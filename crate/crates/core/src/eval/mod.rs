//! Evaluation toolkit: classification metrics, the desk-scale classifier,
//! evoked curves, scalp topographies, and the ablation runner.

pub mod ablation;
pub mod classify;
pub mod curves;
pub mod metrics;
pub mod topo;

pub use ablation::{run_ablation, AblationConfig, AblationRow, AblationTable};
pub use classify::{classify, classify_ratio_sweep, Ratio, SplitSpec};
pub use curves::{curve_csv, evoked_curve, rms_distance};
pub use metrics::{metrics, ConfusionCounts, MetricsReport};
pub use topo::{default_windows, topography, TimeWindow, TopographyFrame, Triangulation};
