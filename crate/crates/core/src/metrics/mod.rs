//! Detection AP, multi-object tracking metrics and dataset statistics.

pub mod ap;
pub mod mot;
pub mod report;

pub use ap::{average_precision, compute_ap, ApConfig, ApReport, GroundTruthBox, PredictedBox, SizeClass};
pub use mot::{compute_mot_metrics, MotConfig, MotReport};
pub use report::{dataset_report, DatasetReport};
