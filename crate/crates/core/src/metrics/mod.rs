//! Area and boundary metrics on binary masks, longest-axis stratification
//! and report aggregation.
//!
//! TPR, FPR and AER are normalised by the ground-truth area, so
//! `AER = FPR + 1 - TPR`. HE is the symmetric Hausdorff distance between
//! 4-connected boundary pixel centres;
//! MAE averages the two directed mean boundary distances.

mod axis;
mod boundary;
mod mask;
mod region;
mod report;

pub use axis::{is_small, longest_axis};
pub use boundary::{boundary_errors, boundary_points, BoundaryErrors};
pub use mask::{binarize, binarize_batch, BinaryMask};
pub use region::{region_metrics, OverlapCounts, RegionMetrics};
pub use report::{
    evaluate, evaluate_masks, image_metrics, Aggregate, EvalOptions, ImageMetrics, ImageRow, MetricsReport, CSV_HEADER,
};
