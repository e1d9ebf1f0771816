//! Hand-drawn trajectory extraction from an RGB image: color conversion,
//! marker-anchored ROI, seed lines, boundary features and the bidirectional
//! moving-box search.

mod color;
mod extract;
mod plane;
mod roi;
mod seeds;

use thiserror::Error;

pub use color::{to_ycrcb, ycrcb_pixel, ColorPlanes, ImageBundle, Rgb};
pub use extract::{
    column_coverage, extract_trajectory, extract_trajectory_fixed_threshold, Coverage, Trajectory2D,
};
pub use plane::Plane;
pub use roi::{extract_roi, Band, MarkerObservation, Roi};
pub use seeds::{
    boundary_features, filter_seeds, seed_columns, seed_points, Channel, ExtractionParams,
    SeedPoint,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImgError {
    #[error("both end markers must be visible")]
    MarkersMissing,
    #[error("pixel ({u}, {v}) is closer than 9 rows to the ROI border")]
    OutOfBounds { u: usize, v: usize },
    #[error("no accepted seed points")]
    NoSeeds,
    #[error("image planes differ in size")]
    DimensionMismatch,
    #[error("invalid extraction parameters: {0}")]
    InvalidParams(String),
}
