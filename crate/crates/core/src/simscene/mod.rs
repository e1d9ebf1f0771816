//! Deterministic synthetic world: phantom rendering to RGB-D, analytic
//! B-mode frames of the embedded tube, motion injection and the scenario
//! engine driving the whole pipeline.

mod phantom;
mod render;
mod scenario;
mod trials;

use thiserror::Error;

pub use phantom::{
    distance_to_polyline, MarkerSpec, Occluder, PhantomSpec, SurfaceShape, TubeSpec, MARKER_COLOR,
    OCCLUDER_COLOR,
};
pub use render::{
    averaged_markers, observe_markers, project, render_scene, render_us_frame, true_markers,
    CameraSpec, GroundTruth, NoiseConfig, SceneCapture, UsSpec, TRUTH_STEP_MM, US_AIR, US_LUMEN,
    US_SPECKLE, US_WALL,
};
pub use scenario::{
    calibration_pairs, initial_capture, plan_trajectory, run_scenario, CenterlineSummary,
    CompoundConfig, EventMetric, MotionEventSpec, PlanConfig, PlannedPath, PoseRecord,
    ScenarioScript, SegmentMetric, SweepMetrics, SweepRun,
};
pub use trials::{
    run_compensation_study, simulate_compensation, CompensationStudy, MagnitudeSummary, MotionKind,
    SetSummary, StudyMetrics, StudyReport, Trial,
};

use crate::compound::CompoundError;
use crate::geom::GeomError;
use crate::imgproc::ImgError;
use crate::io::IoError;
use crate::motion::MotionError;
use crate::pathplan::PlanError;
use crate::surface::SurfaceError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("the camera does not see the whole trajectory")]
    PhantomNotVisible,
    #[error("sweep aborted at motion event {stage}: compensation error {e_mc:.3} mm")]
    AbortedSweep { stage: usize, e_mc: f64 },
    #[error("invalid scenario: {0}")]
    InvalidScript(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Image(#[from] ImgError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Compound(#[from] CompoundError),
    #[error(transparent)]
    Files(#[from] IoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
