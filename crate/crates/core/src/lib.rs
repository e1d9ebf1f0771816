//! Motion-aware robotic ultrasound sweeps: camera-to-robot calibration,
//! drawn-trajectory extraction, surface-normal probe planning, marker-based
//! motion compensation, compliant contact control, step-wise compounding and
//! a deterministic synthetic world to drive them.
//!
//! The geometric modules are generic over [`num::Real`]; the aliases below
//! fix the scalar for the common cases.

// Negated comparisons deliberately treat NaN as invalid input.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compound;
pub mod control;
pub mod geom;
pub mod imgproc;
pub mod io;
pub mod motion;
pub mod num;
pub mod pathplan;
pub mod simscene;
pub mod stats;
pub mod surface;

pub use num::Real;

pub type RigidTransform = geom::RigidTransform<f64>;
pub type RigidTransformF32 = geom::RigidTransform<f32>;
pub type FrameGraph = geom::FrameGraph<f64>;
pub type FrameGraphF32 = geom::FrameGraph<f32>;
pub type CameraIntrinsics = geom::CameraIntrinsics<f64>;
pub type CameraIntrinsicsF32 = geom::CameraIntrinsics<f32>;
pub type MarkerSet = motion::MarkerSet<f64>;
pub type MarkerSetF32 = motion::MarkerSet<f32>;
pub type ProbePose = pathplan::ProbePose<f64>;
pub type ProbePoseF32 = pathplan::ProbePose<f32>;
pub type SweepPlan = pathplan::SweepPlan<f64>;
pub type SweepPlanF32 = pathplan::SweepPlan<f32>;
pub type ComplianceParams = control::ComplianceParams<f64>;
pub type ComplianceParamsF32 = control::ComplianceParams<f32>;
