use std::path::Path;

use nalgebra::Vector3;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::phantom::{distance_to_polyline, PhantomSpec};
use super::render::{
    averaged_markers, observe_markers, render_scene, render_us_frame, true_markers, CameraSpec,
    GroundTruth, NoiseConfig, SceneCapture, UsSpec,
};
use super::SimError;
use crate::compound::{compound, vessel_centerline, CenterlineParams, USFrame, Volume};
use crate::geom::{hand_eye_calibrate, CalibrationPair, FrameGraph, RigidTransform};
use crate::imgproc::{
    column_coverage, extract_roi, extract_trajectory, filter_seeds, seed_points, ExtractionParams,
    ImageBundle, Trajectory2D,
};
use crate::io;
use crate::motion::{
    compute_compensation, detect_motion, gate_resume, remap_plan, write_events, Decision,
    MotionEventRecord, MotionParams, ObjectFrameLedger,
};
use crate::pathplan::{
    find_key_points, optimize_orientations, KeyPointParams, ProbePose, SweepPlan,
};
use crate::stats::Summary;
use crate::surface::{
    backproject_trajectory, depth_cloud, estimate_normals, toward_camera, DEFAULT_RADIUS_MM,
};

/// Rigid motion of the phantom injected before a sweep step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct MotionEventSpec {
    /// Sweep step (executed pose count) before which the object moves.
    pub at_step: usize,
    #[serde(default)]
    pub translation_mm: [f64; 3],
    #[serde(default)]
    pub rotation_deg: f64,
    #[serde(default = "vertical")]
    pub axis: [f64; 3],
    #[serde(default)]
    pub pivot_mm: [f64; 3],
}

fn vertical() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

impl MotionEventSpec {
    /// Rotation about the pivot followed by the translation.
    pub fn transform(&self) -> RigidTransform<f64> {
        let axis = Vector3::from(self.axis);
        let rot = if self.rotation_deg == 0.0 || axis.norm() == 0.0 {
            RigidTransform::identity()
        } else {
            RigidTransform::rotation_about(
                &axis.normalize(),
                self.rotation_deg.to_radians(),
                &Vector3::from(self.pivot_mm),
            )
        };
        RigidTransform::from_translation(Vector3::from(self.translation_mm)).compose(&rot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct PlanConfig {
    /// Key-point merge threshold `T_1`, index·mm.
    pub merge_threshold: f64,
    /// Neighborhood radius of the normal fit, mm.
    pub normal_radius_mm: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            merge_threshold: 50.0,
            normal_radius_mm: DEFAULT_RADIUS_MM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct CompoundConfig {
    pub voxel_size_mm: f64,
    pub centerline: CenterlineParams,
}

impl Default for CompoundConfig {
    fn default() -> Self {
        Self {
            voxel_size_mm: 1.0,
            centerline: CenterlineParams::default(),
        }
    }
}

/// One sweep experiment: world, noise, injected motion and pipeline settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScenarioScript {
    #[serde(default = "default_name")]
    pub name: String,
    pub seed: u64,
    #[serde(default)]
    pub phantom: PhantomSpec,
    #[serde(default)]
    pub camera: CameraSpec,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub events: Vec<MotionEventSpec>,
    #[serde(default)]
    pub extract: ExtractionParams,
    #[serde(default)]
    pub key_points: KeyPointParams,
    #[serde(default)]
    pub plan: PlanConfig,
    #[serde(default)]
    pub motion: MotionParams,
    /// When false the plan still follows the object but frames are not
    /// mapped back to the object frame.
    #[serde(default = "yes")]
    pub compensate: bool,
    #[serde(default)]
    pub us: UsSpec,
    #[serde(default)]
    pub compound: CompoundConfig,
    /// Plan points advanced per sweep step.
    #[serde(default = "one")]
    pub step_stride: usize,
}

fn default_name() -> String {
    "scenario".into()
}

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

impl ScenarioScript {
    pub fn new(name: &str, seed: u64) -> Self {
        Self {
            name: name.into(),
            seed,
            phantom: PhantomSpec::default(),
            camera: CameraSpec::default(),
            noise: NoiseConfig::default(),
            events: Vec::new(),
            extract: ExtractionParams::default(),
            key_points: KeyPointParams::default(),
            plan: PlanConfig::default(),
            motion: MotionParams::default(),
            compensate: true,
            us: UsSpec::default(),
            compound: CompoundConfig::default(),
            step_stride: 1,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.step_stride == 0 {
            return Err(SimError::InvalidScript(
                "stepStride must be at least 1".into(),
            ));
        }
        if self.events.windows(2).any(|w| w[1].at_step < w[0].at_step) {
            return Err(SimError::InvalidScript(
                "motion events must be ordered by step".into(),
            ));
        }
        if self.phantom.trajectory_xy_mm.len() < 2 {
            return Err(SimError::InvalidScript(
                "trajectory needs at least two vertices".into(),
            ));
        }
        self.extract.validate()?;
        Ok(())
    }
}

/// One executed probe pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PoseRecord {
    pub step: usize,
    pub plan_index: usize,
    /// Ledger stage the frame at this pose is tagged with.
    pub stage: usize,
    /// Set on the first pose after a motion event: the index of that event.
    pub after_event: Option<usize>,
    pub pose: ProbePose<f64>,
    /// Distance of the probe position from the true path, mm.
    pub tracking_error_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SegmentMetric {
    pub start: usize,
    pub end: usize,
    pub z_axis: [f64; 3],
    /// Normalized mean true normal over the segment's points.
    pub truth_normal: [f64; 3],
    pub angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EventMetric {
    pub stage: usize,
    pub step: usize,
    pub e_mc_mm: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CenterlineSummary {
    pub slices: usize,
    pub max_jump_mm: f64,
    pub max_jump_voxels: f64,
    pub mean_radius_mm: f64,
    pub true_radius_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepMetrics {
    pub name: String,
    pub seed: u64,
    pub steps: usize,
    pub calibration_rmse_mm: f64,
    pub coverage: f64,
    /// Backprojected trajectory vs the true path.
    pub path_error: Option<Summary>,
    /// Executed probe positions vs the true path, in the true object frame.
    pub tracking_error: Option<Summary>,
    pub key_points: Vec<usize>,
    /// Object-frame positions of the key points.
    pub key_point_positions: Vec<[f64; 3]>,
    pub segments: Vec<SegmentMetric>,
    pub events: Vec<EventMetric>,
    pub centerline: Option<CenterlineSummary>,
}

/// Everything a sweep produced.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub script: ScenarioScript,
    pub graph: FrameGraph<f64>,
    pub trajectory: Trajectory2D,
    pub plan: SweepPlan<f64>,
    pub frames: Vec<USFrame>,
    pub poses: Vec<PoseRecord>,
    pub events: Vec<MotionEventRecord<f64>>,
    pub ledger: ObjectFrameLedger<f64>,
    pub volume: Option<Volume>,
    pub truth: GroundTruth,
    pub metrics: SweepMetrics,
}

/// Chessboard intersections on two boards at different heights, base frame.
fn calibration_targets() -> Vec<Vector3<f64>> {
    let mut pts = Vec::new();
    for (z, hx, hy) in [(0.0, 60.0, 40.0), (60.0, 40.0, 30.0)] {
        for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
            pts.push(Vector3::new(sx * hx, sy * hy, z));
        }
    }
    pts
}

/// Synthetic calibration pairs seen by `camera`, camera side noisy.
pub fn calibration_pairs(
    camera: &CameraSpec,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<CalibrationPair<f64>> {
    let camera_from_base = camera.base_from_camera().inverse();
    let noise = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma is positive"));
    calibration_targets()
        .into_iter()
        .map(|base| {
            let mut c = camera_from_base.transform_point(&base);
            if let Some(n) = &noise {
                c += Vector3::from_fn(|_, _| n.sample(rng));
            }
            CalibrationPair { camera: c, base }
        })
        .collect()
}

fn frame_seed(seed: u64, step: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (step as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

fn array(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Calibration pairs and the pre-sweep RGB-D capture of a scenario, plus the
/// generator the rest of the run continues from.
pub fn initial_capture(
    script: &ScenarioScript,
) -> Result<(Vec<CalibrationPair<f64>>, SceneCapture, ChaCha8Rng), SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    let pairs = calibration_pairs(&script.camera, script.noise.calibration_sigma_mm, &mut rng);
    let capture = render_scene(
        &script.phantom,
        &script.camera,
        &RigidTransform::identity(),
        &script.noise,
        rng.next_u64(),
    )?;
    Ok((pairs, capture, rng))
}

/// Surface path, normals, key points and sweep plan of an extracted stripe.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPath {
    pub points: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub key_points: Vec<usize>,
    pub plan: SweepPlan<f64>,
}

/// Back-projects the trajectory, estimates normals from the depth around it
/// and optimizes the probe orientations.
pub fn plan_trajectory(
    trajectory: &Trajectory2D,
    bundle: &ImageBundle,
    graph: &FrameGraph<f64>,
    key_point_params: &KeyPointParams,
    config: &PlanConfig,
) -> Result<PlannedPath, SimError> {
    let (points, _) = backproject_trajectory(trajectory, bundle, graph)?;
    // The depth cloud only needs to cover the normal neighborhoods.
    let margin = 40;
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for p in &trajectory.centerline {
        let (x, y) = (p.x.max(0.0) as usize, p.y.max(0.0) as usize);
        (x0, y0, x1, y1) = (x0.min(x), y0.min(y), x1.max(x), y1.max(y));
    }
    let bounds = [
        x0.saturating_sub(margin),
        y0.saturating_sub(margin),
        x1 + margin + 1,
        y1 + margin + 1,
    ];
    let cloud = depth_cloud(bundle, graph, Some(bounds))?;
    let toward = toward_camera(graph)?;
    let normals: Vec<_> = estimate_normals(&points, &cloud, config.normal_radius_mm, &toward)?
        .into_iter()
        .map(|n| n.direction)
        .collect();
    let key_points = find_key_points(&points, key_point_params)?;
    let plan = optimize_orientations(&points, &key_points, &normals, config.merge_threshold)?;
    Ok(PlannedPath {
        points,
        normals,
        key_points,
        plan,
    })
}

/// Runs calibrate → render → extract → backproject → plan → monitored sweep
/// → compound on the synthetic world.
///
/// Motion is checked at every step boundary. On detection the sweep stops,
/// the compensation is estimated from an averaged pre-motion reference and a
/// single post-motion observation, gated, and the plan is remapped and
/// resumed after the back-off.
pub fn run_scenario(script: &ScenarioScript) -> Result<SweepRun, SimError> {
    script.validate()?;
    let spec = &script.phantom;
    let noise = &script.noise;

    let (pairs, capture, mut rng) = initial_capture(script)?;
    let k = script.camera.camera_intrinsics()?;
    let calibration = hand_eye_calibrate(&FrameGraph::new(k), &pairs)?;
    let graph = calibration.graph;

    let bundle = &capture.bundle;
    let [end_a, end_b] = &capture.end_observations;
    let roi = extract_roi(bundle, Some(end_a), Some(end_b), &script.extract)?;
    let seeds = filter_seeds(&roi, &seed_points(&roi, &script.extract), &script.extract);
    let trajectory = extract_trajectory(&roi, &seeds, &script.extract)?;
    let coverage = column_coverage(&trajectory, &capture.truth.stripe_mask, &roi).fraction();

    let PlannedPath {
        points,
        key_points,
        plan,
        ..
    } = plan_trajectory(
        &trajectory,
        bundle,
        &graph,
        &script.key_points,
        &script.plan,
    )?;

    let truth = capture.truth;
    let path_errors: Vec<f64> = points
        .iter()
        .map(|p| distance_to_polyline(&truth.path, p).0)
        .collect();
    let segments = plan
        .segments
        .iter()
        .map(|s| {
            let mean: Vector3<f64> = (s.start..s.end.max(s.start + 1))
                .map(|i| truth.normals[distance_to_polyline(&truth.path, &plan.points[i]).1])
                .sum();
            let truth_normal = mean.normalize();
            SegmentMetric {
                start: s.start,
                end: s.end,
                z_axis: array(&s.z_axis),
                truth_normal: array(&truth_normal),
                angle_deg: s
                    .z_axis
                    .dot(&truth_normal)
                    .clamp(-1.0, 1.0)
                    .acos()
                    .to_degrees(),
            }
        })
        .collect();

    // Sweep.
    let original_plan = plan.clone();
    let mut plan = plan;
    let mut ledger = ObjectFrameLedger::new();
    let mut base_from_object = RigidTransform::identity();
    let mut reference = averaged_markers(
        &true_markers(spec, &base_from_object)?,
        noise.marker_sigma_mm,
        noise.reference_samples,
        &mut rng,
    );
    let mut frames = Vec::new();
    let mut poses: Vec<PoseRecord> = Vec::new();
    let mut events = Vec::new();
    let mut event_metrics = Vec::new();
    let mut next_event = 0;
    let mut pending_event = None;
    let (mut index, mut step) = (0, 0);
    let detect = script.motion.detection_threshold_mm;
    while index < plan.len() {
        while next_event < script.events.len() && script.events[next_event].at_step == step {
            base_from_object = script.events[next_event]
                .transform()
                .compose(&base_from_object);
            next_event += 1;
        }
        let truth_now = true_markers(spec, &base_from_object)?;
        let snapshot = observe_markers(&truth_now, noise.monitor_sigma_mm, &mut rng);
        if detect_motion(&reference, &snapshot, detect)? {
            let after = observe_markers(&truth_now, noise.marker_sigma_mm, &mut rng);
            let c = compute_compensation(&reference, &after)?;
            let decision = gate_resume(c.e_mc, script.motion.resume_threshold_mm);
            let stage = events.len() + 1;
            events.push(MotionEventRecord {
                stage,
                transform: c.transform,
                e_mc: c.e_mc,
                decision,
            });
            event_metrics.push(EventMetric {
                stage,
                step,
                e_mc_mm: c.e_mc,
                decision,
            });
            if decision == Decision::Abort {
                return Err(SimError::AbortedSweep {
                    stage,
                    e_mc: c.e_mc,
                });
            }
            let remap = remap_plan(&plan, &c.transform, index, script.motion.backoff_mm)?;
            plan = remap.plan;
            index = remap.resume_index;
            if script.compensate {
                ledger.update(&c.transform);
            }
            reference = averaged_markers(
                &truth_now,
                noise.marker_sigma_mm,
                noise.reference_samples,
                &mut rng,
            );
            pending_event = Some(stage);
            continue;
        }
        let pose = plan.pose_at(index)?;
        let mut frame = render_us_frame(
            spec,
            &script.us,
            &pose,
            &base_from_object,
            frame_seed(script.seed, step),
        );
        frame.stage = ledger.current_stage();
        let q = base_from_object.inverse().transform_point(&pose.position);
        poses.push(PoseRecord {
            step,
            plan_index: index,
            stage: frame.stage,
            after_event: pending_event.take(),
            pose,
            tracking_error_mm: distance_to_polyline(&truth.path, &q).0,
        });
        frames.push(frame);
        index += script.step_stride;
        step += 1;
    }
    if next_event < script.events.len() {
        return Err(SimError::InvalidScript(format!(
            "motion event at step {} is beyond the sweep of {step} steps",
            script.events[next_event].at_step
        )));
    }

    let volume = if frames.is_empty() {
        None
    } else {
        Some(compound(&frames, &ledger, script.compound.voxel_size_mm)?)
    };
    let centerline = volume
        .as_ref()
        .and_then(|v| vessel_centerline(v, &script.compound.centerline).ok())
        .map(|c| CenterlineSummary {
            slices: c.slices.len(),
            max_jump_mm: c.max_jump_mm,
            max_jump_voxels: c.max_jump_voxels(),
            mean_radius_mm: c.mean_radius_mm(),
            true_radius_mm: spec.tube.radius_mm,
        });
    let tracking: Vec<f64> = poses.iter().map(|p| p.tracking_error_mm).collect();
    let metrics = SweepMetrics {
        name: script.name.clone(),
        seed: script.seed,
        steps: poses.len(),
        calibration_rmse_mm: calibration.rmse,
        coverage,
        path_error: Summary::of(&path_errors),
        tracking_error: Summary::of(&tracking),
        key_points: key_points.clone(),
        key_point_positions: key_points.iter().map(|&i| array(&points[i])).collect(),
        segments,
        events: event_metrics,
        centerline,
    };
    Ok(SweepRun {
        script: script.clone(),
        graph,
        trajectory,
        plan: original_plan,
        frames,
        poses,
        events,
        ledger,
        volume,
        truth,
        metrics,
    })
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct PlanDoc<'a> {
    points: Vec<[f64; 3]>,
    segments: &'a [crate::pathplan::Segment<f64>],
}

impl SweepRun {
    /// Writes the run as `frames/frame_NNNNN.png`, `poses.jsonl`,
    /// `events.jsonl`, `volume.raw` + `volume.json`, `plan.json`,
    /// `trajectory.json`, `scenario.json` and `metrics.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), SimError> {
        let frames_dir = dir.join("frames");
        io::create_dir(&frames_dir)?;
        for (i, f) in self.frames.iter().enumerate() {
            io::write_gray(&frames_dir.join(format!("frame_{i:05}.png")), &f.pixels)?;
        }
        let mut out = io::create_file(&dir.join("poses.jsonl"))?;
        for p in &self.poses {
            serde_json::to_writer(&mut out, p).map_err(std::io::Error::from)?;
            std::io::Write::write_all(&mut out, b"\n")?;
        }
        write_events(io::create_file(&dir.join("events.jsonl"))?, &self.events)?;
        if let Some(v) = &self.volume {
            v.write_raw(io::create_file(&dir.join("volume.raw"))?)?;
            io::write_json(&dir.join("volume.json"), &v.sidecar())?;
        }
        let plan = PlanDoc {
            points: self.plan.points.iter().map(array).collect(),
            segments: &self.plan.segments,
        };
        io::write_json(&dir.join("plan.json"), &plan)?;
        let traj: Vec<[f64; 2]> = self
            .trajectory
            .centerline
            .iter()
            .map(|p| [p.x, p.y])
            .collect();
        io::write_json(&dir.join("trajectory.json"), &traj)?;
        io::write_json(&dir.join("scenario.json"), &self.script)?;
        io::write_json(&dir.join("metrics.json"), &self.metrics)?;
        Ok(())
    }
}
