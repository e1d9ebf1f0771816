//! Marker-based motion monitoring, rigid compensation and the per-stage
//! object-frame ledger.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{
    align_point_sets, spread_singular_values, GeomError, RigidTransform, DEGENERACY_RATIO,
};
use crate::num::Real;
use crate::pathplan::{ProbePose, SweepPlan};

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("marker sets carry different labels")]
    LabelMismatch,
    #[error("invalid marker set: {0}")]
    InvalidMarkerSet(String),
    #[error("index {index} is outside the {len}-point plan")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("stage {stage} is not recorded (current stage {current})")]
    UnknownStage { stage: usize, current: usize },
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("marker stream: {0}")]
    Io(#[from] std::io::Error),
    #[error("marker stream line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkerRole {
    Registration,
    Validation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marker<T: Real> {
    pub label: String,
    pub role: MarkerRole,
    /// Base-frame position, mm.
    pub position: Vector3<T>,
}

/// Labeled markers: registration markers (at least three, non-collinear)
/// plus exactly one held-out validation marker.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerSet<T: Real> {
    markers: Vec<Marker<T>>,
}

impl<T: Real> MarkerSet<T> {
    pub fn new(markers: Vec<Marker<T>>) -> Result<Self, MotionError> {
        let labels: BTreeSet<&str> = markers.iter().map(|m| m.label.as_str()).collect();
        if labels.len() != markers.len() {
            return Err(MotionError::InvalidMarkerSet("duplicate labels".into()));
        }
        let validation = markers
            .iter()
            .filter(|m| m.role == MarkerRole::Validation)
            .count();
        if validation != 1 {
            return Err(MotionError::InvalidMarkerSet(format!(
                "{validation} validation markers, need exactly one"
            )));
        }
        let registration: Vec<_> = markers
            .iter()
            .filter(|m| m.role == MarkerRole::Registration)
            .map(|m| m.position)
            .collect();
        if registration.len() < 3 {
            return Err(MotionError::InvalidMarkerSet(format!(
                "{} registration markers, need at least three",
                registration.len()
            )));
        }
        let sv = spread_singular_values(&registration);
        if sv[0] <= T::default_epsilon() || sv[1] < sv[0] * T::lit(DEGENERACY_RATIO) {
            return Err(MotionError::InvalidMarkerSet(
                "registration markers are collinear".into(),
            ));
        }
        Ok(Self { markers })
    }

    pub fn markers(&self) -> &[Marker<T>] {
        &self.markers
    }

    pub fn get(&self, label: &str) -> Option<&Marker<T>> {
        self.markers.iter().find(|m| m.label == label)
    }

    pub fn validation(&self) -> &Marker<T> {
        self.markers
            .iter()
            .find(|m| m.role == MarkerRole::Validation)
            .expect("validated on construction")
    }

    pub fn registration(&self) -> impl Iterator<Item = &Marker<T>> {
        self.markers
            .iter()
            .filter(|m| m.role == MarkerRole::Registration)
    }

    /// Every marker moved by `t`.
    pub fn transformed(&self, t: &RigidTransform<T>) -> Self {
        self.map_positions(|_, p| t.transform_point(p))
    }

    /// Same labels and roles with positions replaced by `f(index, position)`.
    pub fn map_positions(&self, mut f: impl FnMut(usize, &Vector3<T>) -> Vector3<T>) -> Self {
        Self {
            markers: self
                .markers
                .iter()
                .enumerate()
                .map(|(i, m)| Marker {
                    position: f(i, &m.position),
                    ..m.clone()
                })
                .collect(),
        }
    }

    fn same_labels(&self, other: &Self) -> bool {
        self.markers.len() == other.markers.len()
            && self
                .markers
                .iter()
                .all(|m| other.get(&m.label).is_some_and(|o| o.role == m.role))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct MotionParams {
    /// Per-marker displacement that counts as motion, mm.
    pub detection_threshold_mm: f64,
    /// Sweeps resume only below this compensation error, mm.
    pub resume_threshold_mm: f64,
    /// Arc length re-scanned before the breakpoint on resume, mm.
    pub backoff_mm: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            detection_threshold_mm: 5.0,
            resume_threshold_mm: 10.0,
            backoff_mm: 5.0,
        }
    }
}

/// True iff some marker moved strictly more than `threshold`.
pub fn detect_motion<T: Real>(
    prev: &MarkerSet<T>,
    now: &MarkerSet<T>,
    threshold: T,
) -> Result<bool, MotionError> {
    if !prev.same_labels(now) {
        return Err(MotionError::LabelMismatch);
    }
    Ok(prev.markers.iter().any(|m| {
        let after = now.get(&m.label).expect("labels checked");
        (after.position - m.position).norm() > threshold
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Compensation<T: Real> {
    /// `new = R·old + T`.
    pub transform: RigidTransform<T>,
    /// Held-out marker error `‖P'_m − (R·P_m + T)‖`, mm.
    pub e_mc: T,
}

/// Rigid motion between two marker snapshots, fitted on the registration
/// markers and scored on the validation marker.
pub fn compute_compensation<T: Real>(
    prev: &MarkerSet<T>,
    now: &MarkerSet<T>,
) -> Result<Compensation<T>, MotionError> {
    if !prev.same_labels(now) {
        return Err(MotionError::LabelMismatch);
    }
    let (before, after): (Vec<_>, Vec<_>) = prev
        .registration()
        .map(|m| {
            (
                m.position,
                now.get(&m.label).expect("labels checked").position,
            )
        })
        .unzip();
    let transform = align_point_sets(&before, &after)?.transform;
    let held_out = prev.validation();
    let moved = now.get(&held_out.label).expect("labels checked").position;
    let e_mc = (moved - transform.transform_point(&held_out.position)).norm();
    Ok(Compensation { transform, e_mc })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Resume,
    Abort,
}

pub fn gate_resume<T: Real>(e_mc: T, threshold: T) -> Decision {
    if e_mc < threshold {
        Decision::Resume
    } else {
        Decision::Abort
    }
}

/// Remapped plan plus the index the sweep resumes from.
#[derive(Debug, Clone, PartialEq)]
pub struct Remap<T: Real> {
    pub plan: SweepPlan<T>,
    pub resume_index: usize,
}

/// Moves the plan with the object and backs off along the path: the resume
/// index is the largest `i ≤ breakpoint` whose arc length to the breakpoint
/// is at least `backoff`, or 0 when the path is shorter.
pub fn remap_plan<T: Real>(
    plan: &SweepPlan<T>,
    m: &RigidTransform<T>,
    breakpoint: usize,
    backoff: T,
) -> Result<Remap<T>, MotionError> {
    if breakpoint >= plan.len() {
        return Err(MotionError::IndexOutOfRange {
            index: breakpoint,
            len: plan.len(),
        });
    }
    let mut resume_index = 0;
    let mut arc = T::zero();
    for i in (0..breakpoint).rev() {
        arc += (plan.points[i + 1] - plan.points[i]).norm();
        if arc >= backoff {
            resume_index = i;
            break;
        }
    }
    if backoff <= T::zero() {
        resume_index = breakpoint;
    }
    Ok(Remap {
        plan: plan.transformed(m),
        resume_index,
    })
}

/// Accumulated object-to-base transforms, one per stage; stage 0 is the
/// identity and stage `k` is `M_k ∘ T_{k−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectFrameLedger<T: Real> {
    stages: Vec<RigidTransform<T>>,
}

impl<T: Real> Default for ObjectFrameLedger<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ObjectFrameLedger<T> {
    pub fn new() -> Self {
        Self {
            stages: vec![RigidTransform::identity()],
        }
    }

    pub fn current_stage(&self) -> usize {
        self.stages.len() - 1
    }

    /// Records a compensation and returns the new stage index.
    pub fn update(&mut self, m: &RigidTransform<T>) -> usize {
        let next = m.compose(self.stages.last().expect("stage 0 always present"));
        self.stages.push(next);
        self.current_stage()
    }

    pub fn transform(&self, stage: usize) -> Result<&RigidTransform<T>, MotionError> {
        self.stages.get(stage).ok_or(MotionError::UnknownStage {
            stage,
            current: self.current_stage(),
        })
    }

    pub fn to_object_frame_point(
        &self,
        stage: usize,
        p: &Vector3<T>,
    ) -> Result<Vector3<T>, MotionError> {
        Ok(self.transform(stage)?.inverse().transform_point(p))
    }

    pub fn to_object_frame(
        &self,
        stage: usize,
        pose: &ProbePose<T>,
    ) -> Result<ProbePose<T>, MotionError> {
        Ok(pose.transformed(&self.transform(stage)?.inverse()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionEventRecord<T: Real> {
    /// One-based index of the motion event.
    pub stage: usize,
    pub transform: RigidTransform<T>,
    pub e_mc: T,
    pub decision: Decision,
}

/// JSON-lines form of a [`MotionEventRecord`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionEventDoc {
    pub stage: usize,
    /// Row-major homogeneous matrix, `new = M·old`.
    pub transform: [[f64; 4]; 4],
    pub e_mc: f64,
    pub decision: Decision,
}

impl<T: Real> From<&MotionEventRecord<T>> for MotionEventDoc {
    fn from(e: &MotionEventRecord<T>) -> Self {
        Self {
            stage: e.stage,
            transform: e.transform.to_rows(),
            e_mc: e.e_mc.as_f64(),
            decision: e.decision,
        }
    }
}

pub fn write_events<T: Real>(
    mut out: impl Write,
    events: &[MotionEventRecord<T>],
) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, &MotionEventDoc::from(e))?;
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerDoc {
    pub label: String,
    pub role: MarkerRole,
    pub position: [f64; 3],
}

/// One line of a marker replay stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerFrameDoc {
    pub step: usize,
    pub markers: Vec<MarkerDoc>,
}

impl MarkerFrameDoc {
    pub fn to_set<T: Real>(&self) -> Result<MarkerSet<T>, MotionError> {
        MarkerSet::new(
            self.markers
                .iter()
                .map(|m| Marker {
                    label: m.label.clone(),
                    role: m.role,
                    position: Vector3::new(
                        T::lit(m.position[0]),
                        T::lit(m.position[1]),
                        T::lit(m.position[2]),
                    ),
                })
                .collect(),
        )
    }

    pub fn from_set<T: Real>(step: usize, set: &MarkerSet<T>) -> Self {
        Self {
            step,
            markers: set
                .markers()
                .iter()
                .map(|m| MarkerDoc {
                    label: m.label.clone(),
                    role: m.role,
                    position: [
                        m.position.x.as_f64(),
                        m.position.y.as_f64(),
                        m.position.z.as_f64(),
                    ],
                })
                .collect(),
        }
    }
}

pub fn read_marker_stream(input: impl BufRead) -> Result<Vec<MarkerFrameDoc>, MotionError> {
    let mut frames = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        frames.push(
            serde_json::from_str(&line).map_err(|source| MotionError::Parse {
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(frames)
}

/// Replays a marker stream: the first frame is the reference; each frame
/// that moved past the detection threshold produces one event and becomes
/// the new reference. Resumed events advance the ledger.
pub fn replay_monitor<T: Real>(
    frames: &[MarkerFrameDoc],
    params: &MotionParams,
    ledger: &mut ObjectFrameLedger<T>,
) -> Result<Vec<MotionEventRecord<T>>, MotionError> {
    let mut events = Vec::new();
    let Some(first) = frames.first() else {
        return Ok(events);
    };
    let mut reference = first.to_set::<T>()?;
    for frame in &frames[1..] {
        let now = frame.to_set::<T>()?;
        if !detect_motion(&reference, &now, T::lit(params.detection_threshold_mm))? {
            continue;
        }
        let c = compute_compensation(&reference, &now)?;
        let decision = gate_resume(c.e_mc, T::lit(params.resume_threshold_mm));
        if decision == Decision::Resume {
            ledger.update(&c.transform);
        }
        events.push(MotionEventRecord {
            stage: events.len() + 1,
            transform: c.transform,
            e_mc: c.e_mc,
            decision,
        });
        reference = now;
    }
    Ok(events)
}
