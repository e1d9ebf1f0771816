use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::phantom::PhantomSpec;
use super::render::{averaged_markers, observe_markers, true_markers};
use super::SimError;
use crate::geom::RigidTransform;
use crate::motion::{compute_compensation, gate_resume, Compensation, Decision, MotionParams};
use crate::stats::{fraction_below, welch_t_test, Summary, TTest};

/// Repeated compensation trials over translation and rotation sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CompensationStudy {
    #[serde(default = "default_name")]
    pub name: String,
    pub seed: u64,
    #[serde(default)]
    pub phantom: PhantomSpec,
    #[serde(default = "default_sigma")]
    pub marker_sigma_mm: f64,
    /// Observations averaged into the pre-motion reference.
    #[serde(default = "default_samples")]
    pub reference_samples: usize,
    #[serde(default = "default_translations")]
    pub translations_mm: Vec<f64>,
    #[serde(default = "default_rotations")]
    pub rotations_deg: Vec<f64>,
    #[serde(default = "default_repeats")]
    pub seeds_per_magnitude: usize,
    #[serde(default)]
    pub motion: MotionParams,
    /// Errors below this count as good in the summary, mm.
    #[serde(default = "default_good")]
    pub good_below_mm: f64,
}

fn default_name() -> String {
    "compensation".into()
}
fn default_sigma() -> f64 {
    1.5
}
fn default_samples() -> usize {
    50
}
fn default_translations() -> Vec<f64> {
    vec![50.0, 100.0, 150.0, 200.0]
}
fn default_rotations() -> Vec<f64> {
    vec![10.0, 20.0, 30.0, 40.0]
}
fn default_repeats() -> usize {
    10
}
fn default_good() -> f64 {
    4.0
}

impl CompensationStudy {
    pub fn new(seed: u64) -> Self {
        serde_json::from_value(serde_json::json!({ "seed": seed })).expect("defaults deserialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionKind {
    Translation,
    Rotation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Trial {
    pub kind: MotionKind,
    /// mm or degrees.
    pub magnitude: f64,
    pub repeat: usize,
    pub e_mc_mm: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MagnitudeSummary {
    pub kind: MotionKind,
    pub magnitude: f64,
    pub e_mc: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SetSummary {
    pub kind: MotionKind,
    pub e_mc: Summary,
    pub fraction_good: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StudyMetrics {
    pub name: String,
    pub seed: u64,
    pub marker_sigma_mm: f64,
    pub good_below_mm: f64,
    pub by_magnitude: Vec<MagnitudeSummary>,
    pub sets: Vec<SetSummary>,
    /// Both sets pooled.
    pub overall: Option<Summary>,
    pub fraction_good: f64,
    /// Translation set vs rotation set.
    pub t_test: Option<TTest>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub trials: Vec<Trial>,
    pub metrics: StudyMetrics,
}

/// One monitored motion: an averaged pre-motion reference, a single noisy
/// post-motion observation, and the compensation fitted between them.
pub fn simulate_compensation(
    phantom: &PhantomSpec,
    motion: &RigidTransform<f64>,
    sigma: f64,
    reference_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Compensation<f64>, SimError> {
    let before = true_markers(phantom, &RigidTransform::identity())?;
    let reference = averaged_markers(&before, sigma, reference_samples, rng);
    let after = observe_markers(&true_markers(phantom, motion)?, sigma, rng);
    Ok(compute_compensation(&reference, &after)?)
}

/// Horizontal translation in a random direction, or a rotation about a
/// random vertical axis near the phantom center.
fn random_motion(kind: MotionKind, magnitude: f64, rng: &mut ChaCha8Rng) -> RigidTransform<f64> {
    let heading = rng.random_range(0.0..std::f64::consts::TAU);
    match kind {
        MotionKind::Translation => RigidTransform::from_translation(
            Vector3::new(heading.cos(), heading.sin(), 0.0) * magnitude,
        ),
        MotionKind::Rotation => {
            let pivot =
                Vector3::new(heading.cos(), heading.sin(), 0.0) * rng.random_range(0.0..30.0);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            RigidTransform::rotation_about(&Vector3::z(), sign * magnitude.to_radians(), &pivot)
        }
    }
}

pub fn run_compensation_study(study: &CompensationStudy) -> Result<StudyReport, SimError> {
    if study.seeds_per_magnitude == 0 {
        return Err(SimError::InvalidScript(
            "seedsPerMagnitude must be at least 1".into(),
        ));
    }
    let mut trials = Vec::new();
    let sets = [
        (MotionKind::Translation, &study.translations_mm, 0u64),
        (MotionKind::Rotation, &study.rotations_deg, 1u64),
    ];
    for (kind, magnitudes, tag) in sets {
        for (mi, &magnitude) in magnitudes.iter().enumerate() {
            for repeat in 0..study.seeds_per_magnitude {
                // Every trial has its own stream so sets can be resized independently.
                let stream = (tag << 40) | ((mi as u64) << 20) | repeat as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(study.seed);
                rng.set_stream(stream);
                let motion = random_motion(kind, magnitude, &mut rng);
                let c = simulate_compensation(
                    &study.phantom,
                    &motion,
                    study.marker_sigma_mm,
                    study.reference_samples,
                    &mut rng,
                )?;
                trials.push(Trial {
                    kind,
                    magnitude,
                    repeat,
                    e_mc_mm: c.e_mc,
                    decision: gate_resume(c.e_mc, study.motion.resume_threshold_mm),
                });
            }
        }
    }
    let errors = |pred: &dyn Fn(&Trial) -> bool| -> Vec<f64> {
        trials
            .iter()
            .filter(|t| pred(t))
            .map(|t| t.e_mc_mm)
            .collect()
    };
    let mut by_magnitude = Vec::new();
    for (kind, magnitudes, _) in sets {
        for &magnitude in magnitudes.iter() {
            if let Some(s) = Summary::of(&errors(&|t| t.kind == kind && t.magnitude == magnitude)) {
                by_magnitude.push(MagnitudeSummary {
                    kind,
                    magnitude,
                    e_mc: s,
                });
            }
        }
    }
    let set_summary = |kind, values: &[f64]| {
        Summary::of(values).map(|s| SetSummary {
            kind,
            e_mc: s,
            fraction_good: fraction_below(values, study.good_below_mm),
        })
    };
    let translation = errors(&|t| t.kind == MotionKind::Translation);
    let rotation = errors(&|t| t.kind == MotionKind::Rotation);
    let all = errors(&|_| true);
    let metrics = StudyMetrics {
        name: study.name.clone(),
        seed: study.seed,
        marker_sigma_mm: study.marker_sigma_mm,
        good_below_mm: study.good_below_mm,
        by_magnitude,
        sets: [
            set_summary(MotionKind::Translation, &translation),
            set_summary(MotionKind::Rotation, &rotation),
        ]
        .into_iter()
        .flatten()
        .collect(),
        overall: Summary::of(&all),
        fraction_good: fraction_below(&all, study.good_below_mm),
        t_test: welch_t_test(&translation, &rotation),
    };
    Ok(StudyReport { trials, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{MarkerRole, MarkerSet};

    #[test]
    fn noiseless_trials_are_exact() {
        let mut study = CompensationStudy::new(3);
        study.marker_sigma_mm = 0.0;
        let report = run_compensation_study(&study).unwrap();
        assert_eq!(report.trials.len(), 80);
        assert!(report
            .trials
            .iter()
            .all(|t| t.e_mc_mm < 1e-9 && t.decision == Decision::Resume));
    }

    #[test]
    fn e_mc_matches_direct_evaluation() {
        // Independent check: fit on the four registration markers with the
        // same noisy sets, then evaluate the held-out residual by hand.
        let phantom = PhantomSpec::default();
        let motion = RigidTransform::from_translation(Vector3::new(120.0, -40.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = simulate_compensation(&phantom, &motion, 1.5, 50, &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let before = true_markers(&phantom, &RigidTransform::identity()).unwrap();
        let reference = averaged_markers(&before, 1.5, 50, &mut rng);
        let after: MarkerSet<f64> =
            observe_markers(&true_markers(&phantom, &motion).unwrap(), 1.5, &mut rng);
        let v = reference
            .markers()
            .iter()
            .find(|m| m.role == MarkerRole::Validation)
            .unwrap();
        let moved = after.get(&v.label).unwrap().position;
        let residual =
            (moved - c.transform.rotation() * v.position - c.transform.translation()).norm();
        assert!((residual - c.e_mc).abs() < 1e-12);
    }

    #[test]
    fn study_is_deterministic_and_sets_are_independent_streams() {
        let study = CompensationStudy::new(11);
        let a = run_compensation_study(&study).unwrap();
        assert_eq!(a, run_compensation_study(&study).unwrap());
        let mut fewer = study.clone();
        fewer.rotations_deg.truncate(1);
        let b = run_compensation_study(&fewer).unwrap();
        assert_eq!(a.trials[..40], b.trials[..40]);
    }
}
