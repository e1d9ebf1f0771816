//! Key points of the scanning path and per-segment probe orientations.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::RigidTransform;
use crate::num::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("path needs at least {required} points, got {got}")]
    TooFewPoints { required: usize, got: usize },
    #[error("path start and end coincide")]
    DegeneratePath,
    #[error("{normals} normals for {points} path points")]
    NormalCountMismatch { points: usize, normals: usize },
    #[error("segment {start}..{end} has no well-defined orientation")]
    DegenerateOrientation { start: usize, end: usize },
    #[error("key point index {0} is out of range")]
    KeyPointOutOfRange(usize),
    #[error("point index {index} is outside the {len}-point plan")]
    IndexOutOfRange { index: usize, len: usize },
}

/// Path expressed in its start→end frame: `xp` along the chord, `yp` the
/// perpendicular distance from the chord line.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFrame2D<T: Real> {
    pub xp: Vec<T>,
    pub yp: Vec<T>,
    /// Path start `P_s`.
    pub origin: Vector3<T>,
    /// Unit chord direction `X_p`.
    pub axis: Vector3<T>,
}

pub fn project_path<T: Real>(points: &[Vector3<T>]) -> Result<PathFrame2D<T>, PlanError> {
    if points.len() < 2 {
        return Err(PlanError::TooFewPoints {
            required: 2,
            got: points.len(),
        });
    }
    let start = points[0];
    let chord = points[points.len() - 1] - start;
    let length = chord.norm();
    if length <= T::one() {
        return Err(PlanError::DegeneratePath);
    }
    let axis = chord / length;
    let (xp, yp) = points
        .iter()
        .map(|p| {
            let d = p - start;
            (d.dot(&axis), d.cross(&axis).norm())
        })
        .unzip();
    Ok(PathFrame2D {
        xp,
        yp,
        origin: start,
        axis,
    })
}

/// Indices `i` in `1..n−1` with `D(i−1)·D(i) ≤ 0` and `|D(i−1)| + |D(i)| > T_k`,
/// where `D(i) = yp(i+1) − yp(i)`.
pub fn detect_key_points<T: Real>(frame: &PathFrame2D<T>, threshold: T) -> Vec<usize> {
    let yp = &frame.yp;
    if yp.len() < 3 {
        return Vec::new();
    }
    (1..yp.len() - 1)
        .filter(|&i| {
            let (d0, d1) = (yp[i] - yp[i - 1], yp[i + 1] - yp[i]);
            d0 * d1 <= T::zero() && d0.abs() + d1.abs() > threshold
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct KeyPointParams {
    /// Turning threshold `T_k`, mm.
    pub threshold_mm: f64,
    /// Arc-length bin size the path is resampled to before the turning test, mm.
    pub sample_spacing_mm: f64,
}

impl Default for KeyPointParams {
    fn default() -> Self {
        Self {
            threshold_mm: 5.0,
            sample_spacing_mm: 10.0,
        }
    }
}

/// Key points of a densely sampled path.
///
/// The path is averaged over arc-length bins of `sample_spacing_mm`; runs
/// of bins where `yp` keeps its direction are collapsed into one difference,
/// and the turning test is applied between consecutive runs. Each turn is
/// refined to the extremal `yp` sample among the original points of the
/// turning bin and its two neighbors. Returned indices are strictly
/// increasing and exclude both endpoints.
pub fn find_key_points<T: Real>(
    points: &[Vector3<T>],
    params: &KeyPointParams,
) -> Result<Vec<usize>, PlanError> {
    let frame = project_path(points)?;
    let threshold = T::lit(params.threshold_mm);
    let spacing = T::lit(params.sample_spacing_mm);
    if !(spacing > T::zero()) {
        return Ok(detect_key_points(&frame, threshold));
    }
    let mut bins: Vec<Vec<usize>> = Vec::new();
    let mut arc = T::zero();
    for i in 0..points.len() {
        if i > 0 {
            arc += (points[i] - points[i - 1]).norm();
        }
        let b = (arc / spacing).floor().as_f64() as usize;
        if bins.len() <= b {
            bins.resize_with(b + 1, Vec::new);
        }
        bins[b].push(i);
    }
    bins.retain(|b| !b.is_empty());
    let yp: Vec<T> = bins
        .iter()
        .map(|b| b.iter().fold(T::zero(), |acc, &i| acc + frame.yp[i]) / T::lit(b.len() as f64))
        .collect();
    if yp.len() < 3 {
        return Ok(Vec::new());
    }

    // Monotone runs: (first bin, last bin, summed difference).
    let mut runs: Vec<(usize, usize, T)> = Vec::new();
    for k in 0..yp.len() - 1 {
        let d = yp[k + 1] - yp[k];
        match runs.last_mut() {
            Some(run) if run.2 * d >= T::zero() => {
                run.1 = k + 1;
                run.2 += d;
            }
            _ => runs.push((k, k + 1, d)),
        }
    }

    let last = points.len() - 1;
    let mut keys: Vec<usize> = runs
        .windows(2)
        .filter(|w| w[0].2 * w[1].2 <= T::zero() && w[0].2.abs() + w[1].2.abs() > threshold)
        .map(|w| {
            let k = w[0].1;
            let peak = w[0].2 > T::zero();
            let lo = k.saturating_sub(1);
            let hi = (k + 1).min(bins.len() - 1);
            bins[lo..=hi]
                .iter()
                .flatten()
                .copied()
                .reduce(|best, i| {
                    let better = if peak {
                        frame.yp[i] > frame.yp[best]
                    } else {
                        frame.yp[i] < frame.yp[best]
                    };
                    if better {
                        i
                    } else {
                        best
                    }
                })
                .unwrap_or(bins[k][0])
        })
        .filter(|&i| i > 0 && i < last)
        .collect();
    keys.sort_unstable();
    keys.dedup();
    Ok(keys)
}

/// Probe pose: TCP position and orthonormal axes in the base frame.
/// `z` is the probe's pressing axis; `y` is the long side of the footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbePose<T: Real> {
    pub position: Vector3<T>,
    pub x_axis: Vector3<T>,
    pub y_axis: Vector3<T>,
    pub z_axis: Vector3<T>,
}

impl<T: Real> ProbePose<T> {
    pub fn rotation(&self) -> Matrix3<T> {
        Matrix3::from_columns(&[self.x_axis, self.y_axis, self.z_axis])
    }

    /// `base_from_tcp`.
    pub fn to_transform(&self) -> RigidTransform<T> {
        RigidTransform::new(self.rotation(), self.position).expect("pose axes are orthonormal")
    }

    pub fn from_transform(t: &RigidTransform<T>) -> Self {
        let r = t.rotation();
        Self {
            position: *t.translation(),
            x_axis: r.column(0).into_owned(),
            y_axis: r.column(1).into_owned(),
            z_axis: r.column(2).into_owned(),
        }
    }

    pub fn transformed(&self, t: &RigidTransform<T>) -> Self {
        Self::from_transform(&t.compose(&self.to_transform()))
    }
}

/// Inclusive range of path indices sharing one orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment<T: Real> {
    pub start: usize,
    pub end: usize,
    pub x_axis: Vector3<T>,
    pub y_axis: Vector3<T>,
    pub z_axis: Vector3<T>,
}

/// Ordered probe poses along the path. Consecutive segments share their
/// boundary index; at a boundary the later segment's orientation applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan<T: Real> {
    pub points: Vec<Vector3<T>>,
    pub segments: Vec<Segment<T>>,
}

impl<T: Real> SweepPlan<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn segment_of(&self, index: usize) -> Option<&Segment<T>> {
        self.segments
            .iter()
            .rev()
            .find(|s| s.start <= index && index <= s.end)
    }

    pub fn pose_at(&self, index: usize) -> Result<ProbePose<T>, PlanError> {
        let seg = self.segment_of(index).ok_or(PlanError::IndexOutOfRange {
            index,
            len: self.len(),
        })?;
        Ok(ProbePose {
            position: self.points[index],
            x_axis: seg.x_axis,
            y_axis: seg.y_axis,
            z_axis: seg.z_axis,
        })
    }

    pub fn poses(&self) -> Vec<ProbePose<T>> {
        (0..self.len())
            .filter_map(|i| self.pose_at(i).ok())
            .collect()
    }

    /// Arc length from index `from` to `to` (`from ≤ to`).
    pub fn arc_length(&self, from: usize, to: usize) -> T {
        (from..to).fold(T::zero(), |acc, i| {
            acc + (self.points[i + 1] - self.points[i]).norm()
        })
    }

    /// Applies `t` to every position and axis.
    pub fn transformed(&self, t: &RigidTransform<T>) -> Self {
        let rotate = |v: &Vector3<T>| t.transform_vector(v);
        Self {
            points: self.points.iter().map(|p| t.transform_point(p)).collect(),
            segments: self
                .segments
                .iter()
                .map(|s| Segment {
                    start: s.start,
                    end: s.end,
                    x_axis: rotate(&s.x_axis),
                    y_axis: rotate(&s.y_axis),
                    z_axis: rotate(&s.z_axis),
                })
                .collect(),
        }
    }
}

fn segment_axes<T: Real>(
    points: &[Vector3<T>],
    normals: &[Vector3<T>],
    start: usize,
    end: usize,
) -> Result<[Vector3<T>; 3], PlanError> {
    let degenerate = PlanError::DegenerateOrientation { start, end };
    let mean = normals[start..end]
        .iter()
        .fold(Vector3::zeros(), |acc, n| acc + n)
        / T::lit((end - start) as f64);
    let z = mean
        .try_normalize(T::default_epsilon())
        .ok_or(degenerate.clone())?;
    let chord = points[end] - points[start];
    let scale = chord.norm() * mean.norm();
    let y = mean.cross(&chord);
    if y.norm() <= T::lit(1e-9) * scale || y.norm() <= T::default_epsilon() {
        return Err(degenerate);
    }
    let y = y.normalize();
    let x = y.cross(&z);
    // Re-orthogonalize: y ⟂ z exactly, then x completes the right-handed frame.
    let y = (y - z * y.dot(&z)).normalize();
    let x = (x - z * x.dot(&z) - y * x.dot(&y)).normalize();
    Ok([x, y, z])
}

/// Groups key points into segments and assigns each one probe orientation.
///
/// Key points `I(j)`, `I(j+m)` are merged while
/// `(I(j+m) − I(j))·‖P(I(j+m)) − P(I(j))‖ ≤ T_1`. For a segment `[a, b]`,
/// `z` is the normalized mean normal over `a..b`, `y ∝ z_mean × (P_b − P_a)`
/// and `x = y × z`.
pub fn optimize_orientations<T: Real>(
    points: &[Vector3<T>],
    key_points: &[usize],
    normals: &[Vector3<T>],
    merge_threshold: T,
) -> Result<SweepPlan<T>, PlanError> {
    let n = points.len();
    if n < 2 {
        return Err(PlanError::TooFewPoints {
            required: 2,
            got: n,
        });
    }
    if normals.len() != n {
        return Err(PlanError::NormalCountMismatch {
            points: n,
            normals: normals.len(),
        });
    }
    if let Some(&bad) = key_points.iter().find(|&&k| k >= n) {
        return Err(PlanError::KeyPointOutOfRange(bad));
    }
    let mut bounds = vec![0];
    let mut interior: Vec<usize> = key_points
        .iter()
        .copied()
        .filter(|&k| k > 0 && k < n - 1)
        .collect();
    interior.sort_unstable();
    interior.dedup();
    bounds.extend(interior);
    bounds.push(n - 1);

    let last = bounds.len() - 1;
    let mut segments = Vec::new();
    let (mut j, mut m) = (0, 1);
    while j < last {
        let (a, b) = (bounds[j], bounds[j + m]);
        let gap = T::lit((b - a) as f64) * (points[b] - points[a]).norm();
        if gap <= merge_threshold && j + m < last {
            m += 1;
            continue;
        }
        let [x_axis, y_axis, z_axis] = segment_axes(points, normals, a, b)?;
        segments.push(Segment {
            start: a,
            end: b,
            x_axis,
            y_axis,
            z_axis,
        });
        j += m;
        m = 1;
    }
    Ok(SweepPlan {
        points: points.to_vec(),
        segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(yp: &[f64]) -> PathFrame2D<f64> {
        PathFrame2D {
            xp: (0..yp.len()).map(|i| i as f64).collect(),
            yp: yp.to_vec(),
            origin: Vector3::zeros(),
            axis: Vector3::x(),
        }
    }

    #[test]
    fn turning_points_follow_definition() {
        assert_eq!(
            detect_key_points(&frame(&[0.0, 1.0, 2.0, 1.0, 0.0]), 1.0),
            vec![2]
        );
        assert_eq!(
            detect_key_points(&frame(&[0.0, 3.0, 6.0, 3.0, 0.0]), 5.0),
            vec![2]
        );
        // Equality is not enough.
        assert!(detect_key_points(&frame(&[0.0, 2.5, 5.0, 2.5, 0.0]), 5.0).is_empty());
        assert!(detect_key_points(&frame(&[0.0, 0.0, 0.1, 0.0, 0.0]), 1.0).is_empty());
        assert!(detect_key_points(&frame(&[0.0, 1.0, 2.0, 1.0, 0.0]), 5.0).is_empty());
        assert!(detect_key_points(&frame(&[0.0, 0.0, 0.0, 0.0]), 5.0).is_empty());
        assert!(detect_key_points(&frame(&[0.0, 9.0]), 5.0).is_empty());
    }

    #[test]
    fn projection_measures_chord_distance() {
        let pts = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(50.0, 20.0, 0.0),
            Vector3::new(100.0, 0.0, 0.0),
        ];
        let f = project_path(&pts).unwrap();
        assert_eq!(f.xp, vec![0.0, 50.0, 100.0]);
        assert_eq!(f.yp, vec![0.0, 20.0, 0.0]);
        assert_eq!(f.axis, Vector3::x());
        assert_eq!(
            project_path(&pts[..1]),
            Err(PlanError::TooFewPoints {
                required: 2,
                got: 1
            })
        );
        assert_eq!(
            project_path(&[pts[0], pts[1], pts[0]]),
            Err(PlanError::DegeneratePath)
        );
    }

    fn vee(n: usize, depth: f64) -> Vec<Vector3<f64>> {
        // Dense V in plan view: 0.5 mm steps, apex at the middle.
        (0..n)
            .map(|i| {
                let x = i as f64 * 0.5;
                let mid = (n - 1) as f64 * 0.25;
                Vector3::new(x, depth * (1.0 - (x - mid).abs() / mid), 0.0)
            })
            .collect()
    }

    #[test]
    fn binned_detection_finds_dense_apex() {
        for (n, depth) in [(401, 40.0), (400, 15.0), (237, 30.0)] {
            let pts = vee(n, depth);
            // Dense samples never reach the threshold on their own.
            assert!(detect_key_points(&project_path(&pts).unwrap(), 5.0).is_empty());
            let keys = find_key_points(&pts, &KeyPointParams::default()).unwrap();
            let top = pts.iter().map(|p| p.y).fold(f64::MIN, f64::max);
            assert_eq!(keys.len(), 1, "n = {n}");
            assert_eq!(pts[keys[0]].y, top);
        }
        // A shallow bump stays below the threshold.
        assert!(find_key_points(&vee(401, 2.0), &KeyPointParams::default())
            .unwrap()
            .is_empty());
        let line: Vec<_> = (0..200)
            .map(|i| Vector3::new(i as f64 * 0.5, 0.0, 0.0))
            .collect();
        assert!(find_key_points(&line, &KeyPointParams::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn straight_flat_path_is_one_segment() {
        let pts: Vec<_> = (0..50).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let normals = vec![Vector3::z(); 50];
        let plan = optimize_orientations(&pts, &[], &normals, 100.0).unwrap();
        assert_eq!(plan.segments.len(), 1);
        let s = &plan.segments[0];
        assert_eq!((s.start, s.end), (0, 49));
        assert!((s.z_axis - Vector3::z()).norm() < 1e-12);
        // y ∝ z × chord = z × x = y; x = y × z = x.
        assert!((s.y_axis - Vector3::y()).norm() < 1e-12);
        assert!((s.x_axis - Vector3::x()).norm() < 1e-12);
        for pose in plan.poses() {
            assert!((pose.rotation().determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn crease_splits_into_two_faces() {
        let a = 15f64.to_radians();
        let n1 = Vector3::new(-a.sin(), 0.0, a.cos());
        let n2 = Vector3::new(a.sin(), 0.0, a.cos());
        let pts: Vec<_> = (0..=100)
            .map(|i| Vector3::new(i as f64, 0.0, 0.0))
            .collect();
        let normals: Vec<_> = (0..=100).map(|i| if i < 50 { n1 } else { n2 }).collect();
        let plan = optimize_orientations(&pts, &[50], &normals, 100.0).unwrap();
        assert_eq!(plan.segments.len(), 2);
        assert!((plan.segments[0].z_axis - n1).norm() < 1e-12);
        assert!((plan.segments[1].z_axis - n2).norm() < 1e-12);
        assert_eq!(plan.segments[0].end, plan.segments[1].start);
        assert_eq!(plan.pose_at(50).unwrap().z_axis, plan.segments[1].z_axis);
    }

    #[test]
    fn close_key_points_merge() {
        let pts: Vec<_> = (0..=100)
            .map(|i| Vector3::new(i as f64, 0.0, 0.0))
            .collect();
        let normals = vec![Vector3::z(); 101];
        // Gap 40·40 = 1600 between 30 and 70; 30·30 = 900 from 0 to 30.
        let plan = optimize_orientations(&pts, &[30, 70], &normals, 1000.0).unwrap();
        let spans: Vec<_> = plan.segments.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(spans, vec![(0, 70), (70, 100)]);
        // A generous threshold still emits the final segment.
        let plan = optimize_orientations(&pts, &[30, 70], &normals, 1e9).unwrap();
        assert_eq!(
            plan.segments
                .iter()
                .map(|s| (s.start, s.end))
                .collect::<Vec<_>>(),
            vec![(0, 100)]
        );
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let pts: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert_eq!(
            optimize_orientations(&pts, &[], &[Vector3::z(); 4], 1.0),
            Err(PlanError::NormalCountMismatch {
                points: 5,
                normals: 4
            })
        );
        assert_eq!(
            optimize_orientations(&pts, &[9], &[Vector3::z(); 5], 1.0),
            Err(PlanError::KeyPointOutOfRange(9))
        );
        // Normals parallel to the chord leave y undefined.
        assert_eq!(
            optimize_orientations(&pts, &[], &[Vector3::x(); 5], 1.0),
            Err(PlanError::DegenerateOrientation { start: 0, end: 4 })
        );
    }

    #[test]
    fn plan_transform_moves_poses() {
        let pts: Vec<_> = (0..10).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let plan = optimize_orientations(&pts, &[], &[Vector3::z(); 10], 10.0).unwrap();
        let t = RigidTransform::from_axis_angle(&Vector3::z(), 0.5).compose(
            &RigidTransform::from_translation(Vector3::new(1.0, 2.0, 3.0)),
        );
        let moved = plan.transformed(&t);
        for i in 0..10 {
            let expected = plan.pose_at(i).unwrap().transformed(&t);
            let got = moved.pose_at(i).unwrap();
            assert!((expected.position - got.position).norm() < 1e-12);
            assert!((expected.rotation() - got.rotation()).norm() < 1e-12);
        }
        assert!((plan.arc_length(2, 7) - 5.0).abs() < 1e-12);
    }
}
