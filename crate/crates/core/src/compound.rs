//! Forward splatting of posed ultrasound frames into an object-frame voxel
//! volume, plus a vessel-continuity metric on the result.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imgproc::Plane;
use crate::motion::{MotionError, ObjectFrameLedger};
use crate::pathplan::ProbePose;

#[derive(Debug, Error)]
pub enum CompoundError {
    #[error("no frames to compound")]
    EmptyInput,
    #[error("frame {frame} refers to stage {stage}, ledger has stages 0..={current}")]
    UnknownStage {
        frame: usize,
        stage: usize,
        current: usize,
    },
    #[error("voxel size must be positive, got {0}")]
    InvalidVoxelSize(f64),
    #[error("volume of {0} voxels is too large")]
    TooLarge(u128),
    #[error("no vessel cross-section found")]
    NoVesselFound,
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One B-mode image. Column `c` lies at `(c − (W−1)/2)·spacing` along the
/// probe's long side (`y_axis`), row `r` at depth `r·spacing` along
/// `−z_axis`, with row 0 at the probe tip.
#[derive(Debug, Clone, PartialEq)]
pub struct USFrame {
    pub pixels: Plane<u8>,
    /// mm per pixel on both axes.
    pub spacing: f64,
    /// Pose in the base frame at acquisition time.
    pub pose: ProbePose<f64>,
    pub stage: usize,
}

impl USFrame {
    /// Base-frame position of pixel `(col, row)`.
    pub fn pixel_position(&self, col: usize, row: usize) -> Vector3<f64> {
        frame_point(&self.pose, self.spacing, self.pixels.width(), col, row)
    }
}

/// Voxel accumulator; `x` is the fastest axis. Sums are integral so the
/// result does not depend on frame order.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub dims: [usize; 3],
    pub voxel_size: f64,
    /// Object-frame center of voxel (0, 0, 0), mm.
    pub origin: Vector3<f64>,
    pub sum: Vec<u64>,
    pub count: Vec<u32>,
}

/// JSON sidecar describing a raw volume file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VolumeSidecar {
    pub dims: [usize; 3],
    pub voxel_size_mm: f64,
    pub origin: [f64; 3],
}

/// Upper bound on voxel count, guarding against runaway bounding boxes.
const MAX_VOXELS: u128 = 1 << 28;

impl Volume {
    pub fn new(
        dims: [usize; 3],
        voxel_size: f64,
        origin: Vector3<f64>,
    ) -> Result<Self, CompoundError> {
        if !(voxel_size > 0.0) {
            return Err(CompoundError::InvalidVoxelSize(voxel_size));
        }
        let n = dims.iter().map(|&d| d as u128).product::<u128>();
        if n > MAX_VOXELS {
            return Err(CompoundError::TooLarge(n));
        }
        let n = n as usize;
        Ok(Self {
            dims,
            voxel_size,
            origin,
            sum: vec![0; n],
            count: vec![0; n],
        })
    }

    pub fn index(&self, [x, y, z]: [usize; 3]) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    /// Nearest voxel of an object-frame point, if inside the grid.
    pub fn voxel_of(&self, p: &Vector3<f64>) -> Option<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let i = ((p[a] - self.origin[a]) / self.voxel_size).round();
            if i < 0.0 || i >= self.dims[a] as f64 {
                return None;
            }
            out[a] = i as usize;
        }
        Some(out)
    }

    pub fn center(&self, v: [usize; 3]) -> Vector3<f64> {
        self.origin + Vector3::new(v[0] as f64, v[1] as f64, v[2] as f64) * self.voxel_size
    }

    pub fn splat(&mut self, p: &Vector3<f64>, value: u8) -> bool {
        match self.voxel_of(p) {
            Some(v) => {
                let i = self.index(v);
                self.sum[i] += value as u64;
                self.count[i] += 1;
                true
            }
            None => false,
        }
    }

    /// Mean intensity, or `None` for voxels never hit.
    pub fn intensity(&self, v: [usize; 3]) -> Option<f64> {
        let i = self.index(v);
        (self.count[i] > 0).then(|| self.sum[i] as f64 / self.count[i] as f64)
    }

    /// Mean intensities with 0 for empty voxels.
    pub fn intensities(&self) -> Vec<f32> {
        self.sum
            .iter()
            .zip(&self.count)
            .map(|(&s, &c)| {
                if c > 0 {
                    (s as f64 / c as f64) as f32
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn sidecar(&self) -> VolumeSidecar {
        VolumeSidecar {
            dims: self.dims,
            voxel_size_mm: self.voxel_size,
            origin: [self.origin.x, self.origin.y, self.origin.z],
        }
    }

    /// Raw little-endian `f32` intensities, `x` fastest.
    pub fn write_raw(&self, mut out: impl Write) -> std::io::Result<()> {
        let bytes: Vec<u8> = self
            .intensities()
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        out.write_all(&bytes)
    }
}

/// Splats every pixel of every frame into the object frame of its stage.
/// The grid covers the bounding box of all pixel positions, snapped to
/// multiples of `voxel_size`.
pub fn compound(
    frames: &[USFrame],
    ledger: &ObjectFrameLedger<f64>,
    voxel_size: f64,
) -> Result<Volume, CompoundError> {
    if frames.is_empty() {
        return Err(CompoundError::EmptyInput);
    }
    if !(voxel_size > 0.0) {
        return Err(CompoundError::InvalidVoxelSize(voxel_size));
    }
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    let mut placed: Vec<(&USFrame, ProbePose<f64>)> = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let object_pose =
            ledger
                .to_object_frame(f.stage, &f.pose)
                .map_err(|_| CompoundError::UnknownStage {
                    frame: i,
                    stage: f.stage,
                    current: ledger.current_stage(),
                })?;
        let (w, h) = (f.pixels.width(), f.pixels.height());
        if w == 0 || h == 0 {
            continue;
        }
        let corners = [(0, 0), (w - 1, 0), (0, h - 1), (w - 1, h - 1)];
        for (c, r) in corners {
            let p = frame_point(&object_pose, f.spacing, w, c, r);
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
        placed.push((f, object_pose));
    }
    if placed.is_empty() {
        return Err(CompoundError::EmptyInput);
    }
    let origin = (lo / voxel_size).map(f64::round) * voxel_size;
    let dims = [0, 1, 2].map(|a| ((hi[a] - origin[a]) / voxel_size).round().max(0.0) as usize + 1);
    let mut volume = Volume::new(dims, voxel_size, origin)?;
    for (f, pose) in placed {
        let w = f.pixels.width();
        let lateral0 = -(w as f64 - 1.0) / 2.0 * f.spacing;
        for r in 0..f.pixels.height() {
            let row_origin = pose.position - pose.z_axis * (r as f64 * f.spacing);
            for c in 0..w {
                let p = row_origin + pose.y_axis * (lateral0 + c as f64 * f.spacing);
                volume.splat(&p, f.pixels.get(c, r));
            }
        }
    }
    Ok(volume)
}

fn frame_point(
    pose: &ProbePose<f64>,
    spacing: f64,
    width: usize,
    col: usize,
    row: usize,
) -> Vector3<f64> {
    let lateral = (col as f64 - (width as f64 - 1.0) / 2.0) * spacing;
    pose.position + pose.y_axis * lateral - pose.z_axis * (row as f64 * spacing)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct CenterlineParams {
    /// Observed voxels darker than this belong to the lumen.
    pub threshold: f64,
    /// Volume axis the slices are taken across (0 = x).
    pub axis: usize,
    /// Smallest lumen component counted as a cross-section, voxels.
    pub min_voxels: usize,
}

impl Default for CenterlineParams {
    fn default() -> Self {
        Self {
            threshold: 30.0,
            axis: 0,
            min_voxels: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SliceCentroid {
    pub slice: usize,
    /// Object-frame coordinate along the slicing axis, mm.
    pub position_mm: f64,
    /// Object-frame coordinates along the two remaining axes, mm.
    pub centroid_mm: [f64; 2],
    /// Radius of a disc with the component's area, mm.
    pub radius_mm: f64,
    pub voxels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CenterlineMetric {
    pub slices: Vec<SliceCentroid>,
    /// Largest centroid displacement between consecutive detected slices, mm.
    pub max_jump_mm: f64,
    pub voxel_size_mm: f64,
}

impl CenterlineMetric {
    pub fn max_jump_voxels(&self) -> f64 {
        self.max_jump_mm / self.voxel_size_mm
    }

    pub fn mean_radius_mm(&self) -> f64 {
        self.slices.iter().map(|s| s.radius_mm).sum::<f64>() / self.slices.len().max(1) as f64
    }
}

/// Per slice across `axis`: lumen mask, largest 8-connected component, its
/// centroid and equivalent radius.
pub fn vessel_centerline(
    volume: &Volume,
    params: &CenterlineParams,
) -> Result<CenterlineMetric, CompoundError> {
    let axis = params.axis.min(2);
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let (na, nb) = (volume.dims[a], volume.dims[b]);
    let mut slices = Vec::new();
    for s in 0..volume.dims[axis] {
        let voxel = |i: usize, j: usize| {
            let mut v = [0; 3];
            v[axis] = s;
            v[a] = i;
            v[b] = j;
            v
        };
        let mask = Plane::from_fn(na, nb, |i, j| {
            volume
                .intensity(voxel(i, j))
                .is_some_and(|x| x < params.threshold)
        });
        let Some(component) = largest_component(&mask) else {
            continue;
        };
        if component.len() < params.min_voxels.max(1) {
            continue;
        }
        let n = component.len() as f64;
        let (si, sj) = component
            .iter()
            .fold((0.0, 0.0), |(x, y), &(i, j)| (x + i as f64, y + j as f64));
        let vs = volume.voxel_size;
        slices.push(SliceCentroid {
            slice: s,
            position_mm: volume.origin[axis] + s as f64 * vs,
            centroid_mm: [
                volume.origin[a] + si / n * vs,
                volume.origin[b] + sj / n * vs,
            ],
            radius_mm: (n / std::f64::consts::PI).sqrt() * vs,
            voxels: component.len(),
        });
    }
    if slices.is_empty() {
        return Err(CompoundError::NoVesselFound);
    }
    let max_jump_mm = slices
        .windows(2)
        .map(|w| {
            let (p, q) = (w[0].centroid_mm, w[1].centroid_mm);
            (p[0] - q[0]).hypot(p[1] - q[1])
        })
        .fold(0.0, f64::max);
    Ok(CenterlineMetric {
        slices,
        max_jump_mm,
        voxel_size_mm: volume.voxel_size,
    })
}

/// Largest 8-connected set of true cells; ties keep the first found in
/// row-major order.
fn largest_component(mask: &Plane<bool>) -> Option<Vec<(usize, usize)>> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = Plane::new(w, h, false);
    let mut best: Option<Vec<(usize, usize)>> = None;
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || seen.get(x, y) {
                continue;
            }
            let mut comp = Vec::new();
            seen.set(x, y, true);
            queue.push_back((x, y));
            while let Some((cx, cy)) = queue.pop_front() {
                comp.push((cx, cy));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                        if mask.get_checked(nx, ny) == Some(true)
                            && !seen.get(nx as usize, ny as usize)
                        {
                            seen.set(nx as usize, ny as usize, true);
                            queue.push_back((nx as usize, ny as usize));
                        }
                    }
                }
            }
            if best.as_ref().is_none_or(|b| comp.len() > b.len()) {
                best = Some(comp);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::RigidTransform;

    fn pose_at(x: f64) -> ProbePose<f64> {
        // Long side along +y, looking down −z from z = 0.
        ProbePose {
            position: Vector3::new(x, 0.0, 0.0),
            x_axis: Vector3::x(),
            y_axis: Vector3::y(),
            z_axis: Vector3::z(),
        }
    }

    fn frame(x: f64, pixels: Plane<u8>) -> USFrame {
        USFrame {
            pixels,
            spacing: 1.0,
            pose: pose_at(x),
            stage: 0,
        }
    }

    #[test]
    fn identity_frame_becomes_a_slice() {
        let pixels = Plane::from_fn(5, 4, |c, r| (c * 10 + r) as u8);
        let v = compound(
            &[frame(0.0, pixels.clone())],
            &ObjectFrameLedger::new(),
            1.0,
        )
        .unwrap();
        assert_eq!(v.dims, [1, 5, 4]);
        for r in 0..4 {
            for c in 0..5 {
                // y grows with the column, z falls with the row.
                assert_eq!(v.intensity([0, c, 3 - r]), Some(pixels.get(c, r) as f64));
            }
        }
    }

    #[test]
    fn parallel_frames_fill_adjacent_planes() {
        let a = frame(0.0, Plane::new(3, 3, 100));
        let b = frame(1.0, Plane::new(3, 3, 200));
        let v = compound(&[a, b], &ObjectFrameLedger::new(), 1.0).unwrap();
        assert_eq!(v.dims[0], 2);
        assert_eq!(v.intensity([0, 1, 1]), Some(100.0));
        assert_eq!(v.intensity([1, 1, 1]), Some(200.0));
    }

    #[test]
    fn ledger_moves_frames_back() {
        let mut ledger = ObjectFrameLedger::new();
        ledger.update(&RigidTransform::from_translation(Vector3::new(
            50.0, 0.0, 0.0,
        )));
        let before = frame(10.0, Plane::new(3, 3, 100));
        let after = USFrame {
            stage: 1,
            ..frame(60.0, Plane::new(3, 3, 200))
        };
        let v = compound(&[before, after], &ledger, 1.0).unwrap();
        assert_eq!(v.dims[0], 1);
        assert_eq!(v.intensity([0, 1, 1]), Some(150.0));

        let stray = USFrame {
            stage: 4,
            ..frame(0.0, Plane::new(2, 2, 0))
        };
        assert!(matches!(
            compound(&[stray], &ledger, 1.0),
            Err(CompoundError::UnknownStage {
                frame: 0,
                stage: 4,
                current: 1
            })
        ));
        assert!(matches!(
            compound(&[], &ledger, 1.0),
            Err(CompoundError::EmptyInput)
        ));
    }

    fn tube_volume(shift_at: Option<usize>) -> Volume {
        // Tube along x of radius 4 voxels centered at (y, z) = (20, 20).
        let mut v = Volume::new([40, 41, 41], 1.0, Vector3::zeros()).unwrap();
        for x in 0..40 {
            let cy = if shift_at.is_some_and(|s| x >= s) {
                30.0
            } else {
                20.0
            };
            for y in 0..41 {
                for z in 0..41 {
                    let r = ((y as f64 - cy).powi(2) + (z as f64 - 20.0).powi(2)).sqrt();
                    v.splat(
                        &Vector3::new(x as f64, y as f64, z as f64),
                        if r <= 4.0 { 10 } else { 80 },
                    );
                }
            }
        }
        v
    }

    #[test]
    fn straight_tube_has_smooth_centerline() {
        let m = vessel_centerline(&tube_volume(None), &CenterlineParams::default()).unwrap();
        assert_eq!(m.slices.len(), 40);
        assert!(m.max_jump_voxels() < 1.0);
        assert!(m
            .slices
            .iter()
            .all(|s| (s.centroid_mm[0] - 20.0).abs() < 1e-9
                && (s.centroid_mm[1] - 20.0).abs() < 1e-9));
        assert!((m.mean_radius_mm() - 4.0).abs() < 1.0);
    }

    #[test]
    fn shifted_tube_reports_jump() {
        let m = vessel_centerline(&tube_volume(Some(20)), &CenterlineParams::default()).unwrap();
        assert!((m.max_jump_voxels() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn empty_volume_has_no_vessel() {
        let v = Volume::new([4, 4, 4], 1.0, Vector3::zeros()).unwrap();
        assert!(matches!(
            vessel_centerline(&v, &CenterlineParams::default()),
            Err(CompoundError::NoVesselFound)
        ));
    }

    #[test]
    fn raw_export_layout() {
        let mut v = Volume::new([2, 1, 1], 0.5, Vector3::new(1.0, 2.0, 3.0)).unwrap();
        v.splat(&Vector3::new(1.5, 2.0, 3.0), 7);
        let mut out = Vec::new();
        v.write_raw(&mut out).unwrap();
        assert_eq!(out.len(), 8);
        assert_eq!(f32::from_le_bytes(out[4..8].try_into().unwrap()), 7.0);
        let json = serde_json::to_value(v.sidecar()).unwrap();
        assert_eq!(json["voxelSizeMm"], 0.5);
        assert_eq!(json["dims"], serde_json::json!([2, 1, 1]));
    }
}
