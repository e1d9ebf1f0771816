//! Trajectory backprojection and per-point surface normals from local
//! least-squares plane fits `z = a·x + b·y + c`.

use std::collections::HashMap;

use nalgebra::{Matrix2, Vector2, Vector3};
use thiserror::Error;

use crate::geom::{image_to_base, FrameGraph, FrameId, GeomError};
use crate::imgproc::{ImageBundle, Trajectory2D};
use crate::num::Real;

/// Default neighborhood radius, mm.
pub const DEFAULT_RADIUS_MM: f64 = 10.0;

/// Condition-number ceiling of the centered 2×2 normal equations.
pub const MAX_CONDITION: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurfaceError {
    #[error("{skipped} of {total} trajectory samples fall on depth holes")]
    TooManyHoles { skipped: usize, total: usize },
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("only {found} neighbors within the radius, need 3")]
    TooFewNeighbors { found: usize },
    #[error("patch is near-vertical for an explicit z = f(x, y) fit")]
    IllConditionedPatch,
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePatch<T: Real> {
    pub center: Vector3<T>,
    pub neighbors: Vec<Vector3<T>>,
    pub radius: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceNormal<T: Real> {
    pub direction: Vector3<T>,
    /// RMS of `f(x_i, y_i) − z_i`, mm.
    pub fit_residual: T,
}

/// Unit vector pointing from the scene towards the camera, in the base frame.
pub fn toward_camera<T: Real>(graph: &FrameGraph<T>) -> Result<Vector3<T>, GeomError> {
    let base_from_camera = graph.transform(FrameId::Base, FrameId::Camera)?;
    Ok(-base_from_camera.rotation().column(2).into_owned())
}

fn sample_depth(bundle: &ImageBundle, px: &Vector2<f64>) -> Option<f64> {
    bundle
        .depth
        .get_checked(px.x.round() as i64, px.y.round() as i64)
        .filter(|d| d.is_finite() && *d > 0.0)
}

/// Lifts the trajectory centerline into the base frame. Samples on depth
/// holes are skipped, never interpolated; more than half skipped is an error.
/// Returns the lifted points and the centerline index of each.
pub fn backproject_trajectory<T: Real>(
    traj: &Trajectory2D,
    bundle: &ImageBundle,
    graph: &FrameGraph<T>,
) -> Result<(Vec<Vector3<T>>, Vec<usize>), SurfaceError> {
    let total = traj.centerline.len();
    if total == 0 {
        return Err(SurfaceError::EmptyTrajectory);
    }
    let mut points = Vec::with_capacity(total);
    let mut kept = Vec::with_capacity(total);
    for (i, px) in traj.centerline.iter().enumerate() {
        let Some(depth) = sample_depth(bundle, px) else {
            continue;
        };
        let px = Vector2::new(T::lit(px.x), T::lit(px.y));
        points.push(image_to_base(&px, T::lit(depth), graph)?);
        kept.push(i);
    }
    let skipped = total - points.len();
    if skipped * 2 > total {
        return Err(SurfaceError::TooManyHoles { skipped, total });
    }
    Ok((points, kept))
}

/// Base-frame point cloud of every valid depth pixel inside the pixel box
/// `[x0, x1) × [y0, y1)` (clipped to the image).
pub fn depth_cloud<T: Real>(
    bundle: &ImageBundle,
    graph: &FrameGraph<T>,
    bounds: Option<[usize; 4]>,
) -> Result<Vec<Vector3<T>>, SurfaceError> {
    let [x0, y0, x1, y1] = bounds.unwrap_or([0, 0, bundle.width(), bundle.height()]);
    let (x1, y1) = (x1.min(bundle.width()), y1.min(bundle.height()));
    let base_from_camera = graph.transform(FrameId::Base, FrameId::Camera)?;
    let k = graph.intrinsics();
    let mut cloud = Vec::new();
    for y in y0..y1 {
        for x in x0..x1 {
            let d = bundle.depth.get(x, y);
            if !(d.is_finite() && d > 0.0) {
                continue;
            }
            let d = T::lit(d);
            let p = Vector3::new(
                (T::lit(x as f64) - k.cx) * d / k.fx,
                (T::lit(y as f64) - k.cy) * d / k.fy,
                d,
            );
            cloud.push(base_from_camera.transform_point(&p));
        }
    }
    Ok(cloud)
}

/// Points within `radius` of `center` by exhaustive search.
pub fn neighborhood<T: Real>(
    cloud: &[Vector3<T>],
    center: &Vector3<T>,
    radius: T,
) -> Result<SurfacePatch<T>, SurfaceError> {
    if cloud.is_empty() {
        return Err(SurfaceError::EmptyCloud);
    }
    let r2 = radius * radius;
    let neighbors: Vec<_> = cloud
        .iter()
        .filter(|p| (*p - center).norm_squared() <= r2)
        .copied()
        .collect();
    make_patch(*center, neighbors, radius)
}

fn make_patch<T: Real>(
    center: Vector3<T>,
    neighbors: Vec<Vector3<T>>,
    radius: T,
) -> Result<SurfacePatch<T>, SurfaceError> {
    if neighbors.len() < 3 {
        return Err(SurfaceError::TooFewNeighbors {
            found: neighbors.len(),
        });
    }
    Ok(SurfacePatch {
        center,
        neighbors,
        radius,
    })
}

/// Uniform hash grid for fixed-radius queries on large clouds.
pub struct PointIndex<'a, T: Real> {
    cloud: &'a [Vector3<T>],
    cell: T,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a, T: Real> PointIndex<'a, T> {
    pub fn new(cloud: &'a [Vector3<T>], cell: T) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in cloud.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self { cloud, cell, cells }
    }

    fn key(p: &Vector3<T>, cell: T) -> [i64; 3] {
        let k = |v: T| (v / cell).floor().as_f64() as i64;
        [k(p.x), k(p.y), k(p.z)]
    }

    /// Same result as [`neighborhood`], in cloud order.
    pub fn neighborhood(
        &self,
        center: &Vector3<T>,
        radius: T,
    ) -> Result<SurfacePatch<T>, SurfaceError> {
        if self.cloud.is_empty() {
            return Err(SurfaceError::EmptyCloud);
        }
        let reach = (radius / self.cell).ceil().as_f64() as i64;
        let [cx, cy, cz] = Self::key(center, self.cell);
        let r2 = radius * radius;
        let mut hits = Vec::new();
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if let Some(ids) = self.cells.get(&[cx + dx, cy + dy, cz + dz]) {
                        hits.extend(
                            ids.iter()
                                .copied()
                                .filter(|&i| (self.cloud[i] - center).norm_squared() <= r2),
                        );
                    }
                }
            }
        }
        hits.sort_unstable();
        make_patch(
            *center,
            hits.into_iter().map(|i| self.cloud[i]).collect(),
            radius,
        )
    }
}

/// Least-squares plane `z = a·x + b·y + c` over the patch; the unit normal
/// `∝ (−a, −b, 1)` is oriented so that `normal · toward > 0`.
pub fn estimate_normal<T: Real>(
    patch: &SurfacePatch<T>,
    toward: &Vector3<T>,
) -> Result<SurfaceNormal<T>, SurfaceError> {
    let pts = &patch.neighbors;
    if pts.len() < 3 {
        return Err(SurfaceError::TooFewNeighbors { found: pts.len() });
    }
    let n = T::lit(pts.len() as f64);
    let mean = pts.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n;
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) =
        (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
    for p in pts {
        let d = p - mean;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
        sxz += d.x * d.z;
        syz += d.y * d.z;
    }
    let half_trace = (sxx + syy) / T::lit(2.0);
    let spread = (((sxx - syy) / T::lit(2.0)).powi(2) + sxy * sxy).sqrt();
    let (hi, lo) = (half_trace + spread, half_trace - spread);
    if !(lo > T::zero()) || hi / lo >= T::lit(MAX_CONDITION) {
        return Err(SurfaceError::IllConditionedPatch);
    }
    let normal_eq = Matrix2::new(sxx, sxy, sxy, syy);
    let solution = normal_eq
        .lu()
        .solve(&Vector2::new(sxz, syz))
        .ok_or(SurfaceError::IllConditionedPatch)?;
    let (a, b) = (solution.x, solution.y);

    let sq = pts.iter().fold(T::zero(), |acc, p| {
        let d = p - mean;
        let r = a * d.x + b * d.y - d.z;
        acc + r * r
    });
    let mut direction = Vector3::new(-a, -b, T::one()).normalize();
    if direction.dot(toward) < T::zero() {
        direction = -direction;
    }
    Ok(SurfaceNormal {
        direction,
        fit_residual: (sq / n).sqrt(),
    })
}

/// Normal at every trajectory point from its neighborhood in `cloud`.
pub fn estimate_normals<T: Real>(
    points: &[Vector3<T>],
    cloud: &[Vector3<T>],
    radius: T,
    toward: &Vector3<T>,
) -> Result<Vec<SurfaceNormal<T>>, SurfaceError> {
    let index = PointIndex::new(cloud, radius);
    points
        .iter()
        .map(|p| estimate_normal(&index.neighborhood(p, radius)?, toward))
        .collect()
}
