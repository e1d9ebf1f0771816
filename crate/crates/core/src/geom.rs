//! Rigid transforms, the sensor/robot frame graph, closed-form point-set
//! alignment and the pinhole backprojection chain.
//!
//! Lengths are millimeters. Transforms follow the `parent_from_child`
//! convention: an edge `(b, c)` maps coordinates expressed in frame `c` into
//! frame `b`.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use nalgebra::{Matrix3, Matrix4, Unit, Vector2, Vector3, SVD};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

/// Relative singular-value floor below which a point configuration is
/// treated as collinear (second value) or coplanar (third value).
pub const DEGENERACY_RATIO: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("need at least {required} point pairs, got {got}")]
    InsufficientPoints { required: usize, got: usize },
    #[error("degenerate configuration: points are coincident or collinear")]
    DegenerateConfiguration,
    #[error("calibration points are coplanar")]
    CoplanarPoints,
    #[error("no transform connects frame {from} to frame {to}")]
    MissingEdge { from: FrameId, to: FrameId },
    #[error("invalid depth {0} mm")]
    InvalidDepth(f64),
    #[error("pixel ({u}, {v}) outside the {width}x{height} image")]
    PixelOutOfBounds {
        u: f64,
        v: f64,
        width: u32,
        height: u32,
    },
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation matrix is not orthonormal with det +1")]
    NotOrthonormal,
    #[error("non-finite coordinate in input")]
    NonFinite,
}

fn orthonormal_tolerance<T: Real>() -> T {
    let eps = T::default_epsilon() * T::lit(1e3);
    let floor = T::lit(1e-9);
    if eps > floor {
        eps
    } else {
        floor
    }
}

/// Frobenius norm of `RᵀR − I`.
pub fn orthonormality_defect<T: Real>(rotation: &Matrix3<T>) -> T {
    (rotation.transpose() * rotation - Matrix3::identity()).norm()
}

/// Closest rotation to `m` in the Frobenius sense (polar factor with the
/// reflection removed).
pub fn nearest_rotation<T: Real>(m: &Matrix3<T>) -> Matrix3<T> {
    let svd = SVD::new(*m, true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < T::zero() {
        d[(2, 2)] = -T::one();
    }
    u * d * v_t
}

/// SE(3) element: rotation followed by translation, `p' = R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform<T: Real> {
    rotation: Matrix3<T>,
    translation: Vector3<T>,
}

impl<T: Real> Default for RigidTransform<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> RigidTransform<T> {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, rejecting rotations that are not orthonormal with
    /// determinant +1.
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Result<Self, GeomError> {
        if !rotation
            .iter()
            .chain(translation.iter())
            .all(|v| v.is_finite())
        {
            return Err(GeomError::NonFinite);
        }
        let tol = orthonormal_tolerance::<T>();
        if orthonormality_defect(&rotation) >= tol
            || (rotation.determinant() - T::one()).abs() >= tol
        {
            return Err(GeomError::NotOrthonormal);
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vector3<T>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation by `angle` radians about `axis` through the origin.
    pub fn from_axis_angle(axis: &Vector3<T>, angle: T) -> Self {
        let axis = Unit::new_normalize(*axis);
        let rotation = nalgebra::Rotation3::from_axis_angle(&axis, angle).into_inner();
        Self {
            rotation,
            translation: Vector3::zeros(),
        }
    }

    /// Rotation by `angle` radians about the line through `pivot` along `axis`.
    pub fn rotation_about(axis: &Vector3<T>, angle: T, pivot: &Vector3<T>) -> Self {
        let r = Self::from_axis_angle(axis, angle);
        let translation = pivot - r.rotation * pivot;
        Self {
            rotation: r.rotation,
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<T> {
        &self.translation
    }

    pub fn transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<T>) -> Vector3<T> {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let mut rotation = self.rotation * other.rotation;
        if orthonormality_defect(&rotation) > T::lit(1e-12) {
            rotation = nearest_rotation(&rotation);
        }
        Self {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<T> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_homogeneous(m: &Matrix4<T>) -> Result<Self, GeomError> {
        let tol = orthonormal_tolerance::<T>();
        let last = m.row(3);
        if last[0].abs() > tol
            || last[1].abs() > tol
            || last[2].abs() > tol
            || (last[3] - T::one()).abs() > tol
        {
            return Err(GeomError::NotOrthonormal);
        }
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    /// Row-major 4×4 representation used by the JSON formats.
    pub fn to_rows(&self) -> [[f64; 4]; 4] {
        let m = self.to_homogeneous();
        let mut rows = [[0.0; 4]; 4];
        for (r, row) in rows.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = m[(r, c)].as_f64();
            }
        }
        rows
    }

    pub fn from_rows(rows: &[[f64; 4]; 4]) -> Result<Self, GeomError> {
        let m = Matrix4::from_fn(|r, c| T::lit(rows[r][c]));
        Self::from_homogeneous(&m)
    }

    /// Angle of the relative rotation `self⁻¹ ∘ other`, in radians.
    pub fn rotation_angle_to(&self, other: &Self) -> T {
        let rel = self.rotation.transpose() * other.rotation;
        let two = T::lit(2.0);
        // atan2 keeps full precision near zero where acos does not.
        let sin = Vector3::new(
            rel[(2, 1)] - rel[(1, 2)],
            rel[(0, 2)] - rel[(2, 0)],
            rel[(1, 0)] - rel[(0, 1)],
        )
        .norm()
            / two;
        let cos = (rel.trace() - T::one()) / two;
        sin.atan2(cos)
    }

    pub fn translation_distance_to(&self, other: &Self) -> T {
        (self.translation - other.translation).norm()
    }

    pub fn cast<U: Real>(&self) -> RigidTransform<U> {
        RigidTransform {
            rotation: self.rotation.map(|v| U::lit(v.as_f64())),
            translation: self.translation.map(|v| U::lit(v.as_f64())),
        }
    }
}

/// Composition as a free function: the result applies `b` then `a`.
pub fn compose<T: Real>(a: &RigidTransform<T>, b: &RigidTransform<T>) -> RigidTransform<T> {
    a.compose(b)
}

/// The six coordinate frames of the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameId {
    Image,
    Camera,
    Base,
    Flange,
    Tcp,
    Aruco,
}

impl FrameId {
    pub const ALL: [FrameId; 6] = [
        FrameId::Image,
        FrameId::Camera,
        FrameId::Base,
        FrameId::Flange,
        FrameId::Tcp,
        FrameId::Aruco,
    ];
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FrameId::Image => "image",
            FrameId::Camera => "camera",
            FrameId::Base => "base",
            FrameId::Flange => "flange",
            FrameId::Tcp => "tcp",
            FrameId::Aruco => "aruco",
        };
        f.write_str(name)
    }
}

/// Pinhole camera model without distortion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics<T: Real> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: u32,
    pub height: u32,
}

impl<T: Real> CameraIntrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: u32, height: u32) -> Result<Self, GeomError> {
        if !(fx > T::zero() && fy > T::zero()) {
            return Err(GeomError::InvalidIntrinsics(
                "focal lengths must be positive".into(),
            ));
        }
        if !(cx >= T::zero()
            && cx < T::lit(width as f64)
            && cy >= T::zero()
            && cy < T::lit(height as f64))
        {
            return Err(GeomError::InvalidIntrinsics(
                "principal point outside the image".into(),
            ));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn contains(&self, px: &Vector2<T>) -> bool {
        let half = T::lit(0.5);
        px.x >= -half
            && px.y >= -half
            && px.x <= T::lit(self.width as f64) - half
            && px.y <= T::lit(self.height as f64) - half
    }

    pub fn cast<U: Real>(&self) -> CameraIntrinsics<U> {
        CameraIntrinsics {
            fx: U::lit(self.fx.as_f64()),
            fy: U::lit(self.fy.as_f64()),
            cx: U::lit(self.cx.as_f64()),
            cy: U::lit(self.cy.as_f64()),
            width: self.width,
            height: self.height,
        }
    }
}

/// A point observed in the camera frame and the same point in the robot
/// base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPair<T: Real> {
    pub camera: Vector3<T>,
    pub base: Vector3<T>,
}

/// Immutable graph of rigid transforms between the system frames plus the
/// camera intrinsics linking the image frame to the camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGraph<T: Real> {
    edges: BTreeMap<(FrameId, FrameId), RigidTransform<T>>,
    intrinsics: CameraIntrinsics<T>,
}

impl<T: Real> FrameGraph<T> {
    pub fn new(intrinsics: CameraIntrinsics<T>) -> Self {
        Self {
            edges: BTreeMap::new(),
            intrinsics,
        }
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics<T> {
        &self.intrinsics
    }

    /// Returns a graph with `parent_from_child` installed, replacing any
    /// previous edge between the two frames in either orientation.
    pub fn with_edge(
        &self,
        parent: FrameId,
        child: FrameId,
        parent_from_child: RigidTransform<T>,
    ) -> Self {
        let mut next = self.clone();
        next.edges.remove(&(child, parent));
        next.edges.insert((parent, child), parent_from_child);
        next
    }

    pub fn without_edge(&self, a: FrameId, b: FrameId) -> Self {
        let mut next = self.clone();
        next.edges.remove(&(a, b));
        next.edges.remove(&(b, a));
        next
    }

    /// Direct edge lookup, inverting a stored reverse edge.
    pub fn edge(&self, parent: FrameId, child: FrameId) -> Option<RigidTransform<T>> {
        if let Some(t) = self.edges.get(&(parent, child)) {
            return Some(*t);
        }
        self.edges
            .get(&(child, parent))
            .map(RigidTransform::inverse)
    }

    pub fn edges(&self) -> impl Iterator<Item = (FrameId, FrameId, &RigidTransform<T>)> {
        self.edges.iter().map(|(&(p, c), t)| (p, c, t))
    }

    /// `target_from_source` along the shortest chain of stored edges.
    pub fn transform(
        &self,
        target: FrameId,
        source: FrameId,
    ) -> Result<RigidTransform<T>, GeomError> {
        if target == source {
            return Ok(RigidTransform::identity());
        }
        // BFS from target so that composing along the path yields target_from_x.
        let mut visited: BTreeMap<FrameId, RigidTransform<T>> = BTreeMap::new();
        visited.insert(target, RigidTransform::identity());
        let mut queue = VecDeque::from([target]);
        while let Some(frame) = queue.pop_front() {
            let target_from_frame = visited[&frame];
            for next in FrameId::ALL {
                if visited.contains_key(&next) {
                    continue;
                }
                if let Some(frame_from_next) = self.edge(frame, next) {
                    let target_from_next = target_from_frame.compose(&frame_from_next);
                    if next == source {
                        return Ok(target_from_next);
                    }
                    visited.insert(next, target_from_next);
                    queue.push_back(next);
                }
            }
        }
        Err(GeomError::MissingEdge {
            from: source,
            to: target,
        })
    }
}

/// Result of a closed-form rigid alignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment<T: Real> {
    /// Maps source points onto target points.
    pub transform: RigidTransform<T>,
    /// Root-mean-square residual in mm.
    pub rmse: T,
}

fn centroid<T: Real>(points: &[Vector3<T>]) -> Vector3<T> {
    let sum = points.iter().fold(Vector3::zeros(), |acc, p| acc + p);
    sum / T::lit(points.len() as f64)
}

/// Singular values (descending) of the centered point matrix.
pub fn spread_singular_values<T: Real>(points: &[Vector3<T>]) -> [T; 3] {
    let c = centroid(points);
    let scatter = points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - c;
        acc + d * d.transpose()
    });
    let svd = SVD::new(scatter, false, false);
    let mut sv: Vec<T> = svd.singular_values.iter().map(|s| s.sqrt()).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    [sv[0], sv[1], sv[2]]
}

/// Least-squares rigid transform taking `sources[i]` onto `targets[i]`
/// (Kabsch/Umeyama without scale), with the reflection case corrected.
pub fn align_point_sets<T: Real>(
    sources: &[Vector3<T>],
    targets: &[Vector3<T>],
) -> Result<Alignment<T>, GeomError> {
    assert_eq!(sources.len(), targets.len(), "paired point sets");
    if sources.len() < 3 {
        return Err(GeomError::InsufficientPoints {
            required: 3,
            got: sources.len(),
        });
    }
    if !sources
        .iter()
        .chain(targets)
        .all(|p| p.iter().all(|v| v.is_finite()))
    {
        return Err(GeomError::NonFinite);
    }
    let sv = spread_singular_values(sources);
    if sv[0] <= T::default_epsilon() || sv[1] < sv[0] * T::lit(DEGENERACY_RATIO) {
        return Err(GeomError::DegenerateConfiguration);
    }

    let cs = centroid(sources);
    let ct = centroid(targets);
    let h = sources
        .iter()
        .zip(targets)
        .fold(Matrix3::zeros(), |acc, (s, t)| {
            acc + (s - cs) * (t - ct).transpose()
        });
    let svd = SVD::new(h, true, true);
    let u = svd.u.ok_or(GeomError::DegenerateConfiguration)?;
    let v = svd
        .v_t
        .ok_or(GeomError::DegenerateConfiguration)?
        .transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < T::zero() {
        d[(2, 2)] = -T::one();
    }
    let mut rotation = v * d * u.transpose();
    if orthonormality_defect(&rotation) > T::lit(1e-12) {
        rotation = nearest_rotation(&rotation);
    }
    let translation = ct - rotation * cs;
    let transform = RigidTransform {
        rotation,
        translation,
    };
    let rmse = alignment_rmse(&transform, sources, targets);
    Ok(Alignment { transform, rmse })
}

/// Root of the mean squared residual `‖T·s − t‖²`.
pub fn alignment_rmse<T: Real>(
    transform: &RigidTransform<T>,
    sources: &[Vector3<T>],
    targets: &[Vector3<T>],
) -> T {
    let sum = sources.iter().zip(targets).fold(T::zero(), |acc, (s, t)| {
        acc + (transform.transform_point(s) - t).norm_squared()
    });
    (sum / T::lit(sources.len() as f64)).sqrt()
}

/// Solves `min_T (1/N) Σ ‖T·camera_i − base_i‖²` in closed form.
pub fn solve_rigid_alignment<T: Real>(
    pairs: &[CalibrationPair<T>],
) -> Result<Alignment<T>, GeomError> {
    let (sources, targets): (Vec<_>, Vec<_>) = pairs.iter().map(|p| (p.camera, p.base)).unzip();
    align_point_sets(&sources, &targets)
}

/// Hand-eye calibration output.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration<T: Real> {
    pub graph: FrameGraph<T>,
    pub base_from_camera: RigidTransform<T>,
    pub rmse: T,
}

/// Estimates `base_from_camera` from at least four non-coplanar point pairs
/// and installs it in the graph.
pub fn hand_eye_calibrate<T: Real>(
    graph: &FrameGraph<T>,
    pairs: &[CalibrationPair<T>],
) -> Result<Calibration<T>, GeomError> {
    if pairs.len() < 4 {
        return Err(GeomError::InsufficientPoints {
            required: 4,
            got: pairs.len(),
        });
    }
    let sources: Vec<_> = pairs.iter().map(|p| p.camera).collect();
    let sv = spread_singular_values(&sources);
    if sv[2] <= sv[0] * T::lit(DEGENERACY_RATIO) {
        return Err(GeomError::CoplanarPoints);
    }
    let alignment = solve_rigid_alignment(pairs)?;
    // A stale fiducial observation would close an inconsistent cycle.
    let graph = graph
        .without_edge(FrameId::Camera, FrameId::Aruco)
        .with_edge(FrameId::Base, FrameId::Camera, alignment.transform);
    Ok(Calibration {
        graph,
        base_from_camera: alignment.transform,
        rmse: alignment.rmse,
    })
}

/// Fixes `base_from_aruco = base_from_camera ∘ camera_from_aruco` after
/// calibration so the extrinsics can later be refreshed from the fiducial.
pub fn anchor_fiducial<T: Real>(
    graph: &FrameGraph<T>,
    camera_from_aruco: &RigidTransform<T>,
) -> Result<FrameGraph<T>, GeomError> {
    let base_from_camera =
        graph
            .edge(FrameId::Base, FrameId::Camera)
            .ok_or(GeomError::MissingEdge {
                from: FrameId::Camera,
                to: FrameId::Base,
            })?;
    let base_from_aruco = base_from_camera.compose(camera_from_aruco);
    Ok(graph
        .with_edge(FrameId::Base, FrameId::Aruco, base_from_aruco)
        .with_edge(FrameId::Camera, FrameId::Aruco, *camera_from_aruco))
}

/// Recomputes `base_from_camera = base_from_aruco ∘ camera_from_aruco⁻¹`
/// from a fresh fiducial observation.
pub fn refresh_extrinsics<T: Real>(
    camera_from_aruco: &RigidTransform<T>,
    graph: &FrameGraph<T>,
) -> Result<(FrameGraph<T>, RigidTransform<T>), GeomError> {
    let base_from_aruco =
        graph
            .edge(FrameId::Base, FrameId::Aruco)
            .ok_or(GeomError::MissingEdge {
                from: FrameId::Aruco,
                to: FrameId::Base,
            })?;
    let base_from_camera = base_from_aruco.compose(&camera_from_aruco.inverse());
    let graph = graph
        .with_edge(FrameId::Base, FrameId::Camera, base_from_camera)
        .with_edge(FrameId::Camera, FrameId::Aruco, *camera_from_aruco);
    Ok((graph, base_from_camera))
}

/// Pinhole backprojection of pixel `px` at `depth` mm along the optical axis.
pub fn pixel_to_camera<T: Real>(
    px: &Vector2<T>,
    depth: T,
    k: &CameraIntrinsics<T>,
) -> Result<Vector3<T>, GeomError> {
    if !depth.is_finite() || depth <= T::zero() {
        return Err(GeomError::InvalidDepth(depth.as_f64()));
    }
    if !k.contains(px) {
        return Err(GeomError::PixelOutOfBounds {
            u: px.x.as_f64(),
            v: px.y.as_f64(),
            width: k.width,
            height: k.height,
        });
    }
    Ok(Vector3::new(
        (px.x - k.cx) * depth / k.fx,
        (px.y - k.cy) * depth / k.fy,
        depth,
    ))
}

/// Backprojects a pixel and maps it into the robot base frame.
pub fn image_to_base<T: Real>(
    px: &Vector2<T>,
    depth: T,
    graph: &FrameGraph<T>,
) -> Result<Vector3<T>, GeomError> {
    let p_camera = pixel_to_camera(px, depth, graph.intrinsics())?;
    let base_from_camera = graph.transform(FrameId::Base, FrameId::Camera)?;
    Ok(base_from_camera.transform_point(&p_camera))
}

/// JSON form of [`CameraIntrinsics`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IntrinsicsDoc {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EdgeDoc {
    pub parent: FrameId,
    pub child: FrameId,
    /// Row-major homogeneous matrix mapping child coordinates into the parent.
    pub matrix: [[f64; 4]; 4],
}

/// JSON form of [`FrameGraph`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FrameGraphDoc {
    pub intrinsics: IntrinsicsDoc,
    pub edges: Vec<EdgeDoc>,
}

/// JSON form of a [`CalibrationPair`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct CalibrationPairDoc {
    pub camera: [f64; 3],
    pub base: [f64; 3],
}

impl<T: Real> From<&CameraIntrinsics<T>> for IntrinsicsDoc {
    fn from(k: &CameraIntrinsics<T>) -> Self {
        Self {
            fx: k.fx.as_f64(),
            fy: k.fy.as_f64(),
            cx: k.cx.as_f64(),
            cy: k.cy.as_f64(),
            width: k.width,
            height: k.height,
        }
    }
}

impl IntrinsicsDoc {
    pub fn to_intrinsics<T: Real>(&self) -> Result<CameraIntrinsics<T>, GeomError> {
        CameraIntrinsics::new(
            T::lit(self.fx),
            T::lit(self.fy),
            T::lit(self.cx),
            T::lit(self.cy),
            self.width,
            self.height,
        )
    }
}

impl<T: Real> FrameGraph<T> {
    pub fn to_doc(&self) -> FrameGraphDoc {
        FrameGraphDoc {
            intrinsics: IntrinsicsDoc::from(&self.intrinsics),
            edges: self
                .edges()
                .map(|(parent, child, t)| EdgeDoc {
                    parent,
                    child,
                    matrix: t.to_rows(),
                })
                .collect(),
        }
    }

    pub fn from_doc(doc: &FrameGraphDoc) -> Result<Self, GeomError> {
        let mut graph = FrameGraph::new(doc.intrinsics.to_intrinsics()?);
        for e in &doc.edges {
            graph = graph.with_edge(e.parent, e.child, RigidTransform::from_rows(&e.matrix)?);
        }
        Ok(graph)
    }
}

impl<T: Real> From<&CalibrationPair<T>> for CalibrationPairDoc {
    fn from(p: &CalibrationPair<T>) -> Self {
        Self {
            camera: [
                p.camera.x.as_f64(),
                p.camera.y.as_f64(),
                p.camera.z.as_f64(),
            ],
            base: [p.base.x.as_f64(), p.base.y.as_f64(), p.base.z.as_f64()],
        }
    }
}

impl CalibrationPairDoc {
    pub fn to_pair<T: Real>(&self) -> CalibrationPair<T> {
        CalibrationPair {
            camera: Vector3::new(
                T::lit(self.camera[0]),
                T::lit(self.camera[1]),
                T::lit(self.camera[2]),
            ),
            base: Vector3::new(
                T::lit(self.base[0]),
                T::lit(self.base[1]),
                T::lit(self.base[2]),
            ),
        }
    }
}
