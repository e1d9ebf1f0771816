use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::phantom::{PhantomSpec, MARKER_COLOR, OCCLUDER_COLOR};
use super::SimError;
use crate::compound::USFrame;
use crate::geom::{CameraIntrinsics, IntrinsicsDoc, RigidTransform};
use crate::imgproc::{ImageBundle, MarkerObservation, Plane, Rgb};
use crate::motion::{Marker, MarkerSet};
use crate::pathplan::ProbePose;

/// Overhead RGB-D camera looking straight down at the phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CameraSpec {
    /// Base-frame position of the optical center, mm.
    pub position_mm: [f64; 3],
    /// Rotation of the camera about the vertical, degrees.
    pub yaw_deg: f64,
    pub intrinsics: IntrinsicsDoc,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            position_mm: [0.0, 0.0, 500.0],
            yaw_deg: 0.0,
            intrinsics: IntrinsicsDoc {
                fx: 800.0,
                fy: 800.0,
                cx: 320.0,
                cy: 240.0,
                width: 640,
                height: 480,
            },
        }
    }
}

impl CameraSpec {
    /// Camera z looks down, camera y runs along base −y at zero yaw.
    pub fn base_from_camera(&self) -> RigidTransform<f64> {
        let down = Matrix3::from_columns(&[Vector3::x(), -Vector3::y(), -Vector3::z()]);
        let yaw = RigidTransform::from_axis_angle(&Vector3::z(), self.yaw_deg.to_radians());
        RigidTransform::new(yaw.rotation() * down, Vector3::from(self.position_mm))
            .expect("rotation is orthonormal")
    }

    pub fn camera_intrinsics(&self) -> Result<CameraIntrinsics<f64>, SimError> {
        Ok(self.intrinsics.to_intrinsics()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Per-pixel Gaussian depth noise, mm.
    pub depth_sigma_mm: f64,
    /// Marker position noise of a single post-motion observation, mm.
    pub marker_sigma_mm: f64,
    /// Marker noise of the per-step monitor snapshot, mm.
    pub monitor_sigma_mm: f64,
    /// Observations averaged into each stage's reference marker set.
    pub reference_samples: usize,
    /// Noise on the camera side of the calibration pairs, mm.
    pub calibration_sigma_mm: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            depth_sigma_mm: 0.0,
            marker_sigma_mm: 0.0,
            monitor_sigma_mm: 0.0,
            reference_samples: 50,
            calibration_sigma_mm: 0.0,
        }
    }
}

/// Truth behind a rendered scene.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Stripe centerline on the surface, object frame.
    pub path: Vec<Vector3<f64>>,
    /// Upward surface normals along `path`.
    pub normals: Vec<Vector3<f64>>,
    pub base_from_camera: RigidTransform<f64>,
    /// Object-to-base transform at capture time.
    pub base_from_object: RigidTransform<f64>,
    /// Pixels showing unoccluded stripe.
    pub stripe_mask: Plane<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneCapture {
    pub bundle: ImageBundle,
    /// Base-frame marker positions, noisy by `marker_sigma_mm`.
    pub markers: MarkerSet<f64>,
    /// Camera observations of the two end markers.
    pub end_observations: [MarkerObservation; 2],
    pub truth: GroundTruth,
}

/// Sample spacing of the ground-truth path, mm.
pub const TRUTH_STEP_MM: f64 = 0.25;

/// True marker positions in the base frame for the object pose `base_from_object`.
pub fn true_markers(
    spec: &PhantomSpec,
    base_from_object: &RigidTransform<f64>,
) -> Result<MarkerSet<f64>, SimError> {
    let markers = spec
        .markers
        .iter()
        .map(|m| Marker {
            label: m.label.clone(),
            role: m.role,
            position: base_from_object.transform_point(&spec.marker_position(m)),
        })
        .collect();
    Ok(MarkerSet::new(markers)?)
}

/// Adds isotropic Gaussian noise to every marker.
pub fn observe_markers(truth: &MarkerSet<f64>, sigma: f64, rng: &mut ChaCha8Rng) -> MarkerSet<f64> {
    if sigma <= 0.0 {
        return truth.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is positive");
    truth.map_positions(|_, p| p + Vector3::from_fn(|_, _| normal.sample(rng)))
}

/// Mean of `samples` independent noisy observations.
pub fn averaged_markers(
    truth: &MarkerSet<f64>,
    sigma: f64,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> MarkerSet<f64> {
    let n = samples.max(1);
    let mut sums = vec![Vector3::zeros(); truth.markers().len()];
    for _ in 0..n {
        let obs = observe_markers(truth, sigma, rng);
        for (s, m) in sums.iter_mut().zip(obs.markers()) {
            *s += m.position;
        }
    }
    truth.map_positions(|i, _| sums[i] / n as f64)
}

/// Pinhole projection of a camera-frame point.
pub fn project(p_camera: &Vector3<f64>, k: &CameraIntrinsics<f64>) -> Option<Vector2<f64>> {
    (p_camera.z > 0.0).then(|| {
        Vector2::new(
            k.fx * p_camera.x / p_camera.z + k.cx,
            k.fy * p_camera.y / p_camera.z + k.cy,
        )
    })
}

/// Ray parameter of the first surface crossing below `origin`, by bracketing
/// and bisection on `g(t) = z(t) − f(x(t), y(t))`.
fn intersect_surface(spec: &PhantomSpec, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
    let g = |t: f64| {
        let p = origin + dir * t;
        p.z - spec.surface.height(p.x, p.y)
    };
    if g(0.0) <= 0.0 {
        return None;
    }
    const STEP: f64 = 25.0;
    let (mut lo, mut hi) = (0.0, STEP);
    while g(hi) > 0.0 {
        lo = hi;
        hi += STEP;
        if hi > 1e4 {
            return None;
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

fn occluder_hit(spec: &PhantomSpec, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
    spec.occluders
        .iter()
        .filter_map(|o| {
            if dir.z >= 0.0 {
                return None;
            }
            let t = (o.top_mm - origin.z) / dir.z;
            let p = origin + dir * t;
            let inside = (o.min_xy_mm[0]..=o.max_xy_mm[0]).contains(&p.x)
                && (o.min_xy_mm[1]..=o.max_xy_mm[1]).contains(&p.y);
            (t > 0.0 && inside).then_some(t)
        })
        .min_by(f64::total_cmp)
}

fn jitter(c: Rgb, j: i32) -> Rgb {
    c.map(|v| (v as i32 + j).clamp(0, 255) as u8)
}

/// Renders the phantom, moved to `base_from_object`, as seen by `camera`.
///
/// Depth is the camera-frame z of the first surface hit plus Gaussian noise.
/// The stripe and marker discs are painted by plan-view distance on the
/// surface; occluders hide everything below them.
pub fn render_scene(
    spec: &PhantomSpec,
    camera: &CameraSpec,
    base_from_object: &RigidTransform<f64>,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<SceneCapture, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = camera.camera_intrinsics()?;
    let base_from_camera = camera.base_from_camera();
    let camera_from_base = base_from_camera.inverse();
    let object_from_base = base_from_object.inverse();

    let (path, normals) = spec.ground_truth_path(TRUTH_STEP_MM);
    for p in &path {
        let c = camera_from_base.transform_point(&base_from_object.transform_point(p));
        if !project(&c, &k).is_some_and(|px| k.contains(&px)) {
            return Err(SimError::PhantomNotVisible);
        }
    }

    // Rays are cast in the object frame, where the surface is a height field.
    let origin = object_from_base.transform_point(base_from_camera.translation());
    let to_object = object_from_base.rotation() * base_from_camera.rotation();
    let (w, h) = (k.width as usize, k.height as usize);
    let depth_noise = (noise.depth_sigma_mm > 0.0)
        .then(|| Normal::new(0.0, noise.depth_sigma_mm).expect("sigma is positive"));
    let amp = spec.luma_jitter as i32;
    let mut rgb = Plane::new(w, h, [0u8; 3]);
    let mut depth = Plane::new(w, h, 0.0);
    let mut mask = Plane::new(w, h, false);
    for v in 0..h {
        for u in 0..w {
            let ray_camera = Vector3::new((u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0);
            let ray_base = base_from_camera.rotation() * ray_camera;
            let ray = to_object * ray_camera;
            let j = if amp > 0 {
                rng.random_range(-amp..=amp)
            } else {
                0
            };
            let n = depth_noise.map_or(0.0, |d| d.sample(&mut rng));
            let surface_t = intersect_surface(spec, &origin, &ray);
            let occluded_t = occluder_hit(spec, base_from_camera.translation(), &ray_base);
            let (t, color, stripe) = match (surface_t, occluded_t) {
                (_, Some(t)) if surface_t.is_none_or(|s| t < s) => (t, OCCLUDER_COLOR, false),
                (Some(t), _) => {
                    let p = origin + ray * t;
                    let on_marker = spec
                        .markers
                        .iter()
                        .any(|m| (spec.marker_position(m) - p).norm() <= spec.marker_radius_mm);
                    let (d, frac) = spec.stripe_distance(p.x, p.y);
                    if on_marker {
                        (t, MARKER_COLOR, false)
                    } else if d <= spec.stripe_width_mm / 2.0 {
                        (t, jitter(spec.stripe_color_at(frac), j), true)
                    } else {
                        (t, jitter(spec.skin_color, j), false)
                    }
                }
                _ => continue,
            };
            rgb.set(u, v, color);
            // The ray has unit camera-frame z, so `t` is the depth.
            depth.set(u, v, (t + n).max(0.0));
            mask.set(u, v, stripe);
        }
    }
    let bundle = ImageBundle::new(rgb, depth, k)?;

    let truth_markers = true_markers(spec, base_from_object)?;
    let markers = observe_markers(&truth_markers, noise.marker_sigma_mm, &mut rng);
    let observe_end = |id: u32, label: &str| -> Result<MarkerObservation, SimError> {
        let m = markers.get(label).ok_or(SimError::InvalidScript(format!(
            "end marker {label} not in layout"
        )))?;
        let position = camera_from_base.transform_point(&m.position);
        let pixel = project(&position, &k).ok_or(SimError::PhantomNotVisible)?;
        Ok(MarkerObservation {
            id,
            pixel,
            position,
        })
    };
    let end_observations = [
        observe_end(0, &spec.end_markers[0])?,
        observe_end(1, &spec.end_markers[1])?,
    ];

    Ok(SceneCapture {
        bundle,
        markers,
        end_observations,
        truth: GroundTruth {
            path,
            normals,
            base_from_camera,
            base_from_object: *base_from_object,
            stripe_mask: mask,
        },
    })
}

/// B-mode geometry of the simulated probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct UsSpec {
    pub width: usize,
    pub height: usize,
    pub spacing_mm: f64,
}

impl Default for UsSpec {
    fn default() -> Self {
        Self {
            width: 80,
            height: 60,
            spacing_mm: 0.5,
        }
    }
}

pub const US_AIR: u8 = 0;
pub const US_LUMEN: u8 = 10;
pub const US_WALL: u8 = 230;
pub const US_SPECKLE: (u8, u8) = (50, 110);

/// Renders the B-mode image at a base-frame probe pose with the phantom at
/// `base_from_object`. Pixels above the surface are air; below it the tube
/// cross-section (lumen and wall) is drawn over seeded uniform speckle.
pub fn render_us_frame(
    spec: &PhantomSpec,
    us: &UsSpec,
    pose: &ProbePose<f64>,
    base_from_object: &RigidTransform<f64>,
    seed: u64,
) -> USFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let object_from_base = base_from_object.inverse();
    let mut frame = USFrame {
        pixels: Plane::new(us.width, us.height, US_AIR),
        spacing: us.spacing_mm,
        pose: *pose,
        stage: 0,
    };
    let inner = spec.tube.radius_mm;
    let outer = inner + spec.tube.wall_mm;
    for r in 0..us.height {
        for c in 0..us.width {
            let speckle = rng.random_range(US_SPECKLE.0..=US_SPECKLE.1);
            let q = object_from_base.transform_point(&frame.pixel_position(c, r));
            let value = if q.z > spec.surface.height(q.x, q.y) {
                US_AIR
            } else {
                let rho = spec.tube.radial_distance(&q);
                if rho < inner {
                    US_LUMEN
                } else if rho < outer {
                    US_WALL
                } else {
                    speckle
                }
            };
            frame.pixels.set(c, r, value);
        }
    }
    frame
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{image_to_base, FrameGraph, FrameId};
    use crate::imgproc::{
        column_coverage, extract_roi, extract_trajectory, filter_seeds, seed_points,
        ExtractionParams,
    };
    use crate::simscene::phantom::{distance_to_polyline, SurfaceShape};
    use crate::surface::backproject_trajectory;

    fn flat() -> PhantomSpec {
        PhantomSpec::straight(SurfaceShape::Flat { height_mm: 0.0 })
    }

    fn pose_at(position: Vector3<f64>, y: Vector3<f64>, z: Vector3<f64>) -> ProbePose<f64> {
        ProbePose {
            position,
            x_axis: y.cross(&z),
            y_axis: y,
            z_axis: z,
        }
    }

    #[test]
    fn projection_round_trip() {
        let cam = CameraSpec::default();
        let graph = FrameGraph::new(cam.camera_intrinsics().unwrap()).with_edge(
            FrameId::Base,
            FrameId::Camera,
            cam.base_from_camera(),
        );
        let k = cam.camera_intrinsics().unwrap();
        for p in [
            Vector3::new(12.0, -40.0, 3.0),
            Vector3::new(-150.0, 90.0, -30.0),
        ] {
            let c = cam.base_from_camera().inverse().transform_point(&p);
            let px = project(&c, &k).unwrap();
            let back = image_to_base(&px, c.z, &graph).unwrap();
            assert!((back - p).norm() < 1e-6);
        }
    }

    #[test]
    fn flat_scene_depth_and_determinism() {
        let spec = flat();
        let cam = CameraSpec::default();
        let a = render_scene(
            &spec,
            &cam,
            &RigidTransform::identity(),
            &NoiseConfig::default(),
            3,
        )
        .unwrap();
        let b = render_scene(
            &spec,
            &cam,
            &RigidTransform::identity(),
            &NoiseConfig::default(),
            3,
        )
        .unwrap();
        assert_eq!(a, b);
        assert!(a
            .bundle
            .depth
            .data()
            .iter()
            .all(|d| (d - 500.0).abs() < 1e-9));
        let center = a.bundle.rgb.get(320, 240);
        assert!(
            center[0] < 200 && center[1] < 40,
            "stripe at image center: {center:?}"
        );
        let stripe_rows = (0..480)
            .filter(|&v| a.truth.stripe_mask.get(320, v))
            .count();
        // 4 mm at 0.625 mm per pixel.
        assert!((6..=7).contains(&stripe_rows), "{stripe_rows}");
    }

    #[test]
    fn hidden_trajectory_is_an_error() {
        let cam = CameraSpec {
            position_mm: [400.0, 0.0, 500.0],
            ..CameraSpec::default()
        };
        let r = render_scene(
            &flat(),
            &cam,
            &RigidTransform::identity(),
            &NoiseConfig::default(),
            1,
        );
        assert!(matches!(r, Err(SimError::PhantomNotVisible)));
    }

    #[test]
    fn noiseless_flat_scene_extracts_and_backprojects() {
        let spec = flat();
        let cam = CameraSpec::default();
        let cap = render_scene(
            &spec,
            &cam,
            &RigidTransform::identity(),
            &NoiseConfig::default(),
            11,
        )
        .unwrap();
        let params = ExtractionParams::default();
        let [a, b] = &cap.end_observations;
        let roi = extract_roi(&cap.bundle, Some(a), Some(b), &params).unwrap();
        let seeds = filter_seeds(&roi, &seed_points(&roi, &params), &params);
        let traj = extract_trajectory(&roi, &seeds, &params).unwrap();
        let cov = column_coverage(&traj, &cap.truth.stripe_mask, &roi);
        assert!(cov.fraction() >= 0.95, "{}", cov.fraction());
        let graph = FrameGraph::new(cap.bundle.intrinsics).with_edge(
            FrameId::Base,
            FrameId::Camera,
            cam.base_from_camera(),
        );
        let (pts, _) = backproject_trajectory(&traj, &cap.bundle, &graph).unwrap();
        let mean = pts
            .iter()
            .map(|p| distance_to_polyline(&cap.truth.path, p).0)
            .sum::<f64>()
            / pts.len() as f64;
        assert!(mean < 0.5, "{mean}");
    }

    #[test]
    fn moved_object_moves_the_stripe() {
        let spec = flat();
        let cam = CameraSpec::default();
        let shift = RigidTransform::from_translation(Vector3::new(0.0, 25.0, 0.0));
        let cap = render_scene(&spec, &cam, &shift, &NoiseConfig::default(), 5).unwrap();
        // Base y = 25 mm maps to image row 240 − 25/0.625 = 200.
        assert!(cap.truth.stripe_mask.get(320, 200));
        assert!(!cap.truth.stripe_mask.get(320, 240));
        let m = cap.markers.get("end_a").unwrap();
        assert!((m.position - Vector3::new(-100.0, 25.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn perpendicular_section_is_a_circle() {
        let spec = flat();
        let us = UsSpec::default();
        // Plane x = 0: columns along y, rows down −z; tube at depth 20.
        let pose = pose_at(Vector3::zeros(), Vector3::y(), Vector3::z());
        let f = render_us_frame(&spec, &us, &pose, &RigidTransform::identity(), 9);
        let lumen = f.pixels.data().iter().filter(|&&v| v == US_LUMEN).count() as f64;
        let expected = std::f64::consts::PI * (5.0f64 / 0.5).powi(2);
        assert!(
            (lumen - expected).abs() / expected < 0.05,
            "{lumen} vs {expected}"
        );
        // Center pixel column 39.5 lies between two; row 40 at depth 20 mm.
        assert_eq!(f.pixels.get(40, 40), US_LUMEN);
    }

    #[test]
    fn oblique_section_is_an_ellipse() {
        let spec = flat();
        let us = UsSpec {
            width: 120,
            height: 60,
            spacing_mm: 0.25,
        };
        // Image plane spanned by z and a lateral axis at 60° to the tube axis.
        let a = 60f64.to_radians();
        let lateral = Vector3::new(a.cos(), a.sin(), 0.0);
        let pose = pose_at(Vector3::new(0.0, 0.0, -12.5), lateral, Vector3::z());
        let f = render_us_frame(&spec, &us, &pose, &RigidTransform::identity(), 2);
        let lumen: Vec<(usize, usize)> = (0..us.height)
            .flat_map(|r| (0..us.width).map(move |c| (c, r)))
            .filter(|&(c, r)| f.pixels.get(c, r) == US_LUMEN)
            .collect();
        let cols = lumen.iter().map(|p| p.0);
        let rows = lumen.iter().map(|p| p.1);
        let major =
            (cols.clone().max().unwrap() - cols.min().unwrap() + 1) as f64 * us.spacing_mm / 2.0;
        let minor =
            (rows.clone().max().unwrap() - rows.min().unwrap() + 1) as f64 * us.spacing_mm / 2.0;
        assert!((minor - 5.0).abs() < 0.3, "{minor}");
        assert!((major - 5.0 / a.sin()).abs() < 0.3, "{major}");
    }

    #[test]
    fn plane_missing_the_tube_has_no_lumen() {
        let spec = flat();
        let pose = pose_at(Vector3::new(0.0, 60.0, 0.0), Vector3::y(), Vector3::z());
        let f = render_us_frame(
            &spec,
            &UsSpec::default(),
            &pose,
            &RigidTransform::identity(),
            4,
        );
        assert!(f
            .pixels
            .data()
            .iter()
            .all(|&v| v != US_LUMEN && v != US_WALL));
    }
}
