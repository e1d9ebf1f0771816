use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::motion::MarkerRole;

/// Height field `z = f(x, y)` of the phantom top, object frame, mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "type",
    rename_all = "camelCase",
    rename_all_fields = "camelCase",
    deny_unknown_fields
)]
pub enum SurfaceShape {
    Flat {
        height_mm: f64,
    },
    Inclined {
        height_mm: f64,
        slope_x: f64,
        slope_y: f64,
    },
    /// Ridge along `x = line_x_mm`; each face falls away at `tilt_deg`.
    Crease {
        height_mm: f64,
        line_x_mm: f64,
        tilt_deg: f64,
    },
    /// Spherical cap on a plane at `center_mm.z`.
    Hemisphere {
        center_mm: [f64; 3],
        radius_mm: f64,
    },
}

impl SurfaceShape {
    pub fn height(&self, x: f64, y: f64) -> f64 {
        match *self {
            Self::Flat { height_mm } => height_mm,
            Self::Inclined {
                height_mm,
                slope_x,
                slope_y,
            } => height_mm + slope_x * x + slope_y * y,
            Self::Crease {
                height_mm,
                line_x_mm,
                tilt_deg,
            } => height_mm - tilt_deg.to_radians().tan() * (x - line_x_mm).abs(),
            Self::Hemisphere {
                center_mm: c,
                radius_mm: r,
            } => {
                let rho2 = (x - c[0]).powi(2) + (y - c[1]).powi(2);
                c[2] + (r * r - rho2).max(0.0).sqrt()
            }
        }
    }

    /// Upward unit normal.
    pub fn normal(&self, x: f64, y: f64) -> Vector3<f64> {
        let (gx, gy) = match *self {
            Self::Flat { .. } => (0.0, 0.0),
            Self::Inclined {
                slope_x, slope_y, ..
            } => (slope_x, slope_y),
            Self::Crease {
                line_x_mm,
                tilt_deg,
                ..
            } => {
                let t = tilt_deg.to_radians().tan();
                (if x < line_x_mm { t } else { -t }, 0.0)
            }
            Self::Hemisphere {
                center_mm: c,
                radius_mm: r,
            } => {
                let d = Vector3::new(x - c[0], y - c[1], 0.0);
                let rho2 = d.x * d.x + d.y * d.y;
                if rho2 >= r * r {
                    (0.0, 0.0)
                } else {
                    let h = (r * r - rho2).sqrt();
                    return Vector3::new(d.x, d.y, h).normalize();
                }
            }
        };
        Vector3::new(-gx, -gy, 1.0).normalize()
    }

    pub fn point(&self, x: f64, y: f64) -> Vector3<f64> {
        Vector3::new(x, y, self.height(x, y))
    }
}

/// Straight vessel mimic below the surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TubeSpec {
    /// A point on the axis, object frame, mm.
    pub point_mm: [f64; 3],
    pub direction: [f64; 3],
    /// Lumen radius, mm.
    pub radius_mm: f64,
    /// Bright wall thickness outside the lumen, mm.
    pub wall_mm: f64,
}

impl TubeSpec {
    /// Distance from the tube axis.
    pub fn radial_distance(&self, p: &Vector3<f64>) -> f64 {
        let a = Vector3::from(self.point_mm);
        let d = Vector3::from(self.direction).normalize();
        let v = p - a;
        (v - d * v.dot(&d)).norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct MarkerSpec {
    pub label: String,
    pub role: MarkerRole,
    /// Plan-view position; the marker sits on the surface.
    pub xy_mm: [f64; 2],
}

/// Fixed box above the phantom (probe, arm) hiding what lies below it from
/// the camera. Does not move with the object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Occluder {
    pub min_xy_mm: [f64; 2],
    pub max_xy_mm: [f64; 2],
    /// Base-frame height of the top face, mm.
    pub top_mm: f64,
}

/// Synthetic phantom: surface, drawn stripe, markers and embedded tube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PhantomSpec {
    pub surface: SurfaceShape,
    pub tube: TubeSpec,
    /// Plan-view polyline of the drawn trajectory, mm.
    pub trajectory_xy_mm: Vec<[f64; 2]>,
    pub stripe_width_mm: f64,
    pub stripe_color: [u8; 3],
    /// When set, the stripe color ramps linearly to this along the path.
    #[serde(default)]
    pub stripe_color_end: Option<[u8; 3]>,
    pub skin_color: [u8; 3],
    /// Amplitude of the seeded per-pixel brightness jitter added equally to
    /// all three channels.
    pub luma_jitter: u8,
    pub marker_radius_mm: f64,
    pub markers: Vec<MarkerSpec>,
    /// Labels of the markers at the two trajectory ends.
    pub end_markers: [String; 2],
    #[serde(default)]
    pub occluders: Vec<Occluder>,
}

pub const MARKER_COLOR: [u8; 3] = [250, 250, 250];
pub const OCCLUDER_COLOR: [u8; 3] = [100, 100, 100];

impl Default for PhantomSpec {
    fn default() -> Self {
        Self::straight(SurfaceShape::Flat { height_mm: 0.0 })
    }
}

impl PhantomSpec {
    /// Straight stripe along x over a tube 20 mm below the surface.
    pub fn straight(surface: SurfaceShape) -> Self {
        let marker = |label: &str, role, x: f64, y: f64| MarkerSpec {
            label: label.into(),
            role,
            xy_mm: [x, y],
        };
        let depth = surface.height(0.0, 0.0) - 20.0;
        Self {
            surface,
            tube: TubeSpec {
                point_mm: [0.0, 0.0, depth],
                direction: [1.0, 0.0, 0.0],
                radius_mm: 5.0,
                wall_mm: 1.5,
            },
            trajectory_xy_mm: vec![[-90.0, 0.0], [90.0, 0.0]],
            stripe_width_mm: 4.0,
            stripe_color: [180, 30, 30],
            stripe_color_end: None,
            skin_color: [205, 170, 150],
            luma_jitter: 3,
            marker_radius_mm: 5.0,
            markers: vec![
                marker("end_a", MarkerRole::Registration, -100.0, 0.0),
                marker("end_b", MarkerRole::Registration, 100.0, 0.0),
                marker("m1", MarkerRole::Registration, -50.0, 45.0),
                marker("m2", MarkerRole::Registration, 50.0, -45.0),
                marker("m3", MarkerRole::Validation, -20.0, -35.0),
            ],
            end_markers: ["end_a".into(), "end_b".into()],
            occluders: Vec::new(),
        }
    }

    /// V-shaped stripe with its apex at `(0, apex_y)`.
    pub fn vee(surface: SurfaceShape, apex_y: f64) -> Self {
        Self {
            trajectory_xy_mm: vec![[-90.0, 0.0], [0.0, apex_y], [90.0, 0.0]],
            ..Self::straight(surface)
        }
    }

    pub fn marker_position(&self, m: &MarkerSpec) -> Vector3<f64> {
        self.surface.point(m.xy_mm[0], m.xy_mm[1])
    }

    /// Plan-view arc length of the trajectory polyline.
    pub fn trajectory_length(&self) -> f64 {
        self.trajectory_xy_mm
            .windows(2)
            .map(|w| (Vector2::from(w[1]) - Vector2::from(w[0])).norm())
            .sum()
    }

    /// Plan-view distance to the trajectory and the arc-length fraction of
    /// the closest point. The stripe ends square: points beyond either end
    /// of the polyline are infinitely far.
    pub fn stripe_distance(&self, x: f64, y: f64) -> (f64, f64) {
        let p = Vector2::new(x, y);
        let total = self.trajectory_length().max(f64::EPSILON);
        let last = self.trajectory_xy_mm.len().saturating_sub(2);
        let mut best = (f64::INFINITY, 0.0);
        let mut arc = 0.0;
        for (i, w) in self.trajectory_xy_mm.windows(2).enumerate() {
            let (a, b) = (Vector2::from(w[0]), Vector2::from(w[1]));
            let ab = b - a;
            let len = ab.norm();
            let raw = if len > 0.0 {
                (p - a).dot(&ab) / (len * len)
            } else {
                0.0
            };
            if (i == 0 && raw < 0.0) || (i == last && raw > 1.0) {
                arc += len;
                continue;
            }
            let t = raw.clamp(0.0, 1.0);
            let d = (a + ab * t - p).norm();
            if d < best.0 {
                best = (d, (arc + t * len) / total);
            }
            arc += len;
        }
        best
    }

    pub fn stripe_color_at(&self, fraction: f64) -> [u8; 3] {
        match self.stripe_color_end {
            None => self.stripe_color,
            Some(end) => {
                let mix =
                    |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * fraction).round() as u8;
                [
                    mix(self.stripe_color[0], end[0]),
                    mix(self.stripe_color[1], end[1]),
                    mix(self.stripe_color[2], end[2]),
                ]
            }
        }
    }

    /// Ground-truth path: the stripe centerline lifted onto the surface,
    /// sampled every `step` mm of plan-view arc length, with surface normals.
    pub fn ground_truth_path(&self, step: f64) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
        let mut pts = Vec::new();
        for w in self.trajectory_xy_mm.windows(2) {
            let (a, b) = (Vector2::from(w[0]), Vector2::from(w[1]));
            let n = ((b - a).norm() / step).ceil().max(1.0) as usize;
            for i in 0..n {
                let q = a + (b - a) * (i as f64 / n as f64);
                pts.push(self.surface.point(q.x, q.y));
            }
        }
        if let Some(last) = self.trajectory_xy_mm.last() {
            pts.push(self.surface.point(last[0], last[1]));
        }
        let normals = pts.iter().map(|p| self.surface.normal(p.x, p.y)).collect();
        (pts, normals)
    }
}

/// Distance from `p` to the polyline through `path`, with the index of the
/// segment start it is closest to.
pub fn distance_to_polyline(path: &[Vector3<f64>], p: &Vector3<f64>) -> (f64, usize) {
    if path.len() == 1 {
        return ((path[0] - p).norm(), 0);
    }
    let mut best = (f64::INFINITY, 0);
    for (i, w) in path.windows(2).enumerate() {
        let ab = w[1] - w[0];
        let len2 = ab.norm_squared();
        let t = if len2 > 0.0 {
            ((p - w[0]).dot(&ab) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let d = (w[0] + ab * t - p).norm();
        if d < best.0 {
            best = (d, if t > 0.5 { i + 1 } else { i });
        }
    }
    best
}
