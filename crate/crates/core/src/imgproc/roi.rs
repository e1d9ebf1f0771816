use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{ExtractionParams, ImageBundle, ImgError, Plane};

/// A passive marker seen by the camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerObservation {
    pub id: u32,
    /// Image position in pixels.
    pub pixel: Vector2<f64>,
    /// Position in the camera frame, mm.
    pub position: Vector3<f64>,
}

/// Inclusive intensity band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Band {
    pub lo: u8,
    pub hi: u8,
}

impl Band {
    pub fn contains(&self, v: u8) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Region of interest around the marker chord, resampled so that the chord
/// runs horizontally through the middle row.
///
/// Rectified pixel `(u, v)` sits at image position `origin + R(angle)·(u, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Roi {
    /// Chord direction in the image, radians; the rectification rotates by `-angle`.
    pub angle: f64,
    pub origin: Vector2<f64>,
    /// Rectified column of the first and second end marker.
    pub start_u: f64,
    pub end_u: f64,
    /// Rectified row of the chord.
    pub chord_v: f64,
    pub cr_band: Band,
    pub cb_band: Band,
    pub cr: Plane<u8>,
    pub cb: Plane<u8>,
    pub gray: Plane<u8>,
    /// False where the rectified pixel falls outside the source image.
    pub valid: Plane<bool>,
}

impl Roi {
    pub fn width(&self) -> usize {
        self.cr.width()
    }

    pub fn height(&self) -> usize {
        self.cr.height()
    }

    pub fn rectified_to_image(&self, u: f64, v: f64) -> Vector2<f64> {
        let (s, c) = self.angle.sin_cos();
        self.origin + Vector2::new(c * u - s * v, s * u + c * v)
    }

    pub fn image_to_rectified(&self, p: &Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.angle.sin_cos();
        let d = p - self.origin;
        Vector2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }
}

/// Pixels of the end markers are skipped when sampling the chord band.
const MARKER_CLEARANCE_PX: f64 = 10.0;

/// Builds the rectified ROI spanned by the two end markers.
///
/// The ROI extends `1.5·B_h` above and below the chord and `B_w` beyond each
/// marker. The Cr/Cb bands are `[min − I_rt, max + I_rt]` of the pixels
/// sampled along the chord between the markers.
pub fn extract_roi(
    bundle: &ImageBundle,
    marker_a: Option<&MarkerObservation>,
    marker_b: Option<&MarkerObservation>,
    params: &ExtractionParams,
) -> Result<Roi, ImgError> {
    let (a, b) = match (marker_a, marker_b) {
        (Some(a), Some(b)) => (a.pixel, b.pixel),
        _ => return Err(ImgError::MarkersMissing),
    };
    let inside = |p: &Vector2<f64>| {
        p.x >= 0.0
            && p.y >= 0.0
            && p.x <= bundle.width() as f64 - 1.0
            && p.y <= bundle.height() as f64 - 1.0
    };
    if !inside(&a) || !inside(&b) {
        return Err(ImgError::MarkersMissing);
    }
    let chord = b - a;
    let length = chord.norm();
    if length < 2.0 {
        return Err(ImgError::MarkersMissing);
    }
    let angle = chord.y.atan2(chord.x);
    let center = (a + b) / 2.0;

    let margin_v = (1.5 * params.box_height as f64).round() as usize;
    let height = 2 * margin_v + 1;
    let margin_u = params.box_width;
    let width = length.ceil() as usize + 2 * margin_u + 1;

    // Keep the rectified grid aligned with image pixels when no rotation is needed.
    let cu = (width / 2) as f64 + center.x.fract();
    let cv = margin_v as f64 + center.y.fract();
    let (s, c) = angle.sin_cos();
    let origin = center - Vector2::new(c * cu - s * cv, s * cu + c * cv);

    let mut roi = Roi {
        angle,
        origin,
        start_u: cu - length / 2.0,
        end_u: cu + length / 2.0,
        chord_v: cv,
        cr_band: Band { lo: 0, hi: 255 },
        cb_band: Band { lo: 0, hi: 255 },
        cr: Plane::new(width, height, 0),
        cb: Plane::new(width, height, 0),
        gray: Plane::new(width, height, 0),
        valid: Plane::new(width, height, false),
    };
    for v in 0..height {
        for u in 0..width {
            let p = roi.rectified_to_image(u as f64, v as f64);
            let (x, y) = (p.x.round() as i64, p.y.round() as i64);
            if let Some(cr) = bundle.cr.get_checked(x, y) {
                let (x, y) = (x as usize, y as usize);
                roi.cr.set(u, v, cr);
                roi.cb.set(u, v, bundle.cb.get(x, y));
                roi.gray.set(u, v, bundle.gray.get(x, y));
                roi.valid.set(u, v, true);
            }
        }
    }

    let mut cr_range: Option<(u8, u8)> = None;
    let mut cb_range: Option<(u8, u8)> = None;
    let steps = length.floor() as usize;
    for i in 0..=steps {
        let t = i as f64;
        if t < MARKER_CLEARANCE_PX || length - t < MARKER_CLEARANCE_PX {
            continue;
        }
        let p = a + chord * (t / length);
        let (x, y) = (p.x.round() as i64, p.y.round() as i64);
        if let (Some(cr), Some(cb)) = (bundle.cr.get_checked(x, y), bundle.cb.get_checked(x, y)) {
            cr_range = Some(cr_range.map_or((cr, cr), |(lo, hi)| (lo.min(cr), hi.max(cr))));
            cb_range = Some(cb_range.map_or((cb, cb), |(lo, hi)| (lo.min(cb), hi.max(cb))));
        }
    }
    let widen = |r: Option<(u8, u8)>| {
        r.map_or(Band { lo: 0, hi: 255 }, |(lo, hi)| Band {
            lo: lo.saturating_sub(params.cr_tolerance),
            hi: hi.saturating_add(params.cr_tolerance),
        })
    };
    roi.cr_band = widen(cr_range);
    roi.cb_band = widen(cb_range);
    Ok(roi)
}
