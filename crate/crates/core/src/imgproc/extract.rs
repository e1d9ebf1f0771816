use std::collections::{BTreeMap, BTreeSet, HashSet};

use nalgebra::Vector2;

use super::{Channel, ExtractionParams, ImgError, Plane, Roi, SeedPoint};

/// Extracted trajectory in original image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory2D {
    /// Unique pixels ordered along the chord (rectified column, then row).
    pub points: Vec<[i64; 2]>,
    /// Index of the accepted seed whose search first reached each point.
    pub seed_index: Vec<usize>,
    /// Rectified `(u, v)` of each point.
    pub rectified: Vec<[usize; 2]>,
    /// Mean row per rectified column mapped back to the image; one sub-pixel
    /// sample per column, ordered along the chord.
    pub centerline: Vec<Vector2<f64>>,
}

impl Trajectory2D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
enum Anchor {
    /// Band follows the intensity of the last collected pixel.
    Adaptive,
    /// Band stays at this intensity for every box of every seed.
    Fixed(u8),
}

struct BoxMarch<'a> {
    plane: &'a Plane<u8>,
    valid: &'a Plane<bool>,
    params: &'a ExtractionParams,
    anchor: Anchor,
}

impl BoxMarch<'_> {
    fn collect_box(
        &self,
        columns: &[usize],
        center_v: usize,
        level: u8,
        out: &mut Vec<[usize; 2]>,
    ) -> usize {
        let half = (self.params.box_height / 2) as i64;
        let lo = (center_v as i64 - half).max(0) as usize;
        let hi = ((center_v as i64 + half) as usize).min(self.plane.height());
        let tol = self.params.cr_tolerance;
        let mut count = 0;
        for &m in columns {
            for n in lo..hi {
                if !self.valid.get(m, n) {
                    continue;
                }
                let value = self.plane.get(m, n);
                if value.abs_diff(level) <= tol {
                    out.push([m, n]);
                    count += 1;
                }
            }
        }
        count
    }

    /// Marches from the seed towards `bound`; the last box may overrun it by
    /// up to `B_w − 1` columns.
    fn march(&self, seed: &SeedPoint, bound: usize, rightward: bool, out: &mut Vec<[usize; 2]>) {
        let width = self.plane.width();
        let mut x = seed.u;
        let mut y = seed.v;
        let mut level = match self.anchor {
            Anchor::Adaptive => self.plane.get(seed.u, seed.v),
            Anchor::Fixed(level) => level,
        };
        let bw = self.params.box_width;
        loop {
            let in_range = if rightward { x < bound } else { x > bound };
            if !in_range {
                break;
            }
            let columns: Vec<usize> = if rightward {
                (x..(x + bw).min(width)).collect()
            } else {
                (x.saturating_sub(bw - 1)..=x).rev().collect()
            };
            let start = out.len();
            let n = self.collect_box(&columns, y, level, out);
            debug_assert!(out[start..]
                .iter()
                .all(|&[m, r]| self.plane.get(m, r).abs_diff(level) <= self.params.cr_tolerance));
            if n <= self.params.min_pixels {
                break;
            }
            let [lu, lv] = *out.last().expect("n > 0");
            let progressed = if rightward { lu > x } else { lu < x };
            if !progressed {
                break;
            }
            x = lu;
            y = lv;
            if let Anchor::Adaptive = self.anchor {
                level = self.plane.get(lu, lv);
            }
        }
    }
}

fn run(
    roi: &Roi,
    seeds: &[SeedPoint],
    params: &ExtractionParams,
    fixed: Option<u8>,
) -> Result<Trajectory2D, ImgError> {
    params.validate()?;
    let mut accepted: Vec<&SeedPoint> = seeds.iter().filter(|s| s.accepted).collect();
    if accepted.is_empty() {
        return Err(ImgError::NoSeeds);
    }
    accepted.sort_by_key(|s| s.u);

    let mut found: BTreeMap<[usize; 2], usize> = BTreeMap::new();
    for (i, seed) in accepted.iter().enumerate() {
        let channel = seed.channel.unwrap_or(Channel::Cr);
        let march = BoxMarch {
            plane: roi.plane(channel),
            valid: &roi.valid,
            params,
            anchor: fixed.map_or(Anchor::Adaptive, Anchor::Fixed),
        };
        let right_bound = accepted.get(i + 1).map_or(roi.width() - 1, |s| s.u);
        let left_bound = if i == 0 { 0 } else { accepted[i - 1].u };
        let mut pixels = Vec::new();
        march.march(seed, right_bound, true, &mut pixels);
        march.march(seed, left_bound, false, &mut pixels);
        for p in pixels {
            found.entry(p).or_insert(i);
        }
    }

    let mut seen: HashSet<[i64; 2]> = HashSet::new();
    let mut traj = Trajectory2D {
        points: Vec::new(),
        seed_index: Vec::new(),
        rectified: Vec::new(),
        centerline: Vec::new(),
    };
    let mut rows_per_column: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (&[u, v], &seed) in &found {
        let entry = rows_per_column.entry(u).or_insert((0.0, 0));
        entry.0 += v as f64;
        entry.1 += 1;
        let p = roi.rectified_to_image(u as f64, v as f64);
        let px = [p.x.round() as i64, p.y.round() as i64];
        if seen.insert(px) {
            traj.points.push(px);
            traj.seed_index.push(seed);
            traj.rectified.push([u, v]);
        }
    }
    traj.centerline = rows_per_column
        .into_iter()
        .map(|(u, (sum, n))| roi.rectified_to_image(u as f64, sum / n as f64))
        .collect();
    Ok(traj)
}

/// Seeds-based bidirectional moving-box extraction with a band that adapts
/// to the last collected pixel.
///
/// Each accepted seed marches a `B_w × B_h` box right to the next seed and
/// left to the previous one (to the ROI edge for the outermost seeds). A box
/// keeps moving while it holds more than `N_ep` pixels within `I_rt` of the
/// current anchor intensity; it is then re-centred on the last collected
/// pixel. Segments are merged by pixel-set union.
pub fn extract_trajectory(
    roi: &Roi,
    seeds: &[SeedPoint],
    params: &ExtractionParams,
) -> Result<Trajectory2D, ImgError> {
    run(roi, seeds, params, None)
}

/// Ablation: the band is frozen at the first accepted seed's intensity.
pub fn extract_trajectory_fixed_threshold(
    roi: &Roi,
    seeds: &[SeedPoint],
    params: &ExtractionParams,
) -> Result<Trajectory2D, ImgError> {
    let first = seeds
        .iter()
        .filter(|s| s.accepted)
        .min_by_key(|s| s.u)
        .ok_or(ImgError::NoSeeds)?;
    let level = roi
        .plane(first.channel.unwrap_or(Channel::Cr))
        .get(first.u, first.v);
    run(roi, seeds, params, Some(level))
}

/// Column coverage of an extraction against a ground-truth stripe mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    /// Rectified columns containing ground-truth stripe pixels.
    pub truth_columns: usize,
    /// Ground-truth columns with at least one extracted stripe pixel.
    pub covered_columns: usize,
    /// Columns with any extracted pixel.
    pub extracted_columns: usize,
    /// Extracted pixels that are not stripe pixels.
    pub off_stripe_pixels: usize,
}

impl Coverage {
    pub fn fraction(&self) -> f64 {
        if self.truth_columns == 0 {
            0.0
        } else {
            self.covered_columns as f64 / self.truth_columns as f64
        }
    }

    /// Extracted columns relative to ground-truth columns.
    pub fn extent_ratio(&self) -> f64 {
        if self.truth_columns == 0 {
            0.0
        } else {
            self.extracted_columns as f64 / self.truth_columns as f64
        }
    }
}

/// Compares extracted pixels with an image-space stripe mask, counting
/// columns in the ROI's rectified frame.
pub fn column_coverage(traj: &Trajectory2D, truth: &Plane<bool>, roi: &Roi) -> Coverage {
    let column = |x: usize, y: usize| {
        roi.image_to_rectified(&Vector2::new(x as f64, y as f64))
            .x
            .round() as i64
    };
    let mut truth_cols = BTreeSet::new();
    for y in 0..truth.height() {
        for x in 0..truth.width() {
            if truth.get(x, y) {
                truth_cols.insert(column(x, y));
            }
        }
    }
    let mut covered = BTreeSet::new();
    let mut extracted = BTreeSet::new();
    let mut off = 0;
    for &[x, y] in &traj.points {
        let on = truth.get_checked(x, y).unwrap_or(false);
        let c = column(x as usize, y as usize);
        extracted.insert(c);
        if on {
            covered.insert(c);
        } else {
            off += 1;
        }
    }
    Coverage {
        truth_columns: truth_cols.len(),
        covered_columns: covered.intersection(&truth_cols).count(),
        extracted_columns: extracted.len(),
        off_stripe_pixels: off,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::CameraIntrinsics;
    use crate::imgproc::{extract_roi, filter_seeds, seed_points, ImageBundle, MarkerObservation};
    use nalgebra::Vector3;

    const SKIN: [u8; 3] = [205, 170, 150];

    fn marker(x: f64, y: f64) -> MarkerObservation {
        MarkerObservation {
            id: 0,
            pixel: Vector2::new(x, y),
            position: Vector3::zeros(),
        }
    }

    /// Horizontal-ish stripe from x = 60 to 580 with a gentle bend, plus a
    /// mask of stripe pixels.
    fn stripe_scene(
        color: impl Fn(usize) -> [u8; 3],
        occluded: impl Fn(usize) -> bool,
    ) -> (ImageBundle, Plane<bool>) {
        let (w, h) = (640, 480);
        let center =
            |x: usize| 240.0 + 30.0 * ((x as f64 - 60.0) / 520.0 * std::f64::consts::PI).sin();
        let on = |x: usize, y: usize| (60..=580).contains(&x) && (y as f64 - center(x)).abs() < 2.5;
        let rgb = Plane::from_fn(w, h, |x, y| {
            if occluded(x) {
                [100, 100, 100]
            } else if on(x, y) {
                color(x)
            } else {
                SKIN
            }
        });
        let mask = Plane::from_fn(w, h, |x, y| on(x, y) && !occluded(x));
        let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, w as u32, h as u32).unwrap();
        (
            ImageBundle::new(rgb, Plane::new(w, h, 600.0), k).unwrap(),
            mask,
        )
    }

    fn extract(bundle: &ImageBundle, fixed: bool) -> (Trajectory2D, Roi) {
        let params = ExtractionParams::default();
        let roi = extract_roi(
            bundle,
            Some(&marker(55.0, 240.0)),
            Some(&marker(585.0, 240.0)),
            &params,
        )
        .unwrap();
        let seeds = filter_seeds(&roi, &seed_points(&roi, &params), &params);
        let traj = if fixed {
            extract_trajectory_fixed_threshold(&roi, &seeds, &params).unwrap()
        } else {
            extract_trajectory(&roi, &seeds, &params).unwrap()
        };
        (traj, roi)
    }

    #[test]
    fn unobstructed_stripe_is_covered() {
        let (bundle, mask) = stripe_scene(|_| [180, 30, 30], |_| false);
        let (traj, roi) = extract(&bundle, false);
        let cov = column_coverage(&traj, &mask, &roi);
        assert!(cov.fraction() >= 0.95, "{cov:?}");
        assert_eq!(cov.off_stripe_pixels, 0);
        // One centerline sample per column, strictly ordered.
        assert!(traj.centerline.windows(2).all(|w| w[0].x < w[1].x));
    }

    #[test]
    fn occluder_stops_both_directions() {
        let blocked = |x: usize| (300..360).contains(&x);
        let (bundle, mask) = stripe_scene(|_| [180, 30, 30], blocked);
        let (traj, roi) = extract(&bundle, false);
        let cov = column_coverage(&traj, &mask, &roi);
        assert!(cov.fraction() >= 0.95, "{cov:?}");
        assert!((cov.extent_ratio() - 1.0).abs() <= 0.05, "{cov:?}");
        assert!(traj.points.iter().all(|p| !blocked(p[0] as usize)));
    }

    #[test]
    fn adaptive_band_follows_color_drift() {
        // Red channel 150 -> 230 shifts Cr by +40 across the stripe.
        let color = |x: usize| {
            let t = (x.clamp(60, 580) - 60) as f64 / 520.0;
            [(150.0 + 80.0 * t).round() as u8, 30, 30]
        };
        let (bundle, mask) = stripe_scene(color, |_| false);
        let (adaptive, roi) = extract(&bundle, false);
        assert!(column_coverage(&adaptive, &mask, &roi).fraction() >= 0.95);
        let (fixed, roi) = extract(&bundle, true);
        assert!(column_coverage(&fixed, &mask, &roi).fraction() < 0.95);
    }

    #[test]
    fn no_seeds_is_an_error() {
        let (bundle, _) = stripe_scene(|_| [180, 30, 30], |_| false);
        let params = ExtractionParams::default();
        let roi = extract_roi(
            &bundle,
            Some(&marker(55.0, 240.0)),
            Some(&marker(585.0, 240.0)),
            &params,
        )
        .unwrap();
        assert_eq!(
            extract_trajectory(&roi, &[], &params),
            Err(ImgError::NoSeeds)
        );
    }

    #[test]
    fn extraction_is_deterministic() {
        let (bundle, _) = stripe_scene(|_| [180, 30, 30], |x| (200..230).contains(&x));
        let (a, _) = extract(&bundle, false);
        let (b, _) = extract(&bundle, false);
        assert_eq!(a, b);
    }
}
