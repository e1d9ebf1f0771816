use serde::{Deserialize, Serialize};

use super::{ImgError, Plane, Roi};

/// Tunables of the seed search and the moving-box extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct ExtractionParams {
    /// Moving box width `B_w`, pixels.
    pub box_width: usize,
    /// Moving box height `B_h`, pixels.
    pub box_height: usize,
    /// Relative intensity tolerance `I_rt`.
    pub cr_tolerance: u8,
    /// Minimum in-band pixel count `N_ep` for the box to keep moving.
    pub min_pixels: usize,
    /// Number of seed lines `N_s`.
    pub seed_count: usize,
    /// Boundary features below this value count as flat.
    pub boundary_feature_floor: u8,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self {
            box_width: 20,
            box_height: 100,
            cr_tolerance: 25,
            min_pixels: 10,
            seed_count: 9,
            boundary_feature_floor: 10,
        }
    }
}

impl ExtractionParams {
    pub fn validate(&self) -> Result<(), ImgError> {
        if self.box_width == 0 || self.box_height == 0 || self.seed_count == 0 {
            return Err(ImgError::InvalidParams(
                "box size and seed count must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Plane a seed is tracked in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Cr,
    Gray,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPoint {
    /// Rectified ROI column and row.
    pub u: usize,
    pub v: usize,
    pub cr_value: u8,
    pub accepted: bool,
    /// Channel whose boundary test passed; set when accepted.
    pub channel: Option<Channel>,
}

impl Roi {
    pub fn plane(&self, channel: Channel) -> &Plane<u8> {
        match channel {
            Channel::Cr => &self.cr,
            Channel::Gray => &self.gray,
        }
    }
}

/// Rectified columns of the seed lines,
/// `start + (end − start)/N_s · i` for `i = 1..=N_s`, strictly increasing.
pub fn seed_columns(start_u: f64, end_u: f64, seed_count: usize) -> Vec<usize> {
    let mut cols: Vec<usize> = Vec::with_capacity(seed_count);
    for i in 1..=seed_count {
        let u = start_u + (end_u - start_u) / seed_count as f64 * i as f64;
        let u = u.round().max(0.0) as usize;
        if cols.last().is_none_or(|&last| u > last) {
            cols.push(u);
        }
    }
    cols
}

/// Places one seed per seed line at the row of maximum Cr; ties go to the
/// smallest row.
pub fn seed_points(roi: &Roi, params: &ExtractionParams) -> Vec<SeedPoint> {
    seed_columns(roi.start_u, roi.end_u, params.seed_count)
        .into_iter()
        .filter(|&u| u < roi.width())
        .filter_map(|u| {
            let mut best: Option<(usize, u8)> = None;
            for v in 0..roi.height() {
                if !roi.valid.get(u, v) {
                    continue;
                }
                let cr = roi.cr.get(u, v);
                if best.is_none_or(|(_, b)| cr > b) {
                    best = Some((v, cr));
                }
            }
            best.map(|(v, cr_value)| SeedPoint {
                u,
                v,
                cr_value,
                accepted: false,
                channel: None,
            })
        })
        .collect()
}

/// Largest adjacent-pixel step over the eight rows above and below the
/// seed: `f_up = max_j |I(x, y+j+1) − I(x, y+j)|`,
/// `f_down = max_j |I(x, y−j−1) − I(x, y−j)|`, `j = 1..=8`.
pub fn boundary_features(plane: &Plane<u8>, u: usize, v: usize) -> Result<(u8, u8), ImgError> {
    if u >= plane.width() || v < 9 || v + 9 >= plane.height() {
        return Err(ImgError::OutOfBounds { u, v });
    }
    let step = |a: usize, b: usize| plane.get(u, a).abs_diff(plane.get(u, b));
    let up = (1..=8).map(|j| step(v + j + 1, v + j)).max().unwrap_or(0);
    let down = (1..=8).map(|j| step(v - j - 1, v - j)).max().unwrap_or(0);
    Ok((up, down))
}

/// Keeps seeds with a boundary feature at or above the floor in Cr, falling
/// back to the gray plane; seeds too close to the ROI edge are dropped.
pub fn filter_seeds(roi: &Roi, seeds: &[SeedPoint], params: &ExtractionParams) -> Vec<SeedPoint> {
    let passes = |channel: Channel, s: &SeedPoint| {
        boundary_features(roi.plane(channel), s.u, s.v)
            .map(|(up, down)| up.max(down) >= params.boundary_feature_floor)
            .unwrap_or(false)
    };
    seeds
        .iter()
        .filter_map(|s| {
            let channel = if passes(Channel::Cr, s) {
                Channel::Cr
            } else if passes(Channel::Gray, s) {
                Channel::Gray
            } else {
                return None;
            };
            Some(SeedPoint {
                accepted: true,
                channel: Some(channel),
                ..*s
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgproc::Band;
    use nalgebra::Vector2;

    fn roi_from(cr: Plane<u8>, gray: Plane<u8>, start_u: f64, end_u: f64) -> Roi {
        let (w, h) = (cr.width(), cr.height());
        Roi {
            angle: 0.0,
            origin: Vector2::zeros(),
            start_u,
            end_u,
            chord_v: h as f64 / 2.0,
            cr_band: Band { lo: 0, hi: 255 },
            cb_band: Band { lo: 0, hi: 255 },
            cb: Plane::new(w, h, 128),
            cr,
            gray,
            valid: Plane::new(w, h, true),
        }
    }

    #[test]
    fn seed_columns_follow_formula() {
        assert_eq!(
            seed_columns(100.0, 190.0, 9),
            vec![110, 120, 130, 140, 150, 160, 170, 180, 190]
        );
        // Degenerate spans never repeat a column.
        assert_eq!(seed_columns(10.0, 12.0, 9), vec![10, 11, 12]);
    }

    #[test]
    fn seeds_land_on_stripe() {
        let cr = Plane::from_fn(
            300,
            200,
            |_, y| if (95..100).contains(&y) { 200 } else { 120 },
        );
        let roi = roi_from(cr.clone(), Plane::new(300, 200, 150), 20.0, 280.0);
        let seeds = seed_points(&roi, &ExtractionParams::default());
        assert_eq!(seeds.len(), 9);
        assert!(seeds.windows(2).all(|w| w[0].u < w[1].u));
        for s in &seeds {
            assert!((95..100).contains(&s.v));
            assert_eq!(s.cr_value, 200);
        }
    }

    #[test]
    fn uniform_plane_ties_break_to_top_row() {
        let roi = roi_from(
            Plane::new(100, 50, 140),
            Plane::new(100, 50, 150),
            0.0,
            90.0,
        );
        let seeds = seed_points(&roi, &ExtractionParams::default());
        assert!(seeds.iter().all(|s| s.v == 0));
    }

    #[test]
    fn boundary_features_follow_definition() {
        let flat = Plane::new(5, 40, 77u8);
        assert_eq!(boundary_features(&flat, 2, 20), Ok((0, 0)));
        // Rows ... 10, 10, 200, 200 ... with the step three rows above the seed.
        let col = Plane::from_fn(1, 40, |_, y| if y >= 17 { 200 } else { 10 });
        assert_eq!(boundary_features(&col, 0, 20), Ok((0, 190)));
        let col = Plane::from_fn(1, 40, |_, y| if y <= 24 { 200 } else { 10 });
        assert_eq!(boundary_features(&col, 0, 20), Ok((190, 0)));
        // The step right next to the seed (j = 0) is outside the window.
        let col = Plane::from_fn(1, 40, |_, y| if y >= 20 { 200 } else { 10 });
        assert_eq!(boundary_features(&col, 0, 20), Ok((0, 0)));
        assert_eq!(
            boundary_features(&flat, 2, 4),
            Err(ImgError::OutOfBounds { u: 2, v: 4 })
        );
        assert_eq!(
            boundary_features(&flat, 2, 31),
            Err(ImgError::OutOfBounds { u: 2, v: 31 })
        );
    }

    #[test]
    fn filter_prefers_cr_then_gray() {
        let params = ExtractionParams::default();
        let stripe = |y: usize| (95..100).contains(&y);
        // Sharp Cr stripe.
        let roi = roi_from(
            Plane::from_fn(200, 200, |_, y| if stripe(y) { 200 } else { 147 }),
            Plane::new(200, 200, 178),
            10.0,
            190.0,
        );
        let accepted = filter_seeds(&roi, &seed_points(&roi, &params), &params);
        assert_eq!(accepted.len(), 9);
        assert!(accepted
            .iter()
            .all(|s| s.accepted && s.channel == Some(Channel::Cr)));

        // Flat in both channels.
        let roi = roi_from(
            Plane::new(200, 200, 147),
            Plane::new(200, 200, 178),
            10.0,
            190.0,
        );
        let mut seeds = seed_points(&roi, &params);
        seeds.iter_mut().for_each(|s| s.v = 100);
        assert!(filter_seeds(&roi, &seeds, &params).is_empty());

        // Luminance-only stripe on a saturated red background.
        let roi = roi_from(
            Plane::new(200, 200, 255),
            Plane::from_fn(200, 200, |_, y| if stripe(y) { 40 } else { 76 }),
            10.0,
            190.0,
        );
        let seeds: Vec<_> = seed_points(&roi, &params)
            .into_iter()
            .map(|s| SeedPoint { v: 96, ..s })
            .collect();
        let accepted = filter_seeds(&roi, &seeds, &params);
        assert_eq!(accepted.len(), seeds.len());
        assert!(accepted.iter().all(|s| s.channel == Some(Channel::Gray)));
    }
}
