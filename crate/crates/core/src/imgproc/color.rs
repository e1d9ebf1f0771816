use crate::geom::CameraIntrinsics;

use super::{ImgError, Plane};

pub type Rgb = [u8; 3];

/// Luma plus both chroma planes of an RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorPlanes {
    pub gray: Plane<u8>,
    pub cr: Plane<u8>,
    pub cb: Plane<u8>,
}

fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Full-range BT.601 conversion of one pixel, returned as `(Y, Cr, Cb)`.
pub fn ycrcb_pixel([r, g, b]: Rgb) -> (u8, u8, u8) {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cr = 128.0 + 0.5 * r - 0.419 * g - 0.081 * b;
    let cb = 128.0 - 0.169 * r - 0.331 * g + 0.5 * b;
    (quantize(y), quantize(cr), quantize(cb))
}

pub fn to_ycrcb(rgb: &Plane<Rgb>) -> ColorPlanes {
    let (w, h) = (rgb.width(), rgb.height());
    let mut gray = Plane::new(w, h, 0u8);
    let mut cr = Plane::new(w, h, 0u8);
    let mut cb = Plane::new(w, h, 0u8);
    for y in 0..h {
        for x in 0..w {
            let (yy, r, b) = ycrcb_pixel(rgb.get(x, y));
            gray.set(x, y, yy);
            cr.set(x, y, r);
            cb.set(x, y, b);
        }
    }
    ColorPlanes { gray, cr, cb }
}

/// One RGB-D capture: color, derived planes, depth in mm (0 marks a hole)
/// and the intrinsics of the color/depth camera.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBundle {
    pub rgb: Plane<Rgb>,
    pub cr: Plane<u8>,
    pub cb: Plane<u8>,
    pub gray: Plane<u8>,
    pub depth: Plane<f64>,
    pub intrinsics: CameraIntrinsics<f64>,
}

impl ImageBundle {
    pub fn new(
        rgb: Plane<Rgb>,
        depth: Plane<f64>,
        intrinsics: CameraIntrinsics<f64>,
    ) -> Result<Self, ImgError> {
        if !rgb.same_size(&depth)
            || rgb.width() != intrinsics.width as usize
            || rgb.height() != intrinsics.height as usize
        {
            return Err(ImgError::DimensionMismatch);
        }
        let ColorPlanes { gray, cr, cb } = to_ycrcb(&rgb);
        Ok(Self {
            rgb,
            cr,
            cb,
            gray,
            depth,
            intrinsics,
        })
    }

    pub fn width(&self) -> usize {
        self.rgb.width()
    }

    pub fn height(&self) -> usize {
        self.rgb.height()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn achromatic_pixel_is_centered() {
        let (y, cr, cb) = ycrcb_pixel([128, 128, 128]);
        assert_eq!((y, cr, cb), (128, 128, 128));
    }

    #[test]
    fn saturated_primaries_clamp() {
        // Cr = 128 + 127.5 = 255.5 -> clamped; Y = 76.245.
        let (y, cr, _) = ycrcb_pixel([255, 0, 0]);
        assert_eq!((y, cr), (76, 255));
        let (_, _, cb) = ycrcb_pixel([0, 0, 255]);
        assert_eq!(cb, 255);
        let (y, cr, cb) = ycrcb_pixel([0, 0, 0]);
        assert_eq!((y, cr, cb), (0, 128, 128));
    }

    #[test]
    fn planes_match_pixel_conversion() {
        let rgb = Plane::from_fn(4, 3, |x, y| [(x * 60) as u8, (y * 90) as u8, 40]);
        let planes = to_ycrcb(&rgb);
        for y in 0..3 {
            for x in 0..4 {
                let (g, r, b) = ycrcb_pixel(rgb.get(x, y));
                assert_eq!(planes.gray.get(x, y), g);
                assert_eq!(planes.cr.get(x, y), r);
                assert_eq!(planes.cb.get(x, y), b);
            }
        }
    }

    #[test]
    fn bundle_checks_dimensions() {
        let k = CameraIntrinsics::new(100.0, 100.0, 2.0, 1.0, 4, 3).unwrap();
        let rgb = Plane::new(4, 3, [0u8; 3]);
        assert!(ImageBundle::new(rgb.clone(), Plane::new(4, 3, 1.0), k).is_ok());
        assert_eq!(
            ImageBundle::new(rgb, Plane::new(3, 3, 1.0), k),
            Err(ImgError::DimensionMismatch)
        );
    }
}
