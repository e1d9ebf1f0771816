//! Image and JSON file helpers. RGB images are 8-bit PNG (PPM also read),
//! grayscale frames 8-bit PNG, depth maps 16-bit PNG or PGM in whole mm.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, RgbImage};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::imgproc::{Plane, Rgb};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> IoError + '_ {
    move |source| IoError::Image {
        path: path.display().to_string(),
        source,
    }
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_rgb(path: &Path) -> Result<Plane<Rgb>, IoError> {
    let img = image::open(path).map_err(image_err(path))?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| p.0).collect();
    Ok(Plane::from_vec(w as usize, h as usize, data).expect("buffer matches dimensions"))
}

pub fn write_rgb(path: &Path, plane: &Plane<Rgb>) -> Result<(), IoError> {
    let mut img = RgbImage::new(plane.width() as u32, plane.height() as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        px.0 = plane.data()[i];
    }
    img.save(path).map_err(image_err(path))
}

pub fn read_gray(path: &Path) -> Result<Plane<u8>, IoError> {
    let img = image::open(path).map_err(image_err(path))?.to_luma8();
    let (w, h) = img.dimensions();
    Ok(Plane::from_vec(w as usize, h as usize, img.into_raw()).expect("buffer matches dimensions"))
}

pub fn write_gray(path: &Path, plane: &Plane<u8>) -> Result<(), IoError> {
    let img = GrayImage::from_raw(
        plane.width() as u32,
        plane.height() as u32,
        plane.data().to_vec(),
    )
    .expect("buffer matches dimensions");
    img.save(path).map_err(image_err(path))
}

/// Binary mask as 0/255 grayscale.
pub fn write_mask(path: &Path, mask: &Plane<bool>) -> Result<(), IoError> {
    write_gray(path, &mask.map(|b| if b { 255 } else { 0 }))
}

pub fn read_mask(path: &Path) -> Result<Plane<bool>, IoError> {
    Ok(read_gray(path)?.map(|v| v >= 128))
}

/// 16-bit depth in whole millimeters; 0 marks a hole.
pub fn read_depth(path: &Path) -> Result<Plane<f64>, IoError> {
    let img = image::open(path).map_err(image_err(path))?.to_luma16();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(f64::from).collect();
    Ok(Plane::from_vec(w as usize, h as usize, data).expect("buffer matches dimensions"))
}

/// Rounds to whole millimeters, clamped to the 16-bit range.
pub fn write_depth(path: &Path, depth: &Plane<f64>) -> Result<(), IoError> {
    let data: Vec<u16> = depth
        .data()
        .iter()
        .map(|&d| {
            if d.is_finite() {
                d.round().clamp(0.0, u16::MAX as f64) as u16
            } else {
                0
            }
        })
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(depth.width() as u32, depth.height() as u32, data)
            .expect("buffer matches dimensions");
    img.save(path).map_err(image_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let f = File::open(path).map_err(file_err(path))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })
}

/// Pretty-printed, newline-terminated.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(file_err(path))
}

pub fn create_file(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(file_err(path))
}

pub fn create_dir(path: &Path) -> Result<(), IoError> {
    std::fs::create_dir_all(path).map_err(file_err(path))
}
