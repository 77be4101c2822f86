//! Image loading and saving, synthetic scenes, and zero-level contours.
//!
//! Pixel `(x, y)` (column, row) of an image maps to cell `(i, j) = (x, y)`,
//! so the second domain coordinate grows downward in saved images.

mod contour;
mod synthetic;

pub use contour::{extract_contours, Contour, ContourSet};
pub use synthetic::{make_synthetic, Shape, Synthetic};

use std::io::{Cursor, Write};
use std::path::Path;

use image::{GrayImage, ImageFormat, Luma, Rgb, RgbImage};

use crate::error::{check_len, Error, Result};
use crate::grid::ImageGrid;

/// Decoded 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Decodes PGM (P5) or PNG bytes; color PNGs are converted by luminance.
pub fn decode_raster(bytes: &[u8]) -> Result<Raster> {
    let format = image::guess_format(bytes)
        .map_err(|_| Error::UnsupportedFormat("unrecognized image data".into()))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Pnm) {
        return Err(Error::UnsupportedFormat(format!("{format:?}")));
    }
    let img = image::load_from_memory_with_format(bytes, format)?;
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::validation("image", "zero-size image"));
    }
    Ok(Raster {
        width: w as usize,
        height: h as usize,
        pixels: gray.into_raw(),
    })
}

/// Bilinear sampling of a raster at the cell centers of an `n x n` grid.
/// Intensities are scaled to `[0, 1]`.
pub fn resample(r: &Raster, n: usize) -> Vec<f64> {
    let axis = |u: f64, size: usize| {
        let s = (u * size as f64 - 0.5).clamp(0.0, (size - 1) as f64);
        let i0 = (s.floor() as usize).min(size.saturating_sub(2));
        let t = if size == 1 { 0.0 } else { s - i0 as f64 };
        (i0, (i0 + 1).min(size - 1), t)
    };
    let px = |x: usize, y: usize| r.pixels[y * r.width + x] as f64 / 255.0;
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        let (y0, y1, ty) = axis((j as f64 + 0.5) / n as f64, r.height);
        for i in 0..n {
            let (x0, x1, tx) = axis((i as f64 + 0.5) / n as f64, r.width);
            let top = (1.0 - tx) * px(x0, y0) + tx * px(x1, y0);
            let bottom = (1.0 - tx) * px(x0, y1) + tx * px(x1, y1);
            out.push(((1.0 - ty) * top + ty * bottom).clamp(0.0, 1.0));
        }
    }
    out
}

pub fn load_image_bytes(bytes: &[u8], n: usize) -> Result<ImageGrid> {
    let raster = decode_raster(bytes)?;
    let intensity = if raster.width == n && raster.height == n {
        raster.pixels.iter().map(|p| *p as f64 / 255.0).collect()
    } else {
        resample(&raster, n)
    };
    ImageGrid::new(n, intensity)
}

pub fn load_image(path: &Path, n: usize) -> Result<ImageGrid> {
    load_image_bytes(&std::fs::read(path)?, n)
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn grid_png_bytes(grid: &ImageGrid) -> Vec<u8> {
    let n = grid.n() as u32;
    let img = GrayImage::from_fn(n, n, |x, y| Luma([to_u8(grid.intensity()[(x + y * n) as usize])]));
    encode_png(image::DynamicImage::ImageLuma8(img))
}

pub fn save_grid_png(grid: &ImageGrid, path: &Path) -> Result<()> {
    write_file(path, &grid_png_bytes(grid))
}

pub fn mask_png_bytes(mask: &[bool], n: usize) -> Result<Vec<u8>> {
    check_len("mask", n * n, mask.len())?;
    let n32 = n as u32;
    let img = GrayImage::from_fn(n32, n32, |x, y| Luma([if mask[(x + y * n32) as usize] { 255 } else { 0 }]));
    Ok(encode_png(image::DynamicImage::ImageLuma8(img)))
}

pub fn save_mask(mask: &[bool], n: usize, path: &Path) -> Result<()> {
    write_file(path, &mask_png_bytes(mask, n)?)
}

/// Reads a binary mask (pixels >= 128 are inside). Returns the mask and side.
pub fn load_mask_bytes(bytes: &[u8]) -> Result<(Vec<bool>, usize)> {
    let r = decode_raster(bytes)?;
    if r.width != r.height {
        return Err(Error::validation("mask", format!("must be square, got {}x{}", r.width, r.height)));
    }
    Ok((r.pixels.iter().map(|p| *p >= 128).collect(), r.width))
}

pub fn load_mask(path: &Path) -> Result<(Vec<bool>, usize)> {
    load_mask_bytes(&std::fs::read(path)?)
}

const CONTOUR_COLORS: [[u8; 3]; 2] = [[255, 0, 0], [0, 200, 0]];

/// Grayscale image with each phase's contours drawn on top.
pub fn overlay_png_bytes(grid: &ImageGrid, contours: &[ContourSet]) -> Vec<u8> {
    let n = grid.n();
    let mut img = RgbImage::from_fn(n as u32, n as u32, |x, y| {
        let v = to_u8(grid.intensity()[x as usize + y as usize * n]);
        Rgb([v, v, v])
    });
    for (phase, set) in contours.iter().enumerate() {
        let color = Rgb(CONTOUR_COLORS[phase % CONTOUR_COLORS.len()]);
        for c in &set.contours {
            for w in c.points.windows(2) {
                let len = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]) * n as f64;
                let steps = (2.0 * len).ceil().max(1.0) as usize;
                for s in 0..=steps {
                    let t = s as f64 / steps as f64;
                    let x = ((w[0][0] + t * (w[1][0] - w[0][0])) * n as f64).floor();
                    let y = ((w[0][1] + t * (w[1][1] - w[0][1])) * n as f64).floor();
                    if x >= 0.0 && y >= 0.0 && (x as usize) < n && (y as usize) < n {
                        img.put_pixel(x as u32, y as u32, color);
                    }
                }
            }
        }
    }
    encode_png(image::DynamicImage::ImageRgb8(img))
}

pub fn save_overlay(grid: &ImageGrid, contours: &[ContourSet], path: &Path) -> Result<()> {
    write_file(path, &overlay_png_bytes(grid, contours))
}

/// Contours as CSV `phase,vertex_index,x,y`. Each closed polyline restarts
/// its vertex index at zero.
pub fn contours_csv(contours: &[ContourSet]) -> String {
    let mut s = String::from("phase,vertex_index,x,y\n");
    for (phase, set) in contours.iter().enumerate() {
        for c in &set.contours {
            for (i, p) in c.points.iter().enumerate() {
                s.push_str(&format!("{phase},{i},{},{}\n", p[0], p[1]));
            }
        }
    }
    s
}

fn encode_png(img: image::DynamicImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).expect("in-memory png encoding");
    buf.into_inner()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}
