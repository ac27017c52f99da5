//! Pixel access for color extraction: an in-memory RGB raster plus sources
//! that resolve [`ImageMeta`] paths to decoded images.

use std::path::{Path, PathBuf};

use crate::annotation::ImageMeta;
use crate::error::{ForgeError, Result};
use crate::geometry::{point_in_convex, OrientedBox};

/// A decoded RGB image.
#[derive(Debug, Clone)]
pub struct RgbRaster {
    pub width: u32,
    pub height: u32,
    /// Row-major, one `[r, g, b]` triple per pixel.
    pub pixels: Vec<[u8; 3]>,
}

impl RgbRaster {
    pub fn new(width: u32, height: u32, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if pixels.len() != (width as usize) * (height as usize) {
            return Err(ForgeError::invalid(
                "raster",
                format!("{}x{} image with {} pixels", width, height, pixels.len()),
            ));
        }
        Ok(RgbRaster { width, height, pixels })
    }

    /// A uniformly colored raster (test fixtures, backgrounds).
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        RgbRaster {
            width,
            height,
            pixels: vec![rgb; (width as usize) * (height as usize)],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        self.pixels[(y as usize) * (self.width as usize) + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        self.pixels[(y as usize) * (self.width as usize) + x as usize] = rgb;
    }

    /// Paints every pixel whose center falls inside the box. Fixture helper.
    pub fn paint_box(&mut self, bbox: &OrientedBox, rgb: [u8; 3]) {
        let corners = bbox.corners();
        for y in 0..self.height {
            for x in 0..self.width {
                if point_in_convex(&corners, [x as f64 + 0.5, y as f64 + 0.5], 1e-12) {
                    self.set(x, y, rgb);
                }
            }
        }
    }

    /// RGB triples of all pixels whose centers fall inside the box polygon,
    /// in row-major order.
    pub fn pixels_in_box(&self, bbox: &OrientedBox) -> Vec<[u8; 3]> {
        let corners = bbox.corners();
        let xs = corners.iter().map(|p| p[0]);
        let ys = corners.iter().map(|p| p[1]);
        let x0 = xs.clone().fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
        let x1 = (xs.fold(f64::NEG_INFINITY, f64::max).ceil() as i64)
            .clamp(0, self.width as i64) as u32;
        let y0 = ys.clone().fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
        let y1 = (ys.fold(f64::NEG_INFINITY, f64::max).ceil() as i64)
            .clamp(0, self.height as i64) as u32;

        let mut out = Vec::new();
        for y in y0..y1 {
            for x in x0..x1 {
                if point_in_convex(&corners, [x as f64 + 0.5, y as f64 + 0.5], 1e-12) {
                    out.push(self.get(x, y));
                }
            }
        }
        out
    }

    /// Encodes the raster as a PNG file. Fixture helper.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut img = image::RgbImage::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                img.put_pixel(x, y, image::Rgb(self.get(x, y)));
            }
        }
        img.save(path)
            .map_err(|e| ForgeError::invalid("raster", format!("writing {}: {e}", path.display())))
    }
}

/// Resolves image metadata to pixels.
pub trait RasterSource: Sync {
    fn load(&self, meta: &ImageMeta) -> Result<RgbRaster>;
}

/// Reads PNG/JPEG files from disk, resolving relative manifest paths
/// against a root directory.
pub struct FileRasterSource {
    root: PathBuf,
}

impl FileRasterSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FileRasterSource { root: root.into() }
    }
}

impl RasterSource for FileRasterSource {
    fn load(&self, meta: &ImageMeta) -> Result<RgbRaster> {
        let path = if meta.path.is_absolute() {
            meta.path.clone()
        } else {
            self.root.join(&meta.path)
        };
        let img = image::open(&path)
            .map_err(|e| ForgeError::ImageDecode { path: path.clone(), source: e })?
            .into_rgb8();
        let (width, height) = img.dimensions();
        let pixels = img.pixels().map(|p| p.0).collect();
        RgbRaster::new(width, height, pixels)
    }
}
