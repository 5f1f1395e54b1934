//! Linear RGB float images and 8-bit PNG conversion.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image data has {got} values, expected {expected} for {width}×{height}×3")]
    DataLength {
        width: usize,
        height: usize,
        expected: usize,
        got: usize,
    },
    #[error("image sizes differ: {a:?} vs {b:?}")]
    SizeMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("png i/o for {path}: {source}")]
    Png {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

/// `height × width × 3` floats, row-major, nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        let expected = width * height * 3;
        if data.len() != expected {
            return Err(ImageError::DataLength {
                width,
                height,
                expected,
                got: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Pixel by row-major index.
    pub fn at(&self, index: usize) -> [f64; 3] {
        self.pixel(index % self.width, index / self.width)
    }

    pub fn clamped(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn same_size(&self, other: &Image) -> Result<(), ImageError> {
        if self.width != other.width || self.height != other.height {
            return Err(ImageError::SizeMismatch {
                a: (self.width, self.height),
                b: (other.width, other.height),
            });
        }
        Ok(())
    }

    /// Quantises to 8 bits with rounding after clamping.
    pub fn to_rgb8(&self) -> image::RgbImage {
        let bytes = self.data.iter().map(|v| quantize(*v)).collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length matches dimensions")
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&b| b as f64 / 255.0).collect(),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImageError> {
        self.to_rgb8().save_with_format(path, image::ImageFormat::Png).map_err(|source| ImageError::Png {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load_png(path: &Path) -> Result<Self, ImageError> {
        let img = image::open(path).map_err(|source| ImageError::Png {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    /// Places `tiles` (all the same size) on a grid with `cols` columns,
    /// filling gaps with `fill`.
    pub fn grid(tiles: &[Image], cols: usize, fill: [f64; 3]) -> Image {
        let (tw, th) = tiles.first().map_or((0, 0), |t| (t.width, t.height));
        let rows = tiles.len().div_ceil(cols.max(1));
        let mut out = Image::filled(tw * cols, th * rows, fill);
        for (i, tile) in tiles.iter().enumerate() {
            let (ox, oy) = ((i % cols) * tw, (i / cols) * th);
            for y in 0..th {
                for x in 0..tw {
                    out.set_pixel(ox + x, oy + y, tile.pixel(x, y));
                }
            }
        }
        out
    }
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
