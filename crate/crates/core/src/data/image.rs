use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit RGB raster, row-major, three interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::dims("image must be at least 1x1"));
        }
        if data.len() != height * width * 3 {
            return Err(Error::dims(format!(
                "expected {} bytes for {height}x{width} RGB, got {}",
                height * width * 3,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Self {
        assert!(height > 0 && width > 0, "image must be at least 1x1");
        let data = rgb.iter().copied().cycle().take(height * width * 3).collect();
        Self { height, width, data }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        assert!(height > 0 && width > 0, "image must be at least 1x1");
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x));
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let o = (y * self.width + x) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    #[inline]
    pub fn put_pixel(&mut self, y: usize, x: usize, rgb: [u8; 3]) {
        let o = (y * self.width + x) * 3;
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path.as_ref())?.to_rgb8();
        let (w, h) = img.dimensions();
        Self::new(h as usize, w as usize, img.into_raw())
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes)?.to_rgb8();
        let (w, h) = img.dimensions();
        Self::new(h as usize, w as usize, img.into_raw())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        image::save_buffer_with_format(
            path.as_ref(),
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )?;
        Ok(())
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = std::io::Cursor::new(Vec::new());
        image::write_buffer_with_format(
            &mut out,
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )?;
        Ok(out.into_inner())
    }

    /// Corner-aligned bilinear resize, rounding to the nearest 8-bit value.
    pub fn resize(&self, out_h: usize, out_w: usize) -> Image {
        assert!(out_h > 0 && out_w > 0, "output must be at least 1x1");
        if out_h == self.height && out_w == self.width {
            return self.clone();
        }
        let ys = super::bilinear_coords(self.height, out_h);
        let xs = super::bilinear_coords(self.width, out_w);
        let mut data = Vec::with_capacity(out_h * out_w * 3);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                for c in 0..3 {
                    let at = |y: usize, x: usize| self.data[(y * self.width + x) * 3 + c] as f64;
                    let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                    let bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                    let v = top * (1.0 - fy) + bot * fy;
                    data.push(v.round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        Image { height: out_h, width: out_w, data }
    }
}

/// An image together with the identifier used to locate side-car data
/// (feature files, ground truth). Ids are dataset-relative paths.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub image: Image,
}

impl Sample {
    pub fn new(id: impl Into<String>, image: Image) -> Self {
        Self { id: id.into(), image }
    }
}
