use crate::error::{Error, Result};

/// Real-valued H×W grid (soft membership, anomaly map, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::dims("field must be at least 1x1"));
        }
        if data.len() != height * width {
            return Err(Error::dims(format!(
                "expected {} values for {height}x{width}, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "field must be at least 1x1");
        Self { height, width, data: vec![value; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "field must be at least 1x1");
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
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

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Corner-aligned bilinear resize.
    pub fn resize(&self, out_h: usize, out_w: usize) -> ScalarField {
        assert!(out_h > 0 && out_w > 0, "output must be at least 1x1");
        let ys = bilinear_coords(self.height, out_h);
        let xs = bilinear_coords(self.width, out_w);
        let mut data = Vec::with_capacity(out_h * out_w);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = self.get(y0, x0) * (1.0 - fx) + self.get(y0, x1) * fx;
                let bot = self.get(y1, x0) * (1.0 - fx) + self.get(y1, x1) * fx;
                data.push(top * (1.0 - fy) + bot * fy);
            }
        }
        ScalarField { height: out_h, width: out_w, data }
    }
}

/// Source sample positions for a corner-aligned bilinear resize along one
/// axis: `(lower index, upper index, upper weight)` per output position.
pub fn bilinear_coords(in_len: usize, out_len: usize) -> Vec<(usize, usize, f64)> {
    (0..out_len)
        .map(|i| {
            let src = if out_len == 1 || in_len == 1 {
                0.0
            } else {
                i as f64 * (in_len - 1) as f64 / (out_len - 1) as f64
            };
            let lo = (src.floor() as usize).min(in_len - 1);
            let hi = (lo + 1).min(in_len - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

/// Box mean over a `size`×`size` window with edge replication at borders.
pub fn mean_filter(field: &ScalarField, size: usize) -> Result<ScalarField> {
    if size == 0 || size % 2 == 0 {
        return Err(Error::param(format!("mean filter size must be odd and >= 1, got {size}")));
    }
    if size == 1 {
        return Ok(field.clone());
    }
    let (h, w) = (field.height, field.width);
    let r = (size / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut rows = vec![0.0; h * w];
    for y in 0..h {
        let line = &field.data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for dx in -r..=r {
                acc += line[clamp(x as isize + dx, w)];
            }
            rows[y * w + x] = acc;
        }
    }
    let norm = (size * size) as f64;
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -r..=r {
                acc += rows[clamp(y as isize + dy, h) * w + x];
            }
            out[y * w + x] = acc / norm;
        }
    }
    Ok(ScalarField { height: h, width: w, data: out })
}
