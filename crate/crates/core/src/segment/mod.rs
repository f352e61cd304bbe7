//! Component discovery and per-pixel soft segmentation.

mod assign;
mod crf;
mod kmeans;

pub use self::assign::assign_soft;
pub use self::crf::{crf_refine, CrfMode, CrfParams};
pub use self::kmeans::{kmeans, kmeans_points, ComponentPrototypes, KMeansFit};

use crate::config::{CrfModeKind, SegmentationConfig};
use crate::data::{bilinear_coords, Sample, ScalarField};
use crate::error::{Error, Result};
use crate::features::FeatureExtractor;

/// Per-pixel membership over K components, pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationField {
    height: usize,
    width: usize,
    k: usize,
    data: Vec<f64>,
}

impl SegmentationField {
    pub fn new(height: usize, width: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || k == 0 {
            return Err(Error::dims("segmentation field dims must be >= 1"));
        }
        if data.len() != height * width * k {
            return Err(Error::dims(format!(
                "expected {} values for {height}x{width}x{k}, got {}",
                height * width * k,
                data.len()
            )));
        }
        Ok(Self { height, width, k, data })
    }

    /// Builds a field from per-component channels.
    pub fn from_channels(channels: &[ScalarField]) -> Result<Self> {
        let first = channels.first().ok_or_else(|| Error::dims("no channels"))?;
        let (h, w, k) = (first.height(), first.width(), channels.len());
        if channels.iter().any(|c| c.height() != h || c.width() != w) {
            return Err(Error::dims("channels differ in size"));
        }
        let mut data = vec![0.0; h * w * k];
        for (l, ch) in channels.iter().enumerate() {
            for (i, &v) in ch.values().iter().enumerate() {
                data[i * k + l] = v;
            }
        }
        Ok(Self { height: h, width: w, k, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn membership(&self, pixel: usize) -> &[f64] {
        &self.data[pixel * self.k..(pixel + 1) * self.k]
    }

    pub fn channel(&self, l: usize) -> ScalarField {
        assert!(l < self.k, "component {l} out of range");
        let data = self.data.iter().skip(l).step_by(self.k).copied().collect();
        ScalarField::new(self.height, self.width, data).expect("dims already validated")
    }

    /// Component with the largest membership at `pixel` (first on ties).
    pub fn argmax(&self, pixel: usize) -> usize {
        argmax(self.membership(pixel))
    }

    pub fn argmax_map(&self) -> Vec<usize> {
        (0..self.pixels()).map(|p| self.argmax(p)).collect()
    }

    /// Largest deviation of a pixel's memberships from summing to one.
    pub fn max_normalization_error(&self) -> f64 {
        self.data
            .chunks_exact(self.k)
            .map(|m| (m.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Output channel `l` is input channel `perm[l]`.
    pub fn permute(&self, perm: &[usize]) -> SegmentationField {
        assert_eq!(perm.len(), self.k);
        let mut data = vec![0.0; self.data.len()];
        for (src, dst) in self.data.chunks_exact(self.k).zip(data.chunks_exact_mut(self.k)) {
            for (l, &p) in perm.iter().enumerate() {
                dst[l] = src[p];
            }
        }
        SegmentationField { data, ..*self }
    }

    /// Corner-aligned bilinear resize of every channel. Convex weights keep
    /// memberships normalized.
    pub fn resize(&self, out_h: usize, out_w: usize) -> SegmentationField {
        if out_h == self.height && out_w == self.width {
            return self.clone();
        }
        let ys = bilinear_coords(self.height, out_h);
        let xs = bilinear_coords(self.width, out_w);
        let k = self.k;
        let mut data = Vec::with_capacity(out_h * out_w * k);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let a = self.membership(y0 * self.width + x0);
                let b = self.membership(y0 * self.width + x1);
                let c = self.membership(y1 * self.width + x0);
                let d = self.membership(y1 * self.width + x1);
                for l in 0..k {
                    let top = a[l] * (1.0 - fx) + b[l] * fx;
                    let bot = c[l] * (1.0 - fx) + d[l] * fx;
                    data.push(top * (1.0 - fy) + bot * fy);
                }
            }
        }
        SegmentationField { height: out_h, width: out_w, k, data }
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Extract features, assign soft memberships, upsample to image size and
/// optionally refine with the dense CRF.
pub fn segment_image(
    sample: &Sample,
    extractor: &dyn FeatureExtractor,
    protos: &ComponentPrototypes,
    cfg: &SegmentationConfig,
    seed: u64,
) -> Result<SegmentationField> {
    let fmap = extractor.extract(sample)?;
    let coarse = assign_soft(&fmap, protos, cfg.temperature)?;
    let field = coarse.resize(sample.image.height(), sample.image.width());
    if !cfg.crf.enabled {
        return Ok(field);
    }
    let params = CrfParams::from(&cfg.crf);
    let mode = match cfg.crf.mode {
        CrfModeKind::Exact => CrfMode::Exact,
        CrfModeKind::Subsampled => CrfMode::Subsampled { samples: cfg.crf.far_samples, seed },
    };
    crf_refine(&field, &sample.image, &params, mode)
}
