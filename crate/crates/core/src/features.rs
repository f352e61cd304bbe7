//! Patch descriptors, greedy coreset sampling and the training memory bank.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{read_feature_file, rgb_to_lab, FeatureMap, Sample};
use crate::error::{Error, Result};

/// Source of dense feature maps for an image.
pub trait FeatureExtractor: Send + Sync {
    fn name(&self) -> &str;

    /// Pixel stride between neighbouring patches.
    fn patch_stride(&self) -> usize;

    fn extract(&self, sample: &Sample) -> Result<FeatureMap>;
}

/// Deterministic handcrafted backbone: per-patch Lab statistics plus mean
/// gradient magnitude. No positional features, so patches group by
/// appearance only.
#[derive(Debug, Clone)]
pub struct MockExtractor {
    stride: usize,
}

pub const MOCK_DIM: usize = 7;

impl MockExtractor {
    pub fn new(stride: usize) -> Self {
        assert!(stride > 0, "stride must be positive");
        Self { stride }
    }
}

impl Default for MockExtractor {
    fn default() -> Self {
        Self::new(8)
    }
}

impl FeatureExtractor for MockExtractor {
    fn name(&self) -> &str {
        "mock"
    }

    fn patch_stride(&self) -> usize {
        self.stride
    }

    fn extract(&self, sample: &Sample) -> Result<FeatureMap> {
        let img = &sample.image;
        let (h, w, s) = (img.height(), img.width(), self.stride);
        if h < s || w < s {
            return Err(Error::param(format!("image {h}x{w} smaller than patch stride {s}")));
        }
        let lab = rgb_to_lab(img);
        let lum = |y: usize, x: usize| lab.pixel(y, x)[0];

        let mut grad = vec![0.0f64; h * w];
        for y in 0..h {
            for x in 0..w {
                let gx = (lum(y, (x + 1).min(w - 1)) - lum(y, x.saturating_sub(1))) / 2.0;
                let gy = (lum((y + 1).min(h - 1), x) - lum(y.saturating_sub(1), x)) / 2.0;
                grad[y * w + x] = gx.hypot(gy);
            }
        }

        let (rows, cols) = (h / s, w / s);
        let n = (s * s) as f64;
        let mut data = Vec::with_capacity(rows * cols * MOCK_DIM);
        for i in 0..rows {
            for j in 0..cols {
                // Shifted sums: exact zeros on constant patches.
                let origin = lab.pixel(i * s, j * s);
                let mut sum = [0.0f64; 3];
                let mut sum_sq = [0.0f64; 3];
                let mut g = 0.0;
                for y in i * s..(i + 1) * s {
                    for x in j * s..(j + 1) * s {
                        let p = lab.pixel(y, x);
                        for c in 0..3 {
                            let d = p[c] - origin[c];
                            sum[c] += d;
                            sum_sq[c] += d * d;
                        }
                        g += grad[y * w + x];
                    }
                }
                let mean: [f64; 3] = std::array::from_fn(|c| origin[c] + sum[c] / n);
                let std: [f64; 3] =
                    std::array::from_fn(|c| (sum_sq[c] / n - (sum[c] / n).powi(2)).max(0.0).sqrt());
                data.extend(mean.iter().chain(&std).map(|&v| v as f32));
                data.push((g / n) as f32);
            }
        }
        FeatureMap::new(rows, cols, MOCK_DIM, data)
    }
}

/// Reads precomputed `CFM1` files. A sample with id `train/good/000.png`
/// maps to `<dir>/train/good/000.cfm`.
#[derive(Debug, Clone)]
pub struct FileExtractor {
    dir: PathBuf,
    stride: usize,
}

impl FileExtractor {
    pub fn new(dir: impl Into<PathBuf>, stride: usize) -> Self {
        Self { dir: dir.into(), stride }
    }

    pub fn path_for(&self, id: &str) -> PathBuf {
        self.dir.join(Path::new(id).with_extension("cfm"))
    }
}

impl FeatureExtractor for FileExtractor {
    fn name(&self) -> &str {
        "file"
    }

    fn patch_stride(&self) -> usize {
        self.stride
    }

    fn extract(&self, sample: &Sample) -> Result<FeatureMap> {
        let path = self.path_for(&sample.id);
        if !path.exists() {
            return Err(Error::MissingFeatures(path.display().to_string()));
        }
        read_feature_file(path)
    }
}

/// Coreset-sampled descriptors of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFeatures {
    pub dim: usize,
    pub vectors: Vec<f32>,
    /// Flattened patch index of every selected vector, in selection order.
    pub source_indices: Vec<usize>,
}

impl SampledFeatures {
    pub fn len(&self) -> usize {
        self.source_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_indices.is_empty()
    }
}

fn sq_dist(a: &[f32], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y).powi(2)).sum()
}

fn sq_dist32(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum()
}

/// Greedy farthest-point coreset of `floor(ratio * I * J)` patches.
///
/// Selection starts at the vector nearest the feature mean and then always
/// takes the vector farthest (Euclidean) from everything selected so far.
/// The seed only decides between exactly tied candidates.
pub fn coreset_sample(fmap: &FeatureMap, ratio: f64, seed: u64) -> Result<SampledFeatures> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::param(format!("coreset ratio must be in (0, 1], got {ratio}")));
    }
    let total = fmap.len();
    let n = (ratio * total as f64).floor() as usize;
    if n == 0 {
        return Err(Error::param(format!(
            "coreset ratio {ratio} keeps no vectors out of {total}"
        )));
    }
    let dim = fmap.dim();

    let mut rank: Vec<usize> = (0..total).collect();
    rank.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut tie_rank = vec![0usize; total];
    for (r, &i) in rank.iter().enumerate() {
        tie_rank[i] = r;
    }
    // argmax/argmin with ties resolved by the seeded rank.
    let better = |cand: (f64, usize), best: Option<(f64, usize)>, larger: bool| match best {
        None => true,
        Some((bv, bi)) => {
            if cand.0 == bv {
                tie_rank[cand.1] < tie_rank[bi]
            } else {
                (cand.0 > bv) == larger
            }
        }
    };

    let mut mean = vec![0.0f64; dim];
    for v in fmap.vectors() {
        for (m, &x) in mean.iter_mut().zip(v) {
            *m += x as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= total as f64);

    let mut start: Option<(f64, usize)> = None;
    for (i, v) in fmap.vectors().enumerate() {
        let cand = (sq_dist(v, &mean), i);
        if better(cand, start, false) {
            start = Some(cand);
        }
    }
    let first = start.expect("feature map is non-empty").1;

    let mut selected = vec![false; total];
    let mut min_dist = vec![f64::INFINITY; total];
    let mut order = Vec::with_capacity(n);
    let mut pick = first;
    loop {
        selected[pick] = true;
        order.push(pick);
        if order.len() == n {
            break;
        }
        let anchor = fmap.vector(pick);
        let mut best: Option<(f64, usize)> = None;
        for i in 0..total {
            if selected[i] {
                continue;
            }
            let d = sq_dist32(fmap.vector(i), anchor);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
            let cand = (min_dist[i], i);
            if better(cand, best, true) {
                best = Some(cand);
            }
        }
        pick = best.expect("n <= total leaves a candidate").1;
    }

    let mut vectors = Vec::with_capacity(n * dim);
    for &i in &order {
        vectors.extend_from_slice(fmap.vector(i));
    }
    Ok(SampledFeatures { dim, vectors, source_indices: order })
}

/// Concatenated coreset vectors of all training images.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    pub dim: usize,
    pub vectors: Vec<f32>,
    /// Row offset of each image's block.
    pub offsets: Vec<usize>,
}

impl MemoryBank {
    pub fn rows(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }
}

pub fn build_memory_bank(samples: &[SampledFeatures]) -> Result<MemoryBank> {
    let first = samples
        .first()
        .ok_or_else(|| Error::param("memory bank needs at least one sampled image"))?;
    let dim = first.dim;
    let mut vectors = Vec::new();
    let mut offsets = Vec::with_capacity(samples.len());
    let mut rows = 0;
    for (i, s) in samples.iter().enumerate() {
        if s.dim != dim {
            return Err(Error::dims(format!("sample {i} has dim {} but bank dim is {dim}", s.dim)));
        }
        offsets.push(rows);
        rows += s.len();
        vectors.extend_from_slice(&s.vectors);
    }
    Ok(MemoryBank { dim, vectors, offsets })
}
