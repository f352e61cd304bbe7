//! Binary component regions: OTSU thresholds, per-component scale
//! calibration over the training set, and the three extraction methods.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::config::{RegionMethod, VarianceKind};
use crate::data::ScalarField;
use crate::error::{Error, Result};
use crate::segment::SegmentationField;

pub const OTSU_BINS: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl RegionMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::dims(format!("mask {height}x{width} with {} values", bits.len())));
        }
        Ok(Self { height, width, bits })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self { height, width, bits: vec![false; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(y, x));
            }
        }
        Self { height, width, bits }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn into_bits(self) -> Vec<bool> {
        self.bits
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Run-length encoding in row-major order: alternating run lengths,
    /// starting with a (possibly empty) run of `false`.
    pub fn rle(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0;
        for &b in &self.bits {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        runs.push(len);
        runs
    }
}

/// Histogram bin of a value in [0,1]; out-of-range values are clamped.
pub fn quantize(v: f64) -> usize {
    ((v.clamp(0.0, 1.0) * OTSU_BINS as f64) as usize).min(OTSU_BINS - 1)
}

fn histogram(field: &ScalarField) -> [u64; OTSU_BINS] {
    let mut h = [0u64; OTSU_BINS];
    for &v in field.values() {
        h[quantize(v)] += 1;
    }
    h
}

/// Between-class variance (times N²) for the split "bin < t | bin ≥ t".
fn between_class(n0: u64, s0: u64, n1: u64, s1: u64) -> f64 {
    let diff = n0 as i128 * s1 as i128 - n1 as i128 * s0 as i128;
    (diff as f64) * (diff as f64) / (n0 as f64 * n1 as f64)
}

/// Threshold bin `t` in 1..=255 maximizing the inter-class variance. The
/// foreground is `bin >= t`. Ties (relative 1e-12) resolve to the lowest t.
pub fn otsu_bin(field: &ScalarField) -> Result<usize> {
    let h = histogram(field);
    if h.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::Degenerate("OTSU on a field with a single quantized value".into()));
    }
    let total_n: u64 = h.iter().sum();
    let total_s: u64 = h.iter().enumerate().map(|(b, &c)| b as u64 * c).sum();
    let (mut n0, mut s0) = (0u64, 0u64);
    let mut best: Option<(usize, f64)> = None;
    for t in 1..OTSU_BINS {
        n0 += h[t - 1];
        s0 += (t as u64 - 1) * h[t - 1];
        let n1 = total_n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let v = between_class(n0, s0, n1, total_s - s0);
        match best {
            Some((_, b)) if v <= b + 1e-12 * b => {}
            _ => best = Some((t, v)),
        }
    }
    Ok(best.map_or(1, |b| b.0))
}

/// OTSU threshold as a value in [0,1].
pub fn otsu(field: &ScalarField) -> Result<f64> {
    Ok(otsu_bin(field)? as f64 / OTSU_BINS as f64)
}

pub fn binarize(field: &ScalarField, threshold: f64) -> RegionMask {
    RegionMask {
        height: field.height(),
        width: field.width(),
        bits: field.values().iter().map(|&v| v >= threshold).collect(),
    }
}

/// Mask at `min(c·τ, 1)`. Degenerate fields give an empty mask.
pub fn scaled_otsu_mask(field: &ScalarField, c: f64) -> RegionMask {
    match otsu(field) {
        Ok(tau) => binarize(field, (c * tau).min(1.0)),
        Err(_) => {
            warn!("degenerate component map; using an empty region");
            RegionMask::empty(field.height(), field.width())
        }
    }
}

/// Dispersion of a set of areas under the chosen variance kind. Relative
/// variance of an all-zero set is infinite so it never wins calibration.
pub fn area_dispersion(areas: &[f64], kind: VarianceKind) -> f64 {
    if areas.is_empty() {
        return f64::INFINITY;
    }
    let n = areas.len() as f64;
    let mean = areas.iter().sum::<f64>() / n;
    let var = areas.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    match kind {
        VarianceKind::Raw => var,
        VarianceKind::Relative if mean > 0.0 => var / (mean * mean),
        VarianceKind::Relative => f64::INFINITY,
    }
}

/// Outcome of the scale search for one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleChoice {
    pub c_star: f64,
    pub candidates: Vec<f64>,
    pub scores: Vec<f64>,
}

/// Picks the candidate scale minimizing area dispersion over the training
/// maps of one component. Ties go to the earliest candidate.
pub fn calibrate_scale(fields: &[ScalarField], candidates: &[f64], kind: VarianceKind) -> Result<ScaleChoice> {
    if candidates.is_empty() {
        return Err(Error::param("no scale candidates"));
    }
    let mut taus = Vec::with_capacity(fields.len());
    for (i, f) in fields.iter().enumerate() {
        match otsu(f) {
            Ok(t) => taus.push((f, t)),
            Err(_) => warn!("training map {i} is degenerate; skipped in calibration"),
        }
    }
    if taus.is_empty() {
        return Err(Error::Degenerate("every training map is degenerate".into()));
    }
    let scores: Vec<f64> = candidates
        .iter()
        .map(|&c| {
            let areas: Vec<f64> = taus.iter().map(|(f, t)| binarize(f, (c * t).min(1.0)).area() as f64).collect();
            area_dispersion(&areas, kind)
        })
        .collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = i;
        }
    }
    Ok(ScaleChoice { c_star: candidates[best], candidates: candidates.to_vec(), scores })
}

/// One mask per kept component covering the pixels where it holds the
/// largest membership overall (first id wins ties). Pixels won by a
/// dropped component belong to no mask.
pub fn argmax_masks(seg: &SegmentationField, kept: &[usize]) -> Vec<RegionMask> {
    let (h, w) = (seg.height(), seg.width());
    let mut bits = vec![vec![false; h * w]; kept.len()];
    for p in 0..h * w {
        let overall = seg.argmax(p);
        if let Some(slot) = kept.iter().position(|&k| k == overall) {
            bits[slot][p] = true;
        }
    }
    bits.into_iter().map(|b| RegionMask { height: h, width: w, bits: b }).collect()
}

/// Regions for every kept component, in kept order. `scales` holds c* per
/// kept component and is only read by the adaptive method.
pub fn extract_regions(
    seg: &SegmentationField,
    kept: &[usize],
    scales: &[f64],
    method: RegionMethod,
) -> Result<Vec<RegionMask>> {
    if scales.len() != kept.len() {
        return Err(Error::dims(format!("{} scales for {} kept components", scales.len(), kept.len())));
    }
    Ok(match method {
        RegionMethod::Argmax => argmax_masks(seg, kept),
        RegionMethod::Otsu => kept.iter().map(|&k| scaled_otsu_mask(&seg.channel(k), 1.0)).collect(),
        RegionMethod::AdaptiveOtsu => {
            kept.iter().zip(scales).map(|(&k, &c)| scaled_otsu_mask(&seg.channel(k), c)).collect()
        }
    })
}
