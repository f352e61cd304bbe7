//! Per-component measurements (area and colour ratio), training-mean
//! normalization, global vectors and the kNN score with attributions.

use serde::{Deserialize, Serialize};

use crate::config::FeatureSet;
use crate::data::LabImage;
use crate::error::{Error, Result};
use crate::knn::{self, Neighbor};
use crate::region::RegionMask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentFeatures {
    pub area: f64,
    pub color: f64,
    /// Set when the region had no pixels.
    pub empty: bool,
}

/// b/a with the denominator clamped away from zero, keeping the sign of a
/// (zero counts as positive).
pub fn color_ratio(a: f64, b: f64, eps: f64) -> f64 {
    let sign = if a < 0.0 { -1.0 } else { 1.0 };
    b / (sign * a.abs().max(eps))
}

pub fn component_features(mask: &RegionMask, lab: &LabImage, eps: f64) -> Result<ComponentFeatures> {
    if mask.height() != lab.height() || mask.width() != lab.width() {
        return Err(Error::dims(format!(
            "mask {}x{} vs image {}x{}",
            mask.height(),
            mask.width(),
            lab.height(),
            lab.width()
        )));
    }
    let (mut n, mut sum) = (0usize, 0.0);
    for (&on, px) in mask.bits().iter().zip(lab.pixels()) {
        if on {
            n += 1;
            sum += color_ratio(px[1], px[2], eps);
        }
    }
    if n == 0 {
        return Ok(ComponentFeatures { area: 0.0, color: 0.0, empty: true });
    }
    Ok(ComponentFeatures { area: n as f64, color: sum / n as f64, empty: false })
}

/// Training means per kept component, in kept order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizers {
    pub area_means: Vec<f64>,
    pub color_means: Vec<f64>,
    pub n_train: usize,
}

/// `train[i][j]` is image i, kept component j. The colour mean is only
/// required to be nonzero when colour is part of the feature set.
pub fn fit_normalizers(train: &[Vec<ComponentFeatures>], kept: &[usize], set: FeatureSet) -> Result<Normalizers> {
    if train.is_empty() {
        return Err(Error::param("no training features"));
    }
    let n = train.len() as f64;
    let mut area_means = vec![0.0; kept.len()];
    let mut color_means = vec![0.0; kept.len()];
    for row in train {
        if row.len() != kept.len() {
            return Err(Error::dims(format!("{} features for {} components", row.len(), kept.len())));
        }
        for (j, f) in row.iter().enumerate() {
            area_means[j] += f.area;
            color_means[j] += f.color;
        }
    }
    for j in 0..kept.len() {
        area_means[j] /= n;
        color_means[j] /= n;
        if area_means[j] == 0.0 {
            return Err(Error::ZeroMeanFeature { component: kept[j], feature: "area" });
        }
        if set == FeatureSet::AreaColor && color_means[j] == 0.0 {
            return Err(Error::ZeroMeanFeature { component: kept[j], feature: "color" });
        }
    }
    Ok(Normalizers { area_means, color_means, n_train: train.len() })
}

/// Normalized (area, colour) pairs in kept order.
pub fn normalize(features: &[ComponentFeatures], norms: &Normalizers) -> Result<Vec<[f64; 2]>> {
    if features.len() != norms.area_means.len() {
        return Err(Error::dims(format!("{} features for {} normalizers", features.len(), norms.area_means.len())));
    }
    Ok(features
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let color = if norms.color_means[j] == 0.0 { 0.0 } else { f.color / norms.color_means[j] };
            [f.area / norms.area_means[j], color]
        })
        .collect())
}

/// Global vector in `kept` order from `(component id, normalized pair)`
/// entries: per component the area, then (for A+Co) the colour.
pub fn build_global_vector(entries: &[(usize, [f64; 2])], kept: &[usize], set: FeatureSet) -> Result<Vec<f64>> {
    let mut g = Vec::with_capacity(kept.len() * set.width());
    for &k in kept {
        let (_, v) = entries
            .iter()
            .find(|(id, _)| *id == k)
            .ok_or(Error::MissingComponent(k))?;
        g.extend_from_slice(&v[..set.width()]);
    }
    Ok(g)
}

/// Training global vectors, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorBank {
    /// Entries per component (1 or 2).
    pub width: usize,
    pub components: usize,
    pub vectors: Vec<f64>,
}

impl VectorBank {
    pub fn new(width: usize, components: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = width * components;
        let mut vectors = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::dims(format!("global vector of length {} (expected {dim})", r.len())));
            }
            vectors.extend_from_slice(r);
        }
        Ok(Self { width, components, vectors })
    }

    pub fn dim(&self) -> usize {
        self.width * self.components
    }

    pub fn rows(&self) -> usize {
        if self.dim() == 0 {
            0
        } else {
            self.vectors.len() / self.dim()
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim()..(i + 1) * self.dim()]
    }

    fn coordinate_weights(&self, weights: &[f64]) -> Vec<f64> {
        weights.iter().flat_map(|&w| std::iter::repeat_n(w, self.width)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalScore {
    pub d_g: f64,
    pub neighbors: Vec<Neighbor>,
}

/// Mean weighted distance to the `k` nearest bank vectors. `weights` holds
/// one multiplier per component on its squared deviations; `exclude` skips
/// one bank row.
pub fn knn_score(g: &[f64], bank: &VectorBank, k: usize, weights: &[f64], exclude: Option<usize>) -> Result<GlobalScore> {
    if g.len() != bank.dim() || weights.len() != bank.components {
        return Err(Error::dims(format!(
            "global vector {} / weights {} vs bank {}x{}",
            g.len(),
            weights.len(),
            bank.components,
            bank.width
        )));
    }
    let w = bank.coordinate_weights(weights);
    let neighbors = knn::nearest(g, &bank.vectors, bank.dim(), k, Some(&w), exclude);
    Ok(GlobalScore { d_g: knn::mean_distance(&neighbors), neighbors })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub component: usize,
    pub contribution: f64,
}

/// Per-component deviation of `g` from the mean of its neighbours, scaled
/// by the component weight, sorted by decreasing contribution. The squared
/// contributions sum to the weighted squared deviation norm.
pub fn attribute(g: &[f64], bank: &VectorBank, neighbors: &[Neighbor], kept: &[usize], weights: &[f64]) -> Vec<Attribution> {
    let dim = bank.dim();
    let mut mean = vec![0.0; dim];
    for n in neighbors {
        for (m, v) in mean.iter_mut().zip(bank.row(n.index)) {
            *m += v;
        }
    }
    if !neighbors.is_empty() {
        mean.iter_mut().for_each(|m| *m /= neighbors.len() as f64);
    }
    let mut out: Vec<Attribution> = kept
        .iter()
        .enumerate()
        .map(|(j, &component)| {
            let span = j * bank.width..(j + 1) * bank.width;
            let sq: f64 = g[span.clone()].iter().zip(&mean[span]).map(|(a, b)| (a - b) * (a - b)).sum();
            Attribution { component, contribution: (weights[j] * sq).sqrt() }
        })
        .collect();
    out.sort_by(|a, b| b.contribution.total_cmp(&a.contribution));
    out
}
