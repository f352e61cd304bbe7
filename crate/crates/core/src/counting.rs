//! Instance counting: 8-connected regions, 1-D DBSCAN over pooled training
//! region areas, per-group count histograms and their kNN score.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn;
use crate::region::RegionMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectedRegion {
    pub area: usize,
    /// Inclusive `(y_min, x_min, y_max, x_max)`.
    pub bbox: (usize, usize, usize, usize),
}

/// All 8-connected regions in raster order of their first pixel.
pub fn label_regions(mask: &RegionMask) -> Vec<ConnectedRegion> {
    let (h, w) = (mask.height(), mask.width());
    let bits = mask.bits();
    let mut seen = vec![false; h * w];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut r = ConnectedRegion { area: 0, bbox: (start / w, start % w, start / w, start % w) };
        while let Some(p) = queue.pop_front() {
            let (y, x) = (p / w, p % w);
            r.area += 1;
            r.bbox = (r.bbox.0.min(y), r.bbox.1.min(x), r.bbox.2.max(y), r.bbox.3.max(x));
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let q = ny * w + nx;
                    if bits[q] && !seen[q] {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        regions.push(r);
    }
    regions
}

/// Regions whose area is at least `min_area_frac` of the image.
pub fn connected_regions(mask: &RegionMask, min_area_frac: f64) -> Vec<ConnectedRegion> {
    let min_area = min_area_frac * (mask.height() * mask.width()) as f64;
    label_regions(mask).into_iter().filter(|r| r.area as f64 >= min_area).collect()
}

/// DBSCAN on scalars. Neighbourhoods are `|x - y| <= eps` and include the
/// point itself. Clusters are numbered in increasing value order; a border
/// point reachable from two clusters joins the lower one. Noise is `None`.
pub fn dbscan_1d(values: &[f64], eps: f64, min_samples: usize) -> Vec<Option<usize>> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();

    let (mut lo, mut hi) = (0usize, 0usize);
    let mut core = vec![false; n];
    for i in 0..n {
        while sorted[i] - sorted[lo] > eps {
            lo += 1;
        }
        while hi + 1 < n && sorted[hi + 1] - sorted[i] <= eps {
            hi += 1;
        }
        core[i] = hi + 1 - lo >= min_samples;
    }

    // Cores chain into one cluster while consecutive cores are within eps.
    let mut cluster_of = vec![None; n];
    let mut next = 0;
    let mut last_core: Option<usize> = None;
    for i in 0..n {
        if !core[i] {
            continue;
        }
        match last_core {
            Some(j) if sorted[i] - sorted[j] <= eps => cluster_of[i] = cluster_of[j],
            _ => {
                cluster_of[i] = Some(next);
                next += 1;
            }
        }
        last_core = Some(i);
    }

    // Border points: nearest core below first, then above.
    let mut prev_core: Option<usize> = None;
    let mut below = vec![None; n];
    for i in 0..n {
        if core[i] {
            prev_core = Some(i);
        } else {
            below[i] = prev_core.filter(|&j| sorted[i] - sorted[j] <= eps).and_then(|j| cluster_of[j]);
        }
    }
    let mut next_core: Option<usize> = None;
    for i in (0..n).rev() {
        if core[i] {
            next_core = Some(i);
        } else {
            let above = next_core.filter(|&j| sorted[j] - sorted[i] <= eps).and_then(|j| cluster_of[j]);
            cluster_of[i] = below[i].or(above);
        }
    }

    let mut labels = vec![None; n];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = cluster_of[pos];
    }
    labels
}

/// Area groups of one component, centroids ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaGroups {
    pub centroids: Vec<f64>,
}

impl AreaGroups {
    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }
}

/// Groups from the pooled training areas of one component, with
/// `eps = eps_frac · mean(area)`.
pub fn fit_groups(areas: &[f64], eps_frac: f64, min_samples: usize) -> AreaGroups {
    if areas.is_empty() {
        return AreaGroups { centroids: Vec::new() };
    }
    let eps = eps_frac * areas.iter().sum::<f64>() / areas.len() as f64;
    let labels = dbscan_1d(areas, eps, min_samples);
    let groups = labels.iter().flatten().map(|&l| l + 1).max().unwrap_or(0);
    let mut sums = vec![(0.0, 0usize); groups];
    for (a, l) in areas.iter().zip(&labels) {
        if let Some(l) = l {
            sums[*l].0 += a;
            sums[*l].1 += 1;
        }
    }
    AreaGroups { centroids: sums.into_iter().map(|(s, c)| s / c as f64).collect() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountHistogram {
    pub counts: Vec<usize>,
    pub regularized: Vec<f64>,
}

impl CountHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Counts regions per nearest group centroid (lower centroid on ties),
/// then divides by the number of groups.
pub fn count_histogram(areas: &[f64], groups: &AreaGroups) -> CountHistogram {
    let n = groups.len();
    let mut counts = vec![0usize; n];
    if n > 0 {
        for &a in areas {
            let mut best = 0;
            for (g, c) in groups.centroids.iter().enumerate() {
                if (a - c).abs() < (a - groups.centroids[best]).abs() {
                    best = g;
                }
            }
            counts[best] += 1;
        }
    }
    let regularized = counts.iter().map(|&c| c as f64 / n as f64).collect();
    CountHistogram { counts, regularized }
}

/// Regularized training histograms of one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBank {
    pub dim: usize,
    pub rows: Vec<f64>,
}

impl HistogramBank {
    pub fn new(dim: usize, hists: &[CountHistogram]) -> Result<Self> {
        let mut rows = Vec::with_capacity(dim * hists.len());
        for h in hists {
            if h.regularized.len() != dim {
                return Err(Error::dims(format!("histogram of length {} (expected {dim})", h.regularized.len())));
            }
            rows.extend_from_slice(&h.regularized);
        }
        Ok(Self { dim, rows })
    }
}

/// Mean distance from `hist` to its `k` nearest training histograms;
/// 0 for a component without groups. `exclude` skips one training row.
pub fn counting_score(hist: &CountHistogram, bank: &HistogramBank, k: usize, exclude: Option<usize>) -> Result<f64> {
    if bank.dim == 0 {
        return Ok(0.0);
    }
    if hist.regularized.len() != bank.dim {
        return Err(Error::dims(format!("histogram of length {} vs bank {}", hist.regularized.len(), bank.dim)));
    }
    let nb = knn::nearest(&hist.regularized, &bank.rows, bank.dim, k, None, exclude);
    Ok(knn::mean_distance(&nb))
}
