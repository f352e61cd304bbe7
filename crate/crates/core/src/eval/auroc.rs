use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub score: f64,
    pub anomalous: bool,
    pub kind: String,
}

/// Area under the ROC curve via average ranks (Mann-Whitney U).
pub fn auroc(scores: &[LabeledScore]) -> Result<f64> {
    let normal: Vec<f64> = scores.iter().filter(|s| !s.anomalous).map(|s| s.score).collect();
    let anomalous: Vec<f64> = scores.iter().filter(|s| s.anomalous).map(|s| s.score).collect();
    auroc_split(&normal, &anomalous)
}

pub fn auroc_split(normal: &[f64], anomalous: &[f64]) -> Result<f64> {
    if normal.is_empty() || anomalous.is_empty() {
        return Err(Error::param("AUROC needs at least one normal and one anomalous score"));
    }
    if normal.iter().chain(anomalous).any(|v| v.is_nan()) {
        return Err(Error::param("AUROC scores must not be NaN"));
    }
    let mut all: Vec<(f64, bool)> = normal.iter().map(|&s| (s, false)).chain(anomalous.iter().map(|&s| (s, true))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // Ranks i+1..=j+1 share their average.
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * all[i..=j].iter().filter(|x| x.1).count() as f64;
        i = j + 1;
    }
    let (n_a, n_n) = (anomalous.len() as f64, normal.len() as f64);
    Ok((rank_sum - n_a * (n_a + 1.0) / 2.0) / (n_a * n_n))
}
