use super::{ComponentPrototypes, SegmentationField};
use crate::data::FeatureMap;
use crate::error::{Error, Result};

/// Cosine similarity of every patch to every prototype, turned into
/// memberships with a temperature softmax. Zero-norm descriptors get a
/// uniform membership.
pub fn assign_soft(fmap: &FeatureMap, protos: &ComponentPrototypes, temperature: f64) -> Result<SegmentationField> {
    if fmap.dim() != protos.dim {
        return Err(Error::dims(format!("feature dim {} != prototype dim {}", fmap.dim(), protos.dim)));
    }
    if !(temperature > 0.0) {
        return Err(Error::param("temperature must be positive"));
    }
    let k = protos.k;
    let center_norms: Vec<f64> = (0..k).map(|l| protos.center(l).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut data = Vec::with_capacity(fmap.len() * k);
    let mut logits = vec![0.0; k];
    for v in fmap.vectors() {
        let norm = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            data.extend(std::iter::repeat_n(1.0 / k as f64, k));
            continue;
        }
        for l in 0..k {
            let dot: f64 = v.iter().zip(protos.center(l)).map(|(&a, &b)| a as f64 * b).sum();
            let cn = center_norms[l];
            let sim = if cn == 0.0 { 0.0 } else { dot / (norm * cn) };
            logits[l] = sim / temperature;
        }
        data.extend(softmax(&logits));
    }
    SegmentationField::new(fmap.rows(), fmap.cols(), k, data)
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
