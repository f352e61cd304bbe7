//! Selection of the reserved components from one training segmentation:
//! noise channels (weak everywhere after smoothing) and background channels
//! (covering more than two image corners) are dropped.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::FilterConfig;
use crate::data::{mean_filter, ScalarField};
use crate::error::{Error, Result};
use crate::region::{binarize, otsu};
use crate::segment::SegmentationField;

/// Partition of the component ids `0..K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReservedComponents {
    pub kept: Vec<usize>,
    pub noise: Vec<usize>,
    pub background: Vec<usize>,
}

impl ReservedComponents {
    pub fn total(&self) -> usize {
        self.kept.len() + self.noise.len() + self.background.len()
    }
}

/// Ids whose mean-filtered map never reaches `threshold`.
pub fn detect_noise(seg: &SegmentationField, filter_size: usize, threshold: f64) -> Result<Vec<usize>> {
    let mut noise = Vec::new();
    for l in 0..seg.k() {
        let smoothed = mean_filter(&seg.channel(l), filter_size)?;
        if smoothed.max() < threshold {
            noise.push(l);
        }
    }
    Ok(noise)
}

/// Foreground of a channel under plain OTSU; constant channels fall back to
/// a 0.5 cut.
fn foreground(field: &ScalarField) -> Vec<bool> {
    let cut = otsu(field).unwrap_or(0.5);
    binarize(field, cut).into_bits()
}

/// Number of image corners whose `window`×`window` patch is mostly foreground.
pub fn covered_corners(field: &ScalarField, window: usize) -> usize {
    let (h, w) = (field.height(), field.width());
    let win_h = window.clamp(1, h);
    let win_w = window.clamp(1, w);
    let fg = foreground(field);
    let corners = [(0, 0), (0, w - win_w), (h - win_h, 0), (h - win_h, w - win_w)];
    corners
        .iter()
        .filter(|&&(y0, x0)| {
            let mut on = 0;
            for y in y0..y0 + win_h {
                for x in x0..x0 + win_w {
                    on += usize::from(fg[y * w + x]);
                }
            }
            2 * on > win_h * win_w
        })
        .count()
}

/// Ids (other than `skip`) whose binarized map covers at least three corners.
pub fn detect_background(seg: &SegmentationField, skip: &[usize], window: usize) -> Vec<usize> {
    (0..seg.k())
        .filter(|l| !skip.contains(l))
        .filter(|&l| covered_corners(&seg.channel(l), window) >= 3)
        .collect()
}

pub fn select_core_components(seg: &SegmentationField, cfg: &FilterConfig) -> Result<ReservedComponents> {
    let noise = detect_noise(seg, cfg.noise_filter_size, cfg.noise_max_threshold)?;
    let background = detect_background(seg, &noise, cfg.corner_window);
    let kept: Vec<usize> = (0..seg.k()).filter(|l| !noise.contains(l) && !background.contains(l)).collect();
    if kept.is_empty() {
        let mut why = String::new();
        for l in 0..seg.k() {
            let reason = if noise.contains(&l) { "noise" } else { "background" };
            let _ = write!(why, "{}component {l}: {reason}", if l == 0 { "" } else { "; " });
        }
        return Err(Error::AllComponentsFiltered(why));
    }
    Ok(ReservedComponents { kept, noise, background })
}
