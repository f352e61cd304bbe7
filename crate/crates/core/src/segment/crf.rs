//! Fully connected CRF with Gaussian appearance and smoothness kernels,
//! refined by mean-field inference under Potts compatibility.
//!
//! Pairwise weight between pixels i and j:
//!
//! ```text
//! w(i, j) = a * exp(-|p_i - p_j|^2 / 2θα^2 - |I_i - I_j|^2 / 2θβ^2)
//!         + b * exp(-|p_i - p_j|^2 / 2θγ^2)
//! ```
//!
//! Each iteration computes `m_i(l) = Σ_{j≠i} w(i, j) Q_j(l)` and sets
//! `Q_i(l) ∝ exp(-U_i(l) + m_i(l))`, which is the Potts mean-field update
//! `exp(-U_i(l) - Σ_j w(i, j) (1 - Q_j(l)))` up to a per-pixel constant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SegmentationField;
use crate::config::CrfConfig;
use crate::data::Image;
use crate::error::{Error, Result};

const UNARY_FLOOR: f64 = 1e-8;
// Far-field pairs below this weight are skipped.
const WEIGHT_CUTOFF: f64 = 1e-12;
const MAX_LOCAL_RADIUS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrfParams {
    pub a: f64,
    pub b: f64,
    pub theta_alpha: f64,
    pub theta_beta: f64,
    pub theta_gamma: f64,
    pub iterations: usize,
}

impl Default for CrfParams {
    fn default() -> Self {
        Self { a: 4.0, b: 3.0, theta_alpha: 67.0, theta_beta: 3.0, theta_gamma: 1.0, iterations: 2 }
    }
}

impl From<&CrfConfig> for CrfParams {
    fn from(c: &CrfConfig) -> Self {
        Self {
            a: c.a,
            b: c.b,
            theta_alpha: c.theta_alpha,
            theta_beta: c.theta_beta,
            theta_gamma: c.theta_gamma,
            iterations: c.iterations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CrfMode {
    /// All O(N²) pairs.
    Exact,
    /// Pairs inside a small window around each pixel exactly; appearance
    /// pairs beyond it estimated from about `samples` pixels on a randomly
    /// offset lattice, redrawn per iteration and reweighted by its inverse
    /// density. Pixels of rare colours are added on top, up to half as many
    /// again. The smoothness kernel is truncated at the window.
    Subsampled { samples: usize, seed: u64 },
}

struct Kernels {
    a: f64,
    b: f64,
    theta_alpha2: f64,
    theta_beta2: f64,
    appearance_spatial: Vec<f64>,
    smoothness_spatial: Vec<f64>,
    color: Vec<f64>,
}

impl Kernels {
    fn new(p: &CrfParams, h: usize, w: usize) -> Self {
        let max_d2 = (h - 1) * (h - 1) + (w - 1) * (w - 1);
        let gauss = |theta: f64, n: usize| -> Vec<f64> {
            let s = 2.0 * theta * theta;
            (0..=n).map(|d2| (-(d2 as f64) / s).exp()).collect()
        };
        Self {
            a: p.a,
            b: p.b,
            theta_alpha2: p.theta_alpha * p.theta_alpha,
            theta_beta2: p.theta_beta * p.theta_beta,
            appearance_spatial: gauss(p.theta_alpha, max_d2),
            smoothness_spatial: gauss(p.theta_gamma, max_d2),
            color: gauss(p.theta_beta, 3 * 255 * 255),
        }
    }

    #[inline]
    fn weight(&self, d2: usize, c2: usize) -> f64 {
        self.a * self.appearance_spatial[d2] * self.color[c2] + self.b * self.smoothness_spatial[d2]
    }
}

#[inline]
fn color_d2(p: [u8; 3], q: [u8; 3]) -> usize {
    let d = |i: usize| (p[i] as i32 - q[i] as i32).pow(2) as usize;
    d(0) + d(1) + d(2)
}

/// Refines `seg` against the colours of `img`. Returns the input unchanged
/// when there is nothing to do (zero iterations or zero pairwise weights).
pub fn crf_refine(seg: &SegmentationField, img: &Image, params: &CrfParams, mode: CrfMode) -> Result<SegmentationField> {
    if seg.height() != img.height() || seg.width() != img.width() {
        return Err(Error::dims(format!(
            "segmentation {}x{} does not match image {}x{}",
            seg.height(),
            seg.width(),
            img.height(),
            img.width()
        )));
    }
    if !(params.theta_alpha > 0.0 && params.theta_beta > 0.0 && params.theta_gamma > 0.0) {
        return Err(Error::param("CRF bandwidths must be positive"));
    }
    if !(params.a >= 0.0 && params.b >= 0.0) {
        return Err(Error::param("CRF kernel weights must be non-negative"));
    }
    if let CrfMode::Subsampled { samples: 0, .. } = mode {
        return Err(Error::param("subsampled CRF needs at least one sample"));
    }
    if params.iterations == 0 || (params.a == 0.0 && params.b == 0.0) {
        return Ok(seg.clone());
    }

    let (h, w, k) = (seg.height(), seg.width(), seg.k());
    let n = h * w;
    let kernels = Kernels::new(params, h, w);
    let colors: Vec<[u8; 3]> = img.as_raw().chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();

    let unary: Vec<f64> = seg.values().iter().map(|&v| v.max(UNARY_FLOOR)).collect();
    let mut q = unary.clone();
    for m in q.chunks_exact_mut(k) {
        let s: f64 = m.iter().sum();
        m.iter_mut().for_each(|v| *v /= s);
    }

    let mut msg = vec![0.0f64; n * k];
    for it in 0..params.iterations {
        msg.iter_mut().for_each(|v| *v = 0.0);
        match mode {
            CrfMode::Exact => exact_messages(&q, &colors, h, w, k, &kernels, &mut msg),
            CrfMode::Subsampled { samples, seed } => {
                let rate = (samples as f64 / n as f64).min(1.0);
                let radius = ((6.0 * params.theta_gamma).ceil() as usize).clamp(1, MAX_LOCAL_RADIUS);
                let iter_seed = seed ^ (it as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                subsampled_messages(&q, &colors, h, w, k, &kernels, radius, rate, iter_seed, &mut msg)
            }
        }
        for i in 0..n {
            let m = &msg[i * k..(i + 1) * k];
            let top = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let out = &mut q[i * k..(i + 1) * k];
            let mut s = 0.0;
            for l in 0..k {
                out[l] = unary[i * k + l] * (m[l] - top).exp();
                s += out[l];
            }
            out.iter_mut().for_each(|v| *v /= s);
        }
    }
    SegmentationField::new(h, w, k, q)
}

fn exact_messages(q: &[f64], colors: &[[u8; 3]], h: usize, w: usize, k: usize, kern: &Kernels, msg: &mut [f64]) {
    let n = h * w;
    for i in 0..n {
        let (yi, xi) = (i / w, i % w);
        let out = &mut msg[i * k..(i + 1) * k];
        for j in 0..n {
            if j == i {
                continue;
            }
            let (yj, xj) = (j / w, j % w);
            let d2 = yi.abs_diff(yj).pow(2) + xi.abs_diff(xj).pow(2);
            let wt = kern.weight(d2, color_d2(colors[i], colors[j]));
            for (o, &v) in out.iter_mut().zip(&q[j * k..(j + 1) * k]) {
                *o += wt * v;
            }
        }
    }
}

/// Far-field sample sorted by red channel so each pixel scans only the
/// samples whose colour kernel can exceed the weight cutoff.
struct FarSample {
    y: Vec<usize>,
    x: Vec<usize>,
    r: Vec<i32>,
    g: Vec<i32>,
    b: Vec<i32>,
    /// Memberships divided by the sampling rate, row-major by sample.
    q: Vec<f64>,
}

/// Pixels on a square lattice of spacing `1/sqrt(rate)` with a random
/// offset. Smooth sums over the image are estimated with far lower variance
/// than by independent draws.
fn lattice_sample(h: usize, w: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let step = 1.0 / rate.min(1.0).sqrt();
    let axis = |len: usize, offset: f64| -> Vec<usize> {
        (0..).map(|i| (offset + i as f64 * step) as usize).take_while(|&v| v < len).collect()
    };
    let rows = axis(h, rng.random::<f64>() * step);
    let cols = axis(w, rng.random::<f64>() * step);
    rows.iter().flat_map(|&y| cols.iter().map(move |&x| y * w + x)).collect()
}

/// Colour buckets expected to receive fewer lattice samples than this are
/// taken whole, smallest first, up to half the nominal sample count.
const MIN_BUCKET_SAMPLES: f64 = 16.0;

/// Far-field pixels with their reweighting factors. Pixels of rare colours
/// (16-level RGB buckets) are kept with weight 1: their few colour-mates
/// carry the appearance messages and a sparse draw would miss them. The
/// rest come from the lattice, scaled by its inverse density.
fn far_sample(colors: &[[u8; 3]], h: usize, w: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, f64)> {
    let bucket = |c: [u8; 3]| (usize::from(c[0] >> 4) << 8) | (usize::from(c[1] >> 4) << 4) | usize::from(c[2] >> 4);
    let mut counts = vec![0usize; 1 << 12];
    for &c in colors {
        counts[bucket(c)] += 1;
    }
    let mut small: Vec<usize> = (0..counts.len()).filter(|&b| counts[b] > 0 && counts[b] as f64 * rate < MIN_BUCKET_SAMPLES).collect();
    small.sort_by_key(|&b| (counts[b], b));
    let budget = 0.5 * rate * (h * w) as f64;
    let mut exact = vec![false; counts.len()];
    let mut taken = 0;
    for b in small {
        if (taken + counts[b]) as f64 > budget {
            break;
        }
        taken += counts[b];
        exact[b] = true;
    }
    let lattice = lattice_sample(h, w, rate, rng);
    let scale = (h * w) as f64 / lattice.len() as f64;
    let mut out: Vec<(usize, f64)> = (0..h * w).filter(|&j| exact[bucket(colors[j])]).map(|j| (j, 1.0)).collect();
    out.extend(lattice.into_iter().filter(|&j| !exact[bucket(colors[j])]).map(|j| (j, scale)));
    out
}

#[allow(clippy::too_many_arguments)]
fn subsampled_messages(
    q: &[f64],
    colors: &[[u8; 3]],
    h: usize,
    w: usize,
    k: usize,
    kern: &Kernels,
    radius: usize,
    rate: f64,
    seed: u64,
    msg: &mut [f64],
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = far_sample(colors, h, w, rate, &mut rng);
    picked.sort_by_key(|&(j, _)| (colors[j][0], j));
    let channel = |c: usize| picked.iter().map(|&(j, _)| i32::from(colors[j][c])).collect();
    let far = FarSample {
        y: picked.iter().map(|&(j, _)| j / w).collect(),
        x: picked.iter().map(|&(j, _)| j % w).collect(),
        r: channel(0),
        g: channel(1),
        b: channel(2),
        q: picked.iter().flat_map(|&(j, wt)| q[j * k..(j + 1) * k].iter().map(move |v| v * wt)).collect(),
    };

    // Beyond the window only the appearance kernel is kept; the smoothness
    // kernel there is below exp(-r²/2θγ²) of its peak.
    let color_max = if kern.a > 0.0 {
        let limit = 2.0 * kern.theta_beta2 * (kern.a / WEIGHT_CUTOFF).ln();
        (limit.floor() as usize).min(kern.color.len() - 1)
    } else {
        0
    };
    let red_span = (color_max as f64).sqrt().floor() as i32;
    let mut color_cut = kern.color[..=color_max].to_vec();
    color_cut.push(0.0);
    let spatial = |d: usize| (-((d * d) as f64) / (2.0 * kern.theta_alpha2)).exp();
    let spatial_x: Vec<f64> = (0..w).map(spatial).collect();
    let spatial_y: Vec<f64> = (0..h).map(spatial).collect();
    let mut row_weight = vec![0.0; far.y.len()];
    let mut near_row = vec![false; far.y.len()];

    for yi in 0..h {
        for s in 0..far.y.len() {
            let dy = yi.abs_diff(far.y[s]);
            row_weight[s] = kern.a * spatial_y[dy];
            near_row[s] = dy <= radius;
        }
        let ctx = FarContext { far: &far, row_weight: &row_weight, near_row: &near_row, spatial_x: &spatial_x, color: &color_cut };
        for xi in 0..w {
            let i = yi * w + xi;
            let ci = colors[i];
            let out = &mut msg[i * k..(i + 1) * k];

            for yj in yi.saturating_sub(radius)..=(yi + radius).min(h - 1) {
                for xj in xi.saturating_sub(radius)..=(xi + radius).min(w - 1) {
                    let j = yj * w + xj;
                    if j == i {
                        continue;
                    }
                    let d2 = yi.abs_diff(yj).pow(2) + xi.abs_diff(xj).pow(2);
                    let wt = kern.weight(d2, color_d2(ci, colors[j]));
                    for (o, &v) in out.iter_mut().zip(&q[j * k..(j + 1) * k]) {
                        *o += wt * v;
                    }
                }
            }

            if kern.a == 0.0 {
                continue;
            }
            let c = ci.map(i32::from);
            let lo = far.r.partition_point(|&r| r < c[0] - red_span);
            let hi = far.r.partition_point(|&r| r <= c[0] + red_span);
            let query = FarQuery { x: xi, rgb: c, radius, color_max, lo, hi };
            match k {
                2 => far_field::<2>(&ctx, &query, out),
                3 => far_field::<3>(&ctx, &query, out),
                4 => far_field::<4>(&ctx, &query, out),
                5 => far_field::<5>(&ctx, &query, out),
                6 => far_field::<6>(&ctx, &query, out),
                7 => far_field::<7>(&ctx, &query, out),
                8 => far_field::<8>(&ctx, &query, out),
                _ => far_field_dyn(&ctx, &query, out),
            }
        }
    }
}

struct FarContext<'a> {
    far: &'a FarSample,
    /// a·G(dy) for the current row.
    row_weight: &'a [f64],
    near_row: &'a [bool],
    spatial_x: &'a [f64],
    /// Colour kernel up to the cutoff followed by a single 0.
    color: &'a [f64],
}

struct FarQuery {
    x: usize,
    rgb: [i32; 3],
    radius: usize,
    color_max: usize,
    lo: usize,
    hi: usize,
}

/// Weight of far sample `s`, or 0 inside the local window or below the
/// cutoff. Branch-free so the scan stays tight.
#[inline(always)]
fn far_weight(ctx: &FarContext<'_>, q: &FarQuery, s: usize) -> f64 {
    let far = ctx.far;
    let dx = q.x.abs_diff(far.x[s]);
    let outside = !ctx.near_row[s] | (dx > q.radius);
    let (dr, dg, db) = (far.r[s] - q.rgb[0], far.g[s] - q.rgb[1], far.b[s] - q.rgb[2]);
    let c2 = (dr * dr + dg * dg + db * db) as usize;
    let wt = ctx.row_weight[s] * ctx.spatial_x[dx] * ctx.color[c2.min(q.color_max + 1)];
    wt * f64::from(u8::from(outside & (wt >= WEIGHT_CUTOFF)))
}

// Fixed label counts keep the accumulators in registers.
fn far_field<const K: usize>(ctx: &FarContext<'_>, q: &FarQuery, out: &mut [f64]) {
    let mut acc = [0.0; K];
    for s in q.lo..q.hi {
        let wt = far_weight(ctx, q, s);
        let v: &[f64; K] = ctx.far.q[s * K..(s + 1) * K].try_into().unwrap();
        for l in 0..K {
            acc[l] += wt * v[l];
        }
    }
    for l in 0..K {
        out[l] += acc[l];
    }
}

fn far_field_dyn(ctx: &FarContext<'_>, q: &FarQuery, out: &mut [f64]) {
    let k = out.len();
    for s in q.lo..q.hi {
        let wt = far_weight(ctx, q, s);
        for (o, &v) in out.iter_mut().zip(&ctx.far.q[s * k..(s + 1) * k]) {
            *o += wt * v;
        }
    }
}
