use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::derive_seed;
use crate::data::Image;
use crate::error::{Error, Result};
use crate::region::RegionMask;

/// Toy counting dataset: identical dark circles on a plain canvas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleConfig {
    pub size: usize,
    pub radius: usize,
    pub circle: [u8; 3],
    pub background: [u8; 3],
    /// Minimum distance between circle centres. 2r+2 keeps circles a pixel
    /// apart so every circle is its own 8-connected region.
    pub min_center_dist: f64,
    pub min_count: usize,
    pub max_count: usize,
    pub per_class: usize,
}

impl Default for CircleConfig {
    fn default() -> Self {
        Self {
            size: 256,
            radius: 15,
            circle: [20, 20, 20],
            background: [255, 255, 255],
            min_center_dist: 32.0,
            min_count: 2,
            max_count: 13,
            per_class: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CircleImage {
    pub id: String,
    pub count: usize,
    pub centers: Vec<(usize, usize)>,
    pub image: Image,
    pub mask: RegionMask,
}

const ATTEMPTS_PER_CIRCLE: usize = 2000;
const RESTARTS: u64 = 50;

fn place(cfg: &CircleConfig, count: usize, rng: &mut ChaCha8Rng) -> Option<Vec<(usize, usize)>> {
    let (lo, hi) = (cfg.radius, cfg.size - 1 - cfg.radius);
    let mut centers: Vec<(usize, usize)> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut placed = false;
        for _ in 0..ATTEMPTS_PER_CIRCLE {
            let c = (rng.random_range(lo..=hi), rng.random_range(lo..=hi));
            let clear = centers.iter().all(|p| {
                let (dy, dx) = (p.0 as f64 - c.0 as f64, p.1 as f64 - c.1 as f64);
                (dy * dy + dx * dx).sqrt() >= cfg.min_center_dist
            });
            if clear {
                centers.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }
    Some(centers)
}

pub fn gen_circle_image(cfg: &CircleConfig, count: usize, seed: u64, id: impl Into<String>) -> Result<CircleImage> {
    if cfg.size <= 2 * cfg.radius {
        return Err(Error::param("canvas too small for the circle radius"));
    }
    let mut centers = None;
    for restart in 0..RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, restart, 0));
        centers = place(cfg, count, &mut rng);
        if centers.is_some() {
            break;
        }
    }
    let centers = centers.ok_or_else(|| Error::param(format!("cannot place {count} circles")))?;
    let r2 = (cfg.radius * cfg.radius) as i64;
    let inside = |y: usize, x: usize| {
        centers.iter().any(|&(cy, cx)| {
            let (dy, dx) = (y as i64 - cy as i64, x as i64 - cx as i64);
            dy * dy + dx * dx <= r2
        })
    };
    let mask = RegionMask::from_fn(cfg.size, cfg.size, inside);
    let image = Image::from_fn(cfg.size, cfg.size, |y, x| if mask.get(y, x) { cfg.circle } else { cfg.background });
    Ok(CircleImage { id: id.into(), count, centers, image, mask })
}

/// All images with `count` circles.
pub fn gen_circle_class(cfg: &CircleConfig, count: usize, seed: u64) -> Result<Vec<CircleImage>> {
    (0..cfg.per_class)
        .map(|i| gen_circle_image(cfg, count, derive_seed(seed, count as u64, i as u64), format!("n{count:02}_{i:03}")))
        .collect()
}

pub fn gen_circle_dataset(cfg: &CircleConfig, seed: u64) -> Result<Vec<CircleImage>> {
    let mut out = Vec::new();
    for count in cfg.min_count..=cfg.max_count {
        out.extend(gen_circle_class(cfg, count, seed)?);
    }
    Ok(out)
}
