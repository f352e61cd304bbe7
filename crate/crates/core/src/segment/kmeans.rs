use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::MemoryBank;

/// KMeans centers in feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentPrototypes {
    pub k: usize,
    pub dim: usize,
    /// K×D, row-major.
    pub centers: Vec<f64>,
}

impl ComponentPrototypes {
    pub fn center(&self, l: usize) -> &[f64] {
        &self.centers[l * self.dim..(l + 1) * self.dim]
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub prototypes: ComponentPrototypes,
    pub assignments: Vec<usize>,
    /// Sum of squared distances after the seeding assignment and after every
    /// Lloyd iteration.
    pub objective_trace: Vec<f64>,
}

impl KMeansFit {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

pub fn kmeans(bank: &MemoryBank, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<KMeansFit> {
    let points: Vec<f64> = bank.vectors.iter().map(|&v| v as f64).collect();
    kmeans_points(&points, bank.dim, k, seed, max_iter, tol)
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.chunks_exact(dim).enumerate() {
        let d = sq(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's algorithm with k-means++ seeding over row-major `points`.
///
/// Empty clusters are re-seeded at the point farthest from its center.
pub fn kmeans_points(
    points: &[f64],
    dim: usize,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansFit> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::dims("points length is not a multiple of dim"));
    }
    let n = points.len() / dim;
    if k == 0 || n < k {
        return Err(Error::param(format!("kmeans needs at least K={k} points, got {n}")));
    }
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding.
    let mut centers = Vec::with_capacity(k * dim);
    centers.extend_from_slice(row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq(row(i), &centers[0..dim])).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            return Err(Error::param(format!("fewer than K={k} distinct vectors")));
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        while d2[pick] == 0.0 {
            pick -= 1;
        }
        let start = centers.len();
        centers.extend_from_slice(row(pick));
        for i in 0..n {
            d2[i] = d2[i].min(sq(row(i), &centers[start..start + dim]));
        }
    }

    let mut assignments = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    let assign = |centers: &[f64], assignments: &mut [usize], dists: &mut [f64]| -> (f64, bool) {
        let mut obj = 0.0;
        let mut changed = false;
        for i in 0..n {
            let (c, d) = nearest(row(i), centers, dim);
            changed |= assignments[i] != c;
            assignments[i] = c;
            dists[i] = d;
            obj += d;
        }
        (obj, changed)
    };

    let (obj, _) = assign(&centers, &mut assignments, &mut dists);
    let mut trace = vec![obj];
    for _ in 0..max_iter {
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignments[i];
            counts[c] += 1;
            for (s, &v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row(i)) {
                *s += v;
            }
        }
        let mut next = sums;
        for c in 0..k {
            if counts[c] > 0 {
                next[c * dim..(c + 1) * dim].iter_mut().for_each(|v| *v /= counts[c] as f64);
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("n >= k >= 1");
                next[c * dim..(c + 1) * dim].copy_from_slice(row(far));
                dists[far] = 0.0;
            }
        }
        let shift: f64 = centers
            .chunks_exact(dim)
            .zip(next.chunks_exact(dim))
            .map(|(a, b)| sq(a, b).sqrt())
            .sum();
        centers = next;
        let (obj, changed) = assign(&centers, &mut assignments, &mut dists);
        trace.push(obj);
        if !changed || shift <= tol {
            break;
        }
    }

    Ok(KMeansFit {
        prototypes: ComponentPrototypes { k, dim, centers },
        assignments,
        objective_trace: trace,
    })
}
