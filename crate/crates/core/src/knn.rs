//! Exact k-nearest-neighbour search over small in-memory banks.

use log::warn;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// Rows of `bank` (row-major, `dim` wide) nearest to `query` under a
/// per-coordinate weighted Euclidean distance. Ties go to the lower index.
/// `exclude` drops one row (leave-one-out). When fewer than `k` rows are
/// available, all of them are returned and a warning is logged.
pub fn nearest(
    query: &[f64],
    bank: &[f64],
    dim: usize,
    k: usize,
    weights: Option<&[f64]>,
    exclude: Option<usize>,
) -> Vec<Neighbor> {
    assert_eq!(query.len(), dim, "query dim");
    let rows = if dim == 0 { 0 } else { bank.len() / dim };
    let mut all: Vec<Neighbor> = (0..rows)
        .filter(|&r| Some(r) != exclude)
        .map(|r| {
            let row = &bank[r * dim..(r + 1) * dim];
            let d2: f64 = match weights {
                Some(w) => query.iter().zip(row).zip(w).map(|((a, b), w)| w * (a - b) * (a - b)).sum(),
                None => query.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum(),
            };
            Neighbor { index: r, distance: d2.sqrt() }
        })
        .collect();
    if all.len() < k {
        warn!("kNN bank has {} rows, fewer than k={k}; using k={}", all.len(), all.len());
    }
    let take = k.min(all.len());
    let cmp = |a: &Neighbor, b: &Neighbor| a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index));
    if take > 0 && take < all.len() {
        all.select_nth_unstable_by(take - 1, cmp);
        all.truncate(take);
    }
    all.sort_by(cmp);
    all
}

/// Mean distance of the neighbours (0 for an empty set).
pub fn mean_distance(neighbors: &[Neighbor]) -> f64 {
    if neighbors.is_empty() {
        return 0.0;
    }
    neighbors.iter().map(|n| n.distance).sum::<f64>() / neighbors.len() as f64
}
