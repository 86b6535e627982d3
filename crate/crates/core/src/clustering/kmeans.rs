use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{ClusterModel, DistanceMetric};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::seed::{self, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub n_clusters: usize,
    pub max_iterations: usize,
    pub rng_seed: u64,
}

impl KMeansConfig {
    pub fn new(n_clusters: usize, rng_seed: u64) -> Self {
        KMeansConfig {
            n_clusters,
            max_iterations: 100,
            rng_seed,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sum of squared Euclidean distances of points to their assigned centroid.
pub fn objective(points: &[f64], dim: usize, centroids: &[Vec<f64>], assignment: &[u32]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(&points[i * dim..(i + 1) * dim], &centroids[c as usize]))
        .sum()
}

/// Lloyd's algorithm with k-means++ seeding, Euclidean assignment, and
/// empty clusters refilled with the point farthest from its centroid. Stops
/// at an assignment fixpoint or after `max_iterations` updates.
pub fn kmeans(points: &[f64], dim: usize, cfg: &KMeansConfig, exec: Exec) -> Result<ClusterModel> {
    let m = cfg.n_clusters;
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: points.len(),
        });
    }
    let n = points.len() / dim;
    if m == 0 {
        return Err(Error::Config("k-means needs at least one cluster".into()));
    }
    if n < m {
        return Err(Error::Data(format!("k-means: {n} points for {m} clusters")));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite point".into()));
    }
    let row = |i: usize| &points[i * dim..(i + 1) * dim];

    let mut centroids = plus_plus_init(points, dim, m, cfg.rng_seed);
    let assign = |centroids: &[Vec<f64>]| -> Vec<u32> {
        exec.map_range(n, |i| {
            let x = row(i);
            let mut best = (f64::INFINITY, 0u32);
            for (c, t) in centroids.iter().enumerate() {
                let d = sq_dist(x, t);
                if d < best.0 {
                    best = (d, c as u32);
                }
            }
            best.1
        })
    };

    let mut assignment = assign(&centroids);
    repair_empty(points, dim, &mut centroids, &mut assignment);
    let mut trace = Vec::new();
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        update_centroids(points, dim, &mut centroids, &assignment);
        trace.push(objective(points, dim, &centroids, &assignment));
        let mut next = assign(&centroids);
        repair_empty(points, dim, &mut centroids, &mut next);
        if next == assignment {
            break;
        }
        assignment = next;
    }

    Ok(ClusterModel {
        centroids,
        assignment,
        sizes: vec![],
        densities: vec![],
        metric: DistanceMetric::Cosine,
        size_bins: None,
        density_bins: None,
        iterations,
        objective_trace: trace,
    })
}

fn plus_plus_init(points: &[f64], dim: usize, m: usize, rng_seed: u64) -> Vec<Vec<f64>> {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut rng = seed::rng(rng_seed, &[stream::KMEANS]);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![row(first).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(row(i), &centroids[0])).collect();
    while centroids.len() < m {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            while d2[pick] == 0.0 {
                pick -= 1;
            }
            pick
        } else {
            // duplicates only: pick any point not used yet
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centroids.push(row(pick).to_vec());
        let c = centroids.last().unwrap();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(row(i), c));
        }
    }
    centroids
}

fn update_centroids(points: &[f64], dim: usize, centroids: &mut [Vec<f64>], assignment: &[u32]) {
    let m = centroids.len();
    let mut sums = vec![vec![0f64; dim]; m];
    let mut counts = vec![0usize; m];
    for (i, &c) in assignment.iter().enumerate() {
        let c = c as usize;
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(&points[i * dim..(i + 1) * dim]) {
            *s += x;
        }
    }
    for c in 0..m {
        if counts[c] > 0 {
            centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
    }
}

fn repair_empty(points: &[f64], dim: usize, centroids: &mut [Vec<f64>], assignment: &mut [u32]) {
    let m = centroids.len();
    let mut sizes = vec![0usize; m];
    for &c in assignment.iter() {
        sizes[c as usize] += 1;
    }
    for empty in 0..m {
        if sizes[empty] > 0 {
            continue;
        }
        let mut best = (-1.0, usize::MAX);
        for (i, &c) in assignment.iter().enumerate() {
            if sizes[c as usize] < 2 {
                continue;
            }
            let d = sq_dist(&points[i * dim..(i + 1) * dim], &centroids[c as usize]);
            if d > best.0 {
                best = (d, i);
            }
        }
        let i = best.1;
        sizes[assignment[i] as usize] -= 1;
        assignment[i] = empty as u32;
        sizes[empty] = 1;
        centroids[empty] = points[i * dim..(i + 1) * dim].to_vec();
    }
}
