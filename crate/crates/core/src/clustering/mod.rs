//! k-means over embeddings, per-cluster size and density statistics, and
//! quantile binning of those statistics into one-hot memberships.

mod bins;
mod kmeans;

use serde::{Deserialize, Serialize};

pub use bins::{one_hot_bin, quantile_bins, quantile_bins_keyed, BinSpec, BinStrategy};
pub use kmeans::{kmeans, objective, KMeansConfig};

use crate::error::{Error, Result};
use crate::exec::Exec;

/// Bounded distance used for cluster density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    Cosine,
}

impl DistanceMetric {
    pub fn max_distance(self) -> f64 {
        match self {
            DistanceMetric::Cosine => 2.0,
        }
    }

    /// Cosine distance `1 - cos(a, b)` in `[0, 2]`. A zero vector is treated
    /// as orthogonal to everything except an identical vector.
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        self.distance_checked(a, b).0
    }

    /// Distance plus whether the zero-vector convention was used.
    fn distance_checked(self, a: &[f64], b: &[f64]) -> (f64, bool) {
        match self {
            DistanceMetric::Cosine => {
                if a == b {
                    return (0.0, a.iter().all(|&x| x == 0.0));
                }
                let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
                for (&x, &y) in a.iter().zip(b) {
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                if na == 0.0 || nb == 0.0 {
                    return (1.0, true);
                }
                ((1.0 - dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 2.0), false)
            }
        }
    }
}

/// Centroids, point assignments and the per-cluster statistics and bins
/// derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<u32>,
    /// Number of member points per cluster.
    pub sizes: Vec<usize>,
    /// Mean distance of members to their centroid.
    pub densities: Vec<f64>,
    pub metric: DistanceMetric,
    pub size_bins: Option<BinSpec>,
    pub density_bins: Option<BinSpec>,
    pub iterations: usize,
    /// k-means objective after each centroid update.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
}

impl ClusterModel {
    pub fn n_clusters(&self) -> usize {
        self.centroids.len()
    }

    pub fn cluster_of(&self, point: usize) -> usize {
        self.assignment[point] as usize
    }

    pub fn size_bin(&self, cluster: usize) -> usize {
        self.size_bins.as_ref().expect("clusters binned").bins[cluster]
    }

    pub fn density_bin(&self, cluster: usize) -> usize {
        self.density_bins.as_ref().expect("clusters binned").bins[cluster]
    }

    /// Fill sizes and densities from the assignment.
    pub fn compute_stats(&mut self, points: &[f64], metric: DistanceMetric) -> Result<()> {
        let m = self.n_clusters();
        let dim = self.centroids.first().map_or(0, Vec::len);
        if dim == 0 || points.len() != self.assignment.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: self.assignment.len() * dim,
                got: points.len(),
            });
        }
        let mut sizes = vec![0usize; m];
        let mut sums = vec![0f64; m];
        let mut zero_hits = 0usize;
        for (i, &c) in self.assignment.iter().enumerate() {
            let c = c as usize;
            let (d, zero) = metric.distance_checked(&points[i * dim..(i + 1) * dim], &self.centroids[c]);
            zero_hits += zero as usize;
            sizes[c] += 1;
            sums[c] += d;
        }
        if zero_hits > 0 {
            log::warn!("{zero_hits} zero vector(s) met while computing cluster density; used distance 1");
        }
        self.densities = sums
            .iter()
            .zip(&sizes)
            .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
            .collect();
        self.sizes = sizes;
        self.metric = metric;
        Ok(())
    }

    /// Quantile-bin the cluster sizes and densities. Ties break by cluster
    /// index.
    pub fn bin_stats(&mut self, k_size: usize, k_density: usize) -> Result<()> {
        let sizes: Vec<f64> = self.sizes.iter().map(|&s| s as f64).collect();
        self.size_bins = Some(quantile_bins(&sizes, k_size)?);
        self.density_bins = Some(quantile_bins(&self.densities, k_density)?);
        Ok(())
    }
}

/// Fill size and density statistics.
pub fn cluster_stats(mut model: ClusterModel, points: &[f64], metric: DistanceMetric) -> Result<ClusterModel> {
    model.compute_stats(points, metric)?;
    Ok(model)
}

/// k-means, statistics and bins in one call.
pub fn fit_clusters(
    points: &[f64],
    dim: usize,
    cfg: &KMeansConfig,
    k_size: usize,
    k_density: usize,
    metric: DistanceMetric,
    exec: Exec,
) -> Result<ClusterModel> {
    let mut model = kmeans(points, dim, cfg, exec)?;
    model.compute_stats(points, metric)?;
    model.bin_stats(k_size, k_density)?;
    Ok(model)
}
