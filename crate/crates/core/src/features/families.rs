use serde::{Deserialize, Serialize};

use super::{Family, FeatureTable};
use crate::clustering::{quantile_bins_keyed, ClusterModel};
use crate::dataset::InteractionDataset;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graph_embed::EmbeddingTable;

/// Similarity between a node embedding and its cluster centroid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    /// `1 / (1 + |x - y|)`, in (0, 1].
    #[default]
    InverseEuclidean,
    /// `-|x - y|`.
    NegEuclidean,
}

impl Similarity {
    pub fn eval(self, x: &[f32], y: &[f64]) -> f64 {
        let d = x
            .iter()
            .zip(y)
            .map(|(&a, &b)| (a as f64 - b) * (a as f64 - b))
            .sum::<f64>()
            .sqrt();
        match self {
            Similarity::InverseEuclidean => 1.0 / (1.0 + d),
            Similarity::NegEuclidean => -d,
        }
    }
}

fn table(family: Family, k: usize, n_users: usize, n_items: usize, users: Vec<Vec<f64>>, items: Vec<Vec<f64>>) -> FeatureTable {
    FeatureTable {
        family,
        k,
        n_users,
        n_items,
        user_rows: users.into_iter().flatten().collect(),
        item_rows: items.into_iter().flatten().collect(),
        config_hash: String::new(),
    }
}

/// Activity features: every item is one-hot binned by its train degree
/// (quantile bins, bin 0 least active, ties by external id) and a user's row
/// is the raw sum of its train items' one-hots. Items mirror with user bins.
pub fn activity_features(ds: &InteractionDataset, k: usize, exec: Exec) -> Result<FeatureTable> {
    let g = ds.train_graph();
    if g.users.n_nodes() == 0 || (0..ds.n_users()).all(|u| g.users.degree(u) == 0) {
        return Err(Error::Data("no train interactions".into()));
    }
    let item_deg: Vec<f64> = (0..ds.n_items()).map(|v| g.items.degree(v) as f64).collect();
    let user_deg: Vec<f64> = (0..ds.n_users()).map(|u| g.users.degree(u) as f64).collect();
    let item_bins = quantile_bins_keyed(&item_deg, ds.item_ids(), k)?.bins;
    let user_bins = quantile_bins_keyed(&user_deg, ds.user_ids(), k)?.bins;
    let users = exec.map_range(ds.n_users(), |u| histogram(g.users.neighbors(u), &item_bins, k));
    let items = exec.map_range(ds.n_items(), |v| histogram(g.items.neighbors(v), &user_bins, k));
    Ok(table(Family::Activity, k, ds.n_users(), ds.n_items(), users, items))
}

fn histogram(neighbors: &[u32], bins: &[usize], k: usize) -> Vec<f64> {
    let mut row = vec![0.0; k];
    for &n in neighbors {
        row[bins[n as usize]] += 1.0;
    }
    row
}

/// Per-bin mean similarity of a node's neighbors to their cluster centroids,
/// with bins taken from the neighbors' cluster size (or density) bins. Empty
/// bins give 0.
fn mean_by_bin(
    neighbors: &[u32],
    similarity: &[f64],
    clusters: &ClusterModel,
    bin_of: impl Fn(&ClusterModel, usize) -> usize,
    k: usize,
) -> Vec<f64> {
    let mut sum = vec![0.0; k];
    let mut count = vec![0usize; k];
    for &n in neighbors {
        let b = bin_of(clusters, clusters.cluster_of(n as usize));
        sum[b] += similarity[n as usize];
        count[b] += 1;
    }
    sum.iter()
        .zip(&count)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect()
}

/// Co-occurrence features `(co_size, co_density)`.
///
/// For user `u` and size bin `b`, the coordinate is the mean of
/// `s(g_v, t_v)` over train neighbors `v` whose item cluster falls in size
/// bin `b`, where `t_v` is the centroid of `v`'s cluster. Items mirror with
/// user clusters.
pub fn cooccurrence_features(
    ds: &InteractionDataset,
    emb: &EmbeddingTable,
    user_clusters: &ClusterModel,
    item_clusters: &ClusterModel,
    similarity: Similarity,
    exec: Exec,
) -> Result<(FeatureTable, FeatureTable)> {
    if user_clusters.assignment.len() != ds.n_users() || item_clusters.assignment.len() != ds.n_items() {
        return Err(Error::Data("cluster assignments do not cover the dataset".into()));
    }
    let (ku_s, ku_d, kv_s, kv_d) = (bin_k(user_clusters, true)?, bin_k(user_clusters, false)?, bin_k(item_clusters, true)?, bin_k(item_clusters, false)?);
    if ku_s != kv_s || ku_d != kv_d {
        return Err(Error::Config("user and item clusters must use the same bin counts".into()));
    }
    let user_sim = exec.map_range(ds.n_users(), |u| similarity.eval(emb.user(u), &user_clusters.centroids[user_clusters.cluster_of(u)]));
    let item_sim = exec.map_range(ds.n_items(), |v| similarity.eval(emb.item(v), &item_clusters.centroids[item_clusters.cluster_of(v)]));
    let g = ds.train_graph();
    let side = |size: bool| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let k = if size { ku_s } else { ku_d };
        let bin_of = move |c: &ClusterModel, cl: usize| if size { c.size_bin(cl) } else { c.density_bin(cl) };
        let users = exec.map_range(ds.n_users(), |u| mean_by_bin(g.users.neighbors(u), &item_sim, item_clusters, bin_of, k));
        let items = exec.map_range(ds.n_items(), |v| mean_by_bin(g.items.neighbors(v), &user_sim, user_clusters, bin_of, k));
        (users, items)
    };
    let (su, si) = side(true);
    let (du, di) = side(false);
    Ok((
        table(Family::CoSize, ku_s, ds.n_users(), ds.n_items(), su, si),
        table(Family::CoDensity, ku_d, ds.n_users(), ds.n_items(), du, di),
    ))
}

fn bin_k(c: &ClusterModel, size: bool) -> Result<usize> {
    let spec = if size { &c.size_bins } else { &c.density_bins };
    spec.as_ref()
        .map(|b| b.k)
        .ok_or_else(|| Error::Data("clusters have not been binned".into()))
}

/// Interaction features `(int_size, int_density)`: the raw sum over a node's
/// train edges of the one-hot size (density) bin of each edge's cluster.
///
/// `edge_clusters` must be fitted on the train edges in ascending edge-id
/// order, i.e. `ds.edge_ids_in(Split::Train)`.
pub fn interaction_features(
    ds: &InteractionDataset,
    edge_clusters: &ClusterModel,
    exec: Exec,
) -> Result<(FeatureTable, FeatureTable)> {
    let g = ds.train_graph();
    let train_ids = ds.edge_ids_in(crate::dataset::Split::Train);
    if edge_clusters.assignment.len() != train_ids.len() {
        return Err(Error::Data(format!(
            "edge clusters cover {} edges, dataset has {} train edges",
            edge_clusters.assignment.len(),
            train_ids.len()
        )));
    }
    // edge id -> position among train edges
    let mut position = vec![u32::MAX; ds.n_edges()];
    for (p, &e) in train_ids.iter().enumerate() {
        position[e as usize] = p as u32;
    }
    let (ks, kd) = (bin_k(edge_clusters, true)?, bin_k(edge_clusters, false)?);
    let rows = |users: bool, size: bool| -> Vec<Vec<f64>> {
        let (adj, n) = if users { (&g.users, ds.n_users()) } else { (&g.items, ds.n_items()) };
        let k = if size { ks } else { kd };
        exec.map_range(n, |x| {
            let mut row = vec![0.0; k];
            for &e in adj.edge_ids(x) {
                let c = edge_clusters.cluster_of(position[e as usize] as usize);
                let b = if size { edge_clusters.size_bin(c) } else { edge_clusters.density_bin(c) };
                row[b] += 1.0;
            }
            row
        })
    };
    let f = |size: bool, family| {
        let k = if size { ks } else { kd };
        table(family, k, ds.n_users(), ds.n_items(), rows(true, size), rows(false, size))
    };
    Ok((f(true, Family::IntSize), f(false, Family::IntDensity)))
}
