use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::families::{activity_features, cooccurrence_features, interaction_features, Similarity};
use super::{Family, FeatureTable};
use crate::artifact::{self, chain_hash};
use crate::clustering::{fit_clusters, ClusterModel, DistanceMetric, KMeansConfig};
use crate::dataset::{InteractionDataset, Split};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graph_embed::{edge_points, generate_walks, train_sgns, EdgeOp, EmbeddingTable, NodeGraph, WalkConfig, WalkStats};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub k_activity: usize,
    /// Number of node clusters and default bin count for co-occurrence.
    pub k_cooccur: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_co_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_co_density: Option<usize>,
    /// Number of edge clusters and default bin count for interaction.
    pub k_interaction: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_int_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_int_density: Option<usize>,
    pub similarity: Similarity,
    pub distance: DistanceMetric,
    pub edge_op: EdgeOp,
    pub walk: WalkConfig,
    pub kmeans_seed: u64,
    pub kmeans_max_iterations: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            k_activity: 10,
            k_cooccur: 10,
            k_co_size: None,
            k_co_density: None,
            k_interaction: 10,
            k_int_size: None,
            k_int_density: None,
            similarity: Similarity::default(),
            distance: DistanceMetric::default(),
            edge_op: EdgeOp::default(),
            walk: WalkConfig::default(),
            kmeans_seed: 0,
            kmeans_max_iterations: 100,
        }
    }
}

impl FeatureConfig {
    /// Feature dimension of a family.
    pub fn k(&self, family: Family) -> usize {
        match family {
            Family::Activity => self.k_activity,
            Family::CoSize => self.k_co_size.unwrap_or(self.k_cooccur),
            Family::CoDensity => self.k_co_density.unwrap_or(self.k_cooccur),
            Family::IntSize => self.k_int_size.unwrap_or(self.k_interaction),
            Family::IntDensity => self.k_int_density.unwrap_or(self.k_interaction),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for f in Family::ALL {
            if self.k(f) == 0 {
                return Err(Error::Config(format!("k for {f} must be at least 1")));
            }
        }
        if self.kmeans_max_iterations == 0 {
            return Err(Error::Config("kmeans_max_iterations must be at least 1".into()));
        }
        if let EdgeOp::WeightedHadamard(w) = &self.edge_op {
            if w.len() != self.walk.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.walk.dim,
                    got: w.len(),
                });
            }
        }
        self.walk.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyEntry {
    pub k: usize,
    pub config_hash: String,
    pub file: String,
}

/// Links the feature artifacts in a directory to their dataset and config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub source: String,
    pub dataset_hash: String,
    pub config: FeatureConfig,
    /// Stage name to config-chain hash.
    pub stages: BTreeMap<String, String>,
    pub families: BTreeMap<Family, FamilyEntry>,
}

#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub tables: BTreeMap<Family, FeatureTable>,
    pub manifest: FeatureManifest,
    /// Stages computed by this call rather than loaded from cache.
    pub recomputed: Vec<String>,
}

impl FeatureSet {
    pub fn get(&self, family: Family) -> &FeatureTable {
        &self.tables[&family]
    }

    pub fn ks(&self) -> BTreeMap<Family, usize> {
        self.tables.iter().map(|(&f, t)| (f, t.k)).collect()
    }
}

pub const MANIFEST: &str = "manifest.json";
const EMBEDDINGS: &str = "embeddings.bin";
const WALKSTATS: &str = "walkstats.json";
const CLUSTERS: &str = "clusters.json";

#[derive(Serialize, Deserialize)]
struct WalkStatsFile {
    config_hash: String,
    stats: WalkStats,
}

#[derive(Clone, Serialize, Deserialize)]
struct NodeClusters {
    config_hash: String,
    user: ClusterModel,
    item: ClusterModel,
}

#[derive(Clone, Serialize, Deserialize)]
struct EdgeClusters {
    config_hash: String,
    edge: ClusterModel,
}

#[derive(Default, Serialize, Deserialize)]
struct ClustersFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    node: Option<NodeClusters>,
    #[serde(skip_serializing_if = "Option::is_none")]
    edge: Option<EdgeClusters>,
}

struct Hashes {
    embedding: String,
    node_clusters: String,
    edge_clusters: String,
    families: BTreeMap<Family, String>,
}

impl Hashes {
    fn new(dataset_hash: &str, cfg: &FeatureConfig) -> Self {
        let embedding = chain_hash(&[dataset_hash], &cfg.walk);
        let node_clusters = chain_hash(
            &[&embedding],
            &json!({
                "m": cfg.k_cooccur,
                "k_size": cfg.k(Family::CoSize),
                "k_density": cfg.k(Family::CoDensity),
                "distance": cfg.distance,
                "seed": cfg.kmeans_seed,
                "max_iterations": cfg.kmeans_max_iterations,
            }),
        );
        let edge_clusters = chain_hash(
            &[&embedding],
            &json!({
                "m": cfg.k_interaction,
                "k_size": cfg.k(Family::IntSize),
                "k_density": cfg.k(Family::IntDensity),
                "distance": cfg.distance,
                "edge_op": cfg.edge_op,
                "seed": cfg.kmeans_seed,
                "max_iterations": cfg.kmeans_max_iterations,
            }),
        );
        let co = chain_hash(&[&node_clusters], &json!({ "similarity": cfg.similarity }));
        let int = chain_hash(&[&edge_clusters], &json!({}));
        let mut families = BTreeMap::new();
        families.insert(Family::Activity, chain_hash(&[dataset_hash], &json!({ "k": cfg.k_activity })));
        families.insert(Family::CoSize, chain_hash(&[&co], &"co_size"));
        families.insert(Family::CoDensity, chain_hash(&[&co], &"co_density"));
        families.insert(Family::IntSize, chain_hash(&[&int], &"int_size"));
        families.insert(Family::IntDensity, chain_hash(&[&int], &"int_density"));
        Hashes {
            embedding,
            node_clusters,
            edge_clusters,
            families,
        }
    }
}

/// Lazily evaluated stages. A stage is a cache hit only when its own
/// artifact and every upstream artifact carry the expected hash.
struct Builder<'a> {
    ds: &'a InteractionDataset,
    cfg: &'a FeatureConfig,
    dir: Option<&'a Path>,
    exec: Exec,
    hashes: Hashes,
    embedding: Option<EmbeddingTable>,
    node: Option<NodeClusters>,
    edge: Option<EdgeClusters>,
    recomputed: Vec<String>,
}

impl<'a> Builder<'a> {
    fn path(&self, name: &str) -> Option<PathBuf> {
        self.dir.map(|d| d.join(name))
    }

    fn clusters_file(&self) -> ClustersFile {
        self.path(CLUSTERS)
            .and_then(|p| artifact::read_json(&p).ok())
            .unwrap_or_default()
    }

    fn embedding_cached(&self) -> bool {
        let (Some(stats), Some(bin)) = (self.path(WALKSTATS), self.path(EMBEDDINGS)) else {
            return false;
        };
        bin.exists()
            && artifact::read_json::<WalkStatsFile>(&stats).is_ok_and(|s| s.config_hash == self.hashes.embedding)
    }

    fn node_cached(&self) -> bool {
        self.embedding_cached()
            && self
                .clusters_file()
                .node
                .is_some_and(|n| n.config_hash == self.hashes.node_clusters)
    }

    fn edge_cached(&self) -> bool {
        self.embedding_cached()
            && self
                .clusters_file()
                .edge
                .is_some_and(|e| e.config_hash == self.hashes.edge_clusters)
    }

    fn family_cached(&self, family: Family) -> bool {
        let Some(path) = self.path(&format!("{family}.bin")) else {
            return false;
        };
        let upstream = match family {
            Family::Activity => true,
            Family::CoSize | Family::CoDensity => self.node_cached(),
            Family::IntSize | Family::IntDensity => self.edge_cached(),
        };
        upstream && FeatureTable::peek_hash(&path).as_deref() == Some(self.hashes.families[&family].as_str())
    }

    fn embedding(&mut self) -> Result<&EmbeddingTable> {
        if self.embedding.is_none() {
            let table = if self.embedding_cached() {
                EmbeddingTable::load(&self.path(EMBEDDINGS).unwrap())?
            } else {
                let graph = NodeGraph::from_bipartite(&self.ds.train_graph());
                let (walks, stats) = generate_walks(&graph, &self.cfg.walk, self.exec);
                let table = train_sgns(&walks, &self.cfg.walk, self.ds.n_users(), self.ds.n_items(), self.exec)?;
                if let Some(dir) = self.dir {
                    table.save(&dir.join(EMBEDDINGS))?;
                    let file = WalkStatsFile {
                        config_hash: self.hashes.embedding.clone(),
                        stats,
                    };
                    artifact::write_json(&dir.join(WALKSTATS), &file)?;
                }
                self.recomputed.push("embeddings".into());
                table
            };
            self.embedding = Some(table);
        }
        Ok(self.embedding.as_ref().unwrap())
    }

    fn kmeans_config(&self, m: usize, n: usize, role: u64) -> KMeansConfig {
        if n < m {
            log::warn!("{n} points for {m} clusters; using {n} clusters");
        }
        KMeansConfig {
            n_clusters: m.min(n),
            max_iterations: self.cfg.kmeans_max_iterations,
            rng_seed: seed::derive(self.cfg.kmeans_seed, &[role]),
        }
    }

    fn node_clusters(&mut self) -> Result<NodeClusters> {
        if self.node.is_none() {
            let node = if self.node_cached() {
                self.clusters_file().node.unwrap()
            } else {
                let (ks, kd) = (self.cfg.k(Family::CoSize), self.cfg.k(Family::CoDensity));
                let (metric, exec) = (self.cfg.distance, self.exec);
                let user_cfg = self.kmeans_config(self.cfg.k_cooccur, self.ds.n_users(), 0);
                let item_cfg = self.kmeans_config(self.cfg.k_cooccur, self.ds.n_items(), 1);
                let emb = self.embedding()?;
                let dim = emb.dim();
                let user = fit_clusters(&emb.user_points(), dim, &user_cfg, ks, kd, metric, exec)?;
                let item = fit_clusters(&emb.item_points(), dim, &item_cfg, ks, kd, metric, exec)?;
                let node = NodeClusters {
                    config_hash: self.hashes.node_clusters.clone(),
                    user,
                    item,
                };
                if let Some(path) = self.path(CLUSTERS) {
                    let mut file = self.clusters_file();
                    file.node = Some(node.clone());
                    artifact::write_json(&path, &file)?;
                }
                self.recomputed.push("node_clusters".into());
                node
            };
            self.node = Some(node);
        }
        Ok(self.node.clone().unwrap())
    }

    fn edge_clusters(&mut self) -> Result<EdgeClusters> {
        if self.edge.is_none() {
            let edge = if self.edge_cached() {
                self.clusters_file().edge.unwrap()
            } else {
                let (ks, kd) = (self.cfg.k(Family::IntSize), self.cfg.k(Family::IntDensity));
                let (metric, exec) = (self.cfg.distance, self.exec);
                let ds = self.ds;
                let pairs: Vec<(u32, u32)> = ds
                    .edge_ids_in(Split::Train)
                    .iter()
                    .map(|&e| ds.edges()[e as usize])
                    .collect();
                let kcfg = self.kmeans_config(self.cfg.k_interaction, pairs.len(), 2);
                let op = self.cfg.edge_op.clone();
                let emb = self.embedding()?;
                let points = edge_points(emb, &pairs, &op)?;
                let model = fit_clusters(&points, emb.dim(), &kcfg, ks, kd, metric, exec)?;
                let edge = EdgeClusters {
                    config_hash: self.hashes.edge_clusters.clone(),
                    edge: model,
                };
                if let Some(path) = self.path(CLUSTERS) {
                    let mut file = self.clusters_file();
                    file.edge = Some(edge.clone());
                    artifact::write_json(&path, &file)?;
                }
                self.recomputed.push("edge_clusters".into());
                edge
            };
            self.edge = Some(edge);
        }
        Ok(self.edge.clone().unwrap())
    }
}

fn round_to_f32(mut t: FeatureTable) -> FeatureTable {
    for x in t.user_rows.iter_mut().chain(t.item_rows.iter_mut()) {
        *x = *x as f32 as f64;
    }
    t
}

/// Runs node2vec, node clustering, edge embedding, edge clustering and all
/// five feature families on the train split of `ds`.
///
/// With a `dir`, every intermediate artifact is persisted and reused on later
/// calls whose config chain hashes match. Returned rows are rounded to f32 so
/// fresh and cached results agree.
pub fn build_all(
    ds: &InteractionDataset,
    source: &str,
    dataset_hash: &str,
    cfg: &FeatureConfig,
    dir: Option<&Path>,
    exec: Exec,
) -> Result<FeatureSet> {
    cfg.validate()?;
    let hashes = Hashes::new(dataset_hash, cfg);
    let mut b = Builder {
        ds,
        cfg,
        dir,
        exec,
        hashes,
        embedding: None,
        node: None,
        edge: None,
        recomputed: Vec::new(),
    };
    let mut tables = BTreeMap::new();
    let cached: BTreeMap<Family, bool> = Family::ALL.into_iter().map(|f| (f, b.family_cached(f))).collect();
    for f in Family::ALL {
        if cached[&f] {
            let t = FeatureTable::load(&b.path(&format!("{f}.bin")).unwrap())?;
            tables.insert(f, t);
        }
    }
    if !cached[&Family::Activity] {
        tables.insert(Family::Activity, activity_features(ds, cfg.k_activity, exec)?);
    }
    if !cached[&Family::CoSize] || !cached[&Family::CoDensity] {
        let node = b.node_clusters()?;
        let emb = b.embedding()?;
        let (size, density) = cooccurrence_features(ds, emb, &node.user, &node.item, cfg.similarity, exec)?;
        tables.insert(Family::CoSize, size);
        tables.insert(Family::CoDensity, density);
    }
    if !cached[&Family::IntSize] || !cached[&Family::IntDensity] {
        let edge = b.edge_clusters()?;
        let (size, density) = interaction_features(ds, &edge.edge, exec)?;
        tables.insert(Family::IntSize, size);
        tables.insert(Family::IntDensity, density);
    }

    let mut families = BTreeMap::new();
    let mut recomputed = std::mem::take(&mut b.recomputed);
    for f in Family::ALL {
        let hash = b.hashes.families[&f].clone();
        let mut t = tables.remove(&f).unwrap();
        if t.config_hash != hash {
            t.config_hash = hash.clone();
            t = round_to_f32(t);
            if let Some(dir) = dir {
                t.save(&dir.join(format!("{f}.bin")))?;
            }
            recomputed.push(f.name().to_string());
        }
        families.insert(
            f,
            FamilyEntry {
                k: t.k,
                config_hash: hash,
                file: format!("{f}.bin"),
            },
        );
        tables.insert(f, t);
    }
    let mut stages = BTreeMap::new();
    stages.insert("embeddings".to_string(), b.hashes.embedding.clone());
    stages.insert("node_clusters".to_string(), b.hashes.node_clusters.clone());
    stages.insert("edge_clusters".to_string(), b.hashes.edge_clusters.clone());
    let manifest = FeatureManifest {
        source: source.to_string(),
        dataset_hash: dataset_hash.to_string(),
        config: cfg.clone(),
        stages,
        families,
    };
    if let Some(dir) = dir {
        artifact::write_json(&dir.join(MANIFEST), &manifest)?;
    }
    Ok(FeatureSet {
        tables,
        manifest,
        recomputed,
    })
}

/// Loads the tables listed in a feature directory's manifest.
pub fn load_features(dir: &Path) -> Result<FeatureSet> {
    let manifest: FeatureManifest = artifact::read_json(&dir.join(MANIFEST))?;
    let mut tables = BTreeMap::new();
    for (&f, entry) in &manifest.families {
        let path = dir.join(&entry.file);
        let t = FeatureTable::load(&path)?;
        if t.config_hash != entry.config_hash || t.family != f || t.k != entry.k {
            return Err(Error::artifact(&path, "table does not match manifest"));
        }
        tables.insert(f, t);
    }
    Ok(FeatureSet {
        tables,
        manifest,
        recomputed: Vec::new(),
    })
}
