//! Twin MLP towers per feature family, trained with the BPR loss and scored
//! by inner product, on seen or unseen features alike.

mod adam;
mod mlp;
mod train;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifact::{self, Reader, Writer};
use crate::dataset::InteractionDataset;
use crate::ensemble::TunedWeights;
use crate::error::{Error, Result};
use crate::eval::Scorer;
use crate::exec::Exec;
use crate::features::{Family, FeatureSet, FeatureTable};

pub use adam::{optimizer_steps, Adam};
pub use mlp::{bpr_loss, n_params, sigmoid, softplus, Activation, Mlp, Triple, TwinTower};
pub use train::{train_towers, TrainConfig, TrainReport, MAX_EPOCHS};

/// Tower outputs for every user and item of one feature table.
pub struct TowerScorer {
    dim: usize,
    users: Vec<f64>,
    items: Vec<f64>,
}

impl TowerScorer {
    pub fn new(towers: &TwinTower, table: &FeatureTable, exec: Exec) -> Self {
        let users = exec.map_range(table.n_users, |u| towers.user.forward(table.user(u)));
        let items = exec.map_range(table.n_items, |v| towers.item.forward(table.item(v)));
        TowerScorer {
            dim: towers.user.output_dim(),
            users: users.into_iter().flatten().collect(),
            items: items.into_iter().flatten().collect(),
        }
    }

    pub fn scores(&self, user: u32, items: &[u32]) -> Vec<f64> {
        let d = self.dim;
        let e = &self.users[user as usize * d..(user as usize + 1) * d];
        items
            .iter()
            .map(|&v| mlp::dot(e, &self.items[v as usize * d..(v as usize + 1) * d]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyModel {
    pub family: Family,
    pub k: usize,
    pub towers: TwinTower,
    pub report: TrainReport,
}

impl FamilyModel {
    pub fn check_features(&self, table: &FeatureTable) -> Result<()> {
        if table.family != self.family {
            return Err(Error::Data(format!("expected {} features, got {}", self.family, table.family)));
        }
        if table.k != self.k {
            return Err(Error::IncompatibleFeatures {
                family: self.family.to_string(),
                expected: self.k,
                got: table.k,
            });
        }
        Ok(())
    }

    /// Scorer over the users and items of `table`, which may come from a
    /// dataset the towers never saw.
    pub fn scorer(&self, table: &FeatureTable, exec: Exec) -> Result<FamilyScorer> {
        self.check_features(table)?;
        Ok(FamilyScorer {
            family: self.family,
            inner: TowerScorer::new(&self.towers, table, exec),
        })
    }
}

pub struct FamilyScorer {
    family: Family,
    inner: TowerScorer,
}

impl Scorer for FamilyScorer {
    fn name(&self) -> String {
        self.family.to_string()
    }

    fn score(&self, user: u32, items: &[u32]) -> Result<Vec<f64>> {
        Ok(self.inner.scores(user, items))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub source: String,
    pub dataset_hash: String,
    /// Raw input and preprocessing shared by both halves of a partition.
    #[serde(default)]
    pub source_hash: Option<String>,
    pub features_hash: String,
    /// Feature configuration alone, without the dataset.
    pub feature_config_hash: String,
    pub train: TrainConfig,
    /// Hash of the whole upstream chain: dataset, features, training config.
    pub chain_hash: String,
}

/// Trained towers for every family plus the tuned interpolation weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerBundle {
    pub meta: BundleMeta,
    pub families: BTreeMap<Family, FamilyModel>,
    pub weights: Option<TunedWeights>,
}

/// Hash identifying a feature set: its dataset and per-family table hashes.
pub fn features_hash(features: &FeatureSet) -> String {
    let per: BTreeMap<Family, &str> = features
        .tables
        .iter()
        .map(|(&f, t)| (f, t.config_hash.as_str()))
        .collect();
    artifact::chain_hash(&[&features.manifest.dataset_hash], &per)
}

/// Trains the towers of every family in `features` on `ds`.
pub fn train_bundle(
    ds: &InteractionDataset,
    features: &FeatureSet,
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<ScorerBundle> {
    let mut families = BTreeMap::new();
    for (&family, table) in &features.tables {
        let (towers, report) = train_towers(table, ds, cfg, exec)?;
        log::info!(
            "{family}: {} epochs, best validation auc {}",
            report.epochs_run,
            report.best_val_auc.map_or("n/a".to_string(), |a| format!("{a:.4}"))
        );
        families.insert(
            family,
            FamilyModel {
                family,
                k: table.k,
                towers,
                report,
            },
        );
    }
    let fh = features_hash(features);
    let meta = BundleMeta {
        source: features.manifest.source.clone(),
        dataset_hash: features.manifest.dataset_hash.clone(),
        chain_hash: artifact::chain_hash(&[&fh], cfg),
        source_hash: None,
        features_hash: fh,
        feature_config_hash: artifact::config_hash(&features.manifest.config),
        train: cfg.clone(),
    };
    Ok(ScorerBundle {
        meta,
        families,
        weights: None,
    })
}

/// Score of an unseen user and item under one family. Only reads the
/// bundle.
pub fn zero_shot_score(bundle: &ScorerBundle, family: Family, f_u: &[f64], f_v: &[f64]) -> Result<f64> {
    let m = bundle
        .families
        .get(&family)
        .ok_or_else(|| Error::Data(format!("bundle has no {family} model")))?;
    for got in [f_u.len(), f_v.len()] {
        if got != m.k {
            return Err(Error::IncompatibleFeatures {
                family: family.to_string(),
                expected: m.k,
                got,
            });
        }
    }
    Ok(m.towers.score(f_u, f_v))
}

const MODEL_MAGIC: &[u8; 8] = b"ZRMLP\0\0\x01";

#[derive(Serialize, Deserialize)]
struct Sidecar {
    family: Family,
    k: usize,
    source: String,
    seed: u64,
    dims: Vec<usize>,
    activation: Activation,
    final_activation: bool,
    report: TrainReport,
}

#[derive(Serialize, Deserialize)]
struct BundleFile {
    meta: BundleMeta,
    families: BTreeMap<Family, usize>,
}

pub const BUNDLE_FILE: &str = "bundle.json";
pub const WEIGHTS_FILE: &str = "weights.json";

impl ScorerBundle {
    /// `bundle.json`, `model/<family>.bin` with a JSON sidecar each, and
    /// `weights.json` when weights are tuned.
    pub fn save(&self, dir: &Path) -> Result<()> {
        for (f, m) in &self.families {
            let mut w = Writer::default();
            w.bytes(MODEL_MAGIC);
            w.u8(f.tag());
            w.u8(m.towers.user.final_activation() as u8);
            let dims = m.towers.user.dims();
            w.u32(dims.len() as u32);
            for &d in dims {
                w.u32(d as u32);
            }
            w.f32s(m.towers.params_concat().iter().map(|&p| p as f32));
            artifact::write_bytes(&dir.join("model").join(format!("{f}.bin")), &w.buf)?;
            let side = Sidecar {
                family: *f,
                k: m.k,
                source: self.meta.source.clone(),
                seed: self.meta.train.seed,
                dims: dims.to_vec(),
                activation: m.towers.user.activation(),
                final_activation: m.towers.user.final_activation(),
                report: m.report.clone(),
            };
            artifact::write_json(&dir.join("model").join(format!("{f}.json")), &side)?;
        }
        let file = BundleFile {
            meta: self.meta.clone(),
            families: self.families.iter().map(|(&f, m)| (f, m.k)).collect(),
        };
        artifact::write_json(&dir.join(BUNDLE_FILE), &file)?;
        if let Some(w) = &self.weights {
            artifact::write_json(&dir.join(WEIGHTS_FILE), w)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let file: BundleFile = artifact::read_json(&dir.join(BUNDLE_FILE))?;
        let mut families = BTreeMap::new();
        for (&f, &k) in &file.families {
            let path = dir.join("model").join(format!("{f}.bin"));
            let bytes = artifact::read_bytes(&path)?;
            let mut r = Reader::new(&bytes, &path);
            r.expect_magic(MODEL_MAGIC)?;
            if r.u8()? != f.tag() {
                return Err(Error::artifact(&path, "family tag does not match file name"));
            }
            let final_activation = r.u8()? != 0;
            let n = r.u32()? as usize;
            let dims = (0..n).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if dims.first() != Some(&k) {
                return Err(Error::artifact(&path, "input size does not match bundle"));
            }
            let per = n_params(&dims);
            let params: Vec<f64> = r.f32s(2 * per)?.into_iter().map(f64::from).collect();
            r.finish()?;
            let side: Sidecar = artifact::read_json(&dir.join("model").join(format!("{f}.json")))?;
            let user = Mlp::from_params(&dims, side.activation, final_activation, params[..per].to_vec())?;
            let item = Mlp::from_params(&dims, side.activation, final_activation, params[per..].to_vec())?;
            families.insert(
                f,
                FamilyModel {
                    family: f,
                    k,
                    towers: TwinTower { user, item },
                    report: side.report,
                },
            );
        }
        let wpath = dir.join(WEIGHTS_FILE);
        let weights = if wpath.exists() { Some(artifact::read_json(&wpath)?) } else { None };
        Ok(ScorerBundle {
            meta: file.meta,
            families,
            weights,
        })
    }

    pub fn ks(&self) -> BTreeMap<Family, usize> {
        self.families.iter().map(|(&f, m)| (f, m.k)).collect()
    }

    /// Per-family scorers over a feature set, failing on any k mismatch.
    pub fn scorers(&self, features: &FeatureSet, exec: Exec) -> Result<BTreeMap<Family, FamilyScorer>> {
        let mut out = BTreeMap::new();
        for (f, m) in &self.families {
            let table = features
                .tables
                .get(f)
                .ok_or_else(|| Error::Data(format!("target features lack {f}")))?;
            out.insert(*f, m.scorer(table, exec)?);
        }
        Ok(out)
    }
}
