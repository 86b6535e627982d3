//! End-to-end stages behind the command line: prepare, featurize, train,
//! evaluate and sweep, with artifacts cached by config hash.

mod config;
mod sweep;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::artifact::{self, chain_hash, config_hash};
use crate::dataset::{
    infer_delimiter, load_interactions, partition_seen_unseen, split_per_user, DatasetMeta, InteractionDataset, LoadOptions,
    Partition, Split,
};
use crate::ensemble::{blend_lists, combine, tune_eta, tune_weights, Combo, FamilyScores, TuneConfig};
use crate::error::{Error, Result};
use crate::eval::{build_tasks, evaluate_scores, score_tasks, train_mf_bpr, MetricReport, MostPop, RankingTask, Scorer, SeedResult};
use crate::exec::Exec;
use crate::features::{build_all, FeatureConfig, FeatureSet};
use crate::model::{features_hash, optimizer_steps, train_bundle, ScorerBundle, BUNDLE_FILE};

pub use config::{DataConfig, ExperimentConfig, Mode, SweepAxis, SweepConfig};
pub use sweep::{sweep, SweepRow, SWEEP_CSV};

/// Environment variable that relocates derived artifacts.
pub const CACHE_ENV: &str = "ZEROREC_CACHE_DIR";

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub dirs: Vec<PathBuf>,
    /// Every output already matched the config.
    pub cached: bool,
}

/// Load, binarize, deduplicate, k-core filter, optionally partition into
/// seen and unseen halves, and split every user's interactions.
///
/// Writes `out` directly, or `out/seen` and `out/unseen` when partitioning.
pub fn prepare(input: &Path, out: &Path, data: &DataConfig) -> Result<Prepared> {
    let raw_hash = stage("load", artifact::file_hash(input))?;
    let delimiter = data.delimiter.clone().unwrap_or_else(|| infer_delimiter(input).to_string());
    let opts = LoadOptions {
        delimiter: delimiter.clone(),
        rating_threshold: data.rating_threshold,
        has_header: data.has_header,
    };
    let source_hash = chain_hash(
        &[&raw_hash],
        &json!({
            "delimiter": delimiter,
            "rating_threshold": data.rating_threshold,
            "has_header": data.has_header,
            "k_core": data.k_core,
        }),
    );
    let local = json!({
        "seen_fraction": data.seen_fraction,
        "train_fraction": data.train_fraction,
        "valid_fraction": data.valid_fraction,
        "seed": data.seed,
    });
    let outputs: Vec<(PathBuf, Option<Partition>)> = match data.seen_fraction {
        Some(_) => vec![(out.join("seen"), Some(Partition::Seen)), (out.join("unseen"), Some(Partition::Unseen))],
        None => vec![(out.to_path_buf(), None)],
    };
    let hash_of = |p: Option<Partition>| chain_hash(&[&source_hash], &json!({ "split": local, "partition": p }));
    let cached = outputs.iter().all(|(dir, p)| {
        artifact::read_json::<DatasetMeta>(&InteractionDataset::meta_path(dir)).is_ok_and(|m| m.config_hash == hash_of(*p))
    });
    let dirs: Vec<PathBuf> = outputs.iter().map(|(d, _)| d.clone()).collect();
    if cached {
        log::info!("prepare: cache hit for {}", out.display());
        return Ok(Prepared { dirs, cached });
    }

    let rows = stage("load", load_interactions(input, &opts))?;
    let ds = stage("dedup", InteractionDataset::from_interactions(&rows))?;
    let ds = stage("k-core", ds.k_core(data.k_core))?;
    let parts = match data.seen_fraction {
        Some(f) => {
            let (seen, unseen) = stage("partition", partition_seen_unseen(&ds, f, data.seed, data.k_core))?;
            vec![seen, unseen]
        }
        None => vec![ds],
    };
    let source = input.file_name().map_or_else(|| input.display().to_string(), |n| n.to_string_lossy().into_owned());
    for ((dir, p), part) in outputs.iter().zip(parts) {
        let split = stage("split", split_per_user(&part, data.train_fraction, data.valid_fraction, data.seed))?;
        let mut meta = DatasetMeta {
            n_users: 0,
            n_items: 0,
            n_edges: 0,
            n_train: 0,
            n_valid: 0,
            n_test: 0,
            partition: *p,
            k_core: data.k_core,
            seed: data.seed,
            seen_fraction: data.seen_fraction,
            train_fraction: data.train_fraction,
            valid_fraction: data.valid_fraction,
            source: source.clone(),
            source_hash: source_hash.clone(),
            config_hash: hash_of(*p),
        };
        meta.counts_from(&split);
        stage("save", split.save(dir, &meta))?;
        log::info!(
            "prepare: {} users, {} items, {} interactions -> {}",
            meta.n_users,
            meta.n_items,
            meta.n_edges,
            dir.display()
        );
    }
    Ok(Prepared { dirs, cached: false })
}

/// Where the features of a dataset directory live.
pub fn features_dir(dataset_dir: &Path, meta: &DatasetMeta) -> PathBuf {
    match std::env::var_os(CACHE_ENV) {
        Some(root) => PathBuf::from(root).join("features").join(&meta.config_hash),
        None => dataset_dir.join("features"),
    }
}

pub struct Featurized {
    pub ds: InteractionDataset,
    pub meta: DatasetMeta,
    pub features: FeatureSet,
    pub dir: PathBuf,
}

pub fn featurize(dataset_dir: &Path, cfg: &FeatureConfig, exec: Exec) -> Result<Featurized> {
    let (ds, meta) = stage("load dataset", InteractionDataset::load(dataset_dir))?;
    let dir = features_dir(dataset_dir, &meta);
    let features = stage("featurize", build_all(&ds, &meta.source, &meta.config_hash, cfg, Some(&dir), exec))?;
    if features.recomputed.is_empty() {
        log::info!("featurize: cache hit in {}", dir.display());
    } else {
        log::info!("featurize: recomputed {}", features.recomputed.join(", "));
    }
    Ok(Featurized {
        ds,
        meta,
        features,
        dir,
    })
}

/// Candidate scores of every family on every task.
pub fn family_scores(bundle: &ScorerBundle, features: &FeatureSet, tasks: &[RankingTask], exec: Exec) -> Result<FamilyScores> {
    let mut out = FamilyScores::new();
    for (f, s) in bundle.scorers(features, exec)? {
        out.insert(f, score_tasks(&s, tasks, exec)?);
    }
    Ok(out)
}

pub struct Trained {
    pub bundle: ScorerBundle,
    pub cached: bool,
}

fn bundle_chain(features: &FeatureSet, cfg: &ExperimentConfig) -> String {
    chain_hash(&[&features_hash(features)], &json!({ "train": cfg.train, "tune": cfg.tune }))
}

/// Trains every family on the dataset's train split, tunes interpolation
/// weights on its validation split, and writes the bundle.
pub fn train(dataset_dir: &Path, bundle_dir: &Path, cfg: &ExperimentConfig, exec: Exec) -> Result<Trained> {
    let f = featurize(dataset_dir, &cfg.features, exec)?;
    let chain = bundle_chain(&f.features, cfg);
    if bundle_dir.join(BUNDLE_FILE).exists() {
        if let Ok(b) = ScorerBundle::load(bundle_dir) {
            if b.meta.chain_hash == chain && b.weights.is_some() {
                log::info!("train: cache hit in {}", bundle_dir.display());
                return Ok(Trained { bundle: b, cached: true });
            }
        }
    }
    let mut bundle = stage("train", train_bundle(&f.ds, &f.features, &cfg.train, exec))?;
    bundle.meta.chain_hash = chain;
    bundle.meta.source_hash = Some(f.meta.source_hash.clone());

    let valid = stage("tune", build_tasks(&f.ds, Split::Valid, cfg.train.seed))?.tasks;
    let scores = family_scores(&bundle, &f.features, &valid, exec)?;
    let mut weights = stage("tune", tune_weights(&valid, &scores, &cfg.tune, exec))?;
    for c in &weights.combos {
        log::info!("tune: {} validation {:?} {:.4}", c.combo, cfg.tune.metric, c.value);
    }
    let universal = combine(&scores, &weights.get(Combo::ActIntCo).unwrap().weights)?;
    let pop = score_tasks(&MostPop::new(&f.ds), &valid, exec)?;
    weights.mostpop_eta = Some(stage("tune", tune_eta(&valid, &universal, &pop, &cfg.tune, exec))?.0);
    bundle.weights = Some(weights);
    stage("save bundle", bundle.save(bundle_dir))?;
    Ok(Trained { bundle, cached: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlendWith {
    MostPop,
    MfBpr,
}

#[derive(Debug, Clone)]
pub struct EvaluateRequest {
    pub mode: Mode,
    pub bundle_dir: PathBuf,
    pub target_dir: PathBuf,
    pub blend: Option<BlendWith>,
    /// Overrides the configured eta grid for in-domain blends.
    pub eta_grid: Option<Vec<f64>>,
    pub force: bool,
    /// Defaults to `<target>/reports/<mode>`.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Evaluated {
    pub reports: Vec<MetricReport>,
    /// Optimizer steps taken on this thread while scoring the bundle.
    pub optimizer_steps: u64,
    pub eta: Option<f64>,
    pub out_dir: PathBuf,
}

impl Evaluated {
    pub fn report(&self, scorer: &str) -> Option<&MetricReport> {
        self.reports.iter().find(|r| r.scorer == scorer)
    }
}

fn check_chain(req: &EvaluateRequest, bundle: &ScorerBundle, meta: &DatasetMeta, features: &FeatureSet) -> Result<()> {
    let b = &bundle.meta;
    let problem = match req.mode {
        Mode::InDomain if meta.config_hash != b.dataset_hash => Some("target is not the dataset the bundle was trained on".to_string()),
        Mode::InDomain if features_hash(features) != b.features_hash => Some("target features differ from the training features".to_string()),
        Mode::ZeroShotInDomain if b.source_hash.as_deref() != Some(meta.source_hash.as_str()) => {
            Some("target is not a partition of the bundle's source dataset".to_string())
        }
        Mode::ZeroShotInDomain if meta.config_hash == b.dataset_hash => Some("target is the bundle's own training dataset".to_string()),
        Mode::ZeroShotInDomain if meta.partition != Some(Partition::Unseen) => Some("target is not an unseen partition".to_string()),
        Mode::ZeroShotCrossDomain if b.source_hash.as_deref() == Some(meta.source_hash.as_str()) => {
            Some("target comes from the bundle's source dataset".to_string())
        }
        _ => None,
    };
    let problem = problem.or_else(|| {
        (req.mode.is_zero_shot() && config_hash(&features.manifest.config) != b.feature_config_hash)
            .then(|| "target features were built with a different feature configuration".to_string())
    });
    match problem {
        Some(p) if req.force => {
            log::warn!("{p}; continuing because of --force");
            Ok(())
        }
        Some(p) => Err(Error::ChainMismatch(p)),
        None => Ok(()),
    }
}

/// Scores the target's test tasks with every tuned family combination,
/// MostPop and an optional blend, for every configured seed.
///
/// The bundle directory is only read.
pub fn evaluate(req: &EvaluateRequest, cfg: &ExperimentConfig, exec: Exec) -> Result<Evaluated> {
    let bundle = stage("load bundle", ScorerBundle::load(&req.bundle_dir))?;
    let weights = bundle
        .weights
        .clone()
        .ok_or_else(|| Error::Config("bundle has no tuned weights; rerun train".into()))?;
    if req.mode.is_zero_shot() && req.blend == Some(BlendWith::MfBpr) {
        return Err(Error::ColdEntity("MF-BPR blend requested in a zero-shot mode".into()));
    }
    let out_dir = req
        .out_dir
        .clone()
        .unwrap_or_else(|| req.target_dir.join("reports").join(req.mode.name()));
    if out_dir.starts_with(&req.bundle_dir) {
        return Err(Error::Config("reports may not be written inside the bundle directory".into()));
    }
    let f = featurize(&req.target_dir, &cfg.features, exec)?;
    for (family, &k) in &bundle.ks() {
        let got = f.features.tables.get(family).map_or(0, |t| t.k);
        if got != k {
            return Err(Error::IncompatibleFeatures {
                family: family.to_string(),
                expected: k,
                got,
            });
        }
    }
    check_chain(req, &bundle, &f.meta, &f.features)?;

    let steps_before = optimizer_steps();
    let act_int_co = weights.get(Combo::ActIntCo).unwrap().weights;
    let pop = MostPop::new(&f.ds);
    let mf = match req.blend {
        Some(BlendWith::MfBpr) => Some(stage("mf-bpr", train_mf_bpr(&f.ds, &cfg.mfbpr, exec))?),
        _ => None,
    };
    let mf_scorer = mf.as_ref().map(|m| m.scorer_for(&f.ds));
    let external: Option<(&dyn Scorer, &str)> = match req.blend {
        Some(BlendWith::MostPop) => Some((&pop, "MostPop")),
        Some(BlendWith::MfBpr) => mf_scorer.as_ref().map(|s| (s as &dyn Scorer, "MF-BPR")),
        None => None,
    };
    let eta = match external {
        None => None,
        Some(_) if req.mode.is_zero_shot() => Some(
            weights
                .mostpop_eta
                .ok_or_else(|| Error::Config("bundle has no tuned MostPop eta".into()))?,
        ),
        Some((scorer, _)) => {
            let tune = TuneConfig {
                eta_grid: req.eta_grid.clone().unwrap_or_else(|| cfg.tune.eta_grid.clone()),
                ..cfg.tune.clone()
            };
            let valid = stage("tune eta", build_tasks(&f.ds, Split::Valid, cfg.train.seed))?.tasks;
            let uni = combine(&family_scores(&bundle, &f.features, &valid, exec)?, &act_int_co)?;
            let ext = score_tasks(scorer, &valid, exec)?;
            let (eta, value) = stage("tune eta", tune_eta(&valid, &uni, &ext, &tune, exec))?;
            log::info!("blend: eta {eta} reaches validation {:?} {value:.4}", tune.metric);
            Some(eta)
        }
    };

    let mut rows: BTreeMap<String, (usize, Vec<SeedResult>)> = BTreeMap::new();
    let mut push = |name: String, order: usize, r: SeedResult| rows.entry(name).or_insert((order, Vec::new())).1.push(r);
    for &seed in &cfg.seeds {
        let set = stage("tasks", build_tasks(&f.ds, Split::Test, seed))?;
        let scores = family_scores(&bundle, &f.features, &set.tasks, exec)?;
        for (i, c) in weights.combos.iter().enumerate() {
            let agg = evaluate_scores(&set.tasks, &combine(&scores, &c.weights)?)?;
            push(c.combo.label().to_string(), i, SeedResult::new(seed, agg, set.skipped));
        }
        let pop_scores = score_tasks(&pop, &set.tasks, exec)?;
        push("MostPop".into(), 100, SeedResult::new(seed, evaluate_scores(&set.tasks, &pop_scores)?, set.skipped));
        if let (Some((scorer, name)), Some(eta)) = (external, eta) {
            let ext = if name == "MostPop" { pop_scores.clone() } else { score_tasks(scorer, &set.tasks, exec)? };
            if name != "MostPop" {
                push(name.to_string(), 101, SeedResult::new(seed, evaluate_scores(&set.tasks, &ext)?, set.skipped));
            }
            let uni = combine(&scores, &act_int_co)?;
            let blended = blend_lists(&uni, &ext, eta, cfg.tune.raw_blend);
            push(
                format!("{}+{name}", Combo::ActIntCo.label()),
                102,
                SeedResult::new(seed, evaluate_scores(&set.tasks, &blended)?, set.skipped),
            );
        }
    }
    let optimizer_steps = optimizer_steps() - steps_before;
    let mut ordered: Vec<(usize, String, Vec<SeedResult>)> = rows.into_iter().map(|(k, (o, v))| (o, k, v)).collect();
    ordered.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    let reports: Vec<MetricReport> = ordered.into_iter().map(|(_, k, v)| MetricReport::new(k, v)).collect();

    let mut chain = BTreeMap::new();
    chain.insert("dataset".to_string(), f.meta.config_hash.clone());
    chain.insert("features".to_string(), features_hash(&f.features));
    chain.insert("model".to_string(), bundle.meta.chain_hash.clone());
    chain.insert("weights".to_string(), config_hash(&weights));
    chain.insert("mode".to_string(), req.mode.name().to_string());
    stage("write report", MetricReport::write_all(&out_dir, &reports, &chain))?;
    Ok(Evaluated {
        reports,
        optimizer_steps,
        eta,
        out_dir,
    })
}
