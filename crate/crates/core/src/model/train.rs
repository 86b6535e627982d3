use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Triple, TwinTower};
use super::Adam;
use crate::dataset::{InteractionDataset, Split};
use crate::error::{Error, Result};
use crate::eval::{build_tasks, evaluate_scores, sample_negative, RankingTask};
use crate::exec::Exec;
use crate::features::FeatureTable;
use crate::seed::{self, stream};

pub const MAX_EPOCHS: usize = 25;
const GRAD_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub negatives_per_positive: usize,
    /// Epochs without validation AUC improvement before stopping.
    pub patience: usize,
    /// Output sizes of the tower layers.
    pub hidden: Vec<usize>,
    /// Apply the activation after the last layer too.
    pub final_activation: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: MAX_EPOCHS,
            batch_size: 1024,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            negatives_per_positive: 1,
            patience: 3,
            hidden: vec![64, 64, 64],
            final_activation: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs > MAX_EPOCHS {
            return Err(Error::Config(format!("epochs must be at most {MAX_EPOCHS}")));
        }
        if self.batch_size == 0 || self.negatives_per_positive == 0 || self.hidden.is_empty() {
            return Err(Error::Config("batch_size, negatives_per_positive and hidden must be non-empty".into()));
        }
        if !(self.lr >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config("invalid optimizer settings".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// Epoch (0-based) whose parameters were kept.
    pub best_epoch: Option<usize>,
    pub best_val_auc: Option<f64>,
    pub losses: Vec<f64>,
    pub val_aucs: Vec<f64>,
    pub optimizer_steps: u64,
}

pub(crate) fn check_table(table: &FeatureTable, ds: &InteractionDataset) -> Result<()> {
    if table.n_users != ds.n_users() || table.n_items != ds.n_items() {
        return Err(Error::Data(format!(
            "{} features cover {}x{} nodes, dataset has {}x{}",
            table.family,
            table.n_users,
            table.n_items,
            ds.n_users(),
            ds.n_items()
        )));
    }
    Ok(())
}

/// Validation AUC of towers on fixed tasks.
pub(crate) fn tower_auc(towers: &TwinTower, table: &FeatureTable, tasks: &[RankingTask], exec: Exec) -> Result<f64> {
    let scorer = super::TowerScorer::new(towers, table, exec);
    let scores: Vec<Vec<f64>> = exec.map_slice(tasks, |t| scorer.scores(t.user, &t.candidates()));
    Ok(evaluate_scores(tasks, &scores)?.metrics.auc)
}

/// BPR training of one family's twin towers on the train split with Adam,
/// keeping the parameters of the epoch with the best validation AUC.
///
/// Gradients are summed over fixed chunks of a batch and reduced in chunk
/// order, so parallel and sequential runs are bit-identical.
pub fn train_towers(
    table: &FeatureTable,
    ds: &InteractionDataset,
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<(TwinTower, TrainReport)> {
    cfg.validate()?;
    check_table(table, ds)?;
    let tag = table.family.tag() as u64;
    let mut rng = seed::rng(cfg.seed, &[stream::MODEL_INIT, tag]);
    let mut towers = TwinTower::new(table.k, &cfg.hidden, Activation::Tanh, cfg.final_activation, &mut rng)?;
    let valid = if ds.edge_ids_in(Split::Valid).is_empty() {
        Vec::new()
    } else {
        build_tasks(ds, Split::Valid, cfg.seed)?.tasks
    };
    let train = ds.edge_ids_in(Split::Train);
    if train.is_empty() {
        return Err(Error::Data("no train interactions".into()));
    }
    let mut params = towers.params_concat();
    let mut adam = Adam::new(params.len(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    let mut report = TrainReport::default();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0;

    for epoch in 0..cfg.epochs {
        let mut rng = seed::rng(cfg.seed, &[stream::MODEL_SHUFFLE, tag, epoch as u64]);
        let mut order = train.clone();
        order.shuffle(&mut rng);
        let mut triples = Vec::with_capacity(order.len() * cfg.negatives_per_positive);
        for &e in &order {
            let (u, p) = ds.edges()[e as usize];
            for _ in 0..cfg.negatives_per_positive {
                if let Some(n) = sample_negative(ds, u as usize, &mut rng) {
                    triples.push((u, p, n));
                }
            }
        }
        let mut epoch_loss = 0.0;
        for batch in triples.chunks(cfg.batch_size) {
            let chunks: Vec<&[(u32, u32, u32)]> = batch.chunks(GRAD_CHUNK).collect();
            let parts = exec.map_slice(&chunks, |chunk| {
                let rows: Vec<Triple> = chunk
                    .iter()
                    .map(|&(u, p, n)| (table.user(u as usize), table.item(p as usize), table.item(n as usize)))
                    .collect();
                let mut g = vec![0.0; params.len()];
                let l = towers.bpr_sum_and_grad(&rows, &mut g);
                (l, g)
            });
            let mut grad = vec![0.0; params.len()];
            let mut loss = 0.0;
            for (l, g) in parts {
                loss += l;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "{} training diverged in epoch {epoch} (loss {loss})",
                    table.family
                )));
            }
            epoch_loss += loss;
            adam.step(&mut params, &grad);
            towers.set_params(&params);
        }
        report.losses.push(epoch_loss / triples.len().max(1) as f64);
        report.epochs_run = epoch + 1;
        if valid.is_empty() {
            continue;
        }
        let auc = tower_auc(&towers, table, &valid, exec)?;
        log::info!("{} epoch {epoch}: loss {:.4}, validation auc {auc:.4}", table.family, report.losses[epoch]);
        report.val_aucs.push(auc);
        if best.as_ref().is_none_or(|(b, _)| auc > *b) {
            best = Some((auc, params.clone()));
            report.best_epoch = Some(epoch);
            report.best_val_auc = Some(auc);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    if let Some((_, p)) = best {
        params = p;
    } else if cfg.epochs > 0 {
        report.best_epoch = Some(report.epochs_run - 1);
    }
    // stored as f32 on disk, so keep the in-memory model on the same grid
    params.iter_mut().for_each(|p| *p = *p as f32 as f64);
    towers.set_params(&params);
    report.optimizer_steps = adam.steps();
    Ok((towers, report))
}
