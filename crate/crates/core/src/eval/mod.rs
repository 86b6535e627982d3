//! Sampled-ranking evaluation: one positive against 99 sampled unobserved
//! items, per-user averaging, repetition over seeds, and baseline scorers.

mod baselines;
mod report;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{InteractionDataset, Split};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::seed::{self, stream};

pub(crate) use baselines::sample_negative;
pub use baselines::{train_mf_bpr, MfBpr, MfBprConfig, MfOptimizer, MostPop};
pub use report::{MetricReport, SeedResult};

pub const N_NEGATIVES: usize = 99;
pub const N_CANDIDATES: usize = N_NEGATIVES + 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingTask {
    pub user: u32,
    pub positive: u32,
    pub negatives: Vec<u32>,
}

impl RankingTask {
    /// Candidate list with the positive first.
    pub fn candidates(&self) -> Vec<u32> {
        std::iter::once(self.positive).chain(self.negatives.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct TaskSet {
    pub tasks: Vec<RankingTask>,
    /// Test edges whose user has fewer than 99 unobserved items.
    pub skipped: usize,
}

/// One task per edge of `split`, with 99 negatives drawn uniformly without
/// replacement from items outside the user's full history.
pub fn build_tasks(ds: &InteractionDataset, split: Split, rng_seed: u64) -> Result<TaskSet> {
    let ids = ds.edge_ids_in(split);
    if ids.is_empty() {
        return Err(Error::Data(format!("{split:?} split is empty")));
    }
    let n_items = ds.n_items();
    let mut out = TaskSet::default();
    for e in ids {
        let (u, v) = ds.edges()[e as usize];
        let history = ds.user_history(u as usize);
        let pool = n_items - history.len();
        if pool < N_NEGATIVES {
            out.skipped += 1;
            continue;
        }
        let mut rng = seed::rng(rng_seed, &[stream::TASKS, split as u64, e as u64]);
        let negatives = if pool <= 4 * N_NEGATIVES {
            let mut free: Vec<u32> = (0..n_items as u32).filter(|x| history.binary_search(x).is_err()).collect();
            let (chosen, _) = free.partial_shuffle(&mut rng, N_NEGATIVES);
            chosen.to_vec()
        } else {
            let mut chosen = Vec::with_capacity(N_NEGATIVES);
            while chosen.len() < N_NEGATIVES {
                let x = rng.random_range(0..n_items as u32);
                if history.binary_search(&x).is_err() && !chosen.contains(&x) {
                    chosen.push(x);
                }
            }
            chosen
        };
        out.tasks.push(RankingTask {
            user: u,
            positive: v,
            negatives,
        });
    }
    if out.skipped > 0 {
        log::warn!("skipped {} {split:?} task(s): fewer than {N_NEGATIVES} unobserved items", out.skipped);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub auc: f64,
    pub recall_at_10: f64,
    pub ndcg_at_10: f64,
}

impl Metrics {
    fn add(&mut self, o: &Metrics) {
        self.auc += o.auc;
        self.recall_at_10 += o.recall_at_10;
        self.ndcg_at_10 += o.ndcg_at_10;
    }

    fn scale(mut self, s: f64) -> Metrics {
        self.auc *= s;
        self.recall_at_10 *= s;
        self.ndcg_at_10 *= s;
        self
    }

    pub fn mean(items: &[Metrics]) -> Metrics {
        let mut m = Metrics::default();
        for x in items {
            m.add(x);
        }
        m.scale(1.0 / items.len().max(1) as f64)
    }

    pub fn get(&self, metric: MetricKind) -> f64 {
        match metric {
            MetricKind::Auc => self.auc,
            MetricKind::Recall10 => self.recall_at_10,
            MetricKind::Ndcg10 => self.ndcg_at_10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    #[default]
    Auc,
    Recall10,
    Ndcg10,
}

/// 1-based rank of `scores[pos]`: higher scores first, ties by ascending item.
pub fn rank_of(scores: &[f64], items: &[u32], pos: usize) -> usize {
    let (sp, ip) = (scores[pos], items[pos]);
    1 + scores
        .iter()
        .zip(items)
        .filter(|&(&s, &i)| s > sp || (s == sp && i < ip))
        .count()
}

/// AUC, Recall@10 and NDCG@10 of the candidate at `pos` in a list of 100.
pub fn rank_metrics(scores: &[f64], items: &[u32], pos: usize) -> Result<Metrics> {
    if scores.len() != N_CANDIDATES || items.len() != N_CANDIDATES {
        return Err(Error::DimensionMismatch {
            expected: N_CANDIDATES,
            got: scores.len(),
        });
    }
    if pos >= N_CANDIDATES {
        return Err(Error::Data(format!("positive position {pos} out of range")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let r = rank_of(scores, items, pos);
    let hit = r <= 10;
    Ok(Metrics {
        auc: (N_CANDIDATES - r) as f64 / N_NEGATIVES as f64,
        recall_at_10: if hit { 1.0 } else { 0.0 },
        ndcg_at_10: if hit { 1.0 / ((r + 1) as f64).log2() } else { 0.0 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub metrics: Metrics,
    pub n_users: usize,
    pub n_tasks: usize,
}

/// Mean within each user, then unweighted mean over users.
pub fn aggregate(tasks: &[RankingTask], per_task: &[Metrics]) -> Aggregate {
    let mut by_user: BTreeMap<u32, Vec<Metrics>> = BTreeMap::new();
    for (t, m) in tasks.iter().zip(per_task) {
        by_user.entry(t.user).or_default().push(*m);
    }
    let user_means: Vec<Metrics> = by_user.values().map(|v| Metrics::mean(v)).collect();
    Aggregate {
        metrics: Metrics::mean(&user_means),
        n_users: by_user.len(),
        n_tasks: tasks.len(),
    }
}

/// Scores candidate items for a user. Higher is better.
pub trait Scorer: Sync {
    fn name(&self) -> String;
    fn score(&self, user: u32, items: &[u32]) -> Result<Vec<f64>>;
}

/// Candidate scores of every task, positive first.
pub fn score_tasks<S: Scorer + ?Sized>(scorer: &S, tasks: &[RankingTask], exec: Exec) -> Result<Vec<Vec<f64>>> {
    exec.map_slice(tasks, |t| scorer.score(t.user, &t.candidates()))
        .into_iter()
        .collect()
}

/// Aggregated metrics from precomputed candidate scores.
pub fn evaluate_scores(tasks: &[RankingTask], scores: &[Vec<f64>]) -> Result<Aggregate> {
    if tasks.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: tasks.len(),
            got: scores.len(),
        });
    }
    let per_task = tasks
        .iter()
        .zip(scores)
        .map(|(t, s)| rank_metrics(s, &t.candidates(), 0))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(tasks, &per_task))
}

pub fn evaluate<S: Scorer + ?Sized>(scorer: &S, tasks: &[RankingTask], exec: Exec) -> Result<Aggregate> {
    evaluate_scores(tasks, &score_tasks(scorer, tasks, exec)?)
}
