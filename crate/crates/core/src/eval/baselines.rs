use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{build_tasks, evaluate, Scorer};
use crate::dataset::{InteractionDataset, Split};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{sigmoid, softplus, Adam};
use crate::seed::{self, stream, Rng};

/// Scores every item by its train interaction count.
#[derive(Debug, Clone)]
pub struct MostPop {
    degree: Vec<f64>,
}

impl MostPop {
    pub fn new(ds: &InteractionDataset) -> Self {
        let g = ds.train_graph();
        MostPop {
            degree: (0..ds.n_items()).map(|v| g.items.degree(v) as f64).collect(),
        }
    }
}

impl Scorer for MostPop {
    fn name(&self) -> String {
        "mostpop".into()
    }

    fn score(&self, _user: u32, items: &[u32]) -> Result<Vec<f64>> {
        Ok(items.iter().map(|&v| self.degree[v as usize]).collect())
    }
}

/// Uniform item outside the user's full history, or `None` if there is none.
pub(crate) fn sample_negative(ds: &InteractionDataset, user: usize, rng: &mut Rng) -> Option<u32> {
    let n = ds.n_items();
    let history = ds.user_history(user);
    if history.len() >= n {
        return None;
    }
    loop {
        let v = rng.random_range(0..n as u32);
        if history.binary_search(&v).is_err() {
            return Some(v);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MfOptimizer {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfBprConfig {
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub l2: f64,
    pub optimizer: MfOptimizer,
    pub init_scale: f64,
    /// Epochs without validation AUC improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for MfBprConfig {
    fn default() -> Self {
        MfBprConfig {
            dim: 64,
            epochs: 25,
            batch_size: 1024,
            lr: 0.01,
            l2: 1e-5,
            optimizer: MfOptimizer::Adam,
            init_scale: 0.1,
            patience: 3,
            seed: 0,
        }
    }
}

/// Matrix factorization with per-id embeddings trained on the BPR loss.
#[derive(Debug, Clone, PartialEq)]
pub struct MfBpr {
    pub dim: usize,
    pub l2: f64,
    pub user_emb: Vec<f64>,
    pub item_emb: Vec<f64>,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
}

impl MfBpr {
    pub fn init(ds: &InteractionDataset, cfg: &MfBprConfig) -> Self {
        let mut rng = seed::rng(cfg.seed, &[stream::MF_BPR]);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n * cfg.dim)
                .map(|_| rng.random_range(-cfg.init_scale..cfg.init_scale))
                .collect()
        };
        let user_emb = draw(ds.n_users());
        let item_emb = draw(ds.n_items());
        MfBpr {
            dim: cfg.dim,
            l2: cfg.l2,
            user_emb,
            item_emb,
            user_ids: ds.user_ids().to_vec(),
            item_ids: ds.item_ids().to_vec(),
        }
    }

    fn user(&self, u: usize) -> &[f64] {
        &self.user_emb[u * self.dim..(u + 1) * self.dim]
    }

    fn item(&self, v: usize) -> &[f64] {
        &self.item_emb[v * self.dim..(v + 1) * self.dim]
    }

    pub fn raw_score(&self, u: usize, v: usize) -> f64 {
        self.user(u).iter().zip(self.item(v)).map(|(a, b)| a * b).sum()
    }

    /// Mean over `(user, positive, negative)` triples of the BPR loss plus
    /// `l2 / 2` times the squared norms of the touched rows, with gradients
    /// added into `grad_user` and `grad_item`.
    pub fn loss_and_grad(&self, triples: &[(u32, u32, u32)], grad_user: &mut [f64], grad_item: &mut [f64]) -> f64 {
        let d = self.dim;
        let scale = 1.0 / triples.len().max(1) as f64;
        let mut loss = 0.0;
        for &(u, p, n) in triples {
            let (u, p, n) = (u as usize, p as usize, n as usize);
            let (pu, qp, qn) = (self.user(u), self.item(p), self.item(n));
            let diff = self.raw_score(u, p) - self.raw_score(u, n);
            let norms: f64 = pu.iter().chain(qp).chain(qn).map(|x| x * x).sum();
            loss += softplus(-diff) + 0.5 * self.l2 * norms;
            let g = -sigmoid(-diff) * scale;
            for k in 0..d {
                grad_user[u * d + k] += g * (qp[k] - qn[k]) + self.l2 * scale * pu[k];
                grad_item[p * d + k] += g * pu[k] + self.l2 * scale * qp[k];
                grad_item[n * d + k] += -g * pu[k] + self.l2 * scale * qn[k];
            }
        }
        loss * scale
    }

    /// Scorer over the ids of `target`; users or items the model never saw
    /// make `score` fail.
    pub fn scorer_for(&self, target: &InteractionDataset) -> MfScorer<'_> {
        let users: HashMap<&str, u32> = self.user_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i as u32)).collect();
        let items: HashMap<&str, u32> = self.item_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i as u32)).collect();
        MfScorer {
            model: self,
            users: target.user_ids().iter().map(|s| users.get(s.as_str()).copied()).collect(),
            items: target.item_ids().iter().map(|s| items.get(s.as_str()).copied()).collect(),
        }
    }
}

pub struct MfScorer<'a> {
    model: &'a MfBpr,
    users: Vec<Option<u32>>,
    items: Vec<Option<u32>>,
}

impl Scorer for MfScorer<'_> {
    fn name(&self) -> String {
        "mfbpr".into()
    }

    fn score(&self, user: u32, items: &[u32]) -> Result<Vec<f64>> {
        let cold = |what: &str, idx: u32| Error::ColdEntity(format!("{what} index {idx}"));
        let u = self.users[user as usize].ok_or_else(|| cold("user", user))?;
        items
            .iter()
            .map(|&v| {
                let i = self.items[v as usize].ok_or_else(|| cold("item", v))?;
                Ok(self.model.raw_score(u as usize, i as usize))
            })
            .collect()
    }
}

/// Trains MF-BPR on the train split, early stopping on validation AUC when
/// the dataset has a validation split.
pub fn train_mf_bpr(ds: &InteractionDataset, cfg: &MfBprConfig, exec: Exec) -> Result<MfBpr> {
    if cfg.dim == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("mf-bpr dim and batch_size must be positive".into()));
    }
    let mut model = MfBpr::init(ds, cfg);
    let valid = if ds.edge_ids_in(Split::Valid).is_empty() {
        Vec::new()
    } else {
        build_tasks(ds, Split::Valid, cfg.seed)?.tasks
    };
    let train = ds.edge_ids_in(Split::Train);
    let (nu, ni) = (model.user_emb.len(), model.item_emb.len());
    let mut adam = Adam::new(nu + ni, cfg.lr, 0.9, 0.999, 1e-8);
    let mut params = Vec::new();
    let mut best: Option<(f64, MfBpr)> = None;
    let mut since_best = 0;
    for epoch in 0..cfg.epochs {
        let mut rng = seed::rng(cfg.seed, &[stream::MF_BPR, 1, epoch as u64]);
        let mut order = train.clone();
        order.shuffle(&mut rng);
        let triples: Vec<(u32, u32, u32)> = order
            .iter()
            .filter_map(|&e| {
                let (u, p) = ds.edges()[e as usize];
                sample_negative(ds, u as usize, &mut rng).map(|n| (u, p, n))
            })
            .collect();
        for batch in triples.chunks(cfg.batch_size) {
            let mut gu = vec![0.0; nu];
            let mut gi = vec![0.0; ni];
            let loss = model.loss_and_grad(batch, &mut gu, &mut gi);
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("mf-bpr loss diverged in epoch {epoch}")));
            }
            match cfg.optimizer {
                MfOptimizer::Adam => {
                    params.clear();
                    params.extend_from_slice(&model.user_emb);
                    params.extend_from_slice(&model.item_emb);
                    gu.extend_from_slice(&gi);
                    adam.step(&mut params, &gu);
                    model.user_emb.copy_from_slice(&params[..nu]);
                    model.item_emb.copy_from_slice(&params[nu..]);
                }
                MfOptimizer::Sgd => {
                    for (p, g) in model.user_emb.iter_mut().zip(&gu) {
                        *p -= cfg.lr * g;
                    }
                    for (p, g) in model.item_emb.iter_mut().zip(&gi) {
                        *p -= cfg.lr * g;
                    }
                }
            }
        }
        if valid.is_empty() {
            continue;
        }
        let auc = evaluate(&model.scorer_for(ds), &valid, exec)?.metrics.auc;
        log::debug!("mf-bpr epoch {epoch}: validation auc {auc:.4}");
        if best.as_ref().is_none_or(|(b, _)| auc > *b) {
            best = Some((auc, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok(best.map_or(model, |(_, m)| m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Interaction;

    fn rows(pairs: &[(&str, &str)]) -> Vec<Interaction> {
        pairs
            .iter()
            .map(|(u, v)| Interaction {
                user: u.to_string(),
                item: v.to_string(),
                rating: None,
                timestamp: None,
            })
            .collect()
    }

    #[test]
    fn mostpop_ranks_by_degree() {
        let mut pairs = Vec::new();
        let users: Vec<String> = (0..10).map(|u| format!("u{u}")).collect();
        for u in &users {
            pairs.push((u.as_str(), "hot"));
        }
        for u in &users[..3] {
            pairs.push((u.as_str(), "cold"));
        }
        let ds = InteractionDataset::from_interactions(&rows(&pairs)).unwrap();
        let mp = MostPop::new(&ds);
        let s = mp.score(0, &[0, 1]).unwrap();
        assert_eq!(s, [10.0, 3.0]);
    }

    fn side_mut(m: &mut MfBpr, side: usize) -> &mut Vec<f64> {
        if side == 0 { &mut m.user_emb } else { &mut m.item_emb }
    }

    #[test]
    fn mf_gradient_matches_finite_differences() {
        let pairs: Vec<(String, String)> = (0..6).flat_map(|u| (0..3).map(move |j| (format!("u{u}"), format!("i{}", (u + j) % 7)))).collect();
        let refs: Vec<(&str, &str)> = pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let ds = InteractionDataset::from_interactions(&rows(&refs)).unwrap();
        let cfg = MfBprConfig { dim: 4, l2: 0.05, init_scale: 0.5, seed: 9, ..Default::default() };
        let mut m = MfBpr::init(&ds, &cfg);
        let triples = [(0, 0, 5), (1, 2, 6), (0, 1, 5), (3, 4, 0), (5, 6, 2)];
        let mut gu = vec![0.0; m.user_emb.len()];
        let mut gi = vec![0.0; m.item_emb.len()];
        m.loss_and_grad(&triples, &mut gu, &mut gi);
        let h = 1e-6;
        let mut scratch = (vec![0.0; gu.len()], vec![0.0; gi.len()]);
        for side in 0..2 {
            let n = if side == 0 { gu.len() } else { gi.len() };
            for i in 0..n {
                let orig = side_mut(&mut m, side)[i];
                side_mut(&mut m, side)[i] = orig + h;
                let up = m.loss_and_grad(&triples, &mut scratch.0, &mut scratch.1);
                side_mut(&mut m, side)[i] = orig - h;
                let down = m.loss_and_grad(&triples, &mut scratch.0, &mut scratch.1);
                side_mut(&mut m, side)[i] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = if side == 0 { gu[i] } else { gi[i] };
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                assert!(rel < 1e-4 || (fd - an).abs() < 1e-9, "side {side} param {i}: fd {fd} analytic {an}");
            }
        }
    }

    #[test]
    fn cold_ids_are_rejected() {
        let a = InteractionDataset::from_interactions(&rows(&[("a", "x"), ("b", "y")])).unwrap();
        let b = InteractionDataset::from_interactions(&rows(&[("a", "x"), ("c", "z")])).unwrap();
        let m = MfBpr::init(&a, &MfBprConfig { dim: 2, ..Default::default() });
        let s = m.scorer_for(&b);
        assert!(s.score(0, &[0]).is_ok());
        assert!(matches!(s.score(1, &[0]), Err(Error::ColdEntity(_))));
        assert!(matches!(s.score(0, &[1]), Err(Error::ColdEntity(_))));
    }
}
