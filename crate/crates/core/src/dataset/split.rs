use rand::seq::SliceRandom;

use super::{InteractionDataset, Partition, Split};
use crate::error::{Error, Result};
use crate::seed::{self, stream};

/// Randomly split users and items into seen/unseen halves, keep only
/// seen-seen and unseen-unseen edges, and re-apply the k-core filter to each
/// half. Seen gets `floor(seen_fraction * n)` users and items.
pub fn partition_seen_unseen(
    ds: &InteractionDataset,
    seen_fraction: f64,
    rng_seed: u64,
    k: usize,
) -> Result<(InteractionDataset, InteractionDataset)> {
    if !(seen_fraction > 0.0 && seen_fraction < 1.0) {
        return Err(Error::Config(format!(
            "seen fraction must lie in (0, 1), got {seen_fraction}"
        )));
    }
    let seen_users = pick_seen(ds.n_users(), seen_fraction, rng_seed, stream::PARTITION_USERS);
    let seen_items = pick_seen(ds.n_items(), seen_fraction, rng_seed, stream::PARTITION_ITEMS);

    let (mut seen, mut unseen) = (Vec::new(), Vec::new());
    for &(u, v) in ds.edges() {
        match (seen_users[u as usize], seen_items[v as usize]) {
            (true, true) => seen.push((u, v)),
            (false, false) => unseen.push((u, v)),
            _ => {}
        }
    }
    let half = |edges: Vec<(u32, u32)>, tag: Partition| -> Result<InteractionDataset> {
        let name = match tag {
            Partition::Seen => "seen",
            Partition::Unseen => "unseen",
        };
        if edges.is_empty() {
            return Err(Error::Data(format!("{name} partition has no interactions")));
        }
        let part = ds.restrict(&edges, Some(tag))?;
        part.k_core(k).map_err(|e| match e {
            Error::KCoreEliminated(k) => {
                Error::Data(format!("{name} partition eliminated by {k}-core"))
            }
            other => other,
        })
    };
    Ok((half(seen, Partition::Seen)?, half(unseen, Partition::Unseen)?))
}

fn pick_seen(n: usize, fraction: f64, rng_seed: u64, label: u64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(rng_seed, &[label]));
    let n_seen = (fraction * n as f64).floor() as usize;
    let mut seen = vec![false; n];
    for &i in &order[..n_seen] {
        seen[i] = true;
    }
    seen
}

/// Per-user split sizes for a user with `n` interactions:
/// `(train, valid, test)` where `train` excludes the validation edges.
///
/// Train-plus-valid is `round(train_fraction * n)` clamped to `[1, n - 1]`;
/// valid is `round(valid_fraction * that)` clamped so one train edge remains.
pub fn split_counts(n: usize, train_fraction: f64, valid_fraction: f64) -> (usize, usize, usize) {
    debug_assert!(n >= 2);
    let fit = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let valid = ((valid_fraction * fit as f64).round() as usize).min(fit - 1);
    (fit - valid, valid, n - fit)
}

/// Tag every edge as train, valid or test, independently per user.
pub fn split_per_user(
    ds: &InteractionDataset,
    train_fraction: f64,
    valid_fraction_of_train: f64,
    rng_seed: u64,
) -> Result<InteractionDataset> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if !(0.0..1.0).contains(&valid_fraction_of_train) {
        return Err(Error::Config(format!(
            "validation fraction must lie in [0, 1), got {valid_fraction_of_train}"
        )));
    }
    let mut splits = vec![Split::Test; ds.n_edges()];
    let users = &ds.graph().users;
    for u in 0..ds.n_users() {
        let mut eids: Vec<u32> = users.edge_ids(u).to_vec();
        let n = eids.len();
        if n < 2 {
            return Err(Error::Data(format!(
                "user {} has {n} interaction(s); need at least 2 to split",
                ds.user_ids()[u]
            )));
        }
        eids.shuffle(&mut seed::rng(rng_seed, &[stream::SPLIT, u as u64]));
        let (train, valid, _) = split_counts(n, train_fraction, valid_fraction_of_train);
        for (pos, &e) in eids.iter().enumerate() {
            splits[e as usize] = if pos < valid {
                Split::Valid
            } else if pos < valid + train {
                Split::Train
            } else {
                Split::Test
            };
        }
    }
    Ok(ds.clone().with_splits(splits))
}
