use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};

use num_traits::Float;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{EmbeddingTable, WalkConfig};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::seed::{self, stream};

/// One output-side target of a skip-gram tuple: the true context (label 1)
/// or a sampled negative (label 0).
pub struct SgnsTarget<'a, F> {
    pub vector: &'a [F],
    pub positive: bool,
}

fn log_sigmoid<F: Float>(x: F) -> F {
    if x >= F::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid<F: Float>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Loss `-ln s(h.c) - sum ln s(-h.n)` of one (center, context, negatives)
/// tuple, with gradients for the center input vector and every target's
/// output vector.
pub fn sgns_loss_and_grad<F: Float>(
    center: &[F],
    targets: &[SgnsTarget<'_, F>],
    grad_center: &mut [F],
    grad_targets: &mut [Vec<F>],
) -> F {
    grad_center.iter_mut().for_each(|g| *g = F::zero());
    let mut loss = F::zero();
    for (t, gt) in targets.iter().zip(grad_targets.iter_mut()) {
        let f = center
            .iter()
            .zip(t.vector)
            .fold(F::zero(), |acc, (&a, &b)| acc + a * b);
        let label = if t.positive { F::one() } else { F::zero() };
        loss = loss - if t.positive { log_sigmoid(f) } else { log_sigmoid(-f) };
        // d loss / d f = sigma(f) - label
        let g = sigmoid(f) - label;
        gt.resize(center.len(), F::zero());
        for ((gc, gto), (&c, &o)) in grad_center.iter_mut().zip(gt.iter_mut()).zip(center.iter().zip(t.vector)) {
            *gc = *gc + g * o;
            *gto = g * c;
        }
    }
    loss
}

trait Rows {
    fn load(&self, row: usize, buf: &mut [f32]);
    fn add_scaled(&mut self, row: usize, delta: &[f32], scale: f32);
}

struct Plain<'a>(&'a mut [f32]);

impl Rows for Plain<'_> {
    fn load(&self, row: usize, buf: &mut [f32]) {
        let d = buf.len();
        buf.copy_from_slice(&self.0[row * d..(row + 1) * d]);
    }
    fn add_scaled(&mut self, row: usize, delta: &[f32], scale: f32) {
        let d = delta.len();
        for (x, g) in self.0[row * d..(row + 1) * d].iter_mut().zip(delta) {
            *x += scale * g;
        }
    }
}

/// Shared parameters updated without locks. Concurrent read-modify-write
/// sequences may interleave and lose updates.
#[derive(Clone, Copy)]
struct Shared<'a>(&'a [AtomicU32]);

impl Rows for Shared<'_> {
    fn load(&self, row: usize, buf: &mut [f32]) {
        let d = buf.len();
        for (b, a) in buf.iter_mut().zip(&self.0[row * d..(row + 1) * d]) {
            *b = f32::from_bits(a.load(Ordering::Relaxed));
        }
    }
    fn add_scaled(&mut self, row: usize, delta: &[f32], scale: f32) {
        let d = delta.len();
        for (a, g) in self.0[row * d..(row + 1) * d].iter().zip(delta) {
            let x = f32::from_bits(a.load(Ordering::Relaxed)) + scale * g;
            a.store(x.to_bits(), Ordering::Relaxed);
        }
    }
}

struct Scratch {
    center: Vec<f32>,
    grad_center: Vec<f32>,
    rows: Vec<Vec<f32>>,
    grads: Vec<Vec<f32>>,
    ids: Vec<u32>,
}

impl Scratch {
    fn new(dim: usize, negatives: usize) -> Self {
        Scratch {
            center: vec![0.0; dim],
            grad_center: vec![0.0; dim],
            rows: vec![vec![0.0; dim]; negatives + 1],
            grads: vec![vec![0.0; dim]; negatives + 1],
            ids: Vec::with_capacity(negatives + 1),
        }
    }
}

struct Ctx<'a> {
    cfg: &'a WalkConfig,
    noise: &'a WeightedIndex<f64>,
    total_tokens: f64,
}

impl Ctx<'_> {
    fn lr_at(&self, processed: usize) -> f32 {
        let progress = processed as f64 / self.total_tokens.max(1.0);
        (self.cfg.learning_rate * (1.0 - progress).max(1e-4)) as f32
    }

    fn train_walk<R: Rows>(
        &self,
        walk: &[u32],
        input: &mut R,
        output: &mut R,
        lr: f32,
        rng: &mut seed::Rng,
        s: &mut Scratch,
    ) {
        let window = self.cfg.window;
        for (i, &c) in walk.iter().enumerate() {
            let lo = i.saturating_sub(window);
            let hi = (i + window).min(walk.len() - 1);
            for (j, &ctx) in walk.iter().enumerate().take(hi + 1).skip(lo) {
                if j == i {
                    continue;
                }
                s.ids.clear();
                s.ids.push(ctx);
                for _ in 0..self.cfg.negatives_per_positive {
                    let neg = self.noise.sample(rng) as u32;
                    if neg != ctx {
                        s.ids.push(neg);
                    }
                }
                input.load(c as usize, &mut s.center);
                for (k, &id) in s.ids.iter().enumerate() {
                    output.load(id as usize, &mut s.rows[k]);
                }
                let targets: Vec<SgnsTarget<'_, f32>> = s.ids[..]
                    .iter()
                    .enumerate()
                    .map(|(k, _)| SgnsTarget {
                        vector: &s.rows[k],
                        positive: k == 0,
                    })
                    .collect();
                sgns_loss_and_grad(&s.center, &targets, &mut s.grad_center, &mut s.grads[..s.ids.len()]);
                for (k, &id) in s.ids.iter().enumerate() {
                    output.add_scaled(id as usize, &s.grads[k], -lr);
                }
                input.add_scaled(c as usize, &s.grad_center, -lr);
            }
        }
    }
}

/// Skip-gram with negative sampling over `walks`. Negatives follow the
/// unigram distribution of walk tokens raised to 0.75; the learning rate
/// decays linearly. Returns the input vectors.
///
/// Sequential execution (or `hogwild = false`) is bit-reproducible for a
/// seed. Parallel Hogwild execution is not.
pub fn train_sgns(
    walks: &[Vec<u32>],
    cfg: &WalkConfig,
    n_users: usize,
    n_items: usize,
    exec: Exec,
) -> Result<EmbeddingTable> {
    cfg.validate()?;
    let n_nodes = n_users + n_items;
    let dim = cfg.dim;
    let mut counts = vec![0f64; n_nodes];
    for w in walks {
        for &n in w {
            counts[n as usize] += 1.0;
        }
    }
    let total_tokens: f64 = counts.iter().sum();
    let noise_weights: Vec<f64> = counts.iter().map(|c| c.powf(0.75)).collect();

    let mut rng = seed::rng(cfg.rng_seed, &[stream::SGNS]);
    let half = 0.5 / dim as f32;
    let mut input: Vec<f32> = (0..n_nodes * dim).map(|_| rng.random_range(-half..=half)).collect();
    let mut output = vec![0f32; n_nodes * dim];

    if total_tokens == 0.0 || cfg.epochs == 0 {
        return EmbeddingTable::new(dim, n_users, n_items, input);
    }
    let noise = WeightedIndex::new(&noise_weights).map_err(|e| Error::Numeric(format!("noise distribution: {e}")))?;
    let ctx = Ctx {
        cfg,
        noise: &noise,
        total_tokens: total_tokens * cfg.epochs as f64,
    };

    let hogwild = cfg.hogwild && exec.is_parallel();
    let mut order: Vec<usize> = (0..walks.len()).collect();
    if hogwild {
        let shared_in: Vec<AtomicU32> = input.iter().map(|x| AtomicU32::new(x.to_bits())).collect();
        let shared_out: Vec<AtomicU32> = output.iter().map(|x| AtomicU32::new(x.to_bits())).collect();
        let processed = AtomicUsize::new(0);
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let chunk = 64;
            let chunks: Vec<&[usize]> = order.chunks(chunk).collect();
            exec.map_range(chunks.len(), |ci| {
                let mut rng = seed::rng(cfg.rng_seed, &[stream::SGNS, epoch as u64 + 1, ci as u64]);
                let mut s = Scratch::new(dim, cfg.negatives_per_positive);
                let (mut inp, mut out) = (Shared(&shared_in), Shared(&shared_out));
                for &w in chunks[ci] {
                    let lr = ctx.lr_at(processed.load(Ordering::Relaxed));
                    ctx.train_walk(&walks[w], &mut inp, &mut out, lr, &mut rng, &mut s);
                    processed.fetch_add(walks[w].len(), Ordering::Relaxed);
                }
            });
        }
        input = shared_in.into_iter().map(|a| f32::from_bits(a.into_inner())).collect();
    } else {
        let mut s = Scratch::new(dim, cfg.negatives_per_positive);
        let mut processed = 0usize;
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for &w in &order {
                let lr = ctx.lr_at(processed);
                ctx.train_walk(&walks[w], &mut Plain(&mut input), &mut Plain(&mut output), lr, &mut rng, &mut s);
                processed += walks[w].len();
            }
        }
    }
    if input.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("SGNS diverged (non-finite embedding)".into()));
    }
    EmbeddingTable::new(dim, n_users, n_items, input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_embed::{generate_walks, NodeGraph};
    use crate::dataset::InteractionDataset;
    use rand::SeedableRng;

    fn rand_vec(rng: &mut seed::Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seed::Rng::seed_from_u64(5);
        for _ in 0..20 {
            let dim = 6;
            let center = rand_vec(&mut rng, dim);
            let vecs: Vec<Vec<f64>> = (0..4).map(|_| rand_vec(&mut rng, dim)).collect();
            let loss_at = |c: &[f64], v: &[Vec<f64>]| {
                let t: Vec<_> = v.iter().enumerate().map(|(k, x)| SgnsTarget { vector: x, positive: k == 0 }).collect();
                let mut gc = vec![0.0; dim];
                let mut gt = vec![Vec::new(); v.len()];
                sgns_loss_and_grad(c, &t, &mut gc, &mut gt)
            };
            let targets: Vec<_> = vecs.iter().enumerate().map(|(k, x)| SgnsTarget { vector: x, positive: k == 0 }).collect();
            let mut gc = vec![0.0; dim];
            let mut gt = vec![Vec::new(); 4];
            sgns_loss_and_grad(&center, &targets, &mut gc, &mut gt);
            let eps = 1e-5;
            let check = |analytic: f64, numeric: f64| {
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
                assert!(rel < 1e-4 || (analytic - numeric).abs() < 1e-9, "{analytic} vs {numeric}");
            };
            for d in 0..dim {
                let mut p = center.clone();
                let mut m = center.clone();
                p[d] += eps;
                m[d] -= eps;
                check(gc[d], (loss_at(&p, &vecs) - loss_at(&m, &vecs)) / (2.0 * eps));
                for k in 0..4 {
                    let mut vp = vecs.clone();
                    let mut vm = vecs.clone();
                    vp[k][d] += eps;
                    vm[k][d] -= eps;
                    check(gt[k][d], (loss_at(&center, &vp) - loss_at(&center, &vm)) / (2.0 * eps));
                }
            }
        }
    }

    #[test]
    fn small_step_lowers_tuple_loss() {
        let mut rng = seed::Rng::seed_from_u64(9);
        let center = rand_vec(&mut rng, 8);
        let vecs: Vec<Vec<f64>> = (0..3).map(|_| rand_vec(&mut rng, 8)).collect();
        let eval = |c: &[f64], v: &[Vec<f64>], gc: &mut Vec<f64>, gt: &mut Vec<Vec<f64>>| {
            let t: Vec<_> = v.iter().enumerate().map(|(k, x)| SgnsTarget { vector: x, positive: k == 0 }).collect();
            sgns_loss_and_grad(c, &t, gc, gt)
        };
        let (mut gc, mut gt) = (vec![0.0; 8], vec![Vec::new(); 3]);
        let before = eval(&center, &vecs, &mut gc, &mut gt);
        let lr = 0.01;
        let c2: Vec<f64> = center.iter().zip(&gc).map(|(x, g)| x - lr * g).collect();
        let v2: Vec<Vec<f64>> = vecs.iter().zip(&gt).map(|(v, g)| v.iter().zip(g).map(|(x, g)| x - lr * g).collect()).collect();
        let after = eval(&c2, &v2, &mut gc, &mut gt);
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn loss_is_stable_at_extremes() {
        let big = [50.0f64];
        let t = [SgnsTarget { vector: &big[..], positive: true }];
        let (mut gc, mut gt) = (vec![0.0], vec![Vec::new()]);
        let l = sgns_loss_and_grad(&[-50.0], &t, &mut gc, &mut gt);
        assert!(l.is_finite() && (l - 2500.0).abs() < 1e-6);
    }

    fn two_cluster_dataset() -> InteractionDataset {
        // 10 users and 10 items in two disjoint blocks of 5x5, bridged by one edge.
        let mut edges = Vec::new();
        for b in 0..2u32 {
            for u in 0..5 {
                for v in 0..5 {
                    edges.push((b * 5 + u, b * 5 + v));
                }
            }
        }
        edges.push((0, 5));
        let users = (0..10).map(|u| format!("u{u}")).collect();
        let items = (0..10).map(|v| format!("i{v}")).collect();
        InteractionDataset::from_parts(users, items, edges).unwrap()
    }

    fn cosine(a: &[f32], b: &[f32]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| (x * y) as f64).sum();
        let na: f64 = a.iter().map(|x| (x * x) as f64).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| (x * x) as f64).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    fn small_cfg() -> WalkConfig {
        WalkConfig {
            dim: 16,
            walk_length: 20,
            walks_per_node: 20,
            window: 3,
            epochs: 3,
            rng_seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn co_occurring_nodes_embed_closer() {
        let ds = two_cluster_dataset();
        let g = NodeGraph::from_bipartite(&ds.train_graph());
        let cfg = small_cfg();
        let (walks, _) = generate_walks(&g, &cfg, Exec::Sequential);
        let emb = train_sgns(&walks, &cfg, 10, 10, Exec::Sequential).unwrap();
        let block = |n: usize| if n < 10 { n / 5 } else { (n - 10) / 5 };
        let (mut inside, mut cross) = (Vec::new(), Vec::new());
        for a in 0..20 {
            for b in (a + 1)..20 {
                let c = cosine(emb.node(a), emb.node(b));
                if block(a) == block(b) { inside.push(c) } else { cross.push(c) }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&inside) > mean(&cross) + 0.1, "{} vs {}", mean(&inside), mean(&cross));
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let ds = two_cluster_dataset();
        let g = NodeGraph::from_bipartite(&ds.train_graph());
        let mut cfg = small_cfg();
        let (walks, _) = generate_walks(&g, &cfg, Exec::Sequential);
        cfg.epochs = 0;
        let a = train_sgns(&walks, &cfg, 10, 10, Exec::Sequential).unwrap();
        let bound = 0.5 / cfg.dim as f32;
        assert!(a.as_slice().iter().all(|x| x.abs() <= bound));
        cfg.epochs = 0;
        cfg.rng_seed = 3;
        let b = train_sgns(&[], &cfg, 10, 10, Exec::Sequential).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sequential_training_is_bit_reproducible() {
        let ds = two_cluster_dataset();
        let g = NodeGraph::from_bipartite(&ds.train_graph());
        let cfg = small_cfg();
        let (walks, _) = generate_walks(&g, &cfg, Exec::Sequential);
        let a = train_sgns(&walks, &cfg, 10, 10, Exec::Sequential).unwrap();
        let b = train_sgns(&walks, &cfg, 10, 10, Exec::Sequential).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        // hogwild off keeps the parallel mode reproducible as well
        let mut det = cfg.clone();
        det.hogwild = false;
        let c = train_sgns(&walks, &det, 10, 10, Exec::Parallel).unwrap();
        assert_eq!(a.as_slice(), c.as_slice());
    }

    #[test]
    fn hogwild_produces_finite_embeddings() {
        let ds = two_cluster_dataset();
        let g = NodeGraph::from_bipartite(&ds.train_graph());
        let cfg = small_cfg();
        let (walks, _) = generate_walks(&g, &cfg, Exec::Parallel);
        let emb = train_sgns(&walks, &cfg, 10, 10, Exec::Parallel).unwrap();
        assert!(emb.as_slice().iter().all(|x| x.is_finite()));
    }
}
