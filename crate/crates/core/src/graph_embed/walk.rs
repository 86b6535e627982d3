use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::WalkConfig;
use crate::dataset::BipartiteGraph;
use crate::exec::Exec;
use crate::seed::{self, stream};

/// Unified adjacency over users and items (items offset by `n_users`).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeGraph {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    n_users: usize,
}

impl NodeGraph {
    pub fn from_bipartite(g: &BipartiteGraph) -> Self {
        let n_users = g.users.n_nodes();
        let n = n_users + g.items.n_nodes();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for u in 0..n_users {
            targets.extend(g.users.neighbors(u).iter().map(|&v| v + n_users as u32));
            offsets.push(targets.len());
        }
        for v in 0..g.items.n_nodes() {
            targets.extend_from_slice(g.items.neighbors(v));
            offsets.push(targets.len());
        }
        NodeGraph {
            offsets,
            targets,
            n_users,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }
    pub fn n_users(&self) -> usize {
        self.n_users
    }
    pub fn neighbors(&self, n: usize) -> &[u32] {
        &self.targets[self.offsets[n]..self.offsets[n + 1]]
    }
}

/// Diagnostics written to `walkstats.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WalkStats {
    pub n_walks: usize,
    pub total_steps: usize,
    /// Steps back to the previous node (weight 1/p).
    pub return_steps: usize,
    /// Steps to a node at distance 1 from the previous node (weight 1).
    /// Always zero on a bipartite graph.
    pub distance1_steps: usize,
    /// Steps to a node at distance 2 from the previous node (weight 1/q).
    pub outward_steps: usize,
    pub isolated_starts: usize,
    pub return_weight: f64,
    pub outward_weight: f64,
}

impl WalkStats {
    fn merge(&mut self, o: &WalkStats) {
        self.n_walks += o.n_walks;
        self.total_steps += o.total_steps;
        self.return_steps += o.return_steps;
        self.distance1_steps += o.distance1_steps;
        self.outward_steps += o.outward_steps;
        self.isolated_starts += o.isolated_starts;
    }
}

/// node2vec second-order walks, `walks_per_node` from every node. Walks are
/// ordered by (round, start node); each draws from its own seeded stream so
/// parallel and sequential output agree.
pub fn generate_walks(graph: &NodeGraph, cfg: &WalkConfig, exec: Exec) -> (Vec<Vec<u32>>, WalkStats) {
    let n = graph.n_nodes();
    let results = exec.map_range(n * cfg.walks_per_node, |idx| {
        let (round, start) = (idx / n, idx % n);
        walk_from(graph, start, round, cfg)
    });
    let mut stats = WalkStats {
        return_weight: 1.0 / cfg.return_p,
        outward_weight: 1.0 / cfg.inout_q,
        ..Default::default()
    };
    let walks = results
        .into_iter()
        .map(|(w, s)| {
            stats.merge(&s);
            w
        })
        .collect();
    (walks, stats)
}

fn walk_from(graph: &NodeGraph, start: usize, round: usize, cfg: &WalkConfig) -> (Vec<u32>, WalkStats) {
    let mut rng = seed::rng(cfg.rng_seed, &[stream::WALK, start as u64, round as u64]);
    let mut stats = WalkStats {
        n_walks: 1,
        ..Default::default()
    };
    let mut walk = Vec::with_capacity(cfg.walk_length);
    walk.push(start as u32);
    let first = graph.neighbors(start);
    if first.is_empty() {
        stats.isolated_starts = 1;
        return (walk, stats);
    }
    walk.push(first[rng.random_range(0..first.len())]);
    stats.total_steps = 1;

    let back = 1.0 / cfg.return_p;
    let out = 1.0 / cfg.inout_q;
    while walk.len() < cfg.walk_length {
        let prev = walk[walk.len() - 2];
        let cur = walk[walk.len() - 1] as usize;
        let nbrs = graph.neighbors(cur);
        // prev is always a neighbor of cur; the other neighbors sit on prev's
        // side of the bipartition, so none of them is adjacent to prev.
        let others = nbrs.len() - 1;
        let total = back + others as f64 * out;
        let next = if others == 0 || rng.random::<f64>() * total < back {
            stats.return_steps += 1;
            prev
        } else {
            stats.outward_steps += 1;
            let skip = nbrs.binary_search(&prev).expect("previous node is a neighbor");
            let mut j = rng.random_range(0..others);
            if j >= skip {
                j += 1;
            }
            nbrs[j]
        };
        walk.push(next);
        stats.total_steps += 1;
    }
    (walk, stats)
}
