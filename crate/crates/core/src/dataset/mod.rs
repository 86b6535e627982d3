//! Implicit-feedback interaction data: ingestion, k-core filtering,
//! seen/unseen partitioning and per-user train/valid/test splits.

mod io;
mod kcore;
mod split;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{infer_delimiter, load_interactions, DatasetMeta, LoadOptions};
pub use kcore::k_core_filter;
pub use split::{partition_seen_unseen, split_counts, split_per_user};

/// One raw interaction row. Timestamps are carried for provenance only.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub rating: Option<f64>,
    pub timestamp: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Split {
    Train = 0,
    Valid = 1,
    Test = 2,
}

impl Split {
    pub fn from_tag(tag: u8) -> Option<Split> {
        match tag {
            0 => Some(Split::Train),
            1 => Some(Split::Valid),
            2 => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Seen,
    Unseen,
}

/// Compressed adjacency: `targets[offsets[n]..offsets[n + 1]]` are the
/// neighbors of node `n`, sorted ascending, with the matching edge ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    edge_ids: Vec<u32>,
}

impl Adjacency {
    fn build(n: usize, pairs: impl Iterator<Item = (u32, u32, u32)> + Clone) -> Self {
        let mut offsets = vec![0usize; n + 1];
        for (src, _, _) in pairs.clone() {
            offsets[src as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let total = offsets[n];
        let mut fill = offsets.clone();
        let mut entries = vec![(0u32, 0u32); total];
        for (src, dst, eid) in pairs {
            let slot = &mut fill[src as usize];
            entries[*slot] = (dst, eid);
            *slot += 1;
        }
        for node in 0..n {
            entries[offsets[node]..offsets[node + 1]].sort_unstable();
        }
        let (targets, edge_ids) = entries.into_iter().unzip();
        Adjacency {
            offsets,
            targets,
            edge_ids,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.targets[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn edge_ids(&self, node: usize) -> &[u32] {
        &self.edge_ids[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }
}

/// Bipartite view over a subset of edges.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    pub users: Adjacency,
    pub items: Adjacency,
}

/// Deduplicated binary interaction matrix with dense internal ids.
///
/// Edges are kept sorted by `(user, item)`. Internal ids follow first-seen
/// order of the external ids they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    edges: Vec<(u32, u32)>,
    splits: Vec<Split>,
    partition: Option<Partition>,
    graph: BipartiteGraph,
}

impl InteractionDataset {
    /// Build from raw rows: ids are assigned in first-seen order and
    /// duplicate (user, item) rows collapse into one edge.
    pub fn from_interactions(rows: &[Interaction]) -> Result<Self> {
        let mut users = IdMap::default();
        let mut items = IdMap::default();
        let mut edges = Vec::with_capacity(rows.len());
        for r in rows {
            if r.user.is_empty() || r.item.is_empty() {
                return Err(Error::Data("empty user or item id".into()));
            }
            edges.push((users.intern(&r.user), items.intern(&r.item)));
        }
        Self::from_parts(users.ids, items.ids, edges)
    }

    pub fn from_parts(
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        mut edges: Vec<(u32, u32)>,
    ) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::Data("no interactions".into()));
        }
        for &(u, v) in &edges {
            if u as usize >= user_ids.len() || v as usize >= item_ids.len() {
                return Err(Error::Data(format!("edge ({u}, {v}) out of range")));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let splits = vec![Split::Train; edges.len()];
        Ok(Self::assemble(user_ids, item_ids, edges, splits, None))
    }

    fn assemble(
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        edges: Vec<(u32, u32)>,
        splits: Vec<Split>,
        partition: Option<Partition>,
    ) -> Self {
        let graph = build_graph(user_ids.len(), item_ids.len(), &edges, |_| true);
        InteractionDataset {
            user_ids,
            item_ids,
            edges,
            splits,
            partition,
            graph,
        }
    }

    /// Keep only `edges` (a subset of the current edge list) and drop nodes
    /// left without any edge. Relative id order is preserved.
    pub(crate) fn restrict(&self, kept: &[(u32, u32)], partition: Option<Partition>) -> Result<Self> {
        let mut user_map = vec![u32::MAX; self.n_users()];
        let mut item_map = vec![u32::MAX; self.n_items()];
        for &(u, v) in kept {
            user_map[u as usize] = 0;
            item_map[v as usize] = 0;
        }
        let user_ids = compact_ids(&mut user_map, &self.user_ids);
        let item_ids = compact_ids(&mut item_map, &self.item_ids);
        let edges = kept
            .iter()
            .map(|&(u, v)| (user_map[u as usize], item_map[v as usize]))
            .collect::<Vec<_>>();
        let mut ds = Self::from_parts(user_ids, item_ids, edges)?;
        ds.partition = partition;
        Ok(ds)
    }

    /// Apply k-core filtering, compacting ids of surviving nodes.
    pub fn k_core(&self, k: usize) -> Result<Self> {
        let kept = k_core_filter(&self.edges, k)?;
        self.restrict(&kept, self.partition)
    }

    pub(crate) fn with_splits(mut self, splits: Vec<Split>) -> Self {
        debug_assert_eq!(splits.len(), self.edges.len());
        self.splits = splits;
        self
    }

    pub(crate) fn from_saved(
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        edges: Vec<(u32, u32)>,
        splits: Vec<Split>,
        partition: Option<Partition>,
    ) -> Result<Self> {
        if edges.len() != splits.len() {
            return Err(Error::Data("split tags do not match edge count".into()));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("edges are not sorted and unique".into()));
        }
        for &(u, v) in &edges {
            if u as usize >= user_ids.len() || v as usize >= item_ids.len() {
                return Err(Error::Data(format!("edge ({u}, {v}) out of range")));
            }
        }
        Ok(Self::assemble(user_ids, item_ids, edges, splits, partition))
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }
    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }
    pub fn splits(&self) -> &[Split] {
        &self.splits
    }
    pub fn partition(&self) -> Option<Partition> {
        self.partition
    }
    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }
    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    /// All interactions of the user regardless of split, sorted by item.
    pub fn user_history(&self, user: usize) -> &[u32] {
        self.graph.users.neighbors(user)
    }

    pub fn item_history(&self, item: usize) -> &[u32] {
        self.graph.items.neighbors(item)
    }

    pub fn graph(&self) -> &BipartiteGraph {
        &self.graph
    }

    /// Graph restricted to edges carrying the given split tag.
    pub fn split_graph(&self, split: Split) -> BipartiteGraph {
        build_graph(self.n_users(), self.n_items(), &self.edges, |e| {
            self.splits[e] == split
        })
    }

    pub fn train_graph(&self) -> BipartiteGraph {
        self.split_graph(Split::Train)
    }

    /// Edge ids (indices into [`edges`](Self::edges)) with the given tag.
    pub fn edge_ids_in(&self, split: Split) -> Vec<u32> {
        (0..self.edges.len() as u32)
            .filter(|&e| self.splits[e as usize] == split)
            .collect()
    }

    pub fn has_edge(&self, user: usize, item: u32) -> bool {
        self.user_history(user).binary_search(&item).is_ok()
    }
}

fn build_graph(
    n_users: usize,
    n_items: usize,
    edges: &[(u32, u32)],
    keep: impl Fn(usize) -> bool + Copy,
) -> BipartiteGraph {
    let selected = edges
        .iter()
        .enumerate()
        .filter(move |(e, _)| keep(*e))
        .map(|(e, &(u, v))| (u, v, e as u32));
    BipartiteGraph {
        users: Adjacency::build(n_users, selected.clone()),
        items: Adjacency::build(n_items, selected.map(|(u, v, e)| (v, u, e))),
    }
}

fn compact_ids(map: &mut [u32], ids: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for (old, slot) in map.iter_mut().enumerate() {
        if *slot != u32::MAX {
            *slot = out.len() as u32;
            out.push(ids[old].clone());
        }
    }
    out
}

#[derive(Default)]
struct IdMap {
    index: std::collections::HashMap<String, u32>,
    ids: Vec<String>,
}

impl IdMap {
    fn intern(&mut self, id: &str) -> u32 {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len() as u32;
        self.index.insert(id.to_owned(), i);
        self.ids.push(id.to_owned());
        i
    }
}
