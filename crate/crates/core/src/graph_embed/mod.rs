//! Co-occurrence embeddings of users and items: node2vec walks on the
//! bipartite train graph, skip-gram with negative sampling, and edge vectors
//! from binary operators on endpoint embeddings.
//!
//! Users and items share one node space; item `v` is node `n_users + v`.

mod sgns;
mod walk;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifact::{self, Reader, Writer};
use crate::error::{Error, Result};

pub use sgns::{sgns_loss_and_grad, train_sgns, SgnsTarget};
pub use walk::{generate_walks, NodeGraph, WalkStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkConfig {
    pub dim: usize,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub return_p: f64,
    pub inout_q: f64,
    pub window: usize,
    pub negatives_per_positive: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub rng_seed: u64,
    /// Lock-free parallel SGNS when the execution mode is parallel.
    /// Results are then not reproducible.
    pub hogwild: bool,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            dim: 64,
            walk_length: 80,
            walks_per_node: 10,
            return_p: 1.0,
            inout_q: 1.0,
            window: 10,
            negatives_per_positive: 5,
            epochs: 5,
            learning_rate: 0.025,
            rng_seed: 0,
            hogwild: true,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("walk config: {m}")));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.walk_length < 2 {
            return bad("walk_length must be at least 2");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if !(self.return_p > 0.0 && self.inout_q > 0.0) {
            return bad("p and q must be positive");
        }
        if !(self.learning_rate >= 0.0) {
            return bad("learning rate must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    n_users: usize,
    n_items: usize,
    vectors: Vec<f32>,
}

const EMB_MAGIC: &[u8; 8] = b"ZREMB\x00\x00\x01";

impl EmbeddingTable {
    pub fn new(dim: usize, n_users: usize, n_items: usize, vectors: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dim must be positive".into()));
        }
        if vectors.len() != dim * (n_users + n_items) {
            return Err(Error::DimensionMismatch {
                expected: dim * (n_users + n_items),
                got: vectors.len(),
            });
        }
        if vectors.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite embedding value".into()));
        }
        Ok(EmbeddingTable {
            dim,
            n_users,
            n_items,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn n_users(&self) -> usize {
        self.n_users
    }
    pub fn n_items(&self) -> usize {
        self.n_items
    }
    pub fn node(&self, n: usize) -> &[f32] {
        &self.vectors[n * self.dim..(n + 1) * self.dim]
    }
    pub fn user(&self, u: usize) -> &[f32] {
        self.node(u)
    }
    pub fn item(&self, v: usize) -> &[f32] {
        self.node(self.n_users + v)
    }
    pub fn as_slice(&self) -> &[f32] {
        &self.vectors
    }

    /// Users as f64 rows, flattened.
    pub fn user_points(&self) -> Vec<f64> {
        self.vectors[..self.n_users * self.dim].iter().map(|&x| x as f64).collect()
    }
    pub fn item_points(&self) -> Vec<f64> {
        self.vectors[self.n_users * self.dim..].iter().map(|&x| x as f64).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = Writer::default();
        w.bytes(EMB_MAGIC);
        w.u32(self.dim as u32);
        w.u32(self.n_users as u32);
        w.u32(self.n_items as u32);
        w.f32s(self.vectors.iter().copied());
        artifact::write_bytes(path, &w.buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = artifact::read_bytes(path)?;
        let mut r = Reader::new(&bytes, path);
        r.expect_magic(EMB_MAGIC)?;
        let dim = r.u32()? as usize;
        let n_users = r.u32()? as usize;
        let n_items = r.u32()? as usize;
        let vectors = r.f32s(dim * (n_users + n_items))?;
        r.finish()?;
        Self::new(dim, n_users, n_items, vectors)
            .map_err(|e| Error::artifact(path, e.to_string()))
    }
}

/// Binary operator turning two endpoint embeddings into an edge embedding.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeOp {
    #[default]
    Hadamard,
    WeightedHadamard(Vec<f32>),
}

pub fn edge_embedding(g_u: &[f32], g_v: &[f32], op: &EdgeOp) -> Result<Vec<f32>> {
    if g_u.len() != g_v.len() {
        return Err(Error::DimensionMismatch {
            expected: g_u.len(),
            got: g_v.len(),
        });
    }
    let prod = g_u.iter().zip(g_v).map(|(a, b)| a * b);
    match op {
        EdgeOp::Hadamard => Ok(prod.collect()),
        EdgeOp::WeightedHadamard(w) => {
            if w.len() != g_u.len() {
                return Err(Error::DimensionMismatch {
                    expected: g_u.len(),
                    got: w.len(),
                });
            }
            Ok(prod.zip(w).map(|(p, w)| p * w).collect())
        }
    }
}

/// Edge vectors for the given `(user, item)` pairs, flattened as f64 rows.
pub fn edge_points(emb: &EmbeddingTable, pairs: &[(u32, u32)], op: &EdgeOp) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(pairs.len() * emb.dim());
    for &(u, v) in pairs {
        out.extend(edge_embedding(emb.user(u as usize), emb.item(v as usize), op)?.into_iter().map(f64::from));
    }
    Ok(out)
}
