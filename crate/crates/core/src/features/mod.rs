//! Dataset-agnostic user and item features built from train interactions.
//!
//! Five families: activity histograms, co-occurrence similarity per
//! cluster-size and cluster-density bin, and interaction histograms per
//! edge-cluster size and density bin.

mod build;
mod families;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifact::{self, Reader, Writer};
use crate::error::{Error, Result};

pub use build::{build_all, load_features, FeatureConfig, FeatureManifest, FeatureSet};
pub use families::{activity_features, cooccurrence_features, interaction_features, Similarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Activity,
    CoSize,
    CoDensity,
    IntSize,
    IntDensity,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Activity,
        Family::CoSize,
        Family::CoDensity,
        Family::IntSize,
        Family::IntDensity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Activity => "activity",
            Family::CoSize => "co_size",
            Family::CoDensity => "co_density",
            Family::IntSize => "int_size",
            Family::IntDensity => "int_density",
        }
    }

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Family> {
        Family::ALL.get(tag as usize).copied()
    }

    pub fn from_name(name: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name() == name)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Dense per-user and per-item rows of one feature family.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub family: Family,
    pub k: usize,
    pub n_users: usize,
    pub n_items: usize,
    pub user_rows: Vec<f64>,
    pub item_rows: Vec<f64>,
    /// Hash of the configuration chain that produced the table.
    pub config_hash: String,
}

const FEAT_MAGIC: &[u8; 8] = b"ZRFEAT01";

impl FeatureTable {
    pub fn user(&self, u: usize) -> &[f64] {
        &self.user_rows[u * self.k..(u + 1) * self.k]
    }

    pub fn item(&self, v: usize) -> &[f64] {
        &self.item_rows[v * self.k..(v + 1) * self.k]
    }

    /// Header (magic, family tag, k, n_users, n_items, 32-byte config hash)
    /// followed by f32 user rows then item rows.
    pub fn save(&self, path: &Path) -> Result<()> {
        let hash = hex::decode(&self.config_hash).map_err(|_| Error::artifact(path, "config hash is not hex"))?;
        if hash.len() != 32 {
            return Err(Error::artifact(path, "config hash must be 32 bytes"));
        }
        let mut w = Writer::default();
        w.bytes(FEAT_MAGIC);
        w.u8(self.family.tag());
        w.u32(self.k as u32);
        w.u32(self.n_users as u32);
        w.u32(self.n_items as u32);
        w.bytes(&hash);
        w.f32s(self.user_rows.iter().chain(&self.item_rows).map(|&x| x as f32));
        artifact::write_bytes(path, &w.buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = artifact::read_bytes(path)?;
        let (mut r, family, k, n_users, n_items, config_hash) = read_header(&bytes, path)?;
        let user_rows = r.f32s(n_users * k)?.into_iter().map(f64::from).collect();
        let item_rows = r.f32s(n_items * k)?.into_iter().map(f64::from).collect();
        r.finish()?;
        Ok(FeatureTable {
            family,
            k,
            n_users,
            n_items,
            user_rows,
            item_rows,
            config_hash,
        })
    }

    /// Config hash stored in a table file, without reading the rows.
    pub fn peek_hash(path: &Path) -> Option<String> {
        let bytes = std::fs::read(path).ok()?;
        read_header(&bytes, path).ok().map(|h| h.5)
    }
}

type Header<'a> = (Reader<'a>, Family, usize, usize, usize, String);

fn read_header<'a>(bytes: &'a [u8], path: &'a Path) -> Result<Header<'a>> {
    let mut r = Reader::new(bytes, path);
    r.expect_magic(FEAT_MAGIC)?;
    let tag = r.u8()?;
    let family = Family::from_tag(tag).ok_or_else(|| Error::artifact(path, format!("unknown family tag {tag}")))?;
    let k = r.u32()? as usize;
    let n_users = r.u32()? as usize;
    let n_items = r.u32()? as usize;
    let hash = hex::encode(r.bytes(32)?);
    Ok((r, family, k, n_users, n_items, hash))
}
