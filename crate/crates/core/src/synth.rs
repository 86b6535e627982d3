//! Synthetic implicit-feedback datasets with power-law activity and planted
//! user and item groups.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::artifact;
use crate::dataset::{Interaction, InteractionDataset};
use crate::error::{Error, Result};
use crate::seed::{self, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub user_exponent: f64,
    pub item_exponent: f64,
    pub n_user_groups: usize,
    pub n_item_groups: usize,
    /// Edge weight multiplier when user and item groups match.
    pub in_block_affinity: f64,
    /// Target expected edges per user.
    pub density: f64,
    pub rng_seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_users: 2000,
            n_items: 1000,
            user_exponent: 2.1,
            item_exponent: 2.1,
            n_user_groups: 4,
            n_item_groups: 4,
            in_block_affinity: 3.0,
            density: 30.0,
            rng_seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_items == 0 {
            return Err(Error::Config("synthetic dataset needs users and items".into()));
        }
        if !(self.user_exponent > 1.0 && self.item_exponent > 1.0) {
            return Err(Error::Config("power-law exponents must exceed 1".into()));
        }
        if self.n_user_groups == 0 || self.n_item_groups == 0 {
            return Err(Error::Config("group counts must be at least 1".into()));
        }
        if !(self.in_block_affinity >= 1.0) {
            return Err(Error::Config("in_block_affinity must be at least 1".into()));
        }
        let item_density = self.density * self.n_users as f64 / self.n_items as f64;
        if !(self.density >= 5.0 && item_density >= 5.0) {
            return Err(Error::Config(format!(
                "mean expected degree must be at least 5 (users {}, items {item_density:.2})",
                self.density
            )));
        }
        Ok(())
    }

    pub fn expected_edges(&self) -> f64 {
        self.density * self.n_users as f64
    }
}

/// Inverse-CDF sampler of `P(x) ~ x^-exponent` on `1..=n`.
pub struct DiscretePowerLaw {
    cdf: Vec<f64>,
}

impl DiscretePowerLaw {
    pub fn new(exponent: f64, n: usize) -> Self {
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for x in 1..=n {
            acc += (x as f64).powf(-exponent);
            cdf.push(acc);
        }
        cdf.iter_mut().for_each(|c| *c /= acc);
        DiscretePowerLaw { cdf }
    }

    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        1 + self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1)
    }
}

/// Group index of every node, groups sized in proportion to `g + 1`,
/// assigned over a random permutation.
fn assign_groups(n: usize, groups: usize, rng: &mut seed::Rng) -> Vec<usize> {
    let total: usize = (1..=groups).sum();
    let mut labels = Vec::with_capacity(n);
    for g in 0..groups {
        let size = if g + 1 == groups { n - labels.len() } else { n * (g + 1) / total };
        labels.extend(std::iter::repeat_n(g, size));
    }
    labels.shuffle(rng);
    labels
}

struct Model {
    user_w: Vec<f64>,
    item_w: Vec<f64>,
    user_g: Vec<usize>,
    item_g: Vec<usize>,
    affinity: f64,
}

impl Model {
    fn weight(&self, u: usize, v: usize) -> f64 {
        let a = if self.user_g[u] == self.item_g[v] {
            self.affinity
        } else {
            1.0
        };
        self.user_w[u] * self.item_w[v] * a
    }

    fn expected(&self, c: f64) -> f64 {
        let mut sum = 0.0;
        for u in 0..self.user_w.len() {
            for v in 0..self.item_w.len() {
                sum += (c * self.weight(u, v)).min(1.0);
            }
        }
        sum
    }
}

/// Samples the interaction rows of `spec`.
///
/// Each user and item draws an activity weight from a discrete power law and
/// joins a group; the pair `(u, v)` is an edge with probability
/// `min(1, c * w_u * w_v * a)`, where `a` is the in-block affinity when the
/// group indices are equal and 1 otherwise, and `c` is set so the expected edge count
/// is `density * n_users`.
pub fn generate_rows(spec: &SynthSpec) -> Result<Vec<Interaction>> {
    spec.validate()?;
    let mut rng = seed::rng(spec.rng_seed, &[stream::SYNTH]);
    let up = DiscretePowerLaw::new(spec.user_exponent, spec.n_users);
    let ip = DiscretePowerLaw::new(spec.item_exponent, spec.n_items);
    let user_w: Vec<f64> = (0..spec.n_users).map(|_| up.sample(&mut rng) as f64).collect();
    let item_w: Vec<f64> = (0..spec.n_items).map(|_| ip.sample(&mut rng) as f64).collect();
    let user_g = assign_groups(spec.n_users, spec.n_user_groups, &mut rng);
    let item_g = assign_groups(spec.n_items, spec.n_item_groups, &mut rng);
    let model = Model {
        user_w,
        item_w,
        user_g,
        item_g,
        affinity: spec.in_block_affinity,
    };
    let target = spec.expected_edges();
    let pairs = (spec.n_users * spec.n_items) as f64;
    if target >= pairs {
        return Err(Error::Data(format!(
            "density infeasible: {target} expected edges, {pairs} possible pairs"
        )));
    }
    // expected(c) is continuous and non-decreasing; bracket then bisect
    let (mut lo, mut hi) = (0.0, 1.0);
    while model.expected(hi) < target {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Data("density infeasible".into()));
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if model.expected(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    let c = 0.5 * (lo + hi);
    let mut rows = Vec::new();
    for u in 0..spec.n_users {
        for v in 0..spec.n_items {
            if rng.random::<f64>() < (c * model.weight(u, v)).min(1.0) {
                rows.push(Interaction {
                    user: format!("s{}u{u}", spec.rng_seed),
                    item: format!("s{}i{v}", spec.rng_seed),
                    rating: None,
                    timestamp: None,
                });
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Data("generator produced no interactions".into()));
    }
    Ok(rows)
}

pub fn generate(spec: &SynthSpec) -> Result<InteractionDataset> {
    InteractionDataset::from_interactions(&generate_rows(spec)?)
}

/// Writes rows as `user<TAB>item` lines.
pub fn write_tsv(rows: &[Interaction], path: &Path) -> Result<()> {
    let mut out = String::with_capacity(rows.len() * 16);
    for r in rows {
        let _ = writeln!(out, "{}\t{}", r.user, r.item);
    }
    artifact::write_bytes(path, out.as_bytes())
}
