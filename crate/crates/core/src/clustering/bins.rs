use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinStrategy {
    #[default]
    Quantile,
}

/// Quantile bins over one empirical distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub k: usize,
    /// `k + 1` non-decreasing boundary values (nearest-rank quantiles).
    pub edges: Vec<f64>,
    pub strategy: BinStrategy,
    /// Bin of each input value, `0` lowest to `k - 1` highest.
    pub bins: Vec<usize>,
}

impl BinSpec {
    pub fn one_hot(&self, value_index: usize) -> Vec<f64> {
        one_hot_bin(self.bins[value_index], self.k)
    }
}

/// Rank-based quantile bins: values are ranked by (value, index) and the
/// value of rank `r` among `n` goes to bin `floor(r * k / n)`, so every value
/// gets exactly one bin even under ties.
pub fn quantile_bins(values: &[f64], k: usize) -> Result<BinSpec> {
    let keys: Vec<usize> = (0..values.len()).collect();
    quantile_bins_keyed(values, &keys, k)
}

/// As [`quantile_bins`] but ties are broken by `keys` instead of position.
pub fn quantile_bins_keyed<K: Ord>(values: &[f64], keys: &[K], k: usize) -> Result<BinSpec> {
    if k == 0 {
        return Err(Error::Config("number of bins must be at least 1".into()));
    }
    if values.is_empty() {
        return Err(Error::Data("cannot bin an empty distribution".into()));
    }
    if keys.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: values.len(),
            got: keys.len(),
        });
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN in binned distribution".into()));
    }
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then_with(|| keys[a].cmp(&keys[b])));
    let mut bins = vec![0usize; n];
    for (rank, &i) in order.iter().enumerate() {
        bins[i] = rank * k / n;
    }
    let edges = (0..=k)
        .map(|b| {
            let rank = (b * n).div_ceil(k).min(n - 1);
            values[order[rank]]
        })
        .collect();
    Ok(BinSpec {
        k,
        edges,
        strategy: BinStrategy::Quantile,
        bins,
    })
}

pub fn one_hot_bin(bin: usize, k: usize) -> Vec<f64> {
    assert!(bin < k, "bin {bin} out of range for k={k}");
    let mut v = vec![0.0; k];
    v[bin] = 1.0;
    v
}
