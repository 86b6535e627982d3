use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Aggregate, Metrics};
use crate::artifact;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub metrics: Metrics,
    pub n_users: usize,
    pub n_tasks: usize,
    pub n_skipped: usize,
}

impl SeedResult {
    pub fn new(seed: u64, agg: Aggregate, n_skipped: usize) -> Self {
        SeedResult {
            seed,
            metrics: agg.metrics,
            n_users: agg.n_users,
            n_tasks: agg.n_tasks,
            n_skipped,
        }
    }
}

/// Metrics of one scorer per evaluation seed and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scorer: String,
    pub seeds: Vec<SeedResult>,
    pub mean: Metrics,
}

impl MetricReport {
    pub fn new(scorer: impl Into<String>, seeds: Vec<SeedResult>) -> Self {
        let per: Vec<Metrics> = seeds.iter().map(|s| s.metrics).collect();
        MetricReport {
            scorer: scorer.into(),
            mean: Metrics::mean(&per),
            seeds,
        }
    }

    /// Writes `report.json` and a long-format `report.csv` with one row per
    /// scorer and seed plus a `mean` row per scorer.
    pub fn write_all(dir: &Path, reports: &[MetricReport], hash_chain: &BTreeMap<String, String>) -> Result<()> {
        #[derive(Serialize)]
        struct File<'a> {
            hash_chain: &'a BTreeMap<String, String>,
            reports: &'a [MetricReport],
        }
        artifact::write_json(&dir.join("report.json"), &File { hash_chain, reports })?;
        artifact::write_bytes(&dir.join("report.csv"), Self::csv(reports).as_bytes())
    }

    pub fn csv(reports: &[MetricReport]) -> String {
        let mut out = String::from("scorer,seed,auc,recall_at_10,ndcg_at_10,n_users,n_tasks,n_skipped\n");
        for r in reports {
            for s in &r.seeds {
                let m = &s.metrics;
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    r.scorer, s.seed, m.auc, m.recall_at_10, m.ndcg_at_10, s.n_users, s.n_tasks, s.n_skipped
                );
            }
            let m = &r.mean;
            let _ = writeln!(out, "{},mean,{},{},{},,,", r.scorer, m.auc, m.recall_at_10, m.ndcg_at_10);
        }
        out
    }
}
