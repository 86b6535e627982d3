use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{evaluate, prepare, train, EvaluateRequest, ExperimentConfig, Mode};
use crate::artifact;
use crate::error::{Error, Result};
use crate::eval::Metrics;
use crate::exec::Exec;

/// One scorer at one axis value; `seed` is `None` for the mean row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: &'static str,
    pub value: f64,
    pub scorer: String,
    pub seed: Option<u64>,
    pub metrics: Metrics,
}

pub const SWEEP_CSV: &str = "sweep.csv";

fn csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("axis,value,scorer,seed,auc,recall_at_10,ndcg_at_10\n");
    for r in rows {
        let seed = r.seed.map_or_else(|| "mean".to_string(), |s| s.to_string());
        let m = &r.metrics;
        let _ = writeln!(s, "{},{},{},{seed},{},{},{}", r.axis, r.value, r.scorer, m.auc, m.recall_at_10, m.ndcg_at_10);
    }
    s
}

fn one_point(input: &Path, dir: &Path, cfg: &ExperimentConfig, exec: Exec) -> Result<Vec<(String, Option<u64>, Metrics)>> {
    let prepared = prepare(input, &dir.join("data"), &cfg.data)?;
    let (train_dir, target_dir) = match (cfg.mode, prepared.dirs.as_slice()) {
        (Mode::InDomain, [d]) | (Mode::InDomain, [d, _]) => (d.clone(), d.clone()),
        (Mode::ZeroShotInDomain, [seen, unseen]) => (seen.clone(), unseen.clone()),
        (Mode::ZeroShotInDomain, _) => {
            return Err(Error::Config("zero-shot in-domain sweeps need data.seen_fraction".into()))
        }
        _ => return Err(Error::Config("cross-domain sweeps are not supported; run evaluate per target".into())),
    };
    let bundle_dir = dir.join("bundle");
    train(&train_dir, &bundle_dir, cfg, exec)?;
    let req = EvaluateRequest {
        mode: cfg.mode,
        bundle_dir,
        target_dir,
        blend: None,
        eta_grid: None,
        force: false,
        out_dir: Some(dir.join("report")),
    };
    let out = evaluate(&req, cfg, exec)?;
    let mut rows = Vec::new();
    for r in &out.reports {
        for s in &r.seeds {
            rows.push((r.scorer.clone(), Some(s.seed), s.metrics));
        }
        rows.push((r.scorer.clone(), None, r.mean));
    }
    Ok(rows)
}

/// Runs prepare, train and evaluate once per value of the configured axis and
/// writes `sweep.csv` in long format after every point, so a failing point
/// keeps the rows of earlier ones.
///
/// Returns the rows and the values that failed.
pub fn sweep(input: &Path, work_dir: &Path, cfg: &ExperimentConfig, exec: Exec) -> Result<(Vec<SweepRow>, Vec<(f64, Error)>)> {
    let axis = cfg
        .sweep
        .axis
        .ok_or_else(|| Error::Config("sweep.axis is not set".into()))?;
    if cfg.sweep.values.is_empty() {
        return Err(Error::Config("sweep.values is empty".into()));
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &value in &cfg.sweep.values {
        let point: PathBuf = work_dir.join(format!("{}={value}", axis.name()));
        let result = cfg.with_axis(axis, value).and_then(|c| one_point(input, &point, &c, exec));
        match result {
            Ok(r) => rows.extend(r.into_iter().map(|(scorer, seed, metrics)| SweepRow {
                axis: axis.name(),
                value,
                scorer,
                seed,
                metrics,
            })),
            Err(e) => {
                log::error!("sweep: {}={value} failed: {e}", axis.name());
                failures.push((value, e));
            }
        }
        artifact::write_bytes(&work_dir.join(SWEEP_CSV), csv(&rows).as_bytes())?;
    }
    Ok((rows, failures))
}
