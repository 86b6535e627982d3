//! Interpolation of family scores into one prediction, weight tuning on
//! validation tasks, and blending with an external recommender.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate_scores, MetricKind, RankingTask};
use crate::exec::Exec;
use crate::features::Family;

/// Smallest weight an inactive component keeps.
pub const WEIGHT_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationWeights {
    /// Activity.
    pub alpha: f64,
    /// Co-occurrence.
    pub beta: f64,
    /// Interaction.
    pub gamma: f64,
    /// Size share within co-occurrence.
    pub delta: f64,
    /// Size share within interaction.
    pub epsilon: f64,
    /// External model share when blending.
    pub eta: f64,
}

impl Default for InterpolationWeights {
    fn default() -> Self {
        InterpolationWeights {
            alpha: 1.0 / 3.0,
            beta: 1.0 / 3.0,
            gamma: 1.0 / 3.0,
            delta: 0.5,
            epsilon: 0.5,
            eta: 0.5,
        }
    }
}

impl InterpolationWeights {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("epsilon", self.epsilon),
            ("eta", self.eta),
        ];
        for (name, w) in named {
            if !(w > 0.0 && w < 1.0) {
                return Err(Error::Config(format!("{name} = {w} is outside (0, 1)")));
            }
        }
        let sum = self.alpha + self.beta + self.gamma;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("alpha + beta + gamma = {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Floors each weight at `WEIGHT_FLOOR` and rescales to sum 1.
pub fn floor_simplex(w: [f64; 3]) -> [f64; 3] {
    let f = w.map(|x| x.max(WEIGHT_FLOOR));
    let s: f64 = f.iter().sum();
    f.map(|x| x / s)
}

pub fn combine_family(y_size: f64, y_density: f64, mix: f64) -> f64 {
    mix * y_size + (1.0 - mix) * y_density
}

pub fn combine_universal(y_a: f64, y_c: f64, y_i: f64, w: &InterpolationWeights) -> Result<f64> {
    w.validate()?;
    Ok(w.alpha * y_a + w.beta * y_c + w.gamma * y_i)
}

pub fn blend_external(y_z: f64, y_b: f64, eta: f64) -> f64 {
    (1.0 - eta) * y_z + eta * y_b
}

/// Rescales a score list to [0, 1]; a constant list maps to zeros.
pub fn min_max(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        scores.iter().map(|s| (s - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; scores.len()]
    }
}

/// Per-task blend of universal and external candidate scores, each list
/// min-max normalized first unless `raw`.
pub fn blend_lists(universal: &[Vec<f64>], external: &[Vec<f64>], eta: f64, raw: bool) -> Vec<Vec<f64>> {
    universal
        .iter()
        .zip(external)
        .map(|(z, b)| {
            let (z, b) = if raw { (z.clone(), b.clone()) } else { (min_max(z), min_max(b)) };
            z.iter().zip(&b).map(|(&z, &b)| blend_external(z, b, eta)).collect()
        })
        .collect()
}

/// Family combinations reported as rows of a results table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combo {
    Act,
    CoS,
    CoD,
    IntS,
    IntD,
    Int,
    Co,
    ActInt,
    ActCo,
    IntCo,
    ActIntCo,
}

impl Combo {
    pub const ALL: [Combo; 11] = [
        Combo::Act,
        Combo::CoS,
        Combo::CoD,
        Combo::IntS,
        Combo::IntD,
        Combo::Int,
        Combo::Co,
        Combo::ActInt,
        Combo::ActCo,
        Combo::IntCo,
        Combo::ActIntCo,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Combo::Act => "Act",
            Combo::CoS => "Co-S",
            Combo::CoD => "Co-D",
            Combo::IntS => "Int-S",
            Combo::IntD => "Int-D",
            Combo::Int => "Int",
            Combo::Co => "Co",
            Combo::ActInt => "Act+Int",
            Combo::ActCo => "Act+Co",
            Combo::IntCo => "Int+Co",
            Combo::ActIntCo => "Act+Int+Co",
        }
    }

    pub fn from_label(s: &str) -> Option<Combo> {
        Combo::ALL.into_iter().find(|c| c.label().eq_ignore_ascii_case(s))
    }

    /// Which of (activity, co-occurrence, interaction) take part.
    fn active(self) -> [bool; 3] {
        match self {
            Combo::Act => [true, false, false],
            Combo::CoS | Combo::CoD | Combo::Co => [false, true, false],
            Combo::IntS | Combo::IntD | Combo::Int => [false, false, true],
            Combo::ActInt => [true, false, true],
            Combo::ActCo => [true, true, false],
            Combo::IntCo => [false, true, true],
            Combo::ActIntCo => [true, true, true],
        }
    }

    /// Fixed size mixers for single-variant rows.
    fn fixed_delta(self) -> Option<f64> {
        match self {
            Combo::CoS => Some(1.0 - WEIGHT_FLOOR),
            Combo::CoD => Some(WEIGHT_FLOOR),
            _ => None,
        }
    }

    fn fixed_epsilon(self) -> Option<f64> {
        match self {
            Combo::IntS => Some(1.0 - WEIGHT_FLOOR),
            Combo::IntD => Some(WEIGHT_FLOOR),
            _ => None,
        }
    }

    pub fn families(self) -> Vec<Family> {
        let [a, c, i] = self.active();
        let mut out = Vec::new();
        if a {
            out.push(Family::Activity);
        }
        if c {
            out.extend([Family::CoSize, Family::CoDensity]);
        }
        if i {
            out.extend([Family::IntSize, Family::IntDensity]);
        }
        out
    }
}

impl fmt::Display for Combo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Candidate scores of every task under each family, positive first.
pub type FamilyScores = BTreeMap<Family, Vec<Vec<f64>>>;

fn family(scores: &FamilyScores, f: Family) -> Result<&Vec<Vec<f64>>> {
    scores.get(&f).ok_or_else(|| Error::Data(format!("missing {f} scores")))
}

fn mix(size: &[Vec<f64>], density: &[Vec<f64>], m: f64) -> Vec<Vec<f64>> {
    size.iter()
        .zip(density)
        .map(|(s, d)| s.iter().zip(d).map(|(&s, &d)| combine_family(s, d, m)).collect())
        .collect()
}

/// Interpolated score of every candidate of every task.
pub fn combine(scores: &FamilyScores, w: &InterpolationWeights) -> Result<Vec<Vec<f64>>> {
    w.validate()?;
    let act = family(scores, Family::Activity)?;
    let co = mix(family(scores, Family::CoSize)?, family(scores, Family::CoDensity)?, w.delta);
    let int = mix(family(scores, Family::IntSize)?, family(scores, Family::IntDensity)?, w.epsilon);
    Ok(act
        .iter()
        .zip(&co)
        .zip(&int)
        .map(|((a, c), i)| {
            a.iter()
                .zip(c)
                .zip(i)
                .map(|((&a, &c), &i)| w.alpha * a + w.beta * c + w.gamma * i)
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboWeights {
    pub combo: Combo,
    pub weights: InterpolationWeights,
    /// Validation metric reached with these weights.
    pub value: f64,
}

/// Output of weight tuning, written as `weights.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedWeights {
    pub metric: MetricKind,
    pub simplex_step: f64,
    pub combos: Vec<ComboWeights>,
    /// Blend share of MostPop tuned on the same validation tasks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mostpop_eta: Option<f64>,
}

impl TunedWeights {
    pub fn get(&self, combo: Combo) -> Option<&ComboWeights> {
        self.combos.iter().find(|c| c.combo == combo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    pub metric: MetricKind,
    /// Simplex grid step for (alpha, beta, gamma).
    pub step: f64,
    /// Candidate values of delta and epsilon.
    pub mixer_grid: Vec<f64>,
    /// Candidate values of eta.
    pub eta_grid: Vec<f64>,
    /// Blend raw scores instead of per-list min-max normalized ones.
    pub raw_blend: bool,
}

impl Default for TuneConfig {
    fn default() -> Self {
        let tenths: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
        TuneConfig {
            metric: MetricKind::Auc,
            step: 0.05,
            mixer_grid: tenths.clone(),
            eta_grid: tenths,
            raw_blend: false,
        }
    }
}

fn metric_of(tasks: &[RankingTask], scores: &[Vec<f64>], metric: MetricKind) -> Result<f64> {
    Ok(evaluate_scores(tasks, scores)?.metrics.get(metric))
}

/// Index of the best value, keeping the first among ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Grid points of the simplex at `step`, restricted to `active` components,
/// in lexicographic order, floored and renormalized.
pub fn simplex_grid(step: f64, active: [bool; 3]) -> Vec<[f64; 3]> {
    let n = (1.0 / step).round() as usize;
    let mut out = Vec::new();
    for i in 0..=n {
        for j in 0..=n - i {
            let k = n - i - j;
            let raw = [i, j, k];
            if (0..3).any(|c| !active[c] && raw[c] != 0) {
                continue;
            }
            out.push(floor_simplex(raw.map(|x| x as f64 / n as f64)));
        }
    }
    out
}

fn best_mixer(
    tasks: &[RankingTask],
    size: &[Vec<f64>],
    density: &[Vec<f64>],
    grid: &[f64],
    metric: MetricKind,
    exec: Exec,
) -> Result<f64> {
    let values = exec
        .map_slice(grid, |&m| metric_of(tasks, &mix(size, density, m), metric))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(grid[argmax(&values)])
}

/// Staged grid search on validation tasks: delta on co-occurrence alone,
/// epsilon on interaction alone, then (alpha, beta, gamma) over the simplex
/// of the combo's active families.
pub fn tune_combo(
    tasks: &[RankingTask],
    scores: &FamilyScores,
    combo: Combo,
    cfg: &TuneConfig,
    exec: Exec,
) -> Result<ComboWeights> {
    if tasks.is_empty() {
        return Err(Error::Data("no validation tasks to tune weights on".into()));
    }
    if cfg.mixer_grid.is_empty() || !(cfg.step > 0.0 && cfg.step <= 1.0) {
        return Err(Error::Config("invalid tuning grid".into()));
    }
    let [_, co_on, int_on] = combo.active();
    let delta = match combo.fixed_delta() {
        Some(d) => d,
        None if co_on => best_mixer(
            tasks,
            family(scores, Family::CoSize)?,
            family(scores, Family::CoDensity)?,
            &cfg.mixer_grid,
            cfg.metric,
            exec,
        )?,
        None => 0.5,
    };
    let epsilon = match combo.fixed_epsilon() {
        Some(e) => e,
        None if int_on => best_mixer(
            tasks,
            family(scores, Family::IntSize)?,
            family(scores, Family::IntDensity)?,
            &cfg.mixer_grid,
            cfg.metric,
            exec,
        )?,
        None => 0.5,
    };
    let grid = simplex_grid(cfg.step, combo.active());
    let base = InterpolationWeights {
        delta,
        epsilon,
        ..Default::default()
    };
    let values = exec
        .map_slice(&grid, |&[alpha, beta, gamma]| {
            let w = InterpolationWeights { alpha, beta, gamma, ..base };
            metric_of(tasks, &combine(scores, &w)?, cfg.metric)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let best = argmax(&values);
    let [alpha, beta, gamma] = grid[best];
    Ok(ComboWeights {
        combo,
        weights: InterpolationWeights { alpha, beta, gamma, ..base },
        value: values[best],
    })
}

pub fn tune_weights(tasks: &[RankingTask], scores: &FamilyScores, cfg: &TuneConfig, exec: Exec) -> Result<TunedWeights> {
    let combos = Combo::ALL
        .into_iter()
        .map(|c| tune_combo(tasks, scores, c, cfg, exec))
        .collect::<Result<Vec<_>>>()?;
    Ok(TunedWeights {
        metric: cfg.metric,
        simplex_step: cfg.step,
        combos,
        mostpop_eta: None,
    })
}

/// Best eta for blending universal with external scores, and its value.
pub fn tune_eta(
    tasks: &[RankingTask],
    universal: &[Vec<f64>],
    external: &[Vec<f64>],
    cfg: &TuneConfig,
    exec: Exec,
) -> Result<(f64, f64)> {
    if tasks.is_empty() || cfg.eta_grid.is_empty() {
        return Err(Error::Data("no validation tasks or empty eta grid".into()));
    }
    if cfg.eta_grid.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::Config("eta grid values must lie in (0, 1)".into()));
    }
    let values = exec
        .map_slice(&cfg.eta_grid, |&eta| {
            metric_of(tasks, &blend_lists(universal, external, eta, cfg.raw_blend), cfg.metric)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let best = argmax(&values);
    Ok((cfg.eta_grid[best], values[best]))
}
