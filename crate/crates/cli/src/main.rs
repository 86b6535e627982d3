use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use zerorec::exec::init_threads;
use zerorec::pipeline::{self, BlendWith, EvaluateRequest, ExperimentConfig, Mode, SweepAxis};
use zerorec::synth::{generate_rows, write_tsv, SynthSpec};
use zerorec::{Error, Exec, Result};

#[derive(Parser)]
#[command(name = "zerorec", version, about = "Zero-shot transferable recommendation from interaction statistics")]
struct Cli {
    /// Experiment config (TOML); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run every numeric path single-threaded.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Load, filter, partition and split a raw interaction file.
    Prepare(PrepareArgs),
    /// Build the feature tables of a prepared dataset.
    Featurize {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        features: FeatureArgs,
    },
    /// Train every family's towers and tune interpolation weights.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Bundle directory to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        features: FeatureArgs,
    },
    /// Score the test split of a target dataset with a trained bundle.
    Evaluate(EvaluateArgs),
    /// Run the whole pipeline once per value of a config axis.
    Sweep {
        #[arg(long)]
        input: PathBuf,
        /// Working directory; sweep.csv is written here.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, value_enum)]
        axis: Option<AxisArg>,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        features: FeatureArgs,
    },
    /// Write a synthetic interaction file with planted block structure.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        users: usize,
        #[arg(long, default_value_t = 1000)]
        items: usize,
        #[arg(long, default_value_t = 2.1)]
        user_exponent: f64,
        #[arg(long, default_value_t = 2.1)]
        item_exponent: f64,
        #[arg(long, default_value_t = 4)]
        user_groups: usize,
        #[arg(long, default_value_t = 4)]
        item_groups: usize,
        #[arg(long, default_value_t = 3.0)]
        affinity: f64,
        #[arg(long, default_value_t = 30.0)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Inspect configuration.
    Config {
        #[command(subcommand)]
        cmd: ConfigCmd,
    },
}

#[derive(Subcommand)]
enum ConfigCmd {
    /// Print the effective config with every default filled in.
    Show,
}

#[derive(Args)]
struct PrepareArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args, Default)]
struct DataArgs {
    /// Field separator; inferred from the file extension when absent.
    #[arg(long)]
    delimiter: Option<String>,
    /// Split users and items into seen/ and unseen/ halves.
    #[arg(long)]
    seen_fraction: Option<f64>,
    #[arg(long)]
    k_core: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    valid_fraction: Option<f64>,
    #[arg(long)]
    rating_threshold: Option<f64>,
    /// The first data line is a header.
    #[arg(long)]
    header: bool,
    #[arg(long)]
    data_seed: Option<u64>,
}

#[derive(Args, Default)]
struct FeatureArgs {
    #[arg(long)]
    k_activity: Option<usize>,
    #[arg(long)]
    k_cooccur: Option<usize>,
    #[arg(long)]
    k_interaction: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long, value_enum)]
    blend: Option<BlendArg>,
    #[arg(long, value_delimiter = ',')]
    eta_grid: Option<Vec<f64>>,
    /// Evaluate even when the artifact hash chain does not match the mode.
    #[arg(long)]
    force: bool,
    /// Report directory (default: <target>/reports/<mode>).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[command(flatten)]
    features: FeatureArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(name = "in_domain")]
    InDomain,
    #[value(name = "zero_shot_in_domain")]
    ZeroShotInDomain,
    #[value(name = "zero_shot_cross_domain")]
    ZeroShotCrossDomain,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::InDomain => Mode::InDomain,
            ModeArg::ZeroShotInDomain => Mode::ZeroShotInDomain,
            ModeArg::ZeroShotCrossDomain => Mode::ZeroShotCrossDomain,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BlendArg {
    Mostpop,
    Mfbpr,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    #[value(name = "train_fraction")]
    TrainFraction,
    #[value(name = "seen_fraction")]
    SeenFraction,
    K,
}

impl DataArgs {
    fn apply(&self, c: &mut ExperimentConfig) {
        let d = &mut c.data;
        if let Some(v) = &self.delimiter {
            d.delimiter = Some(v.clone());
        }
        if self.seen_fraction.is_some() {
            d.seen_fraction = self.seen_fraction;
        }
        if let Some(v) = self.k_core {
            d.k_core = v;
        }
        if let Some(v) = self.train_fraction {
            d.train_fraction = v;
        }
        if let Some(v) = self.valid_fraction {
            d.valid_fraction = v;
        }
        if let Some(v) = self.rating_threshold {
            d.rating_threshold = v;
        }
        if self.header {
            d.has_header = true;
        }
        if let Some(v) = self.data_seed {
            d.seed = v;
        }
    }
}

impl FeatureArgs {
    fn apply(&self, c: &mut ExperimentConfig) {
        let f = &mut c.features;
        if let Some(k) = self.k_activity {
            f.k_activity = k;
        }
        if let Some(k) = self.k_cooccur {
            f.k_cooccur = k;
            f.k_co_size = None;
            f.k_co_density = None;
        }
        if let Some(k) = self.k_interaction {
            f.k_interaction = k;
            f.k_int_size = None;
            f.k_int_density = None;
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn print_reports(out: &pipeline::Evaluated) {
    println!("{:<22} {:>8} {:>10} {:>9}", "scorer", "AUC", "Recall@10", "NDCG@10");
    for r in &out.reports {
        println!(
            "{:<22} {:>8.4} {:>10.4} {:>9.4}",
            r.scorer, r.mean.auc, r.mean.recall_at_10, r.mean.ndcg_at_10
        );
    }
    if let Some(eta) = out.eta {
        println!("blend eta: {eta}");
    }
    println!("reports written to {}", out.out_dir.display());
}

fn run(cli: Cli) -> Result<()> {
    init_threads(if cli.deterministic { Some(1) } else { cli.threads });
    let exec = Exec::from_deterministic(cli.deterministic);
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Prepare(a) => {
            a.data.apply(&mut cfg);
            cfg.validate()?;
            let p = pipeline::prepare(&a.input, &a.out, &cfg.data)?;
            let state = if p.cached { "unchanged" } else { "written" };
            for d in &p.dirs {
                println!("{state}: {}", d.display());
            }
        }
        Cmd::Featurize { dataset, features } => {
            features.apply(&mut cfg);
            cfg.validate()?;
            let f = pipeline::featurize(&dataset, &cfg.features, exec)?;
            for (family, k) in f.features.ks() {
                println!("{family}: k={k}");
            }
            println!("features in {}", f.dir.display());
        }
        Cmd::Train {
            dataset,
            out,
            epochs,
            features,
        } => {
            features.apply(&mut cfg);
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            cfg.validate()?;
            let t = pipeline::train(&dataset, &out, &cfg, exec)?;
            for m in t.bundle.families.values() {
                match (m.report.best_val_auc, m.report.best_epoch) {
                    (Some(auc), Some(epoch)) => println!("{}: best validation AUC {auc:.4} at epoch {epoch}", m.family),
                    _ => println!("{}: no validation tasks", m.family),
                }
            }
            let state = if t.cached { "unchanged" } else { "written" };
            println!("bundle {state}: {}", out.display());
        }
        Cmd::Evaluate(a) => {
            a.features.apply(&mut cfg);
            if let Some(m) = a.mode {
                cfg.mode = m.into();
            }
            if let Some(s) = a.seeds {
                cfg.seeds = s;
            }
            cfg.validate()?;
            let req = EvaluateRequest {
                mode: cfg.mode,
                bundle_dir: a.bundle,
                target_dir: a.target,
                blend: a.blend.map(|b| match b {
                    BlendArg::Mostpop => BlendWith::MostPop,
                    BlendArg::Mfbpr => BlendWith::MfBpr,
                }),
                eta_grid: a.eta_grid,
                force: a.force,
                out_dir: a.out,
            };
            let out = pipeline::evaluate(&req, &cfg, exec)?;
            print_reports(&out);
        }
        Cmd::Sweep {
            input,
            out,
            mode,
            axis,
            values,
            data,
            features,
        } => {
            data.apply(&mut cfg);
            features.apply(&mut cfg);
            if let Some(m) = mode {
                cfg.mode = m.into();
            }
            if let Some(a) = axis {
                cfg.sweep.axis = Some(match a {
                    AxisArg::TrainFraction => SweepAxis::TrainFraction,
                    AxisArg::SeenFraction => SweepAxis::SeenFraction,
                    AxisArg::K => SweepAxis::K,
                });
            }
            if let Some(v) = values {
                cfg.sweep.values = v;
            }
            cfg.validate()?;
            let (rows, failures) = pipeline::sweep(&input, &out, &cfg, exec)?;
            println!("{} rows written to {}", rows.len(), out.join(pipeline::SWEEP_CSV).display());
            if let Some((value, e)) = failures.into_iter().next() {
                return Err(Error::Data(format!("sweep point {value} failed: {e}")));
            }
        }
        Cmd::Synth {
            out,
            users,
            items,
            user_exponent,
            item_exponent,
            user_groups,
            item_groups,
            affinity,
            density,
            seed,
        } => {
            let spec = SynthSpec {
                n_users: users,
                n_items: items,
                user_exponent,
                item_exponent,
                n_user_groups: user_groups,
                n_item_groups: item_groups,
                in_block_affinity: affinity,
                density,
                rng_seed: seed,
                ..SynthSpec::default()
            };
            let rows = generate_rows(&spec)?;
            write_tsv(&rows, &out)?;
            println!("{} interactions written to {}", rows.len(), out.display());
        }
        Cmd::Config { cmd: ConfigCmd::Show } => {
            cfg.validate()?;
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
