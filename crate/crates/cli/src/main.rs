use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use featlab_core::config::Config;
use featlab_core::dataset;
use featlab_core::gradfeat::{self, FeatureProbability, FeatureSetQuery, FeatureSource, InitLaw, NiceSetReport};
use featlab_core::harness::{self, ExperimentId};
use featlab_core::net;
use featlab_core::oracle::{self, OptEstimate, OracleNet};
use featlab_core::rng::derive_seed;
use featlab_core::trainer::{self, DataSource, TrainOptions, TrainSummary};
use featlab_core::{Error, Result};

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "featlab", version, about = "Gradient feature learning experiments on two-layer ReLU networks")]
struct Cli {
    /// Worker threads for the internal pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Seed; defaults to the first seed listed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a labelled dataset to CSV.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Number of samples.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the network and write a run report with its trace.
    Train {
        #[command(flatten)]
        common: Common,
        /// Train on this fixed dataset instead of fresh draws.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output directory; the report goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Feature-emergence probabilities and the nice-set census at init.
    AnalyzeFeatures {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the hand-constructed good network and estimate its loss.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Monte-Carlo samples for the loss estimate.
        #[arg(long, default_value_t = oracle::MIN_OPT_SAMPLES)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named experiment over its seeds.
    Experiment {
        /// One of: init_zero, grad_check, forget_step1, exact_parity_gradient, gstar_margin,
        /// feature_emergence, xor_gmm_separation, parity_separation, lth_subnet,
        /// linear_feature_direction.
        id: String,
        /// Configuration; defaults to the experiment's built-in preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run this single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 1 })
        }
    }
}

fn load(common: &Common) -> Result<(Config, u64)> {
    let config = Config::load(&common.config)?;
    let seed = common.seed.unwrap_or(config.seeds[0]);
    Ok((config, seed))
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>, name: &str) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(name), text + "\n")?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainReport<'a> {
    schema_version: u32,
    command: &'static str,
    config: &'a Config,
    seed: u64,
    summary: TrainSummary,
    best_test_error: Option<f64>,
    wall_clock_s: f64,
}

#[derive(Serialize)]
struct FeatureReport<'a> {
    schema_version: u32,
    command: &'static str,
    config: &'a Config,
    seed: u64,
    probabilities: Vec<FeatureProbability>,
    census: NiceSetReport,
}

#[derive(Serialize)]
struct OracleReport<'a> {
    schema_version: u32,
    command: &'static str,
    config: &'a Config,
    seed: u64,
    conforms: bool,
    opt: OptEstimate,
    net: OracleNet,
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Gen { common, n, out } => {
            let (config, seed) = load(&common)?;
            let batch = config.data.sample(n, derive_seed(seed, "gen", 0))?;
            dataset::write_dataset(&out, Some(&config.data), &batch)?;
        }
        Command::Train { common, data, out } => {
            let start = Instant::now();
            let (config, seed) = load(&common)?;
            let fixed = data.as_deref().map(dataset::read_dataset).transpose()?;
            if let Some(ds) = &fixed {
                if ds.batch.d() != config.data.d() {
                    return Err(Error::DimensionMismatch { expected: config.data.d(), got: ds.batch.d() });
                }
            }
            let source = match &fixed {
                Some(ds) => DataSource::Fixed(&ds.batch),
                None => DataSource::Distribution { spec: &config.data, seed },
            };
            let params0 = config.init(seed)?;
            let eval = config.data.sample(config.eval.n_eval, derive_seed(seed, "eval", 0))?;
            let run =
                trainer::train(&params0, source, &config.schedule, config.loss, &eval, &TrainOptions::default())?;
            let best_test_error = match config.eval.n_test {
                Some(n) => Some(trainer::eval_error(
                    &run.outcome.best,
                    &config.data.sample(n, derive_seed(seed, "test", 0))?,
                )?),
                None => None,
            };
            let name = config.name.clone().unwrap_or_else(|| "custom".into());
            let report = TrainReport {
                schema_version: SCHEMA_VERSION,
                command: "train",
                config: &config,
                seed,
                summary: TrainSummary::new(name, seed, &run.outcome.trace, config.loss),
                best_test_error,
                wall_clock_s: start.elapsed().as_secs_f64(),
            };
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir)?;
                run.outcome.trace.write_csv(&dir.join("trace.csv"))?;
            }
            emit(&report, out.as_deref(), "report.json")?;
        }
        Command::AnalyzeFeatures { common, out } => {
            let (config, seed) = load(&common)?;
            let an = config.analysis()?;
            let dirs = gradfeat::direction_catalog(&config.data);
            let batch = config.data.sample(an.feature_samples, derive_seed(seed, "feature-batch", 0))?;
            let query = FeatureSetQuery {
                directions: dirs.clone(),
                gamma: an.gamma,
                norm_kind: an.norm_kind,
                b_g: an.b_g,
                b_g1: an.b_g1,
                trials: an.trials,
            };
            let law = InitLaw::Gaussian { sigma_w: config.net.sigma_w, b_tilde: config.net.b_tilde };
            let probabilities = gradfeat::estimate_feature_prob(&query, law, FeatureSource::Batch(&batch), seed)?;
            let params0 = config.init(seed)?;
            let grads = net::batch_gradients(&params0, &batch, config.loss, 0.0)?;
            let census =
                gradfeat::nice_set_census(&params0, grads.w.view(), &dirs, an.gamma, an.b_g, an.b_g1, an.norm_kind)?;
            let report =
                FeatureReport { schema_version: SCHEMA_VERSION, command: "analyze-features", config: &config, seed, probabilities, census };
            emit(&report, out.as_deref(), "features.json")?;
        }
        Command::Oracle { common, n, out } => {
            let (config, seed) = load(&common)?;
            let zeta = config.analysis.as_ref().and_then(|a| a.zeta);
            let net = oracle::build_gstar(&config.data, zeta)?;
            for w in &net.warnings {
                eprintln!("warning: {w}");
            }
            let opt = oracle::estimate_opt(&net, &config.data, config.loss, n, seed)?;
            let report = OracleReport {
                schema_version: SCHEMA_VERSION,
                command: "oracle",
                config: &config,
                seed,
                conforms: net.conforms(),
                opt,
                net,
            };
            emit(&report, out.as_deref(), "oracle.json")?;
        }
        Command::Experiment { id, config, seed, out } => {
            let id: ExperimentId = id.parse()?;
            let mut config = match &config {
                Some(path) => Config::load(path)?,
                None => id.default_config()?,
            };
            if let Some(seed) = seed {
                config.seeds = vec![seed];
            }
            let report = harness::run_experiment(id, &config, out.as_deref())?;
            println!("{}", report.summary_line());
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            if !report.passed() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
