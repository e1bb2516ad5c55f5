//! Command-line front end for the adaptation pipeline. Every subcommand
//! reads one TOML experiment config; the single-seed commands (`gen-data`,
//! `train-source`, `build-proxy`, `adapt`) replay the exact per-seed
//! pipeline of `run`, so chaining them through checkpoints reproduces a
//! harness seed bit for bit.
//!
//! Exit codes: 0 on success, 2 for usage problems (bad flags, missing
//! config), 1 for runtime failures.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sfadapt_core::data::{generate_shift_pair, write_csv, Dataset};
use sfadapt_core::harness::{
    ablation_matrix, accuracy, emit_report, load_records, run, select_proxy, AblationDimension,
    ExperimentConfig, STREAM_HARNESS,
};
use sfadapt_core::mixadapt::{adapt, AdaptPlan};
use sfadapt_core::model::{load_checkpoint, save_checkpoint, Model};
use sfadapt_core::numkit::Rng;
use sfadapt_core::proxy::proxy_purity;
use sfadapt_core::pseudo::init_banks;
use sfadapt_core::source::{train_source, SmoothingConfig};

#[derive(Parser)]
#[command(
    name = "sfadapt",
    version,
    about = "Source-free domain adaptation experiments on synthetic shifts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment configuration file (TOML).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
}

#[derive(Args)]
struct SeedArg {
    /// Seed for this single-seed command.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum DimensionArg {
    Losses,
    Selector,
    Aggregation,
}

impl From<DimensionArg> for AblationDimension {
    fn from(d: DimensionArg) -> Self {
        match d {
            DimensionArg::Losses => AblationDimension::Losses,
            DimensionArg::Selector => AblationDimension::Selector,
            DimensionArg::Aggregation => AblationDimension::Aggregation,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate one seed of the configured shift and write both domains as CSV.
    GenData {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        seed: SeedArg,
        /// Directory for source.csv and target.csv.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train the source model for one seed and save its checkpoint.
    TrainSource {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        seed: SeedArg,
        /// Checkpoint path to write.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Select the proxy subset with a source checkpoint and write it as CSV.
    BuildProxy {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        seed: SeedArg,
        /// Source checkpoint to select with.
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// CSV path to write.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Adapt a source checkpoint on the unlabeled target and save the result.
    Adapt {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        seed: SeedArg,
        /// Source checkpoint to start from.
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// Checkpoint path for the adapted model.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Run the configured experiment over its seed list and write reports.
    Run {
        #[command(flatten)]
        config: ConfigArg,
        /// Replace the config's seed list (comma separated).
        #[arg(long, value_delimiter = ',', value_name = "SEEDS")]
        seeds: Option<Vec<u64>>,
        /// Report directory (defaults to the config's output_dir).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Run an ablation matrix over the given dimensions and write reports.
    Ablate {
        #[command(flatten)]
        config: ConfigArg,
        /// Dimension to vary; repeat the flag for several.
        #[arg(long = "dimension", value_enum, required = true)]
        dimensions: Vec<DimensionArg>,
        /// Replace the config's seed list (comma separated).
        #[arg(long, value_delimiter = ',', value_name = "SEEDS")]
        seeds: Option<Vec<u64>>,
        /// Report directory (defaults to the config's output_dir).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Rebuild the summary files from an existing records file.
    Report {
        /// records.jsonl produced by `run` or `ablate`.
        #[arg(long, value_name = "FILE")]
        records: PathBuf,
        /// Directory for the rebuilt reports.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

/// Error class that should exit with the usage code.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    if !path.exists() {
        return Err(anyhow!(UsageError(format!(
            "config file {} not found",
            path.display()
        ))));
    }
    let config = ExperimentConfig::load(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    config.validate().context("invalid config")?;
    Ok(config)
}

/// Everything `run` derives per seed before any model work: the generated
/// domains, the target split, and the five forked RNG streams in draw order.
struct SeedStage {
    source: Dataset,
    train: Dataset,
    test: Dataset,
    rng_model: Rng,
    rng_source: Rng,
    rng_selector: Rng,
    rng_adapt: Rng,
}

fn stage(config: &ExperimentConfig, seed: u64) -> Result<SeedStage> {
    let mut shift = config.shift.clone();
    shift.seed = seed;
    let (source, target) = generate_shift_pair(&shift)?;
    let mut base = Rng::with_stream(seed, STREAM_HARNESS);
    let mut rng_split = base.fork(0);
    let rng_model = base.fork(1);
    let rng_source = base.fork(2);
    let rng_selector = base.fork(3);
    let rng_adapt = base.fork(4);
    let (train, test) = target.split_train_test(config.test_fraction, &mut rng_split)?;
    Ok(SeedStage {
        source,
        train,
        test,
        rng_model,
        rng_source,
        rng_selector,
        rng_adapt,
    })
}

fn load_model(path: &Path) -> Result<Model> {
    if !path.exists() {
        return Err(anyhow!(UsageError(format!(
            "checkpoint {} not found",
            path.display()
        ))));
    }
    Ok(load_checkpoint(path)
        .with_context(|| format!("reading checkpoint {}", path.display()))?
        .model)
}

fn gen_data(config: &ExperimentConfig, seed: u64, out: &Path) -> Result<String> {
    let st = stage(config, seed)?;
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    write_csv(&st.source, &out.join("source.csv"))?;
    write_csv(&st.train, &out.join("target_train.csv"))?;
    write_csv(&st.test, &out.join("target_test.csv"))?;
    Ok(format!(
        "seed {seed}: wrote {} source and {}+{} target train/test samples to {}",
        st.source.len(),
        st.train.len(),
        st.test.len(),
        out.display()
    ))
}

fn train_source_cmd(config: &ExperimentConfig, seed: u64, out: &Path) -> Result<String> {
    let mut st = stage(config, seed)?;
    let k = st.source.num_classes();
    let mut model = Model::new(
        st.source.input_dim(),
        &config.model.hidden,
        config.model.feature_dim,
        k,
        config.model.classifier_bias,
        &mut st.rng_model,
    )?;
    let smoothing = SmoothingConfig::new(config.source.smoothing_alpha, k)?;
    let losses = train_source(
        &mut model,
        &st.source,
        config.source.epochs,
        config.source.lr,
        config.source.batch_size,
        &smoothing,
        &mut st.rng_source,
    )?;
    let source_acc = accuracy(&model, &st.source)?;
    save_checkpoint(&model, &config.to_toml()?, out)?;
    Ok(format!(
        "seed {seed}: {} epochs, final loss {:.4}, source accuracy {:.4}; checkpoint {}",
        config.source.epochs,
        losses.last().copied().unwrap_or(f64::NAN),
        source_acc,
        out.display()
    ))
}

fn build_proxy_cmd(
    config: &ExperimentConfig,
    seed: u64,
    model_path: &Path,
    out: &Path,
) -> Result<String> {
    let mut st = stage(config, seed)?;
    let model = load_model(model_path)?;
    let proxy = select_proxy(
        &model,
        &st.train,
        config.selector,
        &config.proxy,
        &mut st.rng_selector,
    )?;
    let purity = proxy_purity(&proxy, &st.train)?;
    proxy.write_csv(out)?;
    Ok(format!(
        "seed {seed}: selected {} proxy samples ({:?}), purity {:.4}; wrote {}",
        proxy.len(),
        config.selector,
        purity.overall(),
        out.display()
    ))
}

fn adapt_cmd(
    config: &ExperimentConfig,
    seed: u64,
    model_path: &Path,
    out: &Path,
) -> Result<String> {
    let mut st = stage(config, seed)?;
    let mut model = load_model(model_path)?;
    let k = st.train.num_classes();
    let proxy = select_proxy(
        &model,
        &st.train,
        config.selector,
        &config.proxy,
        &mut st.rng_selector,
    )?;
    let view = st.train.unlabeled();
    let mut bank = init_banks(&view, &model, config.adapt.batch_size)?;
    let plan = AdaptPlan {
        smoothing: SmoothingConfig::new(config.source.smoothing_alpha, k)?,
        pseudo: config.pseudo,
        mixup: config.mixup,
        adapt: config.adapt,
        toggles: config.toggles,
    };
    adapt(
        &mut model,
        &view,
        &proxy,
        &mut bank,
        &plan,
        &mut st.rng_adapt,
        |_, _| Ok(None),
    )?;
    let train_acc = accuracy(&model, &st.train)?;
    let test_acc = accuracy(&model, &st.test)?;
    save_checkpoint(&model, &config.to_toml()?, out)?;
    Ok(format!(
        "seed {seed}: adapted {} epochs, target train {:.4} / test {:.4}; checkpoint {}",
        config.adapt.epochs,
        train_acc,
        test_acc,
        out.display()
    ))
}

fn apply_overrides(
    config: &mut ExperimentConfig,
    seeds: Option<Vec<u64>>,
    out: Option<PathBuf>,
) -> Result<()> {
    if let Some(seeds) = seeds {
        config.seeds = seeds;
    }
    if let Some(out) = out {
        config.output_dir = out.to_string_lossy().into_owned();
    }
    config.validate().context("invalid config after overrides")
}

fn run_cmd(mut config: ExperimentConfig, seeds: Option<Vec<u64>>, out: Option<PathBuf>) -> Result<String> {
    apply_overrides(&mut config, seeds, out)?;
    let record = run(&config)?;
    let total = record.outcomes.len();
    let dir = PathBuf::from(&config.output_dir);
    let files = emit_report(std::slice::from_ref(&record), &dir)?;
    let agg = record.aggregates.as_ref().ok_or_else(|| {
        anyhow!(
            "all {total} seeds failed; first error: {}",
            record
                .outcomes
                .iter()
                .find_map(|o| match o {
                    sfadapt_core::harness::SeedOutcome::Failed { error, .. } => Some(error.clone()),
                    _ => None,
                })
                .unwrap_or_default()
        )
    })?;
    Ok(format!(
        "{}: {}/{} seeds, no-adapt {:.4} -> adapted {:.4} (test); {} report files in {}",
        record.label,
        agg.seeds_completed,
        total,
        agg.no_adapt_test_accuracy.mean,
        agg.adapted_test_accuracy.mean,
        files.len(),
        dir.display()
    ))
}

fn ablate_cmd(
    mut config: ExperimentConfig,
    dimensions: Vec<DimensionArg>,
    seeds: Option<Vec<u64>>,
    out: Option<PathBuf>,
) -> Result<String> {
    apply_overrides(&mut config, seeds, out)?;
    let dims: Vec<AblationDimension> = dimensions.iter().map(|&d| d.into()).collect();
    let records = ablation_matrix(&config, &dims)?;
    let dir = PathBuf::from(&config.output_dir);
    let files = emit_report(&records, &dir)?;
    let failed_cells = records.iter().filter(|r| r.error.is_some()).count();
    let mut line = format!(
        "{} ablation cells over {:?}; {} report files in {}",
        records.len(),
        dims,
        files.len(),
        dir.display()
    );
    if failed_cells > 0 {
        line.push_str(&format!(" ({failed_cells} cells failed)"));
    }
    Ok(line)
}

fn report_cmd(records_path: &Path, out: &Path) -> Result<String> {
    if !records_path.exists() {
        return Err(anyhow!(UsageError(format!(
            "records file {} not found",
            records_path.display()
        ))));
    }
    let records = load_records(records_path)?;
    let files = emit_report(&records, out)?;
    Ok(format!(
        "rebuilt {} report files from {} records into {}",
        files.len(),
        records.len(),
        out.display()
    ))
}

fn dispatch(command: Command) -> Result<String> {
    match command {
        Command::GenData { config, seed, out } => {
            gen_data(&load_config(&config.config)?, seed.seed, &out)
        }
        Command::TrainSource { config, seed, out } => {
            train_source_cmd(&load_config(&config.config)?, seed.seed, &out)
        }
        Command::BuildProxy {
            config,
            seed,
            model,
            out,
        } => build_proxy_cmd(&load_config(&config.config)?, seed.seed, &model, &out),
        Command::Adapt {
            config,
            seed,
            model,
            out,
        } => adapt_cmd(&load_config(&config.config)?, seed.seed, &model, &out),
        Command::Run { config, seeds, out } => run_cmd(load_config(&config.config)?, seeds, out),
        Command::Ablate {
            config,
            dimensions,
            seeds,
            out,
        } => ablate_cmd(load_config(&config.config)?, dimensions, seeds, out),
        Command::Report { records, out } => report_cmd(&records, &out),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
