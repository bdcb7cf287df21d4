//! Command-line front end over the experiment harness.
//!
//! `run` executes a multi-seed experiment into a directory named by the
//! config hash, `dump-embeddings` re-embeds a finished run's test data with
//! its final network, and `audit` measures forgetting terms from a run's
//! checkpoints. Every configuration key can come from a TOML file, a flag,
//! or both (flags win).
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 training
//! divergence, 5 replay starvation, 1 anything else.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};

use icla::checkpoint::load_network;
use icla::data::protocols::PROTOCOL_NAMES;
use icla::error::{Error, Result};
use icla::harness::dump::{embed_test_sets, write_embeddings};
use icla::harness::{audit_run_dir, run_experiment, write_audit, ExperimentConfig, SeedPaths};

#[derive(Parser)]
#[command(name = "icla", version, about = "Incremental class learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an experiment across its seeds and write curves + checkpoints.
    Run(RunArgs),
    /// Re-embed every task's test split with a run's final network.
    #[command(name = "dump-embeddings")]
    DumpEmbeddings(DumpArgs),
    /// Build the forgetting report from a run's checkpoints.
    Audit(AuditArgs),
}

/// Overrides mirror the config file keys; unset flags leave the file (or
/// default) value in place.
#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Task protocol name.
    #[arg(long, help = format!("Task protocol, one of: {}", PROTOCOL_NAMES.join(", ")))]
    protocol: Option<String>,
    /// Training strategy: naive, fr, mb, or icla.
    #[arg(long)]
    strategy: Option<String>,
    /// Comma-separated run seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    epochs_per_task: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Reconstruction loss weight.
    #[arg(long)]
    gamma: Option<f64>,
    /// Embedding alignment weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Pseudo-sample confidence threshold.
    #[arg(long)]
    tau: Option<f64>,
    /// Pseudo-samples per class; 0 sizes from the current task.
    #[arg(long)]
    pseudo_per_class: Option<usize>,
    #[arg(long)]
    max_attempt_factor: Option<usize>,
    #[arg(long)]
    swd_projections: Option<usize>,
    #[arg(long)]
    buffer_capacity: Option<usize>,
    /// Estimate diagonal covariances instead of full ones.
    #[arg(long, action = ArgAction::SetTrue)]
    diagonal_covariance: bool,
    /// Comma-separated hidden layer widths, overriding the protocol default.
    #[arg(long, value_delimiter = ',')]
    hidden_sizes: Option<Vec<usize>>,
    /// Embedding width, overriding the protocol default.
    #[arg(long)]
    embedding_dim: Option<usize>,
    /// IDX dataset directory; defaults to $ICLA_DATA_DIR.
    #[arg(long)]
    data_dir: Option<String>,
    /// Per-class training subsample fraction in (0, 1].
    #[arg(long)]
    data_fraction: Option<f64>,
    /// Seed for protocol-level randomness shared across run seeds.
    #[arg(long)]
    protocol_seed: Option<u64>,
    /// Parent directory for run outputs.
    #[arg(long)]
    output_dir: Option<String>,
    /// Skip per-task mixture/embedding snapshots (disables the audit).
    #[arg(long, action = ArgAction::SetTrue)]
    no_snapshots: bool,
    /// Continue from the run's latest checkpoints.
    #[arg(long, action = ArgAction::SetTrue)]
    resume: bool,
}

#[derive(Args)]
struct DumpArgs {
    /// A finished run directory (contains config.toml).
    run_dir: PathBuf,
    /// Which seed's network to use; defaults to the first configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// IDX dataset directory override for rebuilding the task stream.
    #[arg(long)]
    data_dir: Option<String>,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    /// A finished run directory (contains config.toml).
    run_dir: PathBuf,
    /// Which seed to audit; defaults to the first configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::DumpEmbeddings(args) => cmd_dump(args),
        Command::Audit(args) => cmd_audit(args),
    };
    if let Err(e) = result {
        // A closed stdout (e.g. piping into `head`) is not a failure.
        if let Error::Io(io) = &e {
            if io.kind() == std::io::ErrorKind::BrokenPipe {
                return;
            }
        }
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    apply_overrides(&mut cfg, &args);
    let outcome = run_experiment(&cfg)?;

    println!("run directory: {}", outcome.run_dir.display());
    for (seed, curve) in &outcome.curves {
        let last = curve.rows.last().expect("finished runs have curve rows");
        println!(
            "seed {seed}: final cumulative accuracy {:.4} over {} tasks",
            last.cumulative_accuracy, last.task
        );
    }
    if let Some(row) = outcome.aggregate.rows.last() {
        println!(
            "aggregate: mean {:.4} (std {:.4}) across {} seed(s)",
            row.mean_cumulative,
            row.std_cumulative,
            cfg.seeds.len()
        );
    }
    Ok(())
}

fn apply_overrides(cfg: &mut ExperimentConfig, args: &RunArgs) {
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field.clone() { cfg.$field = v; })*
        };
    }
    set!(
        protocol, strategy, seeds, epochs_per_task, batch_size, learning_rate, beta1, beta2,
        epsilon, gamma, lambda, tau, pseudo_per_class, max_attempt_factor, swd_projections,
        buffer_capacity, data_fraction, protocol_seed, output_dir
    );
    // Option-typed keys: a flag replaces the whole value.
    if args.hidden_sizes.is_some() {
        cfg.hidden_sizes = args.hidden_sizes.clone();
    }
    if args.embedding_dim.is_some() {
        cfg.embedding_dim = args.embedding_dim;
    }
    if args.data_dir.is_some() {
        cfg.data_dir = args.data_dir.clone();
    }
    if args.diagonal_covariance {
        cfg.diagonal_covariance = true;
    }
    if args.no_snapshots {
        cfg.snapshots = false;
    }
    if args.resume {
        cfg.resume = true;
    }
}

fn cmd_dump(args: DumpArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.run_dir.join("config.toml"))?;
    if args.data_dir.is_some() {
        cfg.data_dir = args.data_dir.clone();
    }
    let seed = pick_seed(&cfg, args.seed)?;

    let paths = SeedPaths::new(&args.run_dir, seed);
    let (params, _) = load_network(&paths.network())?;
    let stream = cfg.protocol()?.build_stream(&cfg.stream_options(seed))?;
    let groups = embed_test_sets(&params, &stream)?;
    let refs: Vec<(usize, &icla::model::EmbeddingBatch)> =
        groups.iter().map(|(t, b)| (*t, b)).collect();

    match &args.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write_embeddings(&mut w, &refs)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            write_embeddings(stdout.lock(), &refs)?;
        }
    }
    Ok(())
}

fn cmd_audit(args: AuditArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.run_dir.join("config.toml"))?;
    let seed = pick_seed(&cfg, args.seed)?;
    let report = audit_run_dir(&args.run_dir, seed)?;

    match &args.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write_audit(&mut w, &report)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            write_audit(stdout.lock(), &report)?;
        }
    }
    Ok(())
}

fn pick_seed(cfg: &ExperimentConfig, requested: Option<u64>) -> Result<u64> {
    match requested {
        Some(s) if cfg.seeds.contains(&s) => Ok(s),
        Some(s) => Err(Error::Config(format!(
            "seed {s} is not part of this run (config lists {:?})",
            cfg.seeds
        ))),
        None => cfg
            .seeds
            .first()
            .copied()
            .ok_or_else(|| Error::Config("run config lists no seeds".to_string())),
    }
}
