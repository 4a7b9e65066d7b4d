use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qvf::config::ExperimentConfig;
use qvf::core::data::Split;
use qvf::parallel::Rayon;
use qvf::runner;

/// Hybrid quantum/classical image classification experiments.
#[derive(Parser)]
#[command(name = "qvf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override a config leaf, e.g. `--set optim.handler.lr=0.01`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    /// Output directory (defaults to the config's `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured synthetic dataset as IDX files.
    Synth(ConfigArgs),
    /// Train the configured strategy.
    Train(ConfigArgs),
    /// Extract and cache branch embeddings for static fusion.
    Extract {
        #[command(flatten)]
        args: ConfigArgs,
        /// Model checkpoint to extract with (default: freshly initialised).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// train, val or test.
        #[arg(long, default_value = "test")]
        split: String,
        /// Configuration (default: config.json next to the checkpoint).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare every run directory under RUN_DIR.
    Report {
        run_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<qvf::Error> for Failure {
    fn from(e: qvf::Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load(args: &ConfigArgs) -> Result<(ExperimentConfig, PathBuf), Failure> {
    if !args.config.is_file() {
        return Err(Failure::Usage(format!("config file {} not found", args.config.display())));
    }
    let mut config = ExperimentConfig::load(&args.config, &args.overrides).map_err(|e| match e {
        qvf::Error::Io { .. } => Failure::Runtime(e.to_string()),
        other => Failure::Usage(other.to_string()),
    })?;
    let out = args
        .out
        .clone()
        .or_else(|| config.out.clone())
        .ok_or_else(|| Failure::Usage("no output directory (--out or config `out`)".into()))?;
    config.out = Some(out.clone());
    Ok((config, out))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let exec = Rayon::from_env().map_err(|e| Failure::Usage(e.to_string()))?;
    match cli.command {
        Command::Synth(args) => {
            let (config, out) = load(&args)?;
            let data = runner::synth(&config, &out)?;
            for s in runner::SPLITS {
                let d = data.get(s);
                println!("{s}: {} images ({} positive)", d.len(), d.positives());
            }
        }
        Command::Train(args) => {
            let (config, out) = load(&args)?;
            let outcome = runner::train(&config, &out, &exec)?;
            let last = outcome.history.last().expect("epoch 0 is always recorded");
            println!("trained {} epochs; final val F1 {:.4}", last.epoch, last.val_f1);
            for r in &outcome.reports {
                println!("{}: acc {:.4} f1 {:.4} auc {:.4}", r.split, r.accuracy, r.f1, r.auc);
            }
            if let Some(g) = outcome.model.gamma {
                println!("gamma {g}");
            }
        }
        Command::Extract { args, checkpoint } => {
            let (config, out) = load(&args)?;
            for c in runner::extract(&config, checkpoint.as_deref(), &out, &exec)? {
                println!("{}: {} records of width {}", c.split, c.len(), c.d);
            }
        }
        Command::Eval {
            checkpoint,
            split,
            config,
            out,
        } => {
            let split = Split::from_name(&split).ok_or_else(|| Failure::Usage(format!("unknown split {split:?}")))?;
            if !checkpoint.is_file() {
                return Err(Failure::Runtime(format!("checkpoint {} not found", checkpoint.display())));
            }
            let config = match config {
                Some(p) => ExperimentConfig::load(&p, &[]).map_err(|e| Failure::Usage(e.to_string()))?,
                None => runner::config_for_checkpoint(&checkpoint)?,
            };
            let out = out.unwrap_or_else(|| checkpoint.parent().unwrap_or(Path::new(".")).to_path_buf());
            let r = runner::eval(&config, &checkpoint, split, &out, &exec)?;
            println!("Acc,Prec,Rec,F1,AUC");
            println!(
                "{:.2},{:.2},{:.2},{:.2},{:.2}",
                100.0 * r.accuracy,
                100.0 * r.precision,
                100.0 * r.recall,
                100.0 * r.f1,
                100.0 * r.auc
            );
        }
        Command::Report { run_dir, out } => {
            let out = out.unwrap_or_else(|| run_dir.clone());
            let cmp = runner::consolidate(&run_dir, &out)?;
            print!("{}", cmp.markdown());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
