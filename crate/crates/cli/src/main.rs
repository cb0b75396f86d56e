//! `aptsep`: batch experiment driver for prompt-tuned sound separation.
//!
//! Exit codes: 0 success, 1 usage error (unknown subcommand, bad flags,
//! missing or invalid config), 2 runtime failure (training divergence,
//! failed invariant, missing artifact).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aptsep_cli::config::{ConfigError, ExperimentConfig, ShotSetting};
use aptsep_cli::workflows::{self, WorkflowError};

#[derive(Parser)]
#[command(
    name = "aptsep",
    about = "Prompt-tuned query-based sound separation lab",
    version,
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override any config field by dotted path, e.g. --set tune.epochs=20.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = ExperimentConfig::load(&self.config)?.apply_overrides(&self.set)?;
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        Ok(cfg)
    }
}

fn parse_shots(raw: &Option<String>) -> Result<ShotSetting, ConfigError> {
    match raw {
        Some(text) => ShotSetting::parse(text),
        None => Ok(ShotSetting::Full),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the class corpus and write its manifest.
    GenCorpus {
        #[command(flatten)]
        common: Common,
    },
    /// Train the encoder and separator backbones on the seen classes.
    Pretrain {
        #[command(flatten)]
        common: Common,
    },
    /// Initialize class prompts from averaged encoder embeddings.
    InitPrompts {
        #[command(flatten)]
        common: Common,
        /// Enrollment samples per class (integer or `full`).
        #[arg(long)]
        shots: Option<String>,
        /// Diagnostic: random prompt rows instead of enrollment means.
        #[arg(long)]
        random_init: bool,
    },
    /// Optimize prompt rows against the frozen separator.
    Tune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        shots: Option<String>,
    },
    /// Upper bound: fine-tune prompts and separator jointly.
    JointTune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        shots: Option<String>,
    },
    /// Evaluate a prompt bank on the shared test mixtures.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Prompt bank to evaluate.
        #[arg(long)]
        bank: PathBuf,
        /// Separator checkpoint (defaults to the pretrained one).
        #[arg(long)]
        uss: Option<PathBuf>,
        /// Baseline report (JSON) for the CSV delta column.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Evaluate even when bank and checkpoint config hashes differ.
        #[arg(long)]
        force: bool,
    },
    /// Init + tune + evaluate across every few-shot setting and seed.
    FewshotSweep {
        #[command(flatten)]
        common: Common,
        /// Number of seed offsets to run (overrides the config).
        #[arg(long)]
        seeds: Option<usize>,
        /// Comma-separated shot settings, e.g. 1,5,10,full.
        #[arg(long)]
        shots: Option<String>,
    },
    /// Project sample embeddings and prompt rows to 2-D (CSV).
    ExportEmbeddings {
        #[command(flatten)]
        common: Common,
        /// Initial prompt bank.
        #[arg(long)]
        initial: PathBuf,
        /// Tuned prompt bank.
        #[arg(long)]
        tuned: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap routes help/version through the error path
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(RunError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

enum RunError {
    Usage(String),
    Runtime(String),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Usage(e.to_string())
    }
}

impl From<WorkflowError> for RunError {
    fn from(e: WorkflowError) -> Self {
        match e {
            // a bad user-supplied path is a usage problem, not a failed run
            WorkflowError::MissingArtifact { .. } => RunError::Usage(e.to_string()),
            other => RunError::Runtime(other.to_string()),
        }
    }
}

fn run(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::GenCorpus { common } => {
            let cfg = common.load()?;
            let manifest = workflows::gen_corpus(&cfg)?;
            println!(
                "corpus: {} classes, {} files at {}",
                manifest.classes.len(),
                manifest.entries.len(),
                workflows::corpus_dir(&cfg).display()
            );
        }
        Command::Pretrain { common } => {
            let cfg = common.load()?;
            let out = workflows::pretrain(&cfg)?;
            println!(
                "pretrained: held-out accuracy {:.1}%, final separator loss {:.5}",
                100.0 * out.stats.sed_heldout_accuracy,
                out.stats.uss_epoch_losses.last().copied().unwrap_or(f32::NAN)
            );
            println!("checkpoints: {} / {}", out.sed_path.display(), out.uss_path.display());
        }
        Command::InitPrompts { common, shots, random_init } => {
            let cfg = common.load()?;
            let shots = parse_shots(&shots)?;
            let out = workflows::init_bank(&cfg, shots, cfg.master_seed, random_init)?;
            println!(
                "initialized {} prompts ({} trainable parameters) at {}",
                out.bank.n_classes(),
                out.bank.count_trainable(),
                out.path.display()
            );
        }
        Command::Tune { common, shots } => {
            let cfg = common.load()?;
            let shots = parse_shots(&shots)?;
            let out = workflows::tune_bank(&cfg, shots, cfg.master_seed)?;
            println!(
                "tuned prompts: final epoch loss {:.5} at {}",
                out.epoch_losses.last().copied().unwrap_or(f32::NAN),
                out.path.display()
            );
        }
        Command::JointTune { common, shots } => {
            let cfg = common.load()?;
            let shots = parse_shots(&shots)?;
            let out = workflows::joint_tune(&cfg, shots, cfg.master_seed)?;
            println!(
                "joint fine-tune: final epoch loss {:.5}; bank {}, separator {}",
                out.epoch_losses.last().copied().unwrap_or(f32::NAN),
                out.bank_path.display(),
                out.ckpt_path.display()
            );
        }
        Command::Eval { common, bank, uss, baseline, force } => {
            let cfg = common.load()?;
            let baseline_report = match baseline {
                Some(path) => Some(
                    aptsep_core::eval::load_report(&path)
                        .map_err(|e| RunError::Runtime(e.to_string()))?,
                ),
                None => None,
            };
            let out =
                workflows::eval_bank(&cfg, &bank, uss.as_deref(), baseline_report.as_ref(), force)?;
            println!(
                "{}: overall median SDR {:.2} dB (mean of class medians {:.2} dB)",
                out.report.label, out.report.overall_median_sdr, out.report.mean_class_median_sdr
            );
            println!("reports: {} / {}", out.json_path.display(), out.csv_path.display());
        }
        Command::FewshotSweep { common, seeds, shots } => {
            let mut cfg = common.load()?;
            if let Some(seeds) = seeds {
                cfg.seeds = seeds;
            }
            if let Some(raw) = shots {
                let parsed: Result<Vec<ShotSetting>, ConfigError> =
                    raw.split(',').map(ShotSetting::parse).collect();
                cfg.fewshot = parsed?;
                cfg.validate()?;
            }
            let out = workflows::fewshot_sweep(&cfg)?;
            println!("sweep wrote {} report files", out.report_files.len());
            for (shots, base, apt) in &out.summary.across_seeds {
                println!("  {shots}: baseline {base:.2} dB, tuned {apt:.2} dB");
            }
        }
        Command::ExportEmbeddings { common, initial, tuned } => {
            let cfg = common.load()?;
            let path = workflows::export_embeddings(&cfg, &initial, &tuned)?;
            println!("projection written to {}", path.display());
        }
    }
    Ok(())
}
