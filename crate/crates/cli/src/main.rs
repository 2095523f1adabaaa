//! `biofusion`: synthetic cohorts, two-stage training, evaluation and survival
//! analysis from the command line.
//!
//! Exit codes: 0 on success, 1 on invalid input or configuration, 2 on numerical
//! failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "biofusion", version, about = "Multimodal survival-risk modeling")]
struct Cli {
    /// Seed for every random choice; overrides seeds in config files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort directory.
    Synth {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write `folds.json` with this many stratified folds (0 to skip).
        #[arg(long, default_value_t = 5)]
        folds: usize,
    },
    /// Train the patch VAE.
    TrainStage1 {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fold: commands::FoldArgs,
    },
    /// Train the fusion network on a frozen VAE.
    TrainStage2 {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        vae: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fold: commands::FoldArgs,
    },
    /// Evaluate a trained model on every fold's validation patients.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        vae: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        folds: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Directory for per-fold Kaplan–Meier CSVs.
        #[arg(long)]
        km_dir: Option<PathBuf>,
        /// CSV of validation risks (patient_id,fold,risk,time_months,event).
        #[arg(long)]
        risks: Option<PathBuf>,
    },
    /// Train and evaluate on every fold, optionally for several modality subsets.
    Cv {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Fold file; stratified 5-fold splits are drawn when absent.
        #[arg(long)]
        folds: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        /// Comma-separated modality subsets, e.g. `all,image`.
        #[arg(long, default_value = "all")]
        variants: String,
    },
    /// Kaplan–Meier curves of high/low risk groups and their log-rank test.
    Km {
        /// CSV with columns patient_id,risk,time_months,event.
        #[arg(long)]
        risks: PathBuf,
        /// `auto` for the median risk, or a number.
        #[arg(long, default_value = "auto")]
        theta: String,
        /// Output paths for the high- and low-risk curves.
        #[arg(long, num_args = 2, value_names = ["HIGH", "LOW"])]
        out: Vec<PathBuf>,
    },
    /// Univariate and multivariate Cox models of clinical covariates.
    Coxph {
        #[arg(long)]
        clinical: PathBuf,
        /// Comma-separated subset of grade,size,age,ln.
        #[arg(long, default_value = "grade,size,age,ln")]
        covariates: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the finite-difference gradient suite.
    Gradcheck,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    let seed = cli.seed;
    let result = match cli.command {
        Command::Synth { spec, out, folds } => commands::synth(spec.as_deref(), &out, folds, seed),
        Command::TrainStage1 { data, config, out, fold } => {
            commands::train_stage1(&data, config.as_deref(), &out, &fold, seed)
        }
        Command::TrainStage2 { data, vae, config, out, fold } => {
            commands::train_stage2(&data, &vae, config.as_deref(), &out, &fold, seed)
        }
        Command::Eval { data, vae, model, folds, report, km_dir, risks } => {
            commands::eval(&data, &vae, &model, &folds, &report, km_dir.as_deref(), risks.as_deref())
        }
        Command::Cv { data, config, folds, report, variants } => {
            commands::cv(&data, config.as_deref(), folds.as_deref(), &report, &variants, seed)
        }
        Command::Km { risks, theta, out } => commands::km(&risks, &theta, &out),
        Command::Coxph { clinical, covariates, out } => commands::coxph(&clinical, &covariates, &out),
        Command::Gradcheck => commands::gradcheck(seed.unwrap_or(0)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
