//! `stagenet`: train and evaluate stage-aware risk models on visit
//! sequences.
//!
//! All subcommands write their outputs to files; stdout carries only
//! per-epoch progress lines and a final summary. Exit codes: 0 success,
//! 2 configuration or usage error, 3 data error, 4 numeric or training
//! failure.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use stagenet_core::Error;

#[derive(Parser)]
#[command(name = "stagenet", version, about = "Stage-aware risk prediction over clinical visit sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
pub struct ModelFlags {
    /// JSON config file; flags override file values.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long)]
    pub n_features: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub chunk: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub bottleneck: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub dropconnect: Option<f64>,
    #[arg(long)]
    pub delta_scale: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub label_clip: Option<f64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// "full" or "plain_lstm".
    #[arg(long)]
    pub ablation: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted stage change-points.
    Generate {
        /// Output JSONL dataset path.
        #[arg(long)]
        out: std::path::PathBuf,
        /// JSON config file; flags override file values.
        #[arg(long)]
        config: Option<std::path::PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_patients: Option<usize>,
        #[arg(long)]
        n_features: Option<usize>,
    },
    /// Train a model and keep the best-validation checkpoint.
    Train {
        /// Training dataset (JSONL).
        #[arg(long)]
        train: std::path::PathBuf,
        /// Validation dataset (JSONL).
        #[arg(long)]
        valid: std::path::PathBuf,
        /// Output directory for checkpoint.json, metrics.jsonl and
        /// resolved_config.json.
        #[arg(long)]
        out: std::path::PathBuf,
        /// Resume from an existing checkpoint (continues the step counter).
        #[arg(long)]
        init_checkpoint: Option<std::path::PathBuf>,
        #[command(flatten)]
        model: ModelFlags,
    },
    /// Write per-visit predictions for a dataset.
    Predict {
        #[arg(long)]
        checkpoint: std::path::PathBuf,
        #[arg(long)]
        data: std::path::PathBuf,
        /// Output JSONL predictions path.
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Score a predictions file against its dataset's labels.
    Evaluate {
        #[arg(long)]
        predictions: std::path::PathBuf,
        #[arg(long)]
        data: std::path::PathBuf,
        /// Output JSON report path.
        #[arg(long)]
        out: std::path::PathBuf,
        /// Bootstrap resample count (0 disables the bootstrap).
        #[arg(long, default_value_t = 1000)]
        bootstrap: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Cluster patients by their learned representations.
    Subtype {
        #[arg(long)]
        checkpoint: std::path::PathBuf,
        #[arg(long)]
        data: std::path::PathBuf,
        /// Output JSON path.
        #[arg(long)]
        out: std::path::PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check model gradients against central finite differences.
    Gradcheck {
        /// patients,steps,n_features,hidden,chunk,window
        #[arg(long, default_value = "2,6,4,8,2,3")]
        dims: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        /// Optional JSON report path.
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
    /// Convert a long-format CSV (patient_id,time,<features...>,label)
    /// into the JSONL dataset schema.
    ImportCsv {
        #[arg(long)]
        csv: std::path::PathBuf,
        /// Output JSONL dataset path.
        #[arg(long)]
        out: std::path::PathBuf,
    },
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Input(_) => 2,
        Error::Load { .. }
        | Error::Stats(_)
        | Error::Parse(_)
        | Error::Checkpoint(_)
        | Error::Io(_) => 3,
        Error::Dimension { .. } | Error::Numeric(_) | Error::Metric(_) | Error::Training(_) => 4,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate {
            out,
            config,
            seed,
            n_patients,
            n_features,
        } => commands::generate(&out, config.as_deref(), seed, n_patients, n_features),
        Command::Train {
            train,
            valid,
            out,
            init_checkpoint,
            model,
        } => commands::train(&train, &valid, &out, init_checkpoint.as_deref(), &model),
        Command::Predict {
            checkpoint,
            data,
            out,
        } => commands::predict(&checkpoint, &data, &out),
        Command::Evaluate {
            predictions,
            data,
            out,
            bootstrap,
            seed,
        } => commands::evaluate(&predictions, &data, &out, bootstrap, seed),
        Command::Subtype {
            checkpoint,
            data,
            out,
            k,
            seed,
        } => commands::subtype(&checkpoint, &data, &out, k, seed),
        Command::Gradcheck {
            dims,
            seed,
            tol,
            eps,
            out,
        } => commands::gradcheck(&dims, seed, tol, eps, out.as_deref()),
        Command::ImportCsv { csv, out } => commands::import_csv(&csv, &out),
    };
    match result {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(exit_code(&err));
        }
    }
}
