//! Command-line pipeline over `breathnet-core`.
//!
//! Workdir layout:
//!
//! ```text
//! features/store.bin, features/hand_features.csv
//! preprocess/summary.json, preprocess/table1.md
//! split.json
//! runs/<variant>/{checkpoint.bin, history.json, summary.json, learning_curves.svg}
//! evaluation/<variant>/<partition>/{metrics.json, confusion.svg, roc.svg}
//! ablation/{table.json, table.md}
//! explain/<variant>/<clip>/{<method>.json, <method>.f32, clip.json, input_mel.f32, overlay.svg}
//! explain/<variant>/global_importance.json
//! report/report.md, report/figures/*.svg
//! ```

pub mod config;
pub mod error;
pub mod explain;
pub mod figures;
pub mod lock;
pub mod pipeline;
pub mod report;
pub mod store;
pub mod workspace;

use std::path::PathBuf;

use breathnet_core::model::Variant;
use breathnet_core::synth::{write_tone_dataset, SynthSpec};
use breathnet_core::training::Partition;
use breathnet_core::xai::Method;
use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, ErrorKind, Result};

use crate::lock::WorkdirLock;
use crate::workspace::Workspace;

#[derive(Debug, Parser)]
#[command(name = "breathnet", version, about = "Respiratory sound classification pipeline")]
pub struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workdir: Option<PathBuf>,
    /// Single worker thread.
    #[arg(long, global = true)]
    pub strict_deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Standardize, screen and featurize every manifest entry.
    Preprocess {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Train one variant.
    Train {
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Metrics and figures for a trained variant on one partition.
    Evaluate {
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long, default_value = "test")]
        partition: Partition,
    },
    /// Train and test all five variants under one protocol.
    Ablate {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Attribution maps for selected clips (default: first test clip per class).
    Explain {
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long = "clip")]
        clips: Vec<String>,
        #[arg(long = "method")]
        methods: Vec<Method>,
    },
    /// Markdown report from logged artifacts.
    Report,
    /// Write the synthetic tone dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        clips_per_class: usize,
    },
    /// Print the effective configuration as TOML.
    Config,
}

pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = &cli.workdir {
        cfg.paths.workdir = w.clone();
    }
    match &cli.command {
        Command::Preprocess { manifest: Some(m) } => cfg.paths.manifest = m.clone(),
        Command::Train { epochs: Some(e), .. } | Command::Ablate { epochs: Some(e) } => cfg.training.max_epochs = *e,
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn strict_mode() {
    // the global pool can be configured once per process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
}

/// Runs one command and returns a one-line human summary.
pub fn run(cli: &Cli) -> Result<String> {
    if cli.strict_deterministic {
        strict_mode();
    }
    let cfg = resolve_config(cli)?;
    let ws = Workspace::new(&cfg.paths.workdir);
    let name = match &cli.command {
        Command::Preprocess { .. } => "preprocess",
        Command::Train { .. } => "train",
        Command::Evaluate { .. } => "evaluate",
        Command::Ablate { .. } => "ablate",
        Command::Explain { .. } => "explain",
        Command::Report => "report",
        Command::Synth { .. } | Command::Config => "",
    };
    let _lock = if name.is_empty() { None } else { Some(WorkdirLock::acquire(&ws.root, name)?) };
    let variant = |v: &Option<Variant>| v.unwrap_or(cfg.model.variant);
    Ok(match &cli.command {
        Command::Preprocess { .. } => {
            let s = pipeline::preprocess(&cfg)?;
            format!(
                "preprocessed {} entries: {} accepted, {} rejected, {} failed",
                s.manifest_entries,
                s.accepted,
                s.rejected.len(),
                s.failed.len()
            )
        }
        Command::Train { variant: v, .. } => {
            let s = pipeline::cmd_train(&cfg, variant(v))?;
            format!(
                "trained {}: best epoch {} of {}, val macro-F1 {:.4}",
                s.variant, s.best_epoch, s.epochs_run, s.best_val_macro_f1
            )
        }
        Command::Evaluate { variant: v, partition } => {
            let m = pipeline::cmd_evaluate(&cfg, variant(v), *partition)?;
            format!(
                "{} on {}: accuracy {:.4}, macro-F1 {:.4}, macro ROC-AUC {}",
                m.variant,
                m.partition,
                m.report.accuracy,
                m.report.macro_avg.f1,
                m.report.macro_avg.auc.map_or("n/a".into(), |a| format!("{a:.4}"))
            )
        }
        Command::Ablate { .. } => pipeline::cmd_ablate(&cfg)?.markdown(),
        Command::Explain { variant: v, clips, methods } => {
            let s = explain::cmd_explain(&cfg, variant(v), clips, methods)?;
            format!("explained {} clips with {}", s.clips.len(), s.variant)
        }
        Command::Report => {
            let r = report::cmd_report(&ws)?;
            format!("report written to {} ({} missing artifacts)", r.path.display(), r.missing.len())
        }
        Command::Synth { out, clips_per_class } => {
            let spec = SynthSpec {
                clips_per_class: *clips_per_class,
                seed: cfg.seed,
                ..SynthSpec::default()
            };
            let (path, m) = write_tone_dataset(out, &spec)?;
            format!("wrote {} clips, manifest {}", m.len(), path.display())
        }
        Command::Config => cfg.to_toml(),
    })
}
