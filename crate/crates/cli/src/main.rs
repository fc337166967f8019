//! `scdm`: dataset generation, preprocessing, correlation analysis,
//! schedule search, training, synthesis, evaluation, ablation, and plot
//! export for the EEG-to-fNIRS diffusion pipeline.
//!
//! Exit codes: 0 success, 1 validation error (bad arguments or config),
//! 2 runtime failure. `SCDM_THREADS` caps worker parallelism. A TOML
//! config supplies defaults; CLI flags always win.

mod commands;
mod config;
mod manifest;
mod svg;

use clap::{Parser, Subcommand};
use scdm_core::error::ScdmError;
use std::path::PathBuf;
use std::process::ExitCode;

use config::{FileConfig, TrainOverrides};
use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "scdm", version, about = "EEG-to-fNIRS cross-modal generation pipeline")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a coupled synthetic EEG/fNIRS dataset.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        trials: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-reference, filter, resample, and epoch a continuous recording.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        /// eeg | fnirs
        #[arg(long)]
        modality: String,
        /// CSV of trial onsets: onset_s,label (label LMI or RMI).
        #[arg(long)]
        events: PathBuf,
        /// Epoch window in seconds.
        #[arg(long, default_value_t = 25.0)]
        window: f64,
        /// Resample EEG to this rate after filtering.
        #[arg(long)]
        target_rate: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correlation matrices, grid projections, most-correlated table.
    Corr {
        #[arg(long)]
        eeg: PathBuf,
        #[arg(long)]
        fnirs: PathBuf,
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate noise-schedule candidates on data pools.
    ScheduleSearch {
        #[arg(long)]
        eeg: PathBuf,
        #[arg(long)]
        fnirs: PathBuf,
        #[arg(long, default_value = "default")]
        grid: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model variant on aligned epochs.
    Train {
        #[arg(long)]
        eeg: PathBuf,
        #[arg(long)]
        fnirs: PathBuf,
        /// maps.json from the corr command.
        #[arg(long)]
        maps: PathBuf,
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        base_channels: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reverse-sample synthetic fNIRS from EEG and a checkpoint.
    Synthesize {
        #[arg(long)]
        eeg: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        maps: PathBuf,
        /// Copy channel names and rate from this fNIRS epochs file.
        #[arg(long)]
        like: Option<PathBuf>,
        /// fixed_draw | per_step
        #[arg(long, default_value = "fixed_draw")]
        policy: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classification sweep, evoked curves, topographies.
    Evaluate {
        #[arg(long)]
        eeg: PathBuf,
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synthetic: Option<PathBuf>,
        #[arg(long)]
        layout: Option<PathBuf>,
        /// Comma-separated windows like "3:5,5:7"; default seven 2 s
        /// windows over 3-17 s.
        #[arg(long)]
        windows: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train all six module pairings and emit the ablation table.
    Ablate {
        /// Directory containing eeg.epochs and fnirs.epochs.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long)]
        hemo: Option<String>,
        #[arg(long)]
        holdout_fraction: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        base_channels: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render CSV/JSON artifacts from other commands as standalone SVG.
    ExportPlots {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn configure_threads() {
    if let Ok(v) = std::env::var("SCDM_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
}

fn exit_code_for(e: &ScdmError) -> u8 {
    match e {
        ScdmError::Invalid(_) | ScdmError::Shape(_) | ScdmError::Filter(_) => 1,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<(), ScdmError> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    let cfg_path = cli.config.as_deref();
    match cli.cmd {
        Cmd::Gen { seed, trials, out } => {
            let mut m = RunManifest::new("gen", cfg_path, Some(seed));
            commands::gen(&mut m, &cfg, seed, trials, &out)?;
            m.write(&out)
        }
        Cmd::Preprocess {
            input,
            modality,
            events,
            window,
            target_rate,
            out,
        } => {
            let mut m = RunManifest::new("preprocess", cfg_path, None);
            commands::preprocess(&mut m, &input, &modality, &events, window, target_rate, &out)?;
            m.write(&out)
        }
        Cmd::Corr {
            eeg,
            fnirs,
            layout,
            out,
        } => {
            let mut m = RunManifest::new("corr", cfg_path, None);
            commands::corr(&mut m, &eeg, &fnirs, layout.as_deref(), &out)?;
            m.write(&out)
        }
        Cmd::ScheduleSearch {
            eeg,
            fnirs,
            grid,
            seed,
            out,
        } => {
            let mut m = RunManifest::new("schedule-search", cfg_path, Some(seed));
            commands::schedule_search_cmd(&mut m, &eeg, &fnirs, &grid, seed, &out)?;
            m.write(&out)
        }
        Cmd::Train {
            eeg,
            fnirs,
            maps,
            variant,
            epochs,
            seed,
            base_channels,
            batch_size,
            learning_rate,
            out,
        } => {
            let over = TrainOverrides {
                variant,
                epochs,
                seed,
                base_channels,
                batch_size,
                learning_rate,
            };
            let tcfg = config::resolve_train(&cfg, &over)?;
            let mut m = RunManifest::new("train", cfg_path, Some(tcfg.seed));
            commands::train_cmd(&mut m, &eeg, &fnirs, &maps, tcfg, &out)?;
            m.write(&out)
        }
        Cmd::Synthesize {
            eeg,
            ckpt,
            maps,
            like,
            policy,
            seed,
            out,
        } => {
            let mut m = RunManifest::new("synthesize", cfg_path, Some(seed));
            commands::synthesize(
                &mut m,
                &eeg,
                &ckpt,
                &maps,
                like.as_deref(),
                &policy,
                seed,
                &out,
            )?;
            m.write(&out)
        }
        Cmd::Evaluate {
            eeg,
            real,
            synthetic,
            layout,
            windows,
            seed,
            out,
        } => {
            let split = config::resolve_split(&cfg, seed)?;
            let mut m = RunManifest::new("evaluate", cfg_path, Some(split.seed));
            commands::evaluate(
                &mut m,
                &eeg,
                &real,
                synthetic.as_deref(),
                layout.as_deref(),
                windows.as_deref(),
                split,
                &out,
            )?;
            m.write(&out)
        }
        Cmd::Ablate {
            data,
            layout,
            hemo,
            holdout_fraction,
            epochs,
            seed,
            base_channels,
            out,
        } => {
            let over = TrainOverrides {
                epochs,
                seed,
                base_channels,
                ..TrainOverrides::default()
            };
            let acfg = config::resolve_ablation(&cfg, &over, hemo, holdout_fraction)?;
            let mut m = RunManifest::new("ablate", cfg_path, Some(acfg.train.seed));
            commands::ablate(&mut m, &data, layout.as_deref(), acfg, &out)?;
            m.write(&out)
        }
        Cmd::ExportPlots { data, out } => {
            let mut m = RunManifest::new("export-plots", cfg_path, None);
            commands::export_plots(&mut m, &data, &out)?;
            m.write(&out)
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // usage text to stderr; any parse problem is a validation error
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
