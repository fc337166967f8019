//! TOML run configuration. Precedence: built-in defaults, then the config
//! file, then CLI flags.

use scdm_core::diffusion::{ENoisePolicy, ScheduleSpec};
use scdm_core::error::{Result, ScdmError};
use scdm_core::eval::classify::{Ratio, SplitSpec};
use scdm_core::eval::AblationConfig;
use scdm_core::synth::CouplingSpec;
use scdm_core::trainer::{TableVariant, TrainConfig};
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub gen: GenSection,
    pub schedule: ScheduleSection,
    pub train: TrainSection,
    pub split: SplitSection,
    pub ablation: AblationSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSection {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub noise_level: Option<f64>,
    pub lateralization: Option<f64>,
    pub primary_weight: Option<f64>,
    pub eeg_rate: Option<f64>,
    pub eeg_samples: Option<usize>,
    pub fnirs_rate: Option<f64>,
    pub fnirs_samples: Option<usize>,
    pub tones: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub family: Option<String>,
    pub t: Option<usize>,
    pub beta_start: Option<f64>,
    pub beta_end: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub variant: Option<String>,
    pub base_channels: Option<usize>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub seed: Option<u64>,
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    /// LMI:RMI training ratio, e.g. "5:5".
    pub ratio: Option<String>,
    pub reps: Option<usize>,
    pub test_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub ridge: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub hemo: Option<String>,
    pub holdout_fraction: Option<f64>,
    /// "fixed_draw" or "per_step".
    pub policy: Option<String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str(&text)
                    .map_err(|e| ScdmError::invalid(format!("bad config {}: {e}", p.display())))
            }
        }
    }
}

pub fn parse_ratio(s: &str) -> Result<Ratio> {
    let (l, r) = s
        .split_once(':')
        .ok_or_else(|| ScdmError::invalid(format!("ratio {s:?} is not L:R")))?;
    let l: u32 = l
        .trim()
        .parse()
        .map_err(|_| ScdmError::invalid(format!("bad ratio {s:?}")))?;
    let r: u32 = r
        .trim()
        .parse()
        .map_err(|_| ScdmError::invalid(format!("bad ratio {s:?}")))?;
    Ratio::new(l, r)
}

pub fn parse_policy(s: &str) -> Result<ENoisePolicy> {
    match s {
        "fixed_draw" => Ok(ENoisePolicy::FixedDraw),
        "per_step" => Ok(ENoisePolicy::PerStep),
        other => Err(ScdmError::invalid(format!("unknown noise policy {other:?}"))),
    }
}

pub fn resolve_coupling(sec: &GenSection) -> Result<CouplingSpec> {
    let d = CouplingSpec::default();
    let spec = CouplingSpec {
        noise_level: sec.noise_level.unwrap_or(d.noise_level),
        lateralization: sec.lateralization.unwrap_or(d.lateralization),
        primary_weight: sec.primary_weight.unwrap_or(d.primary_weight),
        eeg_rate: sec.eeg_rate.unwrap_or(d.eeg_rate),
        eeg_samples: sec.eeg_samples.unwrap_or(d.eeg_samples),
        fnirs_rate: sec.fnirs_rate.unwrap_or(d.fnirs_rate),
        fnirs_samples: sec.fnirs_samples.unwrap_or(d.fnirs_samples),
        tones: sec.tones.unwrap_or(d.tones),
    };
    spec.validate()?;
    Ok(spec)
}

pub fn resolve_schedule(sec: &ScheduleSection) -> Result<ScheduleSpec> {
    let t = sec.t.unwrap_or(50);
    match sec.family.as_deref().unwrap_or("linear") {
        "linear" => Ok(ScheduleSpec::linear(
            t,
            sec.beta_start.unwrap_or(1e-3),
            sec.beta_end.unwrap_or(0.2),
        )),
        "cosine" => Ok(ScheduleSpec::cosine(t)),
        other => Err(ScdmError::invalid(format!(
            "unknown schedule family {other:?}"
        ))),
    }
}

/// CLI flag overrides shared by train-like commands.
#[derive(Debug, Default, Clone)]
pub struct TrainOverrides {
    pub variant: Option<String>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub base_channels: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
}

pub fn resolve_train(cfg: &FileConfig, over: &TrainOverrides) -> Result<TrainConfig> {
    let sec = &cfg.train;
    let variant_name = over
        .variant
        .clone()
        .or_else(|| sec.variant.clone())
        .unwrap_or_else(|| "SCG(EEG)+MTR".to_string());
    let out = TrainConfig {
        variant: TableVariant::parse(&variant_name)?,
        schedule: resolve_schedule(&cfg.schedule)?,
        base_channels: over.base_channels.or(sec.base_channels).unwrap_or(32),
        batch_size: over.batch_size.or(sec.batch_size).unwrap_or(8),
        epochs: over.epochs.or(sec.epochs).unwrap_or(30),
        learning_rate: over.learning_rate.or(sec.learning_rate).unwrap_or(1e-3),
        beta1: sec.beta1.unwrap_or(0.9),
        beta2: sec.beta2.unwrap_or(0.999),
        seed: over.seed.or(sec.seed).unwrap_or(0),
        checkpoint_every: sec.checkpoint_every.unwrap_or(0),
    };
    out.validate()?;
    Ok(out)
}

pub fn resolve_split(cfg: &FileConfig, seed: Option<u64>) -> Result<SplitSpec> {
    let sec = &cfg.split;
    let d = SplitSpec::default();
    let spec = SplitSpec {
        ratio: match &sec.ratio {
            Some(s) => parse_ratio(s)?,
            None => d.ratio,
        },
        reps: sec.reps.unwrap_or(d.reps),
        test_fraction: sec.test_fraction.unwrap_or(d.test_fraction),
        seed: seed.or(sec.seed).unwrap_or(d.seed),
        ridge: sec.ridge.unwrap_or(d.ridge),
    };
    spec.validate()?;
    Ok(spec)
}

pub fn resolve_ablation(
    cfg: &FileConfig,
    over: &TrainOverrides,
    hemo: Option<String>,
    holdout: Option<f64>,
) -> Result<AblationConfig> {
    let sec = &cfg.ablation;
    let out = AblationConfig {
        train: resolve_train(cfg, over)?,
        split: resolve_split(cfg, None)?,
        hemo: hemo
            .or_else(|| sec.hemo.clone())
            .unwrap_or_else(|| "HbR".to_string()),
        holdout_fraction: holdout.or(sec.holdout_fraction).unwrap_or(0.25),
        policy: parse_policy(sec.policy.as_deref().unwrap_or("fixed_draw"))?,
    };
    out.validate()?;
    Ok(out)
}
