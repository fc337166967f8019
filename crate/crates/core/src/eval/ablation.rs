//! Ablation runner: train every module pairing, synthesize fNIRS for a
//! held-out split, and score EEG + synthetic with the built-in classifier.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corr::compute_maps;
use crate::diffusion::{sample, ENoisePolicy};
use crate::error::{Result, ScdmError};
use crate::eval::classify::{classify, SplitSpec};
use crate::eval::metrics::{metrics, MetricsReport};
use crate::layout::Layouts;
use crate::rng;
use crate::series::{EpochSet, MiLabel};
use crate::trainer::{train, TableVariant, TrainConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationConfig {
    /// Training template; the variant field is overridden per row.
    pub train: TrainConfig,
    pub split: SplitSpec,
    /// Hemoglobin label recorded in the rows (e.g. HbR, HbO).
    pub hemo: String,
    /// Fraction of trials held out for synthesis + classification.
    pub holdout_fraction: f64,
    pub policy: ENoisePolicy,
}

impl AblationConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.split.validate()?;
        if !(0.0..1.0).contains(&self.holdout_fraction) || self.holdout_fraction == 0.0 {
            return Err(ScdmError::invalid("holdout_fraction must be in (0, 1)"));
        }
        Ok(())
    }
}

/// One table row: metrics as percents, or the recorded failure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub hemo: String,
    pub variant: String,
    pub acc: Option<f64>,
    pub spe: Option<f64>,
    pub pre: Option<f64>,
    pub sen: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("hemo,variant,acc,spe,pre,sen,error\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.hemo,
                r.variant,
                fmt_cell(r.acc),
                fmt_cell(r.spe),
                fmt_cell(r.pre),
                fmt_cell(r.sen),
                r.error.as_deref().unwrap_or("")
            ));
        }
        out
    }

    /// Report reader for `to_csv` output (and Table-style fixtures).
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| ScdmError::invalid("empty ablation table"))?;
        if header != "hemo,variant,acc,spe,pre,sen,error" {
            return Err(ScdmError::invalid(format!(
                "unexpected ablation header {header:?}"
            )));
        }
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let cells: Vec<&str> = line.splitn(7, ',').collect();
            if cells.len() != 7 {
                return Err(ScdmError::invalid(format!("short ablation row {line:?}")));
            }
            rows.push(AblationRow {
                hemo: cells[0].to_string(),
                variant: cells[1].to_string(),
                acc: MetricsReport::parse_pct(cells[2])?,
                spe: MetricsReport::parse_pct(cells[3])?,
                pre: MetricsReport::parse_pct(cells[4])?,
                sen: MetricsReport::parse_pct(cells[5])?,
                error: if cells[6].is_empty() {
                    None
                } else {
                    Some(cells[6].to_string())
                },
            });
        }
        Ok(AblationTable { rows })
    }

    /// Mean ACC (percent) over the rows whose variant name contains `tag`.
    pub fn mean_acc_of(&self, tag: &str) -> Option<f64> {
        let accs: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.variant.contains(tag))
            .filter_map(|r| r.acc)
            .collect();
        if accs.is_empty() {
            None
        } else {
            Some(accs.iter().sum::<f64>() / accs.len() as f64)
        }
    }
}

fn fmt_cell(v: Option<f64>) -> String {
    match v {
        Some(p) => format!("{p:.2}"),
        None => String::new(),
    }
}

/// Class-stratified deterministic split: every k-th trial of each class
/// goes to the holdout side.
pub fn stratified_split(labels: &[MiLabel], holdout_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut hold = Vec::new();
    let stride = (1.0 / holdout_fraction).round().max(1.0) as usize;
    let mut seen = std::collections::HashMap::new();
    for (i, l) in labels.iter().enumerate() {
        let k = seen.entry(*l).or_insert(0usize);
        if *k % stride == stride - 1 {
            hold.push(i);
        } else {
            train.push(i);
        }
        *k += 1;
    }
    (train, hold)
}

fn run_one_variant(
    variant: TableVariant,
    eeg: &EpochSet,
    fnirs: &EpochSet,
    layouts: &Layouts,
    cfg: &AblationConfig,
    out_dir: &Path,
) -> Result<MetricsReport> {
    let (train_idx, hold_idx) = stratified_split(&eeg.labels, cfg.holdout_fraction);
    if train_idx.is_empty() || hold_idx.is_empty() {
        return Err(ScdmError::invalid("degenerate train/holdout split"));
    }
    let eeg_train = eeg.select_trials(&train_idx)?;
    let fnirs_train = fnirs.select_trials(&train_idx)?;
    let eeg_hold = eeg.select_trials(&hold_idx)?;

    let maps = compute_maps(&eeg_train, &fnirs_train, layouts)?;
    let mut tcfg = cfg.train.clone();
    tcfg.variant = variant;
    let var_dir = out_dir.join(variant.as_str().replace(['(', ')', '+'], "_"));
    let (_, store, net) = train(&tcfg, &eeg_train, &fnirs_train, &maps, &var_dir)?;

    let schedule = tcfg.schedule.build()?;
    let mut srng = rng::substream(tcfg.seed, 7);
    let synthetic = sample(
        &net,
        &store,
        eeg_hold.data(),
        eeg_hold.n_trials(),
        Some(&maps),
        &schedule,
        &mut srng,
        cfg.policy,
    )?;
    let synth_set = EpochSet::new(
        fnirs.channel_labels.clone(),
        fnirs.sample_rate,
        eeg_hold.labels.clone(),
        synthetic,
        fnirs.n_samples(),
    )?;
    let counts = classify(&eeg_hold, Some(&synth_set), &cfg.split)?;
    Ok(metrics(&counts))
}

/// Train all six pairings in the fixed table order; per-variant failures
/// are recorded in their row and do not abort the siblings.
pub fn run_ablation(
    eeg: &EpochSet,
    fnirs: &EpochSet,
    layouts: &Layouts,
    cfg: &AblationConfig,
    out_dir: &Path,
) -> Result<AblationTable> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let rows: Vec<AblationRow> = TableVariant::all()
        .into_par_iter()
        .map(|variant| {
            let name = variant.as_str().to_string();
            match run_one_variant(variant, eeg, fnirs, layouts, cfg, out_dir) {
                Ok(m) => AblationRow {
                    hemo: cfg.hemo.clone(),
                    variant: name,
                    acc: m.acc.map(|v| v * 100.0),
                    spe: m.spe.map(|v| v * 100.0),
                    pre: m.pre.map(|v| v * 100.0),
                    sen: m.sen.map(|v| v * 100.0),
                    error: None,
                },
                Err(e) => AblationRow {
                    hemo: cfg.hemo.clone(),
                    variant: name,
                    acc: None,
                    spe: None,
                    pre: None,
                    sen: None,
                    error: Some(e.to_string().replace(',', ";")),
                },
            }
        })
        .collect();
    Ok(AblationTable { rows })
}
