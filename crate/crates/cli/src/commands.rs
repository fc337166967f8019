//! Subcommand implementations. Every command writes its outputs plus a
//! RunManifest into the chosen output directory and never mutates inputs.

use std::fs;
use std::path::{Path, PathBuf};

use scdm_core::corr::{compute_maps, most_correlated_csv, most_correlated_map, CorrelationMaps};
use scdm_core::diffusion::{default_candidate_grid, sample, schedule_search};
use scdm_core::dsp::design::{design_filter, FilterSpec};
use scdm_core::dsp::filt::apply_filter;
use scdm_core::dsp::preprocess::{common_average_reference, segment_epochs};
use scdm_core::dsp::resample::resample;
use scdm_core::error::{Result, ScdmError};
use scdm_core::eval::{
    classify_ratio_sweep, curve_csv, evoked_curve, metrics, rms_distance, run_ablation,
    topography, AblationConfig, TimeWindow,
};
use scdm_core::layout::{load_layouts, reference_layouts, Layouts};
use scdm_core::rng;
use scdm_core::series::{EpochSet, MiLabel, MultichannelSeries};
use scdm_core::synth::generate_coupled;
use scdm_core::trainer::{load_checkpoint, train, TrainConfig};

use crate::config::{parse_policy, FileConfig};
use crate::manifest::RunManifest;
use crate::svg;

fn write_output(manifest: &mut RunManifest, path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes)?;
    manifest.add_output(path);
    Ok(())
}

fn load_epochs(manifest: &mut RunManifest, path: &Path) -> Result<EpochSet> {
    manifest.add_input(path)?;
    EpochSet::load(path)
}

fn layouts_for(path: Option<&Path>) -> Result<Layouts> {
    match path {
        Some(p) => load_layouts(p),
        None => Ok(reference_layouts()),
    }
}

pub fn gen(
    manifest: &mut RunManifest,
    cfg: &FileConfig,
    seed: u64,
    trials: usize,
    out: &Path,
) -> Result<()> {
    let spec = crate::config::resolve_coupling(&cfg.gen)?;
    let (eeg, fnirs, truth) = generate_coupled(seed, trials, &spec)?;
    fs::create_dir_all(out)?;
    let eeg_path = out.join("eeg.epochs");
    let fnirs_path = out.join("fnirs.epochs");
    eeg.save(&eeg_path)?;
    fnirs.save(&fnirs_path)?;
    manifest.add_output(&eeg_path);
    manifest.add_output(&fnirs_path);
    write_output(
        manifest,
        &out.join("ground_truth.json"),
        serde_json::to_string_pretty(&truth)?.as_bytes(),
    )?;
    Ok(())
}

fn parse_events(text: &str) -> Result<Vec<(f64, MiLabel)>> {
    let mut events = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("onset")) {
            continue;
        }
        let (onset, label) = line
            .split_once(',')
            .ok_or_else(|| ScdmError::invalid(format!("bad event line {line:?}")))?;
        let onset: f64 = onset
            .trim()
            .parse()
            .map_err(|_| ScdmError::invalid(format!("bad onset {onset:?}")))?;
        events.push((onset, MiLabel::parse(label.trim())?));
    }
    if events.is_empty() {
        return Err(ScdmError::invalid("no events to segment"));
    }
    Ok(events)
}

#[allow(clippy::too_many_arguments)]
pub fn preprocess(
    manifest: &mut RunManifest,
    input: &Path,
    modality: &str,
    events_path: &Path,
    window_s: f64,
    target_rate: Option<f64>,
    out: &Path,
) -> Result<()> {
    manifest.add_input(input)?;
    manifest.add_input(events_path)?;
    let series = MultichannelSeries::load(input)?;
    let events = parse_events(&fs::read_to_string(events_path)?)?;
    let processed = match modality {
        "eeg" => {
            let car = common_average_reference(&series)?;
            let sos = design_filter(
                &FilterSpec::chebyshev2(4, 0.5, 50.0, false),
                car.sample_rate,
            )?;
            let filtered = apply_filter(&car, &sos, false)?;
            match target_rate {
                Some(r) if r != filtered.sample_rate => resample(&filtered, r)?,
                _ => filtered,
            }
        }
        "fnirs" => {
            let sos = design_filter(
                &FilterSpec::butterworth(6, 0.01, 0.1, true),
                series.sample_rate,
            )?;
            apply_filter(&series, &sos, true)?
        }
        other => {
            return Err(ScdmError::invalid(format!(
                "modality {other:?} is not eeg|fnirs"
            )))
        }
    };
    let epochs = segment_epochs(&processed, &events, window_s)?;
    fs::create_dir_all(out)?;
    let path = out.join(format!("{modality}.epochs"));
    epochs.save(&path)?;
    manifest.add_output(&path);
    Ok(())
}

pub fn corr(
    manifest: &mut RunManifest,
    eeg_path: &Path,
    fnirs_path: &Path,
    layout: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let eeg = load_epochs(manifest, eeg_path)?;
    let fnirs = load_epochs(manifest, fnirs_path)?;
    let layouts = layouts_for(layout)?;
    let maps = compute_maps(&eeg, &fnirs, &layouts)?;
    let rows = most_correlated_map(&maps.c_ef, &layouts)?;
    fs::create_dir_all(out)?;
    write_output(
        manifest,
        &out.join("maps.json"),
        serde_json::to_string(&maps)?.as_bytes(),
    )?;
    write_output(
        manifest,
        &out.join("most_correlated.csv"),
        most_correlated_csv(&rows).as_bytes(),
    )?;
    Ok(())
}

fn standardized_pool(epochs: &EpochSet) -> Vec<f64> {
    let data = epochs.data();
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let sd = (data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n)
        .sqrt()
        .max(1e-12);
    data.iter().map(|v| (v - mean) / sd).collect()
}

pub fn schedule_search_cmd(
    manifest: &mut RunManifest,
    eeg_path: &Path,
    fnirs_path: &Path,
    grid: &str,
    seed: u64,
    out: &Path,
) -> Result<()> {
    if grid != "default" {
        return Err(ScdmError::invalid(format!(
            "unknown candidate grid {grid:?} (only \"default\" is built in)"
        )));
    }
    let eeg = load_epochs(manifest, eeg_path)?;
    let fnirs = load_epochs(manifest, fnirs_path)?;
    let e0 = standardized_pool(&eeg);
    let f0 = standardized_pool(&fnirs);
    let report = schedule_search(&e0, &f0, &default_candidate_grid(), seed)?;
    fs::create_dir_all(out)?;
    let doc = serde_json::json!({
        "report": report,
        "argmin": report.chosen,
        "chosen_spec": report.chosen_spec(),
    });
    write_output(
        manifest,
        &out.join("schedule_search.json"),
        serde_json::to_string_pretty(&doc)?.as_bytes(),
    )?;
    Ok(())
}

fn load_maps(manifest: &mut RunManifest, path: &Path) -> Result<CorrelationMaps> {
    manifest.add_input(path)?;
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn train_cmd(
    manifest: &mut RunManifest,
    eeg_path: &Path,
    fnirs_path: &Path,
    maps_path: &Path,
    cfg: TrainConfig,
    out: &Path,
) -> Result<()> {
    let eeg = load_epochs(manifest, eeg_path)?;
    let fnirs = load_epochs(manifest, fnirs_path)?;
    let maps = load_maps(manifest, maps_path)?;
    let (report, _, _) = train(&cfg, &eeg, &fnirs, &maps, out)?;
    manifest.add_output(&report.checkpoint_path);
    eprintln!("trained in {:.1}s", report.wall_clock_secs);
    // drop the wall-clock field so reruns stay byte-identical
    let mut doc = serde_json::to_value(&report)?;
    doc.as_object_mut().unwrap().remove("wall_clock_secs");
    write_output(
        manifest,
        &out.join("report.json"),
        serde_json::to_string_pretty(&doc)?.as_bytes(),
    )?;
    write_output(
        manifest,
        &out.join("loss_curve.csv"),
        report.loss_curve_csv().as_bytes(),
    )?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn synthesize(
    manifest: &mut RunManifest,
    eeg_path: &Path,
    ckpt_path: &Path,
    maps_path: &Path,
    like: Option<&Path>,
    policy: &str,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let eeg = load_epochs(manifest, eeg_path)?;
    manifest.add_input(ckpt_path)?;
    let maps = load_maps(manifest, maps_path)?;
    let (tcfg, ncfg, store, net) = load_checkpoint(ckpt_path)?;
    if eeg.n_channels() != ncfg.eeg_channels || eeg.n_samples() != ncfg.eeg_samples {
        return Err(ScdmError::shape(format!(
            "EEG epochs are {}x{}, checkpoint expects {}x{}",
            eeg.n_channels(),
            eeg.n_samples(),
            ncfg.eeg_channels,
            ncfg.eeg_samples
        )));
    }
    let schedule = tcfg.schedule.build()?;
    let mut srng = rng::substream(seed, 7);
    let data = sample(
        &net,
        &store,
        eeg.data(),
        eeg.n_trials(),
        Some(&maps),
        &schedule,
        &mut srng,
        parse_policy(policy)?,
    )?;
    let (labels, rate) = match like {
        Some(p) => {
            let template = load_epochs(manifest, p)?;
            if template.n_channels() != ncfg.fnirs_channels {
                return Err(ScdmError::shape(
                    "--like epochs disagree with checkpoint channel count",
                ));
            }
            (template.channel_labels.clone(), template.sample_rate)
        }
        None => (
            (0..ncfg.fnirs_channels).map(|i| format!("SYN{i:02}")).collect(),
            10.0,
        ),
    };
    let synth = EpochSet::new(labels, rate, eeg.labels.clone(), data, ncfg.fnirs_samples)?;
    fs::create_dir_all(out)?;
    let path = out.join("synthetic.epochs");
    synth.save(&path)?;
    manifest.add_output(&path);
    Ok(())
}

pub fn parse_windows(s: &str) -> Result<Vec<TimeWindow>> {
    s.split(',')
        .map(|w| {
            let (a, b) = w
                .split_once(':')
                .ok_or_else(|| ScdmError::invalid(format!("bad window {w:?}")))?;
            Ok(TimeWindow {
                start_s: a
                    .trim()
                    .parse()
                    .map_err(|_| ScdmError::invalid(format!("bad window {w:?}")))?,
                end_s: b
                    .trim()
                    .parse()
                    .map_err(|_| ScdmError::invalid(format!("bad window {w:?}")))?,
            })
        })
        .collect()
}

fn sweep_csv_rows(
    combo: &str,
    eeg: &EpochSet,
    fnirs: Option<&EpochSet>,
    split: &scdm_core::eval::SplitSpec,
    out: &mut String,
) -> Result<()> {
    for (ratio, counts) in classify_ratio_sweep(eeg, fnirs, split)? {
        let m = metrics(&counts);
        out.push_str(&format!(
            "{combo},{ratio},{},{},{},{},{},{},{},{}\n",
            counts.tp,
            counts.fp,
            counts.tn,
            counts.fn_,
            scdm_core::eval::MetricsReport::fmt_pct(m.acc),
            scdm_core::eval::MetricsReport::fmt_pct(m.spe),
            scdm_core::eval::MetricsReport::fmt_pct(m.pre),
            scdm_core::eval::MetricsReport::fmt_pct(m.sen),
        ));
    }
    Ok(())
}

fn export_class_artifacts(
    manifest: &mut RunManifest,
    tag: &str,
    epochs: &EpochSet,
    layouts: &Layouts,
    windows: &[TimeWindow],
    out: &Path,
) -> Result<()> {
    for class in [MiLabel::Lmi, MiLabel::Rmi] {
        let cls = class.as_str().to_lowercase();
        let curve = evoked_curve(epochs, class)?;
        write_output(
            manifest,
            &out.join(format!("curves_{tag}_{cls}.csv")),
            curve_csv(&curve).as_bytes(),
        )?;
        if epochs.n_channels() == layouts.fnirs.len() {
            let class_trials: Vec<usize> = (0..epochs.n_trials())
                .filter(|&t| epochs.labels[t] == class)
                .collect();
            let subset = epochs.select_trials(&class_trials)?;
            let (_, frames) = topography(&subset, &layouts.fnirs.sites, windows)?;
            write_output(
                manifest,
                &out.join(format!("topography_{tag}_{cls}.json")),
                serde_json::to_string(&serde_json::json!({ "frames": frames }))?.as_bytes(),
            )?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    manifest: &mut RunManifest,
    eeg_path: &Path,
    real_path: &Path,
    synth_path: Option<&Path>,
    layout: Option<&Path>,
    windows: Option<&str>,
    split: scdm_core::eval::SplitSpec,
    out: &Path,
) -> Result<()> {
    let eeg = load_epochs(manifest, eeg_path)?;
    let real = load_epochs(manifest, real_path)?;
    let synth = match synth_path {
        Some(p) => Some(load_epochs(manifest, p)?),
        None => None,
    };
    fs::create_dir_all(out)?;
    let layouts = layouts_for(layout)?;
    let windows = match windows {
        Some(s) => parse_windows(s)?,
        None => scdm_core::eval::default_windows(),
    };

    let mut table = String::from("combo,ratio,tp,fp,tn,fn,acc,spe,pre,sen\n");
    sweep_csv_rows("eeg_only", &eeg, None, &split, &mut table)?;
    sweep_csv_rows("eeg_real", &eeg, Some(&real), &split, &mut table)?;
    if let Some(s) = &synth {
        sweep_csv_rows("eeg_synthetic", &eeg, Some(s), &split, &mut table)?;
    }
    write_output(manifest, &out.join("evaluation.csv"), table.as_bytes())?;

    export_class_artifacts(manifest, "real", &real, &layouts, &windows, out)?;
    if let Some(s) = &synth {
        export_class_artifacts(manifest, "synthetic", s, &layouts, &windows, out)?;
        let mut rms = serde_json::Map::new();
        for class in [MiLabel::Lmi, MiLabel::Rmi] {
            let d = rms_distance(&evoked_curve(&real, class)?, &evoked_curve(s, class)?)?;
            rms.insert(class.as_str().to_string(), serde_json::json!(d));
        }
        write_output(
            manifest,
            &out.join("curve_rms.json"),
            serde_json::to_string_pretty(&serde_json::Value::Object(rms))?.as_bytes(),
        )?;
    }
    Ok(())
}

pub fn ablate(
    manifest: &mut RunManifest,
    data: &Path,
    layout: Option<&Path>,
    cfg: AblationConfig,
    out: &Path,
) -> Result<()> {
    let eeg = load_epochs(manifest, &data.join("eeg.epochs"))?;
    let fnirs = load_epochs(manifest, &data.join("fnirs.epochs"))?;
    let layouts = layouts_for(layout)?;
    let table = run_ablation(&eeg, &fnirs, &layouts, &cfg, out)?;
    write_output(manifest, &out.join("ablation.csv"), table.to_csv().as_bytes())?;
    Ok(())
}

fn csv_line_series(text: &str) -> Result<Vec<(String, Vec<(f64, f64)>)>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| ScdmError::invalid("empty csv"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 {
        return Err(ScdmError::invalid("csv has no data columns"));
    }
    let mut series: Vec<(String, Vec<(f64, f64)>)> = cols[1..]
        .iter()
        .map(|c| (c.to_string(), Vec::new()))
        .collect();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        let x: f64 = cells[0]
            .parse()
            .map_err(|_| ScdmError::invalid(format!("bad csv cell {:?}", cells[0])))?;
        for (i, s) in series.iter_mut().enumerate() {
            if let Some(cell) = cells.get(i + 1) {
                if let Ok(y) = cell.parse::<f64>() {
                    s.1.push((x, y));
                }
            }
        }
    }
    Ok(series)
}

pub fn export_plots(manifest: &mut RunManifest, data: &Path, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut emitted = 0usize;
    let mut entries: Vec<PathBuf> = fs::read_dir(data)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for path in entries {
        let name = match path.file_name().and_then(|n| n.to_str()) {
            Some(n) => n,
            None => continue,
        };
        if name == "loss_curve.csv" || (name.starts_with("curves_") && name.ends_with(".csv")) {
            manifest.add_input(&path)?;
            let mut series = csv_line_series(&fs::read_to_string(&path)?)?;
            series.truncate(6); // keep charts readable
            let svg = svg::line_chart(name.trim_end_matches(".csv"), &series);
            let dest = out.join(format!("{}.svg", name.trim_end_matches(".csv")));
            write_output(manifest, &dest, svg.as_bytes())?;
            emitted += 1;
        } else if name.starts_with("topography_") && name.ends_with(".json") {
            manifest.add_input(&path)?;
            let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path)?)?;
            let frames: Vec<scdm_core::eval::TopographyFrame> =
                serde_json::from_value(doc["frames"].clone())?;
            for (i, f) in frames.iter().enumerate() {
                let title = format!(
                    "{} {:.0}-{:.0}s",
                    name.trim_end_matches(".json"),
                    f.window.start_s,
                    f.window.end_s
                );
                let svg = svg::heatmap(&title, &f.raster, f.raster_size);
                let dest = out.join(format!("{}_w{i}.svg", name.trim_end_matches(".json")));
                write_output(manifest, &dest, svg.as_bytes())?;
                emitted += 1;
            }
        }
    }
    if emitted == 0 {
        return Err(ScdmError::invalid(format!(
            "no plottable files (loss_curve.csv, curves_*.csv, topography_*.json) in {}",
            data.display()
        )));
    }
    Ok(())
}
