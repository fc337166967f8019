//! Algorithm-1 training loop: noise-prediction loss, adaptive-moment
//! optimization, checkpointing, and assembly of the six ablation variants.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corr::CorrelationMaps;
use crate::diffusion::{q_sample, ScheduleSpec};
use crate::error::{Result, ScdmError};
use crate::nn::{NetConfig, ParamStore, SpatialKind, TemporalKind, UNet, Variant};
use crate::rng;
use crate::series::EpochSet;
use crate::tape::Tape;

/// The six Table-style module pairings. The paper's "SCG (EEG)" is the
/// cross-modal map wiring (grid_ef/grid_fe); "SCG (fNIRS)" feeds the fNIRS
/// auto-correlation grid to both query and key paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableVariant {
    AttnCov,
    AttnMtr,
    ScgEegCov,
    ScgEegMtr,
    ScgFnirsCov,
    ScgFnirsMtr,
}

impl TableVariant {
    pub fn all() -> [TableVariant; 6] {
        [
            TableVariant::AttnCov,
            TableVariant::AttnMtr,
            TableVariant::ScgEegCov,
            TableVariant::ScgEegMtr,
            TableVariant::ScgFnirsCov,
            TableVariant::ScgFnirsMtr,
        ]
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TableVariant::AttnCov => "ATTN+COV",
            TableVariant::AttnMtr => "ATTN+MTR",
            TableVariant::ScgEegCov => "SCG(EEG)+COV",
            TableVariant::ScgEegMtr => "SCG(EEG)+MTR",
            TableVariant::ScgFnirsCov => "SCG(fNIRS)+COV",
            TableVariant::ScgFnirsMtr => "SCG(fNIRS)+MTR",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::all()
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ScdmError::invalid(format!("unknown variant {s}")))
    }

    pub fn to_modules(self) -> Variant {
        let (spatial, temporal) = match self {
            TableVariant::AttnCov => (SpatialKind::Attn, TemporalKind::Cov),
            TableVariant::AttnMtr => (SpatialKind::Attn, TemporalKind::Mtr),
            TableVariant::ScgEegCov => (SpatialKind::ScgMap, TemporalKind::Cov),
            TableVariant::ScgEegMtr => (SpatialKind::ScgMap, TemporalKind::Mtr),
            TableVariant::ScgFnirsCov => (SpatialKind::ScgFnirs, TemporalKind::Cov),
            TableVariant::ScgFnirsMtr => (SpatialKind::ScgFnirs, TemporalKind::Mtr),
        };
        Variant { spatial, temporal }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: TableVariant,
    pub schedule: ScheduleSpec,
    pub base_channels: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    /// Save a checkpoint every this many epochs (0 = final only).
    pub checkpoint_every: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0
            || self.learning_rate <= 0.0
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
        {
            return Err(ScdmError::invalid("non-positive training hyperparameter"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub variant: String,
    pub epoch_losses: Vec<f64>,
    pub wall_clock_secs: f64,
    pub checkpoint_path: PathBuf,
    pub n_parameters: usize,
    pub config: TrainConfig,
}

impl TrainReport {
    pub fn loss_curve_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss\n");
        for (i, l) in self.epoch_losses.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, l));
        }
        out
    }
}

/// Mean squared error over all elements (plain two-pass definition).
pub fn loss(eps_true: &[f64], eps_hat: &[f64]) -> Result<f64> {
    if eps_true.len() != eps_hat.len() || eps_true.is_empty() {
        return Err(ScdmError::shape(format!(
            "loss over {} vs {} values",
            eps_true.len(),
            eps_hat.len()
        )));
    }
    let n = eps_true.len() as f64;
    Ok(eps_true
        .iter()
        .zip(eps_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Adaptive moment estimation with bias correction.
#[derive(Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: usize,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &BTreeMap<String, Vec<f64>>,
    ) -> Result<()> {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (name, g) in grads {
            let p = store.get_mut(name)?;
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p.values[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
            if p.values.iter().any(|x| !x.is_finite()) {
                return Err(ScdmError::Divergence(format!(
                    "parameter {name} became non-finite at optimizer step {}",
                    self.step
                )));
            }
        }
        Ok(())
    }
}

/// Assemble a fresh network for one Table variant.
pub fn build_variant(
    variant: TableVariant,
    cfg: NetConfig,
    store: &mut ParamStore,
    rng: &mut rng::Stream,
) -> Result<UNet> {
    UNet::new(cfg, variant.to_modules(), store, rng)
}

fn epoch_set_net_config(eeg: &EpochSet, fnirs: &EpochSet, cfg: &TrainConfig) -> NetConfig {
    NetConfig {
        eeg_channels: eeg.n_channels(),
        eeg_samples: eeg.n_samples(),
        fnirs_channels: fnirs.n_channels(),
        fnirs_samples: fnirs.n_samples(),
        base_channels: cfg.base_channels,
        max_t: cfg.schedule.t,
    }
}

/// Rebuild the network described by a checkpoint and load its parameters.
pub fn load_checkpoint(path: &Path) -> Result<(TrainConfig, NetConfig, ParamStore, UNet)> {
    let (loaded, echo) = ParamStore::load(path)?;
    let tcfg: TrainConfig = serde_json::from_value(
        echo.get("train")
            .ok_or_else(|| ScdmError::Container("checkpoint missing train config".into()))?
            .clone(),
    )?;
    let ncfg: NetConfig = serde_json::from_value(
        echo.get("net")
            .ok_or_else(|| ScdmError::Container("checkpoint missing net config".into()))?
            .clone(),
    )?;
    let mut store = ParamStore::new();
    let mut init_rng = rng::substream(tcfg.seed, 0);
    let net = build_variant(tcfg.variant, ncfg.clone(), &mut store, &mut init_rng)?;
    let names: Vec<String> = store.names().map(|n| n.to_string()).collect();
    for name in names {
        let trained = loaded.get(&name)?;
        let fresh = store.get_mut(&name)?;
        if trained.shape != fresh.shape {
            return Err(ScdmError::Container(format!(
                "checkpoint parameter {name} has shape {:?}, expected {:?}",
                trained.shape, fresh.shape
            )));
        }
        fresh.values = trained.values.clone();
    }
    Ok((tcfg, ncfg, store, net))
}

/// Algorithm-1 training over trial-aligned EEG/fNIRS epochs. Correlation
/// maps are computed once by the caller from the training split and stay
/// frozen for the run. Returns the report plus the trained parameters.
pub fn train(
    cfg: &TrainConfig,
    eeg: &EpochSet,
    fnirs: &EpochSet,
    maps: &CorrelationMaps,
    out_dir: &Path,
) -> Result<(TrainReport, ParamStore, UNet)> {
    cfg.validate()?;
    if eeg.n_trials() != fnirs.n_trials() {
        return Err(ScdmError::shape(format!(
            "{} EEG trials vs {} fNIRS trials",
            eeg.n_trials(),
            fnirs.n_trials()
        )));
    }
    let schedule = cfg.schedule.build()?;
    if !schedule.is_accepted() {
        return Err(ScdmError::invalid(format!(
            "schedule leaves alpha_bar_T = {:.3e} >= 1e-2; pick a stronger one",
            schedule.alpha_bar.last().unwrap()
        )));
    }
    std::fs::create_dir_all(out_dir)?;
    let start = Instant::now();

    let mut init_rng = rng::substream(cfg.seed, 0);
    let mut order_rng = rng::substream(cfg.seed, 1);
    let mut noise_rng = rng::substream(cfg.seed, 2);

    let net_cfg = epoch_set_net_config(eeg, fnirs, cfg);
    let mut store = ParamStore::new();
    let net = build_variant(cfg.variant, net_cfg.clone(), &mut store, &mut init_rng)?;
    let mut opt = Adam::new(cfg.learning_rate, cfg.beta1, cfg.beta2);

    let n_trials = eeg.n_trials();
    let el = eeg.n_channels() * eeg.n_samples();
    let fl = fnirs.n_channels() * fnirs.n_samples();
    // checkpoints carry both configs so a loader can rebuild the network
    let config_echo = serde_json::json!({ "train": cfg, "net": net_cfg });

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        // Fisher-Yates trial order
        let mut order: Vec<usize> = (0..n_trials).collect();
        for i in (1..n_trials).rev() {
            let j = order_rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let n = chunk.len();
            let mut ts = Vec::with_capacity(n);
            let mut e_t = Vec::with_capacity(n * el);
            let mut f_t = Vec::with_capacity(n * fl);
            let mut eps_f = Vec::with_capacity(n * fl);
            for &trial in chunk {
                let t = noise_rng.gen_range(1..=schedule.t);
                ts.push(t);
                // f-side noise first, matching forward_pair draw order; the
                // loss target is always the fNIRS-line noise
                let ef = rng::normal_vec(&mut noise_rng, fl);
                let ee = if el == fl {
                    ef.clone()
                } else {
                    rng::normal_vec(&mut noise_rng, el)
                };
                f_t.extend(q_sample(fnirs.trial(trial), t, &ef, &schedule)?);
                e_t.extend(q_sample(eeg.trial(trial), t, &ee, &schedule)?);
                eps_f.extend(ef);
            }

            let mut tape = Tape::new();
            let bound = store.bind(&mut tape);
            let ev = tape.constant(vec![n, eeg.n_channels(), eeg.n_samples()], e_t);
            let fv = tape.constant(vec![n, fnirs.n_channels(), fnirs.n_samples()], f_t);
            let pred = net.forward(&mut tape, &bound, ev, fv, Some(maps), &ts)?;
            let target = tape.constant(vec![n, fnirs.n_channels(), fnirs.n_samples()], eps_f);
            let l = tape.mse_loss(pred, target)?;
            let lv = tape.values(l)[0];
            if !lv.is_finite() {
                return Err(ScdmError::Divergence(format!(
                    "loss became non-finite at epoch {epoch}"
                )));
            }
            epoch_loss += lv;
            batches += 1;
            tape.backward(l)?;
            let mut grads = BTreeMap::new();
            for (name, var) in bound.iter() {
                if let Some(g) = tape.grad(var) {
                    grads.insert(name.to_string(), g.to_vec());
                }
            }
            opt.step(&mut store, &grads)?;
        }
        epoch_losses.push(epoch_loss / batches.max(1) as f64);
        if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && epoch != cfg.epochs {
            store.save(&out_dir.join(format!("ckpt_epoch{epoch}.scdm")), config_echo.clone())?;
        }
    }

    let checkpoint_path = out_dir.join("ckpt_final.scdm");
    store.save(&checkpoint_path, config_echo)?;
    let report = TrainReport {
        variant: cfg.variant.as_str().to_string(),
        epoch_losses,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        checkpoint_path,
        n_parameters: store.n_values(),
        config: cfg.clone(),
    };
    Ok((report, store, net))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corr::compute_maps;
    use crate::layout::reference_layouts;
    use crate::synth::{generate_coupled, CouplingSpec};

    pub(crate) fn mini_coupling() -> CouplingSpec {
        CouplingSpec {
            eeg_samples: 320,
            eeg_rate: 160.0,
            fnirs_samples: 64,
            fnirs_rate: 10.0,
            ..CouplingSpec::default()
        }
    }

    pub(crate) fn mini_train_config(variant: TableVariant, epochs: usize) -> TrainConfig {
        TrainConfig {
            variant,
            schedule: ScheduleSpec::linear(50, 1e-3, 0.2),
            base_channels: 4,
            batch_size: 8,
            epochs,
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            seed: 11,
            checkpoint_every: 0,
        }
    }

    fn select_channels(set: &EpochSet, keep: &[usize]) -> EpochSet {
        let labels: Vec<String> = keep
            .iter()
            .map(|&c| set.channel_labels[c].clone())
            .collect();
        let mut data = Vec::with_capacity(set.n_trials() * keep.len() * set.n_samples());
        for t in 0..set.n_trials() {
            for &c in keep {
                data.extend_from_slice(set.trial_channel(t, c));
            }
        }
        EpochSet::new(
            labels,
            set.sample_rate,
            set.labels.clone(),
            data,
            set.n_samples(),
        )
        .unwrap()
    }

    /// Miniature coupled fixture: a channel subset of the reference
    /// generator, so the 4-wide network isn't rank-starved by 36 outputs.
    pub(crate) fn mini_data(
        n_trials: usize,
    ) -> (EpochSet, EpochSet, crate::corr::CorrelationMaps) {
        let (eeg_full, fnirs_full, _) = generate_coupled(21, n_trials, &mini_coupling()).unwrap();
        let full = reference_layouts();
        let keep_e: Vec<usize> = (0..6).collect();
        // fNIRS channels whose nearest EEG neighbours fall inside the kept set
        let keep_f: Vec<usize> = (0..fnirs_full.n_channels())
            .filter(|&c| {
                let site = &full.fnirs.sites[c];
                let near = full.eeg.nearest_site(site.x, site.y);
                keep_e.contains(&near)
            })
            .take(4)
            .collect();
        let eeg = select_channels(&eeg_full, &keep_e);
        let fnirs = select_channels(&fnirs_full, &keep_f);
        let layouts = crate::layout::Layouts {
            eeg: crate::layout::ChannelLayout::new(
                crate::layout::Modality::Eeg,
                keep_e.iter().map(|&c| full.eeg.sites[c].clone()).collect(),
            )
            .unwrap(),
            fnirs: crate::layout::ChannelLayout::new(
                crate::layout::Modality::Fnirs,
                keep_f.iter().map(|&c| full.fnirs.sites[c].clone()).collect(),
            )
            .unwrap(),
        };
        let maps = compute_maps(&eeg, &fnirs, &layouts).unwrap();
        (eeg, fnirs, maps)
    }

    #[test]
    fn loss_examples_and_oracle() {
        assert_eq!(loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let c = 0.3;
        let l = loss(&[0.0; 5], &[c; 5]).unwrap();
        assert!((l - c * c).abs() < 1e-15);
        assert!(loss(&[1.0], &[1.0, 2.0]).is_err());

        // compensated-summation oracle
        let mut r = rng::stream(201);
        let a = rng::normal_vec(&mut r, 1000);
        let b = rng::normal_vec(&mut r, 1000);
        let mut sum = 0.0;
        let mut comp = 0.0;
        for (x, y) in a.iter().zip(&b) {
            let term = (x - y) * (x - y);
            let t = sum + term;
            comp += if sum.abs() >= term.abs() {
                (sum - t) + term
            } else {
                (term - t) + sum
            };
            sum = t;
        }
        let oracle = (sum + comp) / 1000.0;
        assert!((loss(&a, &b).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn adam_moves_toward_minimum() {
        // minimize (w - 3)^2 elementwise
        let mut store = ParamStore::new();
        store.insert_zeros("w", vec![4]).unwrap();
        let mut opt = Adam::new(0.1, 0.9, 0.999);
        for _ in 0..300 {
            let g: Vec<f64> = store
                .get("w")
                .unwrap()
                .values
                .iter()
                .map(|w| 2.0 * (w - 3.0))
                .collect();
            let mut grads = BTreeMap::new();
            grads.insert("w".to_string(), g);
            opt.step(&mut store, &grads).unwrap();
        }
        for w in &store.get("w").unwrap().values {
            assert!((w - 3.0).abs() < 0.1, "w = {w}");
        }
    }

    #[test]
    fn variant_names_round_trip_and_differ_in_size() {
        let (eeg, fnirs, _) = mini_data(2);
        let cfg = mini_train_config(TableVariant::ScgEegMtr, 1);
        let net_cfg = epoch_set_net_config(&eeg, &fnirs, &cfg);
        let mut sizes = Vec::new();
        for v in TableVariant::all() {
            assert_eq!(TableVariant::parse(v.as_str()).unwrap(), v);
            let mut store = ParamStore::new();
            let mut r = rng::stream(7);
            build_variant(v, net_cfg.clone(), &mut store, &mut r).unwrap();
            sizes.push((v.as_str(), store.n_values()));
        }
        // spatial family changes the parameter count
        assert_ne!(sizes[0].1, sizes[2].1);
        assert_ne!(sizes[2].1, sizes[4].1);
    }

    #[test]
    fn scdm_wiring_is_scg_eeg_plus_mtr() {
        let v = TableVariant::ScgEegMtr.to_modules();
        assert_eq!(v, Variant::scdm());
        let b = TableVariant::AttnCov.to_modules();
        assert_eq!(b.spatial, SpatialKind::Attn);
        assert_eq!(b.temporal, TemporalKind::Cov);
    }

    #[test]
    fn unaccepted_schedule_rejected() {
        let (eeg, fnirs, maps) = mini_data(4);
        let mut cfg = mini_train_config(TableVariant::ScgEegMtr, 1);
        cfg.schedule = ScheduleSpec::linear(10, 1e-4, 1e-3);
        let dir = tempfile::tempdir().unwrap();
        assert!(train(&cfg, &eeg, &fnirs, &maps, dir.path()).is_err());
    }

    #[test]
    fn zero_epoch_checkpoint_equals_initialization() {
        let (eeg, fnirs, maps) = mini_data(4);
        let cfg = mini_train_config(TableVariant::ScgEegMtr, 0);
        let dir = tempfile::tempdir().unwrap();
        let (report, store, _) = train(&cfg, &eeg, &fnirs, &maps, dir.path()).unwrap();
        assert!(report.epoch_losses.is_empty());

        let mut init_rng = rng::substream(cfg.seed, 0);
        let mut fresh = ParamStore::new();
        let net_cfg = epoch_set_net_config(&eeg, &fnirs, &cfg);
        build_variant(cfg.variant, net_cfg, &mut fresh, &mut init_rng).unwrap();
        for name in fresh.names() {
            assert_eq!(
                fresh.get(name).unwrap().values,
                store.get(name).unwrap().values,
                "{name}"
            );
        }
        let (loaded, _) = ParamStore::load(&report.checkpoint_path).unwrap();
        assert_eq!(loaded.get("head").unwrap().values, store.get("head").unwrap().values);
    }

    #[test]
    fn checkpoint_loads_back_into_a_working_net() {
        let (eeg, fnirs, maps) = mini_data(8);
        let cfg = mini_train_config(TableVariant::ScgEegMtr, 2);
        let dir = tempfile::tempdir().unwrap();
        let (report, store, _) = train(&cfg, &eeg, &fnirs, &maps, dir.path()).unwrap();
        let (tcfg, ncfg, loaded, _) = load_checkpoint(&report.checkpoint_path).unwrap();
        assert_eq!(tcfg.variant, cfg.variant);
        assert_eq!(ncfg.eeg_channels, eeg.n_channels());
        for name in store.names() {
            assert_eq!(
                loaded.get(name).unwrap().values,
                store.get(name).unwrap().values,
                "{name}"
            );
        }
    }

    #[test]
    fn training_loss_halves_on_miniature_fixture() {
        let (eeg, fnirs, maps) = mini_data(40);
        let cfg = mini_train_config(TableVariant::ScgEegMtr, 45);
        let dir = tempfile::tempdir().unwrap();
        let (report, _, _) = train(&cfg, &eeg, &fnirs, &maps, dir.path()).unwrap();
        assert!(report.epoch_losses.iter().all(|l| l.is_finite()));
        let first = report.epoch_losses[0];
        let last = *report.epoch_losses.last().unwrap();
        assert!(
            last < 0.5 * first,
            "epoch 1 loss {first}, final loss {last}"
        );
    }

    #[test]
    fn training_is_reproducible() {
        let (eeg, fnirs, maps) = mini_data(8);
        let cfg = mini_train_config(TableVariant::ScgFnirsCov, 2);
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let (r1, _, _) = train(&cfg, &eeg, &fnirs, &maps, d1.path()).unwrap();
        let (r2, _, _) = train(&cfg, &eeg, &fnirs, &maps, d2.path()).unwrap();
        assert_eq!(r1.epoch_losses, r2.epoch_losses);
    }

    #[test]
    fn all_variants_train_one_step() {
        let (eeg, fnirs, maps) = mini_data(4);
        for v in TableVariant::all() {
            let mut cfg = mini_train_config(v, 1);
            cfg.batch_size = 4;
            let dir = tempfile::tempdir().unwrap();
            let (report, _, _) = train(&cfg, &eeg, &fnirs, &maps, dir.path()).unwrap();
            assert_eq!(report.epoch_losses.len(), 1, "{}", v.as_str());
            assert!(report.epoch_losses[0].is_finite());
        }
    }
}
