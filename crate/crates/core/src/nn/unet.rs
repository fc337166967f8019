//! Six-block U-Net noise predictor with swappable spatial/temporal modules.
//!
//! Both modality inputs are adapted to a common base x length grid, fused by
//! a kernel-1 convolution, pushed through three down blocks and three up
//! blocks with concatenate-then-fuse skips, and mapped back to the fNIRS
//! channel count by a zero-initialized head.

use serde::{Deserialize, Serialize};

use crate::corr::CorrelationMaps;
use crate::error::{Result, ScdmError};
use crate::nn::controls::{AttnLayer, CovLayer};
use crate::nn::layers::Conv1d;
use crate::nn::mtr::{MtrDirection, MtrLayer};
use crate::nn::params::{Bound, ParamStore};
use crate::nn::scg::{ScgGrids, ScgLayer, ScgMode};
use crate::nn::time_embed::{TimeEmbed, TimeInject};
use crate::rng::Stream;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialKind {
    ScgMap,
    ScgEeg,
    ScgFnirs,
    Attn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalKind {
    Mtr,
    Cov,
}

/// One spatial/temporal module pairing, fixed for the whole network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub spatial: SpatialKind,
    pub temporal: TemporalKind,
}

impl Variant {
    pub fn scdm() -> Self {
        Variant {
            spatial: SpatialKind::ScgMap,
            temporal: TemporalKind::Mtr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub eeg_channels: usize,
    pub eeg_samples: usize,
    pub fnirs_channels: usize,
    pub fnirs_samples: usize,
    /// Channel width after the adapters; 32 in the reference configuration.
    pub base_channels: usize,
    /// Largest diffusion step the time embedding accepts.
    pub max_t: usize,
}

impl NetConfig {
    pub fn reference(max_t: usize) -> Self {
        NetConfig {
            eeg_channels: 30,
            eeg_samples: 4000,
            fnirs_channels: 36,
            fnirs_samples: 256,
            base_channels: 32,
            max_t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fnirs_samples % 8 != 0 || self.fnirs_samples < 32 {
            return Err(ScdmError::invalid(
                "fnirs_samples must be a multiple of 8 and at least 32",
            ));
        }
        if self.base_channels < 2 {
            return Err(ScdmError::invalid("base_channels must be at least 2"));
        }
        if self.eeg_channels == 0 || self.fnirs_channels == 0 || self.eeg_samples == 0 {
            return Err(ScdmError::invalid("channel and sample counts must be positive"));
        }
        if self.max_t == 0 {
            return Err(ScdmError::invalid("max_t must be positive"));
        }
        Ok(())
    }

    /// Channel widths at block boundaries: [c0, c1, c2, c3]. Widths halve per
    /// down block but never drop below 1.
    pub fn channel_trajectory(&self) -> [usize; 4] {
        let c0 = self.base_channels;
        let c1 = (c0 / 2).max(1);
        let c2 = (c1 / 2).max(1);
        let c3 = (c2 / 2).max(1);
        [c0, c1, c2, c3]
    }
}

#[derive(Debug, Clone)]
enum Spatial {
    Scg(ScgLayer),
    Attn(AttnLayer),
}

impl Spatial {
    fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        grids: Option<&ScgGrids>,
        x: Var,
    ) -> Result<Var> {
        match self {
            Spatial::Scg(layer) => {
                let grids =
                    grids.ok_or_else(|| ScdmError::invalid("SCG variant needs correlation maps"))?;
                layer.forward(tape, bound, grids, x)
            }
            Spatial::Attn(layer) => layer.forward(tape, bound, x),
        }
    }
}

#[derive(Debug, Clone)]
enum Temporal {
    Mtr(MtrLayer),
    Cov(CovLayer),
}

impl Temporal {
    fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        match self {
            Temporal::Mtr(layer) => layer.forward(tape, bound, x),
            Temporal::Cov(layer) => layer.forward(tape, bound, x),
        }
    }
}

#[derive(Debug, Clone)]
struct Block {
    inject: TimeInject,
    spatial: Spatial,
    temporal: Temporal,
}

#[derive(Debug)]
pub struct UNet {
    pub cfg: NetConfig,
    pub variant: Variant,
    scg_mode: Option<ScgMode>,
    eeg_proj: Conv1d,
    fnirs_proj: Conv1d,
    fusion: Conv1d,
    time_embed: TimeEmbed,
    down: Vec<Block>,
    up: Vec<Block>,
    skip_fuse: Vec<Conv1d>,
    head: Conv1d,
}

const EEG_TIME_PROJ: &str = "adapter.eeg.time";

impl UNet {
    pub fn new(
        cfg: NetConfig,
        variant: Variant,
        store: &mut ParamStore,
        rng: &mut Stream,
    ) -> Result<Self> {
        cfg.validate()?;
        let [c0, c1, c2, c3] = cfg.channel_trajectory();
        let scg_mode = match variant.spatial {
            SpatialKind::ScgMap => Some(ScgMode::MapEegToFnirs),
            SpatialKind::ScgEeg => Some(ScgMode::SpatialEeg),
            SpatialKind::ScgFnirs => Some(ScgMode::SpatialFnirs),
            SpatialKind::Attn => None,
        };

        let eeg_proj = Conv1d::pointwise(store, rng, "adapter.eeg.proj", cfg.eeg_channels, c0)?;
        store.insert_uniform(
            EEG_TIME_PROJ,
            vec![cfg.eeg_samples, cfg.fnirs_samples],
            cfg.eeg_samples,
            rng,
        )?;
        let fnirs_proj = Conv1d::pointwise(store, rng, "adapter.fnirs.proj", cfg.fnirs_channels, c0)?;
        let fusion = Conv1d::pointwise(store, rng, "fusion", 2 * c0, c0)?;

        let width = (c0.max(4) + 1) / 2 * 2;
        let time_embed = TimeEmbed::new(store, rng, "time", width, cfg.max_t)?;

        let mk_block = |store: &mut ParamStore,
                        rng: &mut Stream,
                        name: &str,
                        d_in: usize,
                        d_out: usize,
                        dir: MtrDirection|
         -> Result<Block> {
            let inject = TimeInject::new(store, rng, &format!("{name}.time"), width, d_in)?;
            let spatial = match scg_mode {
                Some(mode) => Spatial::Scg(ScgLayer::new(
                    store,
                    rng,
                    &format!("{name}.scg"),
                    d_in,
                    d_out,
                    mode,
                    cfg.eeg_channels,
                    cfg.fnirs_channels,
                )?),
                None => Spatial::Attn(AttnLayer::new(
                    store,
                    rng,
                    &format!("{name}.attn"),
                    d_in,
                    d_out,
                )?),
            };
            let temporal = match variant.temporal {
                TemporalKind::Mtr => Temporal::Mtr(MtrLayer::new(
                    store,
                    rng,
                    &format!("{name}.mtr"),
                    d_out,
                    dir,
                )?),
                TemporalKind::Cov => Temporal::Cov(match dir {
                    MtrDirection::Down => {
                        CovLayer::new_down(store, rng, &format!("{name}.cov"), d_out)?
                    }
                    MtrDirection::Up => CovLayer::new_up(store, rng, &format!("{name}.cov"), d_out)?,
                }),
            };
            Ok(Block {
                inject,
                spatial,
                temporal,
            })
        };

        let widths = [c0, c1, c2, c3];
        let mut down = Vec::new();
        for i in 0..3 {
            down.push(mk_block(
                store,
                rng,
                &format!("down{}", i + 1),
                widths[i],
                widths[i + 1],
                MtrDirection::Down,
            )?);
        }
        let mut up = Vec::new();
        for i in 0..3 {
            up.push(mk_block(
                store,
                rng,
                &format!("up{}", i + 1),
                widths[3 - i],
                widths[2 - i],
                MtrDirection::Up,
            )?);
        }
        let mut skip_fuse = Vec::new();
        for i in 0..3 {
            let c = widths[2 - i];
            skip_fuse.push(Conv1d::pointwise(
                store,
                rng,
                &format!("up{}.skip", i + 1),
                2 * c,
                c,
            )?);
        }
        let head = Conv1d::pointwise_zeros(store, "head", c0, cfg.fnirs_channels)?;

        Ok(UNet {
            cfg,
            variant,
            scg_mode,
            eeg_proj,
            fnirs_proj,
            fusion,
            time_embed,
            down,
            up,
            skip_fuse,
            head,
        })
    }

    /// Predicted noise for each sample, with the fNIRS shape. `ts` carries
    /// one diffusion step per sample.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        e_t: Var,
        f_t: Var,
        maps: Option<&CorrelationMaps>,
        ts: &[usize],
    ) -> Result<Var> {
        Ok(self.forward_traced(tape, bound, e_t, f_t, maps, ts)?.0)
    }

    /// Forward pass that also reports the output shape of every sample
    /// block, down blocks first.
    pub fn forward_traced(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        e_t: Var,
        f_t: Var,
        maps: Option<&CorrelationMaps>,
        ts: &[usize],
    ) -> Result<(Var, Vec<Vec<usize>>)> {
        let cfg = &self.cfg;
        let se = tape.shape(e_t).to_vec();
        let sf = tape.shape(f_t).to_vec();
        if se.len() != 3 || se[1] != cfg.eeg_channels || se[2] != cfg.eeg_samples {
            return Err(ScdmError::shape(format!(
                "EEG input {:?}, expected N x {} x {}",
                se, cfg.eeg_channels, cfg.eeg_samples
            )));
        }
        if sf != [se[0], cfg.fnirs_channels, cfg.fnirs_samples] {
            return Err(ScdmError::shape(format!(
                "fNIRS input {:?}, expected {} x {} x {}",
                sf, se[0], cfg.fnirs_channels, cfg.fnirs_samples
            )));
        }
        let n = se[0];
        if ts.len() != n {
            return Err(ScdmError::shape(format!(
                "{} diffusion steps for {} samples",
                ts.len(),
                n
            )));
        }
        let grids = match self.scg_mode {
            Some(mode) => {
                let maps = maps
                    .ok_or_else(|| ScdmError::invalid("SCG variant needs correlation maps"))?;
                Some(ScgGrids::on_tape(tape, maps, mode)?)
            }
            None => None,
        };
        let [c0, ..] = cfg.channel_trajectory();

        // adapters: channel projection, then a shared learned time-axis
        // projection for the EEG branch
        let e = self.eeg_proj.forward(tape, bound, e_t)?;
        let e = tape.reshape(e, vec![n * c0, cfg.eeg_samples])?;
        let w = bound.var(EEG_TIME_PROJ)?;
        let e = tape.matmul(e, w, false, false)?;
        let e = tape.reshape(e, vec![n, c0, cfg.fnirs_samples])?;
        let f = self.fnirs_proj.forward(tape, bound, f_t)?;
        let cat = tape.concat_channels(e, f)?;
        let fused = self.fusion.forward(tape, bound, cat)?;
        let mut x = tape.silu(fused);

        let emb = self.time_embed.forward(tape, bound, ts)?;

        let mut trace = Vec::with_capacity(6);
        let mut skips = Vec::with_capacity(3);
        for block in &self.down {
            skips.push(x);
            let h = block.inject.apply(tape, bound, x, emb)?;
            let h = block.spatial.forward(tape, bound, grids.as_ref(), h)?;
            x = block.temporal.forward(tape, bound, h)?;
            trace.push(tape.shape(x).to_vec());
        }
        for (i, block) in self.up.iter().enumerate() {
            let h = block.inject.apply(tape, bound, x, emb)?;
            let h = block.spatial.forward(tape, bound, grids.as_ref(), h)?;
            x = block.temporal.forward(tape, bound, h)?;
            trace.push(tape.shape(x).to_vec());
            let skip = skips.pop().unwrap();
            let cat = tape.concat_channels(x, skip)?;
            x = self.skip_fuse[i].forward(tape, bound, cat)?;
        }
        let out = self.head.forward(tape, bound, x)?;
        Ok((out, trace))
    }
}
