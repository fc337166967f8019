//! Sinusoidal diffusion-step embedding with a learned two-layer projection.
//!
//! Each sample block receives an additive per-channel bias computed from the
//! shared embedding through a block-specific linear head, so the injected
//! width always equals the block's input channel count.

use crate::error::{Result, ScdmError};
use crate::nn::layers::Linear;
use crate::nn::params::{Bound, ParamStore};
use crate::rng::Stream;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone)]
pub struct TimeEmbed {
    pub width: usize,
    pub max_t: usize,
    l1: Linear,
    l2: Linear,
}

/// Raw sinusoid row for one step: interleaved sin/cos over a geometric
/// frequency ladder, the usual transformer construction.
pub fn sinusoid(t: usize, width: usize) -> Vec<f64> {
    let half = width / 2;
    let mut out = vec![0.0; width];
    for k in 0..half {
        let freq = (10_000f64).powf(-(k as f64) / half as f64);
        let angle = t as f64 * freq;
        out[k] = angle.sin();
        out[half + k] = angle.cos();
    }
    out
}

impl TimeEmbed {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Stream,
        name: &str,
        width: usize,
        max_t: usize,
    ) -> Result<Self> {
        if width < 2 || width % 2 != 0 {
            return Err(ScdmError::invalid("time embed width must be even and >= 2"));
        }
        let l1 = Linear::new(store, rng, &format!("{name}.l1"), width, width)?;
        let l2 = Linear::new(store, rng, &format!("{name}.l2"), width, width)?;
        Ok(TimeEmbed {
            width,
            max_t,
            l1,
            l2,
        })
    }

    /// Shared embedding for a batch of per-sample steps: n x width.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, ts: &[usize]) -> Result<Var> {
        for &t in ts {
            if t < 1 || t > self.max_t {
                return Err(ScdmError::invalid(format!(
                    "diffusion step {t} outside 1..={}",
                    self.max_t
                )));
            }
        }
        let mut raw = Vec::with_capacity(ts.len() * self.width);
        for &t in ts {
            raw.extend(sinusoid(t, self.width));
        }
        let x = tape.constant(vec![ts.len(), self.width], raw);
        let h = self.l1.forward(tape, bound, x)?;
        let h = tape.silu(h);
        self.l2.forward(tape, bound, h)
    }
}

/// Block-specific head mapping the shared embedding to that block's input
/// channel count; the result is added as a per-(sample, channel) bias.
#[derive(Debug, Clone)]
pub struct TimeInject {
    head: Linear,
}

impl TimeInject {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Stream,
        name: &str,
        width: usize,
        channels: usize,
    ) -> Result<Self> {
        Ok(TimeInject {
            head: Linear::new(store, rng, name, width, channels)?,
        })
    }

    pub fn apply(&self, tape: &mut Tape, bound: &Bound, x: Var, emb: Var) -> Result<Var> {
        let bias = self.head.forward(tape, bound, emb)?;
        tape.add_bias_nc(x, bias)
    }
}
