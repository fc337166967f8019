//! Ablation control modules: ATTN replaces SCG, COV replaces MTR.
//!
//! ATTN is plain multi-head self-attention over time after a kernel-1 channel
//! head that applies SCG's halving/doubling; COV is a single strided (or
//! transposed) convolution with MTR's length contract.

use crate::error::{Result, ScdmError};
use crate::nn::layers::{Conv1d, ConvTranspose1d};
use crate::nn::params::{Bound, ParamStore};
use crate::rng::Stream;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone)]
pub struct AttnLayer {
    pub d_in: usize,
    pub d_out: usize,
    pub heads: usize,
    proj: Conv1d,
    q: Conv1d,
    k: Conv1d,
    v: Conv1d,
    out: Conv1d,
}

impl AttnLayer {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Stream,
        name: &str,
        d_in: usize,
        d_out: usize,
    ) -> Result<Self> {
        let heads = if d_out % 2 == 0 { 2 } else { 1 };
        let mk = |store: &mut ParamStore, rng: &mut Stream, tag: &str| {
            Conv1d::pointwise(store, rng, &format!("{name}.{tag}"), d_out, d_out)
        };
        Ok(AttnLayer {
            d_in,
            d_out,
            heads,
            proj: Conv1d::pointwise(store, rng, &format!("{name}.proj"), d_in, d_out)?,
            q: mk(store, rng, "q")?,
            k: mk(store, rng, "k")?,
            v: mk(store, rng, "v")?,
            out: mk(store, rng, "o")?,
        })
    }

    /// Per-head attention rows (softmax over key positions) for sample `b`;
    /// exposed for the normalization check.
    pub fn attention_rows(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        x: Var,
        b: usize,
        head: usize,
    ) -> Result<Var> {
        let (q, k, _) = self.qkv(tape, bound, x)?;
        let l = tape.shape(x)[2];
        self.head_scores(tape, q, k, b, head, l)
    }

    fn qkv(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<(Var, Var, Var)> {
        let h = self.proj.forward(tape, bound, x)?;
        let q = self.q.forward(tape, bound, h)?;
        let k = self.k.forward(tape, bound, h)?;
        let v = self.v.forward(tape, bound, h)?;
        Ok((q, k, v))
    }

    /// L x L row-normalized score matrix for one (sample, head) pair.
    fn head_scores(
        &self,
        tape: &mut Tape,
        q: Var,
        k: Var,
        b: usize,
        head: usize,
        l: usize,
    ) -> Result<Var> {
        let dh = self.d_out / self.heads;
        let lo = head * dh;
        let slice = |tape: &mut Tape, m: Var| -> Result<Var> {
            let s = tape.slice_channels(m, lo, lo + dh)?;
            // sample b, head channels, as a dh x L matrix
            let n = tape.shape(s)[0];
            let r = tape.reshape(s, vec![1, n * dh, l])?;
            let s = tape.slice_channels(r, b * dh, (b + 1) * dh)?;
            tape.reshape(s, vec![dh, l])
        };
        let qm = slice(tape, q)?;
        let km = slice(tape, k)?;
        let logits = tape.matmul(qm, km, true, false)?;
        let scaled = tape.scale(logits, 1.0 / (dh as f64).sqrt());
        tape.softmax_rows(scaled)
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        if shape.len() != 3 || shape[1] != self.d_in {
            return Err(ScdmError::shape(format!(
                "attn expects N x {} x L, got {:?}",
                self.d_in, shape
            )));
        }
        let (n, l) = (shape[0], shape[2]);
        let dh = self.d_out / self.heads;
        let (q, k, v) = self.qkv(tape, bound, x)?;
        let mut samples = Vec::with_capacity(n);
        for b in 0..n {
            let mut heads = Vec::with_capacity(self.heads);
            for h in 0..self.heads {
                let scores = self.head_scores(tape, q, k, b, h, l)?;
                let lo = h * dh;
                let vs = tape.slice_channels(v, lo, lo + dh)?;
                let vr = tape.reshape(vs, vec![1, n * dh, l])?;
                let vb = tape.slice_channels(vr, b * dh, (b + 1) * dh)?;
                let vm = tape.reshape(vb, vec![dh, l])?;
                // (dh x L) = V · scoresᵀ, i.e. each output step mixes values
                // by its attention row
                let mixed = tape.matmul(vm, scores, false, true)?;
                heads.push(tape.reshape(mixed, vec![1, dh, l])?);
            }
            let mut merged = heads[0];
            for h in &heads[1..] {
                merged = tape.concat_channels(merged, *h)?;
            }
            samples.push(merged);
        }
        let mut stacked = samples[0];
        for s in &samples[1..] {
            // n x c x l blocks are contiguous, so sample stacking is channel
            // concatenation followed by a reshape
            stacked = tape.concat_channels(stacked, *s)?;
        }
        let stacked = tape.reshape(stacked, vec![n, self.d_out, l])?;
        self.out.forward(tape, bound, stacked)
    }
}

#[derive(Debug, Clone)]
pub struct CovLayer {
    pub channels: usize,
    down: Option<Conv1d>,
    up: Option<ConvTranspose1d>,
}

impl CovLayer {
    pub fn new_down(
        store: &mut ParamStore,
        rng: &mut Stream,
        name: &str,
        channels: usize,
    ) -> Result<Self> {
        Ok(CovLayer {
            channels,
            down: Some(Conv1d::new(
                store, rng, name, channels, channels, 3, 2, 1, 1, 1, 1,
            )?),
            up: None,
        })
    }

    pub fn new_up(
        store: &mut ParamStore,
        rng: &mut Stream,
        name: &str,
        channels: usize,
    ) -> Result<Self> {
        Ok(CovLayer {
            channels,
            up: Some(ConvTranspose1d::new(
                store, rng, name, channels, channels, 4, 2, 1,
            )?),
            down: None,
        })
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        if shape.len() != 3 || shape[1] != self.channels {
            return Err(ScdmError::shape(format!(
                "cov expects N x {} x L, got {:?}",
                self.channels, shape
            )));
        }
        let y = match (&self.down, &self.up) {
            (Some(conv), None) => {
                if shape[2] % 2 != 0 {
                    return Err(ScdmError::shape(format!(
                        "cov down needs even length, got {}",
                        shape[2]
                    )));
                }
                conv.forward(tape, bound, x)?
            }
            (None, Some(conv)) => conv.forward(tape, bound, x)?,
            _ => unreachable!(),
        };
        Ok(tape.silu(y))
    }
}
