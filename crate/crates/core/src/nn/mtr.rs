//! Multi-scale temporal resampling layer.
//!
//! The down direction sums three half-length branches: a depthwise
//! multi-scale stack decimated by 2, a causal dilated chain, and an averaged
//! pointwise stride-2 bank. The up direction averages two transposed
//! convolutions with two bilinear doublers. Channel count never changes.

use crate::error::{Result, ScdmError};
use crate::nn::layers::{Conv1d, ConvTranspose1d};
use crate::nn::params::{Bound, ParamStore};
use crate::rng::Stream;
use crate::tape::{Tape, Var};

pub const MULTISCALE_KERNELS: [usize; 4] = [3, 5, 7, 9];
pub const CHAIN_DILATIONS: [usize; 3] = [1, 2, 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtrDirection {
    Down,
    Up,
}

/// Four depthwise branches (kernels 3/5/7/9, stride 1, symmetric zero
/// padding) summed; channel c of the output depends only on channel c of the
/// input.
#[derive(Debug, Clone)]
pub struct DepthwiseMultiscale {
    branches: Vec<Conv1d>,
}

impl DepthwiseMultiscale {
    pub fn new(store: &mut ParamStore, rng: &mut Stream, name: &str, c: usize) -> Result<Self> {
        let branches = MULTISCALE_KERNELS
            .iter()
            .map(|&k| {
                let pad = k / 2;
                Conv1d::new(
                    store,
                    rng,
                    &format!("{name}.k{k}"),
                    c,
                    c,
                    k,
                    1,
                    1,
                    pad,
                    pad,
                    c,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DepthwiseMultiscale { branches })
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let l = *tape.shape(x).last().unwrap();
        if l < *MULTISCALE_KERNELS.last().unwrap() {
            return Err(ScdmError::shape(format!(
                "multiscale stack needs length >= 9, got {l}"
            )));
        }
        let mut acc = None;
        for conv in &self.branches {
            let y = conv.forward(tape, bound, x)?;
            acc = Some(match acc {
                None => y,
                Some(a) => tape.add(a, y)?,
            });
        }
        Ok(acc.unwrap())
    }
}

/// Three kernel-2 convolutions with dilations 1/2/4. The first carries the
/// stride-2 length halving; the rest are stride 1 with left-only padding so
/// every output position sees only past input.
#[derive(Debug, Clone)]
pub struct CausalDilatedChain {
    convs: Vec<Conv1d>,
}

impl CausalDilatedChain {
    pub fn new(store: &mut ParamStore, rng: &mut Stream, name: &str, c: usize) -> Result<Self> {
        let convs = CHAIN_DILATIONS
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let stride = if i == 0 { 2 } else { 1 };
                Conv1d::new(
                    store,
                    rng,
                    &format!("{name}.d{d}"),
                    c,
                    c,
                    2,
                    stride,
                    d,
                    d,
                    0,
                    1,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CausalDilatedChain { convs })
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let l = *tape.shape(x).last().unwrap();
        if l % 2 != 0 {
            return Err(ScdmError::shape(format!(
                "causal chain needs even length, got {l}"
            )));
        }
        let mut h = x;
        for conv in &self.convs {
            h = conv.forward(tape, bound, h)?;
        }
        Ok(h)
    }
}

/// Four kernel-1 stride-2 convolutions, two sampling even positions and two
/// sampling odd positions (via a left pad and an end crop), averaged.
#[derive(Debug, Clone)]
struct PointwiseBank {
    even: [Conv1d; 2],
    odd: [Conv1d; 2],
}

impl PointwiseBank {
    fn new(store: &mut ParamStore, rng: &mut Stream, name: &str, c: usize) -> Result<Self> {
        let mk = |store: &mut ParamStore, rng: &mut Stream, tag: &str, pad: usize| {
            Conv1d::new(store, rng, &format!("{name}.{tag}"), c, c, 1, 2, 1, pad, 0, 1)
        };
        Ok(PointwiseBank {
            even: [mk(store, rng, "e0", 0)?, mk(store, rng, "e1", 0)?],
            odd: [mk(store, rng, "o0", 1)?, mk(store, rng, "o1", 1)?],
        })
    }

    fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let half = tape.shape(x)[2] / 2;
        let mut acc = None;
        for conv in self.even.iter().chain(&self.odd) {
            let mut y = conv.forward(tape, bound, x)?;
            if tape.shape(y)[2] != half {
                y = tape.crop_end(y, half)?;
            }
            acc = Some(match acc {
                None => y,
                Some(a) => tape.add(a, y)?,
            });
        }
        Ok(tape.scale(acc.unwrap(), 0.25))
    }
}

#[derive(Debug, Clone)]
pub struct MtrLayer {
    pub channels: usize,
    pub direction: MtrDirection,
    multiscale: Option<DepthwiseMultiscale>,
    chain: Option<CausalDilatedChain>,
    bank: Option<PointwiseBank>,
    transposed: Vec<ConvTranspose1d>,
}

impl MtrLayer {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Stream,
        name: &str,
        channels: usize,
        direction: MtrDirection,
    ) -> Result<Self> {
        let mut layer = MtrLayer {
            channels,
            direction,
            multiscale: None,
            chain: None,
            bank: None,
            transposed: Vec::new(),
        };
        match direction {
            MtrDirection::Down => {
                layer.multiscale = Some(DepthwiseMultiscale::new(
                    store,
                    rng,
                    &format!("{name}.ms"),
                    channels,
                )?);
                layer.chain = Some(CausalDilatedChain::new(
                    store,
                    rng,
                    &format!("{name}.chain"),
                    channels,
                )?);
                layer.bank = Some(PointwiseBank::new(
                    store,
                    rng,
                    &format!("{name}.pw"),
                    channels,
                )?);
            }
            MtrDirection::Up => {
                for i in 0..2 {
                    layer.transposed.push(ConvTranspose1d::new(
                        store,
                        rng,
                        &format!("{name}.tc{i}"),
                        channels,
                        channels,
                        4,
                        2,
                        1,
                    )?);
                }
            }
        }
        Ok(layer)
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        if shape.len() != 3 || shape[1] != self.channels {
            return Err(ScdmError::shape(format!(
                "mtr expects N x {} x L, got {:?}",
                self.channels, shape
            )));
        }
        match self.direction {
            MtrDirection::Down => {
                if shape[2] % 2 != 0 {
                    return Err(ScdmError::shape(format!(
                        "mtr down needs even length, got {}",
                        shape[2]
                    )));
                }
                let ms = self.multiscale.as_ref().unwrap().forward(tape, bound, x)?;
                let ms = tape.subsample2(ms)?;
                let ms = tape.silu(ms);
                let ch = self.chain.as_ref().unwrap().forward(tape, bound, x)?;
                let ch = tape.silu(ch);
                let pw = self.bank.as_ref().unwrap().forward(tape, bound, x)?;
                let pw = tape.silu(pw);
                let s = tape.add(ms, ch)?;
                tape.add(s, pw)
            }
            MtrDirection::Up => {
                let mut acc = None;
                for conv in &self.transposed {
                    let y = conv.forward(tape, bound, x)?;
                    acc = Some(match acc {
                        None => y,
                        Some(a) => tape.add(a, y)?,
                    });
                }
                for _ in 0..2 {
                    let y = tape.upsample_linear2(x)?;
                    let a = acc.unwrap();
                    acc = Some(tape.add(a, y)?);
                }
                let out = tape.scale(acc.unwrap(), 0.25);
                Ok(tape.silu(out))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn down_layer(c: usize, seed: u64) -> (ParamStore, MtrLayer) {
        let mut store = ParamStore::new();
        let mut r = rng::stream(seed);
        let layer = MtrLayer::new(&mut store, &mut r, "mtr", c, MtrDirection::Down).unwrap();
        (store, layer)
    }

    fn up_layer(c: usize, seed: u64) -> (ParamStore, MtrLayer) {
        let mut store = ParamStore::new();
        let mut r = rng::stream(seed);
        let layer = MtrLayer::new(&mut store, &mut r, "mtr", c, MtrDirection::Up).unwrap();
        (store, layer)
    }

    fn run(store: &ParamStore, layer: &MtrLayer, shape: Vec<usize>, data: Vec<f64>) -> Vec<f64> {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.constant(shape, data);
        let y = layer.forward(&mut tape, &bound, x).unwrap();
        tape.values(y).to_vec()
    }

    #[test]
    fn down_halves_and_up_doubles() {
        let (store, layer) = down_layer(8, 41);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.constant(vec![2, 8, 64], vec![0.3; 2 * 8 * 64]);
        let y = layer.forward(&mut tape, &bound, x).unwrap();
        assert_eq!(tape.shape(y), &[2, 8, 32]);

        let (store, layer) = up_layer(8, 42);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.constant(vec![2, 8, 32], vec![0.3; 2 * 8 * 32]);
        let y = layer.forward(&mut tape, &bound, x).unwrap();
        assert_eq!(tape.shape(y), &[2, 8, 64]);
    }

    #[test]
    fn up_of_down_restores_shape() {
        let (mut store, down) = down_layer(4, 43);
        let mut r = rng::stream(44);
        let up = MtrLayer::new(&mut store, &mut r, "up", 4, MtrDirection::Up).unwrap();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.constant(vec![1, 4, 32], rng::normal_vec(&mut r, 4 * 32));
        let mid = down.forward(&mut tape, &bound, x).unwrap();
        let y = up.forward(&mut tape, &bound, mid).unwrap();
        assert_eq!(tape.shape(y), tape.shape(x));
    }

    #[test]
    fn causal_chain_strict_causality() {
        // perturbing input position i must not move any output before
        // floor(i / 2)
        let mut store = ParamStore::new();
        let mut r = rng::stream(45);
        let chain = CausalDilatedChain::new(&mut store, &mut r, "c", 2).unwrap();
        let l = 32;
        let base_in = rng::normal_vec(&mut r, 2 * l);
        let run_chain = |input: &[f64]| {
            let mut tape = Tape::new();
            let bound = store.bind(&mut tape);
            let x = tape.constant(vec![1, 2, l], input.to_vec());
            let y = chain.forward(&mut tape, &bound, x).unwrap();
            tape.values(y).to_vec()
        };
        let base = run_chain(&base_in);
        for i in 0..l {
            for c in 0..2 {
                let mut probe = base_in.clone();
                probe[c * l + i] += 1.0;
                let out = run_chain(&probe);
                for p in 0..i / 2 {
                    for oc in 0..2 {
                        assert_eq!(
                            out[oc * (l / 2) + p],
                            base[oc * (l / 2) + p],
                            "input {i} leaked into output {p}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn causal_chain_impulse_reaches_position_zero() {
        let mut store = ParamStore::new();
        let mut r = rng::stream(46);
        let chain = CausalDilatedChain::new(&mut store, &mut r, "c", 1).unwrap();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let mut data = vec![0.0; 32];
        data[0] = 1.0;
        let x = tape.constant(vec![1, 1, 32], data);
        let y = chain.forward(&mut tape, &bound, x).unwrap();
        assert_eq!(tape.shape(y), &[1, 1, 16]);
        assert!(tape.values(y)[0] != 0.0);
    }

    #[test]
    fn causal_chain_halves_256() {
        let mut store = ParamStore::new();
        let mut r = rng::stream(47);
        let chain = CausalDilatedChain::new(&mut store, &mut r, "c", 1).unwrap();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.constant(vec![1, 1, 256], vec![0.5; 256]);
        let y = chain.forward(&mut tape, &bound, x).unwrap();
        assert_eq!(tape.shape(y), &[1, 1, 128]);
    }

    #[test]
    fn multiscale_isolates_channels() {
        let mut store = ParamStore::new();
        let mut r = rng::stream(48);
        let ms = DepthwiseMultiscale::new(&mut store, &mut r, "ms", 8).unwrap();
        let l = 16;
        let base_in = rng::normal_vec(&mut r, 8 * l);
        let run_ms = |input: &[f64]| {
            let mut tape = Tape::new();
            let bound = store.bind(&mut tape);
            let x = tape.constant(vec![1, 8, l], input.to_vec());
            let y = ms.forward(&mut tape, &bound, x).unwrap();
            tape.values(y).to_vec()
        };
        let base = run_ms(&base_in);
        for c in 0..8 {
            let mut probe = base_in.clone();
            probe[c * l] += 1.0;
            let out = run_ms(&probe);
            for oc in 0..8 {
                let changed = out[oc * l..(oc + 1) * l] != base[oc * l..(oc + 1) * l];
                assert_eq!(changed, oc == c, "channel {c} perturbed, channel {oc} changed={changed}");
            }
        }
    }

    #[test]
    fn multiscale_zero_in_zero_out() {
        let mut store = ParamStore::new();
        let mut r = rng::stream(49);
        let ms = DepthwiseMultiscale::new(&mut store, &mut r, "ms", 3).unwrap();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.constant(vec![2, 3, 12], vec![0.0; 72]);
        let y = ms.forward(&mut tape, &bound, x).unwrap();
        assert_eq!(tape.shape(y), &[2, 3, 12]);
        assert!(tape.values(y).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn multiscale_rejects_short_sequences() {
        let mut store = ParamStore::new();
        let mut r = rng::stream(50);
        let ms = DepthwiseMultiscale::new(&mut store, &mut r, "ms", 1).unwrap();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.constant(vec![1, 1, 8], vec![1.0; 8]);
        assert!(ms.forward(&mut tape, &bound, x).is_err());
    }

    #[test]
    fn odd_length_rejected() {
        let (store, layer) = down_layer(2, 51);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.constant(vec![1, 2, 17], vec![0.1; 34]);
        assert!(layer.forward(&mut tape, &bound, x).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let (store, layer) = down_layer(4, 52);
        let mut r = rng::stream(53);
        let data = rng::normal_vec(&mut r, 4 * 32);
        let a = run(&store, &layer, vec![1, 4, 32], data.clone());
        let b = run(&store, &layer, vec![1, 4, 32], data);
        assert_eq!(a, b);
    }
}
