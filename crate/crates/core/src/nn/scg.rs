//! Spatial channel-gating layer driven by correlation-map grids.
//!
//! Query and key feature maps come from 3x3 same-padded 2-D convolutions
//! over the 16x16 correlation planes; the resulting score matrix mixes the
//! input channels into the output channels without touching the time axis.

use crate::corr::CorrelationMaps;
use crate::error::{Result, ScdmError};
use crate::layout::GRID;
use crate::nn::layers::Conv2d;
use crate::nn::params::{Bound, ParamStore};
use crate::rng::Stream;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScgMode {
    /// Query planes from the EEG->fNIRS map, key planes from fNIRS->EEG.
    MapEegToFnirs,
    /// Both plane stacks from the EEG auto-correlation grids.
    SpatialEeg,
    /// Both plane stacks from the fNIRS auto-correlation grids.
    SpatialFnirs,
}

impl ScgMode {
    /// (query planes, key planes) plane counts for a given layout pair.
    pub fn plane_counts(self, n_eeg: usize, n_fnirs: usize) -> (usize, usize) {
        match self {
            ScgMode::MapEegToFnirs => (n_eeg, n_fnirs),
            ScgMode::SpatialEeg => (n_eeg, n_eeg),
            ScgMode::SpatialFnirs => (n_fnirs, n_fnirs),
        }
    }
}

/// Correlation grids bound as constant leaves, shared by every SCG layer of
/// one forward pass.
pub struct ScgGrids {
    pub query: Var,
    pub key: Var,
}

impl ScgGrids {
    pub fn on_tape(tape: &mut Tape, maps: &CorrelationMaps, mode: ScgMode) -> Result<ScgGrids> {
        let (q, k) = match mode {
            ScgMode::MapEegToFnirs => (&maps.grid_ef, &maps.grid_fe),
            ScgMode::SpatialEeg => (&maps.grid_e, &maps.grid_e),
            ScgMode::SpatialFnirs => (&maps.grid_f, &maps.grid_f),
        };
        let (nq, nk) = mode.plane_counts(maps.n_eeg, maps.n_fnirs);
        if q.len() != nq * GRID * GRID || k.len() != nk * GRID * GRID {
            return Err(ScdmError::shape(format!(
                "correlation grids {}/{} values do not match {}/{} planes",
                q.len(),
                k.len(),
                nq,
                nk
            )));
        }
        Ok(ScgGrids {
            query: tape.constant(vec![nq, GRID, GRID], q.clone()),
            key: tape.constant(vec![nk, GRID, GRID], k.clone()),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ScgLayer {
    pub d_in: usize,
    pub d_out: usize,
    pub mode: ScgMode,
    query_conv: Conv2d,
    key_conv: Conv2d,
}

impl ScgLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Stream,
        name: &str,
        d_in: usize,
        d_out: usize,
        mode: ScgMode,
        n_eeg: usize,
        n_fnirs: usize,
    ) -> Result<Self> {
        let (planes_q, planes_k) = mode.plane_counts(n_eeg, n_fnirs);
        let query_conv = Conv2d::new(store, rng, &format!("{name}.query"), planes_q, d_in, 3, 1)?;
        let key_conv = Conv2d::new(store, rng, &format!("{name}.key"), planes_k, d_out, 3, 1)?;
        Ok(ScgLayer {
            d_in,
            d_out,
            mode,
            query_conv,
            key_conv,
        })
    }

    /// Score matrix: d_in x d_out, each column a distribution over input
    /// channels.
    pub fn score(&self, tape: &mut Tape, bound: &Bound, grids: &ScgGrids) -> Result<Var> {
        let q = self.query_conv.forward(tape, bound, grids.query)?;
        let k = self.key_conv.forward(tape, bound, grids.key)?;
        let q = tape.reshape(q, vec![self.d_in, GRID * GRID])?;
        let k = tape.reshape(k, vec![self.d_out, GRID * GRID])?;
        let logits = tape.matmul(q, k, false, true)?;
        let scaled = tape.scale(logits, 1.0 / (self.d_out as f64).sqrt());
        tape.softmax_cols(scaled)
    }

    /// Channel mixing with an externally supplied score; exposed so tests can
    /// force an identity-like score.
    pub fn forward_with_score(
        &self,
        tape: &mut Tape,
        score: Var,
        v: Var,
    ) -> Result<Var> {
        if tape.shape(v).len() != 3 || tape.shape(v)[1] != self.d_in {
            return Err(ScdmError::shape(format!(
                "scg expects N x {} x L input, got {:?}",
                self.d_in,
                tape.shape(v)
            )));
        }
        tape.mix_channels(score, v)
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        grids: &ScgGrids,
        v: Var,
    ) -> Result<Var> {
        let score = self.score(tape, bound, grids)?;
        self.forward_with_score(tape, score, v)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng;

    /// Synthetic maps for a 3-EEG / 4-fNIRS miniature layout.
    pub(crate) fn tiny_maps(n_eeg: usize, n_fnirs: usize, seed: u64) -> CorrelationMaps {
        let mut r = rng::stream(seed);
        let plane = GRID * GRID;
        CorrelationMaps {
            c_e: vec![vec![0.0; n_eeg]; n_eeg],
            c_f: vec![vec![0.0; n_fnirs]; n_fnirs],
            c_ef: vec![vec![0.0; n_fnirs]; n_eeg],
            c_fe: vec![vec![0.0; n_eeg]; n_fnirs],
            grid_ef: rng::normal_vec(&mut r, n_eeg * plane),
            grid_fe: rng::normal_vec(&mut r, n_fnirs * plane),
            grid_e: rng::normal_vec(&mut r, n_eeg * plane),
            grid_f: rng::normal_vec(&mut r, n_fnirs * plane),
            n_eeg,
            n_fnirs,
        }
    }

    fn build(d_in: usize, d_out: usize, mode: ScgMode) -> (ParamStore, ScgLayer) {
        let mut store = ParamStore::new();
        let mut r = rng::stream(11);
        let layer = ScgLayer::new(&mut store, &mut r, "scg", d_in, d_out, mode, 3, 4).unwrap();
        (store, layer)
    }

    #[test]
    fn score_columns_sum_to_one() {
        for mode in [ScgMode::MapEegToFnirs, ScgMode::SpatialEeg, ScgMode::SpatialFnirs] {
            let (store, layer) = build(6, 3, mode);
            let maps = tiny_maps(3, 4, 21);
            let mut tape = Tape::new();
            let bound = store.bind(&mut tape);
            let grids = ScgGrids::on_tape(&mut tape, &maps, mode).unwrap();
            let score = layer.score(&mut tape, &bound, &grids).unwrap();
            assert_eq!(tape.shape(score), &[6, 3]);
            for j in 0..3 {
                let s: f64 = (0..6).map(|i| tape.values(score)[i * 3 + j]).sum();
                assert!((s - 1.0).abs() < 1e-6, "column {j} sums to {s}");
            }
        }
    }

    #[test]
    fn identity_score_passes_input_through() {
        let (store, layer) = build(4, 4, ScgMode::SpatialEeg);
        let mut tape = Tape::new();
        let _bound = store.bind(&mut tape);
        let mut eye = vec![0.0; 16];
        for i in 0..4 {
            eye[i * 4 + i] = 1.0;
        }
        let score = tape.constant(vec![4, 4], eye);
        let mut r = rng::stream(31);
        let data = rng::normal_vec(&mut r, 2 * 4 * 9);
        let v = tape.constant(vec![2, 4, 9], data.clone());
        let y = layer.forward_with_score(&mut tape, score, v).unwrap();
        assert_eq!(tape.values(y), &data[..]);
    }

    #[test]
    fn output_shape_halves_channels() {
        let (store, layer) = build(8, 4, ScgMode::MapEegToFnirs);
        let maps = tiny_maps(3, 4, 22);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let grids = ScgGrids::on_tape(&mut tape, &maps, ScgMode::MapEegToFnirs).unwrap();
        let v = tape.constant(vec![2, 8, 13], vec![0.1; 2 * 8 * 13]);
        let y = layer.forward(&mut tape, &bound, &grids, v).unwrap();
        assert_eq!(tape.shape(y), &[2, 4, 13]);
    }

    #[test]
    fn wrong_input_channels_rejected() {
        let (store, layer) = build(8, 4, ScgMode::SpatialFnirs);
        let maps = tiny_maps(3, 4, 23);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let grids = ScgGrids::on_tape(&mut tape, &maps, ScgMode::SpatialFnirs).unwrap();
        let v = tape.constant(vec![2, 5, 13], vec![0.1; 2 * 5 * 13]);
        assert!(layer.forward(&mut tape, &bound, &grids, v).is_err());
    }
}
