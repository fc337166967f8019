//! Synthetic coupled EEG/fNIRS generator.
//!
//! EEG trials are band-limited random processes with class-dependent
//! lateralized power. Each fNIRS channel is a weighted mix of the
//! rectified, smoothed, downsampled envelopes of its spatially nearest
//! EEG channels, plus configurable noise. The mixing weights are returned
//! as ground truth so correlation analyses can be validated against them.

use crate::error::{Result, ScdmError};
use crate::layout::{reference_layouts, Layouts};
use crate::rng;
use crate::series::{EpochSet, MiLabel};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingSpec {
    /// Additive Gaussian noise std on standardized fNIRS channels.
    pub noise_level: f64,
    /// Relative power asymmetry between hemispheres per class, in [0, 1).
    pub lateralization: f64,
    /// Weight of the nearest EEG channel in the mix (the remainder goes
    /// to the second nearest).
    pub primary_weight: f64,
    pub eeg_rate: f64,
    pub eeg_samples: usize,
    pub fnirs_rate: f64,
    pub fnirs_samples: usize,
    /// Number of random tones per EEG channel.
    pub tones: usize,
}

impl Default for CouplingSpec {
    fn default() -> Self {
        CouplingSpec {
            noise_level: 0.3,
            lateralization: 0.5,
            primary_weight: 0.8,
            eeg_rate: 160.0,
            eeg_samples: 4000,
            fnirs_rate: 10.0,
            fnirs_samples: 256,
            tones: 24,
        }
    }
}

impl CouplingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.lateralization)
            || !(0.0..=1.0).contains(&self.primary_weight)
            || self.noise_level < 0.0
        {
            return Err(ScdmError::invalid("coupling spec out of range"));
        }
        if self.eeg_samples == 0 || self.fnirs_samples == 0 || self.tones == 0 {
            return Err(ScdmError::invalid("coupling spec sizes must be positive"));
        }
        Ok(())
    }
}

/// Recorded generator ground truth: `weights[j][i]` is the contribution of
/// EEG channel `i` to fNIRS channel `j`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingGroundTruth {
    pub weights: Vec<Vec<f64>>,
}

impl CouplingGroundTruth {
    /// Index of the dominant generating EEG channel per fNIRS channel.
    pub fn generator_of(&self, fnirs_channel: usize) -> usize {
        let row = &self.weights[fnirs_channel];
        let mut best = 0;
        for (i, w) in row.iter().enumerate() {
            if *w > row[best] {
                best = i;
            }
        }
        best
    }
}

fn standardize(x: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-12);
    for v in x.iter_mut() {
        *v = (*v - mean) / sd;
    }
}

/// Rectify, moving-average, and linearly resample to `target_len`.
pub fn amplitude_envelope(x: &[f64], target_len: usize) -> Vec<f64> {
    let win = (x.len() / target_len).max(1);
    let rect: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    // moving average
    let mut smooth = Vec::with_capacity(rect.len());
    let mut acc = 0.0;
    for i in 0..rect.len() {
        acc += rect[i];
        if i >= win {
            acc -= rect[i - win];
        }
        smooth.push(acc / win.min(i + 1) as f64);
    }
    // linear interpolation onto target_len points
    let n = smooth.len();
    (0..target_len)
        .map(|j| {
            let pos = j as f64 * (n - 1) as f64 / (target_len - 1).max(1) as f64;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            if i + 1 < n {
                smooth[i] * (1.0 - frac) + smooth[i + 1] * frac
            } else {
                smooth[n - 1]
            }
        })
        .collect()
}

/// Generate aligned EEG and fNIRS epoch sets with recorded coupling.
pub fn generate_coupled(
    seed: u64,
    n_trials: usize,
    spec: &CouplingSpec,
) -> Result<(EpochSet, EpochSet, CouplingGroundTruth)> {
    spec.validate()?;
    if n_trials < 2 {
        return Err(ScdmError::invalid("n_trials must be >= 2"));
    }
    let layouts: Layouts = reference_layouts();
    let n_eeg = layouts.eeg.len();
    let n_fnirs = layouts.fnirs.len();
    let mut rng = rng::stream(seed);

    // even class balance: alternating labels
    let labels: Vec<MiLabel> = (0..n_trials)
        .map(|t| if t % 2 == 0 { MiLabel::Lmi } else { MiLabel::Rmi })
        .collect();

    // mixing weights: nearest EEG site gets primary_weight, second nearest
    // the remainder
    let mut weights = vec![vec![0.0; n_eeg]; n_fnirs];
    for (j, f) in layouts.fnirs.sites.iter().enumerate() {
        let mut dists: Vec<(f64, usize)> = layouts
            .eeg
            .sites
            .iter()
            .enumerate()
            .map(|(i, e)| ((e.x - f.x).powi(2) + (e.y - f.y).powi(2), i))
            .collect();
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        weights[j][dists[0].1] = spec.primary_weight;
        weights[j][dists[1].1] = 1.0 - spec.primary_weight;
    }

    let mut eeg_data = Vec::with_capacity(n_trials * n_eeg * spec.eeg_samples);
    let mut fnirs_data = Vec::with_capacity(n_trials * n_fnirs * spec.fnirs_samples);

    for t in 0..n_trials {
        let label = labels[t];
        // band-limited EEG per channel
        let mut envelopes: Vec<Vec<f64>> = Vec::with_capacity(n_eeg);
        for (c, site) in layouts.eeg.sites.iter().enumerate() {
            let _ = c;
            let contra_scale = match label {
                // event-related desynchronization on the contralateral side
                MiLabel::Lmi if site.x > 0.0 => 1.0 - spec.lateralization,
                MiLabel::Rmi if site.x < 0.0 => 1.0 - spec.lateralization,
                _ => 1.0,
            };
            let mut x = vec![0.0; spec.eeg_samples];
            for _ in 0..spec.tones {
                let f = rng::uniform(&mut rng, 8.0, 30.0);
                let phase = rng::uniform(&mut rng, 0.0, 2.0 * PI);
                let amp = rng::uniform(&mut rng, 0.5, 1.0);
                // slow random amplitude modulation so envelopes differ
                // across channels
                let mod_f = rng::uniform(&mut rng, 0.05, 0.4);
                let mod_ph = rng::uniform(&mut rng, 0.0, 2.0 * PI);
                for (i, v) in x.iter_mut().enumerate() {
                    let time = i as f64 / spec.eeg_rate;
                    let env = 1.0 + 0.9 * (2.0 * PI * mod_f * time + mod_ph).sin();
                    *v += amp * env * (2.0 * PI * f * time + phase).sin();
                }
            }
            for v in x.iter_mut() {
                *v *= contra_scale;
            }
            envelopes.push(amplitude_envelope(&x, spec.fnirs_samples));
            eeg_data.extend_from_slice(&x);
        }
        for env in envelopes.iter_mut() {
            standardize(env);
        }
        // fNIRS channels: weighted envelope mix + smoothing + noise
        for j in 0..n_fnirs {
            let mut y = vec![0.0; spec.fnirs_samples];
            for (i, w) in weights[j].iter().enumerate() {
                if *w > 0.0 {
                    for (v, e) in y.iter_mut().zip(&envelopes[i]) {
                        *v += w * e;
                    }
                }
            }
            // light hemodynamic smoothing
            let win = 4usize;
            let mut acc = 0.0;
            let mut sm = Vec::with_capacity(y.len());
            for (i, v) in y.iter().enumerate() {
                acc += v;
                if i >= win {
                    acc -= y[i - win];
                }
                sm.push(acc / win.min(i + 1) as f64);
            }
            standardize(&mut sm);
            for v in sm.iter_mut() {
                *v += spec.noise_level * rng::normal(&mut rng);
            }
            fnirs_data.extend_from_slice(&sm);
        }
    }

    let eeg = EpochSet::new(
        layouts.eeg.names(),
        spec.eeg_rate,
        labels.clone(),
        eeg_data,
        spec.eeg_samples,
    )?;
    let fnirs = EpochSet::new(
        layouts.fnirs.names(),
        spec.fnirs_rate,
        labels,
        fnirs_data,
        spec.fnirs_samples,
    )?;
    Ok((eeg, fnirs, CouplingGroundTruth { weights }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_shapes() {
        let (eeg, fnirs, gt) = generate_coupled(7, 4, &CouplingSpec::default()).unwrap();
        assert_eq!(
            (eeg.n_trials(), eeg.n_channels(), eeg.n_samples()),
            (4, 30, 4000)
        );
        assert_eq!(
            (fnirs.n_trials(), fnirs.n_channels(), fnirs.n_samples()),
            (4, 36, 256)
        );
        assert_eq!(gt.weights.len(), 36);
    }

    #[test]
    fn same_seed_identical() {
        let spec = CouplingSpec {
            eeg_samples: 400,
            fnirs_samples: 64,
            ..CouplingSpec::default()
        };
        let (e1, f1, _) = generate_coupled(3, 4, &spec).unwrap();
        let (e2, f2, _) = generate_coupled(3, 4, &spec).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(f1, f2);
        let (e3, _, _) = generate_coupled(4, 4, &spec).unwrap();
        assert_ne!(e1, e3);
    }

    #[test]
    fn invalid_spec_rejected() {
        let spec = CouplingSpec {
            lateralization: 1.5,
            ..CouplingSpec::default()
        };
        assert!(generate_coupled(1, 4, &spec).is_err());
        assert!(generate_coupled(1, 1, &CouplingSpec::default()).is_err());
    }
}
