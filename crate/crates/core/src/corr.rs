//! Channel correlation statistics and the 16x16 scalp-grid projection.

use crate::error::{Result, ScdmError};
use crate::layout::{grid_chebyshev, ChannelLayout, Layouts, GRID};
use crate::series::EpochSet;
use crate::synth::amplitude_envelope;
use serde::{Deserialize, Serialize};
use rayon::prelude::*;

/// Pearson correlation matrix over trial-concatenated channel series.
pub fn pearson_matrix(epochs: &EpochSet) -> Result<Vec<Vec<f64>>> {
    let nc = epochs.n_channels();
    let nt = epochs.n_trials();
    let ns = epochs.n_samples();
    let total = nt * ns;
    if total < 2 {
        return Err(ScdmError::invalid("need >= 2 samples per channel"));
    }
    // concatenate trials per channel, center, normalize
    let mut centered = vec![vec![0.0; total]; nc];
    for c in 0..nc {
        let mut k = 0;
        for t in 0..nt {
            for &v in epochs.trial_channel(t, c) {
                centered[c][k] = v;
                k += 1;
            }
        }
        let mean = centered[c].iter().sum::<f64>() / total as f64;
        let mut norm = 0.0;
        for v in centered[c].iter_mut() {
            *v -= mean;
            norm += *v * *v;
        }
        if norm <= 0.0 {
            return Err(ScdmError::ZeroVariance(epochs.channel_labels[c].clone()));
        }
        let inv = 1.0 / norm.sqrt();
        for v in centered[c].iter_mut() {
            *v *= inv;
        }
    }
    let mut m = vec![vec![0.0; nc]; nc];
    for i in 0..nc {
        m[i][i] = 1.0;
        for j in i + 1..nc {
            let r: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
            let r = r.clamp(-1.0, 1.0);
            m[i][j] = r;
            m[j][i] = r;
        }
    }
    Ok(m)
}

/// Double-centered pairwise distance matrix plus its mean square
/// (the empirical distance variance).
pub struct CenteredDistances {
    pub a: Vec<f64>, // n x n, row-major
    pub n: usize,
    pub dvar: f64,
}

pub fn centered_distances(x: &[f64]) -> Result<CenteredDistances> {
    let n = x.len();
    if n < 2 {
        return Err(ScdmError::invalid("dcor needs >= 2 observations"));
    }
    let mut a = vec![0.0; n * n];
    let mut row_means = vec![0.0; n];
    let mut grand = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = (x[i] - x[j]).abs();
            a[i * n + j] = d;
            row_means[i] += d;
        }
        grand += row_means[i];
        row_means[i] /= n as f64;
    }
    grand /= (n * n) as f64;
    if grand <= 0.0 {
        return Err(ScdmError::invalid("constant input has zero distance variance"));
    }
    let mut dvar = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = a[i * n + j] - row_means[i] - row_means[j] + grand;
            a[i * n + j] = v;
            dvar += v * v;
        }
    }
    dvar /= (n * n) as f64;
    Ok(CenteredDistances { a, n, dvar })
}

pub fn dcor_from_centered(cx: &CenteredDistances, cy: &CenteredDistances) -> Result<f64> {
    if cx.n != cy.n {
        return Err(ScdmError::shape(format!(
            "dcor observation counts differ: {} vs {}",
            cx.n, cy.n
        )));
    }
    let n = cx.n;
    let mut dcov2 = 0.0;
    for k in 0..n * n {
        dcov2 += cx.a[k] * cy.a[k];
    }
    dcov2 /= (n * n) as f64;
    let denom = (cx.dvar * cy.dvar).sqrt();
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((dcov2.max(0.0) / denom).sqrt().min(1.0))
}

/// Empirical distance correlation of two equal-length series, in [0, 1].
pub fn distance_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(ScdmError::shape(format!(
            "dcor inputs have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    dcor_from_centered(&centered_distances(x)?, &centered_distances(y)?)
}

/// Cross-modal distance-correlation matrix, averaged per trial.
///
/// EEG channels are reduced to a rectified, smoothed amplitude envelope at
/// the fNIRS length before pairing (the two modalities have unequal lengths
/// and dcor needs paired observations).
pub fn cross_dcor_matrix(eeg: &EpochSet, fnirs: &EpochSet) -> Result<Vec<Vec<f64>>> {
    if eeg.n_trials() != fnirs.n_trials() {
        return Err(ScdmError::shape(format!(
            "trial counts differ: {} EEG vs {} fNIRS",
            eeg.n_trials(),
            fnirs.n_trials()
        )));
    }
    let ne = eeg.n_channels();
    let nf = fnirs.n_channels();
    let nt = eeg.n_trials();
    let mut acc = vec![vec![0.0; nf]; ne];
    for t in 0..nt {
        let eeg_cd: Vec<CenteredDistances> = (0..ne)
            .into_par_iter()
            .map(|i| {
                let env = amplitude_envelope(eeg.trial_channel(t, i), fnirs.n_samples());
                centered_distances(&env)
            })
            .collect::<Result<_>>()?;
        let f_cd: Vec<CenteredDistances> = (0..nf)
            .into_par_iter()
            .map(|j| centered_distances(fnirs.trial_channel(t, j)))
            .collect::<Result<_>>()?;
        let rows: Vec<Vec<f64>> = (0..ne)
            .into_par_iter()
            .map(|i| {
                (0..nf)
                    .map(|j| dcor_from_centered(&eeg_cd[i], &f_cd[j]))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        for i in 0..ne {
            for j in 0..nf {
                acc[i][j] += rows[i][j];
            }
        }
    }
    for row in &mut acc {
        for v in row.iter_mut() {
            *v /= nt as f64;
        }
    }
    Ok(acc)
}

pub fn transpose(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let rows = m.len();
    let cols = m[0].len();
    let mut t = vec![vec![0.0; rows]; cols];
    for i in 0..rows {
        for j in 0..cols {
            t[j][i] = m[i][j];
        }
    }
    t
}

/// Scatter each matrix row onto the target layout's grid cells. Returns one
/// flattened 16x16 plane per source channel.
pub fn project_to_grid(matrix: &[Vec<f64>], target: &ChannelLayout) -> Result<Vec<f64>> {
    let planes = matrix.len();
    let mut out = vec![0.0; planes * GRID * GRID];
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != target.len() {
            return Err(ScdmError::shape(format!(
                "matrix row has {} columns, layout has {} channels",
                row.len(),
                target.len()
            )));
        }
        for (j, site) in target.sites.iter().enumerate() {
            out[i * GRID * GRID + site.grid_row * GRID + site.grid_col] = row[j];
        }
    }
    Ok(out)
}

/// Full set of correlation matrices and grid projections feeding SCG.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationMaps {
    pub c_e: Vec<Vec<f64>>,
    pub c_f: Vec<Vec<f64>>,
    pub c_ef: Vec<Vec<f64>>,
    pub c_fe: Vec<Vec<f64>>,
    /// One plane per EEG channel, values at fNIRS cells.
    pub grid_ef: Vec<f64>,
    /// One plane per fNIRS channel, values at EEG cells.
    pub grid_fe: Vec<f64>,
    pub grid_e: Vec<f64>,
    pub grid_f: Vec<f64>,
    pub n_eeg: usize,
    pub n_fnirs: usize,
}

pub fn compute_maps(eeg: &EpochSet, fnirs: &EpochSet, layouts: &Layouts) -> Result<CorrelationMaps> {
    if eeg.n_channels() != layouts.eeg.len() || fnirs.n_channels() != layouts.fnirs.len() {
        return Err(ScdmError::shape(
            "epoch channel counts do not match layouts",
        ));
    }
    let c_e = pearson_matrix(eeg)?;
    let c_f = pearson_matrix(fnirs)?;
    let c_ef = cross_dcor_matrix(eeg, fnirs)?;
    let c_fe = transpose(&c_ef);
    let grid_ef = project_to_grid(&c_ef, &layouts.fnirs)?;
    let grid_fe = project_to_grid(&c_fe, &layouts.eeg)?;
    let grid_e = project_to_grid(&c_e, &layouts.eeg)?;
    let grid_f = project_to_grid(&c_f, &layouts.fnirs)?;
    Ok(CorrelationMaps {
        c_e,
        c_f,
        c_ef,
        c_fe,
        grid_ef,
        grid_fe,
        grid_e,
        grid_f,
        n_eeg: eeg.n_channels(),
        n_fnirs: fnirs.n_channels(),
    })
}

/// One row of the most-correlated-channel report.
#[derive(Debug, Clone)]
pub struct MostCorrelated {
    pub fnirs_index: usize,
    pub fnirs_name: String,
    pub eeg_index: usize,
    pub eeg_name: String,
    pub correlation: f64,
    pub grid_distance: usize,
}

/// Per-fNIRS-channel argmax over EEG channels, lowest index on ties.
pub fn most_correlated_map(c_ef: &[Vec<f64>], layouts: &Layouts) -> Result<Vec<MostCorrelated>> {
    let ne = c_ef.len();
    let nf = c_ef[0].len();
    if ne != layouts.eeg.len() || nf != layouts.fnirs.len() {
        return Err(ScdmError::shape("C_ef does not match layouts"));
    }
    for row in c_ef {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(ScdmError::NonFinite("C_ef".into()));
        }
    }
    let mut out = Vec::with_capacity(nf);
    for j in 0..nf {
        let mut best = 0usize;
        for i in 1..ne {
            if c_ef[i][j] > c_ef[best][j] {
                best = i;
            }
        }
        let e = &layouts.eeg.sites[best];
        let f = &layouts.fnirs.sites[j];
        out.push(MostCorrelated {
            fnirs_index: j,
            fnirs_name: f.name.clone(),
            eeg_index: best,
            eeg_name: e.name.clone(),
            correlation: c_ef[best][j],
            grid_distance: grid_chebyshev(e, f),
        });
    }
    Ok(out)
}

pub fn most_correlated_csv(rows: &[MostCorrelated]) -> String {
    let mut s = String::from("fnirs_index,fnirs_name,eeg_index,eeg_name,correlation,grid_distance\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.fnirs_index, r.fnirs_name, r.eeg_index, r.eeg_name, r.correlation, r.grid_distance
        ));
    }
    s
}
