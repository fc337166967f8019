//! Re-referencing and epoching.

use crate::error::{Result, ScdmError};
use crate::series::{EpochSet, MiLabel, MultichannelSeries};

/// Subtract the instantaneous mean across channels at every time index.
pub fn common_average_reference(series: &MultichannelSeries) -> Result<MultichannelSeries> {
    let nc = series.n_channels();
    if nc < 2 {
        return Err(ScdmError::invalid(
            "common average reference requires >= 2 channels",
        ));
    }
    let ns = series.n_samples();
    let mut means = vec![0.0; ns];
    for c in 0..nc {
        for (m, v) in means.iter_mut().zip(series.channel(c)) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= nc as f64;
    }
    let mut data = Vec::with_capacity(nc * ns);
    for c in 0..nc {
        for (v, m) in series.channel(c).iter().zip(&means) {
            data.push(v - m);
        }
    }
    series.with_data(data, ns, series.sample_rate)
}

/// Cut one epoch per onset. Onsets are (seconds, label) pairs.
pub fn segment_epochs(
    series: &MultichannelSeries,
    trial_onsets: &[(f64, MiLabel)],
    window_seconds: f64,
) -> Result<EpochSet> {
    let win = (window_seconds * series.sample_rate).round() as usize;
    let nc = series.n_channels();
    let mut data = Vec::with_capacity(trial_onsets.len() * nc * win);
    let mut labels = Vec::with_capacity(trial_onsets.len());
    for (idx, &(onset_s, label)) in trial_onsets.iter().enumerate() {
        let start = (onset_s * series.sample_rate).round() as isize;
        if start < 0 || start as usize + win > series.n_samples() {
            return Err(ScdmError::invalid(format!(
                "trial {idx}: onset {onset_s}s + {window_seconds}s window exceeds recording"
            )));
        }
        let start = start as usize;
        for c in 0..nc {
            data.extend_from_slice(&series.channel(c)[start..start + win]);
        }
        labels.push(label);
    }
    EpochSet::new(
        series.channel_labels.clone(),
        series.sample_rate,
        labels,
        data,
        win,
    )
}
