//! Evoked (trial-averaged) hemodynamic response curves.

use crate::error::{Result, ScdmError};
use crate::series::{EpochSet, MiLabel, MultichannelSeries};

/// Pointwise mean over all trials of one class, per channel.
pub fn evoked_curve(epochs: &EpochSet, class: MiLabel) -> Result<MultichannelSeries> {
    let trials: Vec<usize> = (0..epochs.n_trials())
        .filter(|&t| epochs.labels[t] == class)
        .collect();
    if trials.is_empty() {
        return Err(ScdmError::invalid(format!(
            "no {} epochs to average",
            class.as_str()
        )));
    }
    let c = epochs.n_channels();
    let l = epochs.n_samples();
    let mut mean = vec![0.0; c * l];
    let w = 1.0 / trials.len() as f64;
    for &t in &trials {
        for (m, v) in mean.iter_mut().zip(epochs.trial(t)) {
            *m += w * v;
        }
    }
    MultichannelSeries::new(epochs.channel_labels.clone(), epochs.sample_rate, mean, l)
}

/// RMS distance between two same-shape curve sets; reported for
/// real-vs-synthetic comparison, no threshold implied.
pub fn rms_distance(a: &MultichannelSeries, b: &MultichannelSeries) -> Result<f64> {
    if a.n_channels() != b.n_channels() || a.n_samples() != b.n_samples() {
        return Err(ScdmError::shape(format!(
            "{}x{} vs {}x{} curves",
            a.n_channels(),
            a.n_samples(),
            b.n_channels(),
            b.n_samples()
        )));
    }
    let n = a.data().len() as f64;
    let ss: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    Ok((ss / n).sqrt())
}

/// Long-format CSV: time_s, one column per channel.
pub fn curve_csv(curve: &MultichannelSeries) -> String {
    let mut out = String::from("time_s");
    for name in &curve.channel_labels {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for i in 0..curve.n_samples() {
        out.push_str(&format!("{}", i as f64 / curve.sample_rate));
        for c in 0..curve.n_channels() {
            out.push_str(&format!(",{}", curve.channel(c)[i]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(data: Vec<f64>, labels: Vec<MiLabel>, n_samples: usize) -> EpochSet {
        let n_ch = data.len() / labels.len() / n_samples;
        let names = (0..n_ch).map(|i| format!("ch{i}")).collect();
        EpochSet::new(names, 10.0, labels, data, n_samples).unwrap()
    }

    #[test]
    fn single_epoch_is_itself() {
        let e = set(vec![1.0, 2.0, 3.0, 4.0], vec![MiLabel::Lmi], 2);
        let c = evoked_curve(&e, MiLabel::Lmi).unwrap();
        assert_eq!(c.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn opposite_epochs_cancel() {
        let e = set(
            vec![1.0, -2.0, 3.5, -1.0, 2.0, -3.5],
            vec![MiLabel::Rmi, MiLabel::Rmi],
            3,
        );
        let c = evoked_curve(&e, MiLabel::Rmi).unwrap();
        assert!(c.data().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn class_filtering_and_empty_class() {
        let e = set(
            vec![2.0, 2.0, 4.0, 4.0],
            vec![MiLabel::Lmi, MiLabel::Lmi],
            2,
        );
        let c = evoked_curve(&e, MiLabel::Lmi).unwrap();
        assert_eq!(c.data(), &[3.0, 3.0]);
        assert!(evoked_curve(&e, MiLabel::Rmi).is_err());
    }

    #[test]
    fn rms_distance_basics() {
        let a = set(vec![0.0, 0.0], vec![MiLabel::Lmi], 2);
        let b = set(vec![3.0, 4.0], vec![MiLabel::Lmi], 2);
        let ca = evoked_curve(&a, MiLabel::Lmi).unwrap();
        let cb = evoked_curve(&b, MiLabel::Lmi).unwrap();
        assert_eq!(rms_distance(&ca, &ca).unwrap(), 0.0);
        let d = rms_distance(&ca, &cb).unwrap();
        assert!((d - (12.5f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let e = set(vec![1.0, 2.0], vec![MiLabel::Lmi], 2);
        let c = evoked_curve(&e, MiLabel::Lmi).unwrap();
        let csv = curve_csv(&c);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "time_s,ch0");
        assert_eq!(lines.len(), 3);
    }
}
