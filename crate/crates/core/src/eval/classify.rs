//! Desk-scale LMI/RMI classifier: band-power and hemodynamic features
//! with a ridge-regularized linear head, evaluated over repeated
//! ratio-resampled splits.

use crate::dsp::design::{design_filter, FilterSpec};
use crate::dsp::filt::sosfilt;
use crate::error::{Result, ScdmError};
use crate::eval::metrics::ConfusionCounts;
use crate::rng;
use crate::series::{EpochSet, MiLabel};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// LMI:RMI training-label ratio in tenths, e.g. 3:7.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub lmi: u32,
    pub rmi: u32,
}

impl Ratio {
    pub fn new(lmi: u32, rmi: u32) -> Result<Self> {
        if lmi + rmi != 10 || !(2..=8).contains(&lmi) {
            return Err(ScdmError::invalid(format!(
                "ratio {lmi}:{rmi} outside 2:8 .. 8:2"
            )));
        }
        Ok(Ratio { lmi, rmi })
    }

    /// The seven protocol ratios 2:8 through 8:2.
    pub fn all_seven() -> Vec<Ratio> {
        (2..=8).map(|l| Ratio { lmi: l, rmi: 10 - l }).collect()
    }
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.lmi, self.rmi)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratio: Ratio,
    /// Random train/test repetitions pooled into one count set.
    pub reps: usize,
    /// Fraction of the smaller class reserved for the balanced test split.
    pub test_fraction: f64,
    pub seed: u64,
    /// Ridge regularization strength for the linear head.
    pub ridge: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            ratio: Ratio { lmi: 5, rmi: 5 },
            reps: 5,
            test_fraction: 0.25,
            seed: 0,
            ridge: 1e-2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        Ratio::new(self.ratio.lmi, self.ratio.rmi)?;
        if self.reps == 0 || !(0.0..1.0).contains(&self.test_fraction) || self.ridge < 0.0 {
            return Err(ScdmError::invalid("bad split spec"));
        }
        Ok(())
    }
}

fn band_power(x: &[f64], low: f64, high: f64, rate: f64) -> Result<f64> {
    let sos = design_filter(&FilterSpec::butterworth(4, low, high, false), rate)?;
    let y = sosfilt(&sos, x);
    let p = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    Ok((p + 1e-12).ln())
}

fn window_stats(x: &[f64], windows: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * windows);
    let step = (x.len() / windows).max(1);
    for w in 0..windows {
        let lo = (w * step).min(x.len() - 1);
        let hi = if w + 1 == windows { x.len() } else { ((w + 1) * step).min(x.len()) };
        let seg = &x[lo..hi.max(lo + 1)];
        let n = seg.len() as f64;
        let mean = seg.iter().sum::<f64>() / n;
        let tbar = (n - 1.0) / 2.0;
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, v) in seg.iter().enumerate() {
            let dt = i as f64 - tbar;
            num += dt * (v - mean);
            den += dt * dt;
        }
        out.push(mean);
        out.push(if den > 0.0 { num / den } else { 0.0 });
    }
    out
}

/// Per-trial feature row: EEG mu/beta log band power per channel, plus
/// (when present) four window means and slopes per fNIRS channel.
fn features(eeg: &EpochSet, fnirs: Option<&EpochSet>, trial: usize) -> Result<Vec<f64>> {
    let mut row = Vec::new();
    for c in 0..eeg.n_channels() {
        let x = eeg.trial_channel(trial, c);
        row.push(band_power(x, 8.0, 13.0, eeg.sample_rate)?);
        row.push(band_power(x, 13.0, 30.0, eeg.sample_rate)?);
    }
    if let Some(f) = fnirs {
        for c in 0..f.n_channels() {
            row.extend(window_stats(f.trial_channel(trial, c), 4));
        }
    }
    Ok(row)
}

/// Solve (XᵀX + λnI) w = Xᵀy by Gaussian elimination with partial pivoting.
fn ridge_fit(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let n = x.len();
    let d = x[0].len();
    let mut a = vec![vec![0.0; d + 1]; d];
    for i in 0..d {
        for j in i..d {
            let mut s = 0.0;
            for r in 0..n {
                s += x[r][i] * x[r][j];
            }
            a[i][j] = s;
            a[j][i] = s;
        }
        a[i][i] += lambda * n as f64;
        let mut s = 0.0;
        for r in 0..n {
            s += x[r][i] * y[r];
        }
        a[i][d] = s;
    }
    for col in 0..d {
        let piv = (col..d)
            .max_by(|&p, &q| a[p][col].abs().partial_cmp(&a[q][col].abs()).unwrap())
            .unwrap();
        if a[piv][col].abs() < 1e-12 {
            return Err(ScdmError::invalid("singular normal equations"));
        }
        a.swap(col, piv);
        for row in col + 1..d {
            let f = a[row][col] / a[col][col];
            for k in col..=d {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut w = vec![0.0; d];
    for row in (0..d).rev() {
        let mut s = a[row][d];
        for k in row + 1..d {
            s -= a[row][k] * w[k];
        }
        w[row] = s / a[row][row];
    }
    Ok(w)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn shuffled_class_indices(labels: &[MiLabel], rng: &mut rng::Stream) -> (Vec<usize>, Vec<usize>) {
    let mut lmi = Vec::new();
    let mut rmi = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match l {
            MiLabel::Lmi => lmi.push(i),
            MiLabel::Rmi => rmi.push(i),
        }
    }
    for set in [&mut lmi, &mut rmi] {
        for i in (1..set.len()).rev() {
            let j = rng.gen_range(0..=i);
            set.swap(i, j);
        }
    }
    (lmi, rmi)
}

/// One train/test repetition: balanced test split, ratio-resampled train
/// split (majority class subsampled), ridge head, counts on the test set.
fn classify_once(
    eeg: &EpochSet,
    fnirs: Option<&EpochSet>,
    spec: &SplitSpec,
    rep: u64,
) -> Result<ConfusionCounts> {
    let mut rng = rng::substream(spec.seed, rep);
    let (lmi, rmi) = shuffled_class_indices(&eeg.labels, &mut rng);
    let minority = lmi.len().min(rmi.len());
    if minority == 0 {
        return Err(ScdmError::invalid("a class is absent from the data"));
    }
    let n_test = ((minority as f64 * spec.test_fraction) as usize).max(1);
    if n_test >= minority {
        return Err(ScdmError::invalid("too few trials for a train/test split"));
    }
    let (test_l, pool_l) = lmi.split_at(n_test);
    let (test_r, pool_r) = rmi.split_at(n_test);

    // ratio resampling: largest train set with LMI:RMI == ratio, using
    // the reduced ratio so e.g. 5:5 only needs one trial per part
    let g = gcd(spec.ratio.lmi as usize, spec.ratio.rmi as usize);
    let (part_l, part_r) = (spec.ratio.lmi as usize / g, spec.ratio.rmi as usize / g);
    let scale = (pool_l.len() / part_l).min(pool_r.len() / part_r);
    let n_l = scale * part_l;
    let n_r = scale * part_r;
    if n_l == 0 || n_r == 0 {
        return Err(ScdmError::invalid(format!(
            "a class vanished after resampling to {} from pools {}/{}",
            spec.ratio,
            pool_l.len(),
            pool_r.len()
        )));
    }

    let mut train: Vec<(usize, f64)> = Vec::with_capacity(n_l + n_r);
    train.extend(pool_l[..n_l].iter().map(|&i| (i, 1.0)));
    train.extend(pool_r[..n_r].iter().map(|&i| (i, -1.0)));

    let mut xs = Vec::with_capacity(train.len());
    let mut ys = Vec::with_capacity(train.len());
    for &(i, y) in &train {
        xs.push(features(eeg, fnirs, i)?);
        ys.push(y);
    }
    // z-score from train statistics, bias column appended
    let d = xs[0].len();
    let n = xs.len() as f64;
    let mut mean = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for row in &xs {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    for row in &xs {
        for ((s, v), m) in sd.iter_mut().zip(row).zip(&mean) {
            *s += (v - m).powi(2) / n;
        }
    }
    for s in sd.iter_mut() {
        *s = s.sqrt().max(1e-9);
    }
    let standardize = |row: &[f64]| -> Vec<f64> {
        let mut out: Vec<f64> = row
            .iter()
            .zip(&mean)
            .zip(&sd)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        out.push(1.0);
        out
    };
    let xz: Vec<Vec<f64>> = xs.iter().map(|r| standardize(r)).collect();
    let w = ridge_fit(&xz, &ys, spec.ridge)?;

    let mut counts = ConfusionCounts::default();
    for (&i, truth) in test_l.iter().zip(std::iter::repeat(true)) {
        let row = standardize(&features(eeg, fnirs, i)?);
        let score: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum();
        counts.record(truth, score > 0.0);
    }
    for (&i, truth) in test_r.iter().zip(std::iter::repeat(false)) {
        let row = standardize(&features(eeg, fnirs, i)?);
        let score: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum();
        counts.record(truth, score > 0.0);
    }
    Ok(counts)
}

/// Run `spec.reps` independent repetitions and pool the confusion counts.
pub fn classify(
    eeg: &EpochSet,
    fnirs: Option<&EpochSet>,
    spec: &SplitSpec,
) -> Result<ConfusionCounts> {
    spec.validate()?;
    if let Some(f) = fnirs {
        if f.n_trials() != eeg.n_trials() {
            return Err(ScdmError::shape(format!(
                "{} EEG trials vs {} fNIRS trials",
                eeg.n_trials(),
                f.n_trials()
            )));
        }
        if f.labels != eeg.labels {
            return Err(ScdmError::invalid("EEG and fNIRS labels disagree"));
        }
    }
    let mut pooled = ConfusionCounts::default();
    for rep in 0..spec.reps {
        pooled.absorb(&classify_once(eeg, fnirs, spec, rep as u64)?);
    }
    Ok(pooled)
}

/// The seven-ratio protocol sweep: 2:8 through 8:2, each fully evaluated.
pub fn classify_ratio_sweep(
    eeg: &EpochSet,
    fnirs: Option<&EpochSet>,
    spec: &SplitSpec,
) -> Result<Vec<(Ratio, ConfusionCounts)>> {
    Ratio::all_seven()
        .into_iter()
        .map(|ratio| {
            let mut s = spec.clone();
            s.ratio = ratio;
            Ok((ratio, classify(eeg, fnirs, &s)?))
        })
        .collect()
}
