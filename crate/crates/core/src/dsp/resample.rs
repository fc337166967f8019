//! Rational-ratio polyphase resampling with a windowed-sinc anti-alias filter.

use crate::error::{Result, ScdmError};
use crate::series::MultichannelSeries;
use std::f64::consts::PI;

/// Best rational approximation low/high via continued fractions.
fn rational_approx(ratio: f64, max_den: usize) -> Result<(usize, usize)> {
    let mut best = (0usize, 1usize);
    let mut best_err = f64::INFINITY;
    // Stern-Brocot walk
    let (mut lo, mut hi) = ((0usize, 1usize), (1usize, 0usize));
    for _ in 0..64 {
        let med = (lo.0 + hi.0, lo.1 + hi.1);
        if med.1 > max_den || med.0 > max_den {
            break;
        }
        let v = med.0 as f64 / med.1 as f64;
        let err = (v - ratio).abs();
        if err < best_err {
            best_err = err;
            best = med;
        }
        if v < ratio {
            lo = med;
        } else {
            hi = med;
        }
        if err < 1e-12 {
            break;
        }
    }
    if best_err > 1e-9 * ratio {
        return Err(ScdmError::invalid(format!(
            "rate ratio {ratio} has no small rational approximation (max {max_den})"
        )));
    }
    Ok(best)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Windowed-sinc lowpass at normalized cutoff `fc` (Nyquist = 0.5), odd length.
fn lowpass_taps(fc: f64, half: usize) -> Vec<f64> {
    let n = 2 * half + 1;
    (0..n)
        .map(|i| {
            let m = i as f64 - half as f64;
            // Blackman window
            let w = 0.42 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()
                + 0.08 * (4.0 * PI * i as f64 / (n - 1) as f64).cos();
            2.0 * fc * sinc(2.0 * fc * m) * w
        })
        .collect()
}

/// Resample one channel by up/down. Output length round(n * up / down).
pub fn resample_channel(x: &[f64], up: usize, down: usize) -> Vec<f64> {
    if up == down {
        return x.to_vec();
    }
    let n_out = ((x.len() * up) as f64 / down as f64).round() as usize;
    let m = up.max(down);
    let half = 10 * m;
    let fc = 0.5 / m as f64;
    let h = lowpass_taps(fc, half);
    let gain = up as f64;
    let mut y = Vec::with_capacity(n_out);
    for o in 0..n_out {
        // center of the kernel at upsampled index o*down
        let center = (o * down) as isize;
        let mut acc = 0.0;
        // nonzero upsampled inputs are at multiples of `up`
        let lo = center - half as isize;
        let hi = center + half as isize;
        let mut i = lo.div_euclid(up as isize);
        if i * (up as isize) < lo {
            i += 1;
        }
        while i * (up as isize) <= hi {
            let xi = i;
            if xi >= 0 && (xi as usize) < x.len() {
                let k = (center - xi * up as isize + half as isize) as usize;
                acc += h[k] * x[xi as usize];
            }
            i += 1;
        }
        y.push(acc * gain);
    }
    y
}

/// Polyphase rational resampling of every channel to `target_rate`.
pub fn resample(series: &MultichannelSeries, target_rate: f64) -> Result<MultichannelSeries> {
    if target_rate <= 0.0 {
        return Err(ScdmError::invalid("target_rate must be positive"));
    }
    let ratio = target_rate / series.sample_rate;
    let (up, down) = rational_approx(ratio, 1000)?;
    let n_out = ((series.n_samples() * up) as f64 / down as f64).round() as usize;
    let mut data = Vec::with_capacity(series.n_channels() * n_out);
    for c in 0..series.n_channels() {
        data.extend_from_slice(&resample_channel(series.channel(c), up, down));
    }
    series.with_data(data, n_out, target_rate)
}
