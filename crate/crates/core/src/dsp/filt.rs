//! Cascaded biquad filtering, one-pass and zero-phase (forward-backward).

use super::design::{Biquad, Sos};
use crate::error::{Result, ScdmError};
use crate::series::MultichannelSeries;

/// Direct form II transposed, single section.
fn biquad_filter(s: &Biquad, x: &[f64], zi: [f64; 2]) -> Vec<f64> {
    let mut y = Vec::with_capacity(x.len());
    let (mut z1, mut z2) = (zi[0], zi[1]);
    for &xn in x {
        let yn = s.b[0] * xn + z1;
        z1 = s.b[1] * xn + z2 - s.a[1] * yn;
        z2 = s.b[2] * xn - s.a[2] * yn;
        y.push(yn);
    }
    y
}

/// Steady-state unit-step initial conditions for one section.
fn biquad_zi(s: &Biquad) -> [f64; 2] {
    // solve (I - A) zi = B with A = [[-a1, 1], [-a2, 0]],
    // B = [b1 - b0 a1, b2 - b0 a2]
    let b1 = s.b[1] - s.b[0] * s.a[1];
    let b2 = s.b[2] - s.b[0] * s.a[2];
    let m00 = 1.0 + s.a[1];
    let m01 = -1.0;
    let m10 = s.a[2];
    let m11 = 1.0;
    let det = m00 * m11 - m01 * m10;
    [(b1 * m11 - m01 * b2) / det, (m00 * b2 - b1 * m10) / det]
}

/// Single forward pass through the cascade with step-matched initial state.
pub fn sosfilt(sos: &Sos, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    for s in &sos.sections {
        let zi = biquad_zi(s);
        let x0 = y.first().copied().unwrap_or(0.0);
        y = biquad_filter(s, &y, [zi[0] * x0, zi[1] * x0]);
    }
    y
}

/// Odd-symmetric edge extension of length `pad` on both sides.
fn odd_extend(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        out.push(2.0 * x[0] - x[i]);
    }
    out.extend_from_slice(x);
    for i in (1..=pad).rev() {
        out.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }
    out
}

/// Forward-backward zero-phase filtering with odd extension of 3x the
/// effective filter order.
pub fn filtfilt(sos: &Sos, x: &[f64]) -> Result<Vec<f64>> {
    let pad = 3 * sos.order();
    if x.len() <= pad {
        return Err(ScdmError::invalid(format!(
            "series of {} samples too short for zero-phase edge handling ({} needed)",
            x.len(),
            pad + 1
        )));
    }
    let ext = odd_extend(x, pad);
    let mut y = sosfilt(sos, &ext);
    y.reverse();
    let mut y = sosfilt(sos, &y);
    y.reverse();
    Ok(y[pad..pad + x.len()].to_vec())
}

/// Per-channel filtering of a whole series.
pub fn apply_filter(
    series: &MultichannelSeries,
    sos: &Sos,
    zero_phase: bool,
) -> Result<MultichannelSeries> {
    let n = series.n_samples();
    if !zero_phase && n < 3 * sos.order() {
        return Err(ScdmError::invalid(format!(
            "series of {n} samples shorter than 3x filter order {}",
            sos.order()
        )));
    }
    let mut data = Vec::with_capacity(series.n_channels() * n);
    for c in 0..series.n_channels() {
        let x = series.channel(c);
        let y = if zero_phase {
            filtfilt(sos, x)?
        } else {
            sosfilt(sos, x)
        };
        data.extend_from_slice(&y);
    }
    series.with_data(data, n, series.sample_rate)
}
