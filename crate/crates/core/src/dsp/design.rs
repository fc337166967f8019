//! IIR bandpass design via analog prototypes, the lowpass-to-bandpass
//! transform, and the bilinear transform, emitted as second-order sections.

use crate::error::{Result, ScdmError};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterFamily {
    Butterworth,
    Chebyshev2,
}

/// Bandpass filter specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterSpec {
    pub family: FilterFamily,
    pub order: usize,
    /// (low Hz, high Hz)
    pub band: (f64, f64),
    pub zero_phase: bool,
    /// Chebyshev II only; ignored for Butterworth.
    pub stopband_attenuation_db: f64,
}

impl FilterSpec {
    pub fn butterworth(order: usize, low: f64, high: f64, zero_phase: bool) -> Self {
        FilterSpec {
            family: FilterFamily::Butterworth,
            order,
            band: (low, high),
            zero_phase,
            stopband_attenuation_db: 0.0,
        }
    }

    /// 40 dB stopband attenuation default (unstated upstream, overridable).
    pub fn chebyshev2(order: usize, low: f64, high: f64, zero_phase: bool) -> Self {
        FilterSpec {
            family: FilterFamily::Chebyshev2,
            order,
            band: (low, high),
            zero_phase,
            stopband_attenuation_db: 40.0,
        }
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        let (lo, hi) = self.band;
        if self.order < 1 {
            return Err(ScdmError::invalid("filter order must be >= 1"));
        }
        if !(0.0 < lo && lo < hi && hi < sample_rate / 2.0) {
            return Err(ScdmError::invalid(format!(
                "band ({lo}, {hi}) must satisfy 0 < low < high < {}",
                sample_rate / 2.0
            )));
        }
        Ok(())
    }
}

/// One biquad section; a[0] is normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

impl Sos {
    /// Complex frequency response at `freq_hz` for the given sample rate.
    pub fn response(&self, freq_hz: f64, sample_rate: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / sample_rate;
        let z1 = Complex64::new(0.0, -w).exp();
        let z2 = z1 * z1;
        let mut h = Complex64::new(1.0, 0.0);
        for s in &self.sections {
            let num = s.b[0] + s.b[1] * z1 + s.b[2] * z2;
            let den = s.a[0] + s.a[1] * z1 + s.a[2] * z2;
            h *= num / den;
        }
        h
    }

    pub fn magnitude(&self, freq_hz: f64, sample_rate: f64) -> f64 {
        self.response(freq_hz, sample_rate).norm()
    }

    pub fn order(&self) -> usize {
        self.sections.len() * 2
    }
}

struct Zpk {
    z: Vec<Complex64>,
    p: Vec<Complex64>,
    k: f64,
}

fn butterworth_prototype(n: usize) -> Zpk {
    let p = (0..n)
        .map(|k| {
            let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            Complex64::new(theta.cos(), theta.sin())
        })
        .collect();
    Zpk {
        z: Vec::new(),
        p,
        k: 1.0,
    }
}

fn cheby2_prototype(n: usize, rs_db: f64) -> Zpk {
    let de = 1.0 / (10f64.powf(rs_db / 10.0) - 1.0).sqrt();
    let mu = (1.0 / de).asinh() / n as f64;

    let mut z = Vec::new();
    for k in 0..n {
        let theta = PI * (2 * k + 1) as f64 / (2 * n) as f64;
        let c = theta.cos();
        if c.abs() > 1e-12 {
            z.push(Complex64::new(0.0, 1.0 / c));
        }
    }
    let mut p = Vec::with_capacity(n);
    for k in 0..n {
        let theta = PI * (2 * k + 1) as f64 / (2 * n) as f64;
        // Chebyshev I pole, then invert for type II
        let p1 = Complex64::new(-mu.sinh() * theta.sin(), mu.cosh() * theta.cos());
        p.push(1.0 / p1);
    }
    let num: Complex64 = p.iter().map(|v| -v).product();
    let den: Complex64 = z.iter().map(|v| -v).product();
    Zpk {
        z,
        p,
        k: (num / den).re,
    }
}

/// Analog lowpass (cutoff 1 rad/s) to analog bandpass.
fn lp2bp(proto: Zpk, wo: f64, bw: f64) -> Zpk {
    let degree = proto.p.len() - proto.z.len();
    let transform = |s: Complex64| -> (Complex64, Complex64) {
        let lp = s * (bw / 2.0);
        let disc = (lp * lp - wo * wo).sqrt();
        (lp + disc, lp - disc)
    };
    let mut z = Vec::with_capacity(proto.z.len() * 2 + degree);
    for &zi in &proto.z {
        let (a, b) = transform(zi);
        z.push(a);
        z.push(b);
    }
    let mut p = Vec::with_capacity(proto.p.len() * 2);
    for &pi in &proto.p {
        let (a, b) = transform(pi);
        p.push(a);
        p.push(b);
    }
    z.extend(std::iter::repeat(Complex64::new(0.0, 0.0)).take(degree));
    Zpk {
        z,
        p,
        k: proto.k * bw.powi(degree as i32),
    }
}

/// Analog to digital, sample rate `fs`.
fn bilinear(analog: Zpk, fs: f64) -> Zpk {
    let fs2 = 2.0 * fs;
    let map = |s: Complex64| (fs2 + s) / (fs2 - s);
    let degree = analog.p.len() - analog.z.len();
    let mut z: Vec<Complex64> = analog.z.iter().map(|&s| map(s)).collect();
    let p: Vec<Complex64> = analog.p.iter().map(|&s| map(s)).collect();
    let num: Complex64 = analog.z.iter().map(|&s| fs2 - s).product();
    let den: Complex64 = analog.p.iter().map(|&s| fs2 - s).product();
    z.extend(std::iter::repeat(Complex64::new(-1.0, 0.0)).take(degree));
    Zpk {
        z,
        p,
        k: analog.k * (num / den).re,
    }
}

/// Pull out conjugate pairs (and pair up leftover reals).
fn pair_up(mut vals: Vec<Complex64>) -> Result<Vec<(Complex64, Complex64)>> {
    let mut pairs = Vec::new();
    const TOL: f64 = 1e-8;
    while let Some(v) = vals.pop() {
        if v.im.abs() < TOL {
            // find another (near-)real value
            let j = vals
                .iter()
                .position(|w| w.im.abs() < TOL)
                .ok_or_else(|| ScdmError::Filter("unpaired real root".into()))?;
            let w = vals.swap_remove(j);
            pairs.push((v, w));
        } else {
            let j = vals
                .iter()
                .position(|w| (w.conj() - v).norm() < TOL * (1.0 + v.norm()))
                .ok_or_else(|| ScdmError::Filter("unpaired complex root".into()))?;
            let w = vals.swap_remove(j);
            pairs.push((v, w));
        }
    }
    Ok(pairs)
}

fn poly2(r1: Complex64, r2: Complex64) -> [f64; 3] {
    // (x - r1)(x - r2), coefficients are real for conjugate or real pairs
    [1.0, -(r1 + r2).re, (r1 * r2).re]
}

fn zpk_to_sos(zpk: Zpk) -> Result<Sos> {
    for p in &zpk.p {
        if p.norm() >= 1.0 - 1e-12 {
            return Err(ScdmError::Filter(format!(
                "unstable design: pole at |z| = {}",
                p.norm()
            )));
        }
    }
    if zpk.z.len() != zpk.p.len() || zpk.p.len() % 2 != 0 {
        return Err(ScdmError::Filter(format!(
            "expected matched even zero/pole counts, got {} zeros / {} poles",
            zpk.z.len(),
            zpk.p.len()
        )));
    }
    let mut pole_pairs = pair_up(zpk.p)?;
    // order sections by pole radius ascending; gain on the first section
    pole_pairs.sort_by(|a, b| a.0.norm().partial_cmp(&b.0.norm()).unwrap());
    let mut zeros = zpk.z;
    let mut sections = Vec::with_capacity(pole_pairs.len());
    for (i, (p1, p2)) in pole_pairs.iter().enumerate() {
        // take the two zeros nearest this pole pair
        let mut take_nearest = || {
            let j = zeros
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    (*a - p1).norm().partial_cmp(&(*b - p1).norm()).unwrap()
                })
                .map(|(j, _)| j)
                .unwrap();
            zeros.swap_remove(j)
        };
        let z1 = take_nearest();
        // prefer the conjugate of z1 if present, else nearest again
        let z2 = {
            let j = zeros
                .iter()
                .position(|w| (w.conj() - z1).norm() < 1e-8 * (1.0 + z1.norm()))
                .unwrap_or_else(|| {
                    zeros
                        .iter()
                        .enumerate()
                        .min_by(|(_, a), (_, b)| {
                            (*a - p1).norm().partial_cmp(&(*b - p1).norm()).unwrap()
                        })
                        .map(|(j, _)| j)
                        .unwrap()
                });
            zeros.swap_remove(j)
        };
        let mut b = poly2(z1, z2);
        let a = poly2(*p1, *p2);
        if i == 0 {
            for c in &mut b {
                *c *= zpk.k;
            }
        }
        sections.push(Biquad { b, a });
    }
    Ok(Sos { sections })
}

/// Design the digital bandpass cascade for `spec` at `sample_rate`.
pub fn design_filter(spec: &FilterSpec, sample_rate: f64) -> Result<Sos> {
    spec.validate(sample_rate)?;
    let proto = match spec.family {
        FilterFamily::Butterworth => butterworth_prototype(spec.order),
        FilterFamily::Chebyshev2 => cheby2_prototype(spec.order, spec.stopband_attenuation_db),
    };
    let fs = sample_rate;
    // prewarped band edges
    let w1 = 2.0 * fs * (PI * spec.band.0 / fs).tan();
    let w2 = 2.0 * fs * (PI * spec.band.1 / fs).tan();
    let wo = (w1 * w2).sqrt();
    let bw = w2 - w1;
    let digital = bilinear(lp2bp(proto, wo, bw), fs);
    zpk_to_sos(digital)
}
