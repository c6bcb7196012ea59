//! Band-limiting and analytic-signal phase extraction.
//!
//! Both operations work in the frequency domain on a copy of the input that
//! is extended on each side by Burg linear prediction and then faded to zero.
//! For narrow-band input the extension continues the oscillation, so edge
//! transients stay small; wrap-around lands in the discarded padding.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::spectral::{forward_plan, inverse_plan};
use super::{BandSpec, DspError};

#[derive(Clone, Copy)]
enum Output {
    Real,
    Analytic,
}

/// Passband gain with raised-cosine skirts of width `tw` outside each edge.
fn passband_gain(f: f64, band: &BandSpec, tw: f64) -> f64 {
    let f = f.abs();
    if f >= band.lo_hz && f <= band.hi_hz {
        1.0
    } else if f < band.lo_hz && f > band.lo_hz - tw {
        0.5 * (1.0 + (PI * (band.lo_hz - f) / tw).cos())
    } else if f > band.hi_hz && f < band.hi_hz + tw {
        0.5 * (1.0 + (PI * (f - band.hi_hz) / tw).cos())
    } else {
        0.0
    }
}

fn transition_width(band: &BandSpec) -> f64 {
    (0.25 * (band.hi_hz - band.lo_hz)).min(0.5 * band.lo_hz)
}

const MAX_AR_ORDER: usize = 16;

/// Burg estimate of the prediction polynomial `[1, a1, .., ap]`.
fn burg(x: &[f64], order: usize) -> Vec<f64> {
    let n = x.len();
    let mut f = x.to_vec();
    let mut b = x.to_vec();
    let mut a = vec![1.0];
    for m in 0..order.min(n.saturating_sub(1)) {
        let (mut num, mut den) = (0.0, 0.0);
        for i in m + 1..n {
            num += f[i] * b[i - 1];
            den += f[i] * f[i] + b[i - 1] * b[i - 1];
        }
        if den <= f64::MIN_POSITIVE {
            break;
        }
        let k = -2.0 * num / den;
        a.push(0.0);
        let prev = a.clone();
        for (j, aj) in a.iter_mut().enumerate() {
            *aj += k * prev[prev.len() - 1 - j];
        }
        for i in (m + 1..n).rev() {
            let (fi, bi) = (f[i], b[i - 1]);
            f[i] = fi + k * bi;
            b[i] = bi + k * fi;
        }
    }
    a
}

fn predict(x: &[f64], a: &[f64], count: usize) -> Vec<f64> {
    let mut y = x.to_vec();
    for _ in 0..count {
        let next = -a[1..]
            .iter()
            .zip(y.iter().rev())
            .map(|(c, v)| c * v)
            .sum::<f64>();
        y.push(next);
    }
    y.split_off(x.len())
}

fn extend(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let a = burg(&centred, MAX_AR_ORDER.min(n / 4));
    let right = predict(&centred, &a, n);
    let reversed: Vec<f64> = centred.iter().rev().copied().collect();
    let mut left = predict(&reversed, &a, n);
    left.reverse();
    let fade = |i: usize| 0.5 - 0.5 * (PI * i as f64 / n as f64).cos();
    let left = left.into_iter().enumerate().map(|(i, v)| v * fade(i));
    let right = right.into_iter().enumerate().map(|(i, v)| v * fade(n - 1 - i));
    let ext: Vec<f64> = left.chain(centred.iter().copied()).chain(right).collect();
    let centre = ext.iter().sum::<f64>() / ext.len() as f64;
    ext.into_iter().map(|v| Complex64::new(v - centre, 0.0)).collect()
}

fn filter(x: &[f64], band: Option<(&BandSpec, f64)>, output: Output) -> Result<Vec<Complex64>, DspError> {
    let n = x.len();
    if n < 4 || x.iter().any(|v| !v.is_finite()) {
        return Err(DspError::DegenerateWindow);
    }
    let mut buf = extend(x);
    let m = buf.len();
    forward_plan(m).process(&mut buf);
    for (k, bin) in buf.iter_mut().enumerate() {
        let signed_k = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 };
        let mut gain = match band {
            Some((b, fs)) => passband_gain(signed_k * fs / m as f64, b, transition_width(b)),
            None => 1.0,
        };
        if let Output::Analytic = output {
            let nyquist = m % 2 == 0 && k == m / 2;
            if k == 0 || nyquist {
                // unchanged
            } else if signed_k > 0.0 {
                gain *= 2.0;
            } else {
                gain = 0.0;
            }
        }
        *bin *= gain;
    }
    inverse_plan(m).process(&mut buf);
    let scale = 1.0 / m as f64;
    Ok(buf[n..2 * n].iter().map(|c| c * scale).collect())
}

/// Zero-phase band-pass filter. Output has the same length as the input.
///
/// A constant (including all-zero) input produces an all-zero output.
pub fn bandpass(channel: &[f64], band: BandSpec, sample_rate_hz: f64) -> Result<Vec<f64>, DspError> {
    band.validate(sample_rate_hz)?;
    Ok(filter(channel, Some((&band, sample_rate_hz)), Output::Real)?
        .into_iter()
        .map(|c| c.re)
        .collect())
}

/// Analytic signal of `channel` restricted to `band`.
pub fn analytic_band(channel: &[f64], band: BandSpec, sample_rate_hz: f64) -> Result<Vec<Complex64>, DspError> {
    band.validate(sample_rate_hz)?;
    filter(channel, Some((&band, sample_rate_hz)), Output::Analytic)
}

fn wrap_phase(c: Complex64) -> f64 {
    let p = c.im.atan2(c.re);
    if p <= -PI {
        PI
    } else {
        p
    }
}

/// Per-sample phase in `(-pi, pi]` of an already band-limited channel.
pub fn instantaneous_phase(channel: &[f64]) -> Result<Vec<f64>, DspError> {
    let first = *channel.first().ok_or(DspError::DegenerateWindow)?;
    if channel.iter().all(|&v| v == first) {
        return Err(DspError::DegenerateWindow);
    }
    Ok(filter(channel, None, Output::Analytic)?
        .into_iter()
        .map(wrap_phase)
        .collect())
}

pub(crate) fn phases_of(analytic: &[Complex64]) -> Vec<f64> {
    analytic.iter().copied().map(wrap_phase).collect()
}

/// `|mean(exp(i (a - b)))|`, in `[0, 1]`.
pub fn phase_locking_value(phases_a: &[f64], phases_b: &[f64]) -> f64 {
    let n = phases_a.len().min(phases_b.len());
    if n == 0 {
        return 0.0;
    }
    let (mut re, mut im) = (0.0, 0.0);
    for (a, b) in phases_a.iter().zip(phases_b) {
        let d = a - b;
        re += d.cos();
        im += d.sin();
    }
    (re.hypot(im) / n as f64).min(1.0)
}
