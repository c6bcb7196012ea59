use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{BandSpec, DspError};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub(crate) fn inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Removes the least-squares line (mean plus linear trend).
pub(crate) fn detrend_linear(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let nf = n as f64;
    let t_mean = (nf - 1.0) / 2.0;
    let x_mean = x.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let dt = i as f64 - t_mean;
        sxx += dt * dt;
        sxy += dt * (v - x_mean);
    }
    let slope = sxy / sxx;
    x.iter()
        .enumerate()
        .map(|(i, &v)| v - x_mean - slope * (i as f64 - t_mean))
        .collect()
}

/// Periodic Hann taper.
pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

fn is_degenerate(detrended: &[f64], raw: &[f64]) -> bool {
    let scale = raw.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let peak = detrended.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    !peak.is_finite() || peak <= 1e-12 * scale
}

/// One-sided power spectrum of a detrended, Hann-tapered window.
///
/// Bin `k` sits at `k * resolution_hz`. The tapered series is re-centred so
/// bin 0 is empty, and scaling is chosen so that the sum of all bins equals
/// the tapered variance `sum((xw - mean(xw))^2) / sum(w^2)`: a unit-amplitude
/// sinusoid totals 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct Periodogram {
    pub resolution_hz: f64,
    pub power: Vec<f64>,
}

impl Periodogram {
    pub fn frequency(&self, k: usize) -> f64 {
        k as f64 * self.resolution_hz
    }

    /// Sum of bins with `lo <= f <= hi`.
    pub fn band(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        self.sum_where(|f| f >= lo_hz - 1e-9 && f <= hi_hz + 1e-9)
    }

    /// Sum of bins with `lo <= f < hi`.
    pub fn band_half_open(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        self.sum_where(|f| f >= lo_hz - 1e-9 && f < hi_hz - 1e-9)
    }

    pub fn bins_in(&self, lo_hz: f64, hi_hz: f64) -> usize {
        (0..self.power.len())
            .filter(|&k| {
                let f = self.frequency(k);
                f >= lo_hz - 1e-9 && f <= hi_hz + 1e-9
            })
            .count()
    }

    pub fn total(&self) -> f64 {
        self.power.iter().sum()
    }

    /// Index of the largest bin inside `[lo, hi]`.
    pub fn peak_bin(&self, lo_hz: f64, hi_hz: f64) -> Option<usize> {
        (0..self.power.len())
            .filter(|&k| {
                let f = self.frequency(k);
                f >= lo_hz && f <= hi_hz
            })
            .max_by(|&a, &b| self.power[a].total_cmp(&self.power[b]))
    }

    fn sum_where(&self, keep: impl Fn(f64) -> bool) -> f64 {
        self.power
            .iter()
            .enumerate()
            .filter(|(k, _)| keep(self.frequency(*k)))
            .map(|(_, p)| p)
            .sum()
    }
}

/// Detrend, taper and transform `x`, zero-padding to `nfft` if larger.
pub(crate) fn periodogram_padded(x: &[f64], sample_rate_hz: f64, nfft: usize) -> Result<Periodogram, DspError> {
    let n = x.len();
    if n < 4 {
        return Err(DspError::DegenerateWindow);
    }
    let detrended = detrend_linear(x);
    if is_degenerate(&detrended, x) {
        return Err(DspError::DegenerateWindow);
    }
    let w = hann(n);
    let w_energy: f64 = w.iter().map(|v| v * v).sum();
    let nfft = nfft.max(n);
    let tapered: Vec<f64> = detrended.iter().zip(&w).map(|(v, wi)| v * wi).collect();
    // Re-centring only touches bin 0, so the DC bin is exactly zero.
    let offset = tapered.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = tapered
        .iter()
        .map(|v| Complex64::new(v - offset, 0.0))
        .collect();
    buf.resize(nfft, Complex64::new(0.0, 0.0));
    forward_plan(nfft).process(&mut buf);

    let half = nfft / 2;
    let norm = nfft as f64 * w_energy;
    let power = (0..=half)
        .map(|k| {
            let edge = k == 0 || (nfft % 2 == 0 && k == half);
            let scale = if edge { 1.0 } else { 2.0 };
            scale * buf[k].norm_sqr() / norm
        })
        .collect();
    Ok(Periodogram {
        resolution_hz: sample_rate_hz / nfft as f64,
        power,
    })
}

/// Single-taper periodogram of one window.
pub fn periodogram(x: &[f64], sample_rate_hz: f64) -> Result<Periodogram, DspError> {
    periodogram_padded(x, sample_rate_hz, x.len())
}

/// Power of `x` inside `band`, in signal units squared.
pub fn band_power(x: &[f64], band: BandSpec, sample_rate_hz: f64) -> Result<f64, DspError> {
    band.validate(sample_rate_hz)?;
    Ok(periodogram(x, sample_rate_hz)?.band(band.lo_hz, band.hi_hz))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, amp: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / fs).sin())
            .collect()
    }

    #[test]
    fn constant_is_degenerate() {
        assert_eq!(band_power(&[3.0; 128], BandSpec::THETA, 256.0), Err(DspError::DegenerateWindow));
        let ramp: Vec<f64> = (0..128).map(|i| i as f64 * 0.5).collect();
        assert_eq!(periodogram(&ramp, 256.0), Err(DspError::DegenerateWindow));
    }

    #[test]
    fn unit_sine_totals_half() {
        let x = sine(6.0, 1.0, 256.0, 128);
        let p = periodogram(&x, 256.0).unwrap();
        assert!((p.total() - 0.5).abs() < 0.02, "{}", p.total());
    }

    #[test]
    fn amplitude_scales_quadratically() {
        let x = sine(10.0, 1.0, 256.0, 128);
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let a = band_power(&x, BandSpec::ALPHA, 256.0).unwrap();
        let b = band_power(&y, BandSpec::ALPHA, 256.0).unwrap();
        assert!((b / a - 9.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_band_rejected() {
        let x = sine(6.0, 1.0, 64.0, 64);
        assert!(matches!(band_power(&x, BandSpec::BETA, 40.0), Err(DspError::InvalidBand { .. })));
    }

    #[test]
    fn detrend_removes_line() {
        let x: Vec<f64> = (0..50).map(|i| 2.0 + 0.3 * i as f64).collect();
        assert!(detrend_linear(&x).iter().all(|v| v.abs() < 1e-9));
    }
}
