//! Slow somatic path: HRV, respiration and posture on 10-30 s windows, and
//! the gross agitation/dullness estimate relative to a calibration baseline.
//!
//! Nothing in this module can be turned into a [`crate::fast::FastFeatureVector`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{bandpass, mean, periodogram, periodogram_padded, sample_sd, BandSpec, DspError};

pub const SLOW_WINDOW_MIN_MS: u64 = 10_000;
pub const SLOW_WINDOW_MAX_MS: u64 = 30_000;
pub const SLOW_WINDOW_MS: u64 = 30_000;
pub const SLOW_STEP_MS: u64 = 5_000;
/// Trailing IBI history used for LF/HF.
pub const LF_HF_BUFFER_MS: u64 = 60_000;
pub const LF_HF_MIN_BEATS: usize = 30;
pub const IBI_MIN_MS: f64 = 300.0;
pub const IBI_MAX_MS: f64 = 2000.0;
pub const IBI_RESAMPLE_HZ: f64 = 4.0;
pub const IMU_SATURATION_G: f64 = 4.0;
pub const IMU_SATURATION_MIN_MS: f64 = 250.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SomaticError {
    #[error("no plausible beats in stream")]
    NoBeatsDetected,
    #[error("need at least {need} beats, got {got}")]
    TooFewBeats { need: usize, got: usize },
    #[error("IBI span {span_ms} ms shorter than required {need_ms} ms")]
    SpanTooShort { span_ms: u64, need_ms: u64 },
    #[error("no breathing rhythm detected")]
    NoBreathDetected,
    #[error("accelerometer above {IMU_SATURATION_G} g for {run_ms:.0} ms")]
    ImuSaturated { run_ms: f64 },
    #[error("slow window of {len_ms} ms outside 10000..=30000 ms")]
    WindowLength { len_ms: u64 },
    #[error("IMU frame has {0} values, expected at least 3")]
    ImuFrame(usize),
    #[error("baseline has no usable statistics for {0}")]
    MissingBaseline(Marker),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Plausibility-filtered inter-beat intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct IbiSeries {
    pub beats: Vec<(u64, f64)>,
    pub dropped: usize,
}

impl IbiSeries {
    pub fn intervals(&self) -> Vec<f64> {
        self.beats.iter().map(|b| b.1).collect()
    }
}

/// Passes through `(t_ms, ibi_ms)` pairs, dropping values outside 300-2000 ms.
pub fn detect_ibis(stream: &[(u64, f64)]) -> Result<IbiSeries, SomaticError> {
    if stream.is_empty() {
        return Err(SomaticError::NoBeatsDetected);
    }
    let (beats, rejected): (Vec<_>, Vec<_>) = stream
        .iter()
        .partition(|(_, ibi)| ibi.is_finite() && (IBI_MIN_MS..=IBI_MAX_MS).contains(ibi));
    if beats.is_empty() {
        return Err(SomaticError::NoBeatsDetected);
    }
    if !rejected.is_empty() {
        log::debug!("dropped {} implausible IBIs", rejected.len());
    }
    Ok(IbiSeries {
        beats,
        dropped: rejected.len(),
    })
}

/// Root mean square of successive IBI differences, in ms.
pub fn rmssd(ibis: &[f64]) -> Result<f64, SomaticError> {
    if ibis.len() < 2 {
        return Err(SomaticError::TooFewBeats {
            need: 2,
            got: ibis.len(),
        });
    }
    let sq: f64 = ibis.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok((sq / (ibis.len() - 1) as f64).sqrt())
}

/// Linear interpolation of an IBI tachogram onto a uniform grid.
pub fn resample_ibis(ibis: &[(u64, f64)], rate_hz: f64) -> Vec<f64> {
    let Some((&(t0, _), &(t_end, _))) = ibis.first().zip(ibis.last()) else {
        return Vec::new();
    };
    let step_ms = 1000.0 / rate_hz;
    let count = ((t_end - t0) as f64 / step_ms).floor() as usize + 1;
    let mut out = Vec::with_capacity(count);
    let mut j = 0;
    for i in 0..count {
        let t = t0 as f64 + i as f64 * step_ms;
        while j + 2 < ibis.len() && (ibis[j + 1].0 as f64) < t {
            j += 1;
        }
        let (ta, va) = (ibis[j].0 as f64, ibis[j].1);
        let (tb, vb) = ibis.get(j + 1).map_or((ta, va), |b| (b.0 as f64, b.1));
        let v = if tb > ta {
            va + (vb - va) * ((t - ta) / (tb - ta)).clamp(0.0, 1.0)
        } else {
            va
        };
        out.push(v);
    }
    out
}

/// LF (0.04-0.15 Hz, upper edge exclusive) over HF (0.15-0.40 Hz) power of
/// the tachogram resampled to 4 Hz.
pub fn lf_hf_ratio(ibis: &[(u64, f64)]) -> Result<f64, SomaticError> {
    if ibis.len() < LF_HF_MIN_BEATS {
        return Err(SomaticError::TooFewBeats {
            need: LF_HF_MIN_BEATS,
            got: ibis.len(),
        });
    }
    let span_ms = ibis[ibis.len() - 1].0.saturating_sub(ibis[0].0);
    if span_ms < LF_HF_BUFFER_MS {
        return Err(SomaticError::SpanTooShort {
            span_ms,
            need_ms: LF_HF_BUFFER_MS,
        });
    }
    let grid = resample_ibis(ibis, IBI_RESAMPLE_HZ);
    let p = periodogram(&grid, IBI_RESAMPLE_HZ)?;
    let lf = p.band_half_open(BandSpec::LF.lo_hz, BandSpec::LF.hi_hz);
    let hf = p.band(BandSpec::HF.lo_hz, BandSpec::HF.hi_hz);
    if hf <= 0.0 {
        return Err(DspError::DegenerateWindow.into());
    }
    Ok(lf / hf)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RespFeatures {
    pub rate_bpm: f64,
    /// Mean peak-to-trough excursion of the band-limited trace.
    pub depth: f64,
    /// Coefficient of variation of breath intervals.
    pub irregularity: f64,
}

fn check_len(n: usize, fs: f64) -> Result<(), SomaticError> {
    let len_ms = (n as f64 * 1000.0 / fs).round() as u64;
    if !(SLOW_WINDOW_MIN_MS..=SLOW_WINDOW_MAX_MS).contains(&len_ms) {
        return Err(SomaticError::WindowLength { len_ms });
    }
    Ok(())
}

/// Rate, depth and irregularity of a respiration strain trace.
pub fn respiration_features(resp: &[f64], sample_rate_hz: f64) -> Result<RespFeatures, SomaticError> {
    check_len(resp.len(), sample_rate_hz)?;
    let band = BandSpec::RESP;
    let nfft = (resp.len() * 16).next_power_of_two();
    let p = match periodogram_padded(resp, sample_rate_hz, nfft) {
        Ok(p) => p,
        Err(DspError::DegenerateWindow) => return Err(SomaticError::NoBreathDetected),
        Err(e) => return Err(e.into()),
    };
    let k = p.peak_bin(band.lo_hz, band.hi_hz).ok_or(SomaticError::NoBreathDetected)?;
    if p.power[k] <= 0.0 {
        return Err(SomaticError::NoBreathDetected);
    }
    let shift = if k > 0 && k + 1 < p.power.len() {
        let (a, b, c) = (p.power[k - 1], p.power[k], p.power[k + 1]);
        let den = a - 2.0 * b + c;
        if den < 0.0 {
            (0.5 * (a - c) / den).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    } else {
        0.0
    };
    let rate_bpm = (k as f64 + shift) * p.resolution_hz * 60.0;

    let filtered = bandpass(resp, band, sample_rate_hz)?;
    let ups: Vec<f64> = filtered
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] < 0.0 && w[1] >= 0.0)
        .map(|(i, w)| i as f64 + w[0] / (w[0] - w[1]))
        .collect();
    let cycles: Vec<f64> = ups
        .windows(2)
        .map(|w| {
            let seg = &filtered[w[0].ceil() as usize..=w[1].floor() as usize];
            let hi = seg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = seg.iter().copied().fold(f64::INFINITY, f64::min);
            hi - lo
        })
        .collect();
    let depth = if cycles.is_empty() {
        let hi = filtered.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = filtered.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    } else {
        mean(&cycles)
    };
    let intervals: Vec<f64> = ups.windows(2).map(|w| (w[1] - w[0]) / sample_rate_hz).collect();
    let irregularity = if intervals.len() >= 2 {
        sample_sd(&intervals) / mean(&intervals)
    } else {
        0.0
    };
    Ok(RespFeatures {
        rate_bpm,
        depth,
        irregularity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuFeatures {
    /// Positive when the chin is raised.
    pub head_pitch_deg: f64,
    pub movement_jitter: f64,
}

/// Posture and movement from IMU frames `[ax_forward, ay_lateral, az_vertical, ..]` in g.
pub fn imu_features(frames: &[Vec<f64>], sample_rate_hz: f64) -> Result<ImuFeatures, SomaticError> {
    check_len(frames.len(), sample_rate_hz)?;
    if let Some(bad) = frames.iter().find(|f| f.len() < 3) {
        return Err(SomaticError::ImuFrame(bad.len()));
    }
    let mags: Vec<f64> = frames
        .iter()
        .map(|f| (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt())
        .collect();

    let mut run = 0usize;
    let mut longest = 0usize;
    for &m in &mags {
        run = if m > IMU_SATURATION_G { run + 1 } else { 0 };
        longest = longest.max(run);
    }
    let run_ms = longest as f64 * 1000.0 / sample_rate_hz;
    if run_ms >= IMU_SATURATION_MIN_MS {
        return Err(SomaticError::ImuSaturated { run_ms });
    }

    let fwd = mean(&frames.iter().map(|f| f[0]).collect::<Vec<_>>());
    let vert = mean(&frames.iter().map(|f| f[2]).collect::<Vec<_>>());
    let m = mean(&mags);
    let jitter = (mags.iter().map(|v| (v - m).powi(2)).sum::<f64>() / mags.len() as f64).sqrt();
    Ok(ImuFeatures {
        head_pitch_deg: fwd.atan2(vert) * 180.0 / PI,
        movement_jitter: jitter,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SomaticFeatures {
    pub t_ms: u64,
    pub rmssd_ms: f64,
    /// Absent until the trailing IBI buffer spans 60 s.
    pub lf_hf: Option<f64>,
    pub resp_rate_bpm: f64,
    pub resp_depth: f64,
    pub resp_irregularity: f64,
    pub head_pitch_deg: f64,
    pub movement_jitter: f64,
}

impl SomaticFeatures {
    pub const CSV_HEADER: &'static str =
        "t_ms,rmssd_ms,lf_hf,resp_rate_bpm,resp_depth,resp_irregularity,head_pitch_deg,movement_jitter";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.t_ms,
            self.rmssd_ms,
            self.lf_hf.map(|v| format!("{v:.6}")).unwrap_or_default(),
            self.resp_rate_bpm,
            self.resp_depth,
            self.resp_irregularity,
            self.head_pitch_deg,
            self.movement_jitter
        )
    }
}

/// Streams for one slow window ending at `t_ms`.
#[derive(Debug, Clone, Copy)]
pub struct SlowInput<'a> {
    pub t_ms: u64,
    /// Beats inside the window.
    pub ibis: &'a [(u64, f64)],
    /// Beats in the trailing LF/HF buffer.
    pub ibi_history: &'a [(u64, f64)],
    pub resp: &'a [f64],
    pub resp_rate_hz: f64,
    pub imu: &'a [Vec<f64>],
    pub imu_rate_hz: f64,
}

pub fn extract_somatic(input: SlowInput<'_>) -> Result<SomaticFeatures, SomaticError> {
    let beats = detect_ibis(input.ibis)?;
    let rmssd_ms = rmssd(&beats.intervals())?;
    let lf_hf = detect_ibis(input.ibi_history)
        .and_then(|h| lf_hf_ratio(&h.beats))
        .ok();
    let resp = respiration_features(input.resp, input.resp_rate_hz)?;
    let imu = imu_features(input.imu, input.imu_rate_hz)?;
    Ok(SomaticFeatures {
        t_ms: input.t_ms,
        rmssd_ms,
        lf_hf,
        resp_rate_bpm: resp.rate_bpm,
        resp_depth: resp.depth,
        resp_irregularity: resp.irregularity,
        head_pitch_deg: imu.head_pitch_deg,
        movement_jitter: imu.movement_jitter,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marker {
    LfHf,
    Jitter,
    Theta,
    HeadPitch,
    RespRate,
}

impl Marker {
    pub const ALL: [Marker; 5] = [
        Marker::LfHf,
        Marker::Jitter,
        Marker::Theta,
        Marker::HeadPitch,
        Marker::RespRate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Marker::LfHf => "lf_hf",
            Marker::Jitter => "jitter",
            Marker::Theta => "theta",
            Marker::HeadPitch => "head_pitch",
            Marker::RespRate => "resp_rate",
        }
    }

    fn value(self, f: &SomaticFeatures, theta_power: f64) -> Option<f64> {
        match self {
            Marker::LfHf => f.lf_hf,
            Marker::Jitter => Some(f.movement_jitter),
            Marker::Theta => Some(theta_power),
            Marker::HeadPitch => Some(f.head_pitch_deg),
            Marker::RespRate => Some(f.resp_rate_bpm),
        }
        .filter(|v| v.is_finite())
    }
}

impl fmt::Display for Marker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerStats {
    pub mean: f64,
    pub sd: f64,
}

/// Per-marker calibration statistics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub markers: BTreeMap<Marker, MarkerStats>,
}

impl BaselineStats {
    /// Mean and sample sd of every marker over calibration windows, each
    /// paired with its mean EEG theta power.
    pub fn estimate(windows: &[(SomaticFeatures, f64)]) -> Self {
        let markers = Marker::ALL
            .iter()
            .filter_map(|&m| {
                let v: Vec<f64> = windows.iter().filter_map(|(f, th)| m.value(f, *th)).collect();
                let sd = sample_sd(&v);
                (v.len() >= 2 && sd > 0.0).then(|| (m, MarkerStats { mean: mean(&v), sd }))
            })
            .collect();
        Self { markers }
    }

    pub fn get(&self, m: Marker) -> Result<MarkerStats, SomaticError> {
        self.markers
            .get(&m)
            .copied()
            .filter(|s| s.sd > 0.0 && s.sd.is_finite() && s.mean.is_finite())
            .ok_or(SomaticError::MissingBaseline(m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrossThresholds {
    pub z: f64,
    pub dullness_votes: usize,
}

impl Default for GrossThresholds {
    fn default() -> Self {
        Self {
            z: 1.5,
            dullness_votes: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomaticState {
    pub t_ms: u64,
    pub agitation: bool,
    pub dullness: bool,
    /// Both rules fired; both flags were cleared.
    pub conflict: bool,
    pub marker_zscores: BTreeMap<Marker, f64>,
}

pub fn gross_state(
    features: &SomaticFeatures,
    eeg_theta_power: f64,
    baseline: &BaselineStats,
) -> Result<SomaticState, SomaticError> {
    gross_state_with(features, eeg_theta_power, baseline, GrossThresholds::default())
}

pub fn gross_state_with(
    features: &SomaticFeatures,
    eeg_theta_power: f64,
    baseline: &BaselineStats,
    th: GrossThresholds,
) -> Result<SomaticState, SomaticError> {
    let mut z = BTreeMap::new();
    for m in Marker::ALL {
        let s = baseline.get(m)?;
        if let Some(v) = m.value(features, eeg_theta_power) {
            z.insert(m, (v - s.mean) / s.sd);
        }
    }
    let above = |m: Marker, sign: f64| z.get(&m).is_some_and(|v| sign * v > th.z);
    let agitation = above(Marker::LfHf, 1.0) && above(Marker::Jitter, 1.0);
    let votes = [
        above(Marker::Theta, 1.0),
        above(Marker::HeadPitch, -1.0),
        above(Marker::RespRate, -1.0),
    ]
    .iter()
    .filter(|&&b| b)
    .count();
    let dullness = votes >= th.dullness_votes;
    let conflict = agitation && dullness;
    if conflict {
        log::warn!("t={} agitation and dullness both fired; clearing both", features.t_ms);
    }
    Ok(SomaticState {
        t_ms: features.t_ms,
        agitation: agitation && !conflict,
        dullness: dullness && !conflict,
        conflict,
        marker_zscores: z,
    })
}
