//! Time-series types and DSP primitives shared by the fast and slow paths.
//!
//! Every timestamp in the crate is an integer millisecond offset from
//! session start. Windows are cut by sample index relative to the first
//! frame of a [`StreamBuffer`], so the arithmetic stays exact for any
//! sample rate.

mod buffer;
mod phase;
mod spectral;

pub use buffer::{segment_windows, window_sample_count, StreamBuffer, Window};
pub use phase::{analytic_band, bandpass, instantaneous_phase, phase_locking_value};
pub use spectral::{band_power, periodogram, Periodogram};
pub(crate) use phase::phases_of;
pub(crate) use spectral::periodogram_padded;

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("buffer spans {span_ms} ms, shorter than the {win_ms} ms window")]
    BufferTooShort { span_ms: u64, win_ms: u64 },
    #[error("degenerate window: no usable variation in the samples")]
    DegenerateWindow,
    #[error("baseline standard deviation is zero")]
    ZeroVariance,
    #[error("invalid band {name}: {lo_hz}..{hi_hz} Hz at fs={sample_rate_hz} Hz")]
    InvalidBand {
        name: BandName,
        lo_hz: f64,
        hi_hz: f64,
        sample_rate_hz: f64,
    },
    #[error("step must be at least 1 ms")]
    InvalidStep,
    #[error("timestamp {t_ms} precedes previous frame at {prev_ms} on {stream}")]
    NonMonotonicTime {
        stream: StreamId,
        t_ms: u64,
        prev_ms: u64,
    },
    #[error("frame has {got} channels, stream {stream} expects {expected}")]
    ChannelCountMismatch {
        stream: StreamId,
        expected: usize,
        got: usize,
    },
    #[error("frame belongs to stream {got}, buffer holds {expected}")]
    WrongStream { expected: StreamId, got: StreamId },
    #[error("invalid channel layout: {0}")]
    InvalidLayout(String),
}

/// Physiological stream identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StreamId {
    Eeg,
    Ibi,
    Resp,
    Imu,
    Gsr,
}

impl StreamId {
    pub const ALL: [StreamId; 5] = [
        StreamId::Eeg,
        StreamId::Ibi,
        StreamId::Resp,
        StreamId::Imu,
        StreamId::Gsr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StreamId::Eeg => "EEG",
            StreamId::Ibi => "IBI",
            StreamId::Resp => "RESP",
            StreamId::Imu => "IMU",
            StreamId::Gsr => "GSR",
        }
    }
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StreamId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StreamId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown stream '{s}'"))
    }
}

/// Electrode sites supported by the headset montage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EegChannel {
    Fp1,
    Fp2,
    Fz,
    Cz,
    #[serde(rename = "TP9")]
    Tp9,
    #[serde(rename = "TP10")]
    Tp10,
}

impl EegChannel {
    pub const REQUIRED: [EegChannel; 4] =
        [EegChannel::Fp1, EegChannel::Fp2, EegChannel::Fz, EegChannel::Cz];

    pub fn as_str(self) -> &'static str {
        match self {
            EegChannel::Fp1 => "Fp1",
            EegChannel::Fp2 => "Fp2",
            EegChannel::Fz => "Fz",
            EegChannel::Cz => "Cz",
            EegChannel::Tp9 => "TP9",
            EegChannel::Tp10 => "TP10",
        }
    }
}

impl fmt::Display for EegChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EegChannel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            EegChannel::Fp1,
            EegChannel::Fp2,
            EegChannel::Fz,
            EegChannel::Cz,
            EegChannel::Tp9,
            EegChannel::Tp10,
        ]
        .into_iter()
        .find(|c| c.as_str().eq_ignore_ascii_case(s))
        .ok_or_else(|| format!("unknown EEG channel '{s}'"))
    }
}

/// One timestamped multichannel sample.
///
/// EEG values are microvolts, IBI is a single value in milliseconds,
/// RESP is strain in arbitrary units, IMU is `[ax, ay, az]` in g followed by
/// `[gx, gy, gz]` in deg/s, GSR is microsiemens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFrame {
    pub t_ms: u64,
    pub stream: StreamId,
    pub values: Vec<f64>,
}

impl SampleFrame {
    pub fn new(t_ms: u64, stream: StreamId, values: Vec<f64>) -> Self {
        Self { t_ms, stream, values }
    }
}

/// EEG montage plus per-stream sample rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelLayout {
    eeg_channels: Vec<EegChannel>,
    eeg_rate_hz: f64,
}

pub const MIN_EEG_RATE_HZ: f64 = 128.0;

impl ChannelLayout {
    pub fn new(eeg_channels: Vec<EegChannel>, eeg_rate_hz: f64) -> Result<Self, DspError> {
        for required in EegChannel::REQUIRED {
            if !eeg_channels.contains(&required) {
                return Err(DspError::InvalidLayout(format!("missing required channel {required}")));
            }
        }
        let mut seen = eeg_channels.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != eeg_channels.len() {
            return Err(DspError::InvalidLayout("duplicate channel".into()));
        }
        if !(eeg_rate_hz >= MIN_EEG_RATE_HZ) {
            return Err(DspError::InvalidLayout(format!(
                "EEG sample rate {eeg_rate_hz} Hz below {MIN_EEG_RATE_HZ} Hz"
            )));
        }
        Ok(Self {
            eeg_channels,
            eeg_rate_hz,
        })
    }

    /// Fp1, Fp2, Fz, Cz at 256 Hz.
    pub fn standard() -> Self {
        Self::new(EegChannel::REQUIRED.to_vec(), 256.0).expect("standard layout is valid")
    }

    pub fn eeg_channels(&self) -> &[EegChannel] {
        &self.eeg_channels
    }

    pub fn eeg_rate_hz(&self) -> f64 {
        self.eeg_rate_hz
    }

    /// Compact `Fp1,Fp2,Fz,Cz@256` form used in session log headers.
    pub fn to_header(&self) -> String {
        let names: Vec<&str> = self.eeg_channels.iter().map(|c| c.as_str()).collect();
        format!("{}@{}", names.join(","), self.eeg_rate_hz)
    }

    pub fn from_header(s: &str) -> Result<Self, DspError> {
        let (names, rate) = s
            .split_once('@')
            .ok_or_else(|| DspError::InvalidLayout(format!("expected CHANNELS@RATE, got '{s}'")))?;
        let channels = names
            .split(',')
            .map(|n| n.trim().parse::<EegChannel>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(DspError::InvalidLayout)?;
        let rate: f64 = rate
            .trim()
            .parse()
            .map_err(|_| DspError::InvalidLayout(format!("bad sample rate '{rate}'")))?;
        Self::new(channels, rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandName {
    Theta,
    Alpha,
    Beta,
    Lf,
    Hf,
    RespBand,
    Custom,
}

impl fmt::Display for BandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BandName::Theta => "theta",
            BandName::Alpha => "alpha",
            BandName::Beta => "beta",
            BandName::Lf => "LF",
            BandName::Hf => "HF",
            BandName::RespBand => "resp_band",
            BandName::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// A named frequency band. Edges are inclusive when summing periodogram bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: BandName,
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl BandSpec {
    pub const THETA: BandSpec = BandSpec::named(BandName::Theta, 4.0, 8.0);
    pub const ALPHA: BandSpec = BandSpec::named(BandName::Alpha, 8.0, 12.0);
    pub const BETA: BandSpec = BandSpec::named(BandName::Beta, 13.0, 30.0);
    pub const LF: BandSpec = BandSpec::named(BandName::Lf, 0.04, 0.15);
    pub const HF: BandSpec = BandSpec::named(BandName::Hf, 0.15, 0.40);
    pub const RESP: BandSpec = BandSpec::named(BandName::RespBand, 0.05, 0.5);

    const fn named(name: BandName, lo_hz: f64, hi_hz: f64) -> Self {
        Self { name, lo_hz, hi_hz }
    }

    pub fn custom(lo_hz: f64, hi_hz: f64) -> Self {
        Self::named(BandName::Custom, lo_hz, hi_hz)
    }

    /// Checks `0 < lo < hi < fs/2`.
    pub fn validate(&self, sample_rate_hz: f64) -> Result<(), DspError> {
        if self.lo_hz > 0.0 && self.lo_hz < self.hi_hz && self.hi_hz < sample_rate_hz / 2.0 {
            Ok(())
        } else {
            Err(DspError::InvalidBand {
                name: self.name,
                lo_hz: self.lo_hz,
                hi_hz: self.hi_hz,
                sample_rate_hz,
            })
        }
    }
}

/// `(value - mean) / sd`.
pub fn zscore(value: f64, baseline_mean: f64, baseline_sd: f64) -> Result<f64, DspError> {
    if baseline_sd == 0.0 {
        return Err(DspError::ZeroVariance);
    }
    Ok((value - baseline_mean) / baseline_sd)
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population variance.
pub(crate) fn variance(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub(crate) fn sample_sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

pub(crate) fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}
