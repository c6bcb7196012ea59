//! Layer-1 EEG features on 500 ms windows stepped every 250 ms.
//!
//! The only constructor for the feature vector takes an [`EegWindow`], which
//! can only be built from an EEG-stream [`Window`]. There is no route from
//! IBI, respiration, IMU or GSR data into this module.

use serde::{Deserialize, Serialize};

use crate::signal::{
    analytic_band, periodogram, phase_locking_value, DspError, EegChannel, Periodogram, StreamId,
    Window,
};
use crate::signal::{variance, BandSpec};

pub const FAST_WINDOW_MS: u64 = 500;
pub const FAST_STEP_MS: u64 = 250;

/// Number of classifier inputs carried by [`FastFeatureVector`].
pub const FAST_FEATURE_COUNT: usize = 6;
pub const FAST_FEATURE_NAMES: [&str; FAST_FEATURE_COUNT] = [
    "faa",
    "plv_theta",
    "tbr_fz",
    "tbr_cz",
    "hjorth_mobility",
    "hjorth_complexity",
];

/// A window known to come from the EEG stream with Fp1, Fp2, Fz and Cz present.
#[derive(Debug, Clone, PartialEq)]
pub struct EegWindow(Window);

impl TryFrom<Window> for EegWindow {
    type Error = DspError;

    fn try_from(win: Window) -> Result<Self, Self::Error> {
        if win.stream != StreamId::Eeg {
            return Err(DspError::WrongStream {
                expected: StreamId::Eeg,
                got: win.stream,
            });
        }
        for ch in EegChannel::REQUIRED {
            if win.channel(ch).is_none() {
                return Err(DspError::InvalidLayout(format!("window lacks {ch}")));
            }
        }
        Ok(EegWindow(win))
    }
}

impl EegWindow {
    pub fn window(&self) -> &Window {
        &self.0
    }

    pub fn into_inner(self) -> Window {
        self.0
    }

    fn ch(&self, name: EegChannel) -> &[f64] {
        self.0.channel(name).expect("required channel checked at construction")
    }

    fn fs(&self) -> f64 {
        self.0.sample_rate_hz
    }
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Per-window Layer-1 features. Absent values are NaN (serialized as null).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FastFeatureVector {
    /// Window end.
    pub t_ms: u64,
    #[serde(with = "nan_as_null")]
    pub faa: f64,
    #[serde(with = "nan_as_null")]
    pub plv_theta: f64,
    #[serde(with = "nan_as_null")]
    pub tbr_fz: f64,
    #[serde(with = "nan_as_null")]
    pub tbr_cz: f64,
    #[serde(with = "nan_as_null")]
    pub hjorth_mobility: f64,
    #[serde(with = "nan_as_null")]
    pub hjorth_complexity: f64,
    pub quality_flag: bool,
}

impl FastFeatureVector {
    pub fn absent(t_ms: u64) -> Self {
        Self {
            t_ms,
            faa: f64::NAN,
            plv_theta: f64::NAN,
            tbr_fz: f64::NAN,
            tbr_cz: f64::NAN,
            hjorth_mobility: f64::NAN,
            hjorth_complexity: f64::NAN,
            quality_flag: false,
        }
    }

    /// Classifier input in [`FAST_FEATURE_NAMES`] order.
    pub fn features(&self) -> [f64; FAST_FEATURE_COUNT] {
        [
            self.faa,
            self.plv_theta,
            self.tbr_fz,
            self.tbr_cz,
            self.hjorth_mobility,
            self.hjorth_complexity,
        ]
    }

    pub fn from_features(t_ms: u64, f: [f64; FAST_FEATURE_COUNT]) -> Self {
        Self {
            t_ms,
            faa: f[0],
            plv_theta: f[1],
            tbr_fz: f[2],
            tbr_cz: f[3],
            hjorth_mobility: f[4],
            hjorth_complexity: f[5],
            quality_flag: f.iter().all(|v| v.is_finite()),
        }
    }

    pub fn csv_header() -> String {
        format!("t_ms,{},quality_flag", FAST_FEATURE_NAMES.join(","))
    }

    pub fn csv_row(&self) -> String {
        let cells: Vec<String> = self
            .features()
            .iter()
            .map(|v| if v.is_finite() { v.to_string() } else { String::new() })
            .collect();
        format!("{},{},{}", self.t_ms, cells.join(","), self.quality_flag)
    }
}

fn faa_from(fp1: &Periodogram, fp2: &Periodogram) -> Result<f64, DspError> {
    let left = fp1.band(BandSpec::ALPHA.lo_hz, BandSpec::ALPHA.hi_hz);
    let right = fp2.band(BandSpec::ALPHA.lo_hz, BandSpec::ALPHA.hi_hz);
    if left <= 0.0 || right <= 0.0 {
        return Err(DspError::DegenerateWindow);
    }
    Ok(right.ln() - left.ln())
}

fn tbr_from(p: &Periodogram) -> Result<f64, DspError> {
    let theta = p.band(BandSpec::THETA.lo_hz, BandSpec::THETA.hi_hz);
    let beta = p.band(BandSpec::BETA.lo_hz, BandSpec::BETA.hi_hz);
    if beta <= 0.0 {
        return Err(DspError::DegenerateWindow);
    }
    Ok(theta / beta)
}

/// `ln P_alpha(Fp2) - ln P_alpha(Fp1)`: right minus left.
pub fn frontal_alpha_asymmetry(win: &EegWindow) -> Result<f64, DspError> {
    let fs = win.fs();
    faa_from(&periodogram(win.ch(EegChannel::Fp1), fs)?, &periodogram(win.ch(EegChannel::Fp2), fs)?)
}

/// Theta-band phase-locking value between Fz and Cz.
pub fn theta_plv(win: &EegWindow) -> Result<f64, DspError> {
    let fs = win.fs();
    let fz = analytic_band(win.ch(EegChannel::Fz), BandSpec::THETA, fs)?;
    let cz = analytic_band(win.ch(EegChannel::Cz), BandSpec::THETA, fs)?;
    if fz.iter().all(|c| c.norm() == 0.0) || cz.iter().all(|c| c.norm() == 0.0) {
        return Err(DspError::DegenerateWindow);
    }
    let pa = crate::signal::phases_of(&fz);
    let pb = crate::signal::phases_of(&cz);
    Ok(phase_locking_value(&pa, &pb))
}

/// Midline sites carrying the theta/beta ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MidlineSite {
    Fz,
    Cz,
}

impl From<MidlineSite> for EegChannel {
    fn from(s: MidlineSite) -> Self {
        match s {
            MidlineSite::Fz => EegChannel::Fz,
            MidlineSite::Cz => EegChannel::Cz,
        }
    }
}

pub fn theta_beta_ratio(win: &EegWindow, site: MidlineSite) -> Result<f64, DspError> {
    tbr_from(&periodogram(win.ch(site.into()), win.fs())?)
}

fn differentiate(x: &[f64], fs: f64) -> Vec<f64> {
    x.windows(2).map(|w| (w[1] - w[0]) * fs).collect()
}

/// Hjorth `(mobility, complexity)`. Mobility is in s⁻¹.
pub fn hjorth(x: &[f64], sample_rate_hz: f64) -> Result<(f64, f64), DspError> {
    if x.len() < 3 {
        return Err(DspError::DegenerateWindow);
    }
    let var_x = variance(x);
    let dx = differentiate(x, sample_rate_hz);
    let var_dx = variance(&dx);
    if var_x <= 0.0 || var_dx <= 0.0 {
        return Err(DspError::DegenerateWindow);
    }
    let ddx = differentiate(&dx, sample_rate_hz);
    let mobility = (var_dx / var_x).sqrt();
    let mobility_dx = (variance(&ddx) / var_dx).sqrt();
    Ok((mobility, mobility_dx / mobility))
}

/// Runs every Layer-1 feature on one window. Degenerate sub-features mark the
/// vector as low quality and every field as absent.
pub fn extract_fast_features(win: &EegWindow) -> FastFeatureVector {
    let t_ms = win.window().end_ms();
    compute_all(win).unwrap_or_else(|_| FastFeatureVector::absent(t_ms))
}

fn compute_all(win: &EegWindow) -> Result<FastFeatureVector, DspError> {
    let fs = win.fs();
    let fp1 = periodogram(win.ch(EegChannel::Fp1), fs)?;
    let fp2 = periodogram(win.ch(EegChannel::Fp2), fs)?;
    let fz = periodogram(win.ch(EegChannel::Fz), fs)?;
    let cz = periodogram(win.ch(EegChannel::Cz), fs)?;
    let (mob_fz, cx_fz) = hjorth(win.ch(EegChannel::Fz), fs)?;
    let (mob_cz, cx_cz) = hjorth(win.ch(EegChannel::Cz), fs)?;
    Ok(FastFeatureVector {
        t_ms: win.window().end_ms(),
        faa: faa_from(&fp1, &fp2)?,
        plv_theta: theta_plv(win)?,
        tbr_fz: tbr_from(&fz)?,
        tbr_cz: tbr_from(&cz)?,
        hjorth_mobility: 0.5 * (mob_fz + mob_cz),
        hjorth_complexity: 0.5 * (cx_fz + cx_cz),
        quality_flag: true,
    })
}

/// Extracts features for every window, dropping non-EEG windows.
pub fn extract_all(windows: &[Window]) -> Vec<FastFeatureVector> {
    windows
        .iter()
        .filter_map(|w| EegWindow::try_from(w.clone()).ok())
        .map(|w| extract_fast_features(&w))
        .collect()
}
