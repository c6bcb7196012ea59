//! Reward rules of the simulated devices and the feature pipeline feeding them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{SignalBundle, SimError};
use crate::classifier::{predict, WanderingModel};
use crate::cue::{self, CueConfig, CueEvent, CueState};
use crate::fast::{extract_fast_features, EegWindow, FastFeatureVector, FAST_STEP_MS, FAST_WINDOW_MS};
use crate::signal::{band_power, segment_windows, BandSpec, EegChannel, Window};
use crate::somatic::SomaticFeatures;

/// Calm score that maps to zero valence: `ln((theta + alpha) / beta)`.
pub const CALM_CENTER: f64 = 1.5;
pub const CALM_SCALE: f64 = 2.0;
/// Breathing rate rewarded by the resonance rule, breaths per minute.
const RESONANCE_BPM: f64 = 6.0;
const RESONANCE_WIDTH_BPM: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardRule {
    RewardCalmEeg,
    RewardHrvCoherence,
    RewardBreathResonance,
    NegativeCueOnly,
    None,
}

impl RewardRule {
    pub const ALL: [RewardRule; 5] = [
        RewardRule::RewardCalmEeg,
        RewardRule::RewardHrvCoherence,
        RewardRule::RewardBreathResonance,
        RewardRule::NegativeCueOnly,
        RewardRule::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RewardRule::RewardCalmEeg => "reward_calm_eeg",
            RewardRule::RewardHrvCoherence => "reward_hrv_coherence",
            RewardRule::RewardBreathResonance => "reward_breath_resonance",
            RewardRule::NegativeCueOnly => "negative_cue_only",
            RewardRule::None => "none",
        }
    }

    /// Human-readable definition of the feedback valence.
    pub fn valence_definition(self) -> &'static str {
        match self {
            RewardRule::RewardCalmEeg => "tanh((ln((theta + alpha) / beta) - 1.5) / 2) over Fz/Cz band power",
            RewardRule::RewardHrvCoherence => "(LF/HF - 1) / (LF/HF + 1) on the trailing 60 s of beats",
            RewardRule::RewardBreathResonance => "2 exp(-((rate - 6 bpm) / 1.5)^2) - 1",
            RewardRule::NegativeCueOnly => "always 0; neutral cue on confirmed distraction",
            RewardRule::None => "always 0",
        }
    }
}

impl fmt::Display for RewardRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RewardRule {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RewardRule::ALL
            .into_iter()
            .find(|r| r.as_str() == s.trim())
            .ok_or_else(|| SimError::UnknownRewardRule(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub name: String,
    pub reward_rule: RewardRule,
}

impl DeviceSpec {
    pub fn new(name: impl Into<String>, reward_rule: RewardRule) -> Self {
        Self {
            name: name.into(),
            reward_rule,
        }
    }

    pub fn muse_like() -> Self {
        Self::new("muse-like", RewardRule::RewardCalmEeg)
    }

    pub fn heartmath_like() -> Self {
        Self::new("heartmath-like", RewardRule::RewardHrvCoherence)
    }

    pub fn iom2_like() -> Self {
        Self::new("iom2-like", RewardRule::RewardBreathResonance)
    }

    pub fn proposed() -> Self {
        Self::new("proposed", RewardRule::NegativeCueOnly)
    }

    pub fn none() -> Self {
        Self::new("none", RewardRule::None)
    }
}

/// Mean Fz/Cz band powers of one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPowers {
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl BandPowers {
    pub fn from_window(win: &Window) -> Option<Self> {
        let mut acc = [0.0; 3];
        for ch in [EegChannel::Fz, EegChannel::Cz] {
            let x = win.channel(ch)?;
            for (slot, band) in acc.iter_mut().zip([BandSpec::THETA, BandSpec::ALPHA, BandSpec::BETA]) {
                *slot += 0.5 * band_power(x, band, win.sample_rate_hz).ok()?;
            }
        }
        Some(Self {
            theta: acc[0],
            alpha: acc[1],
            beta: acc[2],
        })
    }

    pub fn calm_score(&self) -> f64 {
        ((self.theta + self.alpha) / self.beta).ln()
    }
}

/// Everything a device may look at for one 500 ms window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFeatures {
    pub t_ms: u64,
    pub bands: Option<BandPowers>,
    pub fast: FastFeatureVector,
    /// Latest slow-path output at or before `t_ms`.
    pub somatic: Option<SomaticFeatures>,
}

/// Runs the fast and slow paths over a recording.
pub fn window_features(bundle: &SignalBundle) -> Result<Vec<WindowFeatures>, SimError> {
    let buf = bundle.eeg_buffer()?;
    let windows = segment_windows(&buf, FAST_WINDOW_MS, FAST_STEP_MS)?;
    let slow = bundle.somatic_features()?;
    let mut out = Vec::with_capacity(windows.len());
    for w in windows {
        let t_ms = w.end_ms();
        let bands = BandPowers::from_window(&w);
        let fast = extract_fast_features(&EegWindow::try_from(w)?);
        let somatic = slow.iter().rev().find(|s| s.t_ms <= t_ms).copied();
        out.push(WindowFeatures {
            t_ms,
            bands,
            fast,
            somatic,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Feedback {
    pub valence: f64,
    pub cue: Option<CueEvent>,
}

/// A device bound to a session: its rule, optional wandering model and cue state.
#[derive(Debug, Clone)]
pub struct DeviceRuntime<'m> {
    spec: DeviceSpec,
    model: Option<&'m WanderingModel>,
    cue_config: CueConfig,
    cue_state: CueState,
}

impl<'m> DeviceRuntime<'m> {
    pub fn new(spec: DeviceSpec, model: Option<&'m WanderingModel>, cue_config: CueConfig) -> Result<Self, SimError> {
        if spec.reward_rule == RewardRule::NegativeCueOnly && model.is_none() {
            return Err(SimError::NoModel(spec.name));
        }
        cue_config.validate()?;
        Ok(Self {
            spec,
            model,
            cue_config,
            cue_state: CueState::default(),
        })
    }

    pub fn spec(&self) -> &DeviceSpec {
        &self.spec
    }

    /// Starts a fresh session.
    pub fn reset(&mut self) {
        self.cue_state = CueState::default();
    }
}

pub fn device_feedback(device: &mut DeviceRuntime<'_>, features: &WindowFeatures) -> Result<Feedback, SimError> {
    let silent = Feedback { valence: 0.0, cue: None };
    let valence = match device.spec.reward_rule {
        RewardRule::RewardCalmEeg => features
            .bands
            .map_or(0.0, |b| ((b.calm_score() - CALM_CENTER) / CALM_SCALE).tanh()),
        RewardRule::RewardHrvCoherence => features
            .somatic
            .and_then(|s| s.lf_hf)
            .map_or(0.0, |r| (r - 1.0) / (r + 1.0)),
        RewardRule::RewardBreathResonance => features.somatic.map_or(0.0, |s| {
            2.0 * (-((s.resp_rate_bpm - RESONANCE_BPM) / RESONANCE_WIDTH_BPM).powi(2)).exp() - 1.0
        }),
        RewardRule::NegativeCueOnly => {
            if !features.fast.quality_flag {
                return Ok(silent);
            }
            let model = device.model.ok_or_else(|| SimError::NoModel(device.spec.name.clone()))?;
            let p = predict(model, &features.fast)?;
            let cue = cue::step(features.t_ms, p, &device.cue_config, &mut device.cue_state)?;
            return Ok(Feedback { valence: 0.0, cue });
        }
        RewardRule::None => 0.0,
    };
    Ok(Feedback { valence, cue: None })
}
