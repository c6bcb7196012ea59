//! Negative-only cueing and the Layer-1 source registry.
//!
//! The only event this module can produce is [`CueKind::DistractionDetected`].
//! There is no reward, score or progress variant to construct:
//!
//! ```compile_fail
//! use cuelab::cue::CueKind;
//! let _ = CueKind::Reward;
//! ```
//!
//! ```compile_fail
//! use cuelab::cue::{CueEvent, CueKind};
//! let _ = CueEvent { t_ms: 0, kind: CueKind::DistractionDetected, trigger_probability: 0.9, score: 1.0 };
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::StreamId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CueError {
    #[error("Layer-1 source '{source_name}' reads from {stream}")]
    LayerViolation { source_name: String, stream: StreamId },
    #[error("cue config invalid: {0}")]
    Config(String),
    #[error("time {t_ms} ms does not advance past {last_ms} ms")]
    NonMonotonicTime { t_ms: u64, last_ms: u64 },
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
}

/// A feature source and the streams its fields are computed from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub name: String,
    pub fields: Vec<(String, StreamId)>,
}

impl SourceDescriptor {
    pub fn new(name: impl Into<String>, fields: &[(&str, StreamId)]) -> Self {
        Self {
            name: name.into(),
            fields: fields.iter().map(|(f, s)| (f.to_string(), *s)).collect(),
        }
    }

    /// The fast EEG feature vector.
    pub fn fast_eeg() -> Self {
        let fields: Vec<(&str, StreamId)> = crate::fast::FAST_FEATURE_NAMES
            .iter()
            .map(|n| (*n, StreamId::Eeg))
            .collect();
        Self::new("fast-eeg", &fields)
    }

    pub fn somatic() -> Self {
        Self::new(
            "somatic",
            &[
                ("rmssd_ms", StreamId::Ibi),
                ("lf_hf", StreamId::Ibi),
                ("resp_rate_bpm", StreamId::Resp),
                ("resp_depth", StreamId::Resp),
                ("resp_irregularity", StreamId::Resp),
                ("head_pitch_deg", StreamId::Imu),
                ("movement_jitter", StreamId::Imu),
            ],
        )
    }
}

/// Sources admitted to Layer 1. Only EEG-derived sources are accepted.
#[derive(Debug, Clone, Default)]
pub struct Layer1Registry {
    sources: Vec<SourceDescriptor>,
}

impl Layer1Registry {
    pub fn sources(&self) -> &[SourceDescriptor] {
        &self.sources
    }
}

pub fn register_layer1_source(registry: &mut Layer1Registry, source: SourceDescriptor) -> Result<(), CueError> {
    if let Some((_, stream)) = source.fields.iter().find(|(_, s)| *s != StreamId::Eeg) {
        return Err(CueError::LayerViolation {
            source_name: source.name.clone(),
            stream: *stream,
        });
    }
    registry.sources.push(source);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CueConfig {
    pub theta_on: f64,
    pub theta_off: f64,
    pub refractory_ms: u64,
    pub min_consecutive_windows: usize,
}

impl Default for CueConfig {
    fn default() -> Self {
        Self {
            theta_on: 0.8,
            theta_off: 0.4,
            refractory_ms: 20_000,
            min_consecutive_windows: 2,
        }
    }
}

impl CueConfig {
    pub fn validate(&self) -> Result<(), CueError> {
        if !(self.theta_off > 0.0 && self.theta_off < self.theta_on && self.theta_on <= 1.0) {
            return Err(CueError::Config(format!(
                "need 0 < theta_off < theta_on <= 1, got {} / {}",
                self.theta_off, self.theta_on
            )));
        }
        if self.min_consecutive_windows == 0 {
            return Err(CueError::Config("min_consecutive_windows must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueKind {
    DistractionDetected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CueEvent {
    pub t_ms: u64,
    pub kind: CueKind,
    pub trigger_probability: f64,
}

/// Hysteresis and refractory state for one session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CueState {
    armed: bool,
    consecutive: usize,
    last_cue_ms: Option<u64>,
    last_t_ms: Option<u64>,
}

impl Default for CueState {
    fn default() -> Self {
        Self {
            armed: true,
            consecutive: 0,
            last_cue_ms: None,
            last_t_ms: None,
        }
    }
}

impl CueState {
    pub fn armed(&self) -> bool {
        self.armed
    }

    pub fn last_cue_ms(&self) -> Option<u64> {
        self.last_cue_ms
    }
}

/// Advances the cue state machine by one classifier window.
pub fn step(t_ms: u64, probability: f64, config: &CueConfig, state: &mut CueState) -> Result<Option<CueEvent>, CueError> {
    if let Some(last_ms) = state.last_t_ms.filter(|&last| t_ms <= last) {
        return Err(CueError::NonMonotonicTime { t_ms, last_ms });
    }
    if !(0.0..=1.0).contains(&probability) {
        return Err(CueError::InvalidProbability(probability));
    }
    state.last_t_ms = Some(t_ms);
    if probability < config.theta_off {
        state.armed = true;
    }
    if probability >= config.theta_on {
        state.consecutive += 1;
    } else {
        state.consecutive = 0;
        return Ok(None);
    }
    let cooled = state
        .last_cue_ms
        .is_none_or(|last| t_ms - last >= config.refractory_ms);
    if state.armed && cooled && state.consecutive >= config.min_consecutive_windows {
        state.armed = false;
        state.last_cue_ms = Some(t_ms);
        return Ok(Some(CueEvent {
            t_ms,
            kind: CueKind::DistractionDetected,
            trigger_probability: probability,
        }));
    }
    Ok(None)
}

/// Runs a whole `(t_ms, probability)` stream from a fresh state.
pub fn run(stream: &[(u64, f64)], config: &CueConfig) -> Result<Vec<CueEvent>, CueError> {
    config.validate()?;
    let mut state = CueState::default();
    let mut out = Vec::new();
    for &(t, p) in stream {
        out.extend(step(t, p, config, &mut state)?);
    }
    Ok(out)
}

/// Audio token played for a cue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct CueToken(&'static str);

impl CueToken {
    pub fn id(&self) -> &'static str {
        self.0
    }
}

pub const NEUTRAL_TONE: CueToken = CueToken("neutral-tone-1");

/// Every cue renders to the same neutral token.
pub fn render_cue(_event: &CueEvent) -> CueToken {
    NEUTRAL_TONE
}
