//! Synthetic physiology and an adaptive user model.
//!
//! The generator emits raw multi-stream signals for a hidden mental-state
//! timeline. Devices only ever see features computed from those signals by the
//! fast and slow paths; the timeline itself is kept in [`GroundTruth`] and is
//! used for scoring, never for feedback.

mod agent;
mod closed_loop;
mod device;
mod dynamics;
mod generator;
mod study;

pub use agent::{agent_step, StrategyPolicy};
pub use closed_loop::{
    evaluate_r_proxy, run_closed_loop, AgentConfig, ClosedLoopConfig, EpisodeRecord, Trajectory,
};
pub use device::{
    device_feedback, window_features, BandPowers, DeviceRuntime, DeviceSpec, Feedback, RewardRule, WindowFeatures,
    CALM_CENTER, CALM_SCALE,
};
pub use dynamics::{
    device_absent_hazards, in_session_hazards, measure_v_target, simulate_chain, Hazards, BASE_ONSET_PER_S,
    BASE_RECOVERY_PER_S, CHAIN_STEP_MS, V_TARGET_EPISODE_MS,
};
pub use study::{
    answer_probe, calibrate, device_absent_intervals, session_seed, session_signals, simulate_session, Calibration, PhaseOutcome, Practice,
    SimulatedSession,
    PROBE_UNCLEAR_RATE,
};
pub use generator::{
    generate_signals, generate_timeline, Emission, SignalBundle, EEG_RATE_HZ, GSR_RATE_HZ,
    IMU_RATE_HZ, RESP_RATE_HZ,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::ClassifierError;
use crate::cue::CueError;
use crate::protocol::ProtocolError;
use crate::signal::DspError;
use crate::somatic::SomaticError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("duration {duration_ms} ms is shorter than 1000 ms")]
    DurationTooShort { duration_ms: u64 },
    #[error("episodes must be at least 1")]
    NoEpisodes,
    #[error("reward must be finite, got {0}")]
    NonFiniteReward(f64),
    #[error("device '{0}' needs a trained wandering model")]
    NoModel(String),
    #[error("unknown strategy '{0}'")]
    UnknownStrategy(String),
    #[error("unknown reward rule '{0}'")]
    UnknownRewardRule(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Somatic(#[from] SomaticError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Cue(#[from] CueError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MentalState {
    Settled,
    Wandering,
    Drowsy,
    Suppressing,
}

impl MentalState {
    pub const ALL: [MentalState; 4] = [
        MentalState::Settled,
        MentalState::Wandering,
        MentalState::Drowsy,
        MentalState::Suppressing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MentalState::Settled => "settled",
            MentalState::Wandering => "wandering",
            MentalState::Drowsy => "drowsy",
            MentalState::Suppressing => "suppressing",
        }
    }
}

impl fmt::Display for MentalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    GenuineRegulation,
    JawArtefact,
    PostureTrick,
    PacedBreathing,
    Suppression,
    Drowsiness,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::GenuineRegulation,
        Strategy::JawArtefact,
        Strategy::PostureTrick,
        Strategy::PacedBreathing,
        Strategy::Suppression,
        Strategy::Drowsiness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::GenuineRegulation => "genuine_regulation",
            Strategy::JawArtefact => "jaw_artefact",
            Strategy::PostureTrick => "posture_trick",
            Strategy::PacedBreathing => "paced_breathing",
            Strategy::Suppression => "suppression",
            Strategy::Drowsiness => "drowsiness",
        }
    }

    pub fn index(self) -> usize {
        Strategy::ALL.iter().position(|&s| s == self).expect("listed in ALL")
    }

    /// Log-scale effect on the device-absent wandering hazard. Negative means
    /// the habit survives removal of the device.
    pub fn v_target_effect(self) -> f64 {
        match self {
            Strategy::GenuineRegulation => -0.7,
            _ => 0.0,
        }
    }

    /// State the strategy holds during practice when attention is not lost.
    pub fn home_state(self) -> MentalState {
        match self {
            Strategy::Suppression => MentalState::Suppressing,
            Strategy::Drowsiness => MentalState::Drowsy,
            _ => MentalState::Settled,
        }
    }

    /// Long-run fraction of practice time spent in the home state.
    pub fn home_occupancy(self) -> f64 {
        match self {
            Strategy::GenuineRegulation => 0.8,
            Strategy::JawArtefact => 0.4,
            Strategy::PostureTrick => 0.45,
            Strategy::PacedBreathing => 0.55,
            Strategy::Suppression => 0.8,
            Strategy::Drowsiness => 0.9,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|v| v.as_str() == s.trim())
            .ok_or_else(|| SimError::UnknownStrategy(s.to_string()))
    }
}

/// One constant-state stretch of the hidden timeline, `[start_ms, end_ms)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSegment {
    pub start_ms: u64,
    pub end_ms: u64,
    pub state: MentalState,
}

/// Hidden mental-state timeline of one simulated recording.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    segments: Vec<StateSegment>,
}

impl GroundTruth {
    pub fn constant(state: MentalState, duration_ms: u64) -> Self {
        Self {
            segments: vec![StateSegment {
                start_ms: 0,
                end_ms: duration_ms,
                state,
            }],
        }
    }

    /// Builds a timeline from `(start_ms, state)` change points. Adjacent
    /// repeats are merged.
    pub fn from_changes(changes: &[(u64, MentalState)], duration_ms: u64) -> Self {
        let mut segments: Vec<StateSegment> = Vec::new();
        for (i, &(start_ms, state)) in changes.iter().enumerate() {
            let end_ms = changes.get(i + 1).map_or(duration_ms, |c| c.0).min(duration_ms);
            if end_ms <= start_ms {
                continue;
            }
            match segments.last_mut() {
                Some(last) if last.state == state => last.end_ms = end_ms,
                _ => segments.push(StateSegment { start_ms, end_ms, state }),
            }
        }
        Self { segments }
    }

    pub fn segments(&self) -> &[StateSegment] {
        &self.segments
    }

    pub fn duration_ms(&self) -> u64 {
        self.segments.last().map_or(0, |s| s.end_ms)
    }

    pub fn state_at(&self, t_ms: u64) -> Option<MentalState> {
        self.segments
            .iter()
            .find(|s| (s.start_ms..s.end_ms).contains(&t_ms))
            .map(|s| s.state)
    }

    /// `(t_ms, wandering)` at every change into or out of wandering.
    pub fn wandering_transitions(&self) -> Vec<(u64, bool)> {
        let mut out = Vec::new();
        let mut prev = None;
        for s in &self.segments {
            let w = s.state == MentalState::Wandering;
            if prev != Some(w) {
                out.push((s.start_ms, w));
                prev = Some(w);
            }
        }
        out
    }

    pub fn fraction_in(&self, state: MentalState) -> f64 {
        let total = self.duration_ms();
        if total == 0 {
            return 0.0;
        }
        let t: u64 = self
            .segments
            .iter()
            .filter(|s| s.state == state)
            .map(|s| s.end_ms - s.start_ms)
            .sum();
        t as f64 / total as f64
    }

    /// Time already spent in the current wandering run at `t_ms`.
    pub fn wandering_run_ms(&self, t_ms: u64) -> Option<u64> {
        let i = self
            .segments
            .iter()
            .position(|s| (s.start_ms..s.end_ms).contains(&t_ms))?;
        (self.segments[i].state == MentalState::Wandering).then(|| t_ms - self.segments[i].start_ms)
    }
}
