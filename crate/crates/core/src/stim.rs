//! Stimulation gating: fixed amplitude, 400/100 ms time-division duty cycle,
//! Layer-1 masking and the Layer-3 taVNS trigger.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::Window;
use crate::somatic::SomaticState;

/// Hard safety ceiling; configs may lower it but never raise it.
pub const MAX_AMPLITUDE_MA: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StimError {
    #[error("amplitude is locked once the session has started")]
    AmplitudeLocked,
    #[error("amplitude {amplitude_ma} mA outside (0, {ceiling_ma}] mA")]
    OutOfRange { amplitude_ma: f64, ceiling_ma: f64 },
    #[error("stimulation is disabled")]
    StimDisabled,
    #[error("amplitude has not been set")]
    AmplitudeNotSet,
    #[error("invalid stim timing: {0}")]
    InvalidTiming(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StimTiming {
    pub stim_on_ms: u64,
    pub pause_ms: u64,
    pub settle_ms: u64,
}

impl Default for StimTiming {
    fn default() -> Self {
        Self {
            stim_on_ms: 400,
            pause_ms: 100,
            settle_ms: 50,
        }
    }
}

impl StimTiming {
    pub fn cycle_ms(&self) -> u64 {
        self.stim_on_ms + self.pause_ms
    }

    pub fn validate(&self) -> Result<(), StimError> {
        if self.stim_on_ms == 0 || self.pause_ms == 0 || self.settle_ms == 0 {
            return Err(StimError::InvalidTiming("all durations must be positive".into()));
        }
        if self.settle_ms > self.pause_ms {
            return Err(StimError::InvalidTiming(format!(
                "settle {} ms exceeds pause {} ms",
                self.settle_ms, self.pause_ms
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimConfig {
    amplitude_ma: Option<f64>,
    pub timing: StimTiming,
    pub enabled: bool,
    ceiling_ma: f64,
    #[serde(skip)]
    started: bool,
}

impl Default for StimConfig {
    fn default() -> Self {
        Self {
            amplitude_ma: None,
            timing: StimTiming::default(),
            enabled: false,
            ceiling_ma: MAX_AMPLITUDE_MA,
            started: false,
        }
    }
}

impl StimConfig {
    pub fn enabled() -> Self {
        Self {
            enabled: true,
            ..Self::default()
        }
    }

    pub fn amplitude_ma(&self) -> Option<f64> {
        self.amplitude_ma
    }

    pub fn ceiling_ma(&self) -> f64 {
        self.ceiling_ma
    }

    pub fn is_started(&self) -> bool {
        self.started
    }

    /// Lowers the safety ceiling. Requests above the current one are clamped.
    pub fn with_ceiling(mut self, ceiling_ma: f64) -> Self {
        self.ceiling_ma = ceiling_ma.min(self.ceiling_ma);
        self
    }

    /// Fixes the stimulation amplitude. Only possible before the session starts.
    pub fn set_amplitude(&self, amplitude_ma: f64) -> Result<StimConfig, StimError> {
        if self.started {
            return Err(StimError::AmplitudeLocked);
        }
        if !(amplitude_ma > 0.0 && amplitude_ma <= self.ceiling_ma) {
            return Err(StimError::OutOfRange {
                amplitude_ma,
                ceiling_ma: self.ceiling_ma,
            });
        }
        Ok(StimConfig {
            amplitude_ma: Some(amplitude_ma),
            ..self.clone()
        })
    }

    pub fn start_session(&mut self) -> Result<(), StimError> {
        self.timing.validate()?;
        self.started = true;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StimCycle {
    pub stim: (u64, u64),
    pub settle: (u64, u64),
    pub valid: (u64, u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimEpoch {
    pub start_ms: u64,
    pub end_ms: u64,
    pub amplitude_ma: f64,
    pub timing: StimTiming,
}

impl StimEpoch {
    pub fn span_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }

    /// Half-open `(start, end)` intervals of every complete or partial cycle.
    pub fn cycles(&self) -> Vec<StimCycle> {
        let t = self.timing;
        let clip = |a: u64, b: u64| (a.min(self.end_ms), b.min(self.end_ms));
        (self.start_ms..self.end_ms)
            .step_by(t.cycle_ms() as usize)
            .map(|c| StimCycle {
                stim: clip(c, c + t.stim_on_ms),
                settle: clip(c + t.stim_on_ms, c + t.stim_on_ms + t.settle_ms),
                valid: clip(c + t.stim_on_ms + t.settle_ms, c + t.cycle_ms()),
            })
            .collect()
    }

    pub fn stim_time_ms(&self) -> u64 {
        self.cycles().iter().map(|c| c.stim.1 - c.stim.0).sum()
    }

    pub fn contains(&self, t_ms: u64) -> bool {
        (self.start_ms..self.end_ms).contains(&t_ms)
    }
}

/// True iff `t_ms` falls in the silent slice after the settle period.
pub fn is_recording_valid(epoch: &StimEpoch, t_ms: u64) -> bool {
    if !epoch.contains(t_ms) {
        return false;
    }
    let t = epoch.timing;
    (t_ms - epoch.start_ms) % t.cycle_ms() >= t.stim_on_ms + t.settle_ms
}

/// Drops every window that overlaps an epoch. Layer 1 is suspended for the
/// whole epoch, including its silent slices.
pub fn mask_windows(windows: Vec<Window>, epochs: &[StimEpoch]) -> Vec<Window> {
    windows
        .into_iter()
        .filter(|w| !epochs.iter().any(|e| w.overlaps(e.start_ms, e.end_ms)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TavnsPolicy {
    pub sustain_ms: u64,
    pub epoch_ms: u64,
    pub cooldown_ms: u64,
}

impl Default for TavnsPolicy {
    fn default() -> Self {
        Self {
            sustain_ms: 30_000,
            epoch_ms: 60_000,
            cooldown_ms: 300_000,
        }
    }
}

/// Opens an epoch at the latest state when agitation has held across the
/// trailing run of states for at least `sustain_ms` and no epoch ended within
/// the cooldown.
pub fn tavns_trigger(
    history: &[SomaticState],
    config: &StimConfig,
    policy: &TavnsPolicy,
    last_epoch: Option<&StimEpoch>,
) -> Result<Option<StimEpoch>, StimError> {
    if !config.enabled {
        return Err(StimError::StimDisabled);
    }
    let amplitude_ma = config.amplitude_ma.ok_or(StimError::AmplitudeNotSet)?;
    let Some(now) = history.last().filter(|s| s.agitation) else {
        return Ok(None);
    };
    let run_start = history
        .iter()
        .rev()
        .take_while(|s| s.agitation)
        .last()
        .map_or(now.t_ms, |s| s.t_ms);
    if now.t_ms - run_start < policy.sustain_ms {
        return Ok(None);
    }
    if let Some(prev) = last_epoch {
        if now.t_ms < prev.end_ms || now.t_ms - prev.end_ms < policy.cooldown_ms {
            return Ok(None);
        }
    }
    Ok(Some(StimEpoch {
        start_ms: now.t_ms,
        end_ms: now.t_ms + policy.epoch_ms,
        amplitude_ma,
        timing: config.timing,
    }))
}

/// Session-scoped gate that feeds somatic states to the trigger.
#[derive(Debug, Clone)]
pub struct StimGate {
    config: StimConfig,
    policy: TavnsPolicy,
    history: Vec<SomaticState>,
    epochs: Vec<StimEpoch>,
}

impl StimGate {
    pub fn start(mut config: StimConfig, policy: TavnsPolicy) -> Result<Self, StimError> {
        if config.enabled && config.amplitude_ma.is_none() {
            return Err(StimError::AmplitudeNotSet);
        }
        config.start_session()?;
        Ok(Self {
            config,
            policy,
            history: Vec::new(),
            epochs: Vec::new(),
        })
    }

    pub fn config(&self) -> &StimConfig {
        &self.config
    }

    pub fn epochs(&self) -> &[StimEpoch] {
        &self.epochs
    }

    pub fn set_amplitude(&mut self, amplitude_ma: f64) -> Result<(), StimError> {
        self.config = self.config.set_amplitude(amplitude_ma)?;
        Ok(())
    }

    pub fn observe(&mut self, state: SomaticState) -> Result<Option<StimEpoch>, StimError> {
        self.history.push(state);
        if !self.config.enabled {
            return Ok(None);
        }
        let epoch = tavns_trigger(&self.history, &self.config, &self.policy, self.epochs.last())?;
        if let Some(e) = epoch {
            self.epochs.push(e);
        }
        Ok(epoch)
    }

    pub fn in_epoch(&self, t_ms: u64) -> bool {
        self.epochs.iter().any(|e| e.contains(t_ms))
    }
}
