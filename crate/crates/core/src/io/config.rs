use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::cue::CueConfig;
use crate::demo::DemoConfig;
use crate::protocol::{plan_study, StudyConfig};
use crate::sim::{AgentConfig, ClosedLoopConfig};
use crate::stim::{StimConfig, StimTiming, TavnsPolicy, MAX_AMPLITUDE_MA};

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "CUELAB_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StimSettings {
    pub enabled: bool,
    pub amplitude_ma: Option<f64>,
    pub ceiling_ma: f64,
    pub timing: StimTiming,
    pub tavns: TavnsPolicy,
}

impl Default for StimSettings {
    fn default() -> Self {
        Self {
            enabled: false,
            amplitude_ma: None,
            ceiling_ma: MAX_AMPLITUDE_MA,
            timing: StimTiming::default(),
            tavns: TavnsPolicy::default(),
        }
    }
}

impl StimSettings {
    /// A not-yet-started stim config with the amplitude fixed.
    pub fn to_stim_config(&self) -> Result<StimConfig, IoError> {
        let mut cfg = if self.enabled { StimConfig::enabled() } else { StimConfig::default() };
        cfg.timing = self.timing;
        cfg = cfg.with_ceiling(self.ceiling_ma);
        if let Some(a) = self.amplitude_ma {
            cfg = cfg.set_amplitude(a).map_err(|e| IoError::Config(format!("stim: {e}")))?;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulatorSettings {
    pub episodes: usize,
    pub episode_ms: u64,
    pub agent: AgentConfig,
    pub v_eval_every: usize,
    pub v_eval_episodes: usize,
    pub r_eval_episodes: usize,
    pub v_target_eval_episodes: usize,
    pub proxy_duration_ms: u64,
    pub calibration_gate: f64,
    pub exploratory: bool,
}

impl Default for SimulatorSettings {
    fn default() -> Self {
        let cl = ClosedLoopConfig::default();
        let demo = DemoConfig::default();
        Self {
            episodes: cl.episodes,
            episode_ms: cl.episode_ms,
            agent: cl.agent,
            v_eval_every: cl.v_eval_every,
            v_eval_episodes: cl.v_eval_episodes,
            r_eval_episodes: demo.r_eval_episodes,
            v_target_eval_episodes: demo.v_eval_episodes,
            proxy_duration_ms: demo.proxy_duration_ms,
            calibration_gate: demo.calibration_gate,
            exploratory: demo.exploratory,
        }
    }
}

/// Everything a run can be configured with. Missing keys take their
/// defaults; unknown keys are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// `study.seed` is replaced by the run seed.
    pub study: StudyConfig,
    pub cue: CueConfig,
    pub stim: StimSettings,
    pub simulator: SimulatorSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            study: StudyConfig::default(),
            cue: CueConfig::default(),
            stim: StimSettings::default(),
            simulator: SimulatorSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, IoError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| IoError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `CUELAB_SEED` when it is set.
    pub fn with_env_seed(mut self) -> Result<Self, IoError> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| IoError::Config(format!("{SEED_ENV}='{v}' is not an unsigned integer")))?;
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), IoError> {
        let cfg = |m: String| IoError::Config(m);
        self.cue.validate().map_err(|e| cfg(e.to_string()))?;
        self.stim.timing.validate().map_err(|e| cfg(e.to_string()))?;
        if self.stim.enabled && self.stim.amplitude_ma.is_none() {
            return Err(cfg("stim.enabled needs stim.amplitude_ma".into()));
        }
        self.stim.to_stim_config()?;
        plan_study(&self.study_config()).map_err(|e| cfg(e.to_string()))?;
        let s = &self.simulator;
        if s.episodes == 0 || s.episode_ms < 1000 {
            return Err(cfg("simulator needs at least one episode of at least 1000 ms".into()));
        }
        if !(s.agent.temperature > 0.0) || !(s.agent.learning_rate >= 0.0) {
            return Err(cfg("agent temperature must be positive and learning_rate non-negative".into()));
        }
        Ok(())
    }

    pub fn study_config(&self) -> StudyConfig {
        StudyConfig {
            seed: self.seed,
            ..self.study
        }
    }

    pub fn closed_loop_config(&self) -> ClosedLoopConfig {
        let s = &self.simulator;
        ClosedLoopConfig {
            episodes: s.episodes,
            episode_ms: s.episode_ms,
            agent: s.agent,
            v_eval_every: s.v_eval_every,
            v_eval_episodes: s.v_eval_episodes,
            cue: self.cue,
        }
    }

    pub fn demo_config(&self) -> DemoConfig {
        let s = &self.simulator;
        DemoConfig {
            closed_loop: self.closed_loop_config(),
            r_eval_episodes: s.r_eval_episodes,
            v_eval_episodes: s.v_target_eval_episodes,
            proxy_duration_ms: s.proxy_duration_ms,
            study: self.study_config(),
            calibration_gate: s.calibration_gate,
            exploratory: s.exploratory,
        }
    }
}
