//! Episode loop: sample a strategy, simulate practice, score it through the
//! device, update the policy.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    agent_step, device_feedback, generate_timeline, in_session_hazards, measure_v_target, simulate_chain,
    window_features, DeviceRuntime, DeviceSpec, MentalState, RewardRule, SimError, Strategy, StrategyPolicy,
};
use crate::classifier::WanderingModel;
use crate::cue::CueConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub temperature: f64,
    pub learning_rate: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            temperature: 0.2,
            learning_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClosedLoopConfig {
    pub episodes: usize,
    pub episode_ms: u64,
    pub agent: AgentConfig,
    /// Evaluate V_target of the current policy every this many episodes.
    pub v_eval_every: usize,
    pub v_eval_episodes: usize,
    pub cue: CueConfig,
}

impl Default for ClosedLoopConfig {
    fn default() -> Self {
        Self {
            episodes: 300,
            episode_ms: 30_000,
            agent: AgentConfig::default(),
            v_eval_every: 25,
            v_eval_episodes: 50,
            cue: CueConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub strategy: Strategy,
    pub r_proxy: f64,
    pub cues: usize,
    /// Ground-truth share of the episode spent wandering. Never shown to the agent.
    pub wandering_fraction: f64,
    pub v_target_eval: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub device: DeviceSpec,
    pub seed: u64,
    pub records: Vec<EpisodeRecord>,
    pub final_policy: StrategyPolicy,
}

impl Trajectory {
    pub const CSV_HEADER: &'static str = "episode,strategy,r_proxy,cues,v_target_eval";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let v = r.v_target_eval.map(|v| format!("{v:.6}")).unwrap_or_default();
            let _ = writeln!(s, "{},{},{:.6},{},{}", r.episode, r.strategy, r.r_proxy, r.cues, v);
        }
        s
    }

    /// `(episodes, total cues, mean r_proxy)` per strategy that was tried.
    pub fn by_strategy(&self) -> BTreeMap<Strategy, (usize, usize, f64)> {
        let mut m: BTreeMap<Strategy, (usize, usize, f64)> = BTreeMap::new();
        for r in &self.records {
            let e = m.entry(r.strategy).or_default();
            e.0 += 1;
            e.1 += r.cues;
            e.2 += r.r_proxy;
        }
        for e in m.values_mut() {
            e.2 /= e.0 as f64;
        }
        m
    }

    pub fn terminal_mode(&self) -> Strategy {
        self.final_policy.mode()
    }

    /// Ground-truth wandering share over the last `n` episodes.
    pub fn recent_wandering(&self, n: usize) -> f64 {
        let tail = &self.records[self.records.len().saturating_sub(n)..];
        tail.iter().map(|r| r.wandering_fraction).sum::<f64>() / tail.len().max(1) as f64
    }
}

struct EpisodeOutcome {
    reward: f64,
    cues: usize,
    wandering_fraction: f64,
}

fn run_episode(
    device: &mut DeviceRuntime<'_>,
    strategy: Strategy,
    episode_ms: u64,
    seed: u64,
) -> Result<EpisodeOutcome, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (home, hazards) = in_session_hazards(strategy);
    let truth = simulate_chain(home, hazards, episode_ms, &mut rng);
    let bundle = generate_timeline(&truth, strategy, rng.random())?;
    device.reset();
    let mut valence = 0.0;
    let mut n = 0usize;
    let mut cues = 0usize;
    for f in window_features(&bundle)? {
        let fb = device_feedback(device, &f)?;
        valence += fb.valence;
        n += 1;
        cues += usize::from(fb.cue.is_some());
    }
    let reward = match device.spec().reward_rule {
        RewardRule::NegativeCueOnly => -(cues as f64),
        _ => valence / n.max(1) as f64,
    };
    Ok(EpisodeOutcome {
        reward,
        cues,
        wandering_fraction: truth.fraction_in(MentalState::Wandering),
    })
}

pub fn run_closed_loop(
    device: &DeviceSpec,
    model: Option<&WanderingModel>,
    config: &ClosedLoopConfig,
    seed: u64,
) -> Result<Trajectory, SimError> {
    if config.episodes == 0 {
        return Err(SimError::NoEpisodes);
    }
    let mut runtime = DeviceRuntime::new(device.clone(), model, config.cue)?;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    master.set_stream(11);
    let mut policy = StrategyPolicy::new(config.agent.temperature, config.agent.learning_rate, seed);
    let mut records = Vec::with_capacity(config.episodes);
    for episode in 0..config.episodes {
        let strategy = policy.sample();
        let out = run_episode(&mut runtime, strategy, config.episode_ms, master.random())?;
        policy = agent_step(&policy, out.reward, strategy)?;
        let last = episode + 1 == config.episodes;
        let v_target_eval = (config.v_eval_every > 0 && ((episode + 1) % config.v_eval_every == 0 || last))
            .then(|| measure_v_target(&policy, config.v_eval_episodes, seed ^ episode as u64));
        records.push(EpisodeRecord {
            episode,
            strategy,
            r_proxy: out.reward,
            cues: out.cues,
            wandering_fraction: out.wandering_fraction,
            v_target_eval,
        });
    }
    Ok(Trajectory {
        device: device.clone(),
        seed,
        records,
        final_policy: policy,
    })
}

/// Mean device reward of a frozen policy over `episodes` device-present episodes.
pub fn evaluate_r_proxy(
    device: &DeviceSpec,
    model: Option<&WanderingModel>,
    policy: &StrategyPolicy,
    episodes: usize,
    config: &ClosedLoopConfig,
    seed: u64,
) -> Result<f64, SimError> {
    if episodes == 0 {
        return Err(SimError::NoEpisodes);
    }
    let mut runtime = DeviceRuntime::new(device.clone(), model, config.cue)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(13);
    let probs = policy.probabilities();
    let mut total = 0.0;
    for _ in 0..episodes {
        let s = StrategyPolicy::draw(&probs, &mut rng);
        total += run_episode(&mut runtime, s, config.episode_ms, rng.random())?.reward;
    }
    Ok(total / episodes as f64)
}
