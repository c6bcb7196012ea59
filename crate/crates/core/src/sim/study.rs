//! Simulated study sessions: probe answers, Phase-A calibration and the
//! device-absent phases compared by the transfer test.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    device_absent_hazards, generate_timeline, simulate_chain, window_features, GroundTruth, Hazards, MentalState,
    SignalBundle, SimError, Strategy, StrategyPolicy, WindowFeatures, BASE_ONSET_PER_S, BASE_RECOVERY_PER_S,
};
use crate::classifier::{label_session, train, ProbeLabel, ProbeResponse, TrainingSet, WanderingModel, DEFAULT_LABEL_WINDOW_MS};
use crate::protocol::{
    plan_study, schedule_probes, sim_intervals, CorrectionInterval, DurationBucket, Phase, ProbeAnswer, SessionPlan,
    StudyConfig,
};

/// Chance that a probe is answered "unclear".
pub const PROBE_UNCLEAR_RATE: f64 = 0.1;

/// The `i`-th 64-bit draw of stream `tag` under `seed`.
pub(crate) fn sub_seed(seed: u64, tag: u64, i: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng.set_word_pos(2 * i as u128);
    rng.next_u64()
}

/// Seed of the `index`-th session of a recorded study.
pub fn session_seed(seed: u64, index: u64) -> u64 {
    sub_seed(seed, 31, index)
}

/// How the simulated user practises in one session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Practice {
    /// Emission modifiers in force.
    pub strategy: Strategy,
    pub home: MentalState,
    pub hazards: Hazards,
}

impl Practice {
    /// A user with no trained strategy: plain emissions, baseline hazards.
    pub fn naive() -> Self {
        Self {
            strategy: Strategy::GenuineRegulation,
            home: MentalState::Settled,
            hazards: Hazards {
                onset_per_s: BASE_ONSET_PER_S,
                recovery_per_s: BASE_RECOVERY_PER_S,
            },
        }
    }

    /// Practising `strategy` without a device.
    pub fn device_absent(strategy: Strategy) -> Self {
        Self {
            strategy,
            home: MentalState::Settled,
            hazards: device_absent_hazards(strategy),
        }
    }
}

/// Truthful self-report, with a fixed share of "unclear" answers.
pub fn answer_probe<R: Rng + ?Sized>(truth: &GroundTruth, t_ms: u64, rng: &mut R) -> ProbeAnswer {
    if rng.random::<f64>() < PROBE_UNCLEAR_RATE {
        return ProbeAnswer {
            t_ms,
            response: ProbeResponse::Unclear,
            bucket: None,
        };
    }
    match truth.wandering_run_ms(t_ms) {
        Some(run) => ProbeAnswer {
            t_ms,
            response: ProbeResponse::Wandering,
            bucket: Some(DurationBucket::from_duration_ms(run)),
        },
        None => ProbeAnswer {
            t_ms,
            response: ProbeResponse::Settled,
            bucket: None,
        },
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedSession {
    pub plan: SessionPlan,
    pub practice: Practice,
    pub truth: GroundTruth,
    /// Empty when sensing is disabled.
    pub features: Vec<WindowFeatures>,
    pub probes: Vec<ProbeAnswer>,
}

impl SimulatedSession {
    pub fn probe_labels(&self) -> Vec<ProbeLabel> {
        self.probes
            .iter()
            .map(|p| ProbeLabel {
                t_ms: p.t_ms,
                response: p.response,
            })
            .collect()
    }

    pub fn training_rows(&self) -> TrainingSet {
        let fast: Vec<_> = self.features.iter().map(|f| f.fast).collect();
        label_session(&self.plan.session_id, &self.probe_labels(), &fast, DEFAULT_LABEL_WINDOW_MS)
    }
}

pub fn simulate_session(plan: &SessionPlan, practice: Practice, duration_ms: u64, seed: u64) -> Result<SimulatedSession, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = simulate_chain(practice.home, practice.hazards, duration_ms, &mut rng);
    let signal_seed = rng.random();
    let features = if plan.sensing_enabled {
        window_features(&generate_timeline(&truth, practice.strategy, signal_seed)?)?
    } else {
        Vec::new()
    };
    let probes = schedule_probes(duration_ms, rng.random())
        .unwrap_or_default()
        .into_iter()
        .map(|t| answer_probe(&truth, t, &mut rng))
        .collect();
    Ok(SimulatedSession {
        plan: plan.clone(),
        practice,
        truth,
        features,
        probes,
    })
}

/// The raw signals behind `simulate_session` with the same arguments, or
/// `None` when sensing is disabled.
pub fn session_signals(
    plan: &SessionPlan,
    practice: Practice,
    duration_ms: u64,
    seed: u64,
) -> Result<Option<SignalBundle>, SimError> {
    if !plan.sensing_enabled {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = simulate_chain(practice.home, practice.hazards, duration_ms, &mut rng);
    let signal_seed = rng.random();
    Ok(Some(generate_timeline(&truth, practice.strategy, signal_seed)?))
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub sessions: Vec<SimulatedSession>,
    pub training: TrainingSet,
    pub model: WanderingModel,
    pub cv_accuracy: f64,
}

/// Simulates the Phase-A sessions of `study` for a naive user and trains a
/// wandering model on their probe-labelled windows, class-balanced by probe.
pub fn calibrate(study: &StudyConfig, seed: u64) -> Result<Calibration, SimError> {
    let plan = plan_study(study)?;
    let phase_a: Vec<SessionPlan> = plan.sessions_in(Phase::A).cloned().collect();
    let sessions = phase_a
        .par_iter()
        .enumerate()
        .map(|(i, p)| simulate_session(p, Practice::naive(), study.session_ms, sub_seed(seed, 21, i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut pooled = TrainingSet::default();
    for s in &sessions {
        pooled.extend(s.training_rows());
    }
    let training = pooled.balanced(seed);
    let model = train(&training, seed)?;
    let cv_accuracy = model.cv_accuracy.unwrap_or(0.0);
    Ok(Calibration {
        sessions,
        training,
        model,
        cv_accuracy,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOutcome {
    pub intervals: Vec<CorrectionInterval>,
    /// Mean ground-truth wandering share across the sessions.
    pub wandering_fraction: f64,
}

/// Ground-truth correction intervals for device-absent sessions. `None`
/// practises naively; a policy draws one strategy per session.
pub fn device_absent_intervals(
    sessions: &[SessionPlan],
    policy: Option<&StrategyPolicy>,
    duration_ms: u64,
    seed: u64,
) -> PhaseOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(23);
    let mut intervals = Vec::new();
    let mut wandering = 0.0;
    for s in sessions {
        let practice = match policy {
            Some(p) => Practice::device_absent(StrategyPolicy::draw(&p.probabilities(), &mut rng)),
            None => Practice::naive(),
        };
        let truth = simulate_chain(practice.home, practice.hazards, duration_ms, &mut rng);
        wandering += truth.fraction_in(MentalState::Wandering);
        intervals.extend(sim_intervals(&s.session_id, &truth.wandering_transitions()));
    }
    PhaseOutcome {
        intervals,
        wandering_fraction: wandering / sessions.len().max(1) as f64,
    }
}
