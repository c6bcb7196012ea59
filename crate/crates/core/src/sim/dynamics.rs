//! Two-state hazard chains between a home state and wandering.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GroundTruth, MentalState, Strategy, StrategyPolicy};

/// Device-absent wandering onset rate, per second.
pub const BASE_ONSET_PER_S: f64 = 1.0 / 60.0;
/// Device-absent return-to-practice rate, per second.
pub const BASE_RECOVERY_PER_S: f64 = 1.0 / 30.0;
/// Mean wandering episode length during device-present practice, s.
pub const IN_SESSION_WANDER_S: f64 = 10.0;
pub const CHAIN_STEP_MS: u64 = 250;
pub const V_TARGET_EPISODE_MS: u64 = 600_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hazards {
    pub onset_per_s: f64,
    pub recovery_per_s: f64,
}

impl Hazards {
    fn step_probabilities(&self, step_ms: u64) -> (f64, f64) {
        let dt = step_ms as f64 / 1000.0;
        let p = |rate: f64| 1.0 - (-rate * dt).exp();
        (p(self.onset_per_s), p(self.recovery_per_s))
    }
}

/// Practice without a device. Only the strategy's transfer effect matters.
pub fn device_absent_hazards(strategy: Strategy) -> Hazards {
    let v = strategy.v_target_effect();
    Hazards {
        onset_per_s: BASE_ONSET_PER_S * v.exp(),
        recovery_per_s: BASE_RECOVERY_PER_S * (-v).exp(),
    }
}

/// Practice with the device on: the strategy's home state and the hazards
/// that give it its stationary occupancy.
pub fn in_session_hazards(strategy: Strategy) -> (MentalState, Hazards) {
    let pi = strategy.home_occupancy();
    let recovery = 1.0 / IN_SESSION_WANDER_S;
    (
        strategy.home_state(),
        Hazards {
            onset_per_s: recovery * (1.0 - pi) / pi,
            recovery_per_s: recovery,
        },
    )
}

/// Discrete-time chain starting in `home`, one transition draw per step.
pub fn simulate_chain<R: Rng + ?Sized>(home: MentalState, hazards: Hazards, duration_ms: u64, rng: &mut R) -> GroundTruth {
    let (p_on, p_off) = hazards.step_probabilities(CHAIN_STEP_MS);
    debug_assert!(p_on <= 1.0 && p_off <= 1.0);
    let mut changes = vec![(0, home)];
    let mut wandering = false;
    let mut t = CHAIN_STEP_MS;
    while t < duration_ms {
        let flip = rng.random::<f64>() < if wandering { p_off } else { p_on };
        if flip {
            wandering = !wandering;
            changes.push((t, if wandering { MentalState::Wandering } else { home }));
        }
        t += CHAIN_STEP_MS;
    }
    GroundTruth::from_changes(&changes, duration_ms)
}

/// Negative mean wandering fraction over device-absent episodes under the
/// frozen policy. Higher is better.
pub fn measure_v_target(policy: &StrategyPolicy, eval_episodes: usize, seed: u64) -> f64 {
    if eval_episodes == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probs = policy.probabilities();
    let mut total = 0.0;
    for _ in 0..eval_episodes {
        let s = StrategyPolicy::draw(&probs, &mut rng);
        let truth = simulate_chain(
            MentalState::Settled,
            device_absent_hazards(s),
            V_TARGET_EPISODE_MS,
            &mut rng,
        );
        total += truth.fraction_in(MentalState::Wandering);
    }
    -total / eval_episodes as f64
}
