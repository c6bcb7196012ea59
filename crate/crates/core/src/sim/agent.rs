//! Softmax bandit over strategies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{SimError, Strategy};

const N: usize = Strategy::ALL.len();

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyPolicy {
    weights: [f64; N],
    pub temperature: f64,
    pub learning_rate: f64,
    reward_mean: f64,
    updates: u64,
    rng: ChaCha8Rng,
}

impl StrategyPolicy {
    /// Uniform weights.
    pub fn new(temperature: f64, learning_rate: f64, seed: u64) -> Self {
        Self {
            weights: [0.0; N],
            temperature,
            learning_rate,
            reward_mean: 0.0,
            updates: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Always picks `strategy`. Useful as a frozen evaluation policy.
    pub fn pure(strategy: Strategy) -> Self {
        let mut p = Self::new(1.0, 0.0, 0);
        p.weights = [f64::NEG_INFINITY; N];
        p.weights[strategy.index()] = 0.0;
        p
    }

    pub fn weights(&self) -> &[f64; N] {
        &self.weights
    }

    pub fn reward_mean(&self) -> f64 {
        self.reward_mean
    }

    pub fn probabilities(&self) -> [f64; N] {
        let scaled = self.weights.map(|w| w / self.temperature);
        let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e = scaled.map(|v| (v - max).exp());
        let z: f64 = e.iter().sum();
        e.map(|v| v / z)
    }

    pub fn probability(&self, s: Strategy) -> f64 {
        self.probabilities()[s.index()]
    }

    /// Highest-probability strategy; ties go to the earlier one.
    pub fn mode(&self) -> Strategy {
        let p = self.probabilities();
        let mut best = 0;
        for i in 1..N {
            if p[i] > p[best] {
                best = i;
            }
        }
        Strategy::ALL[best]
    }

    /// Samples from the policy with its own generator.
    pub fn sample(&mut self) -> Strategy {
        let p = self.probabilities();
        Self::draw(&p, &mut self.rng)
    }

    pub(crate) fn draw<R: Rng + ?Sized>(p: &[f64; N], rng: &mut R) -> Strategy {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return Strategy::ALL[i];
            }
        }
        let last = p.iter().rposition(|&v| v > 0.0).unwrap_or(N - 1);
        Strategy::ALL[last]
    }
}

/// One bandit update. The running reward mean absorbs `reward` first, then
/// the chosen weight moves by `lr * (reward - mean)`.
pub fn agent_step(policy: &StrategyPolicy, episode_reward: f64, chosen: Strategy) -> Result<StrategyPolicy, SimError> {
    if !episode_reward.is_finite() {
        return Err(SimError::NonFiniteReward(episode_reward));
    }
    let mut next = policy.clone();
    next.updates += 1;
    next.reward_mean += (episode_reward - next.reward_mean) / next.updates as f64;
    next.weights[chosen.index()] += next.learning_rate * (episode_reward - next.reward_mean);
    Ok(next)
}
