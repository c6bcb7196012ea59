//! Phase A/B/C study plan, probe scheduling, correction intervals and the
//! transfer test.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::classifier::ProbeResponse;
use crate::cue::CueConfig;
use crate::signal::median;

pub const PROBE_GAP_MIN_MS: u64 = 120_000;
pub const PROBE_GAP_MAX_MS: u64 = 300_000;
pub const CORRECTION_SUSTAIN_MS: u64 = 2_000;
pub const ALPHA: f64 = 0.05;
pub const EXACT_LIMIT: usize = 400;
pub const HYPOTHESIS: &str =
    "H1: per-session median correction interval in Phase C is stochastically smaller than in Phase A \
     (one-sided Mann-Whitney U, alpha = 0.05)";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("invalid study config: {0}")]
    InvalidConfig(String),
    #[error("session of {duration_ms} ms is too short for a probe")]
    SessionTooShort { duration_ms: u64 },
    #[error("EEG interval estimation needs a trained model")]
    NoModel,
    #[error("probe interval estimation needs probe responses")]
    NoProbes,
    #[error("phase {phase} has {got} usable sessions, need at least 3")]
    TooFewSessions { phase: Phase, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
    C,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::A => "A",
            Phase::B => "B",
            Phase::C => "C",
        })
    }
}

impl std::str::FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(Phase::A),
            "B" | "b" => Ok(Phase::B),
            "C" | "c" => Ok(Phase::C),
            other => Err(format!("unknown phase '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub weeks_a: u32,
    pub weeks_b: u32,
    pub weeks_c: u32,
    pub sessions_per_week: u32,
    pub session_ms: u64,
    pub seed: u64,
    /// Sham arm: would-be cues are logged but never rendered.
    pub sham: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            weeks_a: 2,
            weeks_b: 6,
            weeks_c: 2,
            sessions_per_week: 5,
            session_ms: 20 * 60_000,
            seed: 0,
            sham: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub session_id: String,
    pub week: u32,
    pub phase: Phase,
    pub cueing_enabled: bool,
    pub sensing_enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub config: StudyConfig,
    pub sessions: Vec<SessionPlan>,
}

impl StudyPlan {
    pub fn weeks(&self) -> u32 {
        self.config.weeks_a + self.config.weeks_b + self.config.weeks_c
    }

    pub fn phase_of_week(&self, week: u32) -> Option<Phase> {
        let c = &self.config;
        match week {
            w if w >= 1 && w <= c.weeks_a => Some(Phase::A),
            w if w > c.weeks_a && w <= c.weeks_a + c.weeks_b => Some(Phase::B),
            w if w > c.weeks_a + c.weeks_b && w <= self.weeks() => Some(Phase::C),
            _ => None,
        }
    }

    pub fn sessions_in(&self, phase: Phase) -> impl Iterator<Item = &SessionPlan> {
        self.sessions.iter().filter(move |s| s.phase == phase)
    }

    /// Checks the plan-level invariants.
    pub fn check(&self) -> Result<(), ProtocolError> {
        let bad = |m: String| Err(ProtocolError::InvalidConfig(m));
        for s in &self.sessions {
            match s.phase {
                Phase::A if s.cueing_enabled => return bad(format!("{} cues in Phase A", s.session_id)),
                Phase::C if s.sensing_enabled => return bad(format!("{} senses in Phase C", s.session_id)),
                _ => {}
            }
        }
        for week in 1..=self.weeks() {
            if self.phase_of_week(week) == Some(Phase::B)
                && !self
                    .sessions
                    .iter()
                    .any(|s| s.week == week && !s.cueing_enabled && s.sensing_enabled)
            {
                return bad(format!("week {week} has no cue-free sensing session"));
            }
        }
        Ok(())
    }
}

pub fn plan_study(config: &StudyConfig) -> Result<StudyPlan, ProtocolError> {
    if config.sessions_per_week < 3 {
        return Err(ProtocolError::InvalidConfig(format!(
            "sessions_per_week must be at least 3, got {}",
            config.sessions_per_week
        )));
    }
    if config.weeks_a == 0 || config.weeks_b == 0 || config.weeks_c == 0 {
        return Err(ProtocolError::InvalidConfig("every phase needs at least one week".into()));
    }
    if config.session_ms <= PROBE_GAP_MIN_MS {
        return Err(ProtocolError::InvalidConfig(format!(
            "session_ms {} leaves no room for a probe",
            config.session_ms
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sessions = Vec::new();
    let weeks = config.weeks_a + config.weeks_b + config.weeks_c;
    for week in 1..=weeks {
        let phase = if week <= config.weeks_a {
            Phase::A
        } else if week <= config.weeks_a + config.weeks_b {
            Phase::B
        } else {
            Phase::C
        };
        let cue_free = rng.random_range(0..config.sessions_per_week);
        for s in 0..config.sessions_per_week {
            sessions.push(SessionPlan {
                session_id: format!("w{week:02}-s{}", s + 1),
                week,
                phase,
                cueing_enabled: phase == Phase::B && s != cue_free,
                sensing_enabled: phase != Phase::C,
            });
        }
    }
    let plan = StudyPlan {
        config: *config,
        sessions,
    };
    plan.check()?;
    Ok(plan)
}

/// Probe times strictly inside `(0, duration_ms)`, gaps uniform in [120 s, 300 s).
pub fn schedule_probes(duration_ms: u64, seed: u64) -> Result<Vec<u64>, ProtocolError> {
    if duration_ms <= PROBE_GAP_MIN_MS {
        return Err(ProtocolError::SessionTooShort { duration_ms });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut t = 0;
    loop {
        t += rng.random_range(PROBE_GAP_MIN_MS..PROBE_GAP_MAX_MS);
        if t >= duration_ms {
            break;
        }
        out.push(t);
    }
    Ok(out)
}

/// Self-reported wandering duration, asked alongside a wandering response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DurationBucket {
    #[serde(rename = "<10s")]
    Under10s,
    #[serde(rename = "10-60s")]
    From10To60s,
    #[serde(rename = ">60s")]
    Over60s,
}

impl DurationBucket {
    pub fn midpoint_ms(self) -> u64 {
        match self {
            DurationBucket::Under10s => 5_000,
            DurationBucket::From10To60s => 35_000,
            DurationBucket::Over60s => 90_000,
        }
    }

    pub fn from_duration_ms(d: u64) -> Self {
        match d {
            d if d < 10_000 => DurationBucket::Under10s,
            d if d <= 60_000 => DurationBucket::From10To60s,
            _ => DurationBucket::Over60s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeAnswer {
    pub t_ms: u64,
    pub response: ProbeResponse,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bucket: Option<DurationBucket>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    EegEstimated,
    ProbeEstimated,
    SimGroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionInterval {
    pub session_id: String,
    pub onset_t_ms: u64,
    pub correction_t_ms: u64,
    pub duration_ms: u64,
    pub method: IntervalMethod,
}

impl CorrectionInterval {
    fn new(session_id: &str, onset: u64, correction: u64, method: IntervalMethod) -> Option<Self> {
        (correction > onset).then(|| Self {
            session_id: session_id.to_string(),
            onset_t_ms: onset,
            correction_t_ms: correction,
            duration_ms: correction - onset,
            method,
        })
    }
}

/// Onset at the first window of a confirmed run at or above `theta_on`;
/// correction at the start of a run below `theta_off` lasting 2 s, or at the
/// next "settled" probe, whichever comes first. Episodes still open when the
/// trace ends are dropped.
pub fn eeg_intervals(
    session_id: &str,
    probabilities: &[(u64, f64)],
    probes: &[ProbeAnswer],
    cue: &CueConfig,
) -> Vec<CorrectionInterval> {
    let settled: Vec<u64> = probes
        .iter()
        .filter(|p| p.response == ProbeResponse::Settled)
        .map(|p| p.t_ms)
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut armed = true;
    while i < probabilities.len() {
        let (t, p) = probabilities[i];
        if p < cue.theta_off {
            armed = true;
        }
        if !armed || p < cue.theta_on {
            i += 1;
            continue;
        }
        let run = probabilities[i..]
            .iter()
            .take_while(|(_, q)| *q >= cue.theta_on)
            .count();
        if run < cue.min_consecutive_windows {
            i += run;
            continue;
        }
        let onset = t;
        let mut below_since: Option<u64> = None;
        let mut eeg_correction = None;
        let mut j = i + run;
        while j < probabilities.len() {
            let (tj, q) = probabilities[j];
            if q < cue.theta_off {
                let start = *below_since.get_or_insert(tj);
                if tj - start >= CORRECTION_SUSTAIN_MS {
                    eeg_correction = Some(start);
                    break;
                }
            } else {
                below_since = None;
            }
            j += 1;
        }
        let probe_correction = settled.iter().copied().find(|&s| s > onset);
        let correction = match (eeg_correction, probe_correction) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        let Some(c) = correction else { break };
        if probabilities.last().is_some_and(|&(t_end, _)| c > t_end) {
            break;
        }
        out.extend(CorrectionInterval::new(session_id, onset, c, IntervalMethod::EegEstimated));
        armed = false;
        i = probabilities.partition_point(|&(tk, _)| tk <= c);
    }
    out
}

/// One interval per "wandering" probe: the bucket midpoint, capped by the
/// time since the previous probe (or session start).
pub fn probe_intervals(session_id: &str, probes: &[ProbeAnswer]) -> Result<Vec<CorrectionInterval>, ProtocolError> {
    if probes.is_empty() {
        return Err(ProtocolError::NoProbes);
    }
    let mut prev = 0;
    let mut out = Vec::new();
    for p in probes {
        if p.response == ProbeResponse::Wandering {
            let bucket = p.bucket.unwrap_or(DurationBucket::From10To60s);
            let d = bucket.midpoint_ms().min(p.t_ms - prev);
            out.extend(CorrectionInterval::new(
                session_id,
                p.t_ms - d,
                p.t_ms,
                IntervalMethod::ProbeEstimated,
            ));
        }
        prev = p.t_ms;
    }
    Ok(out)
}

/// Intervals from ground-truth `(t_ms, wandering)` transitions.
pub fn sim_intervals(session_id: &str, transitions: &[(u64, bool)]) -> Vec<CorrectionInterval> {
    let mut out = Vec::new();
    let mut onset = None;
    for &(t, wandering) in transitions {
        match (wandering, onset) {
            (true, None) => onset = Some(t),
            (false, Some(o)) => {
                out.extend(CorrectionInterval::new(session_id, o, t, IntervalMethod::SimGroundTruth));
                onset = None;
            }
            _ => {}
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U of the C sample: pairs with c > a, ties counted one half.
    pub u: f64,
    /// P(U <= u) under the null.
    pub p_one_sided: f64,
    pub exact: bool,
}

fn midranks(pooled: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    idx.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && pooled[idx[j + 1]] == pooled[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Number of `k`-subsets of `items` by sum, as `counts[sum]`.
fn subset_sum_counts(items: &[usize], k: usize) -> Vec<f64> {
    let total: usize = items.iter().sum();
    let mut dp = vec![vec![0.0f64; total + 1]; k + 1];
    dp[0][0] = 1.0;
    for (n, &v) in items.iter().enumerate() {
        for size in (1..=k.min(n + 1)).rev() {
            let (lo, hi) = dp.split_at_mut(size);
            let (from, to) = (&lo[size - 1], &mut hi[0]);
            for s in (v..=total).rev() {
                to[s] += from[s - v];
            }
        }
    }
    dp.swap_remove(k)
}

pub fn mann_whitney_u(sample_a: &[f64], sample_c: &[f64]) -> Result<MannWhitney, ProtocolError> {
    if sample_a.len() < 3 {
        return Err(ProtocolError::TooFewSessions {
            phase: Phase::A,
            got: sample_a.len(),
        });
    }
    if sample_c.len() < 3 {
        return Err(ProtocolError::TooFewSessions {
            phase: Phase::C,
            got: sample_c.len(),
        });
    }
    let (na, nc) = (sample_a.len(), sample_c.len());
    let pooled: Vec<f64> = sample_c.iter().chain(sample_a).copied().collect();
    let ranks = midranks(&pooled);
    let r_c: f64 = ranks[..nc].iter().sum();
    let u = r_c - (nc * (nc + 1)) as f64 / 2.0;

    if na * nc <= EXACT_LIMIT {
        // doubled midranks are integers
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let target = (2.0 * r_c).round() as usize;
        let (k, count_le): (usize, Box<dyn Fn(&[f64]) -> f64>) = if nc <= na {
            (nc, Box::new(move |c: &[f64]| c[..=target].iter().sum()))
        } else {
            // R_C <= r  <=>  R_A >= total - r
            (na, Box::new(move |c: &[f64]| c[total - target..].iter().sum()))
        };
        let counts = subset_sum_counts(&doubled, k);
        let all: f64 = counts.iter().sum();
        return Ok(MannWhitney {
            u,
            p_one_sided: (count_le(&counts) / all).min(1.0),
            exact: true,
        });
    }

    let n = (na + nc) as f64;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let mu = (na * nc) as f64 / 2.0;
    let var = (na * nc) as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let p = if var <= 0.0 {
        if u <= mu {
            1.0
        } else {
            0.0
        }
    } else {
        let z = (u + 0.5 - mu) / var.sqrt();
        Normal::new(0.0, 1.0).expect("standard normal").cdf(z)
    };
    Ok(MannWhitney {
        u,
        p_one_sided: p.clamp(0.0, 1.0),
        exact: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferVerdict {
    /// Ascending per-session medians, ms.
    pub phase_a_medians: Vec<f64>,
    pub phase_c_medians: Vec<f64>,
    pub u_statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub pass: bool,
    pub hypothesis: String,
    pub label: String,
}

fn session_medians(intervals: &[CorrectionInterval]) -> Vec<f64> {
    let mut by_session: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for iv in intervals {
        by_session
            .entry(iv.session_id.as_str())
            .or_default()
            .push(iv.duration_ms as f64);
    }
    let mut m: Vec<f64> = by_session.values().filter_map(|v| median(v)).collect();
    m.sort_by(f64::total_cmp);
    m
}

/// Phase C versus Phase A on per-session medians.
pub fn transfer_test(
    intervals_a: &[CorrectionInterval],
    intervals_c: &[CorrectionInterval],
) -> Result<TransferVerdict, ProtocolError> {
    let a = session_medians(intervals_a);
    let c = session_medians(intervals_c);
    let mw = mann_whitney_u(&a, &c)?;
    let pass = mw.p_one_sided < ALPHA;
    Ok(TransferVerdict {
        phase_a_medians: a,
        phase_c_medians: c,
        u_statistic: mw.u,
        p_value: mw.p_one_sided,
        alpha: ALPHA,
        pass,
        hypothesis: HYPOTHESIS.to_string(),
        label: if pass {
            "PASS: transfer".to_string()
        } else {
            "FAIL: dependency or no effect".to_string()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_plan_has_two_six_two_week_phases() {
        let plan = plan_study(&StudyConfig::default()).unwrap();
        assert_eq!(plan.weeks(), 10);
        let phases: Vec<_> = (1..=10).map(|w| plan.phase_of_week(w).unwrap()).collect();
        assert_eq!(phases[..2], [Phase::A; 2]);
        assert_eq!(phases[2..8], [Phase::B; 6]);
        assert_eq!(phases[8..], [Phase::C; 2]);
        assert_eq!(plan.sessions.len(), 50);
    }

    #[test]
    fn too_few_sessions_per_week() {
        let cfg = StudyConfig {
            sessions_per_week: 0,
            ..StudyConfig::default()
        };
        assert!(matches!(plan_study(&cfg), Err(ProtocolError::InvalidConfig(_))));
    }

    #[test]
    fn probe_gaps_in_range() {
        let p = schedule_probes(20 * 60_000, 3).unwrap();
        assert!((4..=10).contains(&p.len()));
        assert!(p.windows(2).all(|w| (PROBE_GAP_MIN_MS..PROBE_GAP_MAX_MS).contains(&(w[1] - w[0]))));
        assert_eq!(schedule_probes(60_000, 3), Err(ProtocolError::SessionTooShort { duration_ms: 60_000 }));
    }

    #[test]
    fn bucket_mapping() {
        let probes = [ProbeAnswer {
            t_ms: 200_000,
            response: ProbeResponse::Wandering,
            bucket: Some(DurationBucket::From10To60s),
        }];
        let iv = probe_intervals("c1", &probes).unwrap();
        assert_eq!(iv[0].duration_ms, 35_000);
        assert_eq!(probe_intervals("c1", &[]), Err(ProtocolError::NoProbes));
    }

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }
}
