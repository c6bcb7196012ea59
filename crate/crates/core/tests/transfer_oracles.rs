//! Exact-enumeration oracles for the transfer test and rule traces for the
//! correction-interval estimators.

use cuelab::classifier::ProbeResponse;
use cuelab::cue::CueConfig;
use cuelab::protocol::{
    eeg_intervals, mann_whitney_u, plan_study, probe_intervals, schedule_probes, sim_intervals, transfer_test,
    CorrectionInterval, IntervalMethod, Phase, ProbeAnswer, ProtocolError, StudyConfig,
};
use proptest::prelude::*;

/// P(U_C <= u_obs) by listing every assignment of pooled values to the C group.
fn brute_force_p(a: &[f64], c: &[f64]) -> (f64, f64) {
    let u_of = |cs: &[f64], as_: &[f64]| -> f64 {
        cs.iter()
            .map(|&x| {
                as_.iter()
                    .map(|&y| if x > y { 1.0 } else if x == y { 0.5 } else { 0.0 })
                    .sum::<f64>()
            })
            .sum()
    };
    let u_obs = u_of(c, a);
    let pooled: Vec<f64> = a.iter().chain(c).copied().collect();
    let n = pooled.len();
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != c.len() {
            continue;
        }
        let (cs, as_): (Vec<_>, Vec<_>) = (0..n).partition(|&i| mask & (1 << i) != 0);
        let cs: Vec<f64> = cs.iter().map(|&i| pooled[i]).collect();
        let as_: Vec<f64> = as_.iter().map(|&i| pooled[i]).collect();
        total += 1;
        if u_of(&cs, &as_) <= u_obs + 1e-9 {
            hits += 1;
        }
    }
    (u_obs, hits as f64 / total as f64)
}

#[test]
fn fully_separated_samples_hit_one_over_126() {
    let a = [12.0, 11.0, 13.0, 12.0, 14.0];
    let c = [6.0, 7.0, 5.0, 6.0];
    let (u_oracle, p_oracle) = brute_force_p(&a, &c);
    assert_eq!(p_oracle, 1.0 / 126.0);
    let mw = mann_whitney_u(&a, &c).unwrap();
    assert_eq!(mw.u, u_oracle);
    assert_eq!(mw.u, 0.0);
    assert!(mw.exact);
    assert!((mw.p_one_sided - 1.0 / 126.0).abs() < 1e-12);
    assert!(mw.p_one_sided < 0.05);
}

#[test]
fn identical_samples_are_not_significant() {
    let a = [12.0, 11.0, 13.0, 12.0, 14.0];
    let mw = mann_whitney_u(&a, &a).unwrap();
    assert!(mw.p_one_sided >= 0.5 && mw.p_one_sided < 0.7, "{}", mw.p_one_sided);
    let (_, oracle) = brute_force_p(&a, &a);
    assert!((mw.p_one_sided - oracle).abs() < 1e-12);
}

#[test]
fn two_sessions_are_too_few() {
    assert_eq!(
        mann_whitney_u(&[1.0, 2.0], &[1.0, 2.0, 3.0]),
        Err(ProtocolError::TooFewSessions { phase: Phase::A, got: 2 })
    );
}

#[test]
fn normal_approximation_tracks_exact_tail() {
    // 25 x 20 = 500 pairs uses the approximation
    let a: Vec<f64> = (0..25).map(|i| 30.0 + (i % 7) as f64).collect();
    let c: Vec<f64> = (0..20).map(|i| 28.0 + (i % 6) as f64).collect();
    let approx = mann_whitney_u(&a, &c).unwrap();
    assert!(!approx.exact);
    let exact = mann_whitney_u(&a[..20], &c).unwrap();
    assert!(exact.exact);
    assert!(approx.p_one_sided < 0.001 && exact.p_one_sided < 0.001);
}

proptest! {
    #[test]
    fn exact_p_matches_enumeration(
        a in prop::collection::vec(0u8..6, 3..7),
        c in prop::collection::vec(0u8..6, 3..7),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let c: Vec<f64> = c.into_iter().map(f64::from).collect();
        let (u, p) = brute_force_p(&a, &c);
        let mw = mann_whitney_u(&a, &c).unwrap();
        prop_assert_eq!(mw.u, u);
        prop_assert!((mw.p_one_sided - p).abs() < 1e-9, "{} vs {}", mw.p_one_sided, p);
    }

    #[test]
    fn verdict_ignores_session_order(
        a in prop::collection::vec(1_000u64..90_000, 3..9),
        c in prop::collection::vec(1_000u64..90_000, 3..9),
        rot in 0usize..9,
    ) {
        let ivs = |d: &[u64], tag: &str| -> Vec<CorrectionInterval> {
            d.iter().enumerate().map(|(i, &ms)| CorrectionInterval {
                session_id: format!("{tag}{i}"),
                onset_t_ms: 0,
                correction_t_ms: ms,
                duration_ms: ms,
                method: IntervalMethod::SimGroundTruth,
            }).collect()
        };
        let (ia, ic) = (ivs(&a, "a"), ivs(&c, "c"));
        let mut ra = ia.clone();
        ra.rotate_left(rot % ia.len());
        let mut rc = ic.clone();
        rc.reverse();
        prop_assert_eq!(transfer_test(&ia, &ic).unwrap(), transfer_test(&ra, &rc).unwrap());
    }

    #[test]
    fn plans_hold_invariants(seed in any::<u64>(), per_week in 3u32..8) {
        let plan = plan_study(&StudyConfig { seed, sessions_per_week: per_week, ..StudyConfig::default() }).unwrap();
        prop_assert!(plan.check().is_ok());
        prop_assert!(plan.sessions_in(Phase::A).all(|s| !s.cueing_enabled));
        prop_assert!(plan.sessions_in(Phase::C).all(|s| !s.sensing_enabled));
    }

    #[test]
    fn twenty_minute_sessions_get_four_to_ten_probes(seed in any::<u64>()) {
        let p = schedule_probes(20 * 60_000, seed).unwrap();
        prop_assert!((4..=10).contains(&p.len()));
        prop_assert!(p.iter().all(|&t| t > 0 && t < 20 * 60_000));
        prop_assert_eq!(p, schedule_probes(20 * 60_000, seed).unwrap());
    }
}

#[test]
fn plans_are_seed_deterministic() {
    let cfg = StudyConfig {
        seed: 17,
        ..StudyConfig::default()
    };
    assert_eq!(plan_study(&cfg).unwrap(), plan_study(&cfg).unwrap());
}

fn trace(up_ms: u64, down_ms: u64, end_ms: u64) -> Vec<(u64, f64)> {
    (1..=end_ms / 250)
        .map(|i| {
            let t = i * 250;
            (t, if t >= up_ms && t < down_ms { 0.9 } else { 0.1 })
        })
        .collect()
}

#[test]
fn crossing_trace_gives_twelve_seconds() {
    let iv = eeg_intervals("b1", &trace(10_000, 22_000, 40_000), &[], &CueConfig::default());
    assert_eq!(iv.len(), 1);
    assert_eq!((iv[0].onset_t_ms, iv[0].correction_t_ms, iv[0].duration_ms), (10_000, 22_000, 12_000));
    assert_eq!(iv[0].method, IntervalMethod::EegEstimated);
}

#[test]
fn settled_probe_can_end_an_episode_early() {
    let probes = [ProbeAnswer {
        t_ms: 15_000,
        response: ProbeResponse::Settled,
        bucket: None,
    }];
    let iv = eeg_intervals("b1", &trace(10_000, 22_000, 40_000), &probes, &CueConfig::default());
    assert_eq!(iv[0].duration_ms, 5_000);
    assert_eq!(iv.len(), 1);
}

#[test]
fn settled_trace_has_no_intervals() {
    let iv = eeg_intervals("b1", &trace(0, 0, 60_000), &[], &CueConfig::default());
    assert!(iv.is_empty());
}

#[test]
fn single_high_window_is_not_an_onset() {
    let mut t = trace(0, 0, 30_000);
    t[20].1 = 0.95;
    assert!(eeg_intervals("b1", &t, &[], &CueConfig::default()).is_empty());
}

#[test]
fn sim_transitions_pair_up() {
    let iv = sim_intervals("s", &[(1000, true), (4000, false), (9000, true), (9500, false), (12_000, true)]);
    let d: Vec<u64> = iv.iter().map(|i| i.duration_ms).collect();
    assert_eq!(d, vec![3000, 500]);
}

#[test]
fn probe_spacing_caps_the_bucket() {
    let probes = [
        ProbeAnswer {
            t_ms: 130_000,
            response: ProbeResponse::Settled,
            bucket: None,
        },
        ProbeAnswer {
            t_ms: 180_000,
            response: ProbeResponse::Wandering,
            bucket: Some(cuelab::protocol::DurationBucket::Over60s),
        },
    ];
    let iv = probe_intervals("c", &probes).unwrap();
    assert_eq!(iv.len(), 1);
    assert_eq!(iv[0].duration_ms, 50_000);
}

fn sessions(tag: &str, medians_s: &[f64]) -> Vec<CorrectionInterval> {
    medians_s
        .iter()
        .enumerate()
        .flat_map(|(i, &m)| {
            let ms = (m * 1000.0) as u64;
            [ms - 500, ms, ms + 500].map(|d| CorrectionInterval {
                session_id: format!("{tag}{i}"),
                onset_t_ms: 1,
                correction_t_ms: 1 + d,
                duration_ms: d,
                method: IntervalMethod::ProbeEstimated,
            })
        })
        .collect()
}

#[test]
fn shortened_phase_c_passes() {
    let v = transfer_test(
        &sessions("a", &[12.0, 11.0, 13.0, 12.0, 14.0]),
        &sessions("c", &[6.0, 7.0, 5.0, 6.0]),
    )
    .unwrap();
    assert!(v.pass);
    assert!((v.p_value - 1.0 / 126.0).abs() < 1e-12);
    assert_eq!(v.phase_c_medians, vec![5000.0, 6000.0, 6000.0, 7000.0]);
}

#[test]
fn unchanged_phase_c_is_dependency() {
    let a = sessions("a", &[12.0, 11.0, 13.0, 12.0, 14.0]);
    let v = transfer_test(&a, &sessions("c", &[12.0, 11.0, 13.0, 12.0, 14.0])).unwrap();
    assert!(!v.pass);
    assert_eq!(v.label, "FAIL: dependency or no effect");
    assert!(matches!(transfer_test(&a, &[]), Err(ProtocolError::TooFewSessions { phase: Phase::C, got: 0 })));
}
