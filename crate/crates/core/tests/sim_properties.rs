//! Generator calibration, device feedback and bandit behaviour of the simulator.

use std::f64::consts::PI;

use cuelab::classifier::{train, TrainingSet, WanderingModel};
use cuelab::cue::CueConfig;
use cuelab::fast::FastFeatureVector;
use cuelab::signal::{band_power, BandSpec, EegChannel};
use cuelab::sim::{
    agent_step, device_absent_hazards, device_feedback, generate_signals, measure_v_target, run_closed_loop,
    window_features, AgentConfig, ClosedLoopConfig, DeviceRuntime, DeviceSpec, MentalState, SignalBundle, SimError,
    Strategy, StrategyPolicy, WindowFeatures, BASE_ONSET_PER_S, BASE_RECOVERY_PER_S, EEG_RATE_HZ,
};
use cuelab::somatic::{lf_hf_ratio, resample_ibis, IBI_RESAMPLE_HZ};

const THIRTY_S: u64 = 30_000;

fn features(state: MentalState, strategy: Strategy, ms: u64, seed: u64) -> Vec<WindowFeatures> {
    let b = generate_signals(state, strategy, ms, seed).unwrap();
    window_features(&b).unwrap()
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

fn fast_column(f: &[WindowFeatures], pick: impl Fn(&FastFeatureVector) -> f64) -> Vec<f64> {
    f.iter()
        .filter(|w| w.fast.quality_flag)
        .map(|w| pick(&w.fast))
        .filter(|v| v.is_finite())
        .collect()
}

fn fz(b: &SignalBundle) -> &[f64] {
    let k = b.layout.eeg_channels().iter().position(|&c| c == EegChannel::Fz).unwrap();
    &b.eeg[k]
}

/// Power in `[lo, hi]` Hz by direct summation of the DFT, no FFT.
fn direct_dft_band(x: &[f64], lo: f64, hi: f64, fs: f64) -> f64 {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let k_lo = (lo * n as f64 / fs).ceil() as usize;
    let k_hi = (hi * n as f64 / fs).floor() as usize;
    let mut total = 0.0;
    for k in k_lo..=k_hi {
        let w = 2.0 * PI * k as f64 / n as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (i, &v) in x.iter().enumerate() {
            let a = w * i as f64;
            re += (v - mean) * a.cos();
            im -= (v - mean) * a.sin();
        }
        total += re * re + im * im;
    }
    total
}

#[test]
fn settled_theta_plv_separates_from_wandering() {
    let settled = fast_column(
        &features(MentalState::Settled, Strategy::GenuineRegulation, THIRTY_S, 1),
        |v| v.plv_theta,
    );
    let wandering = fast_column(
        &features(MentalState::Wandering, Strategy::GenuineRegulation, THIRTY_S, 1),
        |v| v.plv_theta,
    );
    let (ms, ss) = mean_sd(&settled);
    let (mw, sw) = mean_sd(&wandering);
    assert!(ms - mw >= ss.max(sw), "settled {ms:.3}±{ss:.3} wandering {mw:.3}±{sw:.3}");
}

#[test]
fn jaw_bursts_raise_beta_fivefold_in_every_state() {
    for (i, state) in MentalState::ALL.into_iter().enumerate() {
        let seed = 40 + i as u64;
        let clean = generate_signals(state, Strategy::GenuineRegulation, THIRTY_S, seed).unwrap();
        let jaw = generate_signals(state, Strategy::JawArtefact, THIRTY_S, seed).unwrap();
        let p0 = direct_dft_band(fz(&clean), 13.0, 30.0, EEG_RATE_HZ);
        let p1 = direct_dft_band(fz(&jaw), 13.0, 30.0, EEG_RATE_HZ);
        assert!(p1 >= 5.0 * p0, "{state}: jaw {p1:.3e} vs clean {p0:.3e}");
        let fft = band_power(fz(&jaw), BandSpec::BETA, EEG_RATE_HZ).unwrap()
            / band_power(fz(&clean), BandSpec::BETA, EEG_RATE_HZ).unwrap();
        assert!(fft >= 5.0, "{state}: pipeline ratio {fft:.2}");
    }
}

#[test]
fn jaw_artefact_touches_eeg_only() {
    for state in MentalState::ALL {
        let clean = generate_signals(state, Strategy::GenuineRegulation, 20_000, 9).unwrap();
        let jaw = generate_signals(state, Strategy::JawArtefact, 20_000, 9).unwrap();
        assert_ne!(clean.eeg, jaw.eeg);
        assert_eq!(clean.ibis, jaw.ibis);
        assert_eq!(clean.resp, jaw.resp);
        assert_eq!(clean.imu, jaw.imu);
        assert_eq!(clean.gsr, jaw.gsr);
    }
}

#[test]
fn paced_breathing_drives_lf_hf_above_five() {
    for seed in 0..3 {
        let b = generate_signals(MentalState::Settled, Strategy::PacedBreathing, 120_000, seed).unwrap();
        let r = lf_hf_ratio(&b.ibis).unwrap();
        assert!(r >= 5.0, "seed {seed}: LF/HF {r:.2}");
    }
}

#[test]
fn drowsy_mobility_is_lower_than_settled() {
    let settled = fast_column(
        &features(MentalState::Settled, Strategy::GenuineRegulation, THIRTY_S, 5),
        |v| v.hjorth_mobility,
    );
    let drowsy = fast_column(
        &features(MentalState::Drowsy, Strategy::Drowsiness, THIRTY_S, 5),
        |v| v.hjorth_mobility,
    );
    assert!(mean_sd(&drowsy).0 < mean_sd(&settled).0);
}

#[test]
fn wandering_raises_beta() {
    let beta = |state| {
        let f = features(state, Strategy::GenuineRegulation, THIRTY_S, 6);
        let v: Vec<f64> = f.iter().filter_map(|w| w.bands.map(|b| b.beta)).collect();
        mean_sd(&v).0
    };
    assert!(beta(MentalState::Wandering) > 2.0 * beta(MentalState::Settled));
}

#[test]
fn sub_second_recordings_are_rejected() {
    let err = generate_signals(MentalState::Settled, Strategy::GenuineRegulation, 999, 0).unwrap_err();
    assert!(matches!(err, SimError::DurationTooShort { duration_ms: 999 }));
    assert!(generate_signals(MentalState::Settled, Strategy::GenuineRegulation, 1000, 0).is_ok());
}

#[test]
fn generation_is_seed_deterministic() {
    let a = generate_signals(MentalState::Wandering, Strategy::PostureTrick, 5_000, 77).unwrap();
    let b = generate_signals(MentalState::Wandering, Strategy::PostureTrick, 5_000, 77).unwrap();
    let c = generate_signals(MentalState::Wandering, Strategy::PostureTrick, 5_000, 78).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn suppression_lowers_lf_power_and_gsr_but_not_hazard() {
    let genuine = generate_signals(MentalState::Settled, Strategy::GenuineRegulation, 120_000, 12).unwrap();
    let suppressed = generate_signals(MentalState::Settled, Strategy::Suppression, 120_000, 12).unwrap();
    let lf = |b: &SignalBundle| {
        let grid = resample_ibis(&b.ibis, IBI_RESAMPLE_HZ);
        band_power(&grid, BandSpec::LF, IBI_RESAMPLE_HZ).unwrap()
    };
    assert!(lf(&suppressed) < lf(&genuine));
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    assert!(mean(&suppressed.gsr) < mean(&genuine.gsr));
    let h = device_absent_hazards(Strategy::Suppression);
    assert_eq!(h.onset_per_s, BASE_ONSET_PER_S);
    assert_eq!(h.recovery_per_s, BASE_RECOVERY_PER_S);
}

#[test]
fn only_genuine_regulation_improves_transfer() {
    let improving: Vec<Strategy> = Strategy::ALL.into_iter().filter(|s| s.v_target_effect() < 0.0).collect();
    assert_eq!(improving, vec![Strategy::GenuineRegulation]);
}

#[test]
fn rewarded_arm_dominates_after_five_hundred_episodes() {
    let mut worst = 1.0f64;
    for seed in 0..20u64 {
        let target = Strategy::ALL[seed as usize % Strategy::ALL.len()];
        let mut policy = StrategyPolicy::new(0.2, 0.1, seed);
        for _ in 0..500 {
            let chosen = policy.sample();
            let reward = if chosen == target { 1.0 } else { 0.0 };
            policy = agent_step(&policy, reward, chosen).unwrap();
        }
        worst = worst.min(policy.probability(target));
    }
    assert!(worst > 0.9, "lowest final probability {worst:.3}");
}

#[test]
fn equal_rewards_stay_uniform() {
    for seed in 0..20u64 {
        let mut policy = StrategyPolicy::new(0.2, 0.1, seed);
        for _ in 0..500 {
            let chosen = policy.sample();
            policy = agent_step(&policy, 0.5, chosen).unwrap();
        }
        for p in policy.probabilities() {
            assert!((p - 1.0 / 6.0).abs() <= 0.05, "seed {seed}: {p}");
        }
    }
}

#[test]
fn zero_learning_rate_freezes_the_policy() {
    let start = StrategyPolicy::new(0.2, 0.0, 3);
    let mut policy = start.clone();
    for i in 0..100 {
        let chosen = policy.sample();
        policy = agent_step(&policy, i as f64, chosen).unwrap();
    }
    assert_eq!(policy.weights(), start.weights());
    assert!(agent_step(&policy, f64::NAN, Strategy::Suppression).is_err());
}

fn short_loop(episodes: usize) -> ClosedLoopConfig {
    ClosedLoopConfig {
        episodes,
        episode_ms: 5_000,
        agent: AgentConfig::default(),
        v_eval_every: 0,
        v_eval_episodes: 0,
        cue: CueConfig::default(),
    }
}

#[test]
fn device_without_feedback_leaves_policy_uniform() {
    let t = run_closed_loop(&DeviceSpec::none(), None, &short_loop(20), 4).unwrap();
    assert!(t.records.iter().all(|r| r.r_proxy == 0.0 && r.cues == 0));
    for p in t.final_policy.probabilities() {
        assert!((p - 1.0 / 6.0).abs() < 1e-12);
    }
}

#[test]
fn closed_loop_is_seed_deterministic() {
    let cfg = short_loop(8);
    let a = run_closed_loop(&DeviceSpec::muse_like(), None, &cfg, 21).unwrap();
    let b = run_closed_loop(&DeviceSpec::muse_like(), None, &cfg, 21).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.final_policy.weights(), b.final_policy.weights());
    assert_eq!(a.to_csv(), b.to_csv());
    let none = ClosedLoopConfig { episodes: 0, ..cfg };
    assert!(matches!(
        run_closed_loop(&DeviceSpec::muse_like(), None, &none, 21),
        Err(SimError::NoEpisodes)
    ));
}

#[test]
fn genuine_regulation_beats_drowsiness_on_v_target() {
    let runs = |policy: &StrategyPolicy| -> Vec<f64> { (0..10).map(|s| measure_v_target(policy, 50, s)).collect() };
    let (mg, sg) = mean_sd(&runs(&StrategyPolicy::pure(Strategy::GenuineRegulation)));
    let (md, sd) = mean_sd(&runs(&StrategyPolicy::pure(Strategy::Drowsiness)));
    let (mu, _) = mean_sd(&runs(&StrategyPolicy::new(1.0, 0.0, 0)));
    assert!(mg - md >= 3.0 * sg.max(sd), "genuine {mg:.4}±{sg:.4} drowsy {md:.4}±{sd:.4}");
    assert!(md < mu && mu < mg, "uniform {mu:.4} not between {md:.4} and {mg:.4}");
    let p = StrategyPolicy::pure(Strategy::PacedBreathing);
    assert_eq!(measure_v_target(&p, 20, 5), measure_v_target(&p, 20, 5));
}

/// Compile-time audit: a device sees features and raw streams, nothing else.
#[test]
fn devices_see_only_pipeline_outputs() {
    let b = generate_signals(MentalState::Settled, Strategy::GenuineRegulation, 2_000, 0).unwrap();
    let SignalBundle {
        layout,
        duration_ms,
        eeg,
        ibis,
        resp,
        imu,
        gsr,
    } = b.clone();
    assert_eq!((duration_ms, eeg.len()), (2_000, layout.eeg_channels().len()));
    assert!(!resp.is_empty() && !imu.is_empty() && !gsr.is_empty() && !ibis.is_empty());
    for w in window_features(&b).unwrap() {
        let WindowFeatures {
            t_ms,
            bands,
            fast,
            somatic,
        } = w;
        let FastFeatureVector {
            t_ms: fast_t,
            faa: _,
            plv_theta: _,
            tbr_fz: _,
            tbr_cz: _,
            hjorth_mobility: _,
            hjorth_complexity: _,
            quality_flag: _,
        } = fast;
        assert_eq!(t_ms, fast_t);
        let _ = (bands, somatic);
    }
}

fn settled_wandering_model() -> WanderingModel {
    let mut rows = Vec::new();
    for seed in 0..2 {
        for (state, label) in [(MentalState::Settled, false), (MentalState::Wandering, true)] {
            for w in features(state, Strategy::GenuineRegulation, 60_000, 100 + seed) {
                if w.fast.quality_flag {
                    rows.push((w.fast, label));
                }
            }
        }
    }
    train(&TrainingSet::from_vectors(&rows).unwrap(), 1).unwrap()
}

#[test]
fn negative_only_device_cues_on_wandering_and_never_rewards() {
    let model = settled_wandering_model();
    let run = |state| {
        let mut dev = DeviceRuntime::new(DeviceSpec::proposed(), Some(&model), CueConfig::default()).unwrap();
        features(state, Strategy::GenuineRegulation, THIRTY_S, 500)
            .iter()
            .map(|w| device_feedback(&mut dev, w).unwrap())
            .collect::<Vec<_>>()
    };
    let settled = run(MentalState::Settled);
    assert!(settled.iter().all(|f| f.valence == 0.0 && f.cue.is_none()));
    let wandering = run(MentalState::Wandering);
    assert!(wandering.iter().all(|f| f.valence == 0.0));
    assert!(wandering.iter().any(|f| f.cue.is_some()));
    assert!(matches!(
        DeviceRuntime::new(DeviceSpec::proposed(), None, CueConfig::default()),
        Err(SimError::NoModel(_))
    ));
}

#[test]
fn drowsiness_earns_positive_calm_reward() {
    let mut dev = DeviceRuntime::new(DeviceSpec::muse_like(), None, CueConfig::default()).unwrap();
    let f = features(MentalState::Drowsy, Strategy::Drowsiness, THIRTY_S, 8);
    let v: Vec<f64> = f.iter().map(|w| device_feedback(&mut dev, w).unwrap().valence).collect();
    assert!(mean_sd(&v).0 > 0.0);
}
