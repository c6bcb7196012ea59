use std::collections::BTreeMap;

use cuelab::signal::{StreamId, Window};
use cuelab::somatic::SomaticState;
use cuelab::stim::{
    is_recording_valid, mask_windows, tavns_trigger, StimConfig, StimEpoch, StimError, StimGate, StimTiming,
    TavnsPolicy,
};
use proptest::prelude::*;

fn win(start_ms: u64) -> Window {
    Window {
        stream: StreamId::Eeg,
        start_ms,
        len_ms: 500,
        sample_rate_hz: 256.0,
        labels: Vec::new(),
        channels: Vec::new(),
    }
}

fn epoch(start_ms: u64, end_ms: u64) -> StimEpoch {
    StimEpoch {
        start_ms,
        end_ms,
        amplitude_ma: 1.0,
        timing: StimTiming::default(),
    }
}

fn states(agitated: &[(u64, bool)]) -> Vec<SomaticState> {
    agitated
        .iter()
        .map(|&(t_ms, agitation)| SomaticState {
            t_ms,
            agitation,
            dullness: false,
            conflict: false,
            marker_zscores: BTreeMap::new(),
        })
        .collect()
}

fn armed() -> StimConfig {
    StimConfig::enabled().set_amplitude(1.2).unwrap()
}

#[test]
fn no_epochs_is_identity() {
    let ws: Vec<_> = (0..40).map(|i| win(i * 250)).collect();
    assert_eq!(mask_windows(ws.clone(), &[]), ws);
}

#[test]
fn epoch_suspends_every_overlapping_window() {
    let ws: Vec<_> = (0..200).map(|i| win(i * 250)).collect();
    let kept = mask_windows(ws.clone(), &[epoch(10_000, 20_000)]);
    // brute-force interval intersection, sample by sample
    let expected: Vec<_> = ws
        .into_iter()
        .filter(|w| !(w.start_ms..w.start_ms + 500).any(|t| (10_000..20_000).contains(&t)))
        .collect();
    assert_eq!(kept, expected);
    assert!(kept.iter().all(|w| w.start_ms + 500 <= 10_000 || w.start_ms >= 20_000));
    assert_eq!(kept.len(), 200 - 41);
}

#[test]
fn sustained_agitation_opens_one_epoch() {
    let h = states(&(0..=8).map(|i| (i * 5000, true)).collect::<Vec<_>>());
    let e = tavns_trigger(&h, &armed(), &TavnsPolicy::default(), None).unwrap().unwrap();
    assert_eq!((e.start_ms, e.end_ms), (40_000, 100_000));
    assert_eq!(e.amplitude_ma, 1.2);
}

#[test]
fn brief_agitation_does_not_trigger() {
    let mut marks: Vec<_> = (0..6).map(|i| (i * 5000, false)).collect();
    marks.extend((6..=8).map(|i| (i * 5000, true)));
    let h = states(&marks);
    assert_eq!(tavns_trigger(&h, &armed(), &TavnsPolicy::default(), None), Ok(None));
}

#[test]
fn cooldown_blocks_retrigger() {
    let h = states(&(0..=8).map(|i| (200_000 + i * 5000, true)).collect::<Vec<_>>());
    let recent = epoch(60_000, 120_000);
    assert_eq!(tavns_trigger(&h, &armed(), &TavnsPolicy::default(), Some(&recent)), Ok(None));
    let later = states(&(0..=8).map(|i| (400_000 + i * 5000, true)).collect::<Vec<_>>());
    assert!(tavns_trigger(&later, &armed(), &TavnsPolicy::default(), Some(&recent))
        .unwrap()
        .is_some_and(|e| e.start_ms == 440_000));
}

#[test]
fn disabled_stim_is_an_error() {
    let h = states(&[(0, true)]);
    assert_eq!(
        tavns_trigger(&h, &StimConfig::default(), &TavnsPolicy::default(), None),
        Err(StimError::StimDisabled)
    );
    assert_eq!(
        tavns_trigger(&h, &StimConfig::enabled(), &TavnsPolicy::default(), None),
        Err(StimError::AmplitudeNotSet)
    );
}

#[test]
fn gate_never_changes_amplitude() {
    let mut gate = StimGate::start(armed(), TavnsPolicy::default()).unwrap();
    for s in states(&(0..200).map(|i| (i * 5000, i % 40 < 30)).collect::<Vec<_>>()) {
        gate.observe(s).unwrap();
    }
    assert!(gate.epochs().len() >= 2);
    assert!(gate.epochs().iter().all(|e| e.amplitude_ma == 1.2));
    assert_eq!(gate.set_amplitude(2.0), Err(StimError::AmplitudeLocked));
    for w in gate.epochs().windows(2) {
        assert!(w[1].start_ms - w[0].end_ms >= 300_000);
    }
}

proptest! {
    #[test]
    fn masked_windows_never_touch_stim(
        starts in prop::collection::vec(0u64..400, 0..6),
        offsets in prop::collection::vec(0u64..800, 1..80),
    ) {
        let epochs: Vec<_> = starts.iter().map(|&s| epoch(s * 250, s * 250 + 60_000)).collect();
        let ws: Vec<_> = offsets.iter().map(|&o| win(o * 125)).collect();
        for w in mask_windows(ws, &epochs) {
            for e in &epochs {
                for c in e.cycles() {
                    prop_assert!(!w.overlaps(c.stim.0, c.stim.1));
                    prop_assert!(!w.overlaps(c.settle.0, c.settle.1));
                }
            }
        }
    }

    #[test]
    fn valid_slice_is_last_fifty_ms(start in 0u64..10_000, off in 0u64..60_000) {
        let e = epoch(start, start + 60_000);
        prop_assert_eq!(is_recording_valid(&e, start + off), off % 500 >= 450);
    }
}
