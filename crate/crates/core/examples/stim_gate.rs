//! taVNS gating: sustained agitation opens an epoch, the epoch is split into
//! stim, settle and recording slices, and Layer-1 windows overlapping it are
//! dropped.

use std::collections::BTreeMap;

use cuelab::fast::{FAST_STEP_MS, FAST_WINDOW_MS};
use cuelab::signal::{StreamId, Window};
use cuelab::somatic::SomaticState;
use cuelab::stim::{is_recording_valid, mask_windows, StimConfig, StimGate, TavnsPolicy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = StimConfig::enabled().set_amplitude(1.2)?;
    let mut gate = StimGate::start(config, TavnsPolicy::default())?;
    for i in 0..120u64 {
        let t_ms = i * 5_000;
        let state = SomaticState {
            t_ms,
            agitation: (20..40).contains(&i) || (90..110).contains(&i),
            dullness: false,
            conflict: false,
            marker_zscores: BTreeMap::new(),
        };
        if let Some(e) = gate.observe(state)? {
            println!("epoch {}..{} ms at {} mA", e.start_ms, e.end_ms, e.amplitude_ma);
        }
    }
    if let Err(e) = gate.set_amplitude(2.0) {
        println!("amplitude change refused: {e}");
    }

    let epoch = gate.epochs()[0];
    let c = epoch.cycles()[0];
    println!("first cycle: stim {:?}, settle {:?}, valid {:?}", c.stim, c.settle, c.valid);
    let valid = (epoch.start_ms..epoch.end_ms).filter(|&t| is_recording_valid(&epoch, t)).count();
    println!("valid recording share: {:.3}", valid as f64 / epoch.span_ms() as f64);

    let windows: Vec<Window> = (0..2_400u64)
        .map(|k| Window {
            stream: StreamId::Eeg,
            start_ms: k * FAST_STEP_MS,
            len_ms: FAST_WINDOW_MS,
            sample_rate_hz: 256.0,
            labels: Vec::new(),
            channels: Vec::new(),
        })
        .collect();
    let total = windows.len();
    let kept = mask_windows(windows, gate.epochs());
    println!("layer-1 windows kept: {} of {total}", kept.len());
    Ok(())
}
