//! Layer-1 feature extraction on simulated EEG.
//!
//! Generates 20 s of settled and wandering EEG, cuts it into 500 ms windows
//! stepped by 250 ms and prints the mean of each fast feature per state.

use cuelab::fast::{extract_all, FAST_FEATURE_NAMES, FAST_STEP_MS, FAST_WINDOW_MS};
use cuelab::signal::segment_windows;
use cuelab::sim::{generate_signals, MentalState, Strategy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:<12} {:>8} {}", "state", "windows", FAST_FEATURE_NAMES.join("  "));
    for state in [MentalState::Settled, MentalState::Wandering, MentalState::Drowsy] {
        let bundle = generate_signals(state, Strategy::GenuineRegulation, 20_000, 1)?;
        let windows = segment_windows(&bundle.eeg_buffer()?, FAST_WINDOW_MS, FAST_STEP_MS)?;
        let vectors = extract_all(&windows);
        let good: Vec<_> = vectors.iter().filter(|v| v.quality_flag).collect();
        let mut means = [0.0; FAST_FEATURE_NAMES.len()];
        for v in &good {
            for (m, x) in means.iter_mut().zip(v.features()) {
                *m += x / good.len() as f64;
            }
        }
        let cols: Vec<String> = means.iter().map(|m| format!("{m:.3}")).collect();
        println!("{:<12} {:>8} {}", state.as_str(), vectors.len(), cols.join("  "));
    }
    Ok(())
}
