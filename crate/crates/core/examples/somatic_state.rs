//! Slow somatic path: HRV, respiration and posture features, then gross
//! agitation/dullness against a settled baseline.

use cuelab::signal::{band_power, BandSpec};
use cuelab::sim::{generate_signals, MentalState, SignalBundle, Strategy};
use cuelab::somatic::{gross_state, BaselineStats, SomaticFeatures};

fn theta(bundle: &SignalBundle, end_ms: u64) -> f64 {
    let fs = bundle.layout.eeg_rate_hz();
    let hi = ((end_ms as f64 / 1000.0) * fs) as usize;
    let lo = hi.saturating_sub(fs as usize * 2);
    band_power(&bundle.eeg[2][lo..hi], BandSpec::THETA, fs).unwrap_or(f64::NAN)
}

fn with_theta(bundle: &SignalBundle) -> Result<Vec<(SomaticFeatures, f64)>, Box<dyn std::error::Error>> {
    Ok(bundle
        .somatic_features()?
        .into_iter()
        .map(|f| (f, theta(bundle, f.t_ms)))
        .collect())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let baseline_run = generate_signals(MentalState::Settled, Strategy::GenuineRegulation, 180_000, 2)?;
    let baseline = BaselineStats::estimate(&with_theta(&baseline_run)?);
    println!("{}", SomaticFeatures::CSV_HEADER);
    for (state, strategy) in [
        (MentalState::Settled, Strategy::GenuineRegulation),
        (MentalState::Drowsy, Strategy::Drowsiness),
        (MentalState::Wandering, Strategy::JawArtefact),
    ] {
        let bundle = generate_signals(state, strategy, 120_000, 3)?;
        let rows = with_theta(&bundle)?;
        let (mut agitated, mut dull) = (0, 0);
        for (f, th) in &rows {
            match gross_state(f, *th, &baseline) {
                Ok(s) => {
                    agitated += s.agitation as usize;
                    dull += s.dullness as usize;
                }
                Err(e) => println!("  {e}"),
            }
        }
        if let Some((last, _)) = rows.last() {
            println!("{}", last.csv_row());
        }
        println!("  {state}/{strategy}: {} windows, {agitated} agitated, {dull} dull", rows.len());
    }
    Ok(())
}
