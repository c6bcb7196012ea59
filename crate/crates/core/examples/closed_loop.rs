//! An adaptive simulated user trained by a device's feedback.
//!
//! `cargo run --release --example closed_loop -- reward_hrv_coherence 3`
//! runs 300 episodes against the named reward rule and prints how often each
//! strategy was tried and what the user converged on.

use cuelab::sim::{calibrate, run_closed_loop, ClosedLoopConfig, DeviceSpec, RewardRule};
use cuelab::protocol::StudyConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let rule: RewardRule = args.next().as_deref().unwrap_or("reward_calm_eeg").parse()?;
    let seed: u64 = args.next().map_or(Ok(1), |s| s.parse())?;
    let model = match rule {
        RewardRule::NegativeCueOnly => Some(calibrate(&StudyConfig::default(), seed)?.model),
        _ => None,
    };
    let device = DeviceSpec::new(rule.as_str(), rule);
    println!("valence: {}", rule.valence_definition());
    let t = run_closed_loop(&device, model.as_ref(), &ClosedLoopConfig::default(), seed)?;
    println!("{:<20} {:>8} {:>6} {:>10} {:>8}", "strategy", "episodes", "cues", "mean r", "final p");
    for (s, (n, cues, r)) in t.by_strategy() {
        println!("{:<20} {n:>8} {cues:>6} {r:>10.4} {:>8.4}", s.as_str(), t.final_policy.probability(s));
    }
    let v: Vec<String> = t
        .records
        .iter()
        .filter_map(|r| r.v_target_eval.map(|v| format!("{v:.3}")))
        .collect();
    println!("terminal mode: {}", t.terminal_mode());
    println!("V_target along the run: {}", v.join(" "));
    Ok(())
}
