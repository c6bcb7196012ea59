//! Negative-only cueing: hysteresis, consecutive-window confirmation and a
//! refractory period, plus the Layer-1 source registry.

use cuelab::cue::{register_layer1_source, render_cue, run, CueConfig, Layer1Registry, SourceDescriptor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = CueConfig::default();
    // a wandering episode, a brief dip, a second episode inside the refractory
    // period and a third one after it
    let mut stream = Vec::new();
    for i in 0..240u64 {
        let t = i * 250;
        let p = match t {
            5_000..=9_000 => 0.9,
            9_001..=9_500 => 0.3,
            9_501..=14_000 => 0.92,
            40_000..=45_000 => 0.85,
            _ => 0.1,
        };
        stream.push((t, p));
    }
    for cue in run(&stream, &config)? {
        println!(
            "{:>6} ms  {:?}  p = {:.2}  token {}",
            cue.t_ms,
            cue.kind,
            cue.trigger_probability,
            render_cue(&cue).id()
        );
    }

    let mut registry = Layer1Registry::default();
    register_layer1_source(&mut registry, SourceDescriptor::fast_eeg())?;
    match register_layer1_source(&mut registry, SourceDescriptor::somatic()) {
        Ok(()) => println!("somatic source admitted"),
        Err(e) => println!("rejected: {e}"),
    }
    println!("layer-1 sources: {}", registry.sources().len());
    Ok(())
}
