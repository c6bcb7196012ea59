//! Audits wearable descriptors against the four design criteria.
//!
//! With no argument the built-in catalogue is used; otherwise the given TOML
//! file of `[[device]]` tables is loaded.

use std::path::Path;

use cuelab::audit::{
    audit_device, canonical_devices, classify_tier, load_devices, render_audit_table, TierRegistry,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let devices = match std::env::args().nth(1) {
        Some(p) => load_devices(Path::new(&p), TierRegistry::canonical())?,
        None => canonical_devices(),
    };
    print!("{}", render_audit_table(&devices)?);
    println!();
    for d in &devices {
        let a = audit_device(d)?;
        let failed: Vec<_> = a
            .booleans()
            .iter()
            .zip(["single target", "negative only", "layer separation", "transfer primary"])
            .filter(|(ok, _)| !**ok)
            .map(|(_, n)| n)
            .collect();
        if !failed.is_empty() {
            println!("{}: fails {}", d.name, failed.join(", "));
        }
    }
    for target in ["mind-wandering onset", "FM-theta", "equanimity vs suppression", "rigpa recognition", "focus score"] {
        println!("{target:<28} {}", classify_tier(target).as_str());
    }
    Ok(())
}
