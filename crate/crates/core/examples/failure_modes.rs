//! Proxy mismatch, strategy shortcutting and transfer failure, end to end.
//!
//! `cargo run --release --example failure_modes -- 7 out/` prints the report
//! and, when a directory is given, writes the CSV traces and plot files.

use std::path::Path;

use cuelab::demo::demo_failure_modes;
use cuelab::io::{write_reports, Results};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(Ok(7), |s| s.parse())?;
    let report = demo_failure_modes(seed)?;
    print!("{}", report.render());
    if let Some(dir) = args.next() {
        for path in write_reports(&Results::from_demo(&report), Path::new(&dir))? {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
