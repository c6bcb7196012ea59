use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::IoError;
use crate::audit::DeviceDescriptor;
use crate::demo::DemoReport;
use crate::protocol::{CorrectionInterval, TransferVerdict};
use crate::sim::{Strategy, Trajectory};

/// Files destined for one output directory: a plain-text report, CSV
/// tables and gnuplot data files, each keyed by file name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Results {
    pub report: String,
    pub tables: Vec<(String, String)>,
    pub plots: Vec<(String, String)>,
}

/// CSV to whitespace-separated columns with a `#` header line.
pub fn csv_to_dat(csv: &str) -> String {
    let mut out = String::new();
    for (i, line) in csv.lines().enumerate() {
        let cols: Vec<&str> = line
            .split(',')
            .map(|c| if c.is_empty() { "NaN" } else { c })
            .collect();
        if i == 0 {
            out.push_str("# ");
        }
        out.push_str(&cols.join(" "));
        out.push('\n');
    }
    out
}

fn dat_name(csv_name: &str) -> String {
    format!("{}.dat", csv_name.strip_suffix(".csv").unwrap_or(csv_name))
}

impl Results {
    pub fn is_empty(&self) -> bool {
        self.report.is_empty() && self.tables.is_empty() && self.plots.is_empty()
    }

    /// Adds a CSV table and its plot-data twin.
    pub fn with_plotted_table(mut self, name: &str, csv: String) -> Self {
        self.plots.push((dat_name(name), csv_to_dat(&csv)));
        self.tables.push((name.to_string(), csv));
        self
    }

    pub fn from_demo(report: &DemoReport) -> Self {
        let mut r = Results {
            report: report.render(),
            ..Self::default()
        };
        for t in report.traces() {
            r = r.with_plotted_table(&t.file_name, t.csv.clone());
        }
        r
    }

    pub fn from_transfer(
        verdict: &TransferVerdict,
        intervals_a: &[CorrectionInterval],
        intervals_c: &[CorrectionInterval],
    ) -> Self {
        let mut text = String::new();
        let _ = writeln!(text, "transfer test");
        let _ = writeln!(text, "hypothesis: {}", verdict.hypothesis);
        let _ = writeln!(text, "phase A sessions: {}", verdict.phase_a_medians.len());
        let _ = writeln!(text, "phase C sessions: {}", verdict.phase_c_medians.len());
        let _ = writeln!(text, "U = {}", verdict.u_statistic);
        let _ = writeln!(text, "p = {:.6}", verdict.p_value);
        let _ = writeln!(text, "alpha = {}", verdict.alpha);
        let _ = writeln!(text, "verdict: {}", verdict.label);
        let mut csv = String::from("phase,session_id,onset_t_ms,correction_t_ms,duration_ms,method\n");
        for (phase, ivs) in [("A", intervals_a), ("C", intervals_c)] {
            for iv in ivs {
                let method = serde_json::to_value(iv.method).ok();
                let _ = writeln!(
                    csv,
                    "{phase},{},{},{},{},{}",
                    iv.session_id,
                    iv.onset_t_ms,
                    iv.correction_t_ms,
                    iv.duration_ms,
                    method.as_ref().and_then(|m| m.as_str()).unwrap_or("")
                );
            }
        }
        let mut medians = String::from("phase,median_ms\n");
        for (phase, m) in [("A", &verdict.phase_a_medians), ("C", &verdict.phase_c_medians)] {
            for v in m {
                let _ = writeln!(medians, "{phase},{v}");
            }
        }
        let mut dist = String::from("# phase_index duration_s\n");
        for (k, ivs) in [intervals_a, intervals_c].iter().enumerate() {
            for iv in ivs.iter() {
                let _ = writeln!(dist, "{k} {}", iv.duration_ms as f64 / 1000.0);
            }
        }
        Results {
            report: text,
            tables: vec![
                ("intervals.csv".into(), csv),
                ("session_medians.csv".into(), medians),
            ],
            plots: vec![("interval_distribution.dat".into(), dist)],
        }
    }

    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let mut text = String::new();
        let _ = writeln!(text, "closed-loop run");
        let _ = writeln!(text, "device: {} ({})", traj.device.name, traj.device.reward_rule);
        let _ = writeln!(text, "seed: {}", traj.seed);
        let _ = writeln!(text, "episodes: {}", traj.records.len());
        let mode = traj.terminal_mode();
        let _ = writeln!(
            text,
            "terminal mode: {mode} (p = {:.4})",
            traj.final_policy.probability(mode)
        );
        let _ = writeln!(text, "strategy, episodes, cues, mean r_proxy, final p");
        for (s, (n, cues, r)) in traj.by_strategy() {
            let _ = writeln!(
                text,
                "{s}, {n}, {cues}, {r:.4}, {:.4}",
                traj.final_policy.probability(s)
            );
        }
        let mut conv = String::from("episode");
        for s in Strategy::ALL {
            let _ = write!(conv, ",{s}");
        }
        conv.push('\n');
        let mut counts = [0usize; 6];
        for (i, rec) in traj.records.iter().enumerate() {
            counts[rec.strategy.index()] += 1;
            let _ = write!(conv, "{}", rec.episode);
            for c in counts {
                let _ = write!(conv, ",{:.4}", c as f64 / (i + 1) as f64);
            }
            conv.push('\n');
        }
        Results {
            report: text,
            ..Self::default()
        }
        .with_plotted_table("trajectory.csv", traj.to_csv())
        .with_plotted_table("strategy_share.csv", conv)
    }

    pub fn from_audit(table: &str, devices: &[DeviceDescriptor]) -> Self {
        let mut csv = String::from("system,single_target,negative_only,layer_separation,transfer_test,verdict\n");
        for d in devices {
            if let Ok(a) = crate::audit::audit_device(d) {
                let c = a.cells();
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    d.name,
                    c[0],
                    c[1],
                    c[2],
                    c[3],
                    if a.verdict { "PASS" } else { "FAIL" }
                );
            }
        }
        Results {
            report: table.to_string(),
            tables: vec![("audit.csv".into(), csv)],
            plots: Vec::new(),
        }
    }
}

/// Writes `report.txt`, every table and every plot file into `out_dir`,
/// creating it if needed. Returns the paths written, in order.
pub fn write_reports(results: &Results, out_dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    if results.is_empty() {
        return Err(IoError::EmptyResults);
    }
    fs::create_dir_all(out_dir).map_err(|e| IoError::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: &str| -> Result<(), IoError> {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(|e| IoError::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    if !results.report.is_empty() {
        put("report.txt", &results.report)?;
    }
    for (name, body) in results.tables.iter().chain(&results.plots) {
        put(name, body)?;
    }
    Ok(written)
}
