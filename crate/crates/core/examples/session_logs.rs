//! A short three-phase study recorded to session logs, read back and
//! evaluated, the same path the command-line tool takes.

use cuelab::protocol::{plan_study, Phase, StudyConfig};
use cuelab::session::{evaluate_study, load_study, record_session, train_from_logs, IntervalSource, SessionOptions};
use cuelab::sim::{in_session_hazards, session_seed, Practice, Strategy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let study = StudyConfig {
        weeks_a: 2,
        weeks_b: 1,
        weeks_c: 2,
        sessions_per_week: 5,
        session_ms: 20 * 60_000,
        seed: 11,
        sham: false,
    };
    let plan = plan_study(&study)?;
    let dir = std::env::temp_dir().join(format!("cuelab-sessions-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;

    let strategy = Strategy::GenuineRegulation;
    let (home, hazards) = in_session_hazards(strategy);
    let mut model = None;
    for phase in [Phase::A, Phase::B, Phase::C] {
        let practice = match phase {
            Phase::A => Practice::naive(),
            Phase::B => Practice { strategy, home, hazards },
            Phase::C => Practice::device_absent(strategy),
        };
        let opts = SessionOptions::new(practice, study.session_ms);
        for (i, p) in plan.sessions.iter().enumerate().filter(|(_, p)| p.phase == phase) {
            let log = record_session(p, &opts, model.as_ref(), session_seed(study.seed, i as u64))?;
            log.write(&dir.join(format!("{}.log", p.session_id)))?;
        }
        if phase == Phase::A {
            model = Some(train_from_logs(&load_study(&dir)?, study.seed)?);
        }
    }

    let logs = load_study(&dir)?;
    let first = &logs[0];
    println!("{} logs; first has {} records", logs.len(), first.records().len());
    println!("{}", first.to_text().lines().take(9).collect::<Vec<_>>().join("\n"));
    for source in [IntervalSource::Truth, IntervalSource::Probe] {
        let e = evaluate_study(&logs, source)?;
        println!(
            "{source:?}: {} + {} intervals, p = {:.4}, {}",
            e.intervals_a.len(),
            e.intervals_c.len(),
            e.verdict.p_value,
            e.verdict.label
        );
    }
    std::fs::remove_dir_all(dir)?;
    Ok(())
}
