//! The `cuelab` command line.
//!
//! Exit codes: 0 success, 2 transfer test failed, 64 usage error, 65 bad
//! input data.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;

use crate::audit::{self, AuditError, TierRegistry};
use crate::classifier::{ClassifierError, WanderingModel};
use crate::demo::demo_failure_modes_with;
use crate::fast::FastFeatureVector;
use crate::io::{self, write_reports, IoError, Results, RunConfig, SessionLog};
use crate::protocol::{plan_study, Phase, ProtocolError, SessionPlan};
use crate::session::{
    evaluate_study, features_from_log, load_study, record_session, train_from_logs, IntervalSource, SessionError,
    SessionOptions,
};
use crate::sim::{calibrate, in_session_hazards, run_closed_loop, DeviceSpec, Practice, RewardRule, SimError, Strategy};
use crate::somatic::SomaticFeatures;

pub const EXIT_OK: i32 = 0;
pub const EXIT_TRANSFER_FAIL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;

#[derive(Debug, Parser)]
#[command(name = "cuelab", version, about = "Closed-loop meditation wearable toolkit and simulator")]
pub struct Cli {
    /// Master seed. Takes precedence over CUELAB_SEED and the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "cuelab-out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-loop training of the simulated user against one device.
    Simulate {
        /// muse_like, heartmath_like, iom2_like, proposed or none.
        #[arg(long, default_value = "muse_like", value_parser = parse_device)]
        device: DeviceSpec,
        /// Wandering model for the proposed device; calibrated if absent.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Fast and slow features from the raw samples of a session log.
    Features {
        #[arg(long)]
        input: PathBuf,
    },
    /// Fits the wandering classifier on Phase-A logs, or on a simulated Phase A.
    Train {
        #[arg(long)]
        logs: Option<PathBuf>,
    },
    /// Simulates one session, or a whole study with --study, and writes logs.
    RunSession {
        #[arg(long, default_value = "A", value_parser = parse_phase)]
        phase: Phase,
        /// Session from the study plan; the phase's first session if absent.
        #[arg(long)]
        session_id: Option<String>,
        /// Every session of the plan.
        #[arg(long)]
        study: bool,
        #[arg(long)]
        duration_ms: Option<u64>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Strategy practised in Phases B and C. Phase A is always naive.
        #[arg(long, value_parser = parse_strategy)]
        strategy: Option<Strategy>,
        /// Also log raw samples.
        #[arg(long)]
        raw: bool,
    },
    /// Transfer test over a directory of session logs.
    EvaluateTransfer {
        #[arg(long)]
        study: PathBuf,
        /// probe or truth.
        #[arg(long, default_value = "probe")]
        intervals: IntervalSource,
    },
    /// Four-criterion audit of device descriptors.
    Audit {
        /// TOML descriptor file; the built-in six devices if absent.
        #[arg(long)]
        devices: Option<PathBuf>,
        /// TOML tier registry; the built-in one if absent.
        #[arg(long)]
        tiers: Option<PathBuf>,
    },
    /// The failure-mode demonstrations.
    Demo,
}

fn parse_device(s: &str) -> Result<DeviceSpec, String> {
    let spec = match s.replace('-', "_").as_str() {
        "muse_like" => DeviceSpec::muse_like(),
        "heartmath_like" => DeviceSpec::heartmath_like(),
        "iom2_like" => DeviceSpec::iom2_like(),
        "proposed" => DeviceSpec::proposed(),
        "none" => DeviceSpec::none(),
        other => match other.parse::<RewardRule>() {
            Ok(rule) => DeviceSpec::new(other, rule),
            Err(_) => return Err(format!("unknown device '{s}'")),
        },
    };
    Ok(spec)
}

fn parse_phase(s: &str) -> Result<Phase, String> {
    s.parse()
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: SimError| e.to_string())
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    eprint!("{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(&cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Config file, then CUELAB_SEED, then --seed.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut cfg = cfg.with_env_seed()?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn emit(stdout: &mut dyn Write, results: &Results, out: &Path) -> Result<(), CliError> {
    let _ = write!(stdout, "{}", results.report);
    write_reports(results, out)?;
    Ok(())
}

pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = resolve_config(cli)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Demo => {
            let report = demo_failure_modes_with(&cfg.demo_config(), cfg.seed)?;
            emit(stdout, &Results::from_demo(&report), out)?;
        }
        Command::Audit { devices, tiers } => {
            let registry = match tiers {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(|e| IoError::Io {
                        path: p.clone(),
                        source: e,
                    })?;
                    TierRegistry::from_toml(&text)?
                }
                None => TierRegistry::canonical().clone(),
            };
            let devs = match devices {
                Some(p) => audit::load_devices(p, &registry)?,
                None => audit::canonical_devices(),
            };
            let table = audit::render_audit_table(&devs)?;
            emit(stdout, &Results::from_audit(&table, &devs), out)?;
        }
        Command::Simulate { device, model } => {
            let loaded = match (device.reward_rule, model) {
                (_, Some(p)) => Some(WanderingModel::load(p)?),
                (RewardRule::NegativeCueOnly, None) => Some(calibrate(&cfg.study_config(), cfg.seed)?.model),
                _ => None,
            };
            let traj = run_closed_loop(device, loaded.as_ref(), &cfg.closed_loop_config(), cfg.seed)?;
            emit(stdout, &Results::from_trajectory(&traj), out)?;
        }
        Command::Features { input } => {
            let log = io::load_session_log(input).map_err(|source| SessionError::Log {
                path: input.clone(),
                source,
            })?;
            let (fast, slow) = features_from_log(&log)?;
            emit(stdout, &feature_results(&log, &fast, &slow), out)?;
        }
        Command::Train { logs } => {
            let model = match logs {
                Some(dir) => train_from_logs(&load_study(dir)?, cfg.seed)?,
                None => calibrate(&cfg.study_config(), cfg.seed)?.model,
            };
            fs::create_dir_all(out).map_err(|e| IoError::Io {
                path: out.to_path_buf(),
                source: e,
            })?;
            let path = out.join("model.json");
            model.save(&path)?;
            let mut text = String::from("wandering classifier\n");
            let _ = writeln!(text, "trees: {}", model.n_trees());
            if let Some(cv) = model.cv_accuracy {
                let _ = writeln!(text, "5-fold CV accuracy: {cv:.4}");
            }
            let _ = writeln!(text, "model: {}", path.display());
            emit(
                stdout,
                &Results {
                    report: text,
                    ..Results::default()
                },
                out,
            )?;
        }
        Command::RunSession {
            phase,
            session_id,
            study,
            duration_ms,
            model,
            strategy,
            raw,
        } => {
            let plan = plan_study(&cfg.study_config())?;
            let mut opts = SessionOptions::new(Practice::naive(), duration_ms.unwrap_or(cfg.study.session_ms));
            opts.cue = cfg.cue;
            opts.stim = cfg.stim;
            opts.include_samples = *raw;
            let model = model.as_deref().map(WanderingModel::load).transpose()?;
            let sessions: Vec<(usize, &SessionPlan)> = if *study {
                plan.sessions.iter().enumerate().collect()
            } else {
                let pick = plan.sessions.iter().enumerate().find(|(_, s)| match session_id {
                    Some(id) => &s.session_id == id,
                    None => s.phase == *phase,
                });
                vec![pick.ok_or_else(|| CliError::Usage(format!("no such session in the plan: {session_id:?}")))?]
            };
            if !*study && model.is_none() && sessions.iter().any(|(_, s)| s.cueing_enabled) {
                return Err(CliError::Usage("cueing sessions need --model".into()));
            }
            fs::create_dir_all(out).map_err(|e| IoError::Io {
                path: out.to_path_buf(),
                source: e,
            })?;
            let written = write_sessions(&sessions, &opts, *strategy, model, cfg.seed, out)?;
            let _ = writeln!(stdout, "wrote {} session logs to {}", written, out.display());
        }
        Command::EvaluateTransfer { study, intervals } => {
            let eval = evaluate_study(&load_study(study)?, *intervals)?;
            emit(
                stdout,
                &Results::from_transfer(&eval.verdict, &eval.intervals_a, &eval.intervals_c),
                out,
            )?;
            return Ok(if eval.verdict.pass { EXIT_OK } else { EXIT_TRANSFER_FAIL });
        }
    }
    Ok(EXIT_OK)
}

fn practice_for(phase: Phase, strategy: Option<Strategy>) -> Practice {
    match (phase, strategy) {
        (Phase::A, _) | (_, None) => Practice::naive(),
        (Phase::B, Some(s)) => {
            let (home, hazards) = in_session_hazards(s);
            Practice {
                strategy: s,
                home,
                hazards,
            }
        }
        (Phase::C, Some(s)) => Practice::device_absent(s),
    }
}

/// Records and writes the sessions phase by phase. A missing model is
/// trained on the Phase-A logs before any cueing session runs.
fn write_sessions(
    sessions: &[(usize, &SessionPlan)],
    base: &SessionOptions,
    strategy: Option<Strategy>,
    mut model: Option<WanderingModel>,
    seed: u64,
    out: &Path,
) -> Result<usize, CliError> {
    let mut done: Vec<SessionLog> = Vec::new();
    for phase in [Phase::A, Phase::B, Phase::C] {
        let batch: Vec<&(usize, &SessionPlan)> = sessions.iter().filter(|(_, s)| s.phase == phase).collect();
        if batch.is_empty() {
            continue;
        }
        if model.is_none() && batch.iter().any(|(_, s)| s.cueing_enabled) {
            let trained = train_from_logs(&done, seed)?;
            trained.save(&out.join("model.json"))?;
            model = Some(trained);
        }
        let opts = SessionOptions {
            practice: practice_for(phase, strategy),
            ..*base
        };
        let logs = batch
            .par_iter()
            .map(|(i, plan)| record_session(plan, &opts, model.as_ref(), crate::sim::session_seed(seed, *i as u64)))
            .collect::<Result<Vec<_>, _>>()?;
        for log in &logs {
            log.write(&out.join(format!("{}.log", log.header().session_id)))?;
        }
        done.extend(logs);
    }
    Ok(done.len())
}

fn feature_results(log: &SessionLog, fast: &[FastFeatureVector], slow: &[SomaticFeatures]) -> Results {
    let mut fcsv = FastFeatureVector::csv_header() + "\n";
    for f in fast {
        fcsv += &(f.csv_row() + "\n");
    }
    let mut scsv = format!("{}\n", SomaticFeatures::CSV_HEADER);
    for s in slow {
        scsv += &(s.csv_row() + "\n");
    }
    let mut text = String::new();
    let _ = writeln!(text, "features of session {}", log.header().session_id);
    let _ = writeln!(text, "fast windows: {}", fast.len());
    let _ = writeln!(text, "usable fast windows: {}", fast.iter().filter(|f| f.quality_flag).count());
    let _ = writeln!(text, "slow windows: {}", slow.len());
    Results {
        report: text,
        ..Results::default()
    }
    .with_plotted_table("features.csv", fcsv)
    .with_plotted_table("somatic.csv", scsv)
}
