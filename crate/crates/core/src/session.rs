//! Simulated sessions written as logs, and the analyses that read logs back:
//! feature extraction from raw samples, probe-labelled training sets and the
//! transfer test over a study directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{label_session, predict, ClassifierError, TrainingSet, WanderingModel, DEFAULT_LABEL_WINDOW_MS};
use crate::cue::{self, CueConfig, CueError, CueState};
use crate::fast::FastFeatureVector;
use crate::io::{IoError, LogHeader, LogRecord, RecordKind, SessionLog, StimSettings};
use crate::protocol::{
    probe_intervals, sim_intervals, transfer_test, CorrectionInterval, Phase, ProbeAnswer, ProtocolError, SessionPlan,
    TransferVerdict,
};
use crate::signal::{ChannelLayout, SampleFrame, StreamId};
use crate::sim::{
    session_signals, simulate_session, window_features, GroundTruth, MentalState, Practice, SignalBundle, SimError,
    WindowFeatures,
};
use crate::somatic::{gross_state, BaselineStats, SomaticFeatures};
use crate::stim::{StimEpoch, StimError, StimGate};

/// Somatic windows before this time calibrate the gross-state baseline.
pub const STIM_BASELINE_MS: u64 = 300_000;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("session {0} cues but no wandering model was given")]
    NoModel(String),
    #[error("log {0} has no raw sample records")]
    NoSamples(String),
    #[error("no session logs in {0}")]
    EmptyStudy(PathBuf),
    #[error("{path}: {source}")]
    Log {
        path: PathBuf,
        #[source]
        source: IoError,
    },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Stim(#[from] StimError),
    #[error(transparent)]
    Cue(#[from] CueError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionOptions {
    pub practice: Practice,
    pub duration_ms: u64,
    pub cue: CueConfig,
    /// Applied in Phase B only.
    pub stim: StimSettings,
    /// Also log every raw sample.
    pub include_samples: bool,
}

impl SessionOptions {
    pub fn new(practice: Practice, duration_ms: u64) -> Self {
        Self {
            practice,
            duration_ms,
            cue: CueConfig::default(),
            stim: StimSettings::default(),
            include_samples: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct TruthPayload {
    state: MentalState,
    end_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SamplePayload {
    stream: StreamId,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum StimPayload {
    Epoch { end_ms: u64 },
}

fn covers(epochs: &[StimEpoch], f: &WindowFeatures) -> bool {
    let lo = f.t_ms.saturating_sub(crate::fast::FAST_WINDOW_MS);
    epochs.iter().any(|e| lo < e.end_ms && f.t_ms > e.start_ms)
}

/// Somatic windows in time order, one per slow-path step.
fn distinct_somatic(features: &[WindowFeatures]) -> Vec<(SomaticFeatures, f64)> {
    let mut out: Vec<(SomaticFeatures, f64)> = Vec::new();
    for f in features {
        if let (Some(s), Some(b)) = (f.somatic, f.bands) {
            if out.last().is_none_or(|(p, _)| p.t_ms != s.t_ms) {
                out.push((s, b.theta));
            }
        }
    }
    out
}

fn stim_epochs(settings: &StimSettings, somatic: &[(SomaticFeatures, f64)]) -> Result<Vec<StimEpoch>, SessionError> {
    let mut gate = StimGate::start(settings.to_stim_config()?, settings.tavns)?;
    let calib: Vec<_> = somatic.iter().filter(|(s, _)| s.t_ms <= STIM_BASELINE_MS).copied().collect();
    let baseline = BaselineStats::estimate(&calib);
    for (s, theta) in somatic.iter().filter(|(s, _)| s.t_ms > STIM_BASELINE_MS) {
        match gross_state(s, *theta, &baseline) {
            Ok(state) => {
                gate.observe(state)?;
            }
            Err(e) => log::warn!("gross state at {} ms: {e}", s.t_ms),
        }
    }
    Ok(gate.epochs().to_vec())
}

/// Simulates one session and records everything the device would log.
pub fn record_session(
    plan: &SessionPlan,
    opts: &SessionOptions,
    model: Option<&WanderingModel>,
    seed: u64,
) -> Result<SessionLog, SessionError> {
    let sim = simulate_session(plan, opts.practice, opts.duration_ms, seed)?;
    let stim_active = opts.stim.enabled && plan.phase == Phase::B && plan.sensing_enabled;
    let header = LogHeader {
        session_id: plan.session_id.clone(),
        phase: plan.phase,
        cueing_enabled: plan.cueing_enabled,
        seed,
        layout: ChannelLayout::standard(),
        amplitude_ma: if stim_active { opts.stim.amplitude_ma } else { None },
    };
    let mut recs: Vec<LogRecord> = Vec::new();
    for seg in sim.truth.segments() {
        let p = TruthPayload {
            state: seg.state,
            end_ms: seg.end_ms,
        };
        recs.push(LogRecord::new(seg.start_ms, RecordKind::AgentTruth, &p)?);
    }
    if opts.include_samples {
        if let Some(bundle) = session_signals(plan, opts.practice, opts.duration_ms, seed)? {
            for f in bundle.frames() {
                let p = SamplePayload {
                    stream: f.stream,
                    values: f.values,
                };
                recs.push(LogRecord::new(f.t_ms, RecordKind::Sample, &p)?);
            }
        }
    }
    let somatic = distinct_somatic(&sim.features);
    for (s, _) in &somatic {
        recs.push(LogRecord::new(s.t_ms, RecordKind::Somatic, s)?);
    }
    let mut epochs = Vec::new();
    if let (true, Some(a)) = (stim_active, header.amplitude_ma) {
        recs.push(LogRecord::amplitude(0, a));
        epochs = stim_epochs(&opts.stim, &somatic)?;
        for e in &epochs {
            recs.push(LogRecord::new(e.start_ms, RecordKind::Stim, &StimPayload::Epoch { end_ms: e.end_ms })?);
        }
    }
    let model = match (plan.cueing_enabled, model) {
        (true, None) => return Err(SessionError::NoModel(plan.session_id.clone())),
        (true, m) => m,
        (false, _) => None,
    };
    let mut cue_state = CueState::default();
    opts.cue.validate()?;
    for f in sim.features.iter().filter(|f| !covers(&epochs, f)) {
        recs.push(LogRecord::new(f.t_ms, RecordKind::Feature, &f.fast)?);
        if let (Some(m), true) = (model, f.fast.quality_flag) {
            let p = predict(m, &f.fast)?;
            if let Some(ev) = cue::step(f.t_ms, p, &opts.cue, &mut cue_state)? {
                recs.push(LogRecord::new(ev.t_ms, RecordKind::Cue, &ev)?);
            }
        }
    }
    for p in &sim.probes {
        recs.push(LogRecord::new(p.t_ms, RecordKind::Probe, p)?);
    }
    recs.sort_by_key(|r| r.t_ms);
    Ok(SessionLog::new(header, recs)?)
}

/// The hidden state timeline stored in a log.
pub fn truth_from_log(log: &SessionLog) -> Result<GroundTruth, SessionError> {
    let mut changes = Vec::new();
    let mut end = 0;
    for r in log.records_of(RecordKind::AgentTruth) {
        let p: TruthPayload = r.decode()?;
        changes.push((r.t_ms, p.state));
        end = end.max(p.end_ms);
    }
    Ok(GroundTruth::from_changes(&changes, end))
}

/// Rebuilds the multi-stream recording from raw sample records.
pub fn bundle_from_log(log: &SessionLog) -> Result<SignalBundle, SessionError> {
    let layout = log.header().layout.clone();
    let mut b = SignalBundle {
        eeg: vec![Vec::new(); layout.eeg_channels().len()],
        layout,
        duration_ms: 0,
        ibis: Vec::new(),
        resp: Vec::new(),
        imu: Vec::new(),
        gsr: Vec::new(),
    };
    for r in log.records_of(RecordKind::Sample) {
        let p: SamplePayload = r.decode()?;
        let frame = SampleFrame::new(r.t_ms, p.stream, p.values);
        match frame.stream {
            StreamId::Eeg => {
                if frame.values.len() != b.eeg.len() {
                    return Err(IoError::Parse {
                        line: 0,
                        message: format!("EEG sample at {} ms has {} channels", r.t_ms, frame.values.len()),
                    }
                    .into());
                }
                for (ch, v) in b.eeg.iter_mut().zip(frame.values) {
                    ch.push(v);
                }
            }
            StreamId::Ibi => b.ibis.push((frame.t_ms, frame.values.first().copied().unwrap_or(f64::NAN))),
            StreamId::Resp => b.resp.extend(frame.values.first()),
            StreamId::Imu => b.imu.push(frame.values),
            StreamId::Gsr => b.gsr.extend(frame.values.first()),
        }
    }
    let n = b.eeg.first().map_or(0, Vec::len);
    if n == 0 {
        return Err(SessionError::NoSamples(log.header().session_id.clone()));
    }
    b.duration_ms = (n as f64 * 1000.0 / b.layout.eeg_rate_hz()).round() as u64;
    Ok(b)
}

/// Fast and slow features recomputed from the raw samples of a log.
pub fn features_from_log(log: &SessionLog) -> Result<(Vec<FastFeatureVector>, Vec<SomaticFeatures>), SessionError> {
    let bundle = bundle_from_log(log)?;
    let wf = window_features(&bundle)?;
    let fast = wf.iter().map(|f| f.fast).collect();
    let slow = bundle.somatic_features()?;
    Ok((fast, slow))
}

/// Probe-labelled rows from the logged feature records.
pub fn training_rows_from_log(log: &SessionLog) -> Result<TrainingSet, SessionError> {
    let features: Vec<FastFeatureVector> = log.decode_all(RecordKind::Feature)?;
    let probes: Vec<ProbeAnswer> = log.decode_all(RecordKind::Probe)?;
    let labels: Vec<_> = probes
        .iter()
        .map(|p| crate::classifier::ProbeLabel {
            t_ms: p.t_ms,
            response: p.response,
        })
        .collect();
    Ok(label_session(
        &log.header().session_id,
        &labels,
        &features,
        DEFAULT_LABEL_WINDOW_MS,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalSource {
    /// Self-reported wandering durations at probes.
    Probe,
    /// The simulator's hidden timeline.
    Truth,
}

impl std::str::FromStr for IntervalSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "probe" => Ok(IntervalSource::Probe),
            "truth" => Ok(IntervalSource::Truth),
            other => Err(format!("unknown interval source '{other}' (probe, truth)")),
        }
    }
}

pub fn intervals_from_log(log: &SessionLog, source: IntervalSource) -> Result<Vec<CorrectionInterval>, SessionError> {
    let id = &log.header().session_id;
    match source {
        IntervalSource::Probe => {
            let probes: Vec<ProbeAnswer> = log.decode_all(RecordKind::Probe)?;
            match probe_intervals(id, &probes) {
                Err(ProtocolError::NoProbes) => Ok(Vec::new()),
                r => Ok(r?),
            }
        }
        IntervalSource::Truth => Ok(sim_intervals(id, &truth_from_log(log)?.wandering_transitions())),
    }
}

/// Every `*.log` file in `dir`, in file-name order.
pub fn load_study(dir: &Path) -> Result<Vec<SessionLog>, SessionError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| IoError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "log"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(SessionError::EmptyStudy(dir.to_path_buf()));
    }
    paths
        .iter()
        .map(|p| {
            crate::io::load_session_log(p).map_err(|source| SessionError::Log {
                path: p.clone(),
                source,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyEvaluation {
    pub verdict: TransferVerdict,
    pub intervals_a: Vec<CorrectionInterval>,
    pub intervals_c: Vec<CorrectionInterval>,
}

/// Phase C against Phase A over a set of session logs.
pub fn evaluate_study(logs: &[SessionLog], source: IntervalSource) -> Result<StudyEvaluation, SessionError> {
    let mut a = Vec::new();
    let mut c = Vec::new();
    for log in logs {
        match log.header().phase {
            Phase::A => a.extend(intervals_from_log(log, source)?),
            Phase::C => c.extend(intervals_from_log(log, source)?),
            Phase::B => {}
        }
    }
    let verdict = transfer_test(&a, &c)?;
    Ok(StudyEvaluation {
        verdict,
        intervals_a: a,
        intervals_c: c,
    })
}

/// Trains on the Phase-A logs, class-balanced by probe.
pub fn train_from_logs(logs: &[SessionLog], seed: u64) -> Result<WanderingModel, SessionError> {
    let mut pooled = TrainingSet::default();
    for log in logs.iter().filter(|l| l.header().phase == Phase::A) {
        pooled.extend(training_rows_from_log(log)?);
    }
    Ok(crate::classifier::train(&pooled.balanced(seed), seed)?)
}
