//! Session logs: a `key=value` header closed by `---`, then one JSON record
//! per line.
//!
//! ```text
//! CUELAB-SESSION-v1
//! session_id=A-w1-s1
//! phase=A
//! cueing_enabled=false
//! seed=7
//! layout=Fp1,Fp2,Fz,Cz@256
//! stim_enabled=false
//! ---
//! {"t_ms":500,"kind":"feature","payload":{...}}
//! ```

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::IoError;
use crate::protocol::Phase;
use crate::signal::ChannelLayout;

pub const LOG_MAGIC: &str = "CUELAB-SESSION-v1";
pub const HEADER_END: &str = "---";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub session_id: String,
    pub phase: Phase,
    pub cueing_enabled: bool,
    pub seed: u64,
    pub layout: ChannelLayout,
    /// Present iff stimulation is enabled.
    pub amplitude_ma: Option<f64>,
}

impl LogHeader {
    pub fn stim_enabled(&self) -> bool {
        self.amplitude_ma.is_some()
    }

    fn lines(&self) -> Vec<String> {
        let mut v = vec![
            LOG_MAGIC.to_string(),
            format!("session_id={}", self.session_id),
            format!("phase={}", self.phase),
            format!("cueing_enabled={}", self.cueing_enabled),
            format!("seed={}", self.seed),
            format!("layout={}", self.layout.to_header()),
            format!("stim_enabled={}", self.stim_enabled()),
        ];
        if let Some(a) = self.amplitude_ma {
            v.push(format!("amplitude_ma={a}"));
        }
        v.push(HEADER_END.to_string());
        v
    }

    /// Header lines, including the magic line and the terminator.
    pub fn line_count(&self) -> usize {
        self.lines().len()
    }

    fn check(&self) -> Result<(), IoError> {
        let bad = |message: String| Err(IoError::InvariantViolation { line: 1, message });
        if self.session_id.is_empty() || self.session_id.contains(['\n', '=']) {
            return bad(format!("invalid session_id '{}'", self.session_id));
        }
        if self.phase == Phase::A && self.cueing_enabled {
            return bad("Phase A session with cueing enabled".into());
        }
        if let Some(a) = self.amplitude_ma {
            if !(a > 0.0 && a.is_finite()) {
                return bad(format!("amplitude {a} mA must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Sample,
    Feature,
    Somatic,
    Cue,
    Probe,
    Stim,
    AgentTruth,
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        f.write_str(s.as_ref().and_then(Value::as_str).unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRecord {
    pub t_ms: u64,
    pub kind: RecordKind,
    pub payload: Value,
}

impl LogRecord {
    pub fn new<T: Serialize>(t_ms: u64, kind: RecordKind, payload: &T) -> Result<Self, IoError> {
        let payload = serde_json::to_value(payload).map_err(|e| IoError::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        Ok(Self { t_ms, kind, payload })
    }

    /// The fixed stimulation amplitude, announced once at session start.
    pub fn amplitude(t_ms: u64, amplitude_ma: f64) -> Self {
        Self {
            t_ms,
            kind: RecordKind::Stim,
            payload: serde_json::json!({ "event": "amplitude", "amplitude_ma": amplitude_ma }),
        }
    }

    pub fn is_amplitude(&self) -> bool {
        self.kind == RecordKind::Stim && self.payload.get("event").and_then(Value::as_str) == Some("amplitude")
    }

    pub fn decode<T: for<'de> Deserialize<'de>>(&self) -> Result<T, IoError> {
        serde_json::from_value(self.payload.clone()).map_err(|e| IoError::Parse {
            line: 0,
            message: format!("{} payload at {} ms: {e}", self.kind, self.t_ms),
        })
    }

    fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records always serialize")
    }
}

/// Incremental check of the body invariants.
#[derive(Debug, Clone)]
struct Validator {
    header: LogHeader,
    first_line: usize,
    last_t: Option<u64>,
    amplitude_lines: Vec<usize>,
    seen: usize,
}

impl Validator {
    fn new(header: &LogHeader) -> Result<Self, IoError> {
        header.check()?;
        Ok(Self {
            header: header.clone(),
            first_line: header.line_count() + 1,
            last_t: None,
            amplitude_lines: Vec::new(),
            seen: 0,
        })
    }

    fn accept(&mut self, rec: &LogRecord) -> Result<(), IoError> {
        let line = self.first_line + self.seen;
        let bad = |message: String| Err(IoError::InvariantViolation { line, message });
        if let Some(prev) = self.last_t {
            if rec.t_ms < prev {
                return bad(format!("t_ms {} goes back from {prev}", rec.t_ms));
            }
        }
        match rec.kind {
            RecordKind::Cue if self.header.phase == Phase::A => return bad("cue record in a Phase A log".into()),
            RecordKind::Cue if !self.header.cueing_enabled => {
                return bad("cue record while cueing is disabled".into())
            }
            RecordKind::Sample | RecordKind::Feature if self.header.phase == Phase::C => {
                return bad(format!("{} record in a device-absent Phase C log", rec.kind))
            }
            _ => {}
        }
        if rec.is_amplitude() {
            let Some(expected) = self.header.amplitude_ma else {
                return bad("amplitude record while stimulation is disabled".into());
            };
            if !self.amplitude_lines.is_empty() {
                return bad(format!("second amplitude record (first on line {})", self.amplitude_lines[0]));
            }
            let got = rec.payload.get("amplitude_ma").and_then(Value::as_f64);
            if got != Some(expected) {
                return bad(format!("amplitude record {got:?} differs from header {expected}"));
            }
            self.amplitude_lines.push(line);
        }
        self.last_t = Some(rec.t_ms);
        self.seen += 1;
        Ok(())
    }

    fn finish(&self) -> Result<(), IoError> {
        if self.header.stim_enabled() && self.amplitude_lines.is_empty() {
            return Err(IoError::InvariantViolation {
                line: self.first_line + self.seen.saturating_sub(1),
                message: "stimulation enabled but no amplitude record".into(),
            });
        }
        Ok(())
    }
}

/// Append-only writer. Every record is checked before it is written.
pub struct LogWriter<W: Write> {
    out: W,
    validator: Validator,
}

impl<W: Write> LogWriter<W> {
    pub fn new(mut out: W, header: &LogHeader) -> Result<Self, IoError> {
        let validator = Validator::new(header)?;
        for l in header.lines() {
            writeln!(out, "{l}").map_err(IoError::from_write)?;
        }
        Ok(Self { out, validator })
    }

    pub fn append(&mut self, rec: &LogRecord) -> Result<(), IoError> {
        self.validator.accept(rec)?;
        writeln!(self.out, "{}", rec.to_line()).map_err(IoError::from_write)
    }

    /// Checks the whole-log invariants and returns the sink.
    pub fn finish(mut self) -> Result<W, IoError> {
        self.validator.finish()?;
        self.out.flush().map_err(IoError::from_write)?;
        Ok(self.out)
    }
}

/// A complete, validated session log.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    header: LogHeader,
    records: Vec<LogRecord>,
}

impl SessionLog {
    /// Validates `records` against `header`. Records must already be in time order.
    pub fn new(header: LogHeader, records: Vec<LogRecord>) -> Result<Self, IoError> {
        let mut v = Validator::new(&header)?;
        for r in &records {
            v.accept(r)?;
        }
        v.finish()?;
        Ok(Self { header, records })
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn records_of(&self, kind: RecordKind) -> impl Iterator<Item = &LogRecord> {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    /// Decodes every payload of `kind`.
    pub fn decode_all<T: for<'de> Deserialize<'de>>(&self, kind: RecordKind) -> Result<Vec<T>, IoError> {
        self.records_of(kind).map(LogRecord::decode).collect()
    }

    pub fn to_text(&self) -> String {
        let mut w = LogWriter::new(Vec::new(), &self.header).expect("header validated at construction");
        for r in &self.records {
            w.append(r).expect("records validated at construction");
        }
        String::from_utf8(w.finish().expect("log validated at construction")).expect("JSON is UTF-8")
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let parse_err = |line: usize, message: String| IoError::Parse { line, message };
        match lines.next() {
            Some((_, l)) if l == LOG_MAGIC => {}
            _ => return Err(parse_err(1, format!("expected '{LOG_MAGIC}'"))),
        }
        let mut fields: Vec<(usize, String, String)> = Vec::new();
        let mut closed = false;
        for (n, l) in lines.by_ref() {
            if l == HEADER_END {
                closed = true;
                break;
            }
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| parse_err(n, format!("expected key=value, got '{l}'")))?;
            if fields.iter().any(|(_, key, _)| key == k) {
                return Err(parse_err(n, format!("duplicate header key '{k}'")));
            }
            fields.push((n, k.to_string(), v.to_string()));
        }
        if !closed {
            return Err(parse_err(fields.len() + 1, format!("header not closed by '{HEADER_END}'")));
        }
        let get = |key: &str| -> Result<(usize, &str), IoError> {
            fields
                .iter()
                .find(|(_, k, _)| k == key)
                .map(|(n, _, v)| (*n, v.as_str()))
                .ok_or_else(|| parse_err(1, format!("header is missing '{key}'")))
        };
        fn value<T: std::str::FromStr>((n, v): (usize, &str), key: &str) -> Result<T, IoError> {
            v.parse().map_err(|_| IoError::Parse {
                line: n,
                message: format!("bad value '{v}' for '{key}'"),
            })
        }
        if let Some((n, k, _)) = fields.iter().find(|(_, k, _)| {
            ![
                "session_id",
                "phase",
                "cueing_enabled",
                "seed",
                "layout",
                "stim_enabled",
                "amplitude_ma",
            ]
            .contains(&k.as_str())
        }) {
            return Err(parse_err(*n, format!("unknown header key '{k}'")));
        }
        let stim: bool = value(get("stim_enabled")?, "stim_enabled")?;
        let amplitude_ma = match (stim, get("amplitude_ma")) {
            (true, Ok(f)) => Some(value::<f64>(f, "amplitude_ma")?),
            (true, Err(e)) => return Err(e),
            (false, Ok((n, _))) => return Err(parse_err(n, "amplitude_ma without stim_enabled=true".into())),
            (false, Err(_)) => None,
        };
        let (ln, layout) = get("layout")?;
        let header = LogHeader {
            session_id: get("session_id")?.1.to_string(),
            phase: value(get("phase")?, "phase")?,
            cueing_enabled: value(get("cueing_enabled")?, "cueing_enabled")?,
            seed: value(get("seed")?, "seed")?,
            layout: ChannelLayout::from_header(layout).map_err(|e| parse_err(ln, e.to_string()))?,
            amplitude_ma,
        };
        let mut v = Validator::new(&header)?;
        let mut records = Vec::new();
        for (n, l) in lines {
            let rec: LogRecord = serde_json::from_str(l).map_err(|e| parse_err(n, e.to_string()))?;
            v.first_line = n - v.seen;
            v.accept(&rec)?;
            records.push(rec);
        }
        v.finish()?;
        Ok(Self { header, records })
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        fs::write(path, self.to_text()).map_err(|e| IoError::io(path, e))
    }
}

pub fn load_session_log(path: &Path) -> Result<SessionLog, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    SessionLog::parse(&text)
}
