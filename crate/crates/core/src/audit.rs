//! Measurability tiers and the four-criterion device audit.
//!
//! A [`TierRegistry`] maps target names to tiers. A [`DeviceDescriptor`]
//! carries just enough about a device to decide each criterion mechanically:
//! single Tier-1 target, negative-only feedback, EEG-only fast layer and a
//! device-absent transfer outcome.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::StreamId;

const CANONICAL_TIERS: &str = include_str!("../data/tiers.toml");
const CANONICAL_DEVICES: &str = include_str!("../data/devices.toml");

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("device '{device}' is missing {missing}")]
    IncompleteDescriptor { device: String, missing: String },
    #[error("audit table needs at least one device")]
    EmptyDeviceList,
    #[error("malformed descriptor file: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    T1,
    T2,
    T3,
    T4,
    #[serde(rename = "T_unknown")]
    Unknown,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::T1 => "T1",
            Tier::T2 => "T2",
            Tier::T3 => "T3",
            Tier::T4 => "T4",
            Tier::Unknown => "T_unknown",
        }
    }

    /// Claims at this tier cannot be backed by any current sensor.
    pub fn is_misrepresentation(self) -> bool {
        matches!(self, Tier::T3 | Tier::T4)
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetDescriptor {
    pub name: String,
    pub tier: Tier,
    pub evidence_note: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryEntry {
    name: String,
    #[serde(default)]
    aliases: Vec<String>,
    tier: Tier,
    #[serde(default)]
    evidence_note: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    #[serde(default)]
    target: Vec<RegistryEntry>,
}

/// Lower case, periods dropped, hyphens and runs of whitespace folded to one space.
fn normalize(name: &str) -> String {
    name.to_lowercase()
        .replace('.', "")
        .replace('-', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Default)]
pub struct TierRegistry {
    entries: Vec<(Vec<String>, TargetDescriptor)>,
}

impl TierRegistry {
    /// The registry shipped with the crate.
    pub fn canonical() -> &'static TierRegistry {
        static REGISTRY: OnceLock<TierRegistry> = OnceLock::new();
        REGISTRY.get_or_init(|| TierRegistry::from_toml(CANONICAL_TIERS).expect("shipped tier registry parses"))
    }

    pub fn from_toml(text: &str) -> Result<Self, AuditError> {
        let file: RegistryFile = toml::from_str(text).map_err(|e| AuditError::Parse(e.to_string()))?;
        let mut reg = TierRegistry::default();
        for e in file.target {
            reg.insert_with_aliases(
                TargetDescriptor {
                    name: e.name,
                    tier: e.tier,
                    evidence_note: e.evidence_note,
                },
                &e.aliases,
            );
        }
        Ok(reg)
    }

    pub fn insert(&mut self, target: TargetDescriptor) {
        self.insert_with_aliases(target, &[]);
    }

    fn insert_with_aliases(&mut self, target: TargetDescriptor, aliases: &[String]) {
        let mut keys = vec![normalize(&target.name)];
        keys.extend(aliases.iter().map(|a| normalize(a)));
        self.entries.retain(|(k, _)| !k.iter().any(|x| keys.contains(x)));
        self.entries.push((keys, target));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn targets(&self) -> impl Iterator<Item = &TargetDescriptor> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn lookup(&self, name: &str) -> Option<&TargetDescriptor> {
        let key = normalize(name);
        self.entries.iter().find(|(k, _)| k.contains(&key)).map(|(_, t)| t)
    }

    /// Registry tier, or `T_unknown` with a logged warning.
    pub fn classify(&self, name: &str) -> Tier {
        self.resolve(name).tier
    }

    /// The registered descriptor, or an unknown-tier one for unregistered names.
    pub fn resolve(&self, name: &str) -> TargetDescriptor {
        match self.lookup(name) {
            Some(t) => t.clone(),
            None => {
                log::warn!("target '{name}' is not in the tier registry");
                TargetDescriptor {
                    name: name.to_string(),
                    tier: Tier::Unknown,
                    evidence_note: "not in registry".to_string(),
                }
            }
        }
    }
}

/// Tier of `name` in the canonical registry.
pub fn classify_tier(name: &str) -> Tier {
    TierRegistry::canonical().classify(name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackPolarity {
    PositiveReward,
    NegativeOnly,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceDescriptor {
    pub name: String,
    pub targets: Vec<TargetDescriptor>,
    pub feedback_polarity: FeedbackPolarity,
    pub layer1_inputs: Vec<StreamId>,
    pub transfer_outcome_primary: bool,
    /// Set-up differs by site or practitioner.
    pub configurable: bool,
    /// Outcomes promised in marketing, separate from what is sensed.
    pub marketed_outcomes: Vec<TargetDescriptor>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceEntry {
    name: Option<String>,
    targets: Option<Vec<String>>,
    feedback_polarity: Option<FeedbackPolarity>,
    layer1_inputs: Option<Vec<StreamId>>,
    transfer_outcome_primary: Option<bool>,
    #[serde(default)]
    configurable: bool,
    #[serde(default)]
    marketed_outcomes: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceFile {
    #[serde(default)]
    device: Vec<DeviceEntry>,
}

fn required<T>(v: Option<T>, device: &str, key: &str) -> Result<T, AuditError> {
    v.ok_or_else(|| AuditError::IncompleteDescriptor {
        device: device.to_string(),
        missing: key.to_string(),
    })
}

/// Parses `[[device]]` tables, resolving target names against `registry`.
pub fn parse_devices(text: &str, registry: &TierRegistry) -> Result<Vec<DeviceDescriptor>, AuditError> {
    let file: DeviceFile = toml::from_str(text).map_err(|e| AuditError::Parse(e.to_string()))?;
    file.device
        .into_iter()
        .enumerate()
        .map(|(i, e)| {
            let name = required(e.name, &format!("#{}", i + 1), "name")?;
            Ok(DeviceDescriptor {
                targets: required(e.targets, &name, "targets")?
                    .iter()
                    .map(|t| registry.resolve(t))
                    .collect(),
                feedback_polarity: required(e.feedback_polarity, &name, "feedback_polarity")?,
                layer1_inputs: required(e.layer1_inputs, &name, "layer1_inputs")?,
                transfer_outcome_primary: required(e.transfer_outcome_primary, &name, "transfer_outcome_primary")?,
                configurable: e.configurable,
                marketed_outcomes: e.marketed_outcomes.iter().map(|t| registry.resolve(t)).collect(),
                name,
            })
        })
        .collect()
}

pub fn load_devices(path: &Path, registry: &TierRegistry) -> Result<Vec<DeviceDescriptor>, AuditError> {
    let text = fs::read_to_string(path).map_err(|source| AuditError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_devices(&text, registry)
}

/// The six reference systems: five existing products and the proposed design.
pub fn canonical_devices() -> Vec<DeviceDescriptor> {
    parse_devices(CANONICAL_DEVICES, TierRegistry::canonical()).expect("shipped device file parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellNote {
    NotApplicable,
    Partial,
    Rarely,
}

/// One criterion for one device. Annotated cells still count as unmet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Criterion {
    pub met: bool,
    pub note: Option<CellNote>,
}

impl Criterion {
    fn new(met: bool, note: Option<CellNote>) -> Self {
        Self {
            met,
            note: if met { None } else { note },
        }
    }

    fn not_applicable() -> Self {
        Self::new(false, Some(CellNote::NotApplicable))
    }

    pub fn cell(&self) -> &'static str {
        match (self.met, self.note) {
            (true, _) => "Yes",
            (false, Some(CellNote::NotApplicable)) => "N/A",
            (false, Some(CellNote::Partial)) => "Partial",
            (false, Some(CellNote::Rarely)) => "Rarely",
            (false, None) => "No",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum AuditWarning {
    UnknownTarget { device: String, target: String },
    Misrepresentation { device: String, target: String, tier: Tier },
}

impl fmt::Display for AuditWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuditWarning::UnknownTarget { device, target } => {
                write!(f, "warning: {device}: target '{target}' has no registered tier")
            }
            AuditWarning::Misrepresentation { device, target, tier } => write!(
                f,
                "warning: {device}: '{target}' is a {tier} claim; marketing it is a misrepresentation of the evidence"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceAudit {
    pub device: String,
    pub single_target: Criterion,
    pub negative_only: Criterion,
    pub layer_separation: Criterion,
    pub transfer_primary: Criterion,
    pub verdict: bool,
    pub warnings: Vec<AuditWarning>,
}

impl DeviceAudit {
    /// Single target, negative-only, layer separation, transfer primary.
    pub fn criteria(&self) -> [Criterion; 4] {
        [
            self.single_target,
            self.negative_only,
            self.layer_separation,
            self.transfer_primary,
        ]
    }

    pub fn booleans(&self) -> [bool; 4] {
        self.criteria().map(|c| c.met)
    }

    pub fn cells(&self) -> [&'static str; 4] {
        self.criteria().map(|c| c.cell())
    }
}

pub fn audit_device(dev: &DeviceDescriptor) -> Result<DeviceAudit, AuditError> {
    let incomplete = |missing: &str| AuditError::IncompleteDescriptor {
        device: dev.name.clone(),
        missing: missing.to_string(),
    };
    if dev.name.trim().is_empty() {
        return Err(incomplete("name"));
    }
    let intervenes = dev.feedback_polarity != FeedbackPolarity::None;
    if intervenes && dev.targets.is_empty() {
        return Err(incomplete("targets"));
    }
    if intervenes && dev.layer1_inputs.is_empty() {
        return Err(incomplete("layer1_inputs"));
    }

    let mut warnings = Vec::new();
    for t in dev.targets.iter().chain(&dev.marketed_outcomes) {
        if t.tier == Tier::Unknown {
            warnings.push(AuditWarning::UnknownTarget {
                device: dev.name.clone(),
                target: t.name.clone(),
            });
        }
    }
    for t in &dev.marketed_outcomes {
        if t.tier.is_misrepresentation() {
            warnings.push(AuditWarning::Misrepresentation {
                device: dev.name.clone(),
                target: t.name.clone(),
                tier: t.tier,
            });
        }
    }

    let (single_target, negative_only, layer_separation, transfer_primary) = if !intervenes {
        let na = Criterion::not_applicable();
        (na, na, na, na)
    } else {
        let rarely = dev.configurable.then_some(CellNote::Rarely);
        let single = match dev.targets.as_slice() {
            [t] => Criterion::new(t.tier == Tier::T1, (t.tier == Tier::T2).then_some(CellNote::Partial)),
            _ => Criterion::new(false, None),
        };
        let layer = if dev.layer1_inputs.contains(&StreamId::Eeg) {
            Criterion::new(dev.layer1_inputs.iter().all(|s| *s == StreamId::Eeg), rarely)
        } else {
            Criterion::not_applicable()
        };
        (
            single,
            Criterion::new(dev.feedback_polarity == FeedbackPolarity::NegativeOnly, None),
            layer,
            Criterion::new(dev.transfer_outcome_primary, rarely),
        )
    };
    let mut audit = DeviceAudit {
        device: dev.name.clone(),
        single_target,
        negative_only,
        layer_separation,
        transfer_primary,
        verdict: false,
        warnings,
    };
    audit.verdict = audit.booleans().iter().all(|&b| b);
    Ok(audit)
}

pub const TABLE_COLUMNS: [&str; 6] = [
    "System",
    "Single measurable target",
    "Negative-only feedback",
    "Layer separation",
    "Transfer test",
    "Verdict",
];

/// Fixed-width text table, one row per device in input order.
pub fn render_audit_table(devs: &[DeviceDescriptor]) -> Result<String, AuditError> {
    if devs.is_empty() {
        return Err(AuditError::EmptyDeviceList);
    }
    let audits = devs.iter().map(audit_device).collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<[String; 6]> = audits
        .iter()
        .map(|a| {
            let c = a.cells();
            [
                a.device.clone(),
                c[0].to_string(),
                c[1].to_string(),
                c[2].to_string(),
                c[3].to_string(),
                if a.verdict { "PASS" } else { "FAIL" }.to_string(),
            ]
        })
        .collect();
    let mut widths = TABLE_COLUMNS.map(str::len);
    for r in &rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: [&str; 6]| {
        let padded: Vec<String> = cells.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join(" | ").trim_end().to_string() + "\n"
    };
    let mut out = line(TABLE_COLUMNS);
    out += &(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-") + "\n");
    for r in &rows {
        out += &line([&r[0], &r[1], &r[2], &r[3], &r[4], &r[5]]);
    }
    for w in audits.iter().flat_map(|a| &a.warnings) {
        out += &format!("{w}\n");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_folds_punctuation() {
        let reg = TierRegistry::canonical();
        assert_eq!(reg.classify("Equanimity vs. suppression"), Tier::T3);
        assert_eq!(reg.classify("mind wandering  onset"), Tier::T1);
        assert_eq!(reg.classify("FM-theta"), Tier::T2);
        assert_eq!(reg.classify("telepathy"), Tier::Unknown);
    }

    #[test]
    fn missing_key_is_incomplete() {
        let text = "[[device]]\nname = \"x\"\ntargets = []\n";
        let err = parse_devices(text, TierRegistry::canonical()).unwrap_err();
        assert!(matches!(err, AuditError::IncompleteDescriptor { ref missing, .. } if missing == "feedback_polarity"));
    }
}
