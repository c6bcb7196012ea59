//! Personalised Layer-1 wandering classifier: a bagged ensemble of CART trees
//! trained on calibration probe labels.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fast::{FastFeatureVector, FAST_FEATURE_COUNT};

pub const MODEL_MAGIC: &str = "CUELAB-MODEL-v1";
pub const DEFAULT_LABEL_WINDOW_MS: u64 = 2000;
pub const MIN_ROWS_PER_CLASS: usize = 30;
pub const CV_FOLDS: usize = 5;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("need {MIN_ROWS_PER_CLASS} rows per class, have {settled} settled and {wandering} wandering")]
    InsufficientLabels { settled: usize, wandering: usize },
    #[error("every feature column is constant")]
    DegenerateFeatures,
    #[error("feature vector failed quality checks")]
    BadFeatureVector,
    #[error("no rows to evaluate")]
    EmptyEvaluation,
    #[error("classifier rows must have exactly {expected} fast features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed model file: {0}")]
    ModelFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeResponse {
    Settled,
    Wandering,
    Unclear,
}

impl ProbeResponse {
    /// `Some(true)` for wandering, `None` for unclear.
    pub fn label(self) -> Option<bool> {
        match self {
            ProbeResponse::Settled => Some(false),
            ProbeResponse::Wandering => Some(true),
            ProbeResponse::Unclear => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeLabel {
    pub t_ms: u64,
    pub response: ProbeResponse,
}

/// Labelled fast-feature rows. Rows from one probe share a group so that
/// cross-validation never splits overlapping windows across folds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    rows: Vec<[f64; FAST_FEATURE_COUNT]>,
    labels: Vec<bool>,
    groups: Vec<usize>,
    pub sessions: Vec<String>,
    pub dropped_unclear: usize,
}

impl TrainingSet {
    /// Builds from raw rows; each row must have exactly the fast feature count.
    pub fn from_matrix(rows: Vec<Vec<f64>>, labels: Vec<bool>) -> Result<Self, ClassifierError> {
        let fixed = rows
            .into_iter()
            .map(|r| {
                <[f64; FAST_FEATURE_COUNT]>::try_from(r.as_slice()).map_err(|_| ClassifierError::DimensionMismatch {
                    expected: FAST_FEATURE_COUNT,
                    got: r.len(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        assert_eq!(fixed.len(), labels.len(), "one label per row");
        let groups = (0..fixed.len()).collect();
        let ts = Self {
            rows: fixed,
            labels,
            groups,
            ..Self::default()
        };
        ts.check()?;
        Ok(ts)
    }

    pub fn from_vectors(rows: &[(FastFeatureVector, bool)]) -> Result<Self, ClassifierError> {
        if rows.iter().any(|(v, _)| !v.quality_flag) {
            return Err(ClassifierError::BadFeatureVector);
        }
        let ts = Self {
            rows: rows.iter().map(|(v, _)| v.features()).collect(),
            labels: rows.iter().map(|r| r.1).collect(),
            groups: (0..rows.len()).collect(),
            ..Self::default()
        };
        ts.check()?;
        Ok(ts)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[[f64; FAST_FEATURE_COUNT]] {
        &self.rows
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let w = self.labels.iter().filter(|&&l| l).count();
        (self.labels.len() - w, w)
    }

    /// Appends another session's rows, keeping probe groups distinct.
    pub fn extend(&mut self, other: TrainingSet) {
        let offset = self.groups.iter().max().map_or(0, |g| g + 1);
        self.rows.extend(other.rows);
        self.labels.extend(other.labels);
        self.groups.extend(other.groups.into_iter().map(|g| g + offset));
        self.sessions.extend(other.sessions);
        self.dropped_unclear += other.dropped_unclear;
    }

    /// Same rows with labels shuffled across probe groups.
    pub fn permuted(&self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels = self.labels.clone();
        labels.shuffle(&mut rng);
        Self {
            labels,
            ..self.clone()
        }
    }

    /// Drops whole probe groups of the majority class, in seeded order, until
    /// both classes hold about the same number of rows.
    pub fn balanced(&self, seed: u64) -> Self {
        let (settled, wandering) = self.class_counts();
        let majority = settled < wandering;
        let target = settled.min(wandering);
        let mut groups: Vec<usize> = (0..self.len())
            .filter(|&i| self.labels[i] == majority)
            .map(|i| self.groups[i])
            .collect();
        groups.sort_unstable();
        groups.dedup();
        groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut keep = std::collections::BTreeSet::new();
        let mut rows = 0;
        for g in groups {
            if rows >= target {
                break;
            }
            rows += self.groups.iter().filter(|&&x| x == g).count();
            keep.insert(g);
        }
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.labels[i] != majority || keep.contains(&self.groups[i]))
            .collect();
        Self {
            sessions: self.sessions.clone(),
            dropped_unclear: self.dropped_unclear,
            ..self.subset(&idx)
        }
    }

    pub fn check(&self) -> Result<(), ClassifierError> {
        let (settled, wandering) = self.class_counts();
        if settled < MIN_ROWS_PER_CLASS || wandering < MIN_ROWS_PER_CLASS {
            return Err(ClassifierError::InsufficientLabels { settled, wandering });
        }
        Ok(())
    }

    fn subset(&self, idx: &[usize]) -> Self {
        Self {
            rows: idx.iter().map(|&i| self.rows[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            groups: idx.iter().map(|&i| self.groups[i]).collect(),
            ..Self::default()
        }
    }
}

/// Labels every usable fast window whose end falls in `[t - label_window_ms, t]`.
pub fn build_training_set(
    probes: &[ProbeLabel],
    features: &[FastFeatureVector],
    label_window_ms: u64,
) -> Result<TrainingSet, ClassifierError> {
    let ts = label_session("", probes, features, label_window_ms);
    ts.check()?;
    Ok(ts)
}

/// One session's labelled rows without the per-class minimum, for pooling
/// several sessions with [`TrainingSet::extend`].
pub fn label_session(
    session_id: &str,
    probes: &[ProbeLabel],
    features: &[FastFeatureVector],
    label_window_ms: u64,
) -> TrainingSet {
    let mut ts = TrainingSet::default();
    if !session_id.is_empty() {
        ts.sessions.push(session_id.to_string());
    }
    for (group, probe) in probes.iter().enumerate() {
        let Some(label) = probe.response.label() else {
            ts.dropped_unclear += 1;
            continue;
        };
        let lo = probe.t_ms.saturating_sub(label_window_ms);
        let before = ts.rows.len();
        for v in features
            .iter()
            .filter(|v| v.quality_flag && v.t_ms >= lo && v.t_ms <= probe.t_ms)
        {
            ts.rows.push(v.features());
            ts.labels.push(label);
            ts.groups.push(group);
        }
        if ts.rows.len() == before {
            log::warn!("probe at {} ms matched no feature windows", probe.t_ms);
        }
    }
    ts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 8,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
enum Node {
    Leaf { p: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64; FAST_FEATURE_COUNT]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { p } => return p,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

struct Grower<'a> {
    rows: &'a [[f64; FAST_FEATURE_COUNT]],
    labels: &'a [bool],
    active: &'a [usize],
    mtry: usize,
    cfg: ForestConfig,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    /// `samples` holds (row index, weight) pairs.
    fn grow(&mut self, samples: &mut [(usize, f64)], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let (w_total, w_pos) = samples.iter().fold((0.0, 0.0), |(t, p), &(i, w)| {
            (t + w, if self.labels[i] { p + w } else { p })
        });
        let p = if w_total > 0.0 { w_pos / w_total } else { 0.5 };
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { p });
        if depth >= self.cfg.max_depth || samples.len() < self.cfg.min_samples_split || p == 0.0 || p == 1.0 {
            return id;
        }
        let mut candidates = self.active.to_vec();
        candidates.shuffle(rng);
        candidates.truncate(self.mtry);
        candidates.sort_unstable();

        let parent_gini = 1.0 - p * p - (1.0 - p) * (1.0 - p);
        let mut best: Option<(f64, usize, f64)> = None;
        for &f in &candidates {
            samples.sort_by(|a, b| self.rows[a.0][f].total_cmp(&self.rows[b.0][f]).then(a.0.cmp(&b.0)));
            let (mut lw, mut lp) = (0.0, 0.0);
            for k in 0..samples.len() - 1 {
                let (i, w) = samples[k];
                lw += w;
                if self.labels[i] {
                    lp += w;
                }
                let (a, b) = (self.rows[i][f], self.rows[samples[k + 1].0][f]);
                if a == b {
                    continue;
                }
                let (rw, rp) = (w_total - lw, w_pos - lp);
                if lw <= 0.0 || rw <= 0.0 {
                    continue;
                }
                let gini = |n: f64, pos: f64| {
                    let q = pos / n;
                    1.0 - q * q - (1.0 - q) * (1.0 - q)
                };
                let impurity = (lw * gini(lw, lp) + rw * gini(rw, rp)) / w_total;
                if best.is_none_or(|(g, _, _)| impurity < g) {
                    best = Some((impurity, f, 0.5 * (a + b)));
                }
            }
        }
        let Some((impurity, feature, threshold)) = best else {
            return id;
        };
        if impurity >= parent_gini - 1e-12 {
            return id;
        }
        let mid = partition(samples, |&(i, _)| self.rows[i][feature] <= threshold);
        let (l, r) = samples.split_at_mut(mid);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

fn partition<T>(v: &mut [T], pred: impl Fn(&T) -> bool) -> usize {
    let mut k = 0;
    for j in 0..v.len() {
        if pred(&v[j]) {
            v.swap(k, j);
            k += 1;
        }
    }
    k
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WanderingModel {
    pub user_id: String,
    pub seed: u64,
    pub config: ForestConfig,
    /// Columns that varied in training; the rest are ignored.
    pub active_features: Vec<usize>,
    pub feature_means: [f64; FAST_FEATURE_COUNT],
    /// Weights applied to (settled, wandering) rows.
    pub class_weights: [f64; 2],
    pub training_rows: usize,
    pub cv_accuracy: Option<f64>,
    trees: Vec<Tree>,
}

fn fit(ts: &TrainingSet, seed: u64, cfg: ForestConfig) -> Result<WanderingModel, ClassifierError> {
    let n = ts.len();
    let mut means = [0.0; FAST_FEATURE_COUNT];
    for (f, m) in means.iter_mut().enumerate() {
        let vals: Vec<f64> = ts.rows.iter().map(|r| r[f]).filter(|v| v.is_finite()).collect();
        *m = if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        };
    }
    let rows: Vec<[f64; FAST_FEATURE_COUNT]> = ts
        .rows
        .iter()
        .map(|r| impute(r, &means))
        .collect();
    let active: Vec<usize> = (0..FAST_FEATURE_COUNT)
        .filter(|&f| rows.iter().any(|r| r[f] != rows[0][f]))
        .collect();
    if active.is_empty() {
        return Err(ClassifierError::DegenerateFeatures);
    }
    for f in (0..FAST_FEATURE_COUNT).filter(|f| !active.contains(f)) {
        log::warn!("feature column {f} is constant; dropped");
    }
    let (settled, wandering) = ts.class_counts();
    let class_weights = [
        n as f64 / (2.0 * settled.max(1) as f64),
        n as f64 / (2.0 * wandering.max(1) as f64),
    ];
    let mtry = ((active.len() as f64).sqrt().floor() as usize).max(1);
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64 + 1);
            let mut counts = vec![0u32; n];
            for _ in 0..n {
                counts[rng.random_range(0..n)] += 1;
            }
            let mut samples: Vec<(usize, f64)> = counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| (i, c as f64 * class_weights[usize::from(ts.labels[i])]))
                .collect();
            let mut g = Grower {
                rows: &rows,
                labels: &ts.labels,
                active: &active,
                mtry,
                cfg,
                nodes: Vec::new(),
            };
            g.grow(&mut samples, 0, &mut rng);
            Tree { nodes: g.nodes }
        })
        .collect();
    Ok(WanderingModel {
        user_id: String::new(),
        seed,
        config: cfg,
        active_features: active,
        feature_means: means,
        class_weights,
        training_rows: n,
        cv_accuracy: None,
        trees,
    })
}

fn impute(r: &[f64; FAST_FEATURE_COUNT], means: &[f64; FAST_FEATURE_COUNT]) -> [f64; FAST_FEATURE_COUNT] {
    std::array::from_fn(|f| if r[f].is_finite() { r[f] } else { means[f] })
}

/// Trains with default ensemble settings and records the 5-fold CV accuracy.
pub fn train(ts: &TrainingSet, seed: u64) -> Result<WanderingModel, ClassifierError> {
    train_with(ts, seed, ForestConfig::default())
}

pub fn train_with(ts: &TrainingSet, seed: u64, cfg: ForestConfig) -> Result<WanderingModel, ClassifierError> {
    ts.check()?;
    let mut model = fit(ts, seed, cfg)?;
    model.cv_accuracy = Some(cross_validate(ts, seed, cfg, CV_FOLDS)?);
    Ok(model)
}

/// Grouped k-fold accuracy: whole probe groups are assigned to folds.
pub fn cross_validate(ts: &TrainingSet, seed: u64, cfg: ForestConfig, folds: usize) -> Result<f64, ClassifierError> {
    let mut groups: Vec<usize> = ts.groups.clone();
    groups.sort_unstable();
    groups.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_cafe);
    groups.shuffle(&mut rng);
    let folds = folds.min(groups.len()).max(2);
    let fold_of = |g: usize| groups.iter().position(|&x| x == g).unwrap() % folds;
    let assignment: Vec<usize> = ts.groups.iter().map(|&g| fold_of(g)).collect();
    let mut correct = 0usize;
    let mut total = 0usize;
    for k in 0..folds {
        let train_idx: Vec<usize> = (0..ts.len()).filter(|&i| assignment[i] != k).collect();
        let test_idx: Vec<usize> = (0..ts.len()).filter(|&i| assignment[i] == k).collect();
        if test_idx.is_empty() {
            continue;
        }
        let sub = ts.subset(&train_idx);
        let (s, w) = sub.class_counts();
        if s == 0 || w == 0 {
            continue;
        }
        let model = match fit(&sub, seed.wrapping_add(k as u64 + 1), cfg) {
            Ok(m) => m,
            Err(ClassifierError::DegenerateFeatures) => continue,
            Err(e) => return Err(e),
        };
        for &i in &test_idx {
            let p = model.predict_row(&ts.rows[i]);
            correct += usize::from((p >= 0.5) == ts.labels[i]);
            total += 1;
        }
    }
    if total == 0 {
        return Err(ClassifierError::EmptyEvaluation);
    }
    Ok(correct as f64 / total as f64)
}

impl WanderingModel {
    pub fn with_user(mut self, user_id: impl Into<String>) -> Self {
        self.user_id = user_id.into();
        self
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Mean leaf wandering probability across trees.
    pub fn predict_row(&self, x: &[f64; FAST_FEATURE_COUNT]) -> f64 {
        let x = impute(x, &self.feature_means);
        let sum: f64 = self.trees.iter().map(|t| t.predict(&x)).sum();
        (sum / self.trees.len().max(1) as f64).clamp(0.0, 1.0)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("{MODEL_MAGIC}\n").into_bytes();
        out.extend(serde_json::to_vec(self).expect("model serializes"));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ClassifierError> {
        let header = format!("{MODEL_MAGIC}\n");
        let body = bytes
            .strip_prefix(header.as_bytes())
            .ok_or_else(|| ClassifierError::ModelFormat(format!("missing {MODEL_MAGIC} header")))?;
        serde_json::from_slice(body).map_err(|e| ClassifierError::ModelFormat(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Wandering probability for one window.
pub fn predict(model: &WanderingModel, fv: &FastFeatureVector) -> Result<f64, ClassifierError> {
    if !fv.quality_flag {
        return Err(ClassifierError::BadFeatureVector);
    }
    Ok(model.predict_row(&fv.features()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldoutMetrics {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

/// Confusion-matrix rates with wandering as the positive class.
pub fn confusion_rates(predicted: &[bool], actual: &[bool]) -> Result<HoldoutMetrics, ClassifierError> {
    if predicted.is_empty() || predicted.len() != actual.len() {
        return Err(ClassifierError::EmptyEvaluation);
    }
    let (mut tp, mut tn, mut pos, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &a) in predicted.iter().zip(actual) {
        if a {
            pos += 1;
            tp += usize::from(p);
        } else {
            neg += 1;
            tn += usize::from(!p);
        }
    }
    if pos == 0 || neg == 0 {
        return Err(ClassifierError::EmptyEvaluation);
    }
    Ok(HoldoutMetrics {
        accuracy: (tp + tn) as f64 / predicted.len() as f64,
        sensitivity: tp as f64 / pos as f64,
        specificity: tn as f64 / neg as f64,
    })
}

pub fn evaluate_holdout(
    model: &WanderingModel,
    rows: &[(FastFeatureVector, bool)],
) -> Result<HoldoutMetrics, ClassifierError> {
    let usable: Vec<_> = rows.iter().filter(|(v, _)| v.quality_flag).collect();
    let predicted: Vec<bool> = usable.iter().map(|(v, _)| model.predict_row(&v.features()) >= 0.5).collect();
    let actual: Vec<bool> = usable.iter().map(|r| r.1).collect();
    confusion_rates(&predicted, &actual)
}
