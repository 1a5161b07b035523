//! The quality estimator: gradient-boosted regression trees that map a
//! trace's feature vector to a predicted edit similarity in `[0, 1]`.
//!
//! Training data comes from logged episodes labelled with the true ES of
//! each iteration ([`build_dataset`]). [`train`] is fully deterministic, so
//! two runs on the same data serialize to identical bytes.
//!
//! Anything that can score a trace implements [`Scorer`]; besides the
//! trained model there are [`OracleScorer`] (returns the true ES, for tests
//! and simulation) and [`ConstantScorer`].

mod gbdt;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{features_from_trace, FeatureError, FeatureSet, FeatureVector};
use crate::metrics;
use crate::trace::{CompletionSample, PredictionTrace, TraceRecord};

pub use gbdt::{Node, Tree};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("empty training set")]
    EmptyDataset,
    #[error("example {index}: label {label} outside [0, 1]")]
    LabelOutOfRange { index: usize, label: f64 },
    #[error("example {index}: feature set {found} differs from {expected}")]
    MixedFeatureSet {
        index: usize,
        expected: &'static str,
        found: &'static str,
    },
    #[error("feature vector has {found} entries, model expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("unsupported model format_version {0} (expected {FORMAT_VERSION})")]
    Version(u64),
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error("{path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub features: FeatureVector,
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub num_trees: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub min_samples_leaf: usize,
    pub max_depth: usize,
    /// Unused: training has no stochastic steps.
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            num_trees: 100,
            learning_rate: 0.1,
            max_leaves: 31,
            min_samples_leaf: 20,
            max_depth: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorModel {
    pub base_score: f64,
    pub learning_rate: f64,
    pub feature_set: FeatureSet,
    pub trees: Vec<Tree>,
}

/// Builds one labelled example per non-empty iteration.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub examples: Vec<TrainingExample>,
    /// Iterations dropped because the generation was empty.
    pub skipped_empty: usize,
}

pub fn build_dataset<'a, I>(records: I, feature_set: FeatureSet, truncate_lines: bool) -> Result<Dataset, EstimatorError>
where
    I: IntoIterator<Item = &'a TraceRecord>,
{
    let mut out = Dataset::default();
    for record in records {
        for it in &record.episode.iterations {
            if it.trace.is_empty() {
                out.skipped_empty += 1;
                continue;
            }
            out.examples.push(TrainingExample {
                features: features_from_trace(&it.trace, feature_set)?,
                label: metrics::score_target_with(&record.sample, &it.trace, truncate_lines),
            });
        }
    }
    Ok(out)
}

fn check_dataset(examples: &[TrainingExample]) -> Result<FeatureSet, EstimatorError> {
    let first = examples.first().ok_or(EstimatorError::EmptyDataset)?;
    let set = first.features.feature_set;
    for (index, ex) in examples.iter().enumerate() {
        if ex.features.feature_set != set {
            return Err(EstimatorError::MixedFeatureSet {
                index,
                expected: set.name(),
                found: ex.features.feature_set.name(),
            });
        }
        if ex.features.values.len() != set.dim() {
            return Err(EstimatorError::Dimension {
                expected: set.dim(),
                found: ex.features.values.len(),
            });
        }
        if !(ex.label.is_finite() && (0.0..=1.0).contains(&ex.label)) {
            return Err(EstimatorError::LabelOutOfRange { index, label: ex.label });
        }
    }
    Ok(set)
}

/// Result of [`train_with_history`]: the model plus raw (unclamped)
/// training MSE after 0, 1, ..., num_trees trees.
pub struct TrainOutcome {
    pub model: EstimatorModel,
    pub staged_mse: Vec<f64>,
}

pub fn train(examples: &[TrainingExample], params: &TrainParams) -> Result<EstimatorModel, EstimatorError> {
    Ok(train_with_history(examples, params)?.model)
}

pub fn train_with_history(examples: &[TrainingExample], params: &TrainParams) -> Result<TrainOutcome, EstimatorError> {
    gbdt::check_params(params)?;
    let feature_set = check_dataset(examples)?;
    let labels: Vec<f64> = examples.iter().map(|e| e.label).collect();
    let rows: Vec<&[f64]> = examples.iter().map(|e| e.features.values.as_slice()).collect();
    let columns = gbdt::Columns::new(&rows, feature_set.dim());

    let base_score = gbdt::stable_mean(&labels);
    let mut raw = vec![base_score; labels.len()];
    let mse = |raw: &[f64]| raw.iter().zip(&labels).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / labels.len() as f64;
    let mut staged_mse = vec![mse(&raw)];
    let mut trees = Vec::with_capacity(params.num_trees);
    let mut residual = vec![0.0; labels.len()];
    for _ in 0..params.num_trees {
        for ((r, y), p) in residual.iter_mut().zip(&labels).zip(&raw) {
            *r = y - p;
        }
        let (tree, per_row) = gbdt::grow_tree(&columns, &residual, params);
        for (p, v) in raw.iter_mut().zip(&per_row) {
            *p += params.learning_rate * v;
        }
        staged_mse.push(mse(&raw));
        trees.push(tree);
    }
    Ok(TrainOutcome {
        model: EstimatorModel {
            base_score,
            learning_rate: params.learning_rate,
            feature_set,
            trees,
        },
        staged_mse,
    })
}

impl EstimatorModel {
    /// Unclamped ensemble output.
    pub fn raw_score(&self, values: &[f64]) -> f64 {
        let mut score = self.base_score;
        for tree in &self.trees {
            score += self.learning_rate * tree.leaf_value(values);
        }
        score
    }

    pub fn predict(&self, z: &FeatureVector) -> Result<f64, EstimatorError> {
        if z.feature_set != self.feature_set {
            return Err(EstimatorError::MixedFeatureSet {
                index: 0,
                expected: self.feature_set.name(),
                found: z.feature_set.name(),
            });
        }
        if z.values.len() != self.feature_set.dim() {
            return Err(EstimatorError::Dimension {
                expected: self.feature_set.dim(),
                found: z.values.len(),
            });
        }
        Ok(self.raw_score(&z.values).clamp(0.0, 1.0))
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format_version: u64::from(FORMAT_VERSION),
            feature_set: self.feature_set,
            base_score: self.base_score,
            learning_rate: self.learning_rate,
            trees: self.trees.clone(),
        };
        serde_json::to_string(&file).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, EstimatorError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| EstimatorError::Malformed(e.to_string()))?;
        match value.get("format_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => return Err(EstimatorError::Version(v)),
            None => return Err(EstimatorError::Malformed("missing format_version".into())),
        }
        let file: ModelFile = serde_json::from_value(value).map_err(|e| EstimatorError::Malformed(e.to_string()))?;
        if !file.base_score.is_finite() || !(file.learning_rate > 0.0 && file.learning_rate <= 1.0) {
            return Err(EstimatorError::Malformed("invalid base_score or learning_rate".into()));
        }
        let dim = file.feature_set.dim();
        for (i, tree) in file.trees.iter().enumerate() {
            tree.validate(dim).map_err(|e| EstimatorError::Malformed(format!("tree {i}: {e}")))?;
        }
        Ok(Self {
            base_score: file.base_score,
            learning_rate: file.learning_rate,
            feature_set: file.feature_set,
            trees: file.trees,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u64,
    feature_set: FeatureSet,
    base_score: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
}

pub fn save_model(model: &EstimatorModel, path: &Path) -> Result<(), EstimatorError> {
    crate::io::write_string_atomic(path, &model.to_json()).map_err(|e| EstimatorError::Io {
        path: e.path,
        source: e.source,
    })
}

pub fn load_model(path: &Path) -> Result<EstimatorModel, EstimatorError> {
    let text = fs::read_to_string(path).map_err(|source| EstimatorError::Io {
        path: path.display().to_string(),
        source,
    })?;
    EstimatorModel::from_json(&text)
}

/// Mean squared error of clamped predictions against labels.
pub fn evaluate(model: &EstimatorModel, examples: &[TrainingExample]) -> Result<f64, EstimatorError> {
    if examples.is_empty() {
        return Err(EstimatorError::EmptyDataset);
    }
    let mut total = 0.0;
    for ex in examples {
        let d = model.predict(&ex.features)? - ex.label;
        total += d * d;
    }
    Ok(total / examples.len() as f64)
}

/// Anything that turns a generation into a predicted quality `ŝ ∈ [0, 1]`.
///
/// The sample is passed so that test doubles can look at the ground truth;
/// real estimators must ignore it.
pub trait Scorer: Send + Sync {
    fn score(&self, sample: &CompletionSample, trace: &PredictionTrace) -> Result<f64, EstimatorError>;

    /// Whether `score` may be called from several threads at once.
    fn supports_concurrency(&self) -> bool {
        true
    }
}

impl Scorer for EstimatorModel {
    fn score(&self, _sample: &CompletionSample, trace: &PredictionTrace) -> Result<f64, EstimatorError> {
        self.predict(&features_from_trace(trace, self.feature_set)?)
    }
}

/// Scores a trace with its true edit similarity.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleScorer {
    pub truncate_lines: bool,
}

impl Scorer for OracleScorer {
    fn score(&self, sample: &CompletionSample, trace: &PredictionTrace) -> Result<f64, EstimatorError> {
        Ok(metrics::score_target_with(sample, trace, self.truncate_lines))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer(pub f64);

impl Scorer for ConstantScorer {
    fn score(&self, _sample: &CompletionSample, _trace: &PredictionTrace) -> Result<f64, EstimatorError> {
        Ok(self.0.clamp(0.0, 1.0))
    }
}
