//! Uncertainty-gated retrieval for repository-level code completion.
//!
//! An estimator predicts the edit similarity of a completion from its token
//! probabilities and entropies. The orchestrator uses that prediction to skip
//! retrievals that are unlikely to help and to fall back to an earlier
//! completion when a retrieval made things worse.

pub mod cli;
pub mod estimator;
pub mod features;
pub mod io;
pub mod metrics;
pub mod orchestrator;
pub mod policy;
pub mod simkit;
pub mod trace;

pub use estimator::{EstimatorModel, Scorer, TrainParams};
pub use features::{extract_features, FeatureSet, FeatureVector};
pub use metrics::{edit_similarity, exact_match, levenshtein};
pub use orchestrator::{run_benchmark, run_episode, BenchmarkReport, Generator, Retriever, RunConfig};
pub use policy::{is_retrieve, resolve_best, select, ThresholdSchedule};
pub use trace::{CompletionSample, PredictionTrace, TraceRecord};
