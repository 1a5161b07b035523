//! Retrieval gating, pairwise acceptance and the best-prediction recurrence.

use serde::{Deserialize, Serialize};

pub const DEFAULT_EPSILON: f64 = 1e-8;

/// A `t_rag` value above every possible score: retrieval is unconditional.
pub const ALWAYS_RETRIEVE: f64 = 2.0;

/// Per-iteration thresholds. `t_rag[i]` gates the retrieval that follows
/// generation `i`; `t_acc[j]` is used when a later prediction is compared
/// against predecessor `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSchedule {
    pub t_rag: Vec<f64>,
    pub t_acc: Vec<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl ThresholdSchedule {
    /// Line and API level completion.
    pub fn line_level() -> Self {
        Self {
            t_rag: vec![0.9, 0.8, 0.7, 0.6],
            t_acc: vec![0.8, 0.9, 0.95, 0.99],
            epsilon: DEFAULT_EPSILON,
        }
    }

    /// Function level completion.
    pub fn function_level() -> Self {
        Self {
            t_rag: vec![0.65, 0.45, 0.3, 0.25],
            t_acc: vec![0.9, 0.9, 0.95, 0.99],
            epsilon: DEFAULT_EPSILON,
        }
    }

    /// Same threshold at every iteration.
    pub fn uniform(t_rag: f64, t_acc: f64, len: usize) -> Self {
        Self {
            t_rag: vec![t_rag; len],
            t_acc: vec![t_acc; len],
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.t_rag.is_empty() || self.t_acc.is_empty() {
            return Err("t_rag and t_acc must be nonempty".into());
        }
        if self.t_rag.iter().any(|t| t.is_nan()) {
            return Err("t_rag contains NaN".into());
        }
        // 0 is admitted: it is the sweep control and means "always take the later prediction".
        if let Some(t) = self.t_acc.iter().find(|t| !(**t >= 0.0)) {
            return Err(format!("t_acc entries must be >= 0, got {t}"));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(format!("epsilon must be nonnegative, got {}", self.epsilon));
        }
        Ok(())
    }

    /// `t_rag` for iteration `i`; the last entry repeats past the end.
    pub fn t_rag_at(&self, i: usize) -> f64 {
        self.t_rag.get(i).or(self.t_rag.last()).copied().unwrap_or(0.0)
    }

    /// `t_acc` for predecessor `j`; the last entry repeats past the end.
    pub fn t_acc_at(&self, j: usize) -> f64 {
        self.t_acc.get(j).or(self.t_acc.last()).copied().unwrap_or(1.0)
    }

    /// Copy whose first retrieval is unconditional.
    pub fn with_unconditional_first(&self) -> Self {
        let mut s = self.clone();
        match s.t_rag.first_mut() {
            Some(first) => *first = ALWAYS_RETRIEVE,
            None => s.t_rag.push(ALWAYS_RETRIEVE),
        }
        s
    }
}

/// Predicted scores of every generation in an episode, in order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreLog(pub Vec<f64>);

/// Retrieve (again) iff the predicted score is below the threshold.
pub fn is_retrieve(s_hat: f64, t_rag: f64) -> bool {
    s_hat < t_rag
}

/// True keeps the earlier prediction `i` over the later `j`.
pub fn select(s_i: f64, s_j: f64, t_acc: f64, epsilon: f64) -> bool {
    s_j / (s_i + epsilon) < t_acc
}

/// Index of the prediction to return, via the BestY recurrence: each
/// prediction inherits the pick of the nearest predecessor it loses to.
pub fn resolve_best(scores: &ScoreLog, schedule: &ThresholdSchedule) -> usize {
    resolve_best_from(scores, schedule, 0)
}

/// [`resolve_best`] restricted to predictions `start..`.
pub fn resolve_best_from(scores: &ScoreLog, schedule: &ThresholdSchedule, start: usize) -> usize {
    let s = &scores.0;
    assert!(start < s.len(), "resolve_best needs at least one candidate score");
    let mut best: Vec<usize> = Vec::with_capacity(s.len());
    for i in start..s.len() {
        let mut pick = i;
        for j in (start..i).rev() {
            if select(s[j], s[i], schedule.t_acc_at(j), schedule.epsilon) {
                pick = best[j - start];
                break;
            }
        }
        best.push(pick);
    }
    *best.last().expect("nonempty")
}
