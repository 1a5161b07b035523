//! Per-step probability/entropy and the statistical feature vector built from them.
//!
//! The full vector has 13 entries:
//!
//! | idx | feature | idx | feature |
//! |-----|---------|-----|---------|
//! | 0   | p max   | 6   | H max   |
//! | 1   | p min   | 7   | H min   |
//! | 2   | p avg   | 8   | H avg   |
//! | 3   | p std   | 9   | H std   |
//! | 4   | p prod  | 10  | H prod  |
//! | 5   | p geo   | 11  | H geo   |
//! |     |         | 12  | len     |
//!
//! `p` is the probability of the emitted token at each step, `H` the entropy
//! (nats) of the step's distribution. Reduced sets keep one half plus `len`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{PredictionTrace, StepDistribution};

pub const FULL_DIM: usize = 13;
pub const REDUCED_DIM: usize = 7;

/// Index of the mean chosen-token probability in a full or probability-only vector.
pub const P_AVG: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("empty generation: no steps to summarize")]
    Empty,
    #[error("logits row needs at least 2 entries, got {0}")]
    TooFewLogits(usize),
    #[error("chosen index {index} out of range for {len} logits")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("non-finite logit")]
    NonFinite,
    #[error("{probs} probabilities but {entropies} entropies")]
    LengthMismatch { probs: usize, entropies: usize },
    #[error("probability {0} outside (0, 1]")]
    BadProbability(f64),
    #[error("entropy {0} is negative or non-finite")]
    BadEntropy(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    #[default]
    Full,
    /// Probability statistics and length only.
    Prob,
    /// Entropy statistics and length only.
    Entropy,
}

impl FeatureSet {
    pub fn dim(self) -> usize {
        match self {
            FeatureSet::Full => FULL_DIM,
            FeatureSet::Prob | FeatureSet::Entropy => REDUCED_DIM,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::Full => "full",
            FeatureSet::Prob => "prob",
            FeatureSet::Entropy => "entropy",
        }
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(FeatureSet::Full),
            "prob" => Ok(FeatureSet::Prob),
            "entropy" => Ok(FeatureSet::Entropy),
            other => Err(format!("unknown feature set {other:?} (expected full, prob or entropy)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub feature_set: FeatureSet,
}

impl FeatureVector {
    pub fn len_feature(&self) -> f64 {
        *self.values.last().expect("feature vectors are never empty")
    }
}

fn check_row(logits: &[f64]) -> Result<f64, FeatureError> {
    if logits.len() < 2 {
        return Err(FeatureError::TooFewLogits(logits.len()));
    }
    let mut max = f64::NEG_INFINITY;
    for &l in logits {
        if !l.is_finite() {
            return Err(FeatureError::NonFinite);
        }
        max = max.max(l);
    }
    Ok(max)
}

/// Softmax probability of `chosen`, with the row maximum subtracted first.
pub fn softmax_probability(logits: &[f64], chosen: usize) -> Result<f64, FeatureError> {
    let max = check_row(logits)?;
    if chosen >= logits.len() {
        return Err(FeatureError::IndexOutOfRange {
            index: chosen,
            len: logits.len(),
        });
    }
    let denom: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
    Ok(((logits[chosen] - max).exp() / denom).min(1.0))
}

/// Shannon entropy in nats of the softmax distribution over `logits`.
///
/// Uses `H = ln Z - Σ e^{l-m} (l-m) / Z` with `Z = Σ e^{l-m}`, which never
/// evaluates `0 · ln 0`.
pub fn step_entropy(logits: &[f64]) -> Result<f64, FeatureError> {
    let max = check_row(logits)?;
    let mut z = 0.0;
    let mut weighted = 0.0;
    for &l in logits {
        let d = l - max;
        let e = d.exp();
        z += e;
        weighted += e * d;
    }
    let h = z.ln() - weighted / z;
    Ok(h.clamp(0.0, (logits.len() as f64).ln()))
}

/// exp(x) with overflow clamped to the largest finite value.
fn exp_clamped(x: f64) -> f64 {
    let v = x.exp();
    if v.is_infinite() {
        f64::MAX
    } else {
        v
    }
}

/// Max, Min, Avg, population StdDev, Product, Geometric Avg of a nonempty slice.
fn six_stats(xs: &[f64]) -> [f64; 6] {
    let n = xs.len() as f64;
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let avg = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - avg) * (x - avg)).sum::<f64>() / n;
    let log_sum: f64 = xs.iter().map(|x| x.ln()).sum();
    let prod = exp_clamped(log_sum);
    // AM-GM: the geometric mean lies in [min, max]; clamp away rounding drift.
    let geo = exp_clamped(log_sum / n).clamp(min, max);
    [max, min, avg, var.sqrt(), prod, geo]
}

/// Reduces per-step probabilities and entropies to a feature vector.
pub fn extract_features(
    probs: &[f64],
    entropies: &[f64],
    feature_set: FeatureSet,
) -> Result<FeatureVector, FeatureError> {
    if probs.len() != entropies.len() {
        return Err(FeatureError::LengthMismatch {
            probs: probs.len(),
            entropies: entropies.len(),
        });
    }
    if probs.is_empty() {
        return Err(FeatureError::Empty);
    }
    if let Some(&p) = probs.iter().find(|p| !(p.is_finite() && **p > 0.0 && **p <= 1.0)) {
        return Err(FeatureError::BadProbability(p));
    }
    if let Some(&h) = entropies.iter().find(|h| !(h.is_finite() && **h >= 0.0)) {
        return Err(FeatureError::BadEntropy(h));
    }
    let len = probs.len() as f64;
    let mut values = Vec::with_capacity(feature_set.dim());
    if feature_set != FeatureSet::Entropy {
        values.extend(six_stats(probs));
    }
    if feature_set != FeatureSet::Prob {
        values.extend(six_stats(entropies));
    }
    values.push(len);
    Ok(FeatureVector { values, feature_set })
}

/// Per-step (probability, entropy) series of a trace, converting logits rows as needed.
pub fn step_series(trace: &PredictionTrace) -> Result<(Vec<f64>, Vec<f64>), FeatureError> {
    let mut probs = Vec::with_capacity(trace.steps.len());
    let mut entropies = Vec::with_capacity(trace.steps.len());
    for step in &trace.steps {
        match step {
            StepDistribution::Logits { logits, chosen } => {
                probs.push(softmax_probability(logits, *chosen)?);
                entropies.push(step_entropy(logits)?);
            }
            StepDistribution::Summary { chosen_prob, entropy } => {
                probs.push(*chosen_prob);
                entropies.push(*entropy);
            }
        }
    }
    Ok((probs, entropies))
}

pub fn features_from_trace(
    trace: &PredictionTrace,
    feature_set: FeatureSet,
) -> Result<FeatureVector, FeatureError> {
    if trace.steps.is_empty() {
        return Err(FeatureError::Empty);
    }
    let (probs, entropies) = step_series(trace)?;
    extract_features(&probs, &entropies, feature_set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            assert!((x - y).abs() <= tol, "entry {i}: {x} vs {y}");
        }
    }

    #[test]
    fn softmax_values() {
        assert_eq!(softmax_probability(&[0.0; 4], 2).unwrap(), 0.25);
        // e / (e + 1)
        assert!((softmax_probability(&[1.0, 0.0], 0).unwrap() - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert_eq!(softmax_probability(&[1000.0, 0.0], 0).unwrap(), 1.0);
    }

    #[test]
    fn softmax_errors() {
        assert_eq!(
            softmax_probability(&[0.0, 1.0], 2),
            Err(FeatureError::IndexOutOfRange { index: 2, len: 2 })
        );
        assert_eq!(softmax_probability(&[0.0, f64::NAN], 0), Err(FeatureError::NonFinite));
        assert_eq!(softmax_probability(&[0.0], 0), Err(FeatureError::TooFewLogits(1)));
    }

    #[test]
    fn entropy_values() {
        assert!((step_entropy(&[0.0; 4]).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!(step_entropy(&[1000.0, 0.0, 0.0]).unwrap().abs() < 1e-12);
        // -p ln p - (1-p) ln(1-p) with p = e/(e+1), evaluated at 30 digits.
        assert!((step_entropy(&[1.0, 0.0]).unwrap() - 0.582_203_108_888_218).abs() < 1e-12);
    }

    #[test]
    fn two_equal_steps() {
        let fv = extract_features(&[0.5, 0.5], &[LN2, LN2], FeatureSet::Full).unwrap();
        let expected = [
            0.5, 0.5, 0.5, 0.0, 0.25, 0.5, LN2, LN2, LN2, 0.0, 0.480_453_013_918_201_4, LN2, 2.0,
        ];
        assert_close(&fv.values, &expected, 1e-12);
    }

    #[test]
    fn single_perfect_step() {
        let fv = extract_features(&[1.0], &[0.0], FeatureSet::Full).unwrap();
        assert_eq!(
            fv.values,
            vec![1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn reduced_sets_project_the_full_vector() {
        let probs = [0.9, 0.3, 0.6];
        let ents = [0.2, 1.1, 0.7];
        let full = extract_features(&probs, &ents, FeatureSet::Full).unwrap();
        let prob = extract_features(&probs, &ents, FeatureSet::Prob).unwrap();
        let ent = extract_features(&probs, &ents, FeatureSet::Entropy).unwrap();
        assert_eq!(prob.values.len(), 7);
        assert_eq!(&prob.values[..6], &full.values[..6]);
        assert_eq!(&ent.values[..6], &full.values[6..12]);
        assert_eq!(prob.len_feature(), 3.0);
        assert_eq!(ent.len_feature(), 3.0);
    }

    #[test]
    fn empty_is_an_error() {
        assert_eq!(extract_features(&[], &[], FeatureSet::Full), Err(FeatureError::Empty));
        assert_eq!(
            features_from_trace(&PredictionTrace::default(), FeatureSet::Full),
            Err(FeatureError::Empty)
        );
    }

    #[test]
    fn huge_entropy_product_clamps() {
        let ents = vec![10.0; 400];
        let probs = vec![0.5; 400];
        let fv = extract_features(&probs, &ents, FeatureSet::Full).unwrap();
        assert_eq!(fv.values[10], f64::MAX);
        assert!((fv.values[11] - 10.0).abs() < 1e-12);
        // 0.5^400 underflows a little above the subnormal range but stays finite.
        assert!(fv.values[4] >= 0.0 && fv.values[4] < 1e-100);
    }

    #[test]
    fn uniform_four_way_step_trace() {
        let trace = PredictionTrace {
            text: "a".into(),
            tokens: vec!["a".into()],
            steps: vec![StepDistribution::Logits {
                logits: vec![0.0; 4],
                chosen: 1,
            }],
        };
        let fv = features_from_trace(&trace, FeatureSet::Full).unwrap();
        let l4 = 4f64.ln();
        assert_close(
            &fv.values,
            &[0.25, 0.25, 0.25, 0.0, 0.25, 0.25, l4, l4, l4, 0.0, l4, l4, 1.0],
            1e-12,
        );
    }

    fn logits_strategy() -> impl Strategy<Value = Vec<(Vec<f64>, usize)>> {
        prop::collection::vec(
            (2usize..16).prop_flat_map(|v| (prop::collection::vec(-8.0f64..8.0, v), 0..v)),
            1..24,
        )
    }

    proptest! {
        #[test]
        fn logits_and_summary_forms_agree(rows in logits_strategy()) {
            let full = PredictionTrace {
                text: String::new(),
                tokens: vec![String::new(); rows.len()],
                steps: rows.iter().map(|(l, c)| StepDistribution::Logits { logits: l.clone(), chosen: *c }).collect(),
            };
            let summary = PredictionTrace {
                steps: rows.iter().map(|(l, c)| StepDistribution::Summary {
                    chosen_prob: softmax_probability(l, *c).unwrap(),
                    entropy: step_entropy(l).unwrap(),
                }).collect(),
                ..full.clone()
            };
            let a = features_from_trace(&full, FeatureSet::Full).unwrap();
            let b = features_from_trace(&summary, FeatureSet::Full).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }

        #[test]
        fn permuted_logits_row_gives_same_features(row in prop::collection::vec(-8.0f64..8.0, 2..32), chosen in 0usize..32, rot in 0usize..32) {
            let chosen = chosen % row.len();
            let k = rot % row.len();
            let mut rotated = row.clone();
            rotated.rotate_left(k);
            let new_chosen = (chosen + row.len() - k) % row.len();
            let p1 = softmax_probability(&row, chosen).unwrap();
            let p2 = softmax_probability(&rotated, new_chosen).unwrap();
            prop_assert!((p1 - p2).abs() < 1e-12);
            prop_assert!((step_entropy(&row).unwrap() - step_entropy(&rotated).unwrap()).abs() < 1e-12);
            prop_assert!(step_entropy(&row).unwrap() <= (row.len() as f64).ln() + 1e-12);
        }

        #[test]
        fn probability_chain_and_order_invariance(
            steps in prop::collection::vec((1e-6f64..=1.0, 0.0f64..8.0), 1..64),
            seed in any::<u64>(),
        ) {
            let (probs, ents): (Vec<f64>, Vec<f64>) = steps.iter().copied().unzip();
            let fv = extract_features(&probs, &ents, FeatureSet::Full).unwrap();
            let v = &fv.values;
            prop_assert!(v[1] <= v[5] + 1e-12 && v[5] <= v[2] + 1e-12 && v[2] <= v[0] + 1e-12);
            prop_assert!(v[4] <= v[1] + 1e-12);
            prop_assert!(v.iter().all(|x| !x.is_nan()));
            prop_assert!(v[..6].iter().all(|x| (0.0..=1.0).contains(x)));
            prop_assert!(v[6..12].iter().all(|x| *x >= 0.0));

            // deterministic shuffle
            let mut idx: Vec<usize> = (0..probs.len()).collect();
            let mut s = seed;
            for i in (1..idx.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                idx.swap(i, (s >> 33) as usize % (i + 1));
            }
            let sp: Vec<f64> = idx.iter().map(|&i| probs[i]).collect();
            let se: Vec<f64> = idx.iter().map(|&i| ents[i]).collect();
            let shuffled = extract_features(&sp, &se, FeatureSet::Full).unwrap();
            for (x, y) in v.iter().zip(&shuffled.values) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-300));
            }
        }

        #[test]
        fn log_space_product_matches_direct(xs in prop::collection::vec(0.01f64..=5.0, 1..=50)) {
            let ents = vec![0.0; xs.len()];
            let probs: Vec<f64> = xs.iter().map(|x| x / 5.0).collect();
            let direct: f64 = probs.iter().product();
            let fv = extract_features(&probs, &ents, FeatureSet::Prob).unwrap();
            prop_assert!((fv.values[4] - direct).abs() <= 1e-9 * direct);
            let fe = extract_features(&probs, &xs, FeatureSet::Entropy).unwrap();
            let direct_h: f64 = xs.iter().product();
            prop_assert!((fe.values[4] - direct_h).abs() <= 1e-9 * direct_h);
        }
    }
}
