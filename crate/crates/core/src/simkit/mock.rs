//! A generator whose accuracy responds to the relevance of its context.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::retriever::lexical_tokens;
use super::synth::{vocab_word, Decoy, SyntheticBenchmark, SynthParams, VOCAB_SIZE};
use crate::orchestrator::{GenerationRequest, Generator};
use crate::trace::{PredictionTrace, StepDistribution};

/// Entropy of a distribution that puts `p` on the chosen token and spreads
/// the rest evenly over `vocab - 1` others.
pub fn two_bucket_entropy(p: f64, vocab: usize) -> f64 {
    let rest = 1.0 - p;
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * p.ln();
    }
    if rest > 0.0 {
        h -= rest * (rest / (vocab - 1) as f64).ln();
    }
    h
}

pub struct MockGenerator {
    params: SynthParams,
    decoys: BTreeMap<String, Decoy>,
}

impl MockGenerator {
    pub fn new(params: SynthParams, decoys: BTreeMap<String, Decoy>) -> Self {
        Self { params, decoys }
    }

    pub fn for_benchmark(params: &SynthParams, bench: &SyntheticBenchmark) -> Self {
        Self::new(params.clone(), bench.decoys.clone())
    }

    /// Token accuracy for a request: base, plus the relevance bonus, minus the
    /// penalty if the sample's decoy file is among the snippets.
    pub fn accuracy(&self, request: &GenerationRequest<'_>) -> (f64, Option<&Decoy>) {
        let truth: BTreeSet<&str> = lexical_tokens(&request.sample.ground_truth).collect();
        let relevance = request
            .snippets
            .iter()
            .map(|s| {
                let toks: BTreeSet<&str> = lexical_tokens(&s.text).collect();
                let inter = toks.intersection(&truth).count();
                let union = toks.len() + truth.len() - inter;
                if union == 0 {
                    0.0
                } else {
                    inter as f64 / union as f64
                }
            })
            .fold(0.0, f64::max);
        let decoy = self.decoys.get(&request.sample.id).filter(|d| {
            request
                .snippets
                .iter()
                .any(|s| s.id.split_once(':').map_or(s.id.as_str(), |(f, _)| f) == d.file)
        });
        let penalty = if decoy.is_some() { self.params.misleading_penalty } else { 0.0 };
        let q = (self.params.q_base + self.params.q_boost * relevance - penalty).clamp(0.01, 0.99);
        (q, decoy)
    }

    fn rng_for(&self, request: &GenerationRequest<'_>) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.params.seed.to_le_bytes());
        h.update((request.sample.prompt.len() as u64).to_le_bytes());
        h.update(request.sample.prompt.as_bytes());
        for s in request.snippets {
            for part in [s.id.as_bytes(), s.text.as_bytes()] {
                h.update((part.len() as u64).to_le_bytes());
                h.update(part);
            }
        }
        ChaCha8Rng::from_seed(h.finalize().into())
    }
}

impl Generator for MockGenerator {
    fn complete(&self, request: &GenerationRequest<'_>) -> anyhow::Result<PredictionTrace> {
        let (q, decoy) = self.accuracy(request);
        let mut rng = self.rng_for(request);
        let noise = Normal::new(0.0, self.params.noise_sigma)?;
        let mut tokens = Vec::new();
        let mut steps = Vec::new();
        for (i, line) in request.sample.ground_truth.split('\n').enumerate() {
            for (j, truth) in line.split_whitespace().enumerate() {
                let correct = rng.random::<f64>() < q;
                let word = if correct {
                    truth.to_string()
                } else if let Some(d) = decoy.filter(|d| !d.lines.is_empty()) {
                    let l = &d.lines[i % d.lines.len()];
                    l[j % l.len()].clone()
                } else {
                    loop {
                        let w = vocab_word(rng.random_range(0..VOCAB_SIZE));
                        if w != truth {
                            break w;
                        }
                    }
                };
                let sep = match (i, j) {
                    (0, 0) => "",
                    (_, 0) => "\n",
                    _ => " ",
                };
                tokens.push(format!("{sep}{word}"));
                let hit = if correct { 1.0 } else { 0.0 };
                let p = (q + self.params.confidence_coupling * (hit - q) + noise.sample(&mut rng)).clamp(0.01, 0.99);
                steps.push(StepDistribution::Summary {
                    chosen_prob: p,
                    entropy: two_bucket_entropy(p, self.params.vocab_size_eff),
                });
            }
        }
        Ok(PredictionTrace {
            text: tokens.concat(),
            tokens,
            steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::Snippet;
    use crate::trace::CompletionSample;

    fn sample() -> CompletionSample {
        CompletionSample {
            id: "s".into(),
            prompt: "ctx".into(),
            ground_truth: "bacedi fofofo\nhahaha".into(),
            corpus_ref: None,
        }
    }

    #[test]
    fn entropy_formula() {
        // -p ln p - (1-p) ln((1-p)/99) at p = 0.99
        assert!((two_bucket_entropy(0.99, 100) - 0.1019527328561932).abs() < 1e-12);
        assert!((two_bucket_entropy(0.5, 2) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn keeps_line_structure_and_is_deterministic() {
        let g = MockGenerator::new(SynthParams::default(), BTreeMap::new());
        let s = sample();
        let req = GenerationRequest {
            sample: &s,
            iteration: 0,
            snippets: &[],
        };
        let a = g.complete(&req).unwrap();
        assert_eq!(a, g.complete(&req).unwrap());
        assert_eq!(a.text.lines().count(), 2);
        assert_eq!(a.len(), 3);
        a.validate().unwrap();
    }

    #[test]
    fn perfect_snippet_raises_accuracy() {
        let g = MockGenerator::new(SynthParams::default(), BTreeMap::new());
        let s = sample();
        let snip = [Snippet {
            id: "f:0".into(),
            text: s.ground_truth.clone(),
            similarity: 1.0,
        }];
        let req = GenerationRequest {
            sample: &s,
            iteration: 1,
            snippets: &snip,
        };
        assert!((g.accuracy(&req).0 - 0.9).abs() < 1e-12);
    }

    #[test]
    fn decoy_in_context_is_penalized_and_copied() {
        let mut decoys = BTreeMap::new();
        decoys.insert(
            "s".to_string(),
            Decoy {
                file: "alt_s.txt".into(),
                lines: vec![vec!["zezeze".into()]],
            },
        );
        let params = SynthParams {
            q_base: 0.3,
            q_boost: 0.0,
            ..SynthParams::default()
        };
        let g = MockGenerator::new(params, decoys);
        let s = sample();
        let snip = [Snippet {
            id: "alt_s.txt:0".into(),
            text: "unrelated".into(),
            similarity: 0.5,
        }];
        let req = GenerationRequest {
            sample: &s,
            iteration: 1,
            snippets: &snip,
        };
        let (q, decoy) = g.accuracy(&req);
        assert_eq!(q, 0.01);
        assert!(decoy.is_some());
        let t = g.complete(&req).unwrap();
        assert!(t.text.contains("zezeze"));
    }
}
