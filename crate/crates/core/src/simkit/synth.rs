//! Synthetic repositories and completion samples.
//!
//! Every sample owns a small topic vocabulary. Its prompt ends in a few
//! context lines drawn from that vocabulary and its ground truth continues
//! them. Depending on the sample's kind, the repository also holds a file that
//! repeats the context lines followed by either the true continuation
//! (helpful) or a continuation from a different vocabulary (misleading).

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{read_samples, write_samples, Corpus, SourceFile};
use crate::trace::CompletionSample;

const SYLLABLES: [&str; 20] = [
    "ba", "ce", "di", "fo", "gu", "ha", "ji", "ko", "lu", "ma", "ne", "pi", "qo", "ru", "sa", "te", "vi", "wo", "xu", "ze",
];

/// Size of the global identifier vocabulary.
pub const VOCAB_SIZE: usize = SYLLABLES.len() * SYLLABLES.len() * SYLLABLES.len();

const TOPIC_SIZE: usize = 10;
const CONTEXT_LINES: usize = 6;
const MAX_LINES: usize = 5;

/// The `k`-th identifier of the global vocabulary.
pub fn vocab_word(k: usize) -> String {
    let n = SYLLABLES.len();
    let k = k % VOCAB_SIZE;
    format!("{}{}{}", SYLLABLES[k / (n * n)], SYLLABLES[(k / n) % n], SYLLABLES[k % n])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub seed: u64,
    pub num_samples: usize,
    /// Poisson mean of (ground-truth line count − 1).
    pub lambda_lines: f64,
    pub helpful_fraction: f64,
    pub misleading_fraction: f64,
    pub vocab_size_eff: usize,
    pub q_base: f64,
    pub q_boost: f64,
    pub noise_sigma: f64,
    /// Pulls each step's confidence toward 1 for a correct token and 0 for a
    /// wrong one, by this fraction. 0 makes confidence blind to correctness.
    pub confidence_coupling: f64,
    /// Subtracted from token accuracy when a misleading snippet is in context.
    pub misleading_penalty: f64,
    pub samples_per_repo: usize,
    pub distractor_files: usize,
    pub prompt_lines: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 0,
            num_samples: 1000,
            lambda_lines: 2.0,
            helpful_fraction: 0.6,
            misleading_fraction: 0.15,
            vocab_size_eff: 100,
            q_base: 0.55,
            q_boost: 0.35,
            noise_sigma: 0.08,
            confidence_coupling: 0.0,
            misleading_penalty: 0.35,
            samples_per_repo: 50,
            distractor_files: 8,
            prompt_lines: 50,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("{name} must be in [0, 1], got {v}"))
            }
        };
        unit("helpful_fraction", self.helpful_fraction)?;
        unit("misleading_fraction", self.misleading_fraction)?;
        unit("q_base", self.q_base)?;
        unit("q_boost", self.q_boost)?;
        unit("misleading_penalty", self.misleading_penalty)?;
        unit("confidence_coupling", self.confidence_coupling)?;
        if self.helpful_fraction + self.misleading_fraction > 1.0 {
            return Err("helpful_fraction + misleading_fraction must not exceed 1".into());
        }
        if !(self.lambda_lines > 0.0 && self.lambda_lines.is_finite()) {
            return Err(format!("lambda_lines must be positive, got {}", self.lambda_lines));
        }
        if self.q_base + self.q_boost > 0.99 + 1e-12 {
            return Err("q_base + q_boost must not exceed 0.99".into());
        }
        if self.vocab_size_eff < 2 {
            return Err("vocab_size_eff must be at least 2".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(format!("noise_sigma must be nonnegative, got {}", self.noise_sigma));
        }
        if self.samples_per_repo == 0 {
            return Err("samples_per_repo must be at least 1".into());
        }
        if self.prompt_lines < CONTEXT_LINES {
            return Err(format!("prompt_lines must be at least {CONTEXT_LINES}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleKind {
    Helpful,
    Misleading,
    Unsupported,
}

/// The divergent continuation planted for a misleading sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoy {
    /// File holding it, inside the sample's repository.
    pub file: String,
    pub lines: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBenchmark {
    pub corpus: Corpus,
    pub samples: Vec<CompletionSample>,
    pub kinds: Vec<SampleKind>,
    pub decoys: BTreeMap<String, Decoy>,
}

impl SyntheticBenchmark {
    /// Writes `dir/corpus/<repo>/...` and `dir/samples.jsonl`.
    pub fn write_dir(&self, dir: &Path) -> anyhow::Result<()> {
        self.corpus.write_dir(&dir.join("corpus"))?;
        write_samples(&self.samples, &dir.join("samples.jsonl"))
    }

    /// Reads a directory written by [`write_dir`](Self::write_dir). Sample
    /// kinds and decoys are recovered from the `mod_`/`alt_` file names: a
    /// decoy is the last as many lines of its file as the ground truth has.
    pub fn load_dir(dir: &Path) -> anyhow::Result<Self> {
        let corpus = Corpus::load_dir(&dir.join("corpus"))?;
        let samples = read_samples(&dir.join("samples.jsonl"))?;
        let mut kinds = Vec::with_capacity(samples.len());
        let mut decoys = BTreeMap::new();
        for s in &samples {
            let files = s.corpus_ref.as_ref().and_then(|r| corpus.repos.get(r));
            let find = |name: &str| files.and_then(|fs| fs.iter().find(|f| f.name == name));
            let alt = format!("alt_{}.txt", s.id);
            let kind = if let Some(f) = find(&alt) {
                let lines: Vec<&str> = f.text.lines().collect();
                let n = s.ground_truth.split('\n').count().min(lines.len());
                let decoy_lines = lines[lines.len() - n..]
                    .iter()
                    .map(|l| l.split_whitespace().map(str::to_string).collect())
                    .collect();
                decoys.insert(
                    s.id.clone(),
                    Decoy {
                        file: alt,
                        lines: decoy_lines,
                    },
                );
                SampleKind::Misleading
            } else if find(&format!("mod_{}.txt", s.id)).is_some() {
                SampleKind::Helpful
            } else {
                SampleKind::Unsupported
            };
            kinds.push(kind);
        }
        Ok(Self {
            corpus,
            samples,
            kinds,
            decoys,
        })
    }
}

/// Poisson draw by sequential search of the inverse CDF.
pub fn poisson(rng: &mut impl Rng, lambda: f64) -> usize {
    let u: f64 = rng.random();
    let mut k = 0;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    while u > cdf && k < 1000 {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
    }
    k
}

/// Ground-truth line count: 1 + Poisson(lambda), at most 5.
pub fn line_count(rng: &mut impl Rng, lambda: f64) -> usize {
    (1 + poisson(rng, lambda)).min(MAX_LINES)
}

fn random_line(rng: &mut impl Rng, words: &[String], min: usize, max: usize) -> Vec<String> {
    let len = rng.random_range(min..=max);
    (0..len).map(|_| words[rng.random_range(0..words.len())].clone()).collect()
}

fn global_line(rng: &mut impl Rng) -> Vec<String> {
    let len = rng.random_range(4..=7);
    (0..len).map(|_| vocab_word(rng.random_range(0..VOCAB_SIZE))).collect()
}

fn topic(rng: &mut impl Rng) -> Vec<String> {
    sample_indices(rng, VOCAB_SIZE, TOPIC_SIZE).into_iter().map(vocab_word).collect()
}

fn render(lines: &[Vec<String>]) -> String {
    lines.iter().map(|l| l.join(" ")).collect::<Vec<_>>().join("\n")
}

pub fn repo_name(index: usize) -> String {
    format!("repo_{index:03}")
}

pub fn gen_corpus(params: &SynthParams) -> Result<SyntheticBenchmark, String> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let num_repos = params.num_samples.div_ceil(params.samples_per_repo).max(1);
    let mut corpus = Corpus::default();
    for r in 0..num_repos {
        let files = (0..params.distractor_files)
            .map(|k| SourceFile {
                name: format!("lib_{k:02}.txt"),
                text: render(&(0..60).map(|_| global_line(&mut rng)).collect::<Vec<_>>()) + "\n",
            })
            .collect();
        corpus.repos.insert(repo_name(r), files);
    }

    let mut samples = Vec::with_capacity(params.num_samples);
    let mut kinds = Vec::with_capacity(params.num_samples);
    let mut decoys = BTreeMap::new();
    for s in 0..params.num_samples {
        let id = format!("s{s:05}");
        let repo = repo_name(s / params.samples_per_repo);
        let words = topic(&mut rng);
        let u: f64 = rng.random();
        let kind = if u < params.helpful_fraction {
            SampleKind::Helpful
        } else if u < params.helpful_fraction + params.misleading_fraction {
            SampleKind::Misleading
        } else {
            SampleKind::Unsupported
        };
        let n_lines = line_count(&mut rng, params.lambda_lines);
        let truth: Vec<Vec<String>> = (0..n_lines).map(|_| random_line(&mut rng, &words, 3, 6)).collect();
        let mut prompt: Vec<Vec<String>> = (0..params.prompt_lines - CONTEXT_LINES).map(|_| global_line(&mut rng)).collect();
        let context: Vec<Vec<String>> = (0..CONTEXT_LINES).map(|_| random_line(&mut rng, &words, 3, 6)).collect();
        prompt.extend(context.iter().cloned());

        let files = corpus.repos.get_mut(&repo).expect("repo created above");
        match kind {
            SampleKind::Helpful => files.push(SourceFile {
                name: format!("mod_{id}.txt"),
                text: render(&context) + "\n" + &render(&truth) + "\n",
            }),
            SampleKind::Misleading => {
                let other = topic(&mut rng);
                let lines: Vec<Vec<String>> = (0..n_lines).map(|_| random_line(&mut rng, &other, 3, 6)).collect();
                let file = format!("alt_{id}.txt");
                files.push(SourceFile {
                    name: file.clone(),
                    text: render(&context) + "\n" + &render(&lines) + "\n",
                });
                decoys.insert(id.clone(), Decoy { file, lines });
            }
            SampleKind::Unsupported => {}
        }
        samples.push(CompletionSample {
            id,
            prompt: render(&prompt) + "\n",
            ground_truth: render(&truth),
            corpus_ref: Some(repo),
        });
        kinds.push(kind);
    }
    for files in corpus.repos.values_mut() {
        files.sort_by(|a, b| a.name.cmp(&b.name));
    }
    Ok(SyntheticBenchmark {
        corpus,
        samples,
        kinds,
        decoys,
    })
}
