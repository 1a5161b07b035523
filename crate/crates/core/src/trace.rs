//! Generation traces, completion samples and episodes, plus their JSONL form.
//!
//! One line of a trace file holds one sample and every iteration that was
//! generated for it:
//!
//! ```text
//! {"id": "s1", "prompt": "...", "ground_truth": "...", "iterations": [
//!   {"index": 0, "text": "x = 1", "tokens": ["x", " =", " 1"], "retrieved": false,
//!    "probs": [0.9, 0.8, 0.7], "entropies": [0.3, 0.5, 0.9]}
//! ]}
//! ```
//!
//! An iteration carries either summarized steps (`probs` + `entropies`) or
//! full distributions (`logits` + `chosen`), never both.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error("invalid record: {0}")]
    Invalid(String),
}

/// Distribution information for one decoding step.
#[derive(Debug, Clone, PartialEq)]
pub enum StepDistribution {
    /// Raw values fed to the final softmax, and the index of the emitted token.
    Logits { logits: Vec<f64>, chosen: usize },
    /// Probability of the emitted token and entropy (nats) of the step.
    Summary { chosen_prob: f64, entropy: f64 },
}

impl StepDistribution {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            StepDistribution::Logits { logits, chosen } => {
                if logits.len() < 2 {
                    return Err(format!("logits row has {} entries, need at least 2", logits.len()));
                }
                if *chosen >= logits.len() {
                    return Err(format!(
                        "chosen index {} out of range for {} logits",
                        chosen,
                        logits.len()
                    ));
                }
                if logits.iter().any(|v| !v.is_finite()) {
                    return Err("non-finite logit".to_string());
                }
                Ok(())
            }
            StepDistribution::Summary { chosen_prob, entropy } => {
                if !(chosen_prob.is_finite() && *chosen_prob > 0.0 && *chosen_prob <= 1.0) {
                    return Err(format!("chosen probability {chosen_prob} outside (0, 1]"));
                }
                if !(entropy.is_finite() && *entropy >= 0.0) {
                    return Err(format!("entropy {entropy} is negative or non-finite"));
                }
                Ok(())
            }
        }
    }

    fn is_logits(&self) -> bool {
        matches!(self, StepDistribution::Logits { .. })
    }
}

/// One generation: detokenized text, its tokens and per-token distributions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionTrace {
    pub text: String,
    pub tokens: Vec<String>,
    pub steps: Vec<StepDistribution>,
}

impl PredictionTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.tokens.len() != self.steps.len() {
            return Err(format!(
                "{} tokens but {} distribution steps",
                self.tokens.len(),
                self.steps.len()
            ));
        }
        if let Some(first) = self.steps.first() {
            let logits = first.is_logits();
            if self.steps.iter().any(|s| s.is_logits() != logits) {
                return Err("steps mix logits and summarized forms".to_string());
            }
        }
        for (t, step) in self.steps.iter().enumerate() {
            step.validate().map_err(|e| format!("step {t}: {e}"))?;
        }
        Ok(())
    }
}

/// A repository-level completion task: in-file context, expected completion
/// and the name of the file set available to the retriever.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionSample {
    pub id: String,
    pub prompt: String,
    pub ground_truth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub index: usize,
    pub trace: PredictionTrace,
    /// Whether a retrieval preceded this generation.
    pub retrieved: bool,
    pub snippet_ids: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub sample_id: String,
    pub iterations: Vec<IterationRecord>,
}

impl EpisodeRecord {
    pub fn validate(&self) -> Result<(), String> {
        for (pos, it) in self.iterations.iter().enumerate() {
            if it.index != pos {
                return Err(format!("iteration at position {pos} has index {}", it.index));
            }
            it.trace.validate().map_err(|e| format!("iteration {pos}: {e}"))?;
        }
        Ok(())
    }
}

/// A sample with its logged episode; the unit of one JSONL line.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub sample: CompletionSample,
    pub episode: EpisodeRecord,
}

impl TraceRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.sample.id.is_empty() {
            return Err("empty sample id".to_string());
        }
        if self.episode.sample_id != self.sample.id {
            return Err(format!(
                "episode sample id {:?} does not match sample id {:?}",
                self.episode.sample_id, self.sample.id
            ));
        }
        self.episode.validate()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IterationLine {
    index: usize,
    text: String,
    tokens: Vec<String>,
    retrieved: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    entropies: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logits: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    chosen: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    snippet_ids: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    prompt: String,
    ground_truth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    corpus_ref: Option<String>,
    iterations: Vec<IterationLine>,
}

impl IterationLine {
    fn from_record(it: &IterationRecord) -> Self {
        let mut line = IterationLine {
            index: it.index,
            text: it.trace.text.clone(),
            tokens: it.trace.tokens.clone(),
            retrieved: it.retrieved,
            probs: None,
            entropies: None,
            logits: None,
            chosen: None,
            snippet_ids: it.snippet_ids.clone(),
        };
        let logits_form = it.trace.steps.first().is_some_and(StepDistribution::is_logits);
        if logits_form {
            let (rows, chosen) = it
                .trace
                .steps
                .iter()
                .map(|s| match s {
                    StepDistribution::Logits { logits, chosen } => (logits.clone(), *chosen),
                    StepDistribution::Summary { .. } => unreachable!("validated uniform form"),
                })
                .unzip();
            line.logits = Some(rows);
            line.chosen = Some(chosen);
        } else {
            let (probs, entropies) = it
                .trace
                .steps
                .iter()
                .map(|s| match s {
                    StepDistribution::Summary { chosen_prob, entropy } => (*chosen_prob, *entropy),
                    StepDistribution::Logits { .. } => unreachable!("validated uniform form"),
                })
                .unzip();
            line.probs = Some(probs);
            line.entropies = Some(entropies);
        }
        line
    }

    fn into_record(self) -> Result<IterationRecord, String> {
        let summary = self.probs.is_some() || self.entropies.is_some();
        let full = self.logits.is_some() || self.chosen.is_some();
        let steps = match (summary, full) {
            (true, true) => {
                return Err(format!(
                    "iteration {}: both summarized and logits forms present",
                    self.index
                ))
            }
            (false, false) => {
                return Err(format!(
                    "iteration {}: neither probs/entropies nor logits/chosen present",
                    self.index
                ))
            }
            (true, false) => {
                let (Some(probs), Some(entropies)) = (self.probs, self.entropies) else {
                    return Err(format!(
                        "iteration {}: probs and entropies must appear together",
                        self.index
                    ));
                };
                if probs.len() != entropies.len() {
                    return Err(format!(
                        "iteration {}: {} probs but {} entropies",
                        self.index,
                        probs.len(),
                        entropies.len()
                    ));
                }
                probs
                    .into_iter()
                    .zip(entropies)
                    .map(|(chosen_prob, entropy)| StepDistribution::Summary { chosen_prob, entropy })
                    .collect::<Vec<_>>()
            }
            (false, true) => {
                let (Some(rows), Some(chosen)) = (self.logits, self.chosen) else {
                    return Err(format!(
                        "iteration {}: logits and chosen must appear together",
                        self.index
                    ));
                };
                if rows.len() != chosen.len() {
                    return Err(format!(
                        "iteration {}: {} logits rows but {} chosen indices",
                        self.index,
                        rows.len(),
                        chosen.len()
                    ));
                }
                rows.into_iter()
                    .zip(chosen)
                    .map(|(logits, chosen)| StepDistribution::Logits { logits, chosen })
                    .collect()
            }
        };
        let index = self.index;
        let trace = PredictionTrace {
            text: self.text,
            tokens: self.tokens,
            steps,
        };
        trace.validate().map_err(|e| format!("iteration {index}: {e}"))?;
        Ok(IterationRecord {
            index,
            trace,
            retrieved: self.retrieved,
            snippet_ids: self.snippet_ids,
        })
    }
}

/// Parses one JSONL line into a validated record.
pub fn parse_record(line: &str) -> Result<TraceRecord, String> {
    let raw: RecordLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let iterations = raw
        .iterations
        .into_iter()
        .map(IterationLine::into_record)
        .collect::<Result<Vec<_>, _>>()?;
    let record = TraceRecord {
        episode: EpisodeRecord {
            sample_id: raw.id.clone(),
            iterations,
        },
        sample: CompletionSample {
            id: raw.id,
            prompt: raw.prompt,
            ground_truth: raw.ground_truth,
            corpus_ref: raw.corpus_ref,
        },
    };
    record.validate()?;
    Ok(record)
}

/// Serializes one record as a single JSON line (without the trailing LF).
pub fn format_record(record: &TraceRecord) -> Result<String, TraceError> {
    record.validate().map_err(TraceError::Invalid)?;
    let line = RecordLine {
        id: record.sample.id.clone(),
        prompt: record.sample.prompt.clone(),
        ground_truth: record.sample.ground_truth.clone(),
        corpus_ref: record.sample.corpus_ref.clone(),
        iterations: record.episode.iterations.iter().map(IterationLine::from_record).collect(),
    };
    serde_json::to_string(&line).map_err(|e| TraceError::Invalid(e.to_string()))
}

/// Streaming reader over a trace file. Blank lines are skipped; line numbers
/// in errors are 1-based and count blank lines.
pub struct TraceReader<R> {
    lines: io::Lines<R>,
    line_no: usize,
    path: String,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(reader: R, path: impl Into<String>) -> Self {
        Self {
            lines: reader.lines(),
            line_no: 0,
            path: path.into(),
        }
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<TraceRecord, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(source) => {
                    return Some(Err(TraceError::Io {
                        path: self.path.clone(),
                        source,
                    }))
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let line_no = self.line_no;
            return Some(
                parse_record(&line).map_err(|reason| TraceError::Line { line: line_no, reason }),
            );
        }
    }
}

pub fn open_traces(path: &Path) -> Result<TraceReader<BufReader<File>>, TraceError> {
    let file = File::open(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(TraceReader::new(BufReader::new(file), path.display().to_string()))
}

/// Reads a whole trace file, stopping at the first malformed line.
pub fn read_traces(path: &Path) -> Result<Vec<TraceRecord>, TraceError> {
    open_traces(path)?.collect()
}

pub fn write_traces_to<W: Write>(mut writer: W, records: &[TraceRecord]) -> Result<(), TraceError> {
    let io_err = |source| TraceError::Io {
        path: "<writer>".to_string(),
        source,
    };
    for record in records {
        let line = format_record(record)?;
        writer.write_all(line.as_bytes()).map_err(io_err)?;
        writer.write_all(b"\n").map_err(io_err)?;
    }
    writer.flush().map_err(io_err)
}

/// Writes records atomically: the file only appears once every line is written.
pub fn write_traces(records: &[TraceRecord], path: &Path) -> Result<(), TraceError> {
    crate::io::write_atomic(path, |w| write_traces_to(w, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary_iteration(index: usize, text: &str, probs: &[f64]) -> IterationRecord {
        IterationRecord {
            index,
            trace: PredictionTrace {
                text: text.to_string(),
                tokens: probs.iter().map(|_| "t".to_string()).collect(),
                steps: probs
                    .iter()
                    .map(|&p| StepDistribution::Summary {
                        chosen_prob: p,
                        entropy: 0.5,
                    })
                    .collect(),
            },
            retrieved: index > 0,
            snippet_ids: None,
        }
    }

    fn record(id: &str, iterations: Vec<IterationRecord>) -> TraceRecord {
        TraceRecord {
            sample: CompletionSample {
                id: id.to_string(),
                prompt: "def f():\n".to_string(),
                ground_truth: "    return 1".to_string(),
                corpus_ref: None,
            },
            episode: EpisodeRecord {
                sample_id: id.to_string(),
                iterations,
            },
        }
    }

    #[test]
    fn empty_input_yields_nothing() {
        let reader = TraceReader::new(io::Cursor::new(""), "mem");
        assert_eq!(reader.count(), 0);
    }

    #[test]
    fn mismatched_lengths_name_the_line() {
        let good = format_record(&record("a", vec![summary_iteration(0, "x", &[0.5])])).unwrap();
        let bad = r#"{"id":"b","prompt":"p","ground_truth":"g","iterations":[{"index":0,"text":"abc","tokens":["a","b","c"],"retrieved":false,"probs":[0.1,0.2,0.3,0.4],"entropies":[0.1,0.2,0.3,0.4]}]}"#;
        let input = format!("{good}\n{bad}\n");
        let results: Vec<_> = TraceReader::new(io::Cursor::new(input), "mem").collect();
        assert!(results[0].is_ok());
        match &results[1] {
            Err(TraceError::Line { line, reason }) => {
                assert_eq!(*line, 2);
                assert!(reason.contains("3 tokens but 4"), "{reason}");
            }
            other => panic!("expected line error, got {other:?}"),
        }
    }

    #[test]
    fn both_forms_is_a_schema_violation() {
        let bad = r#"{"id":"b","prompt":"p","ground_truth":"g","iterations":[{"index":0,"text":"a","tokens":["a"],"retrieved":false,"probs":[0.5],"entropies":[0.1],"logits":[[1,0]],"chosen":[0]}]}"#;
        let err = parse_record(bad).unwrap_err();
        assert!(err.contains("both"), "{err}");
        let neither = r#"{"id":"b","prompt":"p","ground_truth":"g","iterations":[{"index":0,"text":"a","tokens":["a"],"retrieved":false}]}"#;
        assert!(parse_record(neither).unwrap_err().contains("neither"));
    }

    #[test]
    fn zero_probability_is_rejected() {
        let bad = r#"{"id":"b","prompt":"p","ground_truth":"g","iterations":[{"index":0,"text":"a","tokens":["a"],"retrieved":false,"probs":[0.0],"entropies":[0.1]}]}"#;
        assert!(parse_record(bad).unwrap_err().contains("outside (0, 1]"));
    }

    #[test]
    fn noncontiguous_indices_are_rejected() {
        let rec = record("a", vec![summary_iteration(0, "x", &[0.5]), summary_iteration(2, "y", &[0.5])]);
        assert!(format_record(&rec).is_err());
    }

    #[test]
    fn logits_form_uses_logits_keys() {
        let mut rec = record("a", vec![]);
        rec.episode.iterations.push(IterationRecord {
            index: 0,
            trace: PredictionTrace {
                text: "λ".to_string(),
                tokens: vec!["λ".to_string()],
                steps: vec![StepDistribution::Logits {
                    logits: vec![1.0, 0.0, -0.5],
                    chosen: 0,
                }],
            },
            retrieved: false,
            snippet_ids: Some(vec!["f.py:0".to_string()]),
        });
        let line = format_record(&rec).unwrap();
        assert!(line.contains("\"logits\"") && line.contains("\"chosen\""));
        assert!(!line.contains("\"probs\""));
        assert!(line.contains("λ"));
        assert_eq!(parse_record(&line).unwrap(), rec);
    }
}
