//! The adaptive retrieve / selective accept loop over pluggable components,
//! and the benchmark protocol that compares it against always-retrieve RAG.
//!
//! One episode:
//!
//! ```text
//! i = 0: generate zero-shot ─► score ŝ⁰
//!        ŝⁱ < t_rag[i] and i < max_iter ?  ── no ──► select best of ŷ⁰..ŷⁱ
//!              │ yes
//!              ▼
//!        retrieve with query(prompt tail, ŷⁱ if i ≥ 1) ─► generate ŷⁱ⁺¹ ─► score ...
//! ```
//!
//! In iterative mode the first retrieval is unconditional.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::Scorer;
use crate::metrics::{self, MetricValue};
use crate::policy::{is_retrieve, resolve_best_from, ScoreLog, ThresholdSchedule};
use crate::trace::{CompletionSample, EpisodeRecord, IterationRecord, PredictionTrace, TraceRecord};

/// A retrieved code snippet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub id: String,
    pub text: String,
    pub similarity: f64,
}

/// Everything a generator may look at for one generation.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub sample: &'a CompletionSample,
    /// 0 for the zero-shot generation.
    pub iteration: usize,
    /// Retrieved context, most similar first; empty for zero-shot.
    pub snippets: &'a [Snippet],
}

pub trait Generator: Send + Sync {
    fn complete(&self, request: &GenerationRequest<'_>) -> anyhow::Result<PredictionTrace>;

    fn supports_concurrency(&self) -> bool {
        true
    }
}

pub trait Retriever: Send + Sync {
    /// Up to `k` snippets from the file set `corpus_ref`, most similar first.
    fn retrieve(&self, query: &str, corpus_ref: &str, k: usize) -> anyhow::Result<Vec<Snippet>>;

    fn supports_concurrency(&self) -> bool {
        true
    }
}

/// A retriever over nothing; used when replaying logged generations.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullRetriever;

impl Retriever for NullRetriever {
    fn retrieve(&self, _query: &str, _corpus_ref: &str, _k: usize) -> anyhow::Result<Vec<Snippet>> {
        Ok(Vec::new())
    }
}

/// Plays back logged generations: request `i` of a sample gets its logged iteration `i`.
#[derive(Debug, Default)]
pub struct ReplayGenerator {
    by_sample: HashMap<String, Vec<PredictionTrace>>,
}

impl ReplayGenerator {
    pub fn new<'a>(records: impl IntoIterator<Item = &'a TraceRecord>) -> Self {
        let by_sample = records
            .into_iter()
            .map(|r| {
                let traces = r.episode.iterations.iter().map(|it| it.trace.clone()).collect();
                (r.sample.id.clone(), traces)
            })
            .collect();
        Self { by_sample }
    }
}

impl Generator for ReplayGenerator {
    fn complete(&self, request: &GenerationRequest<'_>) -> anyhow::Result<PredictionTrace> {
        let id = &request.sample.id;
        let logged = self
            .by_sample
            .get(id)
            .ok_or_else(|| anyhow::anyhow!("no logged generations for sample {id}"))?;
        logged.get(request.iteration).cloned().ok_or_else(|| {
            anyhow::anyhow!(
                "replay exhausted: {} logged iterations, iteration {} requested",
                logged.len(),
                request.iteration
            )
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Zero-shot first; retrieval is gated from the start.
    #[default]
    Single,
    /// The first retrieval always happens.
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub max_iter: usize,
    pub schedule: ThresholdSchedule,
    pub mode: Mode,
    pub enable_adaptive: bool,
    pub enable_select: bool,
    pub top_k: usize,
    /// Prompt lines used to form retrieval queries.
    pub window_lines: usize,
    /// Maximum total characters of snippets passed to one generation.
    pub snippet_char_budget: usize,
    /// In iterative mode, leave the zero-shot generation out of selection.
    pub exclude_zero_shot_from_select: bool,
    /// Truncate predictions to the ground truth's line count before reporting EM/ES.
    pub truncate_lines: bool,
    /// Worker threads for the benchmark; 0 uses all cores.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_iter: 4,
            schedule: ThresholdSchedule::line_level(),
            mode: Mode::Single,
            enable_adaptive: true,
            enable_select: true,
            top_k: 10,
            window_lines: 20,
            snippet_char_budget: 16_000,
            exclude_zero_shot_from_select: false,
            truncate_lines: true,
            workers: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.schedule.validate()?;
        if self.schedule.t_rag.len() < self.max_iter || self.schedule.t_acc.len() < self.max_iter {
            return Err(format!(
                "schedule has {} t_rag / {} t_acc entries, max_iter {} needs at least that many",
                self.schedule.t_rag.len(),
                self.schedule.t_acc.len(),
                self.max_iter
            ));
        }
        if self.window_lines == 0 {
            return Err("window_lines must be at least 1".into());
        }
        Ok(())
    }

    fn effective_schedule(&self) -> ThresholdSchedule {
        match self.mode {
            Mode::Single => self.schedule.clone(),
            Mode::Iterative => self.schedule.with_unconditional_first(),
        }
    }

    fn select_start(&self, len: usize) -> usize {
        usize::from(self.mode == Mode::Iterative && self.exclude_zero_shot_from_select && len > 1)
    }
}

#[derive(Debug, Error)]
#[error("sample {sample_id}: {source:#}")]
pub struct EpisodeError {
    pub sample_id: String,
    #[source]
    pub source: anyhow::Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub episode: EpisodeRecord,
    pub scores: ScoreLog,
    pub retrieval_count: usize,
    pub chosen_index: usize,
    pub chosen_text: String,
}

/// Last `window_lines` lines of the prompt, followed by the previous prediction if any.
pub fn build_query(prompt: &str, previous_prediction: Option<&str>, window_lines: usize) -> String {
    let lines: Vec<&str> = prompt.lines().collect();
    let start = lines.len().saturating_sub(window_lines.max(1));
    let mut query = lines[start..].join("\n");
    if let Some(prev) = previous_prediction {
        if !query.is_empty() {
            query.push('\n');
        }
        query.push_str(prev);
    }
    query
}

/// Keeps snippets in order while their total length fits the budget.
pub fn fit_snippets(snippets: Vec<Snippet>, char_budget: usize) -> Vec<Snippet> {
    let mut used = 0;
    snippets
        .into_iter()
        .take_while(|s| {
            used += s.text.chars().count();
            used <= char_budget
        })
        .collect()
}

/// Snippets (most similar first) followed by the in-file prompt.
pub fn assemble_prompt(snippets: &[Snippet], prompt: &str) -> String {
    let mut out = String::new();
    for s in snippets {
        out.push_str("# retrieved: ");
        out.push_str(&s.id);
        out.push('\n');
        out.push_str(&s.text);
        if !s.text.ends_with('\n') {
            out.push('\n');
        }
    }
    out.push_str(prompt);
    out
}

fn selected(scores: &ScoreLog, schedule: &ThresholdSchedule, config: &RunConfig) -> usize {
    let len = scores.0.len();
    if config.enable_select {
        resolve_best_from(scores, schedule, config.select_start(len))
    } else {
        len - 1
    }
}

/// Runs one sample through the critique loop.
pub fn run_episode(
    sample: &CompletionSample,
    generator: &dyn Generator,
    retriever: &dyn Retriever,
    scorer: &dyn Scorer,
    config: &RunConfig,
) -> Result<EpisodeResult, EpisodeError> {
    let wrap = |source: anyhow::Error| EpisodeError {
        sample_id: sample.id.clone(),
        source,
    };
    let schedule = config.effective_schedule();
    let corpus_ref = sample.corpus_ref.as_deref().unwrap_or("");
    let mut iterations = Vec::new();
    let mut scores = Vec::new();
    let mut snippets: Vec<Snippet> = Vec::new();
    let mut retrieval_count = 0;

    for i in 0..=config.max_iter {
        let request = GenerationRequest {
            sample,
            iteration: i,
            snippets: &snippets,
        };
        let trace = generator.complete(&request).map_err(wrap)?;
        // An empty generation tells us nothing: score it 0 so it is retried and never selected.
        let s_hat = if trace.is_empty() {
            0.0
        } else {
            scorer.score(sample, &trace).map_err(|e| wrap(e.into()))?
        };
        iterations.push(IterationRecord {
            index: i,
            trace,
            retrieved: i > 0,
            snippet_ids: (i > 0).then(|| snippets.iter().map(|s| s.id.clone()).collect()),
        });
        scores.push(s_hat);

        if i == config.max_iter || (config.enable_adaptive && !is_retrieve(s_hat, schedule.t_rag_at(i))) {
            break;
        }
        let previous = (i >= 1).then(|| iterations[i].trace.text.as_str());
        let query = build_query(&sample.prompt, previous, config.window_lines);
        let found = retriever.retrieve(&query, corpus_ref, config.top_k).map_err(wrap)?;
        snippets = fit_snippets(found, config.snippet_char_budget);
        retrieval_count += 1;
    }

    let scores = ScoreLog(scores);
    let chosen_index = selected(&scores, &schedule, config);
    Ok(EpisodeResult {
        chosen_text: iterations[chosen_index].trace.text.clone(),
        episode: EpisodeRecord {
            sample_id: sample.id.clone(),
            iterations,
        },
        scores,
        retrieval_count,
        chosen_index,
    })
}

/// The episode as it would have ended with `max_iter = budget`.
fn prefix_outcome(result: &EpisodeResult, budget: usize, schedule: &ThresholdSchedule, config: &RunConfig) -> (usize, usize) {
    let len = result.scores.0.len().min(budget + 1);
    let scores = ScoreLog(result.scores.0[..len].to_vec());
    (len - 1, selected(&scores, schedule, config))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardMetrics {
    pub em: Vec<f64>,
    pub es: Vec<f64>,
    pub aart: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineMetrics {
    pub em: Vec<f64>,
    pub es: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distributions {
    /// Fraction of samples per 0.1-wide ES bucket, per always-retrieve stage.
    pub es_histogram: BTreeMap<String, Vec<f64>>,
    /// Fraction of samples whose ES strictly dropped versus the previous stage.
    pub degeneration_rate: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub budgets: Vec<usize>,
    pub card: CardMetrics,
    pub baseline: BaselineMetrics,
    pub distributions: Distributions,
    pub failures: usize,
}

impl BenchmarkReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization cannot fail");
        s.push('\n');
        s
    }
}

/// One budget's outcome for one sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmOutcome {
    pub retrievals: usize,
    pub chosen_index: usize,
    pub metric: MetricValue,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleOutcome {
    pub sample_id: String,
    /// Per budget, same order as the report's budgets.
    pub card: Vec<ArmOutcome>,
    /// Always-retrieve metrics for stages 0 (zero-shot) ..= max budget.
    pub stages: Vec<MetricValue>,
}

#[derive(Debug)]
pub struct BenchmarkRun {
    pub report: BenchmarkReport,
    /// Successful samples, in input order.
    pub samples: Vec<SampleOutcome>,
    pub errors: Vec<EpisodeError>,
    pub zero_shot: MetricValue,
}

pub fn stage_name(stage: usize) -> String {
    if stage == 0 {
        "zero_shot".to_string()
    } else {
        format!("rg_{stage}")
    }
}

fn evaluate_sample(
    sample: &CompletionSample,
    generator: &dyn Generator,
    retriever: &dyn Retriever,
    scorer: &dyn Scorer,
    config: &RunConfig,
    budgets: &[usize],
) -> Result<SampleOutcome, EpisodeError> {
    let max_budget = *budgets.last().expect("budgets checked nonempty");
    let measure = |text: &str| metrics::measure(&sample.ground_truth, text, config.truncate_lines);

    let baseline_config = RunConfig {
        max_iter: max_budget,
        mode: Mode::Single,
        enable_adaptive: false,
        enable_select: false,
        ..config.clone()
    };
    let baseline = run_episode(sample, generator, retriever, scorer, &baseline_config)?;
    let stages: Vec<MetricValue> = baseline.episode.iterations.iter().map(|it| measure(&it.trace.text)).collect();

    // Single-RAG arm: gated from the zero-shot generation. In iterative mode
    // it only serves budget 1; larger budgets build on an unconditional RG_1.
    let single_config = RunConfig {
        max_iter: if config.mode == Mode::Iterative { 1 } else { max_budget },
        mode: Mode::Single,
        ..config.clone()
    };
    let single = run_episode(sample, generator, retriever, scorer, &single_config)?;
    let iterative = if config.mode == Mode::Iterative && max_budget >= 2 {
        let cfg = RunConfig {
            max_iter: max_budget,
            ..config.clone()
        };
        Some((run_episode(sample, generator, retriever, scorer, &cfg)?, cfg))
    } else {
        None
    };

    let card = budgets
        .iter()
        .map(|&b| {
            let (result, cfg) = match &iterative {
                Some((r, cfg)) if b >= 2 => (r, cfg),
                _ => (&single, &single_config),
            };
            let (retrievals, chosen_index) = prefix_outcome(result, b, &cfg.effective_schedule(), cfg);
            ArmOutcome {
                retrievals,
                chosen_index,
                metric: measure(&result.episode.iterations[chosen_index].trace.text),
            }
        })
        .collect();
    Ok(SampleOutcome {
        sample_id: sample.id.clone(),
        card,
        stages,
    })
}

/// Runs both arms over all samples. Per-sample failures are collected, not fatal.
pub fn run_benchmark(
    samples: &[CompletionSample],
    generator: &dyn Generator,
    retriever: &dyn Retriever,
    scorer: &dyn Scorer,
    config: &RunConfig,
    budgets: &[usize],
) -> Result<BenchmarkRun, String> {
    if budgets.is_empty() || budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err("budgets must be nonempty and strictly ascending".into());
    }
    if samples.is_empty() {
        return Err("no samples to benchmark".into());
    }
    let max_budget = *budgets.last().unwrap();
    RunConfig {
        max_iter: max_budget,
        ..config.clone()
    }
    .validate()?;

    let eval = |s: &CompletionSample| evaluate_sample(s, generator, retriever, scorer, config, budgets);
    let concurrent = generator.supports_concurrency() && retriever.supports_concurrency() && scorer.supports_concurrency();
    let results: Vec<Result<SampleOutcome, EpisodeError>> = if concurrent && config.workers != 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| e.to_string())?;
        pool.install(|| samples.par_iter().map(eval).collect())
    } else {
        samples.iter().map(eval).collect()
    };

    let mut outcomes = Vec::new();
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => errors.push(e),
        }
    }
    let report = aggregate(budgets, max_budget, &outcomes, errors.len());
    let zero_shot = MetricValue {
        es: mean(outcomes.iter().map(|o| o.stages[0].es)),
        em: false,
    };
    Ok(BenchmarkRun {
        report,
        samples: outcomes,
        errors,
        zero_shot,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn em_rate<'a>(values: impl Iterator<Item = &'a MetricValue>) -> f64 {
    mean(values.map(|m| if m.em { 1.0 } else { 0.0 }))
}

/// ES bucket in 0.1 steps; ES = 1 falls in the last bucket.
pub fn es_bucket(es: f64) -> usize {
    ((es * 10.0).floor().max(0.0) as usize).min(9)
}

fn aggregate(budgets: &[usize], max_budget: usize, outcomes: &[SampleOutcome], failures: usize) -> BenchmarkReport {
    let card = CardMetrics {
        em: (0..budgets.len()).map(|k| em_rate(outcomes.iter().map(|o| &o.card[k].metric))).collect(),
        es: (0..budgets.len()).map(|k| mean(outcomes.iter().map(|o| o.card[k].metric.es))).collect(),
        aart: (0..budgets.len()).map(|k| mean(outcomes.iter().map(|o| o.card[k].retrievals as f64))).collect(),
    };
    let baseline = BaselineMetrics {
        em: budgets.iter().map(|&b| em_rate(outcomes.iter().map(|o| &o.stages[b]))).collect(),
        es: budgets.iter().map(|&b| mean(outcomes.iter().map(|o| o.stages[b].es))).collect(),
    };
    let n = outcomes.len().max(1) as f64;
    let mut es_histogram = BTreeMap::new();
    let mut degeneration_rate = BTreeMap::new();
    for stage in 0..=max_budget {
        let mut hist = vec![0.0; 10];
        for o in outcomes {
            hist[es_bucket(o.stages[stage].es)] += 1.0;
        }
        es_histogram.insert(stage_name(stage), hist.into_iter().map(|c| c / n).collect());
        if stage > 0 {
            let dropped = outcomes
                .iter()
                .filter(|o| o.stages[stage].es < o.stages[stage - 1].es)
                .count();
            degeneration_rate.insert(stage_name(stage), dropped as f64 / n);
        }
    }
    BenchmarkReport {
        budgets: budgets.to_vec(),
        card,
        baseline,
        distributions: Distributions {
            es_histogram,
            degeneration_rate,
        },
        failures,
    }
}

/// Human-readable summary laid out as Zero-shot | RG_i | CARD-RG_i.
pub fn format_table(run: &BenchmarkRun) -> String {
    let r = &run.report;
    let zero_em = em_rate(run.samples.iter().map(|o| &o.stages[0]));
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:>8} {:>8} {:>8}\n",
        "Arm", "EM", "ES", "aART"
    ));
    out.push_str(&format!(
        "{:<10} {:>8.2} {:>8.2} {:>8.3}\n",
        "Zero-shot",
        100.0 * zero_em,
        100.0 * run.zero_shot.es,
        0.0
    ));
    for (k, b) in r.budgets.iter().enumerate() {
        out.push_str(&format!(
            "{:<10} {:>8.2} {:>8.2} {:>8.3}\n",
            format!("RG_{b}"),
            100.0 * r.baseline.em[k],
            100.0 * r.baseline.es[k],
            *b as f64
        ));
        let saved = if *b > 0 { 100.0 * (1.0 - r.card.aart[k] / *b as f64) } else { 0.0 };
        out.push_str(&format!(
            "{:<10} {:>8.2} {:>8.2} {:>8.3} (-{saved:.1}%)\n",
            format!("CARD-RG_{b}"),
            100.0 * r.card.em[k],
            100.0 * r.card.es[k],
            r.card.aart[k]
        ));
    }
    if r.failures > 0 {
        out.push_str(&format!("failures: {}\n", r.failures));
    }
    out
}
