//! Command-line interface.
//!
//! Every command writes its outputs atomically and exits nonzero on error.
//! `run` and `sweep` read a JSON manifest; flags override manifest fields,
//! which override defaults. Relative paths in a manifest are resolved
//! against the manifest's directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::estimator::{
    self, build_dataset, load_model, save_model, train_with_history, EstimatorModel, OracleScorer, Scorer, TrainParams,
    TrainingExample,
};
use crate::features::{features_from_trace, FeatureSet, FeatureVector};
use crate::io::{write_atomic, write_string_atomic};
use crate::metrics;
use crate::orchestrator::{
    format_table, run_benchmark, BenchmarkRun, Generator, NullRetriever, ReplayGenerator, Retriever, RunConfig,
};
use crate::policy::ThresholdSchedule;
use crate::simkit::{
    always_retrieve_records, gen_corpus, latency_model, JaccardRetriever, LatencyParams, LatencyRow, MockGenerator,
    SynthParams, SyntheticBenchmark,
};
use crate::trace::{open_traces, write_traces, CompletionSample, TraceRecord};

#[derive(Parser, Debug)]
#[command(name = "ragcrit", version, about = "Uncertainty-gated retrieval for code completion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Extract one feature vector per logged iteration.
    Features(FeaturesArgs),
    /// Train the quality estimator on a feature file.
    Train(TrainArgs),
    /// Score every iteration of a trace file with a trained model.
    Score(ScoreArgs),
    /// Run the benchmark described by a manifest.
    Run(RunArgs),
    /// Rerun the benchmark over a grid of one threshold.
    Sweep(SweepArgs),
    /// Print the expected latency table.
    Latency(LatencyArgs),
    /// Write a synthetic corpus and its samples.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct FeaturesArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "full")]
    pub feature_set: FeatureSet,
    /// Attach the true edit similarity of each iteration.
    #[arg(long)]
    pub label: bool,
    /// Do not cut predictions to the ground truth's line count before labelling.
    #[arg(long)]
    pub no_truncate: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_leaves: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum RunMode {
    Synthetic,
    Replay,
}

#[derive(Args, Debug, Clone)]
pub struct RunOverrides {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value = "synthetic")]
    pub mode: RunMode,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub num_samples: Option<usize>,
    /// Comma-separated, strictly ascending.
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<usize>>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Also write the estimator used for the run (trained or loaded) here.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: RunOverrides,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweptThreshold {
    #[value(name = "t_rag")]
    TRag,
    #[value(name = "t_acc")]
    TAcc,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: RunOverrides,
    #[arg(long, value_enum)]
    pub sweep: SweptThreshold,
    /// `start:stop:step` (inclusive) or a comma-separated list.
    #[arg(long)]
    pub grid: String,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Args, Debug)]
pub struct LatencyArgs {
    #[arg(long)]
    pub t_r: f64,
    #[arg(long)]
    pub art_single: f64,
    #[arg(long, value_delimiter = ',')]
    pub art_marginal: Vec<f64>,
    #[arg(long)]
    pub t_d: Option<f64>,
    #[arg(long)]
    pub t_g0: Option<f64>,
    #[arg(long)]
    pub t_gi: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Take generation parameters from this manifest's `synth` section.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub num_samples: Option<usize>,
    /// Also write always-retrieve episodes with this many retrievals to `traces.jsonl`.
    #[arg(long)]
    pub traces: Option<usize>,
}

/// Where the benchmark's quality estimates come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    /// A trained estimator: loaded from `model`, or trained on a fresh synthetic set.
    #[default]
    Model,
    /// The true edit similarity.
    Oracle,
}

/// Synthetic training set used when a synthetic run has no model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSetup {
    pub seed: u64,
    pub num_samples: usize,
    /// Retrievals per logged episode; each episode yields this many + 1 rows.
    pub iterations: usize,
    pub params: TrainParams,
}

impl Default for TrainingSetup {
    fn default() -> Self {
        Self {
            seed: 1_000_003,
            num_samples: 2000,
            iterations: 4,
            params: TrainParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunManifest {
    /// Logged episodes for replay mode.
    pub traces: Option<PathBuf>,
    pub model: Option<PathBuf>,
    /// A directory written by `synth`; synthetic mode uses it instead of generating.
    pub corpus: Option<PathBuf>,
    /// Report path used when `--report` is not given.
    pub output: Option<PathBuf>,
    pub scorer: ScorerKind,
    pub run: RunConfig,
    pub synth: SynthParams,
    pub training: TrainingSetup,
    pub latency: LatencyParams,
    pub feature_set: FeatureSet,
    pub budgets: Vec<usize>,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            traces: None,
            model: None,
            corpus: None,
            output: None,
            scorer: ScorerKind::Model,
            run: RunConfig::default(),
            synth: SynthParams::default(),
            training: TrainingSetup::default(),
            latency: LatencyParams::default(),
            feature_set: FeatureSet::Full,
            budgets: vec![1, 2, 3, 4],
        }
    }
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let mut m: RunManifest =
            serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut m.traces, &mut m.model, &mut m.corpus, &mut m.output].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(m)
    }

    fn apply(&mut self, o: &RunOverrides) {
        if let Some(w) = o.workers {
            self.run.workers = w;
        }
        if let Some(s) = o.seed {
            self.synth.seed = s;
        }
        if let Some(n) = o.num_samples {
            self.synth.num_samples = n;
        }
        if let Some(b) = &o.budgets {
            self.budgets = b.clone();
        }
        if let Some(m) = &o.model {
            self.model = Some(m.clone());
        }
    }

    pub fn validate(&self, mode: RunMode) -> Result<()> {
        let max_budget = match self.budgets.last() {
            Some(&b) if self.budgets.windows(2).all(|w| w[0] < w[1]) => b,
            _ => bail!("budgets must be nonempty and strictly ascending"),
        };
        RunConfig {
            max_iter: max_budget,
            ..self.run.clone()
        }
        .validate()
        .map_err(|e| anyhow!("run config: {e}"))?;
        self.synth.validate().map_err(|e| anyhow!("synth: {e}"))?;
        if mode == RunMode::Replay && self.traces.is_none() {
            bail!("replay mode needs a `traces` path");
        }
        if mode == RunMode::Replay && self.scorer == ScorerKind::Model && self.model.is_none() {
            bail!("replay mode with the model scorer needs a `model` path");
        }
        for p in [&self.traces, &self.model, &self.corpus].into_iter().flatten() {
            if !p.exists() {
                bail!("{}: no such file or directory", p.display());
            }
        }
        Ok(())
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Features(a) => cmd_features(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Score(a) => cmd_score(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Latency(a) => cmd_latency(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

/// One line of a feature file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRecord {
    pub sample_id: String,
    pub iteration: usize,
    pub feature_set: FeatureSet,
    pub features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<f64>,
}

/// Reads every record, printing one diagnostic per bad line; fails if any line was bad.
fn read_trace_file(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut records = Vec::new();
    let mut bad = 0;
    for r in open_traces(path)? {
        match r {
            Ok(rec) => records.push(rec),
            Err(e @ crate::trace::TraceError::Io { .. }) => return Err(e.into()),
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                bad += 1;
            }
        }
    }
    if bad > 0 {
        bail!("{}: {bad} malformed line(s)", path.display());
    }
    Ok(records)
}

fn cmd_features(a: &FeaturesArgs) -> Result<()> {
    let records = read_trace_file(&a.input)?;
    let mut out = Vec::new();
    let mut skipped = 0;
    for rec in &records {
        for it in &rec.episode.iterations {
            if it.trace.is_empty() {
                skipped += 1;
                continue;
            }
            let z = features_from_trace(&it.trace, a.feature_set)
                .with_context(|| format!("sample {} iteration {}", rec.sample.id, it.index))?;
            out.push(FeatureRecord {
                sample_id: rec.sample.id.clone(),
                iteration: it.index,
                feature_set: a.feature_set,
                features: z.values,
                label: a
                    .label
                    .then(|| metrics::score_target_with(&rec.sample, &it.trace, !a.no_truncate)),
            });
        }
    }
    write_jsonl(&a.out, &out)?;
    if skipped > 0 {
        eprintln!("skipped {skipped} empty generation(s)");
    }
    println!("wrote {} feature records to {}", out.len(), a.out.display());
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_atomic(path, |w| -> Result<()> {
        for r in rows {
            serde_json::to_writer(&mut *w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

/// Labelled examples of a feature file; the first error names its line.
pub fn read_feature_file(path: &Path) -> Result<Vec<TrainingExample>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut examples = Vec::new();
    let mut expected: Option<FeatureSet> = None;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = || format!("{}:{}", path.display(), n + 1);
        let rec: FeatureRecord = serde_json::from_str(line).with_context(at)?;
        let expected = *expected.get_or_insert(rec.feature_set);
        if rec.feature_set != expected {
            bail!("{}: feature set {} differs from {} on earlier lines", at(), rec.feature_set.name(), expected.name());
        }
        let label = rec.label.ok_or_else(|| anyhow!("{}: record has no label", at()))?;
        if rec.features.len() != rec.feature_set.dim() {
            bail!("{}: {} features, {} expects {}", at(), rec.features.len(), rec.feature_set.name(), rec.feature_set.dim());
        }
        examples.push(TrainingExample {
            features: FeatureVector {
                values: rec.features,
                feature_set: rec.feature_set,
            },
            label,
        });
    }
    if examples.is_empty() {
        bail!("{}: no feature records", path.display());
    }
    Ok(examples)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let examples = read_feature_file(&a.features)?;
    let defaults = TrainParams::default();
    let params = TrainParams {
        num_trees: a.trees.unwrap_or(defaults.num_trees),
        learning_rate: a.lr.unwrap_or(defaults.learning_rate),
        max_leaves: a.max_leaves.unwrap_or(defaults.max_leaves),
        min_samples_leaf: a.min_leaf.unwrap_or(defaults.min_samples_leaf),
        max_depth: a.max_depth.unwrap_or(defaults.max_depth),
        ..defaults
    };
    let start = Instant::now();
    let outcome = train_with_history(&examples, &params)?;
    let secs = start.elapsed().as_secs_f64();
    save_model(&outcome.model, &a.model)?;
    let mse = estimator::evaluate(&outcome.model, &examples)?;
    println!(
        "trained {} trees on {} rows in {secs:.2} s; training MSE {mse:.6}; model written to {}",
        outcome.model.trees.len(),
        examples.len(),
        a.model.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ScoreRecord<'a> {
    sample_id: &'a str,
    iteration: usize,
    score: f64,
}

fn cmd_score(a: &ScoreArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let records = read_trace_file(&a.traces)?;
    let mut rows = Vec::new();
    for rec in &records {
        for it in &rec.episode.iterations {
            let score = if it.trace.is_empty() {
                0.0
            } else {
                model
                    .score(&rec.sample, &it.trace)
                    .with_context(|| format!("sample {} iteration {}", rec.sample.id, it.index))?
            };
            rows.push(ScoreRecord {
                sample_id: &rec.sample.id,
                iteration: it.index,
                score,
            });
        }
    }
    write_jsonl(&a.out, &rows)?;
    println!("scored {} iterations; written to {}", rows.len(), a.out.display());
    Ok(())
}

/// Everything a benchmark run needs, built once per command.
pub struct RunSetup {
    pub manifest: RunManifest,
    pub samples: Vec<CompletionSample>,
    pub generator: Box<dyn Generator>,
    pub retriever: Box<dyn Retriever>,
    pub scorer: Box<dyn Scorer>,
    pub model: Option<EstimatorModel>,
}

/// Trains an estimator on always-retrieve episodes of a fresh synthetic set.
pub fn train_synthetic_estimator(
    synth: &SynthParams,
    training: &TrainingSetup,
    run: &RunConfig,
    feature_set: FeatureSet,
) -> Result<EstimatorModel> {
    let params = SynthParams {
        seed: training.seed,
        num_samples: training.num_samples,
        ..synth.clone()
    };
    let bench = gen_corpus(&params).map_err(|e| anyhow!("training set: {e}"))?;
    let generator = MockGenerator::for_benchmark(&params, &bench);
    let retriever = JaccardRetriever::default_for(&bench.corpus);
    let records = always_retrieve_records(&bench.samples, &generator, &retriever, training.iterations, run)?;
    let dataset = build_dataset(records.iter(), feature_set, run.truncate_lines)?;
    Ok(estimator::train(&dataset.examples, &training.params)?)
}

pub fn prepare_run(o: &RunOverrides) -> Result<RunSetup> {
    let mut manifest = RunManifest::load(&o.manifest)?;
    manifest.apply(o);
    manifest.validate(o.mode)?;

    let (samples, generator, retriever): (_, Box<dyn Generator>, Box<dyn Retriever>) = match o.mode {
        RunMode::Synthetic => {
            let bench = match &manifest.corpus {
                Some(dir) => SyntheticBenchmark::load_dir(dir)?,
                None => gen_corpus(&manifest.synth).map_err(|e| anyhow!("synth: {e}"))?,
            };
            let generator = MockGenerator::for_benchmark(&manifest.synth, &bench);
            let retriever = JaccardRetriever::default_for(&bench.corpus);
            (bench.samples, Box::new(generator), Box::new(retriever))
        }
        RunMode::Replay => {
            let path = manifest.traces.as_ref().expect("validated");
            let records = read_trace_file(path)?;
            let generator = ReplayGenerator::new(&records);
            let samples = records.into_iter().map(|r| r.sample).collect();
            (samples, Box::new(generator), Box::new(NullRetriever))
        }
    };

    let model = match (manifest.scorer, &manifest.model) {
        (ScorerKind::Oracle, _) => None,
        (ScorerKind::Model, Some(path)) => Some(load_model(path)?),
        (ScorerKind::Model, None) => Some(train_synthetic_estimator(
            &manifest.synth,
            &manifest.training,
            &manifest.run,
            manifest.feature_set,
        )?),
    };
    if let (Some(m), Some(path)) = (&model, &o.model_out) {
        save_model(m, path)?;
    }
    let scorer: Box<dyn Scorer> = match &model {
        Some(m) => Box::new(m.clone()),
        None => Box::new(OracleScorer {
            truncate_lines: manifest.run.truncate_lines,
        }),
    };
    Ok(RunSetup {
        manifest,
        samples,
        generator,
        retriever,
        scorer,
        model,
    })
}

impl RunSetup {
    pub fn benchmark(&self, config: &RunConfig) -> Result<BenchmarkRun> {
        let run = run_benchmark(
            &self.samples,
            self.generator.as_ref(),
            self.retriever.as_ref(),
            self.scorer.as_ref(),
            config,
            &self.manifest.budgets,
        )
        .map_err(|e| anyhow!(e))?;
        for e in &run.errors {
            eprintln!("{e}");
        }
        if run.samples.is_empty() {
            bail!("every sample failed");
        }
        Ok(run)
    }
}

/// Latency rows for the card arm when the budgets are exactly 1, 2, ..., n.
fn run_latency(run: &BenchmarkRun, p: &LatencyParams) -> Option<Vec<LatencyRow>> {
    let r = &run.report;
    if !r.budgets.iter().enumerate().all(|(k, &b)| b == k + 1) {
        return None;
    }
    let art = &r.card.aart;
    let marginal: Vec<f64> = art.windows(2).map(|w| (w[1] - w[0]).clamp(0.0, 1.0)).collect();
    latency_model(p, art[0].clamp(0.0, 1.0), &marginal).ok()
}

fn format_latency(rows: &[LatencyRow]) -> String {
    let mut out = format!("{:<6} {:>8} {:>11} {:>11} {:>8}\n", "Iter", "ART", "CARD ms", "Base ms", "RL");
    for r in rows {
        out.push_str(&format!(
            "{:<6} {:>7.1}% {:>11.1} {:>11.1} {:>7.1}%\n",
            r.iteration,
            100.0 * r.art,
            r.card_ms,
            r.baseline_ms,
            100.0 * r.reduced
        ));
    }
    out
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    let setup = prepare_run(&a.common)?;
    let report_path = a
        .report
        .clone()
        .or_else(|| setup.manifest.output.clone())
        .ok_or_else(|| anyhow!("no report path: pass --report or set `output` in the manifest"))?;
    let run = setup.benchmark(&setup.manifest.run)?;
    write_string_atomic(&report_path, &run.report.to_json())?;
    print!("{}", format_table(&run));
    if let Some(rows) = run_latency(&run, &setup.manifest.latency) {
        print!("\n{}", format_latency(&rows));
    }
    println!("report written to {}", report_path.display());
    Ok(())
}

/// Parses `start:stop:step` (inclusive, within a small tolerance) or `a,b,c`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("bad number {s:?} in grid {spec:?}"));
    let values: Vec<f64> = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(format!("grid {spec:?} must be start:stop:step"));
        };
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
            return Err(format!("grid {spec:?} needs step > 0 and stop >= start"));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        (0..=n).map(|k| start + k as f64 * step).collect()
    } else {
        spec.split(',').map(num).collect::<Result<_, _>>()?
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(format!("grid {spec:?} is empty or not finite"));
    }
    Ok(values)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub es: Vec<f64>,
    pub aart: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub sweep: SweptThreshold,
    /// Value held by the other threshold.
    pub control: f64,
    pub budgets: Vec<usize>,
    pub rows: Vec<SweepRow>,
}

/// Schedule for one sweep point: the swept threshold at `value` for every
/// iteration, the other held at 0.
pub fn sweep_schedule(which: SweptThreshold, value: f64, len: usize, epsilon: f64) -> ThresholdSchedule {
    let (t_rag, t_acc) = match which {
        SweptThreshold::TRag => (value, 0.0),
        SweptThreshold::TAcc => (0.0, value),
    };
    ThresholdSchedule {
        t_rag: vec![t_rag; len],
        t_acc: vec![t_acc; len],
        epsilon,
    }
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let grid = parse_grid(&a.grid).map_err(|e| anyhow!(e))?;
    let setup = prepare_run(&a.common)?;
    let len = *setup.manifest.budgets.last().expect("validated");
    let mut rows = Vec::with_capacity(grid.len());
    for &value in &grid {
        let config = RunConfig {
            schedule: sweep_schedule(a.sweep, value, len.max(1), setup.manifest.run.schedule.epsilon),
            ..setup.manifest.run.clone()
        };
        let run = setup.benchmark(&config).with_context(|| format!("threshold {value}"))?;
        rows.push(SweepRow {
            threshold: value,
            es: run.report.card.es.clone(),
            aart: run.report.card.aart.clone(),
        });
    }
    let report = SweepReport {
        sweep: a.sweep,
        control: 0.0,
        budgets: setup.manifest.budgets.clone(),
        rows,
    };
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write_string_atomic(&a.report, &json)?;
    let last = report.budgets.len() - 1;
    println!("{:>10} {:>8} {:>8}", "threshold", "ES", "aART");
    for r in &report.rows {
        println!("{:>10.3} {:>8.2} {:>8.3}", r.threshold, 100.0 * r.es[last], r.aart[last]);
    }
    println!("sweep report written to {}", a.report.display());
    Ok(())
}

fn cmd_latency(a: &LatencyArgs) -> Result<()> {
    let d = LatencyParams::default();
    let p = LatencyParams {
        t_d: a.t_d.unwrap_or(d.t_d),
        t_r: a.t_r,
        t_g0: a.t_g0.unwrap_or(d.t_g0),
        t_gi: a.t_gi.unwrap_or(d.t_gi),
    };
    let rows = latency_model(&p, a.art_single, &a.art_marginal).map_err(|e| anyhow!(e))?;
    print!("{}", format_latency(&rows));
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let manifest = match &a.manifest {
        Some(path) => RunManifest::load(path)?,
        None => RunManifest::default(),
    };
    let params = SynthParams {
        seed: a.seed.unwrap_or(manifest.synth.seed),
        num_samples: a.num_samples.unwrap_or(manifest.synth.num_samples),
        ..manifest.synth.clone()
    };
    let bench = gen_corpus(&params).map_err(|e| anyhow!("synth: {e}"))?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    bench.write_dir(&a.out)?;
    if let Some(iterations) = a.traces {
        let generator = MockGenerator::for_benchmark(&params, &bench);
        let retriever = JaccardRetriever::default_for(&bench.corpus);
        let records = always_retrieve_records(&bench.samples, &generator, &retriever, iterations, &manifest.run)?;
        write_traces(&records, &a.out.join("traces.jsonl"))?;
    }
    println!(
        "wrote {} samples over {} repositories to {}",
        bench.samples.len(),
        bench.corpus.repos.len(),
        a.out.display()
    );
    Ok(())
}
