//! Synthetic corpora, a mock generator, a lexical retriever and the latency model.

pub mod corpus;
pub mod latency;
pub mod mock;
pub mod retriever;
pub mod synth;

pub use corpus::{read_samples, write_samples, Corpus, SourceFile};
pub use latency::{latency_model, LatencyParams, LatencyRow};
pub use mock::{two_bucket_entropy, MockGenerator};
pub use retriever::{jaccard_sorted, lexical_tokens, JaccardRetriever};
pub use synth::{gen_corpus, line_count, poisson, Decoy, SampleKind, SynthParams, SyntheticBenchmark};

use rayon::prelude::*;

use crate::estimator::ConstantScorer;
use crate::orchestrator::{run_episode, EpisodeError, Generator, Mode, Retriever, RunConfig};
use crate::trace::{CompletionSample, TraceRecord};

/// Traces of always-retrieve episodes with `iterations` retrievals each,
/// in sample order. These are the estimator's training material.
pub fn always_retrieve_records(
    samples: &[CompletionSample],
    generator: &dyn Generator,
    retriever: &dyn Retriever,
    iterations: usize,
    config: &RunConfig,
) -> Result<Vec<TraceRecord>, EpisodeError> {
    let cfg = RunConfig {
        max_iter: iterations,
        mode: Mode::Single,
        enable_adaptive: false,
        enable_select: false,
        ..config.clone()
    };
    let scorer = ConstantScorer(0.0);
    samples
        .par_iter()
        .map(|s| {
            run_episode(s, generator, retriever, &scorer, &cfg).map(|r| TraceRecord {
                sample: s.clone(),
                episode: r.episode,
            })
        })
        .collect()
}
