//! Sliding-window lexical retriever scored by Jaccard similarity of token sets.

use std::collections::{BTreeMap, HashMap};

use anyhow::anyhow;

use super::corpus::Corpus;
use crate::orchestrator::{Retriever, Snippet};

/// Alphanumeric runs of `text`.
pub fn lexical_tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty())
}

/// `|A ∩ B| / |A ∪ B|` over two sorted, deduplicated slices; 0 if both are empty.
pub fn jaccard_sorted<T: Ord>(a: &[T], b: &[T]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

struct Window {
    id: String,
    text: String,
    tokens: Vec<u32>,
}

pub struct JaccardRetriever {
    vocab: HashMap<String, u32>,
    repos: BTreeMap<String, Vec<Window>>,
}

/// Start lines of windows over `len` lines; the last window reaches the end.
fn window_starts(len: usize, window: usize, stride: usize) -> Vec<usize> {
    let mut starts = vec![0];
    while starts.last().unwrap() + window < len {
        starts.push(starts.last().unwrap() + stride);
    }
    starts
}

impl JaccardRetriever {
    pub fn new(corpus: &Corpus, window_lines: usize, stride: usize) -> Result<Self, String> {
        if window_lines == 0 || stride == 0 {
            return Err("window_lines and stride must be at least 1".into());
        }
        let mut vocab = HashMap::new();
        let mut repos = BTreeMap::new();
        for (repo, files) in &corpus.repos {
            let mut windows = Vec::new();
            let mut files: Vec<_> = files.iter().collect();
            files.sort_by(|a, b| a.name.cmp(&b.name));
            for file in files {
                let lines: Vec<&str> = file.text.lines().collect();
                if lines.is_empty() {
                    continue;
                }
                for start in window_starts(lines.len(), window_lines, stride) {
                    let end = (start + window_lines).min(lines.len());
                    let text = lines[start..end].join("\n");
                    let mut tokens: Vec<u32> = lexical_tokens(&text)
                        .map(|t| {
                            let next = vocab.len() as u32;
                            *vocab.entry(t.to_string()).or_insert(next)
                        })
                        .collect();
                    tokens.sort_unstable();
                    tokens.dedup();
                    windows.push(Window {
                        id: format!("{}:{}", file.name, start),
                        text,
                        tokens,
                    });
                }
            }
            repos.insert(repo.clone(), windows);
        }
        Ok(Self { vocab, repos })
    }

    pub fn default_for(corpus: &Corpus) -> Self {
        Self::new(corpus, 20, 10).expect("default window parameters are valid")
    }

    /// Token ids of a query; tokens unseen in the corpus get ids past the vocabulary.
    fn encode(&self, query: &str) -> Vec<u32> {
        let mut unseen: BTreeMap<&str, u32> = BTreeMap::new();
        let base = self.vocab.len() as u32;
        let mut ids: Vec<u32> = lexical_tokens(query)
            .map(|t| match self.vocab.get(t) {
                Some(&id) => id,
                None => {
                    let next = base + unseen.len() as u32;
                    *unseen.entry(t).or_insert(next)
                }
            })
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

impl Retriever for JaccardRetriever {
    fn retrieve(&self, query: &str, corpus_ref: &str, k: usize) -> anyhow::Result<Vec<Snippet>> {
        let windows = self
            .repos
            .get(corpus_ref)
            .ok_or_else(|| anyhow!("unknown corpus {corpus_ref:?}"))?;
        let q = self.encode(query);
        let mut scored: Vec<(f64, usize)> = windows
            .iter()
            .enumerate()
            .map(|(i, w)| (jaccard_sorted(&q, &w.tokens), i))
            .collect();
        // Windows are stored by (file name, start); the stable sort keeps that order on ties.
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(similarity, i)| Snippet {
                id: windows[i].id.clone(),
                text: windows[i].text.clone(),
                similarity,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simkit::corpus::SourceFile;

    fn corpus(files: &[(&str, &str)]) -> Corpus {
        let mut c = Corpus::default();
        c.repos.insert(
            "r".into(),
            files
                .iter()
                .map(|(n, t)| SourceFile {
                    name: n.to_string(),
                    text: t.to_string(),
                })
                .collect(),
        );
        c
    }

    #[test]
    fn starts_cover_the_file() {
        assert_eq!(window_starts(5, 20, 10), vec![0]);
        assert_eq!(window_starts(20, 20, 10), vec![0]);
        assert_eq!(window_starts(21, 20, 10), vec![0, 10]);
        assert_eq!(window_starts(45, 20, 10), vec![0, 10, 20, 30]);
    }

    #[test]
    fn set_arithmetic() {
        assert!((jaccard_sorted(&["a", "b"], &["b", "c"]) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(jaccard_sorted::<u32>(&[], &[]), 0.0);
        let c = corpus(&[("x.py", "b c")]);
        let r = JaccardRetriever::new(&c, 20, 10).unwrap();
        let hits = r.retrieve("a.b", "r", 5).unwrap();
        assert!((hits[0].similarity - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn identical_window_ranks_first() {
        let c = corpus(&[("a.py", "foo bar\nbaz qux"), ("b.py", "alpha beta\ngamma")]);
        let r = JaccardRetriever::default_for(&c);
        let hits = r.retrieve("alpha beta\ngamma", "r", 10).unwrap();
        assert_eq!(hits[0].id, "b.py:0");
        assert_eq!(hits[0].similarity, 1.0);
        assert_eq!(hits[0].text, "alpha beta\ngamma");
    }

    #[test]
    fn ties_follow_file_and_start_order() {
        let long: String = (0..30).map(|i| format!("w{i}\n")).collect();
        let c = corpus(&[("b.py", "x y"), ("a.py", &long)]);
        let r = JaccardRetriever::default_for(&c);
        let hits = r.retrieve("nothing shared", "r", 10).unwrap();
        assert!(hits.iter().all(|h| h.similarity == 0.0));
        let ids: Vec<_> = hits.iter().map(|h| h.id.as_str()).collect();
        assert_eq!(ids, vec!["a.py:0", "a.py:10", "b.py:0"]);
        assert_eq!(r.retrieve("nothing shared", "r", 2).unwrap().len(), 2);
    }

    #[test]
    fn unknown_corpus_is_an_error() {
        let r = JaccardRetriever::default_for(&corpus(&[("a", "b")]));
        assert!(r.retrieve("q", "nope", 3).is_err());
    }
}
