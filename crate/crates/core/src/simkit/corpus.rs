//! Repositories of plain-text files and the samples JSONL that goes with them.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context};

use crate::io::write_atomic;
use crate::trace::CompletionSample;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub name: String,
    pub text: String,
}

/// Files grouped by repository; a sample's `corpus_ref` names its repository.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub repos: BTreeMap<String, Vec<SourceFile>>,
}

impl Corpus {
    /// Reads `dir/<repo>/<file>`; nested directories below a repo are flattened
    /// into `/`-joined names.
    pub fn load_dir(dir: &Path) -> anyhow::Result<Self> {
        let mut corpus = Corpus::default();
        let entries = fs::read_dir(dir).with_context(|| format!("reading corpus directory {}", dir.display()))?;
        for entry in entries {
            let entry = entry.with_context(|| format!("reading corpus directory {}", dir.display()))?;
            if !entry.file_type()?.is_dir() {
                continue;
            }
            let repo = entry.file_name().to_string_lossy().into_owned();
            let mut files = Vec::new();
            collect_files(&entry.path(), "", &mut files)?;
            files.sort_by(|a, b| a.name.cmp(&b.name));
            corpus.repos.insert(repo, files);
        }
        if corpus.repos.is_empty() {
            bail!("corpus directory {} has no repository subdirectories", dir.display());
        }
        Ok(corpus)
    }

    pub fn write_dir(&self, dir: &Path) -> anyhow::Result<()> {
        for (repo, files) in &self.repos {
            let root = dir.join(repo);
            fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
            for f in files {
                let path = root.join(&f.name);
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
                }
                crate::io::write_string_atomic(&path, &f.text)?;
            }
        }
        Ok(())
    }
}

fn collect_files(dir: &Path, prefix: &str, out: &mut Vec<SourceFile>) -> anyhow::Result<()> {
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let entry = entry?;
        let name = format!("{prefix}{}", entry.file_name().to_string_lossy());
        let path = entry.path();
        if entry.file_type()?.is_dir() {
            collect_files(&path, &format!("{name}/"), out)?;
        } else {
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            out.push(SourceFile { name, text });
        }
    }
    Ok(())
}

pub fn read_samples(path: &Path) -> anyhow::Result<Vec<CompletionSample>> {
    let file = fs::File::open(path).with_context(|| format!("opening samples file {}", path.display()))?;
    let mut samples = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: CompletionSample =
            serde_json::from_str(&line).with_context(|| format!("{}:{}: bad sample", path.display(), n + 1))?;
        samples.push(sample);
    }
    Ok(samples)
}

pub fn write_samples(samples: &[CompletionSample], path: &Path) -> anyhow::Result<()> {
    write_atomic(path, |w| -> anyhow::Result<()> {
        for s in samples {
            serde_json::to_writer(&mut *w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Corpus::default();
        c.repos.insert(
            "r1".into(),
            vec![
                SourceFile {
                    name: "a.txt".into(),
                    text: "x y\nz\n".into(),
                },
                SourceFile {
                    name: "sub/b.txt".into(),
                    text: "q".into(),
                },
            ],
        );
        c.write_dir(dir.path()).unwrap();
        assert_eq!(Corpus::load_dir(dir.path()).unwrap(), c);
    }

    #[test]
    fn samples_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let samples = vec![CompletionSample {
            id: "a".into(),
            prompt: "p\nq".into(),
            ground_truth: "g".into(),
            corpus_ref: Some("r".into()),
        }];
        write_samples(&samples, &path).unwrap();
        assert_eq!(read_samples(&path).unwrap(), samples);
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(Corpus::load_dir(dir.path()).is_err());
        assert!(Corpus::load_dir(&dir.path().join("missing")).is_err());
    }
}
