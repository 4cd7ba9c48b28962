//! Data ingestion, byte-level tokenization plumbing, train/test
//! splitting, and prompt extraction.
//!
//! Documents are files; splitting is by document so no test byte can
//! leak into a training batch. Each document gets a BOS token when
//! tokenized into a stream.

use crate::error::{Error, Result};
use crate::model::Vocab;
use crate::sampling::TaskRng;
use crate::TokenId;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub split: Split,
}

/// Provenance record for a corpus: written as JSON by `ingest`, and
/// sufficient to rebuild the exact same split later.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub source: String,
    pub split_ratio: f64,
    pub seed: u64,
    pub train_bytes: u64,
    pub test_bytes: u64,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    train_docs: Vec<Vec<u8>>,
    test_docs: Vec<Vec<u8>>,
    manifest: CorpusManifest,
}

/// Assigns documents to splits: deterministic shuffle, then the first
/// `round(n * ratio)` documents (clamped so both splits are non-empty)
/// become the training split.
fn assign_splits(n: usize, split_ratio: f64, seed: u64) -> Result<Vec<Split>> {
    if n == 0 {
        return Err(Error::Data("corpus contains no documents".into()));
    }
    if n == 1 {
        return Err(Error::Data(
            "corpus has a single document; cannot produce disjoint train/test splits".into(),
        ));
    }
    if !(0.0..=1.0).contains(&split_ratio) {
        return Err(Error::InvalidParameter(format!(
            "split_ratio {split_ratio} outside [0, 1]"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = TaskRng::from_seed(seed);
    for i in (1..n).rev() {
        let j = rng.below(i + 1);
        order.swap(i, j);
    }
    let n_train = ((n as f64 * split_ratio).round() as usize).clamp(1, n - 1);
    let mut splits = vec![Split::Test; n];
    for &doc in order.iter().take(n_train) {
        splits[doc] = Split::Train;
    }
    Ok(splits)
}

/// Reads every regular file under `dir` (sorted by relative path) and
/// produces a deterministic document-level split.
pub fn ingest(dir: impl AsRef<Path>, split_ratio: f64, seed: u64) -> Result<Corpus> {
    let dir = dir.as_ref();
    let mut paths: Vec<std::path::PathBuf> = Vec::new();
    collect_files(dir, &mut paths)?;
    paths.sort();
    let docs: Vec<Vec<u8>> = paths
        .iter()
        .map(std::fs::read)
        .collect::<std::io::Result<_>>()?;
    let rel: Vec<String> = paths
        .iter()
        .map(|p| {
            p.strip_prefix(dir)
                .unwrap_or(p)
                .to_string_lossy()
                .into_owned()
        })
        .collect();
    build_corpus(docs, rel, dir.to_string_lossy().into_owned(), split_ratio, seed)
}

fn collect_files(dir: &Path, out: &mut Vec<std::path::PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Builds a corpus from in-memory documents; used by tests and by the
/// synthetic corpora in the acceptance suite.
pub fn from_documents(docs: Vec<Vec<u8>>, split_ratio: f64, seed: u64) -> Result<Corpus> {
    let names: Vec<String> = (0..docs.len()).map(|i| format!("doc{i:05}")).collect();
    build_corpus(docs, names, "<memory>".into(), split_ratio, seed)
}

fn build_corpus(
    docs: Vec<Vec<u8>>,
    names: Vec<String>,
    source: String,
    split_ratio: f64,
    seed: u64,
) -> Result<Corpus> {
    if docs.iter().all(|d| d.is_empty()) {
        return Err(Error::Data("all documents are empty".into()));
    }
    let splits = assign_splits(docs.len(), split_ratio, seed)?;
    let mut train_docs = Vec::new();
    let mut test_docs = Vec::new();
    let mut files = Vec::with_capacity(docs.len());
    let (mut train_bytes, mut test_bytes) = (0u64, 0u64);
    for ((doc, name), split) in docs.into_iter().zip(names).zip(splits.iter()) {
        files.push(FileEntry {
            path: name,
            bytes: doc.len() as u64,
            split: split.clone(),
        });
        match split {
            Split::Train => {
                train_bytes += doc.len() as u64;
                train_docs.push(doc);
            }
            Split::Test => {
                test_bytes += doc.len() as u64;
                test_docs.push(doc);
            }
        }
    }
    Ok(Corpus {
        train_docs,
        test_docs,
        manifest: CorpusManifest {
            source,
            split_ratio,
            seed,
            train_bytes,
            test_bytes,
            files,
        },
    })
}

impl Corpus {
    /// Rebuilds a corpus from a manifest, re-reading the files it lists.
    pub fn from_manifest(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(manifest_path.as_ref())?;
        let manifest: CorpusManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("corpus manifest: {e}")))?;
        let base = Path::new(&manifest.source);
        let mut train_docs = Vec::new();
        let mut test_docs = Vec::new();
        for f in &manifest.files {
            let doc = std::fs::read(base.join(&f.path))?;
            match f.split {
                Split::Train => train_docs.push(doc),
                Split::Test => test_docs.push(doc),
            }
        }
        if train_docs.is_empty() || test_docs.is_empty() {
            return Err(Error::Data("manifest lists an empty split".into()));
        }
        Ok(Self {
            train_docs,
            test_docs,
            manifest,
        })
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    pub fn write_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| Error::Format(format!("serializing manifest: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn train_docs(&self) -> &[Vec<u8>] {
        &self.train_docs
    }

    pub fn test_docs(&self) -> &[Vec<u8>] {
        &self.test_docs
    }

    /// Concatenated token stream of the training split, BOS before each document.
    pub fn train_token_stream(&self, vocab: &Vocab) -> Result<Vec<TokenId>> {
        stream_of(&self.train_docs, vocab)
    }

    /// Concatenated token stream of the held-out split.
    pub fn test_token_stream(&self, vocab: &Vocab) -> Result<Vec<TokenId>> {
        stream_of(&self.test_docs, vocab)
    }
}

fn stream_of(docs: &[Vec<u8>], vocab: &Vocab) -> Result<Vec<TokenId>> {
    let mut stream = Vec::new();
    for doc in docs {
        stream.push(vocab.bos());
        stream.extend(vocab.encode(doc)?);
    }
    Ok(stream)
}

/// Evaluation prompts: the first `prompt_len` tokens of sampled
/// held-out documents.
#[derive(Debug, Clone)]
pub struct PromptSet {
    pub prompts: Vec<Vec<TokenId>>,
    pub prompt_len: usize,
    pub seed: u64,
    /// Held-out documents too short to yield a prompt.
    pub skipped_short: usize,
}

/// Samples `n` distinct held-out documents and takes the first
/// `prompt_len` tokens of each (BOS included).
pub fn extract_prompts(
    corpus: &Corpus,
    vocab: &Vocab,
    n: usize,
    prompt_len: usize,
    seed: u64,
) -> Result<PromptSet> {
    if prompt_len == 0 {
        return Err(Error::InvalidParameter("prompt_len must be >= 1".into()));
    }
    // BOS contributes one token, so a document needs prompt_len - 1 bytes.
    let eligible: Vec<usize> = (0..corpus.test_docs.len())
        .filter(|&i| corpus.test_docs[i].len() + 1 >= prompt_len)
        .collect();
    let skipped_short = corpus.test_docs.len() - eligible.len();
    if eligible.len() < n {
        return Err(Error::Data(format!(
            "need {n} held-out documents of at least {prompt_len} tokens, found {} \
             ({skipped_short} skipped as too short)",
            eligible.len()
        )));
    }
    let mut order = eligible;
    let mut rng = TaskRng::from_seed(seed);
    for i in (1..order.len()).rev() {
        let j = rng.below(i + 1);
        order.swap(i, j);
    }
    let prompts = order[..n]
        .iter()
        .map(|&i| {
            let mut toks = vec![vocab.bos()];
            toks.extend(vocab.encode(&corpus.test_docs[i])?);
            toks.truncate(prompt_len);
            Ok(toks)
        })
        .collect::<Result<_>>()?;
    Ok(PromptSet {
        prompts,
        prompt_len,
        seed,
        skipped_short,
    })
}
