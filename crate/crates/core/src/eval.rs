//! Byte-level perplexity and next-token accuracy.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;
use crate::transformer::{argmax, ToyTransformer};

pub const BOS: u32 = 256;
pub const EOS: u32 = 257;
pub const PAD: u32 = 258;
pub const BYTE_VOCAB: usize = 259;

/// Anything that maps a token sequence to per-position next-token logits.
pub trait LanguageModel: Sync {
    fn vocab_size(&self) -> usize;

    /// `[ids.len(), vocab]` logits.
    fn logits(&self, ids: &[u32]) -> Result<Matrix>;

    fn expansion_ratio(&self) -> f64 {
        0.0
    }
}

impl LanguageModel for ToyTransformer {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn logits(&self, ids: &[u32]) -> Result<Matrix> {
        ToyTransformer::logits(self, ids)
    }

    fn expansion_ratio(&self) -> f64 {
        self.config.expansion_ratio()
    }
}

/// `[BOS, bytes..., EOS]`.
pub fn byte_tokenize(text: &[u8]) -> Vec<u32> {
    let mut ids = Vec::with_capacity(text.len() + 2);
    ids.push(BOS);
    ids.extend(text.iter().map(|&b| b as u32));
    ids.push(EOS);
    ids
}

/// Drops special tokens and returns the byte payload.
pub fn byte_detokenize(ids: &[u32]) -> Vec<u8> {
    ids.iter().filter(|&&id| id < 256).map(|&id| id as u8).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub documents: Vec<Vec<u8>>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, documents: Vec<Vec<u8>>) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::InvalidArgument("corpus has no documents".into()));
        }
        Ok(Self {
            name: name.into(),
            documents,
        })
    }

    /// A directory yields one document per file (sorted by name); a file
    /// yields one document per non-empty line.
    pub fn load(path: &Path) -> Result<Self> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let meta = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
        let documents = if meta.is_dir() {
            let mut files: Vec<_> = std::fs::read_dir(path)
                .map_err(|e| Error::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            files
                .iter()
                .map(|p| std::fs::read(p).map_err(|e| Error::io(p, e)))
                .collect::<Result<Vec<_>>>()?
        } else {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            bytes
                .split(|&b| b == b'\n')
                .map(|l| l.strip_suffix(b"\r").unwrap_or(l))
                .filter(|l| !l.is_empty())
                .map(<[u8]>::to_vec)
                .collect()
        };
        Self::new(name, documents)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub perplexity: f64,
    pub token_count: usize,
    pub next_token_accuracy: f64,
    pub model_tag: String,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct DocTotals {
    nll: f64,
    correct: usize,
    tokens: usize,
}

/// `-log softmax(row)[target]` in double precision via log-sum-exp.
pub fn token_nll(row: &[f32], target: usize) -> f64 {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let sum: f64 = row.iter().map(|&v| (v as f64 - max).exp()).sum();
    max + sum.ln() - row[target] as f64
}

fn doc_totals<M: LanguageModel + ?Sized>(model: &M, doc: &[u8]) -> Result<DocTotals> {
    let ids = byte_tokenize(doc);
    let vocab = model.vocab_size();
    if let Some(&bad) = ids.iter().find(|&&id| id as usize >= vocab) {
        return Err(Error::InvalidArgument(format!(
            "token {bad} does not fit a vocabulary of {vocab}"
        )));
    }
    let inputs = &ids[..ids.len() - 1];
    let logits = model.logits(inputs)?;
    let mut t = DocTotals::default();
    for (pos, &target) in ids[1..].iter().enumerate() {
        let row = logits.row(pos);
        t.nll += token_nll(row, target as usize);
        if argmax(row) == target as usize {
            t.correct += 1;
        }
        t.tokens += 1;
    }
    Ok(t)
}

fn corpus_totals<M: LanguageModel + ?Sized>(model: &M, corpus: &Corpus) -> Result<DocTotals> {
    let per_doc = corpus
        .documents
        .par_iter()
        .map(|d| doc_totals(model, d))
        .collect::<Result<Vec<_>>>()?;
    // Partials are folded in document order.
    Ok(per_doc.iter().fold(DocTotals::default(), |acc, d| DocTotals {
        nll: acc.nll + d.nll,
        correct: acc.correct + d.correct,
        tokens: acc.tokens + d.tokens,
    }))
}

/// `exp(mean NLL)` over every predicted position, each document scored with
/// its own context.
pub fn perplexity<M: LanguageModel + ?Sized>(model: &M, corpus: &Corpus) -> Result<EvalResult> {
    evaluate(model, corpus, "")
}

pub fn evaluate<M: LanguageModel + ?Sized>(model: &M, corpus: &Corpus, tag: &str) -> Result<EvalResult> {
    let t = corpus_totals(model, corpus)?;
    Ok(EvalResult {
        perplexity: (t.nll / t.tokens as f64).exp(),
        token_count: t.tokens,
        next_token_accuracy: t.correct as f64 / t.tokens as f64,
        model_tag: tag.to_string(),
        ratio: model.expansion_ratio(),
    })
}

pub fn next_token_accuracy<M: LanguageModel + ?Sized>(model: &M, corpus: &Corpus) -> Result<f64> {
    let t = corpus_totals(model, corpus)?;
    Ok(t.correct as f64 / t.tokens as f64)
}
