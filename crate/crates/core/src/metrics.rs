//! Evaluation suite: corpus BLEU-1..4, ROUGE-L, CIDEr for generated text,
//! and micro-averaged precision/recall/F1 for 14-label clinical vectors.
//!
//! Tokenization is pinned so scores are reproducible: lowercase, drop ASCII
//! punctuation characters, split on whitespace.
//!
//! BLEU here is corpus-level with a single reference per candidate. The
//! per-order match count is the number of candidate n-grams whose type occurs
//! in the reference, clipped at the reference's total n-gram count, with the
//! usual geometric mean over orders and brevity penalty `exp(1 - r/c)` when
//! the candidate corpus is shorter than the reference corpus.
//!
//! CIDEr is the plain TF-IDF variant without a length penalty: the mean over
//! n = 1..4 of ten times the average TF-IDF cosine, with IDF `ln(N) -
//! ln(max(df, 1))` computed over the reference corpus and zero-vector cosines
//! defined as zero.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Number of disease categories used throughout the engine.
pub const NUM_DISEASES: usize = 14;

/// Fixed-length multi-hot label vector over the 14 diseases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelVector {
    bits: [bool; NUM_DISEASES],
}

impl LabelVector {
    pub fn new(bits: [bool; NUM_DISEASES]) -> Self {
        Self { bits }
    }

    pub fn empty() -> Self {
        Self { bits: [false; NUM_DISEASES] }
    }

    pub fn from_indices(indices: &[usize]) -> Result<Self> {
        let mut bits = [false; NUM_DISEASES];
        for &i in indices {
            if i >= NUM_DISEASES {
                return Err(Error::InvalidInput(format!("label index {i} out of range")));
            }
            bits[i] = true;
        }
        Ok(Self { bits })
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().copied()
    }

    pub fn positives(&self) -> Vec<usize> {
        (0..NUM_DISEASES).filter(|&i| self.bits[i]).collect()
    }

    pub fn count_positives(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn to_multihot(&self) -> u16 {
        self.bits
            .iter()
            .enumerate()
            .fold(0u16, |acc, (i, b)| if *b { acc | (1 << i) } else { acc })
    }

    pub fn from_multihot(bits: u16) -> Result<Self> {
        if bits >= 1 << NUM_DISEASES {
            return Err(Error::InvalidInput(format!("multi-hot {bits:#x} uses out-of-range bits")));
        }
        let mut out = [false; NUM_DISEASES];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = bits & (1 << i) != 0;
        }
        Ok(Self { bits: out })
    }

    /// Comma-separated 0/1 row, e.g. `0,1,0,...`.
    pub fn to_csv_row(&self) -> String {
        self.bits
            .iter()
            .map(|b| if *b { "1" } else { "0" })
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse_csv_row(row: &str) -> Result<Self> {
        let fields: Vec<&str> = row.trim().split(',').collect();
        if fields.len() != NUM_DISEASES {
            return Err(Error::InvalidInput(format!(
                "label row has {} fields, expected {NUM_DISEASES}",
                fields.len()
            )));
        }
        let mut bits = [false; NUM_DISEASES];
        for (i, f) in fields.iter().enumerate() {
            bits[i] = match f.trim() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::InvalidInput(format!("label field `{other}` is not 0 or 1")))
                }
            };
        }
        Ok(Self { bits })
    }
}

/// Lowercases, removes ASCII punctuation, and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

const NGRAM_SEP: char = '\u{1f}';

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() < n {
        return counts;
    }
    for window in tokens.windows(n) {
        let key = window.join(&NGRAM_SEP.to_string());
        *counts.entry(key).or_insert(0) += 1;
    }
    counts
}

fn total_ngrams(tokens: &[String], n: usize) -> usize {
    tokens.len().saturating_sub(n - 1)
}

/// Corpus BLEU-n for parallel candidate/reference token lists, n in 1..=4.
pub fn bleu_n(candidates: &[Vec<String>], references: &[Vec<String>], n: usize) -> Result<f64> {
    if !(1..=4).contains(&n) {
        return Err(Error::InvalidInput(format!("BLEU order {n} outside 1..=4")));
    }
    if candidates.len() != references.len() {
        return Err(Error::InvalidInput(format!(
            "candidate count {} does not match reference count {}",
            candidates.len(),
            references.len()
        )));
    }
    if candidates.is_empty() {
        return Err(Error::InvalidInput("empty evaluation corpus".into()));
    }

    let cand_len: usize = candidates.iter().map(Vec::len).sum();
    let ref_len: usize = references.iter().map(Vec::len).sum();
    if cand_len == 0 {
        return Ok(0.0);
    }

    let mut log_precision_sum = 0.0;
    for order in 1..=n {
        let mut matched = 0usize;
        let mut total = 0usize;
        for (cand, refr) in candidates.iter().zip(references) {
            let ref_counts = ngram_counts(refr, order);
            let ref_total = total_ngrams(refr, order);
            let hits: usize = ngram_counts(cand, order)
                .iter()
                .filter(|(g, _)| ref_counts.contains_key(*g))
                .map(|(_, c)| *c)
                .sum();
            matched += hits.min(ref_total);
            total += total_ngrams(cand, order);
        }
        if matched == 0 || total == 0 {
            return Ok(0.0);
        }
        log_precision_sum += (matched as f64 / total as f64).ln();
    }

    let bp = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    Ok(bp * (log_precision_sum / n as f64).exp())
}

/// Length of the longest common subsequence, two-row dynamic program.
pub fn lcs_length(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for ai in a {
        for (j, bj) in b.iter().enumerate() {
            cur[j + 1] = if ai == bj {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F1 for one candidate/reference pair.
pub fn rouge_l_pair(candidate: &[String], reference: &[String]) -> Result<f64> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(Error::InvalidInput("ROUGE-L requires non-empty token sequences".into()));
    }
    let lcs = lcs_length(candidate, reference) as f64;
    let p = lcs / candidate.len() as f64;
    let r = lcs / reference.len() as f64;
    if p + r == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * p * r / (p + r))
}

/// Mean ROUGE-L F1 over a parallel corpus.
pub fn rouge_l(candidates: &[Vec<String>], references: &[Vec<String>]) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::InvalidInput("candidate/reference length mismatch".into()));
    }
    if candidates.is_empty() {
        return Err(Error::InvalidInput("empty evaluation corpus".into()));
    }
    let mut sum = 0.0;
    for (c, r) in candidates.iter().zip(references) {
        sum += rouge_l_pair(c, r)?;
    }
    Ok(sum / candidates.len() as f64)
}

fn tfidf_vector(tokens: &[String], n: usize, df: &BTreeMap<String, usize>, n_docs: f64) -> BTreeMap<String, f64> {
    ngram_counts(tokens, n)
        .into_iter()
        .map(|(g, c)| {
            let doc_freq = df.get(&g).copied().unwrap_or(0).max(1) as f64;
            (g, c as f64 * (n_docs.ln() - doc_freq.ln()))
        })
        .collect()
}

fn sparse_cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let dot: f64 = a
        .iter()
        .filter_map(|(g, va)| b.get(g).map(|vb| va * vb))
        .sum();
    let na: f64 = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Plain corpus CIDEr over parallel token lists.
pub fn cider(candidates: &[Vec<String>], references: &[Vec<String>]) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::InvalidInput("candidate/reference length mismatch".into()));
    }
    if candidates.is_empty() {
        return Err(Error::InvalidInput("empty evaluation corpus".into()));
    }
    let n_docs = references.len() as f64;
    let mut total = 0.0;
    for n in 1..=4 {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for refr in references {
            for g in ngram_counts(refr, n).keys() {
                *df.entry(g.clone()).or_insert(0) += 1;
            }
        }
        let mut cos_sum = 0.0;
        for (cand, refr) in candidates.iter().zip(references) {
            let vc = tfidf_vector(cand, n, &df, n_docs);
            let vr = tfidf_vector(refr, n, &df, n_docs);
            cos_sum += sparse_cosine(&vc, &vr);
        }
        total += 10.0 * cos_sum / candidates.len() as f64;
    }
    Ok(total / 4.0)
}

/// Micro-averaged precision, recall, and F1 over every label slot.
pub fn ce_scores(predicted: &[LabelVector], truth: &[LabelVector]) -> Result<(f64, f64, f64)> {
    if predicted.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "predicted count {} does not match truth count {}",
            predicted.len(),
            truth.len()
        )));
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for (p, t) in predicted.iter().zip(truth) {
        for (pb, tb) in p.iter().zip(t.iter()) {
            match (pb, tb) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok((precision, recall, f1))
}
