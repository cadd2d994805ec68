//! The 1-mask conditional word distribution derived from Inside-Outside,
//! and corpus perplexity under it.
//!
//! Masking position `m` sets `alpha(A,m,m) = 1` for every pre-terminal,
//! which marginalizes the missing word because lexical rows sum to 1. The
//! conditional is then
//! `Pr[w_m = w | rest] = sum_A beta(A,m,m) Pr[A->w] / normalizer`.
//!
//! The outside value of a span never consumes inside values from the span's
//! interior, so `beta(A,m,m)` is identical whether or not position `m` is
//! masked. The perplexity driver exploits this: one unmasked chart per
//! sentence serves every mask position, bitwise-equal to the per-position
//! masked charts (asserted in tests).

use serde::Serialize;
use thiserror::Error;

use crate::approx::{RestrictionSpec, TransformBank};
use crate::chart::{self, ChartError, IoConfig, ScaleMode};
use crate::grammar::Grammar;
use crate::parallel::Parallelism;

#[derive(Debug, Error)]
pub enum MlmError {
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error("no word at position {position} makes the sentence derivable")]
    UndefinedConditional { position: usize },
    #[error("no tokens scored")]
    NothingScored,
}

/// Conditional distribution of the word at one masked position.
#[derive(Debug, Clone)]
pub struct MaskDistribution {
    pub position: usize,
    /// Indexed by word id; sums to 1.
    pub probs: Vec<f64>,
}

impl MaskDistribution {
    pub fn prob_of(&self, g: &Grammar, word: &str) -> f64 {
        g.word_id(word).map_or(0.0, |w| self.probs[w])
    }

    /// Highest-probability word id (ties by smaller id).
    pub fn argmax(&self) -> usize {
        let mut best = 0usize;
        for (w, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = w;
            }
        }
        best
    }
}

fn conditional_from_chart(
    g: &Grammar,
    ch: &chart::IOChart,
    m: usize,
    restriction: Option<&RestrictionSpec>,
) -> Option<Vec<f64>> {
    let pre: Vec<usize> = match restriction {
        Some(r) => r.pre_ids().to_vec(),
        None => g.pre_terminal_ids().collect(),
    };
    let betas: Vec<f64> = pre.iter().map(|&a| ch.beta(a, m, m)).collect();
    let mut probs = vec![0.0; g.vocab().len()];
    let mut normalizer = 0.0;
    for (t, &a) in pre.iter().enumerate() {
        let b = betas[t];
        if b == 0.0 {
            continue;
        }
        let row = g.lexical_row(a);
        for (w, &p) in row.iter().enumerate() {
            let v = b * p;
            probs[w] += v;
            normalizer += v;
        }
    }
    if normalizer == 0.0 {
        return None;
    }
    for p in &mut probs {
        *p /= normalizer;
    }
    Some(probs)
}

/// The 1-mask conditional at position `m` (1-based). The token at `m` is
/// ignored and need not be in the vocabulary. With a restriction and/or
/// transform bank the chart comes from the approximate recursions.
pub fn one_mask_distribution(
    g: &Grammar,
    words: &[&str],
    m: usize,
    restriction: Option<&RestrictionSpec>,
    transforms: Option<&TransformBank>,
    scale_mode: ScaleMode,
) -> Result<MaskDistribution, MlmError> {
    let config = IoConfig {
        restriction,
        transforms,
        scale_mode,
    };
    let ch = chart::complete(g, words, Some(m), &config)?;
    let probs = conditional_from_chart(g, &ch, m, restriction)
        .ok_or(MlmError::UndefinedConditional { position: m })?;
    Ok(MaskDistribution { position: m, probs })
}

/// Perplexity result; `skipped` counts (sentence, position) pairs with an
/// undefined conditional, zero probability of the true word, or an
/// out-of-vocabulary sentence.
#[derive(Debug, Clone, Serialize)]
pub struct PerplexityReport {
    pub ppl: f64,
    pub tokens_scored: usize,
    pub skipped: usize,
    pub oov_sentences: usize,
    /// Averaging policy marker: the geometric mean is over all scored
    /// (sentence, position) pairs, i.e. per token.
    pub averaging: &'static str,
}

/// 1-mask perplexity over every position of every sentence:
/// `exp(-(1/M) * sum ln Pr[w_m | rest])` with `M` the scored-token count.
pub fn one_mask_perplexity(
    g: &Grammar,
    corpus: &[Vec<String>],
    restriction: Option<&RestrictionSpec>,
    transforms: Option<&TransformBank>,
    scale_mode: ScaleMode,
    par: &Parallelism,
) -> Result<PerplexityReport, MlmError> {
    let config = IoConfig {
        restriction,
        transforms,
        scale_mode,
    };
    struct SentenceScore {
        ln_sum: f64,
        scored: usize,
        skipped: usize,
        oov: bool,
    }
    let per_sentence: Vec<SentenceScore> = par.map_indexed(corpus.len(), |s| {
        let words: Vec<&str> = corpus[s].iter().map(|w| w.as_str()).collect();
        let ch = match chart::complete(g, &words, None, &config) {
            Ok(c) => c,
            Err(ChartError::OutOfVocab { .. }) => {
                return SentenceScore {
                    ln_sum: 0.0,
                    scored: 0,
                    skipped: words.len(),
                    oov: true,
                }
            }
            Err(_) => {
                return SentenceScore {
                    ln_sum: 0.0,
                    scored: 0,
                    skipped: words.len(),
                    oov: false,
                }
            }
        };
        let mut ln_sum = 0.0;
        let mut scored = 0usize;
        let mut skipped = 0usize;
        for m in 1..=words.len() {
            let w = g.word_id(words[m - 1]).expect("chart checked vocab");
            match conditional_from_chart(g, &ch, m, restriction) {
                Some(probs) if probs[w] > 0.0 => {
                    ln_sum += probs[w].ln();
                    scored += 1;
                }
                _ => skipped += 1,
            }
        }
        SentenceScore {
            ln_sum,
            scored,
            skipped,
            oov: false,
        }
    });

    let mut ln_total = 0.0;
    let mut tokens_scored = 0usize;
    let mut skipped = 0usize;
    let mut oov_sentences = 0usize;
    for s in per_sentence {
        ln_total += s.ln_sum;
        tokens_scored += s.scored;
        skipped += s.skipped;
        if s.oov {
            oov_sentences += 1;
        }
    }
    if tokens_scored == 0 {
        return Err(MlmError::NothingScored);
    }
    Ok(PerplexityReport {
        ppl: (-ln_total / tokens_scored as f64).exp(),
        tokens_scored,
        skipped,
        oov_sentences,
        averaging: "per-token",
    })
}
