//! Labelled-Recall parsing from span marginals, baselines, and unlabelled
//! span F1.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::chart::{self, ChartError, IoConfig};
use crate::grammar::Grammar;
use crate::tree::{ParseTree, Span};

/// An unlabelled set of spans used for evaluation only; no tree-shape
/// requirement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanSet {
    pub len: usize,
    pub spans: BTreeSet<(usize, usize)>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold has {gold} sentences, prediction has {pred}")]
    ListLength { gold: usize, pred: usize },
    #[error("sentence {index}: gold length {gold} != predicted length {pred}")]
    SentenceLength {
        index: usize,
        gold: usize,
        pred: usize,
    },
}

/// Which spans count for F1 and how the empty-vs-empty sentence scores.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EvalPolicy {
    /// Drop `(i, i)` spans before scoring.
    pub exclude_singletons: bool,
    /// Drop the whole-sentence span `(1, L)` before scoring.
    pub exclude_whole_sentence: bool,
    /// Per-sentence F1 when both span sets are empty after exclusions. The
    /// default 1.0 treats two empty claims as perfect agreement.
    pub empty_empty_f1: f64,
}

impl Default for EvalPolicy {
    fn default() -> Self {
        EvalPolicy {
            exclude_singletons: true,
            exclude_whole_sentence: true,
            empty_empty_f1: 1.0,
        }
    }
}

/// Sentence F1 averages per-sentence scores; corpus F1 pools counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Mode {
    Sentence,
    Corpus,
}

/// Score report; `tp/fp/fn` are pooled counts (filled in corpus mode, and
/// also reported for reference in sentence mode).
#[derive(Debug, Clone, Serialize)]
pub struct F1Report {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub mode: F1Mode,
    pub policy: EvalPolicy,
}

/// Applies the policy's exclusions to any collection of spans.
pub fn extract_eval_spans(
    len: usize,
    spans: impl IntoIterator<Item = (usize, usize)>,
    policy: &EvalPolicy,
) -> SpanSet {
    let spans = spans
        .into_iter()
        .filter(|&(i, j)| {
            if policy.exclude_singletons && i == j {
                return false;
            }
            if policy.exclude_whole_sentence && i == 1 && j == len {
                return false;
            }
            true
        })
        .collect();
    SpanSet { len, spans }
}

/// Tree spans after policy exclusions.
pub fn tree_eval_spans(tree: &ParseTree, policy: &EvalPolicy) -> SpanSet {
    extract_eval_spans(tree.len, tree.spans.iter().map(|s| (s.i, s.j)), policy)
}

/// The right-branching baseline: `(k, L)` for every `k < L` plus singletons.
pub fn right_branching(len: usize) -> SpanSet {
    assert!(len >= 1);
    let mut spans = BTreeSet::new();
    for i in 1..=len {
        spans.insert((i, i));
    }
    for i in 1..len {
        spans.insert((i, len));
    }
    spans.insert((1, len));
    SpanSet { len, spans }
}

fn f1_from_counts(tp: u64, fp: u64, fn_: u64) -> (f64, f64, f64) {
    let p = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let r = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

fn check_aligned(gold: &[SpanSet], pred: &[SpanSet]) -> Result<(), EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::ListLength {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    for (index, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len != p.len {
            return Err(EvalError::SentenceLength {
                index,
                gold: g.len,
                pred: p.len,
            });
        }
    }
    Ok(())
}

/// Unweighted mean of per-sentence F1 scores.
pub fn f1_sentence(
    gold: &[SpanSet],
    pred: &[SpanSet],
    policy: &EvalPolicy,
) -> Result<F1Report, EvalError> {
    check_aligned(gold, pred)?;
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    let mut total = 0.0;
    for (g, p) in gold.iter().zip(pred) {
        let inter = g.spans.intersection(&p.spans).count() as u64;
        let (stp, sfp, sfn) = (
            inter,
            p.spans.len() as u64 - inter,
            g.spans.len() as u64 - inter,
        );
        tp += stp;
        fp += sfp;
        fn_ += sfn;
        if g.spans.is_empty() && p.spans.is_empty() {
            total += policy.empty_empty_f1;
        } else {
            total += f1_from_counts(stp, sfp, sfn).2;
        }
    }
    let mean = if gold.is_empty() {
        0.0
    } else {
        total / gold.len() as f64
    };
    let (p, r, _) = f1_from_counts(tp, fp, fn_);
    Ok(F1Report {
        precision: p,
        recall: r,
        f1: mean,
        tp,
        fp,
        fn_,
        mode: F1Mode::Sentence,
        policy: *policy,
    })
}

/// Micro F1 from pooled true positives, false positives, and false negatives.
pub fn f1_corpus(
    gold: &[SpanSet],
    pred: &[SpanSet],
    policy: &EvalPolicy,
) -> Result<F1Report, EvalError> {
    check_aligned(gold, pred)?;
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (g, p) in gold.iter().zip(pred) {
        let inter = g.spans.intersection(&p.spans).count() as u64;
        tp += inter;
        fp += p.spans.len() as u64 - inter;
        fn_ += g.spans.len() as u64 - inter;
    }
    let (p, r, f1) = f1_from_counts(tp, fp, fn_);
    Ok(F1Report {
        precision: p,
        recall: r,
        f1,
        tp,
        fp,
        fn_,
        mode: F1Mode::Corpus,
        policy: *policy,
    })
}

/// Convenience: extract spans from aligned tree lists and score.
pub fn f1_trees(
    gold: &[ParseTree],
    pred: &[ParseTree],
    policy: &EvalPolicy,
    mode: F1Mode,
) -> F1Report {
    let g: Vec<SpanSet> = gold.iter().map(|t| tree_eval_spans(t, policy)).collect();
    let p: Vec<SpanSet> = pred.iter().map(|t| tree_eval_spans(t, policy)).collect();
    match mode {
        F1Mode::Sentence => f1_sentence(&g, &p, policy),
        F1Mode::Corpus => f1_corpus(&g, &p, policy),
    }
    .expect("aligned tree lists")
}

/// A Labelled-Recall parse. `degenerate` is set when the chart had no mass
/// (underivable or out-of-vocabulary sentence) and the right-branching
/// fallback was returned instead.
#[derive(Debug, Clone)]
pub struct LabelledRecallParse {
    pub tree: ParseTree,
    /// Objective value: the sum over tree spans of `max_A mu(A,i,j)`.
    pub score: f64,
    pub degenerate: bool,
}

/// The tree maximizing the sum of per-span best marginals,
/// `G(i,j) = score(i,j) + max_k [G(i,k) + G(k+1,j)]`, ties broken by the
/// smallest split point. Span labels are the argmax symbol per chosen span.
pub fn labelled_recall(
    g: &Grammar,
    words: &[&str],
    config: &IoConfig,
) -> Result<LabelledRecallParse, ChartError> {
    let chart = match chart::complete(g, words, None, config) {
        Ok(c) => c,
        Err(ChartError::OutOfVocab { .. }) => return Ok(fallback_parse(g, words)),
        Err(e) => return Err(e),
    };
    if chart.sentence_value(g) == 0.0 {
        return Ok(fallback_parse(g, words));
    }
    let m = chart::marginals(g, &chart);
    let l = words.len();
    let (spans, score) = best_binary_tree(l, |i, j| m.best_label(i, j).1);
    let tree_spans = spans
        .into_iter()
        .map(|(i, j)| Span {
            label: m.best_label(i, j).0,
            i,
            j,
        })
        .collect();
    Ok(LabelledRecallParse {
        tree: ParseTree {
            len: l,
            spans: tree_spans,
        },
        score,
        degenerate: false,
    })
}

/// The binary span tree over `1..=len` maximizing the sum of `score(i,j)`,
/// with deterministic smallest-`k` tie-breaking. Returns the spans in
/// preorder with the achieved objective.
pub fn best_binary_tree(
    len: usize,
    score: impl Fn(usize, usize) -> f64,
) -> (Vec<(usize, usize)>, f64) {
    let idx = |i: usize, j: usize| (i - 1) * len + (j - 1);
    let mut best = vec![0.0f64; len * len];
    let mut split = vec![0usize; len * len];
    for i in 1..=len {
        best[idx(i, i)] = score(i, i);
    }
    for span_len in 2..=len {
        for i in 1..=len - span_len + 1 {
            let j = i + span_len - 1;
            let mut best_val = f64::NEG_INFINITY;
            let mut best_k = i;
            for k in i..j {
                let v = best[idx(i, k)] + best[idx(k + 1, j)];
                if v > best_val {
                    best_val = v;
                    best_k = k;
                }
            }
            best[idx(i, j)] = score(i, j) + best_val;
            split[idx(i, j)] = best_k;
        }
    }
    let mut spans = Vec::with_capacity(2 * len - 1);
    let mut stack = vec![(1usize, len)];
    while let Some((i, j)) = stack.pop() {
        spans.push((i, j));
        if j > i {
            let k = split[idx(i, j)];
            // push right first so preorder comes out left-to-right
            stack.push((k + 1, j));
            stack.push((i, k));
        }
    }
    (spans, best[idx(1, len)])
}

// Right-branching tree in preorder: (1,L) (1,1) (2,L) (2,2) ... (L,L).
// Internal spans are labeled by the root, leaves by the best lexical symbol.
fn fallback_parse(g: &Grammar, words: &[&str]) -> LabelledRecallParse {
    let l = words.len();
    let mut spans = Vec::with_capacity(2 * l - 1);
    for i in 1..l {
        spans.push(Span {
            label: g.root(),
            i,
            j: l,
        });
        spans.push(Span {
            label: best_lexical_label(g, words[i - 1]),
            i,
            j: i,
        });
    }
    spans.push(Span {
        label: best_lexical_label(g, words[l - 1]),
        i: l,
        j: l,
    });
    LabelledRecallParse {
        tree: ParseTree { len: l, spans },
        score: 0.0,
        degenerate: true,
    }
}

fn best_lexical_label(g: &Grammar, word: &str) -> usize {
    let first_pre = g.pre_terminal_ids().next().unwrap();
    match g.word_id(word) {
        None => first_pre,
        Some(w) => {
            let mut best = (first_pre, f64::NEG_INFINITY);
            for a in g.pre_terminal_ids() {
                let p = g.lexical_prob(a, w);
                if p > best.1 {
                    best = (a, p);
                }
            }
            best.0
        }
    }
}
