//! Approximate Inside-Outside: restriction to frequent non-terminals and
//! per-span-length low-rank transforms, plus the harness that measures what
//! an approximation costs in F1 and perplexity.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::chart::{self, ChartError, IoConfig, ScaleMode};
use crate::grammar::Grammar;
use crate::linalg;
use crate::mlm;
use crate::parallel::Parallelism;
use crate::parse_eval::{self, EvalPolicy, F1Mode};
use crate::tree::ParseTree;

#[derive(Debug, Error)]
pub enum ApproxError {
    #[error("restriction must keep the root in-terminal")]
    RootExcluded,
    #[error("restriction must keep at least one in-terminal and one pre-terminal")]
    EmptySubset,
    #[error("unknown symbol `{0}` in transform bank")]
    UnknownSymbol(String),
    #[error("transform bank file: {0}")]
    BadBank(String),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Mlm(#[from] crate::mlm::MlmError),
}

/// Occurrence counts of non-terminals at span heads in gold trees.
#[derive(Debug, Clone)]
pub struct FrequencyTable {
    counts: Vec<u64>,
    n_in: usize,
}

impl FrequencyTable {
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    /// Counts normalized within each kind (in-terminals and pre-terminals
    /// separately); zero when the kind never occurs.
    pub fn normalized(&self) -> Vec<f64> {
        let in_total: u64 = self.counts[..self.n_in].iter().sum();
        let pre_total: u64 = self.counts[self.n_in..].iter().sum();
        self.counts
            .iter()
            .enumerate()
            .map(|(id, &c)| {
                let total = if id < self.n_in { in_total } else { pre_total };
                if total == 0 {
                    0.0
                } else {
                    c as f64 / total as f64
                }
            })
            .collect()
    }

    pub fn to_json(&self, g: &Grammar) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (id, &c) in self.counts.iter().enumerate() {
            map.insert(g.symbol_name(id).to_string(), serde_json::json!(c));
        }
        serde_json::Value::Object(map)
    }

    /// Reads a name-to-count map back against a grammar; symbols absent from
    /// the map count zero, unknown names are an error.
    pub fn from_json(g: &Grammar, v: &serde_json::Value) -> Result<Self, ApproxError> {
        let map = v
            .as_object()
            .ok_or_else(|| ApproxError::BadBank("frequency table must be an object".into()))?;
        let mut counts = vec![0u64; g.n_symbols()];
        for (name, c) in map {
            let sym = g
                .symbol_by_name(name)
                .ok_or_else(|| ApproxError::UnknownSymbol(name.clone()))?;
            counts[sym.id] = c
                .as_u64()
                .ok_or_else(|| ApproxError::BadBank(format!("count for `{name}`")))?;
        }
        Ok(FrequencyTable {
            counts,
            n_in: g.n_in_terminals(),
        })
    }
}

/// Counts every span `(A, i, j)` of every tree; pre-terminals therefore only
/// accrue from singleton spans.
pub fn span_frequencies(g: &Grammar, trees: &[ParseTree]) -> FrequencyTable {
    let mut counts = vec![0u64; g.n_symbols()];
    for t in trees {
        for s in &t.spans {
            counts[s.label] += 1;
        }
    }
    FrequencyTable {
        counts,
        n_in: g.n_in_terminals(),
    }
}

/// The kept in-terminal and pre-terminal subsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestrictionSpec {
    allowed: Vec<bool>,
    in_ids: Vec<usize>,
    pre_ids: Vec<usize>,
    /// True when a requested subset size exceeded the inventory and was
    /// clamped.
    pub clamped: bool,
}

impl RestrictionSpec {
    /// Builds a spec from explicit id lists. The root must be kept and both
    /// lists must be non-empty.
    pub fn new(
        g: &Grammar,
        in_ids: impl IntoIterator<Item = usize>,
        pre_ids: impl IntoIterator<Item = usize>,
    ) -> Result<Self, ApproxError> {
        let mut allowed = vec![false; g.n_symbols()];
        let mut in_v: Vec<usize> = in_ids.into_iter().collect();
        let mut pre_v: Vec<usize> = pre_ids.into_iter().collect();
        in_v.sort_unstable();
        in_v.dedup();
        pre_v.sort_unstable();
        pre_v.dedup();
        if in_v.is_empty() || pre_v.is_empty() {
            return Err(ApproxError::EmptySubset);
        }
        if !in_v.contains(&g.root()) {
            return Err(ApproxError::RootExcluded);
        }
        for &a in &in_v {
            assert!(g.is_in_terminal(a), "in-subset id {a} is not an in-terminal");
            allowed[a] = true;
        }
        for &a in &pre_v {
            assert!(g.is_pre_terminal(a), "pre-subset id {a} is not a pre-terminal");
            allowed[a] = true;
        }
        Ok(RestrictionSpec {
            allowed,
            in_ids: in_v,
            pre_ids: pre_v,
            clamped: false,
        })
    }

    /// The identity restriction keeping every symbol.
    pub fn full(g: &Grammar) -> Self {
        RestrictionSpec::new(g, g.in_terminal_ids(), g.pre_terminal_ids()).unwrap()
    }

    #[inline]
    pub fn allows(&self, id: usize) -> bool {
        self.allowed[id]
    }

    pub fn in_ids(&self) -> &[usize] {
        &self.in_ids
    }

    pub fn pre_ids(&self) -> &[usize] {
        &self.pre_ids
    }
}

/// Top-`k` selection by span-head frequency, ties broken by smaller symbol
/// id, with the root force-included (it counts toward `k_in`). Requested
/// sizes beyond the inventory are clamped and flagged.
pub fn select_subsets(
    g: &Grammar,
    freq: &FrequencyTable,
    k_in: usize,
    k_pre: usize,
) -> Result<RestrictionSpec, ApproxError> {
    if k_in == 0 || k_pre == 0 {
        return Err(ApproxError::EmptySubset);
    }
    let clamped = k_in > g.n_in_terminals() || k_pre > g.n_pre_terminals();
    let k_in = k_in.min(g.n_in_terminals());
    let k_pre = k_pre.min(g.n_pre_terminals());

    let top = |ids: std::ops::Range<usize>, k: usize| -> Vec<usize> {
        let mut v: Vec<usize> = ids.collect();
        v.sort_by(|&x, &y| freq.count(y).cmp(&freq.count(x)).then(x.cmp(&y)));
        v.truncate(k);
        v
    };
    let mut in_ids = top(g.in_terminal_ids(), k_in);
    if !in_ids.contains(&g.root()) {
        in_ids.pop();
        in_ids.push(g.root());
    }
    let pre_ids = top(g.pre_terminal_ids(), k_pre);
    let mut spec = RestrictionSpec::new(g, in_ids, pre_ids)?;
    spec.clamped = clamped;
    Ok(spec)
}

/// One per-span-length transform: `k` orthonormal rows over the kept
/// in-terminal vector.
#[derive(Debug, Clone)]
pub struct LenTransform {
    pub k: usize,
    /// Row-major `k x |in_subset|`.
    pub w: Vec<f64>,
    /// Full eigenvalue spectrum of the correlation matrix, non-increasing.
    pub eigenvalues: Vec<f64>,
}

/// Per-span-length transforms `W^(l)` learned from span marginals.
///
/// Keys are span offsets `l = j - i >= 1` (spans of length `l + 1`).
#[derive(Debug, Clone)]
pub struct TransformBank {
    in_subset: Vec<usize>,
    by_offset: BTreeMap<usize, LenTransform>,
}

impl TransformBank {
    pub fn in_subset(&self) -> &[usize] {
        &self.in_subset
    }

    pub fn offsets(&self) -> impl Iterator<Item = usize> + '_ {
        self.by_offset.keys().copied()
    }

    pub fn get(&self, offset: usize) -> Option<&LenTransform> {
        self.by_offset.get(&offset)
    }

    pub fn matches(&self, r: &RestrictionSpec) -> bool {
        self.in_subset == r.in_ids()
    }

    /// The transform for a span offset; falls back to the nearest trained
    /// offset (lower preferred) when this one is absent. The bool is false on
    /// fallback.
    pub fn transform_for(&self, offset: usize) -> Option<(&LenTransform, bool)> {
        if let Some(t) = self.by_offset.get(&offset) {
            return Some((t, true));
        }
        let below = self.by_offset.range(..offset).next_back();
        let above = self.by_offset.range(offset + 1..).next();
        match (below, above) {
            (Some((_, t)), _) => Some((t, false)),
            (None, Some((_, t))) => Some((t, false)),
            (None, None) => None,
        }
    }

    pub fn to_json(&self, g: &Grammar) -> serde_json::Value {
        let names: Vec<&str> = self.in_subset.iter().map(|&a| g.symbol_name(a)).collect();
        let mut lens = serde_json::Map::new();
        let m = self.in_subset.len();
        for (offset, t) in &self.by_offset {
            let rows: Vec<Vec<f64>> = (0..t.k)
                .map(|r| t.w[r * m..(r + 1) * m].to_vec())
                .collect();
            lens.insert(
                offset.to_string(),
                serde_json::json!({
                    "k": t.k,
                    "eigenvalues": t.eigenvalues,
                    "w": rows,
                }),
            );
        }
        serde_json::json!({
            "in_subset": names,
            "transforms": lens,
        })
    }

    pub fn from_json(g: &Grammar, v: &serde_json::Value) -> Result<Self, ApproxError> {
        let names = v["in_subset"]
            .as_array()
            .ok_or_else(|| ApproxError::BadBank("in_subset missing".into()))?;
        let mut in_subset = Vec::with_capacity(names.len());
        for n in names {
            let name = n
                .as_str()
                .ok_or_else(|| ApproxError::BadBank("in_subset entry".into()))?;
            let sym = g
                .symbol_by_name(name)
                .ok_or_else(|| ApproxError::UnknownSymbol(name.to_string()))?;
            in_subset.push(sym.id);
        }
        let m = in_subset.len();
        let mut by_offset = BTreeMap::new();
        let lens = v["transforms"]
            .as_object()
            .ok_or_else(|| ApproxError::BadBank("transforms missing".into()))?;
        for (key, tv) in lens {
            let offset: usize = key
                .parse()
                .map_err(|_| ApproxError::BadBank(format!("bad offset key `{key}`")))?;
            let k = tv["k"]
                .as_u64()
                .ok_or_else(|| ApproxError::BadBank("k missing".into()))? as usize;
            let eigenvalues: Vec<f64> = serde_json::from_value(tv["eigenvalues"].clone())
                .map_err(|e| ApproxError::BadBank(e.to_string()))?;
            let rows: Vec<Vec<f64>> = serde_json::from_value(tv["w"].clone())
                .map_err(|e| ApproxError::BadBank(e.to_string()))?;
            if rows.len() != k || rows.iter().any(|r| r.len() != m) {
                return Err(ApproxError::BadBank(format!("w shape at offset {key}")));
            }
            let w = rows.into_iter().flatten().collect();
            by_offset.insert(offset, LenTransform { k, w, eigenvalues });
        }
        Ok(TransformBank { in_subset, by_offset })
    }
}

/// Restricted Inside-Outside: the exact recursions with chart entries of
/// symbols outside the kept subsets forced to zero. Lexical initialization
/// stays over the full pre-terminal set.
pub fn restricted_io(
    g: &Grammar,
    words: &[&str],
    r: &RestrictionSpec,
    mask: Option<usize>,
    scale_mode: ScaleMode,
) -> Result<chart::IOChart, ChartError> {
    chart::complete(
        g,
        words,
        mask,
        &IoConfig {
            restriction: Some(r),
            transforms: None,
            scale_mode,
        },
    )
}

/// Restricted Inside-Outside with every per-length vector of kept
/// in-terminal values replaced by `W^T W v` before longer (inside) or
/// shorter (outside) spans consume it.
pub fn approx_io(
    g: &Grammar,
    words: &[&str],
    r: &RestrictionSpec,
    bank: &TransformBank,
    mask: Option<usize>,
    scale_mode: ScaleMode,
) -> Result<chart::IOChart, ChartError> {
    chart::complete(
        g,
        words,
        mask,
        &IoConfig {
            restriction: Some(r),
            transforms: Some(bank),
            scale_mode,
        },
    )
}

/// Per-span-length rank requests for [`learn_transforms`].
#[derive(Debug, Clone)]
pub struct RankSchedule {
    pub default: usize,
    pub per_offset: BTreeMap<usize, usize>,
}

impl RankSchedule {
    pub fn uniform(k: usize) -> Self {
        RankSchedule {
            default: k,
            per_offset: BTreeMap::new(),
        }
    }

    pub fn rank_for(&self, offset: usize) -> usize {
        *self.per_offset.get(&offset).unwrap_or(&self.default)
    }
}

/// Diagnostics from transform learning.
#[derive(Debug, Clone, Default, Serialize)]
pub struct LearnStats {
    pub sentences_used: usize,
    pub sentences_skipped: usize,
    /// Sentences contributing per offset (offset, count).
    pub contributions: Vec<(usize, usize)>,
}

/// Learns `W^(l)` per span offset from the normalized correlation of
/// restricted span-marginal vectors:
/// `X^(l) = sum_s X_s / ||X_s||_F` with `X_s = sum_{spans} mu mu^T`, then the
/// top eigenvectors of `X^(l)` become the rows of `W^(l)`.
///
/// Marginal vectors come from [`restricted_io`] by default, matching what the
/// approximate inference path computes; `mu_from_exact` switches to the
/// unrestricted chart. Underivable sentences are skipped and counted.
pub fn learn_transforms(
    g: &Grammar,
    corpus: &[Vec<String>],
    r: &RestrictionSpec,
    ranks: &RankSchedule,
    mu_from_exact: bool,
    par: &Parallelism,
) -> Result<(TransformBank, LearnStats), ApproxError> {
    let m = r.in_ids().len();
    // per span offset, the m x m sum of mu mu^T over that sentence's spans
    type SentenceMoments = BTreeMap<usize, Vec<f64>>;
    // Per-sentence moment matrices, reduced in sentence-index order so the
    // learned bank is byte-stable under any thread count.
    let per_sentence: Vec<Result<Option<SentenceMoments>, ChartError>> = par
        .map_indexed(corpus.len(), |s| {
            let words: Vec<&str> = corpus[s].iter().map(|w| w.as_str()).collect();
            let config = if mu_from_exact {
                IoConfig::exact(ScaleMode::Raw)
            } else {
                IoConfig {
                    restriction: Some(r),
                    transforms: None,
                    scale_mode: ScaleMode::Raw,
                }
            };
            let ch = match chart::complete(g, &words, None, &config) {
                Ok(c) => c,
                Err(e) => return Err(e),
            };
            if ch.sentence_value(g) == 0.0 {
                return Ok(None);
            }
            let l = ch.len();
            let mut moments = SentenceMoments::new();
            let mut mu = vec![0.0; m];
            for offset in 1..l {
                let mut x = vec![0.0; m * m];
                let mut any = false;
                for i in 1..=l - offset {
                    let j = i + offset;
                    for (t, &a) in r.in_ids().iter().enumerate() {
                        mu[t] = ch.alpha(a, i, j) * ch.beta(a, i, j);
                        if mu[t] != 0.0 {
                            any = true;
                        }
                    }
                    for p in 0..m {
                        if mu[p] == 0.0 {
                            continue;
                        }
                        for q in 0..m {
                            x[p * m + q] += mu[p] * mu[q];
                        }
                    }
                }
                if any {
                    moments.insert(offset, x);
                }
            }
            Ok(Some(moments))
        });

    let mut stats = LearnStats::default();
    let mut accum: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for res in per_sentence {
        match res? {
            None => stats.sentences_skipped += 1,
            Some(moments) => {
                stats.sentences_used += 1;
                for (offset, x) in moments {
                    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm == 0.0 {
                        continue;
                    }
                    let slot = accum
                        .entry(offset)
                        .or_insert_with(|| (vec![0.0; m * m], 0));
                    for (acc, v) in slot.0.iter_mut().zip(&x) {
                        *acc += v / norm;
                    }
                    slot.1 += 1;
                }
            }
        }
    }

    let mut by_offset = BTreeMap::new();
    for (offset, (x, count)) in &accum {
        stats.contributions.push((*offset, *count));
        let t = transform_from_moment(x, m, ranks.rank_for(*offset));
        by_offset.insert(*offset, t);
    }
    Ok((
        TransformBank {
            in_subset: r.in_ids().to_vec(),
            by_offset,
        },
        stats,
    ))
}

/// Eigendecomposition of one moment matrix into a rank-`k` transform,
/// exposed separately so synthetic moment matrices can be tested directly.
pub fn transform_from_moment(x: &[f64], m: usize, k: usize) -> LenTransform {
    let k = k.max(1).min(m);
    let eig = linalg::eigen_sym(x, m);
    let mut w = vec![0.0; k * m];
    w.copy_from_slice(&eig.vectors[..k * m]);
    LenTransform {
        k,
        w,
        eigenvalues: eig.values,
    }
}

/// One approximation setting for [`degradation_report`].
pub struct ApproxConfig {
    pub label: String,
    pub restriction: Option<RestrictionSpec>,
    pub bank: Option<TransformBank>,
}

/// One row of the degradation table.
#[derive(Debug, Clone, Serialize)]
pub struct DegradationRow {
    pub config: String,
    pub k_in: Option<usize>,
    pub k_pre: Option<usize>,
    pub rank: Option<usize>,
    pub corpus_f1: f64,
    pub sent_f1: f64,
    pub ppl: f64,
    pub tokens_scored: usize,
    pub skipped_tokens: usize,
    pub parse_fallbacks: usize,
}

/// Labelled-Recall F1 plus 1-mask perplexity for each approximation config
/// over an aligned corpus and its gold trees. Per-sentence failures are
/// counted (fallback parses, skipped tokens), never fatal.
pub fn degradation_report(
    g: &Grammar,
    corpus: &[Vec<String>],
    gold: &[ParseTree],
    configs: &[ApproxConfig],
    policy: &EvalPolicy,
    scale_mode: ScaleMode,
    par: &Parallelism,
) -> Result<Vec<DegradationRow>, ApproxError> {
    assert_eq!(corpus.len(), gold.len(), "corpus and gold must align");
    let mut rows = Vec::with_capacity(configs.len());
    for cfg in configs {
        let io = IoConfig {
            restriction: cfg.restriction.as_ref(),
            transforms: cfg.bank.as_ref(),
            scale_mode,
        };
        let parses = par.map_indexed(corpus.len(), |s| {
            let words: Vec<&str> = corpus[s].iter().map(|w| w.as_str()).collect();
            parse_eval::labelled_recall(g, &words, &io)
        });
        let mut pred = Vec::with_capacity(parses.len());
        let mut fallbacks = 0usize;
        for p in parses {
            let p = p?;
            if p.degenerate {
                fallbacks += 1;
            }
            pred.push(p.tree);
        }
        let sent = parse_eval::f1_trees(gold, &pred, policy, F1Mode::Sentence);
        let corp = parse_eval::f1_trees(gold, &pred, policy, F1Mode::Corpus);
        let ppl = mlm::one_mask_perplexity(
            g,
            corpus,
            cfg.restriction.as_ref(),
            cfg.bank.as_ref(),
            scale_mode,
            par,
        )?;
        rows.push(DegradationRow {
            config: cfg.label.clone(),
            k_in: cfg.restriction.as_ref().map(|r| r.in_ids().len()),
            k_pre: cfg.restriction.as_ref().map(|r| r.pre_ids().len()),
            rank: cfg.bank.as_ref().and_then(|b| b.offsets().next().map(|o| b.get(o).unwrap().k)),
            corpus_f1: corp.f1,
            sent_f1: sent.f1,
            ppl: ppl.ppl,
            tokens_scored: ppl.tokens_scored,
            skipped_tokens: ppl.skipped,
            parse_fallbacks: fallbacks,
        });
    }
    Ok(rows)
}
