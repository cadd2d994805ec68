//! Sentence and gold-tree generation from a grammar.
//!
//! Derivations expand leftmost-first; expansion order does not change the
//! distribution of a context-free rewriting process, and leftmost makes runs
//! reproducible. Length control is rejection sampling: derivations longer
//! than `max_len` (or blowing the expansion cap) are discarded and retried.
//!
//! RNG: ChaCha12 (`rand_chacha`), seeded from a 64-bit value. Corpus
//! generation gives sentence `i` its own stream via `set_stream(i)`, so
//! corpora are reproducible across platforms and independent of scheduling.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::grammar::Grammar;
use crate::parallel::Parallelism;
use crate::tree::{ParseTree, Span};

/// Retries before giving up on drawing a sentence within `max_len`.
pub const RETRY_CAP: usize = 10_000;

/// Per-derivation node budget, times `max_len`.
pub const EXPANSION_CAP_FACTOR: usize = 100;

/// Default maximum sentence length for corpus generation.
pub const DEFAULT_MAX_LEN: usize = 64;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error(
        "gave up after {attempts} attempts: every derivation exceeded max_len={max_len} \
         ({too_long} too long, {exploded} hit the expansion cap)"
    )]
    RetryCapExceeded {
        attempts: usize,
        max_len: usize,
        too_long: usize,
        exploded: usize,
    },
    #[error(
        "every attempt hit the expansion cap ({cap} nodes); the grammar's expected \
         sentence length likely diverges"
    )]
    ExpansionCapExceeded { cap: usize },
}

// weighted index over the nonzero entries of one rule row
type WeightedRow<T> = (WeightedIndex<f64>, Vec<T>);

struct RuleSampler {
    binary: Vec<WeightedRow<(usize, usize)>>, // per in-terminal, over (B, C)
    lexical: Vec<WeightedRow<usize>>,         // per pre-terminal, over words
}

impl RuleSampler {
    fn new(g: &Grammar) -> Self {
        let n = g.n_symbols();
        let binary = g
            .in_terminal_ids()
            .map(|a| {
                let m = g.binary_matrix(a);
                let mut pairs = Vec::new();
                let mut weights = Vec::new();
                for b in 0..n {
                    for c in 0..n {
                        let p = m[b * n + c];
                        if p > 0.0 {
                            pairs.push((b, c));
                            weights.push(p);
                        }
                    }
                }
                (WeightedIndex::new(&weights).expect("valid grammar row"), pairs)
            })
            .collect();
        let lexical = g
            .pre_terminal_ids()
            .map(|a| {
                let row = g.lexical_row(a);
                let mut words = Vec::new();
                let mut weights = Vec::new();
                for (w, &p) in row.iter().enumerate() {
                    if p > 0.0 {
                        words.push(w);
                        weights.push(p);
                    }
                }
                (WeightedIndex::new(&weights).expect("valid grammar row"), words)
            })
            .collect();
        RuleSampler { binary, lexical }
    }
}

enum Attempt {
    Done(Vec<usize>, ParseTree),
    TooLong,
    Exploded,
}

// One leftmost derivation attempt. Nodes are expanded depth-first with an
// explicit stack; spans are fixed up once subtree widths are known.
fn try_derive(
    g: &Grammar,
    rules: &RuleSampler,
    rng: &mut ChaCha12Rng,
    max_len: usize,
    node_cap: usize,
) -> Attempt {
    struct Node {
        label: usize,
        start: usize, // 1-based start position of the subtree
        width: usize, // 0 until the subtree is complete
        children: Option<(usize, usize)>,
    }
    let mut nodes = vec![Node {
        label: g.root(),
        start: 1,
        width: 0,
        children: None,
    }];
    let mut words: Vec<usize> = Vec::new();
    // stack of node indices whose subtree is not yet expanded
    let mut stack = vec![0usize];
    while let Some(idx) = stack.pop() {
        if nodes.len() > node_cap {
            return Attempt::Exploded;
        }
        let label = nodes[idx].label;
        if g.is_pre_terminal(label) {
            let (wi, ws) = &rules.lexical[label - g.n_in_terminals()];
            let w = ws[wi.sample(rng)];
            nodes[idx].start = words.len() + 1;
            nodes[idx].width = 1;
            words.push(w);
            if words.len() > max_len {
                return Attempt::TooLong;
            }
        } else {
            let (pi, ps) = &rules.binary[label];
            let (b, c) = ps[pi.sample(rng)];
            let left = nodes.len();
            nodes.push(Node {
                label: b,
                start: 0,
                width: 0,
                children: None,
            });
            let right = nodes.len();
            nodes.push(Node {
                label: c,
                start: 0,
                width: 0,
                children: None,
            });
            nodes[idx].children = Some((left, right));
            // leftmost order: expand the left child before the right one
            stack.push(right);
            stack.push(left);
        }
    }
    // widths bottom-up: children were created after their parent, so a
    // reverse index sweep sees every child before its parent
    for idx in (0..nodes.len()).rev() {
        if let Some((l, r)) = nodes[idx].children {
            nodes[idx].start = nodes[l].start;
            nodes[idx].width = nodes[l].width + nodes[r].width;
        }
    }
    let len = words.len();
    // preorder span list: node 0 is the root and children follow parents
    let mut spans = Vec::with_capacity(nodes.len());
    let mut order = vec![0usize];
    while let Some(idx) = order.pop() {
        let n = &nodes[idx];
        spans.push(Span {
            label: n.label,
            i: n.start,
            j: n.start + n.width - 1,
        });
        if let Some((l, r)) = n.children {
            order.push(r);
            order.push(l);
        }
    }
    Attempt::Done(words, ParseTree { len, spans })
}

/// Samples one (sentence, gold tree) pair, rejecting derivations longer than
/// `max_len`. The tree is a valid derivation whose probability is the
/// product of the applied rule probabilities.
pub fn sample_tree(
    g: &Grammar,
    rng_seed: u64,
    max_len: usize,
) -> Result<(Vec<String>, ParseTree), SampleError> {
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    sample_tree_with_rng(g, &mut rng, max_len)
}

fn sample_tree_with_rng(
    g: &Grammar,
    rng: &mut ChaCha12Rng,
    max_len: usize,
) -> Result<(Vec<String>, ParseTree), SampleError> {
    let rules = RuleSampler::new(g);
    let node_cap = EXPANSION_CAP_FACTOR * max_len;
    let mut too_long = 0usize;
    let mut exploded = 0usize;
    for _ in 0..RETRY_CAP {
        match try_derive(g, &rules, rng, max_len, node_cap) {
            Attempt::Done(word_ids, tree) => {
                let words = word_ids
                    .into_iter()
                    .map(|w| g.vocab()[w].clone())
                    .collect();
                return Ok((words, tree));
            }
            Attempt::TooLong => too_long += 1,
            Attempt::Exploded => exploded += 1,
        }
    }
    if exploded > too_long {
        Err(SampleError::ExpansionCapExceeded { cap: node_cap })
    } else {
        Err(SampleError::RetryCapExceeded {
            attempts: RETRY_CAP,
            max_len,
            too_long,
            exploded,
        })
    }
}

/// Samples `count` sentences with aligned gold trees. Sentence `i` draws
/// from stream `i` of the seed, so the corpus is a pure function of
/// `(seed, count, max_len)` and may be generated in parallel.
pub fn sample_corpus(
    g: &Grammar,
    count: usize,
    rng_seed: u64,
    max_len: usize,
    par: &Parallelism,
) -> Result<(Vec<Vec<String>>, Vec<ParseTree>), SampleError> {
    let results: Vec<Result<(Vec<String>, ParseTree), SampleError>> =
        par.map_indexed(count, |i| {
            let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
            rng.set_stream(i as u64);
            sample_tree_with_rng(g, &mut rng, max_len)
        });
    let mut corpus = Vec::with_capacity(count);
    let mut trees = Vec::with_capacity(count);
    for r in results {
        let (words, tree) = r?;
        corpus.push(words);
        trees.push(tree);
    }
    Ok((corpus, trees))
}
