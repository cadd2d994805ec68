#![allow(dead_code)] // each integration test binary uses a different subset

//! Shared test support: random grammar generation and brute-force oracles.
//!
//! The oracles enumerate binary tree shapes explicitly (no chart sharing
//! across shapes), so they are independent of the Inside-Outside
//! implementation path they check. Two routes are provided: full explicit
//! enumeration of (shape, labeling) pairs, and a per-shape label sum that
//! factorizes the labeling loop; a self-check test asserts they agree.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use pcfg_io::grammar::{Grammar, Symbol, SymbolKind};

/// A random dense CNF PCFG. `spread` shapes the rule-weight distribution
/// (larger = more skewed); `pre_bias` multiplies the weight of rules whose
/// children are pre-terminals, which keeps the generation process
/// subcritical when > 1.
pub fn random_grammar(
    rng: &mut ChaCha12Rng,
    n_in: usize,
    n_pre: usize,
    vocab_size: usize,
    pre_bias: f64,
) -> Grammar {
    let n = n_in + n_pre;
    let mut symbols = Vec::with_capacity(n);
    for i in 0..n_in {
        symbols.push(Symbol {
            id: i,
            name: format!("N{i}"),
            kind: SymbolKind::InTerminal,
        });
    }
    for p in 0..n_pre {
        symbols.push(Symbol {
            id: n_in + p,
            name: format!("P{p}"),
            kind: SymbolKind::PreTerminal,
        });
    }
    let vocab: Vec<String> = (0..vocab_size).map(|w| format!("w{w}")).collect();

    let mut binary = Vec::with_capacity(n_in);
    for _ in 0..n_in {
        let mut row = vec![0.0f64; n * n];
        let mut sum = 0.0;
        for b in 0..n {
            for c in 0..n {
                let mut w: f64 = rng.gen_range(0.0f64..1.0).powi(2);
                if b >= n_in {
                    w *= pre_bias;
                }
                if c >= n_in {
                    w *= pre_bias;
                }
                row[b * n + c] = w;
                sum += w;
            }
        }
        for v in &mut row {
            *v /= sum;
        }
        fix_row_sum(&mut row);
        binary.push(row);
    }
    let mut lexical = Vec::with_capacity(n_pre);
    for _ in 0..n_pre {
        let mut row: Vec<f64> = (0..vocab_size)
            .map(|_| rng.gen_range(0.05f64..1.0))
            .collect();
        let sum: f64 = row.iter().sum();
        for v in &mut row {
            *v /= sum;
        }
        fix_row_sum(&mut row);
        lexical.push(row);
    }
    Grammar::new(symbols, 0, vocab, binary, lexical).expect("random grammar is valid")
}

/// Like [`random_grammar`] but with a fraction of rule entries zeroed, so
/// structural zeros flow through every code path.
pub fn sparse_random_grammar(
    rng: &mut ChaCha12Rng,
    n_in: usize,
    n_pre: usize,
    vocab_size: usize,
    keep: f64,
) -> Grammar {
    loop {
        let g = random_grammar(rng, n_in, n_pre, vocab_size, 2.0);
        let n = g.n_symbols();
        let mut binary = Vec::with_capacity(n_in);
        let mut ok = true;
        for a in g.in_terminal_ids() {
            let mut row = g.binary_matrix(a).to_vec();
            for v in row.iter_mut() {
                if rng.gen_range(0.0f64..1.0) > keep {
                    *v = 0.0;
                }
            }
            let sum: f64 = row.iter().sum();
            if sum == 0.0 {
                ok = false;
                break;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
            fix_row_sum(&mut row);
            binary.push(row);
        }
        if !ok {
            continue;
        }
        let lexical = g
            .pre_terminal_ids()
            .map(|a| g.lexical_row(a).to_vec())
            .collect();
        let symbols = g.symbols().to_vec();
        let vocab = g.vocab().to_vec();
        if let Ok(g2) = Grammar::new(symbols, g.root(), vocab, binary, lexical) {
            return g2;
        }
    }
}

// Normalized rows can miss 1 by a few ulps; push the residual into the
// largest entry so strict validation passes.
fn fix_row_sum(row: &mut [f64]) {
    let sum: f64 = row.iter().sum();
    let residual = 1.0 - sum;
    let mut argmax = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[argmax] {
            argmax = i;
        }
    }
    row[argmax] += residual;
}

/// One binary tree shape over 1-based positions.
#[derive(Debug, Clone)]
pub enum Shape {
    Leaf(usize),
    Node(usize, usize, Box<Shape>, Box<Shape>),
}

impl Shape {
    pub fn span(&self) -> (usize, usize) {
        match self {
            Shape::Leaf(p) => (*p, *p),
            Shape::Node(i, j, _, _) => (*i, *j),
        }
    }
}

/// All binary bracketings of the span `(i, j)` (Catalan many).
pub fn shapes(i: usize, j: usize) -> Vec<Shape> {
    if i == j {
        return vec![Shape::Leaf(i)];
    }
    let mut out = Vec::new();
    for k in i..j {
        for left in shapes(i, k) {
            for right in shapes(k + 1, j) {
                out.push(Shape::Node(
                    i,
                    j,
                    Box::new(left.clone()),
                    Box::new(right),
                ));
            }
        }
    }
    out
}

/// Explicit enumeration over every labeling of one shape. Calls `visit` with
/// the derivation probability and the labeled spans of each complete tree
/// whose probability is non-zero. The root label is fixed to ROOT.
pub fn enumerate_labelings(
    g: &Grammar,
    words: &[usize],
    shape: &Shape,
    visit: &mut impl FnMut(f64, &[(usize, usize, usize)]),
) {
    let mut acc: Vec<(usize, usize, usize)> = Vec::new();
    collect(g, words, shape, g.root(), 1.0, &mut acc, &mut |p, spans| {
        visit(p, spans)
    });

    type Continue<'a> = &'a mut dyn FnMut(f64, &mut Vec<(usize, usize, usize)>);

    // depth-first over label assignments, threading the probability product
    // and the labeled-span list; `done` fires once per complete subtree
    fn collect(
        g: &Grammar,
        words: &[usize],
        shape: &Shape,
        label: usize,
        prob: f64,
        acc: &mut Vec<(usize, usize, usize)>,
        done: Continue<'_>,
    ) {
        match shape {
            Shape::Leaf(p) => {
                let lex = g.lexical_prob(label, words[p - 1]);
                if lex == 0.0 {
                    return;
                }
                acc.push((label, *p, *p));
                done(prob * lex, acc);
                acc.pop();
            }
            Shape::Node(i, j, left, right) => {
                acc.push((label, *i, *j));
                for b in 0..g.n_symbols() {
                    for c in 0..g.n_symbols() {
                        let p_rule = g.binary_prob(label, b, c);
                        if p_rule == 0.0 {
                            continue;
                        }
                        collect(g, words, left, b, prob * p_rule, acc, &mut |p_left, acc2| {
                            collect(g, words, right, c, p_left, acc2, done);
                        });
                    }
                }
                acc.pop();
            }
        }
    }
}

/// Per-shape label sum computed bottom-up along the fixed shape (still no
/// span sharing across shapes). Returns the vector over root labels.
fn shape_label_sum(g: &Grammar, words: &[usize], shape: &Shape) -> Vec<f64> {
    let n = g.n_symbols();
    match shape {
        Shape::Leaf(p) => (0..n).map(|a| g.lexical_prob(a, words[*p - 1])).collect(),
        Shape::Node(_, _, left, right) => {
            let fl = shape_label_sum(g, words, left);
            let fr = shape_label_sum(g, words, right);
            let mut f = vec![0.0; n];
            for (a, fa) in f.iter_mut().enumerate() {
                if !g.is_in_terminal(a) {
                    continue;
                }
                let m = g.binary_matrix(a);
                let mut acc = 0.0;
                for b in 0..n {
                    if fl[b] == 0.0 {
                        continue;
                    }
                    let row = &m[b * n..(b + 1) * n];
                    let mut inner = 0.0;
                    for c in 0..n {
                        inner += row[c] * fr[c];
                    }
                    acc += fl[b] * inner;
                }
                *fa = acc;
            }
            f
        }
    }
}

/// Brute-force sentence probability: sum over all shapes of the per-shape
/// label sum at the root.
pub fn brute_sentence_prob(g: &Grammar, words: &[usize]) -> f64 {
    shapes(1, words.len())
        .iter()
        .map(|s| shape_label_sum(g, words, s)[g.root()])
        .sum()
}

/// Brute-force sentence probability by full explicit enumeration of labeled
/// trees; exponentially slower, used on small instances and to cross-check
/// the factored route.
pub fn brute_sentence_prob_explicit(g: &Grammar, words: &[usize]) -> f64 {
    let mut total = 0.0;
    for shape in shapes(1, words.len()) {
        enumerate_labelings(g, words, &shape, &mut |p, _| total += p);
    }
    total
}

/// Brute-force marginals: `mu[a][i][j]` sums the probability of every
/// labeled tree containing `(a, i, j)`, by explicit enumeration.
pub fn brute_marginals(g: &Grammar, words: &[usize]) -> Vec<f64> {
    let l = words.len();
    let n = g.n_symbols();
    let mut mu = vec![0.0; n * l * l];
    for shape in shapes(1, l) {
        enumerate_labelings(g, words, &shape, &mut |p, spans| {
            for &(a, i, j) in spans {
                mu[(a * l + (i - 1)) * l + (j - 1)] += p;
            }
        });
    }
    mu
}

/// Tokens of a word-id sentence.
pub fn tokens(g: &Grammar, ids: &[usize]) -> Vec<String> {
    ids.iter().map(|&w| g.vocab()[w].clone()).collect()
}

/// Seeded RNG for deterministic test instances.
pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// All word-id strings of exactly `len` over a vocabulary of size `v`.
pub fn all_strings(v: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        let mut next = Vec::with_capacity(out.len() * v);
        for s in &out {
            for w in 0..v {
                let mut s2 = s.clone();
                s2.push(w);
                next.push(s2);
            }
        }
        out = next;
    }
    out
}
