//! Weight construction for both attention simulators.

use crate::grammar::Grammar;

use super::{
    CoordinateLayout, Head, LayerSpec, LayoutMode, TransformerModel, TxsimError,
    DEFAULT_MEMORY_BUDGET,
};

/// Build-time limits.
#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub memory_budget: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

// Every legitimate attention score is a sum of at most |N|^2 * L products of
// probabilities <= 1, so this dominates them all.
fn zeta(n: usize, l: usize) -> f64 {
    (n * n * l) as f64 + 1.0
}

fn head_count(mode: LayoutMode, n: usize, l: usize, layer: usize) -> usize {
    // layer is 1-based, 1..=2l-1
    match mode {
        LayoutMode::Hard => {
            if layer == l {
                2
            } else if layer < l {
                2 * n
            } else {
                4 * n
            }
        }
        LayoutMode::Relative => {
            if layer == l {
                1
            } else {
                n
            }
        }
    }
}

fn required_bytes(mode: LayoutMode, n: usize, l: usize) -> u64 {
    let d = match mode {
        LayoutMode::Hard => (4 * n + 1) * l,
        LayoutMode::Relative => 2 * n * l + 1,
    } as u64;
    let per_head = 3 * d * d * 8;
    let heads: u64 = (1..=2 * l - 1)
        .map(|layer| head_count(mode, n, l, layer) as u64)
        .sum();
    let positions = match mode {
        LayoutMode::Hard => 0,
        LayoutMode::Relative => (2 * l + 1) as u64 * d * 8,
    };
    heads * per_head + positions
}

fn check_budget(mode: LayoutMode, n: usize, l: usize, opts: &BuildOptions) -> Result<(), TxsimError> {
    let required = required_bytes(mode, n, l);
    if required > opts.memory_budget {
        return Err(TxsimError::MemoryBudget {
            required,
            budget: opts.memory_budget,
        });
    }
    Ok(())
}

struct MatBuilder {
    d: usize,
    m: Vec<f64>,
}

impl MatBuilder {
    fn zeros(d: usize) -> Self {
        MatBuilder {
            d,
            m: vec![0.0; d * d],
        }
    }

    fn identity(d: usize) -> Self {
        let mut b = MatBuilder::zeros(d);
        for i in 0..d {
            b.m[i * d + i] = 1.0;
        }
        b
    }

    #[inline]
    fn set(&mut self, row: usize, col: usize, v: f64) {
        self.m[row * self.d + col] = v;
    }

    fn done(self) -> Vec<f64> {
        self.m
    }
}

// Position gate for hard attention: coupling of the one-hot blocks that is
// `on_value` when the key sits exactly `offset` right of the query and
// -zeta otherwise.
fn hard_gate(q: &mut MatBuilder, layout: &CoordinateLayout, offset: isize, on_value: f64, z: f64) {
    let l = layout.max_len;
    for pj in 1..=l {
        for pi in 1..=l {
            let v = if pj as isize - pi as isize == offset {
                on_value
            } else {
                -z
            };
            q.set(layout.position_onehot(pj), layout.position_onehot(pi), v);
        }
    }
}

// Value matrix depositing the head's scalar score sum into `target`: every
// position one-hot coordinate maps to it, and exactly one of them is 1 at
// any key position.
fn hard_deposit(layout: &CoordinateLayout, target: usize) -> Vec<f64> {
    let mut v = MatBuilder::zeros(layout.d);
    for p in 1..=layout.max_len {
        v.set(target, layout.position_onehot(p), 1.0);
    }
    v.done()
}

/// The hard-attention construction: one-hot positions, score
/// `ReLU((K e_j)^T Q e_i)`, `(4|N|+1)L` width, `2L-1` layers. Inside layer
/// `l` holds, per symbol, one head for spans starting at the query and one
/// for spans ending there (`2|N|` total). Each outside layer holds four per
/// symbol: the left- and right-parent terms of the outside recursion for
/// each anchoring. The boundary layer re-anchors the inside blocks with two
/// move heads so the outside layers can read the off-by-one spans the
/// recursion needs.
pub fn build_hard_model(
    g: &Grammar,
    max_len: usize,
    opts: &BuildOptions,
) -> Result<TransformerModel, TxsimError> {
    assert!(max_len >= 1);
    let n = g.n_symbols();
    let l = max_len;
    check_budget(LayoutMode::Hard, n, l, opts)?;
    let layout = CoordinateLayout::hard(n, l);
    let z = zeta(n, l);
    let mut layers = Vec::with_capacity(2 * l - 1);

    for layer in 1..=2 * l - 1 {
        if layer < l {
            // inside layer: spans of length `layer + 1`
            let off = layer;
            let mut heads = Vec::with_capacity(2 * n);
            for a in 0..n {
                // alpha(A, i, i+off) at the start anchor; the key at i+off
                // supplies right-child values ending there
                let mut q = MatBuilder::zeros(layout.d);
                for l1 in 0..off {
                    let l2 = off - 1 - l1;
                    for b in 0..n {
                        for c in 0..n {
                            let p = g.binary_prob(a, b, c);
                            if p != 0.0 {
                                q.set(layout.inside_end(l2, c), layout.inside_start(l1, b), p);
                            }
                        }
                    }
                }
                hard_gate(&mut q, &layout, off as isize, 0.0, z);
                heads.push(Head {
                    key: MatBuilder::identity(layout.d).done(),
                    query: q.done(),
                    value: hard_deposit(&layout, layout.inside_start(off, a)),
                });
                // alpha(A, i-off, i) at the end anchor; the key at i-off
                // supplies left-child values starting there
                let mut q = MatBuilder::zeros(layout.d);
                for l1 in 0..off {
                    let l2 = off - 1 - l1;
                    for b in 0..n {
                        for c in 0..n {
                            let p = g.binary_prob(a, b, c);
                            if p != 0.0 {
                                q.set(layout.inside_start(l1, b), layout.inside_end(l2, c), p);
                            }
                        }
                    }
                }
                hard_gate(&mut q, &layout, -(off as isize), 0.0, z);
                heads.push(Head {
                    key: MatBuilder::identity(layout.d).done(),
                    query: q.done(),
                    value: hard_deposit(&layout, layout.inside_end(off, a)),
                });
            }
            layers.push(LayerSpec {
                heads,
                biases: vec![],
                use_position_vectors: false,
                write_mask: vec![],
                beta_init: false,
            });
        } else if layer == l {
            // boundary layer: shift start-anchored inside blocks one left
            // (alpha(., i+1, i+k) lands at position i) and end-anchored ones
            // one right (alpha(., i-k, i-1) lands at position i), both with
            // the block index re-keyed to span length
            let mut heads = Vec::with_capacity(2);
            let mut q = MatBuilder::zeros(layout.d);
            hard_gate(&mut q, &layout, 1, 1.0, z);
            let mut v = MatBuilder::zeros(layout.d);
            for k in 1..l {
                for a in 0..n {
                    v.set(layout.inside_start(k, a), layout.inside_start(k - 1, a), 1.0);
                }
            }
            heads.push(Head {
                key: MatBuilder::identity(layout.d).done(),
                query: q.done(),
                value: v.done(),
            });
            let mut q = MatBuilder::zeros(layout.d);
            hard_gate(&mut q, &layout, -1, 1.0, z);
            let mut v = MatBuilder::zeros(layout.d);
            for k in 1..l {
                for a in 0..n {
                    v.set(layout.inside_end(k, a), layout.inside_end(k - 1, a), 1.0);
                }
            }
            heads.push(Head {
                key: MatBuilder::identity(layout.d).done(),
                query: q.done(),
                value: v.done(),
            });
            layers.push(LayerSpec {
                heads,
                biases: vec![],
                use_position_vectors: false,
                write_mask: vec![(0, 2 * n * l)],
                beta_init: true,
            });
        } else {
            // outside layer: spans with offset k = len - 1
            let k = 2 * l - 1 - layer;
            let mut heads = Vec::with_capacity(4 * n);
            for a in 0..n {
                // beta(A, i, i+k), left-parent term: key at i+k holds the
                // parent outside values ending there, the query holds the
                // sibling inside values ending at i-1
                let mut q = MatBuilder::zeros(layout.d);
                for l1 in 1..=l - 1 - k {
                    let l2 = l1 + k;
                    for b in g.in_terminal_ids() {
                        for c in 0..n {
                            let p = g.binary_prob(b, c, a);
                            if p != 0.0 {
                                q.set(layout.outside_end(l2, b), layout.inside_end(l1, c), p);
                            }
                        }
                    }
                }
                hard_gate(&mut q, &layout, k as isize, 0.0, z);
                heads.push(Head {
                    key: MatBuilder::identity(layout.d).done(),
                    query: q.done(),
                    value: hard_deposit(&layout, layout.outside_start(k, a)),
                });
                // beta(A, i, i+k), right-parent term: key at i+k holds the
                // sibling inside values starting at i+k+1, the query holds
                // the parent outside values starting at i
                let mut q = MatBuilder::zeros(layout.d);
                for m in 1..=l - 1 - k {
                    for b in g.in_terminal_ids() {
                        for c in 0..n {
                            let p = g.binary_prob(b, a, c);
                            if p != 0.0 {
                                q.set(layout.inside_start(m, c), layout.outside_start(k + m, b), p);
                            }
                        }
                    }
                }
                hard_gate(&mut q, &layout, k as isize, 0.0, z);
                heads.push(Head {
                    key: MatBuilder::identity(layout.d).done(),
                    query: q.done(),
                    value: hard_deposit(&layout, layout.outside_start(k, a)),
                });
                // beta(A, i-k, i), left-parent term: key at i-k holds the
                // sibling inside values ending at i-k-1, the query holds the
                // parent outside values ending at i
                let mut q = MatBuilder::zeros(layout.d);
                for l1 in 1..=l - 1 - k {
                    for b in g.in_terminal_ids() {
                        for c in 0..n {
                            let p = g.binary_prob(b, c, a);
                            if p != 0.0 {
                                q.set(layout.inside_end(l1, c), layout.outside_end(k + l1, b), p);
                            }
                        }
                    }
                }
                hard_gate(&mut q, &layout, -(k as isize), 0.0, z);
                heads.push(Head {
                    key: MatBuilder::identity(layout.d).done(),
                    query: q.done(),
                    value: hard_deposit(&layout, layout.outside_end(k, a)),
                });
                // beta(A, i-k, i), right-parent term: key at i-k holds the
                // parent outside values starting there, the query holds the
                // sibling inside values starting at i+1
                let mut q = MatBuilder::zeros(layout.d);
                for m in 1..=l - 1 - k {
                    for b in g.in_terminal_ids() {
                        for c in 0..n {
                            let p = g.binary_prob(b, a, c);
                            if p != 0.0 {
                                q.set(layout.outside_start(k + m, b), layout.inside_start(m, c), p);
                            }
                        }
                    }
                }
                hard_gate(&mut q, &layout, -(k as isize), 0.0, z);
                heads.push(Head {
                    key: MatBuilder::identity(layout.d).done(),
                    query: q.done(),
                    value: hard_deposit(&layout, layout.outside_end(k, a)),
                });
            }
            layers.push(LayerSpec {
                heads,
                biases: vec![],
                use_position_vectors: false,
                write_mask: vec![],
                beta_init: false,
            });
        }
    }

    // beta(ROOT, 1, len) = 1 at both anchors, per run length
    let post_add = (1..=l)
        .map(|len| {
            vec![
                (1, layout.outside_start(len - 1, g.root()), 1.0),
                (len, layout.outside_end(len - 1, g.root()), 1.0),
            ]
        })
        .collect();

    Ok(TransformerModel {
        layout,
        layers,
        position_vectors: vec![],
        post_add,
        zeta: z,
    })
}

/// The relative-position construction: width `2|N|L + 1`, score
/// `ReLU(K e_j + p_{j-i} - b_{j-i,l})^T Q e_i`, `|N|` heads per computing
/// layer. Inside layers store spans by their end position; the boundary
/// layer copies each position's inside block from its left neighbour (one
/// head attending at offset -1) so outside layers can pair parent outside
/// values with sibling inside values ending just before the query.
pub fn build_relative_model(
    g: &Grammar,
    max_len: usize,
    opts: &BuildOptions,
) -> Result<TransformerModel, TxsimError> {
    assert!(max_len >= 1);
    let n = g.n_symbols();
    let l = max_len;
    check_budget(LayoutMode::Relative, n, l, opts)?;
    let layout = CoordinateLayout::relative(n, l);
    let z = zeta(n, l);
    let d = layout.d;
    let nl = n * l;

    // p_t: for t < 0 ones over inside block (-t-1), for t > 0 ones over
    // outside block (t-1), zero at t = 0
    let mut position_vectors = vec![vec![0.0; d]; 2 * l + 1];
    for t in -(l as isize)..=l as isize {
        let vec = &mut position_vectors[(t + l as isize) as usize];
        if t < 0 {
            let blk = (-t - 1) as usize;
            for s in 0..n {
                vec[blk * n + s] = 1.0;
            }
        } else if t > 0 {
            let blk = (t - 1) as usize;
            for s in 0..n {
                vec[nl + blk * n + s] = 1.0;
            }
        }
    }

    let bias_for = |layer: usize| -> Vec<f64> {
        let mut b = vec![1.0; 2 * l + 1];
        for t in -(l as isize)..=l as isize {
            let idx = (t + l as isize) as usize;
            if layer < l {
                // inside layer `layer`: keys live in [i-layer, i-1]
                if t >= 0 || t < -(layer as isize) {
                    b[idx] = z;
                }
            } else if layer == l {
                // boundary move head attends only at offset -1
                b[idx] = if t == -1 { 0.0 } else { z };
            } else {
                // outside layer for span offset k: the window [0, k+1] is
                // gated off; the query block structure already zeroes k+1
                let k = (2 * l - 1 - layer) as isize;
                if t >= 0 && t <= k + 1 {
                    b[idx] = z;
                }
            }
        }
        b
    };

    let mut layers = Vec::with_capacity(2 * l - 1);
    for layer in 1..=2 * l - 1 {
        if layer < l {
            let off = layer;
            // key rotation shared by the layer's heads: reverse the first
            // `off` inside blocks so the p_t activation pairs the left child
            // starting at i-off with the right child ending at i
            let mut k_mat = MatBuilder::zeros(d);
            for r in 0..off {
                let src = off - 1 - r;
                for s in 0..n {
                    k_mat.set(r * n + s, src * n + s, 1.0);
                }
            }
            let k_shared = k_mat.done();
            let mut heads = Vec::with_capacity(n);
            for a in 0..n {
                let mut q = MatBuilder::zeros(d);
                for m in 0..off {
                    for b in 0..n {
                        for c in 0..n {
                            let p = g.binary_prob(a, b, c);
                            if p != 0.0 {
                                q.set(m * n + b, m * n + c, p);
                            }
                        }
                    }
                }
                let mut v = MatBuilder::zeros(d);
                v.set(off * n + a, layout.constant_one(), 1.0);
                heads.push(Head {
                    key: k_shared.clone(),
                    query: q.done(),
                    value: v.done(),
                });
            }
            layers.push(LayerSpec {
                heads,
                biases: bias_for(layer),
                use_position_vectors: true,
                write_mask: vec![],
                beta_init: false,
            });
        } else if layer == l {
            // move head: copy the inside region from position i-1
            let mut k_mat = MatBuilder::zeros(d);
            k_mat.set(layout.constant_one(), layout.constant_one(), 1.0);
            let mut q = MatBuilder::zeros(d);
            q.set(layout.constant_one(), layout.constant_one(), 1.0);
            let mut v = MatBuilder::zeros(d);
            for c in 0..nl {
                v.set(c, c, 1.0);
            }
            layers.push(LayerSpec {
                heads: vec![Head {
                    key: k_mat.done(),
                    query: q.done(),
                    value: v.done(),
                }],
                biases: bias_for(layer),
                use_position_vectors: false,
                write_mask: vec![(0, nl)],
                beta_init: true,
            });
        } else {
            let k = 2 * l - 1 - layer;
            // key rotation: outside blocks past offset k move into the
            // low region (for the left-parent term), inside blocks move into
            // the high region (for the right-parent term)
            let mut k_mat = MatBuilder::zeros(d);
            for l1 in k + 1..l {
                let out = l1 - k - 1;
                for s in 0..n {
                    k_mat.set(out * n + s, nl + l1 * n + s, 1.0);
                }
            }
            for lp in 0..l.saturating_sub(k + 1) {
                let out = l + k + lp + 1;
                for s in 0..n {
                    k_mat.set(out * n + s, lp * n + s, 1.0);
                }
            }
            let k_shared = k_mat.done();
            let mut heads = Vec::with_capacity(n);
            for a in 0..n {
                let mut q = MatBuilder::zeros(d);
                // left-parent blocks: Pr[B -> C A] over the first L diagonal
                // blocks (query side holds sibling inside values)
                for m in 0..l {
                    for b in g.in_terminal_ids() {
                        for c in 0..n {
                            let p = g.binary_prob(b, c, a);
                            if p != 0.0 {
                                q.set(m * n + b, m * n + c, p);
                            }
                        }
                    }
                }
                // right-parent blocks: Pr[B -> A C] transposed, on diagonal
                // blocks past L + k (query side holds parent outside values)
                for m in l + k + 1..2 * l {
                    for b in g.in_terminal_ids() {
                        for c in 0..n {
                            let p = g.binary_prob(b, a, c);
                            if p != 0.0 {
                                q.set(m * n + c, m * n + b, p);
                            }
                        }
                    }
                }
                let mut v = MatBuilder::zeros(d);
                v.set(nl + k * n + a, layout.constant_one(), 1.0);
                heads.push(Head {
                    key: k_shared.clone(),
                    query: q.done(),
                    value: v.done(),
                });
            }
            layers.push(LayerSpec {
                heads,
                biases: bias_for(layer),
                use_position_vectors: true,
                write_mask: vec![],
                beta_init: false,
            });
        }
    }

    let post_add = (1..=l)
        .map(|len| vec![(1, nl + (len - 1) * n + g.root(), 1.0)])
        .collect();

    Ok(TransformerModel {
        layout,
        layers,
        position_vectors,
        post_add,
        zeta: z,
    })
}
