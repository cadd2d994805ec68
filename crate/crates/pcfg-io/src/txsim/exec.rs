//! Generic forward pass shared by both constructions, plus chart extraction.

use crate::chart::IOChart;
use crate::grammar::Grammar;

use super::{LayoutMode, TransformerModel, TxsimError};

/// Per-layer embedding states of one forward pass. `states[0]` is the token
/// initialization, `states[t]` the output of layer `t`.
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    /// Materialized positions. Relative mode materializes one position past
    /// the sentence end: the boundary layer shifts end-anchored inside
    /// values rightward, and without the extra position the values ending
    /// at the last word would fall off the sequence and the right-edge
    /// outside terms would be unreachable.
    pub n_positions: usize,
    pub sentence_len: usize,
    /// Per layer, per head: `n_positions x n_positions` score matrices
    /// (query-major), captured on request.
    pub attentions: Option<Vec<Vec<Vec<f64>>>>,
    /// Largest positive attention score seen anywhere in the pass.
    pub max_positive_score: f64,
}

impl Trajectory {
    #[inline]
    pub fn coord(&self, layer: usize, position: usize, coordinate: usize, d: usize) -> f64 {
        self.states[layer][(position - 1) * d + coordinate]
    }
}

fn matvec(m: &[f64], x: &[f64], y: &mut [f64]) {
    let d = x.len();
    for (r, yr) in y.iter_mut().enumerate() {
        let row = &m[r * d..(r + 1) * d];
        let mut acc = 0.0;
        for c in 0..d {
            acc += row[c] * x[c];
        }
        *yr = acc;
    }
}

/// Runs the model on a sentence. Layer-0 embeddings carry `Pr[A -> w_i]` in
/// the length-1 inside block plus the position one-hot (hard) or the
/// constant-one coordinate (relative).
pub fn forward(
    model: &TransformerModel,
    g: &Grammar,
    words: &[&str],
) -> Result<Trajectory, TxsimError> {
    forward_impl(model, g, words, false)
}

/// Like [`forward`], additionally capturing every head's attention matrix.
pub fn forward_with_attention(
    model: &TransformerModel,
    g: &Grammar,
    words: &[&str],
) -> Result<Trajectory, TxsimError> {
    forward_impl(model, g, words, true)
}

fn forward_impl(
    model: &TransformerModel,
    g: &Grammar,
    words: &[&str],
    capture: bool,
) -> Result<Trajectory, TxsimError> {
    let l_s = words.len();
    let l = model.layout.max_len;
    if l_s > l {
        return Err(TxsimError::SentenceTooLong { len: l_s, max: l });
    }
    let word_ids: Vec<usize> = words
        .iter()
        .enumerate()
        .map(|(idx, w)| {
            g.word_id(w)
                .ok_or_else(|| crate::chart::ChartError::OutOfVocab {
                    token: (*w).to_string(),
                    position: idx + 1,
                })
        })
        .collect::<Result<_, _>>()?;

    let n_pos = match model.layout.mode {
        LayoutMode::Hard => l_s,
        LayoutMode::Relative => l_s + 1,
    };
    let d = model.layout.d;

    let mut e0 = vec![0.0; n_pos * d];
    for i in 1..=l_s {
        let row = &mut e0[(i - 1) * d..i * d];
        for a in g.pre_terminal_ids() {
            let p = g.lexical_prob(a, word_ids[i - 1]);
            match model.layout.mode {
                LayoutMode::Hard => {
                    row[model.layout.inside_start(0, a)] = p;
                    row[model.layout.inside_end(0, a)] = p;
                }
                LayoutMode::Relative => {
                    row[model.layout.inside_end(0, a)] = p;
                }
            }
        }
        match model.layout.mode {
            LayoutMode::Hard => row[model.layout.position_onehot(i)] = 1.0,
            LayoutMode::Relative => row[model.layout.constant_one()] = 1.0,
        }
    }
    if let LayoutMode::Relative = model.layout.mode {
        e0[(n_pos - 1) * d + model.layout.constant_one()] = 1.0;
    }

    let mut states = Vec::with_capacity(model.layers.len() + 1);
    states.push(e0);
    let mut attentions = if capture { Some(Vec::new()) } else { None };
    let mut max_positive = 0.0f64;

    let mut kj = vec![0.0; d];
    let mut gated = vec![0.0; d];
    for layer in &model.layers {
        let prev = states.last().unwrap();
        let mut next = prev.clone();
        for &(start, end) in &layer.write_mask {
            for pos in 0..n_pos {
                next[pos * d + start..pos * d + end].fill(0.0);
            }
        }
        let mut layer_attn = if capture {
            Some(Vec::with_capacity(layer.heads.len()))
        } else {
            None
        };
        for head in &layer.heads {
            // cache Q e_i and V e_j across the position pairs
            let mut q_cache = vec![0.0; n_pos * d];
            let mut v_cache = vec![0.0; n_pos * d];
            for pos in 0..n_pos {
                let x = &prev[pos * d..(pos + 1) * d];
                matvec(&head.query, x, &mut q_cache[pos * d..(pos + 1) * d]);
                matvec(&head.value, x, &mut v_cache[pos * d..(pos + 1) * d]);
            }
            let mut scores = if capture {
                Some(vec![0.0; n_pos * n_pos])
            } else {
                None
            };
            for j in 0..n_pos {
                matvec(&head.key, &prev[j * d..(j + 1) * d], &mut kj);
                for i in 0..n_pos {
                    let score = match model.layout.mode {
                        LayoutMode::Hard => {
                            let mut s = 0.0;
                            let qi = &q_cache[i * d..(i + 1) * d];
                            for c in 0..d {
                                s += kj[c] * qi[c];
                            }
                            s.max(0.0)
                        }
                        LayoutMode::Relative => {
                            let t = j as isize - i as isize + l as isize;
                            let b = layer.biases[t as usize];
                            if layer.use_position_vectors {
                                let p = &model.position_vectors[t as usize];
                                for c in 0..d {
                                    gated[c] = (kj[c] + p[c] - b).max(0.0);
                                }
                            } else {
                                for c in 0..d {
                                    gated[c] = (kj[c] - b).max(0.0);
                                }
                            }
                            let qi = &q_cache[i * d..(i + 1) * d];
                            let mut s = 0.0;
                            for c in 0..d {
                                s += gated[c] * qi[c];
                            }
                            s
                        }
                    };
                    if score > 0.0 {
                        if score > max_positive {
                            max_positive = score;
                        }
                        let vj = &v_cache[j * d..(j + 1) * d];
                        let out = &mut next[i * d..(i + 1) * d];
                        for c in 0..d {
                            out[c] += score * vj[c];
                        }
                    }
                    if let Some(s) = scores.as_mut() {
                        s[i * n_pos + j] = score.max(0.0);
                    }
                }
            }
            if let (Some(attn), Some(s)) = (layer_attn.as_mut(), scores) {
                attn.push(s);
            }
        }
        if layer.beta_init {
            for &(pos, coord, val) in &model.post_add[l_s - 1] {
                next[(pos - 1) * d + coord] += val;
            }
        }
        if let (Some(all), Some(one)) = (attentions.as_mut(), layer_attn) {
            all.push(one);
        }
        states.push(next);
    }

    Ok(Trajectory {
        states,
        n_positions: n_pos,
        sentence_len: l_s,
        attentions,
        max_positive_score: max_positive,
    })
}

/// Reads the inside/outside tables out of a trajectory: inside values from
/// the last inside layer's output (their blocks are re-anchored afterwards),
/// outside values from the final layer.
pub fn extract_chart(model: &TransformerModel, traj: &Trajectory) -> IOChart {
    let layout = &model.layout;
    let n = layout.n_symbols;
    let l_s = traj.sentence_len;
    let d = layout.d;
    let inside_state = layout.max_len - 1; // states[L-1]: after the last inside layer
    let final_state = traj.states.len() - 1;
    let mut alpha = vec![0.0; n * l_s * l_s];
    let mut beta = vec![0.0; n * l_s * l_s];
    let idx = |a: usize, i: usize, j: usize| (a * l_s + (i - 1)) * l_s + (j - 1);
    for a in 0..n {
        for i in 1..=l_s {
            for j in i..=l_s {
                let k = j - i;
                alpha[idx(a, i, j)] = match layout.mode {
                    LayoutMode::Hard => {
                        traj.coord(inside_state, i, layout.inside_start(k, a), d)
                    }
                    LayoutMode::Relative => {
                        traj.coord(inside_state, j, layout.inside_end(k, a), d)
                    }
                };
                beta[idx(a, i, j)] = traj.coord(final_state, i, layout.outside_start(k, a), d);
            }
        }
    }
    IOChart::from_raw_tables(l_s, n, alpha, beta)
}

fn fold_dev(dev: &mut (f64, f64), got: f64, want: f64) {
    let abs = (got - want).abs();
    let m = got.abs().max(want.abs());
    let rel = if m == 0.0 { 0.0 } else { abs / m };
    dev.0 = dev.0.max(abs);
    dev.1 = dev.1.max(rel);
}

/// Max (abs, rel) deviation of the four hard-mode quantity blocks against a
/// chart: start/end-anchored alpha, then start/end-anchored beta.
pub(super) fn deviations_hard(
    model: &TransformerModel,
    traj: &Trajectory,
    oracle: &IOChart,
) -> [(f64, f64); 4] {
    let layout = &model.layout;
    let d = layout.d;
    let inside_state = layout.max_len - 1;
    let final_state = traj.states.len() - 1;
    let l_s = traj.sentence_len;
    let mut devs = [(0.0, 0.0); 4];
    for a in 0..layout.n_symbols {
        for i in 1..=l_s {
            for j in i..=l_s {
                let k = j - i;
                fold_dev(
                    &mut devs[0],
                    traj.coord(inside_state, i, layout.inside_start(k, a), d),
                    oracle.alpha(a, i, j),
                );
                fold_dev(
                    &mut devs[1],
                    traj.coord(inside_state, j, layout.inside_end(k, a), d),
                    oracle.alpha(a, i, j),
                );
                fold_dev(
                    &mut devs[2],
                    traj.coord(final_state, i, layout.outside_start(k, a), d),
                    oracle.beta(a, i, j),
                );
                fold_dev(
                    &mut devs[3],
                    traj.coord(final_state, j, layout.outside_end(k, a), d),
                    oracle.beta(a, i, j),
                );
            }
        }
    }
    devs
}

/// Max (abs, rel) deviation of the relative-mode alpha and beta blocks.
pub(super) fn deviations_relative(
    model: &TransformerModel,
    traj: &Trajectory,
    oracle: &IOChart,
) -> [(f64, f64); 2] {
    let layout = &model.layout;
    let d = layout.d;
    let inside_state = layout.max_len - 1;
    let final_state = traj.states.len() - 1;
    let l_s = traj.sentence_len;
    let mut devs = [(0.0, 0.0); 2];
    for a in 0..layout.n_symbols {
        for i in 1..=l_s {
            for j in i..=l_s {
                let k = j - i;
                fold_dev(
                    &mut devs[0],
                    traj.coord(inside_state, j, layout.inside_end(k, a), d),
                    oracle.alpha(a, i, j),
                );
                fold_dev(
                    &mut devs[1],
                    traj.coord(final_state, i, layout.outside_start(k, a), d),
                    oracle.beta(a, i, j),
                );
            }
        }
    }
    devs
}
