//! Fixed-weight ReLU-attention networks that execute Inside-Outside.
//!
//! Two constructions are materialized as concrete weight matrices and run by
//! one generic executor:
//!
//! - **Hard** mode: width `(4|N|+1)L`, one-hot absolute positions, attention
//!   score `ReLU((K e_j)^T Q e_i)`. Per position the embedding carries four
//!   `|N| x L` blocks (inside/outside values for spans starting and ending
//!   there) plus the position one-hots. Inside layers use `2|N|` heads,
//!   outside layers `4|N|`.
//! - **Relative** mode: width `2|N|L + 1`, shared relative position vectors
//!   `p_t` and per-layer scalar biases `b_{t,l}`, attention score
//!   `ReLU(K e_j + p_{j-i} - b_{j-i,l})^T Q e_i`. Per position the embedding
//!   carries end-anchored inside values and start-anchored outside values
//!   plus a constant-one coordinate; `|N|` heads per computing layer.
//!
//! Both have `2L - 1` layers: `L - 1` inside layers (one span length each),
//! a boundary layer that re-anchors the inside blocks and initializes the
//! outside table, and `L - 1` outside layers. The boundary layer is realized
//! with explicit move heads, a write mask that clears the superseded inside
//! coordinates, and a post-add table carrying the `beta(ROOT, 1, L) = 1`
//! initialization; the post-add is indexed by sentence length because the
//! initialization coordinate depends on the run's length, not the model cap.
//!
//! Value matrices route scalar attention sums into their target coordinate
//! by reading a coordinate that is 1 at every position: the constant-one
//! coordinate in relative mode, the summed position one-hots in hard mode.
//!
//! Weights are immutable after build; forward passes for different sentences
//! are independent and may run concurrently.

mod build;
mod exec;

pub use build::{build_hard_model, build_relative_model, BuildOptions};
pub use exec::{extract_chart, forward, forward_with_attention, Trajectory};

use serde::Serialize;
use thiserror::Error;

use crate::chart::{self, IoConfig, ScaleMode};
use crate::grammar::Grammar;

/// Default build memory budget: 2 GiB of weight storage.
pub const DEFAULT_MEMORY_BUDGET: u64 = 2 << 30;

#[derive(Debug, Error)]
pub enum TxsimError {
    #[error(
        "model would need {required} bytes of weights, over the {budget}-byte budget"
    )]
    MemoryBudget { required: u64, budget: u64 },
    #[error("sentence length {len} exceeds the model's maximum {max}")]
    SentenceTooLong { len: usize, max: usize },
    #[error(transparent)]
    Chart(#[from] chart::ChartError),
}

/// Which construction a model implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutMode {
    Hard,
    Relative,
}

/// Embedding width and coordinate block maps for one construction.
#[derive(Debug, Clone, Copy)]
pub struct CoordinateLayout {
    pub mode: LayoutMode,
    pub n_symbols: usize,
    pub max_len: usize,
    pub d: usize,
}

impl CoordinateLayout {
    pub fn hard(n_symbols: usize, max_len: usize) -> Self {
        CoordinateLayout {
            mode: LayoutMode::Hard,
            n_symbols,
            max_len,
            d: (4 * n_symbols + 1) * max_len,
        }
    }

    pub fn relative(n_symbols: usize, max_len: usize) -> Self {
        CoordinateLayout {
            mode: LayoutMode::Relative,
            n_symbols,
            max_len,
            d: 2 * n_symbols * max_len + 1,
        }
    }

    /// Hard mode: `alpha(A, i, i+k)` stored at position `i`.
    #[inline]
    pub fn inside_start(&self, k: usize, a: usize) -> usize {
        k * self.n_symbols + a
    }

    /// Hard mode: `alpha(A, i-k, i)` stored at position `i`.
    /// Relative mode reuses this block for its end-anchored inside values.
    #[inline]
    pub fn inside_end(&self, k: usize, a: usize) -> usize {
        match self.mode {
            LayoutMode::Hard => self.n_symbols * self.max_len + k * self.n_symbols + a,
            LayoutMode::Relative => k * self.n_symbols + a,
        }
    }

    /// `beta(A, i, i+k)` stored at position `i` (both modes).
    #[inline]
    pub fn outside_start(&self, k: usize, a: usize) -> usize {
        match self.mode {
            LayoutMode::Hard => 2 * self.n_symbols * self.max_len + k * self.n_symbols + a,
            LayoutMode::Relative => self.n_symbols * self.max_len + k * self.n_symbols + a,
        }
    }

    /// Hard mode: `beta(A, i-k, i)` stored at position `i`.
    #[inline]
    pub fn outside_end(&self, k: usize, a: usize) -> usize {
        debug_assert_eq!(self.mode, LayoutMode::Hard);
        3 * self.n_symbols * self.max_len + k * self.n_symbols + a
    }

    /// Hard mode: one-hot coordinate of (1-based) position `i`.
    #[inline]
    pub fn position_onehot(&self, i: usize) -> usize {
        debug_assert_eq!(self.mode, LayoutMode::Hard);
        4 * self.n_symbols * self.max_len + (i - 1)
    }

    /// Relative mode: the always-one coordinate.
    #[inline]
    pub fn constant_one(&self) -> usize {
        debug_assert_eq!(self.mode, LayoutMode::Relative);
        2 * self.n_symbols * self.max_len
    }
}

/// One attention head: dense `d x d` key, query, and value matrices
/// (row-major).
pub struct Head {
    pub key: Vec<f64>,
    pub query: Vec<f64>,
    pub value: Vec<f64>,
}

/// One layer: its heads plus the structural features of the boundary layer.
pub struct LayerSpec {
    pub heads: Vec<Head>,
    /// Relative mode: `b_{t, layer}` indexed by `t + max_len`; empty in hard
    /// mode.
    pub biases: Vec<f64>,
    /// Relative mode: whether this layer's score adds `p_{j-i}` (all layers
    /// except the boundary layer).
    pub use_position_vectors: bool,
    /// Coordinate ranges zeroed before the residual add.
    pub write_mask: Vec<(usize, usize)>,
    /// Whether the per-length post-add table applies after this layer.
    pub beta_init: bool,
}

/// A materialized construction.
pub struct TransformerModel {
    pub layout: CoordinateLayout,
    pub layers: Vec<LayerSpec>,
    /// Relative mode: `p_t` indexed by `t + max_len`; empty in hard mode.
    pub position_vectors: Vec<Vec<f64>>,
    /// `post_add[len-1]` lists `(position, coordinate, value)` additions for
    /// a run of sentence length `len`.
    pub post_add: Vec<Vec<(usize, usize, f64)>>,
    /// The large constant dominating every legitimate attention score.
    pub zeta: f64,
}

impl TransformerModel {
    pub fn d(&self) -> usize {
        self.layout.d
    }

    pub fn max_len(&self) -> usize {
        self.layout.max_len
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn heads_in_layer(&self, layer: usize) -> usize {
        self.layers[layer].heads.len()
    }

    /// Total bytes held by weight matrices.
    pub fn weight_bytes(&self) -> u64 {
        let per_head = 3 * (self.layout.d as u64) * (self.layout.d as u64) * 8;
        self.layers.iter().map(|l| l.heads.len() as u64 * per_head).sum()
    }
}

/// Deviation summary for one extracted quantity against the chart oracle.
#[derive(Debug, Clone, Serialize)]
pub struct QuantityDeviation {
    pub model: &'static str,
    pub quantity: &'static str,
    pub max_abs: f64,
    pub max_rel: f64,
}

/// Structural counts checked against the construction size formulas.
#[derive(Debug, Clone, Serialize)]
pub struct StructuralCounts {
    pub d_hard: usize,
    pub d_hard_expected: usize,
    pub d_relative: usize,
    pub d_relative_expected: usize,
    pub layers_hard: usize,
    pub layers_relative: usize,
    pub layers_expected: usize,
    pub hard_inside_heads: usize,
    pub hard_inside_heads_expected: usize,
    pub hard_outside_heads: usize,
    pub hard_outside_heads_expected: usize,
    pub relative_heads: usize,
    pub relative_heads_expected: usize,
    pub relative_boundary_heads: usize,
    pub ok: bool,
}

/// Output of [`verify`].
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub sentence: Vec<String>,
    pub structural: StructuralCounts,
    pub deviations: Vec<QuantityDeviation>,
    pub zeta_hard: f64,
    pub zeta_relative: f64,
    pub max_positive_score_hard: f64,
    pub max_positive_score_relative: f64,
    /// No positive score may exceed zeta / 2.
    pub zeta_ok: bool,
    pub tolerance: f64,
    pub pass: bool,
}

/// Coordinate-level equivalence tolerance for verification.
pub const VERIFY_TOL: f64 = 1e-9;

/// Builds both constructions for this sentence's length, runs their forward
/// passes, and compares every extracted inside/outside entry against the
/// direct chart, along with the construction size formulas. Failures become
/// report entries, never errors.
pub fn verify(
    g: &Grammar,
    words: &[&str],
    opts: &BuildOptions,
) -> Result<VerificationReport, TxsimError> {
    let l = words.len();
    let n = g.n_symbols();
    let oracle = chart::complete(g, words, None, &IoConfig::exact(ScaleMode::Raw))?;

    let hard = build_hard_model(g, l, opts)?;
    let relative = build_relative_model(g, l, opts)?;
    let traj_h = forward(&hard, g, words)?;
    let traj_r = forward(&relative, g, words)?;

    let mut deviations = Vec::new();
    let mut push_dev = |model: &'static str, quantity: &'static str, dev: (f64, f64)| {
        deviations.push(QuantityDeviation {
            model,
            quantity,
            max_abs: dev.0,
            max_rel: dev.1,
        });
    };

    // start- and end-anchored copies are compared independently in hard mode
    let dev_hard = exec::deviations_hard(&hard, &traj_h, &oracle);
    push_dev("hard", "alpha_start", dev_hard[0]);
    push_dev("hard", "alpha_end", dev_hard[1]);
    push_dev("hard", "beta_start", dev_hard[2]);
    push_dev("hard", "beta_end", dev_hard[3]);
    let dev_rel = exec::deviations_relative(&relative, &traj_r, &oracle);
    push_dev("relative", "alpha", dev_rel[0]);
    push_dev("relative", "beta", dev_rel[1]);

    let layers_expected = 2 * l - 1;
    let hard_inside_heads = if l >= 2 { hard.heads_in_layer(0) } else { 0 };
    let hard_outside_heads = if l >= 2 {
        hard.heads_in_layer(layers_expected - 1)
    } else {
        0
    };
    let relative_heads = if l >= 2 { relative.heads_in_layer(0) } else { 0 };
    let structural_ok = hard.d() == (4 * n + 1) * l
        && relative.d() == 2 * n * l + 1
        && hard.n_layers() == layers_expected
        && relative.n_layers() == layers_expected
        && (l < 2 || (hard_inside_heads == 2 * n && hard_outside_heads == 4 * n))
        && (l < 2 || relative_heads == n)
        && relative.heads_in_layer(l - 1) == 1;
    let structural = StructuralCounts {
        d_hard: hard.d(),
        d_hard_expected: (4 * n + 1) * l,
        d_relative: relative.d(),
        d_relative_expected: 2 * n * l + 1,
        layers_hard: hard.n_layers(),
        layers_relative: relative.n_layers(),
        layers_expected,
        hard_inside_heads,
        hard_inside_heads_expected: if l >= 2 { 2 * n } else { 0 },
        hard_outside_heads,
        hard_outside_heads_expected: if l >= 2 { 4 * n } else { 0 },
        relative_heads,
        relative_heads_expected: if l >= 2 { n } else { 0 },
        relative_boundary_heads: relative.heads_in_layer(l - 1),
        ok: structural_ok,
    };

    let zeta_ok = traj_h.max_positive_score <= hard.zeta / 2.0
        && traj_r.max_positive_score <= relative.zeta / 2.0;
    let pass = structural_ok && zeta_ok && deviations.iter().all(|d| d.max_rel <= VERIFY_TOL);
    Ok(VerificationReport {
        sentence: words.iter().map(|w| w.to_string()).collect(),
        structural,
        deviations,
        zeta_hard: hard.zeta,
        zeta_relative: relative.zeta,
        max_positive_score_hard: traj_h.max_positive_score,
        max_positive_score_relative: traj_r.max_positive_score,
        zeta_ok,
        tolerance: VERIFY_TOL,
        pass,
    })
}

/// Averaged attended distance of one head on one sentence's attention
/// matrix: rows are query positions, each row normalized to sum 1 (rows with
/// no mass contribute nothing), and the row distances `|i-j|` are averaged
/// over rows with mass.
#[derive(Debug, Clone, Serialize)]
pub struct HeadDistance {
    pub layer: usize,
    pub head: usize,
    pub ad: f64,
    /// Sentences on which the head had any attention mass.
    pub active_sentences: usize,
}

/// Mean averaged attended distance per (layer, head) over a corpus. Rows
/// (and sentences) without attention mass are excluded from their means;
/// heads inactive on the whole corpus report 0.
pub fn averaged_attended_distance(
    model: &TransformerModel,
    g: &Grammar,
    corpus: &[Vec<String>],
) -> Result<Vec<HeadDistance>, TxsimError> {
    let mut sums: Vec<Vec<f64>> = model
        .layers
        .iter()
        .map(|l| vec![0.0; l.heads.len()])
        .collect();
    let mut active: Vec<Vec<usize>> = model
        .layers
        .iter()
        .map(|l| vec![0; l.heads.len()])
        .collect();
    for sentence in corpus {
        let words: Vec<&str> = sentence.iter().map(|w| w.as_str()).collect();
        let traj = exec::forward_with_attention(model, g, &words)?;
        let attn = traj.attentions.as_ref().expect("attention capture");
        let n_pos = traj.n_positions;
        for (li, layer_attn) in attn.iter().enumerate() {
            for (hi, a) in layer_attn.iter().enumerate() {
                let mut row_sum_total = 0.0;
                let mut ad_rows = 0.0;
                let mut rows_with_mass = 0usize;
                for i in 1..=traj.sentence_len {
                    let row = &a[(i - 1) * n_pos..i * n_pos];
                    let mass: f64 = row.iter().sum();
                    if mass <= 0.0 {
                        continue;
                    }
                    let mut dist = 0.0;
                    for (jm1, &v) in row.iter().enumerate() {
                        let j = jm1 + 1;
                        dist += (j as f64 - i as f64).abs() * v / mass;
                    }
                    ad_rows += dist;
                    rows_with_mass += 1;
                    row_sum_total += mass;
                }
                if rows_with_mass > 0 && row_sum_total > 0.0 {
                    sums[li][hi] += ad_rows / rows_with_mass as f64;
                    active[li][hi] += 1;
                }
            }
        }
    }
    let mut out = Vec::new();
    for (li, layer) in model.layers.iter().enumerate() {
        for hi in 0..layer.heads.len() {
            let n_active = active[li][hi];
            out.push(HeadDistance {
                layer: li + 1,
                head: hi,
                ad: if n_active == 0 {
                    0.0
                } else {
                    sums[li][hi] / n_active as f64
                },
                active_sentences: n_active,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
