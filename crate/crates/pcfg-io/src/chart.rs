//! Exact Inside-Outside dynamic programming over one sentence.
//!
//! Tables are filled length-major: all spans of length `l` before `l+1` for
//! inside, the reverse for outside. Time is `O(|N|^2 |I| L^3)`, space
//! `O(|N| L^2)` per sentence. Charts are immutable once returned; the grammar
//! is shared read-only, so corpus drivers may compute charts for different
//! sentences concurrently.
//!
//! Probabilities are raw binary64 by default. [`ScaleMode::Scaled`] rescales
//! the lexical layer by a per-sentence factor `s`, so a span of length `l`
//! holds `alpha * s^l` and `beta * s^(L-l)`; the per-length correction
//! exponents are stored in the chart. Marginals then carry the uniform factor
//! `s^L`, which cancels against the root inside value, so posteriors need no
//! undo. Log-space is deliberately not used: the attention simulators in
//! [`crate::txsim`] compare raw coordinates.

use serde::Serialize;
use thiserror::Error;

use crate::approx::{RestrictionSpec, TransformBank};
use crate::grammar::Grammar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    #[default]
    Raw,
    Scaled,
}

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("token `{token}` at position {position} is out of vocabulary")]
    OutOfVocab { token: String, position: usize },
    #[error("empty sentence")]
    EmptySentence,
    #[error("mask position {0} outside sentence")]
    BadMask(usize),
    #[error("transform bank was trained for a different in-terminal subset")]
    BankMismatch,
}

/// Which computation the chart kernel runs: the exact recursions, the
/// restriction to frequent non-terminal subsets, or the restriction plus
/// per-span-length low-rank projections.
#[derive(Debug, Clone, Copy, Default)]
pub struct IoConfig<'a> {
    pub restriction: Option<&'a RestrictionSpec>,
    pub transforms: Option<&'a TransformBank>,
    pub scale_mode: ScaleMode,
}

impl<'a> IoConfig<'a> {
    pub fn exact(scale_mode: ScaleMode) -> Self {
        IoConfig {
            restriction: None,
            transforms: None,
            scale_mode,
        }
    }
}

/// Per-sentence inside/outside tables.
///
/// `alpha[A][i][j]` is zero wherever undefined (pre-terminal on a span of
/// length >= 2, span out of range). Stored values are the scaled quantities;
/// in raw mode the scale factor is 1 and they are the probabilities
/// themselves.
#[derive(Debug, Clone)]
pub struct IOChart {
    len: usize,
    n_symbols: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    beta_filled: bool,
    mask: Option<usize>,
    scale_mode: ScaleMode,
    /// ln of the per-sentence lexical rescale factor (0 in raw mode).
    ln_scale: f64,
    /// Most negative value seen before clamping projected vectors, 0 if none.
    pub pre_clamp_min: f64,
    /// Spans projected through a neighbouring length's transform because the
    /// bank had no matrix for their own length.
    pub transform_fallbacks: usize,
}

impl IOChart {
    /// Wraps raw tables produced elsewhere (the attention simulators) in a
    /// chart. Tables are `[A][i][j]` flattened, raw mode, no mask.
    pub fn from_raw_tables(len: usize, n_symbols: usize, alpha: Vec<f64>, beta: Vec<f64>) -> Self {
        assert_eq!(alpha.len(), n_symbols * len * len);
        assert_eq!(beta.len(), n_symbols * len * len);
        IOChart {
            len,
            n_symbols,
            alpha,
            beta,
            beta_filled: true,
            mask: None,
            scale_mode: ScaleMode::Raw,
            ln_scale: 0.0,
            pre_clamp_min: 0.0,
            transform_fallbacks: 0,
        }
    }

    #[inline]
    fn idx(&self, a: usize, i: usize, j: usize) -> usize {
        debug_assert!(i >= 1 && j >= i && j <= self.len);
        (a * self.len + (i - 1)) * self.len + (j - 1)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn mask(&self) -> Option<usize> {
        self.mask
    }

    pub fn scale_mode(&self) -> ScaleMode {
        self.scale_mode
    }

    pub fn beta_filled(&self) -> bool {
        self.beta_filled
    }

    /// Stored (scaled) inside value.
    #[inline]
    pub fn alpha(&self, a: usize, i: usize, j: usize) -> f64 {
        self.alpha[self.idx(a, i, j)]
    }

    /// Stored (scaled) outside value.
    #[inline]
    pub fn beta(&self, a: usize, i: usize, j: usize) -> f64 {
        self.beta[self.idx(a, i, j)]
    }

    /// Correction exponent for inside values of spans with length `len`:
    /// `alpha = stored * exp(-log_scale_alpha(len))`.
    pub fn log_scale_alpha(&self, len: usize) -> f64 {
        len as f64 * self.ln_scale
    }

    /// Correction exponent for outside values of spans with length `len`.
    pub fn log_scale_beta(&self, len: usize) -> f64 {
        (self.len - len) as f64 * self.ln_scale
    }

    /// True inside probability, undoing the scale correction.
    pub fn alpha_raw(&self, a: usize, i: usize, j: usize) -> f64 {
        self.alpha(a, i, j) * (-self.log_scale_alpha(j - i + 1)).exp()
    }

    /// True outside probability, undoing the scale correction.
    pub fn beta_raw(&self, a: usize, i: usize, j: usize) -> f64 {
        self.beta(a, i, j) * (-self.log_scale_beta(j - i + 1)).exp()
    }

    /// Stored root inside value `alpha(ROOT, 1, L)` (scaled).
    pub fn sentence_value(&self, g: &Grammar) -> f64 {
        self.alpha(g.root(), 1, self.len)
    }

    /// `ln Pr[sentence]`, `-inf` for an underivable sentence.
    pub fn sentence_logprob(&self, g: &Grammar) -> f64 {
        let v = self.sentence_value(g);
        if v == 0.0 {
            f64::NEG_INFINITY
        } else {
            v.ln() - self.log_scale_alpha(self.len)
        }
    }

    /// Debug dump with nested `[A][i][j]` arrays.
    pub fn to_json(&self) -> serde_json::Value {
        let nest = |t: &[f64]| -> Vec<Vec<Vec<f64>>> {
            (0..self.n_symbols)
                .map(|a| {
                    (1..=self.len)
                        .map(|i| {
                            (1..=self.len)
                                .map(|j| if j >= i { t[self.idx(a, i, j)] } else { 0.0 })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        };
        serde_json::json!({
            "len": self.len,
            "n_symbols": self.n_symbols,
            "mask": self.mask,
            "scale_mode": self.scale_mode,
            "ln_scale": self.ln_scale,
            "alpha": nest(&self.alpha),
            "beta": nest(&self.beta),
        })
    }
}

/// Span marginals `mu(A,i,j) = alpha * beta` (elementwise on stored values,
/// so every entry carries the uniform `s^L` factor in scaled mode).
#[derive(Debug, Clone)]
pub struct Marginals {
    len: usize,
    n_symbols: usize,
    mu: Vec<f64>,
    /// Stored root inside value; the normalizer for posteriors.
    pub sentence_value: f64,
}

impl Marginals {
    #[inline]
    pub fn mu(&self, a: usize, i: usize, j: usize) -> f64 {
        self.mu[(a * self.len + (i - 1)) * self.len + (j - 1)]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    /// Posterior `Pr[(A,i,j) in tree | sentence]`; 0 for underivable input.
    pub fn posterior(&self, a: usize, i: usize, j: usize) -> f64 {
        if self.sentence_value == 0.0 {
            0.0
        } else {
            self.mu(a, i, j) / self.sentence_value
        }
    }

    /// Best label and its marginal for a span (ties by smallest id).
    pub fn best_label(&self, i: usize, j: usize) -> (usize, f64) {
        let mut best = (0usize, f64::NEG_INFINITY);
        for a in 0..self.n_symbols {
            let v = self.mu(a, i, j);
            if v > best.1 {
                best = (a, v);
            }
        }
        best
    }
}

fn resolve_words(
    g: &Grammar,
    words: &[&str],
    mask: Option<usize>,
) -> Result<Vec<usize>, ChartError> {
    if words.is_empty() {
        return Err(ChartError::EmptySentence);
    }
    if let Some(m) = mask {
        if m < 1 || m > words.len() {
            return Err(ChartError::BadMask(m));
        }
    }
    words
        .iter()
        .enumerate()
        .map(|(idx, w)| {
            if mask == Some(idx + 1) {
                return Ok(usize::MAX); // ignored slot
            }
            g.word_id(w).ok_or_else(|| ChartError::OutOfVocab {
                token: (*w).to_string(),
                position: idx + 1,
            })
        })
        .collect()
}

// Per-sentence lexical rescale factor for scaled mode: the inverse geometric
// mean of per-position lexical maxima times an estimate of per-level rule
// decay, capped so s^L stays finite.
fn pick_scale(g: &Grammar, word_ids: &[usize], mask: Option<usize>) -> f64 {
    let l = word_ids.len() as f64;
    let mut ln_lex = 0.0;
    for (idx, &w) in word_ids.iter().enumerate() {
        if mask == Some(idx + 1) {
            continue; // masked slot initializes to 1
        }
        let mut best = 0.0f64;
        for a in g.pre_terminal_ids() {
            best = best.max(g.lexical_prob(a, w));
        }
        if best > 0.0 {
            ln_lex += best.ln();
        }
    }
    let mut ln_rule = 0.0;
    for a in g.in_terminal_ids() {
        let best = g
            .binary_matrix(a)
            .iter()
            .cloned()
            .fold(0.0f64, f64::max);
        if best > 0.0 {
            ln_rule += best.ln();
        }
    }
    ln_rule /= g.n_in_terminals() as f64;
    let ln_s = (-(ln_lex / l) - ln_rule).min(700.0 / l).max(0.0);
    ln_s.exp()
}

struct Restrict<'a> {
    spec: Option<&'a RestrictionSpec>,
}

impl<'a> Restrict<'a> {
    #[inline]
    fn allowed(&self, a: usize) -> bool {
        self.spec.is_none_or(|r| r.allows(a))
    }
}

/// Fills the inside table under `config`. With no restriction and no
/// transforms this is the exact recursion
/// `alpha(A,i,j) = sum_{B,C} sum_k Pr[A->BC] alpha(B,i,k) alpha(C,k+1,j)`
/// with base `alpha(A,i,i) = Pr[A->w_i]`, or 1 for every pre-terminal at the
/// masked position.
pub fn inside(
    g: &Grammar,
    words: &[&str],
    mask: Option<usize>,
    config: &IoConfig,
) -> Result<IOChart, ChartError> {
    if let (Some(r), Some(b)) = (config.restriction, config.transforms) {
        if !b.matches(r) {
            return Err(ChartError::BankMismatch);
        }
    }
    let word_ids = resolve_words(g, words, mask)?;
    let l = word_ids.len();
    let n = g.n_symbols();
    let scale = match config.scale_mode {
        ScaleMode::Raw => 1.0,
        ScaleMode::Scaled => pick_scale(g, &word_ids, mask),
    };
    let mut chart = IOChart {
        len: l,
        n_symbols: n,
        alpha: vec![0.0; n * l * l],
        beta: vec![0.0; n * l * l],
        beta_filled: false,
        mask,
        scale_mode: config.scale_mode,
        ln_scale: scale.ln(),
        pre_clamp_min: 0.0,
        transform_fallbacks: 0,
    };
    let restrict = Restrict {
        spec: config.restriction,
    };

    // Lexical layer: full pre-terminal set even under restriction.
    for i in 1..=l {
        if mask == Some(i) {
            for a in g.pre_terminal_ids() {
                let idx = chart.idx(a, i, i);
                chart.alpha[idx] = scale;
            }
        } else {
            let w = word_ids[i - 1];
            for a in g.pre_terminal_ids() {
                let idx = chart.idx(a, i, i);
                chart.alpha[idx] = g.lexical_prob(a, w) * scale;
            }
        }
    }

    for len in 2..=l {
        for i in 1..=l - len + 1 {
            let j = i + len - 1;
            for a in g.in_terminal_ids() {
                if !restrict.allowed(a) {
                    continue;
                }
                let pa = g.binary_matrix(a);
                let mut total = 0.0;
                for k in i..j {
                    for b in 0..n {
                        let lb = chart.alpha[chart.idx(b, i, k)];
                        if lb == 0.0 {
                            continue;
                        }
                        let row = &pa[b * n..(b + 1) * n];
                        let mut acc = 0.0;
                        for c in 0..n {
                            acc += row[c] * chart.alpha[chart.idx(c, k + 1, j)];
                        }
                        total += lb * acc;
                    }
                }
                let idx = chart.idx(a, i, j);
                chart.alpha[idx] = total;
            }
        }
        if let Some(bank) = config.transforms {
            project_length(&mut chart, bank, len, Table::Alpha);
        }
    }
    Ok(chart)
}

/// Fills the outside table of a chart whose inside table came from the same
/// grammar and config. Gathers the two-term recursion per span:
/// a left-parent sum over `Pr[B->CA] alpha(C,k,i-1) beta(B,k,j)` and a
/// right-parent sum over `Pr[B->AC] alpha(C,j+1,k) beta(B,i,k)`, with base
/// `beta(ROOT,1,L) = 1` and 0 for every other symbol at `(1,L)`.
pub fn outside(g: &Grammar, chart: &mut IOChart, config: &IoConfig) {
    let l = chart.len;
    let n = g.n_symbols();
    let restrict = Restrict {
        spec: config.restriction,
    };
    let root_idx = chart.idx(g.root(), 1, l);
    chart.beta[root_idx] = 1.0;

    for len in (1..l).rev() {
        for i in 1..=l - len + 1 {
            let j = i + len - 1;
            for a in 0..n {
                // Under restriction outside values exist only for kept
                // symbols; the full-set restriction must reproduce the exact
                // path bitwise, so kept symbols run the identical recursion.
                if !restrict.allowed(a) {
                    continue;
                }
                let mut total = 0.0;
                // left parent: B -> C A with C spanning (k, i-1), B spanning (k, j)
                for k in 1..i {
                    for b in g.in_terminal_ids() {
                        let pb = chart.beta[chart.idx(b, k, j)];
                        if pb == 0.0 {
                            continue;
                        }
                        let m = g.binary_matrix(b);
                        let mut acc = 0.0;
                        for c in 0..n {
                            acc += m[c * n + a] * chart.alpha[chart.idx(c, k, i - 1)];
                        }
                        total += pb * acc;
                    }
                }
                // right parent: B -> A C with C spanning (j+1, k), B spanning (i, k)
                for k in j + 1..=l {
                    for b in g.in_terminal_ids() {
                        let pb = chart.beta[chart.idx(b, i, k)];
                        if pb == 0.0 {
                            continue;
                        }
                        let m = g.binary_matrix(b);
                        let row = &m[a * n..(a + 1) * n];
                        let mut acc = 0.0;
                        for c in 0..n {
                            acc += row[c] * chart.alpha[chart.idx(c, j + 1, k)];
                        }
                        total += pb * acc;
                    }
                }
                let idx = chart.idx(a, i, j);
                chart.beta[idx] = total;
            }
        }
        if len >= 2 {
            if let Some(bank) = config.transforms {
                project_length(chart, bank, len, Table::Beta);
            }
        }
    }
    chart.beta_filled = true;
}

enum Table {
    Alpha,
    Beta,
}

// Replaces, for every span of the given length, the restricted in-terminal
// vector v by W^T W v for the bank transform of that length (nearest trained
// length when absent), clamping small negatives to zero.
fn project_length(chart: &mut IOChart, bank: &TransformBank, len: usize, table: Table) {
    let offset = len - 1;
    let Some((tr, exact)) = bank.transform_for(offset) else {
        return;
    };
    if !exact {
        chart.transform_fallbacks += 1;
    }
    let ids = bank.in_subset();
    let m = ids.len();
    let l = chart.len;
    let mut x = vec![0.0; m];
    let mut y = vec![0.0; tr.k];
    for i in 1..=l - len + 1 {
        let j = i + len - 1;
        for (t, &a) in ids.iter().enumerate() {
            x[t] = match table {
                Table::Alpha => chart.alpha(a, i, j),
                Table::Beta => chart.beta(a, i, j),
            };
        }
        // y = W x, then x <- W^T y
        for r in 0..tr.k {
            let row = &tr.w[r * m..(r + 1) * m];
            y[r] = row.iter().zip(&x).map(|(w, v)| w * v).sum();
        }
        for (t, xv) in x.iter_mut().enumerate() {
            let mut acc = 0.0;
            for r in 0..tr.k {
                acc += tr.w[r * m + t] * y[r];
            }
            *xv = acc;
        }
        for (t, &a) in ids.iter().enumerate() {
            let mut v = x[t];
            if v < 0.0 {
                if v < chart.pre_clamp_min {
                    chart.pre_clamp_min = v;
                }
                v = 0.0;
            }
            let idx = chart.idx(a, i, j);
            match table {
                Table::Alpha => chart.alpha[idx] = v,
                Table::Beta => chart.beta[idx] = v,
            }
        }
    }
}

/// `mu(A,i,j) = alpha(A,i,j) * beta(A,i,j)` elementwise.
pub fn marginals(g: &Grammar, chart: &IOChart) -> Marginals {
    assert!(chart.beta_filled, "outside pass must run before marginals");
    let mu = chart
        .alpha
        .iter()
        .zip(&chart.beta)
        .map(|(a, b)| a * b)
        .collect();
    Marginals {
        len: chart.len,
        n_symbols: chart.n_symbols,
        mu,
        sentence_value: chart.sentence_value(g),
    }
}

/// Inside + outside in one call.
pub fn complete(
    g: &Grammar,
    words: &[&str],
    mask: Option<usize>,
    config: &IoConfig,
) -> Result<IOChart, ChartError> {
    let mut chart = inside(g, words, mask, config)?;
    outside(g, &mut chart, config);
    Ok(chart)
}

/// `ln alpha(ROOT, 1, L)` with scale corrections applied; `-inf` when the
/// grammar cannot derive the sentence (a legitimate zero, not an error).
pub fn sentence_logprob(
    g: &Grammar,
    words: &[&str],
    scale_mode: ScaleMode,
) -> Result<f64, ChartError> {
    let chart = inside(g, words, None, &IoConfig::exact(scale_mode))?;
    Ok(chart.sentence_logprob(g))
}
