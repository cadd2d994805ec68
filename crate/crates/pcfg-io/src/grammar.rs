//! Chomsky-normal-form PCFGs: symbols, rule tensors, validation, file format.
//!
//! A grammar has non-terminals split into *in-terminals* (which expand via
//! binary rules `A -> B C`) and *pre-terminals* (which emit words via lexical
//! rules `A -> w`). Symbol ids are dense and contiguous with all in-terminals
//! preceding all pre-terminals; the block-matrix builders in [`crate::txsim`]
//! rely on that layout.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Strict per-row normalization tolerance: rule probabilities out of a symbol
/// must sum to 1 within this bound for a grammar to be valid.
pub const STRICT_NORM_TOL: f64 = 1e-9;

/// Loose tolerance used by `renormalize`: rows whose sums deviate by less
/// than this are rescaled on load, larger residuals are rejected.
pub const RENORM_TOL: f64 = 1e-3;

/// Whether a non-terminal expands to symbol pairs or to words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolKind {
    InTerminal,
    PreTerminal,
}

/// A non-terminal with its dense id and declared kind.
#[derive(Debug, Clone)]
pub struct Symbol {
    pub id: usize,
    pub name: String,
    pub kind: SymbolKind,
}

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown symbol `{name}`")]
    UnknownSymbol { line: usize, name: String },
    #[error("line {line}: duplicate rule for `{head}`")]
    DuplicateRule { line: usize, head: String },
    #[error("line {line}: symbol `{name}` declared twice")]
    DuplicateSymbol { line: usize, name: String },
    #[error("root symbol `{name}` is not a declared in-terminal")]
    BadRoot { name: String },
    #[error("no root declaration")]
    MissingRoot,
    #[error("row for `{symbol}` sums to {sum} (residual {residual:e}), outside tolerance")]
    Normalization {
        symbol: String,
        sum: f64,
        residual: f64,
    },
    #[error("grammar is degenerate: {0}")]
    Degenerate(String),
    #[error("line {line}: probability {value} outside [0, 1]")]
    BadProbability { line: usize, value: f64 },
}

/// One violated invariant found by [`validate`].
#[derive(Debug, Clone)]
pub struct Violation {
    pub symbol: String,
    pub what: String,
    pub residual: f64,
}

/// The outcome of [`validate`]: empty iff the grammar is valid.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for v in &self.violations {
            writeln!(f, "{}: {} (residual {:e})", v.symbol, v.what, v.residual)?;
        }
        Ok(())
    }
}

/// A CNF PCFG with dense rule tensors.
///
/// `binary[a]` is the row-major `|N| x |N|` matrix of `Pr[A -> B C]` for the
/// in-terminal with id `a`; `lexical[p]` is the `|vocab|` row of `Pr[A -> w]`
/// for the pre-terminal with id `n_in + p`. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Grammar {
    symbols: Vec<Symbol>,
    n_in: usize,
    root: usize,
    vocab: Vec<String>,
    word_index: HashMap<String, usize>,
    binary: Vec<Vec<f64>>,
    lexical: Vec<Vec<f64>>,
}

impl Grammar {
    /// Assembles and checks a grammar from parts. `binary` and `lexical` are
    /// indexed as in the struct docs; rows must be normalized within
    /// [`STRICT_NORM_TOL`].
    pub fn new(
        symbols: Vec<Symbol>,
        root: usize,
        vocab: Vec<String>,
        binary: Vec<Vec<f64>>,
        lexical: Vec<Vec<f64>>,
    ) -> Result<Self, GrammarError> {
        let n_in = symbols
            .iter()
            .take_while(|s| s.kind == SymbolKind::InTerminal)
            .count();
        let word_index = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        let g = Grammar {
            symbols,
            n_in,
            root,
            vocab,
            word_index,
            binary,
            lexical,
        };
        g.check_structure()?;
        let report = validate(&g);
        if let Some(v) = report.violations.first() {
            return Err(GrammarError::Normalization {
                symbol: v.symbol.clone(),
                sum: 1.0 + v.residual,
                residual: v.residual,
            });
        }
        Ok(g)
    }

    fn check_structure(&self) -> Result<(), GrammarError> {
        let n = self.symbols.len();
        for (i, s) in self.symbols.iter().enumerate() {
            if s.id != i {
                return Err(GrammarError::Degenerate("symbol ids not contiguous".into()));
            }
            let in_block = i < self.n_in;
            if in_block != (s.kind == SymbolKind::InTerminal) {
                return Err(GrammarError::Degenerate(
                    "in-terminals must precede pre-terminals".into(),
                ));
            }
        }
        if self.n_in == 0 {
            return Err(GrammarError::Degenerate("no in-terminals".into()));
        }
        if self.n_in == n {
            return Err(GrammarError::Degenerate("no pre-terminals".into()));
        }
        if self.root >= self.n_in {
            return Err(GrammarError::BadRoot {
                name: self
                    .symbols
                    .get(self.root)
                    .map(|s| s.name.clone())
                    .unwrap_or_else(|| format!("#{}", self.root)),
            });
        }
        if self.vocab.is_empty() {
            return Err(GrammarError::Degenerate("empty vocabulary".into()));
        }
        if self.binary.len() != self.n_in || self.binary.iter().any(|m| m.len() != n * n) {
            return Err(GrammarError::Degenerate("binary tensor shape".into()));
        }
        if self.lexical.len() != n - self.n_in
            || self.lexical.iter().any(|r| r.len() != self.vocab.len())
        {
            return Err(GrammarError::Degenerate("lexical matrix shape".into()));
        }
        Ok(())
    }

    pub fn n_symbols(&self) -> usize {
        self.symbols.len()
    }

    pub fn n_in_terminals(&self) -> usize {
        self.n_in
    }

    pub fn n_pre_terminals(&self) -> usize {
        self.symbols.len() - self.n_in
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn symbol_name(&self, id: usize) -> &str {
        &self.symbols[id].name
    }

    pub fn symbol_by_name(&self, name: &str) -> Option<&Symbol> {
        self.symbols.iter().find(|s| s.name == name)
    }

    pub fn is_in_terminal(&self, id: usize) -> bool {
        id < self.n_in
    }

    pub fn is_pre_terminal(&self, id: usize) -> bool {
        id >= self.n_in && id < self.symbols.len()
    }

    pub fn in_terminal_ids(&self) -> std::ops::Range<usize> {
        0..self.n_in
    }

    pub fn pre_terminal_ids(&self) -> std::ops::Range<usize> {
        self.n_in..self.symbols.len()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn word_id(&self, w: &str) -> Option<usize> {
        self.word_index.get(w).copied()
    }

    /// `Pr[A -> B C]`; zero when `a` is not an in-terminal.
    #[inline]
    pub fn binary_prob(&self, a: usize, b: usize, c: usize) -> f64 {
        if a < self.n_in {
            self.binary[a][b * self.symbols.len() + c]
        } else {
            0.0
        }
    }

    /// The full `|N| x |N|` rule matrix of in-terminal `a`, row-major over (B, C).
    #[inline]
    pub fn binary_matrix(&self, a: usize) -> &[f64] {
        &self.binary[a]
    }

    /// `Pr[A -> w]` by word id; zero when `a` is not a pre-terminal.
    #[inline]
    pub fn lexical_prob(&self, a: usize, w: usize) -> f64 {
        if a >= self.n_in {
            self.lexical[a - self.n_in][w]
        } else {
            0.0
        }
    }

    /// The lexical row of pre-terminal `a` over the vocabulary.
    #[inline]
    pub fn lexical_row(&self, a: usize) -> &[f64] {
        &self.lexical[a - self.n_in]
    }
}

/// Checks row-stochasticity of every rule row; structural invariants (the
/// symbol partition, id layout) are enforced at construction and parse time,
/// so they cannot be violated by a live `Grammar` value.
///
/// Never fails: every violated invariant becomes a report entry.
pub fn validate(g: &Grammar) -> ValidationReport {
    let mut report = ValidationReport::default();
    for a in g.in_terminal_ids() {
        let row = g.binary_matrix(a);
        check_row(g.symbol_name(a), "binary row sum", row, &mut report);
    }
    for a in g.pre_terminal_ids() {
        let row = g.lexical_row(a);
        check_row(g.symbol_name(a), "lexical row sum", row, &mut report);
    }
    report
}

fn check_row(name: &str, what: &str, row: &[f64], report: &mut ValidationReport) {
    let mut sum = 0.0;
    for &p in row {
        if !(0.0..=1.0).contains(&p) {
            report.violations.push(Violation {
                symbol: name.to_string(),
                what: format!("probability {p} outside [0, 1]"),
                residual: p,
            });
        }
        sum += p;
    }
    let residual = sum - 1.0;
    if residual.abs() > STRICT_NORM_TOL {
        report.violations.push(Violation {
            symbol: name.to_string(),
            what: what.to_string(),
            residual,
        });
    }
}

/// Options for [`load_grammar`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Rescale rule rows whose sums are within [`RENORM_TOL`] of 1.
    pub renormalize: bool,
}

struct PendingRule {
    line: usize,
    b: usize,
    c: usize,
    prob: f64,
}

struct PendingLex {
    line: usize,
    word: String,
    prob: f64,
}

/// Parses the line-oriented grammar format:
///
/// ```text
/// # comment
/// root ROOT
/// nonterm ROOT in
/// nonterm A pre
/// rule ROOT -> A A 1.0
/// lex A -> a 0.5
/// lex A -> b 0.5
/// ```
///
/// Symbol declarations must precede the rules that use them; `root` may name
/// a symbol declared later in the file. Words are collected from `lex` lines
/// in order of first appearance. Symbol ids are canonicalized to declaration
/// order with in-terminals first.
pub fn load_grammar(text: &str, opts: LoadOptions) -> Result<Grammar, GrammarError> {
    let mut names: HashMap<String, (usize, SymbolKind)> = HashMap::new();
    let mut in_names: Vec<String> = Vec::new();
    let mut pre_names: Vec<String> = Vec::new();
    let mut root_name: Option<String> = None;
    let mut vocab: Vec<String> = Vec::new();
    let mut word_index: HashMap<String, usize> = HashMap::new();
    // keyed by declaration-local index (kind, idx)
    let mut binary_rules: HashMap<usize, Vec<PendingRule>> = HashMap::new();
    let mut lex_rules: HashMap<usize, Vec<PendingLex>> = HashMap::new();

    let syntax = |line: usize, msg: &str| GrammarError::Syntax {
        line,
        msg: msg.to_string(),
    };

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        match tok.next().unwrap() {
            "root" => {
                let name = tok
                    .next()
                    .ok_or_else(|| syntax(lineno, "expected `root <NAME>`"))?;
                if tok.next().is_some() {
                    return Err(syntax(lineno, "trailing tokens after root name"));
                }
                if root_name.is_some() {
                    return Err(syntax(lineno, "root declared twice"));
                }
                root_name = Some(name.to_string());
            }
            "nonterm" => {
                let name = tok
                    .next()
                    .ok_or_else(|| syntax(lineno, "expected `nonterm <NAME> in|pre`"))?;
                let kind = match tok.next() {
                    Some("in") => SymbolKind::InTerminal,
                    Some("pre") => SymbolKind::PreTerminal,
                    _ => return Err(syntax(lineno, "kind must be `in` or `pre`")),
                };
                if name.is_empty() || name.contains(['(', ')']) {
                    return Err(syntax(lineno, "bad symbol name"));
                }
                if names.contains_key(name) {
                    return Err(GrammarError::DuplicateSymbol {
                        line: lineno,
                        name: name.to_string(),
                    });
                }
                let local = match kind {
                    SymbolKind::InTerminal => {
                        in_names.push(name.to_string());
                        in_names.len() - 1
                    }
                    SymbolKind::PreTerminal => {
                        pre_names.push(name.to_string());
                        pre_names.len() - 1
                    }
                };
                names.insert(name.to_string(), (local, kind));
            }
            "rule" => {
                let (head, rest) = parse_arrow(lineno, &mut tok)?;
                let (hl, hk) = *names.get(&head).ok_or_else(|| GrammarError::UnknownSymbol {
                    line: lineno,
                    name: head.clone(),
                })?;
                if hk != SymbolKind::InTerminal {
                    return Err(syntax(lineno, "rule head must be an in-terminal"));
                }
                let [b, c, p] = rest.as_slice() else {
                    return Err(syntax(lineno, "expected `rule A -> B C <prob>`"));
                };
                let prob = parse_prob(lineno, p)?;
                let b_id = resolve(lineno, &names, b)?;
                let c_id = resolve(lineno, &names, c)?;
                binary_rules.entry(hl).or_default().push(PendingRule {
                    line: lineno,
                    b: b_id,
                    c: c_id,
                    prob,
                });
            }
            "lex" => {
                let (head, rest) = parse_arrow(lineno, &mut tok)?;
                let (hl, hk) = *names.get(&head).ok_or_else(|| GrammarError::UnknownSymbol {
                    line: lineno,
                    name: head.clone(),
                })?;
                if hk != SymbolKind::PreTerminal {
                    return Err(syntax(lineno, "lex head must be a pre-terminal"));
                }
                let [word, p] = rest.as_slice() else {
                    return Err(syntax(lineno, "expected `lex A -> <word> <prob>`"));
                };
                if word.contains(['(', ')']) {
                    return Err(syntax(lineno, "words may not contain parentheses"));
                }
                let prob = parse_prob(lineno, p)?;
                if !word_index.contains_key(word.as_str()) {
                    word_index.insert(word.clone(), vocab.len());
                    vocab.push(word.clone());
                }
                lex_rules.entry(hl).or_default().push(PendingLex {
                    line: lineno,
                    word: word.clone(),
                    prob,
                });
            }
            other => {
                return Err(syntax(lineno, &format!("unknown directive `{other}`")));
            }
        }
    }

    let root_name = root_name.ok_or(GrammarError::MissingRoot)?;
    let n_in = in_names.len();
    let n = n_in + pre_names.len();
    if n_in == 0 || pre_names.is_empty() {
        return Err(GrammarError::Degenerate(
            "grammar needs at least one in-terminal and one pre-terminal".into(),
        ));
    }
    if vocab.is_empty() {
        return Err(GrammarError::Degenerate("no lexical rules".into()));
    }
    let root = match names.get(&root_name) {
        Some(&(local, SymbolKind::InTerminal)) => local,
        _ => return Err(GrammarError::BadRoot { name: root_name }),
    };

    let mut symbols = Vec::with_capacity(n);
    for (i, name) in in_names.iter().enumerate() {
        symbols.push(Symbol {
            id: i,
            name: name.clone(),
            kind: SymbolKind::InTerminal,
        });
    }
    for (i, name) in pre_names.iter().enumerate() {
        symbols.push(Symbol {
            id: n_in + i,
            name: name.clone(),
            kind: SymbolKind::PreTerminal,
        });
    }

    fixup_ids(&mut binary_rules, n_in);
    let mut binary = vec![vec![0.0; n * n]; n_in];
    for (a, rules) in &binary_rules {
        for r in rules {
            let slot = &mut binary[*a][r.b * n + r.c];
            if *slot != 0.0 {
                return Err(GrammarError::DuplicateRule {
                    line: r.line,
                    head: in_names[*a].clone(),
                });
            }
            *slot = r.prob;
        }
    }
    let mut lexical = vec![vec![0.0; vocab.len()]; pre_names.len()];
    for (p, rules) in &lex_rules {
        for r in rules {
            let w = word_index[&r.word];
            let slot = &mut lexical[*p][w];
            if *slot != 0.0 {
                return Err(GrammarError::DuplicateRule {
                    line: r.line,
                    head: pre_names[*p].clone(),
                });
            }
            *slot = r.prob;
        }
    }

    for a in 0..n_in {
        normalize_row(&in_names[a], &mut binary[a], opts.renormalize)?;
    }
    for p in 0..pre_names.len() {
        normalize_row(&pre_names[p], &mut lexical[p], opts.renormalize)?;
    }

    Grammar::new(symbols, root, vocab, binary, lexical)
}

// Global ids put in-terminals first, but |I| is only final at end of parse.
// Pre-terminal references are stashed as usize::MAX - local and translated
// by fixup_ids once both block sizes are known.
fn resolve(
    line: usize,
    names: &HashMap<String, (usize, SymbolKind)>,
    name: &str,
) -> Result<usize, GrammarError> {
    match names.get(name) {
        Some(&(local, SymbolKind::InTerminal)) => Ok(local),
        Some(&(local, SymbolKind::PreTerminal)) => Ok(usize::MAX - local),
        None => Err(GrammarError::UnknownSymbol {
            line,
            name: name.to_string(),
        }),
    }
}

fn parse_arrow(
    line: usize,
    tok: &mut std::str::SplitWhitespace<'_>,
) -> Result<(String, Vec<String>), GrammarError> {
    let head = tok
        .next()
        .ok_or_else(|| GrammarError::Syntax {
            line,
            msg: "missing head symbol".into(),
        })?
        .to_string();
    match tok.next() {
        Some("->") => {}
        _ => {
            return Err(GrammarError::Syntax {
                line,
                msg: "expected `->`".into(),
            })
        }
    }
    Ok((head, tok.map(|s| s.to_string()).collect()))
}

fn parse_prob(line: usize, s: &str) -> Result<f64, GrammarError> {
    let v: f64 = s.parse().map_err(|_| GrammarError::Syntax {
        line,
        msg: format!("bad probability literal `{s}`"),
    })?;
    if !(0.0..=1.0).contains(&v) {
        return Err(GrammarError::BadProbability { line, value: v });
    }
    Ok(v)
}

fn normalize_row(name: &str, row: &mut [f64], renormalize: bool) -> Result<(), GrammarError> {
    let sum: f64 = row.iter().sum();
    let residual = sum - 1.0;
    if residual.abs() <= STRICT_NORM_TOL {
        return Ok(());
    }
    if renormalize && residual.abs() < RENORM_TOL && sum > 0.0 {
        for p in row.iter_mut() {
            *p /= sum;
        }
        return Ok(());
    }
    Err(GrammarError::Normalization {
        symbol: name.to_string(),
        sum,
        residual,
    })
}

/// Serializes a grammar back to the file format with 17 significant digits,
/// which round-trips every binary64 probability exactly.
pub fn save_grammar(g: &Grammar) -> Result<String, GrammarError> {
    if g.vocab().is_empty() {
        return Err(GrammarError::Degenerate("empty vocabulary".into()));
    }
    let mut out = String::new();
    out.push_str(&format!("root {}\n", g.symbol_name(g.root())));
    for s in g.symbols() {
        let kind = match s.kind {
            SymbolKind::InTerminal => "in",
            SymbolKind::PreTerminal => "pre",
        };
        out.push_str(&format!("nonterm {} {}\n", s.name, kind));
    }
    let n = g.n_symbols();
    for a in g.in_terminal_ids() {
        let m = g.binary_matrix(a);
        for b in 0..n {
            for c in 0..n {
                let p = m[b * n + c];
                if p != 0.0 {
                    out.push_str(&format!(
                        "rule {} -> {} {} {:.16e}\n",
                        g.symbol_name(a),
                        g.symbol_name(b),
                        g.symbol_name(c),
                        p
                    ));
                }
            }
        }
    }
    for a in g.pre_terminal_ids() {
        let row = g.lexical_row(a);
        for (w, &p) in row.iter().enumerate() {
            if p != 0.0 {
                out.push_str(&format!(
                    "lex {} -> {} {:.16e}\n",
                    g.symbol_name(a),
                    g.vocab()[w],
                    p
                ));
            }
        }
    }
    Ok(out)
}

fn fixup_ids(binary_rules: &mut HashMap<usize, Vec<PendingRule>>, n_in: usize) {
    for rules in binary_rules.values_mut() {
        for r in rules {
            if r.b > usize::MAX / 2 {
                r.b = n_in + (usize::MAX - r.b);
            }
            if r.c > usize::MAX / 2 {
                r.c = n_in + (usize::MAX - r.c);
            }
        }
    }
}
