//! Binary labeled span trees and their bracketed text format.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::grammar::Grammar;

/// A labeled span `(label, i, j)` with 1-based inclusive endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub label: usize,
    pub i: usize,
    pub j: usize,
}

/// A binary labeled parse tree over a sentence of length `len`.
///
/// Spans are stored in preorder: `(root, 1, len)` first, every internal span
/// followed by its left then right subtree. A valid tree has exactly
/// `2*len - 1` spans and every `(., i, i)` is a leaf.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseTree {
    pub len: usize,
    pub spans: Vec<Span>,
}

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("offset {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("unknown symbol `{0}` in tree")]
    UnknownSymbol(String),
    #[error("malformed tree: {0}")]
    Shape(String),
}

impl ParseTree {
    /// Checks the binary-tree shape: correct span count, root coverage, and
    /// every internal span split into two adjacent children.
    pub fn check_shape(&self) -> Result<(), TreeError> {
        if self.len == 0 {
            return Err(TreeError::Shape("empty sentence".into()));
        }
        if self.spans.len() != 2 * self.len - 1 {
            return Err(TreeError::Shape(format!(
                "expected {} spans, found {}",
                2 * self.len - 1,
                self.spans.len()
            )));
        }
        let first = self.spans[0];
        if first.i != 1 || first.j != self.len {
            return Err(TreeError::Shape("first span must cover the sentence".into()));
        }
        let mut children: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
        for s in &self.spans {
            if s.i < 1 || s.j > self.len || s.i > s.j {
                return Err(TreeError::Shape(format!("bad span ({}, {})", s.i, s.j)));
            }
            *seen.entry((s.i, s.j)).or_insert(0) += 1;
        }
        if seen.values().any(|&c| c > 1) {
            return Err(TreeError::Shape("duplicate span".into()));
        }
        for s in &self.spans {
            if s.i == s.j {
                continue;
            }
            // locate the unique split: both children must be present
            let mut found = false;
            for k in s.i..s.j {
                if seen.contains_key(&(s.i, k)) && seen.contains_key(&(k + 1, s.j)) {
                    children.entry((s.i, s.j)).or_default().push((s.i, k));
                    found = true;
                    break;
                }
            }
            if !found {
                return Err(TreeError::Shape(format!(
                    "span ({}, {}) has no split",
                    s.i, s.j
                )));
            }
        }
        Ok(())
    }

    /// Leaf labels in sentence order.
    pub fn leaf_labels(&self) -> Vec<usize> {
        let mut leaves: Vec<&Span> = self.spans.iter().filter(|s| s.i == s.j).collect();
        leaves.sort_by_key(|s| s.i);
        leaves.iter().map(|s| s.label).collect()
    }

    /// Product of rule probabilities of this derivation of `words` under `g`,
    /// zero when some rule is absent.
    pub fn derivation_prob(&self, g: &Grammar, words: &[usize]) -> f64 {
        let by_span: HashMap<(usize, usize), usize> = self
            .spans
            .iter()
            .map(|s| ((s.i, s.j), s.label))
            .collect();
        let mut prob = 1.0;
        for s in &self.spans {
            if s.i == s.j {
                prob *= g.lexical_prob(s.label, words[s.i - 1]);
            } else {
                let mut found = false;
                for k in s.i..s.j {
                    if let (Some(&b), Some(&c)) = (by_span.get(&(s.i, k)), by_span.get(&(k + 1, s.j)))
                    {
                        prob *= g.binary_prob(s.label, b, c);
                        found = true;
                        break;
                    }
                }
                if !found {
                    return 0.0;
                }
            }
        }
        prob
    }
}

/// Prints a tree with its sentence in bracketed form,
/// e.g. `(ROOT (X (T x) (T x)) (T y))`.
pub fn print_tree(g: &Grammar, tree: &ParseTree, words: &[&str]) -> String {
    let by_span: HashMap<(usize, usize), usize> = tree
        .spans
        .iter()
        .map(|s| ((s.i, s.j), s.label))
        .collect();
    let mut out = String::new();
    print_span(g, &by_span, words, 1, tree.len, &mut out);
    out
}

fn print_span(
    g: &Grammar,
    by_span: &HashMap<(usize, usize), usize>,
    words: &[&str],
    i: usize,
    j: usize,
    out: &mut String,
) {
    let label = by_span[&(i, j)];
    if i == j {
        write!(out, "({} {})", g.symbol_name(label), words[i - 1]).unwrap();
        return;
    }
    write!(out, "({} ", g.symbol_name(label)).unwrap();
    for k in i..j {
        if by_span.contains_key(&(i, k)) && by_span.contains_key(&(k + 1, j)) {
            print_span(g, by_span, words, i, k, out);
            out.push(' ');
            print_span(g, by_span, words, k + 1, j, out);
            break;
        }
    }
    out.push(')');
}

/// Parses one bracketed tree line, returning the tree and its words.
pub fn parse_tree(g: &Grammar, line: &str) -> Result<(ParseTree, Vec<String>), TreeError> {
    let bytes = line.as_bytes();
    let mut pos = 0usize;
    let mut spans = Vec::new();
    let mut words = Vec::new();
    parse_node(g, bytes, &mut pos, &mut spans, &mut words)?;
    skip_ws(bytes, &mut pos);
    if pos != bytes.len() {
        return Err(TreeError::Parse {
            offset: pos,
            msg: "trailing input after tree".into(),
        });
    }
    let tree = ParseTree {
        len: words.len(),
        spans,
    };
    tree.check_shape()?;
    Ok((tree, words))
}

fn skip_ws(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
}

fn read_token(bytes: &[u8], pos: &mut usize) -> String {
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'(' && bytes[*pos] != b')' {
        *pos += 1;
    }
    String::from_utf8_lossy(&bytes[start..*pos]).into_owned()
}

// Returns the (i, j) range covered by the node. Spans are appended preorder.
fn parse_node(
    g: &Grammar,
    bytes: &[u8],
    pos: &mut usize,
    spans: &mut Vec<Span>,
    words: &mut Vec<String>,
) -> Result<(usize, usize), TreeError> {
    skip_ws(bytes, pos);
    if *pos >= bytes.len() || bytes[*pos] != b'(' {
        return Err(TreeError::Parse {
            offset: *pos,
            msg: "expected `(`".into(),
        });
    }
    *pos += 1;
    skip_ws(bytes, pos);
    let name = read_token(bytes, pos);
    if name.is_empty() {
        return Err(TreeError::Parse {
            offset: *pos,
            msg: "expected node label".into(),
        });
    }
    let label = g
        .symbol_by_name(&name)
        .ok_or_else(|| TreeError::UnknownSymbol(name.clone()))?
        .id;
    let span_slot = spans.len();
    spans.push(Span { label, i: 0, j: 0 });

    skip_ws(bytes, pos);
    let (i, j) = if *pos < bytes.len() && bytes[*pos] == b'(' {
        let (i, mid) = parse_node(g, bytes, pos, spans, words)?;
        skip_ws(bytes, pos);
        if *pos < bytes.len() && bytes[*pos] == b'(' {
            let (mid2, j) = parse_node(g, bytes, pos, spans, words)?;
            if mid2 != mid + 1 {
                return Err(TreeError::Parse {
                    offset: *pos,
                    msg: "children are not adjacent".into(),
                });
            }
            (i, j)
        } else {
            return Err(TreeError::Parse {
                offset: *pos,
                msg: "internal node needs two children".into(),
            });
        }
    } else {
        let word = read_token(bytes, pos);
        if word.is_empty() {
            return Err(TreeError::Parse {
                offset: *pos,
                msg: "expected word".into(),
            });
        }
        words.push(word);
        (words.len(), words.len())
    };
    skip_ws(bytes, pos);
    if *pos >= bytes.len() || bytes[*pos] != b')' {
        return Err(TreeError::Parse {
            offset: *pos,
            msg: "expected `)`".into(),
        });
    }
    *pos += 1;
    spans[span_slot].i = i;
    spans[span_slot].j = j;
    Ok((i, j))
}
