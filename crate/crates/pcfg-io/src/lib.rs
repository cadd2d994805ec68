//! PCFG toolkit built around the Inside-Outside algorithm.
//!
//! The crate provides:
//!
//! - [`grammar`]: Chomsky-normal-form PCFGs with a line-oriented file format,
//!   validation, and round-tripping serialization.
//! - [`sampler`]: sentence/tree generation from a grammar with reproducible,
//!   stream-split RNG.
//! - [`chart`]: exact Inside-Outside dynamic programming (raw or rescaled
//!   probabilities), span marginals, and sentence log-probabilities.
//! - [`parse_eval`]: Labelled-Recall tree construction from span marginals,
//!   a right-branching baseline, and unlabelled span F1 (sentence/corpus).
//! - [`mlm`]: the 1-mask conditional word distribution derived from the
//!   chart, and corpus perplexity under it.
//! - [`txsim`]: explicit ReLU-attention networks whose fixed weights execute
//!   Inside-Outside layer by layer, plus verification against [`chart`].
//! - [`approx`]: frequency-based non-terminal restriction and per-span-length
//!   low-rank transforms, with a degradation-measurement harness.
//!
//! The `pcfg-io` binary exposes batch subcommands over the same operations;
//! the `examples/` directory contains one runnable example per capability.

pub mod approx;
pub mod chart;
pub mod grammar;
pub mod linalg;
pub mod mlm;
pub mod parallel;
pub mod parse_eval;
pub mod sampler;
pub mod tree;
pub mod txsim;

pub use chart::{IOChart, Marginals, ScaleMode};
pub use grammar::{Grammar, Symbol, SymbolKind};
pub use tree::{ParseTree, Span};

/// Version tag embedded in every JSON artifact the toolkit writes.
pub const FORMAT_VERSION: u32 = 1;
