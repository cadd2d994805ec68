//! Run the exact Inside-Outside recursions on one sentence and inspect the
//! chart: inside/outside values, span marginals, and the per-position
//! consistency identity.
//!
//! ```bash
//! cargo run -p pcfg-io --example inside_outside_chart
//! ```

use pcfg_io::chart::{complete, marginals, IoConfig, ScaleMode};
use pcfg_io::grammar::{load_grammar, LoadOptions};

fn main() -> anyhow::Result<()> {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/recursive.pcfg"
    ))?;
    let g = load_grammar(&text, LoadOptions::default())?;

    let words = ["the", "cat", "sleeps"];
    let chart = complete(&g, &words, None, &IoConfig::exact(ScaleMode::Raw))?;
    println!(
        "Pr[\"{}\"] = {:.6e}   (log {:.4})",
        words.join(" "),
        chart.sentence_value(&g),
        chart.sentence_logprob(&g)
    );

    println!("\nnon-zero inside values:");
    for a in 0..g.n_symbols() {
        for i in 1..=words.len() {
            for j in i..=words.len() {
                let v = chart.alpha(a, i, j);
                if v > 0.0 {
                    println!("  alpha({}, {i}, {j}) = {v:.6}", g.symbol_name(a));
                }
            }
        }
    }

    let m = marginals(&g, &chart);
    println!("\nspan posteriors (best label per span):");
    for i in 1..=words.len() {
        for j in i..=words.len() {
            let (label, mu) = m.best_label(i, j);
            if mu > 0.0 {
                println!(
                    "  ({i}, {j}): {} with posterior {:.4}",
                    g.symbol_name(label),
                    m.posterior(label, i, j)
                );
            }
        }
    }

    // every word is covered by exactly one pre-terminal in every derivation,
    // so the pre-terminal marginals at each position sum to the sentence
    // probability
    for i in 1..=words.len() {
        let sum: f64 = g.pre_terminal_ids().map(|a| m.mu(a, i, i)).sum();
        println!(
            "position {i}: sum of pre-terminal marginals = {sum:.6e} (sentence prob {:.6e})",
            chart.sentence_value(&g)
        );
    }
    Ok(())
}
