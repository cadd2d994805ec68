//! The 1-mask conditional word distribution and corpus perplexity.
//!
//! Masking a position sets every pre-terminal's lexical inside value to 1,
//! which marginalizes the missing word; the conditional then reads off the
//! outside values at the masked position.
//!
//! ```bash
//! cargo run -p pcfg-io --example masked_word_distribution
//! ```

use pcfg_io::chart::ScaleMode;
use pcfg_io::grammar::{load_grammar, LoadOptions};
use pcfg_io::mlm::{one_mask_distribution, one_mask_perplexity};
use pcfg_io::parallel::Parallelism;
use pcfg_io::sampler;

fn main() -> anyhow::Result<()> {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/recursive.pcfg"
    ))?;
    let g = load_grammar(&text, LoadOptions::default())?;

    let words = ["the", "cat", "sleeps"];
    for m in 1..=words.len() {
        let dist = one_mask_distribution(&g, &words, m, None, None, ScaleMode::Raw)?;
        let mut ranked: Vec<(&str, f64)> = g
            .vocab()
            .iter()
            .map(|w| (w.as_str(), dist.prob_of(&g, w)))
            .filter(|(_, p)| *p > 0.0)
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        let shown: Vec<String> = ranked
            .iter()
            .map(|(w, p)| format!("{w}: {p:.3}"))
            .collect();
        println!("mask position {m} ({}): {}", words[m - 1], shown.join(", "));
    }

    let (corpus, _) = sampler::sample_corpus(&g, 200, 31, 12, &Parallelism::Sequential)?;
    let report = one_mask_perplexity(&g, &corpus, None, None, ScaleMode::Raw, &Parallelism::Sequential)?;
    println!(
        "\n1-mask perplexity over {} sentences: {:.4} ({} tokens scored, {} skipped)",
        corpus.len(),
        report.ppl,
        report.tokens_scored,
        report.skipped
    );
    Ok(())
}
