//! Sample sentences and gold trees from a grammar.
//!
//! ```bash
//! cargo run -p pcfg-io --example generate_corpus
//! ```

use pcfg_io::grammar::{load_grammar, LoadOptions};
use pcfg_io::parallel::Parallelism;
use pcfg_io::sampler;
use pcfg_io::tree::print_tree;

fn main() -> anyhow::Result<()> {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/recursive.pcfg"
    ))?;
    let g = load_grammar(&text, LoadOptions::default())?;

    // same seed => byte-identical corpus; sentence i draws from RNG stream i
    let (corpus, trees) = sampler::sample_corpus(&g, 10, 42, 16, &Parallelism::Sequential)?;
    for (words, tree) in corpus.iter().zip(&trees) {
        let refs: Vec<&str> = words.iter().map(|w| w.as_str()).collect();
        println!("{:<40} {}", words.join(" "), print_tree(&g, tree, &refs));
    }

    let lens: Vec<usize> = corpus.iter().map(|s| s.len()).collect();
    println!("\nlengths: {lens:?}");
    Ok(())
}
