//! The two approximation ingredients end to end: frequency-based restriction
//! to the most common non-terminals, per-span-length low-rank transforms
//! learned by eigendecomposition of span-marginal correlations, and the
//! degradation table measuring what each costs in F1 and perplexity.
//!
//! ```bash
//! cargo run -p pcfg-io --example restrict_and_compress
//! ```

use pcfg_io::approx::{
    degradation_report, learn_transforms, select_subsets, span_frequencies, ApproxConfig,
    RankSchedule,
};
use pcfg_io::chart::ScaleMode;
use pcfg_io::grammar::{load_grammar, LoadOptions};
use pcfg_io::parallel::Parallelism;
use pcfg_io::parse_eval::EvalPolicy;
use pcfg_io::sampler;

fn main() -> anyhow::Result<()> {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/compressible.pcfg"
    ))?;
    let g = load_grammar(&text, LoadOptions::default())?;
    let par = Parallelism::Sequential;
    let (corpus, gold) = sampler::sample_corpus(&g, 400, 17, 12, &par)?;

    // how often does each non-terminal head a span in the gold trees?
    let freq = span_frequencies(&g, &gold);
    println!("span-head frequencies:");
    for s in g.symbols() {
        println!("  {:<4} {}", s.name, freq.count(s.id));
    }

    // keep the most frequent in-terminals (the root is always kept)
    let restriction = select_subsets(&g, &freq, 3, g.n_pre_terminals())?;
    println!(
        "\nkept in-terminals: {:?}",
        restriction
            .in_ids()
            .iter()
            .map(|&a| g.symbol_name(a))
            .collect::<Vec<_>>()
    );

    // per-span-length transforms at rank 1
    let (bank, stats) =
        learn_transforms(&g, &corpus, &restriction, &RankSchedule::uniform(2), false, &par)?;
    println!(
        "learned transforms for offsets {:?} from {} sentences ({} skipped)",
        bank.offsets().collect::<Vec<_>>(),
        stats.sentences_used,
        stats.sentences_skipped
    );

    let configs = vec![
        ApproxConfig {
            label: "exact".into(),
            restriction: None,
            bank: None,
        },
        ApproxConfig {
            label: "restricted".into(),
            restriction: Some(restriction.clone()),
            bank: None,
        },
        ApproxConfig {
            label: "restricted + rank-2".into(),
            restriction: Some(restriction),
            bank: Some(bank),
        },
    ];
    let rows = degradation_report(
        &g,
        &corpus,
        &gold,
        &configs,
        &EvalPolicy::default(),
        ScaleMode::Raw,
        &par,
    )?;
    println!("\n{:<22} {:>9} {:>9} {:>9}", "config", "corpus F1", "sent F1", "ppl");
    for r in &rows {
        println!(
            "{:<22} {:>9.4} {:>9.4} {:>9.4}",
            r.config, r.corpus_f1, r.sent_f1, r.ppl
        );
    }
    Ok(())
}
