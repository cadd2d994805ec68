//! Labelled-Recall parsing of a sampled corpus, scored against the gold
//! trees with unlabelled span F1 (sentence and corpus modes), plus the
//! right-branching baseline.
//!
//! ```bash
//! cargo run -p pcfg-io --example parse_and_score
//! ```

use pcfg_io::chart::IoConfig;
use pcfg_io::grammar::{load_grammar, LoadOptions};
use pcfg_io::parallel::Parallelism;
use pcfg_io::parse_eval::{
    f1_corpus, f1_sentence, f1_trees, labelled_recall, right_branching, tree_eval_spans,
    EvalPolicy, F1Mode,
};
use pcfg_io::sampler;

fn main() -> anyhow::Result<()> {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/recursive.pcfg"
    ))?;
    let g = load_grammar(&text, LoadOptions::default())?;
    let (corpus, gold) = sampler::sample_corpus(&g, 300, 9, 12, &Parallelism::Sequential)?;

    let mut pred = Vec::new();
    for words in &corpus {
        let refs: Vec<&str> = words.iter().map(|w| w.as_str()).collect();
        let parse = labelled_recall(&g, &refs, &IoConfig::default())?;
        pred.push(parse.tree);
    }

    let policy = EvalPolicy::default();
    let sent = f1_trees(&gold, &pred, &policy, F1Mode::Sentence);
    let corp = f1_trees(&gold, &pred, &policy, F1Mode::Corpus);
    println!("Labelled-Recall:  sentence F1 {:.4}   corpus F1 {:.4}", sent.f1, corp.f1);

    // right-branching baseline over the same sentences
    let gold_spans: Vec<_> = gold.iter().map(|t| tree_eval_spans(t, &policy)).collect();
    let rb_spans: Vec<_> = corpus
        .iter()
        .map(|s| {
            let rb = right_branching(s.len());
            pcfg_io::parse_eval::extract_eval_spans(s.len(), rb.spans, &policy)
        })
        .collect();
    let rb_sent = f1_sentence(&gold_spans, &rb_spans, &policy)?;
    let rb_corp = f1_corpus(&gold_spans, &rb_spans, &policy)?;
    println!("Right-branching:  sentence F1 {:.4}   corpus F1 {:.4}", rb_sent.f1, rb_corp.f1);
    Ok(())
}
