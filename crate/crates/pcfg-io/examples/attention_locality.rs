//! Averaged attended distance: how far each constructed head looks, measured
//! over a corpus. Inside-layer heads of the relative construction attend
//! only within their span window, so layer l stays within [1, l].
//!
//! ```bash
//! cargo run -p pcfg-io --example attention_locality
//! ```

use pcfg_io::grammar::{load_grammar, LoadOptions};
use pcfg_io::parallel::Parallelism;
use pcfg_io::sampler;
use pcfg_io::txsim::{averaged_attended_distance, build_relative_model, BuildOptions};

fn main() -> anyhow::Result<()> {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/recursive.pcfg"
    ))?;
    let g = load_grammar(&text, LoadOptions::default())?;
    let max_len = 8;
    let (corpus, _) = sampler::sample_corpus(&g, 50, 5, max_len, &Parallelism::Sequential)?;

    let model = build_relative_model(&g, max_len, &BuildOptions::default())?;
    let heads = averaged_attended_distance(&model, &g, &corpus)?;

    println!("{:<7} {:<5} {:>8} {:>10}", "layer", "head", "AD", "active");
    for h in &heads {
        if h.active_sentences == 0 {
            continue;
        }
        let role = if h.layer < max_len {
            "inside"
        } else if h.layer == max_len {
            "move"
        } else {
            "outside"
        };
        println!(
            "{:<7} {:<5} {:>8.3} {:>10}   {role}",
            h.layer, h.head, h.ad, h.active_sentences
        );
    }
    Ok(())
}
