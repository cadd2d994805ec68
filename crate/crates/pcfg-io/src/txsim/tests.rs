use super::*;
use crate::chart::{self, IoConfig, ScaleMode};
use crate::grammar::{load_grammar, LoadOptions};
use build::BuildOptions;

fn g0() -> Grammar {
    load_grammar(
        "root ROOT\nnonterm ROOT in\nnonterm A pre\nnonterm B pre\nrule ROOT -> A B 1.0\nlex A -> a 1.0\nlex B -> b 1.0\n",
        LoadOptions::default(),
    )
    .unwrap()
}

fn g1() -> Grammar {
    load_grammar(
        "root ROOT\nnonterm ROOT in\nnonterm X in\nnonterm T pre\nrule ROOT -> X T 0.6\nrule ROOT -> T T 0.4\nrule X -> T T 1.0\nlex T -> x 0.5\nlex T -> y 0.5\n",
        LoadOptions::default(),
    )
    .unwrap()
}

#[test]
fn g0_dimensions() {
    let g = g0();
    let hard = build_hard_model(&g, 2, &BuildOptions::default()).unwrap();
    assert_eq!(hard.d(), 26); // (4*3+1)*2
    assert_eq!(hard.n_layers(), 3);
    let rel = build_relative_model(&g, 2, &BuildOptions::default()).unwrap();
    assert_eq!(rel.d(), 13); // 2*3*2+1
    assert_eq!(rel.n_layers(), 3);
    assert_eq!(rel.heads_in_layer(0), 3);
    assert_eq!(rel.heads_in_layer(1), 1); // boundary move head
}

#[test]
fn g1_dimensions() {
    let g = g1();
    let hard = build_hard_model(&g, 4, &BuildOptions::default()).unwrap();
    assert_eq!(hard.d(), 52);
    assert_eq!(hard.n_layers(), 7);
    for l in 0..7 {
        assert!(hard.heads_in_layer(l) <= 12); // 4|N|
    }
    assert_eq!(hard.heads_in_layer(0), 6); // inside: 2|N|
    assert_eq!(hard.heads_in_layer(6), 12); // outside: 4|N|
}

#[test]
fn lexical_initialization() {
    let g = g0();
    let rel = build_relative_model(&g, 2, &BuildOptions::default()).unwrap();
    let traj = forward(&rel, &g, &["a", "b"]).unwrap();
    let a = g.symbol_by_name("A").unwrap().id;
    // layer-0 coordinate for (inside, A, len-1) at position 1
    assert_eq!(traj.coord(0, 1, rel.layout.inside_end(0, a), rel.d()), 1.0);
    // after layer 1, alpha(ROOT, 1, 2) sits at position 2
    assert_eq!(
        traj.coord(1, 2, rel.layout.inside_end(1, g.root()), rel.d()),
        1.0
    );
}

#[test]
fn g0_exact_verification() {
    let g = g0();
    let report = verify(&g, &["a", "b"], &BuildOptions::default()).unwrap();
    assert!(report.pass, "{report:?}");
    for d in &report.deviations {
        assert_eq!(d.max_abs, 0.0, "{d:?}");
    }
    assert!(report.structural.ok);
    assert!(report.zeta_ok);
}

#[test]
fn g1_matches_chart() {
    let g = g1();
    for words in [vec!["x", "x", "y"], vec!["x", "x", "x"], vec!["y", "x"]] {
        let report = verify(&g, &words, &BuildOptions::default()).unwrap();
        assert!(report.pass, "words {words:?}: {report:?}");
    }
}

#[test]
fn extract_chart_round_trip() {
    let g = g1();
    let words = ["x", "x", "y"];
    let oracle = chart::complete(&g, &words, None, &IoConfig::exact(ScaleMode::Raw)).unwrap();
    for model in [
        build_hard_model(&g, 3, &BuildOptions::default()).unwrap(),
        build_relative_model(&g, 3, &BuildOptions::default()).unwrap(),
    ] {
        let traj = forward(&model, &g, &words).unwrap();
        let extracted = extract_chart(&model, &traj);
        for a in 0..g.n_symbols() {
            for i in 1..=3 {
                for j in i..=3 {
                    assert!(
                        (extracted.alpha(a, i, j) - oracle.alpha(a, i, j)).abs() <= 1e-12,
                        "alpha({a},{i},{j})"
                    );
                    assert!(
                        (extracted.beta(a, i, j) - oracle.beta(a, i, j)).abs() <= 1e-12,
                        "beta({a},{i},{j})"
                    );
                }
            }
        }
    }
}

#[test]
fn hard_and_relative_extractions_agree() {
    let g = g1();
    let words = ["x", "y", "x"];
    let hard = build_hard_model(&g, 3, &BuildOptions::default()).unwrap();
    let rel = build_relative_model(&g, 3, &BuildOptions::default()).unwrap();
    let ch = extract_chart(&hard, &forward(&hard, &g, &words).unwrap());
    let cr = extract_chart(&rel, &forward(&rel, &g, &words).unwrap());
    for a in 0..g.n_symbols() {
        for i in 1..=3 {
            for j in i..=3 {
                let (x, y) = (ch.alpha(a, i, j), cr.alpha(a, i, j));
                assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
                let (xb, yb) = (ch.beta(a, i, j), cr.beta(a, i, j));
                assert!((xb - yb).abs() <= 1e-9 * xb.abs().max(1.0));
            }
        }
    }
}

#[test]
fn padding_robustness() {
    // a shorter sentence run in a larger model gives the same prefix chart
    let g = g1();
    let words = ["x", "y", "x"];
    let oracle = chart::complete(&g, &words, None, &IoConfig::exact(ScaleMode::Raw)).unwrap();
    for model in [
        build_hard_model(&g, 6, &BuildOptions::default()).unwrap(),
        build_relative_model(&g, 6, &BuildOptions::default()).unwrap(),
    ] {
        let traj = forward(&model, &g, &words).unwrap();
        let extracted = extract_chart(&model, &traj);
        for a in 0..g.n_symbols() {
            for i in 1..=3 {
                for j in i..=3 {
                    let (x, y) = (extracted.alpha(a, i, j), oracle.alpha(a, i, j));
                    assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "alpha({a},{i},{j})");
                    let (xb, yb) = (extracted.beta(a, i, j), oracle.beta(a, i, j));
                    assert!(
                        (xb - yb).abs() <= 1e-12 * xb.abs().max(1.0),
                        "beta({a},{i},{j}): model {xb} oracle {yb}"
                    );
                }
            }
        }
    }
}

#[test]
fn inside_head_window_is_gated() {
    // relative inside-layer-l head: zero attention outside [i-l, i-1]
    let g = g1();
    let model = build_relative_model(&g, 4, &BuildOptions::default()).unwrap();
    let traj = exec::forward_with_attention(&model, &g, &["x", "x", "y", "x"]).unwrap();
    let attn = traj.attentions.as_ref().unwrap();
    let n_pos = traj.n_positions;
    for (li, layer_attn) in attn.iter().enumerate().take(3) {
        let off = li + 1; // inside layer computing spans of length off+1
        for a in layer_attn {
            for i in 1..=traj.sentence_len {
                for j in 1..=n_pos {
                    let score = a[(i - 1) * n_pos + (j - 1)];
                    let in_window = j < i && i - j <= off;
                    if !in_window {
                        assert_eq!(score, 0.0, "layer {} i={} j={}", li + 1, i, j);
                    }
                }
            }
        }
    }
}

#[test]
fn memory_budget_is_enforced() {
    let g = g1();
    let opts = BuildOptions { memory_budget: 1024 };
    match build_hard_model(&g, 8, &opts) {
        Err(TxsimError::MemoryBudget { required, budget }) => {
            assert!(required > budget);
            assert_eq!(budget, 1024);
        }
        other => panic!("expected budget error, got {:?}", other.map(|m| m.d())),
    }
}

#[test]
fn sentence_longer_than_model_is_rejected() {
    let g = g0();
    let model = build_relative_model(&g, 2, &BuildOptions::default()).unwrap();
    assert!(matches!(
        forward(&model, &g, &["a", "b", "a"]),
        Err(TxsimError::SentenceTooLong { len: 3, max: 2 })
    ));
}

#[test]
fn attended_distance_point_mass_and_zero() {
    let g = g1();
    let model = build_relative_model(&g, 4, &BuildOptions::default()).unwrap();
    let corpus: Vec<Vec<String>> = vec![
        vec!["x".into(), "x".into(), "y".into(), "x".into()],
        vec!["x".into(), "y".into(), "x".into()],
    ];
    let ads = averaged_attended_distance(&model, &g, &corpus).unwrap();
    // boundary move head attends exactly at distance 1
    let boundary = ads
        .iter()
        .find(|h| h.layer == 4 && h.head == 0)
        .unwrap();
    assert!((boundary.ad - 1.0).abs() < 1e-12);
    // inside-layer heads stay within their window
    for h in &ads {
        if h.layer <= 3 && h.active_sentences > 0 {
            let off = h.layer as f64;
            assert!(h.ad >= 1.0 - 1e-12 && h.ad <= off + 1e-12, "{h:?}");
        }
    }
    // heads with no mass report zero
    for h in &ads {
        if h.active_sentences == 0 {
            assert_eq!(h.ad, 0.0);
        }
    }
}
