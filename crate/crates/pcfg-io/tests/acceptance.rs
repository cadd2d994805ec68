//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (visible with `cargo test --test acceptance -- --nocapture`).

mod common;

use common::*;
use rand::Rng;

use pcfg_io::approx::{
    self, ApproxConfig, RankSchedule, RestrictionSpec,
};
use pcfg_io::chart::{self, IoConfig, ScaleMode};
use pcfg_io::grammar::Grammar;
use pcfg_io::mlm;
use pcfg_io::parallel::Parallelism;
use pcfg_io::parse_eval::{self, EvalPolicy, F1Mode};
use pcfg_io::sampler;
use pcfg_io::txsim::{self, BuildOptions};

const REL_TOL_ORACLE: f64 = 1e-12;

fn rel_err(x: f64, y: f64) -> f64 {
    let m = x.abs().max(y.abs());
    if m == 0.0 {
        0.0
    } else {
        (x - y).abs() / m
    }
}

fn finish(criterion: usize, label: &str, failures: Vec<String>, stats: String) {
    let ok = failures.is_empty();
    println!(
        "[criterion {criterion}] {}: {label} ({stats})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion} failures: {failures:#?}");
}

// Grammar pool shared by criteria 1-3: >= 50 random grammars with |N| <= 6
// and |vocab| <= 4, each with exhaustively enumerated short strings plus
// sampled sentences of length <= 6.
fn oracle_pool() -> Vec<(Grammar, Vec<Vec<usize>>)> {
    let mut rng = rng(0xC0FFEE);
    let mut pool = Vec::new();
    for gi in 0..50 {
        let n_in = rng.gen_range(1..=3);
        let n_pre = rng.gen_range(1..=3);
        let vocab = rng.gen_range(2..=4);
        let g = random_grammar(&mut rng, n_in, n_pre, vocab, 2.0);
        let mut sentences: Vec<Vec<usize>> = Vec::new();
        for len in 1..=3 {
            sentences.extend(all_strings(vocab, len));
        }
        // sampled sentences cover the grammar's own support up to length 6
        for s in 0..6 {
            if let Ok((words, _)) = sampler::sample_tree(&g, gi * 31 + s, 6) {
                let ids: Vec<usize> = words.iter().map(|w| g.word_id(w).unwrap()).collect();
                if !sentences.contains(&ids) {
                    sentences.push(ids);
                }
            }
        }
        // plus a few arbitrary longer strings, derivable or not
        for len in 4..=6 {
            let ids: Vec<usize> = (0..len).map(|_| rng.gen_range(0..vocab)).collect();
            if !sentences.contains(&ids) {
                sentences.push(ids);
            }
        }
        pool.push((g, sentences));
    }
    pool
}

#[test]
fn criterion_1_inside_outside_oracle() {
    let pool = oracle_pool();
    let mut failures = Vec::new();
    let mut alpha_checked = 0usize;
    let mut mu_checked = 0usize;
    let mut worst = 0.0f64;
    for (gi, (g, sentences)) in pool.iter().enumerate() {
        let mut mu_budget = 3usize; // explicit-enumeration sentences per grammar
        for ids in sentences {
            let toks = tokens(g, ids);
            let words: Vec<&str> = toks.iter().map(|s| s.as_str()).collect();
            let ch = chart::complete(g, &words, None, &IoConfig::exact(ScaleMode::Raw)).unwrap();
            let brute = brute_sentence_prob(g, ids);
            let got = ch.alpha(g.root(), 1, ids.len());
            let err = rel_err(got, brute);
            worst = worst.max(err);
            alpha_checked += 1;
            if err > REL_TOL_ORACLE {
                failures.push(format!(
                    "grammar {gi} sentence {ids:?}: alpha {got} vs brute {brute}"
                ));
            }
            if mu_budget > 0 && ids.len() <= 5 && brute > 0.0 {
                mu_budget -= 1;
                mu_checked += 1;
                let mu = brute_marginals(g, ids);
                let m = chart::marginals(g, &ch);
                let l = ids.len();
                for a in 0..g.n_symbols() {
                    for i in 1..=l {
                        for j in i..=l {
                            let want = mu[(a * l + (i - 1)) * l + (j - 1)];
                            let got = m.mu(a, i, j);
                            let err = rel_err(got, want);
                            worst = worst.max(err);
                            if err > REL_TOL_ORACLE {
                                failures.push(format!(
                                    "grammar {gi} sentence {ids:?}: mu({a},{i},{j}) {got} vs {want}"
                                ));
                            }
                        }
                    }
                }
            }
        }
    }
    finish(
        1,
        "inside-outside vs brute-force tree enumeration",
        failures,
        format!(
            "{} grammars, {alpha_checked} sentence probabilities, {mu_checked} full marginal tables, worst rel err {worst:.2e}",
            pool.len()
        ),
    );
}

#[test]
fn criterion_2_one_mask_oracle() {
    let pool = oracle_pool();
    let mut failures = Vec::new();
    let mut positions_checked = 0usize;
    let mut worst = 0.0f64;
    for (gi, (g, sentences)) in pool.iter().enumerate() {
        for ids in sentences.iter().filter(|s| s.len() >= 2).take(8) {
            let toks = tokens(g, ids);
            let words: Vec<&str> = toks.iter().map(|s| s.as_str()).collect();
            for m in 1..=ids.len() {
                // brute force: substitute every vocabulary word and renormalize
                let mut subst = vec![0.0; g.vocab().len()];
                let mut total = 0.0;
                for w in 0..g.vocab().len() {
                    let mut ids2 = ids.clone();
                    ids2[m - 1] = w;
                    let toks2 = tokens(g, &ids2);
                    let words2: Vec<&str> = toks2.iter().map(|s| s.as_str()).collect();
                    let ch =
                        chart::inside(g, &words2, None, &IoConfig::exact(ScaleMode::Raw)).unwrap();
                    subst[w] = ch.alpha(g.root(), 1, ids2.len());
                    total += subst[w];
                }
                let dist = mlm::one_mask_distribution(g, &words, m, None, None, ScaleMode::Raw);
                match dist {
                    Err(mlm::MlmError::UndefinedConditional { .. }) => {
                        if total != 0.0 {
                            failures.push(format!(
                                "grammar {gi} {ids:?} m={m}: undefined but brute total {total}"
                            ));
                        }
                    }
                    Err(e) => failures.push(format!("grammar {gi} {ids:?} m={m}: {e}")),
                    Ok(dist) => {
                        if total == 0.0 {
                            failures.push(format!(
                                "grammar {gi} {ids:?} m={m}: defined but brute total is 0"
                            ));
                            continue;
                        }
                        positions_checked += 1;
                        let sum: f64 = dist.probs.iter().sum();
                        if (sum - 1.0).abs() > 1e-12 {
                            failures.push(format!(
                                "grammar {gi} {ids:?} m={m}: distribution sums to {sum}"
                            ));
                        }
                        for w in 0..g.vocab().len() {
                            let want = subst[w] / total;
                            let err = rel_err(dist.probs[w], want);
                            worst = worst.max(err);
                            if err > REL_TOL_ORACLE {
                                failures.push(format!(
                                    "grammar {gi} {ids:?} m={m} w={w}: {} vs {want}",
                                    dist.probs[w]
                                ));
                            }
                        }
                    }
                }
            }
        }
    }
    finish(
        2,
        "1-mask conditionals vs vocabulary-substitution posterior",
        failures,
        format!("{positions_checked} positions, worst rel err {worst:.2e}"),
    );
}

#[test]
fn criterion_3_labelled_recall_oracle() {
    let pool = oracle_pool();
    let mut failures = Vec::new();
    let mut trees_checked = 0usize;
    for (gi, (g, sentences)) in pool.iter().enumerate() {
        for ids in sentences.iter().filter(|s| s.len() >= 2).take(10) {
            let toks = tokens(g, ids);
            let words: Vec<&str> = toks.iter().map(|s| s.as_str()).collect();
            let ch = chart::complete(g, &words, None, &IoConfig::exact(ScaleMode::Raw)).unwrap();
            if ch.sentence_value(g) == 0.0 {
                continue;
            }
            let marg = chart::marginals(g, &ch);
            let parse = parse_eval::labelled_recall(g, &words, &IoConfig::default()).unwrap();
            assert!(!parse.degenerate);
            // brute force over all binary span trees
            let l = ids.len();
            let mut best_value = f64::NEG_INFINITY;
            let mut second = f64::NEG_INFINITY;
            let mut best_spans: Vec<(usize, usize)> = Vec::new();
            for shape in shapes(1, l) {
                let spans = shape_spans(&shape);
                let value: f64 = spans.iter().map(|&(i, j)| marg.best_label(i, j).1).sum();
                if value > best_value {
                    second = best_value;
                    best_value = value;
                    best_spans = spans;
                } else if value > second {
                    second = value;
                }
            }
            trees_checked += 1;
            let scale = best_value.abs().max(1e-300);
            if (parse.score - best_value).abs() > 1e-12 * scale {
                failures.push(format!(
                    "grammar {gi} {ids:?}: value {} vs brute {best_value}",
                    parse.score
                ));
            }
            // tree equality whenever the maximizer is unique
            if best_value - second > 1e-9 * scale {
                let mut got: Vec<(usize, usize)> =
                    parse.tree.spans.iter().map(|s| (s.i, s.j)).collect();
                got.sort_unstable();
                let mut want = best_spans;
                want.sort_unstable();
                if got != want {
                    failures.push(format!(
                        "grammar {gi} {ids:?}: tree {got:?} vs brute argmax {want:?}"
                    ));
                }
            }
        }
    }
    finish(
        3,
        "Labelled-Recall vs brute-force argmax over span trees",
        failures,
        format!("{trees_checked} parses"),
    );
}

fn shape_spans(shape: &Shape) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut stack = vec![shape];
    while let Some(s) = stack.pop() {
        out.push(s.span());
        if let Shape::Node(_, _, l, r) = s {
            stack.push(l);
            stack.push(r);
        }
    }
    out
}

#[test]
fn criterion_4_transformer_equivalence() {
    let mut rng = rng(0xBEEF);
    let mut failures = Vec::new();
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for gi in 0..20 {
        // sizes up to |N| = 8, with the first grammar pinned at the maximum
        let (n_in, n_pre, vocab) = if gi == 0 {
            (4, 4, 3)
        } else {
            (
                rng.gen_range(1..=4),
                rng.gen_range(1..=4),
                rng.gen_range(2..=4),
            )
        };
        let g = random_grammar(&mut rng, n_in, n_pre, vocab, 2.0);
        // one sampled (derivable) sentence; for the pinned grammar force
        // length 8, the envelope maximum
        let words: Vec<String> = if gi == 0 {
            (0..8).map(|_| format!("w{}", rng.gen_range(0..vocab))).collect()
        } else {
            match sampler::sample_tree(&g, 1000 + gi as u64, 8) {
                Ok((w, _)) => w,
                Err(_) => (0..rng.gen_range(2..=6))
                    .map(|_| format!("w{}", rng.gen_range(0..vocab)))
                    .collect(),
            }
        };
        let words: Vec<&str> = words.iter().map(|s| s.as_str()).collect();
        let report = txsim::verify(&g, &words, &BuildOptions::default()).unwrap();
        checked += 1;
        for d in &report.deviations {
            worst = worst.max(d.max_rel);
        }
        if !report.pass {
            failures.push(format!(
                "grammar {gi} (|N|={}, len={}): {report:?}",
                g.n_symbols(),
                words.len()
            ));
        }
    }
    finish(
        4,
        "hard and relative constructions reproduce the chart",
        failures,
        format!("{checked} grammars, worst rel deviation {worst:.2e}"),
    );
}

#[test]
fn criterion_5_restriction_identity_and_monotonicity() {
    let mut rng = rng(0x5E57);
    let mut failures = Vec::new();
    let mut grammars = 0usize;
    for gi in 0..10 {
        let n_in = rng.gen_range(2..=4);
        let n_pre = rng.gen_range(2..=4);
        let vocab = rng.gen_range(2..=3);
        let g = random_grammar(&mut rng, n_in, n_pre, vocab, 2.0);
        grammars += 1;
        let mut sentences = Vec::new();
        for s in 0..4u64 {
            if let Ok((w, _)) = sampler::sample_tree(&g, 7000 + gi * 11 + s, 7) {
                sentences.push(w);
            }
        }
        // nested restriction chain: grow the kept sets one symbol at a time
        let full = RestrictionSpec::full(&g);
        let mut chain = vec![RestrictionSpec::new(&g, [g.root()], [g.n_in_terminals()]).unwrap()];
        let mut in_ids = vec![g.root()];
        let mut pre_ids = vec![g.n_in_terminals()];
        for a in g.in_terminal_ids().chain(g.pre_terminal_ids()) {
            if in_ids.contains(&a) || pre_ids.contains(&a) {
                continue;
            }
            if g.is_in_terminal(a) {
                in_ids.push(a);
            } else {
                pre_ids.push(a);
            }
            chain.push(RestrictionSpec::new(&g, in_ids.clone(), pre_ids.clone()).unwrap());
        }
        for toks in &sentences {
            let words: Vec<&str> = toks.iter().map(|s| s.as_str()).collect();
            let exact =
                chart::complete(&g, &words, None, &IoConfig::exact(ScaleMode::Raw)).unwrap();
            let full_r =
                approx::restricted_io(&g, &words, &full, None, ScaleMode::Raw).unwrap();
            let l = words.len();
            // (a) full-set restriction is bitwise identical
            for a in 0..g.n_symbols() {
                for i in 1..=l {
                    for j in i..=l {
                        if exact.alpha(a, i, j).to_bits() != full_r.alpha(a, i, j).to_bits()
                            || exact.beta(a, i, j).to_bits() != full_r.beta(a, i, j).to_bits()
                        {
                            failures.push(format!(
                                "grammar {gi} {toks:?}: full restriction differs at ({a},{i},{j})"
                            ));
                        }
                    }
                }
            }
            // (b) every entry is monotone nondecreasing along the chain
            let mut prev = approx::restricted_io(&g, &words, &chain[0], None, ScaleMode::Raw)
                .unwrap();
            for spec in &chain[1..] {
                let next = approx::restricted_io(&g, &words, spec, None, ScaleMode::Raw).unwrap();
                for a in 0..g.n_symbols() {
                    for i in 1..=l {
                        for j in i..=l {
                            let (pa, na) = (prev.alpha(a, i, j), next.alpha(a, i, j));
                            if pa > na * (1.0 + 1e-12) + 1e-300 {
                                failures.push(format!(
                                    "grammar {gi} {toks:?}: alpha({a},{i},{j}) shrank {pa} -> {na}"
                                ));
                            }
                            let (pb, nb) = (prev.beta(a, i, j), next.beta(a, i, j));
                            if pb > nb * (1.0 + 1e-12) + 1e-300 {
                                failures.push(format!(
                                    "grammar {gi} {toks:?}: beta({a},{i},{j}) shrank {pb} -> {nb}"
                                ));
                            }
                        }
                    }
                }
                prev = next;
            }
        }
    }
    finish(
        5,
        "full-set restriction bitwise; nested subsets monotone",
        failures,
        format!("{grammars} grammars"),
    );
}

#[test]
fn criterion_6_low_rank_exactness_and_spectral_accounting() {
    let mut rng = rng(0x10EA);
    let mut failures = Vec::new();

    // (a) full-rank bank reproduces restricted IO within 1e-10
    let g = random_grammar(&mut rng, 3, 3, 3, 2.0);
    let r = RestrictionSpec::full(&g);
    let (corpus, _) = sampler::sample_corpus(&g, 40, 11, 8, &Parallelism::Sequential).unwrap();
    let (bank, _) = approx::learn_transforms(
        &g,
        &corpus,
        &r,
        &RankSchedule::uniform(r.in_ids().len()),
        false,
        &Parallelism::Sequential,
    )
    .unwrap();
    for toks in corpus.iter().take(10) {
        let words: Vec<&str> = toks.iter().map(|s| s.as_str()).collect();
        let rest = approx::restricted_io(&g, &words, &r, None, ScaleMode::Raw).unwrap();
        let appr = approx::approx_io(&g, &words, &r, &bank, None, ScaleMode::Raw).unwrap();
        let l = words.len();
        for a in 0..g.n_symbols() {
            for i in 1..=l {
                for j in i..=l {
                    if (rest.alpha(a, i, j) - appr.alpha(a, i, j)).abs()
                        > 1e-10 * rest.alpha(a, i, j).abs().max(1.0)
                        || (rest.beta(a, i, j) - appr.beta(a, i, j)).abs()
                            > 1e-10 * rest.beta(a, i, j).abs().max(1.0)
                    {
                        failures.push(format!(
                            "full-rank bank deviates at ({a},{i},{j}) on {toks:?}"
                        ));
                    }
                }
            }
        }
    }

    // (b) vectors confined to a k-dimensional subspace are reproduced
    // exactly at rank k
    for &(m, k) in &[(6usize, 2usize), (8, 3), (5, 5)] {
        // random basis of rank k
        let basis: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let sample_vec = |rng: &mut rand_chacha::ChaCha12Rng| -> Vec<f64> {
            let mut v = vec![0.0; m];
            for b in &basis {
                let c: f64 = rng.gen_range(-1.0..1.0);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi += c * bi;
                }
            }
            v
        };
        let vectors: Vec<Vec<f64>> = (0..40).map(|_| sample_vec(&mut rng)).collect();
        let mut x = vec![0.0; m * m];
        for v in &vectors {
            for p in 0..m {
                for q in 0..m {
                    x[p * m + q] += v[p] * v[q];
                }
            }
        }
        let t = approx::transform_from_moment(&x, m, k);
        for v in &vectors {
            // w^T w v == v for vectors in the span
            let mut y = vec![0.0; t.k];
            for (row, yr) in y.iter_mut().enumerate() {
                *yr = (0..m).map(|c| t.w[row * m + c] * v[c]).sum();
            }
            let norm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            for c in 0..m {
                let rec: f64 = (0..t.k).map(|row| t.w[row * m + c] * y[row]).sum();
                if (rec - v[c]).abs() > 1e-10 * norm.max(1.0) {
                    failures.push(format!(
                        "rank-{k} subspace not reproduced (m={m}, coord {c}): {rec} vs {}",
                        v[c]
                    ));
                }
            }
        }
    }

    // (c) reconstruction error equals the discarded-eigenvalue ratio
    for &(m, k) in &[(8usize, 3usize), (10, 6), (12, 1)] {
        let gmat: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut x = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                x[i * m + j] = (0..m).map(|t| gmat[i * m + t] * gmat[j * m + t]).sum();
            }
        }
        let t = approx::transform_from_moment(&x, m, k);
        // dense brute-force reconstruction P X P with P = W^T W
        let mut p = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                p[i * m + j] = (0..t.k).map(|r| t.w[r * m + i] * t.w[r * m + j]).sum();
            }
        }
        let matmul = |a: &[f64], b: &[f64]| -> Vec<f64> {
            let mut c = vec![0.0; m * m];
            for i in 0..m {
                for j in 0..m {
                    c[i * m + j] = (0..m).map(|t| a[i * m + t] * b[t * m + j]).sum();
                }
            }
            c
        };
        let rec = matmul(&matmul(&p, &x), &p);
        let trace = |a: &[f64]| -> f64 { (0..m).map(|i| a[i * m + i]).sum() };
        let err = (trace(&x) - trace(&rec)) / trace(&x);
        let total: f64 = t.eigenvalues.iter().sum();
        let discarded: f64 = t.eigenvalues[k..].iter().sum();
        let want = discarded / total;
        if (err - want).abs() > 1e-8 {
            failures.push(format!(
                "spectral accounting (m={m}, k={k}): reconstruction error {err} vs discarded ratio {want}"
            ));
        }
    }

    finish(
        6,
        "full-rank identity, subspace exactness, eigenvalue accounting",
        failures,
        "3 subspace cases, 3 spectra, 10 sentences".to_string(),
    );
}

#[test]
fn criterion_7_degradation_pipeline() {
    let mut rng = rng(0xD15C);
    let g = random_grammar(&mut rng, 12, 12, 20, 2.5);
    let par = Parallelism::Sequential;
    let (corpus, gold) = sampler::sample_corpus(&g, 2000, 4242, 10, &par).unwrap();
    let policy = EvalPolicy::default();

    let freq = approx::span_frequencies(&g, &gold);
    let k_in = g.n_in_terminals() / 2;
    let restriction = approx::select_subsets(&g, &freq, k_in, g.n_pre_terminals()).unwrap();
    let half_rank = RankSchedule::uniform(k_in.div_ceil(2));
    let (bank, _) =
        approx::learn_transforms(&g, &corpus, &restriction, &half_rank, false, &par).unwrap();

    let configs = vec![
        ApproxConfig {
            label: "exact".into(),
            restriction: None,
            bank: None,
        },
        ApproxConfig {
            label: format!("restricted k_in={k_in}"),
            restriction: Some(restriction.clone()),
            bank: None,
        },
        ApproxConfig {
            label: format!("restricted k_in={k_in} rank={}", k_in.div_ceil(2)),
            restriction: Some(restriction.clone()),
            bank: Some(bank.clone()),
        },
    ];

    let run = || {
        approx::degradation_report(&g, &corpus, &gold, &configs, &policy, ScaleMode::Raw, &par)
            .unwrap()
    };
    let rows = run();
    let mut failures = Vec::new();

    // (a) the exact row reproduces a directly computed self-parse F1 bitwise
    let mut pred = Vec::new();
    for toks in &corpus {
        let words: Vec<&str> = toks.iter().map(|s| s.as_str()).collect();
        pred.push(
            parse_eval::labelled_recall(&g, &words, &IoConfig::default())
                .unwrap()
                .tree,
        );
    }
    let direct_sent = parse_eval::f1_trees(&gold, &pred, &policy, F1Mode::Sentence);
    let direct_corp = parse_eval::f1_trees(&gold, &pred, &policy, F1Mode::Corpus);
    if rows[0].sent_f1.to_bits() != direct_sent.f1.to_bits()
        || rows[0].corpus_f1.to_bits() != direct_corp.f1.to_bits()
    {
        failures.push(format!(
            "exact row F1 ({}, {}) differs from direct computation ({}, {})",
            rows[0].corpus_f1, rows[0].sent_f1, direct_corp.f1, direct_sent.f1
        ));
    }

    // (b) restricted configurations never beat the exact perplexity, and
    // every column is populated
    for row in &rows[1..] {
        if row.ppl < rows[0].ppl || row.ppl.is_nan() {
            failures.push(format!(
                "config `{}` ppl {} below exact {}",
                row.config, row.ppl, rows[0].ppl
            ));
        }
    }
    for row in &rows {
        if !(row.ppl.is_finite() && row.corpus_f1.is_finite() && row.sent_f1.is_finite()) {
            failures.push(format!("config `{}` has non-finite columns", row.config));
        }
        if row.tokens_scored == 0 {
            failures.push(format!("config `{}` scored no tokens", row.config));
        }
    }

    // (c) byte-stable across reruns in the sequential profile
    let again = run();
    let ser = serde_json::to_string(&rows).unwrap();
    let ser2 = serde_json::to_string(&again).unwrap();
    if ser != ser2 {
        failures.push("degradation report not byte-stable across reruns".into());
    }

    finish(
        7,
        "degradation table: exact self-parse, ppl ordering, byte stability",
        failures,
        format!(
            "2000 sentences; exact ppl {:.3}, restricted {:.3}, low-rank {:.3}; sent F1 {:.4}/{:.4}/{:.4}",
            rows[0].ppl, rows[1].ppl, rows[2].ppl, rows[0].sent_f1, rows[1].sent_f1, rows[2].sent_f1
        ),
    );
}

#[test]
fn criterion_8_sampler_statistics() {
    let g = pcfg_io::grammar::load_grammar(
        "root ROOT\nnonterm ROOT in\nnonterm X in\nnonterm T pre\nrule ROOT -> X T 0.6\nrule ROOT -> T T 0.4\nrule X -> T T 1.0\nlex T -> x 0.5\nlex T -> y 0.5\n",
        pcfg_io::grammar::LoadOptions::default(),
    )
    .unwrap();
    let par = Parallelism::Sequential;
    let (corpus, _) = sampler::sample_corpus(&g, 100_000, 2024, 8, &par).unwrap();
    let len3 = corpus.iter().filter(|s| s.len() == 3).count() as f64 / corpus.len() as f64;
    let mut failures = Vec::new();
    if (len3 - 0.6).abs() > 0.01 {
        failures.push(format!("P(len=3) = {len3}, expected 0.6 +- 0.01"));
    }
    // byte-exact determinism
    let (corpus2, trees2) = sampler::sample_corpus(&g, 100_000, 2024, 8, &par).unwrap();
    let (_, trees) = sampler::sample_corpus(&g, 100_000, 2024, 8, &par).unwrap();
    if corpus != corpus2 {
        failures.push("corpus not byte-identical across runs".into());
    }
    if trees
        .iter()
        .zip(&trees2)
        .any(|(a, b)| a.spans != b.spans || a.len != b.len)
    {
        failures.push("trees not identical across runs".into());
    }
    finish(
        8,
        "empirical length distribution and seed determinism",
        failures,
        format!("100000 samples, P(len=3) = {len3:.4}"),
    );
}

#[test]
fn criterion_9_attended_distance() {
    let mut rng = rng(0xADD1);
    let g = random_grammar(&mut rng, 3, 3, 3, 2.0);
    let l = 6usize;
    let model = txsim::build_relative_model(&g, l, &BuildOptions::default()).unwrap();
    let mut corpus: Vec<Vec<String>> = Vec::new();
    for s in 0..10u64 {
        if let Ok((w, _)) = sampler::sample_tree(&g, 900 + s, l) {
            corpus.push(w);
        }
    }
    assert!(corpus.len() >= 3, "sampler starved the test corpus");
    let mut failures = Vec::new();

    // window: inside-layer-l heads place zero mass outside [i-l, i-1]
    for toks in &corpus {
        let words: Vec<&str> = toks.iter().map(|s| s.as_str()).collect();
        let traj = txsim::forward_with_attention(&model, &g, &words).unwrap();
        let attn = traj.attentions.as_ref().unwrap();
        let n_pos = traj.n_positions;
        for (li, layer_attn) in attn.iter().enumerate().take(l - 1) {
            let off = li + 1;
            for (hi, a) in layer_attn.iter().enumerate() {
                for i in 1..=n_pos {
                    for j in 1..=n_pos {
                        let in_window = j < i && i - j <= off;
                        if !in_window && a[(i - 1) * n_pos + (j - 1)] != 0.0 {
                            failures.push(format!(
                                "layer {off} head {hi}: mass at (i={i}, j={j}) outside window"
                            ));
                        }
                    }
                }
            }
        }
    }

    // AD of every active inside-layer head lies in [1, layer]
    let ads = txsim::averaged_attended_distance(&model, &g, &corpus).unwrap();
    for h in &ads {
        if h.layer < l && h.active_sentences > 0 {
            let off = h.layer as f64;
            if h.ad < 1.0 - 1e-9 || h.ad > off + 1e-9 {
                failures.push(format!("layer {} head {}: AD {}", h.layer, h.head, h.ad));
            }
        }
        if h.active_sentences == 0 && h.ad != 0.0 {
            failures.push(format!(
                "inactive head layer {} head {} reports AD {}",
                h.layer, h.head, h.ad
            ));
        }
    }
    let active = ads.iter().filter(|h| h.active_sentences > 0).count();
    finish(
        9,
        "attention windows and averaged attended distance bounds",
        failures,
        format!("{} sentences, {active} active heads", corpus.len()),
    );
}
