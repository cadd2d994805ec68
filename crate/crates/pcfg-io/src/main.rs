//! Batch command-line surface over the library: corpus generation, parsing,
//! F1 scoring, 1-mask perplexity, frequency counting, transform learning,
//! construction verification, and attention-distance measurement.
//!
//! Exit codes: 0 success, 1 input error (single-line diagnostic on stderr),
//! 2 internal invariant failure.
//!
//! Artifacts are written atomically (temp file + rename). Every JSON
//! artifact embeds the effective config and a format-version field; the
//! line-oriented corpus/tree files get a `.meta.json` sidecar carrying the
//! same.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use pcfg_io::approx::{self, FrequencyTable, RankSchedule, RestrictionSpec, TransformBank};
use pcfg_io::chart::{IoConfig, ScaleMode};
use pcfg_io::grammar::{self, Grammar, LoadOptions};
use pcfg_io::mlm;
use pcfg_io::parallel::Parallelism;
use pcfg_io::parse_eval::{self, EvalPolicy, F1Mode};
use pcfg_io::sampler;
use pcfg_io::tree;
use pcfg_io::txsim;
use pcfg_io::FORMAT_VERSION;

#[derive(Parser)]
#[command(name = "pcfg-io", about = "PCFG Inside-Outside toolkit", version)]
struct Cli {
    /// Worker threads (default: available parallelism; 1 = reproducible
    /// sequential profile)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON file with default values for flags (precedence: flags > config >
    /// built-in defaults)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a corpus and its gold trees from a grammar
    Gen(GenArgs),
    /// Labelled-Recall parse a corpus, optionally under an approximation
    Parse(ParseArgs),
    /// Unlabelled span F1 between two tree files
    EvalF1(EvalArgs),
    /// 1-mask perplexity of a corpus, optionally under an approximation
    MlmPpl(PplArgs),
    /// Span-head frequency table from gold trees
    Freq(FreqArgs),
    /// Learn per-span-length low-rank transforms
    LearnW(LearnArgs),
    /// Build both attention constructions and verify them against the chart
    SimVerify(VerifyArgs),
    /// Averaged attended distance per head over a corpus
    AttendDist(AttendArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    grammar: PathBuf,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_len: Option<usize>,
    /// Corpus output path (one sentence per line)
    #[arg(long)]
    out: PathBuf,
    /// Gold tree output path (bracketed, one per line)
    #[arg(long)]
    trees: PathBuf,
    #[arg(long)]
    renormalize: bool,
}

#[derive(Args)]
struct ParseArgs {
    #[arg(long)]
    grammar: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    scale_mode: Option<String>,
    /// Frequency table for building a restriction
    #[arg(long)]
    freq: Option<PathBuf>,
    #[arg(long)]
    k_in: Option<usize>,
    #[arg(long)]
    k_pre: Option<usize>,
    /// Transform bank (requires a restriction)
    #[arg(long)]
    bank: Option<PathBuf>,
    #[arg(long)]
    renormalize: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    grammar: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// sentence | corpus
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    keep_singletons: bool,
    #[arg(long)]
    keep_whole_sentence: bool,
    #[arg(long)]
    empty_empty: Option<f64>,
    /// Report path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    renormalize: bool,
}

#[derive(Args)]
struct PplArgs {
    #[arg(long)]
    grammar: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    scale_mode: Option<String>,
    #[arg(long)]
    freq: Option<PathBuf>,
    #[arg(long)]
    k_in: Option<usize>,
    #[arg(long)]
    k_pre: Option<usize>,
    #[arg(long)]
    bank: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    renormalize: bool,
}

#[derive(Args)]
struct FreqArgs {
    #[arg(long)]
    grammar: PathBuf,
    /// Gold tree file (bracketed)
    #[arg(long)]
    trees: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    renormalize: bool,
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long)]
    grammar: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    freq: PathBuf,
    #[arg(long)]
    k_in: Option<usize>,
    #[arg(long)]
    k_pre: Option<usize>,
    /// Default rank k for every span length
    #[arg(long)]
    rank: Option<usize>,
    /// Per-length overrides, e.g. `1=4,2=6` (span offset = rank)
    #[arg(long)]
    ranks: Option<String>,
    /// Learn from exact rather than restricted marginals
    #[arg(long)]
    mu_from_exact: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    renormalize: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    grammar: PathBuf,
    /// Space-separated sentence
    #[arg(long)]
    sentence: String,
    /// hard | relative | both: which model's deviations to report
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also dump the oracle chart tables into the report
    #[arg(long)]
    dump_charts: bool,
    /// Also dump per-layer embedding matrices of both forward passes
    #[arg(long)]
    dump_trajectory: bool,
    #[arg(long)]
    memory_budget: Option<u64>,
    #[arg(long)]
    renormalize: bool,
}

#[derive(Args)]
struct AttendArgs {
    #[arg(long)]
    grammar: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// relative | hard
    #[arg(long)]
    mode: Option<String>,
    /// Model capacity; defaults to the longest corpus sentence
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    memory_budget: Option<u64>,
    #[arg(long)]
    renormalize: bool,
}

enum CliError {
    Input(String),
    Internal(String),
}

impl CliError {
    fn input(e: impl Display) -> Self {
        CliError::Input(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}

// JSON override bundle: flat object keyed by flag name.
struct Overrides(Value);

impl Overrides {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Overrides(Value::Null)),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Input(format!("config {}: {e}", p.display())))?;
                let v = serde_json::from_str(&text)
                    .map_err(|e| CliError::Input(format!("config {}: {e}", p.display())))?;
                Ok(Overrides(v))
            }
        }
    }

    fn u64(&self, key: &str) -> Option<u64> {
        self.0.get(key).and_then(Value::as_u64)
    }

    fn usize(&self, key: &str) -> Option<usize> {
        self.u64(key).map(|v| v as usize)
    }

    fn f64(&self, key: &str) -> Option<f64> {
        self.0.get(key).and_then(Value::as_f64)
    }

    fn str(&self, key: &str) -> Option<String> {
        self.0.get(key).and_then(Value::as_str).map(String::from)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides::load(cli.config.as_deref())?;
    let threads = cli
        .threads
        .or(overrides.usize("threads"))
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        });
    let par = Parallelism::with_threads(threads);
    match cli.cmd {
        Cmd::Gen(a) => cmd_gen(a, &overrides, threads, &par),
        Cmd::Parse(a) => cmd_parse(a, &overrides, threads, &par),
        Cmd::EvalF1(a) => cmd_eval_f1(a, &overrides),
        Cmd::MlmPpl(a) => cmd_mlm_ppl(a, &overrides, threads, &par),
        Cmd::Freq(a) => cmd_freq(a),
        Cmd::LearnW(a) => cmd_learn_w(a, &overrides, threads, &par),
        Cmd::SimVerify(a) => cmd_sim_verify(a, &overrides),
        Cmd::AttendDist(a) => cmd_attend_dist(a, &overrides),
    }
}

fn load_grammar_file(path: &Path, renormalize: bool) -> Result<Grammar, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("grammar {}: {e}", path.display())))?;
    grammar::load_grammar(&text, LoadOptions { renormalize })
        .map_err(|e| CliError::Input(format!("grammar {}: {e}", path.display())))
}

fn load_corpus(path: &Path) -> Result<Vec<Vec<String>>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("corpus {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(String::from).collect())
        .collect())
}

fn load_trees(g: &Grammar, path: &Path) -> Result<Vec<tree::ParseTree>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("trees {}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            tree::parse_tree(g, l)
                .map(|(t, _)| t)
                .map_err(|e| CliError::Input(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn atomic_write(path: &Path, contents: &str) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_os_string();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)
        .map_err(|e| CliError::Input(format!("write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path)
        .map_err(|e| CliError::Input(format!("rename to {}: {e}", path.display())))
}

fn write_json(path: Option<&Path>, value: &Value) -> Result<(), CliError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    match path {
        Some(p) => atomic_write(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn artifact(config: Value, body: Value) -> Value {
    let mut obj = serde_json::Map::new();
    obj.insert("format_version".into(), json!(FORMAT_VERSION));
    obj.insert("config".into(), config);
    if let Value::Object(m) = body {
        for (k, v) in m {
            obj.insert(k, v);
        }
    }
    Value::Object(obj)
}

fn scale_mode_of(flag: Option<String>, overrides: &Overrides) -> Result<ScaleMode, CliError> {
    match flag
        .or(overrides.str("scale_mode"))
        .unwrap_or_else(|| "raw".into())
        .as_str()
    {
        "raw" => Ok(ScaleMode::Raw),
        "scaled" => Ok(ScaleMode::Scaled),
        other => Err(CliError::Input(format!("unknown scale mode `{other}`"))),
    }
}

// Builds the (restriction, bank) pair shared by parse and mlm-ppl.
fn approx_setup(
    g: &Grammar,
    freq: Option<&Path>,
    k_in: Option<usize>,
    k_pre: Option<usize>,
    bank: Option<&Path>,
) -> Result<(Option<RestrictionSpec>, Option<TransformBank>), CliError> {
    let restriction = match (freq, k_in, k_pre) {
        (None, None, None) => None,
        (Some(fp), Some(ki), Some(kp)) => {
            let v: Value = serde_json::from_str(
                &fs::read_to_string(fp)
                    .map_err(|e| CliError::Input(format!("freq {}: {e}", fp.display())))?,
            )
            .map_err(|e| CliError::Input(format!("freq {}: {e}", fp.display())))?;
            let counts = v.get("counts").unwrap_or(&v);
            let table = FrequencyTable::from_json(g, counts).map_err(CliError::input)?;
            let spec = approx::select_subsets(g, &table, ki, kp).map_err(CliError::input)?;
            if spec.clamped {
                eprintln!("warning: subset sizes clamped to the inventory");
            }
            Some(spec)
        }
        _ => {
            return Err(CliError::Input(
                "--freq, --k-in, and --k-pre must be given together".into(),
            ))
        }
    };
    let bank = match bank {
        None => None,
        Some(bp) => {
            if restriction.is_none() {
                return Err(CliError::Input("--bank requires a restriction".into()));
            }
            let v: Value = serde_json::from_str(
                &fs::read_to_string(bp)
                    .map_err(|e| CliError::Input(format!("bank {}: {e}", bp.display())))?,
            )
            .map_err(|e| CliError::Input(format!("bank {}: {e}", bp.display())))?;
            let body = v.get("bank").unwrap_or(&v);
            Some(TransformBank::from_json(g, body).map_err(CliError::input)?)
        }
    };
    Ok((restriction, bank))
}

fn progress(counter: &AtomicUsize) {
    let done = counter.fetch_add(1, Ordering::Relaxed) + 1;
    if done.is_multiple_of(10_000) {
        eprintln!("processed {done} sentences");
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn cmd_gen(
    a: GenArgs,
    overrides: &Overrides,
    threads: usize,
    par: &Parallelism,
) -> Result<(), CliError> {
    let count = a
        .count
        .or(overrides.usize("count"))
        .ok_or_else(|| CliError::Input("--count is required".into()))?;
    let seed = a.seed.or(overrides.u64("seed")).unwrap_or(0);
    let max_len = a
        .max_len
        .or(overrides.usize("max_len"))
        .unwrap_or(sampler::DEFAULT_MAX_LEN);
    let g = load_grammar_file(&a.grammar, a.renormalize)?;
    let (corpus, trees) =
        sampler::sample_corpus(&g, count, seed, max_len, par).map_err(CliError::input)?;

    let mut corpus_text = String::new();
    let mut tree_text = String::new();
    let counter = AtomicUsize::new(0);
    for (words, tree) in corpus.iter().zip(&trees) {
        corpus_text.push_str(&words.join(" "));
        corpus_text.push('\n');
        let refs: Vec<&str> = words.iter().map(|w| w.as_str()).collect();
        tree_text.push_str(&tree::print_tree(&g, tree, &refs));
        tree_text.push('\n');
        progress(&counter);
    }
    atomic_write(&a.out, &corpus_text)?;
    atomic_write(&a.trees, &tree_text)?;
    let config = json!({
        "subcommand": "gen",
        "grammar": a.grammar,
        "count": count,
        "seed": seed,
        "max_len": max_len,
        "threads": threads,
        "rng": "ChaCha12, per-sentence streams",
    });
    let meta = artifact(config, json!({ "sentences": corpus.len() }));
    write_json(Some(&sidecar(&a.out)), &meta)?;
    write_json(Some(&sidecar(&a.trees)), &meta)
}

fn cmd_parse(
    a: ParseArgs,
    overrides: &Overrides,
    threads: usize,
    par: &Parallelism,
) -> Result<(), CliError> {
    let g = load_grammar_file(&a.grammar, a.renormalize)?;
    let scale = scale_mode_of(a.scale_mode.clone(), overrides)?;
    let k_in = a.k_in.or(overrides.usize("k_in"));
    let k_pre = a.k_pre.or(overrides.usize("k_pre"));
    let (restriction, bank) = approx_setup(&g, a.freq.as_deref(), k_in, k_pre, a.bank.as_deref())?;
    let corpus = load_corpus(&a.corpus)?;

    let counter = AtomicUsize::new(0);
    let io = IoConfig {
        restriction: restriction.as_ref(),
        transforms: bank.as_ref(),
        scale_mode: scale,
    };
    let parses = par.map_indexed(corpus.len(), |i| {
        let words: Vec<&str> = corpus[i].iter().map(|w| w.as_str()).collect();
        let r = parse_eval::labelled_recall(&g, &words, &io);
        progress(&counter);
        r
    });
    let mut out = String::new();
    let mut fallbacks = 0usize;
    for (words, parse) in corpus.iter().zip(parses) {
        let parse = parse.map_err(CliError::input)?;
        if parse.degenerate {
            fallbacks += 1;
        }
        let refs: Vec<&str> = words.iter().map(|w| w.as_str()).collect();
        out.push_str(&tree::print_tree(&g, &parse.tree, &refs));
        out.push('\n');
    }
    atomic_write(&a.out, &out)?;
    let config = json!({
        "subcommand": "parse",
        "grammar": a.grammar,
        "corpus": a.corpus,
        "scale_mode": scale,
        "k_in": k_in,
        "k_pre": k_pre,
        "bank": a.bank,
        "threads": threads,
    });
    write_json(
        Some(&sidecar(&a.out)),
        &artifact(
            config,
            json!({ "sentences": corpus.len(), "fallbacks": fallbacks }),
        ),
    )
}

fn cmd_eval_f1(a: EvalArgs, overrides: &Overrides) -> Result<(), CliError> {
    let g = load_grammar_file(&a.grammar, a.renormalize)?;
    let gold = load_trees(&g, &a.gold)?;
    let pred = load_trees(&g, &a.pred)?;
    let mode = match a
        .mode
        .clone()
        .or(overrides.str("mode"))
        .unwrap_or_else(|| "sentence".into())
        .as_str()
    {
        "sentence" => F1Mode::Sentence,
        "corpus" => F1Mode::Corpus,
        other => return Err(CliError::Input(format!("unknown F1 mode `{other}`"))),
    };
    let policy = EvalPolicy {
        exclude_singletons: !a.keep_singletons,
        exclude_whole_sentence: !a.keep_whole_sentence,
        empty_empty_f1: a.empty_empty.or(overrides.f64("empty_empty")).unwrap_or(1.0),
    };
    let gold_spans: Vec<_> = gold
        .iter()
        .map(|t| parse_eval::tree_eval_spans(t, &policy))
        .collect();
    let pred_spans: Vec<_> = pred
        .iter()
        .map(|t| parse_eval::tree_eval_spans(t, &policy))
        .collect();
    let report = match mode {
        F1Mode::Sentence => parse_eval::f1_sentence(&gold_spans, &pred_spans, &policy),
        F1Mode::Corpus => parse_eval::f1_corpus(&gold_spans, &pred_spans, &policy),
    }
    .map_err(CliError::input)?;
    let config = json!({
        "subcommand": "eval-f1",
        "grammar": a.grammar,
        "gold": a.gold,
        "pred": a.pred,
        "mode": mode,
        "policy": policy,
    });
    let body = serde_json::to_value(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    write_json(a.out.as_deref(), &artifact(config, body))
}

fn cmd_mlm_ppl(
    a: PplArgs,
    overrides: &Overrides,
    threads: usize,
    par: &Parallelism,
) -> Result<(), CliError> {
    let g = load_grammar_file(&a.grammar, a.renormalize)?;
    let scale = scale_mode_of(a.scale_mode.clone(), overrides)?;
    let k_in = a.k_in.or(overrides.usize("k_in"));
    let k_pre = a.k_pre.or(overrides.usize("k_pre"));
    let (restriction, bank) = approx_setup(&g, a.freq.as_deref(), k_in, k_pre, a.bank.as_deref())?;
    let corpus = load_corpus(&a.corpus)?;
    let report = mlm::one_mask_perplexity(
        &g,
        &corpus,
        restriction.as_ref(),
        bank.as_ref(),
        scale,
        par,
    )
    .map_err(CliError::input)?;
    let config = json!({
        "subcommand": "mlm-ppl",
        "grammar": a.grammar,
        "corpus": a.corpus,
        "scale_mode": scale,
        "restriction_sizes": restriction.as_ref().map(|r| (r.in_ids().len(), r.pre_ids().len())),
        "transform_ranks": bank.as_ref().map(|b| {
            b.offsets().map(|o| (o, b.get(o).unwrap().k)).collect::<Vec<_>>()
        }),
        "threads": threads,
    });
    let body = serde_json::to_value(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    write_json(a.out.as_deref(), &artifact(config, body))
}

fn cmd_freq(a: FreqArgs) -> Result<(), CliError> {
    let g = load_grammar_file(&a.grammar, a.renormalize)?;
    let trees = load_trees(&g, &a.trees)?;
    let table = approx::span_frequencies(&g, &trees);
    let config = json!({
        "subcommand": "freq",
        "grammar": a.grammar,
        "trees": a.trees,
    });
    write_json(
        Some(&a.out),
        &artifact(config, json!({ "counts": table.to_json(&g) })),
    )
}

fn cmd_learn_w(
    a: LearnArgs,
    overrides: &Overrides,
    threads: usize,
    par: &Parallelism,
) -> Result<(), CliError> {
    let g = load_grammar_file(&a.grammar, a.renormalize)?;
    let corpus = load_corpus(&a.corpus)?;
    let k_in = a
        .k_in
        .or(overrides.usize("k_in"))
        .ok_or_else(|| CliError::Input("--k-in is required".into()))?;
    let k_pre = a
        .k_pre
        .or(overrides.usize("k_pre"))
        .ok_or_else(|| CliError::Input("--k-pre is required".into()))?;
    let (restriction, _) = approx_setup(&g, Some(&a.freq), Some(k_in), Some(k_pre), None)?;
    let restriction = restriction.expect("restriction built");
    let rank = a
        .rank
        .or(overrides.usize("rank"))
        .ok_or_else(|| CliError::Input("--rank is required".into()))?;
    let mut schedule = RankSchedule::uniform(rank);
    let ranks_spec = a.ranks.clone().or(overrides.str("ranks"));
    if let Some(spec) = ranks_spec.as_deref() {
        for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
            let (off, k) = part
                .split_once('=')
                .ok_or_else(|| CliError::Input(format!("bad --ranks entry `{part}`")))?;
            let off: usize = off
                .trim()
                .parse()
                .map_err(|_| CliError::Input(format!("bad offset in `{part}`")))?;
            let k: usize = k
                .trim()
                .parse()
                .map_err(|_| CliError::Input(format!("bad rank in `{part}`")))?;
            schedule.per_offset.insert(off, k);
        }
    }
    let (bank, stats) =
        approx::learn_transforms(&g, &corpus, &restriction, &schedule, a.mu_from_exact, par)
            .map_err(CliError::input)?;
    let stats_v = serde_json::to_value(&stats).map_err(|e| CliError::Internal(e.to_string()))?;
    let config = json!({
        "subcommand": "learn-w",
        "grammar": a.grammar,
        "corpus": a.corpus,
        "freq": a.freq,
        "k_in": k_in,
        "k_pre": k_pre,
        "rank": rank,
        "ranks": ranks_spec,
        "mu_from_exact": a.mu_from_exact,
        "threads": threads,
    });
    write_json(
        Some(&a.out),
        &artifact(config, json!({ "bank": bank.to_json(&g), "stats": stats_v })),
    )
}

fn cmd_sim_verify(a: VerifyArgs, overrides: &Overrides) -> Result<(), CliError> {
    let g = load_grammar_file(&a.grammar, a.renormalize)?;
    let words: Vec<&str> = a.sentence.split_whitespace().collect();
    if words.is_empty() {
        return Err(CliError::Input("empty sentence".into()));
    }
    let mode = a
        .mode
        .clone()
        .or(overrides.str("mode"))
        .unwrap_or_else(|| "both".into());
    if !["both", "hard", "relative"].contains(&mode.as_str()) {
        return Err(CliError::Input(format!("unknown mode `{mode}`")));
    }
    let opts = txsim::BuildOptions {
        memory_budget: a
            .memory_budget
            .or(overrides.u64("memory_budget"))
            .unwrap_or(txsim::DEFAULT_MEMORY_BUDGET),
    };
    let report = txsim::verify(&g, &words, &opts).map_err(CliError::input)?;
    let mut body = serde_json::to_value(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    if mode != "both" {
        if let Some(devs) = body.get_mut("deviations").and_then(Value::as_array_mut) {
            devs.retain(|d| d.get("model").and_then(Value::as_str) == Some(mode.as_str()));
        }
    }
    if a.dump_charts {
        let chart = pcfg_io::chart::complete(&g, &words, None, &IoConfig::exact(ScaleMode::Raw))
            .map_err(CliError::input)?;
        body.as_object_mut()
            .expect("report is an object")
            .insert("oracle_chart".into(), chart.to_json());
    }
    if a.dump_trajectory {
        let mut dump = serde_json::Map::new();
        for (name, model) in [
            (
                "hard",
                txsim::build_hard_model(&g, words.len(), &opts).map_err(CliError::input)?,
            ),
            (
                "relative",
                txsim::build_relative_model(&g, words.len(), &opts).map_err(CliError::input)?,
            ),
        ] {
            if mode != "both" && mode != name {
                continue;
            }
            let traj = txsim::forward(&model, &g, &words).map_err(CliError::input)?;
            let d = model.d();
            let layers: Vec<Vec<Vec<f64>>> = traj
                .states
                .iter()
                .map(|state| state.chunks(d).map(|row| row.to_vec()).collect())
                .collect();
            dump.insert(name.into(), json!({ "d": d, "states": layers }));
        }
        body.as_object_mut()
            .expect("report is an object")
            .insert("trajectories".into(), Value::Object(dump));
    }
    let config = json!({
        "subcommand": "sim-verify",
        "grammar": a.grammar,
        "sentence": a.sentence,
        "mode": mode,
        "memory_budget": opts.memory_budget,
    });
    let out = artifact(config, body);
    write_json(a.out.as_deref(), &out)?;
    if !report.pass {
        return Err(CliError::Internal(
            "verification failed: constructed models deviate from the chart".into(),
        ));
    }
    Ok(())
}

fn cmd_attend_dist(a: AttendArgs, overrides: &Overrides) -> Result<(), CliError> {
    let g = load_grammar_file(&a.grammar, a.renormalize)?;
    let corpus = load_corpus(&a.corpus)?;
    let longest = corpus.iter().map(|s| s.len()).max().unwrap_or(0);
    if longest == 0 {
        return Err(CliError::Input("corpus is empty".into()));
    }
    let max_len = a.max_len.or(overrides.usize("max_len")).unwrap_or(longest);
    let mode = a
        .mode
        .clone()
        .or(overrides.str("mode"))
        .unwrap_or_else(|| "relative".into());
    let opts = txsim::BuildOptions {
        memory_budget: a
            .memory_budget
            .or(overrides.u64("memory_budget"))
            .unwrap_or(txsim::DEFAULT_MEMORY_BUDGET),
    };
    let model = match mode.as_str() {
        "relative" => txsim::build_relative_model(&g, max_len, &opts),
        "hard" => txsim::build_hard_model(&g, max_len, &opts),
        other => return Err(CliError::Input(format!("unknown mode `{other}`"))),
    }
    .map_err(CliError::input)?;
    let usable: Vec<Vec<String>> = corpus
        .iter()
        .filter(|s| s.len() <= max_len)
        .cloned()
        .collect();
    let skipped = corpus.len() - usable.len();
    let heads = txsim::averaged_attended_distance(&model, &g, &usable).map_err(CliError::input)?;
    let heads_v = serde_json::to_value(&heads).map_err(|e| CliError::Internal(e.to_string()))?;
    let config = json!({
        "subcommand": "attend-dist",
        "grammar": a.grammar,
        "corpus": a.corpus,
        "mode": mode,
        "max_len": max_len,
    });
    let body = json!({
        "heads": heads_v,
        "sentences_used": usable.len(),
        "sentences_skipped": skipped,
    });
    write_json(a.out.as_deref(), &artifact(config, body))
}
