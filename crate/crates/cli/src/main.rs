//! Command-line surface: dataset generation, vocabulary building, training
//! for both model variants, and the inference commands (embedding, pair
//! evaluation, grouping, verification, classification).
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numeric abort.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use msia_core::batch::{grouped_to_groups, pairs_to_groups};
use msia_core::checkpoint::{load_checkpoint, save_checkpoint, Model};
use msia_core::data::{load_grouped_csv, load_quora_tsv, split_quora, PairRecord};
use msia_core::error::Error;
use msia_core::eval::{classify, group_and_classify, group_by_threshold, verify_group};
use msia_core::rng::SeededRng;
use msia_core::synth::{gen_grouped_records, gen_pair_records, write_grouped_csv, write_pairs_tsv, SynthConfig};
use msia_core::text::Vocabulary;
use msia_core::train::{compare_step_times, train_multisiam, train_smcd, EpochMetrics, TrainConfig};

#[derive(Parser)]
#[command(
    name = "msia",
    version,
    about = "Group-batched siamese text embeddings: train, evaluate, group, classify",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a token vocabulary from a dataset and write it as JSON.
    BuildVocab(BuildVocabArgs),
    /// Generate the deterministic synthetic corpora (grouped CSV, pair TSV).
    GenSynthetic(GenSyntheticArgs),
    /// Train the grouped metric model on duplicate question pairs.
    TrainMultisiam(TrainMultisiamArgs),
    /// Train the dual-head categorize-and-group model on a grouped CSV.
    TrainSmcd(TrainSmcdArgs),
    /// Report duplicate-pair accuracy of a checkpoint on a labeled TSV.
    EvalPairs(EvalPairsArgs),
    /// Embed texts (one per line) with a checkpoint.
    Embed(EmbedArgs),
    /// Group texts by embedding similarity threshold.
    Group(GroupArgs),
    /// Check whether a set of texts all describe the same thing.
    VerifyGroup(VerifyGroupArgs),
    /// Predict a category per text (dual-head checkpoints only).
    Classify(ClassifyArgs),
    /// Group texts and attach a category to every input in one pass.
    GroupAndClassify(GroupAndClassifyArgs),
}

#[derive(Args)]
struct BuildVocabArgs {
    /// Source dataset path.
    #[arg(long)]
    data: PathBuf,
    /// Dataset layout: "quora" (pair TSV), "grouped" (CSV), or "lines".
    #[arg(long, default_value = "lines")]
    format: String,
    /// Keep tokens appearing at least this many times.
    #[arg(long, default_value_t = 2)]
    min_freq: usize,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenSyntheticArgs {
    /// Grouped CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 13)]
    categories: usize,
    #[arg(long, default_value_t = 201)]
    groups: usize,
    #[arg(long, default_value_t = 2)]
    min_texts: usize,
    #[arg(long, default_value_t = 4)]
    max_texts: usize,
    /// Pair TSV output path; enables pair generation.
    #[arg(long)]
    pairs_out: Option<PathBuf>,
    /// Duplicate pairs to generate into --pairs-out.
    #[arg(long, default_value_t = 1000)]
    duplicates: usize,
    /// Non-duplicate pairs to generate into --pairs-out.
    #[arg(long, default_value_t = 1000)]
    non_duplicates: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainMultisiamArgs {
    /// Training pair TSV; only duplicate rows are trained on.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch JSONL metrics path.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Labeled pair TSV evaluated at --tau after each epoch.
    #[arg(long)]
    val_data: Option<PathBuf>,
    /// Hold out 10% of the duplicates plus as many sampled non-duplicates
    /// as a validation set (the full-protocol split).
    #[arg(long)]
    full: bool,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    /// Triplet margin.
    #[arg(long, default_value_t = 0.25)]
    margin: f64,
    /// Duplicate-decision cosine threshold used for validation accuracy.
    #[arg(long, default_value_t = 0.7)]
    tau: f64,
    #[arg(long, default_value_t = 2)]
    min_freq: usize,
    #[arg(long, default_value_t = 32)]
    text_size: usize,
    #[arg(long, default_value_t = 64)]
    embedding_size: usize,
    #[arg(long, default_value_t = 64)]
    hidden_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    /// Optional global-norm gradient clip.
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Print a model/accuracy/seconds-per-step table comparing the grouped
    /// step with a classic two-branch pairwise step on identical data.
    #[arg(long)]
    summary: bool,
}

#[derive(Args)]
struct TrainSmcdArgs {
    /// Grouped CSV (text,category,group_id).
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch JSONL metrics path.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    /// Texts per group after padding or truncation.
    #[arg(long, default_value_t = 4)]
    group_size: usize,
    /// Triplet margin.
    #[arg(long, default_value_t = 0.25)]
    margin: f64,
    /// Weight of the duplication (triplet) term.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 2)]
    min_freq: usize,
    #[arg(long, default_value_t = 32)]
    text_size: usize,
    #[arg(long, default_value_t = 64)]
    embedding_size: usize,
    #[arg(long, default_value_t = 64)]
    hidden_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    /// Optional global-norm gradient clip.
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Print a model/accuracy/seconds-per-step table after training.
    #[arg(long)]
    summary: bool,
}

#[derive(Args)]
struct EvalPairsArgs {
    #[arg(long)]
    model: PathBuf,
    /// Labeled pair TSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    tau: f64,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    model: PathBuf,
    /// UTF-8 text file, one text per line.
    #[arg(long)]
    input: PathBuf,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GroupArgs {
    #[arg(long)]
    model: PathBuf,
    /// UTF-8 text file, one text per line.
    #[arg(long)]
    input: PathBuf,
    /// Cosine threshold; texts above it join the same cluster.
    #[arg(long, default_value_t = 0.7)]
    tau: f64,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyGroupArgs {
    #[arg(long)]
    model: PathBuf,
    /// UTF-8 text file, one text per line; all lines form one group.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    tau: f64,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// UTF-8 text file, one text per line.
    #[arg(long)]
    input: PathBuf,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GroupAndClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// UTF-8 text file, one text per line.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    tau: f64,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Fail {
    Usage(String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Fail {
        Fail::Core(e)
    }
}

type CliResult = Result<(), Fail>;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap distinguishes help/version from real usage errors
            if e.use_stderr() {
                eprint!("{e}");
                std::process::exit(1);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    let result = match cli.cmd {
        Cmd::BuildVocab(a) => build_vocab(a),
        Cmd::GenSynthetic(a) => gen_synthetic(a),
        Cmd::TrainMultisiam(a) => cmd_train_multisiam(a),
        Cmd::TrainSmcd(a) => cmd_train_smcd(a),
        Cmd::EvalPairs(a) => eval_pairs(a),
        Cmd::Embed(a) => embed(a),
        Cmd::Group(a) => group(a),
        Cmd::VerifyGroup(a) => cmd_verify_group(a),
        Cmd::Classify(a) => cmd_classify(a),
        Cmd::GroupAndClassify(a) => cmd_group_and_classify(a),
    };
    match result {
        Ok(()) => {}
        Err(Fail::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            std::process::exit(1);
        }
        Err(Fail::Core(e)) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

/// Default seed: --seed flag, then MSIA_SEED, then 42.
fn resolve_seed(flag: Option<u64>) -> Result<u64, Fail> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("MSIA_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Fail::Usage(format!("MSIA_SEED must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(42),
    }
}

fn write_output(out: Option<&Path>, payload: &str) -> Result<(), Error> {
    match out {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path)?);
            f.write_all(payload.as_bytes())?;
            f.write_all(b"\n")?;
            f.flush()?;
            Ok(())
        }
        None => {
            println!("{payload}");
            Ok(())
        }
    }
}

/// One text per line, kept verbatim so output indices match line numbers.
fn read_lines(path: &Path) -> Result<Vec<String>, Error> {
    let mut raw = String::new();
    File::open(path)?.read_to_string(&mut raw)?;
    let mut lines: Vec<String> = raw.split('\n').map(|l| l.trim_end_matches('\r').to_string()).collect();
    if lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    if lines.is_empty() {
        return Err(Error::Data(format!("{}: no input lines", path.display())));
    }
    Ok(lines)
}

fn build_vocab(a: BuildVocabArgs) -> CliResult {
    let texts: Vec<String> = match a.format.as_str() {
        "quora" => {
            let load = load_quora_tsv(&a.data)?;
            load.records
                .into_iter()
                .flat_map(|p| [p.q1, p.q2])
                .collect()
        }
        "grouped" => load_grouped_csv(&a.data)?
            .records
            .into_iter()
            .map(|r| r.text)
            .collect(),
        "lines" => read_lines(&a.data)?,
        other => {
            return Err(Fail::Usage(format!(
                "--format must be quora, grouped, or lines, got {other:?}"
            )))
        }
    };
    let vocab = Vocabulary::build_from_texts(&texts, a.min_freq)?;
    let payload = json!({
        "config": {
            "command": "build-vocab",
            "data": a.data.display().to_string(),
            "format": a.format,
            "min_freq": a.min_freq,
        },
        "size": vocab.size(),
        "tokens": vocab.tokens(),
    });
    write_output(a.out.as_deref(), &payload.to_string())?;
    Ok(())
}

fn gen_synthetic(a: GenSyntheticArgs) -> CliResult {
    if a.out.is_none() && a.pairs_out.is_none() {
        return Err(Fail::Usage(
            "gen-synthetic needs --out (grouped CSV) or --pairs-out (pair TSV)".into(),
        ));
    }
    let seed = resolve_seed(a.seed)?;
    let mut report = json!({
        "config": {
            "command": "gen-synthetic",
            "categories": a.categories,
            "groups": a.groups,
            "min_texts": a.min_texts,
            "max_texts": a.max_texts,
            "duplicates": a.duplicates,
            "non_duplicates": a.non_duplicates,
            "seed": seed,
        },
    });
    if let Some(out) = &a.out {
        let cfg = SynthConfig {
            categories: a.categories,
            groups: a.groups,
            min_texts: a.min_texts,
            max_texts: a.max_texts,
            seed,
        };
        let data = gen_grouped_records(&cfg)?;
        write_grouped_csv(&data, out)?;
        let groups = data.groups();
        let padded = groups
            .iter()
            .filter(|(_, m)| m.len() < a.max_texts)
            .count();
        report["grouped"] = json!({
            "path": out.display().to_string(),
            "groups": groups.len(),
            "texts": data.records.len(),
            "categories": data.categories.len(),
            "groups_needing_padding": padded,
            "texts_after_padding": groups.len() * a.max_texts,
        });
    }
    if let Some(pairs_out) = &a.pairs_out {
        let pairs = gen_pair_records(a.duplicates, a.non_duplicates, seed);
        write_pairs_tsv(&pairs, pairs_out)?;
        report["pairs"] = json!({
            "path": pairs_out.display().to_string(),
            "duplicates": a.duplicates,
            "non_duplicates": a.non_duplicates,
        });
    }
    println!("{report}");
    Ok(())
}

fn metrics_writer(path: Option<&Path>, config: &serde_json::Value) -> Result<Option<BufWriter<File>>, Error> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            writeln!(w, "{}", json!({ "config": config }))?;
            Ok(Some(w))
        }
        None => Ok(None),
    }
}

fn log_epoch(sink: &mut Option<BufWriter<File>>, m: &EpochMetrics) {
    if let Some(w) = sink {
        let line = serde_json::to_string(m).expect("metrics serialize");
        writeln!(w, "{line}").expect("metrics write");
    }
    match m.accuracy {
        Some(acc) => eprintln!(
            "epoch {:3}  loss {:.6}  accuracy {:.4}  {:.4}s/step",
            m.epoch, m.loss, acc, m.seconds_per_step
        ),
        None => eprintln!(
            "epoch {:3}  loss {:.6}  {:.4}s/step",
            m.epoch, m.loss, m.seconds_per_step
        ),
    }
}

fn print_summary(rows: &[(String, Option<f64>, f64)]) {
    println!("{:<18} {:>9} {:>14}", "model", "accuracy", "seconds/step");
    for (name, acc, sps) in rows {
        let acc = match acc {
            Some(a) => format!("{a:.4}"),
            None => "-".into(),
        };
        println!("{name:<18} {acc:>9} {sps:>14.4}");
    }
}

fn cmd_train_multisiam(a: TrainMultisiamArgs) -> CliResult {
    let seed = resolve_seed(a.seed)?;
    if a.full && a.val_data.is_some() {
        return Err(Fail::Usage(
            "--full builds its own validation split; drop --val-data".into(),
        ));
    }
    let load = load_quora_tsv(&a.data)?;
    if load.skipped > 0 {
        eprintln!("skipped {} malformed rows in {}", load.skipped, a.data.display());
    }

    // --full: hold out 10% of the duplicates and as many negatives; otherwise
    // train on every duplicate row and validate on --val-data if given.
    let mut split_rng = SeededRng::new(seed);
    let (train_pairs, val_pairs): (Vec<PairRecord>, Vec<PairRecord>) = if a.full {
        let dup_count = load.records.iter().filter(|r| r.is_duplicate).count();
        let held = dup_count - ((dup_count as f64) * 0.9).floor() as usize;
        let negatives = held.min(load.records.len() - dup_count);
        let split = split_quora(&load.records, 0.9, negatives, &mut split_rng)?;
        (split.train, split.test)
    } else {
        let train: Vec<PairRecord> = load
            .records
            .iter()
            .filter(|r| r.is_duplicate)
            .cloned()
            .collect();
        let val = match &a.val_data {
            Some(p) => {
                let v = load_quora_tsv(p)?;
                if v.skipped > 0 {
                    eprintln!("skipped {} malformed rows in {}", v.skipped, p.display());
                }
                v.records
            }
            None => Vec::new(),
        };
        (train, val)
    };
    if train_pairs.is_empty() {
        return Err(Fail::Core(Error::Data(format!(
            "{}: no duplicate pairs to train on",
            a.data.display()
        ))));
    }

    let texts: Vec<&str> = train_pairs
        .iter()
        .flat_map(|p| [p.q1.as_str(), p.q2.as_str()])
        .collect();
    let vocab = Vocabulary::build_from_texts(&texts, a.min_freq)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        group_size: 2,
        text_size: a.text_size,
        embedding_size: a.embedding_size,
        hidden_size: a.hidden_size,
        learning_rate: a.learning_rate,
        alpha: a.margin,
        lambda_dup: 1.0,
        seed,
        optimizer: "adam".into(),
        clip: a.clip,
    };
    let config_echo = json!({
        "command": "train-multisiam",
        "data": a.data.display().to_string(),
        "val_data": a.val_data.as_ref().map(|p| p.display().to_string()),
        "full": a.full,
        "tau": a.tau,
        "min_freq": a.min_freq,
        "vocab_size": vocab.size(),
        "train_pairs": train_pairs.len(),
        "val_pairs": val_pairs.len(),
        "train": cfg,
    });
    let mut sink = metrics_writer(a.metrics.as_deref(), &config_echo)?;
    let mut log = |m: &EpochMetrics| log_epoch(&mut sink, m);

    let groups = pairs_to_groups(&train_pairs, &vocab, cfg.text_size);
    let validation = (!val_pairs.is_empty()).then_some((val_pairs.as_slice(), a.tau));
    let (model, metrics) = train_multisiam(&vocab, &groups, &cfg, validation, Some(&mut log))?;
    if let Some(w) = &mut sink {
        w.flush().map_err(Error::from)?;
    }
    save_checkpoint(&Model::MultiSiam(model), &a.out)?;
    eprintln!("checkpoint written to {}", a.out.display());

    if a.summary {
        let timing = compare_step_times(&vocab, &groups, &cfg, 3)?;
        let accuracy = metrics.last().and_then(|m| m.accuracy);
        print_summary(&[
            ("multisiam".into(), accuracy, timing.multisiam_seconds_per_step),
            ("classic pairwise".into(), None, timing.pairwise_seconds_per_step),
        ]);
    }
    Ok(())
}

fn cmd_train_smcd(a: TrainSmcdArgs) -> CliResult {
    let seed = resolve_seed(a.seed)?;
    let data = load_grouped_csv(&a.data)?;
    let texts: Vec<&str> = data.records.iter().map(|r| r.text.as_str()).collect();
    let vocab = Vocabulary::build_from_texts(&texts, a.min_freq)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        group_size: a.group_size,
        text_size: a.text_size,
        embedding_size: a.embedding_size,
        hidden_size: a.hidden_size,
        learning_rate: a.learning_rate,
        alpha: a.margin,
        lambda_dup: a.lambda,
        seed,
        optimizer: "adam".into(),
        clip: a.clip,
    };
    let config_echo = json!({
        "command": "train-smcd",
        "data": a.data.display().to_string(),
        "min_freq": a.min_freq,
        "vocab_size": vocab.size(),
        "groups": data.groups().len(),
        "categories": data.categories,
        "train": cfg,
    });
    let mut sink = metrics_writer(a.metrics.as_deref(), &config_echo)?;
    let mut log = |m: &EpochMetrics| log_epoch(&mut sink, m);

    // group padding resamples members with the run seed
    let mut pad_rng = SeededRng::new(seed);
    let groups = grouped_to_groups(&data, &vocab, cfg.text_size, cfg.group_size, &mut pad_rng)?;
    let (model, metrics) =
        train_smcd(&vocab, &data.categories, &groups, &cfg, Some(&mut log))?;
    if let Some(w) = &mut sink {
        w.flush().map_err(Error::from)?;
    }
    save_checkpoint(&Model::Smcd(model), &a.out)?;
    eprintln!("checkpoint written to {}", a.out.display());

    if a.summary {
        let last = metrics.last();
        print_summary(&[(
            "smcd".into(),
            last.and_then(|m| m.accuracy),
            last.map(|m| m.seconds_per_step).unwrap_or(0.0),
        )]);
    }
    Ok(())
}

fn model_config(command: &str, model_path: &Path, model: &Model) -> serde_json::Value {
    json!({
        "command": command,
        "model": model_path.display().to_string(),
        "model_kind": model.kind(),
        "text_size": model.text_size(),
        "vocab_size": model.vocab().size(),
    })
}

fn eval_pairs(a: EvalPairsArgs) -> CliResult {
    let model = load_checkpoint(&a.model)?;
    let load = load_quora_tsv(&a.data)?;
    let accuracy = model.pair_accuracy(&load.records, a.tau)?;
    let mut config = model_config("eval-pairs", &a.model, &model);
    config["data"] = json!(a.data.display().to_string());
    config["tau"] = json!(a.tau);
    let payload = json!({
        "config": config,
        "pairs": load.records.len(),
        "skipped": load.skipped,
        "accuracy": accuracy,
    });
    write_output(a.out.as_deref(), &payload.to_string())?;
    Ok(())
}

fn embed(a: EmbedArgs) -> CliResult {
    let model = load_checkpoint(&a.model)?;
    let texts = read_lines(&a.input)?;
    let e = model.embed_texts(&texts)?;
    let d = e.shape()[1];
    let rows: Vec<&[f64]> = (0..texts.len()).map(|i| e.row(i)).collect();
    let mut config = model_config("embed", &a.model, &model);
    config["input"] = json!(a.input.display().to_string());
    let payload = json!({
        "config": config,
        "count": texts.len(),
        "embedding_size": d,
        "embeddings": rows,
    });
    write_output(a.out.as_deref(), &payload.to_string())?;
    Ok(())
}

/// The grouping JSON: threshold, clusters, and a per-text category name or
/// null, with the resolved run config attached.
fn grouping_payload(
    config: serde_json::Value,
    threshold: f64,
    clusters: &[Vec<usize>],
    categories: Vec<Option<String>>,
    probabilities: Option<Vec<f64>>,
) -> serde_json::Value {
    let mut payload = json!({
        "config": config,
        "threshold": threshold,
        "clusters": clusters,
        "categories": categories,
    });
    if let Some(p) = probabilities {
        payload["probabilities"] = json!(p);
    }
    payload
}

fn group(a: GroupArgs) -> CliResult {
    let model = load_checkpoint(&a.model)?;
    let texts = read_lines(&a.input)?;
    let e = model.embed_texts(&texts)?;
    let grouping = group_by_threshold(&e, a.tau)?;
    // the classification head labels each text when the checkpoint has one
    let categories: Vec<Option<String>> = match &model {
        Model::Smcd(m) => classify(m, &texts)?
            .into_iter()
            .map(|(name, _)| Some(name))
            .collect(),
        Model::MultiSiam(_) => vec![None; texts.len()],
    };
    let mut config = model_config("group", &a.model, &model);
    config["input"] = json!(a.input.display().to_string());
    config["tau"] = json!(a.tau);
    let payload = grouping_payload(config, grouping.threshold, &grouping.clusters, categories, None);
    write_output(a.out.as_deref(), &payload.to_string())?;
    Ok(())
}

fn cmd_verify_group(a: VerifyGroupArgs) -> CliResult {
    let model = load_checkpoint(&a.model)?;
    let texts = read_lines(&a.input)?;
    let e = model.embed_texts(&texts)?;
    let (verified, score) = verify_group(&e, a.tau)?;
    let mut config = model_config("verify-group", &a.model, &model);
    config["input"] = json!(a.input.display().to_string());
    config["tau"] = json!(a.tau);
    let payload = json!({
        "config": config,
        "threshold": a.tau,
        "verified": verified,
        "score": score,
    });
    write_output(a.out.as_deref(), &payload.to_string())?;
    Ok(())
}

fn require_smcd(model: Model, command: &str) -> Result<msia_core::SmcdModel, Error> {
    match model {
        Model::Smcd(m) => Ok(m),
        Model::MultiSiam(_) => Err(Error::Data(format!(
            "{command} needs a dual-head (smcd) checkpoint; this one is multisiam"
        ))),
    }
}

fn cmd_classify(a: ClassifyArgs) -> CliResult {
    let model = load_checkpoint(&a.model)?;
    let mut config = model_config("classify", &a.model, &model);
    config["input"] = json!(a.input.display().to_string());
    let m = require_smcd(model, "classify")?;
    let texts = read_lines(&a.input)?;
    let predictions: Vec<serde_json::Value> = classify(&m, &texts)?
        .into_iter()
        .map(|(category, probability)| json!({ "category": category, "probability": probability }))
        .collect();
    let payload = json!({
        "config": config,
        "predictions": predictions,
    });
    write_output(a.out.as_deref(), &payload.to_string())?;
    Ok(())
}

fn cmd_group_and_classify(a: GroupAndClassifyArgs) -> CliResult {
    let model = load_checkpoint(&a.model)?;
    let mut config = model_config("group-and-classify", &a.model, &model);
    config["input"] = json!(a.input.display().to_string());
    config["tau"] = json!(a.tau);
    let m = require_smcd(model, "group-and-classify")?;
    let texts = read_lines(&a.input)?;
    let joint = group_and_classify(&m, &texts, a.tau)?;
    let (categories, probabilities): (Vec<Option<String>>, Vec<f64>) = joint
        .categories
        .into_iter()
        .map(|(name, p)| (Some(name), p))
        .unzip();
    let payload = grouping_payload(
        config,
        joint.grouping.threshold,
        &joint.grouping.clusters,
        categories,
        Some(probabilities),
    );
    write_output(a.out.as_deref(), &payload.to_string())?;
    Ok(())
}
