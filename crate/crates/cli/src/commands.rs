//! One function per subcommand.

use std::io::{BufRead, Write};
use std::path::Path;

use corefrl::corpus::{hash_embeddings, synth::generate, write_jsonl, EmbeddingTable, SynthConfig};
use corefrl::decode::{
    mention_detection_by_width, predict_corpus, score_predictions, BucketRecall, Prediction, WIDTH_BUCKETS,
};
use corefrl::metrics::MetricReport;
use corefrl::trainer::{ablation_study, train, TrainConfig, TrainData};
use corefrl::{CorefError, CorefModel, Document, Result, Sidecar};
use serde::Serialize;

use crate::config::{
    check_output_dir, check_output_file, create_dir, load_corpus, load_embeddings, to_json, write_file,
    RunConfig, RunData,
};

/// Converts a corpus (CoNLL-2012 or JSON lines) to canonical JSON lines.
pub fn prepare(input: &Path, output: &Path, hash_dim: Option<usize>, embeddings_out: Option<&Path>, seed: u64) -> Result<()> {
    if hash_dim.is_some() != embeddings_out.is_some() {
        return Err(CorefError::config("--hash-dim and --embeddings-out go together"));
    }
    check_output_file(output)?;
    if let Some(p) = embeddings_out {
        check_output_file(p)?;
    }
    let docs = load_corpus(input)?;
    let table = hash_dim.map(|dim| hash_embeddings(&docs, dim, seed)).transpose()?;
    write_docs(output, &docs)?;
    if let (Some(table), Some(path)) = (table, embeddings_out) {
        table.save(path)?;
    }
    let clusters: usize = docs.iter().map(|d| d.clusters.len()).sum();
    let mentions: usize = docs.iter().map(|d| d.gold_mentions().len()).sum();
    println!("{} documents, {clusters} clusters, {mentions} mentions", docs.len());
    Ok(())
}

fn write_docs(path: &Path, docs: &[Document]) -> Result<()> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, docs)?;
    write_file(path, buf)
}

pub struct SynthArgs {
    pub synth: SynthConfig,
    pub hash_dim: usize,
    pub dev_fraction: f64,
}

/// Writes `train.jsonl`, `dev.jsonl`, `embeddings.bin` and a ready-to-run `run.json`.
pub fn gen_synth(args: &SynthArgs, output_dir: &Path) -> Result<()> {
    args.synth.validate()?;
    if !(0.0..1.0).contains(&args.dev_fraction) {
        return Err(CorefError::config("--dev-fraction must lie in [0, 1)"));
    }
    if args.hash_dim == 0 {
        return Err(CorefError::config("--hash-dim must be positive"));
    }
    check_output_dir(output_dir)?;
    let docs = generate(&args.synth)?;
    let dev_len = ((docs.len() as f64 * args.dev_fraction).round() as usize).clamp(1, docs.len());
    let (train_docs, dev_docs) = docs.split_at(docs.len() - dev_len);
    let table = hash_embeddings(&docs, args.hash_dim, args.synth.seed)?;

    create_dir(output_dir)?;
    write_docs(&output_dir.join("train.jsonl"), train_docs)?;
    write_docs(&output_dir.join("dev.jsonl"), dev_docs)?;
    table.save(output_dir.join("embeddings.bin"))?;
    let run = RunConfig {
        train_corpus: "train.jsonl".into(),
        dev_corpus: "dev.jsonl".into(),
        embeddings: "embeddings.bin".into(),
        output_dir: "run".into(),
        train: TrainConfig { seed: args.synth.seed, ..TrainConfig::default() },
    };
    write_file(&output_dir.join("run.json"), to_json(&run) + "\n")?;
    println!("{} training and {} development documents in {}", train_docs.len(), dev_docs.len(), output_dir.display());
    Ok(())
}

fn apply_overrides(cfg: &mut RunConfig, seed: Option<u64>, no_detection_loss: bool) {
    if let Some(seed) = seed {
        cfg.train.seed = seed;
    }
    if no_detection_loss {
        cfg.train.detection_loss = false;
    }
}

pub fn train_cmd(config: &Path, seed: Option<u64>, no_detection_loss: bool) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    apply_overrides(&mut cfg, seed, no_detection_loss);
    let data = RunData::load(&cfg)?;
    let td = TrainData { train: &data.train, dev: &data.dev, embeddings: &data.embeddings };
    let outcome = train(td, &cfg.train, |r| {
        eprintln!(
            "epoch {:3}  loss {:9.4}  MUC {:.4}  B3 {:.4}  CEAF {:.4}  avg {:.4}  mentions {:.4}",
            r.epoch, r.mean_train_loss, r.muc_f1, r.b3_f1, r.ceaf_f1, r.avg_f1, r.mention_det_acc
        )
    })?;

    create_dir(&cfg.output_dir)?;
    let sidecar = Sidecar::new(&outcome.model, outcome.best_epoch, outcome.history.clone());
    outcome.model.save(cfg.output_dir.join("model.ckpt"), &sidecar)?;
    let mut lines = String::new();
    for r in &outcome.history {
        lines += &serde_json::to_string(r).expect("serializable record");
        lines.push('\n');
    }
    write_file(&cfg.output_dir.join("metrics.jsonl"), lines)?;
    println!(
        "best epoch {}: dev avg F1 {:.4}",
        outcome.best_epoch.map_or("-".to_string(), |e| e.to_string()),
        outcome.best_avg_f1()
    );
    Ok(())
}

pub fn ablate(config: &Path, seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(CorefError::config("--seeds needs at least one seed"));
    }
    let cfg = RunConfig::load(config)?;
    let data = RunData::load(&cfg)?;
    let td = TrainData { train: &data.train, dev: &data.dev, embeddings: &data.embeddings };
    let report = ablation_study(td, &cfg.train, seeds)?;
    create_dir(&cfg.output_dir)?;
    let json = to_json(&report);
    write_file(&cfg.output_dir.join("ablation.json"), json.clone() + "\n")?;
    println!("{json}");
    Ok(())
}

/// Where `eval` gets its predicted clusters from.
pub enum EvalSource<'a> {
    Model { checkpoint: &'a Path, embeddings: &'a Path, by_width: bool },
    Predictions(&'a Path),
    Gold,
}

#[derive(Serialize)]
struct EvalOutput {
    #[serde(flatten)]
    report: MetricReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    mention_detection_by_width: Option<Vec<BucketRecall>>,
}

pub fn eval(corpus: &Path, source: EvalSource<'_>, output: Option<&Path>) -> Result<()> {
    if let Some(p) = output {
        check_output_file(p)?;
    }
    let docs = load_corpus(corpus)?;
    let (predictions, by_width) = match source {
        EvalSource::Model { checkpoint, embeddings, by_width } => {
            let (model, table) = load_model(checkpoint, embeddings, &docs)?;
            let widths = by_width
                .then(|| mention_detection_by_width(&model, &docs, &table, &WIDTH_BUCKETS))
                .transpose()?;
            (predict_corpus(&model, &docs, &table)?, widths)
        }
        EvalSource::Predictions(path) => (read_predictions(path, &docs)?, None),
        EvalSource::Gold => {
            let gold = docs.iter().map(|d| Prediction { doc_key: d.doc_key.clone(), clusters: d.clusters.clone() });
            (gold.collect(), None)
        }
    };
    let report = score_predictions(&docs, &predictions)?;
    let json = to_json(&EvalOutput { report, mention_detection_by_width: by_width });
    if let Some(p) = output {
        write_file(p, json.clone() + "\n")?;
    }
    println!("{json}");
    Ok(())
}

pub fn predict(checkpoint: &Path, corpus: &Path, embeddings: &Path, output: &Path) -> Result<()> {
    check_output_file(output)?;
    let docs = load_corpus(corpus)?;
    let (model, table) = load_model(checkpoint, embeddings, &docs)?;
    let predictions = predict_corpus(&model, &docs, &table)?;
    let mut out = Vec::new();
    for p in &predictions {
        serde_json::to_writer(&mut out, p).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    write_file(output, out)?;
    let clusters: usize = predictions.iter().map(|p| p.clusters.len()).sum();
    println!("{} documents, {clusters} predicted clusters", predictions.len());
    Ok(())
}

fn load_model(checkpoint: &Path, embeddings: &Path, docs: &[Document]) -> Result<(CorefModel, EmbeddingTable)> {
    let (model, _) = CorefModel::load(checkpoint)?;
    let table = load_embeddings(embeddings, &[docs], Some(model.token_dim))?;
    Ok((model, table))
}

/// Reads a `predict` output file; every document key must belong to the corpus
/// and every span must lie inside its document.
fn read_predictions(path: &Path, docs: &[Document]) -> Result<Vec<Prediction>> {
    let file = std::fs::File::open(path).map_err(|e| CorefError::file(path, e))?;
    let lengths: std::collections::HashMap<&str, usize> =
        docs.iter().map(|d| (d.doc_key.as_str(), d.num_tokens())).collect();
    let mut out = Vec::new();
    for (k, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorefError::file(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(&line).map_err(|e| CorefError::parse(k + 1, e.to_string()))?;
        let Some(&len) = lengths.get(p.doc_key.as_str()) else {
            return Err(CorefError::parse(k + 1, format!("unknown document {}", p.doc_key)));
        };
        if let Some(s) = p.clusters.iter().flatten().find(|s| s.start > s.end || s.end >= len) {
            return Err(CorefError::parse(k + 1, format!("span {s} outside document {}", p.doc_key)));
        }
        out.push(p);
    }
    Ok(out)
}
