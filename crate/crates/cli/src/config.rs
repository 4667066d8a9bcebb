//! Run configuration files and the up-front checks every command performs before it
//! writes anything.

use std::path::{Path, PathBuf};

use corefrl::corpus::{read_corpus, EmbeddingTable};
use corefrl::trainer::episode::token_matrix;
use corefrl::trainer::TrainConfig;
use corefrl::{CorefError, Document, Result};
use serde::{Deserialize, Serialize};

/// A training or ablation run: data locations plus the trainer configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub train_corpus: PathBuf,
    pub dev_corpus: PathBuf,
    /// Binary embedding table covering every token of both corpora.
    pub embeddings: PathBuf,
    /// Directory receiving the checkpoint, its sidecar and the metric history.
    pub output_dir: PathBuf,
    #[serde(default)]
    pub train: TrainConfig,
}

impl RunConfig {
    /// Reads the file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CorefError::file(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CorefError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.train_corpus, &mut cfg.dev_corpus, &mut cfg.embeddings, &mut cfg.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Everything a run needs, loaded and cross-checked.
pub struct RunData {
    pub train: Vec<Document>,
    pub dev: Vec<Document>,
    pub embeddings: EmbeddingTable,
}

impl RunData {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        cfg.train.validate()?;
        let train = load_corpus(&cfg.train_corpus)?;
        let dev = load_corpus(&cfg.dev_corpus)?;
        let embeddings = load_embeddings(&cfg.embeddings, &[&train, &dev], None)?;
        check_output_dir(&cfg.output_dir)?;
        Ok(RunData { train, dev, embeddings })
    }
}

/// A non-empty corpus.
pub fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    let docs = read_corpus(path)?;
    if docs.is_empty() {
        return Err(CorefError::config(format!("{}: corpus is empty", path.display())));
    }
    Ok(docs)
}

/// Loads the table and checks it covers every token of `corpora` (and, when
/// given, that its dimension is `expected_dim`).
pub fn load_embeddings(path: &Path, corpora: &[&[Document]], expected_dim: Option<usize>) -> Result<EmbeddingTable> {
    let table = EmbeddingTable::load(path)?;
    if let Some(dim) = expected_dim.filter(|&d| d != table.dim()) {
        return Err(CorefError::config(format!(
            "{}: embedding dimension {} does not match the checkpoint's {dim}",
            path.display(),
            table.dim()
        )));
    }
    for doc in corpora.iter().flat_map(|c| c.iter()) {
        token_matrix(doc, &table)?;
    }
    Ok(table)
}

/// Fails when `dir` exists but is not a directory.
pub fn check_output_dir(dir: &Path) -> Result<()> {
    if dir.exists() && !dir.is_dir() {
        return Err(CorefError::config(format!("{} is not a directory", dir.display())));
    }
    Ok(())
}

/// Fails when the directory that would hold `file` does not exist.
pub fn check_output_file(file: &Path) -> Result<()> {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => {
            Err(CorefError::config(format!("output directory {} does not exist", p.display())))
        }
        _ if file.is_dir() => Err(CorefError::config(format!("{} is a directory", file.display()))),
        _ => Ok(()),
    }
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CorefError::file(dir, e))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| CorefError::file(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable value")
}
