//! JSON documents, corpus files and checksums.

use std::fs;
use std::io::Write;
use std::path::Path;

use brainformer_core::model::{BlockSpec, ModelSpec};
use brainformer_core::training::{Corpus, VOCAB_SIZE};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, AppResult};

/// Parses a JSON document, reporting the offending field path on failure.
pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> AppResult<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        AppError::Config {
            path: path.to_path_buf(),
            field,
            message: e.into_inner().to_string(),
        }
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> AppResult<T> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    parse_json(path, &text)
}

/// Writes pretty JSON through a temporary sibling and a rename, so readers
/// never see a half-written file.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> AppResult<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| AppError::Runtime(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> AppResult<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| AppError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| AppError::io(&tmp, e))?;
    f.sync_all().map_err(|e| AppError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| AppError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> AppResult<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> AppResult<String> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn load_corpus(path: &Path, valid_fraction: f64) -> AppResult<Corpus> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    Ok(Corpus::from_bytes(&bytes, valid_fraction)?)
}

/// A genome file: either a full model spec or a bare block, which is
/// stacked with the defaults given to [`GenomeDoc::into_model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GenomeDoc {
    Model(ModelSpec),
    Block(BlockSpec),
}

impl GenomeDoc {
    pub fn into_model(self, n_blocks: usize, max_seq_len: usize) -> ModelSpec {
        match self {
            GenomeDoc::Model(m) => m,
            GenomeDoc::Block(b) => ModelSpec::new(b, n_blocks, VOCAB_SIZE, max_seq_len),
        }
    }
}

/// Reads a genome and validates it.
pub fn read_genome(path: &Path, n_blocks: usize, max_seq_len: usize) -> AppResult<ModelSpec> {
    let doc: GenomeDoc = read_json(path)?;
    let spec = doc.into_model(n_blocks, max_seq_len);
    spec.validate()?;
    Ok(spec)
}
