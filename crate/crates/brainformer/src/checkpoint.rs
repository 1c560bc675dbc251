//! Checkpoints: one flat little-endian `f64` file holding every parameter
//! followed by the optimizer statistics, and a JSON sidecar mapping names to
//! shapes and offsets.

use std::fs;
use std::path::Path;

use brainformer_core::model::{LanguageModel, ModelSpec};
use brainformer_core::training::{SecondMoment, TrainConfig, Trainer};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::io::{read_json, sha256_hex, write_atomic, write_json};

pub const CHECKPOINT_FORMAT: u32 = 1;
pub const VALUES_FILE: &str = "checkpoint.bin";
pub const SIDECAR_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in values, not bytes.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateEntry {
    Factored {
        rows: usize,
        cols: usize,
        offset: usize,
    },
    Full {
        len: usize,
        offset: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub format: u32,
    pub step: u64,
    pub spec: ModelSpec,
    pub train: TrainConfig,
    pub tensors: Vec<TensorEntry>,
    pub optimizer_step: u64,
    pub optimizer_states: Vec<StateEntry>,
    pub n_values: usize,
    pub values_sha256: String,
}

/// Writes `trainer` into `dir` and returns the sidecar.
pub fn save(dir: &Path, trainer: &Trainer) -> AppResult<Sidecar> {
    let mut values: Vec<f64> = Vec::new();
    let mut tensors = Vec::new();
    for (name, t) in trainer.model.params.iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset: values.len(),
        });
        values.extend_from_slice(t.data());
    }
    let mut optimizer_states = Vec::new();
    for s in &trainer.optimizer.states {
        let offset = values.len();
        match s {
            SecondMoment::Factored {
                rows,
                cols,
                row,
                col,
            } => {
                values.extend_from_slice(row);
                values.extend_from_slice(col);
                optimizer_states.push(StateEntry::Factored {
                    rows: *rows,
                    cols: *cols,
                    offset,
                });
            }
            SecondMoment::Full(v) => {
                values.extend_from_slice(v);
                optimizer_states.push(StateEntry::Full {
                    len: v.len(),
                    offset,
                });
            }
        }
    }
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    let sidecar = Sidecar {
        format: CHECKPOINT_FORMAT,
        step: trainer.step,
        spec: trainer.model.spec.clone(),
        train: trainer.cfg.clone(),
        tensors,
        optimizer_step: trainer.optimizer.step,
        optimizer_states,
        n_values: values.len(),
        values_sha256: sha256_hex(&bytes),
    };
    write_atomic(&dir.join(VALUES_FILE), &bytes)?;
    write_json(&dir.join(SIDECAR_FILE), &sidecar)?;
    Ok(sidecar)
}

fn corrupt(dir: &Path, msg: impl Into<String>) -> AppError {
    AppError::Runtime(format!("checkpoint {}: {}", dir.display(), msg.into()))
}

/// Restores a trainer saved by [`save`]. `train` replaces the stored
/// training config when given; the step counter always continues.
pub fn load(dir: &Path, train: Option<TrainConfig>) -> AppResult<Trainer> {
    let sidecar: Sidecar = read_json(&dir.join(SIDECAR_FILE))?;
    if sidecar.format != CHECKPOINT_FORMAT {
        return Err(corrupt(
            dir,
            format!("unsupported format {}", sidecar.format),
        ));
    }
    let path = dir.join(VALUES_FILE);
    let bytes = fs::read(&path).map_err(|e| AppError::io(&path, e))?;
    if bytes.len() != sidecar.n_values * 8 || sha256_hex(&bytes) != sidecar.values_sha256 {
        return Err(corrupt(dir, "values file does not match its sidecar"));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let slice = |offset: usize, len: usize| -> AppResult<&[f64]> {
        values
            .get(offset..offset + len)
            .ok_or_else(|| corrupt(dir, "offset out of range"))
    };

    let cfg = train.unwrap_or_else(|| sidecar.train.clone());
    let mut model = LanguageModel::new(sidecar.spec.clone(), cfg.seed)?;
    if model.params.len() != sidecar.tensors.len() {
        return Err(corrupt(dir, "tensor count differs from the model spec"));
    }
    for entry in &sidecar.tensors {
        let id = model
            .params
            .find(&entry.name)
            .ok_or_else(|| corrupt(dir, format!("unknown tensor {}", entry.name)))?;
        if model.params.get(id).shape() != entry.shape.as_slice() {
            return Err(corrupt(dir, format!("shape mismatch for {}", entry.name)));
        }
        let n = entry.shape.iter().product();
        model.params.set_values(id, slice(entry.offset, n)?)?;
    }

    let mut trainer = Trainer::new(model, cfg)?;
    if trainer.optimizer.states.len() != sidecar.optimizer_states.len() {
        return Err(corrupt(dir, "optimizer state count differs"));
    }
    for (state, entry) in trainer
        .optimizer
        .states
        .iter_mut()
        .zip(&sidecar.optimizer_states)
    {
        *state = match *entry {
            StateEntry::Factored { rows, cols, offset } => SecondMoment::Factored {
                rows,
                cols,
                row: slice(offset, rows)?.to_vec(),
                col: slice(offset + rows, cols)?.to_vec(),
            },
            StateEntry::Full { len, offset } => SecondMoment::Full(slice(offset, len)?.to_vec()),
        };
    }
    trainer.optimizer.step = sidecar.optimizer_step;
    trainer.step = sidecar.step;
    Ok(trainer)
}
