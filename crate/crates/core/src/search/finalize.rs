//! Selection of the best blocks and their expansion to target scales.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::evolution::{rank, TrialRecord};
use crate::error::{bail, Result};
use crate::model::{scale_model_dim, BlockSpec, ModelSpec, ScaleFactor};
use crate::training::VOCAB_SIZE;

/// One evaluation scale: widths multiplied by `factor`, block stacked
/// `n_blocks` times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleTarget {
    pub factor: ScaleFactor,
    pub n_blocks: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinalizeConfig {
    pub k: usize,
    pub targets: Vec<ScaleTarget>,
    pub vocab_size: usize,
    pub max_seq_len: usize,
}

impl Default for FinalizeConfig {
    fn default() -> Self {
        Self {
            k: 3,
            targets: vec![
                ScaleTarget {
                    factor: ScaleFactor::X2,
                    n_blocks: 6,
                },
                ScaleTarget {
                    factor: ScaleFactor::X4,
                    n_blocks: 8,
                },
            ],
            vocab_size: VOCAB_SIZE,
            max_seq_len: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledSpec {
    pub target: ScaleTarget,
    pub spec: ModelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalCandidate {
    pub trial_id: u64,
    pub reward: f64,
    pub genome: BlockSpec,
    pub scaled: Vec<ScaledSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    pub requested: usize,
    pub candidates: Vec<FinalCandidate>,
    /// Fewer than `requested` trials completed.
    pub short: bool,
}

/// The `k` best completed trials (reward descending, ties to the earlier
/// id), each expanded to every target scale. Stopped trials are never
/// selected.
pub fn finalize_topk(history: &[TrialRecord], cfg: &FinalizeConfig) -> Result<TopK> {
    if history.is_empty() {
        bail!(Input, "no trials to finalize");
    }
    let mut completed: Vec<&TrialRecord> =
        history.iter().filter(|r| r.outcome.completed()).collect();
    completed.sort_by(|a, b| rank(a, b));
    let short = completed.len() < cfg.k;
    let candidates = completed
        .into_iter()
        .take(cfg.k)
        .map(|r| {
            let scaled = cfg
                .targets
                .iter()
                .map(|&target| {
                    let block = scale_model_dim(&r.genome, target.factor);
                    let spec =
                        ModelSpec::new(block, target.n_blocks, cfg.vocab_size, cfg.max_seq_len);
                    spec.validate()?;
                    Ok(ScaledSpec { target, spec })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(FinalCandidate {
                trial_id: r.trial_id,
                reward: r.outcome.reward,
                genome: r.genome.clone(),
                scaled,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TopK {
        requested: cfg.k,
        candidates,
        short,
    })
}
