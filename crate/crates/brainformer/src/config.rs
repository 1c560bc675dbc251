//! JSON run configurations for the `search` and `train` commands.

use std::path::{Path, PathBuf};

use brainformer_core::model::BlockSpec;
use brainformer_core::search::{
    glam_baseline_genome, ConstraintMode, EvolutionConfig, FinalizeConfig, ProxyShape, SearchSpace,
    SurrogateConfig, TrialConfig,
};
use brainformer_core::training::{Budget, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

fn default_constraint() -> ConstraintMode {
    ConstraintMode::Cost
}

fn default_valid_fraction() -> f64 {
    0.1
}

fn yes() -> bool {
    true
}

fn three() -> usize {
    3
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrainerConfig {
    /// Analytic loss curves; deterministic and fast.
    Surrogate {
        #[serde(default)]
        curve: SurrogateConfig,
    },
    /// Real proxy training on a byte corpus.
    Training {
        corpus: PathBuf,
        #[serde(default = "default_valid_fraction")]
        valid_fraction: f64,
        #[serde(default)]
        train: TrainConfig,
        /// Cap on validation tokens per evaluation (0 means all).
        #[serde(default)]
        eval_tokens: usize,
    },
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig::Surrogate {
            curve: SurrogateConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Defaults to the GLaM-style block sized to the search space.
    #[serde(default)]
    pub genome: Option<BlockSpec>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            genome: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(default)]
    pub space: SearchSpace,
    #[serde(default)]
    pub evolution: EvolutionConfig,
    #[serde(default)]
    pub trial: TrialConfig,
    #[serde(default)]
    pub proxy: ProxyShape,
    #[serde(default = "default_constraint")]
    pub constraint: ConstraintMode,
    #[serde(default)]
    pub trainer: TrainerConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub finalize: FinalizeConfig,
}

impl SearchConfig {
    pub fn baseline_genome(&self) -> BlockSpec {
        self.baseline
            .genome
            .clone()
            .unwrap_or_else(|| glam_baseline_genome(self.space.n_experts, self.space.head_dim))
    }

    /// Cross-field checks that serde cannot express.
    pub fn validate(&self) -> AppResult<()> {
        self.space.validate()?;
        self.evolution.validate()?;
        check_budget_mode(self.trial.budget, self.constraint)?;
        if let (TrainerConfig::Surrogate { .. }, ConstraintMode::Wallclock) =
            (&self.trainer, self.constraint)
        {
            return Err(AppError::Usage(
                "the surrogate trainer has no wall clock; use the cost budget mode".into(),
            ));
        }
        if !(self.trial.checkpoint_fraction > 0.0 && self.trial.checkpoint_fraction <= 1.0) {
            return Err(AppError::Usage(
                "trial.checkpoint_fraction must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Resolves relative paths against the directory of the config file.
    pub fn resolve_paths(&mut self, config_path: &Path) {
        if let TrainerConfig::Training { corpus, .. } = &mut self.trainer {
            *corpus = resolve(config_path, corpus);
        }
    }
}

/// Step budgets work in both modes; otherwise the budget unit must match
/// the mode.
pub fn check_budget_mode(budget: Budget, mode: ConstraintMode) -> AppResult<()> {
    match (budget, mode) {
        (Budget::MaxSteps(_), _)
        | (Budget::MaxCostUnits(_), ConstraintMode::Cost)
        | (Budget::MaxSeconds(_), ConstraintMode::Wallclock) => Ok(()),
        (b, m) => Err(AppError::Usage(format!(
            "budget {b:?} does not match budget mode {}",
            match m {
                ConstraintMode::Cost => "cost",
                ConstraintMode::Wallclock => "wallclock",
            }
        ))),
    }
}

pub fn resolve(config_path: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        return p.to_path_buf();
    }
    config_path
        .parent()
        .map_or_else(|| p.to_path_buf(), |d| d.join(p))
}

/// Configuration of a single training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    #[serde(default)]
    pub genome: Option<PathBuf>,
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default = "default_valid_fraction")]
    pub valid_fraction: f64,
    #[serde(default)]
    pub train: TrainConfig,
    /// Defaults to `train.max_steps` steps.
    #[serde(default)]
    pub budget: Option<Budget>,
    /// Stack count for genome files holding a bare block.
    #[serde(default = "three")]
    pub n_blocks: usize,
    /// Trajectory records are written every this many steps.
    #[serde(default = "one")]
    pub log_interval: u64,
    /// Stop early once training-split perplexity, checked every
    /// `train.eval_interval` steps, falls below this value.
    #[serde(default)]
    pub target_train_perplexity: Option<f64>,
}

impl TrainRunConfig {
    pub fn resolve_paths(&mut self, config_path: &Path) {
        self.genome = self.genome.as_deref().map(|p| resolve(config_path, p));
        self.corpus = self.corpus.as_deref().map(|p| resolve(config_path, p));
    }

    pub fn budget(&self) -> Budget {
        self.budget
            .unwrap_or(Budget::MaxSteps(self.train.max_steps))
    }
}
