//! Regularized-evolution block search with proxy training, checkpoint
//! pruning, a fixed per-trial budget and top-k scale-up.

mod evolution;
mod finalize;
mod proxy;
mod reference;
mod space;
mod trial;

pub use evolution::{
    evolve, rank, Candidate, EvolutionConfig, EvolutionState, ReplayExecutor, Search,
    SequentialExecutor, TrialExecutor, TrialRecord,
};
pub use finalize::{finalize_topk, FinalCandidate, FinalizeConfig, ScaleTarget, ScaledSpec, TopK};
pub use proxy::{
    genome_label, SurrogateConfig, SurrogateSession, SurrogateTrainer, TrainingProxy,
    TrainingSession,
};
pub use reference::{
    glam_0_1b_32e, glam_baseline_genome, glam_block, GLAM_0_1B_32E_PUBLISHED, GLAM_VOCAB_SIZE,
};
pub use space::{Field, SearchSpace, MAX_DRAWS};
pub use trial::{
    early_stop_check, measure_baseline, reward, run_trial, Baseline, ConstraintMode, ProxySession,
    ProxyShape, ProxyTrainer, SessionSegment, StopReason, TrialConfig, TrialOutcome,
    STOPPED_REWARD, TRAJECTORY_POINTS,
};
