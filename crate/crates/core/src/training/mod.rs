//! Desk-scale language-model training: Adafactor, the constant then
//! inverse-square-root schedule, a byte-level corpus and a budgeted loop.

mod adafactor;
mod corpus;
mod schedule;
mod trainer;

pub use adafactor::{Adafactor, AdafactorConfig, SecondMoment};
pub use corpus::{Corpus, Split, BOS, BYTE_VOCAB, EOS, VOCAB_SIZE};
pub use schedule::lr_at;
pub use trainer::{
    evaluate_perplexity, Budget, BudgetMeter, Segment, StepStats, TrainConfig, TrainOutcome,
    Trainer, TrajectoryPoint,
};
