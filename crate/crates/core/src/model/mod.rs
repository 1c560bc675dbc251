//! Architecture genome, block composition, the decoder-only LM and the
//! parameter / FLOP accounting used by search and reporting.

mod block;
mod count;
mod flops;
mod lm;
mod spec;
mod timing;

pub use block::{compose_block, Block, LayerImpl, SubLayer, LAYER_NORM_EPS};
pub use count::{count_params, layer_param_count, ParamCount};
pub use flops::{forward_flops, step_cost, FlopEstimate, BACKWARD_FLOP_MULTIPLIER};
pub use lm::{LanguageModel, LmForward, LmLoss, EMBEDDING_PARAM_PREFIXES};
pub use spec::{
    scale_model_dim, stack_n_times, BlockSpec, LayerKind, LayerSpec, ModelSpec, ScaleFactor,
    SCHEMA_VERSION,
};
pub use timing::{measure_step_time, StepTiming};
