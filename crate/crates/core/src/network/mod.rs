//! The differentiable core: parameter tensors, layers with hand-written
//! backward passes, the encoder/decoder components, a finite-difference
//! gradient checker and the checkpoint container.

mod checkpoint;
mod gradcheck;
mod layers;
mod model;
mod param;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use layers::{log_softmax_rows, Ffn, FfnCache, Linear, Lstm, LstmGrads, LstmTrace};
pub use model::{
    DecCache, DecState, ModelConfig, ModelParams, SemCache, SynCache, SynEncoder, WplCache,
};
pub use param::{Param, Parameterized};
