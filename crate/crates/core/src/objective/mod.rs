//! Training objective (ELBO, paraphrase reconstruction, word position),
//! optimizer and the training loop.

mod loss;
mod optim;
mod train;

pub use loss::{
    batch_loss, batch_loss_grad, elbo_loss, prl_loss, total_loss, wpl_loss, LossBreakdown, PairInput,
    PairNoise, SideNoise, Terms,
};
pub use optim::{Adam, AdamConfig};
pub use train::{
    dev_bleu, train, LogRow, TrainConfig, TrainData, TrainOutcome, TrainPaths, TrainState,
};
