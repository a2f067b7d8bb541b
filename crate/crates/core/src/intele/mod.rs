//! Two-branch auto-encoder detector with a shallow semantic classifier and
//! an invariant classifier on the encoder output, plus its trainer.

mod losses;
mod model;
mod train;

pub use losses::{
    build_losses, loss_ae, loss_aux, loss_ce_sc, loss_cls, loss_with_grads, total_loss, Batch, LossGraph, LossTerm,
};
pub use model::{Bound, InTeLeModel, Mlp, Mode, ModelConfig};
pub use train::{accuracy_on, train, EpochRecord, HyperParams, TrainLog};
