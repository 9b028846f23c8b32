//! Small neural networks with hand-derived gradients: an MLP over precomputed
//! sentence vectors, BiGRU, BiGRU with attention, and a hierarchical attention
//! network.

mod adam;
mod gradcheck;
mod layers;
mod network;
mod tensor;
mod train;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use gradcheck::{gradient_check, relative_error, RELATIVE_ERROR_FLOOR};
pub use layers::{
    attention_pool, dense_apply, dropout_apply, mean_pool, mean_pool_backward, Activation, Attention,
    AttentionTrace, BiGru, BiGruTrace, Dense, Gru, GruTrace, Mode, Visitor, VisitorMut,
};
pub use network::{
    build_network, ArchitectureKind, Network, NetworkInput, NetworkSpec, OutputHead, SampleOutcome,
    NETWORK_FORMAT_VERSION,
};
pub use tensor::Tensor2;
pub use train::{batch_loss, batch_loss_and_grad, predict_batch, train_network, EpochRecord, Sample, TrainConfig};
