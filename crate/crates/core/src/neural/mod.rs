//! Dense sigmoid layers, the sparse autoencoder objective with its exact
//! gradients, momentum gradient descent and a softmax classification head.

mod autoencoder;
mod gradcheck;
mod layer;
mod optim;
mod softmax;

pub use autoencoder::{ae_loss, backprop_ae, kl_sparsity, mean_activation, Autoencoder, SparsityConfig};
pub use gradcheck::finite_difference_gradient;
pub use layer::{sigmoid, DenseLayer};
pub use optim::{gd_step, train_guarded, Momentum, ParamSet, TrainConfig, TrainHistory, MAX_LR_HALVINGS};
pub use softmax::{cross_entropy, train_softmax_head, SoftmaxLayer};
