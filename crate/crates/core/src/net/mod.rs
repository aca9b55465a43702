//! Compact UNet predicting a star mask and a distance map, with a
//! hand-written backward pass, AdamW training and weight files.

pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod train;
pub mod weights;

pub use gradcheck::{check_gradient, GradientCheck};
pub use loss::{loss, loss_with_grad, DistanceGate, LossGrad, LossValue};
pub use model::{layout, normalize_frame, ArchDescriptor, ForwardCache, NetworkParams, Prediction};
pub use optim::{learning_rate, AdamW};
pub use train::{sample_gradient, train, EpochLog, TrainConfig, TrainOutcome, TrainSample};
pub use weights::{load_params, save_params, WEIGHTS_VERSION};
