//! Small deterministic CNN core: convolution, average pooling, dense layers,
//! ReLU, MSE, hand-written reverse-mode gradients and RMSprop.

mod scalar;
mod tensor;

pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod network;
pub mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use network::{ArchitectureSpec, ConvSpec, Network};
pub use optim::{RmsProp, RmsPropState};
pub use scalar::Scalar;
pub use tensor::Tensor;
