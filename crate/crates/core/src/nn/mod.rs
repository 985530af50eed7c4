//! Small CPU neural-network engine: hand-written conv/dense layers with
//! explicit backward passes, the policy and discriminator networks, Adam and
//! a checksummed weight format.

pub mod adam;
pub mod io;
pub mod layers;
pub mod net;
pub mod tensor;

use thiserror::Error;

pub use adam::AdamState;
pub use io::{decode_weights, encode_weights, load_into, load_weights, save_module, save_weights, WEIGHT_FORMAT_VERSION};
pub use layers::{sigmoid, softplus, Conv2d, Dense};
pub use net::{
    gaussian_log_prob, obs_to_chw, squash, Discriminator, DiscriminatorTrace, Encoder, NetConfig,
    Parameterized, PolicyNet, PolicyTrace, INITIAL_LOG_STD,
};
pub use tensor::{axpy, dot, Scalar, Tensor};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { expected: Vec<usize>, actual: Vec<usize> },
    #[error("non-finite activation in `{0}`")]
    NonFiniteActivation(&'static str),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a weight file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported weight file version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("weight file checksum mismatch")]
    ChecksumMismatch,
    #[error("weight file is missing tensor `{0}`")]
    MissingTensor(String),
    #[error("malformed weight file: {0}")]
    Format(String),
}
