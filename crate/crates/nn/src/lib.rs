//! Small deterministic neural-network engine with hand-written backward
//! passes, 64-bit throughout.

pub mod error;
pub mod gemm;
pub mod gradcheck;
pub mod init;
pub mod layer;
pub mod layers;
pub mod loss;
pub mod network;
pub mod optim;
pub mod rng;
pub mod spec;
pub mod tensor;
pub mod weights;

pub use error::{NnError, Result};
pub use init::Init;
pub use layer::{Ctx, Layer, LayerKind, Mode, Param};
pub use network::{Network, NetworkSpec};
pub use optim::{Optimizer, OptimizerKind};
pub use rng::Rng;
pub use spec::{LayerSpec, NamedLayer};
pub use tensor::Tensor;
