pub mod activation;
pub mod conv;
pub mod dropout;
pub mod linear;
pub mod mixer;
pub mod norm;
pub mod pool;
pub mod residual;

pub use activation::{Act, Activation};
pub use conv::Conv2d;
pub use dropout::Dropout;
pub use linear::Linear;
pub use mixer::{ChannelMix, PatchEmbed, TokenMix};
pub use norm::{BatchNorm1d, LayerNorm};
pub use pool::{Flatten, GlobalAvgPool};
pub use residual::Residual;
