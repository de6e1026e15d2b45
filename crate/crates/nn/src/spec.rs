//! Serializable layer plans.

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::init::Init;
use crate::layer::Layer;
use crate::layers::*;
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Linear { inputs: usize, outputs: usize, init: Init },
    Relu,
    LeakyRelu { alpha: f64 },
    Gelu,
    Sigmoid,
    Dropout { p: f64 },
    BatchNorm1d { features: usize, eps: f64, momentum: f64 },
    LayerNorm { features: usize, eps: f64 },
    PatchEmbed { image_size: usize, channels: usize, patch: usize, dim: usize },
    TokenMix { tokens: usize, hidden: usize },
    ChannelMix { dim: usize, hidden: usize },
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize, init: Init },
    GlobalAvgPool,
    Flatten,
    Residual { block: Vec<NamedLayer>, shortcut: Option<Box<NamedLayer>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedLayer {
    pub name: String,
    #[serde(flatten)]
    pub spec: LayerSpec,
}

impl NamedLayer {
    pub fn new(name: impl Into<String>, spec: LayerSpec) -> Self {
        NamedLayer { name: name.into(), spec }
    }

    /// Number of trainable scalars, including nested layers.
    pub fn param_count(&self) -> usize {
        match &self.spec {
            LayerSpec::Linear { inputs, outputs, .. } => inputs * outputs + outputs,
            LayerSpec::BatchNorm1d { features, .. } | LayerSpec::LayerNorm { features, .. } => 2 * features,
            LayerSpec::PatchEmbed { channels, patch, dim, .. } => channels * patch * patch * dim + dim,
            LayerSpec::TokenMix { tokens, hidden } | LayerSpec::ChannelMix { dim: tokens, hidden } => {
                2 * tokens * hidden + tokens + hidden
            }
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                out_channels * in_channels * kernel * kernel + out_channels
            }
            LayerSpec::Residual { block, shortcut } => {
                block.iter().map(NamedLayer::param_count).sum::<usize>()
                    + shortcut.as_ref().map_or(0, |s| s.param_count())
            }
            _ => 0,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad =
            |expected: String| NnError::Plan(format!("layer `{}` expects input {expected}, got {input:?}", self.name));
        match &self.spec {
            LayerSpec::Linear { inputs, outputs, .. } => {
                if input != [*inputs] {
                    return Err(bad(format!("[{inputs}]")));
                }
                Ok(vec![*outputs])
            }
            LayerSpec::BatchNorm1d { features, .. } => {
                if input != [*features] {
                    return Err(bad(format!("[{features}]")));
                }
                Ok(input.to_vec())
            }
            LayerSpec::LayerNorm { features, .. } => {
                if input.last() != Some(features) {
                    return Err(bad(format!("[..., {features}]")));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Relu
            | LayerSpec::LeakyRelu { .. }
            | LayerSpec::Gelu
            | LayerSpec::Sigmoid
            | LayerSpec::Dropout { .. } => Ok(input.to_vec()),
            LayerSpec::PatchEmbed { image_size, channels, patch, dim } => {
                if *patch == 0 || image_size % patch != 0 {
                    return Err(NnError::Plan(format!(
                        "layer `{}`: image size {image_size} is not divisible by patch {patch}",
                        self.name
                    )));
                }
                if input != [*channels, *image_size, *image_size] {
                    return Err(bad(format!("[{channels}, {image_size}, {image_size}]")));
                }
                let g = image_size / patch;
                Ok(vec![g * g, *dim])
            }
            LayerSpec::TokenMix { tokens, .. } => {
                if input.len() != 2 || input[0] != *tokens {
                    return Err(bad(format!("[{tokens}, C]")));
                }
                Ok(input.to_vec())
            }
            LayerSpec::ChannelMix { dim, .. } => {
                if input.len() != 2 || input[1] != *dim {
                    return Err(bad(format!("[S, {dim}]")));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, padding, .. } => {
                if input.len() != 3 || input[0] != *in_channels || *stride == 0 {
                    return Err(bad(format!("[{in_channels}, H, W]")));
                }
                let ho = Conv2d::output_size(input[1], *kernel, *stride, *padding);
                let wo = Conv2d::output_size(input[2], *kernel, *stride, *padding);
                match (ho, wo) {
                    (Some(h), Some(w)) => Ok(vec![*out_channels, h, w]),
                    _ => Err(bad(format!("spatial size of at least {kernel}"))),
                }
            }
            LayerSpec::GlobalAvgPool => match input.len() {
                2 => Ok(vec![input[1]]),
                3 => Ok(vec![input[0]]),
                _ => Err(bad("[S, C] or [C, H, W]".into())),
            },
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Residual { block, shortcut } => {
                let mut shape = input.to_vec();
                for layer in block {
                    shape = layer.output_shape(&shape)?;
                }
                let skip = match shortcut {
                    Some(s) => s.output_shape(input)?,
                    None => input.to_vec(),
                };
                if skip != shape {
                    return Err(NnError::Plan(format!(
                        "residual `{}`: block yields {shape:?} but shortcut yields {skip:?}",
                        self.name
                    )));
                }
                Ok(shape)
            }
        }
    }

    pub fn build(&self, rng: &mut Rng) -> Box<dyn Layer> {
        let name = self.name.as_str();
        match &self.spec {
            LayerSpec::Linear { inputs, outputs, init } => Box::new(Linear::new(name, *inputs, *outputs, *init, rng)),
            LayerSpec::Relu => Box::new(Activation::new(name, Act::Relu)),
            LayerSpec::LeakyRelu { alpha } => Box::new(Activation::new(name, Act::LeakyRelu(*alpha))),
            LayerSpec::Gelu => Box::new(Activation::new(name, Act::Gelu)),
            LayerSpec::Sigmoid => Box::new(Activation::new(name, Act::Sigmoid)),
            LayerSpec::Dropout { p } => Box::new(Dropout::new(name, *p)),
            LayerSpec::BatchNorm1d { features, eps, momentum } => {
                Box::new(BatchNorm1d::new(name, *features, *eps, *momentum))
            }
            LayerSpec::LayerNorm { features, eps } => Box::new(LayerNorm::new(name, *features, *eps)),
            LayerSpec::PatchEmbed { image_size, channels, patch, dim } => {
                Box::new(PatchEmbed::new(name, *image_size, *channels, *patch, *dim, rng))
            }
            LayerSpec::TokenMix { tokens, hidden } => Box::new(TokenMix::new(name, *tokens, *hidden, rng)),
            LayerSpec::ChannelMix { dim, hidden } => Box::new(ChannelMix::new(name, *dim, *hidden, rng)),
            LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, padding, init } => {
                Box::new(Conv2d::new(name, *in_channels, *out_channels, *kernel, *stride, *padding, *init, rng))
            }
            LayerSpec::GlobalAvgPool => Box::new(GlobalAvgPool::new(name)),
            LayerSpec::Flatten => Box::new(Flatten::new(name)),
            LayerSpec::Residual { block, shortcut } => {
                let layers = block.iter().map(|l| l.build(rng)).collect();
                let sc = shortcut.as_ref().map(|s| s.build(rng));
                Box::new(Residual::new(name, layers, sc))
            }
        }
    }
}
