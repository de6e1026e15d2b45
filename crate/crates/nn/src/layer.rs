use std::fmt;

use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-call forward state: the mode and the stream dropout draws from.
pub struct Ctx<'a> {
    pub mode: Mode,
    pub rng: &'a mut Rng,
}

impl<'a> Ctx<'a> {
    pub fn train(rng: &'a mut Rng) -> Self {
        Ctx { mode: Mode::Train, rng }
    }

    pub fn eval(rng: &'a mut Rng) -> Self {
        Ctx { mode: Mode::Eval, rng }
    }
}

/// A trainable tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Param { value, grad }
    }
}

/// Layer kinds, with the tag each one carries in the weights format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Linear,
    Relu,
    LeakyRelu,
    Gelu,
    Sigmoid,
    Dropout,
    BatchNorm1d,
    LayerNorm,
    PatchEmbed,
    TokenMix,
    ChannelMix,
    Conv2d,
    GlobalAvgPool,
    Residual,
    Flatten,
}

impl LayerKind {
    pub const ALL: [LayerKind; 15] = [
        LayerKind::Linear,
        LayerKind::Relu,
        LayerKind::LeakyRelu,
        LayerKind::Gelu,
        LayerKind::Sigmoid,
        LayerKind::Dropout,
        LayerKind::BatchNorm1d,
        LayerKind::LayerNorm,
        LayerKind::PatchEmbed,
        LayerKind::TokenMix,
        LayerKind::ChannelMix,
        LayerKind::Conv2d,
        LayerKind::GlobalAvgPool,
        LayerKind::Residual,
        LayerKind::Flatten,
    ];

    pub fn tag(self) -> u8 {
        Self::ALL.iter().position(|&k| k == self).unwrap() as u8 + 1
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(usize::from(tag).checked_sub(1)?).copied()
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A layer with a hand-written backward pass.
///
/// `forward` caches whatever `backward` needs; `infer` is the read-only
/// eval-mode path and may be called concurrently. Parameter gradients
/// accumulate across `backward` calls until zeroed.
pub trait Layer: fmt::Debug + Send + Sync {
    fn kind(&self) -> LayerKind;

    fn name(&self) -> &str;

    fn forward(&mut self, input: &Tensor, ctx: &mut Ctx<'_>) -> Result<Tensor>;

    fn infer(&self, input: &Tensor) -> Result<Tensor>;

    /// Takes `∂L/∂output`, accumulates parameter gradients and returns
    /// `∂L/∂input`.
    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor>;

    /// All trainable parameters, including those of nested layers.
    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }

    /// Tensors stored for this layer alone in the weights file: parameter
    /// values followed by non-trainable buffers. Containers return nothing
    /// here and expose their members through `children`.
    fn state(&self) -> Vec<&Tensor> {
        self.params().into_iter().map(|p| &p.value).collect()
    }

    fn state_mut(&mut self) -> Vec<&mut Tensor> {
        self.params_mut().into_iter().map(|p| &mut p.value).collect()
    }

    fn children(&self) -> Vec<&dyn Layer> {
        Vec::new()
    }

    fn children_mut(&mut self) -> Vec<&mut dyn Layer> {
        Vec::new()
    }

    fn boxed_clone(&self) -> Box<dyn Layer>;
}

impl Clone for Box<dyn Layer> {
    fn clone(&self) -> Self {
        self.boxed_clone()
    }
}

/// Visit `layer` and all nested layers in pre-order.
pub fn walk<'a>(layer: &'a dyn Layer, out: &mut Vec<&'a dyn Layer>) {
    out.push(layer);
    for child in layer.children() {
        walk(child, out);
    }
}

pub(crate) fn zero_grads(layer: &mut dyn Layer) {
    for p in layer.params_mut() {
        p.grad.fill(0.0);
    }
}
