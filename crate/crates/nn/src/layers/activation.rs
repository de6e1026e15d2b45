use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{NnError, Result};
use crate::layer::{Ctx, Layer, LayerKind};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Act {
    Relu,
    LeakyRelu(f64),
    /// Exact (erf-based) GELU.
    Gelu,
    Sigmoid,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = libm::exp(-0.5 * x * x) / (2.0 * PI).sqrt();
    cdf + x * pdf
}

impl Act {
    fn apply(self, x: f64) -> f64 {
        match self {
            Act::Relu => x.max(0.0),
            Act::LeakyRelu(a) => {
                if x > 0.0 {
                    x
                } else {
                    a * x
                }
            }
            Act::Gelu => gelu(x),
            Act::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative given the input `x` and output `y`.
    fn grad(self, x: f64, y: f64) -> f64 {
        match self {
            Act::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Act::LeakyRelu(a) => {
                if x > 0.0 {
                    1.0
                } else {
                    a
                }
            }
            Act::Gelu => gelu_grad(x),
            Act::Sigmoid => y * (1.0 - y),
        }
    }
}

/// Elementwise activation over a tensor of any rank.
#[derive(Clone, Debug)]
pub struct Activation {
    name: String,
    act: Act,
    cache: Option<(Tensor, Tensor)>,
}

impl Activation {
    pub fn new(name: &str, act: Act) -> Self {
        Activation { name: name.to_owned(), act, cache: None }
    }

    pub fn act(&self) -> Act {
        self.act
    }
}

impl Layer for Activation {
    fn kind(&self) -> LayerKind {
        match self.act {
            Act::Relu => LayerKind::Relu,
            Act::LeakyRelu(_) => LayerKind::LeakyRelu,
            Act::Gelu => LayerKind::Gelu,
            Act::Sigmoid => LayerKind::Sigmoid,
        }
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, input: &Tensor, _ctx: &mut Ctx<'_>) -> Result<Tensor> {
        let out = self.infer(input)?;
        self.cache = Some((input.clone(), out.clone()));
        Ok(out)
    }

    fn infer(&self, input: &Tensor) -> Result<Tensor> {
        let act = self.act;
        Ok(input.map(|x| act.apply(x)))
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let (x, y) = self.cache.as_ref().ok_or_else(|| NnError::not_forwarded(&self.name))?;
        if grad_output.shape() != x.shape() {
            return Err(NnError::shape(&self.name, format!("gradient {:?}", x.shape()), grad_output.shape()));
        }
        let act = self.act;
        let data = x
            .data()
            .iter()
            .zip(y.data())
            .zip(grad_output.data())
            .map(|((&xi, &yi), &g)| g * act.grad(xi, yi))
            .collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    fn boxed_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}
