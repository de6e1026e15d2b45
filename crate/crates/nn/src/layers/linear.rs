use crate::error::{NnError, Result};
use crate::gemm::{gemm, MatRef};
use crate::init::Init;
use crate::layer::{Ctx, Layer, LayerKind, Param};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Fully connected layer on `(N, inputs)`; weight stored as `(inputs, outputs)`.
#[derive(Clone, Debug)]
pub struct Linear {
    name: String,
    inputs: usize,
    outputs: usize,
    weight: Param,
    bias: Param,
    cache: Option<Tensor>,
}

impl Linear {
    pub fn new(name: &str, inputs: usize, outputs: usize, init: Init, rng: &mut Rng) -> Self {
        let w = init.sample(&[inputs, outputs], inputs, outputs, rng);
        Self::from_parts(name, w, Tensor::zeros(&[outputs]))
    }

    pub fn from_parts(name: &str, weight: Tensor, bias: Tensor) -> Self {
        let (inputs, outputs) = (weight.dim(0), weight.dim(1));
        Linear {
            name: name.to_owned(),
            inputs,
            outputs,
            weight: Param::new(weight),
            bias: Param::new(bias),
            cache: None,
        }
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight.value
    }

    fn check(&self, input: &Tensor) -> Result<()> {
        if input.rank() != 2 || input.dim(1) != self.inputs {
            return Err(NnError::shape(&self.name, format!("(N, {})", self.inputs), input.shape()));
        }
        Ok(())
    }
}

/// `y = x·W + b` for `x` of shape `(rows, inputs)`.
pub(crate) fn affine(x: &[f64], rows: usize, w: &Tensor, b: &Tensor) -> Vec<f64> {
    let (inputs, outputs) = (w.dim(0), w.dim(1));
    let mut out = Vec::with_capacity(rows * outputs);
    for _ in 0..rows {
        out.extend_from_slice(b.data());
    }
    gemm(MatRef::new(x, rows, inputs), MatRef::new(w.data(), inputs, outputs), &mut out, true);
    out
}

/// Gradients of `affine`: accumulates into `dw`/`db`, returns `∂L/∂x`.
pub(crate) fn affine_backward(
    x: &[f64],
    dy: &[f64],
    rows: usize,
    w: &Tensor,
    dw: &mut Tensor,
    db: &mut Tensor,
) -> Vec<f64> {
    let (inputs, outputs) = (w.dim(0), w.dim(1));
    gemm(MatRef::new(x, rows, inputs).t(), MatRef::new(dy, rows, outputs), dw.data_mut(), true);
    let dbd = db.data_mut();
    for r in 0..rows {
        for (acc, g) in dbd.iter_mut().zip(&dy[r * outputs..(r + 1) * outputs]) {
            *acc += g;
        }
    }
    let mut dx = vec![0.0; rows * inputs];
    gemm(MatRef::new(dy, rows, outputs), MatRef::new(w.data(), inputs, outputs).t(), &mut dx, false);
    dx
}

impl Layer for Linear {
    fn kind(&self) -> LayerKind {
        LayerKind::Linear
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, input: &Tensor, _ctx: &mut Ctx<'_>) -> Result<Tensor> {
        let out = self.infer(input)?;
        self.cache = Some(input.clone());
        Ok(out)
    }

    fn infer(&self, input: &Tensor) -> Result<Tensor> {
        self.check(input)?;
        let n = input.dim(0);
        let y = affine(input.data(), n, &self.weight.value, &self.bias.value);
        Tensor::new(vec![n, self.outputs], y)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let x = self.cache.as_ref().ok_or_else(|| NnError::not_forwarded(&self.name))?;
        let n = x.dim(0);
        if grad_output.shape() != [n, self.outputs] {
            return Err(NnError::shape(&self.name, format!("gradient ({n}, {})", self.outputs), grad_output.shape()));
        }
        let dx = affine_backward(
            x.data(),
            grad_output.data(),
            n,
            &self.weight.value,
            &mut self.weight.grad,
            &mut self.bias.grad,
        );
        Tensor::new(vec![n, self.inputs], dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn boxed_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_input_through() {
        let w = Tensor::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        let lin = Linear::from_parts("fc", w, Tensor::zeros(&[3]));
        let x = Tensor::from_rows(&[vec![1.0, -2.0, 3.5], vec![0.25, 0.0, -7.0]]).unwrap();
        assert_eq!(lin.infer(&x).unwrap(), x);
    }

    #[test]
    fn wrong_width_names_the_layer() {
        let mut rng = Rng::new(1);
        let lin = Linear::new("fc_in", 4, 2, Init::Xavier, &mut rng);
        let err = lin.infer(&Tensor::zeros(&[2, 5])).unwrap_err().to_string();
        assert!(err.contains("fc_in"), "{err}");
    }
}
