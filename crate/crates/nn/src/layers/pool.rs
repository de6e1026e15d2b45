use crate::error::{NnError, Result};
use crate::layer::{Ctx, Layer, LayerKind};
use crate::tensor::Tensor;

/// Mean over tokens for `(N, S, C)` input or over the spatial plane for
/// `(N, C, H, W)` input. Output is `(N, C)`.
#[derive(Clone, Debug)]
pub struct GlobalAvgPool {
    name: String,
    input_shape: Option<Vec<usize>>,
}

impl GlobalAvgPool {
    pub fn new(name: &str) -> Self {
        GlobalAvgPool { name: name.to_owned(), input_shape: None }
    }
}

impl Layer for GlobalAvgPool {
    fn kind(&self) -> LayerKind {
        LayerKind::GlobalAvgPool
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, input: &Tensor, _ctx: &mut Ctx<'_>) -> Result<Tensor> {
        let y = self.infer(input)?;
        self.input_shape = Some(input.shape().to_vec());
        Ok(y)
    }

    fn infer(&self, input: &Tensor) -> Result<Tensor> {
        let x = input.data();
        match input.rank() {
            3 => {
                let (n, s, c) = (input.dim(0), input.dim(1), input.dim(2));
                let mut out = vec![0.0; n * c];
                for b in 0..n {
                    let o = &mut out[b * c..(b + 1) * c];
                    for t in 0..s {
                        let row = &x[(b * s + t) * c..(b * s + t + 1) * c];
                        o.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                    }
                    o.iter_mut().for_each(|a| *a /= s as f64);
                }
                Tensor::new(vec![n, c], out)
            }
            4 => {
                let (n, c) = (input.dim(0), input.dim(1));
                let hw = input.dim(2) * input.dim(3);
                let out = x.chunks(hw).map(|p| p.iter().sum::<f64>() / hw as f64).collect();
                Tensor::new(vec![n, c], out)
            }
            _ => Err(NnError::shape(&self.name, "(N, S, C) or (N, C, H, W)", input.shape())),
        }
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let shape = self.input_shape.as_ref().ok_or_else(|| NnError::not_forwarded(&self.name))?;
        let (n, c) = if shape.len() == 3 { (shape[0], shape[2]) } else { (shape[0], shape[1]) };
        if grad_output.shape() != [n, c] {
            return Err(NnError::shape(&self.name, format!("gradient ({n}, {c})"), grad_output.shape()));
        }
        let g = grad_output.data();
        let mut dx = vec![0.0; shape.iter().product()];
        if shape.len() == 3 {
            let s = shape[1];
            for b in 0..n {
                for t in 0..s {
                    for j in 0..c {
                        dx[(b * s + t) * c + j] = g[b * c + j] / s as f64;
                    }
                }
            }
        } else {
            let hw = shape[2] * shape[3];
            for (plane, &gv) in dx.chunks_mut(hw).zip(g) {
                plane.iter_mut().for_each(|d| *d = gv / hw as f64);
            }
        }
        Tensor::new(shape.clone(), dx)
    }

    fn boxed_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

/// Collapse everything after the batch axis.
#[derive(Clone, Debug)]
pub struct Flatten {
    name: String,
    input_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new(name: &str) -> Self {
        Flatten { name: name.to_owned(), input_shape: None }
    }
}

impl Layer for Flatten {
    fn kind(&self) -> LayerKind {
        LayerKind::Flatten
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, input: &Tensor, _ctx: &mut Ctx<'_>) -> Result<Tensor> {
        self.input_shape = Some(input.shape().to_vec());
        self.infer(input)
    }

    fn infer(&self, input: &Tensor) -> Result<Tensor> {
        let n = input.batch();
        input.clone().reshape(&[n, input.len() / n])
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let shape = self.input_shape.as_ref().ok_or_else(|| NnError::not_forwarded(&self.name))?;
        grad_output
            .clone()
            .reshape(shape)
            .map_err(|_| NnError::shape(&self.name, format!("gradient for {shape:?}"), grad_output.shape()))
    }

    fn boxed_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}
