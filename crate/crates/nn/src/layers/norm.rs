use crate::error::{NnError, Result};
use crate::layer::{Ctx, Layer, LayerKind, Mode, Param};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
struct BnCache {
    mode: Mode,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

/// Batch normalisation over `(N, F)`.
///
/// Train mode normalises with the biased batch variance and updates the
/// running statistics (running variance uses the unbiased estimate when
/// `N > 1`); eval mode uses the running statistics.
#[derive(Clone, Debug)]
pub struct BatchNorm1d {
    name: String,
    features: usize,
    eps: f64,
    momentum: f64,
    gamma: Param,
    beta: Param,
    running_mean: Tensor,
    running_var: Tensor,
    cache: Option<BnCache>,
}

impl BatchNorm1d {
    pub fn new(name: &str, features: usize, eps: f64, momentum: f64) -> Self {
        BatchNorm1d {
            name: name.to_owned(),
            features,
            eps,
            momentum,
            gamma: Param::new(Tensor::full(&[features], 1.0)),
            beta: Param::new(Tensor::zeros(&[features])),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::full(&[features], 1.0),
            cache: None,
        }
    }

    pub fn running_mean(&self) -> &Tensor {
        &self.running_mean
    }

    pub fn running_var(&self) -> &Tensor {
        &self.running_var
    }

    fn check(&self, input: &Tensor) -> Result<(usize, usize)> {
        if input.rank() != 2 || input.dim(1) != self.features {
            return Err(NnError::shape(&self.name, format!("(N, {})", self.features), input.shape()));
        }
        Ok((input.dim(0), self.features))
    }

    fn eval_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let inv_std = self.running_var.data().iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        (self.running_mean.data().to_vec(), inv_std)
    }

    fn normalize(&self, x: &[f64], n: usize, mean: &[f64], inv_std: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let f = self.features;
        let (g, b) = (self.gamma.value.data(), self.beta.value.data());
        let mut xhat = vec![0.0; n * f];
        let mut y = vec![0.0; n * f];
        for i in 0..n {
            for j in 0..f {
                let h = (x[i * f + j] - mean[j]) * inv_std[j];
                xhat[i * f + j] = h;
                y[i * f + j] = g[j] * h + b[j];
            }
        }
        (xhat, y)
    }
}

impl Layer for BatchNorm1d {
    fn kind(&self) -> LayerKind {
        LayerKind::BatchNorm1d
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, input: &Tensor, ctx: &mut Ctx<'_>) -> Result<Tensor> {
        let (n, f) = self.check(input)?;
        let x = input.data();
        let (mean, inv_std) = match ctx.mode {
            Mode::Eval => self.eval_stats(),
            Mode::Train => {
                let mut mean = vec![0.0; f];
                for i in 0..n {
                    for j in 0..f {
                        mean[j] += x[i * f + j];
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0; f];
                for i in 0..n {
                    for j in 0..f {
                        let d = x[i * f + j] - mean[j];
                        var[j] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= n as f64);
                let unbias = if n > 1 { n as f64 / (n as f64 - 1.0) } else { 1.0 };
                let m = self.momentum;
                for j in 0..f {
                    let rm = &mut self.running_mean.data_mut()[j];
                    *rm = (1.0 - m) * *rm + m * mean[j];
                    let rv = &mut self.running_var.data_mut()[j];
                    *rv = (1.0 - m) * *rv + m * var[j] * unbias;
                }
                let inv_std = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
                (mean, inv_std)
            }
        };
        let (xhat, y) = self.normalize(x, n, &mean, &inv_std);
        self.cache = Some(BnCache { mode: ctx.mode, xhat, inv_std });
        Tensor::new(vec![n, f], y)
    }

    fn infer(&self, input: &Tensor) -> Result<Tensor> {
        let (n, f) = self.check(input)?;
        let (mean, inv_std) = self.eval_stats();
        let (_, y) = self.normalize(input.data(), n, &mean, &inv_std);
        Tensor::new(vec![n, f], y)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or_else(|| NnError::not_forwarded(&self.name))?;
        let f = self.features;
        let n = cache.xhat.len() / f;
        if grad_output.shape() != [n, f] {
            return Err(NnError::shape(&self.name, format!("gradient ({n}, {f})"), grad_output.shape()));
        }
        let dy = grad_output.data();
        let g = self.gamma.value.data().to_vec();
        let mut sum_dy = vec![0.0; f];
        let mut sum_dy_xhat = vec![0.0; f];
        for i in 0..n {
            for j in 0..f {
                sum_dy[j] += dy[i * f + j];
                sum_dy_xhat[j] += dy[i * f + j] * cache.xhat[i * f + j];
            }
        }
        for j in 0..f {
            self.gamma.grad.data_mut()[j] += sum_dy_xhat[j];
            self.beta.grad.data_mut()[j] += sum_dy[j];
        }
        let mut dx = vec![0.0; n * f];
        match cache.mode {
            Mode::Eval => {
                for i in 0..n {
                    for j in 0..f {
                        dx[i * f + j] = dy[i * f + j] * g[j] * cache.inv_std[j];
                    }
                }
            }
            Mode::Train => {
                let nf = n as f64;
                for i in 0..n {
                    for j in 0..f {
                        let k = i * f + j;
                        dx[k] =
                            g[j] * cache.inv_std[j] / nf * (nf * dy[k] - sum_dy[j] - cache.xhat[k] * sum_dy_xhat[j]);
                    }
                }
            }
        }
        Tensor::new(vec![n, f], dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn state(&self) -> Vec<&Tensor> {
        vec![&self.gamma.value, &self.beta.value, &self.running_mean, &self.running_var]
    }

    fn state_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.gamma.value, &mut self.beta.value, &mut self.running_mean, &mut self.running_var]
    }

    fn boxed_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

/// Layer normalisation over the last axis, for tensors of any rank.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    name: String,
    features: usize,
    eps: f64,
    gamma: Param,
    beta: Param,
    cache: Option<(Vec<usize>, Vec<f64>, Vec<f64>)>,
}

impl LayerNorm {
    pub fn new(name: &str, features: usize, eps: f64) -> Self {
        LayerNorm {
            name: name.to_owned(),
            features,
            eps,
            gamma: Param::new(Tensor::full(&[features], 1.0)),
            beta: Param::new(Tensor::zeros(&[features])),
            cache: None,
        }
    }

    fn run(&self, input: &Tensor) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
        let f = self.features;
        if input.shape().last() != Some(&f) {
            return Err(NnError::shape(&self.name, format!("(..., {f})"), input.shape()));
        }
        let rows = input.len() / f;
        let x = input.data();
        let (g, b) = (self.gamma.value.data(), self.beta.value.data());
        let mut xhat = vec![0.0; rows * f];
        let mut inv_std = vec![0.0; rows];
        let mut y = vec![0.0; rows * f];
        for r in 0..rows {
            let row = &x[r * f..(r + 1) * f];
            let mean = row.iter().sum::<f64>() / f as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / f as f64;
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std[r] = is;
            for j in 0..f {
                let h = (row[j] - mean) * is;
                xhat[r * f + j] = h;
                y[r * f + j] = g[j] * h + b[j];
            }
        }
        Ok((Tensor::new(input.shape().to_vec(), y)?, xhat, inv_std))
    }
}

impl Layer for LayerNorm {
    fn kind(&self) -> LayerKind {
        LayerKind::LayerNorm
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, input: &Tensor, _ctx: &mut Ctx<'_>) -> Result<Tensor> {
        let (y, xhat, inv_std) = self.run(input)?;
        self.cache = Some((input.shape().to_vec(), xhat, inv_std));
        Ok(y)
    }

    fn infer(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.run(input)?.0)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let (shape, xhat, inv_std) = self.cache.as_ref().ok_or_else(|| NnError::not_forwarded(&self.name))?;
        if grad_output.shape() != shape.as_slice() {
            return Err(NnError::shape(&self.name, format!("gradient {shape:?}"), grad_output.shape()));
        }
        let f = self.features;
        let rows = xhat.len() / f;
        let dy = grad_output.data();
        let g = self.gamma.value.data().to_vec();
        let mut dx = vec![0.0; rows * f];
        let ff = f as f64;
        for r in 0..rows {
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for j in 0..f {
                let k = r * f + j;
                let dh = dy[k] * g[j];
                s1 += dh;
                s2 += dh * xhat[k];
                self.gamma.grad.data_mut()[j] += dy[k] * xhat[k];
                self.beta.grad.data_mut()[j] += dy[k];
            }
            for j in 0..f {
                let k = r * f + j;
                let dh = dy[k] * g[j];
                dx[k] = inv_std[r] / ff * (ff * dh - s1 - xhat[k] * s2);
            }
        }
        Tensor::new(shape.clone(), dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn boxed_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}
