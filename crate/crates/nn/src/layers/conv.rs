use crate::error::{NnError, Result};
use crate::gemm::{gemm, MatRef};
use crate::init::Init;
use crate::layer::{Ctx, Layer, LayerKind, Param};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// 2-D convolution over `(N, C, H, W)` with square kernels, zero padding.
///
/// Weight layout is `(out_channels, in_channels·k·k)` with the inner axis
/// ordered `(channel, ky, kx)`.
#[derive(Clone, Debug)]
pub struct Conv2d {
    name: String,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    weight: Param,
    bias: Param,
    cache: Option<Tensor>,
}

struct Geometry {
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        init: Init,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let fan_out = out_channels * kernel * kernel;
        Conv2d {
            name: name.to_owned(),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: Param::new(init.sample(&[out_channels, fan_in], fan_in, fan_out, rng)),
            bias: Param::new(Tensor::zeros(&[out_channels])),
            cache: None,
        }
    }

    pub fn output_size(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
        (size + 2 * padding).checked_sub(kernel).map(|d| d / stride + 1)
    }

    pub fn weight_mut(&mut self) -> &mut Tensor {
        &mut self.weight.value
    }

    pub fn bias_mut(&mut self) -> &mut Tensor {
        &mut self.bias.value
    }

    fn geometry(&self, input: &Tensor) -> Result<Geometry> {
        let err = || NnError::shape(&self.name, format!("(N, {}, H, W)", self.in_channels), input.shape());
        if input.rank() != 4 || input.dim(1) != self.in_channels {
            return Err(err());
        }
        let (h, w) = (input.dim(2), input.dim(3));
        let ho = Self::output_size(h, self.kernel, self.stride, self.padding).ok_or_else(err)?;
        let wo = Self::output_size(w, self.kernel, self.stride, self.padding).ok_or_else(err)?;
        Ok(Geometry { h, w, ho, wo })
    }

    fn k_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// `(ho·wo, cin·k·k)` patch matrix for one sample.
    fn im2col(&self, x: &[f64], g: &Geometry, cols: &mut [f64]) {
        let (k, s, p) = (self.kernel, self.stride, self.padding as isize);
        let kl = self.k_len();
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let row = &mut cols[(oy * g.wo + ox) * kl..(oy * g.wo + ox + 1) * kl];
                let mut idx = 0;
                for c in 0..self.in_channels {
                    let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
                    for ky in 0..k {
                        let iy = (oy * s + ky) as isize - p;
                        for kx in 0..k {
                            let ix = (ox * s + kx) as isize - p;
                            row[idx] = if iy >= 0 && ix >= 0 && (iy as usize) < g.h && (ix as usize) < g.w {
                                plane[iy as usize * g.w + ix as usize]
                            } else {
                                0.0
                            };
                            idx += 1;
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], g: &Geometry, dx: &mut [f64]) {
        let (k, s, p) = (self.kernel, self.stride, self.padding as isize);
        let kl = self.k_len();
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let row = &cols[(oy * g.wo + ox) * kl..(oy * g.wo + ox + 1) * kl];
                let mut idx = 0;
                for c in 0..self.in_channels {
                    for ky in 0..k {
                        let iy = (oy * s + ky) as isize - p;
                        for kx in 0..k {
                            let ix = (ox * s + kx) as isize - p;
                            if iy >= 0 && ix >= 0 && (iy as usize) < g.h && (ix as usize) < g.w {
                                dx[(c * g.h + iy as usize) * g.w + ix as usize] += row[idx];
                            }
                            idx += 1;
                        }
                    }
                }
            }
        }
    }
}

impl Layer for Conv2d {
    fn kind(&self) -> LayerKind {
        LayerKind::Conv2d
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, input: &Tensor, _ctx: &mut Ctx<'_>) -> Result<Tensor> {
        let y = self.infer(input)?;
        self.cache = Some(input.clone());
        Ok(y)
    }

    fn infer(&self, input: &Tensor) -> Result<Tensor> {
        let g = self.geometry(input)?;
        let n = input.dim(0);
        let (kl, co, hw) = (self.k_len(), self.out_channels, g.ho * g.wo);
        let in_len = self.in_channels * g.h * g.w;
        let mut cols = vec![0.0; hw * kl];
        let mut yt = vec![0.0; hw * co];
        let mut out = vec![0.0; n * co * hw];
        let wt = MatRef::new(self.weight.value.data(), co, kl).t();
        for b in 0..n {
            self.im2col(&input.data()[b * in_len..(b + 1) * in_len], &g, &mut cols);
            for row in yt.chunks_mut(co) {
                row.copy_from_slice(self.bias.value.data());
            }
            gemm(MatRef::new(&cols, hw, kl), wt, &mut yt, true);
            let ob = &mut out[b * co * hw..(b + 1) * co * hw];
            for r in 0..hw {
                for c in 0..co {
                    ob[c * hw + r] = yt[r * co + c];
                }
            }
        }
        Tensor::new(vec![n, co, g.ho, g.wo], out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let x = self.cache.as_ref().ok_or_else(|| NnError::not_forwarded(&self.name))?;
        let g = self.geometry(x)?;
        let n = x.dim(0);
        let (kl, co, hw) = (self.k_len(), self.out_channels, g.ho * g.wo);
        if grad_output.shape() != [n, co, g.ho, g.wo] {
            return Err(NnError::shape(
                &self.name,
                format!("gradient ({n}, {co}, {}, {})", g.ho, g.wo),
                grad_output.shape(),
            ));
        }
        let in_len = self.in_channels * g.h * g.w;
        let mut cols = vec![0.0; hw * kl];
        let mut dcols = vec![0.0; hw * kl];
        let mut dwt = vec![0.0; kl * co];
        let mut dx = vec![0.0; n * in_len];
        for b in 0..n {
            let dy = &grad_output.data()[b * co * hw..(b + 1) * co * hw];
            self.im2col(&x.data()[b * in_len..(b + 1) * in_len], &g, &mut cols);
            // dWᵀ (kl × co) += colsᵀ · dYᵀ
            gemm(MatRef::new(&cols, hw, kl).t(), MatRef::new(dy, co, hw).t(), &mut dwt, true);
            for c in 0..co {
                self.bias.grad.data_mut()[c] += dy[c * hw..(c + 1) * hw].iter().sum::<f64>();
            }
            // dcols (hw × kl) = dYᵀ · W
            gemm(MatRef::new(dy, co, hw).t(), MatRef::new(self.weight.value.data(), co, kl), &mut dcols, false);
            self.col2im(&dcols, &g, &mut dx[b * in_len..(b + 1) * in_len]);
        }
        let dw = self.weight.grad.data_mut();
        for c in 0..co {
            for k in 0..kl {
                dw[c * kl + k] += dwt[k * co + c];
            }
        }
        Tensor::new(x.shape().to_vec(), dx)
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

    /// Direct nested-loop convolution.
    fn reference(conv: &Conv2d, x: &Tensor) -> Vec<f64> {
        let (n, ci, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        let (k, s, p) = (conv.kernel, conv.stride, conv.padding as isize);
        let ho = Conv2d::output_size(h, k, s, conv.padding).unwrap();
        let wo = Conv2d::output_size(w, k, s, conv.padding).unwrap();
        let co = conv.out_channels;
        let wt = conv.weight.value.data();
        let mut out = vec![0.0; n * co * ho * wo];
        for b in 0..n {
            for o in 0..co {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = conv.bias.value.data()[o];
                        for c in 0..ci {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * s + ky) as isize - p;
                                    let ix = (ox * s + kx) as isize - p;
                                    if iy < 0 || ix < 0 || iy as usize >= h || ix as usize >= w {
                                        continue;
                                    }
                                    acc += wt[o * ci * k * k + (c * k + ky) * k + kx]
                                        * x.data()[((b * ci + c) * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                        out[((b * co + o) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_direct_convolution() {
        let mut rng = Rng::new(21);
        for &(ci, co, k, s, p, size) in &[(3, 4, 3, 1, 1, 7), (2, 5, 3, 2, 1, 8), (4, 2, 1, 2, 0, 6)] {
            let mut conv = Conv2d::new("c", ci, co, k, s, p, Init::Kaiming, &mut rng);
            conv.bias_mut().data_mut().iter_mut().for_each(|b| *b = rng.normal());
            let x = Tensor::from_fn(&[2, ci, size, size], |_| rng.normal());
            let got = conv.infer(&x).unwrap();
            let want = reference(&conv, &x);
            for (a, b) in got.data().iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
