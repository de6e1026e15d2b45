//! MLP-Mixer building blocks: patch embedding, token mixing and channel
//! mixing. Token tensors have shape `(N, S, C)`.

use crate::error::{NnError, Result};
use crate::gemm::{gemm, MatRef};
use crate::init::Init;
use crate::layer::{Ctx, Layer, LayerKind, Param};
use crate::layers::activation::{gelu, gelu_grad};
use crate::layers::linear::{affine, affine_backward};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Split `(N, C, H, W)` images into non-overlapping `patch × patch` tiles.
///
/// Returns `(N, S, C·patch·patch)` with tiles in row-major grid order and
/// each tile flattened as `(channel, row, col)`.
pub fn extract_patches(images: &Tensor, patch: usize) -> Result<Tensor> {
    let bad =
        || NnError::shape("patch_extract", format!("(N, C, H, W) with H, W divisible by {patch}"), images.shape());
    if images.rank() != 4 || patch == 0 {
        return Err(bad());
    }
    let (n, c, h, w) = (images.dim(0), images.dim(1), images.dim(2), images.dim(3));
    if h % patch != 0 || w % patch != 0 {
        return Err(bad());
    }
    let (gh, gw) = (h / patch, w / patch);
    let pd = c * patch * patch;
    let src = images.data();
    let mut out = vec![0.0; n * gh * gw * pd];
    for b in 0..n {
        for gy in 0..gh {
            for gx in 0..gw {
                let base = ((b * gh + gy) * gw + gx) * pd;
                for ch in 0..c {
                    for py in 0..patch {
                        let row = ((b * c + ch) * h + gy * patch + py) * w + gx * patch;
                        let dst = base + (ch * patch + py) * patch;
                        out[dst..dst + patch].copy_from_slice(&src[row..row + patch]);
                    }
                }
            }
        }
    }
    Tensor::new(vec![n, gh * gw, pd], out)
}

/// Inverse of [`extract_patches`].
pub fn reconstruct_patches(
    patches: &Tensor,
    channels: usize,
    height: usize,
    width: usize,
    patch: usize,
) -> Result<Tensor> {
    let bad = || NnError::shape("patch_reconstruct", "(N, S, C·P·P) matching the image geometry", patches.shape());
    if patches.rank() != 3 || patch == 0 || !height.is_multiple_of(patch) || !width.is_multiple_of(patch) {
        return Err(bad());
    }
    let (gh, gw) = (height / patch, width / patch);
    let pd = channels * patch * patch;
    if patches.dim(1) != gh * gw || patches.dim(2) != pd {
        return Err(bad());
    }
    let n = patches.dim(0);
    let src = patches.data();
    let mut out = vec![0.0; n * channels * height * width];
    for b in 0..n {
        for gy in 0..gh {
            for gx in 0..gw {
                let base = ((b * gh + gy) * gw + gx) * pd;
                for ch in 0..channels {
                    for py in 0..patch {
                        let row = ((b * channels + ch) * height + gy * patch + py) * width + gx * patch;
                        let s = base + (ch * patch + py) * patch;
                        out[row..row + patch].copy_from_slice(&src[s..s + patch]);
                    }
                }
            }
        }
    }
    Tensor::new(vec![n, channels, height, width], out)
}

/// Shared linear projection of every patch to a `dim`-wide token.
#[derive(Clone, Debug)]
pub struct PatchEmbed {
    name: String,
    image_size: usize,
    channels: usize,
    patch: usize,
    dim: usize,
    weight: Param,
    bias: Param,
    cache: Option<Tensor>,
}

impl PatchEmbed {
    pub fn new(name: &str, image_size: usize, channels: usize, patch: usize, dim: usize, rng: &mut Rng) -> Self {
        let pd = channels * patch * patch;
        PatchEmbed {
            name: name.to_owned(),
            image_size,
            channels,
            patch,
            dim,
            weight: Param::new(Init::Xavier.sample(&[pd, dim], pd, dim, rng)),
            bias: Param::new(Tensor::zeros(&[dim])),
            cache: None,
        }
    }

    fn patches(&self, input: &Tensor) -> Result<Tensor> {
        let s = self.image_size;
        if input.rank() != 4 || input.sample_shape() != [self.channels, s, s] {
            return Err(NnError::shape(&self.name, format!("(N, {}, {s}, {s})", self.channels), input.shape()));
        }
        extract_patches(input, self.patch)
    }

    fn project(&self, patches: &Tensor) -> Result<Tensor> {
        let (n, tokens) = (patches.dim(0), patches.dim(1));
        let y = affine(patches.data(), n * tokens, &self.weight.value, &self.bias.value);
        Tensor::new(vec![n, tokens, self.dim], y)
    }
}

impl Layer for PatchEmbed {
    fn kind(&self) -> LayerKind {
        LayerKind::PatchEmbed
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, input: &Tensor, _ctx: &mut Ctx<'_>) -> Result<Tensor> {
        let p = self.patches(input)?;
        let y = self.project(&p)?;
        self.cache = Some(p);
        Ok(y)
    }

    fn infer(&self, input: &Tensor) -> Result<Tensor> {
        self.project(&self.patches(input)?)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let p = self.cache.as_ref().ok_or_else(|| NnError::not_forwarded(&self.name))?;
        let (n, tokens) = (p.dim(0), p.dim(1));
        if grad_output.shape() != [n, tokens, self.dim] {
            return Err(NnError::shape(
                &self.name,
                format!("gradient ({n}, {tokens}, {})", self.dim),
                grad_output.shape(),
            ));
        }
        let dp = affine_backward(
            p.data(),
            grad_output.data(),
            n * tokens,
            &self.weight.value,
            &mut self.weight.grad,
            &mut self.bias.grad,
        );
        let dp = Tensor::new(p.shape().to_vec(), dp)?;
        reconstruct_patches(&dp, self.channels, self.image_size, self.image_size, self.patch)
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

/// Token-mixing MLP: for each sample and channel, `S → hidden → S` with GELU.
///
/// Weights act from the left on the `(S, C)` sample matrix, so the same MLP
/// is shared by every channel.
#[derive(Clone, Debug)]
pub struct TokenMix {
    name: String,
    tokens: usize,
    hidden: usize,
    w1: Param,
    b1: Param,
    w2: Param,
    b2: Param,
    cache: Option<(Tensor, Vec<f64>)>,
}

impl TokenMix {
    pub fn new(name: &str, tokens: usize, hidden: usize, rng: &mut Rng) -> Self {
        TokenMix {
            name: name.to_owned(),
            tokens,
            hidden,
            w1: Param::new(Init::Xavier.sample(&[hidden, tokens], tokens, hidden, rng)),
            b1: Param::new(Tensor::zeros(&[hidden])),
            w2: Param::new(Init::Xavier.sample(&[tokens, hidden], hidden, tokens, rng)),
            b2: Param::new(Tensor::zeros(&[tokens])),
            cache: None,
        }
    }

    fn check(&self, input: &Tensor) -> Result<(usize, usize)> {
        if input.rank() != 3 || input.dim(1) != self.tokens {
            return Err(NnError::shape(&self.name, format!("(N, {}, C)", self.tokens), input.shape()));
        }
        Ok((input.dim(0), input.dim(2)))
    }

    /// Returns the output and the pre-activation hidden values `(N, hidden, C)`.
    fn run(&self, input: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        let (n, c) = self.check(input)?;
        let (s, hd) = (self.tokens, self.hidden);
        let x = input.data();
        let mut pre = vec![0.0; n * hd * c];
        let mut out = vec![0.0; n * s * c];
        let mut act = vec![0.0; hd * c];
        for b in 0..n {
            let xb = &x[b * s * c..(b + 1) * s * c];
            let hb = &mut pre[b * hd * c..(b + 1) * hd * c];
            for (r, row) in hb.chunks_mut(c).enumerate() {
                row.fill(self.b1.value.data()[r]);
            }
            gemm(MatRef::new(self.w1.value.data(), hd, s), MatRef::new(xb, s, c), hb, true);
            for (a, &p) in act.iter_mut().zip(hb.iter()) {
                *a = gelu(p);
            }
            let yb = &mut out[b * s * c..(b + 1) * s * c];
            for (r, row) in yb.chunks_mut(c).enumerate() {
                row.fill(self.b2.value.data()[r]);
            }
            gemm(MatRef::new(self.w2.value.data(), s, hd), MatRef::new(&act, hd, c), yb, true);
        }
        Ok((Tensor::new(vec![n, s, c], out)?, pre))
    }
}

impl Layer for TokenMix {
    fn kind(&self) -> LayerKind {
        LayerKind::TokenMix
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, input: &Tensor, _ctx: &mut Ctx<'_>) -> Result<Tensor> {
        let (y, pre) = self.run(input)?;
        self.cache = Some((input.clone(), pre));
        Ok(y)
    }

    fn infer(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.run(input)?.0)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let (x, pre) = self.cache.as_ref().ok_or_else(|| NnError::not_forwarded(&self.name))?;
        if grad_output.shape() != x.shape() {
            return Err(NnError::shape(&self.name, format!("gradient {:?}", x.shape()), grad_output.shape()));
        }
        let (n, s, c) = (x.dim(0), self.tokens, x.dim(2));
        let hd = self.hidden;
        let (xd, dy) = (x.data(), grad_output.data());
        let mut dx = vec![0.0; n * s * c];
        let mut act = vec![0.0; hd * c];
        let mut dh = vec![0.0; hd * c];
        for b in 0..n {
            let xb = &xd[b * s * c..(b + 1) * s * c];
            let dyb = &dy[b * s * c..(b + 1) * s * c];
            let pb = &pre[b * hd * c..(b + 1) * hd * c];
            for (a, &p) in act.iter_mut().zip(pb) {
                *a = gelu(p);
            }
            // dW2 += dY · Hᵀ ; db2 += rowsum(dY)
            gemm(MatRef::new(dyb, s, c), MatRef::new(&act, hd, c).t(), self.w2.grad.data_mut(), true);
            for (r, row) in dyb.chunks(c).enumerate() {
                self.b2.grad.data_mut()[r] += row.iter().sum::<f64>();
            }
            // dH = W2ᵀ · dY, then through GELU
            gemm(MatRef::new(self.w2.value.data(), s, hd).t(), MatRef::new(dyb, s, c), &mut dh, false);
            for (d, &p) in dh.iter_mut().zip(pb) {
                *d *= gelu_grad(p);
            }
            gemm(MatRef::new(&dh, hd, c), MatRef::new(xb, s, c).t(), self.w1.grad.data_mut(), true);
            for (r, row) in dh.chunks(c).enumerate() {
                self.b1.grad.data_mut()[r] += row.iter().sum::<f64>();
            }
            gemm(
                MatRef::new(self.w1.value.data(), hd, s).t(),
                MatRef::new(&dh, hd, c),
                &mut dx[b * s * c..(b + 1) * s * c],
                false,
            );
        }
        Tensor::new(x.shape().to_vec(), dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn boxed_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

/// Channel-mixing MLP: every token independently goes `C → hidden → C`
/// with GELU.
#[derive(Clone, Debug)]
pub struct ChannelMix {
    name: String,
    dim: usize,
    w1: Param,
    b1: Param,
    w2: Param,
    b2: Param,
    cache: Option<(Tensor, Vec<f64>)>,
}

impl ChannelMix {
    pub fn new(name: &str, dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        ChannelMix {
            name: name.to_owned(),
            dim,
            w1: Param::new(Init::Xavier.sample(&[dim, hidden], dim, hidden, rng)),
            b1: Param::new(Tensor::zeros(&[hidden])),
            w2: Param::new(Init::Xavier.sample(&[hidden, dim], hidden, dim, rng)),
            b2: Param::new(Tensor::zeros(&[dim])),
            cache: None,
        }
    }

    fn run(&self, input: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        if input.rank() != 3 || input.dim(2) != self.dim {
            return Err(NnError::shape(&self.name, format!("(N, S, {})", self.dim), input.shape()));
        }
        let rows = input.dim(0) * input.dim(1);
        let pre = affine(input.data(), rows, &self.w1.value, &self.b1.value);
        let act: Vec<f64> = pre.iter().map(|&p| gelu(p)).collect();
        let y = affine(&act, rows, &self.w2.value, &self.b2.value);
        Ok((Tensor::new(input.shape().to_vec(), y)?, pre))
    }
}

impl Layer for ChannelMix {
    fn kind(&self) -> LayerKind {
        LayerKind::ChannelMix
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, input: &Tensor, _ctx: &mut Ctx<'_>) -> Result<Tensor> {
        let (y, pre) = self.run(input)?;
        self.cache = Some((input.clone(), pre));
        Ok(y)
    }

    fn infer(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.run(input)?.0)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let (x, pre) = self.cache.as_ref().ok_or_else(|| NnError::not_forwarded(&self.name))?;
        if grad_output.shape() != x.shape() {
            return Err(NnError::shape(&self.name, format!("gradient {:?}", x.shape()), grad_output.shape()));
        }
        let rows = x.dim(0) * x.dim(1);
        let act: Vec<f64> = pre.iter().map(|&p| gelu(p)).collect();
        let mut dh =
            affine_backward(&act, grad_output.data(), rows, &self.w2.value, &mut self.w2.grad, &mut self.b2.grad);
        for (d, &p) in dh.iter_mut().zip(pre) {
            *d *= gelu_grad(p);
        }
        let dx = affine_backward(x.data(), &dh, rows, &self.w1.value, &mut self.w1.grad, &mut self.b1.grad);
        Tensor::new(x.shape().to_vec(), dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn boxed_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}
