use crate::error::{NnError, Result};
use crate::layer::{Ctx, Layer, LayerKind, Mode};
use crate::tensor::Tensor;

/// Inverted dropout: survivors are scaled by `1/(1-p)` at train time so
/// eval mode is the identity.
#[derive(Clone, Debug)]
pub struct Dropout {
    name: String,
    p: f64,
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(name: &str, p: f64) -> Self {
        assert!((0.0..1.0).contains(&p), "dropout probability must be in [0, 1)");
        Dropout { name: name.to_owned(), p, mask: None }
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

impl Layer for Dropout {
    fn kind(&self) -> LayerKind {
        LayerKind::Dropout
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, input: &Tensor, ctx: &mut Ctx<'_>) -> Result<Tensor> {
        let mask: Vec<f64> = match ctx.mode {
            Mode::Eval => vec![1.0; input.len()],
            Mode::Train => {
                let keep = 1.0 / (1.0 - self.p);
                (0..input.len()).map(|_| if ctx.rng.next_f64() < self.p { 0.0 } else { keep }).collect()
            }
        };
        let data = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        self.mask = Some(mask);
        Tensor::new(input.shape().to_vec(), data)
    }

    fn infer(&self, input: &Tensor) -> Result<Tensor> {
        Ok(input.clone())
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let mask = self.mask.as_ref().ok_or_else(|| NnError::not_forwarded(&self.name))?;
        if mask.len() != grad_output.len() {
            return Err(NnError::shape(&self.name, "gradient matching the last forward", grad_output.shape()));
        }
        let data = grad_output.data().iter().zip(mask).map(|(g, m)| g * m).collect();
        Tensor::new(grad_output.shape().to_vec(), data)
    }

    fn boxed_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}
