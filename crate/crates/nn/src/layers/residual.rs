use crate::error::{NnError, Result};
use crate::layer::{Ctx, Layer, LayerKind, Param};
use crate::tensor::Tensor;

/// `y = shortcut(x) + block(x)`, where a missing shortcut is the identity.
#[derive(Clone, Debug)]
pub struct Residual {
    name: String,
    block: Vec<Box<dyn Layer>>,
    shortcut: Option<Box<dyn Layer>>,
}

impl Residual {
    pub fn new(name: &str, block: Vec<Box<dyn Layer>>, shortcut: Option<Box<dyn Layer>>) -> Self {
        Residual { name: name.to_owned(), block, shortcut }
    }

    pub fn block(&self) -> &[Box<dyn Layer>] {
        &self.block
    }

    pub fn block_mut(&mut self) -> &mut [Box<dyn Layer>] {
        &mut self.block
    }

    fn join(&self, mut a: Tensor, b: &Tensor) -> Result<Tensor> {
        if a.shape() != b.shape() {
            return Err(NnError::shape(
                &self.name,
                format!("block output {:?} matching shortcut", a.shape()),
                b.shape(),
            ));
        }
        a.add_assign(b)?;
        Ok(a)
    }
}

impl Layer for Residual {
    fn kind(&self) -> LayerKind {
        LayerKind::Residual
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, input: &Tensor, ctx: &mut Ctx<'_>) -> Result<Tensor> {
        let mut h = input.clone();
        for layer in &mut self.block {
            h = layer.forward(&h, ctx)?;
        }
        let skip = match &mut self.shortcut {
            Some(s) => s.forward(input, ctx)?,
            None => input.clone(),
        };
        self.join(skip, &h)
    }

    fn infer(&self, input: &Tensor) -> Result<Tensor> {
        let mut h = input.clone();
        for layer in &self.block {
            h = layer.infer(&h)?;
        }
        let skip = match &self.shortcut {
            Some(s) => s.infer(input)?,
            None => input.clone(),
        };
        self.join(skip, &h)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let mut g = grad_output.clone();
        for layer in self.block.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        let skip = match &mut self.shortcut {
            Some(s) => s.backward(grad_output)?,
            None => grad_output.clone(),
        };
        self.join(skip, &g)
    }

    fn params(&self) -> Vec<&Param> {
        self.children().into_iter().flat_map(|c| c.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.children_mut().into_iter().flat_map(|c| c.params_mut()).collect()
    }

    fn state(&self) -> Vec<&Tensor> {
        Vec::new()
    }

    fn state_mut(&mut self) -> Vec<&mut Tensor> {
        Vec::new()
    }

    fn children(&self) -> Vec<&dyn Layer> {
        let mut out: Vec<&dyn Layer> = self.block.iter().map(|l| l.as_ref()).collect();
        if let Some(s) = &self.shortcut {
            out.push(s.as_ref());
        }
        out
    }

    fn children_mut(&mut self) -> Vec<&mut dyn Layer> {
        let mut out: Vec<&mut dyn Layer> = Vec::new();
        for l in &mut self.block {
            out.push(l.as_mut());
        }
        if let Some(s) = &mut self.shortcut {
            out.push(s.as_mut());
        }
        out
    }

    fn boxed_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}
