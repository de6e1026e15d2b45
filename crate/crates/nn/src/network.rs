use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::layer::{walk, zero_grads, Ctx, Layer, LayerKind, Param};
use crate::rng::Rng;
use crate::spec::NamedLayer;
use crate::tensor::Tensor;

/// A sequential plan with a named embedding tap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Per-sample input shape.
    pub input: Vec<usize>,
    pub layers: Vec<NamedLayer>,
    /// Top-level layer whose output is the embedding.
    pub tap: String,
}

impl NetworkSpec {
    /// Checks the dimension chain, layer names and tap; returns the output shape.
    pub fn validate(&self) -> Result<Vec<usize>> {
        if self.layers.is_empty() {
            return Err(NnError::Plan("network has no layers".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &self.layers {
            if !seen.insert(l.name.as_str()) {
                return Err(NnError::Plan(format!("duplicate layer name `{}`", l.name)));
            }
        }
        self.tap_index()?;
        let mut shape = self.input.clone();
        for l in &self.layers {
            shape = l.output_shape(&shape)?;
        }
        Ok(shape)
    }

    pub fn tap_index(&self) -> Result<usize> {
        self.layers
            .iter()
            .position(|l| l.name == self.tap)
            .ok_or_else(|| NnError::Plan(format!("embedding tap `{}` names no layer", self.tap)))
    }

    /// Per-sample shape at the tap.
    pub fn tap_shape(&self) -> Result<Vec<usize>> {
        let idx = self.tap_index()?;
        let mut shape = self.input.clone();
        for l in &self.layers[..=idx] {
            shape = l.output_shape(&shape)?;
        }
        Ok(shape)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(NamedLayer::param_count).sum()
    }

    /// Validate, then instantiate with weights drawn from `seed`.
    pub fn build(&self, seed: u64) -> Result<Network> {
        self.validate()?;
        let mut rng = Rng::new(seed);
        let layers = self.layers.iter().map(|l| l.build(&mut rng)).collect();
        Ok(Network { spec: self.clone(), layers, tap: self.tap_index()? })
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Box<dyn Layer>>,
    tap: usize,
}

impl Network {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Box<dyn Layer>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Box<dyn Layer>] {
        &mut self.layers
    }

    /// Every layer, nested ones included, in pre-order.
    pub fn all_layers(&self) -> Vec<&dyn Layer> {
        let mut out = Vec::new();
        for l in &self.layers {
            walk(l.as_ref(), &mut out);
        }
        out
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.rank() != self.spec.input.len() + 1 || x.sample_shape() != self.spec.input.as_slice() {
            let name = self.layers[0].name();
            return Err(NnError::shape(name, format!("(N, {:?})", self.spec.input), x.shape()));
        }
        Ok(())
    }

    pub fn forward(&mut self, x: &Tensor, ctx: &mut Ctx<'_>) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h, ctx)?;
        }
        Ok(h)
    }

    /// Eval-mode forward without touching any cache.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.infer_until(x, self.layers.len())
    }

    /// Eval-mode activation at the embedding tap.
    pub fn embed(&self, x: &Tensor) -> Result<Tensor> {
        self.infer_until(x, self.tap + 1)
    }

    fn infer_until(&self, x: &Tensor, end: usize) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for l in &self.layers[..end] {
            h = l.infer(&h)?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        self.backward_from(self.layers.len(), grad)
    }

    /// Backpropagate `grad`, taken to be `∂L/∂(output of layer end-1)`,
    /// through layers `0..end`.
    pub fn backward_from(&mut self, end: usize, grad: &Tensor) -> Result<Tensor> {
        let mut g = grad.clone();
        for l in self.layers[..end].iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    pub fn ends_with_sigmoid(&self) -> bool {
        self.layers.last().map(|l| l.kind()) == Some(LayerKind::Sigmoid)
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            zero_grads(l.as_mut());
        }
    }

    /// Stable digest over every stored tensor, bit for bit.
    pub fn state_digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for layer in self.all_layers() {
            for t in layer.state() {
                for v in t.data() {
                    for byte in v.to_bits().to_le_bytes() {
                        h ^= u64::from(byte);
                        h = h.wrapping_mul(0x0000_0100_0000_01b3);
                    }
                }
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::Init;
    use crate::spec::LayerSpec;

    fn tiny() -> NetworkSpec {
        NetworkSpec {
            input: vec![3],
            layers: vec![
                NamedLayer::new("fc1", LayerSpec::Linear { inputs: 3, outputs: 4, init: Init::Kaiming }),
                NamedLayer::new("act", LayerSpec::Relu),
                NamedLayer::new("fc2", LayerSpec::Linear { inputs: 4, outputs: 1, init: Init::Xavier }),
                NamedLayer::new("out", LayerSpec::Sigmoid),
            ],
            tap: "act".into(),
        }
    }

    #[test]
    fn shapes_and_tap() {
        let spec = tiny();
        assert_eq!(spec.validate().unwrap(), vec![1]);
        assert_eq!(spec.tap_shape().unwrap(), vec![4]);
        let net = spec.build(5).unwrap();
        let x = Tensor::zeros(&[2, 3]);
        assert_eq!(net.infer(&x).unwrap().shape(), &[2, 1]);
        assert_eq!(net.embed(&x).unwrap().shape(), &[2, 4]);
        assert!(net.ends_with_sigmoid());
    }

    #[test]
    fn unknown_tap_and_broken_chain_are_rejected() {
        let mut spec = tiny();
        spec.tap = "nope".into();
        assert!(spec.validate().is_err());
        let mut spec = tiny();
        spec.input = vec![5];
        let err = spec.validate().unwrap_err().to_string();
        assert!(err.contains("fc1"), "{err}");
    }

    #[test]
    fn wrong_input_names_first_layer() {
        let net = tiny().build(1).unwrap();
        let err = net.infer(&Tensor::zeros(&[2, 7])).unwrap_err().to_string();
        assert!(err.contains("fc1"), "{err}");
    }

    #[test]
    fn same_seed_same_weights() {
        let a = tiny().build(9).unwrap();
        let b = tiny().build(9).unwrap();
        let c = tiny().build(10).unwrap();
        assert_eq!(a.state_digest(), b.state_digest());
        assert_ne!(a.state_digest(), c.state_digest());
    }
}
