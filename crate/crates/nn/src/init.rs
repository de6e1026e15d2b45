//! Weight initialisers.

use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Uniform in ±sqrt(6 / fan_in); for layers feeding ReLU-family units.
    Kaiming,
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    Xavier,
}

impl Init {
    pub fn bound(self, fan_in: usize, fan_out: usize) -> f64 {
        match self {
            Init::Kaiming => (6.0 / fan_in as f64).sqrt(),
            Init::Xavier => (6.0 / (fan_in + fan_out) as f64).sqrt(),
        }
    }

    pub fn sample(self, shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
        let b = self.bound(fan_in, fan_out);
        Tensor::from_fn(shape, |_| rng.uniform(-b, b))
    }
}
