use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::layer::Param;
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[serde(rename = "adamw")]
    AdamW {
        weight_decay: f64,
    },
}

/// Optimizer with per-parameter moments (AdamW) and a step counter.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    beta1_pow: f64,
    beta2_pow: f64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer { kind, lr, step: 0, m: Vec::new(), v: Vec::new(), beta1_pow: 1.0, beta2_pow: 1.0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step(&mut self, mut params: Vec<&mut Param>) -> Result<()> {
        for p in &params {
            if p.value.shape() != p.grad.shape() {
                return Err(NnError::Optimizer(format!(
                    "gradient shape {:?} differs from parameter shape {:?}",
                    p.grad.shape(),
                    p.value.shape()
                )));
            }
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for p in params.iter_mut() {
                    let Param { value, grad } = &mut **p;
                    value.data_mut().iter_mut().zip(grad.data()).for_each(|(t, g)| *t -= self.lr * g);
                }
            }
            OptimizerKind::AdamW { weight_decay } => {
                if self.m.is_empty() {
                    self.m = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
                    self.v = self.m.clone();
                }
                if self.m.len() != params.len() || self.m.iter().zip(&params).any(|(m, p)| m.shape() != p.value.shape())
                {
                    return Err(NnError::Optimizer("moment shapes do not match the parameters".into()));
                }
                self.beta1_pow *= ADAM_BETA1;
                self.beta2_pow *= ADAM_BETA2;
                let (c1, c2) = (1.0 - self.beta1_pow, 1.0 - self.beta2_pow);
                for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
                    let Param { value, grad } = &mut **p;
                    let it = value.data_mut().iter_mut().zip(grad.data()).zip(m.data_mut()).zip(v.data_mut());
                    for (((t, &g), m), v) in it {
                        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                        let mhat = *m / c1;
                        let vhat = *v / c2;
                        *t -= self.lr * weight_decay * *t;
                        *t -= self.lr * mhat / (vhat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
        Ok(())
    }
}
