//! Early fusion (concatenated member embeddings into a trained head) and
//! late fusion (mean of member probabilities).

use serde::{Deserialize, Serialize};

use palsyfuse_nn::rng::derive_seed;
use palsyfuse_nn::{Init, LayerSpec, NamedLayer, Network, NetworkSpec, Tensor};

use crate::datamodel::BinaryLabel;
use crate::error::{PalsyError, Result};
use crate::models::{
    embed, fit, infer_chunks, predict_proba, Control, EpochLog, Inputs, Modality, TrainedModel, TrainingPlan, BN_EPS,
    BN_MOMENTUM, LEAKY_ALPHA,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Early,
    Late,
}

pub const HEAD_WIDTHS: [usize; 3] = [256, 64, 16];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionSpec {
    pub name: String,
    pub mode: FusionMode,
    pub members: Vec<String>,
    /// Head learning rate; defaults by member pairing.
    #[serde(default)]
    pub lr: Option<f64>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
}

fn default_batch() -> usize {
    128
}

fn default_epochs() -> usize {
    100
}

fn default_patience() -> usize {
    3
}

impl FusionSpec {
    pub fn new(name: &str, mode: FusionMode, a: &str, b: &str) -> Self {
        FusionSpec {
            name: name.into(),
            mode,
            members: vec![a.into(), b.into()],
            lr: None,
            batch_size: default_batch(),
            max_epochs: default_epochs(),
            patience: default_patience(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.members.len() != 2 {
            return Err(PalsyError::Config(format!(
                "fusion `{}` needs exactly 2 members, got {}",
                self.name,
                self.members.len()
            )));
        }
        if self.members[0] == self.members[1] {
            return Err(PalsyError::Config(format!("fusion `{}` lists `{}` twice", self.name, self.members[0])));
        }
        if self.mode == FusionMode::Early {
            self.plan(Modality::Handcrafted, Modality::Rgb, 0).validate()?;
        }
        Ok(())
    }

    /// Head training plan; 0.001 when a line-segment model takes part,
    /// 0.01 otherwise.
    pub fn plan(&self, a: Modality, b: Modality, seed: u64) -> TrainingPlan {
        let default_lr = if a == Modality::Bnw || b == Modality::Bnw { 0.001 } else { 0.01 };
        TrainingPlan {
            patience: Some(self.patience),
            seed,
            ..TrainingPlan::sgd(self.lr.unwrap_or(default_lr), self.batch_size, self.max_epochs)
        }
    }
}

/// `input → 256 → 64 → 16 → 1`, BatchNorm and LeakyReLU after each hidden
/// linear.
pub fn fusion_head_spec(input: usize) -> NetworkSpec {
    let mut layers = Vec::new();
    let mut a = input;
    for (i, &b) in HEAD_WIDTHS.iter().enumerate() {
        let k = i + 1;
        layers
            .push(NamedLayer::new(format!("fc{k}"), LayerSpec::Linear { inputs: a, outputs: b, init: Init::Kaiming }));
        layers.push(NamedLayer::new(
            format!("bn{k}"),
            LayerSpec::BatchNorm1d { features: b, eps: BN_EPS, momentum: BN_MOMENTUM },
        ));
        layers.push(NamedLayer::new(format!("act{k}"), LayerSpec::LeakyRelu { alpha: LEAKY_ALPHA }));
        a = b;
    }
    layers.push(NamedLayer::new("out", LayerSpec::Linear { inputs: a, outputs: 1, init: Init::Xavier }));
    layers.push(NamedLayer::new("sigmoid", LayerSpec::Sigmoid));
    NetworkSpec { input: vec![input], layers, tap: format!("act{}", HEAD_WIDTHS.len()) }
}

#[derive(Clone, Debug)]
pub struct EarlyFusion {
    pub spec: FusionSpec,
    pub widths: (usize, usize),
    pub head: Network,
    pub log: Vec<EpochLog>,
}

fn check_members(spec: &FusionSpec, a: &TrainedModel, b: &TrainedModel) -> Result<()> {
    spec.validate()?;
    if spec.members[0] != a.spec.name || spec.members[1] != b.spec.name {
        return Err(PalsyError::Config(format!(
            "fusion `{}` expects members {:?}, got `{}` and `{}`",
            spec.name, spec.members, a.spec.name, b.spec.name
        )));
    }
    Ok(())
}

/// Train the early-fusion head on frozen member embeddings. The members
/// are only read.
pub fn early_fuse_train(
    spec: &FusionSpec,
    a: &TrainedModel,
    b: &TrainedModel,
    inputs_a: &Inputs,
    inputs_b: &Inputs,
    labels: &[f64],
    seed: u64,
) -> Result<EarlyFusion> {
    early_fuse_train_with(spec, a, b, inputs_a, inputs_b, labels, seed, |_, _| Control::Continue)
}

#[allow(clippy::too_many_arguments)]
pub fn early_fuse_train_with(
    spec: &FusionSpec,
    a: &TrainedModel,
    b: &TrainedModel,
    inputs_a: &Inputs,
    inputs_b: &Inputs,
    labels: &[f64],
    seed: u64,
    on_epoch: impl FnMut(&EpochLog, &Network) -> Control,
) -> Result<EarlyFusion> {
    check_members(spec, a, b)?;
    if spec.mode != FusionMode::Early {
        return Err(PalsyError::Config(format!("fusion `{}` is not an early fusion", spec.name)));
    }
    let x = concat_embeddings(a, b, inputs_a, inputs_b)?;
    let widths = (a.spec.embedding_width()?, b.spec.embedding_width()?);
    let head_spec = fusion_head_spec(widths.0 + widths.1);
    let mut head = head_spec.build(derive_seed(seed, &[1]))?;
    let plan = spec.plan(a.spec.modality, b.spec.modality, seed);
    let log = fit(&mut head, &plan, &x, labels, on_epoch)?;
    Ok(EarlyFusion { spec: spec.clone(), widths, head, log })
}

fn concat_embeddings(a: &TrainedModel, b: &TrainedModel, inputs_a: &Inputs, inputs_b: &Inputs) -> Result<Tensor> {
    if inputs_a.len() != inputs_b.len() {
        return Err(PalsyError::Invalid(format!(
            "member inputs cover {} and {} samples",
            inputs_a.len(),
            inputs_b.len()
        )));
    }
    let ea = embed(a, inputs_a)?;
    let eb = embed(b, inputs_b)?;
    Ok(Tensor::concat_cols(&ea, &eb)?)
}

impl EarlyFusion {
    /// Head probabilities for already-extracted member embeddings.
    pub fn predict_embeddings(&self, ea: &Tensor, eb: &Tensor) -> Result<Vec<f64>> {
        let (wa, wb) = (ea.len() / ea.batch().max(1), eb.len() / eb.batch().max(1));
        if (wa, wb) != self.widths && ea.batch() > 0 {
            return Err(PalsyError::Invalid(format!(
                "embedding widths ({wa}, {wb}) do not match the head's {:?}",
                self.widths
            )));
        }
        let x = Tensor::concat_cols(ea, eb)?;
        if x.batch() == 0 {
            return Ok(Vec::new());
        }
        Ok(infer_chunks(&self.head, &x, Network::infer)?.into_data())
    }

    pub fn predict(
        &self,
        a: &TrainedModel,
        b: &TrainedModel,
        inputs_a: &Inputs,
        inputs_b: &Inputs,
    ) -> Result<Vec<f64>> {
        check_members(&self.spec, a, b)?;
        if inputs_a.len() != inputs_b.len() {
            return Err(PalsyError::Invalid("member inputs differ in length".into()));
        }
        self.predict_embeddings(&embed(a, inputs_a)?, &embed(b, inputs_b)?)
    }
}

/// Mean probability per sample and its label; ties at 0.5 are Palsy.
pub fn late_fuse(pa: &[f64], pb: &[f64]) -> Result<Vec<(f64, BinaryLabel)>> {
    if pa.len() != pb.len() {
        return Err(PalsyError::Invalid(format!(
            "late fusion over different frame sets ({} vs {} predictions)",
            pa.len(),
            pb.len()
        )));
    }
    Ok(pa
        .iter()
        .zip(pb)
        .map(|(a, b)| {
            let p = (a + b) / 2.0;
            (p, BinaryLabel::from_probability(p))
        })
        .collect())
}

pub fn late_fuse_predict(
    a: &TrainedModel,
    b: &TrainedModel,
    inputs_a: &Inputs,
    inputs_b: &Inputs,
) -> Result<Vec<(f64, BinaryLabel)>> {
    late_fuse(&predict_proba(a, inputs_a)?, &predict_proba(b, inputs_b)?)
}
