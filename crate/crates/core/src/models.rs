//! Model zoo, training loop and inference helpers.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use palsyfuse_nn::loss::{bce_logit_grad, bce_loss};
use palsyfuse_nn::rng::{derive_seed, Rng};
use palsyfuse_nn::{Ctx, Init, LayerSpec, NamedLayer, Network, NetworkSpec, Optimizer, OptimizerKind, Tensor};

use crate::error::{PalsyError, Result};

pub const SGD_LR: f64 = 0.2045;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const LN_EPS: f64 = 1e-6;
pub const LEAKY_ALPHA: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Handcrafted,
    Expression,
    Coordinates,
    Rgb,
    Bnw,
}

impl Modality {
    pub const ALL: [Modality; 5] =
        [Modality::Handcrafted, Modality::Expression, Modality::Coordinates, Modality::Rgb, Modality::Bnw];

    pub fn is_image(self) -> bool {
        matches!(self, Modality::Rgb | Modality::Bnw)
    }

    pub fn channels(self) -> usize {
        match self {
            Modality::Rgb => 3,
            _ => 1,
        }
    }

    /// Table label.
    pub fn title(self) -> &'static str {
        match self {
            Modality::Handcrafted => "Handcrafted features",
            Modality::Expression => "Expression features",
            Modality::Coordinates => "Landmark coordinates",
            Modality::Rgb => "RGB images",
            Modality::Bnw => "BnW line segments",
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Modality::Handcrafted => "handcrafted",
            Modality::Expression => "expression",
            Modality::Coordinates => "coordinates",
            Modality::Rgb => "rgb",
            Modality::Bnw => "bnw",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Modality {
    type Err = PalsyError;

    fn from_str(s: &str) -> Result<Self> {
        Modality::ALL.into_iter().find(|m| m.to_string() == s).ok_or_else(|| {
            PalsyError::Config(format!(
                "unknown modality `{s}` (expected handcrafted, expression, coordinates, rgb or bnw)"
            ))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingPlan {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop once the epoch loss fails to improve by more than `1e-6` for
    /// this many consecutive epochs.
    pub patience: Option<usize>,
    pub seed: u64,
}

impl TrainingPlan {
    pub fn sgd(lr: f64, batch_size: usize, max_epochs: usize) -> Self {
        TrainingPlan { optimizer: OptimizerKind::Sgd, lr, batch_size, max_epochs, patience: None, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(PalsyError::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(PalsyError::Config("batch size and epoch count must be positive".into()));
        }
        if self.patience == Some(0) {
            return Err(PalsyError::Config("patience must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub modality: Modality,
    pub network: NetworkSpec,
    pub training: TrainingPlan,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let out = self.network.validate()?;
        if out != [1] {
            return Err(PalsyError::Plan(format!("model `{}` must end in one unit, got {out:?}", self.name)));
        }
        self.training.validate()
    }

    pub fn embedding_width(&self) -> Result<usize> {
        Ok(self.network.tap_shape()?.iter().product())
    }

    pub fn input_len(&self) -> usize {
        self.network.input.iter().product()
    }

    /// Hex SHA-256 of the JSON form.
    pub fn config_hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("spec serializes").as_bytes())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.training.seed = seed;
        self
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn layer(name: impl Into<String>, spec: LayerSpec) -> NamedLayer {
    NamedLayer::new(name, spec)
}

fn linear(name: impl Into<String>, inputs: usize, outputs: usize, init: Init) -> NamedLayer {
    layer(name, LayerSpec::Linear { inputs, outputs, init })
}

fn bn(name: impl Into<String>, features: usize) -> NamedLayer {
    layer(name, LayerSpec::BatchNorm1d { features, eps: BN_EPS, momentum: BN_MOMENTUM })
}

fn head(layers: &mut Vec<NamedLayer>, inputs: usize) {
    layers.push(linear("out", inputs, 1, Init::Xavier));
    layers.push(layer("sigmoid", LayerSpec::Sigmoid));
}

/// 52 → 32 → 10 → 1, BatchNorm and ReLU after each hidden linear.
pub fn build_ffn_expression() -> ModelSpec {
    let mut layers = Vec::new();
    for (i, (a, b)) in [(52, 32), (32, 10)].into_iter().enumerate() {
        let k = i + 1;
        layers.push(linear(format!("fc{k}"), a, b, Init::Kaiming));
        layers.push(bn(format!("bn{k}"), b));
        layers.push(layer(format!("relu{k}"), LayerSpec::Relu));
    }
    head(&mut layers, 10);
    ModelSpec {
        name: "ffn_expression".into(),
        modality: Modality::Expression,
        network: NetworkSpec { input: vec![52], layers, tap: "relu2".into() },
        training: TrainingPlan::sgd(SGD_LR, 256, 1000),
    }
}

pub const COORD_WIDTHS: [usize; 6] = [956, 512, 256, 128, 64, 32];
pub const COORD_DROPOUT: [f64; 4] = [0.25, 0.3, 0.5, 0.1];

/// 956 → 512 → 256 → 128 → 64 → 32 → 1 with BatchNorm and ReLU after each
/// hidden linear and dropout after hidden layers 1 to 4.
pub fn build_ffn_coordinates() -> ModelSpec {
    let mut layers = Vec::new();
    for k in 1..COORD_WIDTHS.len() {
        let (a, b) = (COORD_WIDTHS[k - 1], COORD_WIDTHS[k]);
        layers.push(linear(format!("fc{k}"), a, b, Init::Kaiming));
        layers.push(bn(format!("bn{k}"), b));
        layers.push(layer(format!("relu{k}"), LayerSpec::Relu));
        if let Some(&p) = COORD_DROPOUT.get(k - 1) {
            layers.push(layer(format!("drop{k}"), LayerSpec::Dropout { p }));
        }
    }
    head(&mut layers, 32);
    ModelSpec {
        name: "ffn_coordinates".into(),
        modality: Modality::Coordinates,
        network: NetworkSpec { input: vec![956], layers, tap: "relu5".into() },
        training: TrainingPlan::sgd(SGD_LR, 256, 3000),
    }
}

pub const HANDCRAFTED_WIDTH: usize = 59;
pub const HANDCRAFTED_DEPTH: usize = 15;

/// 29 → 15 hidden layers of 59 units (Linear, ReLU, BatchNorm) → 1.
pub fn build_ffn_handcrafted() -> ModelSpec {
    let mut layers = Vec::new();
    let mut inputs = 29;
    for k in 1..=HANDCRAFTED_DEPTH {
        layers.push(linear(format!("fc{k}"), inputs, HANDCRAFTED_WIDTH, Init::Kaiming));
        layers.push(layer(format!("relu{k}"), LayerSpec::Relu));
        layers.push(bn(format!("bn{k}"), HANDCRAFTED_WIDTH));
        inputs = HANDCRAFTED_WIDTH;
    }
    head(&mut layers, HANDCRAFTED_WIDTH);
    ModelSpec {
        name: "ffn_handcrafted".into(),
        modality: Modality::Handcrafted,
        network: NetworkSpec { input: vec![29], layers, tap: format!("bn{HANDCRAFTED_DEPTH}") },
        training: TrainingPlan::sgd(SGD_LR, 256, 3000),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixerConfig {
    pub image_size: usize,
    pub patch: usize,
    pub dim: usize,
    pub token_mlp: usize,
    pub channel_mlp: usize,
    pub depth: usize,
}

impl Default for MixerConfig {
    fn default() -> Self {
        MixerConfig { image_size: 64, patch: 8, dim: 128, token_mlp: 64, channel_mlp: 256, depth: 4 }
    }
}

impl MixerConfig {
    pub fn tokens(&self) -> usize {
        let g = self.image_size / self.patch;
        g * g
    }
}

/// Patch embedding, `depth` pre-norm token/channel mixing blocks with
/// residuals, final LayerNorm, mean over tokens, sigmoid unit.
pub fn build_mixer_mini(modality: Modality, cfg: &MixerConfig) -> Result<ModelSpec> {
    if !modality.is_image() {
        return Err(PalsyError::Config(format!("MixerMini needs an image modality, got {modality}")));
    }
    if cfg.patch == 0 || !cfg.image_size.is_multiple_of(cfg.patch) {
        return Err(PalsyError::Config(format!(
            "image size {} is not divisible by patch {}",
            cfg.image_size, cfg.patch
        )));
    }
    let s = cfg.tokens();
    let c = cfg.dim;
    let mut layers = vec![layer(
        "patch_embed",
        LayerSpec::PatchEmbed { image_size: cfg.image_size, channels: modality.channels(), patch: cfg.patch, dim: c },
    )];
    for d in 1..=cfg.depth {
        layers.push(layer(
            format!("token_block{d}"),
            LayerSpec::Residual {
                block: vec![
                    layer(format!("token_norm{d}"), LayerSpec::LayerNorm { features: c, eps: LN_EPS }),
                    layer(format!("token_mix{d}"), LayerSpec::TokenMix { tokens: s, hidden: cfg.token_mlp }),
                ],
                shortcut: None,
            },
        ));
        layers.push(layer(
            format!("channel_block{d}"),
            LayerSpec::Residual {
                block: vec![
                    layer(format!("channel_norm{d}"), LayerSpec::LayerNorm { features: c, eps: LN_EPS }),
                    layer(format!("channel_mix{d}"), LayerSpec::ChannelMix { dim: c, hidden: cfg.channel_mlp }),
                ],
                shortcut: None,
            },
        ));
    }
    layers.push(layer("final_norm", LayerSpec::LayerNorm { features: c, eps: LN_EPS }));
    layers.push(layer("pool", LayerSpec::GlobalAvgPool));
    head(&mut layers, c);
    Ok(ModelSpec {
        name: format!("mixer_mini_{modality}"),
        modality,
        network: NetworkSpec {
            input: vec![modality.channels(), cfg.image_size, cfg.image_size],
            layers,
            tap: "pool".into(),
        },
        training: TrainingPlan::sgd(0.01, 256, 40),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResnetConfig {
    pub image_size: usize,
    /// Channel widths of the three stages.
    pub widths: [usize; 3],
    pub blocks_per_stage: usize,
    pub head_width: usize,
    pub head_dropout: f64,
}

impl Default for ResnetConfig {
    fn default() -> Self {
        ResnetConfig { image_size: 64, widths: [16, 32, 64], blocks_per_stage: 2, head_width: 512, head_dropout: 0.5 }
    }
}

fn conv(name: String, cin: usize, cout: usize, kernel: usize, stride: usize) -> NamedLayer {
    layer(
        name,
        LayerSpec::Conv2d {
            in_channels: cin,
            out_channels: cout,
            kernel,
            stride,
            padding: kernel / 2,
            init: Init::Kaiming,
        },
    )
}

/// Residual CNN: 3×3 stem, three stages of basic blocks (stride 2 entering
/// stages 2 and 3, with 1×1 projection shortcuts), global average pool and
/// the Linear, ReLU, Dropout, BatchNorm, Linear, Sigmoid head.
pub fn build_resnet_mini(modality: Modality, cfg: &ResnetConfig) -> Result<ModelSpec> {
    if !modality.is_image() {
        return Err(PalsyError::Config(format!("ResNetMini needs an image modality, got {modality}")));
    }
    if cfg.image_size < 4 || cfg.blocks_per_stage == 0 {
        return Err(PalsyError::Config("ResNetMini needs image size >= 4 and at least one block per stage".into()));
    }
    let mut layers = vec![conv("stem".into(), modality.channels(), cfg.widths[0], 3, 1)];
    layers.push(layer("stem_relu", LayerSpec::Relu));
    let mut cin = cfg.widths[0];
    for (si, &w) in cfg.widths.iter().enumerate() {
        for b in 0..cfg.blocks_per_stage {
            let stride = if si > 0 && b == 0 { 2 } else { 1 };
            let tag = format!("s{}b{}", si + 1, b + 1);
            let shortcut = (stride != 1 || cin != w).then(|| Box::new(conv(format!("{tag}_proj"), cin, w, 1, stride)));
            layers.push(layer(
                tag.to_string(),
                LayerSpec::Residual {
                    block: vec![
                        conv(format!("{tag}_conv1"), cin, w, 3, stride),
                        layer(format!("{tag}_relu1"), LayerSpec::Relu),
                        conv(format!("{tag}_conv2"), w, w, 3, 1),
                    ],
                    shortcut,
                },
            ));
            layers.push(layer(format!("{tag}_relu"), LayerSpec::Relu));
            cin = w;
        }
    }
    layers.push(layer("pool", LayerSpec::GlobalAvgPool));
    layers.push(linear("fc1", cin, cfg.head_width, Init::Kaiming));
    layers.push(layer("relu", LayerSpec::Relu));
    layers.push(layer("dropout", LayerSpec::Dropout { p: cfg.head_dropout }));
    layers.push(bn("bn", cfg.head_width));
    head(&mut layers, cfg.head_width);
    Ok(ModelSpec {
        name: format!("resnet_mini_{modality}"),
        modality,
        network: NetworkSpec {
            input: vec![modality.channels(), cfg.image_size, cfg.image_size],
            layers,
            tap: "bn".into(),
        },
        training: TrainingPlan { patience: Some(3), ..TrainingPlan::sgd(0.01, 128, 100) },
    })
}

/// Inputs of one modality, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Inputs {
    pub modality: Modality,
    pub data: Tensor,
}

impl Inputs {
    pub fn new(modality: Modality, data: Tensor) -> Self {
        Inputs { modality, data }
    }

    /// Stack per-sample vectors into a tensor of per-sample shape `shape`.
    pub fn from_rows(modality: Modality, rows: &[&[f64]], shape: &[usize]) -> Result<Self> {
        let per: usize = shape.iter().product();
        let mut data = Vec::with_capacity(rows.len() * per);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != per {
                return Err(PalsyError::Invalid(format!(
                    "{modality} sample {i}: expected {per} values, got {}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        let mut full = vec![rows.len()];
        full.extend_from_slice(shape);
        Ok(Inputs { modality, data: Tensor::new(full, data)? })
    }

    pub fn len(&self) -> usize {
        self.data.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub network: Network,
    pub log: Vec<EpochLog>,
    pub config_hash: String,
}

impl TrainedModel {
    /// Wrap an untrained network built from `spec`.
    pub fn untrained(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let network = spec.network.build(derive_seed(spec.training.seed, &[1]))?;
        let config_hash = spec.config_hash();
        Ok(TrainedModel { spec, network, log: Vec::new(), config_hash })
    }
}

/// What the per-epoch callback asks the loop to do next.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

pub fn train(spec: &ModelSpec, inputs: &Inputs, labels: &[f64]) -> Result<TrainedModel> {
    train_with(spec, inputs, labels, |_, _| Control::Continue)
}

/// Mini-batch training with `spec.training`. `on_epoch` sees each epoch's
/// log entry and the network after that epoch.
pub fn train_with(
    spec: &ModelSpec,
    inputs: &Inputs,
    labels: &[f64],
    on_epoch: impl FnMut(&EpochLog, &Network) -> Control,
) -> Result<TrainedModel> {
    let mut model = TrainedModel::untrained(spec.clone())?;
    check_inputs(spec, inputs)?;
    if inputs.is_empty() {
        return Err(PalsyError::Invalid(format!("model `{}`: empty training set", spec.name)));
    }
    model.log = fit(&mut model.network, &spec.training, &inputs.data, labels, on_epoch)?;
    Ok(model)
}

/// BCE training loop shared by single models and fusion heads. Runs the
/// plan on `network` in place and returns the per-epoch log.
pub fn fit(
    net: &mut Network,
    plan: &TrainingPlan,
    x_all: &Tensor,
    labels: &[f64],
    mut on_epoch: impl FnMut(&EpochLog, &Network) -> Control,
) -> Result<Vec<EpochLog>> {
    plan.validate()?;
    let n = x_all.batch();
    if n == 0 {
        return Err(PalsyError::Invalid("empty training set".into()));
    }
    if labels.len() != n {
        return Err(PalsyError::Invalid(format!("{} labels for {n} samples", labels.len())));
    }
    let mut opt = Optimizer::new(plan.optimizer, plan.lr);
    let mut rng = Rng::new(derive_seed(plan.seed, &[2]));
    let fused = net.ends_with_sigmoid();
    let last = net.layers().len();
    let (mut best, mut stale) = (f64::INFINITY, 0usize);
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = Vec::new();
    for epoch in 1..=plan.max_epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for idx in batches(&order, plan.batch_size) {
            let x = x_all.select(idx)?;
            let y = Tensor::new(vec![idx.len(), 1], idx.iter().map(|&i| labels[i]).collect())?;
            net.zero_grad();
            let p = net.forward(&x, &mut Ctx::train(&mut rng))?;
            let (loss, grad) = bce_loss(&p, &y)?;
            if fused {
                net.backward_from(last - 1, &bce_logit_grad(&p, &y)?)?;
            } else {
                net.backward(&grad)?;
            }
            opt.step(net.params_mut())?;
            total += loss * idx.len() as f64;
        }
        let loss = total / n as f64;
        if !loss.is_finite() {
            return Err(PalsyError::Diverged { epoch });
        }
        let entry = EpochLog { epoch, loss };
        let control = on_epoch(&entry, net);
        log.push(entry);
        if control == Control::Stop {
            break;
        }
        if let Some(patience) = plan.patience {
            if loss < best - 1e-6 {
                best = loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    break;
                }
            }
        }
    }
    Ok(log)
}

/// Consecutive batches of `order`; a trailing batch of one sample joins the
/// previous one so batch statistics stay defined.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().map(|b| b.len()) == Some(1) {
        let k = out.len();
        out[k - 2] = &order[(k - 2) * size..];
        out.pop();
    }
    out
}

fn check_inputs(spec: &ModelSpec, inputs: &Inputs) -> Result<()> {
    if inputs.modality != spec.modality {
        return Err(PalsyError::Invalid(format!(
            "model `{}` takes {} inputs, got {}",
            spec.name, spec.modality, inputs.modality
        )));
    }
    Ok(())
}

const INFER_CHUNK: usize = 256;

pub(crate) fn infer_chunks(
    network: &Network,
    x: &Tensor,
    f: impl Fn(&Network, &Tensor) -> palsyfuse_nn::Result<Tensor>,
) -> Result<Tensor> {
    let n = x.batch();
    let mut rows: Vec<f64> = Vec::new();
    let mut width = 0;
    let all: Vec<usize> = (0..n).collect();
    for idx in all.chunks(INFER_CHUNK) {
        let out = f(network, &x.select(idx)?)?;
        width = out.len() / idx.len();
        rows.extend_from_slice(out.data());
    }
    Ok(Tensor::new(vec![n, width.max(1)], rows)?)
}

/// Eval-mode probabilities, one per sample.
pub fn predict_proba(model: &TrainedModel, inputs: &Inputs) -> Result<Vec<f64>> {
    check_inputs(&model.spec, inputs)?;
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    Ok(infer_chunks(&model.network, &inputs.data, Network::infer)?.into_data())
}

/// Eval-mode activations at the embedding tap, flattened per sample.
pub fn embed(model: &TrainedModel, inputs: &Inputs) -> Result<Tensor> {
    check_inputs(&model.spec, inputs)?;
    let w = model.spec.embedding_width()?;
    if inputs.is_empty() {
        return Ok(Tensor::zeros(&[0, w]));
    }
    infer_chunks(&model.network, &inputs.data, Network::embed)
}

/// Fraction of samples whose thresholded probability matches the label.
pub fn accuracy(probs: &[f64], labels: &[f64]) -> f64 {
    let hits = probs.iter().zip(labels).filter(|(p, y)| (**p >= 0.5) == (**y >= 0.5)).count();
    hits as f64 / probs.len().max(1) as f64
}
