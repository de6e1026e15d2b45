use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use palsyfuse_nn::rng::{derive_seed, hash_str};
use palsyfuse_nn::OptimizerKind;

use super::lopo::{group_by_subject, make_lopo_plan, sample_fold, FoldSample, FrameRef, LopoConfig, SplitPlan};
use super::metrics::{average, compute_metrics, pooled, AverageMetrics, MetricsRecord};
use super::sampling::round_robin_sample;
use crate::datamodel::{check_unique_ids, read_frames, BinaryLabel, DatasetManifest, LandmarkFrame};
use crate::error::{PalsyError, Result};
use crate::fusion::{early_fuse_train, late_fuse, FusionMode, FusionSpec};
use crate::geometry::RoleMap;
use crate::io;
use crate::modalities::{Extractor, Raw};
use crate::models::{
    build_ffn_coordinates, build_ffn_expression, build_ffn_handcrafted, build_mixer_mini, build_resnet_mini,
    predict_proba, sha256_hex, train, Inputs, MixerConfig, Modality, ModelSpec, ResnetConfig, TrainedModel,
};
use crate::raster::ContourSet;
use crate::synthgen::{generate_dataset, SynthDatasetSpec};

pub const REPORT_VERSION: &str = "palsyfuse-report/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SynthDatasetSpec),
    /// A `frames.jsonl` file, relative to the config file.
    Frames(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum Arch {
    FfnExpression,
    FfnCoordinates,
    FfnHandcrafted,
    MixerMini {
        modality: Modality,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        patch: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        token_mlp: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        channel_mlp: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        depth: Option<usize>,
    },
    ResnetMini {
        modality: Modality,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        widths: Option<[usize; 3]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        blocks_per_stage: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        head_width: Option<usize>,
    },
}

/// A configured model: architecture plus optional training overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub name: String,
    #[serde(flatten)]
    pub arch: Arch,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerKind>,
}

impl ModelEntry {
    pub fn new(name: &str, arch: Arch) -> Self {
        ModelEntry {
            name: name.into(),
            arch,
            epochs: None,
            lr: None,
            batch_size: None,
            patience: None,
            optimizer: None,
        }
    }

    pub fn spec(&self, image_size: usize) -> Result<ModelSpec> {
        let mut spec = match &self.arch {
            Arch::FfnExpression => build_ffn_expression(),
            Arch::FfnCoordinates => build_ffn_coordinates(),
            Arch::FfnHandcrafted => build_ffn_handcrafted(),
            Arch::MixerMini { modality, patch, dim, token_mlp, channel_mlp, depth } => {
                let d = MixerConfig::default();
                let cfg = MixerConfig {
                    image_size,
                    patch: patch.unwrap_or(d.patch),
                    dim: dim.unwrap_or(d.dim),
                    token_mlp: token_mlp.unwrap_or(d.token_mlp),
                    channel_mlp: channel_mlp.unwrap_or(d.channel_mlp),
                    depth: depth.unwrap_or(d.depth),
                };
                build_mixer_mini(*modality, &cfg)?
            }
            Arch::ResnetMini { modality, widths, blocks_per_stage, head_width } => {
                let d = ResnetConfig::default();
                let cfg = ResnetConfig {
                    image_size,
                    widths: widths.unwrap_or(d.widths),
                    blocks_per_stage: blocks_per_stage.unwrap_or(d.blocks_per_stage),
                    head_width: head_width.unwrap_or(d.head_width),
                    head_dropout: d.head_dropout,
                };
                build_resnet_mini(*modality, &cfg)?
            }
        };
        spec.name = self.name.clone();
        let t = &mut spec.training;
        if let Some(e) = self.epochs {
            t.max_epochs = e;
        }
        if let Some(lr) = self.lr {
            t.lr = lr;
        }
        if let Some(b) = self.batch_size {
            t.batch_size = b;
        }
        if let Some(p) = self.patience {
            t.patience = Some(p);
        }
        if let Some(o) = self.optimizer {
            t.optimizer = o;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn default_image_size() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSource,
    /// Role map JSON; the synthetic topology when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roles: Option<PathBuf>,
    /// Contour set JSON; the synthetic topology when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contours: Option<PathBuf>,
    #[serde(default = "default_image_size")]
    pub image_size: usize,
    #[serde(default)]
    pub lopo: LopoConfig,
    pub models: Vec<ModelEntry>,
    #[serde(default)]
    pub fusions: Vec<FusionSpec>,
    /// Where `eval` writes reports and predictions when no path is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| PalsyError::Config(format!("run config: {e}")))?;
        cfg.base_dir = base_dir.to_owned();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_to_string(path)?;
        let base = path.parent().map(Path::to_owned).unwrap_or_default();
        Self::from_json(&text, &base).map_err(|e| match e {
            PalsyError::Config(m) => PalsyError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_owned()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Hex SHA-256 of the config's JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn model(&self, name: &str) -> Result<&ModelEntry> {
        self.models
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| PalsyError::Config(format!("no model named `{name}` in the config")))
    }

    /// Everything checkable without reading data or training.
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(PalsyError::Config("config lists no models".into()));
        }
        if self.image_size < crate::raster::MIN_SIZE {
            return Err(PalsyError::Config(format!("image_size must be at least {}", crate::raster::MIN_SIZE)));
        }
        self.lopo.validate()?;
        let mut names = BTreeSet::new();
        for m in &self.models {
            if !names.insert(m.name.as_str()) {
                return Err(PalsyError::Config(format!("duplicate name `{}`", m.name)));
            }
            m.spec(self.image_size).map_err(|e| PalsyError::Config(format!("model `{}`: {e}", m.name)))?;
        }
        for f in &self.fusions {
            if !names.insert(f.name.as_str()) {
                return Err(PalsyError::Config(format!("duplicate name `{}`", f.name)));
            }
            f.validate()?;
            for member in &f.members {
                if self.models.iter().all(|m| &m.name != member) {
                    return Err(PalsyError::Config(format!("fusion `{}` names unknown model `{member}`", f.name)));
                }
            }
        }
        Ok(())
    }

    fn modalities(&self) -> Result<BTreeSet<Modality>> {
        self.models.iter().map(|m| Ok(m.spec(self.image_size)?.modality)).collect()
    }
}

/// Frames, their manifest and the extractor for a run.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub frames: Vec<LandmarkFrame>,
    pub manifest: DatasetManifest,
    pub extractor: Extractor,
}

pub fn load_frames(cfg: &RunConfig) -> Result<Vec<LandmarkFrame>> {
    let frames = match &cfg.data {
        DataSource::Synthetic(spec) => generate_dataset(spec)?,
        DataSource::Frames(p) => read_frames(&cfg.resolve(p))?,
    };
    check_unique_ids(&frames)?;
    Ok(frames)
}

pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData> {
    let frames = load_frames(cfg)?;
    let manifest = DatasetManifest::from_frames(&frames);
    let mut extractor = Extractor { image_size: cfg.image_size, ..Extractor::default() };
    if let Some(p) = &cfg.roles {
        extractor.roles = RoleMap::load(&cfg.resolve(p))?;
    }
    if let Some(p) = &cfg.contours {
        extractor.contours = ContourSet::load(&cfg.resolve(p))?;
    }
    Ok(PreparedData { frames, manifest, extractor })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub name: String,
    /// `model`, `early_fusion` or `late_fusion`.
    pub kind: String,
    pub modality: String,
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub held_out: String,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub metrics: BTreeMap<String, MetricsRecord>,
    /// Epochs each trained network ran.
    pub epochs: BTreeMap<String, usize>,
    pub final_loss: BTreeMap<String, f64>,
    pub train: Vec<FrameRef>,
    pub test: Vec<FrameRef>,
    /// Test-set probabilities per model, aligned with `test`.
    #[serde(skip)]
    pub predictions: BTreeMap<String, Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub entries: Vec<ReportEntry>,
    pub folds: Vec<FoldReport>,
    pub complete: bool,
    /// Equal-weight means of the fold metrics; absent when a fold failed.
    pub averages: Option<BTreeMap<String, AverageMetrics>>,
    /// Metrics of the confusion matrix summed over folds; a transparency
    /// aid, not the fold average.
    pub pooled: Option<BTreeMap<String, MetricsRecord>>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: RunReport = serde_json::from_str(text).map_err(|e| PalsyError::Schema(format!("report: {e}")))?;
        if r.format_version != REPORT_VERSION {
            return Err(PalsyError::Schema(format!("unsupported report version `{}`", r.format_version)));
        }
        Ok(r)
    }
}

type Cache = BTreeMap<Modality, HashMap<FrameRef, std::result::Result<Raw, String>>>;

fn build_cache(data: &PreparedData, modalities: &BTreeSet<Modality>, refs: &BTreeSet<FrameRef>) -> Cache {
    let index: HashMap<FrameRef, &LandmarkFrame> = data.frames.iter().map(|f| (FrameRef::of(f), f)).collect();
    let refs: Vec<&FrameRef> = refs.iter().collect();
    modalities
        .iter()
        .map(|&m| {
            let rows: HashMap<FrameRef, std::result::Result<Raw, String>> = refs
                .par_iter()
                .map(|r| {
                    let raw = data.extractor.extract_raw(index[*r], m).map_err(|e| e.to_string());
                    ((*r).clone(), raw)
                })
                .collect();
            (m, rows)
        })
        .collect()
}

fn inputs_for(cache: &Cache, data: &PreparedData, m: Modality, refs: &[FrameRef]) -> Result<Inputs> {
    let rows = &cache[&m];
    let shape = data.extractor.sample_shape(m);
    let per: usize = shape.iter().product();
    let mut values = Vec::with_capacity(refs.len() * per);
    for r in refs {
        match &rows[r] {
            Ok(raw) => raw.extend_into(&mut values),
            Err(e) => return Err(PalsyError::Invalid(format!("{}/{} ({m}): {e}", r.subject_id, r.frame_id))),
        }
    }
    let mut full = vec![refs.len()];
    full.extend(shape);
    Ok(Inputs::new(m, palsyfuse_nn::Tensor::new(full, values)?))
}

fn labels_for(index: &HashMap<FrameRef, &LandmarkFrame>, refs: &[FrameRef]) -> Vec<BinaryLabel> {
    refs.iter().map(|r| index[r].binary_label()).collect()
}

fn entries(cfg: &RunConfig) -> Result<Vec<ReportEntry>> {
    let mut out = Vec::new();
    let mut modality_of = BTreeMap::new();
    for m in &cfg.models {
        let spec = m.spec(cfg.image_size)?;
        modality_of.insert(m.name.clone(), spec.modality);
        let arch = match &m.arch {
            Arch::FfnExpression | Arch::FfnCoordinates | Arch::FfnHandcrafted => "FFN",
            Arch::MixerMini { .. } => "MixerMini",
            Arch::ResnetMini { .. } => "ResNetMini",
        };
        out.push(ReportEntry {
            name: m.name.clone(),
            kind: "model".into(),
            modality: spec.modality.title().into(),
            description: format!("{arch} ({})", m.name),
        });
    }
    for f in &cfg.fusions {
        let (a, b) = (&f.members[0], &f.members[1]);
        let (kind, title) = match f.mode {
            FusionMode::Early => ("early_fusion", "Early fusion"),
            FusionMode::Late => ("late_fusion", "Late fusion"),
        };
        out.push(ReportEntry {
            name: f.name.clone(),
            kind: kind.into(),
            modality: format!("{} + {}", modality_of[a].title(), modality_of[b].title()),
            description: format!("{title} ({a} + {b})"),
        });
    }
    Ok(out)
}

/// Run every configured fold; `on_fold` sees each fold report as it
/// completes.
pub fn run_experiment(cfg: &RunConfig, data: &PreparedData, on_fold: impl Fn(&FoldReport) + Sync) -> Result<RunReport> {
    cfg.validate()?;
    let plans = make_lopo_plan(&data.manifest, &cfg.lopo, cfg.seed)?;
    let by_subject = group_by_subject(&data.frames);
    let samples: Vec<std::result::Result<FoldSample, String>> =
        plans.iter().map(|p| sample_fold(p, &by_subject).map_err(|e| e.to_string())).collect();
    let mut refs = BTreeSet::new();
    for s in samples.iter().flatten() {
        refs.extend(s.train.iter().cloned());
        refs.extend(s.test.iter().cloned());
    }
    let cache = build_cache(data, &cfg.modalities()?, &refs);
    let index: HashMap<FrameRef, &LandmarkFrame> = data.frames.iter().map(|f| (FrameRef::of(f), f)).collect();

    let folds: Vec<FoldReport> = plans
        .par_iter()
        .zip(samples.par_iter())
        .map(|(plan, sample)| {
            let mut report = FoldReport {
                fold: plan.fold,
                held_out: plan.held_out.clone(),
                complete: false,
                error: None,
                metrics: BTreeMap::new(),
                epochs: BTreeMap::new(),
                final_loss: BTreeMap::new(),
                train: Vec::new(),
                test: Vec::new(),
                predictions: BTreeMap::new(),
            };
            match sample {
                Ok(s) => {
                    report.train = s.train.clone();
                    report.test = s.test.clone();
                    match run_fold(cfg, data, &cache, &index, plan, s, &mut report) {
                        Ok(()) => report.complete = true,
                        Err(e) => report.error = Some(e.to_string()),
                    }
                }
                Err(e) => report.error = Some(e.clone()),
            }
            on_fold(&report);
            report
        })
        .collect();

    let complete = folds.iter().all(|f| f.complete);
    let ents = entries(cfg)?;
    let (averages, pooled_metrics) = if complete {
        let per = |name: &str| -> Vec<MetricsRecord> { folds.iter().map(|f| f.metrics[name]).collect() };
        (
            Some(ents.iter().map(|e| (e.name.clone(), average(&per(&e.name)))).collect()),
            Some(ents.iter().map(|e| (e.name.clone(), pooled(&per(&e.name)))).collect()),
        )
    } else {
        (None, None)
    };
    Ok(RunReport {
        format_version: REPORT_VERSION.into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        entries: ents,
        folds,
        complete,
        averages,
        pooled: pooled_metrics,
    })
}

fn run_fold(
    cfg: &RunConfig,
    data: &PreparedData,
    cache: &Cache,
    index: &HashMap<FrameRef, &LandmarkFrame>,
    plan: &SplitPlan,
    sample: &FoldSample,
    report: &mut FoldReport,
) -> Result<()> {
    let leaked = sample.leaked_subjects();
    if !leaked.is_empty() {
        return Err(PalsyError::Plan(format!("subjects in both train and test: {leaked:?}")));
    }
    let y_train: Vec<f64> = labels_for(index, &sample.train).iter().map(|l| l.as_f64()).collect();
    let y_test = labels_for(index, &sample.test);
    let mut train_inputs: BTreeMap<Modality, Inputs> = BTreeMap::new();
    let mut test_inputs: BTreeMap<Modality, Inputs> = BTreeMap::new();
    let mut models: BTreeMap<String, TrainedModel> = BTreeMap::new();
    let score = |probs: &[f64]| -> Result<MetricsRecord> {
        let pred: Vec<BinaryLabel> = probs.iter().map(|&p| BinaryLabel::from_probability(p)).collect();
        compute_metrics(&pred, &y_test)
    };

    for entry in &cfg.models {
        let spec = entry.spec(cfg.image_size)?.with_seed(derive_seed(plan.seed, &[hash_str(&entry.name)]));
        let m = spec.modality;
        if let std::collections::btree_map::Entry::Vacant(e) = train_inputs.entry(m) {
            e.insert(inputs_for(cache, data, m, &sample.train)?);
            test_inputs.insert(m, inputs_for(cache, data, m, &sample.test)?);
        }
        let model = train(&spec, &train_inputs[&m], &y_train)
            .map_err(|e| PalsyError::Invalid(format!("training `{}`: {e}", entry.name)))?;
        let probs = predict_proba(&model, &test_inputs[&m])?;
        report.metrics.insert(entry.name.clone(), score(&probs)?);
        report.epochs.insert(entry.name.clone(), model.log.len());
        report.final_loss.insert(entry.name.clone(), model.log.last().map_or(f64::NAN, |l| l.loss));
        report.predictions.insert(entry.name.clone(), probs);
        models.insert(entry.name.clone(), model);
    }

    for f in &cfg.fusions {
        let (a, b) = (&models[&f.members[0]], &models[&f.members[1]]);
        let probs = match f.mode {
            FusionMode::Late => late_fuse(&report.predictions[&a.spec.name], &report.predictions[&b.spec.name])?
                .into_iter()
                .map(|(p, _)| p)
                .collect(),
            FusionMode::Early => {
                let (ma, mb) = (a.spec.modality, b.spec.modality);
                let seed = derive_seed(plan.seed, &[hash_str(&f.name)]);
                let fused = early_fuse_train(f, a, b, &train_inputs[&ma], &train_inputs[&mb], &y_train, seed)
                    .map_err(|e| PalsyError::Invalid(format!("training `{}`: {e}", f.name)))?;
                report.epochs.insert(f.name.clone(), fused.log.len());
                report.final_loss.insert(f.name.clone(), fused.log.last().map_or(f64::NAN, |l| l.loss));
                fused.predict(a, b, &test_inputs[&ma], &test_inputs[&mb])?
            }
        };
        report.metrics.insert(f.name.clone(), score(&probs)?);
        report.predictions.insert(f.name.clone(), probs);
    }
    Ok(())
}

/// Train one configured model on `train_samples` round-robin frames from
/// every subject in the dataset.
pub fn train_on_dataset(cfg: &RunConfig, data: &PreparedData, name: &str) -> Result<TrainedModel> {
    let entry = cfg.model(name)?;
    let spec = entry.spec(cfg.image_size)?.with_seed(derive_seed(cfg.seed, &[hash_str(name)]));
    let mut refs = Vec::new();
    for frames in group_by_subject(&data.frames).values() {
        refs.extend(round_robin_sample(frames, cfg.lopo.train_samples)?.into_iter().map(FrameRef::of));
    }
    let set: BTreeSet<FrameRef> = refs.iter().cloned().collect();
    let cache = build_cache(data, &[spec.modality].into_iter().collect(), &set);
    let index: HashMap<FrameRef, &LandmarkFrame> = data.frames.iter().map(|f| (FrameRef::of(f), f)).collect();
    let y: Vec<f64> = labels_for(&index, &refs).iter().map(|l| l.as_f64()).collect();
    train(&spec, &inputs_for(&cache, data, spec.modality, &refs)?, &y)
}
