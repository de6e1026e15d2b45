use std::fmt;
use std::path::{Path, PathBuf};

use palsyfuse::datamodel::{
    read_frames, write_features_csv, write_frames, write_image, DatasetManifest, FeatureKind, FeatureVector,
};
use palsyfuse::evaluation::{
    prepare_data, render_markdown, render_predictions_csv, run_experiment, train_on_dataset, RunConfig, RunReport,
};
use palsyfuse::geometry::RoleMap;
use palsyfuse::io::{read_to_string, write_atomic};
use palsyfuse::modalities::{Extractor, Raw};
use palsyfuse::models::Modality;
use palsyfuse::raster::ContourSet;
use palsyfuse::synthgen::{generate_dataset, SynthDatasetSpec};
use palsyfuse::PalsyError;

use crate::args::{Command, EvalArgs, ExtractArgs, Format, ReportArgs, SynthArgs, TrainArgs};

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    pub fn is_validation(&self) -> bool {
        matches!(self, Failure::Validation(_))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<PalsyError> for Failure {
    fn from(e: PalsyError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

/// Size the global worker pool; `PALSYFUSE_THREADS` wins over `--threads`.
pub fn init_threads(flag: Option<usize>) -> Result<()> {
    let threads =
        match std::env::var("PALSYFUSE_THREADS") {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
                Failure::Validation(format!("PALSYFUSE_THREADS must be a positive integer, got `{v}`"))
            })?),
            Err(_) => flag,
        };
    match threads {
        Some(0) => Err(Failure::Validation("thread count must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(format!("thread pool: {e}"))),
        None => Ok(()),
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(&a),
        Command::Extract(a) => extract(&a),
        Command::Train(a) => train(&a),
        Command::Eval(a) => eval(&a),
        Command::Report(a) => report(&a),
    }
}

fn synth(a: &SynthArgs) -> Result<()> {
    if a.subjects == 0 || a.frames == 0 {
        return Err(Failure::Validation("--subjects and --frames must be positive".into()));
    }
    let spec = SynthDatasetSpec {
        subjects: a.subjects,
        palsy_fraction: a.palsy_fraction,
        frames: a.frames,
        seed: a.seed,
        jitter_sigma: a.jitter,
        severity_range: (0.5, 1.0),
    };
    let frames = generate_dataset(&spec)?;
    write_frames(&frames, &a.out.join("frames.jsonl"))?;
    write_atomic(&a.out.join("manifest.json"), DatasetManifest::from_frames(&frames).to_json().as_bytes())?;
    println!(
        "wrote {} frames for {} subjects ({} palsy) to {}",
        frames.len(),
        spec.subjects,
        spec.palsy_count(),
        a.out.display()
    );
    Ok(())
}

fn feature_kind(m: Modality) -> Option<FeatureKind> {
    match m {
        Modality::Handcrafted => Some(FeatureKind::Handcrafted29),
        Modality::Expression => Some(FeatureKind::Expression52),
        Modality::Coordinates => Some(FeatureKind::Coordinates956),
        Modality::Rgb | Modality::Bnw => None,
    }
}

fn extract(a: &ExtractArgs) -> Result<()> {
    let mut extractor = Extractor { image_size: a.image_size, ..Extractor::default() };
    if let Some(p) = &a.roles {
        extractor.roles = RoleMap::load(p)?;
    }
    if let Some(p) = &a.contours {
        extractor.contours = ContourSet::load(p)?;
    }
    if a.image_size < palsyfuse::raster::MIN_SIZE {
        return Err(Failure::Validation(format!("--image-size must be at least {}", palsyfuse::raster::MIN_SIZE)));
    }
    let mut modalities: Vec<Modality> = a.modalities.iter().map(|&m| m.into()).collect();
    modalities.sort();
    modalities.dedup();
    let wants_features = modalities.iter().any(|&m| feature_kind(m).is_some());
    let wants_images = modalities.iter().any(|m| m.is_image());
    let features_dir = match (&a.out_features, wants_features) {
        (Some(d), true) => Some(d),
        (None, true) => return Err(Failure::Validation("--out-features is required for feature modalities".into())),
        _ => None,
    };
    let images_dir = match (&a.out_images, wants_images) {
        (Some(d), true) => Some(d),
        (None, true) => return Err(Failure::Validation("--out-images is required for image modalities".into())),
        _ => None,
    };
    let frames = read_frames(&a.frames)?;
    for &m in &modalities {
        if let (Some(kind), Some(dir)) = (feature_kind(m), features_dir) {
            let rows = frames
                .iter()
                .map(|f| FeatureVector::new(kind, &f.subject_id, &f.frame_id, extractor.extract(f, m)?))
                .collect::<palsyfuse::Result<Vec<_>>>()?;
            let path = dir.join(format!("{}.csv", m));
            write_features_csv(&rows, &path)?;
            println!("wrote {} rows to {}", rows.len(), path.display());
        } else if let Some(dir) = images_dir {
            let ext = if m == Modality::Rgb { "ppm" } else { "pgm" };
            for f in &frames {
                let Raw::Image(img) = extractor.extract_raw(f, m)? else {
                    unreachable!("image modality yields an image")
                };
                let path: PathBuf = dir.join(m.to_string()).join(&f.subject_id).join(format!("{}.{ext}", f.frame_id));
                write_image(&img, &path)?;
            }
            println!("wrote {} {m} images under {}", frames.len(), dir.join(m.to_string()).display());
        }
    }
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    cfg.model(&a.model)?;
    let data = prepare_data(&cfg)?;
    let model = train_on_dataset(&cfg, &data, &a.model)?;
    write_atomic(&a.out_weights, &palsyfuse_nn::weights::encode(&model.network))?;
    let last = model.log.last().map_or(f64::NAN, |l| l.loss);
    println!(
        "trained `{}` for {} epochs (final loss {last:.6}); weights in {}",
        a.model,
        model.log.len(),
        a.out_weights.display()
    );
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let out = match (&a.out_report, &cfg.output_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(d)) => cfg.resolve(d).join("report.json"),
        (None, None) => PathBuf::from("report.json"),
    };
    let data = prepare_data(&cfg)?;
    let report = run_experiment(&cfg, &data, |f| {
        let status = match &f.error {
            None => "complete".to_string(),
            Some(e) => format!("failed: {e}"),
        };
        eprintln!("fold {} (held out {}): {status}", f.fold, f.held_out);
    })?;
    write_report(&report, &out)?;
    println!("wrote {}", out.display());
    if report.complete {
        Ok(())
    } else {
        let failed = report.folds.iter().filter(|f| !f.complete).count();
        Err(Failure::Runtime(format!("{failed} of {} folds did not complete", report.folds.len())))
    }
}

fn write_report(report: &RunReport, json_path: &Path) -> Result<()> {
    write_atomic(json_path, report.to_json().as_bytes())?;
    write_atomic(&json_path.with_extension("md"), render_markdown(report).as_bytes())?;
    let dir = json_path.parent().unwrap_or(Path::new("")).join("predictions");
    for fold in report.folds.iter().filter(|f| f.complete) {
        for e in &report.entries {
            let bytes = render_predictions_csv(fold, &e.name)?;
            write_atomic(&dir.join(format!("fold{:02}_{}.csv", fold.fold, e.name)), &bytes)?;
        }
    }
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let report = RunReport::from_json(&read_to_string(&a.report)?)?;
    match a.format {
        Format::Md => print!("{}", render_markdown(&report)),
        Format::Json => print!("{}", report.to_json()),
    }
    Ok(())
}
