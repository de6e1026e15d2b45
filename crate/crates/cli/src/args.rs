use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use palsyfuse::models::Modality;

/// Facial palsy detection on facial landmarks: synthetic data, feature
/// extraction, training and leave-one-patient-out evaluation.
#[derive(Debug, Parser)]
#[command(name = "palsyfuse", version)]
pub struct Cli {
    /// Worker threads (default: logical cores); PALSYFUSE_THREADS overrides
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (frames.jsonl and manifest.json)
    Synth(SynthArgs),
    /// Extract feature CSVs and face images from frames.jsonl
    Extract(ExtractArgs),
    /// Train one configured model on the whole dataset and save its weights
    Train(TrainArgs),
    /// Run the leave-one-patient-out evaluation of a run config
    Eval(EvalArgs),
    /// Print a saved report
    Report(ReportArgs),
}

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    /// Number of subjects
    #[arg(long)]
    pub subjects: usize,
    /// Fraction of subjects with palsy
    #[arg(long, default_value_t = 0.2)]
    pub palsy_fraction: f64,
    /// Frames per subject
    #[arg(long)]
    pub frames: usize,
    /// Generator seed
    #[arg(long)]
    pub seed: u64,
    /// Landmark jitter standard deviation
    #[arg(long, default_value_t = 0.01)]
    pub jitter: f64,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct ExtractArgs {
    /// Input frames.jsonl
    #[arg(long)]
    pub frames: PathBuf,
    /// Role map JSON (default: synthetic topology)
    #[arg(long)]
    pub roles: Option<PathBuf>,
    /// Contour set JSON (default: synthetic topology)
    #[arg(long)]
    pub contours: Option<PathBuf>,
    /// Directory for feature CSVs
    #[arg(long)]
    pub out_features: Option<PathBuf>,
    /// Directory for PPM/PGM images
    #[arg(long)]
    pub out_images: Option<PathBuf>,
    /// Modalities to extract
    #[arg(long, value_delimiter = ',', default_value = "handcrafted,expression,coordinates,rgb,bnw")]
    pub modalities: Vec<ModalityArg>,
    /// Image side length in pixels
    #[arg(long, default_value_t = 64)]
    pub image_size: usize,
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Run config JSON
    #[arg(long)]
    pub config: PathBuf,
    /// Name of the model entry to train
    #[arg(long)]
    pub model: String,
    /// Output NNW1 weights file
    #[arg(long)]
    pub out_weights: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// Run config JSON
    #[arg(long)]
    pub config: PathBuf,
    /// Output report.json; report.md and predictions go beside it
    #[arg(long)]
    pub out_report: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    /// Saved report.json
    #[arg(long)]
    pub report: PathBuf,
    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Md)]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Md,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModalityArg {
    Handcrafted,
    Expression,
    Coordinates,
    Rgb,
    Bnw,
}

impl From<ModalityArg> for Modality {
    fn from(m: ModalityArg) -> Self {
        match m {
            ModalityArg::Handcrafted => Modality::Handcrafted,
            ModalityArg::Expression => Modality::Expression,
            ModalityArg::Coordinates => Modality::Coordinates,
            ModalityArg::Rgb => Modality::Rgb,
            ModalityArg::Bnw => Modality::Bnw,
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    use super::*;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn modalities_are_a_comma_list() {
        let cli =
            Cli::try_parse_from(["palsyfuse", "extract", "--frames", "f.jsonl", "--modalities", "bnw,handcrafted"])
                .unwrap();
        let Command::Extract(a) = cli.command else { panic!("not extract") };
        assert_eq!(a.modalities, [ModalityArg::Bnw, ModalityArg::Handcrafted]);
        assert_eq!(a.image_size, 64);
    }

    #[test]
    fn threads_is_global() {
        let cli = Cli::try_parse_from(["palsyfuse", "report", "--report", "r.json", "--threads", "3"]).unwrap();
        assert_eq!(cli.threads, Some(3));
    }
}
