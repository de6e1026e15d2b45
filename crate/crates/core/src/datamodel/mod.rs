//! Domain types, label semantics and on-disk formats.

mod features;
mod frames;
mod image;
mod manifest;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use features::{
    parse_features_csv, read_features_csv, render_features_csv, write_features_csv, FeatureKind, FeatureVector,
    BLENDSHAPE_NAMES,
};
pub use frames::{parse_frames, read_frames, render_frames, write_frames};
pub use image::{decode_image, encode_image, read_image, write_image, ImageBuffer};
pub use manifest::{DatasetManifest, SubjectEntry, MANIFEST_VERSION};

use crate::error::{PalsyError, Result};

pub const NUM_LANDMARKS: usize = 478;
pub const NUM_BLENDSHAPES: usize = 52;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    PalsyVideo,
    HealthyCorpus,
    Synthetic,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::PalsyVideo => "palsy_video",
            Source::HealthyCorpus => "healthy_corpus",
            Source::Synthetic => "synthetic",
        })
    }
}

/// Palsy intensity within one facial region. Ordered `Normal < Slight < Strong`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Intensity {
    #[serde(alias = "normal")]
    Normal,
    #[serde(alias = "slight")]
    Slight,
    #[serde(alias = "strong")]
    Strong,
}

impl Intensity {
    pub const ALL: [Intensity; 3] = [Intensity::Normal, Intensity::Slight, Intensity::Strong];

    /// `< 1/3` Normal, `< 2/3` Slight, otherwise Strong.
    pub fn from_severity(s: f64) -> Self {
        if s < 1.0 / 3.0 {
            Intensity::Normal
        } else if s < 2.0 / 3.0 {
            Intensity::Slight
        } else {
            Intensity::Strong
        }
    }
}

impl fmt::Display for Intensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinaryLabel {
    NoPalsy,
    Palsy,
}

impl BinaryLabel {
    pub fn as_f64(self) -> f64 {
        match self {
            BinaryLabel::NoPalsy => 0.0,
            BinaryLabel::Palsy => 1.0,
        }
    }

    pub fn from_probability(p: f64) -> Self {
        if p >= 0.5 {
            BinaryLabel::Palsy
        } else {
            BinaryLabel::NoPalsy
        }
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Stratum used by the round-robin sampler: `(eyes, mouth)`.
pub type ClassKey = (Intensity, Intensity);

pub fn class_key_name(key: ClassKey) -> String {
    format!("{}-Eyes-{}-Mouth", key.0, key.1)
}

/// Every class key in canonical (lexicographic) order.
pub fn canonical_class_keys() -> Vec<ClassKey> {
    let mut out = Vec::with_capacity(9);
    for e in Intensity::ALL {
        for m in Intensity::ALL {
            out.push((e, m));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegionLabel {
    pub eyes: Intensity,
    pub mouth: Intensity,
}

impl RegionLabel {
    pub const NORMAL: RegionLabel = RegionLabel { eyes: Intensity::Normal, mouth: Intensity::Normal };

    pub fn binary_label(&self) -> BinaryLabel {
        if self.eyes != Intensity::Normal || self.mouth != Intensity::Normal {
            BinaryLabel::Palsy
        } else {
            BinaryLabel::NoPalsy
        }
    }

    pub fn class_key(&self) -> ClassKey {
        (self.eyes, self.mouth)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkFrame {
    pub subject_id: String,
    pub frame_id: String,
    pub source: Source,
    pub landmarks: Vec<[f64; 2]>,
    pub blendshapes: Option<Vec<f64>>,
    pub label: Option<RegionLabel>,
}

impl LandmarkFrame {
    pub fn validate(&self) -> Result<()> {
        let who = || format!("frame {}/{}", self.subject_id, self.frame_id);
        if self.landmarks.len() != NUM_LANDMARKS {
            return Err(PalsyError::Schema(format!(
                "{}: landmarks: expected {NUM_LANDMARKS}, got {}",
                who(),
                self.landmarks.len()
            )));
        }
        if let Some(i) = self.landmarks.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(PalsyError::Schema(format!("{}: landmark {i} is not finite", who())));
        }
        if let Some(b) = &self.blendshapes {
            if b.len() != NUM_BLENDSHAPES {
                return Err(PalsyError::Schema(format!(
                    "{}: blendshapes: expected {NUM_BLENDSHAPES}, got {}",
                    who(),
                    b.len()
                )));
            }
            if let Some(i) = b.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(PalsyError::Schema(format!(
                    "{}: blendshapes: value {} at index {i} is outside [0, 1]",
                    who(),
                    b[i]
                )));
            }
        }
        Ok(())
    }

    /// Missing labels count as `(Normal, Normal)`.
    pub fn region_label(&self) -> RegionLabel {
        self.label.unwrap_or(RegionLabel::NORMAL)
    }

    pub fn binary_label(&self) -> BinaryLabel {
        self.region_label().binary_label()
    }

    pub fn class_key(&self) -> ClassKey {
        self.region_label().class_key()
    }

    pub fn point(&self, i: usize) -> [f64; 2] {
        self.landmarks[i]
    }
}

/// Round to 9 significant digits, the precision of every numeric text format.
pub fn quantize(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.8e}").parse().unwrap_or(v)
}

/// Quantize every real in a frame so text round trips are exact.
pub fn quantize_frame(frame: &mut LandmarkFrame) {
    for p in &mut frame.landmarks {
        p[0] = quantize(p[0]);
        p[1] = quantize(p[1]);
    }
    if let Some(b) = &mut frame.blendshapes {
        b.iter_mut().for_each(|v| *v = quantize(*v));
    }
}

/// Reject duplicate `(subject_id, frame_id)` pairs.
pub fn check_unique_ids(frames: &[LandmarkFrame]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for f in frames {
        if !seen.insert((f.subject_id.as_str(), f.frame_id.as_str())) {
            return Err(PalsyError::Schema(format!("duplicate frame {}/{}", f.subject_id, f.frame_id)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_label_is_any_region_abnormal() {
        for key in canonical_class_keys() {
            let l = RegionLabel { eyes: key.0, mouth: key.1 };
            let palsy = key != (Intensity::Normal, Intensity::Normal);
            assert_eq!(l.binary_label() == BinaryLabel::Palsy, palsy);
        }
    }

    #[test]
    fn class_keys_are_sorted() {
        let keys = canonical_class_keys();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(class_key_name(keys[3]), "Slight-Eyes-Normal-Mouth");
    }

    #[test]
    fn severity_thresholds() {
        assert_eq!(Intensity::from_severity(0.0), Intensity::Normal);
        assert_eq!(Intensity::from_severity(0.34), Intensity::Slight);
        assert_eq!(Intensity::from_severity(2.0 / 3.0), Intensity::Strong);
    }

    #[test]
    fn quantize_keeps_nine_digits() {
        assert_eq!(quantize(0.123456789123), 0.123456789);
        assert_eq!(quantize(quantize(1.0 / 3.0)), quantize(1.0 / 3.0));
        assert_eq!(quantize(-2.5e-12), -2.5e-12);
    }

    #[test]
    fn late_threshold_is_inclusive() {
        assert_eq!(BinaryLabel::from_probability(0.5), BinaryLabel::Palsy);
        assert_eq!(BinaryLabel::from_probability(0.4999), BinaryLabel::NoPalsy);
    }
}
