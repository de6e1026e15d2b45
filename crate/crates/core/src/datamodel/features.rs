use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{quantize, NUM_BLENDSHAPES, NUM_LANDMARKS};
use crate::error::{PalsyError, Result};
use crate::io;

/// Expression coefficient names, in vector order.
pub const BLENDSHAPE_NAMES: [&str; NUM_BLENDSHAPES] = [
    "_neutral",
    "browDownLeft",
    "browDownRight",
    "browInnerUp",
    "browOuterUpLeft",
    "browOuterUpRight",
    "cheekPuff",
    "cheekSquintLeft",
    "cheekSquintRight",
    "eyeBlinkLeft",
    "eyeBlinkRight",
    "eyeLookDownLeft",
    "eyeLookDownRight",
    "eyeLookInLeft",
    "eyeLookInRight",
    "eyeLookOutLeft",
    "eyeLookOutRight",
    "eyeLookUpLeft",
    "eyeLookUpRight",
    "eyeSquintLeft",
    "eyeSquintRight",
    "eyeWideLeft",
    "eyeWideRight",
    "jawForward",
    "jawLeft",
    "jawOpen",
    "jawRight",
    "mouthClose",
    "mouthDimpleLeft",
    "mouthDimpleRight",
    "mouthFrownLeft",
    "mouthFrownRight",
    "mouthFunnel",
    "mouthLeft",
    "mouthLowerDownLeft",
    "mouthLowerDownRight",
    "mouthPressLeft",
    "mouthPressRight",
    "mouthPucker",
    "mouthRight",
    "mouthRollLower",
    "mouthRollUpper",
    "mouthShrugLower",
    "mouthShrugUpper",
    "mouthSmileLeft",
    "mouthSmileRight",
    "mouthStretchLeft",
    "mouthStretchRight",
    "mouthUpperUpLeft",
    "mouthUpperUpRight",
    "noseSneerLeft",
    "noseSneerRight",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Handcrafted29,
    Expression52,
    Coordinates956,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] =
        [FeatureKind::Handcrafted29, FeatureKind::Expression52, FeatureKind::Coordinates956];

    pub fn len(self) -> usize {
        match self {
            FeatureKind::Handcrafted29 => 29,
            FeatureKind::Expression52 => NUM_BLENDSHAPES,
            FeatureKind::Coordinates956 => 2 * NUM_LANDMARKS,
        }
    }

    /// Column names in canonical order.
    pub fn names(self) -> Vec<String> {
        match self {
            FeatureKind::Handcrafted29 => (1..=29).map(|i| format!("F{i}")).collect(),
            FeatureKind::Expression52 => BLENDSHAPE_NAMES.iter().map(|s| s.to_string()).collect(),
            FeatureKind::Coordinates956 => {
                (0..NUM_LANDMARKS).flat_map(|i| [format!("x{i}"), format!("y{i}")]).collect()
            }
        }
    }

    /// Whether every value must lie in `[0, 1]`.
    pub fn is_unit_range(self) -> bool {
        !matches!(self, FeatureKind::Coordinates956)
    }

    fn from_header(cols: &[String]) -> Option<Self> {
        FeatureKind::ALL.into_iter().find(|k| k.names().first().map(String::as_str) == cols.first().map(String::as_str))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub subject_id: String,
    pub frame_id: String,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(kind: FeatureKind, subject_id: &str, frame_id: &str, values: Vec<f64>) -> Result<Self> {
        let v = FeatureVector { kind, subject_id: subject_id.to_owned(), frame_id: frame_id.to_owned(), values };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.kind.len() {
            return Err(PalsyError::Schema(format!(
                "{:?} vector for {}/{}: expected {} values, got {}",
                self.kind,
                self.subject_id,
                self.frame_id,
                self.kind.len(),
                self.values.len()
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(PalsyError::Schema(format!("{}/{}: value {i} is not finite", self.subject_id, self.frame_id)));
        }
        if self.kind.is_unit_range() {
            if let Some(i) = self.values.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(PalsyError::Schema(format!(
                    "{}/{}: value {} at index {i} is outside [0, 1]",
                    self.subject_id, self.frame_id, self.values[i]
                )));
            }
        }
        Ok(())
    }
}

/// CSV text: header `subject_id,frame_id,<names>`, then one row per vector.
pub fn render_features_csv(vectors: &[FeatureVector]) -> Result<Vec<u8>> {
    let kind =
        vectors.first().map(|v| v.kind).ok_or_else(|| PalsyError::Invalid("no feature vectors to write".into()))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut header = vec!["subject_id".to_string(), "frame_id".to_string()];
    header.extend(kind.names());
    let csv_err = |e: csv::Error| PalsyError::Schema(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for v in vectors {
        if v.kind != kind {
            return Err(PalsyError::Invalid(format!("mixed feature kinds {kind:?} and {:?}", v.kind)));
        }
        v.validate()?;
        let mut row = vec![v.subject_id.clone(), v.frame_id.clone()];
        row.extend(v.values.iter().map(|&x| quantize(x).to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| PalsyError::Schema(e.to_string()))
}

pub fn write_features_csv(vectors: &[FeatureVector], path: &Path) -> Result<()> {
    io::write_atomic(path, &render_features_csv(vectors)?)
}

pub fn read_features_csv(path: &Path) -> Result<Vec<FeatureVector>> {
    parse_features_csv(&io::read(path)?, path)
}

pub fn parse_features_csv(bytes: &[u8], path: &Path) -> Result<Vec<FeatureVector>> {
    let parse_err = |line: usize, message: String| PalsyError::Parse { path: path.to_owned(), line, message };
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(bytes);
    let mut records = r.records();
    let header: Vec<String> = match records.next() {
        Some(h) => h.map_err(|e| parse_err(1, e.to_string()))?.iter().map(str::to_owned).collect(),
        None => return Err(parse_err(1, "missing header row".into())),
    };
    if header.len() < 3 || header[0] != "subject_id" || header[1] != "frame_id" {
        return Err(PalsyError::Schema("header must start with subject_id,frame_id".into()));
    }
    let kind = FeatureKind::from_header(&header[2..])
        .ok_or_else(|| PalsyError::Schema(format!("unrecognised feature column `{}`", header[2])))?;
    let names = kind.names();
    if header[2..] != names[..] {
        let missing: Vec<&String> = names.iter().filter(|n| !header.contains(n)).collect();
        return Err(PalsyError::Schema(if missing.is_empty() {
            format!("{kind:?} columns are out of order")
        } else {
            format!("missing column(s) {missing:?} for {kind:?}")
        }));
    }
    let mut out = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(parse_err(line, format!("expected {} columns, got {}", header.len(), rec.len())));
        }
        let values = rec
            .iter()
            .skip(2)
            .map(|s| s.parse::<f64>().map_err(|e| parse_err(line, format!("`{s}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(FeatureVector::new(kind, &rec[0], &rec[1], values)?);
    }
    Ok(out)
}
