use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{canonical_class_keys, class_key_name, LandmarkFrame, Source};
use crate::error::{PalsyError, Result};

pub const MANIFEST_VERSION: &str = "palsyfuse-manifest/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub subject_id: String,
    pub source: Source,
    pub frame_count: usize,
    /// Frames per class key, keyed by `class_key_name`.
    pub census: BTreeMap<String, usize>,
}

impl SubjectEntry {
    /// Palsy subjects come from palsy video, or are synthetic with any
    /// abnormal frame.
    pub fn is_palsy(&self) -> bool {
        match self.source {
            Source::PalsyVideo => true,
            Source::HealthyCorpus => false,
            Source::Synthetic => {
                let normal = class_key_name(canonical_class_keys()[0]);
                self.census.iter().any(|(k, &n)| *k != normal && n > 0)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: String,
    pub subjects: Vec<SubjectEntry>,
}

impl DatasetManifest {
    /// Census of `frames`, subjects in first-appearance order.
    pub fn from_frames(frames: &[LandmarkFrame]) -> Self {
        let mut order: Vec<String> = Vec::new();
        let mut map: BTreeMap<String, SubjectEntry> = BTreeMap::new();
        for f in frames {
            let e = map.entry(f.subject_id.clone()).or_insert_with(|| {
                order.push(f.subject_id.clone());
                SubjectEntry {
                    subject_id: f.subject_id.clone(),
                    source: f.source,
                    frame_count: 0,
                    census: BTreeMap::new(),
                }
            });
            e.frame_count += 1;
            *e.census.entry(class_key_name(f.class_key())).or_insert(0) += 1;
        }
        let subjects = order.into_iter().map(|id| map.remove(&id).unwrap()).collect();
        DatasetManifest { format_version: MANIFEST_VERSION.into(), subjects }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MANIFEST_VERSION {
            return Err(PalsyError::Schema(format!("unsupported manifest version `{}`", self.format_version)));
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.subjects {
            if !seen.insert(&s.subject_id) {
                return Err(PalsyError::Schema(format!("duplicate subject `{}`", s.subject_id)));
            }
            if s.frame_count == 0 {
                return Err(PalsyError::Schema(format!("subject `{}` has no frames", s.subject_id)));
            }
            let total: usize = s.census.values().sum();
            if total != s.frame_count {
                return Err(PalsyError::Schema(format!(
                    "subject `{}`: census sums to {total}, frame count is {}",
                    s.subject_id, s.frame_count
                )));
            }
        }
        Ok(())
    }

    pub fn palsy_subjects(&self) -> Vec<&SubjectEntry> {
        self.subjects.iter().filter(|s| s.is_palsy()).collect()
    }

    pub fn healthy_subjects(&self) -> Vec<&SubjectEntry> {
        self.subjects.iter().filter(|s| !s.is_palsy()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}
