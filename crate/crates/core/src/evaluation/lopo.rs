use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use palsyfuse_nn::rng::{derive_seed, Rng};

use super::sampling::round_robin_sample;
use crate::datamodel::{DatasetManifest, LandmarkFrame};
use crate::error::{PalsyError, Result};

/// Fold composition. Defaults give 20 + 20 healthy subjects, 50 training
/// samples per subject and a test set of 50 held-out samples plus 2 per
/// healthy test subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LopoConfig {
    #[serde(default = "d20")]
    pub train_healthy: usize,
    #[serde(default = "d20")]
    pub test_healthy: usize,
    #[serde(default = "d50")]
    pub train_samples: usize,
    #[serde(default = "d50")]
    pub test_samples: usize,
    #[serde(default = "d2")]
    pub test_healthy_samples: usize,
    /// Run only the first `max_folds` folds.
    #[serde(default)]
    pub max_folds: Option<usize>,
}

fn d20() -> usize {
    20
}
fn d50() -> usize {
    50
}
fn d2() -> usize {
    2
}

impl Default for LopoConfig {
    fn default() -> Self {
        LopoConfig {
            train_healthy: 20,
            test_healthy: 20,
            train_samples: 50,
            test_samples: 50,
            test_healthy_samples: 2,
            max_folds: None,
        }
    }
}

impl LopoConfig {
    pub fn validate(&self) -> Result<()> {
        let counts =
            [self.train_healthy, self.test_healthy, self.train_samples, self.test_samples, self.test_healthy_samples];
        if counts.contains(&0) || self.max_folds == Some(0) {
            return Err(PalsyError::Config("LOPO subject and sample counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectQuota {
    pub subject_id: String,
    pub target: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub fold: usize,
    pub held_out: String,
    pub train: Vec<SubjectQuota>,
    pub test: Vec<SubjectQuota>,
    pub seed: u64,
}

impl SplitPlan {
    pub fn train_subjects(&self) -> BTreeSet<&str> {
        self.train.iter().map(|q| q.subject_id.as_str()).collect()
    }

    pub fn test_subjects(&self) -> BTreeSet<&str> {
        self.test.iter().map(|q| q.subject_id.as_str()).collect()
    }
}

/// One fold per palsy subject. Healthy subjects are shuffled with the
/// fold's seed; the first `train_healthy` train and the next
/// `test_healthy` test.
pub fn make_lopo_plan(manifest: &DatasetManifest, cfg: &LopoConfig, seed: u64) -> Result<Vec<SplitPlan>> {
    cfg.validate()?;
    manifest.validate()?;
    let palsy: Vec<&str> = manifest.palsy_subjects().iter().map(|s| s.subject_id.as_str()).collect();
    let healthy: Vec<&str> = manifest.healthy_subjects().iter().map(|s| s.subject_id.as_str()).collect();
    if palsy.is_empty() {
        return Err(PalsyError::Plan("no palsy subjects to hold out".into()));
    }
    let need = cfg.train_healthy + cfg.test_healthy;
    if healthy.len() < need {
        return Err(PalsyError::Plan(format!(
            "disjoint healthy sets need {} + {} = {need} healthy subjects, found {}",
            cfg.train_healthy,
            cfg.test_healthy,
            healthy.len()
        )));
    }
    let folds = cfg.max_folds.map_or(palsy.len(), |m| m.min(palsy.len()));
    let quota = |id: &str, target: usize| SubjectQuota { subject_id: id.to_owned(), target };
    let mut plans = Vec::with_capacity(folds);
    for (fold, &held) in palsy.iter().enumerate().take(folds) {
        let fold_seed = derive_seed(seed, &[fold as u64]);
        let mut pool = healthy.clone();
        Rng::new(derive_seed(fold_seed, &[0x4ea1])).shuffle(&mut pool);
        let mut train: Vec<SubjectQuota> =
            palsy.iter().filter(|&&p| p != held).map(|p| quota(p, cfg.train_samples)).collect();
        train.extend(pool[..cfg.train_healthy].iter().map(|h| quota(h, cfg.train_samples)));
        let mut test = vec![quota(held, cfg.test_samples)];
        test.extend(pool[cfg.train_healthy..need].iter().map(|h| quota(h, cfg.test_healthy_samples)));
        plans.push(SplitPlan { fold, held_out: held.to_owned(), train, test, seed: fold_seed });
    }
    Ok(plans)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FrameRef {
    pub subject_id: String,
    pub frame_id: String,
}

impl FrameRef {
    pub fn of(frame: &LandmarkFrame) -> Self {
        FrameRef { subject_id: frame.subject_id.clone(), frame_id: frame.frame_id.clone() }
    }
}

/// The frames a fold trains and tests on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSample {
    pub train: Vec<FrameRef>,
    pub test: Vec<FrameRef>,
}

impl FoldSample {
    /// Subjects present in both sets.
    pub fn leaked_subjects(&self) -> BTreeSet<String> {
        let train: BTreeSet<&String> = self.train.iter().map(|f| &f.subject_id).collect();
        self.test.iter().filter(|f| train.contains(&f.subject_id)).map(|f| f.subject_id.clone()).collect()
    }
}

/// Frames grouped by subject, keeping input order within each subject.
pub fn group_by_subject(frames: &[LandmarkFrame]) -> BTreeMap<&str, Vec<&LandmarkFrame>> {
    let mut out: BTreeMap<&str, Vec<&LandmarkFrame>> = BTreeMap::new();
    for f in frames {
        out.entry(f.subject_id.as_str()).or_default().push(f);
    }
    out
}

pub fn sample_fold(plan: &SplitPlan, by_subject: &BTreeMap<&str, Vec<&LandmarkFrame>>) -> Result<FoldSample> {
    let take = |quotas: &[SubjectQuota]| -> Result<Vec<FrameRef>> {
        let mut out = Vec::new();
        for q in quotas {
            let frames = by_subject
                .get(q.subject_id.as_str())
                .ok_or_else(|| PalsyError::Plan(format!("subject `{}` has no frames", q.subject_id)))?;
            out.extend(round_robin_sample(frames, q.target)?.into_iter().map(FrameRef::of));
        }
        Ok(out)
    };
    Ok(FoldSample { train: take(&plan.train)?, test: take(&plan.test)? })
}
