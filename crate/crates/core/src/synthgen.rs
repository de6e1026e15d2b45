//! Deterministic parametric generator of synthetic healthy and palsy-like
//! subjects on a procedural 478-point face topology.
//!
//! Topology (indices):
//! - `0..36` silhouette, clockwise from the top; 18 is the chin
//! - `36..41` right brow, `41..46` left brow, inner to outer
//! - `46..62` right eye, `62..78` left eye; offsets 0 inner, 4 top, 8 outer, 12 bottom
//! - `78..98` outer lip; offsets 0 right corner, 5 upper mid, 10 left corner, 15 lower mid
//! - `98..114` inner lip, `114..124` nose (118 is the tip), 124 forehead
//! - `125..478` filler points in mirrored pairs, then one on the midline
//!
//! "Left" is the subject's left, which is image `+x`.

use serde::{Deserialize, Serialize};

use palsyfuse_nn::rng::{derive_seed, Rng};

use crate::datamodel::{
    quantize, quantize_frame, Intensity, LandmarkFrame, RegionLabel, Source, BLENDSHAPE_NAMES, NUM_BLENDSHAPES,
    NUM_LANDMARKS,
};
use crate::error::{PalsyError, Result};
use crate::geometry::{Point, RoleMap, SideRoles};
use crate::raster::{Contour, ContourSet};

const SILHOUETTE: usize = 0;
const BROW_R: usize = 36;
const BROW_L: usize = 41;
const EYE_R: usize = 46;
const EYE_L: usize = 62;
const LIP_OUTER: usize = 78;
const LIP_INNER: usize = 98;
const NOSE: usize = 114;
const FOREHEAD: usize = 124;
const FILLER: usize = 125;
const CHIN: usize = 18;

pub fn default_roles() -> RoleMap {
    let side = |brow: usize, eye: usize, corner: usize| SideRoles {
        eyebrow_inner: brow,
        eyebrow_mid: brow + 2,
        eyebrow_outer: brow + 4,
        eye_inner: eye,
        eye_top: eye + 4,
        eye_outer: eye + 8,
        eye_bottom: eye + 12,
        mouth_corner: corner,
    };
    RoleMap {
        forehead_mid: FOREHEAD,
        chin: SILHOUETTE + CHIN,
        nose_tip: NOSE + 4,
        upper_lip_mid: LIP_OUTER + 5,
        lower_lip_mid: LIP_OUTER + 15,
        left: side(BROW_L, EYE_L, LIP_OUTER + 10),
        right: side(BROW_R, EYE_R, LIP_OUTER),
    }
}

pub fn default_contours() -> ContourSet {
    let span = |start: usize, len: usize| (start..start + len).collect::<Vec<_>>();
    ContourSet {
        contours: vec![
            Contour { name: "face_silhouette".into(), indices: span(SILHOUETTE, 36), closed: true },
            Contour { name: "left_eyebrow".into(), indices: span(BROW_L, 5), closed: false },
            Contour { name: "right_eyebrow".into(), indices: span(BROW_R, 5), closed: false },
            Contour { name: "left_eye".into(), indices: span(EYE_L, 16), closed: true },
            Contour { name: "right_eye".into(), indices: span(EYE_R, 16), closed: true },
            Contour { name: "outer_lip".into(), indices: span(LIP_OUTER, 20), closed: true },
            Contour { name: "inner_lip".into(), indices: span(LIP_INNER, 16), closed: true },
        ],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Sign of image `x` on this side.
    fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

/// Symmetric per-subject face proportions; all 1 / 0 for the canonical face.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceShape {
    pub width: f64,
    pub eye_spacing: f64,
    pub eye_height: f64,
    pub mouth_width: f64,
    pub brow_offset: f64,
}

impl Default for FaceShape {
    fn default() -> Self {
        FaceShape { width: 1.0, eye_spacing: 1.0, eye_height: 1.0, mouth_width: 1.0, brow_offset: 0.0 }
    }
}

/// Similarity transform placing the face in the image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation_deg: f64,
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Pose { rotation_deg: 0.0, scale: 1.0, tx: 0.0, ty: 0.0 }
    }
}

/// Small natural left/right differences present in every subject, in units
/// of the interocular distance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NaturalAsymmetry {
    pub brow_dy: f64,
    pub corner_dy: f64,
    pub eye_height: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthFaceParams {
    /// Seeds the landmark jitter.
    pub seed: u64,
    pub droop_side: Side,
    pub mouth_droop: f64,
    pub eye_closure_asym: f64,
    pub brow_drop: f64,
    /// Animation phase in `[0, 1)`: drives talking and smiling.
    pub expression_phase: f64,
    /// Landmark noise in units of the interocular distance.
    pub jitter_sigma: f64,
    pub shape: FaceShape,
    pub pose: Pose,
    pub asymmetry: NaturalAsymmetry,
}

impl SynthFaceParams {
    /// Canonical upright symmetric face with no deformation.
    pub fn neutral(seed: u64) -> Self {
        SynthFaceParams {
            seed,
            droop_side: Side::Left,
            mouth_droop: 0.0,
            eye_closure_asym: 0.0,
            brow_drop: 0.0,
            expression_phase: 0.0,
            jitter_sigma: 0.0,
            shape: FaceShape::default(),
            pose: Pose::default(),
            asymmetry: NaturalAsymmetry::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(PalsyError::Invalid(format!("{name} must be in [0, 1], got {v}")))
            }
        };
        unit("mouth_droop", self.mouth_droop)?;
        unit("eye_closure_asym", self.eye_closure_asym)?;
        unit("brow_drop", self.brow_drop)?;
        if !(0.0..1.0).contains(&self.expression_phase) {
            return Err(PalsyError::Invalid(format!(
                "expression_phase must be in [0, 1), got {}",
                self.expression_phase
            )));
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(PalsyError::Invalid(format!("jitter_sigma must be >= 0, got {}", self.jitter_sigma)));
        }
        if !(self.pose.scale > 0.0) {
            return Err(PalsyError::Invalid("pose scale must be positive".into()));
        }
        Ok(())
    }

    fn talk(&self) -> f64 {
        0.5 * (1.0 - libm::cos(2.0 * std::f64::consts::PI * 3.0 * self.expression_phase))
    }

    fn smile(&self) -> f64 {
        0.5 * (1.0 - libm::cos(2.0 * std::f64::consts::PI * self.expression_phase))
    }
}

/// The 478 landmarks for a parameter set, in normalized image coordinates.
pub fn face_landmarks(params: &SynthFaceParams) -> Vec<Point> {
    let s = &params.shape;
    let ex = 0.10 * s.eye_spacing;
    let d0 = 2.0 * ex;
    let aff = params.droop_side.sign();
    let is_aff = |x_sign: f64| (x_sign > 0.0) == (aff > 0.0);
    let mut pts: Vec<Point> = vec![[0.0, 0.0]; NUM_LANDMARKS];

    let (fa, fb) = (0.30 * s.width, 0.40);
    for k in 0..36 {
        let t = 2.0 * std::f64::consts::PI * k as f64 / 36.0;
        pts[SILHOUETTE + k] = [fa * libm::sin(t), -fb * libm::cos(t)];
    }
    pts[FOREHEAD] = [0.0, -0.30];

    for (start, sign) in [(BROW_R, -1.0), (BROW_L, 1.0)] {
        let mut dy = if sign > 0.0 { params.asymmetry.brow_dy } else { -params.asymmetry.brow_dy } * d0;
        if is_aff(sign) {
            dy += 0.12 * d0 * params.brow_drop;
        }
        for k in 0..5 {
            let x = sign * (0.04 + k as f64 * 0.13 / 4.0) * s.eye_spacing;
            let y = -0.16 + s.brow_offset - 0.02 * libm::sin(std::f64::consts::PI * k as f64 / 4.0);
            pts[start + k] = [x, y + dy];
        }
    }

    for (start, sign) in [(EYE_R, -1.0), (EYE_L, 1.0)] {
        let natural = 1.0 + if sign > 0.0 { params.asymmetry.eye_height } else { -params.asymmetry.eye_height };
        let open = if is_aff(sign) { 1.0 + 0.8 * params.eye_closure_asym } else { 1.0 };
        let (hw, hh) = (0.045 * s.eye_spacing, 0.018 * s.eye_height * natural * open);
        let c = [sign * ex, -0.08];
        for k in 0..16 {
            let phi = std::f64::consts::PI * k as f64 / 8.0;
            pts[start + k] = [c[0] - sign * libm::cos(phi) * hw, c[1] - libm::sin(phi) * hh];
        }
    }

    let mouth = [0.0, 0.18];
    let mw = 0.09 * s.mouth_width;
    for k in 0..20 {
        let phi = std::f64::consts::PI * k as f64 / 10.0;
        let hgt = if k < 10 { 0.022 } else { 0.032 };
        pts[LIP_OUTER + k] = [mouth[0] - libm::cos(phi) * mw, mouth[1] - libm::sin(phi) * hgt];
    }
    for k in 0..16 {
        let phi = std::f64::consts::PI * k as f64 / 8.0;
        let hgt = if k < 8 { 0.008 } else { 0.010 };
        pts[LIP_INNER + k] = [mouth[0] - libm::cos(phi) * 0.8 * mw, mouth[1] - libm::sin(phi) * hgt];
    }

    let nose: [Point; 10] = [
        [0.0, -0.06],
        [0.0, -0.02],
        [0.0, 0.02],
        [0.0, 0.05],
        [0.0, 0.08],
        [-0.03, 0.07],
        [0.03, 0.07],
        [-0.045, 0.055],
        [0.045, 0.055],
        [0.0, 0.10],
    ];
    pts[NOSE..NOSE + 10].copy_from_slice(&nose);

    let pairs = (NUM_LANDMARKS - FILLER - 1) / 2;
    for j in 0..pairs {
        let r = ((j as f64 + 0.5) / pairs as f64).sqrt();
        let a = (j as f64 * 2.399_963_229_728_653) % std::f64::consts::PI - std::f64::consts::FRAC_PI_2;
        let x = 0.005 + 0.85 * fa * r * libm::cos(a);
        let y = 0.85 * fb * r * libm::sin(a);
        pts[FILLER + 2 * j] = [x, y];
        pts[FILLER + 2 * j + 1] = [-x, y];
    }
    pts[NUM_LANDMARKS - 1] = [0.0, 0.30];

    // Expression: jaw drop below the mouth line, and smiling at the corners.
    let talk = params.talk();
    for p in pts.iter_mut() {
        if p[1] > mouth[1] {
            p[1] += 0.05 * talk * ((p[1] - mouth[1]) / 0.03).min(1.0);
        }
    }
    let smile = params.smile();
    let corners = [(pts[LIP_OUTER], -1.0), (pts[LIP_OUTER + 10], 1.0)];
    let mut displacement = vec![[0.0, 0.0]; NUM_LANDMARKS];
    for (corner, sign) in corners {
        let mut amp = smile;
        if is_aff(sign) {
            amp *= 1.0 - params.mouth_droop;
        }
        let natural = if sign > 0.0 { params.asymmetry.corner_dy } else { -params.asymmetry.corner_dy } * d0;
        let droop = if is_aff(sign) { params.mouth_droop } else { 0.0 };
        for (i, p) in pts.iter().enumerate() {
            let dx = p[0] - corner[0];
            let dy = p[1] - corner[1];
            let g_smile = libm::exp(-(dx * dx + dy * dy) / (2.0 * 0.03 * 0.03));
            let g_droop = libm::exp(-(dx * dx + dy * dy) / (2.0 * 0.05 * 0.05));
            displacement[i][0] += g_smile * amp * 0.02 * sign - g_droop * 0.05 * d0 * droop * sign;
            displacement[i][1] += -g_smile * amp * 0.025 + g_droop * (0.2 * d0 * droop + natural);
        }
    }
    for (p, dp) in pts.iter_mut().zip(&displacement) {
        p[0] += dp[0];
        p[1] += dp[1];
    }

    if params.jitter_sigma > 0.0 {
        let mut rng = Rng::new(params.seed);
        for p in pts.iter_mut() {
            p[0] += params.jitter_sigma * d0 * rng.normal();
            p[1] += params.jitter_sigma * d0 * rng.normal();
        }
    }

    let pose = &params.pose;
    let th = pose.rotation_deg.to_radians();
    let (sn, cs) = (libm::sin(th), libm::cos(th));
    pts.iter()
        .map(|p| {
            let x = pose.scale * (cs * p[0] - sn * p[1]);
            let y = pose.scale * (sn * p[0] + cs * p[1]);
            [0.5 + x + pose.tx, 0.5 + y + pose.ty]
        })
        .collect()
}

/// Expression coefficients implied by the parameters, before noise.
pub fn face_blendshapes(params: &SynthFaceParams, rng: &mut Rng) -> Vec<f64> {
    let mut b = vec![0.0; NUM_BLENDSHAPES];
    let idx = |name: &str| BLENDSHAPE_NAMES.iter().position(|n| *n == name).unwrap();
    let (talk, smile) = (params.talk(), params.smile());
    let left_aff = params.droop_side == Side::Left;
    let side_val = |aff_val: f64, other: f64, left: bool| if left == left_aff { aff_val } else { other };
    for (suffix, left) in [("Left", true), ("Right", false)] {
        let e = params.eye_closure_asym;
        let m = params.mouth_droop;
        b[idx(&format!("eyeBlink{suffix}"))] = side_val(0.12 * (1.0 - e), 0.12, left);
        b[idx(&format!("eyeWide{suffix}"))] = side_val(0.6 * e, 0.0, left);
        b[idx(&format!("eyeSquint{suffix}"))] = side_val(0.3 * smile * (1.0 - e), 0.3 * smile, left);
        b[idx(&format!("mouthSmile{suffix}"))] = side_val(0.8 * smile * (1.0 - m), 0.8 * smile, left);
        b[idx(&format!("mouthFrown{suffix}"))] = side_val(0.6 * m, 0.0, left);
        b[idx(&format!("mouthLowerDown{suffix}"))] = side_val(0.4 * talk + 0.2 * m, 0.4 * talk, left);
        b[idx(&format!("browDown{suffix}"))] = side_val(0.6 * params.brow_drop, 0.0, left);
        b[idx(&format!("cheekSquint{suffix}"))] = side_val(0.3 * smile * (1.0 - m), 0.3 * smile, left);
    }
    b[idx("jawOpen")] = 0.6 * talk;
    b[idx("mouthClose")] = 0.1 * (1.0 - talk);
    for v in b.iter_mut() {
        *v = (*v + 0.02 * rng.normal()).abs().min(1.0);
    }
    let active = b.iter().skip(1).cloned().fold(0.0, f64::max);
    b[0] = (1.0 - active).clamp(0.0, 1.0);
    b.iter().map(|&v| quantize(v)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSubjectSpec {
    pub subject_id: String,
    pub is_palsy: bool,
    pub severity: f64,
    pub frame_count: usize,
    pub seed: u64,
    #[serde(default = "default_jitter")]
    pub jitter_sigma: f64,
}

fn default_jitter() -> f64 {
    0.01
}

impl SynthSubjectSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.severity) {
            return Err(PalsyError::Invalid(format!("severity must be in [0, 1], got {}", self.severity)));
        }
        if !self.is_palsy && self.severity != 0.0 {
            return Err(PalsyError::Invalid(format!("healthy subject `{}` must have severity 0", self.subject_id)));
        }
        if self.frame_count == 0 {
            return Err(PalsyError::Invalid("frame_count must be positive".into()));
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(PalsyError::Invalid("jitter_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Frame-level parameters and labels for a subject.
pub fn subject_frame_params(spec: &SynthSubjectSpec) -> Result<Vec<(SynthFaceParams, RegionLabel)>> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let shape = FaceShape {
        width: rng.uniform(0.92, 1.08),
        eye_spacing: rng.uniform(0.92, 1.08),
        eye_height: rng.uniform(0.85, 1.15),
        mouth_width: rng.uniform(0.88, 1.12),
        brow_offset: rng.uniform(-0.01, 0.01),
    };
    let asymmetry = NaturalAsymmetry {
        brow_dy: 0.01 * rng.normal(),
        corner_dy: 0.01 * rng.normal(),
        eye_height: 0.03 * rng.normal(),
    };
    let droop_side = if rng.next_f64() < 0.5 { Side::Left } else { Side::Right };
    let base_rot = 4.0 * rng.normal();
    let scale = rng.uniform(0.9, 1.1);
    let (tx, ty) = (rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03));
    let phase0 = rng.next_f64();
    let mut out = Vec::with_capacity(spec.frame_count);
    for i in 0..spec.frame_count {
        let (s_eyes, s_mouth, label) = if spec.is_palsy {
            let se = (spec.severity + rng.uniform(-0.2, 0.2)).clamp(0.0, 1.0);
            let sm = (spec.severity + rng.uniform(-0.2, 0.2)).clamp(0.0, 1.0);
            (se, sm, RegionLabel { eyes: Intensity::from_severity(se), mouth: Intensity::from_severity(sm) })
        } else {
            (0.0, 0.0, RegionLabel::NORMAL)
        };
        let pose = Pose {
            rotation_deg: base_rot + rng.normal(),
            scale,
            tx: tx + 0.003 * rng.normal(),
            ty: ty + 0.003 * rng.normal(),
        };
        let phase = (phase0 + i as f64 / spec.frame_count.max(8) as f64 * 2.0).fract();
        let params = SynthFaceParams {
            seed: rng.next_u64(),
            droop_side,
            mouth_droop: s_mouth,
            eye_closure_asym: s_eyes,
            brow_drop: s_eyes,
            expression_phase: phase,
            jitter_sigma: spec.jitter_sigma,
            shape,
            pose,
            asymmetry,
        };
        out.push((params, label));
    }
    Ok(out)
}

pub fn frame_id(i: usize) -> String {
    format!("f{i:05}")
}

pub fn generate_subject(spec: &SynthSubjectSpec) -> Result<Vec<LandmarkFrame>> {
    let params = subject_frame_params(spec)?;
    let mut rng = Rng::new(derive_seed(spec.seed, &[0xb1e4d]));
    params
        .iter()
        .enumerate()
        .map(|(i, (p, label))| {
            let mut frame = LandmarkFrame {
                subject_id: spec.subject_id.clone(),
                frame_id: frame_id(i),
                source: Source::Synthetic,
                landmarks: face_landmarks(p),
                blendshapes: Some(face_blendshapes(p, &mut rng)),
                label: Some(*label),
            };
            quantize_frame(&mut frame);
            frame.validate()?;
            Ok(frame)
        })
        .collect()
}

/// Dataset layout: `round(subjects · palsy_fraction)` palsy subjects
/// (`P01`, ...) with severities spread over `severity_range`, then healthy
/// subjects (`H01`, ...).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthDatasetSpec {
    pub subjects: usize,
    pub palsy_fraction: f64,
    pub frames: usize,
    pub seed: u64,
    #[serde(default = "default_jitter")]
    pub jitter_sigma: f64,
    #[serde(default = "default_severity_range")]
    pub severity_range: (f64, f64),
}

fn default_severity_range() -> (f64, f64) {
    (0.5, 1.0)
}

impl SynthDatasetSpec {
    pub fn palsy_count(&self) -> usize {
        (self.subjects as f64 * self.palsy_fraction).round() as usize
    }

    pub fn subject_specs(&self) -> Result<Vec<SynthSubjectSpec>> {
        if !(0.0..=1.0).contains(&self.palsy_fraction) {
            return Err(PalsyError::Invalid(format!("palsy fraction must be in [0, 1], got {}", self.palsy_fraction)));
        }
        let (lo, hi) = self.severity_range;
        if !(0.0..=hi).contains(&lo) || hi > 1.0 {
            return Err(PalsyError::Invalid(format!("invalid severity range ({lo}, {hi})")));
        }
        let np = self.palsy_count();
        let width = if self.subjects >= 100 { 3 } else { 2 };
        let mut rng = Rng::new(derive_seed(self.seed, &[0x5e7]));
        let mut out = Vec::with_capacity(self.subjects);
        for i in 0..self.subjects {
            let palsy = i < np;
            let (id, severity) = if palsy {
                (format!("P{:0width$}", i + 1), rng.uniform(lo, hi))
            } else {
                (format!("H{:0width$}", i - np + 1), 0.0)
            };
            out.push(SynthSubjectSpec {
                subject_id: id,
                is_palsy: palsy,
                severity,
                frame_count: self.frames,
                seed: derive_seed(self.seed, &[i as u64 + 1]),
                jitter_sigma: self.jitter_sigma,
            });
        }
        Ok(out)
    }
}

pub fn generate_dataset(spec: &SynthDatasetSpec) -> Result<Vec<LandmarkFrame>> {
    use rayon::prelude::*;
    let subjects = spec.subject_specs()?;
    let parts: Vec<Vec<LandmarkFrame>> = subjects.par_iter().map(generate_subject).collect::<Result<_>>()?;
    Ok(parts.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::handcrafted_values;

    #[test]
    fn neutral_template_is_mirror_symmetric() {
        let pts = face_landmarks(&SynthFaceParams::neutral(0));
        let roles = default_roles();
        for (l, r) in roles.pairs() {
            assert!((pts[l][0] - 0.5 + pts[r][0] - 0.5).abs() < 1e-12);
            assert!((pts[l][1] - pts[r][1]).abs() < 1e-12);
        }
        assert!((pts[roles.forehead_mid][0] - 0.5).abs() < 1e-15);
        assert!((pts[roles.chin][0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn default_roles_are_valid() {
        default_roles().validate().unwrap();
        default_contours().validate().unwrap();
    }

    #[test]
    fn healthy_subjects_are_all_normal() {
        let spec = SynthSubjectSpec {
            subject_id: "H1".into(),
            is_palsy: false,
            severity: 0.0,
            frame_count: 5,
            seed: 7,
            jitter_sigma: 0.01,
        };
        let a = generate_subject(&spec).unwrap();
        assert_eq!(a, generate_subject(&spec).unwrap());
        assert_eq!(a.len(), 5);
        assert!(a.iter().all(|f| f.label == Some(RegionLabel::NORMAL)));
    }

    #[test]
    fn healthy_with_severity_is_rejected() {
        let spec = SynthSubjectSpec {
            subject_id: "H1".into(),
            is_palsy: false,
            severity: 0.3,
            frame_count: 5,
            seed: 7,
            jitter_sigma: 0.0,
        };
        assert!(generate_subject(&spec).is_err());
    }

    #[test]
    fn dataset_ids_and_counts() {
        let spec = SynthDatasetSpec {
            subjects: 5,
            palsy_fraction: 0.4,
            frames: 3,
            seed: 1,
            jitter_sigma: 0.01,
            severity_range: (0.5, 1.0),
        };
        let frames = generate_dataset(&spec).unwrap();
        assert_eq!(frames.len(), 15);
        assert_eq!(frames[0].subject_id, "P01");
        assert_eq!(frames[6].subject_id, "H01");
    }

    #[test]
    fn full_severity_frames_cross_the_feature_thresholds() {
        let roles = default_roles();
        for seed in 0..10 {
            let spec = SynthSubjectSpec {
                subject_id: "P".into(),
                is_palsy: true,
                severity: 1.0,
                frame_count: 20,
                seed,
                jitter_sigma: 0.0,
            };
            for f in generate_subject(&spec).unwrap() {
                let v = handcrafted_values(&f, &roles).unwrap();
                assert!(v[22] > 0.2, "seed {seed} {}: F23 = {}", f.frame_id, v[22]);
                assert!(v[10] < 0.8, "seed {seed} {}: F11 = {}", f.frame_id, v[10]);
            }
        }
    }

    #[test]
    fn f29_separates_palsy_from_healthy() {
        let roles = default_roles();
        let spec = SynthDatasetSpec {
            subjects: 40,
            palsy_fraction: 0.5,
            frames: 30,
            seed: 11,
            jitter_sigma: 0.01,
            severity_range: (0.5, 1.0),
        };
        let (mut palsy, mut healthy) = (Vec::new(), Vec::new());
        for f in generate_dataset(&spec).unwrap() {
            let v = handcrafted_values(&f, &roles).unwrap()[28];
            if f.subject_id.starts_with('P') {
                palsy.push(v);
            } else {
                healthy.push(v);
            }
        }
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        let mh = mean(&healthy);
        let sd = (healthy.iter().map(|v| (v - mh).powi(2)).sum::<f64>() / (healthy.len() - 1) as f64).sqrt();
        // Measured margin is 7.8 standard deviations.
        assert!(mean(&palsy) - mh >= 5.0 * sd, "margin {} sd {sd}", mean(&palsy) - mh);
    }

    #[test]
    fn palsy_frames_cover_several_class_keys() {
        let spec = SynthSubjectSpec {
            subject_id: "P1".into(),
            is_palsy: true,
            severity: 0.6,
            frame_count: 60,
            seed: 5,
            jitter_sigma: 0.01,
        };
        let keys: std::collections::BTreeSet<_> =
            generate_subject(&spec).unwrap().iter().map(|f| f.class_key()).collect();
        assert!(keys.len() >= 3, "{keys:?}");
    }

    #[test]
    fn eye_closure_drives_blink_coefficients() {
        let mut rng = Rng::new(1);
        let base = SynthFaceParams { droop_side: Side::Left, ..SynthFaceParams::neutral(1) };
        let closed = SynthFaceParams { eye_closure_asym: 1.0, ..base };
        let idx = BLENDSHAPE_NAMES.iter().position(|n| *n == "eyeWideLeft").unwrap();
        let a = face_blendshapes(&base, &mut rng)[idx];
        let b = face_blendshapes(&closed, &mut rng)[idx];
        assert!(b > a + 0.3, "{a} -> {b}");
    }
}
