//! Structured modalities from landmark frames: 29 handcrafted asymmetry
//! features, rigid-normalised coordinates and expression passthrough.
//!
//! Conventions: `u` points from forehead to chin, `h = (u.y, -u.x)`, which
//! is image `+x` on an upright face. The subject's left side (`L`) lies
//! toward `+h`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::{FeatureKind, FeatureVector, LandmarkFrame, NUM_LANDMARKS};
use crate::error::{PalsyError, Result};
use crate::io;

pub type Point = [f64; 2];

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

fn scale(a: Point, s: f64) -> Point {
    [a[0] * s, a[1] * s]
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn norm(a: Point) -> f64 {
    libm::hypot(a[0], a[1])
}

fn mean(points: &[Point]) -> Point {
    let s = points.iter().fold([0.0, 0.0], |acc, &p| add(acc, p));
    scale(s, 1.0 / points.len() as f64)
}

/// Clamp to `[0, 1]`; NaN maps to 0.
fn unit(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

/// `min/max`, or 1 when both are (near) zero.
pub fn ratio(x: f64, y: f64) -> f64 {
    let hi = x.max(y);
    if hi < 1e-12 {
        1.0
    } else {
        unit(x.min(y) / hi)
    }
}

/// Landmark indices of one side of the face.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SideRoles {
    pub eyebrow_inner: usize,
    pub eyebrow_mid: usize,
    pub eyebrow_outer: usize,
    pub eye_inner: usize,
    pub eye_outer: usize,
    pub eye_top: usize,
    pub eye_bottom: usize,
    pub mouth_corner: usize,
}

const SIDE_ROLE_NAMES: [&str; 8] = [
    "eyebrow_inner",
    "eyebrow_mid",
    "eyebrow_outer",
    "eye_inner",
    "eye_outer",
    "eye_top",
    "eye_bottom",
    "mouth_corner",
];

const CENTRAL_ROLE_NAMES: [&str; 5] = ["forehead_mid", "chin", "nose_tip", "upper_lip_mid", "lower_lip_mid"];

impl SideRoles {
    fn as_array(&self) -> [usize; 8] {
        [
            self.eyebrow_inner,
            self.eyebrow_mid,
            self.eyebrow_outer,
            self.eye_inner,
            self.eye_outer,
            self.eye_top,
            self.eye_bottom,
            self.mouth_corner,
        ]
    }

    fn from_array(a: [usize; 8]) -> Self {
        SideRoles {
            eyebrow_inner: a[0],
            eyebrow_mid: a[1],
            eyebrow_outer: a[2],
            eye_inner: a[3],
            eye_outer: a[4],
            eye_top: a[5],
            eye_bottom: a[6],
            mouth_corner: a[7],
        }
    }
}

/// Semantic landmark roles. Serialized as a flat `{role: index}` object with
/// side-specific roles suffixed `_L` / `_R`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoleMap {
    pub forehead_mid: usize,
    pub chin: usize,
    pub nose_tip: usize,
    pub upper_lip_mid: usize,
    pub lower_lip_mid: usize,
    pub left: SideRoles,
    pub right: SideRoles,
}

impl RoleMap {
    pub const ROLE_COUNT: usize = 21;

    pub fn to_map(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        let central = [self.forehead_mid, self.chin, self.nose_tip, self.upper_lip_mid, self.lower_lip_mid];
        for (name, idx) in CENTRAL_ROLE_NAMES.iter().zip(central) {
            m.insert(name.to_string(), idx);
        }
        for (suffix, side) in [("L", &self.left), ("R", &self.right)] {
            for (name, idx) in SIDE_ROLE_NAMES.iter().zip(side.as_array()) {
                m.insert(format!("{name}_{suffix}"), idx);
            }
        }
        m
    }

    pub fn from_map(map: &BTreeMap<String, usize>) -> Result<Self> {
        let get = |k: &str| map.get(k).copied().ok_or_else(|| PalsyError::Schema(format!("roles: missing role `{k}`")));
        let side = |suffix: &str| -> Result<SideRoles> {
            let mut a = [0; 8];
            for (slot, name) in a.iter_mut().zip(SIDE_ROLE_NAMES) {
                *slot = get(&format!("{name}_{suffix}"))?;
            }
            Ok(SideRoles::from_array(a))
        };
        let roles = RoleMap {
            forehead_mid: get("forehead_mid")?,
            chin: get("chin")?,
            nose_tip: get("nose_tip")?,
            upper_lip_mid: get("upper_lip_mid")?,
            lower_lip_mid: get("lower_lip_mid")?,
            left: side("L")?,
            right: side("R")?,
        };
        if map.len() != Self::ROLE_COUNT {
            let known = roles.to_map();
            let extra: Vec<&String> = map.keys().filter(|k| !known.contains_key(*k)).collect();
            return Err(PalsyError::Schema(format!("roles: unknown role(s) {extra:?}")));
        }
        roles.validate()?;
        Ok(roles)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.to_map();
        let mut seen = BTreeMap::new();
        for (name, &idx) in &m {
            if idx >= NUM_LANDMARKS {
                return Err(PalsyError::Schema(format!("roles: `{name}` index {idx} is not below {NUM_LANDMARKS}")));
            }
            if let Some(other) = seen.insert(idx, name) {
                return Err(PalsyError::Schema(format!("roles: `{other}` and `{name}` share index {idx}")));
            }
        }
        Ok(())
    }

    /// The map with left and right roles exchanged.
    pub fn swapped(&self) -> Self {
        RoleMap { left: self.right, right: self.left, ..self.clone() }
    }

    pub fn pairs(&self) -> [(usize, usize); 8] {
        let (l, r) = (self.left.as_array(), self.right.as_array());
        std::array::from_fn(|i| (l[i], r[i]))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_map()).expect("role map serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<String, usize> =
            serde_json::from_str(text).map_err(|e| PalsyError::Schema(format!("roles: {e}")))?;
        Self::from_map(&map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&io::read_to_string(path)?).map_err(|e| PalsyError::Schema(format!("{}: {e}", path.display())))
    }
}

impl Serialize for RoleMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_map().serialize(s)
    }
}

impl<'de> Deserialize<'de> for RoleMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let map = BTreeMap::<String, usize>::deserialize(d)?;
        RoleMap::from_map(&map).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MidlineModel {
    pub origin: Point,
    pub u: Point,
    pub h: Point,
    /// Interocular distance.
    pub d: f64,
    pub eye_center_l: Point,
    pub eye_center_r: Point,
}

fn eye_center(frame: &LandmarkFrame, s: &SideRoles) -> Point {
    mean(&[frame.point(s.eye_inner), frame.point(s.eye_outer), frame.point(s.eye_top), frame.point(s.eye_bottom)])
}

pub fn build_midline(frame: &LandmarkFrame, roles: &RoleMap) -> Result<MidlineModel> {
    let origin = frame.point(roles.forehead_mid);
    let axis = sub(frame.point(roles.chin), origin);
    let len = norm(axis);
    if !(len.is_finite() && len > 1e-12) {
        return Err(PalsyError::Geometry(format!(
            "frame {}/{}: degenerate midline (forehead_mid and chin coincide)",
            frame.subject_id, frame.frame_id
        )));
    }
    let u = scale(axis, 1.0 / len);
    let h = [u[1], -u[0]];
    let (el, er) = (eye_center(frame, &roles.left), eye_center(frame, &roles.right));
    let d = norm(sub(el, er));
    if !(d.is_finite() && d >= 1e-9) {
        return Err(PalsyError::Geometry(format!(
            "frame {}/{}: interocular distance {d:e} is too small",
            frame.subject_id, frame.frame_id
        )));
    }
    Ok(MidlineModel { origin, u, h, d, eye_center_l: el, eye_center_r: er })
}

impl MidlineModel {
    /// Signed angle of `v` against `h` in degrees, folded to `(-90, 90]`.
    pub fn theta(&self, v: Point) -> f64 {
        fold(libm::atan2(dot(v, self.u), dot(v, self.h)).to_degrees())
    }

    /// `theta` of `v` reflected across the midline.
    pub fn theta_mirrored(&self, v: Point) -> f64 {
        fold(libm::atan2(dot(v, self.u), -dot(v, self.h)).to_degrees())
    }

    /// Perpendicular distance to the midline.
    pub fn dml(&self, p: Point) -> f64 {
        dot(sub(p, self.origin), self.h).abs()
    }

    pub fn mirror(&self, p: Point) -> Point {
        sub(p, scale(self.h, 2.0 * dot(sub(p, self.origin), self.h)))
    }
}

fn fold(mut deg: f64) -> f64 {
    while deg > 90.0 {
        deg -= 180.0;
    }
    while deg <= -90.0 {
        deg += 180.0;
    }
    deg
}

fn angle_score(deg: f64) -> f64 {
    unit(deg.abs().min(45.0) / 45.0)
}

/// Score for the inclination difference of a left segment and the mirrored
/// right segment; zero on a symmetric face.
fn angle_diff_score(m: &MidlineModel, left: Point, right: Point) -> f64 {
    angle_score(fold(m.theta(left) - m.theta_mirrored(right)))
}

/// The 29 handcrafted features, in order `F1..F29`.
pub fn handcrafted_values(frame: &LandmarkFrame, roles: &RoleMap) -> Result<[f64; 29]> {
    let m = build_midline(frame, roles)?;
    let p = |i: usize| frame.point(i);
    let (l, r) = (&roles.left, &roles.right);
    let d = m.d;
    let seg = |a: usize, b: usize| sub(p(b), p(a));
    let dist = |a: usize, b: usize| norm(sub(p(a), p(b)));
    let mut f = [0.0; 29];

    f[0] = angle_score(m.theta(seg(l.eyebrow_inner, l.eyebrow_outer)));
    f[1] = angle_score(m.theta(seg(r.eyebrow_inner, r.eyebrow_outer)));
    f[2] = angle_diff_score(&m, seg(l.eyebrow_inner, l.eyebrow_outer), seg(r.eyebrow_inner, r.eyebrow_outer));

    f[3] = angle_score(m.theta(seg(l.eye_inner, l.eye_outer)));
    f[4] = angle_score(m.theta(seg(r.eye_inner, r.eye_outer)));
    f[5] = angle_diff_score(&m, seg(l.eye_inner, l.eye_outer), seg(r.eye_inner, r.eye_outer));

    f[6] = angle_score(m.theta(seg(r.mouth_corner, l.mouth_corner)));
    let lip = seg(roles.upper_lip_mid, roles.lower_lip_mid);
    let lip_len = norm(lip);
    f[7] = if lip_len < 1e-12 * d || !lip_len.is_finite() {
        0.0
    } else {
        let a = libm::acos((dot(lip, m.u) / lip_len).clamp(-1.0, 1.0)).to_degrees();
        angle_score(a.min(180.0 - a))
    };

    f[8] = unit(dist(l.eye_top, l.eye_bottom) / d);
    f[9] = unit(dist(r.eye_top, r.eye_bottom) / d);
    f[10] = ratio(f[8], f[9]);

    let ear = |s: &SideRoles| {
        let num = dist(s.eye_top, s.eye_bottom);
        let den = dist(s.eye_inner, s.eye_outer);
        if den < 1e-12 {
            if num < 1e-12 {
                0.0
            } else {
                1.0
            }
        } else {
            unit(num / den)
        }
    };
    f[11] = ear(l);
    f[12] = ear(r);
    f[13] = ratio(f[11], f[12]);

    f[14] = unit(dist(l.eyebrow_mid, l.eye_top) / d);
    f[15] = unit(dist(r.eyebrow_mid, r.eye_top) / d);
    f[16] = ratio(f[14], f[15]);

    f[17] = unit(m.dml(p(l.mouth_corner)) / d);
    f[18] = unit(m.dml(p(r.mouth_corner)) / d);
    f[19] = ratio(f[17], f[18]);

    let mouth_center = scale(add(p(roles.upper_lip_mid), p(roles.lower_lip_mid)), 0.5);
    let half = 0.5 * d;
    f[20] = unit(dot(sub(p(l.mouth_corner), mouth_center), m.u).abs() / half);
    f[21] = unit(dot(sub(p(r.mouth_corner), mouth_center), m.u).abs() / half);
    f[22] = unit(dot(sub(p(l.mouth_corner), p(r.mouth_corner)), m.u).abs() / half);

    f[23] = unit(dist(l.mouth_corner, r.mouth_corner) / (2.0 * d));
    f[24] = unit(dist(roles.upper_lip_mid, roles.lower_lip_mid) / d);

    f[25] = unit(m.dml(p(roles.nose_tip)) / half);
    f[26] = unit(m.dml(p(roles.upper_lip_mid)) / half);
    f[27] = unit(m.dml(p(roles.lower_lip_mid)) / half);

    let pairs = roles.pairs();
    let total: f64 = pairs.iter().map(|&(li, ri)| norm(sub(m.mirror(p(ri)), p(li))) / d).sum();
    f[28] = unit(total / pairs.len() as f64);
    Ok(f)
}

pub fn handcrafted29(frame: &LandmarkFrame, roles: &RoleMap) -> Result<FeatureVector> {
    let v = handcrafted_values(frame, roles)?;
    FeatureVector::new(FeatureKind::Handcrafted29, &frame.subject_id, &frame.frame_id, v.to_vec())
}

/// Landmarks in the face frame: origin at the eye-centre midpoint, `u` as
/// `+y`, unit interocular distance; flattened `x0, y0, x1, y1, ...`.
pub fn flatten_coordinates(frame: &LandmarkFrame, roles: &RoleMap) -> Result<FeatureVector> {
    let m = build_midline(frame, roles)?;
    let center = scale(add(m.eye_center_l, m.eye_center_r), 0.5);
    let mut values = Vec::with_capacity(2 * NUM_LANDMARKS);
    for &p in &frame.landmarks {
        let q = sub(p, center);
        values.push(dot(q, m.h) / m.d);
        values.push(dot(q, m.u) / m.d);
    }
    FeatureVector::new(FeatureKind::Coordinates956, &frame.subject_id, &frame.frame_id, values)
}

pub fn expression_features(frame: &LandmarkFrame) -> Result<FeatureVector> {
    let b = frame.blendshapes.as_ref().ok_or_else(|| {
        PalsyError::ModalityUnavailable(format!("frame {}/{} has no blendshapes", frame.subject_id, frame.frame_id))
    })?;
    FeatureVector::new(FeatureKind::Expression52, &frame.subject_id, &frame.frame_id, b.clone())
}

pub fn feature_names() -> Vec<String> {
    FeatureKind::Handcrafted29.names()
}

/// Feature indices (0-based) that exchange under a left/right reflection.
pub const MIRROR_PAIRS: [(usize, usize); 7] = [(0, 1), (3, 4), (8, 9), (11, 12), (14, 15), (17, 18), (20, 21)];

/// Feature indices (0-based) that a reflection leaves unchanged.
pub const MIRROR_INVARIANT: [usize; 15] = [2, 5, 6, 7, 10, 13, 16, 19, 22, 23, 24, 25, 26, 27, 28];
