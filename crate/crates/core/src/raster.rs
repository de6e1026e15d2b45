//! Black-and-white contour renderings and synthetic RGB face sketches.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::{ImageBuffer, LandmarkFrame, NUM_LANDMARKS};
use crate::error::{PalsyError, Result};
use crate::geometry::Point;
use crate::io;
use crate::synthgen::{default_contours, face_landmarks, SynthFaceParams};

pub const MIN_SIZE: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contour {
    pub name: String,
    pub indices: Vec<usize>,
    pub closed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContourSet {
    pub contours: Vec<Contour>,
}

impl ContourSet {
    pub fn validate(&self) -> Result<()> {
        for c in &self.contours {
            if c.indices.len() < 2 {
                return Err(PalsyError::Schema(format!("contour `{}` needs at least 2 points", c.name)));
            }
            if let Some(&i) = c.indices.iter().find(|&&i| i >= NUM_LANDMARKS) {
                return Err(PalsyError::Schema(format!(
                    "contour `{}`: index {i} out of range (landmarks 0..{NUM_LANDMARKS})",
                    c.name
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Contour> {
        self.contours.iter().find(|c| c.name == name)
    }

    /// Consecutive index pairs, including the closing edge of closed contours.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for c in &self.contours {
            out.extend(c.indices.windows(2).map(|w| (w[0], w[1])));
            if c.closed && c.indices.len() > 2 {
                out.push((*c.indices.last().unwrap(), c.indices[0]));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("contours serialize") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: ContourSet = serde_json::from_str(text).map_err(|e| PalsyError::Schema(format!("contours: {e}")))?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&io::read_to_string(path)?)
    }
}

fn check_size(w: usize, h: usize) -> Result<()> {
    if w < MIN_SIZE || h < MIN_SIZE {
        return Err(PalsyError::Invalid(format!("image size must be at least {MIN_SIZE}x{MIN_SIZE}, got {w}x{h}")));
    }
    Ok(())
}

/// Pixel containing a normalized coordinate, bounded to a few image widths.
fn to_pixel(p: Point, w: usize, h: usize) -> (i64, i64) {
    let conv = |v: f64, n: usize| {
        let n = n as f64;
        let v = if v.is_finite() { v } else { 0.0 };
        libm::floor((v * n).clamp(-n, 2.0 * n)) as i64
    };
    (conv(p[0], w), conv(p[1], h))
}

/// Integer Bresenham line; calls `plot` for each pixel inside the image.
pub fn bresenham(a: (i64, i64), b: (i64, i64), w: usize, h: usize, mut plot: impl FnMut(usize, usize)) {
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
            plot(x as usize, y as usize);
        }
        if x == b.0 && y == b.1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// White polylines on black for the given normalized points.
pub fn render_polylines(points: &[Point], contours: &ContourSet, w: usize, h: usize) -> Result<ImageBuffer> {
    check_size(w, h)?;
    contours.validate()?;
    if points.len() < NUM_LANDMARKS {
        return Err(PalsyError::Invalid(format!("expected {NUM_LANDMARKS} landmarks, got {}", points.len())));
    }
    let mut img = ImageBuffer::filled(w, h, 1, 0);
    for (i, j) in contours.segments() {
        bresenham(to_pixel(points[i], w, h), to_pixel(points[j], w, h), w, h, |x, y| img.set(x, y, 0, 255));
    }
    Ok(img)
}

pub fn render_line_segments(frame: &LandmarkFrame, contours: &ContourSet, size: (usize, usize)) -> Result<ImageBuffer> {
    render_polylines(&frame.landmarks, contours, size.0, size.1)
}

/// Even-odd test of a point against a polygon.
fn inside(p: Point, poly: &[Point]) -> bool {
    let mut c = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0] {
            c = !c;
        }
        j = i;
    }
    c
}

const BACKGROUND: [u8; 3] = [36, 40, 48];
const SKIN: [u8; 3] = [222, 176, 144];
const SCLERA: [u8; 3] = [244, 244, 240];
const LIPS: [u8; 3] = [178, 74, 82];
const MOUTH: [u8; 3] = [82, 24, 32];
const STROKE_FACE: [u8; 3] = [128, 84, 60];
const STROKE_FEATURE: [u8; 3] = [40, 28, 24];

/// Shaded sketch of the synthetic face: fills for skin, eyes and mouth, then
/// contour strokes.
pub fn render_synthetic_rgb(params: &SynthFaceParams, size: (usize, usize)) -> Result<ImageBuffer> {
    check_size(size.0, size.1)?;
    params.validate()?;
    render_face_rgb(&face_landmarks(params), &default_contours(), size)
}

/// Shaded sketch from landmark positions. Closed contours named
/// `face_silhouette`, `left_eye`, `right_eye`, `outer_lip` and `inner_lip`
/// are filled when present; every contour is stroked.
pub fn render_face_rgb(points: &[Point], contours: &ContourSet, size: (usize, usize)) -> Result<ImageBuffer> {
    let (w, h) = size;
    check_size(w, h)?;
    contours.validate()?;
    if points.len() < NUM_LANDMARKS {
        return Err(PalsyError::Invalid(format!("expected {NUM_LANDMARKS} landmarks, got {}", points.len())));
    }
    let fills: Vec<(Vec<Point>, [u8; 3])> = [
        ("face_silhouette", SKIN),
        ("left_eye", SCLERA),
        ("right_eye", SCLERA),
        ("outer_lip", LIPS),
        ("inner_lip", MOUTH),
    ]
    .into_iter()
    .filter_map(|(name, colour)| contours.get(name).map(|c| (c.indices.iter().map(|&i| points[i]).collect(), colour)))
    .collect();
    let mut img = ImageBuffer::filled(w, h, 3, 0);
    for y in 0..h {
        for x in 0..w {
            let p = [(x as f64 + 0.5) / w as f64, (y as f64 + 0.5) / h as f64];
            let mut colour = BACKGROUND;
            for (poly, c) in &fills {
                if inside(p, poly) {
                    colour = *c;
                }
            }
            for (ch, v) in colour.iter().enumerate() {
                img.set(x, y, ch, *v);
            }
        }
    }
    for c in &contours.contours {
        let colour = if c.name == "face_silhouette" { STROKE_FACE } else { STROKE_FEATURE };
        let single = ContourSet { contours: vec![c.clone()] };
        for (i, j) in single.segments() {
            bresenham(to_pixel(points[i], w, h), to_pixel(points[j], w, h), w, h, |x, y| {
                for (ch, v) in colour.iter().enumerate() {
                    img.set(x, y, ch, *v);
                }
            });
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::Source;
    use crate::synthgen::Side;
    use proptest::prelude::*;

    fn frame_with(points: &[(usize, Point)]) -> LandmarkFrame {
        let mut landmarks = vec![[0.5, 0.5]; NUM_LANDMARKS];
        for &(i, p) in points {
            landmarks[i] = p;
        }
        LandmarkFrame {
            subject_id: "s".into(),
            frame_id: "f".into(),
            source: Source::Synthetic,
            landmarks,
            blendshapes: None,
            label: None,
        }
    }

    fn segment_set(closed: bool, indices: Vec<usize>) -> ContourSet {
        ContourSet { contours: vec![Contour { name: "c".into(), indices, closed }] }
    }

    #[test]
    fn empty_contours_give_black_image() {
        let img = render_line_segments(&frame_with(&[]), &ContourSet::default(), (32, 32)).unwrap();
        assert!(img.pixels.iter().all(|&p| p == 0));
    }

    #[test]
    fn horizontal_segment_has_33_pixels_in_row_32() {
        let f = frame_with(&[(0, [0.25, 0.5]), (1, [0.75, 0.5])]);
        let img = render_line_segments(&f, &segment_set(false, vec![0, 1]), (64, 64)).unwrap();
        let white: Vec<(usize, usize)> =
            (0..64).flat_map(|y| (0..64).map(move |x| (x, y))).filter(|&(x, y)| img.get(x, y, 0) == 255).collect();
        assert_eq!(white.len(), 33);
        assert!(white.iter().all(|&(_, y)| y == 32));
        assert_eq!(white.first(), Some(&(16, 32)));
        assert_eq!(white.last(), Some(&(48, 32)));
    }

    #[test]
    fn bad_index_and_small_size_are_rejected() {
        let f = frame_with(&[]);
        assert!(render_line_segments(&f, &segment_set(false, vec![0, 478]), (64, 64)).is_err());
        assert!(render_line_segments(&f, &segment_set(false, vec![0]), (64, 64)).is_err());
        assert!(render_line_segments(&f, &ContourSet::default(), (8, 64)).is_err());
    }

    #[test]
    fn points_outside_the_image_are_clipped() {
        let f = frame_with(&[(0, [-3.0, 0.5]), (1, [4.0, 0.5])]);
        let img = render_line_segments(&f, &segment_set(false, vec![0, 1]), (16, 16)).unwrap();
        assert_eq!(img.pixels.iter().filter(|&&p| p == 255).count(), 16);
    }

    #[test]
    fn contour_json_round_trip() {
        let c = default_contours();
        assert_eq!(ContourSet::from_json(&c.to_json()).unwrap(), c);
        assert!(ContourSet::from_json(r#"{"contours":[{"name":"x","indices":[1,999],"closed":false}]}"#).is_err());
    }

    fn differing(a: &ImageBuffer, b: &ImageBuffer) -> usize {
        (0..a.height)
            .flat_map(|y| (0..a.width).map(move |x| (x, y)))
            .filter(|&(x, y)| (0..3).any(|c| a.get(x, y, c) != b.get(x, y, c)))
            .count()
    }

    #[test]
    fn neutral_face_is_mirror_symmetric_within_one_pixel() {
        let img = render_synthetic_rgb(&SynthFaceParams::neutral(3), (64, 64)).unwrap();
        let w = img.width;
        for y in 0..img.height {
            for x in 0..w {
                let px: Vec<u8> = (0..3).map(|c| img.get(x, y, c)).collect();
                let mx = w - 1 - x;
                let ok =
                    (mx.saturating_sub(1)..=(mx + 1).min(w - 1)).any(|xx| (0..3).all(|c| img.get(xx, y, c) == px[c]));
                assert!(ok, "pixel ({x},{y}) has no mirror match");
            }
        }
    }

    #[test]
    fn droop_changes_at_least_one_percent_of_pixels() {
        let base = SynthFaceParams::neutral(3);
        let droop = SynthFaceParams {
            droop_side: Side::Right,
            mouth_droop: 1.0,
            eye_closure_asym: 1.0,
            brow_drop: 1.0,
            ..base
        };
        let a = render_synthetic_rgb(&base, (64, 64)).unwrap();
        let b = render_synthetic_rgb(&droop, (64, 64)).unwrap();
        let n = differing(&a, &b);
        assert!(n * 100 >= 64 * 64, "only {n} pixels differ");
        assert_eq!(a, render_synthetic_rgb(&base, (64, 64)).unwrap());
    }

    fn seg_dist_cheb(p: Point, a: Point, b: Point) -> f64 {
        // Sampled Chebyshev distance from p to segment ab.
        (0..=2000)
            .map(|k| {
                let t = k as f64 / 2000.0;
                let q = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                (p[0] - q[0]).abs().max((p[1] - q[1]).abs())
            })
            .fold(f64::INFINITY, f64::min)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn white_pixels_lie_near_the_polyline(pts in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..5)) {
            let n = 32usize;
            let marked: Vec<(usize, Point)> = pts.iter().enumerate().map(|(i, &(x, y))| (i, [x, y])).collect();
            let f = frame_with(&marked);
            let set = segment_set(false, (0..pts.len()).collect());
            let img = render_line_segments(&f, &set, (n, n)).unwrap();
            let scaled: Vec<Point> = pts.iter().map(|&(x, y)| [x * n as f64, y * n as f64]).collect();
            for y in 0..n {
                for x in 0..n {
                    if img.get(x, y, 0) == 255 {
                        let c = [x as f64 + 0.5, y as f64 + 0.5];
                        let d = scaled.windows(2).map(|s| seg_dist_cheb(c, s[0], s[1])).fold(f64::INFINITY, f64::min);
                        prop_assert!(d <= 1.0 + 1e-3, "pixel ({}, {}) is {} away", x, y, d);
                    }
                }
            }
            prop_assert_eq!(&img, &render_line_segments(&f, &set, (n, n)).unwrap());
        }
    }
}
