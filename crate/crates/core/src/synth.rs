//! Synthetic Bolivian plates and perspective scenes with exact ground truth.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{AnnotationRecord, BBox};
use crate::eval::{AngleCategory, Distance, EvalRecord, IllumCategory};
use crate::imaging::io::{write_png, CodecError};
use crate::imaging::{estimate_homography, Homography, ImageBuffer, Point2};
use crate::reading::font::{word_layout, Coverage, COUNTRY_WORD};
use crate::reading::GlyphClass;

pub const PLATE_W: usize = 440;
pub const PLATE_H: usize = 140;
pub const DEPARTMENTS: &[char] = &['L', 'C', 'S', 'O', 'P', 'T', 'H', 'B', 'N'];

const INK: [f64; 3] = [15.0, 50.0, 150.0];
const BORDER: usize = 5;
const GLYPH_W: usize = 40;
const GLYPH_H: usize = 72;
const GLYPH_TOP: usize = 44;
const GLYPH_STROKE: f64 = 7.0;
const GLYPH_GAP: usize = 10;
/// Extra space between the digit and letter groups.
const GROUP_GAP: usize = 34;
const WORD_H: f64 = 16.0;
const WORD_TOP: f64 = 10.0;
const WORD_STROKE: f64 = 2.5;
const DEPT_BOX: (usize, usize, usize, usize) = (398, 9, 12, 18);
const DEPT_STROKE: f64 = 3.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid plate spec: {0}")]
    InvalidSpec(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("scene rejected: {0}")]
    Rejected(&'static str),
    #[error("corpus must contain at least one plate")]
    EmptyCorpus,
    #[error("no acceptable scene after {0} attempts")]
    Exhausted(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlateSpec {
    pub digits: String,
    pub letters: String,
    pub department: char,
    pub seed: u64,
}

impl PlateSpec {
    pub fn new(digits: &str, letters: &str, department: char, seed: u64) -> Result<Self, SynthError> {
        let spec = PlateSpec { digits: digits.into(), letters: letters.into(), department, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let nd = self.digits.chars().count();
        if !(3..=4).contains(&nd) || !self.digits.chars().all(|c| c.is_ascii_digit()) {
            return Err(SynthError::InvalidSpec(format!("digits {:?}", self.digits)));
        }
        if self.letters.chars().count() != 3 || !self.letters.chars().all(|c| c.is_ascii_uppercase()) {
            return Err(SynthError::InvalidSpec(format!("letters {:?}", self.letters)));
        }
        if !self.department.is_ascii_uppercase() {
            return Err(SynthError::InvalidSpec(format!("department {:?}", self.department)));
        }
        Ok(())
    }

    /// `four_digit_p` is the probability of a four-digit number.
    pub fn random(rng: &mut impl Rng, four_digit_p: f64) -> Self {
        let nd = if rng.random::<f64>() < four_digit_p { 4 } else { 3 };
        let digits = (0..nd).map(|_| char::from(b'0' + rng.random_range(0..10u8))).collect();
        let letters = (0..3).map(|_| char::from(b'A' + rng.random_range(0..26u8))).collect();
        let department = DEPARTMENTS[rng.random_range(0..DEPARTMENTS.len())];
        PlateSpec { digits, letters, department, seed: rng.random() }
    }

    /// Plate string as read (no department code).
    pub fn text(&self) -> String {
        format!("{}{}", self.digits, self.letters)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlyphRole {
    Main,
    Country,
    Department,
}

/// Pixel box of one printed element in plate-local coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharBox {
    pub glyph: GlyphClass,
    pub role: GlyphRole,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

#[derive(Debug, Clone)]
pub struct RenderedPlate {
    pub image: ImageBuffer,
    pub char_boxes: Vec<CharBox>,
    pub text: String,
}

/// Continuous-coordinate box whose covered pixels are `x0..x0 + w`.
fn pixel_slot(x0: f64, y0: f64) -> (f64, f64) {
    (x0 - 0.5, y0 - 0.5)
}

fn covered_box(left: f64, top: f64, w: f64, h: f64) -> BBox {
    BBox::new((left + 0.5).floor(), (top + 0.5).floor(), (left + w + 0.5).ceil(), (top + h + 0.5).ceil())
}

/// Left pixel of each main-line glyph, centred on the plate.
fn main_line_columns(n_digits: usize, n_letters: usize) -> Vec<usize> {
    let n = n_digits + n_letters;
    let total = n * GLYPH_W + (n - 2) * GLYPH_GAP + GROUP_GAP;
    let mut x = (PLATE_W - total) / 2;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(x);
        x += GLYPH_W + if i + 1 == n_digits { GROUP_GAP } else { GLYPH_GAP };
    }
    out
}

pub fn render_plate(spec: &PlateSpec) -> Result<RenderedPlate, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ink: [f64; 3] = INK.map(|c| c + rng.random_range(-6.0..=6.0));

    let mut cov = Coverage::new(PLATE_W, PLATE_H);
    let mut boxes = Vec::new();
    let text = spec.text();
    let cols = main_line_columns(spec.digits.len(), spec.letters.len());
    for (c, &x0) in text.chars().zip(&cols) {
        let (l, t) = pixel_slot(x0 as f64, GLYPH_TOP as f64);
        cov.draw_glyph(c, l, t, GLYPH_W as f64, GLYPH_H as f64, GLYPH_STROKE);
        boxes.push(CharBox {
            glyph: GlyphClass::Char(c),
            role: GlyphRole::Main,
            bbox: BBox::new(x0 as f64, GLYPH_TOP as f64, (x0 + GLYPH_W) as f64, (GLYPH_TOP + GLYPH_H) as f64),
        });
    }

    let layout = word_layout(COUNTRY_WORD, (PLATE_W as f64 - 1.0) / 2.0, WORD_H);
    let (_, wt) = pixel_slot(0.0, WORD_TOP);
    for &(c, left, w) in &layout {
        cov.draw_glyph(c, left, wt, w, WORD_H, WORD_STROKE);
    }
    let first = layout.first().expect("country word is non-empty");
    let last = layout.last().expect("country word is non-empty");
    boxes.push(CharBox {
        glyph: GlyphClass::Bolivia,
        role: GlyphRole::Country,
        bbox: covered_box(first.1, wt, last.1 + last.2 - first.1, WORD_H),
    });

    let (dx, dy, dw, dh) = DEPT_BOX;
    let (l, t) = pixel_slot(dx as f64, dy as f64);
    cov.draw_glyph(spec.department, l, t, dw as f64, dh as f64, DEPT_STROKE);
    boxes.push(CharBox {
        glyph: GlyphClass::Char(spec.department),
        role: GlyphRole::Department,
        bbox: BBox::new(dx as f64, dy as f64, (dx + dw) as f64, (dy + dh) as f64),
    });

    let image = ImageBuffer::from_fn_rgb(PLATE_W, PLATE_H, |x, y| {
        if x < BORDER || y < BORDER || x >= PLATE_W - BORDER || y >= PLATE_H - BORDER {
            return ink.map(|c| c.round() as u8);
        }
        let a = cov.at(x, y) as f64;
        [0, 1, 2].map(|i| (255.0 * (1.0 - a) + ink[i] * a).round() as u8)
    })
    .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    Ok(RenderedPlate { image, char_boxes: boxes, text })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub gaussian_sigma: f64,
    pub salt_pepper_p: f64,
    /// Gaussian blur sigma in pixels; 0 disables.
    pub blur_sigma: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { gaussian_sigma: 0.0, salt_pepper_p: 0.0, blur_sigma: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    /// Horizontal viewing angle; 90 is frontal.
    pub h_angle: f64,
    /// Vertical viewing angle; 90 is frontal.
    pub v_angle: f64,
    pub illumination_gain: f64,
    pub noise: NoiseSpec,
    pub canvas_w: usize,
    pub canvas_h: usize,
    pub background: [u8; 3],
    pub car_color: [u8; 3],
    /// Camera-to-plate distance in plate widths.
    pub distance_ratio: f64,
    /// Shift of the plate centre from the canvas centre, in pixels.
    pub offset: [f64; 2],
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            h_angle: 90.0,
            v_angle: 90.0,
            illumination_gain: 1.0,
            noise: NoiseSpec::default(),
            canvas_w: 480,
            canvas_h: 270,
            background: [105, 105, 110],
            car_color: [205, 208, 212],
            distance_ratio: 4.0 / 3.0,
            offset: [0.0, 0.0],
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidScene(m.to_string()));
        if !(30.0..=150.0).contains(&self.h_angle) {
            return bad("h_angle outside [30, 150]");
        }
        if !(90.0..=150.0).contains(&self.v_angle) {
            return bad("v_angle outside [90, 150]");
        }
        if !(self.illumination_gain.is_finite() && self.illumination_gain >= 0.0) {
            return bad("illumination_gain must be finite and non-negative");
        }
        let n = &self.noise;
        if !(n.gaussian_sigma >= 0.0 && (0.0..=1.0).contains(&n.salt_pepper_p) && n.blur_sigma >= 0.0) {
            return bad("noise parameters out of range");
        }
        if self.canvas_w < 32 || self.canvas_h < 32 {
            return bad("canvas too small");
        }
        if !(self.distance_ratio.is_finite() && self.distance_ratio > 0.0) {
            return bad("distance_ratio must be positive");
        }
        Ok(())
    }

    pub fn focal_length(&self) -> f64 {
        1.2 * self.canvas_w as f64
    }

    pub fn angle_category(&self) -> AngleCategory {
        AngleCategory::from_angles(self.h_angle, self.v_angle)
    }
}

/// Plate-local → scene homography and the projected outer plate corners
/// (TL, TR, BR, BL).
pub fn project_plate(scene: &SceneSpec) -> Result<(Homography, [Point2; 4]), SynthError> {
    scene.validate()?;
    let (cx, cy) = ((PLATE_W as f64 - 1.0) / 2.0, (PLATE_H as f64 - 1.0) / 2.0);
    let a = (scene.h_angle - 90.0).to_radians();
    let b = (scene.v_angle - 90.0).to_radians();
    let f = scene.focal_length();
    let dist = scene.distance_ratio * PLATE_W as f64;
    let pc = (
        (scene.canvas_w as f64 - 1.0) / 2.0 + scene.offset[0],
        (scene.canvas_h as f64 - 1.0) / 2.0 + scene.offset[1],
    );
    let project = |u: f64, v: f64| -> Option<Point2> {
        let (x, y) = (u - cx, v - cy);
        // About the vertical axis, then the horizontal one.
        let (x1, z1) = (x * a.cos(), -x * a.sin());
        let (y2, z2) = (y * b.cos() - z1 * b.sin(), y * b.sin() + z1 * b.cos());
        let z = z2 + dist;
        if z <= 1e-6 {
            return None;
        }
        Some(Point2::new(f * x1 / z + pc.0, f * y2 / z + pc.1))
    };
    let local = plate_outline();
    let mut corners = [Point2::new(0.0, 0.0); 4];
    for (dst, src) in corners.iter_mut().zip(&local) {
        *dst = project(src.x, src.y).ok_or(SynthError::Rejected("plate corner behind camera"))?;
    }
    let h = estimate_homography(&local, &corners).map_err(|_| SynthError::Rejected("degenerate projection"))?;
    Ok((h, corners))
}

/// Outer plate corners in plate-local coordinates.
pub fn plate_outline() -> [Point2; 4] {
    let (r, b) = (PLATE_W as f64 - 0.5, PLATE_H as f64 - 0.5);
    [Point2::new(-0.5, -0.5), Point2::new(r, -0.5), Point2::new(r, b), Point2::new(-0.5, b)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub text: String,
    pub plate_corners: [Point2; 4],
    pub char_boxes: Vec<CharBox>,
    pub angle_category: AngleCategory,
    pub illum_category: IllumCategory,
    pub plate_box: BBox,
    pub car_box: BBox,
    /// Mean HSV value over the plate region after gain, before noise.
    pub mean_plate_v: f64,
}

const CANVAS_MARGIN: f64 = 12.0;
const SUPERSAMPLE: [(f64, f64); 4] = [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)];

pub fn compose_scene(plate: &RenderedPlate, scene: &SceneSpec) -> Result<(ImageBuffer, GroundTruth), SynthError> {
    let (h, corners) = project_plate(scene)?;
    let (w, ht) = (scene.canvas_w as f64, scene.canvas_h as f64);
    if corners.iter().any(|p| {
        p.x < CANVAS_MARGIN || p.y < CANVAS_MARGIN || p.x > w - 1.0 - CANVAS_MARGIN || p.y > ht - 1.0 - CANVAS_MARGIN
    }) {
        return Err(SynthError::Rejected("plate corner outside canvas margin"));
    }
    let inv = h.inverse().map_err(|_| SynthError::Rejected("singular projection"))?;

    let xs = corners.map(|p| p.x);
    let ys = corners.map(|p| p.y);
    let (x0, x1) = (xs.iter().cloned().fold(f64::MAX, f64::min), xs.iter().cloned().fold(f64::MIN, f64::max));
    let (y0, y1) = (ys.iter().cloned().fold(f64::MAX, f64::min), ys.iter().cloned().fold(f64::MIN, f64::max));
    // Corners are continuous; the plate box covers every pixel they touch.
    let plate_box = BBox::new((x0 + 0.5).floor(), (y0 + 0.5).floor(), (x1 + 0.5).ceil(), (y1 + 0.5).ceil());
    let (pw, ph) = (plate_box.width(), plate_box.height());
    let car_box = BBox::new(
        (plate_box.x_min - 0.5 * pw).max(0.0),
        (plate_box.y_min - 1.2 * ph).max(0.0),
        (plate_box.x_max + 0.5 * pw).min(w),
        (plate_box.y_max + 0.4 * ph).min(ht),
    );

    let (pw_f, ph_f) = (PLATE_W as f64, PLATE_H as f64);
    let src = &plate.image;
    let gain = scene.illumination_gain;
    let mut img = ImageBuffer::new(scene.canvas_w, scene.canvas_h, 3).map_err(|e| SynthError::InvalidScene(e.to_string()))?;
    let mut plate_v_sum = 0.0;
    let mut plate_px = 0usize;
    let rows: Vec<(Vec<u8>, f64, usize)> = (0..scene.canvas_h)
        .into_par_iter()
        .map(|y| {
            let mut row = vec![0u8; scene.canvas_w * 3];
            let (mut vsum, mut n) = (0.0, 0usize);
            for x in 0..scene.canvas_w {
                let mut acc = [0.0f64; 3];
                for (dx, dy) in SUPERSAMPLE {
                    let (sx, sy) = (x as f64 + dx, y as f64 + dy);
                    let p = inv.apply(Point2::new(sx, sy));
                    let on_plate = p.is_finite() && p.x >= -0.5 && p.y >= -0.5 && p.x <= pw_f - 0.5 && p.y <= ph_f - 0.5;
                    let rgb = if on_plate {
                        [0, 1, 2].map(|c| src.sample_bilinear(p.x, p.y, c).unwrap_or(255.0))
                    } else {
                        let inside_car = sx >= car_box.x_min - 0.5
                            && sx < car_box.x_max - 0.5
                            && sy >= car_box.y_min - 0.5
                            && sy < car_box.y_max - 0.5;
                        (if inside_car { scene.car_color } else { scene.background }).map(f64::from)
                    };
                    for c in 0..3 {
                        acc[c] += rgb[c] / SUPERSAMPLE.len() as f64;
                    }
                }
                let px = acc.map(|v| (v * gain).round().clamp(0.0, 255.0) as u8);
                row[x * 3..x * 3 + 3].copy_from_slice(&px);
                let centre = inv.apply(Point2::new(x as f64, y as f64));
                if centre.is_finite() && centre.x >= -0.5 && centre.y >= -0.5 && centre.x <= pw_f - 0.5 && centre.y <= ph_f - 0.5 {
                    vsum += f64::from(*px.iter().max().unwrap_or(&0));
                    n += 1;
                }
            }
            (row, vsum, n)
        })
        .collect();
    for (y, (row, vsum, n)) in rows.into_iter().enumerate() {
        img.data_mut()[y * scene.canvas_w * 3..(y + 1) * scene.canvas_w * 3].copy_from_slice(&row);
        plate_v_sum += vsum;
        plate_px += n;
    }
    let mean_plate_v = if plate_px > 0 { plate_v_sum / plate_px as f64 } else { 0.0 };

    apply_noise(&mut img, &scene.noise, scene.seed);

    let gt = GroundTruth {
        text: plate.text.clone(),
        plate_corners: corners,
        char_boxes: plate.char_boxes.clone(),
        angle_category: scene.angle_category(),
        illum_category: IllumCategory::from_mean_v(mean_plate_v),
        plate_box,
        car_box,
        mean_plate_v,
    };
    Ok((img, gt))
}

fn apply_noise(img: &mut ImageBuffer, noise: &NoiseSpec, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e6f_6973_65);
    if noise.gaussian_sigma > 0.0 {
        let normal = Normal::new(0.0, noise.gaussian_sigma).expect("sigma is positive and finite");
        for v in img.data_mut() {
            *v = (f64::from(*v) + normal.sample(&mut rng)).round().clamp(0.0, 255.0) as u8;
        }
    }
    if noise.salt_pepper_p > 0.0 {
        let (w, h) = (img.width(), img.height());
        for y in 0..h {
            for x in 0..w {
                if rng.random::<f64>() < noise.salt_pepper_p {
                    let v = if rng.random::<bool>() { 255 } else { 0 };
                    img.pixel_mut(x, y).fill(v);
                }
            }
        }
    }
    if noise.blur_sigma > 0.0 {
        *img = gaussian_blur(img, noise.blur_sigma);
    }
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(img: &ImageBuffer, sigma: f64) -> ImageBuffer {
    let r = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    let (w, h, ch) = (img.width(), img.height(), img.channels() as usize);
    let src = img.data();
    let pass = |data: &[u8], horizontal: bool| -> Vec<u8> {
        let mut out = vec![0u8; data.len()];
        for y in 0..h {
            for x in 0..w {
                for c in 0..ch {
                    let mut acc = 0.0;
                    for (j, kv) in k.iter().enumerate() {
                        let o = j as isize - r;
                        let (sx, sy) = if horizontal {
                            ((x as isize + o).clamp(0, w as isize - 1) as usize, y)
                        } else {
                            (x, (y as isize + o).clamp(0, h as isize - 1) as usize)
                        };
                        acc += kv * f64::from(data[(sy * w + sx) * ch + c]);
                    }
                    out[(y * w + x) * ch + c] = acc.round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        out
    };
    let tmp = pass(src, true);
    let out = pass(&tmp, false);
    ImageBuffer::from_raw(w, h, img.channels(), out).expect("same shape as input")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AngleDist {
    Frontal,
    /// Uniform over the given ranges.
    Uniform { h: (f64, f64), v: (f64, f64) },
    /// Uniform over the full viewing range, restricted to one category.
    Category { category: AngleCategory },
}

impl AngleDist {
    fn sample(&self, rng: &mut impl Rng) -> (f64, f64) {
        let uni = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let mut r = ChaCha8Rng::seed_from_u64(rng.random());
        match *self {
            AngleDist::Frontal => (90.0, 90.0),
            AngleDist::Uniform { h, v } => (uni(&mut r, h), uni(&mut r, v)),
            AngleDist::Category { category } => loop {
                let (h, v) = (uni(&mut r, (30.0, 150.0)), uni(&mut r, (90.0, 150.0)));
                if AngleCategory::from_angles(h, v) == category {
                    break (h, v);
                }
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub n: usize,
    pub seed: u64,
    pub angles: AngleDist,
    pub gain: (f64, f64),
    pub gaussian_sigma: (f64, f64),
    pub salt_pepper_p: (f64, f64),
    pub blur_sigma: (f64, f64),
    pub distance_ratio: (f64, f64),
    /// Maximum plate-centre shift from the canvas centre, pixels.
    pub max_offset: f64,
    pub four_digit_p: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n: 100,
            seed: 0,
            angles: AngleDist::Frontal,
            gain: (1.0, 1.0),
            gaussian_sigma: (0.0, 0.0),
            salt_pepper_p: (0.0, 0.0),
            blur_sigma: (0.0, 0.0),
            distance_ratio: (4.0 / 3.0, 4.0 / 3.0),
            max_offset: 0.0,
            four_digit_p: 0.7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub name: String,
    pub plate: PlateSpec,
    pub scene: SceneSpec,
    pub image: ImageBuffer,
    pub truth: GroundTruth,
}

impl CorpusItem {
    pub fn eval_record(&self) -> EvalRecord {
        EvalRecord {
            image: self.name.clone(),
            plate: self.truth.text.clone(),
            lux: Some(self.scene.illumination_gain),
            distance: Distance::Normal,
            angle: self.truth.angle_category,
            illumination: self.truth.illum_category,
            corners: Some(self.truth.plate_corners.map(|p| [p.x, p.y])),
        }
    }

    pub fn annotation(&self) -> AnnotationRecord {
        AnnotationRecord {
            image: self.name.clone(),
            cars: vec![self.truth.car_box.to_array()],
            plates: vec![self.truth.plate_box.to_array()],
        }
    }
}

#[derive(Serialize)]
struct TruthLine<'a> {
    image: &'a str,
    plate_spec: &'a PlateSpec,
    scene: &'a SceneSpec,
    #[serde(flatten)]
    truth: &'a GroundTruth,
}

/// Independent stream per item so results do not depend on scheduling.
pub fn item_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const MAX_ATTEMPTS: usize = 200;

fn generate_item(spec: &CorpusSpec, index: usize) -> Result<CorpusItem, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(item_seed(spec.seed, index));
    let plate_spec = PlateSpec::random(&mut rng, spec.four_digit_p);
    let plate = render_plate(&plate_spec)?;
    let uni = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..=hi) } else { lo };
    for _ in 0..MAX_ATTEMPTS {
        let (h, v) = spec.angles.sample(&mut rng);
        let scene = SceneSpec {
            h_angle: h,
            v_angle: v,
            illumination_gain: uni(&mut rng, spec.gain),
            noise: NoiseSpec {
                gaussian_sigma: uni(&mut rng, spec.gaussian_sigma),
                salt_pepper_p: uni(&mut rng, spec.salt_pepper_p),
                blur_sigma: uni(&mut rng, spec.blur_sigma),
            },
            distance_ratio: uni(&mut rng, spec.distance_ratio),
            offset: [
                uni(&mut rng, (-spec.max_offset, spec.max_offset)),
                uni(&mut rng, (-spec.max_offset, spec.max_offset)),
            ],
            seed: rng.random(),
            ..SceneSpec::default()
        };
        match compose_scene(&plate, &scene) {
            Ok((image, truth)) => {
                return Ok(CorpusItem { name: format!("images/plate_{index:05}.png"), plate: plate_spec, scene, image, truth })
            }
            Err(SynthError::Rejected(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(SynthError::Exhausted(MAX_ATTEMPTS))
}

/// Renders the corpus in memory, in index order.
pub fn generate_items(spec: &CorpusSpec) -> Result<Vec<CorpusItem>, SynthError> {
    if spec.n == 0 {
        return Err(SynthError::EmptyCorpus);
    }
    (0..spec.n).into_par_iter().map(|i| generate_item(spec, i)).collect()
}

/// Writes `images/`, `manifest.jsonl`, `annotations.jsonl` and
/// `ground_truth.jsonl` under `dir`.
pub fn write_corpus(dir: &Path, items: &[CorpusItem]) -> Result<(), SynthError> {
    fs::create_dir_all(dir.join("images"))?;
    items.par_iter().try_for_each(|it| write_png(&it.image, dir.join(&it.name)))?;
    let mut manifest = fs::File::create(dir.join("manifest.jsonl"))?;
    let mut ann = fs::File::create(dir.join("annotations.jsonl"))?;
    let mut gt = fs::File::create(dir.join("ground_truth.jsonl"))?;
    for it in items {
        writeln!(manifest, "{}", serde_json::to_string(&it.eval_record())?)?;
        writeln!(ann, "{}", serde_json::to_string(&it.annotation())?)?;
        let line = TruthLine { image: &it.name, plate_spec: &it.plate, scene: &it.scene, truth: &it.truth };
        writeln!(gt, "{}", serde_json::to_string(&line)?)?;
    }
    Ok(())
}

pub fn generate_corpus(spec: &CorpusSpec, dir: &Path) -> Result<Vec<CorpusItem>, SynthError> {
    let items = generate_items(spec)?;
    write_corpus(dir, &items)?;
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rectify::{calculate_geometry, Quadrilateral};

    fn spec(d: &str) -> PlateSpec {
        PlateSpec::new(d, "ABC", 'L', 3).unwrap()
    }

    #[test]
    fn plate_layout() {
        let p = render_plate(&spec("1234")).unwrap();
        assert_eq!((p.image.width(), p.image.height()), (PLATE_W, PLATE_H));
        let main: Vec<_> = p.char_boxes.iter().filter(|b| b.role == GlyphRole::Main).collect();
        assert_eq!(main.len(), 7);
        let text: String = main.iter().filter_map(|b| b.glyph.as_char()).collect();
        assert_eq!(text, "1234ABC");
        let country = p.char_boxes.iter().find(|b| b.role == GlyphRole::Country).unwrap();
        assert!((country.bbox.x_center() - 219.5).abs() < 2.0);
        assert!(country.bbox.y_max <= main[0].bbox.y_min);
        let dept = p.char_boxes.iter().find(|b| b.role == GlyphRole::Department).unwrap();
        assert!(dept.bbox.x_center() >= 0.85 * PLATE_W as f64);
        assert_eq!(render_plate(&spec("123")).unwrap().char_boxes.iter().filter(|b| b.role == GlyphRole::Main).count(), 6);
    }

    #[test]
    fn glyph_boxes_contain_their_ink() {
        let p = render_plate(&spec("1234")).unwrap();
        let g = p.image.to_gray();
        for b in p.char_boxes.iter().filter(|b| b.role == GlyphRole::Main) {
            let (x0, y0, x1, y1) = (b.bbox.x_min as usize, b.bbox.y_min as usize, b.bbox.x_max as usize, b.bbox.y_max as usize);
            let ink = |x: usize, y: usize| g.get(x, y, 0) < 128;
            let inside = (y0..y1).flat_map(|y| (x0..x1).map(move |x| (x, y))).filter(|&(x, y)| ink(x, y)).count();
            assert!(inside > 100);
            for y in y0..y1 {
                assert!(!ink(x0 - 2, y) && !ink(x1 + 1, y));
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let a = render_plate(&spec("1234")).unwrap();
        let b = render_plate(&spec("1234")).unwrap();
        assert_eq!(a.image.data(), b.image.data());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(PlateSpec::new("12", "ABC", 'L', 0).is_err());
        assert!(PlateSpec::new("12345", "ABC", 'L', 0).is_err());
        assert!(PlateSpec::new("1234", "AB1", 'L', 0).is_err());
        assert!(PlateSpec::new("1234", "ABC", '1', 0).is_err());
    }

    #[test]
    fn frontal_scene_is_axis_aligned() {
        let (_, c) = project_plate(&SceneSpec::default()).unwrap();
        let q = Quadrilateral::from_corners(c).unwrap();
        let m = calculate_geometry(&q);
        assert!((m.fr - 1.0).abs() < 0.01 && m.tilt_deg < 0.01);
        assert!((c[0].y - c[1].y).abs() < 1e-9 && (c[0].x - c[3].x).abs() < 1e-9);
    }

    #[test]
    fn steep_vertical_angle_is_severe() {
        let scene = SceneSpec { h_angle: 45.0, v_angle: 140.0, ..SceneSpec::default() };
        let (_, c) = project_plate(&scene).unwrap();
        let m = calculate_geometry(&Quadrilateral::from_corners(c).unwrap());
        assert!(m.fr > 1.15, "{m:?}");
    }

    #[test]
    fn low_gain_darkens_plate() {
        let p = render_plate(&spec("1234")).unwrap();
        let scene = SceneSpec { illumination_gain: 0.3, ..SceneSpec::default() };
        let (_, gt) = compose_scene(&p, &scene).unwrap();
        assert!(gt.mean_plate_v < 80.0);
        assert_eq!(gt.illum_category, IllumCategory::Low);
        let (_, gt) = compose_scene(&p, &SceneSpec::default()).unwrap();
        assert_eq!(gt.illum_category, IllumCategory::High);
    }

    #[test]
    fn scene_matches_implied_homography() {
        let p = render_plate(&spec("905")).unwrap();
        let scene = SceneSpec { h_angle: 60.0, v_angle: 120.0, distance_ratio: 1.8, ..SceneSpec::default() };
        let (img, gt) = compose_scene(&p, &scene).unwrap();
        let (h, corners) = project_plate(&scene).unwrap();
        assert_eq!(corners, gt.plate_corners);
        let inv = h.inverse().unwrap();
        let (mut err, mut n) = (0.0, 0usize);
        for y in 0..img.height() {
            for x in 0..img.width() {
                let q = inv.apply(Point2::new(x as f64, y as f64));
                if q.x < 1.0 || q.y < 1.0 || q.x > PLATE_W as f64 - 2.0 || q.y > PLATE_H as f64 - 2.0 {
                    continue;
                }
                for c in 0..3 {
                    err += (f64::from(img.get(x, y, c)) - p.image.sample_bilinear(q.x, q.y, c).unwrap()).abs();
                    n += 1;
                }
            }
        }
        assert!(err / (n as f64) < 5.0, "{}", err / n as f64);
    }

    #[test]
    fn corpus_is_reproducible_and_categorized() {
        let spec = CorpusSpec { n: 6, seed: 9, ..CorpusSpec::default() };
        let a = generate_items(&spec).unwrap();
        let b = generate_items(&spec).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image.data(), y.image.data());
            assert_eq!(x.eval_record(), y.eval_record());
            assert_eq!(x.truth.angle_category, AngleCategory::Normal);
        }
        assert!(matches!(generate_items(&CorpusSpec { n: 0, ..spec }), Err(SynthError::EmptyCorpus)));
    }

    #[test]
    fn category_sampling_respects_category() {
        let spec = CorpusSpec {
            n: 8,
            seed: 1,
            angles: AngleDist::Category { category: AngleCategory::Steep },
            distance_ratio: (1.6, 1.6),
            ..CorpusSpec::default()
        };
        for it in generate_items(&spec).unwrap() {
            assert_eq!(it.truth.angle_category, AngleCategory::Steep);
        }
    }

    #[test]
    fn blur_preserves_constant() {
        let img = ImageBuffer::from_rgb_fill(9, 7, [10, 20, 30]).unwrap();
        assert_eq!(gaussian_blur(&img, 1.5).data(), img.data());
    }
}
