//! Detector port, plate-in-car validation, best-box choice and padded crops.
//!
//! Boxes use half-open pixel ranges: a box covering pixel columns `a..=b`
//! has `x_min = a`, `x_max = b + 1`.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{ImageBuffer, ImagingError};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("no annotation for frame `{0}`")]
    MissingAnnotation(String),
    #[error("frame `{0}` has no file path for the external detector")]
    NoPath(String),
    #[error("external detector: {0}")]
    External(String),
    #[error("annotations: {0}")]
    Annotations(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub const fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self { x_min, y_min, x_max, y_max }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite()) && self.x_min < self.x_max && self.y_min < self.y_max
    }

    pub fn width(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y_max - self.y_min).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn x_center(&self) -> f64 {
        (self.x_min + self.x_max) / 2.0
    }

    pub fn y_center(&self) -> f64 {
        (self.y_min + self.y_max) / 2.0
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        w.max(0.0) * h.max(0.0)
    }

    pub fn expand(&self, pad: f64) -> BBox {
        BBox::new(self.x_min - pad, self.y_min - pad, self.x_max + pad, self.y_max + pad)
    }

    /// Integer pixel range inside a `w x h` frame; outer edges round outward.
    pub fn clamp_to_pixels(&self, w: usize, h: usize) -> Option<(usize, usize, usize, usize)> {
        let x0 = self.x_min.floor().clamp(0.0, w as f64) as usize;
        let y0 = self.y_min.floor().clamp(0.0, h as f64) as usize;
        let x1 = self.x_max.ceil().clamp(0.0, w as f64) as usize;
        let y1 = self.y_max.ceil().clamp(0.0, h as f64) as usize;
        (x1 > x0 && y1 > y0).then_some((x0, y0, x1, y1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub confidence: f64,
}

/// A frame and the name detectors and oracles key on.
#[derive(Debug, Clone)]
pub struct Frame {
    pub name: String,
    pub image: ImageBuffer,
    pub path: Option<PathBuf>,
}

impl Frame {
    pub fn new(name: impl Into<String>, image: ImageBuffer) -> Self {
        Self {
            name: name.into(),
            image,
            path: None,
        }
    }

    pub fn with_path(mut self, path: impl Into<PathBuf>) -> Self {
        self.path = Some(path.into());
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    #[serde(default)]
    pub cars: Vec<Detection>,
    #[serde(default)]
    pub plates: Vec<Detection>,
}

/// Car and plate detector. Implementations must only return detections
/// with `confidence >= conf_threshold`.
pub trait DetectorPort: Send + Sync {
    fn detect(&self, frame: &Frame, conf_threshold: f64) -> Result<DetectionSet, DetectError>;
}

/// Plates with at least `inside_ratio` of their area inside some car box,
/// in input order.
pub fn validate_plates(plates: &[Detection], cars: &[Detection], inside_ratio: f64) -> Vec<Detection> {
    plates
        .iter()
        .filter(|p| {
            let area = p.bbox.area();
            area > 0.0 && cars.iter().any(|c| p.bbox.intersection_area(&c.bbox) / area >= inside_ratio)
        })
        .cloned()
        .collect()
}

/// Index of the most confident plate; the first one wins ties.
pub fn best_box(plates: &[Detection]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in plates.iter().enumerate() {
        if best.is_none_or(|b| p.confidence > plates[b].confidence) {
            best = Some(i);
        }
    }
    best
}

/// Crop of `bbox` grown by `pad` on every side and clamped to the frame.
/// Returns the crop and its box in frame coordinates.
pub fn crop_padded(frame: &ImageBuffer, bbox: &BBox, pad: u32) -> Result<(ImageBuffer, BBox), ImagingError> {
    let grown = bbox.expand(pad as f64);
    let (x0, y0, x1, y1) = grown
        .clamp_to_pixels(frame.width(), frame.height())
        .ok_or(ImagingError::ZeroArea)?;
    let crop = frame.crop(x0, y0, x1 - x0, y1 - y0)?;
    Ok((crop, BBox::new(x0 as f64, y0 as f64, x1 as f64, y1 as f64)))
}

/// One line of the detection sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image: String,
    #[serde(default)]
    pub cars: Vec<[f64; 4]>,
    #[serde(default)]
    pub plates: Vec<[f64; 4]>,
}

pub fn read_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>, DetectError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DetectError::Annotations(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| DetectError::Annotations(format!("line {}: {e}", i + 1))))
        .collect()
}

/// Stable 64-bit FNV-1a, used to derive per-item seeds from names.
pub fn name_hash(seed: u64, name: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Replays ground-truth boxes, optionally jittered and thinned. Every frame
/// draws from its own generator seeded by `(seed, frame name)`, so results do
/// not depend on call order.
#[derive(Debug, Clone)]
pub struct FixtureDetector {
    records: HashMap<String, AnnotationRecord>,
    pub jitter: f64,
    pub drop_rate: f64,
    pub seed: u64,
}

impl FixtureDetector {
    pub fn new(records: impl IntoIterator<Item = AnnotationRecord>, jitter: f64, drop_rate: f64, seed: u64) -> Self {
        Self {
            records: records.into_iter().map(|r| (r.image.clone(), r)).collect(),
            jitter: jitter.max(0.0),
            drop_rate: drop_rate.clamp(0.0, 1.0),
            seed,
        }
    }

    pub fn exact(records: impl IntoIterator<Item = AnnotationRecord>) -> Self {
        Self::new(records, 0.0, 0.0, 0)
    }
}

impl DetectorPort for FixtureDetector {
    fn detect(&self, frame: &Frame, conf_threshold: f64) -> Result<DetectionSet, DetectError> {
        let rec = self
            .records
            .get(&frame.name)
            .ok_or_else(|| DetectError::MissingAnnotation(frame.name.clone()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(name_hash(self.seed, &frame.name));
        let (fw, fh) = (frame.image.width() as f64, frame.image.height() as f64);
        let lo = conf_threshold.clamp(0.0, 1.0);
        let mut emit = |label: &str, boxes: &[[f64; 4]]| -> Vec<Detection> {
            let mut out = Vec::new();
            for b in boxes {
                // Draw everything up front so dropping does not shift the stream.
                let keep = rng.random::<f64>() >= self.drop_rate;
                let conf = if lo >= 1.0 { 1.0 } else { rng.random_range(lo..=1.0) };
                let mut j = [0.0; 4];
                for v in j.iter_mut() {
                    *v = if self.jitter > 0.0 { rng.random_range(-self.jitter..=self.jitter) } else { 0.0 };
                }
                if !keep {
                    continue;
                }
                let bbox = BBox::new(
                    (b[0] + j[0]).clamp(0.0, fw),
                    (b[1] + j[1]).clamp(0.0, fh),
                    (b[2] + j[2]).clamp(0.0, fw),
                    (b[3] + j[3]).clamp(0.0, fh),
                );
                if bbox.is_valid() {
                    out.push(Detection {
                        label: label.to_string(),
                        bbox,
                        confidence: conf,
                    });
                }
            }
            out
        };
        let cars = emit("car", &rec.cars);
        let plates = emit("plate", &rec.plates);
        Ok(DetectionSet { cars, plates })
    }
}

/// Treats the whole frame as one car containing one plate: for inputs that
/// are already plate crops.
#[derive(Debug, Clone, Copy, Default)]
pub struct WholeFrameDetector;

impl DetectorPort for WholeFrameDetector {
    fn detect(&self, frame: &Frame, _conf_threshold: f64) -> Result<DetectionSet, DetectError> {
        let b = BBox::new(0.0, 0.0, frame.image.width() as f64, frame.image.height() as f64);
        let d = |label: &str| Detection {
            label: label.to_string(),
            bbox: b,
            confidence: 1.0,
        };
        Ok(DetectionSet {
            cars: vec![d("car")],
            plates: vec![d("plate")],
        })
    }
}

#[derive(Serialize)]
struct ExternalRequest<'a> {
    image: &'a str,
    threshold: f64,
}

/// Line-delimited JSON over a child process's stdio. Each request is
/// `{"image": path, "threshold": t}`; each reply is a [`DetectionSet`].
/// Calls are serialized through a mutex.
pub struct ExternalDetector {
    io: Mutex<(ChildStdin, BufReader<ChildStdout>)>,
    child: Mutex<Child>,
}

impl ExternalDetector {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, DetectError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| DetectError::External(format!("spawn {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            io: Mutex::new((stdin, stdout)),
            child: Mutex::new(child),
        })
    }
}

impl DetectorPort for ExternalDetector {
    fn detect(&self, frame: &Frame, conf_threshold: f64) -> Result<DetectionSet, DetectError> {
        let path = frame.path.as_ref().ok_or_else(|| DetectError::NoPath(frame.name.clone()))?;
        let req = serde_json::to_string(&ExternalRequest {
            image: &path.to_string_lossy(),
            threshold: conf_threshold,
        })
        .expect("request serializes");
        let mut guard = self.io.lock().map_err(|_| DetectError::External("poisoned".into()))?;
        let (stdin, stdout) = &mut *guard;
        writeln!(stdin, "{req}").and_then(|_| stdin.flush()).map_err(|e| DetectError::External(e.to_string()))?;
        let mut line = String::new();
        let n = stdout.read_line(&mut line).map_err(|e| DetectError::External(e.to_string()))?;
        if n == 0 {
            return Err(DetectError::External("detector closed its output".into()));
        }
        let mut set: DetectionSet =
            serde_json::from_str(&line).map_err(|e| DetectError::External(format!("bad reply: {e}")))?;
        // Enforce the port contract even if the process ignores the threshold.
        set.cars.retain(|d| d.confidence >= conf_threshold && d.bbox.is_valid());
        set.plates.retain(|d| d.confidence >= conf_threshold && d.bbox.is_valid());
        Ok(set)
    }
}

impl Drop for ExternalDetector {
    fn drop(&mut self) {
        if let Ok(mut c) = self.child.lock() {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(b: [f64; 4], conf: f64) -> Detection {
        Detection {
            label: "plate".into(),
            bbox: BBox::from_array(b),
            confidence: conf,
        }
    }

    #[test]
    fn validation_by_inside_fraction() {
        let cars = [det([0.0, 0.0, 100.0, 100.0], 0.9)];
        let inside = det([10.0, 10.0, 30.0, 20.0], 0.9);
        let outside = det([200.0, 200.0, 220.0, 210.0], 0.9);
        let half = det([90.0, 10.0, 110.0, 20.0], 0.9);
        let kept = validate_plates(&[inside.clone(), outside, half], &cars, 0.9);
        assert_eq!(kept, vec![inside]);
        assert!(validate_plates(&[], &cars, 0.9).is_empty());
    }

    #[test]
    fn best_box_argmax_and_tie() {
        assert_eq!(best_box(&[]), None);
        let b = |c| det([0.0, 0.0, 1.0, 1.0], c);
        assert_eq!(best_box(&[b(0.6), b(0.9), b(0.7)]), Some(1));
        assert_eq!(best_box(&[b(0.8), b(0.8)]), Some(0));
    }

    #[test]
    fn padded_crop_dimensions() {
        let frame = ImageBuffer::from_fn_gray(200, 100, |x, y| ((x + y) % 256) as u8).unwrap();
        let (c, b) = crop_padded(&frame, &BBox::new(10.0, 10.0, 50.0, 30.0), 10).unwrap();
        assert_eq!((c.width(), c.height()), (60, 40));
        assert_eq!(b, BBox::new(0.0, 0.0, 60.0, 40.0));
        let (c, _) = crop_padded(&frame, &BBox::new(10.0, 10.0, 50.0, 30.0), 0).unwrap();
        assert_eq!((c.width(), c.height()), (40, 20));
        assert_eq!(c.get(0, 0, 0), frame.get(10, 10, 0));
        let (c, b) = crop_padded(&frame, &BBox::new(190.0, 90.0, 200.0, 100.0), 10).unwrap();
        assert_eq!((c.width(), c.height()), (20, 20));
        assert_eq!(b, BBox::new(180.0, 80.0, 200.0, 100.0));
        assert!(crop_padded(&frame, &BBox::new(300.0, 300.0, 310.0, 310.0), 0).is_err());
    }

    fn record() -> AnnotationRecord {
        AnnotationRecord {
            image: "a.png".into(),
            cars: vec![[5.0, 5.0, 150.0, 90.0]],
            plates: vec![[20.0, 30.0, 120.0, 60.0]],
        }
    }

    #[test]
    fn fixture_exact_jittered_and_dropped() {
        let frame = Frame::new("a.png", ImageBuffer::new(160, 100, 3).unwrap());
        let exact = FixtureDetector::exact([record()]).detect(&frame, 0.5).unwrap();
        assert_eq!(exact.plates[0].bbox.to_array(), [20.0, 30.0, 120.0, 60.0]);
        assert!(exact.plates[0].confidence >= 0.5);
        let dropped = FixtureDetector::new([record()], 0.0, 1.0, 1).detect(&frame, 0.5).unwrap();
        assert!(dropped.plates.is_empty() && dropped.cars.is_empty());
        let j = FixtureDetector::new([record()], 3.0, 0.0, 9);
        let a = j.detect(&frame, 0.5).unwrap();
        assert_eq!(a, j.detect(&frame, 0.5).unwrap());
        let missing = Frame::new("b.png", ImageBuffer::new(4, 4, 3).unwrap());
        assert!(matches!(j.detect(&missing, 0.5), Err(DetectError::MissingAnnotation(_))));
    }
}
