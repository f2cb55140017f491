//! End-to-end orchestration: detect → validate → crop → rectify →
//! photometric → recognize → assemble → tripwire → optional VLM.

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::detection::{best_box, crop_padded, validate_plates, BBox, DetectError, Detection, DetectorPort, Frame};
use crate::imaging::io::read_image;
use crate::imaging::{ImageBuffer, ImagingError};
use crate::photometric::{photometric_correct, GammaDecision};
use crate::reading::{assemble, tripwire, AssembledText, RecognizerPort};
use crate::rectify::{rectify, rectify_debug, DebugImages, RectifyOutcome, RectifyRoute};
use crate::vlm::{FailureReason, VlmPort, VlmQuery, VlmResult};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("invalid config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReadRoute {
    /// Fast OCR trusted.
    FastPath,
    /// Tripwire fired; the VLM was asked.
    VlmFallback,
    /// Fast OCR disabled; the VLM always reads.
    VlmForced,
    /// No valid plate in the frame.
    Null,
}

impl ReadRoute {
    pub fn used_vlm(self) -> bool {
        matches!(self, ReadRoute::VlmFallback | ReadRoute::VlmForced)
    }
}

/// Wall-clock milliseconds per stage. Disabled stages stay at 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub detect: f64,
    pub rectify: f64,
    pub photometric: f64,
    pub ocr: f64,
    pub vlm: f64,
    pub total: f64,
}

impl StageTimings {
    pub fn parts_sum(&self) -> f64 {
        self.detect + self.rectify + self.photometric + self.ocr + self.vlm
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PlateReading {
    pub text: String,
    pub route: ReadRoute,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assembled: Option<AssembledText>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tripwire: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vlm: Option<VlmResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<GammaDecision>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rectify_route: Option<RectifyRoute>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rectify: Option<RectifyOutcome>,
    pub timings: StageTimings,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_box: Option<Detection>,
    /// Padded crop actually processed, in frame coordinates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roi_box: Option<BBox>,
    #[serde(skip)]
    pub debug_images: DebugImages,
}

impl PlateReading {
    fn null(timings: StageTimings) -> Self {
        PlateReading {
            text: String::new(),
            route: ReadRoute::Null,
            assembled: None,
            tripwire: None,
            vlm: None,
            gamma: None,
            rectify_route: None,
            rectify: None,
            timings,
            source_box: None,
            roi_box: None,
            debug_images: Vec::new(),
        }
    }
}

/// The pluggable collaborators. `vlm` may be absent when the VLM stage is off.
#[derive(Clone, Copy)]
pub struct Ports<'a> {
    pub detector: &'a dyn DetectorPort,
    pub recognizer: &'a dyn RecognizerPort,
    pub vlm: Option<&'a dyn VlmPort>,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn check(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    cfg.validate().map_err(|e| PipelineError::Config(e.to_string()))
}

/// Best plate only. `None` iff no plate survives validation.
pub fn process_frame(frame: &Frame, ports: Ports<'_>, cfg: &PipelineConfig) -> Result<Option<PlateReading>, PipelineError> {
    let r = process_frame_traced(frame, ports, cfg, false)?;
    Ok((r.route != ReadRoute::Null).then_some(r))
}

/// Like [`process_frame`] but a frame without plates yields a `Null` reading
/// carrying the detection timing. With `debug`, stage images are kept.
pub fn process_frame_traced(
    frame: &Frame,
    ports: Ports<'_>,
    cfg: &PipelineConfig,
    debug: bool,
) -> Result<PlateReading, PipelineError> {
    check(cfg)?;
    let start = Instant::now();
    let (plates, detect_ms) = detect_valid(frame, ports, cfg)?;
    let Some(best) = best_box(&plates) else {
        return Ok(PlateReading::null(StageTimings { detect: detect_ms, total: ms_since(start), ..Default::default() }));
    };
    read_plate(frame, &plates[best], ports, cfg, debug, start, detect_ms)
}

/// Every validated plate, in detector order.
pub fn process_frame_all(
    frame: &Frame,
    ports: Ports<'_>,
    cfg: &PipelineConfig,
    debug: bool,
) -> Result<Vec<PlateReading>, PipelineError> {
    check(cfg)?;
    let start = Instant::now();
    let (plates, detect_ms) = detect_valid(frame, ports, cfg)?;
    if plates.is_empty() {
        return Ok(vec![PlateReading::null(StageTimings { detect: detect_ms, total: ms_since(start), ..Default::default() })]);
    }
    plates
        .iter()
        .map(|p| read_plate(frame, p, ports, cfg, debug, Instant::now(), detect_ms))
        .collect()
}

fn detect_valid(frame: &Frame, ports: Ports<'_>, cfg: &PipelineConfig) -> Result<(Vec<Detection>, f64), PipelineError> {
    let t = Instant::now();
    let found = ports.detector.detect(frame, cfg.detection.conf_threshold)?;
    let plates: Vec<Detection> = found
        .plates
        .into_iter()
        .filter(|p| p.confidence >= cfg.detection.conf_threshold && p.bbox.is_valid())
        .collect();
    let cars: Vec<Detection> = found.cars.into_iter().filter(|c| c.confidence >= cfg.detection.conf_threshold).collect();
    let valid = validate_plates(&plates, &cars, cfg.detection.inside_ratio);
    Ok((valid, ms_since(t)))
}

fn read_plate(
    frame: &Frame,
    plate: &Detection,
    ports: Ports<'_>,
    cfg: &PipelineConfig,
    debug: bool,
    start: Instant,
    detect_ms: f64,
) -> Result<PlateReading, PipelineError> {
    let stages = cfg.stages;
    let mut timings = StageTimings { detect: detect_ms, ..Default::default() };
    let mut out = PlateReading::null(timings);
    out.source_box = Some(plate.clone());

    let (crop, roi_box) = crop_padded(&frame.image, &plate.bbox, cfg.detection.pad_px)?;
    out.roi_box = Some(roi_box);
    let mut roi: ImageBuffer = if crop.channels() == 3 { crop } else { crop.to_gray().gray_to_rgb()? };
    if debug {
        out.debug_images.push(("roi".into(), roi.clone()));
    }

    if stages.rectify {
        let t = Instant::now();
        let outcome = if debug {
            let (o, imgs) = rectify_debug(&roi, &cfg.rectify);
            out.debug_images.extend(imgs.into_iter().map(|(n, i)| (format!("rectify_{n}"), i)));
            o
        } else {
            rectify(&roi, &cfg.rectify)
        };
        timings.rectify = ms_since(t);
        roi = outcome.image.clone();
        out.rectify_route = Some(outcome.route);
        out.rectify = Some(outcome);
    }

    if stages.photometric {
        let t = Instant::now();
        let (img, decision) = photometric_correct(&roi, &cfg.photometric)?;
        timings.photometric = ms_since(t);
        roi = img;
        out.gamma = Some(decision);
        if debug {
            out.debug_images.push(("photometric".into(), roi.clone()));
        }
    }

    let mut fast_text = String::new();
    let mut tripped = false;
    if stages.fast_ocr {
        let t = Instant::now();
        let chars = ports.recognizer.recognize(&roi);
        let assembled = assemble(&chars, roi.width() as f64, roi.height() as f64, &cfg.reading);
        timings.ocr = ms_since(t);
        fast_text = assembled.text.clone();
        if stages.vlm {
            tripped = tripwire(&assembled, cfg.reading.tau, cfg.reading.min_chars);
            out.tripwire = Some(tripped);
        }
        out.assembled = Some(assembled);
    }

    let route = match (stages.fast_ocr, stages.vlm) {
        (false, _) => ReadRoute::VlmForced,
        (true, true) if tripped => ReadRoute::VlmFallback,
        _ => ReadRoute::FastPath,
    };
    out.text = if route.used_vlm() {
        let t = Instant::now();
        let res = match ports.vlm {
            Some(v) => v.query(VlmQuery { frame_name: &frame.name, roi: &roi }),
            None => VlmResult::failure(FailureReason::Unavailable, None, 0.0),
        };
        timings.vlm = ms_since(t);
        // Transport failures degrade to the fast-path read (empty when forced).
        let text = if res.failed { fast_text } else { res.sanitized.clone() };
        out.vlm = Some(res);
        text
    } else {
        fast_text
    };
    out.route = route;
    timings.total = ms_since(start);
    out.timings = timings;
    Ok(out)
}

/// Where a batch item comes from.
#[derive(Debug, Clone)]
pub enum FrameSource {
    /// Decoded lazily by the worker; `name` is what detectors key on.
    Path { name: String, path: PathBuf },
    Memory(Frame),
}

impl FrameSource {
    pub fn name(&self) -> &str {
        match self {
            FrameSource::Path { name, .. } => name,
            FrameSource::Memory(f) => &f.name,
        }
    }
}

#[derive(Debug)]
pub struct BatchItem {
    pub name: String,
    /// In single-plate mode exactly one reading (possibly `Null`).
    pub outcome: Result<Vec<PlateReading>, String>,
}

fn run_one(src: &FrameSource, ports: Ports<'_>, cfg: &PipelineConfig, debug: bool) -> Result<Vec<PlateReading>, String> {
    let loaded;
    let frame = match src {
        FrameSource::Memory(f) => f,
        FrameSource::Path { name, path } => {
            let image = read_image(path).map_err(|e| e.to_string())?;
            loaded = Frame::new(name.clone(), image).with_path(path.clone());
            &loaded
        }
    };
    if cfg.detection.all_plates {
        process_frame_all(frame, ports, cfg, debug).map_err(|e| e.to_string())
    } else {
        process_frame_traced(frame, ports, cfg, debug).map(|r| vec![r]).map_err(|e| e.to_string())
    }
}

/// Runs every frame on `workers` threads; output order matches input order
/// and a failing item never stops the rest.
pub fn process_batch(
    sources: &[FrameSource],
    ports: Ports<'_>,
    cfg: &PipelineConfig,
    workers: usize,
    debug: bool,
) -> Result<Vec<BatchItem>, PipelineError> {
    check(cfg)?;
    let job = |s: &FrameSource| BatchItem { name: s.name().to_string(), outcome: run_one(s, ports, cfg, debug) };
    if workers <= 1 {
        return Ok(sources.iter().map(job).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    Ok(pool.install(|| sources.par_iter().map(job).collect()))
}

fn reading_trace(r: &PlateReading) -> serde_json::Value {
    let mut v = serde_json::to_value(r).expect("reading serializes");
    if let Some(m) = v.as_object_mut() {
        m.remove("timings");
        if let Some(vlm) = m.get_mut("vlm").and_then(serde_json::Value::as_object_mut) {
            vlm.remove("latency_ms");
        }
    }
    v
}

/// One trace record per frame, free of wall-clock values so identical
/// inputs give identical bytes. Single-plate mode flattens the reading next
/// to `image`; all-plates mode nests them under `plates`; failures carry
/// `error` instead.
pub fn trace_record(item: &BatchItem, all_plates: bool) -> serde_json::Value {
    use serde_json::json;
    match &item.outcome {
        Err(e) => json!({ "image": item.name, "error": e }),
        Ok(rs) if !all_plates && rs.len() == 1 => {
            let mut v = reading_trace(&rs[0]);
            v.as_object_mut().expect("reading is an object").insert("image".into(), json!(item.name));
            v
        }
        Ok(rs) => json!({ "image": item.name, "plates": rs.iter().map(reading_trace).collect::<Vec<_>>() }),
    }
}

/// The timings left out of [`trace_record`], or `None` for a failed frame.
pub fn timing_record(item: &BatchItem) -> Option<serde_json::Value> {
    let rs = item.outcome.as_ref().ok()?;
    let per_plate: Vec<serde_json::Value> = rs
        .iter()
        .map(|r| {
            let mut t = serde_json::to_value(r.timings).expect("timings serialize");
            if let (Some(m), Some(vlm)) = (t.as_object_mut(), &r.vlm) {
                m.insert("vlm_latency".into(), serde_json::json!(vlm.latency_ms));
            }
            t
        })
        .collect();
    Some(serde_json::json!({ "image": item.name, "timings": per_plate }))
}

/// JSONL trace of a whole batch.
pub fn write_trace(items: &[BatchItem], all_plates: bool) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&trace_record(item, all_plates).to_string());
        out.push('\n');
    }
    out
}
