use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use lpr_core::eval::{run_ablation, run_eval, select_configs, standard_configs, Dataset};
use lpr_core::imaging::io::{read_image, write_png};
use lpr_core::pipeline::{process_frame_all, process_frame_traced, timing_record, write_trace};
use lpr_core::photometric::photometric_correct;
use lpr_core::reading::{assemble, tripwire, CharDetection};
use lpr_core::rectify::{rectify, rectify_debug};
use lpr_core::synth::{generate_corpus, AngleDist, CorpusSpec};
use lpr_core::{
    process_batch, AngleCategory, AssembledText, Frame, FrameSource, ImageBuffer, PlateReading, RecognizerPort,
    TemplateRecognizer,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::setup::{
    build_adapters, default_workers, emit, frame_name, load_config, sibling_annotations, to_json, DetectorArgs,
    VlmArgs,
};
use crate::{io_err, CliResult, ConfigArgs, Failure};

#[derive(Args, Debug)]
pub struct RunArgs {
    pub image: PathBuf,
    /// Frame name used to look up sidecar detections.
    #[arg(long)]
    pub name: Option<String>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[command(flatten)]
    pub vlm: VlmArgs,
    /// Seed for detector jitter/drops and the VLM oracle.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write every intermediate stage image here as PNG.
    #[arg(long, value_name = "DIR")]
    pub debug_dir: Option<PathBuf>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

pub fn run(a: RunArgs) -> CliResult {
    let Some(cfg) = load_config(&a.config)? else { return Ok(()) };
    let image = read_image(&a.image).map_err(io_err)?;
    let name = a
        .name
        .clone()
        .unwrap_or_else(|| frame_name(&a.image, a.detector.annotations.as_deref()));
    let adapters = build_adapters(&cfg, &a.detector, &a.vlm, None, None, a.seed)?;
    let frame = Frame::new(name, image).with_path(&a.image);
    let debug = a.debug_dir.is_some();
    let text = if cfg.detection.all_plates {
        let readings = process_frame_all(&frame, adapters.ports(), &cfg, debug).map_err(io_err)?;
        if let Some(dir) = &a.debug_dir {
            for (k, r) in readings.iter().enumerate() {
                dump_debug(&dir.join(format!("plate{k}")), r)?;
            }
        }
        to_json(&readings)
    } else {
        let reading = process_frame_traced(&frame, adapters.ports(), &cfg, debug).map_err(io_err)?;
        if let Some(dir) = &a.debug_dir {
            dump_debug(dir, &reading)?;
        }
        to_json(&reading)
    };
    emit(a.out.as_deref(), &text)
}

fn dump_debug(dir: &Path, r: &PlateReading) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    for (i, (stage, img)) in r.debug_images.iter().enumerate() {
        let p = dir.join(format!("{i:02}_{stage}.png"));
        write_png(img, &p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct BatchArgs {
    /// Images, directories of images, or JSONL manifests with an `image` field.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[command(flatten)]
    pub vlm: VlmArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: available cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Trace destination (default stdout).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Per-frame stage timings, JSONL. Traces themselves carry none, so they
    /// are identical between runs.
    #[arg(long, value_name = "FILE")]
    pub timings: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub debug_dir: Option<PathBuf>,
}

fn is_image(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

fn collect_sources(inputs: &[PathBuf], annotations: Option<&Path>) -> CliResult<(Vec<FrameSource>, Option<PathBuf>)> {
    let mut sources = Vec::new();
    let mut first_manifest = None;
    let push = |sources: &mut Vec<FrameSource>, path: PathBuf, ann: Option<&Path>| {
        sources.push(FrameSource::Path { name: frame_name(&path, ann), path });
    };
    for input in inputs {
        if input.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|e| Failure::Io(format!("{}: {e}", input.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && is_image(p))
                .collect();
            files.sort();
            for f in files {
                push(&mut sources, f, annotations);
            }
        } else if input.extension().is_some_and(|e| e == "jsonl") {
            let text = fs::read_to_string(input).map_err(|e| Failure::Io(format!("{}: {e}", input.display())))?;
            let base = input.parent().unwrap_or(Path::new("."));
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let v: Value = serde_json::from_str(line)
                    .map_err(|e| Failure::Io(format!("{}:{}: {e}", input.display(), i + 1)))?;
                let rel = v
                    .get("image")
                    .and_then(Value::as_str)
                    .ok_or_else(|| Failure::Io(format!("{}:{}: missing \"image\"", input.display(), i + 1)))?;
                sources.push(FrameSource::Path { name: rel.to_string(), path: base.join(rel) });
            }
            if first_manifest.is_none() {
                first_manifest = Some(input.clone());
            }
        } else {
            push(&mut sources, input.clone(), annotations);
        }
    }
    Ok((sources, first_manifest))
}

pub fn batch(a: BatchArgs) -> CliResult {
    let Some(cfg) = load_config(&a.config)? else { return Ok(()) };
    let (sources, manifest) = collect_sources(&a.inputs, a.detector.annotations.as_deref())?;
    let default_ann = manifest.as_deref().and_then(sibling_annotations);
    let adapters = build_adapters(&cfg, &a.detector, &a.vlm, default_ann, manifest.as_deref(), a.seed)?;
    let workers = a.workers.unwrap_or_else(default_workers).max(1);
    let debug = a.debug_dir.is_some();
    let items = process_batch(&sources, adapters.ports(), &cfg, workers, debug).map_err(io_err)?;
    if items.len() != sources.len() {
        return Err(Failure::Invariant(format!("{} frames in, {} results out", sources.len(), items.len())));
    }

    let trace = write_trace(&items, cfg.detection.all_plates);
    let mut timings = String::new();
    let mut failures = 0usize;
    for item in &items {
        match timing_record(item) {
            Some(t) => {
                timings.push_str(&t.to_string());
                timings.push('\n');
            }
            None => failures += 1,
        }
        if let (Some(dir), Ok(rs)) = (&a.debug_dir, &item.outcome) {
            let sub = dir.join(item.name.replace(['/', '\\'], "_"));
            for (k, r) in rs.iter().enumerate() {
                dump_debug(&if rs.len() > 1 { sub.join(format!("plate{k}")) } else { sub.clone() }, r)?;
            }
        }
    }
    emit(a.out.as_deref(), &trace)?;
    if let Some(p) = &a.timings {
        emit(Some(p), &timings)?;
    }
    eprintln!("{} frames, {failures} failed", items.len());
    Ok(())
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory: images/, manifest.jsonl, annotations.jsonl, ground_truth.jsonl.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Base corpus description (TOML); flags below override it.
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// frontal | uniform | normal | tilted | steep
    #[arg(long)]
    pub angles: Option<String>,
    /// Horizontal angle range for `--angles uniform`, degrees (`lo:hi`).
    #[arg(long, default_value = "30:150")]
    pub h_range: String,
    /// Vertical angle range for `--angles uniform`, degrees (`lo:hi`).
    #[arg(long, default_value = "90:150")]
    pub v_range: String,
    /// Illumination gain range (`lo:hi` or a single value).
    #[arg(long)]
    pub gain: Option<String>,
    /// Gaussian noise sigma range.
    #[arg(long)]
    pub noise: Option<String>,
    /// Salt-and-pepper probability range.
    #[arg(long)]
    pub salt_pepper: Option<String>,
    /// Blur sigma range.
    #[arg(long)]
    pub blur: Option<String>,
    /// Camera distance range, in plate widths.
    #[arg(long)]
    pub distance: Option<String>,
    #[arg(long)]
    pub max_offset: Option<f64>,
    #[arg(long)]
    pub four_digit_p: Option<f64>,
}

fn parse_range(s: &str) -> CliResult<(f64, f64)> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| Failure::Io(format!("bad number `{t}` in range `{s}`")));
    let (lo, hi) = match s.split_once(':') {
        Some((a, b)) => (num(a)?, num(b)?),
        None => {
            let v = num(s)?;
            (v, v)
        }
    };
    if lo > hi {
        return Err(Failure::Io(format!("range `{s}` is inverted")));
    }
    Ok((lo, hi))
}

pub fn synth(a: SynthArgs) -> CliResult {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
            toml::from_str::<CorpusSpec>(&text).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?
        }
        None => CorpusSpec::default(),
    };
    if let Some(n) = a.n {
        spec.n = n;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(kind) = &a.angles {
        spec.angles = match kind.as_str() {
            "frontal" => AngleDist::Frontal,
            "uniform" => AngleDist::Uniform { h: parse_range(&a.h_range)?, v: parse_range(&a.v_range)? },
            other => {
                let category: AngleCategory = serde_json::from_value(json!(other))
                    .map_err(|_| Failure::Io(format!("unknown angle distribution `{other}`")))?;
                AngleDist::Category { category }
            }
        };
    }
    for (flag, slot) in [
        (&a.gain, &mut spec.gain),
        (&a.noise, &mut spec.gaussian_sigma),
        (&a.salt_pepper, &mut spec.salt_pepper_p),
        (&a.blur, &mut spec.blur_sigma),
        (&a.distance, &mut spec.distance_ratio),
    ] {
        if let Some(s) = flag {
            *slot = parse_range(s)?;
        }
    }
    if let Some(m) = a.max_offset {
        spec.max_offset = m;
    }
    if let Some(p) = a.four_digit_p {
        spec.four_digit_p = p;
    }
    let items = generate_corpus(&spec, &a.out).map_err(io_err)?;
    if items.len() != spec.n {
        return Err(Failure::Invariant(format!("asked for {} items, generated {}", spec.n, items.len())));
    }
    let summary = json!({
        "n": items.len(),
        "dir": a.out,
        "manifest": a.out.join("manifest.jsonl"),
        "annotations": a.out.join("annotations.jsonl"),
        "spec": spec,
    });
    emit(None, &to_json(&summary))
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    pub manifest: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[command(flatten)]
    pub vlm: VlmArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Report destination (default stdout).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Per-record results, JSONL.
    #[arg(long, value_name = "FILE")]
    pub results: Option<PathBuf>,
}

pub fn eval(a: EvalArgs) -> CliResult {
    let Some(cfg) = load_config(&a.config)? else { return Ok(()) };
    let data = Dataset::from_manifest(&a.manifest).map_err(io_err)?;
    let adapters = build_adapters(
        &cfg,
        &a.detector,
        &a.vlm,
        sibling_annotations(&a.manifest),
        Some(&a.manifest),
        a.seed,
    )?;
    let workers = a.workers.unwrap_or_else(default_workers).max(1);
    let run = run_eval(&data, adapters.ports(), &cfg, workers).map_err(io_err)?;
    let r = &run.report;
    if r.n_plates + r.n_excluded_far + r.n_errors != data.len() {
        return Err(Failure::Invariant(format!(
            "{} plates + {} far + {} errors != {} records",
            r.n_plates,
            r.n_excluded_far,
            r.n_errors,
            data.len()
        )));
    }
    if let Some(p) = &a.results {
        let lines: String = run
            .results
            .iter()
            .map(|x| serde_json::to_string(x).expect("json") + "\n")
            .collect();
        emit(Some(p), &lines)?;
    }
    emit(a.out.as_deref(), &to_json(r))
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    pub manifest: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[command(flatten)]
    pub vlm: VlmArgs,
    /// Subset of configurations to run, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub configs: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Report time_ms as null so output is byte-stable.
    #[arg(long)]
    pub no_timings: bool,
    /// Table destination, JSON (default stdout).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

pub fn ablate(a: AblateArgs) -> CliResult {
    let Some(mut cfg) = load_config(&a.config)? else { return Ok(()) };
    let configs = if a.configs.is_empty() {
        standard_configs()
    } else {
        let names: Vec<&str> = a.configs.iter().map(String::as_str).collect();
        select_configs(&names).map_err(Failure::Io)?
    };
    let data = Dataset::from_manifest(&a.manifest).map_err(io_err)?;
    // The VLM client must exist for the configurations that use it, whatever
    // the base toggles say.
    cfg.stages.vlm = configs.iter().any(|c| c.stages.vlm);
    let adapters = build_adapters(
        &cfg,
        &a.detector,
        &a.vlm,
        sibling_annotations(&a.manifest),
        Some(&a.manifest),
        a.seed,
    )?;
    let workers = a.workers.unwrap_or_else(default_workers).max(1);
    let table = run_ablation(&data, adapters.ports(), &cfg, &configs, workers).map_err(io_err)?;
    if table.rows.len() != configs.len() {
        return Err(Failure::Invariant(format!("{} configurations, {} rows", configs.len(), table.rows.len())));
    }
    eprint!("{}", table.to_text(!a.no_timings));
    emit(a.out.as_deref(), &to_json(&table.to_json(!a.no_timings)))
}

#[derive(Args, Debug)]
pub struct StageArgs {
    /// Plate crop.
    pub image: PathBuf,
    /// Output image (rectified / corrected / annotated crop).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_name = "DIR")]
    pub debug_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy)]
pub enum Stage {
    Rectify,
    Enhance,
    Ocr,
}

#[derive(Serialize)]
struct OcrRecord {
    chars: Vec<CharDetection>,
    assembled: AssembledText,
    tripwire: bool,
}

fn write_image(img: &ImageBuffer, out: Option<&Path>) -> CliResult {
    if let Some(p) = out {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
        }
        write_png(img, p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

pub fn stage(which: Stage, a: StageArgs) -> CliResult {
    let Some(cfg) = load_config(&a.config)? else { return Ok(()) };
    let mut roi = read_image(&a.image).map_err(io_err)?;
    if roi.channels() == 1 {
        roi = roi.gray_to_rgb().map_err(io_err)?;
    }
    let record = match which {
        Stage::Rectify => {
            let out = match &a.debug_dir {
                Some(dir) => {
                    let (out, images) = rectify_debug(&roi, &cfg.rectify);
                    fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
                    for (i, (name, img)) in images.iter().enumerate() {
                        write_image(img, Some(&dir.join(format!("{i:02}_{name}.png"))))?;
                    }
                    out
                }
                None => rectify(&roi, &cfg.rectify),
            };
            write_image(&out.image, a.out.as_deref())?;
            to_json(&out)
        }
        Stage::Enhance => {
            let (img, decision) = photometric_correct(&roi, &cfg.photometric).map_err(io_err)?;
            write_image(&img, a.out.as_deref())?;
            to_json(&decision)
        }
        Stage::Ocr => {
            let chars = TemplateRecognizer::new().recognize(&roi);
            let assembled = assemble(&chars, roi.width() as f64, roi.height() as f64, &cfg.reading);
            let trip = tripwire(&assembled, cfg.reading.tau, cfg.reading.min_chars);
            write_image(&draw_boxes(&roi, &chars), a.out.as_deref())?;
            to_json(&OcrRecord { chars, assembled, tripwire: trip })
        }
    };
    emit(None, &record)
}

/// Outlines each character box in red.
fn draw_boxes(roi: &ImageBuffer, chars: &[CharDetection]) -> ImageBuffer {
    let mut img = roi.clone();
    let (w, h) = (img.width(), img.height());
    for c in chars {
        let Some((x0, y0, x1, y1)) = c.bbox.clamp_to_pixels(w, h) else { continue };
        let mut paint = |x: usize, y: usize| img.pixel_mut(x, y).copy_from_slice(&[230, 20, 20]);
        for x in x0..x1 {
            paint(x, y0);
            paint(x, y1 - 1);
        }
        for y in y0..y1 {
            paint(x0, y);
            paint(x1 - 1, y);
        }
    }
    img
}
