//! Turning command-line options into a configuration and a set of ports.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use lpr_core::detection::{read_annotations, ExternalDetector, WholeFrameDetector};
use lpr_core::eval::Dataset;
use lpr_core::{
    DetectorPort, FixtureDetector, GroundTruthVlm, HttpVlm, PipelineConfig, Ports, TemplateRecognizer, VlmPort,
};

use crate::{io_err, CliResult, ConfigArgs, Failure};

/// Builds the effective configuration. Returns `None` after printing it when
/// `--print-config` was given.
pub fn load_config(args: &ConfigArgs) -> CliResult<Option<PipelineConfig>> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            PipelineConfig::from_toml(&text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    }
    .with_env();
    if args.no_rectify {
        cfg.stages.rectify = false;
    }
    if args.no_photometric {
        cfg.stages.photometric = false;
    }
    if args.no_fast_ocr {
        cfg.stages.fast_ocr = false;
    }
    if args.no_vlm {
        cfg.stages.vlm = false;
    }
    if args.all_plates {
        cfg.detection.all_plates = true;
    }
    if let Some(t) = args.conf_threshold {
        cfg.detection.conf_threshold = t;
    }
    if let Some(url) = &args.vlm_endpoint {
        cfg.vlm.endpoint = url.clone();
    }
    if let Some(ms) = args.vlm_timeout_ms {
        cfg.vlm.timeout_ms = ms;
    }
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Io(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim()).map_err(io_err)?;
    }
    cfg.validate().map_err(io_err)?;
    if args.print_config {
        print!("{}", cfg.to_toml());
        return Ok(None);
    }
    Ok(Some(cfg))
}

#[derive(Args, Debug, Clone, Default)]
pub struct DetectorArgs {
    /// Detections from a JSONL sidecar instead of a model.
    #[arg(long, value_name = "FILE")]
    pub annotations: Option<PathBuf>,
    /// External detector: a command speaking line-delimited JSON on stdio.
    #[arg(long, value_name = "CMD", conflicts_with = "annotations")]
    pub detector_cmd: Option<String>,
    /// Uniform corner jitter applied to sidecar boxes, pixels.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Probability of dropping each sidecar box.
    #[arg(long, default_value_t = 0.0)]
    pub drop_rate: f64,
}

#[derive(Args, Debug, Clone, Default)]
pub struct VlmArgs {
    /// Answer VLM queries from a manifest's ground truth instead of over
    /// HTTP. Without a value, the command's own manifest is used.
    #[arg(long, value_name = "MANIFEST", num_args = 0..=1)]
    pub vlm_oracle: Option<Option<PathBuf>>,
    /// Fraction of oracle answers that are exact.
    #[arg(long, default_value_t = 0.9)]
    pub vlm_fidelity: f64,
}

/// Owned adapters behind a [`Ports`] view.
pub struct Adapters {
    detector: Box<dyn DetectorPort>,
    recognizer: TemplateRecognizer,
    vlm: Option<Box<dyn VlmPort>>,
}

impl Adapters {
    pub fn ports(&self) -> Ports<'_> {
        Ports {
            detector: self.detector.as_ref(),
            recognizer: &self.recognizer,
            vlm: self.vlm.as_deref(),
        }
    }
}

/// `default_annotations` is used when neither a sidecar nor a command is
/// given; failing that, each whole frame is treated as one plate.
pub fn build_adapters(
    cfg: &PipelineConfig,
    det: &DetectorArgs,
    vlm: &VlmArgs,
    default_annotations: Option<PathBuf>,
    default_manifest: Option<&Path>,
    seed: u64,
) -> CliResult<Adapters> {
    let detector: Box<dyn DetectorPort> = if let Some(cmd) = &det.detector_cmd {
        let mut parts = cmd.split_whitespace().map(str::to_string);
        let program = parts.next().ok_or_else(|| Failure::Io("--detector-cmd is empty".into()))?;
        let rest: Vec<String> = parts.collect();
        Box::new(ExternalDetector::spawn(&program, &rest).map_err(io_err)?)
    } else if let Some(path) = det.annotations.clone().or(default_annotations) {
        if !(0.0..=1.0).contains(&det.drop_rate) || det.jitter < 0.0 {
            return Err(Failure::Io("--drop-rate must lie in [0, 1] and --jitter be >= 0".into()));
        }
        let records = read_annotations(&path).map_err(io_err)?;
        Box::new(FixtureDetector::new(records, det.jitter, det.drop_rate, seed))
    } else {
        Box::new(WholeFrameDetector)
    };

    let vlm: Option<Box<dyn VlmPort>> = if !cfg.stages.vlm {
        None
    } else if let Some(oracle) = &vlm.vlm_oracle {
        let manifest = oracle
            .as_deref()
            .or(default_manifest)
            .ok_or_else(|| Failure::Io("--vlm-oracle needs a manifest path here".into()))?;
        if !(0.0..=1.0).contains(&vlm.vlm_fidelity) {
            return Err(Failure::Io("--vlm-fidelity must lie in [0, 1]".into()));
        }
        let data = Dataset::from_manifest(manifest).map_err(io_err)?;
        Some(Box::new(GroundTruthVlm::new(data.truth_map(), vlm.vlm_fidelity, seed)))
    } else {
        Some(Box::new(HttpVlm::new(&cfg.vlm)))
    };

    Ok(Adapters {
        detector,
        recognizer: TemplateRecognizer::new(),
        vlm,
    })
}

/// Sidecar written next to a generated manifest, if present.
pub fn sibling_annotations(manifest: &Path) -> Option<PathBuf> {
    let p = manifest.parent().unwrap_or(Path::new(".")).join("annotations.jsonl");
    p.is_file().then_some(p)
}

/// Name a frame is known by to detectors: its path relative to the sidecar's
/// directory when it lies below it, otherwise the path as given.
pub fn frame_name(path: &Path, annotations: Option<&Path>) -> String {
    let rel = annotations.and_then(|a| {
        let base = fs::canonicalize(a.parent().unwrap_or(Path::new("."))).ok()?;
        let full = fs::canonicalize(path).ok()?;
        full.strip_prefix(base).ok().map(Path::to_path_buf)
    });
    let p = rel.as_deref().unwrap_or(path);
    p.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Writes `text` to `out`, or to stdout when `out` is `None`.
pub fn emit(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
            }
            fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()).map_err(io_err)
        }
    }
}

pub fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("output types serialize") + "\n"
}
