//! License-plate reading for Bolivian plates: detector-driven cropping,
//! geometry-routed rectification, conditional gamma correction, template
//! OCR with a confidence tripwire, and a vision-language-model fallback.
//!
//! Every external collaborator sits behind a port trait
//! ([`DetectorPort`], [`RecognizerPort`], [`VlmPort`]) so the whole system
//! runs offline against the synthetic corpus in [`synth`].

pub mod config;
pub mod detection;
pub mod eval;
pub mod imaging;
pub mod photometric;
pub mod pipeline;
pub mod reading;
pub mod rectify;
pub mod synth;
pub mod vlm;

pub use config::{ConfigError, PipelineConfig, StageToggles};
pub use detection::{BBox, Detection, DetectionSet, DetectorPort, FixtureDetector, Frame};
pub use eval::{AngleCategory, Dataset, EvalRecord, IllumCategory, MetricsReport};
pub use imaging::{ImageBuffer, ImagingError, Point2};
pub use photometric::GammaDecision;
pub use pipeline::{process_batch, process_frame, FrameSource, PlateReading, Ports, ReadRoute, StageTimings};
pub use reading::{AssembledText, CharDetection, GlyphClass, RecognizerPort, TemplateRecognizer};
pub use rectify::{RectifyOutcome, RectifyRoute};
pub use vlm::{GroundTruthVlm, HttpVlm, VlmPort, VlmResult};
