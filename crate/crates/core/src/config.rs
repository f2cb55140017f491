//! Pipeline configuration: a TOML document with one table per stage.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_PROMPT: &str = "Read plate. Alphanumeric only. No BOLIVIA.";
pub const DEFAULT_ENDPOINT: &str = "http://127.0.0.1:11434/api/generate";
/// Overrides `vlm.endpoint` when set.
pub const ENDPOINT_ENV: &str = "LPR_VLM_ENDPOINT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub conf_threshold: f64,
    pub pad_px: u32,
    /// Fraction of a plate box that must fall inside some car box.
    pub inside_ratio: f64,
    /// Read every validated plate instead of only the best one.
    pub all_plates: bool,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            conf_threshold: 0.50,
            pad_px: 10,
            inside_ratio: 0.9,
            all_plates: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RectifyConfig {
    pub severe_fr: f64,
    pub severe_tilt_deg: f64,
    pub flat_fr: f64,
    pub flat_tilt_deg: f64,
    /// Largest corner displacement allowed for a severe warp, as a fraction of ROI width.
    pub guardrail_frac: f64,
    pub min_quad_area_frac: f64,
    pub min_solidity: f64,
    pub blob_area_min: f64,
    pub blob_area_max: f64,
    pub clahe_tiles: usize,
    pub clahe_clip: f64,
    pub canny_low: f64,
    pub canny_high: f64,
    pub canny_sigma: f64,
    pub poly_epsilon_frac: f64,
}

impl Default for RectifyConfig {
    fn default() -> Self {
        Self {
            severe_fr: 1.15,
            severe_tilt_deg: 15.0,
            flat_fr: 1.06,
            flat_tilt_deg: 5.0,
            guardrail_frac: 0.25,
            min_quad_area_frac: 0.15,
            min_solidity: 0.45,
            blob_area_min: 0.05,
            blob_area_max: 0.80,
            clahe_tiles: 8,
            clahe_clip: 2.0,
            canny_low: 50.0,
            canny_high: 150.0,
            canny_sigma: 1.4,
            poly_epsilon_frac: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhotometricConfig {
    pub skip_std: f64,
    pub skip_mean_low: f64,
    pub skip_mean_high: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
}

impl Default for PhotometricConfig {
    fn default() -> Self {
        Self {
            skip_std: 60.0,
            skip_mean_low: 80.0,
            skip_mean_high: 160.0,
            gamma_min: 0.6,
            gamma_max: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadingConfig {
    /// Tripwire ratio: min/max confidence below this sends the plate to the VLM.
    pub tau: f64,
    pub min_chars: usize,
    pub dept_right_frac: f64,
    pub dept_top_frac: f64,
    pub line_overlap: f64,
}

impl Default for ReadingConfig {
    fn default() -> Self {
        Self {
            tau: 0.2,
            min_chars: 6,
            dept_right_frac: 0.15,
            dept_top_frac: 0.40,
            line_overlap: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageToggles {
    pub rectify: bool,
    pub photometric: bool,
    pub fast_ocr: bool,
    pub vlm: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        Self {
            rectify: true,
            photometric: true,
            fast_ocr: true,
            vlm: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VlmConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout_ms: u64,
    pub jpeg_quality: u8,
    pub max_in_flight: usize,
    pub prompt: String,
}

impl Default for VlmConfig {
    fn default() -> Self {
        Self {
            endpoint: DEFAULT_ENDPOINT.to_string(),
            model: "gemma3:4b".to_string(),
            timeout_ms: 30_000,
            jpeg_quality: 90,
            max_in_flight: 1,
            prompt: DEFAULT_PROMPT.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub detection: DetectionConfig,
    pub rectify: RectifyConfig,
    pub photometric: PhotometricConfig,
    pub reading: ReadingConfig,
    pub stages: StageToggles,
    pub vlm: VlmConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Applies the endpoint environment override, if present.
    pub fn with_env(mut self) -> Self {
        if let Ok(url) = std::env::var(ENDPOINT_ENV) {
            if !url.trim().is_empty() {
                self.vlm.endpoint = url;
            }
        }
        self
    }

    /// Sets a dotted key such as `rectify.severe_fr` from its textual value.
    /// The value is parsed as a TOML literal, falling back to a bare string.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let mut doc = toml::Value::try_from(&*self).expect("config serializes");
        let (section, field) = key
            .split_once('.')
            .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
        let slot = doc
            .get_mut(section)
            .and_then(|t| t.get_mut(field))
            .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
        let parsed = parse_literal(value);
        let coerced = match (&*slot, parsed) {
            (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (toml::Value::String(_), v @ toml::Value::String(_)) => v,
            (toml::Value::String(_), _) => toml::Value::String(value.to_string()),
            (_, v) => v,
        };
        if std::mem::discriminant(slot) != std::mem::discriminant(&coerced) {
            return Err(ConfigError::BadValue {
                key: key.to_string(),
                reason: format!("expected {}, got `{value}`", slot.type_str()),
            });
        }
        *slot = coerced;
        let next: Self = doc.try_into().map_err(|e: toml::de::Error| ConfigError::BadValue {
            key: key.to_string(),
            reason: e.to_string(),
        })?;
        next.validate()?;
        *self = next;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let d = &self.detection;
        if !unit(d.conf_threshold) {
            return bad("detection.conf_threshold must lie in [0, 1]");
        }
        if !(d.inside_ratio > 0.0 && d.inside_ratio <= 1.0) {
            return bad("detection.inside_ratio must lie in (0, 1]");
        }
        let r = &self.rectify;
        if !(r.severe_fr >= 1.0 && r.flat_fr >= 1.0) {
            return bad("rectify fr thresholds must be >= 1");
        }
        if !(0.0..=90.0).contains(&r.severe_tilt_deg) || !(0.0..=90.0).contains(&r.flat_tilt_deg) {
            return bad("rectify tilt thresholds must lie in [0, 90]");
        }
        if !(r.guardrail_frac > 0.0) || !unit(r.min_quad_area_frac) || !unit(r.min_solidity) {
            return bad("rectify guardrail/area/solidity fractions out of range");
        }
        if !(unit(r.blob_area_min) && unit(r.blob_area_max) && r.blob_area_min <= r.blob_area_max) {
            return bad("rectify blob area band must satisfy 0 <= min <= max <= 1");
        }
        if r.clahe_tiles == 0 || !(r.clahe_clip > 0.0) {
            return bad("rectify CLAHE needs tiles >= 1 and clip > 0");
        }
        if !(r.canny_low > 0.0 && r.canny_low < r.canny_high && r.canny_high <= 255.0) {
            return bad("rectify Canny thresholds must satisfy 0 < low < high <= 255");
        }
        if !(r.poly_epsilon_frac > 0.0) || !(r.canny_sigma > 0.0) {
            return bad("rectify epsilon fraction and sigma must be positive");
        }
        let p = &self.photometric;
        if !(p.skip_mean_low <= p.skip_mean_high) || !(p.skip_std >= 0.0) {
            return bad("photometric skip band inverted");
        }
        if !(p.gamma_min > 0.0 && p.gamma_min <= p.gamma_max) {
            return bad("photometric gamma clamp must satisfy 0 < min <= max");
        }
        let t = &self.reading;
        if !(t.tau > 0.0 && t.tau <= 1.0) {
            return bad("reading.tau must lie in (0, 1]");
        }
        if !unit(t.dept_right_frac) || !unit(t.dept_top_frac) || !(t.line_overlap > 0.0 && t.line_overlap <= 1.0) {
            return bad("reading fractions out of range");
        }
        if !self.stages.fast_ocr && !self.stages.vlm {
            return bad("at least one of stages.fast_ocr / stages.vlm must be enabled");
        }
        let v = &self.vlm;
        if v.timeout_ms == 0 || v.max_in_flight == 0 || !(1..=100).contains(&v.jpeg_quality) {
            return bad("vlm timeout, max_in_flight and jpeg_quality (1-100) must be positive");
        }
        Ok(())
    }
}

fn parse_literal(text: &str) -> toml::Value {
    // Borrow the TOML grammar by parsing a one-key document.
    format!("v = {text}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}
