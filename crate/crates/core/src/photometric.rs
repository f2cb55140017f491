//! Dynamic gamma correction on the HSV value channel.

use serde::{Deserialize, Serialize};

use crate::config::PhotometricConfig;
use crate::imaging::{apply_gamma_to_value, rgb_to_hsv_value_stats, ImageBuffer, ImagingError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LuminanceStats {
    pub mean_v: f64,
    pub std_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaDecision {
    pub skipped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_raw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_clamped: Option<f64>,
    pub stats: LuminanceStats,
}

/// Exponent that maps a mean value `mean_v` to mid-gray 128.
pub fn raw_gamma(mean_v: f64) -> f64 {
    (128.0f64 / 255.0).ln() / (mean_v / 255.0).ln()
}

pub fn decide_gamma(stats: LuminanceStats, cfg: &PhotometricConfig) -> GammaDecision {
    let LuminanceStats { mean_v, std_v } = stats;
    if std_v > cfg.skip_std || (cfg.skip_mean_low..=cfg.skip_mean_high).contains(&mean_v) {
        return GammaDecision {
            skipped: true,
            gamma_raw: None,
            gamma_clamped: None,
            stats,
        };
    }
    // Near-black and near-white crops make the log ratio meaningless; pin
    // them to the bound that pushes toward mid-gray.
    let (raw, clamped) = if mean_v <= 1.0 {
        (finite_or(raw_gamma(mean_v), cfg.gamma_min), cfg.gamma_min)
    } else if mean_v >= 254.0 {
        (finite_or(raw_gamma(mean_v), cfg.gamma_max), cfg.gamma_max)
    } else {
        let g = raw_gamma(mean_v);
        (g, g.clamp(cfg.gamma_min, cfg.gamma_max))
    };
    GammaDecision {
        skipped: false,
        gamma_raw: Some(raw),
        gamma_clamped: Some(clamped),
        stats,
    }
}

fn finite_or(v: f64, fallback: f64) -> f64 {
    if v.is_finite() { v } else { fallback }
}

pub fn luminance_stats(roi: &ImageBuffer) -> Result<LuminanceStats, ImagingError> {
    let s = rgb_to_hsv_value_stats(roi)?;
    Ok(LuminanceStats {
        mean_v: s.mean,
        std_v: s.std,
    })
}

/// Leaves well-exposed or high-contrast ROIs untouched (returned as a clone)
/// and otherwise gamma-corrects the value channel toward mid-gray.
pub fn photometric_correct(
    roi: &ImageBuffer,
    cfg: &PhotometricConfig,
) -> Result<(ImageBuffer, GammaDecision), ImagingError> {
    let decision = decide_gamma(luminance_stats(roi)?, cfg);
    match decision.gamma_clamped {
        None => Ok((roi.clone(), decision)),
        Some(g) => Ok((apply_gamma_to_value(roi, g)?, decision)),
    }
}
