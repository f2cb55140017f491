use super::{clamp_u8, ImageBuffer, ImagingError};

/// Luma conversion with ITU-R BT.601 weights, rounded to nearest.
pub fn to_grayscale(img: &ImageBuffer) -> Result<ImageBuffer, ImagingError> {
    img.expect_channels(3)?;
    let data = img
        .data()
        .chunks_exact(3)
        .map(|p| clamp_u8(0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64))
        .collect();
    ImageBuffer::from_raw(img.width(), img.height(), 1, data)
}

/// Hexcone RGB -> HSV. Hue in degrees `[0, 360)`, saturation in `[0, 1]`,
/// value on the 8-bit scale `[0, 255]`.
pub fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    (h, s, v)
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let c = v * s;
    let hp = (h.rem_euclid(360.0)) / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r + m, g + m, b + m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueStats {
    pub mean: f64,
    pub std: f64,
}

/// Population mean and standard deviation of `V = max(R, G, B)`.
pub fn rgb_to_hsv_value_stats(img: &ImageBuffer) -> Result<ValueStats, ImagingError> {
    img.expect_channels(3)?;
    let n = img.area() as f64;
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    for p in img.data().chunks_exact(3) {
        let v = p[0].max(p[1]).max(p[2]) as f64;
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    Ok(ValueStats {
        mean,
        std: var.sqrt(),
    })
}

/// Replaces V with `255 * (V / 255)^gamma` in HSV space; hue and saturation
/// are carried through unchanged.
pub fn apply_gamma_to_value(img: &ImageBuffer, gamma: f64) -> Result<ImageBuffer, ImagingError> {
    img.expect_channels(3)?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(ImagingError::InvalidParameter(format!("gamma {gamma}")));
    }
    let lut: Vec<f64> = (0..256)
        .map(|v| 255.0 * (v as f64 / 255.0).powf(gamma))
        .collect();
    let mut out = img.clone();
    for p in out.data_mut().chunks_exact_mut(3) {
        let (h, s, v) = rgb_to_hsv(p[0] as f64, p[1] as f64, p[2] as f64);
        let (r, g, b) = hsv_to_rgb(h, s, lut[v as usize]);
        p[0] = clamp_u8(r);
        p[1] = clamp_u8(g);
        p[2] = clamp_u8(b);
    }
    Ok(out)
}
