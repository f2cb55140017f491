use serde::{Deserialize, Serialize};

use super::{ImageBuffer, ImagingError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CannyParams {
    pub low: f64,
    pub high: f64,
    pub sigma: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            low: 50.0,
            high: 150.0,
            sigma: 1.4,
        }
    }
}

/// Canny edge detector: 5x5 Gaussian, Sobel gradients (L2 magnitude),
/// non-maximum suppression and hysteresis. Output pixels are 0 or 255.
pub fn canny(img: &ImageBuffer, params: &CannyParams) -> Result<ImageBuffer, ImagingError> {
    img.expect_channels(1)?;
    if !(params.low > 0.0 && params.low < params.high && params.high <= 255.0) {
        return Err(ImagingError::InvalidParameter(format!(
            "thresholds low={} high={}",
            params.low, params.high
        )));
    }
    let (w, h) = (img.width(), img.height());
    let smooth = gaussian5(img, params.sigma);

    let at = |x: isize, y: isize| -> f32 {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        smooth[yc * w + xc]
    };
    let mut mag = vec![0f32; w * h];
    let mut dir = vec![0u8; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            mag[i] = gx.hypot(gy);
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            dir[i] = if !(22.5..157.5).contains(&angle) {
                0
            } else if angle < 67.5 {
                1
            } else if angle < 112.5 {
                2
            } else {
                3
            };
        }
    }

    // 0 = none, 1 = weak, 2 = strong
    let mut class = vec![0u8; w * h];
    let (low, high) = (params.low as f32, params.high as f32);
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let i = y * w + x;
            let m = mag[i];
            if m < low {
                continue;
            }
            let (dx, dy): (isize, isize) = match dir[i] {
                0 => (1, 0),
                1 => (1, 1),
                2 => (0, 1),
                _ => (-1, 1),
            };
            let prev = mag[(y as isize - dy) as usize * w + (x as isize - dx) as usize];
            let next = mag[(y as isize + dy) as usize * w + (x as isize + dx) as usize];
            // Asymmetric comparison keeps exactly one pixel of a tied pair.
            if m > prev && m >= next {
                class[i] = if m >= high { 2 } else { 1 };
            }
        }
    }

    let mut out = ImageBuffer::new(w, h, 1)?;
    let mut stack: Vec<usize> = (0..w * h).filter(|&i| class[i] == 2).collect();
    for &i in &stack {
        out.data_mut()[i] = 255;
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if class[j] == 1 && out.data()[j] == 0 {
                    out.data_mut()[j] = 255;
                    stack.push(j);
                }
            }
        }
    }
    Ok(out)
}

fn gaussian5(img: &ImageBuffer, sigma: f64) -> Vec<f32> {
    let mut k = [0f32; 5];
    for (i, kv) in k.iter_mut().enumerate() {
        let d = i as f64 - 2.0;
        *kv = (-d * d / (2.0 * sigma * sigma)).exp() as f32;
    }
    let sum: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);

    let (w, h) = (img.width(), img.height());
    let src = img.data();
    let mut tmp = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let xx = (x as isize + j as isize - 2).clamp(0, w as isize - 1) as usize;
                acc += kv * src[y * w + xx] as f32;
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let yy = (y as isize + j as isize - 2).clamp(0, h as isize - 1) as usize;
                acc += kv * tmp[yy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge_count(img: &ImageBuffer) -> usize {
        img.data().iter().filter(|&&v| v == 255).count()
    }

    #[test]
    fn constant_has_no_edges() {
        let img = ImageBuffer::filled(40, 30, 1, 90).unwrap();
        assert_eq!(edge_count(&canny(&img, &CannyParams::default()).unwrap()), 0);
    }

    #[test]
    fn step_edge_is_one_pixel_wide() {
        let img = ImageBuffer::from_fn_gray(100, 60, |x, _| if x < 50 { 0 } else { 255 }).unwrap();
        let edges = canny(&img, &CannyParams::default()).unwrap();
        assert!(edges.data().iter().all(|&v| v == 0 || v == 255));
        for y in 3..57 {
            let row: Vec<usize> = (0..100).filter(|&x| edges.get(x, y, 0) == 255).collect();
            assert_eq!(row.len(), 1, "row {y}: {row:?}");
            assert!(row[0] == 49 || row[0] == 50);
        }
    }

    #[test]
    fn rectangle_perimeter() {
        let img = ImageBuffer::from_fn_gray(120, 80, |x, y| {
            if (20..100).contains(&x) && (20..60).contains(&y) { 255 } else { 0 }
        })
        .unwrap();
        let edges = canny(&img, &CannyParams::default()).unwrap();
        let perimeter = 2.0 * (80.0 + 40.0);
        let n = edge_count(&edges) as f64;
        assert!((n - perimeter).abs() <= 0.2 * perimeter, "{n} edge pixels");
    }

    #[test]
    fn rejects_inverted_thresholds() {
        let img = ImageBuffer::new(10, 10, 1).unwrap();
        let p = CannyParams { low: 150.0, high: 50.0, sigma: 1.4 };
        assert!(canny(&img, &p).is_err());
    }
}
