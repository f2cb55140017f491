use super::{clamp_u8, ImageBuffer, ImagingError};

/// Contrast-limited adaptive histogram equalization on a gray image.
///
/// The image is split into `tiles x tiles` regions. Each region's histogram
/// is clipped at `clip * pixels / 256` with the excess redistributed over all
/// bins, then turned into a lookup table. Output pixels blend the four
/// nearest tile tables bilinearly. An image with fewer pixels than tiles along
/// either axis falls back to [`equalize_global`].
pub fn clahe(img: &ImageBuffer, tiles: usize, clip: f64) -> Result<ImageBuffer, ImagingError> {
    img.expect_channels(1)?;
    if tiles == 0 {
        return Err(ImagingError::InvalidParameter("tiles must be >= 1".into()));
    }
    if !(clip > 0.0) {
        return Err(ImagingError::InvalidParameter("clip must be > 0".into()));
    }
    let (w, h) = (img.width(), img.height());
    if w < tiles || h < tiles {
        return equalize_global(img);
    }

    let bounds = |n: usize| -> Vec<usize> { (0..=tiles).map(|k| k * n / tiles).collect() };
    let xb = bounds(w);
    let yb = bounds(h);

    let mut luts = vec![[0u8; 256]; tiles * tiles];
    for ty in 0..tiles {
        for tx in 0..tiles {
            let mut hist = [0u64; 256];
            for y in yb[ty]..yb[ty + 1] {
                let row = &img.data()[y * w + xb[tx]..y * w + xb[tx + 1]];
                for &v in row {
                    hist[v as usize] += 1;
                }
            }
            let area = ((xb[tx + 1] - xb[tx]) * (yb[ty + 1] - yb[ty])) as u64;
            luts[ty * tiles + tx] = clipped_lut(&mut hist, area, Some(clip));
        }
    }

    let tile_w = w as f64 / tiles as f64;
    let tile_h = h as f64 / tiles as f64;
    let last = (tiles - 1) as f64;
    let mut out = ImageBuffer::new(w, h, 1)?;
    for y in 0..h {
        let fy = ((y as f64 + 0.5) / tile_h - 0.5).clamp(0.0, last);
        let ty0 = fy.floor() as usize;
        let ty1 = (ty0 + 1).min(tiles - 1);
        let wy = fy - ty0 as f64;
        for x in 0..w {
            let fx = ((x as f64 + 0.5) / tile_w - 0.5).clamp(0.0, last);
            let tx0 = fx.floor() as usize;
            let tx1 = (tx0 + 1).min(tiles - 1);
            let wx = fx - tx0 as f64;
            let v = img.data()[y * w + x] as usize;
            let l = |ty: usize, tx: usize| luts[ty * tiles + tx][v] as f64;
            let top = l(ty0, tx0) * (1.0 - wx) + l(ty0, tx1) * wx;
            let bottom = l(ty1, tx0) * (1.0 - wx) + l(ty1, tx1) * wx;
            out.data_mut()[y * w + x] = clamp_u8(top * (1.0 - wy) + bottom * wy);
        }
    }
    Ok(out)
}

/// Plain global histogram equalization.
pub fn equalize_global(img: &ImageBuffer) -> Result<ImageBuffer, ImagingError> {
    img.expect_channels(1)?;
    let mut hist = [0u64; 256];
    for &v in img.data() {
        hist[v as usize] += 1;
    }
    let lut = clipped_lut(&mut hist, img.area() as u64, None);
    let data = img.data().iter().map(|&v| lut[v as usize]).collect();
    ImageBuffer::from_raw(img.width(), img.height(), 1, data)
}

fn clipped_lut(hist: &mut [u64; 256], area: u64, clip: Option<f64>) -> [u8; 256] {
    if let Some(clip) = clip {
        // Integer clip limit; the excess goes out in whole batches to every
        // bin, and the remainder one count at a time from the dark end.
        let limit = ((clip * area as f64 / 256.0) as u64).max(1);
        let mut excess = 0u64;
        for bin in hist.iter_mut() {
            if *bin > limit {
                excess += *bin - limit;
                *bin = limit;
            }
        }
        let batch = excess / 256;
        let residual = excess % 256;
        for bin in hist.iter_mut() {
            *bin += batch;
        }
        if residual > 0 {
            let step = (256 / residual as usize).max(1);
            for bin in hist.iter_mut().step_by(step).take(residual as usize) {
                *bin += 1;
            }
        }
    }
    let scale = 255.0 / area as f64;
    let mut lut = [0u8; 256];
    let mut cdf = 0u64;
    for (v, bin) in hist.iter().enumerate() {
        cdf += bin;
        lut[v] = clamp_u8(cdf as f64 * scale);
    }
    lut
}
