use serde::{Deserialize, Serialize};

use super::{clamp_u8, ImageBuffer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlmParams {
    /// Odd patch side.
    pub patch: usize,
    /// Odd search-window side.
    pub search: usize,
    /// Filtering strength on the 8-bit scale.
    pub h: f64,
}

impl Default for NlmParams {
    fn default() -> Self {
        Self {
            patch: 7,
            search: 21,
            h: 10.0,
        }
    }
}

/// Non-local means with the default 7x7 patch, 21x21 window and h = 10.
pub fn denoise(img: &ImageBuffer) -> ImageBuffer {
    denoise_with(img, &NlmParams::default())
}

/// Non-local means. Patch distances are the mean squared difference over the
/// patch and channels; weights are `exp(-d2 / h^2)`. The centre pixel takes the
/// largest weight seen in its window so it cannot dominate its own average.
///
/// Each search offset is one whole-image pass: squared differences are
/// box-summed with exact integer sliding sums (a ring of difference rows for
/// the vertical direction), so the cost is independent of the patch size.
pub fn denoise_with(img: &ImageBuffer, params: &NlmParams) -> ImageBuffer {
    let (w, h) = (img.width(), img.height());
    let ch = img.channels() as usize;
    let pr = params.patch / 2;
    let sr = params.search / 2;
    let pad = pr + sr;
    let (pw, ph) = (w + 2 * pad, h + 2 * pad);

    // Reflect-padded copy, channel-interleaved.
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        if n == 1 {
            return 0;
        }
        while i < 0 || i >= n {
            if i < 0 {
                i = -i;
            }
            if i >= n {
                i = 2 * (n - 1) - i;
            }
        }
        i as usize
    };
    let mut padded = vec![0i32; pw * ph * ch];
    for y in 0..ph {
        let sy = reflect(y as isize - pad as isize, h);
        for x in 0..pw {
            let sx = reflect(x as isize - pad as isize, w);
            for c in 0..ch {
                padded[(y * pw + x) * ch + c] = img.get(sx, sy, c) as i32;
            }
        }
    }
    let paddedf: Vec<f32> = padded.iter().map(|&v| v as f32).collect();

    let h2 = (params.h * params.h) as f32;
    let inv_patch = 1.0 / ((params.patch * params.patch * ch) as f32);
    // exp(-x) is below 1e-13 past x = 30.
    let cutoff = 30.0 * h2;
    let lut_len = cutoff.ceil() as usize + 1;
    let lut: Vec<f32> = (0..lut_len).map(|d| (-(d as f32) / h2).exp()).collect();

    let side = params.patch;
    let max_rw = w + 2 * pr + sr;
    let mut ring = vec![0u32; side * max_rw];
    let mut col = vec![0u32; max_rw];
    let mut acc = vec![0f32; w * h * ch];
    let mut wsum = vec![0f32; w * h];
    let mut wmax = vec![0f32; w * h];
    let (wi, hi) = (w as isize, h as isize);
    let to_padded = |x: isize, y: isize| ((y + pad as isize) as usize * pw + (x + pad as isize) as usize) * ch;

    // D_{-d}(p) = D_d(p - d), so each offset pair shares one distance pass
    // over the domain Q = image ∪ (image - d).
    for dy in 0..=sr as isize {
        for dx in -(sr as isize)..=sr as isize {
            if dy == 0 && dx <= 0 {
                continue;
            }
            let (ox, oy) = ((-dx).min(0), -dy);
            let (qw, qh) = ((wi + dx.abs()) as usize, (hi + dy) as usize);
            let rw = qw + 2 * pr;
            // Region row ry covers image row oy - pr + ry, columns from ox - pr.
            let diff_row = |ry: usize, out: &mut [u32]| {
                let (x0, y0) = (ox - pr as isize, oy - pr as isize + ry as isize);
                let a0 = to_padded(x0, y0);
                let b0 = to_padded(x0 + dx, y0 + dy);
                let a = &padded[a0..a0 + rw * ch];
                let b = &padded[b0..b0 + rw * ch];
                match ch {
                    1 => sq_diff::<1>(a, b, out),
                    3 => sq_diff::<3>(a, b, out),
                    _ => sq_diff_dyn(a, b, ch, out),
                }
            };
            let col = &mut col[..rw];
            col.fill(0);
            for k in 0..side {
                let slot = &mut ring[k * max_rw..k * max_rw + rw];
                diff_row(k, slot);
                for (c, &v) in col.iter_mut().zip(slot.iter()) {
                    *c += v;
                }
            }
            for y in 0..qh {
                if y > 0 {
                    let k = (y - 1) % side;
                    let slot = &mut ring[k * max_rw..k * max_rw + rw];
                    for (c, &v) in col.iter_mut().zip(slot.iter()) {
                        *c -= v;
                    }
                    diff_row(y + side - 1, slot);
                    for (c, &v) in col.iter_mut().zip(slot.iter()) {
                        *c += v;
                    }
                }
                let py = oy + y as isize;
                let (p_row_in, q_row_in) = ((0..hi).contains(&py), (0..hi).contains(&(py + dy)));
                let mut s: u32 = col[..side].iter().sum();
                for x in 0..qw {
                    if x > 0 {
                        s = s + col[x + side - 1] - col[x - 1];
                    }
                    let d2 = s as f32 * inv_patch;
                    if d2 >= cutoff {
                        continue;
                    }
                    let wgt = lut[d2 as usize];
                    let px = ox + x as isize;
                    let p_in = p_row_in && (0..wi).contains(&px);
                    let q_in = q_row_in && (0..wi).contains(&(px + dx));
                    if p_in {
                        let o = py as usize * w + px as usize;
                        let q = to_padded(px + dx, py + dy);
                        add_weighted(&mut acc[o * ch..(o + 1) * ch], &paddedf[q..q + ch], wgt);
                        wsum[o] += wgt;
                        wmax[o] = wmax[o].max(wgt);
                    }
                    if q_in {
                        let o = (py + dy) as usize * w + (px + dx) as usize;
                        let q = to_padded(px, py);
                        add_weighted(&mut acc[o * ch..(o + 1) * ch], &paddedf[q..q + ch], wgt);
                        wsum[o] += wgt;
                        wmax[o] = wmax[o].max(wgt);
                    }
                }
            }
        }
    }

    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let o = y * w + x;
            let wc = wmax[o];
            let total = wsum[o] + wc;
            if total <= 0.0 || wc <= 0.0 {
                continue;
            }
            for c in 0..ch {
                let own = img.get(x, y, c) as f32;
                let v = (acc[o * ch + c] + wc * own) / total;
                out.set(x, y, c, clamp_u8(v as f64));
            }
        }
    }
    out
}

#[inline]
fn add_weighted(acc: &mut [f32], src: &[f32], wgt: f32) {
    for (a, &v) in acc.iter_mut().zip(src) {
        *a += wgt * v;
    }
}

fn sq_diff<const CH: usize>(a: &[i32], b: &[i32], out: &mut [u32]) {
    for ((pa, pb), o) in a.chunks_exact(CH).zip(b.chunks_exact(CH)).zip(out.iter_mut()) {
        let mut s = 0i32;
        for c in 0..CH {
            let d = pa[c] - pb[c];
            s += d * d;
        }
        *o = s as u32;
    }
}

fn sq_diff_dyn(a: &[i32], b: &[i32], ch: usize, out: &mut [u32]) {
    for ((pa, pb), o) in a.chunks_exact(ch).zip(b.chunks_exact(ch)).zip(out.iter_mut()) {
        *o = pa.iter().zip(pb).map(|(x, y)| ((x - y) * (x - y)) as u32).sum();
    }
}
