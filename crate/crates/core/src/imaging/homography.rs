use serde::{Deserialize, Serialize};

use super::{clamp_u8, ImageBuffer, ImagingError, Point2};

/// Projective map of the plane, stored with `m[2][2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

impl Homography {
    pub const IDENTITY: Homography = Homography {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Normalizes by `m[2][2]` and checks invertibility.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self, ImagingError> {
        let s = m[2][2];
        if !s.is_finite() || s.abs() < 1e-12 {
            return Err(ImagingError::Degenerate);
        }
        let mut n = m;
        for row in n.iter_mut() {
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let h = Homography { m: n };
        if !(h.det().abs() > 1e-9) || n.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ImagingError::Degenerate);
        }
        Ok(h)
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Homography {
            m: [[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]],
        }
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn det(&self) -> f64 {
        det3(&self.m)
    }

    pub fn inverse(&self) -> Result<Self, ImagingError> {
        let m = &self.m;
        let d = det3(m);
        if d.abs() < 1e-15 {
            return Err(ImagingError::Degenerate);
        }
        let mut inv = [[0.0; 3]; 3];
        for (r, row) in inv.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                // Adjugate transpose: cofactor of (c, r).
                let (r1, r2) = other_two(c);
                let (c1, c2) = other_two(r);
                let minor = m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1];
                let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
                *v = sign * minor / d;
            }
        }
        Self::from_matrix(inv)
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Homography) -> Result<Self, ImagingError> {
        let mut out = [[0.0; 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.m[r][k] * first.m[k][c]).sum();
            }
        }
        Self::from_matrix(out)
    }

    #[inline]
    pub fn apply(&self, p: Point2) -> Point2 {
        let m = &self.m;
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        Point2::new(
            (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
            (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w,
        )
    }
}

fn other_two(i: usize) -> (usize, usize) {
    match i {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Similarity transform taking the points to zero mean and mean distance
/// sqrt(2) from the origin.
fn normalizer(pts: &[Point2; 4]) -> Result<[[f64; 3]; 3], ImagingError> {
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / 4.0;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / 4.0;
    let mean_d = pts.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / 4.0;
    if !(mean_d > 1e-12) || !mean_d.is_finite() {
        return Err(ImagingError::Degenerate);
    }
    let s = std::f64::consts::SQRT_2 / mean_d;
    Ok([[s, 0.0, -s * cx], [0.0, s, -s * cy], [0.0, 0.0, 1.0]])
}

fn any_three_collinear(pts: &[Point2; 4]) -> bool {
    const TRIPLES: [(usize, usize, usize); 4] = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)];
    TRIPLES.iter().any(|&(a, b, c)| {
        let (p, q, r) = (pts[a], pts[b], pts[c]);
        ((q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x)).abs() < 1e-9
    })
}

/// Exact four-point DLT with Hartley normalization.
pub fn estimate_homography(src: &[Point2; 4], dst: &[Point2; 4]) -> Result<Homography, ImagingError> {
    if src.iter().chain(dst).any(|p| !p.is_finite()) {
        return Err(ImagingError::Degenerate);
    }
    let ts = normalizer(src)?;
    let td = normalizer(dst)?;
    let norm = |t: &[[f64; 3]; 3], p: &Point2| Point2::new(t[0][0] * p.x + t[0][2], t[1][1] * p.y + t[1][2]);
    let s: [Point2; 4] = std::array::from_fn(|i| norm(&ts, &src[i]));
    let d: [Point2; 4] = std::array::from_fn(|i| norm(&td, &dst[i]));
    if any_three_collinear(&s) || any_three_collinear(&d) {
        return Err(ImagingError::Degenerate);
    }

    let mut a = [[0.0f64; 9]; 8];
    for i in 0..4 {
        let (x, y, u, v) = (s[i].x, s[i].y, d[i].x, d[i].y);
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -x * u, -y * u, u];
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -x * v, -y * v, v];
    }
    let h = solve8(a).ok_or(ImagingError::Degenerate)?;
    let hn = Homography::from_matrix([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]])?;
    let ts_h = Homography::from_matrix(ts)?;
    let td_inv = Homography::from_matrix(td)?.inverse()?;
    td_inv.compose(&hn)?.compose(&ts_h)
}

/// Gaussian elimination with partial pivoting on an augmented 8x9 system.
fn solve8(mut a: [[f64; 9]; 8]) -> Option<[f64; 8]> {
    for col in 0..8 {
        let pivot = (col..8).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..8 {
            if row == col {
                continue;
            }
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..9 {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut x = [0.0; 8];
    for i in 0..8 {
        x[i] = a[i][8] / a[i][i];
    }
    Some(x)
}

/// Inverse-mapped warp with bilinear sampling. Output pixels whose preimage
/// falls outside the source are 0.
pub fn warp_perspective(
    img: &ImageBuffer,
    h: &Homography,
    out_w: usize,
    out_h: usize,
) -> Result<ImageBuffer, ImagingError> {
    let inv = h.inverse()?;
    let ch = img.channels() as usize;
    let mut out = ImageBuffer::new(out_w, out_h, img.channels())?;
    for y in 0..out_h {
        for x in 0..out_w {
            let p = inv.apply(Point2::new(x as f64, y as f64));
            if !p.is_finite() {
                continue;
            }
            let px = out.pixel_mut(x, y);
            for (c, slot) in px.iter_mut().enumerate().take(ch) {
                if let Some(v) = img.sample_bilinear(p.x, p.y, c) {
                    *slot = clamp_u8(v);
                }
            }
        }
    }
    Ok(out)
}
