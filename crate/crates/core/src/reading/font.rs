//! Built-in stroke font shared by the plate renderer and the template
//! recognizer. Glyphs are polylines on a 4 x 6 design grid, rasterized with
//! round caps and one pixel of anti-aliasing.

type Poly = &'static [(f64, f64)];

const RING: Poly = &[(1.0, 0.0), (3.0, 0.0), (4.0, 1.0), (4.0, 5.0), (3.0, 6.0), (1.0, 6.0), (0.0, 5.0), (0.0, 1.0), (1.0, 0.0)];

pub fn strokes(c: char) -> Option<&'static [Poly]> {
    let s: &'static [Poly] = match c {
        '0' => &[RING, &[(3.2, 1.0), (0.8, 5.0)]],
        '1' => &[&[(0.6, 1.4), (2.0, 0.0), (2.0, 6.0)]],
        '2' => &[&[(0.0, 1.0), (1.0, 0.0), (3.0, 0.0), (4.0, 1.0), (4.0, 2.0), (0.0, 6.0), (4.0, 6.0)]],
        '3' => &[&[(0.0, 0.0), (4.0, 0.0), (2.0, 2.6), (3.0, 2.6), (4.0, 3.6), (4.0, 5.0), (3.0, 6.0), (1.0, 6.0), (0.0, 5.0)]],
        '4' => &[&[(3.0, 6.0), (3.0, 0.0), (0.0, 4.0), (4.0, 4.0)]],
        '5' => &[&[(4.0, 0.0), (0.0, 0.0), (0.0, 2.6), (3.0, 2.6), (4.0, 3.6), (4.0, 5.0), (3.0, 6.0), (0.0, 6.0)]],
        '6' => &[&[(3.5, 0.0), (1.0, 0.0), (0.0, 1.0), (0.0, 5.0), (1.0, 6.0), (3.0, 6.0), (4.0, 5.0), (4.0, 3.6), (3.0, 2.6), (0.0, 2.6)]],
        '7' => &[&[(0.0, 0.0), (4.0, 0.0), (1.5, 6.0)]],
        '8' => &[
            &[(1.0, 0.0), (3.0, 0.0), (4.0, 1.0), (4.0, 2.0), (3.0, 3.0), (1.0, 3.0), (0.0, 2.0), (0.0, 1.0), (1.0, 0.0)],
            &[(1.0, 3.0), (3.0, 3.0), (4.0, 4.0), (4.0, 5.0), (3.0, 6.0), (1.0, 6.0), (0.0, 5.0), (0.0, 4.0), (1.0, 3.0)],
        ],
        '9' => &[&[(4.0, 3.4), (1.0, 3.4), (0.0, 2.4), (0.0, 1.0), (1.0, 0.0), (3.0, 0.0), (4.0, 1.0), (4.0, 5.0), (3.0, 6.0), (0.5, 6.0)]],
        'A' => &[&[(0.0, 6.0), (2.0, 0.0), (4.0, 6.0)], &[(0.7, 4.0), (3.3, 4.0)]],
        'B' => &[&[
            (0.0, 0.0), (3.0, 0.0), (4.0, 0.8), (4.0, 2.2), (3.0, 3.0), (0.0, 3.0),
            (3.0, 3.0), (4.0, 3.8), (4.0, 5.2), (3.0, 6.0), (0.0, 6.0), (0.0, 0.0),
        ]],
        'C' => &[&[(4.0, 1.0), (3.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.0, 5.0), (1.0, 6.0), (3.0, 6.0), (4.0, 5.0)]],
        'D' => &[&[(0.0, 0.0), (2.5, 0.0), (4.0, 1.5), (4.0, 4.5), (2.5, 6.0), (0.0, 6.0), (0.0, 0.0)]],
        'E' => &[&[(4.0, 0.0), (0.0, 0.0), (0.0, 6.0), (4.0, 6.0)], &[(0.0, 3.0), (3.0, 3.0)]],
        'F' => &[&[(4.0, 0.0), (0.0, 0.0), (0.0, 6.0)], &[(0.0, 3.0), (3.0, 3.0)]],
        'G' => &[&[(4.0, 1.0), (3.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.0, 5.0), (1.0, 6.0), (3.0, 6.0), (4.0, 5.0), (4.0, 3.5), (2.2, 3.5)]],
        'H' => &[&[(0.0, 0.0), (0.0, 6.0)], &[(4.0, 0.0), (4.0, 6.0)], &[(0.0, 3.0), (4.0, 3.0)]],
        'I' => &[&[(1.0, 0.0), (3.0, 0.0)], &[(2.0, 0.0), (2.0, 6.0)], &[(1.0, 6.0), (3.0, 6.0)]],
        'J' => &[&[(1.5, 0.0), (4.0, 0.0), (4.0, 5.0), (3.0, 6.0), (1.0, 6.0), (0.0, 5.0), (0.0, 4.0)]],
        'K' => &[&[(0.0, 0.0), (0.0, 6.0)], &[(4.0, 0.0), (0.0, 4.0)], &[(1.3, 2.9), (4.0, 6.0)]],
        'L' => &[&[(0.0, 0.0), (0.0, 6.0), (4.0, 6.0)]],
        'M' => &[&[(0.0, 6.0), (0.0, 0.0), (2.0, 3.5), (4.0, 0.0), (4.0, 6.0)]],
        'N' => &[&[(0.0, 6.0), (0.0, 0.0), (4.0, 6.0), (4.0, 0.0)]],
        'O' => &[RING],
        'P' => &[&[(0.0, 6.0), (0.0, 0.0), (3.0, 0.0), (4.0, 1.0), (4.0, 2.4), (3.0, 3.4), (0.0, 3.4)]],
        'Q' => &[RING, &[(1.8, 3.4), (4.0, 6.0)]],
        'R' => &[&[(0.0, 6.0), (0.0, 0.0), (3.0, 0.0), (4.0, 1.0), (4.0, 2.4), (3.0, 3.4), (0.0, 3.4)], &[(2.0, 3.4), (4.0, 6.0)]],
        'S' => &[&[
            (4.0, 1.0), (3.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.0, 2.0), (1.0, 3.0),
            (3.0, 3.0), (4.0, 4.0), (4.0, 5.0), (3.0, 6.0), (1.0, 6.0), (0.0, 5.0),
        ]],
        'T' => &[&[(0.0, 0.0), (4.0, 0.0)], &[(2.0, 0.0), (2.0, 6.0)]],
        'U' => &[&[(0.0, 0.0), (0.0, 5.0), (1.0, 6.0), (3.0, 6.0), (4.0, 5.0), (4.0, 0.0)]],
        'V' => &[&[(0.0, 0.0), (2.0, 6.0), (4.0, 0.0)]],
        'W' => &[&[(0.0, 0.0), (1.0, 6.0), (2.0, 2.5), (3.0, 6.0), (4.0, 0.0)]],
        'X' => &[&[(0.0, 0.0), (4.0, 6.0)], &[(4.0, 0.0), (0.0, 6.0)]],
        'Y' => &[&[(0.0, 0.0), (2.0, 3.0), (4.0, 0.0)], &[(2.0, 3.0), (2.0, 6.0)]],
        'Z' => &[&[(0.0, 0.0), (4.0, 0.0), (0.0, 6.0), (4.0, 6.0)]],
        _ => return None,
    };
    Some(s)
}

/// All renderable characters: digits then letters.
pub const ALPHABET: &str = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";

/// Word printed across the top of every plate.
pub const COUNTRY_WORD: &str = "BOLIVIA";

/// Float coverage raster in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Coverage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Strokes `c` so its ink exactly fills the continuous box
    /// `[left, left + w] x [top, top + h]` (pixel centres on integers).
    pub fn draw_glyph(&mut self, c: char, left: f64, top: f64, w: f64, h: f64, stroke: f64) -> bool {
        let Some(polys) = strokes(c) else {
            return false;
        };
        let r = stroke / 2.0;
        let sx = (w - stroke).max(0.0) / 4.0;
        let sy = (h - stroke).max(0.0) / 6.0;
        let map = |(gx, gy): (f64, f64)| (left + r + gx * sx, top + r + gy * sy);
        for poly in polys {
            for seg in poly.windows(2) {
                self.draw_segment(map(seg[0]), map(seg[1]), r);
            }
        }
        true
    }

    fn draw_segment(&mut self, a: (f64, f64), b: (f64, f64), r: f64) {
        let reach = r + 1.0;
        let x0 = (a.0.min(b.0) - reach).floor().max(0.0) as usize;
        let y0 = (a.1.min(b.1) - reach).floor().max(0.0) as usize;
        let x1 = ((a.0.max(b.0) + reach).ceil().max(0.0) as usize).min(self.width.saturating_sub(1));
        let y1 = ((a.1.max(b.1) + reach).ceil().max(0.0) as usize).min(self.height.saturating_sub(1));
        if self.width == 0 || self.height == 0 || x0 > x1 || y0 > y1 {
            return;
        }
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (px, py) = (x as f64, y as f64);
                let t = if len2 > 0.0 { (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let d = (px - a.0 - t * dx).hypot(py - a.1 - t * dy);
                // Coverage of the pixel's unit cell by the thick stroke.
                let cov = (r + 0.5 - d).clamp(0.0, 1.0) as f32;
                let slot = &mut self.data[y * self.width + x];
                if cov > *slot {
                    *slot = cov;
                }
            }
        }
    }
}

/// Layout of [`COUNTRY_WORD`]: per-letter boxes `(left, width)` for a word
/// of letter height `h` centred on `cx`.
pub fn word_layout(word: &str, cx: f64, h: f64) -> Vec<(char, f64, f64)> {
    let letter_w = h * 0.56;
    let narrow_w = h * 0.3;
    let gap = h * 0.2;
    let widths: Vec<(char, f64)> = word
        .chars()
        .map(|c| (c, if c == 'I' || c == '1' { narrow_w } else { letter_w }))
        .collect();
    let total: f64 = widths.iter().map(|(_, w)| w).sum::<f64>() + gap * (widths.len().saturating_sub(1)) as f64;
    let mut x = cx - total / 2.0;
    widths
        .into_iter()
        .map(|(c, w)| {
            let item = (c, x, w);
            x += w + gap;
            item
        })
        .collect()
}
