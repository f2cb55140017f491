use super::font::{self, Coverage, ALPHABET, COUNTRY_WORD};
use super::{CharDetection, GlyphClass, RecognizerPort};
use crate::detection::BBox;
use crate::imaging::{connected_components, otsu_threshold, Component, Components, ImageBuffer};

const NW: usize = 24;
const NH: usize = 36;
const WORD_W: usize = 96;
const WORD_H: usize = 16;

/// Segment-and-correlate reader built from the stroke font: Otsu ink mask,
/// 8-connected components, size gating, and normalized cross-correlation
/// against every template at a fixed 24x36 resolution.
#[derive(Debug, Clone)]
pub struct TemplateRecognizer {
    templates: Vec<(GlyphClass, Vec<f32>)>,
    word: Vec<f32>,
    /// Accepted component height as a fraction of ROI height.
    pub min_height_frac: f64,
    pub max_height_frac: f64,
}

impl Default for TemplateRecognizer {
    fn default() -> Self {
        Self::new()
    }
}

struct Mask<'a> {
    cc: &'a Components,
    labels: Vec<u32>,
}

impl Mask<'_> {
    fn hit(&self, x: usize, y: usize) -> bool {
        let l = self.cc.labels[y * self.cc.width + x];
        l != 0 && self.labels.contains(&l)
    }
}

impl TemplateRecognizer {
    pub fn new() -> Self {
        let templates = ALPHABET
            .chars()
            .map(|c| {
                let mut cov = Coverage::new(56, 88);
                cov.draw_glyph(c, 8.0, 8.0, 40.0, 72.0, 7.0);
                (GlyphClass::Char(c), normalize_coverage(&cov, NW, NH))
            })
            .collect();
        let mut cov = Coverage::new(140, 40);
        for (c, left, w) in font::word_layout(COUNTRY_WORD, 70.0, 16.0) {
            cov.draw_glyph(c, left, 12.0, w, 16.0, 2.5);
        }
        Self {
            templates,
            word: normalize_coverage(&cov, WORD_W, WORD_H),
            min_height_frac: 0.3,
            max_height_frac: 0.95,
        }
    }

    /// Best template and its correlation, optionally letters only.
    fn classify(&self, sample: &[f32], letters_only: bool) -> (GlyphClass, f64) {
        self.templates
            .iter()
            .filter(|(g, _)| !letters_only || g.is_letter())
            .map(|(g, t)| (*g, ncc(sample, t)))
            .fold((GlyphClass::Char('0'), f64::MIN), |best, cur| if cur.1 > best.1 { cur } else { best })
    }
}

fn confidence(ncc: f64) -> f64 {
    ((ncc - 0.4) / 0.6).clamp(0.0, 1.0)
}

fn pixel_box(c: &Component) -> BBox {
    BBox::new(c.x_min as f64, c.y_min as f64, (c.x_max + 1) as f64, (c.y_max + 1) as f64)
}

impl RecognizerPort for TemplateRecognizer {
    fn recognize(&self, roi: &ImageBuffer) -> Vec<CharDetection> {
        let (w, h) = (roi.width(), roi.height());
        if w < 8 || h < 8 {
            return Vec::new();
        }
        let gray = median3(&roi.to_gray());
        let Ok(t) = otsu_threshold(&gray) else {
            return Vec::new();
        };
        let ink: Vec<u8> = gray.data().iter().map(|&v| if v <= t { 255 } else { 0 }).collect();
        let Ok(ink) = ImageBuffer::from_raw(w, h, 1, ink) else {
            return Vec::new();
        };
        let Ok(cc) = connected_components(&ink) else {
            return Vec::new();
        };
        let (wf, hf) = (w as f64, h as f64);
        let mut out = Vec::new();
        let mut small = Vec::new();
        for comp in &cc.components {
            if comp.touches_border(w, h) {
                continue;
            }
            let (cw, ch) = (comp.width() as f64, comp.height() as f64);
            let fill = comp.area as f64 / (cw * ch);
            let hfrac = ch / hf;
            if (self.min_height_frac..=self.max_height_frac).contains(&hfrac) {
                if cw <= 0.25 * wf && cw / ch <= 1.2 && fill >= 0.08 {
                    let mask = Mask { cc: &cc, labels: vec![comp.label] };
                    let sample = normalize_mask(&mask, comp.x_min, comp.y_min, comp.width(), comp.height(), NW, NH);
                    let (glyph, score) = self.classify(&sample, false);
                    out.push(CharDetection {
                        glyph,
                        bbox: pixel_box(comp),
                        confidence: confidence(score),
                    });
                }
            } else if hfrac < self.min_height_frac && ch >= (0.06 * hf).max(4.0) {
                if cw / ch >= 3.0 && fill >= 0.7 {
                    out.push(CharDetection {
                        glyph: GlyphClass::Underscore,
                        bbox: pixel_box(comp),
                        confidence: fill.min(1.0),
                    });
                } else {
                    small.push(*comp);
                }
            }
        }
        out.extend(self.top_band(&cc, &small, wf));
        out
    }
}

impl TemplateRecognizer {
    /// Groups small components into words: a long word is tested against the
    /// country-word template, a lone glyph near the right edge is read as a
    /// letter.
    fn top_band(&self, cc: &Components, small: &[Component], roi_w: f64) -> Vec<CharDetection> {
        let mut comps: Vec<Component> = small.to_vec();
        comps.sort_by_key(|c| (c.x_min, c.y_min));
        let mut words: Vec<Vec<Component>> = Vec::new();
        for c in comps {
            let joined = words.last_mut().is_some_and(|word| {
                let last = word.last().expect("non-empty word");
                let gap = c.x_min as f64 - last.x_max as f64;
                let hmax = c.height().max(last.height()) as f64;
                let (a, b) = (pixel_box(last), pixel_box(&c));
                let ok = gap <= 0.8 * hmax && super::vertical_overlap(&a, &b) >= 0.5;
                if ok {
                    word.push(c);
                }
                ok
            });
            if !joined {
                words.push(vec![c]);
            }
        }
        let mut out = Vec::new();
        for word in words {
            let x0 = word.iter().map(|c| c.x_min).min().expect("non-empty");
            let x1 = word.iter().map(|c| c.x_max).max().expect("non-empty");
            let y0 = word.iter().map(|c| c.y_min).min().expect("non-empty");
            let y1 = word.iter().map(|c| c.y_max).max().expect("non-empty");
            let bbox = BBox::new(x0 as f64, y0 as f64, (x1 + 1) as f64, (y1 + 1) as f64);
            let mask = Mask {
                cc,
                labels: word.iter().map(|c| c.label).collect(),
            };
            if word.len() >= 4 && bbox.width() >= 3.0 * bbox.height() {
                let sample = normalize_mask(&mask, x0, y0, x1 - x0 + 1, y1 - y0 + 1, WORD_W, WORD_H);
                let score = ncc(&sample, &self.word);
                if score >= 0.5 {
                    out.push(CharDetection {
                        glyph: GlyphClass::Bolivia,
                        bbox,
                        confidence: confidence(score),
                    });
                }
            } else if word.len() == 1 && bbox.x_center() >= 0.8 * roi_w {
                let sample = normalize_mask(&mask, x0, y0, x1 - x0 + 1, y1 - y0 + 1, NW, NH);
                let (glyph, score) = self.classify(&sample, true);
                out.push(CharDetection {
                    glyph,
                    bbox,
                    confidence: confidence(score),
                });
            }
        }
        out
    }
}

/// Zero-mean normalized cross-correlation.
fn ncc(a: &[f32], b: &[f32]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mb = b.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64 - ma, y as f64 - mb);
        num += x * y;
        da += x * x;
        db += y * y;
    }
    if da <= 1e-12 || db <= 1e-12 {
        0.0
    } else {
        num / (da * db).sqrt()
    }
}

/// Overlap of source cells `[k, k+1)` with each of `n` equal target bins
/// spanning `len` source cells.
fn bin_weights(len: usize, n: usize) -> Vec<Vec<(usize, f32)>> {
    let s = len as f64 / n as f64;
    (0..n)
        .map(|i| {
            let (lo, hi) = (i as f64 * s, (i + 1) as f64 * s);
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(len);
            (first..last.max(first + 1).min(len))
                .filter_map(|k| {
                    let ov = (hi.min(k as f64 + 1.0) - lo.max(k as f64)).max(0.0);
                    (ov > 0.0).then_some((k, (ov / s) as f32))
                })
                .collect()
        })
        .collect()
}

fn resample(sample: impl Fn(usize, usize) -> f32, w: usize, h: usize, nw: usize, nh: usize) -> Vec<f32> {
    let wx = bin_weights(w, nw);
    let wy = bin_weights(h, nh);
    let mut out = vec![0f32; nw * nh];
    for (j, ys) in wy.iter().enumerate() {
        for (i, xs) in wx.iter().enumerate() {
            let mut acc = 0.0;
            for &(y, fy) in ys {
                for &(x, fx) in xs {
                    acc += fy * fx * sample(x, y);
                }
            }
            out[j * nw + i] = acc;
        }
    }
    out
}

fn normalize_mask(mask: &Mask<'_>, x0: usize, y0: usize, w: usize, h: usize, nw: usize, nh: usize) -> Vec<f32> {
    resample(|x, y| if mask.hit(x0 + x, y0 + y) { 1.0 } else { 0.0 }, w, h, nw, nh)
}

/// Normalizes the tight box of the coverage's >= 0.5 pixels -- the same ink
/// mask the recognizer would see.
fn normalize_coverage(cov: &Coverage, nw: usize, nh: usize) -> Vec<f32> {
    let ink = |x: usize, y: usize| cov.at(x, y) >= 0.5;
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..cov.height {
        for x in 0..cov.width {
            if ink(x, y) {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    assert!(x0 <= x1, "template rendered no ink");
    resample(|x, y| if ink(x0 + x, y0 + y) { 1.0 } else { 0.0 }, x1 - x0 + 1, y1 - y0 + 1, nw, nh)
}

fn median3(img: &ImageBuffer) -> ImageBuffer {
    let (w, h) = (img.width(), img.height());
    let src = img.data();
    let mut out = vec![0u8; w * h];
    let mut win = [0u8; 9];
    for y in 0..h {
        for x in 0..w {
            let mut k = 0;
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                    let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                    win[k] = src[yy * w + xx];
                    k += 1;
                }
            }
            win.sort_unstable();
            out[y * w + x] = win[4];
        }
    }
    ImageBuffer::from_raw(w, h, 1, out).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn render(text: &str) -> ImageBuffer {
        let mut cov = Coverage::new(60 + 50 * text.len(), 110);
        for (i, c) in text.chars().enumerate() {
            cov.draw_glyph(c, 30.0 + 50.0 * i as f64, 19.0, 40.0, 72.0, 7.0);
        }
        let data = cov.data.iter().map(|&a| (255.0 - 230.0 * a).round() as u8).collect();
        ImageBuffer::from_raw(cov.width, cov.height, 1, data).unwrap()
    }

    #[test]
    fn templates_are_mutually_distinct() {
        let r = TemplateRecognizer::new();
        for (i, (gi, ti)) in r.templates.iter().enumerate() {
            for (gj, tj) in &r.templates[i + 1..] {
                let s = ncc(ti, tj);
                assert!(s < 0.9, "{gi} vs {gj}: {s}");
            }
        }
    }

    #[test]
    fn reads_every_glyph_of_the_font() {
        let r = TemplateRecognizer::new();
        for chunk in ALPHABET.as_bytes().chunks(6) {
            let text = std::str::from_utf8(chunk).unwrap();
            let mut got = r.recognize(&render(text));
            got.sort_by(|a, b| a.bbox.x_min.total_cmp(&b.bbox.x_min));
            let s: String = got.iter().filter_map(|c| c.glyph.as_char()).collect();
            assert_eq!(s, text);
            assert!(got.iter().all(|c| c.confidence > 0.8), "{got:?}");
        }
    }

    #[test]
    fn blank_reads_nothing() {
        let r = TemplateRecognizer::new();
        assert!(r.recognize(&ImageBuffer::filled(200, 80, 1, 255).unwrap()).is_empty());
        assert!(r.recognize(&ImageBuffer::filled(200, 80, 3, 0).unwrap()).is_empty());
    }

    #[test]
    fn bin_weights_partition_unity() {
        for (len, n) in [(40, 24), (24, 24), (10, 24), (7, 3)] {
            let w = bin_weights(len, n);
            let total: f32 = w.iter().flatten().map(|(_, f)| f).sum();
            assert!((total - n as f32).abs() < 1e-3, "{len} {n}: {total}");
        }
    }
}
