//! Character assembly: ignore-class filtering, line grouping, department-code
//! removal, text extraction and the confidence tripwire.

pub mod font;
mod template;

pub use template::TemplateRecognizer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::config::ReadingConfig;
use crate::detection::BBox;
use crate::imaging::ImageBuffer;

/// Recognizer output classes: 36 alphanumerics plus the country word and
/// the separator bar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GlyphClass {
    Char(char),
    Bolivia,
    Underscore,
}

impl GlyphClass {
    pub fn all() -> Vec<GlyphClass> {
        font::ALPHABET
            .chars()
            .map(GlyphClass::Char)
            .chain([GlyphClass::Bolivia, GlyphClass::Underscore])
            .collect()
    }

    pub fn is_ignored(&self) -> bool {
        matches!(self, GlyphClass::Bolivia | GlyphClass::Underscore)
    }

    pub fn as_char(&self) -> Option<char> {
        match self {
            GlyphClass::Char(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_letter(&self) -> bool {
        self.as_char().is_some_and(|c| c.is_ascii_uppercase())
    }
}

impl fmt::Display for GlyphClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GlyphClass::Char(c) => write!(f, "{c}"),
            GlyphClass::Bolivia => f.write_str("BOLIVIA"),
            GlyphClass::Underscore => f.write_str("_"),
        }
    }
}

impl FromStr for GlyphClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "BOLIVIA" => Ok(GlyphClass::Bolivia),
            "_" => Ok(GlyphClass::Underscore),
            _ => {
                let mut it = s.chars();
                match (it.next(), it.next()) {
                    (Some(c), None) if c.is_ascii_digit() || c.is_ascii_uppercase() => Ok(GlyphClass::Char(c)),
                    _ => Err(format!("unknown glyph class `{s}`")),
                }
            }
        }
    }
}

impl Serialize for GlyphClass {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GlyphClass {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharDetection {
    pub glyph: GlyphClass,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub confidence: f64,
}

/// Character reader over a plate ROI. Boxes are in ROI coordinates.
pub trait RecognizerPort: Send + Sync {
    fn recognize(&self, roi: &ImageBuffer) -> Vec<CharDetection>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembledText {
    pub text: String,
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_conf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_conf: Option<f64>,
    pub confidences: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropped_department: Option<char>,
}

pub fn filter_ignored(chars: &[CharDetection]) -> Vec<CharDetection> {
    chars.iter().filter(|c| !c.glyph.is_ignored()).copied().collect()
}

/// Vertical overlap over the shorter box height.
pub fn vertical_overlap(a: &BBox, b: &BBox) -> f64 {
    let inter = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let shorter = a.height().min(b.height());
    if shorter <= 0.0 {
        0.0
    } else {
        inter / shorter
    }
}

fn reading_order(a: &CharDetection, b: &CharDetection) -> std::cmp::Ordering {
    a.bbox
        .x_center()
        .total_cmp(&b.bbox.x_center())
        .then(a.bbox.y_center().total_cmp(&b.bbox.y_center()))
        .then(a.glyph.cmp(&b.glyph))
        .then(a.confidence.total_cmp(&b.confidence))
        .then(a.bbox.x_min.total_cmp(&b.bbox.x_min))
        .then(a.bbox.y_min.total_cmp(&b.bbox.y_min))
}

fn mean_y(line: &[CharDetection]) -> f64 {
    line.iter().map(|c| c.bbox.y_center()).sum::<f64>() / line.len() as f64
}

/// Clusters characters whose vertical overlap reaches `min_overlap`
/// (transitively), sorts each line left to right and the lines top to bottom.
pub fn group_lines(chars: &[CharDetection], min_overlap: f64) -> Vec<Vec<CharDetection>> {
    let n = chars.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if vertical_overlap(&chars[i].bbox, &chars[j].bbox) >= min_overlap {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<CharDetection>> = Default::default();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(chars[i]);
    }
    let mut lines: Vec<Vec<CharDetection>> = groups.into_values().collect();
    for line in &mut lines {
        line.sort_by(reading_order);
    }
    lines.sort_by(|a, b| mean_y(a).total_cmp(&mean_y(b)).then_with(|| reading_order(&a[0], &b[0])));
    lines
}

/// Picks the line with most characters (bottommost on ties) and drops a
/// trailing letter sitting in the ROI's upper-right corner.
pub fn strip_department_code(
    lines: &[Vec<CharDetection>],
    roi_w: f64,
    roi_h: f64,
    cfg: &ReadingConfig,
) -> (Vec<CharDetection>, Option<CharDetection>) {
    let Some(main) = lines.iter().enumerate().max_by(|(i, a), (j, b)| a.len().cmp(&b.len()).then(i.cmp(j))) else {
        return (Vec::new(), None);
    };
    let mut line = main.1.clone();
    let corner = line.last().is_some_and(|c| {
        c.glyph.is_letter()
            && c.bbox.x_center() >= (1.0 - cfg.dept_right_frac) * roi_w
            && c.bbox.y_center() <= cfg.dept_top_frac * roi_h
    });
    let dropped = if corner { line.pop() } else { None };
    (line, dropped)
}

pub fn assemble(chars: &[CharDetection], roi_w: f64, roi_h: f64, cfg: &ReadingConfig) -> AssembledText {
    let kept = filter_ignored(chars);
    let lines = group_lines(&kept, cfg.line_overlap);
    let (main, dropped) = strip_department_code(&lines, roi_w, roi_h, cfg);
    let text: String = main.iter().filter_map(|c| c.glyph.as_char()).collect();
    let confidences: Vec<f64> = main.iter().map(|c| c.confidence).collect();
    let min_conf = confidences.iter().copied().reduce(f64::min);
    let max_conf = confidences.iter().copied().reduce(f64::max);
    AssembledText {
        count: text.chars().count(),
        text,
        min_conf,
        max_conf,
        confidences,
        dropped_department: dropped.and_then(|d| d.glyph.as_char()),
    }
}

/// True when the fast-path read should not be trusted: too few characters,
/// or the weakest character is far below the strongest. Both comparisons are
/// strict. An all-zero confidence set counts as untrustworthy.
pub fn tripwire(assembled: &AssembledText, tau: f64, min_chars: usize) -> bool {
    if assembled.count < min_chars {
        return true;
    }
    match (assembled.min_conf, assembled.max_conf) {
        (Some(lo), Some(hi)) if assembled.count > 0 => {
            if hi <= 0.0 {
                true
            } else {
                lo / hi < tau
            }
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cd(g: &str, b: [f64; 4], conf: f64) -> CharDetection {
        CharDetection {
            glyph: g.parse().unwrap(),
            bbox: BBox::from_array(b),
            confidence: conf,
        }
    }

    fn row(text: &str, y0: f64, y1: f64) -> Vec<CharDetection> {
        text.chars()
            .enumerate()
            .map(|(i, c)| cd(&c.to_string(), [40.0 + 50.0 * i as f64, y0, 80.0 + 50.0 * i as f64, y1], 0.9))
            .collect()
    }

    #[test]
    fn glyph_class_round_trip() {
        assert_eq!(GlyphClass::all().len(), 38);
        for g in GlyphClass::all() {
            assert_eq!(g.to_string().parse::<GlyphClass>().unwrap(), g);
            let json = serde_json::to_string(&g).unwrap();
            assert_eq!(serde_json::from_str::<GlyphClass>(&json).unwrap(), g);
        }
        assert!("a".parse::<GlyphClass>().is_err());
    }

    #[test]
    fn filtering_ignored_classes() {
        let b = [0.0, 0.0, 1.0, 1.0];
        let got = filter_ignored(&[cd("BOLIVIA", b, 0.9), cd("1", b, 0.9), cd("2", b, 0.9)]);
        assert_eq!(got.iter().map(|c| c.glyph.to_string()).collect::<String>(), "12");
        assert!(filter_ignored(&[cd("BOLIVIA", b, 0.9), cd("_", b, 0.5)]).is_empty());
    }

    #[test]
    fn line_grouping_boundaries() {
        let a = cd("1", [0.0, 0.0, 10.0, 10.0], 0.9);
        let same = cd("2", [20.0, 0.0, 30.0, 10.0], 0.9);
        let far = cd("3", [20.0, 20.0, 30.0, 30.0], 0.9);
        let half = cd("4", [40.0, 5.0, 50.0, 15.0], 0.9);
        assert_eq!(group_lines(&[a, same], 0.5).len(), 1);
        assert_eq!(group_lines(&[a, far], 0.5).len(), 2);
        assert_eq!(group_lines(&[a, half], 0.5).len(), 1);
    }

    #[test]
    fn department_and_country_word_removed() {
        let cfg = ReadingConfig::default();
        let mut chars = row("1234ABC", 44.0, 116.0);
        chars.push(cd("BOLIVIA", [180.0, 10.0, 260.0, 26.0], 0.8));
        chars.push(cd("L", [398.0, 9.0, 410.0, 27.0], 0.7));
        chars.reverse();
        let got = assemble(&chars, 440.0, 140.0, &cfg);
        assert_eq!(got.text, "1234ABC");
        assert_eq!(got.count, 7);
    }

    #[test]
    fn corner_letter_on_main_line_dropped() {
        let cfg = ReadingConfig::default();
        let mut chars = row("123ABC", 20.0, 60.0);
        chars.push(cd("L", [400.0, 15.0, 412.0, 45.0], 0.8));
        let got = assemble(&chars, 440.0, 140.0, &cfg);
        assert_eq!(got.text, "123ABC");
        assert_eq!(got.dropped_department, Some('L'));
    }

    #[test]
    fn equal_lines_pick_bottommost() {
        let cfg = ReadingConfig::default();
        let mut chars = row("111", 0.0, 20.0);
        chars.extend(row("222", 50.0, 70.0));
        assert_eq!(assemble(&chars, 440.0, 140.0, &cfg).text, "222");
    }

    #[test]
    fn tripwire_semantics() {
        let make = |confs: &[f64]| AssembledText {
            text: "X".repeat(confs.len()),
            count: confs.len(),
            min_conf: confs.iter().copied().reduce(f64::min),
            max_conf: confs.iter().copied().reduce(f64::max),
            confidences: confs.to_vec(),
            dropped_department: None,
        };
        assert!(tripwire(&make(&[0.9; 5]), 0.2, 6));
        assert!(!tripwire(&make(&[0.9; 7]), 0.2, 6));
        assert!(tripwire(&make(&[0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.17]), 0.2, 6));
        assert!(!tripwire(&make(&[1.0, 1.0, 1.0, 1.0, 1.0, 0.2]), 0.2, 6));
        assert!(tripwire(&make(&[0.0; 7]), 0.2, 6));
        assert!(tripwire(&make(&[]), 0.2, 6));
        assert!(!tripwire(&make(&[]), 0.2, 0));
    }
}
