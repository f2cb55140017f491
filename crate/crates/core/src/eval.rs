//! Edit-distance metrics, manifest records and the evaluation / ablation runners.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{PipelineConfig, StageToggles};
use crate::detection::Frame;
use crate::pipeline::{process_batch, FrameSource, PipelineError, PlateReading, Ports, ReadRoute};
use crate::synth::CorpusItem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleCategory {
    Normal,
    Tilted,
    Steep,
}

impl AngleCategory {
    pub const ALL: [AngleCategory; 3] = [AngleCategory::Normal, AngleCategory::Tilted, AngleCategory::Steep];

    /// Largest deviation from frontal: ≤ 10° Normal, ≤ 35° Tilted, else Steep.
    pub fn from_angles(h_angle: f64, v_angle: f64) -> Self {
        let d = (h_angle - 90.0).abs().max((v_angle - 90.0).abs());
        if d <= 10.0 {
            AngleCategory::Normal
        } else if d <= 35.0 {
            AngleCategory::Tilted
        } else {
            AngleCategory::Steep
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IllumCategory {
    Low,
    Medium,
    High,
}

impl IllumCategory {
    pub const ALL: [IllumCategory; 3] = [IllumCategory::Low, IllumCategory::Medium, IllumCategory::High];

    pub fn from_mean_v(mean_v: f64) -> Self {
        if mean_v < 80.0 {
            IllumCategory::Low
        } else if mean_v <= 160.0 {
            IllumCategory::Medium
        } else {
            IllumCategory::High
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Near,
    Normal,
    Far,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub image: String,
    pub plate: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lux: Option<f64>,
    pub distance: Distance,
    pub angle: AngleCategory,
    pub illumination: IllumCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corners: Option<[[f64; 2]; 4]>,
}

impl EvalRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.plate.is_empty() || !self.plate.chars().all(|c| c.is_ascii_digit() || c.is_ascii_uppercase()) {
            return Err(format!("{}: plate {:?} must be non-empty [0-9A-Z]", self.image, self.plate));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Records plus where to load each frame from.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<EvalRecord>,
    pub sources: Vec<FrameSource>,
}

impl Dataset {
    /// Image paths resolve relative to the manifest's directory.
    pub fn from_manifest(path: &Path) -> Result<Self, EvalError> {
        let text = fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.into(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut ds = Dataset::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: EvalRecord =
                serde_json::from_str(line).map_err(|e| EvalError::Manifest { line: i + 1, reason: e.to_string() })?;
            rec.validate().map_err(|reason| EvalError::Manifest { line: i + 1, reason })?;
            ds.sources.push(FrameSource::Path { name: rec.image.clone(), path: base.join(&rec.image) });
            ds.records.push(rec);
        }
        Ok(ds)
    }

    pub fn from_items(items: &[CorpusItem]) -> Self {
        Dataset {
            records: items.iter().map(CorpusItem::eval_record).collect(),
            sources: items.iter().map(|it| FrameSource::Memory(Frame::new(it.name.clone(), it.image.clone()))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Ground truth keyed by frame name, for [`crate::vlm::GroundTruthVlm`].
    pub fn truth_map(&self) -> HashMap<String, String> {
        self.records.iter().map(|r| (r.image.clone(), r.plate.clone())).collect()
    }
}

/// Unit-cost edit distance over chars.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - lev / max(len)`; two empty strings are identical.
pub fn similarity(gt: &str, pred: &str) -> f64 {
    let n = gt.chars().count().max(pred.chars().count());
    if n == 0 {
        return 1.0;
    }
    1.0 - levenshtein(gt, pred) as f64 / n as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl std::ops::AddAssign for CharCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

impl CharCounts {
    /// (precision, recall, f1); zero when undefined.
    pub fn prf(&self) -> (f64, f64, f64) {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let p = ratio(self.tp, self.tp + self.fp);
        let r = ratio(self.tp, self.tp + self.fn_);
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        (p, r, f)
    }
}

/// Character matches along a minimal edit alignment. Ties prefer match,
/// then substitution, then deletion, then insertion.
pub fn char_prf(gt: &str, pred: &str) -> CharCounts {
    let a: Vec<char> = gt.chars().collect();
    let b: Vec<char> = pred.chars().collect();
    let (n, m) = (a.len(), b.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let (mut i, mut j, mut tp) = (n, m, 0);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 && a[i - 1] == b[j - 1] && d[i][j] == d[i - 1][j - 1] {
            tp += 1;
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + 1 {
            i -= 1;
            j -= 1;
        } else if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    CharCounts { tp, fp: m - tp, fn_: n - tp }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub n: usize,
    pub avg_similarity: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub exact_match: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub avg_similarity: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub exact_match: f64,
    pub mean_time_ms: f64,
    pub median_time_ms: f64,
    pub n_plates: usize,
    pub n_excluded_far: usize,
    pub n_errors: usize,
    pub fallback_rate: f64,
    pub by_angle: BTreeMap<AngleCategory, CategoryReport>,
    pub by_illumination: BTreeMap<IllumCategory, CategoryReport>,
}

/// Outcome for one evaluated record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordResult {
    pub image: String,
    pub plate: String,
    pub predicted: String,
    pub similarity: f64,
    pub counts: CharCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub route: Option<ReadRoute>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub angle: AngleCategory,
    pub illumination: IllumCategory,
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub report: MetricsReport,
    pub results: Vec<RecordResult>,
    /// Successful readings, aligned with `results`.
    pub readings: Vec<Option<PlateReading>>,
}

fn summarize<'a>(results: impl Iterator<Item = &'a RecordResult>) -> CategoryReport {
    let (mut n, mut sim, mut exact, mut counts) = (0usize, 0.0, 0usize, CharCounts::default());
    for r in results {
        n += 1;
        sim += r.similarity;
        exact += usize::from(r.predicted == r.plate);
        counts += r.counts;
    }
    let (precision, recall, f1) = counts.prf();
    let div = |x: f64| if n == 0 { 0.0 } else { x / n as f64 };
    CategoryReport { n, avg_similarity: div(sim), precision, recall, f1, exact_match: div(exact as f64) }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        (v[k - 1] + v[k]) / 2.0
    }
}

/// Runs the pipeline over every non-far record. Failed records score as
/// empty predictions and are counted in `n_errors`, not `n_plates`.
pub fn run_eval(data: &Dataset, ports: Ports<'_>, cfg: &PipelineConfig, workers: usize) -> Result<EvalRun, EvalError> {
    let (mut keep_rec, mut keep_src) = (Vec::new(), Vec::new());
    for (r, s) in data.records.iter().zip(&data.sources) {
        if r.distance != Distance::Far {
            keep_rec.push(r);
            keep_src.push(s.clone());
        }
    }
    let n_excluded_far = data.records.len() - keep_rec.len();
    let mut single = cfg.clone();
    single.detection.all_plates = false;
    let batch = process_batch(&keep_src, ports, &single, workers, false)?;

    let mut results = Vec::with_capacity(batch.len());
    let mut readings = Vec::with_capacity(batch.len());
    for (rec, item) in keep_rec.iter().zip(batch) {
        let (predicted, route, time_ms, error, reading) = match item.outcome {
            Ok(mut v) => {
                let r = v.swap_remove(0);
                (r.text.clone(), Some(r.route), Some(r.timings.total), None, Some(r))
            }
            Err(e) => (String::new(), None, None, Some(e), None),
        };
        results.push(RecordResult {
            image: rec.image.clone(),
            plate: rec.plate.clone(),
            similarity: similarity(&rec.plate, &predicted),
            counts: char_prf(&rec.plate, &predicted),
            predicted,
            route,
            time_ms,
            error,
            angle: rec.angle,
            illumination: rec.illumination,
        });
        readings.push(reading);
    }

    let overall = summarize(results.iter());
    let n_errors = results.iter().filter(|r| r.error.is_some()).count();
    let n_plates = results.len() - n_errors;
    let times: Vec<f64> = results.iter().filter_map(|r| r.time_ms).collect();
    let vlm_used = results.iter().filter(|r| r.route.is_some_and(ReadRoute::used_vlm)).count();
    let report = MetricsReport {
        avg_similarity: overall.avg_similarity,
        precision: overall.precision,
        recall: overall.recall,
        f1: overall.f1,
        exact_match: overall.exact_match,
        mean_time_ms: if times.is_empty() { 0.0 } else { times.iter().sum::<f64>() / times.len() as f64 },
        median_time_ms: median(times),
        n_plates,
        n_excluded_far,
        n_errors,
        fallback_rate: if n_plates == 0 { 0.0 } else { vlm_used as f64 / n_plates as f64 },
        by_angle: AngleCategory::ALL
            .into_iter()
            .map(|c| (c, summarize(results.iter().filter(|r| r.angle == c))))
            .filter(|(_, r)| r.n > 0)
            .collect(),
        by_illumination: IllumCategory::ALL
            .into_iter()
            .map(|c| (c, summarize(results.iter().filter(|r| r.illumination == c))))
            .filter(|(_, r)| r.n > 0)
            .collect(),
    };
    Ok(EvalRun { report, results, readings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub name: String,
    pub stages: StageToggles,
}

/// The seven standard rows, weakest first.
pub fn standard_configs() -> Vec<AblationConfig> {
    let row = |name: &str, rectify, photometric, vlm, fast_ocr| AblationConfig {
        name: name.into(),
        stages: StageToggles { rectify, photometric, fast_ocr, vlm },
    };
    vec![
        row("raw", false, false, false, true),
        row("no_illumination", true, false, false, true),
        row("no_rectification", false, true, false, true),
        row("no_vlm", true, true, false, true),
        row("raw_vlm", false, false, true, false),
        row("preprocessed_vlm", true, true, true, false),
        row("full", true, true, true, true),
    ]
}

/// Looks up standard rows by name.
pub fn select_configs(names: &[&str]) -> Result<Vec<AblationConfig>, String> {
    let all = standard_configs();
    names
        .iter()
        .map(|n| {
            all.iter()
                .find(|c| c.name == n.trim())
                .cloned()
                .ok_or_else(|| format!("unknown ablation config {n:?}; expected one of {}", all.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(", ")))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub config: AblationConfig,
    pub report: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

pub const ABLATION_COLUMNS: [&str; 5] = ["avg_similarity", "precision", "recall", "f1", "time_ms"];

impl AblationTable {
    /// `{"columns": [...], "rows": [{"config", <columns>}]}`. Without timings
    /// `time_ms` is null so the output is reproducible byte for byte.
    pub fn to_json(&self, with_timings: bool) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "config": r.config.name,
                    "avg_similarity": r.report.avg_similarity,
                    "precision": r.report.precision,
                    "recall": r.report.recall,
                    "f1": r.report.f1,
                    "time_ms": if with_timings { serde_json::json!(r.report.mean_time_ms) } else { serde_json::Value::Null },
                })
            })
            .collect();
        serde_json::json!({ "columns": ABLATION_COLUMNS, "rows": rows })
    }

    pub fn to_text(&self, with_timings: bool) -> String {
        let mut s = format!("{:<18}", "config");
        for c in ABLATION_COLUMNS {
            s.push_str(&format!("{c:>16}"));
        }
        s.push('\n');
        for r in &self.rows {
            let m = &r.report;
            s.push_str(&format!(
                "{:<18}{:>16.4}{:>16.4}{:>16.4}{:>16.4}",
                r.config.name, m.avg_similarity, m.precision, m.recall, m.f1
            ));
            if with_timings {
                s.push_str(&format!("{:>16.2}\n", m.mean_time_ms));
            } else {
                s.push_str(&format!("{:>16}\n", "-"));
            }
        }
        s
    }

    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.config.name == name)
    }
}

/// Runs every configuration over the same dataset and ports.
pub fn run_ablation(
    data: &Dataset,
    ports: Ports<'_>,
    base: &PipelineConfig,
    configs: &[AblationConfig],
    workers: usize,
) -> Result<AblationTable, EvalError> {
    let mut rows = Vec::with_capacity(configs.len());
    for c in configs {
        let mut cfg = base.clone();
        cfg.stages = c.stages;
        let run = run_eval(data, ports, &cfg, workers)?;
        rows.push(AblationRow { config: c.clone(), report: run.report });
    }
    Ok(AblationTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein("", "ABC"), 3);
        assert_eq!(levenshtein("1234ABC", "1234ABC"), 0);
        assert_eq!(levenshtein("123ABC", "128ABC"), 1);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(similarity("1234ABC", "1234ABC"), 1.0);
        assert!((similarity("1234ABC", "1234AB") - (1.0 - 1.0 / 7.0)).abs() < 1e-12);
        assert_eq!(similarity("1234ABC", ""), 0.0);
        assert_eq!(similarity("", ""), 1.0);
    }

    #[test]
    fn char_prf_examples() {
        assert_eq!(char_prf("1234ABC", "1234ABC"), CharCounts { tp: 7, fp: 0, fn_: 0 });
        assert_eq!(char_prf("1234ABC", "1234AB"), CharCounts { tp: 6, fp: 0, fn_: 1 });
        assert_eq!(char_prf("1234ABC", ""), CharCounts { tp: 0, fp: 0, fn_: 7 });
        assert_eq!(char_prf("", "AB"), CharCounts { tp: 0, fp: 2, fn_: 0 });
    }

    #[test]
    fn prf_zero_cases() {
        assert_eq!(CharCounts::default().prf(), (0.0, 0.0, 0.0));
        let (p, r, f) = CharCounts { tp: 3, fp: 1, fn_: 3 }.prf();
        assert!((p - 0.75).abs() < 1e-12 && (r - 0.5).abs() < 1e-12 && (f - 0.6).abs() < 1e-12);
    }

    #[test]
    fn categories_cover_boundaries() {
        assert_eq!(AngleCategory::from_angles(90.0, 90.0), AngleCategory::Normal);
        assert_eq!(AngleCategory::from_angles(100.0, 90.0), AngleCategory::Normal);
        assert_eq!(AngleCategory::from_angles(90.0, 125.0), AngleCategory::Tilted);
        assert_eq!(AngleCategory::from_angles(54.0, 90.0), AngleCategory::Steep);
        assert_eq!(IllumCategory::from_mean_v(79.9), IllumCategory::Low);
        assert_eq!(IllumCategory::from_mean_v(160.0), IllumCategory::Medium);
        assert_eq!(IllumCategory::from_mean_v(160.1), IllumCategory::High);
    }

    #[test]
    fn standard_matrix() {
        let c = standard_configs();
        assert_eq!(c.len(), 7);
        assert!(c.iter().all(|c| c.stages.fast_ocr || c.stages.vlm));
        assert!(select_configs(&["raw", "full"]).is_ok());
        assert!(select_configs(&["nope"]).is_err());
    }

    #[test]
    fn manifest_records_round_trip() {
        let line = r#"{"image":"a.png","plate":"123ABC","lux":0.5,"distance":"far","angle":"steep","illumination":"low"}"#;
        let r: EvalRecord = serde_json::from_str(line).unwrap();
        assert_eq!(r.distance, Distance::Far);
        assert_eq!(serde_json::from_str::<EvalRecord>(&serde_json::to_string(&r).unwrap()).unwrap(), r);
        let bad = EvalRecord { plate: "12a".into(), ..r };
        assert!(bad.validate().is_err());
    }
}
