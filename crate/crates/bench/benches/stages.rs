use criterion::{black_box, criterion_group, criterion_main, Criterion};
use lpr_bench::Fixtures;
use lpr_core::config::PipelineConfig;
use lpr_core::eval::levenshtein;
use lpr_core::imaging::{canny, clahe, denoise, to_grayscale, CannyParams};
use lpr_core::photometric::photometric_correct;
use lpr_core::reading::assemble;
use lpr_core::rectify::rectify;
use lpr_core::{process_frame, FixtureDetector, Ports, RecognizerPort, TemplateRecognizer};

fn kernels(c: &mut Criterion) {
    let f = Fixtures::new();
    let gray = to_grayscale(&f.frontal_roi).unwrap();
    let mut g = c.benchmark_group("kernels");
    g.sample_size(20);
    g.bench_function("nlm_denoise_gray", |b| b.iter(|| denoise(black_box(&gray))));
    g.bench_function("clahe_8x8", |b| b.iter(|| clahe(black_box(&gray), 8, 2.0).unwrap()));
    g.bench_function("canny", |b| b.iter(|| canny(black_box(&gray), &CannyParams::default()).unwrap()));
    g.bench_function("levenshtein_7", |b| b.iter(|| levenshtein(black_box("1234ABC"), black_box("1284ACB"))));
    g.finish();
}

fn stages(c: &mut Criterion) {
    let f = Fixtures::new();
    let cfg = PipelineConfig::default();
    let rec = TemplateRecognizer::new();
    let mut g = c.benchmark_group("stages");
    g.sample_size(10);
    g.bench_function("rectify_frontal", |b| b.iter(|| rectify(black_box(&f.frontal_roi), &cfg.rectify)));
    g.bench_function("rectify_steep", |b| b.iter(|| rectify(black_box(&f.steep_roi), &cfg.rectify)));
    g.bench_function("photometric", |b| {
        b.iter(|| photometric_correct(black_box(&f.steep_roi), &cfg.photometric).unwrap())
    });
    g.bench_function("recognize_plate", |b| b.iter(|| rec.recognize(black_box(&f.plate))));
    let chars = rec.recognize(&f.plate);
    g.bench_function("assemble", |b| b.iter(|| assemble(black_box(&chars), 440.0, 140.0, &cfg.reading)));
    g.finish();
}

fn pipeline(c: &mut Criterion) {
    let f = Fixtures::new();
    let det = FixtureDetector::exact([f.annotation.clone()]);
    let rec = TemplateRecognizer::new();
    let ports = Ports { detector: &det, recognizer: &rec, vlm: None };
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    for (name, rectify_on) in [("frame_fast_path", true), ("frame_no_rectify", false)] {
        let mut cfg = PipelineConfig::default();
        cfg.stages.vlm = false;
        cfg.stages.rectify = rectify_on;
        g.bench_function(name, |b| b.iter(|| process_frame(black_box(&f.frame), ports, &cfg).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, kernels, stages, pipeline);
criterion_main!(benches);
