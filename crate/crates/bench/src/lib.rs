//! Inputs shared by the stage benchmarks.

use lpr_core::detection::{crop_padded, AnnotationRecord};
use lpr_core::synth::{compose_scene, render_plate, PlateSpec, SceneSpec};
use lpr_core::{Frame, ImageBuffer};

pub struct Fixtures {
    /// A clean 440x140 plate.
    pub plate: ImageBuffer,
    /// Padded crop of a frontal, evenly lit plate in a scene.
    pub frontal_roi: ImageBuffer,
    /// Padded crop of a steeply foreshortened, dim plate.
    pub steep_roi: ImageBuffer,
    pub frame: Frame,
    pub annotation: AnnotationRecord,
}

fn scene_roi(spec: &PlateSpec, scene: &SceneSpec, name: &str) -> (ImageBuffer, Frame, AnnotationRecord) {
    let plate = render_plate(spec).expect("valid plate");
    let (img, gt) = compose_scene(&plate, scene).expect("scene fits the canvas");
    let (roi, _) = crop_padded(&img, &gt.plate_box, 10).expect("plate box inside frame");
    let ann = AnnotationRecord {
        image: name.to_string(),
        cars: vec![gt.car_box.to_array()],
        plates: vec![gt.plate_box.to_array()],
    };
    (roi, Frame::new(name, img), ann)
}

impl Fixtures {
    pub fn new() -> Self {
        let spec = PlateSpec::new("4821", "KTB", 'L', 3).expect("valid plate spec");
        let plate = render_plate(&spec).expect("valid plate").image;
        let (frontal_roi, frame, annotation) = scene_roi(&spec, &SceneSpec::default(), "frontal.png");
        let steep = SceneSpec {
            h_angle: 100.0,
            v_angle: 142.0,
            illumination_gain: 0.5,
            distance_ratio: 1.6,
            ..SceneSpec::default()
        };
        let (steep_roi, _, _) = scene_roi(&spec, &steep, "steep.png");
        Fixtures { plate, frontal_roi, steep_roi, frame, annotation }
    }
}

impl Default for Fixtures {
    fn default() -> Self {
        Self::new()
    }
}
