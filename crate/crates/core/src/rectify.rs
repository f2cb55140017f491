//! Three-way geometric routing of a plate ROI: severe perspective warp,
//! gentle deskew of flat plates, or untouched pass-through.

use serde::{Deserialize, Serialize};

use crate::config::RectifyConfig;
use crate::imaging::{
    approx_poly, canny, clahe, connected_components, denoise, estimate_homography, find_contours,
    is_convex, min_area_rect, morph_close, otsu_threshold, polygon_area, solidity, CannyParams,
    Homography, ImageBuffer, Point2, warp_perspective,
};

/// Four corners ordered TL, TR, BR, BL with cached edge lengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrilateral {
    pub corners: [Point2; 4],
    pub top_len: f64,
    pub bottom_len: f64,
    pub left_len: f64,
    pub right_len: f64,
}

impl Quadrilateral {
    /// Orders arbitrary corners clockwise (in image coordinates) starting at
    /// the one with the smallest `x + y`. Fails on a zero-length edge.
    pub fn from_corners(pts: [Point2; 4]) -> Option<Self> {
        if pts.iter().any(|p| !p.is_finite()) {
            return None;
        }
        let cx = pts.iter().map(|p| p.x).sum::<f64>() / 4.0;
        let cy = pts.iter().map(|p| p.y).sum::<f64>() / 4.0;
        let mut sorted = pts;
        sorted.sort_by(|a, b| (a.y - cy).atan2(a.x - cx).total_cmp(&(b.y - cy).atan2(b.x - cx)));
        let start = (0..4)
            .min_by(|&i, &j| (sorted[i].x + sorted[i].y).total_cmp(&(sorted[j].x + sorted[j].y)))
            .unwrap_or(0);
        let corners: [Point2; 4] = std::array::from_fn(|k| sorted[(start + k) % 4]);
        let [tl, tr, br, bl] = corners;
        let q = Self {
            corners,
            top_len: tl.distance(&tr),
            right_len: tr.distance(&br),
            bottom_len: br.distance(&bl),
            left_len: bl.distance(&tl),
        };
        let edges = [q.top_len, q.right_len, q.bottom_len, q.left_len];
        edges.iter().all(|&e| e > 1e-9).then_some(q)
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.corners)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryMeasure {
    /// Longer over shorter of the top and bottom edges.
    pub fr: f64,
    /// Angle of the top edge against the horizontal, in `[0, 90]` degrees.
    pub tilt_deg: f64,
}

pub fn calculate_geometry(quad: &Quadrilateral) -> GeometryMeasure {
    let (a, b) = (quad.top_len, quad.bottom_len);
    let fr = a.max(b) / a.min(b);
    let [tl, tr, _, _] = quad.corners;
    let mut tilt = (tr.y - tl.y).atan2(tr.x - tl.x).to_degrees().abs();
    if tilt > 90.0 {
        tilt = 180.0 - tilt;
    }
    GeometryMeasure { fr, tilt_deg: tilt }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RectifyRoute {
    SevereWarp,
    GentleRefine,
    PassThrough,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassReason {
    NoQuad,
    SmallQuad,
    Guardrail,
    /// Severe distortion but no usable homography.
    WarpFailed,
    BlobRejected,
    /// Between the flat and severe bands.
    Moderate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobStats {
    pub solidity: f64,
    /// Blob pixel count over ROI area.
    pub area_frac: f64,
}

/// Everything the router looks at. Fields that a route never needs may be
/// left empty.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RouteInputs {
    /// Quad area over ROI area; `None` when no quad was found.
    pub quad_area_frac: Option<f64>,
    pub fr: f64,
    pub tilt_deg: f64,
    /// Largest corner displacement over ROI width.
    pub delta_frac: Option<f64>,
    pub blob: Option<BlobStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteDecision {
    pub route: RectifyRoute,
    pub reason: Option<PassReason>,
}

impl RouteDecision {
    fn pass(reason: PassReason) -> Self {
        Self {
            route: RectifyRoute::PassThrough,
            reason: Some(reason),
        }
    }

    fn take(route: RectifyRoute) -> Self {
        Self { route, reason: None }
    }
}

pub fn is_severe(fr: f64, tilt_deg: f64, cfg: &RectifyConfig) -> bool {
    fr > cfg.severe_fr || tilt_deg > cfg.severe_tilt_deg
}

pub fn is_flat(fr: f64, tilt_deg: f64, cfg: &RectifyConfig) -> bool {
    fr < cfg.flat_fr && tilt_deg < cfg.flat_tilt_deg
}

/// The routing table. All comparisons are strict except the blob-area band,
/// which is closed.
pub fn decide_route(inp: &RouteInputs, cfg: &RectifyConfig) -> RouteDecision {
    let Some(area_frac) = inp.quad_area_frac else {
        return RouteDecision::pass(PassReason::NoQuad);
    };
    if area_frac <= cfg.min_quad_area_frac {
        return RouteDecision::pass(PassReason::SmallQuad);
    }
    if is_severe(inp.fr, inp.tilt_deg, cfg) {
        return match inp.delta_frac {
            None => RouteDecision::pass(PassReason::WarpFailed),
            Some(d) if d <= cfg.guardrail_frac => RouteDecision::take(RectifyRoute::SevereWarp),
            Some(_) => RouteDecision::pass(PassReason::Guardrail),
        };
    }
    if is_flat(inp.fr, inp.tilt_deg, cfg) {
        return match inp.blob {
            Some(b)
                if b.solidity > cfg.min_solidity
                    && (cfg.blob_area_min..=cfg.blob_area_max).contains(&b.area_frac) =>
            {
                RouteDecision::take(RectifyRoute::GentleRefine)
            }
            _ => RouteDecision::pass(PassReason::BlobRejected),
        };
    }
    RouteDecision::pass(PassReason::Moderate)
}

#[derive(Debug, Clone, Serialize)]
pub struct RectifyOutcome {
    #[serde(skip)]
    pub image: ImageBuffer,
    pub route: RectifyRoute,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<PassReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quad: Option<Quadrilateral>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measure: Option<GeometryMeasure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blob: Option<BlobStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub homography: Option<Homography>,
}

/// Named intermediate images, in production order.
pub type DebugImages = Vec<(String, ImageBuffer)>;

/// Largest convex four-vertex contour of the ROI's edge map, if any.
pub fn extract_largest_quadrilateral(roi: &ImageBuffer, cfg: &RectifyConfig) -> Option<Quadrilateral> {
    find_quad(roi, cfg, None)
}

fn find_quad(roi: &ImageBuffer, cfg: &RectifyConfig, mut debug: Option<&mut DebugImages>) -> Option<Quadrilateral> {
    if roi.width() < 20 || roi.height() < 10 {
        return None;
    }
    let gray = roi.to_gray();
    let enhanced = clahe(&gray, cfg.clahe_tiles, cfg.clahe_clip).ok()?;
    let params = CannyParams {
        low: cfg.canny_low,
        high: cfg.canny_high,
        sigma: cfg.canny_sigma,
    };
    let edges = canny(&enhanced, &params).ok()?;
    let contours = find_contours(&edges).ok()?;
    if let Some(d) = debug.as_deref_mut() {
        d.push(("clahe".into(), enhanced));
        d.push(("edges".into(), edges));
    }
    let largest = contours.iter().max_by(|a, b| a.area().total_cmp(&b.area()))?;
    if let Some(d) = debug.as_deref_mut() {
        let mut overlay = rgb(roi);
        draw_polyline(&mut overlay, largest.points(), [255, 0, 0]);
        d.push(("contour".into(), overlay));
    }
    let eps = cfg.poly_epsilon_frac * largest.perimeter();
    let poly = approx_poly(largest, eps).ok()?;
    if poly.len() != 4 || !is_convex(poly.points()) {
        return None;
    }
    let pts: [Point2; 4] = poly.points().try_into().ok()?;
    let rough = Quadrilateral::from_corners(pts)?;
    let quad = refine_corners(largest.points(), &rough.corners)
        .and_then(Quadrilateral::from_corners)
        .filter(|q| is_convex(&q.corners))
        .unwrap_or(rough);
    if let Some(d) = debug {
        let mut overlay = rgb(roi);
        draw_polyline(&mut overlay, &quad.corners, [0, 200, 0]);
        d.push(("quad".into(), overlay));
    }
    Some(quad)
}

/// Total-least-squares line through `pts`: (centroid, unit direction).
fn fit_line(pts: &[Point2]) -> Option<(Point2, Point2)> {
    if pts.len() < 5 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.x).sum::<f64>() / n, pts.iter().map(|p| p.y).sum::<f64>() / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p.x - mx, p.y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Some((Point2::new(mx, my), Point2::new(theta.cos(), theta.sin())))
}

fn intersect((p, u): (Point2, Point2), (q, v): (Point2, Point2)) -> Option<Point2> {
    let den = u.x * v.y - u.y * v.x;
    if den.abs() < 1e-9 {
        return None;
    }
    let t = ((q.x - p.x) * v.y - (q.y - p.y) * v.x) / den;
    Some(Point2::new(p.x + t * u.x, p.y + t * u.y))
}

/// Polygon simplification keeps contour points as vertices, which shaves
/// acute corners. Refit each side to the contour points along its middle and
/// intersect neighbouring sides instead. `None` if any side is too sparse or
/// a corner would move implausibly far.
fn refine_corners(contour: &[Point2], rough: &[Point2; 4]) -> Option<[Point2; 4]> {
    // Contours store only direction changes; resample to ~1 px spacing.
    let mut dense = Vec::with_capacity(contour.len() * 2);
    for (i, &a) in contour.iter().enumerate() {
        let b = contour[(i + 1) % contour.len()];
        let steps = a.distance(&b).ceil().max(1.0) as usize;
        for k in 0..steps {
            let t = k as f64 / steps as f64;
            dense.push(Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
        }
    }
    let mut corners = *rough;
    // Coarse-to-fine: a badly placed vertex skews its sides, so start with a
    // wide band and tighten it around the refitted lines.
    for band in [0.12, 0.05, 0.02] {
        let mut lines = Vec::with_capacity(4);
        for i in 0..4 {
            let (a, b) = (corners[i], corners[(i + 1) % 4]);
            let len = a.distance(&b);
            if len < 1e-6 {
                return None;
            }
            let u = Point2::new((b.x - a.x) / len, (b.y - a.y) / len);
            let tol = (band * len).max(2.0);
            let side: Vec<Point2> = dense
                .iter()
                .copied()
                .filter(|p| {
                    let (dx, dy) = (p.x - a.x, p.y - a.y);
                    let t = (dx * u.x + dy * u.y) / len;
                    let d = (dx * u.y - dy * u.x).abs();
                    (0.15..=0.85).contains(&t) && d <= tol
                })
                .collect();
            lines.push(fit_line(&side)?);
        }
        for i in 0..4 {
            corners[i] = intersect(lines[(i + 3) % 4], lines[i])?;
        }
    }
    for i in 0..4 {
        let shortest = rough[(i + 3) % 4].distance(&rough[i]).min(rough[i].distance(&rough[(i + 1) % 4]));
        if !corners[i].is_finite() || corners[i].distance(&rough[i]) > 0.35 * shortest {
            return None;
        }
    }
    Some(corners)
}

/// Upright rectangle the severe warp maps the quad onto: width and height
/// from the longer of each pair of opposite edges.
pub fn target_rectangle(quad: &Quadrilateral) -> ([Point2; 4], usize, usize) {
    let w = quad.top_len.max(quad.bottom_len).round().max(1.0);
    let h = quad.left_len.max(quad.right_len).round().max(1.0);
    let dst = [
        Point2::new(0.0, 0.0),
        Point2::new(w, 0.0),
        Point2::new(w, h),
        Point2::new(0.0, h),
    ];
    (dst, w as usize + 1, h as usize + 1)
}

pub fn rectify(roi: &ImageBuffer, cfg: &RectifyConfig) -> RectifyOutcome {
    rectify_inner(roi, cfg, None)
}

/// As [`rectify`], also returning the intermediate images.
pub fn rectify_debug(roi: &ImageBuffer, cfg: &RectifyConfig) -> (RectifyOutcome, DebugImages) {
    let mut dbg = DebugImages::new();
    let out = rectify_inner(roi, cfg, Some(&mut dbg));
    dbg.push(("output".into(), out.image.clone()));
    (out, dbg)
}

fn rectify_inner(roi: &ImageBuffer, cfg: &RectifyConfig, mut debug: Option<&mut DebugImages>) -> RectifyOutcome {
    let mut out = RectifyOutcome {
        image: roi.clone(),
        route: RectifyRoute::PassThrough,
        reason: None,
        quad: None,
        measure: None,
        delta_max: None,
        blob: None,
        homography: None,
    };
    let roi_area = roi.area() as f64;
    let roi_w = roi.width() as f64;

    let quad = find_quad(roi, cfg, debug.as_deref_mut());
    let mut inputs = RouteInputs {
        quad_area_frac: quad.map(|q| q.area() / roi_area),
        ..Default::default()
    };
    let mut warped = None;
    if let Some(q) = quad {
        let m = calculate_geometry(&q);
        inputs.fr = m.fr;
        inputs.tilt_deg = m.tilt_deg;
        out.quad = Some(q);
        out.measure = Some(m);
        let big_enough = inputs.quad_area_frac.is_some_and(|a| a > cfg.min_quad_area_frac);
        if big_enough && is_severe(m.fr, m.tilt_deg, cfg) {
            let (dst, w, h) = target_rectangle(&q);
            if let Ok(hm) = estimate_homography(&q.corners, &dst) {
                let delta = q
                    .corners
                    .iter()
                    .zip(&dst)
                    .map(|(s, d)| s.distance(d))
                    .fold(0.0, f64::max);
                inputs.delta_frac = Some(delta / roi_w);
                out.delta_max = Some(delta);
                out.homography = Some(hm);
                warped = Some((hm, w, h));
            }
        } else if big_enough && is_flat(m.fr, m.tilt_deg, cfg) {
            if let Some((stats, hm, smooth)) = text_blob(roi, roi_area) {
                inputs.blob = Some(stats);
                out.blob = Some(stats);
                out.homography = hm;
                warped = hm.map(|hm| (hm, roi.width(), roi.height()));
                // Gentle warp samples the denoised ROI.
                out.image = smooth;
            }
        }
    }

    let decision = decide_route(&inputs, cfg);
    out.route = decision.route;
    out.reason = decision.reason;
    let source = match decision.route {
        RectifyRoute::SevereWarp => Some(roi),
        RectifyRoute::GentleRefine => Some(&out.image),
        RectifyRoute::PassThrough => None,
    };
    match (source, warped) {
        (Some(src), Some((hm, w, h))) => match warp_perspective(src, &hm, w, h) {
            Ok(img) => out.image = img,
            Err(_) => {
                out.route = RectifyRoute::PassThrough;
                out.reason = Some(PassReason::WarpFailed);
                out.image = roi.clone();
            }
        },
        (Some(_), None) => {
            // GentleRefine without a homography cannot happen, but degrade
            // rather than panic.
            out.route = RectifyRoute::PassThrough;
            out.reason = Some(PassReason::WarpFailed);
            out.image = roi.clone();
        }
        (None, _) => out.image = roi.clone(),
    }
    out
}

/// Largest ink component after denoise, Otsu and a 5x3 closing, with the
/// homography that squares its minimum-area rectangle to the axes.
fn text_blob(roi: &ImageBuffer, roi_area: f64) -> Option<(BlobStats, Option<Homography>, ImageBuffer)> {
    let smooth = denoise(roi);
    let gray = smooth.to_gray();
    let t = otsu_threshold(&gray).ok()?;
    let ink_data = gray.data().iter().map(|&v| if v <= t { 255 } else { 0 }).collect();
    let ink = ImageBuffer::from_raw(gray.width(), gray.height(), 1, ink_data).ok()?;
    let closed = morph_close(&ink, 5, 3).ok()?;
    let cc = connected_components(&closed).ok()?;
    let biggest = cc.components.iter().max_by_key(|c| c.area)?;
    let contour = find_contours(&cc.mask(biggest.label)).ok()?.into_iter().next()?;
    let stats = BlobStats {
        solidity: solidity(&contour).unwrap_or(0.0),
        area_frac: biggest.area as f64 / roi_area,
    };
    let hm = min_area_rect(contour.points())
        .ok()
        .and_then(|r| Quadrilateral::from_corners(r))
        .and_then(|q| {
            let c = q.corners.iter().fold(Point2::default(), |acc, p| Point2::new(acc.x + p.x / 4.0, acc.y + p.y / 4.0));
            let (hw, hh) = (q.top_len / 2.0, q.left_len / 2.0);
            let dst = [
                Point2::new(c.x - hw, c.y - hh),
                Point2::new(c.x + hw, c.y - hh),
                Point2::new(c.x + hw, c.y + hh),
                Point2::new(c.x - hw, c.y + hh),
            ];
            estimate_homography(&q.corners, &dst).ok()
        });
    Some((stats, hm, smooth))
}

fn rgb(img: &ImageBuffer) -> ImageBuffer {
    match img.channels() {
        3 => img.clone(),
        _ => img.gray_to_rgb().expect("gray input"),
    }
}

fn draw_polyline(img: &mut ImageBuffer, pts: &[Point2], color: [u8; 3]) {
    let n = pts.len();
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        let steps = a.distance(&b).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let (x, y) = ((a.x + (b.x - a.x) * t).round(), (a.y + (b.y - a.y) * t).round());
            if x >= 0.0 && y >= 0.0 && (x as usize) < img.width() && (y as usize) < img.height() {
                img.pixel_mut(x as usize, y as usize).copy_from_slice(&color);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(v: [(f64, f64); 4]) -> Quadrilateral {
        Quadrilateral::from_corners(v.map(Point2::from)).unwrap()
    }

    #[test]
    fn corner_ordering_from_any_permutation() {
        let want = [(10.0, 5.0), (90.0, 8.0), (88.0, 40.0), (12.0, 38.0)];
        let perms = [[0, 1, 2, 3], [2, 0, 3, 1], [3, 2, 1, 0], [1, 3, 0, 2]];
        for p in perms {
            let q = quad(p.map(|i| want[i]));
            assert_eq!(q.corners, want.map(Point2::from));
        }
    }

    #[test]
    fn geometry_of_rectangle_trapezoid_and_rotation() {
        let r = calculate_geometry(&quad([(0.0, 0.0), (100.0, 0.0), (100.0, 40.0), (0.0, 40.0)]));
        assert_eq!((r.fr, r.tilt_deg), (1.0, 0.0));
        let t = calculate_geometry(&quad([(0.0, 0.0), (100.0, 0.0), (90.0, 40.0), (10.0, 40.0)]));
        assert!((t.fr - 1.25).abs() < 1e-12 && t.tilt_deg == 0.0);
        let a = 10f64.to_radians();
        let rot = |x: f64, y: f64| (x * a.cos() - y * a.sin() + 50.0, x * a.sin() + y * a.cos() + 20.0);
        let g = calculate_geometry(&quad([rot(0.0, 0.0), rot(100.0, 0.0), rot(100.0, 40.0), rot(0.0, 40.0)]));
        assert!((g.fr - 1.0).abs() < 1e-9);
        assert!((g.tilt_deg - 10.0).abs() < 0.1);
    }

    #[test]
    fn blank_roi_has_no_quad() {
        let roi = ImageBuffer::from_rgb_fill(120, 50, [255; 3]).unwrap();
        assert!(extract_largest_quadrilateral(&roi, &RectifyConfig::default()).is_none());
        let out = rectify(&roi, &RectifyConfig::default());
        assert_eq!(out.route, RectifyRoute::PassThrough);
        assert_eq!(out.reason, Some(PassReason::NoQuad));
        assert_eq!(out.image, roi);
    }

    #[test]
    fn router_thresholds_are_strict() {
        let cfg = RectifyConfig::default();
        let base = RouteInputs {
            quad_area_frac: Some(0.5),
            delta_frac: Some(0.1),
            blob: Some(BlobStats { solidity: 0.9, area_frac: 0.3 }),
            ..Default::default()
        };
        let route = |fr: f64, tilt: f64| decide_route(&RouteInputs { fr, tilt_deg: tilt, ..base }, &cfg).route;
        assert_eq!(route(1.15, 0.0), RectifyRoute::PassThrough);
        assert_eq!(route(1.16, 0.0), RectifyRoute::SevereWarp);
        assert_eq!(route(1.0, 15.0), RectifyRoute::PassThrough);
        assert_eq!(route(1.0, 15.1), RectifyRoute::SevereWarp);
        assert_eq!(route(1.06, 0.0), RectifyRoute::PassThrough);
        assert_eq!(route(1.05, 4.9), RectifyRoute::GentleRefine);
        assert_eq!(route(1.05, 5.0), RectifyRoute::PassThrough);
        let small = RouteInputs { quad_area_frac: Some(0.15), fr: 1.3, ..base };
        assert_eq!(decide_route(&small, &cfg).reason, Some(PassReason::SmallQuad));
    }

    #[test]
    fn pass_through_is_byte_identical() {
        let roi = ImageBuffer::from_fn_rgb(100, 40, |x, y| [(x * 2) as u8, (y * 5) as u8, 77]).unwrap();
        let out = rectify(&roi, &RectifyConfig::default());
        if out.route == RectifyRoute::PassThrough {
            assert_eq!(out.image, roi);
        }
    }
}
