use super::{connected_components, ImageBuffer, ImagingError, Point2};

/// Closed boundary; the last point connects back to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    points: Vec<Point2>,
}

impl Contour {
    /// Requires at least three points.
    pub fn new(points: Vec<Point2>) -> Result<Self, ImagingError> {
        if points.len() < 3 {
            return Err(ImagingError::InvalidParameter(format!(
                "contour needs >= 3 points, got {}",
                points.len()
            )));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.points)
    }

    pub fn perimeter(&self) -> f64 {
        perimeter(&self.points)
    }
}

// Clockwise in image coordinates (y down), starting west.
const DIRS: [(isize, isize); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

fn dir_index(dx: isize, dy: isize) -> usize {
    DIRS.iter()
        .position(|&d| d == (dx, dy))
        .expect("neighbouring pixels")
}

/// Outer boundaries of the 8-connected foreground components, traced with
/// Moore-neighbour following. Components whose boundary has fewer than three
/// pixels are skipped.
pub fn find_contours(binary: &ImageBuffer) -> Result<Vec<Contour>, ImagingError> {
    let cc = connected_components(binary)?;
    let (w, h) = (cc.width as isize, cc.height as isize);
    let mut out = Vec::new();
    for comp in &cc.components {
        let label = comp.label;
        let fg = |x: isize, y: isize| {
            x >= 0 && y >= 0 && x < w && y < h && cc.labels[(y * w + x) as usize] == label
        };
        let start = (comp.start.0 as isize, comp.start.1 as isize);
        let mut pts = vec![start];
        let mut cur = start;
        // The raster-order start pixel always has background to the west.
        let mut back = 0usize;
        let mut first_move: Option<usize> = None;
        let limit = 4 * comp.area + 8;
        loop {
            let mut found = None;
            for k in 1..=8 {
                let d = (back + k) % 8;
                let (nx, ny) = (cur.0 + DIRS[d].0, cur.1 + DIRS[d].1);
                if fg(nx, ny) {
                    found = Some(d);
                    break;
                }
            }
            let Some(d) = found else { break };
            if cur == start {
                match first_move {
                    None => first_move = Some(d),
                    Some(f) if f == d => break,
                    Some(_) => {}
                }
            }
            let prev = (cur.0 + DIRS[(d + 7) % 8].0, cur.1 + DIRS[(d + 7) % 8].1);
            let next = (cur.0 + DIRS[d].0, cur.1 + DIRS[d].1);
            back = dir_index(prev.0 - next.0, prev.1 - next.1);
            cur = next;
            if cur == start {
                continue;
            }
            pts.push(cur);
            if pts.len() > limit {
                break;
            }
        }
        if pts.len() >= 3 {
            let points = pts
                .into_iter()
                .map(|(x, y)| Point2::new(x as f64, y as f64))
                .collect();
            out.push(Contour { points });
        }
    }
    Ok(out)
}

pub fn signed_area(pts: &[Point2]) -> f64 {
    let n = pts.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        acc += a.x * b.y - b.x * a.y;
    }
    acc / 2.0
}

/// Shoelace area.
pub fn polygon_area(pts: &[Point2]) -> f64 {
    signed_area(pts).abs()
}

/// Closed-polyline length.
pub fn perimeter(pts: &[Point2]) -> f64 {
    let n = pts.len();
    if n < 2 {
        return 0.0;
    }
    (0..n).map(|i| pts[i].distance(&pts[(i + 1) % n])).sum()
}

fn seg_distance(p: &Point2, a: &Point2, b: &Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(&Point2::new(a.x + t * dx, a.y + t * dy))
}

/// Douglas-Peucker simplification of a closed contour. Every dropped point
/// stays within `epsilon` of the simplified boundary.
pub fn approx_poly(contour: &Contour, epsilon: f64) -> Result<Contour, ImagingError> {
    if !(epsilon > 0.0) {
        return Err(ImagingError::InvalidParameter("epsilon must be > 0".into()));
    }
    let pts = contour.points();
    let n = pts.len();
    if n <= 3 {
        return Ok(contour.clone());
    }
    let farthest = |from: usize| {
        (0..n)
            .max_by(|&a, &b| {
                pts[from]
                    .distance(&pts[a])
                    .total_cmp(&pts[from].distance(&pts[b]))
            })
            .expect("non-empty")
    };
    let k1 = farthest(0);
    let k2 = farthest(k1);
    let (a, b) = (k1.min(k2), k1.max(k2));
    if a == b {
        return Ok(contour.clone());
    }

    // Kept vertices as indices into `pts`, in boundary order.
    let mut keep = Vec::new();
    dp_open(pts, &(a..=b).collect::<Vec<_>>(), epsilon, &mut keep);
    keep.pop();
    let wrap: Vec<usize> = (b..n).chain(0..=a).collect();
    dp_open(pts, &wrap, epsilon, &mut keep);
    keep.pop();

    // The split points need not be corners; drop any vertex whose removal
    // keeps every original point in its span within epsilon.
    loop {
        let m = keep.len();
        if m <= 3 {
            break;
        }
        let mut removed = false;
        for i in 0..m {
            let prev = keep[(i + m - 1) % m];
            let next = keep[(i + 1) % m];
            let span = span_indices(prev, next, n);
            let ok = span
                .iter()
                .all(|&j| seg_distance(&pts[j], &pts[prev], &pts[next]) <= epsilon);
            if ok {
                keep.remove(i);
                removed = true;
                break;
            }
        }
        if !removed {
            break;
        }
    }
    Contour::new(keep.into_iter().map(|i| pts[i]).collect())
}

fn span_indices(from: usize, to: usize, n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = (from + 1) % n;
    while i != to {
        out.push(i);
        i = (i + 1) % n;
    }
    out
}

/// Open-chain Douglas-Peucker over `chain` (indices into `pts`). Pushes kept
/// indices including both endpoints.
fn dp_open(pts: &[Point2], chain: &[usize], eps: f64, out: &mut Vec<usize>) {
    let m = chain.len();
    let mut keep = vec![false; m];
    keep[0] = true;
    keep[m - 1] = true;
    let mut stack = vec![(0usize, m - 1)];
    while let Some((s, e)) = stack.pop() {
        if e <= s + 1 {
            continue;
        }
        let (pa, pb) = (&pts[chain[s]], &pts[chain[e]]);
        let (mut best, mut best_d) = (s, -1.0);
        for k in s + 1..e {
            let d = seg_distance(&pts[chain[k]], pa, pb);
            if d > best_d {
                best_d = d;
                best = k;
            }
        }
        if best_d > eps {
            keep[best] = true;
            stack.push((s, best));
            stack.push((best, e));
        }
    }
    out.extend(chain.iter().zip(keep).filter(|(_, k)| *k).map(|(&i, _)| i));
}

fn cross(o: &Point2, a: &Point2, b: &Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Andrew's monotone chain; collinear points are dropped.
pub fn convex_hull(pts: &[Point2]) -> Vec<Point2> {
    let mut p: Vec<Point2> = pts.to_vec();
    p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut lower: Vec<Point2> = Vec::new();
    for q in &p {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], q) <= 0.0 {
            lower.pop();
        }
        lower.push(*q);
    }
    let mut upper: Vec<Point2> = Vec::new();
    for q in p.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], q) <= 0.0 {
            upper.pop();
        }
        upper.push(*q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// True when all turns have the same orientation (collinear turns ignored).
pub fn is_convex(pts: &[Point2]) -> bool {
    let n = pts.len();
    if n < 3 {
        return false;
    }
    let mut sign = 0.0f64;
    for i in 0..n {
        let c = cross(&pts[i], &pts[(i + 1) % n], &pts[(i + 2) % n]);
        if c.abs() < 1e-12 {
            continue;
        }
        if sign == 0.0 {
            sign = c.signum();
        } else if c.signum() != sign {
            return false;
        }
    }
    sign != 0.0
}

/// Polygon area over convex-hull area, in `(0, 1]`.
pub fn solidity(contour: &Contour) -> Result<f64, ImagingError> {
    let area = contour.area();
    let hull = polygon_area(&convex_hull(contour.points()));
    if area <= 1e-12 || hull <= 1e-12 {
        return Err(ImagingError::ZeroArea);
    }
    Ok((area / hull).min(1.0))
}

/// Minimum-area enclosing rectangle via rotating calipers over the hull.
/// Corners are returned in boundary order.
pub fn min_area_rect(pts: &[Point2]) -> Result<[Point2; 4], ImagingError> {
    let hull = convex_hull(pts);
    if hull.len() < 3 {
        return Err(ImagingError::ZeroArea);
    }
    let mut best: Option<(f64, [Point2; 4])> = None;
    for i in 0..hull.len() {
        let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
        let len = a.distance(&b);
        if len == 0.0 {
            continue;
        }
        let u = ((b.x - a.x) / len, (b.y - a.y) / len);
        let v = (-u.1, u.0);
        let (mut umin, mut umax, mut vmin, mut vmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &hull {
            let pu = p.x * u.0 + p.y * u.1;
            let pv = p.x * v.0 + p.y * v.1;
            umin = umin.min(pu);
            umax = umax.max(pu);
            vmin = vmin.min(pv);
            vmax = vmax.max(pv);
        }
        let area = (umax - umin) * (vmax - vmin);
        if best.as_ref().is_none_or(|(a, _)| area < *a) {
            let corner = |s: f64, t: f64| Point2::new(s * u.0 + t * v.0, s * u.1 + t * v.1);
            best = Some((
                area,
                [
                    corner(umin, vmin),
                    corner(umax, vmin),
                    corner(umax, vmax),
                    corner(umin, vmax),
                ],
            ));
        }
    }
    best.map(|(_, r)| r).ok_or(ImagingError::ZeroArea)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_image(rects: &[(usize, usize, usize)]) -> ImageBuffer {
        ImageBuffer::from_fn_gray(60, 40, |x, y| {
            let hit = rects
                .iter()
                .any(|&(x0, y0, s)| (x0..x0 + s).contains(&x) && (y0..y0 + s).contains(&y));
            if hit { 255 } else { 0 }
        })
        .unwrap()
    }

    fn poly(pts: &[(f64, f64)]) -> Contour {
        Contour::new(pts.iter().map(|&p| p.into()).collect()).unwrap()
    }

    #[test]
    fn contours_of_empty_and_squares() {
        assert!(find_contours(&ImageBuffer::new(20, 20, 1).unwrap()).unwrap().is_empty());
        let one = find_contours(&square_image(&[(5, 5, 10)])).unwrap();
        assert_eq!(one.len(), 1);
        let a = one[0].area();
        assert!((81.0..=100.0).contains(&a), "area {a}");
        assert_eq!(find_contours(&square_image(&[(5, 5, 10), (30, 20, 8)])).unwrap().len(), 2);
    }

    #[test]
    fn contour_of_thin_line_traces_both_sides() {
        let img = ImageBuffer::from_fn_gray(20, 5, |x, y| if y == 2 && (3..12).contains(&x) { 255 } else { 0 })
            .unwrap();
        let c = find_contours(&img).unwrap();
        assert_eq!(c.len(), 1);
        assert!(c[0].area() < 1e-9);
    }

    #[test]
    fn approx_triangle_stays_triangle() {
        let t = poly(&[(0.0, 0.0), (30.0, 0.0), (15.0, 20.0)]);
        assert_eq!(approx_poly(&t, 2.0).unwrap().len(), 3);
    }

    #[test]
    fn approx_dense_rectangle_to_four() {
        let mut pts = Vec::new();
        for i in 0..150 {
            pts.push((i as f64, 0.0));
        }
        for i in 0..50 {
            pts.push((150.0, i as f64));
        }
        for i in 0..150 {
            pts.push((150.0 - i as f64, 50.0));
        }
        for i in 0..50 {
            pts.push((0.0, 50.0 - i as f64));
        }
        let c = poly(&pts);
        assert_eq!(c.len(), 400);
        let eps = 0.02 * c.perimeter();
        let s = approx_poly(&c, eps).unwrap();
        assert_eq!(s.len(), 4, "{:?}", s.points());
        for corner in [(0.0, 0.0), (150.0, 0.0), (150.0, 50.0), (0.0, 50.0)] {
            let p: Point2 = corner.into();
            assert!(s.points().iter().any(|q| q.distance(&p) < 1e-9));
        }
    }

    #[test]
    fn approx_circle_keeps_many_vertices() {
        let pts: Vec<(f64, f64)> = (0..360)
            .map(|i| {
                let t = (i as f64).to_radians();
                (100.0 + 50.0 * t.cos(), 100.0 + 50.0 * t.sin())
            })
            .collect();
        let s = approx_poly(&poly(&pts), 1.0).unwrap();
        assert!(s.len() > 8, "{}", s.len());
    }

    #[test]
    fn solidity_examples() {
        let rect = poly(&[(0.0, 0.0), (10.0, 0.0), (10.0, 5.0), (0.0, 5.0)]);
        assert!((solidity(&rect).unwrap() - 1.0).abs() < 1e-12);
        let l = poly(&[(0.0, 0.0), (2.0, 0.0), (2.0, 1.0), (1.0, 1.0), (1.0, 2.0), (0.0, 2.0)]);
        // Hull of the L cuts the missing quadrant diagonally: 3 / 3.5.
        let s = solidity(&l).unwrap();
        assert!((s - 3.0 / 3.5).abs() < 1e-12, "{s}");
        let star: Vec<(f64, f64)> = (0..10)
            .map(|i| {
                let r = if i % 2 == 0 { 10.0 } else { 4.0 };
                let t = (i as f64 * 36.0).to_radians();
                (r * t.cos(), r * t.sin())
            })
            .collect();
        assert!(solidity(&poly(&star)).unwrap() < 1.0);
        let flat = poly(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        assert_eq!(solidity(&flat), Err(ImagingError::ZeroArea));
    }

    #[test]
    fn min_area_rect_of_rotated_rectangle() {
        let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
        let pts: Vec<Point2> = [(0.0, 0.0), (40.0, 0.0), (40.0, 10.0), (0.0, 10.0)]
            .iter()
            .map(|&(x, y)| Point2::new(x * c - y * s, x * s + y * c))
            .collect();
        let r = min_area_rect(&pts).unwrap();
        assert!((polygon_area(&r) - 400.0).abs() < 1e-6);
    }

    #[test]
    fn convexity() {
        assert!(is_convex(&[(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0)].map(Point2::from)));
        assert!(!is_convex(&[(0.0, 0.0), (4.0, 0.0), (1.0, 1.0), (0.0, 4.0)].map(Point2::from)));
    }
}
