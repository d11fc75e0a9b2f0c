//! Classical shape detector: connected components plus contour analysis.
//!
//! Each 8-connected ink component becomes one [`DetectedShape`]. The kind is
//! decided from the convex hull of the component (solidity, circularity,
//! minimum-area rectangle fill and aspect) together with the corner count of a
//! dominant-point approximation of that hull.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::model::{empty_counts, BBox, DetectedShape, RasterImage, ShapeKind};

/// A maximal 8-connected ink region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentMask {
    /// 1-based, contiguous, in raster order of each component's first pixel.
    pub label: u32,
    pub pixels: Vec<(u32, u32)>,
    pub bbox: BBox,
    pub area: u64,
    /// Crack length of the outer boundary, in pixel edges.
    pub perimeter: u64,
    pub hole_count: u32,
    /// Area enclosed by the outer boundary (ink plus holes).
    pub region_area: u64,
}

/// Labels 8-connected ink components.
pub fn label_components(img: &RasterImage) -> Vec<ComponentMask> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut labels = vec![0u32; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if labels[start] != 0 || img.pixels()[start] >= crate::model::INK_THRESHOLD {
            continue;
        }
        let label = out.len() as u32 + 1;
        labels[start] = label;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            pixels.push((x as u32, y as u32));
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if labels[j] == 0 && img.pixels()[j] < crate::model::INK_THRESHOLD {
                        labels[j] = label;
                        stack.push(j);
                    }
                }
            }
        }
        pixels.sort_by_key(|&(x, y)| (y, x));
        out.push(build_component(label, pixels));
    }
    out
}

fn build_component(label: u32, pixels: Vec<(u32, u32)>) -> ComponentMask {
    let x0 = pixels.iter().map(|p| p.0).min().unwrap();
    let x1 = pixels.iter().map(|p| p.0).max().unwrap() + 1;
    let y0 = pixels.iter().map(|p| p.1).min().unwrap();
    let y1 = pixels.iter().map(|p| p.1).max().unwrap() + 1;
    // Local grid with a one-pixel frame so the outside is connected.
    let gw = (x1 - x0 + 2) as usize;
    let gh = (y1 - y0 + 2) as usize;
    let mut grid = vec![0u8; gw * gh]; // 0 unknown background, 1 ink, 2 outside
    for &(x, y) in &pixels {
        grid[(y - y0 + 1) as usize * gw + (x - x0 + 1) as usize] = 1;
    }
    flood4(&mut grid, gw, gh, 0, 2);
    let mut hole_count = 0;
    let mut hole_area = 0u64;
    for i in 0..grid.len() {
        if grid[i] == 0 {
            hole_count += 1;
            hole_area += flood4(&mut grid, gw, gh, i, 3);
        }
    }
    // Outer crack perimeter: region pixel edges facing the outside.
    let mut perimeter = 0;
    for y in 0..gh {
        for x in 0..gw {
            if grid[y * gw + x] == 2 {
                continue;
            }
            for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if grid[ny as usize * gw + nx as usize] == 2 {
                    perimeter += 1;
                }
            }
        }
    }
    let area = pixels.len() as u64;
    ComponentMask {
        label,
        pixels,
        bbox: BBox { x0, y0, x1, y1 },
        area,
        perimeter,
        hole_count,
        region_area: area + hole_area,
    }
}

/// 4-connected fill of cells equal to `grid[start]`, returning the cell count.
fn flood4(grid: &mut [u8], w: usize, h: usize, start: usize, mark: u8) -> u64 {
    let target = grid[start];
    grid[start] = mark;
    let mut stack = vec![start];
    let mut n = 0;
    while let Some(i) = stack.pop() {
        n += 1;
        let (x, y) = (i % w, i / w);
        let mut visit = |j: usize, stack: &mut Vec<usize>| {
            if grid[j] == target {
                grid[j] = mark;
                stack.push(j);
            }
        };
        if x > 0 {
            visit(i - 1, &mut stack);
        }
        if x + 1 < w {
            visit(i + 1, &mut stack);
        }
        if y > 0 {
            visit(i - w, &mut stack);
        }
        if y + 1 < h {
            visit(i + w, &mut stack);
        }
    }
    n
}

type Pt = (f64, f64);

fn cross(o: Pt, a: Pt, b: Pt) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull by monotone chain; collinear points dropped.
fn convex_hull(mut pts: Vec<Pt>) -> Vec<Pt> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Pt> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Pt> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn polygon_area(poly: &[Pt]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        .abs()
        / 2.0
}

fn polygon_perimeter(poly: &[Pt]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
        })
        .sum()
}

/// Minimum-area enclosing rectangle of a convex polygon: (area, long/short
/// aspect, orientation of one side in `[0, 90)` degrees).
fn min_area_rect(hull: &[Pt]) -> (f64, f64, f64) {
    let n = hull.len();
    let mut best = (f64::INFINITY, 1.0, 0.0);
    for i in 0..n {
        let (a, b) = (hull[i], hull[(i + 1) % n]);
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        if len == 0.0 {
            continue;
        }
        let (ux, uy) = ((b.0 - a.0) / len, (b.1 - a.1) / len);
        let (mut lo_u, mut hi_u, mut lo_v, mut hi_v) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in hull {
            let u = p.0 * ux + p.1 * uy;
            let v = -p.0 * uy + p.1 * ux;
            lo_u = lo_u.min(u);
            hi_u = hi_u.max(u);
            lo_v = lo_v.min(v);
            hi_v = hi_v.max(v);
        }
        let (du, dv) = (hi_u - lo_u, hi_v - lo_v);
        let area = du * dv;
        if area < best.0 - 1e-9 {
            let aspect = du.max(dv) / du.min(dv).max(1e-9);
            let angle = uy.atan2(ux).to_degrees().rem_euclid(90.0);
            best = (area, aspect, angle);
        }
    }
    best
}

/// Dominant points of a closed polygon: recursive split at the vertex farthest
/// from the chord, kept while that distance exceeds `tol`.
fn dominant_points(poly: &[Pt], tol: f64) -> usize {
    let n = poly.len();
    if n <= 3 {
        return n;
    }
    // Seed with the two mutually farthest vertices.
    let (mut ia, mut ib, mut best) = (0, 0, -1.0);
    for i in 0..n {
        for j in i + 1..n {
            let d = (poly[i].0 - poly[j].0).powi(2) + (poly[i].1 - poly[j].1).powi(2);
            if d > best {
                best = d;
                ia = i;
                ib = j;
            }
        }
    }
    let chain = |from: usize, to: usize| -> Vec<Pt> {
        let mut c = Vec::new();
        let mut k = from;
        loop {
            c.push(poly[k]);
            if k == to {
                break;
            }
            k = (k + 1) % n;
        }
        c
    };
    fn split(c: &[Pt], tol: f64) -> usize {
        if c.len() < 3 {
            return 0;
        }
        let (a, b) = (c[0], c[c.len() - 1]);
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt().max(1e-9);
        let (mut far, mut dmax) = (0, 0.0);
        for (k, p) in c.iter().enumerate().take(c.len() - 1).skip(1) {
            let d = cross(a, b, *p).abs() / len;
            if d > dmax {
                dmax = d;
                far = k;
            }
        }
        if dmax > tol {
            1 + split(&c[..=far], tol) + split(&c[far..], tol)
        } else {
            0
        }
    }
    2 + split(&chain(ia, ib), tol) + split(&chain(ib, ia), tol)
}

/// Geometric descriptors of one component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeFeatures {
    pub hull_area: f64,
    /// Region pixels over pixels inside the convex hull of pixel centers.
    pub solidity: f64,
    /// 4πA/P² of the hull.
    pub circularity: f64,
    /// Hull area over its minimum-area rectangle.
    pub rect_fill: f64,
    pub aspect: f64,
    pub orientation_deg: f64,
    pub corners: usize,
    /// Ink area over hull area.
    pub ink_ratio: f64,
    /// Radius of the disc with the hull's area.
    pub equivalent_radius: f64,
}

/// Corner tolerance as a fraction of hull perimeter.
pub const CORNER_TOLERANCE: f64 = 0.02;

pub fn shape_features(c: &ComponentMask) -> ShapeFeatures {
    // Hull over pixel corners: the leftmost and rightmost pixel of each row suffice.
    let mut rows: BTreeMap<u32, (u32, u32)> = BTreeMap::new();
    for &(x, y) in &c.pixels {
        let e = rows.entry(y).or_insert((x, x));
        e.0 = e.0.min(x);
        e.1 = e.1.max(x);
    }
    let mut pts = Vec::with_capacity(rows.len() * 4);
    for (&y, &(lo, hi)) in &rows {
        let (y, lo, hi) = (y as f64, lo as f64, hi as f64 + 1.0);
        pts.extend([(lo, y), (lo, y + 1.0), (hi, y), (hi, y + 1.0)]);
    }
    let hull = convex_hull(pts);
    let hull_area = polygon_area(&hull).max(1.0);
    let centers: Vec<Pt> = rows
        .iter()
        .flat_map(|(&y, &(lo, hi))| [(lo as f64 + 0.5, y as f64 + 0.5), (hi as f64 + 0.5, y as f64 + 0.5)])
        .collect();
    let digital_hull = digital_hull_area(&convex_hull(centers), &c.bbox);
    let per = polygon_perimeter(&hull).max(1e-9);
    let (rect_area, aspect, orientation_deg) = min_area_rect(&hull);
    ShapeFeatures {
        hull_area,
        solidity: c.region_area as f64 / digital_hull.max(1) as f64,
        circularity: 4.0 * PI * hull_area / (per * per),
        rect_fill: hull_area / rect_area.max(1e-9),
        aspect,
        orientation_deg,
        corners: dominant_points(&hull, CORNER_TOLERANCE * per),
        ink_ratio: c.area as f64 / hull_area,
        equivalent_radius: (hull_area / PI).sqrt(),
    }
}

/// Number of pixels whose centers fall inside (or on) a convex polygon given
/// counterclockwise in pixel-center coordinates.
fn digital_hull_area(hull: &[Pt], bbox: &BBox) -> u64 {
    if hull.len() < 3 {
        return (bbox.width() as u64) * (bbox.height() as u64);
    }
    let mut n = 0;
    for y in bbox.y0..bbox.y1 {
        for x in bbox.x0..bbox.x1 {
            let p = (x as f64 + 0.5, y as f64 + 0.5);
            let inside = (0..hull.len()).all(|i| cross(hull[i], hull[(i + 1) % hull.len()], p) >= -1e-9);
            if inside {
                n += 1;
            }
        }
    }
    n
}

const STAR_SOLIDITY: f64 = 0.85;
const QUAD_RECT_FILL: f64 = 0.80;
const QUAD_MAX_CIRCULARITY: f64 = 0.88;
const TRIANGLE_CIRCULARITY: f64 = 0.86;
const RECTANGLE_ASPECT: f64 = 1.45;
/// Circle/hexagon split; small shapes get rounded by sampling, so below
/// `SMALL_RADIUS` the bar for "circle" is lower.
const CIRCLE_CIRCULARITY: f64 = 0.965;
const SMALL_CIRCLE_CIRCULARITY: f64 = 0.93;
const SMALL_RADIUS: f64 = 8.0;
/// Components smaller than this are too small to classify reliably.
const MIN_CLASSIFIABLE_AREA: u64 = 12;

/// Maps a margin past a decision threshold onto a confidence in `[0.5, 1]`.
fn margin_conf(margin: f64, scale: f64) -> f64 {
    0.5 + 0.5 * (margin / scale).clamp(0.0, 1.0)
}

/// Decides the kind from contour descriptors, with a confidence score.
pub fn classify_features(f: &ShapeFeatures) -> (ShapeKind, f64) {
    if f.solidity < STAR_SOLIDITY {
        return (ShapeKind::Star, margin_conf(STAR_SOLIDITY - f.solidity, 0.1));
    }
    if f.rect_fill >= QUAD_RECT_FILL && f.circularity < QUAD_MAX_CIRCULARITY {
        let mut conf = margin_conf(f.rect_fill - QUAD_RECT_FILL, 0.06)
            .min(margin_conf(QUAD_MAX_CIRCULARITY - f.circularity, 0.05));
        if f.corners > 6 {
            conf = conf.min(0.6);
        }
        if f.aspect >= RECTANGLE_ASPECT {
            return (
                ShapeKind::Rectangle,
                conf.min(margin_conf(f.aspect - RECTANGLE_ASPECT, 0.3)),
            );
        }
        let tilt = (f.orientation_deg - 45.0).abs(); // 0 for a diamond, 45 for a square
        let conf = conf.min(margin_conf((tilt - 22.5).abs(), 15.0));
        return if tilt < 22.5 {
            (ShapeKind::Diamond, conf)
        } else {
            (ShapeKind::Square, conf)
        };
    }
    if f.circularity < TRIANGLE_CIRCULARITY {
        return (
            ShapeKind::Triangle,
            margin_conf(TRIANGLE_CIRCULARITY - f.circularity, 0.08),
        );
    }
    let bar = if f.equivalent_radius < SMALL_RADIUS {
        SMALL_CIRCLE_CIRCULARITY
    } else {
        CIRCLE_CIRCULARITY
    };
    let conf = margin_conf((f.circularity - bar).abs(), 0.02);
    if f.circularity >= bar {
        (ShapeKind::Circle, conf)
    } else {
        (ShapeKind::Hexagon, conf)
    }
}

/// Ink covering at least this share of the hull counts as filled.
pub const FILL_RATIO: f64 = 0.5;

/// Detects one shape per ink component. Never fails; doubtful components get
/// a confidence below 0.5.
pub fn detect_shapes(img: &RasterImage) -> Vec<DetectedShape> {
    label_components(img)
        .iter()
        .map(|c| {
            let f = shape_features(c);
            let (kind, mut confidence) = classify_features(&f);
            if c.area < MIN_CLASSIFIABLE_AREA {
                confidence = confidence.min(0.4);
            }
            DetectedShape {
                kind,
                filled: f.ink_ratio >= FILL_RATIO && c.hole_count == 0,
                bbox: c.bbox,
                confidence,
            }
        })
        .collect()
}

/// Count per kind; kinds without detections map to zero.
pub fn count_by_kind(shapes: &[DetectedShape]) -> BTreeMap<ShapeKind, usize> {
    let mut m = empty_counts();
    for s in shapes {
        *m.get_mut(&s.kind).unwrap() += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Primitive, Scene};
    use crate::raster::rasterize;

    fn one(kind: ShapeKind, size: f64, rot: f64, filled: bool) -> RasterImage {
        rasterize(&Scene::new(64, 64).with(Primitive {
            kind,
            center: (0.5, 0.5),
            size,
            rotation_deg: rot,
            filled,
        }))
        .unwrap()
    }

    fn shape(kind: ShapeKind, filled: bool) -> DetectedShape {
        DetectedShape {
            kind,
            filled,
            bbox: BBox {
                x0: 0,
                y0: 0,
                x1: 2,
                y1: 2,
            },
            confidence: 1.0,
        }
    }

    #[test]
    fn blank_panel_has_no_shapes() {
        assert!(detect_shapes(&RasterImage::blank(64, 64)).is_empty());
    }

    #[test]
    fn two_filled_circles() {
        let img = rasterize(
            &Scene::new(64, 64)
                .with(Primitive {
                    kind: ShapeKind::Circle,
                    center: (0.27, 0.5),
                    size: 0.18,
                    rotation_deg: 0.0,
                    filled: true,
                })
                .with(Primitive {
                    kind: ShapeKind::Circle,
                    center: (0.73, 0.5),
                    size: 0.18,
                    rotation_deg: 0.0,
                    filled: true,
                }),
        )
        .unwrap();
        let shapes = detect_shapes(&img);
        assert_eq!(shapes.len(), 2);
        assert!(shapes.iter().all(|s| s.kind == ShapeKind::Circle && s.filled));
    }

    #[test]
    fn every_kind_recognized_when_large() {
        for kind in ShapeKind::ALL {
            for filled in [true, false] {
                let shapes = detect_shapes(&one(kind, 0.38, 0.0, filled));
                assert_eq!(shapes.len(), 1);
                assert_eq!(shapes[0].kind, kind, "filled={filled} {:?}", shapes[0]);
                assert_eq!(shapes[0].filled, filled, "{kind}");
                assert!(shapes[0].confidence >= 0.5);
            }
        }
    }

    #[test]
    fn outline_has_one_hole() {
        let c = label_components(&one(ShapeKind::Hexagon, 0.35, 0.0, false));
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].hole_count, 1);
        assert!(c[0].region_area > c[0].area);
        let c = label_components(&one(ShapeKind::Hexagon, 0.35, 0.0, true));
        assert_eq!(c[0].hole_count, 0);
        assert_eq!(c[0].region_area, c[0].area);
    }

    #[test]
    fn labels_are_contiguous() {
        let mut s = Scene::new(64, 64);
        for (i, x) in [0.15, 0.5, 0.85].iter().enumerate() {
            s.primitives.push(Primitive {
                kind: ShapeKind::Square,
                center: (*x, 0.2 + 0.3 * i as f64),
                size: 0.1,
                rotation_deg: 0.0,
                filled: true,
            });
        }
        let c = label_components(&rasterize(&s).unwrap());
        assert_eq!(c.iter().map(|c| c.label).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn counting_examples() {
        let m = count_by_kind(&[shape(ShapeKind::Triangle, true), shape(ShapeKind::Triangle, false)]);
        assert_eq!(m[&ShapeKind::Triangle], 2);
        assert_eq!(m.values().sum::<usize>(), 2);
        let m = count_by_kind(&[]);
        assert_eq!(m.len(), 7);
        assert!(m.values().all(|&v| v == 0));
        let stars: Vec<_> = (0..4).map(|_| shape(ShapeKind::Star, true)).collect();
        assert_eq!(count_by_kind(&stars)[&ShapeKind::Star], 4);
    }

    #[test]
    fn bbox_area_scales_quadratically() {
        for kind in [ShapeKind::Circle, ShapeKind::Square, ShapeKind::Triangle] {
            let a = detect_shapes(&one(kind, 0.2, 0.0, true))[0].bbox.area() as f64;
            let b = detect_shapes(&one(kind, 0.4, 0.0, true))[0].bbox.area() as f64;
            let ratio = b / a;
            assert!((ratio / 4.0 - 1.0).abs() <= 0.1, "{kind}: {ratio}");
        }
    }

    #[test]
    fn mid_gray_is_not_ink() {
        let img = RasterImage::new(32, 32, vec![128; 1024]).unwrap();
        assert!(detect_shapes(&img).is_empty());
    }
}
