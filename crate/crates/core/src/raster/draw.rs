//! Scene rasterization by signed distance at pixel centers.

use crate::error::{Error, Result};
use crate::model::{rotate_offset, Primitive, RasterImage, Scene, ShapeKind, INK};

/// Inner-to-outer radius ratio of the five-pointed star.
pub const STAR_INNER_RATIO: f64 = 0.5;
/// Width-to-height ratio of the rectangle primitive.
pub const RECTANGLE_ASPECT: f64 = 2.0;
/// Vertex coordinates are snapped to this fraction of a pixel.
const VERTEX_GRID: f64 = 8.0;

/// Stroke width of an unfilled primitive with circumradius `r` px.
pub fn stroke_width(r: f64) -> f64 {
    (0.1 * r).max(1.6)
}

/// Polygon vertices in pixel coordinates, counterclockwise on screen.
/// Returns `None` for circles.
pub fn vertices(p: &Primitive, width: u32, height: u32) -> Option<Vec<(f64, f64)>> {
    let (cx, cy) = p.center_px(width, height);
    let r = p.radius_px(width, height);
    let ring = |n: usize, start_deg: f64, radii: &[f64]| -> Vec<(f64, f64)> {
        (0..n)
            .map(|k| {
                let rad = radii[k % radii.len()];
                let a = start_deg + k as f64 * 360.0 / n as f64;
                rotate_offset(rad, 0.0, a)
            })
            .collect()
    };
    let local = match p.kind {
        ShapeKind::Circle => return None,
        ShapeKind::Triangle => ring(3, 90.0, &[r]),
        ShapeKind::Square => ring(4, 45.0, &[r]),
        ShapeKind::Diamond => ring(4, 90.0, &[r]),
        ShapeKind::Hexagon => ring(6, 0.0, &[r]),
        ShapeKind::Star => ring(10, 90.0, &[r, r * STAR_INNER_RATIO]),
        ShapeKind::Rectangle => {
            let alpha = (1.0 / RECTANGLE_ASPECT).atan().to_degrees();
            [alpha, 180.0 - alpha, 180.0 + alpha, 360.0 - alpha]
                .iter()
                .map(|&a| rotate_offset(r, 0.0, a))
                .collect()
        }
    };
    Some(
        local
            .into_iter()
            .map(|(dx, dy)| {
                let (x, y) = rotate_offset(dx, dy, p.rotation_deg);
                (snap(cx + x), snap(cy + y))
            })
            .collect(),
    )
}

fn snap(v: f64) -> f64 {
    // f64::round rounds half away from zero.
    (v * VERTEX_GRID).round() / VERTEX_GRID
}

fn segment_distance(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (px - a.0, py - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 {
        ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (dx, dy) = (wx - t * vx, wy - t * vy);
    (dx * dx + dy * dy).sqrt()
}

fn inside_polygon(px: f64, py: f64, poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Signed distance (negative inside) from a point to the primitive outline.
fn signed_distance(px: f64, py: f64, center: (f64, f64), r: f64, poly: Option<&[(f64, f64)]>) -> f64 {
    match poly {
        None => ((px - center.0).powi(2) + (py - center.1).powi(2)).sqrt() - r,
        Some(poly) => {
            let d = (0..poly.len())
                .map(|i| segment_distance(px, py, poly[i], poly[(i + 1) % poly.len()]))
                .fold(f64::INFINITY, f64::min);
            if inside_polygon(px, py, poly) {
                -d
            } else {
                d
            }
        }
    }
}

/// Renders a scene into a raster. Identical scenes give identical pixels.
pub fn rasterize(scene: &Scene) -> Result<RasterImage> {
    scene.validate()?;
    let (w, h) = (scene.width, scene.height);
    let mut img = RasterImage::blank(w, h);
    for p in &scene.primitives {
        draw_primitive(&mut img, p)?;
    }
    Ok(img)
}

fn draw_primitive(img: &mut RasterImage, p: &Primitive) -> Result<()> {
    let (w, h) = (img.width(), img.height());
    let center = p.center_px(w, h);
    let r = p.radius_px(w, h);
    let poly = vertices(p, w, h);
    let stroke = stroke_width(r);
    let x0 = (center.0 - r - 1.0).floor().max(0.0) as u32;
    let y0 = (center.1 - r - 1.0).floor().max(0.0) as u32;
    let x1 = ((center.0 + r + 1.0).ceil() as u32).min(w);
    let y1 = ((center.1 + r + 1.0).ceil() as u32).min(h);
    if x0 >= x1 || y0 >= y1 {
        return Err(Error::Raster(format!("{} lies outside the panel", p.kind)));
    }
    let stride = w as usize;
    let pixels = img.pixels_mut();
    for y in y0..y1 {
        for x in x0..x1 {
            let sd = signed_distance(x as f64 + 0.5, y as f64 + 0.5, center, r, poly.as_deref());
            let ink = if p.filled { sd <= 0.0 } else { sd <= 0.0 && sd > -stroke };
            if ink {
                pixels[y as usize * stride + x as usize] = INK;
            }
        }
    }
    Ok(())
}
