use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use drsolve::generator::min_size;
use drsolve::model::{Primitive, RasterImage, Scene, ShapeKind};
use drsolve::perception::{count_by_kind, detect_shapes};
use drsolve::raster::rasterize;

const KINDS: [ShapeKind; 7] = [
    ShapeKind::Circle,
    ShapeKind::Triangle,
    ShapeKind::Square,
    ShapeKind::Rectangle,
    ShapeKind::Diamond,
    ShapeKind::Hexagon,
    ShapeKind::Star,
];

fn quad(kind: ShapeKind) -> bool {
    matches!(kind, ShapeKind::Square | ShapeKind::Rectangle | ShapeKind::Diamond)
}

/// 1-3 separated primitives; quads stay axis-aligned since a turned square is a diamond.
fn random_scene(rng: &mut ChaCha8Rng) -> Scene {
    loop {
        let mut scene = Scene::new(64, 64);
        let n = rng.gen_range(1..=3);
        for _ in 0..n {
            let kind = *KINDS.choose(rng).unwrap();
            let size = rng.gen_range(min_size(kind)..0.2);
            scene.primitives.push(Primitive {
                kind,
                center: (rng.gen_range(0.15..0.85), rng.gen_range(0.15..0.85)),
                size,
                rotation_deg: if quad(kind) { 0.0 } else { rng.gen_range(0.0..360.0) },
                filled: rng.gen_bool(0.5),
            });
        }
        if scene.validate().is_ok() {
            return scene;
        }
    }
}

/// Pairs each detection with the primitive whose center is nearest its bbox center.
fn nearest(scene: &Scene, cx: f64, cy: f64) -> &Primitive {
    scene
        .primitives
        .iter()
        .min_by(|a, b| {
            let d = |p: &Primitive| {
                let (x, y) = p.center_px(64, 64);
                (x - cx).powi(2) + (y - cy).powi(2)
            };
            d(a).partial_cmp(&d(b)).unwrap()
        })
        .unwrap()
}

#[test]
fn thousand_panel_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut shapes, mut kind_ok, mut fill_ok) = (0, 0, 0);
    for _ in 0..1000 {
        let scene = random_scene(&mut rng);
        let det = detect_shapes(&rasterize(&scene).unwrap());
        assert_eq!(det.len(), scene.primitives.len(), "component recall/precision");
        for d in &det {
            let cx = (d.bbox.x0 + d.bbox.x1 + 1) as f64 / 2.0;
            let cy = (d.bbox.y0 + d.bbox.y1 + 1) as f64 / 2.0;
            let p = nearest(&scene, cx, cy);
            shapes += 1;
            kind_ok += (d.kind == p.kind) as usize;
            fill_ok += (d.filled == p.filled) as usize;
        }
    }
    let acc = kind_ok as f64 / shapes as f64;
    assert!(acc >= 0.95, "kind accuracy {acc:.4} over {shapes} shapes");
    assert_eq!(fill_ok, shapes, "fill must be exact");
}

#[test]
fn eight_filled_circles_count_eight() {
    let mut scene = Scene::new(64, 64);
    for i in 0..8 {
        let (gx, gy) = ((i % 4) as f64, (i / 4) as f64);
        scene.primitives.push(Primitive {
            kind: ShapeKind::Circle,
            center: ((gx + 0.5) / 4.0, (gy + 0.5 + 1.0) / 4.0),
            size: 0.1,
            rotation_deg: 0.0,
            filled: true,
        });
    }
    let det = detect_shapes(&rasterize(&scene).unwrap());
    assert_eq!(count_by_kind(&det)[&ShapeKind::Circle], 8);
    assert!(det.iter().all(|d| d.filled));
}

#[test]
fn blank_panel_has_no_shapes() {
    assert!(detect_shapes(&RasterImage::blank(64, 64)).is_empty());
}

#[test]
fn bbox_area_scales_quadratically() {
    for kind in KINDS {
        let area = |size: f64| {
            let scene = Scene::new(96, 96).with(Primitive {
                kind,
                center: (0.5, 0.5),
                size,
                rotation_deg: 0.0,
                filled: true,
            });
            detect_shapes(&rasterize(&scene).unwrap())[0].bbox.area() as f64
        };
        let (small, big) = (area(0.15), area(0.30));
        let ratio = big / small;
        assert!((ratio / 4.0 - 1.0).abs() <= 0.10, "{kind}: ratio {ratio:.3}");
    }
}

#[test]
fn detection_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let img = rasterize(&random_scene(&mut rng)).unwrap();
        assert_eq!(detect_shapes(&img), detect_shapes(&img));
    }
}
