//! Seeded generator of labeled 4x1 problems for all four categories.
//!
//! Every problem is built from vector scenes, so the ground truth of each
//! pipeline stage (rotation, counts, sizes, answer) is known exactly.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    angular_distance, wrap_degrees, Category, PanelSet, Primitive, ProblemSpace, RasterImage, Scene, ShapeKind,
    PANEL_COUNT,
};
use crate::raster::{rasterize, rotate_image, similarity, BinaryMask};

/// Distractors more similar than this to the answer panel are resampled.
pub const NEAR_DUPLICATE: f64 = 0.98;
/// RT base scenes must stay below this self-similarity away from 0°.
const RT_MAX_SELF_SIMILARITY: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub counts: BTreeMap<Category, usize>,
    pub panel_size: u32,
    /// Allowed per-step rotations δ for RT problems, degrees.
    pub rotation_steps: Vec<f64>,
    /// Upper bound on `a + 3d` for CT progressions.
    pub max_count: usize,
    /// Four descending circumradius fractions for SS problems.
    pub scale_ladder: [f64; 4],
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            seed: 42,
            counts: Category::ALL.iter().map(|&c| (c, 50)).collect(),
            panel_size: 64,
            rotation_steps: vec![45.0, 90.0, 135.0],
            max_count: 12,
            scale_ladder: [0.40, 0.30, 0.21, 0.12],
        }
    }
}

impl GeneratorSpec {
    pub fn with_counts(seed: u64, rt: usize, ct: usize, ss: usize, ot: usize) -> Self {
        GeneratorSpec {
            seed,
            counts: [
                (Category::RT, rt),
                (Category::CT, ct),
                (Category::SS, ss),
                (Category::OT, ot),
            ]
            .into_iter()
            .collect(),
            ..Default::default()
        }
    }

    /// Splits `total` across categories by largest remainder so the counts sum exactly.
    pub fn with_proportions(seed: u64, total: usize, proportions: [f64; 4]) -> Result<Self> {
        let sum: f64 = proportions.iter().sum();
        if !(sum > 0.0) || proportions.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::Config(
                "proportions must be non-negative with a positive sum".into(),
            ));
        }
        let exact: Vec<f64> = proportions.iter().map(|p| p / sum * total as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| {
            let (fa, fb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        let missing = total - counts.iter().sum::<usize>();
        for &i in order.iter().take(missing) {
            counts[i] += 1;
        }
        Ok(GeneratorSpec::with_counts(
            seed, counts[0], counts[1], counts[2], counts[3],
        ))
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.panel_size < 32 {
            return Err(Error::Config("panel size must be at least 32".into()));
        }
        if self.rotation_steps.is_empty()
            || self
                .rotation_steps
                .iter()
                .any(|&d| !(d > 0.0 && d < 360.0) || angular_distance(3.0 * d, 0.0) < 1.0)
        {
            return Err(Error::Config("rotation steps must lie in (0,360) with 3δ ≢ 0".into()));
        }
        if self.max_count < 4 || self.max_count > 12 {
            return Err(Error::Config("max_count must be within 4..=12".into()));
        }
        let l = self.scale_ladder;
        if !(l[0] > l[1] && l[1] > l[2] && l[2] > l[3] && l[3] > 0.0 && l[0] <= 0.45) {
            return Err(Error::Config(
                "scale ladder must be strictly descending within (0, 0.45]".into(),
            ));
        }
        Ok(())
    }

    /// Deterministic RNG for problem `ordinal`, independent of generation order.
    pub fn rng_for(&self, ordinal: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(ordinal);
        rng
    }
}

/// Generates the whole corpus: categories in RT, CT, SS, OT order.
pub fn generate_corpus(spec: &GeneratorSpec) -> Result<Vec<ProblemSpace>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.total());
    let mut ordinal = 0u64;
    for cat in Category::ALL {
        for _ in 0..spec.counts.get(&cat).copied().unwrap_or(0) {
            let mut rng = spec.rng_for(ordinal);
            out.push(generate_problem(spec, cat, &mut rng)?);
            ordinal += 1;
        }
    }
    Ok(out)
}

pub fn generate_problem(spec: &GeneratorSpec, category: Category, rng: &mut impl Rng) -> Result<ProblemSpace> {
    match category {
        Category::RT => {
            let delta = *spec.rotation_steps.choose(rng).unwrap();
            rotation_problem(spec, delta, rng)
        }
        Category::CT => {
            let pairs = count_pairs(spec.max_count);
            let (a, d) = *pairs.choose(rng).unwrap();
            counting_problem(spec, a, d, rng)
        }
        Category::SS => scaling_problem(spec, rng),
        Category::OT => {
            if rng.gen_bool(0.5) {
                translation_problem(spec, rng)
            } else {
                alternation_problem(spec, rng)
            }
        }
    }
}

/// All `(a, d)` with `a, d ≥ 1` and `a + 3d ≤ max_count`.
pub fn count_pairs(max_count: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for d in 1..=max_count {
        for a in 1..=max_count {
            if a + 3 * d <= max_count {
                v.push((a, d));
            }
        }
    }
    v
}

fn empty(spec: &GeneratorSpec) -> Scene {
    Scene::new(spec.panel_size, spec.panel_size)
}

/// Places the answer uniformly among the four options and assembles the problem.
fn assemble(
    question: [Scene; 3],
    answer: Scene,
    distractors: Vec<Scene>,
    category: Category,
    rng: &mut impl Rng,
) -> Result<ProblemSpace> {
    debug_assert_eq!(distractors.len(), 3);
    let slot = rng.gen_range(0..4);
    let mut options = distractors;
    options.insert(slot, answer);
    let scenes: Vec<Scene> = question.into_iter().chain(options).collect();
    let panels = scenes.iter().map(rasterize).collect::<Result<Vec<_>>>()?;
    ProblemSpace::new(PanelSet::new(panels)?, Some(scenes), 4 + slot as u8, Some(category))
}

/// Picks `n` candidates in random order whose rasters are not near-duplicates
/// of the answer or of each other.
fn pick_distractors(answer: &Scene, mut candidates: Vec<Scene>, n: usize, rng: &mut impl Rng) -> Result<Vec<Scene>> {
    candidates.shuffle(rng);
    let answer_img = rasterize(answer)?;
    let mut chosen: Vec<(Scene, RasterImage)> = Vec::new();
    for c in candidates {
        let img = rasterize(&c)?;
        if similarity(&img, &answer_img)?.value() > NEAR_DUPLICATE {
            continue;
        }
        if chosen.iter().any(|(_, o)| o == &img) {
            continue;
        }
        chosen.push((c, img));
        if chosen.len() == n {
            return Ok(chosen.into_iter().map(|(s, _)| s).collect());
        }
    }
    Err(Error::Generation(format!(
        "only {} distinct distractors available",
        chosen.len()
    )))
}

/// Smallest size at which the detector tells this kind apart reliably.
pub fn min_size(kind: ShapeKind) -> f64 {
    match kind {
        ShapeKind::Hexagon | ShapeKind::Diamond => 0.15,
        ShapeKind::Star => 0.12,
        _ => 0.1,
    }
}

fn random_kind(rng: &mut impl Rng, kinds: &[ShapeKind]) -> ShapeKind {
    *kinds.choose(rng).unwrap()
}

/// Rotation that keeps the kind unambiguous for the detector (quads stay axis-aligned).
fn kind_rotation(kind: ShapeKind, rng: &mut impl Rng) -> f64 {
    match kind {
        ShapeKind::Square | ShapeKind::Rectangle | ShapeKind::Diamond => 0.0,
        ShapeKind::Circle => 0.0,
        _ => rng.gen_range(0..360) as f64,
    }
}

/// Base scene for RT problems: two or three primitives inside the inscribed
/// disc, rotationally asymmetric.
fn rotation_base(spec: &GeneratorSpec, rng: &mut impl Rng) -> Result<Scene> {
    // squares and diamonds turn into each other under rotation
    let kinds = [
        ShapeKind::Triangle,
        ShapeKind::Circle,
        ShapeKind::Star,
        ShapeKind::Hexagon,
        ShapeKind::Rectangle,
    ];
    let px = spec.panel_size as f64;
    let limit = px / 2.0 - crate::model::BORDER_MARGIN_PX - 1.0;
    for _ in 0..200 {
        let n = rng.gen_range(2..=3);
        let mut scene = empty(spec);
        let mut tries = 0;
        while scene.primitives.len() < n && tries < 100 {
            tries += 1;
            let kind = random_kind(rng, &kinds);
            let size = rng.gen_range(min_size(kind).max(0.11)..0.19);
            let r = size * px;
            let dist = rng.gen_range(0.0..(limit - r).max(0.1));
            let ang: f64 = rng.gen_range(0.0..360.0);
            let (dx, dy) = crate::model::rotate_offset(dist, 0.0, ang);
            let p = Primitive {
                kind,
                center: (0.5 + dx / px, 0.5 + dy / px),
                size,
                rotation_deg: rng.gen_range(0..360) as f64,
                filled: rng.gen_bool(0.5),
            };
            scene.primitives.push(p);
            if scene.validate().is_err() {
                scene.primitives.pop();
            }
        }
        if scene.primitives.len() < n {
            continue;
        }
        if rotationally_asymmetric(&scene)? {
            return Ok(scene);
        }
    }
    Err(Error::Generation("no rotationally asymmetric base scene found".into()))
}

fn rotationally_asymmetric(scene: &Scene) -> Result<bool> {
    let img = rasterize(scene)?;
    let base = BinaryMask::from_raster(&img);
    for step in 1..36 {
        let rotated = BinaryMask::from_raster(&rotate_image(&img, step as f64 * 10.0));
        if base.ncc(&rotated)?.value() > RT_MAX_SELF_SIMILARITY {
            return Ok(false);
        }
    }
    Ok(true)
}

/// RT: question rotations {0, δ, 2δ}, answer 3δ, distractors on the 45° grid.
pub fn rotation_problem(spec: &GeneratorSpec, delta: f64, rng: &mut impl Rng) -> Result<ProblemSpace> {
    let base = rotation_base(spec, rng)?;
    let answer_rot = wrap_degrees(3.0 * delta);
    let mut grid: Vec<f64> = (0..8).map(|k| k as f64 * 45.0).collect();
    for k in 0..3 {
        grid.push(wrap_degrees(k as f64 * delta));
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    let candidates: Vec<Scene> = grid
        .into_iter()
        .filter(|&t| angular_distance(t, answer_rot) >= 1.0)
        .map(|t| base.rotated(t))
        .collect();
    let answer = base.rotated(answer_rot);
    let distractors = pick_distractors(&answer, candidates, 3, rng)?;
    let q = [base.rotated(0.0), base.rotated(delta), base.rotated(2.0 * delta)];
    assemble(q, answer, distractors, Category::RT, rng)
}

/// CT grid is 4x4 cells; at most this many shapes fit in one panel.
pub const COUNT_GRID: usize = 4;
const COUNT_SIZE: f64 = 0.1;

fn count_scene(spec: &GeneratorSpec, n: usize, kind: ShapeKind, filled: bool, rng: &mut impl Rng) -> Result<Scene> {
    let cells = COUNT_GRID * COUNT_GRID;
    if n > cells {
        return Err(Error::Generation(format!(
            "{n} shapes do not fit a {COUNT_GRID}x{COUNT_GRID} grid"
        )));
    }
    let px = spec.panel_size as f64;
    let cell = px / COUNT_GRID as f64;
    let r = COUNT_SIZE * px;
    let jitter = ((cell - 2.0 * r - crate::model::MIN_SEPARATION_PX) / 2.0 - 0.25).clamp(0.0, 2.0);
    let mut idx: Vec<usize> = (0..cells).collect();
    idx.shuffle(rng);
    let mut scene = empty(spec);
    for &i in idx.iter().take(n) {
        let (gx, gy) = ((i % COUNT_GRID) as f64, (i / COUNT_GRID) as f64);
        let jx = if jitter > 0.0 {
            rng.gen_range(-jitter..=jitter)
        } else {
            0.0
        };
        let jy = if jitter > 0.0 {
            rng.gen_range(-jitter..=jitter)
        } else {
            0.0
        };
        scene.primitives.push(Primitive {
            kind,
            center: (((gx + 0.5) * cell + jx) / px, ((gy + 0.5) * cell + jy) / px),
            size: COUNT_SIZE,
            rotation_deg: 0.0,
            filled,
        });
    }
    scene
        .validate()
        .map_err(|e| Error::Generation(format!("count layout infeasible: {e}")))?;
    Ok(scene)
}

/// CT: counts {a, a+d, a+2d}, answer a+3d.
pub fn counting_problem(spec: &GeneratorSpec, a: usize, d: usize, rng: &mut impl Rng) -> Result<ProblemSpace> {
    if a < 1 || d < 1 || a + 3 * d > spec.max_count {
        return Err(Error::Generation(format!(
            "progression a={a}, d={d} violates a,d ≥ 1 and a+3d ≤ {}",
            spec.max_count
        )));
    }
    let kind = random_kind(rng, &[ShapeKind::Circle, ShapeKind::Square]);
    let filled = rng.gen_bool(0.7);
    let answer_n = a + 3 * d;
    let mut counts: Vec<usize> = vec![
        a,
        a + d,
        a + 2 * d,
        answer_n + d,
        answer_n + 1,
        answer_n.saturating_sub(1),
    ];
    counts.retain(|&c| c >= 1 && c <= COUNT_GRID * COUNT_GRID && c != answer_n);
    counts.sort_unstable();
    counts.dedup();
    let answer = count_scene(spec, answer_n, kind, filled, rng)?;
    let candidates = counts
        .iter()
        .map(|&c| count_scene(spec, c, kind, filled, rng))
        .collect::<Result<Vec<_>>>()?;
    let distractors = pick_distractors(&answer, candidates, 3, rng)?;
    let q = [
        count_scene(spec, a, kind, filled, rng)?,
        count_scene(spec, a + d, kind, filled, rng)?,
        count_scene(spec, a + 2 * d, kind, filled, rng)?,
    ];
    assemble(q, answer, distractors, Category::CT, rng)
}

fn centered(spec: &GeneratorSpec, kind: ShapeKind, size: f64, rot: f64, filled: bool) -> Scene {
    empty(spec).with(Primitive {
        kind,
        center: (0.5, 0.5),
        size,
        rotation_deg: rot,
        filled,
    })
}

/// SS: one centered shape shrinking down the ladder; the answer is the fourth rung.
pub fn scaling_problem(spec: &GeneratorSpec, rng: &mut impl Rng) -> Result<ProblemSpace> {
    let kind = random_kind(
        rng,
        &[
            ShapeKind::Circle,
            ShapeKind::Triangle,
            ShapeKind::Square,
            ShapeKind::Star,
        ],
    );
    let rot = kind_rotation(kind, rng);
    let filled = rng.gen_bool(0.5);
    let l = spec.scale_ladder;
    let rung = |i: usize| centered(spec, kind, l[i], rot, filled);
    let candidates = vec![rung(0), rung(1), rung(2), empty(spec)];
    let answer = rung(3);
    let distractors = pick_distractors(&answer, candidates, 3, rng)?;
    assemble([rung(0), rung(1), rung(2)], answer, distractors, Category::SS, rng)
}

const OT_KINDS: [ShapeKind; 5] = [
    ShapeKind::Circle,
    ShapeKind::Triangle,
    ShapeKind::Square,
    ShapeKind::Star,
    ShapeKind::Hexagon,
];

/// OT: one shape translated horizontally by a constant step.
pub fn translation_problem(spec: &GeneratorSpec, rng: &mut impl Rng) -> Result<ProblemSpace> {
    // hexagons are only reliable at sizes too wide for four positions
    let kinds: Vec<ShapeKind> = OT_KINDS.iter().copied().filter(|&k| k != ShapeKind::Hexagon).collect();
    let kind = random_kind(rng, &kinds);
    let rot = kind_rotation(kind, rng);
    let filled = rng.gen_bool(0.5);
    let lo = min_size(kind);
    let size = rng.gen_range(lo..lo + 0.03);
    let step = *[0.18, 0.2].choose(rng).unwrap();
    let leftward = rng.gen_bool(0.5);
    let y = rng.gen_range(0.3..0.7);
    let margin = size + 0.03;
    let span = 3.0 * step;
    let x0 = rng.gen_range(margin..(1.0 - margin - span));
    let xs: Vec<f64> = (0..4)
        .map(|k| {
            let x = x0 + k as f64 * step;
            if leftward {
                1.0 - x
            } else {
                x
            }
        })
        .collect();
    let at = |x: f64, filled: bool| {
        empty(spec).with(Primitive {
            kind,
            center: (x, y),
            size,
            rotation_deg: rot,
            filled,
        })
    };
    let answer = at(xs[3], filled);
    let candidates = vec![
        at(xs[0], filled),
        at(xs[1], filled),
        at(xs[2], filled),
        at(xs[3], !filled),
    ];
    let distractors = pick_distractors(&answer, candidates, 3, rng)?;
    assemble(
        [at(xs[0], filled), at(xs[1], filled), at(xs[2], filled)],
        answer,
        distractors,
        Category::OT,
        rng,
    )
}

/// OT: filled and outline versions of one shape alternate.
pub fn alternation_problem(spec: &GeneratorSpec, rng: &mut impl Rng) -> Result<ProblemSpace> {
    let kind = random_kind(rng, &OT_KINDS);
    let other = random_kind(
        rng,
        &OT_KINDS.iter().copied().filter(|&k| k != kind).collect::<Vec<_>>(),
    );
    let rot = kind_rotation(kind, rng);
    let size = rng.gen_range(0.25..0.38);
    let first_filled = rng.gen_bool(0.5);
    let a = centered(spec, kind, size, rot, first_filled);
    let b = centered(spec, kind, size, rot, !first_filled);
    let candidates = vec![
        a.clone(),
        centered(spec, other, size, 0.0, !first_filled),
        centered(spec, other, size, 0.0, first_filled),
    ];
    let distractors = pick_distractors(&b, candidates, 3, rng)?;
    assemble([a.clone(), b.clone(), a], b, distractors, Category::OT, rng)
}

/// Re-derives the generating rule from the stored scenes and returns how many
/// options satisfy it. Sound problems return 1.
pub fn satisfying_options(p: &ProblemSpace) -> Result<usize> {
    let scenes = p
        .scenes
        .as_ref()
        .ok_or_else(|| Error::Structural("problem has no scenes".into()))?;
    if scenes.len() != PANEL_COUNT {
        return Err(Error::Structural("expected 7 scenes".into()));
    }
    let cat = p
        .true_category
        .ok_or_else(|| Error::Structural("problem has no category".into()))?;
    let q = &scenes[..3];
    let opts = &scenes[3..];
    let n = match cat {
        Category::RT => {
            let rot = |s: &Scene| s.primitives[0].rotation_deg - q[0].primitives[0].rotation_deg;
            let delta = rot(&q[1]);
            let expected = wrap_degrees(3.0 * delta);
            opts.iter()
                .filter(|o| !o.primitives.is_empty() && angular_distance(rot(o), expected) < 1e-6)
                .filter(|o| scenes_close(o, &q[0].rotated(expected)))
                .count()
        }
        Category::CT => {
            let c: Vec<usize> = q.iter().map(|s| s.primitives.len()).collect();
            let expected = 2 * c[2] - c[1];
            opts.iter().filter(|o| o.primitives.len() == expected).count()
        }
        Category::SS => {
            let s3 = q[2].primitives[0].size;
            opts.iter()
                .filter(|o| o.primitives.first().is_some_and(|p| p.size < s3 - 1e-9))
                .count()
        }
        Category::OT => {
            let expected = if scenes_close(&q[0], &q[2]) {
                q[1].clone()
            } else {
                let mut next = q[2].clone();
                for (i, p) in next.primitives.iter_mut().enumerate() {
                    let (a, b) = (q[1].primitives[i].center, q[2].primitives[i].center);
                    p.center = (2.0 * b.0 - a.0, 2.0 * b.1 - a.1);
                }
                next
            };
            opts.iter().filter(|o| scenes_close(o, &expected)).count()
        }
    };
    Ok(n)
}

fn scenes_close(a: &Scene, b: &Scene) -> bool {
    a.primitives.len() == b.primitives.len()
        && a.primitives.iter().zip(&b.primitives).all(|(x, y)| {
            x.kind == y.kind
                && x.filled == y.filled
                && (x.size - y.size).abs() < 1e-9
                && (x.center.0 - y.center.0).abs() < 1e-9
                && (x.center.1 - y.center.1).abs() < 1e-9
                && angular_distance(x.rotation_deg, y.rotation_deg) < 1e-6
        })
}

/// Hand-built problems reconstructing the classic worked examples, used as
/// fixtures for end-to-end checks.
pub mod worked {
    use super::*;

    fn prim(kind: ShapeKind, center: (f64, f64), size: f64, rot: f64, filled: bool) -> Primitive {
        Primitive {
            kind,
            center,
            size,
            rotation_deg: rot,
            filled,
        }
    }

    fn build(scenes: Vec<Scene>, answer_index: u8, cat: Category) -> ProblemSpace {
        let panels = scenes.iter().map(|s| rasterize(s).unwrap()).collect();
        ProblemSpace::new(PanelSet::new(panels).unwrap(), Some(scenes), answer_index, Some(cat)).unwrap()
    }

    /// A filled and an outline triangle rotating by 90° per step.
    /// Rotations {0, 90, 180 | 180, 90, 0, 270}; the answer is option D.
    pub fn rotating_triangles() -> ProblemSpace {
        let base = Scene::new(64, 64)
            .with(prim(ShapeKind::Triangle, (0.34, 0.36), 0.15, 10.0, true))
            .with(prim(ShapeKind::Triangle, (0.62, 0.66), 0.15, 10.0, false));
        let scenes = [0.0, 90.0, 180.0, 180.0, 90.0, 0.0, 270.0]
            .iter()
            .map(|&t| base.rotated(t))
            .collect();
        build(scenes, 7, Category::RT)
    }

    /// Filled circles counting {2, 4, 6 | 6, 8, 4, 10}; the answer is option B.
    pub fn counting_circles() -> ProblemSpace {
        let spec = GeneratorSpec::default();
        let mut rng = spec.rng_for(9_000_001);
        let scenes = [2, 4, 6, 6, 8, 4, 10]
            .iter()
            .map(|&n| count_scene(&spec, n, ShapeKind::Circle, true, &mut rng).unwrap())
            .collect();
        build(scenes, 5, Category::CT)
    }

    /// One filled triangle shrinking {VeryLarge, Large, Small | Nil, Tiny,
    /// VeryLarge, Small}; the answer is option B.
    pub fn shrinking_triangle() -> ProblemSpace {
        let spec = GeneratorSpec::default();
        let l = spec.scale_ladder;
        let tri = |s: f64| centered(&spec, ShapeKind::Triangle, s, 0.0, true);
        let scenes = vec![
            tri(l[0]),
            tri(l[1]),
            tri(l[2]),
            empty(&spec),
            tri(l[3]),
            tri(l[0]),
            tri(l[2]),
        ];
        build(scenes, 5, Category::SS)
    }
}
