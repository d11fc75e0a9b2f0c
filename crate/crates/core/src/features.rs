//! Relational features of a problem: rotation (ρ), counts (χ) and sizes (σ).

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    wrap_degrees, DetectedShape, KnowledgeBase, PanelSet, ProblemSpace, RasterImage, RelationalFeatures, SizeLabel,
};
use crate::perception::{count_by_kind, detect_shapes};
use crate::raster::{rotate_image, BinaryMask, SimilarityScore};

pub const ROTATION_STEPS: usize = 360;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Minimum NCC for a panel to count as a rotation of panel 1.
    pub rotation_threshold: f64,
    /// DBSCAN radius as a fraction of the pooled area range.
    pub eps_fraction: f64,
    /// Lower bound on the radius, as a fraction of the median area, so equal
    /// sizes with pixel jitter still form one cluster.
    pub eps_floor_fraction: f64,
    pub min_pts: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            rotation_threshold: 0.80,
            eps_fraction: 0.15,
            eps_floor_fraction: 0.10,
            min_pts: 1,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.rotation_threshold) {
            return Err(Error::Config("rotation threshold must lie in [-1, 1]".into()));
        }
        if !(self.eps_fraction > 0.0) || self.eps_floor_fraction < 0.0 {
            return Err(Error::Config("DBSCAN radius fractions must be positive".into()));
        }
        if self.min_pts == 0 {
            return Err(Error::Config("min_pts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationSearchResult {
    pub best_theta: f64,
    pub best_score: SimilarityScore,
    pub above_threshold: bool,
}

/// The 360 one-degree rotations of a reference panel; element 0 is the
/// reference itself.
pub fn build_rotation_set(reference: &RasterImage) -> Vec<RasterImage> {
    (0..ROTATION_STEPS).map(|j| rotate_image(reference, j as f64)).collect()
}

/// Rotation orbit of one panel, reusable across queries.
#[derive(Debug, Clone)]
pub struct RotationOrbit {
    images: Vec<RasterImage>,
    masks: Vec<BinaryMask>,
}

impl RotationOrbit {
    pub fn new(reference: &RasterImage) -> Self {
        let images = build_rotation_set(reference);
        let masks = images.iter().map(BinaryMask::from_raster).collect();
        RotationOrbit { images, masks }
    }

    /// NCC of `query` against the reference rotated by 0..359 degrees.
    pub fn scores(&self, query: &RasterImage) -> Result<Vec<SimilarityScore>> {
        let q = BinaryMask::from_raster(query);
        self.masks.iter().map(|m| m.ncc(&q)).collect()
    }

    /// Best NCC over the orbit. One-degree neighbours of an exact match often
    /// binarize identically, so equal scores are separated by grey-level
    /// distance to the query before falling back to the smallest angle.
    pub fn search(&self, query: &RasterImage, threshold: f64) -> Result<RotationSearchResult> {
        let scores = self.scores(query)?;
        let top = scores.iter().map(|s| s.value()).fold(f64::NEG_INFINITY, f64::max);
        let grey_distance = |j: usize| -> u64 {
            self.images[j]
                .pixels()
                .iter()
                .zip(query.pixels())
                .map(|(&a, &b)| (a as i64 - b as i64).unsigned_abs())
                .sum()
        };
        let best = (0..scores.len())
            .filter(|&j| scores[j].value() == top)
            .min_by_key(|&j| (grey_distance(j), j))
            .unwrap_or(0);
        Ok(RotationSearchResult {
            best_theta: best as f64,
            best_score: scores[best],
            above_threshold: top >= threshold,
        })
    }
}

/// Finds the rotation of `reference` that best matches `query`.
pub fn estimate_rotation(reference: &RasterImage, query: &RasterImage, threshold: f64) -> Result<RotationSearchResult> {
    if !reference.same_dims(query) {
        return Err(Error::Structural("rotation search needs panels of equal size".into()));
    }
    RotationOrbit::new(reference).search(query, threshold)
}

/// Cluster id per point; `None` is noise.
pub type Labels = Vec<Option<usize>>;

/// DBSCAN over points of any dimension with Euclidean distance.
///
/// Points are visited in index order, so the numbering of clusters is
/// deterministic. Border points go to the first cluster that reaches them.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Result<Labels> {
    if !(eps > 0.0) || min_pts == 0 {
        return Err(Error::Config("dbscan needs eps > 0 and min_pts >= 1".into()));
    }
    let n = points.len();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let neighbors = |i: usize| -> Vec<usize> { (0..n).filter(|&j| dist(&points[i], &points[j]) <= eps).collect() };
    let mut labels: Labels = vec![None; n];
    let mut visited = vec![false; n];
    let mut next = 0;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let nb = neighbors(i);
        if nb.len() < min_pts {
            continue;
        }
        let c = next;
        next += 1;
        labels[i] = Some(c);
        let mut queue = nb;
        let mut k = 0;
        while k < queue.len() {
            let j = queue[k];
            k += 1;
            if labels[j].is_none() {
                labels[j] = Some(c);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let more = neighbors(j);
            if more.len() >= min_pts {
                queue.extend(more);
            }
        }
    }
    Ok(labels)
}

/// One size group, labels ascending with mean area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeCluster {
    /// Indices into the pooled list of shapes (panel order, then detection order).
    pub members: Vec<usize>,
    pub mean_area: f64,
    pub label: SizeLabel,
}

/// Label for cluster `i` of `n`, spread evenly over Tiny..VeryLarge.
///
/// Four clusters give Tiny, Small, Large, VeryLarge; one gives Normal.
pub fn cluster_label(i: usize, n: usize) -> SizeLabel {
    if n <= 1 {
        return SizeLabel::Normal;
    }
    let top = (SizeLabel::VeryLarge.ordinal() - SizeLabel::Tiny.ordinal()) as f64;
    let pos = (i as f64 * top / (n - 1) as f64).round() as usize;
    SizeLabel::from_ordinal(SizeLabel::Tiny.ordinal() + pos)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    /// Per panel, one label per detected shape.
    pub labels: Vec<Vec<SizeLabel>>,
    pub clusters: Vec<SizeCluster>,
    /// False when every shape was noise.
    pub informative: bool,
}

/// The DBSCAN radius used for a pooled set of areas.
pub fn scaling_eps(areas: &[f64], cfg: &FeatureConfig) -> f64 {
    if areas.is_empty() {
        return 1.0;
    }
    let lo = areas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = areas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sorted = areas.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted[sorted.len() / 2];
    (cfg.eps_fraction * (hi - lo))
        .max(cfg.eps_floor_fraction * median)
        .max(1e-6)
}

/// Groups all shapes of a problem by bounding-box area and labels them.
pub fn extract_scaling(shapes_per_panel: &[Vec<DetectedShape>], eps: f64, min_pts: usize) -> Result<ScalingResult> {
    let areas: Vec<f64> = shapes_per_panel
        .iter()
        .flatten()
        .map(|s| s.bbox.area() as f64)
        .collect();
    let points: Vec<Vec<f64>> = areas.iter().map(|&a| vec![a]).collect();
    let raw = dbscan(&points, eps, min_pts)?;
    let n_raw = raw.iter().flatten().map(|&c| c + 1).max().unwrap_or(0);

    let mut clusters: Vec<SizeCluster> = (0..n_raw)
        .map(|c| {
            let members: Vec<usize> = (0..areas.len()).filter(|&i| raw[i] == Some(c)).collect();
            let mean_area = members.iter().map(|&i| areas[i]).sum::<f64>() / members.len() as f64;
            SizeCluster {
                members,
                mean_area,
                label: SizeLabel::Normal,
            }
        })
        .collect();
    clusters.sort_by(|a, b| a.mean_area.total_cmp(&b.mean_area));
    let n = clusters.len();
    for (i, c) in clusters.iter_mut().enumerate() {
        c.label = cluster_label(i, n);
    }

    let informative = n > 0 || areas.is_empty();
    let label_of = |i: usize| -> SizeLabel {
        if n == 0 {
            return SizeLabel::Normal;
        }
        if let Some(c) = clusters.iter().find(|c| c.members.contains(&i)) {
            return c.label;
        }
        // noise: nearest cluster mean, smaller cluster on ties
        clusters
            .iter()
            .min_by(|a, b| {
                (a.mean_area - areas[i])
                    .abs()
                    .total_cmp(&(b.mean_area - areas[i]).abs())
            })
            .map(|c| c.label)
            .unwrap()
    };
    let mut labels = Vec::with_capacity(shapes_per_panel.len());
    let mut k = 0;
    for panel in shapes_per_panel {
        labels.push((0..panel.len()).map(|j| label_of(k + j)).collect());
        k += panel.len();
    }
    Ok(ScalingResult {
        labels,
        clusters,
        informative,
    })
}

/// Builds the knowledge base of a problem from its seven panels.
pub fn acquire_knowledge(p: &ProblemSpace, cfg: &FeatureConfig) -> Result<KnowledgeBase> {
    knowledge_from_panels(&p.panels, cfg)
}

/// As [`acquire_knowledge`], from the panels alone.
pub fn knowledge_from_panels(panels: &PanelSet, cfg: &FeatureConfig) -> Result<KnowledgeBase> {
    cfg.validate()?;
    let panels = panels.all();
    let shapes: Vec<Vec<DetectedShape>> = panels.iter().map(detect_shapes).collect();
    let rho = rotations(panels, cfg.rotation_threshold)?;

    let areas: Vec<f64> = shapes.iter().flatten().map(|s| s.bbox.area() as f64).collect();
    let scaling = extract_scaling(&shapes, scaling_eps(&areas, cfg), cfg.min_pts)?;

    let per_panel = (0..panels.len())
        .map(|i| {
            let sigma = if shapes[i].is_empty() {
                vec![SizeLabel::Nil]
            } else {
                scaling.labels[i].clone()
            };
            RelationalFeatures {
                rho: rho.as_ref().map(|r| r[i]),
                chi: count_by_kind(&shapes[i]),
                sigma,
            }
        })
        .collect();
    let kinds: BTreeSet<_> = shapes.iter().flatten().map(|s| (s.kind, s.filled)).collect();
    Ok(KnowledgeBase {
        per_panel,
        shapes: kinds,
        sigma_informative: scaling.informative,
    })
}

/// ρ for every panel against panel 1, or `None` when any panel is not a
/// rotation of it.
fn rotations(panels: &[RasterImage], threshold: f64) -> Result<Option<Vec<f64>>> {
    if panels[0].is_blank() {
        return Ok(None);
    }
    let orbit = RotationOrbit::new(&panels[0]);
    let mut out = Vec::with_capacity(panels.len());
    for panel in panels {
        let r = orbit.search(panel, threshold)?;
        if !r.above_threshold {
            return Ok(None);
        }
        out.push(wrap_degrees(r.best_theta));
    }
    Ok(Some(out))
}

/// Debug text record: one line each for shapes, ρ, χ and σ.
pub fn knowledge_record(kb: &KnowledgeBase) -> String {
    let mut s = String::from("shapes: ");
    let shapes: Vec<String> = kb
        .shapes
        .iter()
        .map(|(k, f)| format!("{}({})", k, if *f { "filled" } else { "outline" }))
        .collect();
    s.push_str(&shapes.join(", "));
    s.push('\n');
    let rho: Vec<String> = kb
        .per_panel
        .iter()
        .map(|f| f.rho.map_or("NA".to_string(), |r| format!("{r}")))
        .collect();
    let _ = writeln!(s, "rho: {{{}}}", rho.join(","));
    let chi: Vec<String> = kb
        .per_panel
        .iter()
        .map(|f| {
            let present: Vec<String> = f
                .chi
                .iter()
                .filter(|(_, &n)| n > 0)
                .map(|(k, n)| format!("{k}:{n}"))
                .collect();
            if present.len() > 1 {
                format!("<{}>", present.join(","))
            } else {
                format!("<{}>", f.total_count())
            }
        })
        .collect();
    let _ = writeln!(s, "chi: {{{}}}", chi.join(","));
    let sigma: Vec<String> = kb
        .per_panel
        .iter()
        .map(|f| format!("<{}>", f.sigma_summary()))
        .collect();
    let _ = write!(s, "sigma: {{{}}}", sigma.join(","));
    if !kb.sigma_informative {
        s.push_str(" (non-informative)");
    }
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::worked;
    use crate::model::BBox;
    use proptest::prelude::*;

    /// Quadratic DBSCAN straight from the definitions: core points, then
    /// connected components of core points under eps, then borders.
    fn reference_dbscan(points: &[f64], eps: f64, min_pts: usize) -> Vec<BTreeSet<usize>> {
        let n = points.len();
        let near = |i: usize, j: usize| (points[i] - points[j]).abs() <= eps;
        let core: Vec<bool> = (0..n)
            .map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts)
            .collect();
        let mut comp: Vec<Option<usize>> = vec![None; n];
        let mut groups: Vec<BTreeSet<usize>> = Vec::new();
        for i in 0..n {
            if !core[i] || comp[i].is_some() {
                continue;
            }
            let g = groups.len();
            let mut set = BTreeSet::new();
            let mut stack = vec![i];
            comp[i] = Some(g);
            while let Some(a) = stack.pop() {
                set.insert(a);
                for b in 0..n {
                    if core[b] && comp[b].is_none() && near(a, b) {
                        comp[b] = Some(g);
                        stack.push(b);
                    }
                }
            }
            groups.push(set);
        }
        // border points reachable from a core point join that core's group
        for i in 0..n {
            if core[i] {
                continue;
            }
            if let Some(c) = (0..n).find(|&j| core[j] && near(i, j)) {
                groups[comp[c].unwrap()].insert(i);
            }
        }
        groups
    }

    fn partition(labels: &Labels) -> BTreeSet<BTreeSet<usize>> {
        let n = labels.iter().flatten().map(|&c| c + 1).max().unwrap_or(0);
        (0..n)
            .map(|c| (0..labels.len()).filter(|&i| labels[i] == Some(c)).collect())
            .collect()
    }

    fn run(points: &[f64], eps: f64, min_pts: usize) -> Labels {
        let pts: Vec<Vec<f64>> = points.iter().map(|&p| vec![p]).collect();
        dbscan(&pts, eps, min_pts).unwrap()
    }

    #[test]
    fn dbscan_two_groups() {
        let l = run(&[1.0, 1.1, 1.2, 9.0, 9.1], 0.5, 2);
        assert_eq!(l, vec![Some(0), Some(0), Some(0), Some(1), Some(1)]);
    }

    #[test]
    fn dbscan_degenerate_inputs() {
        assert_eq!(run(&[3.0], 0.5, 1), vec![Some(0)]);
        assert_eq!(run(&[0.0, 5.0, 10.0], 1.0, 2), vec![None, None, None]);
        assert!(run(&[], 1.0, 1).is_empty());
        assert!(dbscan(&[vec![1.0]], 0.0, 1).is_err());
    }

    proptest! {
        #[test]
        fn dbscan_matches_reference(points in prop::collection::vec(0.0f64..100.0, 20), eps in 1.0f64..15.0, min_pts in 1usize..4) {
            let got = partition(&run(&points, eps, min_pts));
            let want: BTreeSet<BTreeSet<usize>> = reference_dbscan(&points, eps, min_pts).into_iter().collect();
            // borders between two clusters may go either way; with 1-D data and
            // these sizes that is rare, so compare the core structure only when it happens
            let core_n = |i: usize| points.iter().filter(|&&q| (q - points[i]).abs() <= eps).count() >= min_pts;
            let ambiguous = (0..points.len()).any(|i| !core_n(i) && {
                let owners: BTreeSet<_> = want.iter().enumerate()
                    .filter(|(_, g)| g.iter().any(|&j| core_n(j) && (points[i] - points[j]).abs() <= eps))
                    .map(|(k, _)| k).collect();
                owners.len() > 1
            });
            if !ambiguous {
                prop_assert_eq!(got, want);
            }
        }

        #[test]
        fn dbscan_permutation_invariant(points in prop::collection::vec(0.0f64..50.0, 1..25), eps in 0.5f64..6.0, seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut order: Vec<usize> = (0..points.len()).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let shuffled: Vec<f64> = order.iter().map(|&i| points[i]).collect();
            let a = partition(&run(&points, eps, 1));
            let b: BTreeSet<BTreeSet<usize>> = partition(&run(&shuffled, eps, 1))
                .into_iter()
                .map(|g| g.into_iter().map(|k| order[k]).collect())
                .collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn cluster_labels_anchor() {
        let four: Vec<_> = (0..4).map(|i| cluster_label(i, 4)).collect();
        assert_eq!(
            four,
            vec![
                SizeLabel::Tiny,
                SizeLabel::Small,
                SizeLabel::Large,
                SizeLabel::VeryLarge
            ]
        );
        assert_eq!(cluster_label(0, 1), SizeLabel::Normal);
        assert_eq!(cluster_label(1, 3), SizeLabel::Normal);
    }

    #[test]
    fn rotation_set_starts_with_reference() {
        let p = worked::rotating_triangles();
        let r = p.panels.panel(1);
        let set = build_rotation_set(r);
        assert_eq!(set.len(), 360);
        assert_eq!(&set[0], r);
        let back = rotate_image(&set[180], 180.0);
        assert!(crate::raster::similarity(&back, r).unwrap().value() >= 0.99);
    }

    #[test]
    fn rotation_of_self_is_zero() {
        let p = worked::rotating_triangles();
        let r = estimate_rotation(p.panels.panel(1), p.panels.panel(1), 0.8).unwrap();
        assert_eq!(r.best_theta, 0.0);
        assert_eq!(r.best_score.value(), 1.0);
        assert!(r.above_threshold);
    }

    #[test]
    fn unrelated_scene_below_threshold() {
        let a = worked::rotating_triangles();
        let b = worked::counting_circles();
        let r = estimate_rotation(a.panels.panel(1), b.panels.panel(5), 0.8).unwrap();
        assert!(!r.above_threshold, "{:?}", r);
        // frozen regression bound for this pair
        assert!(r.best_score.value() < 0.5, "{:?}", r);
    }

    #[test]
    fn worked_rotation() {
        let kb = acquire_knowledge(&worked::rotating_triangles(), &FeatureConfig::default()).unwrap();
        let rho: Vec<f64> = kb.per_panel.iter().map(|f| f.rho.unwrap()).collect();
        assert_eq!(rho, vec![0.0, 90.0, 180.0, 180.0, 90.0, 0.0, 270.0]);
    }

    #[test]
    fn worked_counting() {
        let kb = acquire_knowledge(&worked::counting_circles(), &FeatureConfig::default()).unwrap();
        let chi: Vec<usize> = kb.per_panel.iter().map(|f| f.total_count()).collect();
        assert_eq!(chi, vec![2, 4, 6, 6, 8, 4, 10]);
        assert!(kb.per_panel.iter().all(|f| f.rho.is_none()));
    }

    #[test]
    fn worked_scaling() {
        use SizeLabel::*;
        let kb = acquire_knowledge(&worked::shrinking_triangle(), &FeatureConfig::default()).unwrap();
        let sigma: Vec<SizeLabel> = kb.per_panel.iter().map(|f| f.sigma_summary()).collect();
        assert_eq!(sigma, vec![VeryLarge, Large, Small, Nil, Tiny, VeryLarge, Small]);
        assert!(kb.sigma_informative);
    }

    #[test]
    fn equal_sizes_are_all_normal() {
        let kb = acquire_knowledge(&worked::counting_circles(), &FeatureConfig::default()).unwrap();
        assert!(kb
            .per_panel
            .iter()
            .all(|f| f.sigma.iter().all(|&l| l == SizeLabel::Normal)));
    }

    #[test]
    fn all_noise_is_normal_and_flagged() {
        let b = |x: u32| DetectedShape {
            kind: crate::model::ShapeKind::Circle,
            filled: true,
            bbox: BBox {
                x0: 0,
                y0: 0,
                x1: x,
                y1: 1,
            },
            confidence: 1.0,
        };
        let r = extract_scaling(&[vec![b(10)], vec![b(50)], vec![]], 1.0, 2).unwrap();
        assert!(!r.informative);
        assert_eq!(r.labels, vec![vec![SizeLabel::Normal], vec![SizeLabel::Normal], vec![]]);
    }

    #[test]
    fn record_lines() {
        let kb = acquire_knowledge(&worked::counting_circles(), &FeatureConfig::default()).unwrap();
        let text = knowledge_record(&kb);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "rho: {NA,NA,NA,NA,NA,NA,NA}");
        assert_eq!(lines[2], "chi: {<2>,<4>,<6>,<6>,<8>,<4>,<10>}");
        assert!(lines[0].starts_with("shapes: circle("));
    }

    #[test]
    fn knowledge_is_pure() {
        let p = worked::shrinking_triangle();
        let cfg = FeatureConfig::default();
        assert_eq!(
            acquire_knowledge(&p, &cfg).unwrap(),
            acquire_knowledge(&p, &cfg).unwrap()
        );
    }
}
