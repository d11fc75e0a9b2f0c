//! Shared domain types: scenes, rasters, the 7-panel problem space and the
//! relational-feature knowledge base.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of panels in a 4x1 problem: three question panels and four options.
pub const PANEL_COUNT: usize = 7;
/// Number of question panels.
pub const QUESTION_COUNT: usize = 3;
/// Number of option panels.
pub const OPTION_COUNT: usize = 4;

/// Pixel value below which a pixel counts as ink.
pub const INK_THRESHOLD: u8 = 128;
pub const BACKGROUND: u8 = 255;
pub const INK: u8 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Circle,
    Triangle,
    Rectangle,
    Square,
    Diamond,
    Star,
    Hexagon,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 7] = [
        ShapeKind::Circle,
        ShapeKind::Triangle,
        ShapeKind::Rectangle,
        ShapeKind::Square,
        ShapeKind::Diamond,
        ShapeKind::Star,
        ShapeKind::Hexagon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Circle => "circle",
            ShapeKind::Triangle => "triangle",
            ShapeKind::Rectangle => "rectangle",
            ShapeKind::Square => "square",
            ShapeKind::Diamond => "diamond",
            ShapeKind::Star => "star",
            ShapeKind::Hexagon => "hexagon",
        }
    }

    pub fn index(self) -> usize {
        ShapeKind::ALL.iter().position(|&k| k == self).unwrap()
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One vector primitive of a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub kind: ShapeKind,
    /// Normalized center in `[0,1]²`.
    pub center: (f64, f64),
    /// Circumradius as a fraction of the panel's smaller dimension.
    pub size: f64,
    pub rotation_deg: f64,
    pub filled: bool,
}

impl Primitive {
    /// Center in pixel coordinates (continuous, pixel `i` spans `[i, i+1)`).
    pub fn center_px(&self, width: u32, height: u32) -> (f64, f64) {
        (self.center.0 * width as f64, self.center.1 * height as f64)
    }

    pub fn radius_px(&self, width: u32, height: u32) -> f64 {
        self.size * width.min(height) as f64
    }
}

/// Rotates an offset vector by `theta_deg`, counterclockwise as seen on screen
/// (y axis pointing down).
pub fn rotate_offset(dx: f64, dy: f64, theta_deg: f64) -> (f64, f64) {
    let (s, c) = theta_deg.to_radians().sin_cos();
    (dx * c + dy * s, -dx * s + dy * c)
}

/// Normalizes an angle to `[0, 360)`.
pub fn wrap_degrees(deg: f64) -> f64 {
    let d = deg.rem_euclid(360.0);
    if d >= 360.0 {
        0.0
    } else {
        d
    }
}

/// Absolute angular distance in `[0, 180]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = wrap_degrees(a - b);
    d.min(360.0 - d)
}

/// Minimum gap between circumcircles of two primitives, in pixels.
pub const MIN_SEPARATION_PX: f64 = 2.0;
/// Margin kept between a circumcircle and the panel border, in pixels.
pub const BORDER_MARGIN_PX: f64 = 1.0;

/// Vector description of one panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub width: u32,
    pub height: u32,
    pub primitives: Vec<Primitive>,
}

impl Scene {
    pub fn new(width: u32, height: u32) -> Self {
        Scene {
            width,
            height,
            primitives: Vec::new(),
        }
    }

    pub fn with(mut self, p: Primitive) -> Self {
        self.primitives.push(p);
        self
    }

    /// Checks panel size, primitive bounds and pairwise separation.
    pub fn validate(&self) -> Result<()> {
        if self.width < 32 || self.height < 32 {
            return Err(Error::Raster(format!(
                "panel size {}x{} below 32x32",
                self.width, self.height
            )));
        }
        for (i, p) in self.primitives.iter().enumerate() {
            if !(p.size > 0.0 && p.size <= 1.0) {
                return Err(Error::Raster(format!("primitive {i}: size {} outside (0,1]", p.size)));
            }
            if !(0.0..=1.0).contains(&p.center.0) || !(0.0..=1.0).contains(&p.center.1) {
                return Err(Error::Raster(format!("primitive {i}: center outside unit square")));
            }
            let (cx, cy) = p.center_px(self.width, self.height);
            let r = p.radius_px(self.width, self.height);
            let m = BORDER_MARGIN_PX;
            if cx - r < m || cy - r < m || cx + r > self.width as f64 - m || cy + r > self.height as f64 - m {
                return Err(Error::Raster(format!(
                    "primitive {i} ({}) out of bounds: center ({cx:.1},{cy:.1}) radius {r:.1}",
                    p.kind
                )));
            }
        }
        for i in 0..self.primitives.len() {
            for j in i + 1..self.primitives.len() {
                let gap = self.gap_px(i, j);
                if gap < MIN_SEPARATION_PX {
                    return Err(Error::Raster(format!(
                        "primitives {i} and {j} overlap (gap {gap:.2} px)"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Gap between the circumcircles of primitives `i` and `j`.
    pub fn gap_px(&self, i: usize, j: usize) -> f64 {
        let a = &self.primitives[i];
        let b = &self.primitives[j];
        let (ax, ay) = a.center_px(self.width, self.height);
        let (bx, by) = b.center_px(self.width, self.height);
        let d = ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt();
        d - a.radius_px(self.width, self.height) - b.radius_px(self.width, self.height)
    }

    /// The whole scene rotated about the panel center.
    pub fn rotated(&self, theta_deg: f64) -> Scene {
        let (w, h) = (self.width as f64, self.height as f64);
        let primitives = self
            .primitives
            .iter()
            .map(|p| {
                let (cx, cy) = p.center_px(self.width, self.height);
                let (dx, dy) = rotate_offset(cx - w / 2.0, cy - h / 2.0, theta_deg);
                Primitive {
                    center: ((w / 2.0 + dx) / w, (h / 2.0 + dy) / h),
                    rotation_deg: wrap_degrees(p.rotation_deg + theta_deg),
                    ..p.clone()
                }
            })
            .collect();
        Scene {
            width: self.width,
            height: self.height,
            primitives,
        }
    }

    /// Ground-truth count per shape kind.
    pub fn counts(&self) -> BTreeMap<ShapeKind, usize> {
        let mut m = empty_counts();
        for p in &self.primitives {
            *m.get_mut(&p.kind).unwrap() += 1;
        }
        m
    }
}

/// Map with every shape kind set to zero.
pub fn empty_counts() -> BTreeMap<ShapeKind, usize> {
    ShapeKind::ALL.iter().map(|&k| (k, 0)).collect()
}

/// Row-major 8-bit grayscale raster. Background is 255, ink is 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Structural("raster dimensions must be positive".into()));
        }
        if pixels.len() != width as usize * height as usize {
            return Err(Error::Structural(format!(
                "pixel buffer length {} != {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        Ok(RasterImage { width, height, pixels })
    }

    /// All-background raster.
    pub fn blank(width: u32, height: u32) -> Self {
        RasterImage {
            width,
            height,
            pixels: vec![BACKGROUND; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn is_ink(&self, x: u32, y: u32) -> bool {
        self.get(x, y) < INK_THRESHOLD
    }

    pub fn same_dims(&self, other: &RasterImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Thresholds at 128 into pure ink / background.
    pub fn binarize(&self) -> RasterImage {
        RasterImage {
            width: self.width,
            height: self.height,
            pixels: self
                .pixels
                .iter()
                .map(|&p| if p < INK_THRESHOLD { INK } else { BACKGROUND })
                .collect(),
        }
    }

    pub fn ink_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p < INK_THRESHOLD).count()
    }

    pub fn is_blank(&self) -> bool {
        self.ink_count() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    RT,
    CT,
    SS,
    OT,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::RT, Category::CT, Category::SS, Category::OT];

    /// RT, CT and SS are solved from relational features; OT from image vectors.
    pub fn is_category1(self) -> bool {
        !matches!(self, Category::OT)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::RT => "RT",
            Category::CT => "CT",
            Category::SS => "SS",
            Category::OT => "OT",
        }
    }

    pub fn parse(s: &str) -> Option<Category> {
        Category::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The seven panels of a problem, without any ground truth attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelSet {
    panels: Vec<RasterImage>,
}

impl PanelSet {
    pub fn new(panels: Vec<RasterImage>) -> Result<Self> {
        if panels.len() != PANEL_COUNT {
            return Err(Error::Structural(format!(
                "expected {PANEL_COUNT} panels, got {}",
                panels.len()
            )));
        }
        if panels.iter().any(|p| !p.same_dims(&panels[0])) {
            return Err(Error::Structural("panels differ in size".into()));
        }
        Ok(PanelSet { panels })
    }

    pub fn all(&self) -> &[RasterImage] {
        &self.panels
    }

    /// Panel by 1-based index as used throughout (1..=7).
    pub fn panel(&self, index: usize) -> &RasterImage {
        &self.panels[index - 1]
    }

    pub fn question(&self) -> &[RasterImage] {
        &self.panels[..QUESTION_COUNT]
    }

    pub fn options(&self) -> &[RasterImage] {
        &self.panels[QUESTION_COUNT..]
    }

    pub fn width(&self) -> u32 {
        self.panels[0].width()
    }

    pub fn height(&self) -> u32 {
        self.panels[0].height()
    }
}

/// A 4x1 problem: panels 1..3 form the question, 4..7 the options.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpace {
    pub panels: PanelSet,
    pub scenes: Option<Vec<Scene>>,
    /// Panel index of the correct option, in `4..=7`.
    pub answer_index: u8,
    pub true_category: Option<Category>,
}

impl ProblemSpace {
    pub fn new(
        panels: PanelSet,
        scenes: Option<Vec<Scene>>,
        answer_index: u8,
        true_category: Option<Category>,
    ) -> Result<Self> {
        if !(4..=7).contains(&answer_index) {
            return Err(Error::Structural(format!("answer index {answer_index} not in 4..=7")));
        }
        if let Some(s) = &scenes {
            if s.len() != PANEL_COUNT {
                return Err(Error::Structural(format!("expected 7 scenes, got {}", s.len())));
            }
        }
        Ok(ProblemSpace {
            panels,
            scenes,
            answer_index,
            true_category,
        })
    }

    /// Option letter A-D for the answer.
    pub fn answer_letter(&self) -> char {
        option_letter(self.answer_index)
    }
}

/// Maps a panel index 4..=7 to A..D.
pub fn option_letter(panel_index: u8) -> char {
    (b'A' + panel_index.saturating_sub(4)) as char
}

/// Splits a panel list into question (panels 1..3) and options (panels 4..7).
pub fn split_problem(panels: &[RasterImage]) -> Result<(&[RasterImage], &[RasterImage])> {
    if panels.len() != PANEL_COUNT {
        return Err(Error::Structural(format!(
            "expected {PANEL_COUNT} panels, got {}",
            panels.len()
        )));
    }
    Ok(panels.split_at(QUESTION_COUNT))
}

/// Integer pixel rectangle, `x1`/`y1` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BBox {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedShape {
    pub kind: ShapeKind,
    pub filled: bool,
    pub bbox: BBox,
    pub confidence: f64,
}

/// Ordered size vocabulary for σ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SizeLabel {
    Nil,
    Tiny,
    Small,
    Normal,
    Large,
    VeryLarge,
}

impl SizeLabel {
    pub const ALL: [SizeLabel; 6] = [
        SizeLabel::Nil,
        SizeLabel::Tiny,
        SizeLabel::Small,
        SizeLabel::Normal,
        SizeLabel::Large,
        SizeLabel::VeryLarge,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(i: usize) -> SizeLabel {
        SizeLabel::ALL[i.min(5)]
    }

    pub fn name(self) -> &'static str {
        match self {
            SizeLabel::Nil => "Nil",
            SizeLabel::Tiny => "Tiny",
            SizeLabel::Small => "Small",
            SizeLabel::Normal => "Normal",
            SizeLabel::Large => "Large",
            SizeLabel::VeryLarge => "VeryLarge",
        }
    }
}

impl fmt::Display for SizeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// ρ, χ and σ of one panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationalFeatures {
    /// Rotation relative to panel 1 in degrees; `None` is NA.
    pub rho: Option<f64>,
    pub chi: BTreeMap<ShapeKind, usize>,
    /// One label per detected shape, in detection order.
    pub sigma: Vec<SizeLabel>,
}

impl RelationalFeatures {
    pub fn total_count(&self) -> usize {
        self.chi.values().sum()
    }

    /// Panel-level size summary: the largest label present, `Nil` when empty.
    pub fn sigma_summary(&self) -> SizeLabel {
        self.sigma.iter().copied().max().unwrap_or(SizeLabel::Nil)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    /// Aligned with panel order 1..7.
    pub per_panel: Vec<RelationalFeatures>,
    /// (kind, filled) pairs present anywhere in the problem.
    pub shapes: BTreeSet<(ShapeKind, bool)>,
    /// False when size clustering found no structure (all points noise).
    pub sigma_informative: bool,
}

impl KnowledgeBase {
    pub fn question(&self) -> &[RelationalFeatures] {
        &self.per_panel[..QUESTION_COUNT]
    }

    pub fn options(&self) -> &[RelationalFeatures] {
        &self.per_panel[QUESTION_COUNT..]
    }
}

/// Output of a predictor plus the matching decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub predicted_rf: Option<RelationalFeatures>,
    pub predicted_vector: Option<Vec<f64>>,
    /// Panel index 4..=7.
    pub chosen_option: u8,
    /// Higher is better.
    pub score_per_option: [f64; 4],
}

impl Prediction {
    pub fn from_rf(rf: RelationalFeatures, scores: [f64; 4]) -> Self {
        Prediction {
            predicted_rf: Some(rf),
            predicted_vector: None,
            chosen_option: argmax_option(&scores),
            score_per_option: scores,
        }
    }

    pub fn from_vector(v: Vec<f64>, scores: [f64; 4]) -> Self {
        Prediction {
            predicted_rf: None,
            predicted_vector: Some(v),
            chosen_option: argmax_option(&scores),
            score_per_option: scores,
        }
    }
}

/// Panel index (4..=7) of the best score, lowest index on ties. NaN scores never win.
pub fn argmax_option(scores: &[f64; 4]) -> u8 {
    let mut best = 0;
    for i in 1..4 {
        if scores[i] > scores[best] || (scores[best].is_nan() && !scores[i].is_nan()) {
            best = i;
        }
    }
    (best + 4) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(v: u8) -> RasterImage {
        RasterImage::new(32, 32, vec![v; 32 * 32]).unwrap()
    }

    #[test]
    fn split_partitions_in_order() {
        let panels: Vec<_> = (0..7).map(|i| panel(i * 10)).collect();
        let (q, o) = split_problem(&panels).unwrap();
        assert_eq!(q.len(), 3);
        assert_eq!(o.len(), 4);
        let joined: Vec<_> = q.iter().chain(o).cloned().collect();
        assert_eq!(joined, panels);
    }

    #[test]
    fn split_rejects_wrong_count() {
        let panels: Vec<_> = (0..6).map(|_| panel(255)).collect();
        assert!(matches!(split_problem(&panels), Err(Error::Structural(_))));
        assert!(PanelSet::new(panels).is_err());
    }

    #[test]
    fn panel_set_requires_equal_dims() {
        let mut panels: Vec<_> = (0..7).map(|_| panel(255)).collect();
        panels[3] = RasterImage::blank(33, 32);
        assert!(PanelSet::new(panels).is_err());
    }

    #[test]
    fn answer_index_range() {
        let ps = PanelSet::new((0..7).map(|_| panel(255)).collect()).unwrap();
        assert!(ProblemSpace::new(ps.clone(), None, 3, None).is_err());
        assert!(ProblemSpace::new(ps.clone(), None, 8, None).is_err());
        let p = ProblemSpace::new(ps, None, 7, Some(Category::RT)).unwrap();
        assert_eq!(p.answer_letter(), 'D');
    }

    #[test]
    fn binarize_is_idempotent() {
        let img = RasterImage::new(32, 32, (0..1024).map(|i| (i % 256) as u8).collect()).unwrap();
        let b = img.binarize();
        assert_eq!(b.binarize(), b);
        assert_eq!(b.ink_count(), img.ink_count());
    }

    #[test]
    fn raster_length_checked() {
        assert!(RasterImage::new(32, 32, vec![0; 10]).is_err());
    }

    #[test]
    fn argmax_tie_break_lowest() {
        assert_eq!(argmax_option(&[1.0, 3.0, 3.0, 0.0]), 5);
        assert_eq!(argmax_option(&[2.0, 2.0, 2.0, 2.0]), 4);
        assert_eq!(argmax_option(&[f64::NAN, 0.0, 1.0, 1.0]), 6);
    }

    #[test]
    fn shape_names_lowercase_and_stable() {
        let names: Vec<_> = ShapeKind::ALL
            .iter()
            .map(|k| serde_json::to_string(k).unwrap())
            .collect();
        assert_eq!(
            names,
            [
                "\"circle\"",
                "\"triangle\"",
                "\"rectangle\"",
                "\"square\"",
                "\"diamond\"",
                "\"star\"",
                "\"hexagon\""
            ]
        );
    }

    #[test]
    fn rotation_is_counterclockwise_on_screen() {
        let (x, y) = rotate_offset(1.0, 0.0, 90.0);
        assert!(x.abs() < 1e-12 && (y + 1.0).abs() < 1e-12);
        assert!((angular_distance(350.0, 10.0) - 20.0).abs() < 1e-12);
        assert_eq!(wrap_degrees(-90.0), 270.0);
    }

    #[test]
    fn scene_validation() {
        let p = |x: f64, size: f64| Primitive {
            kind: ShapeKind::Circle,
            center: (x, 0.5),
            size,
            rotation_deg: 0.0,
            filled: true,
        };
        assert!(Scene::new(64, 64).with(p(0.5, 0.4)).validate().is_ok());
        assert!(Scene::new(64, 64).with(p(0.1, 0.2)).validate().is_err());
        assert!(Scene::new(64, 64)
            .with(p(0.3, 0.15))
            .with(p(0.55, 0.1))
            .validate()
            .is_err());
        assert!(Scene::new(16, 64).validate().is_err());
    }
}
