//! Problem classification, the two predictor families, option matching and
//! the top-level solve loop.
//!
//! Category-1 problems (RT, CT, SS) are predicted from relational features
//! with one small LSTM per category; everything else goes through an
//! encoder/decoder over downsampled panel vectors.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{knowledge_from_panels, FeatureConfig};
use crate::generator::{generate_problem, GeneratorSpec};
use crate::model::{
    angular_distance, wrap_degrees, Category, KnowledgeBase, PanelSet, Prediction, RasterImage, RelationalFeatures,
    ShapeKind, SizeLabel, QUESTION_COUNT,
};
use crate::seqnet::{lstm_forward, train, Checkpoint, Sample, Seq2Seq, SeqModel, TrainConfig, TrainReport};

/// Question rotations closer than this count as equal.
pub const ROTATION_TOLERANCE_DEG: f64 = 2.0;
/// χ is fed to the LSTM as count / COUNT_SCALE.
pub const COUNT_SCALE: f64 = 12.0;
/// σ is fed to the LSTM as ordinal / SIZE_SCALE.
pub const SIZE_SCALE: f64 = 6.0;

// ------------------------------------------------------------ classification

/// Decision cascade on the question panels: rotation, then counting, then
/// scaling, else other.
pub fn classify(kb: &KnowledgeBase) -> Category {
    let q = kb.question();
    if rho_varies(q) {
        Category::RT
    } else if q.iter().any(|f| f.chi != q[0].chi) {
        Category::CT
    } else if kb.sigma_informative && q.iter().any(|f| f.sigma_summary() != q[0].sigma_summary()) {
        Category::SS
    } else {
        Category::OT
    }
}

fn rho_varies(q: &[RelationalFeatures]) -> bool {
    let rho: Option<Vec<f64>> = q.iter().map(|f| f.rho).collect();
    match rho {
        Some(r) => r
            .iter()
            .any(|&a| r.iter().any(|&b| angular_distance(a, b) > ROTATION_TOLERANCE_DEG)),
        None => false,
    }
}

// ------------------------------------------------------------ RF encodings

/// One relational feature value of a panel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RfValue {
    Rotation(f64),
    Count(usize),
    Size(SizeLabel),
}

impl RfValue {
    pub fn of(category: Category, f: &RelationalFeatures) -> Option<RfValue> {
        match category {
            Category::RT => f.rho.map(RfValue::Rotation),
            Category::CT => Some(RfValue::Count(f.total_count())),
            Category::SS => Some(RfValue::Size(f.sigma_summary())),
            Category::OT => None,
        }
    }

    pub fn encode(self) -> Vec<f64> {
        match self {
            RfValue::Rotation(r) => {
                let (s, c) = r.to_radians().sin_cos();
                vec![s, c]
            }
            RfValue::Count(n) => vec![n as f64 / COUNT_SCALE],
            RfValue::Size(l) => vec![l.ordinal() as f64 / SIZE_SCALE],
        }
    }

    /// `None` for OT or a vector of the wrong width.
    pub fn decode(category: Category, v: &[f64]) -> Option<RfValue> {
        let width = if category == Category::RT { 2 } else { 1 };
        if v.len() != width {
            return None;
        }
        match category {
            Category::RT => Some(RfValue::Rotation(wrap_degrees(v[0].atan2(v[1]).to_degrees()))),
            Category::CT => Some(RfValue::Count((v[0] * COUNT_SCALE).round().max(0.0) as usize)),
            Category::SS => {
                let o = (v[0] * SIZE_SCALE)
                    .round()
                    .clamp(0.0, SizeLabel::VeryLarge.ordinal() as f64);
                Some(RfValue::Size(SizeLabel::from_ordinal(o as usize)))
            }
            Category::OT => None,
        }
    }

    /// Distance used by the matching stage; values of different kinds are infinitely apart.
    pub fn distance(self, other: RfValue) -> f64 {
        match (self, other) {
            (RfValue::Rotation(a), RfValue::Rotation(b)) => angular_distance(a, b),
            (RfValue::Count(a), RfValue::Count(b)) => (a as f64 - b as f64).abs(),
            (RfValue::Size(a), RfValue::Size(b)) => (a.ordinal() as f64 - b.ordinal() as f64).abs(),
            _ => f64::INFINITY,
        }
    }

    /// As relational features, for reporting.
    fn to_features(self, like: &RelationalFeatures) -> RelationalFeatures {
        let mut f = RelationalFeatures {
            rho: None,
            chi: crate::model::empty_counts(),
            sigma: Vec::new(),
        };
        match self {
            RfValue::Rotation(r) => f.rho = Some(r),
            RfValue::Count(n) => {
                // credit the count to the most frequent kind of the last question panel
                let kind = like
                    .chi
                    .iter()
                    .max_by_key(|(_, &c)| c)
                    .map(|(&k, _)| k)
                    .unwrap_or(ShapeKind::Circle);
                f.chi.insert(kind, n);
            }
            RfValue::Size(l) => f.sigma = vec![l],
        }
        f
    }
}

impl std::fmt::Display for RfValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RfValue::Rotation(r) => write!(f, "rho={r:.0}"),
            RfValue::Count(n) => write!(f, "chi={n}"),
            RfValue::Size(l) => write!(f, "sigma={l}"),
        }
    }
}

/// Linear extrapolation of a three-term progression.
pub fn extrapolate(q: [RfValue; 3]) -> Option<RfValue> {
    match q {
        [_, RfValue::Rotation(b), RfValue::Rotation(c)] => {
            let step = wrap_degrees(c - b + 180.0) - 180.0;
            Some(RfValue::Rotation(wrap_degrees(c + step)))
        }
        [_, RfValue::Count(b), RfValue::Count(c)] => Some(RfValue::Count((2 * c).saturating_sub(b))),
        [_, RfValue::Size(b), RfValue::Size(c)] => {
            let o = (2 * c.ordinal() as i64 - b.ordinal() as i64)
                .clamp(SizeLabel::Tiny.ordinal() as i64, SizeLabel::VeryLarge.ordinal() as i64);
            Some(RfValue::Size(SizeLabel::from_ordinal(o as usize)))
        }
        _ => None,
    }
}

// ------------------------------------------------------------ image vectors

/// Mean ink darkness (0 background, 1 ink) of each cell of a `grid`x`grid` pooling.
pub fn panel_vector(img: &RasterImage, grid: usize) -> Vec<f64> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut sum = vec![0.0; grid * grid];
    let mut n = vec![0u32; grid * grid];
    for y in 0..h {
        let gy = y * grid / h;
        for x in 0..w {
            let k = gy * grid + x * grid / w;
            sum[k] += 1.0 - img.pixels()[y * w + x] as f64 / 255.0;
            n[k] += 1;
        }
    }
    sum.iter()
        .zip(&n)
        .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect()
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

// ------------------------------------------------------------ configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    Lstm,
    /// Linear extrapolation of the question's features, for isolating
    /// predictor errors from feature errors.
    Arithmetic,
}

/// Which solver runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    /// Category routing: relational LSTMs for RT/CT/SS, encoder/decoder for OT.
    Routed,
    /// Ablation: encoder/decoder over panel vectors for every problem.
    ImageOnly,
    /// Ablation: one LSTM over all relational features, no routing.
    RfUnrouted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub rf_hidden: usize,
    pub image_hidden: usize,
    pub rf_train: TrainConfig,
    pub image_train: TrainConfig,
    /// Generated OT problems added to the encoder/decoder training set.
    pub synthetic_ot: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            rf_hidden: 16,
            image_hidden: 32,
            rf_train: TrainConfig {
                learning_rate: 0.5,
                epochs: 200,
                batch_size: 16,
                seed: 1,
                clip_norm: 5.0,
            },
            image_train: TrainConfig {
                learning_rate: 0.5,
                epochs: 40,
                batch_size: 8,
                seed: 1,
                clip_norm: 5.0,
            },
            synthetic_ot: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub features: FeatureConfig,
    /// Side of the pooled panel grid for image vectors.
    pub grid: usize,
    pub predictor: PredictorKind,
    pub pipeline: Pipeline,
    pub models: ModelConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            features: FeatureConfig::default(),
            grid: 16,
            predictor: PredictorKind::Lstm,
            pipeline: Pipeline::Routed,
            models: ModelConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        if self.grid < 8 {
            return Err(Error::Config("image grid must be at least 8".into()));
        }
        if self.models.rf_hidden == 0 || self.models.image_hidden == 0 {
            return Err(Error::Config("hidden sizes must be at least 1".into()));
        }
        self.models.rf_train.validate()?;
        self.models.image_train.validate()
    }
}

// ------------------------------------------------------------ models

#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub pipeline: Pipeline,
    pub rt: Option<SeqModel>,
    pub ct: Option<SeqModel>,
    pub ss: Option<SeqModel>,
    /// Encoder/decoder; under `ImageOnly` it serves every category.
    pub image: Option<Seq2Seq>,
    pub unrouted: Option<SeqModel>,
}

impl Models {
    fn empty(pipeline: Pipeline) -> Self {
        Models {
            pipeline,
            rt: None,
            ct: None,
            ss: None,
            image: None,
            unrouted: None,
        }
    }

    pub fn rf(&self, category: Category) -> Result<&SeqModel> {
        let m = match category {
            Category::RT => &self.rt,
            Category::CT => &self.ct,
            Category::SS => &self.ss,
            Category::OT => &None,
        };
        m.as_ref()
            .ok_or_else(|| Error::Config(format!("no {category} model loaded")))
    }

    fn image_model(&self) -> Result<&Seq2Seq> {
        self.image
            .as_ref()
            .ok_or_else(|| Error::Config("no image encoder/decoder loaded".into()))
    }

    /// Writes one checkpoint file per model into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let meta = |name: &str| {
            BTreeMap::from([
                ("model".to_string(), name.to_string()),
                ("pipeline".to_string(), pipeline_name(self.pipeline).to_string()),
            ])
        };
        for (name, m) in [
            ("rt", &self.rt),
            ("ct", &self.ct),
            ("ss", &self.ss),
            ("unrouted", &self.unrouted),
        ] {
            if let Some(m) = m {
                std::fs::write(dir.join(format!("{name}.ckpt")), m.to_checkpoint(meta(name)).to_bytes())?;
            }
        }
        if let Some(m) = &self.image {
            std::fs::write(dir.join("image.ckpt"), m.to_checkpoint(meta("image")).to_bytes())?;
        }
        Ok(())
    }

    /// Reads whatever checkpoints `dir` holds.
    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<Option<Checkpoint>> {
            let path = dir.join(format!("{name}.ckpt"));
            if !path.exists() {
                return Ok(None);
            }
            let bytes = std::fs::read(&path)?;
            Checkpoint::from_bytes(&bytes)
                .map(Some)
                .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
        };
        let seq =
            |name: &str| -> Result<Option<SeqModel>> { read(name)?.map(|c| SeqModel::from_checkpoint(&c)).transpose() };
        let image_ckpt = read("image")?;
        let mut pipeline = None;
        let mut models = Models::empty(Pipeline::Routed);
        models.rt = seq("rt")?;
        models.ct = seq("ct")?;
        models.ss = seq("ss")?;
        models.unrouted = seq("unrouted")?;
        models.image = image_ckpt.as_ref().map(Seq2Seq::from_checkpoint).transpose()?;
        for name in ["rt", "ct", "ss", "unrouted", "image"] {
            if let Some(c) = read(name)? {
                pipeline = c.meta.get("pipeline").and_then(|p| parse_pipeline(p));
                break;
            }
        }
        models.pipeline = pipeline.ok_or_else(|| Error::Data(format!("no checkpoints in {}", dir.display())))?;
        Ok(models)
    }
}

pub fn pipeline_name(p: Pipeline) -> &'static str {
    match p {
        Pipeline::Routed => "routed",
        Pipeline::ImageOnly => "image-only",
        Pipeline::RfUnrouted => "rf-unrouted",
    }
}

pub fn parse_pipeline(s: &str) -> Option<Pipeline> {
    match s {
        "routed" => Some(Pipeline::Routed),
        "image-only" => Some(Pipeline::ImageOnly),
        "rf-unrouted" => Some(Pipeline::RfUnrouted),
        _ => None,
    }
}

// ------------------------------------------------------------ solving

/// Everything the solver derives from the panels before predicting.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub kb: KnowledgeBase,
    /// One pooled vector per panel.
    pub vectors: Vec<Vec<f64>>,
}

pub fn prepare(panels: &PanelSet, cfg: &SolverConfig) -> Result<Prepared> {
    Ok(Prepared {
        kb: knowledge_from_panels(panels, &cfg.features)?,
        vectors: panels.all().iter().map(|p| panel_vector(p, cfg.grid)).collect(),
    })
}

/// The solver's full record for one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub category: Category,
    pub prediction: Prediction,
    /// Human-readable predicted knowledge, e.g. `chi=8` or `vector`.
    pub knowledge: String,
}

impl Decision {
    pub fn answer_index(&self) -> u8 {
        self.prediction.chosen_option
    }
}

/// Scores options by negated feature distance; options without the feature score -inf.
pub fn match_rf(predicted: RfValue, category: Category, options: &[RelationalFeatures]) -> [f64; 4] {
    let mut s = [f64::NEG_INFINITY; 4];
    for (k, f) in options.iter().take(4).enumerate() {
        if let Some(v) = RfValue::of(category, f) {
            s[k] = -predicted.distance(v);
        }
    }
    s
}

/// Scores options by cosine similarity to the predicted vector.
pub fn match_vector(predicted: &[f64], options: &[Vec<f64>]) -> [f64; 4] {
    let mut s = [f64::NEG_INFINITY; 4];
    for (k, v) in options.iter().take(4).enumerate() {
        s[k] = cosine(predicted, v);
    }
    s
}

/// Predicts the fourth panel's feature for an RT, CT or SS problem and matches it.
pub fn predict_category1(
    kb: &KnowledgeBase,
    category: Category,
    models: &Models,
    cfg: &SolverConfig,
) -> Result<(Prediction, RfValue)> {
    if !category.is_category1() {
        return Err(Error::Config(format!("{category} is not a relational category")));
    }
    let q: Vec<RfValue> = kb
        .question()
        .iter()
        .map(|f| RfValue::of(category, f))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Data(format!("question lacks {category} features")))?;
    let predicted = match cfg.predictor {
        PredictorKind::Arithmetic => extrapolate([q[0], q[1], q[2]]).expect("question values share one kind"),
        PredictorKind::Lstm => {
            let seq: Vec<Vec<f64>> = q.iter().map(|v| v.encode()).collect();
            let out = lstm_forward(models.rf(category)?, &seq)?;
            RfValue::decode(category, &out.prediction)
                .ok_or_else(|| Error::Data(format!("{category} model emits {} outputs", out.prediction.len())))?
        }
    };
    let scores = match_rf(predicted, category, kb.options());
    let rf = predicted.to_features(&kb.question()[QUESTION_COUNT - 1]);
    Ok((Prediction::from_rf(rf, scores), predicted))
}

/// Encoder/decoder prediction of the fourth panel vector, matched by cosine.
pub fn predict_category2(vectors: &[Vec<f64>], model: &Seq2Seq) -> Result<Prediction> {
    let predicted = model.predict(&vectors[..QUESTION_COUNT])?;
    let scores = match_vector(&predicted, &vectors[QUESTION_COUNT..]);
    Ok(Prediction::from_vector(predicted, scores))
}

/// Encoding of every relational feature at once, for the unrouted ablation.
fn joint_encoding(f: &RelationalFeatures) -> Vec<f64> {
    let (s, c) = f.rho.map_or((0.0, 0.0), |r| r.to_radians().sin_cos());
    vec![
        s,
        c,
        f.total_count() as f64 / COUNT_SCALE,
        f.sigma_summary().ordinal() as f64 / SIZE_SCALE,
    ]
}

fn predict_unrouted(kb: &KnowledgeBase, model: &SeqModel) -> Result<Prediction> {
    let seq: Vec<Vec<f64>> = kb.question().iter().map(joint_encoding).collect();
    let p = lstm_forward(model, &seq)?.prediction;
    let mut scores = [0.0; 4];
    for (k, f) in kb.options().iter().enumerate() {
        let o = joint_encoding(f);
        scores[k] = -p.iter().zip(&o).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    let q3 = &kb.question()[QUESTION_COUNT - 1];
    let rf = RelationalFeatures {
        rho: q3.rho.map(|_| wrap_degrees(p[0].atan2(p[1]).to_degrees())),
        chi: q3.chi.clone(),
        sigma: vec![
            RfValue::decode(Category::SS, &p[3..4]).map_or(SizeLabel::Nil, |v| match v {
                RfValue::Size(l) => l,
                _ => SizeLabel::Nil,
            }),
        ],
    };
    Ok(Prediction::from_rf(rf, scores))
}

/// Solves a problem from its panels alone.
pub fn solve(panels: &PanelSet, models: &Models, cfg: &SolverConfig) -> Result<Decision> {
    cfg.validate()?;
    solve_prepared(&prepare(panels, cfg)?, models, cfg)
}

/// Classifies, routes to exactly one predictor, and matches.
pub fn solve_prepared(p: &Prepared, models: &Models, cfg: &SolverConfig) -> Result<Decision> {
    let category = classify(&p.kb);
    let (prediction, knowledge) = match models.pipeline {
        Pipeline::Routed if category.is_category1() => {
            let (pred, v) = predict_category1(&p.kb, category, models, cfg)?;
            (pred, v.to_string())
        }
        Pipeline::Routed | Pipeline::ImageOnly => (
            predict_category2(&p.vectors, models.image_model()?)?,
            "vector".to_string(),
        ),
        Pipeline::RfUnrouted => {
            let m = models
                .unrouted
                .as_ref()
                .ok_or_else(|| Error::Config("no unrouted model loaded".into()))?;
            (predict_unrouted(&p.kb, m)?, "joint".to_string())
        }
    };
    Ok(Decision {
        category,
        prediction,
        knowledge,
    })
}

// ------------------------------------------------------------ training

/// A prepared training problem with its labels.
#[derive(Debug, Clone, Copy)]
pub struct Labeled<'a> {
    pub prepared: &'a Prepared,
    pub answer_index: u8,
    pub category: Category,
}

/// Loss curves of the models trained.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub reports: BTreeMap<String, TrainReport>,
    pub samples: BTreeMap<String, usize>,
}

/// RF training pairs from labelled problems of one category.
pub fn rf_samples(data: &[Labeled], category: Category) -> Vec<Sample> {
    data.iter()
        .filter(|d| d.category == category)
        .filter_map(|d| {
            let kb = &d.prepared.kb;
            let seq: Option<Vec<Vec<f64>>> = kb
                .question()
                .iter()
                .map(|f| RfValue::of(category, f).map(RfValue::encode))
                .collect();
            let target = RfValue::of(category, &kb.per_panel[d.answer_index as usize - 1])?.encode();
            Some((seq?, target))
        })
        .collect()
}

/// Synthetic progressions covering each category's feature range.
pub fn synthetic_rf_samples(category: Category) -> Vec<Sample> {
    let seq = |v: [RfValue; 4]| -> Sample { (v[..3].iter().map(|x| x.encode()).collect(), v[3].encode()) };
    match category {
        Category::RT => (1..72)
            .map(|k| {
                let d = 5.0 * k as f64;
                seq([0.0, d, 2.0 * d, 3.0 * d].map(|r| RfValue::Rotation(wrap_degrees(r))))
            })
            .collect(),
        Category::CT => {
            let mut v = Vec::new();
            for a in 0..=12i64 {
                for d in -4..=6i64 {
                    let terms = [a, a + d, a + 2 * d, a + 3 * d];
                    if d != 0 && terms.iter().all(|&t| (0..=24).contains(&t)) {
                        v.push(seq(terms.map(|t| RfValue::Count(t as usize))));
                    }
                }
            }
            v
        }
        Category::SS => {
            use SizeLabel::*;
            let ladders: [&[SizeLabel]; 2] = [
                &[Tiny, Small, Large, VeryLarge],
                &[Tiny, Small, Normal, Large, VeryLarge],
            ];
            let mut v = Vec::new();
            for l in ladders {
                for w in l.windows(4) {
                    let up = [w[0], w[1], w[2], w[3]].map(RfValue::Size);
                    let down = [w[3], w[2], w[1], w[0]].map(RfValue::Size);
                    // few distinct patterns; repeat them so epochs see each often
                    for _ in 0..10 {
                        v.push(seq(up));
                        v.push(seq(down));
                    }
                }
            }
            v
        }
        Category::OT => Vec::new(),
    }
}

fn image_samples(data: &[Labeled], only: Option<Category>) -> Vec<Sample> {
    data.iter()
        .filter(|d| only.is_none_or(|c| d.category == c))
        .map(|d| {
            let v = &d.prepared.vectors;
            (v[..QUESTION_COUNT].to_vec(), v[d.answer_index as usize - 1].clone())
        })
        .collect()
}

/// Generated OT problems as image training pairs; seeded from the training seed.
fn synthetic_image_samples(n: usize, panel_size: u32, cfg: &SolverConfig) -> Result<Vec<Sample>> {
    let spec = GeneratorSpec {
        seed: cfg.models.image_train.seed ^ 0x5eed_0f07,
        panel_size,
        ..GeneratorSpec::with_counts(0, 0, 0, 0, n)
    };
    (0..n as u64)
        .map(|k| {
            let p = generate_problem(&spec, Category::OT, &mut spec.rng_for(k))?;
            let v: Vec<Vec<f64>> = p.panels.all().iter().map(|i| panel_vector(i, cfg.grid)).collect();
            Ok((v[..QUESTION_COUNT].to_vec(), v[p.answer_index as usize - 1].clone()))
        })
        .collect()
}

/// Trains the models the configured pipeline needs.
pub fn train_models(data: &[Labeled], panel_size: u32, cfg: &SolverConfig) -> Result<(Models, TrainSummary)> {
    cfg.validate()?;
    let mc = &cfg.models;
    let mut models = Models::empty(cfg.pipeline);
    let mut summary = TrainSummary::default();
    let mut note = |name: &str, n: usize, r: TrainReport| {
        summary.samples.insert(name.to_string(), n);
        summary.reports.insert(name.to_string(), r);
    };
    let image = |only: Option<Category>| -> Result<(Seq2Seq, usize, TrainReport)> {
        let mut set = image_samples(data, only);
        set.extend(synthetic_image_samples(mc.synthetic_ot, panel_size, cfg)?);
        let mut m = Seq2Seq::new(cfg.grid * cfg.grid, mc.image_hidden, mc.image_train.seed);
        let r = train(&mut m, &set, &mc.image_train)?;
        Ok((m, set.len(), r))
    };
    match cfg.pipeline {
        Pipeline::Routed => {
            for (k, cat) in [Category::RT, Category::CT, Category::SS].into_iter().enumerate() {
                let mut set = rf_samples(data, cat);
                set.extend(synthetic_rf_samples(cat));
                let width = if cat == Category::RT { 2 } else { 1 };
                let mut m = SeqModel::new(width, mc.rf_hidden, width, mc.rf_train.seed.wrapping_add(k as u64));
                let r = train(&mut m, &set, &mc.rf_train)?;
                note(cat.name(), set.len(), r);
                match cat {
                    Category::RT => models.rt = Some(m),
                    Category::CT => models.ct = Some(m),
                    _ => models.ss = Some(m),
                }
            }
            let (m, n, r) = image(Some(Category::OT))?;
            note("image", n, r);
            models.image = Some(m);
        }
        Pipeline::ImageOnly => {
            let (m, n, r) = image(None)?;
            note("image", n, r);
            models.image = Some(m);
        }
        Pipeline::RfUnrouted => {
            let set: Vec<Sample> = data
                .iter()
                .map(|d| {
                    let kb = &d.prepared.kb;
                    (
                        kb.question().iter().map(joint_encoding).collect(),
                        joint_encoding(&kb.per_panel[d.answer_index as usize - 1]),
                    )
                })
                .collect();
            let mut m = SeqModel::new(4, mc.rf_hidden, 4, mc.rf_train.seed);
            let r = train(&mut m, &set, &mc.rf_train)?;
            note("unrouted", set.len(), r);
            models.unrouted = Some(m);
        }
    }
    Ok((models, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::argmax_option;
    use crate::features::acquire_knowledge;
    use crate::generator::worked;
    use SizeLabel::*;

    fn rf(rho: Option<f64>, total: usize, sigma: SizeLabel) -> RelationalFeatures {
        let mut chi = crate::model::empty_counts();
        chi.insert(ShapeKind::Circle, total);
        RelationalFeatures {
            rho,
            chi,
            sigma: vec![sigma],
        }
    }

    fn kb(panels: Vec<RelationalFeatures>, informative: bool) -> KnowledgeBase {
        KnowledgeBase {
            per_panel: panels,
            shapes: Default::default(),
            sigma_informative: informative,
        }
    }

    #[test]
    fn classify_worked_examples() {
        let cfg = FeatureConfig::default();
        let k = |p| acquire_knowledge(&p, &cfg).unwrap();
        assert_eq!(classify(&k(worked::rotating_triangles())), Category::RT);
        assert_eq!(classify(&k(worked::counting_circles())), Category::CT);
        assert_eq!(classify(&k(worked::shrinking_triangle())), Category::SS);
    }

    #[test]
    fn classify_else_branch() {
        let flat: Vec<_> = (0..7).map(|_| rf(None, 1, Normal)).collect();
        assert_eq!(classify(&kb(flat, true)), Category::OT);
        // varying sizes do not count when clustering was not informative
        let sizes = vec![rf(None, 1, Large), rf(None, 1, Small), rf(None, 1, Tiny)];
        let mut all = sizes.clone();
        all.extend((0..4).map(|_| rf(None, 1, Normal)));
        assert_eq!(classify(&kb(all.clone(), false)), Category::OT);
        assert_eq!(classify(&kb(all, true)), Category::SS);
    }

    #[test]
    fn classify_ignores_options() {
        let mut p: Vec<_> = (0..3).map(|_| rf(Some(0.0), 2, Normal)).collect();
        p.extend([
            rf(Some(90.0), 5, Tiny),
            rf(None, 9, Large),
            rf(Some(3.0), 2, Normal),
            rf(None, 0, Nil),
        ]);
        let a = classify(&kb(p.clone(), true));
        p[3..].reverse();
        assert_eq!(a, classify(&kb(p, true)));
        assert_eq!(a, Category::OT);
    }

    #[test]
    fn encodings_roundtrip() {
        for v in [RfValue::Rotation(270.0), RfValue::Count(8), RfValue::Size(Tiny)] {
            let cat = match v {
                RfValue::Rotation(_) => Category::RT,
                RfValue::Count(_) => Category::CT,
                RfValue::Size(_) => Category::SS,
            };
            let back = RfValue::decode(cat, &v.encode()).unwrap();
            assert!(v.distance(back) < 1e-9, "{v:?} {back:?}");
        }
    }

    #[test]
    fn arithmetic_fallback() {
        let r = |x| RfValue::Rotation(x);
        assert_eq!(extrapolate([r(0.0), r(90.0), r(180.0)]), Some(r(270.0)));
        assert_eq!(extrapolate([r(0.0), r(135.0), r(270.0)]), Some(r(45.0)));
        let c = RfValue::Count;
        assert_eq!(extrapolate([c(2), c(4), c(6)]), Some(c(8)));
        let s = RfValue::Size;
        assert_eq!(extrapolate([s(VeryLarge), s(Large), s(Small)]), Some(s(Tiny)));
    }

    #[test]
    fn matching_examples() {
        let opts: Vec<_> = [180.0, 90.0, 0.0, 270.0]
            .iter()
            .map(|&r| rf(Some(r), 1, Normal))
            .collect();
        assert_eq!(
            argmax_option(&match_rf(RfValue::Rotation(270.0), Category::RT, &opts)),
            7
        );
        let opts: Vec<_> = [6, 8, 4, 10].iter().map(|&n| rf(None, n, Normal)).collect();
        assert_eq!(argmax_option(&match_rf(RfValue::Count(8), Category::CT, &opts)), 5);
        // 7 is equally far from 6 and 8
        assert_eq!(argmax_option(&match_rf(RfValue::Count(7), Category::CT, &opts)), 4);
    }

    #[test]
    fn matching_survives_monotone_rescaling() {
        let s = [-3.0, -0.5, -0.5, -7.0];
        let t = s.map(|x: f64| 10.0 * x.exp() + 2.0);
        assert_eq!(argmax_option(&s), argmax_option(&t));
    }

    #[test]
    fn arithmetic_solver_on_worked_examples() {
        let cfg = SolverConfig {
            predictor: PredictorKind::Arithmetic,
            ..SolverConfig::default()
        };
        let models = Models::empty(Pipeline::Routed);
        for (p, cat) in [
            (worked::rotating_triangles(), Category::RT),
            (worked::counting_circles(), Category::CT),
            (worked::shrinking_triangle(), Category::SS),
        ] {
            let d = solve(&p.panels, &models, &cfg).unwrap();
            assert_eq!(d.category, cat);
            assert_eq!(d.answer_index(), p.answer_index, "{cat}");
        }
    }

    #[test]
    fn missing_model_is_config_error() {
        let models = Models::empty(Pipeline::Routed);
        let r = solve(&worked::counting_circles().panels, &models, &SolverConfig::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn panel_vector_scaling() {
        let white = RasterImage::blank(64, 64);
        assert!(panel_vector(&white, 16).iter().all(|&v| v == 0.0));
        let black = RasterImage::new(64, 64, vec![0; 64 * 64]).unwrap();
        let v = panel_vector(&black, 16);
        assert_eq!(v.len(), 256);
        assert!(v.iter().all(|&x| x == 1.0));
        assert_eq!(cosine(&v, &panel_vector(&white, 16)), 0.0);
    }

    #[test]
    fn synthetic_sets_nonempty() {
        for c in [Category::RT, Category::CT, Category::SS] {
            assert!(!synthetic_rf_samples(c).is_empty());
        }
        assert!(synthetic_rf_samples(Category::OT).is_empty());
    }
}
