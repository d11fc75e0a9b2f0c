//! Browser bindings: generate a problem, draw its panels, plot the rotation
//! similarity curve and solve it with the arithmetic predictor.

use serde_json::json;
use wasm_bindgen::prelude::*;

use drsolve::features::{knowledge_record, FeatureConfig, RotationOrbit};
use drsolve::generator::{generate_problem, GeneratorSpec};
use drsolve::model::{option_letter, Category, ProblemSpace};
use drsolve::reasoner::{classify, predict_category1, prepare, Models, Pipeline, PredictorKind, SolverConfig};

#[wasm_bindgen]
pub struct Problem {
    inner: ProblemSpace,
}

/// Generates one problem of `category` (RT, CT, SS or OT).
#[wasm_bindgen]
pub fn generate(category: &str, seed: u32) -> Result<Problem, JsError> {
    Problem::try_generate(category, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
impl Problem {
    pub fn panel_size(&self) -> u32 {
        self.inner.panels.width()
    }

    pub fn category(&self) -> String {
        self.inner.true_category.map_or("?".into(), |c| c.name().into())
    }

    /// The correct option letter.
    pub fn answer(&self) -> String {
        self.inner.answer_letter().to_string()
    }

    /// RGBA bytes of panel `index` (1..=7), ready for `ImageData`.
    pub fn panel_rgba(&self, index: usize) -> Result<Vec<u8>, JsError> {
        self.try_panel_rgba(index).map_err(|e| JsError::new(&e))
    }

    /// Similarity of panel `index` to panel 1 rotated by each whole degree.
    pub fn rotation_curve(&self, index: usize) -> Result<Vec<f64>, JsError> {
        self.try_rotation_curve(index).map_err(|e| JsError::new(&e))
    }

    /// Angle the rotation search settles on, ties resolved as the solver does.
    pub fn best_rotation(&self, index: usize) -> Result<f64, JsError> {
        self.try_best_rotation(index).map_err(|e| JsError::new(&e))
    }

    /// Decision record as JSON.
    pub fn solve(&self) -> Result<String, JsError> {
        self.try_solve().map_err(|e| JsError::new(&e))
    }
}

impl Problem {
    pub fn try_generate(category: &str, seed: u32) -> Result<Problem, String> {
        let cat = Category::parse(category).ok_or_else(|| format!("unknown category {category}"))?;
        let spec = GeneratorSpec {
            seed: seed as u64,
            ..GeneratorSpec::default()
        };
        let mut rng = spec.rng_for(cat.index() as u64);
        let inner = generate_problem(&spec, cat, &mut rng).map_err(|e| e.to_string())?;
        Ok(Problem { inner })
    }

    fn check(index: usize) -> Result<(), String> {
        if (1..=7).contains(&index) {
            Ok(())
        } else {
            Err(format!("panel {index} not in 1..=7"))
        }
    }

    pub fn try_panel_rgba(&self, index: usize) -> Result<Vec<u8>, String> {
        Self::check(index)?;
        Ok(self
            .inner
            .panels
            .panel(index)
            .pixels()
            .iter()
            .flat_map(|&g| [g, g, g, 255])
            .collect())
    }

    pub fn try_rotation_curve(&self, index: usize) -> Result<Vec<f64>, String> {
        Self::check(index)?;
        let orbit = RotationOrbit::new(self.inner.panels.panel(1));
        let scores = orbit
            .scores(self.inner.panels.panel(index))
            .map_err(|e| e.to_string())?;
        Ok(scores.into_iter().map(|s| s.value()).collect())
    }

    pub fn try_best_rotation(&self, index: usize) -> Result<f64, String> {
        Self::check(index)?;
        let orbit = RotationOrbit::new(self.inner.panels.panel(1));
        let threshold = FeatureConfig::default().rotation_threshold;
        let r = orbit
            .search(self.inner.panels.panel(index), threshold)
            .map_err(|e| e.to_string())?;
        Ok(r.best_theta)
    }

    /// Relational categories are solved by extrapolation; OT needs a trained
    /// encoder/decoder, so only its detected category is reported.
    pub fn try_solve(&self) -> Result<String, String> {
        let cfg = SolverConfig {
            predictor: PredictorKind::Arithmetic,
            ..SolverConfig::default()
        };
        let prepared = prepare(&self.inner.panels, &cfg).map_err(|e| e.to_string())?;
        let category = classify(&prepared.kb);
        let knowledge: Vec<String> = knowledge_record(&prepared.kb).lines().map(String::from).collect();
        let mut record = json!({
            "category": category.name(),
            "knowledge_base": knowledge,
            "answer": self.answer(),
        });
        if category.is_category1() {
            let models = Models {
                pipeline: Pipeline::Routed,
                rt: None,
                ct: None,
                ss: None,
                image: None,
                unrouted: None,
            };
            let (pred, value) = predict_category1(&prepared.kb, category, &models, &cfg).map_err(|e| e.to_string())?;
            record["predicted"] = json!(value.to_string());
            record["chosen"] = json!(option_letter(pred.chosen_option).to_string());
            record["scores"] = json!(pred
                .score_per_option
                .map(|s| if s.is_finite() { Some(s) } else { None }));
        } else {
            record["chosen"] = serde_json::Value::Null;
        }
        Ok(record.to_string())
    }
}
