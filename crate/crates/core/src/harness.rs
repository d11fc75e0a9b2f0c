//! Corpus persistence, splits, evaluation and reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use base64::Engine as _;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{option_letter, Category, PanelSet, ProblemSpace, Scene};
use crate::raster::{decode_pgm, encode_pgm};
use crate::reasoner::{prepare, solve_prepared, train_models, Labeled, Models, Prepared, SolverConfig, TrainSummary};

pub const FORMAT_VERSION: u32 = 1;

// ------------------------------------------------------------ corpus files

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemRecord {
    pub id: String,
    pub problem: ProblemSpace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub seed: Option<u64>,
    pub panel_size: u32,
    pub records: Vec<ProblemRecord>,
}

impl CorpusManifest {
    /// Wraps generated problems with ids `p0000`, `p0001`, ...
    pub fn from_problems(seed: Option<u64>, problems: Vec<ProblemSpace>) -> Result<Self> {
        let panel_size = problems
            .first()
            .map(|p| p.panels.width())
            .ok_or_else(|| Error::Data("corpus is empty".into()))?;
        let records = problems
            .into_iter()
            .enumerate()
            .map(|(i, problem)| ProblemRecord {
                id: format!("p{i:04}"),
                problem,
            })
            .collect();
        Ok(CorpusManifest {
            seed,
            panel_size,
            records,
        })
    }

    pub fn category_counts(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for r in &self.records {
            let k = r
                .problem
                .true_category
                .map_or("unknown".to_string(), |c| c.name().to_string());
            *m.entry(k).or_insert(0) += 1;
        }
        m
    }

    pub fn subset(&self, indices: &[usize]) -> CorpusManifest {
        CorpusManifest {
            seed: self.seed,
            panel_size: self.panel_size,
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }
}

/// Where panels go when saving.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanelStorage {
    /// One PGM file per panel next to the manifest.
    Sidecar,
    /// Base64 PGM inside the manifest.
    Inline,
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    format_version: u32,
    problem_count: usize,
    category_counts: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    panel_size: u32,
    problems: Vec<RecordFile>,
}

#[derive(Serialize, Deserialize)]
struct RecordFile {
    id: String,
    answer_index: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    true_category: Option<Category>,
    /// Sidecar paths relative to the manifest directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    panels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    panels_base64: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scenes: Option<Vec<Scene>>,
}

fn sidecar_dir(manifest: &Path) -> String {
    let stem = manifest
        .file_stem()
        .map_or("corpus".into(), |s| s.to_string_lossy().into_owned());
    format!("{stem}_panels")
}

/// Writes the manifest (JSON) and, for sidecar storage, one PGM per panel.
pub fn save_corpus(corpus: &CorpusManifest, path: &Path, storage: PanelStorage) -> Result<()> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let side = sidecar_dir(path);
    if storage == PanelStorage::Sidecar {
        std::fs::create_dir_all(base.join(&side))?;
    }
    let b64 = base64::engine::general_purpose::STANDARD;
    let mut problems = Vec::with_capacity(corpus.records.len());
    for r in &corpus.records {
        let mut rec = RecordFile {
            id: r.id.clone(),
            answer_index: r.problem.answer_index,
            true_category: r.problem.true_category,
            panels: None,
            panels_base64: None,
            scenes: r.problem.scenes.clone(),
        };
        let encoded = r.problem.panels.all().iter().map(encode_pgm);
        match storage {
            PanelStorage::Inline => rec.panels_base64 = Some(encoded.map(|b| b64.encode(b)).collect()),
            PanelStorage::Sidecar => {
                let mut names = Vec::new();
                for (k, bytes) in encoded.enumerate() {
                    let rel = format!("{side}/{}_{}.pgm", r.id, k + 1);
                    std::fs::write(base.join(&rel), bytes)?;
                    names.push(rel);
                }
                rec.panels = Some(names);
            }
        }
        problems.push(rec);
    }
    let file = ManifestFile {
        format_version: FORMAT_VERSION,
        problem_count: corpus.records.len(),
        category_counts: corpus.category_counts(),
        seed: corpus.seed,
        panel_size: corpus.panel_size,
        problems,
    };
    let json = serde_json::to_string_pretty(&file).map_err(|e| Error::Data(format!("manifest: {e}")))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

/// Reads and validates a manifest; errors name the offending record.
pub fn load_corpus(path: &Path) -> Result<CorpusManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let head: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    match head.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::Data(format!(
                "manifest format_version {v}, expected {FORMAT_VERSION}"
            )))
        }
        None => return Err(Error::Data("manifest lacks format_version".into())),
    }
    let file: ManifestFile =
        serde_json::from_value(head).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    if file.problem_count != file.problems.len() {
        return Err(Error::Data(format!(
            "manifest says {} problems but lists {}",
            file.problem_count,
            file.problems.len()
        )));
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let b64 = base64::engine::general_purpose::STANDARD;
    let mut records = Vec::with_capacity(file.problems.len());
    for rec in file.problems {
        let id = rec.id.clone();
        let fail = |m: String| Error::Data(format!("problem {id}: {m}"));
        let raw: Vec<Vec<u8>> = match (&rec.panels, &rec.panels_base64) {
            (Some(files), None) => files
                .iter()
                .map(|f| std::fs::read(base.join(f)).map_err(|e| fail(format!("{f}: {e}"))))
                .collect::<Result<_>>()?,
            (None, Some(enc)) => enc
                .iter()
                .map(|s| b64.decode(s).map_err(|e| fail(format!("base64: {e}"))))
                .collect::<Result<_>>()?,
            _ => return Err(fail("needs exactly one of panels / panels_base64".into())),
        };
        let panels = raw
            .iter()
            .map(|b| decode_pgm(b))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| fail(e.to_string()))?;
        let panels = PanelSet::new(panels).map_err(|e| fail(e.to_string()))?;
        if panels.width() != file.panel_size || panels.height() != file.panel_size {
            return Err(fail(format!(
                "panels are {}x{}, manifest says {}",
                panels.width(),
                panels.height(),
                file.panel_size
            )));
        }
        let problem = ProblemSpace::new(panels, rec.scenes, rec.answer_index, rec.true_category)
            .map_err(|e| fail(e.to_string()))?;
        records.push(ProblemRecord { id: rec.id, problem });
    }
    let corpus = CorpusManifest {
        seed: file.seed,
        panel_size: file.panel_size,
        records,
    };
    if corpus.category_counts() != file.category_counts {
        return Err(Error::Data("category_counts do not match the records".into()));
    }
    Ok(corpus)
}

// ------------------------------------------------------------ splits

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Set when stratification was abandoned.
    pub warning: Option<String>,
}

fn strata(corpus: &CorpusManifest) -> BTreeMap<Option<Category>, Vec<usize>> {
    let mut m: BTreeMap<Option<Category>, Vec<usize>> = BTreeMap::new();
    for (i, r) in corpus.records.iter().enumerate() {
        m.entry(r.problem.true_category).or_default().push(i);
    }
    m
}

/// Stratified train/test split; each category keeps `round(n * fraction)` for training.
pub fn split(corpus: &CorpusManifest, train_fraction: f64, seed: u64) -> Result<Split> {
    if corpus.records.is_empty() {
        return Err(Error::Config("cannot split an empty corpus".into()));
    }
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::Config("train fraction must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = strata(corpus);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    let mut warning = None;
    let buckets: Vec<Vec<usize>> = if groups.values().any(|g| g.len() < 2) {
        warning = Some("a category has fewer than 2 problems; using an unstratified split".to_string());
        vec![(0..corpus.records.len()).collect()]
    } else {
        groups.into_values().collect()
    };
    for mut g in buckets {
        g.shuffle(&mut rng);
        let k = (g.len() as f64 * train_fraction).round() as usize;
        train.extend_from_slice(&g[..k]);
        test.extend_from_slice(&g[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test, warning })
}

/// Stratified k-fold test sets: each category is shuffled and dealt round-robin.
pub fn kfold(corpus: &CorpusManifest, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || corpus.records.len() < folds {
        return Err(Error::Config(format!(
            "{folds} folds need at least that many problems (have {})",
            corpus.records.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); folds];
    let mut k = 0;
    for mut g in strata(corpus).into_values() {
        g.shuffle(&mut rng);
        for i in g {
            out[k % folds].push(i);
            k += 1;
        }
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

// ------------------------------------------------------------ evaluation

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub correct: usize,
    pub count: usize,
}

impl Score {
    pub fn accuracy(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.correct as f64 / self.count as f64
        }
    }

    fn add(&mut self, ok: bool) {
        self.count += 1;
        self.correct += ok as usize;
    }

    fn merge(&mut self, o: &Score) {
        self.count += o.count;
        self.correct += o.correct;
    }
}

/// One row of the decision table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub id: String,
    pub true_category: Category,
    pub detected_category: Category,
    pub predicted_knowledge: String,
    pub chosen: char,
    pub answer: char,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub fold: usize,
    pub accuracy: f64,
    pub count: usize,
    pub per_category: BTreeMap<Category, Score>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Rows are true categories, columns detected, both in RT, CT, SS, OT order.
    pub confusion: [[usize; 4]; 4],
    pub per_category: BTreeMap<Category, Score>,
    /// Pooled accuracy over all test problems.
    pub accuracy: f64,
    /// Fraction of panels whose detected per-kind counts equal the scene's;
    /// absent when the corpus has no scenes.
    pub detector_accuracy: Option<f64>,
    pub folds: Vec<FoldScore>,
    /// Mean of the fold accuracies (cross-validation only).
    pub fold_mean_accuracy: Option<f64>,
    pub config: SolverConfig,
    pub records: Vec<DecisionRecord>,
}

impl EvalReport {
    fn empty(cfg: &SolverConfig) -> Self {
        EvalReport {
            confusion: [[0; 4]; 4],
            per_category: Category::ALL.iter().map(|&c| (c, Score::default())).collect(),
            accuracy: 0.0,
            detector_accuracy: None,
            folds: Vec::new(),
            fold_mean_accuracy: None,
            config: cfg.clone(),
            records: Vec::new(),
        }
    }

    pub fn total(&self) -> Score {
        let mut s = Score::default();
        for v in self.per_category.values() {
            s.merge(v);
        }
        s
    }

    /// Accuracy of the classification stage.
    pub fn classification_accuracy(&self) -> f64 {
        let diag: usize = (0..4).map(|i| self.confusion[i][i]).sum();
        let all: usize = self.confusion.iter().flatten().sum();
        if all == 0 {
            0.0
        } else {
            diag as f64 / all as f64
        }
    }

    /// Every row's diagonal entry exceeds each other entry of the row.
    pub fn diagonally_dominant(&self) -> bool {
        (0..4).all(|i| (0..4).all(|j| i == j || self.confusion[i][i] > self.confusion[i][j]))
    }
}

/// Solves every prepared problem; correctness is checked only after solving.
pub fn evaluate_prepared(
    records: &[&ProblemRecord],
    prepared: &[&Prepared],
    models: &Models,
    cfg: &SolverConfig,
) -> Result<EvalReport> {
    let mut report = EvalReport::empty(cfg);
    let mut panels = Score::default();
    let mut have_scenes = false;
    for (r, p) in records.iter().zip(prepared) {
        let decision = solve_prepared(p, models, cfg)?;
        let truth = r
            .problem
            .true_category
            .ok_or_else(|| Error::Data(format!("problem {} has no true category", r.id)))?;
        let chosen = decision.answer_index();
        let correct = chosen == r.problem.answer_index;
        report.confusion[truth.index()][decision.category.index()] += 1;
        report.per_category.get_mut(&truth).unwrap().add(correct);
        report.records.push(DecisionRecord {
            id: r.id.clone(),
            true_category: truth,
            detected_category: decision.category,
            predicted_knowledge: decision.knowledge,
            chosen: option_letter(chosen),
            answer: r.problem.answer_letter(),
            correct,
        });
        if let Some(scenes) = &r.problem.scenes {
            have_scenes = true;
            for (f, s) in p.kb.per_panel.iter().zip(scenes) {
                panels.add(f.chi == s.counts());
            }
        }
    }
    report.accuracy = report.total().accuracy();
    report.detector_accuracy = have_scenes.then(|| panels.accuracy());
    Ok(report)
}

pub fn prepare_all(corpus: &CorpusManifest, cfg: &SolverConfig) -> Result<Vec<Prepared>> {
    corpus
        .records
        .iter()
        .map(|r| prepare(&r.problem.panels, cfg).map_err(|e| Error::Data(format!("problem {}: {e}", r.id))))
        .collect()
}

/// Evaluates trained models on a whole corpus.
pub fn evaluate(corpus: &CorpusManifest, models: &Models, cfg: &SolverConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let prepared = prepare_all(corpus, cfg)?;
    let recs: Vec<&ProblemRecord> = corpus.records.iter().collect();
    let preps: Vec<&Prepared> = prepared.iter().collect();
    evaluate_prepared(&recs, &preps, models, cfg)
}

fn labeled<'a>(corpus: &'a CorpusManifest, prepared: &'a [Prepared], idx: &[usize]) -> Result<Vec<Labeled<'a>>> {
    idx.iter()
        .map(|&i| {
            let r = &corpus.records[i];
            Ok(Labeled {
                prepared: &prepared[i],
                answer_index: r.problem.answer_index,
                category: r
                    .problem
                    .true_category
                    .ok_or_else(|| Error::Data(format!("problem {} has no true category", r.id)))?,
            })
        })
        .collect()
}

/// Trains on the given problems of a corpus.
pub fn train_on(corpus: &CorpusManifest, indices: &[usize], cfg: &SolverConfig) -> Result<(Models, TrainSummary)> {
    cfg.validate()?;
    let prepared = prepare_all(corpus, cfg)?;
    train_models(&labeled(corpus, &prepared, indices)?, corpus.panel_size, cfg)
}

/// Stratified k-fold cross-validation: train on k-1 folds, test on the rest.
pub fn cross_validate(corpus: &CorpusManifest, folds: usize, seed: u64, cfg: &SolverConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let test_sets = kfold(corpus, folds, seed)?;
    let prepared = prepare_all(corpus, cfg)?;
    let mut report = EvalReport::empty(cfg);
    let mut panels = (0.0, 0usize);
    for (k, test) in test_sets.iter().enumerate() {
        let train: Vec<usize> = (0..corpus.records.len())
            .filter(|i| test.binary_search(i).is_err())
            .collect();
        let (models, _) = train_models(&labeled(corpus, &prepared, &train)?, corpus.panel_size, cfg)?;
        let recs: Vec<&ProblemRecord> = test.iter().map(|&i| &corpus.records[i]).collect();
        let preps: Vec<&Prepared> = test.iter().map(|&i| &prepared[i]).collect();
        let fold = evaluate_prepared(&recs, &preps, &models, cfg)?;
        for i in 0..4 {
            for j in 0..4 {
                report.confusion[i][j] += fold.confusion[i][j];
            }
        }
        for (c, s) in &fold.per_category {
            report.per_category.get_mut(c).unwrap().merge(s);
        }
        if let Some(d) = fold.detector_accuracy {
            panels.0 += d * (recs.len() * 7) as f64;
            panels.1 += recs.len() * 7;
        }
        report.folds.push(FoldScore {
            fold: k,
            accuracy: fold.accuracy,
            count: recs.len(),
            per_category: fold.per_category,
        });
        report.records.extend(fold.records);
    }
    report.accuracy = report.total().accuracy();
    report.detector_accuracy = (panels.1 > 0).then(|| panels.0 / panels.1 as f64);
    report.fold_mean_accuracy = Some(report.folds.iter().map(|f| f.accuracy).sum::<f64>() / folds as f64);
    Ok(report)
}

// ------------------------------------------------------------ report formats

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
    Csv,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "text" => Some(ReportFormat::Text),
            "json" => Some(ReportFormat::Json),
            "csv" => Some(ReportFormat::Csv),
            _ => None,
        }
    }
}

pub fn render_report(r: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(r).expect("report serializes") + "\n",
        ReportFormat::Csv => render_csv(r),
        ReportFormat::Text => render_text(r),
    }
}

fn render_csv(r: &EvalReport) -> String {
    let mut s = String::from("category,accuracy,count\n");
    for c in Category::ALL {
        let sc = r.per_category[&c];
        let _ = writeln!(s, "{},{:.4},{}", c.name(), sc.accuracy(), sc.count);
    }
    let _ = writeln!(s, "Average,{:.4},{}", r.accuracy, r.total().count);
    s.push_str("\nconfusion,RT,CT,SS,OT\n");
    for c in Category::ALL {
        let row = r.confusion[c.index()];
        let _ = writeln!(s, "{},{},{},{},{}", c.name(), row[0], row[1], row[2], row[3]);
    }
    s
}

fn render_text(r: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<10}{:>10}{:>8}", "category", "accuracy", "count");
    for c in Category::ALL {
        let sc = r.per_category[&c];
        let _ = writeln!(s, "{:<10}{:>10.4}{:>8}", c.name(), sc.accuracy(), sc.count);
    }
    let _ = writeln!(s, "{:<10}{:>10.4}{:>8}", "Average", r.accuracy, r.total().count);
    let _ = writeln!(s, "\nclassification (rows true, columns detected)");
    let _ = writeln!(s, "{:<6}{:>6}{:>6}{:>6}{:>6}", "", "RT", "CT", "SS", "OT");
    for c in Category::ALL {
        let row = r.confusion[c.index()];
        let _ = writeln!(s, "{:<6}{:>6}{:>6}{:>6}{:>6}", c.name(), row[0], row[1], row[2], row[3]);
    }
    let _ = writeln!(s, "classification accuracy {:.4}", r.classification_accuracy());
    if let Some(d) = r.detector_accuracy {
        let _ = writeln!(s, "detector accuracy {d:.4}");
    }
    if !r.folds.is_empty() {
        let _ = writeln!(s, "\nfold  accuracy  count");
        for f in &r.folds {
            let _ = writeln!(s, "{:<6}{:>8.4}{:>7}", f.fold, f.accuracy, f.count);
        }
        if let Some(m) = r.fold_mean_accuracy {
            let _ = writeln!(s, "mean of folds {m:.4}");
        }
    }
    s
}

/// Sidecar directory name used for a manifest path.
pub fn sidecar_path(manifest: &Path) -> PathBuf {
    manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
        .join(sidecar_dir(manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate_corpus, GeneratorSpec};
    use crate::reasoner::{Pipeline, PredictorKind};

    fn corpus(n: usize) -> CorpusManifest {
        let spec = GeneratorSpec::with_counts(3, n, n, n, n);
        CorpusManifest::from_problems(Some(3), generate_corpus(&spec).unwrap()).unwrap()
    }

    #[test]
    fn roundtrip_both_storages() {
        let c = corpus(3);
        let dir = tempfile::tempdir().unwrap();
        for (name, storage) in [
            ("side.json", PanelStorage::Sidecar),
            ("inline.json", PanelStorage::Inline),
        ] {
            let path = dir.path().join(name);
            save_corpus(&c, &path, storage).unwrap();
            assert_eq!(load_corpus(&path).unwrap(), c);
        }
        assert!(sidecar_path(&dir.path().join("side.json")).is_dir());
    }

    #[test]
    fn missing_panel_names_problem() {
        let c = corpus(1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        save_corpus(&c, &path, PanelStorage::Sidecar).unwrap();
        std::fs::remove_file(sidecar_path(&path).join("p0002_5.pgm")).unwrap();
        let e = load_corpus(&path).unwrap_err().to_string();
        assert!(e.contains("p0002"), "{e}");
    }

    #[test]
    fn bad_manifests_rejected() {
        let c = corpus(1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        save_corpus(&c, &path, PanelStorage::Inline).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let count = text.replacen("\"problem_count\": 4", "\"problem_count\": 5", 1);
        std::fs::write(&path, count).unwrap();
        assert!(matches!(load_corpus(&path), Err(Error::Data(_))));
        let version = text.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
        std::fs::write(&path, version).unwrap();
        assert!(load_corpus(&path).unwrap_err().to_string().contains("format_version"));
        let corrupt = text.replacen("\"UDUK", "\"UDAK", 1);
        std::fs::write(&path, corrupt).unwrap();
        assert!(load_corpus(&path).is_err());
    }

    #[test]
    fn split_is_stratified_partition() {
        let c = corpus(50);
        let s = split(&c, 0.7, 9).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (140, 60));
        assert!(s.warning.is_none());
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..200).collect::<Vec<_>>());
        for cat in Category::ALL {
            let n = s
                .train
                .iter()
                .filter(|&&i| c.records[i].problem.true_category == Some(cat))
                .count();
            assert!((34..=36).contains(&n), "{cat}: {n}");
        }
        assert_eq!(split(&c, 0.7, 9).unwrap(), s);
    }

    #[test]
    fn split_falls_back_when_thin() {
        let mut c = corpus(2);
        c.records.truncate(7); // one OT left
        let s = split(&c, 0.7, 1).unwrap();
        assert!(s.warning.is_some());
        assert_eq!(s.train.len() + s.test.len(), 7);
    }

    #[test]
    fn kfold_partitions() {
        let c = corpus(50);
        let f = kfold(&c, 10, 4).unwrap();
        assert!(f.iter().all(|t| t.len() == 20));
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        assert_eq!(all, (0..200).collect::<Vec<_>>());
        assert!(kfold(&corpus(1), 10, 4).is_err());
    }

    #[test]
    fn arithmetic_solver_report_invariants() {
        let c = corpus(4);
        let cfg = SolverConfig {
            predictor: PredictorKind::Arithmetic,
            ..SolverConfig::default()
        };
        let mut models = crate::reasoner::train_models(
            &[],
            c.panel_size,
            &SolverConfig {
                pipeline: Pipeline::ImageOnly,
                models: crate::reasoner::ModelConfig {
                    synthetic_ot: 8,
                    image_hidden: 4,
                    ..Default::default()
                },
                ..cfg.clone()
            },
        )
        .unwrap()
        .0;
        models.pipeline = Pipeline::Routed;
        let r = evaluate(&c, &models, &cfg).unwrap();
        for cat in Category::ALL {
            let row: usize = r.confusion[cat.index()].iter().sum();
            assert_eq!(row, r.per_category[&cat].count);
        }
        let t = r.total();
        assert_eq!(t.count, 16);
        let weighted: f64 = r
            .per_category
            .values()
            .map(|s| s.accuracy() * s.count as f64)
            .sum::<f64>()
            / 16.0;
        assert!((weighted - r.accuracy).abs() < 1e-12);
        assert_eq!(r.per_category[&Category::CT].correct, 4);
        let csv = render_report(&r, ReportFormat::Csv);
        assert!(csv.starts_with("category,accuracy,count\nRT,"));
        assert!(csv.contains("\nAverage,"));
        assert!(csv.contains("\nconfusion,RT,CT,SS,OT\n"));
        let back: EvalReport = serde_json::from_str(&render_report(&r, ReportFormat::Json)).unwrap();
        assert_eq!(back, r);
    }
}
