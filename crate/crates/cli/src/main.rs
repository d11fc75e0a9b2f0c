use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use drsolve::generator::{generate_corpus, GeneratorSpec};
use drsolve::harness::{
    cross_validate, evaluate, load_corpus, render_report, save_corpus, split, CorpusManifest, PanelStorage,
    ReportFormat,
};
use drsolve::model::{option_letter, PanelSet};
use drsolve::raster::decode_pgm;
use drsolve::reasoner::{parse_pipeline, solve, train_models, Labeled, Models, SolverConfig};
use drsolve::seqnet::random_gradient_check;
use drsolve::Error;

/// Knowledge-based solver for 4x1 diagrammatic reasoning problems.
#[derive(Parser)]
#[command(name = "drsolve", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Seed for generation, splits, folds and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file with `generator` and/or `solver` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path (manifest, checkpoint directory or report file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

impl Format {
    fn report(self) -> ReportFormat {
        match self {
            Format::Text => ReportFormat::Text,
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    Generate {
        #[arg(long, default_value_t = 50)]
        rt: usize,
        #[arg(long, default_value_t = 50)]
        ct: usize,
        #[arg(long, default_value_t = 50)]
        ss: usize,
        #[arg(long, default_value_t = 50)]
        ot: usize,
        #[arg(long)]
        panel_size: Option<u32>,
        /// Embed panels as base64 instead of sidecar PGM files.
        #[arg(long)]
        inline: bool,
    },
    /// Solve one problem and print its decision record.
    Solve {
        #[arg(long)]
        models: PathBuf,
        /// Corpus manifest holding the problem.
        #[arg(long, requires = "id", conflicts_with = "panels")]
        corpus: Option<PathBuf>,
        #[arg(long)]
        id: Option<String>,
        /// Seven PGM panels: three question panels then options A-D.
        #[arg(long, num_args = 7)]
        panels: Option<Vec<PathBuf>>,
    },
    /// Train checkpoints on a corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Train on this stratified fraction; the held-out ids are saved with the models.
        #[arg(long, default_value_t = 1.0)]
        train_fraction: f64,
        /// routed, image-only or rf-unrouted.
        #[arg(long)]
        pipeline: Option<String>,
    },
    /// Evaluate checkpoints on a corpus.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        models: PathBuf,
        /// Use every problem even when the models recorded a held-out split.
        #[arg(long)]
        all: bool,
    },
    /// Stratified k-fold cross-validation.
    Xval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long)]
        pipeline: Option<String>,
    },
    /// Compare LSTM gradients with central differences.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        trials: u64,
    },
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    generator: Option<GeneratorSpec>,
    solver: Option<SolverConfig>,
}

/// Records which corpus problems were held out at training time.
#[derive(Serialize, Deserialize)]
struct SplitFile {
    train_fraction: f64,
    seed: u64,
    train: Vec<String>,
    test: Vec<String>,
}

const SPLIT_FILE: &str = "split.json";
const GRADCHECK_TOLERANCE: f64 = 1e-4;

enum Failure {
    Usage(String),
    Data(String),
    Divergence(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Usage(m),
            Error::Divergence(m) => Failure::Divergence(m),
            Error::Data(m) => Failure::Data(m),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let first = e
                .to_string()
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ")
                .to_string();
            eprintln!("drsolve-error: usage: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, code, msg) = match f {
                Failure::Usage(m) => ("usage", 2, m),
                Failure::Data(m) => ("data", 3, m),
                Failure::Divergence(m) => ("divergence", 4, m),
                Failure::Check(m) => ("check", 1, m),
            };
            eprintln!("drsolve-error: {kind}: {}", msg.replace('\n', " "));
            ExitCode::from(code)
        }
    }
}

fn read_config(path: &Option<PathBuf>) -> Result<ConfigFile, Failure> {
    let Some(p) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn solver_config(file: &ConfigFile, seed: Option<u64>, pipeline: &Option<String>) -> Result<SolverConfig, Failure> {
    let mut cfg = file.solver.clone().unwrap_or_default();
    if let Some(s) = seed {
        cfg.models.rf_train.seed = s;
        cfg.models.image_train.seed = s;
    }
    if let Some(p) = pipeline {
        cfg.pipeline = parse_pipeline(p).ok_or_else(|| Failure::Usage(format!("unknown pipeline {p}")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let Common {
        seed,
        config,
        out,
        format,
    } = cli.common;
    let file = read_config(&config)?;
    match cli.command {
        Command::Generate {
            rt,
            ct,
            ss,
            ot,
            panel_size,
            inline,
        } => {
            let mut spec = file.generator.clone().unwrap_or_default();
            let base = GeneratorSpec::with_counts(seed.unwrap_or(spec.seed), rt, ct, ss, ot);
            spec.seed = base.seed;
            spec.counts = base.counts;
            if let Some(n) = panel_size {
                spec.panel_size = n;
            }
            let corpus = CorpusManifest::from_problems(Some(spec.seed), generate_corpus(&spec)?)?;
            let path = out.unwrap_or_else(|| PathBuf::from("corpus.json"));
            let storage = if inline {
                PanelStorage::Inline
            } else {
                PanelStorage::Sidecar
            };
            save_corpus(&corpus, &path, storage)?;
            println!("wrote {} problems to {}", corpus.records.len(), path.display());
        }
        Command::Solve {
            models,
            corpus,
            id,
            panels,
        } => {
            let cfg = solver_config(&file, None, &None)?;
            let models = Models::load(&models)?;
            let (label, panels) = match (corpus, id, panels) {
                (Some(c), Some(id), None) => {
                    let corpus = load_corpus(&c)?;
                    let rec = corpus
                        .records
                        .into_iter()
                        .find(|r| r.id == id)
                        .ok_or_else(|| Failure::Usage(format!("no problem {id} in {}", c.display())))?;
                    (rec.id, rec.problem.panels)
                }
                (None, None, Some(files)) => {
                    let imgs = files
                        .iter()
                        .map(|f| {
                            let bytes = std::fs::read(f).map_err(|e| Failure::Data(format!("{}: {e}", f.display())))?;
                            decode_pgm(&bytes).map_err(|e| Failure::Data(format!("{}: {e}", f.display())))
                        })
                        .collect::<Result<Vec<_>, Failure>>()?;
                    ("panels".to_string(), PanelSet::new(imgs)?)
                }
                _ => return Err(Failure::Usage("give --corpus with --id, or --panels".into())),
            };
            let d = solve(&panels, &models, &cfg)?;
            let text = match format {
                Format::Json => {
                    serde_json::to_string_pretty(&serde_json::json!({
                        "id": label,
                        "category": d.category,
                        "knowledge": d.knowledge,
                        "chosen": option_letter(d.answer_index()).to_string(),
                        "scores": d.prediction.score_per_option,
                    }))
                    .expect("json")
                        + "\n"
                }
                Format::Csv => format!(
                    "id,category,knowledge,chosen\n{label},{},{},{}\n",
                    d.category,
                    d.knowledge,
                    option_letter(d.answer_index())
                ),
                Format::Text => format!(
                    "{label}: category {} predicted {} chose {}\n",
                    d.category,
                    d.knowledge,
                    option_letter(d.answer_index())
                ),
            };
            emit(&out, &text)?;
        }
        Command::Train {
            corpus: path,
            train_fraction,
            pipeline,
        } => {
            let cfg = solver_config(&file, seed, &pipeline)?;
            let corpus = load_corpus(&path)?;
            let split_seed = seed.unwrap_or(0);
            let s = split(&corpus, train_fraction, split_seed)?;
            if let Some(w) = &s.warning {
                eprintln!("warning: {w}");
            }
            let prepared = drsolve::harness::prepare_all(&corpus, &cfg)?;
            let data = s
                .train
                .iter()
                .map(|&i| {
                    let r = &corpus.records[i];
                    let category = r
                        .problem
                        .true_category
                        .ok_or_else(|| Failure::Data(format!("problem {} has no true category", r.id)))?;
                    Ok(Labeled {
                        prepared: &prepared[i],
                        answer_index: r.problem.answer_index,
                        category,
                    })
                })
                .collect::<Result<Vec<_>, Failure>>()?;
            let (models, summary) = train_models(&data, corpus.panel_size, &cfg)?;
            let dir = out.unwrap_or_else(|| PathBuf::from("models"));
            models.save(&dir)?;
            let ids = |v: &[usize]| v.iter().map(|&i| corpus.records[i].id.clone()).collect();
            let record = SplitFile {
                train_fraction,
                seed: split_seed,
                train: ids(&s.train),
                test: ids(&s.test),
            };
            std::fs::write(
                dir.join(SPLIT_FILE),
                serde_json::to_string_pretty(&record).expect("json") + "\n",
            )?;
            for (name, r) in &summary.reports {
                println!(
                    "{name}: {} samples, final loss {:.6}",
                    summary.samples[name],
                    r.final_loss()
                );
            }
            println!("saved models to {}", dir.display());
        }
        Command::Evaluate { corpus, models, all } => {
            let cfg = solver_config(&file, None, &None)?;
            let mut corpus = load_corpus(&corpus)?;
            let loaded = Models::load(&models)?;
            if !all {
                restrict_to_test(&mut corpus, &models)?;
            }
            let mut cfg = cfg;
            cfg.pipeline = loaded.pipeline;
            let report = evaluate(&corpus, &loaded, &cfg)?;
            emit(&out, &render_report(&report, format.report()))?;
        }
        Command::Xval {
            corpus,
            folds,
            pipeline,
        } => {
            let cfg = solver_config(&file, seed, &pipeline)?;
            let corpus = load_corpus(&corpus)?;
            let report = cross_validate(&corpus, folds, seed.unwrap_or(0), &cfg)?;
            emit(&out, &render_report(&report, format.report()))?;
        }
        Command::Gradcheck { trials } => {
            let base = seed.unwrap_or(1);
            let mut worst: f64 = 0.0;
            let mut lines = String::new();
            for t in 0..trials {
                let (i, h, len) = (1 + (t % 3) as usize, 2 + (t % 4) as usize, 2 + (t % 5) as usize);
                let e = random_gradient_check(i, h, len, base.wrapping_add(t))?;
                lines.push_str(&format!(
                    "trial {t} input {i} hidden {h} length {len} max_rel_error {e:.3e}\n"
                ));
                worst = worst.max(e);
            }
            lines.push_str(&format!("max_rel_error {worst:.3e}\n"));
            emit(&out, &lines)?;
            if !(worst < GRADCHECK_TOLERANCE) {
                return Err(Failure::Check(format!(
                    "max relative error {worst:.3e} exceeds {GRADCHECK_TOLERANCE:e}"
                )));
            }
        }
    }
    Ok(())
}

fn restrict_to_test(corpus: &mut CorpusManifest, models: &Path) -> Result<(), Failure> {
    let path = models.join(SPLIT_FILE);
    if !path.exists() {
        return Ok(());
    }
    let s: SplitFile = serde_json::from_str(&std::fs::read_to_string(&path)?)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    if s.test.is_empty() {
        return Ok(());
    }
    let keep: std::collections::BTreeSet<&String> = s.test.iter().collect();
    corpus.records.retain(|r| keep.contains(&r.id));
    if corpus.records.len() != keep.len() {
        return Err(Failure::Data(
            "corpus lacks some held-out problems recorded with the models".into(),
        ));
    }
    Ok(())
}
