//! The `mealdmd` command line: `synth | train | detect | eval`.
//!
//! Configuration precedence, lowest to highest: built-in defaults, the
//! JSON file given by `--config` (or the `MEALDMD_CONFIG` environment
//! variable), then individual flags, which mirror the [`RunConfig`] field
//! names. Exit codes: 0 success, 1 invalid input or configuration, 2 I/O.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::LogRegModel;
use crate::config::{ConfigError, EmissionKind, RunConfig, VERSION};
use crate::eval::FprUnit;
use crate::features::{FeatureMode, TrainingSet};
use crate::ingest::{load_series, parse_row, GridSeries, IngestError};
use crate::pipeline::{detect_series, evaluate_corpus, train_corpus, EvalReport, PipelineError, StreamingDetector, Subject};
use crate::synth::{generate_corpus, CorpusConfig, JitterConfig, SubjectParams, SynthError};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "MEALDMD_CONFIG";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Io { .. } => 2,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { path, source } => Self::Io {
                path: path.into(),
                source,
            },
            other => Self::Validation(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        Self::Validation(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        Self::Validation(e.to_string())
    }
}

fn ingest_error(path: &Path, e: IngestError) -> CliError {
    match e {
        IngestError::Csv(ce) if ce.is_io_error() => match ce.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            _ => unreachable!("checked is_io_error"),
        },
        other => CliError::Validation(format!("{}: {other}", path.display())),
    }
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Writes via a temporary sibling and a rename so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn header_comment(cfg: &RunConfig) -> String {
    format!("{VERSION} config={}", cfg.to_json())
}

fn to_json_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output types serialize");
    s.push('\n');
    s
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSubject {
    pub id: usize,
    pub file: String,
    pub seed: u64,
    pub params: SubjectParams,
    pub meals: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: RunConfig,
    pub corpus: CorpusConfig,
    pub subjects: Vec<ManifestSubject>,
    pub split: Split,
}

/// First `⌈fraction · n⌉` subjects train (at least one, leaving at least
/// one for testing when `n > 1`); the rest test.
pub fn split_subjects(ids: &[usize], fraction: f64) -> Split {
    let n = ids.len();
    let k = ((n as f64 * fraction).ceil() as usize).clamp(1.min(n), n.saturating_sub(1).max(1.min(n)));
    Split {
        train: ids[..k].to_vec(),
        test: ids[k..].to_vec(),
    }
}

pub fn subject_file_name(id: usize) -> String {
    format!("subject_{id:03}.csv")
}

fn series_csv(series: &GridSeries, cfg: &RunConfig) -> String {
    format!("# {}\n{}", header_comment(cfg), series.to_csv())
}

/// Generates a synthetic corpus: one CSV per subject plus `manifest.json`.
pub fn cmd_synth(out_dir: &Path, corpus: &CorpusConfig, cfg: &RunConfig) -> Result<Manifest, CliError> {
    let subjects = generate_corpus(corpus)?;
    let mut entries = Vec::with_capacity(subjects.len());
    for s in &subjects {
        let file = subject_file_name(s.id);
        write_atomic(&out_dir.join(&file), &series_csv(&s.series, cfg))?;
        entries.push(ManifestSubject {
            id: s.id,
            file,
            seed: s.seed,
            params: s.params,
            meals: s.series.meals.len(),
            samples: s.series.len(),
        });
    }
    let ids: Vec<usize> = entries.iter().map(|e| e.id).collect();
    let manifest = Manifest {
        version: VERSION.to_string(),
        config: cfg.clone(),
        corpus: *corpus,
        subjects: entries,
        split: split_subjects(&ids, cfg.train_fraction),
    };
    write_atomic(&out_dir.join(MANIFEST_FILE), &to_json_pretty(&manifest))?;
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubjectSelection {
    Train,
    Test,
    All,
}

/// Loads the manifest and the selected subjects' series.
pub fn load_corpus(dir: &Path, which: SubjectSelection, cfg: &RunConfig) -> Result<Vec<(usize, GridSeries)>, CliError> {
    let manifest: Manifest = parse_json(&dir.join(MANIFEST_FILE))?;
    let ids: Vec<usize> = match which {
        SubjectSelection::Train => manifest.split.train.clone(),
        SubjectSelection::Test => manifest.split.test.clone(),
        SubjectSelection::All => manifest.subjects.iter().map(|s| s.id).collect(),
    };
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let entry = manifest
            .subjects
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| CliError::Validation(format!("manifest split names unknown subject {id}")))?;
        let path = dir.join(&entry.file);
        let file = std::fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
        let series = load_series(std::io::BufReader::new(file), cfg.step_minutes, cfg.max_gap_minutes)
            .map_err(|e| ingest_error(&path, e))?;
        out.push((id, series));
    }
    if out.is_empty() {
        return Err(CliError::Validation(format!("{}: no subjects selected", dir.display())));
    }
    Ok(out)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(flatten)]
    pub model: LogRegModel,
    pub version: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub version: String,
    pub config: RunConfig,
    pub samples: usize,
    pub positives: usize,
    pub negatives: usize,
    pub skipped_meals: usize,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub weights: Vec<f64>,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn load_model(path: &Path) -> Result<ModelFile, CliError> {
    parse_json(path)
}

/// Trains on the corpus and writes the model, a report and the training
/// set next to it (`<stem>.report.json`, `<stem>.trainset.csv`).
pub fn cmd_train(corpus_dir: &Path, model_out: &Path, which: SubjectSelection, cfg: &RunConfig) -> Result<TrainReport, CliError> {
    let corpus = load_corpus(corpus_dir, which, cfg)?;
    let subjects: Vec<Subject<'_>> = corpus.iter().map(|(id, s)| Subject { id: *id, series: s }).collect();
    let (model, set) = train_corpus(&subjects, cfg)?;
    let report = train_report(&model, &set, cfg);
    let file = ModelFile {
        model,
        version: VERSION.to_string(),
        config: cfg.clone(),
    };
    write_atomic(model_out, &to_json_pretty(&file))?;
    write_atomic(&sibling(model_out, ".report.json"), &to_json_pretty(&report))?;
    write_atomic(
        &sibling(model_out, ".trainset.csv"),
        &set.to_csv(&cfg.featurizer(), Some(&header_comment(cfg))),
    )?;
    Ok(report)
}

fn train_report(model: &LogRegModel, set: &TrainingSet, cfg: &RunConfig) -> TrainReport {
    TrainReport {
        version: VERSION.to_string(),
        config: cfg.clone(),
        samples: set.samples.len(),
        positives: set.positives(),
        negatives: set.negatives(),
        skipped_meals: set.skipped_meals,
        iterations: model.iterations,
        gradient_norm: model.gradient_norm,
        weights: model.weights.clone(),
    }
}

// ---------------------------------------------------------------- detect

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: usize,
    pub timestamp: i64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectOutput {
    pub version: String,
    pub config: RunConfig,
    pub input: String,
    pub events: Vec<EventRecord>,
}

/// Output paths for batch detection; `None` skips that output.
#[derive(Debug, Clone, Default)]
pub struct DetectPaths {
    pub events: Option<PathBuf>,
    pub lambda: Option<PathBuf>,
    pub dmd_jsonl: Option<PathBuf>,
}

fn lambda_csv(rows: &[(usize, i64, f64, Option<f64>)], cfg: &RunConfig) -> String {
    let mut out = format!("# {}\nt,timestamp,lambda_max,probability\n", header_comment(cfg));
    for (t, ts, l, p) in rows {
        let _ = write!(out, "{t},{ts},{l},");
        if let Some(p) = p {
            let _ = write!(out, "{p}");
        }
        out.push('\n');
    }
    out
}

/// Batch detection on one CSV file.
pub fn cmd_detect(input: &Path, model_path: &Path, paths: &DetectPaths, cfg: &RunConfig) -> Result<DetectOutput, CliError> {
    let model = load_model(model_path)?.model;
    let file = std::fs::File::open(input).map_err(|e| CliError::io(input, e))?;
    let series = load_series(std::io::BufReader::new(file), cfg.step_minutes, cfg.max_gap_minutes)
        .map_err(|e| ingest_error(input, e))?;
    let det = detect_series(&series, &model, cfg)?;
    let output = DetectOutput {
        version: VERSION.to_string(),
        config: cfg.clone(),
        input: input.display().to_string(),
        events: det
            .events
            .iter()
            .map(|e| EventRecord {
                t: e.time,
                timestamp: series.timestamp(e.time),
                probability: e.probability,
            })
            .collect(),
    };
    if let Some(p) = &paths.events {
        write_atomic(p, &to_json_pretty(&output))?;
    }
    if let Some(p) = &paths.lambda {
        let probs: std::collections::HashMap<usize, f64> = det.scores.iter().copied().collect();
        let rows: Vec<(usize, i64, f64, Option<f64>)> = det
            .analysis
            .lambda
            .iter()
            .filter_map(|(t, l)| l.map(|l| (t, series.timestamp(t), l, probs.get(&t).copied())))
            .collect();
        write_atomic(p, &lambda_csv(&rows, cfg))?;
    }
    if let Some(p) = &paths.dmd_jsonl {
        let mut out = String::new();
        for r in &det.analysis.results {
            out.push_str(&r.to_json_line());
            out.push('\n');
        }
        write_atomic(p, &out)?;
    }
    Ok(output)
}

/// Streaming detection: reads CSV rows from `input` one at a time and
/// writes each event to `out` as a JSON line as soon as it is produced.
/// The first non-comment line is the header, as in the batch format.
pub fn cmd_detect_stream<R: BufRead, W: Write>(
    input: R,
    mut out: W,
    model_path: &Path,
    lambda_out: Option<&Path>,
    cfg: &RunConfig,
) -> Result<Vec<EventRecord>, CliError> {
    let model = load_model(model_path)?.model;
    let mut det = StreamingDetector::new(&model, cfg)?;
    let mut events = Vec::new();
    let mut rows = Vec::new();
    let stdout_path = Path::new("<stdout>");
    let mut emit = |det: &StreamingDetector<'_>, steps: Vec<crate::pipeline::StepOutput>, out: &mut W| -> Result<(), CliError> {
        for s in steps {
            let ts = det.timestamp(s.t).unwrap_or_default();
            rows.push((s.t, ts, s.lambda_max, s.probability));
            if let Some(e) = s.event {
                let rec = EventRecord {
                    t: e.time,
                    timestamp: ts,
                    probability: e.probability,
                };
                writeln!(out, "{}", serde_json::to_string(&rec).expect("serializes")).map_err(|e| CliError::io(stdout_path, e))?;
                out.flush().map_err(|e| CliError::io(stdout_path, e))?;
                events.push(rec);
            }
        }
        Ok(())
    };
    let mut seen_header = false;
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(Path::new("<stdin>"), e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !seen_header {
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        let (ts, glucose, _) = parse_row(&fields, n as u64 + 1).map_err(|e| CliError::Validation(format!("<stdin>: {e}")))?;
        if let Some(g) = glucose {
            let steps = det.push_record(ts, g)?;
            emit(&det, steps, &mut out)?;
        }
    }
    let steps = det.finish()?;
    emit(&det, steps, &mut out)?;
    if let Some(p) = lambda_out {
        write_atomic(p, &lambda_csv(&rows, cfg))?;
    }
    Ok(events)
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub version: String,
    pub config: RunConfig,
    #[serde(flatten)]
    pub report: EvalReport,
}

/// Evaluates the model and the baseline on a corpus and writes
/// `metrics.json` plus plot-ready CSVs into `out_dir`.
pub fn cmd_eval(corpus_dir: &Path, model_path: &Path, out_dir: &Path, which: SubjectSelection, cfg: &RunConfig) -> Result<EvalReport, CliError> {
    let model = load_model(model_path)?.model;
    let corpus = load_corpus(corpus_dir, which, cfg)?;
    let subjects: Vec<Subject<'_>> = corpus.iter().map(|(id, s)| Subject { id: *id, series: s }).collect();
    let report = evaluate_corpus(&subjects, &model, cfg)?;
    let header = header_comment(cfg);
    let metrics = MetricsFile {
        version: VERSION.to_string(),
        config: cfg.clone(),
        report,
    };
    write_atomic(&out_dir.join("metrics.json"), &to_json_pretty(&metrics))?;
    for det in [&metrics.report.dmd, &metrics.report.baseline] {
        for m in &det.per_tw {
            if let Some(roc) = &m.roc {
                write_atomic(&out_dir.join(format!("roc_{}_tw{}.csv", det.name, m.tw)), &roc.to_csv(Some(&header)))?;
            }
        }
    }
    let mut delays = format!("# {header}\ndetector,subject,meal_t,grams,delay_min\n");
    for det in [&metrics.report.dmd, &metrics.report.baseline] {
        for (subject, t, grams, d) in &det.meal_delays {
            let _ = write!(delays, "{},{subject},{t},{grams},", det.name);
            if let Some(d) = d {
                let _ = write!(delays, "{d}");
            }
            delays.push('\n');
        }
    }
    write_atomic(&out_dir.join("delays.csv"), &delays)?;
    let mut gaps = format!("# {header}\nkind,gap_min\n");
    for g in &metrics.report.spikes.meal_gaps {
        let _ = writeln!(gaps, "meal_to_spike,{g}");
    }
    for g in &metrics.report.spikes.spike_gaps {
        let _ = writeln!(gaps, "spike_to_meal,{g}");
    }
    write_atomic(&out_dir.join("spike_gaps.csv"), &gaps)?;
    Ok(metrics.report)
}

// ---------------------------------------------------------------- parsing

fn parse_feature_mode(s: &str) -> Result<FeatureMode, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown feature mode {s:?} (default|all-eigs)"))
}

fn parse_emission(s: &str) -> Result<EmissionKind, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown emission policy {s:?} (threshold|hysteresis)"))
}

fn parse_fpr_unit(s: &str) -> Result<FprUnit, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("unknown FPR unit {s:?} (per-decision-point|per-hour)"))
}

/// Negatives per positive; `None` keeps every negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativeRatio(pub Option<f64>);

fn parse_ratio(s: &str) -> Result<NegativeRatio, String> {
    if s == "all" {
        return Ok(NegativeRatio(None));
    }
    s.parse()
        .map(|r| NegativeRatio(Some(r)))
        .map_err(|_| format!("expected a number or \"all\", got {s:?}"))
}

/// One optional flag per [`RunConfig`] field.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigOverrides {
    #[arg(long, global = true)]
    pub step_minutes: Option<u32>,
    #[arg(long, global = true)]
    pub max_gap_minutes: Option<u32>,
    #[arg(long, global = true)]
    pub delay_horizon_minutes: Option<u32>,
    #[arg(long, global = true)]
    pub pairs: Option<usize>,
    #[arg(long, global = true)]
    pub rank: Option<usize>,
    #[arg(long, global = true)]
    pub rank_tol: Option<f64>,
    #[arg(long, global = true)]
    pub spike_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub feature_n: Option<usize>,
    #[arg(long, global = true, value_parser = parse_feature_mode)]
    pub feature_mode: Option<FeatureMode>,
    #[arg(long, global = true)]
    pub positive_offset_minutes: Option<u32>,
    #[arg(long, global = true)]
    pub negative_exclusion_minutes: Option<u32>,
    /// Negatives per positive, or "all".
    #[arg(long, global = true, value_parser = parse_ratio)]
    pub negative_ratio: Option<NegativeRatio>,
    #[arg(long, global = true)]
    pub reg_lambda: Option<f64>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    #[arg(long, global = true, value_parser = parse_emission)]
    pub emission: Option<EmissionKind>,
    #[arg(long, global = true)]
    pub decision_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub hysteresis_low: Option<f64>,
    #[arg(long, global = true)]
    pub hysteresis_high: Option<f64>,
    #[arg(long, global = true)]
    pub refractory_minutes: Option<u32>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub tw_minutes: Option<Vec<u32>>,
    #[arg(long, global = true)]
    pub delay_window_minutes: Option<u32>,
    #[arg(long, global = true)]
    pub spike_forward_minutes: Option<u32>,
    #[arg(long, global = true)]
    pub spike_backward_minutes: Option<u32>,
    #[arg(long, global = true, value_parser = parse_fpr_unit)]
    pub fpr_unit: Option<FprUnit>,
    #[arg(long, global = true)]
    pub baseline_slope_window_minutes: Option<u32>,
    #[arg(long, global = true)]
    pub baseline_slope_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub baseline_refractory_minutes: Option<u32>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub train_fraction: Option<f64>,
}

impl ConfigOverrides {
    pub fn apply(&self, c: &mut RunConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    c.$f = v.clone();
                }
            )*};
        }
        set!(
            step_minutes,
            max_gap_minutes,
            delay_horizon_minutes,
            pairs,
            rank,
            rank_tol,
            spike_threshold,
            feature_n,
            feature_mode,
            positive_offset_minutes,
            negative_exclusion_minutes,
            reg_lambda,
            tol,
            max_iter,
            emission,
            decision_threshold,
            hysteresis_low,
            hysteresis_high,
            refractory_minutes,
            tw_minutes,
            delay_window_minutes,
            spike_forward_minutes,
            spike_backward_minutes,
            fpr_unit,
            baseline_slope_window_minutes,
            baseline_slope_threshold,
            baseline_refractory_minutes,
            seed,
            train_fraction
        );
        if let Some(r) = self.negative_ratio {
            c.negative_ratio = r.0;
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mealdmd", version, about = "Meal detection from CGM data with windowed DMD")]
pub struct Cli {
    /// JSON config file (default: $MEALDMD_CONFIG if set).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with ground-truth meals.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        subjects: usize,
        #[arg(long, default_value_t = 14)]
        days: usize,
        #[arg(long, default_value_t = 2.0)]
        noise_sigma: f64,
        /// Disable meal timing and portion jitter.
        #[arg(long)]
        no_jitter: bool,
    },
    /// Train the classifier on a corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model_out: PathBuf,
        /// Use every subject instead of the manifest's training split.
        #[arg(long)]
        all_subjects: bool,
    },
    /// Detect meals in one CSV file, or in a stream on stdin.
    Detect {
        /// Input CSV; ignored with --stream.
        #[arg(long, required_unless_present = "stream")]
        input: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        /// Read rows from stdin and print events as JSON lines.
        #[arg(long)]
        stream: bool,
        /// Detections JSON (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// λ_max series CSV.
        #[arg(long)]
        lambda_out: Option<PathBuf>,
        /// Per-window eigenvalues as JSON lines.
        #[arg(long)]
        dmd_jsonl: Option<PathBuf>,
    },
    /// Evaluate a model and the rate-of-change baseline on a corpus.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use every subject instead of the manifest's test split.
        #[arg(long)]
        all_subjects: bool,
    },
}

/// Resolves the effective configuration for a parsed command line.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
    let mut cfg = match path {
        Some(p) => RunConfig::from_json_file(&p)?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli)?;
    match cli.command {
        Command::Synth {
            out,
            subjects,
            days,
            noise_sigma,
            no_jitter,
        } => {
            let corpus = CorpusConfig {
                subjects,
                days,
                seed: cfg.seed,
                jitter: if no_jitter { JitterConfig::none() } else { JitterConfig::default() },
                noise_sigma,
            };
            let m = cmd_synth(&out, &corpus, &cfg)?;
            log::info!("wrote {} subjects to {}", m.subjects.len(), out.display());
        }
        Command::Train {
            corpus,
            model_out,
            all_subjects,
        } => {
            let which = if all_subjects { SubjectSelection::All } else { SubjectSelection::Train };
            let r = cmd_train(&corpus, &model_out, which, &cfg)?;
            println!("{}", serde_json::to_string(&r).expect("serializes"));
        }
        Command::Detect {
            input,
            model,
            stream,
            out,
            lambda_out,
            dmd_jsonl,
        } => {
            if stream {
                let stdin = std::io::stdin();
                cmd_detect_stream(stdin.lock(), std::io::stdout().lock(), &model, lambda_out.as_deref(), &cfg)?;
            } else {
                let input = input.expect("clap enforces --input without --stream");
                let paths = DetectPaths {
                    events: out.clone(),
                    lambda: lambda_out,
                    dmd_jsonl,
                };
                let result = cmd_detect(&input, &model, &paths, &cfg)?;
                if out.is_none() {
                    print!("{}", to_json_pretty(&result));
                }
            }
        }
        Command::Eval {
            corpus,
            model,
            out,
            all_subjects,
        } => {
            let which = if all_subjects { SubjectSelection::All } else { SubjectSelection::Test };
            let r = cmd_eval(&corpus, &model, &out, which, &cfg)?;
            for d in [&r.dmd, &r.baseline] {
                for m in &d.per_tw {
                    println!(
                        "{:<12} tw={:>3}  recall={:.3}  fpr={:.4}  auc={:.3}",
                        d.name, m.tw, m.recall, m.fpr, m.auc
                    );
                }
            }
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
