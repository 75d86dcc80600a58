//! End-to-end wiring: series → DMD → features → probabilities → events,
//! in batch and streaming form, plus corpus-level training and evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{roc_detect, roc_scores};
use crate::classifier::{train, ClassifierError, DetectionEvent, LogRegModel, OnlineDetector};
use crate::config::RunConfig;
use crate::dmd::{dmd_series, DmdResult, StreamingDmd};
use crate::embedding::EmbeddingConfig;
use crate::eval::{
    count_negative_points, detection_delays, match_detections, recall_fpr, roc_auc, spike_meal_stats, summarize_delays,
    BinStats, DelaySummary, EvalError, MatchReport, RocCurve, SpikeMealStats,
};
use crate::features::{
    build_training_set, detect_spikes, meal_within, padded_magnitudes, EigenTrace, FeatureWindow, Featurizer,
    LambdaSeries, SpikeEvent, SubjectTrace, TrainingSet,
};
use crate::ingest::{interpolate_run, snap, GridSeries, MealEvent};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("model expects {expected} features but the config produces {got}")]
    ModelShape { expected: usize, got: usize },
    #[error("record at {ts} maps to grid index {got}, before the current index {current}")]
    StreamOrder { ts: i64, got: i64, current: usize },
}

fn embedding_of(cfg: &RunConfig) -> Result<EmbeddingConfig, PipelineError> {
    cfg.embedding().map_err(|e| PipelineError::Config(e.to_string()))
}

/// DMD output of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesAnalysis {
    pub results: Vec<DmdResult>,
    pub trace: EigenTrace,
    pub lambda: LambdaSeries,
    pub spikes: Vec<SpikeEvent>,
}

/// Runs windowed DMD over every segment of a gap-filled series.
pub fn analyze_series(series: &GridSeries, cfg: &RunConfig) -> Result<SeriesAnalysis, PipelineError> {
    let embed = embedding_of(cfg)?;
    let results = dmd_series(series, &embed, &cfg.dmd());
    let trace = EigenTrace::from_results(&results, series.len(), cfg.rank);
    let lambda = trace.lambda_series();
    let spikes = detect_spikes(&lambda, cfg.spike_threshold);
    Ok(SeriesAnalysis {
        results,
        trace,
        lambda,
        spikes,
    })
}

fn model_featurizer(model: &LogRegModel, cfg: &RunConfig) -> Result<Featurizer, PipelineError> {
    let f = cfg.featurizer_for(model.feature_mode);
    if f.dim() != model.weights.len() {
        return Err(PipelineError::ModelShape {
            expected: model.weights.len(),
            got: f.dim(),
        });
    }
    Ok(f)
}

/// `(t, p)` at every grid index with ready features.
pub fn score_trace(trace: &EigenTrace, featurizer: &Featurizer, model: &LogRegModel) -> Result<Vec<(usize, f64)>, PipelineError> {
    let mut out = Vec::new();
    for t in 0..trace.len() {
        if let Some(x) = featurizer.features_at(trace, t) {
            out.push((t, model.predict_proba(&x)?));
        }
    }
    Ok(out)
}

/// Feeds scores through a fresh [`OnlineDetector`].
pub fn emit_events(scores: &[(usize, f64)], cfg: &RunConfig) -> Result<Vec<DetectionEvent>, PipelineError> {
    let mut det = OnlineDetector::new(cfg.emission_policy(), cfg.refractory_minutes, cfg.step_minutes);
    let mut events = Vec::new();
    for &(t, p) in scores {
        events.extend(det.step(p, t)?);
    }
    Ok(events)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub analysis: SeriesAnalysis,
    pub scores: Vec<(usize, f64)>,
    pub events: Vec<DetectionEvent>,
}

/// Batch detection on a gap-filled series.
pub fn detect_series(series: &GridSeries, model: &LogRegModel, cfg: &RunConfig) -> Result<Detection, PipelineError> {
    let featurizer = model_featurizer(model, cfg)?;
    let analysis = analyze_series(series, cfg)?;
    let scores = score_trace(&analysis.trace, &featurizer, model)?;
    let events = emit_events(&scores, cfg)?;
    Ok(Detection {
        analysis,
        scores,
        events,
    })
}

/// What the streaming detector produced at one grid index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutput {
    pub t: usize,
    pub lambda_max: f64,
    pub probability: Option<f64>,
    pub event: Option<DetectionEvent>,
}

/// Sample-at-a-time detector over raw `(timestamp, glucose)` records.
///
/// Records are snapped to a grid anchored at the first one, short gaps are
/// interpolated as soon as the next sample arrives and long gaps restart
/// the DMD window. A grid point is processed once a record for a later
/// point arrives (or on [`finish`](Self::finish)), so for time-sorted input
/// the output matches [`detect_series`] on the same file exactly.
pub struct StreamingDetector<'m> {
    model: &'m LogRegModel,
    step_seconds: i64,
    max_gap_minutes: u32,
    step_minutes: u32,
    rank: usize,
    dmd: StreamingDmd,
    window: FeatureWindow,
    detector: OnlineDetector,
    start: Option<i64>,
    pending: Option<(usize, i64, f64)>,
    last: Option<(usize, f64)>,
}

impl<'m> StreamingDetector<'m> {
    pub fn new(model: &'m LogRegModel, cfg: &RunConfig) -> Result<Self, PipelineError> {
        let featurizer = model_featurizer(model, cfg)?;
        let embed = embedding_of(cfg)?;
        Ok(Self {
            model,
            step_seconds: i64::from(cfg.step_minutes) * 60,
            max_gap_minutes: cfg.max_gap_minutes,
            step_minutes: cfg.step_minutes,
            rank: cfg.rank,
            dmd: StreamingDmd::new(embed, cfg.dmd()),
            window: FeatureWindow::new(featurizer),
            detector: OnlineDetector::new(cfg.emission_policy(), cfg.refractory_minutes, cfg.step_minutes),
            start: None,
            pending: None,
            last: None,
        })
    }

    /// Grid timestamp of index `t`, once the first record has arrived.
    pub fn timestamp(&self, t: usize) -> Option<i64> {
        self.start.map(|s| s + t as i64 * self.step_seconds)
    }

    pub fn push_record(&mut self, ts: i64, glucose: f64) -> Result<Vec<StepOutput>, PipelineError> {
        let start = *self.start.get_or_insert(ts);
        let (idx, dist) = snap(ts - start, self.step_seconds);
        let current = self.pending.map_or(0, |p| p.0);
        if idx < current as i64 {
            return Err(PipelineError::StreamOrder { ts, got: idx, current });
        }
        let idx = idx as usize;
        match self.pending {
            Some((p_idx, p_dist, _)) if p_idx == idx => {
                if dist <= p_dist {
                    self.pending = Some((idx, dist, glucose));
                }
                Ok(Vec::new())
            }
            prev => {
                self.pending = Some((idx, dist, glucose));
                match prev {
                    Some((p_idx, _, v)) => self.process_point(p_idx, v),
                    None => Ok(Vec::new()),
                }
            }
        }
    }

    /// Processes the last buffered grid point.
    pub fn finish(&mut self) -> Result<Vec<StepOutput>, PipelineError> {
        match self.pending.take() {
            Some((idx, _, v)) => self.process_point(idx, v),
            None => Ok(Vec::new()),
        }
    }

    fn process_point(&mut self, t: usize, v: f64) -> Result<Vec<StepOutput>, PipelineError> {
        let mut out = Vec::new();
        if let Some((last_t, last_v)) = self.last {
            let run = t - last_t - 1;
            if run > 0 {
                if (run as u64) * u64::from(self.step_minutes) < u64::from(self.max_gap_minutes) {
                    for (k, fv) in interpolate_run(last_v, v, run).enumerate() {
                        out.extend(self.push_sample(last_t + 1 + k, fv, true)?);
                    }
                } else {
                    self.dmd.reset();
                    self.window.reset();
                }
            }
        }
        out.extend(self.push_sample(t, v, false)?);
        self.last = Some((t, v));
        Ok(out)
    }

    fn push_sample(&mut self, t: usize, v: f64, filled: bool) -> Result<Option<StepOutput>, PipelineError> {
        let result = match self.dmd.push_sample(v, t, filled) {
            Ok(Some(r)) => r,
            Ok(None) => return Ok(None),
            Err(e) => {
                log::warn!("skipping window: {e}");
                self.window.reset();
                return Ok(None);
            }
        };
        let lambda_max = result.max_magnitude();
        let probability = match self.window.push(padded_magnitudes(&result, self.rank)) {
            Some(x) => Some(self.model.predict_proba(&x)?),
            None => None,
        };
        let event = match probability {
            Some(p) => self.detector.step(p, t)?,
            None => None,
        };
        Ok(Some(StepOutput {
            t,
            lambda_max,
            probability,
            event,
        }))
    }
}

/// One subject of a corpus.
#[derive(Debug, Clone, Copy)]
pub struct Subject<'a> {
    pub id: usize,
    pub series: &'a GridSeries,
}

/// Analyzes every subject, builds the training set and fits the model.
pub fn train_corpus(subjects: &[Subject<'_>], cfg: &RunConfig) -> Result<(LogRegModel, TrainingSet), PipelineError> {
    let analyses: Vec<SeriesAnalysis> = subjects
        .par_iter()
        .map(|s| analyze_series(s.series, cfg))
        .collect::<Result<_, _>>()?;
    let traces: Vec<SubjectTrace<'_>> = subjects
        .iter()
        .zip(&analyses)
        .map(|(s, a)| SubjectTrace {
            id: s.id,
            trace: &a.trace,
            meals: &s.series.meals,
            step_minutes: s.series.step_minutes,
        })
        .collect();
    let featurizer = cfg.featurizer();
    let set = build_training_set(&traces, &featurizer, &cfg.labeling());
    let model = train(&set.samples, featurizer.mode, &cfg.train_config(), cfg.seed)?;
    Ok((model, set))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwMetrics {
    pub tw: u32,
    pub recall: f64,
    pub fpr: f64,
    pub auc: f64,
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fp: usize,
    pub excluded_meals: usize,
    pub negative_points: usize,
    #[serde(skip)]
    pub roc: Option<RocCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorMetrics {
    pub name: String,
    pub per_tw: Vec<TwMetrics>,
    pub median_delay_min: Option<f64>,
    pub iqr_delay_min: Option<f64>,
    pub delays: DelaySummary,
    pub events: usize,
    /// Recall never decreases as TW widens.
    pub recall_monotone: bool,
    /// Per meal in evaluation order: `(subject, meal time, grams, delay)`.
    #[serde(skip)]
    pub meal_delays: Vec<(usize, usize, f64, Option<f64>)>,
}

impl DetectorMetrics {
    pub fn at_tw(&self, tw: u32) -> Option<&TwMetrics> {
        self.per_tw.iter().find(|m| m.tw == tw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeSummary {
    pub smr: Option<f64>,
    pub msr: Option<f64>,
    pub isr: Option<f64>,
    pub per_size_bins: Vec<BinStats>,
    pub meals: usize,
    pub spikes: usize,
    #[serde(skip)]
    pub meal_gaps: Vec<f64>,
    #[serde(skip)]
    pub spike_gaps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub subjects: Vec<usize>,
    pub dmd: DetectorMetrics,
    pub baseline: DetectorMetrics,
    pub spikes: SpikeSummary,
}

/// Everything a detector produced on one subject.
struct SubjectRun {
    scores: Vec<(usize, f64)>,
    events: Vec<DetectionEvent>,
}

struct SubjectEval {
    id: usize,
    len: usize,
    meals: Vec<MealEvent>,
    dmd: SubjectRun,
    baseline: SubjectRun,
    spikes: SpikeMealStats,
}

fn evaluate_detector(name: &str, runs: &[(&SubjectEval, &SubjectRun)], cfg: &RunConfig) -> Result<DetectorMetrics, PipelineError> {
    let step = cfg.step_minutes;
    let mut per_tw = Vec::new();
    let mut tws = cfg.tw_minutes.clone();
    tws.sort_unstable();
    tws.dedup();
    for &tw in &tws {
        let mut report: Option<MatchReport> = None;
        let mut negatives = 0;
        let mut roc_scores: Vec<(f64, bool)> = Vec::new();
        let tw_steps = (tw / step) as usize;
        for (s, run) in runs {
            let r = match_detections(&s.meals, &run.events, tw, step, s.len);
            match report.as_mut() {
                Some(acc) => acc.merge(&r),
                None => report = Some(r),
            }
            let points: Vec<usize> = run.scores.iter().map(|&(t, _)| t).collect();
            negatives += count_negative_points(&points, &s.meals, tw, step);
            // positives: best score within each evaluable meal's window
            for m in s.meals.iter().filter(|m| m.time + tw_steps < s.len) {
                let lo = run.scores.partition_point(|&(t, _)| t < m.time);
                let best = run.scores[lo..]
                    .iter()
                    .take_while(|&&(t, _)| t <= m.time + tw_steps)
                    .map(|&(_, p)| p)
                    .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.max(p))));
                roc_scores.push((best.unwrap_or(0.0), true));
            }
            roc_scores.extend(
                run.scores
                    .iter()
                    .filter(|&&(t, _)| !meal_within(&s.meals, t, tw_steps))
                    .map(|&(_, p)| (p, false)),
            );
        }
        let report = report.ok_or(EvalError::NoMeals)?;
        let (recall, fpr) = recall_fpr(&report, negatives, cfg.fpr_unit, step)?;
        let roc = roc_auc(&roc_scores)?;
        per_tw.push(TwMetrics {
            tw,
            recall,
            fpr,
            auc: roc.auc,
            tp: report.tp,
            fn_: report.fn_,
            fp: report.fp,
            excluded_meals: report.excluded,
            negative_points: negatives,
            roc: Some(roc),
        });
    }
    let recall_monotone = per_tw.windows(2).all(|w| w[1].recall >= w[0].recall);
    if !recall_monotone {
        log::warn!("{name}: recall decreased as TW widened");
    }
    let mut meal_delays = Vec::new();
    for (s, run) in runs {
        let d = detection_delays(&s.meals, &run.events, cfg.delay_window_minutes, step);
        meal_delays.extend(s.meals.iter().zip(d).map(|(m, d)| (s.id, m.time, m.carbs, d)));
    }
    let present: Vec<f64> = meal_delays.iter().filter_map(|d| d.3).collect();
    let delays = summarize_delays(&present);
    Ok(DetectorMetrics {
        name: name.to_string(),
        per_tw,
        median_delay_min: delays.median,
        iqr_delay_min: delays.iqr,
        delays,
        events: runs.iter().map(|(_, r)| r.events.len()).sum(),
        recall_monotone,
        meal_delays,
    })
}

/// Runs the DMD detector and the baseline on every subject and computes
/// all metrics.
///
/// For each TW the ROC curve pairs one positive per evaluable meal (the
/// highest probability in `[meal, meal + TW]`) against every decision
/// point with no meal in its preceding TW, so a threshold's TPR is the
/// meal-level recall a detector with that threshold would reach.
pub fn evaluate_corpus(subjects: &[Subject<'_>], model: &LogRegModel, cfg: &RunConfig) -> Result<EvalReport, PipelineError> {
    let baseline_cfg = cfg.baseline();
    let evals: Vec<SubjectEval> = subjects
        .par_iter()
        .map(|s| {
            let det = detect_series(s.series, model, cfg)?;
            let spikes = spike_meal_stats(
                &s.series.meals,
                &det.analysis.spikes,
                cfg.spike_forward_minutes,
                cfg.spike_backward_minutes,
                cfg.step_minutes,
            );
            Ok(SubjectEval {
                id: s.id,
                len: s.series.len(),
                meals: s.series.meals.clone(),
                dmd: SubjectRun {
                    scores: det.scores,
                    events: det.events,
                },
                baseline: SubjectRun {
                    scores: roc_scores(s.series, &baseline_cfg),
                    events: roc_detect(s.series, &baseline_cfg),
                },
                spikes,
            })
        })
        .collect::<Result<_, PipelineError>>()?;

    let dmd_runs: Vec<(&SubjectEval, &SubjectRun)> = evals.iter().map(|e| (e, &e.dmd)).collect();
    let base_runs: Vec<(&SubjectEval, &SubjectRun)> = evals.iter().map(|e| (e, &e.baseline)).collect();
    let dmd = evaluate_detector("dmd", &dmd_runs, cfg)?;
    let baseline = evaluate_detector(crate::baseline::BASELINE_NAME, &base_runs, cfg)?;

    let mut bins: Vec<BinStats> = Vec::new();
    let (mut meals, mut matched, mut spikes, mut associated) = (0usize, 0usize, 0usize, 0usize);
    let (mut meal_gaps, mut spike_gaps) = (Vec::new(), Vec::new());
    for e in &evals {
        let s = &e.spikes;
        meals += s.meal_gaps.len();
        matched += s.meal_gaps.iter().flatten().count();
        spikes += s.spike_count;
        associated += s.spike_to_meal.gaps.len();
        meal_gaps.extend_from_slice(&s.meal_to_spike.gaps);
        spike_gaps.extend_from_slice(&s.spike_to_meal.gaps);
        for b in &s.per_size_bins {
            match bins.iter_mut().find(|x| x.bin == b.bin) {
                Some(x) => {
                    x.meals += b.meals;
                    x.matched += b.matched;
                }
                None => bins.push(b.clone()),
            }
        }
    }
    for b in &mut bins {
        b.smr = (b.meals > 0).then(|| b.matched as f64 / b.meals as f64 * 100.0);
    }
    let pct = |n: usize, d: usize| (d > 0).then(|| n as f64 / d as f64 * 100.0);
    Ok(EvalReport {
        subjects: subjects.iter().map(|s| s.id).collect(),
        dmd,
        baseline,
        spikes: SpikeSummary {
            smr: pct(matched, meals),
            msr: pct(associated, spikes),
            isr: pct(spikes - associated, spikes),
            per_size_bins: bins,
            meals,
            spikes,
            meal_gaps,
            spike_gaps,
        },
    })
}
