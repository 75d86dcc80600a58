//! Classifier inputs derived from DMD eigenvalues: the λ_max trace, spike
//! events, trailing feature vectors and labeled training sets.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dmd::DmdResult;
use crate::ingest::MealEvent;

/// Default λ_max spike threshold.
pub const DEFAULT_SPIKE_THRESHOLD: f64 = 1.2;
/// Default number of trailing steps per feature vector.
pub const DEFAULT_FEATURE_STEPS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    /// `n` trailing λ_max values.
    #[default]
    #[serde(alias = "default")]
    MaxEig,
    /// `n` trailing steps of all `r` eigenvalue magnitudes.
    AllEigs,
}

/// Per-step eigenvalue magnitudes, grid-aligned from index 0.
///
/// Each ready step stores exactly `rank` magnitudes in descending order,
/// zero-padded when the window retained fewer. Steps without a DMD result
/// (warm-up, missing data) are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenTrace {
    pub rank: usize,
    pub steps: Vec<Option<Vec<f64>>>,
}

impl EigenTrace {
    pub fn from_results(results: &[DmdResult], len: usize, rank: usize) -> Self {
        let mut steps = vec![None; len];
        for r in results {
            if r.end_time < len {
                steps[r.end_time] = Some(padded_magnitudes(r, rank));
            }
        }
        Self { rank, steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn lambda_series(&self) -> LambdaSeries {
        LambdaSeries {
            start: 0,
            values: self.steps.iter().map(|s| s.as_ref().map(|m| m[0])).collect(),
        }
    }
}

/// Magnitudes of `r`'s eigenvalues, padded or cut to `rank` entries.
pub fn padded_magnitudes(r: &DmdResult, rank: usize) -> Vec<f64> {
    let mut m: Vec<f64> = r.magnitudes().take(rank).collect();
    m.resize(rank.max(1), 0.0);
    m
}

/// λ_max(t) = max |λ_i(t)|, index-aligned with the source series.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSeries {
    /// Grid index of `values[0]`.
    pub start: usize,
    pub values: Vec<Option<f64>>,
}

impl LambdaSeries {
    pub fn from_values(start: usize, values: &[f64]) -> Self {
        Self {
            start,
            values: values.iter().map(|&v| Some(v)).collect(),
        }
    }

    pub fn get(&self, t: usize) -> Option<f64> {
        t.checked_sub(self.start).and_then(|i| self.values.get(i).copied().flatten())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Option<f64>)> + '_ {
        self.values.iter().enumerate().map(move |(i, v)| (self.start + i, *v))
    }
}

/// λ_max per grid step; degenerate windows contribute 0.
pub fn lambda_series(results: &[DmdResult], len: usize) -> LambdaSeries {
    let mut values = vec![None; len];
    for r in results {
        if r.end_time < len {
            values[r.end_time] = Some(r.max_magnitude());
        }
    }
    LambdaSeries { start: 0, values }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeEvent {
    /// Grid index of the threshold upcrossing.
    pub time: usize,
    pub peak_value: f64,
    pub peak_time: usize,
}

/// One event per maximal run of λ_max strictly above `threshold`. Missing
/// values end a run.
pub fn detect_spikes(ls: &LambdaSeries, threshold: f64) -> Vec<SpikeEvent> {
    let mut spikes = Vec::new();
    let mut current: Option<SpikeEvent> = None;
    for (t, v) in ls.iter() {
        match (v.filter(|&x| x > threshold), current.as_mut()) {
            (Some(x), Some(ev)) => {
                if x > ev.peak_value {
                    ev.peak_value = x;
                    ev.peak_time = t;
                }
            }
            (Some(x), None) => {
                current = Some(SpikeEvent {
                    time: t,
                    peak_value: x,
                    peak_time: t,
                })
            }
            (None, _) => spikes.extend(current.take()),
        }
    }
    spikes.extend(current);
    spikes
}

/// Classifier input; the constant bias term is the last element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVec(pub Vec<f64>);

impl FeatureVec {
    pub fn with_bias(mut values: Vec<f64>) -> Self {
        values.push(1.0);
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Features without the bias.
    pub fn lambdas(&self) -> &[f64] {
        &self.0[..self.0.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `[λ_max(t−n+1), …, λ_max(t)]` plus bias, or `None` if any of the `n`
/// trailing values is missing.
pub fn feature_at(ls: &LambdaSeries, t: usize, n: usize) -> Option<FeatureVec> {
    let from = (t + 1).checked_sub(n)?;
    let values: Option<Vec<f64>> = (from..=t).map(|i| ls.get(i)).collect();
    values.map(FeatureVec::with_bias)
}

/// Feature extraction settings shared by training and detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Featurizer {
    pub mode: FeatureMode,
    /// Trailing steps.
    pub steps: usize,
    /// Eigenvalues per step in all-eigs mode.
    pub rank: usize,
}

impl Default for Featurizer {
    fn default() -> Self {
        Self {
            mode: FeatureMode::MaxEig,
            steps: DEFAULT_FEATURE_STEPS,
            rank: 3,
        }
    }
}

impl Featurizer {
    /// Length of a feature vector including the bias.
    pub fn dim(&self) -> usize {
        self.per_step() * self.steps + 1
    }

    fn per_step(&self) -> usize {
        match self.mode {
            FeatureMode::MaxEig => 1,
            FeatureMode::AllEigs => self.rank,
        }
    }

    fn extend_step(&self, out: &mut Vec<f64>, mags: &[f64]) {
        match self.mode {
            FeatureMode::MaxEig => out.push(mags[0]),
            FeatureMode::AllEigs => out.extend((0..self.rank).map(|i| mags.get(i).copied().unwrap_or(0.0))),
        }
    }

    pub fn features_at(&self, trace: &EigenTrace, t: usize) -> Option<FeatureVec> {
        let from = (t + 1).checked_sub(self.steps)?;
        if t >= trace.len() {
            return None;
        }
        let mut out = Vec::with_capacity(self.dim());
        for step in &trace.steps[from..=t] {
            self.extend_step(&mut out, step.as_deref()?);
        }
        Some(FeatureVec::with_bias(out))
    }

    /// Column names without the bias, `l1…lk`.
    pub fn column_names(&self) -> Vec<String> {
        (1..self.dim()).map(|i| format!("l{i}")).collect()
    }
}

/// Incremental counterpart of [`Featurizer::features_at`] for streams.
#[derive(Debug, Clone)]
pub struct FeatureWindow {
    featurizer: Featurizer,
    buf: VecDeque<Vec<f64>>,
}

impl FeatureWindow {
    pub fn new(featurizer: Featurizer) -> Self {
        Self {
            featurizer,
            buf: VecDeque::with_capacity(featurizer.steps),
        }
    }

    /// Adds one step's magnitudes and returns the features once `steps`
    /// consecutive steps are available.
    pub fn push(&mut self, magnitudes: Vec<f64>) -> Option<FeatureVec> {
        if self.buf.len() == self.featurizer.steps {
            self.buf.pop_front();
        }
        self.buf.push_back(magnitudes);
        if self.buf.len() < self.featurizer.steps {
            return None;
        }
        let mut out = Vec::with_capacity(self.featurizer.dim());
        for m in &self.buf {
            self.featurizer.extend_step(&mut out, m);
        }
        Some(FeatureVec::with_bias(out))
    }

    pub fn reset(&mut self) {
        self.buf.clear();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelingConfig {
    /// Positive samples sit this long after each meal.
    pub positive_offset_minutes: u32,
    /// Negatives have no meal within this many minutes before them.
    pub negative_exclusion_minutes: u32,
    /// Negatives kept per positive; `None` keeps all.
    pub negative_ratio: Option<f64>,
    pub seed: u64,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        Self {
            positive_offset_minutes: 20,
            negative_exclusion_minutes: 60,
            negative_ratio: Some(5.0),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub subject: usize,
    pub time: usize,
    pub features: FeatureVec,
    pub label: u8,
}

/// One subject's inputs to [`build_training_set`].
#[derive(Debug, Clone, Copy)]
pub struct SubjectTrace<'a> {
    pub id: usize,
    pub trace: &'a EigenTrace,
    pub meals: &'a [MealEvent],
    pub step_minutes: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    /// Ordered by subject, then time.
    pub samples: Vec<LabeledSample>,
    /// Meals whose positive sample had no ready features.
    pub skipped_meals: usize,
}

impl TrainingSet {
    pub fn positives(&self) -> usize {
        self.samples.iter().filter(|s| s.label == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.samples.len() - self.positives()
    }

    /// `subject,t,l1,…,lk,label` with an optional leading comment line.
    pub fn to_csv(&self, featurizer: &Featurizer, comment: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(c) = comment {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "subject,t,{},label", featurizer.column_names().join(","));
        for s in &self.samples {
            let _ = write!(out, "{},{}", s.subject, s.time);
            for v in s.features.lambdas() {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{}", s.label);
        }
        out
    }
}

/// `true` if some meal `m` satisfies `0 ≤ t − m ≤ window_steps`.
pub fn meal_within(meals: &[MealEvent], t: usize, window_steps: usize) -> bool {
    let lo = t.saturating_sub(window_steps);
    let i = meals.partition_point(|m| m.time < lo);
    meals.get(i).is_some_and(|m| m.time <= t)
}

fn subject_samples(s: &SubjectTrace<'_>, featurizer: &Featurizer, rules: &LabelingConfig) -> (Vec<LabeledSample>, usize) {
    let step = s.step_minutes.max(1);
    let pos_offset = (rules.positive_offset_minutes / step) as usize;
    let excl = (rules.negative_exclusion_minutes / step) as usize;
    let mut samples = Vec::new();
    let mut skipped = 0;
    for m in s.meals {
        match featurizer.features_at(s.trace, m.time + pos_offset) {
            Some(f) => samples.push(LabeledSample {
                subject: s.id,
                time: m.time + pos_offset,
                features: f,
                label: 1,
            }),
            None => skipped += 1,
        }
    }
    let candidates: Vec<(usize, FeatureVec)> = (0..s.trace.len())
        .filter(|&t| !meal_within(s.meals, t, excl))
        .filter_map(|t| featurizer.features_at(s.trace, t).map(|f| (t, f)))
        .collect();
    let keep = match rules.negative_ratio {
        Some(r) => ((samples.len() as f64 * r).ceil() as usize).min(candidates.len()),
        None => candidates.len(),
    };
    let mut picked: Vec<usize> = if keep == candidates.len() {
        (0..keep).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(rules.seed);
        rng.set_stream(s.id as u64);
        sample(&mut rng, candidates.len(), keep).into_vec()
    };
    picked.sort_unstable();
    let mut candidates: Vec<Option<(usize, FeatureVec)>> = candidates.into_iter().map(Some).collect();
    for i in picked {
        let (t, f) = candidates[i].take().expect("indices are distinct");
        samples.push(LabeledSample {
            subject: s.id,
            time: t,
            features: f,
            label: 0,
        });
    }
    samples.sort_by_key(|x| x.time);
    (samples, skipped)
}

/// Builds labeled samples: one positive per meal at `meal + offset` and
/// randomly subsampled negatives at points with no meal in the preceding
/// exclusion window. Subjects are processed in parallel; the output order
/// is (subject order, time).
pub fn build_training_set(subjects: &[SubjectTrace<'_>], featurizer: &Featurizer, rules: &LabelingConfig) -> TrainingSet {
    let per_subject: Vec<(Vec<LabeledSample>, usize)> = subjects
        .par_iter()
        .map(|s| subject_samples(s, featurizer, rules))
        .collect();
    let mut out = TrainingSet::default();
    for (samples, skipped) in per_subject {
        out.samples.extend(samples);
        out.skipped_meals += skipped;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ls(v: &[f64]) -> LambdaSeries {
        LambdaSeries::from_values(0, v)
    }

    #[test]
    fn one_spike_with_peak() {
        let s = detect_spikes(&ls(&[1.0, 1.1, 1.25, 1.3, 1.15]), 1.2);
        assert_eq!(
            s,
            vec![SpikeEvent {
                time: 2,
                peak_value: 1.3,
                peak_time: 3
            }]
        );
    }

    #[test]
    fn spikes_split_by_dips_and_gaps() {
        assert!(detect_spikes(&ls(&[1.0, 1.2, 0.9]), 1.2).is_empty());
        assert_eq!(detect_spikes(&ls(&[1.3, 1.1, 1.3]), 1.2).len(), 2);
        let gapped = LambdaSeries {
            start: 0,
            values: vec![Some(1.3), None, Some(1.3)],
        };
        assert_eq!(detect_spikes(&gapped, 1.2).len(), 2);
    }

    #[test]
    fn feature_slicing() {
        let l = ls(&[0.9, 1.0, 1.1, 1.4, 1.3]);
        assert_eq!(feature_at(&l, 4, 4).unwrap().0, vec![1.0, 1.1, 1.4, 1.3, 1.0]);
        assert_eq!(feature_at(&l, 2, 4), None);
        let gapped = LambdaSeries {
            start: 0,
            values: vec![Some(1.0), None, Some(1.0), Some(1.0), Some(1.0)],
        };
        assert_eq!(feature_at(&gapped, 4, 4), None);
        assert!(feature_at(&gapped, 4, 3).is_some());
    }

    fn trace(values: &[f64]) -> EigenTrace {
        EigenTrace {
            rank: 3,
            steps: values.iter().map(|&v| Some(vec![v, v / 2.0, 0.0])).collect(),
        }
    }

    #[test]
    fn all_eigs_layout() {
        let f = Featurizer {
            mode: FeatureMode::AllEigs,
            ..Featurizer::default()
        };
        assert_eq!(f.dim(), 13);
        let v = f.features_at(&trace(&[1.0, 2.0, 3.0, 4.0]), 3).unwrap();
        assert_eq!(v.0, vec![1.0, 0.5, 0.0, 2.0, 1.0, 0.0, 3.0, 1.5, 0.0, 4.0, 2.0, 0.0, 1.0]);
    }

    #[test]
    fn window_matches_batch() {
        let tr = trace(&[1.0, 1.1, 1.2, 1.3, 1.4, 1.5]);
        let f = Featurizer::default();
        let mut w = FeatureWindow::new(f);
        for t in 0..tr.len() {
            let got = w.push(tr.steps[t].clone().unwrap());
            assert_eq!(got, f.features_at(&tr, t));
        }
    }

    #[test]
    fn meal_within_is_inclusive() {
        let meals = [MealEvent { time: 100, carbs: 50.0 }];
        assert!(meal_within(&meals, 100, 12));
        assert!(meal_within(&meals, 112, 12));
        assert!(!meal_within(&meals, 113, 12));
        assert!(!meal_within(&meals, 99, 12));
    }

    #[test]
    fn positive_four_steps_after_meal() {
        let tr = trace(&vec![1.0; 288]);
        let meals = [MealEvent { time: 100, carbs: 60.0 }];
        let set = build_training_set(
            &[SubjectTrace {
                id: 0,
                trace: &tr,
                meals: &meals,
                step_minutes: 5,
            }],
            &Featurizer::default(),
            &LabelingConfig::default(),
        );
        let pos: Vec<usize> = set.samples.iter().filter(|s| s.label == 1).map(|s| s.time).collect();
        assert_eq!(pos, vec![104]);
        assert_eq!(set.negatives(), 5);
        assert!(set
            .samples
            .iter()
            .filter(|s| s.label == 0)
            .all(|s| !meal_within(&meals, s.time, 12)));
    }

    #[test]
    fn meal_near_end_is_skipped() {
        let tr = trace(&vec![1.0; 50]);
        let meals = [MealEvent { time: 48, carbs: 60.0 }];
        let set = build_training_set(
            &[SubjectTrace {
                id: 0,
                trace: &tr,
                meals: &meals,
                step_minutes: 5,
            }],
            &Featurizer::default(),
            &LabelingConfig::default(),
        );
        assert_eq!(set.skipped_meals, 1);
        assert_eq!(set.positives(), 0);
    }

    #[test]
    fn csv_header() {
        let set = TrainingSet::default();
        let csv = set.to_csv(&Featurizer::default(), Some("cfg"));
        assert_eq!(csv, "# cfg\nsubject,t,l1,l2,l3,l4,label\n");
    }
}
