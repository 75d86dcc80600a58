//! Detection metrics: meal matching, recall/FPR, ROC/AUC, detection delays
//! and spike/meal association statistics.
//!
//! All times are grid indices; windows are given in minutes and converted
//! with the series' sampling period.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::DetectionEvent;
use crate::features::SpikeEvent;
use crate::ingest::MealEvent;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no evaluable meals")]
    NoMeals,
    #[error("no negative decision points")]
    NoNegatives,
    #[error("ROC needs both classes (positives {positives}, negatives {negatives})")]
    SingleClass { positives: usize, negatives: usize },
    #[error("non-finite score at position {index}")]
    NonFiniteScore { index: usize },
}

fn steps(minutes: u32, step_minutes: u32) -> usize {
    (minutes / step_minutes.max(1)) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MealOutcome {
    pub meal: MealEvent,
    /// Grid index of the matched detection.
    pub detection: Option<usize>,
    /// False when fewer than TW minutes of data follow the meal.
    pub evaluable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub tw_minutes: u32,
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fp: usize,
    /// Meals excluded for lack of trailing data.
    pub excluded: usize,
    pub outcomes: Vec<MealOutcome>,
}

impl MatchReport {
    pub fn evaluable(&self) -> usize {
        self.tp + self.fn_
    }

    /// Sums counts and concatenates outcomes.
    pub fn merge(&mut self, other: &MatchReport) {
        self.tp += other.tp;
        self.fn_ += other.fn_;
        self.fp += other.fp;
        self.excluded += other.excluded;
        self.outcomes.extend_from_slice(&other.outcomes);
    }
}

/// Greedy chronological one-to-one matching.
///
/// Each detection at `s` goes to the earliest unmatched meal `m` with
/// `m ≤ s ≤ m + TW`; unmatched detections are false positives and
/// unmatched meals false negatives. Meals with fewer than TW minutes of
/// data after them (`m + TW ≥ series_len`) are excluded from the counts
/// but still absorb detections.
pub fn match_detections(
    meals: &[MealEvent],
    detections: &[DetectionEvent],
    tw_minutes: u32,
    step_minutes: u32,
    series_len: usize,
) -> MatchReport {
    let tw = steps(tw_minutes, step_minutes);
    let mut meals = meals.to_vec();
    meals.sort_by(|a, b| a.time.cmp(&b.time).then(a.carbs.total_cmp(&b.carbs)));
    let mut dets: Vec<usize> = detections.iter().map(|d| d.time).collect();
    dets.sort_unstable();
    let mut outcomes: Vec<MealOutcome> = meals
        .iter()
        .map(|&meal| MealOutcome {
            meal,
            detection: None,
            evaluable: meal.time + tw < series_len,
        })
        .collect();
    let mut fp = 0;
    let mut first_open = 0;
    for s in dets {
        while first_open < outcomes.len() && outcomes[first_open].meal.time + tw < s {
            first_open += 1;
        }
        let hit = outcomes[first_open..]
            .iter_mut()
            .take_while(|o| o.meal.time <= s)
            .find(|o| o.detection.is_none() && s <= o.meal.time + tw);
        match hit {
            Some(o) => o.detection = Some(s),
            None => fp += 1,
        }
    }
    let tp = outcomes.iter().filter(|o| o.evaluable && o.detection.is_some()).count();
    let fn_ = outcomes.iter().filter(|o| o.evaluable && o.detection.is_none()).count();
    MatchReport {
        tw_minutes,
        tp,
        fn_,
        fp,
        excluded: outcomes.len() - tp - fn_,
        outcomes,
    }
}

/// Decision points with no meal `m` such that `0 ≤ t − m ≤ TW`.
pub fn count_negative_points(decision_points: &[usize], meals: &[MealEvent], tw_minutes: u32, step_minutes: u32) -> usize {
    let tw = steps(tw_minutes, step_minutes);
    let mut sorted = meals.to_vec();
    sorted.sort_by_key(|m| m.time);
    decision_points
        .iter()
        .filter(|&&t| !crate::features::meal_within(&sorted, t, tw))
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FprUnit {
    /// False positives per negative decision point.
    #[default]
    PerDecisionPoint,
    /// False positives per hour of negative decision points.
    PerHour,
}

/// `(recall, fpr)`; see [`FprUnit`] for the FPR denominator.
pub fn recall_fpr(
    report: &MatchReport,
    n_negative_points: usize,
    unit: FprUnit,
    step_minutes: u32,
) -> Result<(f64, f64), EvalError> {
    if report.evaluable() == 0 {
        return Err(EvalError::NoMeals);
    }
    if n_negative_points == 0 {
        return Err(EvalError::NoNegatives);
    }
    let recall = report.tp as f64 / report.evaluable() as f64;
    let denom = match unit {
        FprUnit::PerDecisionPoint => n_negative_points as f64,
        FprUnit::PerHour => n_negative_points as f64 * f64::from(step_minutes) / 60.0,
    };
    Ok((recall, report.fp as f64 / denom))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// From (0, 0) at threshold +∞ to (1, 1), one point per distinct score.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv(&self, comment: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(c) = comment {
            let _ = writeln!(out, "# {c}");
        }
        out.push_str("threshold,fpr,tpr\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr);
        }
        out
    }
}

/// ROC curve by sweeping the threshold over distinct scores, with the
/// trapezoid AUC.
///
/// Tied scores form a single diagonal step, so the area equals the
/// Mann–Whitney statistic with ties counted as one half. The area is
/// accumulated as an integer numerator over `2·P·N`, which makes it
/// identical to the pairwise count, not just close to it.
pub fn roc_auc(scores: &[(f64, bool)]) -> Result<RocCurve, EvalError> {
    if let Some(index) = scores.iter().position(|(s, _)| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore { index });
    }
    let positives = scores.iter().filter(|(_, l)| *l).count();
    let negatives = scores.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::SingleClass { positives, negatives });
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (p, n) = (positives as f64, negatives as f64);
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u128, 0u128);
    let mut twice_area = 0u128;
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        let (tp0, fp0) = (tp, fp);
        while i < sorted.len() && sorted[i].0 == threshold {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_area += (fp - fp0) * (tp + tp0);
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / n,
            tpr: tp as f64 / p,
        });
    }
    let auc = twice_area as f64 / (2 * positives as u128 * negatives as u128) as f64;
    Ok(RocCurve { points, auc })
}

/// Per meal, minutes from the meal to the first detection in
/// `[meal, meal + horizon]`, or `None`.
pub fn detection_delays(
    meals: &[MealEvent],
    detections: &[DetectionEvent],
    horizon_minutes: u32,
    step_minutes: u32,
) -> Vec<Option<f64>> {
    let horizon = steps(horizon_minutes, step_minutes);
    let mut dets: Vec<usize> = detections.iter().map(|d| d.time).collect();
    dets.sort_unstable();
    meals
        .iter()
        .map(|m| {
            let i = dets.partition_point(|&s| s < m.time);
            dets.get(i)
                .filter(|&&s| s <= m.time + horizon)
                .map(|&s| ((s - m.time) as u64 * u64::from(step_minutes)) as f64)
        })
        .collect()
}

/// Linear-interpolation quantile (type 7) of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySummary {
    pub n: usize,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    pub iqr: Option<f64>,
}

pub fn summarize_delays(delays: &[f64]) -> DelaySummary {
    let mut d = delays.to_vec();
    d.sort_by(f64::total_cmp);
    let q1 = quantile(&d, 0.25);
    let q3 = quantile(&d, 0.75);
    DelaySummary {
        n: d.len(),
        median: quantile(&d, 0.5),
        q1,
        q3,
        iqr: q1.zip(q3).map(|(a, b)| b - a),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SizeBin {
    #[serde(rename = "<40")]
    Under40,
    #[serde(rename = "40-60")]
    From40To60,
    #[serde(rename = "60-90")]
    From60To90,
    #[serde(rename = ">90")]
    Over90,
}

impl SizeBin {
    pub const ALL: [SizeBin; 4] = [SizeBin::Under40, SizeBin::From40To60, SizeBin::From60To90, SizeBin::Over90];

    /// `<40`, `[40, 60)`, `[60, 90]`, `>90` grams.
    pub fn of(grams: f64) -> Self {
        if grams < 40.0 {
            Self::Under40
        } else if grams < 60.0 {
            Self::From40To60
        } else if grams <= 90.0 {
            Self::From60To90
        } else {
            Self::Over90
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Under40 => "<40",
            Self::From40To60 => "40-60",
            Self::From60To90 => "60-90",
            Self::Over90 => ">90",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    /// Minutes.
    pub gaps: Vec<f64>,
    /// Percentage; `None` when the denominator is zero.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub bin: SizeBin,
    pub meals: usize,
    pub matched: usize,
    pub smr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeMealStats {
    /// Meal → first spike within the forward window; ratio is SMR.
    pub meal_to_spike: GapStats,
    /// Spike → most recent meal within the backward window; ratio is MSR.
    pub spike_to_meal: GapStats,
    /// Percentage of spikes with no meal in the backward window.
    pub isr: Option<f64>,
    pub per_size_bins: Vec<BinStats>,
    /// Per meal, the first spike's gap in minutes (aligned with the input).
    pub meal_gaps: Vec<Option<f64>>,
    pub spike_count: usize,
}

fn pct(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64 * 100.0)
}

/// Spike/meal association statistics. A meal is matched by the first spike
/// `s` with `0 ≤ s − m ≤ forward`; a spike is meal-associated if some meal
/// satisfies `0 ≤ s − m ≤ backward`.
pub fn spike_meal_stats(
    meals: &[MealEvent],
    spikes: &[SpikeEvent],
    forward_minutes: u32,
    backward_minutes: u32,
    step_minutes: u32,
) -> SpikeMealStats {
    let fwd = steps(forward_minutes, step_minutes);
    let back = steps(backward_minutes, step_minutes);
    let mut spike_times: Vec<usize> = spikes.iter().map(|s| s.time).collect();
    spike_times.sort_unstable();
    let mut sorted_meals = meals.to_vec();
    sorted_meals.sort_by_key(|m| m.time);
    let minutes = |d: usize| (d as u64 * u64::from(step_minutes)) as f64;

    let meal_gaps: Vec<Option<f64>> = meals
        .iter()
        .map(|m| {
            let i = spike_times.partition_point(|&s| s < m.time);
            spike_times
                .get(i)
                .filter(|&&s| s - m.time <= fwd)
                .map(|&s| minutes(s - m.time))
        })
        .collect();
    let matched_meals = meal_gaps.iter().flatten().count();

    let mut back_gaps = Vec::new();
    for &s in &spike_times {
        let i = sorted_meals.partition_point(|m| m.time <= s);
        if let Some(m) = i.checked_sub(1).map(|j| sorted_meals[j]) {
            if s - m.time <= back {
                back_gaps.push(minutes(s - m.time));
            }
        }
    }
    let associated = back_gaps.len();

    let per_size_bins = SizeBin::ALL
        .iter()
        .map(|&bin| {
            let in_bin: Vec<&Option<f64>> = meals
                .iter()
                .zip(&meal_gaps)
                .filter(|(m, _)| SizeBin::of(m.carbs) == bin)
                .map(|(_, g)| g)
                .collect();
            let matched = in_bin.iter().filter(|g| g.is_some()).count();
            BinStats {
                bin,
                meals: in_bin.len(),
                matched,
                smr: pct(matched, in_bin.len()),
            }
        })
        .collect();

    SpikeMealStats {
        meal_to_spike: GapStats {
            gaps: meal_gaps.iter().flatten().copied().collect(),
            ratio: pct(matched_meals, meals.len()),
        },
        spike_to_meal: GapStats {
            gaps: back_gaps,
            ratio: pct(associated, spike_times.len()),
        },
        isr: pct(spike_times.len() - associated, spike_times.len()),
        per_size_bins,
        meal_gaps,
        spike_count: spike_times.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meal(t: usize) -> MealEvent {
        MealEvent { time: t, carbs: 50.0 }
    }

    fn det(t: usize) -> DetectionEvent {
        DetectionEvent { time: t, probability: 0.9 }
    }

    // 5-min grid: minute 100 is index 20
    #[test]
    fn match_inside_and_outside_window() {
        let r = match_detections(&[meal(20)], &[det(22)], 15, 5, 1000);
        assert_eq!((r.tp, r.fp, r.fn_), (1, 0, 0));
        let r = match_detections(&[meal(20)], &[det(24)], 15, 5, 1000);
        assert_eq!((r.tp, r.fp, r.fn_), (0, 1, 1));
        let r = match_detections(&[meal(20)], &[det(21), det(22)], 15, 5, 1000);
        assert_eq!((r.tp, r.fp, r.fn_), (1, 1, 0));
    }

    #[test]
    fn late_meal_is_excluded_but_absorbs() {
        let r = match_detections(&[meal(95)], &[det(97)], 30, 5, 100);
        assert_eq!((r.tp, r.fp, r.fn_, r.excluded), (0, 0, 0, 1));
    }

    #[test]
    fn overlapping_meals_match_in_order() {
        let r = match_detections(&[meal(10), meal(12)], &[det(13), det(14)], 30, 5, 100);
        assert_eq!((r.tp, r.fp), (2, 0));
        assert_eq!(r.outcomes[0].detection, Some(13));
        assert_eq!(r.outcomes[1].detection, Some(14));
    }

    #[test]
    fn recall_and_fpr() {
        let r = MatchReport {
            tw_minutes: 30,
            tp: 8,
            fn_: 2,
            fp: 3,
            excluded: 0,
            outcomes: vec![],
        };
        let (rec, fpr) = recall_fpr(&r, 100, FprUnit::PerDecisionPoint, 5).unwrap();
        assert_eq!(rec, 0.8);
        assert_eq!(fpr, 0.03);
        let (_, per_hour) = recall_fpr(&r, 120, FprUnit::PerHour, 5).unwrap();
        assert_eq!(per_hour, 0.3);
        let empty = MatchReport { tp: 0, fn_: 0, ..r };
        assert_eq!(recall_fpr(&empty, 10, FprUnit::PerDecisionPoint, 5), Err(EvalError::NoMeals));
    }

    #[test]
    fn auc_examples() {
        let c = roc_auc(&[(0.1, false), (0.4, false), (0.35, true), (0.8, true)]).unwrap();
        assert_eq!(c.auc, 0.75);
        assert_eq!(roc_auc(&[(0.0, false), (1.0, true)]).unwrap().auc, 1.0);
        assert_eq!(roc_auc(&[(0.3, false), (0.3, true), (0.3, true)]).unwrap().auc, 0.5);
        assert!(roc_auc(&[(0.3, true)]).is_err());
        let last = c.points.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }

    #[test]
    fn delays() {
        // 08:00 = index 96, 08:25 = index 101
        let d = detection_delays(&[meal(96)], &[det(101)], 120, 5);
        assert_eq!(d, vec![Some(25.0)]);
        assert_eq!(detection_delays(&[meal(96)], &[det(96)], 120, 5), vec![Some(0.0)]);
        assert_eq!(detection_delays(&[meal(96)], &[det(121)], 120, 5), vec![None]);
        assert_eq!(detection_delays(&[meal(96)], &[det(95)], 120, 5), vec![None]);
    }

    #[test]
    fn quantiles_type7() {
        let s = summarize_delays(&[10.0, 20.0, 30.0, 40.0]);
        assert_eq!(s.median, Some(25.0));
        assert_eq!(s.q1, Some(17.5));
        assert_eq!(s.q3, Some(32.5));
        assert_eq!(s.iqr, Some(15.0));
        assert_eq!(summarize_delays(&[]).median, None);
    }

    #[test]
    fn spike_stats() {
        let spike = |t| SpikeEvent {
            time: t,
            peak_value: 1.5,
            peak_time: t,
        };
        let s = spike_meal_stats(&[meal(20)], &[spike(23), spike(100)], 40, 60, 5);
        assert_eq!(s.meal_to_spike.gaps, vec![15.0]);
        assert_eq!(s.meal_to_spike.ratio, Some(100.0));
        assert_eq!(s.spike_to_meal.ratio, Some(50.0));
        assert_eq!(s.isr, Some(50.0));
        let bin = s.per_size_bins.iter().find(|b| b.bin == SizeBin::From40To60).unwrap();
        assert_eq!((bin.meals, bin.matched), (1, 1));
        let empty = spike_meal_stats(&[], &[], 40, 60, 5);
        assert_eq!(empty.isr, None);
    }

    #[test]
    fn size_bins() {
        assert_eq!(SizeBin::of(39.9), SizeBin::Under40);
        assert_eq!(SizeBin::of(40.0), SizeBin::From40To60);
        assert_eq!(SizeBin::of(60.0), SizeBin::From60To90);
        assert_eq!(SizeBin::of(90.0), SizeBin::From60To90);
        assert_eq!(SizeBin::of(90.1), SizeBin::Over90);
    }
}
