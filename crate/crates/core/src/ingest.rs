//! CGM ingestion: CSV parsing, alignment to a uniform sampling grid, and
//! short-gap interpolation.
//!
//! The accepted CSV shape is a header followed by one row per timestamp:
//!
//! ```text
//! timestamp,glucose[,meal_g]
//! 1704067200,112.5,
//! 2024-01-01T00:05:00Z,114.0,45
//! ```
//!
//! Timestamps are integer seconds since the Unix epoch or ISO-8601 (a missing
//! offset is read as UTC). Lines starting with `#` are comments. A row may
//! leave `glucose` empty only if it carries a meal.

use std::fmt::Write as _;
use std::io::Read;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default sampling period in minutes.
pub const DEFAULT_STEP_MINUTES: u32 = 5;
/// Default upper bound (exclusive) on interpolated gap duration in minutes.
pub const DEFAULT_MAX_GAP_MINUTES: u32 = 30;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("line {line}: glucose {value} mg/dL outside (0, 1000)")]
    Validation { line: u64, value: f64 },
    #[error("no glucose samples")]
    Empty,
    #[error("sampling period must be positive")]
    BadStep,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Meal,
    HypoTreatment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub timestamp: i64,
    pub kind: EventKind,
    pub carbs: Option<f64>,
}

/// Parsed, time-sorted CGM records and events.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawSeries {
    /// `(seconds since epoch, mg/dL)`, strictly increasing in time.
    pub records: Vec<(i64, f64)>,
    pub events: Vec<RawEvent>,
}

/// A meal aligned to the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MealEvent {
    /// Grid index.
    pub time: usize,
    /// Carbohydrate amount in grams.
    pub carbs: f64,
}

/// A uniformly sampled CGM series.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSeries {
    /// Timestamp of grid index 0, seconds since epoch.
    pub start: i64,
    pub step_minutes: u32,
    /// `None` marks a missing sample.
    pub glucose: Vec<Option<f64>>,
    /// Marks samples produced by interpolation.
    pub filled: Vec<bool>,
    /// Sorted by grid index, at most one entry per index.
    pub meals: Vec<MealEvent>,
}

/// A maximal run of consecutive non-missing samples.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    /// Grid index of `values[0]`.
    pub start: usize,
    pub values: &'a [f64],
    pub filled: &'a [bool],
}

impl Segment<'_> {
    /// One past the last grid index covered.
    pub fn end(&self) -> usize {
        self.start + self.values.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, t: usize) -> bool {
        t >= self.start && t < self.end()
    }
}

/// Segments borrow glucose values from this owned, missing-free copy.
#[derive(Debug, Clone)]
pub struct SegmentedSeries {
    values: Vec<f64>,
    filled: Vec<bool>,
    ranges: Vec<(usize, usize)>,
}

impl SegmentedSeries {
    pub fn segments(&self) -> impl Iterator<Item = Segment<'_>> + '_ {
        self.ranges.iter().map(move |&(a, b)| Segment {
            start: a,
            values: &self.values[a..b],
            filled: &self.filled[a..b],
        })
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }
}

impl GridSeries {
    /// A fully observed series with no meals.
    pub fn from_values(start: i64, step_minutes: u32, values: &[f64]) -> Self {
        Self {
            start,
            step_minutes,
            glucose: values.iter().copied().map(Some).collect(),
            filled: vec![false; values.len()],
            meals: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.glucose.len()
    }

    pub fn is_empty(&self) -> bool {
        self.glucose.is_empty()
    }

    pub fn step_seconds(&self) -> i64 {
        i64::from(self.step_minutes) * 60
    }

    pub fn timestamp(&self, t: usize) -> i64 {
        self.start + t as i64 * self.step_seconds()
    }

    pub fn missing_count(&self) -> usize {
        self.glucose.iter().filter(|g| g.is_none()).count()
    }

    /// Splits the series at missing samples.
    pub fn segmented(&self) -> SegmentedSeries {
        let values: Vec<f64> = self.glucose.iter().map(|g| g.unwrap_or(f64::NAN)).collect();
        let mut ranges = Vec::new();
        let mut run_start = None;
        for (i, g) in self.glucose.iter().enumerate() {
            match (g, run_start) {
                (Some(_), None) => run_start = Some(i),
                (None, Some(s)) => {
                    ranges.push((s, i));
                    run_start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = run_start {
            ranges.push((s, self.glucose.len()));
        }
        SegmentedSeries {
            values,
            filled: self.filled.clone(),
            ranges,
        }
    }

    /// Writes the series in the ingest CSV format. Missing samples are
    /// omitted unless a meal sits on them.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp,glucose,meal_g\n");
        let mut meals = self.meals.iter().peekable();
        for (t, g) in self.glucose.iter().enumerate() {
            let meal = match meals.peek() {
                Some(m) if m.time == t => meals.next(),
                _ => None,
            };
            if g.is_none() && meal.is_none() {
                continue;
            }
            let _ = write!(out, "{},", self.timestamp(t));
            if let Some(v) = g {
                let _ = write!(out, "{v}");
            }
            out.push(',');
            if let Some(m) = meal {
                let _ = write!(out, "{}", m.carbs);
            }
            out.push('\n');
        }
        out
    }
}

fn parse_timestamp(field: &str) -> Option<i64> {
    if let Ok(v) = field.parse::<i64>() {
        return Some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(field) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(field, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

/// Parses one CSV row (already split) into its timestamp, glucose and meal
/// fields. `line` is used for error reporting only.
pub fn parse_row(fields: &[&str], line: u64) -> Result<(i64, Option<f64>, Option<f64>), IngestError> {
    let err = |msg: String| IngestError::Parse { line, msg };
    if fields.len() < 2 {
        return Err(err(format!("expected at least 2 columns, found {}", fields.len())));
    }
    let ts_field = fields[0].trim();
    let ts = parse_timestamp(ts_field).ok_or_else(|| err(format!("bad timestamp {ts_field:?}")))?;
    let g_field = fields[1].trim();
    let glucose = if g_field.is_empty() {
        None
    } else {
        let v: f64 = g_field
            .parse()
            .map_err(|_| err(format!("bad glucose value {g_field:?}")))?;
        if !(v.is_finite() && v > 0.0 && v < 1000.0) {
            return Err(IngestError::Validation { line, value: v });
        }
        Some(v)
    };
    let meal = match fields.get(2).map(|s| s.trim()) {
        None | Some("") => None,
        Some(m) => {
            let v: f64 = m.parse().map_err(|_| err(format!("bad meal grams {m:?}")))?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(err(format!("meal grams must be non-negative, got {v}")));
            }
            (v > 0.0).then_some(v)
        }
    };
    if glucose.is_none() && meal.is_none() {
        return Err(err("empty glucose without a meal".into()));
    }
    Ok((ts, glucose, meal))
}

/// Parses the ingest CSV. Rows are sorted by timestamp and duplicate
/// timestamps collapse to the last occurrence in file order.
pub fn parse_cgm_csv<R: Read>(input: R) -> Result<RawSeries, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows: Vec<(i64, Option<f64>, Option<f64>)> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let fields: Vec<&str> = rec.iter().collect();
        rows.push(parse_row(&fields, line)?);
    }
    // stable sort keeps file order among equal timestamps; keep the last
    rows.sort_by_key(|r| r.0);
    let mut deduped: Vec<(i64, Option<f64>, Option<f64>)> = Vec::with_capacity(rows.len());
    for r in rows {
        match deduped.last_mut() {
            Some(last) if last.0 == r.0 => *last = r,
            _ => deduped.push(r),
        }
    }
    let mut raw = RawSeries::default();
    for (ts, g, meal) in deduped {
        if let Some(g) = g {
            raw.records.push((ts, g));
        }
        if let Some(carbs) = meal {
            raw.events.push(RawEvent {
                timestamp: ts,
                kind: EventKind::Meal,
                carbs: Some(carbs),
            });
        }
    }
    Ok(raw)
}

/// Nearest grid index for an offset in seconds, with the distance to it in
/// seconds. Ties go to the earlier point.
pub fn snap(offset: i64, step: i64) -> (i64, i64) {
    let q = offset.div_euclid(step);
    let rem = offset.rem_euclid(step);
    if rem * 2 > step {
        (q + 1, step - rem)
    } else {
        (q, rem)
    }
}

/// Snaps samples and meals to the nearest point of a grid anchored at the
/// first sample. When two samples land on one grid point the closer one
/// wins (later one on equal distance). Meals outside the sample span are
/// dropped; meals sharing a grid point are summed.
pub fn align_to_grid(raw: &RawSeries, step_minutes: u32) -> Result<GridSeries, IngestError> {
    if step_minutes == 0 {
        return Err(IngestError::BadStep);
    }
    let first = raw.records.first().ok_or(IngestError::Empty)?.0;
    let last = raw.records.last().ok_or(IngestError::Empty)?.0;
    let step = i64::from(step_minutes) * 60;
    let n = snap(last - first, step).0 as usize + 1;
    let mut glucose: Vec<Option<f64>> = vec![None; n];
    let mut dist: Vec<i64> = vec![i64::MAX; n];
    for &(ts, g) in &raw.records {
        let (idx, d) = snap(ts - first, step);
        let idx = idx as usize;
        if d <= dist[idx] {
            dist[idx] = d;
            glucose[idx] = Some(g);
        }
    }
    let mut meals: Vec<MealEvent> = Vec::new();
    for ev in raw.events.iter().filter(|e| e.kind == EventKind::Meal) {
        let Some(carbs) = ev.carbs.filter(|c| *c > 0.0) else {
            continue;
        };
        let (idx, _) = snap(ev.timestamp - first, step);
        if idx < 0 || idx as usize >= n {
            continue;
        }
        let idx = idx as usize;
        match meals.iter_mut().find(|m| m.time == idx) {
            Some(m) => m.carbs += carbs,
            None => meals.push(MealEvent { time: idx, carbs }),
        }
    }
    meals.sort_by_key(|m| m.time);
    Ok(GridSeries {
        start: first,
        step_minutes,
        glucose,
        filled: vec![false; n],
        meals,
    })
}

/// Linearly interpolates interior runs of missing samples whose duration
/// (`run length × step`) is strictly below `max_gap_minutes`. Longer runs,
/// and runs touching either end, stay missing and later split the series
/// into segments.
pub fn fill_gaps(g: &GridSeries, max_gap_minutes: u32) -> GridSeries {
    let mut out = g.clone();
    let n = g.glucose.len();
    let mut i = 0;
    while i < n {
        if g.glucose[i].is_some() {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < n && g.glucose[i].is_none() {
            i += 1;
        }
        let run_len = i - run_start;
        if run_start == 0 || i == n {
            continue;
        }
        if (run_len as u64) * u64::from(g.step_minutes) >= u64::from(max_gap_minutes) {
            continue;
        }
        let left = g.glucose[run_start - 1].expect("flank present");
        let right = g.glucose[i].expect("flank present");
        for (k, v) in interpolate_run(left, right, run_len).enumerate() {
            out.glucose[run_start + k] = Some(v);
            out.filled[run_start + k] = true;
        }
    }
    out
}

/// The `run_len` linearly interpolated values strictly between two flanks.
pub fn interpolate_run(left: f64, right: f64, run_len: usize) -> impl Iterator<Item = f64> {
    let span = (run_len + 1) as f64;
    (0..run_len).map(move |k| left + (right - left) * ((k + 1) as f64 / span))
}

/// Convenience: parse, align and fill in one go.
pub fn load_series<R: Read>(input: R, step_minutes: u32, max_gap_minutes: u32) -> Result<GridSeries, IngestError> {
    let raw = parse_cgm_csv(input)?;
    let grid = align_to_grid(&raw, step_minutes)?;
    Ok(fill_gaps(&grid, max_gap_minutes))
}
