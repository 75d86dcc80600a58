//! Synthetic CGM corpora with known meals.
//!
//! The generator is a deliberately simple linear toy, not a physiological
//! simulator. Ingested carbohydrate passes through a gastric and a gut
//! compartment before appearing in plasma, and glucose relaxes to basal
//! at a constant rate:
//!
//! ```text
//! q1' = −k_g q1                        (stomach, mg/kg)
//! q2' =  k_g q1 − k_a q2               (gut, mg/kg)
//! G'  = −(S_g + S_i)(G − G_b) + k_a q2 / V
//! ```
//!
//! A meal of `c` grams adds `c · 1000 · f / weight` mg/kg to `q1`, with
//! bioavailability `f`. The system is integrated with one-minute RK4 steps,
//! sampled every five minutes, perturbed with i.i.d. Gaussian noise and
//! clamped to the sensor range.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{GridSeries, MealEvent};

/// 2024-01-01T00:00:00Z.
pub const DEFAULT_START: i64 = 1_704_067_200;
pub const STEP_MINUTES: u32 = 5;
pub const SAMPLES_PER_DAY: usize = 288;
const BIOAVAILABILITY: f64 = 0.9;
const GLUCOSE_MIN: f64 = 40.0;
const GLUCOSE_MAX: f64 = 400.0;

/// Nominal meals: (minute of day, grams per kg body weight).
pub const NOMINAL_MEALS: [(u32, f64); 3] = [(8 * 60, 1.0), (13 * 60, 0.7), (19 * 60, 1.2)];

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid subject parameter: {0}")]
    Param(String),
    #[error("days must be at least 1")]
    NoDays,
    #[error("subjects must be at least 1")]
    NoSubjects,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectParams {
    /// kg
    pub weight: f64,
    /// mg/dL
    pub glucose_basal: f64,
    /// Stomach emptying rate, 1/min.
    pub gastric_emptying_rate: f64,
    /// Gut absorption rate, 1/min.
    pub absorption_rate: f64,
    /// Insulin-independent glucose clearance, 1/min.
    pub glucose_effectiveness: f64,
    /// Insulin-dependent glucose clearance, 1/min.
    pub insulin_action: f64,
    /// dL/kg
    pub distribution_volume: f64,
    /// mg/dL
    pub noise_sigma: f64,
}

impl Default for SubjectParams {
    fn default() -> Self {
        Self {
            weight: 70.0,
            glucose_basal: 120.0,
            gastric_emptying_rate: 0.15,
            absorption_rate: 0.05,
            glucose_effectiveness: 0.01,
            insulin_action: 0.02,
            distribution_volume: 2.8,
            noise_sigma: 2.0,
        }
    }
}

impl SubjectParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let positive = [
            ("gastric_emptying_rate", self.gastric_emptying_rate),
            ("absorption_rate", self.absorption_rate),
            ("glucose_effectiveness", self.glucose_effectiveness),
            ("insulin_action", self.insulin_action),
            ("distribution_volume", self.distribution_volume),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SynthError::Param(format!("{name} must be positive, got {v}")));
            }
        }
        if !(30.0..=150.0).contains(&self.weight) {
            return Err(SynthError::Param(format!("weight {} kg outside [30, 150]", self.weight)));
        }
        if !(70.0..=180.0).contains(&self.glucose_basal) {
            return Err(SynthError::Param(format!(
                "basal glucose {} mg/dL outside [70, 180]",
                self.glucose_basal
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(SynthError::Param(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterConfig {
    /// Uniform timing jitter half-width, minutes (snapped to the grid).
    pub timing_minutes: f64,
    /// Uniform portion jitter half-width as a fraction of the nominal size.
    pub portion_fraction: f64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self {
            timing_minutes: 45.0,
            portion_fraction: 0.25,
        }
    }
}

impl JitterConfig {
    pub fn none() -> Self {
        Self {
            timing_minutes: 0.0,
            portion_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledMeal {
    /// Minutes after midnight, on the sampling grid.
    pub minute_of_day: u32,
    pub grams: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MealSchedule {
    pub day: usize,
    pub meals: Vec<ScheduledMeal>,
}

fn day_rng(seed: u64, day: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(day as u64);
    rng
}

/// Three weight-based meals for one day, deterministic per `(seed, day)`.
/// Grams are rounded to 0.1 g.
pub fn meal_schedule(weight: f64, day: usize, seed: u64, jitter: &JitterConfig) -> MealSchedule {
    let mut rng = day_rng(seed, day);
    let step = f64::from(STEP_MINUTES);
    let meals = NOMINAL_MEALS
        .iter()
        .map(|&(minute, per_kg)| {
            let dt: f64 = rng.gen_range(-1.0..=1.0) * jitter.timing_minutes;
            let scale: f64 = 1.0 + rng.gen_range(-1.0..=1.0) * jitter.portion_fraction;
            let offset = ((dt / step).round() * step) as i64;
            let minute_of_day = (i64::from(minute) + offset).clamp(0, 1440 - i64::from(STEP_MINUTES)) as u32;
            ScheduledMeal {
                minute_of_day,
                grams: (per_kg * weight * scale * 10.0).round() / 10.0,
            }
        })
        .collect();
    MealSchedule { day, meals }
}

#[derive(Debug, Clone, Copy)]
struct State {
    stomach: f64,
    gut: f64,
    glucose: f64,
}

fn derivative(p: &SubjectParams, s: State) -> State {
    let clearance = p.glucose_effectiveness + p.insulin_action;
    State {
        stomach: -p.gastric_emptying_rate * s.stomach,
        gut: p.gastric_emptying_rate * s.stomach - p.absorption_rate * s.gut,
        glucose: -clearance * (s.glucose - p.glucose_basal) + p.absorption_rate * s.gut / p.distribution_volume,
    }
}

fn rk4(p: &SubjectParams, s: State, h: f64) -> State {
    let add = |a: State, b: State, k: f64| State {
        stomach: a.stomach + k * b.stomach,
        gut: a.gut + k * b.gut,
        glucose: a.glucose + k * b.glucose,
    };
    let k1 = derivative(p, s);
    let k2 = derivative(p, add(s, k1, h / 2.0));
    let k3 = derivative(p, add(s, k2, h / 2.0));
    let k4 = derivative(p, add(s, k3, h));
    State {
        stomach: s.stomach + h / 6.0 * (k1.stomach + 2.0 * k2.stomach + 2.0 * k3.stomach + k4.stomach),
        gut: s.gut + h / 6.0 * (k1.gut + 2.0 * k2.gut + 2.0 * k3.gut + k4.gut),
        glucose: s.glucose + h / 6.0 * (k1.glucose + 2.0 * k2.glucose + 2.0 * k3.glucose + k4.glucose),
    }
}

/// Noise-free glucose at every grid point for the given meals. A meal at
/// grid index `k` is ingested right after sample `k` is taken.
pub fn noise_free_trajectory(p: &SubjectParams, len: usize, meals: &[MealEvent]) -> Vec<f64> {
    let mut sorted = meals.to_vec();
    sorted.sort_by_key(|m| m.time);
    let mut meals = sorted.iter().peekable();
    let mut s = State {
        stomach: 0.0,
        gut: 0.0,
        glucose: p.glucose_basal,
    };
    let mut out = Vec::with_capacity(len);
    for k in 0..len {
        out.push(s.glucose);
        while let Some(m) = meals.next_if(|m| m.time == k) {
            s.stomach += m.carbs * 1000.0 * BIOAVAILABILITY / p.weight;
        }
        for _ in 0..STEP_MINUTES {
            s = rk4(p, s, 1.0);
        }
    }
    out
}

/// Simulates a series of `len` samples with the given meals and sensor
/// noise drawn from `seed`.
pub fn simulate_with_meals(p: &SubjectParams, len: usize, meals: &[MealEvent], seed: u64) -> Result<GridSeries, SynthError> {
    p.validate()?;
    let clean = noise_free_trajectory(p, len, meals);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let values: Vec<f64> = clean
        .iter()
        .map(|g| {
            let z: f64 = rng.sample(StandardNormal);
            (g + p.noise_sigma * z).clamp(GLUCOSE_MIN, GLUCOSE_MAX)
        })
        .collect();
    let mut series = GridSeries::from_values(DEFAULT_START, STEP_MINUTES, &values);
    let mut truth: Vec<MealEvent> = meals.iter().copied().filter(|m| m.time < len).collect();
    truth.sort_by_key(|m| m.time);
    series.meals = truth;
    Ok(series)
}

/// The grid-indexed meals of `days` consecutive schedules.
pub fn schedule_meals(weight: f64, days: usize, seed: u64, jitter: &JitterConfig) -> Vec<MealEvent> {
    (0..days)
        .flat_map(|day| {
            meal_schedule(weight, day, seed, jitter)
                .meals
                .into_iter()
                .map(move |m| MealEvent {
                    time: day * SAMPLES_PER_DAY + (m.minute_of_day / STEP_MINUTES) as usize,
                    carbs: m.grams,
                })
        })
        .collect()
}

/// Simulates `days` days of three jittered meals per day. The returned
/// series carries the ground-truth meals.
pub fn simulate_subject(p: &SubjectParams, days: usize, seed: u64, jitter: &JitterConfig) -> Result<GridSeries, SynthError> {
    if days == 0 {
        return Err(SynthError::NoDays);
    }
    p.validate()?;
    let meals = schedule_meals(p.weight, days, seed, jitter);
    simulate_with_meals(p, days * SAMPLES_PER_DAY, &meals, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub subjects: usize,
    pub days: usize,
    pub seed: u64,
    pub jitter: JitterConfig,
    pub noise_sigma: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            subjects: 20,
            days: 14,
            seed: 42,
            jitter: JitterConfig::default(),
            noise_sigma: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSubject {
    pub id: usize,
    pub seed: u64,
    pub params: SubjectParams,
    pub series: GridSeries,
}

/// Per-subject seed derived from the corpus seed.
pub fn subject_seed(corpus_seed: u64, id: usize) -> u64 {
    corpus_seed.wrapping_mul(1_000_003).wrapping_add(id as u64)
}

/// Draws subject `id`'s parameters: weight U[50, 100] kg, basal
/// U[90, 150] mg/dL and each rate scaled by U[0.8, 1.2].
pub fn subject_params(corpus_seed: u64, id: usize, noise_sigma: f64) -> SubjectParams {
    let mut rng = ChaCha8Rng::seed_from_u64(corpus_seed);
    rng.set_stream(1 << 40 | id as u64);
    let base = SubjectParams::default();
    let mut scale = || rng.gen_range(0.8..=1.2);
    let gastric = base.gastric_emptying_rate * scale();
    let absorption = base.absorption_rate * scale();
    let effectiveness = base.glucose_effectiveness * scale();
    let insulin = base.insulin_action * scale();
    SubjectParams {
        weight: (rng.gen_range(50.0..=100.0) * 10.0f64).round() / 10.0,
        glucose_basal: (rng.gen_range(90.0..=150.0) * 10.0f64).round() / 10.0,
        gastric_emptying_rate: gastric,
        absorption_rate: absorption,
        glucose_effectiveness: effectiveness,
        insulin_action: insulin,
        distribution_volume: base.distribution_volume,
        noise_sigma,
    }
}

/// Generates every subject of a corpus in parallel; output is ordered by id.
pub fn generate_corpus(cfg: &CorpusConfig) -> Result<Vec<SyntheticSubject>, SynthError> {
    if cfg.subjects == 0 {
        return Err(SynthError::NoSubjects);
    }
    if cfg.days == 0 {
        return Err(SynthError::NoDays);
    }
    (0..cfg.subjects)
        .into_par_iter()
        .map(|id| {
            let params = subject_params(cfg.seed, id, cfg.noise_sigma);
            let seed = subject_seed(cfg.seed, id);
            let series = simulate_subject(&params, cfg.days, seed, &cfg.jitter)?;
            Ok(SyntheticSubject { id, seed, params, series })
        })
        .collect()
}
