//! Windowed DMD on one synthetic day: prints λ_max around breakfast and
//! every spike above the threshold.
//!
//!     cargo run --example windowed_dmd

use mealdmd::pipeline::analyze_series;
use mealdmd::synth::{simulate_subject, SubjectParams, JitterConfig};
use mealdmd::RunConfig;

fn main() {
    let cfg = RunConfig::default();
    let series = simulate_subject(&SubjectParams::default(), 1, 7, &JitterConfig::none()).unwrap();
    let a = analyze_series(&series, &cfg).unwrap();

    let breakfast = series.meals[0];
    println!("breakfast {:.1} g at t={}", breakfast.carbs, breakfast.time);
    println!("{:>5} {:>8} {:>8}", "min", "glucose", "λ_max");
    for t in breakfast.time.saturating_sub(2)..breakfast.time + 12 {
        let minutes = (t as i64 - breakfast.time as i64) * i64::from(cfg.step_minutes);
        let lambda = a.lambda.get(t).map_or("-".to_string(), |l| format!("{l:.4}"));
        println!("{minutes:>5} {:>8.1} {lambda:>8}", series.glucose[t].unwrap());
    }

    println!("\nspikes (λ_max > {}):", cfg.spike_threshold);
    for s in &a.spikes {
        println!("  t={:<4} peak {:.3} at t={}", s.time, s.peak_value, s.peak_time);
    }

    let w = &a.results[breakfast.time + 2 - a.results[0].end_time];
    println!("\nwindow ending at t={}: rank {}, eigenvalues", w.end_time, w.retained_rank());
    for l in &w.eigenvalues {
        println!("  {:.4} {:+.4}i  |λ| = {:.4}", l.re, l.im, l.norm());
    }
}
