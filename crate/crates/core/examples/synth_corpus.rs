//! Generates the default 20-subject, 14-day corpus and summarizes it.
//!
//!     cargo run --release --example synth_corpus

use mealdmd::synth::{generate_corpus, CorpusConfig};

fn main() {
    let cfg = CorpusConfig::default();
    let corpus = generate_corpus(&cfg).unwrap();
    println!("{} subjects x {} days, seed {}", cfg.subjects, cfg.days, cfg.seed);
    println!("{:>3} {:>6} {:>6} {:>6} {:>7} {:>7}", "id", "kg", "basal", "meals", "mean g", "max mg");
    for s in &corpus {
        let grams: f64 = s.series.meals.iter().map(|m| m.carbs).sum();
        let peak = s.series.glucose.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
        println!(
            "{:>3} {:>6.1} {:>6.1} {:>6} {:>7.1} {:>7.1}",
            s.id,
            s.params.weight,
            s.params.glucose_basal,
            s.series.meals.len(),
            grams / s.series.meals.len() as f64,
            peak
        );
    }
    let first = &corpus[0].series;
    println!("\nfirst rows of subject 0:");
    for line in first.to_csv().lines().take(4) {
        println!("  {line}");
    }
}
