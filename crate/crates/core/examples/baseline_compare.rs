//! Side by side on one subject: when the rate-of-change baseline and the
//! DMD detector fire relative to each meal.
//!
//!     cargo run --release --example baseline_compare

use mealdmd::baseline::roc_detect;
use mealdmd::classifier::DetectionEvent;
use mealdmd::pipeline::{detect_series, train_corpus, Subject};
use mealdmd::synth::{generate_corpus, CorpusConfig};
use mealdmd::RunConfig;

fn first_after(events: &[DetectionEvent], t: usize) -> Option<usize> {
    events.iter().map(|e| e.time).find(|&e| e >= t && e - t <= 24)
}

fn main() {
    let cfg = RunConfig::default();
    let corpus = generate_corpus(&CorpusConfig::default()).unwrap();
    let subjects: Vec<Subject<'_>> = corpus[..15].iter().map(|s| Subject { id: s.id, series: &s.series }).collect();
    let (model, _) = train_corpus(&subjects, &cfg).unwrap();

    let series = &corpus[17].series;
    let dmd = detect_series(series, &model, &cfg).unwrap().events;
    let roc = roc_detect(series, &cfg.baseline());
    println!("{:>6} {:>7} {:>9} {:>9}", "t", "grams", "dmd min", "roc min");
    let fmt = |d: Option<usize>, m: usize| d.map_or("-".into(), |d| format!("{}", (d - m) * 5));
    for m in series.meals.iter().take(15) {
        println!(
            "{:>6} {:>7.1} {:>9} {:>9}",
            m.time,
            m.carbs,
            fmt(first_after(&dmd, m.time), m.time),
            fmt(first_after(&roc, m.time), m.time)
        );
    }
    println!("\nevents over {} days: dmd {}, baseline {}", series.len() / 288, dmd.len(), roc.len());
}
