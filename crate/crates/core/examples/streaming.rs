//! Sample-at-a-time detection. Records arrive with timing jitter and a
//! dropped stretch; events are printed the moment they are emitted.
//!
//!     cargo run --example streaming

use mealdmd::pipeline::{train_corpus, StreamingDetector, Subject};
use mealdmd::synth::{generate_corpus, CorpusConfig};
use mealdmd::RunConfig;

fn main() {
    let cfg = RunConfig::default();
    let corpus = generate_corpus(&CorpusConfig {
        subjects: 6,
        days: 4,
        ..CorpusConfig::default()
    })
    .unwrap();
    let (train, live) = corpus.split_at(5);
    let subjects: Vec<Subject<'_>> = train.iter().map(|s| Subject { id: s.id, series: &s.series }).collect();
    let (model, _) = train_corpus(&subjects, &cfg).unwrap();

    let feed = &live[0].series;
    let mut det = StreamingDetector::new(&model, &cfg).unwrap();
    let mut emitted = Vec::new();
    for (t, g) in feed.glucose.iter().enumerate() {
        // a 20-minute sensor dropout on day 2, interpolated on arrival
        if (400..404).contains(&t) {
            continue;
        }
        let ts = feed.timestamp(t) + [0, 35, -50, 80][t % 4];
        for step in det.push_record(ts, g.unwrap()).unwrap() {
            if let Some(e) = step.event {
                println!("t={:<5} p={:.3}  λ_max={:.3}", e.time, e.probability, step.lambda_max);
                emitted.push(e.time);
            }
        }
    }
    det.finish().unwrap();

    println!("\ntrue meals:");
    for m in &feed.meals {
        let hit = emitted.iter().find(|&&e| e >= m.time && e - m.time <= 6);
        let note = hit.map_or("missed".to_string(), |e| format!("detected after {} min", (e - m.time) * 5));
        println!("  t={:<5} {:>5.1} g  {note}", m.time, m.carbs);
    }
}
