//! Train on 15 subjects, evaluate on the other 5: recall, FPR and AUC per
//! time window, detection delays and spike statistics.
//!
//!     cargo run --release --example evaluate

use mealdmd::pipeline::{evaluate_corpus, train_corpus, Subject};
use mealdmd::synth::{generate_corpus, CorpusConfig};
use mealdmd::RunConfig;

fn main() {
    let cfg = RunConfig::default();
    let corpus = generate_corpus(&CorpusConfig::default()).unwrap();
    let subjects: Vec<Subject<'_>> = corpus.iter().map(|s| Subject { id: s.id, series: &s.series }).collect();
    let (train, test) = subjects.split_at(15);
    let (model, _) = train_corpus(train, &cfg).unwrap();
    let report = evaluate_corpus(test, &model, &cfg).unwrap();

    println!("{:<13} {:>3} {:>7} {:>8} {:>6}", "detector", "tw", "recall", "fpr", "auc");
    for d in [&report.dmd, &report.baseline] {
        for m in &d.per_tw {
            println!("{:<13} {:>3} {:>7.3} {:>8.5} {:>6.3}", d.name, m.tw, m.recall, m.fpr, m.auc);
        }
        let show = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v}"));
        println!(
            "{:<13} median delay {} min, IQR {} min\n",
            "",
            show(d.median_delay_min),
            show(d.iqr_delay_min)
        );
    }

    let s = &report.spikes;
    println!("spikes: SMR {:.1}%  MSR {:.1}%  ISR {:.1}%", s.smr.unwrap_or(0.0), s.msr.unwrap_or(0.0), s.isr.unwrap_or(0.0));
    for b in &s.per_size_bins {
        println!("  {:>6} g: {:>3}/{:<3} meals spiked", b.bin.label(), b.matched, b.meals);
    }
}
