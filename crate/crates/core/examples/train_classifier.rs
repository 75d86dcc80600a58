//! Builds the labeled eigenvalue-trajectory set and fits the logistic
//! model, in both feature modes.
//!
//!     cargo run --release --example train_classifier

use mealdmd::features::FeatureMode;
use mealdmd::pipeline::{train_corpus, Subject};
use mealdmd::synth::{generate_corpus, CorpusConfig};
use mealdmd::RunConfig;

fn main() {
    let corpus = generate_corpus(&CorpusConfig::default()).unwrap();
    let subjects: Vec<Subject<'_>> = corpus[..15].iter().map(|s| Subject { id: s.id, series: &s.series }).collect();

    for mode in [FeatureMode::MaxEig, FeatureMode::AllEigs] {
        let cfg = RunConfig {
            feature_mode: mode,
            ..RunConfig::default()
        };
        let (model, set) = train_corpus(&subjects, &cfg).unwrap();
        println!("{mode:?}: {} positives, {} negatives", set.positives(), set.negatives());
        println!(
            "  converged in {} Newton steps, |grad| = {:.1e}",
            model.iterations, model.gradient_norm
        );
        let names = cfg.featurizer().column_names();
        for (name, w) in names.iter().zip(&model.weights) {
            println!("  {name:>10} {w:+.4}");
        }
        println!("  {:>10} {:+.4}", "bias", model.weights.last().unwrap());
    }
}
