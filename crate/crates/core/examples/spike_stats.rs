//! How often, and how soon, λ_max spikes follow meals of different sizes
//! across the full synthetic corpus.
//!
//!     cargo run --release --example spike_stats

use mealdmd::eval::spike_meal_stats;
use mealdmd::pipeline::analyze_series;
use mealdmd::synth::{generate_corpus, CorpusConfig};
use mealdmd::RunConfig;

fn main() {
    let cfg = RunConfig::default();
    let corpus = generate_corpus(&CorpusConfig::default()).unwrap();
    let mut gaps = Vec::new();
    let (mut meals, mut matched, mut spikes) = (0, 0, 0);
    for s in &corpus {
        let a = analyze_series(&s.series, &cfg).unwrap();
        let st = spike_meal_stats(
            &s.series.meals,
            &a.spikes,
            cfg.spike_forward_minutes,
            cfg.spike_backward_minutes,
            cfg.step_minutes,
        );
        meals += s.series.meals.len();
        matched += st.meal_gaps.iter().filter(|g| g.is_some()).count();
        spikes += st.spike_count;
        gaps.extend(s.series.meals.iter().zip(&st.meal_gaps).map(|(m, g)| (m.carbs, *g)));
    }
    println!("{matched}/{meals} meals followed by a spike within {} min; {spikes} spikes", cfg.spike_forward_minutes);
    for (lo, hi) in [(0.0, 40.0), (40.0, 60.0), (60.0, 90.0), (90.0, f64::INFINITY)] {
        let bin: Vec<Option<f64>> = gaps.iter().filter(|(g, _)| *g >= lo && *g < hi).map(|x| x.1).collect();
        let mut hit: Vec<f64> = bin.iter().flatten().copied().collect();
        hit.sort_by(f64::total_cmp);
        let median = hit.get(hit.len() / 2).copied().unwrap_or(f64::NAN);
        println!(
            "  [{lo:>3}, {hi:>3}) g: {:>5.1}% of {:>3}, median gap {median} min",
            100.0 * hit.len() as f64 / bin.len().max(1) as f64,
            bin.len()
        );
    }
}
