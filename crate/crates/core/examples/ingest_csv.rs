//! Loads a small hand-written CSV with ISO timestamps, clock jitter, a
//! short dropout (interpolated) and a long one (splits the series).
//!
//!     cargo run --example ingest_csv

use mealdmd::ingest::load_series;

const CSV: &str = "\
timestamp,glucose,meal_g
2024-03-01T07:00:00Z,104
2024-03-01T07:05:40Z,103
2024-03-01T07:09:50Z,105,
2024-03-01T07:15:00Z,104,45
2024-03-01T07:30:00Z,131
2024-03-01T07:35:00Z,140
2024-03-01T08:30:00Z,122
2024-03-01T08:35:00Z,119
";

fn main() {
    let g = load_series(CSV.as_bytes(), 5, 30).unwrap();
    println!("{} grid points from t0 = {}", g.len(), g.start);
    for (t, v) in g.glucose.iter().enumerate() {
        let tag = match (v, g.filled[t]) {
            (None, _) => "missing",
            (Some(_), true) => "interpolated",
            _ => "",
        };
        let meal = g.meals.iter().find(|m| m.time == t).map_or(String::new(), |m| format!("meal {} g", m.carbs));
        let v = v.map_or("-".into(), |v| format!("{v:.1}"));
        println!("{t:>3} {v:>6} {tag:<12} {meal}");
    }
    let seg = g.segmented();
    for s in seg.segments() {
        println!("segment [{}, {})", s.start, s.end());
    }
}
