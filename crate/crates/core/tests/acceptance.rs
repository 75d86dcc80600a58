//! Acceptance harness: one PASS/FAIL line per criterion.
//!
//! Exits 0 regardless of outcome so the regular test run stays usable;
//! set `MEALDMD_ACCEPTANCE_STRICT=1` to exit 1 when any criterion fails.

mod common;

use std::path::Path;
use std::time::Instant;

use mealdmd::classifier::{fit, gradient, objective, Dataset, TrainConfig};
use mealdmd::cli::{cmd_detect, cmd_eval, cmd_synth, cmd_train, DetectPaths, SubjectSelection};
use mealdmd::dmd::{dmd_series, dmd_step, DmdConfig};
use mealdmd::embedding::{pair_from_window, EmbeddingConfig};
use mealdmd::eval::roc_auc;
use mealdmd::ingest::{load_series, GridSeries};
use mealdmd::linalg::Matrix;
use mealdmd::pipeline::{analyze_series, detect_series, evaluate_corpus, train_corpus, Subject};
use mealdmd::synth::{
    generate_corpus, noise_free_trajectory, schedule_meals, simulate_subject, subject_params, subject_seed,
    CorpusConfig, JitterConfig, SyntheticSubject, SAMPLES_PER_DAY,
};
use mealdmd::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn dmd_oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = DmdConfig::default();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for case in 0..200 {
        let x = normal_matrix(&mut rng, 12, 3);
        let y = normal_matrix(&mut rng, 12, 3);
        let pair = mealdmd::embedding::SnapshotPair {
            x: x.clone(),
            y: y.clone(),
            end_time: case,
            contains_filled: false,
        };
        let got = dmd_step(&pair, &cfg).map_err(|e| format!("case {case}: {e}"))?;
        let want = common::operator_eigenvalues(&y, &common::pinv_normal_equations(&common::to_na(&x)), 3);
        let scale = want.iter().map(|l| l.norm()).fold(0.0, f64::max);
        let err = common::eig_match_error(&got.eigenvalues, &want).ok_or(format!("case {case}: rank mismatch"))? / scale;
        worst = worst.max(err);
    }
    let secs = start.elapsed().as_secs_f64();
    let msg = format!("200 pairs, max relative error {worst:.2e} (tol 1e-8), {secs:.3} s (limit 1 s)");
    if worst <= 1e-8 && secs < 1.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn analytic_eigenvalues() -> Check {
    let embed = EmbeddingConfig::default();
    let cfg = DmdConfig::default();
    let mut notes = Vec::new();
    let constant = GridSeries::from_values(0, 5, &[137.0; 40]);
    let results = dmd_series(&constant, &embed, &cfg);
    let err = results
        .iter()
        .flat_map(|r| r.eigenvalues.iter().map(|l| (l - 1.0).norm()))
        .fold(0.0, f64::max);
    if results.is_empty() || err > 1e-10 {
        return Err(format!("constant series: error {err:.2e} over {} windows", results.len()));
    }
    notes.push(format!("constant {err:.1e}"));
    for rho in [0.9, 1.1] {
        let values: Vec<f64> = (0..40).map(|k| 100.0 * f64::powi(rho, k)).collect();
        let results = dmd_series(&GridSeries::from_values(0, 5, &values), &embed, &cfg);
        let err = results
            .iter()
            .map(|r| match r.eigenvalues.as_slice() {
                [l] => (l - rho).norm(),
                _ => f64::INFINITY,
            })
            .fold(0.0, f64::max);
        if results.is_empty() || err > 1e-8 {
            return Err(format!("geometric ratio {rho}: error {err:.2e}"));
        }
        notes.push(format!("rho={rho} {err:.1e}"));
    }
    Ok(notes.join(", "))
}

fn scaling_invariance() -> Check {
    let params = subject_params(42, 0, 2.0);
    let series = simulate_subject(&params, 2, subject_seed(42, 0), &JitterConfig::default()).map_err(|e| e.to_string())?;
    let cfg = RunConfig::default();
    let base = dmd_series(&series, &cfg.embedding().unwrap(), &cfg.dmd());
    let mut worst = 0.0f64;
    for alpha in [0.5, 3.0] {
        let mut scaled = series.clone();
        for g in scaled.glucose.iter_mut().flatten() {
            *g *= alpha;
        }
        let other = dmd_series(&scaled, &cfg.embedding().unwrap(), &cfg.dmd());
        if other.len() != base.len() {
            return Err(format!("alpha {alpha}: window count changed"));
        }
        for (a, b) in base.iter().zip(&other) {
            let e = common::eig_match_error(&a.eigenvalues, &b.eigenvalues)
                .ok_or(format!("alpha {alpha}: retained rank changed at t={}", a.end_time))?;
            worst = worst.max(e);
        }
    }
    let msg = format!("{} windows x 2 scales, max change {worst:.2e} (tol 1e-10)", base.len());
    if worst <= 1e-10 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn classifier_correctness() -> Check {
    // gradient against central differences of an independently written objective
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<Vec<f64>> = (0..60)
        .map(|_| {
            let mut r: Vec<f64> = (0..4).map(|_| 1.0 + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
            r.push(1.0);
            r
        })
        .collect();
    let y: Vec<f64> = (0..60).map(|i| f64::from(i % 3 == 0)).collect();
    let data = Dataset::new(Matrix::from_rows(&rows), y.clone());
    let mut grad_err = 0.0f64;
    for _ in 0..5 {
        let w: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let g = gradient(&data, &w, 1e-2);
        let num = common::numeric_gradient(|v| common::reference_objective(&rows, &y, v, 1e-2), &w, 1e-5);
        let scale = common::reference_objective(&rows, &y, &w, 1e-2).abs().max(mealdmd::linalg::norm(&num));
        for (a, b) in g.iter().zip(&num) {
            grad_err = grad_err.max((a - b).abs() / scale);
        }
        let diff = (objective(&data, &w, 1e-2) - common::reference_objective(&rows, &y, &w, 1e-2)).abs();
        if diff > 1e-12 {
            return Err(format!("objective disagrees with reference by {diff:.2e}"));
        }
    }
    if grad_err > 1e-6 {
        return Err(format!("gradient relative error {grad_err:.2e} (tol 1e-6)"));
    }

    // two-point dataset against a grid-search minimizer
    let mut two_rows = Vec::new();
    let mut two_y = Vec::new();
    for _ in 0..100 {
        two_rows.push(vec![0.0, 1.0]);
        two_y.push(0.0);
        two_rows.push(vec![1.0, 1.0]);
        two_y.push(1.0);
    }
    let two = Dataset::new(Matrix::from_rows(&two_rows), two_y);
    let cfg = TrainConfig::default();
    let fitted = fit(&two, &cfg, None).map_err(|e| e.to_string())?;
    let small_rows = vec![vec![0.0, 1.0], vec![1.0, 1.0]];
    let (gw, gb) = common::grid_search_2d(
        |a, b| common::reference_objective(&small_rows, &[0.0, 1.0], &[a, b], cfg.reg_lambda),
        -20.0,
        20.0,
        1e-6,
    );
    let grid_err = (fitted.weights[0] - gw).abs().max((fitted.weights[1] - gb).abs());
    if grid_err > 1e-4 {
        return Err(format!("two-point weights {:?} vs grid ({gw}, {gb})", fitted.weights));
    }

    // two initializations
    let a = fit(&data, &cfg, Some(&[0.0; 5])).map_err(|e| e.to_string())?;
    let b = fit(&data, &cfg, Some(&[3.0, -3.0, 2.0, -1.0, 5.0])).map_err(|e| e.to_string())?;
    let init_err = a.weights.iter().zip(&b.weights).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    let msg = format!("gradient {grad_err:.1e}, grid {grid_err:.1e}, init {init_err:.1e}");
    if init_err <= 1e-6 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn auc_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..50 {
        let n = rng.gen_range(2..=1000);
        let mut scores: Vec<(f64, bool)> = (0..n)
            .map(|_| ((rng.gen_range(0..40) as f64) / 40.0, rng.gen_bool(0.3)))
            .collect();
        scores[0].1 = true;
        scores[1].1 = false;
        let got = roc_auc(&scores).map_err(|e| e.to_string())?.auc;
        let want = common::pairwise_auc(&scores);
        if got != want {
            return Err(format!("case {case}: curve {got} vs pairwise {want}"));
        }
    }
    let example = [(0.1, false), (0.4, false), (0.35, true), (0.8, true)];
    let auc = roc_auc(&example).map_err(|e| e.to_string())?.auc;
    if auc != 0.75 {
        return Err(format!("worked example gave {auc}"));
    }
    Ok("50 random sets equal pairwise oracle exactly, worked example 0.75".into())
}

fn default_corpus() -> Vec<SyntheticSubject> {
    generate_corpus(&CorpusConfig::default()).expect("default corpus")
}

fn spike_sensitivity(corpus: &[SyntheticSubject]) -> Check {
    let cfg = RunConfig::default();
    let within = (30 / cfg.step_minutes) as usize;
    // (meals, hits) for <40, >=60, >90
    let mut tally = [(0usize, 0usize); 3];
    for s in corpus {
        let a = analyze_series(&s.series, &cfg).map_err(|e| e.to_string())?;
        for m in &s.series.meals {
            let hit = a.spikes.iter().any(|sp| sp.time >= m.time && sp.time - m.time <= within);
            let bins = [m.carbs < 40.0, m.carbs >= 60.0, m.carbs > 90.0];
            for (slot, in_bin) in tally.iter_mut().zip(bins) {
                if in_bin {
                    slot.0 += 1;
                    slot.1 += usize::from(hit);
                }
            }
        }
    }
    let rate = |(n, h): (usize, usize)| if n == 0 { f64::NAN } else { h as f64 / n as f64 };
    let (small, mid, large) = (rate(tally[0]), rate(tally[1]), rate(tally[2]));
    let msg = format!(
        ">=60 g {:.1}% of {} (need 80%), >90 g {:.1}% of {} (need 90%), <40 g {:.1}% of {} (reported)",
        100.0 * mid,
        tally[1].0,
        100.0 * large,
        tally[2].0,
        100.0 * small,
        tally[0].0
    );
    if mid >= 0.8 && large >= 0.9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn eigen_peak_precedes_glucose_peak() -> Check {
    let corpus = CorpusConfig::default();
    let cfg = RunConfig::default();
    let horizon = (180 / cfg.step_minutes) as usize;
    let (mut total, mut early) = (0usize, 0usize);
    for id in 0..corpus.subjects {
        let p = subject_params(corpus.seed, id, 0.0);
        let meals = schedule_meals(p.weight, corpus.days, subject_seed(corpus.seed, id), &corpus.jitter);
        let len = corpus.days * SAMPLES_PER_DAY;
        let clean = noise_free_trajectory(&p, len, &meals);
        let mut series = GridSeries::from_values(0, cfg.step_minutes, &clean);
        series.meals = meals.clone();
        let a = analyze_series(&series, &cfg).map_err(|e| e.to_string())?;
        for (i, m) in meals.iter().enumerate() {
            if m.carbs <= 60.0 {
                continue;
            }
            let next = meals.get(i + 1).map_or(len, |n| n.time);
            let end = next.min(m.time + horizon).min(len);
            let g_peak = (m.time..end).max_by(|&a, &b| clean[a].total_cmp(&clean[b]).then(b.cmp(&a)));
            let l_peak = (m.time..end)
                .filter_map(|t| a.lambda.get(t).map(|l| (t, l)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            if let (Some(g), Some((l, _))) = (g_peak, l_peak) {
                total += 1;
                early += usize::from(l <= g);
            }
        }
    }
    let frac = early as f64 / total.max(1) as f64;
    let msg = format!("{early}/{total} meals > 60 g ({:.1}%, need 70%)", 100.0 * frac);
    if total > 0 && frac >= 0.7 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn end_to_end(corpus: &[SyntheticSubject]) -> Check {
    let start = Instant::now();
    let cfg = RunConfig::default();
    let subjects: Vec<Subject<'_>> = corpus.iter().map(|s| Subject { id: s.id, series: &s.series }).collect();
    let (train, test) = subjects.split_at(15);
    let (model, _) = train_corpus(train, &cfg).map_err(|e| e.to_string())?;
    let report = evaluate_corpus(test, &model, &cfg).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let d30 = report.dmd.at_tw(30).ok_or("no TW=30 metrics")?;
    let d15 = report.dmd.at_tw(15).ok_or("no TW=15 metrics")?;
    let b15 = report.baseline.at_tw(15).ok_or("no baseline TW=15 metrics")?;
    let median = report.dmd.median_delay_min.unwrap_or(f64::INFINITY);
    let parts = [
        (d30.auc >= 0.85, format!("AUC@30 {:.3}", d30.auc)),
        (d30.recall >= d15.recall, format!("recall@30 {:.3} >= recall@15 {:.3}", d30.recall, d15.recall)),
        (median <= 30.0, format!("median delay {median} min")),
        (
            d15.recall >= b15.recall,
            format!("recall@15 dmd {:.3} vs baseline {:.3}", d15.recall, b15.recall),
        ),
        (secs < 120.0, format!("{secs:.1} s")),
    ];
    let msg = parts
        .iter()
        .map(|(ok, s)| format!("{s}{}", if *ok { "" } else { " [fail]" }))
        .collect::<Vec<_>>()
        .join(", ");
    if parts.iter().all(|p| p.0) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn performance(corpus: &[SyntheticSubject]) -> Check {
    let cfg = RunConfig::default();
    let embed = cfg.embedding().unwrap();
    let values: Vec<f64> = corpus[0].series.glucose[1000..1000 + embed.window_len()]
        .iter()
        .map(|g| g.unwrap())
        .collect();
    let pair = pair_from_window(&values, embed.dim, embed.pairs, 0, false);
    let reps = 2000;
    let start = Instant::now();
    for _ in 0..reps {
        std::hint::black_box(dmd_step(std::hint::black_box(&pair), &cfg.dmd()).unwrap());
    }
    let per_step_ms = start.elapsed().as_secs_f64() * 1e3 / reps as f64;

    let subjects: Vec<Subject<'_>> = corpus.iter().map(|s| Subject { id: s.id, series: &s.series }).collect();
    let (model, _) = train_corpus(&subjects[..15], &cfg).map_err(|e| e.to_string())?;
    let p = subject_params(42, 99, 2.0);
    let long = simulate_subject(&p, 90, subject_seed(42, 99), &JitterConfig::default()).map_err(|e| e.to_string())?;
    let csv = long.to_csv();
    let start = Instant::now();
    let series = load_series(csv.as_bytes(), cfg.step_minutes, cfg.max_gap_minutes).map_err(|e| e.to_string())?;
    let det = detect_series(&series, &model, &cfg).map_err(|e| e.to_string())?;
    let subject_secs = start.elapsed().as_secs_f64();
    let msg = format!(
        "dmd_step {per_step_ms:.4} ms (limit 1 ms), 90-day subject ({} samples, {} events) {subject_secs:.2} s (limit 5 s)",
        series.len(),
        det.events.len()
    );
    if per_step_ms < 1.0 && subject_secs < 5.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn run_pipeline(root: &Path) -> Result<(), String> {
    let cfg = RunConfig::default();
    let corpus = root.join("corpus");
    cmd_synth(&corpus, &CorpusConfig::default(), &cfg).map_err(|e| e.to_string())?;
    let model = root.join("model.json");
    cmd_train(&corpus, &model, SubjectSelection::Train, &cfg).map_err(|e| e.to_string())?;
    cmd_eval(&corpus, &model, &root.join("eval"), SubjectSelection::Test, &cfg).map_err(|e| e.to_string())?;
    let paths = DetectPaths {
        events: Some(root.join("detect/events.json")),
        lambda: Some(root.join("detect/lambda.csv")),
        dmd_jsonl: Some(root.join("detect/dmd.jsonl")),
    };
    // relative input path so the recorded input name is the same in both runs
    let input = corpus.join("subject_019.csv");
    let rel = input.strip_prefix(root).unwrap();
    let cwd = std::env::current_dir().map_err(|e| e.to_string())?;
    std::env::set_current_dir(root).map_err(|e| e.to_string())?;
    let out = cmd_detect(rel, Path::new("model.json"), &paths, &cfg).map_err(|e| e.to_string());
    std::env::set_current_dir(cwd).map_err(|e| e.to_string())?;
    out.map(|_| ())
}

fn collect_files(dir: &Path, base: &Path, out: &mut Vec<(String, Vec<u8>)>) {
    let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, base, out);
        } else {
            let rel = p.strip_prefix(base).unwrap().display().to_string();
            out.push((rel, std::fs::read(&p).unwrap()));
        }
    }
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_pipeline(&a)?;
    run_pipeline(&b)?;
    let (mut fa, mut fb) = (Vec::new(), Vec::new());
    collect_files(&a, &a, &mut fa);
    collect_files(&b, &b, &mut fb);
    let names: Vec<&String> = fa.iter().map(|f| &f.0).collect();
    if names != fb.iter().map(|f| &f.0).collect::<Vec<_>>() {
        return Err("runs produced different file sets".into());
    }
    let bytes: usize = fa.iter().map(|f| f.1.len()).sum();
    for (x, y) in fa.iter().zip(&fb) {
        if x.1 != y.1 {
            return Err(format!("{} differs between runs", x.0));
        }
    }
    Ok(format!("{} files, {bytes} bytes identical across two full runs", fa.len()))
}

fn main() {
    let corpus = default_corpus();
    let checks: Vec<Criterion<'_>> = vec![
        ("dmd oracle equivalence", Box::new(dmd_oracle_equivalence)),
        ("analytic eigenvalue cases", Box::new(analytic_eigenvalues)),
        ("scaling invariance", Box::new(scaling_invariance)),
        ("classifier correctness", Box::new(classifier_correctness)),
        ("auc exactness", Box::new(auc_exactness)),
        ("synthetic spike sensitivity", Box::new(|| spike_sensitivity(&corpus))),
        ("eigenvalue peak precedes glucose peak", Box::new(eigen_peak_precedes_glucose_peak)),
        ("end-to-end detector quality", Box::new(|| end_to_end(&corpus))),
        ("performance", Box::new(|| performance(&corpus))),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (name, check) in &checks {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    let strict = std::env::var("MEALDMD_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
