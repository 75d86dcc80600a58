use mealdmd::classifier::LogRegModel;
use mealdmd::ingest::{load_series, GridSeries};
use mealdmd::pipeline::{detect_series, train_corpus, StreamingDetector, Subject};
use mealdmd::synth::{generate_corpus, CorpusConfig};
use mealdmd::RunConfig;

fn model(cfg: &RunConfig) -> LogRegModel {
    let corpus = generate_corpus(&CorpusConfig {
        subjects: 4,
        days: 3,
        ..CorpusConfig::default()
    })
    .unwrap();
    let subjects: Vec<Subject<'_>> = corpus.iter().map(|s| Subject { id: s.id, series: &s.series }).collect();
    train_corpus(&subjects, cfg).unwrap().0
}

/// Records of a series with some samples dropped and others jittered in time.
fn records(series: &GridSeries) -> Vec<(i64, f64)> {
    let mut out = Vec::new();
    for (t, g) in series.glucose.iter().enumerate() {
        let Some(v) = g else { continue };
        // a short gap (15 min) and a long one (60 min)
        if (100..103).contains(&t) || (300..312).contains(&t) {
            continue;
        }
        let jitter = [0i64, 40, -70, 100, -20][t % 5];
        let ts = series.timestamp(t) + if t == 0 { 0 } else { jitter };
        out.push((ts, *v));
        // occasional duplicate reading for the same slot, further away
        if t % 97 == 5 {
            out.push((series.timestamp(t) + 130, v + 1.0));
        }
    }
    out
}

#[test]
fn streaming_detector_matches_batch() {
    let cfg = RunConfig::default();
    let m = model(&cfg);
    let corpus = generate_corpus(&CorpusConfig {
        subjects: 6,
        days: 2,
        seed: 7,
        ..CorpusConfig::default()
    })
    .unwrap();
    let source = &corpus[5].series;
    let recs = records(source);
    let mut csv = String::from("timestamp,glucose\n");
    for (ts, v) in &recs {
        csv.push_str(&format!("{ts},{v}\n"));
    }
    let series = load_series(csv.as_bytes(), cfg.step_minutes, cfg.max_gap_minutes).unwrap();
    assert!(series.missing_count() > 0 && series.filled.iter().any(|&f| f));
    let batch = detect_series(&series, &m, &cfg).unwrap();

    let mut det = StreamingDetector::new(&m, &cfg).unwrap();
    let mut steps = Vec::new();
    for (ts, v) in &recs {
        steps.extend(det.push_record(*ts, *v).unwrap());
    }
    steps.extend(det.finish().unwrap());

    let stream_scores: Vec<(usize, f64)> = steps.iter().filter_map(|s| s.probability.map(|p| (s.t, p))).collect();
    assert_eq!(stream_scores, batch.scores);
    let stream_events: Vec<_> = steps.iter().filter_map(|s| s.event).collect();
    assert_eq!(stream_events, batch.events);
    let stream_lambda: Vec<(usize, f64)> = steps.iter().map(|s| (s.t, s.lambda_max)).collect();
    let batch_lambda: Vec<(usize, f64)> = batch.analysis.lambda.iter().filter_map(|(t, l)| l.map(|l| (t, l))).collect();
    assert_eq!(stream_lambda, batch_lambda);
}

#[test]
fn out_of_order_record_is_rejected() {
    let cfg = RunConfig::default();
    let m = model(&cfg);
    let mut det = StreamingDetector::new(&m, &cfg).unwrap();
    det.push_record(0, 100.0).unwrap();
    det.push_record(600, 100.0).unwrap();
    assert!(det.push_record(300, 100.0).is_err());
}
