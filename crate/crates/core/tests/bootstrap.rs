//! Label bootstrapping over benchmark rides of mixed lengths.

use subtrace::evalharness::{
    bootstrap_trips, build_corpus, fit_feature_config, seed_segments, BenchmarkConfig, SemisupBenchmarkConfig,
};
use subtrace::features::feature_vector;
use subtrace::semisup::build_seed_classifier;

fn mixed_lengths() -> BenchmarkConfig {
    BenchmarkConfig {
        min_trip_len: 4,
        max_trip_len: 10,
        seed: 21,
        ..BenchmarkConfig::default()
    }
}

#[test]
fn one_distinctive_track_covers_every_interval() {
    let cfg = mixed_lengths();
    let corpus = build_corpus(&cfg).unwrap();
    let m = corpus.per_direction();
    // One track in both directions; the reverse of forward position p is m + (m - 1 - p).
    let fwd = *corpus.distinctive().iter().find(|&&i| i < m).unwrap();
    let ids = [fwd, 2 * m - 1 - fwd];
    assert!(corpus.distinctive().contains(&ids[1]));
    let mut semi = SemisupBenchmarkConfig::default();
    // The end intervals show up in only a handful of random-length rides.
    semi.bootstrap.enough_threshold = 4;
    let seeds = seed_segments(&corpus, &cfg, &ids, semi.seed_samples).unwrap();
    let all: Vec<usize> = (0..corpus.trips.len()).collect();
    let out = bootstrap_trips(&corpus, &all, &seeds, &cfg.features, &semi.bootstrap).unwrap();
    println!(
        "rounds {}, pool sizes {:?}, label precision {}/{}",
        out.report.rounds.len(),
        out.pool.sizes(),
        out.pooled_correct,
        out.pooled
    );
    assert!(out.report.covered);
    assert!(out.report.rounds.len() <= 5);
}

#[test]
fn seed_detector_finds_held_out_segments() {
    let cfg = BenchmarkConfig::default();
    let corpus = build_corpus(&cfg).unwrap();
    let train: Vec<usize> = (0..30).collect();
    let fc = fit_feature_config(&corpus, &train, &cfg.features);
    let feat = |enu: &[subtrace::model::EnuSample], s: &subtrace::model::Segment| {
        feature_vector(&enu[s.start_index..s.end_index], &fc).unwrap()
    };
    for id in corpus.distinctive() {
        let positives: Vec<Vec<f64>> = seed_segments(&corpus, &cfg, &[id], 20)
            .unwrap()
            .iter()
            .map(|s| feat(&s.trip.enu, &s.trip.segments[s.segment]))
            .collect();
        let negatives: Vec<Vec<f64>> = train
            .iter()
            .flat_map(|&k| {
                let t = &corpus.trips[k];
                t.segments
                    .iter()
                    .filter(|s| s.true_interval != Some(id) && s.len() >= fc.min_len())
                    .map(|s| feat(&t.enu, s))
                    .collect::<Vec<_>>()
            })
            .collect();
        let det = build_seed_classifier(id, &positives, &negatives, &fc, &cfg.ensemble, 0.5).unwrap();
        let (mut tp, mut pos, mut fp, mut neg) = (0, 0, 0, 0);
        for t in &corpus.trips[30..] {
            for s in t.segments.iter().filter(|s| s.len() >= fc.min_len()) {
                let hit = det.detect(&feat(&t.enu, s)).unwrap().0;
                if s.true_interval == Some(id) {
                    pos += 1;
                    tp += usize::from(hit);
                } else {
                    neg += 1;
                    fp += usize::from(hit);
                }
            }
        }
        println!("seed {id}: tpr {tp}/{pos}, fpr {fp}/{neg}");
        assert!(pos > 0);
        assert!(tp as f64 >= 0.8 * pos as f64);
    }
}
