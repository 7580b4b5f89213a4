//! Segment-count tolerance on benchmark trips, clean and with a dwell cut out.

use subtrace::classify::IntervalEnsemble;
use subtrace::evalharness::{build_corpus, train_supervised, BenchmarkConfig, Corpus};
use subtrace::infer::{infer_with_segment_tolerance, InferenceReport, ToleranceConfig};
use subtrace::model::{EnuSample, TruthLabel};

const HELD_OUT: [usize; 6] = [0, 1, 2, 3, 4, 5];

fn setup() -> (Corpus, IntervalEnsemble) {
    let cfg = BenchmarkConfig::default();
    let corpus = build_corpus(&cfg).unwrap();
    let train: Vec<usize> = (0..corpus.trips.len()).filter(|k| !HELD_OUT.contains(k)).collect();
    let ens = train_supervised(&corpus, &train, &cfg).unwrap();
    (corpus, ens)
}

fn infer(corpus: &Corpus, ens: &IntervalEnsemble, enu: &[EnuSample], cfg: &ToleranceConfig) -> InferenceReport {
    infer_with_segment_tolerance(enu, ens, &corpus.network, cfg, ens.feature_config.min_len()).unwrap()
}

/// Drops the samples of the middle dwell and closes the time gap.
fn without_middle_dwell(corpus: &Corpus, trip: usize) -> Vec<EnuSample> {
    let t = &corpus.trips[trip];
    let dwells: Vec<_> = t.trace.truth().iter().filter(|r| r.label == TruthLabel::Dwell).collect();
    let d = dwells[dwells.len() / 2];
    let gap = d.end - d.start;
    t.enu
        .iter()
        .filter(|e| e.t < d.start || e.t >= d.end)
        .map(|e| EnuSample {
            t: if e.t >= d.end { e.t - gap } else { e.t },
            ..*e
        })
        .collect()
}

#[test]
fn clean_trips_keep_the_detected_segmentation() {
    let (corpus, ens) = setup();
    let cfg = ToleranceConfig::default();
    for &k in &HELD_OUT {
        let r = infer(&corpus, &ens, &corpus.trips[k].enu, &cfg);
        assert!(r.winner.same_run(&r.primary), "trip {k}: {:?} vs {:?}", r.winner, r.primary);
    }
}

#[test]
fn longer_family_recovers_a_suppressed_dwell() {
    let (corpus, ens) = setup();
    let cfg = ToleranceConfig::default();
    let mut recovered = 0;
    for &k in &HELD_OUT {
        let enu = without_middle_dwell(&corpus, k);
        let r = infer(&corpus, &ens, &enu, &cfg);
        let truth = corpus.trips[k].run;
        println!(
            "trip {k}: {} segments, winner {:?}, longer {:?}, truth {:?}",
            r.segments.len(),
            r.winner,
            r.longer,
            truth
        );
        recovered += usize::from(r.winner.same_run(&truth));
    }
    assert!(2 * recovered > HELD_OUT.len(), "recovered {recovered} of {}", HELD_OUT.len());
}
