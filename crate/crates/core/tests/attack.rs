//! End-to-end recognition on mixed-mode days.

use subtrace::evalharness::{build_corpus, train_supervised, BenchmarkConfig};
use subtrace::infer::ToleranceConfig;
use subtrace::model::Mode;
use subtrace::pipeline::{attack, gen_mixed_days, train_mode_model, MixedDayConfig};
use subtrace::simgen::{gen_other_mode, NoiseConfig};

#[test]
fn recovers_most_five_interval_rides() {
    let cfg = BenchmarkConfig::default();
    let corpus = build_corpus(&cfg).unwrap();
    let noise = NoiseConfig::default();
    let days = gen_mixed_days(&corpus.network, &corpus.profiles, 12, &MixedDayConfig::default(), &noise, 100).unwrap();
    let mode = train_mode_model(&days, &corpus.network).unwrap();
    let all: Vec<usize> = (0..corpus.trips.len()).collect();
    let ens = train_supervised(&corpus, &all, &cfg).unwrap();

    let five = MixedDayConfig {
        min_trip_len: 5,
        max_trip_len: 5,
        ..MixedDayConfig::default()
    };
    let tests = gen_mixed_days(&corpus.network, &corpus.profiles, 8, &five, &noise, 400).unwrap();
    let mut correct = 0;
    for day in &tests {
        let r = attack(day, &corpus.network, &mode, &ens, &ToleranceConfig::default()).unwrap();
        correct += usize::from(r.spans.iter().any(|s| s.check.as_ref().is_some_and(|c| c.correct)));
    }
    println!("{correct} of {} days recovered", tests.len());
    assert!(2 * correct > tests.len());

    let walk = gen_other_mode(Mode::Walk, 1200.0, &noise, 9).unwrap();
    assert!(attack(&walk, &corpus.network, &mode, &ens, &ToleranceConfig::default())
        .unwrap()
        .is_empty());
}
