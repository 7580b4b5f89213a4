//! Metrics and experiment protocols on simulated corpora.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{EnsembleConfig, IntervalEnsemble, SegmentClassifier, TrainingSet};
use crate::coord::to_enu_series;
use crate::error::{Error, Result};
use crate::features::{feature_vector, FeatureConfig};
use crate::infer::{infer_trace, SearchMode, TraceHypothesis};
use crate::model::{Direction, EnuSample, MetroNetwork, Segment, Trace, TruthLabel};
use crate::rng;
use crate::segment::{segment_span, SegmenterConfig};
use crate::semisup::{bootstrap, BootstrapReport, LabelPool, SeedData, SemisupConfig};
use crate::simgen::{apply_defense_noise, gen_network, gen_trip, NoiseConfig, TrackProfile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EditDistanceConfig {
    /// Seconds within which two points count as equal.
    pub tolerance: f64,
}

impl Default for EditDistanceConfig {
    fn default() -> Self {
        EditDistanceConfig { tolerance: 10.0 }
    }
}

/// Levenshtein distance between two time-sorted point sequences, where
/// points closer than the tolerance are equal.
pub fn edit_distance(predicted: &[f64], truth: &[f64], cfg: &EditDistanceConfig) -> usize {
    let mut prev: Vec<usize> = (0..=truth.len()).collect();
    let mut cur = vec![0; truth.len() + 1];
    for (i, p) in predicted.iter().enumerate() {
        cur[0] = i + 1;
        for (j, t) in truth.iter().enumerate() {
            let sub = usize::from((p - t).abs() >= cfg.tolerance);
            cur[j + 1] = (prev[j] + sub).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[truth.len()]
}

/// Row-normalized percentages: `out[t][p]` is the share of truth `t`
/// predicted as `p`. Rows without samples stay zero.
pub fn confusion_matrix(predictions: &[usize], truths: &[usize], m: usize) -> Result<Vec<Vec<f64>>> {
    if predictions.is_empty() || predictions.len() != truths.len() {
        return Err(Error::InvalidArgument(format!(
            "need equal non-empty lists, got {} and {}",
            predictions.len(),
            truths.len()
        )));
    }
    let mut counts = vec![vec![0usize; m]; m];
    for (&p, &t) in predictions.iter().zip(truths) {
        if p >= m || t >= m {
            return Err(Error::InvalidArgument(format!("class {} out of range", p.max(t))));
        }
        counts[t][p] += 1;
    }
    Ok(counts
        .iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            row.iter()
                .map(|&c| if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub intervals: usize,
    pub network_seed: u64,
    pub trips: usize,
    pub min_trip_len: usize,
    pub max_trip_len: usize,
    pub seed: u64,
    pub noise: NoiseConfig,
    pub subtrip_lengths: Vec<usize>,
    pub ensemble: EnsembleConfig,
    pub segmenter: SegmenterConfig,
    pub search: SearchMode,
    /// Count thresholds are refitted on each training fold.
    pub features: FeatureConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            intervals: 10,
            network_seed: 42,
            trips: 40,
            min_trip_len: 10,
            max_trip_len: 10,
            seed: 7,
            noise: NoiseConfig::default(),
            subtrip_lengths: vec![3, 5, 7],
            ensemble: EnsembleConfig::default(),
            segmenter: SegmenterConfig::default(),
            search: SearchMode::Full,
            features: FeatureConfig::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.intervals == 0 || self.trips < 2 {
            return Err(Error::InvalidArgument("benchmark needs intervals and at least 2 trips".into()));
        }
        if self.min_trip_len == 0 || self.min_trip_len > self.max_trip_len || self.max_trip_len > self.intervals {
            return Err(Error::InvalidArgument(format!(
                "trip lengths {}..={} do not fit a line of {}",
                self.min_trip_len, self.max_trip_len, self.intervals
            )));
        }
        if self.subtrip_lengths.iter().any(|&l| l == 0 || l > self.max_trip_len) {
            return Err(Error::InvalidArgument("subtrip lengths must lie in 1..=max_trip_len".into()));
        }
        self.noise.validate()?;
        self.features.validate()
    }
}

/// One simulated ride with its detected segmentation.
#[derive(Debug, Clone)]
pub struct TripRecord {
    pub index: usize,
    pub run: TraceHypothesis,
    pub seed: u64,
    pub trace: Trace,
    pub enu: Vec<EnuSample>,
    /// Detected segments, labelled with the interval they overlap most.
    pub segments: Vec<Segment>,
    /// Dwell midpoints, seconds.
    pub true_points: Vec<f64>,
    pub detected_points: Vec<f64>,
}

impl TripRecord {
    /// Ground-truth labels of the detected segments.
    pub fn labels(&self) -> Vec<Option<usize>> {
        self.segments.iter().map(|s| s.true_interval).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub network: MetroNetwork,
    pub profiles: Vec<TrackProfile>,
    pub trips: Vec<TripRecord>,
}

impl Corpus {
    pub fn per_direction(&self) -> usize {
        self.network.per_direction()
    }

    /// Interval ids flagged distinctive by the simulator.
    pub fn distinctive(&self) -> Vec<usize> {
        self.profiles
            .iter()
            .filter(|p| p.distinctive)
            .map(|p| p.interval_id)
            .collect()
    }
}

/// Labels each segment with the interval it overlaps most.
pub fn label_segments(segments: &mut [Segment], trace: &Trace) {
    let fs = trace.sample_rate;
    let ranges: Vec<(f64, f64, usize)> = trace
        .truth()
        .iter()
        .filter_map(|r| match r.label {
            TruthLabel::Interval(id) => Some((r.start * fs, r.end * fs, id)),
            _ => None,
        })
        .collect();
    for s in segments {
        let (a, b) = (s.start_index as f64, s.end_index as f64);
        s.true_interval = ranges
            .iter()
            .map(|&(ra, rb, id)| ((rb.min(b) - ra.max(a)).max(0.0), id))
            .filter(|(o, _)| *o > 0.0)
            .max_by(|x, y| x.0.total_cmp(&y.0).then(y.1.cmp(&x.1)))
            .map(|(_, id)| id);
    }
}

fn dwell_midpoints(trace: &Trace) -> Vec<f64> {
    trace
        .truth()
        .iter()
        .filter(|r| r.label == TruthLabel::Dwell)
        .map(|r| 0.5 * (r.start + r.end))
        .collect()
}

/// Runs conversion and segmentation on a trip trace.
pub fn record_trip(
    index: usize,
    run: TraceHypothesis,
    seed: u64,
    trace: Trace,
    net: &MetroNetwork,
    segmenter: &SegmenterConfig,
) -> TripRecord {
    let enu = to_enu_series(&trace.samples);
    let hra: Vec<f64> = enu.iter().map(|e| e.hra).collect();
    let (mut segments, seg) = segment_span(&hra, 0, hra.len(), net, segmenter);
    label_segments(&mut segments, &trace);
    let detected_points = seg.points.iter().map(|&p| p as f64 / trace.sample_rate).collect();
    TripRecord {
        index,
        run,
        seed,
        true_points: dwell_midpoints(&trace),
        trace,
        enu,
        segments,
        detected_points,
    }
}

/// Start, direction and length of each benchmark trip. Directions alternate.
pub fn plan_trips(cfg: &BenchmarkConfig) -> Vec<(TraceHypothesis, u64)> {
    let m = cfg.intervals;
    (0..cfg.trips)
        .map(|k| {
            let mut r = rng::stream(cfg.seed, 0x706c_616e + k as u64);
            let len = r.random_range(cfg.min_trip_len..=cfg.max_trip_len);
            let dir = if k % 2 == 0 { Direction::Forward } else { Direction::Reverse };
            let start = r.random_range(0..=m - len);
            (TraceHypothesis::new(dir, start, len), rng::derive(cfg.seed, 1000 + k as u64))
        })
        .collect()
}

pub fn build_corpus(cfg: &BenchmarkConfig) -> Result<Corpus> {
    cfg.validate()?;
    let (network, profiles) = gen_network(cfg.intervals, cfg.network_seed)?;
    let m = network.per_direction();
    let trips = plan_trips(cfg)
        .into_par_iter()
        .enumerate()
        .map(|(k, (run, seed))| {
            let trace = gen_trip(&network, &profiles, run.start_id(m), run.length, &cfg.noise, seed)?;
            Ok(record_trip(k, run, seed, trace, &network, &cfg.segmenter))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        network,
        profiles,
        trips,
    })
}

/// Same corpus with privacy noise of standard deviation `amp` added to every trip.
pub fn with_defense_noise(corpus: &Corpus, amp: f64, segmenter: &SegmenterConfig) -> Result<Corpus> {
    let trips = corpus
        .trips
        .par_iter()
        .map(|t| {
            let noisy = apply_defense_noise(&t.trace, amp, rng::derive(t.seed, 0xdef))?;
            Ok(record_trip(t.index, t.run, t.seed, noisy, &corpus.network, segmenter))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        network: corpus.network.clone(),
        profiles: corpus.profiles.clone(),
        trips,
    })
}

/// Mean HRA over every trip sample.
pub fn mean_metro_hra(corpus: &Corpus) -> f64 {
    let (s, n) = corpus
        .trips
        .iter()
        .flat_map(|t| t.enu.iter())
        .fold((0.0, 0usize), |(s, n), e| (s + e.hra, n + 1));
    s / n.max(1) as f64
}

/// One labelled training example.
#[derive(Debug, Clone)]
pub struct LabelledSegment {
    pub trip: usize,
    pub segment: usize,
    pub interval: usize,
    pub weight: f64,
}

/// Feature config with count thresholds fitted on the given trips.
pub fn fit_feature_config(corpus: &Corpus, trips: &[usize], base: &FeatureConfig) -> FeatureConfig {
    let mut fc = base.clone();
    fc.sample_rate = corpus.network.sample_rate;
    let slices: Vec<&[EnuSample]> = trips
        .iter()
        .flat_map(|&k| {
            let t = &corpus.trips[k];
            t.segments.iter().map(move |s| &t.enu[s.start_index..s.end_index])
        })
        .collect();
    fc.fit_thresholds(&slices);
    fc
}

/// Builds a training set, dropping segments too short to featurize and
/// classes with a single example.
pub fn training_set(corpus: &Corpus, examples: &[LabelledSegment], fc: &FeatureConfig) -> Result<TrainingSet> {
    let class_count = corpus.network.interval_count();
    let usable: Vec<&LabelledSegment> = examples
        .iter()
        .filter(|e| corpus.trips[e.trip].segments[e.segment].len() >= fc.min_len())
        .collect();
    let mut counts = vec![0usize; class_count];
    for e in &usable {
        counts[e.interval] += 1;
    }
    let kept: Vec<&LabelledSegment> = usable.into_iter().filter(|e| counts[e.interval] >= 2).collect();
    let rows = kept
        .par_iter()
        .map(|e| {
            let t = &corpus.trips[e.trip];
            let s = &t.segments[e.segment];
            feature_vector(&t.enu[s.start_index..s.end_index], fc)
        })
        .collect::<Result<Vec<_>>>()?;
    TrainingSet::with_weights(
        rows,
        kept.iter().map(|e| e.interval).collect(),
        kept.iter().map(|e| e.weight).collect(),
        class_count,
    )
}

/// Every ground-truth-labelled segment of the given trips.
pub fn truth_examples(corpus: &Corpus, trips: &[usize]) -> Vec<LabelledSegment> {
    trips
        .iter()
        .flat_map(|&k| {
            corpus.trips[k].segments.iter().enumerate().filter_map(move |(i, s)| {
                s.true_interval.map(|id| LabelledSegment {
                    trip: k,
                    segment: i,
                    interval: id,
                    weight: 1.0,
                })
            })
        })
        .collect()
}

pub fn train_supervised(corpus: &Corpus, trips: &[usize], cfg: &BenchmarkConfig) -> Result<IntervalEnsemble> {
    let fc = fit_feature_config(corpus, trips, &cfg.features);
    let set = training_set(corpus, &truth_examples(corpus, trips), &fc)?;
    IntervalEnsemble::train(&set, fc, &cfg.ensemble)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubtripPrediction {
    pub trip: usize,
    /// First segment of the subtrip.
    pub offset: usize,
    pub length: usize,
    pub predicted: TraceHypothesis,
    pub correct: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthAccuracy {
    pub length: usize,
    pub correct: usize,
    pub total: usize,
    /// Percent.
    pub accuracy: f64,
}

/// The run of intervals covered by `labels`, if it is one.
fn truth_run(labels: &[Option<usize>], m: usize) -> Option<Vec<usize>> {
    let ids: Option<Vec<usize>> = labels.iter().copied().collect();
    let ids = ids?;
    let dir = ids[0] >= m;
    let ok = ids.windows(2).all(|w| w[1] == w[0] + 1) && ids.iter().all(|&id| (id >= m) == dir);
    ok.then_some(ids)
}

/// Infers every length-`l` window of consecutive segments of one trip.
pub fn evaluate_trip(
    classifier: &dyn SegmentClassifier,
    trip: &TripRecord,
    m: usize,
    lengths: &[usize],
    mode: SearchMode,
) -> Result<(Vec<SubtripPrediction>, Vec<(usize, usize)>)> {
    if trip.segments.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let p = classifier.predict_segments(&trip.enu, &trip.segments)?;
    let labels = trip.labels();
    let per_segment = labels
        .iter()
        .zip(&p.rows)
        .filter_map(|(l, row)| l.map(|t| (t, crate::stats::argmax(row))))
        .collect();
    let mut out = Vec::new();
    for &len in lengths {
        if len > trip.segments.len() || len > m {
            continue;
        }
        for offset in 0..=trip.segments.len() - len {
            let sub = crate::classify::ProbabilityMatrix {
                rows: p.rows[offset..offset + len].to_vec(),
            };
            let predicted = infer_trace(&sub, m, mode)?;
            let correct = truth_run(&labels[offset..offset + len], m).is_some_and(|ids| ids == predicted.interval_ids(m));
            out.push(SubtripPrediction {
                trip: trip.index,
                offset,
                length: len,
                predicted,
                correct,
            });
        }
    }
    Ok((out, per_segment))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Supervised,
    Semisupervised,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub protocol: Protocol,
    pub lengths: Vec<LengthAccuracy>,
    /// Percent of labelled segments whose most probable interval is correct.
    pub segment_accuracy: f64,
    /// Row-normalized percentages over interval ids.
    pub confusion: Vec<Vec<f64>>,
    pub predictions: Vec<SubtripPrediction>,
}

impl ExperimentReport {
    pub fn accuracy(&self, length: usize) -> Option<f64> {
        self.lengths.iter().find(|l| l.length == length).map(|l| l.accuracy)
    }

    /// Plain-text summary table.
    pub fn table(&self) -> String {
        let mut s = format!("protocol: {:?}\nlength  correct  total  accuracy\n", self.protocol);
        for l in &self.lengths {
            s.push_str(&format!("{:>6}  {:>7}  {:>5}  {:>7.2}%\n", l.length, l.correct, l.total, l.accuracy));
        }
        s.push_str(&format!("segment accuracy: {:.2}%\n", self.segment_accuracy));
        s
    }
}

pub fn summarize(
    protocol: Protocol,
    lengths: &[usize],
    m: usize,
    folds: Vec<(Vec<SubtripPrediction>, Vec<(usize, usize)>)>,
) -> Result<ExperimentReport> {
    let mut predictions = Vec::new();
    let mut pairs = Vec::new();
    for (p, s) in folds {
        predictions.extend(p);
        pairs.extend(s);
    }
    let lengths = lengths
        .iter()
        .map(|&length| {
            let (correct, total) = predictions
                .iter()
                .filter(|p| p.length == length)
                .fold((0, 0), |(c, t), p| (c + usize::from(p.correct), t + 1));
            LengthAccuracy {
                length,
                correct,
                total,
                accuracy: if total == 0 { 0.0 } else { 100.0 * correct as f64 / total as f64 },
            }
        })
        .collect();
    let (truths, preds): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
    let hits = pairs.iter().filter(|(t, p)| t == p).count();
    Ok(ExperimentReport {
        protocol,
        lengths,
        segment_accuracy: 100.0 * hits as f64 / pairs.len().max(1) as f64,
        confusion: confusion_matrix(&preds, &truths, 2 * m)?,
        predictions,
    })
}

/// Leave-one-trip-out evaluation with a caller-supplied trainer, which
/// receives the indices of the training trips.
pub fn run_supervised_with<F>(corpus: &Corpus, cfg: &BenchmarkConfig, train: F) -> Result<ExperimentReport>
where
    F: Fn(&[usize]) -> Result<Box<dyn SegmentClassifier>> + Sync,
{
    run_folds(corpus, cfg, Protocol::Supervised, &train)
}

fn run_folds<F>(corpus: &Corpus, cfg: &BenchmarkConfig, protocol: Protocol, train: &F) -> Result<ExperimentReport>
where
    F: Fn(&[usize]) -> Result<Box<dyn SegmentClassifier>> + Sync,
{
    run_folds_on(corpus, corpus, cfg, protocol, train)
}

/// Leave-one-out where the held-out trip is taken from `test`, which must
/// hold the same rides as the training corpus under different sensor noise.
fn run_folds_on<F>(
    corpus: &Corpus,
    test: &Corpus,
    cfg: &BenchmarkConfig,
    protocol: Protocol,
    train: &F,
) -> Result<ExperimentReport>
where
    F: Fn(&[usize]) -> Result<Box<dyn SegmentClassifier>> + Sync,
{
    if corpus.trips.len() < 2 {
        return Err(Error::InvalidArgument("leave-one-out needs at least 2 trips".into()));
    }
    if test.trips.len() != corpus.trips.len() {
        return Err(Error::InvalidArgument("test corpus must mirror the training corpus".into()));
    }
    let m = corpus.per_direction();
    let folds = (0..corpus.trips.len())
        .into_par_iter()
        .map(|held| {
            let train_idx: Vec<usize> = (0..corpus.trips.len()).filter(|&k| k != held).collect();
            let model = train(&train_idx)?;
            evaluate_trip(model.as_ref(), &test.trips[held], m, &cfg.subtrip_lengths, cfg.search)
        })
        .collect::<Result<Vec<_>>>()?;
    summarize(protocol, &cfg.subtrip_lengths, m, folds)
}

pub fn run_supervised(corpus: &Corpus, cfg: &BenchmarkConfig) -> Result<ExperimentReport> {
    run_supervised_with(corpus, cfg, |idx| {
        Ok(Box::new(train_supervised(corpus, idx, cfg)?) as Box<dyn SegmentClassifier>)
    })
}

/// Supervised leave-one-out with models trained on `corpus` and the
/// held-out trip drawn from `test` (e.g. the same rides with defense noise).
pub fn run_supervised_against(corpus: &Corpus, test: &Corpus, cfg: &BenchmarkConfig) -> Result<ExperimentReport> {
    run_folds_on(corpus, test, cfg, Protocol::Supervised, &|idx: &[usize]| {
        Ok(Box::new(train_supervised(corpus, idx, cfg)?) as Box<dyn SegmentClassifier>)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SemisupBenchmarkConfig {
    /// Seed interval ids; `None` means every interval the simulator made distinctive.
    pub seeds: Option<Vec<usize>>,
    /// Labelled segments supplied per seed.
    pub seed_samples: usize,
    pub bootstrap: SemisupConfig,
}

impl Default for SemisupBenchmarkConfig {
    fn default() -> Self {
        SemisupBenchmarkConfig {
            seeds: None,
            seed_samples: 20,
            bootstrap: SemisupConfig {
                enough_threshold: 10,
                ..SemisupConfig::default()
            },
        }
    }
}

/// A labelled seed segment inside its own short ride.
#[derive(Debug, Clone)]
pub struct SeedSegment {
    pub interval: usize,
    pub trip: TripRecord,
    pub segment: usize,
}

/// Simulates short rides through each seed interval and keeps the detected
/// segment that covers it, until `count` segments per seed are collected.
pub fn seed_segments(corpus: &Corpus, cfg: &BenchmarkConfig, ids: &[usize], count: usize) -> Result<Vec<SeedSegment>> {
    let m = corpus.per_direction();
    let len = m.min(3);
    let per_seed = ids
        .par_iter()
        .map(|&id| {
            if id >= 2 * m {
                return Err(Error::InvalidArgument(format!("seed interval {id} not on the line")));
            }
            let (dir, pos) = if id < m { (Direction::Forward, id) } else { (Direction::Reverse, id - m) };
            let start = pos.saturating_sub(1).min(m - len);
            let run = TraceHypothesis::new(dir, start, len);
            let mut out = Vec::with_capacity(count);
            for k in 0..3 * count as u64 {
                if out.len() == count {
                    break;
                }
                let seed = rng::derive(cfg.seed, 0x5eed_0000 + ((id as u64) << 16) + k);
                let trace = gen_trip(&corpus.network, &corpus.profiles, run.start_id(m), len, &cfg.noise, seed)?;
                let trip = record_trip(usize::MAX, run, seed, trace, &corpus.network, &cfg.segmenter);
                if let Some(segment) = trip.segments.iter().position(|s| s.true_interval == Some(id)) {
                    out.push(SeedSegment { interval: id, trip, segment });
                }
            }
            if out.len() < count {
                log::warn!("seed interval {id}: only {} of {count} segments recovered", out.len());
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemisupReport {
    pub experiment: ExperimentReport,
    /// One per fold.
    pub bootstraps: Vec<BootstrapReport>,
    /// Percent of pooled labels from unlabelled trips that match the truth.
    pub label_precision: f64,
}

impl SemisupReport {
    /// Largest round count any fold needed to cover every interval.
    pub fn max_rounds(&self) -> usize {
        self.bootstraps.iter().map(|b| b.rounds.len()).max().unwrap_or(0)
    }

    pub fn all_covered(&self) -> bool {
        self.bootstraps.iter().all(|b| b.covered)
    }
}

fn segment_features(trip: &TripRecord, i: usize, fc: &FeatureConfig) -> Result<Vec<f64>> {
    let s = &trip.segments[i];
    feature_vector(&trip.enu[s.start_index..s.end_index], fc)
}

/// Result of bootstrapping labels over a set of unlabelled trips.
#[derive(Debug, Clone)]
pub struct PoolOutcome {
    pub pool: LabelPool,
    pub report: BootstrapReport,
    pub feature_config: FeatureConfig,
    /// Corpus index of each bootstrap sequence.
    pub trips: Vec<usize>,
    /// Pooled labels from the trips, and how many match the truth.
    pub pooled: usize,
    pub pooled_correct: usize,
}

impl PoolOutcome {
    /// Pooled labels as (trip, segment, interval, round, weight); seed data
    /// entries carry no trip.
    pub fn labels(&self) -> Vec<(Option<usize>, usize, usize, usize, f64)> {
        self.pool
            .per_interval
            .iter()
            .enumerate()
            .flat_map(|(id, entries)| {
                entries
                    .iter()
                    .map(move |e| (e.sequence.map(|s| self.trips[s]), e.segment, id, e.round, e.weight))
            })
            .collect()
    }

    pub fn train(&self, cfg: &EnsembleConfig) -> Result<IntervalEnsemble> {
        IntervalEnsemble::train(&self.pool.training_set()?, self.feature_config.clone(), cfg)
    }
}

/// Bootstraps a label pool over the given trips, ignoring their labels.
pub fn bootstrap_trips(
    corpus: &Corpus,
    trips: &[usize],
    seeds: &[SeedSegment],
    base: &FeatureConfig,
    cfg: &SemisupConfig,
) -> Result<PoolOutcome> {
    let fc = fit_feature_config(corpus, trips, base);
    // Trips with a segment too short to featurize would break positions.
    let usable: Vec<usize> = trips
        .iter()
        .copied()
        .filter(|&k| corpus.trips[k].segments.iter().all(|s| s.len() >= fc.min_len()))
        .collect();
    let sequences = usable
        .iter()
        .map(|&k| {
            let t = &corpus.trips[k];
            (0..t.segments.len()).map(|i| segment_features(t, i, &fc)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ids: Vec<usize> = seeds.iter().map(|s| s.interval).collect();
    ids.dedup();
    let seed_data = ids
        .iter()
        .map(|&id| {
            let features = seeds
                .iter()
                .filter(|s| s.interval == id && s.trip.segments[s.segment].len() >= fc.min_len())
                .map(|s| segment_features(&s.trip, s.segment, &fc))
                .collect::<Result<Vec<_>>>()?;
            Ok(SeedData { interval_id: id, features })
        })
        .collect::<Result<Vec<_>>>()?;
    let (pool, report) = bootstrap(&sequences, &seed_data, corpus.per_direction(), &fc, cfg)?;
    let (mut pooled, mut pooled_correct) = (0usize, 0usize);
    for (id, entries) in pool.per_interval.iter().enumerate() {
        for e in entries {
            if let Some(s) = e.sequence {
                pooled += 1;
                pooled_correct += usize::from(corpus.trips[usable[s]].segments[e.segment].true_interval == Some(id));
            }
        }
    }
    Ok(PoolOutcome {
        pool,
        report,
        feature_config: fc,
        trips: usable,
        pooled,
        pooled_correct,
    })
}

/// Seed ids from the config, or the simulator's distinctive intervals.
pub fn seed_ids(corpus: &Corpus, semi: &SemisupBenchmarkConfig) -> Result<Vec<usize>> {
    let ids = semi.seeds.clone().unwrap_or_else(|| corpus.distinctive());
    if ids.is_empty() {
        return Err(Error::InvalidArgument("no seed intervals".into()));
    }
    Ok(ids)
}

/// Leave-one-trip-out where the training trips carry no labels. Seed
/// segments are bootstrapped into a label pool over the training trips and
/// the final ensemble is trained on that pool.
pub fn run_semisupervised(corpus: &Corpus, cfg: &BenchmarkConfig, semi: &SemisupBenchmarkConfig) -> Result<SemisupReport> {
    if corpus.trips.len() < 2 {
        return Err(Error::InvalidArgument("leave-one-out needs at least 2 trips".into()));
    }
    semi.bootstrap.validate()?;
    let ids = seed_ids(corpus, semi)?;
    let seeds = seed_segments(corpus, cfg, &ids, semi.seed_samples)?;
    let m = corpus.per_direction();
    let folds = (0..corpus.trips.len())
        .into_par_iter()
        .map(|held| {
            let train_idx: Vec<usize> = (0..corpus.trips.len()).filter(|&k| k != held).collect();
            let out = bootstrap_trips(corpus, &train_idx, &seeds, &cfg.features, &semi.bootstrap)?;
            let model = out.train(&cfg.ensemble)?;
            let eval = evaluate_trip(&model, &corpus.trips[held], m, &cfg.subtrip_lengths, cfg.search)?;
            Ok((eval, out.report, out.pooled_correct, out.pooled))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut evals = Vec::with_capacity(folds.len());
    let mut bootstraps = Vec::with_capacity(folds.len());
    let (mut right, mut total) = (0usize, 0usize);
    for (e, b, r, t) in folds {
        evals.push(e);
        bootstraps.push(b);
        right += r;
        total += t;
    }
    Ok(SemisupReport {
        experiment: summarize(Protocol::Semisupervised, &cfg.subtrip_lengths, m, evals)?,
        bootstraps,
        label_precision: 100.0 * right as f64 / total.max(1) as f64,
    })
}

/// Segmentation quality per trip: tolerant edit distance between detected
/// and true stop points.
pub fn segmentation_distances(corpus: &Corpus, cfg: &EditDistanceConfig) -> Vec<usize> {
    corpus
        .trips
        .iter()
        .map(|t| edit_distance(&t.detected_points, &t.true_points, cfg))
        .collect()
}

/// Fraction of subtrip predictions that differ between two reports over
/// the same subtrips.
pub fn prediction_change_rate(a: &ExperimentReport, b: &ExperimentReport) -> f64 {
    let key = |p: &SubtripPrediction| (p.trip, p.offset, p.length);
    let mut changed = 0usize;
    let mut total = 0usize;
    for p in &a.predictions {
        if let Some(q) = b.predictions.iter().find(|q| key(q) == key(p)) {
            total += 1;
            changed += usize::from(!p.predicted.same_run(&q.predicted));
        }
    }
    changed as f64 / total.max(1) as f64
}

/// Stub classifier that puts all mass on the labelled interval of each segment.
pub struct TruthClassifier {
    pub class_count: usize,
}

impl SegmentClassifier for TruthClassifier {
    fn class_count(&self) -> usize {
        self.class_count
    }

    fn predict_segments(&self, _enu: &[EnuSample], segments: &[Segment]) -> Result<crate::classify::ProbabilityMatrix> {
        let rows = segments
            .iter()
            .map(|s| {
                let mut r = vec![0.0; self.class_count];
                match s.true_interval {
                    Some(id) => r[id] = 1.0,
                    None => r.iter_mut().for_each(|v| *v = 1.0 / self.class_count as f64),
                }
                r
            })
            .collect();
        crate::classify::ProbabilityMatrix::new(rows)
    }
}
