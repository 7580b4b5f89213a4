//! End-to-end attack: mode extraction, segmentation, interval
//! classification and trace inference over a raw sensor trace.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::IntervalEnsemble;
use crate::coord::to_enu_series;
use crate::error::{Error, Result};
use crate::extract::{
    classify_windows, extract_spans, fit_mode_model, refine_boundaries, unrefined_spans, window_length, MetroSpan,
    ModeModel, WindowClass,
};
use crate::infer::{infer_with_segment_tolerance, InferenceReport, ToleranceConfig, TraceHypothesis};
use crate::model::{Direction, Mode, MetroNetwork, Trace, TruthLabel};
use crate::rng;
use crate::simgen::{gen_mixed_day, gen_other_mode_at, NoiseConfig, ScheduleItem, TrackProfile};

/// Per-sample extraction class from a trace's ground truth. Samples outside
/// any top-level range count as static.
pub fn sample_classes(trace: &Trace) -> Vec<WindowClass> {
    let n = trace.len();
    let mut out = vec![WindowClass::NonMetro(Mode::Static as usize); n];
    for r in trace.truth() {
        let c = match r.label {
            TruthLabel::Metro => WindowClass::Metro,
            TruthLabel::Mode(m) => WindowClass::NonMetro(m as usize),
            _ => continue,
        };
        let a = trace.index_at(r.start);
        let b = trace.index_at(r.end).max(a);
        out[a..b].iter_mut().for_each(|x| *x = c);
    }
    out
}

fn hra_of(trace: &Trace) -> Vec<f64> {
    to_enu_series(&trace.samples).iter().map(|e| e.hra).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixedDayConfig {
    /// Seconds of another mode before and after the ride.
    pub padding: f64,
    pub min_trip_len: usize,
    pub max_trip_len: usize,
}

impl Default for MixedDayConfig {
    fn default() -> Self {
        MixedDayConfig {
            padding: 300.0,
            min_trip_len: 3,
            max_trip_len: 10,
        }
    }
}

/// Schedule of day `k`: another mode, one metro ride, another mode. The
/// surrounding modes cycle so every pair appears.
pub fn mixed_day_schedule(k: usize, m: usize, cfg: &MixedDayConfig, seed: u64) -> Vec<ScheduleItem> {
    let mut r = rng::stream(seed, 0x6461_7900 + k as u64);
    let len = r.random_range(cfg.min_trip_len.min(m)..=cfg.max_trip_len.min(m));
    let pos = r.random_range(0..=m - len);
    let start_interval = if r.random::<bool>() { pos } else { m + pos };
    let modes = Mode::ALL;
    vec![
        ScheduleItem::Mode {
            mode: modes[k % 4],
            duration: cfg.padding,
        },
        ScheduleItem::Trip { start_interval, length: len },
        ScheduleItem::Mode {
            mode: modes[(k + 1 + k / 4) % 4],
            duration: cfg.padding,
        },
    ]
}

pub fn gen_mixed_days(
    network: &MetroNetwork,
    profiles: &[TrackProfile],
    count: usize,
    cfg: &MixedDayConfig,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<Vec<Trace>> {
    let m = network.per_direction();
    (0..count)
        .into_par_iter()
        .map(|k| {
            let sched = mixed_day_schedule(k, m, cfg, seed);
            gen_mixed_day(&sched, network, profiles, noise, rng::derive(seed, k as u64))
        })
        .collect()
}

/// One trace per non-metro mode, cycling through the modes.
pub fn gen_non_metro(count: usize, duration: f64, sample_rate: f64, noise: &NoiseConfig, seed: u64) -> Result<Vec<Trace>> {
    (0..count)
        .into_par_iter()
        .map(|k| gen_other_mode_at(Mode::ALL[k % 4], duration, sample_rate, noise, rng::derive(seed, k as u64)))
        .collect()
}

/// Trains the extraction model from traces with ground truth.
pub fn train_mode_model(traces: &[Trace], network: &MetroNetwork) -> Result<ModeModel> {
    if traces.is_empty() {
        return Err(Error::InvalidArgument("no traces to train the mode model".into()));
    }
    let w = window_length(network.sample_rate, network.min_interval_duration());
    let series: Vec<(Vec<f64>, Vec<WindowClass>)> =
        traces.par_iter().map(|t| (hra_of(t), sample_classes(t))).collect();
    fit_mode_model(&series, w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub traces: usize,
    pub metro_samples: usize,
    pub covered_samples: usize,
    /// Percent of metro samples inside an extracted span.
    pub coverage: f64,
    pub spans: usize,
    /// Refined spans with no metro sample.
    pub false_positives: usize,
    /// Spans before refinement with no metro sample.
    pub raw_false_positives: usize,
}

/// Extraction quality against ground truth.
pub fn evaluate_extraction(model: &ModeModel, traces: &[Trace]) -> Result<ExtractionReport> {
    let per = traces
        .par_iter()
        .map(|t| {
            let hra = hra_of(t);
            let metro: Vec<bool> = sample_classes(t).iter().map(|c| *c == WindowClass::Metro).collect();
            let labels = classify_windows(&hra, model)?;
            let spans = refine_boundaries(&labels, &hra, model);
            let raw = unrefined_spans(&labels, hra.len(), model.window_len);
            let fp = |ss: &[MetroSpan]| ss.iter().filter(|s| !metro[s.start_index..s.end_index].contains(&true)).count();
            let mut covered = vec![false; hra.len()];
            for s in &spans {
                covered[s.start_index..s.end_index].iter_mut().for_each(|c| *c = true);
            }
            let total = metro.iter().filter(|&&f| f).count();
            let hit = metro.iter().zip(&covered).filter(|(&f, &c)| f && c).count();
            Ok((total, hit, spans.len(), fp(&spans), fp(&raw)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut r = ExtractionReport {
        traces: traces.len(),
        metro_samples: 0,
        covered_samples: 0,
        coverage: 0.0,
        spans: 0,
        false_positives: 0,
        raw_false_positives: 0,
    };
    for (total, hit, spans, fp, raw_fp) in per {
        r.metro_samples += total;
        r.covered_samples += hit;
        r.spans += spans;
        r.false_positives += fp;
        r.raw_false_positives += raw_fp;
    }
    r.coverage = if r.metro_samples == 0 {
        100.0
    } else {
        100.0 * r.covered_samples as f64 / r.metro_samples as f64
    };
    Ok(r)
}

/// The run of intervals whose truth ranges lie mostly inside `[start, end)`
/// seconds, if they form one run.
pub fn truth_run_in(trace: &Trace, start: f64, end: f64, m: usize) -> Option<TraceHypothesis> {
    let ids: Vec<usize> = trace
        .truth()
        .iter()
        .filter_map(|r| match r.label {
            TruthLabel::Interval(id) => {
                let overlap = (r.end.min(end) - r.start.max(start)).max(0.0);
                (2.0 * overlap > r.end - r.start).then_some(id)
            }
            _ => None,
        })
        .collect();
    let first = *ids.first()?;
    let consecutive = ids.windows(2).all(|w| w[1] == w[0] + 1) && ids.iter().all(|&id| (id >= m) == (first >= m));
    if !consecutive {
        return None;
    }
    let (dir, pos) = if first < m { (Direction::Forward, first) } else { (Direction::Reverse, first - m) };
    Some(TraceHypothesis::new(dir, pos, ids.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfCheck {
    pub truth: Option<TraceHypothesis>,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanReport {
    pub start_index: usize,
    pub end_index: usize,
    pub start_time: f64,
    pub end_time: f64,
    pub inference: Option<InferenceReport>,
    /// Why inference was skipped for this span.
    pub error: Option<String>,
    pub check: Option<SelfCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub device_id: String,
    pub spans: Vec<SpanReport>,
}

impl AttackReport {
    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn winners(&self) -> Vec<TraceHypothesis> {
        self.spans.iter().filter_map(|s| s.inference.as_ref().map(|i| i.winner)).collect()
    }
}

/// Runs the whole recognition phase on one trace. Spans that cannot be
/// inferred (too short, too many segments) are reported with the reason.
pub fn attack(
    trace: &Trace,
    network: &MetroNetwork,
    mode: &ModeModel,
    ensemble: &IntervalEnsemble,
    cfg: &ToleranceConfig,
) -> Result<AttackReport> {
    if ensemble.class_count != network.interval_count() {
        return Err(Error::DimensionMismatch {
            expected: network.interval_count(),
            got: ensemble.class_count,
        });
    }
    let enu = to_enu_series(&trace.samples);
    let hra: Vec<f64> = enu.iter().map(|e| e.hra).collect();
    let spans = if hra.len() < mode.window_len {
        Vec::new()
    } else {
        extract_spans(&hra, mode)
    };
    let m = network.per_direction();
    let fs = trace.sample_rate;
    let t0 = trace.samples.first().map_or(0.0, |s| s.t);
    let min_len = ensemble.feature_config.min_len();
    let spans = spans
        .par_iter()
        .map(|s| {
            let slice = &enu[s.start_index..s.end_index];
            let (inference, error) = match infer_with_segment_tolerance(slice, ensemble, network, cfg, min_len) {
                Ok(r) => (Some(r), None),
                Err(e @ (Error::InvalidArgument(_) | Error::Validation(_))) => (None, Some(e.to_string())),
                Err(e) => return Err(e),
            };
            let (start_time, end_time) = (t0 + s.start_index as f64 / fs, t0 + s.end_index as f64 / fs);
            let check = trace.ground_truth.as_ref().map(|_| {
                let truth = truth_run_in(trace, start_time, end_time, m);
                let correct = match (&truth, &inference) {
                    (Some(t), Some(i)) => t.same_run(&i.winner),
                    _ => false,
                };
                SelfCheck { truth, correct }
            });
            Ok(SpanReport {
                start_index: s.start_index,
                end_index: s.end_index,
                start_time,
                end_time,
                inference,
                error,
                check,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AttackReport {
        device_id: trace.device_id.clone(),
        spans,
    })
}
