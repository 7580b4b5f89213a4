//! Trace inference: score continuous interval runs against a probability
//! matrix and pick the best one.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{ProbabilityMatrix, SegmentClassifier};
use crate::error::{Error, Result};
use crate::model::{Direction, EnuSample, MetroNetwork, Segment};
use crate::segment::{segment_span, SegmenterConfig};

pub const DEFAULT_TOP_K: usize = 3;

/// A run of `length` consecutive intervals along one direction, starting at
/// `start` (a position along that direction).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceHypothesis {
    pub direction: Direction,
    pub start: usize,
    pub length: usize,
    pub score: f64,
}

impl TraceHypothesis {
    pub fn new(direction: Direction, start: usize, length: usize) -> Self {
        TraceHypothesis {
            direction,
            start,
            length,
            score: 0.0,
        }
    }

    /// Interval id of the first member on a line with `m` intervals per direction.
    pub fn start_id(&self, m: usize) -> usize {
        id_of(self.direction, self.start, m)
    }

    pub fn interval_ids(&self, m: usize) -> Vec<usize> {
        (self.start..self.start + self.length)
            .map(|p| id_of(self.direction, p, m))
            .collect()
    }

    pub fn fits(&self, m: usize) -> bool {
        self.length >= 1 && self.start + self.length <= m
    }

    pub fn mean_score(&self) -> f64 {
        self.score / self.length as f64
    }

    /// Same run, ignoring the score.
    pub fn same_run(&self, other: &TraceHypothesis) -> bool {
        self.direction == other.direction && self.start == other.start && self.length == other.length
    }
}

fn id_of(direction: Direction, position: usize, m: usize) -> usize {
    match direction {
        Direction::Forward => position,
        Direction::Reverse => m + position,
    }
}

/// Higher score first, then smaller start id (forward ids sort first).
fn rank(a: &TraceHypothesis, b: &TraceHypothesis, key: impl Fn(&TraceHypothesis) -> f64, m: usize) -> Ordering {
    key(b)
        .total_cmp(&key(a))
        .then(a.start_id(m).cmp(&b.start_id(m)))
        .then(a.length.cmp(&b.length))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    #[default]
    Full,
    Reduced,
}

impl std::str::FromStr for SearchMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SearchMode::Full),
            "reduced" => Ok(SearchMode::Reduced),
            _ => Err(Error::InvalidArgument(format!("unknown search mode {s:?}"))),
        }
    }
}

/// All length-`n` runs in both directions, forward first.
pub fn enumerate_candidates(m: usize, n: usize) -> Result<Vec<TraceHypothesis>> {
    if n == 0 || n > m {
        return Err(Error::InvalidArgument(format!("run length {n} outside 1..={m}")));
    }
    Ok([Direction::Forward, Direction::Reverse]
        .into_iter()
        .flat_map(|d| (0..=m - n).map(move |s| TraceHypothesis::new(d, s, n)))
        .collect())
}

fn check_matrix(p: &ProbabilityMatrix, m: usize) -> Result<()> {
    if p.intervals() != 2 * m {
        return Err(Error::DimensionMismatch {
            expected: 2 * m,
            got: p.intervals(),
        });
    }
    Ok(())
}

/// Sum of `P[j][h_j]` over the hypothesis members.
pub fn vote(p: &ProbabilityMatrix, h: &TraceHypothesis, m: usize) -> Result<f64> {
    check_matrix(p, m)?;
    if h.length != p.segments() {
        return Err(Error::DimensionMismatch {
            expected: p.segments(),
            got: h.length,
        });
    }
    if !h.fits(m) {
        return Err(Error::InvalidArgument(format!("hypothesis runs off a line of {m} intervals")));
    }
    Ok(h.interval_ids(m)
        .iter()
        .enumerate()
        .map(|(j, &id)| p.get(j, id))
        .sum())
}

/// The `k` most probable interval ids of a row, ties to the lower id.
pub fn top_intervals(row: &[f64], k: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..row.len()).collect();
    ids.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    ids.truncate(k);
    ids
}

/// Runs that place some segment on one of its `top_k` intervals.
pub fn reduce_domain(p: &ProbabilityMatrix, n: usize, m: usize, top_k: usize) -> Vec<TraceHypothesis> {
    let mut out: Vec<TraceHypothesis> = Vec::new();
    for (i, row) in p.rows.iter().enumerate() {
        for id in top_intervals(row, top_k) {
            let (direction, pos) = if id < m {
                (Direction::Forward, id)
            } else {
                (Direction::Reverse, id - m)
            };
            let Some(start) = pos.checked_sub(i) else {
                continue;
            };
            let h = TraceHypothesis::new(direction, start, n);
            if h.fits(m) && !out.iter().any(|o| o.same_run(&h)) {
                out.push(h);
            }
        }
    }
    out.sort_by_key(|h| (h.start_id(m), h.length));
    out
}

/// Candidate runs of length `P.segments()` under the given mode.
pub fn candidates(p: &ProbabilityMatrix, m: usize, mode: SearchMode) -> Result<Vec<TraceHypothesis>> {
    check_matrix(p, m)?;
    match mode {
        SearchMode::Full => enumerate_candidates(m, p.segments()),
        SearchMode::Reduced => {
            if p.segments() > m {
                return Err(Error::InvalidArgument(format!(
                    "{} segments exceed the {m} intervals of the line",
                    p.segments()
                )));
            }
            Ok(reduce_domain(p, p.segments(), m, DEFAULT_TOP_K))
        }
    }
}

/// Scores every candidate; output keeps candidate order.
pub fn score_all(p: &ProbabilityMatrix, cands: &[TraceHypothesis], m: usize) -> Result<Vec<TraceHypothesis>> {
    cands
        .par_iter()
        .map(|h| {
            Ok(TraceHypothesis {
                score: vote(p, h, m)?,
                ..*h
            })
        })
        .collect()
}

fn best_of(scored: &[TraceHypothesis], m: usize, key: impl Fn(&TraceHypothesis) -> f64 + Copy) -> Option<TraceHypothesis> {
    scored.iter().copied().min_by(|a, b| rank(a, b, key, m))
}

pub fn infer_trace(p: &ProbabilityMatrix, m: usize, mode: SearchMode) -> Result<TraceHypothesis> {
    let cands = candidates(p, m, mode)?;
    let scored = score_all(p, &cands, m)?;
    best_of(&scored, m, |h| h.score).ok_or_else(|| Error::InvalidArgument("no candidate runs".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToleranceConfig {
    pub mode: SearchMode,
    /// Cut points of the re-segmented families move to the quietest sample
    /// within this many seconds.
    pub snap_seconds: f64,
    pub segmenter: SegmenterConfig,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            mode: SearchMode::Full,
            snap_seconds: 10.0,
            segmenter: SegmenterConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTop {
    pub segment: usize,
    /// (interval id, probability), most probable first.
    pub top: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub segments: Vec<Segment>,
    /// Scored runs from the detected segmentation.
    pub hypotheses: Vec<TraceHypothesis>,
    /// Best run of each re-segmented family, when one exists.
    pub shorter: Option<TraceHypothesis>,
    pub longer: Option<TraceHypothesis>,
    /// Best run of the detected segmentation.
    pub primary: TraceHypothesis,
    /// Overall winner by mean score per segment.
    pub winner: TraceHypothesis,
    pub per_segment_top: Vec<SegmentTop>,
}

/// Cuts `[0, len)` in proportion to `weights`, snapping each interior cut
/// to the lowest HRA sample within `snap` samples.
pub fn proportional_cuts(hra: &[f64], weights: &[f64], snap: usize) -> Vec<usize> {
    let len = hra.len();
    let total: f64 = weights.iter().sum();
    let mut cuts = Vec::with_capacity(weights.len().saturating_sub(1));
    let mut acc = 0.0;
    for w in &weights[..weights.len().saturating_sub(1)] {
        acc += w;
        let c = ((acc / total) * len as f64).round() as usize;
        let lo = c.saturating_sub(snap).max(1);
        let hi = (c + snap).min(len - 1);
        let best = (lo..=hi)
            .min_by(|&a, &b| hra[a].total_cmp(&hra[b]).then(a.abs_diff(c).cmp(&b.abs_diff(c))))
            .unwrap_or(c);
        cuts.push(best);
    }
    cuts
}

fn resegmented_best(
    enu: &[EnuSample],
    hra: &[f64],
    cands: &[TraceHypothesis],
    classifier: &dyn SegmentClassifier,
    net: &MetroNetwork,
    snap: usize,
    min_len: usize,
) -> Result<Option<TraceHypothesis>> {
    let m = net.per_direction();
    let scored: Vec<Option<TraceHypothesis>> = cands
        .par_iter()
        .map(|h| {
            let ids = h.interval_ids(m);
            let weights: Vec<f64> = ids.iter().map(|&id| net.interval(id).mean_duration()).collect();
            let cuts = proportional_cuts(hra, &weights, snap);
            let segs = crate::segment::to_segments(0, hra.len(), &cuts);
            if segs.len() != h.length || segs.iter().any(|s| s.len() < min_len) {
                return Ok(None);
            }
            let p = classifier.predict_segments(enu, &segs)?;
            Ok(Some(TraceHypothesis {
                score: vote(&p, h, m)?,
                ..*h
            }))
        })
        .collect::<Result<_>>()?;
    let scored: Vec<TraceHypothesis> = scored.into_iter().flatten().collect();
    Ok(best_of(&scored, m, TraceHypothesis::mean_score))
}

/// Length-shifted variants of each run: one shorter, one longer.
fn shifted(base: &[TraceHypothesis], delta: isize, m: usize) -> Vec<TraceHypothesis> {
    let mut out: Vec<TraceHypothesis> = Vec::new();
    for h in base {
        let len = h.length as isize + delta;
        if len < 1 {
            continue;
        }
        let starts = if delta > 0 {
            [h.start.checked_sub(1), Some(h.start)]
        } else {
            [Some(h.start), Some(h.start + 1)]
        };
        for s in starts.into_iter().flatten() {
            let v = TraceHypothesis::new(h.direction, s, len as usize);
            if v.fits(m) && !out.iter().any(|o| o.same_run(&v)) {
                out.push(v);
            }
        }
    }
    out
}

/// Segments one metro span and infers its run, also trying one fewer and
/// one more segment than detected. Families are compared by mean score per
/// segment; on a tie the detected segmentation wins.
pub fn infer_with_segment_tolerance(
    enu: &[EnuSample],
    classifier: &dyn SegmentClassifier,
    net: &MetroNetwork,
    cfg: &ToleranceConfig,
    min_segment_len: usize,
) -> Result<InferenceReport> {
    let m = net.per_direction();
    if classifier.class_count() != 2 * m {
        return Err(Error::DimensionMismatch {
            expected: 2 * m,
            got: classifier.class_count(),
        });
    }
    let hra: Vec<f64> = enu.iter().map(|e| e.hra).collect();
    let (segments, _) = segment_span(&hra, 0, hra.len(), net, &cfg.segmenter);
    if segments.len() > m {
        return Err(Error::InvalidArgument(format!(
            "span split into {} segments, more than the {m} intervals of the line",
            segments.len()
        )));
    }
    if segments.iter().any(|s| s.len() < min_segment_len) {
        return Err(Error::InvalidArgument("span too short for one interval".into()));
    }
    let p = classifier.predict_segments(enu, &segments)?;
    let n = segments.len();
    let base = candidates(&p, m, cfg.mode)?;
    let hypotheses = score_all(&p, &base, m)?;
    let primary = best_of(&hypotheses, m, |h| h.score).ok_or_else(|| Error::InvalidArgument("no candidate runs".into()))?;

    let snap = (cfg.snap_seconds * net.sample_rate).round() as usize;
    let family = |delta: isize| -> Result<Option<TraceHypothesis>> {
        let len = n as isize + delta;
        if len < 1 || len as usize > m {
            return Ok(None);
        }
        let cands = match cfg.mode {
            SearchMode::Full => enumerate_candidates(m, len as usize)?,
            SearchMode::Reduced => shifted(&base, delta, m),
        };
        resegmented_best(enu, &hra, &cands, classifier, net, snap, min_segment_len)
    };
    let shorter = family(-1)?;
    let longer = family(1)?;

    let mut winner = primary;
    for h in [shorter, longer].into_iter().flatten() {
        if h.mean_score() > winner.mean_score() {
            winner = h;
        }
    }
    let per_segment_top = p
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| SegmentTop {
            segment: i,
            top: top_intervals(row, DEFAULT_TOP_K).into_iter().map(|id| (id, row[id])).collect(),
        })
        .collect();
    Ok(InferenceReport {
        segments,
        hypotheses,
        shorter,
        longer,
        primary,
        winner,
        per_segment_top,
    })
}
