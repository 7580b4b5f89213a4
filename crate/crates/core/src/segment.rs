//! Stop-slot segmentation of a metro span into station intervals.
//!
//! A stop slot is a stretch of at least `l_w` samples where nearly all HRA
//! values sit below `t1`. The first pass scans with the strict quorum; any
//! gap between boundaries longer than the longest interval is searched again
//! with a raised threshold and the relaxed quorum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MetroNetwork, Segment};
use crate::stats;

/// Tunables that turn a network and a span into [`SegmenterParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    /// Percentile of the span's HRA used as the initial `t1`.
    pub t1_percentile: f64,
    /// `delta` as a fraction of the initial `t1`.
    pub delta_fraction: f64,
    /// Minimum stop duration as a fraction of the shortest dwell.
    pub stop_fraction: f64,
    pub quorum: f64,
    pub requorum: f64,
    pub max_escalations: usize,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            t1_percentile: 30.0,
            delta_fraction: 0.1,
            stop_fraction: 0.8,
            quorum: 0.95,
            requorum: 0.80,
            max_escalations: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmenterParams {
    pub t1: f64,
    pub delta: f64,
    /// Minimum stop duration, samples.
    pub l_w: usize,
    /// Shortest interval, samples.
    pub l_min: usize,
    /// Longest allowed distance between boundaries, samples.
    pub l_max: usize,
    pub quorum: f64,
    pub requorum: f64,
    pub max_escalations: usize,
}

impl SegmenterParams {
    /// Parameters for one span of a trace on `network`.
    pub fn for_span(hra: &[f64], network: &MetroNetwork, cfg: &SegmenterConfig) -> Self {
        let rate = network.sample_rate;
        let mut t1 = stats::percentile(hra, cfg.t1_percentile);
        if !(t1 > 0.0) {
            t1 = 1e-6;
        }
        SegmenterParams {
            t1,
            delta: cfg.delta_fraction * t1,
            l_w: ((cfg.stop_fraction * network.dwell_min * rate).round() as usize).max(2),
            l_min: (network.min_interval_duration() * rate).floor() as usize,
            l_max: ((network.max_interval_duration() + network.dwell_max) * rate).ceil() as usize,
            quorum: cfg.quorum,
            requorum: cfg.requorum,
            max_escalations: cfg.max_escalations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t1 > 0.0) {
            return Err(Error::InvalidArgument("t1 must be positive".into()));
        }
        if !(self.quorum > 0.0 && self.quorum <= 1.0 && self.requorum > 0.0 && self.requorum <= 1.0) {
            return Err(Error::InvalidArgument("quorum must lie in (0, 1]".into()));
        }
        if !(self.l_w < self.l_min && self.l_min < self.l_max) {
            return Err(Error::InvalidArgument(format!(
                "need l_w < l_min < l_max, got {} / {} / {}",
                self.l_w, self.l_min, self.l_max
            )));
        }
        Ok(())
    }
}

/// Stop-slot points inside `hra[start..end]` for a given threshold and
/// quorum. Each point is the centre of the quietest stop window near the
/// first window that meets the quorum.
pub fn find_seg_points_with(
    hra: &[f64],
    start: usize,
    end: usize,
    t1: f64,
    quorum: f64,
    params: &SegmenterParams,
) -> Vec<usize> {
    let end = end.min(hra.len());
    let lw = params.l_w;
    if lw == 0 || start >= end || end - start < lw {
        return Vec::new();
    }
    // Prefix sums over the searched range.
    let n = end - start;
    let mut below = vec![0usize; n + 1];
    let mut sum = vec![0.0f64; n + 1];
    for k in 0..n {
        let v = hra[start + k];
        below[k + 1] = below[k] + usize::from(v < t1);
        sum[k + 1] = sum[k] + v;
    }
    let need = quorum * lw as f64;
    let mut points = Vec::new();
    let mut i = 0;
    while i + lw <= n {
        if (below[i + lw] - below[i]) as f64 > need {
            let last = (i + lw / 2).min(n - lw + 1);
            let mut best = i;
            let mut best_mean = f64::INFINITY;
            for s in i..last.max(i + 1) {
                let m = (sum[s + lw] - sum[s]) / lw as f64;
                if m < best_mean {
                    best_mean = m;
                    best = s;
                }
            }
            points.push(start + best + lw / 2);
            i = best + params.l_min.max(1);
        } else {
            i += 1;
        }
    }
    points
}

pub fn find_seg_points(hra: &[f64], start: usize, end: usize, params: &SegmenterParams) -> Vec<usize> {
    find_seg_points_with(hra, start, end, params.t1, params.quorum, params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    /// Interior boundary indices, ascending.
    pub points: Vec<usize>,
    pub final_t1: f64,
    pub escalations: usize,
    /// Set when the escalation cap was hit with gaps still over `l_max`.
    pub capped: bool,
}

/// Full search with threshold escalation for over-long gaps. The sequence
/// ends count as boundaries for the gap check.
pub fn find_final_segment_points(hra: &[f64], params: &SegmenterParams) -> Segmentation {
    let len = hra.len();
    let mut points = find_seg_points(hra, 0, len, params);
    let mut t1 = params.t1;
    let mut escalations = 0;
    loop {
        let gaps = long_gaps(&points, len, params.l_max);
        if gaps.is_empty() {
            return Segmentation {
                points,
                final_t1: t1,
                escalations,
                capped: false,
            };
        }
        if escalations >= params.max_escalations {
            log::warn!(
                "segmentation stopped after {escalations} threshold raises with {} long gap(s)",
                gaps.len()
            );
            return Segmentation {
                points,
                final_t1: t1,
                escalations,
                capped: true,
            };
        }
        t1 += params.delta;
        escalations += 1;
        for (a, b) in gaps {
            let lo = a + params.l_min;
            let hi = b.saturating_sub(params.l_min);
            if lo < hi {
                points.extend(find_seg_points_with(hra, lo, hi, t1, params.requorum, params));
            }
        }
        points.sort_unstable();
        points.dedup();
    }
}

fn long_gaps(points: &[usize], len: usize, l_max: usize) -> Vec<(usize, usize)> {
    let mut bounds = Vec::with_capacity(points.len() + 2);
    bounds.push(0);
    bounds.extend_from_slice(points);
    bounds.push(len);
    bounds
        .windows(2)
        .filter(|w| w[1] - w[0] > l_max)
        .map(|w| (w[0], w[1]))
        .collect()
}

/// Splits `[start, end)` at the given interior points.
pub fn to_segments(start: usize, end: usize, points: &[usize]) -> Vec<Segment> {
    let mut out = Vec::with_capacity(points.len() + 1);
    let mut a = start;
    for &p in points.iter().filter(|&&p| p > start && p < end) {
        out.push(Segment {
            start_index: a,
            end_index: p,
            true_interval: None,
        });
        a = p;
    }
    out.push(Segment {
        start_index: a,
        end_index: end,
        true_interval: None,
    });
    out
}

/// Segments one span of a longer HRA sequence. Points closer than half the
/// shortest interval to either span end are dropped: those are the platform
/// stops at boarding and alighting rather than interval boundaries.
pub fn segment_span(
    hra: &[f64],
    start: usize,
    end: usize,
    network: &MetroNetwork,
    cfg: &SegmenterConfig,
) -> (Vec<Segment>, Segmentation) {
    let slice = &hra[start..end];
    let params = SegmenterParams::for_span(slice, network, cfg);
    let mut seg = find_final_segment_points(slice, &params);
    let margin = params.l_min / 2;
    seg.points
        .retain(|&p| p >= margin && p + margin <= slice.len());
    let points: Vec<usize> = seg.points.iter().map(|p| p + start).collect();
    seg.points = points.clone();
    (to_segments(start, end, &points), seg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> SegmenterParams {
        SegmenterParams {
            t1: 0.1,
            delta: 0.01,
            l_w: 20,
            l_min: 100,
            l_max: 300,
            quorum: 0.95,
            requorum: 0.8,
            max_escalations: 8,
        }
    }

    /// Busy signal with quiet stretches at the given ranges.
    fn signal(len: usize, quiet: &[(usize, usize)], quiet_level: f64) -> Vec<f64> {
        (0..len)
            .map(|i| {
                if quiet.iter().any(|&(a, b)| (a..b).contains(&i)) {
                    quiet_level
                } else {
                    0.5 + 0.3 * (i as f64 * 0.7).sin()
                }
            })
            .collect()
    }

    #[test]
    fn busy_signal_has_no_points() {
        let hra = signal(500, &[], 0.0);
        assert!(find_seg_points(&hra, 0, 500, &params()).is_empty());
    }

    #[test]
    fn one_stop_gives_one_point_inside_it() {
        let hra = signal(400, &[(180, 220)], 0.01);
        let pts = find_seg_points(&hra, 0, 400, &params());
        assert_eq!(pts.len(), 1);
        assert!((180..220).contains(&pts[0]), "{pts:?}");
    }

    #[test]
    fn two_stops_two_points() {
        let hra = signal(600, &[(150, 190), (400, 440)], 0.01);
        let pts = find_seg_points(&hra, 0, 600, &params());
        assert_eq!(pts.len(), 2);
        assert!((150..190).contains(&pts[0]) && (400..440).contains(&pts[1]));
    }

    #[test]
    fn escalation_finds_noisy_stop() {
        // Second stop sits just above t1, so only a raised threshold sees it.
        let mut hra = signal(700, &[(200, 240), (450, 490)], 0.01);
        for v in &mut hra[450..490] {
            *v = 0.12;
        }
        let p = params();
        let first = find_seg_points(&hra, 0, 700, &p);
        assert_eq!(first.len(), 1);
        let seg = find_final_segment_points(&hra, &p);
        assert_eq!(seg.points.len(), 2, "{seg:?}");
        assert!((450..490).contains(&seg.points[1]));
        assert!(seg.escalations >= 1 && !seg.capped);
    }

    #[test]
    fn single_interval_has_no_interior_points() {
        let hra = signal(250, &[], 0.0);
        let seg = find_final_segment_points(&hra, &params());
        assert!(seg.points.is_empty() && !seg.capped);
    }

    #[test]
    fn cap_reached_is_flagged() {
        let hra = signal(1000, &[], 0.0);
        let seg = find_final_segment_points(&hra, &params());
        assert!(seg.capped);
        assert_eq!(seg.escalations, 8);
    }

    #[test]
    fn segments_partition_span() {
        assert_eq!(
            to_segments(10, 50, &[]),
            vec![Segment { start_index: 10, end_index: 50, true_interval: None }]
        );
        let s = to_segments(0, 90, &[30, 60]);
        assert_eq!(s.len(), 3);
        assert_eq!((s[0].start_index, s[0].end_index), (0, 30));
        assert_eq!((s[1].start_index, s[1].end_index), (30, 60));
        assert_eq!((s[2].start_index, s[2].end_index), (60, 90));
    }

    proptest! {
        #[test]
        fn points_respect_min_spacing(
            xs in prop::collection::vec(0.0f64..0.3, 200..2000),
        ) {
            let p = params();
            let seg = find_final_segment_points(&xs, &p);
            for w in seg.points.windows(2) {
                prop_assert!(w[1] - w[0] >= p.l_min, "{:?}", seg.points);
            }
            let segs = to_segments(0, xs.len(), &seg.points);
            prop_assert_eq!(segs.len(), seg.points.len() + 1);
            prop_assert_eq!(segs[0].start_index, 0);
            prop_assert_eq!(segs.last().unwrap().end_index, xs.len());
            for w in segs.windows(2) {
                prop_assert_eq!(w[0].end_index, w[1].start_index);
            }
        }
    }
}
