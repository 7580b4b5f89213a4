//! Segment feature vectors: per-axis statistics on smoothed ENU
//! acceleration plus multi-scale peak and valley locations.

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::THRESHOLD_PERCENTILES;
use crate::model::EnuSample;
use crate::stats;

pub const FFT_BINS: usize = 6;
pub const MIN_SERIES_LEN: usize = 8;
/// Statistics per axis: mean, max, std, mav, 3 counts, 6 FFT bins,
/// spectral entropy, spectrum peak bin.
pub const STATS_PER_AXIS: usize = 7 + FFT_BINS + 2;
pub const PEAKS_PER_KIND: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub sample_rate: f64,
    /// Smoothing width in samples; even values are bumped to the next odd.
    pub smooth_k: usize,
    /// Peak search window sizes, seconds.
    pub peak_windows: Vec<f64>,
    /// Count thresholds per axis (east, north, up).
    pub nvht_thresholds: [[f64; 3]; 3],
    pub include_length: bool,
    pub include_peaks: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            sample_rate: crate::model::DEFAULT_SAMPLE_RATE,
            smooth_k: 9,
            peak_windows: vec![1.0, 2.0, 4.0],
            nvht_thresholds: [[0.0; 3]; 3],
            include_length: true,
            include_peaks: true,
        }
    }
}

impl FeatureConfig {
    pub fn dim(&self) -> usize {
        3 * STATS_PER_AXIS
            + usize::from(self.include_length)
            + if self.include_peaks { 3 * 4 * PEAKS_PER_KIND } else { 0 }
    }

    fn window_samples(&self) -> Vec<usize> {
        self.peak_windows
            .iter()
            .map(|s| ((s * self.sample_rate).round() as usize).max(1))
            .collect()
    }

    /// Shortest segment the config can featurize.
    pub fn min_len(&self) -> usize {
        let largest = self.window_samples().into_iter().max().unwrap_or(1);
        largest.max(MIN_SERIES_LEN)
    }

    /// Count thresholds from percentiles of the smoothed training segments.
    pub fn fit_thresholds(&mut self, segments: &[&[EnuSample]]) {
        for axis in 0..3 {
            let values: Vec<f64> = segments
                .iter()
                .flat_map(|s| smooth(&axis_series(s, axis), self.smooth_k).unwrap_or_default())
                .collect();
            let mut sorted = values;
            sorted.sort_by(f64::total_cmp);
            self.nvht_thresholds[axis] =
                THRESHOLD_PERCENTILES.map(|q| stats::percentile_sorted(&sorted, q));
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.smooth_k == 0 {
            return Err(Error::InvalidArgument("smoothing width must be >= 1".into()));
        }
        if self.include_peaks && self.peak_windows.len() < 2 {
            return Err(Error::InvalidArgument("peak search needs at least 2 window sizes".into()));
        }
        if self.peak_windows.iter().any(|w| !(*w > 0.0)) || !(self.sample_rate > 0.0) {
            return Err(Error::InvalidArgument("window sizes and rate must be positive".into()));
        }
        Ok(())
    }
}

fn axis_series(seg: &[EnuSample], axis: usize) -> Vec<f64> {
    seg.iter()
        .map(|e| match axis {
            0 => e.eca,
            1 => e.nca,
            _ => e.vca,
        })
        .collect()
}

/// Centred moving average; edges average over the part of the window that
/// lies inside the series.
pub fn smooth(series: &[f64], k: usize) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::InvalidArgument("cannot smooth an empty series".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("smoothing width must be >= 1".into()));
    }
    let half = k / 2;
    let n = series.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in series {
        prefix.push(prefix.last().unwrap() + v);
    }
    Ok((0..n)
        .map(|i| {
            let a = i.saturating_sub(half);
            let b = (i + half + 1).min(n);
            let mean = (prefix[b] - prefix[a]) / (b - a) as f64;
            // Prefix differences can overshoot the data range by an ulp.
            let (lo, hi) = series[a..b]
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            mean.clamp(lo, hi)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatBlock {
    pub mean: f64,
    pub max: f64,
    pub std: f64,
    pub mav: f64,
    pub nvht: [f64; 3],
    pub fft: [f64; FFT_BINS],
    pub spectral_entropy: f64,
    /// Bin index of the largest power-spectrum entry (0 when flat zero).
    pub spectrum_peak: usize,
}

impl StatBlock {
    fn push_to(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&[self.mean, self.max, self.std, self.mav]);
        out.extend_from_slice(&self.nvht);
        out.extend_from_slice(&self.fft);
        out.push(self.spectral_entropy);
        out.push(self.spectrum_peak as f64);
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Magnitudes of the mean-removed series' DFT, zero-padded to a power of
/// two and scaled by the original length. Returns all `N` bins.
fn spectrum(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let size = n.next_power_of_two();
    let m = stats::mean(series);
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|&v| Complex::new(v - m, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(size));
    fft.process(&mut buf);
    buf.iter().map(|c| c.norm() / n as f64).collect()
}

pub fn statistical_features(series: &[f64], thresholds: &[f64; 3]) -> Result<StatBlock> {
    if series.len() < MIN_SERIES_LEN {
        return Err(Error::InvalidArgument(format!(
            "series of {} samples is shorter than {MIN_SERIES_LEN}",
            series.len()
        )));
    }
    let n = series.len() as f64;
    let mag = spectrum(series);
    let mut fft = [0.0; FFT_BINS];
    for (k, f) in fft.iter_mut().enumerate() {
        *f = mag[(k + 1) % mag.len()];
    }
    let power: Vec<f64> = mag[1..=mag.len() / 2].iter().map(|m| m * m).collect();
    let total: f64 = power.iter().sum();
    let (spectral_entropy, spectrum_peak) = if total > 0.0 {
        let h = power
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| {
                let q = p / total;
                -q * q.ln()
            })
            .sum::<f64>();
        (h.max(0.0), stats::argmax(&power) + 1)
    } else {
        (0.0, 0)
    };
    Ok(StatBlock {
        mean: stats::mean(series),
        max: series.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        std: stats::variance(series).sqrt(),
        mav: series.iter().map(|v| v.abs()).sum::<f64>() / n,
        nvht: thresholds.map(|t| series.iter().filter(|&&v| v > t).count() as f64),
        fft,
        spectral_entropy,
        spectrum_peak,
    })
}

/// A peak or valley: smoothed amplitude and position as a fraction of the
/// segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub amplitude: f64,
    pub position: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakBlock {
    /// Largest first.
    pub peaks: [Extremum; PEAKS_PER_KIND],
    /// Deepest first.
    pub valleys: [Extremum; PEAKS_PER_KIND],
}

impl PeakBlock {
    fn push_to(&self, out: &mut Vec<f64>) {
        for e in self.peaks.iter().chain(&self.valleys) {
            out.push(e.amplitude);
            out.push(e.position);
        }
    }
}

struct Cluster {
    index: usize,
    amplitude: f64,
    wins: usize,
}

/// Top extrema that win most often across window sizes. `sign` is +1 for
/// peaks and -1 for valleys.
fn vote_extrema(series: &[f64], windows: &[usize], sign: f64) -> [Extremum; PEAKS_PER_KIND] {
    let n = series.len();
    let merge = windows.iter().copied().min().unwrap_or(1);
    // (index, signed amplitude) of every top-ranked window extremum.
    let mut candidates: Vec<(usize, f64)> = Vec::new();
    for &w in windows {
        // Equal windows; the last one absorbs the remainder.
        let count = n / w;
        let mut per_window: Vec<(usize, f64)> = (0..count)
            .map(|c| {
                let end = if c + 1 == count { n } else { (c + 1) * w };
                let chunk = &series[c * w..end];
                let mut best = 0;
                for (j, &v) in chunk.iter().enumerate() {
                    if sign * v > sign * chunk[best] {
                        best = j;
                    }
                }
                (c * w + best, sign * chunk[best])
            })
            .collect();
        per_window.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        candidates.extend(per_window.into_iter().take(PEAKS_PER_KIND));
    }
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut clusters: Vec<Cluster> = Vec::new();
    for (index, amplitude) in candidates {
        match clusters.iter_mut().find(|c| c.index.abs_diff(index) <= merge) {
            Some(c) => c.wins += 1,
            None => clusters.push(Cluster {
                index,
                amplitude,
                wins: 1,
            }),
        }
    }
    clusters.sort_by(|a, b| {
        b.wins
            .cmp(&a.wins)
            .then(b.amplitude.total_cmp(&a.amplitude))
            .then(a.index.cmp(&b.index))
    });
    clusters.truncate(PEAKS_PER_KIND);
    clusters.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude).then(a.index.cmp(&b.index)));
    let denom = (n.max(2) - 1) as f64;
    let mut out = [Extremum {
        amplitude: 0.0,
        position: 0.0,
    }; PEAKS_PER_KIND];
    for (k, slot) in out.iter_mut().enumerate() {
        // Pad with the weakest selected extremum.
        let c = &clusters[k.min(clusters.len() - 1)];
        *slot = Extremum {
            amplitude: sign * c.amplitude,
            position: c.index as f64 / denom,
        };
    }
    out
}

/// Three peaks and three valleys of a (smoothed) series.
pub fn peak_features(series: &[f64], window_sizes: &[usize]) -> Result<PeakBlock> {
    if window_sizes.is_empty() || window_sizes.contains(&0) {
        return Err(Error::InvalidArgument("window sizes must be positive".into()));
    }
    let largest = *window_sizes.iter().max().unwrap();
    if series.len() < largest {
        return Err(Error::InvalidArgument(format!(
            "series of {} samples is shorter than the largest window ({largest})",
            series.len()
        )));
    }
    Ok(PeakBlock {
        peaks: vote_extrema(series, window_sizes, 1.0),
        valleys: vote_extrema(series, window_sizes, -1.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentFeatures {
    /// East, north, up.
    pub stats: [StatBlock; 3],
    /// Samples in the segment.
    pub length: usize,
    pub peaks: [PeakBlock; 3],
}

impl SegmentFeatures {
    pub fn to_vec(&self, cfg: &FeatureConfig) -> Vec<f64> {
        let mut out = Vec::with_capacity(cfg.dim());
        for b in &self.stats {
            b.push_to(&mut out);
        }
        if cfg.include_length {
            out.push(self.length as f64);
        }
        if cfg.include_peaks {
            for p in &self.peaks {
                p.push_to(&mut out);
            }
        }
        out
    }
}

/// Smooths each axis of the segment, then computes both feature families.
pub fn extract_features(segment: &[EnuSample], cfg: &FeatureConfig) -> Result<SegmentFeatures> {
    cfg.validate()?;
    if segment.len() < cfg.min_len() {
        return Err(Error::InvalidArgument(format!(
            "segment of {} samples is shorter than {}",
            segment.len(),
            cfg.min_len()
        )));
    }
    let windows = cfg.window_samples();
    let mut stats = Vec::with_capacity(3);
    let mut peaks = Vec::with_capacity(3);
    for axis in 0..3 {
        let s = smooth(&axis_series(segment, axis), cfg.smooth_k)?;
        stats.push(statistical_features(&s, &cfg.nvht_thresholds[axis])?);
        peaks.push(peak_features(&s, &windows)?);
    }
    Ok(SegmentFeatures {
        stats: [stats[0], stats[1], stats[2]],
        length: segment.len(),
        peaks: [peaks[0], peaks[1], peaks[2]],
    })
}

pub fn feature_vector(segment: &[EnuSample], cfg: &FeatureConfig) -> Result<Vec<f64>> {
    Ok(extract_features(segment, cfg)?.to_vec(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_smooth(x: &[f64], k: usize) -> Vec<f64> {
        let h = (k / 2) as isize;
        (0..x.len() as isize)
            .map(|i| {
                let mut s = 0.0;
                let mut c = 0.0;
                for j in i - h..=i + h {
                    if j >= 0 && (j as usize) < x.len() {
                        s += x[j as usize];
                        c += 1.0;
                    }
                }
                s / c
            })
            .collect()
    }

    fn brute_dft_mag(x: &[f64], size: usize, k: usize) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (t, v) in x.iter().enumerate() {
            let a = -std::f64::consts::TAU * (k * t) as f64 / size as f64;
            re += (v - m) * a.cos();
            im += (v - m) * a.sin();
        }
        re.hypot(im) / x.len() as f64
    }

    #[test]
    fn smooth_constant_unchanged() {
        assert_eq!(smooth(&[2.5; 20], 9).unwrap(), vec![2.5; 20]);
    }

    #[test]
    fn smooth_cancels_alternation() {
        let x: Vec<f64> = (0..50).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        // Width 9 covers four full periods plus one sample.
        let s = smooth(&x, 9).unwrap();
        for v in &s[4..46] {
            assert!(v.abs() <= 1.0 / 9.0 + 1e-12);
        }
        let s = smooth(&x, 8).unwrap();
        assert_eq!(s, smooth(&x, 9).unwrap());
    }

    #[test]
    fn smooth_rejects_empty() {
        assert!(smooth(&[], 3).is_err());
        assert!(smooth(&[1.0], 0).is_err());
    }

    #[test]
    fn zero_series_gives_zero_block() {
        let b = statistical_features(&[0.0; 32], &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(b.mean, 0.0);
        assert_eq!(b.std, 0.0);
        assert_eq!(b.fft, [0.0; 6]);
        assert_eq!(b.spectral_entropy, 0.0);
        assert_eq!(b.spectrum_peak, 0);
        assert_eq!(b.nvht, [0.0; 3]);
    }

    #[test]
    fn sinusoid_at_bin_three() {
        let n = 64;
        let x: Vec<f64> = (0..n)
            .map(|t| (std::f64::consts::TAU * 3.0 * t as f64 / n as f64).sin())
            .collect();
        let b = statistical_features(&x, &[0.0, 0.5, 0.9]).unwrap();
        assert_eq!(b.spectrum_peak, 3);
        for k in 1..=6 {
            assert!((b.fft[k - 1] - brute_dft_mag(&x, n, k)).abs() < 1e-9);
        }
        assert!(b.spectral_entropy < 1e-6);
    }

    #[test]
    fn short_series_rejected() {
        assert!(statistical_features(&[1.0; 7], &[0.0; 3]).is_err());
    }

    #[test]
    fn triangular_bump_peak_at_apex() {
        let x: Vec<f64> = (0..100).map(|i| (10.0 - (i as f64 - 37.0).abs()).max(0.0)).collect();
        for w in [5usize, 10, 20] {
            let p = peak_features(&x, &[w, 2 * w]).unwrap();
            assert_eq!(p.peaks[0].amplitude, 10.0);
            assert!((p.peaks[0].position - 37.0 / 99.0).abs() < 1e-12);
        }
    }

    #[test]
    fn three_bumps_amplitude_ordered() {
        let bump = |c: f64, h: f64, i: usize| (h - (i as f64 - c).abs() * 0.5).max(0.0);
        let x: Vec<f64> = (0..300)
            .map(|i| bump(40.0, 2.0, i) + bump(150.0, 5.0, i) + bump(250.0, 3.0, i))
            .collect();
        let p = peak_features(&x, &[10, 20, 40]).unwrap();
        let got: Vec<(f64, f64)> = p.peaks.iter().map(|e| (e.amplitude, e.position * 299.0)).collect();
        assert_eq!(got, vec![(5.0, 150.0), (3.0, 250.0), (2.0, 40.0)]);
    }

    #[test]
    fn adjacent_maxima_merge() {
        // One event with two close local maxima plus two clear smaller events.
        let mut x = vec![0.0; 200];
        // Straddles window edges at every size so each size ranks both.
        x[99] = 4.0;
        x[102] = 3.9;
        x[30] = 2.0;
        x[170] = 1.5;
        let p = peak_features(&x, &[5, 10, 20]).unwrap();
        let pos: Vec<usize> = p.peaks.iter().map(|e| (e.position * 199.0).round() as usize).collect();
        // 102 folds into 99; only two distinct events rank, so the last slot pads.
        assert_eq!(pos, vec![99, 30, 30]);
    }

    #[test]
    fn peak_search_needs_long_series() {
        assert!(peak_features(&[0.0; 10], &[5, 20]).is_err());
    }

    fn enu(len: usize, f: impl Fn(usize) -> [f64; 3]) -> Vec<EnuSample> {
        (0..len)
            .map(|i| {
                let [e, n, u] = f(i);
                EnuSample {
                    t: i as f64 / 10.0,
                    eca: e,
                    nca: n,
                    vca: u,
                    hra: e.hypot(n),
                    degenerate: false,
                }
            })
            .collect()
    }

    #[test]
    fn zero_segment_features() {
        let cfg = FeatureConfig::default();
        let seg = enu(200, |_| [0.0; 3]);
        let f = extract_features(&seg, &cfg).unwrap();
        let v = f.to_vec(&cfg);
        assert_eq!(v.len(), cfg.dim());
        for b in &f.stats {
            assert_eq!((b.mean, b.max, b.std, b.mav, b.spectral_entropy), (0.0, 0.0, 0.0, 0.0, 0.0));
        }
        for p in &f.peaks {
            assert!(p.peaks.iter().chain(&p.valleys).all(|e| e.amplitude == 0.0));
        }
    }

    #[test]
    fn hand_shake_mostly_removed_by_smoothing() {
        let cfg = FeatureConfig::default();
        let base = |i: usize| {
            let t = i as f64 / 10.0;
            [0.8 * (t / 15.0).sin(), 0.5 * (t / 9.0).cos(), 0.1 * (t / 5.0).sin()]
        };
        let clean = enu(800, base);
        let shaky = enu(800, |i| {
            let [e, n, u] = base(i);
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            [e + s, n - s, u]
        });
        let a = extract_features(&clean, &cfg).unwrap();
        let b = extract_features(&shaky, &cfg).unwrap();
        for axis in 0..2 {
            assert!((a.stats[axis].mean - b.stats[axis].mean).abs() < 0.01);
            assert!((a.stats[axis].std - b.stats[axis].std).abs() < 0.05);
            for r in 0..3 {
                let (pa, pb) = (a.peaks[axis].peaks[r], b.peaks[axis].peaks[r]);
                assert!((pa.amplitude - pb.amplitude).abs() < 0.15, "{pa:?} {pb:?}");
            }
        }
        assert_eq!(extract_features(&clean, &cfg).unwrap(), a);
    }

    #[test]
    fn dimension_follows_config() {
        let mut cfg = FeatureConfig::default();
        assert_eq!(cfg.dim(), 3 * 15 + 1 + 36);
        cfg.include_peaks = false;
        cfg.include_length = false;
        assert_eq!(cfg.dim(), 45);
        let seg = enu(100, |i| [i as f64, 0.0, 1.0]);
        assert_eq!(feature_vector(&seg, &cfg).unwrap().len(), 45);
    }

    #[test]
    fn thresholds_fit_from_percentiles() {
        let mut cfg = FeatureConfig {
            smooth_k: 1,
            ..FeatureConfig::default()
        };
        let seg = enu(101, |i| [i as f64, -(i as f64), 0.0]);
        cfg.fit_thresholds(&[&seg]);
        assert_eq!(cfg.nvht_thresholds[0], [50.0, 75.0, 90.0]);
        assert_eq!(cfg.nvht_thresholds[1], [-50.0, -25.0, -10.0]);
    }

    proptest! {
        #[test]
        fn smooth_matches_brute_force(x in prop::collection::vec(-5.0f64..5.0, 1..80), k in 1usize..15) {
            let a = smooth(&x, k).unwrap();
            let b = brute_smooth(&x, k | 1);
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).abs() < 1e-9);
            }
            let inf = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(a.iter().all(|v| v.abs() <= inf));
        }

        #[test]
        fn smooth_is_linear(
            x in prop::collection::vec(-5.0f64..5.0, 1..60),
            y in prop::collection::vec(-5.0f64..5.0, 60),
            a in -3.0f64..3.0,
        ) {
            let y = &y[..x.len()];
            let lhs = smooth(&x.iter().zip(y).map(|(p, q)| a * p + q).collect::<Vec<_>>(), 9).unwrap();
            let sx = smooth(&x, 9).unwrap();
            let sy = smooth(y, 9).unwrap();
            for i in 0..x.len() {
                prop_assert!((lhs[i] - (a * sx[i] + sy[i])).abs() < 1e-9);
            }
        }

        #[test]
        fn stats_match_brute_force(x in prop::collection::vec(-5.0f64..5.0, 8..100)) {
            let b = statistical_features(&x, &[-1.0, 0.0, 1.0]).unwrap();
            let n = x.len() as f64;
            let m = x.iter().sum::<f64>() / n;
            let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            let mav = x.iter().map(|v| v.abs()).sum::<f64>() / n;
            prop_assert!((b.mean - m).abs() < 1e-9);
            prop_assert!((b.std - sd).abs() < 1e-9);
            prop_assert!((b.mav - mav).abs() < 1e-9);
            prop_assert!(b.std >= 0.0 && b.mav >= 0.0);
            let size = x.len().next_power_of_two();
            for k in 1..=6 {
                prop_assert!((b.fft[k - 1] - brute_dft_mag(&x, size, k)).abs() < 1e-9);
            }
            let bins = size / 2;
            prop_assert!(b.spectral_entropy >= 0.0);
            prop_assert!(b.spectral_entropy <= (bins as f64).ln() + 1e-9);
            prop_assert!(b.spectrum_peak <= bins);
        }

        #[test]
        fn peaks_scale_with_amplitude(
            x in prop::collection::vec(-5.0f64..5.0, 40..200),
            e in -3i32..4,
        ) {
            let lambda = 2f64.powi(e);
            let windows = [10, 20, 40];
            let a = peak_features(&x, &windows).unwrap();
            let scaled: Vec<f64> = x.iter().map(|v| v * lambda).collect();
            let b = peak_features(&scaled, &windows).unwrap();
            for (p, q) in a.peaks.iter().chain(&a.valleys).zip(b.peaks.iter().chain(&b.valleys)) {
                prop_assert_eq!(p.position, q.position);
                prop_assert_eq!(p.amplitude * lambda, q.amplitude);
            }
            for r in 0..3 {
                prop_assert!((0.0..=1.0).contains(&a.peaks[r].position));
                prop_assert!((0.0..=1.0).contains(&a.valleys[r].position));
            }
            // The global extremes always win selection.
            let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert_eq!(a.peaks[0].amplitude, max);
            prop_assert_eq!(a.valleys[0].amplitude, min);
        }
    }
}
