//! Metro span extraction from a mixed HRA stream.
//!
//! The stream is tiled into disjoint windows of `m` samples, each window is
//! labelled metro / non-metro by a Gaussian naive Bayes model over five
//! window statistics, isolated labels are flipped, and every surviving
//! transition is refined by re-classifying windows shifted one sample at a
//! time across the boundary.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::naive_bayes::GaussianNb;
use crate::error::{Error, Result};
use crate::stats;

pub const MODE_MODEL_SCHEMA: u32 = 1;

/// Percentiles of metro HRA used as count thresholds.
pub const THRESHOLD_PERCENTILES: [f64; 3] = [50.0, 75.0, 90.0];

/// Offset keeping the log of a zero mean or variance finite, m/s².
const AMPLITUDE_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowFeatures {
    pub mean: f64,
    pub variance: f64,
    pub nvht1: f64,
    pub nvht2: f64,
    pub nvht3: f64,
}

impl WindowFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.mean, self.variance, self.nvht1, self.nvht2, self.nvht3]
    }

    /// Classifier input: amplitude statistics on a log scale, counts as-is.
    pub fn model_input(&self) -> Vec<f64> {
        vec![
            (self.mean + AMPLITUDE_EPS).ln(),
            (self.variance + AMPLITUDE_EPS * AMPLITUDE_EPS).ln(),
            self.nvht1,
            self.nvht2,
            self.nvht3,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeLabel {
    NonMetro,
    Metro,
}

/// Training class of a window or sample. Non-metro data may be split into
/// activity groups, each fitted with its own Gaussian component; prediction
/// collapses all groups into `NonMetro`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowClass {
    Metro,
    NonMetro(usize),
}

impl WindowClass {
    fn class(self) -> usize {
        match self {
            WindowClass::Metro => 0,
            WindowClass::NonMetro(g) => g + 1,
        }
    }

    pub fn label(self) -> ModeLabel {
        match self {
            WindowClass::Metro => ModeLabel::Metro,
            WindowClass::NonMetro(_) => ModeLabel::NonMetro,
        }
    }
}

impl From<ModeLabel> for WindowClass {
    fn from(l: ModeLabel) -> Self {
        match l {
            ModeLabel::Metro => WindowClass::Metro,
            ModeLabel::NonMetro => WindowClass::NonMetro(0),
        }
    }
}

/// Half-open sample range `[start_index, end_index)` of the HRA sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetroSpan {
    pub start_index: usize,
    pub end_index: usize,
}

impl MetroSpan {
    pub fn len(&self) -> usize {
        self.end_index - self.start_index
    }

    pub fn is_empty(&self) -> bool {
        self.end_index <= self.start_index
    }
}

/// Strict-above count thresholds, ascending.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds(pub [f64; 3]);

impl Thresholds {
    /// Percentile thresholds of a metro HRA sample.
    pub fn from_metro_hra(hra: &[f64]) -> Self {
        let mut sorted = hra.to_vec();
        sorted.sort_by(f64::total_cmp);
        Thresholds(THRESHOLD_PERCENTILES.map(|q| stats::percentile_sorted(&sorted, q)))
    }
}

/// Statistics of `hra[start..start + len]`.
pub fn window_features(hra: &[f64], start: usize, len: usize, th: &Thresholds) -> Result<WindowFeatures> {
    if len == 0 || start + len > hra.len() {
        return Err(Error::InvalidArgument(format!(
            "window [{start}, {}) outside sequence of length {}",
            start + len,
            hra.len()
        )));
    }
    let w = &hra[start..start + len];
    let count = |t: f64| w.iter().filter(|&&v| v > t).count() as f64;
    Ok(WindowFeatures {
        mean: stats::mean(w),
        variance: stats::variance(w),
        nvht1: count(th.0[0]),
        nvht2: count(th.0[1]),
        nvht3: count(th.0[2]),
    })
}

/// Window statistics with counts rescaled to a nominal window length.
fn scaled_features(hra: &[f64], start: usize, len: usize, nominal: usize, th: &Thresholds) -> WindowFeatures {
    let mut f = window_features(hra, start, len, th).expect("window in bounds");
    if len != nominal {
        let s = nominal as f64 / len as f64;
        f.nvht1 *= s;
        f.nvht2 *= s;
        f.nvht3 *= s;
    }
    f
}

/// Window length `⌊rate · shortest interval / 2⌋`.
pub fn window_length(sample_rate: f64, shortest_interval: f64) -> usize {
    ((sample_rate * shortest_interval / 2.0).floor() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeModel {
    pub schema_version: u32,
    pub window_len: usize,
    pub thresholds: Thresholds,
    pub nb: GaussianNb,
}

impl ModeModel {
    pub fn classify(&self, f: &WindowFeatures) -> ModeLabel {
        if self.nb.predict(&f.model_input()) == 0 {
            ModeLabel::Metro
        } else {
            ModeLabel::NonMetro
        }
    }

    fn classify_at(&self, hra: &[f64], start: usize) -> ModeLabel {
        let len = self.window_len.min(hra.len() - start);
        self.classify(&scaled_features(hra, start, len, self.window_len, &self.thresholds))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == MODE_MODEL_SCHEMA as u64 => {}
            Some(v) => return Err(Error::Format(format!("unsupported mode model schema {v}"))),
            None => return Err(Error::Format("mode model lacks schema_version".into())),
        }
        let model: ModeModel = serde_json::from_value(value)
            .map_err(|e| Error::Format(format!("mode model: {e}")))?;
        if model.nb.dim != 5 || model.nb.class_count < 2 || model.window_len == 0 {
            return Err(Error::Format("mode model has wrong shape".into()));
        }
        Ok(model)
    }
}

/// Gaussian naive Bayes over labelled window statistics.
pub fn train_mode_classifier(
    labeled: &[(WindowFeatures, ModeLabel)],
    thresholds: Thresholds,
    window_len: usize,
) -> Result<ModeModel> {
    let rows: Vec<_> = labeled.iter().map(|&(f, l)| (f, WindowClass::from(l))).collect();
    train_mode_classifier_grouped(&rows, thresholds, window_len)
}

/// As [`train_mode_classifier`] with one Gaussian component per non-metro
/// group.
pub fn train_mode_classifier_grouped(
    labeled: &[(WindowFeatures, WindowClass)],
    thresholds: Thresholds,
    window_len: usize,
) -> Result<ModeModel> {
    let has = |l: ModeLabel| labeled.iter().any(|(_, x)| x.label() == l);
    if !has(ModeLabel::Metro) || !has(ModeLabel::NonMetro) {
        return Err(Error::InvalidArgument(
            "mode classifier needs both metro and non-metro windows".into(),
        ));
    }
    let x: Vec<Vec<f64>> = labeled.iter().map(|(f, _)| f.model_input()).collect();
    let y: Vec<usize> = labeled.iter().map(|(_, c)| c.class()).collect();
    let classes = y.iter().max().copied().unwrap_or(0) + 1;
    Ok(ModeModel {
        schema_version: MODE_MODEL_SCHEMA,
        window_len,
        thresholds,
        nb: GaussianNb::fit(&x, &y, None, classes)?,
    })
}

/// Fits thresholds and the classifier from HRA sequences with per-sample
/// classes. Windows are tiled at half-window stride; a window is metro when
/// most of its samples are, otherwise it takes its most frequent non-metro
/// group.
pub fn fit_mode_model(series: &[(Vec<f64>, Vec<WindowClass>)], window_len: usize) -> Result<ModeModel> {
    if window_len == 0 {
        return Err(Error::InvalidArgument("window length must be positive".into()));
    }
    let metro: Vec<f64> = series
        .iter()
        .flat_map(|(h, m)| {
            h.iter()
                .zip(m)
                .filter(|(_, c)| **c == WindowClass::Metro)
                .map(|(v, _)| *v)
        })
        .collect();
    if metro.is_empty() {
        return Err(Error::InvalidArgument("no metro samples to fit thresholds".into()));
    }
    let th = Thresholds::from_metro_hra(&metro);
    let stride = (window_len / 2).max(1);
    let mut labeled = Vec::new();
    for (hra, classes) in series {
        if hra.len() != classes.len() {
            return Err(Error::DimensionMismatch {
                expected: hra.len(),
                got: classes.len(),
            });
        }
        let mut s = 0;
        while s + window_len <= hra.len() {
            let window = &classes[s..s + window_len];
            let metro_count = window.iter().filter(|&&c| c == WindowClass::Metro).count();
            let class = if 2 * metro_count > window_len {
                WindowClass::Metro
            } else {
                let mut counts = std::collections::BTreeMap::new();
                for c in window {
                    if let WindowClass::NonMetro(g) = c {
                        *counts.entry(*g).or_insert(0usize) += 1;
                    }
                }
                let g = counts
                    .iter()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                    .map_or(0, |(g, _)| *g);
                WindowClass::NonMetro(g)
            };
            labeled.push((window_features(hra, s, window_len, &th)?, class));
            s += stride;
        }
    }
    train_mode_classifier_grouped(&labeled, th, window_len)
}

/// One label per disjoint window; a trailing partial window is classified
/// from its own statistics with counts rescaled to the full window length.
pub fn classify_windows(hra: &[f64], model: &ModeModel) -> Result<Vec<ModeLabel>> {
    let w = model.window_len;
    if hra.len() < w {
        return Err(Error::InvalidArgument(format!(
            "sequence of {} samples is shorter than one window ({w})",
            hra.len()
        )));
    }
    let n = hra.len().div_ceil(w);
    Ok((0..n)
        .into_par_iter()
        .map(|i| model.classify_at(hra, i * w))
        .collect())
}

/// Flips isolated labels: a metro window whose neighbours are all non-metro,
/// then a non-metro window flanked by metro on both sides.
pub fn flip_isolated(labels: &[ModeLabel]) -> Vec<ModeLabel> {
    use ModeLabel::*;
    let n = labels.len();
    let mut out = labels.to_vec();
    for i in 0..n {
        if labels[i] != Metro || n < 2 {
            continue;
        }
        let left = i == 0 || labels[i - 1] == NonMetro;
        let right = i + 1 == n || labels[i + 1] == NonMetro;
        if left && right {
            out[i] = NonMetro;
        }
    }
    let snapshot = out.clone();
    for i in 1..n.saturating_sub(1) {
        if snapshot[i] == NonMetro && snapshot[i - 1] == Metro && snapshot[i + 1] == Metro {
            out[i] = Metro;
        }
    }
    out
}

/// Converts window labels into refined metro spans.
pub fn refine_boundaries(labels: &[ModeLabel], hra: &[f64], model: &ModeModel) -> Vec<MetroSpan> {
    let w = model.window_len;
    let len = hra.len();
    if labels.is_empty() || len == 0 {
        return Vec::new();
    }
    let labels = flip_isolated(labels);
    let cap = 2 * w;
    let mut spans = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        if labels[i] != ModeLabel::Metro {
            i += 1;
            continue;
        }
        let a = i;
        while i < labels.len() && labels[i] == ModeLabel::Metro {
            i += 1;
        }
        let b = i;

        let boundary = a * w;
        let mut start = boundary.saturating_sub(cap);
        if a == 0 {
            start = 0;
        } else {
            for k in 1..=cap.min(boundary) {
                let s = boundary - k;
                if model.classify_at(hra, s) == ModeLabel::NonMetro {
                    start = s + w / 2;
                    break;
                }
            }
        }

        let boundary = (b * w).min(len);
        let mut end = (boundary + cap).min(len);
        if b == labels.len() {
            end = len;
        } else {
            for k in 1..=cap {
                let s = (b - 1) * w + k;
                if s + w > len {
                    end = len;
                    break;
                }
                if model.classify_at(hra, s) == ModeLabel::NonMetro {
                    end = s + w / 2;
                    break;
                }
            }
        }

        let (mut start, mut end) = (start.min(len), end.min(len));
        if end < start + w {
            let mid = (start + end) / 2;
            start = mid.saturating_sub(w / 2);
            end = (start + w).min(len);
            start = end.saturating_sub(w);
        }
        spans.push(MetroSpan {
            start_index: start,
            end_index: end,
        });
    }
    merge_spans(spans)
}

fn merge_spans(mut spans: Vec<MetroSpan>) -> Vec<MetroSpan> {
    spans.sort_by_key(|s| s.start_index);
    let mut out: Vec<MetroSpan> = Vec::with_capacity(spans.len());
    for s in spans {
        match out.last_mut() {
            Some(last) if s.start_index <= last.end_index => {
                last.end_index = last.end_index.max(s.end_index);
            }
            _ => out.push(s),
        }
    }
    out
}

/// Full extraction: classify, flip isolated windows, refine boundaries.
/// Sequences shorter than one window yield no spans.
pub fn extract_spans(hra: &[f64], model: &ModeModel) -> Vec<MetroSpan> {
    match classify_windows(hra, model) {
        Ok(labels) => refine_boundaries(&labels, hra, model),
        Err(_) => Vec::new(),
    }
}

/// Spans taken straight from window labels with no refinement.
pub fn unrefined_spans(labels: &[ModeLabel], len: usize, w: usize) -> Vec<MetroSpan> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        if labels[i] == ModeLabel::Metro {
            let a = i;
            while i < labels.len() && labels[i] == ModeLabel::Metro {
                i += 1;
            }
            out.push(MetroSpan {
                start_index: a * w,
                end_index: (i * w).min(len),
            });
        } else {
            i += 1;
        }
    }
    out
}
