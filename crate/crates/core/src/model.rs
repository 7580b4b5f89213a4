//! Domain types shared across the pipeline and the on-disk formats for
//! traces and metro networks.
//!
//! Trace files are JSON-lines: an optional `{"meta": ...}` header, one
//! `{"t", "acc", "orient"}` object per sample and an optional
//! `{"truth": [...]}` trailer. Orientation angles are stored in degrees.
//!
//! Network files are a single JSON document describing the forward
//! direction of one line; the reverse direction is derived on load.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal gravity, m/s².
pub const GRAVITY: f64 = 9.81;

/// Accelerometer/orientation polling rate used throughout, Hz.
pub const DEFAULT_SAMPLE_RATE: f64 = 10.0;

/// Smallest dwell the segmentation tolerance model supports, seconds.
pub const MIN_DWELL_SECONDS: f64 = 20.0;

/// One accelerometer + orientation reading in the phone screen frame.
///
/// `orient` holds (alpha, beta, gamma) in degrees, exactly as stored on
/// disk; [`crate::coord::OrientationAngles`] converts to radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSample {
    pub t: f64,
    pub acc: [f64; 3],
    pub orient: [f64; 3],
}

/// Acceleration in the East-North-Up frame with gravity removed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnuSample {
    pub t: f64,
    pub eca: f64,
    pub nca: f64,
    pub vca: f64,
    pub hra: f64,
    /// Set when the reported orientation was degenerate and the previous
    /// rotation was reused.
    #[serde(default)]
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    pub fn opposite(self) -> Direction {
        match self {
            Direction::Forward => Direction::Reverse,
            Direction::Reverse => Direction::Forward,
        }
    }
}

/// Track between two adjacent stations, travelled in one direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationInterval {
    pub id: usize,
    pub from_station: String,
    pub to_station: String,
    pub min_duration: f64,
    pub max_duration: f64,
    pub direction: Direction,
}

impl StationInterval {
    pub fn mean_duration(&self) -> f64 {
        0.5 * (self.min_duration + self.max_duration)
    }
}

/// A single metro line, both directions.
///
/// Interval ids: forward intervals are `0..n`, station `k -> k+1`. Reverse
/// intervals are `n..2n` in travel order, so id `n + j` runs from station
/// `n - j` to `n - j - 1` and retraces forward interval `n - 1 - j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetroNetwork {
    pub name: String,
    pub sample_rate: f64,
    pub intervals: Vec<StationInterval>,
    pub dwell_min: f64,
    pub dwell_max: f64,
}

impl MetroNetwork {
    /// Builds a network from forward intervals, deriving the reverse direction.
    pub fn from_forward(
        name: impl Into<String>,
        sample_rate: f64,
        dwell: (f64, f64),
        forward: Vec<StationInterval>,
    ) -> Result<Self> {
        let n = forward.len();
        let mut intervals = forward;
        for j in 0..n {
            let src = &intervals[n - 1 - j];
            let rev = StationInterval {
                id: n + j,
                from_station: src.to_station.clone(),
                to_station: src.from_station.clone(),
                min_duration: src.min_duration,
                max_duration: src.max_duration,
                direction: Direction::Reverse,
            };
            intervals.push(rev);
        }
        let net = MetroNetwork {
            name: name.into(),
            sample_rate,
            intervals,
            dwell_min: dwell.0,
            dwell_max: dwell.1,
        };
        net.validate()?;
        Ok(net)
    }

    /// Number of intervals along one direction.
    pub fn per_direction(&self) -> usize {
        self.intervals.len() / 2
    }

    /// Total number of interval ids (both directions).
    pub fn interval_count(&self) -> usize {
        self.intervals.len()
    }

    pub fn interval(&self, id: usize) -> &StationInterval {
        &self.intervals[id]
    }

    /// Interval id for `position` along `direction`.
    pub fn interval_id(&self, direction: Direction, position: usize) -> usize {
        match direction {
            Direction::Forward => position,
            Direction::Reverse => self.per_direction() + position,
        }
    }

    /// Inverse of [`MetroNetwork::interval_id`].
    pub fn position(&self, id: usize) -> (Direction, usize) {
        let n = self.per_direction();
        if id < n {
            (Direction::Forward, id)
        } else {
            (Direction::Reverse, id - n)
        }
    }

    /// The same track travelled the other way.
    pub fn reverse_of(&self, id: usize) -> usize {
        let n = self.per_direction();
        let (dir, pos) = self.position(id);
        self.interval_id(dir.opposite(), n - 1 - pos)
    }

    pub fn min_interval_duration(&self) -> f64 {
        self.intervals
            .iter()
            .map(|i| i.min_duration)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_interval_duration(&self) -> f64 {
        self.intervals
            .iter()
            .map(|i| i.max_duration)
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.intervals.is_empty() {
            return Err(Error::Validation("network has no intervals".into()));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::Validation(format!(
                "sample_rate must be positive, got {}",
                self.sample_rate
            )));
        }
        let fwd = self
            .intervals
            .iter()
            .filter(|i| i.direction == Direction::Forward)
            .count();
        if fwd * 2 != self.intervals.len() {
            return Err(Error::Validation(
                "forward and reverse interval lists differ in length".into(),
            ));
        }
        for (k, iv) in self.intervals.iter().enumerate() {
            if iv.id != k {
                return Err(Error::Validation(format!(
                    "interval ids must be consecutive, found {} at position {k}",
                    iv.id
                )));
            }
            let expected = if k < fwd {
                Direction::Forward
            } else {
                Direction::Reverse
            };
            if iv.direction != expected {
                return Err(Error::Validation(format!(
                    "interval {k} has direction {:?}, expected {expected:?}",
                    iv.direction
                )));
            }
            if !(iv.min_duration > 0.0 && iv.min_duration <= iv.max_duration) {
                return Err(Error::Validation(format!(
                    "interval {k}: need 0 < min_duration <= max_duration, got [{}, {}]",
                    iv.min_duration, iv.max_duration
                )));
            }
        }
        if self.dwell_min < MIN_DWELL_SECONDS {
            return Err(Error::Validation(format!(
                "dwell_min must be at least {MIN_DWELL_SECONDS} s, got {}",
                self.dwell_min
            )));
        }
        if self.dwell_max < self.dwell_min {
            return Err(Error::Validation("dwell_max < dwell_min".into()));
        }
        Ok(())
    }
}

/// Non-metro activity classes produced by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Walk,
    Bus,
    Taxi,
    Static,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Walk, Mode::Bus, Mode::Taxi, Mode::Static];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Walk => "walk",
            Mode::Bus => "bus",
            Mode::Taxi => "taxi",
            Mode::Static => "static",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "walk" => Ok(Mode::Walk),
            "bus" => Ok(Mode::Bus),
            "taxi" => Ok(Mode::Taxi),
            "static" => Ok(Mode::Static),
            other => Err(Error::InvalidArgument(format!("unknown mode '{other}'"))),
        }
    }
}

/// Ground-truth label for a time range.
///
/// `Metro` ranges cover a whole trip; the trip is further broken down into
/// `Interval` and `Dwell` ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TruthLabel {
    Mode(Mode),
    Metro,
    Interval(usize),
    Dwell,
}

impl TruthLabel {
    /// Whether the label describes a whole activity rather than a part of a trip.
    pub fn is_top_level(self) -> bool {
        matches!(self, TruthLabel::Mode(_) | TruthLabel::Metro)
    }
}

impl fmt::Display for TruthLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TruthLabel::Mode(m) => f.write_str(m.as_str()),
            TruthLabel::Metro => f.write_str("metro"),
            TruthLabel::Interval(id) => write!(f, "interval:{id}"),
            TruthLabel::Dwell => f.write_str("dwell"),
        }
    }
}

impl FromStr for TruthLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "metro" => Ok(TruthLabel::Metro),
            "dwell" => Ok(TruthLabel::Dwell),
            _ => {
                if let Some(id) = s.strip_prefix("interval:") {
                    id.parse()
                        .map(TruthLabel::Interval)
                        .map_err(|_| Error::InvalidArgument(format!("bad interval label '{s}'")))
                } else {
                    s.parse().map(TruthLabel::Mode)
                }
            }
        }
    }
}

impl Serialize for TruthLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TruthLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRange {
    pub start: f64,
    pub end: f64,
    pub label: TruthLabel,
}

/// A recorded (or simulated) sensor stream from one device.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub device_id: String,
    pub sample_rate: f64,
    pub samples: Vec<SensorSample>,
    pub ground_truth: Option<Vec<TruthRange>>,
}

impl Trace {
    pub fn new(device_id: impl Into<String>, sample_rate: f64) -> Self {
        Trace {
            device_id: device_id.into(),
            sample_rate,
            samples: Vec::new(),
            ground_truth: None,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Sample index for time `t`, clamped to the trace.
    pub fn index_at(&self, t: f64) -> usize {
        let first = self.samples.first().map_or(0.0, |s| s.t);
        let idx = ((t - first) * self.sample_rate).round();
        (idx.max(0.0) as usize).min(self.samples.len())
    }

    pub fn truth(&self) -> &[TruthRange] {
        self.ground_truth.as_deref().unwrap_or(&[])
    }

    /// Checks timestamp monotonicity, value ranges and sample spacing.
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::Validation(format!(
                "sample_rate must be positive, got {}",
                self.sample_rate
            )));
        }
        let period = 1.0 / self.sample_rate;
        let mut prev: Option<f64> = None;
        for (i, s) in self.samples.iter().enumerate() {
            if !s.t.is_finite() || s.acc.iter().chain(&s.orient).any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("sample {i} has non-finite values")));
            }
            if s.t < 0.0 {
                return Err(Error::Validation(format!("sample {i} has negative timestamp")));
            }
            if let Some(p) = prev {
                if s.t <= p {
                    return Err(Error::Validation(format!(
                        "timestamps not strictly increasing at sample {i} ({} after {p})",
                        s.t
                    )));
                }
                let dt = s.t - p;
                if (dt - period).abs() > 0.01 * period {
                    return Err(Error::Validation(format!(
                        "sample spacing {dt} at sample {i} deviates from 1/sample_rate by more than 1%"
                    )));
                }
            }
            let [alpha, beta, gamma] = s.orient;
            if !(-90.0..=90.0).contains(&alpha) {
                return Err(Error::Validation(format!("sample {i}: alpha {alpha} outside [-90, 90]")));
            }
            if !(-180.0..=180.0).contains(&beta) {
                return Err(Error::Validation(format!("sample {i}: beta {beta} outside [-180, 180]")));
            }
            if !(0.0..360.0).contains(&gamma) {
                return Err(Error::Validation(format!("sample {i}: gamma {gamma} outside [0, 360)")));
            }
            prev = Some(s.t);
        }
        Ok(())
    }
}

/// A contiguous run of samples presumed to cover one station interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start_index: usize,
    pub end_index: usize,
    pub true_interval: Option<usize>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end_index - self.start_index
    }

    pub fn is_empty(&self) -> bool {
        self.end_index <= self.start_index
    }
}

#[derive(Serialize, Deserialize)]
struct TraceMeta {
    device_id: String,
    sample_rate: f64,
}

#[derive(Serialize, Deserialize)]
struct MetaLine {
    meta: TraceMeta,
}

#[derive(Serialize, Deserialize)]
struct TruthLine {
    truth: Vec<TruthRange>,
}

/// Reads a JSON-lines trace file.
pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut trace = Trace::new("unknown", DEFAULT_SAMPLE_RATE);
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| parse_err(lineno, "expected a JSON object".into()))?;
        if obj.contains_key("meta") {
            let m: MetaLine =
                serde_json::from_value(value).map_err(|e| parse_err(lineno, e.to_string()))?;
            trace.device_id = m.meta.device_id;
            trace.sample_rate = m.meta.sample_rate;
        } else if obj.contains_key("truth") {
            let t: TruthLine =
                serde_json::from_value(value).map_err(|e| parse_err(lineno, e.to_string()))?;
            trace.ground_truth = Some(t.truth);
        } else {
            let mut s: SensorSample =
                serde_json::from_value(value).map_err(|e| parse_err(lineno, e.to_string()))?;
            s.orient[2] = s.orient[2].rem_euclid(360.0);
            trace.samples.push(s);
        }
    }
    trace.validate()?;
    Ok(trace)
}

/// Writes a trace as JSON-lines; the inverse of [`load_trace`].
pub fn save_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = |line: String| writeln!(w, "{line}").map_err(|e| Error::io(path, e));
    emit(serde_json::to_string(&MetaLine {
        meta: TraceMeta {
            device_id: trace.device_id.clone(),
            sample_rate: trace.sample_rate,
        },
    })?)?;
    for s in &trace.samples {
        emit(serde_json::to_string(s)?)?;
    }
    if let Some(truth) = &trace.ground_truth {
        emit(serde_json::to_string(&TruthLine {
            truth: truth.clone(),
        })?)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct IntervalSpec {
    id: usize,
    from: String,
    to: String,
    min_duration: f64,
    max_duration: f64,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    name: String,
    sample_rate: f64,
    dwell: [f64; 2],
    intervals: Vec<IntervalSpec>,
}

/// Reads a network description; reverse intervals are generated.
pub fn load_network(path: impl AsRef<Path>) -> Result<MetroNetwork> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    network_from_json(&text).map_err(|e| match e {
        Error::Json(j) => Error::Parse {
            path: path.to_path_buf(),
            line: j.line(),
            msg: j.to_string(),
        },
        other => other,
    })
}

pub fn network_from_json(text: &str) -> Result<MetroNetwork> {
    let file: NetworkFile = serde_json::from_str(text)?;
    let forward = file
        .intervals
        .into_iter()
        .map(|s| StationInterval {
            id: s.id,
            from_station: s.from,
            to_station: s.to,
            min_duration: s.min_duration,
            max_duration: s.max_duration,
            direction: Direction::Forward,
        })
        .collect();
    MetroNetwork::from_forward(
        file.name,
        file.sample_rate,
        (file.dwell[0], file.dwell[1]),
        forward,
    )
}

pub fn network_to_json(net: &MetroNetwork) -> Result<String> {
    let file = NetworkFile {
        name: net.name.clone(),
        sample_rate: net.sample_rate,
        dwell: [net.dwell_min, net.dwell_max],
        intervals: net
            .intervals
            .iter()
            .filter(|i| i.direction == Direction::Forward)
            .map(|i| IntervalSpec {
                id: i.id,
                from: i.from_station.clone(),
                to: i.to_station.clone(),
                min_duration: i.min_duration,
                max_duration: i.max_duration,
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn save_network(net: &MetroNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = network_to_json(net)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Pretty-printed JSON writer shared by model and report files.
pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
