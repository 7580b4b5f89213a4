//! Synthetic metro line and sensor trace generator.
//!
//! Train motion is a sequence of constant-acceleration primitives per
//! station interval (accelerate, cruise/curve, brake). World-frame
//! acceleration is rotated into a drifting phone frame with gravity added,
//! then hand-shake bursts, white sensor noise and (optionally) defense noise
//! are layered on top. Everything is a pure function of the inputs and seed.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::coord::{OrientationAngles, Rotation};
use crate::error::{Error, Result};
use crate::model::{
    Direction, MetroNetwork, Mode, SensorSample, StationInterval, Trace, TruthLabel, TruthRange,
    DEFAULT_SAMPLE_RATE, GRAVITY,
};
use crate::rng::{self, Rng};

/// Per-trip driver variation limits: cruise speed factor, accelerate and
/// brake magnitude factors.
const SPEED_JITTER: f64 = 0.08;
const ACCEL_JITTER: f64 = 0.12;

/// Mean rate of unscheduled speed adjustments while cruising, per second,
/// and the range of their duration (s) and deceleration (m/s²).
const ADJUST_RATE: f64 = 1.0 / 40.0;
const ADJUST_DURATION: (f64, f64) = (3.0, 7.0);
const ADJUST_DECEL: (f64, f64) = (0.15, 0.45);

/// Speed at which ride vibration reaches `NoiseConfig::ride_vibration`.
const VIBRATION_REF_SPEED: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveKind {
    Accelerate,
    Cruise,
    Curve,
    Brake,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionPrimitive {
    pub kind: PrimitiveKind,
    /// Nominal duration, seconds.
    pub duration: f64,
    /// Along-track acceleration, m/s².
    pub forward_accel: f64,
    /// Rightward acceleration, m/s² (positive turns clockwise).
    pub lateral_accel: f64,
}

/// Nominal kinematics of one interval in one direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackProfile {
    pub interval_id: usize,
    pub primitives: Vec<MotionPrimitive>,
    /// Heading at departure, radians clockwise from north.
    pub initial_heading: f64,
    pub cruise_speed: f64,
    pub distinctive: bool,
}

impl TrackProfile {
    pub fn nominal_duration(&self) -> f64 {
        self.primitives.iter().map(|p| p.duration).sum()
    }

    /// Integral of along-track acceleration; zero for a profile that stops.
    pub fn net_speed_change(&self) -> f64 {
        self.primitives
            .iter()
            .map(|p| p.forward_accel * p.duration)
            .sum()
    }

    fn peak_lateral(&self) -> f64 {
        self.primitives
            .iter()
            .map(|p| p.lateral_accel.abs())
            .fold(0.0, f64::max)
    }

    fn curve_positions(&self) -> Vec<f64> {
        let total = self.nominal_duration();
        let mut t = 0.0;
        let mut out = Vec::new();
        for p in &self.primitives {
            if p.kind == PrimitiveKind::Curve {
                out.push(t / total);
            }
            t += p.duration;
        }
        out
    }

    /// The same track travelled the other way: primitive order reversed,
    /// accelerate and brake swapped, lateral sign flipped.
    pub fn reversed(&self, interval_id: usize) -> TrackProfile {
        let primitives = self
            .primitives
            .iter()
            .rev()
            .map(|p| MotionPrimitive {
                kind: match p.kind {
                    PrimitiveKind::Accelerate => PrimitiveKind::Brake,
                    PrimitiveKind::Brake => PrimitiveKind::Accelerate,
                    k => k,
                },
                duration: p.duration,
                forward_accel: -p.forward_accel,
                lateral_accel: -p.lateral_accel,
            })
            .collect();
        let end_heading = self.initial_heading + self.total_turn();
        TrackProfile {
            interval_id,
            primitives,
            initial_heading: (end_heading + std::f64::consts::PI)
                .rem_euclid(std::f64::consts::TAU),
            cruise_speed: self.cruise_speed,
            distinctive: self.distinctive,
        }
    }

    fn total_turn(&self) -> f64 {
        self.primitives
            .iter()
            .filter(|p| p.kind == PrimitiveKind::Curve)
            .map(|p| p.lateral_accel / self.cruise_speed * p.duration)
            .sum()
    }

    /// Actual primitive durations and accelerations for one traversal.
    fn realize(&self, v: &TripVariation) -> Vec<MotionPrimitive> {
        self.primitives
            .iter()
            .map(|p| match p.kind {
                PrimitiveKind::Accelerate => {
                    let a = p.forward_accel * v.accel;
                    MotionPrimitive {
                        duration: self.cruise_speed * v.speed / a,
                        forward_accel: a,
                        ..*p
                    }
                }
                PrimitiveKind::Brake => {
                    let a = p.forward_accel * v.brake;
                    MotionPrimitive {
                        duration: self.cruise_speed * v.speed / -a,
                        forward_accel: a,
                        ..*p
                    }
                }
                PrimitiveKind::Cruise | PrimitiveKind::Curve => MotionPrimitive {
                    duration: p.duration / v.speed,
                    lateral_accel: p.lateral_accel * v.speed * v.speed,
                    ..*p
                },
            })
            .collect()
    }

    fn duration_with(&self, v: &TripVariation) -> f64 {
        self.realize(v).iter().map(|p| p.duration).sum()
    }

    /// Range of traversal durations over the whole variation box.
    fn duration_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for i in 0..=20 {
            let speed = 1.0 - SPEED_JITTER + 2.0 * SPEED_JITTER * i as f64 / 20.0;
            for accel in [1.0 - ACCEL_JITTER, 1.0 + ACCEL_JITTER] {
                for brake in [1.0 - ACCEL_JITTER, 1.0 + ACCEL_JITTER] {
                    let d = self.duration_with(&TripVariation { speed, accel, brake });
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
            }
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TripVariation {
    speed: f64,
    accel: f64,
    brake: f64,
}

impl TripVariation {
    fn sample(rng: &mut Rng) -> Self {
        TripVariation {
            speed: rng.random_range(1.0 - SPEED_JITTER..=1.0 + SPEED_JITTER),
            accel: rng.random_range(1.0 - ACCEL_JITTER..=1.0 + ACCEL_JITTER),
            brake: rng.random_range(1.0 - ACCEL_JITTER..=1.0 + ACCEL_JITTER),
        }
    }
}

/// How the phone is held.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhonePose {
    /// Screen up, level, fixed heading.
    Flat,
    /// Tilted towards the user with drifting orientation.
    Handheld,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Peak amplitude of hand-shake bursts, m/s².
    pub hand_shake_amp: f64,
    /// Oscillation frequency inside a burst, Hz.
    pub hand_shake_freq: f64,
    /// Mean number of bursts per second.
    pub hand_shake_rate: f64,
    /// Standard deviation of heading drift rate, deg/s.
    pub orientation_drift_rate: f64,
    /// Standard deviation of the slowly wandering error in reported
    /// heading, degrees. Magnetometers are disturbed inside trains.
    pub compass_error: f64,
    /// White accelerometer noise, m/s².
    pub sensor_sigma: f64,
    /// Track-induced vibration at cruise speed, m/s². Zero when stopped.
    pub ride_vibration: f64,
    /// Privacy noise blended into the readings, m/s².
    pub defense_noise_amp: f64,
    pub pose: PhonePose,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            hand_shake_amp: 1.0,
            hand_shake_freq: 2.5,
            hand_shake_rate: 1.0 / 60.0,
            orientation_drift_rate: 0.5,
            compass_error: 20.0,
            sensor_sigma: 0.015,
            ride_vibration: 0.15,
            defense_noise_amp: 0.0,
            pose: PhonePose::Handheld,
        }
    }
}

impl NoiseConfig {
    /// Noise-free, flat phone.
    pub fn zero() -> Self {
        NoiseConfig {
            hand_shake_amp: 0.0,
            hand_shake_freq: 2.5,
            hand_shake_rate: 0.0,
            orientation_drift_rate: 0.0,
            compass_error: 0.0,
            sensor_sigma: 0.0,
            ride_vibration: 0.0,
            defense_noise_amp: 0.0,
            pose: PhonePose::Flat,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.hand_shake_amp,
            self.hand_shake_freq,
            self.hand_shake_rate,
            self.orientation_drift_rate,
            self.compass_error,
            self.sensor_sigma,
            self.ride_vibration,
            self.defense_noise_amp,
        ];
        if fields.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument(
                "noise parameters must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Generator settings for [`gen_network`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub sample_rate: f64,
    pub dwell_min: f64,
    pub dwell_max: f64,
    /// Fraction of intervals given large curves and long tracks.
    pub distinctive_fraction: f64,
    /// Nominal duration range for ordinary intervals, seconds.
    pub ordinary_duration: (f64, f64),
    /// Nominal duration range for distinctive intervals, seconds.
    pub distinctive_duration: (f64, f64),
    /// Minimum pairwise difference in nominal duration, seconds.
    pub min_duration_gap: f64,
    /// Minimum pairwise difference in curve placement (fraction of interval).
    pub min_curve_shift: f64,
    /// Minimum pairwise difference in peak lateral acceleration, m/s².
    pub min_peak_gap: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            sample_rate: DEFAULT_SAMPLE_RATE,
            dwell_min: 25.0,
            dwell_max: 40.0,
            distinctive_fraction: 0.2,
            ordinary_duration: (95.0, 120.0),
            distinctive_duration: (150.0, 190.0),
            min_duration_gap: 2.0,
            min_curve_shift: 0.05,
            min_peak_gap: 0.05,
        }
    }
}

fn profiles_distinct(a: &TrackProfile, b: &TrackProfile, cfg: &NetworkConfig) -> bool {
    if (a.nominal_duration() - b.nominal_duration()).abs() >= cfg.min_duration_gap {
        return true;
    }
    if (a.peak_lateral() - b.peak_lateral()).abs() >= cfg.min_peak_gap {
        return true;
    }
    let (ca, cb) = (a.curve_positions(), b.curve_positions());
    ca.len() != cb.len()
        || ca
            .iter()
            .zip(&cb)
            .any(|(x, y)| (x - y).abs() >= cfg.min_curve_shift)
}

fn random_profile(id: usize, distinctive: bool, heading: f64, cfg: &NetworkConfig, rng: &mut Rng) -> TrackProfile {
    let (lo, hi) = if distinctive {
        cfg.distinctive_duration
    } else {
        cfg.ordinary_duration
    };
    let total = rng.random_range(lo..=hi);
    let v = if distinctive {
        rng.random_range(18.0..=22.0)
    } else {
        rng.random_range(14.0..=19.0)
    };
    let a = rng.random_range(0.75..=1.0);
    let b = rng.random_range(0.75..=1.0);
    let t_acc = v / a;
    let t_brk = v / b;
    let cruise_total = (total - t_acc - t_brk).max(10.0);

    let (n_curves, lat_range, dur_range) = if distinctive {
        (rng.random_range(2..=3), (0.5, 0.95), (12.0, 25.0))
    } else {
        let n = match rng.random_range(0..10) {
            0..=2 => 0,
            3..=7 => 1,
            _ => 2,
        };
        (n, (0.1, 0.35), (6.0, 14.0))
    };
    let mut curves: Vec<(f64, f64)> = Vec::new();
    let mut sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    for _ in 0..n_curves {
        let dur: f64 = rng.random_range(dur_range.0..=dur_range.1);
        let lat: f64 = rng.random_range(lat_range.0..=lat_range.1);
        curves.push((dur.min(cruise_total / (n_curves as f64 + 1.0)), sign * lat));
        if rng.random_bool(0.5) {
            sign = -sign;
        }
    }
    let curve_time: f64 = curves.iter().map(|c| c.0).sum();
    let straight = cruise_total - curve_time;
    // Split the straight track into n_curves + 1 gaps with random weights.
    let weights: Vec<f64> = (0..=curves.len()).map(|_| rng.random_range(0.3..=1.0)).collect();
    let wsum: f64 = weights.iter().sum();

    let mut prims = vec![MotionPrimitive {
        kind: PrimitiveKind::Accelerate,
        duration: t_acc,
        forward_accel: a,
        lateral_accel: 0.0,
    }];
    for (k, w) in weights.iter().enumerate() {
        let gap = straight * w / wsum;
        if gap > 0.0 {
            prims.push(MotionPrimitive {
                kind: PrimitiveKind::Cruise,
                duration: gap,
                forward_accel: 0.0,
                lateral_accel: 0.0,
            });
        }
        if let Some(&(dur, lat)) = curves.get(k) {
            prims.push(MotionPrimitive {
                kind: PrimitiveKind::Curve,
                duration: dur,
                forward_accel: 0.0,
                lateral_accel: lat,
            });
        }
    }
    prims.push(MotionPrimitive {
        kind: PrimitiveKind::Brake,
        duration: t_brk,
        forward_accel: -b,
        lateral_accel: 0.0,
    });
    TrackProfile {
        interval_id: id,
        primitives: prims,
        initial_heading: heading.rem_euclid(std::f64::consts::TAU),
        cruise_speed: v,
        distinctive,
    }
}

/// Generates a line with `num_intervals` intervals per direction and the
/// track profile of every interval id (both directions).
pub fn gen_network(num_intervals: usize, seed: u64) -> Result<(MetroNetwork, Vec<TrackProfile>)> {
    gen_network_with(num_intervals, &NetworkConfig::default(), seed)
}

pub fn gen_network_with(
    num_intervals: usize,
    cfg: &NetworkConfig,
    seed: u64,
) -> Result<(MetroNetwork, Vec<TrackProfile>)> {
    if num_intervals < 2 {
        return Err(Error::InvalidArgument(format!(
            "a line needs at least 2 intervals, got {num_intervals}"
        )));
    }
    let mut rng = rng::stream(seed, 0x6e65_7477);
    let n_distinct = ((num_intervals as f64 * cfg.distinctive_fraction).round() as usize).max(1);
    let mut positions: Vec<usize> = (0..num_intervals).collect();
    for i in 0..n_distinct {
        let j = rng.random_range(i..num_intervals);
        positions.swap(i, j);
    }
    let distinctive: Vec<bool> = (0..num_intervals)
        .map(|k| positions[..n_distinct].contains(&k))
        .collect();

    let mut forward: Vec<TrackProfile> = Vec::with_capacity(num_intervals);
    let mut heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    for k in 0..num_intervals {
        let mut attempt = 0;
        let profile = loop {
            let p = random_profile(k, distinctive[k], heading, cfg, &mut rng);
            attempt += 1;
            if forward.iter().all(|q| profiles_distinct(&p, q, cfg)) || attempt > 200 {
                break p;
            }
        };
        heading = profile.initial_heading + profile.total_turn() + rng.random_range(-0.4..=0.4);
        forward.push(profile);
    }

    let stations: Vec<String> = (0..=num_intervals).map(|k| format!("S{k:02}")).collect();
    let intervals = forward
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let (lo, hi) = p.duration_range();
            StationInterval {
                id: k,
                from_station: stations[k].clone(),
                to_station: stations[k + 1].clone(),
                min_duration: (lo * 0.995 * 1000.0).floor() / 1000.0,
                max_duration: (hi * 1.005 * 1000.0).ceil() / 1000.0,
                direction: Direction::Forward,
            }
        })
        .collect();
    let net = MetroNetwork::from_forward(
        format!("synthetic-{seed}"),
        cfg.sample_rate,
        (cfg.dwell_min, cfg.dwell_max),
        intervals,
    )?;

    let mut profiles = forward.clone();
    for j in 0..num_intervals {
        profiles.push(forward[num_intervals - 1 - j].reversed(num_intervals + j));
    }
    Ok((net, profiles))
}

/// A piece of world-frame motion laid out on the trip timeline.
#[derive(Debug, Clone)]
struct Placed {
    t0: f64,
    primitive: MotionPrimitive,
    speed0: f64,
    heading0: f64,
    cruise_speed: f64,
}

/// Splits straight cruise primitives around brief ease-off and recover
/// pairs, so repeated rides of one interval differ in their peaks. Each
/// pair has zero net speed change and leaves the total duration unchanged.
fn with_speed_adjustments(prims: Vec<MotionPrimitive>, rng: &mut Rng) -> Vec<MotionPrimitive> {
    let mut out = Vec::with_capacity(prims.len());
    for p in prims {
        if p.kind != PrimitiveKind::Cruise {
            out.push(p);
            continue;
        }
        let mut left = p.duration;
        loop {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            let gap = -u.ln() / ADJUST_RATE;
            let d = rng.random_range(ADJUST_DURATION.0..=ADJUST_DURATION.1);
            let a = rng.random_range(ADJUST_DECEL.0..=ADJUST_DECEL.1);
            if gap + 2.0 * d >= left {
                break;
            }
            out.push(MotionPrimitive {
                duration: gap,
                ..p
            });
            out.push(MotionPrimitive {
                duration: d,
                forward_accel: -a,
                ..p
            });
            out.push(MotionPrimitive {
                duration: d,
                forward_accel: a,
                ..p
            });
            left -= gap + 2.0 * d;
        }
        out.push(MotionPrimitive {
            duration: left,
            ..p
        });
    }
    out
}

/// World-frame rendering of a trip together with the phone-frame trace.
#[derive(Debug, Clone)]
pub struct RenderedTrip {
    pub trace: Trace,
    /// Gravity-free world acceleration (east, north, up) per sample, before
    /// any sensor-side noise.
    pub world_acc: Vec<[f64; 3]>,
    /// Train speed per sample, m/s.
    pub speed: Vec<f64>,
}

fn interval_id_checked(network: &MetroNetwork, start: usize, length: usize) -> Result<Vec<usize>> {
    if length == 0 {
        return Err(Error::InvalidArgument("trip length must be at least 1".into()));
    }
    if start >= network.interval_count() {
        return Err(Error::InvalidArgument(format!("no interval with id {start}")));
    }
    let (dir, pos) = network.position(start);
    if pos + length > network.per_direction() {
        return Err(Error::InvalidArgument(format!(
            "a {length}-interval run from interval {start} leaves the line"
        )));
    }
    Ok((0..length).map(|k| network.interval_id(dir, pos + k)).collect())
}

/// Phone-frame trace of a metro ride over `length` consecutive intervals
/// starting at `start_interval`, with dwells between intervals.
pub fn gen_trip(
    network: &MetroNetwork,
    profiles: &[TrackProfile],
    start_interval: usize,
    length: usize,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<Trace> {
    render_trip(network, profiles, start_interval, length, noise, seed).map(|r| r.trace)
}

pub fn render_trip(
    network: &MetroNetwork,
    profiles: &[TrackProfile],
    start_interval: usize,
    length: usize,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<RenderedTrip> {
    noise.validate()?;
    let ids = interval_id_checked(network, start_interval, length)?;
    if profiles.len() != network.interval_count() {
        return Err(Error::InvalidArgument(format!(
            "expected {} profiles, got {}",
            network.interval_count(),
            profiles.len()
        )));
    }
    let mut rng = rng::stream(seed, 0x7472_6970);
    let fs = network.sample_rate;

    let mut placed: Vec<Placed> = Vec::new();
    let mut truth: Vec<TruthRange> = Vec::new();
    let mut t = 0.0;
    for (k, &id) in ids.iter().enumerate() {
        if k > 0 {
            let dwell = rng.random_range(network.dwell_min..=network.dwell_max);
            truth.push(TruthRange {
                start: t,
                end: t + dwell,
                label: TruthLabel::Dwell,
            });
            t += dwell;
        }
        let profile = &profiles[id];
        let variation = TripVariation::sample(&mut rng);
        let start = t;
        let mut speed = 0.0;
        let mut heading = profile.initial_heading;
        let v_cruise = profile.cruise_speed * variation.speed;
        for p in with_speed_adjustments(profile.realize(&variation), &mut rng) {
            placed.push(Placed {
                t0: t,
                primitive: p,
                speed0: speed,
                heading0: heading,
                cruise_speed: v_cruise,
            });
            speed += p.forward_accel * p.duration;
            if p.kind == PrimitiveKind::Curve {
                heading += p.lateral_accel / v_cruise * p.duration;
            }
            t += p.duration;
        }
        truth.push(TruthRange {
            start,
            end: t,
            label: TruthLabel::Interval(id),
        });
    }
    let total = t;
    truth.push(TruthRange {
        start: 0.0,
        end: total,
        label: TruthLabel::Metro,
    });
    truth.sort_by(|a, b| a.start.total_cmp(&b.start).then(b.end.total_cmp(&a.end)));

    let n = (total * fs).ceil() as usize;
    let mut world = Vec::with_capacity(n);
    let mut speeds = Vec::with_capacity(n);
    let mut cursor = 0usize;
    for i in 0..n {
        let ti = i as f64 / fs;
        while cursor + 1 < placed.len() && placed[cursor + 1].t0 <= ti {
            cursor += 1;
        }
        let pl = &placed[cursor];
        let p = &pl.primitive;
        let dt = (ti - pl.t0).clamp(0.0, p.duration);
        let in_motion = ti < total;
        let (f, l, heading, v) = if in_motion {
            let heading = if p.kind == PrimitiveKind::Curve {
                pl.heading0 + p.lateral_accel / pl.cruise_speed * dt
            } else {
                pl.heading0
            };
            let v = (pl.speed0 + p.forward_accel * dt).max(0.0);
            (p.forward_accel, p.lateral_accel, heading, v)
        } else {
            (0.0, 0.0, 0.0, 0.0)
        };
        let (sh, ch) = heading.sin_cos();
        world.push([f * sh + l * ch, f * ch - l * sh, 0.0]);
        speeds.push(v);
    }
    // Dwells: zero acceleration.
    for r in truth.iter().filter(|r| r.label == TruthLabel::Dwell) {
        let a = (r.start * fs).ceil() as usize;
        let b = ((r.end * fs).ceil() as usize).min(n);
        for i in a..b {
            world[i] = [0.0; 3];
            speeds[i] = 0.0;
        }
    }

    add_ride_vibration(&mut world, &speeds, noise.ride_vibration, &mut rng);
    let mut trace = Trace::new(format!("sim-trip-{seed}"), fs);
    trace.samples = phone_frame(&world, fs, noise, &mut rng);
    trace.ground_truth = Some(truth);
    if noise.defense_noise_amp > 0.0 {
        trace = apply_defense_noise(&trace, noise.defense_noise_amp, rng::derive(seed, 0xdef))?;
    }
    Ok(RenderedTrip {
        trace,
        world_acc: world,
        speed: speeds,
    })
}

fn add_ride_vibration(world: &mut [[f64; 3]], speed: &[f64], sigma: f64, rng: &mut Rng) {
    if sigma <= 0.0 {
        return;
    }
    // AR(1) per axis, unit stationary variance.
    let phi: f64 = 0.7;
    let innov = Normal::new(0.0, (1.0 - phi * phi).sqrt()).expect("valid normal");
    let mut state = [0.0f64; 3];
    for (w, &v) in world.iter_mut().zip(speed) {
        let scale = sigma * (v / VIBRATION_REF_SPEED).min(1.5);
        for (axis, s) in state.iter_mut().enumerate() {
            *s = phi * *s + innov.sample(rng);
            let vertical = if axis == 2 { 1.5 } else { 1.0 };
            w[axis] += scale * vertical * *s;
        }
    }
}

/// Rotates world-frame acceleration into a phone frame, adding gravity,
/// hand-shake bursts and sensor noise.
fn phone_frame(world: &[[f64; 3]], fs: f64, noise: &NoiseConfig, rng: &mut Rng) -> Vec<SensorSample> {
    let n = world.len();
    let dt = 1.0 / fs;
    let (mut pitch, mut roll, mut heading) = match noise.pose {
        PhonePose::Flat => (0.0, 0.0, 0.0),
        PhonePose::Handheld => (
            rng.random_range(20.0..=50.0),
            rng.random_range(-15.0..=15.0),
            rng.random_range(0.0..360.0),
        ),
    };
    let drift_std = noise.orientation_drift_rate;
    let mut heading_rate = 0.0f64;
    let unit = Normal::new(0.0, 1.0).expect("valid normal");

    // Own stream, so toggling hand shake leaves every other draw unchanged.
    let shake_seed: u64 = rng.random();
    let shake = hand_shake(n, fs, noise, &mut rng::stream(shake_seed, 0x7368_616b));
    // Reported heading error: OU process with a one-minute correlation time.
    let compass_theta = 1.0 / 60.0;
    let mut compass = noise.compass_error * unit.sample(rng);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if noise.compass_error > 0.0 {
            compass += -compass_theta * compass * dt
                + noise.compass_error * (2.0 * compass_theta * dt).sqrt() * unit.sample(rng);
        }
        if drift_std > 0.0 && noise.pose == PhonePose::Handheld {
            // Ornstein-Uhlenbeck heading rate with stationary std = drift_std.
            let theta = 0.05;
            heading_rate += -theta * heading_rate * dt
                + drift_std * (2.0 * theta * dt).sqrt() * unit.sample(rng);
            heading += heading_rate * dt;
            pitch = (pitch + 0.2 * drift_std * dt.sqrt() * unit.sample(rng)).clamp(5.0, 70.0);
            roll = (roll + 0.2 * drift_std * dt.sqrt() * unit.sample(rng)).clamp(-30.0, 30.0);
        }
        let gamma = heading.rem_euclid(360.0);
        // X-axis elevation for a pitch-then-roll holding pose.
        let beta = (-(pitch.to_radians().cos()) * roll.to_radians().sin())
            .asin()
            .to_degrees();
        let orient = [pitch, beta, gamma];
        let rot = Rotation::from_angles(&OrientationAngles::from_degrees(orient))
            .expect("generated orientation is valid");
        let w = world[i];
        let mut acc = rot.apply_inverse([w[0], w[1], w[2] + GRAVITY]);
        let orient = [pitch, beta, (gamma + compass).rem_euclid(360.0)];
        for axis in 0..3 {
            acc[axis] += shake[i][axis];
            if noise.sensor_sigma > 0.0 {
                acc[axis] += noise.sensor_sigma * unit.sample(rng);
            }
        }
        out.push(SensorSample {
            t: i as f64 / fs,
            acc,
            orient,
        });
    }
    out
}

/// Hann-windowed sinusoidal bursts in the phone's screen plane.
fn hand_shake(n: usize, fs: f64, noise: &NoiseConfig, rng: &mut Rng) -> Vec<[f64; 3]> {
    let mut out = vec![[0.0; 3]; n];
    if noise.hand_shake_amp <= 0.0 || noise.hand_shake_rate <= 0.0 {
        return out;
    }
    let duration = n as f64 / fs;
    let mut t = 0.0;
    loop {
        // Exponential inter-arrival.
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        t += -u.ln() / noise.hand_shake_rate;
        if t >= duration {
            break;
        }
        let len = rng.random_range(1.0..=2.5);
        let freq = noise.hand_shake_freq * rng.random_range(0.9..=1.1);
        let amp = noise.hand_shake_amp * rng.random_range(0.6..=1.0);
        let dir = rng.random_range(0.0..std::f64::consts::TAU);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let (dx, dy) = (dir.cos(), dir.sin());
        let a = (t * fs).ceil() as usize;
        let b = (((t + len) * fs).ceil() as usize).min(n);
        for (i, o) in out.iter_mut().enumerate().take(b).skip(a) {
            let tau = i as f64 / fs - t;
            let window = (std::f64::consts::PI * tau / len).sin().powi(2);
            let v = amp * window * (std::f64::consts::TAU * freq * tau + phase).sin();
            o[0] += v * dx;
            o[1] += v * dy;
            o[2] += 0.3 * v;
        }
    }
    out
}

/// Non-metro activity of the given duration.
pub fn gen_other_mode(mode: Mode, duration: f64, noise: &NoiseConfig, seed: u64) -> Result<Trace> {
    gen_other_mode_at(mode, duration, DEFAULT_SAMPLE_RATE, noise, seed)
}

pub fn gen_other_mode_at(
    mode: Mode,
    duration: f64,
    fs: f64,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<Trace> {
    if !(duration > 0.0) {
        return Err(Error::InvalidArgument("duration must be positive".into()));
    }
    noise.validate()?;
    let mut rng = rng::stream(seed, 0x6d6f_6465 + mode as u64);
    let n = (duration * fs).round().max(1.0) as usize;
    let world = match mode {
        Mode::Static => vec![[0.0; 3]; n],
        Mode::Walk => walk_motion(n, fs, &mut rng),
        Mode::Bus => road_motion(n, fs, 0.5, 0.3, (1.0, 1.6), 1.0 / 45.0, &mut rng),
        Mode::Taxi => road_motion(n, fs, 0.45, 0.4, (1.3, 2.3), 1.0 / 30.0, &mut rng),
    };
    let mut trace = Trace::new(format!("sim-{}-{seed}", mode.as_str()), fs);
    trace.samples = phone_frame(&world, fs, noise, &mut rng);
    trace.ground_truth = Some(vec![TruthRange {
        start: 0.0,
        end: n as f64 / fs,
        label: TruthLabel::Mode(mode),
    }]);
    if noise.defense_noise_amp > 0.0 {
        trace = apply_defense_noise(&trace, noise.defense_noise_amp, rng::derive(seed, 0xdef))?;
    }
    Ok(trace)
}

fn walk_motion(n: usize, fs: f64, rng: &mut Rng) -> Vec<[f64; 3]> {
    let step = rng.random_range(1.8..=2.2);
    let a_fwd = rng.random_range(1.5..=2.5);
    let a_lat = rng.random_range(0.5..=1.0);
    let a_up = rng.random_range(2.0..=3.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let mut heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let jitter = Normal::new(0.0, 0.15).expect("valid normal");
    (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            heading += 0.02 * jitter.sample(rng);
            let w = std::f64::consts::TAU * step * t + phase;
            let f = a_fwd * w.sin() + 0.3 * a_fwd * (2.0 * w).sin() + jitter.sample(rng);
            let l = a_lat * (0.5 * w).sin() + jitter.sample(rng);
            let (sh, ch) = heading.sin_cos();
            [f * sh + l * ch, f * ch - l * sh, a_up * w.cos()]
        })
        .collect()
}

/// Road vehicle: broadband vibration, slow speed and steering fluctuation
/// from traffic, plus stop-and-go and turning events.
fn road_motion(
    n: usize,
    fs: f64,
    vibration: f64,
    drive: f64,
    event_accel: (f64, f64),
    event_rate: f64,
    rng: &mut Rng,
) -> Vec<[f64; 3]> {
    let mut out = vec![[0.0; 3]; n];
    let dt = 1.0 / fs;
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let phi: f64 = 0.5;
    let mut state = [0.0f64; 3];
    let mut heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let mut event_left = 0.0;
    let mut event = (0.0, 0.0);
    // Ornstein-Uhlenbeck driving fluctuation, 3 s correlation time.
    let decay = (-dt / 3.0f64).exp();
    let kick = drive * (1.0 - decay * decay).sqrt();
    let mut fluct = [0.0f64; 2];
    for o in out.iter_mut() {
        for v in fluct.iter_mut() {
            *v = decay * *v + kick * unit.sample(rng);
        }
        if event_left <= 0.0 && rng.random::<f64>() < event_rate * dt {
            event_left = rng.random_range(3.0..=8.0);
            let mag = rng.random_range(event_accel.0..=event_accel.1);
            event = match rng.random_range(0..3) {
                0 => (mag, 0.0),
                1 => (-mag, 0.0),
                _ => (0.0, if rng.random_bool(0.5) { mag } else { -mag }),
            };
        }
        let (f, l) = if event_left > 0.0 {
            event_left -= dt;
            event
        } else {
            (0.0, 0.0)
        };
        let (f, l) = (f + fluct[0], l + fluct[1]);
        heading += l * 0.01 * dt;
        for s in state.iter_mut() {
            *s = phi * *s + (1.0 - phi * phi).sqrt() * unit.sample(rng);
        }
        let (sh, ch) = heading.sin_cos();
        *o = [
            f * sh + l * ch + vibration * state[0],
            f * ch - l * sh + vibration * state[1],
            1.5 * vibration * state[2],
        ];
    }
    out
}

/// One block of a simulated day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScheduleItem {
    Mode { mode: Mode, duration: f64 },
    Trip { start_interval: usize, length: usize },
}

/// Concatenates activities into one continuous trace with merged truth.
pub fn gen_mixed_day(
    schedule: &[ScheduleItem],
    network: &MetroNetwork,
    profiles: &[TrackProfile],
    noise: &NoiseConfig,
    seed: u64,
) -> Result<Trace> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("empty schedule".into()));
    }
    let fs = network.sample_rate;
    let mut day = Trace::new(format!("sim-day-{seed}"), fs);
    let mut truth = Vec::new();
    for (k, item) in schedule.iter().enumerate() {
        let piece_seed = rng::derive(seed, k as u64 + 1);
        let piece = match *item {
            ScheduleItem::Mode { mode, duration } => {
                gen_other_mode_at(mode, duration, fs, noise, piece_seed)?
            }
            ScheduleItem::Trip {
                start_interval,
                length,
            } => gen_trip(network, profiles, start_interval, length, noise, piece_seed)?,
        };
        let offset = day.samples.len();
        let t_off = offset as f64 / fs;
        for (i, s) in piece.samples.iter().enumerate() {
            day.samples.push(SensorSample {
                t: (offset + i) as f64 / fs,
                ..*s
            });
        }
        let piece_end = (offset + piece.samples.len()) as f64 / fs;
        for r in piece.truth() {
            truth.push(TruthRange {
                start: r.start + t_off,
                end: if r.label.is_top_level() {
                    piece_end
                } else {
                    r.end + t_off
                },
                label: r.label,
            });
        }
    }
    day.ground_truth = Some(truth);
    Ok(day)
}

/// Adds zero-mean Gaussian noise of standard deviation `amp` to every
/// accelerometer component.
pub fn apply_defense_noise(trace: &Trace, amp: f64, seed: u64) -> Result<Trace> {
    if !(amp >= 0.0 && amp.is_finite()) {
        return Err(Error::InvalidArgument(format!("defense amplitude must be >= 0, got {amp}")));
    }
    let mut out = trace.clone();
    if amp == 0.0 {
        return Ok(out);
    }
    let mut rng = rng::stream(seed, 0x6465_6665);
    let normal = Normal::new(0.0, amp).expect("valid normal");
    for s in &mut out.samples {
        for a in &mut s.acc {
            *a += normal.sample(&mut rng);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coord::to_enu_series;

    fn mean_hra(trace: &Trace) -> f64 {
        let e = to_enu_series(&trace.samples);
        e.iter().map(|s| s.hra).sum::<f64>() / e.len() as f64
    }

    #[test]
    fn network_has_requested_size_and_distinct_profiles() {
        let (net, profiles) = gen_network(10, 1).unwrap();
        assert_eq!(net.per_direction(), 10);
        assert_eq!(net.interval_count(), 20);
        assert_eq!(profiles.len(), 20);
        let cfg = NetworkConfig::default();
        for i in 0..10 {
            for j in 0..i {
                assert!(profiles_distinct(&profiles[i], &profiles[j], &cfg), "{i} vs {j}");
            }
        }
        assert!(profiles.iter().any(|p| p.distinctive));
    }

    #[test]
    fn network_is_deterministic() {
        assert_eq!(gen_network(10, 7).unwrap(), gen_network(10, 7).unwrap());
        assert_ne!(gen_network(10, 7).unwrap().1, gen_network(10, 8).unwrap().1);
    }

    #[test]
    fn tiny_network_rejected() {
        assert!(gen_network(1, 0).is_err());
    }

    #[test]
    fn profiles_stop_and_fit_bounds() {
        let (net, profiles) = gen_network(10, 3).unwrap();
        for p in &profiles {
            assert!(p.net_speed_change().abs() < 1e-6, "{}", p.net_speed_change());
            assert_eq!(p.primitives.first().unwrap().kind, PrimitiveKind::Accelerate);
            assert_eq!(p.primitives.last().unwrap().kind, PrimitiveKind::Brake);
            let iv = net.interval(p.interval_id);
            let d = p.nominal_duration();
            assert!(iv.min_duration <= d && d <= iv.max_duration);
        }
        let mut rng = rng::stream(5, 5);
        for _ in 0..200 {
            let v = TripVariation::sample(&mut rng);
            for p in &profiles {
                let iv = net.interval(p.interval_id);
                let d = p.duration_with(&v);
                assert!(iv.min_duration <= d && d <= iv.max_duration);
            }
        }
    }

    #[test]
    fn trip_truth_counts() {
        let (net, profiles) = gen_network(10, 1).unwrap();
        let tr = gen_trip(&net, &profiles, 2, 4, &NoiseConfig::default(), 9).unwrap();
        let truth = tr.truth();
        let intervals: Vec<_> = truth
            .iter()
            .filter_map(|r| match r.label {
                TruthLabel::Interval(id) => Some(id),
                _ => None,
            })
            .collect();
        assert_eq!(intervals, vec![2, 3, 4, 5]);
        assert_eq!(truth.iter().filter(|r| r.label == TruthLabel::Dwell).count(), 3);
        tr.validate().unwrap();
    }

    #[test]
    fn trip_off_the_line_rejected() {
        let (net, profiles) = gen_network(10, 1).unwrap();
        assert!(gen_trip(&net, &profiles, 8, 3, &NoiseConfig::zero(), 0).is_err());
        assert!(gen_trip(&net, &profiles, 17, 3, &NoiseConfig::zero(), 0).is_ok());
        assert!(gen_trip(&net, &profiles, 18, 3, &NoiseConfig::zero(), 0).is_err());
    }

    #[test]
    fn zero_noise_single_interval_matches_profile() {
        let (net, profiles) = gen_network(10, 2).unwrap();
        let r = render_trip(&net, &profiles, 4, 1, &NoiseConfig::zero(), 1).unwrap();
        let enu = to_enu_series(&r.trace.samples);
        for (e, w) in enu.iter().zip(&r.world_acc) {
            let planar = w[0].hypot(w[1]);
            assert!((e.hra - planar).abs() < 1e-9);
        }
        // Planar magnitudes take only the primitive magnitudes.
        let p = &profiles[4];
        let max_mag = p
            .primitives
            .iter()
            .map(|q| q.forward_accel.hypot(q.lateral_accel))
            .fold(0.0, f64::max);
        assert!(enu.iter().all(|e| e.hra <= max_mag * (1.0 + ACCEL_JITTER) * 1.11));
    }

    #[test]
    fn handheld_rotation_recovers_world_frame() {
        let (net, profiles) = gen_network(6, 4).unwrap();
        let noise = NoiseConfig {
            pose: PhonePose::Handheld,
            orientation_drift_rate: 2.0,
            ..NoiseConfig::zero()
        };
        let r = render_trip(&net, &profiles, 1, 2, &noise, 3).unwrap();
        for (e, w) in to_enu_series(&r.trace.samples).iter().zip(&r.world_acc) {
            assert!((e.eca - w[0]).abs() < 1e-9);
            assert!((e.nca - w[1]).abs() < 1e-9);
            assert!((e.vca - w[2]).abs() < 1e-9);
        }
    }

    #[test]
    fn static_zero_noise_is_silent() {
        let tr = gen_other_mode(Mode::Static, 30.0, &NoiseConfig::zero(), 1).unwrap();
        assert!(to_enu_series(&tr.samples).iter().all(|e| e.hra.abs() < 1e-12));
    }

    #[test]
    fn amplitude_ordering() {
        let (net, profiles) = gen_network(10, 11).unwrap();
        let noise = NoiseConfig::default();
        let metro = mean_hra(&gen_trip(&net, &profiles, 0, 10, &noise, 5).unwrap());
        let stat = mean_hra(&gen_other_mode(Mode::Static, 600.0, &noise, 5).unwrap());
        let walk = mean_hra(&gen_other_mode(Mode::Walk, 600.0, &noise, 5).unwrap());
        let bus = mean_hra(&gen_other_mode(Mode::Bus, 600.0, &noise, 5).unwrap());
        let taxi = mean_hra(&gen_other_mode(Mode::Taxi, 600.0, &noise, 5).unwrap());
        assert!(stat < metro, "static {stat} metro {metro}");
        assert!(metro < bus && metro < taxi, "metro {metro} bus {bus} taxi {taxi}");
        assert!(bus < walk && taxi < walk, "bus {bus} taxi {taxi} walk {walk}");
    }

    #[test]
    fn mixed_day_concatenates() {
        let (net, profiles) = gen_network(10, 1).unwrap();
        let schedule = [
            ScheduleItem::Mode {
                mode: Mode::Static,
                duration: 60.0,
            },
            ScheduleItem::Trip {
                start_interval: 3,
                length: 3,
            },
            ScheduleItem::Mode {
                mode: Mode::Walk,
                duration: 120.0,
            },
        ];
        let day = gen_mixed_day(&schedule, &net, &profiles, &NoiseConfig::default(), 4).unwrap();
        day.validate().unwrap();
        let top: Vec<_> = day.truth().iter().filter(|r| r.label.is_top_level()).collect();
        assert_eq!(top.len(), 3);
        let n_int = day
            .truth()
            .iter()
            .filter(|r| matches!(r.label, TruthLabel::Interval(_)))
            .count();
        assert_eq!(n_int, 3);
        let trip = gen_trip(&net, &profiles, 3, 3, &NoiseConfig::default(), rng::derive(4, 2)).unwrap();
        assert_eq!(day.samples.len(), 600 + trip.samples.len() + 1200);
        for w in top.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
    }

    #[test]
    fn mixed_day_boundaries_match_amplitude_changes() {
        let (net, profiles) = gen_network(10, 1).unwrap();
        let schedule = [
            ScheduleItem::Mode {
                mode: Mode::Static,
                duration: 60.0,
            },
            ScheduleItem::Mode {
                mode: Mode::Walk,
                duration: 60.0,
            },
        ];
        let noise = NoiseConfig {
            hand_shake_amp: 0.0,
            ..NoiseConfig::default()
        };
        let day = gen_mixed_day(&schedule, &net, &profiles, &noise, 4).unwrap();
        let hra: Vec<f64> = to_enu_series(&day.samples).iter().map(|e| e.hra).collect();
        let boundary = day.truth()[1].start;
        let idx = (boundary * 10.0) as usize;
        // First sample whose 1 s trailing mean exceeds 0.5 m/s².
        let change = (10..hra.len())
            .find(|&i| hra[i - 10..i].iter().sum::<f64>() / 10.0 > 0.5)
            .unwrap();
        assert!((change as f64 - idx as f64).abs() <= 10.0, "{change} vs {idx}");
    }

    #[test]
    fn empty_schedule_rejected() {
        let (net, profiles) = gen_network(4, 1).unwrap();
        assert!(gen_mixed_day(&[], &net, &profiles, &NoiseConfig::default(), 0).is_err());
    }

    #[test]
    fn defense_noise_zero_is_identity_and_zero_mean() {
        let tr = gen_other_mode(Mode::Static, 600.0, &NoiseConfig::zero(), 2).unwrap();
        assert_eq!(apply_defense_noise(&tr, 0.0, 1).unwrap(), tr);
        let amp = 1.5;
        let noisy = apply_defense_noise(&tr, amp, 1).unwrap();
        assert_eq!(noisy.truth(), tr.truth());
        let n = tr.samples.len() as f64;
        for axis in 0..3 {
            let before: f64 = tr.samples.iter().map(|s| s.acc[axis]).sum::<f64>() / n;
            let after: f64 = noisy.samples.iter().map(|s| s.acc[axis]).sum::<f64>() / n;
            assert!((after - before).abs() < 3.0 * amp / n.sqrt());
        }
        for (a, b) in tr.samples.iter().zip(&noisy.samples) {
            assert_eq!(a.t, b.t);
        }
    }
}
