//! Phone-frame to East-North-Up conversion and horizontal resultant
//! acceleration (HRA).
//!
//! The orientation triple is read as direction cosines of the phone axes:
//! `alpha` is the elevation of the Y axis above the horizontal plane, `beta`
//! encodes the elevation of the X axis (`sin beta`) with the sign of
//! `cos beta` telling whether the screen faces up, and `gamma` is the
//! heading of the Y axis' horizontal projection, clockwise from north.
//! The Z-axis elevation follows from `sin²α + sin²β + sin²θ = 1`.

use crate::model::{EnuSample, SensorSample, GRAVITY};

/// Orientations whose Y axis is closer than this to vertical have no
/// usable heading.
const MAX_ELEVATION_DEG: f64 = 89.9;

const UNIT_TOLERANCE: f64 = 1e-9;

/// Orientation angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationAngles {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl OrientationAngles {
    /// Converts the on-disk degree triple.
    pub fn from_degrees(orient: [f64; 3]) -> Self {
        OrientationAngles {
            alpha: orient[0].to_radians(),
            beta: orient[1].to_radians(),
            gamma: orient[2].to_radians(),
        }
    }

    /// Whether the angles describe an orthonormal frame with a defined heading.
    pub fn is_valid(&self) -> bool {
        let (sa, sb) = (self.alpha.sin(), self.beta.sin());
        sa * sa + sb * sb <= 1.0 + UNIT_TOLERANCE
            && self.alpha.abs() <= MAX_ELEVATION_DEG.to_radians()
    }
}

/// Phone-to-world rotation. Columns are the phone X, Y, Z axes expressed in
/// (east, north, up).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    pub m: [[f64; 3]; 3],
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Builds the rotation, or `None` for degenerate orientations.
    pub fn from_angles(o: &OrientationAngles) -> Option<Rotation> {
        if !o.is_valid() {
            return None;
        }
        let (sa, ca) = o.alpha.sin_cos();
        let sb = o.beta.sin();
        let (sg, cg) = o.gamma.sin_cos();
        let face = if o.beta.cos() >= 0.0 { 1.0 } else { -1.0 };

        // Y axis: elevation alpha, horizontal heading gamma.
        let y = [ca * sg, ca * cg, sa];
        // X axis: up component sin(beta); along-heading part from X·Y = 0;
        // the remainder points to the right of the heading.
        let along = -sb * sa / ca;
        let right = face * ((ca - sb) * (ca + sb)).max(0.0).sqrt() / ca;
        let x = [along * sg + right * cg, along * cg - right * sg, sb];
        let z = cross(x, y);
        Some(Rotation {
            m: [
                [x[0], y[0], z[0]],
                [x[1], y[1], z[1]],
                [x[2], y[2], z[2]],
            ],
        })
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.m;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    /// World-to-phone.
    pub fn apply_inverse(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.m;
        [
            m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
            m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
            m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
        ]
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Sequential converter that reuses the last good rotation when a sample's
/// orientation is degenerate.
#[derive(Debug, Default, Clone)]
pub struct EnuConverter {
    last: Option<Rotation>,
}

impl EnuConverter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn convert(&mut self, sample: &SensorSample) -> EnuSample {
        let angles = OrientationAngles::from_degrees(sample.orient);
        let (rot, degenerate) = match Rotation::from_angles(&angles) {
            Some(r) => {
                self.last = Some(r);
                (r, false)
            }
            None => (self.last.unwrap_or(Rotation::IDENTITY), true),
        };
        let [e, n, u] = rot.apply(sample.acc);
        EnuSample {
            t: sample.t,
            eca: e,
            nca: n,
            vca: u - GRAVITY,
            hra: e.hypot(n),
            degenerate,
        }
    }
}

/// Converts one sample with no history; degenerate orientations fall back
/// to the identity rotation and are flagged.
pub fn to_enu(sample: &SensorSample) -> EnuSample {
    EnuConverter::new().convert(sample)
}

pub fn to_enu_series(samples: &[SensorSample]) -> Vec<EnuSample> {
    let mut conv = EnuConverter::new();
    samples.iter().map(|s| conv.convert(s)).collect()
}

/// `(t, hra)` for every input sample, order preserved.
pub fn hra_series(samples: &[SensorSample]) -> Vec<(f64, f64)> {
    to_enu_series(samples)
        .into_iter()
        .map(|e| (e.t, e.hra))
        .collect()
}
