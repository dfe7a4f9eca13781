//! Bistatic geometry and the Doppler it induces.

use serde::{Deserialize, Serialize};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Position in meters.
pub type Vec3 = [f64; 3];

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn distance(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

/// Unit vector from `from` toward `to`; zero vector when they coincide.
pub fn unit(from: Vec3, to: Vec3) -> Vec3 {
    let d = sub(to, from);
    let n = norm(d);
    if n == 0.0 {
        [0.0; 3]
    } else {
        scale(d, 1.0 / n)
    }
}

/// `|tx - p| + |p - rx|`.
pub fn bistatic_path_length(tx: Vec3, p: Vec3, rx: Vec3) -> f64 {
    distance(tx, p) + distance(p, rx)
}

/// Time derivative of the bistatic path length for a scatterer at `p`
/// moving with velocity `v`.
pub fn bistatic_range_rate(tx: Vec3, p: Vec3, rx: Vec3, v: Vec3) -> f64 {
    dot(v, unit(tx, p)) + dot(v, unit(rx, p))
}

/// Observed Doppler `-L'/lambda`: positive for a shrinking path (approaching).
///
/// For a monostatic-like leg pair this reduces to the familiar
/// `v cos(theta) / lambda` per leg.
pub fn bistatic_doppler(tx: Vec3, p: Vec3, rx: Vec3, v: Vec3, wavelength: f64) -> f64 {
    -bistatic_range_rate(tx, p, rx, v) / wavelength
}

/// Static room layout: transmitter, reference receiver, two surveillance
/// receivers and the resting chest position of the monitored person.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeskLayout {
    pub tx: Vec3,
    pub ref_rx: Vec3,
    pub sur_rx: [Vec3; 2],
    pub target: Vec3,
}

impl DeskLayout {
    /// Transmitter 2 m from the target; the closest surveillance receiver sits
    /// `closest_distance` from the target on the transmitter side, the other
    /// one 0.3 m further out on the opposite flank.
    pub fn new(closest_distance: f64) -> Self {
        let tx = [0.0, 0.0, 1.0];
        let target = [2.0, 0.0, 1.0];
        let at = |d: f64, deg: f64| {
            let a = deg.to_radians();
            [target[0] + d * a.cos(), target[1] + d * a.sin(), target[2]]
        };
        Self {
            tx,
            ref_rx: [0.0, 0.4, 1.0],
            sur_rx: [at(closest_distance, 150.0), at(closest_distance + 0.3, 210.0)],
            target,
        }
    }
}

impl Default for DeskLayout {
    fn default() -> Self {
        Self::new(0.3)
    }
}
