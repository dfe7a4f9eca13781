//! Transmit waveform generation and reference/surveillance channel synthesis.
//!
//! Every moving scatterer is rendered from its exact bistatic path length
//! `L(t) = |tx - p(t)| + |p(t) - rx|`: the echo is the transmit signal delayed
//! by `L/c` (linear interpolation between samples) and rotated by the carrier
//! phase `exp(-j 2 pi L / lambda)`. Its amplitude follows the bistatic radar
//! equation, `rcs_gain / (|tx - p| |p - rx|)`, with both ranges floored at
//! [`NEAR_FIELD_FLOOR`].

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::iq::IqBuffer;
use crate::rng::stream;
use crate::scene::{self, DeskLayout, Vec3, SPEED_OF_LIGHT};

/// Ranges below this many meters are clamped in the echo amplitude.
pub const NEAR_FIELD_FLOOR: f64 = 0.1;
/// Fastest walking speed accepted for an interferer trajectory, m/s.
pub const MAX_WALKING_SPEED: f64 = 3.0;

const TAG_TRAINING: u64 = 1;
const TAG_PAYLOAD: u64 = 2;
const TAG_NOISE: u64 = 3;

/// Samples per independently seeded noise chunk.
const NOISE_CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformConfig {
    /// Hz.
    pub carrier_freq: f64,
    /// Baseband sample rate, Hz.
    pub sample_rate: f64,
    /// Training sequence duration, seconds.
    pub training_len: f64,
    /// OFDM payload duration, seconds.
    pub payload_len: f64,
    /// Silence between frames, seconds.
    #[serde(default)]
    pub frame_gap: f64,
    pub subcarrier_count: usize,
    pub seed: u64,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        Self {
            carrier_freq: 60.48e9,
            sample_rate: 10e6,
            training_len: 16e-6,
            payload_len: 200e-6,
            frame_gap: 0.0,
            subcarrier_count: 64,
            seed: 0,
        }
    }
}

fn whole_samples(seconds: f64, rate: f64, what: &str, min: usize) -> Result<usize> {
    let x = seconds * rate;
    let r = x.round();
    if !x.is_finite() || (x - r).abs() > 1e-6 * r.abs().max(1.0) {
        return Err(Error::Config(format!(
            "{what} of {seconds} s is not a whole number of samples at {rate} Hz"
        )));
    }
    if r < min as f64 {
        return Err(Error::Config(format!(
            "{what} must span at least {min} sample(s), got {r}"
        )));
    }
    Ok(r as usize)
}

impl WaveformConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        if !(self.carrier_freq.is_finite() && self.carrier_freq > 0.0) {
            return Err(Error::Config("carrier_freq must be positive".into()));
        }
        if self.subcarrier_count == 0 {
            return Err(Error::Config("subcarrier_count must be at least 1".into()));
        }
        self.training_samples()?;
        self.payload_samples()?;
        self.gap_samples()?;
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    pub fn training_samples(&self) -> Result<usize> {
        whole_samples(self.training_len, self.sample_rate, "training_len", 1)
    }

    pub fn payload_samples(&self) -> Result<usize> {
        whole_samples(self.payload_len, self.sample_rate, "payload_len", 1)
    }

    pub fn gap_samples(&self) -> Result<usize> {
        whole_samples(self.frame_gap, self.sample_rate, "frame_gap", 0)
    }

    pub fn frame_samples(&self) -> Result<usize> {
        Ok(self.training_samples()? + self.payload_samples()? + self.gap_samples()?)
    }
}

fn qpsk(rng: &mut impl Rng) -> Complex64 {
    let bits: u8 = rng.gen();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Complex64::new(
        if bits & 1 == 0 { h } else { -h },
        if bits & 2 == 0 { h } else { -h },
    )
}

/// Frame builder with the training sequence and IFFT plan cached.
struct FrameSource {
    cfg: WaveformConfig,
    training: Vec<Complex64>,
    payload_len: usize,
    gap_len: usize,
    ifft: Arc<dyn Fft<f64>>,
}

impl FrameSource {
    fn new(cfg: &WaveformConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream(cfg.seed, &[TAG_TRAINING]);
        let training = (0..cfg.training_samples()?)
            .map(|_| qpsk(&mut rng))
            .collect();
        let ifft = FftPlanner::new().plan_fft_inverse(cfg.subcarrier_count);
        Ok(Self {
            cfg: cfg.clone(),
            training,
            payload_len: cfg.payload_samples()?,
            gap_len: cfg.gap_samples()?,
            ifft,
        })
    }

    /// Training chips, then cyclic-prefixed OFDM symbols (CP = M/4) carrying
    /// random QPSK subcarriers, truncated to the payload length, then the gap.
    /// Scaled to unit mean power over the whole frame.
    fn frame(&self, index: u64) -> Vec<Complex64> {
        let m = self.cfg.subcarrier_count;
        let cp = m / 4;
        let mut rng = stream(self.cfg.seed, &[TAG_PAYLOAD, index]);
        let mut out = Vec::with_capacity(self.training.len() + self.payload_len + self.gap_len);
        out.extend_from_slice(&self.training);
        let norm = 1.0 / (m as f64).sqrt();
        let mut symbol = vec![Complex64::new(0.0, 0.0); m];
        let payload_end = self.training.len() + self.payload_len;
        while out.len() < payload_end {
            for v in symbol.iter_mut() {
                *v = qpsk(&mut rng);
            }
            self.ifft.process(&mut symbol);
            for v in symbol.iter_mut() {
                *v *= norm;
            }
            let take = |out: &mut Vec<Complex64>, xs: &[Complex64]| {
                let room = payload_end - out.len();
                out.extend_from_slice(&xs[..xs.len().min(room)]);
            };
            take(&mut out, &symbol[m - cp..]);
            take(&mut out, &symbol);
        }
        // Payload to unit power, then one frame-constant gain so the training
        // chips stay identical across frames.
        let t = self.training.len();
        let p = crate::iq::mean_power(&out[t..]);
        if p > 0.0 {
            let g = 1.0 / p.sqrt();
            out[t..].iter_mut().for_each(|v| *v *= g);
        }
        out.resize(payload_end + self.gap_len, Complex64::new(0.0, 0.0));
        let g = (out.len() as f64 / payload_end as f64).sqrt();
        out.iter_mut().for_each(|v| *v *= g);
        out
    }
}

/// One transmit frame: training sequence followed by the OFDM payload.
pub fn generate_waveform(cfg: &WaveformConfig) -> Result<IqBuffer> {
    let src = FrameSource::new(cfg)?;
    Ok(IqBuffer::new(src.frame(0), cfg.sample_rate))
}

/// `len` samples of back-to-back frames. Every frame repeats the training
/// sequence and carries a fresh payload drawn from `(seed, frame index)`.
pub fn transmit_signal(cfg: &WaveformConfig, len: usize) -> Result<Vec<Complex64>> {
    let src = FrameSource::new(cfg)?;
    let mut out = Vec::with_capacity(len);
    let mut index = 0u64;
    while out.len() < len {
        let f = src.frame(index);
        let room = len - out.len();
        out.extend_from_slice(&f[..f.len().min(room)]);
        index += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreathingTarget {
    /// Resting chest position, meters.
    pub position: Vec3,
    /// Peak chest displacement, meters.
    pub amplitude: f64,
    /// Breaths per second.
    pub rate: f64,
    pub phase: f64,
    pub rcs_gain: f64,
}

impl BreathingTarget {
    /// Chest displacement is sinusoidal along the axis pointing at the
    /// transmitter.
    pub fn chest_position(&self, tx: Vec3, t: f64) -> Vec3 {
        let axis = scene::unit(self.position, tx);
        let d = self.amplitude * (2.0 * std::f64::consts::PI * self.rate * t + self.phase).sin();
        scene::add(self.position, scene::scale(axis, d))
    }

    pub fn chest_velocity(&self, tx: Vec3, t: f64) -> Vec3 {
        let axis = scene::unit(self.position, tx);
        let w = 2.0 * std::f64::consts::PI * self.rate;
        scene::scale(axis, self.amplitude * w * (w * t + self.phase).cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub time: f64,
    pub position: Vec3,
}

/// A walking person moving in straight lines at constant speed between
/// waypoints; stationary before the first and after the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interferer {
    pub waypoints: Vec<Waypoint>,
    pub rcs_gain: f64,
}

impl Interferer {
    pub fn validate(&self) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(Error::Config("interferer needs at least one waypoint".into()));
        }
        if !(self.rcs_gain >= 0.0) {
            return Err(Error::Config("interferer rcs_gain must be >= 0".into()));
        }
        for w in self.waypoints.windows(2) {
            let dt = w[1].time - w[0].time;
            if !(dt > 0.0) {
                return Err(Error::Config(
                    "interferer waypoint times must be strictly increasing".into(),
                ));
            }
            let speed = scene::distance(w[0].position, w[1].position) / dt;
            if speed > MAX_WALKING_SPEED + 1e-9 {
                return Err(Error::Config(format!(
                    "interferer speed {speed:.2} m/s exceeds {MAX_WALKING_SPEED} m/s"
                )));
            }
        }
        Ok(())
    }

    fn segment(&self, t: f64) -> Option<(Waypoint, Waypoint)> {
        let i = self.waypoints.partition_point(|w| w.time <= t);
        if i == 0 || i == self.waypoints.len() {
            None
        } else {
            Some((self.waypoints[i - 1], self.waypoints[i]))
        }
    }

    pub fn position_at(&self, t: f64) -> Vec3 {
        match self.segment(t) {
            Some((a, b)) => {
                let f = (t - a.time) / (b.time - a.time);
                scene::add(a.position, scene::scale(scene::sub(b.position, a.position), f))
            }
            None if t < self.waypoints[0].time => self.waypoints[0].position,
            None => self.waypoints[self.waypoints.len() - 1].position,
        }
    }

    pub fn velocity_at(&self, t: f64) -> Vec3 {
        match self.segment(t) {
            Some((a, b)) => scene::scale(scene::sub(b.position, a.position), 1.0 / (b.time - a.time)),
            None => [0.0; 3],
        }
    }
}

/// Static scattering path in a surveillance channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClutterPath {
    pub attenuation: Complex64,
    /// Seconds.
    pub delay: f64,
}

/// Complex white noise power per channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePower {
    pub reference: f64,
    pub surveillance: [f64; 2],
}

impl Default for NoisePower {
    fn default() -> Self {
        Self {
            reference: 1e-4,
            surveillance: [DEFAULT_SURVEILLANCE_NOISE; 2],
        }
    }
}

/// Surveillance noise power of the default scenarios (reference channel at
/// unit power).
pub const DEFAULT_SURVEILLANCE_NOISE: f64 = 1e-2;
/// Chest `rcs_gain` of the default scenarios.
pub const DEFAULT_TARGET_RCS: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub waveform: WaveformConfig,
    pub tx_pos: Vec3,
    pub ref_rx_pos: Vec3,
    pub sur_rx_pos: [Vec3; 2],
    pub target: Option<BreathingTarget>,
    pub interferer: Option<Interferer>,
    /// Static clutter per surveillance channel.
    pub clutter: [Vec<ClutterPath>; 2],
    pub ref_attenuation: Complex64,
    /// Seconds.
    pub ref_delay: f64,
    /// Carrier frequency offset, Hz.
    pub cfo: f64,
    pub noise_power: NoisePower,
    /// Seconds.
    pub duration: f64,
}

/// Sample rate of the desk-scale default scenario: the lowest rate at which
/// both the 16 us training sequence and the 200 us payload are whole samples.
pub const DESK_SAMPLE_RATE: f64 = 125e3;

impl Default for Scenario {
    /// Ten seconds of a person breathing 3 times per 10 s, 2 m from the
    /// transmitter and 0.3 m from the closest receiver, with three static
    /// clutter paths per channel and no interferer.
    fn default() -> Self {
        let layout = DeskLayout::default();
        let waveform = WaveformConfig {
            sample_rate: DESK_SAMPLE_RATE,
            ..WaveformConfig::default()
        };
        let clutter = |k: f64| {
            vec![
                ClutterPath { attenuation: Complex64::from_polar(0.3, 0.4 + k), delay: 6e-9 },
                ClutterPath { attenuation: Complex64::from_polar(0.1, 2.1 + k), delay: 21e-9 },
                ClutterPath { attenuation: Complex64::from_polar(0.05, -1.3 + k), delay: 37e-9 },
            ]
        };
        Self {
            waveform,
            tx_pos: layout.tx,
            ref_rx_pos: layout.ref_rx,
            sur_rx_pos: layout.sur_rx,
            target: Some(BreathingTarget {
                position: layout.target,
                amplitude: 5e-3,
                rate: 0.3,
                phase: 0.0,
                rcs_gain: DEFAULT_TARGET_RCS,
            }),
            interferer: None,
            clutter: [clutter(0.0), clutter(1.0)],
            ref_attenuation: Complex64::new(1.0, 0.0),
            ref_delay: scene::distance(layout.tx, layout.ref_rx) / SPEED_OF_LIGHT,
            cfo: 0.0,
            noise_power: NoisePower::default(),
            duration: 10.0,
        }
    }
}

impl Scenario {
    /// A silent channel: direct path in the reference channel only.
    pub fn empty(waveform: WaveformConfig, duration: f64) -> Self {
        Self {
            waveform,
            target: None,
            interferer: None,
            clutter: [Vec::new(), Vec::new()],
            ref_delay: 0.0,
            noise_power: NoisePower {
                reference: 0.0,
                surveillance: [0.0; 2],
            },
            duration,
            ..Self::default()
        }
    }

    pub fn sample_count(&self) -> usize {
        (self.duration * self.waveform.sample_rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.waveform.validate()?;
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::Config("duration must be positive".into()));
        }
        let rxs = [self.ref_rx_pos, self.sur_rx_pos[0], self.sur_rx_pos[1]];
        if rxs.iter().any(|&r| scene::distance(r, self.tx_pos) < 1e-3) {
            return Err(Error::Geometry("a receiver coincides with the transmitter".into()));
        }
        if let Some(t) = &self.target {
            if !(t.amplitude >= 0.0) || !(t.rcs_gain >= 0.0) {
                return Err(Error::Config("target amplitude and rcs_gain must be >= 0".into()));
            }
            if !(t.rate > 0.0 && t.rate < self.waveform.sample_rate / 2.0) {
                return Err(Error::Config(format!("breathing rate {} Hz out of range", t.rate)));
            }
            for p in [self.tx_pos, self.sur_rx_pos[0], self.sur_rx_pos[1]] {
                if scene::distance(p, t.position) <= t.amplitude + 1e-3 {
                    return Err(Error::Geometry(
                        "breathing target colocated with the transmitter or a receiver".into(),
                    ));
                }
            }
        }
        if let Some(i) = &self.interferer {
            i.validate()?;
            for w in &i.waypoints {
                for p in [self.tx_pos, self.sur_rx_pos[0], self.sur_rx_pos[1]] {
                    if scene::distance(p, w.position) < 1e-3 {
                        return Err(Error::Geometry(
                            "interferer waypoint on the transmitter or a receiver".into(),
                        ));
                    }
                }
            }
        }
        for c in self.clutter.iter().flatten() {
            if !(c.delay >= 0.0 && c.delay < self.duration) || !c.attenuation.norm().is_finite() {
                return Err(Error::Config(format!("invalid clutter path {c:?}")));
            }
        }
        let np = &self.noise_power;
        if [np.reference, np.surveillance[0], np.surveillance[1]]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return Err(Error::Config("noise power must be >= 0".into()));
        }
        if !(self.ref_delay >= 0.0) || !self.cfo.is_finite() {
            return Err(Error::Config("invalid ref_delay or cfo".into()));
        }
        Ok(())
    }

    /// SHA-256 of the scenario's JSON encoding, hex.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Output of [`synthesize_channels`].
#[derive(Debug, Clone, PartialEq)]
pub struct Channels {
    pub reference: IqBuffer,
    pub surveillance: [IqBuffer; 2],
}

/// Linear interpolation of `s` at fractional index `x`; zero outside.
#[inline]
fn interp(s: &[Complex64], x: f64) -> Complex64 {
    let i = x.floor();
    let mu = x - i;
    let at = |k: f64| {
        if k < 0.0 || k >= s.len() as f64 {
            Complex64::new(0.0, 0.0)
        } else {
            s[k as usize]
        }
    };
    at(i) * (1.0 - mu) + at(i + 1.0) * mu
}

/// `exp(-j 2 pi cycles)` with the integer part of `cycles` removed first.
#[inline]
fn phasor(cycles: f64) -> Complex64 {
    let frac = cycles - cycles.floor();
    let (s, c) = (-2.0 * std::f64::consts::PI * frac).sin_cos();
    Complex64::new(c, s)
}

/// Which parts of a channel to render. The reference channel has only the
/// direct path, noise and frequency offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Components {
    pub target: bool,
    pub interferer: bool,
    pub clutter: bool,
    pub noise: bool,
    pub cfo: bool,
}

impl Components {
    pub const ALL: Self = Self {
        target: true,
        interferer: true,
        clutter: true,
        noise: true,
        cfo: true,
    };
    pub const NONE: Self = Self {
        target: false,
        interferer: false,
        clutter: false,
        noise: false,
        cfo: false,
    };
}

/// Renders channels of one scenario, sharing the transmit signal.
pub struct Synthesizer<'a> {
    scn: &'a Scenario,
    s: Vec<Complex64>,
    fs: f64,
    wavelength: f64,
    /// Static clutter of each surveillance channel folded into one FIR on
    /// the transmit signal: `(offset, weight)` pairs.
    clutter_fir: [Vec<(usize, Complex64)>; 2],
    /// Unit vector from the target toward the transmitter.
    chest_axis: Vec3,
}

/// Linear interpolation makes a path delayed by `x` samples contribute
/// `(1 - mu)` at offset `floor(x)` and `mu` at the next offset.
fn clutter_fir(paths: &[ClutterPath], fs: f64) -> Vec<(usize, Complex64)> {
    let mut taps: Vec<(usize, Complex64)> = Vec::new();
    let mut add = |off: usize, w: Complex64| match taps.iter_mut().find(|t| t.0 == off) {
        Some(t) => t.1 += w,
        None => taps.push((off, w)),
    };
    for c in paths {
        let x = c.delay * fs;
        let i = x.floor();
        let mu = x - i;
        add(i as usize, c.attenuation * (1.0 - mu));
        if mu > 0.0 {
            add(i as usize + 1, c.attenuation * mu);
        }
    }
    taps
}

impl<'a> Synthesizer<'a> {
    pub fn new(scn: &'a Scenario) -> Result<Self> {
        scn.validate()?;
        let fs = scn.waveform.sample_rate;
        let chest_axis = scn
            .target
            .as_ref()
            .map(|t| scene::unit(t.position, scn.tx_pos))
            .unwrap_or([0.0; 3]);
        Ok(Self {
            scn,
            s: transmit_signal(&scn.waveform, scn.sample_count())?,
            fs,
            wavelength: scn.waveform.wavelength(),
            clutter_fir: [clutter_fir(&scn.clutter[0], fs), clutter_fir(&scn.clutter[1], fs)],
            chest_axis,
        })
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    #[inline]
    fn moving_echo(&self, rx: Vec3, p: Vec3, rcs: f64, n: usize) -> Complex64 {
        let tx = self.scn.tx_pos;
        let r1 = scene::distance(tx, p);
        let r2 = scene::distance(p, rx);
        let len = r1 + r2;
        let amp = rcs / (r1.max(NEAR_FIELD_FLOOR) * r2.max(NEAR_FIELD_FLOOR));
        let delayed = interp(&self.s, n as f64 - len / SPEED_OF_LIGHT * self.fs);
        delayed * phasor(len / self.wavelength) * amp
    }

    /// Noise-free sample `n` of `channel` (0 = reference, 1/2 = surveillance).
    #[inline]
    fn clean(&self, channel: usize, n: usize, parts: Components) -> Complex64 {
        let scn = self.scn;
        if channel == 0 {
            return scn.ref_attenuation * interp(&self.s, n as f64 - scn.ref_delay * self.fs);
        }
        let rx = scn.sur_rx_pos[channel - 1];
        let t = n as f64 / self.fs;
        let mut acc = Complex64::new(0.0, 0.0);
        if parts.target {
            if let Some(tg) = &scn.target {
                let d = tg.amplitude * (2.0 * std::f64::consts::PI * tg.rate * t + tg.phase).sin();
                let p = scene::add(tg.position, scene::scale(self.chest_axis, d));
                acc += self.moving_echo(rx, p, tg.rcs_gain, n);
            }
        }
        if parts.interferer {
            if let Some(it) = &scn.interferer {
                acc += self.moving_echo(rx, it.position_at(t), it.rcs_gain, n);
            }
        }
        if parts.clutter {
            for &(off, w) in &self.clutter_fir[channel - 1] {
                if off <= n {
                    acc += w * self.s[n - off];
                }
            }
        }
        acc
    }

    fn render_chunk(&self, channel: usize, chunk: usize, parts: Components, out: &mut [Complex64]) {
        let scn = self.scn;
        let sigma2 = match channel {
            0 => scn.noise_power.reference,
            c => scn.noise_power.surveillance[c - 1],
        };
        let noise = parts.noise && sigma2 > 0.0;
        let sd = (sigma2 / 2.0).sqrt();
        let mut rng = stream(scn.waveform.seed, &[TAG_NOISE, channel as u64, chunk as u64]);
        let start = chunk * NOISE_CHUNK;
        let cfo_step = scn.cfo / self.fs;
        for (k, slot) in out.iter_mut().enumerate() {
            let n = start + k;
            let mut v = self.clean(channel, n, parts);
            if noise {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                v += Complex64::new(re * sd, im * sd);
            }
            if parts.cfo && scn.cfo != 0.0 {
                v *= phasor(cfo_step * n as f64);
            }
            *slot = v;
        }
    }

    /// Renders the selected components of one channel.
    pub fn render(&self, channel: usize, parts: Components) -> IqBuffer {
        assert!(channel < 3, "channel index {channel} out of range");
        let mut out = vec![Complex64::new(0.0, 0.0); self.s.len()];
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            out.par_chunks_mut(NOISE_CHUNK)
                .enumerate()
                .for_each(|(c, chunk)| self.render_chunk(channel, c, parts, chunk));
        }
        #[cfg(not(feature = "parallel"))]
        out.chunks_mut(NOISE_CHUNK)
            .enumerate()
            .for_each(|(c, chunk)| self.render_chunk(channel, c, parts, chunk));
        IqBuffer::new(out, self.fs)
    }

    /// Multiplies `x` in place by the scenario's frequency-offset phasor.
    pub fn apply_cfo(&self, x: &mut [Complex64]) {
        if self.scn.cfo == 0.0 {
            return;
        }
        let step = self.scn.cfo / self.fs;
        for (n, v) in x.iter_mut().enumerate() {
            *v *= phasor(step * n as f64);
        }
    }
}

/// Samples the reference and both surveillance channels of `scn`.
///
/// The reference channel carries only the direct path. The carrier frequency
/// offset rotates every output sample, noise included, by the same
/// `exp(-j 2 pi cfo n Ts)`.
pub fn synthesize_channels(scn: &Scenario) -> Result<Channels> {
    let r = Synthesizer::new(scn)?;
    Ok(Channels {
        reference: r.render(0, Components::ALL),
        surveillance: [r.render(1, Components::ALL), r.render(2, Components::ALL)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(duration: f64) -> Scenario {
        Scenario::empty(
            WaveformConfig {
                sample_rate: DESK_SAMPLE_RATE,
                seed: 11,
                ..WaveformConfig::default()
            },
            duration,
        )
    }

    #[test]
    fn default_frame_is_2160_samples() {
        let w = generate_waveform(&WaveformConfig::default()).unwrap();
        assert_eq!(w.len(), 2160);
        assert_eq!(WaveformConfig::default().training_samples().unwrap(), 160);
        assert_eq!(WaveformConfig::default().payload_samples().unwrap(), 2000);
    }

    #[test]
    fn frame_has_unit_power() {
        for seed in 0..5 {
            let cfg = WaveformConfig { seed, ..WaveformConfig::default() };
            let p = generate_waveform(&cfg).unwrap().mean_power();
            assert!((p - 1.0).abs() < 1e-6, "{p}");
        }
        let cfg = WaveformConfig { frame_gap: 8e-6, ..WaveformConfig::default() };
        assert!((generate_waveform(&cfg).unwrap().mean_power() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn waveform_is_deterministic_per_seed() {
        let cfg = WaveformConfig { seed: 99, ..WaveformConfig::default() };
        assert_eq!(generate_waveform(&cfg).unwrap(), generate_waveform(&cfg).unwrap());
        let other = WaveformConfig { seed: 100, ..cfg.clone() };
        assert_ne!(generate_waveform(&cfg).unwrap(), generate_waveform(&other).unwrap());
    }

    #[test]
    fn training_sequence_repeats_across_frames() {
        let cfg = WaveformConfig::default();
        let s = transmit_signal(&cfg, 2 * 2160).unwrap();
        assert_eq!(&s[..160], &s[2160..2320]);
        assert_ne!(&s[160..2160], &s[2320..4320]);
    }

    #[test]
    fn fractional_sample_durations_rejected() {
        let cfg = WaveformConfig { sample_rate: 100e3, ..WaveformConfig::default() };
        assert!(matches!(generate_waveform(&cfg), Err(Error::Config(_))));
        let cfg = WaveformConfig { sample_rate: 0.0, ..WaveformConfig::default() };
        assert!(generate_waveform(&cfg).is_err());
    }

    #[test]
    fn identity_channel_reproduces_waveform() {
        let scn = quiet(0.01);
        let ch = synthesize_channels(&scn).unwrap();
        let s = transmit_signal(&scn.waveform, scn.sample_count()).unwrap();
        assert_eq!(ch.reference.samples, s);
        assert!(ch.surveillance.iter().all(|b| b.samples.iter().all(|v| v.norm() == 0.0)));
    }

    #[test]
    fn static_path_preserves_power() {
        let mut scn = quiet(0.05);
        // two whole samples at 125 kHz
        scn.clutter[0] = vec![ClutterPath { attenuation: Complex64::new(0.0, 1.0), delay: 16e-6 }];
        let ch = synthesize_channels(&scn).unwrap();
        let s = transmit_signal(&scn.waveform, scn.sample_count()).unwrap();
        let p_out = crate::iq::mean_power(&ch.surveillance[0].samples[2..]);
        let p_in = crate::iq::mean_power(&s[..s.len() - 2]);
        assert!((p_out - p_in).abs() / p_in < 1e-6);
    }

    #[test]
    fn cfo_is_a_common_rotation() {
        let mut scn = Scenario::default();
        scn.duration = 0.2;
        let base = synthesize_channels(&scn).unwrap();
        scn.cfo = 1234.5;
        let rot = synthesize_channels(&scn).unwrap();
        let fs = scn.waveform.sample_rate;
        let pairs = std::iter::once((&base.reference, &rot.reference))
            .chain(base.surveillance.iter().zip(rot.surveillance.iter()));
        for (a, b) in pairs {
            for (n, (x, y)) in a.samples.iter().zip(&b.samples).enumerate() {
                let expect = x * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * 1234.5 * n as f64 / fs);
                assert!((expect - y).norm() <= 1e-9 * x.norm().max(1e-3));
            }
        }
    }

    #[test]
    fn synthesis_is_deterministic() {
        let mut scn = Scenario::default();
        scn.duration = 0.3;
        assert_eq!(synthesize_channels(&scn).unwrap(), synthesize_channels(&scn).unwrap());
    }

    #[test]
    fn colocated_target_is_a_geometry_error() {
        let mut scn = Scenario::default();
        scn.target.as_mut().unwrap().position = scn.sur_rx_pos[1];
        assert!(matches!(synthesize_channels(&scn), Err(Error::Geometry(_))));
    }

    #[test]
    fn interferer_validation() {
        let w = |t: f64, x: f64| Waypoint { time: t, position: [x, 1.0, 1.0] };
        let fast = Interferer { waypoints: vec![w(0.0, 0.0), w(1.0, 4.0)], rcs_gain: 1.0 };
        assert!(fast.validate().is_err());
        let backwards = Interferer { waypoints: vec![w(1.0, 0.0), w(1.0, 1.0)], rcs_gain: 1.0 };
        assert!(backwards.validate().is_err());
        let ok = Interferer { waypoints: vec![w(0.0, 0.0), w(2.0, 2.0)], rcs_gain: 1.0 };
        ok.validate().unwrap();
        assert_eq!(ok.position_at(1.0), [1.0, 1.0, 1.0]);
        assert_eq!(ok.position_at(-1.0), [0.0, 1.0, 1.0]);
        assert_eq!(ok.position_at(5.0), [2.0, 1.0, 1.0]);
        assert_eq!(ok.velocity_at(0.5), [1.0, 0.0, 0.0]);
    }

    /// Phase slope of a constant-velocity echo against the analytic range rate.
    #[test]
    fn echo_phase_tracks_range_rate() {
        let mut scn = quiet(0.5);
        let start = [3.0, 1.5, 1.0];
        let v = [-0.8, -0.3, 0.0];
        scn.interferer = Some(Interferer {
            waypoints: vec![
                Waypoint { time: 0.0, position: start },
                Waypoint { time: 1.0, position: scene::add(start, v) },
            ],
            rcs_gain: 1.0,
        });
        let ch = synthesize_channels(&scn).unwrap();
        let s = transmit_signal(&scn.waveform, scn.sample_count()).unwrap();
        let fs = scn.waveform.sample_rate;
        let lambda = scn.waveform.wavelength();
        let rx = scn.sur_rx_pos[0];
        let it = scn.interferer.as_ref().unwrap();
        let demod = |n: usize| {
            let p = it.position_at(n as f64 / fs);
            let l = scene::bistatic_path_length(scn.tx_pos, p, rx);
            let d = interp(&s, n as f64 - l / SPEED_OF_LIGHT * fs);
            ch.surveillance[0].samples[n] * d.conj()
        };
        let mut checked = 0;
        for n in (1000..scn.sample_count() - 1000).step_by(997) {
            let (a, b) = (demod(n), demod(n + 1));
            if a.norm() < 1e-3 || b.norm() < 1e-3 {
                continue;
            }
            let slope = (b * a.conj()).arg() * fs / (2.0 * std::f64::consts::PI);
            let p = it.position_at(n as f64 / fs);
            let expect = scene::bistatic_doppler(scn.tx_pos, p, rx, v, lambda);
            assert!((slope - expect).abs() <= 0.01 * expect.abs(), "{slope} vs {expect}");
            checked += 1;
        }
        assert!(checked > 30);
    }

    #[test]
    fn breathing_doppler_peak_matches_chest_speed() {
        // 5 mm at 0.3 Hz: A * 2 pi f / lambda ~ 1.9 Hz per leg.
        let scn = Scenario::default();
        let tg = scn.target.as_ref().unwrap();
        let lambda = scn.waveform.wavelength();
        let one_way = tg.amplitude * 2.0 * std::f64::consts::PI * tg.rate / lambda;
        assert!((one_way - 1.9).abs() < 0.02, "{one_way}");
        let peak = (0..1000)
            .map(|k| {
                let t = k as f64 * 0.01;
                let p = tg.chest_position(scn.tx_pos, t);
                let v = tg.chest_velocity(scn.tx_pos, t);
                scene::bistatic_doppler(scn.tx_pos, p, scn.sur_rx_pos[0], v, lambda).abs()
            })
            .fold(0.0, f64::max);
        assert!(peak > one_way && peak <= 2.0 * one_way + 1e-9, "{peak}");
    }
}
