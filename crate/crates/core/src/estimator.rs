//! Deterministic respiration presence detection and breath counting from
//! time-Doppler maps, plus the accuracy metric and the logistic
//! accuracy-versus-sensing-time fit.
//!
//! The estimator works in slow time (one value per CIT). For every CIT it
//! keeps the bins within `band` of 0 Hz and records their coherent sum and
//! their power-weighted mean Doppler. Chest motion at millimeter wavelengths
//! moves the carrier phase by several radians per breath, so the coherent
//! sum is a wideband phase-modulated series whose strongest lines are
//! harmonics of the breathing rate. The mean Doppler instead follows the chest
//! velocity, whose fundamental is the breathing rate itself; the spectral
//! decisions below are made on that series.
//!
//! A walking person crossing the low-Doppler band swamps it for a few CITs.
//! Within an analysis window, CITs whose in-band power exceeds `gate` times
//! the window median are treated as interference and their Doppler is zeroed.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::caf::DopplerMap;
use crate::error::{Error, Result};

/// Per-CIT slow-time series extracted from one surveillance channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowTimeTrack {
    /// Coherent sum of the CAF values in the low-Doppler band.
    pub samples: Vec<Complex64>,
    /// Power-weighted mean Doppler of the same bins, Hz.
    pub doppler: Vec<f64>,
    /// Total power of the same bins.
    pub power: Vec<f64>,
    /// Samples per second (`1 / cit`).
    pub rate: f64,
}

impl SlowTimeTrack {
    pub fn len(&self) -> usize {
        self.doppler.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doppler.is_empty()
    }

    /// Multiplies every CAF value by `c`; the Doppler centroid is unaffected.
    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            samples: self.samples.iter().map(|v| v * c).collect(),
            doppler: self.doppler.clone(),
            power: self.power.iter().map(|p| p * c.norm_sqr()).collect(),
            rate: self.rate,
        }
    }
}

/// Slow-time series of the bins within `band` Hz of zero Doppler. The 0 Hz
/// bin is skipped when the map was computed without clutter cancellation.
pub fn extract_track(map: &DopplerMap, band: f64) -> Result<SlowTimeTrack> {
    let spacing = map.bin_spacing();
    if !(band >= spacing) || map.cols < 2 {
        return Err(Error::Config(format!(
            "band {band} Hz is narrower than one Doppler bin ({spacing} Hz)"
        )));
    }
    let zero = map.zero_bin();
    let bins: Vec<usize> = (0..map.cols)
        .filter(|&c| map.doppler_axis[c].abs() <= band * (1.0 + 1e-12))
        .filter(|&c| map.clutter_cancelled || c != zero)
        .collect();
    if bins.is_empty() {
        return Err(Error::Config("empty Doppler band".into()));
    }
    let mut samples = Vec::with_capacity(map.rows);
    let mut doppler = Vec::with_capacity(map.rows);
    let mut powers = Vec::with_capacity(map.rows);
    for r in 0..map.rows {
        let row = map.row(r);
        let mut sum = Complex64::new(0.0, 0.0);
        let (mut moment, mut power) = (0.0, 0.0);
        for &c in &bins {
            sum += row[c];
            let p = row[c].norm_sqr();
            moment += p * map.doppler_axis[c];
            power += p;
        }
        samples.push(sum);
        doppler.push(if power > 0.0 { moment / power } else { 0.0 });
        powers.push(power);
    }
    Ok(SlowTimeTrack {
        samples,
        doppler,
        power: powers,
        rate: spacing,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Half-width of the low-Doppler band fed to the slow-time track, Hz.
    pub band: f64,
    /// Where the breathing line is searched for presence detection, Hz.
    pub presence_band: (f64, f64),
    /// Where the spectral floor (median) is measured, Hz.
    pub floor_band: (f64, f64),
    /// Where the breathing peak is searched for counting, Hz.
    pub count_band: (f64, f64),
    /// Interference gate relative to the median in-band power; `None`
    /// disables gating.
    pub gate: Option<f64>,
    /// Presence thresholds on the peak-to-floor score, one per entry of
    /// [`DETECTION_WINDOWS`].
    pub thresholds: [f64; 4],
    /// Minimum peak-to-floor ratio accepted as a breathing line when counting.
    pub count_floor_ratio: f64,
    /// Zero-padded FFT length for slow-time spectra.
    pub fft_len: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            band: 15.0,
            presence_band: (0.1, 1.0),
            floor_band: (0.1, 5.0),
            count_band: (0.15, 0.7),
            gate: Some(4.0),
            thresholds: DEFAULT_PRESENCE_THRESHOLDS,
            count_floor_ratio: 2.5,
            fft_len: 1024,
        }
    }
}

impl EstimatorConfig {
    /// Threshold for the detection window closest to `window`.
    pub fn threshold_for(&self, window: f64) -> f64 {
        let i = (0..DETECTION_WINDOWS.len())
            .min_by(|&a, &b| {
                (DETECTION_WINDOWS[a] - window).abs().total_cmp(&(DETECTION_WINDOWS[b] - window).abs())
            })
            .unwrap();
        self.thresholds[i]
    }
}

/// Sensing windows of the detection task, seconds.
pub const DETECTION_WINDOWS: [f64; 4] = [2.5, 5.0, 7.0, 10.0];

/// Presence thresholds per detection window, calibrated on a held-out
/// synthetic detection set (`breathradar eval` reports the calibration).
pub const DEFAULT_PRESENCE_THRESHOLDS: [f64; 4] = [7.73, 10.16, 11.06, 13.09];

/// One-sided spectrum of a real slow-time series after removing its
/// least-squares line and applying a Hann window.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowTimeSpectrum {
    pub freqs: Vec<f64>,
    /// Power, or normalized amplitude for [`averaged_spectrum`].
    pub power: Vec<f64>,
}

impl SlowTimeSpectrum {
    fn indices(&self, band: (f64, f64)) -> impl Iterator<Item = usize> + '_ {
        self.freqs
            .iter()
            .enumerate()
            .filter(move |(_, &f)| f >= band.0 && f <= band.1)
            .map(|(i, _)| i)
    }
}

fn detrend(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let tm = (n - 1.0) / 2.0;
    let xm = x.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let d = i as f64 - tm;
        sxy += d * (v - xm);
        sxx += d * d;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    x.iter()
        .enumerate()
        .map(|(i, v)| v - xm - slope * (i as f64 - tm))
        .collect()
}

fn spectrum_with(fft: &Arc<dyn Fft<f64>>, x: &[f64], rate: f64) -> SlowTimeSpectrum {
    let len = fft.len();
    let n = x.len();
    let d = detrend(x);
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for (i, v) in d.iter().enumerate() {
        let w = if n > 1 {
            0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()
        } else {
            1.0
        };
        buf[i] = Complex64::new(v * w, 0.0);
    }
    fft.process(&mut buf);
    let half = len / 2 + 1;
    SlowTimeSpectrum {
        freqs: (0..half).map(|k| k as f64 * rate / len as f64).collect(),
        power: buf[..half].iter().map(|v| v.norm_sqr()).collect(),
    }
}

pub fn slow_time_spectrum(x: &[f64], rate: f64, fft_len: usize) -> SlowTimeSpectrum {
    let len = fft_len.max(x.len()).next_power_of_two();
    let fft = FftPlanner::new().plan_fft_forward(len);
    spectrum_with(&fft, x, rate)
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Doppler of the last `n` CITs with gated CITs zeroed.
pub fn gated(track: &SlowTimeTrack, n: usize, gate: Option<f64>) -> Vec<f64> {
    let start = track.len() - n;
    let d = &track.doppler[start..];
    let Some(g) = gate else {
        return d.to_vec();
    };
    let p = &track.power[start..];
    let limit = g * median(p.to_vec());
    d.iter().zip(p).map(|(&d, &p)| if p > limit { 0.0 } else { d }).collect()
}

fn window_spectra(tracks: &[SlowTimeTrack; 2], window: f64, cfg: &EstimatorConfig) -> Result<Vec<SlowTimeSpectrum>> {
    let rate = tracks[0].rate;
    if !(window > 0.0) || !(rate > 0.0) {
        return Err(Error::Input("window and track rate must be positive".into()));
    }
    let n = (window * rate).round() as usize;
    if n < 4 {
        return Err(Error::Input(format!("window of {window} s holds fewer than 4 slow-time samples")));
    }
    let len = cfg.fft_len.max(n).next_power_of_two();
    let fft = FftPlanner::new().plan_fft_forward(len);
    tracks
        .iter()
        .map(|t| {
            if t.len() < n || t.power.len() != t.len() {
                return Err(Error::Input(format!(
                    "track of {} samples is shorter than the {window} s window ({n} samples)",
                    t.len()
                )));
            }
            if (t.rate - rate).abs() > 1e-9 * rate {
                return Err(Error::Input("tracks differ in slow-time rate".into()));
            }
            Ok(spectrum_with(&fft, &gated(t, n, cfg.gate), rate))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Presence {
    pub present: bool,
    /// Largest peak-to-floor ratio over both channels.
    pub score: f64,
}

/// Peak power in the breathing band over the median power of the floor band,
/// maximized over channels; zero for a silent track.
pub fn presence_score(tracks: &[SlowTimeTrack; 2], window: f64, cfg: &EstimatorConfig) -> Result<f64> {
    let spectra = window_spectra(tracks, window, cfg)?;
    Ok(spectra
        .iter()
        .map(|s| {
            let peak = s.indices(cfg.presence_band).map(|i| s.power[i]).fold(0.0, f64::max);
            let floor = median(s.indices(cfg.floor_band).map(|i| s.power[i]).collect());
            if floor > 0.0 {
                peak / floor
            } else if peak > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max))
}

/// Respiration present in the last `window` seconds of the tracks.
pub fn detect_presence(tracks: &[SlowTimeTrack; 2], window: f64, cfg: &EstimatorConfig) -> Result<Presence> {
    let score = presence_score(tracks, window, cfg)?;
    Ok(Presence {
        present: score > cfg.threshold_for(window),
        score,
    })
}

/// Channel-averaged slow-time amplitude spectrum of the last `window`
/// seconds: each channel is normalized by its mean over the floor band
/// before averaging. Silent channels are skipped; `None` when all are silent.
pub fn averaged_spectrum(
    tracks: &[SlowTimeTrack; 2],
    window: f64,
    cfg: &EstimatorConfig,
) -> Result<Option<SlowTimeSpectrum>> {
    let spectra = window_spectra(tracks, window, cfg)?;
    let bins = spectra[0].freqs.len();
    let mut avg = vec![0.0; bins];
    let mut used = 0;
    for s in &spectra {
        let amp: Vec<f64> = s.power.iter().map(|p| p.sqrt()).collect();
        let idx: Vec<usize> = s.indices(cfg.floor_band).collect();
        let mean = idx.iter().map(|&i| amp[i]).sum::<f64>() / idx.len().max(1) as f64;
        if mean > 0.0 {
            for (a, v) in avg.iter_mut().zip(&amp) {
                *a += v / mean;
            }
            used += 1;
        }
    }
    if used == 0 {
        return Ok(None);
    }
    avg.iter_mut().for_each(|a| *a /= used as f64);
    Ok(Some(SlowTimeSpectrum {
        freqs: spectra[0].freqs.clone(),
        power: avg,
    }))
}

/// Breathing frequency of the last `window` seconds, Hz: the largest peak of
/// [`averaged_spectrum`] in the counting band, refined by parabolic
/// interpolation.
pub fn breathing_frequency(tracks: &[SlowTimeTrack; 2], window: f64, cfg: &EstimatorConfig) -> Result<f64> {
    let Some(s) = averaged_spectrum(tracks, window, cfg)? else {
        return Err(Error::NoRespiration { ratio: 0.0 });
    };
    let avg = &s.power;
    let bins = avg.len();
    let floor = median(s.indices(cfg.floor_band).map(|i| avg[i]).collect());
    let k = s
        .indices(cfg.count_band)
        .max_by(|&a, &b| avg[a].total_cmp(&avg[b]))
        .ok_or_else(|| Error::Config("counting band holds no spectral bins".into()))?;
    let ratio = if floor > 0.0 { avg[k] / floor } else { f64::INFINITY };
    if !(ratio >= cfg.count_floor_ratio) {
        return Err(Error::NoRespiration { ratio });
    }
    let delta = if k > 0 && k + 1 < bins {
        let (a, b, c) = (avg[k - 1], avg[k], avg[k + 1]);
        let den = a - 2.0 * b + c;
        if den < 0.0 {
            (0.5 * (a - c) / den).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    } else {
        0.0
    };
    let df = s.freqs[1] - s.freqs[0];
    Ok((k as f64 + delta) * df)
}

/// Breaths in `window` seconds: the breathing frequency times the window,
/// rounded half away from zero.
pub fn count_respirations(tracks: &[SlowTimeTrack; 2], window: f64, cfg: &EstimatorConfig) -> Result<u32> {
    let f = breathing_frequency(tracks, window, cfg)?;
    Ok((f * window).round().max(0.0) as u32)
}

/// Fraction of positions where `pred` equals `truth`.
pub fn accuracy<T: PartialEq>(pred: &[T], truth: &[T]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Input(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Input("accuracy of an empty label set".into()));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Threshold maximizing accuracy of `score > threshold` on a labeled set.
/// Candidates are midpoints between consecutive distinct scores; among equally
/// accurate candidates the middle one is returned.
pub fn calibrate_threshold(positive: &[f64], negative: &[f64]) -> f64 {
    let mut all: Vec<f64> = positive.iter().chain(negative).copied().filter(|v| v.is_finite()).collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    if all.is_empty() {
        return 0.0;
    }
    let mut cands = vec![all[0] - 1.0];
    cands.extend(all.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    cands.push(all[all.len() - 1] + 1.0);
    let correct = |th: f64| {
        positive.iter().filter(|&&s| s > th).count() + negative.iter().filter(|&&s| s <= th).count()
    };
    let scores: Vec<usize> = cands.iter().map(|&c| correct(c)).collect();
    let best = *scores.iter().max().unwrap();
    let winners: Vec<f64> = cands
        .iter()
        .zip(&scores)
        .filter(|(_, &s)| s == best)
        .map(|(&c, _)| c)
        .collect();
    winners[winners.len() / 2]
}

/// `a(t) = l / (1 + exp(-k (t - t0)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub l: f64,
    pub k: f64,
    pub t0: f64,
    pub rss: f64,
    /// Set when every accuracy is identical: the curve is the flat asymptote
    /// with `k` pinned to its lower bound.
    pub degenerate: bool,
}

impl LogisticFit {
    pub fn eval(&self, t: f64) -> f64 {
        logistic(self.l, self.k, self.t0, t)
    }
}

fn logistic(l: f64, k: f64, t0: f64, t: f64) -> f64 {
    l / (1.0 + (-k * (t - t0)).exp())
}

pub const LOGISTIC_K_BOUNDS: (f64, f64) = (1e-3, 50.0);

fn rss(points: &[(f64, f64)], l: f64, k: f64, t0: f64) -> f64 {
    points.iter().map(|&(t, a)| (logistic(l, k, t0, t) - a).powi(2)).sum()
}

/// Nelder-Mead on a box; points are projected onto the box before evaluation.
fn nelder_mead(f: &dyn Fn(&[f64; 3]) -> f64, start: [f64; 3], step: [f64; 3], iters: usize) -> ([f64; 3], f64) {
    let mut simplex: Vec<([f64; 3], f64)> = (0..4)
        .map(|i| {
            let mut p = start;
            if i > 0 {
                p[i - 1] += step[i - 1];
            }
            (p, f(&p))
        })
        .collect();
    for _ in 0..iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[3].1 - simplex[0].1).abs() <= 1e-16 * (1.0 + simplex[0].1.abs()) {
            let spread = (0..3)
                .map(|j| (simplex[3].0[j] - simplex[0].0[j]).abs())
                .fold(0.0, f64::max);
            if spread < 1e-10 {
                break;
            }
        }
        let mut centroid = [0.0; 3];
        for (p, _) in &simplex[..3] {
            for j in 0..3 {
                centroid[j] += p[j] / 3.0;
            }
        }
        let along = |coef: f64| {
            let mut p = [0.0; 3];
            for j in 0..3 {
                p[j] = centroid[j] + coef * (simplex[3].0[j] - centroid[j]);
            }
            p
        };
        let refl = along(-1.0);
        let fr = f(&refl);
        if fr < simplex[0].1 {
            let exp = along(-2.0);
            let fe = f(&exp);
            simplex[3] = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (refl, fr);
        } else {
            let con = if fr < simplex[3].1 { along(-0.5) } else { along(0.5) };
            let fc = f(&con);
            if fc < simplex[3].1.min(fr) {
                simplex[3] = (con, fc);
            } else {
                let best = simplex[0].0;
                for s in simplex.iter_mut().skip(1) {
                    for j in 0..3 {
                        s.0[j] = best[j] + 0.5 * (s.0[j] - best[j]);
                    }
                    s.1 = f(&s.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// Least-squares logistic fit of accuracy against sensing time, multi-start
/// Nelder-Mead with `l in (0, 1]`, `k` in [`LOGISTIC_K_BOUNDS`].
pub fn fit_logistic(points: &[(f64, f64)]) -> Result<LogisticFit> {
    if points.len() < 3 {
        return Err(Error::Input("logistic fit needs at least 3 points".into()));
    }
    let mut ts: Vec<f64> = points.iter().map(|p| p.0).collect();
    ts.sort_by(f64::total_cmp);
    if ts.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Input("logistic fit needs distinct times".into()));
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::Input("non-finite point".into()));
    }
    let (t_min, t_max) = (ts[0], ts[ts.len() - 1]);
    let span = t_max - t_min;
    let (k_lo, k_hi) = LOGISTIC_K_BOUNDS;
    let mean = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;

    // Flat curve at the mean: the sigmoid pushed far left of the data.
    let flat = |c: f64| {
        let l = c.clamp(f64::MIN_POSITIVE, 1.0);
        let t0 = t_min - 40.0 / k_lo;
        LogisticFit { l, k: k_lo, t0, rss: rss(points, l, k_lo, t0), degenerate: false }
    };
    if points.iter().all(|p| p.1 == points[0].1) {
        return Ok(LogisticFit { degenerate: true, ..flat(points[0].1) });
    }

    let t0_bounds = (t_min - 10.0 * span.max(1.0), t_max + 10.0 * span.max(1.0));
    let project = |p: &[f64; 3]| {
        [
            p[0].clamp(1e-6, 1.0),
            p[1].clamp(k_lo, k_hi),
            p[2].clamp(t0_bounds.0, t0_bounds.1),
        ]
    };
    let objective = |p: &[f64; 3]| {
        let q = project(p);
        rss(points, q[0], q[1], q[2])
    };
    let a_max = points.iter().map(|p| p.1).fold(f64::MIN, f64::max).clamp(1e-3, 1.0);
    let mut best = flat(mean);
    for &l in &[a_max, 1.0] {
        for &k in &[0.3 / span.max(1e-9) * 4.0, 1.0, 3.0] {
            for &t0 in &[t_min, 0.5 * (t_min + t_max), t_max] {
                let (p, _) = nelder_mead(&objective, [l, k, t0], [0.05, 0.5 * k, 0.25 * span.max(1.0)], 4000);
                let q = project(&p);
                let r = rss(points, q[0], q[1], q[2]);
                if r < best.rss {
                    best = LogisticFit { l: q[0], k: q[1], t0: q[2], rss: r, degenerate: false };
                }
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(doppler: Vec<f64>, rate: f64) -> SlowTimeTrack {
        SlowTimeTrack {
            samples: vec![Complex64::new(0.0, 0.0); doppler.len()],
            power: vec![1.0; doppler.len()],
            doppler,
            rate,
        }
    }

    fn sinusoid(f: f64, n: usize, rate: f64) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / rate + 0.4).sin())
            .collect()
    }

    fn map_with(cols: usize, rows: usize, fill: impl Fn(usize, usize) -> Complex64, cancelled: bool) -> DopplerMap {
        let cit = 0.1;
        DopplerMap {
            values: (0..rows * cols).map(|i| fill(i / cols, i % cols)).collect(),
            rows,
            cols,
            doppler_axis: (0..cols).map(|k| (k as f64 - (cols / 2) as f64) / cit).collect(),
            time_axis: (0..rows).map(|i| (i as f64 + 0.5) * cit).collect(),
            channel_id: 1,
            clutter_cancelled: cancelled,
        }
    }

    #[test]
    fn single_column_track() {
        let m = map_with(16, 5, |r, c| if c == 9 { Complex64::new(r as f64 + 1.0, -1.0) } else { Complex64::new(0.0, 0.0) }, true);
        let t = extract_track(&m, 10.0).unwrap();
        assert_eq!(t.samples, (0..5).map(|r| Complex64::new(r as f64 + 1.0, -1.0)).collect::<Vec<_>>());
        assert!(t.doppler.iter().all(|&d| (d - 10.0).abs() < 1e-12));
        assert!((t.rate - 10.0).abs() < 1e-12);
    }

    #[test]
    fn dc_bin_dropped_without_cancellation() {
        let m = map_with(16, 2, |_, c| if c == 8 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }, false);
        let t = extract_track(&m, 10.0).unwrap();
        assert!(t.samples.iter().all(|v| v.norm() == 0.0));
        let m = DopplerMap { clutter_cancelled: true, ..m };
        assert!(extract_track(&m, 10.0).unwrap().samples.iter().all(|v| v.norm() == 1.0));
    }

    #[test]
    fn band_narrower_than_a_bin() {
        let m = map_with(16, 2, |_, _| Complex64::new(1.0, 0.0), true);
        assert!(matches!(extract_track(&m, 5.0), Err(Error::Config(_))));
    }

    #[test]
    fn clean_sinusoid_counts() {
        let t = track(sinusoid(0.3, 100, 10.0), 10.0);
        let cfg = EstimatorConfig::default();
        assert_eq!(count_respirations(&[t.clone(), t], 10.0, &cfg).unwrap(), 3);
    }

    #[test]
    fn silent_track() {
        let t = track(vec![0.0; 100], 10.0);
        let cfg = EstimatorConfig::default();
        let p = detect_presence(&[t.clone(), t.clone()], 10.0, &cfg).unwrap();
        assert!(!p.present);
        assert_eq!(p.score, 0.0);
        assert!(matches!(count_respirations(&[t.clone(), t], 10.0, &cfg), Err(Error::NoRespiration { .. })));
    }

    #[test]
    fn short_track_is_input_error() {
        let t = track(vec![0.0; 40], 10.0);
        let cfg = EstimatorConfig::default();
        assert!(matches!(detect_presence(&[t.clone(), t], 5.0, &cfg), Err(Error::Input(_))));
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 2, 3], &[4, 5, 6]).unwrap(), 0.0);
        assert_eq!(accuracy(&[2, 3, 3, 5], &[2, 3, 4, 5]).unwrap(), 0.75);
        assert!(accuracy(&[1, 2], &[1]).is_err());
        assert!(accuracy::<u8>(&[], &[]).is_err());
    }

    #[test]
    fn calibration_separates_classes() {
        let th = calibrate_threshold(&[5.0, 6.0, 9.0], &[1.0, 2.0, 3.0]);
        assert!(th > 3.0 && th < 5.0);
    }

    #[test]
    fn logistic_round_trip() {
        let pts: Vec<(f64, f64)> = (1..=10).map(|t| (t as f64, logistic(1.0, 1.2, 4.0, t as f64))).collect();
        let fit = fit_logistic(&pts).unwrap();
        assert!((fit.l - 1.0).abs() < 1e-3, "{fit:?}");
        assert!((fit.k - 1.2).abs() < 1e-3, "{fit:?}");
        assert!((fit.t0 - 4.0).abs() < 1e-3, "{fit:?}");
    }

    #[test]
    fn saturated_fit() {
        let pts: Vec<(f64, f64)> = (1..=10).map(|t| (t as f64, 1.0)).collect();
        let fit = fit_logistic(&pts).unwrap();
        assert!(fit.degenerate);
        assert!(fit.k == LOGISTIC_K_BOUNDS.0);
        for t in 1..=10 {
            assert!((fit.eval(t as f64) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn logistic_input_errors() {
        assert!(fit_logistic(&[(1.0, 0.5), (2.0, 0.6)]).is_err());
        assert!(fit_logistic(&[(1.0, 0.5), (1.0, 0.6), (2.0, 0.7)]).is_err());
    }
}
