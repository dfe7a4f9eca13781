//! Cross ambiguity function per CIT and time-Doppler map assembly.
//!
//! For each candidate delay `tau` the lag product
//! `z[n] = y*[n] conj(ref[n - tau])` is transformed to the Doppler grid
//! `f_k = k / cit`, `k = -B/2 .. B/2 - 1`; each bin keeps the value of largest
//! magnitude over `tau`. Bin `B/2` of a row is 0 Hz and positive Doppler means
//! a shrinking bistatic path.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::clutter::{cancel_clutter, CitBlock, ClutterCancelConfig};
use crate::error::{Error, Result};
use crate::iq::IqBuffer;

/// How a lag product is taken to the Doppler grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DopplerKernel {
    /// Length-`N` FFT, bins picked at `k / cit`. Equal to the direct sum.
    #[default]
    Exact,
    /// Sum the lag product over `B` contiguous blocks, then a length-`B` FFT.
    /// Cheaper, but the phase ramp inside each block is ignored so bins away
    /// from 0 Hz droop.
    IntegrateAndDump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CafConfig {
    /// Coherent integration time, seconds.
    pub cit: f64,
    /// Doppler bins per row `B`.
    pub doppler_bins: usize,
    /// Largest delay searched, samples (`0..=delay_search`).
    pub delay_search: usize,
    #[serde(default)]
    pub kernel: DopplerKernel,
}

impl Default for CafConfig {
    fn default() -> Self {
        Self {
            cit: 0.1,
            doppler_bins: 1024,
            delay_search: 4,
            kernel: DopplerKernel::Exact,
        }
    }
}

impl CafConfig {
    /// Samples per CIT at `sample_rate`.
    pub fn cit_samples(&self, sample_rate: f64) -> Result<usize> {
        let x = self.cit * sample_rate;
        let n = x.round();
        if !(self.cit > 0.0) || (x - n).abs() > 1e-6 * n.max(1.0) {
            return Err(Error::Config(format!(
                "CIT of {} s is not a whole number of samples at {sample_rate} Hz",
                self.cit
            )));
        }
        if self.doppler_bins < 2 {
            return Err(Error::Config("doppler_bins must be >= 2".into()));
        }
        if (n as usize) < self.doppler_bins {
            return Err(Error::Config(format!(
                "CIT holds {n} samples, fewer than {} Doppler bins",
                self.doppler_bins
            )));
        }
        Ok(n as usize)
    }

    /// Bin centers in Hz, `(k - B/2) / cit`.
    pub fn doppler_axis(&self) -> Vec<f64> {
        let half = (self.doppler_bins / 2) as f64;
        (0..self.doppler_bins)
            .map(|k| (k as f64 - half) / self.cit)
            .collect()
    }

    pub fn bin_spacing(&self) -> f64 {
        1.0 / self.cit
    }
}

/// Time-Doppler matrix of complex CAF values, one row per CIT.
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerMap {
    /// Row-major `rows x cols`.
    pub values: Vec<Complex64>,
    pub rows: usize,
    pub cols: usize,
    pub doppler_axis: Vec<f64>,
    /// CIT centers, seconds.
    pub time_axis: Vec<f64>,
    /// Surveillance channel, 1 or 2.
    pub channel_id: u8,
    pub clutter_cancelled: bool,
}

impl DopplerMap {
    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.values[r * self.cols + c]
    }

    /// `|value|^2` per cell, row-major.
    pub fn power(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    pub fn total_power(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Index of the 0 Hz column.
    pub fn zero_bin(&self) -> usize {
        self.cols / 2
    }

    pub fn bin_spacing(&self) -> f64 {
        if self.cols > 1 {
            self.doppler_axis[1] - self.doppler_axis[0]
        } else {
            0.0
        }
    }

    /// The last `rows` rows.
    pub fn tail(&self, rows: usize) -> DopplerMap {
        let rows = rows.min(self.rows);
        let start = self.rows - rows;
        DopplerMap {
            values: self.values[start * self.cols..].to_vec(),
            rows,
            cols: self.cols,
            doppler_axis: self.doppler_axis.clone(),
            time_axis: self.time_axis[start..].to_vec(),
            channel_id: self.channel_id,
            clutter_cancelled: self.clutter_cancelled,
        }
    }
}

/// Reusable CAF evaluator for one CIT length; caches the FFT plans.
pub struct CafEngine {
    n: usize,
    cfg: CafConfig,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl CafEngine {
    pub fn new(sample_rate: f64, cfg: &CafConfig) -> Result<Self> {
        let n = cfg.cit_samples(sample_rate)?;
        let len = match cfg.kernel {
            DopplerKernel::Exact => n,
            DopplerKernel::IntegrateAndDump => cfg.doppler_bins,
        };
        let fft = FftPlanner::new().plan_fft_forward(len);
        let scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        Ok(Self {
            n,
            cfg: *cfg,
            fft,
            buf: vec![Complex64::new(0.0, 0.0); len],
            scratch,
        })
    }

    pub fn cit_samples(&self) -> usize {
        self.n
    }

    /// Doppler row of one lag product, FFT-shifted.
    fn spectrum(&mut self, y: &[Complex64], r: &[Complex64], tau: usize, out: &mut [Complex64]) {
        let b = self.cfg.doppler_bins;
        let zero = Complex64::new(0.0, 0.0);
        let lag = |n: usize| {
            if n >= tau {
                y[n] * r[n - tau].conj()
            } else {
                zero
            }
        };
        let len = self.buf.len();
        match self.cfg.kernel {
            DopplerKernel::Exact => {
                for (n, v) in self.buf.iter_mut().enumerate() {
                    *v = lag(n);
                }
            }
            DopplerKernel::IntegrateAndDump => {
                let n = self.n;
                for (blk, v) in self.buf.iter_mut().enumerate() {
                    let (lo, hi) = (blk * n / b, (blk + 1) * n / b);
                    *v = (lo..hi).map(lag).sum();
                }
            }
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        let half = b / 2;
        for (col, o) in out.iter_mut().enumerate() {
            let k = col as isize - half as isize;
            *o = self.buf[k.rem_euclid(len as isize) as usize];
        }
    }

    /// One CAF row (max over delay per bin) and the delay of the global peak.
    pub fn process(&mut self, y_star: &[Complex64], reference: &[Complex64]) -> Result<(Vec<Complex64>, usize)> {
        if y_star.len() != self.n || reference.len() != self.n {
            return Err(Error::Input(format!(
                "CAF expects {} samples per channel, got {} and {}",
                self.n,
                y_star.len(),
                reference.len()
            )));
        }
        let b = self.cfg.doppler_bins;
        let mut best = vec![Complex64::new(0.0, 0.0); b];
        let mut best_tau = vec![0usize; b];
        let mut row = vec![Complex64::new(0.0, 0.0); b];
        for tau in 0..=self.cfg.delay_search.min(self.n - 1) {
            self.spectrum(y_star, reference, tau, &mut row);
            for k in 0..b {
                if tau == 0 || row[k].norm_sqr() > best[k].norm_sqr() {
                    best[k] = row[k];
                    best_tau[k] = tau;
                }
            }
        }
        let peak = (0..b).fold(0, |m, k| if best[k].norm_sqr() > best[m].norm_sqr() { k } else { m });
        Ok((best, best_tau[peak]))
    }
}

/// CAF of one CIT: Doppler row over `doppler_bins` and the peak delay.
pub fn caf_single_cit(
    y_star: &[Complex64],
    reference: &[Complex64],
    sample_rate: f64,
    cfg: &CafConfig,
) -> Result<(Vec<Complex64>, usize)> {
    CafEngine::new(sample_rate, cfg)?.process(y_star, reference)
}

fn map_row(
    engine: &mut CafEngine,
    reference: &[Complex64],
    sur: &[Complex64],
    sample_rate: f64,
    ccfg: Option<&ClutterCancelConfig>,
) -> Result<Vec<Complex64>> {
    let row = match ccfg {
        Some(c) => {
            let y = cancel_clutter(&CitBlock::new(reference, sur, sample_rate)?, c)?;
            engine.process(&y, reference)?
        }
        None => engine.process(sur, reference)?,
    };
    Ok(row.0)
}

/// Splits both channels into CITs, removes clutter (when `ccfg` is given),
/// evaluates the CAF per CIT and stacks the rows. A trailing partial CIT is
/// dropped.
pub fn caf_map(
    reference: &IqBuffer,
    sur: &IqBuffer,
    channel_id: u8,
    ccfg: Option<&ClutterCancelConfig>,
    cfg: &CafConfig,
) -> Result<DopplerMap> {
    if reference.len() != sur.len() || reference.sample_rate != sur.sample_rate {
        return Err(Error::Input("reference and surveillance buffers differ in length or rate".into()));
    }
    let fs = reference.sample_rate;
    let n = cfg.cit_samples(fs)?;
    let rows = reference.len() / n;
    if rows == 0 {
        return Err(Error::Input(format!(
            "buffers of {} samples are shorter than one CIT ({n} samples)",
            reference.len()
        )));
    }
    let cit = |i: usize| (&reference.samples[i * n..(i + 1) * n], &sur.samples[i * n..(i + 1) * n]);

    #[cfg(feature = "parallel")]
    let out: Vec<Result<Vec<Complex64>>> = {
        use rayon::prelude::*;
        (0..rows)
            .into_par_iter()
            .map_init(
                || CafEngine::new(fs, cfg),
                |eng, i| {
                    let eng = eng.as_mut().map_err(|e| Error::Config(e.to_string()))?;
                    let (r, s) = cit(i);
                    map_row(eng, r, s, fs, ccfg)
                },
            )
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let out: Vec<Result<Vec<Complex64>>> = {
        let mut eng = CafEngine::new(fs, cfg)?;
        (0..rows)
            .map(|i| {
                let (r, s) = cit(i);
                map_row(&mut eng, r, s, fs, ccfg)
            })
            .collect()
    };

    let mut values = Vec::with_capacity(rows * cfg.doppler_bins);
    for row in out {
        values.extend(row?);
    }
    Ok(DopplerMap {
        values,
        rows,
        cols: cfg.doppler_bins,
        doppler_axis: cfg.doppler_axis(),
        time_axis: (0..rows).map(|i| (i as f64 + 0.5) * cfg.cit).collect(),
        channel_id,
        clutter_cancelled: ccfg.is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect()
    }

    fn small_cfg(bins: usize) -> CafConfig {
        CafConfig { cit: 0.1, doppler_bins: bins, delay_search: 2, kernel: DopplerKernel::Exact }
    }

    #[test]
    fn autocorrelation_peaks_at_zero_doppler() {
        let fs = 20_000.0;
        let r = noise(2000, 1);
        let (row, tau) = caf_single_cit(&r, &r, fs, &small_cfg(256)).unwrap();
        let peak = (0..256).max_by(|&a, &b| row[a].norm().total_cmp(&row[b].norm())).unwrap();
        assert_eq!(peak, 128);
        assert_eq!(tau, 0);
        let e: f64 = r.iter().map(|v| v.norm_sqr()).sum();
        assert!((row[128] - Complex64::new(e, 0.0)).norm() < 1e-9 * e);
    }

    #[test]
    fn positive_tone_lands_on_positive_bin() {
        let fs = 20_000.0;
        let r = noise(2000, 2);
        let y: Vec<_> = r
            .iter()
            .enumerate()
            .map(|(n, v)| v * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * 50.0 * n as f64 / fs))
            .collect();
        let cfg = small_cfg(256);
        let (row, _) = caf_single_cit(&y, &r, fs, &cfg).unwrap();
        let peak = (0..256).max_by(|&a, &b| row[a].norm().total_cmp(&row[b].norm())).unwrap();
        assert_eq!(cfg.doppler_axis()[peak], 50.0);
    }

    #[test]
    fn delayed_copy_reports_delay() {
        let fs = 20_000.0;
        let r = noise(2000, 3);
        let y: Vec<_> = (0..2000).map(|n| if n >= 2 { r[n - 2] } else { Complex64::new(0.0, 0.0) }).collect();
        let (_, tau) = caf_single_cit(&y, &r, fs, &small_cfg(64)).unwrap();
        assert_eq!(tau, 2);
    }

    #[test]
    fn axis_spacing_is_inverse_cit() {
        let cfg = CafConfig::default();
        let ax = cfg.doppler_axis();
        assert_eq!(ax.len(), 1024);
        assert_eq!(ax[512], 0.0);
        assert!((cfg.bin_spacing() - 10.0).abs() < 1e-12);
        assert!(ax.windows(2).all(|w| (w[1] - w[0] - 10.0).abs() < 1e-9));
        assert_eq!(ax[0], -5120.0);
        assert_eq!(ax[1023], 5110.0);
    }

    #[test]
    fn configuration_errors() {
        let cfg = small_cfg(4096);
        let r = noise(2000, 4);
        assert!(matches!(caf_single_cit(&r, &r, 20_000.0, &cfg), Err(Error::Config(_))));
        let cfg = CafConfig { cit: 0.10001, ..small_cfg(64) };
        assert!(caf_single_cit(&r, &r, 20_000.0, &cfg).is_err());
        assert!(caf_single_cit(&r[..10], &r, 20_000.0, &small_cfg(64)).is_err());
    }

    #[test]
    fn map_rows_and_partial_cit() {
        let fs = 10_240.0;
        let r = IqBuffer::new(noise(10_240 + 500, 5), fs);
        let s = IqBuffer::new(noise(10_240 + 500, 6), fs);
        let cfg = CafConfig { cit: 0.1, doppler_bins: 128, delay_search: 1, kernel: DopplerKernel::Exact };
        let m = caf_map(&r, &s, 1, Some(&ClutterCancelConfig { taps: 4, regularization: 1e-9 }), &cfg).unwrap();
        assert_eq!(m.rows, 10);
        assert_eq!(m.values.len(), 10 * 128);
        assert_eq!(m.time_axis.len(), 10);
        assert!((m.time_axis[0] - 0.05).abs() < 1e-12);
        let short = IqBuffer::new(noise(500, 7), fs);
        assert!(matches!(caf_map(&short, &short, 1, None, &cfg), Err(Error::Input(_))));
    }

    #[test]
    fn integrate_and_dump_parseval() {
        // sum over bins |row|^2 == B * sum over blocks |block sum|^2
        let r = noise(819, 8);
        let y = noise(819, 9);
        let cfg = CafConfig { cit: 0.1, doppler_bins: 64, delay_search: 0, kernel: DopplerKernel::IntegrateAndDump };
        let (row, _) = caf_single_cit(&y, &r, 8190.0, &cfg).unwrap();
        let n = 819;
        let blocks: f64 = (0..64)
            .map(|b| {
                (b * n / 64..(b + 1) * n / 64)
                    .map(|i| y[i] * r[i].conj())
                    .sum::<Complex64>()
                    .norm_sqr()
            })
            .sum();
        let lhs: f64 = row.iter().map(|v| v.norm_sqr()).sum();
        assert!((lhs - 64.0 * blocks).abs() <= 1e-6 * lhs);
    }
}
