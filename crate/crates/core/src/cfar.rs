//! Two-dimensional cell-averaging CFAR over time-Doppler power maps.
//!
//! The window around each cell under test spans `train + guard` cells on
//! either side along each axis. The guard block (which contains the CUT) is
//! excluded; the remaining training cells give the noise estimate `P_n`, and
//! the cell is a detection when it exceeds `alpha(N, pfa) * P_n`. Near the map
//! borders the window is clipped and `N` is the number of training cells that
//! remain.

use serde::{Deserialize, Serialize};

use crate::caf::DopplerMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfarConfig {
    /// Training half-widths (rows, cols).
    pub train: (usize, usize),
    /// Guard half-widths (rows, cols).
    pub guard: (usize, usize),
    pub pfa: f64,
}

impl Default for CfarConfig {
    fn default() -> Self {
        Self {
            train: (4, 4),
            guard: (1, 1),
            pfa: 1e-3,
        }
    }
}

impl CfarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train.0 < 1 || self.train.1 < 1 {
            return Err(Error::Config("CFAR training half-width must be >= 1 per axis".into()));
        }
        if !(self.pfa > 0.0 && self.pfa < 1.0) {
            return Err(Error::Config(format!("CFAR pfa {} outside (0, 1)", self.pfa)));
        }
        Ok(())
    }

    /// Training cells of an unclipped window.
    pub fn interior_training_cells(&self) -> usize {
        let w = (2 * (self.train.0 + self.guard.0) + 1) * (2 * (self.train.1 + self.guard.1) + 1);
        w - (2 * self.guard.0 + 1) * (2 * self.guard.1 + 1)
    }
}

/// Detections and per-cell thresholds aligned with the source map.
#[derive(Debug, Clone, PartialEq)]
pub struct CfarMap {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub detections: Vec<bool>,
    /// `alpha * P_n` per cell, row-major.
    pub threshold_map: Vec<f64>,
}

impl CfarMap {
    pub fn detection_count(&self) -> usize {
        self.detections.iter().filter(|&&d| d).count()
    }

    pub fn is_detection(&self, r: usize, c: usize) -> bool {
        self.detections[r * self.cols + c]
    }
}

/// `N (pfa^(-1/N) - 1)`.
pub fn threshold_factor(n_train: usize, pfa: f64) -> Result<f64> {
    if n_train == 0 {
        return Err(Error::Domain("CFAR needs at least one training cell".into()));
    }
    if !(pfa > 0.0 && pfa <= 1.0) {
        return Err(Error::Domain(format!("pfa {pfa} outside (0, 1]")));
    }
    let n = n_train as f64;
    Ok(n * (-pfa.ln() / n).exp_m1())
}

/// CA-CFAR on the magnitude-squared CAF values of `map`.
pub fn cfar_detect(map: &DopplerMap, cfg: &CfarConfig) -> Result<CfarMap> {
    cfar_detect_power(&map.power(), map.rows, map.cols, cfg)
}

/// CA-CFAR on a row-major power map.
pub fn cfar_detect_power(power: &[f64], rows: usize, cols: usize, cfg: &CfarConfig) -> Result<CfarMap> {
    cfg.validate()?;
    if power.len() != rows * cols {
        return Err(Error::Input("power map length disagrees with its dimensions".into()));
    }
    let (hr, hc) = (cfg.train.0 + cfg.guard.0, cfg.train.1 + cfg.guard.1);
    if rows < 2 * hr + 1 || cols < 2 * hc + 1 {
        return Err(Error::Config(format!(
            "CFAR window {}x{} larger than the {rows}x{cols} map",
            2 * hr + 1,
            2 * hc + 1
        )));
    }
    // alpha for every possible clipped training count
    let max_n = cfg.interior_training_cells();
    let alphas: Vec<f64> = (0..=max_n)
        .map(|n| if n == 0 { 0.0 } else { threshold_factor(n, cfg.pfa).unwrap() })
        .collect();

    let span = |i: usize, h: usize, len: usize| (i.saturating_sub(h), (i + h).min(len - 1));
    let mut detections = vec![false; rows * cols];
    let mut threshold_map = vec![0.0; rows * cols];
    for r in 0..rows {
        let (r0, r1) = span(r, hr, rows);
        let (g0, g1) = span(r, cfg.guard.0, rows);
        for c in 0..cols {
            let (c0, c1) = span(c, hc, cols);
            let (k0, k1) = span(c, cfg.guard.1, cols);
            let mut sum = 0.0;
            let mut count = 0usize;
            for rr in r0..=r1 {
                let line = &power[rr * cols..(rr + 1) * cols];
                if (g0..=g1).contains(&rr) {
                    sum += line[c0..k0].iter().sum::<f64>() + line[k1 + 1..=c1].iter().sum::<f64>();
                    count += (k0 - c0) + (c1 - k1);
                } else {
                    sum += line[c0..=c1].iter().sum::<f64>();
                    count += c1 - c0 + 1;
                }
            }
            let noise = sum / count as f64;
            let beta = alphas[count] * noise;
            let idx = r * cols + c;
            threshold_map[idx] = beta;
            detections[idx] = power[idx] > beta;
        }
    }
    Ok(CfarMap {
        rows,
        cols,
        detections,
        threshold_map,
    })
}
