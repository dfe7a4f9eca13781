//! Zero-Doppler clutter removal by least-squares projection of a surveillance
//! CIT onto delayed copies of the reference signal.
//!
//! With `V` the `N x P` matrix whose column `p` is the reference delayed by `p`
//! samples (zero before the block starts), the weights solve
//! `(V^H V + eps I) K = V^H y` and the output is `y - V K`.
//!
//! `V` is never materialized. `V^H V` is built from `P` lagged
//! autocorrelations plus a short edge correction, so a CIT costs about `3 N P`
//! complex multiply-adds.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClutterCancelConfig {
    /// Number of delayed reference copies `P`.
    pub taps: usize,
    /// Tikhonov loading relative to the mean diagonal of `V^H V`.
    /// Zero disables regularization.
    pub regularization: f64,
}

impl Default for ClutterCancelConfig {
    fn default() -> Self {
        Self {
            taps: 32,
            regularization: 1e-9,
        }
    }
}

impl ClutterCancelConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.taps == 0 {
            return Err(Error::Config("clutter taps must be >= 1".into()));
        }
        if self.taps > n / 4 {
            return Err(Error::Config(format!(
                "clutter taps {} exceed a quarter of the CIT length {n}",
                self.taps
            )));
        }
        if !(self.regularization >= 0.0) {
            return Err(Error::Config("regularization must be >= 0".into()));
        }
        Ok(())
    }
}

/// One coherent integration interval of both channels.
#[derive(Debug, Clone, Copy)]
pub struct CitBlock<'a> {
    pub ref_samples: &'a [Complex64],
    pub sur_samples: &'a [Complex64],
    pub sample_rate: f64,
}

impl<'a> CitBlock<'a> {
    pub fn new(
        ref_samples: &'a [Complex64],
        sur_samples: &'a [Complex64],
        sample_rate: f64,
    ) -> Result<Self> {
        if ref_samples.len() != sur_samples.len() {
            return Err(Error::Input(format!(
                "reference ({}) and surveillance ({}) blocks differ in length",
                ref_samples.len(),
                sur_samples.len()
            )));
        }
        Ok(Self {
            ref_samples,
            sur_samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.ref_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ref_samples.is_empty()
    }
}

/// Dense delayed-reference matrix: column `p` is `reference` delayed by `p`
/// samples with zeros shifted in.
pub fn build_delay_matrix(reference: &[Complex64], taps: usize) -> Result<DMatrix<Complex64>> {
    let n = reference.len();
    if taps == 0 || taps > n {
        return Err(Error::Config(format!(
            "delay matrix needs 1 <= taps <= {n}, got {taps}"
        )));
    }
    Ok(DMatrix::from_fn(n, taps, |row, col| {
        if row >= col {
            reference[row - col]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

/// `V^H V` for the implicit delay matrix.
///
/// For `p <= q` with `d = q - p`:
/// `G[p][q] = sum_{k=0}^{N-1-q} conj(r[k+d]) r[k]`, i.e. the full lag-`d`
/// autocorrelation minus its last `q - d` terms.
fn gram(r: &[Complex64], taps: usize) -> DMatrix<Complex64> {
    let n = r.len();
    let lag: Vec<Complex64> = (0..taps)
        .map(|d| {
            r[d..]
                .iter()
                .zip(r)
                .map(|(a, b)| a.conj() * b)
                .sum()
        })
        .collect();
    let mut g = DMatrix::zeros(taps, taps);
    for p in 0..taps {
        for q in p..taps {
            let d = q - p;
            let tail: Complex64 = (n - q..n - d).map(|k| r[k + d].conj() * r[k]).sum();
            let v = lag[d] - tail;
            g[(p, q)] = v;
            g[(q, p)] = v.conj();
        }
    }
    g
}

/// `V^H y`.
fn cross(r: &[Complex64], y: &[Complex64], taps: usize) -> DVector<Complex64> {
    DVector::from_iterator(
        taps,
        (0..taps).map(|p| r.iter().zip(&y[p..]).map(|(a, b)| a.conj() * b).sum()),
    )
}

/// Least-squares weights `K`.
pub fn clutter_weights(block: &CitBlock<'_>, cfg: &ClutterCancelConfig) -> Result<Vec<Complex64>> {
    cfg.validate(block.len())?;
    let r = block.ref_samples;
    let mut g = gram(r, cfg.taps);
    if cfg.regularization > 0.0 {
        let mean_diag = (0..cfg.taps).map(|i| g[(i, i)].re).sum::<f64>() / cfg.taps as f64;
        let eps = cfg.regularization * mean_diag;
        for i in 0..cfg.taps {
            g[(i, i)] += Complex64::new(eps, 0.0);
        }
    }
    let b = cross(r, block.sur_samples, cfg.taps);
    let chol = g.cholesky().ok_or_else(|| {
        Error::Solver("delayed-reference Gram matrix is singular (degenerate reference)".into())
    })?;
    Ok(chol.solve(&b).iter().copied().collect())
}

/// Surveillance block with its projection onto the delayed references removed.
pub fn cancel_clutter(block: &CitBlock<'_>, cfg: &ClutterCancelConfig) -> Result<Vec<Complex64>> {
    let k = clutter_weights(block, cfg)?;
    let r = block.ref_samples;
    let mut out = block.sur_samples.to_vec();
    for (p, w) in k.iter().enumerate() {
        for (o, x) in out[p..].iter_mut().zip(r) {
            *o -= w * x;
        }
    }
    Ok(out)
}
