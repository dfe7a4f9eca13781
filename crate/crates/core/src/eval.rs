//! Scores the deterministic estimator on a generated dataset.
//!
//! Detection thresholds are calibrated by cross-validation: the threshold
//! applied to fold `k` is fitted on the other folds only.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetKind, DatasetManifest};
use crate::error::{Error, Result};
use crate::estimator::{
    accuracy, calibrate_threshold, count_respirations, extract_track, fit_logistic, presence_score,
    EstimatorConfig, LogisticFit, SlowTimeTrack,
};
use crate::formats::{read_doppler_map, write_bytes, write_json};

/// One estimator decision, as emitted in the per-sample JSON records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub scenario_hash: String,
    pub window_s: f64,
    pub present: Option<bool>,
    pub score: Option<f64>,
    pub count: Option<u32>,
    pub truth: u32,
    pub fold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowAccuracy {
    pub window_s: f64,
    /// Cross-validated accuracy over all entries.
    pub accuracy: f64,
    /// Threshold applied to each fold.
    pub fold_thresholds: Vec<f64>,
    pub fold_accuracy: Vec<f64>,
    /// Threshold calibrated on every entry, suitable as a configured default.
    pub full_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub windows: Vec<WindowAccuracy>,
    pub logistic: LogisticFit,
    /// RSS of the best constant fit to the same points.
    pub constant_rss: f64,
    pub records: Vec<SampleRecord>,
}

impl DetectionReport {
    pub fn accuracy_at(&self, window: f64) -> Option<f64> {
        self.windows
            .iter()
            .find(|w| (w.window_s - window).abs() < 1e-9)
            .map(|w| w.accuracy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingReport {
    pub window_s: f64,
    pub classes: Vec<u32>,
    /// `confusion[true][predicted]` over `classes`.
    pub confusion: Vec<Vec<usize>>,
    /// Per true class: no breathing line found.
    pub undetected: Vec<usize>,
    /// Per true class: a count outside `classes`.
    pub out_of_range: Vec<usize>,
    pub accuracy: f64,
    /// Fraction of entries counted within one of the truth.
    pub within_one: f64,
    pub records: Vec<SampleRecord>,
}

/// Tracks of both channels of every entry, read from the PSGM maps.
fn load_tracks(manifest: &DatasetManifest, root: &Path, band: f64) -> Result<Vec<([SlowTimeTrack; 2], String)>> {
    let load = |e: &crate::dataset::ManifestEntry| -> Result<([SlowTimeTrack; 2], String)> {
        if e.spectrogram_paths.len() != 2 {
            return Err(Error::Input(format!("entry {} lists {} maps", e.id, e.spectrogram_paths.len())));
        }
        let m1 = read_doppler_map(&root.join(&e.spectrogram_paths[0]))?;
        let m2 = read_doppler_map(&root.join(&e.spectrogram_paths[1]))?;
        let side: crate::formats::SpectrogramSidecar =
            crate::formats::read_json(&crate::formats::sidecar_path(&root.join(&e.spectrogram_paths[0])))?;
        Ok(([extract_track(&m1, band)?, extract_track(&m2, band)?], side.scenario_hash))
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        manifest.entries.par_iter().map(load).collect()
    }
    #[cfg(not(feature = "parallel"))]
    manifest.entries.iter().map(load).collect()
}

/// Cross-validated presence accuracy for each window, plus the logistic fit
/// of accuracy against window length.
pub fn evaluate_detection(manifest: &DatasetManifest, root: &Path, cfg: &EstimatorConfig) -> Result<DetectionReport> {
    if manifest.spec.kind != DatasetKind::Detection {
        return Err(Error::Config("manifest is not a detection dataset".into()));
    }
    let tracks = load_tracks(manifest, root, cfg.band)?;
    let folds = manifest.spec.folds;
    let entries = &manifest.entries;
    let mut windows = Vec::new();
    let mut records = Vec::new();
    for &w in &manifest.spec.windows {
        let scores = tracks
            .iter()
            .map(|(t, _)| presence_score(t, w, cfg))
            .collect::<Result<Vec<f64>>>()?;
        let split = |keep: &dyn Fn(usize) -> bool| {
            let (mut pos, mut neg) = (Vec::new(), Vec::new());
            for (i, e) in entries.iter().enumerate().filter(|(i, _)| keep(*i)) {
                if e.label == 1 { pos.push(scores[i]) } else { neg.push(scores[i]) }
            }
            (pos, neg)
        };
        let mut pred = vec![false; entries.len()];
        let mut fold_thresholds = Vec::with_capacity(folds);
        let mut fold_accuracy = Vec::with_capacity(folds);
        for k in 0..folds {
            let (pos, neg) = split(&|i| entries[i].fold != k);
            let th = calibrate_threshold(&pos, &neg);
            let idx: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].fold == k).collect();
            for &i in &idx {
                pred[i] = scores[i] > th;
            }
            let p: Vec<bool> = idx.iter().map(|&i| pred[i]).collect();
            let t: Vec<bool> = idx.iter().map(|&i| entries[i].label == 1).collect();
            fold_accuracy.push(if idx.is_empty() { f64::NAN } else { accuracy(&p, &t)? });
            fold_thresholds.push(th);
        }
        let truth: Vec<bool> = entries.iter().map(|e| e.label == 1).collect();
        let (pos, neg) = split(&|_| true);
        windows.push(WindowAccuracy {
            window_s: w,
            accuracy: accuracy(&pred, &truth)?,
            fold_thresholds,
            fold_accuracy,
            full_threshold: calibrate_threshold(&pos, &neg),
        });
        for (i, e) in entries.iter().enumerate() {
            records.push(SampleRecord {
                id: e.id.clone(),
                scenario_hash: tracks[i].1.clone(),
                window_s: w,
                present: Some(pred[i]),
                score: Some(scores[i]),
                count: None,
                truth: e.label,
                fold: e.fold,
            });
        }
    }
    let points: Vec<(f64, f64)> = windows.iter().map(|w| (w.window_s, w.accuracy)).collect();
    let (logistic, constant_rss) = logistic_summary(&points)?;
    Ok(DetectionReport {
        windows,
        logistic,
        constant_rss,
        records,
    })
}

/// Logistic fit and the RSS of the best constant fit.
pub fn logistic_summary(points: &[(f64, f64)]) -> Result<(LogisticFit, f64)> {
    let fit = fit_logistic(points)?;
    let mean = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let constant = points.iter().map(|p| (p.1 - mean).powi(2)).sum();
    Ok((fit, constant))
}

/// Exact-count accuracy and confusion matrix over a 10 s window.
pub fn evaluate_counting(manifest: &DatasetManifest, root: &Path, cfg: &EstimatorConfig) -> Result<CountingReport> {
    if manifest.spec.kind != DatasetKind::Counting {
        return Err(Error::Config("manifest is not a counting dataset".into()));
    }
    let window = manifest.spec.duration();
    let classes = manifest.spec.classes.clone();
    let tracks = load_tracks(manifest, root, cfg.band)?;
    let nc = classes.len();
    let mut confusion = vec![vec![0usize; nc]; nc];
    let mut undetected = vec![0usize; nc];
    let mut out_of_range = vec![0usize; nc];
    let (mut hits, mut near) = (0usize, 0usize);
    let mut records = Vec::with_capacity(tracks.len());
    for (e, (t, hash)) in manifest.entries.iter().zip(&tracks) {
        let row = classes
            .iter()
            .position(|&c| c == e.label)
            .ok_or_else(|| Error::Input(format!("entry {} has label {} outside the classes", e.id, e.label)))?;
        let count = match count_respirations(t, window, cfg) {
            Ok(c) => Some(c),
            Err(Error::NoRespiration { .. }) => None,
            Err(err) => return Err(err),
        };
        match count {
            None => undetected[row] += 1,
            Some(c) => {
                match classes.iter().position(|&k| k == c) {
                    Some(col) => confusion[row][col] += 1,
                    None => out_of_range[row] += 1,
                }
                hits += (c == e.label) as usize;
                near += (c.abs_diff(e.label) <= 1) as usize;
            }
        }
        records.push(SampleRecord {
            id: e.id.clone(),
            scenario_hash: hash.clone(),
            window_s: window,
            present: Some(count.is_some()),
            score: None,
            count,
            truth: e.label,
            fold: e.fold,
        });
    }
    let n = manifest.entries.len().max(1) as f64;
    Ok(CountingReport {
        window_s: window,
        classes,
        confusion,
        undetected,
        out_of_range,
        accuracy: hits as f64 / n,
        within_one: near as f64 / n,
        records,
    })
}

/// `detection.json`, `accuracy.csv` and `records.json` under `dir`.
pub fn write_detection_report(dir: &Path, r: &DetectionReport) -> Result<()> {
    write_json(&dir.join("detection.json"), r)?;
    let mut csv = String::from("window_s,accuracy,logistic\n");
    for w in &r.windows {
        csv += &format!("{},{},{}\n", w.window_s, w.accuracy, r.logistic.eval(w.window_s));
    }
    write_bytes(&dir.join("accuracy.csv"), csv.as_bytes())
}

/// `counting.json` and `confusion.csv` under `dir`.
pub fn write_counting_report(dir: &Path, r: &CountingReport) -> Result<()> {
    write_json(&dir.join("counting.json"), r)?;
    let mut csv = String::from("truth");
    for c in &r.classes {
        csv += &format!(",{c}");
    }
    csv += ",out_of_range,undetected\n";
    for (i, c) in r.classes.iter().enumerate() {
        csv += &c.to_string();
        for v in &r.confusion[i] {
            csv += &format!(",{v}");
        }
        csv += &format!(",{},{}\n", r.out_of_range[i], r.undetected[i]);
    }
    write_bytes(&dir.join("confusion.csv"), csv.as_bytes())
}
