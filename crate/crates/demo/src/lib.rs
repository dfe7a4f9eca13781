//! Browser demo: simulate a ten-second desk scene, render the time-Doppler
//! map of either surveillance channel with a CFAR overlay, and run the
//! respiration estimator on a chosen window.

use wasm_bindgen::prelude::*;

use breathradar::caf::DopplerMap;
use breathradar::cfar::{cfar_detect, CfarConfig};
use breathradar::dataset::{guarded_channels, sample_scenario, DatasetSpec};
use breathradar::estimator::{
    averaged_spectrum, breathing_frequency, detect_presence, EstimatorConfig, SlowTimeTrack,
};
use breathradar::pipeline::run_pipeline;
use breathradar::Error;

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Dynamic range of [`Demo::map_db`], dB.
pub const MAP_FLOOR_DB: f32 = -60.0;

#[wasm_bindgen]
pub struct Demo {
    maps: [DopplerMap; 2],
    tracks: [SlowTimeTrack; 2],
    estimator: EstimatorConfig,
    rate: Option<f64>,
}

#[wasm_bindgen]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub score: f64,
    pub threshold: f64,
    pub present: bool,
    /// Breathing frequency in Hz, NaN when no breathing line was found.
    pub frequency: f64,
    /// Respirations in the window, -1 when no breathing line was found.
    pub count: i32,
}

impl Demo {
    /// Randomized scene as in the detection dataset: a breathing person (or
    /// none), a walking interferer (optional) and static clutter.
    pub fn simulate(distance: f64, breathing: bool, interferer: bool, seed: u64) -> Result<Demo, Error> {
        let spec = DatasetSpec {
            closest_distance: distance,
            ..DatasetSpec::detection(seed)
        };
        spec.validate()?;
        let mut scn = sample_scenario(&spec, breathing as u32, seed);
        if !interferer {
            scn.interferer = None;
        }
        let (scn, ch, _) = guarded_channels(&scn, spec.randomization.guard_db, &spec.pipeline.caf)?;
        let out = run_pipeline(&ch, &spec.pipeline)?;
        Ok(Demo {
            maps: out.maps,
            tracks: out.tracks,
            estimator: spec.pipeline.estimator,
            rate: scn.target.map(|t| t.rate),
        })
    }

    fn map(&self, channel: usize) -> Result<&DopplerMap, Error> {
        self.maps
            .get(channel)
            .ok_or_else(|| Error::Input(format!("channel {channel} out of range (0 or 1)")))
    }

    /// Magnitude in dB relative to the map peak, clipped at [`MAP_FLOOR_DB`].
    pub fn map_db_for(&self, channel: usize) -> Result<Vec<f32>, Error> {
        let m = self.map(channel)?;
        let peak = m.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        Ok(m.values
            .iter()
            .map(|v| {
                if peak > 0.0 && v.norm() > 0.0 {
                    ((20.0 * (v.norm() / peak).log10()) as f32).max(MAP_FLOOR_DB)
                } else {
                    MAP_FLOOR_DB
                }
            })
            .collect())
    }

    /// CFAR detection mask (1 = detection), row-major.
    pub fn cfar_for(&self, channel: usize, pfa: f64, train: usize, guard: usize) -> Result<Vec<u8>, Error> {
        let cfg = CfarConfig {
            train: (train, train),
            guard: (guard, guard),
            pfa,
        };
        let det = cfar_detect(self.map(channel)?, &cfg)?;
        Ok(det.detections.iter().map(|&d| d as u8).collect())
    }

    pub fn estimate_for(&self, window: f64) -> Result<Estimate, Error> {
        let p = detect_presence(&self.tracks, window, &self.estimator)?;
        let f = match breathing_frequency(&self.tracks, window, &self.estimator) {
            Ok(f) => Some(f),
            Err(Error::NoRespiration { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(Estimate {
            score: p.score,
            threshold: self.estimator.threshold_for(window),
            present: p.present,
            frequency: f.unwrap_or(f64::NAN),
            count: f.map_or(-1, |f| (f * window).round() as i32),
        })
    }

    /// Interleaved `[f0, a0, f1, a1, ...]` up to 2 Hz.
    pub fn spectrum_for(&self, window: f64) -> Result<Vec<f64>, Error> {
        let Some(s) = averaged_spectrum(&self.tracks, window, &self.estimator)? else {
            return Ok(Vec::new());
        };
        Ok(s.freqs
            .iter()
            .zip(&s.power)
            .take_while(|(f, _)| **f <= 2.0)
            .flat_map(|(&f, &a)| [f, a])
            .collect())
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(distance: f64, breathing: bool, interferer: bool, seed: u64) -> Result<Demo, JsError> {
        Demo::simulate(distance, breathing, interferer, seed).map_err(js)
    }

    pub fn rows(&self) -> usize {
        self.maps[0].rows
    }

    pub fn cols(&self) -> usize {
        self.maps[0].cols
    }

    pub fn doppler_axis(&self) -> Vec<f64> {
        self.maps[0].doppler_axis.clone()
    }

    pub fn time_axis(&self) -> Vec<f64> {
        self.maps[0].time_axis.clone()
    }

    /// Ground-truth breathing rate, NaN without a breathing person.
    pub fn true_rate(&self) -> f64 {
        self.rate.unwrap_or(f64::NAN)
    }

    pub fn map_db(&self, channel: usize) -> Result<Vec<f32>, JsError> {
        self.map_db_for(channel).map_err(js)
    }

    pub fn cfar(&self, channel: usize, pfa: f64, train: usize, guard: usize) -> Result<Vec<u8>, JsError> {
        self.cfar_for(channel, pfa, train, guard).map_err(js)
    }

    pub fn estimate(&self, window: f64) -> Result<Estimate, JsError> {
        self.estimate_for(window).map_err(js)
    }

    pub fn spectrum(&self, window: f64) -> Result<Vec<f64>, JsError> {
        self.spectrum_for(window).map_err(js)
    }
}
