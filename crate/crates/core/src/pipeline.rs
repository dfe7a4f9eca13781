//! End-to-end processing of both surveillance channels.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::caf::{caf_map, CafConfig, DopplerMap};
use crate::cfar::{cfar_detect, CfarConfig, CfarMap};
use crate::clutter::ClutterCancelConfig;
use crate::error::Result;
use crate::estimator::{
    count_respirations, detect_presence, extract_track, EstimatorConfig, Presence, SlowTimeTrack,
};
use crate::synth::{Channels, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// `None` skips clutter cancellation.
    pub clutter: Option<ClutterCancelConfig>,
    pub caf: CafConfig,
    pub cfar: CfarConfig,
    pub estimator: EstimatorConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            clutter: Some(ClutterCancelConfig::default()),
            caf: CafConfig::default(),
            cfar: CfarConfig::default(),
            estimator: EstimatorConfig::default(),
        }
    }
}

/// SHA-256 (hex) of a value's JSON encoding.
pub fn json_hash<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_vec(value).expect("config types serialize");
    hex::encode(Sha256::digest(text))
}

impl PipelineConfig {
    pub fn config_hash(&self) -> String {
        json_hash(self)
    }
}

/// Scenario plus processing settings, as read by the command-line tool.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub pipeline: PipelineConfig,
}

/// Per-channel products of [`run_pipeline`]; index 0 is `sur1`.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub maps: [DopplerMap; 2],
    pub cfar: [CfarMap; 2],
    pub tracks: [SlowTimeTrack; 2],
}

impl PipelineOutput {
    pub fn presence(&self, window: f64, cfg: &EstimatorConfig) -> Result<Presence> {
        detect_presence(&self.tracks, window, cfg)
    }

    pub fn count(&self, window: f64, cfg: &EstimatorConfig) -> Result<u32> {
        count_respirations(&self.tracks, window, cfg)
    }
}

/// Doppler maps of both surveillance channels.
pub fn doppler_maps(ch: &Channels, cfg: &PipelineConfig) -> Result<[DopplerMap; 2]> {
    let map = |i: usize| {
        caf_map(
            &ch.reference,
            &ch.surveillance[i],
            i as u8 + 1,
            cfg.clutter.as_ref(),
            &cfg.caf,
        )
    };
    Ok([map(0)?, map(1)?])
}

/// CFAR maps and slow-time tracks for precomputed Doppler maps.
pub fn process_maps(maps: [DopplerMap; 2], cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let cfar = [cfar_detect(&maps[0], &cfg.cfar)?, cfar_detect(&maps[1], &cfg.cfar)?];
    let tracks = [
        extract_track(&maps[0], cfg.estimator.band)?,
        extract_track(&maps[1], cfg.estimator.band)?,
    ];
    Ok(PipelineOutput { maps, cfar, tracks })
}

/// Clutter cancellation, CAF, CFAR and track extraction on both channels.
pub fn run_pipeline(ch: &Channels, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    process_maps(doppler_maps(ch, cfg)?, cfg)
}
