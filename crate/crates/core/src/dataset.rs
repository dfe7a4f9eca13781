//! Labeled synthetic datasets: randomized desk-scale scenarios, processed by
//! the pipeline and written out as PSGM maps with a `manifest.json` index.
//!
//! Every artifact is a pure function of the [`DatasetSpec`]: each entry draws
//! its scenario from a seed derived from `(master_seed, class, index)`, and
//! manifest paths are relative to the output directory.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::caf::{caf_map, CafConfig};
use crate::clutter::ClutterCancelConfig;
use crate::error::{Error, Result};
pub use crate::estimator::DETECTION_WINDOWS;
use crate::formats::{self, IqSidecar, PayloadKind};
use crate::pipeline::PipelineConfig;
use crate::rng::{derive_seed, stream};
use crate::scene::{self, DeskLayout, Vec3};
use crate::iq::IqBuffer;
use crate::synth::{
    synthesize_channels, BreathingTarget, Channels, ClutterPath, Components, Interferer,
    NoisePower, Scenario, Synthesizer, WaveformConfig, Waypoint, DEFAULT_SURVEILLANCE_NOISE,
    DEFAULT_TARGET_RCS, DESK_SAMPLE_RATE,
};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
/// Present in an output directory while generation is running or after it failed.
pub const INCOMPLETE_MARKER: &str = ".incomplete";

/// Respirations per 10 s in the counting task.
pub const COUNTING_CLASSES: [u32; 5] = [2, 3, 4, 5, 6];

const TAG_SAMPLE: u64 = 0x5A;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Detection,
    Counting,
}

/// Ranges used to randomize scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Randomization {
    /// Chest displacement amplitude, meters.
    pub amplitude: (f64, f64),
    /// Breathing rate of detection positives, Hz.
    pub detection_rate: (f64, f64),
    /// Counting rates are `class / 10 Hz` plus a uniform jitter of this size.
    pub rate_jitter: f64,
    /// Interferer walking speed, m/s.
    pub speed: (f64, f64),
    /// Side of the square walking area centered on the target, meters.
    pub area: f64,
    /// No waypoint comes closer than this to the target or any antenna.
    pub keep_out: f64,
    /// Interferer radar gain before the interference guard is applied.
    pub interferer_rcs: f64,
    /// Minimum interferer-over-target CAF energy outside +-1 Hz, dB.
    pub guard_db: f64,
    /// Clutter paths per channel (inclusive).
    pub clutter_paths: (usize, usize),
    /// Clutter path power, linear, drawn log-uniformly.
    pub clutter_power: (f64, f64),
    /// Clutter path delay, seconds.
    pub clutter_delay: (f64, f64),
    /// Carrier frequency offset magnitude bound, Hz.
    pub cfo: f64,
    pub target_rcs: f64,
    pub noise: NoisePower,
}

impl Default for Randomization {
    fn default() -> Self {
        Self {
            amplitude: (3e-3, 8e-3),
            detection_rate: (0.2, 0.6),
            rate_jitter: 0.01,
            speed: (0.5, 1.5),
            area: 4.0,
            keep_out: 0.2,
            interferer_rcs: 0.1,
            guard_db: 10.0,
            clutter_paths: (3, 8),
            clutter_power: (1e-3, 1.0),
            clutter_delay: (5e-9, 60e-9),
            cfo: 1e3,
            target_rcs: DEFAULT_TARGET_RCS,
            noise: NoisePower {
                reference: 1e-4,
                surveillance: [DEFAULT_SURVEILLANCE_NOISE; 2],
            },
        }
    }
}

/// Processing settings used for dataset artifacts: a 256-bin Doppler axis and
/// a short canceller, which suffice because every path at desk scale lies
/// within one sample at [`DESK_SAMPLE_RATE`].
pub fn dataset_pipeline() -> PipelineConfig {
    PipelineConfig {
        clutter: Some(ClutterCancelConfig {
            taps: 4,
            regularization: 1e-9,
        }),
        caf: CafConfig {
            cit: 0.1,
            doppler_bins: 256,
            delay_search: 1,
            ..CafConfig::default()
        },
        ..PipelineConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub samples_per_class: usize,
    /// Detection windows, seconds. Each sample lasts the longest window.
    pub windows: Vec<f64>,
    /// Counting classes (respirations per 10 s).
    pub classes: Vec<u32>,
    /// Train fraction.
    pub split: f64,
    pub folds: usize,
    /// Target to closest surveillance receiver, meters.
    pub closest_distance: f64,
    pub master_seed: u64,
    /// Also write the three IQ channels as PRIQ (large).
    pub write_iq: bool,
    pub sample_rate: f64,
    pub randomization: Randomization,
    pub pipeline: PipelineConfig,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self::detection(0)
    }
}

impl DatasetSpec {
    pub fn detection(master_seed: u64) -> Self {
        Self {
            kind: DatasetKind::Detection,
            samples_per_class: 200,
            windows: DETECTION_WINDOWS.to_vec(),
            classes: COUNTING_CLASSES.to_vec(),
            split: 0.8,
            folds: 5,
            closest_distance: 0.3,
            master_seed,
            write_iq: false,
            sample_rate: DESK_SAMPLE_RATE,
            randomization: Randomization::default(),
            pipeline: dataset_pipeline(),
        }
    }

    pub fn counting(master_seed: u64) -> Self {
        Self {
            kind: DatasetKind::Counting,
            windows: vec![10.0],
            ..Self::detection(master_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples_per_class < 1 {
            return Err(Error::Config("samples_per_class must be >= 1".into()));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::Config(format!("split {} outside (0, 1)", self.split)));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be >= 2".into()));
        }
        if self.kind == DatasetKind::Counting && self.classes.is_empty() {
            return Err(Error::Config("counting dataset needs at least one class".into()));
        }
        if self.windows.is_empty() || self.windows.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config("windows must be positive and nonempty".into()));
        }
        if !(self.closest_distance > 0.0) {
            return Err(Error::Config("closest_distance must be positive".into()));
        }
        Ok(())
    }

    /// Seconds per sample.
    pub fn duration(&self) -> f64 {
        match self.kind {
            DatasetKind::Detection => self.windows.iter().copied().fold(0.0, f64::max),
            DatasetKind::Counting => 10.0,
        }
    }

    /// Class labels in generation order: `[0, 1]` (absent, present) for
    /// detection, the respiration counts for counting.
    pub fn labels(&self) -> Vec<u32> {
        match self.kind {
            DatasetKind::Detection => vec![0, 1],
            DatasetKind::Counting => self.classes.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Three-channel IQ paths: `[ref, sur1, sur2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub label: u32,
    pub seed: u64,
    /// Ground-truth breathing rate, Hz (absent for detection negatives).
    pub rate: Option<f64>,
    pub scenario_path: String,
    pub iq_paths: Vec<String>,
    pub spectrogram_paths: Vec<String>,
    pub cfar_paths: Vec<String>,
    pub threshold_paths: Vec<String>,
    pub fold: usize,
    pub split: Split,
    /// Interferer-over-target CAF energy outside +-1 Hz (smaller of the two
    /// channels), dB; absent without a target.
    pub guard_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub spec: DatasetSpec,
    pub config_hash: String,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let m: Self = formats::read_json(path)?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("unsupported manifest version {}", m.format_version),
            });
        }
        Ok(m)
    }
}

/// Train and test entry ids of one cross-validation fold.
pub fn kfold(manifest: &DatasetManifest, fold: usize) -> Result<(Vec<String>, Vec<String>)> {
    if fold >= manifest.spec.folds {
        return Err(Error::Config(format!(
            "fold {fold} out of range for {} folds",
            manifest.spec.folds
        )));
    }
    let (test, train): (Vec<&ManifestEntry>, Vec<&ManifestEntry>) =
        manifest.entries.iter().partition(|e| e.fold == fold);
    Ok((
        train.into_iter().map(|e| e.id.clone()).collect(),
        test.into_iter().map(|e| e.id.clone()).collect(),
    ))
}

/// Fold and split tags for `per_class` samples of each of `classes` classes,
/// indexed `[class][index]`. Folds are dealt round-robin within each class;
/// the train split takes the first `round(split * total)` entries in
/// (index, class) order so both splits stay class-balanced.
pub fn assign_folds(classes: usize, per_class: usize, folds: usize, split: f64) -> Vec<Vec<(usize, Split)>> {
    let total = classes * per_class;
    let n_train = (split * total as f64).round() as usize;
    (0..classes)
        .map(|c| {
            (0..per_class)
                .map(|i| {
                    let order = i * classes + c;
                    let s = if order < n_train { Split::Train } else { Split::Test };
                    (i % folds, s)
                })
                .collect()
        })
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    (lo.ln() + (hi.ln() - lo.ln()) * rng.gen::<f64>()).exp()
}

/// Random waypoint walk inside the square area around `center`, avoiding the
/// keep-out discs around `avoid`.
fn random_walk(rng: &mut ChaCha8Rng, center: Vec3, avoid: &[Vec3], duration: f64, r: &Randomization) -> Vec<Waypoint> {
    let half = r.area / 2.0;
    let inside = |p: Vec3| {
        (p[0] - center[0]).abs() <= half
            && (p[1] - center[1]).abs() <= half
            && avoid.iter().all(|&a| scene::distance(a, p) > r.keep_out)
    };
    let draw_point = |rng: &mut ChaCha8Rng| loop {
        let p = [
            center[0] + uniform(rng, (-half, half)),
            center[1] + uniform(rng, (-half, half)),
            center[2],
        ];
        if inside(p) {
            return p;
        }
    };
    // The straight leg must also stay clear of the keep-out discs.
    let leg_clear = |a: Vec3, b: Vec3| {
        (0..=20).all(|i| inside(scene::add(a, scene::scale(scene::sub(b, a), i as f64 / 20.0))))
    };
    let mut t = 0.0;
    let mut pos = draw_point(rng);
    let mut out = vec![Waypoint { time: 0.0, position: pos }];
    while t < duration {
        let speed = uniform(rng, r.speed);
        let next = loop {
            let heading = uniform(rng, (0.0, 2.0 * PI));
            let len = uniform(rng, (0.5, 2.0));
            let p = [pos[0] + len * heading.cos(), pos[1] + len * heading.sin(), pos[2]];
            if leg_clear(pos, p) {
                break p;
            }
        };
        t += scene::distance(pos, next) / speed;
        pos = next;
        out.push(Waypoint { time: t, position: pos });
    }
    out
}

fn random_clutter(rng: &mut ChaCha8Rng, r: &Randomization) -> Vec<ClutterPath> {
    let n = rng.gen_range(r.clutter_paths.0..=r.clutter_paths.1);
    (0..n)
        .map(|_| ClutterPath {
            attenuation: Complex64::from_polar(
                log_uniform(rng, r.clutter_power).sqrt(),
                uniform(rng, (0.0, 2.0 * PI)),
            ),
            delay: uniform(rng, r.clutter_delay),
        })
        .collect()
}

/// Randomized scenario for one dataset entry, before the interference guard.
pub fn sample_scenario(spec: &DatasetSpec, label: u32, seed: u64) -> Scenario {
    let r = &spec.randomization;
    let mut rng = stream(seed, &[]);
    let layout = DeskLayout::new(spec.closest_distance);
    let duration = spec.duration();
    let rate = match spec.kind {
        DatasetKind::Detection if label == 0 => None,
        DatasetKind::Detection => Some(uniform(&mut rng, r.detection_rate)),
        DatasetKind::Counting => {
            Some(label as f64 / 10.0 + uniform(&mut rng, (-r.rate_jitter, r.rate_jitter)))
        }
    };
    let target = rate.map(|rate| BreathingTarget {
        position: layout.target,
        amplitude: uniform(&mut rng, r.amplitude),
        rate,
        phase: uniform(&mut rng, (0.0, 2.0 * PI)),
        rcs_gain: r.target_rcs,
    });
    let avoid = [layout.target, layout.tx, layout.ref_rx, layout.sur_rx[0], layout.sur_rx[1]];
    let waypoints = random_walk(&mut rng, layout.target, &avoid, duration, r);
    let clutter = [random_clutter(&mut rng, r), random_clutter(&mut rng, r)];
    let cfo = uniform(&mut rng, (-r.cfo, r.cfo));
    Scenario {
        waveform: WaveformConfig {
            sample_rate: spec.sample_rate,
            seed: rng.gen(),
            ..WaveformConfig::default()
        },
        tx_pos: layout.tx,
        ref_rx_pos: layout.ref_rx,
        sur_rx_pos: layout.sur_rx,
        target,
        interferer: Some(Interferer {
            waypoints,
            rcs_gain: r.interferer_rcs,
        }),
        clutter,
        ref_attenuation: Complex64::new(1.0, 0.0),
        ref_delay: scene::distance(layout.tx, layout.ref_rx) / scene::SPEED_OF_LIGHT,
        cfo,
        noise_power: r.noise,
        duration,
    }
}

/// CAF energy outside +-1 Hz of `sur` against `reference`, without clutter
/// cancellation.
fn moving_energy(reference: &IqBuffer, sur: &IqBuffer, caf: &CafConfig) -> Result<f64> {
    let map = caf_map(reference, sur, 0, None, caf)?;
    let outside: Vec<usize> = (0..map.cols).filter(|&c| map.doppler_axis[c].abs() > 1.0).collect();
    Ok((0..map.rows)
        .map(|r| outside.iter().map(|&c| map.get(r, c).norm_sqr()).sum::<f64>())
        .sum())
}

/// Synthesizes `scn` after raising its interferer gain until the interferer's
/// CAF energy outside +-1 Hz is at least `guard_db` above the target's in
/// both surveillance channels (each mover rendered alone against a clean
/// reference). Returns the updated scenario, its channels and the achieved
/// margin in dB (`None` without both a target and an interferer).
///
/// Rendering is linear in the interferer gain, so the movers are rendered
/// once and the interferer part is rescaled; the result equals
/// [`synthesize_channels`] of the returned scenario up to rounding.
pub fn guarded_channels(scn: &Scenario, guard_db: f64, caf: &CafConfig) -> Result<(Scenario, Channels, Option<f64>)> {
    if scn.target.is_none() || scn.interferer.is_none() {
        return Ok((scn.clone(), synthesize_channels(scn)?, None));
    }
    let syn = Synthesizer::new(scn)?;
    let clean_ref = syn.render(0, Components::NONE);
    let only = |target: bool| Components { target, interferer: !target, ..Components::NONE };
    let mut target = Vec::with_capacity(2);
    let mut intf = Vec::with_capacity(2);
    let mut ratio = f64::INFINITY;
    for ch in 1..=2 {
        let t = syn.render(ch, only(true));
        let i = syn.render(ch, only(false));
        let (et, ei) = (moving_energy(&clean_ref, &t, caf)?, moving_energy(&clean_ref, &i, caf)?);
        ratio = ratio.min(ei / et);
        target.push(t);
        intf.push(i);
    }
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(Error::Config("interference guard: degenerate echo energies".into()));
    }
    let need = 10f64.powf(guard_db / 10.0);
    // Echo energy scales with the square of the gain.
    let g = if ratio < need { (need / ratio).sqrt() * (1.0 + 1e-9) } else { 1.0 };
    let mut out = scn.clone();
    if let Some(i) = out.interferer.as_mut() {
        i.rcs_gain *= g;
    }
    let rest = Components { clutter: true, noise: true, ..Components::NONE };
    let mut sur = Vec::with_capacity(2);
    for ch in 1..=2 {
        let mut buf = syn.render(ch, rest);
        for ((v, t), i) in buf.samples.iter_mut().zip(&target[ch - 1].samples).zip(&intf[ch - 1].samples) {
            *v += t + i * g;
        }
        syn.apply_cfo(&mut buf.samples);
        sur.push(buf);
    }
    let s2 = sur.pop().unwrap();
    let s1 = sur.pop().unwrap();
    let channels = Channels {
        reference: syn.render(0, Components::ALL),
        surveillance: [s1, s2],
    };
    Ok((out, channels, Some(10.0 * (ratio * g * g).log10())))
}

/// Guarded scenario and channels of one entry.
pub fn entry_channels(spec: &DatasetSpec, label: u32, seed: u64) -> Result<(Scenario, Channels, Option<f64>)> {
    let scn = sample_scenario(spec, label, seed);
    guarded_channels(&scn, spec.randomization.guard_db, &spec.pipeline.caf)
}

pub fn entry_seed(master_seed: u64, label: u32, index: usize) -> u64 {
    derive_seed(master_seed, &[TAG_SAMPLE, label as u64, index as u64])
}

fn entry_id(spec: &DatasetSpec, label: u32, index: usize) -> String {
    match spec.kind {
        DatasetKind::Detection => {
            format!("{}_{index:04}", if label == 1 { "present" } else { "absent" })
        }
        DatasetKind::Counting => format!("count{label}_{index:04}"),
    }
}

fn rel(parts: &[&str]) -> String {
    parts.join("/")
}

/// Synthesizes, processes and writes one entry; returns its manifest record
/// without fold/split tags filled in.
fn generate_entry(
    spec: &DatasetSpec,
    out_dir: &Path,
    label: u32,
    index: usize,
    config_hash: &str,
    tags: (usize, Split),
) -> Result<ManifestEntry> {
    let id = entry_id(spec, label, index);
    let seed = entry_seed(spec.master_seed, label, index);
    let (scn, ch, guard_db) = entry_channels(spec, label, seed)?;
    let scenario_hash = scn.content_hash();
    let scenario_path = rel(&["entries", &id, "scenario.json"]);
    formats::write_json(&out_dir.join(&scenario_path), &scn)?;

    let mut iq_paths = Vec::new();
    if spec.write_iq {
        for (name, buf) in [("ref", &ch.reference), ("sur1", &ch.surveillance[0]), ("sur2", &ch.surveillance[1])] {
            let p = rel(&["entries", &id, &format!("{name}.priq")]);
            let full = out_dir.join(&p);
            formats::write_priq(&full, buf)?;
            formats::write_json(
                &formats::sidecar_path(&full),
                &IqSidecar {
                    channel: name.into(),
                    sample_rate: buf.sample_rate,
                    sample_count: buf.len() as u64,
                    scenario_hash: scenario_hash.clone(),
                    config_hash: config_hash.to_string(),
                },
            )?;
            iq_paths.push(p);
        }
    }

    let out = crate::pipeline::run_pipeline(&ch, &spec.pipeline)?;
    let (mut spectrogram_paths, mut cfar_paths, mut threshold_paths) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..2 {
        let s = rel(&["entries", &id, &format!("caf_sur{}.psgm", i + 1)]);
        let c = rel(&["entries", &id, &format!("cfar_sur{}.psgm", i + 1)]);
        let t = rel(&["entries", &id, &format!("threshold_sur{}.psgm", i + 1)]);
        formats::write_doppler_map(&out_dir.join(&s), &out.maps[i], PayloadKind::Complex, &scenario_hash, config_hash)?;
        formats::write_cfar_map(
            &out_dir.join(&c),
            &out_dir.join(&t),
            &out.cfar[i],
            &out.maps[i],
            &scenario_hash,
            config_hash,
        )?;
        spectrogram_paths.push(s);
        cfar_paths.push(c);
        threshold_paths.push(t);
    }
    Ok(ManifestEntry {
        id,
        label,
        seed,
        rate: scn.target.map(|t| t.rate),
        scenario_path,
        iq_paths,
        spectrogram_paths,
        cfar_paths,
        threshold_paths,
        fold: tags.0,
        split: tags.1,
        guard_db,
    })
}

/// Generates every entry of `spec` under `out_dir` and writes the manifest.
///
/// An [`INCOMPLETE_MARKER`] file exists in `out_dir` until the manifest has
/// been written, so a failed run is recognizable.
pub fn generate(spec: &DatasetSpec, out_dir: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    spec.pipeline.caf.cit_samples(spec.sample_rate)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let marker = out_dir.join(INCOMPLETE_MARKER);
    fs::write(&marker, b"").map_err(|e| Error::io(&marker, e))?;

    let labels = spec.labels();
    let tags = assign_folds(labels.len(), spec.samples_per_class, spec.folds, spec.split);
    let config_hash = spec.pipeline.config_hash();
    let jobs: Vec<(usize, u32, usize)> = labels
        .iter()
        .enumerate()
        .flat_map(|(ci, &l)| (0..spec.samples_per_class).map(move |i| (ci, l, i)))
        .collect();
    let run = |&(ci, label, i): &(usize, u32, usize)| {
        generate_entry(spec, out_dir, label, i, &config_hash, tags[ci][i])
    };
    #[cfg(feature = "parallel")]
    let results: Vec<Result<ManifestEntry>> = {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<ManifestEntry>> = jobs.iter().map(run).collect();
    let entries = results.into_iter().collect::<Result<Vec<_>>>()?;

    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        spec: spec.clone(),
        config_hash,
        entries,
    };
    formats::write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    Ok(manifest)
}

/// Resolves a manifest-relative path.
pub fn resolve(root: &Path, rel: &str) -> PathBuf {
    root.join(rel)
}
