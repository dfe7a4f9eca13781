use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use breathradar::dataset::{self, DatasetKind, DatasetManifest, DatasetSpec};
use breathradar::estimator::DETECTION_WINDOWS;
use breathradar::eval;
use breathradar::formats::{self, IqSidecar, PayloadKind};
use breathradar::pipeline::{run_pipeline, RunConfig};
use breathradar::synth::{synthesize_channels, Channels};
use breathradar::{Error, IqBuffer};

#[derive(Parser)]
#[command(name = "breathradar", version, about = "Passive mmWave respiration sensing simulator and pipeline")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the reference and surveillance channels of a scenario.
    Synth {
        /// Run configuration JSON ({"scenario": .., "pipeline": ..}).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Waveform and noise seed.
        #[arg(long, env = "BREATHRADAR_SEED")]
        seed: Option<u64>,
        /// Target to closest surveillance receiver, meters.
        #[arg(long)]
        distance: Option<f64>,
    },
    /// Clutter cancellation, CAF, CFAR and respiration estimation.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Read ref/sur1/sur2 PRIQ files from this directory instead of synthesizing.
        #[arg(long)]
        iq: Option<PathBuf>,
        #[arg(long, env = "BREATHRADAR_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        distance: Option<f64>,
        /// Sensing window, seconds (default: every detection window that fits).
        #[arg(long)]
        window: Option<f64>,
    },
    /// Generate a labeled dataset and its manifest.
    Dataset {
        /// Dataset spec JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Dataset kind when no config is given.
        #[arg(long, value_parser = ["detection", "counting"], default_value = "detection")]
        kind: String,
        #[arg(long, env = "BREATHRADAR_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        distance: Option<f64>,
        #[arg(long)]
        samples_per_class: Option<usize>,
    },
    /// Score the deterministic estimator on a dataset.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run configuration whose estimator settings replace the manifest's.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fit a logistic curve to accuracy-versus-time points.
    FitLogistic {
        /// CSV with `time,accuracy` rows (header optional) or a JSON array of pairs.
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

type CliResult = Result<(), Error>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}

fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::Synth { config, out, seed, distance } => {
            let cfg = run_config(config.as_deref(), seed, distance)?;
            let ch = synthesize_channels(&cfg.scenario)?;
            write_channels(&out, &cfg, &ch)
        }
        Command::Pipeline { config, out, iq, seed, distance, window } => {
            let cfg = run_config(config.as_deref(), seed, distance)?;
            let ch = match iq {
                Some(dir) => read_channels(&dir)?,
                None => synthesize_channels(&cfg.scenario)?,
            };
            pipeline(&out, &cfg, &ch, window)
        }
        Command::Dataset { config, out, kind, seed, distance, samples_per_class } => {
            let mut spec: DatasetSpec = match config {
                Some(p) => formats::read_json(&p)?,
                None if kind == "counting" => DatasetSpec::counting(0),
                None => DatasetSpec::detection(0),
            };
            if let Some(s) = seed {
                spec.master_seed = s;
            }
            if let Some(d) = distance {
                spec.closest_distance = d;
            }
            if let Some(n) = samples_per_class {
                spec.samples_per_class = n;
            }
            let m = dataset::generate(&spec, &out)?;
            println!("{} entries written to {}", m.entries.len(), out.display());
            Ok(())
        }
        Command::Eval { manifest, out, config } => {
            let m = DatasetManifest::read(&manifest)?;
            let root = manifest.parent().unwrap_or(Path::new("."));
            let est = match config {
                Some(p) => formats::read_json::<RunConfig>(&p)?.pipeline.estimator,
                None => m.spec.pipeline.estimator,
            };
            match m.spec.kind {
                DatasetKind::Detection => {
                    let r = eval::evaluate_detection(&m, root, &est)?;
                    eval::write_detection_report(&out, &r)?;
                    formats::write_json(&out.join("records.json"), &r.records)?;
                    for w in &r.windows {
                        println!("window {:>4} s  accuracy {:.4}", w.window_s, w.accuracy);
                    }
                    println!(
                        "logistic l={:.4} k={:.4} t0={:.4} rss={:.3e} (constant rss {:.3e})",
                        r.logistic.l, r.logistic.k, r.logistic.t0, r.logistic.rss, r.constant_rss
                    );
                }
                DatasetKind::Counting => {
                    let r = eval::evaluate_counting(&m, root, &est)?;
                    eval::write_counting_report(&out, &r)?;
                    formats::write_json(&out.join("records.json"), &r.records)?;
                    println!("exact-count accuracy {:.4} (within one: {:.4})", r.accuracy, r.within_one);
                }
            }
            Ok(())
        }
        Command::FitLogistic { points, out } => {
            let pts = read_points(&points)?;
            let (fit, constant_rss) = eval::logistic_summary(&pts)?;
            let summary = LogisticSummary { fit, constant_rss };
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if let Some(dir) = out {
                formats::write_json(&dir.join("logistic.json"), &summary)?;
            }
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct LogisticSummary {
    #[serde(flatten)]
    fit: breathradar::estimator::LogisticFit,
    constant_rss: f64,
}

fn run_config(path: Option<&Path>, seed: Option<u64>, distance: Option<f64>) -> Result<RunConfig, Error> {
    let mut cfg: RunConfig = match path {
        Some(p) => formats::read_json(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.scenario.waveform.seed = s;
    }
    if let Some(d) = distance {
        let layout = breathradar::scene::DeskLayout::new(d);
        cfg.scenario.sur_rx_pos = layout.sur_rx;
        cfg.scenario.tx_pos = layout.tx;
        cfg.scenario.ref_rx_pos = layout.ref_rx;
        if let Some(t) = cfg.scenario.target.as_mut() {
            t.position = layout.target;
        }
    }
    Ok(cfg)
}

const CHANNEL_NAMES: [&str; 3] = ["ref", "sur1", "sur2"];

fn write_channels(out: &Path, cfg: &RunConfig, ch: &Channels) -> CliResult {
    let scenario_hash = cfg.scenario.content_hash();
    let config_hash = cfg.pipeline.config_hash();
    formats::write_json(&out.join("scenario.json"), &cfg.scenario)?;
    for (name, buf) in CHANNEL_NAMES.iter().zip([&ch.reference, &ch.surveillance[0], &ch.surveillance[1]]) {
        let path = out.join(format!("{name}.priq"));
        formats::write_priq(&path, buf)?;
        formats::write_json(
            &formats::sidecar_path(&path),
            &IqSidecar {
                channel: name.to_string(),
                sample_rate: buf.sample_rate,
                sample_count: buf.len() as u64,
                scenario_hash: scenario_hash.clone(),
                config_hash: config_hash.clone(),
            },
        )?;
    }
    println!("wrote {} samples per channel to {}", ch.reference.len(), out.display());
    Ok(())
}

fn read_channels(dir: &Path) -> Result<Channels, Error> {
    let read = |name: &str| -> Result<IqBuffer, Error> { formats::read_priq(&dir.join(format!("{name}.priq"))) };
    Ok(Channels {
        reference: read("ref")?,
        surveillance: [read("sur1")?, read("sur2")?],
    })
}

#[derive(Serialize, Deserialize)]
struct WindowResult {
    scenario_hash: String,
    config_hash: String,
    window_s: f64,
    present: bool,
    score: f64,
    count: Option<u32>,
    truth: Option<f64>,
}

fn pipeline(out: &Path, cfg: &RunConfig, ch: &Channels, window: Option<f64>) -> CliResult {
    let scenario_hash = cfg.scenario.content_hash();
    let config_hash = cfg.pipeline.config_hash();
    let res = run_pipeline(ch, &cfg.pipeline)?;
    for i in 0..2 {
        let name = format!("sur{}", i + 1);
        formats::write_doppler_map(
            &out.join(format!("caf_{name}.psgm")),
            &res.maps[i],
            PayloadKind::Complex,
            &scenario_hash,
            &config_hash,
        )?;
        formats::write_cfar_map(
            &out.join(format!("cfar_{name}.psgm")),
            &out.join(format!("threshold_{name}.psgm")),
            &res.cfar[i],
            &res.maps[i],
            &scenario_hash,
            &config_hash,
        )?;
    }
    let span = res.tracks[0].len() as f64 / res.tracks[0].rate;
    let windows: Vec<f64> = match window {
        Some(w) => vec![w],
        None => DETECTION_WINDOWS.iter().copied().filter(|&w| w <= span + 1e-9).collect(),
    };
    let est = &cfg.pipeline.estimator;
    let mut results = Vec::new();
    for w in windows {
        let p = res.presence(w, est)?;
        let count = match res.count(w, est) {
            Ok(c) => Some(c),
            Err(Error::NoRespiration { .. }) => None,
            Err(e) => return Err(e),
        };
        println!(
            "window {w:>4} s  present {}  score {:.2}  count {}",
            p.present,
            p.score,
            count.map_or("-".to_string(), |c| c.to_string())
        );
        results.push(WindowResult {
            scenario_hash: scenario_hash.clone(),
            config_hash: config_hash.clone(),
            window_s: w,
            present: p.present,
            score: p.score,
            count,
            truth: cfg.scenario.target.as_ref().map(|t| t.rate * w),
        });
    }
    formats::write_json(&out.join("result.json"), &results)
}

fn read_points(path: &Path) -> Result<Vec<(f64, f64)>, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    if text.trim_start().starts_with('[') {
        return Ok(serde_json::from_str(&text)?);
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut pts = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        if rec.len() < 2 {
            return Err(Error::Input(format!("{}: expected two columns", path.display())));
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(t), Ok(a)) => pts.push((t, a)),
            // header row
            _ if i == 0 => continue,
            _ => return Err(Error::Input(format!("{}: unparsable row {:?}", path.display(), rec))),
        }
    }
    Ok(pts)
}
