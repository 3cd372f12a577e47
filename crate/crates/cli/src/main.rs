//! Command-line driver: simulate transits, compute cepstrograms, estimate
//! multipath delays and run parameter sweeps.

mod grid;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cepstral_tde::cepstrum::{EstimationMethod, SubtractionFactor};
use cepstral_tde::eval::{
    mae, predicted_delays, run_estimators, sweep_snr, sweep_subtraction_factor, AnalysisConfig,
    GroundTruthTrack, MaeReport, MeanMode, PreparedRecording, SnrSweepConfig,
};
use cepstral_tde::io::{
    read_dataset_manifest, read_track_csv, read_wav, write_cepstrogram_csv, write_estimates_csv,
    write_json, write_mae_csv, write_sweep_csv, write_track_csv, write_truth_csv, write_wav,
    Scenario, WavEncoding,
};
use cepstral_tde::signal::WindowKind;
use cepstral_tde::sim::EnvironmentModel;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "cepstral-tde",
    version,
    about = "Multipath time delay estimation with the power cepstrum"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesise a transit recording and its ground truth from a scenario.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write 16-bit PCM instead of 32-bit float.
        #[arg(long)]
        pcm16: bool,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Write the cepstrogram of a recording as a CSV matrix.
    Cepstrogram {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Subtract the mean cepstrum before writing.
        #[arg(long)]
        subtract: bool,
        /// Highest quefrency written, in microseconds.
        #[arg(long, default_value_t = 300.0)]
        q_max_out_us: f64,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Per-frame delay estimates, plus MAE when a range log is given.
    Estimate {
        /// Recording to analyse.
        #[arg(long, required_unless_present = "dataset", conflicts_with = "dataset")]
        wav: Option<PathBuf>,
        /// Range log (`time_s,range_m`) for the recording.
        #[arg(long, requires = "wav")]
        track: Option<PathBuf>,
        /// CSV listing `wav,track` pairs; MAE is pooled over all frames.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Scenario supplying the environment geometry (defaults otherwise).
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Estimators to run; repeat or comma-separate.
        #[arg(
            long = "method",
            value_delimiter = ',',
            default_value = "cepstrum-subtracted"
        )]
        methods: Vec<EstimationMethod>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// MAE against the subtraction factor on a simulated transit.
    SweepA {
        #[arg(long)]
        scenario: PathBuf,
        /// `start:step:stop` or a comma list.
        #[arg(long, default_value = "0:0.25:2.5")]
        grid: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// MAE against SNR on a simulated transit.
    SweepSnr {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "-15:3:15", allow_hyphen_values = true)]
        grid: String,
        /// Noise realisations averaged per grid point.
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "cepstrum,cepstrum-subtracted,autocorrelation"
        )]
        methods: Vec<EstimationMethod>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
}

#[derive(Args)]
struct SeedArg {
    /// Master seed; overrides the scenario's seed.
    #[arg(long, env = "CEPSTRAL_TDE_SEED")]
    seed: Option<u64>,
}

#[derive(Args)]
struct AnalysisArgs {
    #[arg(long, default_value_t = 0.1)]
    frame_len_s: f64,
    /// Hop between frames; defaults to the frame length.
    #[arg(long)]
    hop_s: Option<f64>,
    #[arg(long, default_value_t = WindowKind::Hann)]
    window: WindowKind,
    /// Transform length; next power of two above the frame by default.
    #[arg(long)]
    nfft: Option<usize>,
    #[arg(long, default_value_t = 1e-12)]
    floor_rel: f64,
    #[arg(long, default_value_t = 40.0)]
    q_min_us: f64,
    #[arg(long, default_value_t = 2000.0)]
    q_max_us: f64,
    /// Cepstrum subtraction factor.
    #[arg(long, default_value_t = 1.5)]
    a: f64,
    /// Use a trailing mean over this many frames instead of the whole recording.
    #[arg(long)]
    trailing: Option<usize>,
}

impl AnalysisArgs {
    fn config(&self) -> Result<AnalysisConfig> {
        let cfg = AnalysisConfig {
            frame_len_s: self.frame_len_s,
            hop_s: self.hop_s.unwrap_or(self.frame_len_s),
            window: self.window,
            nfft: self.nfft,
            floor_rel: self.floor_rel,
            q_min_s: self.q_min_us * 1e-6,
            q_max_s: self.q_max_us * 1e-6,
            factor: SubtractionFactor::scalar(self.a)?,
            mean_mode: self.trailing.map_or(MeanMode::Full, MeanMode::Trailing),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn manifest(command: &str, extra: serde_json::Value) -> serde_json::Value {
    let mut m = json!({
        "tool": "cepstral-tde",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
    });
    if let (Some(m), serde_json::Value::Object(extra)) = (m.as_object_mut(), extra) {
        m.extend(extra);
    }
    m
}

/// `<file>.manifest.json` next to a single-file output.
fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}

fn simulate(scenario_path: &Path, out: &Path, pcm16: bool, seed: Option<u64>) -> Result<()> {
    let scenario = Scenario::load(scenario_path)?;
    let run = scenario.simulate(seed)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let encoding = if pcm16 {
        WavEncoding::Pcm16
    } else {
        WavEncoding::Float32
    };
    write_wav(out.join("recording.wav"), run.recording(), encoding)?;
    write_truth_csv(out.join("truth.csv"), &GroundTruthTrack::from(&run.clean))?;
    write_track_csv(out.join("track.csv"), &scenario.track()?)?;
    write_json(
        out.join("manifest.json"),
        &manifest(
            "simulate",
            json!({
                "seed": run.seed,
                "encoding": encoding,
                "scenario": scenario,
                "frames": run.clean.true_delays_s.len(),
                "files": ["recording.wav", "truth.csv", "track.csv"],
            }),
        ),
    )?;
    println!(
        "simulated {} frames ({:.1} s) with seed {} into {}",
        run.clean.true_delays_s.len(),
        run.recording().duration_s(),
        run.seed,
        out.display()
    );
    Ok(())
}

fn cepstrogram(
    wav: &Path,
    out: &Path,
    subtract: bool,
    q_max_out_us: f64,
    analysis: &AnalysisArgs,
) -> Result<()> {
    let recording = read_wav(wav)?;
    let cfg = analysis.config()?;
    let prepared = PreparedRecording::new(&recording, &cfg)?;
    let step_us = prepared.cepstrogram().quefrency_step_s * 1e6;
    if subtract {
        let cg = prepared.subtracted_cepstrogram(cfg.mean_mode, &cfg.factor)?;
        write_cepstrogram_csv(out, &cg, q_max_out_us)?;
    } else {
        write_cepstrogram_csv(out, prepared.cepstrogram(), q_max_out_us)?;
    }
    write_json(
        sidecar(out),
        &manifest(
            "cepstrogram",
            json!({
                "wav": wav,
                "subtracted": subtract,
                "q_max_out_us": q_max_out_us,
                "quefrency_step_us": step_us,
                "config": cfg,
            }),
        ),
    )?;
    println!(
        "{} frames, quefrency step {step_us:.2} us, written to {}",
        prepared.len(),
        out.display()
    );
    Ok(())
}

/// Ground truth at the frame start times of `recording`.
fn truth_for(
    track_path: &Path,
    env: &EnvironmentModel,
    frame_times: &[f64],
) -> Result<GroundTruthTrack> {
    let track = read_track_csv(track_path)?;
    Ok(predicted_delays(&track.resample(frame_times)?, env))
}

fn environment(scenario: Option<&Path>) -> Result<EnvironmentModel> {
    Ok(match scenario {
        Some(p) => Scenario::load(p)?.environment,
        None => EnvironmentModel::default(),
    })
}

fn print_reports(reports: &[MaeReport]) {
    for r in reports {
        println!(
            "{:<20} MAE {:>9.2} us over {} frames ({} excluded)",
            r.method.as_str(),
            r.mae_s * 1e6,
            r.frames_used,
            r.frames_excluded
        );
    }
}

fn estimate_one(
    wav: &Path,
    track: Option<&Path>,
    env: &EnvironmentModel,
    methods: &[EstimationMethod],
    cfg: &AnalysisConfig,
) -> Result<(
    Vec<cepstral_tde::eval::DelayEstimateSeries>,
    Option<GroundTruthTrack>,
)> {
    let recording = read_wav(wav).with_context(|| format!("reading {}", wav.display()))?;
    let frames = cepstral_tde::signal::frame_signal(&recording, cfg.frame_len_s, cfg.hop_s)?;
    let times = frames.start_times_s().to_vec();
    let truth = match track {
        Some(t) => Some(truth_for(t, env, &times)?),
        None => None,
    };
    // without a track the estimators still need a truth of the right length
    let placeholder = GroundTruthTrack {
        frame_times_s: times.clone(),
        true_delays_s: vec![0.0; times.len()],
    };
    let series = run_estimators(
        &recording,
        truth.as_ref().unwrap_or(&placeholder),
        methods,
        cfg,
    )?;
    Ok((series, truth))
}

fn estimate(
    wav: Option<&Path>,
    track: Option<&Path>,
    dataset: Option<&Path>,
    scenario: Option<&Path>,
    methods: &[EstimationMethod],
    out: &Path,
    analysis: &AnalysisArgs,
) -> Result<()> {
    let cfg = analysis.config()?;
    let env = environment(scenario)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let entries: Vec<(PathBuf, Option<PathBuf>)> = match (wav, dataset) {
        (Some(w), _) => vec![(w.to_path_buf(), track.map(Path::to_path_buf))],
        (None, Some(d)) => read_dataset_manifest(d)?
            .into_iter()
            .map(|e| (e.wav, Some(e.track)))
            .collect(),
        (None, None) => bail!("either --wav or --dataset is required"),
    };
    let single = entries.len() == 1 && dataset.is_none();
    // pooled absolute-error sums per method
    let mut pooled: Vec<(f64, usize, usize)> = vec![(0.0, 0, 0); methods.len()];
    let mut any_truth = false;
    let mut files = Vec::new();
    for (wav, track) in &entries {
        let (series, truth) = estimate_one(wav, track.as_deref(), &env, methods, &cfg)?;
        let name = if single {
            "estimates.csv".to_string()
        } else {
            format!(
                "estimates_{}.csv",
                wav.file_stem().unwrap_or_default().to_string_lossy()
            )
        };
        write_estimates_csv(out.join(&name), &series)?;
        files.push(name);
        if let Some(truth) = truth {
            any_truth = true;
            for (k, s) in series.iter().enumerate() {
                let r = mae(s, &truth)?;
                if r.frames_used > 0 {
                    pooled[k].0 += r.mae_s * r.frames_used as f64;
                }
                pooled[k].1 += r.frames_used;
                pooled[k].2 += r.frames_excluded;
            }
        }
    }
    if any_truth {
        let reports: Vec<MaeReport> = methods
            .iter()
            .zip(&pooled)
            .map(|(m, (sum, used, excluded))| MaeReport {
                method: *m,
                mae_s: if *used > 0 {
                    sum / *used as f64
                } else {
                    f64::NAN
                },
                frames_used: *used,
                frames_excluded: *excluded,
            })
            .collect();
        write_mae_csv(out.join("mae.csv"), &reports)?;
        files.push("mae.csv".into());
        print_reports(&reports);
    }
    write_json(
        out.join("estimate.manifest.json"),
        &manifest(
            "estimate",
            json!({
                "inputs": entries.iter().map(|(w, t)| json!({"wav": w, "track": t})).collect::<Vec<_>>(),
                "environment": env,
                "methods": methods.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
                "config": cfg,
                "files": files,
            }),
        ),
    )?;
    println!("estimates written to {}", out.display());
    Ok(())
}

fn sweep_a(
    scenario_path: &Path,
    grid: &str,
    out: &Path,
    seed: Option<u64>,
    analysis: &AnalysisArgs,
) -> Result<()> {
    let scenario = Scenario::load(scenario_path)?;
    let cfg = analysis.config()?;
    let grid = grid::parse_grid(grid)?;
    let run = scenario.simulate(seed)?;
    let truth = GroundTruthTrack::from(&run.clean);
    let result = sweep_subtraction_factor(run.recording(), &truth, &grid, &cfg)?;
    write_sweep_csv(out, &result)?;
    write_json(
        sidecar(out),
        &manifest(
            "sweep-a",
            json!({"seed": run.seed, "scenario": scenario, "config": cfg, "grid": result.grid}),
        ),
    )?;
    for p in &result.points {
        println!(
            "a = {:<6} MAE {:>9.2} us",
            p.grid_value,
            p.report.mae_s * 1e6
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sweep_snr_cmd(
    scenario_path: &Path,
    grid: &str,
    reps: usize,
    methods: &[EstimationMethod],
    out: &Path,
    seed: Option<u64>,
    analysis: &AnalysisArgs,
) -> Result<()> {
    let mut scenario = Scenario::load(scenario_path)?;
    // the sweep adds its own noise
    scenario.noise.snr_db = None;
    let cfg = analysis.config()?;
    let run = scenario.simulate(seed)?;
    let truth = GroundTruthTrack::from(&run.clean);
    let band = scenario.band_hz();
    let sweep = SnrSweepConfig {
        noise: scenario.noise_model(run.seed)?,
        grid_db: grid::parse_grid(grid)?,
        repetitions: reps,
        band_hz: band,
        reference_power: Some(cepstral_tde::eval::direct_path_power(
            &run.clean.recording,
            scenario.echo.alpha,
            band,
        )?),
        master_seed: run.seed,
    };
    let result = sweep_snr(&run.clean.recording, &truth, &sweep, methods, &cfg)?;
    write_sweep_csv(out, &result)?;
    write_json(
        sidecar(out),
        &manifest(
            "sweep-snr",
            json!({
                "seed": run.seed,
                "scenario": scenario,
                "config": cfg,
                "grid": result.grid,
                "repetitions": reps,
                "methods": methods.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
            }),
        ),
    )?;
    for p in &result.points {
        println!(
            "snr = {:<6} {:<20} MAE {:>9.2} us",
            p.grid_value,
            p.report.method.as_str(),
            p.report.mae_s * 1e6
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            scenario,
            out,
            pcm16,
            seed,
        } => simulate(&scenario, &out, pcm16, seed.seed),
        Command::Cepstrogram {
            wav,
            out,
            subtract,
            q_max_out_us,
            analysis,
        } => cepstrogram(&wav, &out, subtract, q_max_out_us, &analysis),
        Command::Estimate {
            wav,
            track,
            dataset,
            scenario,
            methods,
            out,
            analysis,
        } => estimate(
            wav.as_deref(),
            track.as_deref(),
            dataset.as_deref(),
            scenario.as_deref(),
            &methods,
            &out,
            &analysis,
        ),
        Command::SweepA {
            scenario,
            grid,
            out,
            seed,
            analysis,
        } => sweep_a(&scenario, &grid, &out, seed.seed, &analysis),
        Command::SweepSnr {
            scenario,
            grid,
            reps,
            methods,
            out,
            seed,
            analysis,
        } => sweep_snr_cmd(&scenario, &grid, reps, &methods, &out, seed.seed, &analysis),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
