//! Experiment driver: per-frame delay estimation, error against geometric
//! ground truth, and parameter sweeps.
//!
//! MAE pools all compared frames of a recording. Frames whose true delay lies
//! outside the quefrency search window cannot be estimated at all, so they are
//! left out and counted separately.

use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::cepstrum::{
    build_cepstrogram, cepstrum_subtract, estimate_delay_autocorr, mean_cepstrum, median_abs,
    pick_delay, trailing_mean_cepstra, window_bins, Cepstrogram, CepstrumParams, DelayEstimate,
    EstimationMethod, MeanCepstrum, PowerCepstrum, SubtractionFactor,
};
use crate::error::{invalid, Result};
use crate::signal::{
    autocorrelation, frame_signal, FrameSequence, SampledSignal, WindowKind, DEFAULT_FLOOR_REL,
};
use crate::sim::{
    color_noise_samples, derive_seed, in_band_power, mix_with_reference_power, multipath_delay,
    stream, EnvironmentModel, NoiseModel, SimulatedTransit, TransitTrack,
};

/// Which frames feed the mean cepstrum that is subtracted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MeanMode {
    /// Every frame of the recording (two passes over the data).
    #[default]
    Full,
    /// The current frame and up to `n - 1` before it.
    Trailing(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub frame_len_s: f64,
    pub hop_s: f64,
    pub window: WindowKind,
    pub nfft: Option<usize>,
    pub floor_rel: f64,
    pub q_min_s: f64,
    pub q_max_s: f64,
    pub factor: SubtractionFactor,
    pub mean_mode: MeanMode,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            frame_len_s: 0.1,
            hop_s: 0.1,
            window: WindowKind::Hann,
            nfft: None,
            floor_rel: DEFAULT_FLOOR_REL,
            q_min_s: 40e-6,
            q_max_s: 2000e-6,
            factor: SubtractionFactor::default(),
            mean_mode: MeanMode::Full,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_len_s > 0.0 && self.hop_s > 0.0) {
            return Err(invalid("frame length and hop must be positive"));
        }
        if !(self.q_min_s > 0.0 && self.q_max_s > self.q_min_s) {
            return Err(invalid(format!(
                "search window [{}, {}] s must satisfy 0 < q_min < q_max",
                self.q_min_s, self.q_max_s
            )));
        }
        if self.q_max_s >= self.frame_len_s {
            return Err(invalid("search window must end before the frame length"));
        }
        if !(self.floor_rel > 0.0) {
            return Err(invalid("floor_rel must be positive"));
        }
        if let MeanMode::Trailing(0) = self.mean_mode {
            return Err(invalid("trailing mean needs at least one frame"));
        }
        match &self.factor {
            SubtractionFactor::Scalar(a) => SubtractionFactor::scalar(*a).map(|_| ()),
            SubtractionFactor::PerQuefrency(v) => {
                SubtractionFactor::per_quefrency(v.clone()).map(|_| ())
            }
        }
    }

    /// Cepstrum settings, truncated to the search window.
    pub fn cepstrum_params(&self) -> CepstrumParams {
        CepstrumParams {
            window: self.window,
            nfft: self.nfft,
            floor_rel: self.floor_rel,
            max_quefrency_s: Some(self.q_max_s),
        }
    }

    pub fn with_factor(&self, factor: SubtractionFactor) -> Self {
        Self {
            factor,
            ..self.clone()
        }
    }
}

/// True multipath delay for each analysis frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthTrack {
    pub frame_times_s: Vec<f64>,
    pub true_delays_s: Vec<f64>,
}

impl GroundTruthTrack {
    pub fn len(&self) -> usize {
        self.true_delays_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_delays_s.is_empty()
    }
}

impl From<&SimulatedTransit> for GroundTruthTrack {
    fn from(sim: &SimulatedTransit) -> Self {
        Self {
            frame_times_s: sim.frame_times_s.clone(),
            true_delays_s: sim.true_delays_s.clone(),
        }
    }
}

/// Image-source delay at every sample of `track`.
pub fn predicted_delays(track: &TransitTrack, env: &EnvironmentModel) -> GroundTruthTrack {
    GroundTruthTrack {
        frame_times_s: track.times_s.clone(),
        true_delays_s: track
            .ground_ranges_m
            .iter()
            .map(|d| multipath_delay(*d, env).delay_s)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayEstimateSeries {
    pub method: EstimationMethod,
    pub estimates: Vec<DelayEstimate>,
    pub frame_times_s: Vec<f64>,
    pub config: AnalysisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaeReport {
    pub method: EstimationMethod,
    /// NaN when every frame was excluded.
    pub mae_s: f64,
    pub frames_used: usize,
    pub frames_excluded: usize,
}

/// Mean absolute delay error of `series` against `truth`.
pub fn mae(series: &DelayEstimateSeries, truth: &GroundTruthTrack) -> Result<MaeReport> {
    if series.estimates.len() != truth.len() {
        return Err(invalid(format!(
            "{} estimates but {} truth frames",
            series.estimates.len(),
            truth.len()
        )));
    }
    let (lo, hi) = (series.config.q_min_s, series.config.q_max_s);
    let mut sum = 0.0;
    let mut used = 0;
    for (e, t) in series.estimates.iter().zip(&truth.true_delays_s) {
        if *t < lo || *t > hi {
            continue;
        }
        sum += (e.delay_s - t).abs();
        used += 1;
    }
    Ok(MaeReport {
        method: series.method,
        mae_s: if used > 0 {
            sum / used as f64
        } else {
            f64::NAN
        },
        frames_used: used,
        frames_excluded: truth.len() - used,
    })
}

/// A framed recording with its cepstrogram computed once, ready for any number
/// of estimator runs.
pub struct PreparedRecording<'a> {
    frames: FrameSequence<'a>,
    cepstrogram: Cepstrogram,
    config: AnalysisConfig,
}

impl<'a> PreparedRecording<'a> {
    pub fn new(recording: &'a SampledSignal, cfg: &AnalysisConfig) -> Result<Self> {
        cfg.validate()?;
        let frames = frame_signal(recording, cfg.frame_len_s, cfg.hop_s)?;
        let cepstrogram = build_cepstrogram(&frames, &cfg.cepstrum_params())?;
        Ok(Self {
            frames,
            cepstrogram,
            config: cfg.clone(),
        })
    }

    pub fn cepstrogram(&self) -> &Cepstrogram {
        &self.cepstrogram
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    fn check_truth(&self, truth: &GroundTruthTrack) -> Result<()> {
        if truth.len() != self.frames.len() {
            return Err(invalid(format!(
                "recording has {} frames but the truth track has {}",
                self.frames.len(),
                truth.len()
            )));
        }
        Ok(())
    }

    fn series(
        &self,
        method: EstimationMethod,
        estimates: Vec<DelayEstimate>,
        cfg: &AnalysisConfig,
    ) -> DelayEstimateSeries {
        DelayEstimateSeries {
            method,
            estimates,
            frame_times_s: self.frames.start_times_s().to_vec(),
            config: cfg.clone(),
        }
    }

    pub fn plain(&self) -> Result<DelayEstimateSeries> {
        let cfg = &self.config;
        let estimates = self
            .cepstrogram
            .rows
            .iter()
            .map(|c| pick_delay(c, cfg.q_min_s, cfg.q_max_s))
            .collect::<Result<_>>()?;
        Ok(self.series(EstimationMethod::Cepstrum, estimates, cfg))
    }

    /// Mean cepstra for each frame under `mode`.
    pub fn means(&self, mode: MeanMode) -> Result<Means> {
        Ok(match mode {
            MeanMode::Full if self.cepstrogram.is_empty() => Means::Full(MeanCepstrum {
                values: vec![0.0; self.cepstrogram.bins],
                frames_used: 0,
            }),
            MeanMode::Full => {
                Means::Full(mean_cepstrum(&self.cepstrogram, 0..self.cepstrogram.len())?)
            }
            MeanMode::Trailing(m) => Means::Trailing(trailing_mean_cepstra(&self.cepstrogram, m)?),
        })
    }

    /// Subtracted-cepstrum estimates with `factor` against precomputed means.
    pub fn subtracted(
        &self,
        means: &Means,
        factor: &SubtractionFactor,
    ) -> Result<DelayEstimateSeries> {
        let cfg = self.config.with_factor(factor.clone());
        let estimates = self
            .cepstrogram
            .rows
            .iter()
            .enumerate()
            .map(|(m, c)| {
                let s = cepstrum_subtract(c, means.at(m), factor)?;
                let mut e = pick_delay(&s, cfg.q_min_s, cfg.q_max_s)?;
                e.method = EstimationMethod::CepstrumSubtracted;
                Ok(e)
            })
            .collect::<Result<_>>()?;
        Ok(self.series(EstimationMethod::CepstrumSubtracted, estimates, &cfg))
    }

    pub fn autocorrelation(&self) -> Result<DelayEstimateSeries> {
        use rayon::prelude::*;
        let cfg = &self.config;
        let fs = self.frames.sample_rate_hz();
        let frames: Vec<&[f64]> = self.frames.iter().collect();
        let estimates = frames
            .par_iter()
            .map(|f| {
                let ac = autocorrelation(f, cfg.q_max_s, fs)?;
                estimate_delay_autocorr(&ac, cfg.q_min_s, cfg.q_max_s)
            })
            .collect::<Result<_>>()?;
        Ok(self.series(EstimationMethod::Autocorrelation, estimates, cfg))
    }

    pub fn run(&self, method: EstimationMethod) -> Result<DelayEstimateSeries> {
        match method {
            EstimationMethod::Cepstrum => self.plain(),
            EstimationMethod::CepstrumSubtracted => {
                let means = self.means(self.config.mean_mode)?;
                self.subtracted(&means, &self.config.factor)
            }
            EstimationMethod::Autocorrelation => self.autocorrelation(),
        }
    }

    /// Cepstrogram after subtraction of the `mode` mean scaled by `factor`.
    pub fn subtracted_cepstrogram(
        &self,
        mode: MeanMode,
        factor: &SubtractionFactor,
    ) -> Result<Cepstrogram> {
        let means = self.means(mode)?;
        let rows = self
            .cepstrogram
            .rows
            .iter()
            .enumerate()
            .map(|(m, c)| cepstrum_subtract(c, means.at(m), factor))
            .collect::<Result<_>>()?;
        Ok(Cepstrogram {
            rows,
            ..self.cepstrogram.clone()
        })
    }
}

/// Mean cepstrum per frame: one shared mean, or one per frame.
pub enum Means {
    Full(MeanCepstrum),
    Trailing(Vec<MeanCepstrum>),
}

impl Means {
    pub fn at(&self, frame: usize) -> &MeanCepstrum {
        match self {
            Self::Full(m) => m,
            Self::Trailing(v) => &v[frame],
        }
    }
}

/// One estimate series per requested method, in request order.
pub fn run_estimators(
    recording: &SampledSignal,
    truth: &GroundTruthTrack,
    methods: &[EstimationMethod],
    cfg: &AnalysisConfig,
) -> Result<Vec<DelayEstimateSeries>> {
    if methods.is_empty() {
        return Ok(Vec::new());
    }
    let prepared = PreparedRecording::new(recording, cfg)?;
    prepared.check_truth(truth)?;
    methods.iter().map(|m| prepared.run(*m)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    A,
    SnrDb,
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::A => "a",
            Self::SnrDb => "snr_db",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub grid_value: f64,
    pub report: MaeReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    /// Grid-major, then methods in request order.
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    /// MAE of `method` at every grid value.
    pub fn mae_curve(&self, method: EstimationMethod) -> Vec<f64> {
        self.points
            .iter()
            .filter(|p| p.report.method == method)
            .map(|p| p.report.mae_s)
            .collect()
    }
}

/// Sorted, de-duplicated copy of `grid`.
fn normalise_grid(grid: &[f64], name: &str) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(invalid(format!("{name} grid is empty")));
    }
    if let Some(v) = grid.iter().find(|v| !v.is_finite()) {
        return Err(invalid(format!("{name} grid holds a non-finite value {v}")));
    }
    let mut out = grid.to_vec();
    out.sort_by(f64::total_cmp);
    out.dedup();
    if out.len() != grid.len() {
        warn!(
            "{name} grid had {} duplicate values; removed",
            grid.len() - out.len()
        );
    }
    Ok(out)
}

/// MAE of the subtracted cepstrum for each subtraction factor in `grid`. The
/// mean cepstrum is computed once.
pub fn sweep_subtraction_factor(
    recording: &SampledSignal,
    truth: &GroundTruthTrack,
    grid: &[f64],
    cfg: &AnalysisConfig,
) -> Result<SweepResult> {
    let grid = normalise_grid(grid, "subtraction factor")?;
    if let Some(a) = grid.iter().find(|a| **a < 0.0) {
        return Err(invalid(format!("subtraction factor must be >= 0, got {a}")));
    }
    let prepared = PreparedRecording::new(recording, cfg)?;
    prepared.check_truth(truth)?;
    let means = prepared.means(cfg.mean_mode)?;
    let points = grid
        .iter()
        .map(|a| {
            let series = prepared.subtracted(&means, &SubtractionFactor::scalar(*a)?)?;
            Ok(SweepPoint {
                grid_value: *a,
                report: mae(&series, truth)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepResult {
        variable: SweepVariable::A,
        grid,
        points,
    })
}

/// Noise and repetition settings for [`sweep_snr`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnrSweepConfig {
    pub noise: NoiseModel,
    pub grid_db: Vec<f64>,
    /// Noise realisations averaged per grid point.
    pub repetitions: usize,
    pub band_hz: (f64, f64),
    /// SNR numerator; `None` uses the in-band power of the clean recording.
    pub reference_power: Option<f64>,
    pub master_seed: u64,
}

/// Seed of realisation `rep` at grid point `point`.
pub fn snr_point_seed(master: u64, point: usize, rep: usize) -> u64 {
    derive_seed(
        derive_seed(master, stream::SWEEP, point as u64),
        stream::AMBIENT,
        rep as u64,
    )
}

/// MAE per method at each SNR, averaged over the configured repetitions.
pub fn sweep_snr(
    clean: &SampledSignal,
    truth: &GroundTruthTrack,
    sweep: &SnrSweepConfig,
    methods: &[EstimationMethod],
    cfg: &AnalysisConfig,
) -> Result<SweepResult> {
    let grid = normalise_grid(&sweep.grid_db, "SNR")?;
    if sweep.repetitions == 0 {
        return Err(invalid("SNR sweep needs at least one repetition"));
    }
    let reference = match sweep.reference_power {
        Some(p) => p,
        None => in_band_power(clean, sweep.band_hz)?,
    };
    let fs = clean.sample_rate_hz();
    let mut points = Vec::with_capacity(grid.len() * methods.len());
    for (i, snr) in grid.iter().enumerate() {
        let mut sums = vec![0.0; methods.len()];
        let mut first: Vec<Option<MaeReport>> = vec![None; methods.len()];
        for r in 0..sweep.repetitions {
            let noise = color_noise_samples(
                &sweep
                    .noise
                    .with_seed(snr_point_seed(sweep.master_seed, i, r)),
                clean.len(),
                fs,
            )?;
            let noisy = mix_with_reference_power(clean, &noise, reference, *snr, sweep.band_hz)?;
            drop(noise);
            for (k, series) in run_estimators(&noisy, truth, methods, cfg)?
                .iter()
                .enumerate()
            {
                let report = mae(series, truth)?;
                sums[k] += report.mae_s;
                first[k].get_or_insert(report);
            }
        }
        for (k, report) in first.into_iter().enumerate() {
            let mut report = report.expect("one repetition ran");
            report.mae_s = sums[k] / sweep.repetitions as f64;
            points.push(SweepPoint {
                grid_value: *snr,
                report,
            });
        }
    }
    Ok(SweepResult {
        variable: SweepVariable::SnrDb,
        grid,
        points,
    })
}

/// In-band power of the direct path in a recording `s + alpha * s(t - tau)`
/// of a white source, where the cross term averages out.
pub fn direct_path_power(
    recording: &SampledSignal,
    alpha: f64,
    band_hz: (f64, f64),
) -> Result<f64> {
    Ok(in_band_power(recording, band_hz)? / (1.0 + alpha * alpha))
}

/// Strength of the first rahmonic against the cepstrum floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RahmonicContrast {
    /// Largest magnitude within one bin of the true delay.
    pub peak_magnitude: f64,
    /// Median magnitude over the search window.
    pub median_magnitude: f64,
    pub ratio: f64,
}

pub fn rahmonic_contrast(
    c: &PowerCepstrum,
    true_delay_s: f64,
    q_min_s: f64,
    q_max_s: f64,
) -> Result<RahmonicContrast> {
    let (lo, hi) = window_bins(q_min_s, q_max_s, c.quefrency_step_s, c.values.len())?;
    let centre = (true_delay_s / c.quefrency_step_s).round() as usize;
    if centre < lo || centre > hi {
        return Err(invalid(format!(
            "true delay {true_delay_s} s lies outside the search window"
        )));
    }
    let peak = c.values[centre.saturating_sub(1).max(lo)..=(centre + 1).min(hi)]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let median = median_abs(&c.values[lo..=hi]);
    Ok(RahmonicContrast {
        peak_magnitude: peak,
        median_magnitude: median,
        ratio: if median > 0.0 {
            peak / median
        } else {
            f64::INFINITY
        },
    })
}
