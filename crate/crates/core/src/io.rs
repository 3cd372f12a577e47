//! File formats: WAV audio, track/truth/estimate/sweep CSVs, cepstrogram
//! matrices, scenario files and JSON manifests.
//!
//! CSVs use `.` as the decimal separator regardless of locale. Times are in
//! seconds; delays and quefrencies in microseconds.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use crate::cepstrum::{window_bins, Cepstrogram};
use crate::error::{invalid, Error, Result};
use crate::eval::{DelayEstimateSeries, GroundTruthTrack, MaeReport, SweepResult};
use crate::signal::SampledSignal;
use crate::sim::{
    color_noise_samples, mix_with_reference_power, simulate_transit, straight_transit,
    EnvironmentModel, NoiseModel, SimulatedTransit, SourceConfig, TransitTrack, DEFAULT_BAND_HZ,
    DEFAULT_SAMPLE_RATE_HZ,
};

/// Sample encoding for [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WavEncoding {
    #[default]
    Float32,
    Pcm16,
}

/// Reads a mono WAV file, scaling integer samples to [-1, 1).
pub fn read_wav(path: impl AsRef<Path>) -> Result<SampledSignal> {
    let mut reader = WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedWav(format!(
            "expected mono audio, found {} channels",
            spec.channels
        )));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = (1i64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
        (format, bits) => {
            let tag = match format {
                SampleFormat::Float => "float",
                SampleFormat::Int => "PCM",
            };
            return Err(Error::UnsupportedWav(format!(
                "{bits}-bit {tag} samples; expected 16/24-bit PCM or 32-bit float"
            )));
        }
    };
    SampledSignal::new(samples, spec.sample_rate as f64)
}

/// Writes a mono WAV file. PCM16 clips samples outside [-1, 1].
pub fn write_wav(
    path: impl AsRef<Path>,
    signal: &SampledSignal,
    encoding: WavEncoding,
) -> Result<()> {
    let fs = signal.sample_rate_hz();
    if fs.fract() != 0.0 || fs > u32::MAX as f64 {
        return Err(invalid(format!(
            "WAV needs an integer sample rate, got {fs}"
        )));
    }
    let (bits, format) = match encoding {
        WavEncoding::Float32 => (32, SampleFormat::Float),
        WavEncoding::Pcm16 => (16, SampleFormat::Int),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: fs as u32,
        bits_per_sample: bits,
        sample_format: format,
    };
    let mut writer = WavWriter::create(path.as_ref(), spec)?;
    for s in signal.samples() {
        match encoding {
            WavEncoding::Float32 => writer.write_sample(*s as f32)?,
            WavEncoding::Pcm16 => {
                writer.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)?
            }
        }
    }
    writer.finalize()?;
    Ok(())
}

fn track_error(path: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::Track {
        path: path.to_path_buf(),
        row,
        message: message.into(),
    }
}

/// Reads a two-column CSV with the given header into pairs. Rows are numbered
/// from 1 for the first data row.
fn read_pairs(path: &Path, header: [&str; 2]) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let found: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if found.is_empty() || (found.len() == 1 && found[0].is_empty()) {
        return Err(track_error(path, 0, "file is empty"));
    }
    if found != header {
        return Err(track_error(
            path,
            0,
            format!(
                "expected header `{}`, found `{}`",
                header.join(","),
                found.join(",")
            ),
        ));
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let parse = |k: usize| -> Result<f64> {
            let field = record.get(k).unwrap_or("");
            field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    track_error(
                        path,
                        row,
                        format!("`{field}` is not a number in column {}", header[k]),
                    )
                })
        };
        out.push((parse(0)?, parse(1)?));
    }
    if out.is_empty() {
        return Err(track_error(path, 0, "no data rows"));
    }
    Ok(out)
}

/// Reads a logged track (`time_s,range_m`). Times must increase strictly and
/// ranges must be non-negative; errors name the first offending data row.
pub fn read_track_csv(path: impl AsRef<Path>) -> Result<TransitTrack> {
    let path = path.as_ref();
    let rows = read_pairs(path, ["time_s", "range_m"])?;
    for (i, (t, r)) in rows.iter().enumerate() {
        if i > 0 && !(*t > rows[i - 1].0) {
            return Err(track_error(
                path,
                i + 1,
                format!("time {t} s does not increase"),
            ));
        }
        if *r < 0.0 {
            return Err(track_error(path, i + 1, format!("negative range {r} m")));
        }
    }
    TransitTrack::from_samples(
        rows.iter().map(|p| p.0).collect(),
        rows.iter().map(|p| p.1).collect(),
    )
}

/// Seconds as microseconds, snapped to 1e-6 us so bin multiples print cleanly.
fn us_label(seconds: f64) -> String {
    let us = (seconds * 1e12).round() / 1e6;
    if us == 0.0 {
        "0".into()
    } else {
        us.to_string()
    }
}

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(
        path,
    )?)))
}

pub fn write_track_csv(path: impl AsRef<Path>, track: &TransitTrack) -> Result<()> {
    let mut w = create(path.as_ref())?;
    w.write_record(["time_s", "range_m"])?;
    for (t, r) in track.times_s.iter().zip(&track.ground_ranges_m) {
        w.write_record([t.to_string(), r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_truth_csv(path: impl AsRef<Path>, truth: &GroundTruthTrack) -> Result<()> {
    let mut w = create(path.as_ref())?;
    w.write_record(["frame_time_s", "true_delay_us"])?;
    for (t, d) in truth.frame_times_s.iter().zip(&truth.true_delays_s) {
        w.write_record([t.to_string(), (d * 1e6).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth_csv(path: impl AsRef<Path>) -> Result<GroundTruthTrack> {
    let rows = read_pairs(path.as_ref(), ["frame_time_s", "true_delay_us"])?;
    Ok(GroundTruthTrack {
        frame_times_s: rows.iter().map(|p| p.0).collect(),
        true_delays_s: rows.iter().map(|p| p.1 * 1e-6).collect(),
    })
}

/// One row per frame per method, methods in the given order.
pub fn write_estimates_csv(path: impl AsRef<Path>, series: &[DelayEstimateSeries]) -> Result<()> {
    let mut w = create(path.as_ref())?;
    w.write_record(["frame_time_s", "method", "delay_us", "peak_value"])?;
    for s in series {
        for (t, e) in s.frame_times_s.iter().zip(&s.estimates) {
            w.write_record([
                t.to_string(),
                s.method.to_string(),
                us_label(e.delay_s),
                e.peak_value.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_mae_csv(path: impl AsRef<Path>, reports: &[MaeReport]) -> Result<()> {
    let mut w = create(path.as_ref())?;
    w.write_record(["method", "mae_us", "frames_used", "frames_excluded"])?;
    for r in reports {
        w.write_record([
            r.method.to_string(),
            (r.mae_s * 1e6).to_string(),
            r.frames_used.to_string(),
            r.frames_excluded.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Cepstrogram magnitudes as a matrix.
///
/// The header row is `frame_time_s` followed by the quefrency in µs of every
/// bin from 0 up to and including `q_max_us`; each following row is one frame:
/// its start time, then the magnitudes. A 300 µs limit at a 4 µs step gives
/// 1 + 76 columns.
pub fn write_cepstrogram_csv(
    path: impl AsRef<Path>,
    cg: &Cepstrogram,
    q_max_us: f64,
) -> Result<()> {
    let step = cg.quefrency_step_s;
    let (_, hi) = window_bins(step * 0.5, q_max_us * 1e-6, step, cg.bins).map_err(|_| {
        invalid(format!(
            "q_max {q_max_us} us lies outside the cepstrogram axis"
        ))
    })?;
    let lo = 0;
    let mut w = create(path.as_ref())?;
    let mut header = vec!["frame_time_s".to_string()];
    header.extend((lo..=hi).map(|k| us_label(k as f64 * step)));
    w.write_record(&header)?;
    for (t, row) in cg.frame_times_s.iter().zip(&cg.rows) {
        let mut record = vec![t.to_string()];
        record.extend(row.values[lo..=hi].iter().map(|v| v.abs().to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// `grid_value,method,mae_us,frames_used,frames_excluded`
pub fn write_sweep_csv(path: impl AsRef<Path>, sweep: &SweepResult) -> Result<()> {
    let mut w = create(path.as_ref())?;
    w.write_record([
        "grid_value",
        "method",
        "mae_us",
        "frames_used",
        "frames_excluded",
    ])?;
    for p in &sweep.points {
        w.write_record([
            p.grid_value.to_string(),
            p.report.method.to_string(),
            (p.report.mae_s * 1e6).to_string(),
            p.report.frames_used.to_string(),
            p.report.frames_excluded.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reference PSD from a `freq_hz,psd` CSV, re-tabulated on a uniform grid.
pub fn read_psd_csv(path: impl AsRef<Path>, seed: u64) -> Result<NoiseModel> {
    let points = read_pairs(path.as_ref(), ["freq_hz", "psd"])?;
    NoiseModel::from_points(&points, seed)
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// One recording of a multi-file dataset.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct DatasetEntry {
    pub wav: PathBuf,
    pub track: PathBuf,
}

/// Reads a `wav,track` CSV listing recordings and their range logs. Relative
/// paths are taken relative to the manifest's directory.
pub fn read_dataset_manifest(path: impl AsRef<Path>) -> Result<Vec<DatasetEntry>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let entries = reader
        .deserialize::<DatasetEntry>()
        .map(|e| {
            e.map(|e| DatasetEntry {
                wav: base.join(e.wav),
                track: base.join(e.track),
            })
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if entries.is_empty() {
        return Err(invalid(format!("{} lists no recordings", path.display())));
    }
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackSection {
    pub cpa_range_m: f64,
    pub speed_mps: f64,
    pub start_range_m: f64,
    #[serde(default = "default_step")]
    pub step_s: f64,
}

fn default_step() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EchoSection {
    pub alpha: f64,
    #[serde(default)]
    pub spherical_spreading: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// Reference PSD CSV; the flat default is used when absent.
    pub psd_file: Option<PathBuf>,
    #[serde(default)]
    pub flat: bool,
    /// Noiseless recording when absent.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    #[serde(default = "default_fs")]
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub band_low_hz: f64,
    #[serde(default = "default_band_high")]
    pub band_high_hz: f64,
}

fn default_fs() -> f64 {
    DEFAULT_SAMPLE_RATE_HZ
}

fn default_band_high() -> f64 {
    DEFAULT_BAND_HZ.1
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            sample_rate_hz: default_fs(),
            band_low_hz: 0.0,
            band_high_hz: default_band_high(),
        }
    }
}

/// A synthetic experiment: geometry, transit, echo, noise and source band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub environment: EnvironmentModel,
    pub track: TrackSection,
    pub echo: EchoSection,
    pub noise: NoiseSection,
    #[serde(default)]
    pub source: SourceSection,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// A simulated scenario: the echo-only recording and, when an SNR is set, the
/// noisy one.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub clean: SimulatedTransit,
    pub noisy: Option<SampledSignal>,
    pub seed: u64,
}

impl ScenarioRun {
    /// The recording an observer would receive.
    pub fn recording(&self) -> &SampledSignal {
        self.noisy.as_ref().unwrap_or(&self.clean.recording)
    }
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut s: Scenario = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        s.base_dir = base_dir.to_path_buf();
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |e: Error| Error::Scenario(e.to_string());
        self.environment.validate().map_err(bad)?;
        self.track().map_err(bad)?;
        if !(0.0..=1.0).contains(&self.echo.alpha) {
            return Err(Error::Scenario(format!(
                "echo alpha must lie in [0, 1], got {}",
                self.echo.alpha
            )));
        }
        if self.noise.flat && self.noise.psd_file.is_some() {
            return Err(Error::Scenario(
                "noise sets both `flat` and `psd_file`".into(),
            ));
        }
        let src = &self.source;
        if !(src.sample_rate_hz > 0.0
            && src.band_low_hz >= 0.0
            && src.band_high_hz > src.band_low_hz
            && src.band_high_hz <= src.sample_rate_hz / 2.0)
        {
            return Err(Error::Scenario(format!(
                "source band [{}, {}] Hz does not fit a {} Hz sample rate",
                src.band_low_hz, src.band_high_hz, src.sample_rate_hz
            )));
        }
        Ok(())
    }

    pub fn band_hz(&self) -> (f64, f64) {
        (self.source.band_low_hz, self.source.band_high_hz)
    }

    pub fn source_config(&self) -> SourceConfig {
        SourceConfig {
            sample_rate_hz: self.source.sample_rate_hz,
            band_hz: self.band_hz(),
            spherical_spreading: self.echo.spherical_spreading,
        }
    }

    pub fn track(&self) -> Result<TransitTrack> {
        let t = &self.track;
        straight_transit(t.cpa_range_m, t.speed_mps, t.start_range_m, t.step_s)
    }

    /// Ambient noise model seeded with `seed`.
    pub fn noise_model(&self, seed: u64) -> Result<NoiseModel> {
        match &self.noise.psd_file {
            Some(p) => read_psd_csv(self.base_dir.join(p), seed),
            None => NoiseModel::flat(self.band_hz(), self.source.sample_rate_hz / 2.0, seed),
        }
    }

    /// Simulates the transit. `seed` overrides the scenario's seed.
    pub fn simulate(&self, seed: Option<u64>) -> Result<ScenarioRun> {
        let seed = seed.unwrap_or(self.noise.seed);
        let clean = simulate_transit(
            &self.track()?,
            &self.environment,
            self.echo.alpha,
            seed,
            &self.source_config(),
        )?;
        let noisy = match self.noise.snr_db {
            Some(snr) => Some(self.add_noise(&clean.recording, snr, seed)?),
            None => None,
        };
        Ok(ScenarioRun { clean, noisy, seed })
    }

    /// Adds ambient noise at `snr_db` relative to the direct-path power.
    pub fn add_noise(
        &self,
        clean: &SampledSignal,
        snr_db: f64,
        seed: u64,
    ) -> Result<SampledSignal> {
        let noise = color_noise_samples(
            &self.noise_model(seed)?,
            clean.len(),
            clean.sample_rate_hz(),
        )?;
        let band = self.band_hz();
        let reference = crate::eval::direct_path_power(clean, self.echo.alpha, band)?;
        mix_with_reference_power(clean, &noise, reference, snr_db, band)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cepstrum::{build_cepstrogram, CepstrumParams, EstimationMethod};
    use crate::signal::frame_signal;
    use std::f64::consts::PI;
    use tempfile::tempdir;

    const SCENARIO: &str = r#"
[environment]
sound_speed_mps = 1520.0
water_depth_m = 20.0
source_height_m = 20.0
receiver_height_m = 1.0

[track]
cpa_range_m = 10.0
speed_mps = 60.0
start_range_m = 200.0

[echo]
alpha = 0.9

[noise]
flat = true
snr_db = 10.0
seed = 3
"#;

    #[test]
    fn pcm16_sine_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("sine.wav");
        let fs = 250_000.0;
        let s = SampledSignal::new(
            (0..250_000)
                .map(|i| (2.0 * PI * 1000.0 * i as f64 / fs).sin())
                .collect(),
            fs,
        )
        .unwrap();
        write_wav(&path, &s, WavEncoding::Pcm16).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.len(), 250_000);
        assert_eq!(back.sample_rate_hz(), fs);
        let peak = back.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 1.0).abs() < 1e-3);
    }

    #[test]
    fn float_round_trip_keeps_single_precision() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("f.wav");
        let s = SampledSignal::new(vec![0.1, -0.25, 3.0, 1e-7], 44_100.0).unwrap();
        write_wav(&path, &s, WavEncoding::Float32).unwrap();
        let back = read_wav(&path).unwrap();
        for (a, b) in s.samples().iter().zip(back.samples()) {
            assert_eq!(*b, *a as f32 as f64);
        }
        assert_eq!(back.sample_rate_hz(), 44_100.0);
    }

    #[test]
    fn pcm24_is_normalised() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("p24.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 48_000,
            bits_per_sample: 24,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        w.write_sample(-(1i32 << 23)).unwrap();
        w.write_sample(1i32 << 22).unwrap();
        w.finalize().unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.samples(), &[-1.0, 0.5]);
    }

    #[test]
    fn stereo_and_odd_formats_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("st.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 48_000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        let err = read_wav(&path).unwrap_err().to_string();
        assert!(err.contains("2 channels"), "{err}");

        let path = dir.path().join("u8.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 48_000,
            bits_per_sample: 8,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        w.write_sample(0i8).unwrap();
        w.finalize().unwrap();
        let err = read_wav(&path).unwrap_err().to_string();
        assert!(err.contains("8-bit PCM"), "{err}");
    }

    #[test]
    fn truncated_header_is_an_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.wav");
        std::fs::write(&path, b"RIFF\x10\x00\x00\x00WAVEfmt ").unwrap();
        assert!(matches!(read_wav(&path), Err(Error::Wav(_))));
    }

    #[test]
    fn track_csv_rules() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("track.csv");
        std::fs::write(&path, "time_s,range_m\n0,200\n0.1,199.7\n").unwrap();
        let t = read_track_csv(&path).unwrap();
        assert_eq!(t.times_s, vec![0.0, 0.1]);
        assert_eq!(t.ground_ranges_m, vec![200.0, 199.7]);

        std::fs::write(&path, "time_s,range_m\n0,200\n0.2,199\n0.1,198\n").unwrap();
        match read_track_csv(&path) {
            Err(Error::Track { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
        std::fs::write(&path, "time_s,range_m\n0,-1\n").unwrap();
        assert!(read_track_csv(&path).is_err());
        std::fs::write(&path, "").unwrap();
        assert!(read_track_csv(&path).is_err());
        std::fs::write(&path, "time_s,range_m\n").unwrap();
        assert!(read_track_csv(&path).is_err());
        std::fs::write(&path, "t,r\n0,1\n").unwrap();
        assert!(read_track_csv(&path).is_err());
    }

    #[test]
    fn track_and_truth_round_trip() {
        let dir = tempdir().unwrap();
        let track = straight_transit(10.0, 3.0, 12.0, 0.1).unwrap();
        write_track_csv(dir.path().join("t.csv"), &track).unwrap();
        let back = read_track_csv(dir.path().join("t.csv")).unwrap();
        assert_eq!(back.ground_ranges_m, track.ground_ranges_m);
        let truth = crate::eval::predicted_delays(&track, &EnvironmentModel::default());
        write_truth_csv(dir.path().join("truth.csv"), &truth).unwrap();
        let back = read_truth_csv(dir.path().join("truth.csv")).unwrap();
        for (a, b) in back.true_delays_s.iter().zip(&truth.true_delays_s) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    fn white_cepstrogram(frames: usize) -> Cepstrogram {
        let fs = 250_000.0;
        let x =
            crate::sim::synth_source_noise(frames as f64 * 0.1, fs, DEFAULT_BAND_HZ, 1).unwrap();
        let f = frame_signal(&x, 0.1, 0.1).unwrap();
        build_cepstrogram(
            &f,
            &CepstrumParams {
                max_quefrency_s: Some(300e-6),
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn cepstrogram_layout() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cg.csv");
        let cg = white_cepstrogram(3);
        write_cepstrogram_csv(&path, &cg, 300.0).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines.iter().all(|l| l.split(',').count() == 77));
        assert!(lines[0].starts_with("frame_time_s,0,4,8,"));
        assert!(lines[0].ends_with(",300"));
        assert!(lines[1..].iter().all(|l| l
            .split(',')
            .skip(1)
            .all(|v| v.parse::<f64>().unwrap() >= 0.0)));

        let empty = Cepstrogram {
            rows: vec![],
            frame_times_s: vec![],
            ..cg.clone()
        };
        write_cepstrogram_csv(&path, &empty, 300.0).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1);
        assert!(write_cepstrogram_csv(&path, &cg, 400.0).is_err());
    }

    #[test]
    fn scenario_parses_and_simulates() {
        let s = Scenario::parse(SCENARIO, Path::new(".")).unwrap();
        assert_eq!(s.source.sample_rate_hz, 250_000.0);
        let run = s.simulate(None).unwrap();
        assert_eq!(run.seed, 3);
        let noisy = run.noisy.as_ref().unwrap();
        assert_eq!(noisy.len(), run.clean.recording.len());
        let again = s.simulate(None).unwrap();
        assert_eq!(again.noisy.unwrap(), *noisy);
        let other = s.simulate(Some(4)).unwrap();
        assert_ne!(other.clean.recording, run.clean.recording);
    }

    #[test]
    fn scenario_rejects_unknown_keys() {
        let typo = SCENARIO.replace("alpha = 0.9", "alpah = 0.9");
        assert!(matches!(
            Scenario::parse(&typo, Path::new(".")),
            Err(Error::Scenario(_))
        ));
        let extra = format!("{SCENARIO}\n[bogus]\nx = 1\n");
        assert!(Scenario::parse(&extra, Path::new(".")).is_err());
        let both = SCENARIO.replace("flat = true", "flat = true\npsd_file = \"p.csv\"");
        assert!(Scenario::parse(&both, Path::new(".")).is_err());
        let wide = format!("{SCENARIO}\n[source]\nband_high_hz = 200000.0\n");
        assert!(Scenario::parse(&wide, Path::new(".")).is_err());
    }

    #[test]
    fn scenario_reads_psd_file() {
        let dir = tempdir().unwrap();
        let mut psd = String::from("freq_hz,psd\n");
        for i in 0..=125 {
            psd.push_str(&format!("{},{}\n", i * 1000, 1.0 / (1.0 + i as f64)));
        }
        std::fs::write(dir.path().join("psd.csv"), psd).unwrap();
        let text = SCENARIO.replace("flat = true", "psd_file = \"psd.csv\"");
        std::fs::write(dir.path().join("s.toml"), text).unwrap();
        let s = Scenario::load(dir.path().join("s.toml")).unwrap();
        let m = s.noise_model(1).unwrap();
        assert_eq!(m.bin_hz, 1000.0);
        assert!((m.psd_at(500.0) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn estimates_and_sweep_csv_headers() {
        let dir = tempdir().unwrap();
        let sweep = SweepResult {
            variable: crate::eval::SweepVariable::A,
            grid: vec![0.0],
            points: vec![crate::eval::SweepPoint {
                grid_value: 0.0,
                report: MaeReport {
                    method: EstimationMethod::CepstrumSubtracted,
                    mae_s: 4e-6,
                    frames_used: 10,
                    frames_excluded: 1,
                },
            }],
        };
        write_sweep_csv(dir.path().join("s.csv"), &sweep).unwrap();
        let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
        assert_eq!(
            text,
            "grid_value,method,mae_us,frames_used,frames_excluded\n0,cepstrum-subtracted,4,10,1\n"
        );
        write_estimates_csv(dir.path().join("e.csv"), &[]).unwrap();
        assert_eq!(
            std::fs::read_to_string(dir.path().join("e.csv")).unwrap(),
            "frame_time_s,method,delay_us,peak_value\n"
        );
    }

    #[test]
    fn dataset_manifest_resolves_relative_paths() {
        let dir = tempdir().unwrap();
        std::fs::write(dir.path().join("m.csv"), "wav,track\na.wav,a.csv\n").unwrap();
        let entries = read_dataset_manifest(dir.path().join("m.csv")).unwrap();
        assert_eq!(entries[0].wav, dir.path().join("a.wav"));
        std::fs::write(dir.path().join("m.csv"), "wav,track\n").unwrap();
        assert!(read_dataset_manifest(dir.path().join("m.csv")).is_err());
    }
}
