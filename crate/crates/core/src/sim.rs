//! Synthetic hydrophone recordings of a broadband source transiting past a
//! fixed sensor in isovelocity shallow water, with a single seafloor-reflected
//! multipath and coloured ambient noise.
//!
//! Geometry uses the image-source construction: the reflected path is the
//! straight line from the source's mirror image below the seafloor, so with
//! source height `h_s`, receiver height `h_r` and ground range `D`
//!
//! ```text
//! direct   = sqrt(D^2 + (h_s - h_r)^2)
//! indirect = sqrt(D^2 + (h_s + h_r)^2)
//! ```
//!
//! Randomness comes from ChaCha8 streams seeded through [`derive_seed`], so
//! every block is reproducible on its own and parallel generation gives the
//! same output as serial generation.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fft::{self, Complex};
use crate::signal::{seconds_to_samples, SampledSignal};

/// Default sample rate of the synthetic recordings.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 250_000.0;
/// Default source band.
pub const DEFAULT_BAND_HZ: (f64, f64) = (0.0, 90_000.0);

/// Block length used for noise shaping and in-band power measurement.
const NOISE_BLOCK: usize = 1 << 16;
/// Taps of the windowed-sinc fractional delay interpolator.
const SINC_TAPS: usize = 64;

/// Random stream identifiers mixed into derived seeds.
pub mod stream {
    pub const SOURCE: u64 = 1;
    pub const AMBIENT: u64 = 2;
    pub const SWEEP: u64 = 3;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed for item `index` of random stream `stream` under `master`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(stream)) ^ index)
}

fn gaussian(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Frequency of DFT bin `k` folded to `[0, fs/2]`.
fn folded_hz(k: usize, n: usize, fs: f64) -> f64 {
    k.min(n - k) as f64 * fs / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentModel {
    #[serde(default = "defaults::sound_speed")]
    pub sound_speed_mps: f64,
    #[serde(default = "defaults::water_depth")]
    pub water_depth_m: f64,
    #[serde(default = "defaults::source_height")]
    pub source_height_m: f64,
    #[serde(default = "defaults::receiver_height")]
    pub receiver_height_m: f64,
}

mod defaults {
    pub fn sound_speed() -> f64 {
        1520.0
    }
    pub fn water_depth() -> f64 {
        20.0
    }
    pub fn source_height() -> f64 {
        20.0
    }
    pub fn receiver_height() -> f64 {
        1.0
    }
}

impl Default for EnvironmentModel {
    fn default() -> Self {
        Self {
            sound_speed_mps: defaults::sound_speed(),
            water_depth_m: defaults::water_depth(),
            source_height_m: defaults::source_height(),
            receiver_height_m: defaults::receiver_height(),
        }
    }
}

impl EnvironmentModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sound_speed_mps > 0.0) {
            return Err(invalid("sound speed must be positive"));
        }
        if !(self.receiver_height_m > 0.0
            && self.receiver_height_m < self.source_height_m
            && self.source_height_m <= self.water_depth_m)
        {
            return Err(invalid(format!(
                "need 0 < receiver height ({}) < source height ({}) <= water depth ({})",
                self.receiver_height_m, self.source_height_m, self.water_depth_m
            )));
        }
        Ok(())
    }
}

/// Direct and seafloor-reflected path lengths at one ground range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathGeometry {
    pub ground_range_m: f64,
    pub direct_len_m: f64,
    pub indirect_len_m: f64,
    pub delta_l_m: f64,
    pub delay_s: f64,
}

/// Multipath geometry at ground range `ground_range_m` (its magnitude is used).
pub fn multipath_delay(ground_range_m: f64, env: &EnvironmentModel) -> PathGeometry {
    let d = ground_range_m.abs();
    let a = env.source_height_m + env.receiver_height_m;
    let b = env.source_height_m - env.receiver_height_m;
    let direct = d.hypot(b);
    let indirect = d.hypot(a);
    // (a^2 - b^2) / (indirect + direct) avoids cancellation at long range
    let delta_l = (a + b) * (a - b) / (indirect + direct);
    PathGeometry {
        ground_range_m: d,
        direct_len_m: direct,
        indirect_len_m: indirect,
        delta_l_m: delta_l,
        delay_s: delta_l / env.sound_speed_mps,
    }
}

/// Ground range of a source against time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitTrack {
    pub times_s: Vec<f64>,
    pub ground_ranges_m: Vec<f64>,
    pub cpa_time_s: f64,
    pub cpa_range_m: f64,
    /// Known for synthetic tracks, absent for logged ones.
    pub speed_mps: Option<f64>,
    pub step_s: f64,
}

impl TransitTrack {
    /// Track from logged samples. Times must be strictly increasing and ranges
    /// non-negative.
    pub fn from_samples(times_s: Vec<f64>, ground_ranges_m: Vec<f64>) -> Result<Self> {
        if times_s.len() != ground_ranges_m.len() {
            return Err(invalid("track times and ranges differ in length"));
        }
        if times_s.is_empty() {
            return Err(invalid("track is empty"));
        }
        if let Some(i) = times_s.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(invalid(format!(
                "track time not increasing at sample {}",
                i + 1
            )));
        }
        if let Some(i) = ground_ranges_m.iter().position(|r| !(*r >= 0.0)) {
            return Err(invalid(format!("negative or invalid range at sample {i}")));
        }
        let cpa = ground_ranges_m
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        let step_s = if times_s.len() > 1 {
            let mut gaps: Vec<f64> = times_s.windows(2).map(|w| w[1] - w[0]).collect();
            gaps.sort_by(f64::total_cmp);
            gaps[gaps.len() / 2]
        } else {
            0.1
        };
        Ok(Self {
            cpa_time_s: times_s[cpa],
            cpa_range_m: ground_ranges_m[cpa],
            times_s,
            ground_ranges_m,
            speed_mps: None,
            step_s,
        })
    }

    /// `count` samples at a fixed range.
    pub fn constant(range_m: f64, count: usize, step_s: f64) -> Result<Self> {
        let mut t = Self::from_samples(
            (0..count).map(|i| i as f64 * step_s).collect(),
            vec![range_m; count],
        )?;
        t.step_s = step_s;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_s.is_empty()
    }

    /// Ground range at `time_s` by linear interpolation, held constant beyond
    /// the ends of the track.
    pub fn range_at(&self, time_s: f64) -> f64 {
        let t = &self.times_s;
        let r = &self.ground_ranges_m;
        if time_s <= t[0] {
            return r[0];
        }
        if time_s >= t[t.len() - 1] {
            return r[r.len() - 1];
        }
        let i = t.partition_point(|x| *x <= time_s);
        let (t0, t1) = (t[i - 1], t[i]);
        let w = (time_s - t0) / (t1 - t0);
        r[i - 1] + w * (r[i] - r[i - 1])
    }

    /// Track re-sampled at `times_s`.
    pub fn resample(&self, times_s: &[f64]) -> Result<Self> {
        let ranges = times_s.iter().map(|t| self.range_at(*t)).collect();
        let mut out = Self::from_samples(times_s.to_vec(), ranges)?;
        out.speed_mps = self.speed_mps;
        Ok(out)
    }
}

/// Straight-line transit at constant speed from `start_range_m` inbound, past
/// the closest point of approach, to `start_range_m` outbound, sampled every
/// `step_s`. When the CPA range equals the start range the track is a single
/// sample.
pub fn straight_transit(
    cpa_range_m: f64,
    speed_mps: f64,
    start_range_m: f64,
    step_s: f64,
) -> Result<TransitTrack> {
    if !(cpa_range_m >= 0.0 && start_range_m >= cpa_range_m) {
        return Err(invalid(format!(
            "need start range ({start_range_m}) >= CPA range ({cpa_range_m}) >= 0"
        )));
    }
    if !(speed_mps > 0.0 && step_s > 0.0) {
        return Err(invalid("speed and step must be positive"));
    }
    let leg = (start_range_m * start_range_m - cpa_range_m * cpa_range_m).sqrt();
    let duration = 2.0 * leg / speed_mps;
    let count = ((duration / step_s + 1e-9).floor() as usize).max(1);
    let times_s: Vec<f64> = (0..count).map(|i| i as f64 * step_s).collect();
    let ground_ranges_m = times_s
        .iter()
        .map(|t| (speed_mps * t - leg).hypot(cpa_range_m))
        .collect();
    Ok(TransitTrack {
        times_s,
        ground_ranges_m,
        cpa_time_s: leg / speed_mps,
        cpa_range_m,
        speed_mps: Some(speed_mps),
        step_s,
    })
}

/// Single echo: attenuation and delay of the indirect path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoModel {
    pub alpha: f64,
    pub tau_beta_s: f64,
}

impl EchoModel {
    /// `alpha = 0` is accepted and yields an echo-free copy.
    pub fn new(alpha: f64, tau_beta_s: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(invalid(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if !(tau_beta_s >= 0.0 && tau_beta_s.is_finite()) {
            return Err(invalid(format!(
                "delay must be non-negative, got {tau_beta_s}"
            )));
        }
        Ok(Self { alpha, tau_beta_s })
    }
}

fn check_band(band_hz: (f64, f64), sample_rate_hz: f64) -> Result<()> {
    let nyquist = sample_rate_hz / 2.0;
    if !(band_hz.0 >= 0.0 && band_hz.1 > band_hz.0 && band_hz.1 <= nyquist) {
        return Err(invalid(format!(
            "band [{}, {}] Hz must satisfy 0 <= low < high <= Nyquist ({nyquist} Hz)",
            band_hz.0, band_hz.1
        )));
    }
    Ok(())
}

/// White Gaussian noise brick-wall limited to `band_hz`, scaled to unit
/// expected variance.
fn band_limited_white(n: usize, sample_rate_hz: f64, band_hz: (f64, f64), seed: u64) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let mut buf = fft::real_to_complex(&gaussian(n, seed), n);
    fft::forward(&mut buf);
    let mut kept = 0usize;
    for (k, c) in buf.iter_mut().enumerate() {
        let f = folded_hz(k, n, sample_rate_hz);
        if f >= band_hz.0 && f <= band_hz.1 {
            kept += 1;
        } else {
            *c = Complex::default();
        }
    }
    fft::inverse(&mut buf);
    let gain = (n as f64 / kept.max(1) as f64).sqrt() / n as f64;
    buf.into_iter().map(|c| c.re * gain).collect()
}

/// Zero-mean Gaussian source noise, flat within `band_hz` and zero outside.
pub fn synth_source_noise(
    duration_s: f64,
    sample_rate_hz: f64,
    band_hz: (f64, f64),
    seed: u64,
) -> Result<SampledSignal> {
    check_band(band_hz, sample_rate_hz)?;
    if !(duration_s >= 0.0) {
        return Err(invalid("duration must be non-negative"));
    }
    let n = seconds_to_samples(duration_s, sample_rate_hz);
    SampledSignal::new(
        band_limited_white(n, sample_rate_hz, band_hz, seed),
        sample_rate_hz,
    )
}

/// Normalised 64-tap Hann-windowed sinc for a delay of `frac` in `[0, 1)`
/// samples; tap `i` weights input offset `i - 31`.
fn fractional_delay_taps(frac: f64) -> [f64; SINC_TAPS] {
    let half = (SINC_TAPS / 2) as f64;
    let mut taps = [0.0; SINC_TAPS];
    for (i, tap) in taps.iter_mut().enumerate() {
        let x = (i as f64 - (half - 1.0)) - frac;
        let sinc = if x == 0.0 {
            1.0
        } else {
            (PI * x).sin() / (PI * x)
        };
        *tap = sinc * 0.5 * (1.0 + (PI * x / half).cos());
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// `x(t) = s(t) + alpha * s(t - tau)` over the region where the delayed copy
/// is fully defined.
///
/// Output sample `j` corresponds to input sample `j + offset`, with
/// `offset = tau*fs` for whole-sample delays and `floor(tau*fs) + 32` otherwise
/// (the interpolator needs history on both sides).
pub fn apply_static_echo(signal: &SampledSignal, echo: &EchoModel) -> Result<SampledSignal> {
    let echo = EchoModel::new(echo.alpha, echo.tau_beta_s)?;
    let fs = signal.sample_rate_hz();
    let s = signal.samples();
    let n = s.len();
    let delay = echo.tau_beta_s * fs;
    if delay >= n as f64 {
        return Err(invalid(format!(
            "echo delay {} s is not shorter than the signal ({} s)",
            echo.tau_beta_s,
            signal.duration_s()
        )));
    }
    let whole = delay.round();
    let out = if (delay - whole).abs() < 1e-9 {
        let d = whole as usize;
        (d..n).map(|m| s[m] + echo.alpha * s[m - d]).collect()
    } else {
        let d = delay.floor() as usize;
        let taps = fractional_delay_taps(delay - d as f64);
        let half = SINC_TAPS / 2;
        // input index for tap i at output time m is m - d + (half - 1) - i
        let first = d + half;
        let last = (n + d).saturating_sub(half).min(n - 1);
        if first > last {
            return Err(invalid(
                "signal too short for fractional-delay interpolation",
            ));
        }
        (first..=last)
            .map(|m| {
                let base = m - d + half - 1;
                let delayed: f64 = taps.iter().enumerate().map(|(i, h)| h * s[base - i]).sum();
                s[m] + echo.alpha * delayed
            })
            .collect()
    };
    SampledSignal::new(out, fs)
}

/// Source, band and propagation options for [`simulate_transit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub sample_rate_hz: f64,
    pub band_hz: (f64, f64),
    /// Scale the echo by direct/indirect path length (spherical spreading).
    pub spherical_spreading: bool,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            band_hz: DEFAULT_BAND_HZ,
            spherical_spreading: false,
        }
    }
}

/// A synthetic recording and its per-frame ground truth.
#[derive(Debug, Clone)]
pub struct SimulatedTransit {
    pub recording: SampledSignal,
    pub frame_times_s: Vec<f64>,
    pub true_delays_s: Vec<f64>,
    pub frame_len_samples: usize,
}

/// Synthesises one frame per track sample. Within a frame the echo delay is
/// frozen at the multipath delay for that sample's ground range; frames are
/// generated independently (seeded by frame index) and concatenated.
pub fn simulate_transit(
    track: &TransitTrack,
    env: &EnvironmentModel,
    alpha: f64,
    seed: u64,
    source: &SourceConfig,
) -> Result<SimulatedTransit> {
    if track.is_empty() {
        return Err(invalid("track is empty"));
    }
    env.validate()?;
    EchoModel::new(alpha, 0.0)?;
    let fs = source.sample_rate_hz;
    check_band(source.band_hz, fs)?;
    let frame_len = seconds_to_samples(track.step_s, fs);
    if frame_len < 2 {
        return Err(invalid("track step is shorter than two samples"));
    }
    let paths: Vec<PathGeometry> = track
        .ground_ranges_m
        .iter()
        .map(|d| multipath_delay(*d, env))
        .collect();
    let max_delay = paths.iter().map(|p| p.delay_s).fold(0.0, f64::max);
    let block = (frame_len + (max_delay * fs).ceil() as usize + SINC_TAPS + 1).next_power_of_two();

    let frames = paths
        .par_iter()
        .enumerate()
        .map(|(m, path)| {
            let gain = if source.spherical_spreading {
                alpha * path.direct_len_m / path.indirect_len_m
            } else {
                alpha
            };
            let s = band_limited_white(
                block,
                fs,
                source.band_hz,
                derive_seed(seed, stream::SOURCE, m as u64),
            );
            let x = apply_static_echo(
                &SampledSignal::new(s, fs)?,
                &EchoModel::new(gain, path.delay_s)?,
            )?;
            let x = x.into_samples();
            Ok(x[x.len() - frame_len..].to_vec())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    Ok(SimulatedTransit {
        recording: SampledSignal::new(frames.concat(), fs)?,
        frame_times_s: (0..paths.len())
            .map(|m| (m * frame_len) as f64 / fs)
            .collect(),
        true_delays_s: paths.iter().map(|p| p.delay_s).collect(),
        frame_len_samples: frame_len,
    })
}

/// Reference power spectral density for ambient noise, tabulated on a uniform
/// frequency grid starting at 0 Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub reference_psd: Vec<f64>,
    pub bin_hz: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(reference_psd: Vec<f64>, bin_hz: f64, seed: u64) -> Result<Self> {
        if !(bin_hz > 0.0) {
            return Err(invalid("PSD bin width must be positive"));
        }
        if reference_psd.len() < 2 {
            return Err(invalid("PSD needs at least two points"));
        }
        if let Some(v) = reference_psd
            .iter()
            .find(|v| !(**v >= 0.0 && v.is_finite()))
        {
            return Err(invalid(format!(
                "PSD values must be finite and non-negative, got {v}"
            )));
        }
        Ok(Self {
            reference_psd,
            bin_hz,
            seed,
        })
    }

    /// Unit PSD inside `band_hz`, zero elsewhere, tabulated to `max_hz`.
    pub fn flat(band_hz: (f64, f64), max_hz: f64, seed: u64) -> Result<Self> {
        let bin_hz = 50.0;
        let count = (max_hz / bin_hz).ceil() as usize + 1;
        let psd = (0..count)
            .map(|i| {
                let f = i as f64 * bin_hz;
                if f >= band_hz.0 && f <= band_hz.1 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Self::new(psd, bin_hz, seed)
    }

    /// Re-tabulates arbitrary ascending `(frequency, psd)` points on a uniform
    /// grid with the smallest spacing found in the input.
    pub fn from_points(points: &[(f64, f64)], seed: u64) -> Result<Self> {
        if points.len() < 2 {
            return Err(invalid("PSD needs at least two points"));
        }
        if let Some(i) = points.windows(2).position(|w| !(w[1].0 > w[0].0)) {
            return Err(invalid(format!(
                "PSD frequencies not ascending at point {}",
                i + 1
            )));
        }
        let bin_hz = points
            .windows(2)
            .map(|w| w[1].0 - w[0].0)
            .fold(f64::INFINITY, f64::min);
        let last = points[points.len() - 1].0;
        let count = (last / bin_hz + 1e-9).floor() as usize + 1;
        let psd = (0..count)
            .map(|i| interpolate(points, i as f64 * bin_hz))
            .collect();
        Self::new(psd, bin_hz, seed)
    }

    pub fn max_frequency_hz(&self) -> f64 {
        (self.reference_psd.len() - 1) as f64 * self.bin_hz
    }

    /// Linearly interpolated PSD; zero beyond the table.
    pub fn psd_at(&self, f_hz: f64) -> f64 {
        let x = f_hz / self.bin_hz;
        let i = x.floor() as usize;
        if i + 1 >= self.reference_psd.len() {
            return if i + 1 == self.reference_psd.len() {
                self.reference_psd[i]
            } else {
                0.0
            };
        }
        let w = x - i as f64;
        self.reference_psd[i] * (1.0 - w) + self.reference_psd[i + 1] * w
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

fn interpolate(points: &[(f64, f64)], f: f64) -> f64 {
    if f <= points[0].0 {
        return points[0].1;
    }
    let i = points.partition_point(|p| p.0 <= f);
    if i >= points.len() {
        return points[points.len() - 1].1;
    }
    let (f0, p0) = points[i - 1];
    let (f1, p1) = points[i];
    p0 + (f - f0) / (f1 - f0) * (p1 - p0)
}

/// Gaussian noise whose spectrum follows `model`, built by shaping white noise
/// with the square root of the PSD in the frequency domain, block by block.
pub fn color_noise(
    model: &NoiseModel,
    duration_s: f64,
    sample_rate_hz: f64,
) -> Result<SampledSignal> {
    if !(duration_s >= 0.0 && sample_rate_hz > 0.0) {
        return Err(invalid("duration and sample rate must be positive"));
    }
    color_noise_samples(
        model,
        seconds_to_samples(duration_s, sample_rate_hz),
        sample_rate_hz,
    )
}

/// [`color_noise`] with an exact sample count.
pub fn color_noise_samples(
    model: &NoiseModel,
    n: usize,
    sample_rate_hz: f64,
) -> Result<SampledSignal> {
    let model = NoiseModel::new(model.reference_psd.clone(), model.bin_hz, model.seed)?;
    if model.reference_psd.iter().all(|v| *v == 0.0) {
        return Err(invalid("reference PSD is zero everywhere"));
    }
    let nyquist = sample_rate_hz / 2.0;
    if model.max_frequency_hz() < nyquist * (1.0 - 1e-9) {
        return Err(invalid(format!(
            "reference PSD ends at {} Hz, below Nyquist ({nyquist} Hz)",
            model.max_frequency_hz()
        )));
    }
    let block = n.min(NOISE_BLOCK);
    if block == 0 {
        return SampledSignal::new(Vec::new(), sample_rate_hz);
    }
    let gains: Vec<f64> = (0..block)
        .map(|k| model.psd_at(folded_hz(k, block, sample_rate_hz)).sqrt())
        .collect();
    let blocks = n.div_ceil(block);
    let parts: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let z = gaussian(block, derive_seed(model.seed, stream::AMBIENT, b as u64));
            let mut buf = fft::real_to_complex(&z, block);
            fft::forward(&mut buf);
            for (c, g) in buf.iter_mut().zip(&gains) {
                *c *= *g;
            }
            fft::inverse(&mut buf);
            let take = block.min(n - b * block);
            buf[..take].iter().map(|c| c.re / block as f64).collect()
        })
        .collect();
    SampledSignal::new(parts.concat(), sample_rate_hz)
}

/// Mean power of `signal` inside `band_hz` (both spectral sides), measured
/// with rectangular non-overlapping blocks.
pub fn in_band_power(signal: &SampledSignal, band_hz: (f64, f64)) -> Result<f64> {
    let fs = signal.sample_rate_hz();
    check_band(band_hz, fs)?;
    let x = signal.samples();
    if x.is_empty() {
        return Ok(0.0);
    }
    let block = x.len().min(NOISE_BLOCK);
    let energies: Vec<f64> = x
        .par_chunks(block)
        .map(|chunk| {
            let mut buf = fft::real_to_complex(chunk, block);
            fft::forward(&mut buf);
            buf.iter()
                .enumerate()
                .filter(|(k, _)| {
                    let f = folded_hz(*k, block, fs);
                    f >= band_hz.0 && f <= band_hz.1
                })
                .map(|(_, c)| c.norm_sqr())
                .sum::<f64>()
                / block as f64
        })
        .collect();
    Ok(energies.iter().sum::<f64>() / x.len() as f64)
}

/// Adds `noise` scaled so that in-band signal power over in-band noise power
/// equals `snr_db`.
pub fn mix_at_snr(
    signal: &SampledSignal,
    noise: &SampledSignal,
    snr_db: f64,
    band_hz: (f64, f64),
) -> Result<SampledSignal> {
    let reference = in_band_power(signal, band_hz)?;
    mix_with_reference_power(signal, noise, reference, snr_db, band_hz)
}

/// As [`mix_at_snr`], but the SNR numerator is `reference_power` rather than
/// the power of `signal` (e.g. the direct-path power of an echo recording).
pub fn mix_with_reference_power(
    signal: &SampledSignal,
    noise: &SampledSignal,
    reference_power: f64,
    snr_db: f64,
    band_hz: (f64, f64),
) -> Result<SampledSignal> {
    if signal.len() != noise.len() || signal.sample_rate_hz() != noise.sample_rate_hz() {
        return Err(invalid("signal and noise differ in length or sample rate"));
    }
    let noise_power = in_band_power(noise, band_hz)?;
    if !(noise_power > 0.0) {
        return Err(invalid("noise has no power in the band"));
    }
    let gain = (reference_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt();
    SampledSignal::new(
        signal
            .samples()
            .iter()
            .zip(noise.samples())
            .map(|(s, n)| s + gain * n)
            .collect(),
        signal.sample_rate_hz(),
    )
}
