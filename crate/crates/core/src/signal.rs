//! Deterministic DSP primitives: framing, windowing, power and log-power
//! spectra, autocorrelation and spectral-null (interference fringe) measurement.
//!
//! Every routine here is a pure function of its inputs and works in double
//! precision.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fft;

/// Absolute floor used when a spectrum holds no power at all.
pub const ABSOLUTE_LOG_FLOOR: f64 = 1e-300;

/// Default relative log floor.
pub const DEFAULT_FLOOR_REL: f64 = 1e-12;

/// A uniformly sampled, finite, real-valued time series.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    samples: Vec<f64>,
    sample_rate_hz: f64,
}

impl SampledSignal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Mean-square value of the samples.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64
    }

    /// Returns a copy with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(
            self.samples.iter().map(|v| v * gain).collect(),
            self.sample_rate_hz,
        )
    }
}

/// Non-overlapping or overlapping equal-length views into a signal.
#[derive(Debug, Clone)]
pub struct FrameSequence<'a> {
    samples: &'a [f64],
    frame_len_samples: usize,
    hop_samples: usize,
    sample_rate_hz: f64,
    start_times_s: Vec<f64>,
}

impl<'a> FrameSequence<'a> {
    pub fn len(&self) -> usize {
        self.start_times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.start_times_s.is_empty()
    }

    pub fn frame_len_samples(&self) -> usize {
        self.frame_len_samples
    }

    pub fn hop_samples(&self) -> usize {
        self.hop_samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn start_times_s(&self) -> &[f64] {
        &self.start_times_s
    }

    pub fn frame(&self, index: usize) -> &'a [f64] {
        let start = index * self.hop_samples;
        &self.samples[start..start + self.frame_len_samples]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &'a [f64]> + '_ {
        (0..self.len()).map(move |i| self.frame(i))
    }
}

/// Number of whole samples closest to `seconds * rate`.
pub fn seconds_to_samples(seconds: f64, sample_rate_hz: f64) -> usize {
    (seconds * sample_rate_hz).round().max(0.0) as usize
}

/// Splits `signal` into complete frames of `frame_len_s`, advancing by `hop_s`.
/// Trailing data that does not fill a frame is dropped.
pub fn frame_signal(
    signal: &SampledSignal,
    frame_len_s: f64,
    hop_s: f64,
) -> Result<FrameSequence<'_>> {
    if !(frame_len_s > 0.0) || !(hop_s > 0.0) {
        return Err(invalid(format!(
            "frame length and hop must be positive (got {frame_len_s} s, {hop_s} s)"
        )));
    }
    let fs = signal.sample_rate_hz();
    let frame_len = seconds_to_samples(frame_len_s, fs);
    let hop = seconds_to_samples(hop_s, fs);
    if frame_len < 2 {
        return Err(invalid(format!(
            "frame of {frame_len_s} s holds fewer than two samples at {fs} Hz"
        )));
    }
    if hop == 0 {
        return Err(invalid(format!(
            "hop of {hop_s} s is shorter than one sample"
        )));
    }
    let n = signal.len();
    let count = if n < frame_len {
        0
    } else {
        (n - frame_len) / hop + 1
    };
    let start_times_s = (0..count).map(|i| (i * hop) as f64 / fs).collect();
    Ok(FrameSequence {
        samples: signal.samples(),
        frame_len_samples: frame_len,
        hop_samples: hop,
        sample_rate_hz: fs,
        start_times_s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    #[default]
    Hann,
    Rectangular,
}

impl std::str::FromStr for WindowKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hann" => Ok(Self::Hann),
            "rect" | "rectangular" => Ok(Self::Rectangular),
            other => Err(invalid(format!("unknown window `{other}`"))),
        }
    }
}

impl std::fmt::Display for WindowKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Hann => "hann",
            Self::Rectangular => "rectangular",
        })
    }
}

type WindowCache = HashMap<(WindowKind, usize), Rc<[f64]>>;

thread_local! {
    static WINDOWS: RefCell<WindowCache> = RefCell::new(HashMap::new());
}

/// Window coefficients scaled to unit coherent gain (they sum to `len`), so a
/// sinusoid centred on a bin has the same peak power under every window.
pub fn window(kind: WindowKind, len: usize) -> Rc<[f64]> {
    WINDOWS.with(|cache| {
        cache
            .borrow_mut()
            .entry((kind, len))
            .or_insert_with(|| {
                let raw: Vec<f64> = match kind {
                    WindowKind::Rectangular => vec![1.0; len],
                    // periodic (DFT-even) Hann
                    WindowKind::Hann => (0..len)
                        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos())
                        .collect(),
                };
                let sum: f64 = raw.iter().sum();
                let gain = if sum > 0.0 { len as f64 / sum } else { 1.0 };
                raw.into_iter().map(|w| w * gain).collect()
            })
            .clone()
    })
}

/// Smallest power of two that holds a frame of `frame_len` samples.
pub fn default_nfft(frame_len: usize) -> usize {
    frame_len.max(1).next_power_of_two()
}

/// One-sided storage of a two-sided power spectrum.
///
/// `values[k]` is `|X_k|^2 / nfft` for `k = 0..=nfft/2`; the negative-frequency
/// half is implied by symmetry. With this scaling the two-sided sum equals the
/// energy of the windowed frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    pub values: Vec<f64>,
    pub bin_hz: f64,
    pub nfft: usize,
}

impl PowerSpectrum {
    pub fn frequency_hz(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_hz
    }

    /// Sum over all `nfft` two-sided bins.
    pub fn two_sided_total(&self) -> f64 {
        two_sided_sum(&self.values, self.nfft)
    }
}

fn two_sided_sum(one_sided: &[f64], nfft: usize) -> f64 {
    let last = nfft / 2;
    one_sided
        .iter()
        .enumerate()
        .map(|(k, v)| {
            if k == 0 || (nfft.is_multiple_of(2) && k == last) {
                *v
            } else {
                2.0 * v
            }
        })
        .sum()
}

/// Power spectrum of a windowed, zero-padded frame.
pub fn power_spectrum(
    frame: &[f64],
    window_kind: WindowKind,
    nfft: usize,
    sample_rate_hz: f64,
) -> Result<PowerSpectrum> {
    if nfft < frame.len() || nfft == 0 {
        return Err(invalid(format!(
            "nfft {nfft} is shorter than the frame ({} samples)",
            frame.len()
        )));
    }
    if !(sample_rate_hz > 0.0) {
        return Err(invalid("sample rate must be positive"));
    }
    let w = window(window_kind, frame.len());
    let windowed: Vec<f64> = frame.iter().zip(w.iter()).map(|(x, w)| x * w).collect();
    let mut buf = fft::real_to_complex(&windowed, nfft);
    fft::forward(&mut buf);
    let scale = 1.0 / nfft as f64;
    let values = buf[..=nfft / 2]
        .iter()
        .map(|c| c.norm_sqr() * scale)
        .collect();
    Ok(PowerSpectrum {
        values,
        bin_hz: sample_rate_hz / nfft as f64,
        nfft,
    })
}

/// Natural-log power spectrum with a relative floor.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPowerSpectrum {
    pub values: Vec<f64>,
    pub bin_hz: f64,
    pub nfft: usize,
    pub floor_applied: bool,
}

/// `ln(max(p, floor_rel * max(p)))` per bin. An all-zero spectrum maps to the
/// absolute floor everywhere.
pub fn log_power_spectrum(ps: &PowerSpectrum, floor_rel: f64) -> Result<LogPowerSpectrum> {
    if !(floor_rel > 0.0) {
        return Err(invalid(format!(
            "floor_rel must be positive, got {floor_rel}"
        )));
    }
    let peak = ps.values.iter().copied().fold(0.0_f64, f64::max);
    let floor = if peak > 0.0 {
        (floor_rel * peak).max(ABSOLUTE_LOG_FLOOR)
    } else {
        ABSOLUTE_LOG_FLOOR
    };
    let mut floor_applied = false;
    let values = ps
        .values
        .iter()
        .map(|&p| {
            if p < floor {
                floor_applied = true;
                floor.ln()
            } else {
                p.ln()
            }
        })
        .collect();
    Ok(LogPowerSpectrum {
        values,
        bin_hz: ps.bin_hz,
        nfft: ps.nfft,
        floor_applied,
    })
}

/// Biased autocorrelation `r[l] = sum_i x[i] x[i+l]` at non-negative lags.
#[derive(Debug, Clone, PartialEq)]
pub struct Autocorrelation {
    pub values: Vec<f64>,
    pub lag_step_s: f64,
}

/// Autocorrelation up to `max_lag_s`, computed as the inverse transform of the
/// (linear, unwindowed) power spectrum with enough zero padding to avoid
/// circular wrap-around.
pub fn autocorrelation(
    frame: &[f64],
    max_lag_s: f64,
    sample_rate_hz: f64,
) -> Result<Autocorrelation> {
    if !(sample_rate_hz > 0.0) {
        return Err(invalid("sample rate must be positive"));
    }
    if !(max_lag_s >= 0.0) {
        return Err(invalid(format!(
            "max lag must be non-negative, got {max_lag_s}"
        )));
    }
    let max_lag = (max_lag_s * sample_rate_hz + 1e-9).floor() as usize;
    if max_lag >= frame.len() {
        return Err(invalid(format!(
            "max lag of {max_lag} samples does not fit a frame of {} samples",
            frame.len()
        )));
    }
    let nfft = (2 * frame.len()).next_power_of_two();
    let mut buf = fft::real_to_complex(frame, nfft);
    fft::forward(&mut buf);
    for c in buf.iter_mut() {
        *c = (c.norm_sqr() / nfft as f64).into();
    }
    fft::inverse(&mut buf);
    Ok(Autocorrelation {
        values: buf[..=max_lag].iter().map(|c| c.re).collect(),
        lag_step_s: 1.0 / sample_rate_hz,
    })
}

/// Destructive-interference nulls located in a power spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeSpacing {
    /// Least-squares null spacing.
    pub spacing_hz: f64,
    pub null_frequencies_hz: Vec<f64>,
}

/// Locates interference nulls in `band_hz` and fits their uniform spacing.
///
/// The log spectrum is smoothed over `smooth_bins` bins; runs that fall more
/// than `min_depth_db` below the in-band median each contribute one null (their
/// deepest bin). Missed nulls are tolerated by assigning fringe orders from the
/// median null gap. Returns `None` when fewer than three nulls are found.
pub fn measure_fringe_spacing(
    ps: &PowerSpectrum,
    band_hz: (f64, f64),
    smooth_bins: usize,
    min_depth_db: f64,
) -> Option<FringeSpacing> {
    let lo = (band_hz.0 / ps.bin_hz).ceil().max(0.0) as usize;
    let hi = ((band_hz.1 / ps.bin_hz).floor() as usize).min(ps.values.len() - 1);
    if hi <= lo + smooth_bins {
        return None;
    }
    let peak = ps.values.iter().copied().fold(0.0_f64, f64::max);
    if peak <= 0.0 {
        return None;
    }
    let floor = peak * DEFAULT_FLOOR_REL;
    let db: Vec<f64> = ps.values[lo..=hi]
        .iter()
        .map(|&p| 10.0 * p.max(floor).log10())
        .collect();
    let half = smooth_bins / 2;
    let smooth: Vec<f64> = (0..db.len())
        .map(|i| {
            let a = i.saturating_sub(half);
            let b = (i + half + 1).min(db.len());
            db[a..b].iter().sum::<f64>() / (b - a) as f64
        })
        .collect();
    let mut sorted = smooth.clone();
    sorted.sort_by(f64::total_cmp);
    let threshold = sorted[sorted.len() / 2] - min_depth_db;

    // (frequency, depth) of the deepest bin in each run below threshold
    let mut candidates: Vec<(f64, f64)> = Vec::new();
    let mut run: Option<(usize, f64)> = None;
    for (i, &v) in smooth.iter().enumerate() {
        if v < threshold {
            run = match run {
                Some((j, best)) if best <= v => Some((j, best)),
                _ => Some((i, v)),
            };
        } else if let Some((j, best)) = run.take() {
            candidates.push(((lo + j) as f64 * ps.bin_hz, best));
        }
    }
    if candidates.len() < 3 {
        return None;
    }
    // noise can split one null into several runs; keep the deepest of any
    // cluster much closer than the typical gap
    let typical = median_gap(candidates.iter().map(|c| c.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for c in candidates {
        match merged.last_mut() {
            Some(last) if c.0 - last.0 < 0.35 * typical => {
                if c.1 < last.1 {
                    *last = c;
                }
            }
            _ => merged.push(c),
        }
    }
    let nulls: Vec<f64> = merged.into_iter().map(|c| c.0).collect();
    if nulls.len() < 3 {
        return None;
    }

    let typical = median_gap(nulls.iter().copied());
    let mut orders = vec![0.0];
    for w in nulls.windows(2) {
        let step = ((w[1] - w[0]) / typical).round().max(1.0);
        orders.push(orders.last().unwrap() + step);
    }
    let n = nulls.len() as f64;
    let mean_o = orders.iter().sum::<f64>() / n;
    let mean_f = nulls.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (o, f) in orders.iter().zip(&nulls) {
        sxy += (o - mean_o) * (f - mean_f);
        sxx += (o - mean_o) * (o - mean_o);
    }
    Some(FringeSpacing {
        spacing_hz: sxy / sxx,
        null_frequencies_hz: nulls,
    })
}

fn median_gap(freqs: impl Iterator<Item = f64>) -> f64 {
    let freqs: Vec<f64> = freqs.collect();
    let mut gaps: Vec<f64> = freqs.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(f64::total_cmp);
    gaps[gaps.len() / 2]
}
