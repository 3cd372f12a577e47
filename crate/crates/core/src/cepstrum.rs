//! Power cepstrum, rahmonic model, mean-cepstrum estimation, cepstrum
//! subtraction and peak-picking delay estimators.
//!
//! A received frame `x(t) = s(t) + alpha * s(t - tau)` has log power spectrum
//! `ln|S|^2 + ln(1 + alpha^2 + 2 alpha cos(2 pi f tau))`. Its power cepstrum is
//! the cepstrum of the source plus an impulse train ("rahmonics") at `n * tau`
//! with strengths `(2/n) (-1)^(n+1) alpha^n`. The source part does not depend
//! on `tau`, so averaging cepstra over frames whose delay keeps changing
//! estimates it, and subtracting that mean leaves the rahmonics.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fft;
use crate::signal::{
    default_nfft, log_power_spectrum, power_spectrum, Autocorrelation, FrameSequence,
    LogPowerSpectrum, WindowKind, DEFAULT_FLOOR_REL,
};

/// Real power cepstrum on a discrete quefrency axis.
///
/// `values[k]` is the unnormalised inverse DFT of the two-sided log power
/// spectrum at quefrency `k / fs`, so `values[0]` is the sum (mean times
/// `nfft`) of the log spectrum. Only `k = 0..=nfft/2` is stored; negative
/// quefrencies mirror the positive ones. Cepstrogram rows may be truncated to
/// fewer bins.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerCepstrum {
    pub values: Vec<f64>,
    pub quefrency_step_s: f64,
    pub nfft: usize,
    /// Set once a mean cepstrum has been subtracted with a non-zero factor.
    pub subtracted: bool,
}

impl PowerCepstrum {
    pub fn quefrency_s(&self, bin: usize) -> f64 {
        bin as f64 * self.quefrency_step_s
    }

    /// Largest quefrency held by `values`.
    pub fn extent_s(&self) -> f64 {
        self.quefrency_s(self.values.len().saturating_sub(1))
    }

    fn truncated(mut self, bins: Option<usize>) -> Self {
        if let Some(b) = bins {
            self.values.truncate(b);
        }
        self
    }
}

/// Inverse transform of the symmetrised log power spectrum.
pub fn power_cepstrum(lps: &LogPowerSpectrum) -> PowerCepstrum {
    let nfft = lps.nfft;
    let mut buf = vec![fft::Complex::default(); nfft];
    for (k, slot) in buf.iter_mut().enumerate() {
        let mirrored = if k <= nfft / 2 { k } else { nfft - k };
        slot.re = lps.values[mirrored];
    }
    fft::inverse(&mut buf);
    // input is real and even, so the imaginary part is rounding residue
    PowerCepstrum {
        values: buf[..=nfft / 2].iter().map(|c| c.re).collect(),
        quefrency_step_s: 1.0 / (lps.bin_hz * nfft as f64),
        nfft,
        subtracted: false,
    }
}

/// Strength `(2/n) (-1)^(n+1) alpha^n` of the `n`-th rahmonic.
pub fn rahmonic_strength(n: u32, alpha: f64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("rahmonic number must be at least 1"));
    }
    let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
    Ok(2.0 / n as f64 * sign * alpha.powi(n as i32))
}

/// Analytic rahmonic impulse train of a single echo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RahmonicModel {
    pub alpha: f64,
    pub tau_beta_s: f64,
}

impl RahmonicModel {
    pub fn new(alpha: f64, tau_beta_s: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        if !(tau_beta_s > 0.0) {
            return Err(invalid(format!("delay must be positive, got {tau_beta_s}")));
        }
        Ok(Self { alpha, tau_beta_s })
    }

    /// `(n, quefrency_s, strength)` for the first `count` rahmonics.
    pub fn strengths(&self, count: u32) -> Vec<(u32, f64, f64)> {
        (1..=count)
            .map(|n| {
                let a = rahmonic_strength(n, self.alpha).expect("n >= 1");
                (n, n as f64 * self.tau_beta_s, a)
            })
            .collect()
    }
}

/// Settings shared by every frame of a cepstrogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CepstrumParams {
    pub window: WindowKind,
    /// Transform length; `None` picks the next power of two above the frame.
    pub nfft: Option<usize>,
    pub floor_rel: f64,
    /// Keep only quefrencies up to this value (saves memory on long records).
    pub max_quefrency_s: Option<f64>,
}

impl Default for CepstrumParams {
    fn default() -> Self {
        Self {
            window: WindowKind::Hann,
            nfft: None,
            floor_rel: DEFAULT_FLOOR_REL,
            max_quefrency_s: None,
        }
    }
}

/// Stack of per-frame cepstra sharing one quefrency axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Cepstrogram {
    pub rows: Vec<PowerCepstrum>,
    pub frame_times_s: Vec<f64>,
    pub quefrency_step_s: f64,
    /// Bins per row (known even when there are no rows).
    pub bins: usize,
}

impl Cepstrogram {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Cepstrum of a single frame with the given settings.
pub fn frame_cepstrum(
    frame: &[f64],
    sample_rate_hz: f64,
    params: &CepstrumParams,
) -> Result<PowerCepstrum> {
    let nfft = params.nfft.unwrap_or_else(|| default_nfft(frame.len()));
    let ps = power_spectrum(frame, params.window, nfft, sample_rate_hz)?;
    let lps = log_power_spectrum(&ps, params.floor_rel)?;
    Ok(power_cepstrum(&lps).truncated(kept_bins(nfft, sample_rate_hz, params)))
}

fn kept_bins(nfft: usize, sample_rate_hz: f64, params: &CepstrumParams) -> Option<usize> {
    params.max_quefrency_s.map(|q| {
        let x = q * sample_rate_hz;
        let last = if (x - x.round()).abs() < 1e-6 {
            x.round()
        } else {
            x.ceil()
        } as usize;
        (last + 1).min(nfft / 2 + 1)
    })
}

/// One cepstrum per frame, in frame order.
pub fn build_cepstrogram(
    frames: &FrameSequence<'_>,
    params: &CepstrumParams,
) -> Result<Cepstrogram> {
    let fs = frames.sample_rate_hz();
    let nfft = params
        .nfft
        .unwrap_or_else(|| default_nfft(frames.frame_len_samples()));
    if nfft < frames.frame_len_samples() {
        return Err(invalid(format!(
            "nfft {nfft} is shorter than the frame ({} samples)",
            frames.frame_len_samples()
        )));
    }
    let params = CepstrumParams {
        nfft: Some(nfft),
        ..*params
    };
    let rows = (0..frames.len())
        .into_par_iter()
        .map(|i| frame_cepstrum(frames.frame(i), fs, &params))
        .collect::<Result<Vec<_>>>()?;
    Ok(Cepstrogram {
        rows,
        frame_times_s: frames.start_times_s().to_vec(),
        quefrency_step_s: 1.0 / fs,
        bins: kept_bins(nfft, fs, &params).unwrap_or(nfft / 2 + 1),
    })
}

/// Per-quefrency arithmetic mean over a set of cepstra.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanCepstrum {
    pub values: Vec<f64>,
    pub frames_used: usize,
}

/// Mean of the rows in `selection`. Rows are summed sequentially in index
/// order, so the result does not depend on how the rows were computed.
pub fn mean_cepstrum(cg: &Cepstrogram, selection: Range<usize>) -> Result<MeanCepstrum> {
    if selection.is_empty() || selection.end > cg.rows.len() {
        return Err(invalid(format!(
            "frame selection {selection:?} is empty or exceeds {} rows",
            cg.rows.len()
        )));
    }
    let mut sum = vec![0.0; cg.bins];
    for row in &cg.rows[selection.clone()] {
        for (s, v) in sum.iter_mut().zip(&row.values) {
            *s += v;
        }
    }
    let m = selection.len();
    Ok(MeanCepstrum {
        values: sum.into_iter().map(|s| s / m as f64).collect(),
        frames_used: m,
    })
}

/// Trailing running mean: entry `m` averages rows `m+1-window ..= m` (fewer
/// at the start of the record).
pub fn trailing_mean_cepstra(cg: &Cepstrogram, window: usize) -> Result<Vec<MeanCepstrum>> {
    if window == 0 {
        return Err(invalid("trailing mean window must hold at least one frame"));
    }
    (0..cg.rows.len())
        .map(|m| mean_cepstrum(cg, (m + 1).saturating_sub(window)..m + 1))
        .collect()
}

/// Amount of mean cepstrum removed by [`cepstrum_subtract`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SubtractionFactor {
    Scalar(f64),
    PerQuefrency(Vec<f64>),
}

impl SubtractionFactor {
    pub fn scalar(a: f64) -> Result<Self> {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(invalid(format!("subtraction factor must be >= 0, got {a}")));
        }
        Ok(Self::Scalar(a))
    }

    pub fn per_quefrency(a: Vec<f64>) -> Result<Self> {
        if let Some(v) = a.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(invalid(format!("subtraction factor must be >= 0, got {v}")));
        }
        Ok(Self::PerQuefrency(a))
    }

    fn at(&self, k: usize) -> f64 {
        match self {
            Self::Scalar(a) => *a,
            Self::PerQuefrency(v) => v[k],
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Self::Scalar(a) => *a == 0.0,
            Self::PerQuefrency(v) => v.iter().all(|a| *a == 0.0),
        }
    }
}

impl Default for SubtractionFactor {
    fn default() -> Self {
        Self::Scalar(1.5)
    }
}

/// `c(k) - a(k) * mean(k)` elementwise.
pub fn cepstrum_subtract(
    c: &PowerCepstrum,
    mean: &MeanCepstrum,
    factor: &SubtractionFactor,
) -> Result<PowerCepstrum> {
    if c.values.len() != mean.values.len() {
        return Err(invalid(format!(
            "cepstrum has {} bins but the mean has {}",
            c.values.len(),
            mean.values.len()
        )));
    }
    if let SubtractionFactor::PerQuefrency(v) = factor {
        if v.len() != c.values.len() {
            return Err(invalid(format!(
                "factor vector has {} entries for {} bins",
                v.len(),
                c.values.len()
            )));
        }
    }
    if factor.is_zero() {
        return Ok(c.clone());
    }
    let values = c
        .values
        .iter()
        .zip(&mean.values)
        .enumerate()
        .map(|(k, (v, m))| v - factor.at(k) * m)
        .collect();
    Ok(PowerCepstrum {
        values,
        subtracted: true,
        ..*c
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimationMethod {
    Cepstrum,
    CepstrumSubtracted,
    Autocorrelation,
}

impl EstimationMethod {
    pub const ALL: [Self; 3] = [
        Self::Cepstrum,
        Self::CepstrumSubtracted,
        Self::Autocorrelation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Cepstrum => "cepstrum",
            Self::CepstrumSubtracted => "cepstrum-subtracted",
            Self::Autocorrelation => "autocorrelation",
        }
    }
}

impl std::fmt::Display for EstimationMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EstimationMethod {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown estimation method `{s}`")))
    }
}

/// Peak location within a quefrency (or lag) search window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayEstimate {
    pub delay_s: f64,
    pub peak_value: f64,
    /// Peak over the median absolute value in the window; a significance hint,
    /// not a detection threshold.
    pub peak_to_median: f64,
    pub search_window_s: (f64, f64),
    pub method: EstimationMethod,
}

/// Inclusive bin range `[lo, hi]` covered by `[q_min, q_max]` on an axis of
/// `len` bins spaced `step`.
pub(crate) fn window_bins(
    q_min_s: f64,
    q_max_s: f64,
    step: f64,
    len: usize,
) -> Result<(usize, usize)> {
    if !(q_min_s > 0.0 && q_max_s > q_min_s) {
        return Err(invalid(format!(
            "search window [{q_min_s}, {q_max_s}] s must satisfy 0 < q_min < q_max"
        )));
    }
    let extent = (len.saturating_sub(1)) as f64 * step;
    if q_max_s > extent * (1.0 + 1e-9) {
        return Err(invalid(format!(
            "search window upper edge {q_max_s} s exceeds the axis extent {extent} s"
        )));
    }
    let snap = |x: f64, up: bool| {
        if (x - x.round()).abs() < 1e-6 {
            x.round()
        } else if up {
            x.ceil()
        } else {
            x.floor()
        }
    };
    let lo = snap(q_min_s / step, true) as usize;
    let hi = (snap(q_max_s / step, false) as usize).min(len - 1);
    if lo > hi {
        return Err(invalid(format!(
            "search window [{q_min_s}, {q_max_s}] s contains no bins"
        )));
    }
    Ok((lo, hi))
}

fn pick_peak(
    values: &[f64],
    step: f64,
    q_min_s: f64,
    q_max_s: f64,
    method: EstimationMethod,
) -> Result<DelayEstimate> {
    let (lo, hi) = window_bins(q_min_s, q_max_s, step, values.len())?;
    let mut best = lo;
    for k in lo + 1..=hi {
        // strict comparison keeps the smallest quefrency on ties
        if values[k] > values[best] {
            best = k;
        }
    }
    let median = median_abs(&values[lo..=hi]);
    let peak = values[best];
    Ok(DelayEstimate {
        delay_s: best as f64 * step,
        peak_value: peak,
        peak_to_median: if median > 0.0 {
            peak / median
        } else {
            f64::INFINITY
        },
        search_window_s: (q_min_s, q_max_s),
        method,
    })
}

pub(crate) fn median_abs(values: &[f64]) -> f64 {
    let mut abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let n = abs.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        abs[n / 2]
    } else {
        0.5 * (abs[n / 2 - 1] + abs[n / 2])
    }
}

/// Quefrency of the largest cepstrum value in `[q_min_s, q_max_s]`.
pub fn pick_delay(c: &PowerCepstrum, q_min_s: f64, q_max_s: f64) -> Result<DelayEstimate> {
    let method = if c.subtracted {
        EstimationMethod::CepstrumSubtracted
    } else {
        EstimationMethod::Cepstrum
    };
    pick_peak(&c.values, c.quefrency_step_s, q_min_s, q_max_s, method)
}

/// Lag of the largest autocorrelation value in `[q_min_s, q_max_s]`.
pub fn estimate_delay_autocorr(
    ac: &Autocorrelation,
    q_min_s: f64,
    q_max_s: f64,
) -> Result<DelayEstimate> {
    pick_peak(
        &ac.values,
        ac.lag_step_s,
        q_min_s,
        q_max_s,
        EstimationMethod::Autocorrelation,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{autocorrelation, frame_signal, PowerSpectrum, SampledSignal};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    const FS: f64 = 250_000.0;

    fn white(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    /// One 0.1 s frame of white noise plus an equal-strength echo `delay` samples late.
    fn echo_frame(delay: usize, alpha: f64, seed: u64) -> Vec<f64> {
        let s = white(25_000 + delay, seed);
        (delay..s.len())
            .map(|i| s[i] + alpha * s[i - delay])
            .collect()
    }

    fn cepstrum_of(frame: &[f64]) -> PowerCepstrum {
        frame_cepstrum(frame, FS, &CepstrumParams::default()).unwrap()
    }

    fn cg_from(rows: Vec<Vec<f64>>) -> Cepstrogram {
        let bins = rows[0].len();
        Cepstrogram {
            frame_times_s: (0..rows.len()).map(|i| i as f64).collect(),
            rows: rows
                .into_iter()
                .map(|values| PowerCepstrum {
                    values,
                    quefrency_step_s: 1.0,
                    nfft: 2 * (bins - 1),
                    subtracted: false,
                })
                .collect(),
            quefrency_step_s: 1.0,
            bins,
        }
    }

    #[test]
    fn flat_log_spectrum_gives_dc_only() {
        let lps = LogPowerSpectrum {
            values: vec![-2.5; 33],
            bin_hz: 1.0,
            nfft: 64,
            floor_applied: false,
        };
        let c = power_cepstrum(&lps);
        assert_relative_eq!(c.values[0], -2.5 * 64.0, max_relative = 1e-12);
        assert!(c.values[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn dc_bin_is_log_spectrum_sum() {
        let c = {
            let frame = white(1000, 1);
            let ps = power_spectrum(&frame, WindowKind::Hann, 1024, 1.0).unwrap();
            let lps = log_power_spectrum(&ps, 1e-12).unwrap();
            let two_sided: f64 =
                lps.values[0] + lps.values[512] + 2.0 * lps.values[1..512].iter().sum::<f64>();
            (power_cepstrum(&lps), two_sided)
        };
        assert_relative_eq!(c.0.values[0], c.1, max_relative = 1e-9);
    }

    #[test]
    fn rahmonic_strength_values() {
        assert_eq!(rahmonic_strength(1, 1.0).unwrap(), 2.0);
        assert_eq!(rahmonic_strength(2, 1.0).unwrap(), -1.0);
        assert_relative_eq!(rahmonic_strength(3, 0.5).unwrap(), 2.0 / 3.0 * 0.125);
        assert!(rahmonic_strength(0, 0.5).is_err());
    }

    #[test]
    fn rahmonic_model_alternates_and_decays() {
        let m = RahmonicModel::new(0.8, 224e-6).unwrap();
        let s = m.strengths(6);
        for w in s.windows(2) {
            assert!(w[0].2 * w[1].2 < 0.0);
            assert!(w[0].2.abs() > w[1].2.abs());
        }
        assert_relative_eq!(s[2].1, 672e-6);
        assert!(RahmonicModel::new(0.0, 1e-3).is_err());
    }

    #[test]
    fn echo_rahmonics_alternate() {
        let c = cepstrum_of(&echo_frame(56, 1.0, 7));
        assert!(c.values[56] > 0.0);
        assert!(c.values[112] < 0.0);
        assert!(c.values[168] > 0.0);
        let ratio = c.values[112] / c.values[56];
        assert!((ratio + 0.5).abs() < 0.075, "a2/a1 = {ratio}");
    }

    #[test]
    fn echo_free_frame_has_no_rahmonic() {
        let c = cepstrum_of(&white(25_000, 8));
        let window = &c.values[10..500];
        let median = median_abs(window);
        // the bin at 56 samples is ordinary noise
        assert!(c.values[56].abs() < 6.0 * median);
    }

    #[test]
    fn pick_delay_finds_first_rahmonic() {
        let c = cepstrum_of(&echo_frame(56, 1.0, 9));
        let est = pick_delay(&c, 40e-6, 2000e-6).unwrap();
        assert_relative_eq!(est.delay_s, 224e-6, epsilon = 4.1e-6);
        assert_eq!(est.method, EstimationMethod::Cepstrum);
        assert!(est.peak_to_median > 10.0);
    }

    #[test]
    fn pick_delay_upper_window_lands_on_third_rahmonic() {
        // in [500, 2000] us only odd rahmonics are positive; n = 3 is the largest
        let c = cepstrum_of(&echo_frame(56, 1.0, 9));
        let est = pick_delay(&c, 500e-6, 2000e-6).unwrap();
        assert_relative_eq!(est.delay_s, 672e-6, epsilon = 4.1e-6);
        // brute-force scan agrees
        let (best, _) = c.values[125..=500]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert_eq!(best + 125, 168);
    }

    #[test]
    fn ties_break_low() {
        let c = PowerCepstrum {
            values: vec![1.0; 100],
            quefrency_step_s: 1e-3,
            nfft: 198,
            subtracted: false,
        };
        let est = pick_delay(&c, 0.01, 0.05).unwrap();
        assert_relative_eq!(est.delay_s, 0.01);
    }

    #[test]
    fn pick_delay_window_errors() {
        let c = PowerCepstrum {
            values: vec![0.0; 100],
            quefrency_step_s: 1e-3,
            nfft: 198,
            subtracted: false,
        };
        assert!(pick_delay(&c, 0.0, 0.05).is_err());
        assert!(pick_delay(&c, 0.05, 0.01).is_err());
        assert!(pick_delay(&c, 0.01, 0.5).is_err());
        assert!(pick_delay(&c, 0.0101, 0.0109).is_err());
    }

    #[test]
    fn autocorr_estimator() {
        let ac = autocorrelation(&echo_frame(56, 1.0, 2), 2e-3, FS).unwrap();
        let est = estimate_delay_autocorr(&ac, 40e-6, 2000e-6).unwrap();
        assert_relative_eq!(est.delay_s, 224e-6, epsilon = 4.1e-6);
        assert_eq!(est.method, EstimationMethod::Autocorrelation);

        // 100 us period sine
        let sine: Vec<f64> = (0..25_000)
            .map(|i| (2.0 * std::f64::consts::PI * 10_000.0 * i as f64 / FS).sin())
            .collect();
        let ac = autocorrelation(&sine, 2e-3, FS).unwrap();
        let est = estimate_delay_autocorr(&ac, 40e-6, 2000e-6).unwrap();
        assert_relative_eq!(est.delay_s, 100e-6, epsilon = 1e-9);
    }

    #[test]
    fn autocorr_no_echo_has_low_significance() {
        let ac = autocorrelation(&white(25_000, 4), 2e-3, FS).unwrap();
        let est = estimate_delay_autocorr(&ac, 40e-6, 2000e-6).unwrap();
        let echo = autocorrelation(&echo_frame(56, 1.0, 4), 2e-3, FS).unwrap();
        let with_echo = estimate_delay_autocorr(&echo, 40e-6, 2000e-6).unwrap();
        assert!(est.peak_to_median < 6.0);
        assert!(with_echo.peak_to_median > 20.0);
    }

    #[test]
    fn cepstrogram_rows_follow_frames() {
        let samples = white(25_000 * 3, 5);
        let sig = SampledSignal::new(samples, FS).unwrap();
        let frames = frame_signal(&sig, 0.1, 0.1).unwrap();
        let cg = build_cepstrogram(&frames, &CepstrumParams::default()).unwrap();
        assert_eq!(cg.len(), 3);
        assert_eq!(cg.rows[1], cepstrum_of(frames.frame(1)));
        assert_eq!(cg.bins, 16_385);

        let truncated = build_cepstrogram(
            &frames,
            &CepstrumParams {
                max_quefrency_s: Some(300e-6),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(truncated.bins, 76);
        assert_eq!(truncated.rows[2].values[..], cg.rows[2].values[..76]);

        let short = SampledSignal::new(vec![0.0; 100], FS).unwrap();
        let none = build_cepstrogram(
            &frame_signal(&short, 0.1, 0.1).unwrap(),
            &CepstrumParams::default(),
        )
        .unwrap();
        assert!(none.is_empty());
        assert_eq!(none.bins, 16_385);
    }

    #[test]
    fn mean_of_identical_and_opposite_rows() {
        let v = vec![1.5, -2.0, 0.25];
        let cg = cg_from(vec![v.clone(), v.clone(), v.clone()]);
        assert_eq!(mean_cepstrum(&cg, 0..3).unwrap().values, v);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let cg = cg_from(vec![v, neg]);
        let m = mean_cepstrum(&cg, 0..2).unwrap();
        assert!(m.values.iter().all(|x| *x == 0.0));
        assert_eq!(m.frames_used, 2);
        assert!(mean_cepstrum(&cg, 1..1).is_err());
        assert!(mean_cepstrum(&cg, 0..3).is_err());
    }

    #[test]
    fn trailing_mean_windows() {
        let cg = cg_from(vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        let means = trailing_mean_cepstra(&cg, 2).unwrap();
        let got: Vec<f64> = means.iter().map(|m| m.values[0]).collect();
        assert_eq!(got, vec![1.0, 1.5, 2.5, 3.5]);
        assert!(trailing_mean_cepstra(&cg, 0).is_err());
    }

    #[test]
    fn subtraction_rules() {
        let c = cg_from(vec![vec![1.0, 2.0, 3.0]]).rows.remove(0);
        let mean = MeanCepstrum {
            values: c.values.clone(),
            frames_used: 1,
        };
        let same = cepstrum_subtract(&c, &mean, &SubtractionFactor::Scalar(0.0)).unwrap();
        assert_eq!(same, c);
        let zero = cepstrum_subtract(&c, &mean, &SubtractionFactor::Scalar(1.0)).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
        assert!(zero.subtracted);
        let per = SubtractionFactor::per_quefrency(vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(
            cepstrum_subtract(&c, &mean, &per).unwrap().values,
            vec![1.0, 0.0, -3.0]
        );

        let short = MeanCepstrum {
            values: vec![0.0; 2],
            frames_used: 1,
        };
        assert!(cepstrum_subtract(&c, &short, &SubtractionFactor::Scalar(1.0)).is_err());
        let bad = SubtractionFactor::PerQuefrency(vec![1.0]);
        assert!(cepstrum_subtract(&c, &mean, &bad).is_err());
        assert!(SubtractionFactor::scalar(-0.1).is_err());
        assert!(SubtractionFactor::per_quefrency(vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn method_tags_round_trip() {
        for m in EstimationMethod::ALL {
            assert_eq!(m.as_str().parse::<EstimationMethod>().unwrap(), m);
        }
        assert!("cepstral".parse::<EstimationMethod>().is_err());
    }

    #[test]
    fn cepstrum_of_zero_frame_is_finite() {
        let ps = PowerSpectrum {
            values: vec![0.0; 17],
            bin_hz: 1.0,
            nfft: 32,
        };
        let c = power_cepstrum(&log_power_spectrum(&ps, 1e-12).unwrap());
        assert!(c.values.iter().all(|v| v.is_finite()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn full_mean_subtraction_averages_to_zero(seed in 0u64..1000, rows in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<Vec<f64>> = (0..rows)
                .map(|_| (0..64).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect();
            let cg = cg_from(data);
            let mean = mean_cepstrum(&cg, 0..rows).unwrap();
            let sub: Vec<PowerCepstrum> = cg
                .rows
                .iter()
                .map(|r| cepstrum_subtract(r, &mean, &SubtractionFactor::Scalar(1.0)).unwrap())
                .collect();
            let residual = mean_cepstrum(&Cepstrogram { rows: sub, ..cg.clone() }, 0..rows).unwrap();
            prop_assert!(residual.values.iter().all(|v| v.abs() <= 1e-12));
        }

        #[test]
        fn estimator_ignores_amplitude(seed in 0u64..200, c in 0.001f64..1000.0) {
            let frame = echo_frame(56, 0.7, seed);
            let scaled: Vec<f64> = frame.iter().map(|v| c * v).collect();
            let a = cepstrum_of(&frame);
            let b = cepstrum_of(&scaled);
            let scale = a.values[1..].iter().map(|v| v.abs()).fold(0.0, f64::max);
            for (x, y) in a.values[1..].iter().zip(&b.values[1..]) {
                prop_assert!((x - y).abs() <= 1e-9 * scale);
            }
            let ea = pick_delay(&a, 40e-6, 2000e-6).unwrap();
            let eb = pick_delay(&b, 40e-6, 2000e-6).unwrap();
            prop_assert_eq!(ea.delay_s, eb.delay_s);
        }
    }
}
