//! End-to-end properties on simulated transits.

use cepstral_tde::cepstrum::{
    frame_cepstrum, mean_cepstrum, pick_delay, CepstrumParams, EstimationMethod, SubtractionFactor,
};
use cepstral_tde::eval::{
    direct_path_power, mae, rahmonic_contrast, run_estimators, sweep_snr, sweep_subtraction_factor,
    AnalysisConfig, GroundTruthTrack, PreparedRecording, SnrSweepConfig,
};
use cepstral_tde::signal::SampledSignal;
use cepstral_tde::sim::{
    apply_static_echo, color_noise_samples, mix_at_snr, mix_with_reference_power, simulate_transit,
    straight_transit, synth_source_noise, EchoModel, EnvironmentModel, NoiseModel,
    SimulatedTransit, SourceConfig, DEFAULT_BAND_HZ,
};

const FS: f64 = 250_000.0;

fn transit(speed_mps: f64, seed: u64) -> SimulatedTransit {
    let track = straight_transit(10.0, speed_mps, 200.0, 0.1).unwrap();
    simulate_transit(
        &track,
        &EnvironmentModel::default(),
        1.0,
        seed,
        &SourceConfig::default(),
    )
    .unwrap()
}

fn with_noise(sim: &SimulatedTransit, snr_db: f64, seed: u64) -> SampledSignal {
    let model = NoiseModel::flat(DEFAULT_BAND_HZ, FS / 2.0, seed).unwrap();
    let noise = color_noise_samples(&model, sim.recording.len(), FS).unwrap();
    let reference = direct_path_power(&sim.recording, 1.0, DEFAULT_BAND_HZ).unwrap();
    mix_with_reference_power(&sim.recording, &noise, reference, snr_db, DEFAULT_BAND_HZ).unwrap()
}

#[test]
fn full_transit_mean_holds_little_rahmonic_energy() {
    let sim = transit(1.5, 31);
    assert!(sim.true_delays_s.len() > 2600);
    let cfg = AnalysisConfig::default();
    let prepared = PreparedRecording::new(&sim.recording, &cfg).unwrap();
    let cg = prepared.cepstrogram();
    let mean = mean_cepstrum(cg, 0..cg.len()).unwrap();
    assert_eq!(mean.frames_used, cg.len());
    // compare the mean and one frame at that frame's rahmonic
    let m = cg.len() / 2;
    let truth = sim.true_delays_s[m];
    let frame = rahmonic_contrast(&cg.rows[m], truth, cfg.q_min_s, cfg.q_max_s).unwrap();
    let mut as_row = cg.rows[m].clone();
    as_row.values = mean.values.clone();
    let in_mean = rahmonic_contrast(&as_row, truth, cfg.q_min_s, cfg.q_max_s).unwrap();
    assert!(
        in_mean.peak_magnitude <= 0.05 * frame.peak_magnitude,
        "mean {} vs frame {}",
        in_mean.peak_magnitude,
        frame.peak_magnitude
    );
}

#[test]
fn echo_detectable_at_minus_ten_db() {
    let params = CepstrumParams::default();
    let model = NoiseModel::flat(DEFAULT_BAND_HZ, FS / 2.0, 77).unwrap();
    let mut detected = 0;
    for i in 0..100u64 {
        let s = synth_source_noise(0.102, FS, DEFAULT_BAND_HZ, 1000 + i).unwrap();
        let x = apply_static_echo(&s, &EchoModel::new(1.0, 224e-6).unwrap()).unwrap();
        let x = SampledSignal::new(x.samples()[..25_000].to_vec(), FS).unwrap();
        let noise = color_noise_samples(&model.with_seed(i), x.len(), FS).unwrap();
        let y = mix_at_snr(&x, &noise, -10.0, DEFAULT_BAND_HZ).unwrap();
        let c = frame_cepstrum(y.samples(), FS, &params).unwrap();
        let r = rahmonic_contrast(&c, 224e-6, 40e-6, 2000e-6).unwrap();
        // the peak within a bin of the echo stands clear of the in-window floor
        if r.ratio >= 6.0 {
            detected += 1;
        }
    }
    assert!(detected >= 50, "detected in {detected} of 100 frames");
}

#[test]
fn subtraction_beats_plain_cepstrum_at_zero_db() {
    let sim = transit(13.3, 41);
    let truth = GroundTruthTrack::from(&sim);
    let noisy = with_noise(&sim, 0.0, 42);
    let sweep = sweep_subtraction_factor(
        &noisy,
        &truth,
        &[0.0, 0.5, 1.0, 1.5, 2.0],
        &AnalysisConfig::default(),
    )
    .unwrap();
    let curve = sweep.mae_curve(EstimationMethod::CepstrumSubtracted);
    let best = curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    assert!(sweep.grid[best] >= 1.0, "curve {curve:?}");
    assert!(
        curve[3] < curve[0],
        "a = 1.5 gives {} us, a = 0 gives {} us",
        curve[3] * 1e6,
        curve[0] * 1e6
    );
}

#[test]
fn snr_sweep_is_nearly_monotone() {
    let sim = transit(40.0, 51);
    let truth = GroundTruthTrack::from(&sim);
    let sweep = SnrSweepConfig {
        noise: NoiseModel::flat(DEFAULT_BAND_HZ, FS / 2.0, 0).unwrap(),
        grid_db: (-5..=5).map(|i| i as f64 * 3.0).collect(),
        repetitions: 1,
        band_hz: DEFAULT_BAND_HZ,
        reference_power: Some(direct_path_power(&sim.recording, 1.0, DEFAULT_BAND_HZ).unwrap()),
        master_seed: 52,
    };
    let cfg = AnalysisConfig::default();
    let result = sweep_snr(
        &sim.recording,
        &truth,
        &sweep,
        &[EstimationMethod::CepstrumSubtracted],
        &cfg,
    )
    .unwrap();
    let curve = result.mae_curve(EstimationMethod::CepstrumSubtracted);
    let inversions: Vec<f64> = curve
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .collect();
    assert!(
        inversions.len() <= 1 && inversions.iter().all(|d| *d <= 5e-6),
        "curve (us) {:?}",
        curve.iter().map(|v| v * 1e6).collect::<Vec<_>>()
    );
}

#[test]
fn noiseless_subtracted_estimates_track_truth() {
    let sim = transit(20.0, 61);
    let truth = GroundTruthTrack::from(&sim);
    let cfg = AnalysisConfig {
        factor: SubtractionFactor::scalar(1.5).unwrap(),
        ..Default::default()
    };
    let series = run_estimators(
        &sim.recording,
        &truth,
        &[EstimationMethod::CepstrumSubtracted],
        &cfg,
    )
    .unwrap();
    let report = mae(&series[0], &truth).unwrap();
    assert!(report.mae_s < 10e-6, "MAE {} us", report.mae_s * 1e6);
    assert_eq!(report.frames_excluded, 0);
    for e in &series[0].estimates {
        let bins = e.delay_s * FS;
        assert!((bins - bins.round()).abs() < 1e-9);
        assert!(e.delay_s >= 40e-6 && e.delay_s <= 2000e-6);
    }
}

#[test]
fn third_rahmonic_wins_above_500_us() {
    let s = synth_source_noise(0.11, FS, (0.0, FS / 2.0), 71).unwrap();
    let x = apply_static_echo(&s, &EchoModel::new(1.0, 224e-6).unwrap()).unwrap();
    let c = frame_cepstrum(&x.samples()[..25_000], FS, &CepstrumParams::default()).unwrap();
    let e = pick_delay(&c, 500e-6, 2000e-6).unwrap();
    assert!((e.delay_s - 672e-6).abs() <= 4e-6 + 1e-12);
}
