use spdclab_core::qdscatter::*;
use spdclab_core::spectrum::{linspace, symmetric_grid, SpectralDensity};

fn lorentz(x: f64, c: f64, w: f64) -> f64 {
    1.0 / (1.0 + (2.0 * (x - c) / w).powi(2))
}

/// Unit-area two-line source: lines at 0 and `split` GHz, the second at 60 %.
fn two_line_source(split: f64) -> SpectralDensity {
    let grid = symmetric_grid(40.0, 0.005).unwrap();
    SpectralDensity::from_fn(grid, |x| lorentz(x, 0.0, 0.15) + 0.6 * lorentz(x, split, 0.15))
        .unwrap()
        .normalized_to_area()
        .unwrap()
}

/// Biases whose detunings run evenly from +6 to −6 GHz.
fn biases(qd: &QDSpec, n: usize) -> Vec<f64> {
    let span = 6.0 / qd.stark_slope_ghz_per_v;
    linspace(qd.reference_bias_v - span, qd.reference_bias_v + span, n)
}

fn params(strength: f64) -> ScanParams {
    ScanParams {
        incident_rate_hz: 60_000.0,
        collection_efficiency: 0.05,
        scattering_strength: strength,
        dark_rate_hz: 110.0,
        integration_time_s: 600.0,
    }
}

#[test]
fn lineshape_normalization_and_width() {
    let qd = QDSpec::default();
    let w = qd.fwhm_ghz();
    assert!((w - 0.73).abs() < 1e-12);
    assert_eq!(qd_lineshape(&qd, 0.0), 1.0);
    assert!((qd_lineshape(&qd, w / 2.0) - 0.5).abs() < 1e-12);
    let s = qd_line_spectrum(&qd, symmetric_grid(5.0, 0.001).unwrap()).unwrap();
    assert!((s.fwhm().unwrap() - 0.73).abs() <= 0.002);
}

#[test]
fn stark_convention_and_default_range() {
    let qd = QDSpec::default();
    assert_eq!(stark_detuning(&qd, qd.reference_bias_v), 0.0);
    let one_below = stark_detuning(&qd, qd.reference_bias_v - 1.0);
    assert!((one_below - qd.stark_slope_ghz_per_v).abs() < 1e-12);
    // Default scan: -0.45 V to 2.05 V.
    let (a, b) = (stark_detuning(&qd, -0.45), stark_detuning(&qd, 2.05));
    assert!(a >= 5.0 - 1e-9 && b <= -5.0 + 1e-9, "{a} {b}");
}

#[test]
fn disabled_dot_leaves_only_the_background() {
    let qd = QDSpec::default();
    let b = biases(&qd, 201);
    let scan = scattering_scan(&two_line_source(3.0), &qd, &b, &params(0.0), 2024).unwrap();
    let mean = 110.0 * 600.0;
    assert!((mean - 66_000.0f64).abs() < 1e-9);
    for (&c, &bg) in scan.counts.iter().zip(&scan.background) {
        assert_eq!(c, bg);
        assert!((c as f64 - mean).abs() < 4.0 * mean.sqrt());
    }
    let chi2: f64 = scan.counts.iter().map(|&c| (c as f64 - mean).powi(2) / mean).sum();
    // χ² with 201 degrees of freedom: mean 201, sd ≈ 20.
    assert!((chi2 - 201.0).abs() < 80.0, "chi2 {chi2}");
}

#[test]
fn flat_source_gives_a_flat_scan() {
    let qd = QDSpec::default();
    let grid = symmetric_grid(200.0, 0.01).unwrap();
    let flat = SpectralDensity::from_fn(grid, |_| 1.0).unwrap().normalized_to_area().unwrap();
    let scan = scattering_scan(&flat, &qd, &biases(&qd, 41), &params(0.06), 1).unwrap();
    let first = scan.expected[0];
    for e in &scan.expected {
        assert!((e - first).abs() / first < 1e-3);
    }
}

#[test]
fn mirrored_source_mirrors_the_scan() {
    let qd = QDSpec::default();
    let b = biases(&qd, 121);
    let s = two_line_source(3.0);
    let a = scattering_scan(&s, &qd, &b, &params(0.06), 3).unwrap();
    let m = scattering_scan(&s.mirrored(), &qd, &b, &params(0.06), 3).unwrap();
    let n = b.len();
    for i in 0..n {
        assert!((a.detuning_ghz[i] + a.detuning_ghz[n - 1 - i]).abs() < 1e-9);
        let (x, y) = (a.expected[i], m.expected[n - 1 - i]);
        assert!((x - y).abs() / x < 1e-6, "{i}: {x} vs {y}");
    }
}

#[test]
fn scan_peaks_sit_on_the_source_lines() {
    let qd = QDSpec::default();
    let scan = scattering_scan(&two_line_source(3.0), &qd, &biases(&qd, 601), &params(0.06), 4).unwrap();
    let e = &scan.expected;
    let peaks: Vec<f64> = (1..e.len() - 1)
        .filter(|&i| e[i] > e[i - 1] && e[i] >= e[i + 1])
        .map(|i| scan.detuning_ghz[i])
        .collect();
    assert_eq!(peaks.len(), 2, "{peaks:?}");
    let half_width = qd.fwhm_ghz() / 2.0;
    let mut sorted = peaks.clone();
    sorted.sort_by(f64::total_cmp);
    assert!(sorted[0].abs() < half_width);
    assert!((sorted[1] - 3.0).abs() < half_width);
}

#[test]
fn noiseless_double_peak_round_trip() {
    let qd = QDSpec::default();
    let mut scan = scattering_scan(&two_line_source(3.0), &qd, &biases(&qd, 241), &params(1e3), 5).unwrap();
    scan.counts = scan.expected.iter().map(|e| e.round() as u64).collect();
    let fit = fit_double_peak(&scan).unwrap();
    assert!((fit.separation_ghz - 3.0).abs() / 3.0 < 5e-3, "{}", fit.separation_ghz);
    assert!((fit.amplitude_ratio - 0.6).abs() < 0.02, "{}", fit.amplitude_ratio);
    // Lorentzian source convolved with a Lorentzian dot: widths add.
    assert!((fit.widths_ghz.0 - 0.88).abs() < 0.02);
}

#[test]
fn noisy_scan_recovers_the_splitting() {
    let qd = QDSpec::default();
    let b = linspace(-0.45, 2.05, 201);
    let scan = scattering_scan(&two_line_source(3.0), &qd, &b, &params(0.06), 20240501).unwrap();
    let fit = fit_double_peak(&scan).unwrap();
    assert!((fit.separation_ghz - 3.0).abs() < 0.1, "{}", fit.separation_ghz);
    assert!((fit.background - 66_000.0).abs() < 3.0 * 66_000f64.sqrt());
}

#[test]
fn single_line_is_not_fitted_as_two() {
    let qd = QDSpec::default();
    let grid = symmetric_grid(40.0, 0.005).unwrap();
    let one = SpectralDensity::from_fn(grid, |x| lorentz(x, 0.0, 0.15)).unwrap().normalized_to_area().unwrap();
    let b = biases(&qd, 201);
    for seed in 0..20 {
        let scan = scattering_scan(&one, &qd, &b, &params(0.06), seed).unwrap();
        assert!(fit_double_peak(&scan).is_err(), "seed {seed}");
    }
}

#[test]
fn unnormalized_source_is_rejected() {
    let qd = QDSpec::default();
    let grid = symmetric_grid(10.0, 0.01).unwrap();
    let s = SpectralDensity::from_fn(grid, |_| 1.0).unwrap();
    assert!(scattering_scan(&s, &qd, &[0.8], &params(0.06), 0).is_err());
}

#[test]
fn scan_is_seed_deterministic() {
    let qd = QDSpec::default();
    let b = biases(&qd, 51);
    let s = two_line_source(2.8);
    let a = scattering_scan(&s, &qd, &b, &params(0.06), 9).unwrap();
    let again = rayon::ThreadPoolBuilder::new()
        .num_threads(2)
        .build()
        .unwrap()
        .install(|| scattering_scan(&s, &qd, &b, &params(0.06), 9).unwrap());
    assert_eq!(a, again);
}
