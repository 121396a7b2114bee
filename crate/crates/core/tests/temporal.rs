use std::f64::consts::PI;

use proptest::prelude::*;
use spdclab_core::temporal::*;
use spdclab_core::Error;

fn grid(step: f64, end: f64) -> Vec<f64> {
    (0..=((end / step).round() as usize)).map(|i| i as f64 * step).collect()
}

fn beating(tau: f64, f: f64, v: f64, amplitude: f64) -> WavepacketParams {
    WavepacketParams {
        lifetime_ps: tau,
        beat_frequency_ghz: Some(f),
        beat_visibility: v,
        phase_rad: 0.0,
        amplitude,
    }
}

/// Composite Simpson on [0, T] with T many lifetimes out.
fn simpson(f: impl Fn(f64) -> f64, end: f64, n: usize) -> f64 {
    let h = end / n as f64;
    let mut s = f(0.0) + f(end);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn area_matches_quadrature() {
    for (tau, f, v, phi) in [(932.0, 3.06, 0.3, 0.0), (751.0, 1.0, 0.9, 1.1), (500.0, 4.5, 0.5, -2.0)] {
        let p = WavepacketParams {
            phase_rad: phi,
            ..beating(tau, f, v, 3.0)
        };
        let numeric = simpson(|t| p.value_at(t), 40.0 * tau, 400_000);
        assert!((p.area() - numeric).abs() / numeric < 1e-9, "{} vs {numeric}", p.area());
    }
    let e = WavepacketParams::exponential(751.0, 2.0);
    assert!((e.area() - 1502.0).abs() < 1e-9);
}

#[test]
fn beat_period_is_the_inverse_frequency() {
    let p = beating(932.0, 3.06, 0.3, 1.0);
    let period: f64 = 1e3 / 3.06;
    assert!((period - 326.8).abs() < 0.1);
    // Successive maxima of the beat factor are one period apart.
    let t = grid(0.01, 1000.0);
    let factor: Vec<f64> = t.iter().map(|&x| p.value_at(x) / (-x / 932.0f64).exp()).collect();
    let maxima: Vec<f64> = (1..t.len() - 1)
        .filter(|&i| factor[i] > factor[i - 1] && factor[i] >= factor[i + 1])
        .map(|i| t[i])
        .collect();
    assert!((maxima[0] - period).abs() < 0.02);
}

#[test]
fn zero_visibility_reduces_to_an_exponential() {
    let t = grid(10.0, 3000.0);
    let a = synth_wavepacket(&beating(751.0, 3.0, 0.0, 5.0), &t, None).unwrap();
    let b = synth_wavepacket(&WavepacketParams::exponential(751.0, 5.0), &t, None).unwrap();
    for (x, y) in a.intensity.iter().zip(&b.intensity) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn noiseless_round_trips() {
    let t = grid(10.0, 6000.0);
    let e = synth_wavepacket(&WavepacketParams::exponential(751.0, 1000.0), &t, None).unwrap();
    let fit = fit_exponential(&e).unwrap();
    assert!((fit.lifetime_ps - 751.0).abs() / 751.0 < 1e-3);
    let b = synth_wavepacket(&beating(932.0, 3.06, 0.3, 1000.0), &t, None).unwrap();
    let fit = fit_exp_beat(&b).unwrap();
    assert!((fit.lifetime_ps - 932.0).abs() / 932.0 < 1e-3);
    assert!((fit.beat_frequency_ghz.unwrap() - 3.06).abs() / 3.06 < 1e-3);
}

#[test]
fn lifetime_error_bars_cover_the_truth() {
    let t = grid(10.0, 6000.0);
    // About 1e5 counts in total.
    let amplitude = 1e5 * 10.0 / 751.0;
    let p = WavepacketParams::exponential(751.0, amplitude);
    let mut covered = 0;
    for seed in 0..100u64 {
        let prof = synth_wavepacket(&p, &t, Some(seed)).unwrap();
        let total = prof.total_counts().unwrap() as f64;
        assert!((total - 1e5).abs() < 5.0 * 1e5f64.sqrt() + 1e3);
        let fit = fit_exponential(&prof).unwrap();
        if (fit.lifetime_ps - 751.0).abs() <= fit.lifetime_stderr_ps {
            covered += 1;
        }
    }
    assert!((55..=81).contains(&covered), "coverage {covered}/100");
}

#[test]
fn fitting_without_the_beat_still_finds_the_lifetime() {
    let t = grid(10.0, 6000.0);
    let prof = synth_wavepacket(&beating(932.0, 3.06, 0.3, 1100.0), &t, Some(3)).unwrap();
    let fit = fit_exponential(&prof).unwrap();
    assert!((fit.lifetime_ps - 932.0).abs() / 932.0 < 0.05, "{}", fit.lifetime_ps);
}

#[test]
fn noisy_default_profile_recovers_the_beat() {
    let t = grid(10.0, 6000.0);
    let prof = synth_wavepacket(&beating(932.0, 3.06, 0.3, 1100.0), &t, Some(20240501)).unwrap();
    let fit = fit_exp_beat(&prof).unwrap();
    let f = fit.beat_frequency_ghz.unwrap();
    assert!((f - 3.06).abs() < 0.1, "{f}");
    assert!((fit.lifetime_ps - 932.0).abs() < 4.0 * fit.lifetime_stderr_ps);
}

#[test]
fn total_counts_are_poisson_about_the_noiseless_sum() {
    let t = grid(10.0, 6000.0);
    let p = beating(751.0, 2.0, 0.4, 50.0);
    let mean: f64 = synth_wavepacket(&p, &t, None).unwrap().intensity.iter().sum();
    let seeds = 200;
    let chi2: f64 = (0..seeds)
        .map(|s| {
            let n = synth_wavepacket(&p, &t, Some(1000 + s)).unwrap().total_counts().unwrap() as f64;
            (n - mean).powi(2) / mean
        })
        .sum();
    // χ² with 200 degrees of freedom: mean 200, sd 20.
    assert!((chi2 - seeds as f64).abs() < 80.0, "chi2 = {chi2}");
}

#[test]
fn sampling_is_reproducible() {
    let t = grid(10.0, 2000.0);
    let p = beating(751.0, 2.0, 0.4, 50.0);
    let a = synth_wavepacket(&p, &t, Some(9)).unwrap();
    let b = synth_wavepacket(&p, &t, Some(9)).unwrap();
    let c = synth_wavepacket(&p, &t, Some(10)).unwrap();
    assert_eq!(a.counts, b.counts);
    assert_ne!(a.counts, c.counts);
}

#[test]
fn missing_beat_is_reported() {
    let t = grid(10.0, 6000.0);
    let p = WavepacketParams::exponential(932.0, 1100.0);
    let false_alarms = (0..50u64)
        .filter(|&seed| {
            let prof = synth_wavepacket(&p, &t, Some(seed)).unwrap();
            !matches!(fit_exp_beat(&prof), Err(Error::BeatUnidentifiable { .. }))
        })
        .count();
    assert!(false_alarms <= 3, "{false_alarms}/50 noise-only profiles reported a beat");
}

#[test]
fn undersampled_beat_is_a_resolution_error() {
    let t = grid(100.0, 6000.0);
    let prof = synth_wavepacket(&beating(932.0, 3.06, 0.3, 1100.0), &t, None).unwrap();
    assert!(matches!(fit_exp_beat(&prof), Err(Error::Resolution(_))));
}

#[test]
fn linewidths_and_mismatch() {
    assert!((natural_linewidth(751.0).unwrap() - 212.0).abs() < 1.0);
    assert!((natural_linewidth(932.0).unwrap() - 171.0).abs() < 1.0);
    assert!((natural_linewidth(1e3 / (2.0 * PI)).unwrap() - 1000.0).abs() < 1e-9);
    assert_eq!(lifetime_mismatch(751.0, 751.0).unwrap(), 0.0);
    assert_eq!(lifetime_mismatch(2.0, 1.0).unwrap(), 1.0);
    let mean = lifetime_mismatch_with(932.0, 751.0, MismatchConvention::Mean).unwrap();
    assert!((mean - 0.215).abs() < 1e-3);
    assert!(natural_linewidth(0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn round_trip_over_the_parameter_box(tau in 500.0f64..1500.0, f in 1.0f64..5.0, v in 0.2f64..0.9) {
        let t = grid(10.0, 8000.0);
        let prof = synth_wavepacket(&beating(tau, f, v, 1000.0), &t, None).unwrap();
        let fit = fit_exp_beat(&prof).unwrap();
        prop_assert!((fit.lifetime_ps - tau).abs() / tau < 5e-3);
        prop_assert!((fit.beat_frequency_ghz.unwrap() - f).abs() / f < 5e-3);
        let plain = synth_wavepacket(&WavepacketParams::exponential(tau, 1000.0), &t, None).unwrap();
        let fit = fit_exponential(&plain).unwrap();
        prop_assert!((fit.lifetime_ps - tau).abs() / tau < 5e-3);
    }

    #[test]
    fn linewidth_times_lifetime_is_constant(tau in 1.0f64..1e5) {
        let product = natural_linewidth(tau).unwrap() * 1e-6 * tau;
        prop_assert!((product - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }
}
