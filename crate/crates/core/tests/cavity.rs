use std::f64::consts::PI;

use spdclab_core::cavity::*;
use spdclab_core::dispersion::CrystalSpec;
use spdclab_core::phasematch::{calibrate_phase_offset, gain_spectrum, PumpSpec};
use spdclab_core::spectrum::{symmetric_grid, SpectralDensity};
use spdclab_core::C_LIGHT;

const LAMBDA: f64 = 941.96;

fn calibrated_cavity() -> CavitySpec {
    let base = CavitySpec::ppktp_with_compensator(0.0);
    let gap = calibrate_air_gap(&base, 1e3 / 113.6, LAMBDA, 27.0).unwrap();
    base.with_air_gap(gap)
}

#[test]
fn finesse_values() {
    let symmetric = finesse(0.99, 0.99).unwrap();
    assert!((symmetric - PI * 0.99f64.sqrt() / 0.01).abs() < 1e-9);
    assert!((symmetric - 312.5845).abs() < 1e-3);
    let built = finesse(0.998, 0.90).unwrap();
    assert!((57.0..=59.0).contains(&built), "{built}");
    assert!(finesse(1.2, 0.9).is_err());
    assert!(finesse(0.9, 0.0).is_err());
}

#[test]
fn empty_cavity_fsr_is_c_over_twice_the_length() {
    let mut cav = CavitySpec::ppktp_with_compensator(25.0);
    cav.elements.clear();
    let fsr = free_spectral_range(&cav, LAMBDA, 27.0).unwrap();
    assert!((fsr - C_LIGHT / (2.0 * 25e-3) / 1e9).abs() < 1e-9);
}

#[test]
fn calibration_reproduces_the_round_trip() {
    let cav = calibrated_cavity();
    assert!(cav.air_gap_mm > 0.0);
    let fsr = free_spectral_range(&cav, LAMBDA, 27.0).unwrap();
    assert!((1e3 / fsr - 113.6).abs() < 1e-9);
    let comb = mode_comb(&cav, LAMBDA, 27.0).unwrap();
    assert!((comb.mode_linewidth_fwhm_ghz * comb.finesse() - comb.fsr_ghz).abs() < 1e-12);
    assert!((comb.mode_linewidth_fwhm_ghz * cav.finesse().unwrap() - fsr).abs() < 1e-12);
    // Type-II: the swapped compensator nearly but not exactly equalizes the
    // two polarizations.
    assert!(comb.signal_idler_fsr_mismatch_ghz > 0.0);
    assert!(comb.signal_idler_fsr_mismatch_ghz < 0.05 * fsr);
}

#[test]
fn lifetime_grows_with_the_gap() {
    let cav = calibrated_cavity();
    let mut last = 0.0;
    for i in 0..=20 {
        let tau = cavity_lifetime_ps(&cav.with_air_gap(0.5 * i as f64), LAMBDA, 27.0).unwrap();
        assert!(tau > last);
        last = tau;
    }
    let tau = cavity_lifetime_ps(&cav, LAMBDA, 27.0).unwrap();
    let expected = cav.finesse().unwrap() * 113.6 / (2.0 * PI);
    assert!((tau - expected).abs() < 1e-9);
}

#[test]
fn airy_extremes() {
    let comb = ModeComb::longitudinal(10.0, 50.0);
    assert!((airy_transmission(&comb, 0.0) - 1.0).abs() < 1e-15);
    assert!((airy_transmission(&comb, 30.0) - 1.0).abs() < 1e-12);
    let min = 1.0 / (1.0 + (2.0 * 50.0 / PI).powi(2));
    assert!((airy_transmission(&comb, 5.0) - min).abs() < 1e-15);
    // Half maximum sits half a linewidth from resonance (to first order in 1/F).
    assert!((airy_transmission(&comb, 0.1) - 0.5).abs() < 1e-3);
}

#[test]
fn transverse_modes_follow_the_weight() {
    let mut cav = calibrated_cavity();
    let comb = mode_comb(&cav, LAMBDA, 27.0).unwrap();
    assert_eq!(comb.transverse_offsets(), vec![2.8]);
    let r = comb.response(2.8) / comb.response(0.0);
    assert!((r - 0.6).abs() < 0.05, "{r}");
    cav.transverse_mode_weight = 0.0;
    let bare = mode_comb(&cav, LAMBDA, 27.0).unwrap();
    assert!(bare.transverse_modes.is_empty());
    assert!((bare.response(0.0) - 1.0).abs() < 1e-12);
}

fn source_parts(weight: f64) -> (SpectralDensity, ModeComb, PumpSpec) {
    let pump = PumpSpec::default();
    let mut crystal = CrystalSpec::ppktp_type2();
    crystal.phase_offset_rad = calibrate_phase_offset(&crystal, &pump, 27.0).unwrap();
    let grid = symmetric_grid(1200.0, 0.01).unwrap();
    let gain = gain_spectrum(&crystal, &pump, &grid).unwrap();
    let mut cav = calibrated_cavity();
    cav.transverse_mode_weight = weight;
    (gain, mode_comb(&cav, LAMBDA, 27.0).unwrap(), pump)
}

#[test]
fn output_never_exceeds_the_gain() {
    let (gain, comb, pump) = source_parts(0.6);
    let filter = EtalonSpec {
        fsr_ghz: 600.0,
        bandwidth_fwhm_ghz: 6.0,
        center_offset_ghz: 0.0,
    };
    for f in [None, Some(&filter)] {
        let out = output_spectrum(&gain, &comb, &pump, f).unwrap();
        for (o, g) in out.intensity().iter().zip(gain.intensity()) {
            assert!(*o <= g + 1e-12);
            assert!(*o >= 0.0);
        }
    }
}

#[test]
fn about_sixty_modes_inside_the_gain_bandwidth() {
    let (gain, comb, pump) = source_parts(0.0);
    let out = output_spectrum(&gain, &comb, &pump, None).unwrap();
    let peaks = out.local_maxima(0.5 * out.max());
    let expected = 537.35 / comb.fsr_ghz;
    assert!(
        (peaks.len() as f64 - expected).abs() <= 2.0,
        "{} modes, expected about {expected}",
        peaks.len()
    );
}

#[test]
fn filter_keeps_only_modes_inside_its_passband() {
    let (gain, comb, pump) = source_parts(0.6);
    let filter = EtalonSpec {
        fsr_ghz: 600.0,
        bandwidth_fwhm_ghz: 6.0,
        center_offset_ghz: 0.0,
    };
    let out = output_spectrum(&gain, &comb, &pump, Some(&filter)).unwrap();
    let peaks = out.local_maxima(0.05 * out.max());
    for &i in &peaks {
        let nu = out.detuning()[i];
        assert!(nu.abs() < 10.0 || (nu.abs() - 600.0).abs() < 10.0, "peak at {nu}");
    }
    let coarse = symmetric_grid(100.0, 1.0).unwrap();
    let g = SpectralDensity::new(coarse.clone(), vec![1.0; coarse.len()]).unwrap();
    assert!(output_spectrum(&g, &comb, &pump, None).is_err(), "grid coarser than linewidth/10");
}

#[test]
fn invalid_mirrors_are_rejected() {
    let mut cav = calibrated_cavity();
    cav.mirror_reflectivity_out = 1.2;
    assert!(mode_comb(&cav, LAMBDA, 27.0).is_err());
    assert!(cav.validate().is_err());
}
