use proptest::prelude::*;
use spdclab::config::DEFAULT_CONFIG;
use spdclab::{parse_config, CliError, SimulationConfig};

fn defaults() -> SimulationConfig {
    SimulationConfig::default()
}

fn config_error(text: &str, overrides: &[String]) -> Vec<String> {
    match parse_config(text, overrides) {
        Err(CliError::Config(msgs)) => msgs,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn defaults_describe_the_built_source() {
    let c = defaults();
    assert_eq!(c.cavity.mirror_reflectivity_high, 0.998);
    assert_eq!(c.cavity.mirror_reflectivity_out, 0.9);
    assert_eq!(c.crystal.length_mm, 5.0);
    assert_eq!(c.crystal.poling_period_um, Some(33.25));
    assert_eq!(c.crystal.temperature_c, 27.0);
    assert_eq!(c.pump.center_wavelength_nm, 470.98);
    assert_eq!(c.pump.repetition_rate_mhz, 76.0);
    assert_eq!(c.qd.center_wavelength_nm, 941.84307);
    assert_eq!(c.qd.lifetime_ps, 751.0);
    assert_eq!(c.qd.broadened_fwhm_mhz, 730.0);
    assert_eq!(c.detectors.dark_count_rate_hz, 110.0);
    assert_eq!(c.detectors.coincidence_window_ns, 3.0);
    assert_eq!(c.wavepacket.lifetime_ps, 932.0);
    assert_eq!(c.wavepacket.beat_frequency_ghz, 3.06);
    assert_eq!(c.qd_scan.dark_rate_hz * c.qd_scan.integration_time_s, 66_000.0);
    assert!(c.violations().is_empty());
}

#[test]
fn canonical_form_round_trips() {
    let c = defaults();
    let again = parse_config(&c.canonical(), &[]).unwrap();
    assert_eq!(c, again);
    assert_eq!(c.hash(), again.hash());
    assert_eq!(c.hash().len(), 64);
}

#[test]
fn formatting_does_not_change_the_hash() {
    let reformatted: String = DEFAULT_CONFIG
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .map(|l| format!("{}\n\n", l.replace(" = ", "=")))
        .collect();
    assert_eq!(parse_config(&reformatted, &[]).unwrap().hash(), defaults().hash());
}

#[test]
fn out_of_range_reflectivity_is_named() {
    let msgs = config_error(DEFAULT_CONFIG, &["cavity.mirror_reflectivity_high=1.2".into()]);
    assert!(
        msgs.iter()
            .any(|m| m.contains("cavity.mirror_reflectivity_high") && m.contains("mirror_reflectivity in (0,1)")),
        "{msgs:?}"
    );
}

#[test]
fn every_violation_is_reported_at_once() {
    let msgs = config_error(
        DEFAULT_CONFIG,
        &["cavity.mirror_reflectivity_out=0".into(), "crystal.length_mm=-1".into()],
    );
    assert!(msgs.len() >= 2, "{msgs:?}");
}

#[test]
fn unknown_key_is_rejected_with_its_line() {
    let text = DEFAULT_CONFIG.replacen("[pump]\n", "[pump]\nbogus_key = 1\n", 1);
    let line = text.lines().position(|l| l.starts_with("bogus_key")).unwrap() + 1;
    let msgs = config_error(&text, &[]);
    let joined = msgs.join("\n");
    assert!(joined.contains("bogus_key"), "{joined}");
    assert!(joined.contains(&format!("line {line}")), "{joined}");
}

#[test]
fn empty_file_names_the_missing_sections() {
    let joined = config_error("", &[]).join("\n");
    for section in ["crystal", "pump", "cavity"] {
        assert!(joined.contains(section), "{joined}");
    }
}

#[test]
fn overrides_need_a_section_key_and_value() {
    for bad in ["seed=1", "run.seed", "=3"] {
        assert!(parse_config(DEFAULT_CONFIG, &[bad.into()]).is_err(), "{bad}");
    }
    let c = parse_config(DEFAULT_CONFIG, &["run.seed=7".into()]).unwrap();
    assert_eq!(c.run.seed, 7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hash_tracks_every_change(seed in 0..=i64::MAX as u64, length in 0.5f64..20.0, power in 0.1f64..100.0) {
        let base = defaults();
        let c = parse_config(
            DEFAULT_CONFIG,
            &[
                format!("run.seed={seed}"),
                format!("crystal.length_mm={length:?}"),
                format!("pump.average_power_mw={power:?}"),
            ],
        )
        .unwrap();
        prop_assert_eq!(c.run.seed, seed);
        prop_assert_eq!(c.crystal.length_mm, length);
        let again = parse_config(&c.canonical(), &[]).unwrap();
        prop_assert_eq!(&again, &c);
        prop_assert_eq!(again.hash(), c.hash());
        prop_assert_eq!(c == base, c.hash() == base.hash());
    }
}
