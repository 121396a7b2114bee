//! Run configuration: a flat-sectioned TOML file, optional `section.key=value`
//! overrides, validation that reports every violated constraint, and the
//! conversions into model types.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use spdclab_core::cavity::{CavityElement, CavitySpec, EtalonSpec};
use spdclab_core::dispersion::{Axis, CrystalSpec, Material};
use spdclab_core::phasematch::PumpSpec;
use spdclab_core::photostat::{DetectorSpec, Emission, HeraldedSetup, PairDistribution, SourceStatModel};
use spdclab_core::qdscatter::{Lineshape, QDSpec, ScanParams};
use spdclab_core::temporal::{MismatchConvention, WavepacketParams};

use crate::error::CliError;

/// The shipped configuration, also used when no file is given.
pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

/// Environment variable naming the config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "SPDCLAB_CONFIG";

pub const SECTIONS: [&str; 14] = [
    "run",
    "crystal",
    "pump",
    "cavity",
    "filter",
    "spectrum",
    "tuning",
    "coherence",
    "wavepacket",
    "source_statistics",
    "detectors",
    "qd",
    "qd_scan",
    "match",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub run: RunSection,
    pub crystal: CrystalSection,
    pub pump: PumpSection,
    pub cavity: CavitySection,
    pub filter: FilterSection,
    pub spectrum: SpectrumSection,
    pub tuning: TuningSection,
    pub coherence: CoherenceSection,
    pub wavepacket: WavepacketSection,
    pub source_statistics: SourceStatisticsSection,
    pub detectors: DetectorsSection,
    pub qd: QdSection,
    pub qd_scan: QdScanSection,
    #[serde(rename = "match")]
    pub matching: MatchSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalSection {
    /// Built-in material name; only "ktp" is bundled.
    pub material: String,
    /// Dispersion data file replacing the built-in material.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispersion_file: Option<String>,
    pub length_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poling_period_um: Option<f64>,
    pub temperature_c: f64,
    pub phase_offset_rad: f64,
    pub signal_axis: Axis,
    pub idler_axis: Axis,
    pub pump_axis: Axis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSection {
    pub center_wavelength_nm: f64,
    pub repetition_rate_mhz: f64,
    pub pulse_fwhm_ps: f64,
    pub average_power_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    pub mirror_reflectivity_high: f64,
    pub mirror_reflectivity_out: f64,
    pub compensator_length_mm: f64,
    pub air_gap_mm: f64,
    pub transverse_splitting_ghz: f64,
    pub transverse_mode_weight: f64,
    pub center_offset_ghz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub enabled: bool,
    pub fsr_ghz: f64,
    pub bandwidth_fwhm_ghz: f64,
    pub center_offset_ghz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    pub half_span_ghz: f64,
    pub step_ghz: f64,
    pub filtered_half_span_ghz: f64,
    pub gain_step_ghz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningSection {
    pub temperature_min_c: f64,
    pub temperature_max_c: f64,
    pub temperature_step_c: f64,
    pub wavelength_min_nm: f64,
    pub wavelength_max_nm: f64,
    pub wavelength_step_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceSection {
    pub max_delay_ps: f64,
    pub fine_step_ps: f64,
    pub coarse_step_ps: f64,
    pub fine_half_width_ps: f64,
    pub use_filter: bool,
    /// Replaces the crystal gain with a sinc² of this FWHM.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope_fwhm_ghz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavepacketSection {
    pub lifetime_ps: f64,
    pub beat_frequency_ghz: f64,
    pub beat_visibility: f64,
    pub phase_rad: f64,
    pub amplitude: f64,
    pub bin_ps: f64,
    pub duration_ps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceStatisticsSection {
    pub alpha_per_mw: f64,
    pub distribution: PairDistribution,
    pub schmidt_modes: u32,
    pub emission: Emission,
    pub powers_mw: Vec<f64>,
    pub pulses_per_point: u64,
    pub splitter_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorsSection {
    pub idler_efficiency: f64,
    pub transmitted_efficiency: f64,
    pub reflected_efficiency: f64,
    pub dark_count_rate_hz: f64,
    pub coincidence_window_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QdSection {
    pub center_wavelength_nm: f64,
    pub lifetime_ps: f64,
    pub broadened_fwhm_mhz: f64,
    pub stark_slope_ghz_per_v: f64,
    pub reference_bias_v: f64,
    pub lineshape: Lineshape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QdScanSection {
    pub qd_enabled: bool,
    pub bias_min_v: f64,
    pub bias_max_v: f64,
    pub points: usize,
    pub incident_rate_hz: f64,
    pub collection_efficiency: f64,
    pub scattering_strength: f64,
    pub dark_rate_hz: f64,
    pub integration_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchSection {
    pub target_lifetime_ps: f64,
    pub spdc_lifetime_ps: f64,
    pub gap_min_mm: f64,
    pub gap_max_mm: f64,
    pub mismatch_convention: MismatchConvention,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        parse_config(DEFAULT_CONFIG, &[]).expect("shipped default config is valid")
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn toml_error(text: &str, err: &toml::de::Error) -> String {
    let msg = err.message().trim().to_string();
    match err.span() {
        Some(span) => format!("line {}: {msg}", line_of(text, span.start)),
        None => msg,
    }
}

/// Applies one `section.key=value` override. The value is read as a TOML
/// value when it parses as one, else as a bare string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), String> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| format!("override `{spec}` must look like section.key=value"))?;
    let (section, key) = path
        .trim()
        .split_once('.')
        .ok_or_else(|| format!("override path `{}` must be section.key", path.trim()))?;
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let sect = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match sect {
        toml::Value::Table(t) => {
            t.insert(key.to_string(), value);
            Ok(())
        }
        _ => Err(format!("`{section}` is not a section")),
    }
}

/// Parses, overrides and validates a config text.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<SimulationConfig, CliError> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(vec![toml_error(text, &e)]))?;
    let mut problems = Vec::new();
    for o in overrides {
        if let Err(e) = apply_override(&mut table, o) {
            problems.push(e);
        }
    }
    if !problems.is_empty() {
        return Err(CliError::Config(problems));
    }
    let missing: Vec<String> = SECTIONS
        .iter()
        .filter(|s| !matches!(table.get(**s), Some(toml::Value::Table(_))))
        .map(|s| format!("missing required section [{s}]"))
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Config(missing));
    }
    // Re-render when overridden so error spans point into the merged text.
    let merged;
    let source = if overrides.is_empty() {
        text
    } else {
        merged = toml::to_string(&table).map_err(|e| CliError::Config(vec![e.to_string()]))?;
        &merged
    };
    let config: SimulationConfig =
        toml::from_str(source).map_err(|e| CliError::Config(vec![toml_error(source, &e)]))?;
    let violations = config.violations();
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(CliError::Config(violations))
    }
}

/// Reads `path` (or the shipped defaults when `None`) and applies overrides.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<SimulationConfig, CliError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| CliError::Io {
                path: p.display().to_string(),
                source,
            })?;
            parse_config(&text, overrides)
        }
        None => parse_config(DEFAULT_CONFIG, overrides),
    }
}

struct Checker(Vec<String>);

impl Checker {
    fn check(&mut self, path: &str, value: f64, ok: bool, rule: &str) {
        if !ok || value.is_nan() {
            self.0.push(format!("{path} = {value}: {rule}"));
        }
    }

    fn positive(&mut self, path: &str, v: f64) {
        self.check(path, v, v > 0.0 && v.is_finite(), "must be > 0");
    }

    fn non_negative(&mut self, path: &str, v: f64) {
        self.check(path, v, v >= 0.0 && v.is_finite(), "must be >= 0");
    }

    fn fraction(&mut self, path: &str, v: f64) {
        self.check(path, v, (0.0..=1.0).contains(&v), "must be in [0, 1]");
    }

    fn finite(&mut self, path: &str, v: f64) {
        self.check(path, v, v.is_finite(), "must be finite");
    }
}

impl SimulationConfig {
    /// Every violated constraint, each prefixed with its `section.key` path.
    pub fn violations(&self) -> Vec<String> {
        let mut c = Checker(Vec::new());
        if self.run.seed > i64::MAX as u64 {
            c.0.push(format!("run.seed = {}: must fit in a signed 64-bit integer", self.run.seed));
        }

        let x = &self.crystal;
        if x.dispersion_file.is_none() && x.material != "ktp" {
            c.0.push(format!("crystal.material = {:?}: only \"ktp\" is built in; set crystal.dispersion_file", x.material));
        }
        c.positive("crystal.length_mm", x.length_mm);
        if let Some(p) = x.poling_period_um {
            c.positive("crystal.poling_period_um", p);
        }
        c.finite("crystal.temperature_c", x.temperature_c);
        c.finite("crystal.phase_offset_rad", x.phase_offset_rad);

        let p = &self.pump;
        c.positive("pump.center_wavelength_nm", p.center_wavelength_nm);
        c.positive("pump.repetition_rate_mhz", p.repetition_rate_mhz);
        c.positive("pump.pulse_fwhm_ps", p.pulse_fwhm_ps);
        c.non_negative("pump.average_power_mw", p.average_power_mw);

        let k = &self.cavity;
        for (path, r) in [
            ("cavity.mirror_reflectivity_high", k.mirror_reflectivity_high),
            ("cavity.mirror_reflectivity_out", k.mirror_reflectivity_out),
        ] {
            c.check(path, r, r > 0.0 && r < 1.0, "mirror_reflectivity in (0,1)");
        }
        c.non_negative("cavity.compensator_length_mm", k.compensator_length_mm);
        c.non_negative("cavity.air_gap_mm", k.air_gap_mm);
        c.finite("cavity.transverse_splitting_ghz", k.transverse_splitting_ghz);
        c.fraction("cavity.transverse_mode_weight", k.transverse_mode_weight);
        c.finite("cavity.center_offset_ghz", k.center_offset_ghz);

        let f = &self.filter;
        c.positive("filter.fsr_ghz", f.fsr_ghz);
        c.check(
            "filter.bandwidth_fwhm_ghz",
            f.bandwidth_fwhm_ghz,
            f.bandwidth_fwhm_ghz > 0.0 && f.bandwidth_fwhm_ghz < f.fsr_ghz,
            "must be in (0, filter.fsr_ghz)",
        );
        c.finite("filter.center_offset_ghz", f.center_offset_ghz);

        let s = &self.spectrum;
        c.positive("spectrum.half_span_ghz", s.half_span_ghz);
        c.positive("spectrum.step_ghz", s.step_ghz);
        c.positive("spectrum.filtered_half_span_ghz", s.filtered_half_span_ghz);
        c.positive("spectrum.gain_step_ghz", s.gain_step_ghz);

        let t = &self.tuning;
        c.positive("tuning.temperature_step_c", t.temperature_step_c);
        c.check(
            "tuning.temperature_max_c",
            t.temperature_max_c,
            t.temperature_max_c > t.temperature_min_c,
            "must exceed tuning.temperature_min_c",
        );
        c.positive("tuning.wavelength_step_nm", t.wavelength_step_nm);
        c.positive("tuning.wavelength_min_nm", t.wavelength_min_nm);
        c.check(
            "tuning.wavelength_max_nm",
            t.wavelength_max_nm,
            t.wavelength_max_nm > t.wavelength_min_nm,
            "must exceed tuning.wavelength_min_nm",
        );

        let g = &self.coherence;
        c.positive("coherence.max_delay_ps", g.max_delay_ps);
        c.positive("coherence.fine_step_ps", g.fine_step_ps);
        c.check(
            "coherence.coarse_step_ps",
            g.coarse_step_ps,
            g.coarse_step_ps >= g.fine_step_ps,
            "must be >= coherence.fine_step_ps",
        );
        c.non_negative("coherence.fine_half_width_ps", g.fine_half_width_ps);
        if let Some(e) = g.envelope_fwhm_ghz {
            c.positive("coherence.envelope_fwhm_ghz", e);
        }

        let w = &self.wavepacket;
        c.positive("wavepacket.lifetime_ps", w.lifetime_ps);
        c.non_negative("wavepacket.beat_frequency_ghz", w.beat_frequency_ghz);
        c.fraction("wavepacket.beat_visibility", w.beat_visibility);
        c.finite("wavepacket.phase_rad", w.phase_rad);
        c.non_negative("wavepacket.amplitude", w.amplitude);
        c.positive("wavepacket.bin_ps", w.bin_ps);
        c.check(
            "wavepacket.duration_ps",
            w.duration_ps,
            w.duration_ps > w.bin_ps,
            "must exceed wavepacket.bin_ps",
        );

        let q = &self.source_statistics;
        c.non_negative("source_statistics.alpha_per_mw", q.alpha_per_mw);
        if q.schmidt_modes == 0 {
            c.0.push("source_statistics.schmidt_modes = 0: must be >= 1".into());
        }
        if q.powers_mw.is_empty() {
            c.0.push("source_statistics.powers_mw: must not be empty".into());
        }
        for (i, pw) in q.powers_mw.iter().enumerate() {
            c.non_negative(&format!("source_statistics.powers_mw[{i}]"), *pw);
        }
        if q.pulses_per_point == 0 {
            c.0.push("source_statistics.pulses_per_point = 0: must be >= 1".into());
        }
        c.fraction("source_statistics.splitter_t", q.splitter_t);

        let d = &self.detectors;
        c.fraction("detectors.idler_efficiency", d.idler_efficiency);
        c.fraction("detectors.transmitted_efficiency", d.transmitted_efficiency);
        c.fraction("detectors.reflected_efficiency", d.reflected_efficiency);
        c.non_negative("detectors.dark_count_rate_hz", d.dark_count_rate_hz);
        c.non_negative("detectors.coincidence_window_ns", d.coincidence_window_ns);
        let dark = d.dark_count_rate_hz * d.coincidence_window_ns * 1e-9;
        c.check("detectors.dark_count_rate_hz", d.dark_count_rate_hz, dark <= 1.0, "dark probability per window must be <= 1");

        let qd = &self.qd;
        c.positive("qd.center_wavelength_nm", qd.center_wavelength_nm);
        c.positive("qd.lifetime_ps", qd.lifetime_ps);
        if qd.lifetime_ps > 0.0 {
            let natural = 1e6 / (2.0 * std::f64::consts::PI * qd.lifetime_ps);
            c.check(
                "qd.broadened_fwhm_mhz",
                qd.broadened_fwhm_mhz,
                qd.broadened_fwhm_mhz >= natural,
                &format!("must be >= the natural linewidth {natural:.1} MHz"),
            );
        }
        c.finite("qd.stark_slope_ghz_per_v", qd.stark_slope_ghz_per_v);
        c.finite("qd.reference_bias_v", qd.reference_bias_v);

        let sc = &self.qd_scan;
        c.check(
            "qd_scan.bias_max_v",
            sc.bias_max_v,
            sc.bias_max_v > sc.bias_min_v,
            "must exceed qd_scan.bias_min_v",
        );
        if sc.points < 2 {
            c.0.push(format!("qd_scan.points = {}: must be >= 2", sc.points));
        }
        c.non_negative("qd_scan.incident_rate_hz", sc.incident_rate_hz);
        c.fraction("qd_scan.collection_efficiency", sc.collection_efficiency);
        c.non_negative("qd_scan.scattering_strength", sc.scattering_strength);
        c.non_negative("qd_scan.dark_rate_hz", sc.dark_rate_hz);
        c.positive("qd_scan.integration_time_s", sc.integration_time_s);

        let m = &self.matching;
        c.positive("match.target_lifetime_ps", m.target_lifetime_ps);
        c.positive("match.spdc_lifetime_ps", m.spdc_lifetime_ps);
        c.non_negative("match.gap_min_mm", m.gap_min_mm);
        c.check("match.gap_max_mm", m.gap_max_mm, m.gap_max_mm > m.gap_min_mm, "must exceed match.gap_min_mm");
        c.0
    }

    /// Canonical TOML rendering; the basis of [`Self::hash`].
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical rendering, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn material(&self) -> Result<Material, CliError> {
        match &self.crystal.dispersion_file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                    path: path.clone(),
                    source,
                })?;
                text.parse().map_err(|e| CliError::model("crystal.dispersion_file", e))
            }
            None => Ok(Material::ktp()),
        }
    }

    pub fn crystal(&self) -> Result<CrystalSpec, CliError> {
        let x = &self.crystal;
        Ok(CrystalSpec {
            material: self.material()?,
            length_mm: x.length_mm,
            poling_period_um: x.poling_period_um,
            temperature_c: x.temperature_c,
            phase_offset_rad: x.phase_offset_rad,
            signal_axis: x.signal_axis,
            idler_axis: x.idler_axis,
            pump_axis: x.pump_axis,
        })
    }

    pub fn pump(&self) -> PumpSpec {
        let p = &self.pump;
        PumpSpec {
            center_wavelength_nm: p.center_wavelength_nm,
            repetition_rate_mhz: p.repetition_rate_mhz,
            pulse_fwhm_ps: p.pulse_fwhm_ps,
            average_power_mw: p.average_power_mw,
        }
    }

    /// Crystal plus a compensator of the same material with swapped axes.
    pub fn cavity(&self) -> Result<CavitySpec, CliError> {
        let crystal = self.crystal()?;
        let k = &self.cavity;
        let mut elements = vec![CavityElement {
            name: "PPKTP".into(),
            material: crystal.material.clone(),
            length_mm: crystal.length_mm,
            signal_axis: crystal.signal_axis,
            idler_axis: crystal.idler_axis,
        }];
        if k.compensator_length_mm > 0.0 {
            elements.push(CavityElement {
                name: "compensator".into(),
                material: crystal.material,
                length_mm: k.compensator_length_mm,
                signal_axis: self.crystal.idler_axis,
                idler_axis: self.crystal.signal_axis,
            });
        }
        Ok(CavitySpec {
            mirror_reflectivity_high: k.mirror_reflectivity_high,
            mirror_reflectivity_out: k.mirror_reflectivity_out,
            elements,
            air_gap_mm: k.air_gap_mm,
            transverse_splitting_ghz: k.transverse_splitting_ghz,
            transverse_mode_weight: k.transverse_mode_weight,
            center_offset_ghz: k.center_offset_ghz,
        })
    }

    pub fn filter(&self) -> Option<EtalonSpec> {
        let f = &self.filter;
        f.enabled.then_some(EtalonSpec {
            fsr_ghz: f.fsr_ghz,
            bandwidth_fwhm_ghz: f.bandwidth_fwhm_ghz,
            center_offset_ghz: f.center_offset_ghz,
        })
    }

    pub fn wavepacket(&self) -> WavepacketParams {
        let w = &self.wavepacket;
        WavepacketParams {
            lifetime_ps: w.lifetime_ps,
            beat_frequency_ghz: (w.beat_frequency_ghz > 0.0).then_some(w.beat_frequency_ghz),
            beat_visibility: w.beat_visibility,
            phase_rad: w.phase_rad,
            amplitude: w.amplitude,
        }
    }

    pub fn source_model(&self) -> SourceStatModel {
        let q = &self.source_statistics;
        SourceStatModel {
            alpha_per_mw: q.alpha_per_mw,
            distribution: q.distribution,
            schmidt_modes: q.schmidt_modes,
            emission: q.emission,
        }
    }

    pub fn heralded_setup(&self) -> HeraldedSetup {
        let d = &self.detectors;
        let det = |efficiency| DetectorSpec {
            efficiency,
            dark_count_rate_hz: d.dark_count_rate_hz,
            coincidence_window_ns: d.coincidence_window_ns,
        };
        HeraldedSetup {
            idler: det(d.idler_efficiency),
            transmitted: det(d.transmitted_efficiency),
            reflected: det(d.reflected_efficiency),
            splitter_t: self.source_statistics.splitter_t,
        }
    }

    pub fn qd(&self) -> QDSpec {
        let q = &self.qd;
        QDSpec {
            center_wavelength_nm: q.center_wavelength_nm,
            lifetime_ps: q.lifetime_ps,
            broadened_fwhm_mhz: q.broadened_fwhm_mhz,
            stark_slope_ghz_per_v: q.stark_slope_ghz_per_v,
            reference_bias_v: q.reference_bias_v,
            lineshape: q.lineshape,
        }
    }

    pub fn scan_params(&self) -> ScanParams {
        let s = &self.qd_scan;
        ScanParams {
            incident_rate_hz: s.incident_rate_hz,
            collection_efficiency: s.collection_efficiency,
            scattering_strength: if s.qd_enabled { s.scattering_strength } else { 0.0 },
            dark_rate_hz: s.dark_rate_hz,
            integration_time_s: s.integration_time_s,
        }
    }
}
