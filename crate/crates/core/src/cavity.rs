//! Single-sided crystal cavity: finesse, free spectral range, the mode comb
//! seen by the signal field, and the filtered output spectrum.

use std::f64::consts::PI;

use crate::dispersion::{Axis, Material};
use crate::error::{Error, Result};
use crate::phasematch::PumpSpec;
use crate::spectrum::SpectralDensity;
use crate::C_LIGHT;

/// Which down-converted field a quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    Signal,
    Idler,
}

/// A crystal inside the cavity and the axes the signal and idler see in it.
#[derive(Debug, Clone, PartialEq)]
pub struct CavityElement {
    pub name: String,
    pub material: Material,
    pub length_mm: f64,
    pub signal_axis: Axis,
    pub idler_axis: Axis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CavitySpec {
    pub mirror_reflectivity_high: f64,
    pub mirror_reflectivity_out: f64,
    pub elements: Vec<CavityElement>,
    pub air_gap_mm: f64,
    pub transverse_splitting_ghz: f64,
    /// Peak height of the transverse-mode comb relative to TEM₀₀.
    pub transverse_mode_weight: f64,
    /// TEM₀₀ resonance offset from the reference (QD) frequency.
    pub center_offset_ghz: f64,
}

impl CavitySpec {
    /// 5 mm PPKTP (signal on y) followed by a 2 mm KTP compensator with its
    /// axes swapped, between 99.8 % and 90 % mirrors.
    pub fn ppktp_with_compensator(air_gap_mm: f64) -> Self {
        let ktp = Material::ktp();
        CavitySpec {
            mirror_reflectivity_high: 0.998,
            mirror_reflectivity_out: 0.90,
            elements: vec![
                CavityElement {
                    name: "PPKTP".into(),
                    material: ktp.clone(),
                    length_mm: 5.0,
                    signal_axis: Axis::Y,
                    idler_axis: Axis::Z,
                },
                CavityElement {
                    name: "KTP compensator".into(),
                    material: ktp,
                    length_mm: 2.0,
                    signal_axis: Axis::Z,
                    idler_axis: Axis::Y,
                },
            ],
            air_gap_mm,
            transverse_splitting_ghz: 2.8,
            transverse_mode_weight: 0.6,
            center_offset_ghz: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("mirror_reflectivity_high", self.mirror_reflectivity_high),
            ("mirror_reflectivity_out", self.mirror_reflectivity_out),
        ] {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::arg(format!("{name} must be in (0, 1), got {r}")));
            }
        }
        if !(self.air_gap_mm >= 0.0) || self.elements.iter().any(|e| !(e.length_mm >= 0.0)) {
            return Err(Error::arg("cavity lengths must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.transverse_mode_weight) {
            return Err(Error::arg("transverse_mode_weight must be in [0, 1]"));
        }
        Ok(())
    }

    pub fn finesse(&self) -> Result<f64> {
        finesse(self.mirror_reflectivity_high, self.mirror_reflectivity_out)
    }

    /// Round-trip group optical length / 2, in mm.
    pub fn group_optical_length_mm(&self, pol: Polarization, wavelength_nm: f64, temperature_c: f64) -> Result<f64> {
        let mut total = self.air_gap_mm;
        for e in &self.elements {
            let axis = match pol {
                Polarization::Signal => e.signal_axis,
                Polarization::Idler => e.idler_axis,
            };
            total += e.length_mm * e.material.axis(axis)?.group_index(wavelength_nm * 1e-3, temperature_c)?;
        }
        Ok(total)
    }

    pub fn with_air_gap(&self, air_gap_mm: f64) -> Self {
        CavitySpec {
            air_gap_mm,
            ..self.clone()
        }
    }
}

/// `π(R₁R₂)^¼ / (1 − √(R₁R₂))`.
pub fn finesse(r_high: f64, r_out: f64) -> Result<f64> {
    for r in [r_high, r_out] {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::arg(format!("mirror reflectivity must be in (0, 1), got {r}")));
        }
    }
    let r = r_high * r_out;
    Ok(PI * r.powf(0.25) / (1.0 - r.sqrt()))
}

/// Free spectral range `c / (2·Σ n_g L)` of the signal field, in GHz.
pub fn free_spectral_range(cavity: &CavitySpec, wavelength_nm: f64, temperature_c: f64) -> Result<f64> {
    free_spectral_range_for(cavity, Polarization::Signal, wavelength_nm, temperature_c)
}

pub fn free_spectral_range_for(
    cavity: &CavitySpec,
    pol: Polarization,
    wavelength_nm: f64,
    temperature_c: f64,
) -> Result<f64> {
    let l = cavity.group_optical_length_mm(pol, wavelength_nm, temperature_c)?;
    if !(l > 0.0) {
        return Err(Error::arg("cavity optical length must be > 0"));
    }
    Ok(C_LIGHT / (2.0 * l * 1e-3) / 1e9)
}

/// Air gap (mm) that gives the signal field the requested free spectral range.
pub fn calibrate_air_gap(cavity: &CavitySpec, target_fsr_ghz: f64, wavelength_nm: f64, temperature_c: f64) -> Result<f64> {
    let crystals = cavity.with_air_gap(0.0).group_optical_length_mm(Polarization::Signal, wavelength_nm, temperature_c)?;
    let gap = C_LIGHT / (2.0 * target_fsr_ghz * 1e9) * 1e3 - crystals;
    if gap < 0.0 {
        return Err(Error::Infeasible {
            target: target_fsr_ghz,
            min: 0.0,
            max: C_LIGHT / (2.0 * crystals * 1e-3) / 1e9,
        });
    }
    Ok(gap)
}

/// Cavity intensity (photon) lifetime `F / (2π·FSR)` in ps.
pub fn cavity_lifetime_ps(cavity: &CavitySpec, wavelength_nm: f64, temperature_c: f64) -> Result<f64> {
    let f = cavity.finesse()?;
    let fsr = free_spectral_range(cavity, wavelength_nm, temperature_c)?;
    Ok(f / (2.0 * PI * fsr * 1e9) * 1e12)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransverseMode {
    pub offset_ghz: f64,
    pub weight: f64,
}

/// Resonance comb seen by the signal field.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeComb {
    pub fsr_ghz: f64,
    pub mode_linewidth_fwhm_ghz: f64,
    pub center_frequency_offset_ghz: f64,
    pub transverse_modes: Vec<TransverseMode>,
    pub signal_idler_fsr_mismatch_ghz: f64,
}

impl ModeComb {
    /// A bare longitudinal comb with no transverse modes.
    pub fn longitudinal(fsr_ghz: f64, finesse: f64) -> Self {
        ModeComb {
            fsr_ghz,
            mode_linewidth_fwhm_ghz: fsr_ghz / finesse,
            center_frequency_offset_ghz: 0.0,
            transverse_modes: vec![],
            signal_idler_fsr_mismatch_ghz: 0.0,
        }
    }

    pub fn finesse(&self) -> f64 {
        self.fsr_ghz / self.mode_linewidth_fwhm_ghz
    }

    pub fn transverse_offsets(&self) -> Vec<f64> {
        self.transverse_modes.iter().map(|m| m.offset_ghz).collect()
    }

    fn airy_at(&self, detuning_ghz: f64) -> f64 {
        let coef = (2.0 * self.finesse() / PI).powi(2);
        let s = (PI * detuning_ghz / self.fsr_ghz).sin();
        1.0 / (1.0 + coef * s * s)
    }

    /// Unnormalized TEM₀₀ + transverse comb.
    fn comb_sum(&self, detuning_ghz: f64) -> f64 {
        let x = detuning_ghz - self.center_frequency_offset_ghz;
        self.airy_at(x)
            + self
                .transverse_modes
                .iter()
                .map(|m| m.weight * self.airy_at(x - m.offset_ghz))
                .sum::<f64>()
    }

    /// Maximum of [`Self::comb_sum`] over one period.
    fn comb_peak(&self) -> f64 {
        let step = self.mode_linewidth_fwhm_ghz / 200.0;
        let n = (self.fsr_ghz / step).ceil() as usize;
        let off = self.center_frequency_offset_ghz;
        let sampled = (0..=n).map(|i| off + i as f64 * step);
        let resonances = std::iter::once(off).chain(self.transverse_modes.iter().map(|m| off + m.offset_ghz));
        sampled.chain(resonances).map(|x| self.comb_sum(x)).fold(1.0, f64::max)
    }

    /// Comb transmission including transverse modes, scaled so its maximum is 1.
    pub fn response(&self, detuning_ghz: f64) -> f64 {
        self.comb_sum(detuning_ghz) / self.comb_peak()
    }

    fn validate(&self) -> Result<()> {
        if !(self.fsr_ghz > 0.0 && self.mode_linewidth_fwhm_ghz > 0.0) {
            return Err(Error::arg("comb FSR and linewidth must be > 0"));
        }
        if !(self.mode_linewidth_fwhm_ghz < self.fsr_ghz) {
            return Err(Error::arg("comb linewidth must be below its FSR"));
        }
        Ok(())
    }
}

/// Comb for the cavity at a given wavelength and temperature.
pub fn mode_comb(cavity: &CavitySpec, wavelength_nm: f64, temperature_c: f64) -> Result<ModeComb> {
    cavity.validate()?;
    let f = cavity.finesse()?;
    let fsr_s = free_spectral_range_for(cavity, Polarization::Signal, wavelength_nm, temperature_c)?;
    let fsr_i = free_spectral_range_for(cavity, Polarization::Idler, wavelength_nm, temperature_c)?;
    let transverse_modes = if cavity.transverse_mode_weight > 0.0 {
        vec![TransverseMode {
            offset_ghz: cavity.transverse_splitting_ghz,
            weight: cavity.transverse_mode_weight,
        }]
    } else {
        vec![]
    };
    Ok(ModeComb {
        fsr_ghz: fsr_s,
        mode_linewidth_fwhm_ghz: fsr_s / f,
        center_frequency_offset_ghz: cavity.center_offset_ghz,
        transverse_modes,
        signal_idler_fsr_mismatch_ghz: (fsr_s - fsr_i).abs(),
    })
}

/// Airy transmission of the TEM₀₀ comb: `1 / (1 + (2F/π)² sin²(πν/FSR))`.
pub fn airy_transmission(comb: &ModeComb, detuning_ghz: f64) -> f64 {
    comb.airy_at(detuning_ghz - comb.center_frequency_offset_ghz)
}

/// External Fabry-Pérot filter etalon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtalonSpec {
    pub fsr_ghz: f64,
    pub bandwidth_fwhm_ghz: f64,
    pub center_offset_ghz: f64,
}

impl EtalonSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_fwhm_ghz > 0.0 && self.bandwidth_fwhm_ghz < self.fsr_ghz) {
            return Err(Error::arg("etalon bandwidth must be in (0, fsr)"));
        }
        Ok(())
    }

    pub fn transmission(&self, detuning_ghz: f64) -> f64 {
        let coef = (2.0 * self.fsr_ghz / self.bandwidth_fwhm_ghz / PI).powi(2);
        let s = (PI * (detuning_ghz - self.center_offset_ghz) / self.fsr_ghz).sin();
        1.0 / (1.0 + coef * s * s)
    }
}

/// Source spectrum leaving the cavity: gain envelope × mode comb × optional
/// filter. Every longitudinal mode inside the gain bandwidth is taken as
/// occupied, which holds when the pump bandwidth exceeds the signal-idler
/// FSR mismatch.
pub fn output_spectrum(
    gain: &SpectralDensity,
    comb: &ModeComb,
    pump: &PumpSpec,
    filter: Option<&EtalonSpec>,
) -> Result<SpectralDensity> {
    comb.validate()?;
    pump.validate()?;
    if pump.spectral_fwhm_ghz() <= comb.signal_idler_fsr_mismatch_ghz {
        return Err(Error::arg(format!(
            "pump bandwidth {:.3} GHz is below the signal-idler FSR mismatch {:.3} GHz; \
             mode-selective (CW-like) pumping is not modeled",
            pump.spectral_fwhm_ghz(),
            comb.signal_idler_fsr_mismatch_ghz
        )));
    }
    if gain.len() > 1 && gain.max_step() > comb.mode_linewidth_fwhm_ghz / 10.0 {
        return Err(Error::arg(format!(
            "grid step {:.4} GHz does not resolve the {:.4} GHz cavity modes (need <= linewidth/10)",
            gain.max_step(),
            comb.mode_linewidth_fwhm_ghz
        )));
    }
    let x = gain.detuning();
    if let Some(f) = filter {
        f.validate()?;
        let (lo, hi) = (f.center_offset_ghz - f.bandwidth_fwhm_ghz, f.center_offset_ghz + f.bandwidth_fwhm_ghz);
        if x[0] > lo || x[x.len() - 1] < hi {
            return Err(Error::arg("spectral grid does not cover the filter passband"));
        }
    }
    let norm = comb.comb_peak();
    let values = x
        .iter()
        .zip(gain.intensity())
        .map(|(&nu, &g)| {
            let t = filter.map_or(1.0, |f| f.transmission(nu));
            g * comb.comb_sum(nu) / norm * t
        })
        .collect();
    SpectralDensity::new(x.to_vec(), values)
}
