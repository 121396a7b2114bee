//! Quasi-phase-matched type-II down-conversion: wave-vector mismatch, gain
//! spectrum, bandwidth and temperature tuning.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::dispersion::CrystalSpec;
use crate::error::{Error, Result};
use crate::optimize::bisect;
use crate::spectrum::{half_max_crossings, interpolate, SpectralDensity};
use crate::C_LIGHT;

/// Half-width of the sinc² main lobe: `sinc²(x) = 1/2` at `x ≈ 1.39`.
pub const SINC2_HALF_WIDTH: f64 = 1.39;

/// Time-bandwidth product of a transform-limited sech² pulse.
pub const SECH2_TIME_BANDWIDTH: f64 = 0.315;

/// Pulsed pump laser.
#[derive(Debug, Clone, PartialEq)]
pub struct PumpSpec {
    pub center_wavelength_nm: f64,
    pub repetition_rate_mhz: f64,
    pub pulse_fwhm_ps: f64,
    pub average_power_mw: f64,
}

impl Default for PumpSpec {
    fn default() -> Self {
        PumpSpec {
            center_wavelength_nm: 470.98,
            repetition_rate_mhz: 76.0,
            pulse_fwhm_ps: 50.0,
            average_power_mw: 5.0,
        }
    }
}

impl PumpSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.center_wavelength_nm > 0.0) {
            return Err(Error::arg("pump wavelength must be > 0"));
        }
        if !(self.repetition_rate_mhz > 0.0) {
            return Err(Error::arg("pump repetition rate must be > 0"));
        }
        if !(self.pulse_fwhm_ps > 0.0) {
            return Err(Error::arg("pump pulse width must be > 0"));
        }
        if !(self.average_power_mw >= 0.0) {
            return Err(Error::arg("pump power must be >= 0"));
        }
        Ok(())
    }

    /// Transform-limited sech² spectral FWHM in GHz (6.3 GHz for 50 ps).
    pub fn spectral_fwhm_ghz(&self) -> f64 {
        SECH2_TIME_BANDWIDTH / self.pulse_fwhm_ps * 1e3
    }

    pub fn pulse_period_ns(&self) -> f64 {
        1e3 / self.repetition_rate_mhz
    }

    /// Wavelength at which signal and idler are frequency degenerate.
    pub fn degenerate_wavelength_nm(&self) -> f64 {
        2.0 * self.center_wavelength_nm
    }

    /// Partner wavelength fixed by energy conservation.
    pub fn conjugate_wavelength_nm(&self, wavelength_nm: f64) -> f64 {
        1.0 / (1.0 / self.center_wavelength_nm - 1.0 / wavelength_nm)
    }
}

/// `Δk₀ = k_p − k_s − k_i − 2π/Λ − φ/L` in rad/µm.
pub fn delta_k0(
    crystal: &CrystalSpec,
    pump: &PumpSpec,
    signal_nm: f64,
    idler_nm: f64,
) -> Result<f64> {
    let residual = 1.0 / pump.center_wavelength_nm - 1.0 / signal_nm - 1.0 / idler_nm;
    if !(residual.abs() <= 1e-9) {
        return Err(Error::arg(format!(
            "energy conservation violated: 1/λp − 1/λs − 1/λi = {residual:e} nm⁻¹"
        )));
    }
    raw_mismatch(crystal, pump.center_wavelength_nm, signal_nm, idler_nm)
}

fn raw_mismatch(crystal: &CrystalSpec, pump_nm: f64, signal_nm: f64, idler_nm: f64) -> Result<f64> {
    let m = &crystal.material;
    let t = crystal.temperature_c;
    let kp = m.axis(crystal.pump_axis)?.wavevector(pump_nm * 1e-3, t)?;
    let ks = m.axis(crystal.signal_axis)?.wavevector(signal_nm * 1e-3, t)?;
    let ki = m.axis(crystal.idler_axis)?.wavevector(idler_nm * 1e-3, t)?;
    let grating = crystal.poling_period_um.map_or(0.0, |p| 2.0 * PI / p);
    Ok(kp - ks - ki - grating - crystal.phase_offset_rad / crystal.length_um())
}

/// Mismatch at frequency degeneracy (`λs = λi = 2λp`).
pub fn degenerate_delta_k0(crystal: &CrystalSpec, pump: &PumpSpec) -> Result<f64> {
    let l = pump.degenerate_wavelength_nm();
    raw_mismatch(crystal, pump.center_wavelength_nm, l, l)
}

/// Phase offset that zeroes the degenerate mismatch at `temperature_c`.
pub fn calibrate_phase_offset(crystal: &CrystalSpec, pump: &PumpSpec, temperature_c: f64) -> Result<f64> {
    let mut c = crystal.with_temperature(temperature_c);
    c.phase_offset_rad = 0.0;
    Ok(degenerate_delta_k0(&c, pump)? * c.length_um())
}

/// `n_g(signal) − n_g(idler)` at a common wavelength.
pub fn group_index_mismatch(crystal: &CrystalSpec, wavelength_nm: f64) -> Result<f64> {
    let m = &crystal.material;
    let l = wavelength_nm * 1e-3;
    let t = crystal.temperature_c;
    Ok(m.axis(crystal.signal_axis)?.group_index(l, t)? - m.axis(crystal.idler_axis)?.group_index(l, t)?)
}

fn sinc2(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0
    } else {
        let s = x.sin() / x;
        s * s
    }
}

/// `sinc²(Δk·L/2)` on a detuning grid, with `Δk` expanded to first order
/// about degeneracy and the idler detuned by `−Δν`.
pub fn gain_spectrum(crystal: &CrystalSpec, pump: &PumpSpec, detuning_ghz: &[f64]) -> Result<SpectralDensity> {
    if detuning_ghz.is_empty() {
        return Err(Error::arg("detuning grid is empty"));
    }
    let n = detuning_ghz.len();
    let scale = detuning_ghz.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-12);
    if (0..n).any(|i| (detuning_ghz[i] + detuning_ghz[n - 1 - i]).abs() > 1e-9 * scale) {
        return Err(Error::arg("detuning grid must be symmetric about 0"));
    }
    let dk0 = degenerate_delta_k0(crystal, pump)?;
    let dng = group_index_mismatch(crystal, pump.degenerate_wavelength_nm())?;
    let half_len = crystal.length_um() / 2.0;
    // rad/µm per GHz of signal detuning
    let slope = dng * 2.0 * PI * 1e9 / C_LIGHT * 1e-6;
    SpectralDensity::from_fn(detuning_ghz.to_vec(), |nu| sinc2((dk0 - slope * nu) * half_len))
}

/// A centered sinc² envelope with the given FWHM, for imposing a measured
/// bandwidth in place of the crystal prediction.
pub fn sinc2_envelope(fwhm_ghz: f64, detuning_ghz: &[f64]) -> Result<SpectralDensity> {
    if !(fwhm_ghz > 0.0) {
        return Err(Error::arg("envelope FWHM must be > 0"));
    }
    SpectralDensity::from_fn(detuning_ghz.to_vec(), |nu| sinc2(2.0 * SINC2_HALF_WIDTH * nu / fwhm_ghz))
}

/// Closed-form FWHM gain bandwidth in GHz (ordinary frequency):
/// `2·(2·1.39·c) / (2π·L·|n_gs − n_gi|)`.
pub fn fwhm_bandwidth(crystal: &CrystalSpec, center_wavelength_nm: f64) -> Result<f64> {
    let dng = group_index_mismatch(crystal, center_wavelength_nm)?;
    fwhm_from_group_mismatch(crystal.length_mm, dng)
}

pub fn fwhm_from_group_mismatch(length_mm: f64, group_index_mismatch: f64) -> Result<f64> {
    if !(group_index_mismatch.abs() > 1e-6) {
        return Err(Error::DegenerateGroupIndex(group_index_mismatch.abs()));
    }
    let l = length_mm * 1e-3;
    Ok(2.0 * (2.0 * SINC2_HALF_WIDTH * C_LIGHT) / (2.0 * PI * l * group_index_mismatch.abs()) / 1e9)
}

/// Temperature at which the degenerate mismatch vanishes, by bisection to 1e-4 °C.
pub fn degeneracy_temperature(crystal: &CrystalSpec, pump: &PumpSpec, bracket_c: (f64, f64)) -> Result<f64> {
    let mut err = None;
    let root = bisect(
        |t| match degenerate_delta_k0(&crystal.with_temperature(t), pump) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                f64::NAN
            }
        },
        bracket_c.0,
        bracket_c.1,
        1e-4,
    );
    if let Some(e) = err {
        return Err(e);
    }
    root
}

/// Signal and idler spectra as functions of crystal temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningCurve {
    pub temperatures_c: Vec<f64>,
    pub wavelengths_nm: Vec<f64>,
    /// Row-major `[temperature][wavelength]`, normalized to max 1.
    pub signal: Vec<f64>,
    pub idler: Vec<f64>,
}

impl TuningCurve {
    fn row<'a>(&self, m: &'a [f64], i: usize) -> &'a [f64] {
        let w = self.wavelengths_nm.len();
        &m[i * w..(i + 1) * w]
    }

    pub fn signal_row(&self, i: usize) -> &[f64] {
        self.row(&self.signal, i)
    }

    pub fn idler_row(&self, i: usize) -> &[f64] {
        self.row(&self.idler, i)
    }

    /// Sum of both branches normalized to max 1, as seen without a polarizer.
    pub fn combined(&self) -> Vec<f64> {
        let sum: Vec<f64> = self.signal.iter().zip(&self.idler).map(|(a, b)| a + b).collect();
        let m = sum.iter().copied().fold(0.0, f64::max);
        if m > 0.0 {
            sum.iter().map(|v| v / m).collect()
        } else {
            sum
        }
    }

    /// Per temperature: wavelength of the signal and idler maxima.
    pub fn branch_peaks(&self) -> Vec<(f64, f64, f64)> {
        let argmax = |row: &[f64]| {
            row.iter()
                .enumerate()
                .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
                .0
        };
        (0..self.temperatures_c.len())
            .map(|i| {
                (
                    self.temperatures_c[i],
                    self.wavelengths_nm[argmax(self.signal_row(i))],
                    self.wavelengths_nm[argmax(self.idler_row(i))],
                )
            })
            .collect()
    }

    /// Temperature and wavelength where the signal and idler maxima cross.
    pub fn crossing(&self) -> Result<(f64, f64)> {
        let peaks = self.branch_peaks();
        let d: Vec<f64> = peaks.iter().map(|p| p.1 - p.2).collect();
        if let Some(zero_run) = first_zero_run(&d) {
            let mid = (zero_run.0 + zero_run.1) / 2;
            let t = 0.5 * (peaks[zero_run.0].0 + peaks[zero_run.1].0);
            return Ok((t, 0.5 * (peaks[mid].1 + peaks[mid].2)));
        }
        for i in 0..d.len().saturating_sub(1) {
            if d[i] * d[i + 1] < 0.0 {
                let f = d[i] / (d[i] - d[i + 1]);
                let t = peaks[i].0 + f * (peaks[i + 1].0 - peaks[i].0);
                let near = if f < 0.5 { i } else { i + 1 };
                return Ok((t, 0.5 * (peaks[near].1 + peaks[near].2)));
            }
        }
        Err(Error::arg("signal and idler branches do not cross inside the temperature range"))
    }

    /// Full width in temperature over which the signal branch at
    /// `wavelength_nm` stays above half its maximum.
    pub fn temperature_band(&self, wavelength_nm: f64) -> Result<f64> {
        let column: Vec<f64> = (0..self.temperatures_c.len())
            .map(|i| interpolate(&self.wavelengths_nm, self.signal_row(i), wavelength_nm))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::arg("wavelength outside the tuning-curve grid"))?;
        let (lo, hi) = half_max_crossings(&self.temperatures_c, &column)?;
        Ok(hi - lo)
    }

    /// Per temperature: normalized overlap `⟨s, i⟩ / (|s|·|i|)` of the signal
    /// and idler spectra. 1 where they coincide.
    pub fn branch_overlap(&self) -> Vec<f64> {
        (0..self.temperatures_c.len())
            .map(|k| {
                let (s, i) = (self.signal_row(k), self.idler_row(k));
                let dot: f64 = s.iter().zip(i).map(|(a, b)| a * b).sum();
                let norm = (s.iter().map(|a| a * a).sum::<f64>() * i.iter().map(|b| b * b).sum::<f64>()).sqrt();
                if norm > 0.0 {
                    dot / norm
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Temperature bandwidth of degenerate operation: full width over which
    /// the branch overlap stays above half its peak.
    pub fn overlap_band(&self) -> Result<f64> {
        let (lo, hi) = half_max_crossings(&self.temperatures_c, &self.branch_overlap())?;
        Ok(hi - lo)
    }
}

fn first_zero_run(d: &[f64]) -> Option<(usize, usize)> {
    let start = d.iter().position(|v| *v == 0.0)?;
    let len = d[start..].iter().take_while(|v| **v == 0.0).count();
    Some((start, start + len - 1))
}

fn check_grid(name: &str, g: &[f64]) -> Result<()> {
    if g.is_empty() {
        return Err(Error::arg(format!("{name} grid is empty")));
    }
    if g.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::arg(format!("{name} grid must be strictly increasing")));
    }
    Ok(())
}

/// Exact (full-dispersion) signal and idler spectra over a temperature ×
/// wavelength grid.
pub fn tuning_curve(
    crystal: &CrystalSpec,
    pump: &PumpSpec,
    temperatures_c: &[f64],
    wavelengths_nm: &[f64],
) -> Result<TuningCurve> {
    check_grid("temperature", temperatures_c)?;
    check_grid("wavelength", wavelengths_nm)?;
    let deg = pump.degenerate_wavelength_nm();
    if deg < wavelengths_nm[0] || deg > wavelengths_nm[wavelengths_nm.len() - 1] {
        return Err(Error::arg(format!(
            "wavelength range must contain the degenerate wavelength {deg} nm"
        )));
    }
    let half_len = crystal.length_um() / 2.0;
    let rows: Vec<(Vec<f64>, Vec<f64>)> = temperatures_c
        .par_iter()
        .map(|&t| {
            let c = crystal.with_temperature(t);
            let mut sig = Vec::with_capacity(wavelengths_nm.len());
            let mut idl = Vec::with_capacity(wavelengths_nm.len());
            for &l in wavelengths_nm {
                let partner = pump.conjugate_wavelength_nm(l);
                sig.push(sinc2(delta_k0(&c, pump, l, partner)? * half_len));
                idl.push(sinc2(delta_k0(&c, pump, partner, l)? * half_len));
            }
            Ok((sig, idl))
        })
        .collect::<Result<_>>()?;
    let normalize = |m: Vec<f64>| {
        let max = m.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            m.into_iter().map(|v| v / max).collect()
        } else {
            m
        }
    };
    let (sig, idl): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok(TuningCurve {
        temperatures_c: temperatures_c.to_vec(),
        wavelengths_nm: wavelengths_nm.to_vec(),
        signal: normalize(sig.concat()),
        idler: normalize(idl.concat()),
    })
}
