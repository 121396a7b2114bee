//! Mode overlap between the source photon and the emitter photon, and the
//! cavity length that matches a target lifetime.
//!
//! The overlaps assume pure, transform-limited single-photon wavepackets, so
//! they are upper bounds on the two-photon interference visibility.

use crate::cavity::{cavity_lifetime_ps, CavitySpec};
use crate::error::{Error, Result};
use crate::optimize::{golden_section, GoldenStep};
use crate::spectrum::{interpolate, trapezoid, SpectralDensity};
use crate::temporal::{lifetime_mismatch, WavepacketParams};

/// Overlap of two one-sided exponential amplitudes,
/// `4·γa·γb / (γa + γb)²`.
pub fn temporal_overlap(tau_a_ps: f64, tau_b_ps: f64) -> Result<f64> {
    if !(tau_a_ps > 0.0 && tau_b_ps > 0.0) {
        return Err(Error::arg("lifetimes must be > 0"));
    }
    let (ga, gb) = (1.0 / tau_a_ps, 1.0 / tau_b_ps);
    Ok(4.0 * ga * gb / ((ga + gb) * (ga + gb)))
}

/// Numeric overlap `(∫√(Ia·Ib) dt)² / (∫Ia dt · ∫Ib dt)` of two intensity
/// profiles, including any beat modulation.
pub fn temporal_overlap_numeric(a: &WavepacketParams, b: &WavepacketParams) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let tau_max = a.lifetime_ps.max(b.lifetime_ps);
    let mut dt = a.lifetime_ps.min(b.lifetime_ps) / 400.0;
    for f in [a.beat_frequency_ghz, b.beat_frequency_ghz].into_iter().flatten() {
        if f > 0.0 {
            dt = dt.min(1e3 / f / 100.0);
        }
    }
    let n = (40.0 * tau_max / dt).ceil() as usize;
    let t: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
    let ia: Vec<f64> = t.iter().map(|&x| a.value_at(x)).collect();
    let ib: Vec<f64> = t.iter().map(|&x| b.value_at(x)).collect();
    let cross: Vec<f64> = ia.iter().zip(&ib).map(|(x, y)| (x * y).sqrt()).collect();
    let (na, nb) = (trapezoid(&t, &ia), trapezoid(&t, &ib));
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::arg("wavepacket has zero area"));
    }
    let c = trapezoid(&t, &cross);
    Ok((c * c / (na * nb)).min(1.0))
}

/// Normalized inner product of two area-normalized spectra, evaluated on the
/// union of both grids (each spectrum is zero outside its own grid).
pub fn spectral_overlap(a: &SpectralDensity, b: &SpectralDensity) -> Result<f64> {
    let a = a.normalized_to_area()?;
    let b = b.normalized_to_area()?;
    let mut grid: Vec<f64> = a.detuning().iter().chain(b.detuning()).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let sample = |s: &SpectralDensity| -> Vec<f64> {
        grid.iter()
            .map(|&x| interpolate(s.detuning(), s.intensity(), x).unwrap_or(0.0))
            .collect()
    };
    let (ya, yb) = (sample(&a), sample(&b));
    let prod: Vec<f64> = ya.iter().zip(&yb).map(|(x, y)| x * y).collect();
    let sq_a: Vec<f64> = ya.iter().map(|x| x * x).collect();
    let sq_b: Vec<f64> = yb.iter().map(|x| x * x).collect();
    let norm = (trapezoid(&grid, &sq_a) * trapezoid(&grid, &sq_b)).sqrt();
    if !(norm > 0.0) {
        return Err(Error::arg("spectrum has zero norm"));
    }
    Ok((trapezoid(&grid, &prod) / norm).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapReport {
    pub temporal_overlap: f64,
    pub spectral_overlap: f64,
    pub lifetime_spdc_ps: f64,
    pub lifetime_target_ps: f64,
    pub mismatch: f64,
}

impl OverlapReport {
    pub fn new(lifetime_spdc_ps: f64, lifetime_target_ps: f64, spdc: &SpectralDensity, target: &SpectralDensity) -> Result<Self> {
        Ok(OverlapReport {
            temporal_overlap: temporal_overlap(lifetime_spdc_ps, lifetime_target_ps)?,
            spectral_overlap: spectral_overlap(spdc, target)?,
            lifetime_spdc_ps,
            lifetime_target_ps,
            mismatch: lifetime_mismatch(lifetime_spdc_ps, lifetime_target_ps)?,
        })
    }

    pub fn to_key_value(&self) -> String {
        format!(
            "temporal_overlap = {:.9}\nspectral_overlap = {:.9}\nlifetime_spdc_ps = {:.6}\nlifetime_target_ps = {:.6}\nmismatch = {:.9}\n",
            self.temporal_overlap, self.spectral_overlap, self.lifetime_spdc_ps, self.lifetime_target_ps, self.mismatch
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CavityMatch {
    pub gap_mm: f64,
    pub lifetime_ps: f64,
    /// Every optimizer evaluation: (iteration, gap, |τ − target|).
    pub trace: Vec<GoldenStep>,
}

/// Air gap in `gap_bounds_mm` whose cavity lifetime equals `target_ps`.
pub fn match_cavity_length(
    target_ps: f64,
    cavity: &CavitySpec,
    wavelength_nm: f64,
    temperature_c: f64,
    gap_bounds_mm: (f64, f64),
) -> Result<CavityMatch> {
    let (lo, hi) = gap_bounds_mm;
    if !(lo >= 0.0 && hi > lo) {
        return Err(Error::arg(format!("gap bounds [{lo}, {hi}] mm must satisfy 0 <= lo < hi")));
    }
    if !(target_ps > 0.0) {
        return Err(Error::arg("target lifetime must be > 0"));
    }
    let lifetime = |gap: f64| cavity_lifetime_ps(&cavity.with_air_gap(gap), wavelength_nm, temperature_c);
    let (t_lo, t_hi) = (lifetime(lo)?, lifetime(hi)?);
    if target_ps < t_lo || target_ps > t_hi {
        return Err(Error::Infeasible {
            target: target_ps,
            min: t_lo,
            max: t_hi,
        });
    }
    let (gap, trace) = golden_section(|g| (lifetime(g).unwrap_or(f64::INFINITY) - target_ps).abs(), lo, hi, 1e-6);
    Ok(CavityMatch {
        gap_mm: gap,
        lifetime_ps: lifetime(gap)?,
        trace,
    })
}
