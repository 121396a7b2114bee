//! A quantum-dot trion as a Stark-tunable Lorentzian scatterer probed by the
//! source spectrum, and the two-peak fit of the resulting bias scan.

use std::f64::consts::{LN_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::levenberg_marquardt;
use crate::spectrum::{local_maxima, SpectralDensity};
use crate::temporal::natural_linewidth;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lineshape {
    /// Single Lorentzian at the broadened width.
    #[default]
    Lorentzian,
    /// Natural Lorentzian convolved with Gaussian diffusion, sized so the
    /// total FWHM equals the broadened width (pseudo-Voigt approximation).
    Voigt,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QDSpec {
    pub center_wavelength_nm: f64,
    pub lifetime_ps: f64,
    pub broadened_fwhm_mhz: f64,
    pub stark_slope_ghz_per_v: f64,
    pub reference_bias_v: f64,
    pub lineshape: Lineshape,
}

impl Default for QDSpec {
    fn default() -> Self {
        QDSpec {
            center_wavelength_nm: 941.843_07,
            lifetime_ps: 751.0,
            broadened_fwhm_mhz: 730.0,
            stark_slope_ghz_per_v: 4.0,
            reference_bias_v: 0.8,
            lineshape: Lineshape::Lorentzian,
        }
    }
}

impl QDSpec {
    pub fn validate(&self) -> Result<()> {
        let natural = natural_linewidth(self.lifetime_ps)?;
        if !(self.broadened_fwhm_mhz >= natural) {
            return Err(Error::arg(format!(
                "broadened FWHM {} MHz is below the natural linewidth {natural:.1} MHz",
                self.broadened_fwhm_mhz
            )));
        }
        if !self.stark_slope_ghz_per_v.is_finite() || !self.reference_bias_v.is_finite() {
            return Err(Error::arg("Stark slope and reference bias must be finite"));
        }
        Ok(())
    }

    pub fn fwhm_ghz(&self) -> f64 {
        self.broadened_fwhm_mhz * 1e-3
    }
}

fn lorentzian(x: f64, fwhm: f64) -> f64 {
    let u = 2.0 * x / fwhm;
    1.0 / (1.0 + u * u)
}

fn gaussian(x: f64, fwhm: f64) -> f64 {
    (-4.0 * LN_2 * (x / fwhm).powi(2)).exp()
}

/// Thompson-Cox-Hastings pseudo-Voigt with peak 1.
fn pseudo_voigt(x: f64, f_l: f64, f_g: f64) -> f64 {
    let f = (f_g.powi(5)
        + 2.69269 * f_g.powi(4) * f_l
        + 2.42843 * f_g.powi(3) * f_l.powi(2)
        + 4.47163 * f_g.powi(2) * f_l.powi(3)
        + 0.07842 * f_g * f_l.powi(4)
        + f_l.powi(5))
    .powf(0.2);
    let r = f_l / f;
    let eta = 1.36603 * r - 0.47719 * r * r + 0.11116 * r * r * r;
    eta * lorentzian(x, f) + (1.0 - eta) * gaussian(x, f)
}

/// Normalized scattering response (peak 1) at `detuning_ghz` from the line.
pub fn qd_lineshape(qd: &QDSpec, detuning_ghz: f64) -> f64 {
    let fwhm = qd.fwhm_ghz();
    match qd.lineshape {
        Lineshape::Lorentzian => lorentzian(detuning_ghz, fwhm),
        Lineshape::Voigt => {
            let f_l = 1e3 / (2.0 * PI * qd.lifetime_ps);
            // Olivero-Longbothum relation solved for the Gaussian width.
            let f_g = ((fwhm - 0.5346 * f_l).powi(2) - 0.2166 * f_l * f_l).max(0.0).sqrt();
            pseudo_voigt(detuning_ghz, f_l, f_g)
        }
    }
}

/// The QD line sampled on a detuning grid.
pub fn qd_line_spectrum(qd: &QDSpec, grid_ghz: Vec<f64>) -> Result<SpectralDensity> {
    SpectralDensity::from_fn(grid_ghz, |d| qd_lineshape(qd, d))
}

/// `δ = −slope·(V − V_ref)`: lowering the bias raises the transition frequency.
pub fn stark_detuning(qd: &QDSpec, bias_v: f64) -> f64 {
    -qd.stark_slope_ghz_per_v * (bias_v - qd.reference_bias_v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanParams {
    pub incident_rate_hz: f64,
    pub collection_efficiency: f64,
    /// Scattering-strength calibration constant; 0 turns the dot off.
    pub scattering_strength: f64,
    pub dark_rate_hz: f64,
    pub integration_time_s: f64,
}

impl ScanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.integration_time_s > 0.0) {
            return Err(Error::arg("integration time must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.collection_efficiency) {
            return Err(Error::arg("collection efficiency outside [0, 1]"));
        }
        if !(self.incident_rate_hz >= 0.0 && self.scattering_strength >= 0.0 && self.dark_rate_hz >= 0.0) {
            return Err(Error::arg("rates and scattering strength must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub biases_v: Vec<f64>,
    pub detuning_ghz: Vec<f64>,
    /// Total counts (scattered plus background).
    pub counts: Vec<u64>,
    pub background: Vec<u64>,
    /// Expected total counts before sampling.
    pub expected: Vec<f64>,
}

/// Simulates the bias scan. Each bias point draws from its own generator
/// stream, so points are sampled in parallel without changing the result.
pub fn scattering_scan(
    spectrum: &SpectralDensity,
    qd: &QDSpec,
    biases_v: &[f64],
    params: &ScanParams,
    seed: u64,
) -> Result<ScanResult> {
    qd.validate()?;
    params.validate()?;
    let area = spectrum.integral();
    if !((area - 1.0).abs() < 1e-6) {
        return Err(Error::arg(format!("source spectrum must be normalized to unit area, got {area}")));
    }
    let x = spectrum.detuning();
    let s = spectrum.intensity();
    let scale = params.incident_rate_hz * params.collection_efficiency * params.scattering_strength * params.integration_time_s;
    let dark = params.dark_rate_hz * params.integration_time_s;

    let rows: Vec<(f64, f64, u64, u64)> = biases_v
        .par_iter()
        .enumerate()
        .map(|(i, &v)| {
            let delta = stark_detuning(qd, v);
            let overlap = if scale > 0.0 {
                let y: Vec<f64> = x.iter().zip(s).map(|(w, sv)| sv * qd_lineshape(qd, w - delta)).collect();
                crate::spectrum::trapezoid(x, &y)
            } else {
                0.0
            };
            let signal = scale * overlap;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let draw = |mu: f64, rng: &mut ChaCha8Rng| {
                if mu > 0.0 {
                    Poisson::new(mu).map(|p| p.sample(rng) as u64).unwrap_or(0)
                } else {
                    0
                }
            };
            let sig = draw(signal, &mut rng);
            let bg = draw(dark, &mut rng);
            (delta, signal + dark, sig + bg, bg)
        })
        .collect();

    Ok(ScanResult {
        biases_v: biases_v.to_vec(),
        detuning_ghz: rows.iter().map(|r| r.0).collect(),
        expected: rows.iter().map(|r| r.1).collect(),
        counts: rows.iter().map(|r| r.2).collect(),
        background: rows.iter().map(|r| r.3).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoublePeakFit {
    pub separation_ghz: f64,
    pub separation_stderr_ghz: f64,
    /// Peak centers in detuning, ascending.
    pub centers_ghz: (f64, f64),
    pub widths_ghz: (f64, f64),
    /// Weaker over stronger peak amplitude.
    pub amplitude_ratio: f64,
    pub background: f64,
    pub reduced_chi2: f64,
}

fn double_model(p: &[f64], x: f64) -> (f64, [f64; 7]) {
    let mut val = p[0];
    let mut grad = [0.0; 7];
    grad[0] = 1.0;
    for k in 0..2 {
        let (a, c, w) = (p[1 + 3 * k], p[2 + 3 * k], p[3 + 3 * k]);
        let u = 2.0 * (x - c) / w;
        let l = 1.0 / (1.0 + u * u);
        val += a * l;
        grad[1 + 3 * k] = l;
        // dl/du = −2u·l², du/dc = −2/w, du/dw = −u/w
        grad[2 + 3 * k] = a * 2.0 * u * l * l * 2.0 / w;
        grad[3 + 3 * k] = a * 2.0 * u * l * l * u / w;
    }
    (val, grad)
}

/// Two Lorentzians on a constant background, fitted by weighted least
/// squares (Poisson σ) in detuning units.
pub fn fit_double_peak(scan: &ScanResult) -> Result<DoublePeakFit> {
    let n = scan.counts.len();
    if n < 10 {
        return Err(Error::Fit("scan has fewer than 10 points".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scan.detuning_ghz[a].total_cmp(&scan.detuning_ghz[b]));
    let x: Vec<f64> = order.iter().map(|&i| scan.detuning_ghz[i]).collect();
    let y: Vec<f64> = order.iter().map(|&i| scan.counts[i] as f64).collect();

    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(n);
            y[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let mut sorted = smooth.clone();
    sorted.sort_by(f64::total_cmp);
    let base = sorted[..(n / 10).max(1)].iter().sum::<f64>() / (n / 10).max(1) as f64;
    let thresh = base + 3.0 * base.max(1.0).sqrt();
    let mut cands: Vec<usize> = local_maxima(&smooth, thresh);
    cands.sort_by(|&a, &b| smooth[b].total_cmp(&smooth[a]));
    let mut peaks: Vec<usize> = Vec::new();
    // A secondary maximum counts only if the dip separating it from every
    // stronger peak is significant against the smoothed shot noise.
    let prominent = |c: usize, p: usize| {
        let (lo, hi) = (c.min(p), c.max(p));
        let dip = smooth[lo..=hi].iter().cloned().fold(f64::INFINITY, f64::min);
        smooth[c] - dip > 3.0 * (smooth[c].max(1.0) / 5.0).sqrt()
    };
    for c in cands {
        if peaks.iter().all(|&p| c.abs_diff(p) >= 4 && prominent(c, p)) {
            peaks.push(c);
        }
        if peaks.len() == 2 {
            break;
        }
    }
    if peaks.len() < 2 {
        return Err(Error::Fit(format!(
            "found {} significant peak(s) above background {base:.1}; need two",
            peaks.len()
        )));
    }
    peaks.sort_unstable();

    let width_guess = |i: usize| {
        let half = base + 0.5 * (smooth[i] - base);
        let mut j = i;
        while j > 0 && smooth[j] > half {
            j -= 1;
        }
        let mut k = i;
        while k + 1 < n && smooth[k] > half {
            k += 1;
        }
        (x[k] - x[j]).max(x[1] - x[0])
    };
    let mut p0 = vec![base];
    for &i in &peaks {
        p0.extend([smooth[i] - base, x[i], width_guess(i)]);
    }

    let run = |sig: &[f64], start: &[f64]| {
        levenberg_marquardt(
            |p| {
                let mut r = DVector::zeros(n);
                let mut j = DMatrix::zeros(n, 7);
                for i in 0..n {
                    let (m, g) = double_model(p, x[i]);
                    r[i] = (m - y[i]) / sig[i];
                    for k in 0..7 {
                        j[(i, k)] = g[k] / sig[i];
                    }
                }
                (r, j)
            },
            start,
            |p| {
                p[3] = p[3].abs().max(1e-6);
                p[6] = p[6].abs().max(1e-6);
            },
            500,
        )
    };
    let sig0: Vec<f64> = y.iter().map(|v| v.max(1.0).sqrt()).collect();
    let first = run(&sig0, &p0)?;
    let sig1: Vec<f64> = x.iter().map(|&xi| double_model(&first.params, xi).0.max(1.0).sqrt()).collect();
    let fit = run(&sig1, &first.params)?;

    let p = &fit.params;
    let (mut a, mut b) = ((p[1], p[2], p[3]), (p[4], p[5], p[6]));
    if a.1 > b.1 {
        std::mem::swap(&mut a, &mut b);
    }
    if !(a.0 > 0.0 && b.0 > 0.0) {
        return Err(Error::Fit("a fitted peak has non-positive amplitude".into()));
    }
    let cov = &fit.covariance;
    let var_sep = cov[(2, 2)] + cov[(5, 5)] - 2.0 * cov[(2, 5)];
    Ok(DoublePeakFit {
        separation_ghz: b.1 - a.1,
        separation_stderr_ghz: var_sep.max(0.0).sqrt(),
        centers_ghz: (a.1, b.1),
        widths_ghz: (a.2, b.2),
        amplitude_ratio: a.0.min(b.0) / a.0.max(b.0),
        background: p[0],
        reduced_chi2: fit.reduced_chi2(),
    })
}
