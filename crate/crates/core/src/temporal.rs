//! Photon wavepackets in time: synthesis of decaying (optionally beating)
//! profiles, least-squares lifetime and beat fits, and lifetime/linewidth
//! conversions.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::coherence::linear_fit;
use crate::error::{Error, Result};
use crate::lsq::{levenberg_marquardt, LmResult};

/// Photon arrival histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalProfile {
    pub times_ps: Vec<f64>,
    /// Expected counts per bin.
    pub intensity: Vec<f64>,
    /// Shot-noise realization, when sampled.
    pub counts: Option<Vec<u64>>,
}

impl TemporalProfile {
    pub fn new(times_ps: Vec<f64>, intensity: Vec<f64>, counts: Option<Vec<u64>>) -> Result<Self> {
        if times_ps.len() != intensity.len() || counts.as_ref().is_some_and(|c| c.len() != times_ps.len()) {
            return Err(Error::arg("profile columns differ in length"));
        }
        if times_ps.windows(2).any(|w| !(w[1] > w[0])) || times_ps.first().is_some_and(|t| *t < 0.0) {
            return Err(Error::arg("times must be >= 0 and strictly increasing"));
        }
        if intensity.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::arg("intensity must be non-negative"));
        }
        Ok(TemporalProfile {
            times_ps,
            intensity,
            counts,
        })
    }

    /// The values a fit sees: sampled counts when present, else the intensity.
    pub fn observed(&self) -> Vec<f64> {
        match &self.counts {
            Some(c) => c.iter().map(|&v| v as f64).collect(),
            None => self.intensity.clone(),
        }
    }

    pub fn total_counts(&self) -> Option<u64> {
        self.counts.as_ref().map(|c| c.iter().sum())
    }
}

/// `I(t) = A·e^{−t/τ}·(1 + v·cos(2πft + φ))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavepacketParams {
    pub lifetime_ps: f64,
    pub beat_frequency_ghz: Option<f64>,
    pub beat_visibility: f64,
    pub phase_rad: f64,
    /// Expected counts per bin at t = 0 (before the beat factor).
    pub amplitude: f64,
}

impl WavepacketParams {
    pub fn exponential(lifetime_ps: f64, amplitude: f64) -> Self {
        WavepacketParams {
            lifetime_ps,
            beat_frequency_ghz: None,
            beat_visibility: 0.0,
            phase_rad: 0.0,
            amplitude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lifetime_ps > 0.0) {
            return Err(Error::arg("lifetime must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.beat_visibility) {
            return Err(Error::arg(format!(
                "beat visibility {} outside [0, 1] would make the intensity negative",
                self.beat_visibility
            )));
        }
        if !(self.amplitude >= 0.0) {
            return Err(Error::arg("amplitude must be >= 0"));
        }
        Ok(())
    }

    pub fn value_at(&self, t_ps: f64) -> f64 {
        let beat = match self.beat_frequency_ghz {
            Some(f) => 1.0 + self.beat_visibility * (2.0 * PI * f * t_ps * 1e-3 + self.phase_rad).cos(),
            None => 1.0,
        };
        self.amplitude * (-t_ps / self.lifetime_ps).exp() * beat
    }

    /// `∫₀^∞ I(t) dt` in counts·ps/bin:
    /// `Aτ + A·v·(cos φ/τ − ω sin φ)/(1/τ² + ω²)`.
    pub fn area(&self) -> f64 {
        let tau = self.lifetime_ps;
        let beat = match self.beat_frequency_ghz {
            Some(f) => {
                let w = 2.0 * PI * f * 1e-3;
                self.beat_visibility * (self.phase_rad.cos() / tau - w * self.phase_rad.sin())
                    / (1.0 / (tau * tau) + w * w)
            }
            None => 0.0,
        };
        self.amplitude * (tau + beat)
    }
}

/// Samples the wavepacket on `grid_ps`; with a seed, each bin also gets a
/// Poisson draw.
pub fn synth_wavepacket(params: &WavepacketParams, grid_ps: &[f64], seed: Option<u64>) -> Result<TemporalProfile> {
    params.validate()?;
    let intensity: Vec<f64> = grid_ps.iter().map(|&t| params.value_at(t)).collect();
    let counts = seed.map(|s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        intensity
            .iter()
            .map(|&mu| {
                if mu > 0.0 {
                    Poisson::new(mu).map(|p| p.sample(&mut rng) as u64).unwrap_or(0)
                } else {
                    0
                }
            })
            .collect()
    });
    TemporalProfile::new(grid_ps.to_vec(), intensity, counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub amplitude: f64,
    pub lifetime_ps: f64,
    pub lifetime_stderr_ps: f64,
    pub beat_frequency_ghz: Option<f64>,
    pub beat_frequency_stderr_ghz: Option<f64>,
    pub beat_visibility: Option<f64>,
    pub phase_rad: Option<f64>,
    /// Reduced chi-square.
    pub goodness: f64,
}

struct FitData {
    t: Vec<f64>,
    y: Vec<f64>,
    poisson: bool,
}

impl FitData {
    fn from_profile(p: &TemporalProfile) -> Result<Self> {
        let y = p.observed();
        if y.iter().filter(|v| **v > 0.0).count() < 10 {
            return Err(Error::Fit("profile needs at least 10 bins with positive counts".into()));
        }
        Ok(FitData {
            t: p.times_ps.clone(),
            y,
            poisson: p.counts.is_some(),
        })
    }

    /// Shot-noise σ for counted data (from `model` when given), else 1.
    fn sigmas(&self, model: Option<&[f64]>) -> Vec<f64> {
        if !self.poisson {
            return vec![1.0; self.y.len()];
        }
        match model {
            Some(m) => m.iter().map(|v| v.max(1.0).sqrt()).collect(),
            None => self.y.iter().map(|v| v.max(1.0).sqrt()).collect(),
        }
    }
}

/// Runs the fit, then (for counted data) refits once with σ² taken from the
/// first-pass model so the weights do not correlate with the noise.
fn weighted_fit(
    data: &FitData,
    p0: &[f64],
    model: impl Fn(&[f64], f64) -> (f64, Vec<f64>),
    project: impl Fn(&mut [f64]) + Copy,
) -> Result<LmResult> {
    let run = |sig: &[f64], start: &[f64]| {
        levenberg_marquardt(
            |p| {
                let n = data.t.len();
                let mut r = DVector::zeros(n);
                let mut j = DMatrix::zeros(n, p.len());
                for i in 0..n {
                    let (m, grad) = model(p, data.t[i]);
                    r[i] = (m - data.y[i]) / sig[i];
                    for (k, g) in grad.iter().enumerate() {
                        j[(i, k)] = g / sig[i];
                    }
                }
                (r, j)
            },
            start,
            project,
            500,
        )
    };
    let first = run(&data.sigmas(None), p0)?;
    if !data.poisson {
        return Ok(first);
    }
    let m: Vec<f64> = data.t.iter().map(|&t| model(&first.params, t).0).collect();
    run(&data.sigmas(Some(&m)), &first.params)
}

fn exp_model(p: &[f64], t: f64) -> (f64, Vec<f64>) {
    let e = (-t / p[1]).exp();
    (p[0] * e, vec![e, p[0] * e * t / (p[1] * p[1])])
}

fn initial_exponential(data: &FitData) -> (f64, f64) {
    let (mut x, mut ly) = (Vec::new(), Vec::new());
    for (&t, &y) in data.t.iter().zip(&data.y) {
        if y > 0.0 {
            x.push(t);
            ly.push(y.ln());
        }
    }
    let (slope, icpt) = linear_fit(&x, &ly);
    let span = data.t[data.t.len() - 1] - data.t[0];
    let tau = if slope < 0.0 { -1.0 / slope } else { span.max(1.0) };
    (icpt.exp(), tau)
}

fn lifetime_only(data: &FitData) -> Result<LmResult> {
    let (a0, tau0) = initial_exponential(data);
    weighted_fit(data, &[a0, tau0], exp_model, |p| p[1] = p[1].max(1e-6))
}

/// Single-exponential fit `A·e^{−t/τ}`.
pub fn fit_exponential(profile: &TemporalProfile) -> Result<FitResult> {
    let data = FitData::from_profile(profile)?;
    let fit = lifetime_only(&data)?;
    Ok(FitResult {
        amplitude: fit.params[0],
        lifetime_ps: fit.params[1],
        lifetime_stderr_ps: fit.stderr(1, !data.poisson),
        beat_frequency_ghz: None,
        beat_frequency_stderr_ghz: None,
        beat_visibility: None,
        phase_rad: None,
        goodness: fit.reduced_chi2(),
    })
}

fn beat_model(p: &[f64], t: f64) -> (f64, Vec<f64>) {
    let (a, tau, v, f, phi) = (p[0], p[1], p[2], p[3], p[4]);
    let e = (-t / tau).exp();
    let arg = 2.0 * PI * f * t * 1e-3 + phi;
    let (s, c) = arg.sin_cos();
    let shape = 1.0 + v * c;
    (
        a * e * shape,
        vec![
            e * shape,
            a * e * shape * t / (tau * tau),
            a * e * c,
            -a * e * v * s * 2.0 * PI * t * 1e-3,
            -a * e * v * s,
        ],
    )
}

/// Fit of `A·e^{−t/τ}(1 + v·cos(2πft + φ))`. The beat frequency is seeded
/// from the strongest component of the exponential-fit residual.
pub fn fit_exp_beat(profile: &TemporalProfile) -> Result<FitResult> {
    let data = FitData::from_profile(profile)?;
    let base = lifetime_only(&data)?;
    let (a0, tau0) = (base.params[0], base.params[1]);
    let t = &data.t;
    let max_dt = t.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let span = t[t.len() - 1] - t[0];
    if !(span > 0.0 && max_dt > 0.0) {
        return Err(Error::Fit("profile spans no time".into()));
    }

    let env: Vec<f64> = t.iter().map(|&ti| (-ti / tau0).exp()).collect();
    let resid: Vec<f64> = data.y.iter().zip(&env).map(|(y, e)| y - a0 * e).collect();
    let norm: f64 = env.iter().map(|e| e * e).sum();
    // Frequency scan from two cycles over the record to 6 samples per cycle.
    let f_lo = 2.0 / span * 1e3;
    let f_hi = 1.0 / (6.0 * max_dt) * 1e3;
    let df = 0.1 / span * 1e3;
    let mut best = (0.0, 0.0, 0.0);
    let mut f = f_lo;
    while f <= f_hi {
        let (mut re, mut im) = (0.0, 0.0);
        for i in 0..t.len() {
            let (s, c) = (2.0 * PI * f * t[i] * 1e-3).sin_cos();
            re += resid[i] * env[i] * c;
            im -= resid[i] * env[i] * s;
        }
        let mag = (re * re + im * im).sqrt();
        if mag > best.0 {
            best = (mag, f, im.atan2(re));
        }
        f += df;
    }
    let v0 = 2.0 * best.0 / (a0 * norm);
    let noise = if data.poisson {
        let var: f64 = data.y.iter().zip(&env).map(|(y, e)| y.max(1.0) * e * e).sum();
        2.0 * (var / 2.0).sqrt() / (a0 * norm)
    } else {
        0.0
    };
    // v0/noise is Rayleigh distributed for pure noise; the threshold keeps the
    // false-alarm rate near 1% over the independent frequencies scanned.
    let trials = ((f_hi - f_lo) * span * 1e-3).max(1.0);
    let threshold = (2.0 * (100.0 * trials).ln()).sqrt();
    if !(v0 > (threshold * noise).max(1e-6)) {
        return Err(Error::BeatUnidentifiable {
            visibility: v0,
            stderr: noise,
        });
    }

    let fit = weighted_fit(&data, &[a0, tau0, v0.min(1.0), best.1, best.2], beat_model, |p| {
        p[1] = p[1].max(1e-6);
    })?;
    let scale = !data.poisson;
    let mut p = fit.params.clone();
    if p[2] < 0.0 {
        p[2] = -p[2];
        p[4] += PI;
    }
    p[4] = (p[4] + PI).rem_euclid(2.0 * PI) - PI;
    let v_err = fit.stderr(2, scale);
    if !(p[2] > 3.0 * v_err && p[2] > 1e-6) {
        return Err(Error::BeatUnidentifiable {
            visibility: p[2],
            stderr: v_err,
        });
    }
    if p[3] * max_dt * 1e-3 > 1.0 / 6.0 {
        return Err(Error::Resolution(format!(
            "beat at {:.3} GHz is sampled with fewer than 6 points per period",
            p[3]
        )));
    }
    Ok(FitResult {
        amplitude: p[0],
        lifetime_ps: p[1],
        lifetime_stderr_ps: fit.stderr(1, scale),
        beat_frequency_ghz: Some(p[3]),
        beat_frequency_stderr_ghz: Some(fit.stderr(3, scale)),
        beat_visibility: Some(p[2]),
        phase_rad: Some(p[4]),
        goodness: fit.reduced_chi2(),
    })
}

/// Radiative linewidth `1/(2πτ)` in MHz for a lifetime in ps.
pub fn natural_linewidth(lifetime_ps: f64) -> Result<f64> {
    if !(lifetime_ps > 0.0) {
        return Err(Error::arg("lifetime must be > 0"));
    }
    Ok(1e6 / (2.0 * PI * lifetime_ps))
}

/// Denominator used for a relative lifetime mismatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MismatchConvention {
    /// `|a − b| / b`
    #[default]
    Reference,
    /// `|a − b| / ((a + b)/2)`; gives 21.5 % for 932 vs 751 ps.
    Mean,
}

/// `|τ_a − τ_b| / τ_b`.
pub fn lifetime_mismatch(tau_a: f64, tau_b: f64) -> Result<f64> {
    lifetime_mismatch_with(tau_a, tau_b, MismatchConvention::Reference)
}

pub fn lifetime_mismatch_with(tau_a: f64, tau_b: f64, convention: MismatchConvention) -> Result<f64> {
    if !(tau_a > 0.0 && tau_b > 0.0) {
        return Err(Error::arg("lifetimes must be > 0"));
    }
    let denom = match convention {
        MismatchConvention::Reference => tau_b,
        MismatchConvention::Mean => 0.5 * (tau_a + tau_b),
    };
    Ok((tau_a - tau_b).abs() / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(step: f64, end: f64) -> Vec<f64> {
        (0..=(end / step) as usize).map(|i| i as f64 * step).collect()
    }

    #[test]
    fn zero_visibility_is_pure_exponential() {
        let p = WavepacketParams {
            beat_frequency_ghz: Some(3.06),
            ..WavepacketParams::exponential(932.0, 100.0)
        };
        let prof = synth_wavepacket(&p, &grid(10.0, 3000.0), None).unwrap();
        for (t, v) in prof.times_ps.iter().zip(&prof.intensity) {
            assert!((v - 100.0 * (-t / 932.0).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn overdriven_visibility_is_rejected() {
        let p = WavepacketParams {
            beat_visibility: 1.2,
            beat_frequency_ghz: Some(3.0),
            ..WavepacketParams::exponential(900.0, 1.0)
        };
        assert!(synth_wavepacket(&p, &[0.0, 1.0], None).is_err());
    }

    #[test]
    fn beat_period_matches_frequency() {
        // 3.06 GHz -> successive maxima 326.8 ps apart
        let p = WavepacketParams {
            beat_frequency_ghz: Some(3.06),
            beat_visibility: 0.5,
            ..WavepacketParams::exponential(932.0, 1.0)
        };
        let g = grid(0.1, 2000.0);
        let prof = synth_wavepacket(&p, &g, None).unwrap();
        let shape: Vec<f64> = g.iter().zip(&prof.intensity).map(|(t, v)| v / (-t / 932.0).exp()).collect();
        let peaks = crate::spectrum::local_maxima(&shape, 0.0);
        let period = (g[peaks[2]] - g[peaks[0]]) / 2.0;
        assert!((period - 1e3 / 3.06).abs() < 0.2);
    }

    #[test]
    fn noiseless_round_trip_exponential() {
        let prof = synth_wavepacket(&WavepacketParams::exponential(751.0, 1000.0), &grid(10.0, 5000.0), None).unwrap();
        let fit = fit_exponential(&prof).unwrap();
        assert!((fit.lifetime_ps / 751.0 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn all_zero_profile_cannot_be_fit() {
        let prof = TemporalProfile::new(grid(1.0, 50.0), vec![0.0; 51], None).unwrap();
        assert!(matches!(fit_exponential(&prof), Err(Error::Fit(_))));
    }

    #[test]
    fn no_beat_is_flagged() {
        let prof = synth_wavepacket(&WavepacketParams::exponential(932.0, 1000.0), &grid(10.0, 5000.0), None).unwrap();
        assert!(matches!(fit_exp_beat(&prof), Err(Error::BeatUnidentifiable { .. })));
    }

    #[test]
    fn linewidths_from_lifetimes() {
        assert!((natural_linewidth(751.0).unwrap() - 211.924_025_421_964).abs() < 1e-9);
        assert!((natural_linewidth(932.0).unwrap() - 170.767_106_321_776).abs() < 1e-9);
        assert!((natural_linewidth(1e3 / (2.0 * PI)).unwrap() - 1000.0).abs() < 1e-9);
        assert!(natural_linewidth(0.0).is_err());
    }

    #[test]
    fn mismatch_conventions() {
        assert_eq!(lifetime_mismatch(5.0, 5.0).unwrap(), 0.0);
        assert_eq!(lifetime_mismatch(10.0, 5.0).unwrap(), 1.0);
        let reference = lifetime_mismatch(932.0, 751.0).unwrap();
        assert!((reference - 0.241).abs() < 1e-3);
        let mean = lifetime_mismatch_with(932.0, 751.0, MismatchConvention::Mean).unwrap();
        assert!((mean - 0.215).abs() < 5e-4);
    }
}
