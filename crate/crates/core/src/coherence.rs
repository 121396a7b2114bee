//! First-order coherence of the source from its spectrum, fringe visibility,
//! and the decay times read off the coherence trace.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lsq::levenberg_marquardt;
use crate::spectrum::{local_maxima, SpectralDensity};

/// Revival maxima below this visibility are ignored.
pub const PEAK_FLOOR: f64 = 0.01;

/// `|g¹(τ)|` sampled on a delay grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceTrace {
    pub delays_ps: Vec<f64>,
    pub visibility: Vec<f64>,
}

impl CoherenceTrace {
    pub fn new(delays_ps: Vec<f64>, visibility: Vec<f64>) -> Result<Self> {
        if delays_ps.is_empty() || delays_ps.len() != visibility.len() {
            return Err(Error::arg("trace needs equal, non-zero numbers of delays and values"));
        }
        if delays_ps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::arg("delays must be strictly increasing"));
        }
        if visibility.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::arg("visibility values must lie in [0, 1]"));
        }
        Ok(CoherenceTrace {
            delays_ps,
            visibility,
        })
    }
}

/// Delay grid from 0 to `max_ps`: `coarse_step` everywhere, `fine_step`
/// within `fine_half_width` of zero and, when `revival_period_ps` is given,
/// of every multiple of it (each exact multiple is included).
pub fn delay_grid(
    max_ps: f64,
    fine_step: f64,
    coarse_step: f64,
    fine_half_width: f64,
    revival_period_ps: Option<f64>,
) -> Result<Vec<f64>> {
    if !(max_ps > 0.0 && fine_step > 0.0 && coarse_step >= fine_step && fine_half_width >= 0.0) {
        return Err(Error::arg("delay grid needs max > 0 and 0 < fine_step <= coarse_step"));
    }
    let mut pts: Vec<f64> = Vec::new();
    let n_coarse = (max_ps / coarse_step).floor() as usize;
    pts.extend((0..=n_coarse).map(|i| i as f64 * coarse_step));
    let mut centers = vec![0.0];
    if let Some(p) = revival_period_ps {
        if !(p > 0.0) {
            return Err(Error::arg("revival period must be > 0"));
        }
        let n = (max_ps / p).floor() as usize;
        centers.extend((1..=n).map(|k| k as f64 * p));
    }
    let n_fine = (fine_half_width / fine_step).round() as i64;
    for c in centers {
        for i in -n_fine..=n_fine {
            let t = c + i as f64 * fine_step;
            if (0.0..=max_ps).contains(&t) {
                pts.push(t);
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    Ok(pts)
}

/// `|Σ S(ν) e^{i2πντ}| / Σ S(ν)` evaluated by direct summation.
pub fn g1_from_spectrum(spectrum: &SpectralDensity, delays_ps: &[f64]) -> Result<CoherenceTrace> {
    let x = spectrum.detuning();
    let s = spectrum.intensity();
    let weights: Vec<f64> = if x.len() == 1 {
        vec![s[0]]
    } else {
        (0..x.len())
            .map(|k| {
                let lo = x[k.saturating_sub(1)];
                let hi = x[(k + 1).min(x.len() - 1)];
                let width = if k == 0 || k == x.len() - 1 { hi - lo } else { 0.5 * (hi - lo) };
                s[k] * width
            })
            .collect()
    };
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::arg("spectrum is identically zero"));
    }
    let uniform = spectrum.uniform_step();
    let visibility = delays_ps
        .par_iter()
        .map(|&tau| {
            if tau == 0.0 {
                return 1.0;
            }
            let (re, im) = match uniform {
                Some(step) => horner_phasor(&weights, 2.0 * PI * step * tau * 1e-3),
                None => x.iter().zip(&weights).fold((0.0, 0.0), |(re, im), (&nu, &w)| {
                    let (sn, cs) = (2.0 * PI * nu * tau * 1e-3).sin_cos();
                    (re + w * cs, im + w * sn)
                }),
            };
            ((re * re + im * im).sqrt() / total).min(1.0)
        })
        .collect();
    CoherenceTrace::new(delays_ps.to_vec(), visibility)
}

/// `Σ w_k e^{ikθ}` up to a global phase, via Horner's rule.
fn horner_phasor(w: &[f64], theta: f64) -> (f64, f64) {
    let (zs, zc) = theta.sin_cos();
    let (mut re, mut im) = (0.0, 0.0);
    for &wk in w.iter().rev() {
        let r = re * zc - im * zs + wk;
        im = re * zs + im * zc;
        re = r;
    }
    (re, im)
}

/// Fringe contrast `(I_max − I_min)/(I_max + I_min)`.
pub fn visibility(i_max: f64, i_min: f64) -> Result<f64> {
    if !(i_min >= 0.0) {
        return Err(Error::arg("intensities must be >= 0"));
    }
    if i_max < i_min {
        return Err(Error::arg(format!("I_max ({i_max}) is below I_min ({i_min})")));
    }
    if !(i_max > 0.0) {
        return Err(Error::arg("both intensities are zero"));
    }
    Ok((i_max - i_min) / (i_max + i_min))
}

/// Revival structure of a comb-spectrum coherence trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RevivalAnalysis {
    /// `(delay_ps, visibility)` of each revival maximum, excluding τ = 0.
    pub peaks: Vec<(f64, f64)>,
    /// Least-squares spacing of the revival positions.
    pub spacing_ps: f64,
    /// 1/e time of an exponential through the revival maxima.
    pub coherence_time_ps: f64,
    /// Frequency of the slow envelope modulation divided out of the fit, if
    /// enough revivals were available to resolve one.
    pub modulation_ghz: Option<f64>,
}

/// Harmonics of the envelope modulation carried in the log-envelope fit. A
/// transverse mode of relative weight w contributes ln|1 + w·e^{iθ}|, whose
/// series falls off as wⁿ/n.
const ENVELOPE_HARMONICS: usize = 3;

/// Fewer revivals than this and the envelope is fitted as a pure exponential.
const MIN_PEAKS_FOR_MODULATION: usize = 16;

/// RMS deviation of the log envelope from a straight line below which it is
/// treated as unmodulated.
const MODULATION_RMS_FLOOR: f64 = 1e-3;

/// Least-squares fit of `y = a + b·t + Σₕ cₕcos(2πhft) + sₕsin(2πhft)`.
/// Returns `(b, residual sum of squares)`.
fn modulated_line(t: &[f64], y: &[f64], f_per_ps: f64, harmonics: usize) -> Option<(f64, f64)> {
    let ncol = 2 + 2 * harmonics;
    let a = DMatrix::from_fn(t.len(), ncol, |i, j| match j {
        0 => 1.0,
        1 => t[i] - t[0],
        _ => {
            let h = ((j - 2) / 2 + 1) as f64;
            let arg = 2.0 * PI * h * f_per_ps * t[i];
            if j % 2 == 0 {
                arg.cos()
            } else {
                arg.sin()
            }
        }
    });
    let b = DVector::from_column_slice(y);
    let coef = a.clone().svd(true, true).solve(&b, 1e-12).ok()?;
    let r = &a * &coef - &b;
    Some((coef[1], r.norm_squared()))
}

/// Slope of the log envelope with a slow periodic modulation removed. The
/// modulation frequency is the one that best explains the residuals, scanned
/// from one cycle over the record up to the Nyquist limit of the revival
/// sampling and then refined.
fn modulated_envelope_slope(t: &[f64], y: &[f64], spacing_ps: f64) -> Option<(f64, f64)> {
    let lo = 1.0 / (t[t.len() - 1] - t[0]);
    let hi = 0.5 / spacing_ps;
    if !(hi > lo) {
        return None;
    }
    let sse = |f: f64| modulated_line(t, y, f, ENVELOPE_HARMONICS).map_or(f64::INFINITY, |r| r.1);
    let n = 2000;
    let step = (hi - lo) / n as f64;
    let mut best = (lo, sse(lo));
    for i in 1..=n {
        let f = lo + step * i as f64;
        let e = sse(f);
        if e < best.1 {
            best = (f, e);
        }
    }
    let (a, b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let f = crate::optimize::golden_section(sse, a, b, 1e-9 * hi).0;
    modulated_line(t, y, f, ENVELOPE_HARMONICS).map(|(slope, _)| (slope, f * 1e3))
}

/// Index one past the central peak: the first local minimum or the first
/// sample below the peak floor.
fn central_peak_end(v: &[f64]) -> usize {
    (1..v.len())
        .find(|&i| v[i] < PEAK_FLOOR || (i + 1 < v.len() && v[i] <= v[i - 1] && v[i] < v[i + 1]))
        .unwrap_or(v.len())
}

/// Local maxima above the floor, thinned so that no two retained peaks are
/// closer than `min_separation_ps` (the higher one wins).
pub fn revival_peaks(trace: &CoherenceTrace, min_separation_ps: f64) -> Vec<(f64, f64)> {
    let v = &trace.visibility;
    let t = &trace.delays_ps;
    let start = central_peak_end(v);
    let mut cand: Vec<usize> = local_maxima(v, PEAK_FLOOR).into_iter().filter(|&i| i >= start).collect();
    cand.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in cand {
        if kept.iter().all(|&k| (t[k] - t[i]).abs() >= min_separation_ps) {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept.into_iter().map(|i| (t[i], v[i])).collect()
}

/// Locates revivals (minimum separation half the first revival delay) and
/// fits their envelope.
pub fn analyze_revivals(trace: &CoherenceTrace) -> Result<RevivalAnalysis> {
    let v = &trace.visibility;
    if v.iter().all(|&x| x >= 1.0 - 1e-9) {
        return Err(Error::Fit("no decay: visibility is flat at 1".into()));
    }
    let start = central_peak_end(v);
    let first = local_maxima(v, PEAK_FLOOR)
        .into_iter()
        .find(|&i| i >= start)
        .ok_or_else(|| Error::Fit("no revival peaks above 1% visibility".into()))?;
    let peaks = revival_peaks(trace, 0.5 * trace.delays_ps[first]);
    if peaks.len() < 3 {
        return Err(Error::Fit(format!("need >= 3 revival peaks, found {}", peaks.len())));
    }
    let k: Vec<f64> = (1..=peaks.len()).map(|i| i as f64).collect();
    let pos: Vec<f64> = peaks.iter().map(|p| p.0).collect();
    let (spacing, _) = linear_fit(&k, &pos);
    let logs: Vec<f64> = peaks.iter().map(|p| p.1.ln()).collect();
    let (mut slope, intercept) = linear_fit(&pos, &logs);
    let rms = (pos.iter().zip(&logs).map(|(t, y)| (y - slope * t - intercept).powi(2)).sum::<f64>()
        / pos.len() as f64)
        .sqrt();
    let mut modulation_ghz = None;
    if peaks.len() >= MIN_PEAKS_FOR_MODULATION && rms > MODULATION_RMS_FLOOR {
        if let Some((s, f)) = modulated_envelope_slope(&pos, &logs, spacing) {
            slope = s;
            modulation_ghz = Some(f);
        }
    }
    if !(slope < 0.0) {
        return Err(Error::Fit("no decay: revival envelope is not decreasing".into()));
    }
    Ok(RevivalAnalysis {
        peaks,
        spacing_ps: spacing,
        coherence_time_ps: -1.0 / slope,
        modulation_ghz,
    })
}

/// 1/e time of the revival envelope, in ps.
pub fn coherence_time(trace: &CoherenceTrace) -> Result<f64> {
    analyze_revivals(trace).map(|r| r.coherence_time_ps)
}

/// Lifetime of an exponential `A·e^{−τ/t}` fitted to the central peak.
pub fn central_peak_width(trace: &CoherenceTrace) -> Result<f64> {
    let t = &trace.delays_ps;
    let v = &trace.visibility;
    if t[0] != 0.0 {
        return Err(Error::Resolution("trace must start at zero delay".into()));
    }
    let end = central_peak_end(v);
    if end < 4 {
        return Err(Error::Resolution(format!(
            "central peak spans only {end} samples; refine the grid near zero delay"
        )));
    }
    let coarse = t[..end].windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if coarse > 0.2 + 1e-12 {
        return Err(Error::Resolution(format!(
            "delay step {coarse} ps near zero exceeds 0.2 ps"
        )));
    }
    let (x, y) = (&t[..end], &v[..end]);
    let logs: Vec<f64> = y.iter().map(|v| v.max(1e-300).ln()).collect();
    let (slope, intercept) = linear_fit(x, &logs);
    let tau0 = if slope < 0.0 { -1.0 / slope } else { x[end - 1] };
    let fit = levenberg_marquardt(
        |p| {
            let mut r = DVector::zeros(x.len());
            let mut j = DMatrix::zeros(x.len(), 2);
            for (i, (&xi, &yi)) in x.iter().zip(y).enumerate() {
                let e = (-xi / p[1]).exp();
                r[i] = p[0] * e - yi;
                j[(i, 0)] = e;
                j[(i, 1)] = p[0] * e * xi / (p[1] * p[1]);
            }
            (r, j)
        },
        &[intercept.exp(), tau0],
        |p| p[1] = p[1].max(1e-6),
        200,
    )?;
    Ok(fit.params[1])
}

/// Ordinary least squares `y = a·x + b`, returning `(a, b)`.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn visibility_arithmetic() {
        assert_eq!(visibility(1.0, 0.0).unwrap(), 1.0);
        assert_eq!(visibility(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(visibility(3.0, 1.0).unwrap(), 0.5);
        assert!(visibility(1.0, 2.0).is_err());
        assert!(visibility(0.0, 0.0).is_err());
    }

    #[test]
    fn zero_delay_is_exactly_one() {
        let s = SpectralDensity::new(vec![-1.0, 0.0, 3.0], vec![0.2, 1.0, 0.5]).unwrap();
        let tr = g1_from_spectrum(&s, &[0.0, 10.0]).unwrap();
        assert_eq!(tr.visibility[0], 1.0);
        let zero = SpectralDensity::new(vec![0.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert!(g1_from_spectrum(&zero, &[0.0]).is_err());
    }

    #[test]
    fn horner_agrees_with_direct_sum() {
        let grid: Vec<f64> = (0..400).map(|i| -20.0 + 0.1 * i as f64).collect();
        let vals: Vec<f64> = grid.iter().map(|x| (-(x * x) / 30.0).exp()).collect();
        let uni = SpectralDensity::new(grid.clone(), vals.clone()).unwrap();
        // Same samples on a grid nudged off uniformity forces the direct branch.
        let mut nudged = grid.clone();
        nudged[0] -= 1e-6;
        let direct = SpectralDensity::new(nudged, vals).unwrap();
        let d = [3.0, 37.0, 120.0];
        let a = g1_from_spectrum(&uni, &d).unwrap();
        let b = g1_from_spectrum(&direct, &d).unwrap();
        for (x, y) in a.visibility.iter().zip(&b.visibility) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn delta_spectrum_has_no_decay() {
        let s = SpectralDensity::new(vec![0.0], vec![1.0]).unwrap();
        let tr = g1_from_spectrum(&s, &[0.0, 100.0, 200.0, 300.0]).unwrap();
        match coherence_time(&tr) {
            Err(Error::Fit(m)) => assert!(m.contains("no decay")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn delay_grid_contains_revival_centers() {
        let g = delay_grid(500.0, 0.1, 1.0, 2.0, Some(113.6)).unwrap();
        for k in 0..=4 {
            let c = k as f64 * 113.6;
            assert!(g.iter().any(|t| (t - c).abs() < 1e-9));
        }
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(*g.last().unwrap() <= 500.0);
    }

    #[test]
    fn coarse_grid_fails_central_width() {
        let tr = CoherenceTrace::new(
            (0..50).map(|i| i as f64).collect(),
            (0..50).map(|i| (-(i as f64) / 5.0).exp()).collect(),
        )
        .unwrap();
        assert!(matches!(central_peak_width(&tr), Err(Error::Resolution(_))));
    }
}
