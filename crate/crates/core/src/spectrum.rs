//! Sampled spectral intensity on a detuning grid.

use crate::error::{Error, Result};

/// Non-negative spectral intensity sampled on a strictly increasing
/// detuning grid (GHz, ordinary frequency).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    detuning_ghz: Vec<f64>,
    intensity: Vec<f64>,
}

impl SpectralDensity {
    pub fn new(detuning_ghz: Vec<f64>, intensity: Vec<f64>) -> Result<Self> {
        if detuning_ghz.is_empty() {
            return Err(Error::arg("spectral grid is empty"));
        }
        if detuning_ghz.len() != intensity.len() {
            return Err(Error::arg(format!(
                "grid has {} points but intensity has {}",
                detuning_ghz.len(),
                intensity.len()
            )));
        }
        if detuning_ghz.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::arg("spectral grid must be strictly increasing"));
        }
        if intensity.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::arg("spectral intensity must be finite and non-negative"));
        }
        Ok(SpectralDensity {
            detuning_ghz,
            intensity,
        })
    }

    /// Samples `f` on `grid`.
    pub fn from_fn(grid: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.iter().map(|&x| f(x)).collect();
        Self::new(grid, values)
    }

    pub fn detuning(&self) -> &[f64] {
        &self.detuning_ghz
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn len(&self) -> usize {
        self.intensity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensity.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.intensity.iter().copied().fold(0.0, f64::max)
    }

    /// Detuning of the global maximum.
    pub fn peak_detuning(&self) -> f64 {
        let (i, _) = self
            .intensity
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        self.detuning_ghz[i]
    }

    /// Copy scaled to a peak value of 1. Fails for an all-zero spectrum.
    pub fn normalized_to_peak(&self) -> Result<Self> {
        let m = self.max();
        if m <= 0.0 {
            return Err(Error::arg("spectrum is identically zero"));
        }
        Ok(SpectralDensity {
            detuning_ghz: self.detuning_ghz.clone(),
            intensity: self.intensity.iter().map(|v| v / m).collect(),
        })
    }

    /// Trapezoidal integral over the grid (intensity·GHz).
    pub fn integral(&self) -> f64 {
        trapezoid(&self.detuning_ghz, &self.intensity)
    }

    /// Copy scaled to unit area.
    pub fn normalized_to_area(&self) -> Result<Self> {
        let a = self.integral();
        if a <= 0.0 {
            return Err(Error::arg("spectrum has zero area"));
        }
        Ok(SpectralDensity {
            detuning_ghz: self.detuning_ghz.clone(),
            intensity: self.intensity.iter().map(|v| v / a).collect(),
        })
    }

    /// Linear interpolation, zero outside the grid.
    pub fn value_at(&self, detuning_ghz: f64) -> f64 {
        interpolate(&self.detuning_ghz, &self.intensity, detuning_ghz).unwrap_or(0.0)
    }

    /// Uniform grid step, if the grid is uniform to 1e-9 relative.
    pub fn uniform_step(&self) -> Option<f64> {
        if self.len() < 2 {
            return None;
        }
        let x = &self.detuning_ghz;
        let step = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
        let uniform = x
            .windows(2)
            .all(|w| ((w[1] - w[0]) - step).abs() <= 1e-9 * step.abs().max(1e-300) + 1e-12);
        uniform.then_some(step)
    }

    pub fn max_step(&self) -> f64 {
        self.detuning_ghz
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Indices of strict local maxima whose value exceeds `threshold`.
    pub fn local_maxima(&self, threshold: f64) -> Vec<usize> {
        local_maxima(&self.intensity, threshold)
    }

    /// Full width at half maximum of the main peak, from linearly
    /// interpolated half-max crossings.
    pub fn fwhm(&self) -> Result<f64> {
        let (left, right) = half_max_crossings(&self.detuning_ghz, &self.intensity)?;
        Ok(right - left)
    }

    /// Mirror image about zero detuning.
    pub fn mirrored(&self) -> Self {
        SpectralDensity {
            detuning_ghz: self.detuning_ghz.iter().rev().map(|x| -x).collect(),
            intensity: self.intensity.iter().rev().copied().collect(),
        }
    }
}

/// `-n·step ..= n·step` with `n = round(half_span/step)`.
pub fn symmetric_grid(half_span: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && half_span >= 0.0 && half_span.is_finite()) {
        return Err(Error::arg("grid needs step > 0 and a finite half span"));
    }
    let n = (half_span / step).round() as i64;
    Ok((-n..=n).map(|i| i as f64 * step).collect())
}

/// `n` points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1]))
        .sum()
}

/// Linear interpolation on a strictly increasing grid; `None` outside it.
pub fn interpolate(x: &[f64], y: &[f64], at: f64) -> Option<f64> {
    if x.is_empty() || at < x[0] || at > x[x.len() - 1] {
        return None;
    }
    let i = x.partition_point(|&v| v <= at);
    if i == 0 {
        return Some(y[0]);
    }
    if i >= x.len() {
        return Some(y[x.len() - 1]);
    }
    let t = (at - x[i - 1]) / (x[i] - x[i - 1]);
    Some(y[i - 1] + t * (y[i] - y[i - 1]))
}

pub(crate) fn local_maxima(y: &[f64], threshold: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let n = y.len();
    let mut i = 1;
    while i + 1 < n {
        if y[i] > threshold && y[i] > y[i - 1] {
            // Walk across flat tops.
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                out.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Half-max crossings on either side of the global maximum.
pub(crate) fn half_max_crossings(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let (imax, ymax) = y
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    if !(ymax > 0.0) {
        return Err(Error::arg("cannot take a width of an all-zero curve"));
    }
    let half = ymax / 2.0;
    let cross = |a: usize, b: usize| {
        let t = (half - y[a]) / (y[b] - y[a]);
        x[a] + t * (x[b] - x[a])
    };
    let left = (1..=imax)
        .rev()
        .find(|&i| y[i - 1] < half)
        .map(|i| cross(i - 1, i))
        .ok_or_else(|| Error::arg("curve does not fall to half maximum on the left"))?;
    let right = (imax..y.len() - 1)
        .find(|&i| y[i + 1] < half)
        .map(|i| cross(i, i + 1))
        .ok_or_else(|| Error::arg("curve does not fall to half maximum on the right"))?;
    Ok((left, right))
}
