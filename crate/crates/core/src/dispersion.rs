//! Refractive index, group index and wave vector of birefringent crystal axes.
//!
//! Each axis is described by a [`SellmeierSet`]: a Sellmeier formula of the
//! shape `n² = c0 + Σ c(2k-1) / (λ² − c(2k))` (λ in µm) plus a thermo-optic
//! polynomial in `1/λ`. Material tables are read from plain-text data files
//! (see `data/ktp_kato2002.disp`).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dielectric axis of a biaxial crystal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(Error::arg(format!("unknown axis '{other}'"))),
        }
    }
}

/// Dispersion and thermo-optic data for one crystal axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SellmeierSet {
    axis: Axis,
    coeffs: Vec<f64>,
    dn_dt: Vec<f64>,
    d2n_dt2: Vec<f64>,
    range_um: (f64, f64),
    t_ref_c: f64,
}

impl SellmeierSet {
    /// Builds and validates a set.
    ///
    /// `coeffs` is `[c0, b1, c1, b2, c2, ...]`; `dn_dt` and `d2n_dt2` hold
    /// polynomial coefficients in `1/λ` (lowest order first). `d2n_dt2` may be
    /// empty, in which case the temperature dependence is linear.
    pub fn new(
        axis: Axis,
        coeffs: Vec<f64>,
        dn_dt: Vec<f64>,
        d2n_dt2: Vec<f64>,
        range_um: (f64, f64),
        t_ref_c: f64,
    ) -> Result<Self> {
        if coeffs.is_empty() || coeffs.len() % 2 == 0 {
            return Err(Error::arg(format!(
                "axis {axis}: coeffs must hold c0 followed by (b, c) pairs, got {} values",
                coeffs.len()
            )));
        }
        let all = coeffs.iter().chain(&dn_dt).chain(&d2n_dt2);
        if all.into_iter().any(|c| !c.is_finite()) || !t_ref_c.is_finite() {
            return Err(Error::arg(format!("axis {axis}: non-finite coefficient")));
        }
        if !(range_um.0 > 0.0 && range_um.0 < range_um.1) {
            return Err(Error::arg(format!(
                "axis {axis}: range_um must satisfy 0 < min < max, got [{}, {}]",
                range_um.0, range_um.1
            )));
        }
        let set = SellmeierSet {
            axis,
            coeffs,
            dn_dt,
            d2n_dt2,
            range_um,
            t_ref_c,
        };
        for i in 0..=200 {
            let lambda = range_um.0 + (range_um.1 - range_um.0) * f64::from(i) / 200.0;
            let n2 = set.index_squared_ref(lambda);
            if !(n2 >= 1.0) {
                return Err(Error::arg(format!(
                    "axis {axis}: index at the reference temperature is below 1 at {lambda} um"
                )));
            }
        }
        Ok(set)
    }

    /// A dispersionless axis with `n ≡ index`, valid from 0.2 to 5 µm.
    pub fn constant(axis: Axis, index: f64) -> Result<Self> {
        Self::new(axis, vec![index * index], vec![], vec![], (0.2, 5.0), 20.0)
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn valid_range_um(&self) -> (f64, f64) {
        self.range_um
    }

    pub fn reference_temperature(&self) -> f64 {
        self.t_ref_c
    }

    /// `n(λ, T) = n(λ, T_ref) + dn/dT·ΔT (+ d²n/dT²·ΔT²)`.
    pub fn refractive_index(&self, wavelength_um: f64, temperature_c: f64) -> Result<f64> {
        self.check_range(wavelength_um, false)?;
        Ok(self.index_unchecked(wavelength_um, temperature_c))
    }

    /// Group index `n − λ·dn/dλ`, using the analytic wavelength derivative.
    pub fn group_index(&self, wavelength_um: f64, temperature_c: f64) -> Result<f64> {
        self.check_range(wavelength_um, true)?;
        let n = self.index_unchecked(wavelength_um, temperature_c);
        Ok(n - wavelength_um * self.dn_dlambda(wavelength_um, temperature_c))
    }

    /// Wave vector `2πn/λ` in rad/µm.
    pub fn wavevector(&self, wavelength_um: f64, temperature_c: f64) -> Result<f64> {
        Ok(2.0 * PI * self.refractive_index(wavelength_um, temperature_c)? / wavelength_um)
    }

    fn check_range(&self, wavelength_um: f64, strict: bool) -> Result<()> {
        let (lo, hi) = self.range_um;
        let inside = if strict {
            wavelength_um > lo && wavelength_um < hi
        } else {
            wavelength_um >= lo && wavelength_um <= hi
        };
        if inside {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                quantity: "wavelength_um",
                value: wavelength_um,
                min: lo,
                max: hi,
            })
        }
    }

    fn index_squared_ref(&self, lambda: f64) -> f64 {
        let l2 = lambda * lambda;
        let poles: f64 = self.coeffs[1..]
            .chunks_exact(2)
            .map(|p| p[0] / (l2 - p[1]))
            .sum();
        self.coeffs[0] + poles
    }

    fn index_unchecked(&self, lambda: f64, temperature_c: f64) -> f64 {
        let dt = temperature_c - self.t_ref_c;
        self.index_squared_ref(lambda).sqrt()
            + inverse_poly(&self.dn_dt, lambda) * dt
            + inverse_poly(&self.d2n_dt2, lambda) * dt * dt
    }

    fn dn_dlambda(&self, lambda: f64, temperature_c: f64) -> f64 {
        let l2 = lambda * lambda;
        let dn2: f64 = self.coeffs[1..]
            .chunks_exact(2)
            .map(|p| -2.0 * lambda * p[0] / ((l2 - p[1]) * (l2 - p[1])))
            .sum();
        let dt = temperature_c - self.t_ref_c;
        dn2 / (2.0 * self.index_squared_ref(lambda).sqrt())
            + inverse_poly_derivative(&self.dn_dt, lambda) * dt
            + inverse_poly_derivative(&self.d2n_dt2, lambda) * dt * dt
    }
}

/// `Σ a_k λ^-k`.
fn inverse_poly(coeffs: &[f64], lambda: f64) -> f64 {
    let inv = 1.0 / lambda;
    coeffs.iter().rev().fold(0.0, |acc, &a| acc * inv + a)
}

/// `d/dλ Σ a_k λ^-k = Σ −k a_k λ^-(k+1)`.
fn inverse_poly_derivative(coeffs: &[f64], lambda: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &a)| -(k as f64) * a * lambda.powi(-(k as i32) - 1))
        .sum()
}

/// All tabulated axes of one crystal material.
#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    pub name: String,
    sets: Vec<SellmeierSet>,
}

const KTP_DATA: &str = include_str!("../data/ktp_kato2002.disp");

impl Material {
    pub fn new(name: impl Into<String>, sets: Vec<SellmeierSet>) -> Result<Self> {
        let mut seen = Vec::new();
        for s in &sets {
            if seen.contains(&s.axis) {
                return Err(Error::arg(format!("axis {} listed twice", s.axis)));
            }
            seen.push(s.axis);
        }
        Ok(Material {
            name: name.into(),
            sets,
        })
    }

    /// The bundled KTP table.
    pub fn ktp() -> Self {
        KTP_DATA.parse().expect("bundled KTP data file is valid")
    }

    /// An isotropic toy material with the same constant index on every axis.
    pub fn constant(index: f64) -> Result<Self> {
        let sets = [Axis::X, Axis::Y, Axis::Z]
            .into_iter()
            .map(|a| SellmeierSet::constant(a, index))
            .collect::<Result<Vec<_>>>()?;
        Material::new(format!("constant n={index}"), sets)
    }

    pub fn axis(&self, axis: Axis) -> Result<&SellmeierSet> {
        self.sets
            .iter()
            .find(|s| s.axis == axis)
            .ok_or_else(|| Error::arg(format!("material {} has no data for axis {axis}", self.name)))
    }

    pub fn sets(&self) -> &[SellmeierSet] {
        &self.sets
    }
}

#[derive(Default)]
struct PendingRecord {
    axis: Option<(Axis, usize)>,
    coeffs: Option<Vec<f64>>,
    dn_dt: Option<Vec<f64>>,
    d2n_dt2: Option<Vec<f64>>,
    range: Option<Vec<f64>>,
    t_ref: Option<f64>,
}

impl PendingRecord {
    fn finish(self) -> Result<Option<SellmeierSet>> {
        let Some((axis, line)) = self.axis else {
            return Ok(None);
        };
        let missing = |key: &str| Error::Parse {
            line,
            message: format!("record for axis {axis} is missing '{key}'"),
        };
        let range = self.range.ok_or_else(|| missing("range_um"))?;
        if range.len() != 2 {
            return Err(Error::Parse {
                line,
                message: "range_um needs exactly two values".into(),
            });
        }
        SellmeierSet::new(
            axis,
            self.coeffs.ok_or_else(|| missing("coeffs"))?,
            self.dn_dt.unwrap_or_default(),
            self.d2n_dt2.unwrap_or_default(),
            (range[0], range[1]),
            self.t_ref.ok_or_else(|| missing("T_ref_C"))?,
        )
        .map(Some)
        .map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })
    }
}

fn parse_list(value: &str, line: usize) -> Result<Vec<f64>> {
    let inner = value
        .strip_prefix('[')
        .and_then(|v| v.strip_suffix(']'))
        .ok_or_else(|| Error::Parse {
            line,
            message: format!("expected a [..] list, got '{value}'"),
        })?;
    inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("'{s}' is not a number"),
            })
        })
        .collect()
}

impl FromStr for Material {
    type Err = Error;

    /// Parses the key-value dispersion format. An `axis = ..` line starts a
    /// new record; `#` starts a comment.
    fn from_str(text: &str) -> Result<Self> {
        let mut name = String::from("unnamed");
        let mut sets = Vec::new();
        let mut rec = PendingRecord::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected 'key = value', got '{content}'"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let in_record = rec.axis.is_some();
            match key {
                "material" => name = value.to_string(),
                "version" => {}
                "axis" => {
                    let axis = value.parse::<Axis>().map_err(|e| Error::Parse {
                        line,
                        message: e.to_string(),
                    })?;
                    if let Some(set) = std::mem::take(&mut rec).finish()? {
                        sets.push(set);
                    }
                    rec.axis = Some((axis, line));
                }
                "coeffs" | "dn_dT" | "d2n_dT2" | "range_um" | "T_ref_C" if !in_record => {
                    return Err(Error::Parse {
                        line,
                        message: format!("'{key}' appears before any 'axis' line"),
                    })
                }
                "coeffs" => rec.coeffs = Some(parse_list(value, line)?),
                "dn_dT" => rec.dn_dt = Some(parse_list(value, line)?),
                "d2n_dT2" => rec.d2n_dt2 = Some(parse_list(value, line)?),
                "range_um" => rec.range = Some(parse_list(value, line)?),
                "T_ref_C" => {
                    rec.t_ref = Some(value.parse().map_err(|_| Error::Parse {
                        line,
                        message: format!("'{value}' is not a number"),
                    })?)
                }
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown key '{other}'"),
                    })
                }
            }
        }
        if let Some(set) = rec.finish()? {
            sets.push(set);
        }
        if sets.is_empty() {
            return Err(Error::Parse {
                line: 0,
                message: "no axis records found".into(),
            });
        }
        Material::new(name, sets).map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })
    }
}

/// A nonlinear crystal: material, geometry, poling and operating temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct CrystalSpec {
    pub material: Material,
    pub length_mm: f64,
    /// `None` for an unpoled crystal.
    pub poling_period_um: Option<f64>,
    pub temperature_c: f64,
    /// Lumped extra phase (rad, over the crystal length) standing in for walk-off
    /// and compensator effects; enters the mismatch as `−phase/L`.
    pub phase_offset_rad: f64,
    pub signal_axis: Axis,
    pub idler_axis: Axis,
    pub pump_axis: Axis,
}

impl CrystalSpec {
    /// 5 mm type-II PPKTP with Λ = 33.25 µm at 27 °C, pump and signal on y,
    /// idler on z. The phase offset is left at zero.
    pub fn ppktp_type2() -> Self {
        CrystalSpec {
            material: Material::ktp(),
            length_mm: 5.0,
            poling_period_um: Some(33.25),
            temperature_c: 27.0,
            phase_offset_rad: 0.0,
            signal_axis: Axis::Y,
            idler_axis: Axis::Z,
            pump_axis: Axis::Y,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_mm > 0.0) {
            return Err(Error::arg("crystal length must be > 0"));
        }
        if let Some(p) = self.poling_period_um {
            if !(p > 0.0) {
                return Err(Error::arg("poling period must be > 0"));
            }
        }
        for axis in [self.signal_axis, self.idler_axis, self.pump_axis] {
            self.material.axis(axis)?;
        }
        Ok(())
    }

    pub fn length_um(&self) -> f64 {
        self.length_mm * 1e3
    }

    pub fn with_temperature(&self, temperature_c: f64) -> Self {
        CrystalSpec {
            temperature_c,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_set_returns_its_index() {
        let s = SellmeierSet::constant(Axis::Y, 1.8).unwrap();
        assert!((s.refractive_index(0.9, 20.0).unwrap() - 1.8).abs() < 1e-15);
        assert!((s.group_index(0.9, 55.0).unwrap() - 1.8).abs() < 1e-15);
    }

    #[test]
    fn thermo_term_vanishes_at_reference_temperature() {
        let ktp = Material::ktp();
        let z = ktp.axis(Axis::Z).unwrap();
        let l2 = 0.94185f64.powi(2);
        let expected = (4.59423 + 0.06206 / (l2 - 0.04763) + 110.80672 / (l2 - 86.12171)).sqrt();
        let n = z.refractive_index(0.94185, z.reference_temperature()).unwrap();
        assert_eq!(n, expected);
    }

    #[test]
    fn ktp_z_index_matches_hand_evaluation() {
        // 30-digit evaluation of the Kato-Takaoka z-axis formulas at 27 degC.
        let z = Material::ktp().axis(Axis::Z).unwrap().clone();
        let n = z.refractive_index(0.94185, 27.0).unwrap();
        assert!((n - 1.835_355_089_372_862).abs() < 1e-4);
        assert!((n - 1.835_355_089_372_862).abs() < 1e-12);
    }

    #[test]
    fn wavevector_is_two_pi_n_over_lambda() {
        let one = SellmeierSet::constant(Axis::X, 1.0).unwrap();
        let two = SellmeierSet::constant(Axis::X, 2.0).unwrap();
        assert!((one.wavevector(1.0, 20.0).unwrap() - 2.0 * PI).abs() < 1e-14);
        assert!((two.wavevector(1.0, 20.0).unwrap() - 4.0 * PI).abs() < 1e-14);
        let y = Material::ktp().axis(Axis::Y).unwrap().clone();
        let k = y.wavevector(0.94185, 27.0).unwrap();
        assert!((k - 11.672_218_643_206_75).abs() < 1e-10);
    }

    #[test]
    fn out_of_range_wavelength_is_named() {
        let y = Material::ktp().axis(Axis::Y).unwrap().clone();
        match y.refractive_index(2.5, 20.0) {
            Err(Error::OutOfRange { value, .. }) => assert_eq!(value, 2.5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(y.refractive_index(0.43, 20.0).is_ok());
        assert!(matches!(
            y.group_index(0.43, 20.0),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "axis = y\ncoeffs = [2.0]\nrange_um = [0.4, 1.0]\nT_ref_C = 20\nbogus = 1\n";
        assert!(matches!(
            text.parse::<Material>(),
            Err(Error::Parse { line: 5, .. })
        ));
        let missing = "axis = y\ncoeffs = [2.0]\n";
        assert!(matches!(
            missing.parse::<Material>(),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!("coeffs = [2.0]".parse::<Material>().is_err());
        assert!("".parse::<Material>().is_err());
    }

    #[test]
    fn sub_unity_index_is_rejected() {
        assert!(SellmeierSet::constant(Axis::X, 0.9).is_err());
        assert!(SellmeierSet::new(Axis::X, vec![2.0], vec![], vec![], (1.0, 0.5), 20.0).is_err());
    }

    #[test]
    fn bundled_material_has_all_axes() {
        let ktp = Material::ktp();
        assert_eq!(ktp.name, "KTP");
        assert_eq!(ktp.sets().len(), 3);
    }
}
