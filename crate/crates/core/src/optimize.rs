//! Scalar root finding and minimization.

use crate::error::{Error, Result};

/// Bisection to an absolute bracket width of `tol`.
pub fn bisect(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(Error::RootNotFound { lo: a, hi: b });
    }
    while b - a > tol {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// One evaluation recorded by [`golden_section`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldenStep {
    pub iteration: usize,
    pub x: f64,
    pub value: f64,
}

/// Golden-section minimization of a unimodal `f` on `[lo, hi]`, stopping once
/// the bracket is narrower than `tol`. Every evaluation lies inside the
/// bracket; the full evaluation trace is returned alongside the minimizer.
pub fn golden_section(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> (f64, Vec<GoldenStep>) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut trace = Vec::new();
    let mut eval = |x: f64, trace: &mut Vec<GoldenStep>| {
        let value = f(x);
        trace.push(GoldenStep {
            iteration: trace.len(),
            x,
            value,
        });
        value
    };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c, &mut trace);
    let mut fd = eval(d, &mut trace);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c, &mut trace);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d, &mut trace);
        }
    }
    let x = if fc <= fd { c } else { d };
    (x, trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-12).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn bisect_without_sign_change_fails() {
        assert!(matches!(
            bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-6),
            Err(Error::RootNotFound { .. })
        ));
    }

    #[test]
    fn golden_section_minimizes_parabola_inside_bracket() {
        let (x, trace) = golden_section(|x| (x - 0.3).powi(2), -1.0, 2.0, 1e-9);
        assert!((x - 0.3).abs() < 1e-8);
        assert!(trace.iter().all(|s| (-1.0..=2.0).contains(&s.x)));
    }
}
