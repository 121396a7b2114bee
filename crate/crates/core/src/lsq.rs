//! Damped Gauss-Newton (Levenberg-Marquardt) least squares with analytic
//! Jacobians, shared by the temporal and scattering-scan fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Weighted residuals `(model − data)/σ` and their Jacobian at a parameter point.
pub type Evaluation = (DVector<f64>, DMatrix<f64>);

#[derive(Debug, Clone)]
pub struct LmResult {
    pub params: Vec<f64>,
    /// `(JᵀJ)⁻¹` at the solution, unscaled.
    pub covariance: DMatrix<f64>,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
}

impl LmResult {
    pub fn reduced_chi2(&self) -> f64 {
        if self.dof == 0 {
            f64::NAN
        } else {
            self.chi2 / self.dof as f64
        }
    }

    /// Standard error of parameter `i`; `scale_by_chi2` rescales by the reduced
    /// chi-square (use when the per-point σ are not known in absolute terms).
    pub fn stderr(&self, i: usize, scale_by_chi2: bool) -> f64 {
        let var = self.covariance[(i, i)];
        let s = if scale_by_chi2 { self.reduced_chi2() } else { 1.0 };
        (var * s).max(0.0).sqrt()
    }
}

/// Minimizes `|r(p)|²`. `project` maps a trial point back into the feasible
/// set (e.g. clamps a lifetime to be positive).
pub fn levenberg_marquardt(
    eval: impl Fn(&[f64]) -> Evaluation,
    p0: &[f64],
    project: impl Fn(&mut [f64]),
    max_iter: usize,
) -> Result<LmResult> {
    let n_par = p0.len();
    let mut p = p0.to_vec();
    project(&mut p);
    let (mut r, mut j) = eval(&p);
    if r.len() < n_par {
        return Err(Error::Fit(format!(
            "{} data points cannot constrain {n_par} parameters",
            r.len()
        )));
    }
    let mut chi2 = r.norm_squared();
    if !chi2.is_finite() {
        return Err(Error::Fit("non-finite residuals at the starting point".into()));
    }
    let mut lambda = 1e-3;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let jtj = j.transpose() * &j;
        let grad = j.transpose() * &r;
        let mut improved = false;
        let mut converged = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for k in 0..n_par {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&grad));
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            project(&mut trial);
            let (rt, jt) = eval(&trial);
            let chi2_t = rt.norm_squared();
            if chi2_t.is_finite() && chi2_t <= chi2 {
                let rel_step = step
                    .iter()
                    .zip(&p)
                    .map(|(s, v)| s.abs() / v.abs().max(1e-12))
                    .fold(0.0, f64::max);
                converged = chi2 - chi2_t <= 1e-15 * chi2.max(1e-300) || rel_step < 1e-13;
                p = trial;
                r = rt;
                j = jt;
                chi2 = chi2_t;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 4.0;
        }
        if !improved || converged {
            break;
        }
    }
    let jtj = j.transpose() * &j;
    let covariance = jtj
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Fit("singular normal matrix at the solution".into()))?;
    Ok(LmResult {
        params: p,
        covariance,
        chi2,
        dof: r.len() - n_par,
        iterations,
    })
}
