//! Levenberg–Marquardt least squares with a finite-difference Jacobian.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Relative cost decrease below which the iteration stops.
    pub ftol: f64,
    /// Relative parameter step below which the iteration stops.
    pub xtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 400,
            ftol: 1e-13,
            xtol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub params: Vec<f64>,
    /// `(JᵀJ)⁻¹ · s²` with `s²` the residual variance per degree of freedom.
    pub covariance: DMatrix<f64>,
    /// Sum of squared residuals.
    pub ssr: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LmResult {
    pub fn stderr(&self, i: usize) -> f64 {
        self.covariance[(i, i)].max(0.0).sqrt()
    }
}

fn ssr_of(r: &[f64]) -> f64 {
    let s: f64 = r.iter().map(|v| v * v).sum();
    if s.is_finite() {
        s
    } else {
        f64::INFINITY
    }
}

fn jacobian<F>(residuals: &F, p: &[f64], r0: &[f64], m: usize) -> DMatrix<f64>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = p.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut q = p.to_vec();
    let mut r1 = vec![0.0; m];
    for j in 0..n {
        let h = 1e-7 * p[j].abs().max(1e-7);
        q[j] = p[j] + h;
        residuals(&q, &mut r1);
        for i in 0..m {
            jac[(i, j)] = (r1[i] - r0[i]) / h;
        }
        q[j] = p[j];
    }
    jac
}

/// Minimizes `Σ rᵢ(p)²` where `residuals(p, r)` fills `r` (length `m`).
/// Non-finite residuals count as an infinitely bad step.
pub fn levenberg_marquardt<F>(residuals: F, x0: &[f64], m: usize, opts: LmOptions) -> Result<LmResult>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = x0.len();
    if m < n {
        return Err(Error::domain(format!("{m} residuals cannot determine {n} parameters")));
    }
    let mut p = x0.to_vec();
    let mut r = vec![0.0; m];
    residuals(&p, &mut r);
    let mut cost = ssr_of(&r);
    if !cost.is_finite() {
        return Err(Error::Fit {
            reason: "initial point gives non-finite residuals".into(),
            restarts: 0,
            last_cost: cost,
        });
    }
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = vec![0.0; n];
    let mut rt = vec![0.0; m];
    while iterations < opts.max_iter {
        iterations += 1;
        let jac = jacobian(&residuals, &p, &r, m);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * DVector::from_column_slice(&r);
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-30);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            for i in 0..n {
                trial[i] = p[i] + step[i];
            }
            residuals(&trial, &mut rt);
            let c = ssr_of(&rt);
            if c < cost {
                let rel_step = step
                    .iter()
                    .zip(&p)
                    .map(|(s, v)| s.abs() / v.abs().max(1e-12))
                    .fold(0.0, f64::max);
                let rel_cost = (cost - c) / cost.max(f64::MIN_POSITIVE);
                p.copy_from_slice(&trial);
                r.copy_from_slice(&rt);
                cost = c;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel_cost < opts.ftol || rel_step < opts.xtol {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !improved {
            // No downhill step at any damping: at a (local) minimum.
            converged = true;
            break;
        }
        if converged || cost == 0.0 {
            converged = true;
            break;
        }
    }
    let jac = jacobian(&residuals, &p, &r, m);
    let jtj = jac.transpose() * &jac;
    let dof = (m - n).max(1) as f64;
    let s2 = cost / dof;
    let covariance = jtj
        .clone()
        .try_inverse()
        .or_else(|| jtj.pseudo_inverse(1e-14).ok())
        .unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN))
        * s2;
    Ok(LmResult {
        params: p,
        covariance,
        ssr: cost,
        iterations,
        converged,
    })
}
