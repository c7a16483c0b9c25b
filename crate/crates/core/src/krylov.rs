//! Right-preconditioned flexible GMRES.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sparse::{axpy, dot, norm2};

#[derive(Debug, Clone, Copy)]
pub struct FgmresOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for FgmresOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500, restart: 200 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FgmresResult {
    pub iterations: usize,
    pub converged: bool,
    /// Relative residual estimates, starting with 1; the last entry is the
    /// true relative residual `‖b − Ax‖ / ‖b‖`.
    pub residuals: Vec<f64>,
}

/// Solve `A x = b` from a zero initial guess.
pub fn fgmres(
    apply_a: impl Fn(&[f64]) -> Vec<f64>,
    apply_m: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    opts: FgmresOptions,
) -> Result<(Vec<f64>, FgmresResult)> {
    if !(opts.tol > 0.0 && opts.tol < 1.0) {
        return Err(Error::InvalidParameter(format!("tolerance must lie in (0, 1), got {}", opts.tol)));
    }
    if opts.max_iter == 0 || opts.restart == 0 {
        return Err(Error::InvalidParameter("max_iter and restart must be positive".into()));
    }
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm2(b);
    let mut residuals = vec![1.0];
    if bnorm == 0.0 {
        return Ok((x, FgmresResult { iterations: 0, converged: true, residuals }));
    }
    let mut r = b.to_vec();
    let mut beta = bnorm;
    let mut total = 0;
    loop {
        let m = opts.restart;
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|a| a / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut steps = 0;
        let mut breakdown = false;
        for j in 0..m {
            let zj = apply_m(&v[j]);
            let mut w = apply_a(&zj);
            z.push(zj);
            for i in 0..=j {
                h[i][j] = dot(&w, &v[i]);
                axpy(-h[i][j], &v[i], &mut w);
            }
            let hn = norm2(&w);
            h[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let rho = h[j][j].hypot(h[j + 1][j]);
            if rho == 0.0 {
                breakdown = true;
                break;
            }
            cs[j] = h[j][j] / rho;
            sn[j] = h[j + 1][j] / rho;
            h[j][j] = rho;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            steps = j + 1;
            total += 1;
            let est = g[j + 1].abs() / bnorm;
            residuals.push(est);
            if est <= opts.tol || total >= opts.max_iter {
                break;
            }
            if hn <= 1e-14 * beta {
                breakdown = true;
                break;
            }
            v.push(w.iter().map(|a| a / hn).collect());
        }
        // back substitution
        let mut y = vec![0.0; steps];
        for i in (0..steps).rev() {
            let mut s = g[i];
            for k in i + 1..steps {
                s -= h[i][k] * y[k];
            }
            y[i] = s / h[i][i];
        }
        for (k, yk) in y.iter().enumerate() {
            axpy(*yk, &z[k], &mut x);
        }
        let ax = apply_a(&x);
        r = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        beta = norm2(&r);
        let rel = beta / bnorm;
        if let Some(last) = residuals.last_mut() {
            *last = rel;
        }
        if rel <= opts.tol {
            return Ok((x, FgmresResult { iterations: total, converged: true, residuals }));
        }
        if total >= opts.max_iter {
            return Ok((x, FgmresResult { iterations: total, converged: false, residuals }));
        }
        if breakdown && steps == 0 {
            return Err(Error::Breakdown { iterations: total });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_converges_in_one_iteration() {
        let b = vec![1.0, 2.0, 3.0];
        let (x, res) = fgmres(|v| v.to_vec(), |v| v.to_vec(), &b, FgmresOptions::default()).unwrap();
        assert_eq!(res.iterations, 1);
        assert!(res.converged);
        assert_eq!(x, b);
    }

    #[test]
    fn two_by_two_in_two_iterations() {
        let a = [[4.0, 1.0], [1.0, 3.0]];
        let mv = |v: &[f64]| vec![a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]];
        let (x, res) = fgmres(mv, |v| v.to_vec(), &[1.0, 2.0], FgmresOptions::default()).unwrap();
        assert!(res.iterations <= 2);
        let r = mv(&x);
        assert!((r[0] - 1.0).abs() < 1e-12 && (r[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rhs_and_bad_parameters() {
        let (x, res) = fgmres(|v| v.to_vec(), |v| v.to_vec(), &[0.0, 0.0], FgmresOptions::default()).unwrap();
        assert_eq!(res.iterations, 0);
        assert_eq!(x, vec![0.0, 0.0]);
        let bad = FgmresOptions { tol: 1.5, ..Default::default() };
        assert!(fgmres(|v| v.to_vec(), |v| v.to_vec(), &[1.0], bad).is_err());
    }

    #[test]
    fn restarts_reach_tolerance() {
        let n = 40;
        let mv = |v: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let mut s = 2.5 * v[i];
                    if i > 0 {
                        s -= v[i - 1];
                    }
                    if i + 1 < n {
                        s -= v[i + 1];
                    }
                    s
                })
                .collect()
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let opts = FgmresOptions { tol: 1e-10, max_iter: 400, restart: 5 };
        let (x, res) = fgmres(mv, |v| v.to_vec(), &b, opts).unwrap();
        assert!(res.converged);
        let r: Vec<f64> = mv(&x).iter().zip(&b).map(|(a, b)| a - b).collect();
        assert!(norm2(&r) <= 1e-10 * norm2(&b));
    }
}
