//! Scaled monomials and L²-orthonormal polynomial bases.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::quadrature::QuadRule;

/// Number of polynomials of total degree ≤ `p` in `dim` variables.
pub fn dim_poly(dim: usize, p: usize) -> usize {
    match dim {
        1 => p + 1,
        2 => (p + 1) * (p + 2) / 2,
        3 => (p + 1) * (p + 2) * (p + 3) / 6,
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Exponents of the monomials of degree ≤ `p`, graded (all degree-q
/// monomials precede degree-(q+1) ones).
pub fn exponents(dim: usize, p: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::with_capacity(dim_poly(dim, p));
    for q in 0..=p {
        if dim == 2 {
            for a in (0..=q).rev() {
                out.push([a, q - a, 0]);
            }
        } else {
            for a in (0..=q).rev() {
                for b in (0..=(q - a)).rev() {
                    out.push([a, b, q - a - b]);
                }
            }
        }
    }
    out
}

/// Monomials `((x - c) / s)^α` of degree ≤ `degree`.
#[derive(Debug, Clone)]
pub struct ScaledMonomials {
    pub dim: usize,
    pub degree: usize,
    pub center: Point,
    pub scale: f64,
    pub exps: Vec<[usize; 3]>,
}

impl ScaledMonomials {
    pub fn new(dim: usize, degree: usize, center: Point, scale: f64) -> Self {
        assert!(degree <= 7, "monomial degree {degree} unsupported");
        Self { dim, degree, center, scale, exps: exponents(dim, degree) }
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    fn powers(&self, x: Point) -> [[f64; 8]; 3] {
        let y = geometry::scale(geometry::sub(x, self.center), 1.0 / self.scale);
        let mut pw = [[1.0; 8]; 3];
        for d in 0..self.dim {
            for j in 1..=self.degree.min(7) {
                pw[d][j] = pw[d][j - 1] * y[d];
            }
        }
        pw
    }

    pub fn eval(&self, x: Point, out: &mut [f64]) {
        let pw = self.powers(x);
        for (o, e) in out.iter_mut().zip(&self.exps) {
            *o = pw[0][e[0]] * pw[1][e[1]] * pw[2][e[2]];
        }
    }

    /// Gradients in physical coordinates, `out[i][d]`.
    pub fn grad(&self, x: Point, out: &mut [[f64; 3]]) {
        let pw = self.powers(x);
        let inv = 1.0 / self.scale;
        for (o, e) in out.iter_mut().zip(&self.exps) {
            for d in 0..3 {
                o[d] = 0.0;
            }
            for d in 0..self.dim {
                if e[d] == 0 {
                    continue;
                }
                let mut v = e[d] as f64 * inv;
                for dd in 0..self.dim {
                    v *= if dd == d { pw[dd][e[dd] - 1] } else { pw[dd][e[dd]] };
                }
                o[d] = v;
            }
        }
    }
}

/// L²(t)-orthonormal basis of `P^p(t)` expressed as `φ_i = Σ_j C_ij m_j`.
///
/// Obtained from the monomial Gram matrix by two Cholesky passes; the first
/// basis function is the normalized constant.
#[derive(Debug, Clone)]
pub struct OrthoBasis {
    pub monomials: ScaledMonomials,
    pub coeffs: DMatrix<f64>,
}

impl OrthoBasis {
    pub fn new(monomials: ScaledMonomials, rule: &QuadRule) -> Result<Self> {
        let n = monomials.len();
        let vals = monomial_values(&monomials, rule);
        let mut coeffs = DMatrix::<f64>::identity(n, n);
        for _ in 0..2 {
            let phi = &coeffs * &vals;
            let gram = weighted_gram(&phi, &rule.weights);
            let chol = gram.cholesky().ok_or_else(|| Error::Factorization("singular Gram matrix in bulk basis".into()))?;
            let linv = chol
                .l()
                .solve_lower_triangular(&DMatrix::identity(n, n))
                .ok_or_else(|| Error::Factorization("singular Cholesky factor in bulk basis".into()))?;
            coeffs = linv * coeffs;
        }
        Ok(Self { monomials, coeffs })
    }

    pub fn len(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.nrows() == 0
    }

    /// Values of all basis functions at `x`.
    pub fn eval(&self, x: Point) -> DVector<f64> {
        let mut m = vec![0.0; self.monomials.len()];
        self.monomials.eval(x, &mut m);
        &self.coeffs * DVector::from_vec(m)
    }

    /// Gradients of all basis functions at `x` as an `n × dim` matrix.
    pub fn grad(&self, x: Point) -> DMatrix<f64> {
        let n = self.monomials.len();
        let dim = self.monomials.dim;
        let mut g = vec![[0.0; 3]; n];
        self.monomials.grad(x, &mut g);
        let gm = DMatrix::from_fn(n, dim, |i, d| g[i][d]);
        &self.coeffs * gm
    }

    /// Basis values at every rule point, `n × npts`.
    pub fn values_at(&self, points: &[Point]) -> DMatrix<f64> {
        let n = self.monomials.len();
        let mut out = DMatrix::zeros(n, points.len());
        let mut m = vec![0.0; n];
        for (q, &p) in points.iter().enumerate() {
            self.monomials.eval(p, &mut m);
            out.set_column(q, &(&self.coeffs * DVector::from_column_slice(&m)));
        }
        out
    }
}

/// Monomial values at the rule points, `n × npts`.
pub fn monomial_values(monomials: &ScaledMonomials, rule: &QuadRule) -> DMatrix<f64> {
    let n = monomials.len();
    let mut vals = DMatrix::zeros(n, rule.len());
    let mut m = vec![0.0; n];
    for (q, &p) in rule.points.iter().enumerate() {
        monomials.eval(p, &mut m);
        for i in 0..n {
            vals[(i, q)] = m[i];
        }
    }
    vals
}

/// `Σ_q w_q v_i(x_q) v_j(x_q)` for the rows of `vals`.
pub fn weighted_gram(vals: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let mut scaled = vals.clone();
    for (q, &w) in weights.iter().enumerate() {
        scaled.column_mut(q).scale_mut(w);
    }
    let g = &scaled * vals.transpose();
    (&g + g.transpose()) * 0.5
}

/// `Σ_q w_q a_i(x_q) b_j(x_q)`.
pub fn weighted_cross(a: &DMatrix<f64>, b: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let mut scaled = a.clone();
    for (q, &w) in weights.iter().enumerate() {
        scaled.column_mut(q).scale_mut(w);
    }
    scaled * b.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::build_cartesian_base;
    use crate::quadrature::base_cells_rule;

    #[test]
    fn dimensions() {
        assert_eq!(exponents(2, 1).len(), 3);
        assert_eq!(exponents(2, 3).len(), 10);
        assert_eq!(exponents(3, 2).len(), 10);
        assert_eq!(exponents(3, 3).len(), dim_poly(3, 3));
        assert_eq!(exponents(2, 2)[0], [0, 0, 0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = ScaledMonomials::new(3, 3, [0.1, 0.2, 0.3], 0.7);
        let x = [0.4, -0.2, 0.9];
        let mut g = vec![[0.0; 3]; m.len()];
        m.grad(x, &mut g);
        let mut a = vec![0.0; m.len()];
        let mut b = vec![0.0; m.len()];
        for d in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[d] += 1e-6;
            xm[d] -= 1e-6;
            m.eval(xp, &mut a);
            m.eval(xm, &mut b);
            for i in 0..m.len() {
                let fd = (a[i] - b[i]) / 2e-6;
                assert!((fd - g[i][d]).abs() < 1e-7, "{i} {d}");
            }
        }
    }

    #[test]
    fn orthonormal_bulk_basis() {
        let base = build_cartesian_base(4, 2, &[1.0, 1.0]).unwrap();
        let rule = base_cells_rule(&base, &[0, 1, 4, 5], 8);
        let basis = OrthoBasis::new(ScaledMonomials::new(2, 3, [0.25, 0.25, 0.0], 0.5), &rule).unwrap();
        let v = basis.values_at(&rule.points);
        let g = weighted_gram(&v, &rule.weights);
        assert!((g - DMatrix::identity(10, 10)).amax() < 1e-12);
        // the first function is constant
        let c0 = basis.eval([0.1, 0.4, 0.0])[0];
        let c1 = basis.eval([0.3, 0.05, 0.0])[0];
        assert!((c0 - c1).abs() < 1e-13);
    }
}
