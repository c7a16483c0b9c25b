//! Interface polynomial spaces and their L²-orthonormal bases.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::mesh::MeshLevel;
use crate::poly::{dim_poly, ScaledMonomials};
use crate::quadrature::{face_rule, QuadRule};

/// Default relative rank threshold of the orthogonalization.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Generator set of the interface space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterfaceSpace {
    /// Traces of `P^k(ℝ^d)`, i.e. normal derivatives of `P^{k+1}` along one
    /// fixed direction. Coincides with the standard face space on flat
    /// interfaces and keeps a fixed dimension on bent ones.
    #[default]
    Ambient,
    /// `{1} ∪ {∇m·n : deg m ≤ k+1}` with the piecewise normal of each base
    /// face; bent interfaces pick up one extra direction per distinct normal.
    NormalGradients,
}

/// L²(F)-orthonormal basis `ψ_a = Σ_j C_aj g_j` over the generators `g_j`.
#[derive(Debug, Clone)]
pub struct InterfaceBasis {
    pub interface: usize,
    pub degree: usize,
    pub space: InterfaceSpace,
    pub monomials: ScaledMonomials,
    pub coeffs: DMatrix<f64>,
}

impl InterfaceBasis {
    pub fn dim(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn num_generators(&self) -> usize {
        self.coeffs.ncols()
    }

    fn generators(&self, x: Point, n: Point, out: &mut [f64]) {
        eval_generators(self.space, &self.monomials, x, n, out);
    }

    /// Basis values at `x` on a base face with interface-oriented normal `n`.
    pub fn eval(&self, x: Point, n: Point) -> DVector<f64> {
        let mut g = vec![0.0; self.num_generators()];
        self.generators(x, n, &mut g);
        &self.coeffs * DVector::from_vec(g)
    }

    /// Basis values at all points of an interface-oriented rule, `dim × npts`.
    pub fn values_at(&self, rule: &QuadRule) -> DMatrix<f64> {
        let gens = generator_values(self.space, &self.monomials, rule);
        &self.coeffs * gens
    }

    /// L² projection coefficients of a field sampled at the points of `rule`.
    pub fn project(&self, rule: &QuadRule, values: &[f64]) -> DVector<f64> {
        let phi = self.values_at(rule);
        let wv = DVector::from_iterator(values.len(), values.iter().zip(&rule.weights).map(|(v, w)| v * w));
        phi * wv
    }
}

fn eval_generators(space: InterfaceSpace, m: &ScaledMonomials, x: Point, n: Point, out: &mut [f64]) {
    match space {
        InterfaceSpace::Ambient => m.eval(x, out),
        InterfaceSpace::NormalGradients => {
            let mut g = vec![[0.0; 3]; m.len()];
            m.grad(x, &mut g);
            out[0] = 1.0;
            for i in 1..m.len() {
                // rescale by the diameter so generators stay O(1)
                out[i] = geometry::dot(g[i], n) * m.scale;
            }
        }
    }
}

fn generator_values(space: InterfaceSpace, m: &ScaledMonomials, rule: &QuadRule) -> DMatrix<f64> {
    let mut vals = DMatrix::zeros(m.len(), rule.len());
    let mut g = vec![0.0; m.len()];
    for q in 0..rule.len() {
        eval_generators(space, m, rule.points[q], rule.normals[q], &mut g);
        for (i, &v) in g.iter().enumerate() {
            vals[(i, q)] = v;
        }
    }
    vals
}

fn generator_monomials(space: InterfaceSpace, dim: usize, k: usize, center: Point, scale: f64) -> ScaledMonomials {
    let degree = match space {
        InterfaceSpace::Ambient => k,
        InterfaceSpace::NormalGradients => k + 1,
    };
    ScaledMonomials::new(dim, degree, center, scale)
}

/// Orthonormalize the generators of interface `iface` on `rule` by pivoted
/// modified Gram–Schmidt with one re-orthogonalization pass, dropping
/// directions with residual norm ≤ `tol` times the largest generator norm.
/// The constant generator is always taken first.
pub fn build_interface_basis(
    level: &MeshLevel,
    iface: usize,
    k: usize,
    space: InterfaceSpace,
    rule: &QuadRule,
    tol: f64,
) -> Result<InterfaceBasis> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("rank tolerance must be positive, got {tol}")));
    }
    if rule.is_empty() {
        return Err(Error::InterfaceSpace(format!("interface {iface} has no quadrature points")));
    }
    let f = &level.interfaces[iface];
    let monomials = generator_monomials(space, level.dim(), k, f.reference, f.diameter);
    let gens = generator_values(space, &monomials, rule);
    let ngen = gens.nrows();
    let w = &rule.weights;
    let inner = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).zip(w).map(|((x, y), w)| x * y * w).sum() };

    let mut work: Vec<Vec<f64>> = (0..ngen).map(|i| gens.row(i).iter().copied().collect()).collect();
    let mut coef: Vec<Vec<f64>> = (0..ngen).map(|i| (0..ngen).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let norms: Vec<f64> = work.iter().map(|v| inner(v, v).sqrt()).collect();
    let max_norm = norms.iter().copied().fold(0.0, f64::max);
    let mut active: Vec<bool> = vec![true; ngen];
    let mut q_vals: Vec<Vec<f64>> = Vec::new();
    let mut q_coef: Vec<Vec<f64>> = Vec::new();

    loop {
        let pick = if q_vals.is_empty() {
            Some(0)
        } else {
            (0..ngen)
                .filter(|&j| active[j])
                .map(|j| (j, inner(&work[j], &work[j]).sqrt()))
                .filter(|&(_, nrm)| nrm > tol * max_norm)
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
                .map(|(j, _)| j)
        };
        let Some(j) = pick else { break };
        active[j] = false;
        let mut v = work[j].clone();
        let mut c = coef[j].clone();
        // re-orthogonalize against the accepted vectors
        for (qv, qc) in q_vals.iter().zip(&q_coef) {
            let p = inner(&v, qv);
            v.iter_mut().zip(qv).for_each(|(a, b)| *a -= p * b);
            c.iter_mut().zip(qc).for_each(|(a, b)| *a -= p * b);
        }
        let nrm = inner(&v, &v).sqrt();
        if !(nrm > tol * max_norm) {
            continue;
        }
        v.iter_mut().for_each(|a| *a /= nrm);
        c.iter_mut().for_each(|a| *a /= nrm);
        for r in 0..ngen {
            if !active[r] {
                continue;
            }
            let p = inner(&work[r], &v);
            work[r].iter_mut().zip(&v).for_each(|(a, b)| *a -= p * b);
            coef[r].iter_mut().zip(&c).for_each(|(a, b)| *a -= p * b);
        }
        q_vals.push(v);
        q_coef.push(c);
        if q_vals.len() == ngen {
            break;
        }
    }
    let dim = q_coef.len();
    let coeffs = DMatrix::from_fn(dim, ngen, |a, j| q_coef[a][j]);
    Ok(InterfaceBasis { interface: iface, degree: k, space, monomials, coeffs })
}

/// Bases of every interface of a level (boundary ones included).
pub fn build_level_bases(level: &MeshLevel, k: usize, space: InterfaceSpace, quad_degree: usize) -> Result<Vec<InterfaceBasis>> {
    (0..level.interfaces.len())
        .into_par_iter()
        .map(|i| {
            let rule = face_rule(level, i, quad_degree);
            build_interface_basis(level, i, k, space, &rule, DEFAULT_RANK_TOL)
        })
        .collect()
}

/// Interface dimensions of a level and the resulting skeletal DOF count
/// (boundary interfaces carry no DOFs).
#[derive(Debug, Clone)]
pub struct DimensionReport {
    pub dims: Vec<usize>,
    pub total_interior: usize,
}

pub fn interface_dimension_report(level: &MeshLevel, bases: &[InterfaceBasis]) -> DimensionReport {
    let dims: Vec<usize> = bases.iter().map(|b| b.dim()).collect();
    let total_interior = level.interior_interfaces().map(|i| dims[i]).sum();
    DimensionReport { dims, total_interior }
}

/// Upper bound on the interface dimension: the generator count.
pub fn max_interface_dim(dim: usize, k: usize, space: InterfaceSpace) -> usize {
    match space {
        InterfaceSpace::Ambient => dim_poly(dim, k),
        InterfaceSpace::NormalGradients => dim_poly(dim, k + 1),
    }
}
