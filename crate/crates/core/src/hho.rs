//! Mixed-order HHO discretization on one level: local reconstruction and
//! stabilization, static condensation and the assembled skeletal system.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::interface::{build_level_bases, InterfaceBasis, InterfaceSpace};
use crate::mesh::MeshLevel;
use crate::poly::{weighted_cross, OrthoBasis, ScaledMonomials};
use crate::quadrature::{cell_rule, default_degree, face_rule, QuadRule};
use crate::sparse::CsrMatrix;

/// Right-hand side callback.
pub type Source<'a> = &'a (dyn Fn(Point) -> f64 + Sync);

/// Interface bases, quadrature and skeletal DOF layout of one level.
#[derive(Debug, Clone)]
pub struct LevelSpaces {
    pub k: usize,
    pub space: InterfaceSpace,
    pub quad_degree: usize,
    pub bases: Vec<InterfaceBasis>,
    pub face_rules: Vec<QuadRule>,
    /// Basis values at the face rule points, `dim(F) × npts`.
    pub face_values: Vec<DMatrix<f64>>,
    /// First skeletal DOF of each interior interface.
    pub dof_offset: Vec<Option<usize>>,
    pub ndofs: usize,
}

impl LevelSpaces {
    pub fn new(level: &MeshLevel, k: usize, space: InterfaceSpace) -> Result<Self> {
        let quad_degree = default_degree(k);
        let bases = build_level_bases(level, k, space, quad_degree)?;
        let face_rules: Vec<QuadRule> = (0..level.interfaces.len()).into_par_iter().map(|i| face_rule(level, i, quad_degree)).collect();
        let face_values = bases.par_iter().zip(&face_rules).map(|(b, r)| b.values_at(r)).collect();
        let mut dof_offset = vec![None; level.interfaces.len()];
        let mut ndofs = 0;
        for (i, f) in level.interfaces.iter().enumerate() {
            if !f.is_boundary() {
                dof_offset[i] = Some(ndofs);
                ndofs += bases[i].dim();
            }
        }
        Ok(Self { k, space, quad_degree, bases, face_rules, face_values, dof_offset, ndofs })
    }

    /// Skeletal DOF range of an interior interface.
    pub fn dofs(&self, iface: usize) -> Option<std::ops::Range<usize>> {
        self.dof_offset[iface].map(|o| o..o + self.bases[iface].dim())
    }
}

/// Full local operators of one cell, boundary interfaces included.
///
/// Local unknowns are ordered bulk first, then the incident interfaces in the
/// order of `interfaces`, each with its basis dimension.
#[derive(Debug, Clone)]
pub struct LocalOperators {
    pub bulk: OrthoBasis,
    pub interfaces: Vec<usize>,
    pub face_offsets: Vec<usize>,
    pub n_bulk: usize,
    pub n_face: usize,
    pub stiffness: DMatrix<f64>,
    /// `n_bulk × (n_bulk + n_face)` map to the coefficients of `R_t`.
    pub reconstruction: DMatrix<f64>,
    pub stabilization: DMatrix<f64>,
    pub matrix: DMatrix<f64>,
    /// `(ψ_a, φ_j)_F` for every incident interface.
    pub face_projections: Vec<DMatrix<f64>>,
    pub cell_rule: QuadRule,
}

impl LocalOperators {
    pub fn size(&self) -> usize {
        self.n_bulk + self.n_face
    }
}

/// Bulk basis values and gradient components at a set of points.
fn bulk_tables(bulk: &OrthoBasis, points: &[Point]) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let m = &bulk.monomials;
    let (nm, dim, np) = (m.len(), m.dim, points.len());
    let mut vals = DMatrix::zeros(nm, np);
    let mut grads = vec![DMatrix::zeros(nm, np); dim];
    let mut v = vec![0.0; nm];
    let mut g = vec![[0.0; 3]; nm];
    for (q, &p) in points.iter().enumerate() {
        m.eval(p, &mut v);
        m.grad(p, &mut g);
        for i in 0..nm {
            vals[(i, q)] = v[i];
            for d in 0..dim {
                grads[d][(i, q)] = g[i][d];
            }
        }
    }
    let vals = &bulk.coeffs * vals;
    let grads = grads.into_iter().map(|gd| &bulk.coeffs * gd).collect();
    (vals, grads)
}

/// Values of the bulk basis at `points`, `n_bulk × npts`.
pub fn bulk_values(bulk: &OrthoBasis, points: &[Point]) -> DMatrix<f64> {
    bulk.values_at(points)
}

pub fn local_operators(level: &MeshLevel, spaces: &LevelSpaces, t: usize) -> Result<LocalOperators> {
    let cell = &level.cells[t];
    let dim = level.dim();
    let k = spaces.k;
    let rule = cell_rule(level, t, spaces.quad_degree);
    let bulk = OrthoBasis::new(ScaledMonomials::new(dim, k + 1, cell.barycenter, cell.diameter), &rule)?;
    let nb = bulk.len();

    let (_, grads) = bulk_tables(&bulk, &rule.points);
    let mut stiffness = DMatrix::zeros(nb, nb);
    for g in &grads {
        stiffness += weighted_cross(g, g, &rule.weights);
    }
    stiffness = (&stiffness + stiffness.transpose()) * 0.5;

    let interfaces = cell.interfaces.clone();
    let mut face_offsets = Vec::with_capacity(interfaces.len());
    let mut nf = 0;
    for &f in &interfaces {
        face_offsets.push(nf);
        nf += spaces.bases[f].dim();
    }
    let n = nb + nf;

    let mut rhs = DMatrix::zeros(nb, n);
    rhs.view_mut((0, 0), (nb, nb)).copy_from(&stiffness);
    let mut face_projections = Vec::with_capacity(interfaces.len());
    for (li, &f) in interfaces.iter().enumerate() {
        let fr = &spaces.face_rules[f];
        let psi = &spaces.face_values[f];
        let sign = level.interfaces[f].orientation_for(t);
        let (phi, g) = bulk_tables(&bulk, &fr.points);
        let mut dn = DMatrix::zeros(nb, fr.len());
        for q in 0..fr.len() {
            let nrm = fr.normals[q];
            for i in 0..nb {
                let mut s = 0.0;
                for d in 0..dim {
                    s += g[d][(i, q)] * nrm[d];
                }
                dn[(i, q)] = sign * s;
            }
        }
        let dn_phi = weighted_cross(&dn, &phi, &fr.weights);
        let dn_psi = weighted_cross(&dn, psi, &fr.weights);
        let mut bulk_block = rhs.view_mut((0, 0), (nb, nb));
        bulk_block -= dn_phi;
        let mut face_block = rhs.view_mut((0, nb + face_offsets[li]), (nb, psi.nrows()));
        face_block += dn_psi;
        face_projections.push(weighted_cross(psi, &phi, &fr.weights));
    }

    // gradient part on the zero-mean functions, mean fixed by the bulk unknown
    let k22 = stiffness.view((1, 1), (nb - 1, nb - 1)).into_owned();
    let chol = k22.cholesky().ok_or_else(|| Error::Factorization(format!("reconstruction stiffness of cell {t} is singular")))?;
    let b2 = rhs.rows(1, nb - 1).into_owned();
    let r2 = chol.solve(&b2);
    let mut reconstruction = DMatrix::zeros(nb, n);
    reconstruction[(0, 0)] = 1.0;
    reconstruction.rows_mut(1, nb - 1).copy_from(&r2);
    let consistency = b2.transpose() * &r2;

    let mut stabilization = DMatrix::zeros(n, n);
    let inv_h = 1.0 / cell.diameter;
    for (li, &f) in interfaces.iter().enumerate() {
        let df = spaces.bases[f].dim();
        let mut dmat = DMatrix::zeros(df, n);
        dmat.view_mut((0, 0), (df, nb)).copy_from(&(-&face_projections[li]));
        for a in 0..df {
            dmat[(a, nb + face_offsets[li] + a)] = 1.0;
        }
        stabilization += inv_h * dmat.transpose() * dmat;
    }
    let matrix = consistency + &stabilization;
    let matrix = (&matrix + matrix.transpose()) * 0.5;

    Ok(LocalOperators {
        bulk,
        interfaces,
        face_offsets,
        n_bulk: nb,
        n_face: nf,
        stiffness,
        reconstruction,
        stabilization,
        matrix,
        face_projections,
        cell_rule: rule,
    })
}

/// Condensation data of one cell, restricted to its interior-interface DOFs.
#[derive(Debug, Clone)]
pub struct CellCondensation {
    pub bulk: OrthoBasis,
    /// Global skeletal DOFs of the local columns.
    pub dofs: Vec<usize>,
    /// `U_t = −A_TT⁻¹ A_TF`.
    pub lift: DMatrix<f64>,
    /// `R_t (U_t λ, λ)` as a map from skeletal DOFs to bulk coefficients.
    pub recon_lift: DMatrix<f64>,
    /// `A_TT⁻¹ b_T`, the bulk response to the source with zero skeleton.
    pub dual: DVector<f64>,
    /// `U_tᵀ b_T`.
    pub load: DVector<f64>,
    pub schur: DMatrix<f64>,
}

/// Statically condense one cell.
pub fn condense_cell(level: &MeshLevel, spaces: &LevelSpaces, t: usize, source: Source<'_>) -> Result<(LocalOperators, CellCondensation)> {
    let ops = local_operators(level, spaces, t)?;
    let nb = ops.n_bulk;
    let mut keep = Vec::new();
    let mut dofs = Vec::new();
    for (li, &f) in ops.interfaces.iter().enumerate() {
        if let Some(range) = spaces.dofs(f) {
            for (a, g) in range.enumerate() {
                keep.push(nb + ops.face_offsets[li] + a);
                dofs.push(g);
            }
        }
    }
    let ni = keep.len();
    let att = ops.matrix.view((0, 0), (nb, nb)).into_owned();
    let chol = att.cholesky().ok_or_else(|| Error::Factorization(format!("cell block of cell {t} is not positive definite")))?;
    let atf = DMatrix::from_fn(nb, ni, |i, j| ops.matrix[(i, keep[j])]);
    let aff = DMatrix::from_fn(ni, ni, |i, j| ops.matrix[(keep[i], keep[j])]);
    let lift = -chol.solve(&atf);
    let schur = &aff + atf.transpose() * &lift;
    let schur = (&schur + schur.transpose()) * 0.5;

    let phi = ops.bulk.values_at(&ops.cell_rule.points);
    let fvals: Vec<f64> = ops.cell_rule.points.iter().zip(&ops.cell_rule.weights).map(|(&p, &w)| w * source(p)).collect();
    let bt = phi * DVector::from_vec(fvals);
    let dual = chol.solve(&bt);
    let load = lift.transpose() * &bt;

    let rb = ops.reconstruction.view((0, 0), (nb, nb));
    let rf = DMatrix::from_fn(nb, ni, |i, j| ops.reconstruction[(i, keep[j])]);
    let recon_lift = rb * &lift + rf;

    let bulk = ops.bulk.clone();
    Ok((ops, CellCondensation { bulk, dofs, lift, recon_lift, dual, load, schur }))
}

/// Assembled skeletal system of one level.
#[derive(Debug, Clone)]
pub struct CondensedLevel {
    pub spaces: LevelSpaces,
    pub cells: Vec<CellCondensation>,
    pub matrix: Arc<CsrMatrix>,
    pub rhs: Vec<f64>,
}

/// Sparsity pattern coupling the DOFs of cells sharing an interface.
fn skeletal_pattern(level: &MeshLevel, spaces: &LevelSpaces, cells: &[CellCondensation]) -> CsrMatrix {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); spaces.ndofs];
    for (i, f) in level.interfaces.iter().enumerate() {
        let Some(range) = spaces.dofs(i) else { continue };
        let mut cols: Vec<usize> = cells[f.owner].dofs.clone();
        if let Some(nb) = f.neighbor {
            cols.extend_from_slice(&cells[nb].dofs);
        }
        cols.sort_unstable();
        cols.dedup();
        for r in range {
            rows[r] = cols.clone();
        }
    }
    CsrMatrix::from_pattern(spaces.ndofs, &rows)
}

/// Condense every cell and assemble `A_ℓ` and `b_ℓ`.
pub fn assemble_level(level: &MeshLevel, k: usize, space: InterfaceSpace, source: Source<'_>) -> Result<CondensedLevel> {
    let spaces = LevelSpaces::new(level, k, space)?;
    let cells: Vec<CellCondensation> =
        (0..level.num_cells()).into_par_iter().map(|t| condense_cell(level, &spaces, t, source).map(|(_, c)| c)).collect::<Result<_>>()?;
    let mut matrix = skeletal_pattern(level, &spaces, &cells);
    let mut rhs = vec![0.0; spaces.ndofs];
    for c in &cells {
        for (a, &ga) in c.dofs.iter().enumerate() {
            rhs[ga] += c.load[a];
            for (b, &gb) in c.dofs.iter().enumerate() {
                matrix.add(ga, gb, c.schur[(a, b)]);
            }
        }
    }
    let cells = cells
        .into_iter()
        .map(|mut c| {
            c.schur = DMatrix::zeros(0, 0);
            c
        })
        .collect();
    Ok(CondensedLevel { spaces, cells, matrix: Arc::new(matrix), rhs })
}

impl CondensedLevel {
    pub fn ndofs(&self) -> usize {
        self.spaces.ndofs
    }

    fn gather(&self, c: &CellCondensation, lambda: &[f64]) -> DVector<f64> {
        DVector::from_iterator(c.dofs.len(), c.dofs.iter().map(|&g| lambda[g]))
    }

    /// Bulk coefficients `U_t λ + A_TT⁻¹ b_T` of every cell.
    pub fn recover_bulk(&self, lambda: &[f64]) -> Vec<DVector<f64>> {
        self.cells.iter().map(|c| &c.lift * self.gather(c, lambda) + &c.dual).collect()
    }

    /// Bulk coefficients `U_t λ` (no source contribution).
    pub fn lift(&self, lambda: &[f64]) -> Vec<DVector<f64>> {
        self.cells.iter().map(|c| &c.lift * self.gather(c, lambda)).collect()
    }

    /// Skeleton inner product matrix `Σ_t U_tᵀ U_t` (the bulk bases are
    /// orthonormal).
    pub fn skeleton_mass(&self) -> CsrMatrix {
        let mut m = (*self.matrix).clone();
        m.data.iter_mut().for_each(|v| *v = 0.0);
        for c in &self.cells {
            let g = c.lift.transpose() * &c.lift;
            for (a, &ga) in c.dofs.iter().enumerate() {
                for (b, &gb) in c.dofs.iter().enumerate() {
                    m.add(ga, gb, g[(a, b)]);
                }
            }
        }
        m
    }

    /// `a_ℓ(λ, λ)`.
    pub fn energy(&self, lambda: &[f64]) -> f64 {
        crate::sparse::dot(&self.matrix.apply(lambda), lambda)
    }

    /// L²(Ω) error of per-cell bulk polynomials against `exact`.
    pub fn l2_error(&self, level: &MeshLevel, bulk: &[DVector<f64>], exact: Source<'_>) -> f64 {
        let degree = self.spaces.quad_degree + 2;
        (0..level.num_cells())
            .into_par_iter()
            .map(|t| {
                let rule = cell_rule(level, t, degree);
                let phi = self.cells[t].bulk.values_at(&rule.points);
                let uh = phi.transpose() * &bulk[t];
                rule.points.iter().zip(&rule.weights).enumerate().map(|(q, (&p, &w))| w * (uh[q] - exact(p)).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }
}
