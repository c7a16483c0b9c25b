//! Prolongation operators between consecutive levels and their transposed
//! application (restriction).

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hho::CondensedLevel;
use crate::hierarchy::Lineage;
use crate::mesh::MeshLevel;
use crate::sparse::CsrMatrix;

/// How coarse skeletal data is lifted into coarse cells before projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransferKind {
    /// `I^U`: the bulk of the static condensation inverse `U_{ℓ−1} λ`.
    #[serde(rename = "iu")]
    Condensation,
    /// `I^R`: the reconstruction `R^{k+1}(U_{ℓ−1} λ, λ)`.
    #[serde(rename = "ir")]
    Reconstruction,
}

impl TransferKind {
    pub const ALL: [TransferKind; 2] = [TransferKind::Reconstruction, TransferKind::Condensation];

    pub fn label(self) -> &'static str {
        match self {
            TransferKind::Condensation => "IU",
            TransferKind::Reconstruction => "IR",
        }
    }
}

impl fmt::Display for TransferKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TransferKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iu" | "u" | "condensation" => Ok(TransferKind::Condensation),
            "ir" | "r" | "reconstruction" => Ok(TransferKind::Reconstruction),
            _ => Err(Error::InvalidParameter(format!("unknown prolongation '{s}'"))),
        }
    }
}

/// Fine × coarse prolongation matrix.
#[derive(Debug, Clone)]
pub struct TransferOperator {
    pub kind: TransferKind,
    pub matrix: CsrMatrix,
}

impl TransferOperator {
    pub fn prolong(&self, coarse: &[f64]) -> Vec<f64> {
        self.matrix.apply(coarse)
    }

    /// Transposed application on a fine residual.
    pub fn restrict(&self, fine: &[f64]) -> Result<Vec<f64>> {
        if fine.len() != self.matrix.nrows {
            return Err(Error::DimensionMismatch { expected: self.matrix.nrows, got: fine.len() });
        }
        Ok(self.matrix.apply_transpose(fine))
    }
}

/// Coarse cells contributing to a fine interface with their averaging weights
/// `α_{FT} = |T| / (|T| + |T'|)`.
pub fn averaging_weights(coarse: &MeshLevel, lineage: Lineage) -> Vec<(usize, f64)> {
    match lineage {
        Lineage::Interior { cell } => vec![(cell, 1.0)],
        Lineage::OnInterface { interface } => {
            let f = &coarse.interfaces[interface];
            match f.neighbor {
                None => vec![(f.owner, 1.0)],
                Some(nb) => {
                    let (a, b) = (coarse.cells[f.owner].measure, coarse.cells[nb].measure);
                    vec![(f.owner, a / (a + b)), (nb, b / (a + b))]
                }
            }
        }
    }
}

/// `(ψ_a, φ_j^T)_f`: fine interface basis against coarse bulk basis.
fn trace_projection(fine: &CondensedLevel, f: usize, coarse: &CondensedLevel, t: usize) -> DMatrix<f64> {
    let rule = &fine.spaces.face_rules[f];
    let psi = &fine.spaces.face_values[f];
    let phi = coarse.cells[t].bulk.values_at(&rule.points);
    crate::poly::weighted_cross(psi, &phi, &rule.weights)
}

/// Weighted L² projection of per-coarse-cell bulk polynomials onto the fine
/// interior interfaces.
pub fn averaging_projector(
    fine_mesh: &MeshLevel,
    fine: &CondensedLevel,
    coarse_mesh: &MeshLevel,
    coarse: &CondensedLevel,
    lineage: &[Lineage],
    coarse_bulk: &[DVector<f64>],
) -> Result<Vec<f64>> {
    if lineage.len() != fine_mesh.interfaces.len() {
        return Err(Error::Mesh("missing interface lineage".into()));
    }
    let mut out = vec![0.0; fine.ndofs()];
    for f in 0..fine_mesh.interfaces.len() {
        let Some(range) = fine.spaces.dofs(f) else { continue };
        let mut coef = DVector::zeros(range.len());
        for (t, w) in averaging_weights(coarse_mesh, lineage[f]) {
            coef += w * trace_projection(fine, f, coarse, t) * &coarse_bulk[t];
        }
        for (a, g) in range.enumerate() {
            out[g] = coef[a];
        }
    }
    Ok(out)
}

/// Assemble `I^U` or `I^R` from `coarse` to `fine`.
pub fn build_prolongation(
    fine_mesh: &MeshLevel,
    fine: &CondensedLevel,
    coarse_mesh: &MeshLevel,
    coarse: &CondensedLevel,
    lineage: &[Lineage],
    kind: TransferKind,
) -> Result<TransferOperator> {
    if lineage.len() != fine_mesh.interfaces.len() {
        return Err(Error::Mesh("missing interface lineage".into()));
    }
    let interior: Vec<usize> = fine_mesh.interior_interfaces().collect();
    let blocks: Vec<(usize, Vec<usize>, DMatrix<f64>)> = interior
        .par_iter()
        .map(|&f| {
            let range = fine.spaces.dofs(f).expect("interior interface");
            let contributions: Vec<(usize, DMatrix<f64>)> = averaging_weights(coarse_mesh, lineage[f])
                .into_iter()
                .map(|(t, w)| {
                    let cell = &coarse.cells[t];
                    let lift = match kind {
                        TransferKind::Condensation => &cell.lift,
                        TransferKind::Reconstruction => &cell.recon_lift,
                    };
                    (t, w * trace_projection(fine, f, coarse, t) * lift)
                })
                .collect();
            let mut cols: Vec<usize> = contributions.iter().flat_map(|(t, _)| coarse.cells[*t].dofs.iter().copied()).collect();
            cols.sort_unstable();
            cols.dedup();
            let mut block = DMatrix::zeros(range.len(), cols.len());
            for (t, m) in &contributions {
                for (j, &g) in coarse.cells[*t].dofs.iter().enumerate() {
                    let c = cols.binary_search(&g).unwrap();
                    for a in 0..range.len() {
                        block[(a, c)] += m[(a, j)];
                    }
                }
            }
            (range.start, cols, block)
        })
        .collect();
    let mut rows = vec![Vec::new(); fine.ndofs()];
    for (start, cols, block) in &blocks {
        for a in 0..block.nrows() {
            rows[start + a] = cols.clone();
        }
    }
    let mut matrix = CsrMatrix::from_pattern(coarse.ndofs(), &rows);
    for (start, cols, block) in blocks {
        for a in 0..block.nrows() {
            let p0 = matrix.indptr[start + a];
            for c in 0..cols.len() {
                matrix.data[p0 + c] = block[(a, c)];
            }
        }
    }
    Ok(TransferOperator { kind, matrix })
}

/// Estimate of the prolongation stability constant
/// `max sqrt(a_ℓ(Iλ, Iλ) / a_{ℓ−1}(λ, λ))` over random coarse vectors.
pub fn prolongation_stability_probe(
    fine: &CondensedLevel,
    coarse: &CondensedLevel,
    op: &TransferOperator,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let lambda: Vec<f64> = (0..coarse.ndofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let num = fine.energy(&op.prolong(&lambda));
        let den = coarse.energy(&lambda);
        if den > 0.0 {
            best = best.max((num / den).sqrt());
        }
    }
    best
}
