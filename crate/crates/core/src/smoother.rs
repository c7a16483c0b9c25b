//! Star-patch additive subspace-correction smoothers.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hho::CondensedLevel;
use crate::mesh::MeshLevel;
use crate::sparse::{dot, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PatchKind {
    /// One patch per interior interface.
    #[serde(rename = "fp")]
    FaceStar,
    /// All interfaces touching a vertex.
    #[serde(rename = "vp")]
    VertexStar,
    /// All interfaces touching a coarse edge (3D).
    #[serde(rename = "ep")]
    EdgeStar,
}

impl PatchKind {
    pub fn label(self) -> &'static str {
        match self {
            PatchKind::FaceStar => "FP",
            PatchKind::VertexStar => "VP",
            PatchKind::EdgeStar => "EP",
        }
    }
}

impl fmt::Display for PatchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PatchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fp" | "face" | "face-star" => Ok(PatchKind::FaceStar),
            "vp" | "vertex" | "vertex-star" => Ok(PatchKind::VertexStar),
            "ep" | "edge" | "edge-star" => Ok(PatchKind::EdgeStar),
            _ => Err(Error::InvalidParameter(format!("unknown smoother '{s}'"))),
        }
    }
}

/// Patches of skeletal DOFs with explicit inverses of their principal
/// submatrices, stored contiguously.
#[derive(Debug, Clone)]
pub struct PatchDecomposition {
    pub kind: PatchKind,
    pub patches: Vec<Vec<usize>>,
    inverse_offsets: Vec<usize>,
    inverses: Vec<f64>,
    pub overlap: usize,
    ndofs: usize,
}

/// DOF index sets of the patches of a level.
pub fn patch_index_sets(mesh: &MeshLevel, level: &CondensedLevel, kind: PatchKind) -> Result<Vec<Vec<usize>>> {
    let spaces = &level.spaces;
    let collect = |ifaces: &[usize]| -> Vec<usize> {
        let mut idx: Vec<usize> = ifaces.iter().filter_map(|&f| spaces.dofs(f)).flatten().collect();
        idx.sort_unstable();
        idx.dedup();
        idx
    };
    let sets: Vec<Vec<usize>> = match kind {
        PatchKind::FaceStar => mesh.interior_interfaces().map(|f| collect(&[f])).collect(),
        PatchKind::VertexStar => mesh.vertex_interfaces.iter().map(|ifs| collect(ifs)).collect(),
        PatchKind::EdgeStar => {
            if mesh.dim() != 3 {
                return Err(Error::Smoother("edge-star patches need a 3D mesh".into()));
            }
            mesh.edges.iter().map(|e| collect(&e.interfaces)).collect()
        }
    };
    Ok(sets.into_iter().filter(|s| !s.is_empty()).collect())
}

impl PatchDecomposition {
    pub fn build(mesh: &MeshLevel, level: &CondensedLevel, kind: PatchKind) -> Result<Self> {
        let patches = patch_index_sets(mesh, level, kind)?;
        Self::from_patches(&level.matrix, kind, patches)
    }

    pub fn from_patches(matrix: &CsrMatrix, kind: PatchKind, patches: Vec<Vec<usize>>) -> Result<Self> {
        let ndofs = matrix.nrows;
        let mut count = vec![0usize; ndofs];
        for p in &patches {
            for &i in p {
                count[i] += 1;
            }
        }
        if let Some(i) = count.iter().position(|&c| c == 0) {
            return Err(Error::Smoother(format!("skeletal DOF {i} is not covered by any {kind} patch")));
        }
        let overlap = count.iter().copied().max().unwrap_or(0);
        let mut inverse_offsets = Vec::with_capacity(patches.len() + 1);
        let mut inverses = Vec::new();
        inverse_offsets.push(0);
        for (pi, p) in patches.iter().enumerate() {
            let a = matrix.principal_submatrix(p);
            let chol = a.cholesky().ok_or_else(|| Error::Smoother(format!("patch {pi} matrix is not positive definite")))?;
            let inv = chol.inverse();
            inverses.extend(inv.iter());
            inverse_offsets.push(inverses.len());
        }
        Ok(Self { kind, patches, inverse_offsets, inverses, overlap, ndofs })
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn max_patch_size(&self) -> usize {
        self.patches.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn patch_inverse(&self, i: usize) -> DMatrix<f64> {
        let n = self.patches[i].len();
        DMatrix::from_column_slice(n, n, &self.inverses[self.inverse_offsets[i]..self.inverse_offsets[i + 1]])
    }

    /// `out = ω Σ_i R_iᵀ A_i⁻¹ R_i r`.
    pub fn apply_into(&self, omega: f64, r: &[f64], out: &mut [f64]) {
        assert_eq!(r.len(), self.ndofs);
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut local = Vec::new();
        for (pi, p) in self.patches.iter().enumerate() {
            let n = p.len();
            local.clear();
            local.extend(p.iter().map(|&i| r[i]));
            let inv = &self.inverses[self.inverse_offsets[pi]..self.inverse_offsets[pi + 1]];
            // column-major symmetric inverse: out_i += Σ_j inv[j*n + i] r_j
            for (j, &rj) in local.iter().enumerate() {
                if rj == 0.0 {
                    continue;
                }
                let col = &inv[j * n..(j + 1) * n];
                let s = omega * rj;
                for (i, &gi) in p.iter().enumerate() {
                    out[gi] += s * col[i];
                }
            }
        }
    }

    pub fn apply(&self, omega: f64, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ndofs];
        self.apply_into(omega, r, &mut out);
        out
    }
}

/// Power-iteration estimate of `λ_max(S A)` in the A-inner product.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumEstimate {
    pub lambda_max: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl SpectrumEstimate {
    /// Whether `I − S A` stays positive.
    pub fn below_one(&self) -> bool {
        self.lambda_max < 1.0
    }

    /// Whether the estimate respects `λ_max ≤ ω N_O`.
    pub fn within_overlap_bound(&self, omega: f64, overlap: usize) -> bool {
        self.lambda_max <= omega * overlap as f64 + 1e-8
    }
}

/// Largest number of patches coupled through `matrix` to any single patch
/// (the patch itself included), an upper bound for `λ_max(S A) / ω`.
pub fn patch_coupling_bound(matrix: &CsrMatrix, patches: &PatchDecomposition) -> usize {
    let mut containing = vec![Vec::new(); patches.ndofs];
    for (pi, p) in patches.patches.iter().enumerate() {
        for &i in p {
            containing[i].push(pi);
        }
    }
    let mut seen = vec![usize::MAX; patches.len()];
    let mut best = 0;
    for (pi, p) in patches.patches.iter().enumerate() {
        let mut count = 0;
        for &i in p {
            for &j in matrix.row(i).0 {
                for &q in &containing[j] {
                    if seen[q] != pi {
                        seen[q] = pi;
                        count += 1;
                    }
                }
            }
        }
        best = usize::max(best, count);
    }
    best
}

pub fn smoother_spectrum_probe(matrix: &CsrMatrix, patches: &PatchDecomposition, omega: f64, seed: u64) -> SpectrumEstimate {
    let n = matrix.nrows;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut lambda = 0.0;
    let max_iter = 500;
    for it in 1..=max_iter {
        let ax = matrix.apply(&x);
        let xax = dot(&x, &ax);
        let y = patches.apply(omega, &ax);
        let ay = matrix.apply(&y);
        let new = dot(&y, &ax) / xax;
        let scale = dot(&y, &ay).sqrt();
        x = y.into_iter().map(|v| v / scale).collect();
        if it > 5 && (new - lambda).abs() <= 1e-9 * new.abs() {
            return SpectrumEstimate { lambda_max: new, converged: true, iterations: it };
        }
        lambda = new;
    }
    SpectrumEstimate { lambda_max: lambda, converged: false, iterations: max_iter }
}
