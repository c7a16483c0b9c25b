//! End-to-end solves: assemble every level of a hierarchy once, then build
//! transfers, smoothers and coarse factorizations on demand and run FGMRES
//! preconditioned by one V-cycle.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hho::{assemble_level, CondensedLevel, Source};
use crate::hierarchy::{Family, Hierarchy};
use crate::interface::InterfaceSpace;
use crate::krylov::{fgmres, FgmresOptions};
use crate::multigrid::{MgContext, MgLevel};
use crate::problem::Manufactured;
use crate::smoother::{PatchDecomposition, PatchKind};
use crate::sparse::SparseCholesky;
use crate::transfer::{build_prolongation, TransferKind, TransferOperator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub smoother: PatchKind,
    pub prolongation: TransferKind,
    /// Pre- and post-smoothing steps per level.
    pub smoothing_steps: usize,
    pub omega: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            smoother: PatchKind::VertexStar,
            prolongation: TransferKind::Reconstruction,
            smoothing_steps: 5,
            omega: 0.2,
            tol: 1e-8,
            max_iter: 500,
            restart: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub setup_seconds: f64,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub converged: bool,
    pub residuals: Vec<f64>,
    /// Skeletal DOFs per level, finest first.
    pub dofs_per_level: Vec<usize>,
    pub timings: Timings,
    pub config: SolverConfig,
    pub levels: usize,
}

/// A hierarchy with every level assembled for one polynomial degree, and
/// caches of the solver components built from it.
pub struct AssembledHierarchy {
    pub hierarchy: Hierarchy,
    pub k: usize,
    pub space: InterfaceSpace,
    pub levels: Vec<Arc<CondensedLevel>>,
    pub assembly_seconds: f64,
    transfers: HashMap<(usize, TransferKind), Arc<TransferOperator>>,
    smoothers: HashMap<(usize, PatchKind), Arc<PatchDecomposition>>,
    coarse: HashMap<usize, Arc<SparseCholesky>>,
}

impl AssembledHierarchy {
    pub fn new(hierarchy: Hierarchy, k: usize, space: InterfaceSpace, source: Source<'_>) -> Result<Self> {
        let start = Instant::now();
        let levels = hierarchy.levels.iter().map(|l| assemble_level(l, k, space, source).map(Arc::new)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            hierarchy,
            k,
            space,
            levels,
            assembly_seconds: start.elapsed().as_secs_f64(),
            transfers: HashMap::new(),
            smoothers: HashMap::new(),
            coarse: HashMap::new(),
        })
    }

    /// Assemble with the manufactured source of the hierarchy's domain.
    pub fn manufactured(hierarchy: Hierarchy, k: usize, space: InterfaceSpace) -> Result<Self> {
        let base = hierarchy.finest().base.clone();
        let problem = Manufactured::new(base.dim, base.extents);
        Self::new(hierarchy, k, space, &move |p| problem.source(p))
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn family(&self) -> Option<Family> {
        self.hierarchy.family
    }

    /// Skeletal DOFs per level, finest first.
    pub fn dofs_per_level(&self) -> Vec<usize> {
        self.levels.iter().rev().map(|l| l.ndofs()).collect()
    }

    /// Prolongation into level `l` from level `l − 1`.
    pub fn transfer(&mut self, l: usize, kind: TransferKind) -> Result<Arc<TransferOperator>> {
        if l == 0 || l >= self.num_levels() {
            return Err(Error::InvalidParameter(format!("no prolongation into level {l}")));
        }
        if let Some(t) = self.transfers.get(&(l, kind)) {
            return Ok(t.clone());
        }
        let h = &self.hierarchy;
        let op = Arc::new(build_prolongation(&h.levels[l], &self.levels[l], &h.levels[l - 1], &self.levels[l - 1], &h.lineage[l], kind)?);
        self.transfers.insert((l, kind), op.clone());
        Ok(op)
    }

    pub fn smoother(&mut self, l: usize, kind: PatchKind) -> Result<Arc<PatchDecomposition>> {
        if let Some(s) = self.smoothers.get(&(l, kind)) {
            return Ok(s.clone());
        }
        let s = Arc::new(PatchDecomposition::build(&self.hierarchy.levels[l], &self.levels[l], kind)?);
        self.smoothers.insert((l, kind), s.clone());
        Ok(s)
    }

    pub fn coarse_solver(&mut self, l: usize) -> Result<Arc<SparseCholesky>> {
        if let Some(c) = self.coarse.get(&l) {
            return Ok(c.clone());
        }
        let c = Arc::new(SparseCholesky::new(&self.levels[l].matrix)?);
        self.coarse.insert(l, c.clone());
        Ok(c)
    }

    /// V-cycle context over the finest `levels` levels.
    pub fn context(&mut self, levels: usize, config: &SolverConfig) -> Result<MgContext> {
        let total = self.num_levels();
        if levels == 0 || levels > total {
            return Err(Error::InvalidParameter(format!("cannot use {levels} of {total} levels")));
        }
        let first = total - levels;
        let coarse = self.coarse_solver(first)?;
        let mut mg = Vec::with_capacity(levels);
        for l in first..total {
            let (smoother, prolongation) = if l == first {
                (None, None)
            } else {
                (Some(self.smoother(l, config.smoother)?), Some(self.transfer(l, config.prolongation)?))
            };
            mg.push(MgLevel { matrix: self.levels[l].matrix.clone(), smoother, prolongation });
        }
        MgContext::new(mg, coarse, config.smoothing_steps, config.omega)
    }

    /// FGMRES on the finest level preconditioned by a V-cycle over `levels` levels.
    pub fn solve(&mut self, levels: usize, config: &SolverConfig) -> Result<(Vec<f64>, SolverReport)> {
        let setup = Instant::now();
        let ctx = self.context(levels, config)?;
        let setup_seconds = setup.elapsed().as_secs_f64();
        let fine = self.levels.last().unwrap().clone();
        let start = Instant::now();
        let opts = FgmresOptions { tol: config.tol, max_iter: config.max_iter, restart: config.restart };
        let (x, res) = fgmres(|v| fine.matrix.apply(v), |v| ctx.apply(v), &fine.rhs, opts)?;
        let solve_seconds = start.elapsed().as_secs_f64();
        let total = self.num_levels();
        let dofs_per_level = self.levels[total - levels..].iter().rev().map(|l| l.ndofs()).collect();
        Ok((
            x,
            SolverReport {
                iterations: res.iterations,
                converged: res.converged,
                residuals: res.residuals,
                dofs_per_level,
                timings: Timings { setup_seconds, solve_seconds },
                config: *config,
                levels,
            },
        ))
    }
}

/// Assemble and solve in one call.
pub fn solve(hierarchy: Hierarchy, k: usize, space: InterfaceSpace, config: &SolverConfig) -> Result<SolverReport> {
    let levels = hierarchy.num_levels();
    let mut assembled = AssembledHierarchy::manufactured(hierarchy, k, space)?;
    assembled.solve(levels, config).map(|(_, r)| r)
}
