//! The V-cycle preconditioner.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::smoother::PatchDecomposition;
use crate::sparse::{CsrMatrix, SparseCholesky};
use crate::transfer::TransferOperator;

/// One level of the V-cycle. The coarsest level carries no smoother or
/// prolongation.
#[derive(Debug, Clone)]
pub struct MgLevel {
    pub matrix: Arc<CsrMatrix>,
    pub smoother: Option<Arc<PatchDecomposition>>,
    /// Prolongation from the next coarser level.
    pub prolongation: Option<Arc<TransferOperator>>,
}

/// Operators of a V-cycle, coarsest level first.
#[derive(Debug, Clone)]
pub struct MgContext {
    pub levels: Vec<MgLevel>,
    pub coarse: Arc<SparseCholesky>,
    pub smoothing_steps: usize,
    pub omega: f64,
}

impl MgContext {
    pub fn new(levels: Vec<MgLevel>, coarse: Arc<SparseCholesky>, smoothing_steps: usize, omega: f64) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidParameter("multigrid needs at least one level".into()));
        }
        if smoothing_steps == 0 {
            return Err(Error::InvalidParameter("at least one smoothing step is required".into()));
        }
        if !(omega > 0.0) {
            return Err(Error::InvalidParameter(format!("damping must be positive, got {omega}")));
        }
        for (l, lev) in levels.iter().enumerate().skip(1) {
            let p = lev.prolongation.as_ref().ok_or_else(|| Error::InvalidParameter(format!("level {l} lacks a prolongation")))?;
            if lev.smoother.is_none() {
                return Err(Error::InvalidParameter(format!("level {l} lacks a smoother")));
            }
            if p.matrix.nrows != lev.matrix.nrows {
                return Err(Error::DimensionMismatch { expected: lev.matrix.nrows, got: p.matrix.nrows });
            }
            if p.matrix.ncols != levels[l - 1].matrix.nrows {
                return Err(Error::DimensionMismatch { expected: levels[l - 1].matrix.nrows, got: p.matrix.ncols });
            }
        }
        Ok(Self { levels, coarse, smoothing_steps, omega })
    }

    pub fn finest(&self) -> usize {
        self.levels.len() - 1
    }

    /// Apply the V-cycle operator `B_ℓ` to `b`.
    pub fn v_cycle(&self, l: usize, b: &[f64]) -> Vec<f64> {
        if l == 0 {
            return self.coarse.solve(b);
        }
        let lev = &self.levels[l];
        let a = &lev.matrix;
        let smoother = lev.smoother.as_ref().expect("validated");
        let prolongation = lev.prolongation.as_ref().expect("validated");
        let n = b.len();
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let mut c = vec![0.0; n];
        let mut ac = vec![0.0; n];
        let correct = |x: &mut Vec<f64>, r: &mut Vec<f64>, c: &[f64], ac: &mut Vec<f64>| {
            a.mul_vec(c, ac);
            for i in 0..n {
                x[i] += c[i];
                r[i] -= ac[i];
            }
        };
        for _ in 0..self.smoothing_steps {
            smoother.apply_into(self.omega, &r, &mut c);
            correct(&mut x, &mut r, &c, &mut ac);
        }
        let rc = prolongation.matrix.apply_transpose(&r);
        let xc = self.v_cycle(l - 1, &rc);
        prolongation.matrix.mul_vec(&xc, &mut c);
        correct(&mut x, &mut r, &c, &mut ac);
        for _ in 0..self.smoothing_steps {
            smoother.apply_into(self.omega, &r, &mut c);
            correct(&mut x, &mut r, &c, &mut ac);
        }
        x
    }

    /// One V-cycle on the finest level.
    pub fn apply(&self, b: &[f64]) -> Vec<f64> {
        self.v_cycle(self.finest(), b)
    }
}
