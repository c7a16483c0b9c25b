//! Manufactured Poisson problems with homogeneous Dirichlet data.

use std::f64::consts::PI;

use crate::geometry::Point;

/// `u = Π_d sin(2π x_d) x_d (x_d − L_d)` on `[0, L_x] × [0, L_y] (× [0, L_z])`
/// with `f = −Δu`.
///
/// In 3D the boundary factor is written `x_d (1 − x_d)`, the sign flip of
/// each factor leaving the structure unchanged.
#[derive(Debug, Clone, Copy)]
pub struct Manufactured {
    pub dim: usize,
    pub extents: Point,
}

impl Manufactured {
    pub fn new(dim: usize, extents: Point) -> Self {
        Self { dim, extents }
    }

    /// One-dimensional factor and its second derivative.
    fn factor(&self, d: usize, x: f64) -> (f64, f64) {
        let l = self.extents[d];
        let sign = if self.dim == 3 { -1.0 } else { 1.0 };
        let (s, c) = ((2.0 * PI * x).sin(), (2.0 * PI * x).cos());
        let g = sign * x * (x - l);
        let g1 = sign * (2.0 * x - l);
        let g2 = sign * 2.0;
        let v = s * g;
        let v2 = -4.0 * PI * PI * s * g + 4.0 * PI * c * g1 + s * g2;
        (v, v2)
    }

    pub fn exact(&self, p: Point) -> f64 {
        (0..self.dim).map(|d| self.factor(d, p[d]).0).product()
    }

    pub fn source(&self, p: Point) -> f64 {
        let f: Vec<(f64, f64)> = (0..self.dim).map(|d| self.factor(d, p[d])).collect();
        let mut lap = 0.0;
        for d in 0..self.dim {
            let mut term = f[d].1;
            for (e, fe) in f.iter().enumerate() {
                if e != d {
                    term *= fe.0;
                }
            }
            lap += term;
        }
        -lap
    }
}

/// Source term of the 2D problem on `[0, L_x] × [0, L_y]`.
pub fn manufactured_rhs(p: Point, extents: Point) -> f64 {
    Manufactured::new(2, extents).source(p)
}
