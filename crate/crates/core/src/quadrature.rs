//! Composite quadrature on agglomerated cells and interfaces.
//!
//! Rules are unions of mapped reference rules over the integration pieces of
//! the base entities: Gauss–Legendre on segments, tensor Gauss on boxes and
//! parallelograms, collapsed (Duffy) Gauss on triangles.

use std::sync::OnceLock;

use crate::base::{BaseMesh, CellPiece, FacePiece};
use crate::geometry::{self, Point};
use crate::mesh::MeshLevel;

/// Exactness degree used for all HHO integrals at face degree `k`.
pub fn default_degree(k: usize) -> usize {
    2 * (k + 2)
}

const MAX_POINTS: usize = 32;

/// Gauss–Legendre nodes and weights on `[0, 1]` with `n` points.
pub fn gauss_legendre(n: usize) -> &'static [(f64, f64)] {
    static TABLE: OnceLock<Vec<Vec<(f64, f64)>>> = OnceLock::new();
    assert!((1..=MAX_POINTS).contains(&n), "unsupported Gauss rule size {n}");
    &TABLE.get_or_init(|| (0..=MAX_POINTS).map(compute_gauss_legendre).collect())[n]
}

fn compute_gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Newton on P_n starting from the Chebyshev-like guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push(((1.0 - x) / 2.0, w / 2.0));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

fn points_for(degree: usize) -> usize {
    degree / 2 + 1
}

/// A quadrature rule in physical coordinates.
///
/// Face rules also carry, per point, the unit normal of the base face the
/// point lies on (oriented consistently with the interface) and the local
/// index of that base face within the interface.
#[derive(Debug, Clone, Default)]
pub struct QuadRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub normals: Vec<Point>,
    pub pieces: Vec<usize>,
    pub degree: usize,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&p, &w)| w * f(p)).sum()
    }

    fn push(&mut self, p: Point, w: f64) {
        self.points.push(p);
        self.weights.push(w);
    }
}

fn append_cell_piece(rule: &mut QuadRule, piece: &CellPiece, dim: usize, degree: usize) {
    match *piece {
        CellPiece::Box { lo, hi } => {
            let g = gauss_legendre(points_for(degree));
            let h = geometry::sub(hi, lo);
            let vol: f64 = h[..dim].iter().product();
            let nz = if dim == 3 { g.len() } else { 1 };
            for kz in 0..nz {
                for &(y, wy) in g {
                    for &(x, wx) in g {
                        let (z, wz) = if dim == 3 { g[kz] } else { (0.0, 1.0) };
                        let p = [lo[0] + x * h[0], lo[1] + y * h[1], if dim == 3 { lo[2] + z * h[2] } else { 0.0 }];
                        rule.push(p, vol * wx * wy * wz);
                    }
                }
            }
        }
        CellPiece::Triangle([a, b, c]) => append_triangle(rule, a, b, c, degree, None),
    }
}

fn append_triangle(rule: &mut QuadRule, a: Point, b: Point, c: Point, degree: usize, normal: Option<Point>) {
    // collapsed map (u, v) -> a + u (b - a) + u v (c - b), Jacobian 2|T| u
    let g = gauss_legendre(points_for(degree + 1));
    let area2 = geometry::norm(geometry::cross(geometry::sub(b, a), geometry::sub(c, a)));
    for &(u, wu) in g {
        for &(v, wv) in g {
            let p = geometry::add(a, geometry::add(geometry::scale(geometry::sub(b, a), u), geometry::scale(geometry::sub(c, b), u * v)));
            rule.push(p, area2 * u * wu * wv);
            if let Some(n) = normal {
                rule.normals.push(n);
            }
        }
    }
}

fn append_face_piece(rule: &mut QuadRule, piece: &FacePiece, degree: usize, normal: Point) {
    match *piece {
        FacePiece::Segment([a, b]) => {
            let len = geometry::dist(a, b);
            for &(t, w) in gauss_legendre(points_for(degree)) {
                rule.push(geometry::add(a, geometry::scale(geometry::sub(b, a), t)), w * len);
                rule.normals.push(normal);
            }
        }
        FacePiece::Triangle([a, b, c]) => append_triangle(rule, a, b, c, degree, Some(normal)),
        FacePiece::Parallelogram { origin, u, v } => {
            let g = gauss_legendre(points_for(degree));
            let area = geometry::norm(geometry::cross(u, v));
            for &(s, ws) in g {
                for &(t, wt) in g {
                    let p = geometry::add(origin, geometry::add(geometry::scale(u, s), geometry::scale(v, t)));
                    rule.push(p, area * ws * wt);
                    rule.normals.push(normal);
                }
            }
        }
    }
}

/// Composite rule over a set of base cells.
pub fn base_cells_rule(base: &BaseMesh, cells: &[usize], degree: usize) -> QuadRule {
    let mut rule = QuadRule { degree, ..Default::default() };
    for &c in cells {
        for piece in &base.cells[c].pieces {
            append_cell_piece(&mut rule, piece, base.dim, degree);
        }
    }
    rule
}

/// Composite rule over base faces with per-face normal signs.
pub fn base_faces_rule(base: &BaseMesh, faces: &[usize], signs: &[f64], degree: usize) -> QuadRule {
    let mut rule = QuadRule { degree, ..Default::default() };
    for (i, (&f, &s)) in faces.iter().zip(signs).enumerate() {
        let bf = &base.faces[f];
        let n = geometry::scale(bf.normal, s);
        let start = rule.len();
        for piece in &bf.pieces {
            append_face_piece(&mut rule, piece, degree, n);
        }
        rule.pieces.extend(std::iter::repeat_n(i, rule.len() - start));
    }
    rule
}

/// Rule on cell `cell` of `level`.
pub fn cell_rule(level: &MeshLevel, cell: usize, degree: usize) -> QuadRule {
    base_cells_rule(&level.base, &level.cells[cell].base_cells, degree)
}

/// Rule on interface `iface` of `level`; normals follow the interface orientation
/// (pointing away from its owner).
pub fn face_rule(level: &MeshLevel, iface: usize, degree: usize) -> QuadRule {
    let f = &level.interfaces[iface];
    base_faces_rule(&level.base, &f.base_faces, &f.signs, degree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::{build_cartesian_base, build_reptile_base};
    use crate::mesh::{InterfaceGrouping, LevelLayout};
    use std::sync::Arc;

    #[test]
    fn gauss_exactness() {
        for n in 1..12 {
            let g = gauss_legendre(n);
            for p in 0..2 * n {
                let s: f64 = g.iter().map(|&(x, w)| w * x.powi(p as i32)).sum();
                assert!((s - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn triangle_exactness() {
        let mut rule = QuadRule::default();
        append_triangle(&mut rule, [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], 6, None);
        // ∫ x^a y^b over the unit simplex = a! b! / (a + b + 2)!
        let fact = |n: u32| (1..=n).product::<u32>() as f64;
        for a in 0..=6u32 {
            for b in 0..=(6 - a) {
                let s = rule.integrate(|p| p[0].powi(a as i32) * p[1].powi(b as i32));
                let exact = fact(a) * fact(b) / fact(a + b + 2);
                assert!((s - exact).abs() < 1e-14, "{a} {b}");
            }
        }
    }

    #[test]
    fn unit_square_rules() {
        let base = Arc::new(build_cartesian_base(2, 2, &[1.0, 1.0]).unwrap());
        let rule = base_cells_rule(&base, &[0, 1, 2, 3], 2);
        assert!((rule.integrate(|p| p[0] * p[1]) - 0.25).abs() < 1e-15);
        assert!((rule.measure() - 1.0).abs() < 1e-15);
        let whole = rule.integrate(|p| p[0] * p[0]);
        let parts: f64 = (0..4).map(|c| base_cells_rule(&base, &[c], 2).integrate(|p| p[0] * p[0])).sum();
        assert!((whole - parts).abs() < 1e-15);
    }

    #[test]
    fn tromino_area() {
        let base = build_reptile_base(1).unwrap();
        // pitch 1/4 tiles of generation 1; the generation-0 tile would have area 3/4
        let rule = base_cells_rule(&base, &[0], 4);
        assert!((rule.measure() - 3.0 / 16.0).abs() < 1e-15);
        let all: Vec<usize> = (0..base.num_cells()).collect();
        assert!((base_cells_rule(&base, &all, 0).measure() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn segment_and_l_shaped_face_rules() {
        let base = Arc::new(build_cartesian_base(2, 2, &[2.0, 2.0]).unwrap());
        let level =
            MeshLevel::from_partition(base.clone(), vec![0, 1, 1, 1], InterfaceGrouping::PerPair, LevelLayout::Unstructured).unwrap();
        let iface = level.interfaces.iter().position(|f| f.neighbor == Some(1)).unwrap();
        let rule = face_rule(&level, iface, 3);
        assert!((rule.measure() - 2.0).abs() < 1e-15);
        // normals point from cell 0 (the lower-left unit square) outwards
        for (p, n) in rule.points.iter().zip(&rule.normals) {
            if (p[0] - 1.0).abs() < 1e-14 {
                assert_eq!(*n, [1.0, 0.0, 0.0]);
            } else {
                assert_eq!(*n, [0.0, 1.0, 0.0]);
            }
        }
        let seg = base_faces_rule(&base, &[0], &[1.0], 3);
        let f = &base.faces[0];
        let (a, b) = (base.vertices[f.vertices[0]], base.vertices[f.vertices[1]]);
        // ∫ t^3 along the segment parametrised by arclength
        let len = geometry::dist(a, b);
        let s = seg.integrate(|p| (geometry::dist(p, a) / len).powi(3));
        assert!((s - len / 4.0).abs() < 1e-14);
    }

    #[test]
    fn cube_rules() {
        let base = build_cartesian_base(2, 3, &[1.0, 1.0, 1.0]).unwrap();
        let rule = base_cells_rule(&base, &[0, 1, 2, 3, 4, 5, 6, 7], 4);
        assert!((rule.integrate(|p| p[0] * p[0] * p[1] * p[2]) - 1.0 / 12.0).abs() < 1e-15);
        let fr = base_faces_rule(&base, &[0], &[1.0], 2);
        assert!((fr.measure() - 0.25).abs() < 1e-15);
    }
}
