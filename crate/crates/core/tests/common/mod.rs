#![allow(dead_code)]

use std::sync::Arc;

use hhomg::base::{build_cartesian_base, build_reptile_base, build_voronoi_base};
use hhomg::hho::{local_operators, LevelSpaces, LocalOperators};
use hhomg::hierarchy::{agglomerate_clustered, agglomerate_structured};
use hhomg::interface::InterfaceSpace;
use hhomg::poly::ScaledMonomials;
use hhomg::{InterfaceGrouping, MeshLevel, Point};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// A small mesh level together with whether all its interfaces are flat.
pub struct Case {
    pub name: &'static str,
    pub level: MeshLevel,
    pub flat: bool,
}

/// Whether every interface of `level`, boundary ones included, lies in one
/// hyperplane.
pub fn all_interfaces_flat(level: &MeshLevel) -> bool {
    let base = &level.base;
    level.interfaces.iter().all(|f| {
        let n0 = base.faces[f.base_faces[0]].normal.map(|v| v * f.signs[0]);
        let c0 = base.faces[f.base_faces[0]].centroid;
        f.base_faces.iter().zip(&f.signs).all(|(&b, &s)| {
            let face = &base.faces[b];
            let same = (0..3).all(|d| (face.normal[d] * s - n0[d]).abs() < 1e-10);
            let offset: f64 = (0..3).map(|d| (face.centroid[d] - c0[d]) * n0[d]).sum();
            same && offset.abs() < 1e-10
        })
    })
}

/// Small levels (at most 64 cells) of every family, fine and agglomerated.
pub fn small_levels() -> Vec<Case> {
    let cart = |n| MeshLevel::finest(Arc::new(build_cartesian_base(n, 2, &[1.0, 1.0]).unwrap())).unwrap();
    let cart3 = MeshLevel::finest(Arc::new(build_cartesian_base(4, 3, &[1.0; 3]).unwrap())).unwrap();
    let rep = MeshLevel::finest(Arc::new(build_reptile_base(2).unwrap())).unwrap();
    let vor = MeshLevel::finest(Arc::new(build_voronoi_base(8).unwrap())).unwrap();
    let octagons = agglomerate_structured(&cart(8), InterfaceGrouping::PerPair).unwrap().0;
    let rep_flat = agglomerate_structured(&rep, InterfaceGrouping::FlatPieces).unwrap().0;
    let rep_bent = agglomerate_structured(&rep, InterfaceGrouping::PerPair).unwrap().0;
    let vor_coarse = agglomerate_clustered(&vor, 16, InterfaceGrouping::PerPair).unwrap().0;
    let cube_coarse = agglomerate_structured(&cart3, InterfaceGrouping::PerPair).unwrap().0;
    let case = |name, level: MeshLevel| Case { name, flat: all_interfaces_flat(&level), level };
    vec![
        case("cartesian 4x4", cart(4)),
        case("octagons 4x4", octagons),
        case("reptile", rep),
        case("reptile coarse flat pieces", rep_flat),
        case("reptile coarse per pair", rep_bent),
        case("voronoi 8x8", vor),
        case("voronoi clustered", vor_coarse),
        case("cube 4x4x4", cart3),
        case("cube coarse", cube_coarse),
    ]
}

/// Space for which polynomial consistency holds on `case`.
pub fn consistent_space(case: &Case) -> InterfaceSpace {
    if case.flat {
        InterfaceSpace::Ambient
    } else {
        InterfaceSpace::NormalGradients
    }
}

/// Random polynomial of total degree `degree` in scaled monomials about the
/// cell barycenter.
pub fn random_poly(rng: &mut impl Rng, dim: usize, degree: usize, center: Point, scale: f64) -> impl Fn(Point) -> f64 {
    let m = ScaledMonomials::new(dim, degree, center, scale);
    let c: Vec<f64> = (0..m.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    move |x| {
        let mut v = vec![0.0; m.len()];
        m.eval(x, &mut v);
        v.iter().zip(&c).map(|(a, b)| a * b).sum()
    }
}

/// Hybrid interpolant `(π_t q, π_F q)` in the local ordering of `ops`.
pub fn interpolate(spaces: &LevelSpaces, ops: &LocalOperators, q: &dyn Fn(Point) -> f64) -> DVector<f64> {
    let mut u = DVector::zeros(ops.size());
    let rule = &ops.cell_rule;
    let phi = ops.bulk.values_at(&rule.points);
    for i in 0..ops.n_bulk {
        u[i] = (0..rule.len()).map(|p| rule.weights[p] * phi[(i, p)] * q(rule.points[p])).sum();
    }
    for (li, &f) in ops.interfaces.iter().enumerate() {
        let fr = &spaces.face_rules[f];
        let vals: Vec<f64> = fr.points.iter().map(|&x| q(x)).collect();
        let c = spaces.bases[f].project(fr, &vals);
        for (a, v) in c.iter().enumerate() {
            u[ops.n_bulk + ops.face_offsets[li] + a] = *v;
        }
    }
    u
}

/// Bulk coefficients of the uncondensed hybrid system solved densely.
pub fn monolithic_bulk(level: &MeshLevel, k: usize, space: InterfaceSpace, source: &dyn Fn(Point) -> f64) -> Vec<DVector<f64>> {
    let spaces = LevelSpaces::new(level, k, space).unwrap();
    let ops: Vec<LocalOperators> = (0..level.num_cells()).map(|t| local_operators(level, &spaces, t).unwrap()).collect();
    let mut bulk_offset = Vec::new();
    let mut n = spaces.ndofs;
    for o in &ops {
        bulk_offset.push(n);
        n += o.n_bulk;
    }
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for (t, o) in ops.iter().enumerate() {
        let mut map: Vec<Option<usize>> = (0..o.n_bulk).map(|i| Some(bulk_offset[t] + i)).collect();
        for &f in &o.interfaces {
            let dim = spaces.bases[f].dim();
            match spaces.dofs(f) {
                Some(r) => map.extend(r.map(Some)),
                None => map.extend(std::iter::repeat_n(None, dim)),
            }
        }
        for i in 0..o.size() {
            let Some(gi) = map[i] else { continue };
            for j in 0..o.size() {
                if let Some(gj) = map[j] {
                    a[(gi, gj)] += o.matrix[(i, j)];
                }
            }
        }
        let rule = &o.cell_rule;
        let phi = o.bulk.values_at(&rule.points);
        for i in 0..o.n_bulk {
            b[bulk_offset[t] + i] += (0..rule.len()).map(|p| rule.weights[p] * phi[(i, p)] * source(rule.points[p])).sum::<f64>();
        }
    }
    let x = a.cholesky().expect("monolithic system is SPD").solve(&b);
    ops.iter().enumerate().map(|(t, o)| x.rows(bulk_offset[t], o.n_bulk).into_owned()).collect()
}

/// Skeletal DOF vector of the interface projections of `q`.
pub fn project_skeleton(spaces: &LevelSpaces, q: &dyn Fn(Point) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; spaces.ndofs];
    for f in 0..spaces.bases.len() {
        let Some(range) = spaces.dofs(f) else { continue };
        let fr = &spaces.face_rules[f];
        let vals: Vec<f64> = fr.points.iter().map(|&x| q(x)).collect();
        let c = spaces.bases[f].project(fr, &vals);
        for (a, g) in range.enumerate() {
            out[g] = c[a];
        }
    }
    out
}

/// Random affine function with coefficients in `[-1, 1]`.
pub fn random_affine(rng: &mut impl Rng, dim: usize) -> impl Fn(Point) -> f64 + Clone {
    let a: Vec<f64> = (0..=dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    move |p| a[0] + (0..dim).map(|d| a[d + 1] * p[d]).sum::<f64>()
}
