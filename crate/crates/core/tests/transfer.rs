mod common;

use common::{all_interfaces_flat, project_skeleton, random_affine};
use hhomg::base::build_cartesian_base;
use hhomg::hierarchy::{build_hierarchy, identity_hierarchy, Family, Hierarchy, HierarchyOptions, Lineage};
use hhomg::interface::InterfaceSpace;
use hhomg::mesh::MeshLevel;
use hhomg::solver::AssembledHierarchy;
use hhomg::sparse::dot;
use hhomg::transfer::{averaging_projector, averaging_weights, prolongation_stability_probe, TransferKind};
use hhomg::Point;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn small_hierarchies() -> Vec<(&'static str, Hierarchy)> {
    let opts = HierarchyOptions::default();
    vec![
        ("cartesian", build_hierarchy(Family::Cartesian2d, 256, 3, opts).unwrap()),
        ("reptile", build_hierarchy(Family::Reptile, 128, 3, opts).unwrap()),
        ("voronoi", build_hierarchy(Family::Voronoi, 256, 3, opts).unwrap()),
        ("cube", build_hierarchy(Family::Cartesian3d, 512, 3, opts).unwrap()),
    ]
}

fn consistent_space(h: &Hierarchy) -> InterfaceSpace {
    if h.levels.iter().all(all_interfaces_flat) {
        InterfaceSpace::Ambient
    } else {
        InterfaceSpace::NormalGradients
    }
}

/// Fine interfaces all of whose contributing coarse cells avoid the boundary,
/// where the homogeneous Dirichlet data does not interfere.
fn away_from_boundary(h: &Hierarchy, l: usize) -> Vec<usize> {
    let coarse = &h.levels[l - 1];
    let touches = |t: usize| coarse.cells[t].interfaces.iter().any(|&f| coarse.interfaces[f].is_boundary());
    h.levels[l].interior_interfaces().filter(|&f| averaging_weights(coarse, h.lineage[l][f]).iter().all(|&(t, _)| !touches(t))).collect()
}

fn check_preservation(name: &str, a: &mut AssembledHierarchy, q: &dyn Fn(Point) -> f64) {
    for l in 1..a.num_levels() {
        let faces = away_from_boundary(&a.hierarchy, l);
        let coarse = project_skeleton(&a.levels[l - 1].spaces, q);
        let expected = project_skeleton(&a.levels[l].spaces, q);
        for kind in TransferKind::ALL {
            let got = a.transfer(l, kind).unwrap().prolong(&coarse);
            let fine = &a.levels[l].spaces;
            for &f in &faces {
                for g in fine.dofs(f).unwrap() {
                    let err = (got[g] - expected[g]).abs();
                    assert!(err <= 1e-9 * expected[g].abs().max(1.0), "{name} k={} level {l} {kind}: {err:e}", a.k);
                }
            }
        }
    }
}

#[test]
fn constants_and_harmonic_affine_functions_are_preserved() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (name, h) in small_hierarchies() {
        let space = consistent_space(&h);
        let dim = h.finest().dim();
        let kmax = if dim == 3 { 1 } else { 2 };
        for k in 0..=kmax {
            let mut a = AssembledHierarchy::manufactured(h.clone(), k, space).unwrap();
            check_preservation(name, &mut a, &|_| 1.0);
            let p = random_affine(&mut rng, dim);
            check_preservation(name, &mut a, &p);
        }
    }
}

#[test]
fn zero_input_gives_zero_output() {
    let h = build_hierarchy(Family::Cartesian2d, 64, 2, HierarchyOptions::default()).unwrap();
    let mut a = AssembledHierarchy::manufactured(h, 1, InterfaceSpace::Ambient).unwrap();
    for kind in TransferKind::ALL {
        let op = a.transfer(1, kind).unwrap();
        assert!(op.prolong(&vec![0.0; a.levels[0].ndofs()]).iter().all(|&v| v == 0.0));
        assert!(op.restrict(&vec![0.0; a.levels[1].ndofs()]).unwrap().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn identity_hierarchy_preserves_harmonic_affine_data_but_averages_traces() {
    let level = MeshLevel::finest(Arc::new(build_cartesian_base(8, 2, &[1.0, 1.0]).unwrap())).unwrap();
    let h = identity_hierarchy(&level).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for k in 0..=2 {
        let mut a = AssembledHierarchy::manufactured(h.clone(), k, InterfaceSpace::Ambient).unwrap();
        let p = random_affine(&mut rng, 2);
        check_preservation("identity", &mut a, &p);
        // a generic skeletal function is replaced by the average of the two
        // adjacent cell traces, so I^R is not the identity
        let x: Vec<f64> = (0..a.levels[0].ndofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = a.transfer(1, TransferKind::Reconstruction).unwrap().prolong(&x);
        let diff = x.iter().zip(&y).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(diff > 1e-2, "k={k}: {diff:e}");
    }
}

#[test]
fn restriction_is_the_transpose() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = build_hierarchy(Family::Reptile, 128, 2, HierarchyOptions::default()).unwrap();
    let mut a = AssembledHierarchy::manufactured(h, 1, InterfaceSpace::Ambient).unwrap();
    let (nc, nf) = (a.levels[0].ndofs(), a.levels[1].ndofs());
    for kind in TransferKind::ALL {
        let op = a.transfer(1, kind).unwrap();
        assert_eq!((op.matrix.nrows, op.matrix.ncols), (nf, nc));
        for _ in 0..5 {
            let r: Vec<f64> = (0..nf).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..nc).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lhs = dot(&op.restrict(&r).unwrap(), &c);
            let rhs = dot(&r, &op.prolong(&c));
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
        for j in 0..nc {
            let mut e = vec![0.0; nc];
            e[j] = 1.0;
            let col = op.prolong(&e);
            if col.iter().any(|&v| v != 0.0) {
                assert!(op.restrict(&col).unwrap()[j] > 0.0);
            }
        }
        assert!(op.restrict(&vec![0.0; nf + 1]).is_err());
    }
}

#[test]
fn columns_stay_within_the_two_cell_stencil() {
    for (name, h) in small_hierarchies() {
        let mut a = AssembledHierarchy::manufactured(h.clone(), 1, InterfaceSpace::Ambient).unwrap();
        for l in 1..h.num_levels() {
            let coarse_mesh = &h.levels[l - 1];
            let coarse = a.levels[l - 1].clone();
            let fine = a.levels[l].clone();
            let mut owner_face = vec![usize::MAX; fine.ndofs()];
            for f in 0..h.levels[l].interfaces.len() {
                if let Some(r) = fine.spaces.dofs(f) {
                    r.for_each(|g| owner_face[g] = f);
                }
            }
            for kind in TransferKind::ALL {
                let op = a.transfer(l, kind).unwrap();
                for cf in coarse_mesh.interior_interfaces() {
                    let iface = &coarse_mesh.interfaces[cf];
                    let cells = [Some(iface.owner), iface.neighbor];
                    let allowed = |t: usize| cells.contains(&Some(t));
                    for j in coarse.spaces.dofs(cf).unwrap() {
                        let mut e = vec![0.0; coarse.ndofs()];
                        e[j] = 1.0;
                        for (g, v) in op.prolong(&e).iter().enumerate() {
                            if *v == 0.0 {
                                continue;
                            }
                            let ok = averaging_weights(coarse_mesh, h.lineage[l][owner_face[g]]).iter().any(|&(t, _)| allowed(t));
                            assert!(ok, "{name} level {l} {kind}: coarse dof {j} reaches fine dof {g}");
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn averaging_uses_measure_weights() {
    let h = build_hierarchy(Family::Cartesian2d, 64, 2, HierarchyOptions::default()).unwrap();
    let coarse_mesh = &h.levels[0];
    let (mut interior, mut shared) = (0, 0);
    for lin in &h.lineage[1] {
        let w = averaging_weights(coarse_mesh, *lin);
        let total: f64 = w.iter().map(|p| p.1).sum();
        assert!((total - 1.0).abs() < 1e-14);
        match lin {
            Lineage::Interior { .. } => interior += 1,
            Lineage::OnInterface { interface } if !coarse_mesh.interfaces[*interface].is_boundary() => {
                assert_eq!(w.len(), 2);
                assert!(w.iter().all(|p| (p.1 - 0.5).abs() < 1e-14));
                shared += 1;
            }
            _ => {}
        }
    }
    assert!(interior > 0 && shared > 0);

    // field x on one cell and 0 on its neighbour gives the projection of x/2
    let a = AssembledHierarchy::manufactured(h.clone(), 1, InterfaceSpace::Ambient).unwrap();
    let (fine, coarse) = (&a.levels[1], &a.levels[0]);
    let cf = coarse_mesh.interior_interfaces().next().unwrap();
    let t = coarse_mesh.interfaces[cf].owner;
    let mut bulk: Vec<DVector<f64>> = coarse.cells.iter().map(|c| DVector::zeros(c.bulk.len())).collect();
    let basis = &coarse.cells[t].bulk;
    let rule = hhomg::quadrature::cell_rule(coarse_mesh, t, 4);
    let phi = basis.values_at(&rule.points);
    for i in 0..basis.len() {
        bulk[t][i] = (0..rule.len()).map(|p| rule.weights[p] * phi[(i, p)] * rule.points[p][0]).sum();
    }
    let out = averaging_projector(&h.levels[1], fine, coarse_mesh, coarse, &h.lineage[1], &bulk).unwrap();
    let half_x = project_skeleton(&fine.spaces, &|p| 0.5 * p[0]);
    let mut seen = 0;
    for (f, lin) in h.lineage[1].iter().enumerate() {
        if *lin == (Lineage::OnInterface { interface: cf }) {
            for g in fine.spaces.dofs(f).unwrap() {
                assert!((out[g] - half_x[g]).abs() < 1e-12);
            }
            seen += 1;
        }
    }
    assert_eq!(seen, 2);
    assert!(averaging_projector(&h.levels[1], fine, coarse_mesh, coarse, &h.lineage[1][1..], &bulk).is_err());
}

#[test]
fn stability_constant_is_uniform_across_levels() {
    for (family, nc, bound) in [(Family::Cartesian2d, 1024, 1.5), (Family::Reptile, 2048, 2.0)] {
        let h = build_hierarchy(family, nc, 4, HierarchyOptions::default()).unwrap();
        let mut a = AssembledHierarchy::manufactured(h, 0, InterfaceSpace::Ambient).unwrap();
        for kind in TransferKind::ALL {
            let c: Vec<f64> = (1..4)
                .map(|l| {
                    let op = a.transfer(l, kind).unwrap();
                    prolongation_stability_probe(&a.levels[l], &a.levels[l - 1], &op, 50, 3)
                })
                .collect();
            let max = c.iter().cloned().fold(0.0, f64::max);
            let min = c.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min > 0.0 && max / min <= bound, "{family:?} {kind}: {c:?}");
        }
    }
}
