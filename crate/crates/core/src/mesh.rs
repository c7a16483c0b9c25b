//! One level of an agglomeration hierarchy: cells, interfaces, vertices and
//! (in 3D) edges, all expressed through entities of the shared [`BaseMesh`].

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::base::BaseMesh;
use crate::error::{Error, Result};
use crate::geometry::{self, Point};

/// Maximum number of interfaces a cell may carry.
pub const MAX_INTERFACES_PER_CELL: usize = 64;

/// How base faces separating the same pair of cells are grouped into
/// interfaces on agglomerated levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterfaceGrouping {
    /// One interface per pair of adjacent cells (and one boundary interface
    /// per boundary cell), even when the shared boundary is disconnected.
    PerPair,
    /// Shared boundaries are further split into maximal connected flat
    /// (collinear in 2D, coplanar in 3D) pieces.
    FlatPieces,
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub base_cells: Vec<usize>,
    pub measure: f64,
    pub diameter: f64,
    pub barycenter: Point,
    /// Incident interfaces, boundary ones included.
    pub interfaces: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Interface {
    /// Lower-indexed incident cell; the interface normal points away from it.
    pub owner: usize,
    /// Higher-indexed incident cell, `None` on ∂Ω.
    pub neighbor: Option<usize>,
    pub base_faces: Vec<usize>,
    /// `+1` where the base face normal agrees with the interface orientation.
    pub signs: Vec<f64>,
    pub measure: f64,
    pub diameter: f64,
    pub reference: Point,
}

impl Interface {
    pub fn is_boundary(&self) -> bool {
        self.neighbor.is_none()
    }

    /// `+1` for the owner, `-1` for the neighbour.
    pub fn orientation_for(&self, cell: usize) -> f64 {
        if cell == self.owner {
            1.0
        } else {
            debug_assert_eq!(Some(cell), self.neighbor);
            -1.0
        }
    }

    pub fn other(&self, cell: usize) -> Option<usize> {
        if cell == self.owner {
            self.neighbor
        } else {
            Some(self.owner)
        }
    }
}

/// A coarse edge (3D): connected base edges shared by the same interfaces.
#[derive(Debug, Clone)]
pub struct Edge {
    pub base_edges: Vec<usize>,
    pub interfaces: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelLayout {
    Cartesian { n: usize },
    RepTile { generation: usize },
    Unstructured,
}

#[derive(Debug, Clone)]
pub struct MeshLevel {
    pub base: Arc<BaseMesh>,
    pub cells: Vec<Cell>,
    pub interfaces: Vec<Interface>,
    pub cell_of_base: Vec<usize>,
    pub interface_of_base_face: Vec<Option<usize>>,
    /// Base vertex ids forming the vertex set of this level.
    pub vertices: Vec<usize>,
    /// Interfaces whose closure contains each vertex.
    pub vertex_interfaces: Vec<Vec<usize>>,
    pub edges: Vec<Edge>,
    pub layout: LevelLayout,
}

impl MeshLevel {
    /// The finest level: one cell per base cell and one interface per base face.
    pub fn finest(base: Arc<BaseMesh>) -> Result<Self> {
        let layout = match &base.layout {
            crate::base::StructuredLayout::Cartesian { n } => LevelLayout::Cartesian { n: *n },
            crate::base::StructuredLayout::RepTile { parents } => LevelLayout::RepTile { generation: parents.len() },
            crate::base::StructuredLayout::Unstructured => LevelLayout::Unstructured,
        };
        let cell_of_base: Vec<usize> = (0..base.num_cells()).collect();
        let groups: Vec<(usize, Option<usize>, Vec<usize>)> = base
            .faces
            .iter()
            .enumerate()
            .map(|(fi, f)| match f.outer {
                Some(o) => (f.inner.min(o), Some(f.inner.max(o)), vec![fi]),
                None => (f.inner, None, vec![fi]),
            })
            .collect();
        Self::assemble(base, cell_of_base, groups, layout)
    }

    /// Agglomerated level from a base-cell → cell assignment (cells numbered
    /// `0..count`, every number used).
    pub fn from_partition(base: Arc<BaseMesh>, cell_of_base: Vec<usize>, grouping: InterfaceGrouping, layout: LevelLayout) -> Result<Self> {
        let groups = derive_interfaces(&base, &cell_of_base, grouping);
        Self::assemble(base, cell_of_base, groups, layout)
    }

    fn assemble(
        base: Arc<BaseMesh>,
        cell_of_base: Vec<usize>,
        groups: Vec<(usize, Option<usize>, Vec<usize>)>,
        layout: LevelLayout,
    ) -> Result<Self> {
        let ncells = cell_of_base.iter().copied().max().map_or(0, |m| m + 1);
        let mut members = vec![Vec::new(); ncells];
        for (b, &c) in cell_of_base.iter().enumerate() {
            members[c].push(b);
        }
        let mut cells = Vec::with_capacity(ncells);
        for (ci, base_cells) in members.into_iter().enumerate() {
            if base_cells.is_empty() {
                return Err(Error::Mesh(format!("agglomerate {ci} is empty")));
            }
            let measure: f64 = base_cells.iter().map(|&b| base.cells[b].measure).sum();
            let mut bary = [0.0; 3];
            for &b in &base_cells {
                bary = geometry::add(bary, geometry::scale(base.cells[b].centroid, base.cells[b].measure));
            }
            let barycenter = geometry::scale(bary, 1.0 / measure);
            let diameter = point_set_diameter(&base, base_cells.iter().flat_map(|&b| base.cells[b].vertices.iter().copied()));
            cells.push(Cell { base_cells, measure, diameter, barycenter, interfaces: Vec::new() });
        }

        let mut interfaces = Vec::with_capacity(groups.len());
        let mut interface_of_base_face = vec![None; base.num_faces()];
        for (owner, neighbor, faces) in groups {
            let id = interfaces.len();
            let mut measure = 0.0;
            let mut refp = [0.0; 3];
            let mut signs = Vec::with_capacity(faces.len());
            for &f in &faces {
                let bf = &base.faces[f];
                interface_of_base_face[f] = Some(id);
                measure += bf.measure;
                refp = geometry::add(refp, geometry::scale(bf.centroid, bf.measure));
                signs.push(if cell_of_base[bf.inner] == owner { 1.0 } else { -1.0 });
            }
            let diameter = point_set_diameter(&base, faces.iter().flat_map(|&f| base.faces[f].vertices.iter().copied()));
            cells[owner].interfaces.push(id);
            if let Some(nb) = neighbor {
                cells[nb].interfaces.push(id);
            }
            interfaces.push(Interface {
                owner,
                neighbor,
                base_faces: faces,
                signs,
                measure,
                diameter,
                reference: geometry::scale(refp, 1.0 / measure),
            });
        }

        let mut level = Self {
            base,
            cells,
            interfaces,
            cell_of_base,
            interface_of_base_face,
            vertices: Vec::new(),
            vertex_interfaces: Vec::new(),
            edges: Vec::new(),
            layout,
        };
        level.derive_vertices_edges();
        Ok(level)
    }

    pub fn dim(&self) -> usize {
        self.base.dim
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Mesh size `h_ℓ = max_t h_t`.
    pub fn mesh_size(&self) -> f64 {
        self.cells.iter().map(|c| c.diameter).fold(0.0, f64::max)
    }

    pub fn interior_interfaces(&self) -> impl Iterator<Item = usize> + '_ {
        self.interfaces.iter().enumerate().filter(|(_, f)| !f.is_boundary()).map(|(i, _)| i)
    }

    pub fn num_interior_interfaces(&self) -> usize {
        self.interfaces.iter().filter(|f| !f.is_boundary()).count()
    }

    /// Outward unit normal of `cell` on base face `face` of interface `iface`.
    pub fn outward_normal(&self, cell: usize, iface: usize, local_face: usize) -> Point {
        let f = &self.interfaces[iface];
        let s = f.orientation_for(cell) * f.signs[local_face];
        geometry::scale(self.base.faces[f.base_faces[local_face]].normal, s)
    }

    /// Whether a base vertex lies on ∂Ω.
    pub fn is_boundary_point(&self, p: Point) -> bool {
        let tol = 1e-12;
        (0..self.dim()).any(|d| p[d].abs() < tol || (p[d] - self.base.extents[d]).abs() < tol)
    }

    /// Vertex set (and 3D edge set) of the level, derived from the interfaces.
    ///
    /// 2D: a base vertex belongs to `V_ℓ` when it touches at least two distinct
    /// interfaces (interface endpoints, including ends on ∂Ω).
    /// 3D: coarse edges are connected unions of base edges touched by the same
    /// set of at least two interfaces; vertices are their endpoints.
    pub fn derive_vertices_edges(&mut self) {
        let base = self.base.clone();
        let inc = base.vertex_incidence();
        let mut vertices = Vec::new();
        let mut vertex_interfaces = Vec::new();
        if base.dim == 2 {
            for (v, faces) in inc.iter().enumerate() {
                let mut ifs: Vec<usize> = faces.iter().filter_map(|&f| self.interface_of_base_face[f]).collect();
                ifs.sort_unstable();
                ifs.dedup();
                if ifs.len() >= 2 {
                    vertices.push(v);
                    vertex_interfaces.push(ifs);
                }
            }
            self.vertices = vertices;
            self.vertex_interfaces = vertex_interfaces;
            self.edges.clear();
            return;
        }

        let edge_faces = base.edge_faces();
        let mut signature: Vec<Option<Vec<usize>>> = Vec::with_capacity(base.edges.len());
        for faces in &edge_faces {
            let mut ifs: Vec<usize> = faces.iter().filter_map(|&f| self.interface_of_base_face[f]).collect();
            ifs.sort_unstable();
            ifs.dedup();
            signature.push(if ifs.len() >= 2 { Some(ifs) } else { None });
        }
        // connected components of base edges with identical signatures
        let mut comp = vec![usize::MAX; base.edges.len()];
        let mut edges: Vec<Edge> = Vec::new();
        for e0 in 0..base.edges.len() {
            let Some(sig) = &signature[e0] else { continue };
            if comp[e0] != usize::MAX {
                continue;
            }
            let id = edges.len();
            let mut stack = vec![e0];
            comp[e0] = id;
            let mut members = Vec::new();
            while let Some(e) = stack.pop() {
                members.push(e);
                for &v in &base.edges[e] {
                    for &e2 in &inc[v] {
                        if comp[e2] == usize::MAX && signature[e2].as_ref() == Some(sig) {
                            comp[e2] = id;
                            stack.push(e2);
                        }
                    }
                }
            }
            members.sort_unstable();
            edges.push(Edge { base_edges: members, interfaces: sig.clone() });
        }
        let mut vertex_faces = vec![Vec::new(); base.vertices.len()];
        for (fi, f) in base.faces.iter().enumerate() {
            for &v in &f.vertices {
                vertex_faces[v].push(fi);
            }
        }
        for (v, es) in inc.iter().enumerate() {
            let carrying: Vec<usize> = es.iter().filter(|&&e| comp[e] != usize::MAX).copied().collect();
            let mut cs: Vec<usize> = carrying.iter().map(|&e| comp[e]).collect();
            cs.sort_unstable();
            cs.dedup();
            if cs.len() >= 2 || carrying.len() == 1 {
                let mut ifs: Vec<usize> = vertex_faces[v].iter().filter_map(|&f| self.interface_of_base_face[f]).collect();
                ifs.sort_unstable();
                ifs.dedup();
                vertices.push(v);
                vertex_interfaces.push(ifs);
            }
        }
        self.vertices = vertices;
        self.vertex_interfaces = vertex_interfaces;
        self.edges = edges;
    }

    /// Vertices of the level that do not lie on ∂Ω.
    pub fn num_interior_vertices(&self) -> usize {
        self.vertices.iter().filter(|&&v| !self.is_boundary_point(self.base.vertices[v])).count()
    }

    /// Check the level invariants: face-connected agglomerates, consistent
    /// interfaces, interface partition and bounded interfaces per cell.
    pub fn validate(&self) -> Result<()> {
        let base = &self.base;
        for (ci, cell) in self.cells.iter().enumerate() {
            if cell.interfaces.len() > MAX_INTERFACES_PER_CELL {
                return Err(Error::Mesh(format!("cell {ci} has {} interfaces", cell.interfaces.len())));
            }
            if !agglomerate_is_connected(base, &self.cell_of_base, ci, &cell.base_cells) {
                return Err(Error::Mesh(format!("agglomerate {ci} is not face-connected")));
            }
        }
        for (fi, f) in base.faces.iter().enumerate() {
            let a = self.cell_of_base[f.inner];
            let expected = match f.outer {
                None => Some((a, None)),
                Some(o) => {
                    let b = self.cell_of_base[o];
                    (a != b).then(|| (a.min(b), Some(a.max(b))))
                }
            };
            match (expected, self.interface_of_base_face[fi]) {
                (None, None) => {}
                (Some((owner, nb)), Some(i)) => {
                    let iface = &self.interfaces[i];
                    if iface.owner != owner || iface.neighbor != nb {
                        return Err(Error::Mesh(format!("base face {fi} assigned to inconsistent interface {i}")));
                    }
                }
                _ => return Err(Error::Mesh(format!("base face {fi} is not partitioned correctly"))),
            }
        }
        for (i, f) in self.interfaces.iter().enumerate() {
            if let Some(nb) = f.neighbor {
                if nb == f.owner {
                    return Err(Error::Mesh(format!("interface {i} has identical incident cells")));
                }
            }
        }
        Ok(())
    }
}

fn point_set_diameter(base: &BaseMesh, ids: impl Iterator<Item = usize>) -> f64 {
    let mut ids: Vec<usize> = ids.collect();
    ids.sort_unstable();
    ids.dedup();
    let pts: Vec<Point> = ids.iter().map(|&v| base.vertices[v]).collect();
    if base.dim == 2 {
        geometry::planar_diameter(&pts)
    } else {
        geometry::max_pairwise_distance(&pts)
    }
}

fn agglomerate_is_connected(base: &BaseMesh, cell_of_base: &[usize], cell: usize, members: &[usize]) -> bool {
    if members.len() <= 1 {
        return true;
    }
    let mut seen: HashMap<usize, bool> = members.iter().map(|&m| (m, false)).collect();
    let mut stack = vec![members[0]];
    seen.insert(members[0], true);
    let mut count = 1;
    while let Some(b) = stack.pop() {
        for &f in &base.cells[b].faces {
            let bf = &base.faces[f];
            let Some(o) = bf.outer else { continue };
            let nb = if bf.inner == b { o } else { bf.inner };
            if cell_of_base[nb] == cell && !seen[&nb] {
                seen.insert(nb, true);
                count += 1;
                stack.push(nb);
            }
        }
    }
    count == members.len()
}

/// Group base faces into the interfaces of the partition `cell_of_base`.
/// Returns `(owner, neighbour, base faces)` triples in a deterministic order:
/// sorted by incident cell pair, boundary interfaces last for each owner.
pub fn derive_interfaces(base: &BaseMesh, cell_of_base: &[usize], grouping: InterfaceGrouping) -> Vec<(usize, Option<usize>, Vec<usize>)> {
    let mut by_pair: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (fi, f) in base.faces.iter().enumerate() {
        let a = cell_of_base[f.inner];
        let key = match f.outer {
            None => (a, usize::MAX),
            Some(o) => {
                let b = cell_of_base[o];
                if a == b {
                    continue;
                }
                (a.min(b), a.max(b))
            }
        };
        by_pair.entry(key).or_default().push(fi);
    }
    let mut out = Vec::with_capacity(by_pair.len());
    for ((a, b), faces) in by_pair {
        let nb = (b != usize::MAX).then_some(b);
        match grouping {
            InterfaceGrouping::PerPair => out.push((a, nb, faces)),
            InterfaceGrouping::FlatPieces => {
                for piece in split_flat_pieces(base, &faces) {
                    out.push((a, nb, piece));
                }
            }
        }
    }
    out
}

/// Split a set of base faces into maximal connected flat pieces.
fn split_flat_pieces(base: &BaseMesh, faces: &[usize]) -> Vec<Vec<usize>> {
    let scale = base.extents.iter().copied().fold(0.0, f64::max);
    let tol = 1e-10;
    // canonical (normal, offset) of the supporting line/plane
    let flat_of = |f: usize| {
        let bf = &base.faces[f];
        let mut n = bf.normal;
        let lead = n.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(1.0);
        if lead < 0.0 {
            n = geometry::scale(n, -1.0);
        }
        (n, geometry::dot(n, base.vertices[bf.vertices[0]]))
    };
    let mut flats: Vec<(Point, f64, Vec<usize>)> = Vec::new();
    for &f in faces {
        let (n, d) = flat_of(f);
        match flats.iter_mut().find(|(m, e, _)| geometry::norm(geometry::sub(*m, n)) < tol && (e - d).abs() < tol * scale) {
            Some(entry) => entry.2.push(f),
            None => flats.push((n, d, vec![f])),
        }
    }
    let mut pieces = Vec::new();
    for (_, _, members) in flats {
        // connectivity through shared vertices (2D) or shared edges (3D)
        let keys = |f: usize| -> Vec<usize> {
            if base.dim == 2 {
                base.faces[f].vertices.clone()
            } else {
                base.face_edges[f].clone()
            }
        };
        let mut owner: HashMap<usize, Vec<usize>> = HashMap::new();
        for (i, &f) in members.iter().enumerate() {
            for k in keys(f) {
                owner.entry(k).or_default().push(i);
            }
        }
        let mut comp = vec![usize::MAX; members.len()];
        let mut ncomp = 0;
        for s in 0..members.len() {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = ncomp;
            let mut stack = vec![s];
            while let Some(i) = stack.pop() {
                for k in keys(members[i]) {
                    for &j in &owner[&k] {
                        if comp[j] == usize::MAX {
                            comp[j] = ncomp;
                            stack.push(j);
                        }
                    }
                }
            }
            ncomp += 1;
        }
        let mut groups = vec![Vec::new(); ncomp];
        for (i, &f) in members.iter().enumerate() {
            groups[comp[i]].push(f);
        }
        pieces.extend(groups);
    }
    pieces.sort_by_key(|g| g[0]);
    pieces
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::build_cartesian_base;

    fn cartesian_coarse(n: usize) -> MeshLevel {
        let base = Arc::new(build_cartesian_base(n, 2, &[1.0, 1.0]).unwrap());
        let m = n / 2;
        let cell_of_base = (0..n * n).map(|c| (c / n / 2) * m + (c % n) / 2).collect();
        MeshLevel::from_partition(base, cell_of_base, InterfaceGrouping::PerPair, LevelLayout::Cartesian { n: m }).unwrap()
    }

    #[test]
    fn finest_level_mirrors_base() {
        let base = Arc::new(build_cartesian_base(4, 2, &[1.0, 1.0]).unwrap());
        let l = MeshLevel::finest(base).unwrap();
        assert_eq!(l.num_cells(), 16);
        assert_eq!(l.num_interior_interfaces(), 24);
        // all grid points are vertices
        assert_eq!(l.vertices.len(), 25);
        assert_eq!(l.num_interior_vertices(), 9);
        l.validate().unwrap();
    }

    #[test]
    fn two_by_two_blocks() {
        let l = cartesian_coarse(4);
        assert_eq!(l.num_cells(), 4);
        assert_eq!(l.num_interior_interfaces(), 4);
        for i in l.interior_interfaces() {
            assert_eq!(l.interfaces[i].base_faces.len(), 2);
            assert!((l.interfaces[i].measure - 0.5).abs() < 1e-15);
        }
        assert_eq!(l.num_interior_vertices(), 1);
        l.validate().unwrap();
        assert!((l.cells[0].diameter - 0.5 * 2f64.sqrt()).abs() < 1e-15);
        // interface partition: every base face on an agglomerate boundary is in one interface
        let on_boundary = l.base.faces.iter().filter(|f| f.outer.is_none_or(|o| l.cell_of_base[o] != l.cell_of_base[f.inner])).count();
        let grouped: usize = l.interfaces.iter().map(|f| f.base_faces.len()).sum();
        assert_eq!(on_boundary, grouped);
    }

    #[test]
    fn octagon_level_vertices() {
        let l = cartesian_coarse(64);
        assert_eq!(l.num_interior_interfaces(), 1984);
        let mut expected = 0;
        for _ in 1..32 {
            for _ in 1..32 {
                expected += 1;
            }
        }
        assert_eq!(l.num_interior_vertices(), expected);
        // every interface endpoint is a vertex
        for (i, f) in l.interfaces.iter().enumerate() {
            if f.is_boundary() {
                continue;
            }
            let mut count: HashMap<usize, usize> = HashMap::new();
            for &bf in &f.base_faces {
                for &v in &l.base.faces[bf].vertices {
                    *count.entry(v).or_default() += 1;
                }
            }
            for (v, c) in count {
                if c == 1 {
                    let pos = l.vertices.iter().position(|&w| w == v).expect("endpoint is a vertex");
                    assert!(l.vertex_interfaces[pos].contains(&i));
                }
            }
        }
    }

    #[test]
    fn single_cell_has_no_interior_vertices() {
        let base = Arc::new(build_cartesian_base(2, 2, &[1.0, 1.0]).unwrap());
        let l = MeshLevel::from_partition(base, vec![0; 4], InterfaceGrouping::PerPair, LevelLayout::Unstructured).unwrap();
        assert_eq!(l.num_cells(), 1);
        assert_eq!(l.num_interior_interfaces(), 0);
        assert_eq!(l.num_interior_vertices(), 0);
    }

    #[test]
    fn disconnected_agglomerate_detected() {
        let base = Arc::new(build_cartesian_base(2, 2, &[1.0, 1.0]).unwrap());
        // diagonal cells 0 and 3 together
        let l = MeshLevel::from_partition(base, vec![0, 1, 2, 0], InterfaceGrouping::PerPair, LevelLayout::Unstructured).unwrap();
        assert!(l.validate().is_err());
    }

    #[test]
    fn cube_edges_and_vertices() {
        let base = Arc::new(build_cartesian_base(4, 3, &[1.0, 1.0, 1.0]).unwrap());
        let cell_of_base = (0..64)
            .map(|c: usize| {
                let (i, j, k) = (c % 4, (c / 4) % 4, c / 16);
                (k / 2) * 4 + (j / 2) * 2 + i / 2
            })
            .collect();
        let l = MeshLevel::from_partition(base, cell_of_base, InterfaceGrouping::PerPair, LevelLayout::Cartesian { n: 2 }).unwrap();
        assert_eq!(l.num_interior_interfaces(), 12);
        let center = l.vertices.iter().position(|&v| l.base.vertices[v] == [0.5, 0.5, 0.5]).unwrap();
        assert_eq!(l.vertex_interfaces[center].len(), 12);
        let interior_edges: Vec<_> = l.edges.iter().filter(|e| e.interfaces.iter().all(|&i| !l.interfaces[i].is_boundary())).collect();
        assert_eq!(interior_edges.len(), 6);
        for e in interior_edges {
            assert_eq!(e.interfaces.len(), 4);
            assert_eq!(e.base_edges.len(), 2);
        }
    }
}
