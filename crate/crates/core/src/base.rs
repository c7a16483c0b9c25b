//! Fine (base) polytopal meshes.
//!
//! Every level of a hierarchy is expressed in terms of the entities of one
//! [`BaseMesh`]: agglomerated cells are sets of base cells and interfaces are
//! sets of base faces. Base faces are straight segments in 2D and planar
//! polygons in 3D.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{self, Point};

/// Integration piece of a base cell.
#[derive(Debug, Clone, Copy)]
pub enum CellPiece {
    Triangle([Point; 3]),
    /// Axis-aligned rectangle (2D) or box (3D).
    Box {
        lo: Point,
        hi: Point,
    },
}

/// Integration piece of a base face.
#[derive(Debug, Clone, Copy)]
pub enum FacePiece {
    Segment([Point; 2]),
    Triangle([Point; 3]),
    /// Parallelogram `origin + s u + t v`, `s, t ∈ [0, 1]`.
    Parallelogram {
        origin: Point,
        u: Point,
        v: Point,
    },
}

#[derive(Debug, Clone)]
pub struct BaseCell {
    /// Polygon vertices in counter-clockwise order (2D) or the corner set (3D).
    pub vertices: Vec<usize>,
    pub faces: Vec<usize>,
    pub measure: f64,
    pub centroid: Point,
    pub pieces: Vec<CellPiece>,
}

#[derive(Debug, Clone)]
pub struct BaseFace {
    pub vertices: Vec<usize>,
    /// Cell on the side the normal points away from.
    pub inner: usize,
    /// Cell the normal points into, `None` on the domain boundary.
    pub outer: Option<usize>,
    pub normal: Point,
    pub measure: f64,
    pub centroid: Point,
    pub pieces: Vec<FacePiece>,
}

impl BaseFace {
    pub fn is_boundary(&self) -> bool {
        self.outer.is_none()
    }
}

/// Structure a builder leaves behind so that the matching structured
/// agglomeration can recover parent relations without geometric search.
#[derive(Debug, Clone)]
pub enum StructuredLayout {
    /// `n` cells per direction, lexicographic cell numbering (x fastest).
    Cartesian {
        n: usize,
    },
    /// Rep-tile substitution tree: `parents[g][i]` is the parent (at
    /// generation `g`) of tile `i` at generation `g + 1`. The base cells are
    /// the tiles of the last generation.
    RepTile {
        parents: Vec<Vec<usize>>,
    },
    Unstructured,
}

#[derive(Debug, Clone)]
pub struct BaseMesh {
    pub dim: usize,
    pub extents: Point,
    pub vertices: Vec<Point>,
    pub cells: Vec<BaseCell>,
    pub faces: Vec<BaseFace>,
    /// 3D only: base edges as vertex pairs.
    pub edges: Vec<[usize; 2]>,
    /// 3D only: edges of each base face.
    pub face_edges: Vec<Vec<usize>>,
    pub layout: StructuredLayout,
}

impl BaseMesh {
    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn domain_measure(&self) -> f64 {
        self.extents[..self.dim].iter().product()
    }

    pub fn num_interior_faces(&self) -> usize {
        self.faces.iter().filter(|f| !f.is_boundary()).count()
    }

    pub fn num_boundary_faces(&self) -> usize {
        self.faces.iter().filter(|f| f.is_boundary()).count()
    }

    /// Assemble a 2D mesh from counter-clockwise polygons. Faces are derived
    /// by matching polygon edges; pieces default to an ear-clipping
    /// triangulation when not supplied.
    pub fn from_polygons(
        vertices: Vec<Point>,
        polygons: Vec<Vec<usize>>,
        pieces: Option<Vec<Vec<CellPiece>>>,
        extents: Point,
        layout: StructuredLayout,
    ) -> Result<Self> {
        let mut cells = Vec::with_capacity(polygons.len());
        let mut faces: Vec<BaseFace> = Vec::new();
        let mut edge_map: HashMap<(usize, usize), usize> = HashMap::new();
        let mut pieces = pieces.map(|p| p.into_iter());

        for (ci, poly) in polygons.into_iter().enumerate() {
            let pts: Vec<Point> = poly.iter().map(|&v| vertices[v]).collect();
            let area = geometry::polygon_signed_area(&pts);
            if !(area > 0.0) {
                return Err(Error::Mesh(format!("cell {ci} has non-positive area {area:e}")));
            }
            let centroid = polygon_centroid(&pts, area);
            let cell_pieces = match pieces.as_mut().and_then(|p| p.next()) {
                Some(p) => p,
                None => ear_clip(&pts)?.into_iter().map(|t| CellPiece::Triangle([pts[t[0]], pts[t[1]], pts[t[2]]])).collect(),
            };
            let mut cell_faces = Vec::with_capacity(poly.len());
            for i in 0..poly.len() {
                let a = poly[i];
                let b = poly[(i + 1) % poly.len()];
                let key = (a.min(b), a.max(b));
                match edge_map.get(&key) {
                    Some(&fi) => {
                        let face = &mut faces[fi];
                        if face.outer.is_some() {
                            return Err(Error::Mesh(format!("edge {key:?} shared by more than two cells")));
                        }
                        face.outer = Some(ci);
                        cell_faces.push(fi);
                    }
                    None => {
                        let pa = vertices[a];
                        let pb = vertices[b];
                        let t = geometry::sub(pb, pa);
                        let len = geometry::norm(t);
                        if len <= 0.0 {
                            return Err(Error::Mesh(format!("zero-length edge in cell {ci}")));
                        }
                        let fi = faces.len();
                        faces.push(BaseFace {
                            vertices: vec![a, b],
                            inner: ci,
                            outer: None,
                            normal: [t[1] / len, -t[0] / len, 0.0],
                            measure: len,
                            centroid: geometry::scale(geometry::add(pa, pb), 0.5),
                            pieces: vec![FacePiece::Segment([pa, pb])],
                        });
                        edge_map.insert(key, fi);
                        cell_faces.push(fi);
                    }
                }
            }
            cells.push(BaseCell { vertices: poly, faces: cell_faces, measure: area, centroid, pieces: cell_pieces });
        }
        Ok(Self { dim: 2, extents, vertices, cells, faces, edges: Vec::new(), face_edges: Vec::new(), layout })
    }

    /// Faces incident to each vertex (2D) or edges incident to each vertex (3D).
    pub fn vertex_incidence(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.vertices.len()];
        if self.dim == 2 {
            for (fi, f) in self.faces.iter().enumerate() {
                for &v in &f.vertices {
                    inc[v].push(fi);
                }
            }
        } else {
            for (ei, e) in self.edges.iter().enumerate() {
                inc[e[0]].push(ei);
                inc[e[1]].push(ei);
            }
        }
        inc
    }

    /// 3D: faces incident to each edge.
    pub fn edge_faces(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.edges.len()];
        for (fi, es) in self.face_edges.iter().enumerate() {
            for &e in es {
                inc[e].push(fi);
            }
        }
        inc
    }

    /// Check the structural invariants of a base mesh.
    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.cells.iter().map(|c| c.measure).sum();
        let dom = self.domain_measure();
        if ((total - dom) / dom).abs() > 1e-12 {
            return Err(Error::Mesh(format!("cell measures sum to {total}, domain measure {dom}")));
        }
        for (ci, c) in self.cells.iter().enumerate() {
            if !(c.measure > 0.0) {
                return Err(Error::Mesh(format!("cell {ci} has non-positive measure")));
            }
        }
        if self.dim == 3 {
            for (fi, f) in self.faces.iter().enumerate() {
                let p0 = self.vertices[f.vertices[0]];
                for &v in &f.vertices[1..] {
                    let off = geometry::dot(geometry::sub(self.vertices[v], p0), f.normal);
                    if off.abs() > 1e-12 {
                        return Err(Error::Mesh(format!("face {fi} is not planar")));
                    }
                }
            }
        }
        Ok(())
    }
}

fn polygon_centroid(pts: &[Point], area: f64) -> Point {
    let n = pts.len();
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        let cr = a[0] * b[1] - b[0] * a[1];
        cx += (a[0] + b[0]) * cr;
        cy += (a[1] + b[1]) * cr;
    }
    [cx / (6.0 * area), cy / (6.0 * area), 0.0]
}

/// Ear-clipping triangulation of a simple counter-clockwise polygon.
/// Collinear vertices are allowed.
pub fn ear_clip(pts: &[Point]) -> Result<Vec<[usize; 3]>> {
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    let mut tris = Vec::with_capacity(pts.len().saturating_sub(2));
    let scale = geometry::polygon_signed_area(pts).abs();
    let eps = 1e-14 * scale.max(f64::MIN_POSITIVE);
    while idx.len() > 3 {
        let m = idx.len();
        let mut clipped = false;
        for i in 0..m {
            let (ia, ib, ic) = (idx[(i + m - 1) % m], idx[i], idx[(i + 1) % m]);
            let (a, b, c) = (pts[ia], pts[ib], pts[ic]);
            if geometry::triangle_signed_area(a, b, c) <= eps {
                continue;
            }
            let blocked = idx.iter().any(|&j| {
                if j == ia || j == ib || j == ic {
                    return false;
                }
                let p = pts[j];
                geometry::triangle_signed_area(a, b, p) >= -eps
                    && geometry::triangle_signed_area(b, c, p) >= -eps
                    && geometry::triangle_signed_area(c, a, p) >= -eps
            });
            if blocked {
                continue;
            }
            tris.push([ia, ib, ic]);
            idx.remove(i);
            clipped = true;
            break;
        }
        if !clipped {
            // only degenerate (collinear) ears remain
            let m = idx.len();
            let mut removed = false;
            for i in 0..m {
                let (ia, ib, ic) = (idx[(i + m - 1) % m], idx[i], idx[(i + 1) % m]);
                if geometry::triangle_signed_area(pts[ia], pts[ib], pts[ic]).abs() <= eps {
                    idx.remove(i);
                    removed = true;
                    break;
                }
            }
            if !removed {
                return Err(Error::Quadrature("ear clipping failed on a non-simple polygon".into()));
            }
        }
    }
    if idx.len() == 3 && geometry::triangle_signed_area(pts[idx[0]], pts[idx[1]], pts[idx[2]]) > eps {
        tris.push([idx[0], idx[1], idx[2]]);
    }
    Ok(tris)
}

fn check_extents(extents: &[f64]) -> Result<()> {
    if extents.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidParameter(format!("extents must be positive, got {extents:?}")));
    }
    Ok(())
}

/// Cartesian mesh with `n` cells per direction on `[0, L_x] × … `.
pub fn build_cartesian_base(n: usize, dim: usize, extents: &[f64]) -> Result<BaseMesh> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("cells per direction must be even and >= 2, got {n}")));
    }
    if extents.len() != dim {
        return Err(Error::InvalidParameter(format!("expected {dim} extents, got {}", extents.len())));
    }
    check_extents(extents)?;
    match dim {
        2 => build_cartesian_2d(n, [extents[0], extents[1]]),
        3 => build_cartesian_3d(n, [extents[0], extents[1], extents[2]]),
        _ => Err(Error::InvalidParameter(format!("dimension must be 2 or 3, got {dim}"))),
    }
}

fn build_cartesian_2d(n: usize, ext: [f64; 2]) -> Result<BaseMesh> {
    let (hx, hy) = (ext[0] / n as f64, ext[1] / n as f64);
    let vid = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 * hx, j as f64 * hy, 0.0]);
        }
    }
    let mut polys = Vec::with_capacity(n * n);
    let mut pieces = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            polys.push(vec![vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]);
            pieces.push(vec![CellPiece::Box { lo: vertices[vid(i, j)], hi: vertices[vid(i + 1, j + 1)] }]);
        }
    }
    BaseMesh::from_polygons(vertices, polys, Some(pieces), [ext[0], ext[1], 0.0], StructuredLayout::Cartesian { n })
}

fn build_cartesian_3d(n: usize, ext: [f64; 3]) -> Result<BaseMesh> {
    let h = [ext[0] / n as f64, ext[1] / n as f64, ext[2] / n as f64];
    let np = n + 1;
    let vid = |i: [usize; 3]| (i[2] * np + i[1]) * np + i[0];
    let cid = |i: [usize; 3]| (i[2] * n + i[1]) * n + i[0];
    let mut vertices = Vec::with_capacity(np * np * np);
    for k in 0..np {
        for j in 0..np {
            for i in 0..np {
                vertices.push([i as f64 * h[0], j as f64 * h[1], k as f64 * h[2]]);
            }
        }
    }
    let mut cells = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let mut vs = Vec::with_capacity(8);
                for dk in 0..2 {
                    for dj in 0..2 {
                        for di in 0..2 {
                            vs.push(vid([i + di, j + dj, k + dk]));
                        }
                    }
                }
                let lo = vertices[vid([i, j, k])];
                let hi = vertices[vid([i + 1, j + 1, k + 1])];
                cells.push(BaseCell {
                    vertices: vs,
                    faces: Vec::with_capacity(6),
                    measure: h[0] * h[1] * h[2],
                    centroid: geometry::scale(geometry::add(lo, hi), 0.5),
                    pieces: vec![CellPiece::Box { lo, hi }],
                });
            }
        }
    }
    let mut faces = Vec::with_capacity(3 * n * n * np);
    let mut edge_map: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges: Vec<[usize; 2]> = Vec::new();
    let mut face_edges = Vec::new();
    for a in 0..3 {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        for p in 0..=n {
            for jc in 0..n {
                for jb in 0..n {
                    let mut corner = [0usize; 3];
                    corner[a] = p;
                    corner[b] = jb;
                    corner[c] = jc;
                    let mut cb = corner;
                    cb[b] += 1;
                    let mut cbc = cb;
                    cbc[c] += 1;
                    let mut cc = corner;
                    cc[c] += 1;
                    // counter-clockwise about +e_a
                    let mut vs = vec![vid(corner), vid(cb), vid(cbc), vid(cc)];
                    let mut lower = corner;
                    let cell_lo = if p > 0 {
                        lower[a] = p - 1;
                        Some(cid(lower))
                    } else {
                        None
                    };
                    let cell_hi = if p < n { Some(cid(corner)) } else { None };
                    let mut normal = [0.0; 3];
                    let (inner, outer) = match (cell_lo, cell_hi) {
                        (Some(lo), hi) => {
                            normal[a] = 1.0;
                            (lo, hi)
                        }
                        (None, Some(hi)) => {
                            normal[a] = -1.0;
                            vs.reverse();
                            (hi, None)
                        }
                        (None, None) => unreachable!(),
                    };
                    let fi = faces.len();
                    cells[inner].faces.push(fi);
                    if let Some(o) = outer {
                        cells[o].faces.push(fi);
                    }
                    let origin = vertices[vid(corner)];
                    let u = geometry::sub(vertices[vid(cb)], origin);
                    let v = geometry::sub(vertices[vid(cc)], origin);
                    let mut fe = Vec::with_capacity(4);
                    for t in 0..4 {
                        let (x, y) = (vs[t], vs[(t + 1) % 4]);
                        let key = (x.min(y), x.max(y));
                        let e = *edge_map.entry(key).or_insert_with(|| {
                            edges.push([key.0, key.1]);
                            edges.len() - 1
                        });
                        fe.push(e);
                    }
                    face_edges.push(fe);
                    faces.push(BaseFace {
                        vertices: vs,
                        inner,
                        outer,
                        normal,
                        measure: h[b] * h[c],
                        centroid: geometry::add(origin, geometry::scale(geometry::add(u, v), 0.5)),
                        pieces: vec![FacePiece::Parallelogram { origin, u, v }],
                    });
                }
            }
        }
    }
    Ok(BaseMesh { dim: 3, extents: ext, vertices, cells, faces, edges, face_edges, layout: StructuredLayout::Cartesian { n } })
}

/// One L-tromino tile: corner square and the directions of its two arms,
/// in units of the tile pitch.
#[derive(Debug, Clone, Copy)]
struct Tromino {
    corner: [i64; 2],
    u: [i64; 2],
    v: [i64; 2],
}

impl Tromino {
    fn squares(&self) -> [[i64; 2]; 3] {
        let c = self.corner;
        [c, [c[0] + self.u[0], c[1] + self.u[1]], [c[0] + self.v[0], c[1] + self.v[1]]]
    }

    /// Four half-pitch copies: one at the corner, one in the bend and one at
    /// the end of each arm (mirrored).
    fn children(&self) -> [Tromino; 4] {
        let (u, v) = (self.u, self.v);
        let ox = i64::from(u[0] < 0 || v[0] < 0);
        let oy = i64::from(u[1] < 0 || v[1] < 0);
        let at = |a: i64, b: i64| [2 * self.corner[0] + ox + a * u[0] + b * v[0], 2 * self.corner[1] + oy + a * u[1] + b * v[1]];
        let neg = |w: [i64; 2]| [-w[0], -w[1]];
        [
            Tromino { corner: at(0, 0), u, v },
            Tromino { corner: at(1, 1), u, v },
            Tromino { corner: at(3, 0), u: neg(u), v },
            Tromino { corner: at(0, 3), u, v: neg(v) },
        ]
    }
}

/// L-tromino rep-tile mesh of `[0, 3/2] × [0, 1]`.
///
/// Generation 0 is the 3×2 rectangle of pitch `1/2` split into two trominoes;
/// each further generation replaces every tile by four half-scale copies, so
/// generation `g` has `2·4^g` tiles of pitch `2^{-(g+1)}`. Base faces are the
/// unit segments of the pitch grid (eight per tile).
pub fn build_reptile_base(generation: usize) -> Result<BaseMesh> {
    if generation < 1 {
        return Err(Error::InvalidParameter("rep-tile generation must be >= 1".into()));
    }
    if generation > 10 {
        return Err(Error::InvalidParameter(format!("rep-tile generation {generation} is too large")));
    }
    let mut tiles = vec![Tromino { corner: [0, 0], u: [1, 0], v: [0, 1] }, Tromino { corner: [2, 1], u: [-1, 0], v: [0, -1] }];
    let mut parents = Vec::with_capacity(generation);
    for _ in 0..generation {
        let mut next = Vec::with_capacity(tiles.len() * 4);
        let mut par = Vec::with_capacity(tiles.len() * 4);
        for (i, t) in tiles.iter().enumerate() {
            for c in t.children() {
                next.push(c);
                par.push(i);
            }
        }
        tiles = next;
        parents.push(par);
    }
    let pitch = 0.5 / (1u64 << generation) as f64;
    let w = 3i64 << generation;
    let h = 2i64 << generation;
    let vid = |x: i64, y: i64| (y * (w + 1) + x) as usize;
    let mut vertices = Vec::with_capacity(((w + 1) * (h + 1)) as usize);
    for y in 0..=h {
        for x in 0..=w {
            vertices.push([x as f64 * pitch, y as f64 * pitch, 0.0]);
        }
    }
    let mut polys = Vec::with_capacity(tiles.len());
    let mut pieces = Vec::with_capacity(tiles.len());
    for t in &tiles {
        let sq = t.squares();
        for s in &sq {
            if s[0] < 0 || s[1] < 0 || s[0] >= w || s[1] >= h {
                return Err(Error::Mesh("rep-tile square outside the domain".into()));
            }
        }
        polys.push(union_of_squares_boundary(&sq, vid)?);
        pieces.push(
            sq.iter()
                .map(|s| CellPiece::Box {
                    lo: [s[0] as f64 * pitch, s[1] as f64 * pitch, 0.0],
                    hi: [(s[0] + 1) as f64 * pitch, (s[1] + 1) as f64 * pitch, 0.0],
                })
                .collect(),
        );
    }
    // unused grid points (interior of tiles) are harmless but keep the
    // vertex array compact
    let mut used = vec![usize::MAX; vertices.len()];
    let mut compact = Vec::new();
    for p in polys.iter_mut() {
        for v in p.iter_mut() {
            if used[*v] == usize::MAX {
                used[*v] = compact.len();
                compact.push(vertices[*v]);
            }
            *v = used[*v];
        }
    }
    BaseMesh::from_polygons(compact, polys, Some(pieces), [1.5, 1.0, 0.0], StructuredLayout::RepTile { parents })
}

/// Counter-clockwise boundary loop (through every grid point) of a simply
/// connected union of unit squares.
fn union_of_squares_boundary(squares: &[[i64; 2]], vid: impl Fn(i64, i64) -> usize) -> Result<Vec<usize>> {
    let mut directed: Vec<((i64, i64), (i64, i64))> = Vec::new();
    for s in squares {
        let (x, y) = (s[0], s[1]);
        let c = [(x, y), (x + 1, y), (x + 1, y + 1), (x, y + 1)];
        for i in 0..4 {
            directed.push((c[i], c[(i + 1) % 4]));
        }
    }
    let boundary: Vec<_> = directed.iter().copied().filter(|&(a, b)| !directed.contains(&(b, a))).collect();
    let next: HashMap<(i64, i64), (i64, i64)> = boundary.iter().copied().collect();
    if next.len() != boundary.len() {
        return Err(Error::Mesh("square union is not simply connected".into()));
    }
    let start = boundary.iter().map(|e| e.0).min().unwrap();
    let mut loop_ = vec![vid(start.0, start.1)];
    let mut cur = next[&start];
    while cur != start {
        loop_.push(vid(cur.0, cur.1));
        cur = *next.get(&cur).ok_or_else(|| Error::Mesh("open square-union boundary".into()))?;
        if loop_.len() > boundary.len() {
            return Err(Error::Mesh("square-union boundary does not close".into()));
        }
    }
    Ok(loop_)
}

/// Polygonal dual of the triangulated `n × n` node grid on the unit square.
///
/// Each grid quadrilateral is split along its `(i, j)–(i+1, j+1)` diagonal.
/// The cell of a node joins the centroids of its incident triangles; the cell
/// of a boundary node is closed along ∂Ω through the midpoints of its boundary
/// edges. Every triangulation edge yields one interior dual face.
pub fn build_voronoi_base(n: usize) -> Result<BaseMesh> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("voronoi mesh needs n >= 3 nodes per direction, got {n}")));
    }
    let h = 1.0 / (n - 1) as f64;
    let node = |i: usize, j: usize| j * n + i;
    let node_pt = |i: usize, j: usize| [i as f64 * h, j as f64 * h, 0.0];
    let m = n - 1;
    // triangles as ccw node triples
    let mut tris: Vec<[usize; 3]> = Vec::with_capacity(2 * m * m);
    for j in 0..m {
        for i in 0..m {
            let (a, b, c, d) = (node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1));
            tris.push([a, b, c]);
            tris.push([a, c, d]);
        }
    }
    let pts: Vec<Point> = (0..n * n).map(|v| node_pt(v % n, v / n)).collect();
    let mut vertices: Vec<Point> = Vec::new();
    let mut tri_vertex = Vec::with_capacity(tris.len());
    for t in &tris {
        let c = geometry::scale(geometry::add(geometry::add(pts[t[0]], pts[t[1]]), pts[t[2]]), 1.0 / 3.0);
        tri_vertex.push(vertices.len());
        vertices.push(c);
    }
    // incident triangles per node, keyed by the edge that follows the node
    // counter-clockwise: (p, q, r) ccw means edge p-q precedes, p-r follows
    let mut by_prev: Vec<HashMap<usize, usize>> = vec![HashMap::new(); n * n];
    for (ti, t) in tris.iter().enumerate() {
        for s in 0..3 {
            let p = t[s];
            let q = t[(s + 1) % 3];
            by_prev[p].insert(q, ti);
        }
    }
    let mut midpoint_vertex: HashMap<(usize, usize), usize> = HashMap::new();
    let mut node_vertex: HashMap<usize, usize> = HashMap::new();
    let mut polys = Vec::with_capacity(n * n);
    let mut pieces = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let p = node(i, j);
            let boundary = i == 0 || j == 0 || i == m || j == m;
            let next_of = |ti: usize| {
                let t = tris[ti];
                let s = t.iter().position(|&x| x == p).unwrap();
                t[(s + 2) % 3]
            };
            let prev_of = |ti: usize| {
                let t = tris[ti];
                let s = t.iter().position(|&x| x == p).unwrap();
                t[(s + 1) % 3]
            };
            // order incident triangles counter-clockwise
            let incident: Vec<usize> = by_prev[p].values().copied().collect();
            let start = if boundary {
                // triangle whose preceding edge is not shared
                *incident
                    .iter()
                    .find(|&&ti| {
                        let q = prev_of(ti);
                        !incident.iter().any(|&tj| next_of(tj) == q)
                    })
                    .ok_or_else(|| Error::Mesh(format!("no boundary fan start at node ({i}, {j})")))?
            } else {
                *incident.iter().min().unwrap()
            };
            let mut order = vec![start];
            loop {
                let q = next_of(*order.last().unwrap());
                match by_prev[p].get(&q) {
                    Some(&tn) if tn != start => order.push(tn),
                    _ => break,
                }
                if order.len() > incident.len() {
                    return Err(Error::Mesh(format!("fan around node ({i}, {j}) does not close")));
                }
            }
            if order.len() != incident.len() {
                return Err(Error::Mesh(format!("fan around node ({i}, {j}) is incomplete")));
            }
            let mut poly: Vec<usize> = Vec::new();
            let mut fan_center = pts[p];
            if boundary {
                let pv = *node_vertex.entry(p).or_insert_with(|| {
                    vertices.push(pts[p]);
                    vertices.len() - 1
                });
                let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point>| {
                    let key = (a.min(b), a.max(b));
                    *midpoint_vertex.entry(key).or_insert_with(|| {
                        vertices.push(geometry::scale(geometry::add(pts[a], pts[b]), 0.5));
                        vertices.len() - 1
                    })
                };
                poly.push(pv);
                poly.push(mid(p, prev_of(order[0]), &mut vertices));
                poly.extend(order.iter().map(|&t| tri_vertex[t]));
                poly.push(mid(p, next_of(*order.last().unwrap()), &mut vertices));
                fan_center = pts[p];
            } else {
                poly.extend(order.iter().map(|&t| tri_vertex[t]));
            }
            let mut cell_pieces = Vec::with_capacity(poly.len());
            let nv = poly.len();
            let (lo, hi) = if boundary { (1, nv - 1) } else { (0, nv) };
            for s in lo..hi {
                let a = vertices[poly[s]];
                let b = vertices[poly[(s + 1) % nv]];
                let area = geometry::triangle_signed_area(fan_center, a, b);
                if !(area > 0.0) {
                    return Err(Error::Mesh(format!("degenerate dual polygon at node ({i}, {j})")));
                }
                cell_pieces.push(CellPiece::Triangle([fan_center, a, b]));
            }
            polys.push(poly);
            pieces.push(cell_pieces);
        }
    }
    BaseMesh::from_polygons(vertices, polys, Some(pieces), [1.0, 1.0, 0.0], StructuredLayout::Unstructured)
}
