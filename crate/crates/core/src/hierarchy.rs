//! Agglomeration hierarchies: structured (Cartesian, rep-tile) and clustered
//! coarsening, parent maps and interface lineage.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::base::{build_cartesian_base, build_reptile_base, build_voronoi_base, BaseMesh};
use crate::error::{Error, Result};
use crate::geometry;
use crate::mesh::{InterfaceGrouping, LevelLayout, MeshLevel};

/// Mesh families used in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Cartesian2d,
    Reptile,
    Voronoi,
    Cartesian3d,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Cartesian2d, Family::Reptile, Family::Voronoi, Family::Cartesian3d];

    pub fn dim(self) -> usize {
        match self {
            Family::Cartesian3d => 3,
            _ => 2,
        }
    }

    /// Interface grouping used on agglomerated levels unless overridden.
    pub fn default_grouping(self) -> InterfaceGrouping {
        match self {
            Family::Reptile => InterfaceGrouping::FlatPieces,
            _ => InterfaceGrouping::PerPair,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Cartesian2d => "cartesian2d",
            Family::Reptile => "reptile",
            Family::Voronoi => "voronoi",
            Family::Cartesian3d => "cartesian3d",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cartesian2d" | "cartesian" | "cart2d" => Ok(Family::Cartesian2d),
            "reptile" | "rep-tile" | "reptile2d" => Ok(Family::Reptile),
            "voronoi" | "voronoi2d" => Ok(Family::Voronoi),
            "cartesian3d" | "cart3d" => Ok(Family::Cartesian3d),
            _ => Err(Error::InvalidParameter(format!("unknown mesh family '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HierarchyOptions {
    /// Interface grouping on agglomerated levels; the family default if `None`.
    pub grouping: Option<InterfaceGrouping>,
}

/// A fine interface together with its relation to a coarser level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lineage {
    /// Lies inside coarse cell `cell`.
    Interior { cell: usize },
    /// Is contained in coarse interface `interface`.
    OnInterface { interface: usize },
}

/// Levels are stored coarsest first: `levels[0]` is the coarsest mesh and
/// `levels[L-1]` the finest.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub family: Option<Family>,
    pub levels: Vec<MeshLevel>,
    /// `parents[l][t]`: cell of level `l - 1` containing cell `t` of level `l`
    /// (empty for `l = 0`).
    pub parents: Vec<Vec<usize>>,
    /// `lineage[l][f]`: relation of interface `f` of level `l` to level `l - 1`.
    pub lineage: Vec<Vec<Lineage>>,
}

impl Hierarchy {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn finest(&self) -> &MeshLevel {
        self.levels.last().expect("non-empty hierarchy")
    }

    /// `h_{ℓ−1} / h_ℓ` for consecutive levels, finest pair first.
    pub fn coarsening_ratios(&self) -> Vec<f64> {
        self.levels.windows(2).rev().map(|w| w[0].mesh_size() / w[1].mesh_size()).collect()
    }

    pub fn coarsest(&self) -> &MeshLevel {
        &self.levels[0]
    }

    /// Assemble a hierarchy from levels ordered coarsest first, deriving
    /// parents and lineage.
    pub fn from_levels(family: Option<Family>, levels: Vec<MeshLevel>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidParameter("hierarchy needs at least one level".into()));
        }
        let mut parents = vec![Vec::new()];
        let mut lineage = vec![Vec::new()];
        for l in 1..levels.len() {
            let (p, lin) = relate(&levels[l], &levels[l - 1])?;
            parents.push(p);
            lineage.push(lin);
        }
        Ok(Self { family, levels, parents, lineage })
    }

    /// The top `levels` levels of this hierarchy (finest included).
    pub fn truncated(&self, levels: usize) -> Result<Self> {
        if levels == 0 || levels > self.num_levels() {
            return Err(Error::InvalidParameter(format!("cannot take {levels} levels of a {}-level hierarchy", self.num_levels())));
        }
        let skip = self.num_levels() - levels;
        let mut parents: Vec<Vec<usize>> = self.parents[skip..].to_vec();
        let mut lineage: Vec<Vec<Lineage>> = self.lineage[skip..].to_vec();
        parents[0].clear();
        lineage[0].clear();
        Ok(Self { family: self.family, levels: self.levels[skip..].to_vec(), parents, lineage })
    }

    /// Interfaces of level `l` in the closure of coarse cell `t` of level `l - 1`,
    /// paired with the coarse interface they lie on (`None` if interior).
    pub fn fine_interfaces_of(&self, l: usize, t: usize) -> Vec<(usize, Option<usize>)> {
        let coarse = &self.levels[l - 1];
        let fine = &self.levels[l];
        let mut out = BTreeSet::new();
        for &bc in &coarse.cells[t].base_cells {
            for &bf in &fine.base.cells[bc].faces {
                if let Some(f) = fine.interface_of_base_face[bf] {
                    let tag = match self.lineage[l][f] {
                        Lineage::Interior { .. } => None,
                        Lineage::OnInterface { interface } => Some(interface),
                    };
                    out.insert((f, tag));
                }
            }
        }
        out.into_iter().collect()
    }
}

/// Parent map and interface lineage of `fine` with respect to `coarse`.
pub fn relate(fine: &MeshLevel, coarse: &MeshLevel) -> Result<(Vec<usize>, Vec<Lineage>)> {
    if !Arc::ptr_eq(&fine.base, &coarse.base) {
        return Err(Error::Mesh("levels do not share a base mesh".into()));
    }
    let mut parents = Vec::with_capacity(fine.num_cells());
    for (t, cell) in fine.cells.iter().enumerate() {
        let p = coarse.cell_of_base[cell.base_cells[0]];
        if cell.base_cells.iter().any(|&b| coarse.cell_of_base[b] != p) {
            return Err(Error::Mesh(format!("fine cell {t} straddles coarse cells")));
        }
        parents.push(p);
    }
    let mut lineage = Vec::with_capacity(fine.interfaces.len());
    for (i, f) in fine.interfaces.iter().enumerate() {
        let first = coarse.interface_of_base_face[f.base_faces[0]];
        for &bf in &f.base_faces[1..] {
            if coarse.interface_of_base_face[bf] != first {
                return Err(Error::Mesh(format!("fine interface {i} straddles coarse interfaces")));
            }
        }
        lineage.push(match first {
            Some(interface) => Lineage::OnInterface { interface },
            None => Lineage::Interior { cell: parents[f.owner] },
        });
    }
    Ok((parents, lineage))
}

/// Structured agglomeration: 2×2 (2^d) Cartesian blocks or rep-tile
/// substitution parents.
pub fn agglomerate_structured(level: &MeshLevel, grouping: InterfaceGrouping) -> Result<(MeshLevel, Vec<usize>)> {
    let dim = level.dim();
    let (parent_of, count, layout) = match level.layout {
        LevelLayout::Cartesian { n } => {
            if n < 2 || n % 2 != 0 {
                return Err(Error::Layout(format!("Cartesian level with {n} cells per direction cannot be halved")));
            }
            let m = n / 2;
            let parent: Vec<usize> = (0..level.num_cells())
                .map(|c| {
                    let (i, j) = (c % n, (c / n) % n);
                    let k = if dim == 3 { c / (n * n) } else { 0 };
                    ((k / 2) * m + j / 2) * m + i / 2
                })
                .collect();
            (parent, m.pow(dim as u32), LevelLayout::Cartesian { n: m })
        }
        LevelLayout::RepTile { generation } => {
            let crate::base::StructuredLayout::RepTile { parents } = &level.base.layout else {
                return Err(Error::Layout("rep-tile level on a non rep-tile base".into()));
            };
            if generation < 2 {
                return Err(Error::Layout("rep-tile level cannot be coarsened below two tiles".into()));
            }
            let map = parents[generation - 1].clone();
            let count = parents[generation - 2].len();
            (map, count, LevelLayout::RepTile { generation: generation - 1 })
        }
        LevelLayout::Unstructured => {
            return Err(Error::Layout("level carries no structured layout".into()));
        }
    };
    debug_assert_eq!(parent_of.len(), level.num_cells());
    let _ = count;
    let cell_of_base = level.cell_of_base.iter().map(|&c| parent_of[c]).collect();
    let coarse = MeshLevel::from_partition(level.base.clone(), cell_of_base, grouping, layout)?;
    Ok((coarse, parent_of))
}

/// Clustered agglomeration to roughly `target` agglomerates.
///
/// Seeds are taken in a row-major sweep over cell barycentres; each cluster
/// grows by adding the adjacent free cell closest to its current barycentre
/// until it reaches the nominal size. Undersized leftovers are merged into
/// their smallest neighbour, disconnected clusters are split, and clusters
/// enclosed by a single neighbour are absorbed by it.
pub fn agglomerate_clustered(level: &MeshLevel, target: usize, grouping: InterfaceGrouping) -> Result<(MeshLevel, Vec<usize>)> {
    let n = level.num_cells();
    if target == 0 || target >= n {
        return Err(Error::InvalidParameter(format!("cluster target {target} for a level of {n} cells")));
    }
    let adj = cell_adjacency(level);
    let size = ((n as f64 / target as f64).round() as usize).max(2);

    let mut order: Vec<usize> = (0..n).collect();
    let key = |c: usize| {
        let b = level.cells[c].barycenter;
        (b[2], b[1], b[0])
    };
    order.sort_by(|&a, &b| key(a).partial_cmp(&key(b)).unwrap().then(a.cmp(&b)));

    const FREE: usize = usize::MAX;
    let mut assign = vec![FREE; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &seed in &order {
        if assign[seed] != FREE {
            continue;
        }
        let id = clusters.len();
        assign[seed] = id;
        let mut members = vec![seed];
        let mut mass = level.cells[seed].measure;
        let mut moment = geometry::scale(level.cells[seed].barycenter, mass);
        while members.len() < size {
            let centre = geometry::scale(moment, 1.0 / mass);
            let mut best: Option<(f64, usize)> = None;
            for &m in &members {
                for &c in &adj[m] {
                    if assign[c] != FREE {
                        continue;
                    }
                    let d = geometry::dist(level.cells[c].barycenter, centre);
                    if best.is_none_or(|(bd, bc)| d < bd - 1e-14 || (d <= bd + 1e-14 && c < bc)) {
                        best = Some((d, c));
                    }
                }
            }
            let Some((_, c)) = best else { break };
            assign[c] = id;
            members.push(c);
            mass += level.cells[c].measure;
            moment = geometry::add(moment, geometry::scale(level.cells[c].barycenter, level.cells[c].measure));
        }
        clusters.push(members);
    }

    // merge undersized clusters into their smallest neighbour
    for id in 0..clusters.len() {
        if clusters[id].is_empty() || 2 * clusters[id].len() >= size {
            continue;
        }
        let mut best: Option<(usize, usize)> = None;
        for &m in &clusters[id] {
            for &c in &adj[m] {
                let o = assign[c];
                if o != id {
                    let s = clusters[o].len();
                    if best.is_none_or(|(bs, bo)| s < bs || (s == bs && o < bo)) {
                        best = Some((s, o));
                    }
                }
            }
        }
        if let Some((_, o)) = best {
            let moved = std::mem::take(&mut clusters[id]);
            for &m in &moved {
                assign[m] = o;
            }
            clusters[o].extend(moved);
        }
    }

    let mut assign = compact(&assign);
    loop {
        assign = split_disconnected(&adj, &assign);
        match absorb_enclosed(level, &adj, &assign) {
            Some(next) => assign = compact(&next),
            None => break,
        }
    }

    let cell_of_base = level.cell_of_base.iter().map(|&c| assign[c]).collect();
    let coarse = MeshLevel::from_partition(level.base.clone(), cell_of_base, grouping, LevelLayout::Unstructured)?;
    Ok((coarse, assign))
}

fn cell_adjacency(level: &MeshLevel) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); level.num_cells()];
    for f in &level.interfaces {
        if let Some(nb) = f.neighbor {
            adj[f.owner].push(nb);
            adj[nb].push(f.owner);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    adj
}

/// Renumber labels `0..k` in order of first appearance.
fn compact(assign: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    assign
        .iter()
        .map(|&a| {
            let next = map.len();
            *map.entry(a).or_insert(next)
        })
        .collect()
}

fn split_disconnected(adj: &[Vec<usize>], assign: &[usize]) -> Vec<usize> {
    let n = assign.len();
    let mut out = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if out[s] != usize::MAX {
            continue;
        }
        out[s] = next;
        let mut stack = vec![s];
        while let Some(c) = stack.pop() {
            for &d in &adj[c] {
                if out[d] == usize::MAX && assign[d] == assign[s] {
                    out[d] = next;
                    stack.push(d);
                }
            }
        }
        next += 1;
    }
    out
}

/// Merge one cluster that touches a single neighbouring cluster and not the
/// domain boundary into that neighbour.
fn absorb_enclosed(level: &MeshLevel, adj: &[Vec<usize>], assign: &[usize]) -> Option<Vec<usize>> {
    let k = assign.iter().copied().max().map_or(0, |m| m + 1);
    let mut neighbours = vec![BTreeSet::new(); k];
    let mut on_boundary = vec![false; k];
    for (c, a) in adj.iter().enumerate() {
        for &d in a {
            if assign[d] != assign[c] {
                neighbours[assign[c]].insert(assign[d]);
            }
        }
        if level.cells[c].interfaces.iter().any(|&i| level.interfaces[i].is_boundary()) {
            on_boundary[assign[c]] = true;
        }
    }
    let victim = (0..k).find(|&g| !on_boundary[g] && neighbours[g].len() == 1)?;
    let host = *neighbours[victim].iter().next().unwrap();
    Some(assign.iter().map(|&a| if a == victim { host } else { a }).collect())
}

/// Build the base mesh of a family for `n_c` finest cells.
pub fn build_base(family: Family, n_c: usize) -> Result<BaseMesh> {
    match family {
        Family::Cartesian2d => build_cartesian_base(exact_root(n_c, 2)?, 2, &[1.0, 1.0]),
        Family::Cartesian3d => build_cartesian_base(exact_root(n_c, 3)?, 3, &[1.0, 1.0, 1.0]),
        Family::Voronoi => build_voronoi_base(exact_root(n_c, 2)?),
        Family::Reptile => build_reptile_base(reptile_generation(n_c)?),
    }
}

fn exact_root(n_c: usize, dim: u32) -> Result<usize> {
    let r = (n_c as f64).powf(1.0 / dim as f64).round() as usize;
    if r.pow(dim) != n_c {
        return Err(Error::InvalidParameter(format!("{n_c} cells is not a perfect {}", if dim == 2 { "square" } else { "cube" })));
    }
    Ok(r)
}

fn reptile_generation(n_c: usize) -> Result<usize> {
    let mut g = 0;
    let mut count = 2;
    while count < n_c {
        count *= 4;
        g += 1;
    }
    if count != n_c || g == 0 {
        return Err(Error::InvalidParameter(format!("{n_c} cells is not 2·4^g with g ≥ 1")));
    }
    Ok(g)
}

/// Build an `num_levels`-level hierarchy of the given family with `n_c`
/// cells on the finest level.
pub fn build_hierarchy(family: Family, n_c: usize, num_levels: usize, options: HierarchyOptions) -> Result<Hierarchy> {
    check_levels(family, n_c, num_levels)?;
    let base = Arc::new(build_base(family, n_c)?);
    hierarchy_on_base(family, base, num_levels, options)
}

/// Check that a family mesh with `n_c` cells supports `num_levels` levels.
pub fn check_levels(family: Family, n_c: usize, num_levels: usize) -> Result<()> {
    if num_levels < 2 {
        return Err(Error::InvalidParameter(format!("a hierarchy needs at least 2 levels, got {num_levels}")));
    }
    match family {
        Family::Cartesian2d | Family::Cartesian3d => {
            let n = exact_root(n_c, family.dim() as u32)?;
            let factor = 1usize << (num_levels - 1);
            if n % factor != 0 || n / factor < 2 {
                return Err(Error::InvalidParameter(format!(
                    "{num_levels} levels need the {n} cells per direction divisible by {factor} with at least 2 coarse cells"
                )));
            }
        }
        Family::Reptile => {
            let g = reptile_generation(n_c)?;
            if num_levels > g {
                return Err(Error::InvalidParameter(format!(
                    "rep-tile mesh of generation {g} supports at most {g} levels, got {num_levels}"
                )));
            }
        }
        Family::Voronoi => {
            exact_root(n_c, 2)?;
            let coarsest = n_c >> (2 * (num_levels - 1));
            if coarsest < 2 {
                return Err(Error::InvalidParameter(format!("{num_levels} levels would leave fewer than 2 coarse cells")));
            }
        }
    }
    Ok(())
}

/// Build a hierarchy on an existing base mesh.
pub fn hierarchy_on_base(family: Family, base: Arc<BaseMesh>, num_levels: usize, options: HierarchyOptions) -> Result<Hierarchy> {
    let grouping = options.grouping.unwrap_or_else(|| family.default_grouping());
    let mut levels = vec![MeshLevel::finest(base)?];
    while levels.len() < num_levels {
        let fine = levels.last().unwrap();
        let (coarse, _) = match family {
            Family::Voronoi => {
                let target = (fine.num_cells() / 4).max(2);
                agglomerate_clustered(fine, target, grouping)?
            }
            _ => agglomerate_structured(fine, grouping)?,
        };
        levels.push(coarse);
    }
    levels.reverse();
    Hierarchy::from_levels(Some(family), levels)
}

/// Two-level hierarchy whose coarse level reuses every fine cell.
pub fn identity_hierarchy(level: &MeshLevel) -> Result<Hierarchy> {
    let coarse =
        MeshLevel::from_partition(level.base.clone(), level.cell_of_base.clone(), InterfaceGrouping::PerPair, LevelLayout::Unstructured)?;
    Hierarchy::from_levels(None, vec![coarse, level.clone()])
}
