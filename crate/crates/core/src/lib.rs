//! Geometric multigrid for mixed-order hybrid high-order (HHO) discretizations
//! of the Poisson problem on agglomeration-based polytopal mesh hierarchies.
//!
//! The crate is organised bottom-up:
//!
//! * [`base`] builds the fine polytopal meshes (Cartesian 2D/3D, L-tromino
//!   rep-tiles, centroidal duals of triangulated grids).
//! * [`mesh`] and [`hierarchy`] agglomerate those meshes into nested levels
//!   and derive level-wise interfaces, edges and vertices.
//! * [`quadrature`] provides composite rules over agglomerated entities.
//! * [`interface`] builds the minimal interface polynomial spaces.
//! * [`hho`] assembles the statically condensed skeletal systems.
//! * [`transfer`], [`smoother`], [`multigrid`] and [`krylov`] make up the
//!   solver, and [`solver`] wires them together.
//! * [`bench`] drives parameter sweeps and writes the result tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod base;
pub mod bench;
pub mod error;
pub mod geometry;
pub mod hho;
pub mod hierarchy;
pub mod interface;
pub mod krylov;
pub mod mesh;
pub mod multigrid;
pub mod poly;
pub mod problem;
pub mod quadrature;
pub mod smoother;
pub mod solver;
pub mod sparse;
pub mod transfer;
pub mod vtk;

pub use error::{Error, Result};
pub use geometry::Point;
pub use hierarchy::{Family, Hierarchy, HierarchyOptions};
pub use mesh::{InterfaceGrouping, MeshLevel};
