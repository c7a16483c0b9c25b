//! Experiment sweeps, result tables and discretization diagnostics.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hho::{assemble_level, CondensedLevel};
use crate::hierarchy::{build_base, build_hierarchy, check_levels, Family, HierarchyOptions};
use crate::interface::InterfaceSpace;
use crate::mesh::MeshLevel;
use crate::problem::Manufactured;
use crate::smoother::PatchKind;
use crate::solver::{AssembledHierarchy, SolverConfig};
use crate::sparse::{dot, write_vector_market, CsrMatrix, SparseCholesky};
use crate::transfer::TransferKind;

fn default_m() -> usize {
    5
}
fn default_omega() -> f64 {
    0.2
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    500
}
fn default_restart() -> usize {
    200
}
fn yes() -> bool {
    true
}
fn default_out() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_restart")]
    pub restart: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { m: default_m(), omega: default_omega(), tol: default_tol(), max_iter: default_max_iter(), restart: default_restart() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
    #[serde(default = "yes")]
    pub csv: bool,
    #[serde(default = "yes")]
    pub markdown: bool,
    #[serde(default)]
    pub vtk: bool,
    #[serde(default)]
    pub matrix_market: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_out(), csv: true, markdown: true, vtk: false, matrix_market: false }
    }
}

/// A sweep over mesh sizes, degrees, level counts, smoothers and
/// prolongations for one mesh family.
///
/// ```toml
/// family = "cartesian2d"
/// nc = [4096]
/// k = [0, 1]
/// levels = [2, 3]
/// smoothers = ["fp", "vp"]
/// prolongations = ["ir", "iu"]
///
/// [solver]
/// m = 5
/// omega = 0.2
///
/// [output]
/// dir = "results"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: Family,
    pub nc: Vec<usize>,
    pub k: Vec<usize>,
    pub levels: Vec<usize>,
    pub smoothers: Vec<PatchKind>,
    pub prolongations: Vec<TransferKind>,
    #[serde(default)]
    pub space: InterfaceSpace,
    /// Run independent `(n_c, k)` entries concurrently.
    #[serde(default)]
    pub parallel: bool,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Largest supported polynomial degree.
pub const MAX_DEGREE: usize = 4;

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn solver_config(&self, smoother: PatchKind, prolongation: TransferKind) -> SolverConfig {
        SolverConfig {
            smoother,
            prolongation,
            smoothing_steps: self.solver.m,
            omega: self.solver.omega,
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            restart: self.solver.restart,
        }
    }

    /// Check every enumeration and the mesh/level compatibility of each run.
    pub fn validate(&self) -> Result<()> {
        let empty = |name: &str, len: usize| {
            if len == 0 {
                Err(Error::Config(format!("'{name}' must not be empty")))
            } else {
                Ok(())
            }
        };
        empty("nc", self.nc.len())?;
        empty("k", self.k.len())?;
        empty("levels", self.levels.len())?;
        empty("smoothers", self.smoothers.len())?;
        empty("prolongations", self.prolongations.len())?;
        if let Some(&k) = self.k.iter().find(|&&k| k > MAX_DEGREE) {
            return Err(Error::Config(format!("degree {k} exceeds the supported maximum {MAX_DEGREE}")));
        }
        if self.smoothers.contains(&PatchKind::EdgeStar) && self.family.dim() != 3 {
            return Err(Error::Config(format!("edge-star smoothing needs a 3D family, got {}", self.family)));
        }
        let s = &self.solver;
        if s.m == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if !(s.omega > 0.0 && s.omega.is_finite()) {
            return Err(Error::Config(format!("omega must be positive, got {}", s.omega)));
        }
        if !(s.tol > 0.0 && s.tol < 1.0) {
            return Err(Error::Config(format!("tol must lie in (0, 1), got {}", s.tol)));
        }
        if s.max_iter == 0 || s.restart == 0 {
            return Err(Error::Config("max_iter and restart must be positive".into()));
        }
        let lmax = *self.levels.iter().max().unwrap();
        if let Some(&l) = self.levels.iter().find(|&&l| l < 2) {
            return Err(Error::Config(format!("level count {l} is below 2")));
        }
        for &nc in &self.nc {
            check_levels(self.family, nc, lmax).map_err(|e| Error::Config(format!("n_c = {nc}: {e}")))?;
        }
        Ok(())
    }
}

/// One solver run of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub family: Family,
    pub nc: usize,
    pub k: usize,
    #[serde(rename = "L")]
    pub levels: usize,
    pub smoother: String,
    pub prolongation: String,
    pub iters: usize,
    /// Finest first, `;`-separated.
    pub dofs_per_level: String,
    pub solve_seconds: f64,
    pub converged: bool,
}

/// Skeletal DOFs per level for one `(n_c, k)`, finest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofRow {
    pub family: Family,
    pub nc: usize,
    pub k: usize,
    pub dofs: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub dofs: Vec<DofRow>,
    pub errors: Vec<String>,
}

impl SweepReport {
    pub fn all_converged(&self) -> bool {
        self.errors.is_empty() && self.rows.iter().all(|r| r.converged)
    }

    pub fn iterations(&self, nc: usize, k: usize, smoother: PatchKind, prolongation: TransferKind) -> Vec<usize> {
        let mut rows: Vec<&SweepRow> = self
            .rows
            .iter()
            .filter(|r| r.nc == nc && r.k == k && r.smoother == smoother.label() && r.prolongation == prolongation.label())
            .collect();
        rows.sort_by_key(|r| r.levels);
        rows.iter().map(|r| r.iters).collect()
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(";")
}

/// DOF row, solver rows and per-run failures of one `(n_c, k)` entry.
type EntryOutcome = (DofRow, Vec<SweepRow>, Vec<String>);

fn run_entry(config: &ExperimentConfig, nc: usize, k: usize) -> Result<EntryOutcome> {
    let lmax = *config.levels.iter().max().unwrap();
    let hierarchy = build_hierarchy(config.family, nc, lmax, HierarchyOptions::default())?;
    let mut assembled = AssembledHierarchy::manufactured(hierarchy, k, config.space)?;
    let dof_row = DofRow { family: config.family, nc, k, dofs: assembled.dofs_per_level() };
    if config.output.vtk || config.output.matrix_market {
        emit_level_files(config, &assembled, nc, k)?;
    }
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut levels = config.levels.clone();
    levels.sort_unstable();
    levels.dedup();
    for &sm in &config.smoothers {
        for &pr in &config.prolongations {
            for &l in &levels {
                let cfg = config.solver_config(sm, pr);
                let (iters, secs, converged, dofs) = match assembled.solve(l, &cfg) {
                    Ok((_, rep)) => (rep.iterations, rep.timings.solve_seconds, rep.converged, rep.dofs_per_level),
                    Err(e) => {
                        errors.push(format!("{} n_c={nc} k={k} L={l} {sm}/{pr}: {e}", config.family));
                        (0, 0.0, false, Vec::new())
                    }
                };
                log::info!("{} n_c={nc} k={k} L={l} {sm}/{pr}: {iters} iterations", config.family);
                rows.push(SweepRow {
                    family: config.family,
                    nc,
                    k,
                    levels: l,
                    smoother: sm.label().into(),
                    prolongation: pr.label().into(),
                    iters,
                    dofs_per_level: join(&dofs),
                    solve_seconds: secs,
                    converged,
                });
            }
        }
    }
    Ok((dof_row, rows, errors))
}

fn emit_level_files(config: &ExperimentConfig, assembled: &AssembledHierarchy, nc: usize, k: usize) -> Result<()> {
    let dir = &config.output.dir;
    std::fs::create_dir_all(dir)?;
    let nl = assembled.num_levels();
    for (i, (mesh, level)) in assembled.hierarchy.levels.iter().zip(&assembled.levels).enumerate() {
        // level 1 is the finest
        let tag = format!("{}_nc{nc}_k{k}_level{}", config.family, nl - i);
        if config.output.vtk && k == config.k[0] {
            let diam: Vec<f64> = mesh.cells.iter().map(|c| c.diameter).collect();
            crate::vtk::write_level(&dir.join(format!("{tag}.vtk")), mesh, &[("diameter", &diam)])?;
        }
        if config.output.matrix_market {
            level.matrix.write_matrix_market(&dir.join(format!("A_{tag}.mtx")))?;
            write_vector_market(&dir.join(format!("b_{tag}.mtx")), &level.rhs)?;
        }
    }
    Ok(())
}

/// Run every combination of the sweep. Failed runs are recorded, not fatal.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    let entries: Vec<(usize, usize)> = config.nc.iter().flat_map(|&nc| config.k.iter().map(move |&k| (nc, k))).collect();
    let results: Vec<(usize, usize, Result<EntryOutcome>)> = if config.parallel {
        entries.par_iter().map(|&(nc, k)| (nc, k, run_entry(config, nc, k))).collect()
    } else {
        entries.iter().map(|&(nc, k)| (nc, k, run_entry(config, nc, k))).collect()
    };
    let mut report = SweepReport::default();
    for (nc, k, r) in results {
        match r {
            Ok((d, rows, errs)) => {
                report.dofs.push(d);
                report.rows.extend(rows);
                report.errors.extend(errs);
            }
            Err(e) => report.errors.push(format!("{} n_c={nc} k={k}: {e}", config.family)),
        }
    }
    Ok(report)
}

/// Write the iteration CSV, the DOF CSV and the markdown tables under the
/// configured output directory. Returns the written paths.
pub fn write_report(config: &ExperimentConfig, report: &SweepReport) -> Result<Vec<PathBuf>> {
    let dir = &config.output.dir;
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if config.output.csv {
        let path = dir.join("iterations.csv");
        let mut w = csv::Writer::from_path(&path)?;
        for r in &report.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        written.push(path);

        let path = dir.join("dofs.csv");
        let mut w = csv::Writer::from_path(&path)?;
        let nmax = report.dofs.iter().map(|d| d.dofs.len()).max().unwrap_or(0);
        let mut header = vec!["family".to_string(), "nc".into(), "k".into()];
        header.extend((1..=nmax).map(|l| format!("level{l}")));
        w.write_record(&header)?;
        for d in &report.dofs {
            let mut rec = vec![d.family.to_string(), d.nc.to_string(), d.k.to_string()];
            rec.extend((0..nmax).map(|i| d.dofs.get(i).map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        written.push(path);
    }
    if config.output.markdown {
        let path = dir.join("tables.md");
        std::fs::write(&path, render_markdown(config, report))?;
        written.push(path);
    }
    Ok(written)
}

/// Markdown rendering of the DOF and iteration tables.
pub fn render_markdown(config: &ExperimentConfig, report: &SweepReport) -> String {
    let mut s = String::new();
    let nmax = report.dofs.iter().map(|d| d.dofs.len()).max().unwrap_or(0);
    writeln!(s, "## Skeletal DOFs ({})\n", config.family).unwrap();
    write!(s, "| n_c | k |").unwrap();
    for l in 1..=nmax {
        write!(s, " ℓ={l} |").unwrap();
    }
    writeln!(s).unwrap();
    writeln!(s, "|---|---|{}", "---|".repeat(nmax)).unwrap();
    for d in &report.dofs {
        write!(s, "| {} | {} |", d.nc, d.k).unwrap();
        for i in 0..nmax {
            write!(s, " {} |", d.dofs.get(i).map(|v| v.to_string()).unwrap_or_default()).unwrap();
        }
        writeln!(s).unwrap();
    }

    let mut levels = config.levels.clone();
    levels.sort_unstable();
    levels.dedup();
    writeln!(s, "\n## FGMRES iterations ({})\n", config.family).unwrap();
    write!(s, "| n_c | k |").unwrap();
    let mut ncols = 0;
    for sm in &config.smoothers {
        for pr in &config.prolongations {
            for l in &levels {
                write!(s, " {sm}/{pr} L={l} |").unwrap();
                ncols += 1;
            }
        }
    }
    writeln!(s).unwrap();
    writeln!(s, "|---|---|{}", "---|".repeat(ncols)).unwrap();
    for d in &report.dofs {
        write!(s, "| {} | {} |", d.nc, d.k).unwrap();
        for sm in &config.smoothers {
            for pr in &config.prolongations {
                for &l in &levels {
                    let cell = report
                        .rows
                        .iter()
                        .find(|r| r.nc == d.nc && r.k == d.k && r.levels == l && r.smoother == sm.label() && r.prolongation == pr.label())
                        .map(|r| if r.converged { r.iters.to_string() } else { "-".into() })
                        .unwrap_or_default();
                    write!(s, " {cell} |").unwrap();
                }
            }
        }
        writeln!(s).unwrap();
    }
    if !report.errors.is_empty() {
        writeln!(s, "\n## Failures\n").unwrap();
        for e in &report.errors {
            writeln!(s, "- {e}").unwrap();
        }
    }
    s
}

/// Observed L² convergence of the manufactured solution under uniform
/// refinement.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStudy {
    pub family: Family,
    pub k: usize,
    pub nc: Vec<usize>,
    pub h: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares slope of `log e` against `log h`.
    pub order: f64,
}

fn refinement_sizes(family: Family, refinements: usize) -> Vec<usize> {
    (0..refinements)
        .map(|i| match family {
            Family::Cartesian2d => (4usize << i).pow(2),
            Family::Cartesian3d => (2usize << i).pow(3),
            Family::Voronoi => ((4usize << i) + 1).pow(2),
            Family::Reptile => 2 * 4usize.pow(i as u32 + 1),
        })
        .collect()
}

/// Solve directly on the fine mesh of a family `refinements` times, each
/// refinement halving the mesh size.
pub fn convergence_study(family: Family, k: usize, space: InterfaceSpace, refinements: usize) -> Result<ConvergenceStudy> {
    if refinements < 2 {
        return Err(Error::InvalidParameter("a convergence study needs at least 2 meshes".into()));
    }
    let nc = refinement_sizes(family, refinements);
    let mut h = Vec::new();
    let mut errors = Vec::new();
    for &n in &nc {
        let base = std::sync::Arc::new(build_base(family, n)?);
        let problem = Manufactured::new(base.dim, base.extents);
        let level = MeshLevel::finest(base)?;
        let cl = assemble_level(&level, k, space, &|p| problem.source(p))?;
        let lambda = SparseCholesky::new(&cl.matrix)?.solve(&cl.rhs);
        let bulk = cl.recover_bulk(&lambda);
        errors.push(cl.l2_error(&level, &bulk, &|p| problem.exact(p)));
        h.push(level.mesh_size());
    }
    let order = log_slope(&h, &errors);
    Ok(ConvergenceStudy { family, k, nc, h, errors, order })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Condition number of `M_ℓ` above which the skeleton inner product is
/// treated as near-singular.
pub const NEAR_SINGULAR_CONDITION: f64 = 1e2;

const SPECTRUM_ITERATIONS: usize = 500;
const SPECTRUM_SAMPLES: usize = 200;

/// Estimates of the largest generalized eigenvalue of `A λ = μ M λ` on one level.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LevelSpectrum {
    /// The estimate used for the scaling ratios.
    pub lambda_max: f64,
    /// Power iteration on `M⁻¹A`, if `M` could be factorized.
    pub power: Option<f64>,
    /// Largest of the sampled Rayleigh quotients `a(λ,λ)/⟨λ,λ⟩`.
    pub sampled_max: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `true` if `lambda_max` is `sampled_max`.
    pub sampled: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumScaling {
    /// Finest first.
    pub levels: Vec<LevelSpectrum>,
    /// `λ_max(ℓ) / λ_max(ℓ+1)` for consecutive levels, finest first.
    pub ratios: Vec<f64>,
    /// Estimated condition number of the finest skeleton mass matrix.
    pub mass_condition: f64,
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let s = dot(&v, &v).sqrt();
    v.into_iter().map(|x| x / s).collect()
}

/// `λ_max(M) / λ_min(M)` by power and inverse power iteration.
fn condition_estimate(m: &CsrMatrix, chol: &SparseCholesky, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hi = normalized(random_vector(&mut rng, m.nrows));
    let mut lo = hi.clone();
    for _ in 0..SPECTRUM_ITERATIONS / 2 {
        hi = normalized(m.apply(&hi));
        lo = normalized(chol.solve(&lo));
    }
    dot(&hi, &m.apply(&hi)) / dot(&lo, &m.apply(&lo))
}

fn power_lambda_max(a: &CsrMatrix, m: &CsrMatrix, chol: &SparseCholesky, seed: u64) -> (f64, bool, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = random_vector(&mut rng, a.nrows);
    let mut lambda = 0.0;
    for it in 1..=SPECTRUM_ITERATIONS {
        let ax = a.apply(&x);
        let new = dot(&x, &ax) / dot(&x, &m.apply(&x));
        if it > 5 && (new - lambda).abs() <= 1e-6 * new {
            return (new, true, it);
        }
        lambda = new;
        let y = chol.solve(&ax);
        let scale = y.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        x = y.into_iter().map(|v| v / scale).collect();
    }
    (lambda, false, SPECTRUM_ITERATIONS)
}

fn sampled_lambda_max(a: &CsrMatrix, m: &CsrMatrix, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..SPECTRUM_SAMPLES {
        let x = random_vector(&mut rng, a.nrows);
        let den = dot(&x, &m.apply(&x));
        if den > 0.0 {
            best = best.max(dot(&x, &a.apply(&x)) / den);
        }
    }
    best
}

/// Estimates of `λ_max(M_ℓ⁻¹ A_ℓ)` on every level, with `M_ℓ` the skeleton
/// inner product. `levels` is ordered coarsest first.
///
/// Power iteration is used unless the finest `M_ℓ` has condition number above
/// [`NEAR_SINGULAR_CONDITION`] or cannot be factorized, in which case every
/// level reports the largest sampled Rayleigh quotient.
pub fn spectrum_scaling_probe(levels: &[std::sync::Arc<CondensedLevel>], seed: u64) -> SpectrumScaling {
    let mut mass_condition = f64::INFINITY;
    let mut spectra = Vec::with_capacity(levels.len());
    for (i, l) in levels.iter().rev().enumerate() {
        let m = l.skeleton_mass();
        let chol = SparseCholesky::new(&m).ok();
        if i == 0 {
            if let Some(c) = &chol {
                mass_condition = condition_estimate(&m, c, seed);
            }
        }
        let power = chol.as_ref().map(|c| power_lambda_max(&l.matrix, &m, c, seed));
        let sampled_max = sampled_lambda_max(&l.matrix, &m, seed);
        let sampled = power.is_none() || mass_condition > NEAR_SINGULAR_CONDITION;
        let (p, converged, iterations) = power.unwrap_or((f64::NAN, false, 0));
        spectra.push(LevelSpectrum {
            lambda_max: if sampled { sampled_max } else { p },
            power: power.map(|p| p.0),
            sampled_max,
            converged: converged && !sampled,
            iterations: if sampled { SPECTRUM_SAMPLES } else { iterations },
            sampled,
        });
    }
    let ratios = spectra.windows(2).map(|w| w[0].lambda_max / w[1].lambda_max).collect();
    SpectrumScaling { levels: spectra, ratios, mass_condition }
}
