//! Argument handling for `hhomg-bench`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hhomg::bench::{convergence_study, run_sweep, write_report, ExperimentConfig, OutputSection, SolverSection};
use hhomg::interface::InterfaceSpace;
use hhomg::smoother::PatchKind;
use hhomg::transfer::TransferKind;
use hhomg::Family;

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_SOLVER: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "hhomg-bench", version, about = "HHO multigrid sweeps on agglomerated hierarchies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an iteration-count sweep and write CSV and markdown tables.
    Sweep(Box<SweepArgs>),
    /// Observed order of the single-level discretization under refinement.
    Convergence(ConvergenceArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Space {
    Ambient,
    NormalGradients,
}

impl From<Space> for InterfaceSpace {
    fn from(s: Space) -> Self {
        match s {
            Space::Ambient => InterfaceSpace::Ambient,
            Space::NormalGradients => InterfaceSpace::NormalGradients,
        }
    }
}

#[derive(Debug, Default, Args)]
pub struct SweepArgs {
    /// TOML experiment file; flags below override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub family: Option<Family>,
    #[arg(long, value_delimiter = ',')]
    pub nc: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub levels: Vec<usize>,
    /// fp, vp or ep.
    #[arg(long, value_delimiter = ',')]
    pub smoother: Vec<PatchKind>,
    /// ir or iu.
    #[arg(long, value_delimiter = ',')]
    pub prolongation: Vec<TransferKind>,
    #[arg(long, value_enum)]
    pub space: Option<Space>,
    /// Smoothing steps per level.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub no_csv: bool,
    #[arg(long)]
    pub no_markdown: bool,
    #[arg(long)]
    pub vtk: bool,
    #[arg(long)]
    pub matrix_market: bool,
    /// Run independent (n_c, k) entries concurrently.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[arg(long, default_value = "cartesian2d")]
    pub family: Family,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 4)]
    pub refinements: usize,
    #[arg(long, value_enum, default_value = "ambient")]
    pub space: Space,
}

fn replace<T: Clone>(target: &mut Vec<T>, from: &[T]) {
    if !from.is_empty() {
        *target = from.to_vec();
    }
}

impl SweepArgs {
    /// The experiment described by the config file (if any) and the flags.
    pub fn resolve(&self) -> hhomg::Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig {
                family: self.family.ok_or_else(|| hhomg::Error::Config("--family is required without --config".into()))?,
                nc: Vec::new(),
                k: vec![0],
                levels: vec![2],
                smoothers: vec![PatchKind::VertexStar],
                prolongations: TransferKind::ALL.to_vec(),
                space: InterfaceSpace::default(),
                parallel: false,
                solver: SolverSection::default(),
                output: OutputSection::default(),
            },
        };
        if let Some(f) = self.family {
            config.family = f;
        }
        replace(&mut config.nc, &self.nc);
        replace(&mut config.k, &self.k);
        replace(&mut config.levels, &self.levels);
        replace(&mut config.smoothers, &self.smoother);
        replace(&mut config.prolongations, &self.prolongation);
        if let Some(s) = self.space {
            config.space = s.into();
        }
        let s = &mut config.solver;
        s.m = self.m.unwrap_or(s.m);
        s.omega = self.omega.unwrap_or(s.omega);
        s.tol = self.tol.unwrap_or(s.tol);
        s.max_iter = self.max_iter.unwrap_or(s.max_iter);
        let o = &mut config.output;
        if let Some(out) = &self.out {
            o.dir = out.clone();
        }
        o.csv &= !self.no_csv;
        o.markdown &= !self.no_markdown;
        o.vtk |= self.vtk;
        o.matrix_market |= self.matrix_market;
        config.parallel |= self.parallel;
        config.validate()?;
        Ok(config)
    }
}

fn sweep(args: &SweepArgs) -> ExitCode {
    let config = match args.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let report = match run_sweep(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    for r in &report.rows {
        println!(
            "{} n_c={} k={} L={} {}/{}: {} iterations{}",
            r.family,
            r.nc,
            r.k,
            r.levels,
            r.smoother,
            r.prolongation,
            r.iters,
            if r.converged { "" } else { " (not converged)" }
        );
    }
    match write_report(&config, &report) {
        Ok(paths) => paths.iter().for_each(|p| log::info!("wrote {}", p.display())),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_SOLVER);
        }
    }
    for e in &report.errors {
        eprintln!("failed: {e}");
    }
    if report.all_converged() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_SOLVER)
    }
}

fn convergence(args: &ConvergenceArgs) -> ExitCode {
    match convergence_study(args.family, args.k, args.space.into(), args.refinements) {
        Ok(study) => {
            for ((nc, h), e) in study.nc.iter().zip(&study.h).zip(&study.errors) {
                println!("n_c={nc} h={h:.4e} error={e:.4e}");
            }
            println!("order {:.3}", study.order);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}

pub fn run(cli: &Cli) -> ExitCode {
    match &cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Convergence(a) => convergence(a),
    }
}

/// Parse `args`, mapping usage errors to the validation exit code.
pub fn main_with_args<I: IntoIterator<Item = String>>(args: I) -> ExitCode {
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            ExitCode::from(code)
        }
    }
}
