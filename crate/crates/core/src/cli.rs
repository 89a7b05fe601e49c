//! Command-line driver: runs a uniform or adaptive study and writes its artifacts.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use crate::adapt::{adaptive_loop_with, AdaptConfig, ConvergenceHistory};
use crate::error::{FemError, Result};
use crate::problems::{convergence_order, problem_by_name};
use crate::vi_solver::SolverOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Uniform,
    Adaptive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProblemId {
    Ex1,
    Ex2,
}

impl ProblemId {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemId::Ex1 => "ex1",
            ProblemId::Ex2 => "ex2",
        }
    }

    /// Subsquares per side of the first uniform mesh (`h = 3/4` on the square).
    pub fn uniform_initial_n(&self) -> usize {
        match self {
            ProblemId::Ex1 | ProblemId::Ex2 => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "obstacle-afem", version, about = "Quadratic finite elements for the obstacle problem")]
pub struct Cli {
    #[arg(long, value_enum, default_value = "ex1")]
    pub problem: ProblemId,
    #[arg(long, value_enum, default_value = "adaptive")]
    pub mode: Mode,
    /// Dörfler bulk parameter, strictly between 0 and 1.
    #[arg(long, default_value_t = 0.3)]
    pub theta: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_dofs: usize,
    #[arg(long, default_value_t = 40)]
    pub max_levels: usize,
    /// Subsquares per side of the first mesh (default: 1 adaptive, problem-specific uniform).
    #[arg(long)]
    pub initial_n: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Write `indicators_L.csv` for every level.
    #[arg(long)]
    pub dump_indicators: bool,
    /// Write `mesh_L.txt` for every level.
    #[arg(long)]
    pub dump_mesh: bool,
    #[arg(long, default_value_t = 50)]
    pub pdas_max_iters: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub lin_tol: f64,
    /// Use the estimator with the exact obstacle.
    #[arg(long)]
    pub full_estimator: bool,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub problem: ProblemId,
    pub mode: Mode,
    pub out: PathBuf,
    pub dump_indicators: bool,
    pub dump_mesh: bool,
    pub adapt: AdaptConfig,
}

impl Cli {
    pub fn into_config(self) -> Result<RunConfig> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(FemError::InvalidArgument(format!("--theta must lie in (0, 1), got {}", self.theta)));
        }
        if self.max_levels == 0 {
            return Err(FemError::InvalidArgument("--max-levels must be at least 1".into()));
        }
        if self.pdas_max_iters == 0 {
            return Err(FemError::InvalidArgument("--pdas-max-iters must be at least 1".into()));
        }
        if !(self.lin_tol > 0.0 && self.lin_tol < 1.0) {
            return Err(FemError::InvalidArgument(format!("--lin-tol must lie in (0, 1), got {}", self.lin_tol)));
        }
        if self.initial_n == Some(0) {
            return Err(FemError::InvalidArgument("--initial-n must be at least 1".into()));
        }
        let initial_n = self.initial_n.unwrap_or(match self.mode {
            Mode::Uniform => self.problem.uniform_initial_n(),
            Mode::Adaptive => 1,
        });
        Ok(RunConfig {
            problem: self.problem,
            mode: self.mode,
            out: self.out,
            dump_indicators: self.dump_indicators,
            dump_mesh: self.dump_mesh,
            adapt: AdaptConfig {
                theta: self.theta,
                max_dofs: self.max_dofs,
                max_levels: self.max_levels,
                uniform: self.mode == Mode::Uniform,
                initial_n,
                solver: SolverOptions {
                    max_iterations: self.pdas_max_iters,
                    linear_tolerance: self.lin_tol,
                    complementarity_weight: None,
                },
                full_estimator: self.full_estimator,
            },
        })
    }
}

impl RunConfig {
    pub fn echo(&self) -> String {
        let a = &self.adapt;
        let mut s = String::new();
        let _ = writeln!(s, "problem = {}", self.problem.as_str());
        let _ = writeln!(s, "mode = {}", if a.uniform { "uniform" } else { "adaptive" });
        let _ = writeln!(s, "theta = {}", a.theta);
        let _ = writeln!(s, "marking = sum of marked eta_T^2 >= theta * sum of all eta_T^2");
        let _ = writeln!(s, "max_dofs = {}", a.max_dofs);
        let _ = writeln!(s, "max_levels = {}", a.max_levels);
        let _ = writeln!(s, "initial_n = {}", a.initial_n);
        let _ = writeln!(s, "estimator = {}", if a.full_estimator { "full" } else { "simplified" });
        let _ = writeln!(s, "pdas_max_iters = {}", a.solver.max_iterations);
        let _ = writeln!(s, "lin_tol = {:e}", a.solver.linear_tolerance);
        let _ = writeln!(s, "dofs_counted = interior P2 dofs");
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "dump_indicators = {}", self.dump_indicators);
        let _ = writeln!(s, "dump_mesh = {}", self.dump_mesh);
        s
    }
}

/// Aligned error table. Uniform runs report the order in `h`, adaptive runs the order
/// in `N^{-1/2}` (so that optimal quadratic convergence reads 2 in both).
pub fn format_table(history: &ConvergenceHistory, uniform: bool) -> Result<String> {
    let errors = history.errors();
    let scale: Vec<f64> = if uniform {
        history.levels.iter().map(|r| r.h).collect()
    } else {
        history.levels.iter().map(|r| (r.n_dofs as f64).powf(-0.5)).collect()
    };
    let orders = if errors.len() >= 2 && errors.iter().all(|e| e.is_finite()) {
        convergence_order(&errors, &scale)?
    } else {
        Vec::new()
    };
    let mut s = String::new();
    let _ = writeln!(s, "{:>12}  {:>9}  {:>20}  {:>14}", "h", "N", "||grad(u-u_h)||", "order of conv.");
    for (i, r) in history.levels.iter().enumerate() {
        let order = match i.checked_sub(1).and_then(|k| orders.get(k)) {
            Some(o) => format!("{o:.3}"),
            None => "--".into(),
        };
        let _ = writeln!(s, "{:>12.6}  {:>9}  {:>20.15}  {:>14}", r.h, r.n_dofs, r.error, order);
    }
    Ok(s)
}

pub fn run(config: &RunConfig) -> Result<ConvergenceHistory> {
    config.adapt.validate()?;
    let problem = problem_by_name(config.problem.as_str())?;
    fs::create_dir_all(&config.out)?;
    fs::write(config.out.join("config.echo.txt"), config.echo())?;
    let history = adaptive_loop_with(&problem, &config.adapt, |state| {
        if config.dump_indicators {
            let f = File::create(config.out.join(format!("indicators_{}.csv", state.level)))?;
            let mut w = BufWriter::new(f);
            state.indicators.write_csv(&mut w)?;
            w.flush()?;
        }
        if config.dump_mesh {
            let f = File::create(config.out.join(format!("mesh_{}.txt", state.level)))?;
            let mut w = BufWriter::new(f);
            state.disc.mesh.write_dump(&mut w)?;
            w.flush()?;
        }
        Ok(())
    })?;
    let mut w = BufWriter::new(File::create(config.out.join("history.csv"))?);
    history.write_csv(&mut w)?;
    w.flush()?;
    fs::write(config.out.join("table.txt"), format_table(&history, config.adapt.uniform)?)?;
    Ok(history)
}
