//! Dörfler marking and the solve → estimate → mark → refine loop.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::time::Instant;

use crate::assembly::{apply_dirichlet, assemble_load, assemble_stiffness, default_load_rule, ReducedSystem};
use crate::error::{FemError, Result};
use crate::estimator::{
    classify_elements, compute_indicators, total_estimator, ElementClass, ElementClassification, ElementIndicators,
    EstimatorForm, EstimatorInput, EstimatorSummary,
};
use crate::linalg::SparseOperator;
use crate::mesh::{bisect, build_crisscross_mesh, edge_topology, EdgeTable, Mesh};
use crate::multiplier::{compute_sigma_h, MultiplierPair};
use crate::problems::{energy_error, ProblemSpec};
use crate::quadrature::make_quad_rule;
use crate::spaces::{interpolate_p2, midpoint_weights, DofMap, P2Function};
use crate::vi_solver::{solve_obstacle, ActiveSet, DiscreteObstacle, SolveResult, SolverOptions};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Marking {
    /// Marked triangles in the order they were selected.
    Marked(Vec<usize>),
    /// No positive indicator left.
    Converged,
}

/// Greedy Dörfler marking on squared indicators: the shortest prefix of the triangles
/// sorted by decreasing value (ties by id) whose sum reaches `theta` times the total.
pub fn dorfler_mark_values(values: &[f64], theta: f64) -> Result<Marking> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(FemError::InvalidArgument(format!("theta must lie in (0, 1), got {theta}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(FemError::InvalidArgument("indicators must be finite".into()));
    }
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    if !(total > 0.0) {
        return Ok(Marking::Converged);
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let target = theta * total;
    let mut sum = 0.0;
    let mut marked = Vec::new();
    for t in order {
        marked.push(t);
        sum += values[t].max(0.0);
        if sum >= target {
            break;
        }
    }
    Ok(Marking::Marked(marked))
}

pub fn dorfler_mark(ind: &ElementIndicators, theta: f64) -> Result<Marking> {
    dorfler_mark_values(&ind.totals(), theta)
}

/// One row of the convergence history.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelRecord {
    pub level: usize,
    /// Number of interior (unknown) P2 dofs.
    pub n_dofs: usize,
    pub h: f64,
    /// `‖∇(u − u_h)‖`, NaN when the exact solution is unknown.
    pub error: f64,
    pub eta_total: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub eta4: f64,
    pub obst: f64,
    pub fb: f64,
    pub contact: f64,
    pub eff_index: f64,
    pub pdas_iters: usize,
    pub seconds: f64,
}

const HISTORY_HEADER: &str = "level,N,h,error,eta_total,eta1,eta2,eta3,eta4,obst,fb,contact,eff_index,pdas_iters,seconds";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceHistory {
    pub levels: Vec<LevelRecord>,
}

impl ConvergenceHistory {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{HISTORY_HEADER}")?;
        for r in &self.levels {
            writeln!(
                w,
                "{},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{},{:?}",
                r.level,
                r.n_dofs,
                r.h,
                r.error,
                r.eta_total,
                r.eta1,
                r.eta2,
                r.eta3,
                r.eta4,
                r.obst,
                r.fb,
                r.contact,
                r.eff_index,
                r.pdas_iters,
                r.seconds
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != HISTORY_HEADER {
            return Err(FemError::InvalidArgument(format!("unexpected history header '{header}'")));
        }
        let mut levels = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| FemError::InvalidArgument(format!("history line {}: {what}", k + 2));
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 15 {
                return Err(bad("expected 15 columns"));
            }
            let int = |i: usize| cols[i].trim().parse::<usize>().map_err(|_| bad(cols[i]));
            let real = |i: usize| cols[i].trim().parse::<f64>().map_err(|_| bad(cols[i]));
            levels.push(LevelRecord {
                level: int(0)?,
                n_dofs: int(1)?,
                h: real(2)?,
                error: real(3)?,
                eta_total: real(4)?,
                eta1: real(5)?,
                eta2: real(6)?,
                eta3: real(7)?,
                eta4: real(8)?,
                obst: real(9)?,
                fb: real(10)?,
                contact: real(11)?,
                eff_index: real(12)?,
                pdas_iters: int(13)?,
                seconds: real(14)?,
            });
        }
        Ok(Self { levels })
    }

    pub fn errors(&self) -> Vec<f64> {
        self.levels.iter().map(|r| r.error).collect()
    }

    pub fn dofs(&self) -> Vec<usize> {
        self.levels.iter().map(|r| r.n_dofs).collect()
    }
}

#[derive(Clone, Debug)]
pub struct AdaptConfig {
    pub theta: f64,
    pub max_dofs: usize,
    pub max_levels: usize,
    /// Rebuild the criss-cross mesh with doubled resolution instead of marking.
    pub uniform: bool,
    /// Subsquares per side of the first mesh.
    pub initial_n: usize,
    pub solver: SolverOptions,
    /// Use the estimator with the exact obstacle instead of its interpolant.
    pub full_estimator: bool,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            theta: 0.3,
            max_dofs: 200_000,
            max_levels: 40,
            uniform: false,
            initial_n: 1,
            solver: SolverOptions::default(),
            full_estimator: false,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(FemError::InvalidArgument(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        if self.max_levels == 0 {
            return Err(FemError::InvalidArgument("max_levels must be at least 1".into()));
        }
        if self.initial_n == 0 {
            return Err(FemError::InvalidArgument("initial_n must be at least 1".into()));
        }
        if self.solver.max_iterations == 0 {
            return Err(FemError::InvalidArgument("pdas max iterations must be at least 1".into()));
        }
        if !(self.solver.linear_tolerance > 0.0) {
            return Err(FemError::InvalidArgument("linear tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Assembled discrete obstacle problem on one mesh.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub mesh: Mesh,
    pub edges: EdgeTable,
    pub dofs: DofMap,
    pub stiffness: SparseOperator,
    pub load: Vec<f64>,
    pub system: ReducedSystem,
    pub chi_mid: Vec<f64>,
    pub chi_h: P2Function,
    pub omega: Vec<f64>,
}

impl Discretization {
    pub fn new(problem: &ProblemSpec, mesh: Mesh) -> Result<Self> {
        let edges = edge_topology(&mesh)?;
        let dofs = DofMap::new(&mesh, &edges);
        let stiffness = assemble_stiffness(&mesh, &dofs)?;
        let load = assemble_load(&problem.f, &mesh, &dofs, &default_load_rule())?;
        let system = apply_dirichlet(&stiffness, &load, &problem.g, &dofs)?;
        let chi_h = interpolate_p2(&problem.chi, &dofs)?;
        let chi_mid = (0..dofs.n_cr()).map(|k| chi_h.0[dofs.cr_to_p2(k)]).collect();
        let omega = midpoint_weights(&mesh, &dofs);
        Ok(Self { mesh, edges, dofs, stiffness, load, system, chi_mid, chi_h, omega })
    }

    pub fn obstacle(&self) -> DiscreteObstacle<'_> {
        DiscreteObstacle {
            stiffness: &self.stiffness,
            load: &self.load,
            system: &self.system,
            dofs: &self.dofs,
            chi_mid: &self.chi_mid,
            chi_h: &self.chi_h,
            omega: &self.omega,
        }
    }

    pub fn n_unknowns(&self) -> usize {
        self.dofs.free_dofs().len()
    }
}

/// Everything computed on one level, handed to the loop observer.
pub struct LevelState {
    pub level: usize,
    pub disc: Discretization,
    pub solve: SolveResult,
    pub multiplier: MultiplierPair,
    pub classification: ElementClassification,
    pub indicators: ElementIndicators,
    pub summary: EstimatorSummary,
    pub record: LevelRecord,
}

/// Solves and estimates on a single mesh.
pub fn solve_and_estimate(
    problem: &ProblemSpec,
    mesh: Mesh,
    level: usize,
    config: &AdaptConfig,
    warm_start: Option<&ActiveSet>,
) -> Result<LevelState> {
    let start = Instant::now();
    let disc = Discretization::new(problem, mesh)?;
    let solve = solve_obstacle(&disc.obstacle(), &config.solver, warm_start)?;
    let multiplier = compute_sigma_h(&solve, &disc.mesh, &disc.dofs)?;
    let classification = classify_elements(&solve.active, &disc.mesh, &disc.dofs);
    let rule = make_quad_rule(4)?;
    let form = if config.full_estimator {
        EstimatorForm::Full { chi_grad: &*problem.chi_grad }
    } else {
        EstimatorForm::Simplified
    };
    let indicators = compute_indicators(&EstimatorInput {
        mesh: &disc.mesh,
        edges: &disc.edges,
        dofs: &disc.dofs,
        u_h: &solve.u_h,
        multiplier: &multiplier,
        f: &*problem.f,
        chi: &*problem.chi,
        chi_h: &disc.chi_h,
        classification: &classification,
        rule: &rule,
        form,
    })?;
    let summary = total_estimator(&indicators);
    let error = match problem.exact_grad_u {
        Some(_) => energy_error(&solve.u_h, problem, &disc.mesh, &disc.dofs, &make_quad_rule(5)?)?,
        None => f64::NAN,
    };
    let record = LevelRecord {
        level,
        n_dofs: disc.n_unknowns(),
        h: disc.mesh.h_max(),
        error,
        eta_total: summary.eta_total,
        eta1: summary.eta1,
        eta2: summary.eta2,
        eta3: summary.eta3,
        eta4: summary.eta4,
        obst: summary.obst,
        fb: summary.fb,
        contact: summary.contact,
        eff_index: summary.eta_total / error,
        pdas_iters: solve.iterations,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok(LevelState { level, disc, solve, multiplier, classification, indicators, summary, record })
}

/// Initial active set on a refined mesh: midpoints that were already midpoints keep
/// their state, new ones are active when their parent triangle was in full contact.
fn transfer_active_set(prev: &LevelState, mesh: &Mesh, dofs: &DofMap) -> ActiveSet {
    let key = |p: [f64; 2]| (p[0].to_bits(), p[1].to_bits());
    let old_dofs = &prev.disc.dofs;
    let old: HashMap<_, bool> = (0..old_dofs.n_cr())
        .map(|k| {
            let d = old_dofs.cr_to_p2(k);
            (key(old_dofs.node(d)), prev.solve.active.contains(d))
        })
        .collect();
    let mut active = vec![false; dofs.n_dofs()];
    for t in 0..mesh.n_triangles() {
        let parent_contact = mesh.parents()[t]
            .is_some_and(|p| prev.classification.0.get(p) == Some(&ElementClass::Contact));
        let d = dofs.element_dofs(t);
        for &dof in &d[3..] {
            if !dofs.is_interior(dof) {
                continue;
            }
            match old.get(&key(dofs.node(dof))) {
                Some(&was) => active[dof] |= was,
                None => active[dof] |= parent_contact,
            }
        }
    }
    ActiveSet((0..dofs.n_dofs()).filter(|&d| active[d]).collect())
}

/// Runs the adaptive (or uniform) loop, calling `observer` after every level.
pub fn adaptive_loop_with<F>(problem: &ProblemSpec, config: &AdaptConfig, mut observer: F) -> Result<ConvergenceHistory>
where
    F: FnMut(&LevelState) -> Result<()>,
{
    config.validate()?;
    let at = |level: usize| move |e: FemError| FemError::AtLevel { level, source: Box::new(e) };
    let mut history = ConvergenceHistory::default();
    let mut n = config.initial_n;
    let mut mesh = build_crisscross_mesh(problem.domain, n)?;
    let mut warm: Option<ActiveSet> = None;
    for level in 0..config.max_levels {
        let state = solve_and_estimate(problem, mesh, level, config, warm.as_ref()).map_err(at(level))?;
        log::info!(
            "level {level}: N = {}, error = {:e}, eta = {:e}, pdas = {}",
            state.record.n_dofs,
            state.record.error,
            state.record.eta_total,
            state.record.pdas_iters
        );
        observer(&state).map_err(at(level))?;
        history.levels.push(state.record.clone());
        if state.record.n_dofs >= config.max_dofs || level + 1 == config.max_levels {
            break;
        }
        if config.uniform {
            n *= 2;
            mesh = build_crisscross_mesh(problem.domain, n)?;
            warm = None;
        } else {
            match dorfler_mark(&state.indicators, config.theta).map_err(at(level))? {
                Marking::Converged => break,
                Marking::Marked(m) => {
                    mesh = bisect(&state.disc.mesh, &m);
                    let edges = edge_topology(&mesh).map_err(at(level + 1))?;
                    let dofs = DofMap::new(&mesh, &edges);
                    warm = Some(transfer_active_set(&state, &mesh, &dofs));
                }
            }
        }
    }
    Ok(history)
}

pub fn adaptive_loop(problem: &ProblemSpec, config: &AdaptConfig) -> Result<ConvergenceHistory> {
    adaptive_loop_with(problem, config, |_| Ok(()))
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
