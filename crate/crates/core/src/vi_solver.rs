//! Primal-dual active set solution of the discrete obstacle problem.
//!
//! The discrete problem minimises `½ uᵀKu − Fᵀu` over interior P2 coefficients
//! subject to `u(z) ≥ χ(z)` at interior edge midpoints only. The generic layer
//! ([`solve_bound_qp`]) handles any SPD matrix with lower bounds on a subset of the
//! unknowns; [`solve_obstacle`] maps the finite element data onto it.

use crate::assembly::ReducedSystem;
use crate::error::{FemError, Result};
use crate::linalg::{Cholesky, CholeskyPattern, SparseOperator};
use crate::spaces::{DofMap, P2Function};

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Relative residual target of every inner linear solve.
    pub linear_tolerance: f64,
    /// Weight `c` of the active set prediction. `None` selects
    /// `10⁶ · max diag(K) / max ω_z` for obstacle problems and `10⁶ · max diag` for
    /// plain bound-constrained problems.
    pub complementarity_weight: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            linear_tolerance: 1e-12,
            complementarity_weight: None,
        }
    }
}

/// `min ½ xᵀAx − bᵀx` subject to `x[i] ≥ c` for every `(i, c)` in `bounds`.
#[derive(Clone, Copy, Debug)]
pub struct BoundQp<'a> {
    pub matrix: &'a SparseOperator,
    pub rhs: &'a [f64],
    pub bounds: &'a [(usize, f64)],
}

impl BoundQp<'_> {
    pub fn energy(&self, x: &[f64]) -> f64 {
        let ax = self.matrix.matvec(x);
        x.iter().zip(&ax).zip(self.rhs).map(|((xi, ai), bi)| 0.5 * xi * ai - bi * xi).sum()
    }
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// `b − A x` for every unknown.
    pub residual: Vec<f64>,
    /// Positions (into `bounds`) of the active constraints, increasing.
    pub active: Vec<usize>,
    pub iterations: usize,
    /// QP energy after every iteration.
    pub energies: Vec<f64>,
}

/// Next active set: positions with `λ_z + c (χ_z − u_z) > 0`.
///
/// `lambda` is the nonnegative multiplier of the lower bound, i.e. `−(b − A x)` at the
/// constrained unknown.
pub fn pdas_update(u: &[f64], lambda: &[f64], chi: &[f64], c: f64) -> Vec<usize> {
    assert!(c > 0.0, "complementarity weight must be positive");
    (0..u.len()).filter(|&k| lambda[k] + c * (chi[k] - u[k]) > 0.0).collect()
}

/// Primal-dual active set iteration, started from `initial_active` (positions into
/// `qp.bounds`). Stops as soon as the active set repeats.
pub fn solve_bound_qp(qp: BoundQp<'_>, initial_active: &[usize], options: &SolverOptions) -> Result<QpSolution> {
    let n = qp.matrix.dim();
    if qp.rhs.len() != n {
        return Err(FemError::InvalidArgument("right-hand side length differs from the operator".into()));
    }
    if let Some(&(i, c)) = qp.bounds.iter().find(|(i, c)| *i >= n || !c.is_finite()) {
        return Err(FemError::InvalidArgument(format!("invalid bound x[{i}] ≥ {c}")));
    }
    let weight = match options.complementarity_weight {
        Some(c) if c > 0.0 => c,
        Some(c) => return Err(FemError::InvalidArgument(format!("complementarity weight {c} must be positive"))),
        None => 1e6 * qp.matrix.diagonal().iter().fold(f64::MIN_POSITIVE, |m, &d| m.max(d)),
    };
    let idx: Vec<usize> = qp.bounds.iter().map(|b| b.0).collect();
    let chi: Vec<f64> = qp.bounds.iter().map(|b| b.1).collect();

    let pattern = CholeskyPattern::analyze(qp.matrix)?;
    let mut active: Vec<usize> = initial_active.to_vec();
    active.sort_unstable();
    active.dedup();
    if active.last().is_some_and(|&k| k >= qp.bounds.len()) {
        return Err(FemError::InvalidArgument("initial active set refers to a missing bound".into()));
    }
    let mut energies: Vec<f64> = Vec::new();
    let mut x = vec![0.0; n];

    for it in 1..=options.max_iterations {
        let mut fixed = vec![false; n];
        let mut fixed_value = vec![0.0; n];
        for &k in &active {
            fixed[idx[k]] = true;
            fixed_value[idx[k]] = chi[k];
        }
        let decoupled = qp.matrix.map_entries(|i, j, v| if i != j && (fixed[i] || fixed[j]) { 0.0 } else { v });
        let coupling = qp.matrix.matvec(&fixed_value);
        let rhs: Vec<f64> = (0..n)
            .map(|i| {
                if fixed[i] {
                    qp.matrix.get(i, i) * fixed_value[i]
                } else {
                    // A_ii · 0 contributes nothing, so the coupling is the off-diagonal part
                    qp.rhs[i] - coupling[i]
                }
            })
            .collect();
        let factor = Cholesky::factorize(&decoupled, &pattern)?;
        x = factor.solve_refined(&decoupled, &rhs, options.linear_tolerance)?;
        for i in 0..n {
            if fixed[i] {
                x[i] = fixed_value[i];
            }
        }
        let energy = qp.energy(&x);
        if let Some(&prev) = energies.last() {
            if it > 2 && energy > prev + 1e-12 * prev.abs().max(1.0) {
                log::debug!("active set iterate {it} raised the energy from {prev:e} to {energy:e}");
            }
        }
        energies.push(energy);

        let ax = qp.matrix.matvec(&x);
        let residual: Vec<f64> = qp.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let u: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let lambda: Vec<f64> = idx.iter().map(|&i| -residual[i]).collect();
        let next = pdas_update(&u, &lambda, &chi, weight);
        if next == active {
            return Ok(QpSolution {
                x,
                residual,
                active,
                iterations: it,
                energies,
            });
        }
        active = next;
    }
    Err(FemError::NonConvergence {
        iterations: options.max_iterations,
        last_iterate: Box::new(x),
    })
}

/// Interior midpoint dofs held at the obstacle, as P2 dof ids in increasing order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ActiveSet(pub Vec<usize>);

impl ActiveSet {
    pub fn contains(&self, dof: usize) -> bool {
        self.0.binary_search(&dof).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Everything the solver needs for one mesh.
#[derive(Clone, Copy, Debug)]
pub struct DiscreteObstacle<'a> {
    /// Full stiffness matrix (boundary dofs included).
    pub stiffness: &'a SparseOperator,
    /// Full load vector `(f, ψ_z)`.
    pub load: &'a [f64],
    pub system: &'a ReducedSystem,
    pub dofs: &'a DofMap,
    /// Obstacle values at interior midpoints, in CR order.
    pub chi_mid: &'a [f64],
    /// Any P2 function close to the obstacle (usually its interpolant). The iteration
    /// solves for `u_h − chi_h`, which keeps rounding in the residuals proportional
    /// to the gap rather than to `u_h`.
    pub chi_h: &'a P2Function,
    /// Lumped midpoint weights `ω_z`, in CR order.
    pub omega: &'a [f64],
}

impl DiscreteObstacle<'_> {
    /// `max(1, ‖load‖_∞)`, the scale of all solver tolerances.
    pub fn scale(&self) -> f64 {
        self.load.iter().fold(1.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub u_h: P2Function,
    pub active: ActiveSet,
    /// `r_z = (f, ψ_z) − a(u_h, ψ_z)` for every interior dof, in `free_dofs` order.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub energies: Vec<f64>,
}

impl SolveResult {
    pub fn residual(&self, dofs: &DofMap, dof: usize) -> Option<f64> {
        dofs.free_index(dof).map(|k| self.residuals[k])
    }
}

/// Solves the discrete obstacle problem. `warm_start` lists midpoint dofs to start
/// active; it may come from another mesh as long as the ids are valid here.
pub fn solve_obstacle(
    problem: &DiscreteObstacle<'_>,
    options: &SolverOptions,
    warm_start: Option<&ActiveSet>,
) -> Result<SolveResult> {
    let dofs = problem.dofs;
    if problem.chi_mid.len() != dofs.n_cr() || problem.omega.len() != dofs.n_cr() {
        return Err(FemError::Inconsistent("obstacle or weights do not match the CR dofs".into()));
    }
    if problem.chi_h.values().len() != dofs.n_dofs() {
        return Err(FemError::Inconsistent("obstacle interpolant does not match the P2 dofs".into()));
    }
    let record = &problem.system.record;
    let matrix = &problem.system.matrix;
    let shift: Vec<f64> = record.free.iter().map(|&d| problem.chi_h.0[d]).collect();
    let a_shift = matrix.matvec(&shift);
    let rhs: Vec<f64> = problem.system.rhs.iter().zip(&a_shift).map(|(b, a)| b - a).collect();
    let bounds: Vec<(usize, f64)> = (0..dofs.n_cr())
        .map(|k| {
            let free = dofs.free_index(dofs.cr_to_p2(k)).expect("interior midpoint is free");
            (free, problem.chi_mid[k] - shift[free])
        })
        .collect();
    let initial: Vec<usize> = match warm_start {
        Some(set) => (0..dofs.n_cr()).filter(|&k| set.contains(dofs.cr_to_p2(k))).collect(),
        None => Vec::new(),
    };
    let mut opts = options.clone();
    if opts.complementarity_weight.is_none() {
        let kmax = problem.stiffness.diagonal().iter().fold(f64::MIN_POSITIVE, |m, &d| m.max(d));
        let wmax = problem.omega.iter().fold(f64::MIN_POSITIVE, |m, &w| m.max(w));
        opts.complementarity_weight = Some(1e6 * kmax / wmax);
    }
    let qp = BoundQp { matrix, rhs: &rhs, bounds: &bounds };
    let sol = solve_bound_qp(qp, &initial, &opts)?;

    let interior: Vec<f64> = sol.x.iter().zip(&shift).map(|(w, c)| w + c).collect();
    let mut u_h = record.expand(&interior);
    for (k, &(free, _)) in bounds.iter().enumerate() {
        if sol.active.binary_search(&k).is_ok() {
            // exactly on the obstacle, whatever the rounding of w + chi_h
            u_h.0[record.free[free]] = problem.chi_mid[k];
        }
    }
    let active = ActiveSet(sol.active.iter().map(|&k| dofs.cr_to_p2(k)).collect());
    Ok(SolveResult {
        u_h,
        active,
        residuals: sol.residual,
        iterations: sol.iterations,
        energies: sol.energies,
    })
}

/// Worst violations of the discrete optimality conditions, each already divided by
/// its tolerance scale (`scale` or `scale²`).
#[derive(Clone, Copy, Debug, Default)]
pub struct KktReport {
    /// `max (χ(z) − u_h(z))⁺ / scale` over interior midpoints.
    pub infeasibility: f64,
    /// `max |r_z| / scale` over interior vertices.
    pub vertex_residual: f64,
    /// `max r_z⁺ / scale` over interior midpoints.
    pub midpoint_residual_sign: f64,
    /// `max |r_z (u_h(z) − χ(z))| / scale²` where `u_h(z) > χ(z)`.
    pub complementarity: f64,
}

impl KktReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.infeasibility <= tol
            && self.vertex_residual <= tol
            && self.midpoint_residual_sign <= tol
            && self.complementarity <= tol
    }
}

pub fn kkt_report(problem: &DiscreteObstacle<'_>, result: &SolveResult) -> KktReport {
    let dofs = problem.dofs;
    let scale = problem.scale();
    let mut rep = KktReport::default();
    let mut is_midpoint = vec![None; dofs.n_dofs()];
    for k in 0..dofs.n_cr() {
        is_midpoint[dofs.cr_to_p2(k)] = Some(k);
    }
    for (i, &d) in dofs.free_dofs().iter().enumerate() {
        let r = result.residuals[i];
        match is_midpoint[d] {
            None => rep.vertex_residual = rep.vertex_residual.max(r.abs() / scale),
            Some(k) => {
                let gap = result.u_h.0[d] - problem.chi_mid[k];
                rep.infeasibility = rep.infeasibility.max((-gap).max(0.0) / scale);
                rep.midpoint_residual_sign = rep.midpoint_residual_sign.max(r.max(0.0) / scale);
                if gap > 0.0 {
                    rep.complementarity = rep.complementarity.max((r * gap).abs() / (scale * scale));
                }
            }
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{apply_dirichlet, assemble_load, assemble_stiffness, default_load_rule};
    use crate::mesh::{build_crisscross_mesh, edge_topology, Domain};
    use crate::spaces::midpoint_weights;

    #[test]
    fn update_rule() {
        assert!(pdas_update(&[1.0, 2.0], &[0.0, 0.0], &[0.0, 0.0], 1.0).is_empty());
        assert_eq!(pdas_update(&[1.0, -1.0], &[0.0, 0.0], &[1.0, 0.0], 1.0), vec![1]);
        // λ = −3, c = 1, χ − u = 2 → −1 ≤ 0
        assert!(pdas_update(&[0.0], &[-3.0], &[2.0], 1.0).is_empty());
    }

    #[test]
    fn unconstrained_minimum_is_feasible() {
        let m = build_crisscross_mesh(Domain::Square { lo: -1.5, hi: 1.5 }, 2).unwrap();
        let e = edge_topology(&m).unwrap();
        let d = DofMap::new(&m, &e);
        let k = assemble_stiffness(&m, &d).unwrap();
        let load = assemble_load(|_| 0.0, &m, &d, &default_load_rule()).unwrap();
        let sys = apply_dirichlet(&k, &load, |_| 0.0, &d).unwrap();
        let chi = vec![-1.0; d.n_cr()];
        let chi_h = P2Function(vec![-1.0; d.n_dofs()]);
        let omega = midpoint_weights(&m, &d);
        let p = DiscreteObstacle {
            stiffness: &k,
            load: &load,
            system: &sys,
            dofs: &d,
            chi_mid: &chi,
            chi_h: &chi_h,
            omega: &omega,
        };
        let r = solve_obstacle(&p, &SolverOptions::default(), None).unwrap();
        assert!(r.active.is_empty());
        // solved for u − χ_h = 1, so zero only up to rounding
        assert!(r.u_h.values().iter().all(|&x| x.abs() < 1e-13));
        assert!(r.residuals.iter().all(|&x| x.abs() < 1e-13));
        assert_eq!(r.iterations, 1);
        assert!(kkt_report(&p, &r).holds(1e-10));
    }

    #[test]
    fn iteration_cap_reports_last_iterate() {
        let a = SparseOperator::from_triplets(2, vec![(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0)]);
        let b = [-1.0, -1.0];
        let bounds = [(0, 0.0), (1, 0.0)];
        let qp = BoundQp { matrix: &a, rhs: &b, bounds: &bounds };
        let opts = SolverOptions { max_iterations: 1, ..Default::default() };
        match solve_bound_qp(qp, &[], &opts) {
            Err(FemError::NonConvergence { iterations: 1, last_iterate }) => assert_eq!(last_iterate.len(), 2),
            other => panic!("expected non-convergence, got {other:?}"),
        }
        let sol = solve_bound_qp(qp, &[], &SolverOptions::default()).unwrap();
        assert_eq!(sol.x, vec![0.0, 0.0]);
        assert_eq!(sol.active, vec![0, 1]);
    }

    #[test]
    fn rejects_bad_bounds() {
        let a = SparseOperator::from_triplets(1, vec![(0, 0, 1.0)]);
        let qp = BoundQp { matrix: &a, rhs: &[1.0], bounds: &[(3, 0.0)] };
        assert!(solve_bound_qp(qp, &[], &SolverOptions::default()).is_err());
        let qp = BoundQp { matrix: &a, rhs: &[1.0], bounds: &[(0, f64::NAN)] };
        assert!(solve_bound_qp(qp, &[], &SolverOptions::default()).is_err());
    }
}
