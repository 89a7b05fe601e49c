//! The two benchmark obstacle problems with known solutions, plus error evaluation.

use std::f64::consts::SQRT_2;
use std::fmt;

use crate::error::{FemError, Result};
use crate::mesh::{Domain, Mesh, Point};
use crate::quadrature::QuadRule;
use crate::spaces::{DofMap, P2Function};

pub type ScalarField = Box<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorField = Box<dyn Fn(Point) -> Point + Send + Sync>;

pub struct ProblemSpec {
    pub name: &'static str,
    pub domain: Domain,
    pub f: ScalarField,
    pub chi: ScalarField,
    pub chi_grad: VectorField,
    pub g: ScalarField,
    pub exact_u: Option<ScalarField>,
    pub exact_grad_u: Option<VectorField>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("exact", &self.exact_u.is_some())
            .finish_non_exhaustive()
    }
}

/// Square `(−1.5, 1.5)²`, `f = −2`, `χ = 0`; the solution is radial with contact
/// set the unit disc.
pub fn example1() -> ProblemSpec {
    let u = |p: Point| {
        let r = p[0].hypot(p[1]);
        if r >= 1.0 {
            0.5 * r * r - r.ln() - 0.5
        } else {
            0.0
        }
    };
    ProblemSpec {
        name: "ex1",
        domain: Domain::Square { lo: -1.5, hi: 1.5 },
        f: Box::new(|_| -2.0),
        chi: Box::new(|_| 0.0),
        chi_grad: Box::new(|_| [0.0, 0.0]),
        g: Box::new(u),
        exact_u: Some(Box::new(u)),
        exact_grad_u: Some(Box::new(|p: Point| {
            let r2 = p[0] * p[0] + p[1] * p[1];
            if r2 >= 1.0 {
                [p[0] - p[0] / r2, p[1] - p[1] / r2]
            } else {
                [0.0, 0.0]
            }
        })),
    }
}

/// Radius of the contact disc of [`example2`].
pub fn example2_r0() -> f64 {
    (SQRT_2 - 1.0) / SQRT_2
}

/// Diamond with corners `(±1, 0), (0, ±1)`, obstacle `χ = 1 − 2r²`.
pub fn example2() -> ProblemSpec {
    let r0 = example2_r0();
    let u = move |p: Point| {
        let r = p[0].hypot(p[1]);
        if r < r0 {
            1.0 - 2.0 * r * r
        } else {
            4.0 * r0 * (1.0 - r)
        }
    };
    ProblemSpec {
        name: "ex2",
        domain: Domain::Diamond,
        f: Box::new(move |p: Point| {
            let r = p[0].hypot(p[1]);
            if r < r0 {
                0.0
            } else {
                4.0 * r0 / r
            }
        }),
        chi: Box::new(|p: Point| 1.0 - 2.0 * (p[0] * p[0] + p[1] * p[1])),
        chi_grad: Box::new(|p: Point| [-4.0 * p[0], -4.0 * p[1]]),
        g: Box::new(u),
        exact_u: Some(Box::new(u)),
        exact_grad_u: Some(Box::new(move |p: Point| {
            let r = p[0].hypot(p[1]);
            if r < r0 {
                [-4.0 * p[0], -4.0 * p[1]]
            } else {
                [-4.0 * r0 * p[0] / r, -4.0 * r0 * p[1] / r]
            }
        })),
    }
}

pub fn problem_by_name(name: &str) -> Result<ProblemSpec> {
    match name {
        "ex1" => Ok(example1()),
        "ex2" => Ok(example2()),
        other => Err(FemError::InvalidArgument(format!("unknown problem '{other}' (expected ex1 or ex2)"))),
    }
}

/// `‖∇(u − u_h)‖_{L²(Ω)}` with the given rule on every triangle.
pub fn energy_error(u_h: &P2Function, spec: &ProblemSpec, mesh: &Mesh, dofs: &DofMap, rule: &QuadRule) -> Result<f64> {
    let grad = spec
        .exact_grad_u
        .as_ref()
        .ok_or_else(|| FemError::Unsupported(format!("problem {} has no exact gradient", spec.name)))?;
    if u_h.values().len() != dofs.n_dofs() || dofs.n_triangles() != mesh.n_triangles() {
        return Err(FemError::Inconsistent("discrete solution belongs to a different mesh".into()));
    }
    let mut sum = 0.0;
    for t in 0..mesh.n_triangles() {
        let geo = mesh.element_geometry(t);
        sum += rule.integrate(&geo, |b| {
            let g = grad(geo.to_cartesian(b));
            let gh = u_h.gradient(dofs, &geo, t, b);
            (g[0] - gh[0]).powi(2) + (g[1] - gh[1]).powi(2)
        });
    }
    Ok(sum.sqrt())
}

/// `rate_i = log(e_{i−1}/e_i) / log(h_{i−1}/h_i)` for `i ≥ 1`.
pub fn convergence_order(errors: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    if errors.len() != h.len() || errors.len() < 2 {
        return Err(FemError::InvalidArgument(
            "need at least two errors and as many mesh sizes".into(),
        ));
    }
    if errors.iter().chain(h).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(FemError::InvalidArgument("errors and mesh sizes must be positive".into()));
    }
    Ok((1..errors.len())
        .map(|i| (errors[i - 1] / errors[i]).ln() / (h[i - 1] / h[i]).ln())
        .collect())
}
