//! Discrete Lagrange multiplier in the Crouzeix–Raviart space.
//!
//! `σ_h ∈ V_nc` is defined by `⟨σ_h, v⟩_h = (f, Π_h v) − a(u_h, Π_h v)` for all CR
//! functions `v`. Testing with the CR basis function of an interior midpoint `z`
//! gives `ω_z σ_h(z) = r_z`, so the multiplier is read off the solver residuals.

use crate::error::{FemError, Result};
use crate::mesh::Mesh;
use crate::spaces::{midpoint_weights, CRFunction, DofMap};
use crate::vi_solver::SolveResult;

#[derive(Clone, Debug)]
pub struct MultiplierPair {
    pub sigma_h: CRFunction,
    /// Elementwise mean of `σ_h`.
    pub sigma_bar: Vec<f64>,
    /// `ω_z = Σ_{T ∋ z} |T|/3`, in CR order.
    pub omega: Vec<f64>,
}

pub fn compute_sigma_h(result: &SolveResult, mesh: &Mesh, dofs: &DofMap) -> Result<MultiplierPair> {
    if result.u_h.values().len() != dofs.n_dofs() || dofs.n_triangles() != mesh.n_triangles() {
        return Err(FemError::Inconsistent("solve result belongs to a different mesh".into()));
    }
    let omega = midpoint_weights(mesh, dofs);
    let mut sigma = Vec::with_capacity(dofs.n_cr());
    for (k, &w) in omega.iter().enumerate() {
        if !(w > 0.0) {
            return Err(FemError::DegenerateElement { element: dofs.cr_edge(k), area: w });
        }
        let r = result.residual(dofs, dofs.cr_to_p2(k)).expect("interior midpoint has a residual");
        sigma.push(r / w);
    }
    let sigma_h = CRFunction(sigma);
    let sigma_bar = sigma_bar(&sigma_h, mesh, dofs);
    Ok(MultiplierPair { sigma_h, sigma_bar, omega })
}

/// `σ̄_h|_T = |T|⁻¹ ∫_T σ_h`, the mean of the three midpoint values (boundary
/// midpoints count as zero).
pub fn sigma_bar(sigma_h: &CRFunction, mesh: &Mesh, dofs: &DofMap) -> Vec<f64> {
    (0..mesh.n_triangles())
        .map(|t| sigma_h.local(dofs, t).iter().sum::<f64>() / 3.0)
        .collect()
}

/// Largest violations of the sign and support properties of the multiplier.
#[derive(Clone, Copy, Debug, Default)]
pub struct MultiplierReport {
    /// `max σ_h(z)⁺`.
    pub positive_sigma: f64,
    /// `max |σ_h(z)|` over midpoints with `u_h(z) − χ(z) > gap_tol`.
    pub sigma_off_contact: f64,
    /// `max σ̄_h⁺`.
    pub positive_sigma_bar: f64,
    /// `max |σ̄_h|` over non-contact triangles.
    pub sigma_bar_non_contact: f64,
    /// Number of triangles with a boundary midpoint (their mean includes a zero).
    pub boundary_triangles: usize,
}

/// Checks the multiplier against `u_h` and the obstacle midpoint values (CR order).
/// Non-contact triangles are those without active midpoints.
pub fn multiplier_report(
    pair: &MultiplierPair,
    result: &SolveResult,
    chi_mid: &[f64],
    dofs: &DofMap,
    gap_tol: f64,
) -> MultiplierReport {
    let mut rep = MultiplierReport::default();
    for (k, &s) in pair.sigma_h.values().iter().enumerate() {
        rep.positive_sigma = rep.positive_sigma.max(s);
        if result.u_h.0[dofs.cr_to_p2(k)] - chi_mid[k] > gap_tol {
            rep.sigma_off_contact = rep.sigma_off_contact.max(s.abs());
        }
    }
    for (t, &sb) in pair.sigma_bar.iter().enumerate() {
        rep.positive_sigma_bar = rep.positive_sigma_bar.max(sb);
        let cr = dofs.element_cr(t);
        if cr.iter().any(Option::is_none) {
            rep.boundary_triangles += 1;
        }
        let any_active = cr.iter().flatten().any(|&k| result.active.contains(dofs.cr_to_p2(k)));
        if !any_active {
            rep.sigma_bar_non_contact = rep.sigma_bar_non_contact.max(sb.abs());
        }
    }
    rep
}
