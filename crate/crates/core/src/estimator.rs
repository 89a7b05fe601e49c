//! Residual a posteriori error indicators for the quadratic obstacle discretisation.
//!
//! Per triangle `T` (with `h_T` its diameter):
//!
//! * `eta1² = h_T² ‖Δu_h + f − σ_h‖²_T`
//! * `eta2² = Σ_{e ⊂ ∂T interior} (h_e / 2) ‖[[∇u_h]]‖²_e` (each edge split evenly)
//! * `eta3² = h_T² ‖σ_h − σ̄_h‖²_T`
//! * `eta4² = h_T² ‖f − f̄_T‖²_T`
//! * `‖∇(χ_h − u_h)⁺‖²_T`
//! * `−∫_T σ̄_h (χ_h − u_h)⁻` on free-boundary triangles
//! * `−∫_T σ̄_h (χ_h − u_h)⁺` on contact triangles
//!
//! Positive/negative parts are evaluated pointwise at the quadrature nodes.

use crate::error::{FemError, Result};
use crate::mesh::{EdgeTable, Mesh, Point};
use crate::multiplier::MultiplierPair;
use crate::quadrature::QuadRule;
use crate::spaces::{DofMap, P2Function};
use crate::vi_solver::ActiveSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementClass {
    Contact,
    NonContact,
    FreeBoundary,
}

impl ElementClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            ElementClass::Contact => "contact",
            ElementClass::NonContact => "non-contact",
            ElementClass::FreeBoundary => "free-boundary",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElementClassification(pub Vec<ElementClass>);

/// Classifies triangles by how many of their midpoints are active. Boundary midpoints
/// carry no constraint and count as inactive.
pub fn classify_elements(active: &ActiveSet, mesh: &Mesh, dofs: &DofMap) -> ElementClassification {
    ElementClassification(
        (0..mesh.n_triangles())
            .map(|t| {
                let d = dofs.element_dofs(t);
                let n = (3..6).filter(|&i| active.contains(d[i])).count();
                match n {
                    3 => ElementClass::Contact,
                    0 => ElementClass::NonContact,
                    _ => ElementClass::FreeBoundary,
                }
            })
            .collect(),
    )
}

/// Which obstacle terms to use.
#[derive(Clone, Copy)]
pub enum EstimatorForm<'a> {
    /// Terms built from the interpolated obstacle `χ_h` only; requires `χ = χ_h` on
    /// the boundary, which is checked.
    Simplified,
    /// Terms with the exact obstacle: `‖∇(χ − u_h)⁺‖²`, `−∫ σ̄_h (u_h − χ_h)` on free
    /// boundary triangles and `−∫ σ̄_h (χ_h − min{u_h, χ})` on contact and free
    /// boundary triangles.
    Full { chi_grad: &'a dyn Fn(Point) -> Point },
}

pub struct EstimatorInput<'a> {
    pub mesh: &'a Mesh,
    pub edges: &'a EdgeTable,
    pub dofs: &'a DofMap,
    pub u_h: &'a P2Function,
    pub multiplier: &'a MultiplierPair,
    pub f: &'a dyn Fn(Point) -> f64,
    pub chi: &'a dyn Fn(Point) -> f64,
    pub chi_h: &'a P2Function,
    pub classification: &'a ElementClassification,
    pub rule: &'a QuadRule,
    pub form: EstimatorForm<'a>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IndicatorRow {
    pub eta1_sq: f64,
    pub eta2_sq: f64,
    pub eta3_sq: f64,
    pub eta4_sq: f64,
    pub obst_grad_sq: f64,
    pub fb_term: f64,
    pub contact_term: f64,
    pub total_sq: f64,
}

#[derive(Clone, Debug)]
pub struct ElementIndicators {
    pub rows: Vec<IndicatorRow>,
    pub classes: Vec<ElementClass>,
}

impl ElementIndicators {
    pub fn totals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.total_sq).collect()
    }

    /// CSV: `element,class,eta1_sq,…,total_sq`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "element,class,eta1_sq,eta2_sq,eta3_sq,eta4_sq,obst_grad_sq,fb_term,contact_term,total_sq")?;
        for (t, (r, c)) in self.rows.iter().zip(&self.classes).enumerate() {
            writeln!(
                w,
                "{t},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
                c.as_str(),
                r.eta1_sq,
                r.eta2_sq,
                r.eta3_sq,
                r.eta4_sq,
                r.obst_grad_sq,
                r.fb_term,
                r.contact_term,
                r.total_sq
            )?;
        }
        Ok(())
    }
}

fn check_inputs(inp: &EstimatorInput<'_>) -> Result<()> {
    let nt = inp.mesh.n_triangles();
    let ok = inp.dofs.n_triangles() == nt
        && inp.edges.triangle_edges.len() == nt
        && inp.u_h.values().len() == inp.dofs.n_dofs()
        && inp.chi_h.values().len() == inp.dofs.n_dofs()
        && inp.multiplier.sigma_h.values().len() == inp.dofs.n_cr()
        && inp.multiplier.sigma_bar.len() == nt
        && inp.classification.0.len() == nt;
    if ok {
        Ok(())
    } else {
        Err(FemError::Inconsistent("estimator inputs come from different meshes".into()))
    }
}

/// Verifies `χ = χ_h` along the boundary (sampled at the quarter points of every
/// boundary edge).
fn check_boundary_trace(inp: &EstimatorInput<'_>) -> Result<()> {
    let (mesh, edges) = (inp.mesh, inp.edges);
    for e in 0..edges.len() {
        if edges.interior[e] {
            continue;
        }
        let t = edges.adjacent[e].0;
        let geo = mesh.element_geometry(t);
        let [a, b] = edges.edges[e];
        let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
        for s in [0.25, 0.75] {
            let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
            let diff = (inp.chi)(x) - inp.chi_h.eval(inp.dofs, t, geo.to_barycentric(x));
            if diff.abs() > 1e-10 * (1.0 + (inp.chi)(x).abs()) {
                return Err(FemError::Inconsistent(format!(
                    "obstacle differs from its interpolant on the boundary at ({}, {})",
                    x[0], x[1]
                )));
            }
        }
    }
    Ok(())
}

pub fn compute_indicators(inp: &EstimatorInput<'_>) -> Result<ElementIndicators> {
    check_inputs(inp)?;
    if matches!(inp.form, EstimatorForm::Simplified) {
        check_boundary_trace(inp)?;
    }
    let (mesh, dofs, edges) = (inp.mesh, inp.dofs, inp.edges);
    let sigma = &inp.multiplier.sigma_h;
    let classes = &inp.classification.0;
    let nt = mesh.n_triangles();
    let mut rows = vec![IndicatorRow::default(); nt];

    for (t, row) in rows.iter_mut().enumerate() {
        let geo = mesh.element_geometry(t);
        let h2 = geo.diameter * geo.diameter;
        let lap = inp.u_h.laplacian(dofs, &geo, t);
        let sbar = inp.multiplier.sigma_bar[t];
        let class = classes[t];

        let pts: Vec<Point> = inp.rule.points.iter().map(|&b| geo.to_cartesian(b)).collect();
        let mut fv = Vec::with_capacity(pts.len());
        for &x in &pts {
            let v = (inp.f)(x);
            if !v.is_finite() {
                return Err(FemError::Evaluation { what: "load", point: x });
            }
            fv.push(v);
        }
        let fbar: f64 = fv.iter().zip(&inp.rule.weights).map(|(v, w)| v * w).sum();

        let (mut e1, mut e3, mut e4, mut og, mut neg, mut pos) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (q, (&b, &w)) in inp.rule.points.iter().zip(&inp.rule.weights).enumerate() {
            let s = sigma.eval(dofs, t, b);
            e1 += w * (lap + fv[q] - s).powi(2);
            e3 += w * (s - sbar).powi(2);
            e4 += w * (fv[q] - fbar).powi(2);

            let uh = inp.u_h.eval(dofs, t, b);
            let chih = inp.chi_h.eval(dofs, t, b);
            let gu = inp.u_h.gradient(dofs, &geo, t, b);
            match inp.form {
                EstimatorForm::Simplified => {
                    let d = chih - uh;
                    if d > 0.0 {
                        let gc = inp.chi_h.gradient(dofs, &geo, t, b);
                        og += w * ((gc[0] - gu[0]).powi(2) + (gc[1] - gu[1]).powi(2));
                        pos += w * d;
                    } else {
                        neg += w * (-d);
                    }
                }
                EstimatorForm::Full { chi_grad } => {
                    let chi = (inp.chi)(pts[q]);
                    if chi - uh > 0.0 {
                        let gc = chi_grad(pts[q]);
                        og += w * ((gc[0] - gu[0]).powi(2) + (gc[1] - gu[1]).powi(2));
                    }
                    // ∫ (u_h − χ_h) and ∫ (χ_h − min{u_h, χ})
                    neg += w * (uh - chih);
                    pos += w * (chih - uh.min(chi));
                }
            }
        }
        let a = geo.area;
        row.eta1_sq = h2 * a * e1;
        row.eta3_sq = h2 * a * e3;
        row.eta4_sq = h2 * a * e4;
        row.obst_grad_sq = a * og;
        match inp.form {
            EstimatorForm::Simplified => {
                if class == ElementClass::FreeBoundary {
                    row.fb_term = -sbar * a * neg;
                }
                if class == ElementClass::Contact {
                    row.contact_term = -sbar * a * pos;
                }
            }
            EstimatorForm::Full { .. } => {
                if class == ElementClass::FreeBoundary {
                    row.fb_term = -sbar * a * neg;
                }
                if class != ElementClass::NonContact {
                    row.contact_term = -sbar * a * pos;
                }
            }
        }
    }

    // gradient jumps, two-point Gauss per interior edge
    let g = 0.5 / 3f64.sqrt();
    for e in 0..edges.len() {
        let (t0, Some(t1)) = edges.adjacent[e] else { continue };
        let n = edges.normal(mesh, e);
        let [a, b] = edges.edges[e];
        let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
        let (g0, g1) = (mesh.element_geometry(t0), mesh.element_geometry(t1));
        let mut int = 0.0;
        for s in [0.5 - g, 0.5 + g] {
            let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
            let d0 = inp.u_h.gradient(dofs, &g0, t0, g0.to_barycentric(x));
            let d1 = inp.u_h.gradient(dofs, &g1, t1, g1.to_barycentric(x));
            let jump = (d0[0] - d1[0]) * n[0] + (d0[1] - d1[1]) * n[1];
            int += 0.5 * jump * jump;
        }
        let he = edges.length[e];
        let contrib = he * he * int;
        rows[t0].eta2_sq += 0.5 * contrib;
        rows[t1].eta2_sq += 0.5 * contrib;
    }

    for r in &mut rows {
        r.total_sq = r.eta1_sq + r.eta2_sq + r.eta3_sq + r.eta4_sq + r.obst_grad_sq + r.fb_term + r.contact_term;
    }
    Ok(ElementIndicators { rows, classes: classes.clone() })
}

/// Global values: square roots of the summed squared indicators (the two obstacle
/// integrals are plain sums).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EstimatorSummary {
    pub eta_total: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub eta4: f64,
    pub obst: f64,
    pub fb: f64,
    pub contact: f64,
    /// `sqrt(Σ total_sq)` restricted to contact, non-contact and free-boundary triangles.
    pub contact_subtotal: f64,
    pub non_contact_subtotal: f64,
    pub free_boundary_subtotal: f64,
}

pub fn total_estimator(ind: &ElementIndicators) -> EstimatorSummary {
    let sum = |f: &dyn Fn(&IndicatorRow) -> f64| ind.rows.iter().map(f).sum::<f64>();
    let class_sum = |c: ElementClass| {
        ind.rows
            .iter()
            .zip(&ind.classes)
            .filter(|(_, &k)| k == c)
            .map(|(r, _)| r.total_sq)
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    };
    EstimatorSummary {
        eta_total: sum(&|r| r.total_sq).max(0.0).sqrt(),
        eta1: sum(&|r| r.eta1_sq).sqrt(),
        eta2: sum(&|r| r.eta2_sq).sqrt(),
        eta3: sum(&|r| r.eta3_sq).sqrt(),
        eta4: sum(&|r| r.eta4_sq).sqrt(),
        obst: sum(&|r| r.obst_grad_sq).sqrt(),
        fb: sum(&|r| r.fb_term),
        contact: sum(&|r| r.contact_term),
        contact_subtotal: class_sum(ElementClass::Contact),
        non_contact_subtotal: class_sum(ElementClass::NonContact),
        free_boundary_subtotal: class_sum(ElementClass::FreeBoundary),
    }
}
