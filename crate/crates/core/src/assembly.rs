//! Stiffness and load assembly for P2 elements, and Dirichlet elimination.

use crate::error::{FemError, Result};
use crate::linalg::SparseOperator;
use crate::mesh::{ElementGeometry, Mesh, Point};
use crate::quadrature::{make_quad_rule, QuadRule};
use crate::spaces::{p2_gradients, p2_reference_basis, DofMap, P2Function};

pub use crate::quadrature::make_quad_rule as quad_rule;

/// Element stiffness matrix `∫_T ∇φ_i · ∇φ_j`, integrated with the edge-midpoint rule
/// (exact: the integrand is quadratic).
pub fn element_stiffness(geo: &ElementGeometry) -> [[f64; 6]; 6] {
    const MIDPOINTS: [[f64; 3]; 3] = [[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]];
    let mut k = [[0.0; 6]; 6];
    for b in MIDPOINTS {
        let g = p2_gradients(geo, b);
        for i in 0..6 {
            for j in 0..6 {
                k[i][j] += g[i][0] * g[j][0] + g[i][1] * g[j][1];
            }
        }
    }
    let w = geo.area / 3.0;
    for row in &mut k {
        for v in row.iter_mut() {
            *v *= w;
        }
    }
    k
}

/// Global stiffness matrix over all P2 dofs, boundary included.
pub fn assemble_stiffness(mesh: &Mesh, dofs: &DofMap) -> Result<SparseOperator> {
    let mut triplets = Vec::with_capacity(36 * mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let geo = mesh.element_geometry(t);
        if !(geo.area > 0.0) {
            return Err(FemError::DegenerateElement { element: t, area: geo.area });
        }
        let k = element_stiffness(&geo);
        let d = dofs.element_dofs(t);
        for i in 0..6 {
            for j in 0..6 {
                triplets.push((d[i], d[j], k[i][j]));
            }
        }
    }
    Ok(SparseOperator::from_triplets(dofs.n_dofs(), triplets))
}

/// Load vector `(f, ψ_z)` for every P2 dof.
pub fn assemble_load<F: Fn(Point) -> f64>(f: F, mesh: &Mesh, dofs: &DofMap, rule: &QuadRule) -> Result<Vec<f64>> {
    let mut load = vec![0.0; dofs.n_dofs()];
    let shapes: Vec<[f64; 6]> = rule.points.iter().map(|&b| p2_reference_basis(b).0).collect();
    for t in 0..mesh.n_triangles() {
        let geo = mesh.element_geometry(t);
        let d = dofs.element_dofs(t);
        for ((&b, &w), phi) in rule.points.iter().zip(&rule.weights).zip(&shapes) {
            let x = geo.to_cartesian(b);
            let fx = f(x);
            if !fx.is_finite() {
                return Err(FemError::Evaluation { what: "load", point: x });
            }
            let c = geo.area * w * fx;
            for i in 0..6 {
                load[d[i]] += c * phi[i];
            }
        }
    }
    Ok(load)
}

/// Boundary values and the interior/boundary split of the dofs.
#[derive(Clone, Debug)]
pub struct DirichletRecord {
    /// Full-length vector: prescribed values on boundary dofs, zero elsewhere.
    pub lifting: Vec<f64>,
    /// Interior dofs, i.e. the rows/columns of the reduced system.
    pub free: Vec<usize>,
}

impl DirichletRecord {
    /// Expands interior values into a full P2 coefficient vector.
    pub fn expand(&self, interior_values: &[f64]) -> P2Function {
        let mut c = self.lifting.clone();
        for (&d, &v) in self.free.iter().zip(interior_values) {
            c[d] = v;
        }
        P2Function(c)
    }
}

/// The system on interior dofs with the boundary lifting moved to the right-hand side.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    pub matrix: SparseOperator,
    pub rhs: Vec<f64>,
    pub record: DirichletRecord,
}

/// Fixes boundary dofs to `g` at their nodes and eliminates them.
pub fn apply_dirichlet<G: Fn(Point) -> f64>(
    stiffness: &SparseOperator,
    load: &[f64],
    g: G,
    dofs: &DofMap,
) -> Result<ReducedSystem> {
    let n = dofs.n_dofs();
    if stiffness.dim() != n || load.len() != n {
        return Err(FemError::Inconsistent("operator, load and dof map sizes differ".into()));
    }
    let mut lifting = vec![0.0; n];
    for (d, value) in lifting.iter_mut().enumerate() {
        if !dofs.is_interior(d) {
            let x = dofs.node(d);
            let v = g(x);
            if !v.is_finite() {
                return Err(FemError::Evaluation { what: "boundary data", point: x });
            }
            *value = v;
        }
    }
    let free = dofs.free_dofs().to_vec();
    let k_lift = stiffness.matvec(&lifting);
    let rhs = free.iter().map(|&d| load[d] - k_lift[d]).collect();
    Ok(ReducedSystem {
        matrix: stiffness.restrict(&free),
        rhs,
        record: DirichletRecord { lifting, free },
    })
}

/// Default rule for load integration.
pub fn default_load_rule() -> QuadRule {
    make_quad_rule(4).expect("degree-4 rule is supported")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::linear_solve;
    use crate::mesh::{bisect, build_crisscross_mesh, edge_topology, Domain};
    use crate::spaces::{interpolate_p2, midpoint_weights};
    use approx::assert_relative_eq;

    fn setup(n: usize) -> (Mesh, DofMap) {
        let m = build_crisscross_mesh(Domain::Square { lo: -1.5, hi: 1.5 }, n).unwrap();
        let m = bisect(&m, &[1, 2]);
        let e = edge_topology(&m).unwrap();
        let d = DofMap::new(&m, &e);
        (m, d)
    }

    /// `∫_T λ1^a λ2^b λ3^c = 2|T| a! b! c! / (a+b+c+2)!`
    fn bary_monomial(area: f64, p: [u32; 3]) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        2.0 * area * fact(p[0]) * fact(p[1]) * fact(p[2]) / fact(p[0] + p[1] + p[2] + 2)
    }

    /// Element stiffness by exact integration: every shape gradient is written as
    /// `Σ_k (linear in λ) ∇λ_k`, and products of barycentric monomials are integrated
    /// by the closed form above.
    fn symbolic_element_stiffness(geo: &ElementGeometry) -> [[f64; 6]; 6] {
        // gradient of shape i = Σ_k Σ_m c[i][k][m] · μ_m · ∇λ_k with μ = (1, λ0, λ1, λ2)
        let mut c = [[[0.0f64; 4]; 3]; 6];
        for i in 0..3 {
            c[i][i] = [-1.0, 0.0, 0.0, 0.0];
            c[i][i][1 + i] = 4.0;
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            c[3 + i][j][1 + k] = 4.0;
            c[3 + i][k][1 + j] = 4.0;
        }
        let gl = &geo.grad_lambda;
        let int_mu = |m: usize, n: usize| {
            let mut p = [0u32; 3];
            if m > 0 {
                p[m - 1] += 1;
            }
            if n > 0 {
                p[n - 1] += 1;
            }
            bary_monomial(geo.area, p)
        };
        let mut out = [[0.0; 6]; 6];
        for a in 0..6 {
            for b in 0..6 {
                let mut s = 0.0;
                for k in 0..3 {
                    for l in 0..3 {
                        let dot = gl[k][0] * gl[l][0] + gl[k][1] * gl[l][1];
                        for m in 0..4 {
                            for n in 0..4 {
                                s += c[a][k][m] * c[b][l][n] * dot * int_mu(m, n);
                            }
                        }
                    }
                }
                out[a][b] = s;
            }
        }
        out
    }

    #[test]
    fn element_matrix_matches_symbolic_oracle() {
        for v in [
            [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            [[0.3, -0.2], [2.1, 0.4], [0.9, 1.7]],
            [[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]],
        ] {
            let geo = ElementGeometry::new(v);
            let k = element_stiffness(&geo);
            let o = symbolic_element_stiffness(&geo);
            for i in 0..6 {
                for j in 0..6 {
                    assert!((k[i][j] - o[i][j]).abs() < 1e-12, "({i},{j}): {} vs {}", k[i][j], o[i][j]);
                }
            }
        }
    }

    #[test]
    fn reference_element_known_entries() {
        let k = element_stiffness(&ElementGeometry::new([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]));
        // classical values for the right reference triangle
        assert_relative_eq!(k[0][0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(k[1][1], 0.5, epsilon = 1e-14);
        assert_relative_eq!(k[3][3], 8.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn constants_in_kernel_and_symmetry() {
        let (m, d) = setup(3);
        let k = assemble_stiffness(&m, &d).unwrap();
        assert!(k.is_symmetric(1e-12));
        for s in k.matvec(&vec![1.0; d.n_dofs()]) {
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn two_element_overlap_sum() {
        let verts = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let m = Mesh::new(verts, vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        let e = edge_topology(&m).unwrap();
        let d = DofMap::new(&m, &e);
        let k = assemble_stiffness(&m, &d).unwrap();
        let mut dense = vec![vec![0.0; d.n_dofs()]; d.n_dofs()];
        for t in 0..2 {
            let ke = element_stiffness(&m.element_geometry(t));
            let l = d.element_dofs(t);
            for i in 0..6 {
                for j in 0..6 {
                    dense[l[i]][l[j]] += ke[i][j];
                }
            }
        }
        assert_eq!(k.to_dense(), dense);
    }

    #[test]
    fn load_examples() {
        let (m, d) = setup(2);
        let rule = default_load_rule();
        assert!(assemble_load(|_| 0.0, &m, &d, &rule).unwrap().iter().all(|&x| x == 0.0));

        let l = assemble_load(|_| 2.5, &m, &d, &rule).unwrap();
        assert_relative_eq!(l.iter().sum::<f64>(), 2.5 * 9.0, max_relative = 1e-13);

        // vertex shape functions integrate to zero, midpoint ones to |T|/3 per triangle
        let l = assemble_load(|_| -2.0, &m, &d, &rule).unwrap();
        let omega = midpoint_weights(&m, &d);
        for k in 0..d.n_cr() {
            assert_relative_eq!(l[d.cr_to_p2(k)], -2.0 * omega[k], max_relative = 1e-13);
        }
        for v in 0..d.n_vertex_dofs() {
            assert!(l[v].abs() < 1e-14);
        }
    }

    #[test]
    fn load_rule_agreement_for_quadratic_f() {
        let (m, d) = setup(2);
        let f = |p: Point| 1.0 + p[0] - 2.0 * p[1] * p[1];
        let l2 = assemble_load(f, &m, &d, &make_quad_rule(4).unwrap()).unwrap();
        let l5 = assemble_load(f, &m, &d, &make_quad_rule(5).unwrap()).unwrap();
        for (a, b) in l2.iter().zip(&l5) {
            assert!((a - b).abs() < 1e-12);
        }
        // degree-2 rule is exact for products of degree ≤ 2
        let g = |p: Point| 3.0 - p[0] + 0.5 * p[1];
        let midpoint = make_quad_rule(2).unwrap();
        let a = assemble_load(g, &m, &d, &midpoint).unwrap();
        let b = assemble_load(g, &m, &d, &make_quad_rule(5).unwrap()).unwrap();
        // ψ·g has degree 3, so only the sum (Σψ = 1) is exact at degree 2
        assert_relative_eq!(a.iter().sum::<f64>(), b.iter().sum::<f64>(), max_relative = 1e-12);
        assert!(assemble_load(|p| if p[0] > 0.0 { f64::INFINITY } else { 0.0 }, &m, &d, &midpoint).is_err());
    }

    #[test]
    fn dirichlet_zero_and_linear() {
        let (m, d) = setup(3);
        let k = assemble_stiffness(&m, &d).unwrap();
        let zero = vec![0.0; d.n_dofs()];

        let sys = apply_dirichlet(&k, &zero, |_| 0.0, &d).unwrap();
        assert_eq!(sys.matrix.dim(), d.free_dofs().len());
        assert!(sys.rhs.iter().all(|&x| x == 0.0));
        let u = linear_solve(&sys.matrix, &sys.rhs, 1e-12).unwrap();
        assert!(u.iter().all(|&x| x == 0.0));

        let g = |p: Point| 0.3 + 2.0 * p[0] - p[1];
        let sys = apply_dirichlet(&k, &zero, g, &d).unwrap();
        let u = sys.record.expand(&linear_solve(&sys.matrix, &sys.rhs, 1e-12).unwrap());
        for dof in 0..d.n_dofs() {
            assert!((u.0[dof] - g(d.node(dof))).abs() < 1e-12);
        }
    }

    #[test]
    fn galerkin_reproduces_quadratic() {
        let (m, d) = setup(4);
        let exact = |p: Point| p[0] * p[0] + p[1];
        let k = assemble_stiffness(&m, &d).unwrap();
        let load = assemble_load(|_| -2.0, &m, &d, &default_load_rule()).unwrap();
        let sys = apply_dirichlet(&k, &load, exact, &d).unwrap();
        let u = sys.record.expand(&linear_solve(&sys.matrix, &sys.rhs, 1e-12).unwrap());
        let i = interpolate_p2(exact, &d).unwrap();
        for (a, b) in u.values().iter().zip(i.values()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn example1_boundary_value() {
        let g = |p: Point| {
            let r = p[0].hypot(p[1]);
            r * r / 2.0 - r.ln() - 0.5
        };
        // 1.125 − ln 1.5 − 0.5
        assert_relative_eq!(g([1.5, 0.0]), 0.625 - 1.5f64.ln(), max_relative = 1e-15);
        assert!((g([1.5, 0.0]) - 0.219535).abs() < 1e-6);
    }
}
