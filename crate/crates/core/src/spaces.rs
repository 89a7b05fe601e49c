//! Quadratic Lagrange (P2) and Crouzeix–Raviart (CR) spaces on a triangulation.
//!
//! P2 degrees of freedom are numbered vertices first (`0..n_vertices`), then edge
//! midpoints in edge-table order. The CR space carries one value per *interior* edge
//! midpoint; boundary midpoints are not part of it and read as zero.

use crate::error::{FemError, Result};
use crate::mesh::{EdgeTable, ElementGeometry, Mesh, Point};

/// Geometric entity a P2 degree of freedom sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DofKind {
    Vertex(usize),
    Midpoint(usize),
}

/// Degree-of-freedom numbering for P2 and CR on a fixed mesh.
#[derive(Clone, Debug)]
pub struct DofMap {
    n_vertices: usize,
    n_edges: usize,
    interior: Vec<bool>,
    nodes: Vec<Point>,
    /// Local P2 dofs of every triangle: three vertices, then the midpoints of local
    /// edges 0, 1, 2.
    element_dofs: Vec<[usize; 6]>,
    /// Edge ids of interior midpoints, in CR order.
    cr_edges: Vec<usize>,
    /// CR index per edge.
    cr_index: Vec<Option<usize>>,
    /// Interior P2 dofs (the unknowns) and the inverse map.
    free: Vec<usize>,
    free_index: Vec<Option<usize>>,
    triangle_edges: Vec<[usize; 3]>,
}

impl DofMap {
    pub fn new(mesh: &Mesh, edges: &EdgeTable) -> Self {
        let nv = mesh.n_vertices();
        let ne = edges.len();
        let mut interior = Vec::with_capacity(nv + ne);
        interior.extend(mesh.boundary_vertices().iter().map(|&b| !b));
        interior.extend(edges.interior.iter().copied());
        let mut nodes = mesh.vertices().to_vec();
        nodes.extend_from_slice(&edges.midpoints);

        let element_dofs = mesh
            .triangles()
            .iter()
            .zip(&edges.triangle_edges)
            .map(|(t, e)| [t[0], t[1], t[2], nv + e[0], nv + e[1], nv + e[2]])
            .collect();

        let mut cr_edges = Vec::new();
        let mut cr_index = vec![None; ne];
        for e in 0..ne {
            if edges.interior[e] {
                cr_index[e] = Some(cr_edges.len());
                cr_edges.push(e);
            }
        }
        let mut free = Vec::new();
        let mut free_index = vec![None; nv + ne];
        for (d, &i) in interior.iter().enumerate() {
            if i {
                free_index[d] = Some(free.len());
                free.push(d);
            }
        }
        Self {
            n_vertices: nv,
            n_edges: ne,
            interior,
            nodes,
            element_dofs,
            cr_edges,
            cr_index,
            free,
            free_index,
            triangle_edges: edges.triangle_edges.clone(),
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.n_vertices + self.n_edges
    }

    pub fn n_vertex_dofs(&self) -> usize {
        self.n_vertices
    }

    pub fn n_midpoint_dofs(&self) -> usize {
        self.n_edges
    }

    pub fn n_triangles(&self) -> usize {
        self.element_dofs.len()
    }

    pub fn kind(&self, dof: usize) -> DofKind {
        if dof < self.n_vertices {
            DofKind::Vertex(dof)
        } else {
            DofKind::Midpoint(dof - self.n_vertices)
        }
    }

    pub fn vertex_dof(&self, v: usize) -> usize {
        v
    }

    pub fn midpoint_dof(&self, edge: usize) -> usize {
        self.n_vertices + edge
    }

    pub fn is_interior(&self, dof: usize) -> bool {
        self.interior[dof]
    }

    pub fn interior_flags(&self) -> &[bool] {
        &self.interior
    }

    /// Coordinates of the Lagrange node of a dof.
    pub fn node(&self, dof: usize) -> Point {
        self.nodes[dof]
    }

    pub fn element_dofs(&self, t: usize) -> &[usize; 6] {
        &self.element_dofs[t]
    }

    /// Number of interior midpoints, i.e. the dimension of the CR space.
    pub fn n_cr(&self) -> usize {
        self.cr_edges.len()
    }

    /// Edge id of CR dof `k`.
    pub fn cr_edge(&self, k: usize) -> usize {
        self.cr_edges[k]
    }

    /// P2 dof id of CR dof `k`.
    pub fn cr_to_p2(&self, k: usize) -> usize {
        self.n_vertices + self.cr_edges[k]
    }

    pub fn cr_index_of_edge(&self, edge: usize) -> Option<usize> {
        self.cr_index[edge]
    }

    /// CR indices of the three local midpoints of a triangle (`None` on the boundary).
    pub fn element_cr(&self, t: usize) -> [Option<usize>; 3] {
        let e = self.triangle_edges[t];
        [self.cr_index[e[0]], self.cr_index[e[1]], self.cr_index[e[2]]]
    }

    /// Interior P2 dofs in increasing order.
    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.free_index[dof]
    }
}

/// Values and gradients (w.r.t. barycentric coordinates, mapped by the caller) of
/// the six P2 shape functions at a barycentric point.
///
/// Shape `i < 3` is `λ_i(2λ_i − 1)`; shape `3 + i` is `4 λ_{i+1} λ_{i+2}`, the bubble
/// on local edge `i`.
pub fn p2_reference_basis(bary: [f64; 3]) -> ([f64; 6], [[f64; 3]; 6]) {
    let l = bary;
    let mut val = [0.0; 6];
    let mut dl = [[0.0; 3]; 6];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        val[i] = l[i] * (2.0 * l[i] - 1.0);
        dl[i][i] = 4.0 * l[i] - 1.0;
        val[3 + i] = 4.0 * l[j] * l[k];
        dl[3 + i][j] = 4.0 * l[k];
        dl[3 + i][k] = 4.0 * l[j];
    }
    (val, dl)
}

/// Cartesian gradients of the six shape functions on an element.
pub fn p2_gradients(geo: &ElementGeometry, bary: [f64; 3]) -> [Point; 6] {
    let (_, dl) = p2_reference_basis(bary);
    let mut g = [[0.0; 2]; 6];
    for (gi, di) in g.iter_mut().zip(&dl) {
        for k in 0..3 {
            gi[0] += di[k] * geo.grad_lambda[k][0];
            gi[1] += di[k] * geo.grad_lambda[k][1];
        }
    }
    g
}

/// Coefficient vector over all P2 dofs (boundary included).
#[derive(Clone, Debug, PartialEq)]
pub struct P2Function(pub Vec<f64>);

impl P2Function {
    pub fn zeros(dofs: &DofMap) -> Self {
        Self(vec![0.0; dofs.n_dofs()])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn local(&self, dofs: &DofMap, t: usize) -> [f64; 6] {
        dofs.element_dofs(t).map(|d| self.0[d])
    }

    pub fn eval(&self, dofs: &DofMap, t: usize, bary: [f64; 3]) -> f64 {
        let (val, _) = p2_reference_basis(bary);
        let c = self.local(dofs, t);
        (0..6).map(|i| c[i] * val[i]).sum()
    }

    pub fn gradient(&self, dofs: &DofMap, geo: &ElementGeometry, t: usize, bary: [f64; 3]) -> Point {
        let c = self.local(dofs, t);
        let g = p2_gradients(geo, bary);
        let mut out = [0.0; 2];
        for i in 0..6 {
            out[0] += c[i] * g[i][0];
            out[1] += c[i] * g[i][1];
        }
        out
    }

    /// Elementwise constant Laplacian.
    pub fn laplacian(&self, dofs: &DofMap, geo: &ElementGeometry, t: usize) -> f64 {
        let c = self.local(dofs, t);
        let gl = &geo.grad_lambda;
        let dot = |a: usize, b: usize| gl[a][0] * gl[b][0] + gl[a][1] * gl[b][1];
        (0..3)
            .map(|i| {
                let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                4.0 * c[i] * dot(i, i) + 8.0 * c[3 + i] * dot(j, k)
            })
            .sum()
    }
}

/// One value per interior edge midpoint, in CR order.
#[derive(Clone, Debug, PartialEq)]
pub struct CRFunction(pub Vec<f64>);

impl CRFunction {
    pub fn zeros(dofs: &DofMap) -> Self {
        Self(vec![0.0; dofs.n_cr()])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Values at the three local midpoints; zero on boundary midpoints.
    pub fn local(&self, dofs: &DofMap, t: usize) -> [f64; 3] {
        dofs.element_cr(t).map(|k| k.map_or(0.0, |k| self.0[k]))
    }

    /// The elementwise linear function at a barycentric point. The CR shape function
    /// of local midpoint `i` is `1 − 2λ_i`.
    pub fn eval(&self, dofs: &DofMap, t: usize, bary: [f64; 3]) -> f64 {
        let m = self.local(dofs, t);
        (0..3).map(|i| m[i] * (1.0 - 2.0 * bary[i])).sum()
    }
}

/// Nodal interpolation of a pointwise field at every P2 node.
pub fn interpolate_p2<F: Fn(Point) -> f64>(field: F, dofs: &DofMap) -> Result<P2Function> {
    let mut c = Vec::with_capacity(dofs.n_dofs());
    for d in 0..dofs.n_dofs() {
        let x = dofs.node(d);
        let v = field(x);
        if !v.is_finite() {
            return Err(FemError::Evaluation { what: "interpolated field", point: x });
        }
        c.push(v);
    }
    Ok(P2Function(c))
}

/// `Π_h⁻¹`: keeps the interior midpoint values of a P2 function.
pub fn pi_h_inverse(v: &P2Function, dofs: &DofMap) -> CRFunction {
    CRFunction((0..dofs.n_cr()).map(|k| v.0[dofs.cr_to_p2(k)]).collect())
}

/// `Π_h`: the midpoint-bubble P2 function with the same interior midpoint values.
pub fn pi_h(w: &CRFunction, dofs: &DofMap) -> P2Function {
    let mut c = vec![0.0; dofs.n_dofs()];
    for (k, &x) in w.0.iter().enumerate() {
        c[dofs.cr_to_p2(k)] = x;
    }
    P2Function(c)
}

/// `|T|/3 · Σ g(z)` over the three edge midpoints; exact for quadratics.
pub fn midpoint_quadrature<G: Fn(Point) -> f64>(vertices: [Point; 3], g: G) -> f64 {
    let geo = ElementGeometry::new(vertices);
    geo.area / 3.0 * (0..3).map(|i| g(geo.edge_midpoint(i))).sum::<f64>()
}

/// `ω_z = Σ_{T ∋ z} |T|/3` for every interior midpoint, in CR order.
pub fn midpoint_weights(mesh: &Mesh, dofs: &DofMap) -> Vec<f64> {
    let mut w = vec![0.0; dofs.n_cr()];
    for t in 0..mesh.n_triangles() {
        let a = mesh.element_geometry(t).area / 3.0;
        for k in dofs.element_cr(t).into_iter().flatten() {
            w[k] += a;
        }
    }
    w
}

/// Lumped midpoint inner product `Σ_T |T|/3 Σ_{z ∈ M_T} w(z) v(z)`.
pub fn lumped_inner_cr(w: &CRFunction, v: &CRFunction, mesh: &Mesh, dofs: &DofMap) -> f64 {
    (0..mesh.n_triangles())
        .map(|t| {
            let (a, b) = (w.local(dofs, t), v.local(dofs, t));
            mesh.element_geometry(t).area / 3.0 * (a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
        })
        .sum()
}
