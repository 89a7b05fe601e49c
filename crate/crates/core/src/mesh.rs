//! Conforming triangulations of the benchmark polygons and newest vertex bisection.
//!
//! Local conventions used throughout the crate: the vertices of every triangle are
//! stored counterclockwise, and local edge `i` is the edge opposite local vertex `i`,
//! i.e. the segment `(v[i+1], v[i+2])` (indices mod 3). The refinement edge of a
//! triangle is stored by its local index, so the vertex opposite it is the
//! "newest vertex" of the bisection algorithm.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::io::{BufRead, Write};

use crate::error::{FemError, Result};

pub type Point = [f64; 2];

/// Polygonal domains supported by the structured mesh generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Domain {
    /// Axis-aligned square `(lo, hi)²`.
    Square { lo: f64, hi: f64 },
    /// The unit square rotated by 45°, corners `(±1, 0), (0, ±1)`.
    Diamond,
}

impl Domain {
    /// Maps lattice coordinates `(s, t) ∈ [0, 1]²` onto the domain.
    pub fn map(&self, s: f64, t: f64) -> Point {
        match *self {
            Domain::Square { lo, hi } => [lo + (hi - lo) * s, lo + (hi - lo) * t],
            Domain::Diamond => [s - t, s + t - 1.0],
        }
    }

    /// Corners in counterclockwise order.
    pub fn corners(&self) -> Vec<Point> {
        [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
            .iter()
            .map(|&(s, t)| self.map(s, t))
            .collect()
    }

    /// Area by the shoelace formula on the corner polygon.
    pub fn area(&self) -> f64 {
        let c = self.corners();
        let n = c.len();
        0.5 * (0..n)
            .map(|i| {
                let (p, q) = (c[i], c[(i + 1) % n]);
                p[0] * q[1] - q[0] * p[1]
            })
            .sum::<f64>()
    }

    /// Side length of the polygon.
    pub fn side(&self) -> f64 {
        let c = self.corners();
        dist(c[0], c[1])
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Domain::Square { lo, hi } if !(lo.is_finite() && hi.is_finite() && hi > lo) => Err(
                FemError::InvalidArgument(format!("square domain needs lo < hi, got ({lo}, {hi})")),
            ),
            _ => Ok(()),
        }
    }
}

impl std::str::FromStr for Domain {
    type Err = FemError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(Domain::Square { lo: -1.5, hi: 1.5 }),
            "diamond" => Ok(Domain::Diamond),
            other => Err(FemError::InvalidArgument(format!("unsupported polygon '{other}'"))),
        }
    }
}

/// A conforming triangulation with newest-vertex-bisection bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    refinement_edge: Vec<u8>,
    boundary_vertex: Vec<bool>,
    generation: Vec<u32>,
    parent: Vec<Option<usize>>,
}

/// Edges of a mesh in lexicographic order of their canonical vertex pairs.
#[derive(Clone, Debug)]
pub struct EdgeTable {
    pub edges: Vec<[usize; 2]>,
    pub midpoints: Vec<Point>,
    /// Adjacent triangles, lower id first. Boundary edges have a single neighbour.
    pub adjacent: Vec<(usize, Option<usize>)>,
    pub interior: Vec<bool>,
    pub length: Vec<f64>,
    /// Edge id of local edge `i` (opposite local vertex `i`) of every triangle.
    pub triangle_edges: Vec<[usize; 3]>,
}

impl EdgeTable {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn n_interior(&self) -> usize {
        self.interior.iter().filter(|&&b| b).count()
    }

    /// Unit normal of edge `e`, pointing out of its first (lower id) triangle,
    /// i.e. from the lower id triangle towards the higher id one.
    pub fn normal(&self, mesh: &Mesh, e: usize) -> Point {
        let [a, b] = self.edges[e];
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
        let len = self.length[e];
        let mut n = [dy / len, -dx / len];
        // flip so that it points away from the opposite vertex of the first triangle
        let t = self.adjacent[e].0;
        let opp = mesh.triangles[t]
            .iter()
            .copied()
            .find(|&v| v != a && v != b)
            .expect("triangle has a vertex off the edge");
        let po = mesh.vertices[opp];
        if (po[0] - pa[0]) * n[0] + (po[1] - pa[1]) * n[1] > 0.0 {
            n = [-n[0], -n[1]];
        }
        n
    }
}

/// Geometric data of a single triangle.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    pub vertices: [Point; 3],
    pub area: f64,
    /// Diameter, i.e. the longest edge.
    pub diameter: f64,
    /// Length of local edge `i` (opposite vertex `i`).
    pub edge_lengths: [f64; 3],
    /// Outward unit normal of local edge `i`.
    pub normals: [Point; 3],
    /// Constant gradients of the barycentric coordinates.
    pub grad_lambda: [Point; 3],
}

impl ElementGeometry {
    pub fn new(vertices: [Point; 3]) -> Self {
        let area = signed_area(&vertices);
        let mut edge_lengths = [0.0; 3];
        let mut normals = [[0.0; 2]; 3];
        let mut grad_lambda = [[0.0; 2]; 3];
        for i in 0..3 {
            let p = vertices[(i + 1) % 3];
            let q = vertices[(i + 2) % 3];
            let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
            let len = dx.hypot(dy);
            edge_lengths[i] = len;
            // counterclockwise orientation: the outward normal is the edge rotated clockwise
            normals[i] = [dy / len, -dx / len];
            // ∇λ_i = -n_i |e_i| / (2|T|)
            grad_lambda[i] = [-dy / (2.0 * area), dx / (2.0 * area)];
        }
        let diameter = edge_lengths.iter().copied().fold(0.0, f64::max);
        Self {
            vertices,
            area,
            diameter,
            edge_lengths,
            normals,
            grad_lambda,
        }
    }

    /// Cartesian image of barycentric coordinates.
    pub fn to_cartesian(&self, bary: [f64; 3]) -> Point {
        let v = &self.vertices;
        [
            bary[0] * v[0][0] + bary[1] * v[1][0] + bary[2] * v[2][0],
            bary[0] * v[0][1] + bary[1] * v[1][1] + bary[2] * v[2][1],
        ]
    }

    /// Barycentric coordinates of a Cartesian point (may be negative outside).
    pub fn to_barycentric(&self, x: Point) -> [f64; 3] {
        let v0 = self.vertices[0];
        let l1 = (x[0] - v0[0]) * self.grad_lambda[1][0] + (x[1] - v0[1]) * self.grad_lambda[1][1];
        let l2 = (x[0] - v0[0]) * self.grad_lambda[2][0] + (x[1] - v0[1]) * self.grad_lambda[2][1];
        [1.0 - l1 - l2, l1, l2]
    }

    /// Midpoint of local edge `i`.
    pub fn edge_midpoint(&self, i: usize) -> Point {
        let p = self.vertices[(i + 1) % 3];
        let q = self.vertices[(i + 2) % 3];
        [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
    }

    /// Smallest interior angle in radians.
    pub fn min_angle(&self) -> f64 {
        let l = self.edge_lengths;
        (0..3)
            .map(|i| {
                let (a, b, c) = (l[i], l[(i + 1) % 3], l[(i + 2) % 3]);
                ((b * b + c * c - a * a) / (2.0 * b * c)).clamp(-1.0, 1.0).acos()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn dist(p: Point, q: Point) -> f64 {
    (q[0] - p[0]).hypot(q[1] - p[1])
}

pub(crate) fn signed_area(v: &[Point; 3]) -> f64 {
    0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]))
}

fn canonical(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn local_edge(tri: &[usize; 3], i: usize) -> (usize, usize) {
    (tri[(i + 1) % 3], tri[(i + 2) % 3])
}

impl Mesh {
    /// Builds a mesh from raw connectivity. Triangles must be counterclockwise.
    ///
    /// Refinement edges are initialised to the longest edge of each triangle, ties
    /// broken by the smallest opposite-vertex index. Boundary flags are derived from
    /// the edges that belong to a single triangle.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        let mut refinement_edge = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) || tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(FemError::InvalidArgument(format!("triangle {t} has invalid vertices {tri:?}")));
            }
            let geo = ElementGeometry::new([vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]]);
            if !(geo.area > 0.0) {
                return Err(FemError::DegenerateElement { element: t, area: geo.area });
            }
            let mut best = 0usize;
            for i in 1..3 {
                let (li, lb) = (geo.edge_lengths[i], geo.edge_lengths[best]);
                // lengths of congruent edges may differ in the last bits
                let tol = 1e-12 * lb.max(li);
                if li > lb + tol || ((li - lb).abs() <= tol && tri[i] < tri[best]) {
                    best = i;
                }
            }
            refinement_edge.push(best as u8);
        }

        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &triangles {
            for i in 0..3 {
                let (a, b) = local_edge(tri, i);
                *count.entry(canonical(a, b)).or_default() += 1;
            }
        }
        let mut boundary_vertex = vec![false; nv];
        for (&(a, b), &c) in &count {
            if c == 1 {
                boundary_vertex[a] = true;
                boundary_vertex[b] = true;
            }
        }
        let nt = triangles.len();
        let mesh = Mesh {
            vertices,
            triangles,
            refinement_edge,
            boundary_vertex,
            generation: vec![0; nt],
            parent: vec![None; nt],
        };
        edge_topology(&mesh)?;
        Ok(mesh)
    }

    /// Overrides the refinement edges (local indices per triangle).
    pub fn with_refinement_edges(mut self, edges: Vec<u8>) -> Result<Self> {
        if edges.len() != self.triangles.len() || edges.iter().any(|&e| e > 2) {
            return Err(FemError::InvalidArgument("one local edge index in 0..3 per triangle expected".into()));
        }
        self.refinement_edge = edges;
        Ok(self)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn refinement_edges(&self) -> &[u8] {
        &self.refinement_edge
    }

    pub fn boundary_vertices(&self) -> &[bool] {
        &self.boundary_vertex
    }

    pub fn generations(&self) -> &[u32] {
        &self.generation
    }

    /// Triangle of the previous mesh this triangle descends from (or is a copy of).
    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_vertices(&self, t: usize) -> [Point; 3] {
        let tri = self.triangles[t];
        [self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]]
    }

    pub fn element_geometry(&self, t: usize) -> ElementGeometry {
        ElementGeometry::new(self.triangle_vertices(t))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.element_geometry(t).area).sum()
    }

    /// Largest element diameter.
    pub fn h_max(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.element_geometry(t).diameter).fold(0.0, f64::max)
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        (0..self.n_triangles())
            .map(|t| self.element_geometry(t).min_angle())
            .fold(f64::INFINITY, f64::min)
    }

    /// Writes the text dump: `ntri nvert`, vertices `x y`, then
    /// `v0 v1 v2 refedge generation` per triangle.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.n_triangles(), self.n_vertices())?;
        for p in &self.vertices {
            writeln!(w, "{:?} {:?}", p[0], p[1])?;
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            writeln!(
                w,
                "{} {} {} {} {}",
                tri[0], tri[1], tri[2], self.refinement_edge[t], self.generation[t]
            )?;
        }
        Ok(())
    }

    /// Reads a dump produced by [`Mesh::write_dump`].
    pub fn read_dump<R: BufRead>(r: R) -> Result<Self> {
        let bad = |msg: &str| FemError::InvalidArgument(format!("mesh dump: {msg}"));
        let mut lines = r.lines();
        let mut next = || -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| bad("unexpected end of input"))??;
            Ok(line.split_whitespace().map(str::to_owned).collect())
        };
        let header = next()?;
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad integer '{s}'")));
        if header.len() != 2 {
            return Err(bad("header must be 'ntri nvert'"));
        }
        let (nt, nv) = (parse_usize(&header[0])?, parse_usize(&header[1])?);
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let f = next()?;
            if f.len() != 2 {
                return Err(bad("vertex line must be 'x y'"));
            }
            let x = f[0].parse::<f64>().map_err(|_| bad("bad coordinate"))?;
            let y = f[1].parse::<f64>().map_err(|_| bad("bad coordinate"))?;
            vertices.push([x, y]);
        }
        let mut triangles = Vec::with_capacity(nt);
        let mut refedges = Vec::with_capacity(nt);
        let mut generation = Vec::with_capacity(nt);
        for _ in 0..nt {
            let f = next()?;
            if f.len() != 5 {
                return Err(bad("triangle line must be 'v0 v1 v2 refedge generation'"));
            }
            triangles.push([parse_usize(&f[0])?, parse_usize(&f[1])?, parse_usize(&f[2])?]);
            refedges.push(parse_usize(&f[3])? as u8);
            generation.push(parse_usize(&f[4])? as u32);
        }
        let mut mesh = Mesh::new(vertices, triangles)?.with_refinement_edges(refedges)?;
        mesh.generation = generation;
        Ok(mesh)
    }
}

/// Criss-cross mesh: `n × n` subsquares, each split into four triangles by its centre.
pub fn build_crisscross_mesh(domain: Domain, n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(FemError::InvalidArgument("criss-cross mesh needs n >= 1".into()));
    }
    domain.validate()?;
    let nf = n as f64;
    let grid = |i: usize, j: usize| j * (n + 1) + i;
    let centre = |i: usize, j: usize| (n + 1) * (n + 1) + j * n + i;

    let mut vertices = Vec::with_capacity((n + 1) * (n + 1) + n * n);
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(domain.map(i as f64 / nf, j as f64 / nf));
        }
    }
    for j in 0..n {
        for i in 0..n {
            vertices.push(domain.map((i as f64 + 0.5) / nf, (j as f64 + 0.5) / nf));
        }
    }
    let mut triangles = Vec::with_capacity(4 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (grid(i, j), grid(i + 1, j), grid(i + 1, j + 1), grid(i, j + 1));
            let m = centre(i, j);
            triangles.extend([[a, b, m], [b, c, m], [c, d, m], [d, a, m]]);
        }
    }
    Mesh::new(vertices, triangles)
}

/// Edge enumeration with adjacency; fails on nonconforming input.
pub fn edge_topology(mesh: &Mesh) -> Result<EdgeTable> {
    let nt = mesh.n_triangles();
    let mut items: Vec<(usize, usize, usize, usize)> = Vec::with_capacity(3 * nt);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for i in 0..3 {
            let (a, b) = local_edge(tri, i);
            let (lo, hi) = canonical(a, b);
            items.push((lo, hi, t, i));
        }
    }
    items.sort_unstable();

    let mut table = EdgeTable {
        edges: Vec::new(),
        midpoints: Vec::new(),
        adjacent: Vec::new(),
        interior: Vec::new(),
        length: Vec::new(),
        triangle_edges: vec![[usize::MAX; 3]; nt],
    };
    let mut k = 0;
    while k < items.len() {
        let (a, b, t0, i0) = items[k];
        let mut end = k + 1;
        while end < items.len() && items[end].0 == a && items[end].1 == b {
            end += 1;
        }
        let e = table.edges.len();
        match end - k {
            1 => {
                if !(mesh.boundary_vertex[a] && mesh.boundary_vertex[b]) {
                    return Err(FemError::Topology(a, b, "has one neighbour but is not on the boundary".into()));
                }
                table.adjacent.push((t0, None));
                table.interior.push(false);
            }
            2 => {
                let (_, _, t1, i1) = items[k + 1];
                // conforming neighbours traverse the shared edge in opposite directions
                let d0 = local_edge(&mesh.triangles[t0], i0);
                let d1 = local_edge(&mesh.triangles[t1], i1);
                if d0 == d1 {
                    return Err(FemError::Topology(a, b, "is shared by inconsistently oriented triangles".into()));
                }
                table.adjacent.push((t0.min(t1), Some(t0.max(t1))));
                table.interior.push(true);
                table.triangle_edges[t1][i1] = e;
            }
            m => {
                return Err(FemError::Topology(a, b, format!("is shared by {m} triangles")));
            }
        }
        table.triangle_edges[t0][i0] = e;
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        table.edges.push([a, b]);
        table.midpoints.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
        table.length.push(dist(pa, pb));
        k = end;
    }
    // every boundary vertex closes exactly one boundary loop
    let mut degree = vec![0u32; mesh.n_vertices()];
    for (e, &[a, b]) in table.edges.iter().enumerate() {
        if !table.interior[e] {
            degree[a] += 1;
            degree[b] += 1;
        }
    }
    for (e, &[a, b]) in table.edges.iter().enumerate() {
        if !table.interior[e] && (degree[a] != 2 || degree[b] != 2) {
            return Err(FemError::Topology(a, b, "meets a vertex with more than two boundary edges".into()));
        }
    }
    Ok(table)
}

/// Newest vertex bisection of the marked triangles plus the closure needed for conformity.
///
/// Every marked triangle is bisected at least once. A triangle whose edge is split by a
/// neighbour first has its own refinement edge split, so each triangle ends up with 2,
/// 3 or 4 children. The `parent` of every output triangle is its triangle in `mesh`.
pub fn bisect(mesh: &Mesh, marked: &[usize]) -> Mesh {
    let edges = edge_topology(mesh).expect("mesh invariant: conforming");
    let nt = mesh.n_triangles();
    let ref_edge_id = |t: usize| edges.triangle_edges[t][mesh.refinement_edge[t] as usize];

    let mut split = vec![false; edges.len()];
    let mut queue = VecDeque::new();
    for &t in marked {
        assert!(t < nt, "marked triangle {t} out of range");
        let e = ref_edge_id(t);
        if !split[e] {
            split[e] = true;
            queue.push_back(e);
        }
    }
    // closure: any triangle with a split edge must split its refinement edge
    while let Some(e) = queue.pop_front() {
        let (t0, t1) = edges.adjacent[e];
        for t in std::iter::once(t0).chain(t1) {
            let r = ref_edge_id(t);
            if !split[r] {
                split[r] = true;
                queue.push_back(r);
            }
        }
    }

    let mut vertices = mesh.vertices.clone();
    let mut boundary_vertex = mesh.boundary_vertex.clone();
    let mut new_vertex: HashMap<(usize, usize), usize> = HashMap::new();
    for (e, &s) in split.iter().enumerate() {
        if s {
            let [a, b] = edges.edges[e];
            new_vertex.insert((a, b), vertices.len());
            vertices.push(edges.midpoints[e]);
            boundary_vertex.push(!edges.interior[e]);
        }
    }

    let mut out = Mesh {
        vertices,
        triangles: Vec::with_capacity(nt * 2),
        refinement_edge: Vec::with_capacity(nt * 2),
        boundary_vertex,
        generation: Vec::with_capacity(nt * 2),
        parent: Vec::with_capacity(nt * 2),
    };

    fn refine(
        out: &mut Mesh,
        splits: &HashMap<(usize, usize), usize>,
        tri: [usize; 3],
        refedge: usize,
        generation: u32,
        parent: usize,
    ) {
        let p = tri[refedge];
        let q = tri[(refedge + 1) % 3];
        let r = tri[(refedge + 2) % 3];
        match splits.get(&canonical(q, r)) {
            Some(&m) => {
                // children keep orientation; the new vertex sits at local 0 so the
                // refinement edge of both children is local edge 0
                refine(out, splits, [m, p, q], 0, generation + 1, parent);
                refine(out, splits, [m, r, p], 0, generation + 1, parent);
            }
            None => {
                out.triangles.push(tri);
                out.refinement_edge.push(refedge as u8);
                out.generation.push(generation);
                out.parent.push(Some(parent));
            }
        }
    }

    for t in 0..nt {
        refine(
            &mut out,
            &new_vertex,
            mesh.triangles[t],
            mesh.refinement_edge[t] as usize,
            mesh.generation[t],
            t,
        );
    }
    out
}

/// Bisects every triangle once (plus closure).
pub fn refine_uniform(mesh: &Mesh) -> Mesh {
    let all: Vec<usize> = (0..mesh.n_triangles()).collect();
    bisect(mesh, &all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single() -> Mesh {
        Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap()
    }

    fn example1_square() -> Domain {
        Domain::Square { lo: -1.5, hi: 1.5 }
    }

    #[test]
    fn crisscross_counts() {
        let m = build_crisscross_mesh(example1_square(), 1).unwrap();
        assert_eq!((m.n_vertices(), m.n_triangles()), (5, 4));
        assert_relative_eq!(m.total_area(), 9.0, max_relative = 1e-14);

        let m = build_crisscross_mesh(example1_square(), 2).unwrap();
        assert_eq!((m.n_vertices(), m.n_triangles()), (13, 16));

        let d = build_crisscross_mesh(Domain::Diamond, 2).unwrap();
        assert_eq!(d.n_triangles(), 16);
        // shoelace on (0,-1), (1,0), (0,1), (-1,0)
        assert_relative_eq!(Domain::Diamond.area(), 2.0, max_relative = 1e-15);
        assert_relative_eq!(d.total_area(), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn crisscross_rejects_bad_input() {
        assert!(matches!(
            build_crisscross_mesh(example1_square(), 0),
            Err(FemError::InvalidArgument(_))
        ));
        assert!(build_crisscross_mesh(Domain::Square { lo: 1.0, hi: 1.0 }, 2).is_err());
        assert!("hexagon".parse::<Domain>().is_err());
    }

    #[test]
    fn crisscross_diameter_equals_subsquare_side() {
        for n in [1, 4, 8] {
            let m = build_crisscross_mesh(example1_square(), n).unwrap();
            assert_relative_eq!(m.h_max(), 3.0 / n as f64, max_relative = 1e-14);
        }
    }

    #[test]
    fn refinement_edge_is_outer_side() {
        let m = build_crisscross_mesh(example1_square(), 3).unwrap();
        for t in 0..m.n_triangles() {
            // centre vertex is stored last in every criss-cross triangle
            assert_eq!(m.refinement_edges()[t], 2);
        }
    }

    #[test]
    fn edge_counts() {
        let e = edge_topology(&single()).unwrap();
        assert_eq!((e.len(), e.n_interior()), (3, 0));

        let m = build_crisscross_mesh(example1_square(), 1).unwrap();
        let e = edge_topology(&m).unwrap();
        assert_eq!((e.len(), e.n_interior()), (8, 4));

        // Euler: V - E + F = 1 for a disc with F = #triangles
        let m = build_crisscross_mesh(example1_square(), 2).unwrap();
        let e = edge_topology(&m).unwrap();
        let total = m.n_vertices() + m.n_triangles() - 1;
        assert_eq!(e.len(), total);
        // 8 boundary edges on a 2×2 grid
        assert_eq!(e.n_interior(), total - 8);
        assert_eq!(e.n_interior(), 20);
    }

    #[test]
    fn edge_order_and_midpoints() {
        let m = build_crisscross_mesh(Domain::Diamond, 2).unwrap();
        let e = edge_topology(&m).unwrap();
        for w in e.edges.windows(2) {
            assert!(w[0] < w[1]);
        }
        for (k, &[a, b]) in e.edges.iter().enumerate() {
            let (pa, pb) = (m.vertices()[a], m.vertices()[b]);
            assert_eq!(e.midpoints[k], [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            assert!(e.length[k] > 0.0);
            if e.interior[k] {
                assert!(e.adjacent[k].1.is_some());
            }
        }
    }

    #[test]
    fn hanging_node_is_rejected() {
        // square split into two triangles, then one of them split at the diagonal midpoint
        let verts = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
        let tris = vec![[0, 1, 2], [0, 2, 3]];
        assert!(Mesh::new(verts.clone(), tris).is_ok());
        let tris = vec![[0, 1, 2], [0, 4, 3], [4, 2, 3]];
        let err = Mesh::new(verts, tris).unwrap_err();
        assert!(matches!(err, FemError::Topology(..)), "{err}");
    }

    #[test]
    fn clockwise_triangle_is_degenerate() {
        let err = Mesh::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]], vec![[0, 1, 2]]).unwrap_err();
        assert!(matches!(err, FemError::DegenerateElement { element: 0, .. }));
    }

    #[test]
    fn geometry_examples() {
        let g = ElementGeometry::new([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        assert_relative_eq!(g.area, 0.5);
        assert_relative_eq!(g.diameter, 2f64.sqrt());

        let g = ElementGeometry::new([[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]]);
        assert_relative_eq!(g.area, 3f64.sqrt() / 4.0, max_relative = 1e-15);
        for l in g.edge_lengths {
            assert_relative_eq!(l, 1.0, max_relative = 1e-15);
        }

        let g = ElementGeometry::new([[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]]);
        assert_relative_eq!(g.area, 1.0);
        assert_relative_eq!(g.diameter, 5f64.sqrt());
        for (i, n) in g.normals.iter().enumerate() {
            assert_relative_eq!(n[0].hypot(n[1]), 1.0, max_relative = 1e-15);
            // outward: points away from the opposite vertex
            let m = g.edge_midpoint(i);
            let v = g.vertices[i];
            assert!((m[0] - v[0]) * n[0] + (m[1] - v[1]) * n[1] > 0.0);
        }
        let b = g.to_barycentric(g.to_cartesian([0.2, 0.3, 0.5]));
        for (x, y) in b.iter().zip([0.2, 0.3, 0.5]) {
            assert_relative_eq!(*x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn bisect_empty_and_single() {
        let m = build_crisscross_mesh(example1_square(), 2).unwrap();
        let same = bisect(&m, &[]);
        assert_eq!(same.triangles(), m.triangles());
        assert_eq!(same.vertices(), m.vertices());

        let s = bisect(&single(), &[0]);
        assert_eq!(s.n_triangles(), 2);
        assert_eq!(s.n_vertices(), 4);
        // longest edge of the right triangle is the hypotenuse
        assert_eq!(s.vertices()[3], [0.5, 0.5]);
        for tri in s.triangles() {
            assert!(tri.contains(&3));
        }
        assert_eq!(s.generations(), &[1, 1]);
    }

    #[test]
    fn bisect_all_of_coarsest_crisscross() {
        // refinement edges are the four boundary sides, so no closure is needed
        let m = build_crisscross_mesh(example1_square(), 1).unwrap();
        let r = bisect(&m, &[0, 1, 2, 3]);
        assert_eq!(r.n_triangles(), 8);
        assert_eq!(r.n_vertices(), 9);
        edge_topology(&r).unwrap();
        // every child has the centre (vertex 4) on its refinement edge
        for (t, tri) in r.triangles().iter().enumerate() {
            let k = r.refinement_edges()[t] as usize;
            let (a, b) = local_edge(tri, k);
            assert!(a == 4 || b == 4);
        }
        // a second sweep needs no closure either: 16 triangles
        let r2 = refine_uniform(&r);
        assert_eq!(r2.n_triangles(), 16);
    }

    #[test]
    fn closure_hand_trace() {
        // marking one triangle of the 2×2 criss-cross: its refinement edge is a boundary
        // side, so only it is bisected
        let m = build_crisscross_mesh(example1_square(), 2).unwrap();
        let r = bisect(&m, &[0]);
        assert_eq!(r.n_triangles(), 17);
        // now mark a child: its refinement edge is a spoke shared with a neighbour whose
        // refinement edge is a boundary side, forcing that neighbour to split twice
        let child = (0..r.n_triangles()).find(|&t| r.generations()[t] == 1).unwrap();
        let r2 = bisect(&r, &[child]);
        edge_topology(&r2).unwrap();
        assert_eq!(r2.n_triangles(), 17 + 1 + 2);
        assert_relative_eq!(r2.total_area(), 9.0, max_relative = 1e-12);
    }

    #[test]
    fn dump_round_trip() {
        let m = bisect(&build_crisscross_mesh(Domain::Diamond, 2).unwrap(), &[3, 7]);
        let mut buf = Vec::new();
        m.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&format!("{} {}\n", m.n_triangles(), m.n_vertices())));
        let back = Mesh::read_dump(&buf[..]).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.triangles(), m.triangles());
        assert_eq!(back.refinement_edges(), m.refinement_edges());
        assert_eq!(back.generations(), m.generations());
    }

    #[test]
    fn deterministic() {
        let m = build_crisscross_mesh(example1_square(), 2).unwrap();
        let a = bisect(&bisect(&m, &[1, 5, 9]), &[0, 2, 20]);
        let b = bisect(&bisect(&m, &[1, 5, 9]), &[0, 2, 20]);
        assert_eq!(a, b);
    }
}
