#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use obstacle_afem::linalg::SparseOperator;
use obstacle_afem::mesh::{Domain, Mesh, Point};

/// `∫_T p q` for affine `p`, `q` given by their vertex values.
pub fn integrate_linear_product(area: f64, p: [f64; 3], q: [f64; 3]) -> f64 {
    let dot: f64 = (0..3).map(|i| p[i] * q[i]).sum();
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    area / 12.0 * (dot + sp * sq)
}

/// `∫_T x^a y^b` for `a + b ≤ 2`, from the affine products above.
pub fn monomial_integral(v: [Point; 3], a: u32, b: u32) -> f64 {
    let area = 0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]));
    let xs = [v[0][0], v[1][0], v[2][0]];
    let ys = [v[0][1], v[1][1], v[2][1]];
    let ones = [1.0; 3];
    match (a, b) {
        (0, 0) => area,
        (1, 0) => integrate_linear_product(area, xs, ones),
        (0, 1) => integrate_linear_product(area, ys, ones),
        (2, 0) => integrate_linear_product(area, xs, xs),
        (1, 1) => integrate_linear_product(area, xs, ys),
        (0, 2) => integrate_linear_product(area, ys, ys),
        _ => panic!("degree above 2"),
    }
}

/// P2 element stiffness by a route independent of the library: the nodal basis is
/// found by inverting the 6×6 monomial Vandermonde matrix, its gradients are affine,
/// and products of affine functions are integrated in closed form.
/// Node order: three vertices, then the midpoints of the edges opposite them.
pub fn vandermonde_stiffness(v: [Point; 3]) -> [[f64; 6]; 6] {
    let mid = |i: usize, j: usize| [0.5 * (v[i][0] + v[j][0]), 0.5 * (v[i][1] + v[j][1])];
    let nodes = [v[0], v[1], v[2], mid(1, 2), mid(2, 0), mid(0, 1)];
    // monomials 1, x, y, x², xy, y²
    let vm = DMatrix::from_fn(6, 6, |i, j| {
        let (x, y) = (nodes[i][0], nodes[i][1]);
        [1.0, x, y, x * x, x * y, y * y][j]
    });
    let coef = vm.try_inverse().expect("unisolvent nodes");
    let area = 0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]));
    // gradient of basis k at vertex i
    let grad = |k: usize, p: Point| -> Point {
        let c = |m: usize| coef[(m, k)];
        [c(1) + 2.0 * c(3) * p[0] + c(4) * p[1], c(2) + c(4) * p[0] + 2.0 * c(5) * p[1]]
    };
    let mut out = [[0.0; 6]; 6];
    for a in 0..6 {
        for b in 0..6 {
            let mut s = 0.0;
            for d in 0..2 {
                let ga = [grad(a, v[0])[d], grad(a, v[1])[d], grad(a, v[2])[d]];
                let gb = [grad(b, v[0])[d], grad(b, v[1])[d], grad(b, v[2])[d]];
                s += integrate_linear_product(area, ga, gb);
            }
            out[a][b] = s;
        }
    }
    out
}

pub fn dense(op: &SparseOperator) -> DMatrix<f64> {
    let rows = op.to_dense();
    DMatrix::from_fn(op.dim(), op.dim(), |i, j| rows[i][j])
}

/// Minimiser of `½xᵀAx − bᵀx` subject to `x[i] ≥ c` for `(i, c)` in `bounds`, found by
/// trying every active subset and keeping the KKT point of least energy.
pub fn brute_force_bound_qp(a: &DMatrix<f64>, b: &[f64], bounds: &[(usize, f64)]) -> Vec<f64> {
    let n = a.nrows();
    let k = bounds.len();
    assert!(k <= 16);
    let energy = |x: &DVector<f64>| 0.5 * x.dot(&(a * x)) - x.dot(&DVector::from_column_slice(b));
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << k) {
        let mut fixed = vec![None; n];
        for (j, &(i, c)) in bounds.iter().enumerate() {
            if mask & (1 << j) != 0 {
                fixed[i] = Some(c);
            }
        }
        let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
        let mut x = DVector::from_fn(n, |i, _| fixed[i].unwrap_or(0.0));
        if !free.is_empty() {
            let ax = a * &x;
            let aff = DMatrix::from_fn(free.len(), free.len(), |p, q| a[(free[p], free[q])]);
            let rhs = DVector::from_fn(free.len(), |p, _| b[free[p]] - ax[free[p]]);
            let sol = aff.cholesky().expect("SPD").solve(&rhs);
            for (p, &i) in free.iter().enumerate() {
                x[i] = sol[p];
            }
        }
        let r = DVector::from_column_slice(b) - a * &x;
        let scale = 1e-10 * (1.0 + b.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let kkt = bounds.iter().enumerate().all(|(j, &(i, c))| {
            if mask & (1 << j) != 0 {
                r[i] <= scale
            } else {
                x[i] >= c - scale
            }
        });
        if kkt {
            let e = energy(&x);
            if best.as_ref().is_none_or(|(be, _)| e < *be) {
                best = Some((e, x));
            }
        }
    }
    best.expect("a bound-constrained SPD problem has a KKT point").1.iter().copied().collect()
}

/// `sqrt((x − y)ᵀ A (x − y))`.
pub fn a_norm_distance(a: &DMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
    let d = DVector::from_iterator(x.len(), x.iter().zip(y).map(|(p, q)| p - q));
    d.dot(&(a * &d)).max(0.0).sqrt()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_triangle(rng: &mut ChaCha8Rng) -> [Point; 3] {
    loop {
        let v: [Point; 3] = std::array::from_fn(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]);
        let area = 0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]));
        if area > 0.1 {
            return v;
        }
    }
}

/// Conformity without the library's edge table: every edge is used by at most two
/// triangles, in opposite directions, and edges used once lie on the domain boundary.
pub fn check_conformity(mesh: &Mesh, domain: Domain) -> Result<(), String> {
    let mut uses: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
    for tri in mesh.triangles() {
        for i in 0..3 {
            let (a, b) = (tri[(i + 1) % 3], tri[(i + 2) % 3]);
            uses.entry((a.min(b), a.max(b))).or_default().push((a, b));
        }
    }
    let corners = domain.corners();
    let on_boundary = |p: Point| {
        (0..corners.len()).any(|k| {
            let (a, b) = (corners[k], corners[(k + 1) % corners.len()]);
            let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
            cross.abs() < 1e-12
        })
    };
    for (&(a, b), dirs) in &uses {
        match dirs.len() {
            1 => {
                let v = mesh.vertices();
                if !(on_boundary(v[a]) && on_boundary(v[b])) {
                    return Err(format!("edge ({a}, {b}) has one neighbour inside the domain"));
                }
            }
            2 if dirs[0] != dirs[1] => {}
            m => return Err(format!("edge ({a}, {b}) used {m} times")),
        }
    }
    let v = mesh.vertices();
    let mut used = vec![false; v.len()];
    for tri in mesh.triangles() {
        for &i in tri {
            used[i] = true;
        }
    }
    if used.iter().any(|u| !u) {
        return Err("unused vertex".into());
    }
    Ok(())
}
