//! Compressed sparse row storage and the symmetric positive definite direct solve.
//!
//! Factorizations are done by `faer`'s supernodal sparse Cholesky. Operators here are
//! always symmetric, so the CSR arrays double as the CSC arrays of the same matrix.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::{ColMut, Side};

use crate::error::{FemError, Result};

/// Square sparse matrix in CSR layout with sorted, unique column indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseOperator {
    /// Sums duplicate entries; the summation order is the input order, so equal
    /// inputs give bitwise equal matrices.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            assert!(i < n && j < n, "entry ({i}, {j}) outside a {n}×{n} operator");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// Row sums of absolute values times `|x|`, the scale of rounding in `A x`.
    pub fn abs_matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| (v * x[j]).abs()).sum()).collect()
    }

    /// Principal submatrix on the given (increasing) index set.
    pub fn restrict(&self, keep: &[usize]) -> SparseOperator {
        let mut map = vec![usize::MAX; self.n];
        for (k, &i) in keep.iter().enumerate() {
            map[i] = k;
        }
        let mut row_ptr = Vec::with_capacity(keep.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &i in keep {
            for (j, v) in self.row(i) {
                if map[j] != usize::MAX {
                    col_idx.push(map[j]);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseOperator { n: keep.len(), row_ptr, col_idx, values }
    }

    /// Same pattern, new values (e.g. rows and columns decoupled in place).
    pub fn map_entries<F: FnMut(usize, usize, f64) -> f64>(&self, mut f: F) -> SparseOperator {
        let mut out = self.clone();
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[k] = f(i, self.col_idx[k], self.values[k]);
            }
        }
        out
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        (0..self.n).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i)).abs() <= rel_tol * scale))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n]; self.n];
        for (i, row) in a.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        a
    }

    fn symbolic_csc(&self) -> SymbolicSparseColMat<usize> {
        SymbolicSparseColMat::new_checked(self.n, self.n, self.row_ptr.clone(), None, self.col_idx.clone())
    }
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Fill-reducing ordering and elimination structure of a sparsity pattern, reusable
/// for every operator with the same pattern.
#[derive(Clone, Debug)]
pub struct CholeskyPattern {
    symbolic: SymbolicLlt<usize>,
    structure: SymbolicSparseColMat<usize>,
}

impl CholeskyPattern {
    pub fn analyze(op: &SparseOperator) -> Result<Self> {
        let structure = op.symbolic_csc();
        let symbolic = SymbolicLlt::try_new(structure.as_ref(), Side::Lower)
            .map_err(|e| FemError::LinearSolve(format!("symbolic analysis: {e:?}")))?;
        Ok(Self { symbolic, structure })
    }
}

/// Numeric `L Lᵀ` factor of an SPD operator.
pub struct Cholesky {
    llt: Llt<usize, f64>,
}

impl Cholesky {
    pub fn factorize(op: &SparseOperator, pattern: &CholeskyPattern) -> Result<Self> {
        if pattern.structure.row_idx() != op.col_idx.as_slice() || pattern.structure.nrows() != op.n {
            return Err(FemError::LinearSolve("operator does not match the analyzed pattern".into()));
        }
        let mat = SparseColMatRef::new(pattern.structure.as_ref(), &op.values);
        let llt = Llt::try_new_with_symbolic(pattern.symbolic.clone(), mat, Side::Lower)
            .map_err(|e| FemError::LinearSolve(format!("operator is not positive definite ({e:?})")))?;
        Ok(Self { llt })
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        self.llt.solve_in_place(ColMut::from_slice_mut(rhs));
    }

    /// Cholesky solve followed by iterative refinement. Refinement continues while it
    /// pays off (the residual at least halves), so the result is usually accurate to
    /// rounding level; it is accepted if `‖b − A x‖₂ ≤ tol ‖b‖₂` or if the residual has
    /// reached the rounding level `ε ‖|A| |x|‖₂` of the system.
    pub fn solve_refined(&self, op: &SparseOperator, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
        let bnorm = norm2(rhs);
        if bnorm == 0.0 {
            return Ok(vec![0.0; rhs.len()]);
        }
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        let residual = |x: &[f64]| -> Vec<f64> { rhs.iter().zip(op.matvec(x)).map(|(b, a)| b - a).collect() };
        let mut best = f64::INFINITY;
        for _ in 0..8 {
            let mut r = residual(&x);
            let rnorm = norm2(&r);
            if !rnorm.is_finite() {
                return Err(FemError::LinearSolve("non-finite residual".into()));
            }
            let floor = 16.0 * f64::EPSILON * norm2(&op.abs_matvec(&x)) + f64::EPSILON * bnorm;
            if rnorm <= floor || rnorm > 0.5 * best {
                break;
            }
            best = rnorm;
            self.solve_in_place(&mut r);
            for (xi, di) in x.iter_mut().zip(&r) {
                *xi += di;
            }
        }
        let rnorm = norm2(&residual(&x));
        if !rnorm.is_finite() {
            return Err(FemError::LinearSolve("non-finite residual".into()));
        }
        let floor = 64.0 * f64::EPSILON * norm2(&op.abs_matvec(&x)) + f64::EPSILON * bnorm;
        if rnorm <= tol * bnorm {
            Ok(x)
        } else if rnorm <= floor {
            log::debug!("linear solve at rounding floor: ‖r‖/‖b‖ = {:e}", rnorm / bnorm);
            Ok(x)
        } else {
            Err(FemError::LinearSolve(format!(
                "relative residual {:e} above tolerance {tol:e}",
                rnorm / bnorm
            )))
        }
    }
}

/// Solves `A x = b` for a symmetric positive definite `A` to relative residual `tol`.
pub fn linear_solve(op: &SparseOperator, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
    if rhs.len() != op.dim() {
        return Err(FemError::InvalidArgument(format!(
            "right-hand side has length {} for a {}-dimensional operator",
            rhs.len(),
            op.dim()
        )));
    }
    if op.dim() == 0 {
        return Ok(Vec::new());
    }
    let pattern = CholeskyPattern::analyze(op)?;
    Cholesky::factorize(op, &pattern)?.solve_refined(op, rhs, tol)
}
