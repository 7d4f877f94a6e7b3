//! Sparse matrices and the linear solvers behind every discrete solve.
//!
//! Systems below [`DIRECT_LIMIT`] unknowns are factorized with a sparse LU
//! (faer); larger systems go through BiCGSTAB right-preconditioned with an
//! ILU(0) factorization. Both paths finish with a relative residual check.

use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;

use crate::error::{Error, Result};

/// Unknown count below which systems are solved by sparse LU.
pub const DIRECT_LIMIT: usize = 300_000;

/// Relative residual required of every solve.
pub const REL_TOL: f64 = 1e-10;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

/// Accumulates `(row, col, value)` entries; duplicates are summed.
#[derive(Debug, Default, Clone)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_by_key(|e| (e.0, e.1));
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..self.nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            values,
        }
    }
}

impl CsrMatrix {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of one row.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[range.clone()], &self.values[range])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.iter()
            .position(|&c| c == j)
            .map(|p| vals[p])
            .unwrap_or(0.0)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut b = TripletBuilder::with_capacity(self.ncols, self.nrows, self.nnz());
        for (i, j, v) in self.triplets() {
            b.push(j, i, v);
        }
        b.build()
    }

    /// `self + shift * I`.
    pub fn shifted(&self, shift: f64) -> CsrMatrix {
        let mut b = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz() + self.nrows);
        for (i, j, v) in self.triplets() {
            b.push(i, j, v);
        }
        for i in 0..self.nrows.min(self.ncols) {
            b.push(i, i, shift);
        }
        b.build()
    }

    /// Copy with row `row` replaced by the unit row `e_row`.
    pub fn with_identity_row(&self, row: usize) -> CsrMatrix {
        let mut b = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz());
        for (i, j, v) in self.triplets() {
            if i != row {
                b.push(i, j, v);
            }
        }
        b.push(row, row, 1.0);
        b.build()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows)
            .map(|i| self.row(i).1.iter().sum())
            .collect()
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let trips: Vec<Triplet<usize, usize, f64>> = self
            .triplets()
            .map(|(i, j, v)| Triplet::new(i, j, v))
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trips)
            .map_err(|e| Error::SolverDivergence(format!("matrix conversion failed: {e:?}")))
    }
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Incomplete LU factorization with the sparsity pattern of the matrix.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows;
        let mut lu = a.clone();
        let mut diag_pos = vec![usize::MAX; n];
        for i in 0..n {
            for p in lu.indptr[i]..lu.indptr[i + 1] {
                if lu.indices[p] == i {
                    diag_pos[i] = p;
                }
            }
            if diag_pos[i] == usize::MAX {
                return Err(Error::SolverDivergence(format!(
                    "ILU(0): missing diagonal in row {i}"
                )));
            }
        }
        let mut col_pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.indptr[i], lu.indptr[i + 1]);
            for p in start..end {
                col_pos[lu.indices[p]] = p;
            }
            for p in start..end {
                let k = lu.indices[p];
                if k >= i {
                    break;
                }
                let pivot = lu.values[diag_pos[k]];
                if pivot == 0.0 {
                    return Err(Error::SolverDivergence(format!(
                        "ILU(0): zero pivot in row {k}"
                    )));
                }
                let factor = lu.values[p] / pivot;
                lu.values[p] = factor;
                for q in diag_pos[k] + 1..lu.indptr[k + 1] {
                    let j = lu.indices[q];
                    let pos = col_pos[j];
                    if pos != usize::MAX && pos >= start && pos < end {
                        lu.values[pos] -= factor * lu.values[q];
                    }
                }
            }
            for p in start..end {
                col_pos[lu.indices[p]] = usize::MAX;
            }
            if lu.values[diag_pos[i]] == 0.0 {
                return Err(Error::SolverDivergence(format!(
                    "ILU(0): zero pivot in row {i}"
                )));
            }
        }
        // Rows are sorted by column, so entries before diag_pos are L, after are U.
        Ok(Self { lu, diag_pos })
    }

    /// Solves `(LU) z = r` in place.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.lu.nrows;
        for i in 0..n {
            let mut s = r[i];
            for p in self.lu.indptr[i]..self.diag_pos[i] {
                s -= self.lu.values[p] * z[self.lu.indices[p]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for p in self.diag_pos[i] + 1..self.lu.indptr[i + 1] {
                s -= self.lu.values[p] * z[self.lu.indices[p]];
            }
            z[i] = s / self.lu.values[self.diag_pos[i]];
        }
    }
}

/// Outcome of a Krylov solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// BiCGSTAB with right preconditioning.
pub fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    precond: &Ilu0,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, KrylovStats)> {
    let n = a.nrows;
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((
            x,
            KrylovStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut s = vec![0.0; n];
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < f64::MIN_POSITIVE {
            return Err(Error::SolverDivergence(
                "BiCGSTAB breakdown (rho = 0)".into(),
            ));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond.apply(&p, &mut p_hat);
        a.matvec_into(&p_hat, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) / bnorm < tol {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            return Ok((
                x,
                KrylovStats {
                    iterations: it,
                    relative_residual: norm2(&s) / bnorm,
                },
            ));
        }
        precond.apply(&s, &mut s_hat);
        a.matvec_into(&s_hat, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        let rel = norm2(&r) / bnorm;
        if rel < tol {
            return Ok((
                x,
                KrylovStats {
                    iterations: it,
                    relative_residual: rel,
                },
            ));
        }
        if !rel.is_finite() || omega == 0.0 {
            return Err(Error::SolverDivergence(format!(
                "BiCGSTAB breakdown at iteration {it}"
            )));
        }
    }
    Err(Error::SolverDivergence(format!(
        "BiCGSTAB did not reach {tol:e} in {max_iter} iterations"
    )))
}

enum Backend {
    Direct(Box<Lu<usize, f64>>),
    Krylov(Ilu0),
}

/// A matrix prepared for repeated solves with different right sides.
pub struct LinearSolver {
    matrix: CsrMatrix,
    backend: Backend,
}

impl std::fmt::Debug for LinearSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearSolver")
            .field("n", &self.matrix.nrows)
            .field("direct", &matches!(self.backend, Backend::Direct(_)))
            .finish()
    }
}

impl LinearSolver {
    /// Chooses the backend from the system size.
    pub fn new(matrix: CsrMatrix) -> Result<Self> {
        if matrix.nrows() < DIRECT_LIMIT {
            Self::direct(matrix)
        } else {
            Self::krylov(matrix)
        }
    }

    pub fn direct(matrix: CsrMatrix) -> Result<Self> {
        if matrix.nrows != matrix.ncols {
            return Err(Error::InvalidInput("matrix must be square".into()));
        }
        let lu = matrix
            .to_faer()?
            .sp_lu()
            .map_err(|e| Error::SolverDivergence(format!("sparse LU failed: {e:?}")))?;
        Ok(Self {
            matrix,
            backend: Backend::Direct(Box::new(lu)),
        })
    }

    pub fn krylov(matrix: CsrMatrix) -> Result<Self> {
        let ilu = Ilu0::new(&matrix)?;
        Ok(Self {
            matrix,
            backend: Backend::Krylov(ilu),
        })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows
    }

    /// Solves `A x = b`, verifying the relative residual against [`REL_TOL`].
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.matrix.nrows);
        let x = match &self.backend {
            Backend::Direct(lu) => {
                let mut x = self.lu_solve(lu, b);
                // one step of iterative refinement
                let r = self.residual(&x, b);
                if norm_inf(&r) > 0.0 {
                    let dx = self.lu_solve(lu, &r);
                    for (xi, d) in x.iter_mut().zip(&dx) {
                        *xi += d;
                    }
                }
                x
            }
            Backend::Krylov(ilu) => {
                let max_iter = 20 * self.matrix.nrows.max(100);
                bicgstab(&self.matrix, b, ilu, REL_TOL * 1e-1, max_iter)?.0
            }
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverDivergence(
                "solution has non-finite entries".into(),
            ));
        }
        let rel = self.relative_residual(&x, b);
        if !(rel <= REL_TOL) {
            return Err(Error::SolverDivergence(format!(
                "relative residual {rel:.3e} exceeds {REL_TOL:e}"
            )));
        }
        Ok(x)
    }

    fn lu_solve(&self, lu: &Lu<usize, f64>, b: &[f64]) -> Vec<f64> {
        let rhs = Col::<f64>::from_fn(b.len(), |i| b[i]);
        let sol = faer::prelude::Solve::solve(lu, &rhs);
        (0..b.len()).map(|i| sol[i]).collect()
    }

    fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let ax = self.matrix.matvec(x);
        b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
    }

    /// `‖b − Ax‖∞ / (‖A‖∞‖x‖∞ + ‖b‖∞)`, zero for the trivial system.
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let r = norm_inf(&self.residual(x, b));
        let scale = self.matrix.norm_inf() * norm_inf(x) + norm_inf(b);
        if scale == 0.0 {
            0.0
        } else {
            r / scale
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn convection_diffusion(n: usize, peclet: f64) -> CsrMatrix {
        // 1D Dirichlet operator, nonsymmetric
        let h = 1.0 / (n + 1) as f64;
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, -2.0 / (h * h) - 1.0);
            if i > 0 {
                b.push(i, i - 1, 1.0 / (h * h) - peclet / (2.0 * h));
            }
            if i + 1 < n {
                b.push(i, i + 1, 1.0 / (h * h) + peclet / (2.0 * h));
            }
        }
        b.build()
    }

    #[test]
    fn duplicates_are_summed() {
        let mut b = TripletBuilder::new(2, 2);
        b.push(0, 1, 1.0);
        b.push(0, 1, 2.5);
        b.push(1, 0, -1.0);
        let m = b.build();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 3.5);
        assert_eq!(m.transpose().get(1, 0), 3.5);
    }

    #[test]
    fn direct_and_krylov_agree() {
        let a = convection_diffusion(400, 30.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b: Vec<f64> = (0..400).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x_direct = LinearSolver::direct(a.clone()).unwrap().solve(&b).unwrap();
        let x_krylov = LinearSolver::krylov(a).unwrap().solve(&b).unwrap();
        let diff = x_direct
            .iter()
            .zip(&x_krylov)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-8 * norm_inf(&x_direct), "diff {diff}");
    }

    #[test]
    fn ilu0_is_exact_on_tridiagonal() {
        // no fill-in for a tridiagonal pattern, so ILU(0) = LU
        let a = convection_diffusion(50, 5.0);
        let ilu = Ilu0::new(&a).unwrap();
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let mut z = vec![0.0; 50];
        ilu.apply(&b, &mut z);
        let r: Vec<f64> = a.matvec(&z).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm_inf(&r) < 1e-9);
    }

    #[test]
    fn singular_system_is_reported() {
        let mut b = TripletBuilder::new(2, 2);
        b.push(0, 0, 1.0);
        b.push(0, 1, 1.0);
        b.push(1, 0, 1.0);
        b.push(1, 1, 1.0);
        let solver = LinearSolver::direct(b.build());
        let res = solver.and_then(|s| s.solve(&[1.0, 0.0]));
        assert!(matches!(res, Err(Error::SolverDivergence(_))));
    }
}
