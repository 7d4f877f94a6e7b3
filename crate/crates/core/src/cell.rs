//! Periodic cell problems on the unit torus: invariant measure, drift
//! centering, first and second correctors, and the effective matrix.
//!
//! Nodes sit at `y = h·(i₀, i₁, i₂)` with `h = 1/N`; the flat index is
//! `i₀ + N·(i₁ + N·i₂)`.

use log::debug;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{for_each_torus_node, CoefficientField};
use crate::sparse::{norm_inf, CsrMatrix, LinearSolver, TripletBuilder};
use crate::stencil::{stencil_1d, stencil_2d, stencil_3d};
use crate::{Mat3, Vec3};

/// Iteration cap of [`center_drift`].
pub const CENTER_MAX_ITER: usize = 50;
/// Orthogonality tolerance for first-corrector right sides.
pub const CORRECTOR_ORTH_TOL: f64 = 1e-8;
/// Orthogonality tolerance for second-corrector right sides.
pub const SECOND_CORRECTOR_ORTH_TOL: f64 = 1e-6;
/// Drift averages above this (relative to `max(1, |B|)`) are treated as
/// incompatible input rather than discretization residue.
pub const INCOMPATIBLE_DRIFT: f64 = 1e-3;

/// Nodal coefficients on the `N^D` torus grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCoefficients {
    dim: usize,
    n: usize,
    a: Vec<Mat3>,
    b: Vec<Vec3>,
}

impl CellCoefficients {
    /// Samples `A` and `B` at the grid nodes.
    pub fn sample(field: &CoefficientField, n: usize) -> Result<Self> {
        let dim = field.dim();
        let mut a = Vec::with_capacity(n.pow(dim as u32));
        let mut b = Vec::with_capacity(n.pow(dim as u32));
        for_each_torus_node(dim, n, |y| {
            a.push(field.diffusion(y));
            b.push(field.drift(y));
        });
        Self::from_nodal(dim, n, a, b)
    }

    /// Wraps nodal arrays directly (no ellipticity validation).
    pub fn from_nodal(dim: usize, n: usize, a: Vec<Mat3>, b: Vec<Vec3>) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension {
                dim,
                context: "cell problems support 1 <= dim <= 3",
            });
        }
        if n < 4 {
            return Err(Error::ResolutionTooCoarse(format!(
                "cell grid needs N >= 4, got {n}"
            )));
        }
        let total = n.pow(dim as u32);
        if a.len() != total || b.len() != total {
            return Err(Error::GridMismatch(format!(
                "expected {total} nodal values, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        Ok(Self { dim, n, a, b })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn diffusion(&self) -> &[Mat3] {
        &self.a
    }

    pub fn drift(&self) -> &[Vec3] {
        &self.b
    }

    /// Copy with `B` replaced by `B + offset` at every node.
    pub fn shifted_drift(&self, offset: &Vec3) -> Self {
        let mut out = self.clone();
        for b in &mut out.b {
            for l in 0..self.dim {
                b[l] += offset[l];
            }
        }
        out
    }

    /// Volume weight `h^D` of one node.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    fn coords(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx % n, (idx / n) % n, idx / (n * n)]
    }

    fn neighbour(&self, c: &[usize; 3], d: [i32; 3]) -> usize {
        let n = self.n as i64;
        let mut idx = 0usize;
        for axis in (0..self.dim).rev() {
            let v = (c[axis] as i64 + d[axis] as i64).rem_euclid(n) as usize;
            idx = idx * self.n + v;
        }
        idx
    }
}

/// The discrete generator `L_h = A_ij ∂_ij + B·∇` on the torus.
#[derive(Debug, Clone)]
pub struct MonotoneOperator {
    dim: usize,
    n: usize,
    matrix: CsrMatrix,
    upwind: Vec<bool>,
}

impl MonotoneOperator {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Nodes where drift had to be upwinded to keep the stencil monotone.
    pub fn upwind_flags(&self) -> &[bool] {
        &self.upwind
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matrix.matvec(u)
    }

    /// Wraps an arbitrary matrix; used to probe the measure solver.
    pub fn from_matrix(dim: usize, n: usize, matrix: CsrMatrix) -> Self {
        let len = matrix.nrows();
        Self {
            dim,
            n,
            matrix,
            upwind: vec![false; len],
        }
    }
}

/// Assembles the monotone generator on the torus.
pub fn assemble_generator(coeffs: &CellCoefficients) -> Result<MonotoneOperator> {
    let len = coeffs.len();
    let h = coeffs.h();
    let mut tb = TripletBuilder::with_capacity(len, len, len * 19);
    let mut upwind = vec![false; len];
    for idx in 0..len {
        let c = coeffs.coords(idx);
        let a = &coeffs.a[idx];
        let b = &coeffs.b[idx];
        let mut center = 0.0;
        match coeffs.dim {
            1 | 2 => {
                let st = if coeffs.dim == 1 {
                    stencil_1d(a[0][0], b[0], h)
                } else {
                    stencil_2d([[a[0][0], a[0][1]], [a[1][0], a[1][1]]], [b[0], b[1]], h, h)?
                };
                upwind[idx] = st.upwinded;
                for &(dx, dy, w) in &st.neighbours {
                    if w != 0.0 {
                        tb.push(idx, coeffs.neighbour(&c, [dx, dy, 0]), w);
                        center -= w;
                    }
                }
            }
            _ => {
                for (d, w) in stencil_3d(a, b, h)? {
                    if w != 0.0 {
                        tb.push(idx, coeffs.neighbour(&c, d), w);
                        center -= w;
                    }
                }
            }
        }
        tb.push(idx, idx, center);
    }
    Ok(MonotoneOperator {
        dim: coeffs.dim,
        n: coeffs.n,
        matrix: tb.build(),
        upwind,
    })
}

/// Diagnostics of the adjoint null-space computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureDiagnostics {
    pub iterations: usize,
    /// `‖L*_h m‖∞ / ‖m‖∞`.
    pub adjoint_residual: f64,
    /// `‖L*_h v‖∞ / ‖v‖∞` for the best vector found off `m`; a second null
    /// direction would drive this to zero.
    pub second_eigen_estimate: f64,
}

/// Invariant measure: positive `m` with `L*_h m = 0` and `Σ m h^D = 1`.
pub fn invariant_measure(op: &MonotoneOperator) -> Result<Vec<f64>> {
    invariant_measure_with_diagnostics(op).map(|(m, _)| m)
}

/// [`invariant_measure`] plus solver diagnostics.
///
/// Inverse iteration on `L*_h − σI` with `σ = −1`; the shifted matrix is
/// factorized once and reused.
pub fn invariant_measure_with_diagnostics(
    op: &MonotoneOperator,
) -> Result<(Vec<f64>, MeasureDiagnostics)> {
    let len = op.matrix.nrows();
    let vol = op.h().powi(op.dim as i32);
    let adjoint = op.matrix.transpose();
    let lnorm = adjoint.norm_inf();
    let shifted = LinearSolver::new(adjoint.shifted(1.0))?;

    let normalize = |v: &mut Vec<f64>| {
        let s: f64 = v.iter().sum::<f64>() * vol;
        for x in v.iter_mut() {
            *x /= s;
        }
    };
    let residual = |v: &[f64]| norm_inf(&adjoint.matvec(v)) / norm_inf(v);

    let mut m = vec![1.0; len];
    normalize(&mut m);
    let mut iterations = 0;
    let max_iter = 200;
    let mut last_change = f64::INFINITY;
    loop {
        iterations += 1;
        let mut next = shifted.solve(&m)?;
        normalize(&mut next);
        let change = next
            .iter()
            .zip(&m)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / norm_inf(&next);
        m = next;
        // stop at round-off level or once the iteration stagnates there
        if change <= 4.0 * f64::EPSILON || (change <= 1e-12 && change >= last_change) {
            break;
        }
        last_change = change;
        if iterations >= max_iter {
            return Err(Error::NoConvergence {
                iterations,
                defect: residual(&m),
            });
        }
    }
    let adjoint_residual = residual(&m);
    if !(adjoint_residual <= 1e-8) {
        // the shifted iteration settled on an eigenvalue other than zero
        return Err(Error::NoConvergence {
            iterations,
            defect: adjoint_residual,
        });
    }

    // deflated iteration: a second null direction would survive projection off m
    let mm: f64 = m.iter().map(|x| x * x).sum();
    let deflate = |v: &mut Vec<f64>| {
        let c: f64 = v.iter().zip(&m).map(|(a, b)| a * b).sum::<f64>() / mm;
        for (x, mi) in v.iter_mut().zip(&m) {
            *x -= c * mi;
        }
        let nrm = norm_inf(v);
        if nrm > 0.0 {
            for x in v.iter_mut() {
                *x /= nrm;
            }
        }
    };
    let mut v: Vec<f64> = (0..len)
        .map(|i| ((i * 7919 + 13) % 1009) as f64 / 1009.0 - 0.5)
        .collect();
    deflate(&mut v);
    let mut second = f64::INFINITY;
    for _ in 0..20 {
        v = shifted.solve(&v)?;
        deflate(&mut v);
        if norm_inf(&v) == 0.0 {
            break;
        }
        second = second.min(residual(&v));
    }
    if second <= 1e-9 * lnorm.max(1.0) {
        return Err(Error::NullSpaceDimension { second });
    }

    let (node, min) = m
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, 0.0));
    if !(min > 0.0) {
        return Err(Error::NonPositive { min, node });
    }
    debug!("invariant measure: {iterations} iterations, residual {adjoint_residual:.2e}, second {second:.2e}");
    Ok((
        m,
        MeasureDiagnostics {
            iterations,
            adjoint_residual,
            second_eigen_estimate: second,
        },
    ))
}

/// `b̄ = Σ B(y_i) m(y_i) h^D`, the centering defect.
pub fn drift_average(coeffs: &CellCoefficients, m: &[f64]) -> Vec3 {
    let vol = coeffs.cell_volume();
    let mut out = [0.0; 3];
    for (b, mi) in coeffs.b.iter().zip(m) {
        for l in 0..coeffs.dim {
            out[l] += b[l] * mi * vol;
        }
    }
    out
}

fn vec_norm(v: &Vec3) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Drift after the centering fixed point.
#[derive(Debug, Clone)]
pub struct CenteredDrift {
    pub coeffs: CellCoefficients,
    pub operator: MonotoneOperator,
    pub m: Vec<f64>,
    /// Total constant added to `B`.
    pub offset: Vec3,
    pub iterations: usize,
    /// `|drift_average|` at exit.
    pub defect: f64,
}

/// Iterates `B ← B − drift_average(B, m(B))` until the average is below `tol`.
pub fn center_drift(coeffs: &CellCoefficients, tol: f64) -> Result<CenteredDrift> {
    let mut current = coeffs.clone();
    let mut offset = [0.0; 3];
    let mut defect = f64::INFINITY;
    for it in 1..=CENTER_MAX_ITER {
        let op = assemble_generator(&current)?;
        let m = invariant_measure(&op)?;
        let bbar = drift_average(&current, &m);
        defect = vec_norm(&bbar);
        if defect <= tol {
            return Ok(CenteredDrift {
                coeffs: current,
                operator: op,
                m,
                offset,
                iterations: it,
                defect,
            });
        }
        let neg = [-bbar[0], -bbar[1], -bbar[2]];
        current = current.shifted_drift(&neg);
        for l in 0..3 {
            offset[l] += neg[l];
        }
    }
    Err(Error::NoConvergence {
        iterations: CENTER_MAX_ITER,
        defect,
    })
}

/// Solver for `L_h u = f` on the torus with `m`-orthogonal right sides.
///
/// Row 0 is replaced by `u₀ = 0`; since `mᵀL_h = 0` and `m₀ > 0` the dropped
/// equation holds automatically, and the result is shifted to `m`-mean zero.
#[derive(Debug)]
pub struct PeriodicSolver {
    operator: MonotoneOperator,
    m: Vec<f64>,
    vol: f64,
    solver: LinearSolver,
}

impl PeriodicSolver {
    pub fn new(operator: MonotoneOperator, m: Vec<f64>) -> Result<Self> {
        let vol = operator.h().powi(operator.dim as i32);
        let solver = LinearSolver::new(operator.matrix.with_identity_row(0))?;
        Ok(Self {
            operator,
            m,
            vol,
            solver,
        })
    }

    pub fn operator(&self) -> &MonotoneOperator {
        &self.operator
    }

    pub fn measure(&self) -> &[f64] {
        &self.m
    }

    /// `Σ f m h^D`.
    pub fn weighted_mean(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.m).map(|(a, b)| a * b).sum::<f64>() * self.vol
    }

    /// Solves `L_h u = f`, rejecting `f` whose weighted mean exceeds
    /// `orth_tol·max(1, ‖f‖∞)`. Returns the solution and the absolute residual.
    pub fn solve(&self, f: &[f64], orth_tol: f64) -> Result<(Vec<f64>, f64)> {
        let defect = self.weighted_mean(f);
        if defect.abs() > orth_tol * norm_inf(f).max(1.0) {
            return Err(Error::Insolvable { defect });
        }
        let projected: Vec<f64> = f.iter().map(|x| x - defect).collect();
        let mut rhs = projected.clone();
        rhs[0] = 0.0;
        let mut u = self.solver.solve(&rhs)?;
        let mean = self.weighted_mean(&u);
        for x in &mut u {
            *x -= mean;
        }
        let lu = self.operator.apply(&u);
        let residual = lu
            .iter()
            .zip(&projected)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Ok((u, residual))
    }
}

/// Central difference of a torus grid function along `axis`.
pub fn gradient(coeffs: &CellCoefficients, u: &[f64], axis: usize) -> Vec<f64> {
    let h = coeffs.h();
    let mut dp = [0i32; 3];
    dp[axis] = 1;
    let dm = [-dp[0], -dp[1], -dp[2]];
    (0..u.len())
        .map(|idx| {
            let c = coeffs.coords(idx);
            (u[coeffs.neighbour(&c, dp)] - u[coeffs.neighbour(&c, dm)]) / (2.0 * h)
        })
        .collect()
}

/// First corrector `χˡ`: `L_h χˡ = −Bˡ`, `m`-mean zero.
pub fn solve_corrector(
    coeffs: &CellCoefficients,
    solver: &PeriodicSolver,
    l: usize,
) -> Result<(Vec<f64>, f64)> {
    let rhs: Vec<f64> = coeffs.b.iter().map(|b| -b[l]).collect();
    solver.solve(&rhs, CORRECTOR_ORTH_TOL)
}

/// The symmetric integrand of the effective matrix at one node.
fn effective_integrand(
    coeffs: &CellCoefficients,
    chi: &[Vec<f64>],
    grads: &[Vec<Vec<f64>>],
    idx: usize,
    i: usize,
    j: usize,
) -> f64 {
    let a = &coeffs.a[idx];
    let b = &coeffs.b[idx];
    let mut v = a[i][j];
    for p in 0..coeffs.dim {
        v += a[p][i] * grads[j][p][idx] + a[p][j] * grads[i][p][idx];
    }
    v + 0.5 * (b[i] * chi[j][idx] + b[j] * chi[i][idx])
}

fn corrector_gradients(coeffs: &CellCoefficients, chi: &[Vec<f64>]) -> Vec<Vec<Vec<f64>>> {
    chi.iter()
        .map(|c| (0..coeffs.dim).map(|p| gradient(coeffs, c, p)).collect())
        .collect()
}

/// `Ā_mn = Σ [A_mn + A_pm ∂_pχⁿ + A_pn ∂_pχᵐ + ½(Bᵐχⁿ + Bⁿχᵐ)] m h^D`,
/// symmetrized and checked for positive definiteness.
pub fn effective_matrix(
    coeffs: &CellCoefficients,
    m: &[f64],
    chi: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let dim = coeffs.dim;
    let vol = coeffs.cell_volume();
    let grads = corrector_gradients(coeffs, chi);
    let mut abar = vec![vec![0.0; dim]; dim];
    for (i, row) in abar.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            *entry = (0..coeffs.len())
                .map(|idx| effective_integrand(coeffs, chi, &grads, idx, i, j) * m[idx])
                .sum::<f64>()
                * vol;
        }
    }
    for i in 0..dim {
        for j in i + 1..dim {
            let s = 0.5 * (abar[i][j] + abar[j][i]);
            abar[i][j] = s;
            abar[j][i] = s;
        }
    }
    let min_eig = DMatrix::from_fn(dim, dim, |i, j| abar[i][j])
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if !(min_eig > 0.0) {
        return Err(Error::IndefiniteEffectiveMatrix { min_eig });
    }
    Ok(abar)
}

/// Second corrector `χⁱʲ` solving
/// `L_h χⁱʲ = ā_ij − {A_ij + A_kj ∂_kχⁱ + A_ki ∂_kχʲ + ½(Bⁱχʲ + Bʲχⁱ)}`.
pub fn solve_second_corrector(
    coeffs: &CellCoefficients,
    solver: &PeriodicSolver,
    chi: &[Vec<f64>],
    abar: &[Vec<f64>],
    i: usize,
    j: usize,
) -> Result<(Vec<f64>, f64)> {
    let grads = corrector_gradients(coeffs, chi);
    let rhs: Vec<f64> = (0..coeffs.len())
        .map(|idx| abar[i][j] - effective_integrand(coeffs, chi, &grads, idx, i, j))
        .collect();
    solver.solve(&rhs, SECOND_CORRECTOR_ORTH_TOL)
}

/// `λ(Q) = ā_mn Q_mn`.
pub fn lambda_of_q(abar: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    abar.iter()
        .zip(q)
        .map(|(ar, qr)| ar.iter().zip(qr).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

/// How [`solve_cell`] treats a nonzero drift average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// Remove small (discretization-level) averages, reject large ones.
    #[default]
    Discrete,
    /// Always run the fixed point, whatever the initial average.
    Force,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellOptions {
    pub second_correctors: bool,
    pub centering: Centering,
    pub center_tol: f64,
}

impl Default for CellOptions {
    fn default() -> Self {
        Self {
            second_correctors: true,
            centering: Centering::Discrete,
            center_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResiduals {
    pub adjoint: f64,
    pub correctors: Vec<f64>,
    pub second_correctors: Vec<f64>,
    pub second_eigen_estimate: f64,
}

/// Everything computed on the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSolution {
    pub dim: usize,
    pub n: usize,
    pub m: Vec<f64>,
    pub chi: Vec<Vec<f64>>,
    /// `χⁱʲ` for `i ≤ j` in row-major upper-triangular order.
    pub chi2: Option<Vec<Vec<f64>>>,
    pub abar: Vec<Vec<f64>>,
    /// `Σ B m h^D` of the input drift, before any centering.
    pub drift_defect: Vec<f64>,
    /// Constant added to `B` by centering.
    pub drift_offset: Vec<f64>,
    pub upwinded_nodes: usize,
    pub residuals: CellResiduals,
}

impl CellSolution {
    /// `χⁱʲ` for any ordering of `(i, j)`.
    pub fn second_corrector(&self, i: usize, j: usize) -> Option<&[f64]> {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let pos = (0..i).map(|r| self.dim - r).sum::<usize>() + (j - i);
        self.chi2.as_ref().map(|c| c[pos].as_slice())
    }
}

/// Full cell pipeline on an `N^D` grid.
pub fn solve_cell(field: &CoefficientField, n: usize, opts: &CellOptions) -> Result<CellSolution> {
    let coeffs = CellCoefficients::sample(field, n)?;
    solve_cell_nodal(&coeffs, opts)
}

/// [`solve_cell`] on already sampled coefficients.
pub fn solve_cell_nodal(coeffs: &CellCoefficients, opts: &CellOptions) -> Result<CellSolution> {
    let dim = coeffs.dim;
    let op = assemble_generator(coeffs)?;
    let (m0, diag) = invariant_measure_with_diagnostics(&op)?;
    let raw = drift_average(coeffs, &m0);
    let bscale = coeffs.b.iter().map(vec_norm).fold(1.0f64, f64::max);
    if opts.centering == Centering::Discrete && vec_norm(&raw) > INCOMPATIBLE_DRIFT * bscale {
        return Err(Error::IncompatibleDrift {
            defect: vec_norm(&raw),
        });
    }
    let (coeffs, op, m, offset, diag) = if vec_norm(&raw) > opts.center_tol {
        let c = center_drift(coeffs, opts.center_tol)?;
        let (_, d) = invariant_measure_with_diagnostics(&c.operator)?;
        (c.coeffs, c.operator, c.m, c.offset, d)
    } else {
        (coeffs.clone(), op, m0, [0.0; 3], diag)
    };

    let upwinded_nodes = op.upwind_flags().iter().filter(|&&u| u).count();
    let solver = PeriodicSolver::new(op, m)?;
    let mut chi = Vec::with_capacity(dim);
    let mut corrector_res = Vec::with_capacity(dim);
    for l in 0..dim {
        let (c, r) = solve_corrector(&coeffs, &solver, l)?;
        chi.push(c);
        corrector_res.push(r);
    }
    let abar = effective_matrix(&coeffs, solver.measure(), &chi)?;

    let mut second_res = Vec::new();
    let chi2 = if opts.second_correctors {
        let mut out = Vec::new();
        for i in 0..dim {
            for j in i..dim {
                let (c, r) = solve_second_corrector(&coeffs, &solver, &chi, &abar, i, j)?;
                out.push(c);
                second_res.push(r);
            }
        }
        Some(out)
    } else {
        None
    };

    Ok(CellSolution {
        dim,
        n: coeffs.n,
        m: solver.measure().to_vec(),
        chi,
        chi2,
        abar,
        drift_defect: raw[..dim].to_vec(),
        drift_offset: offset[..dim].to_vec(),
        upwinded_nodes,
        residuals: CellResiduals {
            adjoint: diag.adjoint_residual,
            correctors: corrector_res,
            second_correctors: second_res,
            second_eigen_estimate: diag.second_eigen_estimate,
        },
    })
}
