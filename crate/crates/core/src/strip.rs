//! Monotone finite differences on the strip `0 < x·n < r` in rotated
//! coordinates: `s = x·n` along the normal, `t` along the boundary.
//!
//! In two dimensions the boundary direction is rational, so the strip is
//! periodized tangentially over a whole number of lattice periods `L·ε_s`.
//! `ε_s` is the coefficient period in physical units: `ε` on the macroscale
//! (`A(x/ε)`, drift `B(x/ε)/ε`) and `1` on the microscale (`A(x)`, `B(x)`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{sample_on_strip, CoefficientField, Direction};
use crate::sparse::{norm_inf, LinearSolver, TripletBuilder};
use crate::stencil::{stencil_1d, stencil_2d};

/// Smallest accepted number of nodes per coefficient period.
pub const MIN_RESOLUTION: usize = 8;

/// Which variable the coefficients oscillate in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Coefficients `A(x/ε)`, drift `B(x/ε)/ε`.
    Macro,
    /// Coefficients `A(x)`, drift `B(x)`.
    Micro,
}

/// Node layout of a strip discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripGrid {
    dim: usize,
    direction: Option<Direction>,
    r: f64,
    eps: f64,
    scale: Scale,
    resolution: usize,
    periods: usize,
    hs: f64,
    ns: usize,
    nt: usize,
    ht: f64,
    window: f64,
}

/// Builds a strip grid with `resolution` normal nodes per coefficient period
/// and a tangential window of `periods` lattice periods.
pub fn build_strip_grid(
    dim: usize,
    direction: Option<Direction>,
    r: f64,
    eps: f64,
    scale: Scale,
    resolution: usize,
    periods: usize,
) -> Result<StripGrid> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "eps must lie in (0, 1], got {eps}"
        )));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidInput(format!(
            "strip height must be positive, got {r}"
        )));
    }
    if resolution < MIN_RESOLUTION {
        return Err(Error::ResolutionTooCoarse(format!(
            "{resolution} nodes per period, need at least {MIN_RESOLUTION}"
        )));
    }
    let period = match scale {
        Scale::Macro => eps,
        Scale::Micro => 1.0,
    };
    let hs = period / resolution as f64;
    let ratio = r / hs;
    let ns = ratio.round();
    if (ratio - ns).abs() > 1e-12 * ratio.max(1.0) || ns < 2.0 {
        return Err(Error::IncommensurateWindow(format!(
            "spacing {hs} does not divide strip height {r}"
        )));
    }
    let ns = ns as usize;
    let (nt, ht, window) = match (dim, direction) {
        (1, None) => (1, hs, 0.0),
        (1, Some(_)) => {
            return Err(Error::InvalidInput(
                "a 1D strip has no tangential direction".into(),
            ))
        }
        (2, Some(d)) => {
            if periods == 0 {
                return Err(Error::IncommensurateWindow(
                    "window needs at least one period".into(),
                ));
            }
            let window = periods as f64 * d.tangent_period() * period;
            let nt = ((window / hs) - 1e-9).ceil().max(4.0) as usize;
            (nt, window / nt as f64, window)
        }
        (2, None) => {
            return Err(Error::InvalidInput(
                "a 2D strip needs a direction (p, q)".into(),
            ))
        }
        _ => {
            return Err(Error::UnsupportedDimension {
                dim,
                context: "strip solves support dim 1 and 2",
            })
        }
    };
    Ok(StripGrid {
        dim,
        direction,
        r,
        eps,
        scale,
        resolution,
        periods,
        hs,
        ns,
        nt,
        ht,
        window,
    })
}

impl StripGrid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn direction(&self) -> Option<Direction> {
        self.direction
    }

    /// Strip height.
    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    /// Coefficient period in physical units.
    pub fn eps_scale(&self) -> f64 {
        match self.scale {
            Scale::Macro => self.eps,
            Scale::Micro => 1.0,
        }
    }

    /// Normal spacing.
    pub fn hs(&self) -> f64 {
        self.hs
    }

    /// Tangential spacing.
    pub fn ht(&self) -> f64 {
        self.ht
    }

    /// Number of normal intervals; rows run `0..=ns`.
    pub fn ns(&self) -> usize {
        self.ns
    }

    /// Number of tangential columns (periodic, so `t = W` is column 0).
    pub fn nt(&self) -> usize {
        self.nt
    }

    /// Tangential window `W`.
    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn node_count(&self) -> usize {
        (self.ns + 1) * self.nt
    }

    pub fn s(&self, i: usize) -> f64 {
        i as f64 * self.hs
    }

    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.ht
    }

    /// Flat index of node `(j, i)`.
    pub fn index(&self, j: usize, i: usize) -> usize {
        i * self.nt + j
    }

    /// Physical position of node `(j, i)`.
    pub fn position(&self, j: usize, i: usize) -> [f64; 3] {
        let (t, s) = (self.t(j), self.s(i));
        match self.direction {
            Some(d) => {
                let (tau, n) = (d.tangent(), d.normal());
                [t * tau[0] + s * n[0], t * tau[1] + s * n[1], 0.0]
            }
            None => [s, 0.0, 0.0],
        }
    }

    /// Cell variable `y = x/ε_s` of node `(j, i)`.
    pub fn cell_coordinates(&self, j: usize, i: usize) -> [f64; 3] {
        let x = self.position(j, i);
        let e = self.eps_scale();
        [x[0] / e, x[1] / e, x[2] / e]
    }

    /// Confirms the window is a whole number of lattice periods.
    pub fn check_commensurate(&self) -> Result<()> {
        if let Some(d) = self.direction {
            let k = self.window / (d.tangent_period() * self.eps_scale());
            if (k - k.round()).abs() > 1e-12 * k.max(1.0) || k.round() < 1.0 {
                return Err(Error::IncommensurateWindow(format!(
                    "window {} is {k} lattice periods",
                    self.window
                )));
            }
        }
        Ok(())
    }

    /// Same layout with a different strip height.
    pub fn with_height(&self, r: f64) -> Result<Self> {
        build_strip_grid(
            self.dim,
            self.direction,
            r,
            self.eps,
            self.scale,
            self.resolution,
            self.periods,
        )
    }

    /// Same layout with a different node density.
    pub fn with_resolution(&self, resolution: usize) -> Result<Self> {
        build_strip_grid(
            self.dim,
            self.direction,
            self.r,
            self.eps,
            self.scale,
            resolution,
            self.periods,
        )
    }
}

/// What a grid function represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldRole {
    Solution,
    Barrier,
    Extension,
    Effective,
    Difference,
}

/// Values on every node of a strip grid, row-major over `(s, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripField {
    pub grid: StripGrid,
    pub role: FieldRole,
    pub values: Vec<f64>,
}

impl StripField {
    pub fn value(&self, j: usize, i: usize) -> f64 {
        self.values[self.grid.index(j, i)]
    }

    /// Row `s = s_i` as a tangential trace.
    pub fn row(&self, i: usize) -> &[f64] {
        let nt = self.grid.nt;
        &self.values[i * nt..(i + 1) * nt]
    }

    pub fn max_abs(&self) -> f64 {
        norm_inf(&self.values)
    }

    /// `(t, s, value)` rows with the periodic column `t = W` repeated.
    pub fn csv_rows(&self) -> Vec<(f64, f64, f64)> {
        let g = &self.grid;
        let mut out = Vec::with_capacity((g.ns + 1) * (g.nt + 1));
        for i in 0..=g.ns {
            for j in 0..=g.nt {
                let jj = if j == g.nt { 0 } else { j };
                let t = if g.dim == 1 { 0.0 } else { g.t(j) };
                out.push((t, g.s(i), self.value(jj, i)));
                if g.dim == 1 {
                    break;
                }
            }
        }
        out
    }
}

/// Boundary condition imposed on `s = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BottomCondition {
    Dirichlet,
    /// `∂_s u = g`, derivative pointing into the strip.
    Neumann,
}

/// A factorized strip system, reusable across boundary data.
///
/// Unknowns are the rows `s > 0` (Dirichlet) or `s ≥ 0` (Neumann) below the
/// top row `s = r`. On the Neumann row the PDE is imposed at `s = 0` with the
/// ghost value `u(t, −h) = u(t, h) − 2h·g(t)`, which keeps the row monotone
/// and second order.
#[derive(Debug)]
pub struct StripOperator {
    grid: StripGrid,
    bottom: BottomCondition,
    first_row: usize,
    solver: LinearSolver,
    top_links: Vec<(usize, usize, f64)>,
    bottom_links: Vec<(usize, usize, f64)>,
    upwinded: usize,
}

impl StripOperator {
    pub fn new(
        field: &CoefficientField,
        grid: &StripGrid,
        bottom: BottomCondition,
    ) -> Result<Self> {
        let samples = sample_on_strip(field, grid)?;
        let lambda = field.lambda();
        let bnorm = field.drift_norm();
        if bnorm > 0.0 && grid.hs / grid.eps_scale() > lambda / (2.0 * bnorm) {
            return Err(Error::ResolutionTooCoarse(format!(
                "Peclet guard: h/eps = {:.4} exceeds lambda/(2|B|) = {:.4}",
                grid.hs / grid.eps_scale(),
                lambda / (2.0 * bnorm)
            )));
        }
        let (nt, ns, hs, ht) = (grid.nt, grid.ns, grid.hs, grid.ht);
        let first_row = match bottom {
            BottomCondition::Dirichlet => 1,
            BottomCondition::Neumann => 0,
        };
        let rows = ns - first_row;
        let n = rows * nt;
        let unknown = |j: usize, i: usize| (i - first_row) * nt + j;
        let (tau, nrm) = match grid.direction {
            Some(d) => (d.tangent(), d.normal()),
            None => ([0.0, 0.0], [1.0, 0.0]),
        };
        let inv_e = 1.0 / grid.eps_scale();

        let mut tb = TripletBuilder::with_capacity(n, n, n * 7);
        let mut top_links = Vec::new();
        let mut bottom_links = Vec::new();
        let mut upwinded = 0;
        for i in first_row..ns {
            for j in 0..nt {
                let node = grid.index(j, i);
                let a = &samples.a[node];
                let b = &samples.b[node];
                let st = if grid.dim == 1 {
                    let mut st = stencil_1d(a[0][0], b[0] * inv_e, hs);
                    // the single axis is the normal one
                    for nb in st.neighbours.iter_mut() {
                        *nb = (0, nb.0, nb.2);
                    }
                    st
                } else {
                    let quad = |u: [f64; 2], v: [f64; 2]| {
                        let mut acc = 0.0;
                        for p in 0..2 {
                            for q in 0..2 {
                                acc += u[p] * a[p][q] * v[q];
                            }
                        }
                        acc
                    };
                    let att = quad(tau, tau);
                    let ats = quad(tau, nrm);
                    let ass = quad(nrm, nrm);
                    let bt = (tau[0] * b[0] + tau[1] * b[1]) * inv_e;
                    let bs = (nrm[0] * b[0] + nrm[1] * b[1]) * inv_e;
                    stencil_2d([[att, ats], [ats, ass]], [bt, bs], ht, hs)?
                };
                if st.upwinded {
                    upwinded += 1;
                }
                let row = unknown(j, i);
                let mut center = 0.0;
                for &(dt, ds, w) in &st.neighbours {
                    if w == 0.0 {
                        continue;
                    }
                    center -= w;
                    let jj = (j as i64 + dt as i64).rem_euclid(nt as i64) as usize;
                    let ii = i as i64 + ds as i64;
                    if ii == ns as i64 {
                        top_links.push((row, jj, w));
                    } else if ii < first_row as i64 {
                        match bottom {
                            BottomCondition::Dirichlet => bottom_links.push((row, jj, -w)),
                            BottomCondition::Neumann => {
                                // ghost row s = −h mirrored onto s = h
                                tb.push(row, unknown(jj, 1), w);
                                bottom_links.push((row, jj, 2.0 * hs * w));
                            }
                        }
                    } else {
                        tb.push(row, unknown(jj, ii as usize), w);
                    }
                }
                tb.push(row, row, center);
            }
        }
        let solver = LinearSolver::new(tb.build())?;
        Ok(Self {
            grid: grid.clone(),
            bottom,
            first_row,
            solver,
            top_links,
            bottom_links,
            upwinded,
        })
    }

    pub fn grid(&self) -> &StripGrid {
        &self.grid
    }

    pub fn bottom(&self) -> BottomCondition {
        self.bottom
    }

    /// Nodes where the drift was upwinded.
    pub fn upwinded_nodes(&self) -> usize {
        self.upwinded
    }

    /// Solves with Dirichlet data `top` on `s = r` and `bottom` (values or
    /// normal derivatives, per the bottom condition) on `s = 0`.
    pub fn solve(&self, top: &[f64], bottom: &[f64], role: FieldRole) -> Result<StripField> {
        let nt = self.grid.nt;
        if top.len() != nt || bottom.len() != nt {
            return Err(Error::GridMismatch(format!(
                "boundary data must have {nt} entries, got {} and {}",
                top.len(),
                bottom.len()
            )));
        }
        let mut rhs = vec![0.0; self.solver.dim()];
        for &(row, j, w) in &self.top_links {
            rhs[row] -= w * top[j];
        }
        for &(row, j, w) in &self.bottom_links {
            rhs[row] += w * bottom[j];
        }
        let x = self.solver.solve(&rhs)?;
        let ns = self.grid.ns;
        let mut values = vec![0.0; self.grid.node_count()];
        if self.bottom == BottomCondition::Dirichlet {
            values[..nt].copy_from_slice(bottom);
        }
        values[self.first_row * nt..ns * nt].copy_from_slice(&x);
        values[ns * nt..].copy_from_slice(top);
        Ok(StripField {
            grid: self.grid.clone(),
            role,
            values,
        })
    }
}

/// Dirichlet problem with data on both boundary rows.
pub fn solve_dirichlet(
    field: &CoefficientField,
    grid: &StripGrid,
    top: &[f64],
    bottom: &[f64],
) -> Result<StripField> {
    StripOperator::new(field, grid, BottomCondition::Dirichlet)?.solve(
        top,
        bottom,
        FieldRole::Solution,
    )
}

/// Neumann data `g` on `s = 0`, zero on `s = r`.
pub fn solve_neumann(field: &CoefficientField, grid: &StripGrid, g: &[f64]) -> Result<StripField> {
    let top = vec![0.0; grid.nt];
    StripOperator::new(field, grid, BottomCondition::Neumann)?.solve(&top, g, FieldRole::Solution)
}

/// The field's own `g(x/ε_s)` sampled on the `s = 0` row.
pub fn boundary_datum(field: &CoefficientField, grid: &StripGrid) -> Result<Vec<f64>> {
    Ok(sample_on_strip(field, grid)?.g)
}

/// `(−3u₀ + 4u₁ − u₂)/(2h)` along the normal at every `s = 0` node.
pub fn normal_derivative(u: &StripField) -> Vec<f64> {
    let h = u.grid.hs;
    (0..u.grid.nt)
        .map(|j| (-3.0 * u.value(j, 0) + 4.0 * u.value(j, 1) - u.value(j, 2)) / (2.0 * h))
        .collect()
}

/// `‖u‖∞ / ‖g‖∞`, the constant of the L∞ bound realized by one solve.
pub fn linf_ratio(u: &StripField, g: &[f64]) -> Option<f64> {
    let gn = norm_inf(g);
    (gn > 0.0).then(|| u.max_abs() / gn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::tests_support::identity;
    use crate::fields::{build_matrix_field, CoefficientSpec, DriftSpec, MatrixMode};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn laplace(dim: usize) -> CoefficientField {
        let mut f = build_matrix_field(&identity(dim)).unwrap();
        if dim == 2 {
            f = f.with_direction(Direction::new(2, 3).unwrap()).unwrap();
        }
        f
    }

    fn anisotropic() -> CoefficientField {
        let spec = CoefficientSpec {
            dim: 2,
            a_modes: vec![
                MatrixMode {
                    k: vec![0, 0],
                    matrix: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                    sin_matrix: None,
                },
                MatrixMode {
                    k: vec![1, 0],
                    matrix: vec![vec![0.25, 0.0], vec![0.0, 0.0]],
                    sin_matrix: None,
                },
            ],
            b_modes: DriftSpec::Keyword("div(A)".into()),
            g_modes: vec![],
            lambda: 0.75,
            big_lambda: 1.25,
            direction: Some(Direction::new(2, 3).unwrap()),
        };
        build_matrix_field(&spec).unwrap()
    }

    #[test]
    fn grid_examples() {
        let g = build_strip_grid(1, None, 1.0, 0.25, Scale::Macro, 16, 1).unwrap();
        assert_eq!(g.ns() + 1, 65);
        assert_eq!(g.hs(), 1.0 / 64.0);
        let d = Direction::new(2, 3).unwrap();
        let g = build_strip_grid(2, Some(d), 1.0, 0.125, Scale::Macro, 8, 1).unwrap();
        assert_abs_diff_eq!(g.window(), 0.125 * 13f64.sqrt(), epsilon = 1e-15);
        assert!(matches!(
            build_strip_grid(1, None, 1.01, 0.25, Scale::Macro, 16, 1),
            Err(Error::IncommensurateWindow(_))
        ));
        assert!(matches!(
            build_strip_grid(1, None, 1.0, 0.25, Scale::Macro, 4, 1),
            Err(Error::ResolutionTooCoarse(_))
        ));
    }

    #[test]
    fn sampled_field_is_tangentially_periodic() {
        let f = anisotropic();
        let g = build_strip_grid(2, f.direction(), 1.0, 0.125, Scale::Macro, 8, 1).unwrap();
        let d = f.direction().unwrap();
        let tau = d.tangent();
        let l = d.tangent_period() * g.eps();
        for i in [0, 3, 7] {
            for j in [0, 5, 11] {
                let x = g.position(j, i);
                let y0 = [x[0] / g.eps(), x[1] / g.eps()];
                let y1 = [(x[0] + l * tau[0]) / g.eps(), (x[1] + l * tau[1]) / g.eps()];
                let (a0, a1) = (f.diffusion(&y0), f.diffusion(&y1));
                assert_abs_diff_eq!(a0[0][0], a1[0][0], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sampling_half_period_node() {
        // a(y) = 2 + sin 2πy at x = 1/8, ε = 1/4 → a(1/2) = 2
        let spec = CoefficientSpec {
            dim: 1,
            a_modes: vec![
                MatrixMode {
                    k: vec![0],
                    matrix: vec![vec![2.0]],
                    sin_matrix: None,
                },
                MatrixMode {
                    k: vec![1],
                    matrix: vec![vec![0.0]],
                    sin_matrix: Some(vec![vec![1.0]]),
                },
            ],
            b_modes: DriftSpec::default(),
            g_modes: vec![],
            lambda: 1.0,
            big_lambda: 3.0,
            direction: None,
        };
        let f = build_matrix_field(&spec).unwrap();
        let g = build_strip_grid(1, None, 1.0, 0.25, Scale::Macro, 16, 1).unwrap();
        let s = sample_on_strip(&f, &g).unwrap();
        assert_abs_diff_eq!(s.a[8][0][0], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn affine_dirichlet_is_exact() {
        for dim in [1, 2] {
            let f = laplace(dim);
            let g = build_strip_grid(dim, f.direction(), 1.0, 0.25, Scale::Macro, 8, 1).unwrap();
            let u = solve_dirichlet(&f, &g, &vec![0.0; g.nt()], &vec![1.0; g.nt()]).unwrap();
            for i in 0..=g.ns() {
                for j in 0..g.nt() {
                    assert_abs_diff_eq!(u.value(j, i), 1.0 - g.s(i), epsilon = 1e-12);
                }
            }
            let c = solve_dirichlet(&f, &g, &vec![7.0; g.nt()], &vec![7.0; g.nt()]).unwrap();
            assert!(c.values.iter().all(|v| (v - 7.0).abs() < 1e-11));
        }
    }

    #[test]
    fn affine_neumann_is_exact() {
        let f = laplace(2);
        let g = build_strip_grid(2, f.direction(), 1.0, 0.125, Scale::Macro, 8, 1).unwrap();
        let u = solve_neumann(&f, &g, &vec![0.3; g.nt()]).unwrap();
        for i in 0..=g.ns() {
            assert_abs_diff_eq!(u.value(2, i), 0.3 * (g.s(i) - 1.0), epsilon = 1e-12);
        }
        let zero = solve_neumann(&f, &g, &vec![0.0; g.nt()]).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn normal_derivative_examples() {
        let g = build_strip_grid(1, None, 1.0, 0.25, Scale::Macro, 16, 1).unwrap();
        let make = |f: &dyn Fn(f64) -> f64| StripField {
            grid: g.clone(),
            role: FieldRole::Solution,
            values: (0..=g.ns()).map(|i| f(g.s(i))).collect(),
        };
        assert_abs_diff_eq!(
            normal_derivative(&make(&|s| 1.0 - s))[0],
            -1.0,
            epsilon = 1e-12
        );
        assert_eq!(normal_derivative(&make(&|_| 4.0))[0], 0.0);
        assert_abs_diff_eq!(
            normal_derivative(&make(&|s| s * s))[0],
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn neumann_trace_reproduces_solution() {
        let f = anisotropic();
        let g = build_strip_grid(2, f.direction(), 1.0, 0.125, Scale::Macro, 8, 1).unwrap();
        let data: Vec<f64> = (0..g.nt())
            .map(|j| 1.0 + (2.0 * PI * g.t(j) / g.window()).cos())
            .collect();
        let u = solve_neumann(&f, &g, &data).unwrap();
        let v = solve_dirichlet(&f, &g, &vec![0.0; g.nt()], u.row(0)).unwrap();
        let diff = u
            .values
            .iter()
            .zip(&v.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-9, "diff {diff}");
    }

    #[test]
    fn layered_dirichlet_is_close_to_linear() {
        let spec = CoefficientSpec {
            dim: 1,
            a_modes: vec![
                MatrixMode {
                    k: vec![0],
                    matrix: vec![vec![2.0]],
                    sin_matrix: None,
                },
                MatrixMode {
                    k: vec![1],
                    matrix: vec![vec![0.0]],
                    sin_matrix: Some(vec![vec![1.0]]),
                },
            ],
            b_modes: DriftSpec::Keyword("div(A)".into()),
            g_modes: vec![],
            lambda: 1.0,
            big_lambda: 3.0,
            direction: None,
        };
        let f = build_matrix_field(&spec).unwrap();
        // Péclet: |B| = 2π, λ = 1 → need resolution ≥ 4π
        let g = build_strip_grid(1, None, 1.0, 0.125, Scale::Macro, 16, 1).unwrap();
        let u = solve_dirichlet(&f, &g, &[0.0], &[1.0]).unwrap();
        let err = (0..=g.ns())
            .map(|i| (u.value(0, i) - (1.0 - g.s(i))).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.125, "err {err}");
        assert!(matches!(
            StripOperator::new(
                &f,
                &g.with_resolution(8).unwrap(),
                BottomCondition::Dirichlet
            ),
            Err(Error::ResolutionTooCoarse(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn discrete_maximum_principle(seed in 0u64..10_000) {
            let f = anisotropic();
            let g = build_strip_grid(2, f.direction(), 1.0, 0.25, Scale::Macro, 8, 1).unwrap();
            let data = |k: u64| -> Vec<f64> {
                (0..g.nt()).map(|j| (((j as u64 + k) * 2654435761 + seed) % 1000) as f64 / 500.0 - 1.0).collect()
            };
            let (top, bottom) = (data(1), data(2));
            let u = solve_dirichlet(&f, &g, &top, &bottom).unwrap();
            let lo = top.iter().chain(&bottom).copied().fold(f64::INFINITY, f64::min);
            let hi = top.iter().chain(&bottom).copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(u.values.iter().all(|&v| v >= lo - 1e-10 && v <= hi + 1e-10));
        }
    }
}
