//! Dirichlet-to-Neumann maps on strips, the barrier `φ^ε`, the shift
//! function `f^ε`, closed-form exponential barriers, and numerical checks of
//! the structural identities these maps satisfy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::CoefficientField;
use crate::sparse::norm_inf;
use crate::strip::{
    build_strip_grid, normal_derivative, solve_neumann, BottomCondition, FieldRole, Scale,
    StripField, StripGrid, StripOperator,
};

/// A factorized zero-top Dirichlet problem whose normal derivative at
/// `s = 0` is the Dirichlet-to-Neumann map of the strip.
#[derive(Debug)]
pub struct DtnOperator {
    op: StripOperator,
    zero_top: Vec<f64>,
}

impl DtnOperator {
    pub fn new(field: &CoefficientField, grid: &StripGrid) -> Result<Self> {
        Ok(Self {
            op: StripOperator::new(field, grid, BottomCondition::Dirichlet)?,
            zero_top: vec![0.0; grid.nt()],
        })
    }

    pub fn grid(&self) -> &StripGrid {
        self.op.grid()
    }

    /// Solution of the Dirichlet problem with data `u` on `s = 0`, zero on top.
    pub fn extend(&self, u: &[f64]) -> Result<StripField> {
        self.op.solve(&self.zero_top, u, FieldRole::Extension)
    }

    /// `I(u)` at every `s = 0` node.
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(normal_derivative(&self.extend(u)?))
    }
}

/// One-shot `I(u)`; see [`DtnOperator`] for repeated use.
pub fn dtn_apply(field: &CoefficientField, grid: &StripGrid, u: &[f64]) -> Result<Vec<f64>> {
    DtnOperator::new(field, grid)?.apply(u)
}

/// The microscale strip `0 < s < 1/ε` used for `φ^ε`.
pub fn micro_grid(
    field: &CoefficientField,
    eps: f64,
    resolution: usize,
    periods: usize,
) -> Result<StripGrid> {
    build_strip_grid(
        field.dim(),
        field.direction(),
        1.0 / eps,
        eps,
        Scale::Micro,
        resolution,
        periods,
    )
}

/// The macroscale strip `0 < s < 1`.
pub fn macro_grid(
    field: &CoefficientField,
    eps: f64,
    resolution: usize,
    periods: usize,
) -> Result<StripGrid> {
    build_strip_grid(
        field.dim(),
        field.direction(),
        1.0,
        eps,
        Scale::Macro,
        resolution,
        periods,
    )
}

/// The exponential barriers `M(t) = (a₀/C₂)(e^{C₂t} − 1)` and
/// `m(t) = (a₁/C₃)(1 − e^{−C₃t})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormBarriers {
    /// Rate constant actually used: `max(C_rate, 1.25·|B|Λ/λ, 10⁻⁶)`.
    pub c: f64,
    pub c_rate: f64,
    pub c2: f64,
    pub c3: f64,
    pub a0: f64,
    pub a1: f64,
    pub t_star: f64,
    pub s_star: f64,
}

/// Margin on the drift term so the barriers stay discrete super/subsolutions.
const DRIFT_MARGIN: f64 = 1.25;

/// Builds the barriers with `t* = C + 1`, `C₂ = C/Λ`, `s* = 10`, `C₃ = C/λ`.
///
/// `C` is raised to `1.25·|B|Λ/λ` when the rate constant alone is too small
/// for `M` and `m` to dominate the drift.
pub fn closed_form_barriers(
    big_lambda: f64,
    lambda: f64,
    b_norm: f64,
    c_rate: f64,
) -> ClosedFormBarriers {
    let c = c_rate
        .max(DRIFT_MARGIN * b_norm * big_lambda / lambda)
        .max(1e-6);
    barriers_with_constant(big_lambda, lambda, c, c_rate)
}

fn barriers_with_constant(big_lambda: f64, lambda: f64, c: f64, c_rate: f64) -> ClosedFormBarriers {
    let c2 = c / big_lambda;
    let c3 = c / lambda;
    let t_star = c + 1.0;
    let s_star = 10.0;
    let a0 = -c2 / (c2 * t_star).exp_m1();
    let a1 = c3 * (-s_star - c) / (-(-s_star * c3).exp_m1());
    ClosedFormBarriers {
        c,
        c_rate,
        c2,
        c3,
        a0,
        a1,
        t_star,
        s_star,
    }
}

impl ClosedFormBarriers {
    /// Upper barrier `M`.
    pub fn upper(&self, t: f64) -> f64 {
        self.a0 / self.c2 * (self.c2 * t).exp_m1()
    }

    /// Lower barrier `m`.
    pub fn lower(&self, t: f64) -> f64 {
        -self.a1 / self.c3 * (-self.c3 * t).exp_m1()
    }

    /// Raises `C` so that `t* = C + 1` is a multiple of `h`.
    pub fn snapped(&self, big_lambda: f64, lambda: f64, h: f64) -> Self {
        let t = ((self.t_star / h) - 1e-9).ceil() * h;
        barriers_with_constant(big_lambda, lambda, t - 1.0, self.c_rate)
    }
}

/// Worst violations of `m(s) ≤ φ^ε − 1/ε ≤ M(s)`; positive means violated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub upper_violation: f64,
    pub lower_violation: f64,
    pub checked_rows_upper: usize,
    pub checked_rows_lower: usize,
}

/// Measurements taken from one `φ^ε` solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierProbe {
    pub eps: f64,
    pub resolution: usize,
    /// `f^ε = −ε ∂_s φ^ε` on `s = 0`.
    pub f_eps: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    /// `φ^ε − 1/ε` on rows `s ∈ [0, 1]`, row-major.
    pub psi_trace: Vec<f64>,
    pub psi_rows: usize,
    pub nt: usize,
    /// `sup |φ^ε − 1/ε + s|` over the whole microscale strip.
    pub c_rate: f64,
    pub barriers: ClosedFormBarriers,
    /// `None` when `t*` or `s* = 10` exceeds the strip height `1/ε`.
    pub sandwich: Option<SandwichReport>,
}

/// Solves for `φ^ε` on `0 < s < 1/ε` (data `1/ε` at `s = 0`, `0` on top) and
/// records `f^ε`, `c₁ = min f^ε/ε`, `c₂ = max f^ε/ε`, the `ψ` probe and the
/// barrier sandwich.
pub fn solve_phi_and_f(
    field: &CoefficientField,
    eps: f64,
    resolution: usize,
    periods: usize,
) -> Result<(BarrierProbe, StripField)> {
    let grid = micro_grid(field, eps, resolution, periods)?;
    let (nt, ns, h) = (grid.nt(), grid.ns(), grid.hs());
    let op = StripOperator::new(field, &grid, BottomCondition::Dirichlet)?;
    let mut phi = op.solve(&vec![0.0; nt], &vec![1.0 / eps; nt], FieldRole::Barrier)?;
    phi.role = FieldRole::Barrier;

    let f_eps: Vec<f64> = normal_derivative(&phi).iter().map(|d| -eps * d).collect();
    if let Some((node, &min)) = f_eps.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)) {
        if min < -1e-10 {
            return Err(Error::NonNegativityViolation { min, node });
        }
    }
    let c1 = f_eps.iter().copied().fold(f64::INFINITY, f64::min) / eps;
    let c2 = f_eps.iter().copied().fold(f64::NEG_INFINITY, f64::max) / eps;

    let psi = |j: usize, i: usize| phi.value(j, i) - 1.0 / eps;
    let psi_rows = resolution + 1;
    let mut psi_trace = Vec::with_capacity(psi_rows * nt);
    for i in 0..psi_rows {
        for j in 0..nt {
            psi_trace.push(psi(j, i));
        }
    }
    let mut c_rate: f64 = 0.0;
    for i in 0..=ns {
        for j in 0..nt {
            c_rate = c_rate.max((psi(j, i) + grid.s(i)).abs());
        }
    }

    let barriers = closed_form_barriers(
        field.big_lambda(),
        field.lambda(),
        field.drift_norm(),
        c_rate,
    )
    .snapped(field.big_lambda(), field.lambda(), h);
    let r = grid.r();
    let sandwich = (barriers.t_star <= r + 1e-12 && barriers.s_star <= r + 1e-12).then(|| {
        let mut rep = SandwichReport {
            upper_violation: f64::NEG_INFINITY,
            lower_violation: f64::NEG_INFINITY,
            checked_rows_upper: 0,
            checked_rows_lower: 0,
        };
        for i in 0..=ns {
            let s = grid.s(i);
            let row_max = (0..nt).map(|j| psi(j, i)).fold(f64::NEG_INFINITY, f64::max);
            let row_min = (0..nt).map(|j| psi(j, i)).fold(f64::INFINITY, f64::min);
            if s <= barriers.t_star + 1e-12 {
                rep.upper_violation = rep.upper_violation.max(row_max - barriers.upper(s));
                rep.checked_rows_upper += 1;
            }
            if s <= barriers.s_star + 1e-12 {
                rep.lower_violation = rep.lower_violation.max(barriers.lower(s) - row_min);
                rep.checked_rows_lower += 1;
            }
        }
        rep
    });

    Ok((
        BarrierProbe {
            eps,
            resolution,
            f_eps,
            c1,
            c2,
            psi_trace,
            psi_rows,
            nt,
            c_rate,
            barriers,
            sandwich,
        },
        phi,
    ))
}

/// `sup |ψ^ε − ψ^ε'|` over the shared rows `s ∈ [0, 1]`.
pub fn psi_difference(a: &BarrierProbe, b: &BarrierProbe) -> Result<f64> {
    if a.nt != b.nt || a.psi_rows != b.psi_rows {
        return Err(Error::GridMismatch(format!(
            "psi probes have layouts {}x{} and {}x{}",
            a.psi_rows, a.nt, b.psi_rows, b.nt
        )));
    }
    Ok(a.psi_trace
        .iter()
        .zip(&b.psi_trace)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

fn same_layout(a: &StripGrid, b: &StripGrid) -> bool {
    a.nt() == b.nt() && (a.hs() - b.hs()).abs() <= 1e-15 * a.hs() && a.direction() == b.direction()
}

/// `‖I(φ + c) − I(φ) + c f^ε‖∞` on the microscale strip of `probe`.
pub fn check_constant_shift(
    dtn: &DtnOperator,
    probe: &BarrierProbe,
    phi: &[f64],
    c: f64,
) -> Result<f64> {
    let g = dtn.grid();
    if g.scale() != Scale::Micro
        || (g.r() - 1.0 / probe.eps).abs() > 1e-12 * g.r()
        || g.nt() != probe.f_eps.len()
        || g.resolution() != probe.resolution
    {
        return Err(Error::GridMismatch(
            "shift check needs the microscale strip on which f^ε was computed".into(),
        ));
    }
    let shifted: Vec<f64> = phi.iter().map(|x| x + c).collect();
    let lhs = dtn.apply(&shifted)?;
    let base = dtn.apply(phi)?;
    Ok(lhs
        .iter()
        .zip(&base)
        .zip(&probe.f_eps)
        .map(|((a, b), f)| (a - b + c * f).abs())
        .fold(0.0, f64::max))
}

/// `sup |I¹(εv(·/ε)) − I^{1/ε}(v)(·/ε)|` on corresponding nodes.
pub fn check_rescaling(
    field: &CoefficientField,
    macro_grid: &StripGrid,
    micro_grid: &StripGrid,
    v: &[f64],
) -> Result<f64> {
    let eps = macro_grid.eps();
    let matched = macro_grid.scale() == Scale::Macro
        && micro_grid.scale() == Scale::Micro
        && (macro_grid.r() - 1.0).abs() < 1e-12
        && (micro_grid.r() * eps - 1.0).abs() < 1e-12
        && (micro_grid.eps() - eps).abs() < 1e-15
        && macro_grid.resolution() == micro_grid.resolution()
        && macro_grid.periods() == micro_grid.periods()
        && macro_grid.nt() == micro_grid.nt()
        && macro_grid.direction() == micro_grid.direction();
    if !matched {
        return Err(Error::GridMismatch(
            "macroscale nodes do not map onto microscale nodes under x -> x/eps".into(),
        ));
    }
    let scaled: Vec<f64> = v.iter().map(|x| eps * x).collect();
    let lhs = dtn_apply(field, macro_grid, &scaled)?;
    let rhs = dtn_apply(field, micro_grid, v)?;
    Ok(lhs
        .iter()
        .zip(&rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// `min [I^{r₂}(u) − I^{r₁}(u)]` for `u ≥ 0` and `r₂ ≥ r₁`.
pub fn check_domain_monotonicity(
    small: &DtnOperator,
    large: &DtnOperator,
    u: &[f64],
) -> Result<f64> {
    if let Some(&value) = u.iter().find(|&&x| x < 0.0) {
        return Err(Error::NegativeInput { value });
    }
    if !same_layout(small.grid(), large.grid()) || small.grid().r() > large.grid().r() {
        return Err(Error::GridMismatch(
            "domain monotonicity needs equal spacing and r1 <= r2".into(),
        ));
    }
    let a = small.apply(u)?;
    let b = large.apply(u)?;
    Ok(b.iter()
        .zip(&a)
        .map(|(x, y)| x - y)
        .fold(f64::INFINITY, f64::min))
}

/// Result of the global level bound `‖w^ε‖ ≤ ‖g‖/(c₁ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelBound {
    /// `‖w^ε‖∞` with `w^ε(y) = v^ε(εy)/ε`.
    pub w_max: f64,
    pub bound: f64,
    pub slack: f64,
}

/// Solves the macroscale Neumann problem with data `g` and checks the level bound.
pub fn global_level_bound(
    field: &CoefficientField,
    grid: &StripGrid,
    g: &[f64],
    c1: f64,
) -> Result<LevelBound> {
    let u = solve_neumann(field, grid, g)?;
    let eps = grid.eps();
    let w_max = norm_inf(u.row(0)) / eps;
    let bound = norm_inf(g) / (c1 * eps) + 1e-8;
    if w_max > bound {
        return Err(Error::BoundViolation {
            observed: w_max,
            bound,
        });
    }
    Ok(LevelBound {
        w_max,
        bound,
        slack: bound - w_max,
    })
}
