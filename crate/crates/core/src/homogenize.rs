//! ε-sweeps on the strip: recovery of the effective boundary constant `c̄`
//! and Neumann datum `ḡ = −c̄`, oscillation decay of the boundary trace, and
//! the Dirichlet rate study against the effective matrix `Ā`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{solve_cell, CellOptions};
use crate::dtn::solve_phi_and_f;
use crate::error::{Error, Result};
use crate::fields::{CoefficientField, ScalarMode};
use crate::strip::{
    boundary_datum, build_strip_grid, linf_ratio, solve_dirichlet, BottomCondition, FieldRole,
    Scale, StripField, StripGrid, StripOperator,
};

/// Slack allowed in the oscillation decay between consecutive `ε`.
pub const OSC_SLACK: f64 = 1e-3;

/// Largest relative gap between the two Richardson pairs.
pub const RICHARDSON_AGREEMENT: f64 = 0.05;

/// Errors at or below this are treated as exact in the rate study.
pub const EXACT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Nodes per coefficient period along the normal.
    pub resolution: usize,
    /// Lattice periods in the tangential window.
    pub periods: usize,
    /// Also solve for `φ^ε` and record `c₁`, `c₂`.
    pub measure_barrier: bool,
    /// Rate-study error bound added to the interior check.
    pub interior_budget: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            resolution: 8,
            periods: 1,
            measure_barrier: true,
            interior_budget: 0.0,
        }
    }
}

/// Per-`ε` record of a Neumann solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsRecord {
    pub eps: f64,
    /// `v^ε` on `s = 0`.
    pub trace: Vec<f64>,
    pub trace_mean: f64,
    /// `max v^ε − min v^ε`.
    pub osc: f64,
    /// `‖v^ε − v^ε(0)‖∞`, i.e. `‖εw^ε − εw^ε(0)‖∞`.
    pub ishii_defect: f64,
    pub u_max: f64,
    /// `‖u^ε‖∞ / ‖g‖∞` when `g` is nonzero.
    pub linf_constant: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub nodes: usize,
    pub upwinded_nodes: usize,
}

/// Non-fatal observations made during a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Diagnostic {
    OscillationNotDecaying {
        eps: f64,
        previous: f64,
        current: f64,
    },
    CbarOutOfRange {
        cbar: f64,
        min: f64,
        max: f64,
    },
    RichardsonDisagreement {
        fine: f64,
        coarse: f64,
        relative_gap: f64,
    },
    InteriorBoundExceeded {
        defect: f64,
        bound: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub eps_list: Vec<f64>,
    pub records: Vec<EpsRecord>,
    /// Richardson value from the two finest `ε`.
    pub cbar: f64,
    /// Richardson value from the next pair, when there are three or more `ε`.
    pub cbar_coarse: Option<f64>,
    pub richardson_gap: Option<f64>,
    pub gbar: f64,
    pub cbar_in_range: bool,
    /// `‖u^{ε_min} − c̄(1 − s)‖∞`.
    pub interior_defect: f64,
    pub interior_bound: f64,
    pub diagnostics: Vec<Diagnostic>,
}

fn check_eps_list(eps_list: &[f64]) -> Result<()> {
    if eps_list.is_empty() {
        return Err(Error::InvalidInput("empty eps list".into()));
    }
    if let Some(e) = eps_list.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
        return Err(Error::InvalidInput(format!("eps {e} outside (0, 1]")));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput(
            "eps list must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// `M₂ + (M₂ − M₁)ε₂/(ε₁ − ε₂)`, exact for values affine in `ε`.
pub fn richardson(eps1: f64, m1: f64, eps2: f64, m2: f64) -> f64 {
    m2 + (m2 - m1) * eps2 / (eps1 - eps2)
}

fn oscillation(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

fn sweep_one(
    field: &CoefficientField,
    eps: f64,
    opts: &SweepOptions,
) -> Result<(EpsRecord, StripField)> {
    let grid = build_strip_grid(
        field.dim(),
        field.direction(),
        1.0,
        eps,
        Scale::Macro,
        opts.resolution,
        opts.periods,
    )?;
    let g = boundary_datum(field, &grid)?;
    let op = StripOperator::new(field, &grid, BottomCondition::Neumann)?;
    let u = op.solve(&vec![0.0; grid.nt()], &g, FieldRole::Solution)?;
    let trace = u.row(0).to_vec();
    let trace_mean = trace.iter().sum::<f64>() / trace.len() as f64;
    let ishii_defect = trace
        .iter()
        .map(|v| (v - trace[0]).abs())
        .fold(0.0, f64::max);
    let (c1, c2) = if opts.measure_barrier {
        let (probe, _) = solve_phi_and_f(field, eps, opts.resolution, opts.periods)?;
        (Some(probe.c1), Some(probe.c2))
    } else {
        (None, None)
    };
    let upwinded_nodes = op.upwinded_nodes();
    Ok((
        EpsRecord {
            eps,
            osc: oscillation(&trace),
            trace_mean,
            ishii_defect,
            u_max: u.max_abs(),
            linf_constant: linf_ratio(&u, &g),
            c1,
            c2,
            nodes: grid.node_count(),
            upwinded_nodes,
            trace,
        },
        u,
    ))
}

/// Neumann solves across `eps_list` (strictly decreasing), with `c̄` from
/// Richardson extrapolation of the trace means.
pub fn run_sweep(
    field: &CoefficientField,
    eps_list: &[f64],
    opts: &SweepOptions,
) -> Result<SweepReport> {
    check_eps_list(eps_list)?;
    let mut solved: Vec<(EpsRecord, StripField)> = eps_list
        .par_iter()
        .map(|&eps| sweep_one(field, eps, opts))
        .collect::<Result<_>>()?;

    let mut diagnostics = Vec::new();
    for w in solved.windows(2) {
        let (prev, cur) = (&w[0].0, &w[1].0);
        if cur.osc > prev.osc + OSC_SLACK {
            log::warn!(
                "oscillation grew from {} to {} at eps {}",
                prev.osc,
                cur.osc,
                cur.eps
            );
            diagnostics.push(Diagnostic::OscillationNotDecaying {
                eps: cur.eps,
                previous: prev.osc,
                current: cur.osc,
            });
        }
    }

    let k = solved.len();
    let mean = |i: usize| solved[i].0.trace_mean;
    let cbar = if k >= 2 {
        richardson(eps_list[k - 2], mean(k - 2), eps_list[k - 1], mean(k - 1))
    } else {
        mean(0)
    };
    let cbar_coarse =
        (k >= 3).then(|| richardson(eps_list[k - 3], mean(k - 3), eps_list[k - 2], mean(k - 2)));
    let richardson_gap = cbar_coarse.map(|c| (cbar - c).abs() / cbar.abs().max(1e-300));
    if let (Some(coarse), Some(gap)) = (cbar_coarse, richardson_gap) {
        if gap > RICHARDSON_AGREEMENT && (cbar - coarse).abs() > 1e-12 {
            diagnostics.push(Diagnostic::RichardsonDisagreement {
                fine: cbar,
                coarse,
                relative_gap: gap,
            });
        }
    }

    let (last, u) = solved.pop().expect("nonempty sweep");
    let (min, max) = last
        .trace
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let tol = 1e-9 * cbar.abs().max(1.0);
    let cbar_in_range = cbar >= min - tol && cbar <= max + tol;
    if !cbar_in_range {
        diagnostics.push(Diagnostic::CbarOutOfRange { cbar, min, max });
    }

    let grid = &u.grid;
    let mut interior_defect: f64 = 0.0;
    for i in 0..=grid.ns() {
        let limit = cbar * (1.0 - grid.s(i));
        for &v in u.row(i) {
            interior_defect = interior_defect.max((v - limit).abs());
        }
    }
    let interior_bound = last.osc + opts.interior_budget + tol;
    if interior_defect > interior_bound {
        diagnostics.push(Diagnostic::InteriorBoundExceeded {
            defect: interior_defect,
            bound: interior_bound,
        });
    }

    let mut records: Vec<EpsRecord> = solved.into_iter().map(|(r, _)| r).collect();
    records.push(last);
    Ok(SweepReport {
        eps_list: eps_list.to_vec(),
        records,
        cbar,
        cbar_coarse,
        richardson_gap,
        gbar: -cbar,
        cbar_in_range,
        interior_defect,
        interior_bound,
        diagnostics,
    })
}

/// Least-squares line through `(ln ε, ln error)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

pub fn fit_order(errors: &[f64], eps_list: &[f64]) -> Result<OrderFit> {
    if errors.len() != eps_list.len() {
        return Err(Error::InvalidInput(format!(
            "{} errors for {} eps values",
            errors.len(),
            eps_list.len()
        )));
    }
    if errors.len() < 3 {
        return Err(Error::InvalidInput(
            "order fit needs at least 3 entries".into(),
        ));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 1e-12)) {
        return Err(Error::DegenerateFit(format!(
            "error entry {e} is at or below 1e-12"
        )));
    }
    let x: Vec<f64> = eps_list.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all eps values coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(OrderFit {
        slope,
        intercept,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateOptions {
    pub resolution: usize,
    pub periods: usize,
    /// Cell grid used for `Ā`.
    pub cell_n: usize,
    /// Repeat every solve at twice the resolution.
    pub refine: bool,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            resolution: 8,
            periods: 1,
            cell_n: 64,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub eps_list: Vec<f64>,
    pub effective_matrix: Vec<Vec<f64>>,
    /// `‖w^ε − w̄‖∞` over the strip.
    pub errors: Vec<f64>,
    pub refined_errors: Option<Vec<f64>>,
    /// `|e_{h/2} − e_h| / e_h` per entry.
    pub refinement_change: Option<Vec<f64>>,
    pub fit: Option<OrderFit>,
    /// `max error/ε`.
    pub constant: f64,
    /// Every error is at round-off level, so no order is fitted.
    pub degenerate_exact: bool,
}

/// `f` on the `s = 0` row, rejecting modes that are not periodic on the window.
pub fn dirichlet_datum(grid: &StripGrid, modes: &[ScalarMode]) -> Result<Vec<f64>> {
    let dim = grid.dim();
    if let Some(d) = grid.direction() {
        let tau = d.tangent();
        for m in modes {
            let turns = (m.k[0] as f64 * tau[0] + m.k[1] as f64 * tau[1]) * grid.window();
            if (turns - turns.round()).abs() > 1e-9 {
                return Err(Error::IncommensurateWindow(format!(
                    "datum mode {:?} makes {turns} turns over the window",
                    m.k
                )));
            }
        }
    }
    Ok((0..grid.nt())
        .map(|j| {
            let x = grid.position(j, 0);
            modes
                .iter()
                .map(|m| {
                    let ph: f64 = (0..dim).map(|l| m.k[l] as f64 * x[l]).sum::<f64>()
                        * 2.0
                        * std::f64::consts::PI;
                    m.value * ph.cos() + m.sin_value.unwrap_or(0.0) * ph.sin()
                })
                .sum()
        })
        .collect())
}

fn rate_error(
    field: &CoefficientField,
    effective: &CoefficientField,
    f: &[ScalarMode],
    eps: f64,
    resolution: usize,
    periods: usize,
) -> Result<f64> {
    let grid = build_strip_grid(
        field.dim(),
        field.direction(),
        1.0,
        eps,
        Scale::Macro,
        resolution,
        periods,
    )?;
    let bottom = dirichlet_datum(&grid, f)?;
    let top = vec![0.0; grid.nt()];
    let w = solve_dirichlet(field, &grid, &top, &bottom)?;
    let wbar = solve_dirichlet(effective, &grid, &top, &bottom)?;
    Ok(w.values
        .iter()
        .zip(&wbar.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Dirichlet problem at each `ε` against the effective problem with `Ā`
/// on the same nodes.
pub fn rate_study(
    field: &CoefficientField,
    f: &[ScalarMode],
    eps_list: &[f64],
    opts: &RateOptions,
) -> Result<RateReport> {
    check_eps_list(eps_list)?;
    if let Some(m) = f.iter().find(|m| m.k.len() != field.dim()) {
        return Err(Error::InvalidInput(format!(
            "datum mode {:?} does not have {} entries",
            m.k,
            field.dim()
        )));
    }
    let cell = solve_cell(
        field,
        opts.cell_n,
        &CellOptions {
            second_correctors: false,
            ..CellOptions::default()
        },
    )?;
    let mut effective = CoefficientField::constant(&cell.abar)?;
    if let Some(d) = field.direction() {
        effective = effective.with_direction(d)?;
    }
    let errors: Vec<f64> = eps_list
        .par_iter()
        .map(|&eps| rate_error(field, &effective, f, eps, opts.resolution, opts.periods))
        .collect::<Result<_>>()?;
    let refined_errors: Option<Vec<f64>> = if opts.refine {
        Some(
            eps_list
                .par_iter()
                .map(|&eps| {
                    rate_error(field, &effective, f, eps, 2 * opts.resolution, opts.periods)
                })
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };
    let refinement_change = refined_errors.as_ref().map(|r| {
        r.iter()
            .zip(&errors)
            .map(|(fine, coarse)| (fine - coarse).abs() / coarse.max(1e-300))
            .collect()
    });
    let degenerate_exact = errors.iter().all(|&e| e <= EXACT_TOL);
    let fit = if degenerate_exact || errors.len() < 3 {
        None
    } else {
        Some(fit_order(&errors, eps_list)?)
    };
    let constant = errors
        .iter()
        .zip(eps_list)
        .map(|(e, eps)| e / eps)
        .fold(0.0, f64::max);
    Ok(RateReport {
        eps_list: eps_list.to_vec(),
        effective_matrix: cell.abar,
        errors,
        refined_errors,
        refinement_change,
        fit,
        constant,
        degenerate_exact,
    })
}
