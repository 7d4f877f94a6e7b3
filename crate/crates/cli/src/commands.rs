//! One function per subcommand. Each returns a JSON payload, the tables it
//! wrote, and any invariant violations it observed.

use std::path::Path;

use homoglab_core::cell::{solve_cell, CellOptions};
use homoglab_core::dtn::{
    check_constant_shift, check_domain_monotonicity, check_rescaling, global_level_bound,
    macro_grid, micro_grid, psi_difference, solve_phi_and_f, DtnOperator,
};
use homoglab_core::fields::{sym_eigenvalues, CoefficientField, ScalarMode};
use homoglab_core::homogenize::{fit_order, rate_study, run_sweep, RateOptions, SweepOptions};
use homoglab_core::quasiperiod::{
    convergents, find_almost_period, lattice_distance, translation_defect, NormalLine,
    SlopeDirection,
};
use homoglab_core::strip::{
    boundary_datum, normal_derivative, BottomCondition, FieldRole, StripOperator,
};
use homoglab_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{Bc, RunConfig};
use crate::output::{num, opt, write_dat, Table};
use crate::{CliError, Command};

/// Tolerances for the `dtn` checks.
const SHIFT_TOL: f64 = 1e-10;
const RESCALE_TOL: f64 = 1e-9;
const MONOTONE_TOL: f64 = 1e-10;
const SANDWICH_TOL: f64 = 1e-10;
const MONOTONE_SAMPLES: usize = 20;

pub struct Outcome {
    pub payload: Value,
    pub artifacts: Vec<String>,
    pub failures: Vec<String>,
}

impl Outcome {
    fn new(payload: Value) -> Self {
        Self {
            payload,
            artifacts: Vec::new(),
            failures: Vec::new(),
        }
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

pub fn run(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let field = cfg.spec().build()?;
    match cmd {
        Command::Cell => cell(cfg, &field, out),
        Command::Strip => strip(cfg, &field, out),
        Command::Dtn => dtn(cfg, &field, out),
        Command::Period => period(cfg, &field, out),
        Command::Sweep => sweep(cfg, &field, out),
        Command::Rates => rates(cfg, &field, out),
    }
}

fn cell(cfg: &RunConfig, field: &CoefficientField, out: &Path) -> Result<Outcome, CliError> {
    let opts = CellOptions {
        centering: cfg.centering,
        ..CellOptions::default()
    };
    let sol = solve_cell(field, cfg.cell_n, &opts)?;
    let dim = sol.dim;
    let mut a3 = [[0.0; 3]; 3];
    for i in 0..dim {
        for j in 0..dim {
            a3[i][j] = sol.abar[i][j];
        }
    }

    let mut ref_header = vec!["n".to_string()];
    for i in 1..=dim {
        ref_header.extend((1..=dim).map(|j| format!("abar{i}{j}")));
    }
    let ref_header: Vec<&str> = ref_header.iter().map(|s| s.as_str()).collect();
    let mut refinement = Table::new("cell_refinement", &ref_header);
    let mut levels: Vec<usize> = [cfg.cell_n / 4, cfg.cell_n / 2]
        .into_iter()
        .filter(|&n| n >= 8)
        .collect();
    levels.dedup();
    let mut history = Vec::new();
    for n in levels {
        let coarse = solve_cell(field, n, &opts)?;
        history.push((n, coarse.abar));
    }
    history.push((cfg.cell_n, sol.abar.clone()));
    for (n, abar) in &history {
        let mut row = vec![n.to_string()];
        row.extend(abar.iter().flat_map(|r| r.iter().map(|v| num(*v))));
        refinement.push(row);
    }
    let mut header: Vec<String> = (1..=dim).map(|i| format!("y{i}")).collect();
    header.push("m".into());
    header.extend((1..=dim).map(|i| format!("chi{i}")));
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut table = Table::new("cell", &header);
    let n = sol.n;
    let h = 1.0 / n as f64;
    for idx in 0..sol.m.len() {
        let mut row = Vec::with_capacity(2 * dim + 1);
        let mut rem = idx;
        for _ in 0..dim {
            row.push(num((rem % n) as f64 * h));
            rem /= n;
        }
        row.push(num(sol.m[idx]));
        row.extend(sol.chi.iter().map(|c| num(c[idx])));
        table.push(row);
    }
    let mut o = Outcome::new(json!({
        "refinement": history.iter().map(|(n, a)| json!({ "n": n, "abar": a })).collect::<Vec<_>>(),
        "dim": dim,
        "n": n,
        "abar": sol.abar,
        "abar_eigenvalues": sym_eigenvalues(&a3, dim),
        "drift_defect": sol.drift_defect,
        "drift_offset": sol.drift_offset,
        "upwinded_nodes": sol.upwinded_nodes,
        "residuals": to_value(&sol.residuals),
        "min_m": sol.m.iter().copied().fold(f64::INFINITY, f64::min),
    }));
    o.artifacts.push(table.write(out)?);
    o.artifacts.push(refinement.write(out)?);
    Ok(o)
}

fn strip(cfg: &RunConfig, field: &CoefficientField, out: &Path) -> Result<Outcome, CliError> {
    let mut entries = Vec::new();
    let mut artifacts = Vec::new();
    for (k, &eps) in cfg.eps.iter().enumerate() {
        let mut grid = macro_grid(field, eps, cfg.resolution, cfg.periods)?;
        if let Some(h) = cfg.height {
            grid = grid.with_height(h)?;
        }
        let g = boundary_datum(field, &grid)?;
        let bottom = match cfg.bc {
            Bc::Neumann => BottomCondition::Neumann,
            Bc::Dirichlet => BottomCondition::Dirichlet,
        };
        let op = StripOperator::new(field, &grid, bottom)?;
        let u = op.solve(&vec![0.0; grid.nt()], &g, FieldRole::Solution)?;
        let trace = match cfg.bc {
            Bc::Neumann => u.row(0).to_vec(),
            Bc::Dirichlet => normal_derivative(&u),
        };
        let mut trace_table = Table::new(&format!("strip_trace_{k}"), &["t", "trace"]);
        for (j, v) in trace.iter().enumerate() {
            trace_table.push(vec![num(grid.t(j)), num(*v)]);
        }
        artifacts.push(trace_table.write(out)?);
        let mean = trace.iter().sum::<f64>() / trace.len() as f64;
        let osc = trace.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - trace.iter().copied().fold(f64::INFINITY, f64::min);
        let mut table = Table::new(&format!("strip_{k}"), &["t", "s", "u"]);
        for (t, s, v) in u.csv_rows() {
            table.push(vec![num(t), num(s), num(v)]);
        }
        artifacts.push(table.write(out)?);
        entries.push(json!({
            "eps": eps,
            "bc": cfg.bc,
            "height": grid.r(),
            "ns": grid.ns(),
            "nt": grid.nt(),
            "hs": grid.hs(),
            "ht": grid.ht(),
            "window": grid.window(),
            "trace_mean": mean,
            "trace_osc": osc,
            "u_max": u.max_abs(),
            "upwinded_nodes": op.upwinded_nodes(),
        }));
    }
    let mut o = Outcome::new(json!({ "solves": entries }));
    o.artifacts = artifacts;
    Ok(o)
}

fn random_trace(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn dtn(cfg: &RunConfig, field: &CoefficientField, out: &Path) -> Result<Outcome, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    let mut artifacts = Vec::new();
    let mut probes = Vec::new();
    let mut operators = Vec::new();
    for (k, &eps) in cfg.eps.iter().enumerate() {
        let (probe, _) = solve_phi_and_f(field, eps, cfg.resolution, cfg.periods)?;
        let micro = micro_grid(field, eps, cfg.resolution, cfg.periods)?;
        let op = DtnOperator::new(field, &micro)?;
        let mut entry = json!({
            "eps": eps,
            "c1": probe.c1,
            "c2": probe.c2,
            "c_rate": probe.c_rate,
            "barriers": to_value(&probe.barriers),
        });
        let mut table = Table::new(&format!("f_eps_{k}"), &["t", "f_eps"]);
        for (j, f) in probe.f_eps.iter().enumerate() {
            table.push(vec![num(micro.t(j)), num(*f)]);
        }
        artifacts.push(table.write(out)?);

        if cfg.checks.shift {
            let phi = random_trace(&mut rng, micro.nt(), -1.0, 1.0);
            let c = -5.0;
            let defect = check_constant_shift(&op, &probe, &phi, c)?;
            if defect > SHIFT_TOL * (1.0 + c.abs()) {
                failures.push(format!("shift defect {defect:e} at eps {eps}"));
            }
            entry["shift_defect"] = json!(defect);
        }
        if cfg.checks.rescale {
            let macro_g = macro_grid(field, eps, cfg.resolution, cfg.periods)?;
            let v = random_trace(&mut rng, micro.nt(), -1.0, 1.0);
            let defect = check_rescaling(field, &macro_g, &micro, &v)?;
            if defect > RESCALE_TOL {
                failures.push(format!("rescaling defect {defect:e} at eps {eps}"));
            }
            entry["rescale_defect"] = json!(defect);
        }
        if cfg.checks.barrier {
            entry["sandwich"] = to_value(&probe.sandwich);
            if let Some(s) = probe.sandwich {
                if s.upper_violation > SANDWICH_TOL || s.lower_violation > SANDWICH_TOL {
                    failures.push(format!("barrier sandwich violated at eps {eps}: {s:?}"));
                }
            }
            let macro_g = macro_grid(field, eps, cfg.resolution, cfg.periods)?;
            let g = boundary_datum(field, &macro_g)?;
            match global_level_bound(field, &macro_g, &g, probe.c1) {
                Ok(b) => entry["level_bound"] = to_value(&b),
                Err(Error::BoundViolation { observed, bound }) => {
                    failures.push(format!("level bound {observed} > {bound} at eps {eps}"));
                    entry["level_bound"] = json!({ "w_max": observed, "bound": bound });
                }
                Err(e) => return Err(e.into()),
            }
        }
        entries.push(entry);
        probes.push(probe);
        operators.push(op);
    }

    let mut pairs = Vec::new();
    for k in 1..cfg.eps.len() {
        let mut pair = json!({ "eps": [cfg.eps[k - 1], cfg.eps[k]] });
        if probes[k - 1].psi_rows == probes[k].psi_rows && probes[k - 1].nt == probes[k].nt {
            pair["psi_difference"] = json!(psi_difference(&probes[k - 1], &probes[k])?);
        }
        if cfg.checks.monotone {
            let (small, large) = if cfg.eps[k] < cfg.eps[k - 1] {
                (&operators[k - 1], &operators[k])
            } else {
                (&operators[k], &operators[k - 1])
            };
            let mut worst = f64::INFINITY;
            for _ in 0..MONOTONE_SAMPLES {
                let u = random_trace(&mut rng, small.grid().nt(), 0.0, 1.0);
                worst = worst.min(check_domain_monotonicity(small, large, &u)?);
            }
            if worst < -MONOTONE_TOL {
                failures.push(format!("domain monotonicity {worst:e} for pair {k}"));
            }
            pair["monotone_min"] = json!(worst);
        }
        pairs.push(pair);
    }
    let mut o = Outcome::new(json!({ "per_eps": entries, "pairs": pairs }));
    o.artifacts = artifacts;
    o.failures = failures;
    Ok(o)
}

fn period(cfg: &RunConfig, field: &CoefficientField, out: &Path) -> Result<Outcome, CliError> {
    let surrogate = field.direction();
    type Line = (Box<dyn NormalLine>, Option<Vec<(i64, i64)>>);
    let (line, conv): Line = match (cfg.slope, surrogate) {
        (Some(s), _) => (Box::new(SlopeDirection::new(s)?), Some(convergents(s, 12)?)),
        (None, Some(d)) => (Box::new(d), None),
        (None, None) => {
            return Err(CliError::Validation(
                "period needs a slope or a two-dimensional problem with a direction".into(),
            ))
        }
    };
    let t = line.tangent();
    let mut periods = Vec::new();
    for &rho in &cfg.rho {
        let ap = find_almost_period(line.as_ref(), 0.0, rho)?;
        periods.push(json!({
            "rho": rho,
            "tau": ap.tau,
            "achieved": ap.rho,
            "lattice_distance": lattice_distance([ap.tau * t[0], ap.tau * t[1]]),
            "search_radius": ap.search_radius,
            "hat_tau": ap.hat_tau,
            "hat_z": ap.hat_z,
        }));
    }

    let mut table = Table::new(
        "period",
        &["rho", "tau", "lattice_distance", "eps", "defect"],
    );
    let mut defects = Vec::new();
    if let Some(d) = surrogate {
        let taus: Vec<f64> = cfg
            .rho
            .iter()
            .map(|&r| find_almost_period(&d, 0.0, r).map(|a| a.tau))
            .collect::<Result<_, Error>>()?;
        for &eps in &cfg.eps {
            let grid = macro_grid(field, eps, cfg.resolution, cfg.periods)?;
            let g = boundary_datum(field, &grid)?;
            let u = homoglab_core::strip::solve_neumann(field, &grid, &g)?;
            let w: Vec<f64> = u.row(0).iter().map(|v| v / eps).collect();
            let window = grid.window() / eps;
            let values: Vec<f64> = taus
                .iter()
                .map(|&tau| translation_defect(&w, window, tau))
                .collect();
            let monotone = values.windows(2).all(|p| p[1] <= p[0] + 1e-12);
            let fit = fit_order(&values, &cfg.rho).ok();
            let constant = fit.map(|f| {
                cfg.rho
                    .iter()
                    .zip(&values)
                    .map(|(r, v)| v / (r.powf(f.slope) * (1.0 + 1.0 / eps)))
                    .fold(0.0, f64::max)
            });
            for ((rho, tau), v) in cfg.rho.iter().zip(&taus).zip(&values) {
                let dist = lattice_distance([tau * d.tangent()[0], tau * d.tangent()[1]]);
                table.push(vec![num(*rho), num(*tau), num(dist), num(eps), num(*v)]);
            }
            defects.push(json!({
                "eps": eps,
                "defects": values,
                "monotone_in_rho": monotone,
                "exponent": fit.map(|f| f.slope),
                "constant": constant,
            }));
        }
    } else {
        for p in &periods {
            table.push(vec![
                num(p["rho"].as_f64().unwrap_or(f64::NAN)),
                num(p["tau"].as_f64().unwrap_or(f64::NAN)),
                num(p["lattice_distance"].as_f64().unwrap_or(f64::NAN)),
                String::new(),
                String::new(),
            ]);
        }
    }
    let mut o = Outcome::new(json!({
        "slope": line.slope(),
        "convergents": conv,
        "almost_periods": periods,
        "translation_defects": defects,
    }));
    o.artifacts.push(table.write(out)?);
    Ok(o)
}

fn sweep(cfg: &RunConfig, field: &CoefficientField, out: &Path) -> Result<Outcome, CliError> {
    let opts = SweepOptions {
        resolution: cfg.resolution,
        periods: cfg.periods,
        ..SweepOptions::default()
    };
    let rep = run_sweep(field, &cfg.eps, &opts)?;
    let mut table = Table::new(
        "sweep",
        &[
            "eps",
            "trace_mean",
            "osc",
            "ishii_defect",
            "u_max",
            "linf_constant",
            "c1",
            "c2",
        ],
    );
    let mut traces = Table::new("sweep_traces", &["eps", "j", "v"]);
    for r in &rep.records {
        table.push(vec![
            num(r.eps),
            num(r.trace_mean),
            num(r.osc),
            num(r.ishii_defect),
            num(r.u_max),
            opt(r.linf_constant),
            opt(r.c1),
            opt(r.c2),
        ]);
        for (j, v) in r.trace.iter().enumerate() {
            traces.push(vec![num(r.eps), j.to_string(), num(*v)]);
        }
    }
    let mut o = Outcome::new(to_value(&rep));
    o.artifacts.push(table.write(out)?);
    o.artifacts.push(traces.write(out)?);
    let col = |f: fn(&homoglab_core::homogenize::EpsRecord) -> f64| -> Vec<(f64, f64)> {
        rep.records.iter().map(|r| (r.eps, f(r))).collect()
    };
    o.artifacts.push(write_dat(out, "osc", &col(|r| r.osc))?);
    o.artifacts
        .push(write_dat(out, "trace_mean", &col(|r| r.trace_mean))?);
    o.artifacts
        .push(write_dat(out, "ishii_defect", &col(|r| r.ishii_defect))?);
    Ok(o)
}

fn rates(cfg: &RunConfig, field: &CoefficientField, out: &Path) -> Result<Outcome, CliError> {
    let datum = if cfg.datum.is_empty() {
        vec![ScalarMode {
            k: vec![0; field.dim()],
            value: 1.0,
            sin_value: None,
        }]
    } else {
        cfg.datum.clone()
    };
    let opts = RateOptions {
        resolution: cfg.resolution,
        periods: cfg.periods,
        cell_n: cfg.cell_n,
        refine: true,
    };
    let rep = rate_study(field, &datum, &cfg.eps, &opts)?;
    let mut table = Table::new(
        "rates",
        &["eps", "error", "refined_error", "refinement_change"],
    );
    for (k, (&eps, &err)) in rep.eps_list.iter().zip(&rep.errors).enumerate() {
        table.push(vec![
            num(eps),
            num(err),
            opt(rep.refined_errors.as_ref().map(|r| r[k])),
            opt(rep.refinement_change.as_ref().map(|r| r[k])),
        ]);
    }
    let mut o = Outcome::new(to_value(&rep));
    o.artifacts.push(table.write(out)?);
    let pts: Vec<(f64, f64)> = rep
        .eps_list
        .iter()
        .copied()
        .zip(rep.errors.iter().copied())
        .collect();
    o.artifacts.push(write_dat(out, "rates", &pts)?);
    Ok(o)
}
