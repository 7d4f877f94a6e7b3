//! Acceptance suite: one line per criterion, nonzero exit if any fails.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use common::*;
use homoglab_core::cell::{assemble_generator, solve_cell, CellCoefficients, CellOptions};
use homoglab_core::dtn::{
    check_constant_shift, check_domain_monotonicity, check_rescaling, macro_grid, micro_grid,
    solve_phi_and_f, DtnOperator,
};
use homoglab_core::fields::{CoefficientField, ScalarMode};
use homoglab_core::homogenize::{fit_order, rate_study, run_sweep, RateOptions, SweepOptions};
use homoglab_core::quasiperiod::{
    convergents, find_almost_period, lattice_distance, translation_defect, NormalLine,
    SlopeDirection,
};
use homoglab_core::strip::{
    boundary_datum, build_strip_grid, solve_dirichlet, solve_neumann, Scale, StripGrid,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

struct Outcome {
    pass: bool,
    detail: String,
}

fn sci(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", items.join(", "))
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// `I₀(1) = Σ (1/4)^k / (k!)²`.
fn bessel_i0_one() -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..30 {
        term *= 0.25 / (k * k) as f64;
        sum += term;
    }
    sum
}

/// Composite Simpson rule on `[0, 1]`.
fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let mut s = f(0.0) + f(1.0);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn criterion_1() -> Outcome {
    let harmonic = 1.0 / simpson(|y| 1.0 / (2.0 + (2.0 * PI * y).sin()), 20_000);
    let sol = solve_cell(&layered_1d(), 256, &CellOptions::default()).unwrap();
    let abar = sol.abar[0][0];
    let err = (abar - harmonic).abs();
    outcome(
        err <= 1e-3 && (harmonic - 3f64.sqrt()).abs() < 1e-9,
        format!("abar = {abar:.10}, harmonic mean oracle = {harmonic:.10}, |diff| = {err:.2e} (tol 1e-3)"),
    )
}

fn criterion_2() -> Outcome {
    let i0 = bessel_i0_one();
    let oracle = i0.powi(-2);
    let sol = solve_cell(&drift_1d(), 256, &CellOptions::default()).unwrap();
    let abar = sol.abar[0][0];
    let err = (abar - oracle).abs();
    outcome(
        err <= 1e-3,
        format!("abar = {abar:.6}, I0(1)^-2 = {oracle:.6}, |diff| = {err:.2e} (tol 1e-3)"),
    )
}

fn criterion_3() -> Outcome {
    let i0 = bessel_i0_one();
    let cases: [(&str, CoefficientField, Box<dyn Fn(f64) -> f64>); 2] = [
        (
            "layered",
            layered_1d(),
            Box::new(|y: f64| 3f64.sqrt() / (2.0 + (2.0 * PI * y).sin())),
        ),
        (
            "drift",
            drift_1d(),
            Box::new(move |y: f64| (2.0 * PI * y).cos().exp() / i0),
        ),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, field, exact) in cases {
        let mut errs = Vec::new();
        let mut worst_adjoint: f64 = 0.0;
        let mut worst_mass: f64 = 0.0;
        let mut min_m = f64::INFINITY;
        for n in [32usize, 64, 128, 256] {
            let sol = solve_cell(&field, n, &CellOptions::default()).unwrap();
            let coeffs = CellCoefficients::sample(&field, n).unwrap();
            let op = assemble_generator(&coeffs).unwrap();
            let adj = op.matrix().transpose().matvec(&sol.m);
            let norm = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            worst_adjoint = worst_adjoint.max(norm(&adj) / norm(&sol.m));
            let h = 1.0 / n as f64;
            worst_mass = worst_mass.max((sol.m.iter().sum::<f64>() * h - 1.0).abs());
            min_m = min_m.min(sol.m.iter().copied().fold(f64::INFINITY, f64::min));
            if n <= 128 {
                let e = sol
                    .m
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (v - exact(i as f64 * h)).abs())
                    .fold(0.0, f64::max);
                errs.push(e);
            }
        }
        let eps = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
        // Round-off level errors mean the scheme reproduces m exactly.
        let (order_ok, order_txt) = if errs.iter().all(|&e| e <= 1e-12) {
            (
                true,
                format!(
                    "exact (max err {:.1e})",
                    errs.iter().copied().fold(0.0, f64::max)
                ),
            )
        } else {
            let slope = fit_order(&errs, &eps).unwrap().slope;
            (slope >= 1.5, format!("order {slope:.3}"))
        };
        let ok = worst_adjoint <= 1e-8 && min_m > 0.0 && worst_mass <= 1e-12 && order_ok;
        pass &= ok;
        parts.push(format!(
            "{name}: |L*m|/|m| = {worst_adjoint:.1e}, min m = {min_m:.4}, |sum m h - 1| = {worst_mass:.1e}, refinement {order_txt}"
        ));
    }
    outcome(pass, parts.join("; "))
}

fn random_trace(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn criterion_4() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let laplace = laplace_2d(2, 3, json!([]));
    let mut worst: f64 = 0.0;
    for eps in [0.25, 0.125, 0.0625] {
        let (p, _) = solve_phi_and_f(&laplace, eps, 8, 1).unwrap();
        worst = worst.max((p.c1 - 1.0).abs()).max((p.c2 - 1.0).abs());
    }
    pass &= worst <= 1e-8;
    parts.push(format!("Laplace |f/eps - 1| = {worst:.1e}"));

    let mut c1_min = f64::INFINITY;
    let mut ordered = true;
    for (field, res) in [(drift_1d(), 16), (aniso_2d(2, 3), 8)] {
        let (p, _) = solve_phi_and_f(&field, 0.125, res, 1).unwrap();
        ordered &= p.c1 > 0.0 && p.c1 <= p.c2;
        c1_min = c1_min.min(p.c1);
    }
    pass &= ordered && c1_min > 0.01;
    parts.push(format!("drift min c1 = {c1_min:.4}"));

    let field = aniso_2d(2, 3);
    let eps = 0.125;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (probe, _) = solve_phi_and_f(&field, eps, 8, 1).unwrap();
    let micro = micro_grid(&field, eps, 8, 1).unwrap();
    let dtn = DtnOperator::new(&field, &micro).unwrap();
    let phi = random_trace(&mut rng, micro.nt(), -1.0, 1.0);
    let shift = check_constant_shift(&dtn, &probe, &phi, -5.0).unwrap();
    pass &= shift <= 1e-9;
    parts.push(format!("shift defect = {shift:.1e}"));

    let macro_g = macro_grid(&field, eps, 8, 1).unwrap();
    let v = random_trace(&mut rng, micro.nt(), -1.0, 1.0);
    let rescale = check_rescaling(&field, &macro_g, &micro, &v).unwrap();
    pass &= rescale <= 1e-9;
    parts.push(format!("rescaling defect = {rescale:.1e}"));

    let small = DtnOperator::new(&field, &micro_grid(&field, 0.25, 8, 1).unwrap()).unwrap();
    let mut mono = f64::INFINITY;
    for _ in 0..20 {
        let u = random_trace(&mut rng, micro.nt(), 0.0, 1.0);
        mono = mono.min(check_domain_monotonicity(&small, &dtn, &u).unwrap());
    }
    pass &= mono >= -1e-10;
    parts.push(format!("domain monotonicity min = {mono:.3e}"));
    outcome(pass, parts.join("; "))
}

fn criterion_5() -> Outcome {
    let one = [ScalarMode {
        k: vec![0, 0],
        value: 1.0,
        sin_value: None,
    }];
    let rep = rate_study(
        &aniso_2d(2, 3),
        &one,
        &[0.125, 0.0625, 0.03125],
        &RateOptions {
            resolution: 8,
            periods: 1,
            cell_n: 64,
            refine: true,
        },
    )
    .unwrap();
    let order = rep.fit.map(|f| f.slope).unwrap_or(f64::NAN);
    let change = rep
        .refinement_change
        .as_ref()
        .unwrap()
        .iter()
        .copied()
        .fold(0.0, f64::max);
    outcome(
        order >= 0.8 && change < 0.2,
        format!(
            "errors = {}, order = {order:.3} (min 0.8), max h/2 change = {:.1}% (max 20%), C = {:.4}",
            sci(&rep.errors),
            change * 100.0,
            rep.constant
        ),
    )
}

fn criterion_6() -> Outcome {
    let eps_list = [0.25, 0.125, 0.0625, 0.03125];
    let opts = SweepOptions {
        measure_barrier: false,
        ..SweepOptions::default()
    };
    let g0 = 0.7;
    let flat = laplace_2d(2, 3, json!([{"k": [0, 0], "value": g0}]));
    let rep = run_sweep(&flat, &eps_list, &opts).unwrap();
    let per_eps = rep
        .records
        .iter()
        .map(|r| (-r.trace_mean - g0).abs())
        .fold(0.0, f64::max);
    let flat_ok = per_eps <= 1e-8 && (rep.gbar - g0).abs() <= 1e-8;

    let osc = laplace_2d(
        2,
        3,
        json!([{"k": [0, 0], "value": 1.0}, {"k": [1, 0], "value": 1.0}]),
    );
    let rep = run_sweep(&osc, &eps_list, &opts).unwrap();
    let (first, last) = (rep.records[0].osc, rep.records[3].osc);
    let gap = rep.richardson_gap.unwrap();
    outcome(
        flat_ok && last * 2.0 <= first && gap <= 0.05,
        format!(
            "flat: max |gbar(eps) - g0| = {per_eps:.1e}; oscillatory: osc 1/4 = {first:.4e}, osc 1/32 = {last:.4e}, cbar = {:.6}, pair gap = {:.2e}",
            rep.cbar, gap
        ),
    )
}

/// Continued fraction of `(P + √D)/Q` in exact integer arithmetic.
fn quadratic_convergents(mut p: i64, mut q: i64, d: i64, count: usize) -> Vec<(i64, i64)> {
    let root = (d as f64).sqrt();
    let (mut h0, mut h1, mut k0, mut k1) = (0i64, 1i64, 1i64, 0i64);
    let mut out = Vec::new();
    for _ in 0..count {
        // a = floor((p + √d)/q) is the largest a with aq − p ≤ √d (q > 0).
        let fits = |a: i64| a * q - p <= 0 || (a * q - p).pow(2) <= d;
        let mut a = ((p as f64 + root) / q as f64).floor() as i64;
        while fits(a + 1) {
            a += 1;
        }
        while !fits(a) {
            a -= 1;
        }
        (h0, h1) = (h1, a * h1 + h0);
        (k0, k1) = (k1, a * k1 + k0);
        out.push((h1, k1));
        p = a * q - p;
        q = (d - p * p) / q;
    }
    out
}

/// First local minimum of `dist(sτ̂, Z²)` beyond `s₀` with value at most `rho`.
fn brute_first_period(
    line: &dyn NormalLine,
    s0: f64,
    rho: f64,
    smax: f64,
    step: f64,
) -> Option<f64> {
    let t = line.tangent();
    let d = |s: f64| lattice_distance([s * t[0], s * t[1]]);
    let mut s = s0 + 1e-3;
    let (mut prev, mut cur) = (d(s - step), d(s));
    while s < smax {
        let next = d(s + step);
        if cur <= prev && cur <= next && cur <= rho {
            return Some(s);
        }
        (prev, cur) = (cur, next);
        s += step;
    }
    None
}

fn surrogate_trace(field: &CoefficientField, eps: f64) -> (Vec<f64>, StripGrid) {
    let grid = build_strip_grid(2, field.direction(), 1.0, eps, Scale::Macro, 8, 1).unwrap();
    let g = boundary_datum(field, &grid).unwrap();
    let u = solve_neumann(field, &grid, &g).unwrap();
    (u.row(0).iter().map(|v| v / eps).collect(), grid)
}

fn criterion_7() -> Outcome {
    let golden = SlopeDirection::golden();
    let conv = convergents(golden.slope(), 8).unwrap();
    let oracle = quadratic_convergents(1, 2, 5, 8);
    let conv_ok = conv == oracle;

    let ap = find_almost_period(&golden, 0.0, 0.05).unwrap();
    let t = golden.tangent();
    let dist = lattice_distance([ap.tau * t[0], ap.tau * t[1]]);
    let brute = brute_first_period(&golden, 0.0, 0.05, 100.0, 1e-5).unwrap();
    let ratio = ap.tau / brute;
    let ap_ok = dist <= 0.05 + 1e-12 && (1.0 / 3.0..=3.0).contains(&ratio);

    let eps = 0.125;
    let field = aniso_2d(21, 13);
    let (w, grid) = surrogate_trace(&field, eps);
    let window = grid.window() / eps;
    let d = field.direction().unwrap();
    let mut defects = Vec::new();
    for rho in [0.2, 0.1, 0.05] {
        let p = find_almost_period(&d, 0.0, rho).unwrap();
        defects.push(translation_defect(&w, window, p.tau));
    }
    let mono = defects.windows(2).all(|p| p[1] < p[0]);
    outcome(
        conv_ok && ap_ok && mono,
        format!(
            "convergents {conv:?} match oracle: {conv_ok}; rho 0.05: tau = {:.4}, lattice dist = {dist:.4}, brute tau = {brute:.4}, ratio = {ratio:.3}; defects (rho 0.2, 0.1, 0.05) = {}",
            ap.tau,
            sci(&defects)
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let families: Vec<(&str, CoefficientField, usize)> = vec![
        ("laplace", laplace_2d(2, 3, json!([])), 8),
        ("aniso", aniso_2d(2, 3), 8),
        ("layered", layered_1d(), 8),
        ("drift", drift_1d(), 16),
    ];
    let mut worst = f64::NEG_INFINITY;
    let mut pairs = 0;
    for (_, field, res) in &families {
        let grid = build_strip_grid(
            field.dim(),
            field.direction(),
            1.0,
            0.125,
            Scale::Macro,
            *res,
            1,
        )
        .unwrap();
        let nt = grid.nt();
        for _ in 0..50 {
            // Dirichlet: lower data on both boundaries gives the lower solution.
            let (top, bot) = (
                random_trace(&mut rng, nt, -1.0, 1.0),
                random_trace(&mut rng, nt, -1.0, 1.0),
            );
            let top2: Vec<f64> = top.iter().map(|x| x + rng.gen_range(0.0..0.5)).collect();
            let bot2: Vec<f64> = bot.iter().map(|x| x + rng.gen_range(0.0..0.5)).collect();
            let lo = solve_dirichlet(field, &grid, &top, &bot).unwrap();
            let hi = solve_dirichlet(field, &grid, &top2, &bot2).unwrap();
            worst = worst.max(
                lo.values
                    .iter()
                    .zip(&hi.values)
                    .map(|(a, b)| a - b)
                    .fold(f64::NEG_INFINITY, f64::max),
            );
            // Neumann: larger inward derivative gives the lower solution.
            let g = random_trace(&mut rng, nt, -1.0, 1.0);
            let g2: Vec<f64> = g.iter().map(|x| x + rng.gen_range(0.0..0.5)).collect();
            let u = solve_neumann(field, &grid, &g2).unwrap();
            let v = solve_neumann(field, &grid, &g).unwrap();
            worst = worst.max(
                u.values
                    .iter()
                    .zip(&v.values)
                    .map(|(a, b)| a - b)
                    .fold(f64::NEG_INFINITY, f64::max),
            );
            pairs += 2;
        }
    }
    outcome(
        worst <= 1e-10,
        format!("{pairs} ordered pairs over {} families, worst order violation = {worst:.2e} (budget 1e-10)", families.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        (
            "effective coefficient, layered",
            criterion_1,
            Duration::from_secs(1),
        ),
        (
            "effective coefficient, drift",
            criterion_2,
            Duration::from_secs(1),
        ),
        ("invariant measure", criterion_3, Duration::from_secs(60)),
        (
            "barrier and f^eps laws",
            criterion_4,
            Duration::from_secs(30),
        ),
        ("Dirichlet rate", criterion_5, Duration::from_secs(600)),
        (
            "effective Neumann datum",
            criterion_6,
            Duration::from_secs(900),
        ),
        ("almost periods", criterion_7, Duration::from_secs(120)),
        ("discrete comparison", criterion_8, Duration::from_secs(60)),
    ];
    let mut failures = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let pass = out.pass && took < *limit;
        if !pass {
            failures += 1;
        }
        println!(
            "{} criterion {} ({name}): {} [{:.2}s, limit {}s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            out.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
