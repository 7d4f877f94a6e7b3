mod common;

use common::*;
use homoglab_core::fields::Direction;
use homoglab_core::quasiperiod::{
    find_almost_period, lattice_distance, translation_defect, NormalLine, SlopeDirection,
};

/// Scans `dist(sτ̂, Z²)` for its first local minimum at most `rho` past `z`.
fn brute_scan(line: &dyn NormalLine, z: f64, rho: f64, smax: f64, step: f64) -> f64 {
    let t = line.tangent();
    let d = |s: f64| lattice_distance([s * t[0], s * t[1]]);
    let mut s = z + 1e-3;
    let (mut prev, mut cur) = (d(s - step), d(s));
    while s < smax {
        let next = d(s + step);
        if cur <= prev && cur <= next && cur <= rho {
            return s;
        }
        (prev, cur) = (cur, next);
        s += step;
    }
    panic!("no almost period below {smax}");
}

#[test]
fn golden_rho_04_matches_brute_scan() {
    let line = SlopeDirection::golden();
    let ap = find_almost_period(&line, 0.0, 0.4).unwrap();
    let brute = brute_scan(&line, 0.0, 0.4, 10.0, 1e-4);
    assert!(
        (ap.tau - brute).abs() <= 2e-4,
        "tau {} vs brute {brute}",
        ap.tau
    );
}

#[test]
fn golden_rho_1e3_scales_like_inverse_rho() {
    let line = SlopeDirection::golden();
    let rho = 1e-3;
    let ap = find_almost_period(&line, 0.0, rho).unwrap();
    let scaled = ap.tau * rho;
    assert!((1.0 / 3.0..=3.0).contains(&scaled), "tau = {}", ap.tau);
    let brute = brute_scan(&line, 0.0, rho, 2000.0, 1e-4);
    assert!(
        (ap.tau - brute).abs() <= 2e-4,
        "tau {} vs brute {brute}",
        ap.tau
    );
}

#[test]
fn datum_defect_is_lipschitz_in_rho() {
    let d = Direction::new(21, 13).unwrap();
    let l = d.tangent_period();
    let (tau_hat, n) = (d.tangent(), 512);
    // g(y) = 1 + cos 2πy₁ has Lipschitz constant 2π.
    let trace: Vec<f64> = (0..n)
        .map(|j| 1.0 + (2.0 * std::f64::consts::PI * j as f64 * l / n as f64 * tau_hat[0]).cos())
        .collect();
    for rho in [0.2, 0.1, 0.05] {
        let ap = find_almost_period(&d, 0.0, rho).unwrap();
        let defect = translation_defect(&trace, l, ap.tau);
        let zhat = ap.hat_z[0].hypot(ap.hat_z[1]);
        assert!(
            defect <= 2.0 * std::f64::consts::PI * zhat + 1e-3,
            "rho {rho}: {defect}"
        );
        assert!(zhat <= rho + 1e-12);
    }
}

#[test]
fn surrogate_convergent_directions_build() {
    // Consecutive convergents of the golden slope as strip directions.
    for (p, q) in [(8, 5), (13, 8), (21, 13)] {
        let f = aniso_2d(p, q);
        assert_eq!(f.direction().unwrap(), direction(p, q));
    }
}
