//! Continued fractions of the normal slope, almost periods of the boundary
//! line `Σ₀ = {x·n = 0}` and translation defects of traces along it.
//!
//! In two dimensions the normal is `n ∝ (α, 1)` and the tangent is
//! `τ̂ ∝ (1, −α)`, matching [`Direction`] for rational `α = p/q`. A lattice
//! point `k` projects to the offset `τ = k·τ̂` on `Σ₀` at distance `|k·n|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::Direction;
use crate::Vec3;

/// Continued fractions ending below this denominator count as rational.
pub const RATIONAL_DENOMINATOR_LIMIT: i64 = 1_000_000;

/// Maximum number of lattice candidates examined by a search.
pub const SCAN_BUDGET: u64 = 10_000_000;

/// The first `count` convergents `p/q` of `slope`.
pub fn convergents(slope: f64, count: usize) -> Result<Vec<(i64, i64)>> {
    if !slope.is_finite() {
        return Err(Error::InvalidInput(format!("slope {slope} is not finite")));
    }
    let mut out = Vec::with_capacity(count);
    let (mut p_prev, mut q_prev) = (1i64, 0i64);
    let mut x = slope;
    let a0 = x.floor();
    let (mut p, mut q) = (a0 as i64, 1i64);
    let mut frac = x - a0;
    out.push((p, q));
    while out.len() < count {
        // Exact termination or a remainder at round-off level means p/q is the slope.
        if frac <= f64::EPSILON * 4.0 * x.abs().max(1.0)
            || (q as f64 * slope - p as f64).abs() == 0.0
        {
            if q < RATIONAL_DENOMINATOR_LIMIT {
                return Err(Error::RationalSlope {
                    slope,
                    denominator: q as u64,
                });
            }
            break;
        }
        x = 1.0 / frac;
        let a = x.floor();
        frac = x - a;
        let a = a as i64;
        let (pn, qn) = (a * p + p_prev, a * q + q_prev);
        (p_prev, q_prev, p, q) = (p, q, pn, qn);
        out.push((p, q));
    }
    Ok(out)
}

/// A line through the origin in the plane, described by the slope `α` of its
/// normal `n ∝ (α, 1)`.
pub trait NormalLine {
    fn slope(&self) -> f64;

    /// Exact tangential period when the direction is rational.
    fn tangent_period(&self) -> Option<f64>;

    fn norm(&self) -> f64 {
        self.slope().hypot(1.0)
    }

    fn normal(&self) -> [f64; 2] {
        let n = self.norm();
        [self.slope() / n, 1.0 / n]
    }

    fn tangent(&self) -> [f64; 2] {
        let n = self.norm();
        [1.0 / n, -self.slope() / n]
    }
}

impl NormalLine for Direction {
    fn slope(&self) -> f64 {
        self.p() as f64 / self.q() as f64
    }

    fn tangent_period(&self) -> Option<f64> {
        Some(Direction::tangent_period(self))
    }

    fn normal(&self) -> [f64; 2] {
        Direction::normal(self)
    }

    fn tangent(&self) -> [f64; 2] {
        Direction::tangent(self)
    }
}

/// An irrational normal slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeDirection {
    alpha: f64,
}

impl SlopeDirection {
    /// Rejects slopes whose continued fraction terminates early.
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha < 0.0 {
            return Err(Error::InvalidInput(format!(
                "slope {alpha} must be nonnegative"
            )));
        }
        convergents(alpha, 40)?;
        Ok(Self { alpha })
    }

    /// `n ∝ (φ, 1)` with `φ` the golden ratio.
    pub fn golden() -> Self {
        Self {
            alpha: (1.0 + 5f64.sqrt()) / 2.0,
        }
    }
}

impl NormalLine for SlopeDirection {
    fn slope(&self) -> f64 {
        self.alpha
    }

    fn tangent_period(&self) -> Option<f64> {
        None
    }
}

/// An offset `τ` on `Σ₀` whose point `τ τ̂` lies within `rho` of the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlmostPeriod {
    pub tau: f64,
    /// `|k·n|`, the distance from `τ τ̂` to `hat_tau`.
    pub rho: f64,
    pub requested_rho: f64,
    pub search_radius: f64,
    pub hat_tau: [i64; 2],
    /// `hat_tau − τ τ̂ = (k·n) n`.
    pub hat_z: [f64; 2],
    pub scanned: u64,
}

/// Radius `R(ρ)` within which an almost period is guaranteed.
///
/// For irrational slopes this uses the first convergent with
/// `1/q_j ≤ ρ|(α,1)|`: returns to a `ρ`-neighbourhood of the lattice are then
/// at most `q_j + q_{j−1}` columns apart.
pub fn search_radius(line: &dyn NormalLine, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    if let Some(l) = line.tangent_period() {
        return Ok(l + 1.0);
    }
    let alpha = line.slope();
    let big_n = line.norm();
    let conv = convergents(alpha, 60)?;
    let mut q_prev = 0i64;
    for &(_, q) in &conv {
        if 1.0 / q as f64 <= rho * big_n {
            return Ok((q + q_prev + 2) as f64 * big_n + (1.0 + alpha.abs()) / 2.0);
        }
        q_prev = q;
    }
    Err(Error::SearchExhausted {
        scanned: conv.len() as u64,
    })
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 0.5) {
        return Err(Error::InvalidInput(format!("rho {rho} outside (0, 1/2)")));
    }
    Ok(())
}

/// The smallest `τ > z` whose point `τ τ̂` lies within `rho` of `Z²`.
pub fn find_almost_period(line: &dyn NormalLine, z: f64, rho: f64) -> Result<AlmostPeriod> {
    let radius = search_radius(line, rho)?;
    let alpha = line.slope();
    let big_n = line.norm();
    let slack = alpha.abs() * rho;
    // τ = k₁|(α,1)| − α(k·n), so columns below this cannot reach past z.
    let mut m = ((z - slack) / big_n).floor() as i64;
    let mut best: Option<AlmostPeriod> = None;
    let mut scanned = 0u64;
    loop {
        if let Some(b) = &best {
            if m as f64 * big_n - slack > b.tau {
                break;
            }
        }
        scanned += 1;
        if scanned > SCAN_BUDGET {
            return Err(Error::SearchExhausted { scanned });
        }
        let centre = -alpha * m as f64;
        let lo = (centre - rho * big_n).ceil() as i64;
        let hi = (centre + rho * big_n).floor() as i64;
        for k2 in lo..=hi {
            let e = alpha * m as f64 + k2 as f64;
            let dist = e.abs() / big_n;
            if dist > rho {
                continue;
            }
            let tau = (m as f64 - alpha * k2 as f64) / big_n;
            if tau <= z {
                continue;
            }
            if best.is_none_or(|b| tau < b.tau) {
                let n = line.normal();
                let kn = e / big_n;
                best = Some(AlmostPeriod {
                    tau,
                    rho: dist,
                    requested_rho: rho,
                    search_radius: radius,
                    hat_tau: [m, k2],
                    hat_z: [kn * n[0], kn * n[1]],
                    scanned: 0,
                });
            }
        }
        m += 1;
    }
    let mut found = best.expect("loop exits only with a candidate");
    found.scanned = scanned;
    Ok(found)
}

/// Almost period on the plane `{x·n = 0}` in three dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlmostPeriod3 {
    /// Point of the plane.
    pub tau: Vec3,
    pub rho: f64,
    pub hat_tau: [i64; 3],
    pub hat_z: Vec3,
    pub scanned: u64,
}

/// Nearest plane point to `z` (other than `z`) within `rho` of `Z³`, by
/// enumeration of cubic shells around `z`.
pub fn find_almost_period_3d(normal: Vec3, z: Vec3, rho: f64) -> Result<AlmostPeriod3> {
    check_rho(rho)?;
    let len = (normal[0].powi(2) + normal[1].powi(2) + normal[2].powi(2)).sqrt();
    if !(len > 0.0) {
        return Err(Error::InvalidInput("zero normal".into()));
    }
    let n = [normal[0] / len, normal[1] / len, normal[2] / len];
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let zn = dot(z, n);
    let z = [z[0] - zn * n[0], z[1] - zn * n[1], z[2] - zn * n[2]];
    let c = [
        z[0].round() as i64,
        z[1].round() as i64,
        z[2].round() as i64,
    ];
    let mut best: Option<(f64, AlmostPeriod3)> = None;
    let mut scanned = 0u64;
    for r in 0i64.. {
        // Every point of shell r is at least r − 1/2 from z in the max norm.
        if let Some((d, _)) = best {
            if (r as f64 - 0.5) > d + rho {
                break;
            }
        }
        for i in -r..=r {
            for j in -r..=r {
                for l in -r..=r {
                    if i.abs().max(j.abs()).max(l.abs()) != r {
                        continue;
                    }
                    scanned += 1;
                    if scanned > SCAN_BUDGET {
                        return Err(Error::SearchExhausted { scanned });
                    }
                    let k = [(c[0] + i) as f64, (c[1] + j) as f64, (c[2] + l) as f64];
                    let kn = dot(k, n);
                    if kn.abs() > rho {
                        continue;
                    }
                    let tau = [k[0] - kn * n[0], k[1] - kn * n[1], k[2] - kn * n[2]];
                    let d = ((tau[0] - z[0]).powi(2)
                        + (tau[1] - z[1]).powi(2)
                        + (tau[2] - z[2]).powi(2))
                    .sqrt();
                    if d <= 1e-9 || best.is_some_and(|(bd, _)| d >= bd) {
                        continue;
                    }
                    best = Some((
                        d,
                        AlmostPeriod3 {
                            tau,
                            rho: kn.abs(),
                            hat_tau: [c[0] + i, c[1] + j, c[2] + l],
                            hat_z: [kn * n[0], kn * n[1], kn * n[2]],
                            scanned: 0,
                        },
                    ));
                }
            }
        }
    }
    let (_, mut found) = best.expect("loop exits only with a candidate");
    found.scanned = scanned;
    Ok(found)
}

/// `dist(x, Z²)`.
pub fn lattice_distance(x: [f64; 2]) -> f64 {
    (x[0] - x[0].round()).hypot(x[1] - x[1].round())
}

/// Periodic cubic (Catmull-Rom) interpolation of uniform samples over `[0, window)`.
pub fn periodic_cubic(trace: &[f64], window: f64, t: f64) -> f64 {
    let n = trace.len();
    let h = window / n as f64;
    let x = t.rem_euclid(window) / h;
    let i = x.floor();
    let u = x - i;
    let i = i as i64;
    let at = |k: i64| trace[k.rem_euclid(n as i64) as usize];
    let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
    let u2 = u * u;
    let u3 = u2 * u;
    0.5 * (2.0 * p1
        + (p2 - p0) * u
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u2
        + (3.0 * (p1 - p2) + p3 - p0) * u3)
}

/// `sup_j |w(t_j + τ) − w(t_j)|` over the nodes of a periodic trace.
pub fn translation_defect(trace: &[f64], window: f64, tau: f64) -> f64 {
    let n = trace.len();
    if n == 0 {
        return 0.0;
    }
    let h = window / n as f64;
    let shift = tau.rem_euclid(window);
    trace
        .iter()
        .enumerate()
        .map(|(j, &w)| (periodic_cubic(trace, window, j as f64 * h + shift) - w).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn golden_and_sqrt2_convergents() {
        let g = convergents((1.0 + 5f64.sqrt()) / 2.0, 5).unwrap();
        assert_eq!(g, vec![(1, 1), (2, 1), (3, 2), (5, 3), (8, 5)]);
        let s = convergents(2f64.sqrt(), 4).unwrap();
        assert_eq!(s, vec![(1, 1), (3, 2), (7, 5), (17, 12)]);
    }

    #[test]
    fn rational_slopes_are_rejected() {
        assert!(matches!(
            convergents(0.5, 5),
            Err(Error::RationalSlope { denominator: 2, .. })
        ));
        assert!(matches!(
            convergents(3.0, 3),
            Err(Error::RationalSlope { .. })
        ));
        assert!(SlopeDirection::new(0.375).is_err());
        assert!(SlopeDirection::new(2f64.sqrt()).is_ok());
    }

    #[test]
    fn best_approximation_property() {
        let alpha = 2f64.sqrt();
        for (p, q) in convergents(alpha, 8).unwrap() {
            if q > 200 {
                break;
            }
            let err = (q as f64 * alpha - p as f64).abs();
            for q2 in 1..q {
                let p2 = (q2 as f64 * alpha).round();
                assert!((q2 as f64 * alpha - p2).abs() > err);
            }
        }
    }

    #[test]
    fn golden_almost_period_at_04() {
        let ap = find_almost_period(&SlopeDirection::golden(), 0.0, 0.4).unwrap();
        assert_eq!(ap.hat_tau, [1, -1]);
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert_abs_diff_eq!(ap.tau, (1.0 + phi) / phi.hypot(1.0), epsilon = 1e-12);
        assert!(ap.rho <= 0.4);
        let t = SlopeDirection::golden().tangent();
        assert!(lattice_distance([ap.tau * t[0], ap.tau * t[1]]) <= 0.4 + 1e-12);
        assert!(ap.hat_z[0].hypot(ap.hat_z[1]) <= 0.4 + 1e-12);
    }

    #[test]
    fn rational_translation_equivariance() {
        let d = Direction::new(21, 13).unwrap();
        let l = d.tangent_period();
        let a = find_almost_period(&d, 0.3, 0.05).unwrap();
        let b = find_almost_period(&d, 0.3 + l, 0.05).unwrap();
        assert_abs_diff_eq!(b.tau - a.tau, l, epsilon = 1e-10);
    }

    #[test]
    fn bad_rho_is_rejected() {
        assert!(find_almost_period(&SlopeDirection::golden(), 0.0, 0.5).is_err());
        assert!(find_almost_period(&SlopeDirection::golden(), 0.0, 0.0).is_err());
    }

    #[test]
    fn three_dimensional_fallback() {
        let n = [1.0, 2f64.sqrt(), 3f64.sqrt()];
        let ap = find_almost_period_3d(n, [0.0; 3], 0.1).unwrap();
        let len = (1.0f64 + 2.0 + 3.0).sqrt();
        let dot = (ap.tau[0] + ap.tau[1] * 2f64.sqrt() + ap.tau[2] * 3f64.sqrt()) / len;
        assert!(dot.abs() < 1e-12);
        assert!(ap.rho <= 0.1);
        let k = ap.hat_tau.map(|x| x as f64);
        let d =
            ((k[0] - ap.tau[0]).powi(2) + (k[1] - ap.tau[1]).powi(2) + (k[2] - ap.tau[2]).powi(2))
                .sqrt();
        assert_abs_diff_eq!(d, ap.rho, epsilon = 1e-12);
    }

    #[test]
    fn defect_of_trivial_shifts() {
        let n = 64;
        let trace: Vec<f64> = (0..n)
            .map(|j| (2.0 * std::f64::consts::PI * j as f64 / n as f64).sin())
            .collect();
        assert_eq!(translation_defect(&trace, 3.0, 0.0), 0.0);
        assert!(translation_defect(&trace, 3.0, 3.0) <= 1e-6);
        let half = translation_defect(&trace, 1.0, 0.5);
        assert_abs_diff_eq!(half, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn cubic_interpolation_is_accurate() {
        let n = 128;
        let w = 2.0;
        let f = |t: f64| (std::f64::consts::PI * t).cos();
        let trace: Vec<f64> = (0..n).map(|j| f(j as f64 * w / n as f64)).collect();
        for t in [0.013, 0.77, 1.9999] {
            assert!((periodic_cubic(&trace, w, t) - f(t)).abs() < 1e-5);
        }
    }

    proptest! {
        #[test]
        fn found_within_radius(z in -50.0f64..50.0, rho in 0.01f64..0.45) {
            let line = SlopeDirection::golden();
            let ap = find_almost_period(&line, z, rho).unwrap();
            prop_assert!(ap.tau > z);
            prop_assert!(ap.tau - z <= ap.search_radius);
            prop_assert!(ap.rho <= rho);
        }

        #[test]
        fn radius_nonincreasing(a in 0.01f64..0.45, b in 0.01f64..0.45) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let line = SlopeDirection::new(2f64.sqrt()).unwrap();
            prop_assert!(search_radius(&line, hi).unwrap() <= search_radius(&line, lo).unwrap());
        }
    }
}
