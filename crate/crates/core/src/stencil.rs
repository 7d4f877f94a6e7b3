//! Monotone finite-difference stencils for `Tr(A D²u) + b·∇u` at one node.
//!
//! Diffusion uses central differences with a 7-point splitting of the mixed
//! derivative whose diagonal pair follows the sign of `a₁₂`. Drift uses
//! central differences whenever they keep every neighbour weight
//! nonnegative and switches to first-order upwinding otherwise.

use crate::error::{Error, Result};

/// Margin required in the cross-term dominance inequality.
pub const DOMINANCE_MARGIN: f64 = 1e-6;

/// Neighbour offsets `(dx, dy)` with their weights; the centre weight is
/// minus their sum so rows annihilate constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Stencil {
    pub neighbours: [(i32, i32, f64); 6],
    pub upwinded: bool,
}

#[cfg(test)]
impl Stencil {
    pub fn center(&self) -> f64 {
        -self.neighbours.iter().map(|n| n.2).sum::<f64>()
    }
}

/// Weights `(w₋, w₊, upwinded)` for `a u'' + b u'` along one axis, where
/// `diff` is the diffusion weight already assigned to each side.
fn axis_weights(diff: f64, b: f64, h: f64) -> (f64, f64, bool) {
    let (wm, wp) = (diff - b / (2.0 * h), diff + b / (2.0 * h));
    if wm >= 0.0 && wp >= 0.0 {
        (wm, wp, false)
    } else if b > 0.0 {
        (diff, diff + b / h, true)
    } else {
        (diff - b / h, diff, true)
    }
}

pub(crate) fn stencil_1d(a: f64, b: f64, h: f64) -> Stencil {
    let (wm, wp, up) = axis_weights(a / (h * h), b, h);
    Stencil {
        neighbours: [
            (-1, 0, wm),
            (1, 0, wp),
            (0, 0, 0.0),
            (0, 0, 0.0),
            (0, 0, 0.0),
            (0, 0, 0.0),
        ],
        upwinded: up,
    }
}

/// Checks `|a₁₂| ≤ min(a₁₁ hy/hx, a₂₂ hx/hy) − δ₀`.
pub(crate) fn check_dominance(a11: f64, a12: f64, a22: f64, hx: f64, hy: f64) -> Result<()> {
    let bound = (a11 * hy / hx).min(a22 * hx / hy) - DOMINANCE_MARGIN;
    if a12.abs() > bound {
        return Err(Error::MonotonicityUnavailable {
            cross: a12.abs(),
            bound,
        });
    }
    Ok(())
}

pub(crate) fn stencil_2d(a: [[f64; 2]; 2], b: [f64; 2], hx: f64, hy: f64) -> Result<Stencil> {
    let a12 = 0.5 * (a[0][1] + a[1][0]);
    check_dominance(a[0][0], a12, a[1][1], hx, hy)?;
    let cross = a12.abs() / (hx * hy);
    let (xm, xp, ux) = axis_weights(a[0][0] / (hx * hx) - cross, b[0], hx);
    let (ym, yp, uy) = axis_weights(a[1][1] / (hy * hy) - cross, b[1], hy);
    let (d1, d2) = if a12 >= 0.0 {
        ((1, 1, cross), (-1, -1, cross))
    } else {
        ((1, -1, cross), (-1, 1, cross))
    };
    Ok(Stencil {
        neighbours: [(-1, 0, xm), (1, 0, xp), (0, -1, ym), (0, 1, yp), d1, d2],
        upwinded: ux || uy,
    })
}

/// Three-dimensional stencil with pairwise cross-term splitting (up to 18
/// neighbours), on a uniform spacing `h`.
pub(crate) fn stencil_3d(a: &crate::Mat3, b: &crate::Vec3, h: f64) -> Result<Vec<([i32; 3], f64)>> {
    let mut out = Vec::with_capacity(18);
    for i in 0..3 {
        let off: f64 = (0..3).filter(|&j| j != i).map(|j| a[i][j].abs()).sum();
        let bound = a[i][i] - DOMINANCE_MARGIN;
        if off > bound {
            return Err(Error::MonotonicityUnavailable { cross: off, bound });
        }
        let (wm, wp, _) = axis_weights((a[i][i] - off) / (h * h), b[i], h);
        let mut e = [0i32; 3];
        e[i] = -1;
        out.push((e, wm));
        e[i] = 1;
        out.push((e, wp));
        for j in i + 1..3 {
            let w = a[i][j].abs() / (h * h);
            if w == 0.0 {
                continue;
            }
            let s = if a[i][j] >= 0.0 { 1 } else { -1 };
            let mut d = [0i32; 3];
            d[i] = 1;
            d[j] = s;
            out.push((d, w));
            d[i] = -1;
            d[j] = -s;
            out.push((d, w));
        }
    }
    Ok(out)
}
