//! Periodic coefficient data as truncated real Fourier series on the unit torus.
//!
//! Every field is a finite sum `Σ_k C_k cos(2πk·y) + S_k sin(2πk·y)` with
//! integer wave vectors `k`, so Z^D periodicity and exact spectral
//! derivatives come for free.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::strip::StripGrid;
use crate::{Mat3, Vec3};

/// Samples per axis of the ellipticity validation grid.
pub const VALIDATION_SAMPLES: usize = 64;
/// Slack allowed between sampled eigenvalues and the declared bounds.
pub const VALIDATION_TOL: f64 = 1e-10;
/// Largest tolerated gap `|M_ij − M_ji|` in a matrix mode.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// One matrix-valued mode: `matrix·cos(2πk·y) + sin_matrix·sin(2πk·y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMode {
    pub k: Vec<i64>,
    pub matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sin_matrix: Option<Vec<Vec<f64>>>,
}

/// One vector-valued mode: `vector·cos(2πk·y) + sin_vector·sin(2πk·y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorMode {
    pub k: Vec<i64>,
    pub vector: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sin_vector: Option<Vec<f64>>,
}

/// One scalar mode: `value·cos(2πk·y) + sin_value·sin(2πk·y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarMode {
    pub k: Vec<i64>,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sin_value: Option<f64>,
}

/// Drift specification: either `"div(A)"` or explicit modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DriftSpec {
    Keyword(String),
    Modes(Vec<VectorMode>),
}

impl Default for DriftSpec {
    fn default() -> Self {
        DriftSpec::Modes(Vec::new())
    }
}

/// Rational boundary normal `(p, q)/√(p²+q²)` in two dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDirection", into = "RawDirection")]
pub struct Direction {
    p: i64,
    q: i64,
}

#[derive(Serialize, Deserialize)]
struct RawDirection {
    p: i64,
    q: i64,
}

impl TryFrom<RawDirection> for Direction {
    type Error = Error;
    fn try_from(raw: RawDirection) -> Result<Self> {
        Direction::new(raw.p, raw.q)
    }
}

impl From<Direction> for RawDirection {
    fn from(d: Direction) -> Self {
        RawDirection { p: d.p, q: d.q }
    }
}

pub(crate) fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Direction {
    /// Requires `p ≥ 0`, `q ≥ 1` and `gcd(p, q) = 1`.
    pub fn new(p: i64, q: i64) -> Result<Self> {
        if p < 0 || q < 1 {
            return Err(Error::InvalidInput(format!(
                "direction ({p}, {q}) needs p >= 0 and q >= 1"
            )));
        }
        if gcd(p, q) != 1 {
            return Err(Error::InvalidInput(format!(
                "direction ({p}, {q}) is not in lowest terms"
            )));
        }
        Ok(Self { p, q })
    }

    pub fn p(&self) -> i64 {
        self.p
    }

    pub fn q(&self) -> i64 {
        self.q
    }

    /// Length of the primitive lattice vector `(q, −p)` lying on the boundary line.
    pub fn tangent_period(&self) -> f64 {
        ((self.p * self.p + self.q * self.q) as f64).sqrt()
    }

    /// Angle of the normal measured from the first axis.
    pub fn theta(&self) -> f64 {
        (self.q as f64).atan2(self.p as f64)
    }

    /// Slope `p/q` of the normal, so that `n ∝ (slope, 1)`.
    pub fn slope(&self) -> f64 {
        self.p as f64 / self.q as f64
    }

    pub fn normal(&self) -> [f64; 2] {
        let l = self.tangent_period();
        [self.p as f64 / l, self.q as f64 / l]
    }

    /// Unit tangent `(q, −p)/L`; translating by `L` along it is a lattice shift.
    pub fn tangent(&self) -> [f64; 2] {
        let l = self.tangent_period();
        [self.q as f64 / l, -self.p as f64 / l]
    }

    /// Lattice vector `(q, −p)` spanning the periodic boundary.
    pub fn lattice_period(&self) -> [i64; 2] {
        [self.q, -self.p]
    }
}

/// Problem definition as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    pub dim: usize,
    #[serde(rename = "A")]
    pub a_modes: Vec<MatrixMode>,
    #[serde(rename = "B", default)]
    pub b_modes: DriftSpec,
    #[serde(rename = "g", default)]
    pub g_modes: Vec<ScalarMode>,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Mode<T> {
    k: Vec3,
    cos: T,
    sin: T,
}

/// A validated coefficient set, ready for sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    dim: usize,
    a: Vec<Mode<Mat3>>,
    b: Vec<Mode<Vec3>>,
    g: Vec<Mode<f64>>,
    drift_offset: Vec3,
    lambda: f64,
    big_lambda: f64,
    eig_range: (f64, f64),
    b_norm: f64,
    g_norm: f64,
    direction: Option<Direction>,
    spec: CoefficientSpec,
}

fn check_k(k: &[i64], dim: usize) -> Result<Vec3> {
    if k.len() != dim {
        return Err(Error::InvalidInput(format!(
            "wave vector {k:?} has length {} but dim = {dim}",
            k.len()
        )));
    }
    let mut out = [0.0; 3];
    for (o, &ki) in out.iter_mut().zip(k) {
        *o = ki as f64;
    }
    Ok(out)
}

fn to_mat3(rows: &[Vec<f64>], dim: usize, k: &[i64]) -> Result<Mat3> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::InvalidInput(format!(
            "matrix for mode {k:?} must be {dim}x{dim}"
        )));
    }
    let mut m = [[0.0; 3]; 3];
    for i in 0..dim {
        for j in 0..dim {
            m[i][j] = rows[i][j];
        }
    }
    for i in 0..dim {
        for j in i + 1..dim {
            let gap = (m[i][j] - m[j][i]).abs();
            if gap > SYMMETRY_TOL {
                return Err(Error::AsymmetricCoefficient {
                    k: k.to_vec(),
                    i,
                    j,
                    gap,
                });
            }
        }
    }
    Ok(m)
}

fn to_vec3(v: &[f64], dim: usize, k: &[i64]) -> Result<Vec3> {
    if v.len() != dim {
        return Err(Error::InvalidInput(format!(
            "vector for mode {k:?} must have length {dim}"
        )));
    }
    let mut out = [0.0; 3];
    out[..dim].copy_from_slice(v);
    Ok(out)
}

#[inline]
fn phase(k: &Vec3, y: &[f64]) -> f64 {
    2.0 * PI * k.iter().zip(y).map(|(a, b)| a * b).sum::<f64>()
}

/// Eigenvalues of the leading `dim × dim` block, ascending.
pub fn sym_eigenvalues(a: &Mat3, dim: usize) -> Vec<f64> {
    let mut ev: Vec<f64> = match dim {
        1 => vec![a[0][0]],
        2 => Matrix2::new(a[0][0], a[0][1], a[1][0], a[1][1])
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect(),
        _ => Matrix3::from_fn(|i, j| a[i][j])
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect(),
    };
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Calls `f` at every node of the `n^dim` grid with spacing `1/n`.
pub(crate) fn for_each_torus_node(dim: usize, n: usize, mut f: impl FnMut(&[f64])) {
    let h = 1.0 / n as f64;
    let total = n.pow(dim as u32);
    let mut y = vec![0.0; dim];
    for idx in 0..total {
        let mut rem = idx;
        for yc in y.iter_mut() {
            *yc = (rem % n) as f64 * h;
            rem /= n;
        }
        f(&y);
    }
}

impl CoefficientSpec {
    /// Validates symmetry, shapes and ellipticity and compiles the modes.
    pub fn build(&self) -> Result<CoefficientField> {
        build_matrix_field(self)
    }
}

/// Validates a specification and returns the sampled-ready field.
pub fn build_matrix_field(spec: &CoefficientSpec) -> Result<CoefficientField> {
    let dim = spec.dim;
    if !(1..=3).contains(&dim) {
        return Err(Error::UnsupportedDimension {
            dim,
            context: "coefficient fields support 1 <= dim <= 3",
        });
    }
    if spec.a_modes.is_empty() {
        return Err(Error::InvalidInput("A needs at least one mode".into()));
    }
    if !(spec.lambda > 0.0) || !(spec.big_lambda >= spec.lambda) {
        return Err(Error::InvalidInput(format!(
            "need 0 < lambda <= Lambda, got lambda = {}, Lambda = {}",
            spec.lambda, spec.big_lambda
        )));
    }
    if spec.direction.is_some() && dim != 2 {
        return Err(Error::UnsupportedDimension {
            dim,
            context: "a boundary direction (p, q) is only defined for dim = 2",
        });
    }

    let mut a = Vec::with_capacity(spec.a_modes.len());
    for m in &spec.a_modes {
        let k = check_k(&m.k, dim)?;
        let cos = to_mat3(&m.matrix, dim, &m.k)?;
        let sin = match &m.sin_matrix {
            Some(s) => to_mat3(s, dim, &m.k)?,
            None => [[0.0; 3]; 3],
        };
        a.push(Mode { k, cos, sin });
    }

    let b_specs = match &spec.b_modes {
        DriftSpec::Keyword(s) if s.replace(' ', "") == "div(A)" => divergence_drift(spec),
        DriftSpec::Keyword(s) => {
            return Err(Error::InvalidInput(format!(
                "unknown drift keyword {s:?} (expected \"div(A)\")"
            )))
        }
        DriftSpec::Modes(m) => m.clone(),
    };
    let mut b = Vec::with_capacity(b_specs.len());
    for m in &b_specs {
        let k = check_k(&m.k, dim)?;
        let cos = to_vec3(&m.vector, dim, &m.k)?;
        let sin = match &m.sin_vector {
            Some(s) => to_vec3(s, dim, &m.k)?,
            None => [0.0; 3],
        };
        b.push(Mode { k, cos, sin });
    }

    let mut g = Vec::with_capacity(spec.g_modes.len());
    for m in &spec.g_modes {
        let k = check_k(&m.k, dim)?;
        g.push(Mode {
            k,
            cos: m.value,
            sin: m.sin_value.unwrap_or(0.0),
        });
    }

    let mut field = CoefficientField {
        dim,
        a,
        b,
        g,
        drift_offset: [0.0; 3],
        lambda: spec.lambda,
        big_lambda: spec.big_lambda,
        eig_range: (f64::INFINITY, f64::NEG_INFINITY),
        b_norm: 0.0,
        g_norm: 0.0,
        direction: spec.direction,
        spec: spec.clone(),
    };

    let (mut lo, mut hi, mut bn, mut gn) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, 0.0f64);
    for_each_torus_node(dim, VALIDATION_SAMPLES, |y| {
        let ev = sym_eigenvalues(&field.diffusion(y), dim);
        lo = lo.min(ev[0]);
        hi = hi.max(ev[dim - 1]);
        let bv = field.drift(y);
        bn = bn.max(bv.iter().map(|x| x * x).sum::<f64>().sqrt());
        gn = gn.max(field.boundary_datum(y).abs());
    });
    if lo < spec.lambda - VALIDATION_TOL || hi > spec.big_lambda + VALIDATION_TOL {
        return Err(Error::EllipticityViolation {
            min: lo,
            max: hi,
            lambda: spec.lambda,
            big_lambda: spec.big_lambda,
        });
    }
    field.eig_range = (lo, hi);
    field.b_norm = bn;
    field.g_norm = gn;
    Ok(field)
}

/// Drift `Bˡ = Σ_j ∂_j A_jl` by exact differentiation of every mode.
///
/// `C cos(2πk·y) + S sin(2πk·y)` differentiates to
/// `2πk_j S cos(2πk·y) − 2πk_j C sin(2πk·y)`.
pub fn divergence_drift(spec: &CoefficientSpec) -> Vec<VectorMode> {
    let dim = spec.dim;
    let mut out = Vec::new();
    for m in &spec.a_modes {
        if m.k.iter().all(|&k| k == 0) {
            continue;
        }
        let mut cos_v = vec![0.0; dim];
        let mut sin_v = vec![0.0; dim];
        for l in 0..dim {
            for j in 0..dim {
                let kj = 2.0 * PI * m.k[j] as f64;
                let c = m
                    .matrix
                    .get(j)
                    .and_then(|r| r.get(l))
                    .copied()
                    .unwrap_or(0.0);
                let s = m
                    .sin_matrix
                    .as_ref()
                    .and_then(|s| s.get(j).and_then(|r| r.get(l)).copied())
                    .unwrap_or(0.0);
                cos_v[l] += kj * s;
                sin_v[l] -= kj * c;
            }
        }
        out.push(VectorMode {
            k: m.k.clone(),
            vector: cos_v,
            sin_vector: Some(sin_v),
        });
    }
    out
}

impl CoefficientField {
    /// Constant diffusion matrix with zero drift, used for effective problems.
    pub fn constant(abar: &[Vec<f64>]) -> Result<Self> {
        let dim = abar.len();
        let mut m3 = [[0.0; 3]; 3];
        for i in 0..dim {
            for j in 0..dim {
                m3[i][j] = abar[i].get(j).copied().unwrap_or(f64::NAN);
            }
        }
        let ev = sym_eigenvalues(&m3, dim);
        let spec = CoefficientSpec {
            dim,
            a_modes: vec![MatrixMode {
                k: vec![0; dim],
                matrix: abar.to_vec(),
                sin_matrix: None,
            }],
            b_modes: DriftSpec::default(),
            g_modes: Vec::new(),
            lambda: ev[0],
            big_lambda: ev[dim - 1],
            direction: None,
        };
        build_matrix_field(&spec)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn big_lambda(&self) -> f64 {
        self.big_lambda
    }

    /// Sampled eigenvalue range from validation.
    pub fn eigen_range(&self) -> (f64, f64) {
        self.eig_range
    }

    /// Sampled sup of `|B|` on the validation grid.
    pub fn drift_norm(&self) -> f64 {
        self.b_norm
    }

    /// Sampled sup of `|g|` on the validation grid.
    pub fn datum_norm(&self) -> f64 {
        self.g_norm
    }

    pub fn direction(&self) -> Option<Direction> {
        self.direction
    }

    pub fn spec(&self) -> &CoefficientSpec {
        &self.spec
    }

    pub fn with_direction(mut self, direction: Direction) -> Result<Self> {
        if self.dim != 2 {
            return Err(Error::UnsupportedDimension {
                dim: self.dim,
                context: "a boundary direction (p, q) is only defined for dim = 2",
            });
        }
        self.direction = Some(direction);
        self.spec.direction = Some(direction);
        Ok(self)
    }

    /// Same field with `B` replaced by `B + offset`.
    pub fn with_drift_offset(&self, offset: &[f64]) -> Self {
        let mut out = self.clone();
        for (o, d) in out.drift_offset.iter_mut().zip(offset) {
            *o += d;
        }
        let mut bn = 0.0f64;
        for_each_torus_node(self.dim, VALIDATION_SAMPLES, |y| {
            let v = out.drift(y);
            bn = bn.max(v.iter().map(|x| x * x).sum::<f64>().sqrt());
        });
        out.b_norm = bn;
        out
    }

    /// Constant added to the drift by centering, if any.
    pub fn drift_offset(&self) -> &[f64] {
        &self.drift_offset[..self.dim]
    }

    /// Same field with the boundary datum replaced.
    pub fn with_boundary_datum(&self, g_modes: &[ScalarMode]) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.g_modes = g_modes.to_vec();
        let mut out = build_matrix_field(&spec)?;
        out.drift_offset = self.drift_offset;
        Ok(out.with_drift_offset(&[0.0; 3][..self.dim]))
    }

    /// `A(y)`; `y` has length `dim`.
    pub fn diffusion(&self, y: &[f64]) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for m in &self.a {
            let ph = phase(&m.k, y);
            let (s, c) = ph.sin_cos();
            for i in 0..self.dim {
                for j in 0..self.dim {
                    out[i][j] += m.cos[i][j] * c + m.sin[i][j] * s;
                }
            }
        }
        out
    }

    /// `B(y)`.
    pub fn drift(&self, y: &[f64]) -> Vec3 {
        let mut out = self.drift_offset;
        for m in &self.b {
            let ph = phase(&m.k, y);
            let (s, c) = ph.sin_cos();
            for l in 0..self.dim {
                out[l] += m.cos[l] * c + m.sin[l] * s;
            }
        }
        out
    }

    /// `g(y)`.
    pub fn boundary_datum(&self, y: &[f64]) -> f64 {
        self.g
            .iter()
            .map(|m| {
                let (s, c) = phase(&m.k, y).sin_cos();
                m.cos * c + m.sin * s
            })
            .sum()
    }

    /// Mean of `B` over the torus (the zero mode plus any offset).
    pub fn drift_mean(&self) -> Vec3 {
        let mut out = self.drift_offset;
        for m in &self.b {
            if m.k.iter().all(|&k| k == 0.0) {
                for l in 0..self.dim {
                    out[l] += m.cos[l];
                }
            }
        }
        out
    }
}

/// Nodal values of the coefficients on a strip grid, evaluated at `y = x/ε_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct StripSamples {
    /// `A` at every node, row-major over `(s, t)`.
    pub a: Vec<Mat3>,
    /// `B` at every node.
    pub b: Vec<Vec3>,
    /// `g` on the `s = 0` column.
    pub g: Vec<f64>,
}

/// Evaluates `A`, `B` and `g` at every node of a strip grid.
pub fn sample_on_strip(field: &CoefficientField, grid: &StripGrid) -> Result<StripSamples> {
    if field.dim() != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "field has dim {} but grid has dim {}",
            field.dim(),
            grid.dim()
        )));
    }
    grid.check_commensurate()?;
    let n = grid.node_count();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for i in 0..=grid.ns() {
        for j in 0..grid.nt() {
            let y = grid.cell_coordinates(j, i);
            a.push(field.diffusion(&y[..field.dim()]));
            b.push(field.drift(&y[..field.dim()]));
        }
    }
    let g = (0..grid.nt())
        .map(|j| {
            let y = grid.cell_coordinates(j, 0);
            field.boundary_datum(&y[..field.dim()])
        })
        .collect();
    Ok(StripSamples { a, b, g })
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;

    /// `A ≡ Id`, no drift, no boundary datum.
    pub fn identity(dim: usize) -> CoefficientSpec {
        let mut m = vec![vec![0.0; dim]; dim];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        CoefficientSpec {
            dim,
            a_modes: vec![MatrixMode {
                k: vec![0; dim],
                matrix: m,
                sin_matrix: None,
            }],
            b_modes: DriftSpec::default(),
            g_modes: vec![],
            lambda: 1.0,
            big_lambda: 1.0,
            direction: None,
        }
    }
}
