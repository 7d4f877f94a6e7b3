//! Problem fixtures shared by the integration tests.
#![allow(dead_code)]

use homoglab_core::fields::{build_matrix_field, CoefficientField, CoefficientSpec, Direction};
use serde_json::json;

fn field(v: serde_json::Value) -> CoefficientField {
    let spec: CoefficientSpec = serde_json::from_value(v).expect("fixture spec");
    build_matrix_field(&spec).expect("fixture field")
}

/// `a(y) = 2 + sin 2πy`, no drift.
pub fn layered_1d() -> CoefficientField {
    field(json!({
        "dim": 1,
        "A": [{"k": [0], "matrix": [[2.0]]}, {"k": [1], "matrix": [[0.0]], "sin_matrix": [[1.0]]}],
        "lambda": 1.0, "Lambda": 3.0
    }))
}

/// `a(y) = 2 + sin 2πy`, `B = a'`.
pub fn layered_div_1d() -> CoefficientField {
    field(json!({
        "dim": 1,
        "A": [{"k": [0], "matrix": [[2.0]]}, {"k": [1], "matrix": [[0.0]], "sin_matrix": [[1.0]]}],
        "B": "div(A)",
        "lambda": 1.0, "Lambda": 3.0
    }))
}

/// `a = 1`, `B = V'` with `V = cos 2πy`.
pub fn drift_1d() -> CoefficientField {
    field(json!({
        "dim": 1,
        "A": [{"k": [0], "matrix": [[1.0]]}],
        "B": [{"k": [1], "vector": [0.0], "sin_vector": [-2.0 * std::f64::consts::PI]}],
        "lambda": 1.0, "Lambda": 1.0
    }))
}

/// `A = I + ¼cos(2πy₁)e₁e₁`, `B = div A`, on the strip with normal `(p, q)`.
pub fn aniso_2d(p: i64, q: i64) -> CoefficientField {
    field(json!({
        "dim": 2,
        "A": [{"k": [0, 0], "matrix": [[1.0, 0.0], [0.0, 1.0]]},
              {"k": [1, 0], "matrix": [[0.25, 0.0], [0.0, 0.0]]}],
        "B": "div(A)",
        "g": [{"k": [0, 0], "value": 1.0}, {"k": [1, 0], "value": 1.0}],
        "lambda": 0.75, "Lambda": 1.25,
        "direction": {"p": p, "q": q}
    }))
}

/// Laplace problem with boundary datum modes `g`.
pub fn laplace_2d(p: i64, q: i64, g: serde_json::Value) -> CoefficientField {
    field(json!({
        "dim": 2,
        "A": [{"k": [0, 0], "matrix": [[1.0, 0.0], [0.0, 1.0]]}],
        "g": g,
        "lambda": 1.0, "Lambda": 1.0,
        "direction": {"p": p, "q": q}
    }))
}

pub fn direction(p: i64, q: i64) -> Direction {
    Direction::new(p, q).unwrap()
}

/// [`layered_div_1d`] with `g ≡ 1`.
pub fn layered_div_1d_with_g() -> CoefficientField {
    field(json!({
        "dim": 1,
        "A": [{"k": [0], "matrix": [[2.0]]}, {"k": [1], "matrix": [[0.0]], "sin_matrix": [[1.0]]}],
        "B": "div(A)",
        "g": [{"k": [0], "value": 1.0}],
        "lambda": 1.0, "Lambda": 3.0
    }))
}
