use thiserror::Error;

/// Errors raised by the homogenization toolkit.
///
/// Variant names match the guard that fired so that callers (and the CLI
/// exit-code mapping) can tell input rejection apart from a numerical
/// invariant that failed after the fact.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported dimension {dim}: {context}")]
    UnsupportedDimension { dim: usize, context: &'static str },

    #[error("ellipticity violation: sampled eigenvalues [{min:.6e}, {max:.6e}] outside declared [{lambda}, {big_lambda}]")]
    EllipticityViolation {
        min: f64,
        max: f64,
        lambda: f64,
        big_lambda: f64,
    },

    #[error(
        "asymmetric coefficient at mode {k:?}: entry ({i},{j}) differs from ({j},{i}) by {gap:.3e}"
    )]
    AsymmetricCoefficient {
        k: Vec<i64>,
        i: usize,
        j: usize,
        gap: f64,
    },

    #[error("incommensurate window: {0}")]
    IncommensurateWindow(String),

    #[error("resolution too coarse: {0}")]
    ResolutionTooCoarse(String),

    #[error(
        "monotone stencil unavailable: |a_12| = {cross:.6} exceeds dominance bound {bound:.6}"
    )]
    MonotonicityUnavailable { cross: f64, bound: f64 },

    #[error("adjoint null space has dimension > 1 (second eigenvalue estimate {second:.3e})")]
    NullSpaceDimension { second: f64 },

    #[error("invariant measure has a nonpositive entry {min:.3e} at node {node}")]
    NonPositive { min: f64, node: usize },

    #[error("no convergence after {iterations} iterations (last defect {defect:.3e})")]
    NoConvergence { iterations: usize, defect: f64 },

    #[error("drift is incompatible with the invariant measure: |b| = {defect:.3e}")]
    IncompatibleDrift { defect: f64 },

    #[error("insolvable periodic problem: right side has m-weighted mean {defect:.3e}")]
    Insolvable { defect: f64 },

    #[error("effective matrix is not positive definite (min eigenvalue {min_eig:.3e})")]
    IndefiniteEffectiveMatrix { min_eig: f64 },

    #[error("linear solver failed: {0}")]
    SolverDivergence(String),

    #[error("shift function is negative ({min:.3e}) at node {node}")]
    NonNegativityViolation { min: f64, node: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("boundary data has a negative entry {value:.3e}")]
    NegativeInput { value: f64 },

    #[error("level bound violated: |w| = {observed:.6e} > bound {bound:.6e}")]
    BoundViolation { observed: f64, bound: f64 },

    #[error("slope {slope} is rational with denominator {denominator}")]
    RationalSlope { slope: f64, denominator: u64 },

    #[error("almost-period search exhausted after {scanned} candidates")]
    SearchExhausted { scanned: u64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}

impl Error {
    /// `true` for guards that reject the input before any solve happens.
    pub fn is_input_rejection(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::UnsupportedDimension { .. }
                | Error::EllipticityViolation { .. }
                | Error::AsymmetricCoefficient { .. }
                | Error::IncommensurateWindow(_)
                | Error::ResolutionTooCoarse(_)
                | Error::MonotonicityUnavailable { .. }
                | Error::IncompatibleDrift { .. }
                | Error::GridMismatch(_)
                | Error::NegativeInput { .. }
                | Error::RationalSlope { .. }
        )
    }

    /// Short stable name of the variant, used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "InvalidInput",
            Error::UnsupportedDimension { .. } => "UnsupportedDimension",
            Error::EllipticityViolation { .. } => "EllipticityViolation",
            Error::AsymmetricCoefficient { .. } => "AsymmetricCoefficient",
            Error::IncommensurateWindow(_) => "IncommensurateWindow",
            Error::ResolutionTooCoarse(_) => "ResolutionTooCoarse",
            Error::MonotonicityUnavailable { .. } => "MonotonicityUnavailable",
            Error::NullSpaceDimension { .. } => "NullSpaceDimension",
            Error::NonPositive { .. } => "NonPositive",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::IncompatibleDrift { .. } => "IncompatibleDrift",
            Error::Insolvable { .. } => "Insolvable",
            Error::IndefiniteEffectiveMatrix { .. } => "IndefiniteEffectiveMatrix",
            Error::SolverDivergence(_) => "SolverDivergence",
            Error::NonNegativityViolation { .. } => "NonNegativityViolation",
            Error::GridMismatch(_) => "GridMismatch",
            Error::NegativeInput { .. } => "NegativeInput",
            Error::BoundViolation { .. } => "BoundViolation",
            Error::RationalSlope { .. } => "RationalSlope",
            Error::SearchExhausted { .. } => "SearchExhausted",
            Error::DegenerateFit(_) => "DegenerateFit",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
