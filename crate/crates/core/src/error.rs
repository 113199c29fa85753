//! Error type shared by all modules.

/// Errors produced by integrators, geometry routines, and model builders.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// A state, integrand, or derivative evaluated to NaN or infinity.
    /// Aborts immediately instead of poisoning downstream sample sets.
    #[error("non-finite value in {context} at t = {t}")]
    NonFinite { context: &'static str, t: f64 },

    /// The adaptive integrator could not meet the tolerance above the
    /// minimum step size.
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    /// A query time lies outside the span of a stored path.
    #[error("time {t} outside span [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    /// Two paths do not share the span required by an identity check.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Vector or cloud dimensions disagree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An iterative geometric routine hit its iteration cap while the
    /// duality gap was still above threshold.
    #[error("no convergence after {iterations} iterations (gap {gap:e})")]
    NoConvergence { iterations: usize, gap: f64 },

    /// A normal-cone query was made at a point outside the set.
    #[error("point not in set (violation {violation:e})")]
    PointNotInSet { violation: f64 },

    /// Expression text failed to parse.
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    /// An identifier is not a variable or known function.
    #[error("unknown identifier `{name}`")]
    UnknownIdentifier { name: String },

    /// ln of a non-positive number, sqrt of a negative number, division by
    /// zero, or a model-specific domain guard.
    #[error("domain error: {0}")]
    Domain(String),

    /// Root bracketing by geometric expansion found no sign change.
    #[error("no bracketing interval: {0}")]
    NoBracket(String),

    /// The stationary control f(x0) is negative.
    #[error("stationary control is negative: f(x0) = {0}")]
    NegativeStationaryControl(f64),

    /// The reduced-field Jacobian does not have real eigenvalues of
    /// opposite signs.
    #[error("stationary point is not a saddle (eigenvalues {0}, {1})")]
    NotASaddle(f64, f64),

    /// The backward shoot never reached the initial state.
    #[error("stable-manifold shoot did not cross x* = {0}")]
    NoCrossing(f64),

    /// A probe grid required by a Hamiltonian check is empty.
    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),

    /// A constructor invariant failed (grid ordering, model shape, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
