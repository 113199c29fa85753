//! Numerical toolkit for infinite-horizon optimal control diagnostics.
//!
//! The crate integrates control systems together with their variational and
//! adjoint (co-state) equations, computes cost gradients with respect to the
//! initial state, and checks the boundary conditions that select co-state
//! arcs at infinity: the Aseev–Kryazhimskii co-state limit, membership of
//! `-psi(0)` in a normal cone plus a sampled limiting-gradient hull, and the
//! pointwise Hamiltonian maximum condition.
//!
//! Module map:
//!
//! * [`expr`] — expression DSL with forward-mode dual numbers (first and
//!   second derivatives).
//! * [`ode`] — control systems, control signals, trajectory + running-cost
//!   integration (adaptive Dormand–Prince 5(4), fixed-step RK4).
//! * [`variational`] — transition matrices, cost gradients, adjoint arcs.
//! * [`convex`] — convex hulls, Frank–Wolfe hull projection, normal cones,
//!   cone-plus-hull membership certificates.
//! * [`transversality`] — limit schedules, gradient sampling, and the
//!   boundary-condition checks themselves.
//! * [`models`] — built-in model families with closed-form references.

pub mod convex;
pub mod error;
pub mod expr;
pub(crate) mod linalg;
pub mod models;
pub mod ode;
pub mod transversality;
pub mod variational;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
