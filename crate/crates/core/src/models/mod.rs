//! Built-in model families with closed-form reference solutions, plus the
//! JSON model-file schema.
//!
//! Two families cover the worked examples:
//!
//! * [`SDrivenModel`] — dynamics `dy = e^{-t} u` with integrand
//!   `|u|^2/4 + S_x(t,y) e^{-t} u + S_t(t,y)` for a potential `S(t, x)`.
//!   Its maximum-principle solutions are the explicit family
//!   `psi = S_x + C`, `u = 2 e^{-t} C`, `y = x* + (1 - e^{-2t}) C`.
//! * [`RamseyModel`] — one-sector optimal growth: dynamics `f(y) - u`,
//!   discounted disutility `e^{-rho t} f0(u)`, candidate optimal path on
//!   the stable manifold of the reduced phase-plane system.

mod file;
mod ramsey;
mod sdriven;

pub use file::{BuiltKind, BuiltModel, ModelFile};
pub use ramsey::{
    ramsey_eta, ramsey_reduced_field, ramsey_saddle_path, ramsey_stationary, RamseyModel,
};
pub use sdriven::{
    oscillator_model, planar_model, planar_optimal_process, sdriven_system, SDrivenModel,
};

use crate::expr::EvalScratch;
use std::cell::RefCell;

thread_local! {
    static SCRATCH: RefCell<ModelScratch> = RefCell::new(ModelScratch::default());
}

/// Reusable per-thread buffers for compiled-expression evaluation inside
/// system closures.
#[derive(Default)]
pub(crate) struct ModelScratch {
    pub eval: EvalScratch,
    pub env: Vec<f64>,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

pub(crate) fn with_scratch<R>(f: impl FnOnce(&mut ModelScratch) -> R) -> R {
    SCRATCH.with(|s| f(&mut s.borrow_mut()))
}

/// The three named built-in models used by the regression suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    /// Planar periodic potential `S = x1 sin t - x2 cos t`.
    Planar,
    /// Scalar oscillating potential `S = e^{-t} sin(e^t x1) - e^{-x1^2}`.
    Oscillator,
    /// Growth preset `f = sqrt(x1)`, `f0 = -ln(u1)`, `rho = 1/4`, `x* = 1`.
    Ramsey,
}

impl Builtin {
    pub fn from_name(name: &str) -> Option<Builtin> {
        match name {
            "planar" => Some(Builtin::Planar),
            "oscillator" => Some(Builtin::Oscillator),
            "ramsey" => Some(Builtin::Ramsey),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Planar => "planar",
            Builtin::Oscillator => "oscillator",
            Builtin::Ramsey => "ramsey",
        }
    }

    /// The model file this builtin corresponds to.
    pub fn model_file(self) -> ModelFile {
        match self {
            Builtin::Planar => ModelFile::Sdriven {
                m: 2,
                s: "x1*sin(t) - x2*cos(t)".into(),
                x_star: vec![0.0, 0.0],
                c: Some(vec![0.5, 0.0]),
            },
            Builtin::Oscillator => ModelFile::Sdriven {
                m: 1,
                s: "exp(-t)*sin(exp(t)*x1) - exp(-x1^2)".into(),
                x_star: vec![0.0],
                c: Some(vec![0.0]),
            },
            Builtin::Ramsey => ModelFile::Ramsey {
                f: "sqrt(x1)".into(),
                f0: "-ln(u1)".into(),
                rho: 0.25,
                x_star: 1.0,
            },
        }
    }
}
