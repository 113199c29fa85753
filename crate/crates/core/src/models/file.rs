//! JSON model files and their conversion into runnable systems.
//!
//! Schema (see `docs/model_schema.md`):
//!
//! ```json
//! {"family": "sdriven", "m": 2, "s": "x1*sin(t) - x2*cos(t)",
//!  "x_star": [0, 0], "c": [0.5, 0]}
//! {"family": "ramsey", "f": "sqrt(x1)", "f0": "-ln(u1)",
//!  "rho": 0.25, "x_star": 1.0}
//! {"family": "custom", "m": 1, "k": 1, "f": ["-x1 + u1"], "f0": "x1^2",
//!  "x0": [0.5], "control": {"kind": "constant", "values": [0.0]}, ...}
//! ```

use super::{RamseyModel, SDrivenModel};
use crate::convex::ConstraintSet;
use crate::expr::{parse_expr, Program, Var};
use crate::models::{ramsey_saddle_path, with_scratch};
use crate::ode::{
    integrate_process, ControlSet, ControlSignal, ControlSystem, Process, TimeGrid, Tol,
};
use crate::variational::CostateArc;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Bounds with `null` meaning unbounded.
fn bound(v: &Option<f64>, sign: f64) -> f64 {
    v.unwrap_or(sign * f64::INFINITY)
}

/// Constraint descriptor as written in model files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintSetFile {
    WholeSpace,
    Point {
        point: Vec<f64>,
    },
    HalfLines {
        lower: Vec<f64>,
    },
    Box {
        lower: Vec<Option<f64>>,
        upper: Vec<Option<f64>>,
    },
}

impl ConstraintSetFile {
    fn build(&self, dim: usize) -> Result<ConstraintSet> {
        let set = match self {
            ConstraintSetFile::WholeSpace => ConstraintSet::whole_space(dim),
            ConstraintSetFile::Point { point } => ConstraintSet::point(point),
            ConstraintSetFile::HalfLines { lower } => ConstraintSet::half_lines(lower),
            ConstraintSetFile::Box { lower, upper } => ConstraintSet::Box {
                lower: lower.iter().map(|v| bound(v, -1.0)).collect(),
                upper: upper.iter().map(|v| bound(v, 1.0)).collect(),
            },
        };
        if set.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: set.dim(),
            });
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlSetFile {
    WholeSpace,
    Box {
        lower: Vec<Option<f64>>,
        upper: Vec<Option<f64>>,
    },
    FiniteGrid {
        points: Vec<Vec<f64>>,
    },
}

impl ControlSetFile {
    fn build(&self, k: usize) -> Result<ControlSet> {
        Ok(match self {
            ControlSetFile::WholeSpace => ControlSet::WholeSpace { dim: k },
            ControlSetFile::Box { lower, upper } => ControlSet::Box {
                lower: lower.iter().map(|v| bound(v, -1.0)).collect(),
                upper: upper.iter().map(|v| bound(v, 1.0)).collect(),
            },
            ControlSetFile::FiniteGrid { points } => ControlSet::FiniteGrid {
                points: points.clone(),
            },
        })
    }
}

/// Reference control of a custom model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlFile {
    /// Constant vector.
    Constant { values: Vec<f64> },
    /// Component expressions in `t`.
    Exprs { exprs: Vec<String> },
    /// Piecewise-constant values on a grid (one value per interval).
    Grid {
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

impl ControlFile {
    fn build(&self, k: usize) -> Result<ControlSignal> {
        match self {
            ControlFile::Constant { values } => {
                if values.len() != k {
                    return Err(Error::DimensionMismatch {
                        expected: k,
                        got: values.len(),
                    });
                }
                Ok(ControlSignal::constant(values.clone()))
            }
            ControlFile::Exprs { exprs } => {
                if exprs.len() != k {
                    return Err(Error::DimensionMismatch {
                        expected: k,
                        got: exprs.len(),
                    });
                }
                let programs: Vec<Program> = exprs
                    .iter()
                    .map(|text| Program::compile(&parse_expr(text)?, 0, 0))
                    .collect::<Result<_>>()?;
                let programs = Arc::new(programs);
                Ok(ControlSignal::analytic(k, move |t, out| {
                    with_scratch(|ws| {
                        for (o, p) in out.iter_mut().zip(programs.iter()) {
                            *o = p.eval_value(&[t], &mut ws.eval).unwrap_or(f64::NAN);
                        }
                    })
                }))
            }
            ControlFile::Grid { times, values } => {
                let grid = TimeGrid::new(times.clone())?;
                ControlSignal::grid(grid, values.clone())
            }
        }
    }
}

/// A model file: one of the built-in families or a custom system given by
/// expressions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum ModelFile {
    Sdriven {
        m: usize,
        /// Potential `S(t, x1..xm)`.
        s: String,
        x_star: Vec<f64>,
        /// Family parameter of the reference process (defaults to zero).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<Vec<f64>>,
    },
    Ramsey {
        f: String,
        f0: String,
        rho: f64,
        x_star: f64,
    },
    Custom {
        m: usize,
        k: usize,
        /// Dynamics components `f_i(t, x, u)`.
        f: Vec<String>,
        /// Running-cost integrand `f0(t, x, u)`.
        f0: String,
        /// Initial cost `l(x)`; defaults to zero.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        l: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        control_set: Option<ControlSetFile>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c0: Option<ConstraintSetFile>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c_as: Option<ConstraintSetFile>,
        /// Reference initial state.
        x0: Vec<f64>,
        /// Reference control.
        control: ControlFile,
    },
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("model file: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model files serialize")
    }

    /// Build the runnable system plus the reference-process recipe.
    pub fn build(&self) -> Result<BuiltModel> {
        match self {
            ModelFile::Sdriven { m, s, x_star, c } => {
                let model = SDrivenModel::parse(*m, s, x_star.clone())?;
                let system = model.system()?;
                let c = c.clone().unwrap_or_else(|| vec![0.0; *m]);
                if c.len() != *m {
                    return Err(Error::DimensionMismatch {
                        expected: *m,
                        got: c.len(),
                    });
                }
                Ok(BuiltModel {
                    system,
                    kind: BuiltKind::Sdriven { model, c },
                })
            }
            ModelFile::Ramsey { f, f0, rho, x_star } => {
                let model = RamseyModel::parse(f, f0, *rho, *x_star)?;
                let system = model.system()?;
                Ok(BuiltModel {
                    system,
                    kind: BuiltKind::Ramsey { model },
                })
            }
            ModelFile::Custom {
                m,
                k,
                f,
                f0,
                l,
                control_set,
                c0,
                c_as,
                x0,
                control,
            } => {
                let (m, k) = (*m, *k);
                if f.len() != m {
                    return Err(Error::DimensionMismatch {
                        expected: m,
                        got: f.len(),
                    });
                }
                if x0.len() != m {
                    return Err(Error::DimensionMismatch {
                        expected: m,
                        got: x0.len(),
                    });
                }
                let f_programs: Vec<Program> = f
                    .iter()
                    .map(|text| Program::compile(&parse_expr(text)?, m, k))
                    .collect::<Result<_>>()?;
                let f_programs = Arc::new(f_programs);
                let f0_program = Arc::new(Program::compile(&parse_expr(f0)?, m, k)?);
                let l_program = match l {
                    Some(text) => Some(Arc::new(Program::compile(&parse_expr(text)?, m, 0)?)),
                    None => None,
                };

                let fp = f_programs.clone();
                let dyn_f = move |t: f64, x: &[f64], u: &[f64], out: &mut [f64]| -> Result<()> {
                    with_scratch(|ws| {
                        pack_env(&mut ws.env, t, x, u);
                        for (o, p) in out.iter_mut().zip(fp.iter()) {
                            *o = p.eval_value(&ws.env, &mut ws.eval)?;
                        }
                        Ok(())
                    })
                };
                let f0p = f0_program.clone();
                let dyn_f0 = move |t: f64, x: &[f64], u: &[f64]| -> Result<f64> {
                    with_scratch(|ws| {
                        pack_env(&mut ws.env, t, x, u);
                        f0p.eval_value(&ws.env, &mut ws.eval)
                    })
                };

                // State Jacobians from the compiled expressions.
                let fp = f_programs.clone();
                let wrt_x: Vec<Var> = (0..m).map(Var::X).collect();
                let wrt_x2 = wrt_x.clone();
                let dyn_fx = move |t: f64, x: &[f64], u: &[f64], out: &mut [f64]| -> Result<()> {
                    with_scratch(|ws| {
                        pack_env(&mut ws.env, t, x, u);
                        ws.grad.resize(m, 0.0);
                        let super::ModelScratch {
                            env, grad, eval, ..
                        } = ws;
                        for (i, p) in fp.iter().enumerate() {
                            p.eval_grad(env, &wrt_x, grad, eval)?;
                            out[i * m..(i + 1) * m].copy_from_slice(grad);
                        }
                        Ok(())
                    })
                };
                let f0p = f0_program.clone();
                let dyn_f0x = move |t: f64, x: &[f64], u: &[f64], out: &mut [f64]| -> Result<()> {
                    with_scratch(|ws| {
                        pack_env(&mut ws.env, t, x, u);
                        f0p.eval_grad(&ws.env, &wrt_x2, out, &mut ws.eval)?;
                        Ok(())
                    })
                };

                let mut builder = ControlSystem::builder(m, k, dyn_f, dyn_f0)
                    .fx(dyn_fx)
                    .f0x(dyn_f0x);
                if let Some(lp) = l_program {
                    let lp2 = lp.clone();
                    let wrt_l: Vec<Var> = (0..m).map(Var::X).collect();
                    builder = builder.initial_cost(
                        move |x: &[f64]| {
                            with_scratch(|ws| {
                                pack_env(&mut ws.env, 0.0, x, &[]);
                                lp.eval_value(&ws.env, &mut ws.eval)
                            })
                        },
                        move |x: &[f64], out: &mut [f64]| {
                            with_scratch(|ws| {
                                pack_env(&mut ws.env, 0.0, x, &[]);
                                lp2.eval_grad(&ws.env, &wrt_l, out, &mut ws.eval)?;
                                Ok(())
                            })
                        },
                    );
                }
                if let Some(cs) = control_set {
                    builder = builder.control_set(cs.build(k)?);
                }
                if let Some(set) = c0 {
                    builder = builder.c0(set.build(m)?);
                }
                if let Some(set) = c_as {
                    builder = builder.c_as(set.build(m)?);
                }
                let system = builder.build();
                let signal = control.build(k)?;
                // Dual-number Jacobians must agree with finite differences
                // at evaluable probe points near the initial state.
                let mut probes = Vec::new();
                for t in [0.0, 0.7] {
                    let u = signal.eval_vec(t);
                    for shift in [-0.05, 0.0, 0.05] {
                        let x: Vec<f64> = x0.iter().map(|v| v + shift).collect();
                        let mut out = vec![0.0; m];
                        if system.eval_f(t, &x, &u, &mut out).is_ok()
                            && system.eval_f0(t, &x, &u).is_ok()
                        {
                            probes.push((t, x, u.clone()));
                        }
                    }
                }
                system.check_jacobians(&probes, 1e-4)?;
                Ok(BuiltModel {
                    system,
                    kind: BuiltKind::Custom {
                        x0: x0.clone(),
                        control: signal,
                    },
                })
            }
        }
    }
}

fn pack_env(env: &mut Vec<f64>, t: f64, x: &[f64], u: &[f64]) {
    env.clear();
    env.push(t);
    env.extend_from_slice(x);
    env.extend_from_slice(u);
}

/// A runnable model: the system plus whatever is needed to produce the
/// reference (candidate optimal) process and co-state arc.
pub struct BuiltModel {
    pub system: ControlSystem,
    pub kind: BuiltKind,
}

pub enum BuiltKind {
    Sdriven {
        model: SDrivenModel,
        c: Vec<f64>,
    },
    Ramsey {
        model: RamseyModel,
    },
    Custom {
        x0: Vec<f64>,
        control: ControlSignal,
    },
}

impl BuiltModel {
    pub fn state_dim(&self) -> usize {
        self.system.state_dim()
    }

    /// The reference process over `[0, t_end]` and, when the family supplies
    /// one, its co-state arc.
    pub fn reference(&self, t_end: f64, tol: Tol) -> Result<(Process, Option<CostateArc>)> {
        match &self.kind {
            BuiltKind::Sdriven { model, c } => {
                let (p, arc) = model.family_process(c, t_end)?;
                Ok((p, Some(arc)))
            }
            BuiltKind::Ramsey { model } => {
                let (p, arc) = ramsey_saddle_path(model, t_end, 1e-9)?;
                Ok((p, Some(arc)))
            }
            BuiltKind::Custom { x0, control } => {
                let p = integrate_process(&self.system, x0, 0.0, control, t_end, tol)?;
                Ok((p, None))
            }
        }
    }

    pub fn family_name(&self) -> &'static str {
        match &self.kind {
            BuiltKind::Sdriven { .. } => "sdriven",
            BuiltKind::Ramsey { .. } => "ramsey",
            BuiltKind::Custom { .. } => "custom",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sdriven_roundtrip_and_build() {
        let text = r#"{
            "family": "sdriven",
            "m": 2,
            "s": "x1*sin(t) - x2*cos(t)",
            "x_star": [0.0, 0.0],
            "c": [0.5, 0.0]
        }"#;
        let file = ModelFile::from_json(text).unwrap();
        let built = file.build().unwrap();
        assert_eq!(built.state_dim(), 2);
        let (p, arc) = built.reference(5.0, Tol::default()).unwrap();
        assert!(arc.is_some());
        assert!((p.state_at(5.0).unwrap()[0] - 0.5 * (1.0 - (-10.0f64).exp())).abs() < 1e-9);
        let reparsed = ModelFile::from_json(&file.to_json()).unwrap();
        assert!(matches!(reparsed, ModelFile::Sdriven { .. }));
    }

    #[test]
    fn custom_model_with_bounds_and_expr_control() {
        let text = r#"{
            "family": "custom",
            "m": 1,
            "k": 1,
            "f": ["-x1 + u1"],
            "f0": "x1^2",
            "control_set": {"kind": "box", "lower": [-1.0], "upper": [1.0]},
            "c0": {"kind": "whole_space"},
            "c_as": {"kind": "half_lines", "lower": [0.0]},
            "x0": [0.5],
            "control": {"kind": "exprs", "exprs": ["sin(t)/2"]}
        }"#;
        let built = ModelFile::from_json(text).unwrap().build().unwrap();
        let (p, arc) = built.reference(3.0, Tol::default()).unwrap();
        assert!(arc.is_none());
        assert!(p.cost_at(3.0).unwrap() > 0.0);
        // Jacobians agree with finite differences.
        built
            .system
            .check_jacobians(&[(0.7, vec![0.4], vec![0.1])], 1e-5)
            .unwrap();
    }

    #[test]
    fn malformed_json_names_the_problem() {
        let err = ModelFile::from_json("{\"family\": \"sdriven\"}").unwrap_err();
        match err {
            Error::InvalidInput(msg) => assert!(msg.contains("model file")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
