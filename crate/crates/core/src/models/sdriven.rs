//! Potential-driven control systems: `dy = e^{-t} u` with the integrand
//! built from a scalar potential `S(t, x)`.

use super::{with_scratch, ModelScratch};
use crate::expr::{parse_expr, Expr, Program, Var};
use crate::ode::{ControlSignal, ControlSystem, Process};
use crate::variational::{CostateArc, Multiplier};
use crate::{Error, Result};
use std::sync::Arc;

/// Default node spacing of the analytic family constructors.
const FAMILY_STEP: f64 = 0.02;

/// A control system induced by a potential `S(t, x1..xm)`:
/// dynamics `dy_i = e^{-t} u_i`, integrand
/// `f0 = |u|^2 / 4 + S_x(t, y) . (e^{-t} u) + S_t(t, y)`,
/// fixed initial state `x*`, free asymptotic endpoint, `l = 0`.
#[derive(Debug, Clone)]
pub struct SDrivenModel {
    pub m: usize,
    pub s: Expr,
    pub x_star: Vec<f64>,
    program: Arc<Program>,
    wrt: Vec<Var>,
}

impl SDrivenModel {
    pub fn new(m: usize, s: Expr, x_star: Vec<f64>) -> Result<Self> {
        if x_star.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: x_star.len(),
            });
        }
        // Compiling with no control slots rejects stray u-variables.
        let program = Program::compile(&s, m, 0)?;
        let mut wrt = vec![Var::T];
        wrt.extend((0..m).map(Var::X));
        Ok(SDrivenModel {
            m,
            s,
            x_star,
            program: Arc::new(program),
            wrt,
        })
    }

    pub fn parse(m: usize, s_text: &str, x_star: Vec<f64>) -> Result<Self> {
        SDrivenModel::new(m, parse_expr(s_text)?, x_star)
    }

    pub fn potential_value(&self, t: f64, x: &[f64]) -> Result<f64> {
        with_scratch(|ws| {
            ws.env.clear();
            ws.env.push(t);
            ws.env.extend_from_slice(x);
            self.program.eval_value(&ws.env, &mut ws.eval)
        })
    }

    /// `S(t, x)` and its gradient `(S_t, S_x1..S_xm)`.
    pub fn potential_with_grad(&self, t: f64, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.m + 1];
        let value = with_scratch(|ws| {
            ws.env.clear();
            ws.env.push(t);
            ws.env.extend_from_slice(x);
            self.program
                .eval_grad(&ws.env, &self.wrt, &mut grad, &mut ws.eval)
        })?;
        Ok((value, grad))
    }

    /// Gradient row `S_x(t, x)`.
    pub fn potential_gradient_x(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.potential_with_grad(t, x)?.1[1..].to_vec())
    }

    /// The induced control system.
    pub fn system(&self) -> Result<ControlSystem> {
        let m = self.m;
        let d = m + 1;

        let f = move |t: f64, _x: &[f64], u: &[f64], out: &mut [f64]| -> Result<()> {
            let et = (-t).exp();
            for (o, ui) in out.iter_mut().zip(u) {
                *o = et * ui;
            }
            Ok(())
        };

        let prog_f0 = self.program.clone();
        let wrt_f0 = self.wrt.clone();
        let f0 = move |t: f64, x: &[f64], u: &[f64]| -> Result<f64> {
            with_scratch(|ws| {
                let ModelScratch {
                    env, grad, eval, ..
                } = ws;
                env.clear();
                env.push(t);
                env.extend_from_slice(x);
                grad.resize(d, 0.0);
                prog_f0.eval_grad(env, &wrt_f0, grad, eval)?;
                let et = (-t).exp();
                let mut val = grad[0]; // S_t
                let mut usq = 0.0;
                for (i, ui) in u.iter().enumerate() {
                    usq += ui * ui;
                    val += grad[1 + i] * et * ui;
                }
                Ok(val + 0.25 * usq)
            })
        };

        let fx = move |_t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]| -> Result<()> {
            out.fill(0.0);
            Ok(())
        };

        let prog_f0x = self.program.clone();
        let wrt_f0x = self.wrt.clone();
        let f0x = move |t: f64, x: &[f64], u: &[f64], out: &mut [f64]| -> Result<()> {
            with_scratch(|ws| {
                let ModelScratch {
                    env,
                    grad,
                    hess,
                    eval,
                } = ws;
                env.clear();
                env.push(t);
                env.extend_from_slice(x);
                grad.resize(d, 0.0);
                hess.resize(d * d, 0.0);
                prog_f0x.eval_hess(env, &wrt_f0x, grad, hess, eval)?;
                let et = (-t).exp();
                for j in 0..x.len() {
                    // d f0 / d x_j = S_{t x_j} + sum_i S_{x_i x_j} e^{-t} u_i
                    let mut v = hess[j + 1];
                    for (i, ui) in u.iter().enumerate() {
                        v += hess[(1 + i) * d + (1 + j)] * et * ui;
                    }
                    out[j] = v;
                }
                Ok(())
            })
        };

        Ok(ControlSystem::builder(m, m, f, f0)
            .fx(fx)
            .f0x(f0x)
            .c0(crate::convex::ConstraintSet::point(&self.x_star))
            .c_as(crate::convex::ConstraintSet::whole_space(m))
            .build())
    }

    /// The explicit maximum-principle family member with parameter `C`:
    /// `y(t) = x* + (1 - e^{-2t}) C`, `u(t) = 2 e^{-t} C`,
    /// `psi(t) = S_x(t, y(t)) + C`, `lambda = 1`, sampled analytically on a
    /// uniform grid over `[0, t_end]` (no integration).
    pub fn family_process(&self, c: &[f64], t_end: f64) -> Result<(Process, CostateArc)> {
        self.family_process_with_step(c, t_end, FAMILY_STEP)
    }

    pub fn family_process_with_step(
        &self,
        c: &[f64],
        t_end: f64,
        step: f64,
    ) -> Result<(Process, CostateArc)> {
        if c.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: c.len(),
            });
        }
        if !(t_end > 0.0 && step > 0.0) {
            return Err(Error::InvalidInput("family span must be positive".into()));
        }
        let m = self.m;
        let d = m + 1;
        let n = ((t_end / step).ceil() as usize).max(2) + 1;
        let c_norm_sq: f64 = c.iter().map(|v| v * v).sum();
        let s0 = self.potential_value(0.0, &self.x_star)?;

        let mut ts = Vec::with_capacity(n);
        let mut states = Vec::with_capacity(n);
        let mut costs = Vec::with_capacity(n);
        let mut derivs = Vec::with_capacity(n);
        let mut psis = Vec::with_capacity(n);
        let mut dpsis = Vec::with_capacity(n);

        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        for i in 0..n {
            let t = (i as f64 * step).min(t_end);
            let e1 = (-t).exp();
            let e2 = (-2.0 * t).exp();
            let y: Vec<f64> = (0..m).map(|j| self.x_star[j] + (1.0 - e2) * c[j]).collect();
            let dy: Vec<f64> = (0..m).map(|j| 2.0 * e2 * c[j]).collect();

            let s_val = with_scratch(|ws| {
                ws.env.clear();
                ws.env.push(t);
                ws.env.extend_from_slice(&y);
                self.program
                    .eval_hess(&ws.env, &self.wrt, &mut grad, &mut hess, &mut ws.eval)
            })?;

            // Running cost from the closed-form identity
            // J = S(t, y) - S(0, x*) + (1 - e^{-2t}) |C|^2 / 2.
            let w = s_val - s0 + 0.5 * (1.0 - e2) * c_norm_sq;
            // dw = f0(t, y, u) with u = 2 e^{-t} C.
            let mut dw = grad[0] + e2 * c_norm_sq;
            for j in 0..m {
                dw += grad[1 + j] * e1 * (2.0 * e1 * c[j]);
            }

            // psi = S_x + C; dpsi_j = S_{t x_j} + sum_i S_{x_j x_i} dy_i.
            let psi: Vec<f64> = (0..m).map(|j| grad[1 + j] + c[j]).collect();
            let dpsi: Vec<f64> = (0..m)
                .map(|j| {
                    let mut v = hess[j + 1];
                    for (i, dyi) in dy.iter().enumerate() {
                        v += hess[(1 + j) * d + (1 + i)] * dyi;
                    }
                    v
                })
                .collect();

            ts.push(t);
            states.push(y);
            costs.push(w);
            let mut dz = dy;
            dz.push(dw);
            derivs.push(dz);
            psis.push(psi);
            dpsis.push(dpsi);
        }

        let c_owned = c.to_vec();
        let control = ControlSignal::analytic(m, move |t, out| {
            let e1 = (-t).exp();
            for (o, cj) in out.iter_mut().zip(&c_owned) {
                *o = 2.0 * e1 * cj;
            }
        });

        let process = Process::from_nodes(ts.clone(), states, costs, derivs, control)?;
        let arc = CostateArc::from_nodes(ts, psis, dpsis, Multiplier::Normal)?;
        Ok((process, arc))
    }
}

/// The induced control system of an S-driven model.
pub fn sdriven_system(model: &SDrivenModel) -> Result<ControlSystem> {
    model.system()
}

/// Planar periodic potential `S = x1 sin t - x2 cos t`.
pub fn planar_model(x_star: &[f64; 2]) -> SDrivenModel {
    SDrivenModel::parse(2, "x1*sin(t) - x2*cos(t)", x_star.to_vec())
        .expect("planar potential parses")
}

/// Scalar potential `S = e^{-t} sin(e^t x1) - e^{-x1^2}` whose gradient at
/// the origin stays at 1 for all times.
pub fn oscillator_model() -> SDrivenModel {
    SDrivenModel::parse(1, "exp(-t)*sin(exp(t)*x1) - exp(-x1^2)", vec![0.0])
        .expect("oscillator potential parses")
}

/// The planar family member `y = x* + (1 - e^{-2t}) C` with its co-state
/// arc, sampled analytically.
pub fn planar_optimal_process(
    c: &[f64; 2],
    x_star: &[f64; 2],
    t_end: f64,
) -> Result<(Process, CostateArc)> {
    planar_model(x_star).family_process(c, t_end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{eval_cost, hamiltonian, integrate_process, Tol};
    use crate::variational::integrate_adjoint;

    #[test]
    fn induced_integrand_matches_display() {
        // f0 = |u|^2/4 + S_x e^{-t} u + S_t for the planar potential:
        // |u|^2/4 + (e^{-t} u1 + y2) sin t + (y1 - e^{-t} u2) cos t.
        let model = planar_model(&[0.0, 0.0]);
        let sys = model.system().unwrap();
        for (t, x, u) in [
            (0.3, [0.2, -0.4], [1.0, 0.5]),
            (2.0, [1.5, 2.5], [-0.3, 0.8]),
            (5.7, [-1.0, 0.1], [0.0, 0.0]),
        ] {
            let got = sys.eval_f0(t, &x, &u).unwrap();
            let et = (-t as f64).exp();
            let want = 0.25 * (u[0] * u[0] + u[1] * u[1])
                + (et * u[0] + x[1]) * t.sin()
                + (x[0] - et * u[1]) * t.cos();
            assert!((got - want).abs() < 1e-14, "t={t}: {got} vs {want}");
        }
        sys.check_jacobians(
            &[
                (0.4, vec![0.3, -0.2], vec![0.7, 0.1]),
                (1.9, vec![-0.5, 0.8], vec![-0.2, 0.4]),
            ],
            1e-5,
        )
        .unwrap();

        // Vanishing potential: the integrand reduces to |u|^2 / 4 and the
        // rest point u = 0 is optimal.
        let flat = SDrivenModel::parse(1, "0", vec![0.0]).unwrap();
        let fsys = flat.system().unwrap();
        assert_eq!(fsys.eval_f0(1.0, &[3.0], &[2.0]).unwrap(), 1.0);
        let (p, arc) = flat.family_process(&[0.0], 4.0).unwrap();
        assert_eq!(p.cost_at(4.0).unwrap(), 0.0);
        assert_eq!(arc.psi_at(2.0).unwrap(), vec![0.0]);
    }

    #[test]
    fn family_reintegrates_to_itself() {
        // y(t) = x* + (1 - e^{-2t}) C under u = 2 e^{-t} C.
        let x_star = [0.25, -0.5];
        let c = [0.8, -0.3];
        let (p, _) = planar_optimal_process(&c, &x_star, 10.0).unwrap();
        let sys = planar_model(&x_star).system().unwrap();
        let re = integrate_process(
            &sys,
            &x_star,
            0.0,
            p.control(),
            10.0,
            Tol::new(1e-12, 1e-12),
        )
        .unwrap();
        for t in [0.5, 3.0, 10.0] {
            let ya = p.state_at(t).unwrap();
            let yb = re.state_at(t).unwrap();
            for j in 0..2 {
                assert!((ya[j] - yb[j]).abs() < 1e-9, "t={t} j={j}");
            }
        }
    }

    #[test]
    fn cost_identity_holds_along_family() {
        // J(x*, 0, u; t) - S(t, y(t)) + S(0, x*) = (1 - e^{-2t}) |C|^2 / 2,
        // with J computed by actual integration.
        let x_star = [0.0, 0.0];
        let c = [0.6, -0.45];
        let model = planar_model(&x_star);
        let sys = model.system().unwrap();
        let (p, _) = model.family_process(&c, 12.0).unwrap();
        let re = integrate_process(&sys, &x_star, 0.0, p.control(), 12.0, Tol::default()).unwrap();
        let csq = c[0] * c[0] + c[1] * c[1];
        for theta in [1.0, 5.0, 12.0] {
            let j = eval_cost(&re, theta).unwrap();
            let y = re.state_at(theta).unwrap();
            let s_theta = model.potential_value(theta, &y).unwrap();
            let s_0 = model.potential_value(0.0, &x_star).unwrap();
            let lhs = j - s_theta + s_0;
            let rhs = 0.5 * (1.0 - (-2.0 * theta).exp()) * csq;
            assert!((lhs - rhs).abs() < 1e-6, "theta={theta}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn zero_parameter_family_is_stationary() {
        let (p, arc) = planar_optimal_process(&[0.0, 0.0], &[0.3, 0.7], 6.0).unwrap();
        for t in [0.0, 2.5, 6.0] {
            let y = p.state_at(t).unwrap();
            assert!((y[0] - 0.3).abs() < 1e-15 && (y[1] - 0.7).abs() < 1e-15);
            let psi = arc.psi_at(t).unwrap();
            assert!((psi[0] - t.sin()).abs() < 1e-9);
            assert!((psi[1] + t.cos()).abs() < 1e-9);
        }
    }

    #[test]
    fn adjoint_closure_reproduces_family_costate() {
        // Integrating the adjoint equation from psi(0) = S_x(0, x*) + C
        // must track psi(t) = S_x(t, y(t)) + C.
        let x_star = [0.0, 0.0];
        let c = [0.7, 0.2];
        let model = planar_model(&x_star);
        let sys = model.system().unwrap();
        let (p, arc) = model.family_process(&c, 12.0).unwrap();
        let got =
            integrate_adjoint(&sys, &p, &arc.psi_at(0.0).unwrap(), Multiplier::Normal).unwrap();
        let mut sup = 0.0f64;
        for &t in got.grid().nodes() {
            let a = got.psi_at(t).unwrap();
            let b = arc.psi_at(t).unwrap();
            sup = sup.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
        }
        assert!(sup < 1e-8, "sup deviation {sup}");
    }

    #[test]
    fn family_control_maximizes_hamiltonian() {
        // H is strictly concave in u; its maximizer is u(t) = 2 e^{-t} C.
        let x_star = [0.1, -0.2];
        let c = [0.5, -0.9];
        let model = planar_model(&x_star);
        let sys = model.system().unwrap();
        let (p, arc) = model.family_process(&c, 4.0).unwrap();
        for t in [0.0, 1.3, 3.7] {
            let y = p.state_at(t).unwrap();
            let psi = arc.psi_at(t).unwrap();
            let u_star: Vec<f64> = c.iter().map(|cj| 2.0 * (-t as f64).exp() * cj).collect();
            let h_star = hamiltonian(&sys, &y, &psi, &u_star, 1.0, t).unwrap();
            for du in [[0.1, 0.0], [-0.05, 0.08], [0.0, -0.2]] {
                let u = [u_star[0] + du[0], u_star[1] + du[1]];
                let h = hamiltonian(&sys, &y, &psi, &u, 1.0, t).unwrap();
                assert!(h <= h_star + 1e-12, "t={t}: perturbed control beat u*");
            }
        }
    }

    #[test]
    fn oscillator_gradient_and_integrand_vanish_on_axis() {
        let model = oscillator_model();
        let sys = model.system().unwrap();
        // S_x(t, 0) = 1 for all t; f0_x(t, 0, 0) = S_tx(t, 0) = 0.
        for t in [0.0, 1.0, 4.0, 20.0, 100.0] {
            let gx = model.potential_gradient_x(t, &[0.0]).unwrap();
            assert!((gx[0] - 1.0).abs() < 1e-12, "t={t}");
            let mut row = [0.0];
            sys.eval_f0x(t, &[0.0], &[0.0], &mut row).unwrap();
            assert_eq!(row[0], 0.0, "t={t}");
        }
        // The optimal family member at C = 0 is the rest point with
        // constant co-state 1.
        let (p, arc) = model.family_process(&[0.0], 8.0).unwrap();
        for t in [0.0, 3.0, 8.0] {
            assert_eq!(p.state_at(t).unwrap()[0], 0.0);
            assert!((arc.psi_at(t).unwrap()[0] - 1.0).abs() < 1e-12);
            assert!(p.cost_at(t).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn cost_offset_is_independent_of_initial_state() {
        // J(x, 0, u; t) - S(t, y^x(t)) + S(0, x) does not depend on x.
        let model = planar_model(&[0.0, 0.0]);
        let sys = model.system().unwrap();
        let c = [0.4, 0.3];
        let (p, _) = model.family_process(&c, 6.0).unwrap();
        let mut offsets = Vec::new();
        for x0 in [[0.0, 0.0], [0.5, -0.3], [-1.0, 2.0]] {
            let re = integrate_process(&sys, &x0, 0.0, p.control(), 6.0, Tol::default()).unwrap();
            let theta = 6.0;
            let j = eval_cost(&re, theta).unwrap();
            let y = re.state_at(theta).unwrap();
            let off = j - model.potential_value(theta, &y).unwrap()
                + model.potential_value(0.0, &x0).unwrap();
            offsets.push(off);
        }
        for w in offsets.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-6, "{offsets:?}");
        }
    }
}
