//! One-sector optimal growth: dynamics `dy = f(y) - u`, discounted
//! disutility `e^{-rho t} f0(u)`, and the saddle-path construction for the
//! candidate optimal process.

use super::with_scratch;
use crate::expr::{parse_expr, Expr, Program, Var};
use crate::ode::{
    dopri5, ControlSet, ControlSignal, ControlSystem, OdeOptions, Process, RawPath, Tol,
};
use crate::variational::{CostateArc, Multiplier};
use crate::{Error, Result};
use std::sync::Arc;

/// Positivity guards: integration aborts when the capital stock or the
/// control drop below these floors.
const STATE_GUARD: f64 = 1e-9;
const CONTROL_GUARD: f64 = 1e-9;

/// Growth model data: production `f(x1)`, disutility `f0(u1)`, discount
/// rate `rho`, initial capital `x*`.
///
/// Constructor invariants on probe grids `x > 0`, `u > 0`:
/// `f'' <= 0`, `f0' < 0`, `f0'' > 0`, and `f(0) <= 0`.
#[derive(Debug, Clone)]
pub struct RamseyModel {
    pub f: Expr,
    pub f0: Expr,
    pub rho: f64,
    pub x_star: f64,
    f_prog: Arc<Program>,
    f0_prog: Arc<Program>,
}

/// Value, first, and second derivative of a compiled scalar expression at
/// one point.
fn eval_d2(prog: &Program, env: &[f64], wrt: Var) -> Result<(f64, f64, f64)> {
    let mut grad = [0.0];
    let mut hess = [0.0];
    let v = with_scratch(|ws| prog.eval_hess(env, &[wrt], &mut grad, &mut hess, &mut ws.eval))?;
    Ok((v, grad[0], hess[0]))
}

impl RamseyModel {
    pub fn new(f: Expr, f0: Expr, rho: f64, x_star: f64) -> Result<Self> {
        if x_star < 0.0 {
            return Err(Error::InvalidInput("x* must be nonnegative".into()));
        }
        let f_prog = Program::compile(&f, 1, 0)?;
        let f0_prog = Program::compile(&f0, 0, 1)?;
        let model = RamseyModel {
            f,
            f0,
            rho,
            x_star,
            f_prog: Arc::new(f_prog),
            f0_prog: Arc::new(f0_prog),
        };
        model.validate_shape()?;
        Ok(model)
    }

    pub fn parse(f_text: &str, f0_text: &str, rho: f64, x_star: f64) -> Result<Self> {
        RamseyModel::new(parse_expr(f_text)?, parse_expr(f0_text)?, rho, x_star)
    }

    fn probe_grid() -> Vec<f64> {
        // Geometric probes spanning four decades around 1.
        (0..25).map(|i| 1e-2 * 10f64.powf(i as f64 / 6.0)).collect()
    }

    /// Shape invariants checked on probe grids.
    fn validate_shape(&self) -> Result<()> {
        for &x in &Self::probe_grid() {
            let (_, _, fxx) = self.f_d2(x)?;
            if fxx > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "production must be concave: f''({x}) = {fxx}"
                )));
            }
        }
        for &u in &Self::probe_grid() {
            let (_, d1, d2) = self.f0_d2(u)?;
            if d1 >= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "disutility must be strictly decreasing: f0'({u}) = {d1}"
                )));
            }
            if d2 <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "disutility must be strictly convex: f0''({u}) = {d2}"
                )));
            }
        }
        // f(0) <= 0, evaluated directly or in the limit when 0 is outside
        // the expression domain.
        let f_at_zero = self
            .f_value(0.0)
            .or_else(|_| self.f_value(1e-12))
            .unwrap_or(f64::NEG_INFINITY);
        if f_at_zero > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "production must satisfy f(0) <= 0, got {f_at_zero}"
            )));
        }
        Ok(())
    }

    /// Strict concavity of production on the probe grid, demanded by the
    /// saddle construction.
    pub fn validate_strict_concavity(&self) -> Result<()> {
        for &x in &Self::probe_grid() {
            let (_, _, fxx) = self.f_d2(x)?;
            if fxx > -1e-12 {
                return Err(Error::InvalidInput(format!(
                    "production is not strictly concave at x = {x}: f'' = {fxx}"
                )));
            }
        }
        Ok(())
    }

    pub fn f_value(&self, x: f64) -> Result<f64> {
        with_scratch(|ws| self.f_prog.eval_value(&[0.0, x], &mut ws.eval))
    }

    pub fn f_d2(&self, x: f64) -> Result<(f64, f64, f64)> {
        eval_d2(&self.f_prog, &[0.0, x], Var::X(0))
    }

    pub fn f0_value(&self, u: f64) -> Result<f64> {
        with_scratch(|ws| self.f0_prog.eval_value(&[0.0, u], &mut ws.eval))
    }

    pub fn f0_d2(&self, u: f64) -> Result<(f64, f64, f64)> {
        eval_d2(&self.f0_prog, &[0.0, u], Var::U(0))
    }

    /// The induced control system: `dy = f(y) - u`, `f0 = e^{-rho t} f0(u)`,
    /// `U = [0, inf)`, fixed initial state, asymptotic set `[x*, inf)`.
    pub fn system(&self) -> Result<ControlSystem> {
        let rho = self.rho;

        let f_prog = self.f_prog.clone();
        let f = move |_t: f64, x: &[f64], u: &[f64], out: &mut [f64]| -> Result<()> {
            if x[0] < STATE_GUARD {
                return Err(Error::Domain(format!(
                    "capital stock fell below the positivity guard: y = {}",
                    x[0]
                )));
            }
            let fx = with_scratch(|ws| f_prog.eval_value(&[0.0, x[0]], &mut ws.eval))?;
            out[0] = fx - u[0];
            Ok(())
        };

        let f0_prog = self.f0_prog.clone();
        let f0 = move |t: f64, _x: &[f64], u: &[f64]| -> Result<f64> {
            if u[0] < CONTROL_GUARD {
                return Err(Error::Domain(format!(
                    "control fell below the positivity guard: u = {}",
                    u[0]
                )));
            }
            let v = with_scratch(|ws| f0_prog.eval_value(&[0.0, u[0]], &mut ws.eval))?;
            Ok((-rho * t).exp() * v)
        };

        let f_prog_jac = self.f_prog.clone();
        let fx = move |_t: f64, x: &[f64], _u: &[f64], out: &mut [f64]| -> Result<()> {
            let mut grad = [0.0];
            with_scratch(|ws| {
                f_prog_jac.eval_grad(&[0.0, x[0]], &[Var::X(0)], &mut grad, &mut ws.eval)
            })?;
            out[0] = grad[0];
            Ok(())
        };

        let f0x = move |_t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]| -> Result<()> {
            out[0] = 0.0;
            Ok(())
        };

        Ok(ControlSystem::builder(1, 1, f, f0)
            .fx(fx)
            .f0x(f0x)
            .control_set(ControlSet::Box {
                lower: vec![0.0],
                upper: vec![f64::INFINITY],
            })
            .c0(crate::convex::ConstraintSet::point(&[self.x_star]))
            .c_as(crate::convex::ConstraintSet::half_lines(&[self.x_star]))
            .build())
    }
}

/// Bracketed, safeguarded Newton iteration for a monotone function.
fn newton_bracketed(
    mut g: impl FnMut(f64) -> Result<(f64, f64)>, // (g, g')
    mut lo: f64,
    mut hi: f64,
    mut glo: f64,
) -> Result<f64> {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (gx, dgx) = g(x)?;
        if gx.abs() < 1e-14 || (hi - lo) < 1e-15 * x.abs().max(1.0) {
            return Ok(x);
        }
        if (gx > 0.0) == (glo > 0.0) {
            lo = x;
            glo = gx;
        } else {
            hi = x;
        }
        let newton = x - gx / dgx;
        x = if dgx != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(x)
}

/// The stationary point of the reduced system: `x0` solves `f'(x0) = rho`
/// (by bracketed Newton with geometric bracket expansion) and `u0 = f(x0)`.
pub fn ramsey_stationary(model: &RamseyModel) -> Result<(f64, f64)> {
    let g = |x: f64| -> Result<(f64, f64)> {
        let (_, d1, d2) = model.f_d2(x)?;
        Ok((d1 - model.rho, d2))
    };
    // f' is nonincreasing, so g changes sign from + to - when a root
    // exists. Expand geometrically from x*.
    let seed = if model.x_star > 0.0 {
        model.x_star
    } else {
        1.0
    };
    let mut lo = seed;
    let mut doublings = 0;
    while g(lo)?.0 <= 0.0 {
        lo /= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::NoBracket(format!(
                "f'(x) - rho has no sign change below x = {seed}"
            )));
        }
    }
    let mut hi = seed.max(lo * 2.0);
    doublings = 0;
    while g(hi)?.0 >= 0.0 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::NoBracket(format!(
                "f'(x) - rho has no sign change above x = {seed}"
            )));
        }
    }
    let glo = g(lo)?.0;
    let x0 = newton_bracketed(g, lo, hi, glo)?;
    let u0 = model.f_value(x0)?;
    if u0 < -1e-12 {
        return Err(Error::NegativeStationaryControl(u0));
    }
    Ok((x0, u0))
}

/// The maximizing control level for a co-state price `p > 0`: the unique
/// root of `f0'(u) = -p`.
pub fn ramsey_eta(model: &RamseyModel, p: f64) -> Result<f64> {
    if p <= 0.0 {
        return Err(Error::Domain(format!(
            "eta needs a positive price, got {p}"
        )));
    }
    // h(u) = f0'(u) + p is strictly increasing (f0'' > 0).
    let h = |u: f64| -> Result<(f64, f64)> {
        let (_, d1, d2) = model.f0_d2(u)?;
        Ok((d1 + p, d2))
    };
    let mut lo = 1.0;
    let mut doublings = 0;
    while h(lo)?.0 >= 0.0 {
        lo /= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::NoBracket(
                "f0'(u) + p has no sign change below".into(),
            ));
        }
    }
    let mut hi = lo.max(1.0);
    doublings = 0;
    while h(hi)?.0 <= 0.0 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::NoBracket(
                "f0'(u) + p has no sign change above".into(),
            ));
        }
    }
    let hlo = h(lo)?.0;
    newton_bracketed(h, lo, hi, hlo)
}

/// The reduced phase-plane field:
/// `dy = f(y) - u`, `du = (rho - f'(y)) f0'(u) / f0''(u)`.
pub fn ramsey_reduced_field(model: &RamseyModel, y: f64, u: f64) -> Result<(f64, f64)> {
    if y < STATE_GUARD {
        return Err(Error::Domain(format!("reduced field needs y > 0, got {y}")));
    }
    if u < CONTROL_GUARD {
        return Err(Error::Domain(format!("reduced field needs u > 0, got {u}")));
    }
    let (fy, fpy, _) = model.f_d2(y)?;
    let (_, d1, d2) = model.f0_d2(u)?;
    Ok((fy - u, (model.rho - fpy) * d1 / d2))
}

/// Candidate optimal process: the stable-manifold path of the reduced
/// system from `x*` to the saddle `(x0, u0)`, with the co-state
/// `psi(t) = -f0'(u(t)) e^{-rho t}`, `lambda = 1`.
///
/// The path is produced by a backward shoot from a seed displaced by
/// `1e-6` along the stable eigenvector, bisected in shoot time so the
/// trajectory lands on `x*` within `tol`. Beyond the seed time the path
/// continues with the linearized decay onto the saddle.
pub fn ramsey_saddle_path(
    model: &RamseyModel,
    horizon: f64,
    tol: f64,
) -> Result<(Process, CostateArc)> {
    if horizon <= 0.0 {
        return Err(Error::InvalidInput("horizon must be positive".into()));
    }
    let (x0, u0) = ramsey_stationary(model)?;

    if (model.x_star - x0).abs() <= 1e-12 * x0.abs().max(1.0) {
        return stationary_process(model, x0, u0, horizon);
    }

    // Jacobian of the reduced field at the saddle, assembled from dual
    // derivatives. The (2,2) entry carries the factor rho - f'(x0) which
    // vanishes at the stationary point.
    let (_, fp, fpp) = model.f_d2(x0)?;
    let (_, d1, d2) = model.f0_d2(u0)?;
    let q = d1 / d2;
    let qprime = {
        let h = 1e-6 * u0.abs().max(1.0);
        let (_, a1, a2) = model.f0_d2(u0 + h)?;
        let (_, b1, b2) = model.f0_d2(u0 - h)?;
        (a1 / a2 - b1 / b2) / (2.0 * h)
    };
    let j11 = fp;
    let j12 = -1.0;
    let j21 = -fpp * q;
    let j22 = (model.rho - fp) * qprime;

    let tr = j11 + j22;
    let det = j11 * j22 - j12 * j21;
    let disc = tr * tr - 4.0 * det;
    if disc <= 0.0 {
        return err_not_a_saddle(tr, disc);
    }
    let sq = disc.sqrt();
    let (lam_plus, lam_minus) = (0.5 * (tr + sq), 0.5 * (tr - sq));
    if det >= 0.0 || lam_minus >= 0.0 {
        return Err(Error::NotASaddle(lam_plus, lam_minus));
    }

    // Stable eigenvector from the first Jacobian row.
    let mut v = [1.0, j11 - lam_minus];
    let vn = (v[0] * v[0] + v[1] * v[1]).sqrt();
    v[0] /= vn;
    v[1] /= vn;

    let eps = 1e-6;
    let back_rhs = |_s: f64, z: &[f64], dz: &mut [f64]| -> Result<()> {
        let (dy, du) = ramsey_reduced_field(model, z[0], z[1])?;
        dz[0] = -dy;
        dz[1] = -du;
        Ok(())
    };

    let opts = OdeOptions {
        tol: Tol::new(1e-12, 1e-12),
        h_max: 0.25,
        ..OdeOptions::default()
    };

    // Try both eigenvector signs; keep the one whose backward flow moves
    // the capital stock toward x*.
    let mut seed: Option<[f64; 2]> = None;
    for sign in [1.0, -1.0] {
        let z0 = [x0 + sign * eps * v[0], u0 + sign * eps * v[1]];
        if let Ok(probe) = dopri5(back_rhs, 0.0, 2.0, &z0, &[], &opts) {
            let y_end = probe.y(probe.len() - 1)[0];
            if (y_end - model.x_star).abs() < (z0[0] - model.x_star).abs() {
                seed = Some(z0);
                break;
            }
        }
    }
    let seed = seed.ok_or(Error::NoCrossing(model.x_star))?;

    // Backward shoot in chunks until the capital stock brackets x*.
    let chunk = 20.0;
    let max_time = 60.0 / lam_minus.abs() + 200.0;
    let mut s_done = 0.0;
    let mut z = seed.to_vec();
    let mut s_cross = None;
    'shoot: while s_done < max_time {
        let seg = dopri5(back_rhs, s_done, s_done + chunk, &z, &[], &opts)?;
        for i in 1..seg.len() {
            let before = seg.y(i - 1)[0] - model.x_star;
            let after = seg.y(i)[0] - model.x_star;
            if before.abs() <= tol {
                s_cross = Some(seg.ts[i - 1]);
                break 'shoot;
            }
            if (before > 0.0) != (after > 0.0) || after.abs() <= tol {
                // Bisect the crossing time inside this step.
                let (mut a, mut b) = (seg.ts[i - 1], seg.ts[i]);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    let ym = seg.eval_vec(mid)?[0] - model.x_star;
                    if ym.abs() <= tol {
                        a = mid;
                        break;
                    }
                    if (ym > 0.0) == (before > 0.0) {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                s_cross = Some(a);
                break 'shoot;
            }
        }
        z = seg.y(seg.len() - 1).to_vec();
        s_done = seg.t_end();
    }
    let s_cross = s_cross.ok_or(Error::NoCrossing(model.x_star))?;

    // One clean backward pass over [0, s_cross] with the forward cost
    // accumulated in reverse:
    // v(s) = integral over [s_cross - s, s_cross] of e^{-rho tau} f0(u).
    let rho = model.rho;
    let aug_rhs = |s: f64, z: &[f64], dz: &mut [f64]| -> Result<()> {
        let (dy, du) = ramsey_reduced_field(model, z[0], z[1])?;
        dz[0] = -dy;
        dz[1] = -du;
        let f0u = model.f0_value(z[1])?;
        dz[2] = (-rho * (s_cross - s)).exp() * f0u;
        Ok(())
    };
    let mut z0 = seed.to_vec();
    z0.push(0.0);
    let back = dopri5(aug_rhs, 0.0, s_cross, &z0, &[], &opts)?;
    let v_total = back.y(back.len() - 1)[2];

    // Reverse into forward time.
    let n_a = back.len();
    let mut ts = Vec::with_capacity(n_a + 64);
    let mut ys = Vec::with_capacity(n_a + 64);
    let mut us = Vec::with_capacity(n_a + 64);
    let mut ws_cost = Vec::with_capacity(n_a + 64);
    for i in (0..n_a).rev() {
        let s = back.ts[i];
        let node = back.y(i);
        ts.push(s_cross - s);
        ys.push(node[0]);
        us.push(node[1]);
        ws_cost.push(v_total - node[2]);
    }

    // Linearized tail beyond the seed time.
    if horizon > s_cross {
        let dsd = [seed[0] - x0, seed[1] - u0];
        let step = 0.05;
        let mut t = s_cross;
        let mut tail_ts = Vec::new();
        loop {
            t = (t + step).min(horizon);
            let decay = (lam_minus * (t - s_cross)).exp();
            ts.push(t);
            ys.push(x0 + dsd[0] * decay);
            us.push(u0 + dsd[1] * decay);
            tail_ts.push(t);
            if t >= horizon {
                break;
            }
        }
        // Cost over the tail by cumulative Simpson quadrature of
        // e^{-rho t} f0(u(t)), with midpoints from the linearized decay.
        let base = ts.len() - tail_ts.len();
        let g_at = |t: f64, u: f64| -> Result<f64> { Ok((-rho * t).exp() * model.f0_value(u)?) };
        let mut g_prev = g_at(s_cross, us[base - 1])?;
        let mut w = *ws_cost.last().unwrap();
        for j in 0..tail_ts.len() {
            let t_prev = if j == 0 { s_cross } else { tail_ts[j - 1] };
            let g_here = g_at(tail_ts[j], us[base + j])?;
            let tm = 0.5 * (t_prev + tail_ts[j]);
            let um = u0 + dsd[1] * (lam_minus * (tm - s_cross)).exp();
            let gm = g_at(tm, um)?;
            let h = tail_ts[j] - t_prev;
            w += h / 6.0 * (g_prev + 4.0 * gm + g_here);
            ws_cost.push(w);
            g_prev = g_here;
        }
    }

    // Node derivatives and the co-state.
    let n = ts.len();
    let mut states = Vec::with_capacity(n);
    let mut derivs = Vec::with_capacity(n);
    let mut psis = Vec::with_capacity(n);
    let mut dpsis = Vec::with_capacity(n);
    let mut u_derivs = Vec::with_capacity(n);
    for i in 0..n {
        let (dy, du) = ramsey_reduced_field(model, ys[i], us[i])?;
        let (_, d1, d2) = model.f0_d2(us[i])?;
        let e = (-rho * ts[i]).exp();
        let f0u = model.f0_value(us[i])?;
        states.push(vec![ys[i]]);
        derivs.push(vec![dy, e * f0u]);
        psis.push(vec![-d1 * e]);
        dpsis.push(vec![e * (rho * d1 - d2 * du)]);
        u_derivs.push(du);
    }

    // Control signal: dense interpolation of the sampled control path.
    let u_path = Arc::new(RawPath {
        dim: 1,
        ts: ts.clone(),
        ys: us.clone(),
        dys: u_derivs,
        cont: Vec::new(),
    });
    let span = (ts[0], *ts.last().unwrap());
    let control = ControlSignal::analytic(1, move |t, out| {
        let tc = t.clamp(span.0, span.1);
        let mut buf = [0.0];
        u_path
            .eval(tc, &mut buf)
            .expect("clamped time lies inside the control span");
        out[0] = buf[0];
    });

    let process = Process::from_nodes(ts.clone(), states, ws_cost, derivs, control)?;
    let arc = CostateArc::from_nodes(ts, psis, dpsis, Multiplier::Normal)?;
    Ok((process, arc))
}

fn err_not_a_saddle(tr: f64, disc: f64) -> Result<(Process, CostateArc)> {
    // Complex pair: report the real part twice.
    let re = 0.5 * tr;
    let _ = disc;
    Err(Error::NotASaddle(re, re))
}

/// Degenerate case `x* = x0`: the constant stationary process.
fn stationary_process(
    model: &RamseyModel,
    x0: f64,
    u0: f64,
    horizon: f64,
) -> Result<(Process, CostateArc)> {
    let rho = model.rho;
    let f0u = model.f0_value(u0)?;
    let (_, d1, _) = model.f0_d2(u0)?;
    let n = ((horizon / 0.05).ceil() as usize).max(2) + 1;
    let mut ts = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    let mut costs = Vec::with_capacity(n);
    let mut derivs = Vec::with_capacity(n);
    let mut psis = Vec::with_capacity(n);
    let mut dpsis = Vec::with_capacity(n);
    for i in 0..n {
        let t = (i as f64 * 0.05).min(horizon);
        let e = (-rho * t).exp();
        ts.push(t);
        states.push(vec![x0]);
        costs.push(if rho == 0.0 {
            f0u * t
        } else {
            f0u * (1.0 - e) / rho
        });
        derivs.push(vec![0.0, e * f0u]);
        psis.push(vec![-d1 * e]);
        dpsis.push(vec![rho * d1 * e]);
    }
    let control = ControlSignal::constant(vec![u0]);
    let process = Process::from_nodes(ts.clone(), states, costs, derivs, control)?;
    let arc = CostateArc::from_nodes(ts, psis, dpsis, Multiplier::Normal)?;
    Ok((process, arc))
}
