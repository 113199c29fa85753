//! Variational (transition-matrix) and adjoint systems along a process.
//!
//! For a stored trajectory, the transition matrix solves
//! `dA/dt = fx(t, y(t), u(t)) A` from the identity, and the accumulated
//! gradient row `g(t)` integrates `f0x(t, y(t), u(t)) A(t)`. The gradient of
//! the finite-horizon cost with respect to the initial state is `g(theta)`.
//! Co-state arcs solve `-dpsi/dt = psi fx - lambda f0x` and are tied to the
//! transition matrix by the Cauchy identity
//! `psi(theta) A(theta) - psi(t) A(t) = g(theta) - g(t)`.
//!
//! Row-vector convention throughout: `psi` and `f0x` are co-vectors.

use crate::linalg;
use crate::ode::{ControlSystem, OdeOptions, Process, RawPath, TimeGrid, Tol};
use crate::{Error, Result};
use std::io::Write as IoWrite;

/// The scalar multiplier of the maximum principle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Multiplier {
    /// `lambda = 0`, the abnormal case.
    Abnormal,
    /// `lambda = 1`.
    Normal,
}

impl Multiplier {
    pub fn value(self) -> f64 {
        match self {
            Multiplier::Abnormal => 0.0,
            Multiplier::Normal => 1.0,
        }
    }
}

/// Transition matrix `A(t)` and accumulated gradient row
/// `g(t) = integral of f0x . A` along a process, on the solver's grid.
#[derive(Debug, Clone)]
pub struct SensitivityPath {
    m: usize,
    /// Joint path over (vec(A) row-major, g): dimension m^2 + m.
    path: RawPath,
    grid: TimeGrid,
    /// Largest 1-norm condition estimate of `A` seen at the nodes, with the
    /// time where it occurred. Reported, never fatal: example-class systems
    /// keep `A = I`.
    pub max_condition: (f64, f64),
}

impl SensitivityPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn state_dim(&self) -> usize {
        self.m
    }

    pub fn t_start(&self) -> f64 {
        self.grid.t_start()
    }

    pub fn t_end(&self) -> f64 {
        self.grid.t_end()
    }

    /// `A(t)`, row-major.
    pub fn matrix_at(&self, t: f64) -> Result<Vec<f64>> {
        let mut buf = vec![0.0; self.path.dim];
        self.path.eval(t, &mut buf)?;
        buf.truncate(self.m * self.m);
        Ok(buf)
    }

    /// `g(t)`, the accumulated gradient row.
    pub fn gradient_at(&self, t: f64) -> Result<Vec<f64>> {
        let mut buf = vec![0.0; self.path.dim];
        self.path.eval(t, &mut buf)?;
        Ok(buf[self.m * self.m..].to_vec())
    }

    /// True when the condition estimate crossed `1e12` somewhere.
    pub fn is_ill_conditioned(&self) -> bool {
        self.max_condition.0 > 1e12
    }

    /// CSV with columns `t, a_11..a_mm (row-major), g_1..g_m`.
    pub fn write_csv<W: IoWrite>(&self, mut w: W) -> std::io::Result<()> {
        let m = self.m;
        write!(w, "t")?;
        for i in 1..=m {
            for j in 1..=m {
                write!(w, ",a_{i}{j}")?;
            }
        }
        for j in 1..=m {
            write!(w, ",g_{j}")?;
        }
        writeln!(w)?;
        for (i, &t) in self.grid.nodes().iter().enumerate() {
            write!(w, "{t:.16e}")?;
            for v in self.path.y(i) {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// A co-state path of row vectors with its multiplier. The underlying
/// nodes may run in either time direction (backward integrations keep
/// their native order); the grid always reports the increasing span.
#[derive(Debug, Clone)]
pub struct CostateArc {
    m: usize,
    path: RawPath,
    grid: TimeGrid,
    pub lambda: Multiplier,
}

impl CostateArc {
    /// Build an arc from explicit nodes and node derivatives (for analytic
    /// constructions). Nodes must be strictly increasing.
    pub fn from_nodes(
        ts: Vec<f64>,
        psis: Vec<Vec<f64>>,
        dpsis: Vec<Vec<f64>>,
        lambda: Multiplier,
    ) -> Result<Self> {
        let grid = TimeGrid::new(ts.clone())?;
        let m = psis.first().map(|p| p.len()).unwrap_or(0);
        if psis.len() != ts.len() || dpsis.len() != ts.len() {
            return Err(Error::GridMismatch(
                "co-state nodes and derivatives must match the grid".into(),
            ));
        }
        let mut ys = Vec::with_capacity(ts.len() * m);
        let mut dys = Vec::with_capacity(ts.len() * m);
        for (p, d) in psis.iter().zip(&dpsis) {
            if p.len() != m || d.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: p.len().min(d.len()),
                });
            }
            ys.extend_from_slice(p);
            dys.extend_from_slice(d);
        }
        Ok(CostateArc {
            m,
            path: RawPath {
                dim: m,
                ts,
                ys,
                dys,
                cont: Vec::new(),
            },
            grid,
            lambda,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn state_dim(&self) -> usize {
        self.m
    }

    pub fn t_start(&self) -> f64 {
        self.grid.t_start()
    }

    pub fn t_end(&self) -> f64 {
        self.grid.t_end()
    }

    /// `psi(t)` as a row vector.
    pub fn psi_at(&self, t: f64) -> Result<Vec<f64>> {
        self.path.eval_vec(t)
    }

    /// `psi` at the earliest time of the span.
    pub fn psi_start(&self) -> Vec<f64> {
        self.psi_at(self.grid.t_start())
            .expect("grid start lies inside the arc span")
    }

    /// `psi` at the latest time of the span.
    pub fn psi_end(&self) -> Vec<f64> {
        self.psi_at(self.grid.t_end())
            .expect("grid end lies inside the arc span")
    }

    /// `(psi(t), lambda) != 0` — the nontriviality required of arcs offered
    /// as maximum-principle solutions.
    pub fn is_nontrivial(&self, tol: f64) -> bool {
        if self.lambda == Multiplier::Normal {
            return true;
        }
        (0..self.path.len()).any(|i| linalg::norm2(self.path.y(i)) > tol)
    }
}

fn require_span(process: &Process, theta: f64) -> Result<()> {
    if !process.grid().contains(theta) {
        return Err(Error::OutOfRange {
            t: theta,
            lo: process.t_start(),
            hi: process.t_end(),
        });
    }
    Ok(())
}

/// Integrate `dA/dt = fx . A` (from the identity) and `dg/dt = f0x . A`
/// (from zero) along the stored process up to `theta`. The trajectory is
/// re-interpolated from the process, never re-integrated, so downstream
/// quantities all refer to one realization.
pub fn transition_matrix(
    system: &ControlSystem,
    process: &Process,
    theta: f64,
    tol: Tol,
) -> Result<SensitivityPath> {
    require_span(process, theta)?;
    let m = system.state_dim();
    let t0 = process.t_start();
    if theta <= t0 {
        return Err(Error::InvalidInput(
            "transition matrix needs theta beyond the process start".into(),
        ));
    }

    let mut z0 = linalg::identity(m);
    z0.resize(m * m + m, 0.0);

    let mut x_buf = vec![0.0; m + 1];
    let mut fx = vec![0.0; m * m];
    let mut f0x = vec![0.0; m];
    let rhs = |t: f64, z: &[f64], uv: &[f64], dz: &mut [f64]| -> Result<()> {
        process.state_into(t, &mut x_buf)?;
        let x = &x_buf[..m];
        system.eval_fx(t, x, uv, &mut fx)?;
        system.eval_f0x(t, x, uv, &mut f0x)?;
        let a = &z[..m * m];
        // dA = fx . A
        for i in 0..m {
            for j in 0..m {
                let mut s = 0.0;
                for l in 0..m {
                    s += fx[i * m + l] * a[l * m + j];
                }
                dz[i * m + j] = s;
            }
        }
        // dg = f0x . A
        for j in 0..m {
            let mut s = 0.0;
            for l in 0..m {
                s += f0x[l] * a[l * m + j];
            }
            dz[m * m + j] = s;
        }
        Ok(())
    };

    // The state interpolant is piecewise polynomial between process nodes;
    // make those nodes breakpoints so each step sees a smooth right-hand
    // side.
    let opts = OdeOptions::with_tol(tol);
    let path = crate::ode::integrate_along_control(
        rhs,
        process.control(),
        t0,
        theta,
        &z0,
        process.grid().nodes(),
        &opts,
        crate::ode::Scheme::DormandPrince,
    )?;

    // Condition monitoring at the accepted nodes.
    let mut max_cond = (1.0, t0);
    for i in 0..path.len() {
        let a = &path.y(i)[..m * m];
        let cond = match linalg::invert(a, m) {
            Some(inv) => linalg::norm1_mat(a, m) * linalg::norm1_mat(&inv, m),
            None => f64::INFINITY,
        };
        if cond > max_cond.0 {
            max_cond = (cond, path.ts[i]);
        }
    }

    let grid = TimeGrid::new(path.ts.clone())?;
    Ok(SensitivityPath {
        m,
        path,
        grid,
        max_condition: max_cond,
    })
}

/// Gradient of the finite-horizon cost with respect to the initial state:
/// `dJ/dx(x0; theta) = g(theta)`.
pub fn cost_gradient(system: &ControlSystem, process: &Process, theta: f64) -> Result<Vec<f64>> {
    cost_gradient_with(system, process, theta, Tol::default())
}

pub fn cost_gradient_with(
    system: &ControlSystem,
    process: &Process,
    theta: f64,
    tol: Tol,
) -> Result<Vec<f64>> {
    let sens = transition_matrix(system, process, theta, tol)?;
    sens.gradient_at(theta)
}

/// Integrate the adjoint equation `-dpsi/dt = psi fx - lambda f0x` forward
/// from `psi(t0) = psi0` along the process.
pub fn integrate_adjoint(
    system: &ControlSystem,
    process: &Process,
    psi0: &[f64],
    lambda: Multiplier,
) -> Result<CostateArc> {
    adjoint_between(
        system,
        process,
        psi0,
        process.t_start(),
        process.t_end(),
        lambda,
        Tol::default(),
    )
}

/// Integrate the adjoint equation backward from `psi(theta) = psi_theta`
/// down to the process start.
pub fn costate_from_terminal(
    system: &ControlSystem,
    process: &Process,
    psi_theta: &[f64],
    theta: f64,
    lambda: Multiplier,
) -> Result<CostateArc> {
    require_span(process, theta)?;
    adjoint_between(
        system,
        process,
        psi_theta,
        theta,
        process.t_start(),
        lambda,
        Tol::default(),
    )
}

/// Adjoint integration between two times of the process span, in either
/// direction; the resulting arc is stored in increasing time.
pub fn adjoint_between(
    system: &ControlSystem,
    process: &Process,
    psi_init: &[f64],
    t_from: f64,
    t_to: f64,
    lambda: Multiplier,
    tol: Tol,
) -> Result<CostateArc> {
    require_span(process, t_from)?;
    require_span(process, t_to)?;
    let m = system.state_dim();
    if psi_init.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: psi_init.len(),
        });
    }
    let lam = lambda.value();

    let mut x_buf = vec![0.0; m + 1];
    let mut fx = vec![0.0; m * m];
    let mut f0x = vec![0.0; m];
    let rhs = |t: f64, psi: &[f64], uv: &[f64], dpsi: &mut [f64]| -> Result<()> {
        process.state_into(t, &mut x_buf)?;
        let x = &x_buf[..m];
        system.eval_fx(t, x, uv, &mut fx)?;
        system.eval_f0x(t, x, uv, &mut f0x)?;
        // -dpsi = psi fx - lambda f0x  (psi is a row vector)
        for j in 0..m {
            let mut s = 0.0;
            for i in 0..m {
                s += psi[i] * fx[i * m + j];
            }
            dpsi[j] = -s + lam * f0x[j];
        }
        Ok(())
    };

    let opts = OdeOptions::with_tol(tol);
    let path = crate::ode::integrate_along_control(
        rhs,
        process.control(),
        t_from,
        t_to,
        psi_init,
        process.grid().nodes(),
        &opts,
        crate::ode::Scheme::DormandPrince,
    )?;
    // Backward runs keep their native (decreasing) node order; the dense
    // interpolant handles either direction. The grid reports the sorted span.
    let mut ts = path.ts.clone();
    if t_to < t_from {
        ts.reverse();
    }
    let grid = TimeGrid::new(ts)?;
    Ok(CostateArc {
        m,
        path,
        grid,
        lambda,
    })
}

/// Residual of the Cauchy identity
/// `|| psi(theta) A(theta) - psi(t) A(t) - (g(theta) - g(t)) ||`
/// tying an adjoint arc (with `lambda = 1`) to the sensitivity path.
pub fn cauchy_residual(
    arc: &CostateArc,
    sens: &SensitivityPath,
    t: f64,
    theta: f64,
) -> Result<f64> {
    if arc.lambda != Multiplier::Normal {
        return Err(Error::InvalidInput(
            "the Cauchy identity requires lambda = 1".into(),
        ));
    }
    if t > theta {
        return Err(Error::GridMismatch(format!(
            "t = {t} exceeds theta = {theta}"
        )));
    }
    for (label, grid) in [("arc", arc.grid()), ("sensitivity", sens.grid())] {
        if !grid.contains(t) || !grid.contains(theta) {
            return Err(Error::GridMismatch(format!(
                "[{t}, {theta}] not inside the {label} span [{}, {}]",
                grid.t_start(),
                grid.t_end()
            )));
        }
    }
    let m = sens.state_dim();
    let a_t = sens.matrix_at(t)?;
    let a_th = sens.matrix_at(theta)?;
    let g_t = sens.gradient_at(t)?;
    let g_th = sens.gradient_at(theta)?;
    let psi_t = arc.psi_at(t)?;
    let psi_th = arc.psi_at(theta)?;
    let lhs = linalg::sub(
        &linalg::row_mat(&psi_th, &a_th, m),
        &linalg::row_mat(&psi_t, &a_t, m),
    );
    let rhs = linalg::sub(&g_th, &g_t);
    Ok(linalg::norm2(&linalg::sub(&lhs, &rhs)))
}
