//! Control systems, control signals, and trajectory integration.
//!
//! A [`ControlSystem`] holds the dynamics `f`, running cost integrand `f0`,
//! their state Jacobians (explicit or finite-difference fallback), the
//! initial cost `l`, and the constraint descriptors. [`integrate_process`]
//! produces a [`Process`]: the trajectory together with the accumulated
//! running cost
//! `w(t) = J(x0, t0, u; t) = integral of f0 along the trajectory`.

mod solver;

pub use solver::{dopri5, rk4, OdeOptions, RawPath, Tol};

use crate::convex::ConstraintSet;
use crate::linalg;
use crate::{Error, Result};
use std::io::Write as IoWrite;
use std::sync::Arc;

/// A strictly increasing finite grid of times starting at `t0 >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidInput(
                "time grid needs at least two nodes".into(),
            ));
        }
        if !nodes.iter().all(|t| t.is_finite()) {
            return Err(Error::NonFinite {
                context: "time grid",
                t: f64::NAN,
            });
        }
        if nodes[0] < 0.0 {
            return Err(Error::InvalidInput("time grid starts before 0".into()));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "time grid must be strictly increasing".into(),
            ));
        }
        Ok(TimeGrid { nodes })
    }

    pub fn uniform(t0: f64, t1: f64, n: usize) -> Result<Self> {
        if n < 2 || t1 <= t0 {
            return Err(Error::InvalidInput("bad uniform grid".into()));
        }
        let nodes = (0..n)
            .map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64)
            .collect();
        TimeGrid::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t_start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn contains(&self, t: f64) -> bool {
        let pad = 1e-12 * (1.0 + self.t_end().abs());
        t >= self.t_start() - pad && t <= self.t_end() + pad
    }
}

/// An admissible control representative: an analytic map `t -> u` or a
/// piecewise-constant, right-continuous grid signal (one value per grid
/// interval).
/// Shared analytic control evaluator.
pub type ControlFn = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub enum ControlSignal {
    Analytic {
        k: usize,
        f: ControlFn,
    },
    Grid {
        grid: TimeGrid,
        values: Vec<Vec<f64>>,
    },
}

impl std::fmt::Debug for ControlSignal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ControlSignal::Analytic { k, .. } => write!(f, "ControlSignal::Analytic(k={k})"),
            ControlSignal::Grid { grid, values } => write!(
                f,
                "ControlSignal::Grid({} intervals, k={})",
                values.len(),
                grid.len() - 1
            ),
        }
    }
}

impl ControlSignal {
    pub fn analytic<F>(k: usize, f: F) -> Self
    where
        F: Fn(f64, &mut [f64]) + Send + Sync + 'static,
    {
        ControlSignal::Analytic { k, f: Arc::new(f) }
    }

    pub fn constant(values: Vec<f64>) -> Self {
        let k = values.len();
        ControlSignal::analytic(k, move |_t, out| out.copy_from_slice(&values))
    }

    pub fn grid(grid: TimeGrid, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != grid.len() - 1 {
            return Err(Error::InvalidInput(format!(
                "grid control needs one value per interval: {} intervals, {} values",
                grid.len() - 1,
                values.len()
            )));
        }
        let k = values.first().map(|v| v.len()).unwrap_or(0);
        if values.iter().any(|v| v.len() != k) {
            return Err(Error::InvalidInput(
                "grid control values must share one dimension".into(),
            ));
        }
        Ok(ControlSignal::Grid { grid, values })
    }

    pub fn dim(&self) -> usize {
        match self {
            ControlSignal::Analytic { k, .. } => *k,
            ControlSignal::Grid { values, .. } => values.first().map(|v| v.len()).unwrap_or(0),
        }
    }

    pub fn eval(&self, t: f64, out: &mut [f64]) {
        match self {
            ControlSignal::Analytic { f, .. } => f(t, out),
            ControlSignal::Grid { grid, values } => {
                let nodes = grid.nodes();
                let idx = nodes.partition_point(|&s| s <= t);
                let idx = idx.clamp(1, values.len()) - 1;
                out.copy_from_slice(&values[idx]);
            }
        }
    }

    pub fn eval_vec(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval(t, &mut out);
        out
    }

    /// Discontinuity times that integration steps must not straddle.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            ControlSignal::Analytic { .. } => Vec::new(),
            ControlSignal::Grid { grid, .. } => grid.nodes().to_vec(),
        }
    }

    /// Evaluator frozen to the control interval containing `(a, b)`. Grid
    /// signals become the constant of that interval (looked up at the
    /// midpoint, so segment direction does not matter); analytic signals
    /// evaluate live.
    fn segment_eval(&self, a: f64, b: f64) -> SegmentControl<'_> {
        match self {
            ControlSignal::Analytic { f, .. } => SegmentControl::Live(f.as_ref()),
            ControlSignal::Grid { .. } => SegmentControl::Frozen(self.eval_vec(0.5 * (a + b))),
        }
    }
}

enum SegmentControl<'a> {
    Live(&'a (dyn Fn(f64, &mut [f64]) + Send + Sync)),
    Frozen(Vec<f64>),
}

impl SegmentControl<'_> {
    fn eval(&self, t: f64, out: &mut [f64]) {
        match self {
            SegmentControl::Live(f) => f(t, out),
            SegmentControl::Frozen(v) => out.copy_from_slice(v),
        }
    }
}

/// Numerical scheme selector for control-aware integration.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Scheme {
    DormandPrince,
    Rk4 { n_steps: usize },
}

/// Integrate `dy/dt = rhs(t, y, u(t))` splitting the span at control
/// discontinuities, so every stage of every step sees the control value of
/// its own interval. `smooth_breakpoints` are additional times the steps
/// must not straddle (interpolation seams), without freezing semantics.
#[allow(clippy::too_many_arguments)]
pub(crate) fn integrate_along_control<F>(
    mut rhs: F,
    control: &ControlSignal,
    t0: f64,
    t1: f64,
    y0: &[f64],
    smooth_breakpoints: &[f64],
    opts: &OdeOptions,
    scheme: Scheme,
) -> Result<RawPath>
where
    F: FnMut(f64, &[f64], &[f64], &mut [f64]) -> Result<()>,
{
    let posneg = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    let k = control.dim();

    // Control discontinuities inside the span, ordered along the direction
    // of travel, closed by t1.
    let mut cuts: Vec<f64> = control
        .breakpoints()
        .into_iter()
        .filter(|&b| (b - t0) * posneg > 1e-12 * span && (t1 - b) * posneg > 1e-12 * span)
        .collect();
    cuts.sort_by(|a, b| (a * posneg).partial_cmp(&(b * posneg)).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * span);
    cuts.push(t1);

    let mut u_buf = vec![0.0; k];
    let mut path: Option<RawPath> = None;
    let mut a = t0;
    let mut y_seam = y0.to_vec();

    for &b in &cuts {
        let useg = control.segment_eval(a, b);
        let seg_rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
            useg.eval(t, &mut u_buf);
            rhs(t, y, &u_buf, dy)
        };
        let seg = match scheme {
            Scheme::DormandPrince => dopri5(seg_rhs, a, b, &y_seam, smooth_breakpoints, opts)?,
            Scheme::Rk4 { n_steps } => {
                let seg_steps = (((b - a).abs() / span) * n_steps as f64).ceil().max(1.0) as usize;
                rk4(seg_rhs, a, b, &y_seam, smooth_breakpoints, seg_steps)?
            }
        };
        y_seam = seg.y(seg.len() - 1).to_vec();
        match &mut path {
            None => path = Some(seg),
            Some(p) => p.append(seg)?,
        }
        a = b;
    }
    Ok(path.expect("at least one segment"))
}

/// The admissible control-parameter set `U`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlSet {
    WholeSpace { dim: usize },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    FiniteGrid { points: Vec<Vec<f64>> },
}

impl ControlSet {
    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        match self {
            ControlSet::WholeSpace { .. } => true,
            ControlSet::Box { lower, upper } => u
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(&v, (&lo, &hi))| v >= lo - tol && v <= hi + tol),
            ControlSet::FiniteGrid { points } => points
                .iter()
                .any(|p| linalg::norm2(&linalg::sub(u, p)) <= tol),
        }
    }
}

type DynamicsFn = dyn Fn(f64, &[f64], &[f64], &mut [f64]) -> Result<()> + Send + Sync;
type IntegrandFn = dyn Fn(f64, &[f64], &[f64]) -> Result<f64> + Send + Sync;
type JacobianFn = dyn Fn(f64, &[f64], &[f64], &mut [f64]) -> Result<()> + Send + Sync;
type ScalarFieldFn = dyn Fn(&[f64]) -> Result<f64> + Send + Sync;
type GradientFn = dyn Fn(&[f64], &mut [f64]) -> Result<()> + Send + Sync;

/// A control system: dynamics, integrand, state Jacobians, initial cost,
/// and constraint descriptors. All evaluations are pure; the system is
/// safe to share across threads.
pub struct ControlSystem {
    m: usize,
    k: usize,
    f: Box<DynamicsFn>,
    f0: Box<IntegrandFn>,
    fx: Option<Box<JacobianFn>>,
    f0x: Option<Box<JacobianFn>>,
    l: Box<ScalarFieldFn>,
    grad_l: Box<GradientFn>,
    pub control_set: ControlSet,
    pub c0: ConstraintSet,
    pub c_as: ConstraintSet,
}

impl std::fmt::Debug for ControlSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "ControlSystem(m={}, k={}, analytic fx: {}, analytic f0x: {})",
            self.m,
            self.k,
            self.fx.is_some(),
            self.f0x.is_some()
        )
    }
}

pub struct ControlSystemBuilder {
    system: ControlSystem,
}

impl ControlSystem {
    pub fn builder<F, G>(m: usize, k: usize, f: F, f0: G) -> ControlSystemBuilder
    where
        F: Fn(f64, &[f64], &[f64], &mut [f64]) -> Result<()> + Send + Sync + 'static,
        G: Fn(f64, &[f64], &[f64]) -> Result<f64> + Send + Sync + 'static,
    {
        assert!(
            m >= 1 && k >= 1,
            "state and control dimensions must be >= 1"
        );
        ControlSystemBuilder {
            system: ControlSystem {
                m,
                k,
                f: Box::new(f),
                f0: Box::new(f0),
                fx: None,
                f0x: None,
                l: Box::new(|_x| Ok(0.0)),
                grad_l: Box::new(|x, out| {
                    let _ = x;
                    out.fill(0.0);
                    Ok(())
                }),
                control_set: ControlSet::WholeSpace { dim: k },
                c0: ConstraintSet::whole_space(m),
                c_as: ConstraintSet::whole_space(m),
            },
        }
    }

    pub fn state_dim(&self) -> usize {
        self.m
    }

    pub fn control_dim(&self) -> usize {
        self.k
    }

    pub fn eval_f(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        (self.f)(t, x, u, out)
    }

    pub fn eval_f0(&self, t: f64, x: &[f64], u: &[f64]) -> Result<f64> {
        (self.f0)(t, x, u)
    }

    pub fn eval_l(&self, x: &[f64]) -> Result<f64> {
        (self.l)(x)
    }

    pub fn eval_grad_l(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (self.grad_l)(x, out)
    }

    /// State Jacobian of `f` (row-major `m x m`), explicit or central
    /// finite differences with step `max(1e-6, 1e-8 ||x||)`.
    pub fn eval_fx(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        if let Some(fx) = &self.fx {
            return fx(t, x, u, out);
        }
        let m = self.m;
        let h = fd_step(x);
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; m];
        let mut fm = vec![0.0; m];
        for j in 0..m {
            xp[j] = x[j] + h;
            (self.f)(t, &xp, u, &mut fp)?;
            xp[j] = x[j] - h;
            (self.f)(t, &xp, u, &mut fm)?;
            xp[j] = x[j];
            for i in 0..m {
                out[i * m + j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        Ok(())
    }

    /// State gradient row of `f0` (`1 x m`), explicit or central finite
    /// differences.
    pub fn eval_f0x(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        if let Some(f0x) = &self.f0x {
            return f0x(t, x, u, out);
        }
        let h = fd_step(x);
        let mut xp = x.to_vec();
        for j in 0..self.m {
            xp[j] = x[j] + h;
            let fp = (self.f0)(t, &xp, u)?;
            xp[j] = x[j] - h;
            let fm = (self.f0)(t, &xp, u)?;
            xp[j] = x[j];
            out[j] = (fp - fm) / (2.0 * h);
        }
        Ok(())
    }

    /// Cross-checks explicit Jacobians against central finite differences
    /// on the given probe points.
    pub fn check_jacobians(
        &self,
        probes: &[(f64, Vec<f64>, Vec<f64>)],
        rel_tol: f64,
    ) -> Result<()> {
        let m = self.m;
        let mut jac = vec![0.0; m * m];
        let mut row = vec![0.0; m];
        for (t, x, u) in probes {
            if let Some(fx) = &self.fx {
                fx(*t, x, u, &mut jac)?;
                let mut fd = vec![0.0; m * m];
                fd_jacobian(&*self.f, *t, x, u, m, &mut fd)?;
                for (a, b) in jac.iter().zip(&fd) {
                    if (a - b).abs() > rel_tol * (1.0 + a.abs().max(b.abs())) {
                        return Err(Error::InvalidInput(format!(
                            "fx disagrees with finite differences at t = {t}: {a} vs {b}"
                        )));
                    }
                }
            }
            if let Some(f0x) = &self.f0x {
                f0x(*t, x, u, &mut row)?;
                let h = fd_step(x);
                let mut xp = x.clone();
                for j in 0..m {
                    xp[j] = x[j] + h;
                    let fp = (self.f0)(*t, &xp, u)?;
                    xp[j] = x[j] - h;
                    let fm = (self.f0)(*t, &xp, u)?;
                    xp[j] = x[j];
                    let fd = (fp - fm) / (2.0 * h);
                    if (row[j] - fd).abs() > rel_tol * (1.0 + row[j].abs().max(fd.abs())) {
                        return Err(Error::InvalidInput(format!(
                            "f0x disagrees with finite differences at t = {t}: {} vs {fd}",
                            row[j]
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn fd_step(x: &[f64]) -> f64 {
    (1e-8 * linalg::norm2(x)).max(1e-6)
}

fn fd_jacobian(
    f: &DynamicsFn,
    t: f64,
    x: &[f64],
    u: &[f64],
    m: usize,
    out: &mut [f64],
) -> Result<()> {
    let h = fd_step(x);
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; m];
    let mut fm = vec![0.0; m];
    for j in 0..m {
        xp[j] = x[j] + h;
        f(t, &xp, u, &mut fp)?;
        xp[j] = x[j] - h;
        f(t, &xp, u, &mut fm)?;
        xp[j] = x[j];
        for i in 0..m {
            out[i * m + j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(())
}

impl ControlSystemBuilder {
    pub fn fx<F>(mut self, fx: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64], &mut [f64]) -> Result<()> + Send + Sync + 'static,
    {
        self.system.fx = Some(Box::new(fx));
        self
    }

    pub fn f0x<F>(mut self, f0x: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64], &mut [f64]) -> Result<()> + Send + Sync + 'static,
    {
        self.system.f0x = Some(Box::new(f0x));
        self
    }

    pub fn initial_cost<L, G>(mut self, l: L, grad_l: G) -> Self
    where
        L: Fn(&[f64]) -> Result<f64> + Send + Sync + 'static,
        G: Fn(&[f64], &mut [f64]) -> Result<()> + Send + Sync + 'static,
    {
        self.system.l = Box::new(l);
        self.system.grad_l = Box::new(grad_l);
        self
    }

    pub fn control_set(mut self, set: ControlSet) -> Self {
        self.system.control_set = set;
        self
    }

    pub fn c0(mut self, set: ConstraintSet) -> Self {
        self.system.c0 = set;
        self
    }

    pub fn c_as(mut self, set: ConstraintSet) -> Self {
        self.system.c_as = set;
        self
    }

    pub fn build(self) -> ControlSystem {
        self.system
    }
}

/// A trajectory with its generating control and running-cost path.
/// `cost_path(t) = J(x0, t0, u; t)` starts at zero; node derivatives are
/// stored for cubic Hermite dense output.
#[derive(Debug, Clone)]
pub struct Process {
    grid: TimeGrid,
    /// Joint path over (state, cost): dimension m + 1.
    path: RawPath,
    control: ControlSignal,
    m: usize,
}

impl Process {
    pub fn from_raw(path: RawPath, control: ControlSignal) -> Result<Self> {
        let m = path.dim - 1;
        let grid = TimeGrid::new(path.ts.clone())?;
        Ok(Process {
            grid,
            path,
            control,
            m,
        })
    }

    /// Build a process from explicit nodes (analytic constructions):
    /// states, running costs, and `d(state, cost)/dt` per node. Dense
    /// evaluation uses cubic Hermite interpolation over these nodes.
    pub fn from_nodes(
        ts: Vec<f64>,
        states: Vec<Vec<f64>>,
        costs: Vec<f64>,
        derivs: Vec<Vec<f64>>,
        control: ControlSignal,
    ) -> Result<Self> {
        let n = ts.len();
        if states.len() != n || costs.len() != n || derivs.len() != n {
            return Err(Error::GridMismatch(
                "states, costs, and derivatives must match the node count".into(),
            ));
        }
        let m = states.first().map(|s| s.len()).unwrap_or(0);
        let dim = m + 1;
        let mut ys = Vec::with_capacity(n * dim);
        let mut dys = Vec::with_capacity(n * dim);
        for i in 0..n {
            if states[i].len() != m || derivs[i].len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: derivs[i].len(),
                });
            }
            ys.extend_from_slice(&states[i]);
            ys.push(costs[i]);
            dys.extend_from_slice(&derivs[i]);
        }
        let path = RawPath {
            dim,
            ts,
            ys,
            dys,
            cont: Vec::new(),
        };
        Process::from_raw(path, control)
    }

    pub fn state_dim(&self) -> usize {
        self.m
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn control(&self) -> &ControlSignal {
        &self.control
    }

    pub fn t_start(&self) -> f64 {
        self.grid.t_start()
    }

    pub fn t_end(&self) -> f64 {
        self.grid.t_end()
    }

    /// State at a node.
    pub fn state_node(&self, i: usize) -> &[f64] {
        &self.path.y(i)[..self.m]
    }

    /// Running cost at a node.
    pub fn cost_node(&self, i: usize) -> f64 {
        self.path.y(i)[self.m]
    }

    /// d(state, cost)/dt at a node.
    pub fn deriv_node(&self, i: usize) -> &[f64] {
        self.path.dy(i)
    }

    pub fn initial_state(&self) -> &[f64] {
        self.state_node(0)
    }

    /// Interpolated state at `t`.
    pub fn state_at(&self, t: f64) -> Result<Vec<f64>> {
        let mut buf = vec![0.0; self.m + 1];
        self.path.eval(t, &mut buf)?;
        buf.truncate(self.m);
        Ok(buf)
    }

    /// Interpolated state written into `out` (length m + 1 scratch).
    pub(crate) fn state_into(&self, t: f64, buf: &mut [f64]) -> Result<()> {
        self.path.eval(t, buf)
    }

    /// Interpolated running cost `J(x0, t0, u; t)`.
    pub fn cost_at(&self, t: f64) -> Result<f64> {
        let mut buf = vec![0.0; self.m + 1];
        self.path.eval(t, &mut buf)?;
        Ok(buf[self.m])
    }

    pub fn control_at(&self, t: f64) -> Vec<f64> {
        self.control.eval_vec(t)
    }

    /// A short digest of the trajectory identity, for reproducibility
    /// records.
    pub fn digest(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        let mut mix = |v: f64| {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        mix(self.t_start());
        mix(self.t_end());
        for v in self.state_node(0) {
            mix(*v);
        }
        let last = self.grid.len() - 1;
        for v in self.state_node(last) {
            mix(*v);
        }
        mix(self.cost_node(last));
        h
    }

    /// CSV with columns `t, y_1..y_m, w`.
    pub fn write_csv<W: IoWrite>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for j in 1..=self.m {
            write!(w, ",y_{j}")?;
        }
        writeln!(w, ",w")?;
        for i in 0..self.grid.len() {
            write!(w, "{:.16e}", self.grid.nodes()[i])?;
            for v in self.state_node(i) {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w, ",{:.16e}", self.cost_node(i))?;
        }
        Ok(())
    }
}

/// Integrate the state equation and the running cost from `(t0, x0)` under
/// the control `u`, with the default adaptive scheme.
pub fn integrate_process(
    system: &ControlSystem,
    x0: &[f64],
    t0: f64,
    u: &ControlSignal,
    t_end: f64,
    tol: Tol,
) -> Result<Process> {
    integrate_process_with(system, x0, t0, u, t_end, &OdeOptions::with_tol(tol))
}

/// As [`integrate_process`] with explicit solver options.
pub fn integrate_process_with(
    system: &ControlSystem,
    x0: &[f64],
    t0: f64,
    u: &ControlSignal,
    t_end: f64,
    opts: &OdeOptions,
) -> Result<Process> {
    if t_end <= t0 {
        return Err(Error::InvalidInput(
            "t_end must exceed t0 for process integration".into(),
        ));
    }
    check_dims(system, x0, u)?;
    let m = system.state_dim();

    let mut y0 = x0.to_vec();
    y0.push(0.0); // cost starts at zero

    let rhs = |t: f64, z: &[f64], uv: &[f64], dz: &mut [f64]| -> Result<()> {
        let (x, _) = z.split_at(m);
        let (dx, dw) = dz.split_at_mut(m);
        system.eval_f(t, x, uv, dx)?;
        dw[0] = system.eval_f0(t, x, uv)?;
        Ok(())
    };

    let path = integrate_along_control(rhs, u, t0, t_end, &y0, &[], opts, Scheme::DormandPrince)?;
    let process = Process::from_raw(path, u.clone())?;
    check_control_admissible(system, &process)?;
    Ok(process)
}

/// Fixed-step RK4 variant for reproducibility runs.
pub fn integrate_process_rk4(
    system: &ControlSystem,
    x0: &[f64],
    t0: f64,
    u: &ControlSignal,
    t_end: f64,
    n_steps: usize,
) -> Result<Process> {
    if t_end <= t0 {
        return Err(Error::InvalidInput(
            "t_end must exceed t0 for process integration".into(),
        ));
    }
    check_dims(system, x0, u)?;
    let m = system.state_dim();
    let mut y0 = x0.to_vec();
    y0.push(0.0);
    let rhs = |t: f64, z: &[f64], uv: &[f64], dz: &mut [f64]| -> Result<()> {
        let (x, _) = z.split_at(m);
        let (dx, dw) = dz.split_at_mut(m);
        system.eval_f(t, x, uv, dx)?;
        dw[0] = system.eval_f0(t, x, uv)?;
        Ok(())
    };
    let path = integrate_along_control(
        rhs,
        u,
        t0,
        t_end,
        &y0,
        &[],
        &OdeOptions::default(),
        Scheme::Rk4 { n_steps },
    )?;
    let process = Process::from_raw(path, u.clone())?;
    check_control_admissible(system, &process)?;
    Ok(process)
}

fn check_dims(system: &ControlSystem, x0: &[f64], u: &ControlSignal) -> Result<()> {
    if x0.len() != system.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: system.state_dim(),
            got: x0.len(),
        });
    }
    if u.dim() != system.control_dim() {
        return Err(Error::DimensionMismatch {
            expected: system.control_dim(),
            got: u.dim(),
        });
    }
    Ok(())
}

/// Control values must stay inside the declared control set; checked at the
/// accepted nodes.
fn check_control_admissible(system: &ControlSystem, process: &Process) -> Result<()> {
    if matches!(system.control_set, ControlSet::WholeSpace { .. }) {
        return Ok(());
    }
    let mut u_buf = vec![0.0; system.control_dim()];
    for &t in process.grid().nodes() {
        process.control.eval(t, &mut u_buf);
        if !system.control_set.contains(&u_buf, 1e-9) {
            return Err(Error::InvalidInput(format!(
                "control value at t = {t} lies outside the control set"
            )));
        }
    }
    Ok(())
}

/// Interpolated running cost `J(x0, t0, u; theta)`.
pub fn eval_cost(process: &Process, theta: f64) -> Result<f64> {
    process.cost_at(theta)
}

/// The Hamiltonian `psi . f(t, x, u) - lambda f0(t, x, u)` with a row
/// co-vector `psi`.
pub fn hamiltonian(
    system: &ControlSystem,
    x: &[f64],
    psi: &[f64],
    u: &[f64],
    lambda: f64,
    t: f64,
) -> Result<f64> {
    let mut fx = vec![0.0; system.state_dim()];
    system.eval_f(t, x, u, &mut fx)?;
    let f0 = system.eval_f0(t, x, u)?;
    let h = linalg::dot(psi, &fx) - lambda * f0;
    if !h.is_finite() {
        return Err(Error::NonFinite {
            context: "hamiltonian",
            t,
        });
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_system(m: usize) -> ControlSystem {
        ControlSystem::builder(
            m,
            1,
            |_t, _x, _u, out| {
                out.fill(0.0);
                Ok(())
            },
            |_t, _x, _u| Ok(0.0),
        )
        .build()
    }

    #[test]
    fn zero_dynamics_stay_put() {
        let sys = zero_system(2);
        let u = ControlSignal::constant(vec![0.0]);
        let p = integrate_process(&sys, &[0.3, -0.7], 0.0, &u, 5.0, Tol::default()).unwrap();
        for i in 0..p.grid().len() {
            assert_eq!(p.state_node(i), &[0.3, -0.7]);
            assert_eq!(p.cost_node(i), 0.0);
        }
        assert_eq!(eval_cost(&p, 2.317).unwrap(), 0.0);
    }

    #[test]
    fn scalar_exponential_reaches_e() {
        let sys = ControlSystem::builder(
            1,
            1,
            |_t, x, _u, out| {
                out[0] = x[0];
                Ok(())
            },
            |_t, _x, _u| Ok(0.0),
        )
        .build();
        let u = ControlSignal::constant(vec![0.0]);
        let p = integrate_process(&sys, &[1.0], 0.0, &u, 1.0, Tol::new(1e-12, 1e-12)).unwrap();
        let y1 = p.state_at(1.0).unwrap()[0];
        assert!((y1 - std::f64::consts::E).abs() < 1e-9);
    }

    #[test]
    fn cost_accumulates_integrand() {
        // f0 = t => w(t) = t^2/2.
        let sys = ControlSystem::builder(
            1,
            1,
            |_t, _x, _u, out| {
                out[0] = 0.0;
                Ok(())
            },
            |t, _x, _u| Ok(t),
        )
        .build();
        let u = ControlSignal::constant(vec![0.0]);
        let p = integrate_process(&sys, &[0.0], 0.0, &u, 4.0, Tol::default()).unwrap();
        assert_eq!(p.cost_node(0), 0.0);
        for theta in [0.5, 1.0, 3.3, 4.0] {
            let w = eval_cost(&p, theta).unwrap();
            assert!((w - theta * theta / 2.0).abs() < 1e-9, "theta = {theta}");
        }
        assert!(matches!(eval_cost(&p, 4.5), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn grid_control_is_right_continuous_piecewise_constant() {
        let grid = TimeGrid::new(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let u = ControlSignal::grid(grid, vec![vec![1.0], vec![-2.0], vec![0.5]]).unwrap();
        assert_eq!(u.eval_vec(0.0), vec![1.0]);
        assert_eq!(u.eval_vec(0.999), vec![1.0]);
        assert_eq!(u.eval_vec(1.0), vec![-2.0]);
        assert_eq!(u.eval_vec(2.5), vec![0.5]);
        assert_eq!(u.eval_vec(3.0), vec![0.5]);
    }

    #[test]
    fn grid_control_breakpoints_integrate_exactly() {
        // dy/dt = u with a piecewise constant u: the exact trajectory is
        // piecewise linear and the integrator must land on the kinks.
        let sys = ControlSystem::builder(
            1,
            1,
            |_t, _x, u, out| {
                out[0] = u[0];
                Ok(())
            },
            |_t, _x, _u| Ok(0.0),
        )
        .build();
        let grid = TimeGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        let u = ControlSignal::grid(grid, vec![vec![1.0], vec![-1.0]]).unwrap();
        let p = integrate_process(&sys, &[0.0], 0.0, &u, 2.0, Tol::default()).unwrap();
        assert!((p.state_at(1.0).unwrap()[0] - 1.0).abs() < 1e-12);
        assert!(p.state_at(2.0).unwrap()[0].abs() < 1e-12);
        assert!((p.state_at(0.5).unwrap()[0] - 0.5).abs() < 1e-12);
        assert!((p.state_at(1.5).unwrap()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hamiltonian_zero_cases() {
        let sys = zero_system(2);
        let h = hamiltonian(&sys, &[1.0, 2.0], &[0.0, 0.0], &[0.0], 0.0, 0.0).unwrap();
        assert_eq!(h, 0.0);
    }

    #[test]
    fn finite_difference_jacobian_fallback() {
        // f = (x2, -sin(x1)), fx = [[0, 1], [-cos(x1), 0]].
        let sys = ControlSystem::builder(
            2,
            1,
            |_t, x, _u, out| {
                out[0] = x[1];
                out[1] = -x[0].sin();
                Ok(())
            },
            |_t, x, _u| Ok(x[0] * x[0]),
        )
        .build();
        let mut jac = vec![0.0; 4];
        sys.eval_fx(0.0, &[0.4, -1.0], &[0.0], &mut jac).unwrap();
        assert!((jac[1] - 1.0).abs() < 1e-8);
        assert!((jac[2] + 0.4f64.cos()).abs() < 1e-8);
        let mut row = vec![0.0; 2];
        sys.eval_f0x(0.0, &[0.4, -1.0], &[0.0], &mut row).unwrap();
        assert!((row[0] - 0.8).abs() < 1e-8);
        assert!(row[1].abs() < 1e-8);
    }

    #[test]
    fn control_outside_box_rejected() {
        let sys = ControlSystem::builder(
            1,
            1,
            |_t, _x, u, out| {
                out[0] = u[0];
                Ok(())
            },
            |_t, _x, _u| Ok(0.0),
        )
        .control_set(ControlSet::Box {
            lower: vec![0.0],
            upper: vec![1.0],
        })
        .build();
        let u = ControlSignal::constant(vec![2.0]);
        assert!(integrate_process(&sys, &[0.0], 0.0, &u, 1.0, Tol::default()).is_err());
    }
}
