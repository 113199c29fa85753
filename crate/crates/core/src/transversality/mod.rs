//! Boundary and necessary-condition checks for co-state arcs: the co-state
//! limit of cost-gradient integrals, the limiting-gradient membership test
//! at infinity, its sequence-wise strengthening, the pointwise Hamiltonian
//! maximum condition, the finite-horizon co-vector variant, the
//! transversality condition at time zero, and overtaking tail comparisons.

mod sampling;

pub use sampling::{
    akk_check, wakk_samples, GradientSample, GradientSampleSet, LevelRecord, SampleFilter,
    SequenceCheck,
};

use crate::convex::{
    cone_plus_hull_membership, normal_cone, ConeDescriptor, MembershipCertificate, PointCloud,
};
use crate::linalg;
use crate::ode::{hamiltonian, ControlSystem, Process, Tol};
use crate::variational::{transition_matrix, CostateArc, Multiplier, SensitivityPath};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Horizon levels and perturbation radii for approximating the limit sets.
///
/// Level `n` pairs the horizon window `(theta_{n-1}, theta_n]` with the
/// shrinking perturbation radius `kappa_n`; `lambda` fixes the multiplier
/// limit and `ode_tol` is the integration tolerance of the sampling
/// trajectories (membership tolerances dominate sampling error by orders
/// of magnitude).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitSchedule {
    pub thetas: Vec<f64>,
    pub radii: Vec<f64>,
    pub samples_per_level: usize,
    pub lambda: Multiplier,
    pub ode_tol: Tol,
}

impl LimitSchedule {
    pub fn new(
        thetas: Vec<f64>,
        radii: Vec<f64>,
        samples_per_level: usize,
        lambda: Multiplier,
    ) -> Result<Self> {
        if thetas.len() < 2 || thetas.len() != radii.len() {
            return Err(Error::InvalidInput(
                "schedule needs matching horizon and radius sequences (>= 2 levels)".into(),
            ));
        }
        if thetas.windows(2).any(|w| w[1] <= w[0]) || thetas[0] <= 0.0 {
            return Err(Error::InvalidInput(
                "schedule horizons must be positive and strictly increasing".into(),
            ));
        }
        if *thetas.last().unwrap() < 10.0 * thetas[0] {
            return Err(Error::InvalidInput(
                "schedule horizons must stretch by at least a factor of 10".into(),
            ));
        }
        if radii.windows(2).any(|w| w[1] >= w[0]) || *radii.last().unwrap() <= 0.0 {
            return Err(Error::InvalidInput(
                "schedule radii must be positive and strictly decreasing".into(),
            ));
        }
        if samples_per_level == 0 {
            return Err(Error::InvalidInput(
                "samples_per_level must be positive".into(),
            ));
        }
        Ok(LimitSchedule {
            thetas,
            radii,
            samples_per_level,
            lambda,
            ode_tol: Tol::new(1e-6, 1e-6),
        })
    }

    /// Geometric horizons from `2 pi` to `40 pi` over 12 levels, radii
    /// `0.5 * 0.6^n`, 64 samples per level, normal multiplier.
    pub fn default_schedule() -> Self {
        Self::geometric(
            2.0 * std::f64::consts::PI,
            40.0 * std::f64::consts::PI,
            12,
            64,
            Multiplier::Normal,
        )
        .expect("default schedule is valid")
    }

    /// Geometric horizon levels with the standard radius decay.
    pub fn geometric(
        theta_min: f64,
        theta_max: f64,
        levels: usize,
        samples_per_level: usize,
        lambda: Multiplier,
    ) -> Result<Self> {
        if levels < 2 {
            return Err(Error::InvalidInput("need at least 2 levels".into()));
        }
        let ratio = theta_max / theta_min;
        let thetas = (0..levels)
            .map(|i| theta_min * ratio.powf(i as f64 / (levels - 1) as f64))
            .collect();
        let radii = (1..=levels).map(|n| 0.5 * 0.6f64.powi(n as i32)).collect();
        Self::new(thetas, radii, samples_per_level, lambda)
    }

    pub fn levels(&self) -> usize {
        self.thetas.len()
    }

    pub fn theta_max(&self) -> f64 {
        *self.thetas.last().unwrap()
    }

    /// The multiplier value `lambda_n` at a level: frozen at 1 for the
    /// normal limit, coupled to the shrinking radius for the abnormal
    /// (vanishing) limit.
    pub fn lambda_at(&self, level: usize) -> f64 {
        match self.lambda {
            Multiplier::Normal => 1.0,
            Multiplier::Abnormal => self.radii[level],
        }
    }

    /// Horizon window sampled at a level: `(theta_{n-1}, theta_n]`, with
    /// the first level reaching halfway down.
    pub fn theta_window(&self, level: usize) -> (f64, f64) {
        let hi = self.thetas[level];
        let lo = if level == 0 {
            0.5 * hi
        } else {
            self.thetas[level - 1]
        };
        (lo, hi)
    }
}

/// Outcome of the co-state limit computation.
#[derive(Debug, Clone, Serialize)]
pub enum AkStatus {
    /// The tail of partial gradient integrals settled within `tol`;
    /// the candidate initial co-state is `-value`.
    Converged { value: Vec<f64>, residual: f64 },
    /// The tail stays bounded but keeps moving (no limit along this
    /// horizon schedule).
    Oscillating { tail: Vec<(f64, Vec<f64>)> },
    /// Tail norms grow monotonically across the window.
    Diverging { tail_norms: Vec<f64> },
}

#[derive(Debug, Clone, Serialize)]
pub struct AkResult {
    pub status: AkStatus,
    /// The partial integrals `integral of f0_x A over [0, theta_n]` at
    /// every scheduled horizon.
    pub partials: Vec<(f64, Vec<f64>)>,
}

impl AkResult {
    pub fn converged_value(&self) -> Option<&[f64]> {
        match &self.status {
            AkStatus::Converged { value, .. } => Some(value),
            _ => None,
        }
    }
}

/// The limit of `dJ/dx(y(0); theta)` over growing horizons, evaluated at
/// the scheduled horizons: converged when the last `window` partials agree
/// within `tol`.
pub fn ak_limit(
    system: &ControlSystem,
    process: &Process,
    schedule: &LimitSchedule,
    window: usize,
    tol: f64,
) -> Result<AkResult> {
    if window < 2 {
        return Err(Error::InvalidInput(
            "convergence window needs >= 2 entries".into(),
        ));
    }
    let theta_max = schedule.theta_max();
    if !process.grid().contains(theta_max) {
        return Err(Error::OutOfRange {
            t: theta_max,
            lo: process.t_start(),
            hi: process.t_end(),
        });
    }
    let sens = transition_matrix(system, process, theta_max, Tol::default())?;
    let mut partials = Vec::with_capacity(schedule.levels());
    for &theta in &schedule.thetas {
        partials.push((theta, sens.gradient_at(theta)?));
    }

    let w = window.min(partials.len());
    let tail = &partials[partials.len() - w..];
    let mut diameter: f64 = 0.0;
    for i in 0..tail.len() {
        for j in i + 1..tail.len() {
            diameter = diameter.max(linalg::norm2(&linalg::sub(&tail[i].1, &tail[j].1)));
        }
    }
    let status = if diameter < tol {
        AkStatus::Converged {
            value: tail.last().unwrap().1.clone(),
            residual: diameter,
        }
    } else {
        let norms: Vec<f64> = tail.iter().map(|(_, g)| linalg::norm2(g)).collect();
        let monotone = norms.windows(2).all(|w| w[1] > w[0]);
        if monotone && norms.last().unwrap() >= &(2.0 * norms[0].max(tol)) {
            AkStatus::Diverging { tail_norms: norms }
        } else {
            AkStatus::Oscillating {
                tail: tail.to_vec(),
            }
        }
    };
    Ok(AkResult { status, partials })
}

/// `|| psi(theta) A(theta) ||` — the residual whose decay along a horizon
/// schedule witnesses the product form of the co-state limit.
pub fn psi_a_residual(arc: &CostateArc, sens: &SensitivityPath, theta: f64) -> Result<f64> {
    for (label, contains) in [
        ("co-state arc", arc.grid().contains(theta)),
        ("sensitivity path", sens.grid().contains(theta)),
    ] {
        if !contains {
            return Err(Error::GridMismatch(format!(
                "theta = {theta} outside the {label} span"
            )));
        }
    }
    let m = sens.state_dim();
    let psi = arc.psi_at(theta)?;
    let a = sens.matrix_at(theta)?;
    Ok(linalg::norm2(&linalg::row_mat(&psi, &a, m)))
}

/// Membership test `-psi(0) in cone + co(sampled limiting gradients)`,
/// pooling the two deepest schedule levels into the hull.
pub fn wakk_check(
    psi0: &[f64],
    lambda: Multiplier,
    samples: &GradientSampleSet,
    cone: &ConeDescriptor,
    tol: f64,
) -> Result<(bool, MembershipCertificate)> {
    if samples.lambda != lambda {
        return Err(Error::InvalidInput(
            "sample set was drawn at a different multiplier limit".into(),
        ));
    }
    let cloud = samples.pooled_cloud(2)?;
    let p: Vec<f64> = psi0.iter().map(|v| -v).collect();
    cone_plus_hull_membership(&p, cone, &cloud, tol)
}

/// Report of the pointwise Hamiltonian maximum check over probe times and
/// a finite control grid.
#[derive(Debug, Clone, Serialize)]
pub struct MaxHReport {
    /// Largest surplus of a grid control over the process control;
    /// nonnegative by construction, near zero when the process control
    /// maximizes the Hamiltonian on the grid.
    pub max_residual: f64,
    pub argmax_time: f64,
    /// The grid control achieving the surplus, when it beats the process
    /// control.
    pub violating_u: Option<Vec<f64>>,
    /// True for the vacuous abnormal case `lambda = 0`, `psi = 0`.
    pub degenerate: bool,
}

/// `max over probes of [max over the control grid of H] - H(at the process
/// control)`. Ties keep the lowest grid index.
pub fn maxh_residual(
    system: &ControlSystem,
    process: &Process,
    arc: &CostateArc,
    t_probes: &[f64],
    u_grid: &[Vec<f64>],
) -> Result<MaxHReport> {
    if t_probes.is_empty() {
        return Err(Error::EmptyGrid("no probe times"));
    }
    require_grid_admissible(system, u_grid)?;
    let lambda = arc.lambda.value();
    let mut report = MaxHReport {
        max_residual: 0.0,
        argmax_time: t_probes[0],
        violating_u: None,
        degenerate: false,
    };
    let mut psi_sup: f64 = 0.0;
    for &t in t_probes {
        let y = process.state_at(t)?;
        let psi = arc.psi_at(t)?;
        psi_sup = psi_sup.max(linalg::norm2(&psi));
        let u_hat = process.control_at(t);
        let h_hat = hamiltonian(system, &y, &psi, &u_hat, lambda, t)?;
        let mut best = h_hat;
        let mut best_u: Option<&Vec<f64>> = None;
        for u in u_grid {
            let h = hamiltonian(system, &y, &psi, u, lambda, t)?;
            if h > best {
                best = h;
                best_u = Some(u);
            }
        }
        let residual = best - h_hat;
        if residual > report.max_residual {
            report.max_residual = residual;
            report.argmax_time = t;
            report.violating_u = best_u.cloned();
        }
    }
    report.degenerate = lambda == 0.0 && psi_sup < 1e-12;
    Ok(report)
}

/// The probe grid must stay inside the declared control set.
fn require_grid_admissible(system: &ControlSystem, u_grid: &[Vec<f64>]) -> Result<()> {
    if u_grid.is_empty() {
        return Err(Error::EmptyGrid("no control grid"));
    }
    for u in u_grid {
        if !system.control_set.contains(u, 1e-9) {
            return Err(Error::InvalidInput(format!(
                "probe control {u:?} lies outside the control set"
            )));
        }
    }
    Ok(())
}

/// Uniform lattice over a control box, for Hamiltonian probes when the
/// control set is unbounded.
pub fn control_grid(lower: &[f64], upper: &[f64], per_axis: usize) -> Result<Vec<Vec<f64>>> {
    if lower.len() != upper.len() || lower.is_empty() {
        return Err(Error::InvalidInput(
            "control window dimensions disagree".into(),
        ));
    }
    if per_axis < 2 {
        return Err(Error::InvalidInput(
            "need at least 2 points per axis".into(),
        ));
    }
    let k = lower.len();
    let mut grid = Vec::with_capacity(per_axis.pow(k as u32));
    let mut idx = vec![0usize; k];
    loop {
        let point: Vec<f64> = (0..k)
            .map(|j| lower[j] + (upper[j] - lower[j]) * idx[j] as f64 / (per_axis - 1) as f64)
            .collect();
        grid.push(point);
        let mut j = 0;
        loop {
            idx[j] += 1;
            if idx[j] < per_axis {
                break;
            }
            idx[j] = 0;
            j += 1;
            if j == k {
                return Ok(grid);
            }
        }
    }
}

/// Tail Hamiltonian comparison with the finite-horizon co-vector
/// `-dJ/dx(y(t), t, u_hat; theta)`: returns the minimum over probe times
/// and grid controls of the tail-minimal Hamiltonian difference
/// `H(at u_hat) - H(at u)`. The condition holds when the result stays
/// above the caller's `-tol`.
pub fn anton_residual(
    system: &ControlSystem,
    process: &Process,
    theta_tail: &[f64],
    u_grid: &[Vec<f64>],
    t_probes: &[f64],
) -> Result<f64> {
    if theta_tail.is_empty() || t_probes.is_empty() {
        return Err(Error::EmptyGrid("horizon tail or probe times"));
    }
    require_grid_admissible(system, u_grid)?;
    let m = system.state_dim();
    let theta_max = theta_tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sens = transition_matrix(system, process, theta_max, Tol::default())?;

    let mut worst = f64::INFINITY;
    for &t in t_probes {
        let y = process.state_at(t)?;
        let u_hat = process.control_at(t);
        let a_t = sens.matrix_at(t)?;
        let g_t = sens.gradient_at(t)?;
        for &theta in theta_tail {
            if theta < t {
                return Err(Error::GridMismatch(format!(
                    "tail horizon {theta} precedes probe time {t}"
                )));
            }
            let g_th = sens.gradient_at(theta)?;
            let diff = linalg::sub(&g_th, &g_t);
            // Row solve: (g(theta) - g(t)) A(t)^{-1} is dJ/dx at (y(t), t).
            let grad_t = linalg::solve_row(&a_t, &diff, m).ok_or(Error::NonFinite {
                context: "singular transition matrix in co-vector solve",
                t,
            })?;
            let psi_theta_t: Vec<f64> = grad_t.iter().map(|v| -v).collect();
            let h_hat = hamiltonian(system, &y, &psi_theta_t, &u_hat, 1.0, t)?;
            for u in u_grid {
                let h = hamiltonian(system, &y, &psi_theta_t, u, 1.0, t)?;
                worst = worst.min(h_hat - h);
            }
        }
    }
    Ok(worst)
}

/// Transversality at time zero:
/// `psi(0) - lambda grad l(x0)` must lie in the normal cone of the initial
/// set at `x0`, within `tol`.
pub fn transversality_zero_check(
    psi0: &[f64],
    lambda: Multiplier,
    system: &ControlSystem,
    x0: &[f64],
    tol: f64,
) -> Result<bool> {
    let mut grad_l = vec![0.0; x0.len()];
    system.eval_grad_l(x0, &mut grad_l)?;
    let v: Vec<f64> = psi0
        .iter()
        .zip(&grad_l)
        .map(|(p, g)| p - lambda.value() * g)
        .collect();
    let cone = normal_cone(&system.c0, x0, 1e-9)?;
    Ok(cone.distance(&v) <= tol)
}

/// Tail comparison of two processes:
/// `v(theta) = l(y_b(0)) - l(y_a(0)) + J_b(theta) - J_a(theta)` over the
/// last half of `theta_grid`; a positive tail minimum is numeric evidence
/// that `a` overtakes `b`.
pub fn overtaking_compare(
    system: &ControlSystem,
    process_a: &Process,
    process_b: &Process,
    theta_grid: &[f64],
) -> Result<(f64, f64)> {
    if theta_grid.is_empty() {
        return Err(Error::EmptyGrid("no comparison horizons"));
    }
    if (process_a.t_start() - process_b.t_start()).abs() > 1e-12 {
        return Err(Error::GridMismatch(
            "processes must share the initial time".into(),
        ));
    }
    let theta_max = theta_grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for (label, p) in [("a", process_a), ("b", process_b)] {
        if !p.grid().contains(theta_max) {
            return Err(Error::GridMismatch(format!(
                "process {label} does not cover theta = {theta_max}"
            )));
        }
    }
    let l_a = system.eval_l(process_a.initial_state())?;
    let l_b = system.eval_l(process_b.initial_state())?;
    let tail_start = theta_grid.len() - theta_grid.len().div_ceil(2);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &theta in &theta_grid[tail_start..] {
        let v = l_b - l_a + process_b.cost_at(theta)? - process_a.cost_at(theta)?;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}

/// Pools the deepest-level sample gradients into a point cloud; used by the
/// membership checks and exposed for reporting.
pub(crate) fn gradients_cloud(
    dim: usize,
    levels: &[LevelRecord],
    deepest: usize,
) -> Result<PointCloud> {
    let take = deepest.min(levels.len());
    let mut points = Vec::new();
    for level in &levels[levels.len() - take..] {
        for s in &level.samples {
            points.push(s.gradient.clone());
        }
    }
    if points.is_empty() {
        return Err(Error::InvalidInput(
            "no accepted samples in the deepest schedule levels".into(),
        ));
    }
    PointCloud::new(dim, points)
}
