//! Sampling of limiting cost gradients around the reference initial state.
//!
//! Each schedule level draws perturbed initial states inside a shrinking
//! ball (intersected with the asymptotic constraint set), pairs them with
//! horizons from the level window, integrates them under the reference
//! control, filters by state distance and cost gap, and stores the scaled
//! cost gradients. Samples are indexed deterministically by
//! `(level, sample)` regardless of thread scheduling.

use super::{gradients_cloud, LimitSchedule};
use crate::convex::{ConeDescriptor, PointCloud};
use crate::linalg;
use crate::ode::{integrate_process, ControlSystem, Process};
use crate::variational::{cost_gradient_with, Multiplier};
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Acceptance filter of one schedule level: both the state perturbation
/// and the cost gap must stay inside the level radius.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SampleFilter {
    pub radius: f64,
}

impl SampleFilter {
    pub fn accepts(&self, state_distance: f64, cost_gap: f64) -> bool {
        state_distance < self.radius && cost_gap < self.radius
    }
}

/// One accepted sample: the perturbed initial state, its horizon, the
/// scaled gradient, and the filter quantities it passed with.
#[derive(Debug, Clone, Serialize)]
pub struct GradientSample {
    pub x: Vec<f64>,
    pub theta: f64,
    /// `lambda_n * dJ/dx(x; theta)`.
    pub gradient: Vec<f64>,
    pub state_distance: f64,
    pub cost_gap: f64,
}

/// All samples of one schedule level, with the rejection bookkeeping.
#[derive(Debug, Clone, Serialize)]
pub struct LevelRecord {
    pub level: usize,
    pub theta_level: f64,
    pub radius: f64,
    pub lambda_n: f64,
    pub attempted: usize,
    pub rejected_filter: usize,
    pub rejected_numeric: usize,
    pub samples: Vec<GradientSample>,
}

/// Sampled limiting-gradient data for one reference process.
#[derive(Debug, Clone, Serialize)]
pub struct GradientSampleSet {
    pub levels: Vec<LevelRecord>,
    pub lambda: Multiplier,
    pub seed: u64,
    /// Digest of the reference process identity, for reproducibility.
    pub reference_digest: String,
    dim: usize,
}

impl GradientSampleSet {
    /// Levels where no sample passed the filters (reported, not fatal).
    pub fn empty_levels(&self) -> Vec<usize> {
        self.levels
            .iter()
            .filter(|l| l.samples.is_empty())
            .map(|l| l.level)
            .collect()
    }

    pub fn total_accepted(&self) -> usize {
        self.levels.iter().map(|l| l.samples.len()).sum()
    }

    /// Gradients of the `deepest` last levels pooled into one cloud.
    pub fn pooled_cloud(&self, deepest: usize) -> Result<PointCloud> {
        gradients_cloud(self.dim, &self.levels, deepest)
    }
}

/// Uniform draw from the ball of radius `r` around `center`, by a
/// Box-Muller direction and a radial power map.
fn sample_ball(rng: &mut ChaCha8Rng, center: &[f64], r: f64) -> Vec<f64> {
    let m = center.len();
    let mut dir = vec![0.0; m];
    let mut norm_sq = 0.0;
    let mut i = 0;
    while i < m {
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        let mag = (-2.0 * u1.ln()).sqrt();
        let g1 = mag * (2.0 * std::f64::consts::PI * u2).cos();
        let g2 = mag * (2.0 * std::f64::consts::PI * u2).sin();
        dir[i] = g1;
        norm_sq += g1 * g1;
        if i + 1 < m {
            dir[i + 1] = g2;
            norm_sq += g2 * g2;
        }
        i += 2;
    }
    let norm = norm_sq.sqrt().max(1e-300);
    let radius = r * rng.random::<f64>().powf(1.0 / m as f64);
    center
        .iter()
        .zip(&dir)
        .map(|(c, d)| c + radius * d / norm)
        .collect()
}

struct SampleOutcome {
    sample: Option<GradientSample>,
    filtered: bool,
    numeric: bool,
}

/// Draw, integrate, filter, and differentiate one sample.
#[allow(clippy::too_many_arguments)]
fn one_sample(
    system: &ControlSystem,
    reference: &Process,
    schedule: &LimitSchedule,
    level: usize,
    theta: f64,
    rng: &mut ChaCha8Rng,
) -> SampleOutcome {
    let radius = schedule.radii[level];
    let lambda_n = schedule.lambda_at(level);
    let y0 = reference.initial_state();

    // Perturbed initial state inside the ball, intersected with the
    // asymptotic constraint set when it binds.
    let mut x = None;
    for _ in 0..256 {
        let candidate = sample_ball(rng, y0, radius);
        if system.c_as.contains(&candidate, 1e-12) {
            x = Some(candidate);
            break;
        }
    }
    let Some(x) = x else {
        return SampleOutcome {
            sample: None,
            filtered: true,
            numeric: false,
        };
    };

    let run = || -> Result<Option<GradientSample>> {
        let p = integrate_process(
            system,
            &x,
            reference.t_start(),
            reference.control(),
            theta,
            schedule.ode_tol,
        )?;
        let cost_gap = (p.cost_at(theta)? - reference.cost_at(theta)?).abs();
        let state_distance = linalg::norm2(&linalg::sub(&x, y0));
        let filter = SampleFilter { radius };
        if !filter.accepts(state_distance, cost_gap) {
            return Ok(None);
        }
        let mut gradient = cost_gradient_with(system, &p, theta, schedule.ode_tol)?;
        for g in gradient.iter_mut() {
            *g *= lambda_n;
        }
        Ok(Some(GradientSample {
            x: x.clone(),
            theta,
            gradient,
            state_distance,
            cost_gap,
        }))
    };

    match run() {
        Ok(Some(sample)) => SampleOutcome {
            sample: Some(sample),
            filtered: false,
            numeric: false,
        },
        Ok(None) => SampleOutcome {
            sample: None,
            filtered: true,
            numeric: false,
        },
        Err(_) => SampleOutcome {
            sample: None,
            filtered: false,
            numeric: true,
        },
    }
}

fn stream_rng(seed: u64, level: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((level as u64) << 32) | index as u64);
    rng
}

/// Sample scaled cost gradients around the reference initial state, level
/// by level. Horizons are drawn uniformly from each level's window, so the
/// deep levels trace the directional spread of the limiting gradient set.
/// Sampling is parallel; assembly order is fixed by `(level, index)`.
pub fn wakk_samples(
    system: &ControlSystem,
    reference: &Process,
    schedule: &LimitSchedule,
    rng_seed: u64,
) -> Result<GradientSampleSet> {
    let theta_max = schedule.theta_max();
    if !reference.grid().contains(theta_max) {
        return Err(Error::OutOfRange {
            t: theta_max,
            lo: reference.t_start(),
            hi: reference.t_end(),
        });
    }

    let levels = schedule.levels();
    let spl = schedule.samples_per_level;
    let outcomes: Vec<SampleOutcome> = (0..levels * spl)
        .into_par_iter()
        .map(|flat| {
            let level = flat / spl;
            let index = flat % spl;
            let mut rng = stream_rng(rng_seed, level, index);
            let (lo, hi) = schedule.theta_window(level);
            let theta = lo + (hi - lo) * rng.random::<f64>();
            one_sample(system, reference, schedule, level, theta, &mut rng)
        })
        .collect();

    let mut records = Vec::with_capacity(levels);
    for level in 0..levels {
        let mut record = LevelRecord {
            level,
            theta_level: schedule.thetas[level],
            radius: schedule.radii[level],
            lambda_n: schedule.lambda_at(level),
            attempted: spl,
            rejected_filter: 0,
            rejected_numeric: 0,
            samples: Vec::new(),
        };
        for outcome in &outcomes[level * spl..(level + 1) * spl] {
            match &outcome.sample {
                Some(s) => record.samples.push(s.clone()),
                None if outcome.filtered => record.rejected_filter += 1,
                None => record.rejected_numeric += outcome.numeric as usize,
            }
        }
        records.push(record);
    }

    Ok(GradientSampleSet {
        levels: records,
        lambda: schedule.lambda,
        seed: rng_seed,
        reference_digest: format!("{:016x}", reference.digest()),
        dim: system.state_dim(),
    })
}

/// Per-sequence outcome of the sequence-wise membership check.
#[derive(Debug, Clone, Serialize)]
pub struct SequenceCheck {
    pub thetas: Vec<f64>,
    pub accepted_samples: usize,
    /// Smallest distance-to-cone over the sample decompositions.
    pub min_gap: f64,
    pub member: bool,
}

/// Sequence-wise membership: for every supplied horizon sequence,
/// `-psi(0)` must decompose into a cone element plus a point of the
/// SAMPLE SET itself (no convex hull), within `tol`. Sampling reuses the
/// deepest two radii of the schedule at the deepest two sequence horizons.
#[allow(clippy::too_many_arguments)]
pub fn akk_check(
    psi0: &[f64],
    lambda: Multiplier,
    system: &ControlSystem,
    reference: &Process,
    sequences: &[Vec<f64>],
    schedule: &LimitSchedule,
    cone: &ConeDescriptor,
    tol: f64,
    rng_seed: u64,
) -> Result<(bool, Vec<SequenceCheck>)> {
    if sequences.len() < 3 {
        return Err(Error::InvalidInput(
            "sequence-wise check needs at least 3 structurally distinct sequences".into(),
        ));
    }
    if lambda != schedule.lambda {
        return Err(Error::InvalidInput(
            "multiplier limit disagrees with the schedule".into(),
        ));
    }
    let p: Vec<f64> = psi0.iter().map(|v| -v).collect();
    let deep_radii = [
        schedule.radii[schedule.levels() - 2],
        schedule.radii[schedule.levels() - 1],
    ];
    let mut checks = Vec::with_capacity(sequences.len());
    let mut all_member = true;
    for (si, seq) in sequences.iter().enumerate() {
        if seq.len() < 2 {
            return Err(Error::InvalidInput(
                "each horizon sequence needs at least 2 entries".into(),
            ));
        }
        if !seq.iter().all(|t| t.is_finite()) {
            return Err(Error::NonFinite {
                context: "horizon sequence",
                t: f64::NAN,
            });
        }
        let mut sorted = seq.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let deep_thetas = [sorted[sorted.len() - 2], sorted[sorted.len() - 1]];
        if !reference.grid().contains(deep_thetas[1]) {
            return Err(Error::OutOfRange {
                t: deep_thetas[1],
                lo: reference.t_start(),
                hi: reference.t_end(),
            });
        }

        // Fixed-horizon sampling at the two deepest sequence levels.
        let spl = schedule.samples_per_level;
        let outcomes: Vec<SampleOutcome> = (0..2 * spl)
            .into_par_iter()
            .map(|flat| {
                let slot = flat / spl;
                let index = flat % spl;
                let mut rng = stream_rng(
                    rng_seed ^ (0x9e3779b97f4a7c15u64.wrapping_mul(si as u64 + 1)),
                    slot,
                    index,
                );
                let mut sub = schedule.clone();
                sub.radii = vec![deep_radii[0], deep_radii[1]];
                sub.thetas = vec![deep_thetas[0], deep_thetas[1]];
                one_sample(system, reference, &sub, slot, deep_thetas[slot], &mut rng)
            })
            .collect();

        let mut accepted = 0usize;
        let mut min_gap = f64::INFINITY;
        for outcome in &outcomes {
            if let Some(s) = &outcome.sample {
                accepted += 1;
                let residual = linalg::sub(&p, &s.gradient);
                min_gap = min_gap.min(cone.distance(&residual));
            }
        }
        if accepted == 0 {
            return Err(Error::InvalidInput(format!(
                "no accepted samples for horizon sequence {si}"
            )));
        }
        let member = min_gap <= tol;
        all_member &= member;
        checks.push(SequenceCheck {
            thetas: deep_thetas.to_vec(),
            accepted_samples: accepted,
            min_gap,
            member,
        });
    }
    Ok((all_member, checks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::AxisSign;
    use crate::models::{oscillator_model, planar_model, ramsey_saddle_path, RamseyModel};
    use crate::transversality::wakk_check;
    use crate::variational::Multiplier;

    fn planar_schedule() -> LimitSchedule {
        // Light version of the default schedule for unit tests.
        let mut s = LimitSchedule::geometric(
            2.0 * std::f64::consts::PI,
            24.0 * std::f64::consts::PI,
            6,
            24,
            Multiplier::Normal,
        )
        .unwrap();
        s.radii = (1..=6).map(|n| 0.5 * 0.45f64.powi(n)).collect();
        s
    }

    #[test]
    fn filter_rejects_planted_faraway_sample() {
        let filter = SampleFilter { radius: 0.1 };
        assert!(filter.accepts(0.05, 0.02));
        assert!(!filter.accepts(0.2, 0.0), "state distance 2x the radius");
        assert!(!filter.accepts(0.0, 0.15), "cost gap above the radius");
    }

    #[test]
    fn planar_samples_trace_the_circle() {
        // Gradients are (sin th, 1 - cos th) independent of the perturbed
        // initial state.
        let model = planar_model(&[0.0, 0.0]);
        let sys = model.system().unwrap();
        let sched = planar_schedule();
        let (p, _) = model
            .family_process(&[0.3, 0.1], sched.theta_max() + 1.0)
            .unwrap();
        let set = wakk_samples(&sys, &p, &sched, 7).unwrap();
        assert!(set.empty_levels().is_empty(), "{:?}", set.empty_levels());
        for level in &set.levels {
            for s in &level.samples {
                let want = [s.theta.sin(), 1.0 - s.theta.cos()];
                assert!(
                    (s.gradient[0] - want[0]).abs() < 1e-4
                        && (s.gradient[1] - want[1]).abs() < 1e-4,
                    "gradient {:?} at theta {}",
                    s.gradient,
                    s.theta
                );
                assert!(s.state_distance < level.radius);
                assert!(s.cost_gap < level.radius);
            }
        }
        // Determinism: same seed, same samples.
        let again = wakk_samples(&sys, &p, &sched, 7).unwrap();
        assert_eq!(
            serde_json::to_string(&set).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn state_independent_integrand_gives_zero_gradients() {
        let model = RamseyModel::parse("sqrt(x1)", "-ln(u1)", 0.25, 1.0).unwrap();
        let sys = model.system().unwrap();
        let (p, _) = ramsey_saddle_path(&model, 30.0, 1e-9).unwrap();
        let mut sched = LimitSchedule::geometric(2.0, 28.0, 4, 8, Multiplier::Normal).unwrap();
        sched.radii = vec![0.2, 0.1, 0.05, 0.02];
        let set = wakk_samples(&sys, &p, &sched, 11).unwrap();
        assert!(set.total_accepted() > 0);
        for level in &set.levels {
            for s in &level.samples {
                assert!(linalg::norm2(&s.gradient) < 1e-10);
                // Also the asymptotic constraint held: x >= x*.
                assert!(s.x[0] >= 1.0 - 1e-12);
            }
        }
        // With the half-line cone, any positive psi(0) is a member.
        let cone = ConeDescriptor::coordinate(vec![AxisSign::NonPos]);
        let (member, _) = wakk_check(&[0.8], Multiplier::Normal, &set, &cone, 1e-6).unwrap();
        assert!(member);
        let (member, cert) = wakk_check(&[-0.8], Multiplier::Normal, &set, &cone, 1e-6).unwrap();
        assert!(!member);
        assert!((cert.gap() - 0.8).abs() < 1e-9);
    }

    #[test]
    fn planar_membership_inside_and_outside_the_disk() {
        let model = planar_model(&[0.0, 0.0]);
        let sys = model.system().unwrap();
        let sched = planar_schedule();
        let (p, _) = model
            .family_process(&[0.3, 0.1], sched.theta_max() + 1.0)
            .unwrap();
        let set = wakk_samples(&sys, &p, &sched, 3).unwrap();
        let cone = ConeDescriptor::zero(2);
        // psi(0) = S_x(0, x*) + C = (0, -1) + C.
        for (c, want) in [
            ([0.5, 0.2], true),
            ([-0.4, 0.55], true),
            ([1.3, 0.0], false),
            ([0.0, -1.3], false),
        ] {
            let psi0 = [c[0], c[1] - 1.0];
            let (member, cert) = wakk_check(&psi0, Multiplier::Normal, &set, &cone, 5e-2).unwrap();
            assert_eq!(member, want, "C = {c:?}, gap = {}", cert.gap());
        }
    }

    #[test]
    fn oscillator_deep_gradients_fill_an_interval() {
        // At deep horizons the gradient cos(e^theta x) - cos(x) over the
        // sampled ball spreads across [-2, 0]-ish; the hull must contain
        // the co-state limit value 0 and the true arc value -1.
        let model = oscillator_model();
        let sys = model.system().unwrap();
        let mut sched = LimitSchedule::geometric(0.4, 5.0, 4, 48, Multiplier::Normal).unwrap();
        sched.radii = vec![0.4, 0.3, 0.2, 0.15];
        let (p, _) = model.family_process(&[0.0], 6.0).unwrap();
        let set = wakk_samples(&sys, &p, &sched, 19).unwrap();
        let cone = ConeDescriptor::zero(1);
        let (member_true_arc, _) =
            wakk_check(&[1.0], Multiplier::Normal, &set, &cone, 5e-2).unwrap();
        assert!(member_true_arc, "-psi(0) = -1 must lie in the sampled hull");
        let (member_far, cert) =
            wakk_check(&[-3.0], Multiplier::Normal, &set, &cone, 5e-2).unwrap();
        assert!(!member_far, "gap {}", cert.gap());
    }

    #[test]
    fn wakk_membership_invariant_under_redundant_interior_points() {
        let model = planar_model(&[0.0, 0.0]);
        let sys = model.system().unwrap();
        let sched = planar_schedule();
        let (p, _) = model
            .family_process(&[0.2, -0.1], sched.theta_max() + 1.0)
            .unwrap();
        let mut set = wakk_samples(&sys, &p, &sched, 5).unwrap();
        let psi0 = [0.3, -0.6];
        let cone = ConeDescriptor::zero(2);
        let (member_before, _) = wakk_check(&psi0, Multiplier::Normal, &set, &cone, 5e-2).unwrap();
        // Plant redundant interior gradients (the hull centroid).
        let cloud = set.pooled_cloud(2).unwrap();
        let mut centroid = vec![0.0; 2];
        for q in &cloud.points {
            centroid[0] += q[0] / cloud.len() as f64;
            centroid[1] += q[1] / cloud.len() as f64;
        }
        let last = set.levels.len() - 1;
        for _ in 0..10 {
            set.levels[last].samples.push(GradientSample {
                x: vec![0.0, 0.0],
                theta: sched.theta_max(),
                gradient: centroid.clone(),
                state_distance: 0.0,
                cost_gap: 0.0,
            });
        }
        let (member_after, _) = wakk_check(&psi0, Multiplier::Normal, &set, &cone, 5e-2).unwrap();
        assert_eq!(member_before, member_after);
    }

    #[test]
    fn akk_phase_locked_sequences_pin_single_points() {
        // Along theta_n = phi + 2 pi n the planar gradients collapse to the
        // single point (sin phi, 1 - cos phi); intersecting over distinct
        // phases rejects arcs that the hull test accepts.
        let model = planar_model(&[0.0, 0.0]);
        let sys = model.system().unwrap();
        let sched = planar_schedule();
        let (p, _) = model
            .family_process(&[0.4, 0.0], sched.theta_max() + 1.0)
            .unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        let sequences: Vec<Vec<f64>> = [0.0, 0.5 * std::f64::consts::PI, std::f64::consts::PI, 4.5]
            .iter()
            .map(|phi| (1..=10).map(|n| phi + two_pi * n as f64).collect())
            .collect();
        let cone = ConeDescriptor::zero(2);
        let psi0 = [0.4, -1.0]; // the arc's own psi(0) with C = (0.4, 0)
        let set = wakk_samples(&sys, &p, &sched, 23).unwrap();
        let (hull_member, _) = wakk_check(&psi0, Multiplier::Normal, &set, &cone, 5e-2).unwrap();
        assert!(hull_member);
        let (seq_member, checks) = akk_check(
            &psi0,
            Multiplier::Normal,
            &sys,
            &p,
            &sequences,
            &sched,
            &cone,
            5e-2,
            23,
        )
        .unwrap();
        assert!(!seq_member, "sequence-wise check must reject");
        // Every per-sequence gap matches the analytic distance to the
        // pinned point.
        for (phi, check) in [0.0, 0.5 * std::f64::consts::PI, std::f64::consts::PI, 4.5]
            .iter()
            .zip(&checks)
        {
            let pin = [phi.sin(), 1.0 - phi.cos()];
            let want = ((-psi0[0] - pin[0]).powi(2) + (-psi0[1] - pin[1]).powi(2)).sqrt();
            assert!(
                (check.min_gap - want).abs() < 1e-3,
                "phi = {phi}: {} vs {want}",
                check.min_gap
            );
        }
    }

    #[test]
    fn akk_zero_gradients_reduce_to_cone_membership() {
        let model = RamseyModel::parse("sqrt(x1)", "-ln(u1)", 0.25, 1.0).unwrap();
        let sys = model.system().unwrap();
        let (p, _) = ramsey_saddle_path(&model, 70.0, 1e-9).unwrap();
        let mut sched = LimitSchedule::geometric(3.0, 40.0, 4, 8, Multiplier::Normal).unwrap();
        sched.radii = vec![0.2, 0.1, 0.05, 0.02];
        let sequences: Vec<Vec<f64>> = vec![
            (1..=6).map(|n| 6.0 * n as f64).collect(),
            (1..=6).map(|n| 5.0 + 5.5 * n as f64).collect(),
            (1..=6).map(|n| 2.0 * 1.8f64.powi(n)).collect(),
        ];
        let cone = ConeDescriptor::coordinate(vec![AxisSign::NonPos]);
        let (member, _) = akk_check(
            &[0.5],
            Multiplier::Normal,
            &sys,
            &p,
            &sequences,
            &sched,
            &cone,
            1e-6,
            41,
        )
        .unwrap();
        assert!(member, "-psi(0) < 0 lies in the nonpositive cone + {{0}}");
        let (member, _) = akk_check(
            &[-0.5],
            Multiplier::Normal,
            &sys,
            &p,
            &sequences,
            &sched,
            &cone,
            1e-6,
            41,
        )
        .unwrap();
        assert!(!member);
    }

    #[test]
    fn empty_levels_are_reported_not_fatal() {
        // A singleton asymptotic set rejects every ball draw, so all
        // levels come back empty and are listed.
        let sys = crate::ode::ControlSystem::builder(
            1,
            1,
            |_t, x, u, out| {
                out[0] = -x[0] + u[0];
                Ok(())
            },
            |_t, x, _u| Ok(x[0] * x[0]),
        )
        .c_as(crate::convex::ConstraintSet::point(&[5.0]))
        .build();
        let u = crate::ode::ControlSignal::constant(vec![0.0]);
        let p =
            crate::ode::integrate_process(&sys, &[0.0], 0.0, &u, 40.0, crate::ode::Tol::default())
                .unwrap();
        let sched = LimitSchedule::geometric(3.0, 36.0, 3, 4, Multiplier::Normal).unwrap();
        let set = wakk_samples(&sys, &p, &sched, 9).unwrap();
        assert_eq!(set.empty_levels(), vec![0, 1, 2]);
        assert_eq!(set.total_accepted(), 0);
        assert!(
            set.pooled_cloud(2).is_err(),
            "empty pool cannot form a hull"
        );
    }

    #[test]
    fn akk_stable_model_accepts_only_the_limit_value() {
        // All horizon sequences share one gradient limit point (zero), so
        // the sequence-wise check accepts psi(0) only at the negated limit.
        let sys = crate::ode::ControlSystem::builder(
            1,
            1,
            |_t, x, u, out| {
                out[0] = -x[0] + u[0];
                Ok(())
            },
            |_t, x, _u| Ok(x[0] * x[0]),
        )
        .build();
        let u = crate::ode::ControlSignal::constant(vec![0.0]);
        let p =
            crate::ode::integrate_process(&sys, &[0.0], 0.0, &u, 40.0, crate::ode::Tol::default())
                .unwrap();
        let mut sched = LimitSchedule::geometric(3.0, 36.0, 4, 12, Multiplier::Normal).unwrap();
        sched.radii = vec![0.1, 0.05, 0.02, 0.01];
        let sequences: Vec<Vec<f64>> = vec![
            (1..=6).map(|n| 6.0 * n as f64).collect(),
            (1..=6).map(|n| 4.0 + 5.0 * n as f64).collect(),
            (1..=5).map(|n| 2.0 * 1.8f64.powi(n)).collect(),
        ];
        let cone = ConeDescriptor::zero(1);
        let (member, _) = akk_check(
            &[0.0],
            Multiplier::Normal,
            &sys,
            &p,
            &sequences,
            &sched,
            &cone,
            5e-2,
            17,
        )
        .unwrap();
        assert!(member, "the limit value itself must pass");
        let (member, checks) = akk_check(
            &[0.3],
            Multiplier::Normal,
            &sys,
            &p,
            &sequences,
            &sched,
            &cone,
            5e-2,
            17,
        )
        .unwrap();
        assert!(!member, "an offset co-state must fail: {checks:?}");
    }

    #[test]
    fn sequence_check_requires_three_sequences() {
        let model = planar_model(&[0.0, 0.0]);
        let sys = model.system().unwrap();
        let sched = planar_schedule();
        let (p, _) = model.family_process(&[0.1, 0.0], 80.0).unwrap();
        let cone = ConeDescriptor::zero(2);
        let err = akk_check(
            &[0.0, -1.0],
            Multiplier::Normal,
            &sys,
            &p,
            &[vec![10.0, 20.0], vec![12.0, 22.0]],
            &sched,
            &cone,
            5e-2,
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }
}
