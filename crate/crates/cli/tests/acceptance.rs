//! Acceptance gate: one test per criterion, each printing a PASS/FAIL line
//! with the measured quantity (run with `-- --nocapture` to see them all).

use costate::convex::ConeDescriptor;
use costate::expr::{eval, eval_dual, parse_expr, Bindings, Var};
use costate::models::{
    oscillator_model, planar_model, ramsey_saddle_path, ramsey_stationary, RamseyModel,
};
use costate::ode::{eval_cost, integrate_process, ControlSignal, Tol};
use costate::transversality::{
    ak_limit, akk_check, control_grid, maxh_residual, overtaking_compare, wakk_check, wakk_samples,
    LimitSchedule,
};
use costate::variational::{cost_gradient, costate_from_terminal, integrate_adjoint, Multiplier};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn report(name: &str, passed: bool, detail: &str) -> bool {
    println!(
        "[{}] {name}: {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    passed
}

fn ball2(rng: &mut ChaCha8Rng, r_lo: f64, r_hi: f64) -> [f64; 2] {
    let phi: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let r = r_lo + (r_hi - r_lo) * rng.random::<f64>();
    [r * phi.cos(), r * phi.sin()]
}

#[test]
fn acceptance_01_planar_cost_identity() {
    // |J(x*, 0, u_C; theta) - S(theta, y(theta)) + S(0, x*)
    //  - (1 - e^{-2 theta}) |C|^2 / 2| < 1e-6
    // for 10 random C with |C| <= 1.5 and theta in {1, 5, 12}.
    let x_star = [0.0, 0.0];
    let model = planar_model(&x_star);
    let sys = model.system().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let c = ball2(&mut rng, 0.0, 1.5);
        let (family, _) = model.family_process(&c, 12.5).unwrap();
        let p =
            integrate_process(&sys, &x_star, 0.0, family.control(), 12.5, Tol::default()).unwrap();
        let csq = c[0] * c[0] + c[1] * c[1];
        for theta in [1.0, 5.0, 12.0] {
            let j = eval_cost(&p, theta).unwrap();
            let y = p.state_at(theta).unwrap();
            let s_theta = model.potential_value(theta, &y).unwrap();
            let s_zero = model.potential_value(0.0, &x_star).unwrap();
            let defect = (j - s_theta + s_zero - 0.5 * (1.0 - (-2.0 * theta).exp()) * csq).abs();
            worst = worst.max(defect);
        }
    }
    let ok = worst < 1e-6;
    assert!(report(
        "planar cost identity",
        ok,
        &format!("max defect {worst:.3e} over 10 parameters x 3 horizons (bound 1e-6)")
    ));
}

#[test]
fn acceptance_02_planar_adjoint_closure() {
    // integrate_adjoint from psi(0) = S_x(0, x*) + C tracks
    // psi(t) = S_x(t, y(t)) + C within 1e-6 sup-norm on [0, 12].
    let x_star = [0.0, 0.0];
    let model = planar_model(&x_star);
    let sys = model.system().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let c = ball2(&mut rng, 0.2, 1.2);
        let (p, family_arc) = model.family_process(&c, 12.0).unwrap();
        let psi0 = family_arc.psi_at(0.0).unwrap();
        let got = integrate_adjoint(&sys, &p, &psi0, Multiplier::Normal).unwrap();
        for &t in got.grid().nodes() {
            let a = got.psi_at(t).unwrap();
            let y = p.state_at(t).unwrap();
            let sx = model.potential_gradient_x(t, &y).unwrap();
            for j in 0..2 {
                worst = worst.max((a[j] - (sx[j] + c[j])).abs());
            }
        }
    }
    let ok = worst < 1e-6;
    assert!(report(
        "planar adjoint closure",
        ok,
        &format!("sup deviation {worst:.3e} on [0, 12] (bound 1e-6)")
    ));
}

#[test]
fn acceptance_03_membership_disk() {
    // Default schedule: accept 20 arcs with |C| <= 0.9, reject 20 arcs
    // with |C| >= 1.1 at tolerance 5e-2, total under 30 s.
    let started = Instant::now();
    let x_star = [0.0, 0.0];
    let model = planar_model(&x_star);
    let sys = model.system().unwrap();
    let schedule = LimitSchedule::default_schedule();
    let span = schedule.theta_max() + 1.0;
    let cone = ConeDescriptor::zero(2);
    let mut rng = ChaCha8Rng::seed_from_u64(303);

    let mut accepted = 0;
    let mut rejected = 0;
    let mut worst_inside_gap: f64 = 0.0;
    let mut worst_outside_gap = f64::INFINITY;
    for i in 0..40u64 {
        let inside = i < 20;
        let c = if inside {
            ball2(&mut rng, 0.0, 0.9)
        } else {
            ball2(&mut rng, 1.1, 1.5)
        };
        let (p, arc) = model.family_process(&c, span).unwrap();
        let samples = wakk_samples(&sys, &p, &schedule, 1000 + i).unwrap();
        let psi0 = arc.psi_at(0.0).unwrap();
        let (member, cert) = wakk_check(&psi0, Multiplier::Normal, &samples, &cone, 5e-2).unwrap();
        if inside {
            accepted += member as usize;
            worst_inside_gap = worst_inside_gap.max(cert.gap());
        } else {
            rejected += (!member) as usize;
            worst_outside_gap = worst_outside_gap.min(cert.gap());
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let ok = accepted == 20 && rejected == 20 && elapsed < 30.0;
    assert!(report(
        "membership disk",
        ok,
        &format!(
            "accepted {accepted}/20 (worst gap {worst_inside_gap:.2e}), rejected {rejected}/20 \
             (closest gap {worst_outside_gap:.2e}), {elapsed:.1} s (budget 30 s)"
        )
    ));
}

#[test]
fn acceptance_04_oscillator_limit_inconsistency() {
    // The gradient limit converges to 0, yet the induced zero arc fails
    // the Hamiltonian maximum at t = 0 with surplus 1; the true arc
    // passes on [0, 5].
    let model = oscillator_model();
    let sys = model.system().unwrap();
    let schedule = LimitSchedule::default_schedule();
    let (p, true_arc) = model
        .family_process(&[0.0], schedule.theta_max() + 1.0)
        .unwrap();

    let res = ak_limit(&sys, &p, &schedule, 4, 1e-6).unwrap();
    let limit_norm = match res.converged_value() {
        Some(v) => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        None => f64::INFINITY,
    };

    let zero_arc = costate::variational::CostateArc::from_nodes(
        vec![0.0, 6.0],
        vec![vec![0.0], vec![0.0]],
        vec![vec![0.0], vec![0.0]],
        Multiplier::Normal,
    )
    .unwrap();
    let grid = control_grid(&[-3.0], &[3.0], 121).unwrap();
    let induced = maxh_residual(&sys, &p, &zero_arc, &[0.0], &grid).unwrap();

    let probes: Vec<f64> = (0..=40).map(|i| 0.125 * i as f64).collect();
    let truth = maxh_residual(&sys, &p, &true_arc, &probes, &grid).unwrap();

    let ok =
        limit_norm < 1e-6 && (induced.max_residual - 1.0).abs() < 1e-3 && truth.max_residual < 1e-6;
    assert!(report(
        "oscillator limit inconsistency",
        ok,
        &format!(
            "limit norm {limit_norm:.2e} (bound 1e-6), induced-arc surplus {:.6} (want 1 +- 1e-3), \
             true-arc residual {:.2e} (bound 1e-6)",
            induced.max_residual, truth.max_residual
        )
    ));
}

#[test]
fn acceptance_05_zero_terminal_identity() {
    // || costate_from_terminal(0, theta)(0) + cost_gradient(theta) || < 1e-6
    // for all three built-in models and theta in {5, 10, 20}.
    let mut worst: f64 = 0.0;
    let mut run = |name: &str, sys: &costate::ode::ControlSystem, p: &costate::ode::Process| {
        for theta in [5.0, 10.0, 20.0] {
            let m = sys.state_dim();
            let arc =
                costate_from_terminal(sys, p, &vec![0.0; m], theta, Multiplier::Normal).unwrap();
            let g = cost_gradient(sys, p, theta).unwrap();
            let psi0 = arc.psi_at(0.0).unwrap();
            let defect = psi0
                .iter()
                .zip(&g)
                .map(|(a, b)| (a + b) * (a + b))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(defect);
            let _ = name;
        }
    };

    let planar = planar_model(&[0.0, 0.0]);
    let (p, _) = planar.family_process(&[0.5, -0.3], 21.0).unwrap();
    run("planar", &planar.system().unwrap(), &p);

    let osc = oscillator_model();
    let (p, _) = osc.family_process(&[0.0], 21.0).unwrap();
    run("oscillator", &osc.system().unwrap(), &p);

    let growth = RamseyModel::parse("sqrt(x1)", "-ln(u1)", 0.25, 1.0).unwrap();
    let (p, _) = ramsey_saddle_path(&growth, 21.0, 1e-9).unwrap();
    run("ramsey", &growth.system().unwrap(), &p);

    let ok = worst < 1e-6;
    assert!(report(
        "zero-terminal identity",
        ok,
        &format!("max defect {worst:.3e} over 3 models x 3 horizons (bound 1e-6)")
    ));
}

#[test]
fn acceptance_06_gradient_correctness() {
    // cost_gradient vs central finite differences (h = 1e-5) within 1e-4
    // relative, on 30 random (model, x, theta) probes.
    let h = 1e-5;
    let tol_fd = Tol::new(1e-11, 1e-11);
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst_rel: f64 = 0.0;
    let mut count = 0;

    let mut probe =
        |sys: &costate::ode::ControlSystem, control: &ControlSignal, x0: &[f64], theta: f64| {
            let p = integrate_process(sys, x0, 0.0, control, theta, tol_fd).unwrap();
            let g = cost_gradient(sys, &p, theta).unwrap();
            for j in 0..x0.len() {
                let mut xp = x0.to_vec();
                let mut xm = x0.to_vec();
                xp[j] += h;
                xm[j] -= h;
                let jp = integrate_process(sys, &xp, 0.0, control, theta, tol_fd)
                    .unwrap()
                    .cost_at(theta)
                    .unwrap();
                let jm = integrate_process(sys, &xm, 0.0, control, theta, tol_fd)
                    .unwrap()
                    .cost_at(theta)
                    .unwrap();
                let fd = (jp - jm) / (2.0 * h);
                let rel = (g[j] - fd).abs() / fd.abs().max(1e-3);
                worst_rel = worst_rel.max(rel);
            }
            count += 1;
        };

    let planar = planar_model(&[0.0, 0.0]);
    let psys = planar.system().unwrap();
    for _ in 0..10 {
        let c = ball2(&mut rng, 0.1, 1.0);
        let (fam, _) = planar.family_process(&c, 20.0).unwrap();
        let x = ball2(&mut rng, 0.0, 0.5);
        let theta = 1.0 + 19.0 * rng.random::<f64>();
        probe(&psys, fam.control(), &x, theta);
    }

    let osc = oscillator_model();
    let osys = osc.system().unwrap();
    let zero_control = ControlSignal::constant(vec![0.0]);
    for _ in 0..10 {
        let x = [0.8 * rng.random::<f64>() - 0.4];
        let theta = 0.5 + 2.5 * rng.random::<f64>();
        probe(&osys, &zero_control, &x, theta);
    }

    let growth = RamseyModel::parse("sqrt(x1)", "-ln(u1)", 0.25, 1.0).unwrap();
    let gsys = growth.system().unwrap();
    let (saddle, _) = ramsey_saddle_path(&growth, 11.0, 1e-9).unwrap();
    for _ in 0..10 {
        let x = [1.0 + 0.05 * rng.random::<f64>()];
        let theta = 2.0 + 8.0 * rng.random::<f64>();
        probe(&gsys, saddle.control(), &x, theta);
    }

    let ok = worst_rel < 1e-4 && count == 30;
    assert!(report(
        "gradient correctness",
        ok,
        &format!("worst relative deviation {worst_rel:.3e} over {count} probes (bound 1e-4)")
    ));
}

#[test]
fn acceptance_07_growth_saddle() {
    // Stationary point, saddle eigenvalues, path convergence, Hamiltonian
    // maximum, and overtaking tails for the sqrt/log growth preset.
    let growth = RamseyModel::parse("sqrt(x1)", "-ln(u1)", 0.25, 1.0).unwrap();
    let sys = growth.system().unwrap();
    let mut all_ok = true;

    let (x0, u0) = ramsey_stationary(&growth).unwrap();
    let stationary_ok = (x0 - 4.0).abs() < 1e-10 && (u0 - 2.0).abs() < 1e-10;
    all_ok &= report(
        "growth saddle / stationary point",
        stationary_ok,
        &format!("x0 = {x0:.12}, u0 = {u0:.12} (want 4, 2 within 1e-10)"),
    );

    let (_, _, fpp) = growth.f_d2(x0).unwrap();
    let (_, d1, d2) = growth.f0_d2(u0).unwrap();
    let det = -fpp * (d1 / d2);
    let disc = growth.rho * growth.rho - 4.0 * det;
    let eig_ok = disc > 0.0 && det < 0.0;
    all_ok &= report(
        "growth saddle / eigenvalues",
        eig_ok,
        &format!(
            "lambda = {:.6}, {:.6} (real, opposite signs)",
            0.5 * (growth.rho + disc.max(0.0).sqrt()),
            0.5 * (growth.rho - disc.max(0.0).sqrt())
        ),
    );

    let (p, arc) = ramsey_saddle_path(&growth, 41.0, 1e-9).unwrap();
    let y40 = p.state_at(40.0).unwrap()[0];
    let u40 = p.control_at(40.0)[0];
    let dist = ((y40 - 4.0f64).powi(2) + (u40 - 2.0).powi(2)).sqrt();
    let dist_ok = dist < 1e-3;
    all_ok &= report(
        "growth saddle / distance at T=40",
        dist_ok,
        &format!(
            "|(y,u)(40) - (4,2)| = {dist:.4e} against the stated bound 1e-3; the bound is \
             unattainable: two independent constructions (backward eigenvector shoot and \
             forward shooting bisection) agree the true manifold value is 8.51e-3, first \
             passing 1e-3 near T = 54"
        ),
    );

    let probes: Vec<f64> = (0..80).map(|i| 40.0 * i as f64 / 79.0).collect();
    let grid = control_grid(&[1e-3], &[4.0], 101).unwrap();
    let rep = maxh_residual(&sys, &p, &arc, &probes, &grid).unwrap();
    let maxh_ok = rep.max_residual < 1e-5;
    all_ok &= report(
        "growth saddle / hamiltonian maximum",
        maxh_ok,
        &format!("max residual {:.3e} (bound 1e-5)", rep.max_residual),
    );

    let thetas: Vec<f64> = (1..=10).map(|i| 4.0 * i as f64).collect();
    let mut worst_tail = f64::INFINITY;
    for c in [0.5, 0.8, 1.0] {
        let u = ControlSignal::constant(vec![c]);
        let pb = integrate_process(&sys, &[1.0], 0.0, &u, 41.0, Tol::default()).unwrap();
        let (lo, _) = overtaking_compare(&sys, &p, &pb, &thetas).unwrap();
        worst_tail = worst_tail.min(lo);
    }
    let overtaking_ok = worst_tail >= -1e-3;
    all_ok &= report(
        "growth saddle / overtaking tails",
        overtaking_ok,
        &format!("worst tail minimum {worst_tail:.3e} over 3 constant controls (bound -1e-3)"),
    );

    assert!(
        all_ok,
        "growth saddle criterion failed; the distance sub-check asserts a 1e-3 bound at T = 40 \
         that sits below the true manifold value 8.51e-3 (two independent constructions agree; \
         see the output above)"
    );
}

#[test]
fn acceptance_08_sequence_strictness() {
    // Every arc with 0.2 < |C| < 0.9 passes the hull test but fails the
    // sequence-wise test over 4 phase-shifted horizon sequences.
    let x_star = [0.0, 0.0];
    let model = planar_model(&x_star);
    let sys = model.system().unwrap();
    let schedule = LimitSchedule::default_schedule();
    let span = schedule.theta_max() + 1.0;
    let cone = ConeDescriptor::zero(2);
    let two_pi = std::f64::consts::TAU;
    let sequences: Vec<Vec<f64>> = [0.0, 0.25, 0.5, 0.75]
        .iter()
        .map(|frac| {
            (6..=19)
                .map(|n| frac * two_pi + two_pi * n as f64)
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut hull_accepts = 0;
    let mut seq_rejects = 0;
    let n_arcs = 12u64;
    for i in 0..n_arcs {
        let c = ball2(&mut rng, 0.25, 0.85);
        let (p, arc) = model.family_process(&c, span).unwrap();
        let psi0 = arc.psi_at(0.0).unwrap();
        let samples = wakk_samples(&sys, &p, &schedule, 2000 + i).unwrap();
        let (hull_member, _) =
            wakk_check(&psi0, Multiplier::Normal, &samples, &cone, 5e-2).unwrap();
        hull_accepts += hull_member as usize;
        let (seq_member, _) = akk_check(
            &psi0,
            Multiplier::Normal,
            &sys,
            &p,
            &sequences,
            &schedule,
            &cone,
            5e-2,
            2000 + i,
        )
        .unwrap();
        seq_rejects += (!seq_member) as usize;
    }
    let ok = hull_accepts == n_arcs as usize && seq_rejects == n_arcs as usize;
    assert!(report(
        "sequence strictness",
        ok,
        &format!(
            "hull accepted {hull_accepts}/{n_arcs}, sequence-wise rejected {seq_rejects}/{n_arcs} \
             (phase-locked sequences pin single gradient points)"
        )
    ));
}

#[test]
fn acceptance_09_expression_battery() {
    // Dual partials vs central differences within 1e-7 relative, and the
    // print-parse fixpoint, over a 20-expression battery.
    let battery = [
        "x1*sin(t) - x2*cos(t)",
        "exp(-t)*sin(exp(t)*x1) - exp(-x1^2)",
        "sqrt(x1)",
        "-ln(u1)",
        "u1^2/4 + x1*u1 - t*x2",
        "sqrt(1 + x1^2 + x2^2)",
        "ln(2 + sin(x1))*cos(u1)",
        "exp(x1*x2) - x1/x2",
        "t^3 - 2*t^2 + t - 1",
        "sin(cos(exp(x1)))",
        "x1^4 - 3*x1^2*x2 + x2^2",
        "1/(1 + exp(-x1))",
        "ln(1 + x1^2)/(1 + u1^2)",
        "cos(t)*cos(t) + sin(t)*sin(t)",
        "exp(-0.5*x1^2 - 0.25*x2^2)",
        "(x1 - x2)^3/(2 + cos(t))",
        "sqrt(4 + u1^2) - 2",
        "t*exp(-t)*sin(3*t)",
        "x1^2^2 + x2",
        "-(-x1 + 2*(-x2))",
    ];
    assert_eq!(battery.len(), 20);
    let b = Bindings::new(0.73, &[0.62, -1.31], &[0.47]);
    let wrt = [Var::T, Var::X(0), Var::X(1), Var::U(0)];
    let h = 1e-6;
    let mut worst_rel: f64 = 0.0;
    let mut fixpoint_ok = true;
    for text in battery {
        let e = parse_expr(text).unwrap();
        // Fixpoint: printing and reparsing is print-stable.
        let printed = e.to_string();
        let reparsed = parse_expr(&printed).unwrap();
        fixpoint_ok &= printed == reparsed.to_string();

        let d = eval_dual(&e, &b, &wrt).unwrap();
        for (i, &v) in wrt.iter().enumerate() {
            let mut bp = b.clone();
            let mut bm = b.clone();
            match v {
                Var::T => {
                    bp.t += h;
                    bm.t -= h;
                }
                Var::X(j) => {
                    bp.x[j] += h;
                    bm.x[j] -= h;
                }
                Var::U(j) => {
                    bp.u[j] += h;
                    bm.u[j] -= h;
                }
            }
            let fd = (eval(&e, &bp).unwrap() - eval(&e, &bm).unwrap()) / (2.0 * h);
            let rel = (d.partials[i] - fd).abs() / fd.abs().max(1.0);
            worst_rel = worst_rel.max(rel);
        }
    }
    let ok = worst_rel < 1e-7 && fixpoint_ok;
    assert!(report(
        "expression battery",
        ok,
        &format!(
            "worst relative derivative deviation {worst_rel:.3e} (bound 1e-7), \
             print-parse fixpoint {}",
            if fixpoint_ok { "holds" } else { "broken" }
        )
    ));
}

#[test]
fn acceptance_10_report_determinism() {
    // Two runs of the membership command with a fixed seed produce
    // byte-identical reports.
    let bin = env!("CARGO_BIN_EXE_costate");
    let base = std::env::temp_dir().join(format!("costate-acceptance-{}", std::process::id()));
    let dirs = [base.join("run1"), base.join("run2")];
    for dir in &dirs {
        let status = std::process::Command::new(bin)
            .args([
                "wakk",
                "--model",
                "planar",
                "--seed",
                "99",
                "--levels",
                "6",
                "--samples",
                "16",
                "--theta-min",
                "6.2831853",
                "--theta-max",
                "69.115038",
                "--no-timestamp",
                "--out",
                dir.to_str().unwrap(),
            ])
            .status()
            .expect("binary runs");
        assert!(status.success(), "wakk run failed");
    }
    let a = std::fs::read(dirs[0].join("wakk_report.json")).unwrap();
    let b = std::fs::read(dirs[1].join("wakk_report.json")).unwrap();
    let ha = std::fs::read(dirs[0].join("hull.json")).unwrap();
    let hb = std::fs::read(dirs[1].join("hull.json")).unwrap();
    let _ = std::fs::remove_dir_all(&base);
    let ok = a == b && ha == hb;
    assert!(report(
        "report determinism",
        ok,
        &format!(
            "fixed seed -> byte-identical reports ({} bytes) and hull exports ({} bytes)",
            a.len(),
            ha.len()
        )
    ));
}
