//! Acceptance suite: one test per release criterion, each printing a
//! single PASS line with the measured quantities (run with
//! `cargo test --test acceptance -- --nocapture` to see them).

use std::time::Instant;

use monoflow_core::diagnostics::{
    decay_products, detect_transient, fit_exponential_rate, fit_loglog_slope, gap_function,
    monotonicity_violations, primal_dual_metrics, FitWindow,
};
use monoflow_core::flow::{energy_continuous, integrate, EnergyParams, IntegratorConfig};
use monoflow_core::linalg::{self, Matrix};
use monoflow_core::operator::{zero_of_affine, Operator};
use monoflow_core::presets;
use monoflow_core::schedule::{check_growth_continuous, check_growth_discrete, GridSpec};
use monoflow_core::stepper::{
    energy_discrete, resolvent, run_discrete, DiscreteConfig, ResolventConfig, ResolventMethod,
};
use monoflow_core::{BetaSchedule, SolverParams, Trajectory};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn example1_zero() -> Vec<f64> {
    presets::example1().known_solution_stacked().unwrap()
}

/// Continuous run of the first benchmark problem from rest at the origin.
fn run_example1_continuous(p: &SolverParams, s: &BetaSchedule, cfg: &IntegratorConfig) -> Trajectory {
    let op = presets::example1().operator();
    let z0 = vec![0.0; 6];
    integrate(&op, s, p, cfg, &z0, &z0).expect("integration succeeds")
}

#[test]
fn criterion_01_known_solution_anchor() {
    // warm-up so the timed section measures the operation, not first-touch costs
    let _ = presets::example1().operator().evaluate(&example1_zero()).unwrap();

    let start = Instant::now();
    let problem = presets::example1();
    let op = problem.operator();
    let z_star = problem.known_solution_stacked().unwrap();
    let v = op.evaluate(&z_star).unwrap();
    let norm = linalg::norm(&v);
    let elapsed = start.elapsed();

    assert!(norm <= 1e-12, "|V(x*, l*)| = {norm}");
    assert!(elapsed.as_secs_f64() < 1e-3, "took {elapsed:?}");
    println!(
        "acceptance 01 known-solution anchor: PASS (|V| = {norm:.3e}, {:.1} us)",
        elapsed.as_secs_f64() * 1e6
    );
}

/// The criterion-2 sweep: benchmark-1 continuous runs at
/// `alpha = 8, theta = 1/4, beta = 1` for `r` in `{0.2, 0.6, 1.0}`,
/// returning `(r, fitted last-decade slope of f_gap)`.
fn polynomial_rate_slopes() -> Vec<(f64, f64)> {
    let z_star = example1_zero();
    let problem = presets::example1();
    let s = BetaSchedule::constant(1.0).unwrap();

    let mut slopes = Vec::new();
    for &r in &[0.2, 0.6, 1.0] {
        let p = SolverParams::new(r, 8.0, 0.25);
        // theta = 1/4 = 2/alpha sits exactly on the r < 1 admissibility
        // boundary, so these runs are forced
        let cfg = IntegratorConfig::adaptive(1e-9, 1000.0).with_samples(2000).with_force();
        let traj = run_example1_continuous(&p, &s, &cfg);

        let taus = traj.taus();
        let f_gap: Vec<f64> = traj
            .samples
            .iter()
            .map(|smp| {
                let m = primal_dual_metrics(&smp.z[..4], &smp.z[4..], &problem).unwrap();
                assert!(m.lagrangian_gap >= -1e-12, "lagrangian gap {}", m.lagrangian_gap);
                m.f_gap.max(1e-300)
            })
            .collect();
        let fit = fit_loglog_slope(&taus, &f_gap, FitWindow::LastDecade, "f_gap").unwrap();
        // gap function stays nonnegative along the run
        for smp in &traj.samples {
            assert!(gap_function(&smp.z, &z_star, &smp.v) >= -1e-12);
        }
        slopes.push((r, fit.slope));
    }
    slopes
}

#[test]
fn criterion_02_continuous_polynomial_rates() {
    let start = Instant::now();
    let slopes = polynomial_rate_slopes();
    for &(r, slope) in &slopes {
        assert!(slope <= -2.0 * r + 0.3, "r={r}: slope {slope} vs bound {}", -2.0 * r + 0.3);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "acceptance 02 continuous polynomial rates: PASS (slopes r=0.2: {:.3}, r=0.6: {:.3}, r=1.0: {:.3}; {:.2} s)",
        slopes[0].1,
        slopes[1].1,
        slopes[2].1,
        elapsed.as_secs_f64()
    );
}

/// Companion clause to criterion 2: the fitted slopes should order
/// strictly by `r`.
///
/// KNOWN RED. On this strongly convex benchmark the trajectories for
/// `r < 1` decay superpolynomially (the operator-derivative damping makes
/// the slow mode contract like `exp(-t^{1-r}/(theta (1-r)))`), so the
/// objective gap crosses the f64 resolution floor near `t ~ 40-100`,
/// long before the mandated fit window `[100, 1000]`. The tail slopes
/// for `r = 0.2` and `r = 0.6` therefore measure the solver's noise
/// floor, not a convergence rate, and do not order by `r`: the `r = 0.6`
/// noise floor happens to fall steeper than the genuine `t^{-1/theta}`
/// decay of the `r = 1` run. Verified against an independent fixed-step
/// integration of the original second-order form (agreement to five
/// digits at `t = 30`, where `f_gap(r=0.6) ~ 1e-5` is already five
/// orders below `f_gap(r=1)` -- the early-phase ordering inverts before
/// the window begins).
#[test]
fn criterion_02_slope_ordering_in_r() {
    let slopes = polynomial_rate_slopes();
    assert!(
        slopes[0].1 > slopes[1].1 && slopes[1].1 > slopes[2].1,
        "slopes do not order strictly by r: {slopes:?} (tail slopes for r < 1 sit on the f64 noise floor; see test doc)"
    );
    println!("acceptance 02b slope ordering in r: PASS ({slopes:?})");
}

#[test]
fn criterion_03_continuous_exponential_rate() {
    let start = Instant::now();
    let p = SolverParams::new(0.5, 8.0, 1.0 / 3.0).with_delta(2.0);
    let s = BetaSchedule::exponential_continuous(0.5, 1.0 / 3.0, 2.0).unwrap();
    let cfg = IntegratorConfig::adaptive(1e-9, 50.0).with_samples(2000);
    let traj = run_example1_continuous(&p, &s, &cfg);

    let taus = traj.taus();
    let norms: Vec<f64> = traj.operator_norms().iter().map(|v| v.max(1e-300)).collect();
    let fit = fit_exponential_rate(&taus, &norms, 0.5, FitWindow::LastDecade, "norm_v").unwrap();
    // expected decay coefficient is 1/theta - delta = 1, with 20% slack
    assert!(fit.slope <= -0.8, "slope {}", fit.slope);

    let z_star = example1_zero();
    let products = decay_products(&traj, &z_star, None).unwrap();
    let transient =
        detect_transient(&products.operator, 50, 1e-12 * products.operator[0]).expect("transient");
    let ratio = products.operator.last().unwrap() / products.operator[transient];
    assert!(ratio <= 0.01, "decay product ratio {ratio}");

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "acceptance 03 continuous exponential rate: PASS (slope {:.3}, product ratio {ratio:.2e}; {:.2} s)",
        fit.slope,
        elapsed.as_secs_f64()
    );
}

/// The criterion-4 run, shared with the discrete half of criterion 7.
fn discrete_benchmark_run() -> Trajectory {
    let op = presets::example1().operator();
    let p = SolverParams::new(1.0, 8.0, 0.24);
    let s = BetaSchedule::constant(1.0).unwrap();
    let z0 = vec![0.0; 6];
    run_discrete(&op, &s, &p, &z0, &z0, &DiscreteConfig::new(100_000)).expect("discrete run")
}

#[test]
fn criterion_04_discrete_decay_trend() {
    let start = Instant::now();
    let traj = discrete_benchmark_run();
    let z_star = example1_zero();
    let products = decay_products(&traj, &z_star, None).unwrap();

    let at = |k: f64| -> usize {
        products.tau.iter().position(|t| *t >= k).expect("index present")
    };
    let idx100 = at(100.0);
    assert_eq!(products.tau[idx100], 100.0);

    // k^2 |V| bounded: finite everywhere and no larger late than early
    let v_prod = &products.operator;
    assert!(v_prod.iter().all(|x| x.is_finite()));
    let early_max = v_prod[..at(10_000.0)].iter().cloned().fold(0.0, f64::max);
    let late_max = v_prod[at(10_000.0)..].iter().cloned().fold(0.0, f64::max);
    assert!(late_max <= early_max, "late max {late_max} vs early {early_max}");

    let terminal = *v_prod.last().unwrap();
    let ratio = terminal / v_prod[idx100];
    assert!(ratio <= 0.05, "terminal/k=100 ratio {ratio}");

    // k |z^k - z^{k-1}| bounded
    let steps = products.step.as_ref().unwrap();
    assert!(steps.iter().all(|x| x.is_finite()));
    let early_step = steps[..at(10_000.0)].iter().cloned().fold(0.0, f64::max);
    let late_step = steps[at(10_000.0)..].iter().cloned().fold(0.0, f64::max);
    assert!(late_step <= early_step, "late step max {late_step} vs early {early_step}");

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "acceptance 04 discrete decay trend: PASS (k^2|V| terminal ratio {ratio:.2e}, max k|dz| {:.3e}; {:.2} s)",
        early_step.max(late_step),
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_05_resolvent_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20250810);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.gen_range(2..=20usize);
        // S PSD + K skew
        let r_mat = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let b_mat = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let s_mat = r_mat.transpose().matmul(&r_mat);
        let m = Matrix::from_fn(n, n, |i, j| {
            s_mat[(i, j)] / n as f64 + 0.5 * (b_mat[(i, j)] - b_mat[(j, i)])
        });
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let op = Operator::affine(m, q).unwrap();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();

        for gamma in [1e-3, 1.0, 1e3] {
            let direct_cfg =
                ResolventConfig { method: ResolventMethod::DirectAffine, ..Default::default() };
            let newton_cfg =
                ResolventConfig { method: ResolventMethod::Newton, ..Default::default() };
            let (zd, _) = resolvent(&op, gamma, &w, &direct_cfg).unwrap();
            let (zn, _) = resolvent(&op, gamma, &w, &newton_cfg).unwrap();
            let diff = linalg::norm(&linalg::sub(&zd, &zn));
            worst = worst.max(diff);
            assert!(diff <= 1e-10, "n={n} gamma={gamma}: diff {diff}");
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!(
        "acceptance 05 resolvent oracle equivalence: PASS (worst diff {worst:.2e} over 150 solves; {:.2} s)",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_06_rearrangement_identity() {
    let op = presets::example1().operator();
    let p = SolverParams::new(1.0, 8.0, 0.24);
    let s = BetaSchedule::constant(1.0).unwrap();
    let z0 = vec![0.0; 6];
    let cfg = DiscreteConfig::new(1000).with_stride(1);
    let traj = run_discrete(&op, &s, &p, &z0, &z0, &cfg).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let idx = rng.gen_range(1..traj.len() - 1);
        let smp = &traj.samples[idx];
        let next = &traj.samples[idx + 1];
        let k = smp.tau as usize;
        let kf = k as f64;
        let z_prev = linalg::sub(&smp.z, smp.velocity.as_ref().unwrap());
        let beta_k = s.seq(k).unwrap();
        let beta_km1 = s.seq(k.max(2) - 1).unwrap();
        let d = p.alpha - p.r * kf.powf(p.r - 1.0) + (kf + 1.0).powf(p.r);

        let mut residual: f64 = 0.0;
        let mut scale: f64 = 0.0;
        #[allow(clippy::needless_range_loop)]
        for i in 0..6 {
            let lhs = 2.0 * d * (next.z[i] - smp.z[i])
                - 2.0 * kf.powf(p.r) * (smp.z[i] - z_prev[i])
                + 2.0 * p.theta
                    * ((kf + 1.0).powf(2.0 * p.r) * beta_k - kf.powf(2.0 * p.r) * beta_km1)
                    * next.v[i]
                + 2.0 * p.theta * kf.powf(2.0 * p.r) * beta_km1 * (next.v[i] - smp.v[i]);
            let rhs = 2.0
                * kf.powf(p.r)
                * ((2.0 * p.r * p.theta * kf.powf(p.r - 1.0) - 1.0) * beta_k
                    + p.theta * kf.powf(p.r) * (beta_k - beta_km1))
                * next.v[i];
            residual = residual.max((lhs - rhs).abs());
            scale = scale.max(lhs.abs()).max(rhs.abs());
        }
        let rel = residual / scale.max(1.0);
        worst = worst.max(rel);
        assert!(rel <= 1e-9, "k={k}: relative residual {rel}");
    }
    println!("acceptance 06 rearrangement identity: PASS (worst relative residual {worst:.2e})");
}

#[test]
fn criterion_07_energy_monotonicity() {
    let start = Instant::now();
    let z_star = example1_zero();

    // continuous side: r = 1 benchmark settings
    let p = SolverParams::new(1.0, 8.0, 0.25);
    let s = BetaSchedule::constant(1.0).unwrap();
    let cfg = IntegratorConfig::adaptive(1e-9, 1000.0).with_samples(2000);
    let traj = run_example1_continuous(&p, &s, &cfg);
    let (e1, e2) = EnergyParams::default_pair(&p);
    assert!((e1.lambda - 1.5).abs() < 1e-12, "nominal lambda = (alpha-1)/2 - 1/(2 theta)");
    let mut continuous_transients = Vec::new();
    for e in [e1, e2] {
        let energies: Vec<f64> = traj
            .samples
            .iter()
            .map(|smp| energy_continuous(smp, &s, &p, &e, &z_star).unwrap())
            .collect();
        let transient =
            detect_transient(&energies, 50, 1e-12 * energies[0]).expect("energy transient");
        let tol = 1e-8 * energies[transient];
        let violations = monotonicity_violations(&energies, transient, tol);
        assert_eq!(violations, 0, "lambda={}: {violations} violations", e.lambda);
        continuous_transients.push(traj.samples[transient].tau);
    }

    // discrete side: the criterion-4 run with rho = 1
    let p_d = SolverParams::new(1.0, 8.0, 0.24);
    let traj_d = discrete_benchmark_run();
    let op = presets::example1().operator();
    let (d1, d2) = EnergyParams::default_pair(&p_d);
    let mut discrete_transients = Vec::new();
    for e in [d1, d2] {
        let energies: Vec<f64> = traj_d
            .samples
            .iter()
            .map(|smp| {
                let z_prev = linalg::sub(&smp.z, smp.velocity.as_ref().unwrap());
                energy_discrete(smp.tau as usize, &smp.z, &z_prev, &op, &s, &p_d, &e, &z_star)
                    .unwrap()
            })
            .collect();
        let transient =
            detect_transient(&energies, 50, 1e-12 * energies[0]).expect("energy transient");
        let tol = 1e-8 * energies[transient];
        let violations = monotonicity_violations(&energies, transient, tol);
        assert_eq!(violations, 0, "lambda={}: {violations} violations", e.lambda);
        discrete_transients.push(traj_d.samples[transient].tau);
    }

    let elapsed = start.elapsed();
    println!(
        "acceptance 07 energy monotonicity: PASS (continuous transients at t = {continuous_transients:?}, discrete at k = {discrete_transients:?}; {:.2} s)",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_08_growth_validators() {
    // exponential continuous: g(t) = 1/theta - delta identically
    let p = SolverParams::new(0.5, 1.0 / 3.0, 1.0 / 3.0).with_delta(2.0);
    let p = SolverParams { alpha: 8.0, ..p };
    let s = BetaSchedule::exponential_continuous(0.5, 1.0 / 3.0, 2.0).unwrap();
    let expected = 1.0;
    let mut t = p.t0;
    let ratio = (1e6f64).powf(1.0 / 9999.0);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let g = t.powf(p.r) * (s.log_derivative(t).unwrap() + 2.0 * p.r / t);
        worst = worst.max(((g - expected) / expected).abs());
        t *= ratio;
    }
    assert!(worst <= 1e-12, "max relative deviation {worst}");

    // exponential discrete: g_k within 1e-2 of the limit for k >= 1e3
    let limit = 0.5; // 1/(2 theta) - delta with theta = 0.25, delta = 1.5
    let sd = BetaSchedule::exponential_discrete(0.5, 0.25, 1.5).unwrap();
    let mut worst_d: f64 = 0.0;
    for k in 1000..=10_000usize {
        let kf = k as f64;
        let g = kf.powf(0.5) * (sd.relative_increment(k).unwrap() + 1.0 / kf);
        worst_d = worst_d.max((g - limit).abs());
    }
    assert!(worst_d <= 1e-2, "max |g_k - limit| = {worst_d}");

    // constant / power closed-form sups match the grid maxima
    for (schedule, r, theta) in [
        (BetaSchedule::constant(1.0).unwrap(), 0.5, 0.25),
        (BetaSchedule::constant(2.5).unwrap(), 1.0, 0.25),
        (BetaSchedule::power(1.0, 1.0).unwrap(), 0.5, 0.3),
        (BetaSchedule::power(2.0, 0.5).unwrap(), 1.0, 0.1),
    ] {
        let params = SolverParams::new(r, 8.0, theta);
        let rep = check_growth_continuous(&schedule, &params, &GridSpec::default()).unwrap();
        assert!(rep.closed_form);
        let rel = (rep.sup - rep.grid_sup).abs() / rep.sup.abs().max(1e-300);
        assert!(rel <= 1e-12, "closed-form {} vs grid {}", rep.sup, rep.grid_sup);
    }

    println!(
        "acceptance 08 growth validators: PASS (exp continuous dev {worst:.2e}, exp discrete dev {worst_d:.2e})"
    );
}

#[test]
fn criterion_09_inequality_suite() {
    let start = Instant::now();
    // six power-difference inequalities: zero violations over the sweep
    let mut checked = 0usize;
    for k in 1..=10_000usize {
        for &r in &[0.0, 0.25, 0.5, 0.75, 1.0] {
            for &sigma in &[-2.0, -1.0, -0.5] {
                let rep = monoflow_core::schedule::aux_inequalities(k, r, sigma);
                assert!(rep.all_hold(), "k={k} r={r} sigma={sigma}: {:?}", rep.slacks);
                checked += 1;
            }
        }
    }

    // sequence inequalities for the discrete exponential family from the
    // validator-reported onset
    let p = SolverParams::new(0.5, 8.0, 0.25).with_delta(1.0);
    let s = BetaSchedule::exponential_discrete(0.5, 0.25, 1.0).unwrap();
    let growth = check_growth_discrete(&s, &p, 10_000, 0.0).unwrap();
    let k0 = growth.first_passing_k0.expect("passing onset");
    for k in k0..=10_000 {
        let rep = monoflow_core::schedule::sequence_inequalities(&s, &p, k).unwrap();
        assert!(rep.all_hold(), "k={k}: {rep:?}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!(
        "acceptance 09 inequality suite: PASS ({checked} aux checks, sequence checks from k0 = {k0}; {:.2} s)",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_10_integrator_order() {
    let op = Operator::affine(Matrix::identity(1), vec![0.0]).unwrap();
    let p = SolverParams::new(1.0, 8.0, 0.25);
    let s = BetaSchedule::constant(1.0).unwrap();
    let t_end = 6.0;
    let solve = |h: f64| {
        let cfg = IntegratorConfig::rk4(h, t_end).with_samples(2);
        integrate(&op, &s, &p, &cfg, &[1.0], &[0.0]).unwrap().last().unwrap().z[0]
    };
    let reference = solve(1e-4);
    let e1 = (solve(0.05) - reference).abs();
    let e2 = (solve(0.025) - reference).abs();
    let ratio = e1 / e2;
    assert!((12.0..=20.0).contains(&ratio), "halving ratio {ratio} (errors {e1:.3e}, {e2:.3e})");
    println!("acceptance 10 integrator order: PASS (halving ratio {ratio:.2})");
}

#[test]
fn criterion_11_saddle_schedule_ordering() {
    let start = Instant::now();
    let op = presets::example2(10).unwrap();
    let z_star = zero_of_affine(&op).unwrap();
    let r = 0.5;
    let theta = 0.25;
    let horizon = 50.0;

    let runs = [
        ("constant", BetaSchedule::constant(1.0).unwrap()),
        ("power", BetaSchedule::power(1.0, 1.0).unwrap()),
        ("exponential", BetaSchedule::exponential_continuous(r, theta, 3.0).unwrap()),
    ];
    let mut terminal = Vec::new();
    for (name, s) in runs {
        let p = SolverParams::new(r, 8.0, theta).with_delta(3.0);
        // theta = 2/alpha boundary again: forced
        let cfg = IntegratorConfig::adaptive(1e-10, horizon).with_samples(1500).with_force();
        let z0 = vec![0.0; 20];
        let traj = integrate(&op, &s, &p, &cfg, &z0, &z0).expect("run");
        let norms = traj.operator_norms();
        assert!(norms.iter().all(|v| v.is_finite()));
        let transient = detect_transient(&norms, 50, 1e-8 * norms[0]).expect("transient");
        let tol = 1e-8 * norms[transient];
        assert_eq!(
            monotonicity_violations(&norms, transient, tol),
            0,
            "{name}: |V| not decreasing after transient"
        );
        // the restricted gap stays nonnegative for this monotone testbed
        for smp in &traj.samples {
            assert!(gap_function(&smp.z, &z_star, &smp.v) >= -1e-12);
        }
        terminal.push((name, *norms.last().unwrap()));
    }
    assert!(
        terminal[2].1 < terminal[1].1 && terminal[1].1 < terminal[0].1,
        "expected exponential < power < constant, got {terminal:?}"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 20.0, "took {elapsed:?}");
    println!(
        "acceptance 11 saddle schedule ordering: PASS (terminal |V|: constant {:.2e} > power {:.2e} > exponential {:.2e}; {:.2} s)",
        terminal[0].1,
        terminal[1].1,
        terminal[2].1,
        elapsed.as_secs_f64()
    );
}
