//! Engine results against independent reference computations: closed forms,
//! special functions and dense linear algebra built here from scratch.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use collapse_core::hilbert::{Grid1D, Propagator, StateVector, C64};
use collapse_core::localization::{degree_probability, LocalizationThreshold, Region1D};
use collapse_core::scenarios::{
    run_eprb, run_successive_spins, run_transit, run_two_slit, EprbConfig, GaussianSpec, ScenarioConfig, SpinsConfig,
    TransitConfig,
};
use collapse_core::spin::{self, Axis};
use collapse_core::two_boundary::{
    check_unitary_collapse, max_conditional_localization, max_sum_localization, objective_spectrum,
    time_reversed_problem, Objective, TwoBoundaryProblem,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erf;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Free propagator `exp(-i k^2 t / 2m)` as an explicit dense matrix summed
/// mode by mode.
fn dense_free_propagator(grid: &Grid1D, mass: f64, t: f64) -> DMatrix<C64> {
    let n = grid.n_points();
    let dk = 2.0 * PI / grid.length();
    let ks: Vec<f64> = (0..n).map(|j| if j < n / 2 { j as f64 } else { j as f64 - n as f64 } * dk).collect();
    let mut kernel = vec![C64::new(0.0, 0.0); n];
    for (d, slot) in kernel.iter_mut().enumerate() {
        let dist = d as f64 * grid.dx();
        *slot = ks.iter().map(|k| C64::from_polar(1.0, k * dist - k * k * t / (2.0 * mass))).sum::<C64>() / n as f64;
    }
    DMatrix::from_fn(n, n, |i, j| kernel[(i + n - j) % n])
}

fn mask(grid: &Grid1D, lo: f64, hi: f64) -> Vec<usize> {
    (0..grid.n_points()).filter(|&i| grid.x(i) >= lo && grid.x(i) < hi).collect()
}

/// Top eigenvalue of `P_A U^dagger P_B U P_A` from a dense Hermitian solve.
fn dense_concentration(u: &DMatrix<C64>, a: &[usize], b: &[usize]) -> f64 {
    let g = DMatrix::from_fn(b.len(), a.len(), |r, col| u[(b[r], a[col])]);
    let k = g.adjoint() * g;
    k.symmetric_eigen().eigenvalues.max()
}

fn dense_sum_top(u: &DMatrix<C64>, a: &[usize], b: &[usize]) -> f64 {
    let n = u.nrows();
    let mut pa = DMatrix::<C64>::zeros(n, n);
    for &i in a {
        pa[(i, i)] = c(1.0);
    }
    let mut pb = DMatrix::<C64>::zeros(n, n);
    for &i in b {
        pb[(i, i)] = c(1.0);
    }
    let m = &pa + u.adjoint() * pb * u;
    let m = (&m + m.adjoint()) * c(0.5);
    m.symmetric_eigen().eigenvalues.max()
}

#[test]
fn gaussian_mass_in_one_sigma_matches_erf() {
    let g = Grid1D::new(4096, -16.0, 16.0).unwrap();
    let psi = g.gaussian(0.0, 1.0, 0.0).unwrap();
    let inside = degree_probability(&psi, &g, &Region1D::interval(-1.0, 1.0).unwrap()).unwrap();
    let expected = erf(FRAC_1_SQRT_2);
    assert!((inside - expected).abs() < 1e-5, "{inside} vs {expected}");
    assert!((inside - 0.6827).abs() < 1e-4);
}

#[test]
fn conditional_spreading_against_dense_solve() {
    let g = Grid1D::new(512, -16.0, 16.0).unwrap();
    let (ra, rb) = (Region1D::interval(-1.0, 1.0).unwrap(), Region1D::interval(3.0, 5.0).unwrap());
    let p = TwoBoundaryProblem::free_particle(g, ra, rb, 0.0, 1.0, 1.0, LocalizationThreshold::DEFAULT, Objective::Conditional)
        .unwrap();
    let engine = max_conditional_localization(&p).unwrap();
    let u = dense_free_propagator(&g, 1.0, 1.0);
    let oracle = dense_concentration(&u, &mask(&g, -1.0, 1.0), &mask(&g, 3.0, 5.0));
    assert!((engine.lambda_b - oracle).abs() < 5e-7, "{} vs {oracle}", engine.lambda_b);
    assert!(engine.lambda_b < 1.0 - 1e-3);
}

#[test]
fn sum_objective_against_dense_solve() {
    let g = Grid1D::new(256, -16.0, 16.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..3 {
        let a0: f64 = rng.gen_range(-12.0..0.0);
        let b0: f64 = rng.gen_range(0.0..10.0);
        let (wa, wb) = (rng.gen_range(1.0..4.0), rng.gen_range(1.0..4.0));
        let dt = rng.gen_range(0.1..2.0);
        let p = TwoBoundaryProblem::free_particle(
            g,
            Region1D::interval(a0, a0 + wa).unwrap(),
            Region1D::interval(b0, b0 + wb).unwrap(),
            0.0,
            dt,
            1.0,
            LocalizationThreshold::DEFAULT,
            Objective::Sum,
        )
        .unwrap();
        let engine = max_sum_localization(&p).unwrap();
        let u = dense_free_propagator(&g, 1.0, dt);
        let oracle = dense_sum_top(&u, &mask(&g, a0, a0 + wa), &mask(&g, b0, b0 + wb));
        assert!((engine.objective_value - oracle).abs() < 1e-8, "{} vs {oracle}", engine.objective_value);
        assert!(engine.objective_value < 2.0 - 1e-3);
        assert!((engine.lambda_a + engine.lambda_b - engine.objective_value).abs() < 1e-8);
    }
}

fn qubit_problem(theta: f64) -> TwoBoundaryProblem {
    let g = Grid1D::new(2, 0.0, 2.0).unwrap();
    let u = spin::rotation(&spin::Y, theta).unwrap().matrix();
    let u = Propagator::from_matrix(u, 0.0, 1.0).unwrap();
    let zero = Region1D::interval(0.0, 0.5).unwrap();
    TwoBoundaryProblem::new(g, zero.clone(), zero, 0.0, 1.0, u, LocalizationThreshold::DEFAULT, Objective::Sum).unwrap()
}

#[test]
fn qubit_sum_closed_form() {
    let r = max_sum_localization(&qubit_problem(PI / 2.0)).unwrap();
    assert!((r.objective_value - (1.0 + (PI / 4.0).cos())).abs() < 1e-10);
    assert!((r.objective_value - 1.70711).abs() < 1e-5);
}

#[test]
fn coincident_boundaries_and_identity() {
    let g = Grid1D::new(64, -8.0, 8.0).unwrap();
    let a = Region1D::interval(-1.0, 1.0).unwrap();
    let id = Propagator::identity(64, 0.0);
    let id = Propagator::from_matrix(id.matrix(), 0.0, 0.0).unwrap();
    let p = TwoBoundaryProblem::new(g, a.clone(), a.clone(), 0.0, 0.0, id.clone(), LocalizationThreshold::DEFAULT, Objective::Sum)
        .unwrap();
    let r = max_sum_localization(&p).unwrap();
    assert!((r.objective_value - 2.0).abs() < 1e-12);
    assert!((r.lambda_a - 1.0).abs() < 1e-12 && (r.lambda_b - 1.0).abs() < 1e-12);

    // B contains A, lambda = 0.5: feasible with a state inside A
    let big = Region1D::interval(-3.0, 3.0).unwrap();
    let half = LocalizationThreshold::new(0.5).unwrap();
    let p = TwoBoundaryProblem::new(g, a.clone(), big, 0.0, 0.0, id.clone(), half, Objective::Sum).unwrap();
    let v = check_unitary_collapse(&p).unwrap();
    assert!(v.feasible);
    let w = v.witness.unwrap();
    assert!((degree_probability(&w, &g, &a).unwrap() - 1.0).abs() < 1e-9);

    // disjoint supports at lambda = 1 cannot both hold
    let other = Region1D::interval(2.0, 4.0).unwrap();
    let one = LocalizationThreshold::new(1.0).unwrap();
    let p = TwoBoundaryProblem::new(g, a, other, 0.0, 0.0, id, one, Objective::Sum).unwrap();
    assert!(!check_unitary_collapse(&p).unwrap().feasible);
}

/// Probability that a normal variable with standard deviation `s` lies
/// within `h` of its mean.
fn normal_within(h: f64, s: f64) -> f64 {
    erf(h / (s * 2f64.sqrt()))
}

#[test]
fn boosted_gaussian_makes_transit_feasible() {
    let (sigma, mass, k0, dt): (f64, f64, f64, f64) = (1.0, 1.0, 4.0, 1.0);
    let v = k0 / mass;
    let sigma_t = (sigma * sigma + (dt / (2.0 * mass * sigma)).powi(2)).sqrt();
    let la = normal_within(2.0 * sigma, sigma);
    let lb = normal_within(2.0 * sigma, sigma_t);
    assert!(la.min(lb) >= 0.9, "oracle says the packet itself is a witness");

    let cfg = TransitConfig {
        grid: Grid1D::new(2048, -16.0, 16.0).unwrap(),
        mass,
        region_a: Region1D::interval(-2.0 * sigma, 2.0 * sigma).unwrap(),
        region_b: Region1D::interval(v * dt - 2.0 * sigma, v * dt + 2.0 * sigma).unwrap(),
        t_a: 0.0,
        t_b: dt,
        lambda: LocalizationThreshold::new(0.9).unwrap(),
        gaussian: GaussianSpec { x0: 0.0, sigma, k0 },
        variance_samples: 5,
        series_points: 3,
        ensemble_size: 4,
        seed: 0,
    };
    let r = run_transit(&cfg).unwrap();
    assert!((r.scalar_f64("gaussian_lambda_a").unwrap() - la).abs() < 1e-4);
    assert!((r.scalar_f64("gaussian_lambda_b").unwrap() - lb).abs() < 1e-4);
    assert_eq!(r.scalar_bool("feasible"), Some(true));
    assert_eq!(r.scalar_bool("witness_verified"), Some(true));
}

#[test]
fn stationary_gaussian_distant_b_is_infeasible() {
    let cfg = TransitConfig {
        grid: Grid1D::new(512, -16.0, 16.0).unwrap(),
        mass: 1.0,
        region_a: Region1D::interval(-1.0, 1.0).unwrap(),
        region_b: Region1D::interval(6.0, 8.0).unwrap(),
        t_a: 0.0,
        // reaching x = 6 in 0.05 needs k = 120, beyond the grid's pi / dx ~ 50
        t_b: 0.05,
        lambda: LocalizationThreshold::new(0.9).unwrap(),
        gaussian: GaussianSpec { x0: 0.0, sigma: 0.5, k0: 0.0 },
        variance_samples: 5,
        series_points: 3,
        ensemble_size: 4,
        seed: 0,
    };
    let r = run_transit(&cfg).unwrap();
    assert_eq!(r.scalar_bool("feasible"), Some(false));
    let u = dense_free_propagator(&cfg.grid, 1.0, 0.05);
    let oracle = dense_sum_top(&u, &mask(&cfg.grid, -1.0, 1.0), &mask(&cfg.grid, 6.0, 8.0));
    assert!((r.scalar_f64("sum_objective").unwrap() - oracle).abs() < 1e-8);
}

#[test]
fn variance_growth_matches_free_gaussian() {
    let (sigma, mass) = (0.5, 1.0);
    let cfg = TransitConfig {
        grid: Grid1D::new(1024, -32.0, 32.0).unwrap(),
        mass,
        region_a: Region1D::interval(-1.0, 1.0).unwrap(),
        region_b: Region1D::interval(-1.0, 1.0).unwrap(),
        t_a: 0.0,
        t_b: 2.0,
        lambda: LocalizationThreshold::DEFAULT,
        gaussian: GaussianSpec { x0: 0.0, sigma, k0: 1.0 },
        variance_samples: 5,
        series_points: 2,
        ensemble_size: 1,
        seed: 0,
    };
    let r = run_transit(&cfg).unwrap();
    let s = r.series("variance").unwrap();
    let (ts, measured) = (s.column("t").unwrap(), s.column("variance").unwrap());
    assert_eq!(ts.len(), 5);
    for (t, m) in ts.iter().zip(measured) {
        let expected = sigma * sigma + (t / (2.0 * mass * sigma)).powi(2);
        assert!((m - expected).abs() / expected < 1e-2, "t = {t}: {m} vs {expected}");
    }
}

#[test]
fn standard_two_slit_fringes() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/two_slit.json")).unwrap();
    let ScenarioConfig::TwoSlit(cfg) = ScenarioConfig::from_json(&text).unwrap() else { panic!("not a two-slit config") };
    let r = run_two_slit(&cfg).unwrap();
    // lambda_dB * L / d for any speed v: (2 pi / m v) (v T) / d
    let v = 3.0;
    let d = 0.5 * (cfg.slits[1][0] + cfg.slits[1][1]) - 0.5 * (cfg.slits[0][0] + cfg.slits[0][1]);
    let predicted = (2.0 * PI / (cfg.mass * v)) * (v * cfg.propagation_time) / d;
    let spacing = r.scalar_f64("fringe_spacing").unwrap();
    assert!((spacing - predicted).abs() / predicted < 0.05, "{spacing} vs {predicted}");
    assert!(r.scalar_f64("visibility").unwrap() > 0.5);
    assert!(r.scalar_f64("density_asymmetry").unwrap() < 1e-9);
}

fn random_axis(rng: &mut ChaCha8Rng) -> Axis {
    loop {
        let v: Axis = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn eprb(a: Axis, b: Axis) -> EprbConfig {
    EprbConfig {
        alice_axis: a,
        bob_axis: b,
        alice_field: [0.0; 3],
        bob_field: [0.0; 3],
        coupling: 0.0,
        t_emit: 0.0,
        t_measure: 1.0,
        random_pairs: 0,
        seed: 0,
    }
}

/// `<psi| (a.sigma) (x) (b.sigma) |psi>` on the singlet, written out.
fn singlet_correlation(a: &Axis, b: &Axis) -> f64 {
    let s = |n: &Axis| {
        DMatrix::from_row_slice(2, 2, &[
            c(n[2]),
            C64::new(n[0], -n[1]),
            C64::new(n[0], n[1]),
            c(-n[2]),
        ])
    };
    let (sa, sb) = (s(a), s(b));
    let op = DMatrix::from_fn(4, 4, |i, j| sa[(i / 2, j / 2)] * sb[(i % 2, j % 2)]);
    let psi = nalgebra::DVector::from_vec(vec![c(0.0), c(FRAC_1_SQRT_2), c(-FRAC_1_SQRT_2), c(0.0)]);
    psi.dotc(&(op * &psi)).re
}

#[test]
fn singlet_correlations_from_born_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let (a, b) = (random_axis(&mut rng), random_axis(&mut rng));
        let r = run_eprb(&eprb(a, b)).unwrap();
        let e = r.scalar_f64("correlation").unwrap();
        assert!((e - singlet_correlation(&a, &b)).abs() < 1e-12);
        assert!((e + spin::dot(&a, &b)).abs() < 1e-9);
    }
    let r = run_eprb(&eprb(spin::X, spin::Y)).unwrap();
    for k in ["p_up_up", "p_up_down", "p_down_up", "p_down_down"] {
        assert!((r.scalar_f64(k).unwrap() - 0.25).abs() < 1e-12);
    }
}

#[test]
fn spin_overlaps_and_bloch_angles() {
    let up_x = spin::axis_state(&spin::X, true).unwrap();
    let up_z = spin::axis_state(&spin::Z, true).unwrap();
    let overlap: C64 = up_z.inner(&up_x).unwrap();
    assert!((overlap.norm_sqr() - 0.5).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let (a, b) = (random_axis(&mut rng), random_axis(&mut rng));
        let cfg = SpinsConfig {
            first_axis: a,
            second_axis: b,
            epsilon: 0.01,
            theta_max: PI,
            disturbance_axis: None,
            alternatives: vec![],
            t_a: 0.0,
            t_b: 1.0,
            seed: 0,
        };
        let r = run_successive_spins(&cfg).unwrap();
        let bloch = spin::dot(&a, &b).clamp(-1.0, 1.0).acos();
        assert!((r.scalar_f64("min_disturbance_angle").unwrap() - bloch).abs() < 1e-6);
        assert!((r.scalar_f64("p_second_given_first").unwrap() - (1.0 + spin::dot(&a, &b)) / 2.0).abs() < 1e-12);
        assert_eq!(r.scalar_bool("witness_history_satisfies_both"), Some(true));
    }
}

#[test]
fn reversed_problem_keeps_spectrum_and_verdict() {
    let g = Grid1D::new(64, -8.0, 8.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let a0: f64 = rng.gen_range(-7.0..5.0);
        let b0: f64 = rng.gen_range(-7.0..5.0);
        let t_a: f64 = rng.gen_range(-1.0..1.0);
        let t_b = t_a + rng.gen_range(0.0..1.0);
        let lambda = LocalizationThreshold::new(rng.gen_range(0.5..0.95)).unwrap();
        let p = TwoBoundaryProblem::free_particle(
            g,
            Region1D::interval(a0, a0 + rng.gen_range(0.5..2.0)).unwrap(),
            Region1D::interval(b0, b0 + rng.gen_range(0.5..2.0)).unwrap(),
            t_a,
            t_b,
            1.0,
            lambda,
            Objective::Sum,
        )
        .unwrap();
        let q = time_reversed_problem(&p);
        assert_eq!((q.t_a(), q.t_b()), (-t_b, -t_a));
        // dense oracle for both spectra
        let u = p.propagator().matrix();
        let ia = mask(&g, p.region_a().intervals()[0].0, p.region_a().intervals()[0].1);
        let ib = mask(&g, p.region_b().intervals()[0].0, p.region_b().intervals()[0].1);
        let forward = dense_sum_top(&u, &ia, &ib);
        let backward = dense_sum_top(&u.adjoint(), &ib, &ia);
        assert!((forward - backward).abs() < 1e-10);
        let (s1, s2) = (objective_spectrum(&p), objective_spectrum(&q));
        assert!(s1.iter().zip(&s2).all(|(x, y)| (x - y).abs() < 1e-10));
        let twice = objective_spectrum(&time_reversed_problem(&q));
        assert!(s1.iter().zip(&twice).all(|(x, y)| (x - y).abs() < 1e-10));
        assert_eq!(check_unitary_collapse(&p).unwrap().feasible, check_unitary_collapse(&q).unwrap().feasible);
    }
}

#[test]
fn witness_state_is_normalized_and_rechecks() {
    let g = Grid1D::new(256, -16.0, 16.0).unwrap();
    let p = TwoBoundaryProblem::free_particle(
        g,
        Region1D::interval(-2.0, 2.0).unwrap(),
        Region1D::interval(-1.0, 3.0).unwrap(),
        0.0,
        0.3,
        1.0,
        LocalizationThreshold::new(0.9).unwrap(),
        Objective::Sum,
    )
    .unwrap();
    let v = check_unitary_collapse(&p).unwrap();
    let w: StateVector = v.witness.expect("reachable pair");
    assert!((w.norm() - 1.0).abs() < 1e-12);
    let later = p.propagator().apply(&w).unwrap();
    let la = degree_probability(&w, &g, p.region_a()).unwrap();
    let lb = degree_probability(&later, &g, p.region_b()).unwrap();
    assert!((la - v.best_lambda_a).abs() < 1e-9 && (lb - v.best_lambda_b).abs() < 1e-9);
    assert!(la.min(lb) >= 0.9 - 1e-9);
}
