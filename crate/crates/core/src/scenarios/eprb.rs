//! Spin singlet with spin measurements by Alice and Bob.
//!
//! Joint outcome probabilities come from the Born rule on the evolved
//! 4-dimensional state. Each outcome is then pulled back to emission time
//! and the conditioned state is checked for separability.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use super::{require, ScenarioConfig};
use crate::error::Result;
use crate::hilbert::{born_probability, kron, make_propagator, tensor, Hamiltonian, Propagator, StateVector, C64};
use crate::report::{ScenarioReport, Series};
use crate::spin::{axis_matrix, axis_state, check_unit, dot, pauli, schmidt_number, Axis};

/// Singular values above this count toward the Schmidt number.
pub const SCHMIDT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EprbConfig {
    pub alice_axis: Axis,
    pub bob_axis: Axis,
    /// Local field on each particle, `H = (field . sigma) / 2`.
    #[serde(default)]
    pub alice_field: Axis,
    #[serde(default)]
    pub bob_field: Axis,
    /// Strength `J` of an interaction `J sigma_z (x) sigma_z`; non-zero
    /// couplings make the propagator non-local.
    #[serde(default)]
    pub coupling: f64,
    #[serde(default)]
    pub t_emit: f64,
    #[serde(default = "default_t_measure")]
    pub t_measure: f64,
    /// Extra random axis pairs for the correlation check.
    #[serde(default)]
    pub random_pairs: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_t_measure() -> f64 {
    1.0
}

/// `(|01> - |10>) / sqrt 2` with `|0>` = spin up along `z`.
pub fn singlet() -> StateVector {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    StateVector::new(vec![C64::new(0.0, 0.0), C64::new(h, 0.0), C64::new(-h, 0.0), C64::new(0.0, 0.0)])
        .expect("normalized")
}

fn local_hamiltonian(field: &Axis) -> nalgebra::DMatrix<C64> {
    axis_matrix(field) * C64::new(0.5, 0.0)
}

/// Joint propagator from emission to measurement.
pub fn pair_propagator(cfg: &EprbConfig) -> Result<Propagator> {
    let id = nalgebra::DMatrix::<C64>::identity(2, 2);
    let mut h = kron(&local_hamiltonian(&cfg.alice_field), &id) + kron(&id, &local_hamiltonian(&cfg.bob_field));
    if cfg.coupling != 0.0 {
        h += kron(&pauli(2), &pauli(2)) * C64::new(cfg.coupling, 0.0);
    }
    make_propagator(&Hamiltonian::Dense(h), cfg.t_emit, cfg.t_measure)
}

/// `P(s_a, s_b)` for `s = up, down`, ordered `[uu, ud, du, dd]`.
pub fn joint_probabilities(psi: &StateVector, a: &Axis, b: &Axis) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for (k, (ua, ub)) in [(true, true), (true, false), (false, true), (false, false)].into_iter().enumerate() {
        out[k] = born_probability(psi, &tensor(&axis_state(a, ua)?, &axis_state(b, ub)?))?;
    }
    Ok(out)
}

/// `E(a, b) = sum s_a s_b P(s_a, s_b)`.
pub fn correlation(p: &[f64; 4]) -> f64 {
    p[0] - p[1] - p[2] + p[3]
}

pub fn run_eprb(cfg: &EprbConfig) -> Result<ScenarioReport> {
    check_unit(&cfg.alice_axis)?;
    check_unit(&cfg.bob_axis)?;
    require(cfg.t_measure >= cfg.t_emit, || "`t_measure` must not precede `t_emit`".into())?;
    let mut report = ScenarioReport::new("eprb", cfg.seed, ScenarioConfig::Eprb(cfg.clone()).echo());
    let u = pair_propagator(cfg)?;
    let local = cfg.coupling == 0.0;
    let at_measure = u.apply(&singlet())?;

    let p = joint_probabilities(&at_measure, &cfg.alice_axis, &cfg.bob_axis)?;
    for (name, v) in ["p_up_up", "p_up_down", "p_down_up", "p_down_down"].iter().zip(p) {
        report.set(name, v);
    }
    report.set("probability_total", p.iter().sum::<f64>());
    report.set("correlation", correlation(&p));
    report.set("minus_a_dot_b", -dot(&cfg.alice_axis, &cfg.bob_axis));
    report.set("local_propagator", local);

    // backward conditioning: the state at emission that leads to each outcome
    let back = u.adjoint();
    let mut all_product = true;
    let mut schmidt = Vec::new();
    for (ua, ub) in [(true, true), (true, false), (false, true), (false, false)] {
        let outcome = tensor(&axis_state(&cfg.alice_axis, ua)?, &axis_state(&cfg.bob_axis, ub)?);
        let at_emit = back.apply(&outcome)?;
        let r = schmidt_number(&at_emit, 2, 2, SCHMIDT_TOL)?;
        all_product &= r == 1;
        schmidt.push(r);
    }
    report.set("conditioned_schmidt_numbers", &schmidt);
    report.set("conditioned_states_product", all_product);

    let mut series = Series::new("correlation", &["pair", "a_dot_b", "correlation"]);
    let mut worst = (correlation(&p) + dot(&cfg.alice_axis, &cfg.bob_axis)).abs();
    series.push(vec![0.0, dot(&cfg.alice_axis, &cfg.bob_axis), correlation(&p)]);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for k in 0..cfg.random_pairs {
        let a: [f64; 3] = UnitSphere.sample(&mut rng);
        let b: [f64; 3] = UnitSphere.sample(&mut rng);
        let e = correlation(&joint_probabilities(&at_measure, &a, &b)?);
        worst = worst.max((e + dot(&a, &b)).abs());
        series.push(vec![(k + 1) as f64, dot(&a, &b), e]);
    }
    report.set("max_correlation_deviation", worst);
    report.series.push(series);
    Ok(report)
}
