//! Two successive spin measurements along different axes.
//!
//! After the first outcome the state is spin up along `first_axis`. A
//! disturbance is a single rotation about `disturbance_axis` by at most
//! `theta_max`. The scenario asks for the smallest rotation that turns the
//! first outcome into the second one, both exactly (Bloch vectors equal) and
//! up to the second event's proximity `epsilon`.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{require, ScenarioConfig};
use crate::error::{invalid, Result};
use crate::events::{Constraint, Event, Registry};
use crate::hilbert::{born_probability, Hamiltonian, PropagatorFamily, StateVector, C64};
use crate::report::{ScenarioReport, Series};
use crate::solution_space::SolutionEnsemble;
use crate::spin::{axis_matrix, axis_observable, axis_state, check_unit, cross, dot, norm, rotation, Axis};

/// Two axes closer than this are treated as parallel.
const PARALLEL_TOL: f64 = 1e-12;
/// Slack when comparing a required angle with the budget.
const ANGLE_TOL: f64 = 1e-12;
const SCAN_STEPS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinsConfig {
    pub first_axis: Axis,
    pub second_axis: Axis,
    /// Proximity of the second event: weight on its up state at least `1 - epsilon`.
    pub epsilon: f64,
    pub theta_max: f64,
    /// Rotation axis of the disturbance. Defaults to the axis carrying
    /// `first_axis` to `second_axis` along a great circle.
    #[serde(default)]
    pub disturbance_axis: Option<Axis>,
    /// Other candidate second axes, each judged on its own.
    #[serde(default)]
    pub alternatives: Vec<Axis>,
    #[serde(default)]
    pub t_a: f64,
    #[serde(default = "default_t_b")]
    pub t_b: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_t_b() -> f64 {
    1.0
}

/// Great-circle rotation axis from `a` to `b`; any perpendicular axis when
/// they are (anti)parallel.
pub fn great_circle_axis(a: &Axis, b: &Axis) -> Axis {
    let c = cross(a, b);
    let n = norm(&c);
    if n > PARALLEL_TOL {
        return [c[0] / n, c[1] / n, c[2] / n];
    }
    let helper = if a[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let c = cross(a, &helper);
    let n = norm(&c);
    [c[0] / n, c[1] / n, c[2] / n]
}

/// Smallest `theta` in `[0, 2 pi)` with `R_n(theta) a = b` on the Bloch
/// sphere, or `None` when no rotation about `n` does it.
pub fn alignment_angle(a: &Axis, b: &Axis, n: &Axis) -> Option<f64> {
    let (an, bn) = (dot(a, n), dot(b, n));
    if (an - bn).abs() > 1e-9 {
        return None;
    }
    let pa = [a[0] - an * n[0], a[1] - an * n[1], a[2] - an * n[2]];
    let pb = [b[0] - bn * n[0], b[1] - bn * n[1], b[2] - bn * n[2]];
    if norm(&pa) < 1e-12 {
        return Some(0.0);
    }
    let theta = dot(&cross(&pa, &pb), n).atan2(dot(&pa, &pb));
    Some(if theta < 0.0 { theta + TAU } else { theta.max(0.0) })
}

/// `|<up_b| R_n(theta) |up_a>|^2`.
pub fn fidelity(a: &Axis, b: &Axis, n: &Axis, theta: f64) -> Result<f64> {
    let rotated = rotation(n, theta)?.apply(&axis_state(a, true)?)?;
    born_probability(&rotated, &axis_state(b, true)?)
}

/// Smallest angle at which the fidelity reaches `1 - epsilon`.
pub fn min_angle_within(a: &Axis, b: &Axis, n: &Axis, epsilon: f64) -> Result<Option<f64>> {
    let target = 1.0 - epsilon;
    let f = |t: f64| fidelity(a, b, n, t);
    if f(0.0)? >= target {
        return Ok(Some(0.0));
    }
    let step = TAU / SCAN_STEPS as f64;
    for k in 1..=SCAN_STEPS {
        let hi = step * k as f64;
        if f(hi)? >= target {
            let (mut lo, mut hi) = (hi - step, hi);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if f(mid)? >= target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(Some(hi));
        }
    }
    Ok(None)
}

pub fn run_successive_spins(cfg: &SpinsConfig) -> Result<ScenarioReport> {
    check_unit(&cfg.first_axis)?;
    check_unit(&cfg.second_axis)?;
    require((0.0..1.0).contains(&cfg.epsilon), || format!("`epsilon` must lie in [0, 1), got {}", cfg.epsilon))?;
    require(cfg.theta_max >= 0.0, || format!("`theta_max` must be non-negative, got {}", cfg.theta_max))?;
    require(cfg.t_b > cfg.t_a, || "`t_b` must be after `t_a`".into())?;
    let (a, b) = (cfg.first_axis, cfg.second_axis);
    let n = match cfg.disturbance_axis {
        Some(n) => {
            check_unit(&n)?;
            n
        }
        None => great_circle_axis(&a, &b),
    };
    for alt in &cfg.alternatives {
        check_unit(alt)?;
    }
    let mut report =
        ScenarioReport::new("successive_spins", cfg.seed, ScenarioConfig::SuccessiveSpins(cfg.clone()).echo());

    // (a)
    let up_a = axis_state(&a, true)?;
    let p_second = born_probability(&up_a, &axis_state(&b, true)?)?;
    report.set("p_second_given_first", p_second);
    report.set("bloch_angle", dot(&a, &b).clamp(-1.0, 1.0).acos());
    report.set("disturbance_axis", n);

    // (b)
    let exact = alignment_angle(&a, &b, &n);
    let within = min_angle_within(&a, &b, &n, cfg.epsilon)?;
    let feasible = exact.is_some_and(|t| t <= cfg.theta_max + ANGLE_TOL);
    let feasible_eps = within.is_some_and(|t| t <= cfg.theta_max + ANGLE_TOL);
    report.set("min_disturbance_angle", exact);
    report.set("min_disturbance_angle_within_epsilon", within);
    report.set("feasible", feasible);
    report.set("feasible_within_epsilon", feasible_eps);

    // witness history: rotate by the cheapest admissible angle and check
    // both events on the solution through the first outcome
    let angle = match (exact, within) {
        (Some(t), _) if feasible => t,
        (_, Some(t)) if feasible_eps => t,
        _ => cfg.theta_max,
    };
    let history_ok = history_satisfies(cfg, &n, angle, &up_a)?;
    report.set("witness_angle", angle);
    report.set("witness_history_satisfies_both", history_ok);

    // (c)
    report.set("collapse_forced_without_disturbance", p_second < 1.0 - cfg.epsilon);

    // alignment_angle is -1 when the choice is unreachable
    let mut choices = Series::new("per_choice", &["choice", "alignment_angle", "feasible"]);
    for (k, alt) in std::iter::once(&b).chain(&cfg.alternatives).enumerate() {
        let axis = if cfg.disturbance_axis.is_some() { n } else { great_circle_axis(&a, alt) };
        let t = alignment_angle(&a, alt, &axis);
        let ok = t.is_some_and(|t| t <= cfg.theta_max + ANGLE_TOL);
        choices.push(vec![k as f64, t.unwrap_or(-1.0), if ok { 1.0 } else { 0.0 }]);
    }
    if !cfg.alternatives.is_empty() {
        let all = choices.rows.iter().all(|r| r[2] == 1.0);
        report.set("all_choices_feasible", all);
    }

    let mut series = Series::new("series", &["angle", "fidelity"]);
    for k in 0..=360 {
        let t = PI * k as f64 / 180.0;
        series.push(vec![t, fidelity(&a, &b, &n, t)?]);
    }
    report.series.push(series);
    report.series.push(choices);
    Ok(report)
}

/// The unitary history starting from `up_a` at `t_a` and rotating by
/// `angle` about `n` until `t_b` satisfies both events.
fn history_satisfies(cfg: &SpinsConfig, n: &Axis, angle: f64, up_a: &StateVector) -> Result<bool> {
    let dt = cfg.t_b - cfg.t_a;
    let h = Hamiltonian::Dense(axis_matrix(n) * C64::new(0.5 * angle / dt, 0.0));
    let family = Arc::new(PropagatorFamily::constant(&h, cfg.t_a, cfg.t_b)?);
    let first = Constraint::eigenspace(axis_observable(&cfg.first_axis)?, 1.0, cfg.epsilon)?;
    let second = Constraint::eigenspace(axis_observable(&cfg.second_axis)?, 1.0, cfg.epsilon)?;
    let registry = Registry::new(vec![Event::new(cfg.t_a, first)?, Event::new(cfg.t_b, second)?])?;
    let ens = SolutionEnsemble::from_states(family, cfg.t_a, vec![up_a.clone()])?;
    match ens.solution_set(&registry)?.alive_count() {
        1 => Ok(true),
        0 => Ok(false),
        _ => invalid("single-member ensemble"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{X, Z};

    fn config(a: Axis, b: Axis, theta_max: f64) -> SpinsConfig {
        SpinsConfig {
            first_axis: a,
            second_axis: b,
            epsilon: 0.01,
            theta_max,
            disturbance_axis: None,
            alternatives: vec![],
            t_a: 0.0,
            t_b: 1.0,
            seed: 0,
        }
    }

    #[test]
    fn repetition_needs_no_rotation() {
        let r = run_successive_spins(&config(X, X, 0.0)).unwrap();
        assert_eq!(r.scalar_f64("min_disturbance_angle"), Some(0.0));
        assert_eq!(r.scalar_bool("feasible"), Some(true));
        assert_eq!(r.scalar_bool("witness_history_satisfies_both"), Some(true));
    }

    #[test]
    fn x_then_z() {
        let r = run_successive_spins(&config(X, Z, 0.0)).unwrap();
        assert!((r.scalar_f64("p_second_given_first").unwrap() - 0.5).abs() < 1e-12);
        assert!((r.scalar_f64("min_disturbance_angle").unwrap() - PI / 2.0).abs() < 1e-6);
        assert_eq!(r.scalar_bool("feasible"), Some(false));
        assert_eq!(r.scalar_bool("collapse_forced_without_disturbance"), Some(true));
        let r = run_successive_spins(&config(X, Z, PI / 2.0)).unwrap();
        assert_eq!(r.scalar_bool("feasible"), Some(true));
        assert_eq!(r.scalar_bool("witness_history_satisfies_both"), Some(true));
    }

    #[test]
    fn epsilon_angle_is_smaller() {
        let r = run_successive_spins(&config(X, Z, 0.0)).unwrap();
        let within = r.scalar_f64("min_disturbance_angle_within_epsilon").unwrap();
        let expected = PI / 2.0 - 2.0 * 0.99f64.sqrt().acos();
        assert!((within - expected).abs() < 1e-9, "{within} vs {expected}");
    }

    #[test]
    fn axis_off_the_circle_cannot_align() {
        let mut c = config(X, Z, TAU);
        c.disturbance_axis = Some(X);
        let r = run_successive_spins(&c).unwrap();
        assert_eq!(r.scalar_bool("feasible"), Some(false));
    }
}
