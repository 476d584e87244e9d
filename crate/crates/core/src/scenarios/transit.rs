//! Emission in `A` at `t_a`, detection in `B` at `t_b`, free evolution between.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{default_mass, linspace, require, GaussianSpec, ScenarioConfig, WITNESS_TOL};
use crate::error::Result;
use crate::events::{Constraint, Event, Registry};
use crate::hilbert::{Grid1D, Hamiltonian, PropagatorFamily, StateVector};
use crate::localization::{degree_probability, LocalizationThreshold, Region1D};
use crate::report::{ScenarioReport, Series};
use crate::solution_space::{sample_ensemble, SolutionEnsemble};
use crate::two_boundary::{
    check_unitary_collapse, max_conditional_localization, max_sum_localization, Objective, TwoBoundaryProblem,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitConfig {
    pub grid: Grid1D,
    #[serde(default = "default_mass")]
    pub mass: f64,
    pub region_a: Region1D,
    pub region_b: Region1D,
    pub t_a: f64,
    pub t_b: f64,
    #[serde(default)]
    pub lambda: LocalizationThreshold,
    /// Baseline packet, prepared at `t_a`.
    pub gaussian: GaussianSpec,
    /// Times in the variance-growth check.
    #[serde(default = "default_variance_samples")]
    pub variance_samples: usize,
    /// Rows in the per-time series.
    #[serde(default = "default_series_points")]
    pub series_points: usize,
    /// Haar-random members besides the baseline packet and the witness.
    #[serde(default = "default_ensemble_size")]
    pub ensemble_size: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_variance_samples() -> usize {
    5
}

fn default_series_points() -> usize {
    11
}

fn default_ensemble_size() -> usize {
    64
}

/// Position variance of `|psi|^2` about its mean.
pub fn position_variance(psi: &StateVector, grid: &Grid1D) -> f64 {
    let (mut mean, mut second) = (0.0, 0.0);
    for (i, z) in psi.as_slice().iter().enumerate() {
        let (x, w) = (grid.x(i), z.norm_sqr());
        mean += w * x;
        second += w * x * x;
    }
    let total = psi.norm_squared();
    second / total - (mean / total).powi(2)
}

/// Free-particle Gaussian variance `sigma0^2 + (t / (2 m sigma0))^2`.
pub fn gaussian_variance(sigma0: f64, mass: f64, t: f64) -> f64 {
    sigma0 * sigma0 + (t / (2.0 * mass * sigma0)).powi(2)
}

pub fn run_transit(cfg: &TransitConfig) -> Result<ScenarioReport> {
    require(cfg.t_b >= cfg.t_a, || format!("`t_b` must not precede `t_a` ({} < {})", cfg.t_b, cfg.t_a))?;
    require(cfg.ensemble_size >= 1, || "`ensemble_size` must be at least 1".into())?;
    require(cfg.series_points >= 2, || "`series_points` must be at least 2".into())?;
    let grid = cfg.grid;
    let family = Arc::new(PropagatorFamily::constant(
        &Hamiltonian::FreeParticle { grid, mass: cfg.mass },
        cfg.t_a,
        cfg.t_b,
    )?);
    let mut report = ScenarioReport::new("transit", cfg.seed, ScenarioConfig::Transit(cfg.clone()).echo());
    let localization = |psi0: &StateVector, t: f64| -> Result<(StateVector, f64, f64)> {
        let psi = family.propagator(t, cfg.t_a)?.apply(psi0)?;
        let la = degree_probability(&psi, &grid, &cfg.region_a)?;
        let lb = degree_probability(&psi, &grid, &cfg.region_b)?;
        Ok((psi, la, lb))
    };

    // (a) Gaussian baseline
    let packet = cfg.gaussian.state(&grid)?;
    let (_, base_a, _) = localization(&packet, cfg.t_a)?;
    let (_, _, base_b) = localization(&packet, cfg.t_b)?;
    report.set("gaussian_lambda_a", base_a);
    report.set("gaussian_lambda_b", base_b);
    let mut variance = Series::new("variance", &["t", "variance", "variance_analytic", "relative_error"]);
    let mut worst = 0.0f64;
    for t in linspace(cfg.t_a, cfg.t_b, cfg.variance_samples) {
        let (psi, _, _) = localization(&packet, t)?;
        let measured = position_variance(&psi, &grid);
        let analytic = gaussian_variance(cfg.gaussian.sigma, cfg.mass, t - cfg.t_a);
        let rel = (measured - analytic).abs() / analytic;
        worst = worst.max(rel);
        variance.push(vec![t, measured, analytic, rel]);
    }
    report.set("variance_max_relative_error", worst);

    // (b) relaxations
    let problem = TwoBoundaryProblem::free_particle(
        grid,
        cfg.region_a.clone(),
        cfg.region_b.clone(),
        cfg.t_a,
        cfg.t_b,
        cfg.mass,
        cfg.lambda,
        Objective::Sum,
    )?;
    let conditional = match max_conditional_localization(&problem) {
        Ok(r) => Some(r),
        Err(crate::Error::Validation(_)) => None,
        Err(e) => return Err(e),
    };
    let sum = max_sum_localization(&problem)?;
    if let Some(c) = &conditional {
        report.set("conditional_lambda_b", c.lambda_b);
        report.set("conditional_spectrum_head", &c.spectrum_head);
    }
    report.set("sum_objective", sum.objective_value);
    report.set("sum_lambda_a", sum.lambda_a);
    report.set("sum_lambda_b", sum.lambda_b);
    report.set("sum_spectrum_head", &sum.spectrum_head);

    // (c) verdict
    let verdict = check_unitary_collapse(&problem)?;
    report.set("lambda", cfg.lambda.value());
    report.set("feasible", verdict.feasible);
    report.set("search_stage", verdict.stage);
    report.set("best_min_lambda", verdict.best_min);
    let witness = match (&verdict.witness, &conditional) {
        (Some(w), _) => w.clone(),
        (None, Some(c)) => c.witness.clone(),
        (None, None) => sum.witness.clone(),
    };
    let (_, wa, _) = localization(&witness, cfg.t_a)?;
    let (_, _, wb) = localization(&witness, cfg.t_b)?;
    if verdict.feasible {
        let ok = wa.min(wb) >= cfg.lambda.value() - WITNESS_TOL;
        report.set("witness_verified", ok);
    }
    report.set("witness_lambda_a", wa);
    report.set("witness_lambda_b", wb);

    // per-time series with the ensemble alive count
    let registry = Registry::new(vec![
        Event::new(cfg.t_a, Constraint::region(grid, cfg.region_a.clone(), cfg.lambda)?)?,
        Event::new(cfg.t_b, Constraint::region(grid, cfg.region_b.clone(), cfg.lambda)?)?,
    ])?;
    let haar = sample_ensemble(family.clone(), cfg.t_a, cfg.ensemble_size, cfg.seed)?;
    let mut states: Vec<StateVector> = haar.members().iter().map(|m| m.psi0.clone()).collect();
    states.push(packet);
    states.push(witness.clone());
    let ensemble = SolutionEnsemble::from_states(family.clone(), cfg.t_a, states)?;
    let times = linspace(cfg.t_a, cfg.t_b, cfg.series_points);
    let chain = ensemble.history_chain(&registry, &times)?;
    let mut series = Series::new("series", &["t", "alive_count", "Lambda_A", "Lambda_B"]);
    for (t, entry) in times.iter().zip(&chain) {
        let (_, la, lb) = localization(&witness, *t)?;
        series.push(vec![*t, entry.alive_count as f64, la, lb]);
    }
    report.set("ensemble_size", ensemble.len());
    report.set("final_alive_count", chain.last().map(|e| e.alive_count).unwrap_or(0));
    report.set("witness_member_alive", chain.last().is_some_and(|e| e.alive_ids.contains(&(ensemble.len() as u64 - 1))));
    report.series.push(series);
    report.series.push(variance);
    Ok(report)
}
