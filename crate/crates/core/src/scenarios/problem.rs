//! A bare two-boundary problem: solve the chosen relaxation, run the
//! feasibility search and report the witness over time.

use serde::{Deserialize, Serialize};

use super::{default_mass, linspace, require, PotentialSpec, ScenarioConfig, WITNESS_TOL};
use crate::error::{Error, Result};
use crate::hilbert::{Grid1D, PropagatorFamily};
use crate::localization::{degree_probability, LocalizationThreshold, Region1D};
use crate::report::{ScenarioReport, Series};
use crate::two_boundary::{
    check_unitary_collapse_with, max_conditional_localization_with, max_sum_localization_with, objective_spectrum,
    time_reversed_problem, Objective, SolverMethod, SolverOptions, TwoBoundaryProblem,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub grid: Grid1D,
    #[serde(default = "default_mass")]
    pub mass: f64,
    #[serde(default)]
    pub potential: PotentialSpec,
    pub region_a: Region1D,
    pub region_b: Region1D,
    pub t_a: f64,
    pub t_b: f64,
    #[serde(default)]
    pub lambda: LocalizationThreshold,
    #[serde(default)]
    pub objective: Objective,
    #[serde(default)]
    pub method: SolverMethod,
    /// Also solve the time-reversed problem and compare spectra.
    #[serde(default)]
    pub check_reversal: bool,
    #[serde(default = "default_series_points")]
    pub series_points: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_series_points() -> usize {
    11
}

impl ProblemConfig {
    pub fn problem(&self) -> Result<TwoBoundaryProblem> {
        Ok(self.problem_and_family()?.0)
    }

    fn problem_and_family(&self) -> Result<(TwoBoundaryProblem, PropagatorFamily)> {
        require(self.t_b >= self.t_a, || format!("`t_b` must not precede `t_a` ({} < {})", self.t_b, self.t_a))?;
        let h = self.potential.hamiltonian(self.grid, self.mass)?;
        let family = PropagatorFamily::constant(&h, self.t_a, self.t_b)?;
        let u = family.propagator(self.t_b, self.t_a)?;
        let p = TwoBoundaryProblem::new(
            self.grid,
            self.region_a.clone(),
            self.region_b.clone(),
            self.t_a,
            self.t_b,
            u,
            self.lambda,
            self.objective,
        )?;
        Ok((p, family))
    }
}

pub fn run_problem(cfg: &ProblemConfig) -> Result<ScenarioReport> {
    require(cfg.series_points >= 2, || "`series_points` must be at least 2".into())?;
    let (problem, family) = cfg.problem_and_family()?;
    let opts = SolverOptions { method: cfg.method, ..SolverOptions::default() };
    let mut report = ScenarioReport::new("two_boundary", cfg.seed, ScenarioConfig::TwoBoundary(cfg.clone()).echo());

    let result = match cfg.objective {
        Objective::Sum => max_sum_localization_with(&problem, &opts)?,
        Objective::Conditional => max_conditional_localization_with(&problem, &opts)?,
    };
    let (la, lb) = problem.lambdas(&result.witness)?;
    if (la - result.lambda_a).abs() > WITNESS_TOL || (lb - result.lambda_b).abs() > WITNESS_TOL {
        return Err(Error::Validation(format!(
            "witness re-check failed: stored ({}, {}), recomputed ({la}, {lb})",
            result.lambda_a, result.lambda_b
        )));
    }
    report.set("objective", cfg.objective);
    report.set("objective_value", result.objective_value);
    report.set("lambda_a", result.lambda_a);
    report.set("lambda_b", result.lambda_b);
    report.set("spectrum_head", &result.spectrum_head);
    report.set("iterations", result.iterations);

    let verdict = check_unitary_collapse_with(&problem, &opts)?;
    report.set("lambda", cfg.lambda.value());
    report.set("feasible", verdict.feasible);
    report.set("search_stage", verdict.stage);
    report.set("best_min_lambda", verdict.best_min);
    report.set("best_lambda_a", verdict.best_lambda_a);
    report.set("best_lambda_b", verdict.best_lambda_b);

    if cfg.check_reversal {
        let forward = objective_spectrum(&problem);
        let backward = objective_spectrum(&time_reversed_problem(&problem));
        let gap = forward.iter().zip(&backward).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        report.set("reversal_spectrum_gap", gap);
    }

    // witness (or the relaxation optimum) over time
    let witness = verdict.witness.unwrap_or(result.witness);
    let mut series = Series::new("series", &["t", "Lambda_A", "Lambda_B"]);
    for t in linspace(cfg.t_a, cfg.t_b, cfg.series_points) {
        let psi = family.propagator(t, cfg.t_a)?.apply(&witness)?;
        series.push(vec![t, degree_probability(&psi, &cfg.grid, &cfg.region_a)?, degree_probability(&psi, &cfg.grid, &cfg.region_b)?]);
    }
    report.series.push(series);
    Ok(report)
}
