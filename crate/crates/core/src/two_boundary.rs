//! Joint localization at two times under unitary evolution.
//!
//! Given regions `A` at `t_a`, `B` at `t_b` and `U = U(t_b, t_a)`, the sum
//! objective maximizes `Lambda_A + Lambda_B`, the top eigenvalue of
//! `P_A + U^dagger P_B U`. The conditional objective restricts to states
//! supported in `A` and maximizes `Lambda_B`, the top eigenvalue of the
//! concentration operator `P_A U^dagger P_B U P_A`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::eigen::{self, TopEigen, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{invalid, Result};
use crate::hilbert::{check_dim, Grid1D, Hamiltonian, Propagator, PropagatorFamily, StateVector, C64};
use crate::localization::{degree_probability, LocalizationThreshold, Region1D, MEMBERSHIP_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Sum,
    Conditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Dense when the working dimension is at most `dense_limit`, else Lanczos.
    #[default]
    Auto,
    Dense,
    Lanczos,
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub method: SolverMethod,
    pub tol: f64,
    pub max_iter: usize,
    pub dense_limit: usize,
    /// Bisection steps for the balanced `min(Lambda_A, Lambda_B)` search.
    pub balance_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { method: SolverMethod::Auto, tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, dense_limit: 2048, balance_steps: 60 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoBoundaryProblem {
    grid: Grid1D,
    region_a: Region1D,
    region_b: Region1D,
    mask_a: Vec<bool>,
    mask_b: Vec<bool>,
    t_a: f64,
    t_b: f64,
    propagator: Propagator,
    threshold: LocalizationThreshold,
    objective: Objective,
}

impl TwoBoundaryProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: Grid1D,
        region_a: Region1D,
        region_b: Region1D,
        t_a: f64,
        t_b: f64,
        propagator: Propagator,
        threshold: LocalizationThreshold,
        objective: Objective,
    ) -> Result<Self> {
        if !(t_b >= t_a) {
            return invalid(format!("two-boundary problem needs t_b >= t_a, got t_a = {t_a}, t_b = {t_b}"));
        }
        check_dim(grid.n_points(), propagator.dim())?;
        let mask_a = region_a.mask(&grid)?;
        let mask_b = region_b.mask(&grid)?;
        Ok(Self { grid, region_a, region_b, mask_a, mask_b, t_a, t_b, propagator, threshold, objective })
    }

    /// Free evolution of mass `mass` between `t_a` and `t_b`.
    #[allow(clippy::too_many_arguments)]
    pub fn free_particle(
        grid: Grid1D,
        region_a: Region1D,
        region_b: Region1D,
        t_a: f64,
        t_b: f64,
        mass: f64,
        threshold: LocalizationThreshold,
        objective: Objective,
    ) -> Result<Self> {
        if !(t_b >= t_a) {
            return invalid(format!("two-boundary problem needs t_b >= t_a, got t_a = {t_a}, t_b = {t_b}"));
        }
        let family = PropagatorFamily::constant(&Hamiltonian::FreeParticle { grid, mass }, t_a, t_b)?;
        let u = family.propagator(t_b, t_a)?;
        Self::new(grid, region_a, region_b, t_a, t_b, u, threshold, objective)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }
    pub fn region_a(&self) -> &Region1D {
        &self.region_a
    }
    pub fn region_b(&self) -> &Region1D {
        &self.region_b
    }
    pub fn t_a(&self) -> f64 {
        self.t_a
    }
    pub fn t_b(&self) -> f64 {
        self.t_b
    }
    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }
    pub fn threshold(&self) -> LocalizationThreshold {
        self.threshold
    }
    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn with_threshold(&self, threshold: LocalizationThreshold) -> Self {
        Self { threshold, ..self.clone() }
    }

    pub fn with_objective(&self, objective: Objective) -> Self {
        Self { objective, ..self.clone() }
    }

    fn dim(&self) -> usize {
        self.grid.n_points()
    }

    fn project(mask: &[bool], v: &mut DVector<C64>) {
        for (z, &m) in v.iter_mut().zip(mask) {
            if !m {
                *z = C64::new(0.0, 0.0);
            }
        }
    }

    /// `U^dagger P_B U v`.
    fn apply_b_term(&self, v: &DVector<C64>) -> DVector<C64> {
        let mut w = v.clone();
        self.propagator.apply_vector(&mut w);
        Self::project(&self.mask_b, &mut w);
        self.propagator.inverse().apply_vector(&mut w);
        w
    }

    fn apply_a_term(&self, v: &DVector<C64>) -> DVector<C64> {
        let mut w = v.clone();
        Self::project(&self.mask_a, &mut w);
        w
    }

    /// `(P_A + U^dagger P_B U) v`.
    pub fn apply_sum_operator(&self, v: &DVector<C64>) -> DVector<C64> {
        self.apply_a_term(v) + self.apply_b_term(v)
    }

    /// Dense `P_A + U^dagger P_B U` (for oracles and small problems).
    pub fn sum_operator_matrix(&self) -> DMatrix<C64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = C64::new(1.0, 0.0);
            m.set_column(j, &self.apply_sum_operator(&e));
        }
        (&m + m.adjoint()) * C64::new(0.5, 0.0)
    }

    /// `(Lambda_A, Lambda_B)` of a normalized `t_a` state, by direct evolution.
    pub fn lambdas(&self, psi: &StateVector) -> Result<(f64, f64)> {
        let la = degree_probability(psi, &self.grid, &self.region_a)?;
        let at_b = self.propagator.apply(psi)?;
        let lb = degree_probability(&at_b, &self.grid, &self.region_b)?;
        Ok((la, lb))
    }

    fn indices(mask: &[bool]) -> Vec<usize> {
        mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
    }

    /// Orthonormal basis containing the ranges of `P_A` and `U^dagger P_B`,
    /// plus the operator images of its columns. `None` when the subspace is
    /// the whole space.
    fn krylov_free_basis(&self) -> Option<(DMatrix<C64>, DMatrix<C64>, DMatrix<C64>)> {
        let n = self.dim();
        let a_idx = Self::indices(&self.mask_a);
        let b_idx = Self::indices(&self.mask_b);
        let r = a_idx.len() + b_idx.len();
        if r >= n || r == 0 {
            return None;
        }
        let mut w = DMatrix::<C64>::zeros(n, r);
        for (c, &i) in a_idx.iter().enumerate() {
            w[(i, c)] = C64::new(1.0, 0.0);
        }
        let back = self.propagator.inverse();
        for (c, &j) in b_idx.iter().enumerate() {
            let mut e = DVector::zeros(n);
            e[j] = C64::new(1.0, 0.0);
            back.apply_vector(&mut e);
            w.set_column(a_idx.len() + c, &e);
        }
        let q = w.qr().q();
        let mut qa = DMatrix::zeros(n, q.ncols());
        let mut qb = DMatrix::zeros(n, q.ncols());
        for j in 0..q.ncols() {
            let col = q.column(j).into_owned();
            qa.set_column(j, &self.apply_a_term(&col));
            qb.set_column(j, &self.apply_b_term(&col));
        }
        Some((q, qa, qb))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointLocalizationResult {
    #[serde(skip)]
    pub witness: StateVector,
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub objective_value: f64,
    pub spectrum_head: Vec<f64>,
    pub iterations: usize,
}

fn weighted_top(q: &DMatrix<C64>, qa: &DMatrix<C64>, qb: &DMatrix<C64>, wa: f64, wb: f64) -> TopEigen {
    let h = q.adjoint() * (qa * C64::new(wa, 0.0) + qb * C64::new(wb, 0.0));
    let mut top = eigen::dense_top(&h);
    let mut v = q * &top.vector;
    eigen::fix_phase(&mut v);
    top.vector = v;
    let n = q.nrows();
    if top.spectrum_head.len() < 5 && q.ncols() < n {
        let pad = (5 - top.spectrum_head.len()).min(n - q.ncols());
        top.spectrum_head.extend(std::iter::repeat_n(0.0, pad));
    }
    top
}

fn finish(p: &TwoBoundaryProblem, top: TopEigen) -> Result<JointLocalizationResult> {
    let witness = StateVector::from_dvector(top.vector)?.normalized()?;
    let (lambda_a, lambda_b) = p.lambdas(&witness)?;
    Ok(JointLocalizationResult {
        witness,
        lambda_a,
        lambda_b,
        objective_value: top.value,
        spectrum_head: top.spectrum_head,
        iterations: top.iterations,
    })
}

fn iterative(apply: &dyn Fn(&DVector<C64>) -> DVector<C64>, n: usize, method: SolverMethod, opts: &SolverOptions) -> Result<TopEigen> {
    match method {
        SolverMethod::Power => eigen::power_iteration(apply, n, opts.tol, opts.max_iter),
        _ => eigen::lanczos_top(apply, n, opts.tol, opts.max_iter),
    }
}

pub fn max_sum_localization(p: &TwoBoundaryProblem) -> Result<JointLocalizationResult> {
    max_sum_localization_with(p, &SolverOptions::default())
}

pub fn max_sum_localization_with(p: &TwoBoundaryProblem, opts: &SolverOptions) -> Result<JointLocalizationResult> {
    let n = p.dim();
    let method = match opts.method {
        SolverMethod::Auto => {
            let r = (p.mask_a.iter().filter(|&&m| m).count() + p.mask_b.iter().filter(|&&m| m).count()).min(n);
            if r <= opts.dense_limit {
                SolverMethod::Dense
            } else {
                SolverMethod::Lanczos
            }
        }
        m => m,
    };
    let top = match method {
        SolverMethod::Dense => match p.krylov_free_basis() {
            Some((q, qa, qb)) => weighted_top(&q, &qa, &qb, 1.0, 1.0),
            None => eigen::dense_top(&p.sum_operator_matrix()),
        },
        m => iterative(&|v| p.apply_sum_operator(v), n, m, opts)?,
    };
    finish(p, top)
}

pub fn max_conditional_localization(p: &TwoBoundaryProblem) -> Result<JointLocalizationResult> {
    max_conditional_localization_with(p, &SolverOptions::default())
}

pub fn max_conditional_localization_with(p: &TwoBoundaryProblem, opts: &SolverOptions) -> Result<JointLocalizationResult> {
    let n = p.dim();
    let a_idx = TwoBoundaryProblem::indices(&p.mask_a);
    let k = a_idx.len();
    if k == 0 {
        return invalid("conditional localization needs a non-empty region A");
    }
    let embed = |y: &DVector<C64>| {
        let mut v = DVector::zeros(n);
        for (c, &i) in a_idx.iter().enumerate() {
            v[i] = y[c];
        }
        v
    };
    let restrict = |v: &DVector<C64>| DVector::from_iterator(k, a_idx.iter().map(|&i| v[i]));
    let method = match opts.method {
        SolverMethod::Auto if k <= opts.dense_limit => SolverMethod::Dense,
        SolverMethod::Auto => SolverMethod::Lanczos,
        m => m,
    };
    let mut top = match method {
        SolverMethod::Dense => {
            let b_idx = TwoBoundaryProblem::indices(&p.mask_b);
            let mut g = DMatrix::<C64>::zeros(b_idx.len(), k);
            for (c, &i) in a_idx.iter().enumerate() {
                let mut e = DVector::zeros(n);
                e[i] = C64::new(1.0, 0.0);
                p.propagator.apply_vector(&mut e);
                for (r, &j) in b_idx.iter().enumerate() {
                    g[(r, c)] = e[j];
                }
            }
            eigen::dense_top(&(g.adjoint() * &g))
        }
        m => iterative(&|y| restrict(&p.apply_b_term(&embed(y))), k, m, opts)?,
    };
    let mut v = embed(&top.vector);
    eigen::fix_phase(&mut v);
    top.vector = v;
    finish(p, top)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStage {
    Conditional,
    Sum,
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseVerdict {
    pub feasible: bool,
    #[serde(skip)]
    pub witness: Option<StateVector>,
    pub stage: Option<SearchStage>,
    /// Best `min(Lambda_A, Lambda_B)` seen by any stage.
    pub best_min: f64,
    pub best_lambda_a: f64,
    pub best_lambda_b: f64,
}

pub fn check_unitary_collapse(p: &TwoBoundaryProblem) -> Result<CollapseVerdict> {
    check_unitary_collapse_with(p, &SolverOptions::default())
}

/// Witness search for `Lambda_A >= lambda` and `Lambda_B >= lambda`:
/// conditional optimum, then sum optimum, then a bisection over the weight
/// `w` in `w P_A + (1 - w) U^dagger P_B U` balancing the two localizations.
/// `feasible = false` only means no witness was found.
pub fn check_unitary_collapse_with(p: &TwoBoundaryProblem, opts: &SolverOptions) -> Result<CollapseVerdict> {
    let lambda = p.threshold.value();
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0, None::<StateVector>);
    let mut consider = |psi: StateVector, stage: SearchStage| -> Result<Option<CollapseVerdict>> {
        let (la, lb) = p.lambdas(&psi)?;
        let m = la.min(lb);
        if m > best.0 {
            best = (m, la, lb, Some(psi.clone()));
        }
        if m >= lambda - MEMBERSHIP_TOL {
            return Ok(Some(CollapseVerdict {
                feasible: true,
                witness: Some(psi),
                stage: Some(stage),
                best_min: m,
                best_lambda_a: la,
                best_lambda_b: lb,
            }));
        }
        Ok(None)
    };

    if p.mask_a.iter().any(|&m| m) {
        let cond = max_conditional_localization_with(p, opts)?;
        if let Some(v) = consider(cond.witness, SearchStage::Conditional)? {
            return Ok(v);
        }
    }
    let sum = max_sum_localization_with(p, opts)?;
    if let Some(v) = consider(sum.witness, SearchStage::Sum)? {
        return Ok(v);
    }

    let basis = p.krylov_free_basis();
    let full = if basis.is_none() {
        let n = p.dim();
        let mut qa = DMatrix::zeros(n, n);
        let mut qb = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = C64::new(1.0, 0.0);
            qa.set_column(j, &p.apply_a_term(&e));
            qb.set_column(j, &p.apply_b_term(&e));
        }
        Some((DMatrix::identity(n, n), qa, qb))
    } else {
        None
    };
    let (q, qa, qb) = basis.as_ref().or(full.as_ref()).expect("one of the bases");
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..opts.balance_steps {
        let w = 0.5 * (lo + hi);
        let top = weighted_top(q, qa, qb, w, 1.0 - w);
        let psi = StateVector::from_dvector(top.vector)?.normalized()?;
        let (la, lb) = p.lambdas(&psi)?;
        if let Some(v) = consider(psi, SearchStage::Balanced)? {
            return Ok(v);
        }
        if la < lb {
            lo = w;
        } else {
            hi = w;
        }
    }
    Ok(CollapseVerdict { feasible: false, witness: best.3, stage: None, best_min: best.0, best_lambda_a: best.1, best_lambda_b: best.2 })
}

/// Swap `(A, t_a)` with `(B, t_b)`, negate times and replace `U` by its adjoint.
pub fn time_reversed_problem(p: &TwoBoundaryProblem) -> TwoBoundaryProblem {
    TwoBoundaryProblem {
        grid: p.grid,
        region_a: p.region_b.clone(),
        region_b: p.region_a.clone(),
        mask_a: p.mask_b.clone(),
        mask_b: p.mask_a.clone(),
        t_a: -p.t_b,
        t_b: -p.t_a,
        propagator: p.propagator.adjoint(),
        threshold: p.threshold,
        objective: p.objective,
    }
}

/// Full spectrum of `P_A + U^dagger P_B U`, descending.
pub fn objective_spectrum(p: &TwoBoundaryProblem) -> Vec<f64> {
    eigen::hermitian_eigen(&p.sum_operator_matrix()).values
}

/// Solve with the problem's own objective.
pub fn solve(p: &TwoBoundaryProblem) -> Result<JointLocalizationResult> {
    match p.objective {
        Objective::Sum => max_sum_localization(p),
        Objective::Conditional => max_conditional_localization(p),
    }
}
