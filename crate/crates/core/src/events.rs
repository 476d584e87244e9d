//! Events as ray-invariant constraints at a time, registries of events, their
//! pullback to a reference time and time reversal.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hilbert::{check_dim, Grid1D, Observable, Propagator, PropagatorFamily, StateVector, C64};
use crate::localization::{amplitude_sum, mask_weight, LocalizationThreshold, Region1D, MEMBERSHIP_TOL};

/// Which localization functional a region constraint compares to its threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalizationVariant {
    #[default]
    Probability,
    AmplitudeMagnitude,
}

/// Tolerance for projector idempotency and eigenvalue matching.
pub const PROJECTOR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    RegionLocalization {
        grid: Grid1D,
        region: Region1D,
        mask: Vec<bool>,
        threshold: LocalizationThreshold,
        variant: LocalizationVariant,
    },
    /// `<psi|P|psi> >= 1 - epsilon`.
    SubspaceMembership { projector: Observable, epsilon: f64 },
    /// Weight in the `eigenvalue` eigenspace of `observable` at least `1 - epsilon`.
    EigenspaceProximity { observable: Observable, eigenvalue: f64, epsilon: f64, projector: Observable },
    /// `inner` acts on factor `factor` of a tensor product with factor dims `dims`.
    Subsystem { factor: usize, dims: Vec<usize>, inner: Box<Constraint> },
    /// `inner` evaluated on `forward * psi` (pullback of a nonlinear constraint).
    Evolved { forward: Propagator, inner: Box<Constraint> },
    /// Disjunction: satisfied iff some member is.
    AnyOf(Vec<Constraint>),
}

impl Constraint {
    pub fn region(grid: Grid1D, region: Region1D, threshold: LocalizationThreshold) -> Result<Self> {
        Self::region_with(grid, region, threshold, LocalizationVariant::Probability)
    }

    pub fn region_with(
        grid: Grid1D,
        region: Region1D,
        threshold: LocalizationThreshold,
        variant: LocalizationVariant,
    ) -> Result<Self> {
        let mask = region.mask(&grid)?;
        Ok(Constraint::RegionLocalization { grid, region, mask, threshold, variant })
    }

    pub fn subspace(projector: Observable, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        if !projector.is_projector(PROJECTOR_TOL) {
            return invalid(format!(
                "subspace constraint needs an idempotent projector (defect {:e})",
                projector.idempotency_defect()
            ));
        }
        Ok(Constraint::SubspaceMembership { projector, epsilon })
    }

    pub fn eigenspace(observable: Observable, eigenvalue: f64, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        let eig = crate::eigen::hermitian_eigen(observable.matrix());
        let idx: Vec<usize> = (0..eig.values.len())
            .filter(|&j| (eig.values[j] - eigenvalue).abs() <= 1e-8 * eigenvalue.abs().max(1.0))
            .collect();
        if idx.is_empty() {
            return invalid(format!("{eigenvalue} is not an eigenvalue of observable '{}'", observable.label()));
        }
        let cols = eig.vectors.select_columns(idx.iter());
        let projector = Observable::from_orthonormal_columns(&cols, format!("{}={eigenvalue}", observable.label()));
        Ok(Constraint::EigenspaceProximity { observable, eigenvalue, epsilon, projector })
    }

    /// Lift `inner` to factor `factor` of `H_0 x H_1 x ...` (factor 0 slowest).
    pub fn subsystem(factor: usize, dims: Vec<usize>, inner: Constraint) -> Result<Self> {
        if factor >= dims.len() {
            return invalid(format!("factor {factor} out of range for {} factors", dims.len()));
        }
        if dims.contains(&0) {
            return invalid("factor dimensions must be positive");
        }
        check_dim(dims[factor], inner.dim())?;
        if inner.factor_operator().is_none() {
            return invalid("only projector-type constraints can be lifted to a subsystem");
        }
        Ok(Constraint::Subsystem { factor, dims, inner: Box::new(inner) })
    }

    /// State dimension the constraint acts on.
    pub fn dim(&self) -> usize {
        match self {
            Constraint::RegionLocalization { grid, .. } => grid.n_points(),
            Constraint::SubspaceMembership { projector, .. } => projector.dim(),
            Constraint::EigenspaceProximity { projector, .. } => projector.dim(),
            Constraint::Subsystem { dims, .. } => dims.iter().product(),
            Constraint::Evolved { forward, .. } => forward.dim(),
            Constraint::AnyOf(cs) => cs.first().map(Constraint::dim).unwrap_or(0),
        }
    }

    fn factor_operator(&self) -> Option<FactorOperator<'_>> {
        match self {
            Constraint::RegionLocalization { mask, threshold, variant: LocalizationVariant::Probability, .. } => {
                Some(FactorOperator { kind: FactorKind::Mask(mask), threshold: threshold.value() })
            }
            Constraint::SubspaceMembership { projector, epsilon } => {
                Some(FactorOperator { kind: FactorKind::Matrix(projector.matrix()), threshold: 1.0 - epsilon })
            }
            Constraint::EigenspaceProximity { projector, epsilon, .. } => {
                Some(FactorOperator { kind: FactorKind::Matrix(projector.matrix()), threshold: 1.0 - epsilon })
            }
            _ => None,
        }
    }

    /// Evaluate on a state; the state is renormalized first so every
    /// constraint is a property of the ray.
    pub fn is_satisfied(&self, psi: &StateVector) -> Result<bool> {
        check_dim(self.dim(), psi.dim())?;
        let psi = psi.normalized()?;
        Ok(self.eval_normalized(&psi))
    }

    pub(crate) fn eval_normalized(&self, psi: &StateVector) -> bool {
        match self {
            Constraint::RegionLocalization { grid, mask, threshold, variant, .. } => {
                let score = match variant {
                    LocalizationVariant::Probability => mask_weight(psi.as_slice(), mask),
                    LocalizationVariant::AmplitudeMagnitude => amplitude_sum(psi.as_slice(), mask, grid.dx()).norm(),
                };
                score >= threshold.value() - MEMBERSHIP_TOL
            }
            Constraint::SubspaceMembership { .. } | Constraint::EigenspaceProximity { .. } => {
                let op = self.factor_operator().expect("projector constraint");
                op.weight(psi.as_slice(), 1, 1) >= op.threshold - MEMBERSHIP_TOL
            }
            Constraint::Subsystem { factor, dims, inner } => {
                let op = inner.factor_operator().expect("validated at construction");
                let left: usize = dims[..*factor].iter().product();
                let right: usize = dims[factor + 1..].iter().product();
                op.weight(psi.as_slice(), left, right) >= op.threshold - MEMBERSHIP_TOL
            }
            Constraint::Evolved { forward, inner } => {
                let moved = forward.apply(psi).expect("dimension checked");
                inner.eval_normalized(&moved)
            }
            Constraint::AnyOf(cs) => cs.iter().any(|c| c.eval_normalized(psi)),
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if (0.0..=1.0).contains(&epsilon) {
        Ok(())
    } else {
        invalid(format!("epsilon must lie in [0, 1], got {epsilon}"))
    }
}

enum FactorKind<'a> {
    Mask(&'a [bool]),
    Matrix(&'a DMatrix<C64>),
}

struct FactorOperator<'a> {
    kind: FactorKind<'a>,
    threshold: f64,
}

impl FactorOperator<'_> {
    /// `<psi| I_left x P x I_right |psi>` for a state of shape `(left, d, right)`.
    fn weight(&self, psi: &[C64], left: usize, right: usize) -> f64 {
        let d = psi.len() / (left * right);
        let mut total = 0.0;
        let mut slice = vec![C64::new(0.0, 0.0); d];
        for l in 0..left {
            for r in 0..right {
                for (k, s) in slice.iter_mut().enumerate() {
                    *s = psi[(l * d + k) * right + r];
                }
                total += match &self.kind {
                    FactorKind::Mask(m) => mask_weight(&slice, m),
                    FactorKind::Matrix(p) => {
                        let mut acc = C64::new(0.0, 0.0);
                        for i in 0..d {
                            let mut row = C64::new(0.0, 0.0);
                            for j in 0..d {
                                row += p[(i, j)] * slice[j];
                            }
                            acc += slice[i].conj() * row;
                        }
                        acc.re
                    }
                };
            }
        }
        total
    }
}

// ---------------------------------------------------------------------------
// Events and registries

/// Process-unique event identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventId(pub u64);

impl EventId {
    pub fn fresh() -> Self {
        static NEXT: AtomicU64 = AtomicU64::new(1);
        EventId(NEXT.fetch_add(1, Ordering::Relaxed))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub id: EventId,
    pub t: f64,
    pub constraint: Constraint,
}

impl Event {
    pub fn new(t: f64, constraint: Constraint) -> Result<Self> {
        if !t.is_finite() {
            return invalid("event time must be finite");
        }
        Ok(Self { id: EventId::fresh(), t, constraint })
    }

    /// Event extended over several sample times: satisfied iff the constraint
    /// holds at one of them. Stored at the latest sample time.
    pub fn extended(times: &[f64], constraint: Constraint, family: &PropagatorFamily) -> Result<Self> {
        let Some(t_last) = times.iter().copied().reduce(f64::max) else {
            return invalid("extended event needs at least one sample time");
        };
        let mut parts = Vec::with_capacity(times.len());
        for &s in times {
            let forward = family.propagator(s, t_last)?;
            parts.push(if s == t_last {
                constraint.clone()
            } else {
                Constraint::Evolved { forward, inner: Box::new(constraint.clone()) }
            });
        }
        Self::new(t_last, Constraint::AnyOf(parts))
    }

    /// Same `(t, constraint)` content, ignoring the id.
    pub fn same_content(&self, other: &Event) -> bool {
        self.t == other.t && self.constraint == other.constraint
    }
}

/// Events ordered by time; ties keep insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Registry {
    events: Vec<Event>,
}

impl Registry {
    pub fn new(mut events: Vec<Event>) -> Result<Self> {
        let mut ids: Vec<EventId> = events.iter().map(|e| e.id).collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return invalid("registry event ids must be unique");
        }
        events.sort_by(|a, b| a.t.partial_cmp(&b.t).expect("finite times"));
        Ok(Self { events })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Event> {
        self.events.iter()
    }

    pub fn contains(&self, e: &Event) -> bool {
        self.events.iter().any(|x| x.same_content(e))
    }

    pub fn is_subset_of(&self, other: &Registry) -> bool {
        self.events.iter().all(|e| other.contains(e))
    }

    /// Registry extended by one event (no-op if an equal event is present).
    pub fn with(&self, e: Event) -> Registry {
        if self.contains(&e) {
            return self.clone();
        }
        let mut events = self.events.clone();
        events.push(e);
        Registry::new(events).unwrap_or_else(|_| self.clone())
    }

    /// Content-wise equality ignoring ids.
    pub fn same_content(&self, other: &Registry) -> bool {
        self.len() == other.len() && self.events.iter().zip(&other.events).all(|(a, b)| a.same_content(b))
    }
}

/// Events with `t' <= t`, order preserved.
pub fn sub_registry_upto(r: &Registry, t: f64) -> Registry {
    Registry { events: r.events.iter().filter(|e| e.t <= t).cloned().collect() }
}

pub fn union_registries(r1: &Registry, r2: &Registry) -> Registry {
    let mut events = r1.events.clone();
    for e in &r2.events {
        if !r1.contains(e) && !events.iter().any(|x| x.id == e.id) {
            events.push(e.clone());
        }
    }
    Registry::new(events).expect("ids checked")
}

pub fn intersect_registries(r1: &Registry, r2: &Registry) -> Registry {
    Registry { events: r1.events.iter().filter(|e| r2.contains(e)).cloned().collect() }
}

/// `(t, c) -> (-t, c)` with reversed order; the family answers
/// `U'(-t_a, -t_b) = U^dagger(t_b, t_a)`.
pub fn reverse_registry(r: &Registry, family: &PropagatorFamily) -> (Registry, PropagatorFamily) {
    let events = r
        .events
        .iter()
        .rev()
        .map(|e| Event { id: e.id, t: -e.t, constraint: e.constraint.clone() })
        .collect();
    (Registry { events }, family.reversed())
}

/// Does the solution through `psi_ref` at `t_ref` satisfy `e`?
pub fn satisfies(psi_ref: &StateVector, t_ref: f64, family: &PropagatorFamily, e: &Event) -> Result<bool> {
    let u = family.propagator(e.t, t_ref)?;
    let psi_t = u.apply(&psi_ref.normalized()?)?;
    check_dim(e.constraint.dim(), psi_t.dim())?;
    Ok(e.constraint.eval_normalized(&psi_t))
}

/// The constraint on `psi(t0)` equivalent to `e` on `psi(e.t)`.
pub fn pullback(e: &Event, t0: f64, family: &PropagatorFamily) -> Result<Constraint> {
    let forward = family.propagator(e.t, t0)?;
    if forward.is_identity() {
        return Ok(e.constraint.clone());
    }
    pull_constraint(&e.constraint, &forward)
}

fn pull_constraint(c: &Constraint, forward: &Propagator) -> Result<Constraint> {
    check_dim(c.dim(), forward.dim())?;
    match c {
        Constraint::SubspaceMembership { projector, epsilon } => {
            let back = forward.inverse().matrix();
            Ok(Constraint::SubspaceMembership { projector: projector.conjugated(&back), epsilon: *epsilon })
        }
        Constraint::EigenspaceProximity { projector, epsilon, .. } => {
            let back = forward.inverse().matrix();
            Ok(Constraint::SubspaceMembership { projector: projector.conjugated(&back), epsilon: *epsilon })
        }
        _ => Ok(Constraint::Evolved { forward: forward.clone(), inner: Box::new(c.clone()) }),
    }
}
