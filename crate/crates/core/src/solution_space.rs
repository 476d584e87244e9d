//! Stand-ins for the space of solutions and its event-constrained subsets.
//!
//! A [`SolutionEnsemble`] holds Haar-random initial states at a reference time
//! together with the dynamics; filtering by an event only clears alive flags.
//! Dead members are kept so each event's eliminations stay auditable.
//! For linear `epsilon = 0` registries the solution set is also available
//! exactly, as a projector on the reference-time Hilbert space.

use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::events::{pullback, union_registries, intersect_registries, sub_registry_upto, Constraint, Event, Registry};
use crate::hilbert::{check_dim, Grid1D, Observable, PropagatorFamily, StateVector, C64};
use crate::localization::{degree_probability, Region1D};

/// Eigenvalues of the summed complement projectors below this belong to the
/// exact intersection.
pub const NULLSPACE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub id: u64,
    /// Normalized state at the ensemble's reference time.
    pub psi0: StateVector,
}

#[derive(Debug, Clone)]
pub struct SolutionEnsemble {
    t0: f64,
    family: Arc<PropagatorFamily>,
    members: Arc<Vec<Solution>>,
    alive: Vec<bool>,
    seed: Option<u64>,
}

/// `n` Haar-random rays (normalized complex Gaussian vectors), ids `0..n`.
pub fn sample_ensemble(family: Arc<PropagatorFamily>, t0: f64, n: usize, seed: u64) -> Result<SolutionEnsemble> {
    if n == 0 {
        return invalid("ensemble size must be at least 1");
    }
    if !family.contains(t0) {
        let (lo, hi) = family.span();
        return Err(Error::Span { t: t0, lo, hi });
    }
    let dim = family.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let members = (0..n as u64)
        .map(|id| {
            let amps: Vec<C64> = (0..dim)
                .map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
                .collect();
            let psi0 = StateVector::new(amps)?.normalized()?;
            Ok(Solution { id, psi0 })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SolutionEnsemble { t0, family, alive: vec![true; n], members: Arc::new(members), seed: Some(seed) })
}

impl SolutionEnsemble {
    /// Ensemble from explicit initial states; ids are positions.
    pub fn from_states(family: Arc<PropagatorFamily>, t0: f64, states: Vec<StateVector>) -> Result<Self> {
        if states.is_empty() {
            return invalid("ensemble needs at least one member");
        }
        let mut members = Vec::with_capacity(states.len());
        for (id, psi0) in states.into_iter().enumerate() {
            check_dim(family.dim(), psi0.dim())?;
            psi0.require_normalized("ensemble member")?;
            members.push(Solution { id: id as u64, psi0 });
        }
        Ok(Self { t0, family, alive: vec![true; members.len()], members: Arc::new(members), seed: None })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn family(&self) -> &PropagatorFamily {
        &self.family
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn members(&self) -> &[Solution] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_alive(&self, index: usize) -> bool {
        self.alive[index]
    }

    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    pub fn alive_ids(&self) -> BTreeSet<u64> {
        self.members.iter().zip(&self.alive).filter(|(_, &a)| a).map(|(m, _)| m.id).collect()
    }

    /// Same members with every flag reset to alive.
    pub fn revived(&self) -> Self {
        Self { alive: vec![true; self.len()], ..self.clone() }
    }

    /// State of member `index` at time `t`.
    pub fn state_at(&self, index: usize, t: f64) -> Result<StateVector> {
        self.family.propagator(t, self.t0)?.apply(&self.members[index].psi0)
    }

    /// Ensemble of the time-reversed world, `psi'(t) = psi(-t)`: same members,
    /// reference time `-t0` and the reversed family.
    pub fn time_reversed(&self) -> Self {
        Self { t0: -self.t0, family: Arc::new(self.family.reversed()), ..self.clone() }
    }

    /// Clear the flags of alive members violating `e`. Members are evaluated
    /// in parallel; the result is indexed by member, so it is deterministic.
    pub fn filter(&self, e: &Event) -> Result<Self> {
        let u = self.family.propagator(e.t, self.t0)?;
        check_dim(e.constraint.dim(), u.dim())?;
        let keep: Vec<bool> = self
            .members
            .par_iter()
            .zip(self.alive.par_iter())
            .map(|(m, &alive)| alive && e.constraint.eval_normalized(&u.apply(&m.psi0).expect("dims checked")))
            .collect();
        Ok(Self { alive: keep, ..self.clone() })
    }

    /// Intersection over all events of the registry.
    pub fn solution_set(&self, r: &Registry) -> Result<Self> {
        r.iter().try_fold(self.clone(), |ens, e| ens.filter(e))
    }

    /// Alive sets for the sub-registries `E(t)` at ascending cut times.
    pub fn history_chain(&self, r: &Registry, times: &[f64]) -> Result<Vec<HistoryEntry>> {
        if times.windows(2).any(|w| !(w[0] <= w[1])) {
            return invalid("history times must be ascending");
        }
        times
            .iter()
            .map(|&t| {
                let ens = self.solution_set(&sub_registry_upto(r, t))?;
                Ok(HistoryEntry { t, alive_count: ens.alive_count(), alive_ids: ens.alive_ids() })
            })
            .collect()
    }

    /// CSV snapshot: `member_id,alive,Lambda_<name>...` with probe regions
    /// evaluated at time `t`.
    pub fn snapshot_csv(&self, grid: &Grid1D, probes: &[(String, Region1D)], t: f64) -> Result<String> {
        check_dim(grid.n_points(), self.family.dim())?;
        let u = self.family.propagator(t, self.t0)?;
        let mut out = String::from("member_id,alive");
        for (name, _) in probes {
            out.push_str(&format!(",Lambda_{name}"));
        }
        out.push('\n');
        for (m, &alive) in self.members.iter().zip(&self.alive) {
            let psi = u.apply(&m.psi0)?;
            out.push_str(&format!("{},{}", m.id, u8::from(alive)));
            for (_, region) in probes {
                out.push_str(&format!(",{}", degree_probability(&psi, grid, region)?));
            }
            out.push('\n');
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub t: f64,
    pub alive_count: usize,
    pub alive_ids: BTreeSet<u64>,
}

/// Projector onto the reference-time states satisfying every exact subspace
/// event: the common null space of `sum_i (I - Q_i)` where `Q_i` is event
/// `i`'s projector pulled back to `t0`.
pub fn exact_subspace_solution_set(r: &Registry, t0: f64, family: &PropagatorFamily) -> Result<Observable> {
    let dim = family.dim();
    let mut complement_sum = DMatrix::<C64>::zeros(dim, dim);
    let identity = DMatrix::<C64>::identity(dim, dim);
    for e in r.iter() {
        let q = match &e.constraint {
            Constraint::SubspaceMembership { epsilon, .. } | Constraint::EigenspaceProximity { epsilon, .. }
                if *epsilon == 0.0 =>
            {
                match pullback(e, t0, family)? {
                    Constraint::SubspaceMembership { projector, .. } => projector,
                    Constraint::EigenspaceProximity { projector, .. } => projector,
                    _ => unreachable!("linear constraints pull back to subspaces"),
                }
            }
            _ => return invalid("exact solution set needs subspace events with epsilon = 0"),
        };
        complement_sum += &identity - q.matrix();
    }
    let eig = crate::eigen::hermitian_eigen(&complement_sum);
    let keep: Vec<usize> = (0..dim).filter(|&j| eig.values[j] <= NULLSPACE_TOL).collect();
    let cols = eig.vectors.select_columns(keep.iter());
    Ok(Observable::from_orthonormal_columns(&cols, "solution set"))
}

/// Squared distance of `psi` from the range of `p`.
pub fn distance_from_range(p: &Observable, psi: &StateVector) -> Result<f64> {
    check_dim(p.dim(), psi.dim())?;
    let v: &DVector<C64> = psi.amplitudes();
    let r = v - p.matrix() * v;
    Ok(r.norm_squared())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub holds: bool,
    pub counterexamples: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    /// `H(E1) n H(E2) = H(E1 u E2)`.
    pub intersection_of_union: IdentityCheck,
    /// `H(E1) u H(E2) c H(E1 n E2)`.
    pub union_in_intersection: IdentityCheck,
    /// `E1 c E2 => H(E2) c H(E1)`, checked in both directions that apply.
    pub monotone: IdentityCheck,
}

impl IdentityReport {
    pub fn all_hold(&self) -> bool {
        self.intersection_of_union.holds && self.union_in_intersection.holds && self.monotone.holds
    }
}

fn check(ids: impl IntoIterator<Item = u64>) -> IdentityCheck {
    let counterexamples: Vec<u64> = ids.into_iter().collect();
    IdentityCheck { holds: counterexamples.is_empty(), counterexamples }
}

/// Check the three solution-set identities on alive id sets.
pub fn verify_lemma1(e1: &Registry, e2: &Registry, ens: &SolutionEnsemble) -> Result<IdentityReport> {
    let h1 = ens.solution_set(e1)?.alive_ids();
    let h2 = ens.solution_set(e2)?.alive_ids();
    let h_union = ens.solution_set(&union_registries(e1, e2))?.alive_ids();
    let h_inter = ens.solution_set(&intersect_registries(e1, e2))?.alive_ids();

    let both: BTreeSet<u64> = h1.intersection(&h2).copied().collect();
    let first = check(both.symmetric_difference(&h_union).copied());
    let second = check(h1.union(&h2).filter(|id| !h_inter.contains(id)).copied());

    let mut bad = BTreeSet::new();
    if e1.is_subset_of(e2) {
        bad.extend(h2.difference(&h1).copied());
    }
    if e2.is_subset_of(e1) {
        bad.extend(h1.difference(&h2).copied());
    }
    Ok(IdentityReport { intersection_of_union: first, union_in_intersection: second, monotone: check(bad) })
}

/// One `(R u {e_i}, filter(E, e_i))` pair per alternative event.
pub fn branch(ens: &SolutionEnsemble, r: &Registry, alternatives: &[Event]) -> Result<Vec<(Registry, SolutionEnsemble)>> {
    if alternatives.is_empty() {
        return invalid("branching needs at least one alternative");
    }
    alternatives.iter().map(|e| Ok((r.with(e.clone()), ens.filter(e)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::Hamiltonian;
    use crate::localization::LocalizationThreshold;

    fn grid_ensemble(n: usize) -> (Grid1D, SolutionEnsemble) {
        let g = Grid1D::new(64, -8.0, 8.0).unwrap();
        let fam = PropagatorFamily::constant(&Hamiltonian::FreeParticle { grid: g, mass: 1.0 }, 0.0, 2.0).unwrap();
        (g, sample_ensemble(Arc::new(fam), 0.0, n, 11).unwrap())
    }

    #[test]
    fn sampling_is_deterministic_and_normalized() {
        let (_, a) = grid_ensemble(20);
        let (_, b) = grid_ensemble(20);
        assert_eq!(a.members(), b.members());
        assert!(a.members().iter().all(|m| (m.psi0.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn empty_ensemble_rejected() {
        let fam = PropagatorFamily::constant(&Hamiltonian::zero(2), 0.0, 1.0).unwrap();
        assert!(sample_ensemble(Arc::new(fam), 0.0, 0, 1).is_err());
    }

    #[test]
    fn trivial_filters() {
        let (g, ens) = grid_ensemble(50);
        let full = Event::new(1.0, Constraint::region(g, Region1D::full(&g), LocalizationThreshold::new(1.0).unwrap()).unwrap()).unwrap();
        assert_eq!(ens.filter(&full).unwrap().alive_count(), 50);
        let none = Event::new(1.0, Constraint::region(g, Region1D::empty(), LocalizationThreshold::new(0.1).unwrap()).unwrap()).unwrap();
        assert_eq!(ens.filter(&none).unwrap().alive_count(), 0);
        let ray = Observable::ray_projector(&g.gaussian(0.0, 1.0, 0.0).unwrap()).unwrap();
        let exact = Event::new(0.5, Constraint::subspace(ray, 0.0).unwrap()).unwrap();
        assert_eq!(ens.filter(&exact).unwrap().alive_count(), 0);
    }

    #[test]
    fn filter_outside_span_errors() {
        let (g, ens) = grid_ensemble(3);
        let e = Event::new(5.0, Constraint::region(g, Region1D::full(&g), LocalizationThreshold::DEFAULT).unwrap()).unwrap();
        assert!(matches!(ens.filter(&e), Err(Error::Span { .. })));
    }

    #[test]
    fn unsorted_history_times_rejected() {
        let (_, ens) = grid_ensemble(3);
        assert!(ens.history_chain(&Registry::empty(), &[1.0, 0.5]).is_err());
    }

    #[test]
    fn exact_set_edge_cases() {
        let fam = PropagatorFamily::constant(&Hamiltonian::zero(2), 0.0, 1.0).unwrap();
        let p0 = Observable::ray_projector(&StateVector::basis(2, 0).unwrap()).unwrap();
        let p1 = Observable::ray_projector(&StateVector::basis(2, 1).unwrap()).unwrap();
        let single = Registry::new(vec![Event::new(0.0, Constraint::subspace(p0.clone(), 0.0).unwrap()).unwrap()]).unwrap();
        let q = exact_subspace_solution_set(&single, 0.0, &fam).unwrap();
        assert!(crate::hilbert::max_abs(&(q.matrix() - p0.matrix())) < 1e-12);
        let both = Registry::new(vec![
            Event::new(0.5, Constraint::subspace(p0.clone(), 0.0).unwrap()).unwrap(),
            Event::new(0.5, Constraint::subspace(p1, 0.0).unwrap()).unwrap(),
        ])
        .unwrap();
        assert_eq!(exact_subspace_solution_set(&both, 0.0, &fam).unwrap().projector_rank(), 0);
        let loose = Registry::new(vec![Event::new(0.5, Constraint::subspace(p0, 0.1).unwrap()).unwrap()]).unwrap();
        assert!(exact_subspace_solution_set(&loose, 0.0, &fam).is_err());
    }

    #[test]
    fn csv_snapshot_header_and_rows() {
        let (g, ens) = grid_ensemble(4);
        let csv = ens.snapshot_csv(&g, &[("A".into(), Region1D::interval(-1.0, 1.0).unwrap())], 1.0).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "member_id,alive,Lambda_A");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0,1,"));
    }
}
