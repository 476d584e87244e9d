//! A registry of events applied to a seeded ensemble, cut at a sequence of
//! times. Each cut keeps only the events up to that time, so the alive sets
//! shrink as the registry grows.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{default_mass, require, PotentialSpec, ScenarioConfig};
use crate::error::{invalid, Result};
use crate::events::{Constraint, Event, LocalizationVariant, Registry};
use crate::hilbert::{kron, Grid1D, Hamiltonian, Observable, PropagatorFamily, C64};
use crate::localization::{degree_probability, LocalizationThreshold, Region1D};
use crate::report::{ScenarioReport, Series};
use crate::solution_space::{exact_subspace_solution_set, sample_ensemble};
use crate::spin::{axis_matrix, check_unit, pauli, Axis};

/// The system the history lives in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Grid {
        grid: Grid1D,
        #[serde(default = "default_mass")]
        mass: f64,
        #[serde(default)]
        potential: PotentialSpec,
    },
    /// `count` spins with `H = sum_k (field . sigma_k) / 2 + coupling sum_k sigma_z^k sigma_z^(k+1)`.
    Spins {
        count: usize,
        #[serde(default)]
        field: Axis,
        #[serde(default)]
        coupling: f64,
    },
}

/// Largest spin count accepted; the state space has `2^count` dimensions.
pub const MAX_SPINS: usize = 10;

impl SystemSpec {
    pub fn dim(&self) -> usize {
        match self {
            SystemSpec::Grid { grid, .. } => grid.n_points(),
            SystemSpec::Spins { count, .. } => 1 << count,
        }
    }

    pub fn hamiltonian(&self) -> Result<Hamiltonian> {
        match self {
            SystemSpec::Grid { grid, mass, potential } => potential.hamiltonian(*grid, *mass),
            SystemSpec::Spins { count, field, coupling } => {
                require((1..=MAX_SPINS).contains(count), || format!("`system.count` must lie in 1..={MAX_SPINS}"))?;
                let dim = 1 << count;
                let mut h = DMatrix::<C64>::zeros(dim, dim);
                let local = axis_matrix(field) * C64::new(0.5, 0.0);
                for k in 0..*count {
                    h += lift(&local, k, *count);
                }
                if *coupling != 0.0 {
                    let zz = kron(&pauli(2), &pauli(2)) * C64::new(*coupling, 0.0);
                    for k in 0..count - 1 {
                        h += lift_pair(&zz, k, *count);
                    }
                }
                Ok(Hamiltonian::Dense(h))
            }
        }
    }
}

/// `I (x) ... (x) op (x) ... (x) I` with `op` on spin `k` of `count`.
pub fn lift(op: &DMatrix<C64>, k: usize, count: usize) -> DMatrix<C64> {
    let d = op.nrows();
    let left = DMatrix::<C64>::identity(1 << k, 1 << k);
    let right_dim = (1usize << count) / ((1 << k) * d);
    kron(&kron(&left, op), &DMatrix::identity(right_dim, right_dim))
}

fn lift_pair(op: &DMatrix<C64>, k: usize, count: usize) -> DMatrix<C64> {
    let left = DMatrix::<C64>::identity(1 << k, 1 << k);
    let right = 1usize << (count - k - 2);
    kron(&kron(&left, op), &DMatrix::identity(right, right))
}

/// One event of the registry, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventSpec {
    /// Grid systems only.
    Region {
        t: f64,
        region: Region1D,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<LocalizationThreshold>,
        #[serde(default)]
        variant: LocalizationVariant,
    },
    /// Span of `vectors` (complex entries as `[re, im]`), on spin `factor`
    /// when given, else on the whole space.
    Subspace {
        t: f64,
        vectors: Vec<Vec<[f64; 2]>>,
        #[serde(default)]
        epsilon: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        factor: Option<usize>,
    },
    /// Eigenspace of `axis . sigma` with eigenvalue `+1` or `-1`. Spin systems only.
    Eigenspace {
        t: f64,
        axis: Axis,
        #[serde(default = "plus_one")]
        eigenvalue: f64,
        #[serde(default)]
        epsilon: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        factor: Option<usize>,
    },
}

fn plus_one() -> f64 {
    1.0
}

impl EventSpec {
    pub fn t(&self) -> f64 {
        match self {
            EventSpec::Region { t, .. } | EventSpec::Subspace { t, .. } | EventSpec::Eigenspace { t, .. } => *t,
        }
    }

    pub fn to_event(&self, system: &SystemSpec, default_lambda: LocalizationThreshold) -> Result<Event> {
        let constraint = match (self, system) {
            (EventSpec::Region { region, lambda, variant, .. }, SystemSpec::Grid { grid, .. }) => {
                Constraint::region_with(*grid, region.clone(), lambda.unwrap_or(default_lambda), *variant)?
            }
            (EventSpec::Region { .. }, _) => return invalid("`kind: region` needs a grid system"),
            (EventSpec::Subspace { vectors, epsilon, factor, .. }, _) => {
                let local = span_projector(vectors)?;
                Constraint::subspace(on_factor(system, local, *factor)?, *epsilon)?
            }
            (EventSpec::Eigenspace { axis, eigenvalue, epsilon, factor, .. }, SystemSpec::Spins { .. }) => {
                check_unit(axis)?;
                require((eigenvalue.abs() - 1.0).abs() < 1e-12, || "`eigenvalue` must be +1 or -1".into())?;
                let m = axis_matrix(axis);
                let id = DMatrix::<C64>::identity(2, 2);
                let p = (&id + m * C64::new(*eigenvalue, 0.0)) * C64::new(0.5, 0.0);
                let p = Observable::new(p, "eigenspace")?;
                Constraint::subspace(on_factor(system, p, *factor)?, *epsilon)?
            }
            (EventSpec::Eigenspace { .. }, _) => return invalid("`kind: eigenspace` needs a spin system"),
        };
        Event::new(self.t(), constraint)
    }
}

/// Orthogonal projector onto the span of the given vectors.
fn span_projector(vectors: &[Vec<[f64; 2]>]) -> Result<Observable> {
    let Some(dim) = vectors.first().map(Vec::len) else {
        return invalid("`vectors` must not be empty");
    };
    require(dim > 0 && vectors.iter().all(|v| v.len() == dim), || "`vectors` must share one non-zero length".into())?;
    let m = DMatrix::from_fn(dim, vectors.len(), |i, j| C64::new(vectors[j][i][0], vectors[j][i][1]));
    let svd = m.svd(true, false);
    let u = svd.u.expect("requested");
    let top = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&j| svd.singular_values[j] > 1e-12 * top.max(1.0)).collect();
    require(!keep.is_empty(), || "`vectors` span only the zero vector".into())?;
    Ok(Observable::from_orthonormal_columns(&u.select_columns(keep.iter()), "span"))
}

fn on_factor(system: &SystemSpec, local: Observable, factor: Option<usize>) -> Result<Observable> {
    match (factor, system) {
        (None, _) => {
            require(local.dim() == system.dim(), || {
                format!("event acts on dimension {} but the system has {}", local.dim(), system.dim())
            })?;
            Ok(local)
        }
        (Some(k), SystemSpec::Spins { count, .. }) => {
            require(k < *count, || format!("`factor` {k} out of range for {count} spins"))?;
            require(local.dim() == 2, || "factor events act on one spin (dimension 2)".into())?;
            Observable::new(lift(local.matrix(), k, *count), "factor")
        }
        (Some(_), _) => invalid("`factor` needs a spin system"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub name: String,
    pub region: Region1D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryConfig {
    pub system: SystemSpec,
    pub events: Vec<EventSpec>,
    /// Cut times, ascending.
    pub times: Vec<f64>,
    /// Threshold for region events that do not set their own.
    #[serde(default)]
    pub lambda: LocalizationThreshold,
    /// Reference time of the ensemble.
    #[serde(default)]
    pub t0: f64,
    #[serde(default = "default_ensemble_size")]
    pub ensemble_size: usize,
    /// Grid regions whose localization is reported per member at the last cut.
    #[serde(default)]
    pub probes: Vec<Probe>,
    #[serde(default)]
    pub seed: u64,
}

fn default_ensemble_size() -> usize {
    1000
}

impl HistoryConfig {
    pub(crate) fn override_lambda(&mut self, lambda: LocalizationThreshold) {
        self.lambda = lambda;
        for e in &mut self.events {
            if let EventSpec::Region { lambda: own, .. } = e {
                *own = None;
            }
        }
    }

    pub fn registry(&self) -> Result<Registry> {
        Registry::new(self.events.iter().map(|e| e.to_event(&self.system, self.lambda)).collect::<Result<_>>()?)
    }
}

pub fn run_history(cfg: &HistoryConfig) -> Result<ScenarioReport> {
    require(!cfg.times.is_empty(), || "`times` must not be empty".into())?;
    require(cfg.ensemble_size >= 1, || "`ensemble_size` must be at least 1".into())?;
    let registry = cfg.registry()?;
    let all_times = cfg.events.iter().map(EventSpec::t).chain(cfg.times.iter().copied()).chain([cfg.t0]);
    let (lo, hi) = all_times.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t), hi.max(t)));
    let family = Arc::new(PropagatorFamily::constant(&cfg.system.hamiltonian()?, lo, hi)?);
    let ensemble = sample_ensemble(family.clone(), cfg.t0, cfg.ensemble_size, cfg.seed)?;
    let chain = ensemble.history_chain(&registry, &cfg.times)?;
    let mut report = ScenarioReport::new("history", cfg.seed, ScenarioConfig::History(cfg.clone()).echo());

    let nested = chain.windows(2).all(|w| w[1].alive_ids.is_subset(&w[0].alive_ids));
    let mut series = Series::new("series", &["t", "alive_count"]);
    for entry in &chain {
        series.push(vec![entry.t, entry.alive_count as f64]);
    }
    report.set("ensemble_size", ensemble.len());
    report.set("event_count", registry.len());
    report.set("nested", nested);
    report.set("alive_counts", chain.iter().map(|e| e.alive_count).collect::<Vec<_>>());
    report.set("final_alive_count", chain.last().map(|e| e.alive_count).unwrap_or(0));
    let exact = exact_subspace_solution_set(&registry, cfg.t0, &family);
    report.set("exact_solution_dimension", exact.ok().map(|p| p.projector_rank()));
    report.series.push(series);

    if !cfg.probes.is_empty() {
        let SystemSpec::Grid { grid, .. } = &cfg.system else {
            return invalid("`probes` need a grid system");
        };
        let t_last = *cfg.times.last().expect("non-empty");
        let survivors = ensemble.solution_set(&crate::events::sub_registry_upto(&registry, t_last))?;
        let u = family.propagator(t_last, cfg.t0)?;
        let mut columns = vec!["member_id".to_string(), "alive".to_string()];
        columns.extend(cfg.probes.iter().map(|p| format!("Lambda_{}", p.name)));
        let mut snapshot = Series { name: "snapshot".into(), columns, rows: Vec::new() };
        for (k, m) in survivors.members().iter().enumerate() {
            let psi = u.apply(&m.psi0)?;
            let mut row = vec![m.id as f64, if survivors.is_alive(k) { 1.0 } else { 0.0 }];
            for p in &cfg.probes {
                row.push(degree_probability(&psi, grid, &p.region)?);
            }
            snapshot.rows.push(row);
        }
        report.series.push(snapshot);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spin_chain_is_nested() {
        let text = r#"{
            "system": {"type": "spins", "count": 2, "field": [0, 0, 1]},
            "events": [
                {"kind": "eigenspace", "t": 0.0, "axis": [0, 0, 1], "epsilon": 0.5, "factor": 0},
                {"kind": "eigenspace", "t": 1.0, "axis": [1, 0, 0], "epsilon": 0.6, "factor": 1},
                {"kind": "subspace", "t": 2.0, "vectors": [[[1,0],[0,0],[0,0],[0,0]], [[0,0],[1,0],[0,0],[0,0]]], "epsilon": 0.5}
            ],
            "times": [0.0, 1.0, 2.0],
            "ensemble_size": 300,
            "seed": 5
        }"#;
        let cfg: HistoryConfig = serde_json::from_str(text).unwrap();
        let r = run_history(&cfg).unwrap();
        assert_eq!(r.scalar_bool("nested"), Some(true));
        let alive = r.series("series").unwrap().column("alive_count").unwrap();
        assert!(alive.windows(2).all(|w| w[1] <= w[0]));
        assert!(alive[0] < 300.0);
    }

    #[test]
    fn exact_dimension_for_sharp_events() {
        let text = r#"{
            "system": {"type": "spins", "count": 2},
            "events": [{"kind": "eigenspace", "t": 0.0, "axis": [0, 0, 1], "factor": 0}],
            "times": [0.0],
            "ensemble_size": 4
        }"#;
        let cfg: HistoryConfig = serde_json::from_str(text).unwrap();
        let r = run_history(&cfg).unwrap();
        assert_eq!(r.scalar_f64("exact_solution_dimension"), Some(2.0));
        assert_eq!(r.scalar_f64("final_alive_count"), Some(0.0));
    }

    #[test]
    fn region_event_on_spins_rejected() {
        let text = r#"{
            "system": {"type": "spins", "count": 1},
            "events": [{"kind": "region", "t": 0.0, "region": [[0, 1]]}],
            "times": [0.0]
        }"#;
        let cfg: HistoryConfig = serde_json::from_str(text).unwrap();
        assert!(run_history(&cfg).is_err());
    }
}
