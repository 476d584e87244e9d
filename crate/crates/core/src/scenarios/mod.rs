//! End-to-end scenarios. Each takes a serde config and returns a
//! [`ScenarioReport`]; every witness is re-checked by forward evolution
//! before it is reported.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hilbert::{Grid1D, Hamiltonian, StateVector};
use crate::localization::{LocalizationThreshold, Region1D};
use crate::report::ScenarioReport;

pub mod eprb;
pub mod history;
pub mod problem;
pub mod spins;
pub mod transit;
pub mod two_slit;

pub use eprb::{run_eprb, EprbConfig};
pub use history::{run_history, HistoryConfig};
pub use problem::{run_problem, ProblemConfig};
pub use spins::{run_successive_spins, SpinsConfig};
pub use transit::{run_transit, TransitConfig};
pub use two_slit::{run_two_slit, TwoSlitConfig};

/// Tolerance for re-checking a reported witness against its stored values.
pub const WITNESS_TOL: f64 = 1e-9;

/// One scenario or problem, tagged by the `scenario` field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum ScenarioConfig {
    Transit(TransitConfig),
    TwoSlit(TwoSlitConfig),
    Eprb(EprbConfig),
    SuccessiveSpins(SpinsConfig),
    History(HistoryConfig),
    TwoBoundary(ProblemConfig),
}

impl ScenarioConfig {
    pub const NAMES: [&'static str; 6] = ["transit", "two_slit", "eprb", "successive_spins", "history", "two_boundary"];

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parse a config body, taking the scenario name from outside when the
    /// document does not carry one.
    pub fn from_json_with_name(text: &str, name: Option<&str>) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let obj = value.as_object_mut().ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
        match (obj.get("scenario").and_then(|v| v.as_str()), name) {
            (Some(inner), Some(outer)) if inner != outer => {
                return Err(Error::Config(format!("`scenario`: config says `{inner}` but `{outer}` was requested")));
            }
            (None, Some(outer)) => {
                obj.insert("scenario".into(), outer.into());
            }
            (None, None) => return Err(Error::Config("missing field `scenario`".into())),
            _ => {}
        }
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioConfig::Transit(_) => "transit",
            ScenarioConfig::TwoSlit(_) => "two_slit",
            ScenarioConfig::Eprb(_) => "eprb",
            ScenarioConfig::SuccessiveSpins(_) => "successive_spins",
            ScenarioConfig::History(_) => "history",
            ScenarioConfig::TwoBoundary(_) => "two_boundary",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ScenarioConfig::Transit(c) => c.seed,
            ScenarioConfig::TwoSlit(c) => c.seed,
            ScenarioConfig::Eprb(c) => c.seed,
            ScenarioConfig::SuccessiveSpins(c) => c.seed,
            ScenarioConfig::History(c) => c.seed,
            ScenarioConfig::TwoBoundary(c) => c.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ScenarioConfig::Transit(c) => c.seed = seed,
            ScenarioConfig::TwoSlit(c) => c.seed = seed,
            ScenarioConfig::Eprb(c) => c.seed = seed,
            ScenarioConfig::SuccessiveSpins(c) => c.seed = seed,
            ScenarioConfig::History(c) => c.seed = seed,
            ScenarioConfig::TwoBoundary(c) => c.seed = seed,
        }
    }

    pub fn set_ensemble_size(&mut self, n: usize) -> Result<()> {
        match self {
            ScenarioConfig::Transit(c) => c.ensemble_size = n,
            ScenarioConfig::History(c) => c.ensemble_size = n,
            other => return Err(Error::Config(format!("`ensemble_size`: scenario `{}` has no ensemble", other.name()))),
        }
        Ok(())
    }

    /// Replace the localization threshold. For `history` this also clears
    /// per-event thresholds so the override applies everywhere.
    pub fn set_lambda(&mut self, lambda: f64) -> Result<()> {
        let t = LocalizationThreshold::new(lambda).map_err(|e| Error::Config(format!("`lambda`: {e}")))?;
        match self {
            ScenarioConfig::Transit(c) => c.lambda = t,
            ScenarioConfig::TwoBoundary(c) => c.lambda = t,
            ScenarioConfig::History(c) => c.override_lambda(t),
            other => return Err(Error::Config(format!("`lambda`: scenario `{}` has no threshold", other.name()))),
        }
        Ok(())
    }

    pub fn run(&self) -> Result<ScenarioReport> {
        match self {
            ScenarioConfig::Transit(c) => run_transit(c),
            ScenarioConfig::TwoSlit(c) => run_two_slit(c),
            ScenarioConfig::Eprb(c) => run_eprb(c),
            ScenarioConfig::SuccessiveSpins(c) => run_successive_spins(c),
            ScenarioConfig::History(c) => run_history(c),
            ScenarioConfig::TwoBoundary(c) => run_problem(c),
        }
    }

    pub(crate) fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Gaussian packet `exp(-(x - x0)^2 / 4 sigma^2 + i k0 x)`; `sigma` is the
/// position standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub x0: f64,
    pub sigma: f64,
    #[serde(default)]
    pub k0: f64,
}

impl GaussianSpec {
    pub fn state(&self, grid: &Grid1D) -> Result<StateVector> {
        if !(self.sigma > 0.0) {
            return invalid(format!("`gaussian.sigma` must be positive, got {}", self.sigma));
        }
        grid.gaussian(self.x0, self.sigma, self.k0)
    }
}

/// External potential on a grid.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    #[default]
    Free,
    /// `m omega^2 (x - center)^2 / 2`.
    Harmonic {
        omega: f64,
        #[serde(default)]
        center: f64,
    },
    /// Constant `height` on `region`, zero elsewhere.
    Barrier { region: Region1D, height: f64 },
}

impl PotentialSpec {
    pub fn hamiltonian(&self, grid: Grid1D, mass: f64) -> Result<Hamiltonian> {
        let h = match self {
            PotentialSpec::Free => Hamiltonian::FreeParticle { grid, mass },
            PotentialSpec::Harmonic { omega, center } => Hamiltonian::Grid {
                grid,
                mass,
                potential: grid.points().iter().map(|x| 0.5 * mass * omega * omega * (x - center).powi(2)).collect(),
            },
            PotentialSpec::Barrier { region, height } => {
                let mask = region.mask(&grid)?;
                Hamiltonian::Grid { grid, mass, potential: mask.iter().map(|&m| if m { *height } else { 0.0 }).collect() }
            }
        };
        h.validate()?;
        Ok(h)
    }
}

pub(crate) fn default_mass() -> f64 {
    1.0
}

pub(crate) fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        invalid(msg())
    }
}

/// `n` evenly spaced times from `a` to `b`, hitting both ends exactly.
pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![b],
        _ => (0..n)
            .map(|k| if k + 1 == n { b } else { a + (b - a) * k as f64 / (n - 1) as f64 })
            .collect(),
    }
}
