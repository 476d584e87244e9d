//! Two slits as the two components of one region `A`.
//!
//! The source state is the conditional optimum: supported in the slits and
//! putting as much weight as possible into the detection window after
//! `propagation_time`. It is then evolved forward and the density in the
//! window is analysed for fringes.

use serde::{Deserialize, Serialize};

use super::{default_mass, require, ScenarioConfig, WITNESS_TOL};
use crate::error::Result;
use crate::hilbert::{Grid1D, StateVector};
use crate::localization::{degree_probability, LocalizationThreshold, Region1D};
use crate::report::{ScenarioReport, Series};
use crate::two_boundary::{max_conditional_localization, Objective, TwoBoundaryProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoSlitConfig {
    pub grid: Grid1D,
    #[serde(default = "default_mass")]
    pub mass: f64,
    /// Exactly two intervals; they may overlap, which merges the slits.
    pub slits: Vec<[f64; 2]>,
    pub propagation_time: f64,
    pub detection_window: Region1D,
    #[serde(default)]
    pub seed: u64,
}

/// Downstream density and the quantities read off it.
#[derive(Debug, Clone, PartialEq)]
pub struct Screen {
    pub x: Vec<f64>,
    /// Continuum density `|psi_i|^2 / dx` at the window points.
    pub density: Vec<f64>,
    pub window_weight: f64,
    pub source_weight: f64,
}

impl Screen {
    /// `(max - min) / (max + min)` over the window.
    pub fn visibility(&self) -> f64 {
        let max = self.density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.density.iter().copied().fold(f64::INFINITY, f64::min);
        if max + min > 0.0 {
            (max - min) / (max + min)
        } else {
            0.0
        }
    }

    /// Positions of local density maxima above `floor * max`, refined by a
    /// parabola through the three neighbouring samples.
    pub fn peaks(&self, floor: f64) -> Vec<f64> {
        let d = &self.density;
        let max = d.iter().copied().fold(0.0, f64::max);
        let mut out = Vec::new();
        for i in 1..d.len().saturating_sub(1) {
            if d[i] > d[i - 1] && d[i] >= d[i + 1] && d[i] >= floor * max {
                let denom = d[i - 1] - 2.0 * d[i] + d[i + 1];
                let shift = if denom != 0.0 { 0.5 * (d[i - 1] - d[i + 1]) / denom } else { 0.0 };
                out.push(self.x[i] + shift * (self.x[i + 1] - self.x[i]));
            }
        }
        out
    }

    /// Mean spacing of neighbouring peaks, if there are at least two.
    pub fn fringe_spacing(&self, floor: f64) -> Option<f64> {
        let p = self.peaks(floor);
        (p.len() >= 2).then(|| (p[p.len() - 1] - p[0]) / (p.len() - 1) as f64)
    }
}

/// Conditional optimum for `source`, evolved to the screen.
pub fn screen_for(cfg: &TwoSlitConfig, source: &Region1D) -> Result<Screen> {
    let grid = cfg.grid;
    let problem = TwoBoundaryProblem::free_particle(
        grid,
        source.clone(),
        cfg.detection_window.clone(),
        0.0,
        cfg.propagation_time,
        cfg.mass,
        LocalizationThreshold::DEFAULT,
        Objective::Conditional,
    )?;
    let best = max_conditional_localization(&problem)?;
    let psi: StateVector = problem.propagator().apply(&best.witness)?;
    let source_weight = degree_probability(&best.witness, &grid, source)?;
    let window_weight = degree_probability(&psi, &grid, &cfg.detection_window)?;
    require((window_weight - best.lambda_b).abs() <= WITNESS_TOL, || {
        format!("witness re-check failed: {window_weight} vs {}", best.lambda_b)
    })?;
    let mask = cfg.detection_window.mask(&grid)?;
    let dx = grid.dx();
    let (mut x, mut density) = (Vec::new(), Vec::new());
    for (i, z) in psi.as_slice().iter().enumerate() {
        if mask[i] {
            x.push(grid.x(i));
            density.push(z.norm_sqr() / dx);
        }
    }
    Ok(Screen { x, density, window_weight, source_weight })
}

/// Largest `|rho(x) - rho(-x)|` over window points whose mirror image is
/// also in the window, relative to the peak density.
pub fn asymmetry(grid: &Grid1D, window: &Region1D, psi_density: &Screen) -> Result<f64> {
    let n = grid.n_points();
    let mask = window.mask(grid)?;
    let index: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    let at = |i: usize| index.binary_search(&i).ok().map(|k| psi_density.density[k]);
    let peak = psi_density.density.iter().copied().fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for &i in &index {
        if let (Some(a), Some(b)) = (at(i), at((n - i) % n)) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(if peak > 0.0 { worst / peak } else { 0.0 })
}

/// Fraction of the peak below which maxima are not counted as fringes.
const PEAK_FLOOR: f64 = 0.05;

pub fn run_two_slit(cfg: &TwoSlitConfig) -> Result<ScenarioReport> {
    require(cfg.slits.len() == 2, || format!("`slits` needs exactly two intervals, got {}", cfg.slits.len()))?;
    require(cfg.propagation_time > 0.0, || "`propagation_time` must be positive".into())?;
    let left = Region1D::interval(cfg.slits[0][0], cfg.slits[0][1])?;
    let right = Region1D::interval(cfg.slits[1][0], cfg.slits[1][1])?;
    let both = left.union(&right);
    let mut report = ScenarioReport::new("two_slit", cfg.seed, ScenarioConfig::TwoSlit(cfg.clone()).echo());

    let main = screen_for(cfg, &both)?;
    let solo_left = screen_for(cfg, &left)?;
    let solo_right = screen_for(cfg, &right)?;

    let centre = |r: &Region1D| {
        let (lo, hi) = r.intervals()[0];
        0.5 * (lo + hi)
    };
    let separation = (centre(&right) - centre(&left)).abs();
    report.set("components", both.components());
    report.set("slit_separation", separation);
    report.set("source_weight", main.source_weight);
    report.set("window_weight", main.window_weight);
    report.set("visibility", main.visibility());
    report.set("visibility_left_only", solo_left.visibility());
    report.set("visibility_right_only", solo_right.visibility());
    report.set("fringe_count", main.peaks(PEAK_FLOOR).len());
    report.set("fringe_spacing", main.fringe_spacing(PEAK_FLOOR));
    if separation > 0.0 {
        // lambda_dB * L / d with L = v T and lambda_dB = 2 pi / (m v)
        report.set("fringe_spacing_predicted", 2.0 * std::f64::consts::PI * cfg.propagation_time / (cfg.mass * separation));
    }
    report.set("density_asymmetry", asymmetry(&cfg.grid, &cfg.detection_window, &main)?);

    let mut series = Series::new("density", &["x", "density", "density_left_only", "density_right_only"]);
    for k in 0..main.x.len() {
        series.push(vec![main.x[k], main.density[k], solo_left.density[k], solo_right.density[k]]);
    }
    report.series.push(series);
    Ok(report)
}
