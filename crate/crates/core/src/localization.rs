//! Regions on a 1D grid and the degree-of-localization functionals.
//!
//! Intervals are half-open `[lo, hi)`. A grid cell is centred on its grid
//! point and belongs to a region iff that point does.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hilbert::{check_dim, Grid1D, Observable, StateVector, C64};

/// Slack applied to every threshold comparison (`weight >= threshold - slack`).
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Union of disjoint half-open intervals, sorted and merged.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Region1D {
    intervals: Vec<(f64, f64)>,
}

impl TryFrom<Vec<[f64; 2]>> for Region1D {
    type Error = crate::error::Error;
    fn try_from(v: Vec<[f64; 2]>) -> Result<Self> {
        Region1D::new(v.into_iter().map(|[a, b]| (a, b)).collect())
    }
}

impl From<Region1D> for Vec<[f64; 2]> {
    fn from(r: Region1D) -> Self {
        r.intervals.into_iter().map(|(a, b)| [a, b]).collect()
    }
}

impl Region1D {
    pub fn new(mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        for &(lo, hi) in &intervals {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return invalid(format!("region interval [{lo}, {hi}) needs finite lo < hi"));
            }
        }
        intervals.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
        for (lo, hi) in intervals {
            match merged.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        Ok(Self { intervals: merged })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![(lo, hi)])
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn full(grid: &Grid1D) -> Self {
        Self { intervals: vec![(grid.x_min(), grid.x_max())] }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    /// Number of connected components.
    pub fn components(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| x >= lo && x < hi)
    }

    pub fn shifted(&self, by: f64) -> Self {
        Self { intervals: self.intervals.iter().map(|&(a, b)| (a + by, b + by)).collect() }
    }

    pub fn union(&self, other: &Region1D) -> Self {
        let mut all = self.intervals.clone();
        all.extend_from_slice(&other.intervals);
        Self::new(all).expect("union of valid regions")
    }

    /// Set inclusion of the continuum regions.
    pub fn is_subset_of(&self, other: &Region1D) -> bool {
        self.intervals
            .iter()
            .all(|&(lo, hi)| other.intervals.iter().any(|&(a, b)| a <= lo && hi <= b))
    }

    /// Complement inside the grid domain `[x_min, x_max)`.
    pub fn complement(&self, grid: &Grid1D) -> Self {
        let mut out = Vec::new();
        let mut cursor = grid.x_min();
        for &(lo, hi) in &self.intervals {
            if lo > cursor {
                out.push((cursor, lo.min(grid.x_max())));
            }
            cursor = cursor.max(hi);
        }
        if cursor < grid.x_max() {
            out.push((cursor, grid.x_max()));
        }
        out.retain(|&(a, b)| a < b);
        Self { intervals: out }
    }

    /// Membership of each grid point. Fails if the region leaves the domain.
    pub fn mask(&self, grid: &Grid1D) -> Result<Vec<bool>> {
        let slack = 1e-9 * grid.dx();
        for &(lo, hi) in &self.intervals {
            if lo < grid.x_min() - slack || hi > grid.x_max() + slack {
                return invalid(format!(
                    "region [{lo}, {hi}) lies outside the grid domain [{}, {})",
                    grid.x_min(),
                    grid.x_max()
                ));
            }
        }
        Ok((0..grid.n_points()).map(|i| self.contains(grid.x(i))).collect())
    }

    /// Number of grid points inside.
    pub fn point_count(&self, grid: &Grid1D) -> Result<usize> {
        Ok(self.mask(grid)?.into_iter().filter(|&b| b).count())
    }
}

/// Threshold `0 < lambda <= 1` for the localization relation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct LocalizationThreshold(f64);

impl LocalizationThreshold {
    pub const DEFAULT: LocalizationThreshold = LocalizationThreshold(0.9);

    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value <= 1.0 {
            Ok(Self(value))
        } else {
            invalid(format!("localization threshold must lie in (0, 1], got {value}"))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for LocalizationThreshold {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl TryFrom<f64> for LocalizationThreshold {
    type Error = crate::error::Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LocalizationThreshold> for f64 {
    fn from(t: LocalizationThreshold) -> f64 {
        t.0
    }
}

/// Diagonal 0/1 projector of `region` in the position basis.
pub fn region_projector(grid: &Grid1D, region: &Region1D) -> Result<Observable> {
    let mask = region.mask(grid)?;
    let diag = DVector::from_iterator(mask.len(), mask.iter().map(|&b| C64::new(if b { 1.0 } else { 0.0 }, 0.0)));
    Observable::new(DMatrix::from_diagonal(&diag), "region")
}

pub(crate) fn mask_weight(psi: &[C64], mask: &[bool]) -> f64 {
    psi.iter().zip(mask).filter(|(_, &m)| m).map(|(z, _)| z.norm_sqr()).sum()
}

fn prepare(psi: &StateVector, grid: &Grid1D, region: &Region1D) -> Result<Vec<bool>> {
    check_dim(grid.n_points(), psi.dim())?;
    psi.require_normalized("state")?;
    region.mask(grid)
}

/// Probability mass `<psi|P_A|psi>` inside the region.
pub fn degree_probability(psi: &StateVector, grid: &Grid1D, region: &Region1D) -> Result<f64> {
    let mask = prepare(psi, grid, region)?;
    Ok(mask_weight(psi.as_slice(), &mask).clamp(0.0, 1.0))
}

/// Riemann sum of the continuum amplitude `psi(x) = psi_i / sqrt(dx)` over
/// the region, i.e. `sum_{i in A} psi_i sqrt(dx)`.
pub fn degree_amplitude(psi: &StateVector, grid: &Grid1D, region: &Region1D) -> Result<C64> {
    let mask = prepare(psi, grid, region)?;
    Ok(amplitude_sum(psi.as_slice(), &mask, grid.dx()))
}

pub(crate) fn amplitude_sum(psi: &[C64], mask: &[bool], dx: f64) -> C64 {
    let s: C64 = psi.iter().zip(mask).filter(|(_, &m)| m).map(|(z, _)| *z).sum();
    s * dx.sqrt()
}

/// `psi` is localized in the region at level `lambda` (probability variant).
pub fn is_localized(
    psi: &StateVector,
    grid: &Grid1D,
    region: &Region1D,
    lambda: LocalizationThreshold,
) -> Result<bool> {
    Ok(degree_probability(psi, grid, region)? >= lambda.value() - MEMBERSHIP_TOL)
}
