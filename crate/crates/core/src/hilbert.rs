//! Finite-dimensional Hilbert-space kernel.
//!
//! States are plain complex vectors. Grid states use the discrete
//! normalization `sum |psi_i|^2 = 1`, so `psi_i` plays the role of
//! `psi(x_i) * sqrt(dx)`. Units: hbar = 1 throughout.
//!
//! Propagators keep a lazy representation (spectral, diagonal, FFT-kinetic or
//! a time-ordered product) and only become dense matrices on request.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;

/// Tolerance for `|norm - 1|` of a normalized state.
pub const NORM_TOL: f64 = 1e-12;
/// Max-entry tolerance for Hermiticity checks.
pub const HERMITIAN_TOL: f64 = 1e-10;

const TIME_SLACK: f64 = 1e-12;

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// StateVector

/// A vector of complex amplitudes on a finite basis.
#[derive(Clone, PartialEq)]
pub struct StateVector {
    amps: DVector<C64>,
}

impl fmt::Debug for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StateVector(dim={}, norm={:.15})", self.dim(), self.norm())
    }
}

impl StateVector {
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        Self::from_dvector(DVector::from_vec(amps))
    }

    pub fn from_dvector(amps: DVector<C64>) -> Result<Self> {
        if amps.is_empty() {
            return invalid("state vector must have positive dimension");
        }
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return invalid("state vector has non-finite amplitudes");
        }
        Ok(Self { amps })
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Computational basis vector `|index>`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return invalid(format!("basis index {index} out of range for dim {dim}"));
        }
        let mut amps = DVector::zeros(dim);
        amps[index] = C64::new(1.0, 0.0);
        Ok(Self { amps })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn as_slice(&self) -> &[C64] {
        self.amps.as_slice()
    }

    pub fn into_dvector(self) -> DVector<C64> {
        self.amps
    }

    pub fn norm_squared(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() <= NORM_TOL
    }

    pub(crate) fn require_normalized(&self, what: &str) -> Result<()> {
        if self.is_normalized() {
            Ok(())
        } else {
            invalid(format!("{what} is not normalized (norm = {})", self.norm()))
        }
    }

    /// The same ray with unit norm. Fails on the zero vector.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return invalid("cannot normalize the zero vector");
        }
        Ok(Self { amps: &self.amps / C64::new(n, 0.0) })
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.amps.dotc(&other.amps))
    }

    pub fn scaled(&self, alpha: C64) -> Self {
        Self { amps: &self.amps * alpha }
    }

    /// Multiply by `e^{i theta}`.
    pub fn with_phase(&self, theta: f64) -> Self {
        self.scaled(C64::from_polar(1.0, theta))
    }

    /// Largest entrywise distance to `other`.
    pub fn max_distance(&self, other: &StateVector) -> f64 {
        self.amps.iter().zip(other.amps.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}

// ---------------------------------------------------------------------------
// Grid1D

/// Uniform periodic grid; point `i` sits at `x_min + i * dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid1D {
    n_points: usize,
    x_min: f64,
    x_max: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    n_points: usize,
    x_min: f64,
    x_max: f64,
}

impl TryFrom<GridSpec> for Grid1D {
    type Error = Error;
    fn try_from(s: GridSpec) -> Result<Self> {
        Grid1D::new(s.n_points, s.x_min, s.x_max)
    }
}

impl From<Grid1D> for GridSpec {
    fn from(g: Grid1D) -> Self {
        GridSpec { n_points: g.n_points, x_min: g.x_min, x_max: g.x_max }
    }
}

impl Grid1D {
    pub fn new(n_points: usize, x_min: f64, x_max: f64) -> Result<Self> {
        if n_points < 2 || !n_points.is_power_of_two() {
            return invalid(format!("grid n_points must be a power of two >= 2, got {n_points}"));
        }
        if !x_min.is_finite() || !x_max.is_finite() || x_max <= x_min {
            return invalid(format!("grid requires x_min < x_max, got [{x_min}, {x_max}]"));
        }
        Ok(Self { n_points, x_min, x_max })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.length() / self.n_points as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points as i64;
        let dk = 2.0 * PI / self.length();
        (0..n).map(|j| if j < n / 2 { j } else { j - n } as f64 * dk).collect()
    }

    /// Sample a continuum wavefunction and apply the discrete normalization.
    pub fn sample(&self, f: impl Fn(f64) -> C64) -> Result<StateVector> {
        StateVector::new(self.points().into_iter().map(f).collect())?.normalized()
    }

    /// Normalized Gaussian packet with position standard deviation `sigma`
    /// (of `|psi|^2`), centre `x0` and mean wavenumber `k0`.
    pub fn gaussian(&self, x0: f64, sigma: f64, k0: f64) -> Result<StateVector> {
        if !(sigma > 0.0) {
            return invalid("gaussian width must be positive");
        }
        self.sample(|x| {
            let d = x - x0;
            C64::from_polar((-(d * d) / (4.0 * sigma * sigma)).exp(), k0 * x)
        })
    }
}

// ---------------------------------------------------------------------------
// Observable

/// Hermitian matrix with a label.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    matrix: DMatrix<C64>,
    label: String,
}

impl Observable {
    pub fn new(matrix: DMatrix<C64>, label: impl Into<String>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return invalid("observable matrix must be square and non-empty");
        }
        let defect = max_abs(&(&matrix - matrix.adjoint()));
        if !(defect <= HERMITIAN_TOL) {
            return invalid(format!("observable is not Hermitian (defect {defect:e})"));
        }
        Ok(Self { matrix, label: label.into() })
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: DMatrix::identity(dim, dim), label: "I".into() }
    }

    pub fn zero(dim: usize) -> Self {
        Self { matrix: DMatrix::zeros(dim, dim), label: "0".into() }
    }

    /// Rank-one projector `|psi><psi|` onto the ray of `psi`.
    pub fn ray_projector(psi: &StateVector) -> Result<Self> {
        let v = psi.normalized()?.into_dvector();
        Ok(Self { matrix: &v * v.adjoint(), label: "ray".into() })
    }

    /// Orthogonal projector onto the span of orthonormal columns.
    pub fn from_orthonormal_columns(cols: &DMatrix<C64>, label: impl Into<String>) -> Self {
        Self { matrix: cols * cols.adjoint(), label: label.into() }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    /// `||P^2 - P||_max`.
    pub fn idempotency_defect(&self) -> f64 {
        max_abs(&(&self.matrix * &self.matrix - &self.matrix))
    }

    pub fn is_projector(&self, tol: f64) -> bool {
        self.idempotency_defect() <= tol
    }

    /// Rank of a projector (its rounded trace).
    pub fn projector_rank(&self) -> usize {
        self.trace().round().max(0.0) as usize
    }

    /// `<psi|A|psi>` (real part).
    pub fn expectation(&self, psi: &StateVector) -> Result<f64> {
        check_dim(self.dim(), psi.dim())?;
        let a = psi.amplitudes();
        Ok(a.dotc(&(&self.matrix * a)).re)
    }

    pub fn conjugated(&self, u: &DMatrix<C64>) -> Self {
        let m = u * &self.matrix * u.adjoint();
        let m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        Self { matrix: m, label: self.label.clone() }
    }
}

pub fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

// ---------------------------------------------------------------------------
// Hamiltonians and their diagonalized generators

/// Hamiltonian descriptor (energy units, hbar = 1).
#[derive(Debug, Clone, PartialEq)]
pub enum Hamiltonian {
    Dense(DMatrix<C64>),
    /// Diagonal in the computational basis.
    Diagonal(Vec<f64>),
    /// `k^2 / 2m` on a periodic grid, diagonal in momentum space.
    FreeParticle { grid: Grid1D, mass: f64 },
    /// Kinetic term plus a position-space potential.
    Grid { grid: Grid1D, mass: f64, potential: Vec<f64> },
}

impl Hamiltonian {
    pub fn dim(&self) -> usize {
        match self {
            Hamiltonian::Dense(m) => m.nrows(),
            Hamiltonian::Diagonal(d) => d.len(),
            Hamiltonian::FreeParticle { grid, .. } | Hamiltonian::Grid { grid, .. } => grid.n_points(),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Hamiltonian::Diagonal(vec![0.0; dim])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Hamiltonian::Dense(m) => {
                if !m.is_square() || m.nrows() == 0 {
                    return invalid("Hamiltonian matrix must be square and non-empty");
                }
                let defect = max_abs(&(m - m.adjoint()));
                if !(defect <= HERMITIAN_TOL) {
                    return invalid(format!("Hamiltonian is not Hermitian (defect {defect:e})"));
                }
            }
            Hamiltonian::Diagonal(d) => {
                if d.is_empty() || d.iter().any(|x| !x.is_finite()) {
                    return invalid("diagonal Hamiltonian must be non-empty and finite");
                }
            }
            Hamiltonian::FreeParticle { mass, .. } => check_mass(*mass)?,
            Hamiltonian::Grid { grid, mass, potential } => {
                check_mass(*mass)?;
                check_dim(grid.n_points(), potential.len())?;
                if potential.iter().any(|x| !x.is_finite()) {
                    return invalid("potential has non-finite entries");
                }
            }
        }
        Ok(())
    }

    /// Dense matrix form. Grid kinetic terms go through the DFT.
    pub fn to_matrix(&self) -> DMatrix<C64> {
        match self {
            Hamiltonian::Dense(m) => m.clone(),
            Hamiltonian::Diagonal(d) => {
                DMatrix::from_diagonal(&DVector::from_iterator(d.len(), d.iter().map(|&x| C64::new(x, 0.0))))
            }
            Hamiltonian::FreeParticle { grid, mass } => kinetic_matrix(grid, *mass),
            Hamiltonian::Grid { grid, mass, potential } => {
                let mut m = kinetic_matrix(grid, *mass);
                for (i, v) in potential.iter().enumerate() {
                    m[(i, i)] += C64::new(*v, 0.0);
                }
                m
            }
        }
    }
}

fn check_mass(mass: f64) -> Result<()> {
    if mass > 0.0 && mass.is_finite() {
        Ok(())
    } else {
        invalid(format!("mass must be positive, got {mass}"))
    }
}

fn kinetic_matrix(grid: &Grid1D, mass: f64) -> DMatrix<C64> {
    let n = grid.n_points();
    let ks = grid.wavenumbers();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut col = DVector::zeros(n);
        col[j] = C64::new(1.0, 0.0);
        spectral_multiply(col.as_mut_slice(), |idx| C64::new(ks[idx] * ks[idx] / (2.0 * mass), 0.0));
        m.set_column(j, &col);
    }
    (&m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// A Hamiltonian brought into a form whose exponential is cheap.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Eigen { basis: Arc<DMatrix<C64>>, energies: Arc<Vec<f64>> },
    Diagonal(Arc<Vec<f64>>),
    Kinetic { grid: Grid1D, mass: f64 },
}

impl Generator {
    pub fn from_hamiltonian(h: &Hamiltonian) -> Result<Self> {
        h.validate()?;
        Ok(match h {
            Hamiltonian::Diagonal(d) => Generator::Diagonal(Arc::new(d.clone())),
            Hamiltonian::FreeParticle { grid, mass } => Generator::Kinetic { grid: *grid, mass: *mass },
            Hamiltonian::Dense(_) | Hamiltonian::Grid { .. } => {
                let eig = crate::eigen::hermitian_eigen(&h.to_matrix());
                Generator::Eigen { basis: Arc::new(eig.vectors), energies: Arc::new(eig.values) }
            }
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Generator::Eigen { energies, .. } => energies.len(),
            Generator::Diagonal(d) => d.len(),
            Generator::Kinetic { grid, .. } => grid.n_points(),
        }
    }

    fn action(&self, dt: f64) -> Action {
        if dt == 0.0 {
            return Action::Identity;
        }
        match self {
            Generator::Eigen { basis, energies } => {
                Action::Eigen { basis: basis.clone(), energies: energies.clone(), dt }
            }
            Generator::Diagonal(d) => Action::Diagonal { energies: d.clone(), dt },
            Generator::Kinetic { grid, mass } => Action::Kinetic { grid: *grid, mass: *mass, dt },
        }
    }
}

// ---------------------------------------------------------------------------
// FFT helpers

type FftPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn fft_pair(n: usize) -> FftPair {
    static CACHE: OnceLock<Mutex<HashMap<usize, FftPair>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        })
        .clone()
}

/// Apply `F^{-1} diag(f(k)) F` in place.
fn spectral_multiply(data: &mut [C64], f: impl Fn(usize) -> C64) {
    let n = data.len();
    let (fwd, inv) = fft_pair(n);
    fwd.process(data);
    let scale = 1.0 / n as f64;
    for (idx, z) in data.iter_mut().enumerate() {
        *z *= f(idx) * scale;
    }
    inv.process(data);
}

// ---------------------------------------------------------------------------
// Propagators

#[derive(Debug, Clone, PartialEq)]
enum Action {
    Identity,
    Dense(Arc<DMatrix<C64>>),
    Eigen { basis: Arc<DMatrix<C64>>, energies: Arc<Vec<f64>>, dt: f64 },
    Diagonal { energies: Arc<Vec<f64>>, dt: f64 },
    Kinetic { grid: Grid1D, mass: f64, dt: f64 },
    /// Applied first to last.
    Product(Vec<Action>),
}

impl Action {
    fn apply(&self, v: &mut DVector<C64>) {
        match self {
            Action::Identity => {}
            Action::Dense(m) => *v = m.as_ref() * &*v,
            Action::Eigen { basis, energies, dt } => {
                let mut c = basis.ad_mul(v);
                for (ci, e) in c.iter_mut().zip(energies.iter()) {
                    *ci *= C64::from_polar(1.0, -e * dt);
                }
                *v = basis.as_ref() * c;
            }
            Action::Diagonal { energies, dt } => {
                for (vi, e) in v.iter_mut().zip(energies.iter()) {
                    *vi *= C64::from_polar(1.0, -e * dt);
                }
            }
            Action::Kinetic { grid, mass, dt } => {
                let ks = grid.wavenumbers();
                let c = dt / (2.0 * mass);
                spectral_multiply(v.as_mut_slice(), |idx| C64::from_polar(1.0, -ks[idx] * ks[idx] * c));
            }
            Action::Product(parts) => {
                for p in parts {
                    p.apply(v);
                }
            }
        }
    }

    fn adjoint(&self) -> Action {
        match self {
            Action::Identity => Action::Identity,
            Action::Dense(m) => Action::Dense(Arc::new(m.adjoint())),
            Action::Eigen { basis, energies, dt } => {
                Action::Eigen { basis: basis.clone(), energies: energies.clone(), dt: -dt }
            }
            Action::Diagonal { energies, dt } => Action::Diagonal { energies: energies.clone(), dt: -dt },
            Action::Kinetic { grid, mass, dt } => Action::Kinetic { grid: *grid, mass: *mass, dt: -dt },
            Action::Product(parts) => Action::Product(parts.iter().rev().map(Action::adjoint).collect()),
        }
    }

    fn then(self, later: Action) -> Action {
        match (self, later) {
            (Action::Identity, b) => b,
            (a, Action::Identity) => a,
            (Action::Product(mut a), Action::Product(b)) => {
                a.extend(b);
                Action::Product(a)
            }
            (Action::Product(mut a), b) => {
                a.push(b);
                Action::Product(a)
            }
            (a, Action::Product(mut b)) => {
                b.insert(0, a);
                Action::Product(b)
            }
            (a, b) => Action::Product(vec![a, b]),
        }
    }
}

/// Unitary evolution operator from `t_a` to `t_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagator {
    t_a: f64,
    t_b: f64,
    dim: usize,
    action: Action,
}

impl Propagator {
    pub fn identity(dim: usize, t: f64) -> Self {
        Self { t_a: t, t_b: t, dim, action: Action::Identity }
    }

    /// Wrap a dense matrix, checking unitarity to `1e-10`.
    pub fn from_matrix(m: DMatrix<C64>, t_a: f64, t_b: f64) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return invalid("propagator matrix must be square and non-empty");
        }
        let dim = m.nrows();
        let defect = max_abs(&(m.adjoint() * &m - DMatrix::<C64>::identity(dim, dim)));
        if !(defect <= 1e-10) {
            return invalid(format!("matrix is not unitary (defect {defect:e})"));
        }
        Ok(Self { t_a, t_b, dim, action: Action::Dense(Arc::new(m)) })
    }

    pub fn t_a(&self) -> f64 {
        self.t_a
    }

    pub fn t_b(&self) -> f64 {
        self.t_b
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.action, Action::Identity)
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        check_dim(self.dim, psi.dim())?;
        let mut v = psi.amplitudes().clone();
        self.action.apply(&mut v);
        Ok(StateVector { amps: v })
    }

    pub(crate) fn apply_vector(&self, v: &mut DVector<C64>) {
        self.action.apply(v);
    }

    /// Dense matrix, built column by column for lazy representations.
    pub fn matrix(&self) -> DMatrix<C64> {
        match &self.action {
            Action::Dense(m) => m.as_ref().clone(),
            Action::Identity => DMatrix::identity(self.dim, self.dim),
            Action::Eigen { basis, energies, dt } => {
                let phases = DVector::from_iterator(
                    energies.len(),
                    energies.iter().map(|e| C64::from_polar(1.0, -e * dt)),
                );
                let mut scaled = basis.as_ref().clone();
                for (j, p) in phases.iter().enumerate() {
                    for z in scaled.column_mut(j).iter_mut() {
                        *z *= p;
                    }
                }
                scaled * basis.adjoint()
            }
            _ => {
                let mut m = DMatrix::zeros(self.dim, self.dim);
                for j in 0..self.dim {
                    let mut col = DVector::zeros(self.dim);
                    col[j] = C64::new(1.0, 0.0);
                    self.action.apply(&mut col);
                    m.set_column(j, &col);
                }
                m
            }
        }
    }

    /// `U^dagger`, relabelled `(t_a, t_b) -> (-t_b, -t_a)`.
    pub fn adjoint(&self) -> Self {
        Self { t_a: -self.t_b, t_b: -self.t_a, dim: self.dim, action: self.action.adjoint() }
    }

    /// Plain inverse `U(t_a, t_b)` keeping the original time axis.
    pub fn inverse(&self) -> Self {
        Self { t_a: self.t_b, t_b: self.t_a, dim: self.dim, action: self.action.adjoint() }
    }

    /// `later * self`: evolve with `self`, then with `later`.
    pub fn then(&self, later: &Propagator) -> Result<Self> {
        check_dim(self.dim, later.dim)?;
        let scale = 1.0 + self.t_b.abs().max(later.t_a.abs());
        if (later.t_a - self.t_b).abs() > 1e-9 * scale {
            return invalid(format!(
                "propagators are not adjacent in time: {} then {}",
                self.t_b, later.t_a
            ));
        }
        Ok(Self {
            t_a: self.t_a,
            t_b: later.t_b,
            dim: self.dim,
            action: self.action.clone().then(later.action.clone()),
        })
    }

    /// `||U^dagger U - I||_max`.
    pub fn unitarity_defect(&self) -> f64 {
        let m = self.matrix();
        max_abs(&(m.adjoint() * &m - DMatrix::<C64>::identity(self.dim, self.dim)))
    }

    fn relabel(mut self, t_a: f64, t_b: f64) -> Self {
        self.t_a = t_a;
        self.t_b = t_b;
        self
    }
}

/// `exp(-i (t_b - t_a) H)` for a time-independent Hamiltonian.
pub fn make_propagator(h: &Hamiltonian, t_a: f64, t_b: f64) -> Result<Propagator> {
    if !t_a.is_finite() || !t_b.is_finite() {
        return invalid("propagator times must be finite");
    }
    if t_b < t_a {
        return Err(Error::Ordering { t_a, t_b });
    }
    let gen = Generator::from_hamiltonian(h)?;
    Ok(Propagator { t_a, t_b, dim: gen.dim(), action: gen.action(t_b - t_a) })
}

/// Time-ordered product `U_n ... U_1` of piecewise-constant segments starting
/// at `t_start`. An empty list gives the identity with zero duration.
pub fn compose_time_ordered(dim: usize, t_start: f64, segments: &[(Hamiltonian, f64)]) -> Result<Propagator> {
    let mut total = Propagator::identity(dim, t_start);
    let mut t = t_start;
    for (h, duration) in segments {
        if !(*duration >= 0.0) {
            return invalid(format!("segment duration must be non-negative, got {duration}"));
        }
        let u = make_propagator(h, t, t + duration)?;
        total = total.then(&u)?;
        t += duration;
    }
    Ok(total)
}

pub fn evolve(psi: &StateVector, u: &Propagator) -> Result<StateVector> {
    u.apply(psi)
}

pub fn adjoint(u: &Propagator) -> Propagator {
    u.adjoint()
}

/// Spectral free-particle step: phases `e^{-i k^2 dt / 2m}` in momentum space.
pub fn free_particle_propagator(grid: &Grid1D, mass: f64, dt: f64) -> Result<Propagator> {
    check_mass(mass)?;
    if !dt.is_finite() {
        return invalid("time step must be finite");
    }
    let gen = Generator::Kinetic { grid: *grid, mass };
    Ok(Propagator { t_a: 0.0, t_b: dt, dim: grid.n_points(), action: gen.action(dt) })
}

/// `|<phi|psi>|^2` for normalized inputs.
pub fn born_probability(psi: &StateVector, phi: &StateVector) -> Result<f64> {
    psi.require_normalized("psi")?;
    phi.require_normalized("phi")?;
    Ok(phi.inner(psi)?.norm_sqr().clamp(0.0, 1.0))
}

/// Kronecker product; the first factor is the slow index.
pub fn tensor(a: &StateVector, b: &StateVector) -> StateVector {
    let mut out = Vec::with_capacity(a.dim() * b.dim());
    for x in a.as_slice() {
        for y in b.as_slice() {
            out.push(x * y);
        }
    }
    StateVector { amps: DVector::from_vec(out) }
}

// ---------------------------------------------------------------------------
// Propagator families

#[derive(Debug, Clone, PartialEq)]
struct Segment {
    t_start: f64,
    t_end: f64,
    generator: Generator,
}

/// Piecewise-constant dynamics over a time span, able to produce `U(t2, t1)`
/// for any pair of times in the span (backwards via the adjoint).
///
/// A reversed family answers `U'(s2, s1) = U(-s2, -s1)`, which is the
/// relabelling `U'(-t_a, -t_b) = U^dagger(t_b, t_a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorFamily {
    segments: Vec<Segment>,
    reversed: bool,
}

impl PropagatorFamily {
    pub fn constant(h: &Hamiltonian, t_start: f64, t_end: f64) -> Result<Self> {
        Self::from_generator(Generator::from_hamiltonian(h)?, t_start, t_end)
    }

    pub fn from_generator(generator: Generator, t_start: f64, t_end: f64) -> Result<Self> {
        if !t_start.is_finite() || !t_end.is_finite() {
            return invalid("family span must be finite");
        }
        if t_end < t_start {
            return Err(Error::Ordering { t_a: t_start, t_b: t_end });
        }
        Ok(Self { segments: vec![Segment { t_start, t_end, generator }], reversed: false })
    }

    /// Consecutive `(Hamiltonian, duration)` segments starting at `t_start`.
    pub fn piecewise(t_start: f64, segments: &[(Hamiltonian, f64)]) -> Result<Self> {
        if segments.is_empty() {
            return invalid("piecewise family needs at least one segment");
        }
        let mut out = Vec::with_capacity(segments.len());
        let mut t = t_start;
        let dim = segments[0].0.dim();
        for (h, duration) in segments {
            check_dim(dim, h.dim())?;
            if !(*duration >= 0.0) {
                return invalid(format!("segment duration must be non-negative, got {duration}"));
            }
            out.push(Segment { t_start: t, t_end: t + duration, generator: Generator::from_hamiltonian(h)? });
            t += duration;
        }
        Ok(Self { segments: out, reversed: false })
    }

    pub fn dim(&self) -> usize {
        self.segments[0].generator.dim()
    }

    pub fn is_reversed(&self) -> bool {
        self.reversed
    }

    /// `(lo, hi)` in this family's own time labels.
    pub fn span(&self) -> (f64, f64) {
        let lo = self.segments[0].t_start;
        let hi = self.segments[self.segments.len() - 1].t_end;
        if self.reversed {
            (-hi, -lo)
        } else {
            (lo, hi)
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = self.span();
        let slack = TIME_SLACK * (1.0 + lo.abs().max(hi.abs()));
        t >= lo - slack && t <= hi + slack
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            let (lo, hi) = self.span();
            Err(Error::Span { t, lo, hi })
        }
    }

    /// `U(t_to, t_from)`.
    pub fn propagator(&self, t_to: f64, t_from: f64) -> Result<Propagator> {
        self.check_time(t_to)?;
        self.check_time(t_from)?;
        let (a, b) = if self.reversed { (-t_from, -t_to) } else { (t_from, t_to) };
        let action = if b >= a { self.forward(a, b) } else { self.forward(b, a).adjoint() };
        Ok(Propagator { t_a: 0.0, t_b: 0.0, dim: self.dim(), action }.relabel(t_from, t_to))
    }

    fn forward(&self, a: f64, b: f64) -> Action {
        let mut acc = Action::Identity;
        for seg in &self.segments {
            let lo = a.max(seg.t_start);
            let hi = b.min(seg.t_end);
            if hi > lo {
                acc = acc.then(seg.generator.action(hi - lo));
            }
        }
        acc
    }

    pub fn reversed(&self) -> Self {
        Self { segments: self.segments.clone(), reversed: !self.reversed }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn pauli_z() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(-1.0, 0.0)])
    }

    #[test]
    fn zero_hamiltonian_gives_identity() {
        let u = make_propagator(&Hamiltonian::Dense(DMatrix::zeros(3, 3)), 0.0, 5.0).unwrap();
        assert!(max_abs(&(u.matrix() - DMatrix::identity(3, 3))) < 1e-15);
    }

    #[test]
    fn reversed_interval_is_rejected() {
        let err = make_propagator(&Hamiltonian::zero(2), 1.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::Ordering { .. }));
    }

    #[test]
    fn non_hermitian_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]);
        assert!(matches!(make_propagator(&Hamiltonian::Dense(m), 0.0, 1.0), Err(Error::Validation(_))));
    }

    #[test]
    fn sigma_z_quarter_period() {
        let u = make_propagator(&Hamiltonian::Dense(pauli_z()), 0.0, FRAC_PI_2).unwrap();
        let m = u.matrix();
        assert!((m[(0, 0)] - C64::from_polar(1.0, -FRAC_PI_2)).norm() < 1e-14);
        assert!((m[(1, 1)] - C64::from_polar(1.0, FRAC_PI_2)).norm() < 1e-14);
        assert!(m[(0, 1)].norm() < 1e-14 && m[(1, 0)].norm() < 1e-14);
        let out = evolve(&StateVector::basis(2, 0).unwrap(), &u).unwrap();
        assert!((out.as_slice()[0] - C64::new(0.0, -1.0)).norm() < 1e-14);
    }

    #[test]
    fn empty_time_ordered_product_is_identity() {
        let u = compose_time_ordered(4, 2.0, &[]).unwrap();
        assert!(u.is_identity());
        assert_eq!((u.t_a(), u.t_b()), (2.0, 2.0));
    }

    #[test]
    fn evolve_rejects_dimension_mismatch() {
        let u = Propagator::identity(3, 0.0);
        let psi = StateVector::basis(2, 0).unwrap();
        assert!(matches!(evolve(&psi, &u), Err(Error::Dimension { expected: 3, found: 2 })));
    }

    #[test]
    fn adjoint_relabels_times() {
        let u = make_propagator(&Hamiltonian::Dense(pauli_z()), 1.0, 3.0).unwrap();
        let v = u.adjoint();
        assert_eq!((v.t_a(), v.t_b()), (-3.0, -1.0));
    }

    #[test]
    fn born_rejects_unnormalized() {
        let psi = StateVector::from_real(&[1.0, 1.0]).unwrap();
        let phi = StateVector::basis(2, 0).unwrap();
        assert!(born_probability(&psi, &phi).is_err());
    }

    #[test]
    fn tensor_basis_bookkeeping() {
        let up = StateVector::basis(2, 0).unwrap();
        let down = StateVector::basis(2, 1).unwrap();
        assert_eq!(tensor(&up, &down), StateVector::basis(4, 1).unwrap());
    }

    #[test]
    fn grid_rejects_non_power_of_two() {
        assert!(Grid1D::new(300, -1.0, 1.0).is_err());
        assert!(Grid1D::new(256, 1.0, 1.0).is_err());
    }

    #[test]
    fn family_span_errors() {
        let fam = PropagatorFamily::constant(&Hamiltonian::zero(2), 0.0, 1.0).unwrap();
        assert!(matches!(fam.propagator(2.0, 0.0), Err(Error::Span { .. })));
        let rev = fam.reversed();
        assert_eq!(rev.span(), (-1.0, 0.0));
        assert!(rev.propagator(-1.0, 0.0).is_ok());
    }

    #[test]
    fn kinetic_matches_dense_exponential() {
        let grid = Grid1D::new(32, -4.0, 4.0).unwrap();
        let h = Hamiltonian::FreeParticle { grid, mass: 0.7 };
        let lazy = free_particle_propagator(&grid, 0.7, 0.3).unwrap().matrix();
        let dense = make_propagator(&Hamiltonian::Dense(h.to_matrix()), 0.0, 0.3).unwrap().matrix();
        assert!(max_abs(&(lazy - dense)) < 1e-11);
    }
}
