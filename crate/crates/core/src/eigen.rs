//! Hermitian eigensolvers: dense (nalgebra), Lanczos with full
//! reorthogonalization, and plain power iteration.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hilbert::C64;

/// Eigenvalues closer than this to the top one count as degenerate with it.
pub const DEGENERACY_TOL: f64 = 1e-10;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;
const MAX_KRYLOV: usize = 160;
const RITZ_CHECK_EVERY: usize = 4;

/// Full decomposition with eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Column `j` pairs with `values[j]`.
    pub vectors: DMatrix<C64>,
}

pub fn hermitian_eigen(m: &DMatrix<C64>) -> HermitianEigen {
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap_or(Ordering::Equal));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = eig.eigenvectors.select_columns(order.iter());
    HermitianEigen { values, vectors }
}

/// Leading eigenpair of a Hermitian operator.
#[derive(Debug, Clone)]
pub struct TopEigen {
    pub value: f64,
    pub vector: DVector<C64>,
    /// Up to five largest eigenvalues (Ritz values for iterative solvers).
    pub spectrum_head: Vec<f64>,
    /// Operator applications (zero for dense solves).
    pub iterations: usize,
    pub residual: f64,
}

/// Rotate the global phase so the largest-magnitude entry (first one on ties)
/// is real and positive.
pub fn fix_phase(v: &mut DVector<C64>) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    if let Some(pivot) = v.iter().find(|z| z.norm() >= max * (1.0 - 1e-9)).copied() {
        let phase = pivot.conj() / pivot.norm();
        for z in v.iter_mut() {
            *z *= phase;
        }
    }
}

/// Lexicographic comparison of entry magnitudes.
fn lex_magnitude(a: &DVector<C64>, b: &DVector<C64>) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        let (x, y) = (x.norm(), y.norm());
        if (x - y).abs() > 1e-12 {
            return x.partial_cmp(&y).unwrap_or(Ordering::Equal);
        }
    }
    Ordering::Equal
}

pub fn dense_top(m: &DMatrix<C64>) -> TopEigen {
    let eig = hermitian_eigen(m);
    let top = eig.values[0];
    let mut best = eig.vectors.column(0).into_owned();
    for j in 1..eig.values.len() {
        if top - eig.values[j] > DEGENERACY_TOL {
            break;
        }
        let cand = eig.vectors.column(j).into_owned();
        if lex_magnitude(&cand, &best) == Ordering::Greater {
            best = cand;
        }
    }
    fix_phase(&mut best);
    let residual = (m * &best - &best * C64::new(top, 0.0)).norm();
    TopEigen { value: top, vector: best, spectrum_head: eig.values.iter().take(5).copied().collect(), iterations: 0, residual }
}

/// Deterministic positive start vector. The small modulation keeps it from
/// being orthogonal to parity-odd eigenvectors.
pub fn start_vector(n: usize) -> DVector<C64> {
    let v = DVector::from_iterator(n, (0..n).map(|i| C64::new(1.0 + 0.1 * ((i + 1) as f64).sin(), 0.0)));
    let norm = v.norm();
    v / C64::new(norm, 0.0)
}

/// Power iteration for a positive semidefinite operator.
pub fn power_iteration(
    apply: &dyn Fn(&DVector<C64>) -> DVector<C64>,
    n: usize,
    tol: f64,
    max_iter: usize,
) -> Result<TopEigen> {
    let mut v = start_vector(n);
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let w = apply(&v);
        let lambda = v.dotc(&w).re;
        residual = (&w - &v * C64::new(lambda, 0.0)).norm();
        let wn = w.norm();
        if residual <= tol * lambda.abs().max(1.0) || wn == 0.0 {
            let mut vec = v;
            fix_phase(&mut vec);
            return Ok(TopEigen { value: lambda, vector: vec, spectrum_head: vec![lambda], iterations: it, residual });
        }
        v = w / C64::new(wn, 0.0);
    }
    Err(Error::Convergence { iterations: max_iter, residual })
}

fn tridiagonal_top(alphas: &[f64], betas: &[f64]) -> (Vec<f64>, DVector<f64>) {
    let k = alphas.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = t.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap_or(Ordering::Equal));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    (values, eig.eigenvectors.column(order[0]).into_owned())
}

/// Lanczos with full reorthogonalization and explicit restarts on the top
/// Ritz vector. Converges when the Ritz residual drops below
/// `tol * max(1, |theta|)`.
pub fn lanczos_top(
    apply: &dyn Fn(&DVector<C64>) -> DVector<C64>,
    n: usize,
    tol: f64,
    max_iter: usize,
) -> Result<TopEigen> {
    let kmax = MAX_KRYLOV.min(n);
    let mut start = start_vector(n);
    let mut iterations = 0;
    loop {
        let mut basis: Vec<DVector<C64>> = vec![start.clone()];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        for j in 0..kmax {
            let mut w = apply(&basis[j]);
            iterations += 1;
            let alpha = basis[j].dotc(&w).re;
            for _ in 0..2 {
                for q in &basis {
                    let c = q.dotc(&w);
                    w -= q * c;
                }
            }
            let beta = w.norm();
            alphas.push(alpha);

            let exhausted = beta <= 1e-14 * alpha.abs().max(1.0) || j + 1 == n;
            let check = exhausted || (j + 1) % RITZ_CHECK_EVERY == 0 || j + 1 == kmax || iterations >= max_iter;
            if check {
                let (ritz, y) = tridiagonal_top(&alphas, &betas);
                let theta = ritz[0];
                let ritz_residual = if exhausted { 0.0 } else { beta * y[y.len() - 1].abs() };
                let converged = ritz_residual <= tol * theta.abs().max(1.0);
                if converged || j + 1 == kmax || iterations >= max_iter {
                    let mut x = DVector::zeros(n);
                    for (yi, q) in y.iter().zip(basis.iter()) {
                        x += q * C64::new(*yi, 0.0);
                    }
                    let xn = x.norm();
                    x /= C64::new(xn, 0.0);
                    if converged {
                        fix_phase(&mut x);
                        let ax = apply(&x);
                        iterations += 1;
                        let residual = (&ax - &x * C64::new(theta, 0.0)).norm();
                        return Ok(TopEigen {
                            value: theta,
                            vector: x,
                            spectrum_head: ritz.iter().take(5).copied().collect(),
                            iterations,
                            residual,
                        });
                    }
                    if iterations >= max_iter {
                        return Err(Error::Convergence { iterations, residual: ritz_residual });
                    }
                    start = x;
                    break;
                }
            }
            betas.push(beta);
            basis.push(w / C64::new(beta, 0.0));
        }
    }
}
