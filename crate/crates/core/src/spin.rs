//! Spin-1/2 helpers: Pauli matrices, axis eigenstates, rotations and Schmidt
//! decompositions of two-factor states.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::hilbert::{make_propagator, Hamiltonian, Observable, Propagator, StateVector, C64};

pub type Axis = [f64; 3];

pub const X: Axis = [1.0, 0.0, 0.0];
pub const Y: Axis = [0.0, 1.0, 0.0];
pub const Z: Axis = [0.0, 0.0, 1.0];

const UNIT_TOL: f64 = 1e-9;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn pauli(axis: usize) -> DMatrix<C64> {
    match axis {
        0 => DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
        1 => DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]),
        _ => DMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]),
    }
}

pub fn check_unit(axis: &Axis) -> Result<()> {
    let n = norm(axis);
    if (n - 1.0).abs() > UNIT_TOL || !n.is_finite() {
        return invalid(format!("axis {axis:?} is not a unit vector (norm {n})"));
    }
    Ok(())
}

pub fn norm(a: &Axis) -> f64 {
    dot(a, a).sqrt()
}

pub fn dot(a: &Axis, b: &Axis) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: &Axis, b: &Axis) -> Axis {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// `n . sigma`, eigenvalues `+1` (up) and `-1` (down).
pub fn axis_matrix(axis: &Axis) -> DMatrix<C64> {
    pauli(0) * c(axis[0], 0.0) + pauli(1) * c(axis[1], 0.0) + pauli(2) * c(axis[2], 0.0)
}

pub fn axis_observable(axis: &Axis) -> Result<Observable> {
    check_unit(axis)?;
    Observable::new(axis_matrix(axis), format!("sigma.{axis:?}"))
}

/// Eigenstate of `n . sigma` with eigenvalue `+1` (`up`) or `-1`.
pub fn axis_state(axis: &Axis, up: bool) -> Result<StateVector> {
    check_unit(axis)?;
    let theta = axis[2].clamp(-1.0, 1.0).acos();
    let phi = axis[1].atan2(axis[0]);
    let (ct, st) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let amps = if up {
        vec![c(ct, 0.0), C64::from_polar(st, phi)]
    } else {
        vec![c(-st, 0.0), C64::from_polar(ct, phi)]
    };
    StateVector::new(amps)
}

/// Bloch vector `<sigma>` of a normalized qubit state.
pub fn bloch_vector(psi: &StateVector) -> Result<Axis> {
    if psi.dim() != 2 {
        return invalid("Bloch vector needs a qubit state");
    }
    let psi = psi.normalized()?;
    let a = psi.as_slice();
    let off = a[0].conj() * a[1];
    Ok([2.0 * off.re, 2.0 * off.im, a[0].norm_sqr() - a[1].norm_sqr()])
}

/// `exp(-i angle n.sigma / 2)` labelled over `[0, angle]`.
pub fn rotation(axis: &Axis, angle: f64) -> Result<Propagator> {
    check_unit(axis)?;
    let h = Hamiltonian::Dense(axis_matrix(axis) * c(0.5, 0.0));
    if angle >= 0.0 {
        make_propagator(&h, 0.0, angle)
    } else {
        Ok(make_propagator(&h, 0.0, -angle)?.inverse())
    }
}

/// Schmidt coefficients of a state on `d1 x d2` (first factor slow).
pub fn schmidt_coefficients(psi: &StateVector, d1: usize, d2: usize) -> Result<Vec<f64>> {
    if d1 * d2 != psi.dim() {
        return invalid(format!("cannot split dim {} as {d1} x {d2}", psi.dim()));
    }
    let m = DMatrix::from_fn(d1, d2, |i, j| psi.as_slice()[i * d2 + j]);
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(sv)
}

pub fn schmidt_number(psi: &StateVector, d1: usize, d2: usize, tol: f64) -> Result<usize> {
    Ok(schmidt_coefficients(psi, d1, d2)?.iter().filter(|&&s| s > tol).count())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_states_are_eigenvectors() {
        for axis in [X, Y, Z, [0.6, 0.0, 0.8], [0.0, 0.0, -1.0]] {
            for up in [true, false] {
                let s = axis_state(&axis, up).unwrap();
                let obs = axis_observable(&axis).unwrap();
                let e = obs.expectation(&s).unwrap();
                assert!((e - if up { 1.0 } else { -1.0 }).abs() < 1e-14, "{axis:?} {up}");
                let b = bloch_vector(&s).unwrap();
                let sign = if up { 1.0 } else { -1.0 };
                for k in 0..3 {
                    assert!((b[k] - sign * axis[k]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn non_unit_axis_rejected() {
        assert!(axis_state(&[1.0, 1.0, 0.0], true).is_err());
    }

    #[test]
    fn rotation_about_y_takes_z_to_x() {
        let u = rotation(&Y, std::f64::consts::FRAC_PI_2).unwrap();
        let out = u.apply(&axis_state(&Z, true).unwrap()).unwrap();
        let b = bloch_vector(&out).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-14);
    }
}
