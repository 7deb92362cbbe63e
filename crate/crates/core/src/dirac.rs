//! Position-space Dirac phase and sign structures.
//!
//! Index pairings compress a lattice unitary or projection by functions of
//! the position operator `D = sum_i Gamma_i (X_i - x0_i)` built from an
//! irreducible Clifford representation. Everything needed downstream is the
//! pointwise spinor matrix at a given displacement `r`: the positive-energy
//! projection of `sgn D` in odd dimension, and the off-diagonal unitary
//! block of `sgn D` in even dimension. Both are supplied here for
//! dimensions 1 through 4.

use ndarray::Array2;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{cplx, LatticeScalar};

/// Spinor dimension of the representation used at lattice dimension `d`:
/// `2^((d-1)/2)` for odd `d`, `2^(d/2 - 1)` for even `d`.
pub fn spinor_dim(d: usize) -> Result<usize> {
    match d {
        1 | 2 => Ok(1),
        3 | 4 => Ok(2),
        _ => Err(Error::Invariant(format!(
            "no Dirac representation wired for dimension {d}"
        ))),
    }
}

fn norm<T: LatticeScalar>(r: &[T]) -> T {
    r.iter().map(|&v| v * v).sum::<T>().sqrt()
}

fn check_r<T: LatticeScalar>(d: usize, r: &[T]) -> Result<T> {
    if r.len() != d {
        return Err(Error::Invariant(format!(
            "displacement has {} components, expected {d}",
            r.len()
        )));
    }
    let n = norm(r);
    if n <= T::epsilon().sqrt() {
        return Err(Error::Invariant(
            "Dirac phase undefined at the origin; offset the center off-lattice".into(),
        ));
    }
    Ok(n)
}

/// Odd dimension: the spectral projection `(1 + sgn D)/2` of the Dirac sign
/// at displacement `r`, an `s x s` Hermitian projection.
///
/// d = 1 uses the one-dimensional representation `Gamma = [-1]`, so the
/// projection selects the half line left of the center. d = 3 uses the spin
/// representation, giving the rank-one projection `(1 + r.sigma/|r|)/2`.
pub fn half_space_projection<T: LatticeScalar>(d: usize, r: &[T]) -> Result<Array2<Complex<T>>> {
    let n = check_r(d, r)?;
    let zero = T::zero();
    let half = cplx(crate::scalar::real::<T>(0.5), zero);
    match d {
        1 => {
            let val = if r[0] < zero { T::one() } else { T::zero() };
            Ok(Array2::from_elem((1, 1), cplx(val, zero)))
        }
        3 => {
            let (x, y, z) = (r[0] / n, r[1] / n, r[2] / n);
            // (1 + x s1 + y s2 + z s3) / 2
            let mut m = Array2::zeros((2, 2));
            m[(0, 0)] = (cplx(T::one(), zero) + cplx(z, zero)) * half;
            m[(1, 1)] = (cplx(T::one(), zero) - cplx(z, zero)) * half;
            m[(0, 1)] = cplx(x, -y) * half;
            m[(1, 0)] = cplx(x, y) * half;
            Ok(m)
        }
        _ => Err(Error::Invariant(format!(
            "half-space projection needs odd dimension, got {d}"
        ))),
    }
}

/// Even dimension: the unitary off-diagonal block of `sgn D` at
/// displacement `r`, an `s x s` unitary.
///
/// d = 2 gives the scalar phase `(r1 + i r2)/|r|`. d = 4 pairs the three
/// spin matrices with the fourth axis, giving `(r.sigma - i r4)/|r|`.
pub fn dirac_phase<T: LatticeScalar>(d: usize, r: &[T]) -> Result<Array2<Complex<T>>> {
    let n = check_r(d, r)?;
    match d {
        2 => Ok(Array2::from_elem(
            (1, 1),
            cplx(r[0] / n, r[1] / n),
        )),
        4 => {
            let (x, y, z, w) = (r[0] / n, r[1] / n, r[2] / n, r[3] / n);
            let mut m = Array2::zeros((2, 2));
            m[(0, 0)] = cplx(z, -w);
            m[(1, 1)] = cplx(-z, -w);
            m[(0, 1)] = cplx(x, -y);
            m[(1, 0)] = cplx(x, y);
            Ok(m)
        }
        _ => Err(Error::Invariant(format!(
            "Dirac phase needs even dimension, got {d}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C;

    fn sample_points(d: usize) -> Vec<Vec<f64>> {
        let base = [0.37, -1.91, 2.44, -0.58];
        let mut out = Vec::new();
        for k in 0..8 {
            let mut r = Vec::with_capacity(d);
            for i in 0..d {
                let v = base[i] + 0.71 * (k as f64) * if (k + i) % 2 == 0 { 1.0 } else { -1.0 };
                r.push(v);
            }
            if r.iter().map(|v| v * v).sum::<f64>() > 1e-2 {
                out.push(r);
            }
        }
        out
    }

    #[test]
    fn projection_laws_odd() {
        for d in [1usize, 3] {
            let s = spinor_dim(d).unwrap();
            for r in sample_points(d) {
                let e = half_space_projection::<f64>(d, &r).unwrap();
                assert_eq!(e.nrows(), s);
                let ee = e.dot(&e);
                for ((i, j), v) in ee.indexed_iter() {
                    assert!((v - e[(i, j)]).norm() < 1e-14, "not idempotent d={d}");
                    assert!((e[(i, j)] - e[(j, i)].conj()).norm() < 1e-14);
                }
                // complementary at the antipode
                let mr: Vec<f64> = r.iter().map(|v| -v).collect();
                let ec = half_space_projection::<f64>(d, &mr).unwrap();
                for ((i, j), v) in ec.indexed_iter() {
                    let id = if i == j { 1.0 } else { 0.0 };
                    assert!((v + e[(i, j)] - C::new(id, 0.0)).norm() < 1e-14);
                }
            }
            // rank: trace s/2 when s even, side-dependent when s = 1
            let e3 = half_space_projection::<f64>(3, &[0.3, -0.4, 1.2]).unwrap();
            let tr: C = (0..2).map(|i| e3[(i, i)]).sum();
            assert!((tr - C::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn phase_laws_even() {
        for d in [2usize, 4] {
            let s = spinor_dim(d).unwrap();
            for r in sample_points(d) {
                let g = dirac_phase::<f64>(d, &r).unwrap();
                assert_eq!(g.nrows(), s);
                let gh = g.t().mapv(|v| v.conj());
                let gg = gh.dot(&g);
                for ((i, j), v) in gg.indexed_iter() {
                    let id = if i == j { 1.0 } else { 0.0 };
                    assert!((v - C::new(id, 0.0)).norm() < 1e-14, "not unitary d={d}");
                }
                // odd under inversion
                let mr: Vec<f64> = r.iter().map(|v| -v).collect();
                let gm = dirac_phase::<f64>(d, &mr).unwrap();
                for ((i, j), v) in gm.indexed_iter() {
                    assert!((v + g[(i, j)]).norm() < 1e-14);
                }
            }
        }
        // d=2 phase winds once around the unit circle
        let g = dirac_phase::<f64>(2, &[1.0, 0.0]).unwrap();
        assert!((g[(0, 0)] - C::new(1.0, 0.0)).norm() < 1e-15);
        let g = dirac_phase::<f64>(2, &[0.0, 2.5]).unwrap();
        assert!((g[(0, 0)] - C::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn origin_and_dimension_guards() {
        assert!(half_space_projection::<f64>(1, &[0.0]).is_err());
        assert!(dirac_phase::<f64>(2, &[0.0, 0.0]).is_err());
        assert!(half_space_projection::<f64>(2, &[1.0, 1.0]).is_err());
        assert!(dirac_phase::<f64>(3, &[1.0, 1.0, 1.0]).is_err());
        assert!(spinor_dim(5).is_err());
        assert!(dirac_phase::<f64>(4, &[1.0, 1.0]).is_err());
    }
}
