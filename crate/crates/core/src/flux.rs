//! Uniform magnetic flux on the integer lattice.
//!
//! The flux is an antisymmetric d x d matrix `Phi`; `Phi_ij` is the flux
//! per unit plaquette in the (i, j) plane in units of the flux quantum.
//! Lattice translations then compose projectively with the cocycle
//! `e^{i pi x^y}` where `x^y = sum_{i<j} Phi_ij (x_i y_j - x_j y_i)`.
//!
//! Finite-volume Hamiltonians need a single-valued gauge rather than the
//! symmetric cocycle; hops carry the Landau-type phase
//! `e^{2 pi i b(x, y)}` with `b(x, y) = sum_{i<j} Phi_ij x_i y_j`,
//! `x` the source site and `y` the displacement. A counterclockwise unit
//! plaquette in the (i, j) plane then encloses phase `e^{2 pi i Phi_ij}`.

use ndarray::Array2;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::geometry::FiniteGeometry;
use crate::scalar::LatticeScalar;

/// Antisymmetric flux matrix in flux-quantum units.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MagneticFlux<T> {
    entries: Array2<T>,
}

impl<T: LatticeScalar> MagneticFlux<T> {
    /// Zero field.
    pub fn zero(dim: usize) -> Self {
        Self {
            entries: Array2::zeros((dim, dim)),
        }
    }

    /// Build from the upper triangle: `pairs` maps `(i, j)` with `i < j` to
    /// `Phi_ij`; the lower triangle is filled antisymmetrically.
    pub fn from_upper(dim: usize, pairs: &[(usize, usize, T)]) -> Result<Self> {
        let mut entries = Array2::zeros((dim, dim));
        for &(i, j, v) in pairs {
            if i >= j || j >= dim {
                return Err(Error::Flux(format!(
                    "flux pair ({i}, {j}) must satisfy i < j < {dim}"
                )));
            }
            entries[(i, j)] = v;
            entries[(j, i)] = -v;
        }
        Ok(Self { entries })
    }

    /// Single-plane convenience: flux `phi` through the (0, 1) plane.
    pub fn in_plane(dim: usize, phi: T) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Flux("in-plane flux needs dim >= 2".into()));
        }
        Self::from_upper(dim, &[(0, 1, phi)])
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> T {
        self.entries[(i, j)]
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|v| *v == T::zero())
    }

    /// Antisymmetric wedge `x^y = sum_{i<j} Phi_ij (x_i y_j - x_j y_i)`.
    pub fn wedge(&self, x: &[i64], y: &[i64]) -> T {
        let d = self.dim();
        let mut acc = T::zero();
        for i in 0..d {
            for j in (i + 1)..d {
                let cross = T::from_i64(x[i] * y[j] - x[j] * y[i]).unwrap();
                acc += self.entries[(i, j)] * cross;
            }
        }
        acc
    }

    /// Projective cocycle `e^{i pi x^y}` of the magnetic translation group.
    pub fn translation_phase(&self, x: &[i64], y: &[i64]) -> Complex<T> {
        Complex::from_polar(T::one(), T::PI() * self.wedge(x, y))
    }

    /// Gauge exponent `b(x, y) = sum_{i<j} Phi_ij x_i y_j` for a hop from
    /// source `x` by displacement `y`; the hop phase is `e^{2 pi i b}`.
    pub fn gauge_exponent(&self, x: &[i64], y: &[i64]) -> T {
        let d = self.dim();
        let mut acc = T::zero();
        for i in 0..d {
            for j in (i + 1)..d {
                acc += self.entries[(i, j)] * T::from_i64(x[i] * y[j]).unwrap();
            }
        }
        acc
    }

    /// Hop phase `e^{2 pi i b(x, y)}`.
    pub fn hop_phase(&self, x: &[i64], y: &[i64]) -> Complex<T> {
        let two = T::one() + T::one();
        Complex::from_polar(T::one(), two * T::PI() * self.gauge_exponent(x, y))
    }

    /// Check the flux against the box: on each plane the wrapped directions
    /// must carry an integer number of flux quanta so that hop phases are
    /// single-valued across the seam.
    ///
    /// * both axes periodic: `Phi_ij L_i L_j` must be an even integer;
    /// * exactly one axis `a` periodic: `Phi_ij L_a` must be an integer;
    /// * both open: unconstrained.
    pub fn check_commensurate(&self, geometry: &FiniteGeometry) -> Result<()> {
        if self.dim() != geometry.dim() {
            return Err(Error::Flux(format!(
                "flux dim {} vs geometry dim {}",
                self.dim(),
                geometry.dim()
            )));
        }
        let d = self.dim();
        for i in 0..d {
            for j in (i + 1)..d {
                let phi = self.entries[(i, j)];
                if phi == T::zero() {
                    continue;
                }
                let (pi, pj) = (geometry.is_periodic(i), geometry.is_periodic(j));
                let (li, lj) = (
                    T::from_usize(geometry.sides()[i]).unwrap(),
                    T::from_usize(geometry.sides()[j]).unwrap(),
                );
                if pi && pj {
                    let v = phi * li * lj / (T::one() + T::one());
                    if !near_integer(v) {
                        return Err(Error::Flux(format!(
                            "flux {:e} through plane ({i}, {j}): Phi*L_{i}*L_{j} must be an even integer on a torus",
                            phi
                        )));
                    }
                } else if pi || pj {
                    let la = if pi { li } else { lj };
                    let a = if pi { i } else { j };
                    if !near_integer(phi * la) {
                        return Err(Error::Flux(format!(
                            "flux {:e} through plane ({i}, {j}): Phi*L_{a} must be an integer on a cylinder",
                            phi
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Stronger condition needed for exact lattice translation matrices:
    /// every periodic axis `a` must satisfy `Phi_aj L_a` integer for all
    /// `j`, so that a wrap of the source coordinate shifts every hop phase
    /// by a whole cycle.
    pub fn check_translation_exact(&self, geometry: &FiniteGeometry) -> Result<()> {
        self.check_commensurate(geometry)?;
        let d = self.dim();
        for a in 0..d {
            if !geometry.is_periodic(a) {
                return Err(Error::Flux(
                    "exact translations need a fully periodic box".into(),
                ));
            }
            let la = T::from_usize(geometry.sides()[a]).unwrap();
            for j in 0..d {
                if j != a && !near_integer(self.entries[(a, j)] * la) {
                    return Err(Error::Flux(format!(
                        "translations along axis {a} need Phi_{a}{j}*L_{a} integer"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn near_integer<T: LatticeScalar>(v: T) -> bool {
    (v - v.round()).abs() < T::from_f64(1e-9).unwrap()
}
