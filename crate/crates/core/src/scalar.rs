//! Scalar abstraction for the numerical core.
//!
//! All lattice and invariant code is generic over the real scalar type
//! through [`LatticeScalar`]; complex matrices use `Complex<T>`. The only
//! operations that need a concrete backend are the dense Hermitian
//! eigendecomposition and LU-based linear solves, so those live here as
//! trait methods with LAPACK-backed implementations for `f32` and `f64`.

use ndarray::{Array1, Array2, ScalarOperand, ShapeBuilder};
use ndarray_linalg::{Eigh, Factorize, Solve, UPLO};
use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, NumCast};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use crate::error::{Error, Result};

/// Real scalar for lattice computations (`f32` or `f64`).
///
/// Bundles the floating-point trait surface the generic code needs plus the
/// two dense linear-algebra kernels everything else is built from.
pub trait LatticeScalar:
    Float
    + FloatConst
    + NumAssign
    + NumCast
    + FromPrimitive
    + Sum
    + ScalarOperand
    + Display
    + LowerExp
    + Debug
    + Send
    + Sync
    + serde::Serialize
    + serde::de::DeserializeOwned
    + 'static
{
    /// Eigendecomposition of a Hermitian matrix. Eigenvalues ascending,
    /// eigenvectors as columns of a unitary matrix.
    fn eigh(matrix: &Array2<Complex<Self>>) -> Result<(Array1<Self>, Array2<Complex<Self>>)>;

    /// Solve `matrix * x = rhs` column by column against one LU
    /// factorization. `rhs` columns are independent right-hand sides.
    fn solve_columns(
        matrix: &Array2<Complex<Self>>,
        rhs: &Array2<Complex<Self>>,
    ) -> Result<Array2<Complex<Self>>>;
}

macro_rules! impl_lattice_scalar {
    ($real:ty) => {
        impl LatticeScalar for $real {
            fn eigh(
                matrix: &Array2<Complex<Self>>,
            ) -> Result<(Array1<Self>, Array2<Complex<Self>>)> {
                // LAPACK is column-major; a row-major Hermitian matrix read
                // as column-major is its conjugate, which silently breaks
                // the columns-are-eigenvectors convention. Hand it an
                // F-order copy so the convention holds regardless of the
                // caller's layout.
                let mut f_ordered = Array2::zeros(matrix.raw_dim().f());
                f_ordered.assign(matrix);
                let (values, vectors) = f_ordered
                    .eigh(UPLO::Lower)
                    .map_err(|e| Error::Backend(format!("eigh failed: {e}")))?;
                Ok((values, vectors.as_standard_layout().to_owned()))
            }

            fn solve_columns(
                matrix: &Array2<Complex<Self>>,
                rhs: &Array2<Complex<Self>>,
            ) -> Result<Array2<Complex<Self>>> {
                let lu = matrix
                    .factorize()
                    .map_err(|e| Error::Backend(format!("LU factorization failed: {e}")))?;
                let mut out = Array2::zeros(rhs.raw_dim());
                for (j, col) in rhs.columns().into_iter().enumerate() {
                    let x = lu
                        .solve(&col.to_owned())
                        .map_err(|e| Error::Backend(format!("LU solve failed: {e}")))?;
                    out.column_mut(j).assign(&x);
                }
                Ok(out)
            }
        }
    };
}

impl_lattice_scalar!(f32);
impl_lattice_scalar!(f64);

/// Convert an `f64` literal to the working scalar type.
#[inline]
pub fn real<T: LatticeScalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Complex number from real-valued parts of the working scalar type.
#[inline]
pub fn cplx<T: LatticeScalar>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}
