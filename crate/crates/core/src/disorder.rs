//! Site-indexed disorder variables.
//!
//! Disorder is a field of i.i.d. variables `omega_x`, uniform on
//! `[-1/2, 1/2)`, one per lattice site. Values are produced by a
//! counter-style hash of `(seed, site coordinates)` so that a site's value
//! is independent of evaluation order, box size and thread count: the same
//! seed gives the same field on any geometry that contains the site.

use ndarray::Array1;

use crate::geometry::FiniteGeometry;
use crate::scalar::LatticeScalar;

/// SplitMix64 finalizer; a well-mixed 64-bit permutation.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic disorder field keyed by a 64-bit seed.
#[derive(Clone, Copy, Debug)]
pub struct DisorderField {
    seed: u64,
}

impl DisorderField {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform variable on `[-1/2, 1/2)` attached to the site.
    pub fn sample<T: LatticeScalar>(&self, site: &[i64]) -> T {
        let mut h = self.seed ^ 0x6a09_e667_f3bc_c909;
        for (k, &c) in site.iter().enumerate() {
            h = mix(h ^ (c as u64).wrapping_add((k as u64 + 1) << 56));
        }
        // 53 uniform bits shifted to [-1/2, 1/2)
        let u = (mix(h) >> 11) as f64 / (1u64 << 53) as f64;
        T::from_f64(u - 0.5).unwrap()
    }

    /// Field values for every site of a box, in rank order.
    pub fn realize<T: LatticeScalar>(&self, geometry: &FiniteGeometry) -> Array1<T> {
        Array1::from_iter(geometry.sites().map(|x| self.sample::<T>(&x)))
    }
}

/// A realized disorder configuration: one value per site plus the data
/// needed to regenerate it.
#[derive(Clone, Debug)]
pub struct DisorderConfig<T> {
    pub seed: u64,
    pub values: Array1<T>,
    /// If set, the field is supported on the boundary layers
    /// `x_d <= strip_halfwidth` only (half-space geometries).
    pub strip_halfwidth: Option<usize>,
}

/// Sample the i.i.d. field on a box. With `strip_halfwidth = s` (allowed
/// only on half-space geometries) values are zeroed on every layer
/// `x_d > s`, restricting the randomness to a boundary strip.
pub fn sample_disorder<T: LatticeScalar>(
    seed: u64,
    geometry: &FiniteGeometry,
    strip_halfwidth: Option<usize>,
) -> crate::error::Result<DisorderConfig<T>> {
    if strip_halfwidth.is_some() && !geometry.is_half_space() {
        return Err(crate::error::Error::Config(
            "boundary strip support needs a half-space geometry".into(),
        ));
    }
    let field = DisorderField::new(seed);
    let mut values = field.realize::<T>(geometry);
    if let Some(s) = strip_halfwidth {
        let d = geometry.dim();
        for (rank, x) in geometry.sites().enumerate() {
            if x[d - 1] > s as i64 {
                values[rank] = T::zero();
            }
        }
    }
    Ok(DisorderConfig {
        seed,
        values,
        strip_halfwidth,
    })
}

/// Lattice-shift a realization: output value at `x` is the input value at
/// the in-box representative of `x + z` (periodic axes wrap).
pub fn shift_realization<T: LatticeScalar>(
    values: &Array1<T>,
    geometry: &FiniteGeometry,
    z: &[i64],
) -> Array1<T> {
    Array1::from_iter(geometry.sites().map(|x| {
        let y = geometry
            .translate(&x, z)
            .expect("shift must stay in box on open axes");
        values[geometry.rank(&y)]
    }))
}
