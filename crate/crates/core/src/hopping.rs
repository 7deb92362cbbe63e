//! Translation-invariant hopping data for lattice models.
//!
//! A model on `Z^d` with an N-dimensional internal fiber is specified by a
//! family of N x N hop matrices: for each stored displacement `y` the
//! Hamiltonian contains `|x+y> (A_y + omega_{x+y} W B_y) <x|`, and for
//! `y != 0` the Hermitian conjugate is added automatically. The disorder
//! variable is always read at the head (destination) site of the stored
//! hop, so mirrored accumulation keeps the matrix exactly Hermitian.
//!
//! Stored displacements are canonical: either zero (the on-site block,
//! which must itself be Hermitian) or with positive leading nonzero entry.
//! This rules out double counting a bond and its reverse.

use ndarray::Array2;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::LatticeScalar;

/// One stored hop: displacement plus constant and disorder blocks.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct Hop<T> {
    pub displacement: Vec<i64>,
    /// Clean block `A_y`.
    pub constant: Array2<Complex<T>>,
    /// Disorder coupling `B_y`; scaled by `amplitude * omega_head`.
    pub disorder: Array2<Complex<T>>,
}

/// Extra finite-range couplings applied at the `x_d = 0` face of a
/// half-space restriction. `layer_*` count inward from the boundary.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct BoundaryHop<T> {
    /// In-plane displacement (length d-1) from tail to head.
    pub in_plane: Vec<i64>,
    pub layer_from: usize,
    pub layer_to: usize,
    pub constant: Array2<Complex<T>>,
    pub disorder: Array2<Complex<T>>,
}

/// Boundary modification of a half-space model.
#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct BoundaryTerm<T> {
    pub hops: Vec<BoundaryHop<T>>,
    pub amplitude: T,
}

/// Full hopping specification of a covariant lattice model.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct HoppingSpec<T> {
    dim: usize,
    fiber_dim: usize,
    hops: Vec<Hop<T>>,
    /// Global disorder strength W multiplying every disorder block.
    pub amplitude: T,
    /// Chiral grading J on the fiber, if the model anticommutes with one.
    chiral: Option<Array2<Complex<T>>>,
}

impl<T: LatticeScalar> HoppingSpec<T> {
    pub fn new(dim: usize, fiber_dim: usize) -> Result<Self> {
        if dim == 0 || dim > 4 {
            return Err(Error::Config(format!("lattice dimension {dim} unsupported")));
        }
        if fiber_dim == 0 {
            return Err(Error::Config("fiber dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            fiber_dim,
            hops: Vec::new(),
            amplitude: T::zero(),
            chiral: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    pub fn hops(&self) -> &[Hop<T>] {
        &self.hops
    }

    pub fn chiral(&self) -> Option<&Array2<Complex<T>>> {
        self.chiral.as_ref()
    }

    /// Structural sanity for specs that bypassed the builder (for example
    /// loaded from a file): dimensions in range, every block square of the
    /// fiber size, displacements of the right length. Hermiticity of the
    /// assembled matrix is checked downstream by the eigensolver.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > 4 {
            return Err(Error::Config(format!(
                "lattice dimension {} unsupported",
                self.dim
            )));
        }
        if self.fiber_dim == 0 {
            return Err(Error::Config("fiber dimension must be positive".into()));
        }
        for hop in &self.hops {
            if hop.displacement.len() != self.dim {
                return Err(Error::Config(format!(
                    "hop displacement length {} vs dimension {}",
                    hop.displacement.len(),
                    self.dim
                )));
            }
            for m in [&hop.constant, &hop.disorder] {
                if m.nrows() != self.fiber_dim || m.ncols() != self.fiber_dim {
                    return Err(Error::Config(format!(
                        "hop block must be {0} x {0}",
                        self.fiber_dim
                    )));
                }
            }
        }
        if let Some(j) = &self.chiral {
            if j.nrows() != self.fiber_dim || j.ncols() != self.fiber_dim {
                return Err(Error::Config("chiral grading has the wrong shape".into()));
            }
        }
        Ok(())
    }

    /// Largest hop range per axis (for locality checks and boundary depth).
    pub fn range(&self) -> Vec<i64> {
        let mut r = vec![0i64; self.dim];
        for hop in &self.hops {
            for (k, &y) in hop.displacement.iter().enumerate() {
                r[k] = r[k].max(y.abs());
            }
        }
        r
    }

    /// Add a clean hop block.
    pub fn add_hop(&mut self, displacement: &[i64], constant: Array2<Complex<T>>) -> Result<()> {
        let zero = Array2::zeros((self.fiber_dim, self.fiber_dim));
        self.add_hop_disordered(displacement, constant, zero)
    }

    /// Add a hop with both clean and disorder blocks.
    pub fn add_hop_disordered(
        &mut self,
        displacement: &[i64],
        constant: Array2<Complex<T>>,
        disorder: Array2<Complex<T>>,
    ) -> Result<()> {
        if displacement.len() != self.dim {
            return Err(Error::Config(format!(
                "displacement length {} vs dimension {}",
                displacement.len(),
                self.dim
            )));
        }
        for m in [&constant, &disorder] {
            if m.nrows() != self.fiber_dim || m.ncols() != self.fiber_dim {
                return Err(Error::Config(format!(
                    "hop block must be {0} x {0}",
                    self.fiber_dim
                )));
            }
        }
        match displacement.iter().find(|&&y| y != 0) {
            None => {
                for m in [&constant, &disorder] {
                    if !is_hermitian(m) {
                        return Err(Error::Config(
                            "on-site block must be Hermitian".into(),
                        ));
                    }
                }
            }
            Some(&lead) => {
                if lead < 0 {
                    return Err(Error::Config(
                        "stored displacement must be zero or have a positive leading entry \
                         (the reverse hop is added automatically)"
                            .into(),
                    ));
                }
            }
        }
        if self
            .hops
            .iter()
            .any(|h| h.displacement == displacement)
        {
            return Err(Error::Config(format!(
                "duplicate hop displacement {displacement:?}"
            )));
        }
        self.hops.push(Hop {
            displacement: displacement.to_vec(),
            constant,
            disorder,
        });
        Ok(())
    }

    /// Declare a chiral grading: J Hermitian, J^2 = 1, and every hop block
    /// must anticommute with it (`J A J = -A`), which makes `J H J = -H`.
    pub fn set_chiral(&mut self, j: Array2<Complex<T>>) -> Result<()> {
        let n = self.fiber_dim;
        if j.nrows() != n || j.ncols() != n {
            return Err(Error::Config(format!("grading must be {n} x {n}")));
        }
        if !is_hermitian(&j) {
            return Err(Error::Config("grading must be Hermitian".into()));
        }
        let j2 = j.dot(&j);
        let tol = T::from_f64(1e-12).unwrap();
        for (idx, v) in j2.indexed_iter() {
            let expect = if idx.0 == idx.1 { T::one() } else { T::zero() };
            if (*v - Complex::new(expect, T::zero())).norm() > tol {
                return Err(Error::Config("grading must square to identity".into()));
            }
        }
        for hop in &self.hops {
            for m in [&hop.constant, &hop.disorder] {
                let jaj = j.dot(m).dot(&j);
                let bad = jaj
                    .iter()
                    .zip(m.iter())
                    .any(|(u, v)| (*u + *v).norm() > tol);
                if bad {
                    return Err(Error::Config(format!(
                        "hop {:?} does not anticommute with the grading",
                        hop.displacement
                    )));
                }
            }
        }
        self.chiral = Some(j);
        Ok(())
    }

    /// Structural fingerprint of the hopping data (FNV-1a over a canonical
    /// byte serialization). Two models with the same fingerprint describe
    /// the same infinite-volume operator family; used to pair bulk and
    /// boundary results.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        h.word(self.dim as u64);
        h.word(self.fiber_dim as u64);
        h.real(self.amplitude);
        for hop in &self.hops {
            for &y in &hop.displacement {
                h.word(y as u64);
            }
            for m in [&hop.constant, &hop.disorder] {
                for v in m.iter() {
                    h.real(v.re);
                    h.real(v.im);
                }
            }
        }
        if let Some(j) = &self.chiral {
            for v in j.iter() {
                h.real(v.re);
                h.real(v.im);
            }
        }
        h.finish()
    }
}

impl<T: LatticeScalar> BoundaryTerm<T> {
    /// Validate against a parent model: block sizes, canonical ordering
    /// (no bond stored twice), Hermitian self-paired blocks.
    pub fn validate(&self, dim: usize, fiber_dim: usize) -> Result<()> {
        if dim == 0 {
            return Err(Error::Config("boundary term needs dim >= 1".into()));
        }
        for hop in &self.hops {
            if hop.in_plane.len() != dim - 1 {
                return Err(Error::Config(format!(
                    "boundary hop in-plane displacement must have length {}",
                    dim - 1
                )));
            }
            for m in [&hop.constant, &hop.disorder] {
                if m.nrows() != fiber_dim || m.ncols() != fiber_dim {
                    return Err(Error::Config(format!(
                        "boundary block must be {0} x {0}",
                        fiber_dim
                    )));
                }
            }
            let lead = hop.in_plane.iter().find(|&&y| y != 0);
            match lead {
                Some(&l) => {
                    if l < 0 {
                        return Err(Error::Config(
                            "boundary hop in-plane displacement must have positive leading entry"
                                .into(),
                        ));
                    }
                }
                None => {
                    if hop.layer_to < hop.layer_from {
                        return Err(Error::Config(
                            "vertical boundary hop must go outward (layer_to >= layer_from)"
                                .into(),
                        ));
                    }
                    if hop.layer_to == hop.layer_from
                        && (!is_hermitian(&hop.constant) || !is_hermitian(&hop.disorder))
                    {
                        return Err(Error::Config(
                            "diagonal boundary block must be Hermitian".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn max_layer(&self) -> usize {
        self.hops
            .iter()
            .map(|h| h.layer_from.max(h.layer_to))
            .max()
            .unwrap_or(0)
    }
}

pub(crate) fn is_hermitian<T: LatticeScalar>(m: &Array2<Complex<T>>) -> bool {
    let tol = T::from_f64(1e-12).unwrap();
    if m.nrows() != m.ncols() {
        return false;
    }
    for i in 0..m.nrows() {
        for j in 0..=i {
            if (m[(i, j)] - m[(j, i)].conj()).norm() > tol {
                return false;
            }
        }
    }
    true
}

/// Incremental FNV-1a over 8-byte words.
struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn word(&mut self, w: u64) {
        for b in w.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn real<T: LatticeScalar>(&mut self, v: T) {
        self.word(v.to_f64().unwrap().to_bits());
    }

    fn finish(self) -> u64 {
        self.0
    }
}
