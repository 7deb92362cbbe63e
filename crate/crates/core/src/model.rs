//! Dense finite-volume realizations of covariant lattice models.
//!
//! [`build`] assembles the Hamiltonian of a [`HoppingSpec`] on a
//! [`FiniteGeometry`] with a fixed disorder realization. Matrix elements
//! are accumulated in mirrored pairs, so the result is Hermitian to the
//! last bit. Hop phases follow the gauge in [`crate::flux`]; periodic
//! axes are admitted only when the flux threads them commensurately.

use ndarray::{Array1, Array2, s};
use num_complex::Complex;

use crate::disorder::shift_realization;
use crate::error::{Error, Result};
use crate::flux::MagneticFlux;
use crate::geometry::{BoundaryCondition, FiniteGeometry};
use crate::hopping::{BoundaryTerm, HoppingSpec};
use crate::scalar::LatticeScalar;

/// A concrete Hermitian matrix together with the lattice data needed to
/// interpret its rows (geometry, fiber, grading, family identity).
#[derive(Clone, Debug)]
pub struct FiniteModel<T> {
    pub matrix: Array2<Complex<T>>,
    pub geometry: FiniteGeometry,
    pub fiber_dim: usize,
    /// Chiral grading on the fiber, if the family carries one.
    pub chiral: Option<Array2<Complex<T>>>,
    /// Hash of (hopping data, flux): identifies the infinite-volume family
    /// across boxes, disorder realizations and bulk/boundary restrictions.
    pub family_id: u64,
}

impl<T: LatticeScalar> FiniteModel<T> {
    pub fn total_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn site_count(&self) -> usize {
        self.geometry.site_count()
    }

    /// Site rank owning a matrix row.
    pub fn site_of_row(&self, row: usize) -> usize {
        row / self.fiber_dim
    }

    /// Grading on the full space, `I_sites (x) J`.
    pub fn chiral_full(&self) -> Option<Array2<Complex<T>>> {
        let j = self.chiral.as_ref()?;
        let n = self.fiber_dim;
        let mut full = Array2::zeros((self.total_dim(), self.total_dim()));
        for r in 0..self.site_count() {
            full.slice_mut(s![r * n..(r + 1) * n, r * n..(r + 1) * n])
                .assign(j);
        }
        Some(full)
    }
}

fn family_id<T: LatticeScalar>(spec: &HoppingSpec<T>, flux: &MagneticFlux<T>) -> u64 {
    // fold the flux entries into the hopping fingerprint (FNV-1a style)
    let mut h = spec.fingerprint();
    for i in 0..flux.dim() {
        for j in 0..flux.dim() {
            for b in flux.entry(i, j).to_f64().unwrap().to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    h
}

/// Assemble the model on a box. `disorder` holds one variable per site in
/// rank order (see [`crate::disorder`]); `None` means the clean model.
pub fn build<T: LatticeScalar>(
    spec: &HoppingSpec<T>,
    geometry: &FiniteGeometry,
    flux: &MagneticFlux<T>,
    disorder: Option<&Array1<T>>,
) -> Result<FiniteModel<T>> {
    if geometry.dim() != spec.dim() {
        return Err(Error::Geometry(format!(
            "geometry dim {} vs model dim {}",
            geometry.dim(),
            spec.dim()
        )));
    }
    flux.check_commensurate(geometry)?;
    if let Some(w) = disorder {
        if w.len() != geometry.site_count() {
            return Err(Error::Config(format!(
                "disorder realization has {} entries for {} sites",
                w.len(),
                geometry.site_count()
            )));
        }
    }
    let nf = spec.fiber_dim();
    let total = geometry.site_count() * nf;
    let mut m = Array2::<Complex<T>>::zeros((total, total));

    for r1 in 0..geometry.site_count() {
        let x1 = geometry.coords(r1);
        for hop in spec.hops() {
            let Some(x2) = geometry.translate(&x1, &hop.displacement) else {
                continue;
            };
            let r2 = geometry.rank(&x2);
            let w = disorder.map_or(T::zero(), |v| v[r2] * spec.amplitude);
            let onsite = hop.displacement.iter().all(|&y| y == 0);
            let phase = flux.hop_phase(&x1, &hop.displacement);
            accumulate(&mut m, r2, r1, nf, phase, &hop.constant, &hop.disorder, w, onsite);
        }
    }

    Ok(FiniteModel {
        matrix: m,
        geometry: geometry.clone(),
        fiber_dim: nf,
        chiral: spec.chiral().cloned(),
        family_id: family_id(spec, flux),
    })
}

/// Half-space restriction: the bulk hops on a box whose LAST axis is open
/// (hops through the face are dropped), plus an optional finite-range
/// boundary term supported on the `x_d = 0` layers.
pub fn build_halfspace<T: LatticeScalar>(
    spec: &HoppingSpec<T>,
    geometry: &FiniteGeometry,
    flux: &MagneticFlux<T>,
    disorder: Option<&Array1<T>>,
    boundary: Option<&BoundaryTerm<T>>,
) -> Result<FiniteModel<T>> {
    let d = geometry.dim();
    if !geometry.is_half_space() {
        return Err(Error::Geometry(
            "half-space restriction needs a half-space geometry".into(),
        ));
    }
    let mut model = build(spec, geometry, flux, disorder)?;
    if let Some(term) = boundary {
        term.validate(d, spec.fiber_dim())?;
        let depth = geometry.sides()[d - 1];
        if term.max_layer() >= depth {
            return Err(Error::Geometry(format!(
                "boundary term reaches layer {} but depth is {depth}",
                term.max_layer()
            )));
        }
        let nf = spec.fiber_dim();
        let edge_sides: Vec<usize> = geometry.sides()[..d - 1].to_vec();
        let edge_bc: Vec<BoundaryCondition> = geometry.boundary()[..d - 1].to_vec();
        let edge = FiniteGeometry::new(edge_sides, edge_bc)?;
        for xe in edge.sites() {
            for hop in &term.hops {
                let mut x1 = xe.clone();
                x1.push(hop.layer_from as i64);
                let Some(head_plane) = edge.translate(&xe, &hop.in_plane) else {
                    continue;
                };
                let mut x2 = head_plane;
                x2.push(hop.layer_to as i64);
                let mut disp: Vec<i64> = hop.in_plane.clone();
                disp.push(hop.layer_to as i64 - hop.layer_from as i64);
                let r1 = geometry.rank(&x1);
                let r2 = geometry.rank(&x2);
                let w = disorder.map_or(T::zero(), |v| v[r2] * term.amplitude);
                let self_paired = r1 == r2;
                let phase = flux.hop_phase(&x1, &disp);
                accumulate(
                    &mut model.matrix,
                    r2,
                    r1,
                    nf,
                    phase,
                    &hop.constant,
                    &hop.disorder,
                    w,
                    self_paired,
                );
            }
        }
    }
    Ok(model)
}

/// Add `phase * (A + w B)` into the `(head, tail)` fiber block; unless the
/// block is its own conjugate partner, also add the mirrored conjugate.
#[allow(clippy::too_many_arguments)]
fn accumulate<T: LatticeScalar>(
    m: &mut Array2<Complex<T>>,
    head: usize,
    tail: usize,
    nf: usize,
    phase: Complex<T>,
    constant: &Array2<Complex<T>>,
    disorder: &Array2<Complex<T>>,
    w: T,
    self_paired: bool,
) {
    for a in 0..nf {
        for b in 0..nf {
            let v = phase * (constant[(a, b)] + disorder[(a, b)] * w);
            m[(head * nf + a, tail * nf + b)] += v;
            if !self_paired {
                m[(tail * nf + b, head * nf + a)] += v.conj();
            }
        }
    }
}

/// Magnetic lattice translation by `z` on a fully periodic box:
/// permutation of sites composed with the gauge phase, acting as the
/// identity on the fiber. Conjugation by the result maps the model with
/// disorder `omega` to the model with the shifted disorder
/// `x -> omega(rep(x - z))`, exactly, provided the flux satisfies
/// [`MagneticFlux::check_translation_exact`].
pub fn magnetic_translation<T: LatticeScalar>(
    geometry: &FiniteGeometry,
    flux: &MagneticFlux<T>,
    fiber_dim: usize,
    z: &[i64],
) -> Result<Array2<Complex<T>>> {
    flux.check_translation_exact(geometry)?;
    let total = geometry.site_count() * fiber_dim;
    let mut w = Array2::<Complex<T>>::zeros((total, total));
    for r1 in 0..geometry.site_count() {
        let x = geometry.coords(r1);
        let x2 = geometry
            .translate(&x, z)
            .expect("periodic translate is total");
        let r2 = geometry.rank(&x2);
        let phase = flux.hop_phase(z, &x); // e^{2 pi i b(z, x)}
        for a in 0..fiber_dim {
            w[(r2 * fiber_dim + a, r1 * fiber_dim + a)] = phase;
        }
    }
    Ok(w)
}

/// Disorder realization that makes `W_z H(omega) W_z^dag` an exact equality:
/// the field seen from the translated frame.
pub fn translated_disorder<T: LatticeScalar>(
    values: &Array1<T>,
    geometry: &FiniteGeometry,
    z: &[i64],
) -> Array1<T> {
    let neg: Vec<i64> = z.iter().map(|&v| -v).collect();
    shift_realization(values, geometry, &neg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::DisorderField;
    use ndarray::array;
    use num_complex::Complex64 as C;

    fn hofstadter(phi: f64) -> (HoppingSpec<f64>, MagneticFlux<f64>) {
        let mut s = HoppingSpec::new(2, 1).unwrap();
        let one = array![[C::new(1., 0.)]];
        s.add_hop(&[1, 0], one.clone()).unwrap();
        s.add_hop(&[0, 1], one).unwrap();
        (s, MagneticFlux::in_plane(2, phi).unwrap())
    }

    fn two_band_disordered() -> HoppingSpec<f64> {
        let mut s = HoppingSpec::new(2, 2).unwrap();
        let s3 = array![[C::new(1., 0.), C::new(0., 0.)], [C::new(0., 0.), C::new(-1., 0.)]];
        let hop1 = array![[C::new(0.5, 0.), C::new(0., 0.5)], [C::new(0., 0.5), C::new(-0.5, 0.)]];
        let hop2 = array![[C::new(0.5, 0.), C::new(0.5, 0.)], [C::new(-0.5, 0.), C::new(-0.5, 0.)]];
        let id = array![[C::new(1., 0.), C::new(0., 0.)], [C::new(0., 0.), C::new(1., 0.)]];
        s.add_hop_disordered(&[0, 0], s3, id).unwrap();
        s.add_hop(&[1, 0], hop1).unwrap();
        s.add_hop(&[0, 1], hop2).unwrap();
        s.amplitude = 1.3;
        s
    }

    #[test]
    fn exact_hermiticity_bitwise() {
        let spec = two_band_disordered();
        let g = FiniteGeometry::open(&[5, 4]).unwrap();
        let flux = MagneticFlux::zero(2);
        let w = DisorderField::new(3).realize(&g);
        let m = build(&spec, &g, &flux, Some(&w)).unwrap().matrix;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let a = m[(i, j)];
                let b = m[(j, i)].conj();
                assert_eq!(a.re, b.re);
                assert_eq!(a.im, b.im);
            }
        }
    }

    #[test]
    fn locality_respected() {
        let spec = two_band_disordered();
        let g = FiniteGeometry::open(&[6, 6]).unwrap();
        let m = build(&spec, &g, &MagneticFlux::zero(2), None).unwrap();
        for r1 in 0..g.site_count() {
            for r2 in 0..g.site_count() {
                let d = g.wrapped_delta(&g.coords(r1), &g.coords(r2));
                if d.iter().any(|&v| v.abs() > 1) {
                    let block = m.matrix.slice(s![r1 * 2..r1 * 2 + 2, r2 * 2..r2 * 2 + 2]);
                    assert!(block.iter().all(|z| z.norm() == 0.0));
                }
            }
        }
    }

    #[test]
    fn plaquette_flux_counterclockwise() {
        let phi = 1.0 / 4.0;
        let (spec, flux) = hofstadter(phi);
        let g = FiniteGeometry::open(&[5, 5]).unwrap();
        let m = build(&spec, &g, &flux, None).unwrap().matrix;
        let at = |x: &[i64], y: &[i64]| m[(g.rank(x), g.rank(y))];
        for x0 in 0..4 {
            for x1 in 0..4 {
                let x = [x0, x1];
                let xi = [x0 + 1, x1];
                let xij = [x0 + 1, x1 + 1];
                let xj = [x0, x1 + 1];
                let loop_phase =
                    at(&xi, &x) * at(&xij, &xi) * at(&xj, &xij) * at(&x, &xj);
                let expect = C::from_polar(1.0, 2.0 * std::f64::consts::PI * phi);
                assert!((loop_phase - expect).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn torus_covariance_exact() {
        // flux 1/3 on a 6x6 torus satisfies the strict integer conditions
        let (mut spec, flux) = hofstadter(1.0 / 3.0);
        spec.amplitude = 0.8;
        // attach on-site disorder so covariance really moves the field
        let one = array![[C::new(1., 0.)]];
        let zero = array![[C::new(0., 0.)]];
        spec.add_hop_disordered(&[0, 0], zero, one).unwrap();
        let g = FiniteGeometry::torus(&[6, 6]).unwrap();
        let omega = DisorderField::new(99).realize(&g);
        let h = build(&spec, &g, &flux, Some(&omega)).unwrap().matrix;
        for z in [[1i64, 0], [0, 1], [2, -1], [-2, 2], [3, 3]] {
            let w = magnetic_translation(&g, &flux, 1, &z).unwrap();
            let wh = w.dot(&h).dot(&w.t().mapv(|v| v.conj()));
            let shifted = translated_disorder(&omega, &g, &z);
            let h2 = build(&spec, &g, &flux, Some(&shifted)).unwrap().matrix;
            let err = (&wh - &h2).iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert!(err < 1e-13, "covariance violated for shift {z:?}: {err}");
        }
    }

    #[test]
    fn halfspace_is_dirichlet_restriction() {
        let spec = two_band_disordered();
        let g = FiniteGeometry::halfspace(&[4], &[BoundaryCondition::Open], 5).unwrap();
        let w = DisorderField::new(5).realize(&g);
        let bulk = build(&spec, &g, &MagneticFlux::zero(2), Some(&w)).unwrap();
        let half = build_halfspace(&spec, &g, &MagneticFlux::zero(2), Some(&w), None).unwrap();
        assert_eq!(bulk.matrix, half.matrix);
        // the flag is demanded
        let plain = FiniteGeometry::open(&[4, 5]).unwrap();
        assert!(build_halfspace(&spec, &plain, &MagneticFlux::zero(2), None, None).is_err());
    }

    #[test]
    fn boundary_term_stays_hermitian() {
        use crate::hopping::BoundaryHop;
        let spec = two_band_disordered();
        let g = FiniteGeometry::halfspace(&[6], &[BoundaryCondition::Periodic], 4).unwrap();
        let w = DisorderField::new(8).realize(&g);
        let s1 = array![[C::new(0., 0.), C::new(1., 0.)], [C::new(1., 0.), C::new(0., 0.)]];
        let term = BoundaryTerm {
            hops: vec![
                BoundaryHop {
                    in_plane: vec![0],
                    layer_from: 0,
                    layer_to: 0,
                    constant: s1.clone(),
                    disorder: s1.clone(),
                },
                BoundaryHop {
                    in_plane: vec![1],
                    layer_from: 0,
                    layer_to: 1,
                    constant: array![
                        [C::new(0.3, 0.1), C::new(0., 0.)],
                        [C::new(0., 0.2), C::new(0., 0.)]
                    ],
                    disorder: Array2::zeros((2, 2)),
                },
            ],
            amplitude: 0.7,
        };
        let m = build_halfspace(&spec, &g, &MagneticFlux::zero(2), Some(&w), Some(&term))
            .unwrap()
            .matrix;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                assert_eq!(m[(i, j)].re, m[(j, i)].conj().re);
                assert_eq!(m[(i, j)].im, m[(j, i)].conj().im);
            }
        }
        // the edge block differs from the plain restriction
        let plain = build_halfspace(&spec, &g, &MagneticFlux::zero(2), Some(&w), None)
            .unwrap()
            .matrix;
        assert_ne!(m, plain);
    }
}
