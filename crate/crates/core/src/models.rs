//! Builtin model catalog used by tests, the harness and the CLI.
//!
//! Each constructor returns a ready-to-build hopping specification, the
//! flux it expects and a default Fermi level placed inside the relevant
//! gap. Pauli blocks are written out explicitly so the conventions are
//! visible in one place.

use ndarray::{array, Array2};
use num_complex::Complex;

use crate::error::Result;
use crate::flux::MagneticFlux;
use crate::hopping::HoppingSpec;
use crate::scalar::{cplx, real, LatticeScalar};

/// A named, ready-to-build model.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct BuiltinModel<T> {
    pub name: String,
    pub spec: HoppingSpec<T>,
    pub flux: MagneticFlux<T>,
    /// Default Fermi level inside the gap of interest.
    pub fermi_level: T,
}

pub fn pauli<T: LatticeScalar>(k: usize) -> Array2<Complex<T>> {
    let (o, l) = (T::zero(), T::one());
    match k {
        0 => array![[cplx(l, o), cplx(o, o)], [cplx(o, o), cplx(l, o)]],
        1 => array![[cplx(o, o), cplx(l, o)], [cplx(l, o), cplx(o, o)]],
        2 => array![[cplx(o, o), cplx(o, -l)], [cplx(o, l), cplx(o, o)]],
        3 => array![[cplx(l, o), cplx(o, o)], [cplx(o, o), cplx(-l, o)]],
        _ => panic!("pauli index {k} out of range"),
    }
}

fn kron<T: LatticeScalar>(a: &Array2<Complex<T>>, b: &Array2<Complex<T>>) -> Array2<Complex<T>> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = Array2::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            for k in 0..rb {
                for l in 0..cb {
                    out[(i * rb + k, j * cb + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

fn scale<T: LatticeScalar>(m: &Array2<Complex<T>>, c: Complex<T>) -> Array2<Complex<T>> {
    m.mapv(|v| v * c)
}

/// Two-band chiral chain: cells carry sublattices (A, B); `t1` couples A-B
/// inside a cell, `t2` couples B of one cell to A of the next. Disorder
/// rides the intra-cell bond, preserving the sigma_3 grading. Gapped for
/// `|t1| != |t2|`; the `|t2| > |t1|` phase is topological.
pub fn ssh<T: LatticeScalar>(t1: T, t2: T, w: T) -> Result<BuiltinModel<T>> {
    let mut spec = HoppingSpec::new(1, 2)?;
    let zero = T::zero();
    let a0 = scale(&pauli::<T>(1), cplx(t1, zero));
    let inter = array![
        [cplx(zero, zero), cplx(t2, zero)],
        [cplx(zero, zero), cplx(zero, zero)]
    ];
    spec.add_hop_disordered(&[0], a0, pauli::<T>(1))?;
    spec.add_hop(&[1], inter)?;
    spec.amplitude = w;
    spec.set_chiral(pauli::<T>(3))?;
    Ok(BuiltinModel {
        name: format!("ssh(t1={t1},t2={t2})"),
        spec,
        flux: MagneticFlux::zero(1),
        fermi_level: T::zero(),
    })
}

/// Mirror-image chiral chain: the inter-cell bond couples A of one cell to
/// B of the next, flipping the sign of the winding relative to [`ssh`].
pub fn ssh_reversed<T: LatticeScalar>(t1: T, t2: T, w: T) -> Result<BuiltinModel<T>> {
    let mut spec = HoppingSpec::new(1, 2)?;
    let zero = T::zero();
    let a0 = scale(&pauli::<T>(1), cplx(t1, zero));
    let inter = array![
        [cplx(zero, zero), cplx(zero, zero)],
        [cplx(t2, zero), cplx(zero, zero)]
    ];
    spec.add_hop_disordered(&[0], a0, pauli::<T>(1))?;
    spec.add_hop(&[1], inter)?;
    spec.amplitude = w;
    spec.set_chiral(pauli::<T>(3))?;
    Ok(BuiltinModel {
        name: format!("ssh_reversed(t1={t1},t2={t2})"),
        spec,
        flux: MagneticFlux::zero(1),
        fermi_level: T::zero(),
    })
}

/// Two-band Chern insulator on the square lattice:
/// `H(k) = sin k_1 sigma_1 + sin k_2 sigma_2 + (m + cos k_1 + cos k_2) sigma_3`.
/// Gap closes at |m| = 0, 2; the band below the gap carries a unit Chern
/// number for 0 < |m| < 2 and is trivial for |m| > 2. On-site disorder.
pub fn qwz<T: LatticeScalar>(m: T, w: T) -> Result<BuiltinModel<T>> {
    let mut spec = HoppingSpec::new(2, 2)?;
    let half = cplx(real::<T>(0.5), T::zero());
    let ihalf = cplx(T::zero(), real::<T>(0.5));
    let s1 = pauli::<T>(1);
    let s2 = pauli::<T>(2);
    let s3 = pauli::<T>(3);
    let a0 = scale(&s3, cplx(m, T::zero()));
    // hop along axis j: (sigma_3 + i sigma_j)/2, giving the sin/cos blocks
    let a1 = &scale(&s3, half) + &scale(&s1, ihalf);
    let a2 = &scale(&s3, half) + &scale(&s2, ihalf);
    spec.add_hop_disordered(&[0, 0], a0, pauli::<T>(0))?;
    spec.add_hop(&[1, 0], a1)?;
    spec.add_hop(&[0, 1], a2)?;
    spec.amplitude = w;
    Ok(BuiltinModel {
        name: format!("qwz(m={m})"),
        spec,
        flux: MagneticFlux::zero(2),
        fermi_level: T::zero(),
    })
}

/// Single-band square lattice threaded by flux `p/q` per plaquette, with
/// on-site disorder. The default Fermi level sits in the lowest gap of the
/// `q = 3` butterfly; for other `q` set it yourself.
pub fn hofstadter<T: LatticeScalar>(p: i64, q: i64, w: T) -> Result<BuiltinModel<T>> {
    let mut spec = HoppingSpec::new(2, 1)?;
    let one = array![[cplx(T::one(), T::zero())]];
    let zero = array![[cplx(T::zero(), T::zero())]];
    spec.add_hop(&[1, 0], one.clone())?;
    spec.add_hop(&[0, 1], one.clone())?;
    spec.add_hop_disordered(&[0, 0], zero, one)?;
    spec.amplitude = w;
    let phi = real::<T>(p as f64 / q as f64);
    // lowest gap of the q=3 spectrum is centered at -(1+sqrt(3))/2
    let mu = if q == 3 {
        -(T::one() + real::<T>(3.0).sqrt()) / (T::one() + T::one())
    } else {
        T::zero()
    };
    Ok(BuiltinModel {
        name: format!("hofstadter({p}/{q})"),
        spec,
        flux: MagneticFlux::in_plane(2, phi)?,
        fermi_level: mu,
    })
}

/// Single-band chain with on-site disorder; the classic 1D localization
/// testbed. Spectrum of the clean chain is [-2, 2].
pub fn anderson_chain<T: LatticeScalar>(w: T) -> Result<BuiltinModel<T>> {
    let mut spec = HoppingSpec::new(1, 1)?;
    let one = array![[cplx(T::one(), T::zero())]];
    let zero = array![[cplx(T::zero(), T::zero())]];
    spec.add_hop(&[1], one.clone())?;
    spec.add_hop_disordered(&[0], zero, one)?;
    spec.amplitude = w;
    Ok(BuiltinModel {
        name: format!("anderson(w={w})"),
        spec,
        flux: MagneticFlux::zero(1),
        fermi_level: T::zero(),
    })
}

/// Four-band chiral model on the cubic lattice:
/// `H(k) = sum_j sin k_j G_j + (m + sum_j cos k_j) G_4` with
/// `G_j = sigma_j (x) tau_1`, `G_4 = 1 (x) tau_2` and grading
/// `J = 1 (x) tau_3`. Gapped away from |m| = 1, 3; unit winding for
/// 1 < |m| < 3. Disorder rides `G_4`, preserving the grading.
pub fn chiral3d<T: LatticeScalar>(m: T, w: T) -> Result<BuiltinModel<T>> {
    let mut spec = HoppingSpec::new(3, 4)?;
    let id2 = pauli::<T>(0);
    let g = [
        kron(&pauli::<T>(1), &pauli::<T>(1)),
        kron(&pauli::<T>(2), &pauli::<T>(1)),
        kron(&pauli::<T>(3), &pauli::<T>(1)),
    ];
    let g4 = kron(&id2, &pauli::<T>(2));
    let j = kron(&id2, &pauli::<T>(3));
    let half = cplx(real::<T>(0.5), T::zero());
    let ihalf = cplx(T::zero(), real::<T>(0.5));
    let a0 = scale(&g4, cplx(m, T::zero()));
    spec.add_hop_disordered(&[0, 0, 0], a0, g4.clone())?;
    for (axis, gj) in g.iter().enumerate() {
        let mut disp = [0i64; 3];
        disp[axis] = 1;
        let block = &scale(&g4, half) + &scale(gj, ihalf);
        spec.add_hop(&disp, block)?;
    }
    spec.amplitude = w;
    spec.set_chiral(j)?;
    Ok(BuiltinModel {
        name: format!("chiral3d(m={m})"),
        spec,
        flux: MagneticFlux::zero(3),
        fermi_level: T::zero(),
    })
}

/// Decoupled sites with fixed on-site levels and on-site disorder; the
/// zero-hopping reference point.
pub fn atomic<T: LatticeScalar>(dim: usize, levels: &[T], w: T) -> Result<BuiltinModel<T>> {
    let n = levels.len();
    let mut spec = HoppingSpec::new(dim, n)?;
    let mut a0 = Array2::zeros((n, n));
    for (i, &e) in levels.iter().enumerate() {
        a0[(i, i)] = cplx(e, T::zero());
    }
    let mut id = Array2::zeros((n, n));
    for i in 0..n {
        id[(i, i)] = cplx(T::one(), T::zero());
    }
    spec.add_hop_disordered(&vec![0i64; dim], a0, id)?;
    spec.amplitude = w;
    Ok(BuiltinModel {
        name: format!("atomic(d={dim},n={n})"),
        spec,
        flux: MagneticFlux::zero(dim),
        fermi_level: T::zero(),
    })
}

/// Look up a builtin by name with per-model parameters.
pub fn by_name<T: LatticeScalar>(name: &str, params: &[T]) -> Result<BuiltinModel<T>> {
    let p = |i: usize, default: f64| -> T {
        params.get(i).copied().unwrap_or_else(|| real(default))
    };
    match name {
        "ssh" => ssh(p(0, 0.0), p(1, 1.0), p(2, 0.0)),
        "ssh_reversed" => ssh_reversed(p(0, 0.0), p(1, 1.0), p(2, 0.0)),
        "qwz" => qwz(p(0, 1.0), p(1, 0.0)),
        "hofstadter" => hofstadter(
            p(0, 1.0).to_i64().unwrap_or(1),
            p(1, 3.0).to_i64().unwrap_or(3),
            p(2, 0.0),
        ),
        "anderson" => anderson_chain(p(0, 1.0)),
        "chiral3d" => chiral3d(p(0, 2.0), p(1, 0.0)),
        "atomic" => atomic(1, &[p(0, -1.0), p(1, 1.0)], p(2, 0.0)),
        other => Err(crate::error::Error::Config(format!(
            "unknown builtin model '{other}'"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FiniteGeometry;
    use crate::model::build;
    use crate::scalar::LatticeScalar;

    fn spectrum(model: &BuiltinModel<f64>, g: &FiniteGeometry) -> Vec<f64> {
        let h = build(&model.spec, g, &model.flux, None).unwrap();
        let (vals, _) = f64::eigh(&h.matrix).unwrap();
        vals.to_vec()
    }

    #[test]
    fn dimerized_chain_spectrum_is_pm_one() {
        let m = ssh(0.0, 1.0, 0.0).unwrap();
        let g = FiniteGeometry::torus(&[8]).unwrap();
        for v in spectrum(&m, &g) {
            assert!((v.abs() - 1.0).abs() < 1e-12, "eigenvalue {v}");
        }
    }

    #[test]
    fn atomic_limit_is_diagonal() {
        let m = atomic(1, &[-1.0, 1.0], 0.0).unwrap();
        let g = FiniteGeometry::open(&[5]).unwrap();
        let h = build(&m.spec, &g, &m.flux, None).unwrap();
        for ((i, j), v) in h.matrix.indexed_iter() {
            if i != j {
                assert_eq!(v.norm(), 0.0);
            }
        }
        let vals = spectrum(&m, &g);
        assert!(vals.iter().all(|v| (v.abs() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn qwz_gap_tracks_mass() {
        // clean gap is |m| at the band edge for small m, closes at m = 0, 2
        let g = FiniteGeometry::torus(&[8, 8]).unwrap();
        let gap = |m: f64| {
            let vals = spectrum(&qwz(m, 0.0).unwrap(), &g);
            vals.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min)
        };
        assert!(gap(1.0) > 0.9); // k-grid contains the gap-minimum momenta
        assert!(gap(2.0) < 1e-12); // closing at m=2 (k = (0,pi) on the grid)
        assert!(gap(3.0) > 0.9);
    }

    #[test]
    fn chiral3d_gap_and_grading() {
        let m = chiral3d(2.0, 0.0).unwrap();
        let g = FiniteGeometry::torus(&[4, 4, 4]).unwrap();
        let vals = spectrum(&m, &g);
        let gap = vals.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        assert!(gap > 0.99, "gap {gap}");
        // spectrum symmetric under chirality
        let mut sorted = vals.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (lo, hi) in sorted.iter().zip(sorted.iter().rev()) {
            assert!((lo + hi).abs() < 1e-10);
        }
    }

    #[test]
    fn hofstadter_third_flux_lowest_gap() {
        // on the flux-1/3 torus the three bands are separated; the stored
        // Fermi level sits between band 1 and band 2
        let m = hofstadter(1, 3, 0.0).unwrap();
        let g = FiniteGeometry::torus(&[6, 6]).unwrap();
        let vals = spectrum(&m, &g);
        let below = vals.iter().filter(|&&v| v < m.fermi_level).count();
        assert_eq!(below, 12); // one third of 36
        let gap: f64 = vals
            .iter()
            .map(|v| (v - m.fermi_level).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(gap > 0.2, "gap around stored Fermi level: {gap}");
    }
}
