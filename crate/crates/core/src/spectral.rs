//! Spectral calculus and derived operators.
//!
//! Everything downstream of the eigensolver lives here: Fermi projections,
//! smooth switch functions, the chiral flat-band unitary, and the two
//! boundary operators of the half-space theory (the exponential unitary
//! `exp(2 pi i f(H))` and the conjugated reference projection).

use ndarray::{Array1, Array2};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::FiniteGeometry;
use crate::model::FiniteModel;
use crate::scalar::{real, LatticeScalar};

/// A matrix tied to its lattice interpretation; projections and unitaries
/// produced by this module are carried around in this form.
#[derive(Clone, Debug)]
pub struct LatticeOperator<T> {
    pub matrix: Array2<Complex<T>>,
    pub geometry: FiniteGeometry,
    pub fiber_dim: usize,
    pub family_id: u64,
}

impl<T: LatticeScalar> LatticeOperator<T> {
    pub fn new(
        matrix: Array2<Complex<T>>,
        geometry: FiniteGeometry,
        fiber_dim: usize,
        family_id: u64,
    ) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() != geometry.site_count() * fiber_dim
        {
            return Err(Error::Spectral(format!(
                "operator dimension {} does not match {} sites x fiber {}",
                matrix.nrows(),
                geometry.site_count(),
                fiber_dim
            )));
        }
        Ok(Self {
            matrix,
            geometry,
            fiber_dim,
            family_id,
        })
    }
}

/// Eigendecomposition of a finite model, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition<T> {
    pub values: Array1<T>,
    pub vectors: Array2<Complex<T>>,
    pub family_id: u64,
}

/// Dense Hermitian eigensolve; the input is rejected if it is not
/// Hermitian to rounding.
pub fn decompose<T: LatticeScalar>(model: &FiniteModel<T>) -> Result<SpectralDecomposition<T>> {
    let m = &model.matrix;
    let scale = m.iter().map(|v| v.norm()).fold(T::zero(), T::max);
    let tol = real::<T>(1e-10) * (T::one() + scale);
    for i in 0..m.nrows() {
        for j in 0..=i {
            if (m[(i, j)] - m[(j, i)].conj()).norm() > tol {
                return Err(Error::Spectral("matrix is not Hermitian".into()));
            }
        }
    }
    let (values, vectors) = T::eigh(m)?;
    Ok(SpectralDecomposition {
        values,
        vectors,
        family_id: model.family_id,
    })
}

impl<T: LatticeScalar> SpectralDecomposition<T> {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Spectral radius (sets the scale for gap thresholds).
    pub fn radius(&self) -> T {
        self.values
            .iter()
            .map(|v| v.abs())
            .fold(T::zero(), T::max)
    }

    /// The maximal spectrum-free interval containing `mu`, if its width
    /// clears the detection threshold `1e-8 * radius`.
    pub fn gap_containing(&self, mu: T) -> Option<(T, T)> {
        let n = self.values.len();
        if n == 0 || mu <= self.values[0] || mu >= self.values[n - 1] {
            return None;
        }
        // first index with value > mu; partition_point needs a sorted list,
        // which the solver guarantees
        let above = self.values.iter().position(|&v| v > mu)?;
        if above == 0 {
            return None;
        }
        let (lo, hi) = (self.values[above - 1], self.values[above]);
        if mu <= lo {
            return None; // mu collides with an eigenvalue
        }
        let threshold = real::<T>(1e-8) * self.radius();
        (hi - lo > threshold).then_some((lo, hi))
    }

    /// Spectral projection onto energies `<= mu`. Rejected when `mu` sits
    /// on an eigenvalue to within 1e-12 (the rank would be ambiguous).
    pub fn fermi_projection(&self, mu: T) -> Result<Array2<Complex<T>>> {
        let tol = real::<T>(1e-12) * (T::one() + self.radius());
        if self.values.iter().any(|&v| (v - mu).abs() < tol) {
            return Err(Error::Spectral(format!(
                "Fermi level {mu} collides with an eigenvalue; rank ambiguous"
            )));
        }
        let rank = self.values.iter().filter(|&&v| v <= mu).count();
        let occ = self.vectors.slice(ndarray::s![.., 0..rank]);
        let occ_h = occ.t().mapv(|v| v.conj());
        Ok(occ.dot(&occ_h))
    }

    /// Apply a scalar function through the eigenbasis: `V f(Lambda) V^dag`.
    pub fn matrix_function(&self, f: impl Fn(T) -> Complex<T>) -> Array2<Complex<T>> {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.columns_mut().into_iter().enumerate() {
            let w = f(self.values[j]);
            col.mapv_inplace(|v| v * w);
        }
        let vh = self.vectors.t().mapv(|v| v.conj());
        scaled.dot(&vh)
    }
}

/// Spectral weight profile used by the boundary constructions. The smooth
/// kinds interpolate with the degree-7 polynomial whose first three
/// derivatives vanish at both ends of the transition window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SwitchFunction<T> {
    /// 1 below `a`, 0 above `b`, monotone in between.
    Descending { a: T, b: T },
    /// -1 below `-halfwidth`, +1 above `+halfwidth`, odd under inversion.
    OddSign { halfwidth: T },
    /// Sharp step at `at`: 1 below, 0 above. The boundary constructions
    /// treat this limit exactly (no spectral calculus involved).
    Step { at: T },
}

/// Ascending degree-7 smoothstep on [0, 1]: s(0)=0, s(1)=1, with
/// s', s'', s''' = 0 at both ends; satisfies s(1-t) = 1-s(t).
fn smoothstep<T: LatticeScalar>(t: T) -> T {
    if t <= T::zero() {
        return T::zero();
    }
    if t >= T::one() {
        return T::one();
    }
    let t4 = t * t * t * t;
    t4 * (real::<T>(35.0) + t * (real::<T>(-84.0) + t * (real::<T>(70.0) - real::<T>(20.0) * t)))
}

impl<T: LatticeScalar> SwitchFunction<T> {
    pub fn descending(a: T, b: T) -> Result<Self> {
        if !(a < b) {
            return Err(Error::Config("switch window needs a < b".into()));
        }
        Ok(SwitchFunction::Descending { a, b })
    }

    pub fn odd_sign(halfwidth: T) -> Result<Self> {
        if !(halfwidth > T::zero()) {
            return Err(Error::Config("switch halfwidth must be positive".into()));
        }
        Ok(SwitchFunction::OddSign { halfwidth })
    }

    pub fn step(at: T) -> Self {
        SwitchFunction::Step { at }
    }

    pub fn evaluate(&self, x: T) -> T {
        match *self {
            SwitchFunction::Descending { a, b } => T::one() - smoothstep((x - a) / (b - a)),
            SwitchFunction::OddSign { halfwidth } => {
                let two = T::one() + T::one();
                two * smoothstep((x + halfwidth) / (two * halfwidth)) - T::one()
            }
            SwitchFunction::Step { at } => {
                if x <= at {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    /// Transition window (collapsed to a point for the step).
    pub fn window(&self) -> (T, T) {
        match *self {
            SwitchFunction::Descending { a, b } => (a, b),
            SwitchFunction::OddSign { halfwidth } => (-halfwidth, halfwidth),
            SwitchFunction::Step { at } => (at, at),
        }
    }

    /// Does the transition window sit strictly inside the given gap?
    pub fn fits_gap(&self, gap: (T, T)) -> bool {
        let (a, b) = self.window();
        match *self {
            SwitchFunction::Step { .. } => gap.0 < a && a < gap.1,
            _ => gap.0 < a && b < gap.1,
        }
    }
}

/// A boundary operator plus its conditioning diagnostic.
#[derive(Clone, Debug)]
pub struct BoundaryOperator<T> {
    pub op: LatticeOperator<T>,
    /// Set when the switch transition window is not strictly inside the
    /// bulk gap: the construction still runs but decay is not guaranteed.
    pub ill_conditioned: bool,
}

/// Identity on the full space.
fn identity<T: LatticeScalar>(n: usize) -> Array2<Complex<T>> {
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        m[(i, i)] = Complex::new(T::one(), T::zero());
    }
    m
}

/// `exp(2 pi i f(H))` on a half-space model. The result deviates from the
/// identity only through spectrum inside the transition window, so it is
/// supported near the boundary whenever that window lies in the bulk gap.
/// In the step limit the result is the identity, exactly and by definition.
pub fn boundary_unitary<T: LatticeScalar>(
    model: &FiniteModel<T>,
    dec: Option<&SpectralDecomposition<T>>,
    f: &SwitchFunction<T>,
    bulk_gap: (T, T),
) -> Result<BoundaryOperator<T>> {
    if !model.geometry.is_half_space() {
        return Err(Error::Geometry(
            "boundary unitary needs a half-space model".into(),
        ));
    }
    if matches!(f, SwitchFunction::OddSign { .. }) {
        return Err(Error::Config(
            "boundary unitary takes a descending or step switch".into(),
        ));
    }
    let ill = !f.fits_gap(bulk_gap);
    let matrix = match f {
        SwitchFunction::Step { .. } => identity(model.total_dim()),
        _ => {
            let dec = dec.ok_or_else(|| {
                Error::Spectral("smooth boundary unitary needs the decomposition".into())
            })?;
            let two_pi = (T::one() + T::one()) * T::PI();
            dec.matrix_function(|x| Complex::from_polar(T::one(), two_pi * f.evaluate(x)))
        }
    };
    Ok(BoundaryOperator {
        op: LatticeOperator::new(
            matrix,
            model.geometry.clone(),
            model.fiber_dim,
            model.family_id,
        )?,
        ill_conditioned: ill,
    })
}

/// Reference projection of the chiral grading, `(1 + J)/2` on every site.
pub fn reference_projection<T: LatticeScalar>(model: &FiniteModel<T>) -> Result<Array2<Complex<T>>> {
    let j = model
        .chiral
        .as_ref()
        .ok_or_else(|| Error::Spectral("model carries no chiral grading".into()))?;
    let nf = model.fiber_dim;
    let half = real::<T>(0.5);
    let mut p = Array2::zeros((model.total_dim(), model.total_dim()));
    for r in 0..model.site_count() {
        for a in 0..nf {
            for b in 0..nf {
                let jm = j[(a, b)];
                let idm = if a == b { T::one() } else { T::zero() };
                p[(r * nf + a, r * nf + b)] = (jm + Complex::new(idm, T::zero())) * half;
            }
        }
    }
    Ok(p)
}

/// Conjugated reference projection
/// `exp(-i pi/2 f(H)) P_ref exp(+i pi/2 f(H))` on a chiral half-space
/// model. Deep in the bulk, where f(H) acts as sgn(H), the conjugation
/// flips the grading and the result approaches `(1 - J)/2`; since the
/// grading is traceless on every site, the per-site trace of
/// `P_ref - result` still decays away from the edge, and that windowed
/// trace carries the boundary invariant. The step limit returns `P_ref`
/// exactly.
pub fn boundary_projection<T: LatticeScalar>(
    model: &FiniteModel<T>,
    dec: Option<&SpectralDecomposition<T>>,
    f: &SwitchFunction<T>,
    bulk_gap: (T, T),
) -> Result<BoundaryOperator<T>> {
    if !model.geometry.is_half_space() {
        return Err(Error::Geometry(
            "boundary projection needs a half-space model".into(),
        ));
    }
    if matches!(f, SwitchFunction::Descending { .. }) {
        return Err(Error::Config(
            "boundary projection takes an odd-sign or step switch".into(),
        ));
    }
    let p_ref = reference_projection(model)?;
    let ill = !f.fits_gap(bulk_gap);
    let matrix = match f {
        SwitchFunction::Step { .. } => p_ref,
        _ => {
            let dec = dec.ok_or_else(|| {
                Error::Spectral("smooth boundary projection needs the decomposition".into())
            })?;
            let half_pi = T::PI() * real::<T>(0.5);
            let w = dec.matrix_function(|x| Complex::from_polar(T::one(), -half_pi * f.evaluate(x)));
            let wh = w.t().mapv(|v| v.conj());
            w.dot(&p_ref).dot(&wh)
        }
    };
    Ok(BoundaryOperator {
        op: LatticeOperator::new(
            matrix,
            model.geometry.clone(),
            model.fiber_dim,
            model.family_id,
        )?,
        ill_conditioned: ill,
    })
}

fn rows_by_layer(g: &FiniteGeometry, nf: usize) -> Vec<Vec<usize>> {
    let d = g.dim();
    let depth = g.sides()[d - 1];
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); depth];
    for (rank, x) in g.sites().enumerate() {
        let l = x[d - 1] as usize;
        for a in 0..nf {
            rows[l].push(rank * nf + a);
        }
    }
    rows
}

/// Per-layer Frobenius norms of `M - R` restricted to each normal layer of
/// a half-space box. Meaningful for the boundary unitary, whose deviation
/// from the identity is norm-localized at the edge.
pub fn layer_deviation_norms<T: LatticeScalar>(
    op: &LatticeOperator<T>,
    reference: &Array2<Complex<T>>,
) -> Vec<T> {
    rows_by_layer(&op.geometry, op.fiber_dim)
        .iter()
        .map(|rows| {
            let mut acc = T::zero();
            for &i in rows {
                for &j in rows {
                    let dv = op.matrix[(i, j)] - reference[(i, j)];
                    acc += dv.norm_sqr();
                }
            }
            acc.sqrt()
        })
        .collect()
}

/// Per-layer traces of `R - M` on a half-space box. This is the quantity
/// that decays into the bulk for the conjugated reference projection, and
/// its partial sums near one edge carry the boundary invariant.
pub fn layer_trace_deviations<T: LatticeScalar>(
    op: &LatticeOperator<T>,
    reference: &Array2<Complex<T>>,
) -> Vec<Complex<T>> {
    rows_by_layer(&op.geometry, op.fiber_dim)
        .iter()
        .map(|rows| {
            let mut acc = Complex::new(T::zero(), T::zero());
            for &i in rows {
                acc = acc + reference[(i, i)] - op.matrix[(i, i)];
            }
            acc
        })
        .collect()
}

/// The off-diagonal block of `sgn(H)` in the chiral grading: a unitary on
/// the half-fiber lattice space, carrying the odd-dimensional invariant.
pub struct FlatBandUnitary<T> {
    pub op: LatticeOperator<T>,
    /// Smallest |eigenvalue| of H (the gap radius certified by the solve).
    pub gap_radius: T,
}

/// Extract the flat-band unitary of a gapped chiral model.
///
/// Works through the polar decomposition of the off-diagonal chiral block:
/// with `H = [[0, C], [C^dag, 0]]` in the grading eigenbasis,
/// `sgn(H) = [[0, Q], [Q^dag, 0]]` where `Q = C (C^dag C)^{-1/2}`, and the
/// flat-band unitary is the minus<-plus block `Q^dag`. This needs one
/// Hermitian eigensolve of half the full dimension instead of a full one.
pub fn flat_band_unitary<T: LatticeScalar>(model: &FiniteModel<T>) -> Result<FlatBandUnitary<T>> {
    let j = model
        .chiral
        .as_ref()
        .ok_or_else(|| Error::Spectral("model carries no chiral grading".into()))?;
    let nf = model.fiber_dim;
    if nf % 2 != 0 {
        return Err(Error::Spectral("chiral fiber dimension must be even".into()));
    }
    let (jvals, jvecs) = T::eigh(j)?;
    let one_tol = real::<T>(1e-10);
    if jvals.iter().any(|v| (v.abs() - T::one()).abs() > one_tol) {
        return Err(Error::Spectral("grading eigenvalues must be +-1".into()));
    }
    let plus: Vec<usize> = (0..nf).filter(|&k| jvals[k] > T::zero()).collect();
    let minus: Vec<usize> = (0..nf).filter(|&k| jvals[k] < T::zero()).collect();
    if plus.len() != minus.len() {
        return Err(Error::Spectral(
            "grading must split the fiber evenly".into(),
        ));
    }
    let half = nf / 2;
    let sites = model.site_count();
    let nh = sites * half;
    let scale = T::one()
        + model
            .matrix
            .iter()
            .map(|v| v.norm())
            .fold(T::zero(), T::max);
    let tol = real::<T>(1e-10) * scale;
    // rotate every fiber block into the grading basis; the diagonal corners
    // must vanish (that is the anticommutation with the grading), the
    // off-diagonal corner is C
    let mut c = Array2::zeros((nh, nh));
    let zero_c = Complex::new(T::zero(), T::zero());
    let mut rotated = vec![zero_c; nf * nf];
    let mut tmp = vec![zero_c; nf * nf];
    for r1 in 0..sites {
        for r2 in 0..sites {
            // tmp = block * jvecs, rotated = jvecs^dag * tmp
            for p in 0..nf {
                for q in 0..nf {
                    let mut acc = zero_c;
                    for m in 0..nf {
                        acc = acc + model.matrix[(r1 * nf + p, r2 * nf + m)] * jvecs[(m, q)];
                    }
                    tmp[p * nf + q] = acc;
                }
            }
            for p in 0..nf {
                for q in 0..nf {
                    let mut acc = zero_c;
                    for m in 0..nf {
                        acc = acc + jvecs[(m, p)].conj() * tmp[m * nf + q];
                    }
                    rotated[p * nf + q] = acc;
                }
            }
            for (ip, &kp) in plus.iter().enumerate() {
                for (iq, &kq) in plus.iter().enumerate() {
                    if rotated[kp * nf + kq].norm() > tol {
                        return Err(Error::Spectral(
                            "model does not anticommute with its grading".into(),
                        ));
                    }
                    let _ = (ip, iq);
                }
            }
            for &km in &minus {
                for &kn in &minus {
                    if rotated[km * nf + kn].norm() > tol {
                        return Err(Error::Spectral(
                            "model does not anticommute with its grading".into(),
                        ));
                    }
                }
            }
            for (ip, &kp) in plus.iter().enumerate() {
                for (im, &km) in minus.iter().enumerate() {
                    c[(r1 * half + ip, r2 * half + im)] = rotated[kp * nf + km];
                }
            }
        }
    }
    // polar part of C through the spectral square root of C^dag C
    let ch = c.t().mapv(|v| v.conj());
    let chc = ch.dot(&c);
    let (w, v) = T::eigh(&chc)?;
    let gap_radius = w[0].max(T::zero()).sqrt();
    if gap_radius < real::<T>(1e-10) * scale {
        return Err(Error::Spectral(
            "no spectral gap at zero; flat band undefined".into(),
        ));
    }
    let mut scaled = v.clone();
    for (k, mut col) in scaled.columns_mut().into_iter().enumerate() {
        let s = Complex::new(w[k].sqrt().recip(), T::zero());
        col.mapv_inplace(|x| x * s);
    }
    let vh = v.t().mapv(|x| x.conj());
    let inv_root = scaled.dot(&vh);
    let q = c.dot(&inv_root);
    let u = q.t().mapv(|x| x.conj());
    Ok(FlatBandUnitary {
        op: LatticeOperator::new(u, model.geometry.clone(), half, model.family_id)?,
        gap_radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::DisorderField;
    use crate::model::build;
    use crate::models;
    use ndarray::array;
    use num_complex::Complex64 as C;

    fn model_from(matrix: Array2<C>, sites: usize, nf: usize) -> FiniteModel<f64> {
        FiniteModel {
            matrix,
            geometry: FiniteGeometry::open(&[sites]).unwrap(),
            fiber_dim: nf,
            chiral: None,
            family_id: 0,
        }
    }

    #[test]
    fn decompose_rejects_non_hermitian() {
        let m = array![[C::new(0., 0.), C::new(1., 0.)], [C::new(0., 0.), C::new(0., 0.)]];
        assert!(decompose(&model_from(m, 2, 1)).is_err());
    }

    #[test]
    fn solver_contract_on_random_matrix() {
        let n = 50;
        let f = DisorderField::new(17);
        let mut h = Array2::<C>::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let re: f64 = f.sample(&[i as i64, j as i64, 0]);
                let im: f64 = if i == j { 0.0 } else { f.sample(&[i as i64, j as i64, 1]) };
                h[(i, j)] = C::new(re, im);
                h[(j, i)] = C::new(re, -im);
            }
        }
        let dec = decompose(&model_from(h.clone(), n, 1)).unwrap();
        // reconstruction
        let lam = Array2::from_diag(&dec.values.mapv(|v| C::new(v, 0.)));
        let vh = dec.vectors.t().mapv(|v| v.conj());
        let rec = dec.vectors.dot(&lam).dot(&vh);
        let scale = dec.radius();
        let err = (&rec - &h).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(err < 1e-10 * scale);
        // unitarity
        let vtv = vh.dot(&dec.vectors);
        for ((i, j), v) in vtv.indexed_iter() {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((v - C::new(expect, 0.)).norm() < 1e-10);
        }
        // sorted
        for w in dec.values.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn fermi_projection_laws() {
        let m = models::ssh(0.0, 1.0, 0.0).unwrap();
        let g = FiniteGeometry::torus(&[8]).unwrap();
        let h = build(&m.spec, &g, &m.flux, None).unwrap();
        let dec = decompose(&h).unwrap();
        let p = dec.fermi_projection(0.0).unwrap();
        let n = p.nrows();
        // rank = half the dimension (symmetric +-1 spectrum)
        let trace: C = (0..n).map(|i| p[(i, i)]).sum();
        assert!((trace.re - (n / 2) as f64).abs() < 1e-10);
        // idempotent and Hermitian
        let pp = p.dot(&p);
        let err = (&pp - &p).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(err < 1e-10);
        for i in 0..n {
            for j in 0..n {
                assert!((p[(i, j)] - p[(j, i)].conj()).norm() < 1e-12);
            }
        }
        // extremes
        let zero = dec.fermi_projection(-10.0).unwrap();
        assert!(zero.iter().all(|v| v.norm() < 1e-12));
        let id = dec.fermi_projection(10.0).unwrap();
        for ((i, j), v) in id.indexed_iter() {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((v - C::new(expect, 0.)).norm() < 1e-10);
        }
        // collision flagged
        assert!(dec.fermi_projection(1.0).is_err());
    }

    #[test]
    fn gap_detection() {
        let h = Array2::from_diag(&array![
            C::new(-2., 0.),
            C::new(-1., 0.),
            C::new(1., 0.),
            C::new(2., 0.)
        ]);
        let dec = decompose(&model_from(h, 4, 1)).unwrap();
        let (lo, hi) = dec.gap_containing(0.0).unwrap();
        assert_eq!((lo, hi), (-1.0, 1.0));
        assert!(dec.gap_containing(-5.0).is_none());
        assert!(dec.gap_containing(5.0).is_none());
        assert!(dec.gap_containing(1.0).is_none()); // on an eigenvalue
    }

    #[test]
    fn matrix_function_matches_elementwise_on_diagonal() {
        let vals = [-1.5, -0.25, 0.5, 2.0];
        let h = Array2::from_diag(&Array1::from_iter(vals.iter().map(|&v| C::new(v, 0.))));
        let dec = decompose(&model_from(h, 4, 1)).unwrap();
        let f = SwitchFunction::descending(-1.0, 1.0).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        let m = dec.matrix_function(|x| C::from_polar(1.0, two_pi * f.evaluate(x)));
        for (i, &v) in vals.iter().enumerate() {
            let expect = C::from_polar(1.0, two_pi * f.evaluate(v));
            assert!((m[(i, i)] - expect).norm() < 1e-12);
        }
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(m[(i, j)].norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn switch_function_shapes() {
        let f = SwitchFunction::descending(-0.5, 0.5).unwrap();
        assert_eq!(f.evaluate(-0.5), 1.0);
        assert_eq!(f.evaluate(0.5), 0.0);
        assert_eq!(f.evaluate(-3.0), 1.0);
        assert_eq!(f.evaluate(3.0), 0.0);
        let mut prev = f64::INFINITY;
        for k in 0..=100 {
            let x = -0.6 + 1.2 * k as f64 / 100.0;
            let v = f.evaluate(x);
            assert!(v <= prev + 1e-15, "not monotone at {x}");
            prev = v;
        }
        // three vanishing derivatives at the ends: finite differences stay tiny
        let h = 1e-3;
        let d_at = |x: f64| (f.evaluate(x + h) - f.evaluate(x - h)) / (2.0 * h);
        assert!(d_at(-0.5).abs() < 1e-6);
        assert!(d_at(0.5).abs() < 1e-6);

        let g = SwitchFunction::odd_sign(0.4).unwrap();
        for k in 0..=40 {
            let x = -0.8 + 1.6 * k as f64 / 40.0;
            assert!((g.evaluate(x) + g.evaluate(-x)).abs() < 1e-14, "odd at {x}");
        }
        assert_eq!(g.evaluate(0.4), 1.0);
        assert_eq!(g.evaluate(-0.4), -1.0);
        assert_eq!(g.evaluate(0.0), 0.0);

        let s = SwitchFunction::step(0.25);
        assert_eq!(s.evaluate(0.25), 1.0);
        assert_eq!(s.evaluate(0.2500001), 0.0);
    }

    #[test]
    fn flat_band_unitary_single_cell() {
        // one cell, H = sigma_1, J = sigma_3: sgn(H) = sigma_1, U = [1]
        let m = models::ssh(1.0, 0.0, 0.0).unwrap();
        let g = FiniteGeometry::open(&[1]).unwrap();
        let h = build(&m.spec, &g, &m.flux, None).unwrap();
        let fb = flat_band_unitary(&h).unwrap();
        assert_eq!(fb.op.matrix.nrows(), 1);
        assert!((fb.op.matrix[(0, 0)] - C::new(1., 0.)).norm() < 1e-12);
        assert!((fb.gap_radius - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_band_unitary_is_cell_shift_in_dimerized_limit() {
        let m = models::ssh(0.0, 1.0, 0.0).unwrap();
        let g = FiniteGeometry::torus(&[8]).unwrap();
        let h = build(&m.spec, &g, &m.flux, None).unwrap();
        let fb = flat_band_unitary(&h).unwrap();
        let u = &fb.op.matrix;
        // unitarity
        let uh = u.t().mapv(|v| v.conj());
        let uu = uh.dot(u);
        for ((i, j), v) in uu.indexed_iter() {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((v - C::new(expect, 0.)).norm() < 1e-10);
        }
        // one-cell shift: |u[x-1, x]| = 1, all else 0
        for x in 0..8usize {
            let tgt = (x + 7) % 8;
            for r in 0..8usize {
                let expect = if r == tgt { 1.0 } else { 0.0 };
                assert!(
                    (u[(r, x)].norm() - expect).abs() < 1e-10,
                    "entry ({r},{x}) = {:?}",
                    u[(r, x)]
                );
            }
        }
    }

    #[test]
    fn flat_band_rejects_broken_grading_and_closed_gap() {
        // grading-breaking on-site term
        let m = models::ssh(1.0, 0.2, 0.0).unwrap();
        let g = FiniteGeometry::torus(&[6]).unwrap();
        let mut h = build(&m.spec, &g, &m.flux, None).unwrap();
        h.matrix[(0, 0)] = C::new(0.3, 0.0); // sigma_3-type defect
        h.matrix[(1, 1)] = C::new(-0.3, 0.0);
        assert!(flat_band_unitary(&h).is_err());
        // gapless point t1 = t2
        let m2 = models::ssh(1.0, 1.0, 0.0).unwrap();
        let h2 = build(&m2.spec, &g, &m2.flux, None).unwrap();
        assert!(flat_band_unitary(&h2).is_err());
    }

    #[test]
    fn boundary_operators_step_limits_are_exact() {
        let m = models::ssh(0.0, 1.0, 0.0).unwrap();
        let g = FiniteGeometry::halfspace(&[], &[], 12).unwrap();
        let h = crate::model::build_halfspace(&m.spec, &g, &m.flux, None, None).unwrap();
        let gap = (-1.0, 1.0);
        let ub = boundary_unitary(&h, None, &SwitchFunction::step(0.0), gap).unwrap();
        assert!(!ub.ill_conditioned);
        for ((i, j), v) in ub.op.matrix.indexed_iter() {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert_eq!(*v, C::new(expect, 0.0));
        }
        let pb = boundary_projection(&h, None, &SwitchFunction::step(0.0), gap).unwrap();
        let pref = reference_projection(&h).unwrap();
        assert_eq!(pb.op.matrix, pref);
    }

    #[test]
    fn boundary_unitary_trivial_when_window_misses_spectrum() {
        let m = models::ssh(0.0, 1.0, 0.0).unwrap();
        let g = FiniteGeometry::halfspace(&[], &[], 10).unwrap();
        let h = crate::model::build_halfspace(&m.spec, &g, &m.flux, None, None).unwrap();
        let dec = decompose(&h).unwrap();
        // window below the entire spectrum: f = 0 on all eigenvalues
        let f = SwitchFunction::descending(-4.0, -3.0).unwrap();
        let ub = boundary_unitary(&h, Some(&dec), &f, (-3.5, 1.0)).unwrap();
        let n = ub.op.matrix.nrows();
        for ((i, j), v) in ub.op.matrix.indexed_iter() {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((v - C::new(expect, 0.)).norm() < 1e-12);
        }
        assert_eq!(n, 20);
        // unitarity of a nontrivial construction
        let f2 = SwitchFunction::descending(-0.5, 0.5).unwrap();
        let ub2 = boundary_unitary(&h, Some(&dec), &f2, (-1.0, 1.0)).unwrap();
        let uh = ub2.op.matrix.t().mapv(|v| v.conj());
        let uu = uh.dot(&ub2.op.matrix);
        for ((i, j), v) in uu.indexed_iter() {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((v - C::new(expect, 0.)).norm() < 1e-10);
        }
        // mismatched window is flagged
        let bad = boundary_unitary(&h, Some(&dec), &f2, (-0.3, 0.3)).unwrap();
        assert!(bad.ill_conditioned);
    }

    #[test]
    fn boundary_projection_laws_and_halfline_decay() {
        let m = models::ssh(0.4, 1.0, 0.0).unwrap();
        let g = FiniteGeometry::halfspace(&[], &[], 24).unwrap();
        let h = crate::model::build_halfspace(&m.spec, &g, &m.flux, None, None).unwrap();
        let dec = decompose(&h).unwrap();
        let bulk_gap = (-0.6, 0.6); // |t2| - |t1| = 0.6
        let f = SwitchFunction::odd_sign(0.3).unwrap();
        let pb = boundary_projection(&h, Some(&dec), &f, bulk_gap).unwrap();
        assert!(!pb.ill_conditioned);
        let p = &pb.op.matrix;
        let pp = p.dot(p);
        let err = (&pp - p).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "not idempotent: {err}");
        // deep in the bulk the conjugation flips the grading, so the
        // Frobenius deviation from P_ref saturates; the per-layer trace is
        // what decays, and its near-edge sum is quantized
        let pref = reference_projection(&h).unwrap();
        let traces = layer_trace_deviations(&pb.op, &pref);
        assert!(traces[0].norm() > 0.1, "edge layer carries no weight");
        assert!(traces[12].norm() < 1e-6, "bulk layer trace did not decay");
        let half_sum: C = traces[..12].iter().sum();
        assert!(
            (half_sum.re.abs() - 1.0).abs() < 1e-6 && half_sum.im.abs() < 1e-9,
            "windowed trace not quantized: {half_sum}"
        );
    }
}
