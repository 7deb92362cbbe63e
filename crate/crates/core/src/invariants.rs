//! Real-space topological invariants.
//!
//! Everything here works on finite matrices tied to a lattice through
//! [`LatticeOperator`]: antisymmetrized position-commutator traces for
//! projections (even dimensions) and unitaries (odd dimensions), their
//! boundary counterparts on half-space samples, and Fredholm indices of
//! Dirac-compressed operators evaluated by a truncated trace formula.
//!
//! All evaluators return an [`InvariantResult`] carrying the raw value,
//! its distance to the nearest integer, the imaginary residue that was
//! discarded when projecting to the real axis, and convergence flags.
//! Nothing is silently rounded: the raw value is the measurement, the
//! nearest integer is a report.

use ndarray::Array2;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::dirac::{dirac_phase, half_space_projection, spinor_dim};
use crate::error::{Error, Result};
use crate::geometry::FiniteGeometry;
use crate::model::FiniteModel;
use crate::scalar::{real, LatticeScalar};
use crate::spectral::{layer_trace_deviations, reference_projection, BoundaryOperator, LatticeOperator};

/// Which trace formula produced a result.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvariantKind {
    EvenChern,
    OddChern,
    BoundaryEvenChern,
    BoundaryOddChern,
    FredholmIndex,
}

impl std::fmt::Display for InvariantKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            InvariantKind::EvenChern => "even_chern",
            InvariantKind::OddChern => "odd_chern",
            InvariantKind::BoundaryEvenChern => "boundary_even_chern",
            InvariantKind::BoundaryOddChern => "boundary_odd_chern",
            InvariantKind::FredholmIndex => "fredholm_index",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for InvariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "even_chern" => InvariantKind::EvenChern,
            "odd_chern" => InvariantKind::OddChern,
            "boundary_even_chern" => InvariantKind::BoundaryEvenChern,
            "boundary_odd_chern" => InvariantKind::BoundaryOddChern,
            "fredholm_index" => InvariantKind::FredholmIndex,
            other => {
                return Err(Error::Config(format!(
                    "unknown invariant '{other}' (even_chern, odd_chern, \
                     boundary_even_chern, boundary_odd_chern, fredholm_index)"
                )))
            }
        })
    }
}

/// Sites over which a bulk trace is averaged. Regions never touch the
/// sample edge; the margin is where truncation artifacts live.
#[derive(Clone, Debug)]
pub struct TraceRegion {
    pub ranks: Vec<usize>,
    pub sides: Vec<usize>,
    pub margin: usize,
    pub descriptor: String,
}

impl TraceRegion {
    /// Central box with the given margin stripped from every axis.
    pub fn central(geometry: &FiniteGeometry, margin: usize) -> Result<Self> {
        if margin == 0 {
            return Err(Error::Invariant(
                "trace region must not touch the sample edge; margin >= 1".into(),
            ));
        }
        for (a, &side) in geometry.sides().iter().enumerate() {
            if side <= 2 * margin {
                return Err(Error::Invariant(format!(
                    "margin {margin} leaves no sites on axis {a} of length {side}"
                )));
            }
        }
        let ranks: Vec<usize> = (0..geometry.site_count())
            .filter(|&r| {
                geometry
                    .coords(r)
                    .iter()
                    .zip(geometry.sides())
                    .all(|(&x, &side)| x >= margin as i64 && x <= (side - 1 - margin) as i64)
            })
            .collect();
        Ok(TraceRegion {
            ranks,
            sides: geometry.sides().to_vec(),
            margin,
            descriptor: format!("central region, margin {margin} of {:?}", geometry.sides()),
        })
    }

    /// Default region: a quarter of the shortest side is stripped.
    pub fn central_default(geometry: &FiniteGeometry) -> Result<Self> {
        let min_side = geometry.sides().iter().copied().min().unwrap_or(0);
        Self::central(geometry, (min_side / 4).max(1))
    }

    fn check_geometry(&self, geometry: &FiniteGeometry) -> Result<()> {
        if self.sides != geometry.sides() {
            return Err(Error::Invariant(
                "trace region was built for a different geometry".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of one invariant evaluation, or an aggregate over realizations.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvariantResult<T> {
    pub kind: InvariantKind,
    /// Dimension of the sample the formula ran on.
    pub dim: usize,
    /// The measured value, projected to the real axis.
    pub raw: T,
    pub nearest: i64,
    /// |raw - nearest|.
    pub deviation: T,
    /// Normalization constant applied to the trace sum.
    pub lambda: Complex<T>,
    /// |Im| discarded when projecting; must stay below 1e-8.
    pub imag_residue: T,
    pub sides: Vec<usize>,
    pub region: String,
    /// Per-site (bulk) or per-layer (boundary) contributions of the last
    /// single evaluation; cleared on aggregation.
    pub site_values: Vec<T>,
    /// Per-realization raw values.
    pub samples: Vec<T>,
    pub mean: T,
    pub std: T,
    pub seeds: Vec<u64>,
    /// Depth-truncation tail for boundary traces.
    pub tail: Option<T>,
    pub unconverged: bool,
    pub family_id: u64,
}

fn nearest_int<T: LatticeScalar>(x: T) -> i64 {
    num_traits::cast::<T, i64>(x.round()).unwrap_or(0)
}

fn single_result<T: LatticeScalar>(
    kind: InvariantKind,
    geometry: &FiniteGeometry,
    region: String,
    lambda: Complex<T>,
    raw_c: Complex<T>,
    site_values: Vec<T>,
    tail: Option<T>,
    extra_unconverged: bool,
    family_id: u64,
) -> InvariantResult<T> {
    let raw = raw_c.re;
    let imag_residue = raw_c.im.abs();
    let nearest = nearest_int(raw);
    let deviation = (raw - real::<T>(nearest as f64)).abs();
    let unconverged =
        extra_unconverged || imag_residue >= real::<T>(1e-8) || !raw.is_finite();
    InvariantResult {
        kind,
        dim: geometry.dim(),
        raw,
        nearest,
        deviation,
        lambda,
        imag_residue,
        sides: geometry.sides().to_vec(),
        region,
        site_values,
        samples: vec![raw],
        mean: raw,
        std: T::zero(),
        seeds: Vec::new(),
        tail,
        unconverged,
        family_id,
    }
}

/// Combine per-realization results of the same kind into one record.
pub fn aggregate<T: LatticeScalar>(
    results: &[InvariantResult<T>],
    seeds: Vec<u64>,
) -> Result<InvariantResult<T>> {
    let first = results
        .first()
        .ok_or_else(|| Error::Invariant("nothing to aggregate".into()))?;
    for r in results {
        if r.kind != first.kind || r.family_id != first.family_id || r.sides != first.sides {
            return Err(Error::Invariant(
                "cannot aggregate results of mixed kind, family or geometry".into(),
            ));
        }
    }
    let samples: Vec<T> = results.iter().map(|r| r.raw).collect();
    let n = real::<T>(samples.len() as f64);
    let mean = samples.iter().copied().sum::<T>() / n;
    let std = if samples.len() > 1 {
        let ss = samples
            .iter()
            .map(|&v| (v - mean) * (v - mean))
            .sum::<T>()
            / real::<T>((samples.len() - 1) as f64);
        ss.sqrt()
    } else {
        T::zero()
    };
    let nearest = nearest_int(mean);
    let deviation = (mean - real::<T>(nearest as f64)).abs();
    let imag_residue = results
        .iter()
        .map(|r| r.imag_residue)
        .fold(T::zero(), T::max);
    let tail = results
        .iter()
        .filter_map(|r| r.tail)
        .fold(None, |acc: Option<T>, t| Some(acc.map_or(t, |a| a.max(t))));
    Ok(InvariantResult {
        kind: first.kind,
        dim: first.dim,
        raw: mean,
        nearest,
        deviation,
        lambda: first.lambda,
        imag_residue,
        sides: first.sides.clone(),
        region: first.region.clone(),
        site_values: Vec::new(),
        samples,
        mean,
        std,
        seeds,
        tail,
        unconverged: results.iter().any(|r| r.unconverged),
        family_id: first.family_id,
    })
}

/// All permutations of 0..k with their signatures.
fn permutations(k: usize) -> Vec<(Vec<usize>, i8)> {
    fn go(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, sign: i8, out: &mut Vec<(Vec<usize>, i8)>) {
        if rest.is_empty() {
            out.push((prefix.clone(), sign));
            return;
        }
        for i in 0..rest.len() {
            let v = rest.remove(i);
            prefix.push(v);
            // pulling from slot i costs i transpositions
            let s = if i % 2 == 0 { sign } else { -sign };
            go(prefix, rest, s, out);
            prefix.pop();
            rest.insert(i, v);
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut (0..k).collect(), 1, &mut out);
    out
}

/// Coordinate differences along one axis, as a table indexed by site rank.
/// On periodic axes the nearest-image difference is used: a raw difference
/// crossing the seam would assign the jump L-1 to a one-step hop and poison
/// every operator whose matrix elements decay slower than exponentially.
struct AxisDelta {
    coords: Vec<i64>,
    side: i64,
    periodic: bool,
}

impl AxisDelta {
    fn new(geometry: &FiniteGeometry, axis: usize) -> Self {
        let coords = (0..geometry.site_count())
            .map(|r| geometry.coords(r)[axis])
            .collect();
        AxisDelta {
            coords,
            side: geometry.sides()[axis] as i64,
            periodic: geometry.is_periodic(axis),
        }
    }

    /// x_a(site i) - x_a(site j), wrapped to (-L/2, L/2] when periodic.
    fn delta<T: LatticeScalar>(&self, si: usize, sj: usize) -> T {
        let mut d = self.coords[si] - self.coords[sj];
        if self.periodic {
            if 2 * d > self.side {
                d -= self.side;
            } else if 2 * d <= -self.side {
                d += self.side;
            }
        }
        real::<T>(d as f64)
    }
}

/// i [X_a, M]: entry (i, j) picks up i (x_i - x_j).
fn position_commutator<T: LatticeScalar>(
    m: &Array2<Complex<T>>,
    geometry: &FiniteGeometry,
    axis: usize,
    nf: usize,
) -> Array2<Complex<T>> {
    let ax = AxisDelta::new(geometry, axis);
    let n = m.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let dx: T = ax.delta(i / nf, j / nf);
            let v = m[(i, j)];
            out[(i, j)] = Complex::new(-v.im * dx, v.re * dx);
        }
    }
    out
}

/// i U^dag [U, X_a], the derivation factor of the odd trace formula.
fn winding_factor<T: LatticeScalar>(
    u: &Array2<Complex<T>>,
    udag: &Array2<Complex<T>>,
    geometry: &FiniteGeometry,
    axis: usize,
    nf: usize,
) -> Array2<Complex<T>> {
    let ax = AxisDelta::new(geometry, axis);
    let n = u.nrows();
    let mut comm = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            // [U, X]_(i,j) = (x_j - x_i) U_(i,j)
            let dx: T = ax.delta(j / nf, i / nf);
            comm[(i, j)] = u[(i, j)] * Complex::new(dx, T::zero());
        }
    }
    let prod = udag.dot(&comm);
    prod.mapv(|v| Complex::new(-v.im, v.re))
}

/// Per-site fiber-block traces of the antisymmetrized product
/// `sum_rho (-1)^rho base . F_rho(1) ... F_rho(k)`, evaluated only on the
/// requested site ranks. The last factor of each permutation is contracted
/// without forming the full product.
fn antisymmetrized_traces<T: LatticeScalar>(
    base: Option<&Array2<Complex<T>>>,
    factors: &[Array2<Complex<T>>],
    ranks: &[usize],
    nf: usize,
) -> Vec<Complex<T>> {
    let k = factors.len();
    let zero = Complex::new(T::zero(), T::zero());
    let mut out = vec![zero; ranks.len()];
    for (perm, sign) in permutations(k) {
        let sgn = Complex::new(real::<T>(sign as f64), T::zero());
        let chain: Vec<&Array2<Complex<T>>> = base
            .into_iter()
            .chain(perm.iter().map(|&a| &factors[a]))
            .collect();
        if chain.len() == 1 {
            for (t, &r) in out.iter_mut().zip(ranks) {
                let mut acc = zero;
                for a in 0..nf {
                    let i = r * nf + a;
                    acc = acc + chain[0][(i, i)];
                }
                *t = *t + acc * sgn;
            }
            continue;
        }
        let last = chain[chain.len() - 1];
        let prefix: Array2<Complex<T>>;
        let prefix_ref: &Array2<Complex<T>> = if chain.len() == 2 {
            chain[0]
        } else {
            let mut p = chain[0].dot(chain[1]);
            for m in &chain[2..chain.len() - 1] {
                p = p.dot(*m);
            }
            prefix = p;
            &prefix
        };
        for (t, &r) in out.iter_mut().zip(ranks) {
            let mut acc = zero;
            for a in 0..nf {
                let i = r * nf + a;
                acc = acc + prefix_ref.row(i).dot(&last.column(i));
            }
            *t = *t + acc * sgn;
        }
    }
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

fn double_factorial(n: usize) -> f64 {
    let mut acc = 1.0;
    let mut v = n as i64;
    while v > 1 {
        acc *= v as f64;
        v -= 2;
    }
    acc
}

/// (2 i pi)^(d/2) / (d/2)! for even d.
pub fn lambda_even<T: LatticeScalar>(d: usize) -> Complex<T> {
    let mut acc = Complex::new(T::one(), T::zero());
    let two_i_pi = Complex::new(T::zero(), real::<T>(2.0 * std::f64::consts::PI));
    for _ in 0..d / 2 {
        acc = acc * two_i_pi;
    }
    acc / Complex::new(real::<T>(factorial(d / 2)), T::zero())
}

/// i (i pi)^((d-1)/2) / d!! for odd d.
pub fn lambda_odd<T: LatticeScalar>(d: usize) -> Complex<T> {
    let mut acc = Complex::new(T::zero(), T::one());
    let i_pi = Complex::new(T::zero(), real::<T>(std::f64::consts::PI));
    for _ in 0..(d - 1) / 2 {
        acc = acc * i_pi;
    }
    acc / Complex::new(real::<T>(double_factorial(d)), T::zero())
}

fn require_bulk_sample(geometry: &FiniteGeometry) -> Result<()> {
    if geometry.is_half_space() {
        return Err(Error::Invariant(
            "bulk trace formula on a half-space sample; use the boundary evaluators".into(),
        ));
    }
    Ok(())
}

/// Even-dimensional bulk invariant of a spectral projection.
///
/// Evaluates `Lambda_d sum_rho (-1)^rho avg_x tr <x| P prod_i i[X_rho(i), P] |x>`
/// over the trace region. Positions are box coordinates; operators built on
/// a periodic sample are admissible because the margin keeps the trace away
/// from the coordinate seam.
pub fn even_chern<T: LatticeScalar>(
    p: &LatticeOperator<T>,
    region: &TraceRegion,
) -> Result<InvariantResult<T>> {
    let geometry = &p.geometry;
    let d = geometry.dim();
    if d % 2 != 0 {
        return Err(Error::Invariant(format!(
            "even trace formula needs an even dimension, got {d}"
        )));
    }
    require_bulk_sample(geometry)?;
    region.check_geometry(geometry)?;
    let nf = p.fiber_dim;
    let factors: Vec<Array2<Complex<T>>> = (0..d)
        .map(|a| position_commutator(&p.matrix, geometry, a, nf))
        .collect();
    let traces = antisymmetrized_traces(Some(&p.matrix), &factors, &region.ranks, nf);
    let lambda = lambda_even::<T>(d);
    finish_bulk(
        InvariantKind::EvenChern,
        geometry,
        region,
        lambda,
        &traces,
        p.family_id,
    )
}

/// Odd-dimensional bulk invariant of a unitary.
///
/// Evaluates `Lambda_d sum_rho (-1)^rho avg_x tr <x| prod_i i U^dag [U, X_rho(i)] |x>`
/// over the trace region.
pub fn odd_chern<T: LatticeScalar>(
    u: &LatticeOperator<T>,
    region: &TraceRegion,
) -> Result<InvariantResult<T>> {
    let geometry = &u.geometry;
    let d = geometry.dim();
    if d % 2 != 1 {
        return Err(Error::Invariant(format!(
            "odd trace formula needs an odd dimension, got {d}"
        )));
    }
    require_bulk_sample(geometry)?;
    region.check_geometry(geometry)?;
    let nf = u.fiber_dim;
    let udag = u.matrix.t().mapv(|v| v.conj());
    let factors: Vec<Array2<Complex<T>>> = (0..d)
        .map(|a| winding_factor(&u.matrix, &udag, geometry, a, nf))
        .collect();
    let traces = antisymmetrized_traces(None, &factors, &region.ranks, nf);
    let lambda = lambda_odd::<T>(d);
    finish_bulk(
        InvariantKind::OddChern,
        geometry,
        region,
        lambda,
        &traces,
        u.family_id,
    )
}

fn finish_bulk<T: LatticeScalar>(
    kind: InvariantKind,
    geometry: &FiniteGeometry,
    region: &TraceRegion,
    lambda: Complex<T>,
    traces: &[Complex<T>],
    family_id: u64,
) -> Result<InvariantResult<T>> {
    let n = real::<T>(traces.len() as f64);
    let mut sum = Complex::new(T::zero(), T::zero());
    let mut site_values = Vec::with_capacity(traces.len());
    for &t in traces {
        let v = lambda * t;
        site_values.push(v.re);
        sum = sum + v;
    }
    let raw_c = sum / Complex::new(n, T::zero());
    Ok(single_result(
        kind,
        geometry,
        region.descriptor.clone(),
        lambda,
        raw_c,
        site_values,
        None,
        false,
        family_id,
    ))
}

/// Gather trace sites of a half-space sample: edge coordinates inside the
/// margin, normal coordinate restricted to the near-edge window
/// `[0, depth/2)`. Returns (ranks, layer index per rank, window).
fn edge_window_sites(
    geometry: &FiniteGeometry,
    edge_margin: usize,
) -> Result<(Vec<usize>, Vec<usize>, usize)> {
    if !geometry.is_half_space() {
        return Err(Error::Invariant(
            "boundary trace formula needs a half-space sample".into(),
        ));
    }
    let d = geometry.dim();
    let depth = geometry.depth();
    let window = depth / 2;
    if window < 5 {
        return Err(Error::Invariant(format!(
            "depth {depth} too shallow: the near-edge window must hold at least 5 layers"
        )));
    }
    if d > 1 {
        if edge_margin == 0 {
            return Err(Error::Invariant(
                "edge trace cells must not touch the sample edge; margin >= 1".into(),
            ));
        }
        for (a, &side) in geometry.sides()[..d - 1].iter().enumerate() {
            if side <= 2 * edge_margin {
                return Err(Error::Invariant(format!(
                    "edge margin {edge_margin} leaves no cells on axis {a} of length {side}"
                )));
            }
        }
    }
    let mut ranks = Vec::new();
    let mut layers = Vec::new();
    for r in 0..geometry.site_count() {
        let x = geometry.coords(r);
        let l = x[d - 1] as usize;
        if l >= window {
            continue;
        }
        let inside = x[..d - 1]
            .iter()
            .zip(&geometry.sides()[..d - 1])
            .all(|(&c, &side)| c >= edge_margin as i64 && c <= (side - 1 - edge_margin) as i64);
        if inside {
            ranks.push(r);
            layers.push(l);
        }
    }
    Ok((ranks, layers, window))
}

fn finish_boundary<T: LatticeScalar>(
    kind: InvariantKind,
    geometry: &FiniteGeometry,
    descriptor: String,
    lambda: Complex<T>,
    layer_values: &[Complex<T>],
    ill_conditioned: bool,
    family_id: u64,
) -> InvariantResult<T> {
    let window = layer_values.len();
    let mut raw_c = Complex::new(T::zero(), T::zero());
    let mut per_layer = Vec::with_capacity(window);
    for &c in layer_values {
        raw_c = raw_c + c;
        per_layer.push(c.re);
    }
    let tail: T = per_layer[window.saturating_sub(4)..]
        .iter()
        .map(|v| v.abs())
        .sum();
    let tail_gate = tail > real::<T>(1e-3) * raw_c.re.abs().max(T::one());
    single_result(
        kind,
        geometry,
        descriptor,
        lambda,
        raw_c,
        per_layer,
        Some(tail),
        ill_conditioned || tail_gate,
        family_id,
    )
}

/// Boundary invariant of the edge unitary on a half-space sample with an
/// even bulk dimension. The edge trace formula runs in the d-1 edge
/// directions; the trace averages over edge cells inside the margin and
/// sums the normal coordinate over the near-edge window, with the window
/// tail reported. A step switch function makes this exactly zero.
pub fn boundary_odd_chern<T: LatticeScalar>(
    bu: &BoundaryOperator<T>,
    edge_margin: usize,
) -> Result<InvariantResult<T>> {
    let geometry = &bu.op.geometry;
    let d = geometry.dim();
    if d % 2 != 0 || d < 2 {
        return Err(Error::Invariant(format!(
            "edge winding needs an even sample dimension >= 2, got {d}"
        )));
    }
    let (ranks, layers, window) = edge_window_sites(geometry, edge_margin)?;
    let nf = bu.op.fiber_dim;
    let udag = bu.op.matrix.t().mapv(|v| v.conj());
    let factors: Vec<Array2<Complex<T>>> = (0..d - 1)
        .map(|a| winding_factor(&bu.op.matrix, &udag, geometry, a, nf))
        .collect();
    let traces = antisymmetrized_traces(None, &factors, &ranks, nf);
    // the near face's outward normal points against the normal axis, so the
    // induced edge orientation carries one sign flip
    let lambda = -lambda_odd::<T>(d - 1);
    let layer_values = collect_layers(&traces, &layers, window, lambda);
    Ok(finish_boundary(
        InvariantKind::BoundaryOddChern,
        geometry,
        format!("edge cells margin {edge_margin}, normal window [0, {window})"),
        lambda,
        &layer_values,
        bu.ill_conditioned,
        bu.op.family_id,
    ))
}

/// Boundary invariant of the conjugated reference projection on a
/// half-space sample with an odd bulk dimension.
///
/// For d = 1 this is the relative trace of the reference projection against
/// its conjugate, summed over the near-edge window. For d = 3 it is the
/// even edge trace formula evaluated the same way.
pub fn boundary_even_chern<T: LatticeScalar>(
    bp: &BoundaryOperator<T>,
    model: &FiniteModel<T>,
    edge_margin: usize,
) -> Result<InvariantResult<T>> {
    let geometry = &bp.op.geometry;
    let d = geometry.dim();
    if d % 2 != 1 {
        return Err(Error::Invariant(format!(
            "edge projection trace needs an odd sample dimension, got {d}"
        )));
    }
    if bp.op.family_id != model.family_id {
        return Err(Error::Invariant(
            "boundary operator and model belong to different families".into(),
        ));
    }
    if d == 1 {
        let depth = geometry.depth();
        let window = depth / 2;
        if window < 5 {
            return Err(Error::Invariant(format!(
                "depth {depth} too shallow: the near-edge window must hold at least 5 layers"
            )));
        }
        let reference = reference_projection(model)?;
        let devs = layer_trace_deviations(&bp.op, &reference);
        let layer_values: Vec<Complex<T>> = devs[..window].to_vec();
        return Ok(finish_boundary(
            InvariantKind::BoundaryEvenChern,
            geometry,
            format!("relative trace, normal window [0, {window})"),
            Complex::new(T::one(), T::zero()),
            &layer_values,
            bp.ill_conditioned,
            bp.op.family_id,
        ));
    }
    let (ranks, layers, window) = edge_window_sites(geometry, edge_margin)?;
    let nf = bp.op.fiber_dim;
    let factors: Vec<Array2<Complex<T>>> = (0..d - 1)
        .map(|a| position_commutator(&bp.op.matrix, geometry, a, nf))
        .collect();
    let traces = antisymmetrized_traces(Some(&bp.op.matrix), &factors, &ranks, nf);
    // same orientation flip as the odd edge formula
    let lambda = -lambda_even::<T>(d - 1);
    let layer_values = collect_layers(&traces, &layers, window, lambda);
    Ok(finish_boundary(
        InvariantKind::BoundaryEvenChern,
        geometry,
        format!("edge cells margin {edge_margin}, normal window [0, {window})"),
        lambda,
        &layer_values,
        bp.ill_conditioned,
        bp.op.family_id,
    ))
}

/// Average per-site traces within each layer, scale by the normalization.
fn collect_layers<T: LatticeScalar>(
    traces: &[Complex<T>],
    layers: &[usize],
    window: usize,
    lambda: Complex<T>,
) -> Vec<Complex<T>> {
    let zero = Complex::new(T::zero(), T::zero());
    let mut sums = vec![zero; window];
    let mut counts = vec![0usize; window];
    for (&t, &l) in traces.iter().zip(layers) {
        sums[l] = sums[l] + t;
        counts[l] += 1;
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| {
            if c == 0 {
                zero
            } else {
                lambda * s / Complex::new(real::<T>(c as f64), T::zero())
            }
        })
        .collect()
}

/// Verdict of a bulk against boundary comparison.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BulkBoundaryReport<T> {
    pub pass: bool,
    pub difference: T,
    pub tolerance: T,
    pub bulk_value: T,
    pub boundary_value: T,
    pub bulk_unconverged: bool,
    pub boundary_unconverged: bool,
}

/// Compare a bulk invariant with its boundary counterpart. The two results
/// must descend from the same model family; a mismatch is an error, a
/// numerical discrepancy is a report.
pub fn check_bulk_boundary<T: LatticeScalar>(
    bulk: &InvariantResult<T>,
    boundary: &InvariantResult<T>,
    tolerance: T,
) -> Result<BulkBoundaryReport<T>> {
    if bulk.family_id != boundary.family_id {
        return Err(Error::Invariant(
            "bulk and boundary results belong to different model families".into(),
        ));
    }
    let bulk_ok = matches!(
        bulk.kind,
        InvariantKind::EvenChern | InvariantKind::OddChern | InvariantKind::FredholmIndex
    );
    let boundary_ok = matches!(
        boundary.kind,
        InvariantKind::BoundaryEvenChern | InvariantKind::BoundaryOddChern
    );
    if !bulk_ok || !boundary_ok {
        return Err(Error::Invariant(
            "expected one bulk result and one boundary result".into(),
        ));
    }
    let difference = (bulk.raw - boundary.raw).abs();
    Ok(BulkBoundaryReport {
        pass: difference <= tolerance && !bulk.unconverged && !boundary.unconverged,
        difference,
        tolerance,
        bulk_value: bulk.raw,
        boundary_value: boundary.raw,
        bulk_unconverged: bulk.unconverged,
        boundary_unconverged: boundary.unconverged,
    })
}

/// Ball of sites around the sample center, offset by x0, split into an
/// outer build zone and an inner trace zone.
struct BallRegion<T> {
    outer: Vec<usize>,
    inner: Vec<bool>,
    positions: Vec<Vec<T>>,
}

fn ball_region<T: LatticeScalar>(
    geometry: &FiniteGeometry,
    x0: &[T],
    radius: T,
    buffer: T,
) -> Result<BallRegion<T>> {
    require_bulk_sample(geometry)?;
    let d = geometry.dim();
    if x0.len() != d {
        return Err(Error::Invariant(format!(
            "offset x0 has {} components, sample has {d}",
            x0.len()
        )));
    }
    for &c in x0 {
        if c <= T::zero() || c >= T::one() {
            return Err(Error::Invariant(
                "offset x0 components must lie strictly inside (0, 1)".into(),
            ));
        }
    }
    if buffer <= T::zero() || radius - buffer < T::one() {
        return Err(Error::Invariant(
            "buffer must be positive and leave a trace ball of radius >= 1".into(),
        ));
    }
    let centers: Vec<i64> = geometry.sides().iter().map(|&s| (s / 2) as i64).collect();
    for (a, (&c, &side)) in centers.iter().zip(geometry.sides()).enumerate() {
        let room = c.min(side as i64 - 1 - c) - 1;
        if radius > real::<T>(room as f64) {
            return Err(Error::Invariant(format!(
                "truncation radius {radius} does not fit inside the sample on axis {a}"
            )));
        }
    }
    let mut outer = Vec::new();
    let mut inner = Vec::new();
    let mut positions = Vec::new();
    for r in 0..geometry.site_count() {
        let x = geometry.coords(r);
        let rv: Vec<T> = x
            .iter()
            .zip(&centers)
            .zip(x0)
            .map(|((&xi, &ci), &oi)| real::<T>((xi - ci) as f64) + oi)
            .collect();
        let norm = rv.iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm <= radius {
            outer.push(r);
            inner.push(norm <= radius - buffer);
            positions.push(rv);
        }
    }
    if !inner.iter().any(|&b| b) {
        return Err(Error::Invariant("trace ball contains no sites".into()));
    }
    Ok(BallRegion {
        outer,
        inner,
        positions,
    })
}

/// M restricted to the outer sites and tensored with the identity on a
/// spinor factor of dimension s. Row layout: (site, fiber, spinor).
fn restrict_tensor<T: LatticeScalar>(
    m: &Array2<Complex<T>>,
    outer: &[usize],
    nf: usize,
    s: usize,
) -> Array2<Complex<T>> {
    let no = outer.len();
    let n = no * nf * s;
    let mut out = Array2::zeros((n, n));
    for (o1, &r1) in outer.iter().enumerate() {
        for (o2, &r2) in outer.iter().enumerate() {
            for a1 in 0..nf {
                for a2 in 0..nf {
                    let v = m[(r1 * nf + a1, r2 * nf + a2)];
                    for al in 0..s {
                        out[((o1 * nf + a1) * s + al, (o2 * nf + a2) * s + al)] = v;
                    }
                }
            }
        }
    }
    out
}

/// Site-diagonal operator acting on the spinor factor only.
fn spinor_blockdiag<T: LatticeScalar>(
    blocks: &[Array2<Complex<T>>],
    nf: usize,
) -> Array2<Complex<T>> {
    let no = blocks.len();
    let s = blocks[0].nrows();
    let n = no * nf * s;
    let mut out = Array2::zeros((n, n));
    for (o, b) in blocks.iter().enumerate() {
        for a in 0..nf {
            for al in 0..s {
                for bl in 0..s {
                    out[((o * nf + a) * s + al, (o * nf + a) * s + bl)] = b[(al, bl)];
                }
            }
        }
    }
    out
}

fn matrix_power<T: LatticeScalar>(m: &Array2<Complex<T>>, n: usize) -> Array2<Complex<T>> {
    let mut acc = m.clone();
    for _ in 1..n {
        acc = acc.dot(m);
    }
    acc
}

fn fedosov_trace<T: LatticeScalar>(
    ap: &Array2<Complex<T>>,
    am: &Array2<Complex<T>>,
    order: usize,
    region: &BallRegion<T>,
    nf: usize,
    s: usize,
) -> (Complex<T>, Vec<T>) {
    let pp = matrix_power(ap, order);
    let pm = matrix_power(am, order);
    let mut total = Complex::new(T::zero(), T::zero());
    let mut site_values = Vec::new();
    for (o, &is_inner) in region.inner.iter().enumerate() {
        if !is_inner {
            continue;
        }
        let mut acc = Complex::new(T::zero(), T::zero());
        for a in 0..nf {
            for al in 0..s {
                let i = (o * nf + a) * s + al;
                acc = acc + pp[(i, i)] - pm[(i, i)];
            }
        }
        site_values.push(acc.re);
        total = total + acc;
    }
    (total, site_values)
}

fn default_order(d: usize, order: usize) -> Result<usize> {
    let n = if order == 0 { d / 2 + 1 } else { order };
    if 2 * n <= d {
        return Err(Error::Invariant(format!(
            "trace order {n} too small: need order > {}/2 for an absolutely convergent trace",
            d
        )));
    }
    Ok(n)
}

/// Fredholm index of the Dirac compression of a gapped projection, even
/// dimensions. Builds `G = P g P` with the position phase g on sites within
/// the truncation radius of the (x0-offset) center, then evaluates
/// `Tr((P - G^dag G)^n - (P - G G^dag)^n)` over the inner trace ball. The
/// buffer between the zones absorbs truncation artifacts. A deviation above
/// 0.1 marks the result unconverged.
pub fn fredholm_index_projection<T: LatticeScalar>(
    p: &LatticeOperator<T>,
    x0: &[T],
    radius: T,
    buffer: T,
    order: usize,
) -> Result<InvariantResult<T>> {
    let geometry = &p.geometry;
    let d = geometry.dim();
    if d % 2 != 0 {
        return Err(Error::Invariant(format!(
            "projection index needs an even dimension, got {d}"
        )));
    }
    let n = default_order(d, order)?;
    let s = spinor_dim(d)?;
    let region = ball_region(geometry, x0, radius, buffer)?;
    let nf = p.fiber_dim;
    let phat = restrict_tensor(&p.matrix, &region.outer, nf, s);
    let phases: Vec<Array2<Complex<T>>> = region
        .positions
        .iter()
        .map(|rv| dirac_phase(d, rv))
        .collect::<Result<_>>()?;
    let ghat = spinor_blockdiag(&phases, nf);
    let g = phat.dot(&ghat).dot(&phat);
    let gdag = g.t().mapv(|v| v.conj());
    let ap = &phat - &gdag.dot(&g);
    let am = &phat - &g.dot(&gdag);
    let (raw_c, site_values) = fedosov_trace(&ap, &am, n, &region, nf, s);
    let mut result = single_result(
        InvariantKind::FredholmIndex,
        geometry,
        ball_descriptor(radius, buffer, x0),
        Complex::new(T::one(), T::zero()),
        raw_c,
        site_values,
        None,
        false,
        p.family_id,
    );
    if result.deviation > real::<T>(0.1) {
        result.unconverged = true;
    }
    Ok(result)
}

/// Fredholm index of the half-space compression of a gapped unitary, odd
/// dimensions. Builds `F = E U E` with the position half-space projection E,
/// then evaluates `Tr((E - F^dag F)^n - (E - F F^dag)^n)` over the inner
/// trace ball.
pub fn fredholm_index_unitary<T: LatticeScalar>(
    u: &LatticeOperator<T>,
    x0: &[T],
    radius: T,
    buffer: T,
    order: usize,
) -> Result<InvariantResult<T>> {
    let geometry = &u.geometry;
    let d = geometry.dim();
    if d % 2 != 1 {
        return Err(Error::Invariant(format!(
            "unitary index needs an odd dimension, got {d}"
        )));
    }
    let n = default_order(d, order)?;
    let s = spinor_dim(d)?;
    let region = ball_region(geometry, x0, radius, buffer)?;
    let nf = u.fiber_dim;
    let uhat = restrict_tensor(&u.matrix, &region.outer, nf, s);
    let projs: Vec<Array2<Complex<T>>> = region
        .positions
        .iter()
        .map(|rv| half_space_projection(d, rv))
        .collect::<Result<_>>()?;
    let ehat = spinor_blockdiag(&projs, nf);
    let f = ehat.dot(&uhat).dot(&ehat);
    let fdag = f.t().mapv(|v| v.conj());
    let ap = &ehat - &fdag.dot(&f);
    let am = &ehat - &f.dot(&fdag);
    let (raw_c, site_values) = fedosov_trace(&ap, &am, n, &region, nf, s);
    let mut result = single_result(
        InvariantKind::FredholmIndex,
        geometry,
        ball_descriptor(radius, buffer, x0),
        Complex::new(T::one(), T::zero()),
        raw_c,
        site_values,
        None,
        false,
        u.family_id,
    );
    if result.deviation > real::<T>(0.1) {
        result.unconverged = true;
    }
    Ok(result)
}

fn ball_descriptor<T: LatticeScalar>(radius: T, buffer: T, x0: &[T]) -> String {
    let coords: Vec<String> = x0.iter().map(|c| format!("{c:.4}")).collect();
    format!(
        "dirac ball radius {radius}, trace radius {}, x0 ({})",
        radius - buffer,
        coords.join(", ")
    )
}
