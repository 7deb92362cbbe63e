//! Independent reference calculations for validating the real-space
//! invariants.
//!
//! Everything here takes a deliberately different route from the invariant
//! formulas: band Chern numbers come from plaquette link products over a
//! momentum or twist grid, odd invariants from explicit Bloch-symbol
//! winding integrals, and localization lengths from transfer-matrix
//! products. Agreement between these and the position-space formulas is
//! what the test suite certifies. Concrete `f64` throughout; these are
//! correctness anchors, not performance-critical paths.

use ndarray::{s, Array2};
use ndarray_linalg::Determinant;
use num_complex::Complex64 as C64;

use crate::disorder::DisorderField;
use crate::error::{Error, Result};
use crate::flux::MagneticFlux;
use crate::geometry::FiniteGeometry;
use crate::hopping::HoppingSpec;
use crate::scalar::LatticeScalar;

/// Bloch matrix of a translation-invariant spec at momentum `k`:
/// `A_0 + sum_y (A_y e^{-i k.y} + A_y^dag e^{+i k.y})`, matching the
/// position-space convention that stored hop blocks sit at column `x`,
/// row `x + y`.
pub fn bloch_hamiltonian(spec: &HoppingSpec<f64>, k: &[f64]) -> Array2<C64> {
    let nf = spec.fiber_dim();
    let mut h = Array2::<C64>::zeros((nf, nf));
    for hop in spec.hops() {
        let phase: f64 = hop
            .displacement
            .iter()
            .zip(k)
            .map(|(&y, &kk)| kk * y as f64)
            .sum();
        let w = C64::from_polar(1.0, -phase);
        let onsite = hop.displacement.iter().all(|&y| y == 0);
        for a in 0..nf {
            for b in 0..nf {
                let v = hop.constant[(a, b)] * w;
                h[(a, b)] += v;
                if !onsite {
                    h[(b, a)] += v.conj();
                }
            }
        }
    }
    h
}

/// Eigenbasis of a fiber grading, split into plus and minus columns.
struct GradingBasis {
    vectors: Array2<C64>,
    plus: Vec<usize>,
    minus: Vec<usize>,
}

fn grading_basis(j: &Array2<C64>) -> Result<GradingBasis> {
    let nf = j.nrows();
    let (jvals, vectors) = f64::eigh(j)?;
    let plus: Vec<usize> = (0..nf).filter(|&m| jvals[m] > 0.0).collect();
    let minus: Vec<usize> = (0..nf).filter(|&m| jvals[m] < 0.0).collect();
    if plus.len() != minus.len() {
        return Err(Error::Invariant("unbalanced grading".into()));
    }
    Ok(GradingBasis {
        vectors,
        plus,
        minus,
    })
}

/// Off-diagonal block of `sgn(h)` in the grading eigenbasis (minus row
/// sector, plus column sector): the Bloch symbol of the flat-band unitary.
fn flat_band_symbol(h: &Array2<C64>, basis: &GradingBasis) -> Result<Array2<C64>> {
    let nf = h.nrows();
    let (vals, vecs) = f64::eigh(h)?;
    if vals.iter().any(|v| v.abs() < 1e-10) {
        return Err(Error::Invariant("Bloch symbol gapless at this k".into()));
    }
    let mut sgn = Array2::<C64>::zeros((nf, nf));
    for a in 0..nf {
        for b in 0..nf {
            let mut acc = C64::new(0.0, 0.0);
            for m in 0..nf {
                acc += vecs[(a, m)] * vals[m].signum() * vecs[(b, m)].conj();
            }
            sgn[(a, b)] = acc;
        }
    }
    let half = nf / 2;
    let jv = &basis.vectors;
    let mut u = Array2::<C64>::zeros((half, half));
    for (r, &m) in basis.minus.iter().enumerate() {
        for (c, &p) in basis.plus.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..nf {
                for b in 0..nf {
                    acc += jv[(a, m)].conj() * sgn[(a, b)] * jv[(b, p)];
                }
            }
            u[(r, c)] = acc;
        }
    }
    Ok(u)
}

/// Winding number of `det u_fb(k)` around the 1D Brillouin zone, summed
/// from unwrapped phase increments over `grid` points.
pub fn momentum_winding_1d(spec: &HoppingSpec<f64>, grid: usize) -> Result<f64> {
    if spec.dim() != 1 {
        return Err(Error::Invariant("1D winding needs a 1D spec".into()));
    }
    if grid < 8 {
        return Err(Error::Invariant("winding grid too coarse".into()));
    }
    let j = spec
        .chiral()
        .ok_or_else(|| Error::Invariant("winding needs a chiral grading".into()))?;
    let basis = grading_basis(j)?;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    let mut first = 0.0;
    for n in 0..grid {
        let k = two_pi * n as f64 / grid as f64;
        let u = flat_band_symbol(&bloch_hamiltonian(spec, &[k]), &basis)?;
        let det = u.det().map_err(|e| Error::Backend(format!("det: {e}")))?;
        let arg = det.arg();
        if let Some(p) = prev {
            let mut d = arg - p;
            while d > std::f64::consts::PI {
                d -= two_pi;
            }
            while d <= -std::f64::consts::PI {
                d += two_pi;
            }
            total += d;
        } else {
            first = arg;
        }
        prev = Some(arg);
    }
    // close the loop back to k = 0
    let mut d = first - prev.unwrap();
    while d > std::f64::consts::PI {
        d -= two_pi;
    }
    while d <= -std::f64::consts::PI {
        d += two_pi;
    }
    total += d;
    Ok(total / two_pi)
}

/// Degree of the flat-band symbol map `k -> u_fb(k)` over the 3D Brillouin
/// zone: `(1/24 pi^2) int eps^{jkl} tr(a_j a_k a_l)` with
/// `a_j = u^dag du/dk_j` from central differences on a `grid^3` mesh.
pub fn momentum_winding_3d(spec: &HoppingSpec<f64>, grid: usize) -> Result<f64> {
    if spec.dim() != 3 {
        return Err(Error::Invariant("3D winding needs a 3D spec".into()));
    }
    let j = spec
        .chiral()
        .ok_or_else(|| Error::Invariant("winding needs a chiral grading".into()))?;
    let basis = grading_basis(j)?;
    let half = spec.fiber_dim() / 2;
    let two_pi = 2.0 * std::f64::consts::PI;
    let dk = two_pi / grid as f64;
    let at = |i: usize, jj: usize, l: usize| (i * grid + jj) * grid + l;
    let mut symbols: Vec<Array2<C64>> = Vec::with_capacity(grid * grid * grid);
    for i in 0..grid {
        for jj in 0..grid {
            for l in 0..grid {
                let k = [dk * i as f64, dk * jj as f64, dk * l as f64];
                symbols.push(flat_band_symbol(&bloch_hamiltonian(spec, &k), &basis)?);
            }
        }
    }
    let mut integral = C64::new(0.0, 0.0);
    let perms: [([usize; 3], f64); 6] = [
        ([0, 1, 2], 1.0),
        ([1, 2, 0], 1.0),
        ([2, 0, 1], 1.0),
        ([0, 2, 1], -1.0),
        ([2, 1, 0], -1.0),
        ([1, 0, 2], -1.0),
    ];
    for i in 0..grid {
        for jj in 0..grid {
            for l in 0..grid {
                let u = &symbols[at(i, jj, l)];
                let uh = u.t().mapv(|v| v.conj());
                let step = |axis: usize, dir: i64| -> &Array2<C64> {
                    let mut idx = [i as i64, jj as i64, l as i64];
                    idx[axis] = (idx[axis] + dir).rem_euclid(grid as i64);
                    &symbols[at(idx[0] as usize, idx[1] as usize, idx[2] as usize)]
                };
                let mut a = Vec::with_capacity(3);
                for axis in 0..3 {
                    let diff = (step(axis, 1) - step(axis, -1)).mapv(|v| v / (2.0 * dk));
                    a.push(uh.dot(&diff));
                }
                for (p, sign) in &perms {
                    let m = a[p[0]].dot(&a[p[1]]).dot(&a[p[2]]);
                    let tr: C64 = (0..half).map(|q| m[(q, q)]).sum();
                    integral += tr * *sign;
                }
            }
        }
    }
    integral *= dk * dk * dk;
    // the antisymmetrized trace of three u^dag du factors is real
    let w = integral / (24.0 * std::f64::consts::PI.powi(2));
    if w.im.abs() > 1e-6 * (1.0 + w.re.abs()) {
        return Err(Error::Invariant(format!(
            "3D winding integral not real: {w}"
        )));
    }
    Ok(w.re)
}

/// Plaquette-link Chern number over a periodic `g x g` grid of frames.
/// `frames[i * g + j]` holds the occupied-space frame at grid node (i, j).
fn grid_chern(frames: &[Array2<C64>], g: usize) -> Result<f64> {
    let link = |a: &Array2<C64>, b: &Array2<C64>| -> Result<C64> {
        let overlap = a.t().mapv(|v: C64| v.conj()).dot(b);
        let det = overlap
            .det()
            .map_err(|e| Error::Backend(format!("det: {e}")))?;
        if det.norm() < 1e-2 {
            return Err(Error::Invariant(
                "near-singular link; grid too coarse or gap closing".into(),
            ));
        }
        Ok(det / det.norm())
    };
    let mut total = 0.0;
    for i in 0..g {
        for j in 0..g {
            let here = &frames[i * g + j];
            let right = &frames[((i + 1) % g) * g + j];
            let up = &frames[i * g + (j + 1) % g];
            let diag = &frames[((i + 1) % g) * g + (j + 1) % g];
            let u1 = link(here, right)?;
            let u2 = link(right, diag)?;
            let u3 = link(up, diag)?;
            let u4 = link(here, up)?;
            // links are unit modulus, so inverse = conjugate
            total += (u1 * u2 * u3.conj() * u4.conj()).arg();
        }
    }
    Ok(total / (2.0 * std::f64::consts::PI))
}

fn occupied_frame(h: &Array2<C64>, mu: f64) -> Result<(Array2<C64>, usize)> {
    let (vals, vecs) = f64::eigh(h)?;
    let n_occ = vals.iter().filter(|&&v| v < mu).count();
    if n_occ == 0 || n_occ == vals.len() {
        return Err(Error::Invariant(
            "Fermi level outside the spectrum; no band to integrate".into(),
        ));
    }
    if vals[n_occ] - vals[n_occ - 1] < 1e-10 {
        return Err(Error::Invariant("gap closed at a grid node".into()));
    }
    Ok((vecs.slice(s![.., 0..n_occ]).to_owned(), n_occ))
}

/// Band Chern number of a flux-free 2D spec below `mu`, from plaquette
/// links of occupied Bloch frames on a `grid x grid` momentum mesh.
pub fn momentum_chern(spec: &HoppingSpec<f64>, mu: f64, grid: usize) -> Result<f64> {
    if spec.dim() != 2 {
        return Err(Error::Invariant("momentum Chern needs a 2D spec".into()));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut frames = Vec::with_capacity(grid * grid);
    let mut occ = None;
    for i in 0..grid {
        for j in 0..grid {
            let k = [two_pi * i as f64 / grid as f64, two_pi * j as f64 / grid as f64];
            let (f, n) = occupied_frame(&bloch_hamiltonian(spec, &k), mu)?;
            if *occ.get_or_insert(n) != n {
                return Err(Error::Invariant("occupied count varies over BZ".into()));
            }
            frames.push(f);
        }
    }
    grid_chern(&frames, grid)
}

/// Hand-built two-band reference: `sin k1 s1 + sin k2 s2 +
/// (m + cos k1 + cos k2) s3`, bypassing the spec machinery entirely.
pub fn two_band_reference_chern(m: f64, mu: f64, grid: usize) -> Result<f64> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut frames = Vec::with_capacity(grid * grid);
    for i in 0..grid {
        for j in 0..grid {
            let (k1, k2) = (two_pi * i as f64 / grid as f64, two_pi * j as f64 / grid as f64);
            let d = [k1.sin(), k2.sin(), m + k1.cos() + k2.cos()];
            let h = ndarray::array![
                [C64::new(d[2], 0.0), C64::new(d[0], -d[1])],
                [C64::new(d[0], d[1]), C64::new(-d[2], 0.0)]
            ];
            let (f, _) = occupied_frame(&h, mu)?;
            frames.push(f);
        }
    }
    grid_chern(&frames, grid)
}

/// Finite torus Hamiltonian with twisted boundary conditions: every hop
/// that wraps axis `a` (n_a times, signed) picks up `e^{i theta_a n_a}` on
/// top of its magnetic phase. Exactly 2 pi periodic in each twist.
pub fn twisted_hamiltonian(
    spec: &HoppingSpec<f64>,
    geometry: &FiniteGeometry,
    flux: &MagneticFlux<f64>,
    theta: &[f64],
) -> Result<Array2<C64>> {
    let d = geometry.dim();
    if spec.dim() != d || theta.len() != d {
        return Err(Error::Geometry("twist dimension mismatch".into()));
    }
    if !(0..d).all(|a| geometry.is_periodic(a)) {
        return Err(Error::Geometry("twists need a full torus".into()));
    }
    flux.check_commensurate(geometry)?;
    let nf = spec.fiber_dim();
    let n = geometry.site_count() * nf;
    let mut h = Array2::<C64>::zeros((n, n));
    let sides = geometry.sides();
    for (r1, x) in geometry.sites().enumerate() {
        for hop in spec.hops() {
            let onsite = hop.displacement.iter().all(|&y| y == 0);
            let Some(wrapped) = geometry.translate(&x, &hop.displacement) else {
                continue;
            };
            let r2 = geometry.rank(&wrapped);
            let mut twist = 0.0;
            for a in 0..d {
                let raw = x[a] + hop.displacement[a];
                let wraps = (raw - wrapped[a]) / sides[a] as i64;
                twist += theta[a] * wraps as f64;
            }
            let phase = flux.hop_phase(&x, &hop.displacement) * C64::from_polar(1.0, twist);
            for a in 0..nf {
                for b in 0..nf {
                    let v = hop.constant[(a, b)] * phase;
                    h[(r2 * nf + a, r1 * nf + b)] += v;
                    if !onsite {
                        h[(r1 * nf + b, r2 * nf + a)] += v.conj();
                    }
                }
            }
        }
    }
    Ok(h)
}

/// Chern number from plaquette links of the filled-subspace frames over a
/// periodic `grid x grid` mesh of boundary twists. For a gapped finite
/// torus this equals the band Chern number below `mu`, independent of the
/// lattice size.
pub fn twist_chern(
    spec: &HoppingSpec<f64>,
    geometry: &FiniteGeometry,
    flux: &MagneticFlux<f64>,
    mu: f64,
    grid: usize,
) -> Result<f64> {
    if geometry.dim() != 2 {
        return Err(Error::Invariant("twist Chern needs a 2D torus".into()));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut frames = Vec::with_capacity(grid * grid);
    let mut occ = None;
    for i in 0..grid {
        for j in 0..grid {
            let theta = [two_pi * i as f64 / grid as f64, two_pi * j as f64 / grid as f64];
            let h = twisted_hamiltonian(spec, geometry, flux, &theta)?;
            let (f, n) = occupied_frame(&h, mu)?;
            if *occ.get_or_insert(n) != n {
                return Err(Error::Invariant(
                    "occupied count varies over the twist torus".into(),
                ));
            }
            frames.push(f);
        }
    }
    grid_chern(&frames, grid)
}

/// Lyapunov exponent of the 1D nearest-neighbor chain with i.i.d. uniform
/// on-site disorder of strength `w`, at energy `e`: the growth rate of
/// transfer-matrix products `T_x = [[e - V_x, -1], [1, 0]]`. Positive for
/// any `w > 0`; its inverse is the localization length.
pub fn lyapunov_1d(e: f64, w: f64, seed: u64, steps: u64) -> f64 {
    let field = DisorderField::new(seed);
    let mut v = (1.0f64, 0.0f64);
    let mut log_norm = 0.0;
    for x in 0..steps {
        let pot: f64 = w * field.sample::<f64>(&[x as i64]);
        let next = ((e - pot) * v.0 - v.1, v.0);
        v = next;
        if x % 16 == 15 {
            let n = (v.0 * v.0 + v.1 * v.1).sqrt();
            log_norm += n.ln();
            v = (v.0 / n, v.1 / n);
        }
    }
    let n = (v.0 * v.0 + v.1 * v.1).sqrt();
    log_norm += n.ln();
    log_norm / steps as f64
}
