//! Sweep orchestration: configuration, Monte Carlo disorder averaging,
//! convergence studies, sign calibration and CSV persistence.
//!
//! A sweep walks a parameter grid, evaluates the requested invariants at
//! each (point, size) with a deterministic seed schedule, and emits one
//! flagged row per combination. Evaluation failures at a point (a closed
//! gap, a Fermi level on an eigenvalue) flag the row and the sweep keeps
//! going; only configuration and I/O problems abort. Disorder replicas
//! run on the rayon pool; aggregation is fixed-order, so output is
//! reproducible bit for bit at any thread count.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::disorder::sample_disorder;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryCondition, FiniteGeometry};
use crate::invariants::{
    aggregate, even_chern, fredholm_index_projection, fredholm_index_unitary, odd_chern,
    boundary_even_chern, boundary_odd_chern, InvariantKind, InvariantResult, TraceRegion,
};
use crate::localization::{
    classify_energy, fit_decay, resolvent_moments, spectrum_bounds, DecayFit, Localization,
    MomentProfile, DEFAULT_RATE_THRESHOLD,
};
use crate::model::{build, build_halfspace};
use crate::models::{by_name, BuiltinModel};
use crate::scalar::{real, LatticeScalar};
use crate::spectral::{
    boundary_projection, boundary_unitary, decompose, flat_band_unitary, LatticeOperator,
    SwitchFunction,
};

/// Spacing of the per-point seed blocks: replicas never collide across
/// grid points, so extending a sweep leaves earlier points untouched.
pub const SEED_STRIDE: u64 = 1_000_000;

/// Seeds for one sweep point.
pub fn seed_schedule(base_seed: u64, point_index: usize, replicas: usize) -> Vec<u64> {
    (0..replicas as u64)
        .map(|r| base_seed + point_index as u64 * SEED_STRIDE + r)
        .collect()
}

/// Model referenced by a config: a builtin by name or a JSON spec file.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: serde::de::DeserializeOwned"))]
pub struct ModelSection<T> {
    #[serde(default)]
    pub builtin: Option<String>,
    #[serde(default)]
    pub params: Vec<T>,
    #[serde(default)]
    pub file: Option<PathBuf>,
}

/// What to sweep and where to evaluate.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: serde::de::DeserializeOwned"))]
pub struct SweepSection<T> {
    /// `"param:<k>"` rewrites slot `k` of the builtin parameters,
    /// `"disorder"` rewrites the disorder amplitude. Absent means a
    /// single point at the model as given.
    #[serde(default)]
    pub parameter: Option<String>,
    #[serde(default)]
    pub grid: Vec<T>,
    pub sizes: Vec<usize>,
    pub seeds: usize,
    pub invariants: Vec<InvariantKind>,
}

/// Optional evaluation overrides; anything unset falls back to
/// size-derived defaults.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: serde::de::DeserializeOwned"))]
pub struct EvalSection<T> {
    /// Trace-region margin for bulk formulas (default L/4).
    #[serde(default)]
    pub margin: Option<usize>,
    /// Slab depth for boundary formulas (default max(10, L/2)).
    #[serde(default)]
    pub depth: Option<usize>,
    /// Edge margin for boundary trace windows (default L/4).
    #[serde(default)]
    pub edge_margin: Option<usize>,
    /// Dirac-ball radius for index evaluation (default L/2 - 2).
    #[serde(default)]
    pub index_radius: Option<T>,
    /// Inner-trace buffer (default max(2.5, radius/4)).
    #[serde(default)]
    pub index_buffer: Option<T>,
    /// Ball center offset inside the unit cell (default 0.5 everywhere).
    #[serde(default)]
    pub x0: Option<Vec<T>>,
    /// Fedosov truncation order; 0 picks floor(d/2) + 1.
    #[serde(default)]
    pub order: Option<usize>,
    /// Fermi level override; default is the model's own.
    #[serde(default)]
    pub fermi_level: Option<T>,
    /// Switch transition window for boundary unitaries.
    #[serde(default)]
    pub switch_window: Option<(T, T)>,
    /// Odd-switch halfwidth for boundary projections.
    #[serde(default)]
    pub switch_halfwidth: Option<T>,
    /// Probe energy for localization runs, as [re, im].
    #[serde(default)]
    pub energy: Option<(T, T)>,
    /// Fractional moment exponent (default 1/2).
    #[serde(default)]
    pub moment_exponent: Option<T>,
    /// Distance window for decay fits (default size-derived).
    #[serde(default)]
    pub fit_window: Option<(usize, usize)>,
    /// Localization rate threshold (default 0.05).
    #[serde(default)]
    pub threshold: Option<T>,
}

impl<T> Default for EvalSection<T> {
    fn default() -> Self {
        Self {
            margin: None,
            depth: None,
            edge_margin: None,
            index_radius: None,
            index_buffer: None,
            x0: None,
            order: None,
            fermi_level: None,
            switch_window: None,
            switch_halfwidth: None,
            energy: None,
            moment_exponent: None,
            fit_window: None,
            threshold: None,
        }
    }
}

/// Full sweep configuration, deserialized from TOML.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: serde::de::DeserializeOwned"))]
pub struct SweepConfig<T> {
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub model: ModelSection<T>,
    pub sweep: SweepSection<T>,
    #[serde(default)]
    pub evaluation: EvalSection<T>,
}

/// Resolve a model section to a concrete model: a builtin by name or a
/// validated JSON spec file.
pub fn load_model_section<T: LatticeScalar>(section: &ModelSection<T>) -> Result<BuiltinModel<T>> {
    match (&section.builtin, &section.file) {
        (Some(name), None) => by_name(name, &section.params),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)?;
            let model: BuiltinModel<T> = serde_json::from_str(&text)
                .map_err(|e| Error::Parse(format!("model file {}: {e}", path.display())))?;
            model.spec.validate()?;
            Ok(model)
        }
        _ => Err(Error::Config(
            "model section needs exactly one of 'builtin' or 'file'".into(),
        )),
    }
}

/// Swept parameter, parsed from the config string.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweptParameter {
    /// Positional builtin parameter slot.
    Slot(usize),
    /// Global disorder amplitude.
    Disorder,
}

pub fn parse_parameter(text: &str) -> Result<SweptParameter> {
    if text == "disorder" {
        return Ok(SweptParameter::Disorder);
    }
    if let Some(k) = text.strip_prefix("param:") {
        let k: usize = k
            .parse()
            .map_err(|_| Error::Config(format!("bad parameter slot in '{text}'")))?;
        return Ok(SweptParameter::Slot(k));
    }
    Err(Error::Config(format!(
        "unknown swept parameter '{text}' (use 'param:<k>' or 'disorder')"
    )))
}

impl<T: LatticeScalar> SweepConfig<T> {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Load the referenced model, validating file-based specs.
    pub fn load_model(&self) -> Result<BuiltinModel<T>> {
        load_model_section(&self.model)
    }

    /// Structural checks: grid shape, seed count, invariant parity.
    pub fn validate(&self) -> Result<BuiltinModel<T>> {
        let model = self.load_model()?;
        let d = model.spec.dim();
        if self.sweep.seeds == 0 {
            return Err(Error::Config("seeds per point must be at least 1".into()));
        }
        if self.sweep.sizes.is_empty() {
            return Err(Error::Config("sizes list must not be empty".into()));
        }
        if self.sweep.invariants.is_empty() {
            return Err(Error::Config("no invariants requested".into()));
        }
        match &self.sweep.parameter {
            Some(p) => {
                let param = parse_parameter(p)?;
                if let SweptParameter::Slot(k) = param {
                    if self.model.builtin.is_none() {
                        return Err(Error::Config(
                            "parameter slots only apply to builtin models".into(),
                        ));
                    }
                    if k >= self.model.params.len() {
                        return Err(Error::Config(format!(
                            "parameter slot {k} outside the {} given params",
                            self.model.params.len()
                        )));
                    }
                }
                if self.sweep.grid.is_empty() {
                    return Err(Error::Config("swept grid must not be empty".into()));
                }
                let mut direction = T::zero();
                for w in self.sweep.grid.windows(2) {
                    let step = w[1] - w[0];
                    if step == T::zero() {
                        return Err(Error::Config("grid values must be distinct".into()));
                    }
                    if direction == T::zero() {
                        direction = step;
                    } else if (step > T::zero()) != (direction > T::zero()) {
                        return Err(Error::Config("grid must be strictly monotone".into()));
                    }
                }
            }
            None => {
                if !self.sweep.grid.is_empty() {
                    return Err(Error::Config(
                        "a grid needs a swept parameter; drop the grid for a single point"
                            .into(),
                    ));
                }
            }
        }
        for &kind in &self.sweep.invariants {
            let ok = match kind {
                InvariantKind::EvenChern => d % 2 == 0,
                InvariantKind::OddChern => d % 2 == 1,
                InvariantKind::BoundaryOddChern => d % 2 == 0 && d >= 2,
                InvariantKind::BoundaryEvenChern => d % 2 == 1,
                InvariantKind::FredholmIndex => true,
            };
            if !ok {
                return Err(Error::Config(format!(
                    "invariant {kind} is incompatible with dimension {d}"
                )));
            }
        }
        Ok(model)
    }

    /// Model at one grid value.
    pub fn realize(&self, base: &BuiltinModel<T>, value: Option<T>) -> Result<BuiltinModel<T>> {
        let (Some(value), Some(ptext)) = (value, &self.sweep.parameter) else {
            return Ok(base.clone());
        };
        match parse_parameter(ptext)? {
            SweptParameter::Slot(k) => {
                let mut params = self.model.params.clone();
                params[k] = value;
                by_name(self.model.builtin.as_ref().unwrap(), &params)
            }
            SweptParameter::Disorder => {
                let mut model = base.clone();
                model.spec.amplitude = value;
                model.name = format!("{}[w={value}]", model.name);
                Ok(model)
            }
        }
    }
}

/// Concrete evaluation parameters for one (model, size) combination.
#[derive(Clone, Debug)]
pub struct ResolvedEval<T> {
    pub mu: T,
    pub margin: usize,
    pub depth: usize,
    pub edge_margin: usize,
    pub radius: T,
    pub buffer: T,
    pub x0: Vec<T>,
    pub order: usize,
    pub switch_window: (T, T),
    pub switch_halfwidth: T,
    pub bulk_gap: (T, T),
}

/// Spectral gap of the clean model around `mu`, measured on the smallest
/// flux-commensurate torus. `None` when the finite sample shows no gap.
pub fn clean_bulk_gap<T: LatticeScalar>(
    model: &BuiltinModel<T>,
    mu: T,
) -> Result<Option<(T, T)>> {
    let d = model.spec.dim();
    for side in 4..=16 {
        let geometry = FiniteGeometry::torus(&vec![side; d])?;
        if model.flux.check_commensurate(&geometry).is_err() {
            continue;
        }
        let h = build(&model.spec, &geometry, &model.flux, None)?;
        let dec = decompose(&h)?;
        return Ok(dec.gap_containing(mu));
    }
    Err(Error::Config(
        "no flux-commensurate torus side up to 16 for the gap estimate".into(),
    ))
}

/// Fill in size-derived defaults. The switch window defaults to the
/// middle half of the clean bulk gap on each side of the Fermi level;
/// the gap estimate is skipped unless a boundary invariant asks for it.
pub fn resolve_eval<T: LatticeScalar>(
    model: &BuiltinModel<T>,
    eval: &EvalSection<T>,
    size: usize,
    needs_boundary: bool,
) -> Result<ResolvedEval<T>> {
    let d = model.spec.dim();
    let mu = eval.fermi_level.unwrap_or(model.fermi_level);
    let radius = eval
        .index_radius
        .unwrap_or_else(|| real(size as f64 / 2.0 - 2.0));
    let quarter = radius / real::<T>(4.0);
    let buffer = eval.index_buffer.unwrap_or(real::<T>(2.5).max(quarter));
    let (switch_window, switch_halfwidth, bulk_gap) = if needs_boundary {
        let gap = clean_bulk_gap(model, mu)?;
        let fallback = (mu - real::<T>(0.5), mu + real::<T>(0.5));
        let gap_or = gap.unwrap_or(fallback);
        let half = real::<T>(0.5);
        let window = eval
            .switch_window
            .unwrap_or((mu - half * (mu - gap_or.0), mu + half * (gap_or.1 - mu)));
        let halfwidth = eval
            .switch_halfwidth
            .unwrap_or_else(|| half * (mu - gap_or.0).min(gap_or.1 - mu).abs());
        (window, halfwidth, gap_or)
    } else {
        let unit = (T::zero(), T::one());
        (unit, T::one(), (T::zero(), T::one()))
    };
    Ok(ResolvedEval {
        mu,
        margin: eval.margin.unwrap_or((size / 4).max(1)),
        depth: eval.depth.unwrap_or((size / 2).max(10)),
        edge_margin: eval.edge_margin.unwrap_or((size / 4).max(1)),
        radius,
        buffer,
        x0: eval.x0.clone().unwrap_or_else(|| vec![real(0.5); d]),
        order: eval.order.unwrap_or(0),
        switch_window,
        switch_halfwidth,
        bulk_gap,
    })
}

fn projection_operator<T: LatticeScalar>(
    model: &BuiltinModel<T>,
    geometry: &FiniteGeometry,
    disorder: &ndarray::Array1<T>,
    mu: T,
) -> Result<LatticeOperator<T>> {
    let h = build(&model.spec, geometry, &model.flux, Some(disorder))?;
    let dec = decompose(&h)?;
    let p = dec.fermi_projection(mu)?;
    LatticeOperator::new(p, geometry.clone(), h.fiber_dim, h.family_id)
}

/// One invariant, one disorder realization.
pub fn evaluate_one<T: LatticeScalar>(
    model: &BuiltinModel<T>,
    kind: InvariantKind,
    size: usize,
    seed: u64,
    eval: &ResolvedEval<T>,
) -> Result<InvariantResult<T>> {
    let d = model.spec.dim();
    match kind {
        InvariantKind::EvenChern => {
            let g = FiniteGeometry::open(&vec![size; d])?;
            let dis = sample_disorder(seed, &g, None)?;
            let op = projection_operator(model, &g, &dis.values, eval.mu)?;
            even_chern(&op, &TraceRegion::central(&g, eval.margin)?)
        }
        InvariantKind::OddChern => {
            // Open chiral samples pin edge modes to zero and break the
            // flat-band construction; the bulk band lives on the torus.
            let g = FiniteGeometry::torus(&vec![size; d])?;
            let dis = sample_disorder(seed, &g, None)?;
            let h = build(&model.spec, &g, &model.flux, Some(&dis.values))?;
            let fb = flat_band_unitary(&h)?;
            odd_chern(&fb.op, &TraceRegion::central(&g, eval.margin)?)
        }
        InvariantKind::BoundaryOddChern => {
            let edges = vec![size; d - 1];
            let bc = vec![BoundaryCondition::Periodic; d - 1];
            let g = FiniteGeometry::halfspace(&edges, &bc, eval.depth)?;
            let dis = sample_disorder(seed, &g, None)?;
            let h = build_halfspace(&model.spec, &g, &model.flux, Some(&dis.values), None)?;
            let dec = decompose(&h)?;
            let f = SwitchFunction::descending(eval.switch_window.0, eval.switch_window.1)?;
            let bu = boundary_unitary(&h, Some(&dec), &f, eval.bulk_gap)?;
            boundary_odd_chern(&bu, eval.edge_margin)
        }
        InvariantKind::BoundaryEvenChern => {
            let depth = if d == 1 { size } else { eval.depth };
            let edges = vec![size; d - 1];
            let bc = vec![BoundaryCondition::Periodic; d - 1];
            let g = FiniteGeometry::halfspace(&edges, &bc, depth)?;
            let dis = sample_disorder(seed, &g, None)?;
            let h = build_halfspace(&model.spec, &g, &model.flux, Some(&dis.values), None)?;
            let dec = decompose(&h)?;
            let f = SwitchFunction::odd_sign(eval.switch_halfwidth)?;
            let bp = boundary_projection(&h, Some(&dec), &f, eval.bulk_gap)?;
            boundary_even_chern(&bp, &h, eval.edge_margin)
        }
        InvariantKind::FredholmIndex => {
            if d % 2 == 0 {
                let g = FiniteGeometry::open(&vec![size; d])?;
                let dis = sample_disorder(seed, &g, None)?;
                let op = projection_operator(model, &g, &dis.values, eval.mu)?;
                fredholm_index_projection(&op, &eval.x0, eval.radius, eval.buffer, eval.order)
            } else {
                let g = FiniteGeometry::torus(&vec![size; d])?;
                let dis = sample_disorder(seed, &g, None)?;
                let h = build(&model.spec, &g, &model.flux, Some(&dis.values))?;
                let fb = flat_band_unitary(&h)?;
                fredholm_index_unitary(&fb.op, &eval.x0, eval.radius, eval.buffer, eval.order)
            }
        }
    }
}

/// Disorder-averaged invariant at one sweep point: parallel over seeds,
/// fixed-order aggregation.
pub fn evaluate_point<T: LatticeScalar>(
    model: &BuiltinModel<T>,
    kind: InvariantKind,
    size: usize,
    seeds: &[u64],
    eval: &ResolvedEval<T>,
) -> Result<InvariantResult<T>> {
    let results: Result<Vec<_>> = seeds
        .par_iter()
        .map(|&seed| evaluate_one(model, kind, size, seed, eval))
        .collect();
    aggregate(&results?, seeds.to_vec())
}

/// One output row: aggregated invariant plus sweep coordinates and
/// wall-clock time. The runtime column is the only non-reproducible one.
#[derive(Clone, Debug, Serialize)]
pub struct ResultRow<T> {
    pub model_id: String,
    pub param: Option<T>,
    pub dim: usize,
    pub kind: InvariantKind,
    pub size: usize,
    pub depth: Option<usize>,
    pub seed_count: usize,
    pub raw: T,
    pub nearest: i64,
    pub deviation: T,
    pub std: T,
    pub unconverged: bool,
    pub runtime_s: f64,
}

fn row_from<T: LatticeScalar>(
    model_id: &str,
    param: Option<T>,
    kind: InvariantKind,
    size: usize,
    depth: Option<usize>,
    seed_count: usize,
    outcome: Result<InvariantResult<T>>,
    runtime_s: f64,
    dim: usize,
) -> ResultRow<T> {
    match outcome {
        Ok(r) => ResultRow {
            model_id: model_id.to_string(),
            param,
            dim,
            kind,
            size,
            depth,
            seed_count,
            raw: r.mean,
            nearest: r.nearest,
            deviation: r.deviation,
            std: r.std,
            unconverged: r.unconverged,
            runtime_s,
        },
        Err(e) => {
            eprintln!("evaluation failed ({model_id}, {kind}, L={size}): {e}");
            ResultRow {
                model_id: model_id.to_string(),
                param,
                dim,
                kind,
                size,
                depth,
                seed_count,
                raw: T::nan(),
                nearest: 0,
                deviation: T::nan(),
                std: T::nan(),
                unconverged: true,
                runtime_s,
            }
        }
    }
}

fn needs_boundary(kinds: &[InvariantKind]) -> bool {
    kinds.iter().any(|k| {
        matches!(
            k,
            InvariantKind::BoundaryOddChern | InvariantKind::BoundaryEvenChern
        )
    })
}

/// Walk the grid and evaluate every requested (point, size, invariant).
/// Rows come out in grid-major, then size, then invariant order.
pub fn run_sweep<T: LatticeScalar>(config: &SweepConfig<T>) -> Result<Vec<ResultRow<T>>> {
    let base = config.validate()?;
    let d = base.spec.dim();
    let points: Vec<Option<T>> = if config.sweep.parameter.is_some() {
        config.sweep.grid.iter().map(|&v| Some(v)).collect()
    } else {
        vec![None]
    };
    let mut rows = Vec::new();
    for (pi, &pv) in points.iter().enumerate() {
        let model = config.realize(&base, pv)?;
        let seeds = seed_schedule(config.base_seed, pi, config.sweep.seeds);
        for &size in &config.sweep.sizes {
            for &kind in &config.sweep.invariants {
                let boundary = needs_boundary(&[kind]);
                let start = Instant::now();
                let outcome = resolve_eval(&model, &config.evaluation, size, boundary)
                    .and_then(|eval| evaluate_point(&model, kind, size, &seeds, &eval));
                let depth = if boundary {
                    Some(if d == 1 {
                        size
                    } else {
                        config.evaluation.depth.unwrap_or((size / 2).max(10))
                    })
                } else {
                    None
                };
                rows.push(row_from(
                    &model.name,
                    pv,
                    kind,
                    size,
                    depth,
                    seeds.len(),
                    outcome,
                    start.elapsed().as_secs_f64(),
                    d,
                ));
            }
        }
    }
    Ok(rows)
}

/// Deviation-versus-size table at a fixed model point. Needs three or
/// more sizes so a trend is visible.
pub fn convergence_study<T: LatticeScalar>(
    model: &BuiltinModel<T>,
    kind: InvariantKind,
    sizes: &[usize],
    seeds_per_size: usize,
    base_seed: u64,
    eval: &EvalSection<T>,
) -> Result<Vec<ResultRow<T>>> {
    if sizes.len() < 3 {
        return Err(Error::Config(
            "a convergence study needs at least 3 sizes".into(),
        ));
    }
    let d = model.spec.dim();
    let boundary = needs_boundary(&[kind]);
    let seeds = seed_schedule(base_seed, 0, seeds_per_size);
    let mut rows = Vec::new();
    for &size in sizes {
        let start = Instant::now();
        let outcome = resolve_eval(model, eval, size, boundary)
            .and_then(|e| evaluate_point(model, kind, size, &seeds, &e));
        let depth = boundary.then(|| {
            if d == 1 {
                size
            } else {
                eval.depth.unwrap_or((size / 2).max(10))
            }
        });
        rows.push(row_from(
            &model.name,
            None,
            kind,
            size,
            depth,
            seeds.len(),
            outcome,
            start.elapsed().as_secs_f64(),
            d,
        ));
    }
    Ok(rows)
}

/// Everything a localization run produces: per-size moment profiles,
/// their decay fits, the finite-sample spectrum bounds of the first
/// realization at each size, and the verdict when two or more sizes ran.
#[derive(Clone, Debug, Serialize)]
pub struct LocalizeOutcome<T> {
    pub profiles: Vec<MomentProfile<T>>,
    pub fits: Vec<DecayFit<T>>,
    pub spectra: Vec<(T, T)>,
    pub verdict: Option<Localization>,
}

/// Fractional-moment probe at one energy over a list of sizes. The same
/// seed list is reused at every size so the size comparison is paired.
pub fn localize_point<T: LatticeScalar>(
    model: &BuiltinModel<T>,
    sizes: &[usize],
    seeds_per_size: usize,
    base_seed: u64,
    eval: &EvalSection<T>,
) -> Result<LocalizeOutcome<T>> {
    if sizes.is_empty() {
        return Err(Error::Config("sizes list must not be empty".into()));
    }
    let d = model.spec.dim();
    let energy = eval
        .energy
        .map(|(re, im)| Complex::new(re, im))
        .unwrap_or_else(|| Complex::new(model.fermi_level, real(1e-3)));
    let s = eval.moment_exponent.unwrap_or_else(|| real(0.5));
    let seeds = seed_schedule(base_seed, 0, seeds_per_size);
    let mut profiles = Vec::new();
    let mut fits = Vec::new();
    let mut spectra = Vec::new();
    for &size in sizes {
        let g = FiniteGeometry::open(&vec![size; d])?;
        let profile = resolvent_moments(&model.spec, &model.flux, &g, energy, s, &seeds)?;
        let window = eval
            .fit_window
            .unwrap_or((3, (size / 2) * 7 / 8));
        fits.push(fit_decay(&profile, window)?);
        let dis = sample_disorder(seeds[0], &g, None)?;
        let h = build(&model.spec, &g, &model.flux, Some(&dis.values))?;
        spectra.push(spectrum_bounds(&h)?);
        profiles.push(profile);
    }
    let verdict = if sizes.len() >= 2 {
        let threshold = eval
            .threshold
            .unwrap_or_else(|| real(DEFAULT_RATE_THRESHOLD));
        Some(classify_energy(&fits, threshold)?)
    } else {
        None
    };
    Ok(LocalizeOutcome {
        profiles,
        fits,
        spectra,
        verdict,
    })
}

/// Orientation calibration of the trace formulas against the twisted
/// boundary condition reference, run on the magnetic lattice at flux 1/3
/// with the Fermi level under the lowest band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    /// Deterministic digest of the run; reports cite it.
    pub id: String,
    /// Sign relating the real-space trace formulas to the reference
    /// orientation.
    pub sign: i8,
    pub formula_value: f64,
    pub oracle_value: f64,
    pub model_id: String,
    pub size: usize,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Run the flux-1/3 reference and pin the global sign. With a store
/// path, the record is persisted as JSON; an unreadable existing record
/// triggers a warning and a rewrite, and repeated calls are idempotent.
pub fn calibrate_sign(store: Option<&Path>) -> Result<CalibrationRecord> {
    let model = by_name::<f64>("hofstadter", &[1.0, 3.0, 0.0])?;
    let size = 24usize;
    let g = FiniteGeometry::torus(&[size, size])?;
    let h = build(&model.spec, &g, &model.flux, None)?;
    let dec = decompose(&h)?;
    let p = dec.fermi_projection(model.fermi_level)?;
    let op = LatticeOperator::new(p, g.clone(), h.fiber_dim, h.family_id)?;
    let formula = even_chern(&op, &TraceRegion::central(&g, 6)?)?;
    if formula.unconverged {
        return Err(Error::Invariant(
            "calibration reference run did not converge".into(),
        ));
    }
    let g_twist = FiniteGeometry::torus(&[6, 6])?;
    let oracle =
        crate::oracle::twist_chern(&model.spec, &g_twist, &model.flux, model.fermi_level, 10)?;
    let oracle_int = oracle.round() as i64;
    if formula.nearest == 0 || oracle_int == 0 || (oracle - oracle_int as f64).abs() > 1e-3 {
        return Err(Error::Invariant(format!(
            "calibration reference is not a clean nonzero integer: formula {} oracle {}",
            formula.raw, oracle
        )));
    }
    let sign = if formula.nearest.signum() == oracle_int.signum() {
        1i8
    } else {
        -1i8
    };
    let digest = fnv1a(
        format!(
            "{}|{}|{}|{}|{}",
            model.name,
            size,
            sign,
            (formula.raw * 1e6).round(),
            (oracle * 1e6).round()
        )
        .as_bytes(),
    );
    let record = CalibrationRecord {
        id: format!("{digest:016x}"),
        sign,
        formula_value: formula.raw,
        oracle_value: oracle,
        model_id: model.name.clone(),
        size,
    };
    if let Some(path) = store {
        if path.exists() {
            match std::fs::read_to_string(path)
                .map_err(Error::from)
                .and_then(|t| {
                    serde_json::from_str::<CalibrationRecord>(&t)
                        .map_err(|e| Error::Parse(e.to_string()))
                }) {
                // byte-level float jitter from BLAS buffer alignment is
                // below the digest rounding, so id + sign decide currency
                Ok(existing) if existing.id == record.id && existing.sign == record.sign => {
                    return Ok(existing)
                }
                Ok(_) | Err(_) => {
                    eprintln!(
                        "warning: calibration record at {} is stale or unreadable; rewriting",
                        path.display()
                    );
                }
            }
        }
        let text = serde_json::to_string_pretty(&record)
            .map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(path, text)?;
    }
    Ok(record)
}

fn csv_quote(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Header of the sweep CSV. `runtime_s` is last so reproducibility
/// checks can strip it.
pub const CSV_HEADER: &str =
    "model_id,param,d,invariant_kind,L,depth,seed_count,raw,nearest,deviation,std,unconverged,runtime_s";

/// Write rows as CSV. A calibration id, when given, goes into a leading
/// comment line so every report carries it.
pub fn write_rows_csv<T: LatticeScalar, W: Write>(
    rows: &[ResultRow<T>],
    calibration: Option<&str>,
    out: &mut W,
) -> Result<()> {
    if let Some(id) = calibration {
        writeln!(out, "# calibration {id}")?;
    }
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        let param = r.param.map(|p| format!("{p:.12e}")).unwrap_or_default();
        let depth = r.depth.map(|d| d.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{:.12e},{},{:.12e},{:.12e},{},{:.3}",
            csv_quote(&r.model_id),
            param,
            r.dim,
            r.kind,
            r.size,
            depth,
            r.seed_count,
            r.raw,
            r.nearest,
            r.deviation,
            r.std,
            r.unconverged as u8,
            r.runtime_s,
        )?;
    }
    Ok(())
}

/// Moment profiles as plot-ready CSV: one row per (size, distance bin).
pub fn write_profiles_csv<T: LatticeScalar, W: Write>(
    profiles: &[MomentProfile<T>],
    out: &mut W,
) -> Result<()> {
    writeln!(out, "L,distance,mean_moment,stderr")?;
    for p in profiles {
        let size = p.sides.iter().copied().max().unwrap_or(0);
        for d in 0..p.means.len() {
            if p.counts[d] == 0 {
                continue;
            }
            writeln!(
                out,
                "{},{},{:.12e},{:.12e}",
                size, d, p.means[d], p.stderrs[d]
            )?;
        }
    }
    Ok(())
}

/// Run a closure on a rayon pool with the requested thread count;
/// 0 keeps the global default.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
