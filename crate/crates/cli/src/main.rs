//! Command line driver: evaluates invariants and localization probes for
//! builtin or file-defined lattice models and writes deterministic CSV
//! reports. Exit code 0 covers runs with flagged rows; nonzero is
//! reserved for configuration and I/O problems.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ncchern::error::{Error, Result};
use ncchern::harness::{
    calibrate_sign, convergence_study, load_model_section, localize_point, run_sweep,
    with_threads, EvalSection, LocalizeOutcome, ModelSection, ResultRow, SweepConfig,
    SweepSection, write_profiles_csv, write_rows_csv,
};
use ncchern::invariants::InvariantKind;
use ncchern::models::BuiltinModel;

#[derive(Parser)]
#[command(
    name = "ncchern",
    version,
    about = "Real-space topological invariants and localization diagnostics \
             for disordered tight-binding lattices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bulk invariant on open boxes, disorder averaged
    Bulk(EvalCmd),
    /// Boundary invariant on a half-space slab
    Boundary(EvalCmd),
    /// Fredholm index of the Dirac compression
    Index(EvalCmd),
    /// Fractional resolvent moments, decay fits and a localization verdict
    Localize(LocalizeCmd),
    /// Walk a parameter grid described by a TOML config
    Sweep(SweepCmd),
    /// Deviation-versus-size study at a fixed model point
    Converge(ConvergeCmd),
    /// Pin the trace-formula orientation against the twisted-boundary
    /// reference and store the record
    Calibrate(CalibrateCmd),
}

#[derive(Args)]
struct ModelArgs {
    /// Builtin model name (ssh, ssh_reversed, qwz, hofstadter, anderson,
    /// chiral3d, atomic)
    #[arg(long, conflicts_with = "model_file")]
    model: Option<String>,
    /// Builtin model parameters, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    params: Vec<f64>,
    /// JSON file holding a full model definition
    #[arg(long)]
    model_file: Option<PathBuf>,
}

impl ModelArgs {
    fn section(&self) -> ModelSection<f64> {
        ModelSection {
            builtin: self.model.clone(),
            params: self.params.clone(),
            file: self.model_file.clone(),
        }
    }

    fn load(&self) -> Result<BuiltinModel<f64>> {
        load_model_section(&self.section())
    }
}

#[derive(Args)]
struct RunArgs {
    /// Box sizes, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    size: Vec<usize>,
    /// Disorder realizations per point
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    /// First seed of the deterministic schedule
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
}

#[derive(Args)]
struct OutputArgs {
    /// Output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 keeps the library default)
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Stamp the report with the calibration record at this path,
    /// creating it on first use
    #[arg(long)]
    calibration: Option<PathBuf>,
}

#[derive(Args, Default)]
struct TuningArgs {
    /// Trace-region margin for bulk formulas (default L/4)
    #[arg(long)]
    margin: Option<usize>,
    /// Slab depth for boundary formulas (default max(10, L/2))
    #[arg(long)]
    depth: Option<usize>,
    /// Edge margin for boundary trace windows (default L/4)
    #[arg(long)]
    edge_margin: Option<usize>,
    /// Dirac-ball radius for index runs (default L/2 - 2)
    #[arg(long)]
    radius: Option<f64>,
    /// Buffer between index trace zones (default max(2.5, radius/4))
    #[arg(long)]
    buffer: Option<f64>,
    /// Ball center offset inside the unit cell, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    /// Trace truncation order for index runs (0 picks floor(d/2) + 1)
    #[arg(long)]
    order: Option<usize>,
    /// Fermi level override
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    /// Switch transition window for boundary unitaries, as lo,hi
    #[arg(long, number_of_values = 2, value_delimiter = ',', allow_hyphen_values = true)]
    switch_window: Option<Vec<f64>>,
    /// Odd-switch halfwidth for boundary projections
    #[arg(long)]
    halfwidth: Option<f64>,
}

#[derive(Args, Default)]
struct LocalizeTuningArgs {
    /// Probe energy as re,im (default Fermi level + 1e-3 i)
    #[arg(long, number_of_values = 2, value_delimiter = ',', allow_hyphen_values = true)]
    energy: Option<Vec<f64>>,
    /// Fractional moment exponent in (0, 1), default 1/2
    #[arg(long)]
    exponent: Option<f64>,
    /// Distance window for the decay fit, as lo,hi bins
    #[arg(long, number_of_values = 2, value_delimiter = ',')]
    fit_window: Option<Vec<usize>>,
    /// Decay rate below which localization is not established
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct EvalCmd {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[command(flatten)]
    tuning: TuningArgs,
    /// Invariant kind; defaults to the dimension-parity match
    #[arg(long)]
    invariant: Option<String>,
}

#[derive(Args)]
struct LocalizeCmd {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[command(flatten)]
    tuning: LocalizeTuningArgs,
}

#[derive(Args)]
struct SweepCmd {
    /// TOML sweep configuration
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ConvergeCmd {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[command(flatten)]
    tuning: TuningArgs,
    /// Invariant kind; defaults to the dimension-parity match
    #[arg(long)]
    invariant: Option<String>,
}

#[derive(Args)]
struct CalibrateCmd {
    /// Where the calibration record lives; recomputed but not stored
    /// when omitted
    #[arg(long)]
    store: Option<PathBuf>,
}

/// Which family of invariants a positional subcommand stands for.
enum KindFamily {
    Bulk,
    Boundary,
    Index,
}

fn pick_kind(family: KindFamily, requested: Option<&str>, dim: usize) -> Result<InvariantKind> {
    let kind = match requested {
        Some(name) => name.parse::<InvariantKind>()?,
        None => match family {
            KindFamily::Bulk => {
                if dim % 2 == 0 {
                    InvariantKind::EvenChern
                } else {
                    InvariantKind::OddChern
                }
            }
            KindFamily::Boundary => {
                if dim % 2 == 0 {
                    InvariantKind::BoundaryOddChern
                } else {
                    InvariantKind::BoundaryEvenChern
                }
            }
            KindFamily::Index => InvariantKind::FredholmIndex,
        },
    };
    let allowed = match family {
        KindFamily::Bulk => matches!(kind, InvariantKind::EvenChern | InvariantKind::OddChern),
        KindFamily::Boundary => matches!(
            kind,
            InvariantKind::BoundaryOddChern | InvariantKind::BoundaryEvenChern
        ),
        KindFamily::Index => matches!(kind, InvariantKind::FredholmIndex),
    };
    if !allowed {
        return Err(Error::Config(format!(
            "invariant {kind} does not belong to this subcommand"
        )));
    }
    Ok(kind)
}

fn pair<T: Copy>(v: &Option<Vec<T>>) -> Option<(T, T)> {
    v.as_ref().map(|v| (v[0], v[1]))
}

impl TuningArgs {
    fn eval_section(&self) -> EvalSection<f64> {
        EvalSection {
            margin: self.margin,
            depth: self.depth,
            edge_margin: self.edge_margin,
            index_radius: self.radius,
            index_buffer: self.buffer,
            x0: self.x0.clone(),
            order: self.order,
            fermi_level: self.mu,
            switch_window: pair(&self.switch_window),
            switch_halfwidth: self.halfwidth,
            ..EvalSection::default()
        }
    }
}

impl LocalizeTuningArgs {
    fn eval_section(&self) -> EvalSection<f64> {
        EvalSection {
            energy: pair(&self.energy),
            moment_exponent: self.exponent,
            fit_window: pair(&self.fit_window),
            threshold: self.threshold,
            ..EvalSection::default()
        }
    }
}

/// Writer for either a file path or stdout.
fn open_out(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn calibration_id(store: Option<&PathBuf>) -> Result<Option<String>> {
    store
        .map(|p| calibrate_sign(Some(p)).map(|r| r.id))
        .transpose()
}

fn emit_rows(rows: &[ResultRow<f64>], output: &OutputArgs) -> Result<()> {
    let id = calibration_id(output.calibration.as_ref())?;
    let mut out = open_out(output.out.as_ref())?;
    write_rows_csv(rows, id.as_deref(), &mut out)?;
    out.flush()?;
    Ok(())
}

fn run_eval(family: KindFamily, cmd: &EvalCmd) -> Result<()> {
    let model = cmd.model.load()?;
    let kind = pick_kind(family, cmd.invariant.as_deref(), model.spec.dim())?;
    let config = SweepConfig {
        base_seed: cmd.run.base_seed,
        output: None,
        model: cmd.model.section(),
        sweep: SweepSection {
            parameter: None,
            grid: Vec::new(),
            sizes: cmd.run.size.clone(),
            seeds: cmd.run.seeds,
            invariants: vec![kind],
        },
        evaluation: cmd.tuning.eval_section(),
    };
    let rows = with_threads(cmd.output.threads, || run_sweep(&config))??;
    emit_rows(&rows, &cmd.output)
}

fn run_sweep_cmd(cmd: &SweepCmd) -> Result<()> {
    let config = SweepConfig::<f64>::from_path(&cmd.config)?;
    let rows = with_threads(cmd.output.threads, || run_sweep(&config))??;
    let id = calibration_id(cmd.output.calibration.as_ref())?;
    // an explicit --out wins over the config's own output path
    let path = cmd.output.out.clone().or_else(|| config.output.clone());
    let mut out = open_out(path.as_ref())?;
    write_rows_csv(&rows, id.as_deref(), &mut out)?;
    out.flush()?;
    Ok(())
}

fn run_converge(cmd: &ConvergeCmd) -> Result<()> {
    let model = cmd.model.load()?;
    let kind = pick_kind(
        KindFamily::Bulk,
        cmd.invariant.as_deref(),
        model.spec.dim(),
    )
    .or_else(|_| pick_kind(KindFamily::Boundary, cmd.invariant.as_deref(), model.spec.dim()))
    .or_else(|_| pick_kind(KindFamily::Index, cmd.invariant.as_deref(), model.spec.dim()))?;
    let eval = cmd.tuning.eval_section();
    let rows = with_threads(cmd.output.threads, || {
        convergence_study(
            &model,
            kind,
            &cmd.run.size,
            cmd.run.seeds,
            cmd.run.base_seed,
            &eval,
        )
    })??;
    emit_rows(&rows, &cmd.output)
}

fn run_localize(cmd: &LocalizeCmd) -> Result<()> {
    let model = cmd.model.load()?;
    let eval = cmd.tuning.eval_section();
    let outcome: LocalizeOutcome<f64> = with_threads(cmd.output.threads, || {
        localize_point(
            &model,
            &cmd.run.size,
            cmd.run.seeds,
            cmd.run.base_seed,
            &eval,
        )
    })??;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for (fit, (lo, hi)) in outcome.fits.iter().zip(&outcome.spectra) {
        writeln!(
            out,
            "# L={} spectrum [{:.6}, {:.6}] z = {:.6e} + {:.6e} i, s = {}",
            fit.size, lo, hi, fit.z.re, fit.z.im, fit.s
        )?;
    }
    writeln!(
        out,
        "L,rate,rate_stderr,quality,amplitude,window_lo,window_hi,bins_used,samples"
    )?;
    for fit in &outcome.fits {
        writeln!(
            out,
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{},{},{},{}",
            fit.size,
            fit.rate,
            fit.rate_stderr,
            fit.quality,
            fit.amplitude,
            fit.window.0,
            fit.window.1,
            fit.bins_used,
            fit.sample_count,
        )?;
    }
    if let Some(verdict) = &outcome.verdict {
        writeln!(out, "# verdict {verdict}")?;
    }
    out.flush()?;
    if let Some(path) = &cmd.output.out {
        let mut f = File::create(path)?;
        write_profiles_csv(&outcome.profiles, &mut f)?;
        f.flush()?;
    }
    Ok(())
}

fn run_calibrate(cmd: &CalibrateCmd) -> Result<()> {
    let record = calibrate_sign(cmd.store.as_deref())?;
    let text = serde_json::to_string_pretty(&record)
        .map_err(|e| Error::Parse(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Bulk(cmd) => run_eval(KindFamily::Bulk, cmd),
        Command::Boundary(cmd) => run_eval(KindFamily::Boundary, cmd),
        Command::Index(cmd) => run_eval(KindFamily::Index, cmd),
        Command::Localize(cmd) => run_localize(cmd),
        Command::Sweep(cmd) => run_sweep_cmd(cmd),
        Command::Converge(cmd) => run_converge(cmd),
        Command::Calibrate(cmd) => run_calibrate(cmd),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
