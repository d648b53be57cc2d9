//! Command-line front end: simulate / wv / fit / mc / convert-units.
//!
//! Exit codes: 0 success, 1 usage, 2 fit did not converge,
//! 3 rank/identifiability/domain errors, 4 I/O and malformed files.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use wvcal::error::{Error, Result};
use wvcal::fit::{fit_with_method, Method};
use wvcal::io;
use wvcal::mc::{emit_figure_data, run_experiment, summary_json};
use wvcal::model::{ProcessKind, ScaleGrid, VarianceConvention};
use wvcal::simulate::{simulate, simulate_components, SimConfig};
use wvcal::units::{convert_units, Direction, Quantity, UnitSpec};
use wvcal::wv::{variance, with_covariance, wv_confidence, CovMethod};

#[derive(Parser)]
#[command(
    name = "wvcal",
    version,
    about = "Calibrate inertial-sensor noise models from Allan / wavelet variance"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a composite-model noise signal to CSV (with sample-rate sidecar)
    Simulate(SimulateArgs),
    /// Compute the empirical Allan / Haar wavelet variance of a signal
    Wv(WvArgs),
    /// Fit a noise model to a signal or a precomputed variance file
    Fit(FitArgs),
    /// Run a Monte Carlo benchmark described by an experiment JSON file
    Mc(McArgs),
    /// Convert a parameter between physical and per-sample units
    ConvertUnits(ConvertArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Model JSON file (process parameters, per-sample units)
    #[arg(long)]
    model: PathBuf,
    /// Number of samples
    #[arg(long = "T")]
    t: usize,
    /// RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample rate in Hz
    #[arg(long, default_value_t = 1.0)]
    fs: f64,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
    /// Also write one CSV per active process next to --out
    #[arg(long)]
    components: bool,
}

#[derive(Args)]
struct WvArgs {
    /// Input signal CSV
    #[arg(long = "in")]
    input: PathBuf,
    /// Sample rate in Hz (overrides any sidecar)
    #[arg(long)]
    fs: Option<f64>,
    /// Variance convention: av or wv
    #[arg(long, value_parser = parse_convention_cli, default_value = "av")]
    convention: VarianceConvention,
    /// Covariance estimator: bootstrap or diag (omit for none)
    #[arg(long, value_parser = ["bootstrap", "diag"])]
    cov: Option<String>,
    /// Bootstrap resampling seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Two-sided confidence level in (0,1), e.g. 0.95; requires --cov
    #[arg(long)]
    confidence: Option<f64>,
    /// Explicit comma-separated dyadic levels (default: all with enough coefficients)
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<u32>>,
    /// Minimum coefficient count per level for the default grid
    #[arg(long, default_value_t = 16)]
    min_coeffs: usize,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Raw signal CSV (mutually exclusive with --wv)
    #[arg(long = "in", conflicts_with = "wv")]
    input: Option<PathBuf>,
    /// Precomputed variance CSV from the wv subcommand
    #[arg(long)]
    wv: Option<PathBuf>,
    /// Sample rate in Hz for --in (overrides any sidecar)
    #[arg(long)]
    fs: Option<f64>,
    /// Model template JSON naming the active processes
    #[arg(long)]
    model_template: PathBuf,
    /// Estimator: gmwm, armav or avsm
    #[arg(long, value_parser = parse_method_cli, default_value = "gmwm")]
    method: Method,
    /// Variance convention override (default: the template's)
    #[arg(long, value_parser = parse_convention_cli)]
    convention: Option<VarianceConvention>,
    /// Minimum coefficient count per level when gridding --in
    #[arg(long, default_value_t = 16)]
    min_coeffs: usize,
    /// Output report JSON path
    #[arg(long)]
    out: PathBuf,
    /// Optional plot-data CSV (level, tau_seconds, nu_hat, ci_lo, ci_hi, fitted)
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct McArgs {
    /// Experiment spec JSON
    #[arg(long)]
    spec: PathBuf,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConvertArgs {
    /// Value to convert
    #[arg(long)]
    value: f64,
    /// Process kind: qn, wn, bi, rw or dr
    #[arg(long, value_parser = parse_kind_cli)]
    process: ProcessKind,
    /// Sensor quantity: gyro or accel
    #[arg(long, value_parser = parse_quantity_cli)]
    quantity: Quantity,
    /// Physical unit token, e.g. "deg/sqrt(hr)"
    #[arg(long)]
    unit: String,
    /// Sample rate in Hz
    #[arg(long)]
    fs: f64,
    /// to-per-sample or to-physical
    #[arg(long, value_parser = parse_direction_cli, default_value = "to-per-sample")]
    direction: Direction,
}

fn parse_convention_cli(s: &str) -> std::result::Result<VarianceConvention, String> {
    VarianceConvention::from_tag(s).ok_or_else(|| format!("unknown convention {s:?} (use av or wv)"))
}

fn parse_method_cli(s: &str) -> std::result::Result<Method, String> {
    Method::from_tag(s).ok_or_else(|| format!("unknown method {s:?} (use gmwm, armav or avsm)"))
}

fn parse_kind_cli(s: &str) -> std::result::Result<ProcessKind, String> {
    ProcessKind::from_tag(s).ok_or_else(|| format!("unknown process {s:?} (use qn, wn, bi, rw or dr)"))
}

fn parse_quantity_cli(s: &str) -> std::result::Result<Quantity, String> {
    Quantity::from_tag(s).ok_or_else(|| format!("unknown quantity {s:?} (use gyro or accel)"))
}

fn parse_direction_cli(s: &str) -> std::result::Result<Direction, String> {
    match s.to_ascii_lowercase().as_str() {
        "to-per-sample" | "per-sample" => Ok(Direction::ToPerSample),
        "to-physical" | "physical" => Ok(Direction::ToPhysical),
        _ => Err(format!(
            "unknown direction {s:?} (use to-per-sample or to-physical)"
        )),
    }
}

fn init_threads() -> Result<()> {
    if let Ok(raw) = std::env::var("WVCAL_THREADS") {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| {
                Error::Usage(format!(
                    "WVCAL_THREADS must be a positive integer, got {raw:?}"
                ))
            })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Usage(format!("could not build worker pool: {e}")))?;
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    let (model, _) = io::read_model_json(&args.model)?;
    let mut cfg = SimConfig::new(model, args.t, args.seed, args.fs);
    cfg.stream_offset = 0;
    let signal = simulate(&cfg)?;
    io::write_signal_csv(&args.out, &signal)?;
    io::write_sidecar(&args.out, args.fs)?;
    if args.components {
        for (kind, component) in simulate_components(&cfg)? {
            let path = args.out.with_extension(format!("{}.csv", kind.tag()));
            io::write_signal_csv(&path, &component)?;
        }
    }
    Ok(0)
}

fn cmd_wv(args: &WvArgs) -> Result<i32> {
    let signal = io::read_signal_csv(&args.input, args.fs)?;
    let grid = match &args.levels {
        Some(levels) => ScaleGrid::explicit(signal.len(), levels.clone())?,
        None => ScaleGrid::dyadic(signal.len(), args.min_coeffs)?,
    };
    let mut est = variance(&signal, &grid, args.convention)?;
    if let Some(cov) = &args.cov {
        let method = match cov.as_str() {
            "bootstrap" => CovMethod::bootstrap_default(args.seed),
            _ => CovMethod::DiagonalLargeSample,
        };
        est = with_covariance(&est, &signal, method)?;
    }
    if let Some(level) = args.confidence {
        est = wv_confidence(&est, level)?;
    }
    io::write_wv_csv(&args.out, &est)?;
    Ok(0)
}

fn cmd_fit(args: &FitArgs) -> Result<i32> {
    if args.input.is_some() == args.wv.is_some() {
        return Err(Error::Usage(
            "exactly one of --in or --wv is required".into(),
        ));
    }
    let (template, template_convention) = io::read_model_json(&args.model_template)?;
    let convention = args.convention.unwrap_or(template_convention);
    let est = match (&args.input, &args.wv) {
        (Some(path), None) => {
            let signal = io::read_signal_csv(path, args.fs)?;
            let grid = ScaleGrid::dyadic(signal.len(), args.min_coeffs)?;
            variance(&signal, &grid, convention)?
        }
        (None, Some(path)) => io::read_wv_csv(path, convention)?,
        _ => unreachable!("guarded above"),
    };
    let active = template.active();
    let fit = fit_with_method(&est, &active, args.method)?;
    io::write_fit_report(&args.out, &fit, &est)?;
    if let Some(plot) = &args.plot {
        io::write_fit_plot_csv(plot, &fit, &est)?;
    }
    if !fit.converged {
        eprintln!(
            "fit did not converge; partial results written to {}",
            args.out.display()
        );
        return Ok(2);
    }
    Ok(0)
}

fn cmd_mc(args: &McArgs) -> Result<i32> {
    let exp = io::read_experiment_json(&args.spec)?;
    let summary = run_experiment(&exp)?;
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("summary.json"), summary_json(&summary))?;
    emit_figure_data(&summary, &args.out)?;
    Ok(0)
}

fn cmd_convert(args: &ConvertArgs) -> Result<i32> {
    let spec = UnitSpec {
        quantity: args.quantity,
        unit: args.unit.clone(),
        sample_rate_hz: args.fs,
    };
    let converted = convert_units(args.value, args.process, args.direction, &spec)?;
    println!("{}", io::fmt_float(converted));
    Ok(0)
}

fn run(cli: Cli) -> Result<i32> {
    init_threads()?;
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Wv(args) => cmd_wv(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Mc(args) => cmd_mc(args),
        Command::ConvertUnits(args) => cmd_convert(args),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // --help/--version exit 0; any parse problem is a usage error.
            std::process::exit(if e.exit_code() == 0 { 0 } else { 1 });
        }
    };
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_class() as i32
        }
    };
    std::process::exit(code);
}
