//! `gqfi`: command-line front end for the two-mode Gaussian QFI engine.
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 when a
//! validation check fails.

mod commands;
mod output;
mod validate;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gqfi_core::qfi::Engine;
use gqfi_core::sensing::{AxisVariable, CovarianceSource, Preset};
use gqfi_core::Parameter;

use output::Format;

#[derive(Parser, Debug)]
#[command(
    name = "gqfi",
    version,
    about = "Quantum Fisher information of two-mode Gaussian probes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Covariance, symplectic spectrum and physicality of one probe.
    State(StateArgs),
    /// Spectrum of C = iΩσ along one or two axes.
    Spectrum(SpectrumArgs),
    /// QFI at one parameter point.
    Qfi(QfiArgs),
    /// QFI over a grid (figure presets or custom axes).
    Sweep(SweepArgs),
    /// Monte-Carlo Cramér-Rao experiment with heterodyne detection.
    Crb(CrbArgs),
    /// Run the oracle suite; exits 2 on any disagreement.
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Clone, Default, Serialize)]
struct ProbeArgs {
    /// Thermal occupation of mode 1.
    #[arg(long, allow_hyphen_values = true)]
    nbar: Option<f64>,
    /// Thermal occupation of mode 2.
    #[arg(long, allow_hyphen_values = true)]
    mbar: Option<f64>,
    /// Two-mode squeezing strength.
    #[arg(long, allow_hyphen_values = true)]
    r: Option<f64>,
    /// Beam-splitter angle in radians.
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<f64>,
    /// Transmissivity τ = cos²φ; sets φ = arccos √τ.
    #[arg(long, conflicts_with = "phi")]
    tau: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct OutputArgs {
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    #[serde(skip)]
    format: Format,
    /// Seed echoed into the metadata (and used by `crb`).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evaluate grids on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
struct AxisArgs {
    /// Quantity varied along x (phi, r, nbar, mbar, tau).
    #[arg(long = "x-axis", value_parser = parse_axis)]
    #[serde(serialize_with = "ser_display_opt")]
    x_axis: Option<AxisVariable>,
    #[arg(long = "x-min", allow_hyphen_values = true)]
    x_min: Option<f64>,
    #[arg(long = "x-max", allow_hyphen_values = true)]
    x_max: Option<f64>,
    #[arg(long = "x-count")]
    x_count: Option<usize>,
    /// Quantity varied along y.
    #[arg(long = "y-axis", value_parser = parse_axis)]
    #[serde(serialize_with = "ser_display_opt")]
    y_axis: Option<AxisVariable>,
    #[arg(long = "y-min", allow_hyphen_values = true)]
    y_min: Option<f64>,
    #[arg(long = "y-max", allow_hyphen_values = true)]
    y_max: Option<f64>,
    #[arg(long = "y-count")]
    y_count: Option<usize>,
    /// Drop the y axis of a preset.
    #[arg(long = "no-y")]
    no_y: bool,
}

#[derive(Args, Debug)]
struct StateArgs {
    #[command(flatten)]
    probe: ProbeArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    /// fig2a, fig2b, fig6a or fig6b.
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    #[command(flatten)]
    probe: ProbeArgs,
    #[command(flatten)]
    axes: AxisArgs,
    /// Covariance used for the spectrum: conjugated or printed.
    #[arg(long, value_parser = parse_source, default_value = "conjugated")]
    source: CovarianceSource,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct QfiArgs {
    #[command(flatten)]
    probe: ProbeArgs,
    /// Parameter to estimate: phi, r, nbar, mbar.
    #[arg(long, value_parser = parse_parameter, default_value = "phi")]
    which: Parameter,
    /// closed_form, eigen_form, fidelity_limit or all.
    #[arg(long, default_value = "all")]
    engine: String,
    /// Outer step of the fidelity-limit engine.
    #[arg(long)]
    step: Option<f64>,
    /// Reduced-state thermometry QFI of mode 1 (requires --which nbar).
    #[arg(long)]
    reduced: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Figure preset fig2a … fig6b.
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    #[command(flatten)]
    probe: ProbeArgs,
    #[command(flatten)]
    axes: AxisArgs,
    #[arg(long, value_parser = parse_parameter)]
    which: Option<Parameter>,
    #[arg(long, value_parser = parse_engine)]
    engine: Option<Engine>,
    /// Also emit the reduced-state thermometry QFI.
    #[arg(long)]
    reduced: bool,
    /// Also emit the symplectic eigenvalues.
    #[arg(long)]
    spectrum: bool,
    /// Covariance source when the preset is a spectrum preset.
    #[arg(long, value_parser = parse_source, default_value = "conjugated")]
    source: CovarianceSource,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct CrbArgs {
    #[command(flatten)]
    probe: ProbeArgs,
    #[arg(long, value_parser = parse_parameter, default_value = "phi")]
    which: Parameter,
    /// True parameter value θ*.
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    #[arg(long, default_value_t = gqfi_core::crb::DEFAULT_SHOTS)]
    shots: usize,
    #[arg(long, default_value_t = gqfi_core::crb::DEFAULT_TRIALS)]
    trials: usize,
    /// Run the five preset θ* values instead of a single θ*.
    #[arg(long)]
    grid: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    output: OutputArgs,
}

fn parse_axis(s: &str) -> Result<AxisVariable, String> {
    s.parse().map_err(|e: gqfi_core::Error| e.to_string())
}

fn parse_parameter(s: &str) -> Result<Parameter, String> {
    s.parse().map_err(|e: gqfi_core::Error| e.to_string())
}

fn parse_engine(s: &str) -> Result<Engine, String> {
    s.parse()
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse()
}

fn parse_source(s: &str) -> Result<CovarianceSource, String> {
    s.parse()
}

fn ser_display_opt<S, T>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error>
where
    S: serde::Serializer,
    T: fmt::Display,
{
    match v {
        Some(x) => s.serialize_str(&x.to_string()),
        None => s.serialize_none(),
    }
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or inputs the engine rejects.
    Usage(String),
    /// A check ran and failed.
    Validation(String),
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Usage(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<gqfi_core::Error> for CliError {
    fn from(e: gqfi_core::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("GQFI_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "GQFI_THREADS must be a positive integer, got `{value}`"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::State(a) => commands::state(&a),
        Command::Spectrum(a) => commands::spectrum(&a),
        Command::Qfi(a) => commands::qfi(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Crb(a) => commands::crb(&a),
        Command::Validate(a) => validate::run(&a.output),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let informational = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return ExitCode::from(if informational { 0 } else { 1 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("usage: gqfi <state|spectrum|qfi|sweep|crb|validate> [OPTIONS]; see `gqfi --help`");
            }
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Validation("x".into()).exit_code(), 2);
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        let io = std::io::Error::other("x");
        assert_eq!(CliError::from(io).exit_code(), 1);
        let bad = gqfi_core::ProbeParams {
            nbar: -1.0,
            mbar: 1.0,
            r: 0.0,
            phi: 0.0,
        };
        let core = gqfi_core::build_probe(&bad).unwrap_err();
        assert_eq!(CliError::from(core).exit_code(), 1);
    }

    #[test]
    fn command_line_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
