//! `vcosolve` command-line front end.
//!
//! Exit codes: 0 success, 2 validation error, 3 solver divergence, 4 singular matrix.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "vcosolve",
    version,
    about = "Analog VCO-integrator linear solver simulator"
)]
struct Cli {
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Raise log verbosity (repeatable).
    #[arg(long, short = 'v', global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compile and simulate a problem file.
    Solve(SolveArgs),
    /// Write the compiled plan and integrator census.
    Plan(PlanCmd),
    /// Write the range-safety scaling summary.
    Scale(ScaleCmd),
    /// Simulate the phase-domain integrator on a DC-plus-tone input and report SFDR.
    Sfdr(SfdrArgs),
    /// Write an energy/efficiency table row.
    Metrics(MetricsArgs),
    /// Repeat a solve over several VCO gains.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
struct SolverFlags {
    /// VCO gain in Hz/V.
    #[arg(long, default_value_t = 300e6)]
    kvco: f64,
    /// Phase-detector gain in V/rad; defaults to v_dd/pi.
    #[arg(long)]
    kpd: Option<f64>,
    #[arg(long, value_enum, default_value_t = ModeArg::Structural)]
    mode: ModeArg,
    /// Convergence threshold on the residual, volts.
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Simulation horizon, seconds.
    #[arg(long, default_value_t = 10e-6)]
    tmax: f64,
    /// Fixed step, seconds; 0 selects it automatically.
    #[arg(long, default_value_t = 0.0)]
    dt: f64,
    #[arg(long, value_enum, default_value_t = ScaleArg::None)]
    scale: ScaleArg,
    /// Condition bound for `--scale estimate`.
    #[arg(long, default_value_t = vcosolve::problem::DEFAULT_KAPPA_BOUND)]
    kappa_bound: f64,
    /// Fail instead of solving the normal equations when both orientations are unstable.
    #[arg(long)]
    no_gram_fallback: bool,
    /// Stop integrating once convergence is established.
    #[arg(long)]
    stop_on_converge: bool,
}

#[derive(Args, Debug, Clone)]
struct PlanFlags {
    /// Input resistance, ohms.
    #[arg(long, default_value_t = 2000.0)]
    r_in: f64,
    /// Unit ladder resistance, ohms.
    #[arg(long, default_value_t = 1000.0)]
    r_unit: f64,
    /// Quantize coefficients onto a binary-weighted ladder of this many bits.
    #[arg(long)]
    quantize_bits: Option<u32>,
    /// Switch on-resistance, ohms.
    #[arg(long, default_value_t = 0.0)]
    r_on: f64,
    /// Replace feedback resistors with programmed memristors.
    #[arg(long)]
    memristor: bool,
    /// Relative write-noise standard deviation.
    #[arg(long, default_value_t = 0.0)]
    write_noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Smallest programmable conductance, siemens.
    #[arg(long, default_value_t = 10e-6)]
    g_min: f64,
    /// Largest programmable conductance, siemens.
    #[arg(long, default_value_t = 2.56e-3)]
    g_max: f64,
    #[arg(long, value_enum, default_value_t = OrientationArg::Auto)]
    orientation: OrientationArg,
}

#[derive(Args, Debug)]
struct SolveArgs {
    problem: PathBuf,
    #[command(flatten)]
    solver: SolverFlags,
    #[command(flatten)]
    plan: PlanFlags,
    /// Write the time-domain trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Record every k-th integration step in the trace.
    #[arg(long, default_value_t = 10)]
    trace_every: usize,
}

#[derive(Args, Debug)]
struct PlanCmd {
    problem: PathBuf,
    #[command(flatten)]
    plan: PlanFlags,
}

#[derive(Args, Debug)]
struct ScaleCmd {
    problem: PathBuf,
    #[arg(long, value_enum, default_value_t = ScaleArg::Exact)]
    scale: ScaleArg,
    #[arg(long, default_value_t = vcosolve::problem::DEFAULT_KAPPA_BOUND)]
    kappa_bound: f64,
}

#[derive(Args, Debug)]
struct SfdrArgs {
    #[arg(long, default_value_t = 32)]
    phases: usize,
    #[arg(long, default_value_t = 1e9)]
    f_ref: f64,
    #[arg(long, default_value_t = 1e9)]
    f0: f64,
    #[arg(long, default_value_t = 0.75)]
    v0: f64,
    #[arg(long, default_value_t = 300e6)]
    kvco: f64,
    #[arg(long, default_value_t = 1.0)]
    vdd: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::DirectLevelShift16)]
    method: MethodArg,
    /// Step in seconds; defaults to 1/(640 GHz).
    #[arg(long)]
    dt: Option<f64>,
    /// Feedback weight of the single-path loop.
    #[arg(long, default_value_t = 1.0)]
    weight: f64,
    /// DC operating point of the input, volts.
    #[arg(long, default_value_t = 0.2)]
    dc: f64,
    #[arg(long, default_value_t = 0.05)]
    tone_amp: f64,
    /// Tone frequency in DFT bins of the record.
    #[arg(long, default_value_t = 32)]
    tone_bins: usize,
    #[arg(long, default_value_t = 16)]
    samples_log2: u32,
    /// Samples discarded before the record starts.
    #[arg(long, default_value_t = 20_000)]
    warmup: usize,
    /// Post-filter corner in Hz; 0 disables.
    #[arg(long, default_value_t = 100e6)]
    post_filter_hz: f64,
    #[arg(long, default_value_t = 2)]
    post_filter_order: usize,
    /// Write the spectrum as CSV.
    #[arg(long)]
    spectrum: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    /// Matrix dimension; taken from `--problem` when given.
    #[arg(long)]
    n: Option<usize>,
    /// Problem file; its plan supplies the integrator census.
    #[arg(long)]
    problem: Option<PathBuf>,
    /// Integrator count override.
    #[arg(long)]
    integrators: Option<usize>,
    #[arg(long, default_value_t = vcosolve::metrics::DEFAULT_INTEGRATOR_MW)]
    per_integrator_mw: f64,
    /// Convergence time, seconds; solved from `--problem` when omitted.
    #[arg(long)]
    time_s: Option<f64>,
    #[arg(long, default_value = "This work")]
    label: String,
    /// Phase-generation method whose level-shifter count is reported.
    #[arg(long, value_enum)]
    phase_method: Option<MethodArg>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    #[command(flatten)]
    solver: SolverFlags,
    #[command(flatten)]
    plan: PlanFlags,
}

#[derive(Args, Debug)]
struct SweepArgs {
    problem: PathBuf,
    /// Comma-separated VCO gains in Hz/V.
    #[arg(long, value_delimiter = ',', required = true)]
    kvco_list: Vec<f64>,
    #[command(flatten)]
    solver: SolverFlags,
    #[command(flatten)]
    plan: PlanFlags,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Ideal,
    Structural,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ScaleArg {
    None,
    Exact,
    Estimate,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum OrientationArg {
    Auto,
    Keep,
    Negate,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MethodArg {
    DirectLevelShift16,
    Johnson16,
    Hybrid4x4,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FormatArg {
    Csv,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
