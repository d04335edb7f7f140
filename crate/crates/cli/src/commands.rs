use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use vcosolve::dynamics::{SolveResult, DEFAULT_V_DD};
use vcosolve::metrics::{efficiency, ops_count, power_for_integrators, TABLE_HEADER};
use vcosolve::netlist::{IntegratorScheme, MemristorProgram};
use vcosolve::phase::{
    dominant_tone, effective_kvco, lowpass_filter, sfdr, simulate_phase_lowpass, spectrum_csv,
    PhaseConfig, PhaseGenMethod, Polarity,
};
use vcosolve::{
    integrator_count, plan, scale_problem, solve, Error, LinearProblem, Mode, Orientation,
    PlanOptions, QuantizerSpec, ScalePolicy, SolverConfig,
};

use crate::{
    Cli, Command, FormatArg, MethodArg, MetricsArgs, ModeArg, OrientationArg, PlanFlags, ScaleArg,
    SfdrArgs, SolverFlags, SweepArgs,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid arguments: {0}")]
    Usage(String),
    #[error("solver did not converge: {0}")]
    Diverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::SingularMatrix { .. }) => 4,
            CliError::Core(Error::UnstableSystem { .. } | Error::EigenFailure { .. }) => 3,
            CliError::Diverged(_) => 3,
            _ => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<u8> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Solve(args) => {
            let problem = read_problem(&args.problem)?;
            let every = if args.trace.is_some() {
                args.trace_every.max(1)
            } else {
                0
            };
            let cfg = solver_config(&args.solver, every)?;
            let opts = plan_options(&args.plan)?;
            let res = solve(&problem, &cfg, &opts)?;
            if let (Some(path), Some(trace)) = (&args.trace, &res.trace) {
                write_file(path, &trace.to_csv())?;
            }
            let doc = result_doc(&res, &args.problem, &args.solver, &cfg, &args.plan);
            emit(out, &to_pretty(&doc))?;
            Ok(if res.diverged { 3 } else { 0 })
        }
        Command::Plan(args) => {
            let problem = read_problem(&args.problem)?;
            let opts = plan_options(&args.plan)?;
            let pl = plan(&problem, opts.r_in, &opts)?;
            let mut doc = pl.to_json_value();
            doc["config"] = json!({
                "problem": args.problem,
                "plan": plan_flags_doc(&args.plan),
            });
            emit(out, &to_pretty(&doc))?;
            Ok(0)
        }
        Command::Scale(args) => {
            let problem = read_problem(&args.problem)?;
            let policy = scale_policy(args.scale, args.kappa_bound)?.ok_or_else(|| {
                CliError::Usage("scale requires --scale exact or --scale estimate".into())
            })?;
            let sp = scale_problem(&problem, policy)?;
            let mut doc = serde_json::to_value(&sp).map_err(Error::from)?;
            doc["config"] = json!({ "problem": args.problem, "policy": policy });
            emit(out, &to_pretty(&doc))?;
            Ok(0)
        }
        Command::Sfdr(args) => run_sfdr(args, out),
        Command::Metrics(args) => run_metrics(args, out),
        Command::Sweep(args) => run_sweep(args, out),
    }
}

fn read_problem(path: &Path) -> Result<LinearProblem> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(LinearProblem::from_json(&text)?)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn scale_policy(arg: ScaleArg, kappa_bound: f64) -> Result<Option<ScalePolicy>> {
    Ok(match arg {
        ScaleArg::None => None,
        ScaleArg::Exact => Some(ScalePolicy::Exact),
        ScaleArg::Estimate => {
            if !(kappa_bound > 0.0 && kappa_bound.is_finite()) {
                return Err(CliError::Usage(format!(
                    "--kappa-bound must be positive, got {kappa_bound}"
                )));
            }
            Some(ScalePolicy::Estimate { kappa_bound })
        }
    })
}

fn solver_config(f: &SolverFlags, trace_decimation: usize) -> Result<SolverConfig> {
    let cfg = SolverConfig {
        k_vco: f.kvco,
        k_pd: f.kpd.unwrap_or(DEFAULT_V_DD / PI),
        eps_residual: f.eps,
        t_max: f.tmax,
        dt: f.dt,
        mode: match f.mode {
            ModeArg::Ideal => Mode::Ideal,
            ModeArg::Structural => Mode::Structural,
        },
        gram_fallback: !f.no_gram_fallback,
        stop_on_converge: f.stop_on_converge,
        trace_decimation,
        scale: scale_policy(f.scale, f.kappa_bound)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn plan_options(f: &PlanFlags) -> Result<PlanOptions> {
    if !(f.r_in > 0.0 && f.r_in.is_finite()) {
        return Err(CliError::Usage(format!(
            "--r-in must be positive, got {}",
            f.r_in
        )));
    }
    if f.memristor && f.quantize_bits.is_some() {
        return Err(CliError::Usage(
            "--memristor and --quantize-bits are mutually exclusive".into(),
        ));
    }
    if !f.memristor && f.write_noise != 0.0 {
        return Err(CliError::Usage("--write-noise requires --memristor".into()));
    }
    let quantizer = f
        .quantize_bits
        .map(|bits| QuantizerSpec::new(bits, f.r_in, f.r_unit, f.r_on))
        .transpose()?;
    let memristors = f.memristor.then_some(MemristorProgram {
        g_min: f.g_min,
        g_max: f.g_max,
        write_noise_sigma: f.write_noise,
        seed: f.seed,
    });
    if let Some(m) = &memristors {
        if !(m.g_min >= 0.0 && m.g_max > m.g_min && m.g_max.is_finite()) {
            return Err(CliError::Usage(
                "memristor bounds need 0 <= g_min < g_max".into(),
            ));
        }
        if !(m.write_noise_sigma >= 0.0 && m.write_noise_sigma.is_finite()) {
            return Err(CliError::Usage("--write-noise must be non-negative".into()));
        }
    }
    Ok(PlanOptions {
        r_in: f.r_in,
        orientation: match f.orientation {
            OrientationArg::Auto => Orientation::Auto,
            OrientationArg::Keep => Orientation::Keep,
            OrientationArg::Negate => Orientation::Negate,
        },
        quantizer,
        memristors,
    })
}

#[derive(Serialize)]
struct PlanFlagsDoc {
    r_in: f64,
    r_unit: f64,
    quantize_bits: Option<u32>,
    r_on: f64,
    memristor: Option<MemristorProgram>,
    orientation: Orientation,
}

fn plan_flags_doc(f: &PlanFlags) -> PlanFlagsDoc {
    PlanFlagsDoc {
        r_in: f.r_in,
        r_unit: f.r_unit,
        quantize_bits: f.quantize_bits,
        r_on: f.r_on,
        memristor: f.memristor.then_some(MemristorProgram {
            g_min: f.g_min,
            g_max: f.g_max,
            write_noise_sigma: f.write_noise,
            seed: f.seed,
        }),
        orientation: match f.orientation {
            OrientationArg::Auto => Orientation::Auto,
            OrientationArg::Keep => Orientation::Keep,
            OrientationArg::Negate => Orientation::Negate,
        },
    }
}

fn result_doc(
    res: &SolveResult,
    problem: &Path,
    flags: &SolverFlags,
    cfg: &SolverConfig,
    plan_flags: &PlanFlags,
) -> Value {
    let plan_summary = res.plan.as_ref().map(|p| {
        json!({
            "n": p.n,
            "negated": p.negated,
            "inverter_count": p.inverter_count,
            "main_integrators": p.main_integrators,
            "total_integrators": p.total_integrators,
            "quantized": p.quantizer.is_some(),
            "memristors": p.memristors.is_some(),
        })
    });
    let g = cfg.loop_gain();
    json!({
        "x": res.x.iter().collect::<Vec<_>>(),
        "residual_inf": res.residual_inf,
        "converged": res.converged,
        "t_converge_s": res.t_converge,
        "diverged": res.diverged,
        "stability": {
            "max_re_eig": res.stability.max_re_eig,
            "stable": res.stability.stable,
            "fallback_mode": res.route,
            "eig_method": res.stability.eig_method,
            "attempts": res.attempts,
        },
        "plan_summary": plan_summary,
        "scaling": res.scaling,
        "steps": res.steps,
        "dt_s": res.dt,
        "t_end_s": res.t_end,
        "config": {
            "problem": problem,
            "solver": cfg,
            "loop_gain_rad_s": g,
            "loop_gain_hz": g / TAU,
            "kappa_bound": flags.kappa_bound,
            "plan": plan_flags_doc(plan_flags),
        },
    })
}

fn run_sweep(args: &SweepArgs, out: Option<&Path>) -> Result<u8> {
    let problem = read_problem(&args.problem)?;
    let base = solver_config(&args.solver, 0)?;
    let opts = plan_options(&args.plan)?;
    let configs: Vec<SolverConfig> = args
        .kvco_list
        .iter()
        .map(|&k| {
            let cfg = SolverConfig { k_vco: k, ..base };
            cfg.validate().map(|_| cfg)
        })
        .collect::<std::result::Result<_, _>>()?;
    let results: Vec<SolveResult> = configs
        .par_iter()
        .map(|cfg| solve(&problem, cfg, &opts))
        .collect::<std::result::Result<_, _>>()?;

    let mut csv = String::from("k_vco_hz,converged,t_converge_s,residual_inf,route");
    for i in 0..problem.n() {
        let _ = write!(csv, ",x{i}");
    }
    csv.push('\n');
    for (cfg, res) in configs.iter().zip(&results) {
        let route = serde_json::to_value(res.route).map_err(Error::from)?;
        let _ = write!(
            csv,
            "{:.8e},{},{},{:.8e},{}",
            cfg.k_vco,
            res.converged,
            res.t_converge.map_or(String::new(), |t| format!("{t:.8e}")),
            res.residual_inf,
            route.as_str().unwrap_or_default(),
        );
        for v in res.x.iter() {
            let _ = write!(csv, ",{v:.8e}");
        }
        csv.push('\n');
    }
    emit(out, &csv)?;
    Ok(0)
}

fn method(m: MethodArg) -> PhaseGenMethod {
    match m {
        MethodArg::DirectLevelShift16 => PhaseGenMethod::DirectLevelShift16,
        MethodArg::Johnson16 => PhaseGenMethod::Johnson16,
        MethodArg::Hybrid4x4 => PhaseGenMethod::Hybrid4x4,
    }
}

fn run_sfdr(args: &SfdrArgs, out: Option<&Path>) -> Result<u8> {
    if !(10..=24).contains(&args.samples_log2) {
        return Err(CliError::Usage("--samples-log2 must be in [10, 24]".into()));
    }
    let cfg = PhaseConfig {
        m_phases: args.phases,
        f_ref: args.f_ref,
        f0: args.f0,
        v0: args.v0,
        k_vco: args.kvco,
        v_dd: args.vdd,
        method: method(args.method),
        dt: args.dt.unwrap_or(PhaseConfig::default().dt),
        polarity: Polarity::Inverting,
    };
    cfg.validate()?;
    if !(args.post_filter_hz >= 0.0 && args.post_filter_hz.is_finite()) {
        return Err(CliError::Usage(
            "--post-filter-hz must be non-negative".into(),
        ));
    }
    let n = 1usize << args.samples_log2;
    let f_sig = args.tone_bins as f64 / (n as f64 * cfg.dt);
    let input: Vec<f64> = (0..args.warmup + n)
        .map(|k| args.dc + args.tone_amp * (TAU * f_sig * k as f64 * cfg.dt).sin())
        .collect();
    let raw = simulate_phase_lowpass(&input, args.weight, &cfg)?;
    let filtered = if args.post_filter_hz > 0.0 {
        lowpass_filter(&raw, args.post_filter_hz, cfg.dt, args.post_filter_order)
    } else {
        raw.clone()
    };
    let report = sfdr(&filtered[args.warmup..], f_sig, &cfg)?;
    let (pwm_hz, pwm_db) =
        dominant_tone(&raw[args.warmup..], cfg.dt, 0.5 * cfg.f_ref, 0.5 / cfg.dt)?;
    if let Some(path) = &args.spectrum {
        write_file(path, &spectrum_csv(&report))?;
    }
    let doc = json!({
        "sfdr_db": report.sfdr_db,
        "fundamental_hz": report.fundamental_hz,
        "worst_spur_hz": report.worst_spur_hz,
        "pwm_spur_hz": pwm_hz,
        "pwm_spur_over_f_ref": pwm_hz / cfg.f_ref,
        "pwm_spur_db": pwm_db,
        "config": {
            "phase": cfg,
            "weight": args.weight,
            "dc": args.dc,
            "tone_amp": args.tone_amp,
            "tone_hz": f_sig,
            "samples": n,
            "warmup": args.warmup,
            "post_filter_hz": args.post_filter_hz,
            "post_filter_order": args.post_filter_order,
        },
    });
    emit(out, &to_pretty(&doc))?;
    Ok(0)
}

fn run_metrics(args: &MetricsArgs, out: Option<&Path>) -> Result<u8> {
    let problem = args.problem.as_deref().map(read_problem).transpose()?;
    let n = match (args.n, &problem) {
        (Some(n), Some(p)) if n != p.n() => {
            return Err(CliError::Usage(format!(
                "--n {n} disagrees with the problem dimension {}",
                p.n()
            )))
        }
        (_, Some(p)) => p.n(),
        (Some(n), None) if n >= 1 => n,
        _ => {
            return Err(CliError::Usage(
                "metrics needs --n >= 1 or --problem".into(),
            ))
        }
    };
    let opts = plan_options(&args.plan)?;
    let integrators = match (args.integrators, &problem) {
        (Some(k), _) => k,
        (None, Some(p)) => plan(p, opts.r_in, &opts)?.total_integrators,
        (None, None) => integrator_count(n, IntegratorScheme::AfterReuse),
    };
    let t_s = match (args.time_s, &problem) {
        (Some(t), _) => t,
        (None, Some(p)) => {
            let cfg = solver_config(&args.solver, 0)?;
            let res = solve(p, &cfg, &opts)?;
            res.t_converge.ok_or_else(|| {
                CliError::Diverged(format!("no convergence within {:e} s", cfg.t_max))
            })?
        }
        (None, None) => {
            return Err(CliError::Usage(
                "metrics needs --time-s or --problem".into(),
            ))
        }
    };
    let power = power_for_integrators(integrators, args.per_integrator_mw)?;
    let mut report = efficiency(ops_count(n), power, t_s)?;
    report.integrator_count = Some(integrators);
    report.level_shifters = args.phase_method.map(|m| {
        effective_kvco(&PhaseConfig {
            method: method(m),
            ..PhaseConfig::default()
        })
        .1
    });
    let text = match args.format {
        FormatArg::Csv => format!("{TABLE_HEADER}\n{}\n", report.table_row(&args.label, n)),
        FormatArg::Json => to_pretty(&json!({
            "report": report,
            "table_row": report.table_row(&args.label, n),
            "config": {
                "n": n,
                "problem": args.problem,
                "integrators": integrators,
                "per_integrator_mw": args.per_integrator_mw,
                "time_s": t_s,
                "label": args.label,
            },
        })),
    };
    emit(out, &text)?;
    Ok(0)
}
