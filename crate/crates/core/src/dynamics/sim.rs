use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use super::system::{stability_report, StateSpace};
use super::{SolveResult, SolveRoute, SolverConfig};
use crate::error::Result;
use crate::linalg::row_sum_norm;

/// Consecutive in-threshold steps required before convergence is declared.
pub const CONVERGENCE_WINDOW: usize = 10;

/// State magnitude treated as numerical divergence.
pub const OVERFLOW_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub samples: Vec<TraceSample>,
}

impl Trace {
    /// `t_s,x0,...,residual_inf` with 9 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.samples.first().map_or(0, |s| s.x.len());
        let mut out = String::from("t_s");
        for i in 0..n {
            let _ = write!(out, ",x{i}");
        }
        out.push_str(",residual_inf\n");
        for s in &self.samples {
            let _ = write!(out, "{:.8e}", s.t);
            for v in &s.x {
                let _ = write!(out, ",{v:.8e}");
            }
            let _ = writeln!(out, ",{:.8e}", s.residual);
        }
        out
    }
}

/// Classical RK4 for `dz/dt = m z + f(t)` with reusable stage buffers.
pub(crate) struct Rk4 {
    k1: DVector<f64>,
    k2: DVector<f64>,
    k3: DVector<f64>,
    k4: DVector<f64>,
    tmp: DVector<f64>,
}

impl Rk4 {
    pub(crate) fn new(dim: usize) -> Self {
        let z = || DVector::zeros(dim);
        Self {
            k1: z(),
            k2: z(),
            k3: z(),
            k4: z(),
            tmp: z(),
        }
    }

    /// Advances `z` by `dt`; `f0`, `fh`, `f1` are the forcing at `t`, `t + dt/2`, `t + dt`.
    pub(crate) fn step(
        &mut self,
        m: &DMatrix<f64>,
        z: &mut DVector<f64>,
        dt: f64,
        f0: &DVector<f64>,
        fh: &DVector<f64>,
        f1: &DVector<f64>,
    ) {
        self.k1.copy_from(f0);
        self.k1.gemv(1.0, m, z, 1.0);

        self.tmp.copy_from(z);
        self.tmp.axpy(0.5 * dt, &self.k1, 1.0);
        self.k2.copy_from(fh);
        self.k2.gemv(1.0, m, &self.tmp, 1.0);

        self.tmp.copy_from(z);
        self.tmp.axpy(0.5 * dt, &self.k2, 1.0);
        self.k3.copy_from(fh);
        self.k3.gemv(1.0, m, &self.tmp, 1.0);

        self.tmp.copy_from(z);
        self.tmp.axpy(dt, &self.k3, 1.0);
        self.k4.copy_from(f1);
        self.k4.gemv(1.0, m, &self.tmp, 1.0);

        self.k2 += &self.k3;
        self.k1.axpy(2.0, &self.k2, 1.0);
        self.k1 += &self.k4;
        z.axpy(dt / 6.0, &self.k1, 1.0);
    }
}

/// `0.1 / ||m||_inf`, which bounds `dt * rho(m)` by 0.1.
pub(crate) fn auto_dt(m: &DMatrix<f64>) -> f64 {
    0.1 / row_sum_norm(m)
}

struct Residual {
    buf: DVector<f64>,
}

impl Residual {
    fn eval(&mut self, ss: &StateSpace, z: &DVector<f64>) -> f64 {
        let x = z.rows(0, ss.n_main);
        self.buf.copy_from(&ss.realized_b);
        self.buf.gemv(-1.0, &ss.realized_a, &x, 1.0);
        self.buf.amax()
    }
}

/// Fixed-step RK4 from the zero state.
///
/// `t_converge` is the start of the final run of steps with residual at or below
/// `eps_residual`; the run must cover at least [`CONVERGENCE_WINDOW`] steps.
/// An unstable system is still integrated, ending early only on overflow.
pub fn simulate(ss: &StateSpace, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let stability = stability_report(ss)?;
    let dim = ss.dim();
    let dt = if cfg.dt > 0.0 { cfg.dt } else { auto_dt(&ss.m) };
    let n_steps = (cfg.t_max / dt).ceil() as usize;

    let mut z = DVector::zeros(dim);
    let mut rk = Rk4::new(dim);
    let mut res = Residual {
        buf: DVector::zeros(ss.n_main),
    };
    let mut trace = (cfg.trace_decimation > 0).then(Trace::default);
    let record = |trace: &mut Option<Trace>, t: f64, z: &DVector<f64>, r: f64| {
        if let Some(tr) = trace.as_mut() {
            tr.samples.push(TraceSample {
                t,
                x: z.rows(0, ss.n_main).iter().copied().collect(),
                residual: r,
            });
        }
    };

    let mut r = res.eval(ss, &z);
    let mut run_start = (r <= cfg.eps_residual).then_some(0usize);
    record(&mut trace, 0.0, &z, r);
    let mut peak: f64 = 0.0;
    let mut diverged = false;
    let mut step = 0;
    while step < n_steps {
        rk.step(&ss.m, &mut z, dt, &ss.f, &ss.f, &ss.f);
        step += 1;
        let amax = z.amax();
        peak = peak.max(amax);
        if !amax.is_finite() || amax > OVERFLOW_LIMIT {
            log::warn!(
                "state magnitude {amax:.3e} at t = {:.3e} s",
                step as f64 * dt
            );
            diverged = true;
            break;
        }
        r = res.eval(ss, &z);
        if r <= cfg.eps_residual {
            run_start.get_or_insert(step);
        } else {
            run_start = None;
        }
        if cfg.trace_decimation > 0 && step % cfg.trace_decimation == 0 {
            record(&mut trace, step as f64 * dt, &z, r);
        }
        if cfg.stop_on_converge && run_start.is_some_and(|s| step - s + 1 >= CONVERGENCE_WINDOW) {
            break;
        }
    }
    if diverged {
        r = res.eval(ss, &z);
    } else if cfg.trace_decimation > 0 && step % cfg.trace_decimation != 0 {
        record(&mut trace, step as f64 * dt, &z, r);
    }

    let converged = !diverged && run_start.is_some_and(|s| step - s + 1 >= CONVERGENCE_WINDOW);
    Ok(SolveResult {
        x: z.rows(0, ss.n_main).into_owned(),
        residual_inf: r,
        converged,
        t_converge: if converged {
            run_start.map(|s| s as f64 * dt)
        } else {
            None
        },
        stability,
        route: SolveRoute::Planned,
        attempts: Vec::new(),
        diverged,
        peak_state: peak,
        steps: step,
        dt,
        t_end: step as f64 * dt,
        trace,
        plan: None,
        scaling: None,
    })
}
