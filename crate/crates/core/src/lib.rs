//! Behavioral simulation and compilation toolchain for analog linear-equation
//! solvers built from ring-oscillator (VCO) integrators and resistive or
//! memristive feedback networks.
//!
//! The pipeline for a system `A x = b`:
//!
//! - [`problem`]: representation, range-safety scaling and the direct oracle
//! - [`netlist`]: compilation into signed feedback paths, inverter census,
//!   resistor-ladder quantization and memristor programming
//! - [`dynamics`]: state-space assembly, stability analysis and RK4 simulation
//! - [`phase`]: phase-domain model of the integrator (XOR detection, multi-phase
//!   PWM) and spectral analysis
//! - [`metrics`]: operation count, power, energy and efficiency figures
//!
//! ```
//! use vcosolve::{LinearProblem, SolverConfig, solve, PlanOptions};
//!
//! let p = LinearProblem::from_rows(&[vec![-4.0, -1.5], vec![-2.0, -1.0]], &[0.45, 0.24]).unwrap();
//! let cfg = SolverConfig { t_max: 1e-6, ..SolverConfig::default() };
//! let res = solve(&p, &cfg, &PlanOptions::default()).unwrap();
//! assert!((res.x[0] + 0.09).abs() < 1e-3);
//! assert!((res.x[1] + 0.06).abs() < 1e-3);
//! ```

pub mod dynamics;
pub mod error;
mod linalg;
pub mod metrics;
pub mod netlist;
pub mod phase;
pub mod problem;

pub use dynamics::{
    ac_response, bandwidth, build_ideal_system, build_system, probe_bandwidth, simulate, solve,
    stability_report, Mode, SolveResult, SolveRoute, SolverConfig, StabilityReport, StateSpace,
};
pub use error::{Error, Result};
pub use metrics::{efficiency, ops_count, power_estimate, EnergyReport};
pub use netlist::{
    integrator_count, plan, program_memristors, quantize_entry, realized_matrix, CircuitPlan,
    FeedbackPath, IntegratorScheme, MemristorBank, Orientation, PathSign, PlanOptions,
    QuantizerSpec,
};
pub use phase::{PhaseConfig, PhaseGenMethod, SpectralReport};
pub use problem::{
    direct_solve_oracle, inf_norm, inv_inf_norm, scale_problem, unscale_solution, LinearProblem,
    ScalePolicy, ScaledProblem,
};
