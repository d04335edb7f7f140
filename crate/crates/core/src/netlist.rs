//! Compilation of a [`LinearProblem`] into the integrator/resistor network.
//!
//! Each coefficient `a_ij` becomes a feedback resistor from output `j` to the
//! summing node of integrator `i`, realizing the weight `w_ij = R_in,i / R_f,ij`.
//! A negative coefficient is wired directly (`a = -w`); a positive one goes
//! through an integrator-based inverter (`a = +w`). Because every inverter costs
//! an integrator, the plan negates the whole system when positives outnumber
//! negatives.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::LinearProblem;

pub const DEFAULT_R_IN: f64 = 2000.0;
pub const DEFAULT_R_UNIT: f64 = 1000.0;

/// Number of programmable conductance levels per memristor.
pub const MEMRISTOR_LEVELS: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathSign {
    /// Negative coefficient, resistor straight from the output.
    Direct,
    /// Positive coefficient, resistor driven by an inverter.
    ViaInverter,
    /// Zero coefficient, no branch.
    Disconnected,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedbackPath {
    pub row: usize,
    pub col: usize,
    pub sign: PathSign,
    pub r_feedback_ohms: Option<f64>,
    pub code: Option<u32>,
    /// `R_in / R_f` as built (after quantization or programming).
    pub realized_weight: f64,
    /// `|a_ij|` requested by the compiled matrix.
    #[serde(skip)]
    pub target_weight: f64,
}

impl FeedbackPath {
    /// Signed coefficient this path contributes to the compiled matrix.
    pub fn coefficient(&self) -> f64 {
        match self.sign {
            PathSign::Direct => -self.realized_weight,
            PathSign::ViaInverter => self.realized_weight,
            PathSign::Disconnected => 0.0,
        }
    }

    pub fn is_connected(&self) -> bool {
        self.sign != PathSign::Disconnected
    }
}

/// Binary-weighted poly-resistor ladder.
///
/// Branch 0 (`R_unit`, always closed) sets the minimum magnitude `R_in / R_unit`;
/// bit `k` adds a branch of `R_unit / 2^k`. With ideal switches code `c`
/// realizes `(1 + c) * R_in / R_unit`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    pub bits: u32,
    pub r_unit: f64,
    pub r_in: f64,
    pub r_on: f64,
}

impl QuantizerSpec {
    pub fn new(bits: u32, r_in: f64, r_unit: f64, r_on: f64) -> Result<Self> {
        let q = Self {
            bits,
            r_unit,
            r_in,
            r_on,
        };
        q.validate()?;
        Ok(q)
    }

    fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.bits) {
            return Err(Error::InvalidConfig(format!(
                "quantizer bits must be in [1, 16], got {}",
                self.bits
            )));
        }
        if !(self.r_unit > 0.0 && self.r_unit.is_finite()) {
            return Err(Error::InvalidConfig("r_unit must be positive".into()));
        }
        if !(self.r_in > 0.0 && self.r_in.is_finite()) {
            return Err(Error::InvalidConfig("r_in must be positive".into()));
        }
        if !(self.r_on >= 0.0 && self.r_on.is_finite()) {
            return Err(Error::InvalidConfig("r_on must be non-negative".into()));
        }
        Ok(())
    }

    /// Magnitude increment per code, `R_in / R_unit`.
    pub fn step(&self) -> f64 {
        self.r_in / self.r_unit
    }

    pub fn max_code(&self) -> u32 {
        (1u32 << self.bits) - 1
    }

    /// Coefficient magnitude realized by `code` including switch resistance.
    pub fn magnitude(&self, code: u32) -> f64 {
        if self.r_on == 0.0 {
            return (1.0 + code as f64) * self.step();
        }
        let mut g = 1.0 / (self.r_unit + self.r_on);
        for k in 0..self.bits {
            if code >> k & 1 == 1 {
                g += 1.0 / (self.r_unit / f64::from(1u32 << k) + self.r_on);
            }
        }
        self.r_in * g
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantized {
    /// `None` for a zero target (no branch).
    pub code: Option<u32>,
    /// Signed coefficient actually realized.
    pub realized: f64,
}

pub fn quantize_entry(target: f64, q: &QuantizerSpec) -> Result<Quantized> {
    q.validate()?;
    if !target.is_finite() {
        return Err(Error::OutOfRange {
            target,
            max: q.magnitude(q.max_code()),
        });
    }
    if target == 0.0 {
        return Ok(Quantized {
            code: None,
            realized: 0.0,
        });
    }
    let step = q.step();
    let top = (1.0 + q.max_code() as f64) * step;
    if target.abs() > top + 0.5 * step {
        return Err(Error::OutOfRange { target, max: top });
    }
    let code = (target.abs() / step - 1.0)
        .round()
        .clamp(0.0, q.max_code() as f64) as u32;
    Ok(Quantized {
        code: Some(code),
        realized: target.signum() * q.magnitude(code),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Negate when positive coefficients outnumber negative ones.
    #[default]
    Auto,
    Keep,
    Negate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanOptions {
    /// Input resistance [`crate::dynamics::solve`] passes to [`plan`].
    pub r_in: f64,
    pub orientation: Orientation,
    pub quantizer: Option<QuantizerSpec>,
    /// Replace feedback resistors with programmed memristors.
    pub memristors: Option<MemristorProgram>,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            r_in: DEFAULT_R_IN,
            orientation: Orientation::Auto,
            quantizer: None,
            memristors: None,
        }
    }
}

/// Programmable-conductance device array standing in for the resistor ladders.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemristorBank {
    pub g_min: f64,
    pub g_max: f64,
    pub write_noise_sigma: f64,
    pub devices: Vec<MemristorDevice>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MemristorDevice {
    pub row: usize,
    pub col: usize,
    pub target_siemens: f64,
    pub siemens: f64,
    pub level: u32,
}

/// Device limits and write noise for [`program_memristors`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemristorProgram {
    pub g_min: f64,
    pub g_max: f64,
    pub write_noise_sigma: f64,
    pub seed: u64,
}

impl Default for MemristorProgram {
    fn default() -> Self {
        Self {
            g_min: 10e-6,
            g_max: 2.56e-3,
            write_noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl MemristorProgram {
    pub fn level_step(&self) -> f64 {
        (self.g_max - self.g_min) / f64::from(MEMRISTOR_LEVELS - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CircuitPlan {
    pub n: usize,
    pub r_in: Vec<f64>,
    /// Row-major `n x n` grid.
    pub paths: Vec<FeedbackPath>,
    /// Input voltages applied through `R_in` (negated with the matrix).
    pub compiled_b: Vec<f64>,
    pub negated: bool,
    pub inverter_count: usize,
    pub main_integrators: usize,
    pub total_integrators: usize,
    pub quantizer: Option<QuantizerSpec>,
    pub memristors: Option<MemristorBank>,
}

impl CircuitPlan {
    pub fn path(&self, row: usize, col: usize) -> &FeedbackPath {
        &self.paths[row * self.n + col]
    }

    pub fn row_paths(&self, row: usize) -> &[FeedbackPath] {
        &self.paths[row * self.n..(row + 1) * self.n]
    }

    /// Paths that need an inverter, in row-major order.
    pub fn inverter_paths(&self) -> impl Iterator<Item = &FeedbackPath> {
        self.paths
            .iter()
            .filter(|p| p.sign == PathSign::ViaInverter)
    }

    /// `gamma_i = 1 + sum_j w_ij`, the passive summing-node divider.
    pub fn gamma(&self, row: usize) -> f64 {
        1.0 + self
            .row_paths(row)
            .iter()
            .map(|p| p.realized_weight)
            .sum::<f64>()
    }

    /// Compiled (possibly negated) coefficient matrix as built.
    pub fn compiled_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.path(i, j).coefficient())
    }

    pub fn census(&self) -> Census {
        Census {
            used: IntegratorTally {
                main: self.main_integrators,
                inverters: self.inverter_count,
                total: self.total_integrators,
            },
            provisioned: IntegratorTally {
                main: self.n,
                inverters: self.n * self.n / 2,
                total: integrator_count(self.n, IntegratorScheme::AfterReuse),
            },
            before_reuse: integrator_count(self.n, IntegratorScheme::BeforeReuse),
            mimo_symmetric: integrator_count(self.n, IntegratorScheme::MimoSymmetric),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IntegratorTally {
    pub main: usize,
    pub inverters: usize,
    pub total: usize,
}

/// Integrators this plan uses versus what a fully programmable array of the same
/// size must provide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Census {
    pub used: IntegratorTally,
    /// Worst case over all sign patterns once the negation rule is applied.
    pub provisioned: IntegratorTally,
    pub before_reuse: usize,
    pub mimo_symmetric: usize,
}

/// Counts `(positive, negative)` nonzero entries.
pub fn sign_counts(a: &DMatrix<f64>) -> (usize, usize) {
    a.iter().fold((0, 0), |(p, m), &v| {
        if v > 0.0 {
            (p + 1, m)
        } else if v < 0.0 {
            (p, m + 1)
        } else {
            (p, m)
        }
    })
}

/// Whether the census rule negates `a`: strictly more positives than negatives.
pub fn prefers_negation(a: &DMatrix<f64>) -> bool {
    let (pos, neg) = sign_counts(a);
    pos > neg
}

pub fn plan(p: &LinearProblem, r_in_default: f64, options: &PlanOptions) -> Result<CircuitPlan> {
    if !(r_in_default > 0.0 && r_in_default.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "input resistance must be positive, got {r_in_default}"
        )));
    }
    if let Some(q) = &options.quantizer {
        q.validate()?;
        if q.r_in != r_in_default {
            return Err(Error::InvalidConfig(format!(
                "quantizer R_in {} differs from plan R_in {}",
                q.r_in, r_in_default
            )));
        }
    }
    let n = p.n();
    for i in 0..n {
        for j in 0..n {
            if !p.a()[(i, j)].is_finite() {
                return Err(Error::NonFiniteEntry { row: i, col: j });
            }
        }
    }

    let negated = match options.orientation {
        Orientation::Auto => prefers_negation(p.a()),
        Orientation::Keep => false,
        Orientation::Negate => true,
    };
    let sign = if negated { -1.0 } else { 1.0 };

    let mut paths = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let c = sign * p.a()[(i, j)];
            paths.push(compile_entry(
                i,
                j,
                c,
                r_in_default,
                options.quantizer.as_ref(),
            )?);
        }
    }
    let inverter_count = paths
        .iter()
        .filter(|p| p.sign == PathSign::ViaInverter)
        .count();

    let mut plan = CircuitPlan {
        n,
        r_in: vec![r_in_default; n],
        paths,
        compiled_b: p.b().iter().map(|v| sign * v).collect(),
        negated,
        inverter_count,
        main_integrators: n,
        total_integrators: n + inverter_count,
        quantizer: options.quantizer,
        memristors: None,
    };
    if let Some(prog) = &options.memristors {
        plan = program_memristors(&plan, prog)?;
    }
    Ok(plan)
}

fn compile_entry(
    row: usize,
    col: usize,
    c: f64,
    r_in: f64,
    quantizer: Option<&QuantizerSpec>,
) -> Result<FeedbackPath> {
    if c == 0.0 {
        return Ok(FeedbackPath {
            row,
            col,
            sign: PathSign::Disconnected,
            r_feedback_ohms: None,
            code: None,
            realized_weight: 0.0,
            target_weight: 0.0,
        });
    }
    let (code, weight) = match quantizer {
        Some(q) => {
            let qz = quantize_entry(c, q)?;
            (qz.code, qz.realized.abs())
        }
        None => (None, c.abs()),
    };
    Ok(FeedbackPath {
        row,
        col,
        sign: if c < 0.0 {
            PathSign::Direct
        } else {
            PathSign::ViaInverter
        },
        r_feedback_ohms: Some(r_in / weight),
        code,
        realized_weight: weight,
        target_weight: c.abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorScheme {
    /// One inverter per coefficient, worst case all positive.
    BeforeReuse,
    /// Negation rule caps inverters at `floor(n^2 / 2)`.
    AfterReuse,
    /// Symmetric matrices store one triangle.
    MimoSymmetric,
}

pub fn integrator_count(n: usize, scheme: IntegratorScheme) -> usize {
    match scheme {
        IntegratorScheme::BeforeReuse => n * n + n,
        IntegratorScheme::AfterReuse => n * n / 2 + n,
        IntegratorScheme::MimoSymmetric => (n * n + n) / 4 + n,
    }
}

/// Replaces every connected feedback branch with a memristor programmed to the
/// ideal conductance `w / R_in`, perturbed by seeded multiplicative write noise
/// and snapped to one of [`MEMRISTOR_LEVELS`] evenly spaced levels.
pub fn program_memristors(plan: &CircuitPlan, prog: &MemristorProgram) -> Result<CircuitPlan> {
    if !(prog.g_min >= 0.0 && prog.g_max > prog.g_min && prog.g_max.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "memristor bounds must satisfy 0 <= g_min < g_max, got [{}, {}]",
            prog.g_min, prog.g_max
        )));
    }
    if !(prog.write_noise_sigma >= 0.0 && prog.write_noise_sigma.is_finite()) {
        return Err(Error::InvalidConfig(
            "write noise must be non-negative".into(),
        ));
    }
    let noise = if prog.write_noise_sigma > 0.0 {
        Some(Normal::new(0.0, prog.write_noise_sigma).expect("finite sigma"))
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(prog.seed);
    let step = prog.level_step();
    let top = f64::from(MEMRISTOR_LEVELS - 1);

    let mut out = plan.clone();
    let mut devices = Vec::new();
    for path in out.paths.iter_mut().filter(|p| p.is_connected()) {
        let r_in = plan.r_in[path.row];
        let target = path.target_weight / r_in;
        if target < prog.g_min || target > prog.g_max {
            return Err(Error::TargetOutOfDeviceRange {
                row: path.row,
                col: path.col,
                conductance: target,
                g_min: prog.g_min,
                g_max: prog.g_max,
            });
        }
        let eps = noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
        let written = (target * (1.0 + eps)).clamp(prog.g_min, prog.g_max);
        let level = ((written - prog.g_min) / step).round().clamp(0.0, top) as u32;
        let g = prog.g_min + f64::from(level) * step;

        path.realized_weight = r_in * g;
        path.r_feedback_ohms = Some(1.0 / g);
        path.code = None;
        devices.push(MemristorDevice {
            row: path.row,
            col: path.col,
            target_siemens: target,
            siemens: g,
            level,
        });
    }
    out.quantizer = None;
    out.memristors = Some(MemristorBank {
        g_min: prog.g_min,
        g_max: prog.g_max,
        write_noise_sigma: prog.write_noise_sigma,
        devices,
    });
    Ok(out)
}

/// The system `(A_hat, b_hat)` the circuit realizes, in the caller's orientation.
pub fn realized_matrix(plan: &CircuitPlan) -> (DMatrix<f64>, DVector<f64>) {
    let sign = if plan.negated { -1.0 } else { 1.0 };
    let a = plan.compiled_matrix() * sign;
    let b = DVector::from_iterator(plan.n, plan.compiled_b.iter().map(|v| sign * v));
    (a, b)
}

#[derive(Serialize)]
struct PlanDump<'a> {
    n: usize,
    negated: bool,
    r_in_ohms: &'a [f64],
    compiled_b: &'a [f64],
    census: Census,
    paths: &'a [FeedbackPath],
    quantizer: Option<&'a QuantizerSpec>,
    memristors: Option<&'a MemristorBank>,
}

impl CircuitPlan {
    /// Structured dump consumed by the `plan` subcommand.
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(PlanDump {
            n: self.n,
            negated: self.negated,
            r_in_ohms: &self.r_in,
            compiled_b: &self.compiled_b,
            census: self.census(),
            paths: &self.paths,
            quantizer: self.quantizer.as_ref(),
            memristors: self.memristors.as_ref(),
        })
        .expect("plan serializes")
    }
}
