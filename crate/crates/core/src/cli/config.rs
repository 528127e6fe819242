//! Run configuration: one JSON document with a versioned `schema` field.
//! Unknown keys are rejected at every level.

use std::collections::BTreeMap;

use serde::Deserialize;

use super::CliError;
use crate::certificate::{Certificate, CertificateBundle};
use crate::error::Error;
use crate::forcing::ForcingFunction;
use crate::memory::MemoryKernel;
use crate::mild::{certify, DecomposeOptions, MildProblem, SolverConfig};
use crate::modal::check_as1;
use crate::plate::{build_plate_model, plate_bundle, PlateProblem};
use crate::semigroup::{smoothing_constants, SmoothingConstants};
use crate::spectral::SpectralModel;

pub const SCHEMA: &str = "volterra-paa/1";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub kernel: MemoryKernel,
    #[serde(default = "ForcingFunction::zero")]
    pub forcing: ForcingFunction,
    #[serde(default)]
    pub smoothing: SmoothingSpec,
    pub solver: SolverSpec,
    #[serde(default)]
    pub checks: ChecksSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub decompose: DecomposeSpec,
    /// Dotted config paths mapped to the values to sweep over.
    #[serde(default)]
    pub sweep: BTreeMap<String, Vec<serde_json::Value>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Raw {
        eigenvalues: Vec<f64>,
        #[serde(default)]
        multiplicities: Option<Vec<usize>>,
        alpha: f64,
        gamma: f64,
        #[serde(default = "half")]
        beta: f64,
    },
    Plate {
        domain_lengths: Vec<f64>,
        max_wavenumber: usize,
        gamma: f64,
        eta: f64,
    },
}

fn half() -> f64 {
    0.5
}

/// `M(beta)` override and the rate `delta` (raw problems only; plates use
/// `delta = eta`). Without `delta` the spectral gap `delta0` is used.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingSpec {
    #[serde(default)]
    pub m_override: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub dt: f64,
    pub window: [f64; 2],
    pub ball_radius: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_fp_tol")]
    pub fp_tol: f64,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
    /// Derived from `tail_tol` when absent.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default = "default_pairs")]
    pub residual_pairs: usize,
    #[serde(default)]
    pub inject_fault: bool,
}

fn default_max_iters() -> usize {
    200
}
fn default_fp_tol() -> f64 {
    1e-10
}
fn default_tail_tol() -> f64 {
    1e-9
}
fn default_pairs() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksSpec {
    #[serde(default = "default_budget")]
    pub sample_budget: usize,
}

impl Default for ChecksSpec {
    fn default() -> Self {
        Self { sample_budget: default_budget() }
    }
}

fn default_budget() -> usize {
    2000
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Coefficient slots written to the trajectory CSV; all when absent.
    #[serde(default)]
    pub modes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeSpec {
    #[serde(default = "default_r_values")]
    pub r_values: Vec<f64>,
    #[serde(default)]
    pub shifts: Vec<f64>,
    #[serde(default)]
    pub probes: Vec<f64>,
    #[serde(default = "default_diag_tol")]
    pub shift_tol: f64,
    #[serde(default = "default_diag_tol")]
    pub ergodic_tol: f64,
}

impl Default for DecomposeSpec {
    fn default() -> Self {
        Self {
            r_values: default_r_values(),
            shifts: Vec::new(),
            probes: Vec::new(),
            shift_tol: default_diag_tol(),
            ergodic_tol: default_diag_tol(),
        }
    }
}

fn default_r_values() -> Vec<f64> {
    vec![10.0, 100.0]
}
fn default_diag_tol() -> f64 {
    1e-2
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

impl RunConfig {
    pub fn from_value(value: serde_json::Value) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| usage(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| usage(format!("invalid config: {e}")))?;
        Self::from_value(value)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.schema != SCHEMA {
            return Err(usage(format!("unsupported schema {:?}, expected {SCHEMA:?}", self.schema)));
        }
        let s = &self.solver;
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(usage(format!("solver.{name} = {v} must be positive")))
            }
        };
        positive("dt", s.dt)?;
        positive("ball_radius", s.ball_radius)?;
        positive("fp_tol", s.fp_tol)?;
        positive("tail_tol", s.tail_tol)?;
        if let Some(h) = s.horizon {
            positive("horizon", h)?;
        }
        if s.max_iters == 0 {
            return Err(usage("solver.max_iters must be >= 1"));
        }
        if !(s.window[0].is_finite() && s.window[1].is_finite() && s.window[1] >= s.window[0]) {
            return Err(usage(format!("solver.window {:?} is not an interval", s.window)));
        }
        if self.checks.sample_budget == 0 {
            return Err(usage("checks.sample_budget must be >= 1"));
        }
        if let Some(0) = self.output.modes {
            return Err(usage("output.modes must be >= 1"));
        }
        if let Some(m) = self.smoothing.m_override {
            positive("m_override", m).map_err(|_| usage(format!("smoothing.m_override = {m} must be positive")))?;
        }
        if matches!(self.problem, ProblemSpec::Plate { .. }) && self.smoothing.delta.is_some() {
            return Err(usage("smoothing.delta does not apply to plate problems (delta = eta)"));
        }
        let d = &self.decompose;
        if d.r_values.is_empty() || d.r_values.iter().any(|r| !(*r > 0.0)) {
            return Err(usage("decompose.r_values must be positive and nonempty"));
        }
        self.kernel.validate().map_err(usage)?;
        self.forcing.aa.validate().map_err(usage)?;
        self.forcing.ergodic.validate().map_err(usage)?;
        self.model()?;
        Ok(())
    }

    pub fn plate(&self) -> Option<PlateProblem> {
        match &self.problem {
            ProblemSpec::Plate { domain_lengths, max_wavenumber, gamma, eta } => Some(PlateProblem {
                domain_lengths: domain_lengths.clone(),
                max_wavenumber: *max_wavenumber,
                gamma: *gamma,
                eta: *eta,
                kernel: self.kernel,
                forcing: self.forcing.clone(),
            }),
            ProblemSpec::Raw { .. } => None,
        }
    }

    pub fn model(&self) -> Result<SpectralModel, CliError> {
        match &self.problem {
            ProblemSpec::Raw { eigenvalues, multiplicities, alpha, gamma, beta } => {
                let mult = multiplicities.clone().unwrap_or_else(|| vec![1; eigenvalues.len()]);
                SpectralModel::with_beta(eigenvalues.clone(), mult, *alpha, *gamma, *beta).map_err(usage)
            }
            ProblemSpec::Plate { .. } => build_plate_model(&self.plate().unwrap()).map_err(usage),
        }
    }

    /// Solver settings; the horizon is left at zero when not configured.
    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            horizon: s.horizon.unwrap_or(0.0),
            dt: s.dt,
            window: (s.window[0], s.window[1]),
            ball_radius: s.ball_radius,
            max_iters: s.max_iters,
            fp_tol: s.fp_tol,
            tail_tol: s.tail_tol,
            sample_budget: self.checks.sample_budget,
            residual_pairs: s.residual_pairs,
            seed: self.seed,
            inject_fault: s.inject_fault,
        }
    }

    pub fn decompose_options(&self) -> DecomposeOptions {
        let d = &self.decompose;
        DecomposeOptions {
            r_values: d.r_values.clone(),
            shifts: d.shifts.clone(),
            probes: d.probes.clone(),
            shift_tol: d.shift_tol,
            ergodic_tol: d.ergodic_tol,
        }
    }

    fn raw_smoothing(&self, model: &SpectralModel, delta0: f64) -> Result<SmoothingConstants, CliError> {
        let delta = self.smoothing.delta.unwrap_or(delta0);
        let beta = model.beta();
        match self.smoothing.m_override {
            Some(m) => SmoothingConstants::with_m(m, beta, delta),
            None => smoothing_constants(model, beta, delta),
        }
        .map_err(|e| usage(format!("smoothing constants: {e}; set smoothing.delta or smoothing.m_override")))
    }

    /// Certificate bundle and, when the spectral gap holds, the problem to
    /// solve.
    pub fn certify(&self, model: &SpectralModel) -> Result<(CertificateBundle, Option<MildProblem>), CliError> {
        let cfg = self.solver_config();
        if let Some(plate) = self.plate() {
            return plate_bundle(model, &plate, &cfg, self.smoothing.m_override).map_err(CliError::from);
        }
        let report = match check_as1(model) {
            Ok(r) => r,
            Err(Error::Instability { mode, max_real }) => {
                let mut bundle = CertificateBundle::default();
                bundle.push(Certificate::upper_bound("AS1", max_real, 0.0).failed(format!("mode {mode} has a root with real part {max_real}")));
                return Ok((bundle, None));
            }
            Err(e) => return Err(e.into()),
        };
        let smoothing = self.raw_smoothing(model, report.delta0)?;
        let problem = MildProblem { model: model.clone(), kernel: self.kernel, forcing: self.forcing.clone(), d_beta: smoothing.d_beta };
        let mut bundle = certify(&problem, &cfg)?;
        bundle.set_constant("M_beta", smoothing.m_beta);
        bundle.set_constant("smoothing_delta", smoothing.delta);
        Ok((bundle, Some(problem)))
    }
}

/// Sets the value at a dotted path, creating intermediate objects.
pub fn set_path(root: &mut serde_json::Value, path: &str, value: serde_json::Value) -> Result<(), CliError> {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, key) in parts.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| usage(format!("sweep path {path:?} crosses a non-object at {key:?}")))?;
        if i + 1 == parts.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj.entry(key.to_string()).or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Err(usage(format!("empty sweep path {path:?}")))
}
