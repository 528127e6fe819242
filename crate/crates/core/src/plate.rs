//! Structurally damped plate on a box with Navier (hinged) boundary
//! conditions:
//!
//! ```text
//! u_tt + 2 gamma (-Laplace) u_t + (Laplace^2 + eta) u = ∫_0^∞ b(s) u(t - s) ds + f
//! ```
//!
//! Under Navier conditions the bilaplacian eigenvalues are squares of the
//! Dirichlet Laplacian ones, so the spectrum of `A = Laplace^2 + eta` is
//! closed-form on a box.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::certificate::{Certificate, CertificateBundle};
use crate::error::{Error, Result};
use crate::forcing::ForcingFunction;
use crate::memory::MemoryKernel;
use crate::mild::{certify, solve_with_bundle, CertifiedRun, MildProblem, Refusal, SolverConfig};
use crate::modal::check_as1;
use crate::semigroup::{smoothing_constants, SmoothingConstants};
use crate::spectral::SpectralModel;

/// Relative tolerance for merging coincident Laplacian eigenvalues.
const MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateProblem {
    /// Side lengths of the box, one per dimension.
    pub domain_lengths: Vec<f64>,
    /// Wavenumbers `1..=max_wavenumber` per axis.
    pub max_wavenumber: usize,
    pub gamma: f64,
    pub eta: f64,
    #[serde(default)]
    pub kernel: MemoryKernel,
    #[serde(default = "ForcingFunction::zero")]
    pub forcing: ForcingFunction,
}

impl PlateProblem {
    pub fn validate(&self) -> Result<()> {
        if self.domain_lengths.is_empty() {
            return Err(Error::InvalidModel("plate needs at least one dimension".into()));
        }
        if let Some(l) = self.domain_lengths.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidModel(format!("side length {l} must be positive")));
        }
        if self.max_wavenumber == 0 {
            return Err(Error::InvalidModel("wavenumber cutoff must be >= 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidModel(format!("gamma = {} must be positive", self.gamma)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidModel(format!("eta = {} must be nonnegative", self.eta)));
        }
        self.kernel.validate()
    }

    /// Sorted Dirichlet Laplacian eigenvalues `sum_i (k_i pi / L_i)^2` with
    /// their multiplicities.
    pub fn laplacian_spectrum(&self) -> Result<(Vec<f64>, Vec<usize>)> {
        self.validate()?;
        let dims = self.domain_lengths.len();
        let cutoff = self.max_wavenumber;
        let count = cutoff
            .checked_pow(dims as u32)
            .filter(|c| *c <= 1 << 22)
            .ok_or_else(|| Error::InvalidModel(format!("{cutoff}^{dims} modes is too many")))?;
        let mut values = Vec::with_capacity(count);
        let mut k = vec![1usize; dims];
        for _ in 0..count {
            values.push(k.iter().zip(&self.domain_lengths).map(|(&ki, &l)| (ki as f64 * PI / l).powi(2)).sum::<f64>());
            for ki in k.iter_mut() {
                if *ki < cutoff {
                    *ki += 1;
                    break;
                }
                *ki = 1;
            }
        }
        values.sort_by(f64::total_cmp);
        let mut eigs: Vec<f64> = Vec::new();
        let mut mult: Vec<usize> = Vec::new();
        for v in values {
            match eigs.last() {
                Some(&last) if (v - last).abs() <= MERGE_TOL * v => *mult.last_mut().unwrap() += 1,
                _ => {
                    eigs.push(v);
                    mult.push(1);
                }
            }
        }
        Ok((eigs, mult))
    }

    /// Smallest Dirichlet Laplacian eigenvalue of the box.
    pub fn mu1(&self) -> f64 {
        self.domain_lengths.iter().map(|l| (PI / l).powi(2)).sum()
    }
}

/// Spectral model of `Laplace^2 + eta` with `alpha = beta = 1/2`.
pub fn build_plate_model(p: &PlateProblem) -> Result<SpectralModel> {
    let (mu, mult) = p.laplacian_spectrum()?;
    let eigs = mu.iter().map(|m| m * m + p.eta).collect();
    SpectralModel::with_beta(eigs, mult, 0.5, p.gamma, 0.5)
}

/// `d(1/2)` with `delta = eta`, from the model or with `M(1/2)` given.
pub fn plate_smoothing(model: &SpectralModel, eta: f64, m_override: Option<f64>) -> Result<SmoothingConstants> {
    if !(eta > 0.0) {
        return Err(Error::Domain(format!("smoothing rate eta = {eta} must be positive")));
    }
    match m_override {
        Some(m) => SmoothingConstants::with_m(m, 0.5, eta),
        None => smoothing_constants(model, 0.5, eta),
    }
}

/// Memory condition `||b||_1 <= 1 / (2 ||Laplace^{-1}|| d(1/2))` with
/// `||Laplace^{-1}|| = 1 / mu_1`.
pub fn check_h8(p: &PlateProblem, m_override: Option<f64>) -> Result<Certificate> {
    let model = build_plate_model(p)?;
    let inverse_norm = 1.0 / p.mu1();
    let l1 = p.kernel.l1_norm();
    let smoothing = match plate_smoothing(&model, p.eta, m_override) {
        Ok(s) => s,
        Err(Error::Domain(msg)) => {
            return Ok(Certificate::upper_bound("H8", l1, f64::NAN).failed(msg));
        }
        Err(e) => return Err(e),
    };
    let bound = 1.0 / (2.0 * inverse_norm * smoothing.d_beta);
    Ok(Certificate::upper_bound("H8", l1, bound)
        .with_constant("laplacian_inverse_norm", inverse_norm)
        .with_constant("M_beta", smoothing.m_beta)
        .with_constant("d_half", smoothing.d_beta)
        .with_constant("eta", p.eta))
}

/// All plate certificates: (H.7) (the spectral gap), (H.4), (H.6), (H.8)
/// and the contraction number, for `model` in place of the box spectrum.
pub fn plate_bundle(model: &SpectralModel, p: &PlateProblem, config: &SolverConfig, m_override: Option<f64>) -> Result<(CertificateBundle, Option<MildProblem>)> {
    if let Err(Error::Instability { mode, max_real }) = check_as1(model) {
        let mut bundle = CertificateBundle::default();
        bundle.push(
            Certificate::upper_bound("H7", max_real, 0.0).failed(format!("mode {mode} has a root with real part {max_real}")),
        );
        return Ok((bundle, None));
    }
    let smoothing = plate_smoothing(model, p.eta, m_override)?;
    let problem = MildProblem { model: model.clone(), kernel: p.kernel, forcing: p.forcing.clone(), d_beta: smoothing.d_beta };
    let mut bundle = certify(&problem, config)?;
    for c in &mut bundle.certificates {
        if c.name == "AS1" {
            c.name = "H7".into();
        }
    }
    bundle.push(check_h8(p, m_override)?);
    bundle.set_constant("M_beta", smoothing.m_beta);
    bundle.set_constant("mu1", p.mu1());
    bundle.set_constant("eta", p.eta);
    Ok((bundle, Some(problem)))
}

/// Certifies and solves the plate problem on `model`.
pub fn run_plate_model(model: &SpectralModel, p: &PlateProblem, config: &SolverConfig, m_override: Option<f64>) -> std::result::Result<CertifiedRun, Refusal> {
    let refuse = |error| Refusal { error, bundle: CertificateBundle::default() };
    let (bundle, problem) = plate_bundle(model, p, config, m_override).map_err(refuse)?;
    match problem {
        Some(problem) => solve_with_bundle(&problem, config, bundle),
        None => {
            let bad = bundle.first_failure().expect("refused bundle has a failure");
            let error = Error::HypothesisFailed { name: bad.name.clone(), detail: bad.witness.clone().unwrap_or_default() };
            Err(Refusal { error, bundle })
        }
    }
}

/// Builds the box model, certifies it and solves.
pub fn run_plate(p: &PlateProblem, config: &SolverConfig, m_override: Option<f64>) -> std::result::Result<CertifiedRun, Refusal> {
    let model = build_plate_model(p).map_err(|error| Refusal { error, bundle: CertificateBundle::default() })?;
    run_plate_model(&model, p, config, m_override)
}
