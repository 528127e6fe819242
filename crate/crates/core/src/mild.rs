//! The mild-solution operator
//!
//! ```text
//! (S phi)(t) = ∫_{t-H}^{t} T(t - s) [ M phi(s) + F(s, phi(s)) ] ds
//! ```
//!
//! on a uniform grid, its Picard fixed point, and the residual of the
//! variation-of-constants identity. `M` is the memory convolution and `F`
//! the forcing, both landing in the velocity slot.
//!
//! Per mode the integrand is written in the eigenbasis `w = K^{-1} h` of the
//! companion block and each component is integrated against `e^{rho (t-s)}`
//! exactly for piecewise-linear data. Running integrals from the grid start
//! give every window `[t - H, t]` by one subtraction.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::almost_automorphy::{ergodic_mean, shift_convergence_test, ShiftDiagnostic, Verdict};
use crate::certificate::{Certificate, CertificateBundle};
use crate::error::{Error, Result};
use crate::forcing::{check_h4, ForcingFunction};
use crate::memory::{check_h6, memory_history, MemoryKernel};
use crate::semigroup::{self, BlockPropagator};
use crate::spectral::{product_norm, ModeCoeffs, ProductState, SpectralModel, Trajectory};

/// Discretization and stopping parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Truncation `H` of the infinite lower integration limit.
    pub horizon: f64,
    pub dt: f64,
    pub window: (f64, f64),
    /// Ball radius `L`.
    pub ball_radius: f64,
    pub max_iters: usize,
    pub fp_tol: f64,
    pub tail_tol: f64,
    /// Samples used by the forcing checks.
    pub sample_budget: usize,
    /// Random `(t, s)` pairs for the mild-identity residual.
    pub residual_pairs: usize,
    pub seed: u64,
    /// Perturbs one window node before the mild-identity check. Test hook.
    #[serde(skip)]
    pub inject_fault: bool,
}

impl SolverConfig {
    pub fn new(dt: f64, window: (f64, f64), ball_radius: f64) -> Self {
        Self {
            horizon: 0.0,
            dt,
            window,
            ball_radius,
            max_iters: 200,
            fp_tol: 1e-10,
            tail_tol: 1e-9,
            sample_budget: 2000,
            residual_pairs: 50,
            seed: 0,
            inject_fault: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Domain(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.fp_tol > 0.0) || !(self.tail_tol > 0.0) {
            return Err(Error::Domain("tolerances must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Domain("max_iters must be >= 1".into()));
        }
        if !(self.window.1 >= self.window.0) {
            return Err(Error::Domain(format!("empty window {:?}", self.window)));
        }
        if !(self.ball_radius > 0.0) {
            return Err(Error::Domain(format!("ball radius {} must be positive", self.ball_radius)));
        }
        if !(self.horizon >= self.dt) {
            return Err(Error::Domain(format!("horizon {} shorter than one step", self.horizon)));
        }
        Ok(())
    }

    pub fn horizon_steps(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil().max(1.0) as usize
    }

    /// Horizon rounded up to the grid.
    pub fn grid_horizon(&self) -> f64 {
        self.horizon_steps() as f64 * self.dt
    }

    fn window_steps(&self) -> usize {
        ((self.window.1 - self.window.0) / self.dt).round() as usize
    }

    /// Padded grid `[t_start - 2H, t_end]`: start time and node count.
    pub fn padded_grid(&self) -> (f64, usize) {
        let pad = 2 * self.horizon_steps();
        (self.window.0 - pad as f64 * self.dt, pad + self.window_steps() + 1)
    }

    pub fn window_end(&self) -> f64 {
        self.window.0 + self.window_steps() as f64 * self.dt
    }
}

/// Model, kernel and forcing of one problem, with the convolution constant
/// `d(beta)` used by the hypothesis checks.
#[derive(Debug, Clone)]
pub struct MildProblem {
    pub model: SpectralModel,
    pub kernel: MemoryKernel,
    pub forcing: ForcingFunction,
    pub d_beta: f64,
}

/// Truncation horizon meeting `tail_tol`: the larger of
/// `(2/delta0) ln(C_pre / tail_tol)` with `C_pre = N' (C0 L + sup|f|) / delta0`
/// and the first `H` with `tail_bound(H) L <= tail_tol / 2`.
pub fn required_horizon(model: &SpectralModel, kernel: &MemoryKernel, forcing: &ForcingFunction, ball_radius: f64, tail_tol: f64) -> Result<f64> {
    let delta0 = crate::modal::check_as1(model)?.delta0;
    let n_prime = semigroup::decay_constant(model)?;
    let c_pre = n_prime * (kernel.l1_norm() * ball_radius + forcing.ball_bound(model, ball_radius)) / delta0;
    let semigroup_part = if c_pre > tail_tol { 2.0 / delta0 * (c_pre / tail_tol).ln() } else { 0.0 };

    let target = tail_tol / 2.0;
    let kernel_part = if kernel.tail_bound(0.0) * ball_radius <= target {
        0.0
    } else {
        let mut hi = 1.0;
        while kernel.tail_bound(hi) * ball_radius > target {
            hi *= 2.0;
        }
        let mut lo = hi / 2.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if kernel.tail_bound(mid) * ball_radius > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    Ok(semigroup_part.max(kernel_part))
}

/// `config` with the horizon set to [`required_horizon`] (at least one step).
pub fn with_required_horizon(problem: &MildProblem, config: &SolverConfig) -> Result<SolverConfig> {
    let h = required_horizon(&problem.model, &problem.kernel, &problem.forcing, config.ball_radius, config.tail_tol)?;
    Ok(SolverConfig { horizon: h.max(config.dt), ..config.clone() })
}

/// Exact weights for `∫_0^dt e^{rho (dt - u)} (w0 (1 - u/dt) + w1 u/dt) du`.
#[derive(Debug, Clone, Copy)]
struct ExpStep {
    decay: Complex64,
    w_prev: Complex64,
    w_next: Complex64,
}

fn phi_functions(z: Complex64) -> (Complex64, Complex64) {
    if z.norm() < 0.5 {
        // phi1 = sum z^k/(k+1)!, phi2 = sum z^k/(k+2)!
        let mut p1 = Complex64::new(0.0, 0.0);
        let mut p2 = Complex64::new(0.0, 0.0);
        let mut term = Complex64::new(1.0, 0.0);
        for k in 0..20 {
            p1 += term / fact(k + 1);
            p2 += term / fact(k + 2);
            term *= z;
        }
        (p1, p2)
    } else {
        let e = z.exp();
        let p1 = (e - 1.0) / z;
        let p2 = (e - 1.0 - z) / (z * z);
        (p1, p2)
    }
}

fn fact(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

impl ExpStep {
    fn new(rho: Complex64, dt: f64) -> Self {
        let z = rho * dt;
        let (p1, p2) = phi_functions(z);
        Self { decay: z.exp(), w_prev: (p1 - p2) * dt, w_next: p2 * dt }
    }

    #[inline]
    fn advance(&self, acc: Complex64, w0: Complex64, w1: Complex64) -> Complex64 {
        self.decay * acc + self.w_prev * w0 + self.w_next * w1
    }
}

/// Velocity-slot integrand `M phi + F(t, phi)` at every node.
fn integrand(kernel: &MemoryKernel, forcing: &ForcingFunction, traj: &Trajectory, horizon: f64) -> Vec<ModeCoeffs> {
    let memory = memory_history(kernel, traj, horizon);
    traj.states
        .iter()
        .enumerate()
        .zip(memory)
        .map(|((i, s), m)| m.add(&forcing.evaluate(traj.time(i), &s.position)))
        .collect()
}

/// `∫_{max(t0, t_i - H)}^{t_i} T(t_i - s) (0, g(s)) ds` for every node, for
/// one coefficient slot.
fn windowed_response(prop: &BlockPropagator, n: usize, g: &[Complex64], dt: f64, steps: usize) -> Vec<[Complex64; 2]> {
    let r = &prop.roots[n];
    let (r1, r2) = (r.rho1, r.rho2);
    let gap = r1 - r2;
    let s1 = ExpStep::new(r1, dt);
    let s2 = ExpStep::new(r2, dt);
    let tail1 = (r1 * (steps as f64 * dt)).exp();
    let tail2 = (r2 * (steps as f64 * dt)).exp();

    let len = g.len();
    let mut j1 = vec![Complex64::new(0.0, 0.0); len];
    let mut j2 = vec![Complex64::new(0.0, 0.0); len];
    for i in 1..len {
        let (a, b) = (g[i - 1] / gap, g[i] / gap);
        j1[i] = s1.advance(j1[i - 1], a, b);
        j2[i] = s2.advance(j2[i - 1], -a, -b);
    }
    (0..len)
        .map(|i| {
            let (z1, z2) = if i >= steps {
                (j1[i] - tail1 * j1[i - steps], j2[i] - tail2 * j2[i - steps])
            } else {
                (j1[i], j2[i])
            };
            [z1 + z2, r1 * z1 + r2 * z2]
        })
        .collect()
}

/// One application of the mild-solution operator on the grid of `traj`.
///
/// `traj` must cover `[t_start - 2H, t_end]`; the result lives on the same
/// grid, with integrals clipped at the grid start where the full window is
/// not available.
pub fn apply_s(
    model: &SpectralModel,
    kernel: &MemoryKernel,
    forcing: &ForcingFunction,
    traj: &Trajectory,
    config: &SolverConfig,
) -> Result<Trajectory> {
    let prop = BlockPropagator::new(model)?;
    apply_s_with(&prop, model, kernel, forcing, traj, config)
}

fn check_coverage(traj: &Trajectory, config: &SolverConfig) -> Result<()> {
    let (t0, _) = config.padded_grid();
    let eps = 1e-9 * config.dt;
    if traj.is_empty() || traj.t0 > t0 + eps || traj.t_end() < config.window_end() - eps {
        return Err(Error::Coverage(format!(
            "trajectory [{}, {}] does not cover [{}, {}]",
            traj.t0,
            traj.t_end(),
            t0,
            config.window_end()
        )));
    }
    if (traj.dt - config.dt).abs() > 1e-12 * config.dt {
        return Err(Error::Coverage(format!("trajectory step {} differs from dt = {}", traj.dt, config.dt)));
    }
    Ok(())
}

fn apply_s_with(
    prop: &BlockPropagator,
    model: &SpectralModel,
    kernel: &MemoryKernel,
    forcing: &ForcingFunction,
    traj: &Trajectory,
    config: &SolverConfig,
) -> Result<Trajectory> {
    check_coverage(traj, config)?;
    let modes = model.mode_count();
    if traj.states[0].len() != modes {
        return Err(Error::Dimension { expected: modes, got: traj.states[0].len() });
    }
    let horizon = config.grid_horizon();
    let steps = config.horizon_steps();
    let h = integrand(kernel, forcing, traj, horizon);

    let columns: Vec<Vec<[Complex64; 2]>> = (0..modes)
        .into_par_iter()
        .map(|slot| {
            let g: Vec<Complex64> = h.iter().map(|c| c.0[slot]).collect();
            windowed_response(prop, model.eigen_index(slot), &g, traj.dt, steps)
        })
        .collect();

    let states = (0..traj.len())
        .map(|i| {
            let mut s = ProductState::zeros(modes);
            for (slot, col) in columns.iter().enumerate() {
                s.position.0[slot] = col[i][0];
                s.velocity.0[slot] = col[i][1];
            }
            s
        })
        .collect();
    Ok(Trajectory { t0: traj.t0, dt: traj.dt, states })
}

/// Record of one Picard run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// `sup ||phi_{k} - phi_{k-1}||_{E_{1/2}}` for `k = 1, 2, ...`.
    pub residual_history: Vec<f64>,
    /// Largest ratio of consecutive residuals from iteration 3 on (iteration 2
    /// when fewer are available).
    pub contraction_estimate: f64,
    /// `d(beta) (C0 + Lip f)`.
    pub q: f64,
    pub lipschitz_bound: f64,
    /// Every iterate stayed in `sup ||phi||_{E_{1/2}} <= L`.
    pub ball_certificate: bool,
    pub max_iterate_norm: f64,
    pub mild_residual: f64,
    /// Tail plus round-off allowance for `mild_residual`.
    pub quadrature_budget: f64,
    pub horizon: f64,
    pub dt: f64,
    pub fp_tol: f64,
    pub certificates: CertificateBundle,
}

/// Certificates (AS1), (H.6), (H.4) and the contraction number of `problem`,
/// with the constants `delta0, K, N_prime, d_beta, C0, L, q`.
///
/// A failing (AS1) is reported with its witness and the remaining checks,
/// which need `delta0`, are skipped.
pub fn certify(problem: &MildProblem, config: &SolverConfig) -> Result<CertificateBundle> {
    let mut bundle = CertificateBundle::default();
    let report = match crate::modal::check_as1(&problem.model) {
        Ok(r) => r,
        Err(Error::Instability { mode, max_real }) => {
            bundle.push(
                Certificate::upper_bound("AS1", max_real, 0.0)
                    .failed(format!("mode {mode} has a root with real part {max_real}")),
            );
            return Ok(bundle);
        }
        Err(e) => return Err(e),
    };
    bundle.push(
        Certificate::upper_bound("AS1", -report.delta0, 0.0)
            .with_constant("delta0", report.delta0)
            .with_witness(format!("slowest mode {}", report.worst_mode)),
    );
    let sector = crate::modal::estimate_sector(&problem.model, &crate::modal::SectorGrid::default())?;
    bundle.set_constant("delta0", report.delta0);
    bundle.set_constant("K", sector.k);
    bundle.set_constant("N_prime", sector.n_prime);
    bundle.set_constant("d_beta", problem.d_beta);

    bundle.push(check_h6(&problem.kernel, problem.d_beta)?);
    bundle.push(check_h4(&problem.forcing, &problem.model, problem.d_beta, config.ball_radius, config.sample_budget, config.seed)?);
    let lip = problem.forcing.lipschitz_bound(&problem.model, config.ball_radius, config.sample_budget, config.seed);
    let c0 = problem.kernel.l1_norm();
    let q = problem.d_beta * (c0 + lip);
    let mut contraction = Certificate::upper_bound("contraction", q, 1.0)
        .with_constant("C0", c0)
        .with_constant("lipschitz_bound", lip)
        .with_constant("d_beta", problem.d_beta);
    contraction.passed = q < 1.0;
    bundle.push(contraction);
    bundle.set_constant("C0", c0);
    bundle.set_constant("L", config.ball_radius);
    bundle.set_constant("lipschitz_bound", lip);
    bundle.set_constant("q", q);
    Ok(bundle)
}

/// Picard iteration `phi_{k+1} = S phi_k` from `phi_0 = 0` on the padded grid.
///
/// Returns the full padded trajectory; crop with [`Trajectory::crop`] to the
/// output window.
pub fn picard_solve(problem: &MildProblem, config: &SolverConfig) -> Result<(Trajectory, SolveReport)> {
    config.validate()?;
    let model = &problem.model;
    problem.forcing.validate(model)?;
    problem.kernel.validate()?;
    let prop = BlockPropagator::new(model)?;

    let bundle = certify(problem, config)?;
    let q = bundle.constants["q"];
    let lip = bundle.constants["lipschitz_bound"];
    if let Some(bad) = bundle.certificates.iter().find(|c| c.name != "contraction" && !c.passed) {
        return Err(Error::HypothesisFailed {
            name: bad.name.clone(),
            detail: format!("quantity {} vs bound {}", bad.quantity, bad.bound),
        });
    }
    if q >= 1.0 {
        return Err(Error::NoContraction { q });
    }
    let required = required_horizon(model, &problem.kernel, &problem.forcing, config.ball_radius, config.tail_tol)?;
    if config.horizon < required {
        return Err(Error::HorizonTooShort { horizon: config.horizon, required });
    }

    let (t0, nodes) = config.padded_grid();
    let mut current = Trajectory::zeros(t0, config.dt, nodes, model.mode_count());
    let mut history = Vec::new();
    let mut ball = true;
    let mut max_norm = 0.0f64;
    let mut converged = false;
    for _ in 0..config.max_iters {
        let next = apply_s_with(&prop, model, &problem.kernel, &problem.forcing, &current, config)?;
        let res = next.sup_distance(model, &current)?;
        let norm = next.sup_norm(model)?;
        max_norm = max_norm.max(norm);
        ball &= norm <= config.ball_radius * (1.0 + 1e-12);
        history.push(res);
        current = next;
        log::debug!("picard iteration {}: residual {res:e}", history.len());
        if res <= config.fp_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::IterationBudget { iterations: history.len(), residual: *history.last().unwrap_or(&f64::NAN) });
    }

    let first_ratio = if history.len() >= 3 { 2 } else { 1 };
    let contraction_estimate = (first_ratio..history.len())
        .filter(|&k| history[k - 1] > 0.0)
        .map(|k| history[k] / history[k - 1])
        .fold(0.0, f64::max);

    let mut checked = current.clone();
    if config.inject_fault {
        let mid = checked.node_index(config.window.0).unwrap_or(0) + config.window_steps() / 2;
        checked.states[mid].position.0[0] += 1.0;
    }
    let pairs = residual_pairs(config, config.residual_pairs);
    let mild_residual = verify_mild_identity(model, &problem.kernel, &problem.forcing, &checked, &pairs, config.grid_horizon())?;
    let scale = current.sup_norm(model)?.max(1.0);

    let report = SolveReport {
        iterations: history.len(),
        converged,
        residual_history: history,
        contraction_estimate,
        q,
        lipschitz_bound: lip,
        ball_certificate: ball,
        max_iterate_norm: max_norm,
        mild_residual,
        quadrature_budget: config.tail_tol + 1e-10 * scale,
        horizon: config.grid_horizon(),
        dt: config.dt,
        fp_tol: config.fp_tol,
        certificates: bundle,
    };
    Ok((current, report))
}

/// A run refused by a failed certificate or a solver error, with the
/// certificates computed so far.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{error}")]
pub struct Refusal {
    pub error: Error,
    pub bundle: CertificateBundle,
}

/// Solution on the output window with its report and certificates.
#[derive(Debug, Clone)]
pub struct CertifiedRun {
    pub trajectory: Trajectory,
    pub report: SolveReport,
    pub bundle: CertificateBundle,
}

/// Refuses on the first failed certificate of `bundle`, otherwise runs
/// [`picard_solve`] and crops the result to the output window.
pub fn solve_with_bundle(problem: &MildProblem, config: &SolverConfig, bundle: CertificateBundle) -> std::result::Result<CertifiedRun, Refusal> {
    if let Some(bad) = bundle.first_failure() {
        let error = if bad.name == "contraction" {
            Error::NoContraction { q: bad.quantity }
        } else {
            Error::HypothesisFailed {
                name: bad.name.clone(),
                detail: bad.witness.clone().unwrap_or_else(|| format!("quantity {} vs bound {}", bad.quantity, bad.bound)),
            }
        };
        return Err(Refusal { error, bundle });
    }
    let solved = picard_solve(problem, config).and_then(|(traj, report)| {
        let window = traj.crop(config.window.0, config.window_end())?;
        Ok((window, report))
    });
    match solved {
        Ok((trajectory, report)) => Ok(CertifiedRun { trajectory, report, bundle }),
        Err(error) => Err(Refusal { error, bundle }),
    }
}

/// Seeded `(t, s)` node pairs inside the window with lags in `[0.1, 5]`
/// (clipped to the window length). Every other pair ends on the middle window
/// node when the lag allows, the node a fault-injection run perturbs.
pub fn residual_pairs(config: &SolverConfig, count: usize) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6d69_6c64);
    let steps = config.window_steps();
    let dt = config.dt;
    let max_lag = ((5.0 / dt).round() as usize).min(steps).max(1);
    let min_lag = ((0.1 / dt).round() as usize).clamp(1, max_lag);
    let mid = steps / 2;
    (0..count)
        .map(|k| {
            if steps == 0 {
                return (config.window.0, config.window.0);
            }
            let lag = rng.gen_range(min_lag..=max_lag).min(steps);
            let ti = if k % 2 == 1 && mid >= lag { mid } else { rng.gen_range(lag..=steps) };
            let t = config.window.0 + ti as f64 * dt;
            (t, t - lag as f64 * dt)
        })
        .collect()
}

/// `max ||phi(t) - T(t - s) phi(s) - ∫_s^t T(t - r) h(r) dr||_{E_{1/2}}` over
/// `pairs`, with `h = M phi + F(., phi)` and the memory taken over `horizon`.
pub fn verify_mild_identity(
    model: &SpectralModel,
    kernel: &MemoryKernel,
    forcing: &ForcingFunction,
    traj: &Trajectory,
    pairs: &[(f64, f64)],
    horizon: f64,
) -> Result<f64> {
    let prop = BlockPropagator::new(model)?;
    let h = integrand(kernel, forcing, traj, horizon);
    let mut worst = 0.0f64;
    for &(t, s) in pairs {
        let it = traj.node_index(t).ok_or_else(|| Error::Coverage(format!("t = {t} outside the trajectory")))?;
        let is = traj.node_index(s).ok_or_else(|| Error::Coverage(format!("s = {s} outside the trajectory")))?;
        if is > it {
            return Err(Error::Domain(format!("pair ({t}, {s}) has s > t")));
        }
        if s < traj.t0 + horizon - 1e-9 * traj.dt {
            return Err(Error::Coverage(format!("s = {s} lacks {horizon} of memory history")));
        }
        let propagated = prop.propagate(t - s, &traj.states[is])?;
        let mut diff = traj.states[it].sub(&propagated);
        for slot in 0..model.mode_count() {
            let r = &prop.roots[model.eigen_index(slot)];
            let gap = r.rho1 - r.rho2;
            let s1 = ExpStep::new(r.rho1, traj.dt);
            let s2 = ExpStep::new(r.rho2, traj.dt);
            let (mut z1, mut z2) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
            for i in is + 1..=it {
                let (a, b) = (h[i - 1].0[slot] / gap, h[i].0[slot] / gap);
                z1 = s1.advance(z1, a, b);
                z2 = s2.advance(z2, -a, -b);
            }
            diff.position.0[slot] -= z1 + z2;
            diff.velocity.0[slot] -= r.rho1 * z1 + r.rho2 * z2;
        }
        worst = worst.max(product_norm(model, &diff)?);
    }
    Ok(worst)
}

/// Forward variation-of-constants march from `initial` at `t0` for a
/// kernel-free problem, with the same exact quadrature as [`apply_s`]. Gives
/// solutions with a transient, e.g. started from rest.
pub fn march_from(
    model: &SpectralModel,
    forcing: &ForcingFunction,
    initial: &ProductState,
    t0: f64,
    dt: f64,
    nodes: usize,
) -> Result<Trajectory> {
    if !forcing.is_state_independent() {
        return Err(Error::InvalidModel("forward march needs state-independent forcing".into()));
    }
    let prop = BlockPropagator::new(model)?;
    let modes = model.mode_count();
    if initial.len() != modes {
        return Err(Error::Dimension { expected: modes, got: initial.len() });
    }
    let mut states = Vec::with_capacity(nodes);
    if nodes == 0 {
        return Trajectory::new(t0, dt, states);
    }
    states.push(initial.clone());
    let steps: Vec<(ExpStep, ExpStep)> =
        prop.roots.iter().map(|r| (ExpStep::new(r.rho1, dt), ExpStep::new(r.rho2, dt))).collect();
    let mut prev_f = forcing.evaluate(t0, &initial.position);
    for i in 1..nodes {
        let last = &states[i - 1];
        let base = prop.propagate(dt, last)?;
        let f = forcing.evaluate(t0 + i as f64 * dt, &ModeCoeffs::zeros(modes));
        let mut next = base;
        for slot in 0..modes {
            let n = model.eigen_index(slot);
            let r = &prop.roots[n];
            let gap = r.rho1 - r.rho2;
            let (a, b) = (prev_f.0[slot] / gap, f.0[slot] / gap);
            let z1 = steps[n].0.advance(Complex64::new(0.0, 0.0), a, b);
            let z2 = steps[n].1.advance(Complex64::new(0.0, 0.0), -a, -b);
            next.position.0[slot] += z1 + z2;
            next.velocity.0[slot] += r.rho1 * z1 + r.rho2 * z2;
        }
        prev_f = f;
        states.push(next);
    }
    Trajectory::new(t0, dt, states)
}

/// Overall reading of the decomposition diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PaaVerdict {
    Consistent,
    Inconsistent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionReport {
    pub center: f64,
    pub r_values: Vec<f64>,
    /// Ergodic means of `||phi||_{E_{1/2}}`.
    pub total_means: Vec<f64>,
    /// Ergodic means of `||phi - reference||_{E_{1/2}}`, the estimate of the
    /// ergodic component. Equal to `total_means` without a reference.
    pub residual_means: Vec<f64>,
    pub ergodic_tol: f64,
    pub shift: Option<ShiftDiagnostic>,
    pub verdict: PaaVerdict,
}

/// Options for [`decompose_solution`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposeOptions {
    pub r_values: Vec<f64>,
    /// Shifts for the almost-automorphy test of the reference (or of the
    /// trajectory itself without a reference); empty skips the test.
    pub shifts: Vec<f64>,
    /// Probe offsets from the trajectory center.
    pub probes: Vec<f64>,
    pub shift_tol: f64,
    /// Largest ergodic mean at the largest `r` still read as vanishing.
    /// Above it the verdict is inconclusive when every mean is at least 1%
    /// below the previous one, and inconsistent otherwise.
    pub ergodic_tol: f64,
}

impl DecomposeOptions {
    pub fn with_r_values(r_values: Vec<f64>) -> Self {
        Self { r_values, shifts: Vec::new(), probes: Vec::new(), shift_tol: 1e-2, ergodic_tol: 1e-2 }
    }
}

fn interpolated<'a>(values: &'a [f64], t0: f64, dt: f64) -> impl Fn(f64) -> f64 + 'a {
    move |t: f64| {
        let x = (t - t0) / dt;
        let last = values.len() - 1;
        if x <= 0.0 {
            return values[0];
        }
        let i = (x.floor() as usize).min(last);
        if i >= last {
            return values[last];
        }
        let frac = x - i as f64;
        values[i] * (1.0 - frac) + values[i + 1] * frac
    }
}

/// Ergodic-mean and shift diagnostics for splitting a computed solution into
/// an almost automorphic part (`reference`) and an ergodic remainder.
///
/// Without a reference the whole trajectory is tested as an ergodic
/// perturbation.
pub fn decompose_solution(
    model: &SpectralModel,
    traj: &Trajectory,
    reference: Option<&Trajectory>,
    options: &DecomposeOptions,
) -> Result<DecompositionReport> {
    if traj.is_empty() || options.r_values.is_empty() {
        return Err(Error::Domain("decomposition needs a trajectory and r values".into()));
    }
    let span = traj.t_end() - traj.t0;
    let r_max = options.r_values.iter().cloned().fold(0.0, f64::max);
    if 2.0 * r_max > span + 1e-9 * traj.dt {
        return Err(Error::Coverage(format!("trajectory of length {span} is shorter than 2 r = {}", 2.0 * r_max)));
    }
    let center = traj.t0 + span / 2.0;
    let norms: Vec<f64> = traj.states.iter().map(|s| product_norm(model, s)).collect::<Result<_>>()?;
    let residual_norms: Vec<f64> = match reference {
        Some(r) => {
            if r.len() != traj.len() || (r.t0 - traj.t0).abs() > 1e-9 * traj.dt || (r.dt - traj.dt).abs() > 1e-12 * traj.dt {
                return Err(Error::Coverage("reference trajectory is on a different grid".into()));
            }
            traj.states.iter().zip(&r.states).map(|(a, b)| product_norm(model, &a.sub(b))).collect::<Result<_>>()?
        }
        None => norms.clone(),
    };
    let total_f = interpolated(&norms, traj.t0, traj.dt);
    let resid_f = interpolated(&residual_norms, traj.t0, traj.dt);
    let mut total_means = Vec::new();
    let mut residual_means = Vec::new();
    for &r in &options.r_values {
        total_means.push(ergodic_mean(|s| total_f(center + s), r, traj.dt)?);
        residual_means.push(ergodic_mean(|s| resid_f(center + s), r, traj.dt)?);
    }

    let shift = if options.shifts.is_empty() || options.probes.is_empty() {
        None
    } else {
        let aa_norms: Vec<f64> = match reference {
            Some(r) => r.states.iter().map(|s| product_norm(model, s)).collect::<Result<_>>()?,
            None => norms.clone(),
        };
        let reach = |x: f64| center + x >= traj.t0 - 1e-9 && center + x <= traj.t_end() + 1e-9;
        // shifts are re-centered so that t + s_n - s_m stays on the trajectory
        let last = *options.shifts.last().unwrap();
        let shifts: Vec<f64> = options.shifts.iter().map(|s| s - last / 2.0).collect();
        let s_last = *shifts.last().unwrap();
        for &p in &options.probes {
            for &s in &shifts {
                if !reach(p + s) || !reach(p - s + s_last) {
                    return Err(Error::Coverage(format!("probe {p} with shift {s} leaves the trajectory")));
                }
            }
        }
        let aa_f = interpolated(&aa_norms, traj.t0, traj.dt);
        Some(shift_convergence_test(|t| aa_f(center + t), &shifts, &options.probes, options.shift_tol)?)
    };

    let ergodic_verdict = {
        let last = *residual_means.last().unwrap();
        // a vanishing mean should drop visibly, not by round-off
        let decreasing = residual_means.windows(2).all(|w| w[1] < 0.99 * w[0]);
        if last <= options.ergodic_tol {
            Verdict::Pass
        } else if decreasing && residual_means.len() > 1 {
            Verdict::Inconclusive
        } else {
            Verdict::Fail
        }
    };
    let shift_verdict = shift.as_ref().map(|d| d.verdict);
    let verdict = match (ergodic_verdict, shift_verdict) {
        (Verdict::Fail, _) | (_, Some(Verdict::Fail)) => PaaVerdict::Inconsistent,
        (Verdict::Pass, None | Some(Verdict::Pass)) => PaaVerdict::Consistent,
        _ => PaaVerdict::Inconclusive,
    };
    Ok(DecompositionReport {
        center,
        r_values: options.r_values.clone(),
        total_means,
        residual_means,
        ergodic_tol: options.ergodic_tol,
        shift,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::{Signal, StateCoupling};
    use crate::semigroup::{smoothing_constants, velocity_gain};
    use proptest::prelude::*;

    fn single(lambda: f64) -> SpectralModel {
        SpectralModel::simple(vec![lambda], 0.5, 0.5).unwrap()
    }

    fn problem(model: SpectralModel, kernel: MemoryKernel, forcing: ForcingFunction) -> MildProblem {
        let delta0 = crate::modal::check_as1(&model).unwrap().delta0;
        let d_beta = smoothing_constants(&model, 0.5, delta0).unwrap().d_beta;
        MildProblem { model, kernel, forcing, d_beta }
    }

    fn sine() -> ForcingFunction {
        ForcingFunction::first_mode(Signal::Sine { amplitude: 1.0, frequency: 1.0, phase: 0.0 }, Signal::Zero)
    }

    fn solve(p: &MildProblem, dt: f64, window: (f64, f64), radius: f64) -> (Trajectory, SolveReport) {
        let cfg = with_required_horizon(p, &SolverConfig::new(dt, window, radius)).unwrap();
        let (traj, report) = picard_solve(p, &cfg).unwrap();
        (traj.crop(window.0, cfg.window_end()).unwrap(), report)
    }

    /// `x'' + damp x' + lambda x = f(t)` from rest at `t0`, classical RK4.
    fn rk4_forced(lambda: f64, damp: f64, f: impl Fn(f64) -> f64, t0: f64, h: f64, steps: usize) -> Vec<(f64, f64, f64)> {
        let rhs = |t: f64, x: f64, v: f64| (v, f(t) - lambda * x - damp * v);
        let (mut x, mut v) = (0.0, 0.0);
        let mut out = Vec::with_capacity(steps + 1);
        out.push((t0, x, v));
        for i in 0..steps {
            let t = t0 + i as f64 * h;
            let k1 = rhs(t, x, v);
            let k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1.0, v + 0.5 * h * k1.1);
            let k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2.0, v + 0.5 * h * k2.1);
            let k4 = rhs(t + h, x + h * k3.0, v + h * k3.1);
            x += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            out.push((t0 + (i + 1) as f64 * h, x, v));
        }
        out
    }

    #[test]
    fn phi_functions_match_direct_formula() {
        for z in [Complex64::new(0.3, 0.2), Complex64::new(-0.49, 0.0), Complex64::new(0.0, 0.1)] {
            let (p1, p2) = phi_functions(z);
            let e = z.exp();
            assert!((p1 - (e - 1.0) / z).norm() < 1e-12);
            assert!((p2 - (e - 1.0 - z) / (z * z)).norm() < 1e-10);
        }
        let (p1, p2) = phi_functions(Complex64::new(0.0, 0.0));
        assert_eq!((p1.re, p2.re), (1.0, 0.5));
    }

    #[test]
    fn exp_step_integrates_linear_data_exactly() {
        // ∫_0^h e^{rho (h - u)} (a + (b - a) u / h) du by Simpson on a fine grid
        let rho = Complex64::new(-0.7, 1.3);
        let (h, a, b) = (0.4, Complex64::new(1.0, -2.0), Complex64::new(0.5, 3.0));
        let step = ExpStep::new(rho, h);
        let got = step.advance(Complex64::new(0.0, 0.0), a, b);
        let n = 2000;
        let g = |u: f64| (rho * (h - u)).exp() * (a + (b - a) * (u / h));
        let mut acc = g(0.0) + g(h);
        for i in 1..n {
            acc += g(i as f64 * h / n as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let simpson = acc * (h / n as f64 / 3.0);
        assert!((got - simpson).norm() < 1e-13, "{got} vs {simpson}");
    }

    #[test]
    fn zero_data_gives_zero() {
        let p = problem(single(2.0), MemoryKernel::Zero, ForcingFunction::zero());
        let (traj, report) = solve(&p, 0.1, (0.0, 5.0), 1.0);
        assert_eq!(report.iterations, 1);
        assert_eq!(report.residual_history, vec![0.0]);
        assert!(traj.states.iter().all(|s| *s == ProductState::zeros(1)));
        assert!(report.ball_certificate);
        assert_eq!(report.mild_residual, 0.0);
        let cfg = SolverConfig { horizon: 3.0, ..SolverConfig::new(0.1, (0.0, 5.0), 1.0) };
        let (t0, n) = cfg.padded_grid();
        let out = apply_s(&p.model, &p.kernel, &p.forcing, &Trajectory::zeros(t0, 0.1, n, 1), &cfg).unwrap();
        assert!(out.states.iter().all(|s| *s == ProductState::zeros(1)));
    }

    #[test]
    fn sine_forcing_matches_closed_form() {
        let p = problem(single(2.0), MemoryKernel::Zero, sine());
        let (traj, report) = solve(&p, 2e-3, (0.0, 10.0), 4.0);
        assert!(report.converged);
        assert_eq!(report.iterations, 2);
        assert!(report.contraction_estimate <= report.q);
        let err = (0..traj.len())
            .map(|i| {
                let t = traj.time(i);
                (traj.states[i].position.0[0].re - (t.sin() - 2f64.sqrt() * t.cos()) / 3.0).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "sup error {err}");
        assert!(report.mild_residual <= 5.0 * report.fp_tol + report.quadrature_budget, "{report:?}");
    }

    #[test]
    fn constant_forcing_settles_at_static_deflection() {
        let f = ForcingFunction::first_mode(Signal::Constant { value: 0.3 }, Signal::Zero);
        let p = problem(single(5.0), MemoryKernel::Zero, f);
        let (traj, _) = solve(&p, 0.05, (0.0, 4.0), 4.0);
        for s in &traj.states {
            assert!((s.position.0[0].re - 0.06).abs() < 1e-9);
            assert!(s.velocity.0[0].norm() < 1e-9);
        }
    }

    #[test]
    fn matches_rk4_on_two_modes() {
        let model = SpectralModel::new(vec![2.0, 7.0], vec![1, 1], 0.5, 0.5).unwrap();
        let forcing = ForcingFunction {
            aa: Signal::TwoTone { amplitude: 0.5, a: 1.0, b: 2f64.sqrt() },
            ergodic: Signal::Lorentzian { amplitude: 0.8 },
            profile: vec![1.0, -0.5],
            coupling: StateCoupling::None,
            lipschitz_override: None,
        };
        let p = problem(model.clone(), MemoryKernel::Zero, forcing.clone());
        let (traj, _) = solve(&p, 2e-3, (-3.0, 3.0), 4.0);
        let delta0 = crate::modal::check_as1(&model).unwrap().delta0;
        let h = 1e-4;
        let burn = (60.0 / delta0 / h).ceil() * h;
        let steps = ((burn + 6.0) / h).round() as usize;
        for slot in 0..2 {
            let lambda = model.slot_eigenvalue(slot);
            let w = forcing.profile[slot];
            let rk = rk4_forced(lambda, lambda.sqrt(), |t| w * (forcing.aa.eval(t) + forcing.ergodic.eval(t)), -3.0 - burn, h, steps);
            let mut err = 0.0f64;
            for (i, s) in traj.states.iter().enumerate() {
                let k = ((traj.time(i) - (-3.0 - burn)) / h).round() as usize;
                let (_, x, v) = rk[k];
                err = err.max((s.position.0[slot].re - x).abs()).max((s.velocity.0[slot].re - v).abs());
            }
            assert!(err < 1e-6, "slot {slot}: {err}");
        }
    }

    #[test]
    fn grid_refinement_is_second_order() {
        let p = problem(single(2.0), MemoryKernel::exponential(0.2, 1.0), sine());
        let sols: Vec<Trajectory> = [0.05, 0.025, 0.0125].iter().map(|&dt| solve(&p, dt, (0.0, 10.0), 4.0).0).collect();
        let diff = |coarse: &Trajectory, fine: &Trajectory| {
            (0..coarse.len())
                .map(|i| product_norm(&p.model, &coarse.states[i].sub(&fine.states[2 * i])).unwrap())
                .fold(0.0, f64::max)
        };
        let e1 = diff(&sols[0], &sols[1]);
        let e2 = diff(&sols[1], &sols[2]);
        assert!(e1 / e2 >= 3.5, "{e1} {e2}");
    }

    #[test]
    fn residuals_contract_geometrically() {
        let model = single(2.0);
        let p = problem(model.clone(), MemoryKernel::exponential(0.25, 1.0), sine());
        let cfg = with_required_horizon(&p, &SolverConfig::new(0.05, (0.0, 5.0), 4.0)).unwrap();
        let (_, report) = picard_solve(&p, &cfg).unwrap();
        let h = &report.residual_history;
        assert!(h.len() > 5);
        for k in 2..h.len() {
            assert!(h[k] <= h[k - 1] * (1.0 + 1e-9), "{h:?}");
        }
        let gain = p.d_beta.max(velocity_gain(&model).unwrap());
        let q_eff = gain * 0.25;
        for (k, r) in h.iter().enumerate() {
            assert!(*r <= q_eff.powi(k as i32) * h[0] / (1.0 - q_eff) + 1e-14);
        }
        assert!(report.contraction_estimate <= q_eff);
    }

    #[test]
    fn refusals() {
        let model = single(2.0);
        let mut p = problem(model.clone(), MemoryKernel::exponential(0.2, 1.0), sine());
        let base = SolverConfig::new(0.05, (0.0, 2.0), 4.0);

        let short = SolverConfig { horizon: 1.0, ..base.clone() };
        assert!(matches!(picard_solve(&p, &short), Err(Error::HorizonTooShort { .. })));

        let cfg = with_required_horizon(&p, &base).unwrap();
        let tight = SolverConfig { max_iters: 2, ..cfg.clone() };
        assert!(matches!(picard_solve(&p, &tight), Err(Error::IterationBudget { iterations: 2, .. })));

        p.forcing.coupling = StateCoupling::SineSaturation { strength: 0.01 };
        p.forcing.lipschitz_override = Some(1.0 / p.d_beta);
        let cfg = with_required_horizon(&p, &base).unwrap();
        assert!(matches!(picard_solve(&p, &cfg), Err(Error::NoContraction { q }) if q >= 1.0));

        let heavy = problem(model, MemoryKernel::exponential(2.0, 1.0), sine());
        assert!(matches!(picard_solve(&heavy, &cfg), Err(Error::HypothesisFailed { ref name, .. }) if name == "H6"));

        let degenerate = MildProblem { model: SpectralModel::unchecked(vec![0.0], 0.5, 0.5).unwrap(), ..problem(single(2.0), MemoryKernel::Zero, sine()) };
        assert!(matches!(picard_solve(&degenerate, &cfg), Err(Error::Instability { .. })));
    }

    #[test]
    fn corrupted_trajectory_breaks_identity() {
        let p = problem(single(2.0), MemoryKernel::Zero, sine());
        let cfg = with_required_horizon(&p, &SolverConfig::new(0.01, (0.0, 10.0), 4.0)).unwrap();
        let (_, clean) = picard_solve(&p, &cfg).unwrap();
        let (_, faulty) = picard_solve(&p, &SolverConfig { inject_fault: true, ..cfg.clone() }).unwrap();
        assert!(clean.mild_residual < 1e-8);
        assert!(faulty.mild_residual >= 0.5, "{}", faulty.mild_residual);
    }

    #[test]
    fn identity_checks_coverage() {
        let p = problem(single(2.0), MemoryKernel::exponential(0.2, 1.0), sine());
        let traj = Trajectory::zeros(0.0, 0.1, 101, 1);
        assert!(verify_mild_identity(&p.model, &MemoryKernel::Zero, &ForcingFunction::zero(), &traj, &[(5.0, 1.0)], 1.0).unwrap() == 0.0);
        assert!(matches!(verify_mild_identity(&p.model, &p.kernel, &p.forcing, &traj, &[(11.0, 2.0)], 1.0), Err(Error::Coverage(_))));
        assert!(matches!(verify_mild_identity(&p.model, &p.kernel, &p.forcing, &traj, &[(5.0, 0.5)], 1.0), Err(Error::Coverage(_))));
        assert!(verify_mild_identity(&p.model, &p.kernel, &p.forcing, &traj, &[(2.0, 3.0)], 1.0).is_err());
    }

    #[test]
    fn apply_s_checks_coverage() {
        let p = problem(single(2.0), MemoryKernel::Zero, sine());
        let cfg = SolverConfig { horizon: 2.0, ..SolverConfig::new(0.1, (0.0, 1.0), 1.0) };
        let short = Trajectory::zeros(-1.0, 0.1, 21, 1);
        assert!(matches!(apply_s(&p.model, &p.kernel, &p.forcing, &short, &cfg), Err(Error::Coverage(_))));
    }

    #[test]
    fn shifted_forcing_shifts_the_fixed_point() {
        let shift = 0.05 * 37.0;
        let kernel = MemoryKernel::exponential(0.2, 1.5);
        let p = problem(single(3.0), kernel, sine());
        let shifted = problem(
            single(3.0),
            kernel,
            ForcingFunction::first_mode(Signal::Sine { amplitude: 1.0, frequency: 1.0, phase: -shift }, Signal::Zero),
        );
        let (a, _) = solve(&p, 0.05, (0.0, 4.0), 4.0);
        let (b, _) = solve(&shifted, 0.05, (shift, 4.0 + shift), 4.0);
        assert_eq!(a.len(), b.len());
        let d = a.states.iter().zip(&b.states).map(|(x, y)| product_norm(&p.model, &x.sub(y)).unwrap()).fold(0.0, f64::max);
        assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn march_agrees_with_fixed_point_after_transient() {
        let model = single(2.0);
        let p = problem(model.clone(), MemoryKernel::Zero, sine());
        let march = march_from(&model, &p.forcing, &ProductState::zeros(1), -80.0, 0.01, 8401).unwrap();
        let (fixed, _) = solve(&p, 0.01, (0.0, 4.0), 4.0);
        let start = march.node_index(0.0).unwrap();
        for (i, s) in fixed.states.iter().enumerate() {
            assert!(product_norm(&model, &s.sub(&march.states[start + i])).unwrap() < 1e-12);
        }
        let coupled = ForcingFunction { coupling: StateCoupling::SineSaturation { strength: 0.1 }, ..sine() };
        assert!(march_from(&model, &coupled, &ProductState::zeros(1), 0.0, 0.1, 3).is_err());
    }

    #[test]
    fn decomposition_examples() {
        let model = single(2.0);
        let zero = Trajectory::zeros(-20.0, 0.1, 401, 1);
        let opts = DecomposeOptions::with_r_values(vec![5.0, 10.0]);
        let rep = decompose_solution(&model, &zero, None, &opts).unwrap();
        assert!(rep.total_means.iter().chain(&rep.residual_means).all(|m| *m == 0.0));
        assert_eq!(rep.verdict, PaaVerdict::Consistent);

        let ones = Trajectory::new(-20.0, 0.1, vec![ProductState::from_real(&[1.0], &[0.0]); 401]).unwrap();
        let rep = decompose_solution(&model, &ones, None, &opts).unwrap();
        assert_eq!(rep.verdict, PaaVerdict::Inconsistent);
        assert!((rep.total_means[1] - 2f64.sqrt()).abs() < 1e-12);

        let too_long = DecomposeOptions::with_r_values(vec![30.0]);
        assert!(matches!(decompose_solution(&model, &zero, None, &too_long), Err(Error::Coverage(_))));
    }

    #[test]
    fn transient_from_rest_is_ergodic() {
        let model = single(2.0);
        let p = problem(model.clone(), MemoryKernel::Zero, sine());
        let (dt, r): (f64, f64) = (0.05, 1000.0);
        let nodes = (2.0 * r / dt).round() as usize + 1;
        let from_rest = march_from(&model, &p.forcing, &ProductState::zeros(1), -r, dt, nodes).unwrap();
        let (reference, _) = solve(&p, dt, (-r, r), 4.0);
        let opts = DecomposeOptions::with_r_values(vec![10.0, 100.0, r]);
        let rep = decompose_solution(&model, &from_rest, Some(&reference), &opts).unwrap();
        assert!(rep.residual_means[2] < 0.01, "{:?}", rep.residual_means);
        assert_eq!(rep.verdict, PaaVerdict::Consistent);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn apply_s_is_linear_in_forcing(a in -2.0f64..2.0, b in -2.0f64..2.0, seed in 0u64..1000) {
            let model = SpectralModel::new(vec![1.0, 4.0], vec![1, 2], 0.5, 0.7).unwrap();
            let cfg = SolverConfig { horizon: 6.0, ..SolverConfig::new(0.05, (0.0, 3.0), 1.0) };
            let (t0, n) = cfg.padded_grid();
            let traj = random_traj(t0, 0.05, n, 3, seed);
            let f = |aa: Signal, erg: Signal| ForcingFunction { aa, ergodic: erg, profile: vec![1.0, 0.5, -0.3], ..ForcingFunction::zero() };
            let s1 = Signal::TwoTone { amplitude: 1.0, a: 1.0, b: 2f64.sqrt() };
            let s2 = Signal::Gaussian { amplitude: 1.0 };
            let run = |f: &ForcingFunction| apply_s(&model, &MemoryKernel::Zero, f, &traj, &cfg).unwrap();
            let one = run(&f(s1, Signal::Zero));
            let two = run(&f(Signal::Zero, s2));
            let both = run(&f(Signal::TwoTone { amplitude: a, a: 1.0, b: 2f64.sqrt() }, Signal::Gaussian { amplitude: b }));
            let scale = both.sup_norm(&model).unwrap().max(1.0);
            for i in 0..both.len() {
                let lin = one.states[i].scale(a).add(&two.states[i].scale(b));
                prop_assert!(product_norm(&model, &lin.sub(&both.states[i])).unwrap() <= 1e-10 * scale);
            }
        }

        #[test]
        fn a_priori_bound_holds(seed in 0u64..1000, amp in 0.1f64..3.0) {
            let model = SpectralModel::new(vec![1.5, 4.0], vec![1, 1], 0.5, 0.5).unwrap();
            let kernel = MemoryKernel::exponential(0.3, 2.0);
            let forcing = ForcingFunction { profile: vec![1.0, 1.0], ..sine() };
            let cfg = SolverConfig { horizon: 8.0, ..SolverConfig::new(0.05, (0.0, 4.0), 1.0) };
            let (t0, n) = cfg.padded_grid();
            let traj = random_traj(t0, 0.05, n, 2, seed);
            let traj = Trajectory { states: traj.states.iter().map(|s| s.scale(amp)).collect(), ..traj };
            let out = apply_s(&model, &kernel, &forcing, &traj, &cfg).unwrap();
            let delta0 = crate::modal::check_as1(&model).unwrap().delta0;
            let d = smoothing_constants(&model, 0.5, delta0).unwrap().d_beta;
            let gain = d.max(velocity_gain(&model).unwrap());
            let bound = gain * (kernel.l1_norm() * traj.sup_norm(&model).unwrap() + forcing.ball_bound(&model, 1.0));
            prop_assert!(out.sup_norm(&model).unwrap() <= bound * (1.0 + 1e-3) + cfg.tail_tol);
        }
    }

    fn random_traj(t0: f64, dt: f64, n: usize, modes: usize, seed: u64) -> Trajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states = (0..n)
            .map(|_| {
                let pos: Vec<f64> = (0..modes).map(|_| rand::Rng::gen_range(&mut rng, -0.5..0.5)).collect();
                let vel: Vec<f64> = (0..modes).map(|_| rand::Rng::gen_range(&mut rng, -0.5..0.5)).collect();
                ProductState::from_real(&pos, &vel)
            })
            .collect();
        Trajectory::new(t0, dt, states).unwrap()
    }
}
