//! Scalar memory kernels `C(t) = b(t) I` acting on the position coefficients,
//! and the history convolution they define.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::certificate::Certificate;
use crate::error::{Error, Result};
use crate::spectral::{ModeCoeffs, ProductState, Trajectory};

/// Nonnegative integrable kernel `b`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum MemoryKernel {
    #[default]
    Zero,
    /// `amplitude * e^{-rate t}`
    Exponential { amplitude: f64, rate: f64 },
    /// `amplitude * t * e^{-rate t}`
    GammaTwo { amplitude: f64, rate: f64 },
}

impl MemoryKernel {
    pub fn exponential(amplitude: f64, rate: f64) -> Self {
        MemoryKernel::Exponential { amplitude, rate }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MemoryKernel::Zero => Ok(()),
            MemoryKernel::Exponential { amplitude, rate } | MemoryKernel::GammaTwo { amplitude, rate } => {
                if !(amplitude >= 0.0 && amplitude.is_finite()) {
                    return Err(Error::Domain(format!("kernel amplitude {amplitude} must be >= 0")));
                }
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(Error::Domain(format!("kernel rate {rate} must be > 0")));
                }
                Ok(())
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            MemoryKernel::Zero => true,
            MemoryKernel::Exponential { amplitude, .. } | MemoryKernel::GammaTwo { amplitude, .. } => amplitude == 0.0,
        }
    }

    /// `b(t)` for `t >= 0`.
    pub fn evaluate(&self, t: f64) -> f64 {
        match *self {
            MemoryKernel::Zero => 0.0,
            MemoryKernel::Exponential { amplitude, rate } => amplitude * (-rate * t).exp(),
            MemoryKernel::GammaTwo { amplitude, rate } => amplitude * t * (-rate * t).exp(),
        }
    }

    /// `∫_0^∞ b`.
    pub fn l1_norm(&self) -> f64 {
        match *self {
            MemoryKernel::Zero => 0.0,
            MemoryKernel::Exponential { amplitude, rate } => amplitude / rate,
            MemoryKernel::GammaTwo { amplitude, rate } => amplitude / (rate * rate),
        }
    }

    /// `∫_T^∞ b`.
    pub fn tail_bound(&self, horizon: f64) -> f64 {
        let t = horizon.max(0.0);
        match *self {
            MemoryKernel::Zero => 0.0,
            MemoryKernel::Exponential { amplitude, rate } => amplitude / rate * (-rate * t).exp(),
            MemoryKernel::GammaTwo { amplitude, rate } => {
                amplitude * (-rate * t).exp() * (t / rate + 1.0 / (rate * rate))
            }
        }
    }
}

fn steps_for(horizon: f64, dt: f64) -> usize {
    (horizon / dt + 1e-9).floor() as usize
}

/// Trapezoidal `∫_{t-horizon}^t b(t-s) phi(s) ds` against the position
/// coefficients, returned in the velocity slot of `E = H x H`.
pub fn memory_convolve(kernel: &MemoryKernel, traj: &Trajectory, t: f64, horizon: f64) -> Result<ProductState> {
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!("horizon {horizon} must be positive")));
    }
    let modes = traj.states.first().map_or(0, |s| s.len());
    let i = traj
        .node_index(t)
        .ok_or_else(|| Error::Coverage(format!("t = {t} is not a node of the trajectory")))?;
    let steps = steps_for(horizon, traj.dt);
    if steps > i {
        return Err(Error::Coverage(format!(
            "memory window [{}, {t}] starts before the trajectory ({})",
            t - horizon,
            traj.t0
        )));
    }
    let mut acc = vec![Complex64::new(0.0, 0.0); modes];
    for k in 0..=steps {
        let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
        let b = w * kernel.evaluate(k as f64 * traj.dt);
        for (a, x) in acc.iter_mut().zip(&traj.states[i - k].position.0) {
            *a += x * b;
        }
    }
    let velocity = ModeCoeffs(acc.into_iter().map(|a| a * traj.dt).collect());
    Ok(ProductState { position: ModeCoeffs::zeros(modes), velocity })
}

/// Memory term at every node of `traj`, each over `[max(t0, t - horizon), t]`
/// with trapezoidal weights. Evaluated as one FFT convolution per slot.
pub fn memory_history(kernel: &MemoryKernel, traj: &Trajectory, horizon: f64) -> Vec<ModeCoeffs> {
    let n = traj.len();
    let modes = traj.states.first().map_or(0, |s| s.len());
    if kernel.is_zero() || n == 0 {
        return vec![ModeCoeffs::zeros(modes); n];
    }
    let steps = steps_for(horizon, traj.dt).min(n - 1);
    let b: Vec<f64> = (0..=steps).map(|k| kernel.evaluate(k as f64 * traj.dt)).collect();
    let len = n + steps + 1;

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut kb: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    kb.resize(len, Complex64::new(0.0, 0.0));
    fwd.process(&mut kb);

    let mut out = vec![ModeCoeffs::zeros(modes); n];
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for slot in 0..modes {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (dst, s) in buf.iter_mut().zip(&traj.states) {
            *dst = s.position.0[slot];
        }
        fwd.process(&mut buf);
        for (c, k) in buf.iter_mut().zip(&kb) {
            *c *= k;
        }
        inv.process(&mut buf);
        let scale = 1.0 / len as f64;
        for i in 0..n {
            let last = i.min(steps);
            let full = buf[i] * scale;
            let ends = 0.5 * (b[0] * traj.states[i].position.0[slot] + b[last] * traj.states[i - last].position.0[slot]);
            out[i].0[slot] = (full - ends) * traj.dt;
        }
    }
    out
}

/// Memory-kernel smallness: `||b||_1 <= 1 / (2 d(beta))`.
pub fn check_h6(kernel: &MemoryKernel, d_beta: f64) -> Result<Certificate> {
    if !(d_beta > 0.0) {
        return Err(Error::Domain(format!("d(beta) = {d_beta} must be positive")));
    }
    Ok(Certificate::upper_bound("H6", kernel.l1_norm(), 1.0 / (2.0 * d_beta)).with_constant("d_beta", d_beta))
}
