//! Finite-sample diagnostics for the function classes behind pseudo-almost
//! automorphy: ergodic means for the ergodic part and a Bochner-type shift
//! test for the almost automorphic part. These falsify or support class
//! membership; they prove nothing.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::forcing::Signal;

/// `(1/2r) ∫_{-r}^{r} g(s) ds` by the trapezoidal rule, where `g` already
/// returns the norm of the function of interest.
pub fn ergodic_mean<F: Fn(f64) -> f64>(g: F, r: f64, grid_step: f64) -> Result<f64> {
    if !(r > 0.0) || !(grid_step > 0.0) {
        return Err(Error::Domain(format!("need r > 0 and step > 0, got r = {r}, step = {grid_step}")));
    }
    // even number of intervals keeps s = 0 on the grid
    let mut n = (2.0 * r / grid_step).ceil() as usize;
    n += n % 2;
    let h = 2.0 * r / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let s = -r + i as f64 * h;
        let v = g(s);
        if !v.is_finite() {
            return Err(Error::Evaluation(format!("non-finite sample {v} at s = {s}")));
        }
        acc += if i == 0 || i == n { 0.5 * v } else { v };
    }
    Ok(acc * h / (2.0 * r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftDiagnostic {
    pub verdict: Verdict,
    /// Spread of `f(t + s_n)` over the extracted subsequence, sup over probes.
    pub forward_residual: f64,
    /// `sup |g(t - s_n) - f(t)|` over the subsequence and probes, with `g`
    /// approximated by `f(. + s_last)`.
    pub backward_residual: f64,
    /// Indices into `shifts` of the extracted subsequence.
    pub subsequence: Vec<usize>,
}

/// Double-limit shift test of almost automorphy on a finite probe grid.
///
/// A subsequence of `shifts` along which `f(t + s_n)` is Cauchy within `tol`
/// is extracted greedily; the limit `g` is represented by the deepest shift,
/// and `g(t - s_n) -> f(t)` is checked along the same subsequence.
pub fn shift_convergence_test<F: Fn(f64) -> f64>(f: F, shifts: &[f64], probe_times: &[f64], tol: f64) -> Result<ShiftDiagnostic> {
    if shifts.is_empty() || probe_times.is_empty() {
        return Err(Error::Domain("shift test needs shifts and probe times".into()));
    }
    let sample = |s: f64| -> Vec<f64> { probe_times.iter().map(|&t| f(t + s)).collect() };
    let rows: Vec<Vec<f64>> = shifts.iter().map(|&s| sample(s)).collect();
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation("non-finite sample in shift test".into()));
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);

    let mut best: Vec<usize> = Vec::new();
    for anchor in 0..rows.len() {
        let members: Vec<usize> =
            (anchor..rows.len()).filter(|&j| dist(&rows[j], &rows[anchor]) <= 0.5 * tol).collect();
        if members.len() > best.len() {
            best = members;
        }
    }
    if best.len() < 2 {
        return Ok(ShiftDiagnostic {
            verdict: Verdict::Inconclusive,
            forward_residual: f64::NAN,
            backward_residual: f64::NAN,
            subsequence: best,
        });
    }
    let last = *best.last().unwrap();
    let forward = best.iter().map(|&j| dist(&rows[j], &rows[last])).fold(0.0, f64::max);
    let base: Vec<f64> = probe_times.iter().map(|&t| f(t)).collect();
    let mut backward = 0.0f64;
    for &m in best.iter().filter(|&&m| m != last) {
        let back: Vec<f64> = probe_times.iter().map(|&t| f(t - shifts[m] + shifts[last])).collect();
        backward = backward.max(dist(&back, &base));
    }
    let verdict = if backward <= tol { Verdict::Pass } else { Verdict::Fail };
    Ok(ShiftDiagnostic { verdict, forward_residual: forward, backward_residual: backward, subsequence: best })
}

/// Standard almost automorphic witnesses.
pub fn aa_library() -> Vec<(&'static str, Signal)> {
    vec![
        ("two_tone", Signal::TwoTone { amplitude: 1.0, a: 1.0, b: std::f64::consts::SQRT_2 }),
        ("automorphic_bump", Signal::AutomorphicBump { amplitude: 1.0 }),
    ]
}

/// Standard ergodic (PAP0) witnesses.
pub fn pap0_library() -> Vec<(&'static str, Signal)> {
    vec![
        ("exp_decay", Signal::ExpDecay { amplitude: 1.0, center: 0.0 }),
        ("lorentzian", Signal::Lorentzian { amplitude: 1.0 }),
        ("gaussian", Signal::Gaussian { amplitude: 1.0 }),
    ]
}

/// Shifts `2 pi q_k` with `q_k` the Pell denominators of `sqrt(2)`, starting
/// at the first `q_k >= min_q`. These are simultaneous near-periods of
/// `cos t` and `cos(sqrt(2) t)`.
pub fn pell_shifts(min_q: u64, count: usize) -> Vec<f64> {
    let (mut a, mut b) = (1u64, 2u64);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if a >= min_q {
            out.push(2.0 * std::f64::consts::PI * a as f64);
        }
        let next = 2 * b + a;
        a = b;
        b = next;
    }
    out
}
