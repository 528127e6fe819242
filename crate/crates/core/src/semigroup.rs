//! The scalar semigroup `S(t) = exp(-tA)` and the block semigroup
//! `T(tau) = exp(tau A)` of the first-order system on `E_{1/2}`, plus the
//! constants of their decay and smoothing estimates.

use num_complex::Complex64;
use serde::Serialize;
use statrs::function::gamma::gamma as gamma_fn;

use crate::error::{Error, Result};
use crate::modal::{self, BlockFactors, Mat2, ModeRoots};
use crate::spectral::{ModeCoeffs, ProductState, SpectralModel};

/// `e^{-lambda_j t} u_j` per slot.
pub fn scalar_semigroup(model: &SpectralModel, t: f64, u: &ModeCoeffs) -> Result<ModeCoeffs> {
    model.check_len(u)?;
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("negative time {t}")));
    }
    if t == 0.0 {
        return Ok(u.clone());
    }
    let out = u.0.iter().enumerate().map(|(slot, v)| v * (-model.slot_eigenvalue(slot) * t).exp()).collect();
    Ok(ModeCoeffs(out))
}

/// Precomputed diagonal factorizations of every mode block of a certified
/// model.
#[derive(Debug, Clone)]
pub struct BlockPropagator {
    pub delta0: f64,
    pub roots: Vec<ModeRoots>,
    pub factors: Vec<BlockFactors>,
    weights: Vec<f64>,
    slot_eigen: Vec<usize>,
}

impl BlockPropagator {
    pub fn new(model: &SpectralModel) -> Result<Self> {
        let report = modal::check_as1(model)?;
        let roots: Vec<ModeRoots> =
            (1..=model.eigen_count()).map(|n| modal::mode_roots(model, n)).collect::<Result<_>>()?;
        let factors = roots.iter().map(modal::mode_block_factors).collect::<Result<_>>()?;
        Ok(Self {
            delta0: report.delta0,
            roots,
            factors,
            weights: model.eigenvalues().to_vec(),
            slot_eigen: (0..model.mode_count()).map(|s| model.eigen_index(s)).collect(),
        })
    }

    /// `K e^{tau (J + shift)} K^{-1}` for distinct eigenvalue `n` (0-based).
    pub fn block(&self, n: usize, tau: f64, shift: f64) -> Mat2 {
        let f = &self.factors[n];
        let e1 = ((f.j.0[0][0] + shift) * tau).exp();
        let e2 = ((f.j.0[1][1] + shift) * tau).exp();
        f.k * Mat2::diag(e1, e2) * f.k_inv
    }

    pub fn weight(&self, n: usize) -> f64 {
        self.weights[n]
    }

    pub fn propagate(&self, tau: f64, s: &ProductState) -> Result<ProductState> {
        if !(tau >= 0.0) {
            return Err(Error::Domain(format!("negative time {tau}")));
        }
        if s.len() != self.slot_eigen.len() || s.velocity.len() != self.slot_eigen.len() {
            return Err(Error::Dimension { expected: self.slot_eigen.len(), got: s.len() });
        }
        if tau == 0.0 {
            return Ok(s.clone());
        }
        let blocks: Vec<Mat2> = (0..self.factors.len()).map(|n| self.block(n, tau, 0.0)).collect();
        let mut out = ProductState::zeros(s.len());
        for (slot, &n) in self.slot_eigen.iter().enumerate() {
            let [x, v] = blocks[n].apply([s.position.0[slot], s.velocity.0[slot]]);
            out.position.0[slot] = x;
            out.velocity.0[slot] = v;
        }
        Ok(out)
    }

    /// `A s`, the generator applied slot-wise.
    pub fn generator(&self, model: &SpectralModel, s: &ProductState) -> ProductState {
        let mut out = ProductState::zeros(s.len());
        for slot in 0..s.len() {
            let b = modal::generator_block(model.slot_eigenvalue(slot), model.alpha(), model.gamma());
            let [x, v] = b.apply([s.position.0[slot], s.velocity.0[slot]]);
            out.position.0[slot] = x;
            out.velocity.0[slot] = v;
        }
        out
    }
}

/// `T(tau) s` on `E_{1/2}` through the per-mode diagonalization.
pub fn block_semigroup(model: &SpectralModel, tau: f64, s: &ProductState) -> Result<ProductState> {
    if !(tau >= 0.0) {
        return Err(Error::Domain(format!("negative time {tau}")));
    }
    BlockPropagator::new(model)?.propagate(tau, s)
}

/// Uniform grid on `[0, 50/delta0]` with 2001 nodes.
pub fn default_tau_grid(delta0: f64) -> Vec<f64> {
    let n = 2000;
    let end = 50.0 / delta0;
    (0..=n).map(|i| end * i as f64 / n as f64).collect()
}

/// `(tau, ||T(tau)|| / e^{-delta0 tau})` for every `tau`.
pub fn decay_envelope(model: &SpectralModel, taus: &[f64]) -> Result<Vec<(f64, f64)>> {
    let prop = BlockPropagator::new(model)?;
    taus.iter()
        .map(|&tau| {
            if !(tau >= 0.0) {
                return Err(Error::Domain(format!("negative time {tau}")));
            }
            if tau == 0.0 {
                return Ok((tau, 1.0));
            }
            let ratio = (0..prop.factors.len())
                .map(|n| prop.block(n, tau, prop.delta0).weighted_norm(prop.weight(n)))
                .fold(0.0, f64::max);
            Ok((tau, ratio))
        })
        .collect()
}

/// Largest decay ratio over the default grid, refined around the best node;
/// at least one.
pub fn decay_constant(model: &SpectralModel) -> Result<f64> {
    let prop = BlockPropagator::new(model)?;
    let taus = default_tau_grid(prop.delta0);
    let envelope = decay_envelope(model, &taus)?;
    let (best, sampled) = envelope
        .iter()
        .enumerate()
        .fold((0, 1.0f64), |(bi, bv), (i, &(_, r))| if r > bv { (i, r) } else { (bi, bv) });
    let ratio = |tau: f64| {
        (0..prop.factors.len())
            .map(|n| prop.block(n, tau, prop.delta0).weighted_norm(prop.weight(n)))
            .fold(0.0, f64::max)
    };
    if best == 0 {
        return Ok(sampled);
    }
    let refined = golden_max(ratio, taus[best - 1], taus[(best + 1).min(taus.len() - 1)]);
    Ok(sampled.max(refined))
}

/// `∫_0^∞ max_n ||T_n(tau) (0, 1)||_{E_{1/2}} dtau`: the exact gain of the
/// convolution `g -> ∫ T(t - s) (0, g(s)) ds` from `sup ||g||` to
/// `sup ||.||_{E_{1/2}}` for the truncated model.
pub fn velocity_gain(model: &SpectralModel) -> Result<f64> {
    let prop = BlockPropagator::new(model)?;
    let end = 60.0 / prop.delta0;
    let n = 20_000usize;
    let h = end / n as f64;
    let e2 = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
    let integrand = |tau: f64| -> f64 {
        (0..prop.factors.len())
            .map(|k| {
                let [x, v] = prop.block(k, tau, 0.0).apply(e2);
                (prop.weight(k) * x.norm_sqr() + v.norm_sqr()).sqrt()
            })
            .fold(0.0, f64::max)
    };
    // composite Simpson
    let mut acc = integrand(0.0) + integrand(end);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * integrand(i as f64 * h);
    }
    Ok(acc * h / 3.0)
}

/// Constants of `||T(t)x||_beta <= M(beta) e^{-(delta/2) t} t^{-beta} ||x||` and
/// `d(beta) = M(beta) (2/delta)^{1-beta} Gamma(1-beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothingConstants {
    pub beta: f64,
    pub m_beta: f64,
    pub delta: f64,
    pub d_beta: f64,
}

impl SmoothingConstants {
    /// Uses a given `M(beta)` instead of measuring it.
    pub fn with_m(m_beta: f64, beta: f64, delta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Domain(format!("beta = {beta} outside (0,1)")));
        }
        if !(delta > 0.0) {
            return Err(Error::Domain(format!("delta = {delta} must be positive")));
        }
        if !(m_beta > 0.0) {
            return Err(Error::Domain(format!("M(beta) = {m_beta} must be positive")));
        }
        let d_beta = m_beta * (2.0 / delta).powf(1.0 - beta) * gamma_fn(1.0 - beta);
        Ok(Self { beta, m_beta, delta, d_beta })
    }
}

fn mode_peak(lambda: f64, beta: f64, delta: f64) -> f64 {
    let rate = lambda - delta / 2.0;
    let f = |t: f64| lambda.powf(beta) * t.powf(beta) * (-rate * t).exp();
    let scale = 1.0 / rate;
    let n = 4000;
    let ts: Vec<f64> = (0..=n).map(|i| scale * 10f64.powf(-4.0 + 6.0 * i as f64 / n as f64)).collect();
    let (best, _) = ts
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &t)| if f(t) > bv { (i, f(t)) } else { (bi, bv) });
    golden_max(f, ts[best.saturating_sub(1)], ts[(best + 1).min(n)]).max(f(ts[best]))
}

/// Golden-section search for a local maximum of `f` on `[a, b]`.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f(0.5 * (a + b))
}

/// Measures `M(beta) = sup_{j, t > 0} lambda_j^beta t^beta e^{-(lambda_j - delta/2) t}`
/// for the truncated model and derives `d(beta)`.
pub fn smoothing_constants(model: &SpectralModel, beta: f64, delta: f64) -> Result<SmoothingConstants> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!("beta = {beta} outside (0,1)")));
    }
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("delta = {delta} must be positive")));
    }
    let lambda1 = model.eigenvalues()[0];
    if delta > lambda1 {
        return Err(Error::Domain(format!("inconsistent rate: delta = {delta} exceeds lambda_1 = {lambda1}")));
    }
    let m = model.eigenvalues().iter().map(|&l| mode_peak(l, beta, delta)).fold(0.0, f64::max);
    SmoothingConstants::with_m(m, beta, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn single(lambda: f64, alpha: f64, gamma: f64) -> SpectralModel {
        SpectralModel::simple(vec![lambda], alpha, gamma).unwrap()
    }

    fn rk4_oscillator(lambda: f64, damp: f64, x0: f64, v0: f64, t: f64, h: f64) -> (f64, f64) {
        let f = |x: f64, v: f64| (v, -lambda * x - damp * v);
        let steps = (t / h).round() as usize;
        let (mut x, mut v) = (x0, v0);
        for _ in 0..steps {
            let k1 = f(x, v);
            let k2 = f(x + 0.5 * h * k1.0, v + 0.5 * h * k1.1);
            let k3 = f(x + 0.5 * h * k2.0, v + 0.5 * h * k2.1);
            let k4 = f(x + h * k3.0, v + h * k3.1);
            x += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        (x, v)
    }

    #[test]
    fn scalar_examples() {
        let m = single(1.0, 0.5, 0.5);
        let u = ModeCoeffs::from_real(&[1.0]);
        assert_eq!(scalar_semigroup(&m, 0.0, &u).unwrap(), u);
        let v = scalar_semigroup(&m, 1.0, &u).unwrap();
        assert!((v.0[0].re - (-1.0f64).exp()).abs() < 1e-15);
        let m2 = SpectralModel::simple(vec![1.0, 2.0], 0.5, 0.5).unwrap();
        let v = scalar_semigroup(&m2, 2f64.ln(), &ModeCoeffs::from_real(&[1.0, 1.0])).unwrap();
        assert!((v.0[0].re - 0.5).abs() < 1e-15 && (v.0[1].re - 0.25).abs() < 1e-15);
        assert!(scalar_semigroup(&m, -1.0, &u).is_err());
    }

    #[test]
    fn scalar_semigroup_law_and_bound() {
        let m = SpectralModel::new(vec![0.7, 2.0, 5.0], vec![1, 2, 1], 0.5, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let u = ModeCoeffs::from_real(&(0..4).map(|_| rng.gen_range(-3.0..3.0)).collect::<Vec<_>>());
            let (t, s) = (rng.gen_range(0.0..4.0), rng.gen_range(0.0..4.0));
            let two = scalar_semigroup(&m, t, &scalar_semigroup(&m, s, &u).unwrap()).unwrap();
            let one = scalar_semigroup(&m, t + s, &u).unwrap();
            for (a, b) in two.0.iter().zip(&one.0) {
                assert!((a - b).norm() <= 1e-13 * (1.0 + b.norm()));
            }
            let n = crate::spectral::norm_beta(&m, &scalar_semigroup(&m, t, &u).unwrap(), 0.0).unwrap();
            let n0 = crate::spectral::norm_beta(&m, &u, 0.0).unwrap();
            assert!(n <= (-0.7 * t).exp() * n0 * (1.0 + 1e-14));
        }
    }

    #[test]
    fn damped_oscillator_closed_form() {
        let m = single(4.0, 0.5, 0.5);
        let s = ProductState::from_real(&[1.0], &[0.0]);
        assert_eq!(block_semigroup(&m, 0.0, &s).unwrap(), s);
        let out = block_semigroup(&m, 1.0, &s).unwrap();
        let w = 3.0f64.sqrt();
        let exact = (-1.0f64).exp() * (w.cos() + w.sin() / w);
        assert!((out.position.0[0].re - exact).abs() < 1e-14);
        assert!((exact - 0.150_574_365).abs() < 1e-9);
        let (x, _) = rk4_oscillator(4.0, 2.0, 1.0, 0.0, 1.0, 1e-4);
        assert!((out.position.0[0].re - x).abs() < 1e-12);
        assert!(out.imaginary_residue() < 1e-12);
    }

    #[test]
    fn matches_direct_integration() {
        let m = SpectralModel::simple(vec![1.0, 9.0, 30.0], 0.6, 0.9).unwrap();
        let prop = BlockPropagator::new(&m).unwrap();
        let s = ProductState::from_real(&[0.3, -1.0, 0.5], &[1.0, 0.2, -2.0]);
        for tau in [0.5, 2.0, 10.0] {
            let out = prop.propagate(tau, &s).unwrap();
            for (slot, &l) in m.eigenvalues().iter().enumerate() {
                let damp = 2.0 * 0.9 * l.powf(0.6);
                let (x, v) = rk4_oscillator(l, damp, s.position.0[slot].re, s.velocity.0[slot].re, tau, 2e-4);
                let tol = 1e-8 * (x.abs() + v.abs()) + 1e-15;
                assert!((out.position.0[slot].re - x).abs() <= tol, "tau {tau} slot {slot}");
                assert!((out.velocity.0[slot].re - v).abs() <= tol, "tau {tau} slot {slot}");
            }
        }
    }

    #[test]
    fn decay_envelope_examples() {
        let m = single(4.0, 0.5, 0.5);
        let taus = default_tau_grid(1.0);
        let env = decay_envelope(&m, &taus).unwrap();
        assert_eq!(env[0], (0.0, 1.0));
        assert!(env.iter().all(|&(_, r)| r.is_finite() && r >= 0.0));
        let n_prime = env.iter().map(|&(_, r)| r).fold(1.0, f64::max);
        assert!(n_prime.is_finite() && n_prime >= 1.0);
        assert!(decay_envelope(&m, &[-1.0]).is_err());
    }

    #[test]
    fn smoothing_examples() {
        // calculus oracle: maximizer t* = 2 beta / (2 lambda - delta)
        let m = single(1.0, 0.5, 0.5);
        let c = smoothing_constants(&m, 0.5, 1.0).unwrap();
        let t_star: f64 = 2.0 * 0.5 / (2.0 * 1.0 - 1.0);
        let oracle = t_star.sqrt() * (-(1.0 - 0.5) * t_star).exp();
        assert!((c.m_beta - oracle).abs() < 1e-12);
        assert!((c.m_beta - (-0.5f64).exp()).abs() < 1e-12);

        let c = SmoothingConstants::with_m(1.0, 0.5, 2.0).unwrap();
        assert!((c.d_beta - PI.sqrt()).abs() < 1e-10);
        let c = SmoothingConstants::with_m(1.0, 0.5, 2.0 * PI).unwrap();
        assert!((c.d_beta - 1.0).abs() < 1e-10);

        assert!(smoothing_constants(&m, 1.0, 0.5).is_err());
        assert!(smoothing_constants(&m, 0.5, 2.0).is_err());
    }

    #[test]
    fn smoothing_constant_over_several_modes() {
        let m = SpectralModel::simple(vec![1.0, 3.0, 10.0], 0.5, 0.5).unwrap();
        let c = smoothing_constants(&m, 0.3, 0.8).unwrap();
        let oracle = m
            .eigenvalues()
            .iter()
            .map(|&l: &f64| {
                let t = 0.3 / (l - 0.4);
                l.powf(0.3) * t.powf(0.3) * (-(l - 0.4) * t).exp()
            })
            .fold(0.0, f64::max);
        assert!((c.m_beta - oracle).abs() < 1e-12 * oracle);
        let d_oracle = oracle * (2.0f64 / 0.8).powf(0.7) * gamma_fn(0.7);
        assert!((c.d_beta - d_oracle).abs() < 1e-10 * d_oracle);
    }

    #[test]
    fn velocity_gain_single_mode() {
        // direct Riemann sum of the impulse response norm
        let m = single(2.0, 0.5, 0.5);
        let g = velocity_gain(&m).unwrap();
        let w = 1.5f64.sqrt();
        let a = 1.0 / 2f64.sqrt();
        let h = 1e-3;
        let mut acc = 0.0;
        for i in 0..100_000 {
            let t = (i as f64 + 0.5) * h;
            let x = (-a * t).exp() * (w * t).sin() / w;
            let v = (-a * t).exp() * ((w * t).cos() - a * (w * t).sin() / w);
            acc += (2.0 * x * x + v * v).sqrt() * h;
        }
        assert!((g - acc).abs() < 1e-6, "{g} vs {acc}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn d_beta_monotone(m1 in 0.1f64..5.0, dm in 0.0f64..5.0, delta in 0.1f64..5.0, dd in 0.0f64..3.0, beta in 0.05f64..0.95) {
            let base = SmoothingConstants::with_m(m1, beta, delta + dd).unwrap();
            let more_m = SmoothingConstants::with_m(m1 + dm, beta, delta + dd).unwrap();
            let less_delta = SmoothingConstants::with_m(m1, beta, delta).unwrap();
            prop_assert!(more_m.d_beta >= base.d_beta);
            prop_assert!(less_delta.d_beta >= base.d_beta);
        }
    }
}
