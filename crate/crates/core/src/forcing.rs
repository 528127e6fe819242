//! Forcing terms `f(t, phi) = g(t, phi) + h(t)` split into an almost
//! automorphic part `g` and an ergodic (mean-zero in the averaged norm) part
//! `h`. Forcing acts on the velocity equation only.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use crate::certificate::Certificate;
use crate::error::{Error, Result};
use crate::spectral::{norm_beta, ModeCoeffs, SpectralModel};

/// Which of the two function classes a scalar signal belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalClass {
    AlmostAutomorphic,
    Ergodic,
}

/// Scalar time signals used to build forcing terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum Signal {
    Zero,
    Constant { value: f64 },
    /// `amplitude sin(frequency t + phase)`
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `amplitude (sin(a t) + sin(b t))`, almost periodic when `a/b` is irrational.
    TwoTone { amplitude: f64, a: f64, b: f64 },
    /// `amplitude sin(1 / (2 + cos t + cos(sqrt(2) t)))`: almost automorphic but
    /// not almost periodic.
    AutomorphicBump { amplitude: f64 },
    /// `amplitude e^{-|t - center|}`
    ExpDecay {
        amplitude: f64,
        #[serde(default)]
        center: f64,
    },
    /// `amplitude / (1 + t^2)`
    Lorentzian { amplitude: f64 },
    /// `amplitude e^{-t^2}`
    Gaussian { amplitude: f64 },
}

impl Signal {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Signal::Zero => 0.0,
            Signal::Constant { value } => value,
            Signal::Sine { amplitude, frequency, phase } => amplitude * (frequency * t + phase).sin(),
            Signal::TwoTone { amplitude, a, b } => amplitude * ((a * t).sin() + (b * t).sin()),
            Signal::AutomorphicBump { amplitude } => {
                amplitude * (1.0 / (2.0 + t.cos() + (SQRT_2 * t).cos())).sin()
            }
            Signal::ExpDecay { amplitude, center } => amplitude * (-(t - center).abs()).exp(),
            Signal::Lorentzian { amplitude } => amplitude / (1.0 + t * t),
            Signal::Gaussian { amplitude } => amplitude * (-t * t).exp(),
        }
    }

    pub fn class(&self) -> SignalClass {
        match self {
            Signal::ExpDecay { .. } | Signal::Lorentzian { .. } | Signal::Gaussian { .. } => SignalClass::Ergodic,
            _ => SignalClass::AlmostAutomorphic,
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Signal::Zero => true,
            Signal::Constant { value } => value == 0.0,
            Signal::Sine { amplitude, .. }
            | Signal::TwoTone { amplitude, .. }
            | Signal::AutomorphicBump { amplitude }
            | Signal::ExpDecay { amplitude, .. }
            | Signal::Lorentzian { amplitude }
            | Signal::Gaussian { amplitude } => amplitude == 0.0,
        }
    }

    /// Upper bound on `sup_t |signal(t)|`.
    pub fn sup_bound(&self) -> f64 {
        match *self {
            Signal::Zero => 0.0,
            Signal::Constant { value } => value.abs(),
            Signal::TwoTone { amplitude, .. } => 2.0 * amplitude.abs(),
            Signal::Sine { amplitude, .. }
            | Signal::AutomorphicBump { amplitude }
            | Signal::ExpDecay { amplitude, .. }
            | Signal::Lorentzian { amplitude }
            | Signal::Gaussian { amplitude } => amplitude.abs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Signal::Zero => true,
            Signal::Constant { value } => value.is_finite(),
            Signal::Sine { amplitude, frequency, phase } => {
                amplitude.is_finite() && frequency.is_finite() && phase.is_finite()
            }
            Signal::TwoTone { amplitude, a, b } => amplitude.is_finite() && a.is_finite() && b.is_finite(),
            Signal::ExpDecay { amplitude, center } => amplitude.is_finite() && center.is_finite(),
            Signal::AutomorphicBump { amplitude } | Signal::Lorentzian { amplitude } | Signal::Gaussian { amplitude } => {
                amplitude.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("non-finite signal parameter in {self:?}")))
        }
    }
}

/// State-dependent part of the forcing, applied slot-wise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateCoupling {
    #[default]
    None,
    /// `strength * sin(Re phi_j)` on every slot.
    SineSaturation { strength: f64 },
}

impl StateCoupling {
    fn apply(&self, x: Complex64) -> f64 {
        match *self {
            StateCoupling::None => 0.0,
            StateCoupling::SineSaturation { strength } => strength * x.re.sin(),
        }
    }

    /// Closed-form Lipschitz constant from `||.||_{1/2}` to `||.||`.
    pub fn lipschitz(&self, lambda1: f64) -> f64 {
        match *self {
            StateCoupling::None => 0.0,
            StateCoupling::SineSaturation { strength } => strength.abs() / lambda1.sqrt(),
        }
    }
}

/// `f(t, phi) = profile * (aa(t) + ergodic(t)) + coupling(phi)`.
///
/// The almost automorphic part is `profile * aa(t) + coupling(phi)`; the
/// ergodic part is `profile * ergodic(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingFunction {
    #[serde(default = "zero_signal")]
    pub aa: Signal,
    #[serde(default = "zero_signal")]
    pub ergodic: Signal,
    /// Weight per slot; missing trailing slots are zero.
    #[serde(default)]
    pub profile: Vec<f64>,
    #[serde(default)]
    pub coupling: StateCoupling,
    /// Known Lipschitz constant; replaces the sampled estimate.
    #[serde(default)]
    pub lipschitz_override: Option<f64>,
}

fn zero_signal() -> Signal {
    Signal::Zero
}

/// Safety factor applied to sampled Lipschitz ratios.
pub const LIPSCHITZ_SAFETY: f64 = 1.25;

impl ForcingFunction {
    pub fn zero() -> Self {
        Self { aa: Signal::Zero, ergodic: Signal::Zero, profile: Vec::new(), coupling: StateCoupling::None, lipschitz_override: None }
    }

    /// State-independent forcing `signal(t)` on slot 0 only.
    pub fn first_mode(aa: Signal, ergodic: Signal) -> Self {
        Self { aa, ergodic, profile: vec![1.0], coupling: StateCoupling::None, lipschitz_override: None }
    }

    pub fn validate(&self, model: &SpectralModel) -> Result<()> {
        if self.profile.len() > model.mode_count() {
            return Err(Error::Dimension { expected: model.mode_count(), got: self.profile.len() });
        }
        if self.profile.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("non-finite forcing profile".into()));
        }
        self.aa.validate()?;
        self.ergodic.validate()?;
        if let StateCoupling::SineSaturation { strength } = self.coupling {
            if !strength.is_finite() {
                return Err(Error::Domain("non-finite coupling strength".into()));
            }
        }
        if let Some(l) = self.lipschitz_override {
            if !(l >= 0.0) {
                return Err(Error::Domain(format!("lipschitz override {l} must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn is_state_independent(&self) -> bool {
        matches!(self.coupling, StateCoupling::None)
    }

    fn weight(&self, slot: usize) -> f64 {
        self.profile.get(slot).copied().unwrap_or(0.0)
    }

    pub fn aa_part(&self, t: f64, position: &ModeCoeffs) -> ModeCoeffs {
        let a = self.aa.eval(t);
        ModeCoeffs(
            position
                .0
                .iter()
                .enumerate()
                .map(|(j, &x)| Complex64::new(self.weight(j) * a + self.coupling.apply(x), 0.0))
                .collect(),
        )
    }

    pub fn ergodic_part(&self, t: f64, position: &ModeCoeffs) -> ModeCoeffs {
        let e = self.ergodic.eval(t);
        ModeCoeffs((0..position.len()).map(|j| Complex64::new(self.weight(j) * e, 0.0)).collect())
    }

    /// `f(t, phi)` as velocity-slot coefficients.
    pub fn evaluate(&self, t: f64, position: &ModeCoeffs) -> ModeCoeffs {
        let s = self.aa.eval(t) + self.ergodic.eval(t);
        ModeCoeffs(
            position
                .0
                .iter()
                .enumerate()
                .map(|(j, &x)| Complex64::new(self.weight(j) * s + self.coupling.apply(x), 0.0))
                .collect(),
        )
    }

    /// Upper bound on `sup_t ||f(t, phi)||` over `||phi||_{1/2} <= radius`.
    pub fn ball_bound(&self, model: &SpectralModel, radius: f64) -> f64 {
        let p: f64 = self.profile.iter().map(|w| w * w).sum::<f64>().sqrt();
        let signal = self.aa.sup_bound() + self.ergodic.sup_bound();
        p * signal + self.coupling.lipschitz(model.eigenvalues()[0]) * radius
    }

    /// Lipschitz constant of `phi -> f(t, phi)` from `||.||_{1/2}` to `||.||`:
    /// the override when given, otherwise the largest sampled difference
    /// quotient times [`LIPSCHITZ_SAFETY`].
    pub fn lipschitz_bound(&self, model: &SpectralModel, radius: f64, budget: usize, seed: u64) -> f64 {
        if let Some(l) = self.lipschitz_override {
            return l;
        }
        if self.is_state_independent() {
            return 0.0;
        }
        LIPSCHITZ_SAFETY * self.sampled_modulus(model, radius, budget, seed).0
    }

    /// Largest sampled `||f(t,u) - f(t,v)|| / ||u - v||_{1/2}` with its witness time.
    fn sampled_modulus(&self, model: &SpectralModel, radius: f64, budget: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4c49_5053);
        let mut best = (0.0f64, 0.0f64);
        for k in 0..budget {
            let t = rng.gen_range(-1e4..1e4);
            let u = ball_sample(model, radius, &mut rng);
            // alternate far pairs with near pairs
            let v = if k % 2 == 0 {
                ball_sample(model, radius, &mut rng)
            } else {
                let d = ball_sample(model, radius * 1e-3, &mut rng);
                u.add(&d)
            };
            let du = norm_beta(model, &u.sub(&v), 0.5).unwrap_or(0.0);
            if du == 0.0 {
                continue;
            }
            let df = norm_beta(model, &self.evaluate(t, &u).sub(&self.evaluate(t, &v)), 0.0).unwrap_or(0.0);
            if df / du > best.0 {
                best = (df / du, t);
            }
        }
        best
    }
}

/// Random point of `{||phi||_{1/2} <= radius}`.
pub(crate) fn ball_sample(model: &SpectralModel, radius: f64, rng: &mut ChaCha8Rng) -> ModeCoeffs {
    let n = model.mode_count();
    let raw = ModeCoeffs::from_real(&(0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
    let norm = norm_beta(model, &raw, 0.5).unwrap_or(0.0);
    if norm == 0.0 {
        return ModeCoeffs::zeros(n);
    }
    let r = if rng.gen_bool(0.25) { radius } else { radius * rng.gen_range(0.0..1.0) };
    raw.scale(r / norm)
}

/// Forcing smallness on the ball: sampled `sup ||f(t, phi)|| <= L / (2 d(beta))`
/// over `||phi||_{1/2} <= L`, plus agreement of the sampled continuity
/// modulus with the declared Lipschitz bound.
pub fn check_h4(
    f: &ForcingFunction,
    model: &SpectralModel,
    d_beta: f64,
    radius: f64,
    sample_budget: usize,
    seed: u64,
) -> Result<Certificate> {
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("ball radius {radius} must be positive")));
    }
    if !(d_beta > 0.0) {
        return Err(Error::Domain(format!("d(beta) = {d_beta} must be positive")));
    }
    f.validate(model)?;
    let bound = radius / (2.0 * d_beta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.mode_count();
    let budget = sample_budget.max(1);
    let mut sup = 0.0f64;
    let mut witness = (0.0, 0.0);
    // regular sweep of [-T, T] on the zero state, then random (t, phi) pairs
    let span = 1e4;
    for k in 0..budget {
        let t = -span + 2.0 * span * k as f64 / budget as f64;
        let v = norm_beta(model, &f.evaluate(t, &ModeCoeffs::zeros(n)), 0.0)?;
        if v > sup {
            sup = v;
            witness = (t, 0.0);
        }
    }
    for _ in 0..budget {
        let t = rng.gen_range(-span..span);
        let phi = ball_sample(model, radius, &mut rng);
        let v = norm_beta(model, &f.evaluate(t, &phi), 0.0)?;
        if v > sup {
            sup = v;
            witness = (t, norm_beta(model, &phi, 0.5)?);
        }
    }
    let lipschitz = f.lipschitz_bound(model, radius, budget, seed);
    let (modulus, modulus_t) = f.sampled_modulus(model, radius, budget, seed.wrapping_add(1));
    let mut cert = Certificate::upper_bound("H4", sup, bound)
        .with_constant("L", radius)
        .with_constant("d_beta", d_beta)
        .with_constant("lipschitz_bound", lipschitz)
        .with_constant("sampled_modulus", modulus)
        .with_witness(format!("sup at t = {}, |phi|_1/2 = {}", witness.0, witness.1));
    if modulus > lipschitz * (1.0 + 1e-9) {
        cert = cert.failed(format!(
            "difference quotient {modulus} at t = {modulus_t} exceeds the Lipschitz bound {lipschitz}"
        ));
    }
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> SpectralModel {
        SpectralModel::simple(vec![2.0, 5.0, 9.0], 0.5, 0.5).unwrap()
    }

    #[test]
    fn h4_zero_forcing_passes() {
        let c = check_h4(&ForcingFunction::zero(), &model(), 1.0, 1.0, 500, 1).unwrap();
        assert!(c.passed);
        assert_eq!(c.quantity, 0.0);
    }

    #[test]
    fn h4_equality_case() {
        let (l, d) = (3.0, 1.5);
        let amp = l / (2.0 * d);
        let f = ForcingFunction::first_mode(Signal::Sine { amplitude: amp, frequency: 1.0, phase: 0.0 }, Signal::Zero);
        let c = check_h4(&f, &model(), d, l, 4000, 3).unwrap();
        assert!(c.passed);
        assert!(c.margin >= 0.0 && c.margin < 1e-4 * c.bound, "margin {}", c.margin);
    }

    #[test]
    fn h4_constant_exceeding_fails() {
        let l = 2.0;
        let f = ForcingFunction::first_mode(Signal::Constant { value: l }, Signal::Zero);
        let c = check_h4(&f, &model(), 1.0, l, 100, 3).unwrap();
        assert!(!c.passed);
        assert!(c.witness.is_some());
    }

    #[test]
    fn lipschitz_estimate_and_override() {
        let m = model();
        let mut f = ForcingFunction::zero();
        f.coupling = StateCoupling::SineSaturation { strength: 0.2 };
        let closed = f.coupling.lipschitz(2.0);
        let est = f.lipschitz_bound(&m, 1.0, 2000, 9);
        // sampled quotient never exceeds the closed form; safety factor puts it near
        assert!(est <= LIPSCHITZ_SAFETY * closed * (1.0 + 1e-12));
        assert!(est >= 0.5 * closed);
        let c = check_h4(&f, &m, 1.0, 1.0, 1000, 2).unwrap();
        assert!(c.passed);

        f.lipschitz_override = Some(1e-6);
        let c = check_h4(&f, &m, 1.0, 1.0, 1000, 2).unwrap();
        assert!(!c.passed, "override below the observed modulus must fail");
        assert!(ForcingFunction::zero().lipschitz_bound(&m, 1.0, 10, 0) == 0.0);
    }

    #[test]
    fn decomposition_sums() {
        let m = model();
        let f = ForcingFunction {
            aa: Signal::TwoTone { amplitude: 0.3, a: 1.0, b: SQRT_2 },
            ergodic: Signal::Lorentzian { amplitude: 2.0 },
            profile: vec![1.0, -0.5],
            coupling: StateCoupling::SineSaturation { strength: 0.1 },
            lipschitz_override: None,
        };
        f.validate(&m).unwrap();
        let x = ModeCoeffs::from_real(&[0.3, -0.2, 1.0]);
        for t in [-3.0, 0.0, 0.7, 11.0] {
            let sum = f.aa_part(t, &x).add(&f.ergodic_part(t, &x));
            for (a, b) in sum.0.iter().zip(&f.evaluate(t, &x).0) {
                assert!((a - b).norm() <= 1e-15 * b.norm().max(1.0));
            }
        }
        let too_long = ForcingFunction { profile: vec![1.0; 4], ..f };
        assert!(too_long.validate(&m).is_err());
    }

    #[test]
    fn signal_classes() {
        assert_eq!(Signal::Gaussian { amplitude: 1.0 }.class(), SignalClass::Ergodic);
        assert_eq!(Signal::AutomorphicBump { amplitude: 1.0 }.class(), SignalClass::AlmostAutomorphic);
        assert_eq!(Signal::ExpDecay { amplitude: 1.0, center: 0.0 }.eval(0.0), 1.0);
    }
}
