//! Spectral data of the self-adjoint operator `A` and the coefficient spaces
//! built on it.
//!
//! Everything is expressed in the eigenbasis of `A`: a vector is a list of
//! coefficients, one slot per eigenfunction. An eigenvalue with multiplicity
//! `m` occupies `m` consecutive slots.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Truncated spectral model of `A` together with the damping data of
/// `B = 2 gamma A^alpha`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralModel {
    eigenvalues: Vec<f64>,
    multiplicities: Vec<usize>,
    alpha: f64,
    gamma: f64,
    beta: f64,
    #[serde(skip)]
    slot_eigen: Vec<usize>,
}

impl SpectralModel {
    /// Builds a model with `beta = 1/2`.
    pub fn new(eigenvalues: Vec<f64>, multiplicities: Vec<usize>, alpha: f64, gamma: f64) -> Result<Self> {
        Self::with_beta(eigenvalues, multiplicities, alpha, gamma, 0.5)
    }

    /// Simple spectrum: every multiplicity is one.
    pub fn simple(eigenvalues: Vec<f64>, alpha: f64, gamma: f64) -> Result<Self> {
        let m = vec![1; eigenvalues.len()];
        Self::new(eigenvalues, m, alpha, gamma)
    }

    pub fn with_beta(
        eigenvalues: Vec<f64>,
        multiplicities: Vec<usize>,
        alpha: f64,
        gamma: f64,
        beta: f64,
    ) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidModel("no eigenvalues".into()));
        }
        if eigenvalues.len() != multiplicities.len() {
            return Err(Error::Dimension { expected: eigenvalues.len(), got: multiplicities.len() });
        }
        if !eigenvalues.iter().all(|l| l.is_finite() && *l > 0.0) {
            return Err(Error::InvalidModel("eigenvalues must be finite and positive".into()));
        }
        if eigenvalues.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidModel("eigenvalues must be strictly increasing".into()));
        }
        if multiplicities.contains(&0) {
            return Err(Error::InvalidModel("multiplicities must be >= 1".into()));
        }
        Self::check_exponents(alpha, gamma, beta)?;
        Ok(Self::assemble(eigenvalues, multiplicities, alpha, gamma, beta))
    }

    /// Skips the positivity and ordering checks on the eigenvalues. Only the
    /// exponent ranges are validated. Used to build deliberately degenerate
    /// models that exercise the stability certifier.
    #[doc(hidden)]
    pub fn unchecked(eigenvalues: Vec<f64>, alpha: f64, gamma: f64) -> Result<Self> {
        Self::check_exponents(alpha, gamma, 0.5)?;
        let m = vec![1; eigenvalues.len()];
        Ok(Self::assemble(eigenvalues, m, alpha, gamma, 0.5))
    }

    fn check_exponents(alpha: f64, gamma: f64, beta: f64) -> Result<()> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidModel(format!("alpha = {alpha} outside (0,1)")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidModel(format!("gamma = {gamma} must be positive")));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidModel(format!("beta = {beta} outside (0,1)")));
        }
        Ok(())
    }

    fn assemble(eigenvalues: Vec<f64>, multiplicities: Vec<usize>, alpha: f64, gamma: f64, beta: f64) -> Self {
        let slot_eigen = multiplicities
            .iter()
            .enumerate()
            .flat_map(|(j, &m)| std::iter::repeat_n(j, m))
            .collect();
        Self { eigenvalues, multiplicities, alpha, gamma, beta, slot_eigen }
    }

    /// Model restricted to the first `slots` coefficient slots.
    pub fn leading_slots(&self, slots: usize) -> Result<Self> {
        if slots == 0 || slots > self.mode_count() {
            return Err(Error::Dimension { expected: self.mode_count(), got: slots });
        }
        let mut eigs = Vec::new();
        let mut mult = Vec::new();
        let mut left = slots;
        for (&l, &m) in self.eigenvalues.iter().zip(&self.multiplicities) {
            if left == 0 {
                break;
            }
            let take = m.min(left);
            eigs.push(l);
            mult.push(take);
            left -= take;
        }
        Ok(Self::assemble(eigs, mult, self.alpha, self.gamma, self.beta))
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Number of distinct eigenvalues.
    pub fn eigen_count(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Total number of coefficient slots, `sum of multiplicities`.
    pub fn mode_count(&self) -> usize {
        self.slot_eigen.len()
    }

    /// Index of the distinct eigenvalue that owns coefficient slot `slot`.
    pub fn eigen_index(&self, slot: usize) -> usize {
        self.slot_eigen[slot]
    }

    /// Eigenvalue seen by each coefficient slot.
    pub fn slot_eigenvalue(&self, slot: usize) -> f64 {
        self.eigenvalues[self.slot_eigen[slot]]
    }

    /// Column label for a slot: 1-based eigenvalue index, then the slot
    /// within its eigenspace (`3.2` is the second slot of the third eigenvalue).
    pub fn slot_label(&self, slot: usize) -> String {
        let j = self.slot_eigen[slot];
        let first = self.slot_eigen.iter().position(|&e| e == j).unwrap_or(slot);
        format!("{}.{}", j + 1, slot - first + 1)
    }

    /// Same spectrum with every eigenvalue multiplied by `c > 0`.
    pub fn rescaled(&self, c: f64) -> Result<Self> {
        Self::with_beta(
            self.eigenvalues.iter().map(|l| l * c).collect(),
            self.multiplicities.clone(),
            self.alpha,
            self.gamma,
            self.beta,
        )
    }

    pub fn check_len(&self, u: &ModeCoeffs) -> Result<()> {
        if u.len() != self.mode_count() {
            return Err(Error::Dimension { expected: self.mode_count(), got: u.len() });
        }
        Ok(())
    }
}

/// Coefficients of a vector of `H` against the eigenbasis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCoeffs(pub Vec<Complex64>);

impl ModeCoeffs {
    pub fn zeros(n: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.0
    }

    pub fn scale(&self, a: f64) -> Self {
        Self(self.0.iter().map(|v| v * a).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }
}

/// A point `(phi, phi')` of `E_{1/2} = D(A^{1/2}) x H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductState {
    pub position: ModeCoeffs,
    pub velocity: ModeCoeffs,
}

impl ProductState {
    pub fn zeros(n: usize) -> Self {
        Self { position: ModeCoeffs::zeros(n), velocity: ModeCoeffs::zeros(n) }
    }

    pub fn new(position: ModeCoeffs, velocity: ModeCoeffs) -> Self {
        Self { position, velocity }
    }

    pub fn from_real(position: &[f64], velocity: &[f64]) -> Self {
        Self { position: ModeCoeffs::from_real(position), velocity: ModeCoeffs::from_real(velocity) }
    }

    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { position: self.position.add(&other.position), velocity: self.velocity.add(&other.velocity) }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { position: self.position.sub(&other.position), velocity: self.velocity.sub(&other.velocity) }
    }

    pub fn scale(&self, a: f64) -> Self {
        Self { position: self.position.scale(a), velocity: self.velocity.scale(a) }
    }

    /// Largest imaginary part relative to the largest modulus.
    pub fn imaginary_residue(&self) -> f64 {
        let all = self.position.0.iter().chain(&self.velocity.0);
        let (im, abs) = all.fold((0.0f64, 0.0f64), |(im, abs), c| (im.max(c.im.abs()), abs.max(c.norm())));
        if abs == 0.0 {
            0.0
        } else {
            im / abs
        }
    }
}

/// Uniform time grid carrying one state per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<ProductState>,
}

impl Trajectory {
    pub fn new(t0: f64, dt: f64, states: Vec<ProductState>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("time step {dt} must be positive")));
        }
        if let Some(first) = states.first() {
            let n = first.len();
            if let Some(bad) = states.iter().find(|s| s.len() != n || s.velocity.len() != n) {
                return Err(Error::Dimension { expected: n, got: bad.len() });
            }
        }
        Ok(Self { t0, dt, states })
    }

    pub fn zeros(t0: f64, dt: f64, nodes: usize, modes: usize) -> Self {
        Self { t0, dt, states: vec![ProductState::zeros(modes); nodes] }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    /// Grid index of time `t`, if `t` is a node up to `1e-6 dt`.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let x = (t - self.t0) / self.dt;
        let i = x.round();
        if (x - i).abs() > 1e-6 || i < 0.0 || i as usize >= self.len() {
            None
        } else {
            Some(i as usize)
        }
    }

    /// `sup_t ||Phi(t)||_{E_{1/2}}` over the grid.
    pub fn sup_norm(&self, model: &SpectralModel) -> Result<f64> {
        self.states.iter().try_fold(0.0f64, |m, s| Ok(m.max(product_norm(model, s)?)))
    }

    /// Sup-norm distance between two trajectories on the same grid.
    pub fn sup_distance(&self, model: &SpectralModel, other: &Trajectory) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::Dimension { expected: self.len(), got: other.len() });
        }
        self.states
            .iter()
            .zip(&other.states)
            .try_fold(0.0f64, |m, (a, b)| Ok(m.max(product_norm(model, &a.sub(b))?)))
    }

    /// Nodes with `t_start <= t <= t_end` (up to grid rounding).
    pub fn crop(&self, t_start: f64, t_end: f64) -> Result<Trajectory> {
        let i0 = self
            .node_index(t_start)
            .ok_or_else(|| Error::Coverage(format!("t = {t_start} is not a grid node")))?;
        let i1 = self
            .node_index(t_end)
            .ok_or_else(|| Error::Coverage(format!("t = {t_end} is not a grid node")))?;
        if i1 < i0 {
            return Err(Error::Domain("empty crop window".into()));
        }
        Ok(Trajectory { t0: self.time(i0), dt: self.dt, states: self.states[i0..=i1].to_vec() })
    }
}

/// `lambda_j^exponent * u_j` per slot.
pub fn fractional_apply(model: &SpectralModel, exponent: f64, u: &ModeCoeffs) -> Result<ModeCoeffs> {
    model.check_len(u)?;
    if !(exponent >= 0.0) {
        return Err(Error::Domain(format!("negative exponent {exponent}")));
    }
    let out = u
        .0
        .iter()
        .enumerate()
        .map(|(slot, v)| v * model.slot_eigenvalue(slot).powf(exponent))
        .collect();
    Ok(ModeCoeffs(out))
}

/// `||A^exponent u||`; `exponent = 0` gives the norm of `H`.
pub fn norm_beta(model: &SpectralModel, u: &ModeCoeffs, exponent: f64) -> Result<f64> {
    model.check_len(u)?;
    let s: f64 = u
        .0
        .iter()
        .enumerate()
        .map(|(slot, v)| model.slot_eigenvalue(slot).powf(2.0 * exponent) * v.norm_sqr())
        .sum();
    Ok(s.sqrt())
}

/// Norm of `E_{1/2}`: `sqrt(||A^{1/2} x||^2 + ||v||^2)`.
pub fn product_norm(model: &SpectralModel, s: &ProductState) -> Result<f64> {
    let p = norm_beta(model, &s.position, 0.5)?;
    let v = norm_beta(model, &s.velocity, 0.0)?;
    Ok(p.hypot(v))
}
