//! Per-mode dynamics of the first-order block operator.
//!
//! On the eigenspace of `lambda_n` the generator acts as the 2x2 companion
//! block `[[0, 1], [-lambda_n, -2 gamma lambda_n^alpha]]`, whose eigenvalues
//! are the roots of `rho^2 + 2 gamma lambda_n^alpha rho + lambda_n`.

use std::f64::consts::FRAC_PI_2;
use std::ops::Mul;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::semigroup;
use crate::spectral::SpectralModel;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Dense complex 2x2 matrix, row major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[Complex64; 2]; 2]);

impl Mat2 {
    pub fn identity() -> Self {
        Mat2([[ONE, ZERO], [ZERO, ONE]])
    }

    pub fn diag(a: Complex64, b: Complex64) -> Self {
        Mat2([[a, ZERO], [ZERO, b]])
    }

    pub fn from_real(m: [[f64; 2]; 2]) -> Self {
        Mat2([
            [Complex64::new(m[0][0], 0.0), Complex64::new(m[0][1], 0.0)],
            [Complex64::new(m[1][0], 0.0), Complex64::new(m[1][1], 0.0)],
        ])
    }

    pub fn det(&self) -> Complex64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == ZERO {
            return None;
        }
        let m = &self.0;
        Some(Mat2([[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]))
    }

    pub fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    /// Largest singular value, from the closed form for 2x2 matrices.
    pub fn spectral_norm(&self) -> f64 {
        let fro2: f64 = self.0.iter().flatten().map(|c| c.norm_sqr()).sum();
        let det = self.det().norm();
        let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0);
        ((fro2 + disc.sqrt()) / 2.0).sqrt()
    }

    /// Operator norm with respect to the weighted norm `sqrt(w|x|^2 + |v|^2)`,
    /// i.e. the spectral norm of `D M D^{-1}` with `D = diag(sqrt(w), 1)`.
    pub fn weighted_norm(&self, w: f64) -> f64 {
        let s = w.sqrt();
        let m = &self.0;
        Mat2([[m[0][0], m[0][1] * s], [m[1][0] / s, m[1][1]]]).spectral_norm()
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    fn mul(self, rhs: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = [[ZERO; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(out)
    }
}

/// The companion block of mode `lambda`.
pub fn generator_block(lambda: f64, alpha: f64, gamma: f64) -> Mat2 {
    Mat2::from_real([[0.0, 1.0], [-lambda, -2.0 * gamma * lambda.powf(alpha)]])
}

/// `rho^2 + 2 gamma lambda^alpha rho + lambda`, in Horner form.
pub fn characteristic_poly(lambda: f64, alpha: f64, gamma: f64, rho: Complex64) -> Complex64 {
    (rho + 2.0 * gamma * lambda.powf(alpha)) * rho + lambda
}

/// Both roots of the characteristic polynomial of one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeRoots {
    /// 1-based index of the distinct eigenvalue.
    pub mode_index: usize,
    pub lambda: f64,
    pub rho1: Complex64,
    pub rho2: Complex64,
    pub discriminant: Complex64,
}

/// Roots without the distinctness check. `rho1` has the larger real part,
/// ties broken by larger imaginary part.
fn raw_roots(lambda: f64, alpha: f64, gamma: f64) -> (Complex64, Complex64, f64) {
    let scale = lambda.powf(alpha);
    let disc = gamma * gamma - lambda.powf(1.0 - 2.0 * alpha);
    if lambda == 0.0 {
        return (ZERO, ZERO, disc);
    }
    if disc < 0.0 {
        // complex conjugate pair, real part exactly -gamma lambda^alpha
        let im = scale * (-disc).sqrt();
        let re = -gamma * scale;
        (Complex64::new(re, im), Complex64::new(re, -im), disc)
    } else {
        // the larger root in modulus carries no cancellation; the other follows from Vieta
        let big = -scale * (gamma + disc.sqrt());
        let small = lambda / big;
        (Complex64::new(small, 0.0), Complex64::new(big, 0.0), disc)
    }
}

/// Roots of the characteristic polynomial of the `n`-th distinct eigenvalue
/// (1-based).
pub fn mode_roots(model: &SpectralModel, n: usize) -> Result<ModeRoots> {
    if n == 0 || n > model.eigen_count() {
        return Err(Error::Domain(format!("mode index {n} outside 1..={}", model.eigen_count())));
    }
    roots_for(model.eigenvalues()[n - 1], model.alpha(), model.gamma(), n)
}

pub(crate) fn roots_for(lambda: f64, alpha: f64, gamma: f64, n: usize) -> Result<ModeRoots> {
    let (rho1, rho2, disc) = raw_roots(lambda, alpha, gamma);
    let scale = gamma * gamma + lambda.powf(1.0 - 2.0 * alpha);
    if disc.abs() <= 4.0 * f64::EPSILON * scale || rho1 == rho2 {
        return Err(Error::RepeatedRoot { mode: n });
    }
    Ok(ModeRoots { mode_index: n, lambda, rho1, rho2, discriminant: Complex64::new(disc, 0.0) })
}

impl ModeRoots {
    pub fn max_real(&self) -> f64 {
        self.rho1.re.max(self.rho2.re)
    }
}

/// Outcome of the uniform spectral-gap check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub delta0: f64,
    /// 1-based index of the mode attaining the sup of the real parts.
    pub worst_mode: usize,
    pub per_mode_max_real: Vec<f64>,
}

/// Checks that every root has real part `<= -delta0 < 0`.
pub fn check_as1(model: &SpectralModel) -> Result<StabilityReport> {
    let mut per_mode = Vec::with_capacity(model.eigen_count());
    for (i, &lambda) in model.eigenvalues().iter().enumerate() {
        let (r1, r2, _) = raw_roots(lambda, model.alpha(), model.gamma());
        let max_real = r1.re.max(r2.re);
        if !(max_real < 0.0) {
            return Err(Error::Instability { mode: i + 1, max_real });
        }
        roots_for(lambda, model.alpha(), model.gamma(), i + 1)?;
        per_mode.push(max_real);
    }
    // fixed left-to-right reduction; first maximizer wins
    let (worst, sup) = per_mode
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    Ok(StabilityReport { delta0: -sup, worst_mode: worst + 1, per_mode_max_real: per_mode })
}

/// Diagonalization `A_n = K J K^{-1}` of one companion block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockFactors {
    pub k: Mat2,
    pub j: Mat2,
    pub k_inv: Mat2,
}

pub fn mode_block_factors(roots: &ModeRoots) -> Result<BlockFactors> {
    let (r1, r2) = (roots.rho1, roots.rho2);
    let gap = r1 - r2;
    if gap == ZERO {
        return Err(Error::RepeatedRoot { mode: roots.mode_index });
    }
    let k = Mat2([[ONE, ONE], [r1, r2]]);
    let j = Mat2::diag(r1, r2);
    let k_inv = Mat2([[-r2 / gap, ONE / gap], [r1 / gap, -ONE / gap]]);
    Ok(BlockFactors { k, j, k_inv })
}

/// Norm of `R(lambda, A)` on the truncated `E_{1/2}`.
pub fn resolvent_norm(model: &SpectralModel, lambda: Complex64) -> Result<f64> {
    let (alpha, gamma) = (model.alpha(), model.gamma());
    let mut best = 0.0f64;
    for (i, &l) in model.eigenvalues().iter().enumerate() {
        let (r1, r2, _) = raw_roots(l, alpha, gamma);
        for r in [r1, r2] {
            if (lambda - r).norm() <= 1e-12 * r.norm().max(1.0) {
                return Err(Error::Spectrum { mode: i + 1, lambda: format!("{lambda}") });
            }
        }
        let damp = 2.0 * gamma * l.powf(alpha);
        let det = characteristic_poly(l, alpha, gamma, lambda);
        let inv = Mat2([[(lambda + damp) / det, ONE / det], [-l / det, lambda / det]]);
        best = best.max(inv.weighted_norm(l));
    }
    Ok(best)
}

/// Sampling plan for [`estimate_sector`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SectorGrid {
    pub radial: usize,
    pub angular: usize,
    /// Smallest radius relative to the smallest root modulus.
    pub r_min_factor: f64,
    /// Largest radius relative to the largest root modulus.
    pub r_max_factor: f64,
}

impl Default for SectorGrid {
    fn default() -> Self {
        Self { radial: 60, angular: 61, r_min_factor: 1e-3, r_max_factor: 1e3 }
    }
}

impl SectorGrid {
    pub fn refined(&self) -> Self {
        Self { radial: 2 * self.radial, angular: 2 * self.angular - 1, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorEstimate {
    pub omega: f64,
    #[serde(rename = "K")]
    pub k: f64,
    /// Largest sampled `|lambda| ||R(lambda, A)||`, before the safety margin.
    pub sampled_max: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    #[serde(rename = "C3")]
    pub c3: f64,
    #[serde(rename = "N_prime")]
    pub n_prime: f64,
    pub grid: SectorGrid,
}

pub const SECTOR_MARGIN: f64 = 1.1;

/// Samples the half-plane `Re lambda >= -delta0/2` and reports the resolvent
/// and conditioning constants.
pub fn estimate_sector(model: &SpectralModel, grid: &SectorGrid) -> Result<SectorEstimate> {
    let report = check_as1(model)?;
    let omega = -report.delta0 / 2.0;
    let roots: Vec<ModeRoots> =
        (1..=model.eigen_count()).map(|n| mode_roots(model, n)).collect::<Result<_>>()?;

    let (mut c1, mut c2) = (0.0f64, 0.0f64);
    for r in &roots {
        let f = mode_block_factors(r)?;
        let m1 = r.rho1.norm();
        c1 = c1.max(f.k.spectral_norm() / m1);
        c2 = c2.max(f.k_inv.spectral_norm() * m1);
    }

    let moduli = roots.iter().flat_map(|r| [r.rho1.norm(), r.rho2.norm()]);
    let (lo, hi) = moduli.fold((f64::INFINITY, 0.0f64), |(lo, hi), m| (lo.min(m), hi.max(m)));
    let r_min = lo * grid.r_min_factor;
    let r_max = hi * grid.r_max_factor;

    let mut samples = Vec::with_capacity(grid.radial * grid.angular + 2 * roots.len());
    let nr = grid.radial.max(2);
    let na = grid.angular.max(2);
    for i in 0..nr {
        let r = r_min * (r_max / r_min).powf(i as f64 / (nr - 1) as f64);
        for j in 0..na {
            let theta = -FRAC_PI_2 + std::f64::consts::PI * j as f64 / (na - 1) as f64;
            samples.push(Complex64::new(omega, 0.0) + Complex64::from_polar(r, theta));
        }
    }
    // closest approach of the boundary line to each root
    for r in &roots {
        for rho in [r.rho1, r.rho2] {
            samples.push(Complex64::new(omega, rho.im));
        }
    }

    let mut sampled_max = 0.0f64;
    let mut c3 = 0.0f64;
    for z in samples {
        if z.re < omega - 1e-12 * omega.abs() {
            continue;
        }
        let rn = match resolvent_norm(model, z) {
            Ok(v) => v,
            Err(Error::Spectrum { .. }) => continue,
            Err(e) => return Err(e),
        };
        sampled_max = sampled_max.max(z.norm() * rn);
        for r in &roots {
            for rho in [r.rho1, r.rho2] {
                c3 = c3.max(z.norm() / (z - rho).norm());
            }
        }
    }

    let taus = semigroup::default_tau_grid(report.delta0);
    let n_prime = semigroup::decay_envelope(model, &taus)?
        .iter()
        .map(|&(_, r)| r)
        .fold(1.0, f64::max);

    Ok(SectorEstimate { omega, k: SECTOR_MARGIN * sampled_max, sampled_max, c1, c2, c3, n_prime, grid: *grid })
}
