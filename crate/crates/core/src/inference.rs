//! Wald-type tests built on the minimum RP estimator, with asymptotic power
//! and sample-size planning.
//!
//! Throughout, `Σ` is the asymptotic covariance of `√n(θ̂_α − θ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{covariance_from_gram, FitResult};
use crate::model::{Alpha, ModelData, Theta};
use crate::numerics::linalg::{dot, min_eigenvalue, Cholesky, Matrix};
use crate::numerics::special::{chisq_quantile, noncentral_chisq_sf, normal_cdf, normal_quantile};

/// Levels reported in [`WaldOutcome::reject_at`].
pub const DEFAULT_LEVELS: [f64; 3] = [0.01, 0.05, 0.10];

/// Sample sizes above this are reported as [`SampleSize::Unbounded`].
pub const MAX_SAMPLE_SIZE: f64 = 1e9;

/// Null hypothesis `Mᵀθ = m` with `M` of size `dim(θ) × r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHypothesis {
    m_matrix: Matrix,
    m_vector: Vec<f64>,
}

impl LinearHypothesis {
    pub fn new(m_matrix: Matrix, m_vector: Vec<f64>) -> Result<Self> {
        let r = m_matrix.cols();
        if r == 0 || r != m_vector.len() {
            return Err(Error::Dimension(format!(
                "M has {r} columns but m has {} entries",
                m_vector.len()
            )));
        }
        if r > m_matrix.rows() {
            return Err(Error::Dimension(format!(
                "M has more restrictions ({r}) than parameters ({})",
                m_matrix.rows()
            )));
        }
        // smallest singular value of M above 1e-10
        let gram = m_matrix.transpose().matmul(&m_matrix)?;
        if !(min_eigenvalue(&gram)? > 1e-20) {
            return Err(Error::Domain("M does not have full column rank".into()));
        }
        if m_vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("m must be finite".into()));
        }
        Ok(Self { m_matrix, m_vector })
    }

    /// Fixes the listed coordinates of `θ` (0-based, `σ` is last).
    pub fn fix_coordinates(dim: usize, fixed: &[(usize, f64)]) -> Result<Self> {
        let r = fixed.len();
        let mut m = Matrix::zeros(dim, r);
        for (k, &(j, _)) in fixed.iter().enumerate() {
            if j >= dim {
                return Err(Error::Dimension(format!("coordinate {j} outside 0..{dim}")));
            }
            m[(j, k)] = 1.0;
        }
        Self::new(m, fixed.iter().map(|f| f.1).collect())
    }

    pub fn m_matrix(&self) -> &Matrix {
        &self.m_matrix
    }

    pub fn m_vector(&self) -> &[f64] {
        &self.m_vector
    }

    pub fn restrictions(&self) -> usize {
        self.m_matrix.cols()
    }

    pub fn dim(&self) -> usize {
        self.m_matrix.rows()
    }

    /// `Mᵀθ − m`.
    pub fn discrepancy(&self, theta: &Theta) -> Result<Vec<f64>> {
        if theta.dim() != self.dim() {
            return Err(Error::Dimension(format!(
                "hypothesis is on {} parameters, theta has {}",
                self.dim(),
                theta.dim()
            )));
        }
        let mt = self.m_matrix.transpose().matvec(&theta.to_vec())?;
        Ok(mt.iter().zip(&self.m_vector).map(|(a, b)| a - b).collect())
    }

    /// `MᵀΣM`.
    pub fn project(&self, sigma: &Matrix) -> Result<Matrix> {
        self.m_matrix.transpose().matmul(sigma)?.matmul(&self.m_matrix)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldOutcome {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
    /// `(level, rejected)` for each level in [`DEFAULT_LEVELS`].
    pub reject_at: Vec<(f64, bool)>,
}

impl WaldOutcome {
    pub fn from_statistic(statistic: f64, df: u32) -> Result<Self> {
        if !(statistic >= 0.0) || df == 0 {
            return Err(Error::Domain(format!("invalid Wald statistic {statistic} with df {df}")));
        }
        let p_value = noncentral_chisq_sf(statistic, df, 0.0).clamp(0.0, 1.0);
        let reject_at = DEFAULT_LEVELS
            .iter()
            .map(|&nu| Ok((nu, statistic > chisq_quantile(df, nu)?)))
            .collect::<Result<_>>()?;
        Ok(Self { statistic, df, p_value, reject_at })
    }

    pub fn rejects(&self, level: f64) -> Result<bool> {
        Ok(self.statistic > chisq_quantile(self.df, level)?)
    }
}

/// Source of `Σ_α(θ)`, the asymptotic covariance at an arbitrary `θ`.
pub trait CovarianceModel {
    fn sigma_at(&self, theta: &Theta, alpha: Alpha) -> Result<Matrix>;
}

/// Normal linear model covariance for a fixed design.
#[derive(Debug, Clone, PartialEq)]
pub struct MlrmCovariance {
    gram: Matrix,
    gram_inv: Matrix,
}

impl MlrmCovariance {
    pub fn new(data: &ModelData) -> Result<Self> {
        Self::from_gram(data.scaled_gram())
    }

    /// From `S = XᵀX/n` directly.
    pub fn from_gram(gram: Matrix) -> Result<Self> {
        let gram_inv = gram.inverse_spd()?;
        Ok(Self { gram, gram_inv })
    }
}

impl CovarianceModel for MlrmCovariance {
    fn sigma_at(&self, theta: &Theta, alpha: Alpha) -> Result<Matrix> {
        if theta.beta.len() != self.gram.rows() {
            return Err(Error::Dimension("theta and design disagree on p".into()));
        }
        if !(theta.sigma > 0.0) {
            return Err(Error::Domain(format!("sigma must be positive, got {}", theta.sigma)));
        }
        Ok(covariance_from_gram(&self.gram, &self.gram_inv, theta.sigma, alpha.value()).sigma_n)
    }
}

/// A covariance that does not depend on `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedCovariance(pub Matrix);

impl CovarianceModel for FixedCovariance {
    fn sigma_at(&self, _theta: &Theta, _alpha: Alpha) -> Result<Matrix> {
        Ok(self.0.clone())
    }
}

/// `n · vᵀ A⁻¹ v` for symmetric positive definite `A`.
pub fn wald_quadratic(v: &[f64], a: &Matrix, n: usize) -> Result<f64> {
    let z = Cholesky::new(a)?.solve(v)?;
    Ok((n as f64 * dot(v, &z)).max(0.0))
}

/// Simple null `θ = θ⁰` with `Σ` evaluated at `θ⁰`; `df = dim(θ)`.
pub fn wald_simple(fit: &FitResult, theta0: &Theta, n: usize, cov: &impl CovarianceModel) -> Result<WaldOutcome> {
    if theta0.dim() != fit.theta_hat.dim() {
        return Err(Error::Dimension("null value and estimate differ in length".into()));
    }
    let sigma0 = cov.sigma_at(theta0, fit.alpha)?;
    let diff: Vec<f64> = fit
        .theta_hat
        .to_vec()
        .iter()
        .zip(theta0.to_vec())
        .map(|(a, b)| a - b)
        .collect();
    WaldOutcome::from_statistic(wald_quadratic(&diff, &sigma0, n)?, theta0.dim() as u32)
}

/// Composite null `Mᵀθ = m` with the plug-in `Σ(θ̂)` stored in the fit; `df = r`.
pub fn wald_composite(fit: &FitResult, hyp: &LinearHypothesis, n: usize) -> Result<WaldOutcome> {
    let diff = hyp.discrepancy(&fit.theta_hat)?;
    let inner = hyp.project(&fit.sigma_n)?;
    WaldOutcome::from_statistic(wald_quadratic(&diff, &inner, n)?, hyp.restrictions() as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub ell: f64,
    pub sigma_w: f64,
    pub approx_power: f64,
    pub n_used: usize,
}

/// `ℓ(θ*)` and `σ_W(θ*)` for the simple test of `θ⁰`.
pub fn power_parts(theta_star: &Theta, theta0: &Theta, alpha: Alpha, cov: &impl CovarianceModel) -> Result<(f64, f64)> {
    if theta_star.dim() != theta0.dim() {
        return Err(Error::Dimension("alternative and null differ in length".into()));
    }
    let d: Vec<f64> = theta_star.to_vec().iter().zip(theta0.to_vec()).map(|(a, b)| a - b).collect();
    let s0 = cov.sigma_at(theta0, alpha)?;
    let s_star = cov.sigma_at(theta_star, alpha)?;
    let w = Cholesky::new(&s0)?.solve(&d)?;
    let ell = dot(&d, &w);
    let sigma_w = (4.0 * s_star.quad_form(&w)?).max(0.0).sqrt();
    Ok((ell, sigma_w))
}

/// `1 − Φ((√n/σ_W)(χ²_{df,ν}/n − ℓ))`.
pub fn approx_power_from_parts(ell: f64, sigma_w: f64, df: u32, n: usize, level: f64) -> Result<f64> {
    check_level(level)?;
    if n == 0 {
        return Err(Error::Domain("sample size must be positive".into()));
    }
    if !(sigma_w > 0.0) {
        return Err(Error::DegenerateDirection(format!("sigma_W = {sigma_w}")));
    }
    let q = chisq_quantile(df, level)?;
    let nf = n as f64;
    Ok(1.0 - normal_cdf(nf.sqrt() / sigma_w * (q / nf - ell)))
}

pub fn approx_power(
    theta_star: &Theta,
    theta0: &Theta,
    alpha: Alpha,
    n: usize,
    level: f64,
    cov: &impl CovarianceModel,
) -> Result<PowerReport> {
    check_level(level)?;
    if theta_star == theta0 {
        return Ok(PowerReport { ell: 0.0, sigma_w: 0.0, approx_power: level, n_used: n });
    }
    let (ell, sigma_w) = power_parts(theta_star, theta0, alpha, cov)?;
    let approx_power = approx_power_from_parts(ell, sigma_w, theta0.dim() as u32, n, level)?;
    Ok(PowerReport { ell, sigma_w, approx_power, n_used: n })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleSize {
    Finite(u64),
    /// The required size exceeds [`MAX_SAMPLE_SIZE`].
    Unbounded,
}

pub fn required_sample_size_from_parts(ell: f64, sigma_w: f64, df: u32, target_power: f64, level: f64) -> Result<SampleSize> {
    check_level(level)?;
    if !(target_power > 0.0 && target_power < 1.0) {
        return Err(Error::Domain(format!("target power must be in (0, 1), got {target_power}")));
    }
    if !(ell > 0.0) {
        return Err(Error::DegenerateDirection(format!("l(theta*) = {ell}")));
    }
    let z = normal_quantile(1.0 - target_power)?;
    let a = sigma_w * sigma_w * z * z;
    let b = 2.0 * ell * chisq_quantile(df, level)?;
    let n = (a + b + (a * (a + 2.0 * b)).sqrt()) / (2.0 * ell * ell);
    if !n.is_finite() || n > MAX_SAMPLE_SIZE {
        return Ok(SampleSize::Unbounded);
    }
    Ok(SampleSize::Finite((n.ceil() as u64).max(1)))
}

pub fn required_sample_size(
    theta_star: &Theta,
    theta0: &Theta,
    alpha: Alpha,
    target_power: f64,
    level: f64,
    cov: &impl CovarianceModel,
) -> Result<SampleSize> {
    let (ell, sigma_w) = power_parts(theta_star, theta0, alpha, cov)?;
    required_sample_size_from_parts(ell, sigma_w, theta0.dim() as u32, target_power, level)
}

/// Noncentrality `δ = (Mᵀd)ᵀ[MᵀΣM]⁻¹(Mᵀd)` under `θ_n = θ⁰ + d/√n`.
pub fn noncentrality(hyp: &LinearHypothesis, d: &[f64], sigma_n: &Matrix) -> Result<f64> {
    if d.len() != hyp.dim() {
        return Err(Error::Dimension("direction and hypothesis differ in length".into()));
    }
    let d_star = hyp.m_matrix().transpose().matvec(d)?;
    let inner = hyp.project(sigma_n)?;
    Ok(dot(&d_star, &Cholesky::new(&inner)?.solve(&d_star)?).max(0.0))
}

/// Asymptotic power under contiguous alternatives.
pub fn contiguous_power(hyp: &LinearHypothesis, d: &[f64], level: f64, sigma_n: &Matrix) -> Result<f64> {
    check_level(level)?;
    let delta = noncentrality(hyp, d, sigma_n)?;
    if delta == 0.0 {
        return Ok(level);
    }
    let r = hyp.restrictions() as u32;
    Ok(noncentral_chisq_sf(chisq_quantile(r, level)?, r, delta))
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("level must be in (0, 1), got {level}")));
    }
    Ok(())
}
