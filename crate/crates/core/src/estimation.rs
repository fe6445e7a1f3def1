//! Minimum RP estimation for the normal linear model and its asymptotic
//! covariance.
//!
//! The solver works on `(β, τ)` with `τ = log σ`, maximizing `H_n^α`
//! by damped Newton steps with a line search. Without a user start the
//! target `α` is reached by continuation from the least-squares fit in
//! increments of at most `continuation_step`, so the reported root is the
//! one connected to the MLE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, Alpha, ModelData, NormalLinear, Theta};
use crate::numerics::linalg::{dot, min_eigenvalue, norm_inf, Cholesky, Matrix};
use crate::numerics::rng::RngStream;

/// Fitting refuses designs whose `XᵀX/n` has a smaller eigenvalue.
pub const MIN_DESIGN_EIGENVALUE: f64 = 1e-12;

/// Relative threshold (against the response spread) below which σ̂ counts as collapsed.
pub const DEGENERATE_SIGMA_RATIO: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: Theta,
    pub alpha: Alpha,
    pub converged: bool,
    pub iterations: usize,
    /// ∞-norm of the gradient of `H_n^α` in `(β, σ)` at `theta_hat`.
    pub gradient_norm: f64,
    /// Asymptotic covariance of `√n(θ̂ − θ)` evaluated at `theta_hat`.
    pub sigma_n: Matrix,
    pub objective_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceTriple {
    pub psi_n: Matrix,
    pub omega_n: Matrix,
    pub sigma_n: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignDiagnostics {
    pub min_eigenvalue_xtx_over_n: f64,
    /// `n · max_i x_iᵀ(XᵀX)⁻¹x_i`.
    pub max_scaled_leverage: f64,
    pub max_abs_covariate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Convergence threshold on the gradient ∞-norm. For `α < 1` the
    /// gradient is compared after division by `α`, since the whole
    /// objective flattens like `α` near zero.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub continuation_step: f64,
    pub multistart: bool,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 200,
            continuation_step: 0.1,
            multistart: false,
            restarts: 10,
            seed: 0,
        }
    }
}

pub fn design_diagnostics(data: &ModelData) -> Result<DesignDiagnostics> {
    let s = data.scaled_gram();
    let min_eig = min_eigenvalue(&s)?;
    let max_abs = data.design().max_abs();
    let leverage = match Cholesky::new(&s) {
        // x_iᵀ S⁻¹ x_i = n · x_iᵀ(XᵀX)⁻¹x_i
        Ok(ch) => (0..data.n())
            .map(|i| {
                let x = data.row(i);
                ch.solve(x).map(|z| dot(x, &z))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    };
    Ok(DesignDiagnostics {
        min_eigenvalue_xtx_over_n: min_eig,
        max_scaled_leverage: leverage,
        max_abs_covariate: max_abs,
    })
}

fn require_full_rank(data: &ModelData) -> Result<Cholesky> {
    let diag = design_diagnostics(data)?;
    if !(diag.min_eigenvalue_xtx_over_n > MIN_DESIGN_EIGENVALUE) {
        return Err(Error::RankDeficient { min_eigenvalue: diag.min_eigenvalue_xtx_over_n });
    }
    Cholesky::new(&data.scaled_gram())
}

fn response_scale(data: &ModelData) -> f64 {
    let y = data.response();
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        sd
    } else {
        mean.abs().max(1.0)
    }
}

fn check_sigma(data: &ModelData, sigma: f64) -> Result<()> {
    let scale = response_scale(data);
    if !(sigma >= DEGENERATE_SIGMA_RATIO * scale) {
        return Err(Error::DegenerateFit(format!(
            "sigma collapsed to {sigma:e} (response scale {scale:e})"
        )));
    }
    Ok(())
}

/// Least squares `β̂` with `σ̂² = RSS/n`.
pub fn fit_mle(data: &ModelData) -> Result<FitResult> {
    let ch = require_full_rank(data)?;
    let n = data.n() as f64;
    let mut xty = vec![0.0; data.p()];
    for (i, &y) in data.response().iter().enumerate() {
        for (acc, x) in xty.iter_mut().zip(data.row(i)) {
            *acc += x * y / n;
        }
    }
    let beta = ch.solve(&xty)?;
    let rss: f64 = (0..data.n())
        .map(|i| (data.response()[i] - dot(data.row(i), &beta)).powi(2))
        .sum();
    let sigma = (rss / n).sqrt();
    check_sigma(data, sigma)?;
    finish(data, Theta::new(beta, sigma)?, Alpha::MLE, true, 0)
}

fn finish(data: &ModelData, theta: Theta, alpha: Alpha, converged: bool, iterations: usize) -> Result<FitResult> {
    let fam = NormalLinear::for_data(data);
    let g = model::score(&fam, data, &theta, alpha)?;
    let objective_value = model::objective(&fam, data, &theta, alpha)?;
    let sigma_n = covariance_mlrm(data, &theta, alpha)?.sigma_n;
    Ok(FitResult {
        theta_hat: theta,
        alpha,
        converged,
        iterations,
        gradient_norm: norm_inf(&g),
        sigma_n,
        objective_value,
    })
}

/// Objective, `(β, σ)` gradient, and `(β, τ)` gradient and Hessian.
struct Local {
    value: f64,
    grad_sigma: Vec<f64>,
    grad_tau: Vec<f64>,
    hess_tau: Matrix,
}

fn evaluate(data: &ModelData, beta: &[f64], tau: f64, alpha: f64) -> Local {
    let p = beta.len();
    let sigma = tau.exp();
    let a = alpha / (alpha + 1.0);
    let konst = ((1.0 + alpha) / (2.0 * std::f64::consts::PI)).powf(0.5 * a) * sigma.powf(-a);
    let n = data.n() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; p + 1];
    let mut hess = Matrix::zeros(p + 1, p + 1);
    let mut g = vec![0.0; p + 1];
    for (i, &y) in data.response().iter().enumerate() {
        let x = data.row(i);
        let r = (y - dot(x, beta)) / sigma;
        let v = konst * (-0.5 * alpha * r * r).exp() / n;
        value += v;
        for k in 0..p {
            g[k] = alpha * r * x[k] / sigma;
        }
        g[p] = alpha * r * r - a;
        for j in 0..=p {
            grad[j] += v * g[j];
            for k in 0..=p {
                hess[(j, k)] += v * g[j] * g[k];
            }
        }
        for j in 0..p {
            for k in 0..p {
                hess[(j, k)] -= v * alpha * x[j] * x[k] / (sigma * sigma);
            }
            let c = -2.0 * v * alpha * r * x[j] / sigma;
            hess[(j, p)] += c;
            hess[(p, j)] += c;
        }
        hess[(p, p)] -= 2.0 * v * alpha * r * r;
    }
    let mut grad_sigma = grad.clone();
    grad_sigma[p] /= sigma;
    Local { value, grad_sigma, grad_tau: grad, hess_tau: hess }
}

fn scaled_norm(grad: &[f64], alpha: f64) -> f64 {
    norm_inf(grad) / alpha.min(1.0)
}

struct StageOutcome {
    beta: Vec<f64>,
    tau: f64,
    converged: bool,
    iterations: usize,
}

/// Damped Newton with Levenberg–Marquardt fallback at a fixed `α > 0`.
fn newton(data: &ModelData, mut beta: Vec<f64>, mut tau: f64, alpha: f64, opts: &SolverOptions) -> StageOutcome {
    let p = beta.len();
    let mut cur = evaluate(data, &beta, tau, alpha);
    for it in 0..opts.max_iterations {
        if scaled_norm(&cur.grad_sigma, alpha) <= opts.tolerance {
            return StageOutcome { beta, tau, converged: true, iterations: it };
        }
        let neg_h = cur.hess_tau.scale(-1.0);
        let diag_scale = neg_h.diag().iter().fold(0.0_f64, |m, d| m.max(d.abs())).max(f64::MIN_POSITIVE);
        let mut lambda = 0.0;
        let mut moved = false;
        for _ in 0..40 {
            let mut a = neg_h.clone();
            for j in 0..=p {
                a[(j, j)] += lambda * diag_scale;
            }
            let step = match Cholesky::new(&a).and_then(|c| c.solve(&cur.grad_tau)) {
                Ok(s) if s.iter().all(|v| v.is_finite()) => s,
                _ => {
                    lambda = if lambda == 0.0 { 1e-8 } else { lambda * 10.0 };
                    continue;
                }
            };
            let slack = 4.0 * f64::EPSILON * cur.value.abs();
            let mut t = 1.0;
            for _ in 0..30 {
                let nb: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
                let nt = tau + t * step[p];
                let next = evaluate(data, &nb, nt, alpha);
                if next.value.is_finite() && next.value >= cur.value - slack {
                    beta = nb;
                    tau = nt;
                    cur = next;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if moved {
                break;
            }
            lambda = if lambda == 0.0 { 1e-8 } else { lambda * 10.0 };
        }
        if !moved {
            let converged = scaled_norm(&cur.grad_sigma, alpha) <= opts.tolerance;
            return StageOutcome { beta, tau, converged, iterations: it + 1 };
        }
    }
    let converged = scaled_norm(&cur.grad_sigma, alpha) <= opts.tolerance;
    StageOutcome { beta, tau, converged, iterations: opts.max_iterations }
}

/// Minimum RP estimate. `α = 0` is the least-squares fit.
///
/// With `init = None` the solution is tracked from the MLE through
/// `α`-continuation; with a start value Newton runs directly at `α`.
/// A non-converged result is returned with `converged = false`.
pub fn fit_rp(data: &ModelData, alpha: Alpha, init: Option<&Theta>, options: &SolverOptions) -> Result<FitResult> {
    if alpha.is_mle() {
        return fit_mle(data);
    }
    require_full_rank(data)?;
    if !(options.continuation_step > 0.0) || !(options.tolerance > 0.0) {
        return Err(Error::Domain("continuation step and tolerance must be positive".into()));
    }
    let a = alpha.value();
    let (mut best, mut iterations) = match init {
        Some(th) => {
            if th.beta.len() != data.p() {
                return Err(Error::Dimension(format!(
                    "start value has {} coefficients, design has {}",
                    th.beta.len(),
                    data.p()
                )));
            }
            let out = newton(data, th.beta.clone(), th.sigma.ln(), a, options);
            let its = out.iterations;
            (out, its)
        }
        None => {
            let mle = fit_mle(data)?;
            let stages = (a / options.continuation_step).ceil().max(1.0) as usize;
            let mut beta = mle.theta_hat.beta.clone();
            let mut tau = mle.theta_hat.sigma.ln();
            let mut total = 0;
            let mut last = None;
            for k in 1..=stages {
                let ak = if k == stages { a } else { a * k as f64 / stages as f64 };
                let out = newton(data, beta.clone(), tau, ak, options);
                total += out.iterations;
                beta = out.beta.clone();
                tau = out.tau;
                last = Some(out);
            }
            (last.expect("at least one stage"), total)
        }
    };
    if options.multistart {
        let mle = fit_mle(data)?;
        let base = evaluate(data, &best.beta, best.tau, a).value;
        let mut best_value = base;
        for k in 0..options.restarts {
            let mut rng = RngStream::new(options.seed, k as u64);
            let s0 = mle.theta_hat.sigma;
            let beta: Vec<f64> = mle.theta_hat.beta.iter().map(|b| b + s0 * rng.standard_normal()).collect();
            let tau = s0.ln() + 0.5 * rng.standard_normal();
            let out = newton(data, beta, tau, a, options);
            iterations += out.iterations;
            let v = evaluate(data, &out.beta, out.tau, a).value;
            if out.converged && v > best_value && out.tau.exp() >= DEGENERATE_SIGMA_RATIO * response_scale(data) {
                best_value = v;
                best = out;
            }
        }
    }
    let sigma = best.tau.exp();
    check_sigma(data, sigma)?;
    finish(data, Theta::new(best.beta, sigma)?, alpha, best.converged, iterations)
}

/// Hessian of `H_n^α` in `(β, σ)`, used to check that a fit is a local maximum.
pub fn objective_hessian(data: &ModelData, theta: &Theta, alpha: Alpha) -> Result<Matrix> {
    if alpha.is_mle() {
        return Err(Error::Domain("objective_hessian is defined for alpha > 0".into()));
    }
    let p = data.p();
    let s = theta.sigma;
    let loc = evaluate(data, &theta.beta, s.ln(), alpha.value());
    // d/dσ = (1/σ) d/dτ ; d²/dσ² = (1/σ²)(d²/dτ² − d/dτ)
    let mut h = loc.hess_tau.clone();
    for j in 0..p {
        h[(j, p)] /= s;
        h[(p, j)] /= s;
    }
    h[(p, p)] = (loc.hess_tau[(p, p)] - loc.grad_tau[p]) / (s * s);
    Ok(h)
}

/// Asymptotic covariance of `√n(θ̂_α − θ)` for the normal linear model,
/// with `Ψ_n`, `Ω_n` in the positive-definite convention satisfying
/// `Ψ_n⁻¹ Ω_n Ψ_n⁻¹ = Σ_n`.
pub fn covariance_mlrm(data: &ModelData, theta: &Theta, alpha: Alpha) -> Result<CovarianceTriple> {
    if !(theta.sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {}", theta.sigma)));
    }
    if theta.beta.len() != data.p() {
        return Err(Error::Dimension("theta and design disagree on p".into()));
    }
    let s = data.scaled_gram();
    let s_inv = s.inverse_spd()?;
    Ok(covariance_from_gram(&s, &s_inv, theta.sigma, alpha.value()))
}

pub(crate) fn covariance_from_gram(s: &Matrix, s_inv: &Matrix, sigma: f64, a: f64) -> CovarianceTriple {
    let p = s.rows();
    let s2 = sigma * sigma;
    let ap1 = a + 1.0;
    let c_beta = s2 * ap1.powi(3) / (2.0 * a + 1.0).powf(1.5);
    let c_sigma = s2 * ap1.powi(3) * (3.0 * a * a + 4.0 * a + 2.0) / (4.0 * (2.0 * a + 1.0).powf(2.5));
    let psi_beta = 1.0 / (s2 * ap1.powf(1.5));
    let psi_sigma = 2.0 / (s2 * ap1.powf(2.5));

    let mut sigma_n = Matrix::zeros(p + 1, p + 1);
    let mut psi_n = Matrix::zeros(p + 1, p + 1);
    for j in 0..p {
        for k in 0..p {
            sigma_n[(j, k)] = c_beta * s_inv[(j, k)];
            psi_n[(j, k)] = psi_beta * s[(j, k)];
        }
    }
    sigma_n[(p, p)] = c_sigma;
    psi_n[(p, p)] = psi_sigma;
    // Ψ S⁻¹ Ψ on the β block collapses to S.
    let mut omega_n = Matrix::zeros(p + 1, p + 1);
    for j in 0..p {
        for k in 0..p {
            omega_n[(j, k)] = psi_beta * psi_beta * c_beta * s[(j, k)];
        }
    }
    omega_n[(p, p)] = psi_sigma * psi_sigma * c_sigma;
    CovarianceTriple { psi_n, omega_n, sigma_n }
}
