//! Density families for independent, non-identically distributed responses
//! and the Rényi-pseudodistance objective built on them.
//!
//! Observation `i` has density `f_i(y, θ)` with `θ = (β, σ)` shared by all
//! observations. For `α > 0` the estimator maximizes the average of
//!
//! ```text
//! V_i(Y_i, θ) = f_i(Y_i, θ)^α / (∫ f_i(y, θ)^{α+1} dy)^{α/(α+1)}
//! ```
//!
//! and for `α = 0` the average log-likelihood. Constants that do not depend
//! on `θ` are kept inside `V_i`, so objective values are comparable across
//! modules even though they do not move the maximizer.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::linalg::{dot, Matrix};
use crate::numerics::quadrature::{integrate, QuadratureRule};

/// Common parameter `θ = (β, σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub beta: Vec<f64>,
    pub sigma: f64,
}

impl Theta {
    pub fn new(beta: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Domain(format!("sigma must be positive and finite, got {sigma}")));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Domain("beta must be finite".into()));
        }
        Ok(Self { beta, sigma })
    }

    /// Length of `(β, σ)`.
    pub fn dim(&self) -> usize {
        self.beta.len() + 1
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.push(self.sigma);
        v
    }

    /// Inverse of [`Theta::to_vec`]; the last entry is σ.
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let (sigma, beta) = v
            .split_last()
            .ok_or_else(|| Error::Dimension("empty parameter vector".into()))?;
        Self::new(beta.to_vec(), *sigma)
    }
}

/// RP tuning parameter; zero selects the likelihood branch.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Alpha(f64);

impl Alpha {
    pub const MLE: Alpha = Alpha(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::Domain(format!("alpha must be finite and >= 0, got {value}")));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_mle(self) -> bool {
        self.0 == 0.0
    }
}

/// Fixed design plus observed responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelData {
    design: Matrix,
    response: Vec<f64>,
}

impl ModelData {
    /// Checks shapes, finiteness and `n >= p + 1`. Column rank is checked
    /// where it matters (fitting), see `estimation::design_diagnostics`.
    pub fn new(design: Matrix, response: Vec<f64>) -> Result<Self> {
        if design.rows() != response.len() {
            return Err(Error::InvalidData(format!(
                "design has {} rows but response has {} values",
                design.rows(),
                response.len()
            )));
        }
        if design.cols() == 0 {
            return Err(Error::InvalidData("design has no columns".into()));
        }
        if design.rows() < design.cols() + 1 {
            return Err(Error::InvalidData(format!(
                "need n >= p + 1 observations, got n = {} with p = {}",
                design.rows(),
                design.cols()
            )));
        }
        if design.as_slice().iter().chain(&response).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite value in design or response".into()));
        }
        Ok(Self { design, response })
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn p(&self) -> usize {
        self.design.cols()
    }

    pub fn design(&self) -> &Matrix {
        &self.design
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.design.row(i)
    }

    /// `(1/n) XᵀX`.
    pub fn scaled_gram(&self) -> Matrix {
        let n = self.n() as f64;
        let p = self.p();
        let mut s = Matrix::zeros(p, p);
        for i in 0..self.n() {
            let x = self.row(i);
            s.add_outer(1.0 / n, x, x);
        }
        s
    }

    pub fn with_response(&self, response: Vec<f64>) -> Result<Self> {
        Self::new(self.design.clone(), response)
    }

    /// Drops the given rows (1-based, as used in reports).
    pub fn without_rows(&self, one_based: &[usize]) -> Result<Self> {
        for &r in one_based {
            if r == 0 || r > self.n() {
                return Err(Error::InvalidData(format!(
                    "row {r} out of range 1..={}",
                    self.n()
                )));
            }
        }
        let keep: Vec<usize> = (0..self.n()).filter(|i| !one_based.contains(&(i + 1))).collect();
        let rows: Vec<Vec<f64>> = keep.iter().map(|&i| self.row(i).to_vec()).collect();
        let response = keep.iter().map(|&i| self.response[i]).collect();
        Self::new(Matrix::from_rows(&rows)?, response)
    }
}

/// Per-observation density model `f_i(y, θ)` with the integrals needed by
/// the objective, its gradient and the influence function.
///
/// The integral methods default to quadrature with [`DensityFamily::rule`]
/// placed at [`DensityFamily::location_scale`]; families with closed forms
/// override them.
pub trait DensityFamily {
    fn n_obs(&self) -> usize;

    /// Length of `θ`.
    fn dim(&self) -> usize;

    fn log_density(&self, i: usize, y: f64, theta: &Theta) -> f64;

    fn density(&self, i: usize, y: f64, theta: &Theta) -> f64 {
        self.log_density(i, y, theta).exp()
    }

    /// `u_i(y, θ) = ∂ log f_i / ∂θ`.
    fn score(&self, i: usize, y: f64, theta: &Theta) -> Vec<f64>;

    /// `∂u_i / ∂θ`.
    fn score_jacobian(&self, i: usize, y: f64, theta: &Theta) -> Matrix;

    /// Center and spread used to place the quadrature rule for observation `i`.
    fn location_scale(&self, i: usize, theta: &Theta) -> (f64, f64);

    fn rule(&self) -> &QuadratureRule;

    /// `∫ f_i^c dy`.
    fn power_integral(&self, i: usize, theta: &Theta, c: f64) -> Result<f64> {
        let (m, s) = self.placement(i, theta, c);
        integrate(|y| self.density(i, y, theta).powf(c), self.rule(), m, s)
    }

    /// `∫ f_i^c u_i dy`.
    fn power_score_integral(&self, i: usize, theta: &Theta, c: f64) -> Result<Vec<f64>> {
        let (m, s) = self.placement(i, theta, c);
        (0..self.dim())
            .map(|j| integrate(|y| self.density(i, y, theta).powf(c) * self.score(i, y, theta)[j], self.rule(), m, s))
            .collect()
    }

    /// `∫ f_i^c u_i u_iᵀ dy`.
    fn power_score_outer_integral(&self, i: usize, theta: &Theta, c: f64) -> Result<Matrix> {
        let (m, s) = self.placement(i, theta, c);
        let d = self.dim();
        let mut out = Matrix::zeros(d, d);
        for j in 0..d {
            for k in 0..=j {
                let v = integrate(
                    |y| {
                        let u = self.score(i, y, theta);
                        self.density(i, y, theta).powf(c) * u[j] * u[k]
                    },
                    self.rule(),
                    m,
                    s,
                )?;
                out[(j, k)] = v;
                out[(k, j)] = v;
            }
        }
        Ok(out)
    }

    /// `∫ f_i^c ∂u_i/∂θ dy`.
    fn power_score_jacobian_integral(&self, i: usize, theta: &Theta, c: f64) -> Result<Matrix> {
        let (m, s) = self.placement(i, theta, c);
        let d = self.dim();
        let mut out = Matrix::zeros(d, d);
        for j in 0..d {
            for k in 0..d {
                out[(j, k)] = integrate(
                    |y| self.density(i, y, theta).powf(c) * self.score_jacobian(i, y, theta)[(j, k)],
                    self.rule(),
                    m,
                    s,
                )?;
            }
        }
        Ok(out)
    }

    /// Quadrature placement for `f_i^c`: a location-scale density raised to
    /// `c` has its spread shrunk by `√c`.
    fn placement(&self, i: usize, theta: &Theta, c: f64) -> (f64, f64) {
        let (m, s) = self.location_scale(i, theta);
        if c > 0.0 {
            (m, s / c.sqrt())
        } else {
            (m, s)
        }
    }
}

/// Normal linear model `Y_i ~ N(x_iᵀβ, σ²)` with closed-form integrals.
#[derive(Debug, Clone)]
pub struct NormalLinear<'a> {
    design: &'a Matrix,
    rule: QuadratureRule,
}

impl<'a> NormalLinear<'a> {
    pub fn new(design: &'a Matrix) -> Self {
        Self { design, rule: QuadratureRule::default() }
    }

    pub fn for_data(data: &'a ModelData) -> Self {
        Self::new(data.design())
    }

    pub fn mean(&self, i: usize, theta: &Theta) -> f64 {
        dot(self.design.row(i), &theta.beta)
    }

    fn standardized(&self, i: usize, y: f64, theta: &Theta) -> f64 {
        (y - self.mean(i, theta)) / theta.sigma
    }
}

impl DensityFamily for NormalLinear<'_> {
    fn n_obs(&self) -> usize {
        self.design.rows()
    }

    fn dim(&self) -> usize {
        self.design.cols() + 1
    }

    fn log_density(&self, i: usize, y: f64, theta: &Theta) -> f64 {
        let r = self.standardized(i, y, theta);
        -0.5 * (2.0 * PI).ln() - theta.sigma.ln() - 0.5 * r * r
    }

    fn score(&self, i: usize, y: f64, theta: &Theta) -> Vec<f64> {
        let r = self.standardized(i, y, theta);
        let s = theta.sigma;
        let mut u: Vec<f64> = self.design.row(i).iter().map(|x| r * x / s).collect();
        u.push((r * r - 1.0) / s);
        u
    }

    fn score_jacobian(&self, i: usize, y: f64, theta: &Theta) -> Matrix {
        let r = self.standardized(i, y, theta);
        let s2 = theta.sigma * theta.sigma;
        let x = self.design.row(i);
        let p = x.len();
        let mut j = Matrix::zeros(p + 1, p + 1);
        add_block_outer(&mut j, -1.0 / s2, x);
        for (k, xk) in x.iter().enumerate() {
            j[(k, p)] = -2.0 * r * xk / s2;
            j[(p, k)] = -2.0 * r * xk / s2;
        }
        j[(p, p)] = (1.0 - 3.0 * r * r) / s2;
        j
    }

    fn location_scale(&self, i: usize, theta: &Theta) -> (f64, f64) {
        (self.mean(i, theta), theta.sigma)
    }

    fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    fn power_integral(&self, _i: usize, theta: &Theta, c: f64) -> Result<f64> {
        if !(c > 0.0) {
            return Err(Error::Domain(format!("power integral needs c > 0, got {c}")));
        }
        let s = theta.sigma;
        Ok((2.0 * PI).powf(0.5 * (1.0 - c)) * s.powf(1.0 - c) / c.sqrt())
    }

    fn power_score_integral(&self, i: usize, theta: &Theta, c: f64) -> Result<Vec<f64>> {
        let b = self.power_integral(i, theta, c)?;
        let mut v = vec![0.0; self.dim()];
        v[self.dim() - 1] = b * (1.0 / c - 1.0) / theta.sigma;
        Ok(v)
    }

    fn power_score_outer_integral(&self, i: usize, theta: &Theta, c: f64) -> Result<Matrix> {
        let b = self.power_integral(i, theta, c)?;
        let s2 = theta.sigma * theta.sigma;
        let x = self.design.row(i);
        let p = x.len();
        let mut m = Matrix::zeros(p + 1, p + 1);
        add_block_outer(&mut m, b / (c * s2), x);
        m[(p, p)] = b * (3.0 / (c * c) - 2.0 / c + 1.0) / s2;
        Ok(m)
    }

    fn power_score_jacobian_integral(&self, i: usize, theta: &Theta, c: f64) -> Result<Matrix> {
        let b = self.power_integral(i, theta, c)?;
        let s2 = theta.sigma * theta.sigma;
        let x = self.design.row(i);
        let p = x.len();
        let mut m = Matrix::zeros(p + 1, p + 1);
        add_block_outer(&mut m, -b / s2, x);
        m[(p, p)] = b * (1.0 - 3.0 / c) / s2;
        Ok(m)
    }
}

/// Adds `c · x xᵀ` to the leading `β` block.
fn add_block_outer(m: &mut Matrix, c: f64, x: &[f64]) {
    for (j, xj) in x.iter().enumerate() {
        for (k, xk) in x.iter().enumerate() {
            m[(j, k)] += c * xj * xk;
        }
    }
}

/// Wraps a family and drops any closed-form integrals, so every integral
/// goes through quadrature. Used to cross-check closed forms and as the
/// path for families without them.
#[derive(Debug, Clone)]
pub struct QuadratureBacked<F> {
    inner: F,
    rule: QuadratureRule,
}

impl<F: DensityFamily> QuadratureBacked<F> {
    pub fn new(inner: F, rule: QuadratureRule) -> Self {
        Self { inner, rule }
    }
}

impl<F: DensityFamily> DensityFamily for QuadratureBacked<F> {
    fn n_obs(&self) -> usize {
        self.inner.n_obs()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn log_density(&self, i: usize, y: f64, theta: &Theta) -> f64 {
        self.inner.log_density(i, y, theta)
    }

    fn score(&self, i: usize, y: f64, theta: &Theta) -> Vec<f64> {
        self.inner.score(i, y, theta)
    }

    fn score_jacobian(&self, i: usize, y: f64, theta: &Theta) -> Matrix {
        self.inner.score_jacobian(i, y, theta)
    }

    fn location_scale(&self, i: usize, theta: &Theta) -> (f64, f64) {
        self.inner.location_scale(i, theta)
    }

    fn rule(&self) -> &QuadratureRule {
        &self.rule
    }
}

/// Per-observation RP loss without the `θ`-free constant `k`.
///
/// `α > 0`: `(1/(α+1)) log ∫ f_i^{α+1} − log f_i(y)`; `α = 0`: `−log f_i(y)`.
pub fn rp_loss_single<F: DensityFamily>(family: &F, i: usize, y: f64, theta: &Theta, alpha: Alpha) -> Result<f64> {
    let log_f = family.log_density(i, y, theta);
    if log_f == f64::NEG_INFINITY {
        return Err(Error::InfiniteLoss { index: i, y });
    }
    if alpha.is_mle() {
        return Ok(-log_f);
    }
    let a = alpha.value();
    Ok(family.power_integral(i, theta, a + 1.0)?.ln() / (a + 1.0) - log_f)
}

/// `V_i(y, θ) = f_i(y)^α / (∫ f_i^{α+1})^{α/(α+1)} = exp(−α · loss)`.
pub fn v_weight<F: DensityFamily>(family: &F, i: usize, y: f64, theta: &Theta, alpha: Alpha) -> Result<f64> {
    if alpha.is_mle() {
        return Err(Error::Domain("v_weight needs alpha > 0".into()));
    }
    let a = alpha.value();
    let log_f = family.log_density(i, y, theta);
    let log_b = family.power_integral(i, theta, a + 1.0)?.ln();
    Ok((a * log_f - a / (a + 1.0) * log_b).exp())
}

fn check_shapes<F: DensityFamily>(family: &F, data: &ModelData, theta: &Theta) -> Result<()> {
    if family.n_obs() != data.n() {
        return Err(Error::Dimension(format!(
            "family has {} observations, data has {}",
            family.n_obs(),
            data.n()
        )));
    }
    if family.dim() != theta.dim() {
        return Err(Error::Dimension(format!(
            "family parameter has length {}, theta has {}",
            family.dim(),
            theta.dim()
        )));
    }
    if !(theta.sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {}", theta.sigma)));
    }
    Ok(())
}

/// `H_n^α(θ)`: mean of `V_i` for `α > 0`, mean log-density for `α = 0`.
pub fn objective<F: DensityFamily>(family: &F, data: &ModelData, theta: &Theta, alpha: Alpha) -> Result<f64> {
    check_shapes(family, data, theta)?;
    let n = data.n() as f64;
    let mut acc = 0.0;
    for (i, &y) in data.response().iter().enumerate() {
        acc += if alpha.is_mle() {
            family.log_density(i, y, theta)
        } else {
            v_weight(family, i, y, theta, alpha)?
        };
    }
    Ok(acc / n)
}

/// Gradient of [`objective`] with respect to `(β, σ)`.
///
/// For `α > 0` each term is `α V_i (u_i(Y_i) − ∫f_i^{α+1}u_i / ∫f_i^{α+1})`.
pub fn score<F: DensityFamily>(family: &F, data: &ModelData, theta: &Theta, alpha: Alpha) -> Result<Vec<f64>> {
    check_shapes(family, data, theta)?;
    let n = data.n() as f64;
    let d = theta.dim();
    let mut g = vec![0.0; d];
    let a = alpha.value();
    for (i, &y) in data.response().iter().enumerate() {
        let u = family.score(i, y, theta);
        if alpha.is_mle() {
            g.iter_mut().zip(&u).for_each(|(gj, uj)| *gj += uj);
            continue;
        }
        let v = v_weight(family, i, y, theta, alpha)?;
        let b = family.power_integral(i, theta, a + 1.0)?;
        let c = family.power_score_integral(i, theta, a + 1.0)?;
        for j in 0..d {
            g[j] += a * v * (u[j] - c[j] / b);
        }
    }
    g.iter_mut().for_each(|v| *v /= n);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ModelData {
        let x = Matrix::from_rows(&[
            vec![1.0, -1.0],
            vec![1.0, 0.0],
            vec![1.0, 0.5],
            vec![1.0, 1.0],
            vec![1.0, 2.0],
            vec![1.0, 3.5],
        ])
        .unwrap();
        ModelData::new(x, vec![0.2, 1.1, 1.2, 2.3, 2.9, 4.8]).unwrap()
    }

    #[test]
    fn theta_and_alpha_validation() {
        assert!(Theta::new(vec![1.0], 0.0).is_err());
        assert!(Theta::new(vec![f64::NAN], 1.0).is_err());
        assert!(Alpha::new(-0.1).is_err());
        assert!(Alpha::new(0.0).unwrap().is_mle());
        let t = Theta::from_slice(&[1.0, 2.0, 0.5]).unwrap();
        assert_eq!(t.beta, vec![1.0, 2.0]);
        assert_eq!(t.sigma, 0.5);
    }

    #[test]
    fn data_validation() {
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert!(ModelData::new(x.clone(), vec![1.0, 2.0]).is_err());
        assert!(ModelData::new(x, vec![1.0]).is_err());
        let d = toy();
        let e = d.without_rows(&[1, 6]).unwrap();
        assert_eq!(e.n(), 4);
        assert_eq!(e.response(), &[1.1, 1.2, 2.3, 2.9]);
        assert!(d.without_rows(&[7]).is_err());
    }

    #[test]
    fn mle_loss_at_zero_residual() {
        let d = toy();
        let fam = NormalLinear::for_data(&d);
        let th = Theta::new(vec![1.0, 1.0], 1.7).unwrap();
        let y = fam.mean(2, &th);
        let loss = rp_loss_single(&fam, 2, y, &th, Alpha::MLE).unwrap();
        assert!((loss - 0.5 * (2.0 * PI * 1.7 * 1.7).ln()).abs() < 1e-14);
    }

    #[test]
    fn rp_loss_matches_quadrature() {
        let d = toy();
        let fam = NormalLinear::for_data(&d);
        let th = Theta::new(vec![0.0, 0.0], 1.0).unwrap();
        let a = 0.5;
        let loss = rp_loss_single(&fam, 0, 0.0, &th, Alpha::new(a).unwrap()).unwrap();
        let rule = QuadratureRule::default();
        let integral = integrate(|y| fam.density(0, y, &th).powf(1.0 + a), &rule, 0.0, 1.0).unwrap();
        let oracle = integral.ln() / (1.0 + a) + 0.5 * (2.0 * PI).ln();
        assert!((loss - oracle).abs() < 1e-12);
    }

    #[test]
    fn loss_decreases_with_density() {
        let d = toy();
        let fam = NormalLinear::for_data(&d);
        let th = Theta::new(vec![1.0, 1.0], 1.0).unwrap();
        let al = Alpha::new(0.3).unwrap();
        let m = fam.mean(1, &th);
        let near = rp_loss_single(&fam, 1, m + 0.1, &th, al).unwrap();
        let far = rp_loss_single(&fam, 1, m + 2.0, &th, al).unwrap();
        assert!(near < far);
    }

    #[test]
    fn v_weight_closed_form() {
        let d = toy();
        let fam = NormalLinear::for_data(&d);
        let th = Theta::new(vec![1.0, 1.0], 1.0).unwrap();
        let m = fam.mean(0, &th);
        let v = v_weight(&fam, 0, m, &th, Alpha::new(1.0).unwrap()).unwrap();
        assert!((v - (1.0 / PI).powf(0.25)).abs() < 1e-14);
        assert!((v - 0.7511).abs() < 1e-4);
        assert!(v_weight(&fam, 0, m, &th, Alpha::MLE).is_err());
    }

    #[test]
    fn v_weight_vanishes_in_tail_and_scales() {
        let d = toy();
        let fam = NormalLinear::for_data(&d);
        let al = Alpha::new(0.7).unwrap();
        let th = Theta::new(vec![0.5, -0.25], 1.3).unwrap();
        let m = fam.mean(3, &th);
        assert!(v_weight(&fam, 3, m + 60.0, &th, al).unwrap() < 1e-200);
        // scale residual and sigma by c
        let c = 2.0;
        let th2 = Theta::new(th.beta.clone(), c * th.sigma).unwrap();
        let v1 = v_weight(&fam, 3, m + 0.8, &th, al).unwrap();
        let v2 = v_weight(&fam, 3, m + c * 0.8, &th2, al).unwrap();
        let a = al.value();
        assert!((v2 / v1 - c.powf(-a / (a + 1.0))).abs() < 1e-13);
    }

    #[test]
    fn v_weight_equals_exp_of_negative_scaled_loss() {
        let d = toy();
        let fam = NormalLinear::for_data(&d);
        let th = Theta::new(vec![0.3, 1.1], 0.8).unwrap();
        let al = Alpha::new(0.45).unwrap();
        for i in 0..d.n() {
            let y = d.response()[i];
            let v = v_weight(&fam, i, y, &th, al).unwrap();
            let l = rp_loss_single(&fam, i, y, &th, al).unwrap();
            assert!((v - (-al.value() * l).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn objective_at_mle_branch_is_gaussian_loglik() {
        let d = toy();
        let fam = NormalLinear::for_data(&d);
        let th = Theta::new(vec![0.9, 1.05], 0.6).unwrap();
        let rss: f64 = (0..d.n()).map(|i| (d.response()[i] - fam.mean(i, &th)).powi(2)).sum();
        let n = d.n() as f64;
        let want = -0.5 * (2.0 * PI * 0.36).ln() - rss / (2.0 * n * 0.36);
        assert!((objective(&fam, &d, &th, Alpha::MLE).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn objective_constant_when_all_on_the_line() {
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let th = Theta::new(vec![1.0, 2.0], 0.9).unwrap();
        let d = ModelData::new(x, vec![1.0, 3.0, 5.0]).unwrap();
        let fam = NormalLinear::for_data(&d);
        let al = Alpha::new(0.5).unwrap();
        let obj = objective(&fam, &d, &th, al).unwrap();
        let v0 = v_weight(&fam, 0, 1.0, &th, al).unwrap();
        assert!((obj - v0).abs() < 1e-15);
    }

    #[test]
    fn objective_matches_scalar_recomputation() {
        // independent re-evaluation from the printed closed form
        let d = toy();
        let fam = NormalLinear::for_data(&d);
        let th = Theta::new(vec![0.7, 1.2], 0.9).unwrap();
        let a: f64 = 0.5;
        let konst = ((1.0 + a) / (2.0 * PI)).powf(a / (2.0 * (a + 1.0)));
        let mut acc = 0.0;
        for i in 0..d.n() {
            let x = d.row(i);
            let r = (d.response()[i] - th.beta[0] * x[0] - th.beta[1] * x[1]) / th.sigma;
            acc += konst * th.sigma.powf(-a / (a + 1.0)) * (-0.5 * a * r * r).exp();
        }
        let obj = objective(&fam, &d, &th, Alpha::new(a).unwrap()).unwrap();
        assert!((obj - acc / d.n() as f64).abs() < 1e-14);
    }

    #[test]
    fn score_matches_finite_differences() {
        let d = toy();
        let fam = NormalLinear::for_data(&d);
        let th = Theta::new(vec![0.8, 0.9], 0.75).unwrap();
        for a in [0.0, 0.3, 1.0] {
            let al = Alpha::new(a).unwrap();
            let g = score(&fam, &d, &th, al).unwrap();
            let base = th.to_vec();
            for j in 0..base.len() {
                let h = 1e-6;
                let mut up = base.clone();
                up[j] += h;
                let mut dn = base.clone();
                dn[j] -= h;
                let fd = (objective(&fam, &d, &Theta::from_slice(&up).unwrap(), al).unwrap()
                    - objective(&fam, &d, &Theta::from_slice(&dn).unwrap(), al).unwrap())
                    / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-6 * (1.0 + g[j].abs()), "a={a} j={j} {fd} {}", g[j]);
            }
        }
    }

    #[test]
    fn score_proportional_to_estimating_equations() {
        let d = toy();
        let fam = NormalLinear::for_data(&d);
        let th = Theta::new(vec![0.8, 0.9], 0.75).unwrap();
        let a = 0.4;
        let g = score(&fam, &d, &th, Alpha::new(a).unwrap()).unwrap();
        let mut eq_b = [0.0; 2];
        let mut eq_s = 0.0;
        for i in 0..d.n() {
            let x = d.row(i);
            let r = (d.response()[i] - dot(x, &th.beta)) / th.sigma;
            let w = (-0.5 * a * r * r).exp();
            eq_b[0] += w * r * x[0];
            eq_b[1] += w * r * x[1];
            eq_s += w * (r * r - 1.0 / (1.0 + a));
        }
        let ratio = g[0] / eq_b[0];
        assert!(ratio > 0.0);
        assert!((g[1] / eq_b[1] - ratio).abs() < 1e-12 * ratio);
        // same positive factor for the sigma equation
        assert!((g[2] / eq_s - ratio).abs() < 1e-12 * ratio);
    }

    #[test]
    fn score_rejects_nonpositive_sigma() {
        let d = toy();
        let fam = NormalLinear::for_data(&d);
        let th = Theta { beta: vec![0.0, 0.0], sigma: -1.0 };
        assert!(matches!(score(&fam, &d, &th, Alpha::MLE), Err(Error::Domain(_))));
    }

    #[test]
    fn closed_form_integrals_match_quadrature() {
        let d = toy();
        let fam = NormalLinear::for_data(&d);
        let quad = QuadratureBacked::new(NormalLinear::for_data(&d), QuadratureRule::default());
        for sigma in [0.5, 1.0, 3.0] {
            let th = Theta::new(vec![0.4, -0.6], sigma).unwrap();
            for a in [0.1, 0.5, 1.0, 1.5] {
                let c = 1.0 + a;
                let i = 4;
                let b1 = fam.power_integral(i, &th, c).unwrap();
                let b2 = quad.power_integral(i, &th, c).unwrap();
                assert!((b1 - b2).abs() < 1e-8 * b1.max(1.0));
                let s1 = fam.power_score_integral(i, &th, c).unwrap();
                let s2 = quad.power_score_integral(i, &th, c).unwrap();
                for (x, y) in s1.iter().zip(&s2) {
                    assert!((x - y).abs() < 1e-8);
                }
                let o1 = fam.power_score_outer_integral(i, &th, c).unwrap();
                let o2 = quad.power_score_outer_integral(i, &th, c).unwrap();
                let j1 = fam.power_score_jacobian_integral(i, &th, c).unwrap();
                let j2 = quad.power_score_jacobian_integral(i, &th, c).unwrap();
                for (x, y) in o1.as_slice().iter().zip(o2.as_slice()).chain(j1.as_slice().iter().zip(j2.as_slice())) {
                    assert!((x - y).abs() < 1e-8, "{x} {y}");
                }
            }
            assert!((fam.power_integral(0, &th, 1.0).unwrap() - 1.0).abs() < 1e-12);
            assert!((quad.power_integral(0, &th, 1.0).unwrap() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn objective_invariant_under_permutation() {
        let d = toy();
        let perm = [3usize, 0, 5, 1, 4, 2];
        let rows: Vec<Vec<f64>> = perm.iter().map(|&i| d.row(i).to_vec()).collect();
        let ys: Vec<f64> = perm.iter().map(|&i| d.response()[i]).collect();
        let dp = ModelData::new(Matrix::from_rows(&rows).unwrap(), ys).unwrap();
        let th = Theta::new(vec![0.8, 0.9], 0.75).unwrap();
        let al = Alpha::new(0.6).unwrap();
        let a = objective(&NormalLinear::for_data(&d), &d, &th, al).unwrap();
        let b = objective(&NormalLinear::for_data(&dp), &dp, &th, al).unwrap();
        assert!((a - b).abs() < 1e-15);
    }
}
