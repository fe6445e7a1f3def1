//! Influence functions of the minimum RP functional and of the Wald-type
//! test functionals, gross-error sensitivities and asymptotic relative
//! efficiency.
//!
//! Only the model case is covered: every observation is assumed to follow
//! its model density `f_i(·, θ)` apart from the point mass being studied.
//!
//! Sign and scale convention for the normal model:
//! `D_β = (1/σ) e^{−αr²/2} r x`, `D_σ = (1/σ) e^{−αr²/2} (r² − 1/(α+1))`,
//! with `IF = Ψ_n⁻¹ D`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::covariance_mlrm;
use crate::inference::LinearHypothesis;
use crate::model::{Alpha, DensityFamily, ModelData, Theta};
use crate::numerics::linalg::{dot, norm2, Cholesky, Matrix};
use crate::numerics::optimize::golden_section_max;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Contamination of a single observation (1-based index).
    Single(usize),
    /// The same point contaminates every observation.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IFRequest {
    pub direction: Direction,
    /// Contamination points `t` in response units.
    pub points: Vec<f64>,
    pub theta: Theta,
    pub alpha: Alpha,
    /// When present the composite second-order IF is also reported.
    pub hypothesis: Option<LinearHypothesis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IFReport {
    pub first_order: Vec<Vec<f64>>,
    /// Empty when not computed.
    pub second_order_simple: Vec<f64>,
    /// Empty unless the request carries a hypothesis.
    pub second_order_composite: Vec<f64>,
    /// Largest `‖IF‖₂` over the supplied points.
    pub sup_norm: f64,
}

fn directions(req: &IFRequest, n: usize) -> Result<Vec<usize>> {
    if req.points.is_empty() {
        return Err(Error::Domain("at least one contamination point is required".into()));
    }
    if !(req.theta.sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {}", req.theta.sigma)));
    }
    match req.direction {
        Direction::Single(i0) if i0 == 0 || i0 > n => {
            Err(Error::Domain(format!("direction {i0} outside 1..={n}")))
        }
        Direction::Single(i0) => Ok(vec![i0 - 1]),
        Direction::All => Ok((0..n).collect()),
    }
}

fn sup_norm(vs: &[Vec<f64>]) -> f64 {
    vs.iter().map(|v| norm2(v)).fold(0.0, f64::max)
}

/// First-order IF from the general influence formula, with every integral
/// taken from the family (quadrature unless it has closed forms).
pub fn if_general<F: DensityFamily>(family: &F, data: &ModelData, req: &IFRequest) -> Result<IFReport> {
    let n = data.n();
    if family.n_obs() != n || family.dim() != req.theta.dim() {
        return Err(Error::Dimension("family, data and theta disagree".into()));
    }
    let dirs = directions(req, n)?;
    let th = &req.theta;
    let c = req.alpha.value() + 1.0;
    let d = th.dim();

    // M = (1/n) Σ (b·∫f^c uuᵀ − aaᵀ)/b² with a = ∫f^c u, b = ∫f^c
    let mut m = Matrix::zeros(d, d);
    for i in 0..n {
        let b = family.power_integral(i, th, c)?;
        let a = family.power_score_integral(i, th, c)?;
        let o = family.power_score_outer_integral(i, th, c)?;
        for j in 0..d {
            for k in 0..d {
                m[(j, k)] += (b * o[(j, k)] - a[j] * a[k]) / (b * b * n as f64);
            }
        }
    }
    let chol = Cholesky::new(&m)?;

    let mut first = Vec::with_capacity(req.points.len());
    for &t in &req.points {
        let mut total = vec![0.0; d];
        for &i in &dirs {
            // D = −ℓ/b², ℓ = f(t)^α (a − u(t) b)
            let b = family.power_integral(i, th, c)?;
            let a = family.power_score_integral(i, th, c)?;
            let u = family.score(i, t, th);
            let fa = (req.alpha.value() * family.log_density(i, t, th)).exp();
            for j in 0..d {
                total[j] += fa * (u[j] * b - a[j]) / (b * b);
            }
        }
        first.push(chol.solve(&total)?);
    }
    let sup_norm = sup_norm(&first);
    Ok(IFReport {
        first_order: first,
        second_order_simple: Vec::new(),
        second_order_composite: Vec::new(),
        sup_norm,
    })
}

/// Closed-form `D` for the normal linear model at each point.
pub fn d_mlrm(data: &ModelData, req: &IFRequest) -> Result<Vec<Vec<f64>>> {
    let dirs = directions(req, data.n())?;
    let th = &req.theta;
    if th.beta.len() != data.p() {
        return Err(Error::Dimension("theta and design disagree on p".into()));
    }
    let a = req.alpha.value();
    let s = th.sigma;
    let p = data.p();
    Ok(req
        .points
        .iter()
        .map(|&t| {
            let mut d = vec![0.0; p + 1];
            for &i in &dirs {
                let x = data.row(i);
                let r = (t - dot(x, &th.beta)) / s;
                let w = (-0.5 * a * r * r).exp() / s;
                for k in 0..p {
                    d[k] += w * r * x[k];
                }
                d[p] += w * (r * r - 1.0 / (a + 1.0));
            }
            d
        })
        .collect())
}

/// Closed-form first-order IF and the simple (and, with a hypothesis,
/// composite) second-order IF of the Wald functional at `θ`.
pub fn if_mlrm_closed(data: &ModelData, req: &IFRequest) -> Result<IFReport> {
    let ds = d_mlrm(data, req)?;
    let cov = covariance_mlrm(data, &req.theta, req.alpha)?;
    let psi = Cholesky::new(&cov.psi_n)?;
    let first = ds.iter().map(|d| psi.solve(d)).collect::<Result<Vec<_>>>()?;
    let second_order_simple = if2_wald(&ds, None, &cov.sigma_n, &cov.psi_n)?;
    let second_order_composite = match &req.hypothesis {
        Some(h) => if2_wald(&ds, Some(h), &cov.sigma_n, &cov.psi_n)?,
        None => Vec::new(),
    };
    let sup_norm = sup_norm(&first);
    Ok(IFReport { first_order: first, second_order_simple, second_order_composite, sup_norm })
}

/// Second-order IF of the Wald functional for each `D`:
/// `2 (Ψ⁻¹D)ᵀ Σ⁻¹ (Ψ⁻¹D)` for the simple null and
/// `2 (Ψ⁻¹D)ᵀ M[MᵀΣM]⁻¹Mᵀ (Ψ⁻¹D)` for a composite one.
pub fn if2_wald(ds: &[Vec<f64>], hyp: Option<&LinearHypothesis>, sigma_n: &Matrix, psi_n: &Matrix) -> Result<Vec<f64>> {
    let psi = Cholesky::new(psi_n)?;
    match hyp {
        None => {
            let sig = Cholesky::new(sigma_n)?;
            ds.iter()
                .map(|d| {
                    let v = psi.solve(d)?;
                    Ok((2.0 * dot(&v, &sig.solve(&v)?)).max(0.0))
                })
                .collect()
        }
        Some(h) => {
            let inner = Cholesky::new(&h.project(sigma_n)?)?;
            let mt = h.m_matrix().transpose();
            ds.iter()
                .map(|d| {
                    let v = mt.matvec(&psi.solve(d)?)?;
                    Ok((2.0 * dot(&v, &inner.solve(&v)?)).max(0.0))
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GrossErrorSensitivity {
    Bounded { gamma_beta: f64, gamma_sigma: f64 },
    /// `α = 0`: the IF is unbounded in the residual.
    Unbounded,
}

/// `(α+1)^{3/2} α^{−1/2} e^{−1/2}`: `γ*(β)` per unit of `σ‖S⁻¹x_{i₀}‖`.
pub fn gamma_beta_factor(alpha: f64) -> f64 {
    (alpha + 1.0).powf(1.5) / alpha.sqrt() * (-0.5f64).exp()
}

/// `γ*(σ)` per unit of `σ`: the larger of the two critical values of
/// `|IF_σ|` in the residual, at `r² = 2/α + 1/(α+1)` and at `r = 0`.
pub fn gamma_sigma_factor(alpha: f64) -> f64 {
    let tail = (alpha + 1.0).powf(2.5) / alpha * (-(3.0 * alpha + 2.0) / (2.0 * (alpha + 1.0))).exp();
    let center = 0.5 * (alpha + 1.0).powf(1.5);
    tail.max(center)
}

/// Closed-form gross-error sensitivities in direction `i0` (1-based).
pub fn gross_error_sensitivity(data: &ModelData, i0: usize, theta: &Theta, alpha: Alpha) -> Result<GrossErrorSensitivity> {
    if i0 == 0 || i0 > data.n() {
        return Err(Error::Domain(format!("direction {i0} outside 1..={}", data.n())));
    }
    if alpha.is_mle() {
        return Ok(GrossErrorSensitivity::Unbounded);
    }
    let z = Cholesky::new(&data.scaled_gram())?.solve(data.row(i0 - 1))?;
    let a = alpha.value();
    Ok(GrossErrorSensitivity::Bounded {
        gamma_beta: theta.sigma * gamma_beta_factor(a) * norm2(&z),
        gamma_sigma: theta.sigma * gamma_sigma_factor(a),
    })
}

/// Numeric sup of `‖IF_β‖` and `|IF_σ|` over `t ∈ x_{i₀}ᵀβ ± 20σ`,
/// by golden-section search on each monotone piece of the residual axis.
pub fn gross_error_sensitivity_numeric(data: &ModelData, i0: usize, theta: &Theta, alpha: Alpha) -> Result<(f64, f64)> {
    if alpha.is_mle() {
        return Err(Error::Domain("the IF is unbounded at alpha = 0".into()));
    }
    let a = alpha.value();
    let center = dot(data.row(i0.saturating_sub(1).min(data.n() - 1)), &theta.beta);
    let p = data.p();
    let eval = |r: f64| -> Result<Vec<f64>> {
        let req = IFRequest {
            direction: Direction::Single(i0),
            points: vec![center + r * theta.sigma],
            theta: theta.clone(),
            alpha,
            hypothesis: None,
        };
        Ok(if_mlrm_closed(data, &req)?.first_order.remove(0))
    };
    eval(0.0)?;
    let beta_norm = |r: f64| eval(r).map(|v| norm2(&v[..p])).unwrap_or(f64::NAN);
    let sigma_abs = |r: f64| eval(r).map(|v| v[p].abs()).unwrap_or(f64::NAN);
    let tol = 1e-10;
    let rb = golden_section_max(beta_norm, 0.0, 20.0, tol);
    // |IF_σ| falls from r = 0 to its zero at r² = 1/(α+1), then has one peak
    let zero = (1.0 / (a + 1.0)).sqrt();
    let rs = golden_section_max(sigma_abs, zero, 20.0, tol);
    Ok((beta_norm(rb), sigma_abs(rs).max(sigma_abs(0.0))))
}

/// Asymptotic relative efficiencies `(ARE_β, ARE_σ)` against the MLE.
pub fn are(alpha: Alpha) -> (f64, f64) {
    let a = alpha.value();
    let c3 = (a + 1.0).powi(3);
    let are_beta = (2.0 * a + 1.0).powf(1.5) / c3;
    let are_sigma = 2.0 * (2.0 * a + 1.0).powf(2.5) / (c3 * (3.0 * a * a + 4.0 * a + 2.0));
    (are_beta, are_sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NormalLinear, QuadratureBacked};
    use crate::numerics::optimize::golden_section_min;
    use crate::numerics::quadrature::QuadratureRule;
    use crate::numerics::rng::RngStream;

    fn design(n: usize) -> ModelData {
        // symmetric two-point design around zero
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![1.0, if i % 2 == 0 { -1.0 } else { 1.0 }]).collect();
        let ys = (0..n).map(|i| 0.1 * i as f64).collect();
        ModelData::new(Matrix::from_rows(&rows).unwrap(), ys).unwrap()
    }

    fn req(direction: Direction, points: Vec<f64>, theta: Theta, a: f64) -> IFRequest {
        IFRequest { direction, points, theta, alpha: Alpha::new(a).unwrap(), hypothesis: None }
    }

    #[test]
    fn zero_residual_kills_beta_part() {
        let d = design(10);
        let th = Theta::new(vec![1.0, 2.0], 1.5).unwrap();
        let t = dot(d.row(2), &th.beta);
        let r = req(Direction::Single(3), vec![t], th.clone(), 0.4);
        let quad = QuadratureBacked::new(NormalLinear::for_data(&d), QuadratureRule::default());
        let rep = if_general(&quad, &d, &r).unwrap();
        assert!(rep.first_order[0][0].abs() < 1e-12 && rep.first_order[0][1].abs() < 1e-12);
        let ds = d_mlrm(&d, &r).unwrap();
        assert_eq!(ds[0][0], 0.0);
        // positive-Ψ convention: D_σ(r = 0) = −1/(σ(α+1))
        assert!((ds[0][2] + 1.0 / (1.5 * 1.4)).abs() < 1e-15);
    }

    #[test]
    fn general_matches_closed_form() {
        let d = design(12);
        let mut rng = RngStream::new(21, 0);
        for _ in 0..20 {
            let th = Theta::new(vec![rng.normal(0.0, 2.0), rng.normal(0.0, 2.0)], 0.3 + 2.0 * rng.uniform()).unwrap();
            let a = 0.05 + 1.45 * rng.uniform();
            let i0 = 1 + rng.index(d.n());
            let t = dot(d.row(i0 - 1), &th.beta) + th.sigma * rng.normal(0.0, 3.0);
            let r = req(Direction::Single(i0), vec![t], th, a);
            let quad = QuadratureBacked::new(NormalLinear::for_data(&d), QuadratureRule::default());
            let g = if_general(&quad, &d, &r).unwrap();
            let c = if_mlrm_closed(&d, &r).unwrap();
            for (x, y) in g.first_order[0].iter().zip(&c.first_order[0]) {
                assert!((x - y).abs() <= 1e-6 * (1.0 + y.abs()), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn all_directions_is_sum_of_single() {
        let d = design(6);
        let th = Theta::new(vec![0.5, -0.3], 0.9).unwrap();
        let pts = vec![-1.0, 0.4, 2.5];
        let all = if_mlrm_closed(&d, &req(Direction::All, pts.clone(), th.clone(), 0.6)).unwrap();
        let fam = NormalLinear::for_data(&d);
        let all_g = if_general(&fam, &d, &req(Direction::All, pts.clone(), th.clone(), 0.6)).unwrap();
        for k in 0..pts.len() {
            let mut sum = [0.0; 3];
            for i in 1..=d.n() {
                let s = if_mlrm_closed(&d, &req(Direction::Single(i), pts.clone(), th.clone(), 0.6)).unwrap();
                sum.iter_mut().zip(&s.first_order[k]).for_each(|(a, b)| *a += b);
            }
            for j in 0..3 {
                assert!((sum[j] - all.first_order[k][j]).abs() < 1e-12);
                assert!((sum[j] - all_g.first_order[k][j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mle_if_grows_linearly() {
        let d = design(8);
        let th = Theta::new(vec![0.0, 1.0], 1.0).unwrap();
        let c = dot(d.row(0), &th.beta);
        let norms: Vec<f64> = [10.0, 100.0, 1000.0]
            .iter()
            .map(|k| {
                let rep = if_mlrm_closed(&d, &req(Direction::Single(1), vec![c + k], th.clone(), 0.0)).unwrap();
                norm2(&rep.first_order[0][..2])
            })
            .collect();
        assert!((norms[1] / norms[0] - 10.0).abs() < 1e-9);
        assert!((norms[2] / norms[1] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn robust_if_is_bounded() {
        let d = design(8);
        let th = Theta::new(vec![0.0, 1.0], 1.0).unwrap();
        let pts: Vec<f64> = (-200..=200).map(|k| 5000.0 * k as f64).collect();
        let rep = if_mlrm_closed(&d, &req(Direction::Single(1), pts, th.clone(), 0.3)).unwrap();
        let Ok(GrossErrorSensitivity::Bounded { gamma_beta, gamma_sigma }) =
            gross_error_sensitivity(&d, 1, &th, Alpha::new(0.3).unwrap())
        else {
            panic!()
        };
        assert!(rep.sup_norm.is_finite());
        assert!(rep.sup_norm <= gamma_beta.hypot(gamma_sigma) + 1e-12);
    }

    #[test]
    fn second_order_identity_and_projection() {
        let d = design(10);
        let th = Theta::new(vec![0.2, 0.7], 1.3).unwrap();
        let mut r = req(Direction::Single(4), vec![-3.0, 0.0, 0.5, 4.0], th.clone(), 0.5);
        r.hypothesis = Some(LinearHypothesis::fix_coordinates(3, &[(1, 0.7)]).unwrap());
        let rep = if_mlrm_closed(&d, &r).unwrap();
        let cov = covariance_mlrm(&d, &th, r.alpha).unwrap();
        let sig = Cholesky::new(&cov.sigma_n).unwrap();
        for k in 0..4 {
            let v = &rep.first_order[k];
            let direct = 2.0 * dot(v, &sig.solve(v).unwrap());
            assert!((direct - rep.second_order_simple[k]).abs() < 1e-10 * (1.0 + direct));
            assert!(rep.second_order_composite[k] <= rep.second_order_simple[k] + 1e-12);
            assert!(rep.second_order_composite[k] >= 0.0);
        }
    }

    #[test]
    fn composite_below_simple_for_random_diagonal_sigma() {
        let mut rng = RngStream::new(4, 4);
        for _ in 0..20 {
            let sig = Matrix::from_diag(&[0.2 + rng.uniform(), 0.2 + rng.uniform(), 0.2 + rng.uniform()]);
            let psi = Matrix::from_diag(&[0.5 + rng.uniform(), 0.5 + rng.uniform(), 0.5 + rng.uniform()]);
            let d = vec![rng.standard_normal(), rng.standard_normal(), rng.standard_normal()];
            let h = LinearHypothesis::fix_coordinates(3, &[(0, 0.0), (2, 0.0)]).unwrap();
            let s = if2_wald(std::slice::from_ref(&d), None, &sig, &psi).unwrap()[0];
            let c = if2_wald(&[d], Some(&h), &sig, &psi).unwrap()[0];
            assert!(c <= s + 1e-12);
        }
    }

    #[test]
    fn zero_d_gives_zero_second_order() {
        let sig = Matrix::from_diag(&[1.0, 2.0, 3.0]);
        let h = LinearHypothesis::fix_coordinates(3, &[(1, 0.0)]).unwrap();
        assert_eq!(if2_wald(&[vec![0.0; 3]], Some(&h), &sig, &sig).unwrap()[0], 0.0);
    }

    #[test]
    fn gross_error_closed_form_matches_numeric_sup() {
        let d = design(10);
        for (a, s) in [(0.2, 1.0), (0.5, 2.0), (1.0, 1.0), (1.5, 0.7), (2.5, 1.0)] {
            let th = Theta::new(vec![0.3, -0.2], s).unwrap();
            let al = Alpha::new(a).unwrap();
            let GrossErrorSensitivity::Bounded { gamma_beta, gamma_sigma } =
                gross_error_sensitivity(&d, 2, &th, al).unwrap()
            else {
                panic!()
            };
            let (nb, ns) = gross_error_sensitivity_numeric(&d, 2, &th, al).unwrap();
            assert!((nb - gamma_beta).abs() < 1e-3 * gamma_beta, "a={a}: {nb} vs {gamma_beta}");
            assert!((ns - gamma_sigma).abs() < 1e-3 * gamma_sigma, "a={a}: {ns} vs {gamma_sigma}");
        }
    }

    #[test]
    fn gamma_sigma_at_one() {
        assert!((gamma_sigma_factor(1.0) - 2f64.powf(2.5) * (-1.25f64).exp()).abs() < 1e-14);
        assert!((gamma_sigma_factor(1.0) - 1.6207).abs() < 1e-4);
    }

    #[test]
    fn gamma_scales_with_sigma_and_unbounded_at_zero() {
        let d = design(6);
        let g = |s: f64| match gross_error_sensitivity(&d, 1, &Theta::new(vec![0.0, 0.0], s).unwrap(), Alpha::new(0.7).unwrap()).unwrap() {
            GrossErrorSensitivity::Bounded { gamma_beta, .. } => gamma_beta,
            GrossErrorSensitivity::Unbounded => panic!(),
        };
        assert!((g(3.0) - 3.0 * g(1.0)).abs() < 1e-12);
        let th = Theta::new(vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(gross_error_sensitivity(&d, 1, &th, Alpha::MLE).unwrap(), GrossErrorSensitivity::Unbounded);
    }

    #[test]
    fn optimal_alphas() {
        let ab = golden_section_min(gamma_beta_factor, 0.01, 3.0, 1e-9);
        let as_ = golden_section_min(gamma_sigma_factor, 0.01, 3.0, 1e-9);
        assert!((ab - 0.5).abs() < 1e-6);
        assert!((as_ - (2.0f64 / 3.0).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn are_values() {
        assert_eq!(are(Alpha::MLE), (1.0, 1.0));
        let (b, s) = are(Alpha::new(0.5).unwrap());
        assert!((100.0 * b - 83.81).abs() < 5e-3 && (100.0 * s - 70.57).abs() < 5e-3);
        let (b, s) = are(Alpha::new(1.5).unwrap());
        assert!((100.0 * b - 51.20).abs() < 5e-3 && (100.0 * s - 27.77).abs() < 5e-3);
        let mut prev = (1.1, 1.1);
        for k in 0..=150 {
            let v = are(Alpha::new(k as f64 / 100.0).unwrap());
            assert!(v.1 <= v.0 + 1e-15);
            if k > 0 {
                assert!(v.0 < prev.0 && v.1 < prev.1);
            }
            prev = v;
        }
    }
}
