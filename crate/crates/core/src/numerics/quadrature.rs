//! Integration rules for integrals of the form `∫ h(y) dy` over the real line.
//!
//! Two kinds are provided. [`RuleKind::GaussHermite`] is exact for a
//! polynomial times a Gaussian kernel centred at `center` with standard
//! deviation `scale`; it is the default for every in-scope integrand.
//! [`RuleKind::AdaptiveInterval`] runs adaptive Simpson over
//! `center ± half_width · scale` and is meant for non-Gaussian families.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GH_NODES: usize = 64;
const MIN_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RuleKind {
    GaussHermite,
    AdaptiveInterval { tolerance: f64, max_depth: u32 },
}

/// Nodes are in standardized units. For Gauss–Hermite the weights integrate
/// against the standard normal density (they sum to one); for the adaptive
/// kind each node is the midpoint of an initial panel and its weight is the
/// panel width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    kind: RuleKind,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `weights[k] / φ(nodes[k])`, used to integrate raw integrands.
    #[serde(skip)]
    plain_weights: Vec<f64>,
}

impl QuadratureRule {
    /// Gauss–Hermite rule with `n` nodes (Newton iteration on the
    /// orthonormal Hermite recurrence).
    pub fn gauss_hermite(n: usize) -> Result<Self> {
        if n < MIN_NODES {
            return Err(Error::Domain(format!("need at least {MIN_NODES} nodes, got {n}")));
        }
        let pim4 = PI.powf(-0.25);
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * (1.0 + z.abs()) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        // physicists' weights (kernel e^{-x²}) -> standard normal reference
        let mut nodes: Vec<f64> = x.iter().map(|v| v * 2f64.sqrt()).collect();
        let mut weights: Vec<f64> = w.iter().map(|v| v / PI.sqrt()).collect();
        // ascending order
        nodes.reverse();
        weights.reverse();
        let plain_weights = nodes
            .iter()
            .zip(&weights)
            .map(|(z, w)| (w.ln() + 0.5 * z * z + 0.5 * (2.0 * PI).ln()).exp())
            .collect();
        Ok(Self { kind: RuleKind::GaussHermite, nodes, weights, plain_weights })
    }

    /// Adaptive Simpson rule over `[-half_width, half_width]` (standardized
    /// units) split into `panels` initial panels.
    pub fn adaptive(half_width: f64, panels: usize, tolerance: f64) -> Result<Self> {
        if panels < MIN_NODES {
            return Err(Error::Domain(format!("need at least {MIN_NODES} panels, got {panels}")));
        }
        if !(half_width > 0.0 && tolerance > 0.0) {
            return Err(Error::Domain("half width and tolerance must be positive".into()));
        }
        let width = 2.0 * half_width / panels as f64;
        let nodes: Vec<f64> = (0..panels).map(|k| -half_width + (k as f64 + 0.5) * width).collect();
        let weights = vec![width; panels];
        Ok(Self {
            kind: RuleKind::AdaptiveInterval { tolerance, max_depth: 40 },
            nodes,
            plain_weights: weights.clone(),
            weights,
        })
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::gauss_hermite(DEFAULT_GH_NODES).expect("64 >= 16")
    }
}

fn checked(h: &impl Fn(f64) -> f64, y: f64) -> Result<f64> {
    let v = h(y);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteIntegrand { at: y })
    }
}

/// `∫ h(y) dy` using `rule` placed at `center` with spread `scale`.
pub fn integrate(h: impl Fn(f64) -> f64, rule: &QuadratureRule, center: f64, scale: f64) -> Result<f64> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Domain(format!("integration scale must be positive, got {scale}")));
    }
    match rule.kind {
        RuleKind::GaussHermite => {
            let mut acc = 0.0;
            for (z, w) in rule.nodes.iter().zip(&rule.plain_weights) {
                acc += w * checked(&h, center + scale * z)?;
            }
            Ok(acc * scale)
        }
        RuleKind::AdaptiveInterval { tolerance, max_depth } => {
            let per_panel = tolerance / rule.nodes.len() as f64;
            let mut acc = 0.0;
            for (mid, width) in rule.nodes.iter().zip(&rule.weights) {
                let a = center + scale * (mid - 0.5 * width);
                let b = center + scale * (mid + 0.5 * width);
                acc += integrate_interval(&h, a, b, per_panel, max_depth)?;
            }
            Ok(acc)
        }
    }
}

/// Adaptive Simpson on `[a, b]` with absolute tolerance `tol`.
pub fn integrate_interval(h: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_depth: u32) -> Result<f64> {
    let fa = checked(h, a)?;
    let fb = checked(h, b)?;
    let m = 0.5 * (a + b);
    let fm = checked(h, m)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(h, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    h: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = checked(h, lm)?;
    let frm = checked(h, rm)?;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return Ok(left + right + diff / 15.0);
    }
    Ok(simpson_step(h, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + simpson_step(h, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}
