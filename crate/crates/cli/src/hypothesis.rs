//! Parsing of parameter assignments and linear hypotheses.
//!
//! Coefficients are named `b0 … b{p-1}` (or `beta0 …`) and the scale is
//! `sigma`, so for `p` regressors `θ = (b0, …, b{p-1}, sigma)`.

use anyhow::{anyhow, bail, Result};
use rpreg::inference::LinearHypothesis;
use rpreg::numerics::linalg::Matrix;
use rpreg::Theta;

/// Position of a named parameter in `θ` (0-based).
pub fn coordinate(name: &str, p: usize) -> Result<usize> {
    let name = name.trim().to_ascii_lowercase();
    if name == "sigma" || name == "s" {
        return Ok(p);
    }
    let digits = name
        .strip_prefix("beta")
        .or_else(|| name.strip_prefix('b'))
        .ok_or_else(|| anyhow!("unknown parameter '{name}' (expected b0..b{}, or sigma)", p - 1))?;
    let j: usize = digits
        .parse()
        .map_err(|_| anyhow!("unknown parameter '{name}' (expected b0..b{}, or sigma)", p - 1))?;
    if j >= p {
        bail!("parameter '{name}' out of range: the model has b0..b{}", p - 1);
    }
    Ok(j)
}

/// `"b0=1.98,b1=0.73"` to `[(0, 1.98), (1, 0.73)]`, in the order given.
pub fn parse_assignments(spec: &str, p: usize) -> Result<Vec<(usize, f64)>> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| anyhow!("expected name=value, got '{part}'"))?;
        let j = coordinate(k, p)?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| anyhow!("cannot parse value '{}' for '{}'", v.trim(), k.trim()))?;
        if out.iter().any(|&(i, _)| i == j) {
            bail!("parameter '{}' assigned twice", k.trim());
        }
        out.push((j, v));
    }
    if out.is_empty() {
        bail!("empty assignment list");
    }
    Ok(out)
}

pub fn hypothesis_from_spec(spec: &str, p: usize) -> Result<LinearHypothesis> {
    Ok(LinearHypothesis::fix_coordinates(p + 1, &parse_assignments(spec, p)?)?)
}

/// A full parameter vector; every coordinate must be assigned.
pub fn theta_from_spec(spec: &str, p: usize) -> Result<Theta> {
    let fixed = parse_assignments(spec, p)?;
    let mut v = vec![f64::NAN; p + 1];
    for (j, x) in fixed {
        v[j] = x;
    }
    if let Some(j) = v.iter().position(|x| x.is_nan()) {
        let name = if j == p { "sigma".to_string() } else { format!("b{j}") };
        bail!("parameter '{name}' not given");
    }
    Ok(Theta::from_slice(&v)?)
}

/// One restriction per line, `c_0 c_1 … c_p = m`, coefficients separated by
/// whitespace or commas. Blank lines and `#` comments are ignored.
pub fn hypothesis_from_text(text: &str, p: usize) -> Result<LinearHypothesis> {
    let dim = p + 1;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut m = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (lhs, rhs) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected 'c0 … c{p} = m'", lineno + 1))?;
        let coefs: Vec<f64> = lhs
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| anyhow!("line {}: cannot parse '{s}'", lineno + 1)))
            .collect::<Result<_>>()?;
        if coefs.len() != dim {
            bail!("line {}: {} coefficients given, the model has {dim} parameters", lineno + 1, coefs.len());
        }
        let rhs: f64 = rhs
            .trim()
            .parse()
            .map_err(|_| anyhow!("line {}: cannot parse right-hand side '{}'", lineno + 1, rhs.trim()))?;
        columns.push(coefs);
        m.push(rhs);
    }
    if columns.is_empty() {
        bail!("hypothesis file has no restrictions");
    }
    let r = columns.len();
    let mut mm = Matrix::zeros(dim, r);
    for (k, col) in columns.iter().enumerate() {
        for (j, &c) in col.iter().enumerate() {
            mm[(j, k)] = c;
        }
    }
    Ok(LinearHypothesis::new(mm, m)?)
}
