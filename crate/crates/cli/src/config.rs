//! Flat `key = value` simulation config.
//!
//! ```text
//! # Design 1 with 10% contamination
//! design = two_point
//! design_a = 1
//! design_b = 5
//! sample_sizes = 100, 200
//! alphas = 0, 0.7
//! replications = 500
//! contamination_fraction = 0.1
//! ```
//!
//! Every key is optional; unset keys keep the [`StudyConfig`] defaults.
//! Unknown keys and malformed values are errors naming the key.

use anyhow::{anyhow, bail, Context, Result};
use rpreg::simulation::{default_hypotheses, ContaminationSpec, DesignKind, Placement, StudyConfig};
use rpreg::Alpha;

pub const KEYS: &[&str] = &[
    "design",
    "design_a",
    "design_b",
    "design_seed",
    "sample_sizes",
    "true_beta",
    "true_sigma",
    "alphas",
    "replications",
    "level",
    "seed",
    "alt_beta1",
    "alt_sigma",
    "contamination_fraction",
    "contamination_beta",
    "contamination_placement",
    "contamination_seed",
    "tolerance",
    "max_iterations",
    "continuation_step",
    "multistart",
    "restarts",
    "solver_seed",
];

#[derive(Debug, Clone)]
pub struct SimulationFile {
    pub study: StudyConfig,
    /// Whether the file set `seed` itself (it then wins over `--seed`).
    pub seed_in_file: bool,
    /// Whether the file set `alphas` itself.
    pub alphas_in_file: bool,
}

fn list<T: std::str::FromStr>(v: &str) -> Option<Vec<T>> {
    v.split(',').map(|s| s.trim().parse().ok()).collect()
}

pub fn parse_config(text: &str) -> Result<SimulationFile> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected 'key = value'", i + 1))?;
        let k = k.trim().to_string();
        if !KEYS.contains(&k.as_str()) {
            bail!("line {}: unknown key '{k}'", i + 1);
        }
        if pairs.iter().any(|(seen, _)| *seen == k) {
            bail!("line {}: key '{k}' given twice", i + 1);
        }
        pairs.push((k, v.trim().to_string()));
    }
    let get = |key: &str| pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
    fn bad(key: &str, v: &str) -> anyhow::Error {
        anyhow!("key '{key}': invalid value '{v}'")
    }
    fn scalar<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
        v.parse().map_err(|_| bad(key, v))
    }

    let mut cfg = StudyConfig::default();

    let a = get("design_a").map(|v| scalar::<f64>("design_a", v)).transpose()?;
    let b = get("design_b").map(|v| scalar::<f64>("design_b", v)).transpose()?;
    let dseed = get("design_seed").map(|v| scalar::<u64>("design_seed", v)).transpose()?;
    cfg.design = match get("design").unwrap_or("two_point") {
        "two_point" => {
            if dseed.is_some() {
                bail!("key 'design_seed': only valid with design = fixed_normal");
            }
            DesignKind::TwoPoint { a: a.unwrap_or(1.0), b: b.unwrap_or(5.0) }
        }
        "fixed_normal" => {
            if a.is_some() || b.is_some() {
                bail!("key 'design_a'/'design_b': only valid with design = two_point");
            }
            DesignKind::FixedNormal { seed: dseed.unwrap_or(7) }
        }
        other => return Err(bad("design", other)).context("expected two_point or fixed_normal"),
    };
    if let Some(v) = get("sample_sizes") {
        cfg.sample_sizes = list(v).ok_or_else(|| bad("sample_sizes", v))?;
    }
    if let Some(v) = get("true_beta") {
        cfg.true_beta = list(v).ok_or_else(|| bad("true_beta", v))?;
        if cfg.true_beta.len() != 2 {
            bail!("key 'true_beta': simulated designs have an intercept and one slope, got {} values", cfg.true_beta.len());
        }
    }
    if let Some(v) = get("true_sigma") {
        cfg.true_sigma = scalar("true_sigma", v)?;
    }
    if let Some(v) = get("alphas") {
        let raw: Vec<f64> = list(v).ok_or_else(|| bad("alphas", v))?;
        cfg.alphas = raw
            .into_iter()
            .map(|a| Alpha::new(a).map_err(|e| anyhow!("key 'alphas': {e}")))
            .collect::<Result<_>>()?;
    }
    if let Some(v) = get("replications") {
        cfg.replications = scalar("replications", v)?;
    }
    if let Some(v) = get("level") {
        cfg.level = scalar("level", v)?;
    }
    if let Some(v) = get("seed") {
        cfg.seed = scalar("seed", v)?;
    }

    cfg.hypotheses = default_hypotheses(&cfg.true_beta, cfg.true_sigma);
    if let Some(v) = get("alt_beta1") {
        cfg.hypotheses[0].alternative.beta[1] = scalar("alt_beta1", v)?;
    }
    if let Some(v) = get("alt_sigma") {
        let s: f64 = scalar("alt_sigma", v)?;
        if s.is_nan() || s <= 0.0 {
            return Err(bad("alt_sigma", v));
        }
        cfg.hypotheses[1].alternative.sigma = s;
    }

    let fraction = get("contamination_fraction")
        .map(|v| scalar::<f64>("contamination_fraction", v))
        .transpose()?
        .unwrap_or(0.0);
    let contamination_keys = ["contamination_beta", "contamination_placement", "contamination_seed"];
    if fraction > 0.0 {
        let mut spec = ContaminationSpec { fraction, ..ContaminationSpec::default() };
        if let Some(v) = get("contamination_beta") {
            spec.beta = list(v).ok_or_else(|| bad("contamination_beta", v))?;
        }
        let seed = get("contamination_seed").map(|v| scalar::<u64>("contamination_seed", v)).transpose()?;
        spec.placement = match get("contamination_placement").unwrap_or("first_block") {
            "first_block" => {
                if seed.is_some() {
                    bail!("key 'contamination_seed': only valid with contamination_placement = random");
                }
                Placement::FirstBlock
            }
            "random" => Placement::RandomIndices { seed: seed.unwrap_or(cfg.seed) },
            other => return Err(bad("contamination_placement", other)).context("expected first_block or random"),
        };
        cfg.contamination = Some(spec);
    } else if fraction < 0.0 {
        return Err(bad("contamination_fraction", &fraction.to_string()));
    } else if let Some(k) = contamination_keys.iter().find(|k| get(k).is_some()) {
        bail!("key '{k}': needs contamination_fraction > 0");
    }

    if let Some(v) = get("tolerance") {
        cfg.solver.tolerance = scalar("tolerance", v)?;
    }
    if let Some(v) = get("max_iterations") {
        cfg.solver.max_iterations = scalar("max_iterations", v)?;
    }
    if let Some(v) = get("continuation_step") {
        cfg.solver.continuation_step = scalar("continuation_step", v)?;
    }
    if let Some(v) = get("multistart") {
        cfg.solver.multistart = scalar("multistart", v)?;
    }
    if let Some(v) = get("restarts") {
        cfg.solver.restarts = scalar("restarts", v)?;
    }
    if let Some(v) = get("solver_seed") {
        cfg.solver.seed = scalar("solver_seed", v)?;
    }

    Ok(SimulationFile {
        study: cfg,
        seed_in_file: get("seed").is_some(),
        alphas_in_file: get("alphas").is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let f = parse_config("# nothing\n\n").unwrap();
        assert_eq!(f.study, StudyConfig::default());
        assert!(!f.seed_in_file);
    }

    #[test]
    fn unknown_key_named() {
        let err = parse_config("replications = 10\nreplicates = 5\n").unwrap_err().to_string();
        assert!(err.contains("'replicates'"), "{err}");
    }

    #[test]
    fn bad_value_named() {
        let err = parse_config("sample_sizes = 10, x\n").unwrap_err().to_string();
        assert!(err.contains("'sample_sizes'"), "{err}");
    }

    #[test]
    fn contamination_and_design() {
        let f = parse_config(
            "design = fixed_normal\ndesign_seed = 3\ncontamination_fraction = 0.1\ncontamination_placement = random\nseed = 9\n",
        )
        .unwrap();
        assert_eq!(f.study.design, DesignKind::FixedNormal { seed: 3 });
        let c = f.study.contamination.unwrap();
        assert_eq!(c.placement, Placement::RandomIndices { seed: 9 });
        assert!(f.seed_in_file);
    }

    #[test]
    fn orphan_contamination_key() {
        assert!(parse_config("contamination_beta = 1, 2\n").is_err());
    }
}
