//! Monte Carlo harness for the estimator and tests under fixed designs.
//!
//! Every replication draws from its own stream, `RngStream(seed, id)` with
//! `id` packing the replication, sample-size index and scenario, so results
//! do not depend on how replications are spread over worker threads. Per
//! replication outcomes are collected in order and reduced sequentially,
//! which makes the output bit-identical for any worker count.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit_rp, SolverOptions};
use crate::inference::{contiguous_power, wald_composite, CovarianceModel, LinearHypothesis, MlrmCovariance};
use crate::model::{Alpha, ModelData, Theta};
use crate::numerics::linalg::{dot, Matrix};
use crate::numerics::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DesignKind {
    /// Half the rows at covariate `a`, half at `b`.
    TwoPoint { a: f64, b: f64 },
    /// Standard normal covariates drawn once from `seed`.
    FixedNormal { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Placement {
    FirstBlock,
    RandomIndices { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSpec {
    pub fraction: f64,
    pub beta: Vec<f64>,
    pub placement: Placement,
}

impl Default for ContaminationSpec {
    fn default() -> Self {
        Self { fraction: 0.10, beta: vec![1.5, 2.0], placement: Placement::FirstBlock }
    }
}

impl ContaminationSpec {
    /// Row indices generated from the contaminating coefficients.
    pub fn indices(&self, n: usize) -> Result<Vec<usize>> {
        if !(0.0..0.5).contains(&self.fraction) {
            return Err(Error::Domain(format!("contamination fraction must be in [0, 0.5), got {}", self.fraction)));
        }
        let k = (self.fraction * n as f64).floor() as usize;
        match self.placement {
            Placement::FirstBlock => Ok((0..k).collect()),
            Placement::RandomIndices { seed } => {
                let mut rng = RngStream::new(seed, n as u64);
                let mut idx: Vec<usize> = (0..n).collect();
                for j in 0..k {
                    let pick = j + rng.index(n - j);
                    idx.swap(j, pick);
                }
                let mut chosen = idx[..k].to_vec();
                chosen.sort_unstable();
                Ok(chosen)
            }
        }
    }
}

/// A tested hypothesis with the parameter used to estimate its power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyHypothesis {
    pub label: String,
    pub hypothesis: LinearHypothesis,
    pub alternative: Theta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub design: DesignKind,
    pub sample_sizes: Vec<usize>,
    pub true_beta: Vec<f64>,
    pub true_sigma: f64,
    pub alphas: Vec<Alpha>,
    pub replications: usize,
    pub level: f64,
    pub hypotheses: Vec<StudyHypothesis>,
    pub contamination: Option<ContaminationSpec>,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for StudyConfig {
    fn default() -> Self {
        let true_beta = vec![1.0, 1.0];
        let true_sigma = 1.0;
        Self {
            design: DesignKind::TwoPoint { a: 1.0, b: 5.0 },
            sample_sizes: vec![50, 100, 200, 400, 800],
            hypotheses: default_hypotheses(&true_beta, true_sigma),
            true_beta,
            true_sigma,
            alphas: [0.0, 0.2, 0.4, 0.6, 0.8, 1.0].iter().map(|&a| Alpha::new(a).expect("valid")).collect(),
            replications: 1000,
            level: 0.05,
            contamination: None,
            seed: 1,
            solver: SolverOptions::default(),
        }
    }
}

/// `H₀: β₁ = β₁*` (power at `β₁ = 0.45`) and `H₀: σ = σ*` (power at `σ = 0.8`).
pub fn default_hypotheses(true_beta: &[f64], true_sigma: f64) -> Vec<StudyHypothesis> {
    let dim = true_beta.len() + 1;
    let mut alt_beta = true_beta.to_vec();
    alt_beta[1] = 0.45;
    vec![
        StudyHypothesis {
            label: "beta1".into(),
            hypothesis: LinearHypothesis::fix_coordinates(dim, &[(1, true_beta[1])]).expect("valid"),
            alternative: Theta { beta: alt_beta, sigma: true_sigma },
        },
        StudyHypothesis {
            label: "sigma".into(),
            hypothesis: LinearHypothesis::fix_coordinates(dim, &[(dim - 1, true_sigma)]).expect("valid"),
            alternative: Theta { beta: true_beta.to_vec(), sigma: 0.8 },
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisResult {
    pub label: String,
    pub empirical_level: f64,
    pub empirical_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub alpha: f64,
    pub n: usize,
    pub rmse_theta: f64,
    /// Fits that failed or did not converge, over all scenarios.
    pub non_convergence_count: usize,
    pub hypotheses: Vec<HypothesisResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub cells: Vec<CellResult>,
    pub warnings: Vec<String>,
}

/// `n × 2` design with an intercept column.
pub fn make_design(spec: &DesignSpec) -> Result<Matrix> {
    let n = spec.n;
    if n < 3 {
        return Err(Error::InvalidData(format!("design needs n >= 3, got {n}")));
    }
    let covariate: Vec<f64> = match spec.kind {
        DesignKind::TwoPoint { a, b } => {
            if !n.is_multiple_of(2) {
                return Err(Error::InvalidData(format!("two-point design needs even n, got {n}")));
            }
            if a == b {
                return Err(Error::InvalidData("two-point design needs a != b".into()));
            }
            (0..n).map(|i| if i < n / 2 { a } else { b }).collect()
        }
        DesignKind::FixedNormal { seed } => {
            let mut rng = RngStream::new(seed, n as u64);
            (0..n).map(|_| rng.standard_normal()).collect()
        }
    };
    Matrix::from_rows(&covariate.iter().map(|&x| vec![1.0, x]).collect::<Vec<_>>())
}

/// `Y_i = x_iᵀβ_i + σε_i`, with `β_i` the contaminating coefficients on the
/// contaminated rows. One normal draw per row in row order, so a zero
/// fraction reproduces clean generation draw for draw.
pub fn generate_data(
    design: &Matrix,
    theta: &Theta,
    contamination: Option<&ContaminationSpec>,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if theta.beta.len() != design.cols() {
        return Err(Error::Dimension("theta and design disagree on p".into()));
    }
    let n = design.rows();
    let mut contaminated = vec![false; n];
    if let Some(c) = contamination {
        if c.beta.len() != design.cols() {
            return Err(Error::Dimension("contaminating beta has the wrong length".into()));
        }
        for i in c.indices(n)? {
            contaminated[i] = true;
        }
    }
    Ok((0..n)
        .map(|i| {
            let beta = match contamination {
                Some(c) if contaminated[i] => &c.beta,
                _ => &theta.beta,
            };
            dot(design.row(i), beta) + theta.sigma * rng.standard_normal()
        })
        .collect())
}

fn stream_id(rep: usize, n_index: usize, scenario: usize) -> u64 {
    ((rep as u64) << 24) | ((n_index as u64) << 8) | scenario as u64
}

/// Fit outcome for one (n, scenario, α): estimate and per-hypothesis rejections.
type Outcome = Option<(Vec<f64>, Vec<bool>)>;

fn validate(config: &StudyConfig) -> Result<()> {
    if config.replications == 0 {
        return Err(Error::Domain("replications must be >= 1".into()));
    }
    if config.sample_sizes.is_empty() || config.alphas.is_empty() {
        return Err(Error::Domain("need at least one sample size and one alpha".into()));
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(Error::Domain(format!("level must be in (0, 1), got {}", config.level)));
    }
    if config.sample_sizes.len() > 0xFFFF || config.hypotheses.len() >= 0xFF {
        return Err(Error::Domain("too many sample sizes or hypotheses".into()));
    }
    Theta::new(config.true_beta.clone(), config.true_sigma)?;
    for h in &config.hypotheses {
        if h.hypothesis.dim() != config.true_beta.len() + 1 || h.alternative.beta.len() != config.true_beta.len() {
            return Err(Error::Dimension(format!("hypothesis '{}' does not match the model", h.label)));
        }
    }
    Ok(())
}

/// Runs the study on `workers` threads (`0` picks the rayon default).
pub fn run_study(config: &StudyConfig, workers: usize) -> Result<StudyResult> {
    validate(config)?;
    let truth = Theta::new(config.true_beta.clone(), config.true_sigma)?;
    let designs = config
        .sample_sizes
        .iter()
        .map(|&n| make_design(&DesignSpec { kind: config.design.clone(), n }))
        .collect::<Result<Vec<_>>>()?;
    let scenarios: Vec<&Theta> =
        std::iter::once(&truth).chain(config.hypotheses.iter().map(|h| &h.alternative)).collect();

    let replicate = |rep: usize| -> Vec<Outcome> {
        let mut out = Vec::with_capacity(designs.len() * scenarios.len() * config.alphas.len());
        for (ni, design) in designs.iter().enumerate() {
            for (si, theta) in scenarios.iter().enumerate() {
                let mut rng = RngStream::new(config.seed, stream_id(rep, ni, si));
                let data = generate_data(design, theta, config.contamination.as_ref(), &mut rng)
                    .and_then(|y| ModelData::new(design.clone(), y));
                for &alpha in &config.alphas {
                    out.push(data.as_ref().ok().and_then(|d| fit_and_test(d, alpha, config)));
                }
            }
        }
        out
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?;
    let per_rep: Vec<Vec<Outcome>> = pool.install(|| (0..config.replications).into_par_iter().map(replicate).collect());

    let n_s = scenarios.len();
    let n_a = config.alphas.len();
    let slot = |ni: usize, si: usize, ai: usize| (ni * n_s + si) * n_a + ai;
    let truth_vec = truth.to_vec();
    let mut cells = Vec::new();
    let mut warnings = Vec::new();
    for (ai, alpha) in config.alphas.iter().enumerate() {
        for (ni, &n) in config.sample_sizes.iter().enumerate() {
            let mut failures = 0;
            let mut sq = 0.0;
            let mut used = 0usize;
            let mut level_hits = vec![0usize; config.hypotheses.len()];
            let mut power_hits = vec![0usize; config.hypotheses.len()];
            let mut power_used = vec![0usize; config.hypotheses.len()];
            for rep in &per_rep {
                match &rep[slot(ni, 0, ai)] {
                    Some((est, rejects)) => {
                        used += 1;
                        sq += est.iter().zip(&truth_vec).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                        for (h, &r) in rejects.iter().enumerate() {
                            level_hits[h] += r as usize;
                        }
                    }
                    None => failures += 1,
                }
                for h in 0..config.hypotheses.len() {
                    match &rep[slot(ni, h + 1, ai)] {
                        Some((_, rejects)) => {
                            power_used[h] += 1;
                            power_hits[h] += rejects[h] as usize;
                        }
                        None => failures += 1,
                    }
                }
            }
            let total = config.replications * n_s;
            if failures as f64 > 0.01 * total as f64 {
                warnings.push(format!(
                    "alpha = {}, n = {n}: excluded {failures} of {total} fits (non-converged or failed)",
                    alpha.value()
                ));
            }
            let frac = |hits: usize, of: usize| if of == 0 { f64::NAN } else { hits as f64 / of as f64 };
            cells.push(CellResult {
                alpha: alpha.value(),
                n,
                rmse_theta: if used == 0 { f64::NAN } else { (sq / used as f64).sqrt() },
                non_convergence_count: failures,
                hypotheses: config
                    .hypotheses
                    .iter()
                    .enumerate()
                    .map(|(h, hyp)| HypothesisResult {
                        label: hyp.label.clone(),
                        empirical_level: frac(level_hits[h], used),
                        empirical_power: frac(power_hits[h], power_used[h]),
                    })
                    .collect(),
            });
        }
    }
    Ok(StudyResult { cells, warnings })
}

fn fit_and_test(data: &ModelData, alpha: Alpha, config: &StudyConfig) -> Outcome {
    let fit = fit_rp(data, alpha, None, &config.solver).ok()?;
    if !fit.converged {
        return None;
    }
    let rejects = config
        .hypotheses
        .iter()
        .map(|h| wald_composite(&fit, &h.hypothesis, data.n()).and_then(|w| w.rejects(config.level)))
        .collect::<Result<Vec<_>>>()
        .ok()?;
    Some((fit.theta_hat.to_vec(), rejects))
}

/// Sampling covariance of `√n(θ̂_α − θ)` over `replications` clean samples.
/// Returns the matrix and the number of fits used.
pub fn sampling_covariance(
    design: &Matrix,
    theta: &Theta,
    alpha: Alpha,
    replications: usize,
    seed: u64,
    workers: usize,
) -> Result<(Matrix, usize)> {
    let n = design.rows();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?;
    let opts = SolverOptions::default();
    let draws: Vec<Option<Vec<f64>>> = pool.install(|| {
        (0..replications)
            .into_par_iter()
            .map(|rep| {
                let mut rng = RngStream::new(seed, rep as u64);
                let y = generate_data(design, theta, None, &mut rng).ok()?;
                let data = ModelData::new(design.clone(), y).ok()?;
                let fit = fit_rp(&data, alpha, None, &opts).ok()?;
                fit.converged.then(|| fit.theta_hat.to_vec())
            })
            .collect()
    });
    let draws: Vec<Vec<f64>> = draws.into_iter().flatten().collect();
    let m = draws.len();
    if m < 2 {
        return Err(Error::Domain("fewer than two successful fits".into()));
    }
    let d = theta.dim();
    let truth = theta.to_vec();
    let scale = (n as f64).sqrt();
    let centered: Vec<Vec<f64>> = draws
        .iter()
        .map(|v| v.iter().zip(&truth).map(|(a, b)| scale * (a - b)).collect())
        .collect();
    let mut mean = vec![0.0; d];
    for v in &centered {
        mean.iter_mut().zip(v).for_each(|(m_, x)| *m_ += x / m as f64);
    }
    let mut cov = Matrix::zeros(d, d);
    for v in &centered {
        let c: Vec<f64> = v.iter().zip(&mean).map(|(a, b)| a - b).collect();
        cov.add_outer(1.0 / (m - 1) as f64, &c, &c);
    }
    Ok((cov, m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContiguousCell {
    pub alpha: f64,
    pub d: f64,
    pub power: f64,
}

/// Asymptotic power of the `β₁` test against `β₁⁰ + √(d/n)` for a design
/// with `XᵀX/n = I`.
pub fn contiguous_table(alphas: &[Alpha], d_values: &[f64], sigma: f64, level: f64) -> Result<Vec<ContiguousCell>> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    let cov = MlrmCovariance::from_gram(Matrix::identity(2))?;
    let hyp = LinearHypothesis::fix_coordinates(3, &[(1, 1.0)])?;
    let theta = Theta::new(vec![1.0, 1.0], sigma)?;
    let mut out = Vec::new();
    for &alpha in alphas {
        let s = cov.sigma_at(&theta, alpha)?;
        for &d in d_values {
            if !(d >= 0.0) {
                return Err(Error::Domain(format!("d values must be >= 0, got {d}")));
            }
            let power = contiguous_power(&hyp, &[0.0, d.sqrt(), 0.0], level, &s)?;
            out.push(ContiguousCell { alpha: alpha.value(), d, power });
        }
    }
    Ok(out)
}

/// One CSV row per (alpha, n, hypothesis).
pub fn study_csv(result: &StudyResult) -> String {
    let mut s = String::from("alpha,n,hypothesis,rmse_theta,empirical_level,empirical_power,non_converged\n");
    for c in &result.cells {
        for h in &c.hypotheses {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                c.alpha, c.n, h.label, c.rmse_theta, h.empirical_level, h.empirical_power, c.non_convergence_count
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_layout() {
        let x = make_design(&DesignSpec { kind: DesignKind::TwoPoint { a: 1.0, b: 5.0 }, n: 4 }).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 1.0, 1.0, 1.0, 1.0, 5.0, 1.0, 5.0]);
        assert!(make_design(&DesignSpec { kind: DesignKind::TwoPoint { a: 1.0, b: 5.0 }, n: 5 }).is_err());
    }

    #[test]
    fn fixed_normal_deterministic() {
        let spec = DesignSpec { kind: DesignKind::FixedNormal { seed: 7 }, n: 100 };
        assert_eq!(make_design(&spec).unwrap(), make_design(&spec).unwrap());
    }

    #[test]
    fn fixed_normal_moments_across_seeds() {
        let n = 400;
        for seed in 0..20 {
            let x = make_design(&DesignSpec { kind: DesignKind::FixedNormal { seed }, n }).unwrap();
            let c = x.column(1);
            let mean = c.iter().sum::<f64>() / n as f64;
            let sd = (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            assert!(mean.abs() < 3.0 / (n as f64).sqrt());
            assert!((sd - 1.0).abs() < 3.0 / (2.0 * n as f64).sqrt());
        }
    }

    #[test]
    fn noiseless_limit() {
        let x = make_design(&DesignSpec { kind: DesignKind::TwoPoint { a: 1.0, b: 5.0 }, n: 10 }).unwrap();
        let th = Theta::new(vec![1.0, 2.0], 1e-12).unwrap();
        let y = generate_data(&x, &th, None, &mut RngStream::new(1, 1)).unwrap();
        for i in 0..10 {
            assert!((y[i] - dot(x.row(i), &th.beta)).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_fraction_matches_clean() {
        let x = make_design(&DesignSpec { kind: DesignKind::FixedNormal { seed: 3 }, n: 30 }).unwrap();
        let th = Theta::new(vec![1.0, 1.0], 1.0).unwrap();
        let c = ContaminationSpec { fraction: 0.0, ..ContaminationSpec::default() };
        let a = generate_data(&x, &th, None, &mut RngStream::new(5, 2)).unwrap();
        let b = generate_data(&x, &th, Some(&c), &mut RngStream::new(5, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn contaminated_count() {
        let x = make_design(&DesignSpec { kind: DesignKind::TwoPoint { a: 1.0, b: 5.0 }, n: 50 }).unwrap();
        let th = Theta::new(vec![1.0, 1.0], 1e-12).unwrap();
        for placement in [Placement::FirstBlock, Placement::RandomIndices { seed: 4 }] {
            let c = ContaminationSpec { placement, ..ContaminationSpec::default() };
            let y = generate_data(&x, &th, Some(&c), &mut RngStream::new(1, 1)).unwrap();
            let shifted = (0..50)
                .filter(|&i| (y[i] - dot(x.row(i), &[1.5, 2.0])).abs() < 1e-9)
                .count();
            assert_eq!(shifted, 5);
        }
        assert!(ContaminationSpec { fraction: 0.5, ..ContaminationSpec::default() }.indices(10).is_err());
    }

    fn small_config() -> StudyConfig {
        StudyConfig {
            sample_sizes: vec![40],
            alphas: vec![Alpha::MLE, Alpha::new(0.5).unwrap()],
            replications: 30,
            seed: 99,
            ..StudyConfig::default()
        }
    }

    #[test]
    fn study_is_worker_count_invariant() {
        let cfg = small_config();
        let a = run_study(&cfg, 1).unwrap();
        let b = run_study(&cfg, 4).unwrap();
        assert_eq!(study_csv(&a), study_csv(&b));
        assert_eq!(a, b);
    }

    #[test]
    fn study_outputs_in_range() {
        let r = run_study(&small_config(), 2).unwrap();
        assert_eq!(r.cells.len(), 2);
        for c in &r.cells {
            assert!(c.rmse_theta >= 0.0);
            for h in &c.hypotheses {
                assert!((0.0..=1.0).contains(&h.empirical_level));
                assert!((0.0..=1.0).contains(&h.empirical_power));
            }
        }
        let csv = study_csv(&r);
        assert_eq!(csv.lines().count(), 1 + 2 * 2);
    }

    #[test]
    fn contiguous_table_null_column() {
        let alphas: Vec<Alpha> = [0.0, 0.5, 1.0].iter().map(|&a| Alpha::new(a).unwrap()).collect();
        let t = contiguous_table(&alphas, &[0.0, 10.0], 1.0, 0.05).unwrap();
        for c in t.iter().filter(|c| c.d == 0.0) {
            assert_eq!(c.power, 0.05);
        }
        let p0 = t.iter().find(|c| c.alpha == 0.0 && c.d == 10.0).unwrap().power;
        assert!((p0 - 0.88).abs() < 0.01);
    }
}
