use anyhow::{anyhow, bail, Context, Result};
use rpreg::inference::{
    approx_power, power_parts, required_sample_size_from_parts, wald_composite, LinearHypothesis, MlrmCovariance,
    SampleSize,
};
use rpreg::numerics::linalg::dot;
use rpreg::robustness::{are, gross_error_sensitivity, if_mlrm_closed, Direction, GrossErrorSensitivity, IFRequest};
use rpreg::simulation::{contiguous_table, run_study};
use rpreg::{fit_rp, Alpha, FitResult, ModelData, SolverOptions};
use serde_json::{json, Value};

use crate::args::{Cli, Command, DataArgs, GlobalArgs, PowerMode};
use crate::config::parse_config;
use crate::data::{load_csv, Column, Dataset, LoadOptions, Transform};
use crate::hypothesis::{hypothesis_from_spec, hypothesis_from_text, theta_from_spec};
use crate::report::{Cell, Report, Table};

pub const DEFAULT_ALPHAS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
pub const ARE_ALPHAS: [f64; 9] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.8, 1.0, 1.5];
pub const POWER_TABLE_ALPHAS: [f64; 6] = [0.0, 0.2, 0.5, 0.8, 1.0, 1.5];

pub fn execute(cli: &Cli) -> Result<Report> {
    let g = &cli.global;
    match &cli.command {
        Command::Fit { data, multistart, restarts, max_iterations } => {
            cmd_fit(g, data, *multistart, *restarts, *max_iterations)
        }
        Command::Test { data, hypotheses, hypothesis_files, level } => {
            cmd_test(g, data, hypotheses, hypothesis_files, *level)
        }
        Command::Influence { data, direction, grid, theta, hypothesis } => {
            cmd_influence(g, data, direction, grid, theta.as_deref(), hypothesis.as_deref())
        }
        Command::Are => cmd_are(g),
        Command::Power { mode } => cmd_power(g, mode),
        Command::Simulate { config, workers } => cmd_simulate(g, config, *workers),
    }
}

fn alphas(g: &GlobalArgs, default: &[f64]) -> Result<Vec<Alpha>> {
    let raw = g.alphas.clone().unwrap_or_else(|| default.to_vec());
    if raw.is_empty() {
        bail!("--alphas is empty");
    }
    raw.into_iter().map(|a| Alpha::new(a).map_err(|e| anyhow!("--alphas: {e}"))).collect()
}

pub fn load_dataset(args: &DataArgs) -> Result<Dataset> {
    if let Some(b) = args.dataset {
        return b.load();
    }
    let path = args.data.as_ref().ok_or_else(|| anyhow!("either --dataset or --data is required"))?;
    let header = !args.no_header;
    let response = match &args.response {
        Some(r) => Column::parse(r),
        None => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let width = text.lines().next().map(|l| l.split(',').count()).unwrap_or(0);
            Column::Index(width.max(1))
        }
    };
    let options = LoadOptions {
        header,
        response,
        covariates: args.covariates.iter().map(|c| Column::parse(c)).collect(),
        add_intercept: !args.no_intercept,
        transform: args.transform.unwrap_or(Transform::None),
    };
    load_csv(path, &options)
}

/// `[("all", data)]`, plus `("excluded", reduced)` when rows are excluded.
fn subsets(g: &GlobalArgs, ds: &Dataset) -> Result<Vec<(&'static str, ModelData)>> {
    let mut out = vec![("all", ds.data.clone())];
    if !g.exclude.is_empty() {
        out.push(("excluded", ds.data.without_rows(&g.exclude)?));
    }
    Ok(out)
}

fn solver(g: &GlobalArgs, multistart: bool, restarts: usize) -> SolverOptions {
    SolverOptions { multistart, restarts, seed: g.seed, ..SolverOptions::default() }
}

fn param_names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("b{j}")).collect()
}

pub fn cmd_fit(
    g: &GlobalArgs,
    data: &DataArgs,
    multistart: bool,
    restarts: usize,
    max_iterations: usize,
) -> Result<Report> {
    let ds = load_dataset(data)?;
    let alphas = alphas(g, &DEFAULT_ALPHAS)?;
    let opts = SolverOptions { max_iterations, ..solver(g, multistart, restarts) };
    let p = ds.data.p();
    let mut report = Report::new("fit");
    let mut cols: Vec<String> = vec!["subset".into(), "n".into(), "alpha".into(), "sigma".into()];
    cols.extend(param_names(p));
    cols.extend(["converged", "iterations", "gradient_norm", "objective", "error"].map(String::from));
    let mut table = Table::with_columns("fit", cols);
    for (label, d) in subsets(g, &ds)? {
        for &alpha in &alphas {
            let mut row: Vec<Cell> = vec![label.into(), d.n().into(), alpha.value().into()];
            match fit_rp(&d, alpha, None, &opts) {
                Ok(fit) => {
                    if !fit.converged {
                        report.nonconverged += 1;
                        report.warnings.push(format!("{label}, alpha = {}: fit did not converge", alpha.value()));
                    }
                    row.push(fit.theta_hat.sigma.into());
                    row.extend(fit.theta_hat.beta.iter().map(|&b| Cell::from(b)));
                    row.extend([
                        fit.converged.into(),
                        fit.iterations.into(),
                        fit.gradient_norm.into(),
                        fit.objective_value.into(),
                        Cell::Empty,
                    ]);
                }
                Err(e) => {
                    report.errors.push(format!("{label}, alpha = {}: {e}", alpha.value()));
                    row.extend((0..p + 1).map(|_| Cell::Num(f64::NAN)));
                    row.extend([false.into(), Cell::Empty, Cell::Empty, Cell::Empty, e.to_string().into()]);
                }
            }
            table.push(row);
        }
    }
    report.tables.push(table);
    report.summary = json!({ "dataset": ds.descriptor, "excluded_rows": g.exclude });
    report.inputs.push(ds.descriptor);
    Ok(report)
}

pub fn cmd_test(
    g: &GlobalArgs,
    data: &DataArgs,
    specs: &[String],
    files: &[std::path::PathBuf],
    level: f64,
) -> Result<Report> {
    let ds = load_dataset(data)?;
    let p = ds.data.p();
    let mut hyps: Vec<(String, LinearHypothesis)> = Vec::new();
    for s in specs {
        hyps.push((s.clone(), hypothesis_from_spec(s, p).with_context(|| format!("hypothesis '{s}'"))?));
    }
    for f in files {
        let text = std::fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
        hyps.push((
            f.display().to_string(),
            hypothesis_from_text(&text, p).with_context(|| format!("hypothesis file {}", f.display()))?,
        ));
    }
    if hyps.is_empty() {
        bail!("give at least one --hypothesis or --hypothesis-file");
    }
    if !(level > 0.0 && level < 1.0) {
        bail!("--level must be in (0, 1)");
    }
    let alphas = alphas(g, &DEFAULT_ALPHAS)?;
    let opts = solver(g, false, 10);
    let mut report = Report::new("test");
    let mut table = Table::new(
        "test",
        &["subset", "n", "alpha", "hypothesis", "statistic", "df", "p_value", "reject", "converged", "error"],
    );
    for (label, d) in subsets(g, &ds)? {
        for &alpha in &alphas {
            let fit = fit_rp(&d, alpha, None, &opts);
            if let Ok(f) = &fit {
                if !f.converged {
                    report.nonconverged += 1;
                    report.warnings.push(format!("{label}, alpha = {}: fit did not converge", alpha.value()));
                }
            }
            for (name, h) in &hyps {
                let base: Vec<Cell> = vec![label.into(), d.n().into(), alpha.value().into(), name.as_str().into()];
                let outcome = fit
                    .as_ref()
                    .map_err(|e| anyhow!("{e}"))
                    .and_then(|f| Ok((f.converged, wald_composite(f, h, d.n())?)))
                    .and_then(|(c, w)| Ok((c, w.rejects(level)?, w)));
                let mut row = base;
                match outcome {
                    Ok((converged, reject, w)) => row.extend([
                        w.statistic.into(),
                        w.df.into(),
                        w.p_value.into(),
                        reject.into(),
                        converged.into(),
                        Cell::Empty,
                    ]),
                    Err(e) => {
                        report.errors.push(format!("{label}, alpha = {}, {name}: {e}", alpha.value()));
                        row.extend([
                            Cell::Num(f64::NAN),
                            Cell::Empty,
                            Cell::Num(f64::NAN),
                            Cell::Empty,
                            Cell::Empty,
                            e.to_string().into(),
                        ]);
                    }
                }
                table.push(row);
            }
        }
    }
    report.tables.push(table);
    report.summary = json!({ "dataset": ds.descriptor, "excluded_rows": g.exclude, "level": level });
    report.inputs.push(ds.descriptor);
    Ok(report)
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, k] = parts[..] else {
        bail!("--grid must be start:stop:count, got '{spec}'");
    };
    let a: f64 = a.trim().parse().map_err(|_| anyhow!("--grid: bad start '{a}'"))?;
    let b: f64 = b.trim().parse().map_err(|_| anyhow!("--grid: bad stop '{b}'"))?;
    let k: usize = k.trim().parse().map_err(|_| anyhow!("--grid: bad count '{k}'"))?;
    if k == 0 || !a.is_finite() || !b.is_finite() {
        bail!("--grid: need finite bounds and a positive count");
    }
    if k == 1 {
        return Ok(vec![a]);
    }
    Ok((0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect())
}

fn gse_json(g: GrossErrorSensitivity) -> Value {
    match g {
        GrossErrorSensitivity::Bounded { gamma_beta, gamma_sigma } => {
            json!({ "bounded": true, "gamma_beta": gamma_beta, "gamma_sigma": gamma_sigma })
        }
        GrossErrorSensitivity::Unbounded => json!({ "bounded": false, "gamma_beta": "inf", "gamma_sigma": "inf" }),
    }
}

pub fn cmd_influence(
    g: &GlobalArgs,
    data: &DataArgs,
    direction: &str,
    grid: &str,
    theta: Option<&str>,
    hypothesis: Option<&str>,
) -> Result<Report> {
    let ds = load_dataset(data)?;
    let d = if g.exclude.is_empty() { ds.data.clone() } else { ds.data.without_rows(&g.exclude)? };
    let p = d.p();
    let dir = match direction.trim() {
        "all" => Direction::All,
        s => Direction::Single(s.parse().map_err(|_| anyhow!("--direction must be a row number or 'all', got '{s}'"))?),
    };
    if let Direction::Single(i) = dir {
        if i == 0 || i > d.n() {
            bail!("--direction {i} outside 1..={}", d.n());
        }
    }
    let rs = parse_grid(grid)?;
    let fixed_theta = theta.map(|s| theta_from_spec(s, p)).transpose()?;
    let hyp = hypothesis.map(|s| hypothesis_from_spec(s, p)).transpose()?;
    let alphas = alphas(g, &DEFAULT_ALPHAS)?;
    let opts = solver(g, false, 10);

    let mut report = Report::new("influence");
    let mut cols: Vec<String> = vec!["alpha".into(), "r".into(), "t".into(), "if_norm".into()];
    cols.extend(param_names(p).iter().map(|s| format!("if_{s}")));
    cols.extend(["if_sigma", "if2_simple"].map(String::from));
    if hyp.is_some() {
        cols.push("if2_composite".into());
    }
    let mut table = Table::with_columns("influence", cols);
    let mut per_alpha = Vec::new();
    for &alpha in &alphas {
        let th = match &fixed_theta {
            Some(t) => t.clone(),
            None => {
                let fit: FitResult = match fit_rp(&d, alpha, None, &opts) {
                    Ok(f) => f,
                    Err(e) => {
                        report.errors.push(format!("alpha = {}: {e}", alpha.value()));
                        continue;
                    }
                };
                if !fit.converged {
                    report.nonconverged += 1;
                    report.warnings.push(format!("alpha = {}: fit did not converge", alpha.value()));
                }
                fit.theta_hat
            }
        };
        let center = match dir {
            Direction::Single(i) => dot(d.row(i - 1), &th.beta),
            Direction::All => (0..d.n()).map(|i| dot(d.row(i), &th.beta)).sum::<f64>() / d.n() as f64,
        };
        let points: Vec<f64> = rs.iter().map(|r| center + r * th.sigma).collect();
        let req = IFRequest { direction: dir, points, theta: th.clone(), alpha, hypothesis: hyp.clone() };
        let rep = match if_mlrm_closed(&d, &req) {
            Ok(r) => r,
            Err(e) => {
                report.errors.push(format!("alpha = {}: {e}", alpha.value()));
                continue;
            }
        };
        for (k, r) in rs.iter().enumerate() {
            let v = &rep.first_order[k];
            let mut row: Vec<Cell> = vec![
                alpha.value().into(),
                (*r).into(),
                req.points[k].into(),
                rpreg::numerics::linalg::norm2(v).into(),
            ];
            row.extend(v.iter().map(|&x| Cell::from(x)));
            row.push(rep.second_order_simple.get(k).copied().into());
            if hyp.is_some() {
                row.push(rep.second_order_composite.get(k).copied().into());
            }
            table.push(row);
        }
        let gse = match dir {
            Direction::Single(i) => gse_json(gross_error_sensitivity(&d, i, &th, alpha)?),
            Direction::All if alpha.is_mle() => gse_json(GrossErrorSensitivity::Unbounded),
            Direction::All => Value::Null,
        };
        per_alpha.push(json!({
            "alpha": alpha.value(),
            "theta": th,
            "sup_norm_on_grid": rep.sup_norm,
            "bounded": !alpha.is_mle(),
            "gross_error_sensitivity": gse,
        }));
    }
    report.tables.push(table);
    report.summary = json!({
        "dataset": ds.descriptor,
        "excluded_rows": g.exclude,
        "direction": direction,
        "grid": grid,
        "alphas": per_alpha,
    });
    report.inputs.push(ds.descriptor);
    Ok(report)
}

pub fn cmd_are(g: &GlobalArgs) -> Result<Report> {
    let alphas = alphas(g, &ARE_ALPHAS)?;
    let mut report = Report::new("are");
    let mut table = Table::new("are", &["alpha", "are_beta", "are_sigma", "are_beta_x100", "are_sigma_x100"]);
    for &a in &alphas {
        let (b, s) = are(a);
        table.push(vec![
            a.value().into(),
            b.into(),
            s.into(),
            format!("{:.2}", 100.0 * b).into(),
            format!("{:.2}", 100.0 * s).into(),
        ]);
    }
    report.tables.push(table);
    Ok(report)
}

pub fn cmd_power(g: &GlobalArgs, mode: &PowerMode) -> Result<Report> {
    match mode {
        PowerMode::Table { d_values, sigma, level } => {
            let alphas = alphas(g, &POWER_TABLE_ALPHAS)?;
            let cells = contiguous_table(&alphas, d_values, *sigma, *level)?;
            let mut report = Report::new("power_table");
            let mut table = Table::new("power_table", &["alpha", "d", "power"]);
            for c in &cells {
                table.push(vec![c.alpha.into(), c.d.into(), c.power.into()]);
            }
            report.tables.push(table);
            report.summary = json!({ "sigma": sigma, "level": level, "design": "X'X/n = I, p = 2" });
            Ok(report)
        }
        PowerMode::Approx { data, null, alternative, n, level } => {
            let ds = load_dataset(data)?;
            let (t0, t1) = (theta_from_spec(null, ds.data.p())?, theta_from_spec(alternative, ds.data.p())?);
            let cov = MlrmCovariance::new(&ds.data)?;
            let mut report = Report::new("power_approx");
            let mut table = Table::new("power_approx", &["alpha", "n", "ell", "sigma_w", "power"]);
            for &alpha in &alphas(g, &DEFAULT_ALPHAS)? {
                for &nn in n {
                    let r = approx_power(&t1, &t0, alpha, nn, *level, &cov)?;
                    table.push(vec![alpha.value().into(), nn.into(), r.ell.into(), r.sigma_w.into(), r.approx_power.into()]);
                }
            }
            report.tables.push(table);
            report.summary = json!({ "dataset": ds.descriptor, "null": t0, "alternative": t1, "level": level });
            report.inputs.push(ds.descriptor);
            Ok(report)
        }
        PowerMode::SampleSize { data, null, alternative, target, level } => {
            let ds = load_dataset(data)?;
            let (t0, t1) = (theta_from_spec(null, ds.data.p())?, theta_from_spec(alternative, ds.data.p())?);
            let cov = MlrmCovariance::new(&ds.data)?;
            let mut report = Report::new("sample_size");
            let mut table = Table::new("sample_size", &["alpha", "ell", "sigma_w", "n_required", "unbounded"]);
            for &alpha in &alphas(g, &DEFAULT_ALPHAS)? {
                let (ell, sw) = power_parts(&t1, &t0, alpha, &cov)?;
                let n = required_sample_size_from_parts(ell, sw, t0.dim() as u32, *target, *level)?;
                let (cell, unbounded) = match n {
                    SampleSize::Finite(k) => (Cell::Int(k as i64), false),
                    SampleSize::Unbounded => (Cell::Empty, true),
                };
                table.push(vec![alpha.value().into(), ell.into(), sw.into(), cell, unbounded.into()]);
            }
            report.tables.push(table);
            report.summary =
                json!({ "dataset": ds.descriptor, "null": t0, "alternative": t1, "target_power": target, "level": level });
            report.inputs.push(ds.descriptor);
            Ok(report)
        }
    }
}

pub fn cmd_simulate(g: &GlobalArgs, path: &std::path::Path, workers: usize) -> Result<Report> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file = parse_config(&text).with_context(|| format!("config {}", path.display()))?;
    let mut cfg = file.study;
    if !file.seed_in_file {
        cfg.seed = g.seed;
    }
    if g.alphas.is_some() {
        if file.alphas_in_file {
            bail!("alphas given both in the config and with --alphas");
        }
        cfg.alphas = alphas(g, &[])?;
    }
    let result = run_study(&cfg, workers)?;
    let mut report = Report::new("simulate");
    let mut table = Table::new(
        "simulate",
        &["alpha", "n", "hypothesis", "rmse_theta", "empirical_level", "empirical_power", "non_converged"],
    );
    for c in &result.cells {
        for h in &c.hypotheses {
            table.push(vec![
                c.alpha.into(),
                c.n.into(),
                h.label.as_str().into(),
                c.rmse_theta.into(),
                h.empirical_level.into(),
                h.empirical_power.into(),
                c.non_convergence_count.into(),
            ]);
        }
    }
    report.tables.push(table);
    report.warnings.extend(result.warnings.iter().cloned());
    report.summary = json!({ "config": cfg, "result": result });
    report.inputs.push(crate::data::DatasetDescriptor {
        name: "config".into(),
        source: path.display().to_string(),
        sha256: crate::data::sha256_hex(text.as_bytes()),
        transform: Transform::None,
        n: 0,
        p: 0,
    });
    Ok(report)
}
