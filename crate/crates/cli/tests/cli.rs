use std::path::Path;
use std::process::{Command, Output};

fn rpreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpreg")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn read_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(str::to_string).collect()).collect();
    (header, rows)
}

#[test]
fn fit_table_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let o = rpreg(&["fit", "--dataset", "first-word", "--alphas", "0,0.5", "--output", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("fit.csv")).unwrap();
    let (header, rows) = read_csv(&text);
    assert_eq!(&header[..6], &["subset", "n", "alpha", "sigma", "b0", "b1"]);

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).unwrap();
    for row in &rows {
        let rewritten: Vec<String> = row
            .iter()
            .map(|c| match c.parse::<f64>() {
                Ok(v) => rpreg_cli::report::Cell::Num(v).to_string(),
                Err(_) => c.clone(),
            })
            .collect();
        w.write_record(&rewritten).unwrap();
    }
    assert_eq!(String::from_utf8(w.into_inner().unwrap()).unwrap(), text);

    // the JSON view carries the same numbers
    let o = rpreg(&["--format", "json", "fit", "--dataset", "first-word", "--alphas", "0,0.5"]);
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for (k, row) in rows.iter().enumerate() {
        let from_csv: f64 = row[3].parse().unwrap();
        assert_eq!(doc["tables"]["fit"][k]["sigma"].as_f64().unwrap().to_bits(), from_csv.to_bits());
    }
}

#[test]
fn manifest_lists_outputs_with_checksums() {
    let dir = tempfile::tempdir().unwrap();
    let o = rpreg(&["--seed", "5", "are", "--output", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("are.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "are");
    assert_eq!(m["seed"], 5);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    for out in m["outputs"].as_array().unwrap() {
        let path = Path::new(out["path"].as_str().unwrap());
        let bytes = std::fs::read(path).unwrap();
        assert_eq!(out["sha256"].as_str().unwrap(), rpreg_cli::data::sha256_hex(&bytes));
    }
}

#[test]
fn user_csv_with_exclusions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.csv");
    std::fs::write(&path, "x,y\n0,1.1\n1,2.9\n2,5.2\n3,7.1\n4,8.8\n5,40\n").unwrap();
    let o = rpreg(&["fit", "--data", path.to_str().unwrap(), "--response", "y", "--alphas", "0", "--exclude", "6"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&stdout(&o));
    let b1 = h.iter().position(|c| c == "b1").unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][0], "excluded");
    let slope: f64 = rows[1][b1].parse().unwrap();
    assert!((slope - 1.96).abs() < 1e-9, "{slope}");
}

#[test]
fn bad_column_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.csv");
    std::fs::write(&path, "x,y\n0,1\n1,2\n2,4\n").unwrap();
    let o = rpreg(&["fit", "--data", path.to_str().unwrap(), "--response", "weight"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("'weight'"));
}

#[test]
fn test_at_fitted_values_gives_p_one() {
    let o = rpreg(&["fit", "--dataset", "brain-weight", "--alphas", "0.5"]);
    let (h, rows) = read_csv(&stdout(&o));
    let b1 = &rows[0][h.iter().position(|c| c == "b1").unwrap()];
    let spec = format!("b1={b1}");
    let o = rpreg(&["test", "--dataset", "brain-weight", "--alphas", "0.5", "--hypothesis", &spec]);
    assert!(o.status.success());
    let (h, rows) = read_csv(&stdout(&o));
    let p: f64 = rows[0][h.iter().position(|c| c == "p_value").unwrap()].parse().unwrap();
    assert_eq!(p, 1.0);
}

#[test]
fn hypothesis_file_matches_inline_spec() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.txt");
    std::fs::write(&path, "1 0 0 = 112.56\n0 1 0 = -1.28\n").unwrap();
    let a = rpreg(&["test", "--dataset", "first-word", "--alphas", "0.4", "--hypothesis", "b0=112.56,b1=-1.28"]);
    let b = rpreg(&["test", "--dataset", "first-word", "--alphas", "0.4", "--hypothesis-file", path.to_str().unwrap()]);
    let (h, ra) = read_csv(&stdout(&a));
    let (_, rb) = read_csv(&stdout(&b));
    let k = h.iter().position(|c| c == "p_value").unwrap();
    assert_eq!(ra[0][k], rb[0][k]);
}

#[test]
fn influence_flags_unbounded_mle() {
    let o = rpreg(&["--format", "json", "influence", "--dataset", "brain-weight", "--alphas", "0,0.5", "--grid", "-5:5:11"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let per = doc["summary"]["alphas"].as_array().unwrap();
    assert_eq!(per[0]["gross_error_sensitivity"]["bounded"], false);
    assert_eq!(per[1]["gross_error_sensitivity"]["bounded"], true);
    assert_eq!(doc["tables"]["influence"].as_array().unwrap().len(), 22);
}

#[test]
fn malformed_config_names_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.conf");
    std::fs::write(&path, "replications = 10\nsample_size = 50\n").unwrap();
    let o = rpreg(&["simulate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("'sample_size'"));
}

#[test]
fn nonconvergence_exit_code() {
    let o = rpreg(&["fit", "--dataset", "brain-weight", "--alphas", "1", "--max-iterations", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&stdout(&o));
    assert_eq!(rows[0][h.iter().position(|c| c == "converged").unwrap()], "false");
    assert!(String::from_utf8_lossy(&o.stderr).contains("did not converge"));
}

#[test]
fn power_sample_size_and_approx_agree() {
    let args = ["--alphas", "0.3", "--dataset", "first-word", "--null", "b0=110,b1=-1.1,sigma=10", "--alternative", "b0=112,b1=-1.1,sigma=10"];
    let o = rpreg(&[&["power", "sample-size"][..], &args, &["--target", "0.9"]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&stdout(&o));
    let n: usize = rows[0][h.iter().position(|c| c == "n_required").unwrap()].parse().unwrap();
    let powers: Vec<f64> = [n - 1, n]
        .iter()
        .map(|k| {
            let ks = k.to_string();
            let o = rpreg(&[&["power", "approx"][..], &args, &["--n", &ks]].concat());
            let (h, rows) = read_csv(&stdout(&o));
            rows[0][h.iter().position(|c| c == "power").unwrap()].parse().unwrap()
        })
        .collect();
    assert!(powers[0] < 0.9 && powers[1] >= 0.9, "{powers:?} at n = {n}");
}
