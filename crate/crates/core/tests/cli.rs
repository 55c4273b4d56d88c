use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn pbinfer(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pbinfer"));
    cmd.args(args).env_remove("PBINFER_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", stderr(out));
    serde_json::from_slice(&out.stdout).unwrap()
}

/// The two-labeled, one-unlabeled mean example, each row repeated three times.
const MEAN_FIXTURE: &str = "y,yhat\n1,2\n3,2\n1,2\n3,2\n1,2\n3,2\n,4\n,4\n,4\n";

fn records<'a>(doc: &'a Value, method: &str) -> Vec<&'a Value> {
    doc["records"].as_array().unwrap().iter().filter(|r| r["method"] == method).collect()
}

fn analyze_mean(dir: &Path, extra: &[&str]) -> Output {
    let input = write(dir, "mean.csv", MEAN_FIXTURE);
    let mut args = vec!["analyze", "--input", input.to_str().unwrap(), "--outcome", "y", "--prediction", "yhat"];
    args.extend(["--family", "mean"]);
    args.extend(extra);
    pbinfer(&args, &[])
}

/// Linear fixture `y = 1 + 2x + e` with prediction `1 + 2x + pred_scale·e + noise·u`.
fn linear_csv(n: usize, n_lab: usize, noise: f64, pred_scale: f64) -> String {
    let mut s = String::from("x,y,yhat\n");
    for i in 0..n {
        let x = ((i * 37) % 101) as f64 / 50.0 - 1.0;
        let e = (((i * 53) % 97) as f64 / 48.0 - 1.0) * 0.8;
        let u = (((i * 71 + 13) % 89) as f64 / 44.0 - 1.0) * noise;
        let y = 1.0 + 2.0 * x + e;
        let yhat = 1.0 + 2.0 * x + pred_scale * e + u;
        if i < n_lab {
            s.push_str(&format!("{x},{y},{yhat}\n"));
        } else {
            s.push_str(&format!("{x},,{yhat}\n"));
        }
    }
    s
}

fn diagnose(dir: &Path, csv: &str) -> Value {
    let input = write(dir, "lin.csv", csv);
    json(&pbinfer(
        &[
            "diagnose",
            "--input",
            input.to_str().unwrap(),
            "--outcome",
            "y",
            "--prediction",
            "yhat",
            "--covariates",
            "x",
            "--family",
            "linear",
        ],
        &[],
    ))
}

#[test]
fn analyze_reproduces_the_mean_example() {
    let dir = TempDir::new().unwrap();
    let doc = json(&analyze_mean(dir.path(), &[]));
    assert_eq!(records(&doc, "ppi")[0]["estimate"].as_f64().unwrap(), 4.0);
    assert_eq!(records(&doc, "ppi_a")[0]["estimate"].as_f64().unwrap(), 2.666666667);
    assert_eq!(doc["n_lab"], 6);
}

#[test]
fn lab_only_has_unit_efficiency() {
    let dir = TempDir::new().unwrap();
    let doc = json(&analyze_mean(dir.path(), &["--methods", "lab"]));
    let recs = doc["records"].as_array().unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0]["re_vs_lab"].as_f64().unwrap(), 1.0);
}

#[test]
fn se_is_recomputable_from_the_reported_covariance() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "lin.csv", &linear_csv(120, 40, 0.5, 0.7));
    let out = pbinfer(
        &["analyze", "--input", input.to_str().unwrap(), "--outcome", "y", "--prediction", "yhat"]
            .into_iter()
            .chain(["--covariates", "x", "--family", "linear"])
            .collect::<Vec<_>>(),
        &[],
    );
    let doc = json(&out);
    let n = doc["n"].as_f64().unwrap();
    for cov in doc["covariance"].as_array().unwrap() {
        let method = cov["method"].as_str().unwrap();
        let m = cov["cov"].as_array().unwrap();
        for (j, rec) in records(&doc, method).iter().enumerate() {
            let v = m[j][j].as_f64().unwrap();
            let se: f64 = format!("{:.9e}", (v / n).sqrt()).parse().unwrap();
            assert_eq!(rec["se"].as_f64().unwrap(), se, "{method} {j}");
        }
    }
    for rec in doc["records"].as_array().unwrap() {
        for key in ["estimate", "se", "ci_lower", "ci_upper", "re_vs_lab"] {
            assert!(rec[key].as_f64().unwrap().is_finite());
        }
    }
}

#[test]
fn estimates_do_not_depend_on_row_order() {
    let dir = TempDir::new().unwrap();
    let csv = linear_csv(90, 30, 0.4, 0.6);
    let mut lines: Vec<&str> = csv.lines().collect();
    let header = lines.remove(0);
    lines.reverse();
    let reversed = format!("{header}\n{}\n", lines.join("\n"));
    let run = |name: &str, text: &str| {
        let input = write(dir.path(), name, text);
        let out = pbinfer(
            &[
                "analyze", "--input", input.to_str().unwrap(), "--outcome", "y", "--prediction", "yhat",
                "--covariates", "x", "--family", "linear", "--format", "csv",
            ],
            &[],
        );
        assert!(out.status.success(), "{}", stderr(&out));
        let text = String::from_utf8(out.stdout).unwrap();
        text.lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0].to_string(), f[1].to_string(), f[2].parse::<f64>().unwrap())
            })
            .collect::<Vec<_>>()
    };
    let a = run("a.csv", &csv);
    let b = run("b.csv", &reversed);
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((&x.0, &x.1), (&y.0, &y.1));
        assert!((x.2 - y.2).abs() <= 1e-9 * x.2.abs().max(1.0), "{x:?} {y:?}");
    }
}

#[test]
fn csv_output_has_one_row_per_method_and_coefficient() {
    let dir = TempDir::new().unwrap();
    let out = analyze_mean(dir.path(), &["--format", "csv", "--methods", "lab,ppi,cc"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "method,coef,estimate,se,ci_lower,ci_upper,re_vs_lab");
    assert_eq!(lines.len(), 4);
    assert!(lines[2].starts_with("ppi,mean,4.0,"));
}

#[test]
fn missing_prediction_cell_cites_the_line() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "bad.csv", "y,yhat\n1,2\n3,\n2,2\n");
    let out = pbinfer(&["analyze", "--input", input.to_str().unwrap(), "--outcome", "y", "--prediction", "yhat", "--family", "mean"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn schema_violations_exit_two() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let cases: Vec<(String, Vec<&str>)> = vec![
        ("y,yhat\n1,2\n3,abc\n".into(), vec!["--family", "mean"]),
        ("y,yhat\n1,2\n3,2\n".into(), vec!["--family", "mean", "--covariates", "yhat"]),
        ("y,p\n1,2\n3,2\n".into(), vec!["--family", "mean"]),
        ("y,yhat\n1,0.2\n2,0.4\n0,0.5\n1,0.9\n".into(), vec!["--family", "logistic"]),
        ("y,yhat\n1,2\n3,2\n".into(), vec!["--family", "mean", "--methods", "sur"]),
        ("y,yhat\n1,2\n3,2\n".into(), vec!["--family", "poisson"]),
        ("y,yhat\n1,2\n3,2\n".into(), vec!["--family", "mean", "--level", "1.5"]),
    ];
    for (i, (csv, extra)) in cases.iter().enumerate() {
        let input = write(d, &format!("c{i}.csv"), csv);
        let mut args = vec!["analyze", "--input", input.to_str().unwrap(), "--outcome", "y", "--prediction", "yhat"];
        args.extend(extra);
        let out = pbinfer(&args, &[]);
        assert_eq!(out.status.code(), Some(2), "case {i}: {}", stderr(&out));
        assert!(!stderr(&out).contains("panicked"));
    }
}

#[test]
fn too_few_labeled_rows_exit_four() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "few.csv", "x,y,yhat\n1,2,2\n2,3,3\n3,,4\n4,,5\n");
    let out = pbinfer(
        &["analyze", "--input", input.to_str().unwrap(), "--outcome", "y", "--prediction", "yhat", "--covariates", "x", "--family", "linear"],
        &[],
    );
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
}

#[test]
fn solver_failure_exits_three_and_names_the_method() {
    let dir = TempDir::new().unwrap();
    // Perfectly separated labels have no finite logistic fit.
    let input = write(dir.path(), "sep.csv", "x,y,yhat\n-2,0,0.1\n-1,0,0.2\n1,1,0.8\n2,1,0.9\n3,1,0.7\n0.5,,0.5\n");
    let out = pbinfer(
        &["analyze", "--input", input.to_str().unwrap(), "--outcome", "y", "--prediction", "yhat", "--covariates", "x", "--family", "logistic", "--methods", "lab"],
        &[],
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("lab"));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "mean.csv", MEAN_FIXTURE);
    let cfg = write(
        dir.path(),
        "cfg.json",
        &format!(
            "{{\n  \"input\": \"{}\",\n  \"outcome\": \"y\",\n  \"prediction\": \"yhat\",\n  \"family\": \"mean\",\n  \"methods\": [\"ppi\", \"lab\"]\n}}\n",
            input.display()
        ),
    );
    let doc = json(&pbinfer(&["analyze", "--config", cfg.to_str().unwrap()], &[]));
    assert_eq!(doc["records"].as_array().unwrap().len(), 2);
    let doc = json(&pbinfer(&["analyze", "--config", cfg.to_str().unwrap(), "--methods", "cc"], &[]));
    assert_eq!(records(&doc, "cc").len(), 1);
    assert_eq!(doc["records"].as_array().unwrap().len(), 1);

    let bad = write(dir.path(), "bad.json", "{\n  \"family\": \"mean\",\n  \"colour\": \"red\"\n}\n");
    let out = pbinfer(&["analyze", "--config", bad.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn output_file_is_written() {
    let dir = TempDir::new().unwrap();
    let out_path = dir.path().join("res.json");
    let out = analyze_mean(dir.path(), &["--out", out_path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let doc: Value = serde_json::from_slice(&std::fs::read(&out_path).unwrap()).unwrap();
    assert_eq!(records(&doc, "ppi")[0]["estimate"].as_f64().unwrap(), 4.0);
}

#[test]
fn diagnose_perfect_predictions() {
    let dir = TempDir::new().unwrap();
    let doc = diagnose(dir.path(), &linear_csv(100, 40, 0.0, 1.0));
    assert!((doc["rho"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!(doc["ppi_a"]["efficient_vs_lab"].as_array().unwrap().iter().all(|b| b == true));
    assert_eq!(doc["recommendation"], "cc");
}

#[test]
fn diagnose_noisy_predictions() {
    let dir = TempDir::new().unwrap();
    let doc = diagnose(dir.path(), &linear_csv(300, 100, 1.0, 0.0));
    assert!(doc["ppi_a"]["efficient_vs_lab"].as_array().unwrap().iter().any(|b| b == false));
    let rec = doc["recommendation"].as_str().unwrap();
    assert!(rec == "cc" || rec == "lab");
    assert!(doc["rho"].as_f64().unwrap().abs() < 0.3);
}

#[test]
fn diagnose_scaled_prediction_noise_cannot_help_ppi_a() {
    let dir = TempDir::new().unwrap();
    let doc = diagnose(dir.path(), &linear_csv(200, 80, 0.0, 2.0));
    assert!((doc["threshold"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!(doc["ppi_a"]["efficient_vs_lab"].as_array().unwrap().iter().all(|b| b == false));
}

#[test]
fn diagnose_rejects_logistic() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "l.csv", "y,yhat\n1,1\n0,0\n1,1\n");
    let out = pbinfer(&["diagnose", "--input", input.to_str().unwrap(), "--outcome", "y", "--prediction", "yhat", "--family", "logistic"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

fn simulate(dir: &Path, name: &str, extra: &[&str], threads: &str) -> Vec<u8> {
    let path = dir.join(name);
    let mut args = vec!["simulate", "--out", path.to_str().unwrap()];
    args.extend(extra);
    let out = pbinfer(&args, &[("PBINFER_THREADS", threads)]);
    assert!(out.status.success(), "{}", stderr(&out));
    std::fs::read(path).unwrap()
}

#[test]
fn simulate_is_byte_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let args = ["--families", "linear", "--error-types", "nonrandom", "--qualities", "low", "--n", "500", "--n-lab", "100", "--replicates", "20", "--seed", "9"];
    let one = simulate(dir.path(), "t1.csv", &args, "1");
    assert_eq!(one, simulate(dir.path(), "t2.csv", &args, "2"));
    assert_eq!(one, simulate(dir.path(), "t8.csv", &args, "8"));
}

#[test]
fn simulate_grid_row_count() {
    let dir = TempDir::new().unwrap();
    let bytes = simulate(dir.path(), "grid.csv", &["--n", "300", "--n-lab", "60", "--replicates", "2"], "4");
    let text = String::from_utf8(bytes).unwrap();
    // Six linear cells with nine methods and six logistic cells with seven, four coefficients each.
    assert_eq!(text.lines().count(), 1 + 6 * 9 * 4 + 6 * 7 * 4);
}

#[test]
fn simulate_single_replicate_json() {
    let dir = TempDir::new().unwrap();
    let args = ["--families", "linear", "--error-types", "random", "--qualities", "high", "--n", "300", "--n-lab", "60", "--replicates", "1", "--format", "json"];
    let doc: Value = serde_json::from_slice(&simulate(dir.path(), "one.json", &args, "1")).unwrap();
    for row in doc["rows"].as_array().unwrap() {
        let c = row["coverage"].as_f64().unwrap();
        assert!(c == 0.0 || c == 1.0);
        assert_eq!(row["coverage_mcse"].as_f64().unwrap(), 0.0);
    }
}

#[test]
fn simulate_rejects_bad_settings() {
    for args in [
        vec!["simulate", "--families", "mean"],
        vec!["simulate", "--n-lab", "3"],
        vec!["simulate", "--format", "xml"],
        vec!["simulate", "--qualities", "medium"],
    ] {
        assert_eq!(pbinfer(&args, &[]).status.code(), Some(2), "{args:?}");
    }
    let out = pbinfer(&["simulate", "--replicates", "1", "--n", "100", "--n-lab", "20"], &[("PBINFER_THREADS", "zero")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_and_unknown_flags() {
    assert_eq!(pbinfer(&["--help"], &[]).status.code(), Some(0));
    assert_eq!(pbinfer(&["analyze", "--bogus"], &[]).status.code(), Some(2));
    assert_eq!(pbinfer(&[], &[]).status.code(), Some(2));
}
