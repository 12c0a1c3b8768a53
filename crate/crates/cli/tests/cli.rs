use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vldsrc"))
        .args(args)
        .env_remove("VLDSRC_MAX_TYPES")
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("vldsrc-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("scratch dir");
    dir.join(name)
}

#[test]
fn validation_errors_exit_2() {
    assert_eq!(code(&["lstar", "--source", "no-such-fixture", "--eps", "0.1"]), 2);
    assert_eq!(code(&["lstar", "--source", "appendix-i", "--eps", "3/2"]), 2);
    assert_eq!(code(&["lstar", "--source", "appendix-i", "--eps", "0.1", "--criterion", "median"]), 2);
    assert_eq!(code(&["guess", "--source", "appendix-i", "--eps", "0.1", "--cost", "2"]), 2);
    assert_eq!(code(&["scan", "--source", "appendix-i", "--n", "0", "--eps", "0.1"]), 2);
    let bad = scratch("bad.json");
    std::fs::write(&bad, r#"{"mode":"rational","x_alphabet":["a"],"y_alphabet":["b"],"pmf":[["1/2"]]}"#).unwrap();
    assert_eq!(code(&["measures", "--source", bad.to_str().unwrap()]), 2);
}

#[test]
fn budget_exceeded_exits_3() {
    assert_eq!(code(&["--max-types", "5", "lstar", "--source", "binary-pair", "--n", "10", "--eps", "0.1"]), 3);
    let out = Command::new(env!("CARGO_BIN_EXE_vldsrc"))
        .args(["lstar", "--source", "binary-pair", "--n", "10", "--eps", "0.1"])
        .env("VLDSRC_MAX_TYPES", "5")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn exact_values_are_fractions() {
    let v = json(&["lstar", "--source", "source-b", "--eps", "1/4", "--criterion", "max"]);
    assert_eq!(v["exact"], "1/2");
    let v = json(&["bounds", "--source", "binary-pair", "--n", "3", "--eps", "0.2", "--criterion", "avg"]);
    let (lo, up) = (v["lower"].as_f64().unwrap(), v["upper"].as_f64().unwrap());
    let exact = v["value"].as_f64().unwrap();
    assert!(lo <= exact && exact <= up, "{v}");
    assert_eq!(v["exact"], "239/1080");
}

#[test]
fn codebook_at_blocklength_one() {
    let v = json(&["build-code", "--source", "appendix-i", "--eps", "1/6", "--criterion", "avg"]);
    let book = v["codebook"].as_array().unwrap();
    let words: Vec<&str> = book.iter().map(|e| e["codeword"].as_str().unwrap()).collect();
    let keep: Vec<f64> = book.iter().map(|e| e["keep_probability"].as_f64().unwrap()).collect();
    assert_eq!(words, ["", "0", "1"]);
    assert_eq!(keep, [1.0, 1.0, 0.0]);
    assert_eq!(v["expected_length"], "1/3");
    assert_eq!(v["error_probability"], "1/6");
}

#[test]
fn fixture_documents_reload() {
    let v = json(&["fixtures"]);
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"appendix-i") && names.contains(&"binary-pair"));
    let doc = json(&["fixtures", "--name", "binary-pair"]);
    let path = scratch("binary-pair.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let from_file = json(&["lstar", "--source", path.to_str().unwrap(), "--n", "3", "--eps", "1/5"]);
    let from_name = json(&["lstar", "--source", "binary-pair", "--n", "3", "--eps", "1/5"]);
    assert_eq!(from_file["exact"], from_name["exact"]);
}

#[test]
fn scan_writes_csv() {
    let path = scratch("scan.csv");
    let out = run(&["--out", path.to_str().unwrap(), "scan", "--source", "point-mass", "--n", "2:8:x2", "--eps", "0.1,0.5"]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("n,eps,criterion,exact,first_order,dispersion_term,approx,residual,residual_per_log_n,residual_per_sqrt_n")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3 * 2 * 2);
    for row in rows {
        let cells: Vec<f64> = row.split(',').skip(3).map(|c| c.parse::<f64>().unwrap()).collect();
        assert!(cells.iter().all(|c| *c == 0.0), "{row}");
    }
}

#[test]
fn scan_marks_blocklengths_over_budget() {
    let v = json(&["--max-types", "50", "scan", "--source", "binary-pair", "--n", "2,40", "--eps", "0.1", "--criterion", "avg"]);
    assert_eq!(v["partial"], true);
    let rows = v["rows"].as_array().unwrap();
    assert!(rows[0]["exact"].is_number() && rows[1]["exact"].is_null());
}

#[test]
fn output_does_not_depend_on_workers() {
    let scan = |w: &str| run(&["--workers", w, "scan", "--source", "binary-pair", "--n", "1:12", "--eps", "0.1,0.3"]).stdout;
    assert_eq!(scan("1"), scan("3"));
    let sim = |w: &str| {
        run(&["--workers", w, "simulate", "--source", "jensen-pair", "--n", "2", "--eps", "0.1", "--trials", "200000", "--seed", "9"])
            .stdout
    };
    assert_eq!(sim("1"), sim("3"));
}

#[test]
fn vanishing_varentropy_warns() {
    let out = run(&["second-order", "--source", "source-b", "--n", "100", "--eps", "0.1", "--criterion", "max"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn flawed_trace_flags_the_final_code() {
    let v = json(&["flawed-trace"]);
    assert_eq!(v["violates_error_budget"], true);
    assert_eq!(v["steps"].as_array().unwrap().last().unwrap()["error"], "2/9");
}
