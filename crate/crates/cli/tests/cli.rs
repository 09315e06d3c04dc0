use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use trop_ampere::ma_operator::MAResult;
use trop_ampere::solver::SolveResult;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trop-ampere"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, value: &Value) -> String {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string(value).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

fn point(side: &str, w: &[f64]) -> Value {
    json!({ "side": side, "weights": w })
}

/// Mass 8 at each facet barycenter of B for d = 2.
fn barycenter_target() -> Value {
    let atoms: Vec<Value> = (0..4)
        .map(|i| {
            let w: Vec<f64> = (0..4).map(|k| if k == i { 0.0 } else { 1.0 / 3.0 }).collect();
            json!({ "point": point("B", &w), "weight": 8.0 })
        })
        .collect();
    json!({ "side": "B", "atoms": atoms })
}

/// The constant function 1 on B for d = 2.
fn constant_one() -> Value {
    let generators: Vec<Value> = (0..4)
        .map(|i| {
            let w: Vec<f64> = (0..4).map(|k| if k == i { 1.0 } else { 0.0 }).collect();
            json!({ "anchor": point("A", &w), "offset": 0.0 })
        })
        .collect();
    json!({ "side": "B", "generators": generators })
}

#[test]
fn examples_pass_and_print_rows() {
    let out = run(&["paper-examples", "--name", "vertmass", "--dim", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.contains("mass at n_") && l.ends_with("pass")).count(), 4);
    assert!(text.contains("8.000000000000000"));

    let out = run(&["paper-examples", "--name", "singmass"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("5.333333333333333"));
    assert!(text.contains("8.888888888888889"));

    assert_eq!(run(&["paper-examples"]).status.code(), Some(0));
}

#[test]
fn unknown_example_is_a_usage_error() {
    let out = run(&["paper-examples", "--name", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("nope"));
}

#[test]
fn zero_mass_target_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = barycenter_target();
    for a in t["atoms"].as_array_mut().unwrap() {
        a["weight"] = json!(0.0);
    }
    let target = write(dir.path(), "t.json", &t);
    let out_path = dir.path().join("r.json");
    let out = run(&["solve", "--dim", "2", "--target", &target, "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("(d+2)^(d+1)/d!"), "{err}");
}

#[test]
fn missing_input_is_an_io_error() {
    let out = run(&["ma", "--fn", "/nonexistent/f.json", "--out", "/tmp/never.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let target = write(dir.path(), "t.json", &barycenter_target());
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let p = dir.path().join(format!("r{threads}.json"));
        let out = bin()
            .args(["solve", "--dim", "2", "--target", &target, "--out", p.to_str().unwrap()])
            .env("TROP_AMPERE_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(fs::read(&p).unwrap());
    }
    assert!(outputs[0] == outputs[1], "outputs differ between thread counts");
    let r: SolveResult = serde_json::from_slice(&outputs[0]).unwrap();
    assert!(r.converged);
    // the emitted file re-parses to an equal value
    let again = serde_json::to_string_pretty(&r).unwrap() + "\n";
    assert!(again.as_bytes() == outputs[0].as_slice(), "round trip changed the file");
}

#[test]
fn bad_thread_count_is_rejected() {
    let out = bin().args(["paper-examples", "--name", "pairing"]).env("TROP_AMPERE_THREADS", "zero").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ma_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "f.json", &constant_one());
    let p = dir.path().join("m.json");
    let out = run(&["ma", "--fn", &f, "--out", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(&p).unwrap();
    let m: MAResult = serde_json::from_str(&text).unwrap();
    let atoms = m.measure.atoms();
    assert_eq!(atoms.len(), 4);
    for a in atoms {
        assert!((a.weight - 8.0).abs() < 1e-9);
    }
    assert!(serde_json::to_string_pretty(&m).unwrap() + "\n" == text, "round trip changed the file");
}

#[test]
fn ctransform_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "f.json", &constant_one());
    let qa = write(dir.path(), "qa.json", &json!([[1.0, 0.0, 0.0, 0.0], [0.0, 0.5, 0.5, 0.0]]));
    let qb = write(dir.path(), "qb.json", &json!([[0.0, 0.25, 0.25, 0.5]]));

    let out = run(&["ctransform", "--fn", &f, "--queries", &qa]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    // (ψ ≡ 1)^c vanishes on A
    for x in v["values"].as_array().unwrap() {
        assert!(x.as_f64().unwrap().abs() < 1e-12);
    }

    let out = run(&["eval", "--fn", &f, "--queries", &qb]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["values"][0].as_f64().unwrap() - 1.0).abs() < 1e-12);

    // queries on the wrong side are invalid points
    let out = run(&["eval", "--fn", &f, "--queries", &write(dir.path(), "bad.json", &json!([[0.5, 0.5, 0.5, 0.5]]))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cells_csv_has_one_row_per_atom() {
    let dir = tempfile::tempdir().unwrap();
    let atoms = write(dir.path(), "a.json", &json!([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]));
    let weights = write(dir.path(), "w.json", &json!([0.0, 0.0, 0.0]));
    let p = dir.path().join("c.csv");
    let out = run(&["cells", "--atoms", &atoms, "--weights", &weights, "--out", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let mut r = csv::Reader::from_path(&p).unwrap();
    let headers = r.headers().unwrap().clone();
    let mass_col = headers.iter().position(|h| h == "mass").unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        assert!((row[mass_col].parse::<f64>().unwrap() - 3.0).abs() < 1e-12);
    }
}

#[test]
fn export_plot_writes_polygons_and_measure() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "f.json", &constant_one());
    let out_dir = dir.path().join("plot");
    let out = run(&["export-plot", "--fn", &f, "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut cells = csv::Reader::from_path(out_dir.join("cells.csv")).unwrap();
    assert!(cells.records().count() >= 12);
    let mut measure = csv::Reader::from_path(out_dir.join("measure.csv")).unwrap();
    let total: f64 = measure.records().map(|r| r.unwrap()[4].parse::<f64>().unwrap()).sum();
    assert!((total - 32.0).abs() < 1e-9);
}
