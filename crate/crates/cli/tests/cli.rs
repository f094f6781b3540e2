use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn balflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_balflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn error_of(out: &Output) -> Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    let line = text.lines().find(|l| l.contains("\"error\"")).unwrap_or_else(|| panic!("no error in {text}"));
    serde_json::from_str::<Value>(line).unwrap()["error"].clone()
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.parse::<f64>().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

#[test]
fn verify_presets_pass() {
    for preset in ["iwasawa", "torus1", "torus2", "torus3", "solvable"] {
        let out = balflow(&["verify", "--preset", preset]);
        assert!(out.status.success(), "{preset}: {}", stdout(&out));
        let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
        assert_eq!(report["pass"], Value::Bool(true));
    }
}

#[test]
fn verify_csv_lists_checks() {
    let out = balflow(&["verify", "--preset", "iwasawa", "--format", "csv"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("check,pass,residual,tolerance\n"));
    assert!(text.contains("chern_ricci_vanishes,true"));
}

#[test]
fn jacobi_violation_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"name": "bad", "n": 2, "d_alpha": [{"k": 2, "kind": "11", "i": 1, "j": 2, "re": 1}]}"#).unwrap();
    let out = balflow(&["verify", "--model", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["code"], "E_JACOBI");
}

#[test]
fn malformed_json_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    fs::write(&path, "{\n  \"name\": \"x\",\n  \"n\": 3,\n  oops\n}\n").unwrap();
    let out = balflow(&["verify", "--model", path.to_str().unwrap()]);
    let err = error_of(&out);
    assert_eq!(err["code"], "E_PARSE");
    assert_eq!(err["details"]["line"], 4);
}

#[test]
fn missing_model_file_is_io_error() {
    let out = balflow(&["verify", "--model", "/nonexistent/model.json"]);
    assert_eq!(error_of(&out)["code"], "E_IO");
}

#[test]
fn unknown_preset_is_argument_error() {
    let out = balflow(&["verify", "--preset", "nope"]);
    assert_eq!(error_of(&out)["code"], "E_ARGUMENT");
}

#[test]
fn usage_errors_are_json() {
    let out = balflow(&["flow", "--preset", "iwasawa"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["code"], "E_USAGE");
    let out = balflow(&["verify"]);
    assert_eq!(error_of(&out)["code"], "E_USAGE");
}

#[test]
fn inline_metric_override() {
    let metric = "[[[2,0],[0,0],[0,0]],[[0,0],[1,0],[0,0]],[[0,0],[0,0],[1,0]]]";
    let out = balflow(&["verify", "--preset", "iwasawa", "--metric", metric]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bad = "[[[1,0],[2,0],[0,0]],[[2,0],[1,0],[0,0]],[[0,0],[0,0],[1,0]]]";
    let out = balflow(&["verify", "--preset", "iwasawa", "--metric", bad]);
    assert_eq!(error_of(&out)["code"], "E_NOT_POSITIVE");
}

#[test]
fn iwasawa_flow_compare_exact_columns() {
    let out = balflow(&["flow", "--preset", "iwasawa", "--t-end", "0.3", "--compare-exact"]);
    assert!(out.status.success());
    let (header, rows) = csv_rows(&stdout(&out));
    assert_eq!(header.len(), 1 + 18 + 3 + 2);
    assert_eq!(header[header.len() - 2], "rel_error_closed_form");
    let last = rows.last().unwrap();
    assert!((last[0] - 0.3).abs() < 1e-12);
    assert!(last[header.len() - 2].is_nan());
    assert!(rows.iter().all(|r| r[header.len() - 1] < 1e-6));
    let g1 = (1.0f64 + 1.8).powf(1.0 / 6.0);
    assert!((last[1] - g1).abs() < 1e-6 * g1);
}

#[test]
fn compare_exact_needs_iwasawa_identity() {
    let out = balflow(&["flow", "--preset", "torus3", "--t-end", "0.1", "--compare-exact"]);
    assert_eq!(error_of(&out)["code"], "E_USAGE");
}

#[test]
fn forward_flow_keeps_positivity() {
    let out = balflow(&["flow", "--preset", "iwasawa", "--t-end", "1.0", "--format", "json"]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["summary"]["termination"], "reached t_end");
    let snaps = doc["snapshots"].as_array().unwrap();
    assert!(snaps.iter().all(|s| s["positivity_margin"].as_f64().unwrap() > 0.0));
}

#[test]
fn backward_flow_loses_positivity() {
    let out = balflow(&["flow", "--preset", "iwasawa", "--t-end", "-0.5"]);
    assert_eq!(out.status.code(), Some(3));
    let err = error_of(&out);
    assert_eq!(err["code"], "E_POSITIVITY_LOST");
    let safe = err["details"]["last_safe"].as_f64().unwrap();
    let lost = err["details"]["unsafe_time"].as_f64().unwrap();
    assert!(lost < -1.0 / 6.0 && -1.0 / 6.0 < safe);
    assert!(!stdout(&out).is_empty());
}

#[test]
fn abelian_flow_is_constant() {
    let out = balflow(&["flow", "--preset", "torus3", "--t-end", "0.5"]);
    assert!(out.status.success());
    let (_, rows) = csv_rows(&stdout(&out));
    let first = &rows[0][1..19];
    assert!(rows.iter().all(|r| r[1..19] == *first));
}

#[test]
fn output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = balflow(&["flow", "--preset", "iwasawa", "--t-end", "0.1", "--out", path.to_str().unwrap()]);
        assert!(out.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let x = balflow(&["verify", "--preset", "solvable", "--seed", "7"]);
    let y = balflow(&["verify", "--preset", "solvable", "--seed", "7"]);
    assert_eq!(x.stdout, y.stdout);
}

#[test]
fn reduce_check_residual_decreases() {
    let out = balflow(&["torus", "reduce-check", "--N", "8,12,16"]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["strictly_decreasing"], true);
    assert_eq!(doc["flagged"], false);
    let last = &doc["results"][2];
    assert_eq!(last["N"], 16);
    assert!(last["residual"].as_f64().unwrap() < 1e-6);
}

#[test]
fn reduce_check_flags_large_amplitude() {
    let modes = r#"[{"k": [1, 0, 0, 0], "amplitude": 0.05, "phase": 0}]"#;
    let out = balflow(&["torus", "reduce-check", "--N", "8", "--modes", modes]);
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    assert!(stderr.contains("W_ENVELOPE"), "{stderr}");
    let doc: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["flagged"], true);
}

#[test]
fn reduce_check_rejects_bad_grid() {
    let out = balflow(&["torus", "reduce-check", "--N", "7"]);
    assert_eq!(error_of(&out)["code"], "E_ARGUMENT");
}

#[test]
fn calabi_energy_is_monotone() {
    let out = balflow(&["torus", "calabi", "--N", "8", "--steps", "20", "--residual-every", "5"]);
    assert!(out.status.success());
    let (header, rows) = csv_rows(&stdout(&out));
    assert_eq!(header, ["step", "t", "calabi_energy", "max_abs_s", "min_eig", "reduction_residual"]);
    assert_eq!(rows.len(), 21);
    assert!(rows.windows(2).all(|w| w[1][2] <= w[0][2]));
    assert!(rows[1][5].is_nan() && !rows[5][5].is_nan());
}

#[test]
fn calabi_rejects_unstable_step() {
    let out = balflow(&["torus", "calabi", "--N", "8", "--steps", "2", "--dt", "1.0"]);
    assert_eq!(error_of(&out)["code"], "E_ARGUMENT");
}
