use std::path::{Path, PathBuf};
use std::process::Command;

use opscale_core::numkernel::{from_row_major, identity};
use opscale_core::{ChoiMap, Complex64};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

struct Run {
    code: i32,
    report: Value,
}

fn opscale(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_opscale")).args(args).env_remove("OPSCALE_SEED").output().unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    let report = serde_json::from_str(&stdout).unwrap_or(Value::Null);
    Run { code: out.status.code().unwrap(), report }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn matrix(v: &Value) -> opscale_core::ComplexMatrix {
    let rows = v["rows"].as_u64().unwrap() as usize;
    let cols = v["cols"].as_u64().unwrap() as usize;
    let data: Vec<Complex64> = v["data"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| match e {
            Value::Array(z) => Complex64::new(z[0].as_f64().unwrap(), z[1].as_f64().unwrap()),
            x => Complex64::new(x.as_f64().unwrap(), 0.0),
        })
        .collect();
    from_row_major(rows, cols, &data).unwrap()
}

#[test]
fn reports_carry_version_seed_and_tolerances() {
    let r = opscale(&["support", p(&fixture("pattern_r.json"))]);
    assert_eq!(r.report["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r.report["seed"], 42);
    assert_eq!(r.report["tolerances"]["conv_eps"], 1e-10);
    let r = opscale(&["--seed", "7", "--tol", "1e-9", "selftest"]);
    assert_eq!(r.report["seed"], 7);
    assert_eq!(r.report["tolerances"]["conv_eps"], 1e-9);
}

#[test]
fn seed_environment_variable_overrides_flag() {
    let out = Command::new(env!("CARGO_BIN_EXE_opscale"))
        .args(["--seed", "7", "selftest"])
        .env("OPSCALE_SEED", "1234")
        .output()
        .unwrap();
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["seed"], 1234);
}

#[test]
fn support_without_total_support_names_the_entry() {
    let r = opscale(&["support", p(&fixture("pattern_r.json")), "--total", "--oracle"]);
    assert_eq!(r.code, 0);
    assert_eq!(r.report["support"], true);
    assert_eq!(r.report["total_support"], false);
    assert_eq!(r.report["witness"]["entry"], serde_json::json!([1, 1]));
    assert_eq!(r.report["oracle"]["agrees"], true);
}

#[test]
fn all_ones_has_total_support() {
    let r = opscale(&["support", p(&fixture("pattern_ones_2x3.json")), "--total"]);
    assert_eq!(r.code, 0);
    assert_eq!(r.report["support"], true);
    assert_eq!(r.report["total_support"], true);
    assert!(r.report.get("witness").is_none());
}

#[test]
fn missing_support_has_zero_submatrix_witness() {
    let r = opscale(&["support", p(&fixture("pattern_no_support_2x3.json"))]);
    assert_eq!(r.code, 0);
    assert_eq!(r.report["support"], false);
    assert_eq!(r.report["witness"]["alpha"], serde_json::json!([0, 1]));
    assert_eq!(r.report["witness"]["beta"], serde_json::json!([1, 2]));
    assert_eq!(r.report["witness"]["weight"], 10);
}

#[test]
fn support_validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let neg = dir.path().join("neg.json");
    std::fs::write(&neg, r#"{"rows":1,"cols":2,"data":[1,-1]}"#).unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{not json").unwrap();
    let big = dir.path().join("big.json");
    std::fs::write(&big, format!(r#"{{"rows":5,"cols":4,"data":{:?}}}"#, vec![1; 20])).unwrap();
    for (path, oracle) in [(&neg, false), (&bad, false), (&big, true)] {
        let mut args = vec!["support", p(path)];
        if oracle {
            args.push("--oracle");
        }
        let r = opscale(&args);
        assert_eq!(r.code, 2, "{}", path.display());
        assert!(r.report["error"].is_string());
    }
    assert_eq!(opscale(&["support", p(&big)]).code, 0);
    assert_eq!(opscale(&["support", p(&dir.path().join("missing.json"))]).code, 2);
}

#[test]
fn scale_rxr_converges() {
    let r = opscale(&["scale", p(&fixture("map_rxr.json"))]);
    assert_eq!(r.code, 0);
    assert_eq!(r.report["verdict"], "converged-ds");
    assert!(r.report["residual_a"].as_f64().unwrap() <= 1e-10);
    assert!(r.report["residual_b"].as_f64().unwrap() <= 1e-10);
    assert_eq!(matrix(&r.report["X_final"]).nrows(), 2);
}

#[test]
fn scale_no_support_exits_3_with_growing_history() {
    let dir = tempfile::tempdir().unwrap();
    let history = dir.path().join("h.json");
    let r = opscale(&["scale", p(&fixture("map_no_support_3x3.json")), "--history", p(&history)]);
    assert_eq!(r.code, 3);
    assert_eq!(r.report["verdict"], "no-support-numerical");
    let h = read(&history);
    let logdet: Vec<f64> = h.as_array().unwrap().iter().map(|r| r["logdet"].as_f64().unwrap()).collect();
    assert!(logdet.len() > 20);
    assert!(logdet[logdet.len() - 20..].windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn scale_max_iter_exhaustion_exits_4() {
    let r = opscale(&["scale", p(&fixture("map_no_support_3x3.json")), "--max-iter", "5"]);
    assert_eq!(r.code, 4);
    assert_eq!(r.report["verdict"], "max-iter-inconclusive");
}

#[test]
fn scale_singular_marginal_exits_2() {
    let r = opscale(&["scale", p(&fixture("map_singular.json"))]);
    assert_eq!(r.code, 2);
    assert_eq!(r.report["verdict"], "precondition-failed");
    assert_eq!(r.report["marginal"], "T(Id)");
}

#[test]
fn scale_accepts_state_documents() {
    let r = opscale(&["scale", p(&fixture("map_state_kind.json"))]);
    assert_eq!(r.code, 0);
}

#[test]
fn fnf_of_maximally_mixed_state() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("mixed");
    let r = opscale(&["fnf", p(&fixture("state_mixed_2x2.json")), "--out", p(&prefix)]);
    assert_eq!(r.code, 0);
    let schmidt = read(&dir.path().join("mixed.schmidt.json"));
    let terms = schmidt["terms"].as_array().unwrap();
    assert_eq!(terms.len(), 1);
    assert!((terms[0]["coefficient"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    for suffix in ["filters", "state", "report"] {
        assert!(dir.path().join(format!("mixed.{suffix}.json")).exists(), "{suffix}");
    }
}

#[test]
fn fnf_of_random_pd_state_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("rand");
    let r = opscale(&["fnf", p(&fixture("state_random_pd_2x3.json")), "--out", p(&prefix)]);
    assert_eq!(r.code, 0);
    assert_eq!(r.report["verification"]["passed"], true);
    let report = read(&dir.path().join("rand.report.json"));
    assert_eq!(report["seed"], 42);
    assert!(report["sufficient_conditions"].is_object());
    assert!(report["scaling"].is_object());
    let filters = read(&dir.path().join("rand.filters.json"));
    assert_eq!(matrix(&filters["Xp"]).nrows(), 2);
    assert_eq!(matrix(&filters["Yp"]).nrows(), 3);
    let state = read(&dir.path().join("rand.state.json"));
    let rho = matrix(&state["matrix"]);
    let tr: f64 = (0..6).map(|i| rho[(i, i)].re).sum();
    assert!((tr - 1.0).abs() < 1e-10);
}

#[test]
fn fnf_of_pure_product_state_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let r = opscale(&["fnf", p(&fixture("state_product_pure.json")), "--out", p(&dir.path().join("x"))]);
    assert_eq!(r.code, 2);
    assert_eq!(r.report["verdict"], "precondition-failed");
    assert!(r.report["error"].as_str().unwrap().contains("not positive definite"));
}

#[test]
fn tilde_of_identity_doubles_identity() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lift.json");
    let r = opscale(&["tilde", p(&fixture("map_identity_2.json")), "--out", p(&out)]);
    assert_eq!(r.code, 0);
    let doc = read(&out);
    assert_eq!(doc["k"], 4);
    let lifted = ChoiMap::new(4, 4, matrix(&doc["choi"])).unwrap();
    let image = lifted.apply(&identity(4)).unwrap();
    assert!((image - identity(4) * Complex64::new(2.0, 0.0)).norm() < 1e-12);
}

#[test]
fn tilde_check_on_doubly_stochastic_map() {
    let dir = tempfile::tempdir().unwrap();
    let r = opscale(&["tilde", p(&fixture("map_direct_sum.json")), "--out", p(&dir.path().join("l.json")), "--check"]);
    assert_eq!(r.code, 0);
    assert_eq!(r.report["map_verdict"], "converged-ds");
    assert_eq!(r.report["lift_verdict"], "converged-ds");
}

#[test]
fn tilde_shape_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let r = opscale(&["tilde", p(&fixture("map_shape_mismatch.json")), "--out", p(&dir.path().join("l.json"))]);
    assert_eq!(r.code, 2);
}

#[test]
fn certificates_through_files() {
    let map = fixture("map_direct_sum.json");
    let trivial = opscale(&["certificate", p(&map), p(&fixture("cert_trivial_3.json"))]);
    assert_eq!(trivial.code, 0);
    assert_eq!(trivial.report["strict_rank"]["sampled"], true);
    let natural = opscale(&["certificate", p(&map), p(&fixture("cert_direct_sum.json"))]);
    assert_eq!(natural.code, 0);
    assert_eq!(natural.report["blocks"], 2);
    let bad = opscale(&["certificate", p(&map), p(&fixture("cert_bad_ratio.json"))]);
    assert_eq!(bad.code, 5);
    assert_eq!(bad.report["rank_ratio"]["passed"], false);
    let malformed = opscale(&["certificate", p(&map), p(&fixture("cert_not_projector.json"))]);
    assert_eq!(malformed.code, 2);
}

#[test]
fn selftest_passes() {
    let r = opscale(&["selftest"]);
    assert_eq!(r.code, 0, "{:#}", r.report);
    assert_eq!(r.report["passed"], true);
}

#[test]
fn batch_keeps_going_past_failures() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = dir.path().join("in");
    std::fs::create_dir(&inputs).unwrap();
    for name in ["map_rxr.json", "map_singular.json", "map_shape_mismatch.json", "map_identity_2.json"] {
        std::fs::copy(fixture(name), inputs.join(name)).unwrap();
    }
    std::fs::write(inputs.join("garbage.json"), "[").unwrap();
    let out = dir.path().join("out");
    let r = opscale(&["scale", "--batch", p(&inputs), "--out-dir", p(&out), "--jobs", "2"]);
    assert_eq!(r.code, 2);
    assert_eq!(r.report["inputs"], 5);
    let summary = read(&out.join("summary.json"));
    let codes: Vec<u64> = summary["results"].as_array().unwrap().iter().map(|e| e["exit_code"].as_u64().unwrap()).collect();
    // sorted by file name: garbage, identity, rxr, shape_mismatch, singular
    assert_eq!(codes, [2, 0, 0, 2, 2]);
    let rxr = read(&out.join("map_rxr.report.json"));
    assert_eq!(rxr["verdict"], "converged-ds");
    assert_eq!(rxr["seed"], 42);
    assert!(out.join("garbage.report.json").exists());
}

#[test]
fn batch_fnf_writes_outputs_per_input() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["state_mixed_2x2.json", "state_random_pd_2x3.json"] {
        std::fs::copy(fixture(name), dir.path().join(name)).unwrap();
    }
    let out = dir.path().join("out");
    let r = opscale(&["fnf", "--batch", p(dir.path()), "--out-dir", p(&out)]);
    assert_eq!(r.code, 0);
    for stem in ["state_mixed_2x2", "state_random_pd_2x3"] {
        for suffix in ["filters", "state", "schmidt", "report"] {
            assert!(out.join(format!("{stem}.{suffix}.json")).exists(), "{stem}.{suffix}");
        }
    }
}

#[test]
fn emitted_matrices_round_trip_through_text() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("rand");
    opscale(&["fnf", p(&fixture("state_random_pd_2x3.json")), "--out", p(&prefix)]);
    let text = std::fs::read_to_string(dir.path().join("rand.filters.json")).unwrap();
    let first: Value = serde_json::from_str(&text).unwrap();
    let again = serde_json::to_string_pretty(&first).unwrap() + "\n";
    assert_eq!(text, again);
}
