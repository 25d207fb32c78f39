use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cvcal_core::io::{load_network, load_theta, read_json, ResultFile, REPORT_FILES};
use serde_json::Value;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn cvcal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvcal"))
        .args(args)
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap()
}

#[test]
fn ranges_on_the_three_supplier_market() {
    let out = cvcal(&[
        "ranges",
        "--network",
        path(&fixture("ranges/network.json")),
        "--reference",
        path(&fixture("ranges/reference.json")),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("market,t1,90,110,"), "{row}");

    let dir = TempDir::new().unwrap();
    let out = cvcal(&[
        "ranges",
        "--network",
        path(&fixture("ranges/network.json")),
        "--reference",
        path(&fixture("ranges/reference.json")),
        "--out",
        path(dir.path()),
    ]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["satisfied"], 1);
    assert!(fs::read_to_string(dir.path().join("ranges.csv"))
        .unwrap()
        .contains(",90,110,"));
}

#[test]
fn calibrate_recovers_round_trip_market_power() {
    let dir = TempDir::new().unwrap();
    let out = cvcal(&[
        "calibrate",
        "--network",
        path(&fixture("round_trip/network.json")),
        "--reference",
        path(&fixture("round_trip/reference.json")),
        "--out",
        path(dir.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = stdout_json(&out);
    assert_eq!(summary["iterations"], 1);
    assert_eq!(summary["termination"], "Exact");

    let net = load_network(&fixture("round_trip/network.json"))
        .unwrap()
        .network;
    let truth = load_theta(&fixture("round_trip/theta.json"), &net).unwrap();
    let result: ResultFile = read_json(&dir.path().join("result.json")).unwrap();
    assert_eq!(result.result.iterations, 1);
    let mut served = 0;
    for n in net.consumer_nodes() {
        for f in net.traders_at(n) {
            let diff = (result.result.theta.at(f, n, 0) - truth.at(f, n, 0)).abs();
            assert!(
                diff <= 1e-6,
                "theta of {} differs by {diff:e}",
                net.traders[f].id
            );
            served += 1;
        }
    }
    assert!(served >= 2);
    for name in REPORT_FILES {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn report_re_renders_identical_tables() {
    let dir = TempDir::new().unwrap();
    let (first, second, rendered) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    for out_dir in [&first, &second] {
        let out = cvcal(&[
            "calibrate",
            "--network",
            path(&fixture("two_node/network.json")),
            "--reference",
            path(&fixture("two_node/reference.json")),
            "--out",
            path(out_dir),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out = cvcal(&[
        "report",
        "--result",
        path(&first.join("result.json")),
        "--out",
        path(&rendered),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in REPORT_FILES {
        let a = fs::read(first.join(name)).unwrap();
        assert_eq!(
            a,
            fs::read(second.join(name)).unwrap(),
            "{name} differs between runs"
        );
        assert_eq!(
            a,
            fs::read(rendered.join(name)).unwrap(),
            "{name} differs after re-rendering"
        );
    }
    assert_eq!(
        fs::read(first.join("result.json")).unwrap(),
        fs::read(second.join("result.json")).unwrap()
    );
}

#[test]
fn solve_writes_sales_and_prices() {
    let dir = TempDir::new().unwrap();
    let out = cvcal(&[
        "solve",
        "--network",
        path(&fixture("two_node/network.json")),
        "--theta",
        path(&fixture("two_node/theta.json")),
        "--out",
        path(dir.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let prices = fs::read_to_string(dir.path().join("prices.csv")).unwrap();
    assert_eq!(
        prices.lines().next().unwrap(),
        "node,period,price,consumption"
    );
    assert_eq!(prices.lines().count(), 1 + 4);
    let sales = fs::read_to_string(dir.path().join("sales.csv")).unwrap();
    assert_eq!(sales.lines().count(), 1 + 8);
}

#[test]
fn solve_without_anchors_reports_missing_anchor() {
    let dir = TempDir::new().unwrap();
    let out = cvcal(&[
        "solve",
        "--network",
        path(&fixture("two_node/network_no_anchors.json")),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "MissingAnchor");
    assert_eq!(err["node"], "n");
    assert_eq!(err["period"], "t1");
}

#[test]
fn validate_reports_consistency() {
    let out = cvcal(&[
        "validate",
        "--network",
        path(&fixture("two_node/network.json")),
        "--reference",
        path(&fixture("two_node/reference.json")),
        "--theta",
        path(&fixture("two_node/theta.json")),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = stdout_json(&out);
    assert_eq!(summary["nodes"], 2);
    assert_eq!(summary["anchors"], 4);
    assert_eq!(summary["reference_consistent"], true);
}

#[test]
fn input_errors_have_distinct_exit_codes() {
    let dir = TempDir::new().unwrap();
    let missing = cvcal(&["validate", "--network", path(&dir.path().join("none.json"))]);
    assert_eq!(missing.status.code(), Some(3));
    assert_eq!(stderr_json(&missing)["error"], "ReadError");

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"nodes\": [,]\n}").unwrap();
    let parse = cvcal(&["validate", "--network", path(&bad)]);
    assert_eq!(parse.status.code(), Some(3));
    let err = stderr_json(&parse);
    assert_eq!(
        (err["error"].as_str(), err["line"].as_u64()),
        (Some("ParseError"), Some(2))
    );

    let text = fs::read_to_string(fixture("ranges/network.json"))
        .unwrap()
        .replacen("80.0", "-80.0", 1);
    let negative = dir.path().join("negative.json");
    fs::write(&negative, text).unwrap();
    let model = cvcal(&["validate", "--network", path(&negative)]);
    assert_eq!(model.status.code(), Some(4));
    assert_eq!(stderr_json(&model)["error"], "InvariantViolation");

    let usage = cvcal(&["calibrate", "--network", "x.json"]);
    assert_eq!(usage.status.code(), Some(2));
    assert_eq!(stderr_json(&usage)["error"], "Usage");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"max_iterations": 5, "speed": "fast"}"#).unwrap();
    let out = cvcal(&[
        "ranges",
        "--network",
        path(&fixture("ranges/network.json")),
        "--reference",
        path(&fixture("ranges/reference.json")),
        "--config",
        path(&config),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "SchemaError");
}

#[test]
fn non_convergence_exits_with_its_own_code() {
    // Price bounds far below marginal cost with no room to widen.
    let dir = TempDir::new().unwrap();
    let text = fs::read_to_string(fixture("ranges/reference.json"))
        .unwrap()
        .replace("\"lambda\": 100.0", "\"lambda\": 50.0")
        .replace("\"lambda_lo\": 90.0", "\"lambda_lo\": 49.0")
        .replace("\"lambda_hi\": 110.0", "\"lambda_hi\": 51.0");
    let reference = dir.path().join("reference.json");
    fs::write(&reference, text).unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"max_iterations": 3, "widen_fraction": 0.0}"#).unwrap();
    let out = cvcal(&[
        "calibrate",
        "--network",
        path(&fixture("ranges/network.json")),
        "--reference",
        path(&reference),
        "--config",
        path(&config),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(
        out.status.code(),
        Some(6),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let err = stderr_json(&out);
    assert_eq!(err["error"], "MaxIterationsExceeded");
    assert_eq!(err["iterations"], 3);
}

#[test]
fn generated_fixtures_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out_dir in [&a, &b] {
        let out = cvcal(&[
            "generate",
            "--fixture",
            "grid10",
            "--seed",
            "4",
            "--out",
            path(out_dir),
        ]);
        assert!(out.status.success());
    }
    for name in ["network.json", "theta.json", "reference.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let out = cvcal(&[
        "validate",
        "--network",
        path(&a.join("network.json")),
        "--reference",
        path(&a.join("reference.json")),
        "--theta",
        path(&a.join("theta.json")),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(stdout_json(&out)["nodes"], 10);
}
