use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dateiv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dateiv"))
        .args(args)
        .env_remove("DATEIV_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_scenario(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn verify_two_mixed_passes() {
    let out = dateiv(&["verify", "--builtin", "two-mixed"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("DATE                   0.600000"));
    assert!(text.contains("IV estimand            0.600000"));
    assert!(text.trim_end().ends_with("PASS"));
}

#[test]
fn verify_with_defier_is_an_assumption_failure() {
    let out = dateiv(&["verify", "--builtin", "with-defier", "--format", "json"]);
    assert_eq!(code(&out), 2);
    let v = json(&out);
    assert_eq!(v["verdict"], "assumption_failure");
    assert!(v["absolute_gap"].as_f64().unwrap() > 0.01);
}

#[test]
fn verify_gap_failure_exits_three() {
    // Zero tolerance against rounding noise; exact arithmetic closes the gap.
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        "s.json",
        r#"{"schema_version": 1, "individuals": [
            {"id": "a", "tau0": 0.1, "tau1": 0.7, "kappa0": 0.3, "kappa1": 0.9},
            {"id": "b", "tau0": 0.2, "tau1": 0.3, "kappa0": 0.1, "kappa1": 0.7},
            {"id": "c", "tau0": 0.3, "tau1": 0.9, "kappa0": 0.6, "kappa1": 0.7}
        ]}"#,
    );
    let out = dateiv(&[
        "verify",
        "--scenario",
        &path,
        "--tol",
        "0",
        "--format",
        "json",
    ]);
    let v = json(&out);
    // DATE 24/65 is not representable; the two f64 evaluations round differently.
    assert!(v["absolute_gap"].as_f64().unwrap() > 0.0);
    assert_eq!(v["verdict"], "gap_failure");
    assert_eq!(code(&out), 3);
    let exact = dateiv(&[
        "verify",
        "--scenario",
        &path,
        "--tol",
        "0",
        "--exact",
        "--format",
        "json",
    ]);
    assert_eq!(code(&exact), 0);
    assert_eq!(json(&exact)["absolute_gap"].as_f64(), Some(0.0));
}

#[test]
fn missing_scenario_file_exits_one() {
    let out = dateiv(&["verify", "--scenario", "/definitely/not/here.json"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("not/here.json"));
}

#[test]
fn malformed_and_out_of_range_files_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_scenario(dir.path(), "bad.json", "{ not json");
    assert_eq!(code(&dateiv(&["verify", "--scenario", &bad])), 1);
    let range = write_scenario(
        dir.path(),
        "range.json",
        r#"{"schema_version": 1, "individuals": [
            {"id": "a", "tau0": 0.1, "tau1": 1.2, "kappa0": 0.3, "kappa1": 0.9}]}"#,
    );
    let out = dateiv(&["verify", "--scenario", &range]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("tau1"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&dateiv(&[])), 1);
    assert_eq!(code(&dateiv(&["verify"])), 1);
    assert_eq!(code(&dateiv(&["verify", "--builtin", "nope"])), 1);
    assert_eq!(
        code(&dateiv(&[
            "verify",
            "--builtin",
            "two-mixed",
            "--scenario",
            "x.json"
        ])),
        1
    );
    assert_eq!(
        code(&dateiv(&[
            "verify",
            "--builtin",
            "two-mixed",
            "--p-assign",
            "1"
        ])),
        1
    );
    assert_eq!(code(&dateiv(&["--help"])), 0);
}

#[test]
fn estimate_two_mixed() {
    let out = dateiv(&["estimate", "--builtin", "two-mixed", "--format", "json"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert!((v["date"].as_f64().unwrap() - 0.6).abs() < 1e-12);
    assert!((v["iv_estimand"].as_f64().unwrap() - 0.6).abs() < 1e-12);
    assert!(v["late"].is_null());
    assert_eq!(
        v["census"],
        serde_json::json!({"complier": 1, "indifferent": 1, "defier": 0})
    );
}

#[test]
fn estimate_classic_late_reports_late_equal_to_date() {
    let out = dateiv(&["estimate", "--builtin", "classic-late", "--format", "json"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    let date = v["date"].as_f64().unwrap();
    assert!((v["late"].as_f64().unwrap() - date).abs() < 1e-12);
    let table = stdout(&dateiv(&["estimate", "--builtin", "classic-late"]));
    assert!(table.contains("LATE                   1.000000"));
}

#[test]
fn estimate_without_compliers_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        "flat.json",
        r#"{"schema_version": 1, "individuals": [
            {"id": "a", "tau0": 0.4, "tau1": 0.4, "kappa0": 0.3, "kappa1": 0.9},
            {"id": "b", "tau0": 1, "tau1": 1, "kappa0": 0.1, "kappa1": 0.7}]}"#,
    );
    let out = dateiv(&["estimate", "--scenario", &path]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no compliers"));
}

#[test]
fn simulate_rejects_zero_samples() {
    assert_eq!(
        code(&dateiv(&["simulate", "--builtin", "two-mixed", "--n", "0"])),
        1
    );
}

#[test]
fn simulate_two_mixed_converges() {
    let out = dateiv(&[
        "simulate",
        "--builtin",
        "two-mixed",
        "--n",
        "100000",
        "--seed",
        "42",
        "--format",
        "json",
    ]);
    assert_eq!(code(&out), 0);
    let t = &json(&out)["trial"];
    let wald = t["wald_estimate"].as_f64().unwrap();
    let se = t["empirical_se"].as_f64().unwrap();
    assert!((wald - 0.6).abs() <= 3.0 * se, "wald {wald}, se {se}");
    assert_eq!(t["exact_date"].as_f64(), Some(0.6));
}

#[test]
fn simulate_writes_sample_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("samples.csv");
    let out = dateiv(&[
        "simulate",
        "--builtin",
        "two-mixed",
        "--n",
        "250",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 251);
    assert_eq!(lines[0], "indiv_id,assign,take,cure");
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        assert!(f[0] == "1" || f[0] == "2");
        assert!(f[1..].iter().all(|x| *x == "0" || *x == "1"));
    }
}

#[test]
fn simulate_seed_falls_back_to_environment() {
    let run = |env: Option<&str>, extra: &[&str]| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_dateiv"));
        c.args([
            "simulate",
            "--builtin",
            "two-mixed",
            "--n",
            "500",
            "--format",
            "json",
        ])
        .args(extra)
        .env_remove("DATEIV_SEED");
        if let Some(s) = env {
            c.env("DATEIV_SEED", s);
        }
        let out = c.output().unwrap();
        assert_eq!(code(&out), 0);
        json(&out)["trial"]["seed"].as_u64().unwrap()
    };
    assert_eq!(run(None, &[]), 42);
    assert_eq!(run(Some("7"), &[]), 7);
    assert_eq!(run(Some("7"), &["--seed", "9"]), 9);
}

#[test]
fn simulate_convergence_grid_has_one_row_per_run() {
    let out = dateiv(&[
        "simulate",
        "--builtin",
        "two-mixed",
        "--n",
        "100",
        "--ns",
        "1000,10000",
        "--format",
        "csv",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(
        text.lines().next(),
        Some("n,seed,wald_estimate,absolute_error")
    );
    assert_eq!(text.lines().count(), 1 + 2 * 5);
}

#[test]
fn simulate_convergence_requires_assumptions() {
    let out = dateiv(&[
        "simulate",
        "--builtin",
        "with-defier",
        "--n",
        "100",
        "--ns",
        "1000",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn do_query_examples() {
    let with_evidence = dateiv(&[
        "do-query",
        "--builtin",
        "two-mixed",
        "--do",
        "Take=1",
        "--evidence",
        "Indiv=1",
        "--target",
        "Cure=1",
    ]);
    assert_eq!(code(&with_evidence), 0);
    assert_eq!(
        stdout(&with_evidence).trim(),
        "P(Cure=1 | do(Take=1), Indiv=1) = 0.700000"
    );

    let marginal = dateiv(&[
        "do-query",
        "--builtin",
        "two-mixed",
        "--do",
        "Take=1",
        "--target",
        "Cure=1",
        "--format",
        "json",
    ]);
    assert_eq!(code(&marginal), 0);
    assert!((json(&marginal)["probability"].as_f64().unwrap() - 0.8).abs() < 1e-12);
}

#[test]
fn do_query_rejects_unknown_names_and_values() {
    let base = [
        "do-query",
        "--builtin",
        "two-mixed",
        "--do",
        "Take=1",
        "--target",
        "Cure=1",
    ];
    let with = |extra: &[&str]| {
        let mut args = base.to_vec();
        args.extend_from_slice(extra);
        code(&dateiv(&args))
    };
    assert_eq!(with(&["--evidence", "Cure=2"]), 1);
    assert_eq!(with(&["--evidence", "Mood=1"]), 1);
    assert_eq!(with(&["--evidence", "Indiv=9"]), 1);
    assert_eq!(with(&["--evidence", "garbage"]), 1);
}

#[test]
fn do_query_zero_probability_evidence_exits_two() {
    let out = dateiv(&[
        "do-query",
        "--builtin",
        "classic-late",
        "--do",
        "Take=1",
        "--evidence",
        "Take=1,Indiv=never-taker",
        "--target",
        "Cure=1",
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn generate_round_trips_through_verify() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("g.json");
    let net = dir.path().join("g.net.json");
    let out = dateiv(&[
        "generate",
        "--n",
        "12",
        "--seed",
        "5",
        "--no-defiers",
        "--force-complier",
        "--out",
        scen.to_str().unwrap(),
        "--net-out",
        net.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        code(&dateiv(&["verify", "--scenario", scen.to_str().unwrap()])),
        0
    );

    let via_net = dateiv(&[
        "do-query",
        "--net",
        net.to_str().unwrap(),
        "--do",
        "Take=1",
        "--target",
        "Cure=1",
        "--format",
        "json",
    ]);
    let via_scenario = dateiv(&[
        "do-query",
        "--scenario",
        scen.to_str().unwrap(),
        "--do",
        "Take=1",
        "--target",
        "Cure=1",
        "--format",
        "json",
    ]);
    assert_eq!(code(&via_net), 0);
    assert_eq!(
        json(&via_net)["probability"],
        json(&via_scenario)["probability"]
    );
}

#[test]
fn generate_is_seeded() {
    let a = dateiv(&["generate", "--n", "5", "--seed", "3"]);
    let b = dateiv(&["generate", "--n", "5", "--seed", "3"]);
    let c = dateiv(&["generate", "--n", "5", "--seed", "4"]);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    assert_eq!(code(&dateiv(&["generate", "--n", "0"])), 1);
}

#[test]
fn catalog_lists_builtins() {
    let out = dateiv(&["catalog", "--format", "json"]);
    assert_eq!(code(&out), 0);
    let names: Vec<String> = json(&out)
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["name"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(
        names,
        ["paper-coarse", "two-mixed", "classic-late", "with-defier"]
    );
}

#[test]
fn json_output_is_byte_identical_across_runs() {
    let commands: [&[&str]; 4] = [
        &["verify", "--builtin", "two-mixed", "--format", "json"],
        &["estimate", "--builtin", "classic-late", "--format", "json"],
        &[
            "simulate",
            "--builtin",
            "two-mixed",
            "--n",
            "2000",
            "--seed",
            "11",
            "--format",
            "json",
        ],
        &[
            "do-query",
            "--builtin",
            "two-mixed",
            "--do",
            "Take=0",
            "--target",
            "Cure=1",
            "--format",
            "json",
        ],
    ];
    for args in commands {
        let a = dateiv(args);
        let b = dateiv(args);
        assert_eq!(code(&a), 0);
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn table_output_uses_six_decimals() {
    let out = stdout(&dateiv(&["verify", "--builtin", "paper-coarse"]));
    assert!(out.contains("DATE                   0.500000"));
    assert!(out.contains("IV estimand            0.500000"));
}
