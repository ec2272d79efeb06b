mod common;

use common::*;
use tempfile::tempdir;

#[test]
fn bounds_single_point_csv() {
    let r = run(&["bounds", "--set", "p=0.25", "--set", "N=0", "--set", "k=1"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let mut rd = csv::Reader::from_reader(r.stdout.as_bytes());
    let head = rd.headers().unwrap().clone();
    assert_eq!(&head[0], "schema_version");
    assert_eq!(
        head.iter().skip(1).take(10).collect::<Vec<_>>(),
        [
            "p",
            "N",
            "k",
            "eps",
            "exact",
            "exact_log",
            "stirling",
            "stirling_log",
            "chain",
            "exp_form"
        ]
    );
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    let exact: f64 = rows[0][5].parse().unwrap();
    assert!((exact - 0.75).abs() < 1e-12);
    assert_eq!(&rows[0][7], "", "Stirling form undefined at k < 4");
}

#[test]
fn bounds_ordering_violation_exits_1() {
    let r = run(&[
        "bounds", "--set", "p=0.25", "--set", "N=4..6", "--set", "k=4", "--format", "json",
    ]);
    assert_eq!(r.code, 1);
    let v = json(&r.stdout);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["violations"], 1);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows[0]["ordering_ok"], false);
    assert_eq!(rows[1]["ordering_ok"], true);
}

#[test]
fn bounds_config_errors_exit_2() {
    for args in [
        vec![
            "bounds", "--set", "p=0.25", "--set", "N=5..4", "--set", "k=1",
        ],
        vec!["bounds", "--set", "p=0.25", "--set", "N=3"],
        vec!["bounds", "--set", "p=1.5", "--set", "N=3", "--set", "k=1"],
        vec![
            "bounds",
            "--set",
            "p=0.25",
            "--set",
            "N=3",
            "--set",
            "k=1",
            "--set",
            "colour=red",
        ],
        vec!["bounds", "--config", "/nonexistent/pq.cfg"],
        vec!["bounds", "--format", "yaml"],
    ] {
        let r = run(&args);
        assert_eq!(r.code, 2, "{args:?}: {}", r.stderr);
    }
}

#[test]
fn flags_override_config_and_env() {
    let dir = tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "b.cfg",
        "p = 0.25\nN = 8\nk = 4\nformat = json\n",
    );
    let r = run(&["bounds", "--config", &cfg]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.starts_with('{'));
    let r = run(&["bounds", "--config", &cfg, "--format", "csv"]);
    assert!(r.stdout.starts_with("schema_version,"));
    let mut c = bin();
    c.args(["bounds", "--config", &cfg])
        .env("PQBACKBONE_FORMAT", "csv");
    assert!(run_cmd(c).stdout.starts_with("schema_version,"));
    let mut c = bin();
    c.args(["bounds"]).env("PQBACKBONE_CONFIG", &cfg);
    assert_eq!(run_cmd(c).code, 0);
}

#[test]
fn out_flag_writes_the_report_file() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("nested/b.csv");
    let r = run(&[
        "bounds",
        "--set",
        "p=0.5",
        "--set",
        "N=10",
        "--set",
        "k=4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.is_empty());
    assert!(std::fs::read_to_string(out)
        .unwrap()
        .starts_with("schema_version,"));
}

#[test]
fn compare_matches_golden_files() {
    let dir = tempdir().unwrap();
    let cfg = config(dir.path(), "c.cfg", COMPARE_CONFIG);
    let r = run(&["compare", "--config", &cfg]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let text = r
        .stderr
        .lines()
        .filter(|l| !l.starts_with("report sha256"))
        .collect::<Vec<_>>()
        .join("\n")
        + "\n";
    let g = golden_dir();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(g.join("compare.json"), &r.stdout).unwrap();
        std::fs::write(g.join("compare.txt"), &text).unwrap();
    }
    assert_eq!(
        r.stdout,
        std::fs::read_to_string(g.join("compare.json")).unwrap()
    );
    assert_eq!(
        text,
        std::fs::read_to_string(g.join("compare.txt")).unwrap()
    );
}

#[test]
fn compare_classical_row_and_csv() {
    let r = run(&[
        "compare", "--set", "p=1e-6", "--set", "eps=0.1", "--set", "n=100", "--set", "t=30",
        "--set", "q=100", "--set", "Q=8", "--set", "s=100",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v = json(&r.stdout);
    // f = n p q = 0.01 under the default convention
    assert!((v["params"]["f"].as_f64().unwrap() - 0.01).abs() < 1e-15);
    let c = &v["table"]["honest_majority_classical"];
    assert!((c["lhs"].as_f64().unwrap() - 30.0 / 70.0).abs() < 1e-15);
    assert!((c["rhs"].as_f64().unwrap() - (1.0 - 3.0 * 0.11)).abs() < 1e-15);
    assert_eq!(c["holds"], true);

    let r = run(&[
        "compare", "--set", "p=1e-6", "--set", "eps=0.1", "--set", "n=100", "--set", "t=30",
        "--set", "q=100", "--set", "Q=8", "--set", "s=100", "--set", "ks=5,10", "--format", "csv",
    ]);
    let lines: Vec<&str> = r.stdout.lines().collect();
    assert_eq!(
        lines[0],
        "schema_version,N,k,gen1,gen1_clamped,gen2_exact,gen2_exact_clamped"
    );
    assert_eq!(lines.len(), 3);
}

#[test]
fn compare_missing_parameter_exits_2() {
    let r = run(&["compare", "--set", "p=1e-6", "--set", "eps=0.1"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("missing required key"));
}

const HONEST: &str = "\
n = 8
q = 4
p = 2^-8
rounds = 1500
eps = 0.5
min_common_prefix_pass_rate = 1
min_chain_quality_pass_rate = 1
";

#[test]
fn simulate_honest_smoke() {
    let dir = tempdir().unwrap();
    let cfg = config(dir.path(), "h.cfg", HONEST);
    let r = run(&["simulate", "--config", &cfg, "--trials", "3", "--seed", "9"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v = json(&r.stdout);
    assert_eq!(v["passed"], true);
    let a = &v["report"]["aggregate"];
    assert_eq!(a["common_prefix_pass_rate"], 1.0);
    assert_eq!(a["chain_quality_pass_rate"], 1.0);
    assert_eq!(a["delivery_pass_rate"], 1.0);
    assert_eq!(v["report"]["trials"].as_array().unwrap().len(), 3);
}

#[test]
fn simulate_boundary_worst_case_keeps_condition_b() {
    let r = run(&[
        "simulate",
        "--trials",
        "5",
        "--set",
        "n=8",
        "--set",
        "q=40",
        "--set",
        "p=2^-10",
        "--set",
        "rounds=200",
        "--set",
        "typical_windows=20",
        "--set",
        "adversary=quantum_rate",
        "--set",
        "Q_factor=1",
        "--set",
        "min_b_pass_rate=1",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v = json(&r.stdout);
    assert_eq!(v["derived"]["adversary_queries"], 1);
    assert_eq!(v["report"]["aggregate"]["typical"][0]["b_pass_rate"], 1.0);
}

#[test]
fn simulate_unmet_threshold_exits_1() {
    let r = run(&[
        "simulate",
        "--trials",
        "2",
        "--set",
        "n=8",
        "--set",
        "q=40",
        "--set",
        "p=2^-10",
        "--set",
        "rounds=150",
        "--set",
        "typical_windows=20",
        "--set",
        "adversary=private_chain",
        "--set",
        "Q_factor=20",
        "--set",
        "release_threshold=200",
        "--set",
        "chain_quality_l=off",
        "--set",
        "min_common_prefix_pass_rate=1",
    ]);
    assert_eq!(r.code, 1, "{}", r.stderr);
    assert!(r.stderr.contains("[FAIL] common_prefix_pass_rate"));
}

#[test]
fn simulate_config_and_resource_errors() {
    let base = [
        "simulate", "--set", "n=4", "--set", "q=2", "--set", "p=0.01",
    ];
    let with = |extra: &[&str]| {
        let mut a: Vec<&str> = base.to_vec();
        a.extend_from_slice(extra);
        run(&a)
    };
    assert_eq!(with(&["--set", "rounds=100000000000"]).code, 3);
    assert_eq!(
        with(&["--set", "rounds=500", "--set", "adversary=wizard"]).code,
        2
    );
    assert_eq!(
        with(&["--set", "rounds=500", "--set", "adversary=quantum_rate"]).code,
        2
    );
    assert_eq!(
        with(&["--set", "rounds=5"]).code,
        2,
        "too short for the checks"
    );
    assert_eq!(with(&["--set", "rounds=500", "--set", "eps=1.5"]).code, 2);
}

#[test]
fn simulate_replay_and_jobs_are_byte_identical() {
    let dir = tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "a.cfg",
        "n = 6\nq = 3\np = 2^-7\nrounds = 600\nadversary = quantum_rate\nQ = 2\nrate_mode = poisson\nz_tail_window = 40\n",
    );
    let a = run(&[
        "simulate", "--config", &cfg, "--trials", "6", "--seed", "4", "--jobs", "1",
    ]);
    let b = run(&[
        "simulate", "--config", &cfg, "--trials", "6", "--seed", "4", "--jobs", "4",
    ]);
    let c = run(&[
        "simulate", "--config", &cfg, "--trials", "6", "--seed", "5", "--jobs", "4",
    ]);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    let d = run(&[
        "simulate", "--config", &cfg, "--trials", "6", "--seed", "4", "--format", "csv",
    ]);
    let rows: Vec<&str> = d.stdout.lines().collect();
    assert_eq!(rows.len(), 7);
    assert!(rows[0].starts_with("schema_version,trial,trace_hash"));
}

#[test]
fn simulate_trace_dir_exports_hashable_traces() {
    let dir = tempdir().unwrap();
    let traces = dir.path().join("traces");
    let r = run(&[
        "simulate",
        "--trials",
        "2",
        "--set",
        "n=3",
        "--set",
        "q=2",
        "--set",
        "p=2^-5",
        "--set",
        "rounds=120",
        "--set",
        "adversary=classical",
        "--set",
        "t=1",
        "--set",
        &format!("trace_dir={}", traces.display()),
    ]);
    assert!(r.code == 0 || r.code == 1, "{}", r.stderr);
    let v = json(&r.stdout);
    for (i, t) in v["report"]["trials"].as_array().unwrap().iter().enumerate() {
        let bytes = std::fs::read(traces.join(format!("trial_{i:05}.ndjson"))).unwrap();
        let hex: String = <sha2::Sha256 as sha2::Digest>::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        assert_eq!(t["trace_hash"].as_str().unwrap(), hex);
        let text = String::from_utf8(bytes).unwrap();
        let events: Vec<serde_json::Value> = text.lines().map(json).collect();
        assert_eq!(events[0]["event"], "meta");
        assert_eq!(events.iter().filter(|e| e["event"] == "round").count(), 120);
    }
}

const SMALL_GRID: &str = "\
ms = 1
ps = 0.25
max_queries = 2
out_ks = 1
strategies = grover_k1, classical_distinct_queries
";

#[test]
fn verify_oracle_small_grid_passes() {
    let dir = tempdir().unwrap();
    let cfg = config(dir.path(), "v.cfg", SMALL_GRID);
    let r = run(&["verify-oracle", "--config", &cfg]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v = json(&r.stdout);
    assert_eq!(v["passed"], true);
    assert!(v["report"]["max_recurrence_slack"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn verify_oracle_injected_sign_error_exits_1() {
    let dir = tempdir().unwrap();
    let cfg = config(dir.path(), "v.cfg", SMALL_GRID);
    let r = run(&[
        "verify-oracle",
        "--config",
        &cfg,
        "--set",
        "inject_fault=up_sign_error",
    ]);
    assert_eq!(r.code, 1);
    let v = json(&r.stdout);
    let checks = v["report"]["checks"].as_array().unwrap();
    let unitarity = checks.iter().find(|c| c["name"] == "up_unitarity").unwrap();
    assert!(unitarity["violations"].as_u64().unwrap() > 0);
    assert!(unitarity["first_violation"]["case"].is_string());
}

#[test]
fn verify_oracle_rejects_oversized_m() {
    assert_eq!(run(&["verify-oracle", "--set", "ms=9"]).code, 2);
    assert_eq!(run(&["verify-oracle", "--set", "strategies=magic"]).code, 2);
}
