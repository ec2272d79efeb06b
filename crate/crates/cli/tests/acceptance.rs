//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs without the libtest harness so every line is printed under plain
//! `cargo test`. Exits non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use pqbackbone::bounds::{
    expected_optimal, gen1_bound, kbersearch_bound_exact, kbersearch_bound_stirling,
};
use pqbackbone::recording_sim::{reduction_consistency, ChainTask};
use tempfile::tempdir;

type Verdict = (bool, String);
type Criterion = (&'static str, fn() -> Verdict);

fn jobs() -> String {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .to_string()
}

fn within(elapsed: Duration, budget_s: u64) -> bool {
    elapsed <= Duration::from_secs(budget_s)
}

/// Exact <= Stirling form for 4 <= k <= N <= 200, p in 2^-2..2^-10, in log
/// domain with tolerance 1e-9, in under 10 s.
fn bound_ordering() -> Verdict {
    let start = Instant::now();
    let (mut points, mut bad) = (0u64, Vec::new());
    for e in 2..=10 {
        let p = 2f64.powi(-e);
        for n in 4..=200u64 {
            for k in 4..=n {
                points += 1;
                let exact = kbersearch_bound_exact(n, k, p).unwrap().log_raw;
                let stirling = kbersearch_bound_stirling(n, k, p).unwrap().log_raw;
                if exact > stirling + 1e-9 {
                    bad.push((e, n, k, exact - stirling));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let worst = bad.iter().map(|b| b.3).fold(0.0, f64::max);
    let first: Vec<String> = bad
        .iter()
        .take(4)
        .map(|(e, n, k, _)| format!("(p=2^-{e}, N={n}, k={k})"))
        .collect();
    (
        bad.is_empty() && within(elapsed, 10),
        format!(
            "{} of {points} points violate, worst log excess {worst:.4}, e.g. {}; {:.2?} (budget 10 s)",
            bad.len(),
            first.join(" "),
            elapsed
        ),
    )
}

/// Recording-oracle lemma suite on the default grid, zero violations among
/// the listed checks, in under 5 min.
fn lemma_suite() -> Verdict {
    const LISTED: [&str; 8] = [
        "up_unitarity",
        "norm_preservation",
        "domain_equivalence",
        "classical_mixture",
        "progress_recurrence",
        "beta_cases",
        "progress_bound",
        "final_bound",
    ];
    let start = Instant::now();
    let r = run(&["verify-oracle", "--jobs", &jobs()]);
    let elapsed = start.elapsed();
    let v = json(&r.stdout);
    let checks = v["report"]["checks"].as_array().unwrap();
    let mut failing = Vec::new();
    let mut missing = Vec::new();
    for name in LISTED {
        match checks.iter().find(|c| c["name"] == name) {
            Some(c) if c["violations"] == 0 && c["cases"].as_u64().unwrap() > 0 => {}
            Some(c) => failing.push(format!("{name}: {} of {}", c["violations"], c["cases"])),
            None => missing.push(name),
        }
    }
    let slack = v["report"]["max_recurrence_slack"]
        .as_f64()
        .unwrap_or(f64::NAN);
    (
        failing.is_empty() && missing.is_empty() && slack <= 1e-9 && within(elapsed, 300),
        format!(
            "violations [{}], missing [{}], max recurrence slack {slack:e}; {:.2?} (budget 300 s)",
            failing.join(", "),
            missing.join(", "),
            elapsed
        ),
    )
}

/// Sequential classical success on the chained task never exceeds the
/// k-BerSearch bound at budget N + k, exactly at m <= 3.
fn reduction() -> Verdict {
    let mut tasks = Vec::new();
    for m in 1..=3 {
        for k in 1..=3 {
            for p in [0.1f64, 0.25, 0.5] {
                tasks.push(ChainTask { m, k, p });
            }
        }
    }
    let rows = reduction_consistency(&tasks, 12).unwrap();
    let broken = rows.iter().filter(|r| !r.holds).count();
    let enum_gap = rows
        .iter()
        .filter_map(|r| r.enumerated.map(|e| (e - r.success).abs()))
        .fold(0.0, f64::max);
    let checked = rows.iter().filter(|r| r.enumerated.is_some()).count();
    let max_ratio = rows.iter().map(|r| r.success / r.bound).fold(0.0, f64::max);
    (
        broken == 0 && enum_gap < 1e-12,
        format!(
            "{broken} of {} rows exceed the bound, max success/bound {max_ratio:.4}, enumeration gap {enum_gap:e} over {checked} rows",
            rows.len()
        ),
    )
}

/// Honest-only: mean rate within 3 sigma of 1-(1-p)^(nq); X-band violation
/// fraction strictly decreasing over s = 2/f, 4/f, 8/f; under 2 min.
fn honest_only() -> Verdict {
    let dir = tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "c4.cfg",
        "n = 16\nq = 4\np = 1e-3\nrounds = 10000\neps = 0.5\n\
         typical_windows = 2/f, 4/f, 8/f\ncommon_prefix_k = off\nchain_quality_l = off\n\
         max_honest_rate_z = 3\nx_band_decreasing = true\n",
    );
    let start = Instant::now();
    let r = run(&[
        "simulate",
        "--config",
        &cfg,
        "--trials",
        "32",
        "--seed",
        "1",
        "--jobs",
        &jobs(),
    ]);
    let elapsed = start.elapsed();
    let v = json(&r.stdout);
    let a = &v["report"]["aggregate"];
    let f = a["f"].as_f64().unwrap();
    // the oracle realises p as a multiple of 2^-kappa; compare at that p
    let p = v["derived"]["p"].as_f64().unwrap();
    assert!(rel(p, 1e-3) < 1e-6);
    let want = 1.0 - (1.0 - p).powi(64);
    let bands: Vec<String> = a["typical"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| format!("s={} {:.4}", t["s"], t["x_band_fraction"].as_f64().unwrap()))
        .collect();
    (
        r.code == 0 && rel(f, want) < 1e-12 && within(elapsed, 120),
        format!(
            "mean {:.5} vs {want:.5}, z = {:.3}; X-band fractions {}; {:.2?} (budget 120 s)",
            a["honest_rate_mean"].as_f64().unwrap(),
            a["honest_rate_z"].as_f64().unwrap(),
            bands.join(", "),
            elapsed
        ),
    )
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Adversary comparison rows at f = 0.03, p = 1e-6, eps = 0.1 against the
/// closed forms (1e-12 relative) and the golden report.
fn comparison_rows() -> Verdict {
    let dir = tempdir().unwrap();
    let cfg = config(dir.path(), "c5.cfg", COMPARE_CONFIG);
    let r = run(&["compare", "--config", &cfg]);
    let v = json(&r.stdout);
    let t = &v["table"];
    let (f, p, eps, q_adv, s, t_adv, q) = (0.03f64, 1e-6f64, 0.1f64, 8.0, 1000.0, 30.0, 1.0);
    let e = std::f64::consts::E;
    let threshold = (1.0 - eps) * f * (1.0 - f) / ((1.0 + eps) * e * p.sqrt());
    let checks = [
        (
            "threshold",
            t["honest_majority_quantum"]["threshold"].as_f64().unwrap(),
            threshold,
        ),
        (
            "quantum_pows",
            t["max_expected_adv_pows_quantum"].as_f64().unwrap(),
            (1.0 + eps) * e * p.sqrt() * q_adv * s,
        ),
        (
            "classical_pows",
            t["max_expected_adv_pows_classical"].as_f64().unwrap(),
            p * q * t_adv * s,
        ),
        (
            "classical_exponent",
            t["concentration_exponent_classical"].as_f64().unwrap(),
            eps * eps * f * s,
        ),
        (
            "quantum_exponent",
            t["concentration_exponent_quantum"].as_f64().unwrap(),
            (1.0 - eps) * f * (1.0 - f) * s,
        ),
        (
            "classical_lhs",
            t["honest_majority_classical"]["lhs"].as_f64().unwrap(),
            t_adv / (100.0 - t_adv),
        ),
        (
            "classical_rhs",
            t["honest_majority_classical"]["rhs"].as_f64().unwrap(),
            1.0 - 3.0 * (f + eps),
        ),
    ];
    let worst = checks
        .iter()
        .map(|(_, got, want)| rel(*got, *want))
        .fold(0.0, f64::max);
    let golden = std::fs::read_to_string(golden_dir().join("compare.json")).unwrap_or_default();
    let golden_ok = r.stdout == golden;
    (
        r.code == 0 && worst <= 1e-12 && golden_ok,
        format!(
            "threshold {:.6}, worst relative error {worst:e}, golden match {golden_ok}",
            checks[0].1
        ),
    )
}

/// Expected-optimal values, Gen1 bound values and the exact ratio 8.
fn expected_optimal_values() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut ratio_exact = true;
    for (n, p) in [(1000u64, 1e-4f64), (250, 0.01), (10_000, 1e-6)] {
        let eo = expected_optimal(n, p);
        let e = std::f64::consts::E;
        worst = worst
            .max(rel(eo.gen2, e * p.sqrt() * n as f64))
            .max(rel(eo.nons, (8.0 * p).sqrt() * n as f64))
            .max(rel(eo.gen1, 8.0 * e * p.sqrt() * n as f64));
        ratio_exact &= eo.gen1 / eo.gen2 == 8.0;
        for k in [10u64, 40, 100] {
            let direct = 2.0 * (8.0 * e * n as f64 * p.sqrt() / k as f64).powi(k as i32)
                + 0.5f64.powi(k as i32);
            worst = worst.max(rel(gen1_bound(n, k, p).unwrap().raw, direct));
        }
    }
    // 50-digit reference at N = 1000, p = 1e-4
    let frozen = [
        (10u64, 47301475117578.75),
        (40, 5.176176757889199e29),
        (100, 1.095_158_265_296_18e34),
    ];
    for (k, want) in frozen {
        worst = worst.max(rel(gen1_bound(1000, k, 1e-4f64).unwrap().raw, want));
    }
    (
        worst <= 1e-10 && ratio_exact,
        format!("worst relative error {worst:e}, ratio exactly 8: {ratio_exact}"),
    )
}

/// Common prefix and chain quality hold in >= 99% of 1000 trials with
/// Q = floor(Q_max); a private chain at 20 Q_max breaks common prefix in
/// >= 50% of trials; under 10 min.
fn protocol_properties() -> Verdict {
    let dir = tempdir().unwrap();
    let common = "n = 8\nq = 40\np = 2^-10\neps = 0.1\ntypical_windows = 20\n\
                  rate_mode = worst_case\nrate_window = 20\nrate_eps = 0.1\n";
    let honest = config(
        dir.path(),
        "c7a.cfg",
        &format!(
            "{common}rounds = 200\nadversary = quantum_rate\nQ_factor = 1\n\
             min_common_prefix_pass_rate = 0.99\nmin_chain_quality_pass_rate = 0.99\n"
        ),
    );
    let attack = config(
        dir.path(),
        "c7b.cfg",
        &format!(
            "{common}rounds = 150\nadversary = private_chain\nQ_factor = 20\n\
             release_threshold = 200\nchain_quality_l = off\nmax_common_prefix_pass_rate = 0.5\n"
        ),
    );
    let start = Instant::now();
    let a = run(&[
        "simulate",
        "--config",
        &honest,
        "--trials",
        "1000",
        "--seed",
        "7",
        "--jobs",
        &jobs(),
    ]);
    let b = run(&[
        "simulate",
        "--config",
        &attack,
        "--trials",
        "200",
        "--seed",
        "7",
        "--jobs",
        &jobs(),
    ]);
    let elapsed = start.elapsed();
    let va = json(&a.stdout);
    let vb = json(&b.stdout);
    let aa = &va["report"]["aggregate"];
    (
        a.code == 0 && b.code == 0 && within(elapsed, 600),
        format!(
            "Q = {} (Q_max {:.4}), k = l = {}: common prefix {}, chain quality {}; attack Q = {}: common prefix {}; {:.2?} (budget 600 s)",
            va["derived"]["adversary_queries"],
            va["derived"]["q_max"].as_f64().unwrap(),
            va["report"]["checks"]["common_prefix_k"],
            aa["common_prefix_pass_rate"],
            aa["chain_quality_pass_rate"],
            vb["derived"]["adversary_queries"],
            vb["report"]["aggregate"]["common_prefix_pass_rate"],
            elapsed
        ),
    )
}

/// Every command replayed with the same config and seed gives identical
/// bytes, also when the worker count changes.
fn determinism() -> Verdict {
    let dir = tempdir().unwrap();
    let bounds = config(
        dir.path(),
        "b.cfg",
        "p = 2^-2..2^-6\nN = 4..40\nk = 4, 8, 16\n",
    );
    let compare = config(dir.path(), "c.cfg", COMPARE_CONFIG);
    let sim = config(
        dir.path(),
        "s.cfg",
        "n = 6\nq = 3\np = 2^-7\nrounds = 500\nadversary = private_chain\nQ = 3\n\
         rate_mode = tail_coupled\nrelease_threshold = 2\nz_tail_window = 30\n",
    );
    let verify = config(
        dir.path(),
        "v.cfg",
        "ms = 1, 2\nps = 0.25\nmax_queries = 3\nstrategies = grover_k1, random_circuit(3)\n",
    );
    let cases: [(&str, &str, &[&str]); 5] = [
        ("bounds", &bounds, &[]),
        ("bounds", &bounds, &["--format", "json"]),
        ("compare", &compare, &[]),
        ("simulate", &sim, &["--trials", "8", "--seed", "3"]),
        ("verify-oracle", &verify, &["--seed", "3"]),
    ];
    let mut bad = Vec::new();
    for (cmd, cfg, extra) in cases {
        let outputs: Vec<String> = ["1", "1", "4"]
            .iter()
            .map(|j| {
                let mut args = vec![cmd, "--config", cfg, "--jobs", j];
                args.extend_from_slice(extra);
                run(&args).stdout
            })
            .collect();
        let parses = if outputs[0].starts_with('{') {
            serde_json::from_str::<serde_json::Value>(&outputs[0]).is_ok()
        } else {
            csv::Reader::from_reader(outputs[0].as_bytes())
                .records()
                .all(|r| r.is_ok())
        };
        if outputs[0].is_empty() || outputs[0] != outputs[1] || outputs[0] != outputs[2] || !parses
        {
            bad.push(format!("{cmd} {extra:?}"));
        }
    }
    (
        bad.is_empty(),
        format!(
            "{} command variants replayed at --jobs 1, 1, 4; mismatches [{}]",
            cases.len(),
            bad.join(", ")
        ),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("bound ordering", bound_ordering),
        ("recording-oracle lemmas", lemma_suite),
        ("reduction consistency", reduction),
        ("honest-only simulation", honest_only),
        ("adversary comparison rows", comparison_rows),
        ("expected-optimal values", expected_optimal_values),
        ("protocol properties", protocol_properties),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| (false, "panicked".to_string()));
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {} ({name}): {} | {detail}",
            i + 1,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "acceptance: {} of {} criteria pass",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
