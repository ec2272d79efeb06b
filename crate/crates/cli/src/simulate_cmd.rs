//! `simulate`: Monte Carlo protocol executions.
//!
//! Protocol keys: `n`, `q`, `p` (required), `rounds` (required), `kappa`
//! (default 32), `eps` (default 0.1), `max_blocks`, `max_hashes`.
//!
//! Adversary keys: `adversary` = `none` | `classical` | `quantum_rate` |
//! `private_chain` (default `none`); `t` for classical; for quantum models
//! either `Q` or `Q_factor` (then `Q = floor(Q_factor * Q_max)` with `Q_max`
//! the honest-majority threshold at the exact `f`), `rate_mode` =
//! `worst_case` | `poisson` | `tail_coupled` (default `worst_case`),
//! `rate_window` (default: first typical window), `rate_eps` (default 0.1),
//! `release_threshold` (count or `never`, default 1).
//!
//! Check keys: `typical_windows` (default `2/f`), `common_prefix_k` and
//! `chain_quality_l` (count, `auto` = `ceil(2 s f)` with `s` the first
//! window, or `off`; default `auto`), `chain_quality_mu` (default `f`),
//! `span_k`, `z_tail_window` (default off).
//!
//! Acceptance keys (unset ones are not checked): `min_typical_pass_rate`,
//! `min_b_pass_rate`, `min_common_prefix_pass_rate`,
//! `max_common_prefix_pass_rate`, `min_chain_quality_pass_rate`,
//! `max_honest_rate_z`, `x_band_decreasing`, plus `min_delivery_pass_rate`
//! and `min_counters_pass_rate` (both default 1).
//!
//! `trace_dir` writes one NDJSON trace per trial.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use pqbackbone::backbone::OracleParams;
use pqbackbone::bounds::honest_majority_threshold;
use pqbackbone::execution::{
    run_trials_with, write_ndjson, AdversarySpec, CheckSpec, ExecutionConfig, ExecutionError,
    RateMode, TrialsReport,
};
use serde::Serialize;

use crate::config::KvConfig;
use crate::output;
use crate::{CliError, Format, Globals, Outcome};

#[derive(Debug, Clone, Serialize)]
struct Derived {
    p: f64,
    f: f64,
    /// Honest-majority threshold on `Q`.
    q_max: Option<f64>,
    adversary_queries: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
struct Criterion {
    name: String,
    value: f64,
    threshold: f64,
    passed: bool,
}

#[derive(Debug, Default)]
struct Thresholds {
    min_typical: Option<f64>,
    min_b: Option<f64>,
    min_cp: Option<f64>,
    max_cp: Option<f64>,
    min_cq: Option<f64>,
    max_z: Option<f64>,
    x_band_decreasing: bool,
    min_delivery: f64,
    min_counters: f64,
}

#[derive(Serialize)]
struct Report<'a> {
    derived: &'a Derived,
    passed: bool,
    acceptance: &'a [Criterion],
    report: &'a TrialsReport,
}

fn exec_err(e: ExecutionError) -> CliError {
    match e {
        ExecutionError::Resource(m) => CliError::Resource(m),
        other => CliError::Config(other.to_string()),
    }
}

/// `auto`, `off` or a count.
fn auto_count(cfg: &mut KvConfig, key: &str, auto: usize) -> Result<Option<usize>, CliError> {
    match cfg.string(key).as_deref() {
        None | Some("auto") => Ok(Some(auto)),
        Some("off") => Ok(None),
        Some(v) => v.parse().map(Some).map_err(|_| {
            CliError::Config(format!(
                "{key}: expected a count, `auto` or `off`, got {v:?}"
            ))
        }),
    }
}

struct Plan {
    config: ExecutionConfig,
    checks: CheckSpec,
    derived: Derived,
    thresholds: Thresholds,
    trace_dir: Option<PathBuf>,
}

fn plan(mut cfg: KvConfig, globals: &Globals) -> Result<Plan, CliError> {
    let n: u32 = cfg.require("n")?;
    let q: u32 = cfg.require("q")?;
    let p = cfg.require_real("p")?;
    let rounds: u64 = cfg.require("rounds")?;
    let kappa: u32 = cfg.parsed("kappa")?.unwrap_or(32);
    let eps = cfg.real("eps")?.unwrap_or(0.1);
    let oracle = OracleParams::with_probability(p, kappa, q, 0)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut config = ExecutionConfig::new(n, oracle, rounds, eps)
        .with_seed(globals.seed)
        .with_trials(globals.trials);
    if let Some(m) = cfg.parsed("max_blocks")? {
        config.max_blocks = m;
    }
    if let Some(m) = cfg.parsed("max_hashes")? {
        config.max_hashes = m;
    }
    let f = config.f();
    let p = config.p();

    let windows = cfg
        .windows("typical_windows", f)?
        .unwrap_or_else(|| vec![(2.0 / f).ceil() as u64]);
    let s = windows.first().copied().unwrap_or((2.0 / f).ceil() as u64);
    let auto = (2.0 * s as f64 * f).ceil() as usize;
    let checks = CheckSpec {
        typical_windows: windows,
        common_prefix_k: auto_count(&mut cfg, "common_prefix_k", auto)?,
        chain_quality_l: auto_count(&mut cfg, "chain_quality_l", auto)?,
        chain_quality_mu: Some(cfg.real("chain_quality_mu")?.unwrap_or(f)),
        span_k: cfg.parsed("span_k")?,
        z_tail_window: cfg.parsed("z_tail_window")?,
    };

    let kind = cfg.string("adversary").unwrap_or_else(|| "none".into());
    let q_max = if f > 0.0 && f < 1.0 {
        honest_majority_threshold(f, p, eps).ok()
    } else {
        None
    };
    let t: Option<u32> = cfg.parsed("t")?;
    let q_given: Option<u64> = cfg.parsed("Q")?;
    let q_factor = cfg.real("Q_factor")?;
    let rate_mode = cfg.string("rate_mode");
    let rate_window: u64 = cfg.parsed("rate_window")?.unwrap_or(s);
    let rate_eps = cfg.real("rate_eps")?.unwrap_or(0.1);
    let release = match cfg.string("release_threshold").as_deref() {
        None => Some(1),
        Some("never") => None,
        Some(v) => Some(v.parse().map_err(|_| {
            CliError::Config(format!(
                "release_threshold: expected a count or `never`, got {v:?}"
            ))
        })?),
    };
    let quantum_queries = || -> Result<u64, CliError> {
        match (q_given, q_factor) {
            (Some(q), None) => Ok(q),
            (None, Some(c)) => {
                let qm = q_max.ok_or_else(|| {
                    CliError::Config("Q_factor needs a defined honest-majority threshold".into())
                })?;
                Ok((c * qm).floor() as u64)
            }
            (Some(_), Some(_)) => Err(CliError::Config(
                "set either Q or Q_factor, not both".into(),
            )),
            (None, None) => Err(CliError::Config(
                "quantum adversaries need Q or Q_factor".into(),
            )),
        }
    };
    let mode = || -> Result<RateMode, CliError> {
        match rate_mode.as_deref() {
            None | Some("worst_case") => Ok(RateMode::WorstCase {
                window: rate_window,
            }),
            Some("poisson") => Ok(RateMode::Poisson),
            Some("tail_coupled") => Ok(RateMode::TailCoupled {
                window: rate_window,
            }),
            Some(o) => Err(CliError::Config(format!("unknown rate_mode {o:?}"))),
        }
    };
    let adversary = match kind.as_str() {
        "none" => AdversarySpec::None,
        "classical" => AdversarySpec::Classical {
            t: t.ok_or_else(|| CliError::Config("classical adversary needs t".into()))?,
        },
        "quantum_rate" => AdversarySpec::QuantumRate {
            queries: quantum_queries()?,
            mode: mode()?,
            rate_eps,
        },
        "private_chain" => AdversarySpec::PrivateChain {
            queries: quantum_queries()?,
            mode: mode()?,
            rate_eps,
            release_threshold: release,
        },
        other => return Err(CliError::Config(format!("unknown adversary {other:?}"))),
    };
    config = config.with_adversary(adversary);

    let thresholds = Thresholds {
        min_typical: cfg.real("min_typical_pass_rate")?,
        min_b: cfg.real("min_b_pass_rate")?,
        min_cp: cfg.real("min_common_prefix_pass_rate")?,
        max_cp: cfg.real("max_common_prefix_pass_rate")?,
        min_cq: cfg.real("min_chain_quality_pass_rate")?,
        max_z: cfg.real("max_honest_rate_z")?,
        x_band_decreasing: cfg.bool("x_band_decreasing")?.unwrap_or(false),
        min_delivery: cfg.real("min_delivery_pass_rate")?.unwrap_or(1.0),
        min_counters: cfg.real("min_counters_pass_rate")?.unwrap_or(1.0),
    };
    let trace_dir = cfg.string("trace_dir").map(PathBuf::from);
    cfg.finish()?;
    config.validate().map_err(exec_err)?;

    Ok(Plan {
        derived: Derived {
            p,
            f,
            q_max,
            adversary_queries: config.adversary.quantum_queries(),
        },
        config,
        checks,
        thresholds,
        trace_dir,
    })
}

fn at_least(name: String, value: f64, threshold: f64) -> Criterion {
    Criterion {
        passed: value >= threshold,
        name,
        value,
        threshold,
    }
}

fn at_most(name: String, value: f64, threshold: f64) -> Criterion {
    Criterion {
        passed: value <= threshold,
        name,
        value,
        threshold,
    }
}

fn evaluate(th: &Thresholds, rep: &TrialsReport) -> Vec<Criterion> {
    let a = &rep.aggregate;
    let mut out = vec![
        at_least(
            "delivery_pass_rate".into(),
            a.delivery_pass_rate,
            th.min_delivery,
        ),
        at_least(
            "counters_pass_rate".into(),
            a.counters_pass_rate,
            th.min_counters,
        ),
    ];
    for t in &a.typical {
        if let Some(m) = th.min_typical {
            out.push(at_least(
                format!("typical_pass_rate[s={}]", t.s),
                t.pass_rate,
                m,
            ));
        }
        if let Some(m) = th.min_b {
            out.push(at_least(
                format!("b_pass_rate[s={}]", t.s),
                t.b_pass_rate,
                m,
            ));
        }
    }
    let cp = a.common_prefix_pass_rate.unwrap_or(f64::NAN);
    if let Some(m) = th.min_cp {
        out.push(at_least("common_prefix_pass_rate".into(), cp, m));
    }
    if let Some(m) = th.max_cp {
        out.push(at_most("common_prefix_pass_rate".into(), cp, m));
    }
    if let Some(m) = th.min_cq {
        out.push(at_least(
            "chain_quality_pass_rate".into(),
            a.chain_quality_pass_rate.unwrap_or(f64::NAN),
            m,
        ));
    }
    if let Some(m) = th.max_z {
        out.push(at_most(
            "abs_honest_rate_z".into(),
            a.honest_rate_z.abs(),
            m,
        ));
    }
    if th.x_band_decreasing {
        let decreasing = a.typical.len() >= 2
            && a.typical
                .windows(2)
                .all(|w| w[1].x_band_fraction < w[0].x_band_fraction);
        out.push(Criterion {
            name: "x_band_fraction_strictly_decreasing".into(),
            value: if decreasing { 1.0 } else { 0.0 },
            threshold: 1.0,
            passed: decreasing,
        });
    }
    out
}

fn write_trace(
    dir: &std::path::Path,
    trial: u32,
    trace: &pqbackbone::execution::ExecutionTrace,
) -> Result<(), ExecutionError> {
    let io = |e: std::io::Error| ExecutionError::Resource(format!("writing trace: {e}"));
    let file = File::create(dir.join(format!("trial_{trial:05}.ndjson"))).map_err(io)?;
    write_ndjson(trace, BufWriter::new(file)).map_err(io)
}

pub fn run(cfg: KvConfig, globals: &Globals) -> Result<Outcome, CliError> {
    let plan = plan(cfg, globals)?;
    if let Some(dir) = &plan.trace_dir {
        std::fs::create_dir_all(dir)?;
    }
    let rep = run_trials_with(
        &plan.config,
        &plan.checks,
        globals.jobs,
        |i, trace| match &plan.trace_dir {
            Some(dir) => write_trace(dir, i, trace),
            None => Ok(()),
        },
    )
    .map_err(exec_err)?;
    let acceptance = evaluate(&plan.thresholds, &rep);
    let passed = acceptance.iter().all(|c| c.passed);

    let a = &rep.aggregate;
    let mut summary = format!(
        "simulate: {} trials x {} rounds, f = {:.6}, honest rate {:.6} (z = {:.3})\n",
        a.trials, plan.config.rounds, a.f, a.honest_rate_mean, a.honest_rate_z
    );
    for t in &a.typical {
        summary.push_str(&format!(
            "  s = {}: typical {:.4}, (b) {:.4}, (c) {:.4}, X-band fraction {:.4}\n",
            t.s, t.pass_rate, t.b_pass_rate, t.c_pass_rate, t.x_band_fraction
        ));
    }
    if let Some(cp) = a.common_prefix_pass_rate {
        summary.push_str(&format!("  common prefix pass rate {cp:.4}\n"));
    }
    if let Some(cq) = a.chain_quality_pass_rate {
        summary.push_str(&format!("  chain quality pass rate {cq:.4}\n"));
    }
    for c in &acceptance {
        summary.push_str(&format!(
            "  [{}] {} = {} (threshold {})\n",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        ));
    }

    let body = match globals.format.unwrap_or(Format::Json) {
        Format::Json => output::json(
            "simulate",
            &Report {
                derived: &plan.derived,
                passed,
                acceptance: &acceptance,
                report: &rep,
            },
        )?,
        Format::Csv => {
            let mut header: Vec<String> = [
                "trial",
                "trace_hash",
                "honest_success_rounds",
                "unique_success_rounds",
                "honest_pows",
                "adversary_pows",
                "anomalies",
                "honest_delivery",
                "counters_consistent",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect();
            for s in &plan.checks.typical_windows {
                header.push(format!("typical_s{s}"));
            }
            header.extend(
                [
                    "common_prefix",
                    "max_divergence",
                    "chain_quality",
                    "chain_quality_worst",
                ]
                .map(String::from),
            );
            let rows: Vec<Vec<String>> = rep
                .trials
                .iter()
                .map(|t| {
                    let mut r = vec![
                        t.trial.to_string(),
                        t.trace_hash.clone(),
                        t.honest_success_rounds.to_string(),
                        t.unique_success_rounds.to_string(),
                        t.honest_pows.to_string(),
                        t.adversary_pows.to_string(),
                        t.anomalies.to_string(),
                        t.honest_delivery.to_string(),
                        t.counters_consistent.to_string(),
                    ];
                    r.extend(t.typical.iter().map(|x| x.passed.to_string()));
                    r.push(output::opt(t.common_prefix.map(|c| c.passed)));
                    r.push(output::opt(t.common_prefix.map(|c| c.max_divergence)));
                    r.push(output::opt(t.chain_quality.map(|c| c.passed)));
                    r.push(output::opt_num(t.chain_quality.map(|c| c.worst_ratio)));
                    r
                })
                .collect();
            let head: Vec<&str> = header.iter().map(String::as_str).collect();
            output::csv(&head, &rows)?
        }
    };
    Ok(Outcome {
        body,
        summary,
        passed,
    })
}
