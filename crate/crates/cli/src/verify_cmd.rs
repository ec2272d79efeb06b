//! `verify-oracle`: the recording-oracle lemma suite over a grid.
//!
//! Keys (defaults in brackets): `ms` [1, 2, 3], `ps` [0.1, 0.25, 0.5],
//! `max_queries` [6], `out_ks` [1, 2], `strategies`
//! [classical_distinct_queries, grover_k1, random_circuit(0),
//! random_circuit(1)], `random_states` [3], `max_dim` [2^21],
//! `inject_fault` = `none` | `up_sign_error` [none]. The global seed seeds
//! the random states.

use pqbackbone::recording_sim::{
    verify_suite, Fault, SimError, Strategy, VerificationReport, VerifyGrid,
};
use serde::Serialize;

use crate::config::KvConfig;
use crate::output;
use crate::{CliError, Format, Globals, Outcome};

/// `m` beyond this needs more memory than a desk machine offers.
const M_CAP: u32 = 4;

#[derive(Serialize)]
struct Report<'a> {
    grid: &'a VerifyGrid,
    passed: bool,
    report: &'a VerificationReport,
}

fn grid(mut cfg: KvConfig, globals: &Globals) -> Result<VerifyGrid, CliError> {
    let mut g = VerifyGrid {
        seed: globals.seed,
        ..VerifyGrid::default()
    };
    if let Some(ms) = cfg.counts("ms")? {
        g.ms = ms
            .into_iter()
            .map(|m| u32::try_from(m).map_err(|_| CliError::Config(format!("m = {m} too large"))))
            .collect::<Result<_, _>>()?;
    }
    if let Some(ps) = cfg.reals("ps")? {
        g.ps = ps;
    }
    if let Some(n) = cfg.parsed("max_queries")? {
        g.max_queries = n;
    }
    if let Some(ks) = cfg.counts("out_ks")? {
        g.out_ks = ks.into_iter().map(|k| k as u32).collect();
    }
    if let Some(items) = cfg.items("strategies") {
        g.strategies = items
            .iter()
            .map(|s| {
                s.parse::<Strategy>()
                    .map_err(|e| CliError::Config(e.to_string()))
            })
            .collect::<Result<_, _>>()?;
    }
    if let Some(r) = cfg.parsed("random_states")? {
        g.random_states = r;
    }
    if let Some(d) = cfg.real("max_dim")? {
        g.max_dim = d as usize;
    }
    g.fault = match cfg.string("inject_fault").as_deref() {
        None | Some("none") => None,
        Some("up_sign_error") => Some(Fault::UpSignError),
        Some(o) => return Err(CliError::Config(format!("unknown inject_fault {o:?}"))),
    };
    cfg.finish()?;
    if g.ms.is_empty() || g.ps.is_empty() || g.out_ks.is_empty() || g.strategies.is_empty() {
        return Err(CliError::Config("empty verification grid".into()));
    }
    if let Some(&m) = g.ms.iter().find(|&&m| m == 0 || m > M_CAP) {
        return Err(CliError::Config(format!("m = {m} outside 1..={M_CAP}")));
    }
    Ok(g)
}

pub fn run(cfg: KvConfig, globals: &Globals) -> Result<Outcome, CliError> {
    let g = grid(cfg, globals)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(globals.jobs)
        .build()
        .map_err(|e| CliError::Resource(format!("thread pool: {e}")))?;
    let report = pool.install(|| verify_suite(&g)).map_err(|e| match e {
        SimError::OverBudget { .. } => CliError::Resource(e.to_string()),
        other => CliError::Config(other.to_string()),
    })?;
    let passed = report.passed();

    let mut summary = format!(
        "verify-oracle: {} runs ({} skipped), max recurrence slack {:e}\n",
        report.runs, report.skipped, report.max_recurrence_slack
    );
    for c in &report.checks {
        summary.push_str(&format!(
            "  [{}] {}: {} cases, {} violations, worst {:e} (tol {:e})\n",
            if c.passed() { "pass" } else { "FAIL" },
            c.name,
            c.cases,
            c.violations,
            c.worst,
            c.tolerance
        ));
        if let Some(v) = &c.first_violation {
            summary.push_str(&format!("      first: {} ({})\n", v.case, v.detail));
        }
    }

    let body = match globals.format.unwrap_or(Format::Json) {
        Format::Json => output::json(
            "verify-oracle",
            &Report {
                grid: &g,
                passed,
                report: &report,
            },
        )?,
        Format::Csv => {
            let rows: Vec<Vec<String>> = report
                .checks
                .iter()
                .map(|c| {
                    vec![
                        c.name.clone(),
                        output::num(c.tolerance),
                        c.cases.to_string(),
                        c.violations.to_string(),
                        output::num(c.worst),
                        c.passed().to_string(),
                    ]
                })
                .collect();
            output::csv(
                &[
                    "check",
                    "tolerance",
                    "cases",
                    "violations",
                    "worst",
                    "passed",
                ],
                &rows,
            )?
        }
    };
    Ok(Outcome {
        body,
        summary,
        passed,
    })
}
