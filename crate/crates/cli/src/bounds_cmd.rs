//! `bounds`: k-BerSearch and Chain-of-PoWs bounds over a grid.
//!
//! Keys: `p` (reals, required), `N` and `k` (counts, required), `eps`
//! (reals, default `0.5`). Grid order is p, N, k, eps, outermost first.
//! A point where the exact bound exceeds the Stirling form by more than
//! 1e-9 in log domain is a violation (exit 1).

use pqbackbone::bounds::{
    chain_of_pows_bound, kbersearch_bound_exact, kbersearch_bound_stirling, typical_execution_tail,
    BoundValue,
};
use serde::Serialize;

use crate::config::KvConfig;
use crate::output::{self, num, opt, opt_num};
use crate::{CliError, Format, Globals, Outcome};

pub const ORDERING_TOL: f64 = 1e-9;

#[derive(Debug, Serialize)]
struct Row {
    p: f64,
    #[serde(rename = "N")]
    n: u64,
    k: u64,
    eps: f64,
    exact: BoundValue<f64>,
    /// Absent outside `4 <= k <= N`.
    stirling: Option<BoundValue<f64>>,
    chain: BoundValue<f64>,
    exp_form: BoundValue<f64>,
    /// `exp(-2e(1+eps) N sqrt(p) ...)` with one query per round over `N`
    /// rounds; absent when eps is below its validity floor.
    typical_tail: Option<BoundValue<f64>>,
    /// `exact <= stirling` in log domain; absent where Stirling is undefined.
    ordering_ok: Option<bool>,
}

#[derive(Serialize)]
struct Report<'a> {
    tolerance: f64,
    points: usize,
    violations: usize,
    rows: &'a [Row],
}

fn check_p(p: f64) -> Result<(), CliError> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "p = {p} must lie strictly between 0 and 1"
        )))
    }
}

fn row(p: f64, n: u64, k: u64, eps: f64) -> Result<Row, CliError> {
    let err = |e: pqbackbone::bounds::BoundsError| CliError::Config(e.to_string());
    let exact = kbersearch_bound_exact(n, k, p).map_err(err)?;
    let stirling = kbersearch_bound_stirling(n, k, p).ok();
    let chain = chain_of_pows_bound(n, k, p).map_err(err)?;
    Ok(Row {
        p,
        n,
        k,
        eps,
        exact,
        stirling,
        chain: chain.closed,
        exp_form: chain.exponential,
        typical_tail: typical_execution_tail(n, 1, p, eps).ok(),
        ordering_ok: stirling.map(|s| exact.log_raw <= s.log_raw + ORDERING_TOL),
    })
}

pub fn run(mut cfg: KvConfig, globals: &Globals) -> Result<Outcome, CliError> {
    let missing = |k: &str| CliError::Config(format!("missing required key {k}"));
    let ps = cfg.reals("p")?.ok_or_else(|| missing("p"))?;
    let ns = cfg.counts("N")?.ok_or_else(|| missing("N"))?;
    let ks = cfg.counts("k")?.ok_or_else(|| missing("k"))?;
    let epss = cfg.reals("eps")?.unwrap_or_else(|| vec![0.5]);
    cfg.finish()?;
    if ps.is_empty() || ns.is_empty() || ks.is_empty() || epss.is_empty() {
        return Err(CliError::Config("empty parameter grid".into()));
    }
    for &p in &ps {
        check_p(p)?;
    }
    if ks.contains(&0) {
        return Err(CliError::Config("k must be at least 1".into()));
    }

    let mut rows = Vec::with_capacity(ps.len() * ns.len() * ks.len() * epss.len());
    for &p in &ps {
        for &n in &ns {
            for &k in &ks {
                for &eps in &epss {
                    rows.push(row(p, n, k, eps)?);
                }
            }
        }
    }
    let violations: Vec<&Row> = rows
        .iter()
        .filter(|r| r.ordering_ok == Some(false))
        .collect();

    let mut summary = format!(
        "bounds: {} grid points, {} ordering violations (exact > stirling)\n",
        rows.len(),
        violations.len()
    );
    for r in violations.iter().take(10) {
        summary.push_str(&format!(
            "  violation p={} N={} k={}: ln exact {} > ln stirling {}\n",
            r.p,
            r.n,
            r.k,
            r.exact.log_raw,
            r.stirling.map(|s| s.log_raw).unwrap_or(f64::NAN)
        ));
    }

    let body = match globals.format.unwrap_or(Format::Csv) {
        Format::Json => output::json(
            "bounds",
            &Report {
                tolerance: ORDERING_TOL,
                points: rows.len(),
                violations: violations.len(),
                rows: &rows,
            },
        )?,
        Format::Csv => {
            let records: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        num(r.p),
                        r.n.to_string(),
                        r.k.to_string(),
                        num(r.eps),
                        num(r.exact.raw),
                        num(r.exact.log_raw),
                        opt_num(r.stirling.map(|s| s.raw)),
                        opt_num(r.stirling.map(|s| s.log_raw)),
                        num(r.chain.raw),
                        num(r.exp_form.raw),
                        opt_num(r.typical_tail.map(|t| t.raw)),
                        r.exact.is_clamped().to_string(),
                        opt(r.stirling.map(|s| s.is_clamped())),
                        r.chain.is_clamped().to_string(),
                        r.exp_form.is_clamped().to_string(),
                        opt(r.ordering_ok),
                    ]
                })
                .collect();
            output::csv(
                &[
                    "p",
                    "N",
                    "k",
                    "eps",
                    "exact",
                    "exact_log",
                    "stirling",
                    "stirling_log",
                    "chain",
                    "exp_form",
                    "typical_tail",
                    "exact_clamped",
                    "stirling_clamped",
                    "chain_clamped",
                    "exp_form_clamped",
                    "ordering_ok",
                ],
                &records,
            )?
        }
    };
    Ok(Outcome {
        body,
        summary,
        passed: violations.is_empty(),
    })
}
