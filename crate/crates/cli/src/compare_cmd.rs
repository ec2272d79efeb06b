//! `compare`: classical vs quantum adversary rows and the per-k bound table.
//!
//! Required keys: `p`, `eps`, `n` (honest parties), `t` (classical
//! adversarial parties), `q` (queries per party and round), `Q` (quantum
//! queries per round), `s` (rounds). Optional: `f` (otherwise derived over
//! the `n` honest parties with `f_convention`, `linear` = `n p q` (default) or
//! `exact`), `N` (total quantum queries, default `s Q`), `ks` (default
//! `1, 2, 5, 10, 20, 50`), `c_settle` (default 1).
//!
//! The aligned text rendering goes to stderr; JSON (or the per-k CSV) is
//! the report.

use std::fmt::Write as _;

use pqbackbone::bounds::{
    comparison_table, honest_success_rate, BoundParams, ComparisonTable, FConvention,
};
use serde::Serialize;

use crate::config::KvConfig;
use crate::output;
use crate::{CliError, Format, Globals, Outcome};

#[derive(Debug, Serialize)]
struct Params {
    p: f64,
    eps: f64,
    f: f64,
    f_source: &'static str,
    n: u64,
    t: u64,
    q: u64,
    #[serde(rename = "Q")]
    adv_queries: u64,
    s: u64,
    #[serde(rename = "N")]
    queries: u64,
    ks: Vec<u64>,
    c_settle: f64,
}

#[derive(Serialize)]
struct Report<'a> {
    params: &'a Params,
    table: &'a ComparisonTable<f64>,
}

fn parse(mut cfg: KvConfig) -> Result<Params, CliError> {
    let p = cfg.require_real("p")?;
    let eps = cfg.require_real("eps")?;
    let n: u64 = cfg.require("n")?;
    let t: u64 = cfg.require("t")?;
    let q: u64 = cfg.require("q")?;
    let adv_queries: u64 = cfg.require("Q")?;
    let s: u64 = cfg.require("s")?;
    let queries = cfg.parsed("N")?.unwrap_or(s * adv_queries);
    let ks = cfg
        .counts("ks")?
        .unwrap_or_else(|| vec![1, 2, 5, 10, 20, 50]);
    let c_settle = cfg.real("c_settle")?.unwrap_or(1.0);
    let f_given = cfg.real("f")?;
    let convention = match cfg.string("f_convention").as_deref() {
        None | Some("linear") => FConvention::Linear,
        Some("exact") => FConvention::Exact,
        Some(other) => {
            return Err(CliError::Config(format!(
                "f_convention must be `linear` or `exact`, got {other:?}"
            )))
        }
    };
    cfg.finish()?;
    let (f, f_source) = match f_given {
        Some(f) => (f, "given"),
        None => (
            honest_success_rate(n, q, p, convention),
            match convention {
                FConvention::Linear => "linear",
                FConvention::Exact => "exact",
            },
        ),
    };
    Ok(Params {
        p,
        eps,
        f,
        f_source,
        n,
        t,
        q,
        adv_queries,
        s,
        queries,
        ks,
        c_settle,
    })
}

fn table(params: &Params) -> Result<ComparisonTable<f64>, CliError> {
    let bp = BoundParams {
        p: params.p,
        queries: params.queries,
        k: params.ks.first().copied().unwrap_or(1),
        eps: params.eps,
        f: params.f,
        honest_parties: params.n,
        corrupted_parties: params.t,
        honest_queries: params.q,
        adv_queries: params.adv_queries,
        rounds: params.s,
    };
    comparison_table(&bp, &params.ks, params.c_settle).map_err(|e| CliError::Config(e.to_string()))
}

fn render(p: &Params, t: &ComparisonTable<f64>) -> String {
    let mut out = String::new();
    let w = |out: &mut String, a: &str, b: String, c: String| {
        writeln!(out, "{a:<26}{b:<40}{c}").unwrap();
    };
    writeln!(
        out,
        "Adversary bounds: f = {}, p = {}, eps = {}, n = {}, t = {}, q = {}, Q = {}, s = {}",
        p.f, p.p, p.eps, p.n, p.t, p.q, p.adv_queries, p.s
    )
    .unwrap();
    w(&mut out, "", "classical".into(), "quantum".into());
    let c = &t.honest_majority_classical;
    let qh = &t.honest_majority_quantum;
    w(
        &mut out,
        "honest majority",
        format!("t/(n-t) = {:.6} < {:.6}: {}", c.lhs, c.rhs, c.holds),
        format!(
            "Q = {} <= {:.6}: {}",
            qh.adv_queries, qh.threshold, qh.holds
        ),
    );
    w(
        &mut out,
        "max expected adv. PoWs",
        format!("p q t s = {:.6}", t.max_expected_adv_pows_classical),
        format!(
            "(1+eps) e sqrt(p) Q s = {:.6}",
            t.max_expected_adv_pows_quantum
        ),
    );
    w(
        &mut out,
        "concentration exponent",
        format!("eps^2 f s = {:.6}", t.concentration_exponent_classical),
        format!(
            "(1-eps) f (1-f) s = {:.6}",
            t.concentration_exponent_quantum
        ),
    );
    w(
        &mut out,
        "settlement rounds",
        "s_cl".into(),
        format!("{:.6} s_cl", t.settlement_ratio),
    );
    writeln!(out).unwrap();
    writeln!(out, "k-BerSearch bounds at N = {}", p.queries).unwrap();
    writeln!(out, "{:<26}{:<20}{:<20}NonS", "", "Gen1", "Gen2").unwrap();
    let eo = &t.expected_optimal;
    writeln!(
        out,
        "{:<26}{:<20.6}{:<20.6}{:.6}",
        "expected optimal", eo.gen1, eo.gen2, eo.nons
    )
    .unwrap();
    writeln!(
        out,
        "{:<26}{:<20}{:<20}{}",
        "convergence", t.convergence_gen1, t.convergence_gen2, t.convergence_nons
    )
    .unwrap();
    writeln!(
        out,
        "{:<26}{}",
        "Gen1/Gen2 optimal ratio", t.expected_optimal_ratio
    )
    .unwrap();
    for row in &t.k_rows {
        writeln!(
            out,
            "{:<26}{:<20.6e}{:.6e}",
            format!("k = {}", row.k),
            row.gen1.raw,
            row.gen2_exact.raw
        )
        .unwrap();
    }
    out
}

pub fn run(cfg: KvConfig, globals: &Globals) -> Result<Outcome, CliError> {
    let params = parse(cfg)?;
    let t = table(&params)?;
    let body = match globals.format.unwrap_or(Format::Json) {
        Format::Json => output::json(
            "compare",
            &Report {
                params: &params,
                table: &t,
            },
        )?,
        Format::Csv => {
            let rows: Vec<Vec<String>> = t
                .k_rows
                .iter()
                .map(|r| {
                    vec![
                        params.queries.to_string(),
                        r.k.to_string(),
                        output::num(r.gen1.raw),
                        output::num(r.gen1.clamped),
                        output::num(r.gen2_exact.raw),
                        output::num(r.gen2_exact.clamped),
                    ]
                })
                .collect();
            output::csv(
                &[
                    "N",
                    "k",
                    "gen1",
                    "gen1_clamped",
                    "gen2_exact",
                    "gen2_exact_clamped",
                ],
                &rows,
            )?
        }
    };
    Ok(Outcome {
        body,
        summary: render(&params, &t),
        passed: true,
    })
}
