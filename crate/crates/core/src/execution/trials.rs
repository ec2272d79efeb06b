//! Independent trials of one configuration, run in parallel with results
//! collected in trial order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checks::{
    chain_quality_check, common_prefix_check, counters, counters_consistent, honest_delivery_check,
    span_check, typical_check, ChainQualityReport, CommonPrefixReport, SpanReport, TypicalReport,
};
use super::{
    run_execution, trace_hash, ExecutionConfig, ExecutionError, ExecutionTrace, Result, TrialSeeds,
};
use crate::bounds::chain_of_pows_bound;

/// Which checks to run on every trial.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckSpec {
    /// Window lengths for the typical-execution check.
    pub typical_windows: Vec<u64>,
    pub common_prefix_k: Option<usize>,
    pub chain_quality_l: Option<usize>,
    pub chain_quality_mu: Option<f64>,
    /// Block-span check, counted over trials typical at the first window.
    pub span_k: Option<usize>,
    /// Window for the empirical tail of `Z`.
    pub z_tail_window: Option<u64>,
}

impl CheckSpec {
    fn needs_long_run(&self) -> bool {
        !self.typical_windows.is_empty()
            || self.common_prefix_k.is_some()
            || self.chain_quality_l.is_some()
            || self.span_k.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: u32,
    pub seeds: TrialSeeds,
    pub trace_hash: String,
    pub rounds: u64,
    /// `X` over the whole run.
    pub honest_success_rounds: u64,
    /// `Y` over the whole run.
    pub unique_success_rounds: u64,
    pub honest_pows: u64,
    pub adversary_pows: u64,
    pub blocks: u64,
    pub anomalies: u64,
    pub counters_consistent: bool,
    pub honest_delivery: bool,
    pub typical: Vec<TypicalReport>,
    pub common_prefix: Option<CommonPrefixReport>,
    pub chain_quality: Option<ChainQualityReport>,
    pub span: Option<SpanReport>,
    /// `z_histogram[z]`: windows of `z_tail_window` rounds with `Z = z`.
    pub z_histogram: Vec<u64>,
}

fn summarize(trace: &ExecutionTrace, checks: &CheckSpec) -> Result<TrialSummary> {
    let total = counters(trace, 0, trace.len())?;
    let typical = checks
        .typical_windows
        .iter()
        .map(|&s| typical_check(trace, trace.meta.eps, s))
        .collect::<Result<Vec<_>>>()?;
    let chain_quality = match checks.chain_quality_l {
        Some(l) => Some(chain_quality_check(
            trace,
            l,
            checks.chain_quality_mu.unwrap_or(trace.meta.f),
        )?),
        None => None,
    };
    let span = match checks.span_k {
        Some(k) => Some(span_check(trace, k)?),
        None => None,
    };
    let mut z_histogram = Vec::new();
    if let Some(s) = checks.z_tail_window {
        if s >= 1 && s <= trace.len() {
            for start in 0..=trace.len() - s {
                let z = counters(trace, start, s)?.z as usize;
                if z_histogram.len() <= z {
                    z_histogram.resize(z + 1, 0);
                }
                z_histogram[z] += 1;
            }
        }
    }
    Ok(TrialSummary {
        trial: trace.meta.trial,
        seeds: trace.meta.seeds,
        trace_hash: trace_hash(trace),
        rounds: trace.len(),
        honest_success_rounds: total.x,
        unique_success_rounds: total.y,
        honest_pows: trace
            .rounds
            .iter()
            .map(|r| r.honest_pows.len() as u64)
            .sum(),
        adversary_pows: total.z,
        blocks: trace.store.len() as u64,
        anomalies: trace.store.anomalies().len() as u64,
        counters_consistent: counters_consistent(trace),
        honest_delivery: honest_delivery_check(trace),
        typical,
        common_prefix: checks
            .common_prefix_k
            .map(|k| common_prefix_check(trace, k)),
        chain_quality,
        span,
        z_histogram,
    })
}

fn check_rounds(config: &ExecutionConfig, checks: &CheckSpec) -> Result<()> {
    config.validate()?;
    if checks.needs_long_run() {
        let min = (2.0 / config.f()).ceil();
        if (config.rounds as f64) < min {
            return Err(ExecutionError::InvalidConfig(format!(
                "property checks need at least ceil(2/f) = {min} rounds, got {}",
                config.rounds
            )));
        }
    }
    Ok(())
}

pub fn run_trial(config: &ExecutionConfig, checks: &CheckSpec, trial: u32) -> Result<TrialSummary> {
    run_trial_with_trace(config, checks, trial).map(|(s, _)| s)
}

pub fn run_trial_with_trace(
    config: &ExecutionConfig,
    checks: &CheckSpec,
    trial: u32,
) -> Result<(TrialSummary, ExecutionTrace)> {
    check_rounds(config, checks)?;
    let trace = run_execution(config, trial)?;
    Ok((summarize(&trace, checks)?, trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypicalAggregate {
    pub s: u64,
    pub pass_rate: f64,
    pub b_pass_rate: f64,
    pub c_pass_rate: f64,
    /// Share of all windows (pooled over trials) outside the `X` band.
    pub x_band_fraction: f64,
    pub y_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZTailRow {
    pub k: u64,
    /// Share of windows with `Z >= k`.
    pub empirical: f64,
    /// `min(1, P(s Q, k))` for quantum adversaries.
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: u32,
    pub f: f64,
    /// Pooled share of rounds with an honest PoW.
    pub honest_rate_mean: f64,
    pub honest_rate_sigma: f64,
    /// `(mean - f) / sigma`.
    pub honest_rate_z: f64,
    pub typical: Vec<TypicalAggregate>,
    pub common_prefix_pass_rate: Option<f64>,
    pub chain_quality_pass_rate: Option<f64>,
    pub chain_quality_worst_ratio: Option<f64>,
    /// Span pass rate among trials typical at the first window.
    pub span_pass_rate_in_typical: Option<f64>,
    pub delivery_pass_rate: f64,
    pub counters_pass_rate: f64,
    pub z_tail: Vec<ZTailRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialsReport {
    pub config: ExecutionConfig,
    pub checks: CheckSpec,
    pub aggregate: Aggregate,
    pub trials: Vec<TrialSummary>,
}

fn rate(hits: usize, total: usize) -> f64 {
    if total == 0 {
        f64::NAN
    } else {
        hits as f64 / total as f64
    }
}

fn aggregate(config: &ExecutionConfig, checks: &CheckSpec, trials: &[TrialSummary]) -> Aggregate {
    let n = trials.len();
    let f = config.f();
    let rounds_total: u64 = trials.iter().map(|t| t.rounds).sum();
    let x_total: u64 = trials.iter().map(|t| t.honest_success_rounds).sum();
    let mean = x_total as f64 / rounds_total as f64;
    let sigma = (f * (1.0 - f) / rounds_total as f64).sqrt();

    let typical = checks
        .typical_windows
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let reps: Vec<&TypicalReport> = trials.iter().map(|t| &t.typical[i]).collect();
            let windows: u64 = reps.iter().map(|r| r.windows).sum();
            TypicalAggregate {
                s,
                pass_rate: rate(reps.iter().filter(|r| r.passed).count(), n),
                b_pass_rate: rate(reps.iter().filter(|r| r.b_violations == 0).count(), n),
                c_pass_rate: rate(reps.iter().filter(|r| r.c_violations == 0).count(), n),
                x_band_fraction: reps.iter().map(|r| r.x_band_violations).sum::<u64>() as f64
                    / windows as f64,
                y_fraction: reps.iter().map(|r| r.y_violations).sum::<u64>() as f64
                    / windows as f64,
            }
        })
        .collect();

    let span_pass_rate_in_typical = checks.span_k.and_then(|_| {
        let typical: Vec<&TrialSummary> = trials
            .iter()
            .filter(|t| t.typical.first().is_some_and(|r| r.passed))
            .collect();
        (!typical.is_empty()).then(|| {
            rate(
                typical
                    .iter()
                    .filter(|t| t.span.is_some_and(|s| s.passed))
                    .count(),
                typical.len(),
            )
        })
    });

    let mut z_tail = Vec::new();
    if let Some(s) = checks.z_tail_window {
        let mut hist: Vec<u64> = Vec::new();
        for t in trials {
            if hist.len() < t.z_histogram.len() {
                hist.resize(t.z_histogram.len(), 0);
            }
            for (z, c) in t.z_histogram.iter().enumerate() {
                hist[z] += c;
            }
        }
        let windows: u64 = hist.iter().sum();
        let queries = config.adversary.quantum_queries();
        for k in 1..hist.len() as u64 {
            let at_least: u64 = hist[k as usize..].iter().sum();
            let bound = queries.and_then(|q| {
                chain_of_pows_bound(s * q, k, config.p())
                    .ok()
                    .map(|b| b.closed.clamped)
            });
            z_tail.push(ZTailRow {
                k,
                empirical: at_least as f64 / windows as f64,
                bound,
            });
        }
    }

    Aggregate {
        trials: n as u32,
        f,
        honest_rate_mean: mean,
        honest_rate_sigma: sigma,
        honest_rate_z: (mean - f) / sigma,
        typical,
        common_prefix_pass_rate: checks.common_prefix_k.map(|_| {
            rate(
                trials
                    .iter()
                    .filter(|t| t.common_prefix.is_some_and(|c| c.passed))
                    .count(),
                n,
            )
        }),
        chain_quality_pass_rate: checks.chain_quality_l.map(|_| {
            rate(
                trials
                    .iter()
                    .filter(|t| t.chain_quality.is_some_and(|c| c.passed))
                    .count(),
                n,
            )
        }),
        chain_quality_worst_ratio: checks.chain_quality_l.map(|_| {
            trials
                .iter()
                .filter_map(|t| t.chain_quality.map(|c| c.worst_ratio))
                .fold(1.0, f64::min)
        }),
        span_pass_rate_in_typical,
        delivery_pass_rate: rate(trials.iter().filter(|t| t.honest_delivery).count(), n),
        counters_pass_rate: rate(trials.iter().filter(|t| t.counters_consistent).count(), n),
        z_tail,
    }
}

/// Runs `config.trials` trials on `jobs` worker threads. The report does not
/// depend on `jobs`.
pub fn run_trials(
    config: &ExecutionConfig,
    checks: &CheckSpec,
    jobs: usize,
) -> Result<TrialsReport> {
    run_trials_with(config, checks, jobs, |_, _| Ok(()))
}

/// As [`run_trials`], handing every finished trace to `sink` (for export)
/// before it is dropped.
pub fn run_trials_with<F>(
    config: &ExecutionConfig,
    checks: &CheckSpec,
    jobs: usize,
    sink: F,
) -> Result<TrialsReport>
where
    F: Fn(u32, &ExecutionTrace) -> Result<()> + Sync,
{
    check_rounds(config, checks)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ExecutionError::Resource(format!("thread pool: {e}")))?;
    let trials = pool.install(|| {
        (0..config.trials)
            .into_par_iter()
            .map(|i| {
                let (summary, trace) = run_trial_with_trace(config, checks, i)?;
                sink(i, &trace)?;
                Ok(summary)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(TrialsReport {
        config: *config,
        checks: checks.clone(),
        aggregate: aggregate(config, checks, &trials),
        trials,
    })
}
