//! Numerical checks of the recording-oracle lemmas over a parameter grid.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::strategy::{classical_mixture_success, run_program_observed};
use super::{
    Domain, Projector, QuantumSystem, Result, SimError, Step, Strategy, SystemConfig, UpGate,
};
use crate::bounds::{kbersearch_bound_exact, log_binomial};

const EQ_TOL: f64 = 1e-10;
const LEMMA_TOL: f64 = 1e-9;
const UNITARY_TOL: f64 = 1e-12;
const DUMP_LIMIT: usize = 4096;

/// Deliberate defects used to exercise the failure path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    UpSignError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyGrid {
    pub ms: Vec<u32>,
    pub ps: Vec<f64>,
    pub max_queries: usize,
    pub out_ks: Vec<u32>,
    pub strategies: Vec<Strategy>,
    /// Random states per `(m, p, k, i)` for the projection identity.
    pub random_states: usize,
    pub seed: u64,
    pub max_dim: usize,
    pub fault: Option<Fault>,
}

impl Default for VerifyGrid {
    fn default() -> Self {
        Self {
            ms: vec![1, 2, 3],
            ps: vec![0.1, 0.25, 0.5],
            max_queries: 6,
            out_ks: vec![1, 2],
            strategies: vec![
                Strategy::ClassicalDistinctQueries,
                Strategy::GroverK1,
                Strategy::RandomCircuit { seed: 0 },
                Strategy::RandomCircuit { seed: 1 },
            ],
            random_states: 3,
            seed: 0,
            max_dim: 1 << 21,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub case: String,
    pub detail: String,
    /// Sparse `(index, re, im)` dump of the offending state, if available.
    pub state: Option<Vec<(usize, f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub tolerance: f64,
    pub cases: usize,
    pub violations: usize,
    /// Largest deviation (equalities) or excess over the bound (inequalities).
    pub worst: f64,
    pub first_violation: Option<Violation>,
}

impl CheckOutcome {
    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            tolerance,
            cases: 0,
            violations: 0,
            worst: f64::NEG_INFINITY,
            first_violation: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    /// Records one case; `value` must not exceed the tolerance.
    fn record(
        &mut self,
        value: f64,
        case: impl FnOnce() -> String,
        state: Option<&QuantumSystem<f64>>,
    ) {
        self.cases += 1;
        self.worst = if value.is_nan() {
            f64::NAN
        } else {
            self.worst.max(value)
        };
        if !(value <= self.tolerance) {
            self.violations += 1;
            if self.first_violation.is_none() {
                self.first_violation = Some(Violation {
                    case: case(),
                    detail: format!("value {value:e} exceeds tolerance {:e}", self.tolerance),
                    state: state.map(|s| {
                        let mut d = s.sparse_dump(1e-14);
                        d.truncate(DUMP_LIMIT);
                        d
                    }),
                });
            }
        }
    }

    fn merge(&mut self, other: CheckOutcome) {
        self.cases += other.cases;
        self.violations += other.violations;
        self.worst = if self.worst.is_nan() || other.worst.is_nan() {
            f64::NAN
        } else {
            self.worst.max(other.worst)
        };
        if self.first_violation.is_none() {
            self.first_violation = other.first_violation;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckOutcome>,
    pub runs: usize,
    /// Grid points skipped because they exceed the dimension budget or the
    /// strategy does not apply.
    pub skipped: usize,
    pub max_recurrence_slack: f64,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckOutcome::passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

const CHECKS: [(&str, f64); 13] = [
    ("up_unitarity", UNITARY_TOL),
    ("norm_preservation", EQ_TOL),
    ("domain_round_trip", EQ_TOL),
    ("domain_equivalence", EQ_TOL),
    ("classical_mixture", EQ_TOL),
    ("progress_recurrence", LEMMA_TOL),
    ("beta_cases", LEMMA_TOL),
    ("beta_sum", LEMMA_TOL),
    ("progress_bound", LEMMA_TOL),
    ("pi_decomposition", LEMMA_TOL),
    ("final_bound", LEMMA_TOL),
    ("pi_projection", LEMMA_TOL),
    ("xi_partition", EQ_TOL),
];

fn fresh_checks() -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|(n, t)| CheckOutcome::new(n, *t))
        .collect()
}

fn idx(name: &str) -> usize {
    CHECKS
        .iter()
        .position(|(n, _)| *n == name)
        .expect("known check")
}

fn gate_for(p: f64, fault: Option<Fault>) -> UpGate<f64> {
    match fault {
        Some(Fault::UpSignError) => UpGate::with_sign_error(p),
        None => UpGate::new(p),
    }
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        0.0
    } else {
        log_binomial::<f64>(n as u64, k as u64)
            .expect("k <= n")
            .exp()
    }
}

/// `beta` ceiling for the state before query `i + 1`.
fn beta_ceiling(i: usize, k: u32, p: f64) -> f64 {
    let k = k as usize;
    if i + 1 < k {
        0.0
    } else if i + 1 == k {
        p.sqrt().powi(k as i32 - 1)
    } else {
        binom(i, k - 1) * p.sqrt().powi(k as i32 - 1) * (1.0 - p).sqrt().powi((i + 1 - k) as i32)
    }
}

#[derive(Debug, Clone, Copy)]
struct Case {
    m: u32,
    p: f64,
    out_k: u32,
    strategy: Strategy,
    n: usize,
}

impl Case {
    fn label(&self) -> String {
        format!(
            "{} m={} p={} k={} N={}",
            self.strategy, self.m, self.p, self.out_k, self.n
        )
    }
}

fn run_case(case: Case, grid: &VerifyGrid) -> Result<Option<Vec<CheckOutcome>>> {
    let mut cfg = case.strategy.config(case.m, case.p, case.out_k, case.n);
    cfg.max_dim = grid.max_dim;
    let program = match case.strategy.program(&cfg, case.n) {
        Ok(p) => p,
        Err(SimError::OverBudget { .. } | SimError::StrategyUnavailable { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut checks = fresh_checks();
    let gate = gate_for(case.p, grid.fault);
    let k = case.out_k;
    let label = case.label();

    let mut primal = QuantumSystem::with_gate(cfg, gate)?;
    primal.to_standard()?;
    let mut equiv = CheckOutcome::new("domain_equivalence", EQ_TOL);
    let run = run_program_observed(cfg, &program, gate, k, |step, dual| {
        match step {
            Step::Op(op) => primal.apply_adversary(op)?,
            Step::Query => {
                primal.apply_std_query()?;
                let mut converted = dual.clone();
                converted.to_standard()?;
                let diff = converted.max_abs_diff(&primal);
                equiv.record(
                    diff,
                    || format!("{label} after query {}", dual.query_count()),
                    Some(dual),
                );
            }
        }
        Ok(())
    })?;
    let state = &run.state;
    let mut converted = state.clone();
    converted.to_standard()?;
    equiv.record(
        converted.max_abs_diff(&primal),
        || format!("{label} final"),
        Some(state),
    );
    let success = state.success_probability().probability;
    let primal_success = primal.success_probability().probability;
    equiv.record(
        (success - primal_success).abs(),
        || format!("{label} success"),
        None,
    );
    checks[idx("domain_equivalence")] = equiv;

    checks[idx("norm_preservation")].record(
        run.norm_drift.max((primal.norm() - 1.0).abs()),
        || label.clone(),
        Some(state),
    );
    let mut round_trip = converted.clone();
    round_trip.to_dual()?;
    checks[idx("domain_round_trip")].record(
        round_trip.max_abs_diff(state),
        || label.clone(),
        Some(state),
    );

    if case.m <= 2 {
        let mixture = classical_mixture_success(&cfg, &program)?;
        checks[idx("classical_mixture")].record(
            (primal_success - mixture).abs(),
            || label.clone(),
            None,
        );
    }

    if k > 0 {
        let p = case.p;
        for (t, slack) in run.slack.iter().enumerate() {
            checks[idx("progress_recurrence")].record(*slack, || format!("{label} step {t}"), None);
        }
        for (i, beta) in run.beta.iter().enumerate() {
            let ceiling = beta_ceiling(i, k, p);
            checks[idx("beta_cases")].record(
                beta - ceiling,
                || format!("{label} i={i} beta={beta:e} ceiling={ceiling:e}"),
                None,
            );
        }
        let beta_sum: f64 = run.beta.iter().sum();
        let sum_ceiling = binom(case.n, k as usize) * p.sqrt().powi(k as i32 - 1);
        checks[idx("beta_sum")].record(
            beta_sum - sum_ceiling,
            || format!("{label} sum={beta_sum:e} ceiling={sum_ceiling:e}"),
            None,
        );
        for (t, a) in run.trajectory.iter().enumerate() {
            let ceiling = 2.0 * (1.0 - p).sqrt() * p.sqrt().powi(k as i32) * binom(t, k as usize);
            checks[idx("progress_bound")].record(
                a - ceiling,
                || format!("{label} t={t} a={a:e} ceiling={ceiling:e}"),
                None,
            );
        }

        let pi = converted.projector_norm(Projector::Pi)?;
        let mut rhs = 0.0;
        let mut xi_total = 0.0;
        for i in 0..=k {
            let xi = state.projector_norm(Projector::Xi(i))?;
            xi_total += xi * xi;
            rhs += (1.0 - p).sqrt().powi(i as i32) * p.sqrt().powi((k - i) as i32) * xi;
        }
        checks[idx("pi_decomposition")].record(pi - rhs, || label.clone(), Some(state));
        checks[idx("xi_partition")].record(
            (xi_total - state.norm().powi(2)).abs(),
            || label.clone(),
            None,
        );

        let bound = kbersearch_bound_exact(case.n as u64, k as u64, p)
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        checks[idx("final_bound")].record(
            success - bound.clamped,
            || format!("{label} success={success:e} bound={:e}", bound.clamped),
            Some(state),
        );
    }
    Ok(Some(checks))
}

/// A random dual-domain state whose every adversary branch carries a single
/// fixed pattern of `i` ones on its claimed positions.
fn fixed_pattern_state(
    cfg: SystemConfig<f64>,
    i: u32,
    rng: &mut ChaCha8Rng,
) -> Result<QuantumSystem<f64>> {
    let big_m = cfg.domain_size();
    let oracle_dim = cfg.oracle_dim();
    let mut amps = vec![Complex::new(0.0, 0.0); cfg.adversary_dim() * oracle_dim];
    for a in 0..cfg.adversary_dim() {
        if !cfg.claimed_distinct(a) || rng.random::<f64>() < 0.5 {
            continue;
        }
        let claimed: Vec<usize> = cfg.claimed(a).collect();
        let mut ones = claimed.clone();
        for j in (1..ones.len()).rev() {
            ones.swap(j, rng.random_range(0..=j));
        }
        ones.truncate(i as usize);
        let claimed_mask: usize = claimed.iter().fold(0, |acc, x| acc | 1 << x);
        let pattern: usize = ones.iter().fold(0, |acc, x| acc | 1 << x);
        for d in 0..oracle_dim {
            if d & claimed_mask == pattern {
                amps[a * oracle_dim + d] =
                    Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            }
        }
    }
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        amps.iter_mut().for_each(|a| *a /= norm);
    }
    debug_assert!(big_m >= cfg.out_k as usize);
    QuantumSystem::from_amplitudes(cfg, amps, Domain::Dual)
}

fn pi_projection_checks(grid: &VerifyGrid) -> Result<CheckOutcome> {
    let mut out = CheckOutcome::new("pi_projection", LEMMA_TOL);
    let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
    for &m in &grid.ms {
        for &p in &grid.ps {
            for &k in &grid.out_ks {
                if k as usize > 1 << m {
                    continue;
                }
                let mut cfg = SystemConfig::new(m, k * m, p, k);
                cfg.max_dim = grid.max_dim;
                if cfg.validate().is_err() {
                    continue;
                }
                for i in 0..=k {
                    for _ in 0..grid.random_states {
                        let phi = fixed_pattern_state(cfg, i, &mut rng)?;
                        let xi = phi.project(Projector::Xi(i))?;
                        let mut psi = xi.clone();
                        psi.to_standard()?;
                        let lhs = psi.projector_norm(Projector::Pi)?;
                        let rhs = (1.0 - p).sqrt().powi(i as i32)
                            * p.sqrt().powi((k - i) as i32)
                            * xi.norm();
                        out.record(
                            (lhs - rhs).abs(),
                            || format!("m={m} p={p} k={k} i={i}"),
                            Some(&phi),
                        );
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Runs every lemma check over the grid.
pub fn verify_suite(grid: &VerifyGrid) -> Result<VerificationReport> {
    let mut checks = fresh_checks();

    let mut ps: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    ps.extend(&grid.ps);
    for p in ps {
        let g = gate_for(p, grid.fault);
        checks[idx("up_unitarity")].record(g.unitarity_deviation(), || format!("p={p}"), None);
    }

    let mut cases = Vec::new();
    for &m in &grid.ms {
        for &p in &grid.ps {
            for &out_k in &grid.out_ks {
                for &strategy in &grid.strategies {
                    for n in 0..=grid.max_queries {
                        cases.push(Case {
                            m,
                            p,
                            out_k,
                            strategy,
                            n,
                        });
                    }
                }
            }
        }
    }
    let results: Vec<Result<Option<Vec<CheckOutcome>>>> =
        cases.par_iter().map(|c| run_case(*c, grid)).collect();
    let mut runs = 0;
    let mut skipped = 0;
    for r in results {
        match r? {
            Some(case_checks) => {
                runs += 1;
                for (acc, c) in checks.iter_mut().zip(case_checks) {
                    acc.merge(c);
                }
            }
            None => skipped += 1,
        }
    }
    checks[idx("pi_projection")] = pi_projection_checks(grid)?;
    let max_recurrence_slack = checks[idx("progress_recurrence")].worst;
    Ok(VerificationReport {
        checks,
        runs,
        skipped,
        max_recurrence_slack,
    })
}
