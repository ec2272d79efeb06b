use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ops::random_unitary;
use super::{
    AdversaryOp, Domain, Projector, QuantumSystem, Result, SimError, SystemConfig, UpGate,
};
use crate::bounds::{kbersearch_bound_exact, BoundValue};
use crate::scalar::Real;

/// One instruction of a query algorithm.
#[derive(Debug, Clone, PartialEq)]
pub enum Step<T> {
    Op(AdversaryOp<T>),
    Query,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program<T> {
    pub steps: Vec<Step<T>>,
}

impl<T: Real> Program<T> {
    pub fn queries(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| matches!(s, Step::Query))
            .count()
    }

    fn op(&mut self, op: AdversaryOp<T>) {
        self.steps.push(Step::Op(op));
    }
}

/// Built-in test adversaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Strategy {
    /// Query inputs `0, 1, ...` classically, then claim the first hits and
    /// pad with unqueried inputs.
    ClassicalDistinctQueries,
    /// Grover iterations over the whole domain; claims the measured input.
    GroverK1,
    /// Layers of Haar-random one- and two-qubit gates between queries.
    RandomCircuit { seed: u64 },
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::ClassicalDistinctQueries => write!(f, "classical_distinct_queries"),
            Strategy::GroverK1 => write!(f, "grover_k1"),
            Strategy::RandomCircuit { seed } => write!(f, "random_circuit({seed})"),
        }
    }
}

impl FromStr for Strategy {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "classical_distinct_queries" => return Ok(Strategy::ClassicalDistinctQueries),
            "grover_k1" => return Ok(Strategy::GroverK1),
            _ => {}
        }
        s.strip_prefix("random_circuit(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|seed| seed.trim().parse().ok())
            .map(|seed| Strategy::RandomCircuit { seed })
            .ok_or_else(|| SimError::UnknownStrategy(s.to_string()))
    }
}

impl TryFrom<String> for Strategy {
    type Error = SimError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.to_string()
    }
}

impl Strategy {
    /// Smallest workspace the strategy needs.
    pub fn min_workspace(&self, m: u32, out_k: u32, n: usize) -> u32 {
        match self {
            Strategy::ClassicalDistinctQueries => out_k * m + n.min(1 << m) as u32,
            Strategy::GroverK1 => m.max(out_k * m),
            Strategy::RandomCircuit { .. } => out_k * m,
        }
    }

    /// Config with the smallest workspace that fits.
    pub fn config<T: Real>(&self, m: u32, p: T, out_k: u32, n: usize) -> SystemConfig<T> {
        SystemConfig::new(m, self.min_workspace(m, out_k, n), p, out_k)
    }

    fn unavailable(&self, reason: impl Into<String>) -> SimError {
        SimError::StrategyUnavailable {
            strategy: self.to_string(),
            reason: reason.into(),
        }
    }

    pub fn program<T: Real>(&self, config: &SystemConfig<T>, n: usize) -> Result<Program<T>> {
        config.validate()?;
        let need = self.min_workspace(config.m, config.out_k, n);
        if config.w < need {
            return Err(self.unavailable(format!(
                "needs {need} workspace qubits, config has {}",
                config.w
            )));
        }
        match self {
            Strategy::ClassicalDistinctQueries => Ok(classical_program(config, n)),
            Strategy::GroverK1 => {
                if config.out_k != 1 {
                    return Err(self.unavailable("only defined for out_k = 1"));
                }
                Ok(grover_program(config, n))
            }
            Strategy::RandomCircuit { seed } => Ok(random_program(config, n, *seed)),
        }
    }
}

fn classical_program<T: Real>(cfg: &SystemConfig<T>, n: usize) -> Program<T> {
    let qubits = cfg.adversary_qubits();
    let w = cfg.w as usize;
    let m = cfg.m as usize;
    let big_m = cfg.domain_size();
    let learned = n.min(big_m);
    let result_bit = |t: usize| cfg.out_k as usize * m + t;
    let mut prog = Program::default();
    for t in 0..n {
        if t >= big_m {
            prog.steps.push(Step::Query);
            continue;
        }
        let shift_x = AdversaryOp::permutation_from_fn(qubits, move |a| a ^ (t << (w + 1)));
        prog.op(shift_x.clone());
        prog.op(AdversaryOp::hadamard(w));
        prog.steps.push(Step::Query);
        prog.op(AdversaryOp::hadamard(w));
        let r = result_bit(t);
        prog.op(AdversaryOp::permutation_from_fn(qubits, move |a| {
            let yb = (a >> w) & 1;
            let rb = (a >> r) & 1;
            if yb == rb {
                a
            } else {
                a ^ (1 << w) ^ (1 << r)
            }
        }));
        prog.op(shift_x);
    }
    let out_k = cfg.out_k as usize;
    let first_r = result_bit(0);
    prog.op(AdversaryOp::permutation_from_fn(qubits, move |a| {
        let mut hits: Vec<usize> = (0..learned)
            .filter(|&t| (a >> (first_r + t)) & 1 == 1)
            .collect();
        hits.extend(learned..big_m);
        hits.extend((0..learned).filter(|&t| (a >> (first_r + t)) & 1 == 0));
        let enc = hits
            .iter()
            .take(out_k)
            .enumerate()
            .fold(0usize, |acc, (j, &x)| acc | (x << (j * m)));
        a ^ enc
    }));
    prog
}

fn grover_program<T: Real>(cfg: &SystemConfig<T>, n: usize) -> Program<T> {
    let qubits = cfg.adversary_qubits();
    let w = cfg.w as usize;
    let big_m = cfg.domain_size();
    let xs: Vec<usize> = (0..cfg.m).map(|b| cfg.x_qubit(b)).collect();
    let mut prog = Program::default();
    for &q in &xs {
        prog.op(AdversaryOp::hadamard(q));
    }
    prog.op(AdversaryOp::pauli_x(w));
    let two_over_m = T::lit(2.0) / T::from_count(big_m as u64);
    let diffusion: Vec<Complex<T>> = (0..big_m * big_m)
        .map(|i| {
            let d = if i / big_m == i % big_m {
                T::one()
            } else {
                T::zero()
            };
            Complex::new(two_over_m - d, T::zero())
        })
        .collect();
    for _ in 0..n {
        prog.steps.push(Step::Query);
        prog.op(AdversaryOp::gate(xs.clone(), diffusion.clone()));
    }
    let mask = big_m - 1;
    prog.op(AdversaryOp::permutation_from_fn(qubits, move |a| {
        a ^ ((a >> (w + 1)) & mask)
    }));
    prog
}

fn random_layer<T: Real>(prog: &mut Program<T>, qubits: usize, rng: &mut ChaCha8Rng) {
    for q in 0..qubits {
        prog.op(AdversaryOp::gate(vec![q], random_unitary(2, rng)));
    }
    for q in 0..qubits.saturating_sub(1) {
        prog.op(AdversaryOp::gate(vec![q, q + 1], random_unitary(4, rng)));
    }
}

fn random_program<T: Real>(cfg: &SystemConfig<T>, n: usize, seed: u64) -> Program<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let qubits = cfg.adversary_qubits() as usize;
    let mut prog = Program::default();
    for _ in 0..n {
        random_layer(&mut prog, qubits, &mut rng);
        prog.steps.push(Step::Query);
    }
    random_layer(&mut prog, qubits, &mut rng);
    prog
}

/// Per-query record of a recording-domain run.
#[derive(Debug, Clone)]
pub struct Run<T> {
    pub state: QuantumSystem<T>,
    /// `a_{t,k}` for `t = 0..=N`.
    pub trajectory: Vec<T>,
    /// `||P0_{k-1} |phi^t>||` right before query `t + 1`, `t = 0..N`.
    pub beta: Vec<T>,
    /// `a_{t+1,k} - a_{t,k} - 2 sqrt(p(1-p)) beta_t`.
    pub slack: Vec<T>,
    /// Largest norm deviation from 1 seen along the run.
    pub norm_drift: T,
}

/// Runs a program in the recording domain, tracking the progress measure
/// for `k` (skipped when `k = 0`).
pub fn run_program<T: Real>(
    config: SystemConfig<T>,
    program: &Program<T>,
    gate: UpGate<T>,
    k: u32,
) -> Result<Run<T>> {
    run_program_observed(config, program, gate, k, |_, _| Ok(()))
}

/// [`run_program`] with a callback invoked after every step.
pub fn run_program_observed<T: Real>(
    config: SystemConfig<T>,
    program: &Program<T>,
    gate: UpGate<T>,
    k: u32,
    mut observe: impl FnMut(&Step<T>, &QuantumSystem<T>) -> Result<()>,
) -> Result<Run<T>> {
    let mut state = QuantumSystem::with_gate(config, gate)?;
    let p = config.p;
    let coef = T::lit(2.0) * (p * (T::one() - p)).sqrt();
    let mut run = Run {
        trajectory: Vec::new(),
        beta: Vec::new(),
        slack: Vec::new(),
        norm_drift: T::zero(),
        state: state.clone(),
    };
    if k > 0 {
        run.trajectory.push(state.progress_measure(k)?);
    }
    for step in &program.steps {
        match step {
            Step::Op(op) => state.apply_adversary(op)?,
            Step::Query => {
                let beta = if k > 0 {
                    Some(state.projector_norm(Projector::Zero(k - 1))?)
                } else {
                    None
                };
                state.apply_dual_query()?;
                if let Some(beta) = beta {
                    let before = *run.trajectory.last().expect("seeded");
                    let after = state.progress_measure(k)?;
                    run.slack.push(after - before - coef * beta);
                    run.beta.push(beta);
                    run.trajectory.push(after);
                }
            }
        }
        run.norm_drift = run.norm_drift.max((state.norm() - T::one()).abs());
        observe(step, &state)?;
    }
    run.state = state;
    Ok(run)
}

/// Runs a program against the standard-domain oracle started in the
/// Bernoulli superposition.
pub fn run_program_primal<T: Real>(
    config: SystemConfig<T>,
    program: &Program<T>,
    gate: UpGate<T>,
) -> Result<QuantumSystem<T>> {
    let mut state = QuantumSystem::with_gate(config, gate)?;
    state.to_standard()?;
    for step in &program.steps {
        match step {
            Step::Op(op) => state.apply_adversary(op)?,
            Step::Query => state.apply_std_query()?,
        }
    }
    Ok(state)
}

/// Success probability of a program against the fixed function `f`
/// (bit `x` of `f` is `f(x)`), simulated on the adversary registers only.
pub fn run_program_fixed<T: Real>(
    config: &SystemConfig<T>,
    program: &Program<T>,
    f: u64,
) -> Result<T> {
    config.validate()?;
    let zero = Complex::new(T::zero(), T::zero());
    let mut amps = vec![zero; config.adversary_dim()];
    amps[0] = Complex::new(T::one(), T::zero());
    let w = config.w as usize;
    for step in &program.steps {
        match step {
            Step::Op(op) => {
                op.validate(config.adversary_qubits())?;
                op.apply(&mut amps, 0);
            }
            Step::Query => {
                for (a, amp) in amps.iter_mut().enumerate() {
                    let x = a >> (w + 1);
                    if (a >> w) & 1 == 1 && (f >> x) & 1 == 1 {
                        *amp = -*amp;
                    }
                }
            }
        }
    }
    if config.out_k == 0 {
        return Ok(T::one());
    }
    Ok(amps
        .iter()
        .enumerate()
        .filter(|(a, _)| {
            config.claimed_distinct(*a) && config.claimed(*a).all(|x| (f >> x) & 1 == 1)
        })
        .fold(T::zero(), |acc, (_, amp)| acc + amp.norm_sqr()))
}

/// Bernoulli-weighted average of [`run_program_fixed`] over all functions.
pub fn classical_mixture_success<T: Real>(
    config: &SystemConfig<T>,
    program: &Program<T>,
) -> Result<T> {
    let big_m = config.domain_size();
    let p = config.p;
    let mut total = T::zero();
    for f in 0..1u64 << big_m {
        let ones = f.count_ones() as i32;
        let weight = p.powi(ones) * (T::one() - p).powi(big_m as i32 - ones);
        total += weight * run_program_fixed(config, program, f)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct StrategyReport<T> {
    pub config: SystemConfig<T>,
    pub strategy: Strategy,
    #[serde(rename = "N")]
    pub n: usize,
    pub k: u32,
    pub trajectory: Vec<T>,
    pub beta: Vec<T>,
    pub success: T,
    pub degenerate: bool,
    pub bound: BoundValue<T>,
    pub slack_max: T,
}

pub fn run_strategy<T: Real>(
    config: SystemConfig<T>,
    strategy: Strategy,
    n: usize,
) -> Result<StrategyReport<T>> {
    let program = strategy.program(&config, n)?;
    let run = run_program(config, &program, UpGate::new(config.p), config.out_k)?;
    let succ = run.state.success_probability();
    let k = config.out_k;
    let bound = if k == 0 {
        BoundValue::from_log(T::zero())
    } else {
        kbersearch_bound_exact(n as u64, k as u64, config.p)
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?
    };
    let slack_max = run.slack.iter().copied().fold(T::neg_infinity(), T::max);
    debug_assert_eq!(run.state.domain(), Domain::Dual);
    Ok(StrategyReport {
        config,
        strategy,
        n,
        k,
        trajectory: run.trajectory,
        beta: run.beta,
        success: succ.probability,
        degenerate: succ.degenerate,
        bound,
        slack_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn strategy_ids_round_trip() {
        for s in [
            Strategy::ClassicalDistinctQueries,
            Strategy::GroverK1,
            Strategy::RandomCircuit { seed: 42 },
        ] {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert!(matches!(
            "quantum_magic".parse::<Strategy>(),
            Err(SimError::UnknownStrategy(_))
        ));
    }

    #[test]
    fn classical_two_queries_one_solution() {
        let s = Strategy::ClassicalDistinctQueries;
        let cfg = s.config(2, 0.25_f64, 1, 2);
        let r = run_strategy(cfg, s, 2).unwrap();
        // hit within two queries, else guess an unqueried point
        let expected = 0.4375 + 0.5625 * 0.25;
        assert_relative_eq!(r.success, expected, max_relative = 1e-12);
        assert_eq!(r.trajectory.len(), 3);
        assert_eq!(r.trajectory[0], 0.0);
    }

    #[test]
    fn grover_small_instance_respects_bound() {
        let s = Strategy::GroverK1;
        let cfg = s.config(3, 0.125_f64, 1, 2);
        let r = run_strategy(cfg, s, 2).unwrap();
        assert!(r.success <= r.bound.clamped);
        assert!(r.success > 0.125);
    }

    #[test]
    fn grover_requires_single_output() {
        let cfg = SystemConfig::new(2, 4, 0.25_f64, 2);
        assert!(matches!(
            Strategy::GroverK1.program(&cfg, 1),
            Err(SimError::StrategyUnavailable { .. })
        ));
    }

    #[test]
    fn report_json_has_expected_keys() {
        let s = Strategy::RandomCircuit { seed: 0 };
        let r = run_strategy(s.config(1, 0.25_f64, 1, 1), s, 1).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in [
            "config",
            "strategy",
            "N",
            "trajectory",
            "success",
            "bound",
            "slack_max",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["strategy"], "random_circuit(0)");
    }
}
