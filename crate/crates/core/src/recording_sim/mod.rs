//! Exact dense simulation of the Bernoulli recording oracle.
//!
//! The joint state lives on `(x, y, z) ⊗ D`: `x` is the `m`-bit query input,
//! `y` the phase bit of the query, `z` a `w`-qubit workspace and `D` the
//! `M = 2^m`-bit oracle register. Basis index layout:
//!
//! ```text
//! index = a << M | D        a = x << (w + 1) | y << w | z
//! ```
//!
//! so oracle position `x` is bit `x` of the index and adversary qubit `j`
//! is bit `M + j`. Adversary qubits `0..w` are the workspace, qubit `w` is
//! `y` and qubits `w+1..=w+m` hold `x`. The `out_k` claimed solutions occupy
//! the leading workspace qubits: slot `j` is `z` bits `j*m..(j+1)*m`.

mod chain_task;
mod ops;
mod strategy;
mod verify;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

pub use chain_task::{
    chain_success_by_enumeration, chain_success_exact, reduction_consistency, ChainTask,
    ReductionRow,
};
pub use ops::{random_unitary, AdversaryOp};
pub use strategy::{
    classical_mixture_success, run_program, run_program_fixed, run_program_observed,
    run_program_primal, run_strategy, Program, Run, Step, Strategy, StrategyReport,
};
pub use verify::{verify_suite, CheckOutcome, Fault, VerificationReport, VerifyGrid, Violation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid system configuration: {0}")]
    InvalidConfig(String),
    #[error("state dimension {dim} exceeds the budget of {budget} amplitudes")]
    OverBudget { dim: u128, budget: usize },
    #[error(
        "operation requires the {expected:?} domain but the state is in the {actual:?} domain"
    )]
    DomainMismatch { expected: Domain, actual: Domain },
    #[error("adversary operation is not unitary (max deviation {deviation:e})")]
    NotUnitary { deviation: f64 },
    #[error("invalid adversary operation: {0}")]
    InvalidOp(String),
    #[error("invalid projector index: {0}")]
    InvalidProjector(String),
    #[error("unknown strategy id {0:?}")]
    UnknownStrategy(String),
    #[error("strategy {strategy} cannot run: {reason}")]
    StrategyUnavailable { strategy: String, reason: String },
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Which representation the oracle register is in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Standard domain: the register holds truth tables `f`.
    Primal,
    /// Recording domain: the register holds the rotated strings `D`.
    Dual,
}

pub const DEFAULT_MAX_M: u32 = 4;
pub const DEFAULT_MAX_DIM: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SystemConfig<T> {
    /// Input bits; the domain has `M = 2^m` points.
    pub m: u32,
    /// Workspace qubits.
    pub w: u32,
    /// Bernoulli parameter.
    pub p: T,
    /// Number of claimed solutions stored at the start of the workspace.
    pub out_k: u32,
    pub max_m: u32,
    /// Budget on the number of amplitudes.
    pub max_dim: usize,
}

impl<T: Real> SystemConfig<T> {
    pub fn new(m: u32, w: u32, p: T, out_k: u32) -> Self {
        Self {
            m,
            w,
            p,
            out_k,
            max_m: DEFAULT_MAX_M,
            max_dim: DEFAULT_MAX_DIM,
        }
    }

    pub fn domain_size(&self) -> usize {
        1usize << self.m
    }

    pub fn adversary_qubits(&self) -> u32 {
        self.m + 1 + self.w
    }

    pub fn adversary_dim(&self) -> usize {
        1usize << self.adversary_qubits()
    }

    pub fn oracle_dim(&self) -> usize {
        1usize << self.domain_size()
    }

    pub fn y_qubit(&self) -> usize {
        self.w as usize
    }

    pub fn x_qubit(&self, bit: u32) -> usize {
        (self.w + 1 + bit) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(SimError::InvalidConfig("m must be at least 1".into()));
        }
        if self.m > self.max_m {
            return Err(SimError::InvalidConfig(format!(
                "m = {} exceeds the cap of {}",
                self.m, self.max_m
            )));
        }
        if !(self.p > T::zero() && self.p < T::one()) {
            return Err(SimError::InvalidConfig(format!(
                "p = {} must lie strictly between 0 and 1",
                self.p
            )));
        }
        if self.w < self.out_k * self.m {
            return Err(SimError::InvalidConfig(format!(
                "workspace of {} qubits cannot hold {} claimed {}-bit solutions",
                self.w, self.out_k, self.m
            )));
        }
        let dim = 1u128 << (self.adversary_qubits() as u128 + self.domain_size() as u128).min(127);
        if dim > self.max_dim as u128 {
            return Err(SimError::OverBudget {
                dim,
                budget: self.max_dim,
            });
        }
        Ok(())
    }

    /// The `out_k` claimed inputs encoded in adversary basis index `a`.
    pub fn claimed(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        let mask = self.domain_size() - 1;
        let m = self.m as usize;
        (0..self.out_k as usize).map(move |j| (a >> (j * m)) & mask)
    }

    fn claimed_distinct(&self, a: usize) -> bool {
        let mut seen = 0u64;
        for x in self.claimed(a) {
            if seen & (1 << x) != 0 {
                return false;
            }
            seen |= 1 << x;
        }
        true
    }
}

/// Single-qubit map between the standard and recording domains,
/// `|b> -> sqrt(1-p)|b> + (-1)^b sqrt(p)|b xor 1>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpGate<T> {
    /// Row-major `[[u00, u01], [u10, u11]]`.
    pub m: [[T; 2]; 2],
}

impl<T: Real> UpGate<T> {
    pub fn new(p: T) -> Self {
        let c = (T::one() - p).sqrt();
        let s = p.sqrt();
        Self {
            m: [[c, -s], [s, c]],
        }
    }

    /// Deliberately corrupted gate (sign of the off-diagonal in column 1
    /// flipped), used to exercise the verifier's failure path.
    pub fn with_sign_error(p: T) -> Self {
        let mut g = Self::new(p);
        g.m[0][1] = -g.m[0][1];
        g
    }

    pub fn adjoint(&self) -> Self {
        Self {
            m: [[self.m[0][0], self.m[1][0]], [self.m[0][1], self.m[1][1]]],
        }
    }

    /// `max |U^T U - I|`.
    pub fn unitarity_deviation(&self) -> T {
        let mut worst = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                let dot = self.m[0][i] * self.m[0][j] + self.m[1][i] * self.m[1][j];
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// Local action of a `y = 1` query in the recording domain, `U^T Z U`.
    pub fn dual_query_matrix(&self) -> [[T; 2]; 2] {
        let u = &self.m;
        let mut out = [[T::zero(); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = u[0][i] * u[0][j] - u[1][i] * u[1][j];
            }
        }
        out
    }
}

/// Projectors on the joint state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum Projector {
    /// `D` has exactly `k` ones.
    Eq(u32),
    /// At least `k` ones.
    Ge(u32),
    /// At most `k` ones.
    Le(u32),
    /// Exactly `k` ones, `y = 1` and the entry of `D` at the queried `x` is 0.
    Zero(u32),
    /// Exactly `k` ones, `y = 1` and the entry at the queried `x` is 1.
    One(u32),
    /// The claimed positions are distinct and all hold 1 (standard domain).
    Pi,
    /// Exactly `i` ones among the claimed positions (recording domain).
    Xi(u32),
}

impl Projector {
    fn required_domain(&self) -> Domain {
        match self {
            Projector::Pi => Domain::Primal,
            _ => Domain::Dual,
        }
    }
}

/// Result of scoring the final measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Success<T> {
    pub probability: T,
    /// Set when `out_k = 0` and success is vacuous.
    pub degenerate: bool,
}

/// Joint adversary ⊗ oracle state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumSystem<T> {
    config: SystemConfig<T>,
    amps: Vec<Complex<T>>,
    domain: Domain,
    query_count: usize,
    gate: UpGate<T>,
}

impl<T: Real> QuantumSystem<T> {
    /// All registers zero, recording domain.
    pub fn new(config: SystemConfig<T>) -> Result<Self> {
        Self::with_gate(config, UpGate::new(config.p))
    }

    pub fn with_gate(config: SystemConfig<T>, gate: UpGate<T>) -> Result<Self> {
        config.validate()?;
        let dim = config.adversary_dim() * config.oracle_dim();
        let mut amps = vec![Complex::new(T::zero(), T::zero()); dim];
        amps[0] = Complex::new(T::one(), T::zero());
        Ok(Self {
            config,
            amps,
            domain: Domain::Dual,
            query_count: 0,
            gate,
        })
    }

    /// Wraps caller-provided amplitudes. The vector need not be normalized.
    pub fn from_amplitudes(
        config: SystemConfig<T>,
        amps: Vec<Complex<T>>,
        domain: Domain,
    ) -> Result<Self> {
        config.validate()?;
        let dim = config.adversary_dim() * config.oracle_dim();
        if amps.len() != dim {
            return Err(SimError::InvalidConfig(format!(
                "expected {dim} amplitudes, got {}",
                amps.len()
            )));
        }
        Ok(Self {
            config,
            amps,
            domain,
            query_count: 0,
            gate: UpGate::new(config.p),
        })
    }

    pub fn config(&self) -> &SystemConfig<T> {
        &self.config
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amps
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn query_count(&self) -> usize {
        self.query_count
    }

    pub fn gate(&self) -> &UpGate<T> {
        &self.gate
    }

    pub fn norm(&self) -> T {
        self.amps
            .iter()
            .fold(T::zero(), |acc, a| acc + a.norm_sqr())
            .sqrt()
    }

    fn require(&self, expected: Domain) -> Result<()> {
        if self.domain == expected {
            Ok(())
        } else {
            Err(SimError::DomainMismatch {
                expected,
                actual: self.domain,
            })
        }
    }

    fn oracle_bits(&self) -> usize {
        self.config.domain_size()
    }

    fn split(&self, index: usize) -> (usize, usize) {
        let mb = self.oracle_bits();
        (index >> mb, index & ((1 << mb) - 1))
    }

    fn query_fields(&self, a: usize) -> (usize, bool) {
        let w = self.config.w as usize;
        let y = (a >> w) & 1 == 1;
        let x = a >> (w + 1);
        (x, y)
    }

    fn apply_oracle_single(&mut self, g: [[T; 2]; 2]) {
        let positions = self.oracle_bits();
        for pos in 0..positions {
            let bit = 1usize << pos;
            for i in 0..self.amps.len() {
                if i & bit == 0 {
                    let a0 = self.amps[i];
                    let a1 = self.amps[i | bit];
                    self.amps[i] = a0 * g[0][0] + a1 * g[0][1];
                    self.amps[i | bit] = a0 * g[1][0] + a1 * g[1][1];
                }
            }
        }
    }

    /// Applies `U_p` on every oracle position (recording → standard).
    pub fn to_standard(&mut self) -> Result<()> {
        self.require(Domain::Dual)?;
        self.apply_oracle_single(self.gate.m);
        self.domain = Domain::Primal;
        Ok(())
    }

    /// Applies `U_p^T` on every oracle position (standard → recording).
    pub fn to_dual(&mut self) -> Result<()> {
        self.require(Domain::Primal)?;
        self.apply_oracle_single(self.gate.adjoint().m);
        self.domain = Domain::Dual;
        Ok(())
    }

    /// Phase oracle `(-1)^(y f(x))` against the truth-table register.
    pub fn apply_std_query(&mut self) -> Result<()> {
        self.require(Domain::Primal)?;
        let mb = self.oracle_bits();
        for i in 0..self.amps.len() {
            let (a, d) = (i >> mb, i & ((1 << mb) - 1));
            let (x, y) = self.query_fields(a);
            if y && (d >> x) & 1 == 1 {
                self.amps[i] = -self.amps[i];
            }
        }
        self.query_count += 1;
        Ok(())
    }

    /// The conjugated query `U_p^† StdBO U_p`, acting locally on position `x`.
    pub fn apply_dual_query(&mut self) -> Result<()> {
        self.require(Domain::Dual)?;
        let g = self.gate.dual_query_matrix();
        let mb = self.oracle_bits();
        for i in 0..self.amps.len() {
            let (a, d) = (i >> mb, i & ((1 << mb) - 1));
            let (x, y) = self.query_fields(a);
            let bit = 1usize << x;
            if y && d & bit == 0 {
                let a0 = self.amps[i];
                let a1 = self.amps[i | bit];
                self.amps[i] = a0 * g[0][0] + a1 * g[0][1];
                self.amps[i | bit] = a0 * g[1][0] + a1 * g[1][1];
            }
        }
        self.query_count += 1;
        Ok(())
    }

    /// Applies `op ⊗ I_F`. Works in either domain.
    pub fn apply_adversary(&mut self, op: &AdversaryOp<T>) -> Result<()> {
        op.validate(self.config.adversary_qubits())?;
        let offset = self.oracle_bits();
        op.apply(&mut self.amps, offset);
        Ok(())
    }

    fn in_projector(&self, which: Projector, index: usize) -> bool {
        let (a, d) = self.split(index);
        let weight = d.count_ones();
        match which {
            Projector::Eq(k) => weight == k,
            Projector::Ge(k) => weight >= k,
            Projector::Le(k) => weight <= k,
            Projector::Zero(k) | Projector::One(k) => {
                let (x, y) = self.query_fields(a);
                let entry = (d >> x) & 1 == 1;
                weight == k && y && (entry == matches!(which, Projector::One(_)))
            }
            Projector::Pi => {
                self.config.claimed_distinct(a) && self.config.claimed(a).all(|x| (d >> x) & 1 == 1)
            }
            Projector::Xi(i) => {
                self.config
                    .claimed(a)
                    .filter(|&x| (d >> x) & 1 == 1)
                    .count()
                    == i as usize
            }
        }
    }

    fn check_projector(&self, which: Projector) -> Result<()> {
        if let Projector::Xi(i) = which {
            if i > self.config.out_k {
                return Err(SimError::InvalidProjector(format!(
                    "Xi({i}) with only {} claimed positions",
                    self.config.out_k
                )));
            }
        }
        self.require(which.required_domain())
    }

    /// `|| P |state> ||`.
    pub fn projector_norm(&self, which: Projector) -> Result<T> {
        self.check_projector(which)?;
        let sum = self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| self.in_projector(which, *i))
            .fold(T::zero(), |acc, (_, a)| acc + a.norm_sqr());
        Ok(sum.sqrt())
    }

    /// `P |state>`, unnormalized.
    pub fn project(&self, which: Projector) -> Result<Self> {
        self.check_projector(which)?;
        let mut out = self.clone();
        for (i, a) in out.amps.iter_mut().enumerate() {
            if !self.in_projector(which, i) {
                *a = Complex::new(T::zero(), T::zero());
            }
        }
        Ok(out)
    }

    /// `a_{t,k} = || P_{>=k} |phi^t> ||`.
    pub fn progress_measure(&self, k: u32) -> Result<T> {
        self.projector_norm(Projector::Ge(k))
    }

    /// Probability that measuring the oracle register and the claimed
    /// solutions yields `out_k` distinct inputs that all map to 1.
    pub fn success_probability(&self) -> Success<T> {
        if self.config.out_k == 0 {
            return Success {
                probability: T::one(),
                degenerate: true,
            };
        }
        let primal;
        let state = if self.domain == Domain::Primal {
            self
        } else {
            let mut s = self.clone();
            s.apply_oracle_single(s.gate.m);
            s.domain = Domain::Primal;
            primal = s;
            &primal
        };
        let probability = state
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| state.in_projector(Projector::Pi, *i))
            .fold(T::zero(), |acc, (_, a)| acc + a.norm_sqr());
        Success {
            probability,
            degenerate: false,
        }
    }

    /// Marginal distribution of the oracle register, indexed by `D` or `f`.
    pub fn oracle_marginal(&self) -> Vec<T> {
        let mb = self.oracle_bits();
        let mut out = vec![T::zero(); 1 << mb];
        for (i, a) in self.amps.iter().enumerate() {
            out[i & ((1 << mb) - 1)] += a.norm_sqr();
        }
        out
    }

    /// Largest modulus of the amplitude difference between two states.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.amps
            .iter()
            .zip(&other.amps)
            .fold(T::zero(), |acc, (a, b)| acc.max((*a - *b).norm()))
    }

    /// Non-zero amplitudes as `(index, re, im)`, for diagnostics.
    pub fn sparse_dump(&self, tol: T) -> Vec<(usize, f64, f64)> {
        self.amps
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm() > tol)
            .map(|(i, a)| (i, a.re.as_f64(), a.im.as_f64()))
            .collect()
    }
}
