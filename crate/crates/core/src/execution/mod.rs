//! Round-synchronous backbone executions with honest parties, a diffusion
//! network, calibrated adversaries and property checkers.
//!
//! Each round:
//!
//! 1. every honest party receives the messages due this round, adversarial
//!    ones first, and adopts the longest valid chain among them;
//! 2. every honest party makes `q` oracle queries on top of its chain;
//! 3. parties whose chain changed broadcast it (delivered next round);
//! 4. the adversary acts, having seen everything above.
//!
//! A message is the id of its head block in a shared [`BlockStore`]; the
//! full chain is the path to the root, so delivering the id delivers the
//! chain.

mod adversary;
mod checks;
mod store;
mod trace;
mod trials;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use adversary::{spread, AdversarySpec, BlockBudget, RateMode};
pub use checks::{
    chain_quality_check, common_prefix_check, counters, counters_consistent, honest_delivery_check,
    recount, span_check, typical_check, ChainQualityReport, CommonPrefixReport, Condition,
    ForkWitness, SpanReport, TypicalReport, WindowCounters, WindowFailure,
};
pub use store::{Anomaly, AnomalyKind, BlockId, BlockStore, Node, ROOT};
pub use trace::{trace_hash, write_ndjson};
pub use trials::{
    run_trial, run_trial_with_trace, run_trials, run_trials_with, Aggregate, CheckSpec,
    TrialSummary, TrialsReport, TypicalAggregate, ZTailRow,
};

use crate::backbone::{honest_payload, mine, BackboneError, Chain, Creator, OracleParams};
use crate::bounds::{honest_success_rate, FConvention};
use adversary::AdversaryState;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecutionError {
    #[error("invalid execution config: {0}")]
    InvalidConfig(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("window starting at round {start} of length {s} exceeds the {rounds}-round trace")]
    Window { start: u64, s: u64, rounds: u64 },
    #[error("typical-execution check requires s f >= 2 (s = {s}, f = {f})")]
    Precondition { s: u64, f: f64 },
    #[error(transparent)]
    Backbone(#[from] BackboneError),
}

pub type Result<T> = std::result::Result<T, ExecutionError>;

pub const DEFAULT_MAX_BLOCKS: usize = 1 << 22;
/// Default cap on the estimated number of oracle evaluations of one trial.
pub const DEFAULT_MAX_HASHES: u64 = 1 << 33;

fn default_max_blocks() -> usize {
    DEFAULT_MAX_BLOCKS
}

fn default_max_hashes() -> u64 {
    DEFAULT_MAX_HASHES
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutionConfig {
    /// Honest parties.
    pub n: u32,
    /// Oracle parameters; `seed` is replaced per trial.
    pub oracle: OracleParams,
    pub rounds: u64,
    pub eps: f64,
    pub adversary: AdversarySpec,
    pub seed: u64,
    pub trials: u32,
    #[serde(default = "default_max_blocks")]
    pub max_blocks: usize,
    #[serde(default = "default_max_hashes")]
    pub max_hashes: u64,
}

impl ExecutionConfig {
    pub fn new(n: u32, oracle: OracleParams, rounds: u64, eps: f64) -> Self {
        Self {
            n,
            oracle,
            rounds,
            eps,
            adversary: AdversarySpec::None,
            seed: 0,
            trials: 1,
            max_blocks: DEFAULT_MAX_BLOCKS,
            max_hashes: DEFAULT_MAX_HASHES,
        }
    }

    pub fn with_adversary(self, adversary: AdversarySpec) -> Self {
        Self { adversary, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_trials(self, trials: u32) -> Self {
        Self { trials, ..self }
    }

    pub fn p(&self) -> f64 {
        self.oracle.p()
    }

    /// Exact per-round honest success probability `1 - (1-p)^(n q)`.
    pub fn f(&self) -> f64 {
        honest_success_rate(
            self.n as u64,
            self.oracle.q as u64,
            self.p(),
            FConvention::Exact,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.oracle.validate()?;
        if self.n == 0 {
            return Err(ExecutionError::InvalidConfig("n must be >= 1".into()));
        }
        if self.oracle.q == 0 {
            return Err(ExecutionError::InvalidConfig("q must be >= 1".into()));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(ExecutionError::InvalidConfig(format!(
                "eps must lie in (0, 1), got {}",
                self.eps
            )));
        }
        self.adversary
            .validate()
            .map_err(ExecutionError::InvalidConfig)?;
        let estimate = self.estimated_hashes();
        if estimate > self.max_hashes as f64 {
            return Err(ExecutionError::Resource(format!(
                "about {estimate:.3e} oracle evaluations per trial exceed the cap of {}",
                self.max_hashes
            )));
        }
        Ok(())
    }

    /// Expected oracle evaluations of one trial (honest mining plus
    /// adversarial grinding).
    pub fn estimated_hashes(&self) -> f64 {
        let q = self.oracle.q as f64;
        let rounds = self.rounds as f64;
        let honest = self.n as f64 * (q + 1.0) * rounds;
        let adversary = match self.adversary {
            AdversarySpec::None => 0.0,
            AdversarySpec::Classical { t } => t as f64 * (q + 1.0) * rounds,
            AdversarySpec::QuantumRate { .. } | AdversarySpec::PrivateChain { .. } => {
                let (queries, mode, rate_eps) = self.adversary.rate().expect("quantum model");
                let per_round = match mode {
                    RateMode::WorstCase { window } => {
                        BlockBudget::new(queries, mode, self.p(), rate_eps).per_window() as f64
                            / window as f64
                    }
                    _ => BlockBudget::new(queries, RateMode::Poisson, self.p(), rate_eps)
                        .poisson_mean(),
                };
                per_round * rounds * (q + 2.0) / ((q + 1.0) * self.p())
            }
        };
        honest + adversary
    }
}

/// Seeds of one trial, derived as `SHA-256("trial" || seed || trial)`: the
/// first 8 bytes seed the oracle, the next 8 the adversary's RNG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSeeds {
    pub oracle: u64,
    pub adversary: u64,
}

impl TrialSeeds {
    pub fn derive(seed: u64, trial: u32) -> Self {
        let mut h = Sha256::new();
        h.update(b"trial");
        h.update(seed.to_be_bytes());
        h.update(trial.to_be_bytes());
        let d = h.finalize();
        Self {
            oracle: u64::from_be_bytes(d[..8].try_into().expect("8 bytes")),
            adversary: u64::from_be_bytes(d[8..16].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipients {
    All,
    Party(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryMessage {
    pub to: Recipients,
    pub head: BlockId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HonestPow {
    pub party: u32,
    pub block: BlockId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HonestMessage {
    pub from: u32,
    pub head: BlockId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub to: u32,
    pub head: BlockId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub honest_pows: Vec<HonestPow>,
    pub adversary_pows: Vec<BlockId>,
    /// PoWs granted to a rate-based adversary this round.
    pub budget: u64,
    pub honest_sent: Vec<HonestMessage>,
    pub adversary_sent: Vec<AdversaryMessage>,
    /// Messages received at the start of the round, in delivery order.
    pub delivered: Vec<Delivery>,
    /// Chain held by each honest party at the end of the round.
    pub heads: Vec<BlockId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub n: u32,
    /// Oracle with the trial's seed.
    pub oracle: OracleParams,
    pub eps: f64,
    pub adversary: AdversarySpec,
    pub trial: u32,
    pub seeds: TrialSeeds,
    pub f: f64,
}

/// Everything that happened in one execution.
#[derive(Debug, Clone)]
pub struct ExecutionTrace {
    pub meta: TraceMeta,
    pub store: BlockStore,
    pub rounds: Vec<RoundRecord>,
    /// `cumulative[r]` holds `(X, Y, Z)` over rounds `0..r`, maintained
    /// while the execution runs.
    pub cumulative: Vec<[u64; 3]>,
}

impl ExecutionTrace {
    pub fn new(meta: TraceMeta, max_blocks: usize) -> Self {
        let store = BlockStore::new(meta.oracle, max_blocks);
        Self {
            meta,
            store,
            rounds: Vec::new(),
            cumulative: vec![[0; 3]],
        }
    }

    pub fn len(&self) -> u64 {
        self.rounds.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// Appends a finished round and advances the running counters.
    pub fn push_round(&mut self, record: RoundRecord) {
        let last = *self.cumulative.last().expect("cumulative starts non-empty");
        let h = record.honest_pows.len();
        self.cumulative.push([
            last[0] + (h >= 1) as u64,
            last[1] + (h == 1) as u64,
            last[2] + record.adversary_pows.len() as u64,
        ]);
        self.rounds.push(record);
    }

    /// Final chain of every honest party (empty chains before any round).
    pub fn final_heads(&self) -> Vec<BlockId> {
        match self.rounds.last() {
            Some(r) => r.heads.clone(),
            None => vec![ROOT; self.meta.n as usize],
        }
    }

    pub fn final_chains(&self) -> Vec<Chain> {
        self.final_heads()
            .iter()
            .map(|&h| self.store.chain(h))
            .collect()
    }
}

/// Runs trial `trial` of `config`.
pub fn run_execution(config: &ExecutionConfig, trial: u32) -> Result<ExecutionTrace> {
    config.validate()?;
    let seeds = TrialSeeds::derive(config.seed, trial);
    let oracle = config.oracle.with_seed(seeds.oracle);
    let meta = TraceMeta {
        n: config.n,
        oracle,
        eps: config.eps,
        adversary: config.adversary,
        trial,
        seeds,
        f: config.f(),
    };
    let mut trace = ExecutionTrace::new(meta, config.max_blocks);
    let mut adversary = AdversaryState::new(
        config.adversary,
        oracle.p(),
        ChaCha8Rng::seed_from_u64(seeds.adversary),
    );
    let n = config.n as usize;
    let mut heads = vec![ROOT; n];
    let mut honest_inbox: Vec<HonestMessage> = Vec::new();
    let mut adversary_inbox: Vec<AdversaryMessage> = Vec::new();

    for round in 0..config.rounds {
        let mut rec = RoundRecord {
            round,
            ..RoundRecord::default()
        };
        let store = &mut trace.store;
        let start = heads.clone();

        for (i, head) in heads.iter_mut().enumerate() {
            let party = i as u32;
            let adv = adversary_inbox.iter().filter(|m| match m.to {
                Recipients::All => true,
                Recipients::Party(j) => j == party,
            });
            let incoming = adv
                .map(|m| m.head)
                .chain(honest_inbox.iter().map(|m| m.head));
            for h in incoming {
                rec.delivered.push(Delivery { to: party, head: h });
                let node = store.node(h);
                if node.valid
                    && crate::backbone::prefers(store.height(*head) as usize, node.height as usize)
                {
                    *head = h;
                }
            }
        }

        for (i, head) in heads.iter_mut().enumerate() {
            let party = i as u32;
            let params = *store.params();
            let out = mine(
                &params,
                store.hash(*head),
                honest_payload(round, party),
                params.q,
            );
            if let Some((block, _)) = out.found {
                *head = store.insert(*head, block, Creator::Honest(party), round)?;
                rec.honest_pows.push(HonestPow {
                    party,
                    block: *head,
                });
            }
        }

        for (i, (&now, &before)) in heads.iter().zip(&start).enumerate() {
            if now != before {
                rec.honest_sent.push(HonestMessage {
                    from: i as u32,
                    head: now,
                });
            }
        }

        let action = adversary.act(round, store, &heads)?;
        rec.budget = action.budget;
        rec.adversary_pows = action.pows;
        rec.adversary_sent = action.messages;
        rec.heads = heads.clone();

        honest_inbox = rec.honest_sent.clone();
        adversary_inbox = rec.adversary_sent.clone();
        trace.push_round(rec);
    }
    Ok(trace)
}
