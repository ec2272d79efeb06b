//! Adversary models. Quantum adversaries are block-arrival processes
//! calibrated by the query bounds; every arrival is then turned into a real
//! block by grinding the oracle, so honest validation applies unchanged.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::store::{BlockId, BlockStore};
use super::{AdversaryMessage, Recipients, Result};
use crate::backbone::{grind, mine, Creator};
use crate::bounds::{chain_of_pows_bound, k0_target};

/// Per-round arrival process of adversarial PoWs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    /// Independent Poisson counts with mean `e sqrt(p) Q (1 + rate_eps)`.
    Poisson,
    /// `ceil(k0(window))` PoWs in every `window` consecutive rounds, spread
    /// as evenly as possible.
    WorstCase { window: u64 },
    /// Once per `window` rounds a length `L` with
    /// `Pr[L >= k] = min(1, P(window Q, k))` (made monotone in `k`), spread
    /// evenly over that window.
    TailCoupled { window: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdversarySpec {
    None,
    /// `t` corrupted classical parties with `q` queries each per round.
    Classical {
        t: u32,
    },
    /// Public racing: extend the longest known chain, publish at once.
    QuantumRate {
        queries: u64,
        mode: RateMode,
        rate_eps: f64,
    },
    /// Withhold blocks on a private fork and publish it once it leads the
    /// best public chain by `release_threshold` blocks (`None`: never).
    PrivateChain {
        queries: u64,
        mode: RateMode,
        rate_eps: f64,
        release_threshold: Option<u64>,
    },
}

impl AdversarySpec {
    /// Per-round quantum query budget `Q`, if the model has one.
    pub fn quantum_queries(&self) -> Option<u64> {
        match *self {
            AdversarySpec::QuantumRate { queries, .. }
            | AdversarySpec::PrivateChain { queries, .. } => Some(queries),
            _ => None,
        }
    }

    pub fn rate(&self) -> Option<(u64, RateMode, f64)> {
        match *self {
            AdversarySpec::QuantumRate {
                queries,
                mode,
                rate_eps,
            }
            | AdversarySpec::PrivateChain {
                queries,
                mode,
                rate_eps,
                ..
            } => Some((queries, mode, rate_eps)),
            _ => None,
        }
    }

    pub(crate) fn validate(&self) -> std::result::Result<(), String> {
        if let Some((_, mode, rate_eps)) = self.rate() {
            if !(rate_eps >= 0.0 && rate_eps.is_finite()) {
                return Err(format!("rate_eps must be finite and >= 0, got {rate_eps}"));
            }
            match mode {
                RateMode::WorstCase { window } | RateMode::TailCoupled { window }
                    if window == 0 =>
                {
                    return Err("adversary window must be >= 1".into())
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Produces the number of adversarial PoWs granted in each round.
#[derive(Debug, Clone)]
pub struct BlockBudget {
    queries: u64,
    mode: RateMode,
    p: f64,
    rate_eps: f64,
    per_window: u64,
    poisson: Option<Poisson<f64>>,
    tail: Vec<f64>,
}

/// Longest tail table built for tail-coupled sampling.
const TAIL_CAP: u64 = 1 << 20;

impl BlockBudget {
    pub fn new(queries: u64, mode: RateMode, p: f64, rate_eps: f64) -> Self {
        let mut budget = Self {
            queries,
            mode,
            p,
            rate_eps,
            per_window: 0,
            poisson: None,
            tail: Vec::new(),
        };
        if queries == 0 {
            return budget;
        }
        match mode {
            RateMode::Poisson => {
                budget.poisson = Poisson::new(budget.poisson_mean()).ok();
            }
            RateMode::WorstCase { window } => {
                budget.per_window = k0_target(window, queries, p, rate_eps).ceil() as u64;
            }
            RateMode::TailCoupled { window } => {
                budget.tail = monotone_log_tail(window * queries, p);
            }
        }
        budget
    }

    pub fn poisson_mean(&self) -> f64 {
        std::f64::consts::E * self.p.sqrt() * self.queries as f64 * (1.0 + self.rate_eps)
    }

    /// Blocks per window in worst-case mode.
    pub fn per_window(&self) -> u64 {
        self.per_window
    }

    /// PoWs granted at `round`. Tail-coupled mode draws a fresh length at
    /// every window start, so rounds must be visited in order.
    pub fn step(&mut self, round: u64, rng: &mut ChaCha8Rng) -> u64 {
        if self.queries == 0 {
            return 0;
        }
        match self.mode {
            RateMode::Poisson => self.poisson.map_or(0, |d| d.sample(rng) as u64),
            RateMode::WorstCase { window } => spread(self.per_window, window, round % window),
            RateMode::TailCoupled { window } => {
                if round.is_multiple_of(window) {
                    let u: f64 = 1.0 - rng.random::<f64>();
                    let lu = u.ln();
                    self.per_window = self.tail.iter().take_while(|&&lt| lt >= lu).count() as u64;
                }
                spread(self.per_window, window, round % window)
            }
        }
    }
}

/// Share of `total` items that falls on slot `i` of `slots` when spread
/// evenly: `ceil((i+1) total / slots) - ceil(i total / slots)`.
pub fn spread(total: u64, slots: u64, i: u64) -> u64 {
    let c = |a: u64| ((a as u128 * total as u128).div_ceil(slots as u128)) as u64;
    c(i + 1) - c(i)
}

/// `ln min(1, min_{j <= k} P(queries, j))` for `k = 1, 2, ..` until the
/// value drops below `ln 2^-64` (or the cap).
fn monotone_log_tail(queries: u64, p: f64) -> Vec<f64> {
    let floor = -64.0 * std::f64::consts::LN_2;
    let mut out = Vec::new();
    let mut cur = 0.0f64;
    for k in 1..=TAIL_CAP {
        let lr = chain_of_pows_bound(queries, k, p)
            .map(|b| b.closed.log_raw)
            .unwrap_or(f64::NEG_INFINITY);
        cur = cur.min(lr);
        if cur < floor {
            break;
        }
        out.push(cur);
    }
    out
}

/// Bookkeeping of the acting adversary between rounds.
#[derive(Debug, Clone)]
pub(crate) struct AdversaryState {
    spec: AdversarySpec,
    budget: Option<BlockBudget>,
    rng: ChaCha8Rng,
    head: BlockId,
    published: BlockId,
    seq: u64,
}

pub(crate) struct AdversaryAction {
    pub budget: u64,
    pub pows: Vec<BlockId>,
    pub messages: Vec<AdversaryMessage>,
}

impl AdversaryState {
    pub fn new(spec: AdversarySpec, p: f64, rng: ChaCha8Rng) -> Self {
        let budget = spec
            .rate()
            .map(|(queries, mode, rate_eps)| BlockBudget::new(queries, mode, p, rate_eps));
        Self {
            spec,
            budget,
            rng,
            head: super::store::ROOT,
            published: super::store::ROOT,
            seq: 0,
        }
    }

    fn payload(&mut self, round: u64) -> Vec<u8> {
        let mut x = b"adv".to_vec();
        x.extend_from_slice(&round.to_be_bytes());
        x.extend_from_slice(&self.seq.to_be_bytes());
        self.seq += 1;
        x
    }

    fn grind_on_head(
        &mut self,
        store: &mut BlockStore,
        count: u64,
        round: u64,
        pows: &mut Vec<BlockId>,
    ) -> Result<()> {
        for _ in 0..count {
            let prefix = self.payload(round);
            let (block, _, _) = grind(store.params(), store.hash(self.head), &prefix);
            self.head = store.insert(self.head, block, Creator::Adversary, round)?;
            pows.push(self.head);
        }
        Ok(())
    }

    /// Acts after the honest parties of `round` (rushing): `heads` are their
    /// chains at the end of the round.
    pub fn act(
        &mut self,
        round: u64,
        store: &mut BlockStore,
        heads: &[BlockId],
    ) -> Result<AdversaryAction> {
        let mut pows = Vec::new();
        let mut messages = Vec::new();
        let best_public = best_head(store, heads);
        let granted = match self.budget.as_mut() {
            Some(b) => b.step(round, &mut self.rng),
            None => 0,
        };
        match self.spec {
            AdversarySpec::None => {}
            AdversarySpec::Classical { t } => {
                if store.height(best_public) > store.height(self.head) {
                    self.head = best_public;
                }
                let q = store.params().q;
                for _ in 0..t {
                    let payload = self.payload(round);
                    let params = *store.params();
                    let out = mine(&params, store.hash(self.head), payload, q);
                    if let Some((block, _)) = out.found {
                        self.head = store.insert(self.head, block, Creator::Adversary, round)?;
                        pows.push(self.head);
                    }
                }
            }
            AdversarySpec::QuantumRate { .. } => {
                if store.height(best_public) > store.height(self.head) {
                    self.head = best_public;
                }
                self.grind_on_head(store, granted, round, &mut pows)?;
            }
            AdversarySpec::PrivateChain {
                release_threshold, ..
            } => {
                let public = store.height(best_public);
                if public > store.height(self.head) {
                    self.head = best_public;
                }
                self.grind_on_head(store, granted, round, &mut pows)?;
                let private = store.height(self.head);
                let lead_ok = release_threshold
                    .is_some_and(|thr| private > public && private as u64 >= public as u64 + thr);
                if lead_ok && self.head != self.published {
                    messages.push(AdversaryMessage {
                        to: Recipients::All,
                        head: self.head,
                    });
                    self.published = self.head;
                }
            }
        }
        if !matches!(self.spec, AdversarySpec::PrivateChain { .. }) && !pows.is_empty() {
            messages.push(AdversaryMessage {
                to: Recipients::All,
                head: self.head,
            });
            self.published = self.head;
        }
        Ok(AdversaryAction {
            budget: granted,
            pows,
            messages,
        })
    }
}

/// Highest head, earliest party on ties.
fn best_head(store: &BlockStore, heads: &[BlockId]) -> BlockId {
    let mut best = super::store::ROOT;
    for &h in heads {
        if store.height(h) > store.height(best) {
            best = h;
        }
    }
    best
}
