//! Blocks, chains and honest-party logic of the backbone protocol.
//!
//! Both random oracles are one keyed function,
//!
//! ```text
//! oracle(seed, role, input) = top kappa bits of
//!     SHA-256(seed as 8-byte big-endian || role tag || input)[0..8]
//! ```
//!
//! with role tags `b"G"` and `b"H"`. Preimages are laid out as
//!
//! ```text
//! G input: s as 8-byte big-endian || x
//! H input: ctr as 8-byte big-endian || G output as 8-byte big-endian
//! ```
//!
//! so a block `<s, x, ctr>` hashes to `H(ctr, G(s, x))` and its successor
//! must carry that value as `s`. The first block of every chain has `s = 0`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackboneError {
    #[error("kappa must be in 1..=63, got {0}")]
    Kappa(u32),
    #[error("target {target} must satisfy 0 < T < 2^{kappa}")]
    Target { target: u64, kappa: u32 },
    #[error("probability {0} cannot be represented as T / 2^kappa with 0 < T < 2^kappa")]
    Probability(f64),
    #[error("malformed chain encoding: {0}")]
    Decode(String),
}

pub type Result<T> = std::result::Result<T, BackboneError>;

pub const DEFAULT_KAPPA: u32 = 32;

/// Hash width, difficulty target, honest query cap and oracle seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleParams {
    pub kappa: u32,
    pub target: u64,
    pub q: u32,
    pub seed: u64,
}

impl OracleParams {
    pub fn new(kappa: u32, target: u64, q: u32, seed: u64) -> Result<Self> {
        let params = Self {
            kappa,
            target,
            q,
            seed,
        };
        params.validate()?;
        Ok(params)
    }

    /// Target `T = round(p 2^kappa)`; the realized `p` is `T / 2^kappa`.
    pub fn with_probability(p: f64, kappa: u32, q: u32, seed: u64) -> Result<Self> {
        if !(1..=63).contains(&kappa) {
            return Err(BackboneError::Kappa(kappa));
        }
        let scaled = (p * (1u64 << kappa) as f64).round();
        if !(scaled >= 1.0 && scaled < (1u64 << kappa) as f64) {
            return Err(BackboneError::Probability(p));
        }
        Self::new(kappa, scaled as u64, q, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=63).contains(&self.kappa) {
            return Err(BackboneError::Kappa(self.kappa));
        }
        if self.target == 0 || self.target >= 1u64 << self.kappa {
            return Err(BackboneError::Target {
                target: self.target,
                kappa: self.kappa,
            });
        }
        Ok(())
    }

    /// `p = T / 2^kappa`, exact in binary floating point for kappa <= 52.
    pub fn p(&self) -> f64 {
        self.target as f64 / (1u64 << self.kappa) as f64
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    G,
    H,
}

impl Role {
    fn tag(self) -> &'static [u8] {
        match self {
            Role::G => b"G",
            Role::H => b"H",
        }
    }
}

pub fn oracle_eval(params: &OracleParams, role: Role, input: &[u8]) -> u64 {
    let mut h = Sha256::new();
    h.update(params.seed.to_be_bytes());
    h.update(role.tag());
    h.update(input);
    let digest = h.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(head) >> (64 - params.kappa)
}

/// `G(s, x)`.
pub fn g_value(params: &OracleParams, s: u64, x: &[u8]) -> u64 {
    let mut input = Vec::with_capacity(8 + x.len());
    input.extend_from_slice(&s.to_be_bytes());
    input.extend_from_slice(x);
    oracle_eval(params, Role::G, &input)
}

/// `H(ctr, g)`.
pub fn h_value(params: &OracleParams, ctr: u64, g: u64) -> u64 {
    let mut input = [0u8; 16];
    input[..8].copy_from_slice(&ctr.to_be_bytes());
    input[8..].copy_from_slice(&g.to_be_bytes());
    oracle_eval(params, Role::H, &input)
}

/// A block `<s, x, ctr>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Block {
    pub s: u64,
    pub x: Vec<u8>,
    pub ctr: u64,
}

impl Block {
    pub fn hash(&self, params: &OracleParams) -> u64 {
        h_value(params, self.ctr, g_value(params, self.s, &self.x))
    }
}

/// Block validity: `H(ctr, G(s, x)) < T`, `ctr <= q` and, when `prev_hash`
/// is given, `s = prev_hash`.
pub fn valid_block(params: &OracleParams, block: &Block, prev_hash: Option<u64>) -> bool {
    if block.ctr > params.q as u64 {
        return false;
    }
    if let Some(prev) = prev_hash {
        if block.s != prev {
            return false;
        }
    }
    block.hash(params) < params.target
}

/// Who created a block. Simulation metadata, not hashed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Creator {
    Honest(u32),
    Adversary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub creator: Creator,
    pub round: u64,
}

/// A sequence of blocks, oldest first. The empty chain is `Chain::default()`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Chain {
    pub blocks: Vec<Block>,
    pub provenance: Vec<Provenance>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn head(&self) -> Option<&Block> {
        self.blocks.last()
    }

    /// Link value a new block on top of this chain must carry.
    pub fn head_hash(&self, params: &OracleParams) -> u64 {
        self.head().map_or(0, |b| b.hash(params))
    }

    pub fn push(&mut self, block: Block, provenance: Provenance) {
        self.blocks.push(block);
        self.provenance.push(provenance);
    }

    /// Length-prefixed binary form: `u64 count`, then per block
    /// `s (8) || ctr (8) || len(x) as u32 (4) || x`, all big-endian.
    /// Provenance is not encoded.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.blocks.len() as u64).to_be_bytes());
        for b in &self.blocks {
            out.extend_from_slice(&b.s.to_be_bytes());
            out.extend_from_slice(&b.ctr.to_be_bytes());
            out.extend_from_slice(&(b.x.len() as u32).to_be_bytes());
            out.extend_from_slice(&b.x);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
            if bytes.len() < n {
                return Err(BackboneError::Decode("truncated input".into()));
            }
            let (head, rest) = bytes.split_at(n);
            *bytes = rest;
            Ok(head)
        }
        let mut rest = bytes;
        let count = u64::from_be_bytes(take(&mut rest, 8)?.try_into().expect("8 bytes"));
        let mut chain = Chain::default();
        for _ in 0..count {
            let s = u64::from_be_bytes(take(&mut rest, 8)?.try_into().expect("8 bytes"));
            let ctr = u64::from_be_bytes(take(&mut rest, 8)?.try_into().expect("8 bytes"));
            let len = u32::from_be_bytes(take(&mut rest, 4)?.try_into().expect("4 bytes"));
            let x = take(&mut rest, len as usize)?.to_vec();
            chain.blocks.push(Block { s, x, ctr });
        }
        if !rest.is_empty() {
            return Err(BackboneError::Decode(format!(
                "{} trailing bytes",
                rest.len()
            )));
        }
        Ok(chain)
    }
}

/// Every block is valid and links to its predecessor; the first links to 0.
pub fn validate_chain(params: &OracleParams, chain: &Chain) -> bool {
    let mut prev = 0u64;
    for block in &chain.blocks {
        if !valid_block(params, block, Some(prev)) {
            return false;
        }
        prev = block.hash(params);
    }
    true
}

/// Drops the `k` rightmost blocks; `k >= len` gives the empty chain.
pub fn prune(chain: &Chain, k: usize) -> Chain {
    let keep = chain.len().saturating_sub(k);
    Chain {
        blocks: chain.blocks[..keep].to_vec(),
        provenance: chain.provenance[..keep.min(chain.provenance.len())].to_vec(),
    }
}

/// `c1` is a prefix of `c2` (block sequences only).
pub fn is_prefix(c1: &Chain, c2: &Chain) -> bool {
    c1.len() <= c2.len() && c1.blocks[..] == c2.blocks[..c1.len()]
}

/// Longest-chain rule: a candidate replaces the current choice only when
/// strictly longer, so ties keep `current` and then the earliest received.
pub fn prefers(current_len: usize, candidate_len: usize) -> bool {
    candidate_len > current_len
}

/// Picks among `current` and the valid chains in `received`.
pub fn select_chain(params: &OracleParams, current: &Chain, received: &[Chain]) -> Chain {
    let mut best = current;
    for c in received {
        if prefers(best.len(), c.len()) && validate_chain(params, c) {
            best = c;
        }
    }
    best.clone()
}

/// Stub payload of an honest block: `round (8) || party (4)`, big-endian.
pub fn honest_payload(round: u64, party: u32) -> Vec<u8> {
    let mut x = Vec::with_capacity(12);
    x.extend_from_slice(&round.to_be_bytes());
    x.extend_from_slice(&party.to_be_bytes());
    x
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiningOutcome {
    /// The block and its hash when a PoW was found.
    pub found: Option<(Block, u64)>,
    pub queries_used: u32,
}

/// Tries `ctr = 0, 1, ..` (at most `max_queries` of them, never beyond `q`)
/// on top of `prev_hash` and stops at the first success.
pub fn mine(
    params: &OracleParams,
    prev_hash: u64,
    payload: Vec<u8>,
    max_queries: u32,
) -> MiningOutcome {
    let g = g_value(params, prev_hash, &payload);
    let tries = max_queries.min(params.q);
    for ctr in 0..tries {
        let h = h_value(params, ctr as u64, g);
        if h < params.target {
            return MiningOutcome {
                found: Some((
                    Block {
                        s: prev_hash,
                        x: payload,
                        ctr: ctr as u64,
                    },
                    h,
                )),
                queries_used: ctr + 1,
            };
        }
    }
    MiningOutcome {
        found: None,
        queries_used: tries,
    }
}

/// Searches payloads `prefix || nonce (8, big-endian)` for `nonce = 0, 1, ..`
/// and `ctr = 0..=q` until a PoW on `prev_hash` is found. Returns the block,
/// its hash and the number of `H` evaluations spent. Used by adversaries
/// whose block count is fixed by a calibrated budget rather than by queries.
pub fn grind(params: &OracleParams, prev_hash: u64, prefix: &[u8]) -> (Block, u64, u64) {
    let mut spent = 0u64;
    for nonce in 0u64.. {
        let mut x = prefix.to_vec();
        x.extend_from_slice(&nonce.to_be_bytes());
        let g = g_value(params, prev_hash, &x);
        for ctr in 0..=params.q as u64 {
            spent += 1;
            let h = h_value(params, ctr, g);
            if h < params.target {
                return (
                    Block {
                        s: prev_hash,
                        x,
                        ctr,
                    },
                    h,
                    spent,
                );
            }
        }
    }
    unreachable!("nonce space exhausted")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HonestRound {
    pub new_block: Option<Block>,
    pub chain: Chain,
    pub queries_used: u32,
}

/// One round of honest mining on top of `chain` with the full budget `q`.
pub fn honest_round(params: &OracleParams, chain: &Chain, round: u64, party: u32) -> HonestRound {
    let outcome = mine(
        params,
        chain.head_hash(params),
        honest_payload(round, party),
        params.q,
    );
    let mut chain = chain.clone();
    let new_block = outcome.found.map(|(b, _)| {
        chain.push(
            b.clone(),
            Provenance {
                creator: Creator::Honest(party),
                round,
            },
        );
        b
    });
    HonestRound {
        new_block,
        chain,
        queries_used: outcome.queries_used,
    }
}
