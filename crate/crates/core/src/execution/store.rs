//! Arena of every block created during an execution, with ancestor
//! queries and anomaly detection.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ExecutionError, Result};
use crate::backbone::{valid_block, Block, Chain, Creator, OracleParams, Provenance};

pub type BlockId = u32;

/// The empty chain. Its hash is 0, the link carried by every first block.
pub const ROOT: BlockId = 0;

const LEVELS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// The new block's hash equals the link of an older block, so it can be
    /// spliced in front of that block.
    Insertion,
    /// The same `<s, x, ctr>` was stored twice.
    Copy,
    /// The block extends a block created in a later round.
    Prediction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anomaly {
    pub kind: AnomalyKind,
    pub block: BlockId,
    /// The older block involved.
    pub other: BlockId,
    pub round: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    /// `None` only for [`ROOT`].
    pub block: Option<Block>,
    pub parent: BlockId,
    pub height: u32,
    pub hash: u64,
    pub creator: Option<Creator>,
    pub round: u64,
    /// The whole path from the root is a valid chain.
    pub valid: bool,
    /// Honest blocks on the path from the root, this one included.
    pub honest_count: u32,
}

#[derive(Debug, Clone)]
pub struct BlockStore {
    params: OracleParams,
    nodes: Vec<Node>,
    up: Vec<[BlockId; LEVELS]>,
    by_link: HashMap<u64, Vec<BlockId>>,
    by_content: HashMap<Block, BlockId>,
    anomalies: Vec<Anomaly>,
    max_blocks: usize,
}

impl BlockStore {
    pub fn new(params: OracleParams, max_blocks: usize) -> Self {
        let root = Node {
            block: None,
            parent: ROOT,
            height: 0,
            hash: 0,
            creator: None,
            round: 0,
            valid: true,
            honest_count: 0,
        };
        Self {
            params,
            nodes: vec![root],
            up: vec![[ROOT; LEVELS]],
            by_link: HashMap::new(),
            by_content: HashMap::new(),
            anomalies: Vec::new(),
            max_blocks,
        }
    }

    pub fn params(&self) -> &OracleParams {
        &self.params
    }

    /// Number of stored blocks, the root excluded.
    pub fn len(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, id: BlockId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn height(&self, id: BlockId) -> u32 {
        self.nodes[id as usize].height
    }

    pub fn hash(&self, id: BlockId) -> u64 {
        self.nodes[id as usize].hash
    }

    pub fn anomalies(&self) -> &[Anomaly] {
        &self.anomalies
    }

    /// Stores `block` as a child of `parent`. Validity is recomputed, never
    /// trusted.
    pub fn insert(
        &mut self,
        parent: BlockId,
        block: Block,
        creator: Creator,
        round: u64,
    ) -> Result<BlockId> {
        if self.len() >= self.max_blocks {
            return Err(ExecutionError::Resource(format!(
                "block store limit of {} blocks reached",
                self.max_blocks
            )));
        }
        let pid = parent as usize;
        let id = self.nodes.len() as BlockId;
        let hash = block.hash(&self.params);
        let p = &self.nodes[pid];
        let valid = p.valid && valid_block(&self.params, &block, Some(p.hash));
        let honest = matches!(creator, Creator::Honest(_)) as u32;

        if parent != ROOT && p.round > round {
            self.anomalies.push(Anomaly {
                kind: AnomalyKind::Prediction,
                block: id,
                other: parent,
                round,
            });
        }
        if let Some(&other) = self.by_content.get(&block) {
            self.anomalies.push(Anomaly {
                kind: AnomalyKind::Copy,
                block: id,
                other,
                round,
            });
        } else if let Some(later) = self.by_link.get(&hash) {
            self.anomalies.push(Anomaly {
                kind: AnomalyKind::Insertion,
                block: id,
                other: later[0],
                round,
            });
        }

        let node = Node {
            parent,
            height: p.height + 1,
            hash,
            creator: Some(creator),
            round,
            valid,
            honest_count: p.honest_count + honest,
            block: None,
        };
        let mut up = [ROOT; LEVELS];
        up[0] = parent;
        for j in 1..LEVELS {
            up[j] = self.up[up[j - 1] as usize][j - 1];
        }
        self.by_link.entry(block.s).or_default().push(id);
        self.by_content.entry(block.clone()).or_insert(id);
        self.nodes.push(Node {
            block: Some(block),
            ..node
        });
        self.up.push(up);
        Ok(id)
    }

    /// Ancestor of `id` at `height` (which must not exceed `id`'s height).
    pub fn ancestor_at(&self, mut id: BlockId, height: u32) -> BlockId {
        let h = self.height(id);
        debug_assert!(height <= h);
        let mut diff = h - height;
        let mut j = 0;
        while diff > 0 {
            if diff & 1 == 1 {
                id = self.up[id as usize][j];
            }
            diff >>= 1;
            j += 1;
        }
        id
    }

    /// Deepest common ancestor.
    pub fn lca(&self, a: BlockId, b: BlockId) -> BlockId {
        let (mut a, mut b) = if self.height(a) >= self.height(b) {
            (a, b)
        } else {
            (b, a)
        };
        a = self.ancestor_at(a, self.height(b));
        if a == b {
            return a;
        }
        for j in (0..LEVELS).rev() {
            let (ua, ub) = (self.up[a as usize][j], self.up[b as usize][j]);
            if ua != ub {
                a = ua;
                b = ub;
            }
        }
        self.up[a as usize][0]
    }

    /// Block ids from height 1 up to `id`.
    pub fn path(&self, id: BlockId) -> Vec<BlockId> {
        let mut out = Vec::with_capacity(self.height(id) as usize);
        let mut cur = id;
        while cur != ROOT {
            out.push(cur);
            cur = self.nodes[cur as usize].parent;
        }
        out.reverse();
        out
    }

    pub fn chain(&self, id: BlockId) -> Chain {
        let mut chain = Chain::default();
        for b in self.path(id) {
            let n = &self.nodes[b as usize];
            chain.push(
                n.block.clone().expect("non-root node carries a block"),
                Provenance {
                    creator: n.creator.expect("non-root node has a creator"),
                    round: n.round,
                },
            );
        }
        chain
    }
}
