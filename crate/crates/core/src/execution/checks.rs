//! Window counters and property checkers over a finished trace.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::store::{AnomalyKind, BlockId, ROOT};
use super::{AdversarySpec, ExecutionError, ExecutionTrace, Result};

/// `X`, `Y`, `Z` over rounds `start .. start + s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowCounters {
    /// Rounds with at least one honest PoW.
    pub x: u64,
    /// Rounds with exactly one honest PoW.
    pub y: u64,
    /// Adversarial PoWs.
    pub z: u64,
    pub start: u64,
    pub s: u64,
}

fn check_window(trace: &ExecutionTrace, start: u64, s: u64) -> Result<()> {
    if start.checked_add(s).is_none_or(|end| end > trace.len()) {
        return Err(ExecutionError::Window {
            start,
            s,
            rounds: trace.len(),
        });
    }
    Ok(())
}

/// Counters from the running totals kept during the execution.
pub fn counters(trace: &ExecutionTrace, start: u64, s: u64) -> Result<WindowCounters> {
    check_window(trace, start, s)?;
    let a = trace.cumulative[start as usize];
    let b = trace.cumulative[(start + s) as usize];
    Ok(WindowCounters {
        x: b[0] - a[0],
        y: b[1] - a[1],
        z: b[2] - a[2],
        start,
        s,
    })
}

/// Counters recomputed from the raw PoW events.
pub fn recount(trace: &ExecutionTrace, start: u64, s: u64) -> Result<WindowCounters> {
    check_window(trace, start, s)?;
    let mut out = WindowCounters {
        x: 0,
        y: 0,
        z: 0,
        start,
        s,
    };
    for r in &trace.rounds[start as usize..(start + s) as usize] {
        let parties: HashSet<u32> = r.honest_pows.iter().map(|e| e.party).collect();
        let h = r.honest_pows.len();
        debug_assert_eq!(parties.len(), h);
        out.x += (h >= 1) as u64;
        out.y += (h == 1) as u64;
        out.z += r.adversary_pows.len() as u64;
    }
    Ok(out)
}

/// Running totals agree with a recount at every prefix.
pub fn counters_consistent(trace: &ExecutionTrace) -> bool {
    if trace.cumulative.len() != trace.rounds.len() + 1 {
        return false;
    }
    let mut acc = [0u64; 3];
    if trace.cumulative[0] != acc {
        return false;
    }
    for r in 0..trace.rounds.len() {
        let c = recount(trace, r as u64, 1).expect("round within trace");
        acc = [acc[0] + c.x, acc[1] + c.y, acc[2] + c.z];
        if trace.cumulative[r + 1] != acc {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `(1-eps) f s < X < (1+eps) f s`.
    XBand,
    /// `(1-eps) E[Y] < Y`.
    YLower,
    /// The adversarial PoW cap.
    Adversary,
    Insertion,
    Copy,
    Prediction,
}

impl From<AnomalyKind> for Condition {
    fn from(kind: AnomalyKind) -> Self {
        match kind {
            AnomalyKind::Insertion => Condition::Insertion,
            AnomalyKind::Copy => Condition::Copy,
            AnomalyKind::Prediction => Condition::Prediction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowFailure {
    pub start: u64,
    pub condition: Condition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypicalReport {
    pub s: u64,
    pub eps: f64,
    pub f: f64,
    pub windows: u64,
    pub x_band_violations: u64,
    pub y_violations: u64,
    pub b_violations: u64,
    pub c_violations: u64,
    /// `Z` must stay strictly below this.
    pub z_threshold: f64,
    pub max_z: u64,
    pub passed: bool,
    pub first_failure: Option<WindowFailure>,
}

impl TypicalReport {
    pub fn x_band_fraction(&self) -> f64 {
        self.x_band_violations as f64 / self.windows as f64
    }
}

/// Evaluates the typical-execution conditions on every window of exactly
/// `s` rounds (sliding by one).
///
/// The adversary cap is `(1-eps) f (1-f) s`, except against `classical(t)`
/// where it is `p q t s + eps f s`.
pub fn typical_check(trace: &ExecutionTrace, eps: f64, s: u64) -> Result<TypicalReport> {
    let meta = &trace.meta;
    let f = meta.f;
    if s == 0 || (s as f64) * f < 2.0 {
        return Err(ExecutionError::Precondition { s, f });
    }
    check_window(trace, 0, s)?;
    let p = meta.oracle.p();
    let q = meta.oracle.q as f64;
    let n = meta.n as f64;
    let sf = s as f64;
    let f1 = -(q * (-p).ln_1p()).exp_m1();
    let expected_y = sf * n * f1 * (1.0 - f1).powf(n - 1.0);
    let z_threshold = match meta.adversary {
        AdversarySpec::Classical { t } => p * q * t as f64 * sf + eps * f * sf,
        _ => (1.0 - eps) * f * (1.0 - f) * sf,
    };

    let mut anomalies_before = vec![0u64; trace.rounds.len() + 1];
    for a in trace.store.anomalies() {
        let r = (a.round as usize).min(trace.rounds.len());
        anomalies_before[r] += 1;
    }
    let mut acc = 0;
    for slot in anomalies_before.iter_mut() {
        let here = *slot;
        *slot = acc;
        acc += here;
    }

    let mut report = TypicalReport {
        s,
        eps,
        f,
        windows: trace.len() - s + 1,
        x_band_violations: 0,
        y_violations: 0,
        b_violations: 0,
        c_violations: 0,
        z_threshold,
        max_z: 0,
        passed: true,
        first_failure: None,
    };
    for start in 0..report.windows {
        let c = counters(trace, start, s)?;
        let x = c.x as f64;
        let mut failed = Vec::new();
        if !((1.0 - eps) * f * sf < x && x < (1.0 + eps) * f * sf) {
            report.x_band_violations += 1;
            failed.push(Condition::XBand);
        }
        if !((1.0 - eps) * expected_y < c.y as f64) {
            report.y_violations += 1;
            failed.push(Condition::YLower);
        }
        report.max_z = report.max_z.max(c.z);
        if !((c.z as f64) < z_threshold) {
            report.b_violations += 1;
            failed.push(Condition::Adversary);
        }
        let end = (start + s) as usize;
        if anomalies_before[end] > anomalies_before[start as usize] {
            report.c_violations += 1;
            let kind = trace
                .store
                .anomalies()
                .iter()
                .find(|a| a.round >= start && a.round < start + s)
                .map(|a| a.kind)
                .expect("counted anomaly exists");
            failed.push(kind.into());
        }
        if let Some(&condition) = failed.first() {
            report.passed = false;
            report
                .first_failure
                .get_or_insert(WindowFailure { start, condition });
        }
    }
    Ok(report)
}

/// Rounds `r1 <= r2` and parties whose chains violate the prefix relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForkWitness {
    pub round1: u64,
    pub party1: u32,
    pub round2: u64,
    pub party2: u32,
    pub len1: u32,
    pub len2: u32,
    /// Blocks of the first chain beyond the common ancestor.
    pub depth: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommonPrefixReport {
    pub k: usize,
    pub passed: bool,
    /// Largest number of blocks any chain had to drop to become a prefix of
    /// every later chain.
    pub max_divergence: u32,
    pub witness: Option<ForkWitness>,
}

/// For all parties and rounds `r1 <= r2`, pruning `k` blocks from the chain
/// at `r1` leaves a prefix of every chain at `r2`.
///
/// Uses `L_r`, the common ancestor of every chain held at rounds `>= r`: the
/// relation holds at `r` iff each chain at `r` is within `k` blocks of `L_r`.
pub fn common_prefix_check(trace: &ExecutionTrace, k: usize) -> CommonPrefixReport {
    let store = &trace.store;
    let rounds = &trace.rounds;
    let mut later = vec![ROOT; rounds.len()];
    let mut acc: Option<BlockId> = None;
    for (r, rec) in rounds.iter().enumerate().rev() {
        for &h in &rec.heads {
            acc = Some(acc.map_or(h, |a| store.lca(a, h)));
        }
        later[r] = acc.unwrap_or(ROOT);
    }
    let mut report = CommonPrefixReport {
        k,
        passed: true,
        max_divergence: 0,
        witness: None,
    };
    for (r, rec) in rounds.iter().enumerate() {
        let base = store.height(later[r]);
        for (party, &h) in rec.heads.iter().enumerate() {
            let d = store.height(h) - base;
            report.max_divergence = report.max_divergence.max(d);
            if d as usize > k && report.witness.is_none() {
                report.passed = false;
                report.witness = find_witness(trace, r, party, k);
            }
        }
    }
    report
}

fn find_witness(trace: &ExecutionTrace, r1: usize, p1: usize, k: usize) -> Option<ForkWitness> {
    let store = &trace.store;
    let c1 = trace.rounds[r1].heads[p1];
    let h1 = store.height(c1);
    for (r2, rec) in trace.rounds.iter().enumerate().skip(r1) {
        for (p2, &c2) in rec.heads.iter().enumerate() {
            let depth = h1 - store.height(store.lca(c1, c2));
            if depth as usize > k {
                return Some(ForkWitness {
                    round1: r1 as u64,
                    party1: p1 as u32,
                    round2: r2 as u64,
                    party2: p2 as u32,
                    len1: h1,
                    len2: store.height(c2),
                    depth,
                });
            }
        }
    }
    None
}

/// Every block on some honest party's chain at some round.
fn adopted_blocks(trace: &ExecutionTrace) -> Vec<bool> {
    let store = &trace.store;
    let mut marked = vec![false; store.nodes().len()];
    marked[ROOT as usize] = true;
    for rec in &trace.rounds {
        for &h in &rec.heads {
            let mut cur = h;
            while !marked[cur as usize] {
                marked[cur as usize] = true;
                cur = store.node(cur).parent;
            }
        }
    }
    marked[ROOT as usize] = false;
    marked
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainQualityReport {
    pub l: usize,
    pub mu: f64,
    pub passed: bool,
    /// Lowest honest share over all windows (1 when there is none).
    pub worst_ratio: f64,
    /// Top block of the worst window.
    pub worst_block: Option<BlockId>,
    pub windows: u64,
    pub violations: u64,
}

/// Honest share of every `l` consecutive blocks of every adopted chain.
pub fn chain_quality_check(
    trace: &ExecutionTrace,
    l: usize,
    mu: f64,
) -> Result<ChainQualityReport> {
    if l == 0 {
        return Err(ExecutionError::InvalidConfig(
            "chain quality needs l >= 1".into(),
        ));
    }
    let store = &trace.store;
    let mut report = ChainQualityReport {
        l,
        mu,
        passed: true,
        worst_ratio: 1.0,
        worst_block: None,
        windows: 0,
        violations: 0,
    };
    for (id, &on) in adopted_blocks(trace).iter().enumerate() {
        let id = id as BlockId;
        let h = store.height(id) as usize;
        if !on || h < l {
            continue;
        }
        let low = store.ancestor_at(id, (h - l) as u32);
        let honest = store.node(id).honest_count - store.node(low).honest_count;
        let ratio = honest as f64 / l as f64;
        report.windows += 1;
        if ratio < mu {
            report.violations += 1;
            report.passed = false;
        }
        if ratio < report.worst_ratio || report.worst_block.is_none() && ratio <= report.worst_ratio
        {
            report.worst_ratio = ratio;
            report.worst_block = Some(id);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanReport {
    pub k: usize,
    /// Spans must exceed `k / (2 f)` rounds.
    pub required: f64,
    pub min_span: Option<u64>,
    pub windows: u64,
    pub violations: u64,
    pub passed: bool,
}

/// Every `k` consecutive blocks of an adopted chain were created over more
/// than `k / (2f)` rounds (first to last, inclusive).
pub fn span_check(trace: &ExecutionTrace, k: usize) -> Result<SpanReport> {
    if k == 0 {
        return Err(ExecutionError::InvalidConfig(
            "span check needs k >= 1".into(),
        ));
    }
    let store = &trace.store;
    let required = k as f64 / (2.0 * trace.meta.f);
    let mut report = SpanReport {
        k,
        required,
        min_span: None,
        windows: 0,
        violations: 0,
        passed: true,
    };
    for (id, &on) in adopted_blocks(trace).iter().enumerate() {
        let id = id as BlockId;
        let h = store.height(id) as usize;
        if !on || h < k {
            continue;
        }
        let first = store.ancestor_at(id, (h - k + 1) as u32);
        let span = store.node(id).round.saturating_sub(store.node(first).round) + 1;
        report.windows += 1;
        report.min_span = Some(report.min_span.map_or(span, |m| m.min(span)));
        if span as f64 <= required {
            report.violations += 1;
            report.passed = false;
        }
    }
    Ok(report)
}

/// Every honest message sent in round `r` reached every honest party at
/// round `r + 1`.
pub fn honest_delivery_check(trace: &ExecutionTrace) -> bool {
    trace.rounds.windows(2).all(|w| {
        let got: HashSet<(u32, BlockId)> = w[1].delivered.iter().map(|d| (d.to, d.head)).collect();
        w[0].honest_sent
            .iter()
            .all(|m| (0..trace.meta.n).all(|p| got.contains(&(p, m.head))))
    })
}

#[cfg(test)]
mod tests {
    use super::super::{
        run_execution, ExecutionConfig, HonestPow, RoundRecord, TraceMeta, TrialSeeds,
    };
    use super::*;
    use crate::backbone::{grind, Creator, OracleParams};

    fn meta(n: u32, p: f64, q: u32) -> TraceMeta {
        let oracle = OracleParams::with_probability(p, 32, q, 5).unwrap();
        let cfg = ExecutionConfig::new(n, oracle, 0, 0.5);
        TraceMeta {
            n,
            oracle,
            eps: 0.5,
            adversary: AdversarySpec::None,
            trial: 0,
            seeds: TrialSeeds::derive(0, 0),
            f: cfg.f(),
        }
    }

    fn mint(
        trace: &mut ExecutionTrace,
        parent: BlockId,
        tag: &[u8],
        creator: Creator,
        round: u64,
    ) -> BlockId {
        let params = *trace.store.params();
        let (b, _, _) = grind(&params, trace.store.hash(parent), tag);
        trace.store.insert(parent, b, creator, round).unwrap()
    }

    fn blank(trace: &mut ExecutionTrace, rounds: u64, heads: Vec<BlockId>) {
        for _ in 0..rounds {
            let round = trace.len();
            trace.push_round(RoundRecord {
                round,
                heads: heads.clone(),
                ..RoundRecord::default()
            });
        }
    }

    #[test]
    fn empty_window_counts_nothing() {
        let mut t = ExecutionTrace::new(meta(2, 0.01, 4), 100);
        blank(&mut t, 5, vec![ROOT; 2]);
        let c = counters(&t, 3, 0).unwrap();
        assert_eq!((c.x, c.y, c.z), (0, 0, 0));
        assert!(counters(&t, 3, 3).is_err());
    }

    #[test]
    fn two_honest_pows_count_in_x_not_y() {
        let mut t = ExecutionTrace::new(meta(2, 0.01, 4), 100);
        let a = mint(&mut t, ROOT, b"a", Creator::Honest(0), 0);
        let b = mint(&mut t, ROOT, b"b", Creator::Honest(1), 0);
        t.push_round(RoundRecord {
            round: 0,
            honest_pows: vec![
                HonestPow { party: 0, block: a },
                HonestPow { party: 1, block: b },
            ],
            heads: vec![a, b],
            ..RoundRecord::default()
        });
        let c = counters(&t, 0, 1).unwrap();
        assert_eq!((c.x, c.y, c.z), (1, 0, 0));
        assert_eq!(c, recount(&t, 0, 1).unwrap());
        assert!(counters_consistent(&t));
    }

    #[test]
    fn forced_adversary_count_fails_condition_b() {
        // f = 1 - 0.5^4 = 0.9375, s = 4: threshold (1-eps) f (1-f) s = 0.1171875
        let mut t = ExecutionTrace::new(meta(1, 0.5, 4), 100);
        let s = 4u64;
        let f = t.meta.f;
        let forced = ((1.0 - 0.5) * f * (1.0 - f) * s as f64).ceil() as usize;
        let mut head = ROOT;
        for r in 0..8u64 {
            head = mint(&mut t, head, &[r as u8], Creator::Honest(0), r);
            let mut adv = Vec::new();
            if r == 5 {
                for j in 0..forced {
                    adv.push(mint(&mut t, head, &[100 + j as u8], Creator::Adversary, r));
                }
            }
            t.push_round(RoundRecord {
                round: r,
                honest_pows: vec![HonestPow {
                    party: 0,
                    block: head,
                }],
                adversary_pows: adv,
                heads: vec![head],
                ..RoundRecord::default()
            });
        }
        let rep = typical_check(&t, 0.5, s).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.b_violations, 3);
        assert_eq!(
            rep.first_failure,
            Some(WindowFailure {
                start: 2,
                condition: Condition::Adversary
            })
        );
    }

    #[test]
    fn injected_duplicate_fails_condition_c() {
        let mut t = ExecutionTrace::new(meta(1, 0.5, 4), 100);
        let a = mint(&mut t, ROOT, b"a", Creator::Honest(0), 0);
        t.push_round(RoundRecord {
            round: 0,
            honest_pows: vec![HonestPow { party: 0, block: a }],
            heads: vec![a],
            ..RoundRecord::default()
        });
        let copy = t.store.node(a).block.clone().unwrap();
        let d = t.store.insert(ROOT, copy, Creator::Adversary, 1).unwrap();
        t.push_round(RoundRecord {
            round: 1,
            adversary_pows: vec![d],
            heads: vec![a],
            ..RoundRecord::default()
        });
        blank(&mut t, 4, vec![a]);
        let rep = typical_check(&t, 0.5, 3).unwrap();
        assert!(rep.c_violations >= 1);
        assert!(t
            .store
            .anomalies()
            .iter()
            .any(|x| x.kind == AnomalyKind::Copy));
    }

    #[test]
    fn typical_check_requires_sf_at_least_two() {
        let mut t = ExecutionTrace::new(meta(1, 0.01, 1), 100);
        blank(&mut t, 500, vec![ROOT]);
        assert!(matches!(
            typical_check(&t, 0.5, 100),
            Err(ExecutionError::Precondition { .. })
        ));
        assert!(typical_check(&t, 0.5, 201).is_ok());
    }

    #[test]
    fn natural_fork_breaks_k_zero() {
        let mut t = ExecutionTrace::new(meta(2, 0.5, 4), 100);
        let a = mint(&mut t, ROOT, b"a", Creator::Honest(0), 0);
        let b = mint(&mut t, ROOT, b"b", Creator::Honest(1), 0);
        t.push_round(RoundRecord {
            round: 0,
            heads: vec![a, b],
            ..RoundRecord::default()
        });
        let rep = common_prefix_check(&t, 0);
        assert!(!rep.passed);
        let w = rep.witness.unwrap();
        assert_eq!(
            (w.round1, w.party1, w.round2, w.party2, w.depth),
            (0, 0, 0, 1, 1)
        );
        assert!(common_prefix_check(&t, 1).passed);
    }

    #[test]
    fn later_reorg_is_found() {
        let mut t = ExecutionTrace::new(meta(2, 0.5, 4), 100);
        let mut a = ROOT;
        for i in 0..3u8 {
            a = mint(&mut t, a, &[i], Creator::Honest(0), i as u64);
        }
        blank(&mut t, 1, vec![a, a]);
        let mut b = ROOT;
        for i in 0..5u8 {
            b = mint(&mut t, b, &[50 + i], Creator::Adversary, 1);
        }
        blank(&mut t, 1, vec![b, a]);
        let rep = common_prefix_check(&t, 2);
        assert!(!rep.passed);
        let w = rep.witness.unwrap();
        assert_eq!((w.round1, w.round2, w.party2, w.depth), (0, 1, 0, 3));
        assert_eq!(rep.max_divergence, 5);
        assert!(common_prefix_check(&t, 5).passed);
    }

    #[test]
    fn chain_quality_ratios() {
        let mut t = ExecutionTrace::new(meta(1, 0.5, 4), 100);
        let mut h = ROOT;
        for i in 0..4u8 {
            h = mint(&mut t, h, &[i], Creator::Honest(0), i as u64);
        }
        for i in 0..3u8 {
            h = mint(&mut t, h, &[20 + i], Creator::Adversary, 4);
        }
        blank(&mut t, 1, vec![h]);
        let rep = chain_quality_check(&t, 3, 0.5).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.worst_ratio, 0.0);
        assert_eq!(rep.worst_block, Some(h));
        assert_eq!(rep.windows, 5);
        let all = chain_quality_check(&t, 7, 4.0 / 7.0).unwrap();
        assert!(all.passed);
        assert!(chain_quality_check(&t, 0, 0.5).is_err());
    }

    #[test]
    fn single_party_honest_run_properties() {
        let oracle = OracleParams::with_probability(2f64.powi(-6), 32, 2, 0).unwrap();
        let cfg = ExecutionConfig::new(1, oracle, 500, 0.5).with_seed(4);
        let t = run_execution(&cfg, 0).unwrap();
        assert!(common_prefix_check(&t, 0).passed);
        let cq = chain_quality_check(&t, 3, 1.0).unwrap();
        assert!(cq.passed && cq.worst_ratio == 1.0);
        assert!(honest_delivery_check(&t));
        assert!(counters_consistent(&t));
    }

    #[test]
    fn span_of_dense_blocks_is_flagged() {
        let mut t = ExecutionTrace::new(meta(1, 0.01, 4), 100);
        let mut h = ROOT;
        for i in 0..6u8 {
            h = mint(&mut t, h, &[i], Creator::Adversary, 0);
        }
        blank(&mut t, 1, vec![h]);
        let rep = span_check(&t, 3).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.min_span, Some(1));
        assert_eq!(rep.windows, 4);
    }
}
