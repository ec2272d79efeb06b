//! Exact success of the sequential classical strategy on the chained task,
//! compared against the k-BerSearch bound at budget `N + k`.

use serde::{Deserialize, Serialize};

use super::{Result, SimError};
use crate::bounds::reduction_bound;
use crate::scalar::Real;

/// Chain of `k` PoW stages. Every stage offers `2^m` nonces, each a fresh
/// oracle point that succeeds independently with probability `p`; a stage's
/// input is only known once the previous stage has succeeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ChainTask<T> {
    pub m: u32,
    pub k: u32,
    pub p: T,
}

impl<T: Real> ChainTask<T> {
    fn nonces(&self) -> usize {
        1 << self.m
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.m == 0 || self.m > 16 {
            return Err(SimError::InvalidConfig(format!(
                "chain task needs k >= 1 and 1 <= m <= 16 (got k = {}, m = {})",
                self.k, self.m
            )));
        }
        if !(self.p > T::zero() && self.p < T::one()) {
            return Err(SimError::InvalidConfig(format!(
                "p = {} out of range",
                self.p
            )));
        }
        Ok(())
    }
}

/// Success probability of trying nonces in order at the current stage,
/// moving on at the first hit, within `n` queries (dynamic programming).
pub fn chain_success_exact<T: Real>(task: &ChainTask<T>, n: usize) -> Result<T> {
    task.validate()?;
    let k = task.k as usize;
    let y = task.nonces();
    let p = task.p;
    let q = T::one() - p;
    // mass[s][t]: reached stage s having spent t nonces on it
    let mut mass = vec![vec![T::zero(); y + 1]; k + 1];
    mass[0][0] = T::one();
    for _ in 0..n {
        let mut next = vec![vec![T::zero(); y + 1]; k + 1];
        next[k][0] = mass[k][0];
        for s in 0..k {
            next[s][y] += mass[s][y];
            for t in 0..y {
                let w = mass[s][t];
                if w == T::zero() {
                    continue;
                }
                next[s + 1][0] += w * p;
                next[s][t + 1] += w * q;
            }
        }
        mass = next;
    }
    Ok(mass[k][0])
}

/// The same quantity by enumerating every assignment of the `k 2^m`
/// oracle bits. Limited to `k 2^m <= 20`.
pub fn chain_success_by_enumeration<T: Real>(task: &ChainTask<T>, n: usize) -> Result<T> {
    task.validate()?;
    let k = task.k as usize;
    let y = task.nonces();
    let bits = k * y;
    if bits > 20 {
        return Err(SimError::InvalidConfig(format!(
            "enumeration over {bits} oracle bits is too large"
        )));
    }
    let p = task.p;
    let mut total = T::zero();
    for table in 0u64..1 << bits {
        let (mut stage, mut tried) = (0usize, 0usize);
        for _ in 0..n {
            if stage == k || tried == y {
                break;
            }
            if (table >> (stage * y + tried)) & 1 == 1 {
                stage += 1;
                tried = 0;
            } else {
                tried += 1;
            }
        }
        if stage == k {
            let ones = table.count_ones() as i32;
            total += p.powi(ones) * (T::one() - p).powi(bits as i32 - ones);
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ReductionRow<T> {
    pub m: u32,
    pub k: u32,
    pub p: T,
    #[serde(rename = "N")]
    pub n: usize,
    pub success: T,
    /// Enumeration cross-check when the table is small enough.
    pub enumerated: Option<T>,
    pub bound: T,
    pub holds: bool,
}

/// Sweeps `N = 0..=max_n` for every task and compares the measured success
/// with the clamped bound at `N + k`.
pub fn reduction_consistency<T: Real>(
    tasks: &[ChainTask<T>],
    max_n: usize,
) -> Result<Vec<ReductionRow<T>>> {
    let mut rows = Vec::new();
    for task in tasks {
        for n in 0..=max_n {
            let success = chain_success_exact(task, n)?;
            let enumerated = if (task.k as usize) << task.m <= 20 {
                Some(chain_success_by_enumeration(task, n)?)
            } else {
                None
            };
            let bound = reduction_bound(n as u64, task.k as u64, task.p)
                .map_err(|e| SimError::InvalidConfig(e.to_string()))?
                .clamped;
            rows.push(ReductionRow {
                m: task.m,
                k: task.k,
                p: task.p,
                n,
                success,
                enumerated,
                bound,
                holds: success <= bound,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_stage_is_geometric() {
        let task = ChainTask {
            m: 3,
            k: 1,
            p: 0.25_f64,
        };
        for n in 0..=8 {
            let expected = 1.0 - 0.75f64.powi(n as i32);
            assert_relative_eq!(
                chain_success_exact(&task, n).unwrap(),
                expected,
                epsilon = 1e-15
            );
        }
        // nonce space exhausted
        assert_relative_eq!(
            chain_success_exact(&task, 20).unwrap(),
            1.0 - 0.75f64.powi(8),
            epsilon = 1e-15
        );
    }

    #[test]
    fn dp_matches_enumeration() {
        for (m, k) in [(1, 1), (1, 3), (2, 2), (2, 4), (3, 2)] {
            let task = ChainTask { m, k, p: 0.3_f64 };
            for n in 0..=10 {
                let a = chain_success_exact(&task, n).unwrap();
                let b = chain_success_by_enumeration(&task, n).unwrap();
                assert!((a - b).abs() < 1e-12, "m={m} k={k} n={n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn below_k_queries_never_succeeds() {
        let task = ChainTask {
            m: 2,
            k: 3,
            p: 0.9_f64,
        };
        assert_eq!(chain_success_exact(&task, 2).unwrap(), 0.0);
        assert_relative_eq!(
            chain_success_exact(&task, 3).unwrap(),
            0.729,
            epsilon = 1e-15
        );
    }
}
