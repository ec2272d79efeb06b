//! Closed-form quantum query bounds for k-BerSearch and Chain-of-PoWs, the
//! post-quantum honest-majority condition and the comparison tables.
//!
//! All bounds are evaluated in the natural-log domain. A [`BoundValue`] keeps
//! the raw (unnormalized, possibly > 1) value, its clamp to `[0, 1]` and the
//! log, so that nothing under- or overflows before the reporting boundary.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{log_sum_exp, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("binomial coefficient C({n}, {k}) is undefined: k exceeds n")]
    BinomialDomain { n: u64, k: u64 },
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParam {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("Stirling-form bound only holds for 4 <= k <= N (got N = {n}, k = {k})")]
    StirlingWindow { n: u64, k: u64 },
    #[error(
        "typical-execution tail only decays for eps > e*sqrt(p)/(1 - e*sqrt(p)) = {eps_min} (got eps = {eps})"
    )]
    TailValidity { eps: f64, eps_min: f64 },
}

pub type Result<T> = std::result::Result<T, BoundsError>;

fn check_probability<T: Real>(name: &'static str, v: T) -> Result<()> {
    if v > T::zero() && v < T::one() {
        Ok(())
    } else {
        Err(BoundsError::InvalidParam {
            name,
            value: v.as_f64(),
            reason: "must lie strictly between 0 and 1",
        })
    }
}

/// An upper bound on a probability, reported raw and clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BoundValue<T> {
    pub raw: T,
    pub clamped: T,
    pub log_raw: T,
}

impl<T: Real> BoundValue<T> {
    pub fn from_log(log_raw: T) -> Self {
        let raw = log_raw.exp();
        let clamped = if log_raw >= T::zero() { T::one() } else { raw };
        Self {
            raw,
            clamped,
            log_raw,
        }
    }

    /// True when the raw expression exceeds one and the bound is vacuous.
    pub fn is_clamped(&self) -> bool {
        self.log_raw > T::zero()
    }
}

/// Parameter bundle feeding the formulas (symbols of the analysis table).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BoundParams<T> {
    /// Success probability of one classical query.
    pub p: T,
    /// Total quantum queries; `s * adv_queries` when derived from rounds.
    pub queries: u64,
    /// Target number of solutions / chain length.
    pub k: u64,
    pub eps: T,
    /// Probability that at least one honest party finds a PoW in a round.
    pub f: T,
    pub honest_parties: u64,
    pub corrupted_parties: u64,
    pub honest_queries: u64,
    pub adv_queries: u64,
    pub rounds: u64,
}

impl<T: Real> BoundParams<T> {
    pub fn validate(&self) -> Result<()> {
        check_probability("p", self.p)?;
        check_probability("eps", self.eps)?;
        check_probability("f", self.f)?;
        if self.k == 0 {
            return Err(BoundsError::InvalidParam {
                name: "k",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        Ok(())
    }

    pub fn kbersearch_exact(&self) -> Result<BoundValue<T>> {
        kbersearch_bound_exact(self.queries, self.k, self.p)
    }

    pub fn kbersearch_stirling(&self) -> Result<BoundValue<T>> {
        kbersearch_bound_stirling(self.queries, self.k, self.p)
    }

    pub fn chain_of_pows(&self) -> Result<ChainOfPowsBound<T>> {
        chain_of_pows_bound(self.queries, self.k, self.p)
    }
}

/// How `f` is derived from `(n, q, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FConvention {
    /// `1 - (1 - p)^(n q)`, the exact per-round honest success probability.
    #[default]
    Exact,
    /// The first-order approximation `n p q`.
    Linear,
}

pub fn honest_success_rate<T: Real>(
    parties: u64,
    queries: u64,
    p: T,
    convention: FConvention,
) -> T {
    let total = T::from_count(parties * queries);
    match convention {
        FConvention::Exact => -(total * (-p).ln_1p()).exp_m1(),
        FConvention::Linear => total * p,
    }
}

const DIRECT_BINOMIAL_LIMIT: u64 = 32;

/// Remainder of Stirling's series for `ln x!`, valid for `x >= 32`.
fn stirling_remainder<T: Real>(x: T) -> T {
    let inv = x.recip();
    let inv2 = inv * inv;
    inv * (T::lit(1.0 / 12.0)
        - inv2
            * (T::lit(1.0 / 360.0) - inv2 * (T::lit(1.0 / 1260.0) - inv2 * T::lit(1.0 / 1680.0))))
}

/// `ln C(n, k)`.
///
/// Small `min(k, n - k)` sums `ln(1 + (n - k)/j)` term by term. Larger values
/// use Stirling's series arranged so that the leading terms never cancel:
/// `k ln(n/k) - (n - k) ln(1 - k/n) + ln(n / (2 pi k (n - k)))/2 + remainders`.
pub fn log_binomial<T: Real>(n: u64, k: u64) -> Result<T> {
    if k > n {
        return Err(BoundsError::BinomialDomain { n, k });
    }
    let small = k.min(n - k);
    if small == 0 {
        return Ok(T::zero());
    }
    if small < DIRECT_BINOMIAL_LIMIT {
        let rest = T::from_count(n - small);
        let sum = (1..=small).fold(T::zero(), |acc, j| acc + (rest / T::from_count(j)).ln_1p());
        return Ok(sum);
    }
    let nf = T::from_count(n);
    let kf = T::from_count(small);
    let rf = T::from_count(n - small);
    let two = T::lit(2.0);
    let lead = kf * (nf / kf).ln() - rf * (-(kf / nf)).ln_1p();
    let half_log = (nf / (two * T::PI() * kf * rf)).ln() / two;
    let tail = stirling_remainder(nf) - stirling_remainder(kf) - stirling_remainder(rf);
    Ok(lead + half_log + tail)
}

/// Upper bound on the probability of solving k-BerSearch with `queries`
/// quantum queries: `4(1-p) p^k (sum_{i<=k} (1-p)^{i/2} C(N, i))^2`.
pub fn kbersearch_bound_exact<T: Real>(queries: u64, k: u64, p: T) -> Result<BoundValue<T>> {
    check_probability("p", p)?;
    let half_log_q = (-p).ln_1p() / T::lit(2.0);
    let terms = (0..=k.min(queries))
        .map(|i| log_binomial::<T>(queries, i).map(|lb| T::from_count(i) * half_log_q + lb))
        .collect::<Result<Vec<T>>>()?;
    let log_sum = log_sum_exp(&terms);
    let log_raw =
        T::lit(4.0).ln() + (-p).ln_1p() + T::from_count(k) * p.ln() + T::lit(2.0) * log_sum;
    Ok(BoundValue::from_log(log_raw))
}

/// Relaxed form `(2(1-p)/(pi k)) p^k (N e / k)^(2k)`; defined for `4 <= k <= N`.
pub fn kbersearch_bound_stirling<T: Real>(queries: u64, k: u64, p: T) -> Result<BoundValue<T>> {
    check_probability("p", p)?;
    if k < 4 || k > queries {
        return Err(BoundsError::StirlingWindow { n: queries, k });
    }
    let kf = T::from_count(k);
    let nf = T::from_count(queries);
    let log_raw =
        prefactor_log(k, p) + kf * p.ln() + T::lit(2.0) * kf * (nf.ln() + T::one() - kf.ln());
    Ok(BoundValue::from_log(log_raw))
}

/// `ln(2(1-p)/(pi k))`.
fn prefactor_log<T: Real>(k: u64, p: T) -> T {
    T::lit(2.0).ln() + (-p).ln_1p() - (T::PI() * T::from_count(k)).ln()
}

/// Both forms of the Chain-of-PoWs bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ChainOfPowsBound<T> {
    /// `(2(1-p)/(pi k)) ((N+k) e sqrt(p) / k)^(2k)`.
    pub closed: BoundValue<T>,
    /// `exp(-2k ln(k / (e (N+k) sqrt(p))))`, the closed form without prefactor.
    pub exponential: BoundValue<T>,
}

pub fn chain_of_pows_bound<T: Real>(queries: u64, k: u64, p: T) -> Result<ChainOfPowsBound<T>> {
    check_probability("p", p)?;
    if k == 0 {
        return Err(BoundsError::InvalidParam {
            name: "k",
            value: 0.0,
            reason: "chain length must be at least 1",
        });
    }
    let kf = T::from_count(k);
    let total = T::from_count(queries + k);
    let exp_log = T::lit(2.0) * kf * (total.ln() + T::one() + p.ln() / T::lit(2.0) - kf.ln());
    Ok(ChainOfPowsBound {
        closed: BoundValue::from_log(prefactor_log(k, p) + exp_log),
        exponential: BoundValue::from_log(exp_log),
    })
}

/// Chain-of-PoWs cap obtained from the k-BerSearch bound at budget `N + k`.
pub fn reduction_bound<T: Real>(queries: u64, k: u64, p: T) -> Result<BoundValue<T>> {
    if k == 0 {
        return Err(BoundsError::InvalidParam {
            name: "k",
            value: 0.0,
            reason: "chain length must be at least 1",
        });
    }
    kbersearch_bound_exact(queries + k, k, p)
}

/// Largest per-round quantum query budget `Q` for which the post-quantum
/// honest majority holds: `(1-eps) f (1-f) / ((1+eps) e sqrt(p))`.
pub fn honest_majority_threshold<T: Real>(f: T, p: T, eps: T) -> Result<T> {
    check_probability("f", f)?;
    check_probability("p", p)?;
    check_probability("eps", eps)?;
    let one = T::one();
    Ok((one - eps) * f * (one - f) / ((one + eps) * T::E() * p.sqrt()))
}

/// Target adversarial chain length over `s` rounds: `s (1+eps) e Q sqrt(p)`.
pub fn k0_target<T: Real>(s: u64, adv_queries: u64, p: T, eps: T) -> T {
    T::from_count(s) * (T::one() + eps) * T::E() * T::from_count(adv_queries) * p.sqrt()
}

/// Smallest concentration quality for which the typical-execution tail decays.
pub fn eps_min<T: Real>(p: T) -> T {
    let r = T::E() * p.sqrt();
    r / (T::one() - r)
}

/// `exp(-2e(1+eps) s Q sqrt(p) ln((1+eps) / (1 + e(1+eps) sqrt(p))))`.
pub fn typical_execution_tail<T: Real>(
    s: u64,
    adv_queries: u64,
    p: T,
    eps: T,
) -> Result<BoundValue<T>> {
    check_probability("p", p)?;
    let one = T::one();
    let r = T::E() * p.sqrt();
    if r >= one {
        return Err(BoundsError::InvalidParam {
            name: "p",
            value: p.as_f64(),
            reason: "e*sqrt(p) must be below 1",
        });
    }
    let floor = eps_min(p);
    if !(eps > floor) {
        return Err(BoundsError::TailValidity {
            eps: eps.as_f64(),
            eps_min: floor.as_f64(),
        });
    }
    let work = T::lit(2.0) * (one + eps) * T::from_count(s) * T::from_count(adv_queries) * r;
    let log_raw = -work * ((one + eps) / (one + (one + eps) * r)).ln();
    Ok(BoundValue::from_log(log_raw))
}

/// `c_settle * eps^2 / ((1-eps)(1-f))`; multiply by the classical settlement
/// rounds to get the quantum ones. Returns `+inf` as `f` reaches 1.
pub fn settlement_ratio<T: Real>(eps: T, f: T, c_settle: T) -> Result<T> {
    check_probability("eps", eps)?;
    if !(f > T::zero() && f <= T::one()) {
        return Err(BoundsError::InvalidParam {
            name: "f",
            value: f.as_f64(),
            reason: "must lie in (0, 1]",
        });
    }
    if !(c_settle > T::zero()) {
        return Err(BoundsError::InvalidParam {
            name: "c_settle",
            value: c_settle.as_f64(),
            reason: "must be positive",
        });
    }
    let denom = (T::one() - eps) * (T::one() - f);
    if denom == T::zero() {
        return Ok(T::infinity());
    }
    Ok(c_settle * eps * eps / denom)
}

/// Bound of the earlier general-adversary analysis:
/// `2 (8 e N sqrt(p) / k)^k + 2^-k`.
pub fn gen1_bound<T: Real>(queries: u64, k: u64, p: T) -> Result<BoundValue<T>> {
    check_probability("p", p)?;
    if k == 0 {
        return Err(BoundsError::InvalidParam {
            name: "k",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    let kf = T::from_count(k);
    let base = T::lit(8.0) * T::E() * T::from_count(queries) * p.sqrt() / kf;
    let first = T::lit(2.0).ln() + kf * base.ln();
    let second = -kf * T::lit(2.0).ln();
    Ok(BoundValue::from_log(log_sum_exp(&[first, second])))
}

/// Chain length above which each bound starts to decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ExpectedOptimal<T> {
    /// `e sqrt(p) N`.
    pub gen2: T,
    /// `sqrt(c p) N` with `c = 8`.
    pub nons: T,
    /// `8 e sqrt(p) N`.
    pub gen1: T,
}

pub const NONS_SEARCH_CONSTANT: f64 = 8.0;

pub fn expected_optimal<T: Real>(queries: u64, p: T) -> ExpectedOptimal<T> {
    let n = T::from_count(queries);
    let gen2 = T::E() * p.sqrt() * n;
    ExpectedOptimal {
        gen2,
        nons: (T::lit(NONS_SEARCH_CONSTANT) * p).sqrt() * n,
        // scaling by a power of two keeps the 8x ratio exact
        gen1: T::lit(8.0) * gen2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalHonestMajority<T> {
    /// `t / (n - t)`.
    pub lhs: T,
    /// `1 - 3 (f + eps)`.
    pub rhs: T,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumHonestMajority<T> {
    pub threshold: T,
    pub adv_queries: u64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct KBoundRow<T> {
    pub k: u64,
    pub gen2_exact: BoundValue<T>,
    pub gen1: BoundValue<T>,
}

/// Classical vs quantum adversary rows plus the per-k bound comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ComparisonTable<T> {
    pub f: T,
    /// `n p q`, the first-order approximation of `f`.
    pub f_linear: T,
    pub honest_majority_classical: ClassicalHonestMajority<T>,
    pub honest_majority_quantum: QuantumHonestMajority<T>,
    /// `p q t s`.
    pub max_expected_adv_pows_classical: T,
    /// `(1+eps) e sqrt(p) Q s`.
    pub max_expected_adv_pows_quantum: T,
    /// `eps^2 f s`, exponent of the classical concentration probability.
    pub concentration_exponent_classical: T,
    /// `(1-eps) f (1-f) s`.
    pub concentration_exponent_quantum: T,
    /// `s_q / s_cl` with the configured settlement constant.
    pub settlement_ratio: T,
    pub expected_optimal: ExpectedOptimal<T>,
    /// Gen1 over Gen2 expected-optimal ratio.
    pub expected_optimal_ratio: T,
    pub convergence_gen1: String,
    pub convergence_gen2: String,
    pub convergence_nons: String,
    pub k_rows: Vec<KBoundRow<T>>,
}

pub fn comparison_table<T: Real>(
    params: &BoundParams<T>,
    ks: &[u64],
    c_settle: T,
) -> Result<ComparisonTable<T>> {
    params.validate()?;
    let BoundParams {
        p,
        queries,
        eps,
        f,
        honest_parties: n,
        corrupted_parties: t,
        honest_queries: q,
        adv_queries,
        rounds: s,
        ..
    } = *params;
    let one = T::one();
    let lhs = if n > t {
        T::from_count(t) / T::from_count(n - t)
    } else {
        T::infinity()
    };
    let rhs = one - T::lit(3.0) * (f + eps);
    let threshold = honest_majority_threshold(f, p, eps)?;
    let sf = T::from_count(s);
    let opt = expected_optimal(queries, p);
    let k_rows = ks
        .iter()
        .map(|&k| {
            Ok(KBoundRow {
                k,
                gen2_exact: kbersearch_bound_exact(queries, k, p)?,
                gen1: gen1_bound(queries, k, p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonTable {
        f,
        f_linear: T::from_count(n * q) * p,
        honest_majority_classical: ClassicalHonestMajority {
            lhs,
            rhs,
            holds: lhs < rhs,
        },
        honest_majority_quantum: QuantumHonestMajority {
            threshold,
            adv_queries,
            holds: T::from_count(adv_queries) <= threshold,
        },
        max_expected_adv_pows_classical: p * T::from_count(q * t) * sf,
        max_expected_adv_pows_quantum: k0_target(s, adv_queries, p, eps),
        concentration_exponent_classical: eps * eps * f * sf,
        concentration_exponent_quantum: (one - eps) * f * (one - f) * sf,
        settlement_ratio: settlement_ratio(eps, f, c_settle)?,
        expected_optimal_ratio: opt.gen1 / opt.gen2,
        expected_optimal: opt,
        convergence_gen1: "exp(-N*O(p^(1/2)))".into(),
        convergence_gen2: "exp(-N*O(p^(1/2)))".into(),
        convergence_nons: "exp(-N*O(p^(2/3)))".into(),
        k_rows,
    })
}
