//! Statistical and structural properties of protocol executions.

use pqbackbone::backbone::OracleParams;
use pqbackbone::bounds::{chain_of_pows_bound, honest_majority_threshold, k0_target};
use pqbackbone::execution::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn poisson_budget_mean() {
    let (q, p, eps) = (10u64, 1e-6, 0.1);
    let mut b = BlockBudget::new(q, RateMode::Poisson, p, eps);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let rounds = 100_000u64;
    let total: u64 = (0..rounds).map(|r| b.step(r, &mut rng)).sum();
    let mean = std::f64::consts::E * 1e-3 * 10.0 * 1.1;
    let sigma = (mean / rounds as f64).sqrt();
    let got = total as f64 / rounds as f64;
    assert!((got - mean).abs() < 3.0 * sigma, "mean {got} vs {mean}");
}

#[test]
fn worst_case_budget_hits_k0_in_every_window() {
    let mut b = BlockBudget::new(10, RateMode::WorstCase { window: 100 }, 1e-6, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let per_round: Vec<u64> = (0..1000).map(|r| b.step(r, &mut rng)).collect();
    for w in per_round.windows(100) {
        assert_eq!(w.iter().sum::<u64>(), 3);
    }
    assert_eq!(k0_target(100, 10, 1e-6_f64, 0.1).ceil(), 3.0);
}

#[test]
fn tail_coupled_lengths_follow_the_clamped_bound() {
    let (window, q, p) = (10u64, 5u64, 0.01f64);
    let mut b = BlockBudget::new(q, RateMode::TailCoupled { window }, p, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = 20_000u64;
    let lengths: Vec<u64> = (0..draws)
        .map(|w| (0..window).map(|i| b.step(w * window + i, &mut rng)).sum())
        .collect();
    let mut running = 1.0f64;
    for k in 1..=8u64 {
        running = running.min(
            chain_of_pows_bound(window * q, k, p)
                .unwrap()
                .closed
                .clamped,
        );
        let emp = lengths.iter().filter(|&&l| l >= k).count() as f64 / draws as f64;
        let sigma = (running * (1.0 - running) / draws as f64).sqrt().max(1e-9);
        assert!(
            (emp - running).abs() < 4.0 * sigma + 1e-12,
            "k={k}: {emp} vs {running}"
        );
    }
}

fn honest_config(rounds: u64) -> ExecutionConfig {
    let oracle = OracleParams::with_probability(2f64.powi(-8), 32, 4, 0).unwrap();
    ExecutionConfig::new(8, oracle, rounds, 0.5).with_seed(21)
}

#[test]
fn honest_only_rate_matches_closed_form() {
    let cfg = honest_config(5_000).with_trials(8);
    let rep = run_trials(&cfg, &CheckSpec::default(), 2).unwrap();
    let a = &rep.aggregate;
    assert!(a.honest_rate_z.abs() < 3.0, "z = {}", a.honest_rate_z);
    assert_eq!(a.delivery_pass_rate, 1.0);
    assert_eq!(a.counters_pass_rate, 1.0);
}

#[test]
fn honest_only_keeps_a_common_prefix() {
    let cfg = honest_config(3_000).with_trials(6);
    let checks = CheckSpec {
        common_prefix_k: Some(3),
        chain_quality_l: Some(4),
        chain_quality_mu: Some(1.0),
        ..CheckSpec::default()
    };
    let rep = run_trials(&cfg, &checks, 1).unwrap();
    assert_eq!(rep.aggregate.common_prefix_pass_rate, Some(1.0));
    assert_eq!(rep.aggregate.chain_quality_pass_rate, Some(1.0));
}

#[test]
fn boundary_worst_case_adversary_respects_condition_b() {
    let oracle = OracleParams::with_probability(2f64.powi(-10), 32, 40, 0).unwrap();
    let base = ExecutionConfig::new(8, oracle, 300, 0.1)
        .with_seed(5)
        .with_trials(20);
    let f = base.f();
    let s = 20u64;
    let q_max: f64 = honest_majority_threshold(f, base.p(), 0.1).unwrap();
    let cfg = base.with_adversary(AdversarySpec::QuantumRate {
        queries: q_max.floor() as u64,
        mode: RateMode::WorstCase { window: s },
        rate_eps: 0.1,
    });
    let checks = CheckSpec {
        typical_windows: vec![s],
        ..CheckSpec::default()
    };
    let rep = run_trials(&cfg, &checks, 1).unwrap();
    assert_eq!(rep.aggregate.typical[0].b_pass_rate, 1.0);
    for t in &rep.trials {
        assert!((t.typical[0].max_z as f64) < t.typical[0].z_threshold);
    }
}

#[test]
fn classical_adversary_uses_the_classical_cap() {
    let cfg = honest_config(600).with_adversary(AdversarySpec::Classical { t: 2 });
    let (summary, trace) = run_trial_with_trace(
        &cfg,
        &CheckSpec {
            typical_windows: vec![200],
            ..CheckSpec::default()
        },
        0,
    )
    .unwrap();
    let t = &summary.typical[0];
    let f = trace.meta.f;
    let p = trace.meta.oracle.p();
    let want = p * 4.0 * 2.0 * 200.0 + 0.5 * f * 200.0;
    assert!((t.z_threshold - want).abs() < 1e-12);
    assert!(summary.adversary_pows > 0);
}

#[test]
fn parallel_trials_are_bit_identical() {
    let cfg = honest_config(400)
        .with_trials(5)
        .with_adversary(AdversarySpec::PrivateChain {
            queries: 6,
            mode: RateMode::Poisson,
            rate_eps: 0.2,
            release_threshold: Some(2),
        });
    let checks = CheckSpec {
        typical_windows: vec![150],
        common_prefix_k: Some(2),
        chain_quality_l: Some(5),
        z_tail_window: Some(50),
        ..CheckSpec::default()
    };
    let a = serde_json::to_string(&run_trials(&cfg, &checks, 1).unwrap()).unwrap();
    let b = serde_json::to_string(&run_trials(&cfg, &checks, 4).unwrap()).unwrap();
    assert_eq!(a, b);
}

fn arb_adversary() -> impl Strategy<Value = AdversarySpec> {
    prop_oneof![
        Just(AdversarySpec::None),
        (0u32..3).prop_map(|t| AdversarySpec::Classical { t }),
        (0u64..12, 1u64..30).prop_map(|(queries, window)| AdversarySpec::QuantumRate {
            queries,
            mode: RateMode::WorstCase { window },
            rate_eps: 0.1,
        }),
        (0u64..12, proptest::option::of(0u64..4)).prop_map(|(queries, release_threshold)| {
            AdversarySpec::PrivateChain {
                queries,
                mode: RateMode::Poisson,
                rate_eps: 0.1,
                release_threshold,
            }
        }),
        (1u64..12, 1u64..20).prop_map(|(queries, window)| AdversarySpec::QuantumRate {
            queries,
            mode: RateMode::TailCoupled { window },
            rate_eps: 0.0,
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trace_invariants(
        n in 1u32..6,
        q in 1u32..6,
        e in 3i32..8,
        rounds in 0u64..160,
        seed in any::<u64>(),
        adversary in arb_adversary(),
    ) {
        let oracle = OracleParams::with_probability(2f64.powi(-e), 32, q, 0).unwrap();
        let cfg = ExecutionConfig::new(n, oracle, rounds, 0.3)
            .with_seed(seed)
            .with_adversary(adversary);
        let trace = run_execution(&cfg, 0).unwrap();
        prop_assert!(honest_delivery_check(&trace));
        prop_assert!(counters_consistent(&trace));
        prop_assert_eq!(trace_hash(&trace), trace_hash(&run_execution(&cfg, 0).unwrap()));
        for rec in &trace.rounds {
            prop_assert_eq!(rec.heads.len(), n as usize);
            for &h in &rec.heads {
                prop_assert!(trace.store.node(h).valid);
            }
        }
        if let Some(s) = (1..=rounds).step_by(7).next() {
            let c = counters(&trace, 0, s).unwrap();
            prop_assert!(c.y <= c.x && c.x <= s);
            prop_assert_eq!(c, recount(&trace, 0, s).unwrap());
        }
        if let AdversarySpec::PrivateChain { release_threshold: None, .. } = adversary {
            for rec in &trace.rounds {
                for &h in &rec.heads {
                    prop_assert_eq!(trace.store.node(h).honest_count, trace.store.height(h));
                }
            }
        }
    }
}
