//! Cross-module properties checked against brute-force enumeration.

use pc_core::oracle::{
    exact_boltzmann, exhaustive_conditional, exhaustive_expectation, kl_qp, log_partition,
};
use pc_core::problems::{emit_dimacs, generate_planted_ksat, ksat_objective, parse_dimacs};
use pc_core::updaters::{brouwer_sweep, solve, UpdateSchedule};
use pc_core::{Factor, FactoredObjective, ProductDistribution, SolverConfig};
use proptest::prelude::*;

/// Pairwise chain over `n` agents of arity `k` with a unary term per agent.
fn chain(n: usize, k: usize, values: &[f64]) -> FactoredObjective {
    let mut obj = FactoredObjective::new(vec![k; n]).unwrap();
    let mut it = values.iter().cycle();
    for i in 0..n {
        obj.add_factor(Factor::from_fn(vec![i], vec![k], |_| *it.next().unwrap()).unwrap())
            .unwrap();
        if i + 1 < n {
            obj.add_factor(
                Factor::from_fn(vec![i, i + 1], vec![k, k], |_| *it.next().unwrap()).unwrap(),
            )
            .unwrap();
        }
    }
    obj
}

fn distribution(n: usize, k: usize, weights: &[f64]) -> ProductDistribution {
    let mut it = weights.iter().cycle();
    let rows = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..k).map(|_| *it.next().unwrap()).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|r| r / s).collect()
        })
        .collect();
    ProductDistribution::from_rows(rows).unwrap()
}

fn instance() -> impl Strategy<Value = (FactoredObjective, ProductDistribution)> {
    (2usize..=6, 2usize..=3).prop_flat_map(|(n, k)| {
        (
            prop::collection::vec(-1.0f64..1.0, 4 * n * k * k),
            prop::collection::vec(0.05f64..1.0, n * k),
        )
            .prop_map(move |(v, w)| (chain(n, k, &v), distribution(n, k, &w)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn factored_expectations_match_enumeration((obj, q) in instance()) {
        let exact = exhaustive_expectation(&obj, &q).unwrap();
        prop_assert!((obj.expected_value(&q, true) - exact).abs() < 1e-10);
        for i in 0..q.n() {
            let brute = exhaustive_conditional(&obj, &q, i).unwrap();
            for (a, b) in obj.conditional_expectation(&q, i).iter().zip(brute) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn lagrangian_is_shifted_kl((obj, q) in instance(), t in 0.1f64..5.0) {
        let p = exact_boltzmann(&obj, t).unwrap();
        let rhs = t * kl_qp(&q, &p).unwrap() - t * log_partition(&obj, t).unwrap();
        prop_assert!((obj.lagrangian(&q, t) - rhs).abs() < 1e-10);
    }

    #[test]
    fn lagrangian_bounded_below_by_free_energy((obj, q) in instance(), t in 0.1f64..5.0) {
        prop_assert!(obj.lagrangian(&q, t) >= -t * log_partition(&obj, t).unwrap() - 1e-10);
    }

    #[test]
    fn serial_sweeps_descend((obj, q) in instance(), t in 0.05f64..3.0) {
        let mut q = q;
        for _ in 0..10 {
            let next = brouwer_sweep(&obj, &q, t);
            prop_assert!(obj.lagrangian(&next, t) <= obj.lagrangian(&q, t) + 1e-9);
            q = next;
        }
    }

    #[test]
    fn dimacs_round_trip(seed in 0u64..1000, n in 5usize..30) {
        let inst = generate_planted_ksat(n, 3 * n, 3, seed).unwrap();
        let text = emit_dimacs(&inst);
        let parsed = parse_dimacs(&text).unwrap();
        prop_assert_eq!(emit_dimacs(&parsed), text);
    }
}

#[test]
fn planted_instances_solve_from_the_library() {
    let schedule = UpdateSchedule::default();
    for seed in 0..3 {
        let inst = generate_planted_ksat(30, 120, 3, seed).unwrap();
        let obj = ksat_objective(&inst);
        let config = SolverConfig {
            temperature: 1.5e-3,
            step_lambda: 0.5,
            seed,
            ..SolverConfig::constrained()
        };
        let result = solve(&obj, &config, &schedule).unwrap();
        assert_eq!(result.best_violations, 0);
        assert!(inst.is_satisfied(result.best.values()));
    }
}
