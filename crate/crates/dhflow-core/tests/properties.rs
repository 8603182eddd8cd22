//! Property-based invariants: component curve monotonicity, inversion
//! round trips, and the conservation/aggregation certificates of solved
//! equilibria on randomized networks.

use dhflow_core::{
    curve_inverse_numeric, scenario, solve_tree, subtree_flow_response, InversionConfig,
    MonotoneCurve, NetworkSpec, PowerLossCurve, SolverConfig, ValveCurveParams, ValveSettings,
    VertexId,
};
use dhflow_core::{valve_eval, valve_inverse};
use proptest::prelude::*;

fn solved(seed: u64, pump: f64) -> (NetworkSpec, ValveSettings, dhflow_core::EquilibriumSolution) {
    let net = scenario::generate_random_network(
        seed,
        (4, 40),
        &scenario::CoefficientRanges::default(),
    );
    let mut state = seed.wrapping_mul(0x2545F4914F6CDD1D).wrapping_add(11);
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let map = net
        .leaves()
        .iter()
        .map(|&l| (l, 0.2 + 0.8 * next()))
        .collect();
    let u = ValveSettings::new(&net, map).unwrap();
    let sol = solve_tree(&net, pump, &u, &SolverConfig::default()).unwrap();
    (net, u, sol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn power_curves_are_strictly_increasing(
        k in 1e-3..1e3f64,
        alpha in 1.0..4.0f64,
        a in -1e3..1e3f64,
        b in -1e3..1e3f64,
    ) {
        prop_assume!(a != b);
        let (q1, q2) = if a < b { (a, b) } else { (b, a) };
        let curve = PowerLossCurve::new(k, alpha);
        prop_assert!(curve.eval(q1) < curve.eval(q2));
    }

    #[test]
    fn valve_drop_decreases_with_opening(
        k in 1e-3..1e3f64,
        q in 1e-6..1e2f64,
        u1 in 0.01..1.0f64,
        gap in 1e-6..0.99f64,
    ) {
        let u2 = (u1 + gap).min(1.0);
        prop_assume!(u2 > u1);
        let valve = ValveCurveParams::new(k);
        let high = valve_eval(&valve, q, u1).unwrap();
        let low = valve_eval(&valve, q, u2).unwrap();
        prop_assert!(high > low);
    }

    #[test]
    fn quadratic_pipe_curve_is_exactly_odd(k in 1e-3..1e3f64, q in 0.0..1e3f64) {
        let curve = PowerLossCurve::new(k, 2.0);
        prop_assert_eq!(curve.eval(-q), -curve.eval(q));
    }

    #[test]
    fn inverse_round_trip_over_log_grid(
        k in 1e-2..1e2f64,
        exponent in -6.0..3.0f64,
        negative in proptest::bool::ANY,
        alpha in prop_oneof![Just(2.0), 1.0..3.0f64],
    ) {
        let q = if negative { -1.0 } else { 1.0 } * 10f64.powf(exponent);
        let curve = PowerLossCurve::new(k, alpha);

        let analytic = curve.inverse(curve.eval(q)).unwrap();
        prop_assert!((analytic - q).abs() <= 1e-11 * q.abs().max(1.0));

        let numeric =
            curve_inverse_numeric(&curve, curve.eval(q), &InversionConfig::default()).unwrap();
        prop_assert!((numeric - q).abs() <= 1e-11 * q.abs().max(1.0));
    }

    #[test]
    fn valve_inverse_round_trip(
        k in 1e-2..1e2f64,
        u in 0.05..1.0f64,
        p in -1e3..1e3f64,
    ) {
        let valve = ValveCurveParams::new(k);
        let q = valve_inverse(&valve, p, u).unwrap();
        prop_assert!((valve_eval(&valve, q, u).unwrap() - p).abs() <= 1e-9 * p.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solved_networks_conserve_flow(seed in 0u64..10_000) {
        let (net, _u, sol) = solved(seed, 1.0);
        // pump throughput balances the consumers
        let imbalance = sol.root_flow + sol.total_consumer_flow();
        prop_assert!(imbalance.abs() <= 1e-9, "imbalance {imbalance}");
        prop_assert!(sol.diagnostics.residual_inf_norm <= 1e-9);

        // every edge carries exactly what the leaves below it absorb
        for spec in net.edge_specs() {
            let below = net.subtree(spec.head).unwrap();
            let sum: f64 = below
                .leaves()
                .iter()
                .map(|l| sol.consumer_flow(*l).unwrap())
                .sum();
            let q = sol.edge_flow(spec.tail, spec.head).unwrap();
            prop_assert!(
                (q - sum).abs() <= 1e-8,
                "edge {:?} carries {q}, leaves absorb {sum}",
                (spec.tail, spec.head)
            );
        }
    }

    #[test]
    fn subtree_responses_increase_with_pressure(
        seed in 0u64..5_000,
        p in -2.0..2.0f64,
        dp in 1e-4..1.0f64,
    ) {
        let (net, u, _sol) = solved(seed, 1.0);
        let cfg = SolverConfig::default();
        let v = *net.leaves().last().unwrap();
        let parent = net
            .edge_specs()
            .find(|e| e.head == v)
            .map(|e| e.tail)
            .unwrap();
        let probe = if parent == VertexId(0) { v } else { parent };
        let lo = subtree_flow_response(&net, probe, p, &u, &cfg).unwrap();
        let hi = subtree_flow_response(&net, probe, p + dp, &u, &cfg).unwrap();
        prop_assert!(hi > lo, "response not increasing: Q({p}) = {lo}, Q({}) = {hi}", p + dp);
    }

    #[test]
    fn subtree_views_partition_the_vertex_set(seed in 0u64..5_000) {
        let net = scenario::generate_random_network(
            seed,
            (4, 40),
            &scenario::CoefficientRanges::default(),
        );
        // children of any vertex: subtrees are disjoint, and together with
        // the vertex they make up its own subtree
        for &v in net.vertex_ids().iter().skip(1) {
            let whole = net.subtree(v).unwrap();
            let children: Vec<VertexId> = net
                .edge_specs()
                .filter(|e| e.tail == v)
                .map(|e| e.head)
                .collect();
            let mut collected: Vec<VertexId> = vec![v];
            for c in &children {
                let sub = net.subtree(*c).unwrap();
                for id in sub.vertices() {
                    prop_assert!(!collected.contains(id), "vertex {id} in two subtrees");
                    collected.push(*id);
                }
            }
            collected.sort_unstable();
            prop_assert_eq!(collected, whole.vertices().to_vec());
        }
    }
}
