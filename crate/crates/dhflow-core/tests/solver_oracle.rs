//! Solver cross-checks against independent oracles.
//!
//! The two-consumer network reduces by hand to two equations in the
//! consumer flows:
//!
//! ```text
//! (q1 + q2)^2 + (1 + u1^-2) q1^2 = p0
//! (q1 + q2)^2 + (2 + u2^-2) q2^2 = p0
//! ```
//!
//! eliminating q1 leaves one strictly increasing scalar equation in q2,
//! solved here by plain bisection with no code shared with the solvers.
//! A brute-force recursive evaluation of subtree responses provides a
//! second, structurally different oracle on small networks.

use dhflow_core::{
    residual, solve_newton, solve_tree, subtree_flow_response, EquilibriumSolution, NetworkSpec,
    SolverConfig, ValveSettings, VertexId, VertexKind,
};
use dhflow_core::{presets, scenario};

struct TwoConsumerOracle {
    q1: f64,
    q2: f64,
    p1: f64,
    p2: f64,
    p3: f64,
    p4: f64,
}

/// Algebraic elimination plus scalar bisection; independent of the solver.
fn two_consumer_oracle(u1: f64, u2: f64, p0: f64) -> TwoConsumerOracle {
    assert!(p0 >= 0.0);
    let a = 1.0 + 1.0 / (u1 * u1);
    let b = 2.0 + 1.0 / (u2 * u2);
    let ratio = (b / a).sqrt(); // q1 = ratio * q2
    let phi = |q2: f64| {
        let total = q2 * (1.0 + ratio);
        total * total + b * q2 * q2 - p0
    };
    let mut lo = 0.0;
    let mut hi = (p0 / b).sqrt() + 1.0;
    assert!(phi(lo) <= 0.0 && phi(hi) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q2 = 0.5 * (lo + hi);
    let q1 = ratio * q2;
    let total = q1 + q2;
    TwoConsumerOracle {
        q1,
        q2,
        p1: q1 * q1 / (u1 * u1),
        p2: q2 * q2 / (u2 * u2),
        p3: p0 - total * total,
        p4: p0 - total * total - q2 * q2,
    }
}

fn settings(net: &NetworkSpec, u1: f64, u2: f64) -> ValveSettings {
    ValveSettings::uniform(net, u1)
        .unwrap()
        .with_opening(VertexId(2), u2)
        .unwrap()
}

fn assert_matches_oracle(sol: &EquilibriumSolution, oracle: &TwoConsumerOracle, tol: f64) {
    assert!((sol.consumer_flow(VertexId(1)).unwrap() - oracle.q1).abs() < tol);
    assert!((sol.consumer_flow(VertexId(2)).unwrap() - oracle.q2).abs() < tol);
    assert!((sol.pressure(VertexId(1)).unwrap() - oracle.p1).abs() < tol);
    assert!((sol.pressure(VertexId(2)).unwrap() - oracle.p2).abs() < tol);
    assert!((sol.pressure(VertexId(3)).unwrap() - oracle.p3).abs() < tol);
    assert!((sol.pressure(VertexId(4)).unwrap() - oracle.p4).abs() < tol);
}

#[test]
fn oracle_reproduces_frozen_values() {
    // frozen from the oracle itself at 250-bit precision
    let o = two_consumer_oracle(1.0, 1.0, 1.0);
    assert!((o.q1 - 0.43438618315561609).abs() < 1e-12);
    assert!((o.q2 - 0.35467483334880552).abs() < 1e-12);
    assert!((o.p3 - 0.37738271223300890).abs() < 1e-12);

    let o = two_consumer_oracle(0.5, 1.0, 1.0);
    assert!((o.q1 - 0.31236801024193626).abs() < 1e-12);
    assert!((o.q2 - 0.40326536718498898).abs() < 1e-12);
}

#[test]
fn tree_solver_matches_oracle_fully_open() {
    let net = presets::two_consumer();
    let u = settings(&net, 1.0, 1.0);
    let sol = solve_tree(&net, 1.0, &u, &SolverConfig::default()).unwrap();
    let oracle = two_consumer_oracle(1.0, 1.0, 1.0);
    assert_matches_oracle(&sol, &oracle, 1e-9);
    assert!((sol.total_consumer_flow() - (oracle.q1 + oracle.q2)).abs() < 1e-9);
    assert!(sol.diagnostics.residual_inf_norm <= 1e-9);
}

#[test]
fn tree_solver_matches_oracle_half_open() {
    let net = presets::two_consumer();
    let u = settings(&net, 0.5, 1.0);
    let sol = solve_tree(&net, 1.0, &u, &SolverConfig::default()).unwrap();
    let oracle = two_consumer_oracle(0.5, 1.0, 1.0);
    assert_matches_oracle(&sol, &oracle, 1e-9);
}

#[test]
fn oracle_solution_certifies_against_the_residual() {
    let net = presets::two_consumer();
    let u = settings(&net, 1.0, 1.0);
    let o = two_consumer_oracle(1.0, 1.0, 1.0);
    let total = o.q1 + o.q2;
    let candidate = EquilibriumSolution {
        pressures: [(0, 1.0), (3, o.p3), (4, o.p4), (1, o.p1), (2, o.p2)]
            .into_iter()
            .map(|(id, p)| (VertexId(id), p))
            .collect(),
        edge_flows: [
            ((0, 3), total),
            ((3, 1), o.q1),
            ((3, 4), o.q2),
            ((4, 2), o.q2),
        ]
        .into_iter()
        .map(|((t, h), q)| ((VertexId(t), VertexId(h)), q))
        .collect(),
        consumer_flows: [(1, o.q1), (2, o.q2)]
            .into_iter()
            .map(|(id, q)| (VertexId(id), q))
            .collect(),
        root_flow: -total,
        diagnostics: solve_tree(&net, 1.0, &u, &SolverConfig::default())
            .unwrap()
            .diagnostics,
    };
    let report = residual(&net, &candidate, &u, 1.0).unwrap();
    assert!(report.inf_norm <= 1e-9, "oracle residual {}", report.inf_norm);
}

#[test]
fn newton_agrees_with_tree_on_two_consumer() {
    let net = presets::two_consumer();
    let cfg = SolverConfig::default();
    for (u1, u2) in [(1.0, 1.0), (0.5, 1.0), (0.2, 0.9), (1.0, 0.3)] {
        let u = settings(&net, u1, u2);
        let tree = solve_tree(&net, 1.0, &u, &cfg).unwrap();
        let newton = solve_newton(&net, 1.0, &u, &cfg).unwrap();
        for id in net.vertex_ids() {
            let a = tree.pressure(*id).unwrap();
            let b = newton.pressure(*id).unwrap();
            assert!((a - b).abs() < 1e-8, "pressure mismatch at {id}: {a} vs {b}");
        }
        for (key, &qa) in &tree.edge_flows {
            let qb = newton.edge_flows[key];
            assert!((qa - qb).abs() < 1e-8, "flow mismatch on {key:?}");
        }
    }
}

#[test]
fn subtree_response_at_the_equilibrium_pressure_returns_total_flow() {
    let net = presets::two_consumer();
    let u = settings(&net, 1.0, 1.0);
    let o = two_consumer_oracle(1.0, 1.0, 1.0);
    let q = subtree_flow_response(&net, VertexId(3), o.p3, &u, &SolverConfig::default()).unwrap();
    assert!((q - (o.q1 + o.q2)).abs() < 1e-8);
}

/// Brute-force recursive response: per child, bisect the edge equation and
/// recurse for every probe. Exponential in depth, usable only on small
/// networks, and independent of the solver's composed-response machinery.
fn naive_response(net: &NetworkSpec, v: VertexId, p: f64, u: &ValveSettings) -> f64 {
    let combined_k = |tail: VertexId, head: VertexId| -> f64 {
        net.edge_specs()
            .find(|e| e.tail == tail && e.head == head)
            .map(|e| e.pipe.combined_k())
            .unwrap()
    };
    match net.kind(v).unwrap() {
        VertexKind::Valve { curve } => {
            let opening = u.opening(v).unwrap();
            let keff = curve.k_valve / (opening * opening);
            if p == 0.0 {
                0.0
            } else {
                p.signum() * (p.abs() / keff).sqrt()
            }
        }
        _ => {
            let children: Vec<VertexId> = net
                .edge_specs()
                .filter(|e| e.tail == v)
                .map(|e| e.head)
                .collect();
            let mut total = 0.0;
            for c in children {
                let k = combined_k(v, c);
                let h = |q: f64| q - naive_response(net, c, p - k * q * q.abs(), u);
                let mut lo = -8.0;
                let mut hi = 8.0;
                assert!(h(lo) < 0.0 && h(hi) > 0.0);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if h(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                total += 0.5 * (lo + hi);
            }
            total
        }
    }
}

#[test]
fn composed_responses_match_brute_force_recursion() {
    let net = presets::two_consumer();
    let u = settings(&net, 0.7, 1.0);
    let cfg = SolverConfig::default();
    for v in [3u32, 4, 1, 2] {
        for p in [0.1, 0.4, 0.9, 1.5] {
            let fast = subtree_flow_response(&net, VertexId(v), p, &u, &cfg).unwrap();
            let brute = naive_response(&net, VertexId(v), p, &u);
            assert!(
                (fast - brute).abs() < 1e-7,
                "response mismatch at vertex {v}, p = {p}: {fast} vs {brute}"
            );
        }
    }
}

#[test]
fn cross_solver_agreement_on_seeded_random_networks() {
    let ranges = scenario::CoefficientRanges::default();
    let cfg = SolverConfig::default();
    for seed in 0..40u64 {
        let net = scenario::generate_random_network(seed, (5, 30), &ranges);
        let u = random_settings(&net, seed);
        let tree = solve_tree(&net, 1.0, &u, &cfg).unwrap();
        let newton = solve_newton(&net, 1.0, &u, &cfg).unwrap();
        for &leaf in net.leaves() {
            let a = tree.consumer_flow(leaf).unwrap();
            let b = newton.consumer_flow(leaf).unwrap();
            let rel = (a - b).abs() / a.abs().max(b.abs());
            assert!(
                rel < 1e-8,
                "seed {seed}, leaf {leaf}: tree {a} vs newton {b} (rel {rel:.3e})"
            );
        }
    }
}

fn random_settings(net: &NetworkSpec, seed: u64) -> ValveSettings {
    // cheap deterministic openings in [0.2, 1.0]
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
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
    ValveSettings::new(net, map).unwrap()
}

#[test]
fn equal_inputs_give_equal_totals() {
    let net = presets::two_consumer();
    let u = settings(&net, 0.6, 0.8);
    let cfg = SolverConfig::default();
    let a = solve_tree(&net, 1.0, &u, &cfg).unwrap();
    let b = solve_tree(&net, 1.0, &u, &cfg).unwrap();
    assert_eq!(a, b);
    assert!((a.total_consumer_flow() - b.total_consumer_flow()).abs() <= 1e-8);
}

#[test]
fn positive_pump_head_gives_strictly_positive_flows() {
    let ranges = scenario::CoefficientRanges::default();
    let cfg = SolverConfig::default();
    for seed in 100..120u64 {
        let net = scenario::generate_random_network(seed, (5, 40), &ranges);
        let u = random_settings(&net, seed);
        let sol = solve_tree(&net, 1.0, &u, &cfg).unwrap();
        for (&id, &q) in &sol.consumer_flows {
            assert!(q > 0.0, "seed {seed}: consumer {id} flow {q} not positive");
        }
        for (key, &q) in &sol.edge_flows {
            assert!(q > 0.0, "seed {seed}: edge {key:?} flow {q} not positive");
        }
    }
}
