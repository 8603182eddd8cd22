//! Bundled example networks.

use alloc::string::String;
use alloc::vec::Vec;

use crate::curves::{PipeCurveParams, ValveCurveParams};
use crate::network::{EdgeSpec, NetworkSpec, RawNetwork, VertexId, VertexKind};

fn pump(id: u32, pressure: f64) -> (VertexId, VertexKind) {
    (VertexId(id), VertexKind::Pump { pressure })
}

fn junction(id: u32) -> (VertexId, VertexKind) {
    (VertexId(id), VertexKind::Junction)
}

fn valve(id: u32, k: f64) -> (VertexId, VertexKind) {
    (
        VertexId(id),
        VertexKind::Valve {
            curve: ValveCurveParams::new(k),
        },
    )
}

fn edge(tail: u32, head: u32, k_half: f64) -> EdgeSpec {
    EdgeSpec {
        tail: VertexId(tail),
        head: VertexId(head),
        pipe: PipeCurveParams::new(k_half, k_half),
    }
}

/// Two consumers behind a shared trunk: pump 0 feeds junction 3, which
/// serves valve 1 directly and valve 2 through junction 4. All pipes have
/// `k_supply = k_return = 0.5`, both valves have `k = 1`, and the pump
/// holds a differential pressure of 1.
pub fn two_consumer() -> NetworkSpec {
    RawNetwork::new(
        alloc::vec![pump(0, 1.0), valve(1, 1.0), valve(2, 1.0), junction(3), junction(4)],
        alloc::vec![edge(0, 3, 0.5), edge(3, 1, 0.5), edge(3, 4, 0.5), edge(4, 2, 0.5)],
    )
    .validate()
    .expect("two-consumer network is valid")
}

/// A 22-consumer distribution network with three street branches.
///
/// The pump (vertex 0) feeds a trunk of junctions 23, 24, 25. Each trunk
/// junction serves one branch: a chain of junctions with one consumer tap
/// each. Consumers 1-8 hang off the first branch, 9-14 off the second,
/// 15-22 off the third. Trunk pipes have `k_supply = k_return = 0.5`,
/// branch and service pipes 0.25, and every valve has `k = 1`; the pump
/// holds a differential pressure of 1.
pub fn network22() -> NetworkSpec {
    let mut vertices = Vec::new();
    let mut edges = Vec::new();

    vertices.push(pump(0, 1.0));
    for consumer in 1..=22 {
        vertices.push(valve(consumer, 1.0));
    }
    for trunk in 23..=25 {
        vertices.push(junction(trunk));
    }

    edges.push(edge(0, 23, 0.5));
    edges.push(edge(23, 24, 0.5));
    edges.push(edge(24, 25, 0.5));

    // (trunk junction, first chain junction id, consumer ids)
    let branches: [(u32, u32, core::ops::RangeInclusive<u32>); 3] = [
        (23, 26, 1..=8),
        (24, 34, 9..=14),
        (25, 40, 15..=22),
    ];
    for (trunk, chain_start, consumers) in branches {
        let mut tap = chain_start;
        let mut upstream = trunk;
        for consumer in consumers {
            vertices.push(junction(tap));
            edges.push(edge(upstream, tap, 0.25));
            edges.push(edge(tap, consumer, 0.25));
            upstream = tap;
            tap += 1;
        }
    }

    RawNetwork::new(vertices, edges)
        .validate()
        .expect("22-consumer network is valid")
}

/// The three consumer groups of [`network22`], one per branch.
pub fn network22_groups() -> Vec<(String, Vec<VertexId>)> {
    let group = |name: &str, range: core::ops::RangeInclusive<u32>| {
        (
            String::from(name),
            range.map(VertexId).collect::<Vec<_>>(),
        )
    };
    alloc::vec![
        group("group1", 1..=8),
        group("group2", 9..=14),
        group("group3", 15..=22),
    ]
}
