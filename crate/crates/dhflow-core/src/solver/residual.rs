//! Residual evaluation of a candidate solution against the full equation
//! system.
//!
//! One entry per equation instance, in a fixed documented order:
//!
//! 1. pump pressure: `p_root - p_0`
//! 2. valve characteristics, leaves ascending: `p_l - g(q_l, u_l)`
//! 3. pipe losses, edges ascending: `(p_i - p_j) - f(q_ij)`
//! 4. junction balances, junctions ascending: inflow minus outflow
//!    (junction vertex flows are identically zero, so this combines the
//!    zero-flow condition with conservation)
//! 5. root balance: `q_root + sum of root edge flows`
//! 6. leaf balances, leaves ascending: `q_l - q_(parent,l)`
//!
//! The norm is the maximum absolute entry.

use alloc::vec::Vec;

use crate::curves::power_loss;
use crate::network::{NetworkSpec, VertexId, VertexKind};

use super::{valve_drop, EquilibriumSolution, SolverError, ValveSettings};

/// Which equation instance a residual entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquationTag {
    PumpPressure,
    ValveCharacteristic(VertexId),
    EdgeLoss(VertexId, VertexId),
    JunctionBalance(VertexId),
    RootBalance,
    LeafBalance(VertexId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualEntry {
    pub equation: EquationTag,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub entries: Vec<ResidualEntry>,
    pub inf_norm: f64,
}

/// Evaluates every equation residual for `candidate` on `net` with valve
/// settings `u` and imposed pump pressure `pump_pressure`.
pub fn residual(
    net: &NetworkSpec,
    candidate: &EquilibriumSolution,
    u: &ValveSettings,
    pump_pressure: f64,
) -> Result<ResidualReport, SolverError> {
    if candidate.pressures.len() != net.vertex_count() {
        return Err(SolverError::DimensionMismatch {
            what: "pressure map does not cover the vertices",
        });
    }
    if candidate.edge_flows.len() != net.edge_count() {
        return Err(SolverError::DimensionMismatch {
            what: "edge flow map does not cover the edges",
        });
    }
    if candidate.consumer_flows.len() != net.leaves().len() {
        return Err(SolverError::DimensionMismatch {
            what: "consumer flow map does not cover the leaves",
        });
    }

    let n = net.vertex_count();
    let mut pressure = alloc::vec![0.0f64; n];
    for (ix, id) in net.vertex_ids().iter().enumerate() {
        pressure[ix] = *candidate
            .pressures
            .get(id)
            .ok_or(SolverError::DimensionMismatch {
                what: "missing vertex pressure",
            })?;
    }
    let mut edge_flow = alloc::vec![0.0f64; net.edge_count()];
    for (e, edge) in net.edges.iter().enumerate() {
        let key = (net.id_of(edge.tail), net.id_of(edge.head));
        edge_flow[e] = *candidate
            .edge_flows
            .get(&key)
            .ok_or(SolverError::DimensionMismatch {
                what: "missing edge flow",
            })?;
    }

    let alpha = net.loss_form().alpha();
    let mut entries = Vec::new();

    entries.push(ResidualEntry {
        equation: EquationTag::PumpPressure,
        value: pressure[0] - pump_pressure,
    });

    for &l in &net.leaf_indices {
        let id = net.id_of(l);
        let curve = match net.kind_at(l) {
            VertexKind::Valve { curve } => curve,
            _ => unreachable!("leaves are valves"),
        };
        let q_l = *candidate
            .consumer_flows
            .get(&id)
            .ok_or(SolverError::DimensionMismatch {
                what: "missing consumer flow",
            })?;
        let opening = u.opening(id).ok_or(SolverError::ValveCoverage { id })?;
        entries.push(ResidualEntry {
            equation: EquationTag::ValveCharacteristic(id),
            value: pressure[l] - valve_drop(curve, q_l, opening),
        });
    }

    for (e, edge) in net.edges.iter().enumerate() {
        entries.push(ResidualEntry {
            equation: EquationTag::EdgeLoss(net.id_of(edge.tail), net.id_of(edge.head)),
            value: (pressure[edge.tail] - pressure[edge.head])
                - power_loss(edge.k, alpha, edge_flow[e]),
        });
    }

    for v in 0..n {
        if v == 0 || net.is_leaf(v) {
            continue;
        }
        let (_, in_edge) = net.parent[v].expect("non-root vertices have parents");
        let mut balance = edge_flow[in_edge];
        for &(_, out_edge) in &net.children[v] {
            balance -= edge_flow[out_edge];
        }
        entries.push(ResidualEntry {
            equation: EquationTag::JunctionBalance(net.id_of(v)),
            value: balance,
        });
    }

    let mut root_out = 0.0;
    for &(_, e) in &net.children[0] {
        root_out += edge_flow[e];
    }
    entries.push(ResidualEntry {
        equation: EquationTag::RootBalance,
        value: candidate.root_flow + root_out,
    });

    for &l in &net.leaf_indices {
        let id = net.id_of(l);
        let (_, e) = net.parent[l].expect("leaves have parents");
        let q_l = candidate.consumer_flows[&id];
        entries.push(ResidualEntry {
            equation: EquationTag::LeafBalance(id),
            value: q_l - edge_flow[e],
        });
    }

    let inf_norm = entries
        .iter()
        .map(|e| crate::math::abs(e.value))
        .fold(0.0f64, f64::max);
    Ok(ResidualReport { entries, inf_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::solver::{SolveDiagnostics, SolverMethod};

    fn zero_candidate(net: &NetworkSpec) -> EquilibriumSolution {
        EquilibriumSolution {
            pressures: net.vertex_ids().iter().map(|&id| (id, 0.0)).collect(),
            edge_flows: net.edge_specs().map(|e| ((e.tail, e.head), 0.0)).collect(),
            consumer_flows: net.leaves().iter().map(|&l| (l, 0.0)).collect(),
            root_flow: 0.0,
            diagnostics: SolveDiagnostics {
                residual_inf_norm: 0.0,
                outer_iterations: 0,
                method: SolverMethod::Tree,
            },
        }
    }

    #[test]
    fn zero_candidate_with_zero_pump_is_exact() {
        let net = presets::two_consumer();
        let u = crate::solver::ValveSettings::uniform(&net, 1.0).unwrap();
        let report = residual(&net, &zero_candidate(&net), &u, 0.0).unwrap();
        assert_eq!(report.inf_norm, 0.0);
    }

    #[test]
    fn zero_candidate_with_unit_pump_misses_by_the_pump_head() {
        let net = presets::two_consumer();
        let u = crate::solver::ValveSettings::uniform(&net, 1.0).unwrap();
        let report = residual(&net, &zero_candidate(&net), &u, 1.0).unwrap();
        assert_eq!(report.inf_norm, 1.0);
        assert_eq!(report.entries[0].equation, EquationTag::PumpPressure);
        assert_eq!(report.entries[0].value, -1.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let net = presets::two_consumer();
        let u = crate::solver::ValveSettings::uniform(&net, 1.0).unwrap();
        let mut candidate = zero_candidate(&net);
        candidate.pressures.remove(&crate::network::VertexId(4));
        assert!(matches!(
            residual(&net, &candidate, &u, 0.0),
            Err(SolverError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn entry_order_is_documented() {
        let net = presets::two_consumer();
        let u = crate::solver::ValveSettings::uniform(&net, 1.0).unwrap();
        let report = residual(&net, &zero_candidate(&net), &u, 0.0).unwrap();
        let tags: Vec<EquationTag> = report.entries.iter().map(|e| e.equation).collect();
        use crate::network::VertexId as V;
        use EquationTag::*;
        assert_eq!(
            tags,
            alloc::vec![
                PumpPressure,
                ValveCharacteristic(V(1)),
                ValveCharacteristic(V(2)),
                EdgeLoss(V(0), V(3)),
                EdgeLoss(V(3), V(1)),
                EdgeLoss(V(3), V(4)),
                EdgeLoss(V(4), V(2)),
                JunctionBalance(V(3)),
                JunctionBalance(V(4)),
                RootBalance,
                LeafBalance(V(1)),
                LeafBalance(V(2)),
            ]
        );
    }
}
