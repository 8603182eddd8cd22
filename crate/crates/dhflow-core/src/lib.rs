//! Steady-state hydraulics of tree-structured district heating networks.
//!
//! A network is a rooted tree: one pump holding a fixed differential
//! pressure at the root, pipes along the edges, and consumer valves at the
//! leaves. With strictly increasing component curves the stationary flow
//! distribution exists, is unique, and responds monotonically to the
//! controls: opening valves (or raising the pump head) increases the total
//! consumer flow, while a consumer that keeps its valve put receives less
//! flow when the others open.
//!
//! The crate provides the network model ([`network`]), the component
//! curves ([`curves`]), two independent equilibrium solvers ([`solver`]),
//! and a scenario engine ([`scenario`]) for valve sweeps, group ramp
//! studies and randomized verification of the monotonicity properties.
//!
//! The crate is `no_std` (with `alloc`); file formats and the command-line
//! interface live in the companion `dhflow-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod curves;
mod math;
pub mod network;
pub mod presets;
pub mod scenario;
pub mod solver;

pub use curves::{
    curve_inverse_numeric, pipe_eval, valve_eval, valve_inverse, CurveError, InversionConfig,
    LossForm, MonotoneCurve, PipeCurveParams, PowerLossCurve, ValveAtOpening, ValveCurveParams,
};
pub use network::{
    EdgeSpec, NetworkSpec, RawNetwork, SubtreeView, ValidationError, VertexId, VertexKind,
};
pub use scenario::{
    generate_random_network, run_group_scenario, run_property_campaign, run_sweep,
    CampaignReport, CaseRecord, CoefficientRanges, Counterexample, GroupScenario, GroupStep,
    GroupStudy, LeafSweep, PropertyCampaignSpec, QuantitySelection, RampSpec, ScenarioError,
    SweepOutputs, SweepRange, SweepResult, SweepRow, SweepSpec, TheoremPart,
};
pub use solver::{
    residual, solve_newton, solve_tree, subtree_flow_response, EquationTag, EquilibriumSolution,
    ResidualEntry, ResidualReport, SettingsError, SolveDiagnostics, SolverConfig, SolverError,
    SolverMethod, ValveSettings,
};
