//! Scenario engine: valve sweeps, group ramp studies, random network
//! generation and the randomized monotonicity-verification campaign.
//!
//! Grid points and campaign cases are independent of each other; they are
//! evaluated sequentially here so that results and reports are
//! deterministic for a given specification.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curves::{PipeCurveParams, ValveCurveParams};
use crate::math::{exp, ln};
use crate::network::{EdgeSpec, NetworkSpec, RawNetwork, VertexId, VertexKind};
use crate::solver::{
    solve_tree, EquilibriumSolution, SettingsError, SolverConfig, SolverError, ValveSettings,
};

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioError {
    GridTooLarge {
        points: u128,
        cap: u128,
    },
    InvalidSpec {
        what: String,
    },
    Settings(SettingsError),
    StepFailed {
        step: u32,
        source: SolverError,
    },
    /// A group hangs off a single edge but the edge flow disagreed with
    /// the summed consumer flows of the group.
    AggregationMismatch {
        step: u32,
        group: String,
    },
    CaseFailed {
        index: u32,
        source: SolverError,
    },
    /// A campaign case violated the claimed monotonicity; the bundle holds
    /// everything needed to replay it.
    CampaignFailed {
        report: Box<CampaignReport>,
        counterexample: Box<Counterexample>,
    },
}

impl From<SettingsError> for ScenarioError {
    fn from(e: SettingsError) -> Self {
        ScenarioError::Settings(e)
    }
}

impl core::fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ScenarioError::GridTooLarge { points, cap } => {
                write!(f, "sweep grid has {points} points, above the cap of {cap}")
            }
            ScenarioError::InvalidSpec { what } => write!(f, "invalid scenario: {what}"),
            ScenarioError::Settings(e) => write!(f, "{e}"),
            ScenarioError::StepFailed { step, source } => {
                write!(f, "solver failed at ramp step {step}: {source}")
            }
            ScenarioError::AggregationMismatch { step, group } => {
                write!(
                    f,
                    "group '{group}' inflow disagrees with its branch edge flow at step {step}"
                )
            }
            ScenarioError::CaseFailed { index, source } => {
                write!(f, "solver failed in campaign case {index}: {source}")
            }
            ScenarioError::CampaignFailed {
                report,
                counterexample,
            } => {
                write!(
                    f,
                    "campaign found {} violating case(s); first counterexample is case {} (seed {})",
                    report.failures, counterexample.index, counterexample.case_seed
                )
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Valve sweeps

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl SweepRange {
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.max - self.min) / self.step + 1e-9) as usize + 1;
        (0..count).map(|i| self.min + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeafSweep {
    Range(SweepRange),
    Fixed(f64),
}

/// Which quantities a sweep records per grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantitySelection {
    pub total: bool,
    pub per_consumer: bool,
    pub pressures: bool,
}

impl Default for QuantitySelection {
    fn default() -> Self {
        Self {
            total: true,
            per_consumer: false,
            pressures: false,
        }
    }
}

pub const DEFAULT_GRID_CAP: u128 = 1_000_000;

#[derive(Debug, Clone)]
pub struct SweepSpec<'a> {
    pub network: &'a NetworkSpec,
    pub pump_pressure: f64,
    /// One entry per leaf: swept range or fixed opening.
    pub leaves: BTreeMap<VertexId, LeafSweep>,
    pub quantities: QuantitySelection,
    pub config: SolverConfig,
    pub grid_cap: u128,
}

impl<'a> SweepSpec<'a> {
    pub fn new(network: &'a NetworkSpec, pump_pressure: f64) -> Self {
        Self {
            network,
            pump_pressure,
            leaves: BTreeMap::new(),
            quantities: QuantitySelection::default(),
            config: SolverConfig::default(),
            grid_cap: DEFAULT_GRID_CAP,
        }
    }

    pub fn sweep(mut self, leaf: VertexId, min: f64, max: f64, step: f64) -> Self {
        self.leaves
            .insert(leaf, LeafSweep::Range(SweepRange { min, max, step }));
        self
    }

    pub fn fixed(mut self, leaf: VertexId, u: f64) -> Self {
        self.leaves.insert(leaf, LeafSweep::Fixed(u));
        self
    }
}

/// One grid point: the swept coordinates (ascending by leaf id) and either
/// the requested outputs or the solver error for that point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub coordinates: Vec<(VertexId, f64)>,
    pub outputs: Option<SweepOutputs>,
    pub error: Option<SolverError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutputs {
    pub total: Option<f64>,
    pub per_consumer: Option<BTreeMap<VertexId, f64>>,
    pub pressures: Option<BTreeMap<VertexId, f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Swept leaves, ascending; the coordinate order of every row.
    pub swept_leaves: Vec<VertexId>,
    pub rows: Vec<SweepRow>,
}

/// Runs the Cartesian valve-position sweep described by `spec`.
///
/// Rows appear in lexicographic grid order (first swept leaf slowest).
/// Per-row solver failures are recorded in the row and do not abort the
/// sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, ScenarioError> {
    let net = spec.network;
    for leaf in net.leaves() {
        if !spec.leaves.contains_key(leaf) {
            return Err(ScenarioError::InvalidSpec {
                what: alloc::format!("leaf {leaf} has neither a range nor a fixed opening"),
            });
        }
    }
    for (id, entry) in &spec.leaves {
        if net.leaves().binary_search(id).is_err() {
            return Err(ScenarioError::InvalidSpec {
                what: alloc::format!("vertex {id} is not a valve leaf"),
            });
        }
        match entry {
            LeafSweep::Range(r) => {
                if !(r.min.is_finite() && r.max.is_finite() && r.step.is_finite()) {
                    return Err(ScenarioError::InvalidSpec {
                        what: alloc::format!("non-finite sweep range for leaf {id}"),
                    });
                }
                if r.step <= 0.0 {
                    return Err(ScenarioError::InvalidSpec {
                        what: alloc::format!("step must be positive for leaf {id}"),
                    });
                }
                if r.min > r.max {
                    return Err(ScenarioError::InvalidSpec {
                        what: alloc::format!("min above max for leaf {id}"),
                    });
                }
                if r.min <= 0.0 {
                    return Err(ScenarioError::InvalidSpec {
                        what: alloc::format!(
                            "sweep range for leaf {id} must stay positive (valve openings are in (0, 1])"
                        ),
                    });
                }
            }
            LeafSweep::Fixed(u) => {
                if !u.is_finite() || *u <= 0.0 {
                    return Err(ScenarioError::InvalidSpec {
                        what: alloc::format!("fixed opening for leaf {id} must be positive"),
                    });
                }
            }
        }
    }

    let mut swept_leaves = Vec::new();
    let mut grids: Vec<Vec<f64>> = Vec::new();
    let mut fixed: Vec<(VertexId, f64)> = Vec::new();
    for (&id, entry) in &spec.leaves {
        match entry {
            LeafSweep::Range(r) => {
                swept_leaves.push(id);
                grids.push(r.values());
            }
            LeafSweep::Fixed(u) => fixed.push((id, *u)),
        }
    }

    let mut points: u128 = 1;
    for g in &grids {
        points = points.saturating_mul(g.len() as u128);
    }
    if points > spec.grid_cap {
        return Err(ScenarioError::GridTooLarge {
            points,
            cap: spec.grid_cap,
        });
    }

    let mut rows = Vec::with_capacity(points as usize);
    let mut odometer = alloc::vec![0usize; grids.len()];
    loop {
        let mut openings: BTreeMap<VertexId, f64> = fixed.iter().copied().collect();
        let mut coordinates = Vec::with_capacity(grids.len());
        for (axis, &digit) in odometer.iter().enumerate() {
            let value = grids[axis][digit];
            openings.insert(swept_leaves[axis], value);
            coordinates.push((swept_leaves[axis], value));
        }
        let u = ValveSettings::new(net, openings)?;
        let row = match solve_tree(net, spec.pump_pressure, &u, &spec.config) {
            Ok(sol) => SweepRow {
                coordinates,
                outputs: Some(SweepOutputs {
                    total: spec.quantities.total.then(|| sol.total_consumer_flow()),
                    per_consumer: spec
                        .quantities
                        .per_consumer
                        .then(|| sol.consumer_flows.clone()),
                    pressures: spec.quantities.pressures.then(|| sol.pressures.clone()),
                }),
                error: None,
            },
            Err(e) => SweepRow {
                coordinates,
                outputs: None,
                error: Some(e),
            },
        };
        rows.push(row);

        // advance, last axis fastest
        let mut axis = grids.len();
        loop {
            if axis == 0 {
                return Ok(SweepResult { swept_leaves, rows });
            }
            axis -= 1;
            odometer[axis] += 1;
            if odometer[axis] < grids[axis].len() {
                break;
            }
            odometer[axis] = 0;
        }
    }
}

// ---------------------------------------------------------------------------
// Group ramp studies

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampSpec {
    pub start: f64,
    pub end: f64,
    /// Number of evaluated points, endpoints included; 0 gives an empty
    /// study.
    pub steps: u32,
}

impl RampSpec {
    pub fn values(&self) -> Vec<f64> {
        match self.steps {
            0 => Vec::new(),
            1 => alloc::vec![self.start],
            n => (0..n)
                .map(|i| {
                    self.start + (self.end - self.start) * i as f64 / (n - 1) as f64
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroupScenario<'a> {
    pub network: &'a NetworkSpec,
    pub pump_pressure: f64,
    /// Named groups partitioning the leaves.
    pub groups: Vec<(String, Vec<VertexId>)>,
    /// Names of the groups whose valves follow the ramp.
    pub opening: Vec<String>,
    pub ramp: RampSpec,
    /// Opening held by every non-ramping group.
    pub fixed_opening: f64,
    pub config: SolverConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupStep {
    pub step: u32,
    pub opening_value: f64,
    pub total_flow: f64,
    /// Summed consumer flow per group, in group declaration order.
    pub group_flows: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupStudy {
    pub group_names: Vec<String>,
    pub steps: Vec<GroupStep>,
}

/// Runs a ramp study: the opening groups sweep their valves from
/// `ramp.start` to `ramp.end` while the remaining groups hold
/// `fixed_opening`.
///
/// When a group's consumers are exactly the leaves below one edge, the
/// summed group flow is cross-checked against that edge's flow.
pub fn run_group_scenario(spec: &GroupScenario) -> Result<GroupStudy, ScenarioError> {
    let net = spec.network;

    let mut seen: BTreeMap<VertexId, &str> = BTreeMap::new();
    let mut names: Vec<String> = Vec::new();
    for (name, members) in &spec.groups {
        if names.iter().any(|n| n == name) {
            return Err(ScenarioError::InvalidSpec {
                what: alloc::format!("duplicate group name '{name}'"),
            });
        }
        if members.is_empty() {
            return Err(ScenarioError::InvalidSpec {
                what: alloc::format!("group '{name}' is empty"),
            });
        }
        for id in members {
            if net.leaves().binary_search(id).is_err() {
                return Err(ScenarioError::InvalidSpec {
                    what: alloc::format!("group '{name}' member {id} is not a valve leaf"),
                });
            }
            if seen.insert(*id, name).is_some() {
                return Err(ScenarioError::InvalidSpec {
                    what: alloc::format!("leaf {id} appears in more than one group"),
                });
            }
        }
        names.push(name.clone());
    }
    if seen.len() != net.leaves().len() {
        let missing = net
            .leaves()
            .iter()
            .find(|l| !seen.contains_key(l))
            .expect("some leaf is uncovered");
        return Err(ScenarioError::InvalidSpec {
            what: alloc::format!("groups do not cover leaf {missing}"),
        });
    }
    for name in &spec.opening {
        if !names.iter().any(|n| n == name) {
            return Err(ScenarioError::InvalidSpec {
                what: alloc::format!("unknown opening group '{name}'"),
            });
        }
    }
    let in_range = |u: f64| u.is_finite() && u > 0.0 && u <= 1.0;
    if !in_range(spec.fixed_opening) {
        return Err(ScenarioError::InvalidSpec {
            what: String::from("fixed opening must lie in (0, 1]"),
        });
    }
    if spec.ramp.steps > 0 && !(in_range(spec.ramp.start) && in_range(spec.ramp.end)) {
        return Err(ScenarioError::InvalidSpec {
            what: String::from("ramp bounds must lie in (0, 1]"),
        });
    }

    // A group aggregates over one edge if some subtree's leaves equal it.
    let single_edge: Vec<Option<(VertexId, VertexId)>> = spec
        .groups
        .iter()
        .map(|(_, members)| {
            let mut sorted = members.clone();
            sorted.sort_unstable();
            net.edge_specs().find_map(|e| {
                let sub = net.subtree(e.head).ok()?;
                (sub.leaves() == sorted).then_some((e.tail, e.head))
            })
        })
        .collect();

    let aggregation_margin = 10.0 * spec.config.residual_tolerance;
    let mut steps = Vec::with_capacity(spec.ramp.steps as usize);
    for (i, value) in spec.ramp.values().into_iter().enumerate() {
        let step = i as u32;
        let mut openings = BTreeMap::new();
        for (name, members) in &spec.groups {
            let u = if spec.opening.iter().any(|n| n == name) {
                value
            } else {
                spec.fixed_opening
            };
            for id in members {
                openings.insert(*id, u);
            }
        }
        let u = ValveSettings::new(net, openings)?;
        let sol = solve_tree(net, spec.pump_pressure, &u, &spec.config)
            .map_err(|source| ScenarioError::StepFailed { step, source })?;

        let mut group_flows = Vec::with_capacity(spec.groups.len());
        for (g, (name, members)) in spec.groups.iter().enumerate() {
            let sum: f64 = members
                .iter()
                .map(|id| sol.consumer_flow(*id).expect("leaf flows present"))
                .sum();
            if let Some((tail, head)) = single_edge[g] {
                let inflow = sol.edge_flow(tail, head).expect("edge flows present");
                if crate::math::abs(inflow - sum) > aggregation_margin {
                    return Err(ScenarioError::AggregationMismatch {
                        step,
                        group: name.clone(),
                    });
                }
            }
            group_flows.push(sum);
        }
        steps.push(GroupStep {
            step,
            opening_value: value,
            total_flow: sol.total_consumer_flow(),
            group_flows,
        });
    }

    Ok(GroupStudy {
        group_names: names,
        steps,
    })
}

// ---------------------------------------------------------------------------
// Random networks

/// Log-uniform sampling ranges for pipe and valve coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientRanges {
    pub pipe_k: (f64, f64),
    pub valve_k: (f64, f64),
}

impl Default for CoefficientRanges {
    fn default() -> Self {
        Self {
            pipe_k: (0.1, 10.0),
            valve_k: (0.1, 10.0),
        }
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    let (lo, hi) = range;
    let t: f64 = rng.random();
    exp(ln(lo) + t * (ln(hi) - ln(lo)))
}

/// Deterministic-for-seed random rooted tree network.
///
/// The pump root has out-degree exactly one (its trunk pipe), interior
/// vertices take up to four children, childless vertices become valves.
/// Pipe coefficients are sampled log-uniform and split evenly over the
/// supply and return layers; valve coefficients are sampled log-uniform.
pub fn generate_random_network(
    seed: u64,
    vertex_count_range: (u32, u32),
    coefficients: &CoefficientRanges,
) -> NetworkSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = vertex_count_range.0.max(2);
    let hi = vertex_count_range.1.max(lo);
    let n = rng.random_range(lo..=hi) as usize;

    // parent[v] for v >= 1; vertex 1 is the trunk child of the root
    let mut parent = alloc::vec![0usize; n];
    let mut child_count = alloc::vec![0u32; n];
    child_count[0] = 1;
    for v in 2..n {
        let eligible: Vec<usize> = (1..v).filter(|&w| child_count[w] < 4).collect();
        let pick = eligible[rng.random_range(0..eligible.len())];
        parent[v] = pick;
        child_count[pick] += 1;
    }

    let mut edges = Vec::with_capacity(n - 1);
    for v in 1..n {
        let k = log_uniform(&mut rng, coefficients.pipe_k);
        edges.push(EdgeSpec {
            tail: VertexId(parent[v] as u32),
            head: VertexId(v as u32),
            pipe: PipeCurveParams::symmetric(k),
        });
    }

    let mut vertices = Vec::with_capacity(n);
    vertices.push((VertexId(0), VertexKind::Pump { pressure: 1.0 }));
    for v in 1..n {
        let kind = if child_count[v] == 0 {
            VertexKind::Valve {
                curve: ValveCurveParams::new(log_uniform(&mut rng, coefficients.valve_k)),
            }
        } else {
            VertexKind::Junction
        };
        vertices.push((VertexId(v as u32), kind));
    }

    RawNetwork::new(vertices, edges)
        .validate()
        .expect("generated trees are structurally valid")
}

// ---------------------------------------------------------------------------
// Monotonicity verification campaign

/// Which of the two monotonicity results a case exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TheoremPart {
    /// Opening valves (and possibly raising the pump head) strictly
    /// increases the total consumer flow.
    TotalFlow,
    /// With the pump head fixed, a consumer whose valve stays put receives
    /// strictly less flow when others open.
    FixedConsumer,
}

impl TheoremPart {
    pub fn as_str(&self) -> &'static str {
        match self {
            TheoremPart::TotalFlow => "total-flow",
            TheoremPart::FixedConsumer => "fixed-consumer",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyCampaignSpec {
    pub seed: u64,
    pub cases: u32,
    pub vertex_count_range: (u32, u32),
    pub coefficients: CoefficientRanges,
    /// Base openings are sampled uniformly from this range; keeping the
    /// upper end at 0.9 leaves room for the minimum opening gap below 1.
    pub base_opening_range: (f64, f64),
    /// Raised leaves gain a uniform increment from this range (clamped to
    /// 1); the lower end keeps strict-inequality margins resolvable.
    pub opening_gap_range: (f64, f64),
    /// Gap range for the fixed-consumer cases. The drop at an unchanged
    /// leaf is a second-order effect (it only couples through shared
    /// upstream pressure losses), so these cases open wider to keep the
    /// drop clear of the pass margin.
    pub fixed_consumer_gap_range: (f64, f64),
    /// Fixed-consumer cases leave at most this many leaves unchanged and
    /// open all the others, again to keep the induced drop resolvable.
    pub max_unchanged_leaves: usize,
    pub base_pressure: f64,
    /// Pump raise sampled from this range for the cases that raise it.
    pub pump_raise_range: (f64, f64),
    pub check_total_flow: bool,
    pub check_fixed_consumer: bool,
    pub config: SolverConfig,
}

impl PropertyCampaignSpec {
    pub fn new(seed: u64, cases: u32) -> Self {
        Self {
            seed,
            cases,
            vertex_count_range: (5, 50),
            coefficients: CoefficientRanges::default(),
            base_opening_range: (0.2, 0.9),
            opening_gap_range: (0.05, 0.3),
            fixed_consumer_gap_range: (0.2, 0.4),
            max_unchanged_leaves: 3,
            base_pressure: 1.0,
            pump_raise_range: (0.1, 1.0),
            check_total_flow: true,
            check_fixed_consumer: true,
            config: SolverConfig::default(),
        }
    }

    pub fn with_max_vertices(mut self, max: u32) -> Self {
        self.vertex_count_range = (self.vertex_count_range.0.min(max.max(2)), max.max(2));
        self
    }

    pub fn parts(mut self, total_flow: bool, fixed_consumer: bool) -> Self {
        self.check_total_flow = total_flow;
        self.check_fixed_consumer = fixed_consumer;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseRecord {
    pub index: u32,
    pub case_seed: u64,
    pub part: TheoremPart,
    pub vertex_count: u32,
    pub leaf_count: u32,
    pub raised_leaves: u32,
    pub pump_raised: bool,
    /// Strict margin observed: total-flow increase, or the smallest flow
    /// drop over the unchanged leaves.
    pub observed_margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignReport {
    pub seed: u64,
    pub requested_cases: u32,
    pub records: Vec<CaseRecord>,
    pub passes: u32,
    pub failures: u32,
}

/// Everything needed to replay a violating case.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub index: u32,
    pub case_seed: u64,
    pub part: TheoremPart,
    pub network: NetworkSpec,
    pub base_openings: ValveSettings,
    pub raised_openings: ValveSettings,
    pub base_pressure: f64,
    pub raised_pressure: f64,
    pub base_solution: EquilibriumSolution,
    pub raised_solution: EquilibriumSolution,
    pub observed_margin: f64,
    pub violating_leaf: Option<VertexId>,
}

fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index
        .wrapping_add(1)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs the randomized verification campaign.
///
/// Each case draws a random network, a base valve setting and pump head,
/// then opens a random subset of valves by at least the configured gap
/// (raising the pump head in half of the total-flow cases) and solves
/// both operating points. Total-flow cases require the total consumer
/// flow to rise by more than ten residual tolerances; fixed-consumer
/// cases keep the pump head, leave at least one leaf unchanged, and
/// require every unchanged leaf's flow to drop by more than the same
/// margin. A violating case ends the run in
/// [`ScenarioError::CampaignFailed`] carrying the full reproduction
/// bundle; a violation would point at an implementation bug, not at the
/// property.
pub fn run_property_campaign(
    spec: &PropertyCampaignSpec,
) -> Result<CampaignReport, ScenarioError> {
    if !spec.check_total_flow && !spec.check_fixed_consumer {
        return Err(ScenarioError::InvalidSpec {
            what: String::from("campaign must check at least one theorem part"),
        });
    }
    let (b_lo, b_hi) = spec.base_opening_range;
    if !(0.0 < b_lo && b_lo <= b_hi && b_hi + spec.opening_gap_range.0 <= 1.0 + 1e-12) {
        return Err(ScenarioError::InvalidSpec {
            what: String::from(
                "base opening range plus the minimum gap must stay within (0, 1]",
            ),
        });
    }

    let margin = 10.0 * spec.config.residual_tolerance;
    let mut records = Vec::with_capacity(spec.cases as usize);
    let mut first_counterexample: Option<Counterexample> = None;

    for index in 0..spec.cases {
        let part = match (spec.check_total_flow, spec.check_fixed_consumer) {
            (true, true) => {
                if index % 2 == 0 {
                    TheoremPart::TotalFlow
                } else {
                    TheoremPart::FixedConsumer
                }
            }
            (true, false) => TheoremPart::TotalFlow,
            (false, true) => TheoremPart::FixedConsumer,
            (false, false) => unreachable!(),
        };
        let case_seed = mix_seed(spec.seed, index as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(case_seed);

        // fixed-consumer cases need at least one leaf that stays unchanged
        let needs_two_leaves = part == TheoremPart::FixedConsumer;
        let mut net = None;
        for attempt in 0..200u64 {
            let candidate = generate_random_network(
                mix_seed(case_seed, attempt),
                spec.vertex_count_range,
                &spec.coefficients,
            );
            if !needs_two_leaves || candidate.leaves().len() >= 2 {
                net = Some(candidate);
                break;
            }
        }
        let net = net.ok_or_else(|| ScenarioError::InvalidSpec {
            what: String::from(
                "vertex count range cannot produce a network with two leaves",
            ),
        })?;
        let leaves: Vec<VertexId> = net.leaves().to_vec();

        let base_map: BTreeMap<VertexId, f64> = leaves
            .iter()
            .map(|&l| (l, b_lo + rng.random::<f64>() * (b_hi - b_lo)))
            .collect();
        let base = ValveSettings::new(&net, base_map).expect("sampled openings are valid");

        // choose the raised subset
        let raised_ids: Vec<VertexId> = match part {
            TheoremPart::TotalFlow => {
                let mut picked: Vec<VertexId> = leaves
                    .iter()
                    .copied()
                    .filter(|_| rng.random::<bool>())
                    .collect();
                if picked.is_empty() {
                    picked.push(leaves[rng.random_range(0..leaves.len())]);
                }
                picked
            }
            TheoremPart::FixedConsumer => {
                // keep a handful of leaves unchanged, open everything else
                let cap = spec.max_unchanged_leaves.max(1).min(leaves.len() - 1);
                let unchanged = rng.random_range(1..=cap);
                let mut pool = leaves.clone();
                for i in 0..unchanged {
                    let j = rng.random_range(i..pool.len());
                    pool.swap(i, j);
                }
                let mut picked: Vec<VertexId> = pool[unchanged..].to_vec();
                picked.sort_unstable();
                picked
            }
        };

        let gap_range = match part {
            TheoremPart::TotalFlow => spec.opening_gap_range,
            TheoremPart::FixedConsumer => spec.fixed_consumer_gap_range,
        };
        let mut raised = base.clone();
        for &l in &raised_ids {
            let gap = gap_range.0 + rng.random::<f64>() * (gap_range.1 - gap_range.0);
            let u = (base.opening(l).expect("leaf present") + gap).min(1.0);
            raised = raised.with_opening(l, u).expect("opening stays valid");
        }

        let base_pressure = spec.base_pressure;
        let pump_raised = part == TheoremPart::TotalFlow && rng.random::<bool>();
        let raised_pressure = if pump_raised {
            base_pressure
                + spec.pump_raise_range.0
                + rng.random::<f64>() * (spec.pump_raise_range.1 - spec.pump_raise_range.0)
        } else {
            base_pressure
        };

        let base_solution = solve_tree(&net, base_pressure, &base, &spec.config)
            .map_err(|source| ScenarioError::CaseFailed { index, source })?;
        let raised_solution = solve_tree(&net, raised_pressure, &raised, &spec.config)
            .map_err(|source| ScenarioError::CaseFailed { index, source })?;

        let (observed_margin, pass, violating_leaf) = match part {
            TheoremPart::TotalFlow => {
                let delta =
                    raised_solution.total_consumer_flow() - base_solution.total_consumer_flow();
                (delta, delta > margin, None)
            }
            TheoremPart::FixedConsumer => {
                let mut worst = f64::INFINITY;
                let mut worst_leaf = None;
                for &l in &leaves {
                    if raised_ids.binary_search(&l).is_ok() {
                        continue;
                    }
                    let drop = base_solution.consumer_flow(l).expect("leaf flow")
                        - raised_solution.consumer_flow(l).expect("leaf flow");
                    if drop < worst {
                        worst = drop;
                        worst_leaf = Some(l);
                    }
                }
                let pass = worst > margin;
                (worst, pass, if pass { None } else { worst_leaf })
            }
        };

        records.push(CaseRecord {
            index,
            case_seed,
            part,
            vertex_count: net.vertex_count() as u32,
            leaf_count: leaves.len() as u32,
            raised_leaves: raised_ids.len() as u32,
            pump_raised,
            observed_margin,
            pass,
        });

        if !pass && first_counterexample.is_none() {
            first_counterexample = Some(Counterexample {
                index,
                case_seed,
                part,
                network: net,
                base_openings: base,
                raised_openings: raised,
                base_pressure,
                raised_pressure,
                base_solution,
                raised_solution,
                observed_margin,
                violating_leaf,
            });
        }
    }

    let failures = records.iter().filter(|r| !r.pass).count() as u32;
    let report = CampaignReport {
        seed: spec.seed,
        requested_cases: spec.cases,
        passes: spec.cases - failures,
        failures,
        records,
    };
    match first_counterexample {
        Some(cx) => Err(ScenarioError::CampaignFailed {
            report: Box::new(report),
            counterexample: Box::new(cx),
        }),
        None => Ok(report),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn sweep_rejects_bad_ranges() {
        let net = presets::two_consumer();
        let spec = SweepSpec::new(&net, 1.0)
            .sweep(VertexId(1), 0.1, 1.0, 0.0)
            .fixed(VertexId(2), 1.0);
        assert!(matches!(
            run_sweep(&spec),
            Err(ScenarioError::InvalidSpec { .. })
        ));

        let spec = SweepSpec::new(&net, 1.0).sweep(VertexId(1), 0.1, 1.0, 0.1);
        assert!(matches!(
            run_sweep(&spec),
            Err(ScenarioError::InvalidSpec { .. })
        ));
    }

    #[test]
    fn sweep_grid_cap() {
        let net = presets::two_consumer();
        let mut spec = SweepSpec::new(&net, 1.0)
            .sweep(VertexId(1), 0.1, 1.0, 0.1)
            .sweep(VertexId(2), 0.1, 1.0, 0.1);
        spec.grid_cap = 10;
        assert!(matches!(
            run_sweep(&spec),
            Err(ScenarioError::GridTooLarge { points: 100, .. })
        ));
    }

    #[test]
    fn sweep_zero_pressure_rows_are_zero() {
        let net = presets::two_consumer();
        let spec = SweepSpec::new(&net, 0.0)
            .sweep(VertexId(1), 0.25, 1.0, 0.25)
            .fixed(VertexId(2), 0.5);
        let result = run_sweep(&spec).unwrap();
        assert_eq!(result.rows.len(), 4);
        for row in &result.rows {
            assert_eq!(row.outputs.as_ref().unwrap().total, Some(0.0));
        }
    }

    #[test]
    fn sweep_rows_are_lexicographic() {
        let net = presets::two_consumer();
        let spec = SweepSpec::new(&net, 1.0)
            .sweep(VertexId(1), 0.5, 1.0, 0.5)
            .sweep(VertexId(2), 0.25, 0.75, 0.25);
        let result = run_sweep(&spec).unwrap();
        let coords: Vec<(f64, f64)> = result
            .rows
            .iter()
            .map(|r| (r.coordinates[0].1, r.coordinates[1].1))
            .collect();
        assert_eq!(
            coords,
            alloc::vec![
                (0.5, 0.25),
                (0.5, 0.5),
                (0.5, 0.75),
                (1.0, 0.25),
                (1.0, 0.5),
                (1.0, 0.75),
            ]
        );
    }

    #[test]
    fn ramp_with_zero_steps_is_empty() {
        let net = presets::two_consumer();
        let scenario = GroupScenario {
            network: &net,
            pump_pressure: 1.0,
            groups: alloc::vec![
                (String::from("a"), alloc::vec![VertexId(1)]),
                (String::from("b"), alloc::vec![VertexId(2)]),
            ],
            opening: alloc::vec![String::from("a")],
            ramp: RampSpec {
                start: 0.3,
                end: 1.0,
                steps: 0,
            },
            fixed_opening: 0.5,
            config: SolverConfig::default(),
        };
        let study = run_group_scenario(&scenario).unwrap();
        assert!(study.steps.is_empty());
    }

    #[test]
    fn groups_must_partition_leaves() {
        let net = presets::two_consumer();
        let scenario = GroupScenario {
            network: &net,
            pump_pressure: 1.0,
            groups: alloc::vec![(String::from("a"), alloc::vec![VertexId(1)])],
            opening: alloc::vec![String::from("a")],
            ramp: RampSpec {
                start: 0.3,
                end: 1.0,
                steps: 3,
            },
            fixed_opening: 0.5,
            config: SolverConfig::default(),
        };
        assert!(matches!(
            run_group_scenario(&scenario),
            Err(ScenarioError::InvalidSpec { .. })
        ));
    }

    #[test]
    fn generator_is_deterministic_and_valid() {
        let ranges = CoefficientRanges::default();
        let a = generate_random_network(42, (5, 50), &ranges);
        let b = generate_random_network(42, (5, 50), &ranges);
        assert_eq!(a, b);
        assert!(a.root_series_pipe());
        assert!(a.vertex_count() >= 5 && a.vertex_count() <= 50);

        let c = generate_random_network(43, (5, 50), &ranges);
        assert_ne!(a, c);
    }

    #[test]
    fn generator_forced_two_vertices() {
        let net = generate_random_network(7, (2, 2), &CoefficientRanges::default());
        assert_eq!(net.vertex_count(), 2);
        assert_eq!(net.leaves(), &[VertexId(1)]);
    }

    #[test]
    fn empty_campaign_is_empty() {
        let report = run_property_campaign(&PropertyCampaignSpec::new(0, 0)).unwrap();
        assert_eq!(report.records.len(), 0);
        assert_eq!(report.passes, 0);
        assert_eq!(report.failures, 0);
    }

    #[test]
    fn small_campaign_passes_and_is_deterministic() {
        let spec = PropertyCampaignSpec::new(11, 10);
        let a = run_property_campaign(&spec).unwrap();
        let b = run_property_campaign(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.failures, 0);
        assert_eq!(a.passes, 10);
        assert!(a.records.iter().all(|r| r.observed_margin > 1e-8));
    }
}
