//! Equilibrium solvers for the collapsed differential-pressure system.
//!
//! Unknowns are a differential pressure per vertex and a flow per edge;
//! the equations are the valve characteristics at the leaves, the pipe
//! losses along the edges, and flow conservation at every vertex.
//!
//! Two independent routes are provided:
//!
//! * [`solve_tree`] — the primary method. It exploits the tree structure:
//!   the flow a subtree absorbs is a strictly increasing function of the
//!   pressure at its head, so every edge flow is the root of a strictly
//!   increasing scalar equation and can be found by bracketed bisection,
//!   which cannot diverge. Subtree responses are composed bottom-up; for
//!   the power-law curve family the series/parallel composition collapses
//!   in closed form, which keeps evaluations O(1) (the naive recursive
//!   alternative re-solves every descendant edge per bisection iterate and
//!   is exponential in branching depth).
//! * [`solve_newton`] — a damped Newton iteration on the stacked residual
//!   vector, sharing nothing with the tree route. It serves as an
//!   independent cross-check.
//!
//! Both are pure functions of `(network, pump pressure, valve settings,
//! config)` and safe to call concurrently.

mod newton;
mod residual;

pub use newton::solve_newton;
pub use residual::{residual, EquationTag, ResidualEntry, ResidualReport};

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::curves::{power_loss, power_loss_inverse, CurveError};
use crate::math::{abs, pow, sgn, sqrt};
use crate::network::{NetworkSpec, VertexId, VertexKind};

/// Tolerances and iteration limits shared by both solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Absolute bracket tolerance on each scalar flow solve.
    pub flow_tolerance: f64,
    /// Accepted infinity norm of the assembled residual vector.
    pub residual_tolerance: f64,
    /// Iteration cap per scalar bisection.
    pub max_scalar_iterations: u32,
    /// Iteration cap for the Newton solver.
    pub max_newton_iterations: u32,
    /// Smallest step fraction the Newton backtracking may reach.
    pub newton_damping_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            flow_tolerance: 1e-10,
            residual_tolerance: 1e-9,
            max_scalar_iterations: 200,
            max_newton_iterations: 100,
            newton_damping_floor: 9.5367431640625e-7, // 2^-20
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = self.flow_tolerance > 0.0
            && self.residual_tolerance > 0.0
            && self.newton_damping_floor > 0.0;
        if !positive {
            return Err(SolverError::BadConfig {
                what: "tolerances and damping floor must be positive",
            });
        }
        if self.max_scalar_iterations == 0 || self.max_newton_iterations == 0 {
            return Err(SolverError::BadConfig {
                what: "iteration caps must be at least 1",
            });
        }
        Ok(())
    }
}

/// Errors from building [`ValveSettings`]; these are input errors, not
/// solver failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SettingsError {
    MissingLeaf { id: VertexId },
    NotALeaf { id: VertexId },
    NonPositiveOpening { id: VertexId, value: f64 },
    NonFiniteOpening { id: VertexId, value: f64 },
}

impl core::fmt::Display for SettingsError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SettingsError::MissingLeaf { id } => {
                write!(f, "no valve opening given for leaf {id}")
            }
            SettingsError::NotALeaf { id } => {
                write!(f, "valve opening given for vertex {id}, which is not a valve leaf")
            }
            SettingsError::NonPositiveOpening { id, value } => {
                write!(f, "valve opening {value} for leaf {id} must be positive (a closed valve is outside the model)")
            }
            SettingsError::NonFiniteOpening { id, value } => {
                write!(f, "valve opening {value} for leaf {id} is not finite")
            }
        }
    }
}

/// The control input: one opening in (0, 1] per valve leaf.
///
/// Openings above 1 are outside the normal operating range; they are
/// accepted numerically and reported by [`above_normal_range`]
/// (ValveSettings::above_normal_range) so callers can warn.
#[derive(Debug, Clone, PartialEq)]
pub struct ValveSettings {
    openings: BTreeMap<VertexId, f64>,
}

impl ValveSettings {
    pub fn new(
        net: &NetworkSpec,
        openings: BTreeMap<VertexId, f64>,
    ) -> Result<Self, SettingsError> {
        for (&id, &u) in &openings {
            if net.leaves().binary_search(&id).is_err() {
                return Err(SettingsError::NotALeaf { id });
            }
            if !u.is_finite() {
                return Err(SettingsError::NonFiniteOpening { id, value: u });
            }
            if u <= 0.0 {
                return Err(SettingsError::NonPositiveOpening { id, value: u });
            }
        }
        for &leaf in net.leaves() {
            if !openings.contains_key(&leaf) {
                return Err(SettingsError::MissingLeaf { id: leaf });
            }
        }
        Ok(Self { openings })
    }

    /// The same opening for every leaf.
    pub fn uniform(net: &NetworkSpec, u: f64) -> Result<Self, SettingsError> {
        let map = net.leaves().iter().map(|&l| (l, u)).collect();
        Self::new(net, map)
    }

    /// Returns a copy with leaf `id` set to `u`; `id` must already be a key.
    pub fn with_opening(&self, id: VertexId, u: f64) -> Result<Self, SettingsError> {
        if !self.openings.contains_key(&id) {
            return Err(SettingsError::NotALeaf { id });
        }
        if !u.is_finite() {
            return Err(SettingsError::NonFiniteOpening { id, value: u });
        }
        if u <= 0.0 {
            return Err(SettingsError::NonPositiveOpening { id, value: u });
        }
        let mut openings = self.openings.clone();
        openings.insert(id, u);
        Ok(Self { openings })
    }

    pub fn opening(&self, id: VertexId) -> Option<f64> {
        self.openings.get(&id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VertexId, f64)> + '_ {
        self.openings.iter().map(|(&id, &u)| (id, u))
    }

    /// Leaves whose opening exceeds 1 (outside the normal operating range).
    pub fn above_normal_range(&self) -> Vec<VertexId> {
        self.openings
            .iter()
            .filter(|(_, &u)| u > 1.0)
            .map(|(&id, _)| id)
            .collect()
    }

    fn covers(&self, net: &NetworkSpec) -> Result<(), SolverError> {
        if self.openings.len() != net.leaves().len() {
            let id = net
                .leaves()
                .iter()
                .find(|l| !self.openings.contains_key(l))
                .copied()
                .or_else(|| self.openings.keys().next().copied())
                .unwrap_or(VertexId(0));
            return Err(SolverError::ValveCoverage { id });
        }
        for &leaf in net.leaves() {
            if !self.openings.contains_key(&leaf) {
                return Err(SolverError::ValveCoverage { id: leaf });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethod {
    Tree,
    Newton,
}

impl SolverMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverMethod::Tree => "tree",
            SolverMethod::Newton => "newton",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveDiagnostics {
    /// Infinity norm of the assembled residual vector.
    pub residual_inf_norm: f64,
    /// Tree: total scalar bisection iterations. Newton: accepted steps.
    pub outer_iterations: u32,
    pub method: SolverMethod,
}

/// A solved equilibrium: differential pressure per vertex, flow per edge,
/// flow per consumer, and the pump throughput `root_flow` (negative, since
/// the root injects what the consumers absorb).
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSolution {
    pub pressures: BTreeMap<VertexId, f64>,
    pub edge_flows: BTreeMap<(VertexId, VertexId), f64>,
    pub consumer_flows: BTreeMap<VertexId, f64>,
    pub root_flow: f64,
    pub diagnostics: SolveDiagnostics,
}

impl EquilibriumSolution {
    pub fn total_consumer_flow(&self) -> f64 {
        self.consumer_flows.values().sum()
    }

    pub fn pressure(&self, id: VertexId) -> Option<f64> {
        self.pressures.get(&id).copied()
    }

    pub fn edge_flow(&self, tail: VertexId, head: VertexId) -> Option<f64> {
        self.edge_flows.get(&(tail, head)).copied()
    }

    pub fn consumer_flow(&self, id: VertexId) -> Option<f64> {
        self.consumer_flows.get(&id).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverError {
    NonFinitePressure { value: f64 },
    /// Bracket expansion hit its doubling cap; the subtree response never
    /// reached the probed flow, violating the unboundedness assumption.
    ScalarSolveDiverged { doublings: u32 },
    MaxIterations { iterations: u32 },
    NewtonStalled { iteration: u32 },
    SingularJacobian { row: usize },
    /// The assembled solution violates the equation system beyond the
    /// residual tolerance; internal consistency guard.
    ResidualCheckFailed { norm: f64, tolerance: f64 },
    DimensionMismatch { what: &'static str },
    /// `subtree_flow_response` was asked about the root, which has no
    /// enclosing subtree response.
    IsRoot { id: VertexId },
    /// Valve settings do not cover exactly the leaves of this network.
    ValveCoverage { id: VertexId },
    BadConfig { what: &'static str },
    Curve(CurveError),
}

impl From<CurveError> for SolverError {
    fn from(e: CurveError) -> Self {
        SolverError::Curve(e)
    }
}

impl core::fmt::Display for SolverError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SolverError::NonFinitePressure { value } => {
                write!(f, "pump pressure {value} is not finite")
            }
            SolverError::ScalarSolveDiverged { doublings } => {
                write!(f, "scalar solve diverged: bracket not found after {doublings} doublings")
            }
            SolverError::MaxIterations { iterations } => {
                write!(f, "iteration cap of {iterations} reached")
            }
            SolverError::NewtonStalled { iteration } => {
                write!(f, "newton backtracking hit the damping floor at iteration {iteration}")
            }
            SolverError::SingularJacobian { row } => {
                write!(f, "singular jacobian (no usable pivot for row {row})")
            }
            SolverError::ResidualCheckFailed { norm, tolerance } => {
                write!(f, "assembled solution has residual norm {norm} > tolerance {tolerance}")
            }
            SolverError::DimensionMismatch { what } => {
                write!(f, "candidate solution does not match the network: {what}")
            }
            SolverError::IsRoot { id } => {
                write!(f, "vertex {id} is the root; it has no subtree flow response")
            }
            SolverError::ValveCoverage { id } => {
                write!(f, "valve settings do not match the network leaves (check leaf {id})")
            }
            SolverError::BadConfig { what } => write!(f, "bad solver config: {what}"),
            SolverError::Curve(e) => write!(f, "{e}"),
        }
    }
}

/// Flow response of a subtree: the strictly increasing map from the
/// differential pressure at the subtree head to the flow the subtree
/// absorbs.
///
/// Power-law subtrees collapse exactly: a valve leaf inverts to
/// `q = c * sgn(p) * |p|^(1/alpha)`, an edge in series adds its coefficient
/// to the downstream resistance, and parallel branches add their
/// admittances `c`. Subtrees mixing incompatible exponents keep an explicit
/// branch list and are evaluated by nested bisection instead.
#[derive(Debug, Clone)]
enum Response {
    PowerLaw { coeff: f64, alpha: f64 },
    Branches(Vec<Arm>),
}

#[derive(Debug, Clone)]
struct Arm {
    k: f64,
    alpha: f64,
    child: Response,
}

impl Response {
    fn eval(&self, p: f64, cfg: &SolverConfig, iters: &mut u32) -> Result<f64, SolverError> {
        match self {
            Response::PowerLaw { coeff, alpha } => Ok(power_flow(*coeff, *alpha, p)),
            Response::Branches(arms) => {
                let mut total = 0.0;
                for arm in arms {
                    total += solve_arm(p, arm.k, arm.alpha, &arm.child, cfg, iters)?;
                }
                Ok(total)
            }
        }
    }
}

/// `q = coeff * sgn(p) * |p|^(1/alpha)` — inverse of a power-law loss with
/// resistance `coeff^-alpha`.
#[inline]
fn power_flow(coeff: f64, alpha: f64, p: f64) -> f64 {
    if alpha == 2.0 {
        coeff * sgn(p) * sqrt(abs(p))
    } else {
        coeff * sgn(p) * pow(abs(p), 1.0 / alpha)
    }
}

/// Pressure a collapsed power-law subtree needs to absorb flow `q`.
#[inline]
fn power_flow_inverse(coeff: f64, alpha: f64, q: f64) -> f64 {
    if alpha == 2.0 {
        let s = abs(q) / coeff;
        sgn(q) * s * s
    } else {
        sgn(q) * pow(abs(q) / coeff, alpha)
    }
}

/// Builds the subtree flow response of every vertex, children first.
fn build_responses(net: &NetworkSpec, u: &ValveSettings) -> Vec<Response> {
    let n = net.vertex_count();
    let mut responses: Vec<Option<Response>> = alloc::vec![None; n];
    let alpha_pipe = net.loss_form().alpha();

    for &v in net.topo.iter().rev() {
        if net.is_leaf(v) {
            let curve = match net.kind_at(v) {
                VertexKind::Valve { curve } => curve,
                _ => unreachable!("validated leaves are valves"),
            };
            let opening = u
                .opening(net.id_of(v))
                .expect("settings cover all leaves");
            // q = u / sqrt(k) * sgn(p) * sqrt(|p|)
            responses[v] = Some(Response::PowerLaw {
                coeff: opening / sqrt(curve.k_valve),
                alpha: 2.0,
            });
            continue;
        }
        let mut arms = Vec::with_capacity(net.children[v].len());
        for &(c, e) in &net.children[v] {
            arms.push(Arm {
                k: net.edges[e].k,
                alpha: alpha_pipe,
                child: responses[c].clone().expect("children built first"),
            });
        }
        responses[v] = Some(combine_arms(arms));
    }
    responses
        .into_iter()
        .map(|r| r.expect("response built for every vertex"))
        .collect()
}

/// Collapses arms into a single power law when the forms are compatible.
fn combine_arms(arms: Vec<Arm>) -> Response {
    let mut total_coeff = 0.0;
    for arm in &arms {
        match &arm.child {
            Response::PowerLaw { coeff, alpha } if *alpha == arm.alpha => {
                // series: resistances add; r_child = coeff^-alpha
                let r = arm.k + pow(*coeff, -arm.alpha);
                total_coeff += pow(r, -1.0 / arm.alpha);
            }
            _ => return Response::Branches(arms),
        }
    }
    let alpha = arms[0].alpha;
    Response::PowerLaw {
        coeff: total_coeff,
        alpha,
    }
}

/// Solves the edge equation `q = Q_child(p - f_edge(q))` by bracketed
/// bisection; `h(q) = q - Q_child(p - f_edge(q))` is strictly increasing
/// with slope at least 1.
///
/// Termination requires the bracket to shrink to the flow tolerance, the
/// flow mismatch `|h|` to fall below a hundredth of the residual
/// tolerance, and — when the child response is a collapsed power law —
/// the downstream pressure mismatch to fall below a quarter of it. The
/// pressure criterion is what bounds the valve-characteristic residuals
/// of the final assembly.
fn solve_arm(
    p: f64,
    k: f64,
    alpha: f64,
    child: &Response,
    cfg: &SolverConfig,
    iters: &mut u32,
) -> Result<f64, SolverError> {
    let target = child.eval(p, cfg, iters)?;
    if target == 0.0 {
        return Ok(0.0);
    }

    let h_tol = 0.01 * cfg.residual_tolerance;
    let p_tol = 0.25 * cfg.residual_tolerance;

    let mut local = 0u32;
    let eval_h = |q: f64, iters: &mut u32| -> Result<f64, SolverError> {
        let downstream = p - power_loss(k, alpha, q);
        Ok(q - child.eval(downstream, cfg, iters)?)
    };
    let pressure_ok = |q: f64| -> bool {
        match child {
            Response::PowerLaw {
                coeff,
                alpha: child_alpha,
            } => {
                let downstream = p - power_loss(k, alpha, q);
                abs(downstream - power_flow_inverse(*coeff, *child_alpha, q)) <= p_tol
            }
            Response::Branches(_) => true,
        }
    };

    // Bracket on the side of the root (same sign as the unloaded response).
    let positive = target > 0.0;
    let mut width = 1.0f64;
    let mut inner = 0.0f64;
    let mut doublings = 0u32;
    loop {
        let probe = if positive { width } else { -width };
        let hp = eval_h(probe, iters)?;
        if (positive && hp >= 0.0) || (!positive && hp <= 0.0) {
            break;
        }
        inner = probe;
        doublings += 1;
        if doublings > 200 {
            return Err(SolverError::ScalarSolveDiverged { doublings });
        }
        width *= 2.0;
    }
    let (mut lo, mut hi) = if positive {
        (inner, width)
    } else {
        (-width, inner)
    };

    loop {
        let mid = 0.5 * (lo + hi);
        if !(lo < mid && mid < hi) {
            // bracket exhausted at floating-point resolution
            return Ok(mid.clamp(lo, hi));
        }
        let hm = eval_h(mid, iters)?;
        if hm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        local += 1;
        *iters = iters.saturating_add(1);
        if hi - lo <= cfg.flow_tolerance && abs(hm) <= h_tol && pressure_ok(mid) {
            return Ok(mid);
        }
        if local >= cfg.max_scalar_iterations {
            return Err(SolverError::MaxIterations {
                iterations: cfg.max_scalar_iterations,
            });
        }
    }
}

/// Flow absorbed by the subtree rooted at `v` when the differential
/// pressure at `v` is `p`; strictly increasing in `p`.
///
/// For a leaf this is the valve inverse `g^-1(p; u)`. For a junction it is
/// the sum over children of the unique edge flow solving
/// `q = Q_child(p - f_edge(q))`.
pub fn subtree_flow_response(
    net: &NetworkSpec,
    v: VertexId,
    p: f64,
    u: &ValveSettings,
    cfg: &SolverConfig,
) -> Result<f64, SolverError> {
    cfg.validate()?;
    u.covers(net)?;
    if !p.is_finite() {
        return Err(SolverError::NonFinitePressure { value: p });
    }
    let ix = net
        .index(v)
        .ok_or(SolverError::DimensionMismatch { what: "unknown vertex" })?;
    if ix == 0 {
        return Err(SolverError::IsRoot { id: v });
    }
    let responses = build_responses(net, u);
    let mut iters = 0u32;
    responses[ix].eval(p, cfg, &mut iters)
}

/// Solves the equilibrium for the given pump pressure and valve settings
/// using the monotone tree decomposition.
///
/// Phase 1 finds the pump throughput from the root children's subtree
/// responses at `pump_pressure`; phase 2 walks the tree top-down, solving
/// each edge flow at the known upstream pressure and recording the
/// downstream pressures and consumer flows. The assembled solution is
/// verified against the full equation system before it is returned.
pub fn solve_tree(
    net: &NetworkSpec,
    pump_pressure: f64,
    u: &ValveSettings,
    cfg: &SolverConfig,
) -> Result<EquilibriumSolution, SolverError> {
    cfg.validate()?;
    u.covers(net)?;
    if !pump_pressure.is_finite() {
        return Err(SolverError::NonFinitePressure {
            value: pump_pressure,
        });
    }

    let n = net.vertex_count();
    let responses = build_responses(net, u);
    let alpha = net.loss_form().alpha();
    let mut iters = 0u32;

    // Phase 1: pump throughput from the root children's responses.
    let mut throughput = 0.0;
    for &(c, e) in &net.children[0] {
        throughput += solve_arm(pump_pressure, net.edges[e].k, alpha, &responses[c], cfg, &mut iters)?;
    }
    let root_flow = -throughput;

    // Phase 2: top-down, re-solving each edge at its known tail pressure.
    let mut pressure = alloc::vec![0.0f64; n];
    let mut edge_flow = alloc::vec![0.0f64; net.edge_count()];
    pressure[0] = pump_pressure;
    for &v in &net.topo {
        for &(c, e) in &net.children[v] {
            let q = solve_arm(pressure[v], net.edges[e].k, alpha, &responses[c], cfg, &mut iters)?;
            edge_flow[e] = q;
            pressure[c] = pressure[v] - power_loss(net.edges[e].k, alpha, q);
        }
    }

    let solution = assemble_solution(
        net,
        &pressure,
        &edge_flow,
        root_flow,
        SolveDiagnostics {
            residual_inf_norm: 0.0,
            outer_iterations: iters,
            method: SolverMethod::Tree,
        },
    );
    finish_with_guard(net, solution, u, pump_pressure, cfg)
}

/// Builds the id-keyed solution maps from dense arrays.
pub(crate) fn assemble_solution(
    net: &NetworkSpec,
    pressure: &[f64],
    edge_flow: &[f64],
    root_flow: f64,
    diagnostics: SolveDiagnostics,
) -> EquilibriumSolution {
    let pressures: BTreeMap<VertexId, f64> = pressure
        .iter()
        .enumerate()
        .map(|(ix, &p)| (net.id_of(ix), p))
        .collect();
    let mut edge_flows = BTreeMap::new();
    for (e, &q) in edge_flow.iter().enumerate() {
        let edge = &net.edges[e];
        edge_flows.insert((net.id_of(edge.tail), net.id_of(edge.head)), q);
    }
    let mut consumer_flows = BTreeMap::new();
    for &l in &net.leaf_indices {
        let (_, e) = net.parent[l].expect("leaves have parents");
        consumer_flows.insert(net.id_of(l), edge_flow[e]);
    }
    EquilibriumSolution {
        pressures,
        edge_flows,
        consumer_flows,
        root_flow,
        diagnostics,
    }
}

/// Residual-certifies an assembled solution and stamps the final norm.
pub(crate) fn finish_with_guard(
    net: &NetworkSpec,
    mut solution: EquilibriumSolution,
    u: &ValveSettings,
    pump_pressure: f64,
    cfg: &SolverConfig,
) -> Result<EquilibriumSolution, SolverError> {
    let report = residual(net, &solution, u, pump_pressure)?;
    if !(report.inf_norm <= cfg.residual_tolerance) {
        return Err(SolverError::ResidualCheckFailed {
            norm: report.inf_norm,
            tolerance: cfg.residual_tolerance,
        });
    }
    solution.diagnostics.residual_inf_norm = report.inf_norm;
    Ok(solution)
}

/// Valve slope and pipe slope regularized away from zero so the Newton
/// Jacobian stays non-singular at the flat point of `q|q|`.
pub(crate) const SLOPE_FLOOR: f64 = 1e-8;

pub(crate) fn valve_drop(curve: &crate::curves::ValveCurveParams, q: f64, u: f64) -> f64 {
    power_loss(curve.k_valve / (u * u), 2.0, q)
}

pub(crate) fn valve_slope(curve: &crate::curves::ValveCurveParams, q: f64, u: f64) -> f64 {
    crate::curves::power_loss_slope(curve.k_valve / (u * u), 2.0, q).max(SLOPE_FLOOR)
}

pub(crate) fn pipe_slope(k: f64, alpha: f64, q: f64) -> f64 {
    crate::curves::power_loss_slope(k, alpha, q).max(SLOPE_FLOOR)
}

/// Analytic inverse of a leaf valve, used by tests and the response build.
pub fn leaf_flow_at_pressure(
    net: &NetworkSpec,
    leaf: VertexId,
    p: f64,
    u: &ValveSettings,
) -> Option<f64> {
    let curve = net.valve(leaf)?;
    let opening = u.opening(leaf)?;
    Some(power_loss_inverse(
        curve.k_valve / (opening * opening),
        2.0,
        p,
    ))
}
