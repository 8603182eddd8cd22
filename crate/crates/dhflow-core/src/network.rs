//! Rooted-tree network model.
//!
//! A network is a directed tree rooted at a single pump vertex (id 0 by
//! convention), with junction vertices inside and valve vertices at the
//! leaves. The two physical layers (supply and return) are collapsed into
//! one graph carrying differential pressures per vertex and a single flow
//! per edge; the per-layer pipe coefficients survive inside
//! [`PipeCurveParams`].
//!
//! [`NetworkSpec`] is produced by validation and immutable afterwards, so
//! solver code can rely on the tree invariants without rechecking. It is
//! safe to share across concurrent scenario evaluations.

use alloc::vec::Vec;

use crate::curves::{LossForm, PipeCurveParams, ValveCurveParams};

/// Vertex identifier; unique within a network, root is 0 by convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub u32);

impl core::fmt::Display for VertexId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// What a vertex is: the pump root, an internal junction, or a leaf valve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VertexKind {
    /// Ideal pressure source holding a constant differential pressure.
    Pump { pressure: f64 },
    Junction,
    Valve { curve: ValveCurveParams },
}

/// One directed edge (parent to child) and its pipe pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeSpec {
    pub tail: VertexId,
    pub head: VertexId,
    pub pipe: PipeCurveParams,
}

/// Unvalidated network input, as read from a file or built in code.
#[derive(Debug, Clone, PartialEq)]
pub struct RawNetwork {
    pub vertices: Vec<(VertexId, VertexKind)>,
    pub edges: Vec<EdgeSpec>,
    pub loss_form: LossForm,
}

impl RawNetwork {
    pub fn new(vertices: Vec<(VertexId, VertexKind)>, edges: Vec<EdgeSpec>) -> Self {
        Self {
            vertices,
            edges,
            loss_form: LossForm::Quadratic,
        }
    }

    pub fn with_loss_form(mut self, form: LossForm) -> Self {
        self.loss_form = form;
        self
    }

    pub fn validate(self) -> Result<NetworkSpec, ValidationError> {
        NetworkSpec::validate(self)
    }
}

/// Structural defects reported by validation; each names the offending
/// vertex or edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValidationError {
    DuplicateVertex { id: VertexId },
    UnknownVertex { id: VertexId },
    SelfLoop { id: VertexId },
    DuplicateEdge { tail: VertexId, head: VertexId },
    MissingRoot,
    PumpNotRoot { id: VertexId },
    MultiplePumps { first: VertexId, second: VertexId },
    CycleDetected { id: VertexId },
    MultipleParents { id: VertexId },
    Disconnected { id: VertexId },
    NonLeafValve { id: VertexId },
    LeafNotValve { id: VertexId },
    InvalidPipeCurve { tail: VertexId, head: VertexId },
    InvalidValveCurve { id: VertexId },
    InvalidPumpPressure { id: VertexId },
    InvalidLossForm,
    /// Requested subtree rooted at the root vertex itself.
    IsRoot { id: VertexId },
}

impl core::fmt::Display for ValidationError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        use ValidationError::*;
        match self {
            DuplicateVertex { id } => write!(f, "vertex {id} appears more than once"),
            UnknownVertex { id } => write!(f, "edge references unknown vertex {id}"),
            SelfLoop { id } => write!(f, "self loop at vertex {id}"),
            DuplicateEdge { tail, head } => write!(f, "duplicate edge {tail} -> {head}"),
            MissingRoot => write!(f, "no vertex with id 0; the root pump must have id 0"),
            PumpNotRoot { id } => write!(f, "vertex {id} should be the unique pump at the root"),
            MultiplePumps { first, second } => {
                write!(f, "multiple pumps (vertices {first} and {second})")
            }
            CycleDetected { id } => write!(f, "cycle through vertex {id}"),
            MultipleParents { id } => write!(f, "vertex {id} has more than one parent"),
            Disconnected { id } => write!(f, "vertex {id} is not reachable from the root"),
            NonLeafValve { id } => write!(f, "valve vertex {id} has outgoing edges"),
            LeafNotValve { id } => write!(f, "leaf vertex {id} is not a valve"),
            InvalidPipeCurve { tail, head } => {
                write!(f, "edge {tail} -> {head} has invalid pipe coefficients")
            }
            InvalidValveCurve { id } => write!(f, "valve {id} has an invalid coefficient"),
            InvalidPumpPressure { id } => write!(f, "pump {id} has a non-finite pressure"),
            InvalidLossForm => write!(f, "loss-form exponent must be finite and >= 1"),
            IsRoot { id } => write!(f, "vertex {id} is the root; subtrees exclude the root"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Edge {
    pub tail: usize,
    pub head: usize,
    pub pipe: PipeCurveParams,
    /// Cached combined coefficient `k_supply + k_return`.
    pub k: f64,
}

/// Validated, immutable rooted-tree network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    /// Vertex ids ascending; position is the dense index. Root is index 0.
    ids: Vec<VertexId>,
    kinds: Vec<VertexKind>,
    /// Edges sorted ascending by (tail id, head id).
    pub(crate) edges: Vec<Edge>,
    /// Per vertex: (child index, edge index), ascending by child id.
    pub(crate) children: Vec<Vec<(usize, usize)>>,
    /// Per vertex: (parent index, edge index); `None` for the root.
    pub(crate) parent: Vec<Option<(usize, usize)>>,
    /// Root-first breadth-first ordering of dense indices.
    pub(crate) topo: Vec<usize>,
    leaves: Vec<VertexId>,
    pub(crate) leaf_indices: Vec<usize>,
    root_series_pipe: bool,
    pump_pressure: f64,
    loss_form: LossForm,
}

impl NetworkSpec {
    /// Validates raw vertex/edge lists into an immutable tree network.
    ///
    /// Checks, in order: unique vertex ids, edge endpoints, self-loops and
    /// duplicate edges, the single-pump-at-root convention, single
    /// parenthood, reachability (classifying unreachable vertices as cycles
    /// or disconnection), leaf/valve agreement, and curve parameter sanity.
    pub fn validate(raw: RawNetwork) -> Result<Self, ValidationError> {
        if !raw.loss_form.is_valid() {
            return Err(ValidationError::InvalidLossForm);
        }

        let mut pairs: Vec<(VertexId, VertexKind)> = raw.vertices;
        pairs.sort_by_key(|(id, _)| *id);
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(ValidationError::DuplicateVertex { id: w[0].0 });
            }
        }
        if pairs.is_empty() || pairs[0].0 != VertexId(0) {
            return Err(ValidationError::MissingRoot);
        }

        let ids: Vec<VertexId> = pairs.iter().map(|(id, _)| *id).collect();
        let kinds: Vec<VertexKind> = pairs.iter().map(|(_, k)| *k).collect();
        let n = ids.len();
        let index_of = |id: VertexId| ids.binary_search(&id).ok();

        // Exactly one pump, and it sits at the root.
        let mut pump: Option<usize> = None;
        for (ix, kind) in kinds.iter().enumerate() {
            if let VertexKind::Pump { pressure } = kind {
                if let Some(first) = pump {
                    return Err(ValidationError::MultiplePumps {
                        first: ids[first],
                        second: ids[ix],
                    });
                }
                if !pressure.is_finite() {
                    return Err(ValidationError::InvalidPumpPressure { id: ids[ix] });
                }
                pump = Some(ix);
            }
        }
        match pump {
            Some(0) => {}
            Some(ix) => return Err(ValidationError::PumpNotRoot { id: ids[ix] }),
            None => return Err(ValidationError::PumpNotRoot { id: VertexId(0) }),
        }

        let mut edges: Vec<Edge> = Vec::with_capacity(raw.edges.len());
        for spec in &raw.edges {
            if spec.tail == spec.head {
                return Err(ValidationError::SelfLoop { id: spec.tail });
            }
            let tail = index_of(spec.tail).ok_or(ValidationError::UnknownVertex { id: spec.tail })?;
            let head = index_of(spec.head).ok_or(ValidationError::UnknownVertex { id: spec.head })?;
            if !spec.pipe.is_valid() {
                return Err(ValidationError::InvalidPipeCurve {
                    tail: spec.tail,
                    head: spec.head,
                });
            }
            edges.push(Edge {
                tail,
                head,
                pipe: spec.pipe,
                k: spec.pipe.combined_k(),
            });
        }
        edges.sort_by_key(|e| (ids[e.tail], ids[e.head]));
        for w in edges.windows(2) {
            if w[0].tail == w[1].tail && w[0].head == w[1].head {
                return Err(ValidationError::DuplicateEdge {
                    tail: ids[w[0].tail],
                    head: ids[w[0].head],
                });
            }
        }

        // Single parent per non-root vertex; any in-edge to the root closes
        // a cycle through it.
        let mut parent: Vec<Option<(usize, usize)>> = alloc::vec![None; n];
        let mut children: Vec<Vec<(usize, usize)>> = alloc::vec![Vec::new(); n];
        for (eix, e) in edges.iter().enumerate() {
            if e.head == 0 {
                return Err(ValidationError::CycleDetected { id: VertexId(0) });
            }
            if parent[e.head].is_some() {
                return Err(ValidationError::MultipleParents { id: ids[e.head] });
            }
            parent[e.head] = Some((e.tail, eix));
            children[e.tail].push((e.head, eix));
        }
        // children are already ascending by head id because edges are sorted

        // Reachability from the root. With single parenthood established, an
        // unreachable vertex either has no parent at all (disconnected) or
        // its unique ancestor chain revisits itself (a cycle).
        let mut reached = alloc::vec![false; n];
        let mut topo: Vec<usize> = Vec::with_capacity(n);
        topo.push(0);
        reached[0] = true;
        let mut cursor = 0;
        while cursor < topo.len() {
            let v = topo[cursor];
            cursor += 1;
            for &(c, _) in &children[v] {
                reached[c] = true;
                topo.push(c);
            }
        }
        if topo.len() != n {
            let lost = (0..n).find(|&v| !reached[v]).expect("unreached vertex");
            let mut walk = lost;
            let mut seen = alloc::vec![false; n];
            loop {
                if seen[walk] {
                    return Err(ValidationError::CycleDetected { id: ids[walk] });
                }
                seen[walk] = true;
                match parent[walk] {
                    Some((p, _)) => walk = p,
                    None => return Err(ValidationError::Disconnected { id: ids[lost] }),
                }
            }
        }

        // Leaves are exactly the valves; everything else internal must be a
        // junction (the pump root included, which must feed something).
        let mut leaves = Vec::new();
        let mut leaf_indices = Vec::new();
        for v in 0..n {
            let is_leaf = children[v].is_empty();
            match (&kinds[v], is_leaf) {
                (VertexKind::Valve { curve }, true) => {
                    if !curve.is_valid() {
                        return Err(ValidationError::InvalidValveCurve { id: ids[v] });
                    }
                    leaves.push(ids[v]);
                    leaf_indices.push(v);
                }
                (VertexKind::Valve { .. }, false) => {
                    return Err(ValidationError::NonLeafValve { id: ids[v] })
                }
                (_, true) => return Err(ValidationError::LeafNotValve { id: ids[v] }),
                (_, false) => {}
            }
        }

        let pump_pressure = match kinds[0] {
            VertexKind::Pump { pressure } => pressure,
            _ => unreachable!("root checked to be the pump"),
        };
        let root_series_pipe = children[0].len() == 1;

        Ok(Self {
            ids,
            kinds,
            edges,
            children,
            parent,
            topo,
            leaves,
            leaf_indices,
            root_series_pipe,
            pump_pressure,
            loss_form: raw.loss_form,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Vertex ids, ascending.
    pub fn vertex_ids(&self) -> &[VertexId] {
        &self.ids
    }

    pub fn kind(&self, id: VertexId) -> Option<&VertexKind> {
        self.index(id).map(|ix| &self.kinds[ix])
    }

    /// Edges as (tail, head, pipe), ascending by (tail, head).
    pub fn edge_specs(&self) -> impl Iterator<Item = EdgeSpec> + '_ {
        self.edges.iter().map(move |e| EdgeSpec {
            tail: self.ids[e.tail],
            head: self.ids[e.head],
            pipe: e.pipe,
        })
    }

    /// All valve leaves, ascending by id; never empty for a valid network.
    pub fn leaves(&self) -> &[VertexId] {
        &self.leaves
    }

    /// Pump pressure recorded in the network definition.
    pub fn pump_pressure(&self) -> f64 {
        self.pump_pressure
    }

    /// True iff the root has out-degree one (pump in series with a pipe).
    pub fn root_series_pipe(&self) -> bool {
        self.root_series_pipe
    }

    pub fn loss_form(&self) -> LossForm {
        self.loss_form
    }

    /// The valve parameters of leaf `id`, if it is a valve.
    pub fn valve(&self, id: VertexId) -> Option<ValveCurveParams> {
        match self.kind(id) {
            Some(VertexKind::Valve { curve }) => Some(*curve),
            _ => None,
        }
    }

    /// Read-only view of the subtree hanging below `v` (inclusive).
    ///
    /// The root itself has no proper subtree; asking for it is an error.
    pub fn subtree(&self, v: VertexId) -> Result<SubtreeView<'_>, ValidationError> {
        let ix = self
            .index(v)
            .ok_or(ValidationError::UnknownVertex { id: v })?;
        if ix == 0 {
            return Err(ValidationError::IsRoot { id: v });
        }
        let mut stack = alloc::vec![ix];
        let mut vertices = Vec::new();
        let mut edges = Vec::new();
        while let Some(w) = stack.pop() {
            vertices.push(self.ids[w]);
            for &(c, _) in &self.children[w] {
                edges.push((self.ids[w], self.ids[c]));
                stack.push(c);
            }
        }
        vertices.sort_unstable();
        edges.sort_unstable();
        Ok(SubtreeView {
            net: self,
            root: v,
            vertices,
            edges,
        })
    }

    /// Reconstructs the raw vertex/edge lists (ascending ids), e.g. for
    /// serialization. `validate(to_raw())` reproduces the network.
    pub fn to_raw(&self) -> RawNetwork {
        RawNetwork {
            vertices: self
                .ids
                .iter()
                .zip(self.kinds.iter())
                .map(|(id, k)| (*id, *k))
                .collect(),
            edges: self.edge_specs().collect(),
            loss_form: self.loss_form,
        }
    }

    pub(crate) fn index(&self, id: VertexId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub(crate) fn id_of(&self, ix: usize) -> VertexId {
        self.ids[ix]
    }

    pub(crate) fn kind_at(&self, ix: usize) -> &VertexKind {
        &self.kinds[ix]
    }

    pub(crate) fn is_leaf(&self, ix: usize) -> bool {
        self.children[ix].is_empty()
    }
}

/// Read-only view of a subtree; vertices and edges are sorted ascending.
#[derive(Debug, Clone)]
pub struct SubtreeView<'a> {
    net: &'a NetworkSpec,
    root: VertexId,
    vertices: Vec<VertexId>,
    edges: Vec<(VertexId, VertexId)>,
}

impl<'a> SubtreeView<'a> {
    pub fn root(&self) -> VertexId {
        self.root
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    pub fn contains(&self, id: VertexId) -> bool {
        self.vertices.binary_search(&id).is_ok()
    }

    /// Valve leaves inside this subtree, ascending.
    pub fn leaves(&self) -> Vec<VertexId> {
        self.vertices
            .iter()
            .copied()
            .filter(|id| self.net.leaves().binary_search(id).is_ok())
            .collect()
    }

    pub fn network(&self) -> &'a NetworkSpec {
        self.net
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn pipe() -> PipeCurveParams {
        PipeCurveParams::new(0.5, 0.5)
    }

    fn valve() -> VertexKind {
        VertexKind::Valve {
            curve: ValveCurveParams::new(1.0),
        }
    }

    fn edge(tail: u32, head: u32) -> EdgeSpec {
        EdgeSpec {
            tail: VertexId(tail),
            head: VertexId(head),
            pipe: pipe(),
        }
    }

    #[test]
    fn two_consumer_network_is_valid() {
        let net = presets::two_consumer();
        assert_eq!(net.vertex_count(), 5);
        assert_eq!(net.edge_count(), 4);
        assert!(net.root_series_pipe());
        assert_eq!(net.leaves(), &[VertexId(1), VertexId(2)]);
    }

    #[test]
    fn single_edge_network_is_valid() {
        let raw = RawNetwork::new(
            alloc::vec![
                (VertexId(0), VertexKind::Pump { pressure: 1.0 }),
                (VertexId(1), valve()),
            ],
            alloc::vec![edge(0, 1)],
        );
        let net = raw.validate().unwrap();
        assert!(net.root_series_pipe());
        assert_eq!(net.leaves(), &[VertexId(1)]);
    }

    #[test]
    fn cycle_back_to_root_is_rejected() {
        let raw = RawNetwork::new(
            alloc::vec![
                (VertexId(0), VertexKind::Pump { pressure: 1.0 }),
                (VertexId(1), valve()),
            ],
            alloc::vec![edge(0, 1), edge(1, 0)],
        );
        assert_eq!(
            raw.validate().unwrap_err(),
            ValidationError::CycleDetected { id: VertexId(0) }
        );
    }

    #[test]
    fn detached_cycle_is_classified_as_cycle() {
        let raw = RawNetwork::new(
            alloc::vec![
                (VertexId(0), VertexKind::Pump { pressure: 1.0 }),
                (VertexId(1), valve()),
                (VertexId(2), VertexKind::Junction),
                (VertexId(3), VertexKind::Junction),
            ],
            alloc::vec![edge(0, 1), edge(2, 3), edge(3, 2)],
        );
        assert!(matches!(
            raw.validate().unwrap_err(),
            ValidationError::CycleDetected { .. }
        ));
    }

    #[test]
    fn unreachable_vertex_is_disconnected() {
        let raw = RawNetwork::new(
            alloc::vec![
                (VertexId(0), VertexKind::Pump { pressure: 1.0 }),
                (VertexId(1), valve()),
                (VertexId(2), valve()),
            ],
            alloc::vec![edge(0, 1)],
        );
        assert_eq!(
            raw.validate().unwrap_err(),
            ValidationError::Disconnected { id: VertexId(2) }
        );
    }

    #[test]
    fn structural_defects_are_named() {
        // duplicate edge
        let raw = RawNetwork::new(
            alloc::vec![
                (VertexId(0), VertexKind::Pump { pressure: 1.0 }),
                (VertexId(1), valve()),
            ],
            alloc::vec![edge(0, 1), edge(0, 1)],
        );
        assert_eq!(
            raw.validate().unwrap_err(),
            ValidationError::DuplicateEdge {
                tail: VertexId(0),
                head: VertexId(1)
            }
        );

        // self loop
        let raw = RawNetwork::new(
            alloc::vec![
                (VertexId(0), VertexKind::Pump { pressure: 1.0 }),
                (VertexId(1), valve()),
            ],
            alloc::vec![edge(0, 1), edge(1, 1)],
        );
        assert_eq!(
            raw.validate().unwrap_err(),
            ValidationError::SelfLoop { id: VertexId(1) }
        );

        // pump away from the root
        let raw = RawNetwork::new(
            alloc::vec![
                (VertexId(0), VertexKind::Junction),
                (VertexId(1), VertexKind::Pump { pressure: 1.0 }),
            ],
            alloc::vec![edge(0, 1)],
        );
        assert_eq!(
            raw.validate().unwrap_err(),
            ValidationError::PumpNotRoot { id: VertexId(1) }
        );

        // two pumps
        let raw = RawNetwork::new(
            alloc::vec![
                (VertexId(0), VertexKind::Pump { pressure: 1.0 }),
                (VertexId(1), VertexKind::Pump { pressure: 1.0 }),
            ],
            alloc::vec![edge(0, 1)],
        );
        assert_eq!(
            raw.validate().unwrap_err(),
            ValidationError::MultiplePumps {
                first: VertexId(0),
                second: VertexId(1)
            }
        );

        // junction leaf
        let raw = RawNetwork::new(
            alloc::vec![
                (VertexId(0), VertexKind::Pump { pressure: 1.0 }),
                (VertexId(1), VertexKind::Junction),
            ],
            alloc::vec![edge(0, 1)],
        );
        assert_eq!(
            raw.validate().unwrap_err(),
            ValidationError::LeafNotValve { id: VertexId(1) }
        );

        // valve with children
        let raw = RawNetwork::new(
            alloc::vec![
                (VertexId(0), VertexKind::Pump { pressure: 1.0 }),
                (VertexId(1), valve()),
                (VertexId(2), valve()),
            ],
            alloc::vec![edge(0, 1), edge(1, 2)],
        );
        assert_eq!(
            raw.validate().unwrap_err(),
            ValidationError::NonLeafValve { id: VertexId(1) }
        );

        // pump feeding nothing
        let raw = RawNetwork::new(
            alloc::vec![(VertexId(0), VertexKind::Pump { pressure: 1.0 })],
            alloc::vec![],
        );
        assert_eq!(
            raw.validate().unwrap_err(),
            ValidationError::LeafNotValve { id: VertexId(0) }
        );
    }

    #[test]
    fn subtree_views() {
        let net = presets::two_consumer();
        let sub = net.subtree(VertexId(4)).unwrap();
        assert_eq!(sub.vertices(), &[VertexId(2), VertexId(4)]);
        assert_eq!(sub.edges(), &[(VertexId(4), VertexId(2))]);

        let leaf = net.subtree(VertexId(1)).unwrap();
        assert_eq!(leaf.vertices(), &[VertexId(1)]);
        assert!(leaf.edges().is_empty());

        let mid = net.subtree(VertexId(3)).unwrap();
        assert_eq!(
            mid.vertices(),
            &[VertexId(1), VertexId(2), VertexId(3), VertexId(4)]
        );

        assert_eq!(
            net.subtree(VertexId(0)).unwrap_err(),
            ValidationError::IsRoot { id: VertexId(0) }
        );
    }

    #[test]
    fn raw_round_trip() {
        let net = presets::two_consumer();
        let again = net.to_raw().validate().unwrap();
        assert_eq!(net, again);
    }
}
