//! The execution blueprint: a persistent DAG of tool invocations plus the
//! store of validated node outputs.
//!
//! The blueprint is the single shared reference for a run. Nodes are tool
//! invocations keyed by id (conventionally `subtask.step`), edges capture
//! data dependencies, and the output store holds every validated output so
//! downstream nodes can consume them. All mutation goes through the methods
//! here, which preserve acyclicity and the status-transition rules.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fault::{ResolutionAction, ResolutionChoice};
use crate::protocol::{AgentResponse, StatusCode};

/// Node identifier, conventionally `subtask.step`.
pub type NodeId = String;

/// Default retry budget per node.
pub const DEFAULT_RETRY_BUDGET: u32 = 2;

/// Lifecycle of one node.
///
/// The happy path is Pending → Ready → Running → Succeeded. A resolution
/// may send a Running node back to Ready (retry) or Pending (reroute with
/// a new predecessor), abandonment makes it Failed, and nodes downstream
/// of a failure go Pending/Ready → Skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Pending,
    Ready,
    Running,
    Succeeded,
    Failed,
    Skipped,
}

impl NodeStatus {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            NodeStatus::Succeeded | NodeStatus::Failed | NodeStatus::Skipped
        )
    }
}

impl std::fmt::Display for NodeStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let word = match self {
            NodeStatus::Pending => "pending",
            NodeStatus::Ready => "ready",
            NodeStatus::Running => "running",
            NodeStatus::Succeeded => "succeeded",
            NodeStatus::Failed => "failed",
            NodeStatus::Skipped => "skipped",
        };
        write!(f, "{word}")
    }
}

/// Reference to one output variable of another node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRef {
    pub node: NodeId,
    pub output: String,
}

/// Where a parameter value comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "origin", rename_all = "snake_case")]
pub enum BindingOrigin {
    /// Fixed text supplied when the blueprint was authored or planned.
    Literal { value: String },
    /// Read from the output store at dispatch time.
    Dependency { source: OutputRef },
}

/// One declared parameter of a node: a name plus its value origin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBinding {
    pub name: String,
    #[serde(flatten)]
    pub origin: BindingOrigin,
}

impl ParamBinding {
    pub fn literal(name: impl Into<String>, value: impl Into<String>) -> Self {
        ParamBinding {
            name: name.into(),
            origin: BindingOrigin::Literal {
                value: value.into(),
            },
        }
    }

    pub fn dependency(
        name: impl Into<String>,
        node: impl Into<NodeId>,
        output: impl Into<String>,
    ) -> Self {
        ParamBinding {
            name: name.into(),
            origin: BindingOrigin::Dependency {
                source: OutputRef {
                    node: node.into(),
                    output: output.into(),
                },
            },
        }
    }
}

/// One tool invocation in the blueprint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlueprintNode {
    pub id: NodeId,
    pub subtask: String,
    pub tool: String,
    pub method: String,
    pub endpoint: String,
    pub params: Vec<ParamBinding>,
    pub expected_outputs: Vec<String>,
    #[serde(default = "default_status")]
    pub status: NodeStatus,
    #[serde(default = "default_retries")]
    pub retries_remaining: u32,
    /// Last error code raised for this node, kept for reporting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<StatusCode>,
}

fn default_status() -> NodeStatus {
    NodeStatus::Pending
}

fn default_retries() -> u32 {
    DEFAULT_RETRY_BUDGET
}

impl BlueprintNode {
    pub fn new(id: impl Into<NodeId>, tool: impl Into<String>) -> Self {
        let id = id.into();
        let subtask = id.split('.').next().unwrap_or(&id).to_string();
        BlueprintNode {
            id,
            subtask,
            tool: tool.into(),
            method: "FUNCTION".to_string(),
            endpoint: String::new(),
            params: Vec::new(),
            expected_outputs: Vec::new(),
            status: NodeStatus::Pending,
            retries_remaining: DEFAULT_RETRY_BUDGET,
            last_error: None,
        }
    }

    pub fn with_endpoint(mut self, method: impl Into<String>, endpoint: impl Into<String>) -> Self {
        self.method = method.into();
        self.endpoint = endpoint.into();
        self
    }

    pub fn with_param(mut self, binding: ParamBinding) -> Self {
        self.params.push(binding);
        self
    }

    pub fn with_outputs(mut self, names: &[&str]) -> Self {
        self.expected_outputs = names.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_retries(mut self, retries: u32) -> Self {
        self.retries_remaining = retries;
        self
    }
}

/// Errors raised by blueprint construction and mutation.
#[derive(Debug, Clone, Error)]
pub enum BlueprintError {
    #[error("cycle detected: {}", format_cycle(.cycle))]
    CycleDetected { cycle: Vec<NodeId> },
    #[error("edge ({from} -> {to}) references unknown node `{missing}`")]
    DanglingEdge {
        from: NodeId,
        to: NodeId,
        missing: NodeId,
    },
    #[error("node `{node}` param `{param}`: {reason}")]
    DanglingDependencyBinding {
        node: NodeId,
        param: String,
        reason: String,
    },
    #[error("duplicate node id `{id}`")]
    DuplicateNode { id: NodeId },
    #[error("unknown node `{id}`")]
    UnknownNode { id: NodeId },
    #[error("node `{id}` is {status}, not running")]
    NodeNotRunning { id: NodeId, status: NodeStatus },
    #[error("node `{id}` has no retries remaining")]
    RetryBudgetExhausted { id: NodeId },
    #[error("reroute would create a cycle: {}", format_cycle(.cycle))]
    RerouteCreatesCycle { cycle: Vec<NodeId> },
    #[error("node `{id}` cannot move from {from} to {to}")]
    InvalidTransition {
        id: NodeId,
        from: NodeStatus,
        to: NodeStatus,
    },
}

fn format_cycle(cycle: &[NodeId]) -> String {
    cycle.join(" -> ")
}

/// Failure to resolve a node's inputs, carrying the staged error code.
#[derive(Debug, Clone, Error)]
#[error("{code}: {detail}")]
pub struct ResolveError {
    pub code: StatusCode,
    pub detail: String,
}

/// Summary of what a resolution changed, for trace emission.
#[derive(Debug, Clone, Default)]
pub struct MutationSummary {
    /// Nodes newly marked Skipped by an abandonment.
    pub skipped: Vec<NodeId>,
    /// Id of a predecessor node inserted by a reroute.
    pub inserted: Option<NodeId>,
}

/// The global DAG plus the persistent output store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionBlueprint {
    pub goal: String,
    nodes: BTreeMap<NodeId, BlueprintNode>,
    edges: BTreeSet<(NodeId, NodeId)>,
    /// Validated outputs keyed by node id, then output-variable name.
    output_store: BTreeMap<NodeId, BTreeMap<String, String>>,
}

impl ExecutionBlueprint {
    /// Validate and assemble a blueprint. All nodes start Pending.
    ///
    /// Rejects duplicate ids, edges or dependency bindings that reference
    /// missing nodes, dependency bindings not backed by an edge, and any
    /// cycle (reported with one witness path).
    pub fn build(
        goal: impl Into<String>,
        nodes: Vec<BlueprintNode>,
        edges: Vec<(NodeId, NodeId)>,
    ) -> Result<Self, BlueprintError> {
        let mut node_map = BTreeMap::new();
        for node in nodes {
            if node_map.contains_key(&node.id) {
                return Err(BlueprintError::DuplicateNode { id: node.id });
            }
            node_map.insert(node.id.clone(), node);
        }
        let edge_set: BTreeSet<(NodeId, NodeId)> = edges.into_iter().collect();
        validate_graph(&node_map, &edge_set)?;
        Ok(ExecutionBlueprint {
            goal: goal.into(),
            nodes: node_map,
            edges: edge_set,
            output_store: BTreeMap::new(),
        })
    }

    /// Every structural violation in `nodes`/`edges`, for diagnostics.
    pub fn check(
        nodes: &[BlueprintNode],
        edges: &[(NodeId, NodeId)],
    ) -> Vec<BlueprintError> {
        let mut violations = Vec::new();
        let mut node_map = BTreeMap::new();
        for node in nodes {
            if node_map.insert(node.id.clone(), node.clone()).is_some() {
                violations.push(BlueprintError::DuplicateNode {
                    id: node.id.clone(),
                });
            }
        }
        let edge_set: BTreeSet<(NodeId, NodeId)> = edges.iter().cloned().collect();
        violations.extend(graph_violations(&node_map, &edge_set));
        violations
    }

    pub fn node(&self, id: &str) -> Option<&BlueprintNode> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &BlueprintNode> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = &(NodeId, NodeId)> {
        self.edges.iter()
    }

    pub fn predecessors(&self, id: &str) -> BTreeSet<NodeId> {
        self.edges
            .iter()
            .filter(|(_, to)| to == id)
            .map(|(from, _)| from.clone())
            .collect()
    }

    pub fn successors(&self, id: &str) -> BTreeSet<NodeId> {
        self.edges
            .iter()
            .filter(|(from, _)| from == id)
            .map(|(_, to)| to.clone())
            .collect()
    }

    /// A stored output value, if present.
    pub fn stored_output(&self, node: &str, name: &str) -> Option<&str> {
        self.output_store
            .get(node)
            .and_then(|outputs| outputs.get(name))
            .map(|s| s.as_str())
    }

    /// All store entries, flattened to `(node, name, value)`.
    pub fn store_entries(&self) -> impl Iterator<Item = (&NodeId, &String, &String)> {
        self.output_store.iter().flat_map(|(node, outputs)| {
            outputs.iter().map(move |(name, value)| (node, name, value))
        })
    }

    /// Group nodes by longest predecessor chain; layer k holds exactly the
    /// nodes whose longest chain of predecessors has length k. Within a
    /// layer, ids ascend.
    pub fn topological_layers(&self) -> Vec<Vec<NodeId>> {
        let mut depth: BTreeMap<&NodeId, usize> = BTreeMap::new();
        // Kahn-style sweep; the graph is validated acyclic so this terminates.
        let mut remaining: BTreeSet<&NodeId> = self.nodes.keys().collect();
        while !remaining.is_empty() {
            let mut progressed = false;
            let snapshot: Vec<&NodeId> = remaining.iter().copied().collect();
            for id in snapshot {
                let preds = self.predecessors(id);
                if preds.iter().all(|p| depth.contains_key(p)) {
                    let d = preds
                        .iter()
                        .map(|p| depth[p] + 1)
                        .max()
                        .unwrap_or(0);
                    depth.insert(id, d);
                    remaining.remove(id);
                    progressed = true;
                }
            }
            debug_assert!(progressed, "layer sweep stalled on an acyclic graph");
            if !progressed {
                break;
            }
        }
        let max_depth = depth.values().copied().max().map_or(0, |d| d + 1);
        let mut layers = vec![Vec::new(); max_depth];
        for (id, d) in depth {
            layers[d].push(id.clone());
        }
        for layer in &mut layers {
            layer.sort();
        }
        layers
    }

    /// Resolve a node's declared parameters to concrete values.
    ///
    /// Literal bindings pass through; dependency bindings read the output
    /// store, preferring a value reshaped specifically for this node over
    /// the producer's own output. Missing or empty values resolve to 601,
    /// duplicate parameter names to 603.
    pub fn resolve_inputs(&self, id: &str) -> Result<Vec<(String, String)>, ResolveError> {
        let node = self.nodes.get(id).ok_or_else(|| ResolveError {
            code: StatusCode::MissingRequiredParameters,
            detail: format!("unknown node `{id}`"),
        })?;
        let mut seen = BTreeSet::new();
        let mut resolved = Vec::new();
        for binding in &node.params {
            if !seen.insert(binding.name.as_str()) {
                return Err(ResolveError {
                    code: StatusCode::InvalidParameterUsage,
                    detail: format!("duplicate parameter name `{}`", binding.name),
                });
            }
            let value = match &binding.origin {
                BindingOrigin::Literal { value } => value.clone(),
                BindingOrigin::Dependency { source } => {
                    // A dependent-input entry placed for this node wins over
                    // the producer's own output of the same name.
                    let reshaped = self.stored_output(id, &source.output);
                    let produced = self.stored_output(&source.node, &source.output);
                    match reshaped.or(produced) {
                        Some(v) => v.to_string(),
                        None => {
                            return Err(ResolveError {
                                code: StatusCode::MissingRequiredParameters,
                                detail: format!(
                                    "parameter `{}`: output `{}` of node `{}` is not in the store",
                                    binding.name, source.output, source.node
                                ),
                            })
                        }
                    }
                }
            };
            if value.is_empty() {
                return Err(ResolveError {
                    code: StatusCode::MissingRequiredParameters,
                    detail: format!("parameter `{}` resolved to an empty value", binding.name),
                });
            }
            resolved.push((binding.name.clone(), value));
        }
        Ok(resolved)
    }

    /// Persist a validated 200 response and mark the node Succeeded.
    ///
    /// Output variables land under `(node, name)`; dependent input
    /// variables land under `(target_node, name)` so the targeted node
    /// picks up the reshaped value when it resolves its inputs.
    pub fn store_output(
        &mut self,
        id: &str,
        response: &AgentResponse,
    ) -> Result<(), BlueprintError> {
        if !self.nodes.contains_key(id) {
            return Err(BlueprintError::UnknownNode { id: id.to_string() });
        }
        for dep in &response.dependent_inputs {
            if !self.nodes.contains_key(&dep.target_node) {
                return Err(BlueprintError::UnknownNode {
                    id: dep.target_node.clone(),
                });
            }
        }
        {
            let node = self.nodes.get(id).expect("checked above");
            if node.status != NodeStatus::Running {
                return Err(BlueprintError::NodeNotRunning {
                    id: id.to_string(),
                    status: node.status,
                });
            }
        }
        for output in &response.outputs {
            self.output_store
                .entry(id.to_string())
                .or_default()
                .insert(output.name.clone(), output.content.clone());
        }
        for dep in &response.dependent_inputs {
            self.output_store
                .entry(dep.target_node.clone())
                .or_default()
                .insert(dep.name.clone(), dep.content.clone());
        }
        self.transition(id, NodeStatus::Succeeded)
    }

    /// Transitive successors of a node, excluding the node itself.
    pub fn descendants(&self, id: &str) -> Result<BTreeSet<NodeId>, BlueprintError> {
        if !self.nodes.contains_key(id) {
            return Err(BlueprintError::UnknownNode { id: id.to_string() });
        }
        let mut seen = BTreeSet::new();
        let mut frontier = vec![id.to_string()];
        while let Some(current) = frontier.pop() {
            for next in self.successors(&current) {
                if seen.insert(next.clone()) {
                    frontier.push(next);
                }
            }
        }
        Ok(seen)
    }

    /// Apply a resolution decided for node `id`.
    ///
    /// Retry sends the node back to Ready with one fewer retry; Reroute
    /// replaces its tool binding (optionally inserting a new predecessor,
    /// revalidated like `build`) and re-gates it as Pending; Abandon marks
    /// it Failed and every descendant Skipped. Nothing outside the node,
    /// its descendants, and inserted predecessors is touched.
    pub fn apply_resolution(
        &mut self,
        id: &str,
        action: &ResolutionAction,
    ) -> Result<MutationSummary, BlueprintError> {
        if !self.nodes.contains_key(id) {
            return Err(BlueprintError::UnknownNode { id: id.to_string() });
        }
        match &action.choice {
            ResolutionChoice::Retry => {
                let node = self.nodes.get_mut(id).expect("checked above");
                if node.retries_remaining == 0 {
                    return Err(BlueprintError::RetryBudgetExhausted { id: id.to_string() });
                }
                node.retries_remaining -= 1;
                self.transition(id, NodeStatus::Ready)?;
                Ok(MutationSummary::default())
            }
            ResolutionChoice::Reroute(reroute) => {
                // Validate against a scratch copy first so a rejected reroute
                // leaves the blueprint untouched.
                let mut nodes = self.nodes.clone();
                let mut edges = self.edges.clone();
                let mut inserted_id = None;
                if let Some(inserted) = &reroute.inserted {
                    if nodes.contains_key(&inserted.id) {
                        return Err(BlueprintError::DuplicateNode {
                            id: inserted.id.clone(),
                        });
                    }
                    for binding in &inserted.params {
                        if let BindingOrigin::Dependency { source } = &binding.origin {
                            edges.insert((source.node.clone(), inserted.id.clone()));
                        }
                    }
                    edges.insert((inserted.id.clone(), id.to_string()));
                    inserted_id = Some(inserted.id.clone());
                    nodes.insert(inserted.id.clone(), inserted.clone());
                }
                {
                    let node = nodes.get_mut(id).expect("checked above");
                    node.tool = reroute.tool.clone();
                    node.method = reroute.method.clone();
                    node.endpoint = reroute.endpoint.clone();
                    node.params = reroute.params.clone();
                }
                for binding in &nodes[id].params {
                    if let BindingOrigin::Dependency { source } = &binding.origin {
                        edges.insert((source.node.clone(), id.to_string()));
                    }
                }
                if let Err(BlueprintError::CycleDetected { cycle }) =
                    validate_graph(&nodes, &edges)
                {
                    return Err(BlueprintError::RerouteCreatesCycle { cycle });
                }
                validate_graph(&nodes, &edges)?;
                self.nodes = nodes;
                self.edges = edges;
                self.transition(id, NodeStatus::Pending)?;
                Ok(MutationSummary {
                    skipped: Vec::new(),
                    inserted: inserted_id,
                })
            }
            ResolutionChoice::Abandon => {
                self.transition(id, NodeStatus::Failed)?;
                let mut skipped = Vec::new();
                for descendant in self.descendants(id)? {
                    let status = self.nodes[&descendant].status;
                    if matches!(status, NodeStatus::Pending | NodeStatus::Ready) {
                        self.transition(&descendant, NodeStatus::Skipped)?;
                        skipped.push(descendant);
                    }
                }
                Ok(MutationSummary {
                    skipped,
                    inserted: None,
                })
            }
        }
    }

    /// Move a node to `to`, enforcing the allowed transitions.
    pub fn transition(&mut self, id: &str, to: NodeStatus) -> Result<(), BlueprintError> {
        let node = self
            .nodes
            .get_mut(id)
            .ok_or_else(|| BlueprintError::UnknownNode { id: id.to_string() })?;
        let from = node.status;
        let allowed = matches!(
            (from, to),
            (NodeStatus::Pending, NodeStatus::Ready)
                | (NodeStatus::Ready, NodeStatus::Running)
                | (NodeStatus::Running, NodeStatus::Succeeded)
                | (NodeStatus::Running, NodeStatus::Failed)
                | (NodeStatus::Running, NodeStatus::Ready)
                | (NodeStatus::Running, NodeStatus::Pending)
                | (NodeStatus::Pending, NodeStatus::Skipped)
                | (NodeStatus::Ready, NodeStatus::Skipped)
        );
        if !allowed {
            return Err(BlueprintError::InvalidTransition {
                id: id.to_string(),
                from,
                to,
            });
        }
        node.status = to;
        Ok(())
    }

    /// Record the last error code raised for a node.
    pub fn note_error(&mut self, id: &str, code: StatusCode) {
        if let Some(node) = self.nodes.get_mut(id) {
            node.last_error = Some(code);
        }
    }

    /// Mark every non-terminal node Skipped. Used by the sequential policy
    /// when it abandons the remainder of its list after a failure.
    pub fn skip_all_non_terminal(&mut self) -> Vec<NodeId> {
        let ids: Vec<NodeId> = self
            .nodes
            .values()
            .filter(|n| matches!(n.status, NodeStatus::Pending | NodeStatus::Ready))
            .map(|n| n.id.clone())
            .collect();
        for id in &ids {
            self.transition(id, NodeStatus::Skipped)
                .expect("pending/ready nodes can always be skipped");
        }
        ids
    }

    /// Serialize the full run state (graph, statuses, store) to JSON.
    pub fn to_state_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("blueprint serialization cannot fail")
    }

    /// Load a run state previously exported by [`Self::to_state_json`].
    pub fn from_state_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Count of nodes per terminal status.
    pub fn status_counts(&self) -> (usize, usize, usize) {
        let mut succeeded = 0;
        let mut failed = 0;
        let mut skipped = 0;
        for node in self.nodes.values() {
            match node.status {
                NodeStatus::Succeeded => succeeded += 1,
                NodeStatus::Failed => failed += 1,
                NodeStatus::Skipped => skipped += 1,
                _ => {}
            }
        }
        (succeeded, failed, skipped)
    }
}

fn validate_graph(
    nodes: &BTreeMap<NodeId, BlueprintNode>,
    edges: &BTreeSet<(NodeId, NodeId)>,
) -> Result<(), BlueprintError> {
    match graph_violations(nodes, edges).into_iter().next() {
        Some(violation) => Err(violation),
        None => Ok(()),
    }
}

fn graph_violations(
    nodes: &BTreeMap<NodeId, BlueprintNode>,
    edges: &BTreeSet<(NodeId, NodeId)>,
) -> Vec<BlueprintError> {
    let mut violations = Vec::new();
    for (from, to) in edges {
        if !nodes.contains_key(from) {
            violations.push(BlueprintError::DanglingEdge {
                from: from.clone(),
                to: to.clone(),
                missing: from.clone(),
            });
        }
        if !nodes.contains_key(to) {
            violations.push(BlueprintError::DanglingEdge {
                from: from.clone(),
                to: to.clone(),
                missing: to.clone(),
            });
        }
    }
    for node in nodes.values() {
        for binding in &node.params {
            if let BindingOrigin::Dependency { source } = &binding.origin {
                if !nodes.contains_key(&source.node) {
                    violations.push(BlueprintError::DanglingDependencyBinding {
                        node: node.id.clone(),
                        param: binding.name.clone(),
                        reason: format!("source node `{}` does not exist", source.node),
                    });
                } else if !edges.contains(&(source.node.clone(), node.id.clone())) {
                    violations.push(BlueprintError::DanglingDependencyBinding {
                        node: node.id.clone(),
                        param: binding.name.clone(),
                        reason: format!(
                            "no edge from source node `{}` to `{}`",
                            source.node, node.id
                        ),
                    });
                }
            }
        }
    }
    if violations.is_empty() {
        if let Some(cycle) = find_cycle(nodes, edges) {
            violations.push(BlueprintError::CycleDetected { cycle });
        }
    }
    violations
}

/// Depth-first search for a cycle, returning one witness path that starts
/// and ends at the same node.
fn find_cycle(
    nodes: &BTreeMap<NodeId, BlueprintNode>,
    edges: &BTreeSet<(NodeId, NodeId)>,
) -> Option<Vec<NodeId>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        White,
        Gray,
        Black,
    }
    let mut succs: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
    for (from, to) in edges {
        succs.entry(from).or_default().push(to);
    }
    let mut color: BTreeMap<&NodeId, Color> =
        nodes.keys().map(|id| (id, Color::White)).collect();

    fn visit<'a>(
        current: &'a NodeId,
        succs: &BTreeMap<&'a NodeId, Vec<&'a NodeId>>,
        color: &mut BTreeMap<&'a NodeId, Color>,
        path: &mut Vec<&'a NodeId>,
    ) -> Option<Vec<NodeId>> {
        color.insert(current, Color::Gray);
        path.push(current);
        if let Some(nexts) = succs.get(current) {
            for next in nexts {
                match color.get(next) {
                    Some(Color::Gray) => {
                        let start = path.iter().position(|n| n == next).unwrap_or(0);
                        let mut cycle: Vec<NodeId> =
                            path[start..].iter().map(|n| n.to_string()).collect();
                        cycle.push(next.to_string());
                        return Some(cycle);
                    }
                    Some(Color::White) => {
                        if let Some(cycle) = visit(next, succs, color, path) {
                            return Some(cycle);
                        }
                    }
                    _ => {}
                }
            }
        }
        path.pop();
        color.insert(current, Color::Black);
        None
    }

    let ids: Vec<&NodeId> = nodes.keys().collect();
    for id in ids {
        if color[id] == Color::White {
            let mut path = Vec::new();
            if let Some(cycle) = visit(id, &succs, &mut color, &mut path) {
                return Some(cycle);
            }
        }
    }
    None
}
