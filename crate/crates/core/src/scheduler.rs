//! Drives a blueprint to completion: computes ready nodes, dispatches them
//! to concurrent executors, routes assistance requests per the execution
//! policy, and emits the execution trace.
//!
//! One scheduler loop owns the blueprint; executors receive read-only
//! snapshots and answer with a single terminal message. Ready nodes are
//! dispatched in ascending id order, so a single-worker run with a fixed
//! fault schedule replays to an identical trace.

use std::collections::BTreeMap;
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blueprint::{BlueprintError, ExecutionBlueprint, NodeId, NodeStatus};
use crate::executor::{self, ExecPhase, NodeOutcome, NonEmptyRelevance, RelevanceCheck};
use crate::fault::{FaultHandler, ResolutionAction, ResolutionChoice};
use crate::protocol::{Redaction, StatusCode};
use crate::tools::ToolRegistry;

/// Which runtime behavior to execute under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    /// Full protocol: assistance requests route to the fault handler.
    FullAcp,
    /// Failures abandon the node immediately; no assistance routing.
    NoAssistance,
    /// One sequential pass in id order with no dependency scheduling;
    /// the first failure abandons the remainder of the list.
    SingleAgent,
}

impl std::fmt::Display for ExecutionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExecutionMode::FullAcp => write!(f, "fullacp"),
            ExecutionMode::NoAssistance => write!(f, "noassist"),
            ExecutionMode::SingleAgent => write!(f, "single"),
        }
    }
}

/// Runtime configuration for one run.
#[derive(Debug, Clone)]
pub struct ExecutionPolicy {
    pub mode: ExecutionMode,
    pub worker_count: usize,
    pub per_node_timeout: Duration,
    pub random_seed: u64,
    pub redaction: Redaction,
}

impl ExecutionPolicy {
    pub fn new(mode: ExecutionMode) -> Self {
        ExecutionPolicy {
            mode,
            worker_count: if mode == ExecutionMode::SingleAgent { 1 } else { 2 },
            per_node_timeout: Duration::from_secs(30),
            random_seed: 0,
            redaction: Redaction::default(),
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.worker_count = workers.max(1);
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.per_node_timeout = timeout;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.random_seed = seed;
        self
    }

    /// Single-agent runs are forced to one worker.
    pub fn effective_workers(&self) -> usize {
        if self.mode == ExecutionMode::SingleAgent {
            1
        } else {
            self.worker_count.max(1)
        }
    }
}

/// Resolution kind recorded in the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppliedAction {
    Retry,
    Reroute,
    Abandon,
}

impl From<&ResolutionChoice> for AppliedAction {
    fn from(choice: &ResolutionChoice) -> Self {
        match choice {
            ResolutionChoice::Retry => AppliedAction::Retry,
            ResolutionChoice::Reroute(_) => AppliedAction::Reroute,
            ResolutionChoice::Abandon => AppliedAction::Abandon,
        }
    }
}

/// What happened, trace-wise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEventKind {
    Dispatched,
    ToolCalled,
    Succeeded,
    ErrorRaised { code: StatusCode },
    AssistancePosted,
    ResolutionApplied { action: AppliedAction },
    Skipped,
}

impl TraceEventKind {
    /// One-character marker for the timeline grid.
    fn marker(&self) -> char {
        match self {
            TraceEventKind::Dispatched => 'D',
            TraceEventKind::ToolCalled => 'C',
            TraceEventKind::Succeeded => 'S',
            TraceEventKind::ErrorRaised { .. } => 'E',
            TraceEventKind::AssistancePosted => 'A',
            TraceEventKind::ResolutionApplied { .. } => 'R',
            TraceEventKind::Skipped => 'K',
        }
    }
}

/// One trace entry. `seq` is the persisted time axis: events are ordered
/// as the scheduler observed them. Wall-clock offsets stay in memory only,
/// so trace files replay byte-identically under one worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub node: NodeId,
    #[serde(flatten)]
    pub kind: TraceEventKind,
    pub detail: String,
    #[serde(skip)]
    pub at: Duration,
}

/// Ordered event log for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub mode: ExecutionMode,
    pub seed: u64,
    pub workers: usize,
    pub events: Vec<TraceEvent>,
    #[serde(skip)]
    started: Option<Instant>,
}

impl ExecutionTrace {
    fn new(policy: &ExecutionPolicy) -> Self {
        ExecutionTrace {
            mode: policy.mode,
            seed: policy.random_seed,
            workers: policy.effective_workers(),
            events: Vec::new(),
            started: Some(Instant::now()),
        }
    }

    fn push(&mut self, node: &str, kind: TraceEventKind, detail: String) {
        let at = self
            .started
            .map(|s| s.elapsed())
            .unwrap_or_default();
        self.events.push(TraceEvent {
            seq: self.events.len() as u64,
            node: node.to_string(),
            kind,
            detail,
            at,
        });
    }

    /// Events for one node, in causal order.
    pub fn events_for<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a TraceEvent> {
        self.events.iter().filter(move |e| e.node == node)
    }

    /// Machine-readable JSON export. Deterministic for a given event list.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serialization cannot fail")
    }

    /// Fixed-width timeline: one row per node, one column per event slot.
    ///
    /// Markers: D dispatched, C tool called, S succeeded, E error raised,
    /// A assistance posted, R resolution applied, K skipped.
    pub fn render_timeline(&self) -> String {
        let mut nodes: Vec<&NodeId> = self.events.iter().map(|e| &e.node).collect();
        nodes.sort();
        nodes.dedup();
        let width = nodes.iter().map(|n| n.len()).max().unwrap_or(4).max(4);
        let mut out = String::new();
        out.push_str(&format!(
            "{:width$}  {}\n",
            "node",
            (0..self.events.len())
                .map(|i| (i % 10).to_string())
                .collect::<String>(),
            width = width
        ));
        for node in nodes {
            let mut row = String::new();
            for event in &self.events {
                row.push(if &event.node == node {
                    event.kind.marker()
                } else {
                    '.'
                });
            }
            out.push_str(&format!("{node:width$}  {row}\n", width = width));
        }
        out.push_str(
            "legend: D dispatched, C tool called, S succeeded, E error raised, \
             A assistance posted, R resolution applied, K skipped\n",
        );
        out
    }
}

/// Terminal counts and the completion rate for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub succeeded: usize,
    pub failed: usize,
    pub skipped: usize,
    pub total: usize,
    pub completion_rate: f64,
    pub wall_ms: u64,
}

/// Everything a finished run yields.
#[derive(Debug)]
pub struct RunOutcome {
    pub blueprint: ExecutionBlueprint,
    pub trace: ExecutionTrace,
    pub report: ExecutionReport,
}

#[derive(Debug, Error)]
pub enum SchedulerError {
    #[error("node `{node}` references unregistered tool `{tool}`")]
    UnregisteredTool { node: NodeId, tool: String },
    #[error("no ready nodes but non-terminal nodes remain: {remaining:?}")]
    Deadlock { remaining: Vec<NodeId> },
    #[error(transparent)]
    Blueprint(#[from] BlueprintError),
}

/// Pending nodes whose predecessors have all succeeded, ascending by id.
pub fn ready_set(blueprint: &ExecutionBlueprint) -> Vec<NodeId> {
    blueprint
        .nodes()
        .filter(|node| node.status == NodeStatus::Pending)
        .filter(|node| {
            blueprint
                .predecessors(&node.id)
                .iter()
                .all(|p| blueprint.node(p).map(|n| n.status) == Some(NodeStatus::Succeeded))
        })
        .map(|node| node.id.clone())
        .collect()
}

/// Maximum resolutions applied to one node before forcing abandonment.
const MAX_RESOLUTIONS_PER_NODE: u32 = 3;

/// Executes blueprints under a policy.
pub struct Runner {
    registry: Arc<ToolRegistry>,
    policy: ExecutionPolicy,
    handler: FaultHandler,
    relevance: Arc<dyn RelevanceCheck>,
}

impl Runner {
    pub fn new(registry: Arc<ToolRegistry>, policy: ExecutionPolicy, handler: FaultHandler) -> Self {
        Runner {
            registry,
            policy,
            handler,
            relevance: Arc::new(NonEmptyRelevance),
        }
    }

    pub fn with_relevance(mut self, relevance: Arc<dyn RelevanceCheck>) -> Self {
        self.relevance = relevance;
        self
    }

    /// Run the blueprint to completion.
    pub fn run(&self, mut blueprint: ExecutionBlueprint) -> Result<RunOutcome, SchedulerError> {
        // Pre-flight: every node's tool must be registered.
        for node in blueprint.nodes() {
            if !self.registry.contains(&node.tool) {
                return Err(SchedulerError::UnregisteredTool {
                    node: node.id.clone(),
                    tool: node.tool.clone(),
                });
            }
        }

        let started = Instant::now();
        let mut trace = ExecutionTrace::new(&self.policy);
        match self.policy.mode {
            ExecutionMode::SingleAgent => self.run_sequential(&mut blueprint, &mut trace)?,
            _ => self.run_dag(&mut blueprint, &mut trace)?,
        }

        let (succeeded, failed, skipped) = blueprint.status_counts();
        let total = blueprint.node_count();
        let report = ExecutionReport {
            succeeded,
            failed,
            skipped,
            total,
            completion_rate: if total == 0 {
                1.0
            } else {
                succeeded as f64 / total as f64
            },
            wall_ms: started.elapsed().as_millis() as u64,
        };
        Ok(RunOutcome {
            blueprint,
            trace,
            report,
        })
    }

    /// Sequential baseline: one pass in ascending id order, dependency
    /// scheduling stripped, and everything after the first failure skipped.
    fn run_sequential(
        &self,
        blueprint: &mut ExecutionBlueprint,
        trace: &mut ExecutionTrace,
    ) -> Result<(), SchedulerError> {
        let order: Vec<NodeId> = blueprint.node_ids().cloned().collect();
        for id in order {
            blueprint.transition(&id, NodeStatus::Ready)?;
            blueprint.transition(&id, NodeStatus::Running)?;
            let node = blueprint.node(&id).expect("node exists");
            trace.push(
                &id,
                TraceEventKind::Dispatched,
                format!("tool `{}` endpoint `{}` attempt 1", node.tool, node.endpoint),
            );
            let snapshot = blueprint.clone();
            let outcome = executor::run_node(
                &snapshot,
                &id,
                1,
                &self.registry,
                self.policy.per_node_timeout,
                self.relevance.as_ref(),
            );
            match outcome {
                NodeOutcome::Success { request, response } => {
                    self.push_tool_called(trace, &id, &request);
                    blueprint.store_output(&id, &response)?;
                    push_succeeded(trace, &id, &response);
                }
                NodeOutcome::Assistance {
                    request,
                    phase,
                    agent_request,
                } => {
                    if phase != ExecPhase::Prepare {
                        if let Some(agent_request) = &agent_request {
                            self.push_tool_called(trace, &id, agent_request);
                        }
                    }
                    blueprint.note_error(&id, request.error);
                    trace.push(
                        &id,
                        TraceEventKind::ErrorRaised {
                            code: request.error,
                        },
                        request.description.clone(),
                    );
                    blueprint.transition(&id, NodeStatus::Failed)?;
                    for skipped in blueprint.skip_all_non_terminal() {
                        trace.push(
                            &skipped,
                            TraceEventKind::Skipped,
                            format!("sequence abandoned after `{id}` failed"),
                        );
                    }
                    break;
                }
            }
        }
        Ok(())
    }

    /// Dependency-aware loop shared by the full protocol and the
    /// no-assistance baseline.
    fn run_dag(
        &self,
        blueprint: &mut ExecutionBlueprint,
        trace: &mut ExecutionTrace,
    ) -> Result<(), SchedulerError> {
        let workers = self.policy.effective_workers();
        let (tx, rx) = mpsc::channel::<(NodeId, NodeOutcome)>();
        let mut in_flight = 0usize;
        let mut attempts: BTreeMap<NodeId, u32> = BTreeMap::new();
        let mut resolutions: BTreeMap<NodeId, u32> = BTreeMap::new();

        loop {
            // Dispatch everything allowed by the worker budget, ascending id.
            loop {
                if in_flight >= workers {
                    break;
                }
                let mut candidates: Vec<NodeId> = blueprint
                    .nodes()
                    .filter(|n| n.status == NodeStatus::Ready)
                    .map(|n| n.id.clone())
                    .collect();
                candidates.extend(ready_set(blueprint));
                candidates.sort();
                candidates.dedup();
                let Some(id) = candidates.into_iter().next() else {
                    break;
                };
                if blueprint.node(&id).map(|n| n.status) == Some(NodeStatus::Pending) {
                    blueprint.transition(&id, NodeStatus::Ready)?;
                }
                blueprint.transition(&id, NodeStatus::Running)?;
                let attempt = attempts.entry(id.clone()).or_insert(0);
                *attempt += 1;
                let attempt = *attempt;
                let node = blueprint.node(&id).expect("node exists");
                trace.push(
                    &id,
                    TraceEventKind::Dispatched,
                    format!(
                        "tool `{}` endpoint `{}` attempt {attempt}",
                        node.tool, node.endpoint
                    ),
                );
                let snapshot = Arc::new(blueprint.clone());
                let worker_tx = tx.clone();
                let registry = Arc::clone(&self.registry);
                let relevance = Arc::clone(&self.relevance);
                let timeout = self.policy.per_node_timeout;
                let node_id = id.clone();
                std::thread::spawn(move || {
                    let outcome = executor::run_node(
                        &snapshot,
                        &node_id,
                        attempt,
                        &registry,
                        timeout,
                        relevance.as_ref(),
                    );
                    let _ = worker_tx.send((node_id, outcome));
                });
                in_flight += 1;
            }

            if in_flight == 0 {
                let remaining: Vec<NodeId> = blueprint
                    .nodes()
                    .filter(|n| !n.status.is_terminal())
                    .map(|n| n.id.clone())
                    .collect();
                if remaining.is_empty() {
                    return Ok(());
                }
                // Unreachable for validated DAGs; abandoning a node always
                // skips its descendants, so the frontier cannot stall.
                debug_assert!(false, "scheduler stalled with nodes {remaining:?}");
                return Err(SchedulerError::Deadlock { remaining });
            }

            let (id, outcome) = rx.recv().expect("a worker thread always answers");
            in_flight -= 1;
            match outcome {
                NodeOutcome::Success { request, response } => {
                    self.push_tool_called(trace, &id, &request);
                    blueprint.store_output(&id, &response)?;
                    push_succeeded(trace, &id, &response);
                }
                NodeOutcome::Assistance {
                    request,
                    phase,
                    agent_request,
                } => {
                    if phase != ExecPhase::Prepare {
                        if let Some(agent_request) = &agent_request {
                            self.push_tool_called(trace, &id, agent_request);
                        }
                    }
                    blueprint.note_error(&id, request.error);
                    trace.push(
                        &id,
                        TraceEventKind::ErrorRaised {
                            code: request.error,
                        },
                        request.description.clone(),
                    );
                    match self.policy.mode {
                        ExecutionMode::NoAssistance => {
                            let action =
                                ResolutionAction::abandon("assistance disabled by policy");
                            self.apply(blueprint, trace, &id, action)?;
                        }
                        ExecutionMode::FullAcp => {
                            trace.push(
                                &id,
                                TraceEventKind::AssistancePosted,
                                format!(
                                    "{}; suggested: {}",
                                    request.error, request.suggested_resolution.action
                                ),
                            );
                            let used = resolutions.entry(id.clone()).or_insert(0);
                            *used += 1;
                            let action = if *used > MAX_RESOLUTIONS_PER_NODE {
                                ResolutionAction::abandon(format!(
                                    "resolution cap of {MAX_RESOLUTIONS_PER_NODE} reached"
                                ))
                            } else {
                                self.handler.handle(&request, blueprint)
                            };
                            self.apply(blueprint, trace, &id, action)?;
                        }
                        ExecutionMode::SingleAgent => unreachable!("sequential loop"),
                    }
                }
            }
        }
    }

    /// Apply one resolution, downgrading rejected reroutes to abandonment.
    fn apply(
        &self,
        blueprint: &mut ExecutionBlueprint,
        trace: &mut ExecutionTrace,
        id: &str,
        action: ResolutionAction,
    ) -> Result<(), SchedulerError> {
        let applied = AppliedAction::from(&action.choice);
        match blueprint.apply_resolution(id, &action) {
            Ok(summary) => {
                if self.policy.mode == ExecutionMode::FullAcp {
                    let mut detail = action.rationale.clone();
                    if let Some(inserted) = &summary.inserted {
                        detail.push_str(&format!("; inserted node `{inserted}`"));
                    }
                    trace.push(
                        id,
                        TraceEventKind::ResolutionApplied { action: applied },
                        detail,
                    );
                }
                for skipped in summary.skipped {
                    trace.push(
                        &skipped,
                        TraceEventKind::Skipped,
                        format!("descendant of failed node `{id}`"),
                    );
                }
                Ok(())
            }
            // Structurally invalid resolutions (cycles, exhausted budgets,
            // malformed insertions) fall back to abandonment; only genuine
            // runtime invariant breaks propagate.
            Err(
                err @ (BlueprintError::RerouteCreatesCycle { .. }
                | BlueprintError::RetryBudgetExhausted { .. }
                | BlueprintError::DuplicateNode { .. }
                | BlueprintError::CycleDetected { .. }
                | BlueprintError::DanglingEdge { .. }
                | BlueprintError::DanglingDependencyBinding { .. }),
            ) => {
                log::warn!("resolution for `{id}` rejected ({err}); abandoning");
                let fallback =
                    ResolutionAction::abandon(format!("downgraded: {err}"));
                let summary = blueprint.apply_resolution(id, &fallback)?;
                if self.policy.mode == ExecutionMode::FullAcp {
                    trace.push(
                        id,
                        TraceEventKind::ResolutionApplied {
                            action: AppliedAction::Abandon,
                        },
                        fallback.rationale.clone(),
                    );
                }
                for skipped in summary.skipped {
                    trace.push(
                        &skipped,
                        TraceEventKind::Skipped,
                        format!("descendant of failed node `{id}`"),
                    );
                }
                Ok(())
            }
            Err(err) => Err(err.into()),
        }
    }

    fn push_tool_called(&self, trace: &mut ExecutionTrace, id: &str, request: &crate::protocol::AgentRequest) {
        let body = self.policy.redaction.render_pairs(
            request
                .body
                .iter()
                .map(|p| (p.name.as_str(), p.value.as_str())),
        );
        trace.push(
            id,
            TraceEventKind::ToolCalled,
            format!("{} {} [{}]", request.method, request.endpoint, body),
        );
    }
}

fn push_succeeded(trace: &mut ExecutionTrace, id: &str, response: &crate::protocol::AgentResponse) {
    trace.push(
        id,
        TraceEventKind::Succeeded,
        format!(
            "stored: {}",
            response
                .outputs
                .iter()
                .map(|o| o.name.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blueprint::{BlueprintNode, ParamBinding};
    use crate::fault::ReroutePolicy;
    use crate::tools::inject::{inject, FaultBehavior, FaultEntry, FaultPlan};
    use crate::tools::mock::StaticTool;

    fn static_registry(plan: FaultPlan) -> Arc<ToolRegistry> {
        let mut registry = ToolRegistry::new();
        registry
            .register(inject(plan, Arc::new(StaticTool::new("static", "payload"))))
            .unwrap();
        Arc::new(registry)
    }

    fn diamond() -> ExecutionBlueprint {
        let node = |id: &str| {
            BlueprintNode::new(id, "static")
                .with_endpoint("FUNCTION", "call")
                .with_outputs(&["out"])
        };
        ExecutionBlueprint::build(
            "diamond",
            vec![node("a"), node("b"), node("c"), node("d")],
            vec![
                ("a".to_string(), "b".to_string()),
                ("a".to_string(), "c".to_string()),
                ("b".to_string(), "d".to_string()),
                ("c".to_string(), "d".to_string()),
            ],
        )
        .unwrap()
    }

    fn runner(mode: ExecutionMode, plan: FaultPlan) -> Runner {
        let registry = static_registry(plan);
        let handler = FaultHandler::new(ReroutePolicy::default(), Arc::clone(&registry));
        Runner::new(
            registry,
            ExecutionPolicy::new(mode)
                .with_workers(1)
                .with_timeout(Duration::from_millis(500)),
            handler,
        )
    }

    fn throw_at(node: &str, attempt: u32) -> FaultPlan {
        FaultPlan {
            entries: vec![FaultEntry {
                target: node.to_string(),
                attempt,
                behavior: FaultBehavior::Throw,
            }],
            seed: 0,
        }
    }

    #[test]
    fn ready_set_walks_the_diamond() {
        let mut bp = diamond();
        assert_eq!(ready_set(&bp), vec!["a".to_string()]);
        bp.transition("a", NodeStatus::Ready).unwrap();
        bp.transition("a", NodeStatus::Running).unwrap();
        assert!(ready_set(&bp).is_empty());
        let response = crate::protocol::AgentResponse::success(
            vec![crate::protocol::OutputVariable {
                name: "out".to_string(),
                content: "v".to_string(),
            }],
            vec![],
        )
        .unwrap();
        bp.store_output("a", &response).unwrap();
        assert_eq!(ready_set(&bp), vec!["b".to_string(), "c".to_string()]);
    }

    #[test]
    fn clean_diamond_completes_with_rate_one() {
        let outcome = runner(ExecutionMode::FullAcp, FaultPlan::empty())
            .run(diamond())
            .unwrap();
        assert_eq!(outcome.report.completion_rate, 1.0);
        assert_eq!(outcome.report.succeeded, 4);
        // d dispatches only after both b and c succeeded.
        let seq_of = |node: &str, kind_marker: char| {
            outcome
                .trace
                .events
                .iter()
                .find(|e| e.node == node && e.kind.marker() == kind_marker)
                .map(|e| e.seq)
                .unwrap()
        };
        assert!(seq_of("d", 'D') > seq_of("b", 'S'));
        assert!(seq_of("d", 'D') > seq_of("c", 'S'));
    }

    #[test]
    fn no_assistance_abandons_and_localizes() {
        let outcome = runner(ExecutionMode::NoAssistance, throw_at("b", 1))
            .run(diamond())
            .unwrap();
        assert_eq!(outcome.report.succeeded, 2); // a and c
        assert_eq!(outcome.report.failed, 1); // b
        assert_eq!(outcome.report.skipped, 1); // d
        assert_eq!(outcome.report.completion_rate, 0.5);
        assert_eq!(
            outcome.blueprint.node("b").unwrap().status,
            NodeStatus::Failed
        );
        assert_eq!(
            outcome.blueprint.node("d").unwrap().status,
            NodeStatus::Skipped
        );
        // No assistance events in this mode.
        assert!(outcome
            .trace
            .events
            .iter()
            .all(|e| !matches!(e.kind, TraceEventKind::AssistancePosted)));
    }

    #[test]
    fn full_acp_retries_transient_fault_to_completion() {
        let outcome = runner(ExecutionMode::FullAcp, throw_at("b", 1))
            .run(diamond())
            .unwrap();
        assert_eq!(outcome.report.completion_rate, 1.0);
        let kinds: Vec<char> = outcome
            .trace
            .events_for("b")
            .map(|e| e.kind.marker())
            .collect();
        assert_eq!(kinds, vec!['D', 'C', 'E', 'A', 'R', 'D', 'C', 'S']);
    }

    #[test]
    fn exactly_once_resolution_in_full_acp() {
        let plan = FaultPlan {
            entries: vec![
                FaultEntry {
                    target: "b".to_string(),
                    attempt: 1,
                    behavior: FaultBehavior::Throw,
                },
                FaultEntry {
                    target: "c".to_string(),
                    attempt: 1,
                    behavior: FaultBehavior::Throw,
                },
            ],
            seed: 0,
        };
        let outcome = runner(ExecutionMode::FullAcp, plan).run(diamond()).unwrap();
        let posted = outcome
            .trace
            .events
            .iter()
            .filter(|e| matches!(e.kind, TraceEventKind::AssistancePosted))
            .count();
        let applied = outcome
            .trace
            .events
            .iter()
            .filter(|e| matches!(e.kind, TraceEventKind::ResolutionApplied { .. }))
            .count();
        assert_eq!(posted, applied);
        assert_eq!(posted, 2);
    }

    #[test]
    fn resolution_cap_forces_abandon() {
        // Permanent fault: throw on every attempt. Ladder retries twice
        // (budget 2), then has nothing else, so the third resolution is an
        // abandon from the handler itself; the cap is a backstop above it.
        let plan = FaultPlan {
            entries: (1..=10)
                .map(|attempt| FaultEntry {
                    target: "b".to_string(),
                    attempt,
                    behavior: FaultBehavior::Throw,
                })
                .collect(),
            seed: 0,
        };
        let outcome = runner(ExecutionMode::FullAcp, plan).run(diamond()).unwrap();
        let actions: Vec<AppliedAction> = outcome
            .trace
            .events
            .iter()
            .filter_map(|e| match &e.kind {
                TraceEventKind::ResolutionApplied { action } => Some(*action),
                _ => None,
            })
            .collect();
        assert_eq!(
            actions,
            vec![
                AppliedAction::Retry,
                AppliedAction::Retry,
                AppliedAction::Abandon
            ]
        );
        assert_eq!(outcome.report.failed, 1);
        assert_eq!(outcome.report.skipped, 1);
    }

    #[test]
    fn single_agent_abandons_remainder_after_first_failure() {
        let outcome = runner(ExecutionMode::SingleAgent, throw_at("b", 1))
            .run(diamond())
            .unwrap();
        // Id order a, b, c, d: a succeeds, b fails, c and d never run.
        assert_eq!(outcome.report.succeeded, 1);
        assert_eq!(outcome.report.failed, 1);
        assert_eq!(outcome.report.skipped, 2);
        assert_eq!(
            outcome.blueprint.node("c").unwrap().status,
            NodeStatus::Skipped
        );
    }

    #[test]
    fn single_node_trace_is_dispatch_call_succeed() {
        let node = BlueprintNode::new("only", "static")
            .with_endpoint("FUNCTION", "call")
            .with_outputs(&["out"]);
        let bp = ExecutionBlueprint::build("one", vec![node], vec![]).unwrap();
        let outcome = runner(ExecutionMode::FullAcp, FaultPlan::empty())
            .run(bp)
            .unwrap();
        let kinds: Vec<char> = outcome
            .trace
            .events
            .iter()
            .map(|e| e.kind.marker())
            .collect();
        assert_eq!(kinds, vec!['D', 'C', 'S']);
    }

    #[test]
    fn single_worker_replay_is_byte_identical() {
        let run = || {
            let outcome = runner(ExecutionMode::FullAcp, throw_at("b", 1))
                .run(diamond())
                .unwrap();
            (
                outcome.trace.to_json_string(),
                outcome.trace.render_timeline(),
            )
        };
        let (json1, timeline1) = run();
        let (json2, timeline2) = run();
        assert_eq!(json1, json2);
        assert_eq!(timeline1, timeline2);
    }

    #[test]
    fn two_workers_dispatch_independent_nodes_before_either_succeeds() {
        let mut registry = ToolRegistry::new();
        registry
            .register(Arc::new(
                StaticTool::new("slow", "payload").with_delay(Duration::from_millis(60)),
            ))
            .unwrap();
        let registry = Arc::new(registry);
        let node = |id: &str| {
            BlueprintNode::new(id, "slow")
                .with_endpoint("FUNCTION", "call")
                .with_outputs(&["out"])
        };
        let bp = ExecutionBlueprint::build("par", vec![node("x"), node("y")], vec![]).unwrap();
        let handler = FaultHandler::new(ReroutePolicy::default(), Arc::clone(&registry));
        let outcome = Runner::new(
            registry,
            ExecutionPolicy::new(ExecutionMode::FullAcp)
                .with_workers(2)
                .with_timeout(Duration::from_secs(2)),
            handler,
        )
        .run(bp)
        .unwrap();
        let dispatched: Vec<u64> = outcome
            .trace
            .events
            .iter()
            .filter(|e| matches!(e.kind, TraceEventKind::Dispatched))
            .map(|e| e.seq)
            .collect();
        let first_success = outcome
            .trace
            .events
            .iter()
            .find(|e| matches!(e.kind, TraceEventKind::Succeeded))
            .map(|e| e.seq)
            .unwrap();
        assert_eq!(dispatched.len(), 2);
        assert!(dispatched.iter().all(|&s| s < first_success));
    }

    #[test]
    fn unregistered_tool_fails_preflight() {
        let mut bp_nodes = vec![BlueprintNode::new("a", "ghost_tool")
            .with_endpoint("FUNCTION", "call")
            .with_outputs(&["out"])];
        bp_nodes.push(
            BlueprintNode::new("b", "static")
                .with_endpoint("FUNCTION", "call")
                .with_outputs(&["out"]),
        );
        let bp = ExecutionBlueprint::build("pre", bp_nodes, vec![]).unwrap();
        let err = runner(ExecutionMode::FullAcp, FaultPlan::empty())
            .run(bp)
            .unwrap_err();
        match err {
            SchedulerError::UnregisteredTool { tool, .. } => assert_eq!(tool, "ghost_tool"),
            other => panic!("expected UnregisteredTool, got {other}"),
        }
    }

    #[test]
    fn reroute_cycle_downgrades_to_abandon() {
        use crate::fault::{AssistanceHook, RerouteAction};
        // Hook that reroutes `b` to depend on its own descendant `c`,
        // which would close a cycle b -> c -> b.
        struct BadReroute;
        impl AssistanceHook for BadReroute {
            fn decide(
                &self,
                request: &crate::protocol::AssistanceRequest,
                _bp: &ExecutionBlueprint,
            ) -> Option<ResolutionAction> {
                (request.error_node == "b").then(|| {
                    ResolutionAction::reroute(
                        RerouteAction {
                            tool: "static".to_string(),
                            method: "FUNCTION".to_string(),
                            endpoint: "call".to_string(),
                            params: vec![ParamBinding::dependency("query", "c", "out")],
                            inserted: None,
                        },
                        "bad idea",
                    )
                })
            }
        }
        let node = |id: &str| {
            BlueprintNode::new(id, "static")
                .with_endpoint("FUNCTION", "call")
                .with_outputs(&["out"])
        };
        let bp = ExecutionBlueprint::build(
            "chain",
            vec![node("a"), node("b"), node("c")],
            vec![
                ("a".to_string(), "b".to_string()),
                ("b".to_string(), "c".to_string()),
            ],
        )
        .unwrap();
        let registry = static_registry(throw_at("b", 1));
        let handler = FaultHandler::new(ReroutePolicy::default(), Arc::clone(&registry))
            .with_hook(Arc::new(BadReroute));
        let outcome = Runner::new(
            registry,
            ExecutionPolicy::new(ExecutionMode::FullAcp)
                .with_workers(1)
                .with_timeout(Duration::from_millis(500)),
            handler,
        )
        .run(bp)
        .unwrap();
        assert_eq!(
            outcome.blueprint.node("b").unwrap().status,
            NodeStatus::Failed
        );
        assert_eq!(
            outcome.blueprint.node("c").unwrap().status,
            NodeStatus::Skipped
        );
        let last_resolution = outcome
            .trace
            .events
            .iter()
            .rev()
            .find_map(|e| match &e.kind {
                TraceEventKind::ResolutionApplied { action } => Some(*action),
                _ => None,
            })
            .unwrap();
        assert_eq!(last_resolution, AppliedAction::Abandon);
    }

    #[test]
    fn secrets_are_redacted_in_trace_detail() {
        let mut registry = ToolRegistry::new();
        let schema = crate::tools::ToolSchema {
            name: "api".to_string(),
            description: String::new(),
            endpoints: vec![crate::tools::EndpointSchema {
                id: "call".to_string(),
                required: vec!["query".to_string(), "api_key".to_string()],
                optional: vec![],
                outputs: vec![],
            }],
            single_flight: false,
        };
        registry
            .register(Arc::new(crate::tools::mock::KvTool::with_schema(
                schema,
                std::collections::BTreeMap::from([(
                    "q|s3cret-value".to_string(),
                    "ok".to_string(),
                )]),
            )))
            .unwrap();
        let registry = Arc::new(registry);
        let node = BlueprintNode::new("a", "api")
            .with_endpoint("FUNCTION", "call")
            .with_param(ParamBinding::literal("query", "q"))
            .with_param(ParamBinding::literal("api_key", "s3cret-value"))
            .with_outputs(&["out"]);
        let bp = ExecutionBlueprint::build("r", vec![node], vec![]).unwrap();
        let handler = FaultHandler::new(ReroutePolicy::default(), Arc::clone(&registry));
        let outcome = Runner::new(
            registry,
            ExecutionPolicy::new(ExecutionMode::FullAcp).with_workers(1),
            handler,
        )
        .run(bp)
        .unwrap();
        let trace_text = outcome.trace.to_json_string();
        assert!(!trace_text.contains("s3cret-value"));
        assert!(trace_text.contains("<redacted>"));
        assert_eq!(outcome.report.completion_rate, 1.0);
    }
}
