//! Acceptance suite: one test per criterion, each printing a pass line and
//! enforcing its time budget. Tests serialize on a shared gate so wall-time
//! budgets and delay-based ratios are measured without cross-test load.
//!
//! Run with `cargo test -p acp-core --test acceptance -- --nocapture`.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use acp_core::blueprint::{BlueprintNode, ExecutionBlueprint, NodeId, NodeStatus, ParamBinding};
use acp_core::executor::{self, ExecPhase, NodeOutcome};
use acp_core::fault::{FaultHandler, ReroutePolicy};
use acp_core::protocol::{
    self, AgentRequest, AgentResponse, AssistanceRequest, BodyParam, CompletedTool,
    DependentInputVariable, Message, OutputVariable, Stage, StatusCode, StatusUpdate,
    SuggestedAction, SuggestedResolution,
};
use acp_core::scheduler::{
    ExecutionMode, ExecutionPolicy, Runner, TraceEventKind,
};
use acp_core::tools::inject::{inject, FaultBehavior, FaultEntry, FaultPlan, MarkerRelevance};
use acp_core::tools::mock::{KvTool, StaticTool};
use acp_core::tools::{EndpointSchema, ToolRegistry, ToolSchema};

fn gate() -> std::sync::MutexGuard<'static, ()> {
    static GATE: OnceLock<Mutex<()>> = OnceLock::new();
    GATE.get_or_init(|| Mutex::new(()))
        .lock()
        .unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn finish(name: &str, budget: Duration, started: Instant, detail: &str) {
    let elapsed = started.elapsed();
    println!(
        "PASS {name}: {detail} ({elapsed:?} of {budget:?} budget)"
    );
    assert!(
        elapsed <= budget,
        "{name} exceeded its {budget:?} budget: {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// Independent oracles
// ---------------------------------------------------------------------------

mod oracle {
    /// Cycle detection by per-node depth-first reachability back to itself.
    pub fn has_cycle(node_count: usize, edges: &[(usize, usize)]) -> bool {
        let mut succs = vec![Vec::new(); node_count];
        for &(from, to) in edges {
            succs[from].push(to);
        }
        for start in 0..node_count {
            let mut stack = succs[start].clone();
            let mut seen = vec![false; node_count];
            while let Some(current) = stack.pop() {
                if current == start {
                    return true;
                }
                if !seen[current] {
                    seen[current] = true;
                    stack.extend(succs[current].iter().copied());
                }
            }
        }
        false
    }

    /// Transitive closure by repeated boolean matrix squaring.
    pub fn closure(node_count: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
        let mut reach = vec![vec![false; node_count]; node_count];
        for &(from, to) in edges {
            reach[from][to] = true;
        }
        loop {
            let mut next = reach.clone();
            for i in 0..node_count {
                for (k, row_k) in reach.iter().enumerate() {
                    if reach[i][k] {
                        for (j, cell) in next[i].iter_mut().enumerate() {
                            *cell = *cell || row_k[j];
                        }
                    }
                }
            }
            if next == reach {
                return reach;
            }
            reach = next;
        }
    }
}

// ---------------------------------------------------------------------------
// Generators and run helpers
// ---------------------------------------------------------------------------

fn node_name(index: usize) -> NodeId {
    format!("n{index:02}")
}

fn static_node(id: &str) -> BlueprintNode {
    BlueprintNode::new(id, "static")
        .with_endpoint("FUNCTION", "call")
        .with_outputs(&["out"])
}

/// Random DAG whose edges always point from lower to higher index, so id
/// order is a valid topological order.
fn random_dag(rng: &mut ChaCha8Rng, max_nodes: usize) -> (Vec<BlueprintNode>, Vec<(NodeId, NodeId)>) {
    let n = rng.gen_range(2..=max_nodes);
    let mut nodes: Vec<BlueprintNode> = (0..n).map(|i| static_node(&node_name(i))).collect();
    let mut edges = Vec::new();
    for j in 1..n {
        for i in 0..j {
            if rng.gen_bool(0.3) {
                edges.push((node_name(i), node_name(j)));
            }
        }
    }
    // Bind some consumers to a predecessor's output so the store path runs.
    for node in nodes.iter_mut() {
        if let Some((from, _)) = edges.iter().find(|(_, to)| to == &node.id) {
            if rng.gen_bool(0.5) {
                node.params
                    .push(ParamBinding::dependency("query", from.clone(), "out"));
            }
        }
    }
    (nodes, edges)
}

fn static_registry(plan: FaultPlan, delay: Duration) -> Arc<ToolRegistry> {
    let mut registry = ToolRegistry::new();
    let tool = StaticTool::new("static", "payload").with_delay(delay);
    let adapter: Arc<dyn acp_core::tools::ToolAdapter> = Arc::new(tool);
    let adapter = if plan.is_empty() {
        adapter
    } else {
        inject(plan, adapter)
    };
    registry.register(adapter).unwrap();
    Arc::new(registry)
}

fn run_blueprint(
    blueprint: ExecutionBlueprint,
    mode: ExecutionMode,
    workers: usize,
    seed: u64,
    plan: FaultPlan,
) -> acp_core::scheduler::RunOutcome {
    let registry = static_registry(plan, Duration::ZERO);
    let handler = FaultHandler::new(ReroutePolicy::default(), Arc::clone(&registry));
    Runner::new(
        registry,
        ExecutionPolicy::new(mode)
            .with_workers(workers)
            .with_seed(seed)
            .with_timeout(Duration::from_secs(2)),
        handler,
    )
    .run(blueprint)
    .unwrap()
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

#[test]
fn dag_validation_matches_bruteforce_cycle_oracle() {
    let _gate = gate();
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut accepted = 0usize;
    for case in 0..500 {
        let n = rng.gen_range(1..=10);
        let mut edges_ix: Vec<(usize, usize)> = Vec::new();
        for from in 0..n {
            for to in 0..n {
                // Self-loops included: they are one-node cycles.
                if rng.gen_bool(0.12) {
                    edges_ix.push((from, to));
                }
            }
        }
        let nodes: Vec<BlueprintNode> = (0..n).map(|i| static_node(&node_name(i))).collect();
        let edges: Vec<(NodeId, NodeId)> = edges_ix
            .iter()
            .map(|&(f, t)| (node_name(f), node_name(t)))
            .collect();
        let built = ExecutionBlueprint::build("case", nodes, edges);
        let oracle_cyclic = oracle::has_cycle(n, &edges_ix);
        assert_eq!(
            built.is_ok(),
            !oracle_cyclic,
            "case {case}: build and oracle disagree on edges {edges_ix:?}"
        );
        if built.is_ok() {
            accepted += 1;
        }
    }
    finish(
        "dag-validation-oracle",
        Duration::from_secs(5),
        started,
        &format!("500 random graphs, {accepted} acyclic, accept/reject matches oracle"),
    );
}

#[test]
fn topological_safety_holds_across_seeded_runs() {
    let _gate = gate();
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let mut dispatch_events = 0usize;
    for run in 0..200 {
        let (nodes, edges) = random_dag(&mut rng, 12);
        let blueprint = ExecutionBlueprint::build("run", nodes, edges).unwrap();
        let workers = rng.gen_range(1..=4);
        let outcome = run_blueprint(
            blueprint,
            ExecutionMode::FullAcp,
            workers,
            run,
            FaultPlan::empty(),
        );
        assert_eq!(outcome.report.completion_rate, 1.0, "run {run}");
        let succeeded_at = |node: &str| {
            outcome
                .trace
                .events
                .iter()
                .find(|e| e.node == node && matches!(e.kind, TraceEventKind::Succeeded))
                .map(|e| e.seq)
                .unwrap()
        };
        for event in &outcome.trace.events {
            if matches!(event.kind, TraceEventKind::Dispatched) {
                dispatch_events += 1;
                for pred in outcome.blueprint.predecessors(&event.node) {
                    assert!(
                        succeeded_at(&pred) < event.seq,
                        "run {run}: node {} dispatched at seq {} before predecessor {pred} succeeded",
                        event.node,
                        event.seq
                    );
                }
            }
        }
    }
    finish(
        "topological-safety",
        Duration::from_secs(30),
        started,
        &format!("200 seeded runs, {dispatch_events} dispatches, zero violations"),
    );
}

#[test]
fn failure_localization_matches_reachability_oracle() {
    let _gate = gate();
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3003);
    let mut checked = 0usize;
    for run in 0..150 {
        let (nodes, edges) = random_dag(&mut rng, 10);
        let n = nodes.len();
        let edges_ix: Vec<(usize, usize)> = edges
            .iter()
            .map(|(f, t)| {
                (
                    f[1..].parse::<usize>().unwrap(),
                    t[1..].parse::<usize>().unwrap(),
                )
            })
            .collect();
        let fault_ix = rng.gen_range(0..n);
        let fault_node = node_name(fault_ix);
        let blueprint = ExecutionBlueprint::build("run", nodes, edges).unwrap();
        let plan = FaultPlan {
            entries: vec![FaultEntry {
                target: fault_node.clone(),
                attempt: 1,
                behavior: FaultBehavior::Throw,
            }],
            seed: run,
        };
        let outcome = run_blueprint(blueprint, ExecutionMode::NoAssistance, 2, run, plan);

        let closure = oracle::closure(n, &edges_ix);
        let expected_skipped: BTreeSet<NodeId> = (0..n)
            .filter(|&j| closure[fault_ix][j] && j != fault_ix)
            .map(node_name)
            .collect();
        let actual_skipped: BTreeSet<NodeId> = outcome
            .blueprint
            .nodes()
            .filter(|node| node.status == NodeStatus::Skipped)
            .map(|node| node.id.clone())
            .collect();
        assert_eq!(
            actual_skipped, expected_skipped,
            "run {run}: skipped set diverges from reachability oracle for fault at {fault_node}"
        );
        // descendants() itself agrees with the edge-squaring closure.
        assert_eq!(
            outcome.blueprint.descendants(&fault_node).unwrap(),
            expected_skipped
        );
        assert_eq!(
            outcome.blueprint.node(&fault_node).unwrap().status,
            NodeStatus::Failed
        );
        let expected_succeeded = n - 1 - expected_skipped.len();
        assert_eq!(outcome.report.succeeded, expected_succeeded, "run {run}");
        checked += 1;
    }
    finish(
        "failure-localization",
        Duration::from_secs(30),
        started,
        &format!("{checked} single-fault runs, skipped sets exact"),
    );
}

#[test]
fn execution_policies_order_by_completion_rate() {
    let _gate = gate();
    let started = Instant::now();
    let runs = 100usize;
    let mut sum_full = 0.0;
    let mut sum_noassist = 0.0;
    let mut sum_single = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(4004);
    for run in 0..runs {
        let (nodes, edges) = random_dag(&mut rng, 10);
        let ids: Vec<NodeId> = nodes.iter().map(|n| n.id.clone()).collect();
        let plan = FaultPlan::random_transient(run as u64, &ids, 0.3);
        let blueprint = ExecutionBlueprint::build("policies", nodes, edges).unwrap();

        let full = run_blueprint(
            blueprint.clone(),
            ExecutionMode::FullAcp,
            2,
            run as u64,
            plan.clone(),
        );
        let noassist = run_blueprint(
            blueprint.clone(),
            ExecutionMode::NoAssistance,
            2,
            run as u64,
            plan.clone(),
        );
        let single = run_blueprint(
            blueprint,
            ExecutionMode::SingleAgent,
            1,
            run as u64,
            plan,
        );

        assert!(
            full.report.completion_rate >= noassist.report.completion_rate,
            "run {run}: full {} < noassist {}",
            full.report.completion_rate,
            noassist.report.completion_rate
        );
        sum_full += full.report.completion_rate;
        sum_noassist += noassist.report.completion_rate;
        sum_single += single.report.completion_rate;
    }
    let mean_full = sum_full / runs as f64;
    let mean_noassist = sum_noassist / runs as f64;
    let mean_single = sum_single / runs as f64;
    assert!(
        mean_noassist >= mean_single,
        "mean noassist {mean_noassist} < mean single {mean_single}"
    );
    finish(
        "policy-monotonicity",
        Duration::from_secs(60),
        started,
        &format!(
            "means over {runs} transient-fault runs: full {mean_full:.3} >= noassist \
             {mean_noassist:.3} >= single {mean_single:.3}"
        ),
    );
}

#[test]
fn raised_codes_match_their_phase_stage() {
    let _gate = gate();
    let started = Instant::now();

    struct Scenario {
        name: &'static str,
        expected: StatusCode,
        build: fn() -> (ExecutionBlueprint, Arc<ToolRegistry>, NodeId),
    }

    fn registry_of(adapters: Vec<Arc<dyn acp_core::tools::ToolAdapter>>) -> Arc<ToolRegistry> {
        let mut registry = ToolRegistry::new();
        for adapter in adapters {
            registry.register(adapter).unwrap();
        }
        Arc::new(registry)
    }

    fn kv_two_required() -> Arc<dyn acp_core::tools::ToolAdapter> {
        Arc::new(KvTool::with_schema(
            ToolSchema {
                name: "needy".to_string(),
                description: String::new(),
                endpoints: vec![EndpointSchema {
                    id: "go".to_string(),
                    required: vec!["alpha".to_string(), "beta".to_string()],
                    optional: vec![],
                    outputs: vec![],
                }],
                single_flight: false,
            },
            Default::default(),
        ))
    }

    fn injected_static(behavior: FaultBehavior) -> Arc<dyn acp_core::tools::ToolAdapter> {
        inject(
            FaultPlan {
                entries: vec![FaultEntry {
                    target: "static".to_string(),
                    attempt: 1,
                    behavior,
                }],
                seed: 0,
            },
            Arc::new(StaticTool::new("static", "payload")),
        )
    }

    let scenarios = [
        Scenario {
            name: "missing required parameter",
            expected: StatusCode::MissingRequiredParameters,
            build: || {
                let node = BlueprintNode::new("a", "needy")
                    .with_endpoint("FUNCTION", "go")
                    .with_outputs(&["out"]);
                let bp = ExecutionBlueprint::build("s", vec![node], vec![]).unwrap();
                (bp, registry_of(vec![kv_two_required()]), "a".to_string())
            },
        },
        Scenario {
            name: "wrong step details (unknown endpoint)",
            expected: StatusCode::WrongStepDetails,
            build: || {
                let node = BlueprintNode::new("a", "static")
                    .with_endpoint("FUNCTION", "no_such_endpoint")
                    .with_outputs(&["out"]);
                let bp = ExecutionBlueprint::build("s", vec![node], vec![]).unwrap();
                (
                    bp,
                    registry_of(vec![Arc::new(StaticTool::new("static", "payload"))]),
                    "a".to_string(),
                )
            },
        },
        Scenario {
            name: "invalid parameter usage (duplicates)",
            expected: StatusCode::InvalidParameterUsage,
            build: || {
                let node = BlueprintNode::new("a", "static")
                    .with_endpoint("FUNCTION", "call")
                    .with_param(ParamBinding::literal("query", "x"))
                    .with_param(ParamBinding::literal("query", "y"))
                    .with_outputs(&["out"]);
                let bp = ExecutionBlueprint::build("s", vec![node], vec![]).unwrap();
                (
                    bp,
                    registry_of(vec![Arc::new(StaticTool::new("static", "payload"))]),
                    "a".to_string(),
                )
            },
        },
        Scenario {
            name: "tool call failure (throw)",
            expected: StatusCode::ToolCallFailure,
            build: || {
                let node = static_node("a");
                let bp = ExecutionBlueprint::build("s", vec![node], vec![]).unwrap();
                (
                    bp,
                    registry_of(vec![injected_static(FaultBehavior::Throw)]),
                    "a".to_string(),
                )
            },
        },
        Scenario {
            name: "incomplete information (empty payload)",
            expected: StatusCode::IncompleteInformation,
            build: || {
                let node = static_node("a");
                let bp = ExecutionBlueprint::build("s", vec![node], vec![]).unwrap();
                (
                    bp,
                    registry_of(vec![injected_static(FaultBehavior::EmptyPayload)]),
                    "a".to_string(),
                )
            },
        },
        Scenario {
            name: "dependency incomplete information (dropped field)",
            expected: StatusCode::DependencyIncompleteInformation,
            build: || {
                let producer = BlueprintNode::new("a", "fields")
                    .with_endpoint("FUNCTION", "call")
                    .with_outputs(&["alpha"]);
                let consumer = BlueprintNode::new("b", "static")
                    .with_endpoint("FUNCTION", "call")
                    .with_param(ParamBinding::dependency("query", "a", "beta"))
                    .with_outputs(&["out"]);
                let bp = ExecutionBlueprint::build(
                    "s",
                    vec![producer, consumer],
                    vec![("a".to_string(), "b".to_string())],
                )
                .unwrap();
                let fields_tool = Arc::new(
                    StaticTool::new("fields", r#"{"alpha":"1","beta":"2"}"#)
                        .with_outputs(&["alpha", "beta"]),
                );
                let wrapped = inject(
                    FaultPlan {
                        entries: vec![FaultEntry {
                            target: "a".to_string(),
                            attempt: 1,
                            behavior: FaultBehavior::DropField {
                                field: "beta".to_string(),
                            },
                        }],
                        seed: 0,
                    },
                    fields_tool,
                );
                (
                    bp,
                    registry_of(vec![wrapped, Arc::new(StaticTool::new("static", "payload"))]),
                    "a".to_string(),
                )
            },
        },
        Scenario {
            name: "wrong information (garbage payload)",
            expected: StatusCode::WrongInformation,
            build: || {
                let node = static_node("a");
                let bp = ExecutionBlueprint::build("s", vec![node], vec![]).unwrap();
                (
                    bp,
                    registry_of(vec![injected_static(FaultBehavior::GarbagePayload)]),
                    "a".to_string(),
                )
            },
        },
    ];

    let mut total = 0usize;
    for scenario in &scenarios {
        for _ in 0..50 {
            let (blueprint, registry, node_id) = (scenario.build)();
            let outcome = executor::run_node(
                &blueprint,
                &node_id,
                1,
                &registry,
                Duration::from_millis(300),
                &MarkerRelevance,
            );
            let NodeOutcome::Assistance { request, phase, .. } = outcome else {
                panic!("{}: expected an assistance request", scenario.name);
            };
            assert_eq!(request.error, scenario.expected, "{}", scenario.name);
            let expected_stage = match phase {
                ExecPhase::Prepare => Stage::Request,
                ExecPhase::ToolCall => Stage::ToolCall,
                ExecPhase::Validate => Stage::OutputExtraction,
            };
            assert_eq!(
                request.error.stage(),
                expected_stage,
                "{}: code {} raised in phase {phase:?}",
                scenario.name,
                request.error
            );
            total += 1;
        }
    }
    finish(
        "stage-correspondence",
        Duration::from_secs(30),
        started,
        &format!("{total} injected failures across 7 behaviors, 100% stage match"),
    );
}

// Seeded message generator for the round-trip criterion.
fn random_text(rng: &mut ChaCha8Rng, max_len: usize) -> String {
    let alphabet: Vec<char> =
        "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 _-.:,/\"'{}[]()\n\tµλ→"
            .chars()
            .collect();
    let len = rng.gen_range(0..=max_len);
    (0..len)
        .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
        .collect()
}

fn random_ident(rng: &mut ChaCha8Rng) -> String {
    let alphabet: Vec<char> = "abcdefghijklmnopqrstuvwxyz_".chars().collect();
    let len = rng.gen_range(1..=12);
    (0..len)
        .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
        .collect()
}

fn random_message(rng: &mut ChaCha8Rng) -> Message {
    match rng.gen_range(0..3) {
        0 => {
            let mut request = AgentRequest::new(
                ["FUNCTION", "GET", "POST"][rng.gen_range(0..3)],
                random_ident(rng),
            );
            let mut names = BTreeSet::new();
            for _ in 0..rng.gen_range(0..5) {
                let name = random_ident(rng);
                if names.insert(name.clone()) {
                    request.body.push(BodyParam {
                        name,
                        value: random_text(rng, 60),
                    });
                }
            }
            for _ in 0..rng.gen_range(0..3) {
                request
                    .headers
                    .insert(random_ident(rng), random_text(rng, 20));
            }
            Message::Request(request)
        }
        1 => {
            if rng.gen_bool(0.8) {
                let outputs = (0..rng.gen_range(1..4))
                    .map(|_| OutputVariable {
                        name: random_ident(rng),
                        content: random_text(rng, 120),
                    })
                    .collect();
                let dependent_inputs = (0..rng.gen_range(0..3))
                    .map(|_| DependentInputVariable {
                        name: random_ident(rng),
                        target_node: format!("s{}.{}", rng.gen_range(1..5), rng.gen_range(1..5)),
                        declared_type: "string".to_string(),
                        content: random_text(rng, 80),
                    })
                    .collect();
                Message::Response(AgentResponse::success(outputs, dependent_inputs).unwrap())
            } else {
                let code = [
                    StatusCode::MissingRequiredParameters,
                    StatusCode::ToolCallFailure,
                    StatusCode::WrongInformation,
                ][rng.gen_range(0..3)];
                Message::Response(AgentResponse {
                    status: code,
                    outputs: vec![],
                    dependent_inputs: vec![],
                })
            }
        }
        _ => {
            let node = format!("s{}.step{}", rng.gen_range(1..5), rng.gen_range(1..5));
            let code = StatusCode::ALL[rng.gen_range(1..StatusCode::ALL.len())];
            Message::Assistance(AssistanceRequest {
                error: code,
                error_node: node.clone(),
                error_tool: random_ident(rng),
                description: random_text(rng, 100),
                relevant_context: random_text(rng, 100),
                suggested_resolution: SuggestedResolution {
                    action: [
                        SuggestedAction::Retry,
                        SuggestedAction::Reroute,
                        SuggestedAction::Abandon,
                    ][rng.gen_range(0..3)],
                    rationale: random_text(rng, 60),
                },
                status_update: StatusUpdate {
                    previous_progress: random_text(rng, 60),
                    current_progress: random_text(rng, 60),
                    current_node: node,
                    completed_tools: (0..rng.gen_range(0..3))
                        .map(|_| CompletedTool {
                            tool: random_ident(rng),
                            summary: random_text(rng, 40),
                        })
                        .collect(),
                    encountered_issues: random_text(rng, 60),
                },
            })
        }
    }
}

#[test]
fn protocol_round_trip_over_generated_messages() {
    let _gate = gate();
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6006);
    let total = 1200usize;
    for case in 0..total {
        let message = random_message(&mut rng);
        let encoded = protocol::encode_message(&message);
        let decoded = protocol::decode_message(&encoded)
            .unwrap_or_else(|e| panic!("case {case}: decode failed: {e}\n{encoded}"));
        assert_eq!(decoded, message, "case {case}");
        // Determinism: re-encoding the decoded value is byte-identical.
        assert_eq!(protocol::encode_message(&decoded), encoded, "case {case}");
    }
    finish(
        "protocol-round-trip",
        Duration::from_secs(10),
        started,
        &format!("{total} generated messages, decode∘encode = identity"),
    );
}

#[test]
fn two_workers_beat_single_worker_on_independent_chains() {
    let _gate = gate();
    let started = Instant::now();

    fn chains_blueprint() -> ExecutionBlueprint {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for chain in ["c1", "c2"] {
            for step in 1..=4 {
                nodes.push(static_node(&format!("{chain}.{step}")));
                if step > 1 {
                    edges.push((format!("{chain}.{}", step - 1), format!("{chain}.{step}")));
                }
            }
        }
        ExecutionBlueprint::build("chains", nodes, edges).unwrap()
    }

    fn timed_run(workers: usize) -> Duration {
        let registry = static_registry(FaultPlan::empty(), Duration::from_millis(50));
        let handler = FaultHandler::new(ReroutePolicy::default(), Arc::clone(&registry));
        let runner = Runner::new(
            registry,
            ExecutionPolicy::new(ExecutionMode::FullAcp)
                .with_workers(workers)
                .with_timeout(Duration::from_secs(5)),
            handler,
        );
        let start = Instant::now();
        let outcome = runner.run(chains_blueprint()).unwrap();
        assert_eq!(outcome.report.completion_rate, 1.0);
        start.elapsed()
    }

    fn median(mut samples: Vec<Duration>) -> Duration {
        samples.sort();
        samples[samples.len() / 2]
    }

    let sequential = median((0..5).map(|_| timed_run(1)).collect());
    let parallel = median((0..5).map(|_| timed_run(2)).collect());
    let ratio = parallel.as_secs_f64() / sequential.as_secs_f64();
    assert!(
        ratio < 0.6,
        "parallel/sequential ratio {ratio:.3} not under 0.6 \
         (sequential {sequential:?}, parallel {parallel:?})"
    );
    finish(
        "parallel-timeline",
        Duration::from_secs(15),
        started,
        &format!("5-run medians: sequential {sequential:?}, parallel {parallel:?}, ratio {ratio:.3}"),
    );
}

#[test]
fn identical_seeded_single_worker_runs_replay_byte_identically() {
    let _gate = gate();
    let started = Instant::now();
    let run_once = || {
        let (nodes, edges) = {
            let mut rng = ChaCha8Rng::seed_from_u64(8008);
            random_dag(&mut rng, 10)
        };
        let ids: Vec<NodeId> = nodes.iter().map(|n| n.id.clone()).collect();
        let plan = FaultPlan::random_transient(8008, &ids, 0.3);
        let blueprint = ExecutionBlueprint::build("replay", nodes, edges).unwrap();
        let outcome = run_blueprint(blueprint, ExecutionMode::FullAcp, 1, 8008, plan);
        (
            outcome.trace.to_json_string(),
            outcome.trace.render_timeline(),
        )
    };
    let (json_a, timeline_a) = run_once();
    let (json_b, timeline_b) = run_once();
    assert_eq!(json_a, json_b, "trace JSON files differ between replays");
    assert_eq!(timeline_a, timeline_b, "timelines differ between replays");
    finish(
        "replay-determinism",
        Duration::from_secs(5),
        started,
        &format!("two seeded single-worker runs, {} bytes identical", json_a.len()),
    );
}

#[test]
fn bundled_vacation_scenario_reroutes_and_completes() {
    let _gate = gate();
    let started = Instant::now();
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/vacation");

    let blueprint = acp_core::planner::load_blueprint(&root.join("blueprint.json")).unwrap();
    let reroute: ReroutePolicy =
        ReroutePolicy::from_json(&std::fs::read_to_string(root.join("reroute.json")).unwrap())
            .unwrap();
    let mut registry = ToolRegistry::new();
    let mut fixture_paths: Vec<PathBuf> = std::fs::read_dir(root.join("fixtures"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    fixture_paths.sort();
    for path in fixture_paths {
        registry
            .register(Arc::new(KvTool::from_fixture_file(&path).unwrap()))
            .unwrap();
    }
    let registry = Arc::new(registry);
    let handler = FaultHandler::new(reroute, Arc::clone(&registry));
    let outcome = Runner::new(
        registry,
        ExecutionPolicy::new(ExecutionMode::FullAcp)
            .with_workers(1)
            .with_timeout(Duration::from_secs(2)),
        handler,
    )
    .run(blueprint)
    .unwrap();

    // The weather node raises 601 for its missing coordinates.
    assert!(outcome.trace.events.iter().any(|e| e.node == "s1.step2"
        && matches!(
            e.kind,
            TraceEventKind::ErrorRaised {
                code: StatusCode::MissingRequiredParameters
            }
        )));
    // The handler applies the insertion-recipe reroute.
    let reroute_event = outcome
        .trace
        .events
        .iter()
        .find(|e| {
            matches!(
                e.kind,
                TraceEventKind::ResolutionApplied {
                    action: acp_core::scheduler::AppliedAction::Reroute
                }
            )
        })
        .expect("a reroute resolution is applied");
    assert!(reroute_event.detail.contains("s1.step2.fix1"));
    // The inserted coordinate lookup ran and the run completed fully.
    assert_eq!(
        outcome.blueprint.node("s1.step2.fix1").unwrap().status,
        NodeStatus::Succeeded
    );
    assert_eq!(outcome.report.completion_rate, 1.0);
    assert_eq!(
        outcome
            .blueprint
            .stored_output("s1.step2", "avg_temperature"),
        Some("Average daily high 24C with clear skies")
    );
    finish(
        "insertion-recipe-scenario",
        Duration::from_secs(5),
        started,
        "601 raised, coordinate-lookup step inserted, completion rate 1.0",
    );
}
