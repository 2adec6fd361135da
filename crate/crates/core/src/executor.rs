//! Runs one node through three phases — input preparation, tool call,
//! output validation — producing either a 200 response or a fully
//! populated assistance request.
//!
//! Executors are stateless: they read a blueprint snapshot, never mutate
//! it, and communicate only through the returned message. Failures in each
//! phase carry codes from that phase's stage: 601/602/603 while preparing,
//! 604 while calling, 605/606/607 while validating.

// Assistance requests are alternative outcomes, not error wrappers; they
// stay unboxed in signatures.
#![allow(clippy::result_large_err, clippy::large_enum_variant)]

use std::collections::BTreeSet;
use std::sync::{mpsc, Arc};
use std::time::Duration;

use crate::blueprint::{BindingOrigin, BlueprintNode, ExecutionBlueprint, NodeId, NodeStatus};
use crate::protocol::{
    AgentRequest, AgentResponse, AssistanceRequest, BodyParam, CompletedTool,
    DependentInputVariable, OutputVariable, StatusCode, StatusUpdate, SuggestedAction,
    SuggestedResolution,
};
use crate::tools::{CallCtx, EndpointSchema, ToolRegistry};

/// Pluggable judgment on whether a payload is usable at all.
///
/// The default accepts anything non-empty; semantic relevance checking is
/// an adapter concern (for example an LLM judge) plugged in through this
/// trait.
pub trait RelevanceCheck: Send + Sync {
    fn is_relevant(&self, node: &str, payload: &str) -> bool;
}

/// Default relevance predicate: non-empty payloads pass.
pub struct NonEmptyRelevance;

impl RelevanceCheck for NonEmptyRelevance {
    fn is_relevant(&self, _node: &str, payload: &str) -> bool {
        !payload.is_empty()
    }
}

/// Which phase produced an outcome. Used by the scheduler for trace detail
/// and by tests asserting the phase/stage correspondence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecPhase {
    Prepare,
    ToolCall,
    Validate,
}

/// Terminal result of running one node.
#[derive(Debug)]
pub enum NodeOutcome {
    Success {
        request: AgentRequest,
        response: AgentResponse,
    },
    Assistance {
        request: AssistanceRequest,
        phase: ExecPhase,
        /// The prepared request, when phase 1 completed.
        agent_request: Option<AgentRequest>,
    },
}

/// Run one node through all three phases against a read-only snapshot.
pub fn run_node(
    blueprint: &ExecutionBlueprint,
    node_id: &str,
    attempt: u32,
    registry: &Arc<ToolRegistry>,
    timeout: Duration,
    relevance: &dyn RelevanceCheck,
) -> NodeOutcome {
    let node = blueprint
        .node(node_id)
        .expect("scheduler only dispatches existing nodes");

    let request = match prepare_request(blueprint, node, registry) {
        Ok(request) => request,
        Err(assistance) => {
            return NodeOutcome::Assistance {
                request: assistance,
                phase: ExecPhase::Prepare,
                agent_request: None,
            }
        }
    };

    let ctx = CallCtx {
        node: node_id.to_string(),
        attempt,
        timeout,
    };
    let payload = match invoke_tool(blueprint, node, registry, &request, &ctx) {
        Ok(payload) => payload,
        Err(assistance) => {
            return NodeOutcome::Assistance {
                request: assistance,
                phase: ExecPhase::ToolCall,
                agent_request: Some(request),
            }
        }
    };

    match validate_response(blueprint, node, registry, &payload, relevance) {
        Ok(response) => NodeOutcome::Success { request, response },
        Err(assistance) => NodeOutcome::Assistance {
            request: assistance,
            phase: ExecPhase::Validate,
            agent_request: Some(request),
        },
    }
}

/// Phase 1: build the structured request from the node template and the
/// output store. Schema mismatches raise 602, unresolvable or missing
/// required parameters 601, parameter misuse 603.
pub fn prepare_request(
    blueprint: &ExecutionBlueprint,
    node: &BlueprintNode,
    registry: &ToolRegistry,
) -> Result<AgentRequest, AssistanceRequest> {
    let schema = registry
        .schema(&node.tool)
        .expect("pre-flight guarantees registered tools");
    let Some(endpoint) = schema.endpoint(&node.endpoint) else {
        return Err(assistance(
            blueprint,
            node,
            StatusCode::WrongStepDetails,
            format!(
                "endpoint `{}` is not declared by tool `{}`",
                node.endpoint, node.tool
            ),
            format!(
                "declared endpoints: {}",
                schema
                    .endpoints
                    .iter()
                    .map(|e| e.id.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        ));
    };

    // Declared params must exist in the schema.
    for binding in &node.params {
        if !endpoint.required.contains(&binding.name) && !endpoint.optional.contains(&binding.name)
        {
            return Err(assistance(
                blueprint,
                node,
                StatusCode::WrongStepDetails,
                format!(
                    "parameter `{}` is not declared by endpoint `{}` of tool `{}`",
                    binding.name, endpoint.id, node.tool
                ),
                format!(
                    "declared parameters: required [{}], optional [{}]",
                    endpoint.required.join(", "),
                    endpoint.optional.join(", ")
                ),
            ));
        }
    }

    // Output expectations must be satisfiable under the extraction contract.
    if let Err((code, description)) = check_output_contract(node, endpoint) {
        return Err(assistance(
            blueprint,
            node,
            code,
            description,
            format!("declared outputs: [{}]", endpoint.outputs.join(", ")),
        ));
    }

    let resolved = match blueprint.resolve_inputs(&node.id) {
        Ok(resolved) => resolved,
        Err(err) => {
            return Err(assistance(
                blueprint,
                node,
                err.code,
                err.detail,
                store_context(blueprint, node),
            ))
        }
    };

    let bound: BTreeSet<&str> = resolved.iter().map(|(name, _)| name.as_str()).collect();
    let missing: Vec<&str> = endpoint
        .required
        .iter()
        .map(|r| r.as_str())
        .filter(|r| !bound.contains(r))
        .collect();
    if !missing.is_empty() {
        return Err(assistance(
            blueprint,
            node,
            StatusCode::MissingRequiredParameters,
            format!("missing required parameter(s): {}", missing.join(", ")),
            store_context(blueprint, node),
        ));
    }

    let mut request = AgentRequest::new(node.method.clone(), node.endpoint.clone());
    request.body = resolved
        .into_iter()
        .map(|(name, value)| BodyParam { name, value })
        .collect();
    Ok(request)
}

fn check_output_contract(
    node: &BlueprintNode,
    endpoint: &EndpointSchema,
) -> Result<(), (StatusCode, String)> {
    if endpoint.outputs.len() <= 1 {
        if node.expected_outputs.len() > 1 {
            return Err((
                StatusCode::WrongStepDetails,
                format!(
                    "tool returns a single payload but node `{}` expects {} outputs",
                    node.id,
                    node.expected_outputs.len()
                ),
            ));
        }
    } else {
        for expected in &node.expected_outputs {
            if !endpoint.outputs.contains(expected) {
                return Err((
                    StatusCode::WrongStepDetails,
                    format!(
                        "expected output `{expected}` is not declared by endpoint `{}`",
                        endpoint.id
                    ),
                ));
            }
        }
    }
    Ok(())
}

/// Phase 2: dispatch the request. Adapter errors and timeouts raise 604.
///
/// The adapter call runs on a detached helper thread; a stalled tool keeps
/// that thread, not the executor, so the per-node timeout always holds.
pub fn invoke_tool(
    blueprint: &ExecutionBlueprint,
    node: &BlueprintNode,
    registry: &Arc<ToolRegistry>,
    request: &AgentRequest,
    ctx: &CallCtx,
) -> Result<String, AssistanceRequest> {
    let (tx, rx) = mpsc::channel();
    let worker_registry = Arc::clone(registry);
    let tool = node.tool.clone();
    let worker_request = request.clone();
    let worker_ctx = ctx.clone();
    std::thread::spawn(move || {
        let _ = tx.send(worker_registry.invoke(&tool, &worker_request, &worker_ctx));
    });
    match rx.recv_timeout(ctx.timeout) {
        Ok(Ok(payload)) => Ok(payload),
        Ok(Err(err)) => Err(assistance(
            blueprint,
            node,
            StatusCode::ToolCallFailure,
            err.message,
            format!("tool `{}`, attempt {}", node.tool, ctx.attempt),
        )),
        Err(_) => Err(assistance(
            blueprint,
            node,
            StatusCode::ToolCallFailure,
            format!("timeout after {:?}", ctx.timeout),
            format!("tool `{}`, attempt {}", node.tool, ctx.attempt),
        )),
    }
}

/// Phase 3: extract the expected outputs and every value a downstream node
/// declared a dependency on. Missing own outputs raise 605, unpopulatable
/// downstream values 606, and a payload failing the relevance predicate 607.
pub fn validate_response(
    blueprint: &ExecutionBlueprint,
    node: &BlueprintNode,
    registry: &ToolRegistry,
    payload: &str,
    relevance: &dyn RelevanceCheck,
) -> Result<AgentResponse, AssistanceRequest> {
    let schema = registry
        .schema(&node.tool)
        .expect("pre-flight guarantees registered tools");
    let endpoint = schema
        .endpoint(&node.endpoint)
        .expect("phase 1 validated the endpoint");

    // Outputs the node itself declares; a nameless node stores the whole
    // payload under `result`.
    let own_outputs: Vec<String> = if node.expected_outputs.is_empty() {
        vec!["result".to_string()]
    } else {
        node.expected_outputs.clone()
    };
    // Values future nodes depend on: (target node, variable name).
    let dependents = dependent_bindings(blueprint, &node.id);

    let mut outputs = Vec::new();
    let mut dependent_inputs = Vec::new();

    if endpoint.outputs.len() >= 2 {
        // Named-field contract: the payload must be a JSON object.
        let fields = match serde_json::from_str::<serde_json::Value>(payload) {
            Ok(serde_json::Value::Object(map)) => map,
            _ => {
                return Err(assistance(
                    blueprint,
                    node,
                    StatusCode::IncompleteInformation,
                    format!(
                        "tool `{}` declares named outputs but the payload is not a JSON object",
                        node.tool
                    ),
                    preview(payload),
                ))
            }
        };
        let field_text = |name: &str| -> Option<String> {
            fields.get(name).map(|v| match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            })
        };
        for name in &own_outputs {
            match field_text(name) {
                Some(content) if !content.is_empty() => outputs.push(OutputVariable {
                    name: name.clone(),
                    content,
                }),
                _ => {
                    return Err(assistance(
                        blueprint,
                        node,
                        StatusCode::IncompleteInformation,
                        format!("payload lacks essential field `{name}`"),
                        preview(payload),
                    ))
                }
            }
        }
        for (target, name) in &dependents {
            match field_text(name) {
                Some(content) if !content.is_empty() => {
                    dependent_inputs.push(DependentInputVariable {
                        name: name.clone(),
                        target_node: target.clone(),
                        declared_type: "string".to_string(),
                        content,
                    })
                }
                _ => {
                    return Err(assistance(
                        blueprint,
                        node,
                        StatusCode::DependencyIncompleteInformation,
                        format!(
                            "payload lacks field `{name}` needed by dependent node `{target}`"
                        ),
                        preview(payload),
                    ))
                }
            }
        }
    } else {
        // Whole-payload contract: one output, the payload itself.
        let name = own_outputs[0].clone();
        if payload.is_empty() {
            return Err(assistance(
                blueprint,
                node,
                StatusCode::IncompleteInformation,
                format!("payload is empty; output `{name}` cannot be populated"),
                String::new(),
            ));
        }
        outputs.push(OutputVariable {
            name: name.clone(),
            content: payload.to_string(),
        });
        for (target, dep_name) in &dependents {
            if dep_name == &name {
                dependent_inputs.push(DependentInputVariable {
                    name: dep_name.clone(),
                    target_node: target.clone(),
                    declared_type: "string".to_string(),
                    content: payload.to_string(),
                });
            } else {
                return Err(assistance(
                    blueprint,
                    node,
                    StatusCode::DependencyIncompleteInformation,
                    format!(
                        "single-output tool cannot populate `{dep_name}` needed by node `{target}`"
                    ),
                    format!("the only output of `{}` is `{name}`", node.id),
                ));
            }
        }
    }

    if !relevance.is_relevant(&node.id, payload) {
        return Err(assistance(
            blueprint,
            node,
            StatusCode::WrongInformation,
            "payload judged irrelevant or erroneous for this step".to_string(),
            preview(payload),
        ));
    }

    Ok(AgentResponse::success(outputs, dependent_inputs)
        .expect("extraction always yields at least one output"))
}

/// All (consumer node, variable) pairs that depend on outputs of `id`.
fn dependent_bindings(blueprint: &ExecutionBlueprint, id: &str) -> BTreeSet<(NodeId, String)> {
    let mut dependents = BTreeSet::new();
    for other in blueprint.nodes() {
        if other.id == id {
            continue;
        }
        for binding in &other.params {
            if let BindingOrigin::Dependency { source } = &binding.origin {
                if source.node == id {
                    dependents.insert((other.id.clone(), source.output.clone()));
                }
            }
        }
    }
    dependents
}

fn preview(payload: &str) -> String {
    let trimmed: String = payload.chars().take(120).collect();
    if trimmed.len() < payload.len() {
        format!("payload preview: {trimmed}…")
    } else if trimmed.is_empty() {
        String::new()
    } else {
        format!("payload preview: {trimmed}")
    }
}

/// Assemble an assistance request with a populated status update.
fn assistance(
    blueprint: &ExecutionBlueprint,
    node: &BlueprintNode,
    code: StatusCode,
    description: String,
    relevant_context: String,
) -> AssistanceRequest {
    let completed: Vec<CompletedTool> = blueprint
        .nodes()
        .filter(|n| n.status == NodeStatus::Succeeded)
        .map(|n| CompletedTool {
            tool: n.tool.clone(),
            summary: format!(
                "node `{}` stored: {}",
                n.id,
                if n.expected_outputs.is_empty() {
                    "result".to_string()
                } else {
                    n.expected_outputs.join(", ")
                }
            ),
        })
        .collect();
    let succeeded = completed.len();
    let suggested = suggested_resolution(code, node);
    AssistanceRequest {
        error: code,
        error_node: node.id.clone(),
        error_tool: node.tool.clone(),
        description: description.clone(),
        relevant_context,
        suggested_resolution: suggested,
        status_update: StatusUpdate {
            previous_progress: format!(
                "{succeeded} of {} nodes completed",
                blueprint.node_count()
            ),
            current_progress: format!("executing node `{}` via tool `{}`", node.id, node.tool),
            current_node: node.id.clone(),
            completed_tools: completed,
            encountered_issues: description,
        },
    }
}

/// Default suggestions: request-stage codes reroute (they are deterministic
/// failures), 604 retries, extraction codes retry while budget remains and
/// reroute after.
fn suggested_resolution(code: StatusCode, node: &BlueprintNode) -> SuggestedResolution {
    let (action, rationale) = match code {
        StatusCode::MissingRequiredParameters => (
            SuggestedAction::Reroute,
            "add a step that provides the missing parameters".to_string(),
        ),
        StatusCode::WrongStepDetails | StatusCode::InvalidParameterUsage => (
            SuggestedAction::Reroute,
            "the step details do not match the tool schema; re-plan the step".to_string(),
        ),
        StatusCode::ToolCallFailure => (
            SuggestedAction::Retry,
            "tool call failures are commonly transient".to_string(),
        ),
        _ if node.retries_remaining > 0 => (
            SuggestedAction::Retry,
            "tool outputs vary between attempts; retry before rerouting".to_string(),
        ),
        _ => (
            SuggestedAction::Reroute,
            "no retries remain; switch to an alternative".to_string(),
        ),
    };
    SuggestedResolution { action, rationale }
}

fn store_context(blueprint: &ExecutionBlueprint, node: &BlueprintNode) -> String {
    let available: Vec<String> = blueprint
        .store_entries()
        .map(|(n, name, _)| format!("{n}.{name}"))
        .collect();
    format!(
        "node `{}` bindings: [{}]; store holds: [{}]",
        node.id,
        node.params
            .iter()
            .map(|p| p.name.as_str())
            .collect::<Vec<_>>()
            .join(", "),
        available.join(", ")
    )
}
