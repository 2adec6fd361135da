//! Produces execution blueprints: loads hand-written blueprint files,
//! compiles compact task specs into blueprints, and exposes the pluggable
//! slot for externally generated decompositions.
//!
//! Everything funnels through [`ExecutionBlueprint::build`]; there is no
//! second validation path.

use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blueprint::{
    BlueprintNode, BlueprintError, ExecutionBlueprint, NodeId, ParamBinding,
    DEFAULT_RETRY_BUDGET,
};
use crate::tools::ToolSchema;

/// Blueprint file: the authoring shape, without runtime state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlueprintFile {
    goal: String,
    nodes: Vec<NodeFile>,
    edges: Vec<(NodeId, NodeId)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeFile {
    id: NodeId,
    subtask: String,
    tool: String,
    method: String,
    endpoint: String,
    #[serde(default)]
    params: Vec<ParamBinding>,
    #[serde(default)]
    expected_outputs: Vec<String>,
}

impl From<NodeFile> for BlueprintNode {
    fn from(file: NodeFile) -> Self {
        BlueprintNode {
            id: file.id,
            subtask: file.subtask,
            tool: file.tool,
            method: file.method,
            endpoint: file.endpoint,
            params: file.params,
            expected_outputs: file.expected_outputs,
            status: crate::blueprint::NodeStatus::Pending,
            retries_remaining: DEFAULT_RETRY_BUDGET,
            last_error: None,
        }
    }
}

impl From<&BlueprintNode> for NodeFile {
    fn from(node: &BlueprintNode) -> Self {
        NodeFile {
            id: node.id.clone(),
            subtask: node.subtask.clone(),
            tool: node.tool.clone(),
            method: node.method.clone(),
            endpoint: node.endpoint.clone(),
            params: node.params.clone(),
            expected_outputs: node.expected_outputs.clone(),
        }
    }
}

/// Planner errors.
#[derive(Debug, Error)]
pub enum PlanError {
    #[error("{path}: {detail}")]
    ParseError { path: String, detail: String },
    #[error("invalid task spec: {reason}")]
    InvalidSpec { reason: String },
    #[error("dependency variable `{variable}` is not an expected output of `{producer}`")]
    UnknownDependencyVariable { producer: NodeId, variable: String },
    #[error("plan adapter unavailable: {0}")]
    AdapterUnavailable(String),
    #[error("invalid plan: {diagnostics}")]
    InvalidPlan { diagnostics: String },
    #[error(transparent)]
    Blueprint(#[from] BlueprintError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Load and validate a blueprint file.
pub fn load_blueprint(path: &Path) -> Result<ExecutionBlueprint, PlanError> {
    let text = std::fs::read_to_string(path)?;
    let file = parse_blueprint_text(&text).map_err(|detail| PlanError::ParseError {
        path: path.display().to_string(),
        detail,
    })?;
    Ok(ExecutionBlueprint::build(
        file.goal,
        file.nodes.into_iter().map(BlueprintNode::from).collect(),
        file.edges,
    )?)
}

/// Parse blueprint text, reporting the failing field path or position.
fn parse_blueprint_text(text: &str) -> Result<BlueprintFile, String> {
    let deserializer = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(deserializer).map_err(|e| {
        let path = e.path().to_string();
        if path.is_empty() || path == "." {
            e.inner().to_string()
        } else {
            format!("{} (at field `{path}`)", e.inner())
        }
    })
}

/// Render a blueprint back to its file form (authoring fields only).
pub fn emit_blueprint(blueprint: &ExecutionBlueprint) -> String {
    let file = BlueprintFile {
        goal: blueprint.goal.clone(),
        nodes: blueprint.nodes().map(NodeFile::from).collect(),
        edges: blueprint.edges().cloned().collect(),
    };
    serde_json::to_string_pretty(&file).expect("blueprint serialization cannot fail")
}

/// Structural diagnostics for a blueprint file without building it.
pub fn check_blueprint(path: &Path) -> Result<Vec<BlueprintError>, PlanError> {
    let text = std::fs::read_to_string(path)?;
    let file = parse_blueprint_text(&text).map_err(|detail| PlanError::ParseError {
        path: path.display().to_string(),
        detail,
    })?;
    let nodes: Vec<BlueprintNode> = file.nodes.into_iter().map(BlueprintNode::from).collect();
    Ok(ExecutionBlueprint::check(&nodes, &file.edges))
}

/// One step template inside a subtask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepTemplate {
    pub tool: String,
    pub method: String,
    pub endpoint: String,
    #[serde(default)]
    pub params: Vec<ParamBinding>,
    #[serde(default)]
    pub expected_outputs: Vec<String>,
}

/// A subtask: an id plus its ordered steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subtask {
    pub id: String,
    pub steps: Vec<StepTemplate>,
}

/// A declared data dependency between steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DependencySpec {
    pub producer: NodeId,
    pub consumer: NodeId,
    pub variable: String,
}

/// Compact decomposition of a goal into subtasks, steps, and dependencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub goal: String,
    pub subtasks: Vec<Subtask>,
    #[serde(default)]
    pub dependencies: Vec<DependencySpec>,
}

impl TaskSpec {
    pub fn from_json(text: &str) -> Result<Self, PlanError> {
        let deserializer = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(deserializer).map_err(|e| PlanError::InvalidPlan {
            diagnostics: format!("{} (at field `{}`)", e.inner(), e.path()),
        })
    }
}

/// Compile a task spec into a blueprint.
///
/// Step k of subtask `s` becomes node `s.k` (1-based). Steps within a
/// subtask chain sequentially; cross-step parallelism comes only from
/// declared dependencies, each of which adds an edge and a dependency
/// binding on the consumer.
pub fn compile(spec: &TaskSpec) -> Result<ExecutionBlueprint, PlanError> {
    let mut nodes: Vec<BlueprintNode> = Vec::new();
    let mut edges: Vec<(NodeId, NodeId)> = Vec::new();
    for subtask in &spec.subtasks {
        if subtask.steps.is_empty() {
            return Err(PlanError::InvalidSpec {
                reason: format!("subtask `{}` has no steps", subtask.id),
            });
        }
        for (index, step) in subtask.steps.iter().enumerate() {
            let id = format!("{}.{}", subtask.id, index + 1);
            nodes.push(BlueprintNode {
                id: id.clone(),
                subtask: subtask.id.clone(),
                tool: step.tool.clone(),
                method: step.method.clone(),
                endpoint: step.endpoint.clone(),
                params: step.params.clone(),
                expected_outputs: step.expected_outputs.clone(),
                status: crate::blueprint::NodeStatus::Pending,
                retries_remaining: DEFAULT_RETRY_BUDGET,
                last_error: None,
            });
            if index > 0 {
                edges.push((format!("{}.{}", subtask.id, index), id));
            }
        }
    }

    fn find_node(nodes: &[BlueprintNode], id: &NodeId) -> Option<usize> {
        nodes.iter().position(|n| &n.id == id)
    }
    for dep in &spec.dependencies {
        let Some(producer_index) = find_node(&nodes, &dep.producer) else {
            return Err(PlanError::InvalidSpec {
                reason: format!("dependency references unknown step `{}`", dep.producer),
            });
        };
        let Some(consumer_index) = find_node(&nodes, &dep.consumer) else {
            return Err(PlanError::InvalidSpec {
                reason: format!("dependency references unknown step `{}`", dep.consumer),
            });
        };
        if !nodes[producer_index]
            .expected_outputs
            .contains(&dep.variable)
        {
            return Err(PlanError::UnknownDependencyVariable {
                producer: dep.producer.clone(),
                variable: dep.variable.clone(),
            });
        }
        if nodes[consumer_index]
            .params
            .iter()
            .any(|p| p.name == dep.variable)
        {
            return Err(PlanError::InvalidSpec {
                reason: format!(
                    "step `{}` already binds parameter `{}`",
                    dep.consumer, dep.variable
                ),
            });
        }
        nodes[consumer_index].params.push(ParamBinding::dependency(
            dep.variable.clone(),
            dep.producer.clone(),
            dep.variable.clone(),
        ));
        edges.push((dep.producer.clone(), dep.consumer.clone()));
    }
    edges.sort();
    edges.dedup();

    Ok(ExecutionBlueprint::build(spec.goal.clone(), nodes, edges)?)
}

/// External decomposition source: takes a goal and the capability catalog,
/// returns task-spec JSON.
pub trait PlanAdapter {
    fn plan(&self, goal: &str, catalog: &[ToolSchema]) -> Result<String, PlanError>;
}

/// Scripted adapter that returns fixed text.
pub struct StubPlanAdapter {
    pub text: String,
}

impl PlanAdapter for StubPlanAdapter {
    fn plan(&self, _goal: &str, _catalog: &[ToolSchema]) -> Result<String, PlanError> {
        Ok(self.text.clone())
    }
}

/// Shells out to a command: the goal is the first argument, the catalog
/// is JSON on stdin, and stdout must be task-spec JSON.
pub struct CommandPlanAdapter {
    pub program: std::path::PathBuf,
}

impl PlanAdapter for CommandPlanAdapter {
    fn plan(&self, goal: &str, catalog: &[ToolSchema]) -> Result<String, PlanError> {
        use std::io::Write;
        let mut child = Command::new(&self.program)
            .arg(goal)
            .stdin(std::process::Stdio::piped())
            .stdout(std::process::Stdio::piped())
            .spawn()
            .map_err(|e| {
                PlanError::AdapterUnavailable(format!(
                    "cannot run `{}`: {e}",
                    self.program.display()
                ))
            })?;
        let catalog_json =
            serde_json::to_string(catalog).expect("catalog serialization cannot fail");
        if let Some(stdin) = child.stdin.as_mut() {
            stdin
                .write_all(catalog_json.as_bytes())
                .map_err(|e| PlanError::AdapterUnavailable(e.to_string()))?;
        }
        let output = child
            .wait_with_output()
            .map_err(|e| PlanError::AdapterUnavailable(e.to_string()))?;
        if !output.status.success() {
            return Err(PlanError::AdapterUnavailable(format!(
                "`{}` exited with {}",
                self.program.display(),
                output.status
            )));
        }
        String::from_utf8(output.stdout)
            .map_err(|e| PlanError::AdapterUnavailable(e.to_string()))
    }
}

/// Run a plan adapter and validate its output against the catalog.
///
/// Invalid output is rejected with diagnostics, never silently repaired.
pub fn plan_via_adapter(
    goal: &str,
    catalog: &[ToolSchema],
    adapter: &dyn PlanAdapter,
) -> Result<TaskSpec, PlanError> {
    let text = adapter.plan(goal, catalog)?;
    let spec = TaskSpec::from_json(&text)?;
    for subtask in &spec.subtasks {
        for step in &subtask.steps {
            if !catalog.iter().any(|schema| schema.name == step.tool) {
                return Err(PlanError::InvalidPlan {
                    diagnostics: format!(
                        "subtask `{}` uses tool `{}` which is not in the capability catalog",
                        subtask.id, step.tool
                    ),
                });
            }
        }
    }
    // Structural validation: the spec must compile.
    compile(&spec).map_err(|e| match e {
        PlanError::InvalidPlan { .. } => e,
        other => PlanError::InvalidPlan {
            diagnostics: other.to_string(),
        },
    })?;
    Ok(spec)
}
