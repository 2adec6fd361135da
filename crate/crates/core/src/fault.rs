//! The fault-tolerance agent: turns assistance requests into resolutions.
//!
//! Resolutions follow a deterministic decision ladder — retry transient
//! failures while budget remains, insert a recipe predecessor for missing
//! parameters, substitute an alternative tool, and otherwise abandon. An
//! optional override hook lets an external policy (for example an LLM-backed
//! one) preempt the ladder through the same interface.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::blueprint::{
    BindingOrigin, BlueprintNode, ExecutionBlueprint, NodeId, ParamBinding,
};
use crate::protocol::{AssistanceRequest, StatusCode};
use crate::tools::ToolRegistry;

/// Replacement tool binding applied by a reroute, optionally inserting a
/// new predecessor node whose outputs feed the rerouted node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RerouteAction {
    pub tool: String,
    pub method: String,
    pub endpoint: String,
    pub params: Vec<ParamBinding>,
    pub inserted: Option<BlueprintNode>,
}

/// The three ways a failure can be resolved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum ResolutionChoice {
    Retry,
    Reroute(RerouteAction),
    Abandon,
}

impl ResolutionChoice {
    pub fn label(&self) -> &'static str {
        match self {
            ResolutionChoice::Retry => "retry",
            ResolutionChoice::Reroute(_) => "reroute",
            ResolutionChoice::Abandon => "abandon",
        }
    }
}

/// A decided resolution plus the rationale for the branch taken.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionAction {
    pub choice: ResolutionChoice,
    pub rationale: String,
}

impl ResolutionAction {
    pub fn retry(rationale: impl Into<String>) -> Self {
        ResolutionAction {
            choice: ResolutionChoice::Retry,
            rationale: rationale.into(),
        }
    }

    pub fn reroute(action: RerouteAction, rationale: impl Into<String>) -> Self {
        ResolutionAction {
            choice: ResolutionChoice::Reroute(action),
            rationale: rationale.into(),
        }
    }

    pub fn abandon(rationale: impl Into<String>) -> Self {
        ResolutionAction {
            choice: ResolutionChoice::Abandon,
            rationale: rationale.into(),
        }
    }
}

/// Node template for an insertion recipe: everything but the id, which is
/// generated at application time to stay unique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeTemplate {
    pub tool: String,
    pub method: String,
    pub endpoint: String,
    #[serde(default)]
    pub params: Vec<ParamBinding>,
    pub expected_outputs: Vec<String>,
}

/// Recipe: when `tool` fails with `missing_param` unresolvable, insert a
/// predecessor from `node_template` and bind the missing parameters it
/// provides.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertionRecipe {
    pub tool: String,
    pub missing_param: String,
    pub node_template: NodeTemplate,
}

/// Reroute configuration: alternative tools per tool, plus insertion
/// recipes for missing parameters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReroutePolicy {
    #[serde(default)]
    pub alternatives: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub insertion_recipes: Vec<InsertionRecipe>,
}

impl ReroutePolicy {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    fn recipe_for(&self, tool: &str, missing_param: &str) -> Option<&InsertionRecipe> {
        self.insertion_recipes
            .iter()
            .find(|r| r.tool == tool && r.missing_param == missing_param)
    }
}

/// External override consulted before the decision ladder.
pub trait AssistanceHook: Send + Sync {
    /// Return `Some` to preempt the ladder with a custom resolution.
    fn decide(
        &self,
        request: &AssistanceRequest,
        blueprint: &ExecutionBlueprint,
    ) -> Option<ResolutionAction>;
}

/// Codes worth retrying: transient call failures and stochastic outputs.
fn is_retryable(code: StatusCode) -> bool {
    matches!(
        code,
        StatusCode::ToolCallFailure
            | StatusCode::IncompleteInformation
            | StatusCode::WrongInformation
    )
}

/// The fault-tolerance agent.
pub struct FaultHandler {
    policy: ReroutePolicy,
    registry: Arc<ToolRegistry>,
    hook: Option<Arc<dyn AssistanceHook>>,
}

impl FaultHandler {
    pub fn new(policy: ReroutePolicy, registry: Arc<ToolRegistry>) -> Self {
        FaultHandler {
            policy,
            registry,
            hook: None,
        }
    }

    pub fn with_hook(mut self, hook: Arc<dyn AssistanceHook>) -> Self {
        self.hook = Some(hook);
        self
    }

    /// Decide a resolution for one assistance request.
    ///
    /// The ladder, in order: (1) retry while budget remains and the code is
    /// transient (604/605/607); (2) for 601, apply an insertion recipe that
    /// covers a missing parameter; (3) substitute the first registered
    /// alternative tool; (4) abandon. The rationale names the branch taken.
    pub fn handle(
        &self,
        request: &AssistanceRequest,
        blueprint: &ExecutionBlueprint,
    ) -> ResolutionAction {
        if let Some(hook) = &self.hook {
            if let Some(action) = hook.decide(request, blueprint) {
                return action;
            }
        }
        let Some(node) = blueprint.node(&request.error_node) else {
            return ResolutionAction::abandon(format!(
                "error node `{}` is not in the blueprint",
                request.error_node
            ));
        };

        if node.retries_remaining > 0 && is_retryable(request.error) {
            return ResolutionAction::retry(format!(
                "{} is retryable and {} retries remain",
                request.error, node.retries_remaining
            ));
        }

        if request.error == StatusCode::MissingRequiredParameters {
            if let Some(action) = self.try_insertion(node, blueprint) {
                return action;
            }
        }

        if let Some(action) = self.try_substitution(node) {
            return action;
        }

        ResolutionAction::abandon(format!(
            "no retries, recipes, or alternatives apply to {} on `{}`",
            request.error, node.tool
        ))
    }

    /// Branch 2: insert a recipe predecessor covering a missing parameter.
    fn try_insertion(
        &self,
        node: &BlueprintNode,
        blueprint: &ExecutionBlueprint,
    ) -> Option<ResolutionAction> {
        let missing = self.missing_required_params(node, blueprint);
        for param in &missing {
            let Some(recipe) = self.policy.recipe_for(&node.tool, param) else {
                continue;
            };
            if self.registry.schema(&recipe.node_template.tool).is_none() {
                log::warn!(
                    "insertion recipe for ({}, {}) names unregistered tool `{}`; skipping",
                    node.tool,
                    param,
                    recipe.node_template.tool
                );
                continue;
            }
            let inserted_id = unique_node_id(blueprint, &node.id);
            let template = &recipe.node_template;
            let inserted = BlueprintNode {
                id: inserted_id.clone(),
                subtask: node.subtask.clone(),
                tool: template.tool.clone(),
                method: template.method.clone(),
                endpoint: template.endpoint.clone(),
                params: template.params.clone(),
                expected_outputs: template.expected_outputs.clone(),
                status: crate::blueprint::NodeStatus::Pending,
                retries_remaining: crate::blueprint::DEFAULT_RETRY_BUDGET,
                last_error: None,
            };
            // Re-bind every missing parameter the inserted node provides;
            // keep all other bindings as they are.
            let mut params: Vec<ParamBinding> = node
                .params
                .iter()
                .filter(|b| !missing.contains(&b.name) || !template.expected_outputs.contains(&b.name))
                .cloned()
                .collect();
            for covered in missing.iter().filter(|m| template.expected_outputs.contains(m)) {
                params.retain(|b| &b.name != covered);
                params.push(ParamBinding::dependency(
                    covered.clone(),
                    inserted_id.clone(),
                    covered.clone(),
                ));
            }
            return Some(ResolutionAction::reroute(
                RerouteAction {
                    tool: node.tool.clone(),
                    method: node.method.clone(),
                    endpoint: node.endpoint.clone(),
                    params,
                    inserted: Some(inserted),
                },
                format!(
                    "insert `{}` ({}) to obtain missing parameter `{}`",
                    inserted_id, template.tool, param
                ),
            ));
        }
        None
    }

    /// Branch 3: substitute the first registered alternative tool.
    fn try_substitution(&self, node: &BlueprintNode) -> Option<ResolutionAction> {
        let alternatives = self.policy.alternatives.get(&node.tool)?;
        for substitute in alternatives {
            let Some(schema) = self.registry.schema(substitute) else {
                continue;
            };
            let endpoint = if schema.endpoint(&node.endpoint).is_some() {
                node.endpoint.clone()
            } else {
                schema.endpoints.first()?.id.clone()
            };
            return Some(ResolutionAction::reroute(
                RerouteAction {
                    tool: substitute.clone(),
                    method: node.method.clone(),
                    endpoint,
                    params: node.params.clone(),
                    inserted: None,
                },
                format!("substitute tool `{}` for `{}`", substitute, node.tool),
            ));
        }
        None
    }

    /// Required parameters of the node's endpoint that cannot currently be
    /// resolved to a non-empty value, ascending by name.
    fn missing_required_params(
        &self,
        node: &BlueprintNode,
        blueprint: &ExecutionBlueprint,
    ) -> Vec<String> {
        let Some(schema) = self.registry.schema(&node.tool) else {
            return Vec::new();
        };
        let Some(endpoint) = schema.endpoint(&node.endpoint) else {
            return Vec::new();
        };
        let mut missing = Vec::new();
        for required in &endpoint.required {
            let resolvable = node.params.iter().any(|binding| {
                if &binding.name != required {
                    return false;
                }
                match &binding.origin {
                    BindingOrigin::Literal { value } => !value.is_empty(),
                    BindingOrigin::Dependency { source } => blueprint
                        .stored_output(&node.id, &source.output)
                        .or_else(|| blueprint.stored_output(&source.node, &source.output))
                        .is_some_and(|v| !v.is_empty()),
                }
            });
            if !resolvable {
                missing.push(required.clone());
            }
        }
        missing.sort();
        missing
    }
}

/// First id of the form `{base}.fix{k}` not yet used in the blueprint.
fn unique_node_id(blueprint: &ExecutionBlueprint, base: &NodeId) -> NodeId {
    for k in 1.. {
        let candidate = format!("{base}.fix{k}");
        if blueprint.node(&candidate).is_none() {
            return candidate;
        }
    }
    unreachable!("some counter is always free")
}
