//! Tool adapters: schemas, the registry, deterministic mocks, fault
//! injection, and an HTTP adapter for real external APIs.

pub mod http;
pub mod inject;
pub mod mock;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blueprint::NodeId;
use crate::protocol::AgentRequest;

/// One invocable endpoint of a tool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointSchema {
    pub id: String,
    #[serde(default)]
    pub required: Vec<String>,
    #[serde(default)]
    pub optional: Vec<String>,
    /// Declared output field names. Two or more names means the payload is
    /// a JSON object and outputs are extracted by field; zero or one means
    /// the whole payload is the single output.
    #[serde(default)]
    pub outputs: Vec<String>,
}

/// What a tool can do: its endpoints and their parameter contracts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub endpoints: Vec<EndpointSchema>,
    /// Adapters that are not safe for concurrent invocation declare this;
    /// the registry serializes their calls.
    #[serde(default)]
    pub single_flight: bool,
}

impl ToolSchema {
    pub fn endpoint(&self, id: &str) -> Option<&EndpointSchema> {
        self.endpoints.iter().find(|e| e.id == id)
    }

    fn validate(&self) -> Result<(), ToolsError> {
        let mut seen = std::collections::BTreeSet::new();
        for endpoint in &self.endpoints {
            if !seen.insert(endpoint.id.as_str()) {
                return Err(ToolsError::InvalidSchema {
                    tool: self.name.clone(),
                    reason: format!("duplicate endpoint id `{}`", endpoint.id),
                });
            }
            if let Some(overlap) = endpoint
                .required
                .iter()
                .find(|r| endpoint.optional.contains(r))
            {
                return Err(ToolsError::InvalidSchema {
                    tool: self.name.clone(),
                    reason: format!(
                        "endpoint `{}` lists `{overlap}` as both required and optional",
                        endpoint.id
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Per-invocation context handed to adapters alongside the request.
#[derive(Debug, Clone)]
pub struct CallCtx {
    pub node: NodeId,
    /// 1-based attempt counter for the node.
    pub attempt: u32,
    /// The enclosing per-node timeout, so misbehaving adapters (and the
    /// fault injector's timeout behavior) can size their delays.
    pub timeout: Duration,
}

/// Adapter failure; surfaces to the runtime as a 604 escalation.
#[derive(Debug, Clone, Error)]
#[error("{message}")]
pub struct ToolError {
    pub message: String,
}

impl ToolError {
    pub fn new(message: impl Into<String>) -> Self {
        ToolError {
            message: message.into(),
        }
    }
}

/// A tool backend: exposes its schema and executes prepared requests.
pub trait ToolAdapter: Send + Sync {
    fn schema(&self) -> &ToolSchema;
    fn call(&self, request: &AgentRequest, ctx: &CallCtx) -> Result<String, ToolError>;
}

/// Registry errors.
#[derive(Debug, Clone, Error)]
pub enum ToolsError {
    #[error("tool `{name}` is already registered")]
    DuplicateTool { name: String },
    #[error("tool `{tool}` has an invalid schema: {reason}")]
    InvalidSchema { tool: String, reason: String },
    #[error("no tool named `{name}` is registered")]
    UnknownTool { name: String },
}

struct RegisteredTool {
    adapter: Arc<dyn ToolAdapter>,
    /// Present when the schema declares single-flight; serializes calls.
    flight: Option<Mutex<()>>,
}

/// Name-keyed registry of tool adapters.
#[derive(Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, RegisteredTool>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register an adapter under its schema name. Duplicate names and
    /// invalid schemas are rejected.
    pub fn register(&mut self, adapter: Arc<dyn ToolAdapter>) -> Result<(), ToolsError> {
        let schema = adapter.schema().clone();
        schema.validate()?;
        if self.tools.contains_key(&schema.name) {
            return Err(ToolsError::DuplicateTool { name: schema.name });
        }
        let flight = schema.single_flight.then(|| Mutex::new(()));
        self.tools
            .insert(schema.name.clone(), RegisteredTool { adapter, flight });
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tools.contains_key(name)
    }

    pub fn adapter(&self, name: &str) -> Option<&Arc<dyn ToolAdapter>> {
        self.tools.get(name).map(|t| &t.adapter)
    }

    pub fn schema(&self, name: &str) -> Option<&ToolSchema> {
        self.tools.get(name).map(|t| t.adapter.schema())
    }

    pub fn tool_names(&self) -> impl Iterator<Item = &String> {
        self.tools.keys()
    }

    /// Invoke a registered tool, honoring its single-flight declaration.
    pub fn invoke(
        &self,
        name: &str,
        request: &AgentRequest,
        ctx: &CallCtx,
    ) -> Result<String, ToolError> {
        let tool = self.tools.get(name).ok_or_else(|| ToolError {
            message: format!("no tool named `{name}` is registered"),
        })?;
        match &tool.flight {
            Some(lock) => {
                let _guard = lock.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
                tool.adapter.call(request, ctx)
            }
            None => tool.adapter.call(request, ctx),
        }
    }
}
