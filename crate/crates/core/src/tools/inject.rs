//! Fault-injection harness: wraps adapters so scripted failures can be
//! forced at specific (node or tool, attempt) points.
//!
//! Each behavior drives one error path end to end: `Throw` and `Timeout`
//! surface as 604, `EmptyPayload` as 605, `DropField` as 605 or 606
//! depending on which consumer needed the field, and `GarbagePayload` as
//! 607 when a relevance validator recognizes the marker.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{CallCtx, ToolAdapter, ToolError, ToolSchema};
use crate::blueprint::NodeId;
use crate::executor::RelevanceCheck;
use crate::protocol::AgentRequest;

/// Marker embedded in garbage payloads; [`MarkerRelevance`] rejects it.
pub const GARBAGE_MARKER: &str = "!!GARBAGE!!";

/// What to force when a plan entry matches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "behavior", rename_all = "snake_case")]
pub enum FaultBehavior {
    /// Fail the call outright.
    Throw,
    /// Stall past the per-node timeout before answering.
    Timeout,
    /// Return an empty payload.
    EmptyPayload,
    /// Delegate, then remove one field from a JSON-object payload.
    DropField { field: String },
    /// Return marked garbage instead of delegating.
    GarbagePayload,
}

/// One scripted fault: fires when the target (node id or tool name) runs
/// its `attempt`-th try.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultEntry {
    pub target: String,
    pub attempt: u32,
    #[serde(flatten)]
    pub behavior: FaultBehavior,
}

/// A scripted fault schedule plus the seed that generated it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultPlan {
    #[serde(default)]
    pub entries: Vec<FaultEntry>,
    #[serde(default)]
    pub seed: u64,
}

impl FaultPlan {
    pub fn empty() -> Self {
        FaultPlan::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self, ToolError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ToolError::new(format!("cannot read {}: {e}", path.display())))?;
        let plan: FaultPlan = serde_json::from_str(&text)
            .map_err(|e| ToolError::new(format!("bad fault plan {}: {e}", path.display())))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), ToolError> {
        for entry in &self.entries {
            if entry.attempt == 0 {
                return Err(ToolError::new(format!(
                    "fault entry for `{}` has attempt 0; attempts are 1-based",
                    entry.target
                )));
            }
        }
        Ok(())
    }

    /// Seeded transient schedule: each node independently gets a first-
    /// attempt `Throw` with the given probability.
    pub fn random_transient(seed: u64, nodes: &[NodeId], probability: f64) -> Self {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let entries = nodes
            .iter()
            .filter(|_| rng.gen_bool(probability))
            .map(|node| FaultEntry {
                target: node.clone(),
                attempt: 1,
                behavior: FaultBehavior::Throw,
            })
            .collect();
        FaultPlan { entries, seed }
    }

    /// The behavior scheduled for this (node, tool, attempt), if any.
    pub fn matched(&self, node: &str, tool: &str, attempt: u32) -> Option<&FaultBehavior> {
        self.entries
            .iter()
            .find(|e| e.attempt == attempt && (e.target == node || e.target == tool))
            .map(|e| &e.behavior)
    }

    pub fn has_garbage(&self) -> bool {
        self.entries
            .iter()
            .any(|e| matches!(e.behavior, FaultBehavior::GarbagePayload))
    }
}

/// Adapter wrapper that consults a fault plan before delegating.
pub struct FaultInjector {
    inner: Arc<dyn ToolAdapter>,
    plan: FaultPlan,
}

/// Wrap `adapter` so that `plan` entries preempt matching calls. An empty
/// plan wrapper is observationally identical to the bare adapter.
pub fn inject(plan: FaultPlan, adapter: Arc<dyn ToolAdapter>) -> Arc<dyn ToolAdapter> {
    Arc::new(FaultInjector {
        inner: adapter,
        plan,
    })
}

impl ToolAdapter for FaultInjector {
    fn schema(&self) -> &ToolSchema {
        self.inner.schema()
    }

    fn call(&self, request: &AgentRequest, ctx: &CallCtx) -> Result<String, ToolError> {
        let tool = &self.inner.schema().name;
        match self.plan.matched(&ctx.node, tool, ctx.attempt) {
            None => self.inner.call(request, ctx),
            Some(FaultBehavior::Throw) => Err(ToolError::new(format!(
                "injected fault: forced failure on attempt {}",
                ctx.attempt
            ))),
            Some(FaultBehavior::Timeout) => {
                std::thread::sleep(ctx.timeout + std::time::Duration::from_millis(50));
                self.inner.call(request, ctx)
            }
            Some(FaultBehavior::EmptyPayload) => Ok(String::new()),
            Some(FaultBehavior::DropField { field }) => {
                let payload = self.inner.call(request, ctx)?;
                Ok(drop_field(&payload, field))
            }
            Some(FaultBehavior::GarbagePayload) => {
                Ok(format!("{GARBAGE_MARKER} unrelated noise payload"))
            }
        }
    }
}

/// Remove a field from a JSON-object payload; anything else passes through.
fn drop_field(payload: &str, field: &str) -> String {
    match serde_json::from_str::<serde_json::Value>(payload) {
        Ok(serde_json::Value::Object(mut map)) => {
            map.shift_remove(field);
            serde_json::Value::Object(map).to_string()
        }
        _ => payload.to_string(),
    }
}

/// Relevance validator that rejects payloads carrying the garbage marker.
pub struct MarkerRelevance;

impl RelevanceCheck for MarkerRelevance {
    fn is_relevant(&self, _node: &str, payload: &str) -> bool {
        !payload.contains(GARBAGE_MARKER)
    }
}
