//! Runtime for executing multi-agent workflows as persistent dependency
//! DAGs under structured agent context protocols.
//!
//! A complex goal is decomposed into tool invocations arranged as an
//! execution blueprint: an acyclic dependency graph that doubles as the
//! store of validated intermediate outputs. The scheduler walks the graph
//! in dependency order, dispatching nodes to concurrent executors that run
//! each one through three phases (input preparation, tool call, output
//! validation). Failures carry staged status codes and escalate as
//! structured assistance requests, which a fault handler resolves by
//! retrying, rerouting (possibly inserting a new predecessor step), or
//! abandoning the node so only its descendants are blocked.
//!
//! Modules:
//! - [`protocol`]: message schemas, status codes, canonical encoding
//! - [`blueprint`]: the DAG, output store, and structural mutation
//! - [`executor`]: the three-phase node runner
//! - [`scheduler`]: ready-set computation, dispatch, traces, reports
//! - [`fault`]: the resolution decision ladder and reroute policies
//! - [`tools`]: adapter registry, built-in mocks, fault injection, HTTP
//! - [`planner`]: blueprint files, task-spec compilation, plan adapters
//! - [`coordinator`]: deliverable rendering from stored outputs
//!
//! ```
//! use std::sync::Arc;
//! use acp_core::blueprint::{BlueprintNode, ExecutionBlueprint, ParamBinding};
//! use acp_core::fault::{FaultHandler, ReroutePolicy};
//! use acp_core::scheduler::{ExecutionMode, ExecutionPolicy, Runner};
//! use acp_core::tools::{mock::CalculatorTool, ToolRegistry};
//!
//! // Two calculator calls, the second consuming the first's result.
//! let first = BlueprintNode::new("calc.1", "calculator")
//!     .with_endpoint("FUNCTION", "evaluate")
//!     .with_param(ParamBinding::literal("query", "6*7"))
//!     .with_outputs(&["result"]);
//! let second = BlueprintNode::new("calc.2", "calculator")
//!     .with_endpoint("FUNCTION", "evaluate")
//!     .with_param(ParamBinding::dependency("query", "calc.1", "result"))
//!     .with_outputs(&["result"]);
//! let blueprint = ExecutionBlueprint::build(
//!     "chain two calculations",
//!     vec![first, second],
//!     vec![("calc.1".to_string(), "calc.2".to_string())],
//! )?;
//!
//! let mut registry = ToolRegistry::new();
//! registry.register(Arc::new(CalculatorTool::new()))?;
//! let registry = Arc::new(registry);
//!
//! let handler = FaultHandler::new(ReroutePolicy::default(), Arc::clone(&registry));
//! let policy = ExecutionPolicy::new(ExecutionMode::FullAcp).with_workers(2);
//! let outcome = Runner::new(registry, policy, handler).run(blueprint)?;
//!
//! assert_eq!(outcome.report.completion_rate, 1.0);
//! assert_eq!(outcome.blueprint.stored_output("calc.2", "result"), Some("42"));
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod blueprint;
pub mod coordinator;
pub mod executor;
pub mod fault;
pub mod planner;
pub mod protocol;
pub mod scheduler;
pub mod tools;

pub use blueprint::{BlueprintNode, ExecutionBlueprint, NodeId, NodeStatus, ParamBinding};
pub use fault::{FaultHandler, ResolutionAction, ReroutePolicy};
pub use protocol::{
    AgentRequest, AgentResponse, AssistanceRequest, Message, StatusCode,
};
pub use scheduler::{
    ExecutionMode, ExecutionPolicy, ExecutionReport, ExecutionTrace, RunOutcome, Runner,
};
pub use tools::ToolRegistry;
