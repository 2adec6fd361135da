//! Message schemas and the status-code taxonomy.
//!
//! Three message kinds travel between the scheduler, executors, and the
//! fault handler: [`AgentRequest`] (a prepared tool invocation),
//! [`AgentResponse`] (validated tool output), and [`AssistanceRequest`]
//! (a structured escalation of a failure). All three share one canonical
//! wire encoding: a JSON object with a `kind` tag, fixed field names, and
//! unknown fields rejected. Encoding is deterministic — the same message
//! value always produces byte-identical text.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pipeline stage a status code belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Input preparation: building the request from bindings and the store.
    Request,
    /// Dispatching the request to the external tool.
    ToolCall,
    /// Extracting and validating outputs from the raw payload.
    OutputExtraction,
    /// Not an error stage; the 200 code only.
    Success,
}

/// Status codes: 200 plus the seven staged error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u16", try_from = "u16")]
#[repr(u16)]
pub enum StatusCode {
    Ok = 200,
    MissingRequiredParameters = 601,
    WrongStepDetails = 602,
    InvalidParameterUsage = 603,
    ToolCallFailure = 604,
    IncompleteInformation = 605,
    DependencyIncompleteInformation = 606,
    WrongInformation = 607,
}

impl StatusCode {
    /// Every member of the code table, in ascending numeric order.
    pub const ALL: [StatusCode; 8] = [
        StatusCode::Ok,
        StatusCode::MissingRequiredParameters,
        StatusCode::WrongStepDetails,
        StatusCode::InvalidParameterUsage,
        StatusCode::ToolCallFailure,
        StatusCode::IncompleteInformation,
        StatusCode::DependencyIncompleteInformation,
        StatusCode::WrongInformation,
    ];

    pub fn code(self) -> u16 {
        self as u16
    }

    /// Short identifier, matching the code table.
    pub fn name(self) -> &'static str {
        match self {
            StatusCode::Ok => "OK",
            StatusCode::MissingRequiredParameters => "MISSING_REQUIRED_PARAMETERS",
            StatusCode::WrongStepDetails => "WRONG_STEP_DETAILS",
            StatusCode::InvalidParameterUsage => "INVALID_PARAMETER_USAGE",
            StatusCode::ToolCallFailure => "TOOL_CALL_FAILURE",
            StatusCode::IncompleteInformation => "INCOMPLETE_INFORMATION",
            StatusCode::DependencyIncompleteInformation => "DEPENDENCY_INCOMPLETE_INFORMATION",
            StatusCode::WrongInformation => "WRONG_INFORMATION",
        }
    }

    /// Which pipeline stage raises this code.
    pub fn stage(self) -> Stage {
        match self {
            StatusCode::Ok => Stage::Success,
            StatusCode::MissingRequiredParameters
            | StatusCode::WrongStepDetails
            | StatusCode::InvalidParameterUsage => Stage::Request,
            StatusCode::ToolCallFailure => Stage::ToolCall,
            StatusCode::IncompleteInformation
            | StatusCode::DependencyIncompleteInformation
            | StatusCode::WrongInformation => Stage::OutputExtraction,
        }
    }

    pub fn is_error(self) -> bool {
        self != StatusCode::Ok
    }
}

impl From<StatusCode> for u16 {
    fn from(code: StatusCode) -> u16 {
        code as u16
    }
}

impl TryFrom<u16> for StatusCode {
    type Error = String;

    fn try_from(value: u16) -> Result<Self, String> {
        StatusCode::ALL
            .iter()
            .copied()
            .find(|c| c.code() == value)
            .ok_or_else(|| format!("unknown status code {value}"))
    }
}

impl std::fmt::Display for StatusCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}", self.code(), self.name())
    }
}

/// One resolved body parameter of an [`AgentRequest`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyParam {
    pub name: String,
    pub value: String,
}

/// A prepared tool invocation: method, endpoint, headers, and resolved body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentRequest {
    /// `FUNCTION` for in-process adapters, or an HTTP verb.
    pub method: String,
    /// Function name or URL path.
    pub endpoint: String,
    /// Ordered header pairs. Live requests carry these verbatim; traces
    /// redact values whose names match the secret-pattern list.
    pub headers: IndexMap<String, String>,
    pub body: Vec<BodyParam>,
}

impl AgentRequest {
    pub fn new(method: impl Into<String>, endpoint: impl Into<String>) -> Self {
        AgentRequest {
            method: method.into(),
            endpoint: endpoint.into(),
            headers: IndexMap::new(),
            body: Vec::new(),
        }
    }

    pub fn with_param(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.body.push(BodyParam {
            name: name.into(),
            value: value.into(),
        });
        self
    }

    pub fn param(&self, name: &str) -> Option<&str> {
        self.body
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.value.as_str())
    }

    fn validate(&self) -> Result<(), ProtocolError> {
        if self.endpoint.is_empty() {
            return Err(violation("endpoint", "must be non-empty"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for param in &self.body {
            if !seen.insert(param.name.as_str()) {
                return Err(violation(
                    "body",
                    format!("duplicate parameter name `{}`", param.name),
                ));
            }
        }
        Ok(())
    }
}

/// A named output extracted from a tool payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputVariable {
    pub name: String,
    pub content: String,
}

/// A value reshaped for a specific downstream node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DependentInputVariable {
    pub name: String,
    pub target_node: String,
    pub declared_type: String,
    pub content: String,
}

/// Validated tool output: a status code plus extracted variables.
///
/// A 200 response must carry at least one output; error codes never travel
/// in responses (failures escalate through [`AssistanceRequest`] instead),
/// so non-200 responses must be empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentResponse {
    pub status: StatusCode,
    pub outputs: Vec<OutputVariable>,
    pub dependent_inputs: Vec<DependentInputVariable>,
}

impl AgentResponse {
    /// Build a 200 response. `outputs` must be non-empty.
    pub fn success(
        outputs: Vec<OutputVariable>,
        dependent_inputs: Vec<DependentInputVariable>,
    ) -> Result<Self, ProtocolError> {
        let response = AgentResponse {
            status: StatusCode::Ok,
            outputs,
            dependent_inputs,
        };
        response.validate()?;
        Ok(response)
    }

    fn validate(&self) -> Result<(), ProtocolError> {
        if self.status == StatusCode::Ok {
            if self.outputs.is_empty() {
                return Err(violation("outputs", "200 response must carry outputs"));
            }
        } else if !self.outputs.is_empty() || !self.dependent_inputs.is_empty() {
            return Err(violation(
                "outputs",
                "non-200 response must carry no outputs or dependent inputs",
            ));
        }
        for (i, output) in self.outputs.iter().enumerate() {
            if output.name.is_empty() {
                return Err(violation(format!("outputs[{i}].name"), "must be non-empty"));
            }
        }
        for (i, dep) in self.dependent_inputs.iter().enumerate() {
            if dep.name.is_empty() {
                return Err(violation(
                    format!("dependent_inputs[{i}].name"),
                    "must be non-empty",
                ));
            }
            if dep.target_node.is_empty() {
                return Err(violation(
                    format!("dependent_inputs[{i}].target_node"),
                    "must be non-empty",
                ));
            }
        }
        Ok(())
    }
}

/// One completed tool noted in a [`StatusUpdate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompletedTool {
    pub tool: String,
    pub summary: String,
}

/// Concise progress report embedded in every assistance request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatusUpdate {
    pub previous_progress: String,
    pub current_progress: String,
    pub current_node: String,
    pub completed_tools: Vec<CompletedTool>,
    pub encountered_issues: String,
}

/// The three resolution paths an escalation may suggest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestedAction {
    Retry,
    Reroute,
    Abandon,
}

impl std::fmt::Display for SuggestedAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SuggestedAction::Retry => write!(f, "retry"),
            SuggestedAction::Reroute => write!(f, "reroute"),
            SuggestedAction::Abandon => write!(f, "abandon"),
        }
    }
}

/// A suggested resolution plus free-text rationale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuggestedResolution {
    pub action: SuggestedAction,
    pub rationale: String,
}

/// Structured escalation of a failure, posted instead of a response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssistanceRequest {
    /// The staged error code; never 200.
    pub error: StatusCode,
    pub error_node: String,
    pub error_tool: String,
    pub description: String,
    pub relevant_context: String,
    pub suggested_resolution: SuggestedResolution,
    pub status_update: StatusUpdate,
}

impl AssistanceRequest {
    fn validate(&self) -> Result<(), ProtocolError> {
        if self.error.stage() == Stage::Success {
            return Err(violation("error", "must be an error code, not 200"));
        }
        if self.error_node.is_empty() {
            return Err(violation("error_node", "must be non-empty"));
        }
        if self.error_node != self.status_update.current_node {
            return Err(violation(
                "error_node",
                format!(
                    "must equal status_update.current_node (`{}` != `{}`)",
                    self.error_node, self.status_update.current_node
                ),
            ));
        }
        Ok(())
    }
}

/// Any of the three message kinds, as decoded off the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Request(AgentRequest),
    Response(AgentResponse),
    Assistance(AssistanceRequest),
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Request(_) => KIND_REQUEST,
            Message::Response(_) => KIND_RESPONSE,
            Message::Assistance(_) => KIND_ASSISTANCE,
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        match self {
            Message::Request(m) => m.validate(),
            Message::Response(m) => m.validate(),
            Message::Assistance(m) => m.validate(),
        }
    }
}

const KIND_REQUEST: &str = "AGENT_REQUEST";
const KIND_RESPONSE: &str = "AGENT_RESPONSE";
const KIND_ASSISTANCE: &str = "ASSISTANCE_REQUEST";

/// Errors raised while decoding wire text.
#[derive(Debug, Clone, Error)]
pub enum ProtocolError {
    /// The text is not parseable at all.
    #[error("malformed message: {0}")]
    MalformedMessage(String),
    /// The text parsed but violates the schema or a type invariant.
    #[error("schema violation at `{path}`: {reason}")]
    SchemaViolation { path: String, reason: String },
}

fn violation(path: impl Into<String>, reason: impl Into<String>) -> ProtocolError {
    ProtocolError::SchemaViolation {
        path: path.into(),
        reason: reason.into(),
    }
}

/// Encode a message to its canonical wire text.
///
/// The encoding is a pure function of the message value: field order is
/// fixed, the `kind` tag always comes first, and no whitespace varies.
pub fn encode_message(msg: &Message) -> String {
    let (kind, value) = match msg {
        Message::Request(m) => (KIND_REQUEST, serde_json::to_value(m)),
        Message::Response(m) => (KIND_RESPONSE, serde_json::to_value(m)),
        Message::Assistance(m) => (KIND_ASSISTANCE, serde_json::to_value(m)),
    };
    let value = value.expect("message serialization cannot fail");
    let mut map = serde_json::Map::new();
    map.insert("kind".to_string(), serde_json::Value::String(kind.to_string()));
    if let serde_json::Value::Object(fields) = value {
        map.extend(fields);
    }
    serde_json::to_string(&serde_json::Value::Object(map))
        .expect("message serialization cannot fail")
}

/// Decode wire text back into a message, enforcing schema and invariants.
pub fn decode_message(text: &str) -> Result<Message, ProtocolError> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| ProtocolError::MalformedMessage(e.to_string()))?;
    let serde_json::Value::Object(mut map) = value else {
        return Err(ProtocolError::MalformedMessage(
            "top-level value must be a JSON object".to_string(),
        ));
    };
    let kind = match map.shift_remove("kind") {
        Some(serde_json::Value::String(k)) => k,
        Some(_) => return Err(violation("kind", "must be a string")),
        None => return Err(violation("kind", "missing message kind")),
    };
    let rest = serde_json::Value::Object(map);
    let message = match kind.as_str() {
        KIND_REQUEST => Message::Request(from_value(rest)?),
        KIND_RESPONSE => Message::Response(from_value(rest)?),
        KIND_ASSISTANCE => Message::Assistance(from_value(rest)?),
        other => return Err(violation("kind", format!("unknown message kind `{other}`"))),
    };
    message.validate()?;
    Ok(message)
}

fn from_value<T: serde::de::DeserializeOwned>(value: serde_json::Value) -> Result<T, ProtocolError> {
    let mut track = serde_path_to_error::Track::new();
    let de = serde_path_to_error::Deserializer::new(value, &mut track);
    T::deserialize(de).map_err(|e| ProtocolError::SchemaViolation {
        path: track.path().to_string(),
        reason: e.to_string(),
    })
}

/// Secret-pattern list used when rendering request parameters into traces.
///
/// Values whose names end with one of the suffixes are replaced by
/// `<redacted>` in trace detail text; live requests are never redacted.
#[derive(Debug, Clone)]
pub struct Redaction {
    pub suffixes: Vec<String>,
}

impl Default for Redaction {
    fn default() -> Self {
        Redaction {
            suffixes: vec!["_key".to_string(), "_token".to_string()],
        }
    }
}

impl Redaction {
    pub fn is_secret(&self, name: &str) -> bool {
        let lower = name.to_ascii_lowercase();
        self.suffixes.iter().any(|s| lower.ends_with(s.as_str()))
    }

    /// Render `name=value` pairs with secrets masked, joined by `, `.
    pub fn render_pairs<'a>(
        &self,
        pairs: impl Iterator<Item = (&'a str, &'a str)>,
    ) -> String {
        pairs
            .map(|(name, value)| {
                if self.is_secret(name) {
                    format!("{name}=<redacted>")
                } else {
                    format!("{name}={value}")
                }
            })
            .collect::<Vec<_>>()
            .join(", ")
    }
}
