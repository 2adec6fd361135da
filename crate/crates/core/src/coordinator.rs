//! Final coordination layer: aggregates validated blueprint outputs into a
//! user-facing deliverable.
//!
//! Templates are plain text or markdown with `{{node_id.output_name}}`
//! slots. Since node ids contain dots, the last dot separates the node id
//! from the output name. Slots whose producer failed or was skipped render
//! a marked gap instead of failing the whole deliverable.

use thiserror::Error;

use crate::blueprint::{ExecutionBlueprint, NodeStatus};

#[derive(Debug, Clone, Error)]
pub enum RenderError {
    #[error("template slot `{slot}` references unknown node `{node}`")]
    TemplateSlotUnknownNode { slot: String, node: String },
    #[error("template slot `{slot}` is malformed; expected `node_id.output_name`")]
    MalformedSlot { slot: String },
}

/// Render a deliverable by substituting stored outputs into the template.
///
/// Reads the blueprint only; partial runs render gap markers of the form
/// `[unavailable: node, reason]` where reason is the failing status code
/// or the node's terminal status.
pub fn aggregate(blueprint: &ExecutionBlueprint, template: &str) -> Result<String, RenderError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else {
            // Unterminated braces pass through verbatim.
            out.push_str(&rest[start..]);
            rest = "";
            break;
        };
        let slot = after[..end].trim();
        out.push_str(&resolve_slot(blueprint, slot, true)?);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Extract one output variable as a short answer, or its gap marker.
pub fn answer_extract(blueprint: &ExecutionBlueprint, slot: &str) -> String {
    resolve_slot(blueprint, slot.trim(), false)
        .unwrap_or_else(|_| gap(slot, "unknown"))
}

fn resolve_slot(
    blueprint: &ExecutionBlueprint,
    slot: &str,
    strict: bool,
) -> Result<String, RenderError> {
    let Some((node_id, output)) = slot.rsplit_once('.') else {
        return Err(RenderError::MalformedSlot {
            slot: slot.to_string(),
        });
    };
    let Some(node) = blueprint.node(node_id) else {
        if strict {
            return Err(RenderError::TemplateSlotUnknownNode {
                slot: slot.to_string(),
                node: node_id.to_string(),
            });
        }
        return Ok(gap(node_id, "unknown"));
    };
    match node.status {
        NodeStatus::Succeeded => match blueprint.stored_output(node_id, output) {
            Some(value) => Ok(value.to_string()),
            None => Ok(gap(node_id, &format!("missing output `{output}`"))),
        },
        NodeStatus::Failed => {
            let reason = node
                .last_error
                .map(|code| code.code().to_string())
                .unwrap_or_else(|| "failed".to_string());
            Ok(gap(node_id, &reason))
        }
        status => Ok(gap(node_id, &status.to_string())),
    }
}

fn gap(node: &str, reason: &str) -> String {
    format!("[unavailable: {node}, {reason}]")
}
