use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::RunConfig;
use crate::error::Result;
use crate::metrics::TextStats;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// What happened in one pass of the refinement loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub caption_prompt: String,
    pub caption: String,
    /// A feedback update queued by the previous iteration was applied
    /// before this iteration's selection.
    pub feedback_applied: bool,
    /// Fingerprint of θ used for this iteration's selection.
    pub policy_fingerprint: String,
    pub catalog_size_before: usize,
    pub selected_action: usize,
    pub selected_prompt_id: String,
    pub selection_probability: f64,
    pub reward: f64,
    pub feedback_score: f64,
    pub rag_doc_id: String,
    pub rag_preferred_prompt_id: String,
    pub rag_preferred_score: f64,
    pub objective: f64,
    /// Retrieval queued a feedback update for the next iteration.
    pub feedback_triggered: bool,
    pub retained_prompt_ids: Vec<String>,
    pub catalog_size_after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextSummary {
    pub initial: TextStats,
    #[serde(rename = "final")]
    pub refined: TextStats,
    pub semantic_similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub schema_version: u32,
    pub artifact_version: String,
    pub image: String,
    pub image_digest: String,
    pub seed: u64,
    pub config: RunConfig,
    pub initial_caption: String,
    pub iterations: Vec<IterationRecord>,
    pub final_text: Option<String>,
    pub text_metrics: Option<TextSummary>,
    pub complete: bool,
    pub error: Option<String>,
}

impl PipelineReport {
    /// Canonical JSON: sorted keys, floats at 17 significant digits.
    pub fn to_canonical_json(&self) -> Result<String> {
        to_canonical_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Serializes `value` with sorted object keys and every float written as
/// `{:.16e}` (17 significant digits, enough to round-trip any f64), so
/// equal values always produce identical bytes.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let value = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&value, &mut out);
    out.push('\n');
    Ok(out)
}

fn write_value(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else {
                let f = n.as_f64().unwrap_or(f64::NAN);
                out.push_str(&format!("{f:.16e}"));
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(key.clone()).to_string());
                out.push(':');
                write_value(&map[key], out);
            }
            out.push('}');
        }
    }
}
