//! Prompt templates and rendering. Templates live as plain-text assets
//! with `$name` substitution slots; the repo copies are compiled in as
//! defaults and can be overridden from a directory.

use super::{LlmError, ParticipantRecord};
use std::path::Path;

pub const APPROVAL_TEMPLATE: &str = include_str!("../../assets/prompts/approval_query.txt");
pub const GENERATION_TEMPLATE: &str = include_str!("../../assets/prompts/generation_query.txt");
pub const CONDENSE_TEMPLATE: &str = include_str!("../../assets/prompts/condense.txt");

#[derive(Debug, Clone)]
pub struct PromptAssets {
    pub approval: String,
    pub generation: String,
    pub condense: String,
}

impl Default for PromptAssets {
    fn default() -> Self {
        PromptAssets {
            approval: APPROVAL_TEMPLATE.to_string(),
            generation: GENERATION_TEMPLATE.to_string(),
            condense: CONDENSE_TEMPLATE.to_string(),
        }
    }
}

impl PromptAssets {
    /// Load `approval_query.txt`, `generation_query.txt`, and
    /// `condense.txt` from a directory.
    pub fn from_dir(dir: &Path) -> Result<Self, LlmError> {
        let read = |name: &str| -> Result<String, LlmError> {
            std::fs::read_to_string(dir.join(name))
                .map_err(|e| LlmError::Ingestion(format!("{}/{name}: {e}", dir.display())))
        };
        Ok(PromptAssets {
            approval: read("approval_query.txt")?,
            generation: read("generation_query.txt")?,
            condense: read("condense.txt")?,
        })
    }
}

/// Substitute `$name` slots. Longer names are replaced first so that a
/// slot name that prefixes another cannot corrupt it.
pub fn render_template(template: &str, slots: &[(&str, &str)]) -> String {
    let mut ordered: Vec<&(&str, &str)> = slots.iter().collect();
    ordered.sort_by_key(|(name, _)| std::cmp::Reverse(name.len()));
    let mut out = template.to_string();
    for (name, value) in ordered {
        out = out.replace(&format!("${name}"), value);
    }
    out
}

/// JSON-ish rendering of a participant's free-form question/answer map,
/// preserving question order.
pub fn opinion_dict(participant: &ParticipantRecord) -> String {
    let entries: Vec<String> = participant
        .freeform_responses
        .iter()
        .map(|(q, a)| {
            format!(
                "{}: {}",
                serde_json::to_string(q).expect("string"),
                serde_json::to_string(a).expect("string")
            )
        })
        .collect();
    format!("{{{}}}", entries.join(", "))
}

/// The participant's rated statements (with rating and explanation),
/// followed by the query statement with the rating left open.
pub fn rating_responses(participant: &ParticipantRecord, query_statement: &str) -> String {
    let mut parts: Vec<String> = participant
        .rated_statements
        .iter()
        .map(|r| {
            format!(
                "{}: {{\"choice_number\": {}, \"explanation\": {}}}",
                serde_json::to_string(&rating_question(&r.statement)).expect("string"),
                r.rating,
                serde_json::to_string(&r.explanation).expect("string"),
            )
        })
        .collect();
    parts.push(format!(
        "{}: {{\"choice_number\":",
        serde_json::to_string(&rating_question(query_statement)).expect("string")
    ));
    // truncated mid-dict: the model predicts the rating as the next token
    format!("{{{}", parts.join(", "))
}

fn rating_question(statement: &str) -> String {
    format!(
        "Consider the following statement:\n\"{statement}\"\n\nTo what extent does this \
         statement capture your full opinion regarding chatbot personalization?\nYour choices \
         are:\n0 : not at all\n1 : poorly\n2 : somewhat\n3 : mostly\n4 : perfectly\nBriefly \
         explain your choice."
    )
}

/// Render the approval query for one participant and one statement.
pub fn approval_prompt(
    assets: &PromptAssets,
    participant: &ParticipantRecord,
    statement: &str,
    opinion_text: &str,
) -> String {
    render_template(
        &assets.approval,
        &[
            ("opinion_dict", opinion_text),
            (
                "train_qa_test_q_with_key_str",
                &rating_responses(participant, statement),
            ),
        ],
    )
}

/// Render the generation prompt over a group of participants. Each
/// participant contributes their opinion block (or its condensed summary,
/// when present and the full text would blow the size budget).
pub fn generation_prompt(
    assets: &PromptAssets,
    group: &[&ParticipantRecord],
    char_budget: usize,
) -> String {
    let full: Vec<String> = group
        .iter()
        .map(|p| format!("User {}: {}", p.id, opinion_dict(p)))
        .collect();
    let total: usize = full.iter().map(|s| s.len()).sum();
    let blocks: Vec<String> = if total > char_budget {
        group
            .iter()
            .zip(&full)
            .map(|(p, full_block)| match &p.summary {
                Some(s) => format!("User {}: {}", p.id, s),
                None => full_block.clone(),
            })
            .collect()
    } else {
        full
    };
    render_template(&assets.generation, &[("user_opinions", &blocks.join("\n"))])
}
