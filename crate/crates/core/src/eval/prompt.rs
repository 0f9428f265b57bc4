use alloc::string::String;

use crate::error::{Error, Result};
use crate::knowledge::KnowledgeItem;

/// Marker replaced by the statement under judgment.
pub const PLACEHOLDER: &str = "{S}";

const DEFAULT_RULES: &str = "You are auditing entries for a domain knowledge base. \
Decide whether the statement below is factually correct and would be safe to store. \
Reject statements that are false, unverifiable, self-contradictory or off-topic.\n\n\
Statement: {S}\n\n";

const DEFAULT_SCHEMA_NOTE: &str = "Reply with a single JSON object and nothing else: \
{\"label\": 1 if correct or 0 if incorrect, \"confidence\": a number between 0 and 1}.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    template_text: String,
    output_schema_note: String,
}

impl PromptTemplate {
    pub fn new(template_text: impl Into<String>, output_schema_note: impl Into<String>) -> Result<Self> {
        let template_text = template_text.into();
        match template_text.matches(PLACEHOLDER).count() {
            1 => Ok(Self {
                template_text,
                output_schema_note: output_schema_note.into(),
            }),
            0 => Err(Error::Template(alloc::format!("template has no {PLACEHOLDER} placeholder"))),
            n => Err(Error::Template(alloc::format!("template has {n} {PLACEHOLDER} placeholders, expected one"))),
        }
    }

    pub fn template_text(&self) -> &str {
        &self.template_text
    }

    pub fn output_schema_note(&self) -> &str {
        &self.output_schema_note
    }

    pub fn render(&self, item: &KnowledgeItem) -> String {
        self.template_text.replacen(PLACEHOLDER, item.text(), 1)
    }

    /// Inverse of [`render`](Self::render): recovers the statement from a
    /// prompt built with this template.
    pub fn extract_statement<'p>(&self, prompt: &'p str) -> Option<&'p str> {
        let (prefix, suffix) = self.template_text.split_once(PLACEHOLDER)?;
        if prompt.len() < prefix.len() + suffix.len() {
            return None;
        }
        prompt.strip_prefix(prefix)?.strip_suffix(suffix)
    }
}

impl Default for PromptTemplate {
    /// A generic truthfulness prompt. Deployments should supply their own.
    fn default() -> Self {
        let mut text = String::from(DEFAULT_RULES);
        text.push_str(DEFAULT_SCHEMA_NOTE);
        Self {
            template_text: text,
            output_schema_note: DEFAULT_SCHEMA_NOTE.into(),
        }
    }
}

/// `render_prompt` as a free function.
pub fn render_prompt(template: &PromptTemplate, item: &KnowledgeItem) -> String {
    template.render(item)
}
