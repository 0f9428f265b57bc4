use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::prompt::PromptTemplate;
use crate::error::{Error, Result};
use crate::knowledge::KnowledgeItem;

pub const DEFAULT_RETRIES: usize = 2;

/// A language model answering a rendered prompt with a structured reply.
///
/// Remote clients send only the prompt; the item is passed alongside so that
/// offline oracles can key their behaviour on it.
pub trait LanguageModelClient: Send + Sync {
    fn complete(&self, prompt: &str, item: &KnowledgeItem) -> Result<String>;
}

/// Reliability label `y1` (1 = correct) with self-reported confidence `c1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceVerdict {
    pub y1: u8,
    pub c1: f64,
}

impl ConfidenceVerdict {
    pub fn new(y1: u8, c1: f64) -> Result<Self> {
        if y1 > 1 {
            return Err(Error::MalformedVerdict(alloc::format!("label {y1} outside {{0,1}}")));
        }
        if !c1.is_finite() {
            return Err(Error::MalformedVerdict("confidence is not finite".into()));
        }
        Ok(Self {
            y1,
            c1: c1.clamp(0.0, 1.0),
        })
    }
}

/// Parses `{"label": 0|1, "confidence": x}`, tolerating prose or code fences
/// around the object. Confidence is taken at face value and clamped to [0, 1].
pub fn parse_confidence_reply(reply: &str) -> Result<ConfidenceVerdict> {
    let malformed = |why: &str| Error::MalformedVerdict(why.to_string());
    let start = reply.find('{').ok_or_else(|| malformed("reply has no JSON object"))?;
    let end = reply.rfind('}').ok_or_else(|| malformed("reply has no JSON object"))?;
    if end < start {
        return Err(malformed("reply has no JSON object"));
    }
    let value: Value = serde_json::from_str(&reply[start..=end]).map_err(|e| Error::MalformedVerdict(e.to_string()))?;
    let label = match value.get("label") {
        Some(Value::Number(n)) => n.as_u64().filter(|l| *l <= 1),
        _ => None,
    }
    .ok_or_else(|| malformed("label missing or outside {0,1}"))?;
    let confidence = value
        .get("confidence")
        .and_then(Value::as_f64)
        .ok_or_else(|| malformed("confidence missing or not a number"))?;
    ConfidenceVerdict::new(label as u8, confidence)
}

/// Asks `client` to judge `item`, retrying up to `retries` extra times on
/// transport failures and unparseable replies.
pub fn confidence_evaluate(
    client: &dyn LanguageModelClient,
    item: &KnowledgeItem,
    template: &PromptTemplate,
    retries: usize,
) -> Result<ConfidenceVerdict> {
    let prompt = template.render(item);
    let mut last = Error::EvaluatorUnavailable("no attempt made".into());
    for _ in 0..=retries {
        match client.complete(&prompt, item) {
            Ok(reply) => match parse_confidence_reply(&reply) {
                Ok(verdict) => return Ok(verdict),
                Err(e) => last = e,
            },
            Err(Error::Transport(msg)) => last = Error::EvaluatorUnavailable(msg),
            Err(other) => return Err(other),
        }
    }
    Err(last)
}
