//! The two evaluation signals and their offline mock oracles.

mod confidence;
mod mock;
mod nli;
mod prompt;

pub use confidence::{confidence_evaluate, parse_confidence_reply, ConfidenceVerdict, LanguageModelClient, DEFAULT_RETRIES};
pub use mock::{id_topic, MockConfidenceOracle, MockNliOracle, TopicKey};
pub use nli::{contradiction_evaluate, NliClient, NliLabel, NliScores, NliVerdict};
pub use prompt::{render_prompt, PromptTemplate, PLACEHOLDER};
