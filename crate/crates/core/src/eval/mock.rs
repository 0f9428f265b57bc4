//! Seeded stand-ins for the remote evaluators.
//!
//! Both oracles need the gold flag of the statement being judged and draw
//! every random number from a stream keyed by the item ids involved, so a
//! verdict never depends on call order or concurrency.

use alloc::string::String;

use rand::Rng;

use super::confidence::LanguageModelClient;
use super::nli::{NliClient, NliLabel, NliScores};
use crate::error::{Error, Result};
use crate::knowledge::KnowledgeItem;
use crate::seed::keyed_rng;

/// Maps an item id to its topic key.
pub type TopicKey = fn(&str) -> &str;

/// Topic = the id up to the first `:`, or the whole id.
pub fn id_topic(id: &str) -> &str {
    id.split_once(':').map_or(id, |(topic, _)| topic)
}

fn gold(item: &KnowledgeItem) -> Result<u8> {
    item.gold_flag()
        .ok_or_else(|| Error::OracleMisuse(alloc::format!("item {:?} has no gold flag", item.id())))
}

fn check_accuracy(accuracy: f64) {
    assert!((0.0..=1.0).contains(&accuracy), "accuracy {accuracy} outside [0, 1]");
}

/// Agrees with the gold flag with probability `accuracy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MockConfidenceOracle {
    accuracy: f64,
    seed: u64,
}

impl MockConfidenceOracle {
    pub fn new(accuracy: f64, seed: u64) -> Self {
        check_accuracy(accuracy);
        Self { accuracy, seed }
    }

    /// The (label, confidence) pair this oracle assigns to `item`.
    pub fn judge(&self, item: &KnowledgeItem) -> Result<(u8, f64)> {
        let flag = gold(item)?;
        let mut rng = keyed_rng(self.seed, &["confidence", item.id()]);
        let u: f64 = rng.gen();
        let label = if u < self.accuracy { flag } else { 1 - flag };
        // self-reported confidence never drops below a coin flip
        let confidence = 0.5 + 0.5 * rng.gen::<f64>();
        Ok((label, confidence))
    }
}

impl LanguageModelClient for MockConfidenceOracle {
    fn complete(&self, _prompt: &str, item: &KnowledgeItem) -> Result<String> {
        let (label, confidence) = self.judge(item)?;
        Ok(alloc::format!("{{\"label\":{label},\"confidence\":{confidence}}}"))
    }
}

/// Entailment for correct same-topic hypotheses, contradiction for incorrect
/// ones, neutral across topics; with probability `1 - accuracy` one of the
/// other two labels instead.
#[derive(Debug, Clone, Copy)]
pub struct MockNliOracle {
    accuracy: f64,
    seed: u64,
    topic: TopicKey,
}

impl MockNliOracle {
    pub fn new(accuracy: f64, seed: u64) -> Self {
        Self::with_topic_key(accuracy, seed, id_topic)
    }

    pub fn with_topic_key(accuracy: f64, seed: u64, topic: TopicKey) -> Self {
        check_accuracy(accuracy);
        Self { accuracy, seed, topic }
    }

    pub fn ideal_label(&self, premise: &KnowledgeItem, hypothesis: &KnowledgeItem) -> Result<NliLabel> {
        let flag = gold(hypothesis)?;
        Ok(if (self.topic)(premise.id()) != (self.topic)(hypothesis.id()) {
            NliLabel::Neutral
        } else if flag == 1 {
            NliLabel::Entailment
        } else {
            NliLabel::Contradiction
        })
    }
}

impl NliClient for MockNliOracle {
    fn infer(&self, premise: &KnowledgeItem, hypothesis: &KnowledgeItem) -> Result<NliScores> {
        let ideal = self.ideal_label(premise, hypothesis)?;
        let mut rng = keyed_rng(self.seed, &["nli", premise.id(), hypothesis.id()]);
        let u: f64 = rng.gen();
        let chosen = if u < self.accuracy {
            ideal
        } else {
            let others: alloc::vec::Vec<NliLabel> = NliLabel::ALL.into_iter().filter(|l| *l != ideal).collect();
            others[rng.gen_range(0..2)]
        };
        let mass = 0.6 + 0.35 * rng.gen::<f64>();
        let rest = (1.0 - mass) / 2.0;
        let p = |label: NliLabel| if label == chosen { mass } else { rest };
        Ok(NliScores {
            entailment: p(NliLabel::Entailment),
            contradiction: p(NliLabel::Contradiction),
            neutral: p(NliLabel::Neutral),
        })
    }
}
