use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::KnowledgeItem;
use crate::vector::TrustedEntry;

/// Sums further than this from 1 are rescaled by their total.
const RENORMALIZE_TOLERANCE: f64 = 1e-9;

/// Three-way NLI classifier. The premise is the trusted statement, the
/// hypothesis is the candidate.
pub trait NliClient: Send + Sync {
    fn infer(&self, premise: &KnowledgeItem, hypothesis: &KnowledgeItem) -> Result<NliScores>;
}

/// Raw class scores as returned by a client (not necessarily normalized).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliScores {
    pub entailment: f64,
    pub contradiction: f64,
    pub neutral: f64,
}

impl NliScores {
    pub fn as_array(&self) -> [f64; 3] {
        [self.entailment, self.contradiction, self.neutral]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliLabel {
    Entailment,
    Contradiction,
    Neutral,
}

impl NliLabel {
    /// In tie-break priority order.
    pub const ALL: [NliLabel; 3] = [NliLabel::Entailment, NliLabel::Contradiction, NliLabel::Neutral];

    /// Feature encoding: entailment 1, contradiction 0, neutral -1.
    pub fn code(self) -> i8 {
        match self {
            NliLabel::Entailment => 1,
            NliLabel::Contradiction => 0,
            NliLabel::Neutral => -1,
        }
    }

    pub fn from_code(code: i8) -> Option<Self> {
        match code {
            1 => Some(NliLabel::Entailment),
            0 => Some(NliLabel::Contradiction),
            -1 => Some(NliLabel::Neutral),
            _ => None,
        }
    }
}

/// Argmax label `y2` and its probability `c2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliVerdict {
    pub y2: i8,
    pub c2: f64,
    /// (entailment, contradiction, neutral), summing to 1.
    pub probs: [f64; 3],
}

impl NliVerdict {
    /// Validates and normalizes `scores`, then takes the argmax with ties
    /// resolved entailment > contradiction > neutral.
    pub fn from_scores(scores: NliScores) -> Result<Self> {
        let mut probs = scores.as_array();
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::MalformedVerdict("non-finite class score".into()));
        }
        if probs.iter().any(|&p| p < 0.0) {
            return Err(Error::MalformedVerdict("negative class score".into()));
        }
        let sum: f64 = probs.iter().sum();
        if sum <= 0.0 {
            return Err(Error::MalformedVerdict("class scores sum to zero".into()));
        }
        if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
            for p in &mut probs {
                *p /= sum;
            }
        }
        let mut best = 0;
        for i in 1..3 {
            if probs[i] > probs[best] {
                best = i;
            }
        }
        Ok(Self {
            y2: NliLabel::ALL[best].code(),
            c2: probs[best],
            probs,
        })
    }

    pub fn label(&self) -> NliLabel {
        NliLabel::from_code(self.y2).expect("verdict labels are always valid codes")
    }
}

/// Runs the NLI client with the trusted statement as premise.
pub fn contradiction_evaluate(client: &dyn NliClient, item: &KnowledgeItem, trusted: &TrustedEntry) -> Result<NliVerdict> {
    match client.infer(&trusted.item, item) {
        Ok(scores) => NliVerdict::from_scores(scores),
        Err(Error::Transport(msg)) => Err(Error::EvaluatorUnavailable(msg)),
        Err(other) => Err(other),
    }
}
