//! Core of the trusted-data filter.
//!
//! Candidate knowledge statements are judged by two evaluators: a
//! language-model confidence check and an NLI contradiction check against the
//! most similar statement already held in a trusted vector knowledge base. A
//! small CART tree fuses both signals into the final accept/reject verdict, and
//! accepted statements grow the knowledge base for later rounds.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, HTTP transports,
//! thread pools and the command line live in the companion `tdf` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod error;
pub mod eval;
pub mod knowledge;
pub mod metrics;
pub mod pipeline;
pub mod seed;
pub mod tree;
pub mod vector;

pub use error::{Error, Result};
pub use eval::{
    confidence_evaluate, contradiction_evaluate, ConfidenceVerdict, LanguageModelClient,
    MockConfidenceOracle, MockNliOracle, NliClient, NliLabel, NliScores, NliVerdict,
    PromptTemplate,
};
pub use knowledge::{parse_dataset, split_dataset, DatasetSplit, KnowledgeItem};
pub use metrics::{compare_modes, confusion, metrics, ConfusionMatrix, Metrics};
pub use pipeline::{FanOut, FilterConfig, FilterMode, FilterReport, ItemOutcome, Sequential, Verdict};
pub use tree::{DecisionPath, DecisionTree, EvalRecord, TreeParams};
pub use vector::{
    cosine_similarity, embed, Embedder, Embedding, HashEmbedder, IndexMode, IndexParams,
    MatchResult, TrustedEntry, VectorIndex,
};
