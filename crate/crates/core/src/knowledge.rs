//! Knowledge records, the line-oriented dataset format and dataset splits.
//!
//! One JSON object per line:
//!
//! ```text
//! {"knowledge":"Mitochondria produce ATP.","flag":1,"id":"bio:17"}
//! ```
//!
//! `flag` (0 = incorrect, 1 = correct) and `id` are optional. Blank lines are
//! skipped. A missing id becomes the 0-based line ordinal.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest dataset that leaves every split part non-empty.
pub const MIN_SPLIT_ITEMS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KnowledgeItem {
    id: String,
    text: String,
    gold_flag: Option<u8>,
}

impl KnowledgeItem {
    pub fn new(id: impl Into<String>, text: impl Into<String>, gold_flag: Option<u8>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::Validation("empty knowledge".into()));
        }
        if matches!(gold_flag, Some(f) if f > 1) {
            return Err(Error::Validation("flag outside {0,1}".into()));
        }
        Ok(Self {
            id: id.into(),
            text,
            gold_flag,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn gold_flag(&self) -> Option<u8> {
        self.gold_flag
    }

    /// Serializes the item as one dataset line.
    pub fn to_record_line(&self) -> String {
        let record = RecordOut {
            knowledge: &self.text,
            flag: self.gold_flag,
            id: &self.id,
        };
        serde_json::to_string(&record).expect("record serialization is infallible")
    }
}

#[derive(Serialize)]
struct RecordOut<'a> {
    knowledge: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    flag: Option<u8>,
    id: &'a str,
}

#[derive(Deserialize)]
struct RecordIn {
    knowledge: String,
    #[serde(default)]
    flag: Option<i64>,
    #[serde(default)]
    id: Option<String>,
}

/// Parses dataset lines into items, in input order.
///
/// Line numbers in errors are 1-based; synthesized ids are 0-based ordinals.
pub fn parse_dataset<'a, I>(lines: I) -> Result<Vec<KnowledgeItem>>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut items = Vec::new();
    let mut seen = BTreeSet::new();
    for (ordinal, line) in lines.into_iter().enumerate() {
        let line_no = ordinal + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: RecordIn = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let invalid = |reason: &str| Error::InvalidRecord {
            line: line_no,
            reason: reason.into(),
        };
        let flag = match record.flag {
            None => None,
            Some(f @ 0..=1) => Some(f as u8),
            Some(_) => return Err(invalid("flag outside {0,1}")),
        };
        if record.knowledge.trim().is_empty() {
            return Err(invalid("empty knowledge"));
        }
        let id = record.id.unwrap_or_else(|| ordinal.to_string());
        if !seen.insert(id.clone()) {
            return Err(invalid("duplicate id"));
        }
        items.push(KnowledgeItem {
            id,
            text: record.knowledge,
            gold_flag: flag,
        });
    }
    Ok(items)
}

/// The train/valid/test partition of a dataset (5% / 5% / remainder).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<KnowledgeItem>,
    pub valid: Vec<KnowledgeItem>,
    pub test: Vec<KnowledgeItem>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.valid.len(), self.test.len())
    }
}

/// Seeded shuffle, then floor(5%) train, floor(5%) valid, the rest test.
pub fn split_dataset(items: &[KnowledgeItem], seed: u64) -> Result<DatasetSplit> {
    let n = items.len();
    if n < MIN_SPLIT_ITEMS {
        return Err(Error::Size(alloc::format!(
            "split needs at least {MIN_SPLIT_ITEMS} items, got {n}"
        )));
    }
    let mut shuffled = items.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let part = n / 20;
    let test = shuffled.split_off(2 * part);
    let valid = shuffled.split_off(part);
    Ok(DatasetSplit {
        train: shuffled,
        valid,
        test,
        seed,
    })
}
