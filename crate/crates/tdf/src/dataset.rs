//! Dataset files: one JSON record per line.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use tdf_core::{parse_dataset, KnowledgeItem};

pub fn read_dataset(path: &Path) -> Result<Vec<KnowledgeItem>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_dataset(text.lines()).with_context(|| format!("invalid dataset {}", path.display()))
}

pub fn dataset_to_string(items: &[KnowledgeItem]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&item.to_record_line());
        out.push('\n');
    }
    out
}

pub fn write_dataset(path: &Path, items: &[KnowledgeItem]) -> Result<()> {
    fs::write(path, dataset_to_string(items)).with_context(|| format!("cannot write {}", path.display()))
}
