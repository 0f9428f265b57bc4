//! Line-oriented snapshots of a knowledge base and of a trained tree. Each
//! starts with a header line followed by one JSON record per entry or node.

use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use tdf_core::tree::{Node, FEATURE_NAMES};
use tdf_core::{DecisionTree, Embedding, IndexMode, IndexParams, KnowledgeItem, TreeParams, TrustedEntry, VectorIndex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KbHeader {
    pub dim: usize,
    pub count: usize,
    pub mode: IndexMode,
    /// Configured list count; `null` means sized from the entry count.
    pub nlist: Option<usize>,
    pub nprobe: usize,
}

#[derive(Serialize, Deserialize)]
struct KbRecord {
    id: String,
    text: String,
    vector: Vec<f64>,
}

pub struct KbSnapshot {
    pub header: KbHeader,
    pub entries: Vec<TrustedEntry>,
}

impl KbSnapshot {
    /// Index parameters recorded in the header.
    pub fn params(&self, seed: u64) -> IndexParams {
        IndexParams {
            mode: self.header.mode,
            nlist: self.header.nlist,
            nprobe: self.header.nprobe,
            seed,
            ..IndexParams::default()
        }
    }

    /// Replays the entries in stored order into a fresh index.
    pub fn into_index(self, params: &IndexParams) -> Result<VectorIndex> {
        let mut index = VectorIndex::new(self.header.dim, params)?;
        for entry in self.entries {
            index.insert(entry)?;
        }
        Ok(index)
    }
}

pub fn kb_to_string(index: &VectorIndex) -> Result<String> {
    let params = index.params();
    let header = KbHeader {
        dim: index.dim(),
        count: index.len(),
        mode: index.mode(),
        nlist: params.nlist,
        nprobe: params.nprobe,
    };
    let mut out = serde_json::to_string(&header)?;
    out.push('\n');
    for entry in index.entries() {
        let record = KbRecord {
            id: entry.id().to_owned(),
            text: entry.item.text().to_owned(),
            vector: entry.vector.as_slice().to_vec(),
        };
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn kb_from_str(text: &str) -> Result<KbSnapshot> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().context("empty knowledge-base snapshot")?;
    let header: KbHeader = serde_json::from_str(first).context("line 1: bad snapshot header")?;
    let mut entries = Vec::with_capacity(header.count);
    for (n, line) in lines {
        let record: KbRecord = serde_json::from_str(line).with_context(|| format!("line {}: bad entry", n + 1))?;
        ensure!(record.vector.len() == header.dim, "line {}: vector has {} components, expected {}", n + 1, record.vector.len(), header.dim);
        let item = KnowledgeItem::new(record.id, record.text, None).with_context(|| format!("line {}", n + 1))?;
        let vector = Embedding::from_unit(record.vector).with_context(|| format!("line {}", n + 1))?;
        entries.push(TrustedEntry::new(item, vector));
    }
    ensure!(entries.len() == header.count, "header announces {} entries, found {}", header.count, entries.len());
    Ok(KbSnapshot { header, entries })
}

pub fn write_kb(path: &Path, index: &VectorIndex) -> Result<()> {
    fs::write(path, kb_to_string(index)?).with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_kb(path: &Path) -> Result<KbSnapshot> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    kb_from_str(&text).with_context(|| format!("invalid snapshot {}", path.display()))
}

#[derive(Debug, Serialize, Deserialize)]
struct TreeHeader {
    /// `null` for unbounded depth.
    max_depth: Option<usize>,
    min_samples_leaf: usize,
    nodes: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum NodeRecord {
    Split { id: usize, feature: String, threshold: f64, left: usize, right: usize },
    Leaf { id: usize, verdict: u8, counts: [usize; 2] },
}

pub fn tree_to_string(tree: &DecisionTree) -> Result<String> {
    let params = tree.params();
    let header = TreeHeader {
        max_depth: (params.max_depth != usize::MAX).then_some(params.max_depth),
        min_samples_leaf: params.min_samples_leaf,
        nodes: tree.nodes().len(),
    };
    let mut out = serde_json::to_string(&header)?;
    out.push('\n');
    for (id, node) in tree.nodes().iter().enumerate() {
        let record = match *node {
            Node::Split { feature, threshold, left, right } => NodeRecord::Split {
                id,
                feature: FEATURE_NAMES[feature].to_owned(),
                threshold,
                left,
                right,
            },
            Node::Leaf { verdict, counts } => NodeRecord::Leaf { id, verdict, counts },
        };
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn tree_from_str(text: &str) -> Result<DecisionTree> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().context("empty tree snapshot")?;
    let header: TreeHeader = serde_json::from_str(first).context("line 1: bad tree header")?;
    let mut nodes = Vec::with_capacity(header.nodes);
    for (n, line) in lines {
        let record: NodeRecord = serde_json::from_str(line).with_context(|| format!("line {}: bad node", n + 1))?;
        let (id, node) = match record {
            NodeRecord::Split { id, feature, threshold, left, right } => {
                let Some(feature) = FEATURE_NAMES.iter().position(|f| *f == feature) else {
                    bail!("line {}: unknown feature {feature:?}", n + 1);
                };
                (id, Node::Split { feature, threshold, left, right })
            }
            NodeRecord::Leaf { id, verdict, counts } => (id, Node::Leaf { verdict, counts }),
        };
        ensure!(id == nodes.len(), "line {}: node id {id} out of preorder sequence", n + 1);
        nodes.push(node);
    }
    ensure!(nodes.len() == header.nodes, "header announces {} nodes, found {}", header.nodes, nodes.len());
    let params = TreeParams {
        max_depth: header.max_depth.unwrap_or(usize::MAX),
        min_samples_leaf: header.min_samples_leaf,
    };
    Ok(DecisionTree::from_nodes(nodes, params)?)
}

pub fn write_tree(path: &Path, tree: &DecisionTree) -> Result<()> {
    fs::write(path, tree_to_string(tree)?).with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_tree(path: &Path) -> Result<DecisionTree> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    tree_from_str(&text).with_context(|| format!("invalid tree snapshot {}", path.display()))
}
