use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::embedding::{embed, Embedder, Embedding};
use super::kmeans::{assign_nearest, build_kmeans};
use crate::error::{Error, Result};
use crate::knowledge::KnowledgeItem;

/// Lower edge of the usual 0.85-0.90 matching band.
pub const DEFAULT_THRESHOLD: f64 = 0.85;
pub const DEFAULT_NPROBE: usize = 8;
pub const MAX_AUTO_NLIST: usize = 256;
pub const DEFAULT_KMEANS_ITERS: usize = 25;

/// A trusted statement resident in the knowledge base.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustedEntry {
    pub item: KnowledgeItem,
    pub vector: Embedding,
}

impl TrustedEntry {
    pub fn new(item: KnowledgeItem, vector: Embedding) -> Self {
        Self { item, vector }
    }

    pub fn embed(item: KnowledgeItem, embedder: &dyn Embedder) -> Result<Self> {
        let vector = embed(item.text(), embedder)?;
        Ok(Self { item, vector })
    }

    pub fn id(&self) -> &str {
        self.item.id()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexMode {
    Flat,
    Ivf,
}

impl core::str::FromStr for IndexMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(Self::Flat),
            "ivf" => Ok(Self::Ivf),
            other => Err(Error::Configuration(alloc::format!("unknown index mode {other:?}"))),
        }
    }
}

/// Index construction parameters. `nlist: None` means
/// `round(sqrt(count))` clamped to `[1, 256]` at every rebuild.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexParams {
    pub mode: IndexMode,
    pub nlist: Option<usize>,
    pub nprobe: usize,
    pub seed: u64,
    pub max_iters: usize,
}

impl Default for IndexParams {
    fn default() -> Self {
        Self {
            mode: IndexMode::Flat,
            nlist: None,
            nprobe: DEFAULT_NPROBE,
            seed: 0,
            max_iters: DEFAULT_KMEANS_ITERS,
        }
    }
}

impl IndexParams {
    pub fn validate(&self) -> Result<()> {
        if self.nprobe == 0 {
            return Err(Error::Configuration("nprobe must be at least 1".into()));
        }
        if self.nlist == Some(0) {
            return Err(Error::Configuration("nlist must be at least 1".into()));
        }
        Ok(())
    }
}

/// Exact linear-scan index.
#[derive(Debug, Clone)]
pub struct FlatIndex {
    dim: usize,
    entries: Vec<TrustedEntry>,
    ids: BTreeSet<String>,
}

impl FlatIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
            ids: BTreeSet::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TrustedEntry] {
        &self.entries
    }

    pub fn insert(&mut self, entry: TrustedEntry) -> Result<()> {
        self.check_dim(&entry.vector)?;
        if self.ids.contains(entry.id()) {
            return Err(Error::DuplicateEntry(entry.id().into()));
        }
        self.ids.insert(entry.id().into());
        self.entries.push(entry);
        Ok(())
    }

    pub fn search_top1(&self, query: &Embedding) -> Result<Option<(&TrustedEntry, f64)>> {
        self.check_dim(query)?;
        Ok(self
            .best_of(0..self.entries.len(), query)
            .map(|(i, sim)| (&self.entries[i], sim)))
    }

    fn check_dim(&self, v: &Embedding) -> Result<()> {
        if v.dim() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                actual: v.dim(),
            });
        }
        Ok(())
    }

    /// Highest similarity among `candidates`; equal similarities resolve to
    /// the lexicographically smallest id.
    fn best_of(&self, candidates: impl IntoIterator<Item = usize>, query: &Embedding) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for i in candidates {
            let sim = self.entries[i].vector.dot(query);
            let better = match best {
                None => true,
                Some((j, s)) => sim > s || (sim == s && self.entries[i].id() < self.entries[j].id()),
            };
            if better {
                best = Some((i, sim));
            }
        }
        best
    }
}

/// Inverted-file index with flat (uncompressed) buckets.
///
/// Centroids are rebuilt with k-means whenever the entry count has doubled
/// since the previous build; in between, new entries join the bucket of their
/// nearest existing centroid.
#[derive(Debug, Clone)]
pub struct IvfIndex {
    store: FlatIndex,
    nlist_setting: Option<usize>,
    nprobe: usize,
    seed: u64,
    max_iters: usize,
    centroids: Vec<Embedding>,
    buckets: Vec<Vec<usize>>,
    built_at: usize,
}

impl IvfIndex {
    pub fn new(dim: usize, params: &IndexParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            store: FlatIndex::new(dim),
            nlist_setting: params.nlist,
            nprobe: params.nprobe,
            seed: params.seed,
            max_iters: params.max_iters,
            centroids: Vec::new(),
            buckets: Vec::new(),
            built_at: 0,
        })
    }

    /// Loads `entries` and trains the quantizer once over all of them.
    pub fn build(dim: usize, entries: Vec<TrustedEntry>, params: &IndexParams) -> Result<Self> {
        let mut index = Self::new(dim, params)?;
        for entry in entries {
            index.store.insert(entry)?;
        }
        index.rebuild()?;
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn entries(&self) -> &[TrustedEntry] {
        self.store.entries()
    }

    pub fn centroids(&self) -> &[Embedding] {
        &self.centroids
    }

    pub fn buckets(&self) -> &[Vec<usize>] {
        &self.buckets
    }

    pub fn nlist(&self) -> usize {
        self.centroids.len()
    }

    /// Effective probe count, never more than `nlist`.
    pub fn nprobe(&self) -> usize {
        self.nprobe.min(self.nlist()).max(1)
    }

    pub fn set_nprobe(&mut self, nprobe: usize) {
        self.nprobe = nprobe.max(1);
    }

    /// The construction parameters; `nlist` is the configured value, not the
    /// current centroid count.
    pub fn params(&self) -> IndexParams {
        IndexParams {
            mode: IndexMode::Ivf,
            nlist: self.nlist_setting,
            nprobe: self.nprobe,
            seed: self.seed,
            max_iters: self.max_iters,
        }
    }

    pub fn insert(&mut self, entry: TrustedEntry) -> Result<()> {
        self.store.insert(entry)?;
        let n = self.store.len();
        if n >= 2 * self.built_at {
            self.rebuild()
        } else {
            let idx = n - 1;
            let bucket = assign_nearest(&self.store.entries[idx].vector, &self.centroids);
            self.buckets[bucket].push(idx);
            Ok(())
        }
    }

    /// Retrains centroids over every stored entry and reassigns buckets.
    pub fn rebuild(&mut self) -> Result<()> {
        let n = self.store.len();
        if n == 0 {
            self.centroids.clear();
            self.buckets.clear();
            self.built_at = 0;
            return Ok(());
        }
        let auto = || (libm::round(libm::sqrt(n as f64)) as usize).clamp(1, MAX_AUTO_NLIST);
        let nlist = self.nlist_setting.unwrap_or_else(auto).min(n);
        let vectors: Vec<Embedding> = self.store.entries.iter().map(|e| e.vector.clone()).collect();
        self.centroids = build_kmeans(&vectors, nlist, self.seed, self.max_iters)?;
        self.buckets = vec![Vec::new(); nlist];
        for (i, v) in vectors.iter().enumerate() {
            self.buckets[assign_nearest(v, &self.centroids)].push(i);
        }
        self.built_at = n;
        Ok(())
    }

    pub fn search_top1(&self, query: &Embedding) -> Result<Option<(&TrustedEntry, f64)>> {
        self.search_top1_probing(query, self.nprobe())
    }

    /// Searches the `nprobe` buckets whose centroids are most similar to the
    /// query (ties to the lower centroid index).
    pub fn search_top1_probing(&self, query: &Embedding, nprobe: usize) -> Result<Option<(&TrustedEntry, f64)>> {
        self.store.check_dim(query)?;
        if self.centroids.is_empty() {
            return Ok(None);
        }
        let mut order: Vec<(usize, f64)> = self.centroids.iter().map(|c| c.dot(query)).enumerate().collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let probes = nprobe.clamp(1, order.len());
        let candidates = order[..probes]
            .iter()
            .flat_map(|&(bucket, _)| self.buckets[bucket].iter().copied());
        Ok(self
            .store
            .best_of(candidates, query)
            .map(|(i, sim)| (&self.store.entries[i], sim)))
    }
}

/// A knowledge base in either index mode.
#[derive(Debug, Clone)]
pub enum VectorIndex {
    Flat(FlatIndex),
    Ivf(IvfIndex),
}

impl VectorIndex {
    pub fn new(dim: usize, params: &IndexParams) -> Result<Self> {
        params.validate()?;
        Ok(match params.mode {
            IndexMode::Flat => Self::Flat(FlatIndex::new(dim)),
            IndexMode::Ivf => Self::Ivf(IvfIndex::new(dim, params)?),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Flat(f) => f.dim(),
            Self::Ivf(i) => i.store.dim(),
        }
    }

    pub fn mode(&self) -> IndexMode {
        match self {
            Self::Flat(_) => IndexMode::Flat,
            Self::Ivf(_) => IndexMode::Ivf,
        }
    }

    pub fn params(&self) -> IndexParams {
        match self {
            Self::Flat(_) => IndexParams::default(),
            Self::Ivf(i) => i.params(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries().len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries().is_empty()
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> &[TrustedEntry] {
        match self {
            Self::Flat(f) => f.entries(),
            Self::Ivf(i) => i.entries(),
        }
    }

    pub fn insert(&mut self, entry: TrustedEntry) -> Result<()> {
        match self {
            Self::Flat(f) => f.insert(entry),
            Self::Ivf(i) => i.insert(entry),
        }
    }

    pub fn search_top1(&self, query: &Embedding) -> Result<Option<(&TrustedEntry, f64)>> {
        match self {
            Self::Flat(f) => f.search_top1(query),
            Self::Ivf(i) => i.search_top1(query),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchResult {
    Matched { entry: TrustedEntry, similarity: f64 },
    Unmatched,
}

impl MatchResult {
    pub fn is_matched(&self) -> bool {
        matches!(self, Self::Matched { .. })
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Configuration(alloc::format!("threshold {threshold} outside [0, 1]")));
    }
    Ok(())
}

/// Threshold test on an already-embedded query.
pub fn match_embedding(index: &VectorIndex, query: &Embedding, threshold: f64) -> Result<MatchResult> {
    check_threshold(threshold)?;
    Ok(match index.search_top1(query)? {
        Some((entry, similarity)) if similarity >= threshold => MatchResult::Matched {
            entry: entry.clone(),
            similarity,
        },
        _ => MatchResult::Unmatched,
    })
}

pub fn match_trusted(
    index: &VectorIndex,
    item: &KnowledgeItem,
    threshold: f64,
    embedder: &dyn Embedder,
) -> Result<MatchResult> {
    check_threshold(threshold)?;
    let query = embed(item.text(), embedder)?;
    match_embedding(index, &query, threshold)
}
