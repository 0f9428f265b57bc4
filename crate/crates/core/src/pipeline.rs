//! The iterative filtering loop and its basic / fake-matching variants.
//!
//! Each self-NLI round walks the pending items in input order. An item whose
//! best trusted match falls below the threshold waits for the next round. A
//! matched item is scored by both evaluators and the tree; accepted items join
//! the knowledge base at once and can serve as premises for the items that
//! follow them. Rejection is terminal. Items still waiting after the last
//! round end up `deferred_final`.
//!
//! Evaluator calls fan out through a [`FanOut`] executor. Within a round,
//! every item is first evaluated speculatively against the knowledge base as
//! it stood at the start of the round; the sequential pass then re-matches
//! each item against the live knowledge base and only re-evaluates when its
//! premise changed. Outcomes therefore match a purely sequential run.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    confidence_evaluate, contradiction_evaluate, ConfidenceVerdict, LanguageModelClient, NliClient, NliVerdict,
    PromptTemplate, DEFAULT_RETRIES,
};
use crate::knowledge::KnowledgeItem;
use crate::seed::{derive_seed, keyed_rng};
use crate::tree::{DecisionPath, DecisionTree, EvalRecord, TreeParams};
use crate::vector::{
    cosine_similarity, embed, match_embedding, match_trusted, Embedder, Embedding, IndexParams, MatchResult,
    TrustedEntry, VectorIndex, DEFAULT_THRESHOLD,
};

pub const DEFAULT_MAX_ITERATIONS: usize = 5;
pub const DEFAULT_PARALLELISM: usize = 8;

/// Ordered as comparison tables list them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    Basic,
    Fake,
    SelfNli,
}

impl FilterMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterMode::Basic => "basic",
            FilterMode::Fake => "fake",
            FilterMode::SelfNli => "self_nli",
        }
    }
}

impl core::fmt::Display for FilterMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for FilterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(FilterMode::Basic),
            "fake" => Ok(FilterMode::Fake),
            "self_nli" | "self-nli" => Ok(FilterMode::SelfNli),
            other => Err(Error::Configuration(alloc::format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub mode: FilterMode,
    pub threshold: f64,
    pub max_iterations: usize,
    pub parallelism: usize,
    pub seed: u64,
    pub retries: usize,
    pub tree_params: TreeParams,
    pub index_params: IndexParams,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            mode: FilterMode::SelfNli,
            threshold: DEFAULT_THRESHOLD,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            parallelism: DEFAULT_PARALLELISM,
            seed: 0,
            retries: DEFAULT_RETRIES,
            tree_params: TreeParams::default(),
            index_params: IndexParams::default(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Configuration("max_iterations must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Configuration(alloc::format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if self.parallelism == 0 {
            return Err(Error::Configuration("parallelism must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected,
    DeferredFinal,
}

/// Terminal disposition of one input item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemOutcome {
    pub id: String,
    pub verdict: Verdict,
    /// 1-based round in which the verdict was reached (or last attempted).
    pub iteration: usize,
    pub eval: Option<EvalRecord>,
    pub matched_id: Option<String>,
    pub similarity: Option<f64>,
    pub path: Option<DecisionPath>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IterationTally {
    pub iteration: usize,
    pub processed: usize,
    pub matched: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub deferred: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub config: FilterConfig,
    pub iterations: Vec<IterationTally>,
    /// One per input item, in input order.
    pub outcomes: Vec<ItemOutcome>,
    /// Knowledge-base size at the end of each round.
    pub kb_size_by_iteration: Vec<usize>,
}

impl FilterReport {
    /// `(accepted, rejected, deferred_final)`.
    pub fn totals(&self) -> (usize, usize, usize) {
        self.outcomes.iter().fold((0, 0, 0), |(a, r, d), o| match o.verdict {
            Verdict::Accepted => (a + 1, r, d),
            Verdict::Rejected => (a, r + 1, d),
            Verdict::DeferredFinal => (a, r, d + 1),
        })
    }
}

/// Executes independent evaluator calls, returning results in input order.
pub trait FanOut {
    fn map<T: Sync, R: Send>(&self, inputs: &[T], f: &(dyn Fn(&T) -> R + Sync)) -> Vec<R>;
}

/// Runs every call on the current thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl FanOut for Sequential {
    fn map<T: Sync, R: Send>(&self, inputs: &[T], f: &(dyn Fn(&T) -> R + Sync)) -> Vec<R> {
        inputs.iter().map(f).collect()
    }
}

/// The pluggable clients a run talks to.
#[derive(Clone, Copy)]
pub struct Evaluators<'a> {
    pub language_model: &'a dyn LanguageModelClient,
    pub nli: &'a dyn NliClient,
    pub embedder: &'a dyn Embedder,
    pub template: &'a PromptTemplate,
}

/// Embeds and inserts every trusted item.
pub fn initialize_kb(index: &mut VectorIndex, trusted: &[KnowledgeItem], embedder: &dyn Embedder) -> Result<()> {
    for item in trusted {
        index.insert(TrustedEntry::embed(item.clone(), embedder)?)?;
    }
    Ok(())
}

/// Runs both evaluators over labeled training items against a fixed
/// knowledge base. Unmatched items get the neutral, zero-confidence
/// contradiction placeholder.
pub fn build_training_features<X: FanOut>(
    train: &[KnowledgeItem],
    kb: &VectorIndex,
    evaluators: &Evaluators<'_>,
    config: &FilterConfig,
    fanout: &X,
) -> Result<(Vec<EvalRecord>, Vec<u8>)> {
    config.validate()?;
    let mut labels = Vec::with_capacity(train.len());
    for item in train {
        let flag = item
            .gold_flag()
            .ok_or_else(|| Error::Validation(alloc::format!("training item {:?} has no flag", item.id())))?;
        labels.push(flag);
    }
    let features = |item: &KnowledgeItem| -> Result<EvalRecord> {
        let conf = confidence_evaluate(evaluators.language_model, item, evaluators.template, config.retries)?;
        match match_trusted(kb, item, config.threshold, evaluators.embedder)? {
            MatchResult::Matched { entry, .. } => {
                let nli = contradiction_evaluate(evaluators.nli, item, &entry)?;
                EvalRecord::new(conf.y1, conf.c1, nli.y2, nli.c2)
            }
            MatchResult::Unmatched => Ok(EvalRecord::without_contradiction(conf.y1, conf.c1)),
        }
    };
    let mut records = Vec::with_capacity(train.len());
    for (processed, result) in fanout.map(train, &features).into_iter().enumerate() {
        match result {
            Ok(r) => records.push(r),
            Err(e) => {
                return Err(Error::Aborted {
                    processed,
                    source: alloc::boxed::Box::new(e),
                })
            }
        }
    }
    Ok((records, labels))
}

/// Confidence-only filtering: accept iff the language model says `1`.
pub fn run_basic<X: FanOut>(
    items: &[KnowledgeItem],
    evaluators: &Evaluators<'_>,
    config: &FilterConfig,
    fanout: &X,
) -> Result<FilterReport> {
    config.validate()?;
    check_unique(items)?;
    let judge = |item: &KnowledgeItem| confidence_evaluate(evaluators.language_model, item, evaluators.template, config.retries);
    let mut tally = IterationTally {
        iteration: 1,
        processed: items.len(),
        ..Default::default()
    };
    let mut outcomes = Vec::with_capacity(items.len());
    for (item, result) in items.iter().zip(fanout.map(items, &judge)) {
        let outcome = match result {
            Ok(conf) => {
                let verdict = if conf.y1 == 1 {
                    tally.accepted += 1;
                    Verdict::Accepted
                } else {
                    tally.rejected += 1;
                    Verdict::Rejected
                };
                ItemOutcome {
                    verdict,
                    eval: Some(EvalRecord::without_contradiction(conf.y1, conf.c1)),
                    ..blank_outcome(item, 1)
                }
            }
            Err(e) if e.is_deferrable() => {
                tally.deferred += 1;
                blank_outcome(item, 1)
            }
            Err(e) => return Err(e),
        };
        outcomes.push(outcome);
    }
    Ok(FilterReport {
        config: config.clone(),
        iterations: vec![tally],
        outcomes,
        kb_size_by_iteration: vec![0],
    })
}

fn blank_outcome(item: &KnowledgeItem, iteration: usize) -> ItemOutcome {
    ItemOutcome {
        id: item.id().into(),
        verdict: Verdict::DeferredFinal,
        iteration,
        eval: None,
        matched_id: None,
        similarity: None,
        path: None,
    }
}

fn check_unique(items: &[KnowledgeItem]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for item in items {
        if !seen.insert(item.id()) {
            return Err(Error::Validation(alloc::format!("duplicate item id {:?}", item.id())));
        }
    }
    Ok(())
}

fn fake_draw(item: &KnowledgeItem, pool_len: usize, seed: u64) -> usize {
    keyed_rng(seed, &["fake", item.id()]).gen_range(0..pool_len)
}

/// Pairs `item` with a uniformly drawn distractor, ignoring similarity.
pub fn fake_match(item: &KnowledgeItem, pool: &[KnowledgeItem], seed: u64, embedder: &dyn Embedder) -> Result<TrustedEntry> {
    if pool.is_empty() {
        return Err(Error::Configuration("fake matching needs a non-empty distractor pool".into()));
    }
    TrustedEntry::embed(pool[fake_draw(item, pool.len(), seed)].clone(), embedder)
}

struct Slot {
    embedding: Option<Embedding>,
    confidence: Option<ConfidenceVerdict>,
}

struct Speculation {
    premise: TrustedEntry,
    confidence: Option<Result<ConfidenceVerdict>>,
    nli: Result<NliVerdict>,
}

/// Iterative filtering in `self_nli` or `fake` mode.
///
/// `distractors` is only consulted in fake mode. In fake mode accepted items
/// are not added to `kb`.
pub fn run_filter<X: FanOut>(
    items: &[KnowledgeItem],
    kb: &mut VectorIndex,
    tree: &DecisionTree,
    evaluators: &Evaluators<'_>,
    config: &FilterConfig,
    distractors: &[KnowledgeItem],
    fanout: &X,
) -> Result<FilterReport> {
    config.validate()?;
    check_unique(items)?;
    let mode = config.mode;
    if mode == FilterMode::Basic {
        return Err(Error::Configuration("basic mode has no matching loop; use run_basic".into()));
    }
    if mode == FilterMode::Fake && distractors.is_empty() {
        return Err(Error::Configuration("fake matching needs a non-empty distractor pool".into()));
    }
    let fake_seed = derive_seed(config.seed, "fake");
    let pool: Vec<TrustedEntry> = if mode == FilterMode::Fake {
        fanout
            .map(distractors, &|d: &KnowledgeItem| TrustedEntry::embed(d.clone(), evaluators.embedder))
            .into_iter()
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let premise_for = |kb: &VectorIndex, item: &KnowledgeItem, emb: &Embedding| -> Result<Option<(TrustedEntry, f64)>> {
        match mode {
            FilterMode::Fake => {
                let entry = &pool[fake_draw(item, pool.len(), fake_seed)];
                let sim = cosine_similarity(emb, &entry.vector)?;
                Ok(Some((entry.clone(), sim)))
            }
            _ => Ok(match match_embedding(kb, emb, config.threshold)? {
                MatchResult::Matched { entry, similarity } => Some((entry, similarity)),
                MatchResult::Unmatched => None,
            }),
        }
    };
    let judge = |item: &KnowledgeItem| confidence_evaluate(evaluators.language_model, item, evaluators.template, config.retries);

    let mut slots: Vec<Slot> = items
        .iter()
        .map(|_| Slot {
            embedding: None,
            confidence: None,
        })
        .collect();
    let mut outcomes: Vec<Option<ItemOutcome>> = vec![None; items.len()];
    let mut last_round = vec![0usize; items.len()];
    let mut pending: Vec<usize> = (0..items.len()).collect();
    let mut iterations = Vec::new();
    let mut kb_sizes = Vec::new();

    for round in 1..=config.max_iterations {
        if pending.is_empty() {
            break;
        }
        let mut tally = IterationTally {
            iteration: round,
            processed: pending.len(),
            ..Default::default()
        };

        let to_embed: Vec<usize> = pending.iter().copied().filter(|&i| slots[i].embedding.is_none()).collect();
        let embedded = fanout.map(&to_embed, &|&i: &usize| embed(items[i].text(), evaluators.embedder));
        for (&i, result) in to_embed.iter().zip(embedded) {
            match result {
                Ok(e) => slots[i].embedding = Some(e),
                Err(e) if e.is_deferrable() => {}
                Err(e) => return Err(e),
            }
        }

        let mut speculative: Vec<(usize, TrustedEntry, bool)> = Vec::new();
        for &i in &pending {
            if let Some(emb) = &slots[i].embedding {
                if let Some((premise, _)) = premise_for(kb, &items[i], emb)? {
                    speculative.push((i, premise, slots[i].confidence.is_none()));
                }
            }
        }
        let evaluated = fanout.map(&speculative, &|(i, premise, need_conf): &(usize, TrustedEntry, bool)| Speculation {
            premise: premise.clone(),
            confidence: need_conf.then(|| judge(&items[*i])),
            nli: contradiction_evaluate(evaluators.nli, &items[*i], premise),
        });
        let mut guesses: Vec<Option<Speculation>> = (0..items.len()).map(|_| None).collect();
        for ((i, _, _), s) in speculative.iter().zip(evaluated) {
            guesses[*i] = Some(s);
        }

        let mut still_pending = Vec::new();
        for &i in &pending {
            let item = &items[i];
            last_round[i] = round;
            let Some(emb) = slots[i].embedding.clone() else {
                still_pending.push(i);
                continue;
            };
            let Some((premise, similarity)) = premise_for(kb, item, &emb)? else {
                still_pending.push(i);
                continue;
            };
            tally.matched += 1;
            let (guess_conf, guess_nli) = match guesses[i].take() {
                Some(g) => {
                    let same_premise = g.premise.id() == premise.id();
                    (g.confidence, same_premise.then_some(g.nli))
                }
                None => (None, None),
            };
            let confidence = match slots[i].confidence {
                Some(c) => Ok(c),
                None => guess_conf.unwrap_or_else(|| judge(item)),
            };
            let confidence = match confidence {
                Ok(c) => {
                    slots[i].confidence = Some(c);
                    c
                }
                Err(e) if e.is_deferrable() => {
                    still_pending.push(i);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let nli = match guess_nli.unwrap_or_else(|| contradiction_evaluate(evaluators.nli, item, &premise)) {
                Ok(v) => v,
                Err(e) if e.is_deferrable() => {
                    still_pending.push(i);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let record = EvalRecord::new(confidence.y1, confidence.c1, nli.y2, nli.c2)?;
            let path = tree.explain(&record);
            let verdict = if path.verdict == 1 {
                tally.accepted += 1;
                if mode == FilterMode::SelfNli {
                    kb.insert(TrustedEntry::new(item.clone(), emb))?;
                }
                Verdict::Accepted
            } else {
                tally.rejected += 1;
                Verdict::Rejected
            };
            outcomes[i] = Some(ItemOutcome {
                id: item.id().into(),
                verdict,
                iteration: round,
                eval: Some(record),
                matched_id: Some(premise.id().into()),
                similarity: Some(similarity),
                path: Some(path),
            });
        }
        tally.deferred = still_pending.len();
        iterations.push(tally);
        kb_sizes.push(kb.len());
        pending = still_pending;
        if tally.accepted + tally.rejected == 0 {
            break;
        }
    }

    let outcomes = outcomes
        .into_iter()
        .enumerate()
        .map(|(i, o)| o.unwrap_or_else(|| blank_outcome(&items[i], last_round[i])))
        .collect();
    Ok(FilterReport {
        config: config.clone(),
        iterations,
        outcomes,
        kb_size_by_iteration: kb_sizes,
    })
}
