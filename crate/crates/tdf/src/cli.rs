use std::fmt;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tdf_core::metrics::Confusion;
use tdf_core::pipeline::{build_training_features, initialize_kb, run_basic, run_filter, Evaluators};
use tdf_core::tree::train;
use tdf_core::{
    compare_modes, confusion, metrics, split_dataset, DecisionTree, Embedder, FilterMode, HashEmbedder,
    KnowledgeItem, LanguageModelClient, Metrics, NliClient, PromptTemplate, VectorIndex,
};

use crate::config::{split_seed, CommonArgs, EmbedderKind, EvaluatorArgs, FileConfig, PipelineArgs, Settings};
use crate::dataset::{read_dataset, write_dataset};
use crate::fanout::ThreadFanOut;
use crate::report::{comparison_table, EvaluatorEcho, Manifest, ManifestInputs};
use crate::server::{mock_oracles, MockServer, MockState};
use crate::snapshot::{read_kb, read_tree, write_kb, write_tree};
use crate::synthetic::{self, SynthParams};
use crate::wire::{Endpoint, HttpEmbedder, HttpLanguageModel, HttpNli};

#[derive(Debug, Parser)]
#[command(name = "tdf", version, about = "Trusted-data filtering with confidence and NLI evidence")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Shuffle a dataset into train, valid and test files.
    Split(SplitArgs),
    /// Build evaluation features for the training split and fit the decision tree.
    TrainTree(TrainTreeArgs),
    /// Filter a dataset in basic, fake or self_nli mode.
    Filter(FilterArgs),
    /// Tabulate metrics of several filter runs over the same dataset.
    Compare(CompareArgs),
    /// Serve the evaluator contracts backed by the seeded mock oracles.
    ServeMock(ServeMockArgs),
    /// Write a synthetic labeled corpus and a distractor pool.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, env = "TDF_OUT")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrainTreeArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Reports accuracy of the trained tree on this labeled file.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// Statements seeding the knowledge base; defaults to the correct
    /// training statements.
    #[arg(long)]
    pub trusted: Option<PathBuf>,
    #[arg(long, env = "TDF_OUT")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub eval: EvaluatorArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub test: PathBuf,
    /// basic, fake or self_nli.
    #[arg(long, env = "TDF_MODE")]
    pub mode: Option<FilterMode>,
    /// Knowledge-base snapshot written by `train-tree`.
    #[arg(long)]
    pub kb: Option<PathBuf>,
    /// Tree snapshot written by `train-tree`.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// Unrelated statements drawn as matches in fake mode.
    #[arg(long, env = "TDF_DISTRACTORS")]
    pub distractors: Option<PathBuf>,
    #[arg(long, env = "TDF_OUT")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub eval: EvaluatorArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[arg(long = "manifest", required = true)]
    pub manifests: Vec<PathBuf>,
    /// Labeled dataset the runs filtered.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Writes the comparison as JSON here.
    #[arg(long, env = "TDF_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeMockArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = "TDF_PORT", default_value_t = 8787)]
    pub port: u16,
    /// Labeled datasets (and distractor pools) whose statements the service
    /// may be asked about.
    #[arg(long = "labels", required = true)]
    pub labels: Vec<PathBuf>,
    #[arg(long, env = "TDF_CONF_ACCURACY")]
    pub conf_accuracy: Option<f64>,
    #[arg(long, env = "TDF_NLI_ACCURACY")]
    pub nli_accuracy: Option<f64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 5000)]
    pub items: usize,
    #[arg(long, default_value_t = 40)]
    pub topics: usize,
    #[arg(long = "distractor-count", default_value_t = 500)]
    pub distractor_count: usize,
    #[arg(long, env = "TDF_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "TDF_OUT")]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Split(a) => println!("{}", split(&a)?),
        Command::TrainTree(a) => println!("{}", train_tree(&a)?),
        Command::Filter(a) => println!("{}", filter(&a)?),
        Command::Compare(a) => print!("{}", compare(&a)?.table),
        Command::ServeMock(a) => serve_mock(&a)?,
        Command::Synth(a) => println!("{}", synth(&a)?),
    }
    Ok(())
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("cannot create output directory {}", path.display()))
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    ensure!(path.is_file(), "{what} {} does not exist", path.display());
    Ok(())
}

pub struct SplitSummary {
    pub sizes: (usize, usize, usize),
}

impl fmt::Display for SplitSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (tr, va, te) = self.sizes;
        write!(f, "train {tr}\nvalid {va}\ntest {te}")
    }
}

pub fn split(args: &SplitArgs) -> Result<SplitSummary> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let seed = args.common.seed.or(file.seed).unwrap_or(0);
    let items = read_dataset(&args.dataset)?;
    let parts = split_dataset(&items, split_seed(seed)).with_context(|| format!("cannot split {}", display(&args.dataset)))?;
    create_dir(&args.out)?;
    write_dataset(&args.out.join("train.jsonl"), &parts.train)?;
    write_dataset(&args.out.join("valid.jsonl"), &parts.valid)?;
    write_dataset(&args.out.join("test.jsonl"), &parts.test)?;
    Ok(SplitSummary { sizes: parts.sizes() })
}

/// Owned evaluator clients for one command.
pub struct EvaluatorSet {
    language_model: Box<dyn LanguageModelClient>,
    nli: Box<dyn NliClient>,
    embedder: Box<dyn Embedder>,
    template: PromptTemplate,
    echo: EvaluatorEcho,
}

impl EvaluatorSet {
    pub fn from_settings(settings: &Settings) -> Self {
        let ev = &settings.evaluator;
        let (language_model, nli, echo): (Box<dyn LanguageModelClient>, Box<dyn NliClient>, _) = match &ev.endpoint {
            Some(url) => {
                let endpoint = Endpoint::new(url, ev.timeout);
                let echo = EvaluatorEcho {
                    endpoint: Some(url.clone()),
                    embedder: String::new(),
                    conf_accuracy: None,
                    nli_accuracy: None,
                };
                (Box::new(HttpLanguageModel(endpoint.clone())), Box::new(HttpNli(endpoint)), echo)
            }
            None => {
                let (conf, nli) = mock_oracles(settings.filter.seed, ev.conf_accuracy, ev.nli_accuracy);
                let echo = EvaluatorEcho {
                    endpoint: None,
                    embedder: String::new(),
                    conf_accuracy: Some(ev.conf_accuracy),
                    nli_accuracy: Some(ev.nli_accuracy),
                };
                (Box::new(conf), Box::new(nli), echo)
            }
        };
        let embedder: Box<dyn Embedder> = match (ev.embedder, &ev.endpoint) {
            (EmbedderKind::Remote, Some(url)) => {
                Box::new(HttpEmbedder::new(Endpoint::new(url, ev.timeout), tdf_core::vector::DEFAULT_DIM))
            }
            _ => Box::new(HashEmbedder::default()),
        };
        let echo = EvaluatorEcho {
            embedder: match ev.embedder {
                EmbedderKind::Hash => "hash".into(),
                EmbedderKind::Remote => "remote".into(),
            },
            ..echo
        };
        Self { language_model, nli, embedder, template: PromptTemplate::default(), echo }
    }

    pub fn evaluators(&self) -> Evaluators<'_> {
        Evaluators {
            language_model: self.language_model.as_ref(),
            nli: self.nli.as_ref(),
            embedder: self.embedder.as_ref(),
            template: &self.template,
        }
    }
}

fn fanout(settings: &Settings) -> Result<ThreadFanOut> {
    ThreadFanOut::new(settings.filter.parallelism).context("cannot start evaluation workers")
}

fn labeled_accuracy(tree: &DecisionTree, records: &[tdf_core::EvalRecord], labels: &[u8]) -> f64 {
    let hits = records.iter().zip(labels).filter(|(r, &l)| tree.predict(r) == l).count();
    hits as f64 / records.len().max(1) as f64
}

pub struct TrainSummary {
    pub records: usize,
    pub kb_size: usize,
    pub tree_depth: usize,
    pub tree_nodes: usize,
    pub train_accuracy: f64,
    pub valid_accuracy: Option<f64>,
}

impl fmt::Display for TrainSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "training records {}", self.records)?;
        writeln!(f, "knowledge base {}", self.kb_size)?;
        writeln!(f, "tree depth {} nodes {}", self.tree_depth, self.tree_nodes)?;
        write!(f, "training accuracy {:.4}", self.train_accuracy)?;
        if let Some(v) = self.valid_accuracy {
            write!(f, "\nvalidation accuracy {v:.4}")?;
        }
        Ok(())
    }
}

pub fn train_tree(args: &TrainTreeArgs) -> Result<TrainSummary> {
    let settings = Settings::resolve(&args.common, &args.eval, &args.pipeline, None, None)?;
    let train_items = read_dataset(&args.train)?;
    if let Some(bad) = train_items.iter().find(|i| i.gold_flag().is_none()) {
        bail!("{}: record {:?} has no flag", display(&args.train), bad.id());
    }
    let valid_items = args.valid.as_deref().map(read_dataset).transpose()?;
    let trusted = match &args.trusted {
        Some(path) => read_dataset(path)?,
        None => train_items.iter().filter(|i| i.gold_flag() == Some(1)).cloned().collect(),
    };
    create_dir(&args.out)?;
    let set = EvaluatorSet::from_settings(&settings);
    let ev = set.evaluators();
    let pool = fanout(&settings)?;
    let config = &settings.filter;
    let mut kb = VectorIndex::new(ev.embedder.dim(), &config.index_params)?;
    initialize_kb(&mut kb, &trusted, ev.embedder).context("cannot embed the trusted statements")?;
    let (records, labels) = build_training_features(&train_items, &kb, &ev, config, &pool)
        .with_context(|| format!("feature extraction for {} failed", display(&args.train)))?;
    let tree = train(&records, &labels, config.tree_params)?;
    write_tree(&args.out.join("tree.jsonl"), &tree)?;
    write_kb(&args.out.join("kb.jsonl"), &kb)?;
    let valid_accuracy = match &valid_items {
        Some(items) => {
            let (records, labels) = build_training_features(items, &kb, &ev, config, &pool)
                .context("feature extraction for the validation file failed")?;
            Some(labeled_accuracy(&tree, &records, &labels))
        }
        None => None,
    };
    Ok(TrainSummary {
        records: records.len(),
        kb_size: kb.len(),
        tree_depth: tree.depth(),
        tree_nodes: tree.nodes().len(),
        train_accuracy: labeled_accuracy(&tree, &records, &labels),
        valid_accuracy,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsDoc {
    pub mode: FilterMode,
    pub confusion: Confusion,
    pub metrics: Metrics,
}

pub struct FilterSummary {
    pub manifest: Manifest,
    pub metrics: Option<MetricsDoc>,
}

impl fmt::Display for FilterSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.manifest.totals;
        writeln!(f, "mode {}", self.manifest.mode)?;
        writeln!(f, "accepted {} rejected {} deferred {}", t.accepted, t.rejected, t.deferred_final)?;
        write!(f, "kb size by iteration {:?}", self.manifest.kb_size_by_iteration)?;
        if let Some(doc) = &self.metrics {
            let m = &doc.metrics;
            write!(f, "\naccuracy {:.4} precision {:.4} recall {:.4} f1 {:.4}", m.accuracy, m.precision, m.recall, m.f1)?;
        }
        Ok(())
    }
}

pub fn filter(args: &FilterArgs) -> Result<FilterSummary> {
    let settings = Settings::resolve(&args.common, &args.eval, &args.pipeline, args.mode, args.distractors.as_deref())?;
    let mode = settings.filter.mode;
    require_file(&args.test, "test dataset")?;
    if mode != FilterMode::Basic {
        let Some(tree) = &args.tree else { bail!("configuration error: {mode} mode needs --tree") };
        require_file(tree, "tree snapshot")?;
    }
    if mode == FilterMode::SelfNli {
        let Some(kb) = &args.kb else { bail!("configuration error: self_nli mode needs --kb") };
        require_file(kb, "knowledge-base snapshot")?;
    }
    if mode == FilterMode::Fake {
        let Some(pool) = &settings.distractors else { bail!("configuration error: fake mode needs --distractors") };
        require_file(pool, "distractor pool")?;
    }
    let items = read_dataset(&args.test)?;
    let tree = args.tree.as_deref().filter(|_| mode != FilterMode::Basic).map(read_tree).transpose()?;
    let snapshot = args.kb.as_deref().filter(|_| mode != FilterMode::Basic).map(read_kb).transpose()?;
    let distractors = match (&settings.distractors, mode) {
        (Some(path), FilterMode::Fake) => read_dataset(path)?,
        _ => Vec::new(),
    };
    create_dir(&args.out)?;

    let mut config = settings.filter.clone();
    let set = EvaluatorSet::from_settings(&settings);
    let ev = set.evaluators();
    let pool = fanout(&settings)?;
    let report = match (mode, tree) {
        (FilterMode::Basic, _) => run_basic(&items, &ev, &config, &pool)?,
        (_, Some(tree)) => {
            let mut kb = match snapshot {
                Some(snap) => {
                    ensure!(
                        snap.header.dim == ev.embedder.dim(),
                        "snapshot dimension {} does not match the embedder's {}",
                        snap.header.dim,
                        ev.embedder.dim()
                    );
                    if !settings.index_explicit {
                        config.index_params = snap.params(config.index_params.seed);
                    }
                    snap.into_index(&config.index_params)?
                }
                None => VectorIndex::new(ev.embedder.dim(), &config.index_params)?,
            };
            let report = run_filter(&items, &mut kb, &tree, &ev, &config, &distractors, &pool)?;
            if mode == FilterMode::SelfNli {
                write_kb(&args.out.join("kb.jsonl"), &kb)?;
            }
            report
        }
        (_, None) => unreachable!("tree presence checked above"),
    };

    let inputs = ManifestInputs {
        config: settings.config_path.as_deref().map(display),
        test: display(&args.test),
        kb: args.kb.as_deref().map(display),
        tree: args.tree.as_deref().map(display),
        distractors: settings.distractors.as_deref().filter(|_| mode == FilterMode::Fake).map(display),
        output: display(&args.out),
    };
    let manifest = Manifest::new(&report, inputs, set.echo.clone());
    let manifest_path = args.out.join("manifest.json");
    fs::write(&manifest_path, manifest.to_json()?).with_context(|| format!("cannot write {}", manifest_path.display()))?;

    let mut paths = String::new();
    for o in &report.outcomes {
        if let Some(path) = &o.path {
            paths.push_str(&serde_json::to_string(&serde_json::json!({ "id": o.id, "path": path.to_string() }))?);
            paths.push('\n');
        }
    }
    fs::write(args.out.join("paths.jsonl"), paths).context("cannot write decision paths")?;

    let labeled = items.iter().all(|i| i.gold_flag().is_some());
    let metrics_doc = if labeled && !items.is_empty() {
        let c = confusion(&report.outcomes, &items)?;
        match metrics(&c.matrix) {
            Ok(m) => Some(MetricsDoc { mode, confusion: c, metrics: m }),
            Err(_) => None,
        }
    } else {
        None
    };
    if let Some(doc) = &metrics_doc {
        let mut text = serde_json::to_string_pretty(doc)?;
        text.push('\n');
        fs::write(args.out.join("metrics.json"), text).context("cannot write metrics")?;
    }
    Ok(FilterSummary { manifest, metrics: metrics_doc })
}

pub struct CompareOutput {
    pub comparison: tdf_core::metrics::Comparison,
    pub table: String,
}

pub fn compare(args: &CompareArgs) -> Result<CompareOutput> {
    let items = read_dataset(&args.dataset)?;
    let reports = args
        .manifests
        .iter()
        .map(|p| Manifest::read(p).and_then(|m| m.to_report()).with_context(|| format!("manifest {}", display(p))))
        .collect::<Result<Vec<_>>>()?;
    let comparison = compare_modes(&reports, &items)?;
    if let Some(out) = &args.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        let mut text = serde_json::to_string_pretty(&comparison)?;
        text.push('\n');
        fs::write(out, text).with_context(|| format!("cannot write {}", out.display()))?;
    }
    let table = comparison_table(&comparison);
    Ok(CompareOutput { comparison, table })
}

pub fn mock_state(args: &ServeMockArgs) -> Result<MockState> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let seed = args.common.seed.or(file.seed).unwrap_or(0);
    let conf = args.conf_accuracy.or(file.conf_accuracy).unwrap_or(crate::config::DEFAULT_CONF_ACCURACY);
    let nli = args.nli_accuracy.or(file.nli_accuracy).unwrap_or(crate::config::DEFAULT_NLI_ACCURACY);
    let mut labels: Vec<KnowledgeItem> = Vec::new();
    for path in &args.labels {
        labels.extend(read_dataset(path)?);
    }
    MockState::new(seed, conf, nli, labels)
}

pub fn serve_mock(args: &ServeMockArgs) -> Result<()> {
    let state = mock_state(args)?;
    let known = state.known_statements();
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .with_context(|| format!("invalid listen address {}:{}", args.host, args.port))?;
    let server = MockServer::spawn(addr, state).with_context(|| format!("cannot listen on {addr}"))?;
    println!("listening on {} ({known} statements)", server.url());
    server.wait().context("mock service stopped")
}

pub struct SynthSummary {
    pub items: usize,
    pub distractors: usize,
}

impl fmt::Display for SynthSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "dataset {}\ndistractors {}", self.items, self.distractors)
    }
}

pub fn synth(args: &SynthArgs) -> Result<SynthSummary> {
    ensure!(args.topics > 0, "at least one topic is required");
    let params = SynthParams { items: args.items, topics: args.topics, seed: args.seed, ..SynthParams::default() };
    let items = synthetic::generate(&params);
    let pool = synthetic::distractors(args.distractor_count, args.seed);
    create_dir(&args.out)?;
    write_dataset(&args.out.join("dataset.jsonl"), &items)?;
    write_dataset(&args.out.join("distractors.jsonl"), &pool)?;
    Ok(SynthSummary { items: items.len(), distractors: pool.len() })
}
