//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.
//!
//! Run with `cargo test -p tdf --test acceptance -- --nocapture`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tdf::cli::{self, Cli, Command};
use tdf::dataset::{read_dataset, write_dataset};
use tdf::report::Manifest;
use tdf::server::{MockServer, MockState};
use tdf::synthetic::{distractors, generate, SynthParams};
use tdf_core::tree::{train, Node};
use tdf_core::vector::{FlatIndex, IvfIndex};
use tdf_core::{
    metrics, ConfusionMatrix, Embedding, EvalRecord, IndexMode, IndexParams, KnowledgeItem, NliScores, NliVerdict,
    TreeParams, TrustedEntry,
};

const DIM: usize = 64;
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn timed(f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = f();
    Outcome { pass, detail, elapsed: start.elapsed() }
}

fn gaussian_unit(rng: &mut ChaCha8Rng, center: Option<&[f64]>, sigma: f64) -> Embedding {
    let values: Vec<f64> = (0..DIM)
        .map(|d| center.map_or(0.0, |c| c[d]) + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Embedding::normalize(values).unwrap()
}

fn entry(i: usize, vector: Embedding) -> TrustedEntry {
    TrustedEntry::new(KnowledgeItem::new(format!("{i:05}"), format!("v{i}"), None).unwrap(), vector)
}

/// Plain scan: highest dot product, ties to the smallest id.
fn linear_scan<'a>(entries: &'a [TrustedEntry], q: &Embedding) -> Option<(&'a str, f64)> {
    let mut best: Option<(&str, f64)> = None;
    for e in entries {
        let dot: f64 = e.vector.as_slice().iter().zip(q.as_slice()).map(|(a, b)| a * b).sum();
        let dot = dot.clamp(-1.0, 1.0);
        best = match best {
            Some((id, s)) if s > dot || (s == dot && id < e.id()) => Some((id, s)),
            _ => Some((e.id(), dot)),
        };
    }
    best
}

fn search_exactness() -> Outcome {
    timed(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mut flat = FlatIndex::new(DIM);
        for i in 0..1000 {
            flat.insert(entry(i, gaussian_unit(&mut rng, None, 1.0))).unwrap();
        }
        let mut agree = 0;
        for _ in 0..200 {
            let q = gaussian_unit(&mut rng, None, 1.0);
            let got = flat.search_top1(&q).unwrap().map(|(e, s)| (e.id().to_owned(), s));
            let want = linear_scan(flat.entries(), &q);
            if let (Some((gi, gs)), Some((wi, ws))) = (&got, want) {
                if gi == wi && (gs - ws).abs() <= 1e-12 {
                    agree += 1;
                }
            }
        }
        (agree == 200, format!("{agree}/200 queries agree with the linear scan"))
    })
}

fn ivf_consistency() -> Outcome {
    timed(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let centers: Vec<Vec<f64>> =
            (0..32).map(|_| gaussian_unit(&mut rng, None, 1.0).into_inner()).collect();
        let sigma = 0.25;
        let entries: Vec<TrustedEntry> =
            (0..4000).map(|i| entry(i, gaussian_unit(&mut rng, Some(&centers[i % 32]), sigma))).collect();
        let queries: Vec<Embedding> =
            (0..500).map(|i| gaussian_unit(&mut rng, Some(&centers[(i * 7) % 32]), sigma)).collect();
        let mut flat = FlatIndex::new(DIM);
        for e in &entries {
            flat.insert(e.clone()).unwrap();
        }
        let params = IndexParams { mode: IndexMode::Ivf, nlist: Some(32), nprobe: 8, seed: 7, ..Default::default() };
        let ivf = IvfIndex::build(DIM, entries, &params).unwrap();
        let top = |r: Option<(&TrustedEntry, f64)>| r.map(|(e, s)| (e.id().to_owned(), s.to_bits()));
        let (mut exact, mut hits) = (0, 0);
        for q in &queries {
            let want = top(flat.search_top1(q).unwrap());
            if top(ivf.search_top1_probing(q, ivf.nlist()).unwrap()) == want {
                exact += 1;
            }
            if top(ivf.search_top1(q).unwrap()).map(|t| t.0) == want.map(|t| t.0) {
                hits += 1;
            }
        }
        let recall = hits as f64 / queries.len() as f64;
        (
            exact == queries.len() && recall >= 0.90 && ivf.nlist() == 32 && ivf.nprobe() == 8,
            format!("full probe {exact}/{} exact; nlist 32 nprobe 8 recall {recall:.4}", queries.len()),
        )
    })
}

fn gini(pos: usize, n: usize) -> f64 {
    let p = pos as f64 / n as f64;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

/// Lowest weighted child impurity over every admissible split of `rows`.
fn best_split_impurity(records: &[EvalRecord], labels: &[u8], rows: &[usize], min_leaf: usize) -> Option<f64> {
    let mut best: Option<f64> = None;
    for f in 0..4 {
        let mut values: Vec<f64> = rows.iter().map(|&r| records[r].features()[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| records[r].features()[f] <= t);
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let pos = |side: &[usize]| side.iter().filter(|&&r| labels[r] == 1).count();
            let n = rows.len() as f64;
            let score = left.len() as f64 / n * gini(pos(&left), left.len())
                + right.len() as f64 / n * gini(pos(&right), right.len());
            best = Some(best.map_or(score, |b: f64| b.min(score)));
        }
    }
    best
}

fn tree_correctness() -> Outcome {
    timed(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        let records: Vec<EvalRecord> = (0..200)
            .map(|_| EvalRecord::new(rng.gen_range(0..2), rng.gen_range(0.5..1.0), rng.gen_range(-1..2), rng.gen_range(0.34..1.0)).unwrap())
            .collect();
        let labels: Vec<u8> = records.iter().map(|r| (r.y1 == 1 && r.y2 != 0) as u8).collect();
        let params = TreeParams::default();
        let tree = train(&records, &labels, params).unwrap();
        let correct = records.iter().zip(&labels).filter(|(r, &l)| tree.predict(r) == l).count();
        let nodes = tree.nodes();
        let mut reach: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
        reach[0] = (0..records.len()).collect();
        let (mut internal, mut optimal) = (0, 0);
        for id in 0..nodes.len() {
            if let Node::Split { feature, threshold, left, right } = nodes[id] {
                internal += 1;
                let rows = reach[id].clone();
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| records[i].features()[feature] <= threshold);
                let pos = |side: &[usize]| side.iter().filter(|&&i| labels[i] == 1).count();
                let n = rows.len() as f64;
                let chosen = l.len() as f64 / n * gini(pos(&l), l.len()) + r.len() as f64 / n * gini(pos(&r), r.len());
                if let Some(best) = best_split_impurity(&records, &labels, &rows, params.min_samples_leaf) {
                    if chosen <= best + 1e-12 {
                        optimal += 1;
                    }
                }
                reach[left] = l;
                reach[right] = r;
            }
        }
        (
            correct == 200 && internal > 0 && optimal == internal,
            format!("training accuracy {}/200; {optimal}/{internal} internal splits optimal", correct),
        )
    })
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 { 0.0 } else { num as f64 / den as f64 }
}

fn metrics_identities() -> Outcome {
    timed(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let mut good = 0;
        for k in 0..100 {
            let mut c = [0usize; 4];
            for v in &mut c {
                *v = if k % 10 == 0 { rng.gen_range(0..3) } else { rng.gen_range(0..1000) };
            }
            if c.iter().sum::<usize>() == 0 {
                c[3] = 1;
            }
            let [tp, fp, fn_, tn] = c;
            let m = metrics(&ConfusionMatrix::new(tp, fp, fn_, tn)).unwrap();
            let accuracy = (tp + tn) as f64 / (tp + fp + fn_ + tn) as f64;
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
            if close(m.accuracy, accuracy)
                && close(m.precision, precision)
                && close(m.recall, recall)
                && close(m.f1, f1)
                && m.degenerate.precision == (tp + fp == 0)
                && m.degenerate.recall == (tp + fn_ == 0)
            {
                good += 1;
            }
        }
        let hand = metrics(&ConfusionMatrix::new(9, 1, 1, 9)).unwrap();
        let hand_ok = [hand.accuracy, hand.precision, hand.recall, hand.f1].iter().all(|v| (v - 0.9).abs() <= 1e-12);
        (good == 100 && hand_ok, format!("{good}/100 random matrices match; (9,1,1,9) -> 0.9 all: {hand_ok}"))
    })
}

fn nli_contract() -> Outcome {
    timed(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(808);
        let mut good = 0;
        for k in 0..10_000 {
            let mut raw: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
            match k % 4 {
                0 => {
                    let s: f64 = raw.iter().sum();
                    raw.iter_mut().for_each(|v| *v /= s);
                }
                1 => {
                    let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
                    raw.iter_mut().for_each(|v| *v *= scale);
                }
                2 => {
                    let (a, b) = (rng.gen_range(0..3), rng.gen_range(0..3));
                    raw[a] = raw[b];
                }
                _ => raw = [1.0, 1.0, 1.0].map(|v: f64| v * rng.gen_range(0.1..5.0)),
            }
            let Ok(v) = NliVerdict::from_scores(NliScores { entailment: raw[0], contradiction: raw[1], neutral: raw[2] }) else {
                continue;
            };
            let p = v.probs;
            // entailment wins ties over contradiction, which wins over neutral
            let expected = if p[0] >= p[1] && p[0] >= p[2] {
                1
            } else if p[1] >= p[2] {
                0
            } else {
                -1
            };
            let max = p[0].max(p[1]).max(p[2]);
            let sum: f64 = p.iter().sum();
            if v.y2 == expected && v.c2 == max && v.c2 >= 1.0 / 3.0 && (sum - 1.0).abs() <= 1e-6 {
                good += 1;
            }
        }
        (good == 10_000, format!("{good}/10000 triples satisfy the verdict contract"))
    })
}

fn run(args: &[&str]) -> anyhow::Result<()> {
    let cli = Cli::try_parse_from(std::iter::once("tdf").chain(args.iter().copied()))?;
    match cli.command {
        Command::Split(a) => cli::split(&a).map(drop),
        Command::TrainTree(a) => cli::train_tree(&a).map(drop),
        Command::Filter(a) => cli::filter(&a).map(drop),
        _ => unreachable!(),
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// One seed of the three-arm experiment against a live mock service.
struct SeedRun {
    root: PathBuf,
    seed: u64,
    server: MockServer,
}

impl SeedRun {
    fn prepare(base: &Path, seed: u64) -> Self {
        let root = base.join(format!("seed{seed}"));
        fs::create_dir_all(&root).unwrap();
        let items = generate(&SynthParams { items: 5000, topics: 40, seed, ..Default::default() });
        let pool = distractors(500, seed);
        write_dataset(&root.join("dataset.jsonl"), &items).unwrap();
        write_dataset(&root.join("distractors.jsonl"), &pool).unwrap();
        let mut labels = items;
        labels.extend(pool);
        let state = MockState::new(seed, 0.85, 0.95, labels).unwrap();
        let server = MockServer::spawn("127.0.0.1:0".parse().unwrap(), state).unwrap();
        Self { root, seed, server }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn common(&self) -> Vec<String> {
        vec!["--seed".into(), self.seed.to_string(), "--endpoint".into(), self.server.url()]
    }

    fn split_and_train(&self) {
        let seed = self.seed.to_string();
        run(&["split", "--dataset", p(&self.path("dataset.jsonl")), "--seed", &seed, "--out", p(&self.path("split"))]).unwrap();
        let mut args: Vec<String> = ["train-tree", "--train", p(&self.path("split/train.jsonl")), "--out", p(&self.path("model"))]
            .map(String::from)
            .to_vec();
        args.extend(self.common());
        run(&args.iter().map(String::as_str).collect::<Vec<_>>()).unwrap();
    }

    fn filter(&self, mode: &str) -> Manifest {
        let out = self.path(mode);
        let mut args: Vec<String> = [
            "filter", "--mode", mode,
            "--test", p(&self.path("split/test.jsonl")),
            "--kb", p(&self.path("model/kb.jsonl")),
            "--tree", p(&self.path("model/tree.jsonl")),
            "--distractors", p(&self.path("distractors.jsonl")),
            "--out", p(&out),
        ]
        .map(String::from)
        .to_vec();
        args.extend(self.common());
        run(&args.iter().map(String::as_str).collect::<Vec<_>>()).unwrap();
        Manifest::read(&out.join("manifest.json")).unwrap()
    }

    fn accuracy(&self, mode: &str) -> f64 {
        let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(self.path(mode).join("metrics.json")).unwrap()).unwrap();
        doc["metrics"]["accuracy"].as_f64().unwrap()
    }

    fn outputs(&self) -> Vec<(PathBuf, Vec<u8>)> {
        ["split/train.jsonl", "split/test.jsonl", "model/tree.jsonl", "model/kb.jsonl", "basic/manifest.json", "self_nli/manifest.json", "self_nli/kb.jsonl", "fake/manifest.json"]
            .iter()
            .map(|rel| (self.path(rel), fs::read(self.path(rel)).unwrap()))
            .collect()
    }
}

fn conserved(m: &Manifest, test_size: usize) -> bool {
    let t = m.totals;
    t.input == test_size
        && t.accepted + t.rejected + t.deferred_final == t.input
        && m.outcomes.len() == t.input
        && m.kb_size_by_iteration.windows(2).all(|w| w[0] <= w[1])
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn acceptance() {
    let mut report: Vec<(&str, Outcome)> = vec![
        ("1 search exactness", search_exactness()),
        ("2 IVF consistency and recall", ivf_consistency()),
        ("3 decision-tree correctness", tree_correctness()),
        ("4 metrics identities", metrics_identities()),
    ];
    let limits = [5.0, 10.0, 1.0];
    for (i, limit) in limits.iter().enumerate() {
        let o = &mut report[i].1;
        if o.elapsed.as_secs_f64() >= *limit {
            o.pass = false;
            o.detail.push_str(&format!(" (over the {limit} s budget)"));
        }
    }

    let work = tempfile::tempdir().unwrap();
    let runs: Vec<SeedRun> = SEEDS.iter().map(|&s| SeedRun::prepare(work.path(), s)).collect();
    let mut conservation = true;
    let mut check = |m: &Manifest, run: &SeedRun| {
        let test_size = read_dataset(&run.path("split/test.jsonl")).unwrap().len();
        conservation &= conserved(m, test_size);
    };

    let start = Instant::now();
    let (mut basic, mut self_nli) = (Vec::new(), Vec::new());
    for run in &runs {
        run.split_and_train();
        check(&run.filter("basic"), run);
        check(&run.filter("self_nli"), run);
        basic.push(run.accuracy("basic"));
        self_nli.push(run.accuracy("self_nli"));
    }
    let elapsed5 = start.elapsed();
    let gain = mean(&self_nli) - mean(&basic);
    let wins = basic.iter().zip(&self_nli).filter(|(b, s)| s >= b).count();
    let fmt = |v: &[f64]| v.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>().join(" ");
    report.push((
        "5 self_nli beats basic",
        Outcome {
            pass: gain >= 0.01 && wins >= 4 && elapsed5.as_secs_f64() < 120.0,
            detail: format!("mean gain {gain:+.4}, self_nli >= basic in {wins}/5 seeds (basic {}; self_nli {})", fmt(&basic), fmt(&self_nli)),
            elapsed: elapsed5,
        },
    ));

    let start = Instant::now();
    let mut fake = Vec::new();
    for run in &runs {
        check(&run.filter("fake"), run);
        fake.push(run.accuracy("fake"));
    }
    let elapsed6 = start.elapsed();
    let margin = mean(&self_nli) - mean(&fake);
    report.push((
        "6 fake matching hurts",
        Outcome {
            pass: margin >= 0.005 && elapsed6.as_secs_f64() < 120.0,
            detail: format!("mean self_nli - mean fake = {margin:+.4} (fake {})", fmt(&fake)),
            elapsed: elapsed6,
        },
    ));

    let start = Instant::now();
    let first: Vec<Vec<(PathBuf, Vec<u8>)>> = runs.iter().map(SeedRun::outputs).collect();
    for run in &runs {
        run.split_and_train();
        for mode in ["basic", "self_nli", "fake"] {
            check(&run.filter(mode), run);
        }
    }
    let (mut same, mut files) = (0, 0);
    for (run, before) in runs.iter().zip(&first) {
        for (after, (path, bytes)) in run.outputs().iter().zip(before) {
            files += 1;
            if after.0 == *path && after.1 == *bytes {
                same += 1;
            }
        }
    }
    report.push((
        "7 conservation and determinism",
        Outcome {
            pass: conservation && same == files,
            detail: format!("30 runs conserve items and grow the kb monotonically: {conservation}; {same}/{files} outputs byte-identical on rerun"),
            elapsed: start.elapsed(),
        },
    ));
    report.push(("8 NLI contract", nli_contract()));
    drop(runs);

    println!();
    for (name, o) in &report {
        println!("{} [{name}] {} ({:.2}s)", if o.pass { "PASS" } else { "FAIL" }, o.detail, o.elapsed.as_secs_f64());
    }
    let failed: Vec<&str> = report.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
