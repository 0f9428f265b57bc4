//! Seeded synthetic corpus: topical statements that embed close to their
//! topic siblings and far from other topics, plus an unrelated distractor pool.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdf_core::seed::derive_seed;
use tdf_core::KnowledgeItem;

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ren", "tu", "sa", "vo", "di", "ne", "pra", "zul", "fe", "go", "hi", "jan", "qu", "bri", "ste",
    "wo", "xa", "yel", "ci", "mor", "tal",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub items: usize,
    pub topics: usize,
    /// Words every statement of a topic shares.
    pub core_words: usize,
    /// Words private to each statement.
    pub unique_words: usize,
    pub correct_rate: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self { items: 5000, topics: 40, core_words: 20, unique_words: 2, correct_rate: 0.7, seed: 0 }
    }
}

fn word(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    (0..syllables).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
}

/// Labeled statements with ids `tNN:NNNNNN`; the topic is the id prefix.
pub fn generate(params: &SynthParams) -> Vec<KnowledgeItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, "synth"));
    let cores: Vec<Vec<String>> = (0..params.topics)
        .map(|t| (0..params.core_words).map(|w| format!("{}{t}x{w}", word(&mut rng, 2))).collect())
        .collect();
    (0..params.items)
        .map(|i| {
            let topic = rng.gen_range(0..params.topics);
            let correct = rng.gen_bool(params.correct_rate);
            let mut words = cores[topic].clone();
            words.extend((0..params.unique_words).map(|u| format!("{}{i}u{u}", word(&mut rng, 3))));
            if !correct {
                words.push("not".into());
            }
            words.shuffle(&mut rng);
            KnowledgeItem::new(format!("t{topic:02}:{i:06}"), words.join(" "), Some(correct as u8))
                .expect("generated statements are non-empty")
        })
        .collect()
}

/// Unlabeled statements with ids `d:NNN`, sharing no vocabulary with
/// [`generate`].
pub fn distractors(count: usize, seed: u64) -> Vec<KnowledgeItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "distractors"));
    (0..count)
        .map(|i| {
            let len = rng.gen_range(10..16);
            let text: Vec<String> = (0..len).map(|_| format!("{}q", word(&mut rng, 2))).collect();
            KnowledgeItem::new(format!("d:{i:03}"), text.join(" "), None).expect("non-empty")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tdf_core::{cosine_similarity, embed, HashEmbedder};

    #[test]
    fn deterministic_and_unique() {
        let p = SynthParams { items: 300, ..Default::default() };
        let a = generate(&p);
        assert_eq!(a, generate(&p));
        let mut ids: Vec<&str> = a.iter().map(|i| i.id()).collect();
        ids.dedup();
        assert_eq!(ids.len(), 300);
        let mut texts: Vec<&str> = a.iter().map(|i| i.text()).collect();
        texts.sort();
        texts.dedup();
        assert_eq!(texts.len(), 300);
        assert_ne!(a, generate(&SynthParams { seed: 1, ..p }));
    }

    #[test]
    fn topics_separate_under_hash_embedding() {
        let e = HashEmbedder::default();
        let items = generate(&SynthParams { items: 600, ..Default::default() });
        let vecs: Vec<_> = items.iter().map(|i| embed(i.text(), &e).unwrap()).collect();
        let (mut same, mut cross) = (Vec::new(), Vec::new());
        for a in 0..items.len() {
            for b in a + 1..items.len() {
                let s = cosine_similarity(&vecs[a], &vecs[b]).unwrap();
                let topic = |i: &KnowledgeItem| i.id()[..3].to_string();
                if topic(&items[a]) == topic(&items[b]) { same.push(s) } else { cross.push(s) }
            }
        }
        let frac = |v: &[f64], f: &dyn Fn(f64) -> bool| v.iter().filter(|&&s| f(s)).count() as f64 / v.len() as f64;
        let same_hi = frac(&same, &|s| s >= 0.85);
        let cross_hi = frac(&cross, &|s| s >= 0.85);
        println!("same-topic >= 0.85: {same_hi:.4}, cross-topic: {cross_hi:.6}");
        assert!(same_hi > 0.9, "{same_hi}");
        assert!(cross_hi < 1e-4, "{cross_hi}");
        let pool = distractors(500, 0);
        let worst = pool
            .iter()
            .flat_map(|d| {
                let v = embed(d.text(), &e).unwrap();
                vecs.iter().map(move |w| cosine_similarity(&v, w).unwrap()).collect::<Vec<_>>()
            })
            .fold(f64::MIN, f64::max);
        assert!(worst < 0.85, "{worst}");
    }
}
