use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::evalkit::{doc_sentiment, write_dataset_path, DocSentiment, EvalError, Phenomena, Shot, Split, StanceExample};
use crate::kgraph::{GraphBuilder, KnowledgeGraph, LexiconTagger, Pos};
use crate::numerics::RngStream;
use crate::stance::StanceLabel;
use crate::text::words;
use crate::textenc::{Polarity, RatedText, SentimentLexicon};

pub const RELATED_TO: &str = "RelatedTo";
pub const IS_A: &str = "IsA";

const FILLERS: [&str; 10] = ["honestly", "i", "think", "that", "really", "is", "so", "today", "the", "my"];
const NEUTRAL_WORDS: [&str; 4] = ["usual", "plain", "ordinary", "average"];

/// Sizes and signal strengths of the generated benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub categories: usize,
    pub topics_per_category: usize,
    pub aliases_per_topic: usize,
    /// Topics held out of training entirely.
    pub zero_shot_topics: usize,
    /// Topics with only `few_shot_train_examples` training rows each.
    pub few_shot_topics: usize,
    pub few_shot_train_examples: usize,
    /// Unlinked nouns seen in training, and a disjoint set for dev/test.
    pub train_distractors: usize,
    pub eval_distractors: usize,
    /// Share of lexicon words that never occur in stance training.
    pub heldout_sentiment_fraction: f64,
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    /// Probability that a document mentions a linked alias of its topic.
    pub link_prob: f64,
    /// Probability that a document carries no lexicon word.
    pub no_sentiment_prob: f64,
    /// Share of test rows whose Pro/Con gold label is flipped (flagged Sarc).
    pub sarcasm_rate: f64,
    pub rating_corpus_size: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            categories: 4,
            topics_per_category: 4,
            aliases_per_topic: 4,
            zero_shot_topics: 4,
            few_shot_topics: 2,
            few_shot_train_examples: 3,
            train_distractors: 32,
            eval_distractors: 32,
            heldout_sentiment_fraction: 0.4,
            train_size: 480,
            dev_size: 90,
            test_size: 90,
            link_prob: 0.6,
            no_sentiment_prob: 0.15,
            sarcasm_rate: 0.05,
            rating_corpus_size: 800,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let topics = self.categories * self.topics_per_category;
        let bad = |m: &str| Err(EvalError::Config(format!("synthetic: {m}")));
        if topics == 0 || self.aliases_per_topic == 0 {
            return bad("need at least one topic with one alias");
        }
        if self.zero_shot_topics + self.few_shot_topics >= topics {
            return bad("zero- and few-shot topics must leave a training topic");
        }
        if self.zero_shot_topics + self.few_shot_topics == 0 {
            return bad("dev/test need a zero- or few-shot topic");
        }
        if self.train_distractors == 0 || self.eval_distractors == 0 {
            return bad("distractor pools must be nonempty");
        }
        for (name, p) in [
            ("heldout_sentiment_fraction", self.heldout_sentiment_fraction),
            ("link_prob", self.link_prob),
            ("no_sentiment_prob", self.no_sentiment_prob),
            ("sarcasm_rate", self.sarcasm_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.heldout_sentiment_fraction) || self.heldout_sentiment_fraction == 0.0 {
            return bad("heldout_sentiment_fraction must lie in (0, 1)");
        }
        if self.train_size == 0 || self.dev_size == 0 || self.test_size == 0 {
            return bad("split sizes must be positive");
        }
        Ok(())
    }
}

/// Everything the pipeline needs, generated together.
#[derive(Clone, Debug)]
pub struct SyntheticSuite {
    pub graph: KnowledgeGraph,
    pub lexicon: SentimentLexicon,
    pub pos: LexiconTagger,
    pub rating_corpus: Vec<RatedText>,
    pub train: Vec<StanceExample>,
    pub dev: Vec<StanceExample>,
    pub test: Vec<StanceExample>,
    /// Lexicon words that only occur in dev/test stance documents.
    pub heldout_sentiment: Vec<String>,
}

impl SyntheticSuite {
    /// `kg.tsv`, `pos.tsv`, `lexicon.tsv`, `ratings.tsv` and one CSV per split.
    pub fn write(&self, dir: &Path) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir)?;
        let mut kg = String::new();
        for (h, r, t) in self.graph.labeled_triples() {
            let _ = writeln!(kg, "{h}\t{r}\t{t}");
        }
        std::fs::write(dir.join("kg.tsv"), kg)?;
        let mut pos = String::new();
        for (w, p) in self.pos.sorted_entries() {
            let tag = match p {
                Pos::Noun => "NOUN",
                Pos::Adj => "ADJ",
                Pos::Adv => "ADV",
                Pos::Verb => "VERB",
                Pos::Other => "X",
            };
            let _ = writeln!(pos, "{w}\t{tag}");
        }
        std::fs::write(dir.join("pos.tsv"), pos)?;
        std::fs::write(dir.join("lexicon.tsv"), self.lexicon.to_tsv())?;
        let mut ratings = String::new();
        for r in &self.rating_corpus {
            let _ = writeln!(ratings, "{}\t{}", r.text, r.rating);
        }
        std::fs::write(dir.join("ratings.tsv"), ratings)?;
        write_dataset_path(&dir.join("train.csv"), &self.train)?;
        write_dataset_path(&dir.join("dev.csv"), &self.dev)?;
        write_dataset_path(&dir.join("test.csv"), &self.test)?;
        Ok(())
    }
}

struct Names {
    used: BTreeSet<String>,
}

impl Names {
    fn fresh(&mut self, rng: &mut RngStream) -> String {
        const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
        const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
        loop {
            let mut w = String::new();
            for _ in 0..3 {
                w.push_str(ONSETS[rng.below(ONSETS.len())]);
                w.push_str(VOWELS[rng.below(VOWELS.len())]);
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

struct Topic {
    name: String,
    aliases: Vec<String>,
}

struct Ctx<'a> {
    topics: &'a [Topic],
    distractors: &'a [String],
    positive: Vec<&'a str>,
    negative: Vec<&'a str>,
}

/// Builds a knowledge graph, lexicon, tagger, rating corpus and stance
/// splits. A document names either an alias linked to its topic or an
/// unlinked distractor, plus at most one lexicon word. Gold is Pro for a
/// positive linked document, Con for a negative linked one and Neu
/// otherwise. Dev and test use unseen topics, unseen distractors and
/// lexicon words absent from training, so neither the lexicon nor the
/// graph alone determines the label.
pub fn generate_synthetic_suite(cfg: &SyntheticConfig, rng: &mut RngStream) -> Result<SyntheticSuite, EvalError> {
    cfg.validate()?;
    let lexicon = SentimentLexicon::from_pairs(
        SentimentLexicon::bundled()
            .iter()
            .filter(|(w, _)| w.chars().all(|c| c.is_ascii_alphabetic()))
            .collect::<Vec<_>>(),
    );
    let mut names = Names {
        used: lexicon
            .iter()
            .map(|(w, _)| w.to_string())
            .chain(FILLERS.iter().chain(&NEUTRAL_WORDS).map(|w| w.to_string()))
            .collect(),
    };

    let mut b = GraphBuilder::new();
    let mut pos = LexiconTagger::new();
    let hub = names.fresh(rng);
    let mut topics = Vec::new();
    for _ in 0..cfg.categories {
        let cat = names.fresh(rng);
        pos.insert(&cat, Pos::Noun);
        for _ in 0..cfg.topics_per_category {
            let name = names.fresh(rng);
            b.add_triple(&name, IS_A, &cat);
            pos.insert(&name, Pos::Noun);
            let aliases: Vec<String> = (0..cfg.aliases_per_topic).map(|_| names.fresh(rng)).collect();
            for a in &aliases {
                b.add_triple(a, RELATED_TO, &name);
                pos.insert(a, Pos::Noun);
            }
            topics.push(Topic { name, aliases });
        }
    }
    let mut distractor_pool = |n: usize, rng: &mut RngStream| -> Vec<String> {
        (0..n).map(|_| names.fresh(rng)).collect()
    };
    let train_distractors = distractor_pool(cfg.train_distractors, rng);
    let eval_distractors = distractor_pool(cfg.eval_distractors, rng);
    for d in train_distractors.iter().chain(&eval_distractors) {
        b.add_triple(d, RELATED_TO, &hub);
        pos.insert(d, Pos::Noun);
    }
    let graph = b.build();

    let mut pos_words: Vec<&str> = lexicon.iter().filter(|(_, p)| *p == Polarity::Positive).map(|(w, _)| w).collect();
    let mut neg_words: Vec<&str> = lexicon.iter().filter(|(_, p)| *p == Polarity::Negative).map(|(w, _)| w).collect();
    for w in pos_words.iter().chain(&neg_words) {
        pos.insert(w, Pos::Adj);
    }
    rng.shuffle(&mut pos_words);
    rng.shuffle(&mut neg_words);
    let cut = |v: &[&str]| ((v.len() as f64 * cfg.heldout_sentiment_fraction).round() as usize).clamp(1, v.len() - 1);
    let (pos_held, pos_seen) = pos_words.split_at(cut(&pos_words));
    let (neg_held, neg_seen) = neg_words.split_at(cut(&neg_words));
    let mut heldout_sentiment: Vec<String> = pos_held.iter().chain(neg_held).map(|w| w.to_string()).collect();
    heldout_sentiment.sort();

    let mut order: Vec<usize> = (0..topics.len()).collect();
    rng.shuffle(&mut order);
    let zero: Vec<usize> = order[..cfg.zero_shot_topics].to_vec();
    let few: Vec<usize> = order[cfg.zero_shot_topics..cfg.zero_shot_topics + cfg.few_shot_topics].to_vec();
    let seen: Vec<usize> = order[cfg.zero_shot_topics + cfg.few_shot_topics..].to_vec();

    let train_ctx = Ctx {
        topics: &topics,
        distractors: &train_distractors,
        positive: pos_seen.to_vec(),
        negative: neg_seen.to_vec(),
    };
    let eval_ctx = Ctx {
        topics: &topics,
        distractors: &eval_distractors,
        positive: pos_held.to_vec(),
        negative: neg_held.to_vec(),
    };

    let mut train = Vec::with_capacity(cfg.train_size);
    let few_rows = (cfg.few_shot_topics * cfg.few_shot_train_examples).min(cfg.train_size);
    for i in 0..cfg.train_size {
        let topic = if i < few_rows {
            few[i / cfg.few_shot_train_examples.max(1)]
        } else {
            seen[rng.below(seen.len())]
        };
        train.push(make_example(&train_ctx, cfg, topic, Split::Train, None, 0.0, i, rng));
    }
    rng.shuffle(&mut train);
    let eval_topics: Vec<(usize, Shot)> = zero
        .iter()
        .map(|&t| (t, Shot::Zero))
        .chain(few.iter().map(|&t| (t, Shot::Few)))
        .collect();
    let split = |split: Split, n: usize, sarcasm: f64, rng: &mut RngStream| -> Vec<StanceExample> {
        (0..n)
            .map(|i| {
                let (t, shot) = eval_topics[i % eval_topics.len()];
                make_example(&eval_ctx, cfg, t, split, Some(shot), sarcasm, i, rng)
            })
            .collect()
    };
    let dev = split(Split::Dev, cfg.dev_size, 0.0, rng);
    let test = split(Split::Test, cfg.test_size, cfg.sarcasm_rate, rng);

    let all_pos: Vec<&str> = pos_seen.iter().chain(pos_held).copied().collect();
    let all_neg: Vec<&str> = neg_seen.iter().chain(neg_held).copied().collect();
    let rating_corpus = (0..cfg.rating_corpus_size)
        .map(|_| {
            let noun = names.fresh(rng);
            let (word, rating) = match rng.below(5) {
                0 | 1 => (all_pos[rng.below(all_pos.len())], 4 + rng.below(2)),
                2 | 3 => (all_neg[rng.below(all_neg.len())], 1 + rng.below(2)),
                _ => (NEUTRAL_WORDS[rng.below(NEUTRAL_WORDS.len())], 3),
            };
            RatedText {
                text: render(&noun, word, rng),
                rating,
            }
        })
        .collect();

    Ok(SyntheticSuite {
        graph,
        lexicon,
        pos,
        rating_corpus,
        train,
        dev,
        test,
        heldout_sentiment,
    })
}

fn filler(rng: &mut RngStream) -> &'static str {
    FILLERS[rng.below(FILLERS.len())]
}

fn render(noun: &str, word: &str, rng: &mut RngStream) -> String {
    let (a, b, c) = (filler(rng), filler(rng), filler(rng));
    if rng.bernoulli(0.5) {
        format!("{a} {noun} {b} {word} {c}")
    } else {
        format!("{a} {word} {b} {noun} {c}")
    }
}

#[allow(clippy::too_many_arguments)]
fn make_example(
    ctx: &Ctx<'_>,
    cfg: &SyntheticConfig,
    topic: usize,
    split: Split,
    shot: Option<Shot>,
    sarcasm: f64,
    index: usize,
    rng: &mut RngStream,
) -> StanceExample {
    let t = &ctx.topics[topic];
    let linked = rng.bernoulli(cfg.link_prob);
    let noun = if linked {
        &t.aliases[rng.below(t.aliases.len())]
    } else {
        &ctx.distractors[rng.below(ctx.distractors.len())]
    };
    let (word, polarity) = if rng.bernoulli(cfg.no_sentiment_prob) {
        (NEUTRAL_WORDS[rng.below(NEUTRAL_WORDS.len())], None)
    } else if rng.bernoulli(0.5) {
        (ctx.positive[rng.below(ctx.positive.len())], Some(Polarity::Positive))
    } else {
        (ctx.negative[rng.below(ctx.negative.len())], Some(Polarity::Negative))
    };
    let mut gold = match (linked, polarity) {
        (true, Some(Polarity::Positive)) => StanceLabel::Pro,
        (true, Some(Polarity::Negative)) => StanceLabel::Con,
        _ => StanceLabel::Neu,
    };
    let mut phenomena = Phenomena {
        imp: linked,
        ..Default::default()
    };
    if gold != StanceLabel::Neu && rng.bernoulli(sarcasm) {
        gold = if gold == StanceLabel::Pro { StanceLabel::Con } else { StanceLabel::Pro };
        phenomena.sarc = true;
    }
    let split_name = match split {
        Split::Train => "train",
        Split::Dev => "dev",
        Split::Test => "test",
    };
    StanceExample {
        id: format!("{split_name}-{index:04}"),
        document: render(noun, word, rng),
        topic: t.name.clone(),
        gold,
        split,
        shot,
        phenomena,
    }
}

/// Best accuracy of any rule that sees only `features[i]`: the summed
/// majority count of every feature group over the total.
fn bayes_cap<K: Ord>(features: impl IntoIterator<Item = K>, golds: &[StanceLabel]) -> Option<f64> {
    let mut groups: BTreeMap<K, [usize; 3]> = BTreeMap::new();
    let mut n = 0;
    for (k, g) in features.into_iter().zip(golds) {
        groups.entry(k).or_default()[g.index()] += 1;
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let hits: usize = groups.values().map(|c| *c.iter().max().unwrap_or(&0)).sum();
    Some(hits as f64 / n as f64)
}

/// Accuracy ceiling of a rule that only sees the lexicon polarity of
/// each document.
pub fn lexicon_only_rule(examples: &[StanceExample], lexicon: &SentimentLexicon) -> Option<f64> {
    let golds: Vec<StanceLabel> = examples.iter().map(|e| e.gold).collect();
    bayes_cap(
        examples.iter().map(|e| match doc_sentiment(&e.document, lexicon) {
            DocSentiment::Pos => 0u8,
            DocSentiment::Neg => 1,
            DocSentiment::Neu => 2,
        }),
        &golds,
    )
}

/// Whether some document word shares an edge with the topic concept.
pub fn mentions_linked_concept(graph: &KnowledgeGraph, document: &str, topic: &str) -> bool {
    let Some(t) = graph.concept_id(topic) else {
        return false;
    };
    let neighbors: BTreeSet<_> = graph.undirected_neighbors(t).collect();
    words(document)
        .iter()
        .filter_map(|w| graph.concept_id(w))
        .any(|c| neighbors.contains(&c))
}

/// Accuracy ceiling of a rule that only sees whether the document is
/// linked to its topic in the graph.
pub fn kg_only_rule(examples: &[StanceExample], graph: &KnowledgeGraph) -> Option<f64> {
    let golds: Vec<StanceLabel> = examples.iter().map(|e| e.gold).collect();
    bayes_cap(
        examples.iter().map(|e| mentions_linked_concept(graph, &e.document, &e.topic)),
        &golds,
    )
}
