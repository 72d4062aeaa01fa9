use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use kestance::evalkit::{
    coverage_ablation, curve_tsv, generate_synthetic_suite, load_dataset, sentiment_stance_matrix, DocSentiment, EvalError,
    MetricReport, Split, StanceExample,
};
use kestance::kgae::KgaeError;
use kestance::kgraph::{
    extract_seed_terms, extract_subgraph, ingest_path, write_triples_tsv, GraphError, KnowledgeGraph, LexiconTagger,
};
use kestance::numerics::{NumericsError, RngStream};
use kestance::pipeline::{kg_stage, sentiment_stage, PipelineError, PipelineInputs, STANCE_STREAM};
use kestance::stance::{predictions_tsv, train_stance, KnowledgeSource, StanceError, StanceLabel};
use kestance::textenc::{read_rating_corpus, SentimentLexicon, TextError};
use kestance::{ConceptFeatures64, SentimentEncoder64, StanceModel64};

use crate::config::{ConfigError, RunConfig};
use crate::log::MetricsLog;

pub enum CliError {
    Config(ConfigError),
    /// Message already prefixed with the failing module.
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => e.fmt(f),
            CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

macro_rules! tagged {
    ($($ty:ty => $tag:literal),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Runtime(format!(concat!($tag, ": {}"), e))
            }
        })*
    };
}

tagged! {
    GraphError => "kgraph",
    KgaeError => "kgae",
    TextError => "textenc",
    StanceError => "stance",
    EvalError => "evalkit",
    NumericsError => "numerics",
    std::io::Error => "cli",
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// State shared by every command.
pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub rng: RngStream,
    pub log: MetricsLog,
}

impl Ctx {
    pub fn new(cfg: RunConfig) -> Self {
        Self {
            out: cfg.out_dir(),
            rng: RngStream::new(cfg.seed),
            log: MetricsLog::default(),
            cfg,
        }
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn dataset(&self, key: &str, split: Split) -> Result<Vec<StanceExample>, CliError> {
        let path = self.cfg.input(key)?;
        Ok(load_dataset(path, split, &self.cfg.dataset)?)
    }

    fn lexicon(&self) -> Result<SentimentLexicon, CliError> {
        Ok(match self.cfg.optional_input("lexicon")? {
            Some(p) => SentimentLexicon::read(p)?,
            None => SentimentLexicon::bundled(),
        })
    }

    fn graph(&mut self) -> Result<KnowledgeGraph, CliError> {
        let (g, rep) = ingest_path(self.cfg.input("kg")?, &self.cfg.ingest)?;
        self.log.record("ingest", "rows_read", rep.rows_read as f64);
        self.log.record("ingest", "rows_kept", rep.rows_kept as f64);
        self.log.record("ingest", "rows_dropped", rep.rows_dropped() as f64);
        Ok(g)
    }
}

/// The graph, features and tagger behind the KG branch.
struct KgInputs {
    graph: KnowledgeGraph,
    features: ConceptFeatures64,
    pos: LexiconTagger,
}

impl KgInputs {
    fn load(ctx: &mut Ctx) -> Result<Self, CliError> {
        let features_dir = ctx.cfg.input("features")?.to_path_buf();
        let pos = LexiconTagger::from_path(ctx.cfg.input("pos")?)?;
        let graph = ctx.graph()?;
        let features = ConceptFeatures64::load(&features_dir)?;
        Ok(Self { graph, features, pos })
    }

    fn source(&self, ctx: &Ctx) -> Result<KnowledgeSource<'_, f64>, CliError> {
        let mut s = KnowledgeSource::new(&self.graph, &self.features, &self.pos)?;
        s.mode = ctx.cfg.extraction;
        Ok(s)
    }
}

/// Paths a command reads, checked before any work starts.
pub fn required_inputs(command: &str, cfg: &RunConfig) -> Result<(), ConfigError> {
    let v = cfg.stance.variant;
    let (mut need, optional): (Vec<&str>, Vec<&str>) = match command {
        "extract-subgraph" => (vec!["kg", "pos", "train"], vec!["dev", "test"]),
        "pretrain-kg" => (vec!["kg"], vec![]),
        "pretrain-sentiment" => (vec!["ratings"], vec!["lexicon"]),
        "train-stance" => (vec!["train", "dev"], vec![]),
        "evaluate" => (vec!["model", "test"], vec![]),
        "analyze-sentiment-stance" => (vec!["predictions", "test"], vec!["lexicon"]),
        "ablate-kg-coverage" => (vec!["kg", "pos", "train", "dev", "test"], vec!["lexicon"]),
        _ => (vec![], vec![]),
    };
    if command == "train-stance" {
        if v.use_kg {
            need.extend(["features", "kg", "pos"]);
        }
        if v.use_sentiment {
            need.push("sentiment");
        }
    }
    if command == "ablate-kg-coverage" {
        if !v.use_kg {
            return Err(ConfigError::new("stance.variant", "coverage ablation needs a variant with the KG branch"));
        }
        if v.use_sentiment {
            // A pretrained encoder is reused when given, else trained here.
            if cfg.paths.sentiment.is_some() {
                need.push("sentiment");
            } else {
                need.push("ratings");
            }
        }
    }
    for key in need {
        cfg.input(key)?;
    }
    for key in optional {
        cfg.optional_input(key)?;
    }
    Ok(())
}

pub fn run(command: &str, ctx: &mut Ctx) -> Result<String, CliError> {
    std::fs::create_dir_all(&ctx.out)?;
    match command {
        "extract-subgraph" => extract(ctx),
        "pretrain-kg" => pretrain_kg(ctx),
        "pretrain-sentiment" => pretrain_sentiment(ctx),
        "train-stance" => train(ctx),
        "evaluate" => evaluate(ctx),
        "analyze-sentiment-stance" => analyze(ctx),
        "ablate-kg-coverage" => ablate(ctx),
        "gen-synthetic" => gen_synthetic(ctx),
        other => unreachable!("unrouted command {other}"),
    }
}

fn extract(ctx: &mut Ctx) -> Result<String, CliError> {
    let pos = LexiconTagger::from_path(ctx.cfg.input("pos")?)?;
    let mut texts = Vec::new();
    for (key, split) in [("train", Split::Train), ("dev", Split::Dev), ("test", Split::Test)] {
        if key != "train" && ctx.cfg.optional_input(key)?.is_none() {
            continue;
        }
        for e in ctx.dataset(key, split)? {
            texts.push(e.document);
            texts.push(e.topic);
        }
    }
    let graph = ctx.graph()?;
    let seeds = extract_seed_terms(&texts, &pos);
    let sub = extract_subgraph(&graph, &seeds, ctx.cfg.extraction);
    let path = ctx.artifact("subgraph.tsv");
    write_triples_tsv(&sub.graph, std::io::BufWriter::new(std::fs::File::create(&path)?))?;
    std::fs::write(ctx.artifact("seeds.txt"), seeds.to_lines())?;
    let log = &mut ctx.log;
    log.record("extract", "seeds", seeds.len() as f64);
    log.record("extract", "unresolved_seeds", sub.unresolved_seeds as f64);
    log.record("extract", "concepts", sub.graph.num_concepts() as f64);
    log.record("extract", "triples", sub.graph.num_triples() as f64);
    Ok(format!(
        "extract-subgraph: {} seeds ({} unresolved) -> {} concepts, {} triples in {}",
        seeds.len(),
        sub.unresolved_seeds,
        sub.graph.num_concepts(),
        sub.graph.num_triples(),
        path.display()
    ))
}

fn pretrain_kg(ctx: &mut Ctx) -> Result<String, CliError> {
    let graph = ctx.graph()?;
    let (features, report) = kg_stage::<f64>(&graph, &ctx.cfg.pipeline(), &ctx.rng)?;
    let dir = ctx.artifact("features");
    features.save(&dir)?;
    std::fs::write(ctx.artifact("kgae.jsonl"), report.to_jsonl())?;
    ctx.log.record("kgae", "initial_auc", report.initial_auc);
    for e in &report.epochs {
        ctx.log.record("kgae", "loss", e.loss);
        ctx.log.record("kgae", "auc", e.auc);
    }
    let auc = report.final_auc().map_or("n/a".into(), |a| format!("{a:.3}"));
    Ok(format!(
        "pretrain-kg: {} concepts, {} epochs, held-out AUC {auc} -> {}",
        graph.num_concepts(),
        report.epochs.len(),
        dir.display()
    ))
}

fn pretrain_sentiment(ctx: &mut Ctx) -> Result<String, CliError> {
    let ratings = read_rating_corpus(ctx.cfg.input("ratings")?)?;
    let lexicon = ctx.lexicon()?;
    let empty = KnowledgeGraph::empty();
    let pos = LexiconTagger::new();
    let inputs = PipelineInputs {
        graph: &empty,
        pos: &pos,
        lexicon: &lexicon,
        rating_corpus: &ratings,
        train: &[],
        dev: &[],
        test: &[],
    };
    let (enc, report) = sentiment_stage::<f64>(&inputs, &ctx.cfg.pipeline(), &ctx.rng)?;
    let dir = ctx.artifact("sentiment");
    enc.save(&dir)?;
    for e in &report.epochs {
        ctx.log.record("sentiment", "loss", e.loss);
        ctx.log.record("sentiment", "mlm", e.mlm);
        ctx.log.record("sentiment", "polarity", e.polarity);
        ctx.log.record("sentiment", "rating", e.rating);
    }
    let last = report.epochs.last().map_or(f64::NAN, |e| e.loss);
    Ok(format!(
        "pretrain-sentiment: {} texts, vocabulary {}, final loss {last:.4} -> {}",
        ratings.len(),
        enc.vocab.len(),
        dir.display()
    ))
}

fn train(ctx: &mut Ctx) -> Result<String, CliError> {
    let v = ctx.cfg.stance.variant;
    let train = ctx.dataset("train", Split::Train)?;
    let dev = ctx.dataset("dev", Split::Dev)?;
    let kg = if v.use_kg { Some(KgInputs::load(ctx)?) } else { None };
    let sentiment = if v.use_sentiment {
        Some(SentimentEncoder64::load(ctx.cfg.input("sentiment")?)?)
    } else {
        None
    };
    let source = kg.as_ref().map(|k| k.source(ctx)).transpose()?;
    let (model, report) = train_stance(
        &train,
        &dev,
        source.as_ref(),
        sentiment.as_ref(),
        &ctx.cfg.stance,
        &mut ctx.rng.derive(STANCE_STREAM),
    )?;
    let dir = ctx.artifact("model");
    model.save(&dir)?;
    for e in &report.epochs {
        ctx.log.record("stance", "loss", e.loss);
        ctx.log.record("stance", "cls_loss", e.cls_loss);
        ctx.log.record("stance", "recon_loss", e.recon_loss);
        ctx.log.record("stance", "dev_macro_f1", e.dev_macro_f1);
    }
    ctx.log.record("stance", "best_epoch", report.best_epoch as f64);
    ctx.log.record("stance", "best_dev_macro_f1", report.best_dev_macro_f1);
    Ok(format!(
        "train-stance: {} best dev macro-F1 {:.4} at epoch {} -> {}",
        v.name(),
        report.best_dev_macro_f1,
        report.best_epoch,
        dir.display()
    ))
}

fn evaluate(ctx: &mut Ctx) -> Result<String, CliError> {
    let model = StanceModel64::load(ctx.cfg.input("model")?)?;
    let test = ctx.dataset("test", Split::Test)?;
    let kg = if model.variant().use_kg {
        // The archived variant decides; the config is checked here rather
        // than up front because it is only known after loading.
        for key in ["features", "kg", "pos"] {
            ctx.cfg.input(key)?;
        }
        Some(KgInputs::load(ctx)?)
    } else {
        None
    };
    let source = kg.as_ref().map(|k| k.source(ctx)).transpose()?;
    let preds = model.predict(&test, source.as_ref())?;
    let labels: Vec<StanceLabel> = preds.iter().map(|p| p.predicted).collect();
    let report = MetricReport::build(&labels, &test)?;
    let pred_path = ctx.artifact("predictions.tsv");
    std::fs::write(&pred_path, predictions_tsv(&preds))?;
    let json = serde_json::json!({
        "overall": report.overall_json(),
        "challenge": report.challenge_json(),
    });
    std::fs::write(ctx.artifact("metrics.json"), serde_json::to_string_pretty(&json).expect("json") + "\n")?;
    let f = |s: &Option<kestance::evalkit::F1Summary>| s.as_ref().map(|s| s.macro_f1);
    ctx.log.record("eval", "f1_all", report.all.macro_f1);
    ctx.log.record("eval", "f1_zero_shot", f(&report.zero_shot));
    ctx.log.record("eval", "f1_few_shot", f(&report.few_shot));
    for (name, acc) in &report.phenomena {
        ctx.log.record("eval", &format!("acc_{name}"), *acc);
    }
    let fmt = |x: Option<f64>| x.map_or("n/a".into(), |x| format!("{x:.4}"));
    Ok(format!(
        "evaluate: {} examples, macro-F1 all {:.4} zero-shot {} few-shot {} -> {}",
        test.len(),
        report.all.macro_f1,
        fmt(f(&report.zero_shot)),
        fmt(f(&report.few_shot)),
        pred_path.display()
    ))
}

/// `example_id -> predicted` from a predictions file.
fn read_predictions(path: &Path) -> Result<BTreeMap<String, StanceLabel>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |r: &str| CliError::Runtime(format!("evalkit: {}:{}: {r}", path.display(), i + 1));
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(bad("expected 5 tab-separated columns"));
        }
        let label: StanceLabel = fields[4].parse().map_err(|e: String| bad(&e))?;
        out.insert(fields[0].to_string(), label);
    }
    Ok(out)
}

fn analyze(ctx: &mut Ctx) -> Result<String, CliError> {
    let preds = read_predictions(ctx.cfg.input("predictions")?)?;
    let test = ctx.dataset("test", Split::Test)?;
    let lexicon = ctx.lexicon()?;
    let mut labels = Vec::with_capacity(test.len());
    for e in &test {
        let p = preds
            .get(&e.id)
            .ok_or_else(|| CliError::Runtime(format!("evalkit: no prediction for example {:?}", e.id)))?;
        labels.push(*p);
    }
    let golds: Vec<StanceLabel> = test.iter().map(|e| e.gold).collect();
    let docs: Vec<&str> = test.iter().map(|e| e.document.as_str()).collect();
    let m = sentiment_stance_matrix(&labels, &golds, &docs, &lexicon)?;
    std::fs::write(ctx.artifact("sentiment_stance.tsv"), m.to_tsv())?;
    std::fs::write(ctx.artifact("sentiment_stance.json"), serde_json::to_string_pretty(&m.to_json()).expect("json") + "\n")?;
    for s in DocSentiment::ALL {
        for l in StanceLabel::ALL {
            ctx.log.record("analysis", &format!("acc_{}_{}", s.as_str(), l.short()), m.cell(s, l));
        }
    }
    let cell = |s, l| m.cell(s, l).map_or("n/a".into(), |x| format!("{x:.3}"));
    Ok(format!(
        "analyze-sentiment-stance: {} examples; concordant (Pos,Pro) {} (Neg,Con) {}, discordant (Pos,Con) {} (Neg,Pro) {}",
        test.len(),
        cell(DocSentiment::Pos, StanceLabel::Pro),
        cell(DocSentiment::Neg, StanceLabel::Con),
        cell(DocSentiment::Pos, StanceLabel::Con),
        cell(DocSentiment::Neg, StanceLabel::Pro)
    ))
}

fn ablate(ctx: &mut Ctx) -> Result<String, CliError> {
    let graph = ctx.graph()?;
    let pos = LexiconTagger::from_path(ctx.cfg.input("pos")?)?;
    let lexicon = ctx.lexicon()?;
    let train = ctx.dataset("train", Split::Train)?;
    let dev = ctx.dataset("dev", Split::Dev)?;
    let test = ctx.dataset("test", Split::Test)?;
    let ratings = match ctx.cfg.optional_input("ratings")? {
        Some(p) => read_rating_corpus(p)?,
        None => Vec::new(),
    };
    let inputs = PipelineInputs {
        graph: &graph,
        pos: &pos,
        lexicon: &lexicon,
        rating_corpus: &ratings,
        train: &train,
        dev: &dev,
        test: &test,
    };
    let pcfg = ctx.cfg.pipeline();
    let sentiment = match (pcfg.stance.variant.use_sentiment, ctx.cfg.optional_input("sentiment")?) {
        (false, _) => None,
        (true, Some(dir)) => Some(SentimentEncoder64::load(dir)?),
        (true, None) => Some(sentiment_stage::<f64>(&inputs, &pcfg, &ctx.rng)?.0),
    };
    let points = coverage_ablation(
        &inputs,
        sentiment.as_ref(),
        &ctx.cfg.coverage.percents,
        ctx.cfg.coverage.mode,
        &pcfg,
        &ctx.rng,
    )?;
    let path = ctx.artifact("coverage.tsv");
    std::fs::write(&path, curve_tsv(&points))?;
    for p in &points {
        let phase = format!("coverage_{}", p.percent);
        ctx.log.record(&phase, "concepts", p.concepts as f64);
        ctx.log.record(&phase, "triples", p.triples as f64);
        ctx.log.record(&phase, "f1_zero_shot", p.macro_f1);
    }
    let curve: Vec<String> = points
        .iter()
        .map(|p| format!("{}%={}", p.percent, p.macro_f1.map_or("NA".into(), |f| format!("{f:.3}"))))
        .collect();
    Ok(format!("ablate-kg-coverage: zero-shot macro-F1 {} -> {}", curve.join(" "), path.display()))
}

fn gen_synthetic(ctx: &mut Ctx) -> Result<String, CliError> {
    let mut rng = ctx.rng.clone();
    let suite = generate_synthetic_suite(&ctx.cfg.synthetic, &mut rng)?;
    suite.write(&ctx.out)?;
    let log = &mut ctx.log;
    log.record("synthetic", "concepts", suite.graph.num_concepts() as f64);
    log.record("synthetic", "triples", suite.graph.num_triples() as f64);
    log.record("synthetic", "train", suite.train.len() as f64);
    log.record("synthetic", "dev", suite.dev.len() as f64);
    log.record("synthetic", "test", suite.test.len() as f64);
    log.record("synthetic", "ratings", suite.rating_corpus.len() as f64);
    Ok(format!(
        "gen-synthetic: {} triples, {}/{}/{} train/dev/test examples, {} rated texts -> {}",
        suite.graph.num_triples(),
        suite.train.len(),
        suite.dev.len(),
        suite.test.len(),
        suite.rating_corpus.len(),
        ctx.out.display()
    ))
}
